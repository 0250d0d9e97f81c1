"""Vines: per-slice persistence features keyed by trajectory identity.

Degree-0 features are in one-to-one correspondence with generator
trajectories, so their vines are grouped by point label.  Degree-1 features
are keyed by the unordered label pair of their birth edge; tracking through
changes of the birth simplex (cycle registration) is out of scope.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .errors import DataIntegrityError, DomainError
from .mph import PersistenceDiagram
from .tessellate import SliceCloud, SliceStack

__all__ = [
    "Vine",
    "Vineyard",
    "build_vines",
    "reconstruct_labels",
    "default_reconstruction_threshold",
    "vine_length_stats",
    "reconstruction_links",
    "reconstruction_error",
    "strip_labels",
]


@dataclass
class Vine:
    dim: int
    key: tuple[int, ...]
    entries: dict[int, tuple[float, float]]  # slice index -> (birth, death)

    @property
    def length_slices(self) -> int:
        return len(self.entries)


@dataclass
class Vineyard:
    vines: list[Vine]
    H: int
    provenance: str = "ground-truth"  # or "reconstructed"

    def select(self, q: int) -> list[Vine]:
        return [v for v in self.vines if v.dim == q]

    def to_json(self) -> str:
        return json.dumps(
            {
                "H": self.H,
                "provenance": self.provenance,
                "vines": [
                    {
                        "dim": v.dim,
                        "key": list(v.key),
                        "entries": [
                            {"slice": k, "birth": b, "death": d}
                            for k, (b, d) in sorted(v.entries.items())
                        ],
                    }
                    for v in self.vines
                ],
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "Vineyard":
        d = json.loads(text)
        vines = [
            Vine(
                v["dim"],
                tuple(v["key"]),
                {e["slice"]: (e["birth"], e["death"]) for e in v["entries"]},
            )
            for v in d["vines"]
        ]
        return cls(vines, d["H"], d["provenance"])


def build_vines(
    stack: SliceStack, diagrams: list[PersistenceDiagram], provenance: str = "ground-truth"
) -> Vineyard:
    """Group per-slice diagram records into vines by feature key.

    ``diagrams[k]`` must carry keys consistent with ``stack.slices[k]``:
    labels for q = 0 records, label pairs for q = 1.
    """
    if len(diagrams) != len(stack.slices):
        raise DomainError("one diagram per slice required")
    if not stack.labeled:
        raise DomainError("stack carries no labels")
    vines: dict[tuple, Vine] = {}
    for k, (s, dg) in enumerate(zip(stack.slices, diagrams)):
        labelset = set(int(x) for x in s.labels)
        for q, b, d, ka, kb in zip(dg.dims, dg.births, dg.deaths, dg.key_a, dg.key_b):
            key = (int(ka),) if q == 0 else (int(ka), int(kb))
            for lab in key:
                if lab not in labelset:
                    raise DataIntegrityError(
                        f"diagram key {key} in slice {k} does not match stack labels"
                    )
            vine = vines.setdefault((int(q), key), Vine(int(q), key, {}))
            vine.entries[k] = (float(b), float(d))
    return Vineyard(list(vines.values()), len(stack.slices), provenance)


def default_reconstruction_threshold(stack: SliceStack, factor: float = 0.3) -> float:
    """``factor`` times the mean within-slice nearest-neighbor distance.

    A scale-free default: matching radii grow with the typical point
    spacing of the data rather than being an absolute length.
    """
    nn = []
    for s in stack.slices:
        if len(s) >= 2:
            d = cdist(s.points, s.points)
            np.fill_diagonal(d, np.inf)
            nn.extend(d.min(axis=1))
    if not nn:
        raise DomainError("stack has no slice with >= 2 points")
    return factor * float(np.mean(nn))


def reconstruct_labels(stack: SliceStack, threshold: float) -> SliceStack:
    """Greedy slice-to-slice label propagation for unlabeled stacks.

    A point in slice k+1 inherits the label of a point in slice k iff the
    two are mutual nearest neighbors across the slices and their distance
    does not exceed ``threshold``; unmatched points get fresh labels.
    """
    if threshold <= 0:
        raise DomainError(f"threshold must be positive, got {threshold}")
    next_label = 0
    out: list[SliceCloud] = []
    prev_labels: np.ndarray | None = None
    for s in stack.slices:
        labels = np.empty(len(s), dtype=int)
        matched = np.zeros(len(s), dtype=bool)
        if prev_labels is not None and len(prev_labels) and len(s):
            prev = out[-1]
            d = cdist(prev.points, s.points)
            fwd = d.argmin(axis=1)  # prev -> cur
            bwd = d.argmin(axis=0)  # cur -> prev
            for i, j in enumerate(fwd):
                if bwd[j] == i and d[i, j] <= threshold:
                    labels[j] = prev_labels[i]
                    matched[j] = True
        for j in range(len(s)):
            if not matched[j]:
                labels[j] = next_label
                next_label += 1
        out.append(SliceCloud(s.height, s.points.copy(), labels=labels, areas=s.areas))
        prev_labels = labels
    return SliceStack(stack.window2d, out)


def vine_length_stats(v: Vineyard, q: int, convention: str = "edges") -> tuple[float, float]:
    """Mean and standard deviation of vine lengths for dimension ``q``.

    With the default ``edges`` convention a vine visible in m slices has
    length m - 1, so single-slice vines count as 0; ``slices`` counts m.
    """
    vines = v.select(q)
    if not vines:
        return (float("nan"), float("nan"))
    lengths = np.array([vn.length_slices for vn in vines], dtype=float)
    if convention == "edges":
        lengths -= 1.0
    sd = float(lengths.std(ddof=1)) if len(lengths) >= 2 else 0.0
    return float(lengths.mean()), sd


def _links(stack: SliceStack) -> set[tuple[int, int, int]]:
    """Adjacent-slice links (slice k, row in k, row in k+1) sharing a label."""
    links = set()
    for k in range(len(stack.slices) - 1):
        a, b = stack.slices[k], stack.slices[k + 1]
        pos = {int(lab): i for i, lab in enumerate(a.labels)}
        for j, lab in enumerate(b.labels):
            i = pos.get(int(lab))
            if i is not None:
                links.add((k, i, j))
    return links


def reconstruction_links(truth: SliceStack, estimate: SliceStack) -> tuple[int, int, int]:
    """(recovered, truth links, estimated links) for two labelings of one geometry."""
    if len(truth.slices) != len(estimate.slices):
        raise DomainError("stacks have different slice counts")
    for a, b in zip(truth.slices, estimate.slices):
        if len(a) != len(b):
            raise DomainError("stacks have different per-slice point counts")
    lt, le = _links(truth), _links(estimate)
    return len(lt & le), len(lt), len(le)


def reconstruction_error(truth: SliceStack, estimate: SliceStack) -> dict:
    """1 - recall of ground-truth adjacent-slice links, with precision alongside."""
    hit, nt, ne = reconstruction_links(truth, estimate)
    recall = hit / nt if nt else 1.0
    precision = hit / ne if ne else 1.0
    return {"error": 1.0 - recall, "recall": recall, "precision": precision}


def strip_labels(stack: SliceStack) -> SliceStack:
    """Copy of the stack without labels (for reconstruction experiments)."""
    return SliceStack(
        stack.window2d,
        [SliceCloud(s.height, s.points.copy(), labels=None, areas=s.areas) for s in stack.slices],
    )
