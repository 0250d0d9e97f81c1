"""Study configuration: every model and pipeline parameter in one place.

The convention hash covers every parameter that changes the *meaning* of a
statistic (M, tau, window, normalization area, Ripley range, pooling, vine
conventions...).  Calibrations and tests refuse to mix configurations whose
convention hashes differ, since absolute statistic values are convention-
dependent and only internally-consistent comparisons are valid.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace

from .errors import ConfigurationError
from .pointproc import ProcessSpec, Window3D
from .tessellate import SliceLayout, Window2D

__all__ = ["StudyConfig"]

_CLUSTER_SIZE_RULES = ("disks", "points")
_HOLE_SIZE_AT = ("birth", "death")
_VINE_LENGTH = ("edges", "slices")
_POOLING = ("pairs", "equal")
_SIDED = ("two", "one")


@dataclass(frozen=True)
class StudyConfig:
    window_side: float = 170.0
    window_height: float = 85.0
    process: ProcessSpec = field(default_factory=ProcessSpec)
    slice_count: int = 9
    slice_spacing: float = 4.0
    slice_heights: tuple[float, ...] | None = None
    eta0: float = 0.0
    M: float = 15.0
    tau: float = 15.0
    r_rip: float = 4.0
    r_grid: int = 512
    area_convention: float | None = None  # None: area of the 2D slice window
    recon_threshold: float | None = None  # None: 0.3 * mean within-slice NN distance
    alpha: float = 0.05
    replications: int = 500
    seed: int = 0
    minus_sampling: bool = False
    cluster_size_rule: str = "disks"  # component size: diam(points) + 2r, or diam(points)
    hole_size_at: str = "birth"
    vine_length_convention: str = "edges"
    pooling: str = "pairs"
    sided: str = "two"

    def __post_init__(self):
        if isinstance(self.process, dict):
            object.__setattr__(self, "process", ProcessSpec.from_dict(self.process))
        if self.slice_heights is not None:
            object.__setattr__(self, "slice_heights", tuple(float(h) for h in self.slice_heights))
        if self.M <= 0:
            raise ConfigurationError(f"M must be positive, got {self.M}")
        if self.tau <= 0:
            raise ConfigurationError(f"tau must be positive, got {self.tau}")
        if not (0 < self.alpha <= 1):
            raise ConfigurationError(f"alpha must be in (0, 1], got {self.alpha}")
        if self.r_rip <= 0 or self.r_rip >= self.window_side / 2:
            raise ConfigurationError("r_rip must be in (0, window_side / 2)")
        if self.r_grid < 2:
            raise ConfigurationError("r_grid must be >= 2")
        if self.eta0 < 0:
            raise ConfigurationError(f"eta0 must be >= 0, got {self.eta0}")
        if self.cluster_size_rule not in _CLUSTER_SIZE_RULES:
            raise ConfigurationError(f"cluster_size_rule must be one of {_CLUSTER_SIZE_RULES}")
        if self.hole_size_at not in _HOLE_SIZE_AT:
            raise ConfigurationError(f"hole_size_at must be one of {_HOLE_SIZE_AT}")
        if self.vine_length_convention not in _VINE_LENGTH:
            raise ConfigurationError(f"vine_length_convention must be one of {_VINE_LENGTH}")
        if self.pooling not in _POOLING:
            raise ConfigurationError(f"pooling must be one of {_POOLING}")
        if self.sided not in _SIDED:
            raise ConfigurationError(f"sided must be one of {_SIDED}")
        # instantiating these validates window/layout invariants early
        self.window3d()
        self.layout().slice_heights(self.window_height)

    # -- derived objects --------------------------------------------------

    def window3d(self) -> Window3D:
        return Window3D(self.window_side, self.window_height)

    def window2d(self) -> Window2D:
        return Window2D.from_window3d(self.window3d())

    def layout(self) -> SliceLayout:
        if self.slice_heights is not None:
            return SliceLayout(heights=self.slice_heights)
        return SliceLayout(self.slice_count, self.slice_spacing)

    @property
    def area(self) -> float:
        """Normalization area |W| for the persistence statistics."""
        if self.area_convention is not None:
            return self.area_convention
        return self.window_side**2

    def with_process(self, process: ProcessSpec) -> "StudyConfig":
        return replace(self, process=process)

    # -- serialization and hashing ----------------------------------------

    def to_dict(self) -> dict:
        d = {
            k: getattr(self, k)
            for k in self.__dataclass_fields__  # noqa: SLF001 - dataclass introspection
        }
        d["process"] = self.process.to_dict()
        if d["slice_heights"] is not None:
            d["slice_heights"] = list(d["slice_heights"])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "StudyConfig":
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "StudyConfig":
        return cls.from_dict(json.loads(text))

    def convention_hash(self) -> str:
        """Hash over every convention-sensitive parameter (not process/seed/N)."""
        keys = (
            "window_side",
            "window_height",
            "slice_count",
            "slice_spacing",
            "slice_heights",
            "eta0",
            "M",
            "tau",
            "r_rip",
            "r_grid",
            "area_convention",
            "recon_threshold",
            "minus_sampling",
            "cluster_size_rule",
            "hole_size_at",
            "vine_length_convention",
            "pooling",
            "sided",
        )
        d = self.to_dict()
        payload = json.dumps({k: d[k] for k in keys}, sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    def config_hash(self) -> str:
        """Hash over the full configuration, for output provenance."""
        payload = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]
