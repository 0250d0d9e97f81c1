"""Monte-Carlo calibration and z-score goodness-of-fit tests.

One replication = sample generators, slice the Voronoi tessellation,
compute per-slice M-bounded diagrams, assemble vines, and evaluate every
statistic (including the variants based on reconstructed labels).  All
replications derive their RNG stream from ``(root seed, replication
index)``, so runs are reproducible and order-independent under any degree
of parallelism.
"""

from __future__ import annotations

import json
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as spstats

from .config import StudyConfig
from .errors import DataIntegrityError, DomainError
from .mph import mbounded_diagram
from .pointproc import ProcessSpec, sample_process
from .stats import t_m, t_rip, t_tp
from .tessellate import perturb_centroids, slice_voronoi
from .vineyard import (
    build_vines,
    default_reconstruction_threshold,
    reconstruct_labels,
    reconstruction_error,
    strip_labels,
    vine_length_stats,
)

__all__ = [
    "NullCalibration",
    "TestReport",
    "replicate",
    "run_replications",
    "observed_statistics",
    "calibrate_null",
    "z_test",
    "power_experiment",
    "single_slice_experiment",
    "normality_diagnostics",
    "sample_diagnostics",
    "MULTI_SLICE_STATS",
    "SINGLE_SLICE_STATS",
    "canonical_alternatives",
    "rejection_rates",
]

MULTI_SLICE_STATS = ("t_tp0", "t_tp1", "t_m0", "t_m1", "t_rip", "t_m0_rec", "t_m1_rec")
SINGLE_SLICE_STATS = ("t_tp0", "t_tp1", "t_rip")


def canonical_alternatives(intensity: float) -> dict[str, ProcessSpec]:
    """The two hard-core and three cluster alternatives used throughout,
    count-matched to the null intensity."""
    cl = dict(kind="matern_cluster", intensity=intensity, R=42.5, match_expected_count=True)
    return {
        "hc1": ProcessSpec(kind="matern_hardcore", intensity=intensity, R=5.25),
        "hc2": ProcessSpec(kind="matern_hardcore", intensity=intensity, R=5.95),
        "cl1": ProcessSpec(n_cl=10, lambda_cl=10, **cl),
        "cl2": ProcessSpec(n_cl=5, lambda_cl=20, **cl),
        "cl3": ProcessSpec(n_cl=4, lambda_cl=25, **cl),
    }


def replicate(cfg: StudyConfig, index: int, seed=None) -> dict:
    """Run one full pipeline replication; returns every per-replication metric."""
    root = cfg.seed if seed is None else seed
    ss = np.random.SeedSequence(root, spawn_key=(index,))
    sample_rng, noise_rng = [np.random.default_rng(s) for s in ss.spawn(2)]
    points = sample_process(cfg.process, cfg.window3d(), sample_rng)
    if len(points) == 0:
        raise DomainError(f"replication {index}: empty generator sample")
    stack = slice_voronoi(points, cfg.layout(), minus_sampling=cfg.minus_sampling)
    if cfg.eta0 > 0:
        stack = perturb_centroids(stack, cfg.eta0, noise_rng)

    raw = [
        mbounded_diagram(
            s.points,
            cfg.M,
            cfg.tau,
            cluster_size_rule=cfg.cluster_size_rule,
            hole_size_at=cfg.hole_size_at,
        )
        for s in stack.slices
    ]
    diagrams = [d.relabel(s.labels) for d, s in zip(raw, stack.slices)]

    out = {
        "n_points": float(sum(len(s) for s in stack.slices)),
        "t_tp0": t_tp(diagrams, 0, cfg.area).value,
        "t_tp1": t_tp(diagrams, 1, cfg.area).value,
        "t_rip": t_rip(
            stack, cfg.r_rip, grid=cfg.r_grid, pooling=cfg.pooling
        ).value,
    }
    if len(stack.slices) > 1:
        vines = build_vines(stack, diagrams)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            out["t_m0"] = t_m(vines, 0, cfg.area).value
            out["t_m1"] = t_m(vines, 1, cfg.area).value
        out["vine_len0"], _ = vine_length_stats(vines, 0, cfg.vine_length_convention)
        out["vine_len1"], _ = vine_length_stats(vines, 1, cfg.vine_length_convention)

        threshold = cfg.recon_threshold
        if threshold is None:
            threshold = default_reconstruction_threshold(stack)
        rec_stack = reconstruct_labels(strip_labels(stack), threshold)
        rec_diagrams = [d.relabel(s.labels) for d, s in zip(raw, rec_stack.slices)]
        rec_vines = build_vines(rec_stack, rec_diagrams, provenance="reconstructed")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            out["t_m0_rec"] = t_m(rec_vines, 0, cfg.area).value
            out["t_m1_rec"] = t_m(rec_vines, 1, cfg.area).value
        err = reconstruction_error(stack, rec_stack)
        out["rec_error"] = err["error"]
        out["rec_precision"] = err["precision"]
    return out


def _worker(args) -> tuple[int, dict]:
    cfg_dict, seed, index = args
    cfg = StudyConfig.from_dict(cfg_dict)
    return index, replicate(cfg, index, seed=seed)


def run_replications(
    cfg: StudyConfig,
    N: int,
    seed=None,
    threads: int = 1,
    rep_seeds: list | None = None,
) -> dict[str, np.ndarray]:
    """N independent replications; returns metric name -> array of length N.

    ``rep_seeds`` forces per-replication root seeds (test hook); otherwise
    replication i uses stream ``(seed, i)``.
    """
    if N < 1:
        raise DomainError("N must be >= 1")
    if rep_seeds is not None and len(rep_seeds) != N:
        raise DomainError("rep_seeds must have length N")
    root = cfg.seed if seed is None else seed
    jobs = [
        (cfg.to_dict(), root if rep_seeds is None else rep_seeds[i], i if rep_seeds is None else 0)
        for i in range(N)
    ]
    results: list[dict | None] = [None] * N
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            for pos, (_, res) in enumerate(pool.map(_worker, jobs, chunksize=8)):
                results[pos] = res
    else:
        for pos, job in enumerate(jobs):
            results[pos] = _worker(job)[1]
    keys = sorted(results[0].keys())
    return {k: np.array([r[k] for r in results]) for k in keys}


@dataclass
class NullCalibration:
    """Null mean/sd per statistic, estimated from N replications."""

    stats: dict[str, dict]  # name -> {"mean": float, "sd": float}
    N: int
    seed: int
    convention_hash: str
    config: dict
    samples: dict[str, list] | None = None

    def to_json(self) -> str:
        return json.dumps(
            {
                "stats": self.stats,
                "N": self.N,
                "seed": self.seed,
                "convention_hash": self.convention_hash,
                "config": self.config,
                "samples": self.samples,
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "NullCalibration":
        d = json.loads(text)
        return cls(**d)


def calibrate_null(
    cfg: StudyConfig,
    N: int | None = None,
    seed=None,
    threads: int = 1,
    keep_samples: bool = False,
    rep_seeds: list | None = None,
    metrics: dict[str, np.ndarray] | None = None,
) -> NullCalibration:
    """Estimate null mean/sd of every statistic from N fresh replications.

    Pass ``metrics`` to calibrate from replications that were already run
    (they must come from this exact configuration).
    """
    N = cfg.replications if N is None else N
    if N < 2:
        raise DomainError("calibration needs N >= 2")
    root = cfg.seed if seed is None else seed
    if metrics is None:
        metrics = run_replications(cfg, N, seed=root, threads=threads, rep_seeds=rep_seeds)
    names = MULTI_SLICE_STATS if cfg.slice_count > 1 else SINGLE_SLICE_STATS
    stats = {}
    for name in names:
        if name not in metrics:
            continue
        x = np.asarray(metrics[name], dtype=float)
        mean, sd = float(x.mean()), float(x.std(ddof=1))
        if sd == 0.0:
            raise DomainError(
                f"degenerate variance: statistic {name!r} is constant over the "
                f"{N} calibration replications (identical seeds?)"
            )
        stats[name] = {"mean": mean, "sd": sd}
    samples = None
    if keep_samples:
        samples = {name: np.asarray(metrics[name]).tolist() for name in stats}
    return NullCalibration(
        stats=stats,
        N=N,
        seed=int(root),
        convention_hash=cfg.convention_hash(),
        config=cfg.to_dict(),
        samples=samples,
    )


@dataclass
class TestReport:
    entries: dict[str, dict]  # name -> {"observed","z","p","reject"}
    alpha: float
    sided: str
    convention_hash: str
    metadata: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(
            {
                "entries": self.entries,
                "alpha": self.alpha,
                "sided": self.sided,
                "convention_hash": self.convention_hash,
                "metadata": self.metadata,
            },
            indent=2,
        )

    def to_text(self) -> str:
        lines = [f"{'statistic':<10}{'observed':>14}{'z-score':>12}{'p-value':>12}  decision"]
        for name, e in self.entries.items():
            decision = "REJECT" if e["reject"] else "retain"
            lines.append(
                f"{name:<10}{e['observed']:>14.6g}{e['z']:>12.3f}{e['p']:>12.4g}  {decision}"
            )
        lines.append(f"(alpha = {self.alpha}, {self.sided}-sided)")
        return "\n".join(lines)


def _critical_value(alpha: float, sided: str) -> float:
    if sided == "two":
        return float(spstats.norm.ppf(1.0 - alpha / 2.0))
    return float(spstats.norm.ppf(1.0 - alpha))


def z_test(
    observed: dict[str, float],
    cal: NullCalibration,
    cfg: StudyConfig,
    alpha: float | None = None,
    sided: str | None = None,
) -> TestReport:
    """z-score test of observed statistics against a null calibration.

    Refuses to run when the calibration's convention hash differs from the
    configuration's: mixing conventions would compare incomparable numbers.
    """
    if cal.convention_hash != cfg.convention_hash():
        raise DataIntegrityError(
            "convention hash mismatch between calibration "
            f"({cal.convention_hash}) and configuration ({cfg.convention_hash()})"
        )
    alpha = cfg.alpha if alpha is None else alpha
    sided = cfg.sided if sided is None else sided
    crit = _critical_value(alpha, sided)
    entries = {}
    for name, value in observed.items():
        if name not in cal.stats:
            raise DataIntegrityError(f"no calibration entry for statistic {name!r}")
        mean, sd = cal.stats[name]["mean"], cal.stats[name]["sd"]
        z = (value - mean) / sd
        if sided == "two":
            p = 2.0 * float(spstats.norm.sf(abs(z)))
            reject = abs(z) > crit
        else:
            p = float(spstats.norm.sf(z))
            reject = z > crit
        entries[name] = {"observed": float(value), "z": float(z), "p": p, "reject": bool(reject)}
    return TestReport(
        entries=entries,
        alpha=alpha,
        sided=sided,
        convention_hash=cal.convention_hash,
        metadata={"calibration_N": cal.N, "calibration_seed": cal.seed},
    )


def observed_statistics(stack, cfg: StudyConfig) -> tuple[dict[str, float], bool]:
    """Evaluate the test statistics on a data stack.

    Returns ``(values, reconstructed)``; when the stack carries no labels,
    the vine statistics are computed with reconstructed labels and keyed
    ``t_m*_rec`` so they are compared against the matching calibration.
    """
    raw = [
        mbounded_diagram(
            s.points, cfg.M, cfg.tau,
            cluster_size_rule=cfg.cluster_size_rule, hole_size_at=cfg.hole_size_at,
        )
        for s in stack.slices
    ]
    reconstructed = not stack.labeled
    if reconstructed:
        threshold = cfg.recon_threshold
        if threshold is None:
            threshold = default_reconstruction_threshold(stack)
        stack = reconstruct_labels(stack, threshold)
    diagrams = [d.relabel(s.labels) for d, s in zip(raw, stack.slices)]
    out = {
        "t_tp0": t_tp(diagrams, 0, cfg.area).value,
        "t_tp1": t_tp(diagrams, 1, cfg.area).value,
        "t_rip": t_rip(stack, cfg.r_rip, grid=cfg.r_grid, pooling=cfg.pooling).value,
    }
    if len(stack.slices) > 1:
        vines = build_vines(stack, diagrams)
        suffix = "_rec" if reconstructed else ""
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            out[f"t_m0{suffix}"] = t_m(vines, 0, cfg.area).value
            out[f"t_m1{suffix}"] = t_m(vines, 1, cfg.area).value
    return out, reconstructed


def rejection_rates(
    metrics: dict[str, np.ndarray],
    cal: NullCalibration,
    alpha: float,
    sided: str = "two",
    names: tuple = None,
) -> dict[str, float]:
    """Fraction of replications rejected per statistic, against ``cal``."""
    crit = _critical_value(alpha, sided)
    rates = {}
    for name in names or cal.stats:
        if name not in metrics:
            continue
        mean, sd = cal.stats[name]["mean"], cal.stats[name]["sd"]
        z = (np.asarray(metrics[name]) - mean) / sd
        rej = np.abs(z) > crit if sided == "two" else z > crit
        rates[name] = float(rej.mean())
    return rates


def power_experiment(
    cfg: StudyConfig,
    alternatives: dict[str, ProcessSpec],
    N: int | None = None,
    alpha: float | None = None,
    seed=None,
    threads: int = 1,
    calibration: NullCalibration | None = None,
    keep_metrics: bool = False,
) -> dict:
    """Rejection-rate table: null model plus alternatives against one fixed
    null calibration (computed from disjoint seed streams if not supplied)."""
    N = cfg.replications if N is None else N
    alpha = cfg.alpha if alpha is None else alpha
    root = cfg.seed if seed is None else seed
    if calibration is None:
        # disjoint seed stream from the replications evaluated below
        calibration = calibrate_null(cfg, seed=2 * root + 1, threads=threads)
    models = {"null": cfg.process, **alternatives}
    table: dict[str, dict] = {}
    raw: dict[str, dict] = {}
    for name, proc in models.items():
        mcfg = cfg.with_process(proc)
        metrics = run_replications(mcfg, N, seed=root, threads=threads)
        table[name] = rejection_rates(metrics, calibration, alpha, cfg.sided)
        if keep_metrics:
            raw[name] = metrics
    out = {
        "alpha": alpha,
        "N": N,
        "sided": cfg.sided,
        "convention_hash": calibration.convention_hash,
        "rates": table,
    }
    if keep_metrics:
        out["metrics"] = raw
    return out


def single_slice_experiment(
    cfg: StudyConfig,
    alternatives: dict[str, ProcessSpec],
    N: int | None = None,
    alpha: float | None = None,
    seed=None,
    threads: int = 1,
    calibration: NullCalibration | None = None,
    keep_metrics: bool = False,
) -> dict:
    """Power experiment with a single central slice; T_M is undefined and omitted."""
    from dataclasses import replace

    scfg = replace(cfg, slice_count=1, slice_heights=None)
    return power_experiment(
        scfg, alternatives, N=N, alpha=alpha, seed=seed, threads=threads,
        calibration=calibration, keep_metrics=keep_metrics,
    )


def sample_diagnostics(x: np.ndarray, qq_points: int = 99) -> dict:
    """Skewness, excess kurtosis and QQ pairs of one sample."""
    x = np.asarray(x, dtype=float)
    if x.std(ddof=1) == 0.0:
        raise DomainError("degenerate variance: constant sample")
    probs = (np.arange(1, qq_points + 1)) / (qq_points + 1)
    standardized = np.sort((x - x.mean()) / x.std(ddof=1))
    sample_q = np.quantile(standardized, probs)
    normal_q = spstats.norm.ppf(probs)
    return {
        "skewness": float(spstats.skew(x)),
        "excess_kurtosis": float(spstats.kurtosis(x, fisher=True)),
        "qq": [[float(a), float(b)] for a, b in zip(normal_q, sample_q)],
    }


def normality_diagnostics(cal: NullCalibration, min_n: int = 100) -> dict[str, dict]:
    """Empirical normality check of the calibration samples (the z-tests
    lean on asymptotic normality; this makes the assumption inspectable)."""
    if cal.samples is None:
        raise DomainError("calibration carries no raw samples; rerun with keep_samples")
    if cal.N < min_n:
        raise DomainError(f"need at least {min_n} replications for diagnostics, have {cal.N}")
    return {name: sample_diagnostics(np.asarray(s)) for name, s in cal.samples.items()}
