"""Command-line interface for the slice-based goodness-of-fit pipeline.

Every command takes the study configuration from ``--config`` (JSON) with
individual kebab-case flags as overrides, and stamps its outputs with the
configuration hash, the root seed and an artifact version so downstream
commands can refuse mismatched inputs.
"""

from __future__ import annotations

import json
import os
import sys
from dataclasses import replace

import click
import numpy as np

from .config import StudyConfig
from .errors import DataIntegrityError, DomainError
from .gof import (
    NullCalibration,
    calibrate_null,
    canonical_alternatives,
    normality_diagnostics,
    observed_statistics,
    power_experiment,
    single_slice_experiment,
    z_test,
)
from .mph import diagrams_to_csv, mbounded_diagram
from .pointproc import ProcessSpec, sample_process
from .stats import ripley_pooled
from .tessellate import SliceStack, perturb_centroids, slice_voronoi
from .vineyard import build_vines, default_reconstruction_threshold, reconstruct_labels

ARTIFACT_VERSION = 1

_CONFIG_FLAGS = [
    ("window-side", "window_side", float),
    ("window-height", "window_height", float),
    ("slice-count", "slice_count", int),
    ("slice-spacing", "slice_spacing", float),
    ("eta0", "eta0", float),
    ("m-bound", "M", float),
    ("tau", "tau", float),
    ("r-rip", "r_rip", float),
    ("r-grid", "r_grid", int),
    ("area-convention", "area_convention", float),
    ("recon-threshold", "recon_threshold", float),
    ("alpha", "alpha", float),
    ("replications", "replications", int),
    ("seed", "seed", int),
    ("cluster-size-rule", "cluster_size_rule", str),
    ("hole-size-at", "hole_size_at", str),
    ("vine-length-convention", "vine_length_convention", str),
    ("pooling", "pooling", str),
    ("sided", "sided", str),
]
_PROCESS_FLAGS = [
    ("process", "kind", str),
    ("intensity", "intensity", float),
    ("hardcore-radius", "R", float),
    ("n-cl", "n_cl", int),
    ("lambda-cl", "lambda_cl", float),
]


def config_options(f):
    for flag, _field, typ in reversed(_CONFIG_FLAGS):
        f = click.option(f"--{flag}", type=typ, default=None, help=f"override {_field}")(f)
    for flag, _field, typ in reversed(_PROCESS_FLAGS):
        f = click.option(f"--{flag}", type=typ, default=None, help=f"process {_field}")(f)
    f = click.option("--slice-heights", type=str, default=None,
                     help="comma-separated explicit slice heights")(f)
    f = click.option("--minus-sampling/--no-minus-sampling", default=None,
                     help="discard boundary-touching cells")(f)
    f = click.option("--match-expected-count/--no-match-expected-count", default=None,
                     help="rescale lambda_cl to the null expected count")(f)
    f = click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
                     default=None, help="study configuration JSON")(f)
    return f


def build_config(params: dict) -> StudyConfig:
    """Materialize the StudyConfig from a JSON file plus flag overrides."""
    if params.get("config_path"):
        with open(params["config_path"]) as fh:
            cfg = StudyConfig.from_json(fh.read())
    else:
        cfg = StudyConfig()
    updates = {}
    for flag, name, _typ in _CONFIG_FLAGS:
        v = params.get(flag.replace("-", "_"))
        if v is not None:
            updates[name] = v
    if params.get("slice_heights") is not None:
        updates["slice_heights"] = tuple(
            float(x) for x in params["slice_heights"].split(",") if x.strip()
        )
    if params.get("minus_sampling") is not None:
        updates["minus_sampling"] = params["minus_sampling"]
    proc_updates = {}
    for flag, name, _typ in _PROCESS_FLAGS:
        v = params.get(flag.replace("-", "_"))
        if v is not None:
            proc_updates[name] = v
    if params.get("match_expected_count") is not None:
        proc_updates["match_expected_count"] = params["match_expected_count"]
    if proc_updates:
        updates["process"] = ProcessSpec.from_dict({**cfg.process.to_dict(), **proc_updates})
    return replace(cfg, **updates) if updates else cfg


def default_threads() -> int:
    return int(os.environ.get("SLICEGOF_THREADS", "1"))


def _meta(cfg: StudyConfig) -> dict:
    return {
        "config_hash": cfg.config_hash(),
        "convention_hash": cfg.convention_hash(),
        "seed": cfg.seed,
        "artifact_version": ARTIFACT_VERSION,
    }


def _meta_comment(cfg: StudyConfig) -> str:
    m = _meta(cfg)
    return "".join(f"# {k}={v}\n" for k, v in m.items())


def _fail(ctx_obj, exc):
    if ctx_obj and ctx_obj.get("json_errors"):
        payload = {"error": type(exc).__name__, "message": str(exc)}
        click.echo(json.dumps(payload), err=True)
    else:
        click.echo(f"error: {exc}", err=True)
    sys.exit(2)


@click.group()
@click.option("--json-errors", is_flag=True, default=False,
              help="emit machine-readable errors on stderr")
@click.pass_context
def main(ctx, json_errors):
    """Topology-based goodness-of-fit tests for sliced 3D microstructures."""
    ctx.ensure_object(dict)
    ctx.obj["json_errors"] = json_errors


def catch_errors(f):
    """Uniform error handling: domain/config errors exit 2, optionally as JSON."""

    @click.pass_context
    def wrapper(ctx, **kwargs):
        try:
            return ctx.invoke(f, **kwargs)
        except (ValueError, OSError) as exc:
            _fail(ctx.obj, exc)

    import functools

    return functools.update_wrapper(wrapper, f)


def command(name):
    """Register a subcommand with uniform error handling."""

    def deco(f):
        return main.command(name=name)(catch_errors(f))

    return deco


def _load_stack(path: str, cfg: StudyConfig) -> SliceStack:
    with open(path) as fh:
        text = fh.read()
    if path.endswith(".json"):
        return SliceStack.from_json(text)
    return SliceStack.from_csv(text, cfg.window2d())


def _simulate_stack(cfg: StudyConfig) -> SliceStack:
    ss = np.random.SeedSequence(cfg.seed, spawn_key=(0,))
    sample_rng, noise_rng = [np.random.default_rng(s) for s in ss.spawn(2)]
    points = sample_process(cfg.process, cfg.window3d(), sample_rng)
    stack = slice_voronoi(points, cfg.layout(), minus_sampling=cfg.minus_sampling)
    if cfg.eta0 > 0:
        stack = perturb_centroids(stack, cfg.eta0, noise_rng)
    return stack


@command("simulate")
@config_options
@click.option("--out", type=click.Path(dir_okay=False), required=True)
def cmd_simulate(out, **params):
    """Sample the configured process and write the sliced stack (CSV or JSON)."""
    cfg = build_config(params)
    stack = _simulate_stack(cfg)
    with open(out, "w") as fh:
        if out.endswith(".json"):
            d = json.loads(stack.to_json())
            fh.write(json.dumps({"meta": _meta(cfg), "stack": d}, indent=2))
        else:
            fh.write(_meta_comment(cfg))
            fh.write(stack.to_csv())
    click.echo(f"wrote {sum(len(s) for s in stack.slices)} points in "
               f"{len(stack.slices)} slices to {out}")


def _stack_diagrams(stack: SliceStack, cfg: StudyConfig):
    return [
        mbounded_diagram(
            s.points, cfg.M, cfg.tau,
            cluster_size_rule=cfg.cluster_size_rule, hole_size_at=cfg.hole_size_at,
        )
        for s in stack.slices
    ]


@command("diagram")
@config_options
@click.option("--stack", "stack_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
def cmd_diagram(stack_path, out, **params):
    """Compute per-slice M-bounded persistence diagrams from a stack file."""
    cfg = build_config(params)
    stack = _load_stack(stack_path, cfg)
    raw = _stack_diagrams(stack, cfg)
    if stack.labeled:
        raw = [d.relabel(s.labels) for d, s in zip(raw, stack.slices)]
    with open(out, "w") as fh:
        fh.write(_meta_comment(cfg))
        fh.write(diagrams_to_csv(raw))
    click.echo(f"wrote {sum(len(d) for d in raw)} features to {out}")


@command("vineyard")
@config_options
@click.option("--stack", "stack_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@click.option("--traces-out", type=click.Path(dir_okay=False), default=None,
              help="also emit per-vine (slice, birth, death) traces as CSV")
def cmd_vineyard(stack_path, out, traces_out, **params):
    """Assemble vines from a stack, reconstructing labels when absent."""
    cfg = build_config(params)
    stack = _load_stack(stack_path, cfg)
    threshold = None
    if not stack.labeled:
        threshold = cfg.recon_threshold
        if threshold is None:
            threshold = default_reconstruction_threshold(stack)
        stack = reconstruct_labels(stack, threshold)
        provenance = "reconstructed"
    else:
        provenance = "ground-truth"
    raw = _stack_diagrams(stack, cfg)
    diagrams = [d.relabel(s.labels) for d, s in zip(raw, stack.slices)]
    vines = build_vines(stack, diagrams, provenance=provenance)
    payload = {
        "meta": _meta(cfg),
        "reconstruction_threshold": threshold,
        "vineyard": json.loads(vines.to_json()),
    }
    with open(out, "w") as fh:
        fh.write(json.dumps(payload, indent=2))
    if traces_out is not None:
        lines = ["vine_id,dim,key_a,key_b,slice_index,birth,death"]
        for vid, v in enumerate(vines.vines):
            kb = v.key[1] if len(v.key) > 1 else -1
            for k in sorted(v.entries):
                b, d = v.entries[k]
                lines.append(f"{vid},{v.dim},{v.key[0]},{kb},{k},{b:.17g},{d:.17g}")
        with open(traces_out, "w") as fh:
            fh.write("\n".join(lines) + "\n")
    click.echo(f"wrote {len(vines.vines)} vines ({provenance}) to {out}")


@command("calibrate")
@config_options
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@click.option("--n", "n_reps", type=int, default=None, help="replications (default: config)")
@click.option("--threads", type=int, default=None)
@click.option("--keep-samples", is_flag=True, default=False,
              help="retain raw statistic samples for diagnostics")
def cmd_calibrate(out, n_reps, threads, keep_samples, **params):
    """Monte-Carlo null calibration: mean/sd of every statistic."""
    cfg = build_config(params)
    threads = default_threads() if threads is None else threads
    cal = calibrate_null(cfg, N=n_reps, threads=threads, keep_samples=keep_samples)
    payload = {"meta": _meta(cfg), "calibration": json.loads(cal.to_json())}
    with open(out, "w") as fh:
        fh.write(json.dumps(payload, indent=2))
    click.echo(f"calibrated {len(cal.stats)} statistics over {cal.N} replications -> {out}")


def _load_calibration(path: str) -> NullCalibration:
    with open(path) as fh:
        d = json.load(fh)
    if "calibration" in d:
        d = d["calibration"]
    return NullCalibration(**d)


@command("test")
@config_options
@click.option("--stack", "stack_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--calibration", "cal_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="JSON report path")
@click.option("--k-out", type=click.Path(dir_okay=False), default=None,
              help="emit the pooled Ripley K series as CSV")
def cmd_test(stack_path, cal_path, out, k_out, **params):
    """z-score goodness-of-fit test of a stack against a null calibration."""
    cfg = build_config(params)
    stack = _load_stack(stack_path, cfg)
    cal = _load_calibration(cal_path)
    observed, reconstructed = observed_statistics(stack, cfg)
    report = z_test(observed, cal, cfg)
    report.metadata["labels"] = "reconstructed" if reconstructed else "ground-truth"
    click.echo(report.to_text())
    if out is not None:
        with open(out, "w") as fh:
            fh.write(json.dumps({"meta": _meta(cfg), "report": json.loads(report.to_json())},
                                indent=2))
    if k_out is not None:
        r, k = ripley_pooled(stack, cfg.r_rip, grid=cfg.r_grid, pooling=cfg.pooling)
        with open(k_out, "w") as fh:
            fh.write("r,k_pooled\n")
            fh.writelines(f"{a:.17g},{b:.17g}\n" for a, b in zip(r, k))


def _alternatives_from_flag(cfg: StudyConfig, names: str) -> dict:
    table = canonical_alternatives(cfg.process.intensity)
    if names.strip().lower() == "all":
        return table
    out = {}
    for nm in names.split(","):
        nm = nm.strip().lower()
        if nm not in table:
            raise DomainError(f"unknown alternative {nm!r}; choose from {sorted(table)} or 'all'")
        out[nm] = table[nm]
    return out


def _echo_rates(res: dict):
    stats = sorted({s for r in res["rates"].values() for s in r})
    click.echo("model     " + "".join(f"{s:>12}" for s in stats))
    for model, rates in res["rates"].items():
        click.echo(f"{model:<10}" + "".join(
            f"{100 * rates[s]:>11.2f}%" if s in rates else f"{'-':>12}" for s in stats))


@command("power")
@config_options
@click.option("--alternatives", default="all",
              help="comma list among hc1,hc2,cl1,cl2,cl3 or 'all'")
@click.option("--n", "n_reps", type=int, default=None)
@click.option("--threads", type=int, default=None)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
def cmd_power(alternatives, n_reps, threads, out, **params):
    """Rejection-rate table for the null and the canonical alternatives."""
    cfg = build_config(params)
    threads = default_threads() if threads is None else threads
    res = power_experiment(cfg, _alternatives_from_flag(cfg, alternatives),
                           N=n_reps, threads=threads)
    _echo_rates(res)
    if out is not None:
        with open(out, "w") as fh:
            fh.write(json.dumps({"meta": _meta(cfg), "power": res}, indent=2))


@command("single-slice")
@config_options
@click.option("--alternatives", default="all")
@click.option("--n", "n_reps", type=int, default=None)
@click.option("--threads", type=int, default=None)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
def cmd_single_slice(alternatives, n_reps, threads, out, **params):
    """Power experiment restricted to one central slice (no vine statistics)."""
    cfg = build_config(params)
    threads = default_threads() if threads is None else threads
    res = single_slice_experiment(cfg, _alternatives_from_flag(cfg, alternatives),
                                  N=n_reps, threads=threads)
    _echo_rates(res)
    if out is not None:
        with open(out, "w") as fh:
            fh.write(json.dumps({"meta": _meta(cfg), "power": res}, indent=2))


@command("ingest")
@config_options
@click.option("--csv", "csv_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
def cmd_ingest(csv_path, out, **params):
    """Validate a generic slice CSV and write the canonical stack file.

    Checks: parseable rows, slice heights strictly increasing with slice
    index, all points inside the window, no duplicate (slice, x, y) rows.
    """
    cfg = build_config(params)
    with open(csv_path) as fh:
        text = fh.read()
    stack = SliceStack.from_csv(text, cfg.window2d())  # raises with line numbers
    win = cfg.window2d()
    seen = set()
    # reproduce source line numbers for the semantic checks
    numbered = [
        (no, ln) for no, ln in enumerate(text.splitlines(), start=1)
        if ln.strip() and not ln.startswith("#")
    ]
    idx = {name: i for i, name in enumerate(numbered[0][1].split(","))}
    for lineno, ln in numbered[1:]:
        row = ln.split(",")
        k, x, y = int(row[idx["slice_index"]]), float(row[idx["x"]]), float(row[idx["y"]])
        if not (win.xmin <= x <= win.xmax and win.ymin <= y <= win.ymax):
            raise DataIntegrityError(f"point outside window at line {lineno}: ({x}, {y})")
        key = (k, x, y)
        if key in seen:
            raise DataIntegrityError(f"duplicate (slice, x, y) row at line {lineno}")
        seen.add(key)
    with open(out, "w") as fh:
        fh.write(_meta_comment(cfg))
        fh.write(stack.to_csv())
    click.echo(f"ingested {sum(len(s) for s in stack.slices)} points "
               f"in {len(stack.slices)} slices -> {out}")


@command("diagnostics")
@config_options
@click.option("--calibration", "cal_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.option("--qq-out", type=click.Path(dir_okay=False), default=None,
              help="emit QQ pairs per statistic as CSV")
def cmd_diagnostics(cal_path, out, qq_out, **params):
    """Normality diagnostics of a calibration's raw statistic samples."""
    build_config(params)
    cal = _load_calibration(cal_path)
    diag = normality_diagnostics(cal)
    for name, d in diag.items():
        click.echo(f"{name:<10} skewness {d['skewness']:+.3f}   "
                   f"excess kurtosis {d['excess_kurtosis']:+.3f}")
    if out is not None:
        with open(out, "w") as fh:
            fh.write(json.dumps(diag, indent=2))
    if qq_out is not None:
        with open(qq_out, "w") as fh:
            fh.write("statistic,normal_quantile,sample_quantile\n")
            for name, d in diag.items():
                fh.writelines(f"{name},{a:.17g},{b:.17g}\n" for a, b in d["qq"])


if __name__ == "__main__":
    main()
