"""Acceptance suite: analytic oracles plus self-calibrated Monte Carlo.

Each test asserts one numbered acceptance property of the pipeline on the
full-size study configuration.  The Monte-Carlo batches are shared across
tests through session fixtures; the default smoke profile uses N = 500
null replications, ``SLICEGOF_ACCEPTANCE_FULL=1`` switches the level test
to N = 2000 with the tighter binomial band.
"""

import dataclasses
import json
import math
import os
import time

import numpy as np
import pytest
import shapely
from shapely.geometry import Point, Polygon

from oracles import check_instance, draw_instance
from slicegof.config import StudyConfig
from slicegof.gof import (
    calibrate_null,
    canonical_alternatives,
    normality_diagnostics,
    observed_statistics,
    rejection_rates,
    run_replications,
    z_test,
)
from slicegof.mph import build_filtration, mbounded_diagram, pd0_mbounded, pd1_mbounded
from slicegof.pointproc import PointSet3D, Window3D
from slicegof.tessellate import Window2D, section_polygons

FULL = os.environ.get("SLICEGOF_ACCEPTANCE_FULL") == "1"
N_LEVEL = 2000 if FULL else 500
LEVEL_BAND = (0.038, 0.063) if FULL else (0.025, 0.085)
LEVEL_BUDGET_S = 7200.0 if FULL else 1800.0
N_POWER = 500
ALPHA = 0.05
THREADS = int(os.environ.get("SLICEGOF_THREADS", "1"))
TABLE_STATS = ("t_tp0", "t_tp1", "t_m0", "t_m1", "t_rip")


@pytest.fixture(scope="session")
def cfg():
    return StudyConfig()  # the null study: Poisson 2.18e-4 in 170x170x85, H = 9


@pytest.fixture(scope="session")
def null_cal(cfg):
    t0 = time.monotonic()
    cal = calibrate_null(cfg, N=N_LEVEL, seed=1, threads=THREADS, keep_samples=True)
    cal.elapsed_s = time.monotonic() - t0
    return cal


@pytest.fixture(scope="session")
def null_metrics(cfg):
    t0 = time.monotonic()
    metrics = run_replications(cfg, N_LEVEL, seed=2, threads=THREADS)
    metrics["elapsed_s"] = time.monotonic() - t0
    return metrics


@pytest.fixture(scope="session")
def alt_metrics(cfg):
    alts = canonical_alternatives(cfg.process.intensity)
    return {
        name: run_replications(cfg.with_process(spec), N_POWER, seed=3, threads=THREADS)
        for name, spec in alts.items()
    }


@pytest.fixture(scope="session")
def alt_rates(null_cal, alt_metrics):
    return {
        name: rejection_rates(m, null_cal, ALPHA, "two")
        for name, m in alt_metrics.items()
    }


@pytest.fixture(scope="session")
def single_slice(cfg):
    """Single central slice: calibration and CL3 rates for the comparison."""
    scfg = dataclasses.replace(cfg, slice_count=1)
    cal = calibrate_null(scfg, N=N_POWER, seed=4, threads=THREADS)
    cl3 = canonical_alternatives(cfg.process.intensity)["cl3"]
    metrics = run_replications(scfg.with_process(cl3), N_POWER, seed=3, threads=THREADS)
    return rejection_rates(metrics, cal, ALPHA, "two")


def test_acceptance_01_persistence_oracle_equivalence():
    # 200 random instances of <= 12 points in [0, 3]^2, checked against the
    # union-of-balls radius sweep (degree 0) and the pixel-grid complement
    # flood fill at resolution 1e-2 (degree 1)
    t0 = time.monotonic()
    count = 0
    for M, n_inst in ((1.0, 67), (2.0, 67), (5.0, 66)):
        rng = np.random.default_rng(int(M))
        for _ in range(n_inst):
            check_instance(draw_instance(rng, M), M, tol=1e-2)
            count += 1
    assert count == 200
    assert time.monotonic() - t0 < 300.0


def test_acceptance_02_analytic_cases_exact():
    tri = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, math.sqrt(3.0) / 2.0]])
    d = pd1_mbounded(build_filtration(tri), M=100.0, tau=100.0)
    assert d.births[0] == pytest.approx(0.5, abs=1e-9)
    assert d.deaths[0] == pytest.approx(3.0 ** -0.5, abs=1e-9)

    square = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    d = pd1_mbounded(build_filtration(square), M=100.0, tau=100.0)
    assert d.births[0] == pytest.approx(0.5, abs=1e-9)
    assert d.deaths[0] == pytest.approx(2.0 ** -0.5, abs=1e-9)

    dist, M = 3.0, 10.0
    two = np.array([[0.0, 0.0], [dist, 0.0]])
    d = pd0_mbounded(build_filtration(two), M=M)
    np.testing.assert_allclose(
        np.sort(d.deaths), [dist / 2.0, (M - dist) / 2.0], atol=1e-9
    )


def test_acceptance_03_tessellation_oracle(cfg):
    rng = np.random.default_rng(7)
    win3 = cfg.window3d()
    win2 = cfg.window2d()
    heights = cfg.layout().slice_heights(cfg.window_height)
    # cell-center grid: generic positions, away from the window boundary
    xs = win2.xmin + (np.arange(100) + 0.5) / 100.0 * (win2.xmax - win2.xmin)
    ys = win2.ymin + (np.arange(100) + 0.5) / 100.0 * (win2.ymax - win2.ymin)
    gx, gy = np.meshgrid(xs, ys)
    grid = np.column_stack([gx.ravel(), gy.ravel()])
    for _ in range(50):
        pts = win3.lo + rng.random((20, 3)) * (win3.hi - win3.lo)
        gen = PointSet3D.from_points(pts, win3)
        for h in heights:
            cells = section_polygons(gen, h, win2)
            polys = {lab: Polygon(p) for lab, p in cells.items()}
            assert sum(p.area for p in polys.values()) == pytest.approx(
                win2.area, rel=1e-9
            )
            d2 = ((grid[:, None, :] - pts[None, :, :2]) ** 2).sum(-1) + (h - pts[:, 2]) ** 2
            owner = d2.argmin(axis=1)
            # every generator owning a grid point must have a section cell
            assert set(np.unique(owner)) <= set(polys)
            for lab, poly in polys.items():
                mine = grid[owner == lab]
                inside = shapely.contains_xy(poly, mine[:, 0], mine[:, 1])
                for p in mine[~inside]:
                    # only points within 1e-9 of a cell boundary are excused
                    assert poly.exterior.distance(Point(p)) < 1e-9


def test_acceptance_04_test_level(cfg, null_cal, null_metrics):
    rates = rejection_rates(null_metrics, null_cal, ALPHA, "two", names=TABLE_STATS)
    assert set(rates) == set(TABLE_STATS)
    for name, rate in rates.items():
        assert LEVEL_BAND[0] <= rate <= LEVEL_BAND[1], (
            f"null rejection rate for {name} is {rate:.3f}, "
            f"outside [{LEVEL_BAND[0]}, {LEVEL_BAND[1]}] at N={N_LEVEL}"
        )
    assert null_cal.elapsed_s + null_metrics["elapsed_s"] < LEVEL_BUDGET_S


def test_acceptance_05_power_ordering(alt_rates):
    for name in TABLE_STATS:
        # monotone in clustering strength, up to binomial noise of 3 points
        assert alt_rates["cl1"][name] <= alt_rates["cl2"][name] + 0.03, name
        assert alt_rates["cl2"][name] <= alt_rates["cl3"][name] + 0.03, name
    assert alt_rates["cl3"]["t_rip"] > 0.40
    assert alt_rates["hc2"]["t_tp0"] > alt_rates["hc2"]["t_tp1"]
    for model in ("cl1", "cl2", "cl3"):
        for name in ("t_tp1", "t_m0", "t_m1", "t_rip"):
            assert alt_rates[model][name] > 0.08, (model, name)


def test_acceptance_06_multi_vs_single_slice(alt_rates, single_slice):
    multi = alt_rates["cl3"]["t_rip"]
    single = single_slice["t_rip"]
    assert multi >= single + 0.10, f"multi {multi:.3f} vs single {single:.3f}"


def test_acceptance_07_vine_structure(null_metrics, alt_metrics):
    len0 = float(np.mean(null_metrics["vine_len0"]))
    len1 = float(np.mean(null_metrics["vine_len1"]))
    assert len0 > 3.0 * len1, f"degree-0 mean {len0:.3f} vs degree-1 mean {len1:.3f}"

    # degree-0 vine-length means across the null and the five alternatives
    # must agree pairwise within 5% relative
    means = {"null": len0}
    means.update(
        {name: float(np.mean(m["vine_len0"])) for name, m in alt_metrics.items()}
    )
    for a in means:
        for b in means:
            rel = abs(means[a] - means[b]) / max(means[a], means[b])
            assert rel < 0.05, (
                f"vine-length means differ by {100 * rel:.1f}% between "
                f"{a} ({means[a]:.3f}) and {b} ({means[b]:.3f}): {means}"
            )


def test_acceptance_08_reconstruction(null_metrics, null_cal, alt_rates):
    rec_error = float(np.mean(null_metrics["rec_error"]))
    assert 0.12 <= rec_error <= 0.32, f"reconstruction error {rec_error:.3f}"

    null_level = rejection_rates(null_metrics, null_cal, ALPHA, "two")["t_m1_rec"]
    rec_power = alt_rates["cl3"]["t_m1_rec"]
    truth_power = alt_rates["cl3"]["t_m1"]
    assert rec_power >= null_level + 0.10
    assert rec_power < truth_power, (
        f"reconstructed-label power {rec_power:.3f} vs ground truth {truth_power:.3f}"
    )


def test_acceptance_09_normality_diagnostics(null_cal):
    assert null_cal.N >= 500
    diag = normality_diagnostics(null_cal)
    for name in ("t_tp0", "t_m0"):
        assert abs(diag[name]["skewness"]) < 0.3, (name, diag[name]["skewness"])
        assert abs(diag[name]["excess_kurtosis"]) < 0.6, (
            name, diag[name]["excess_kurtosis"],
        )


def test_acceptance_10_determinism_and_invariance():
    from slicegof.cli import _simulate_stack

    small = StudyConfig(
        window_side=60.0, window_height=30.0, slice_count=5, seed=11,
        process=dataclasses.replace(StudyConfig().process, intensity=1.5e-3),
    )

    # identical (config, seed): byte-identical artifacts end to end
    def pipeline() -> tuple[str, str]:
        stack = _simulate_stack(small)
        cal = calibrate_null(small, N=6, seed=21)
        observed, _ = observed_statistics(stack, small)
        return stack.to_csv(), z_test(observed, cal, small).to_json()

    assert pipeline() == pipeline()

    # permuting input point order leaves diagrams unchanged
    rng = np.random.default_rng(0)
    pts = rng.random((40, 2)) * 3.0
    perm = rng.permutation(40)
    a = mbounded_diagram(pts, M=2.0, tau=2.0)
    b = mbounded_diagram(pts[perm], M=2.0, tau=2.0)
    for q in (0, 1):
        np.testing.assert_array_equal(
            np.sort(a.select(q).deaths), np.sort(b.select(q).deaths)
        )
        np.testing.assert_array_equal(
            np.sort(a.select(q).births), np.sort(b.select(q).births)
        )

    # rescaling the |W| normalization leaves every z-score unchanged
    stack = _simulate_stack(small)
    zs = {}
    for factor in (1.0, 7.5):
        scfg = dataclasses.replace(small, area_convention=factor * small.area)
        cal = calibrate_null(scfg, N=6, seed=21)
        observed, _ = observed_statistics(stack, scfg)
        report = z_test(observed, cal, scfg)
        zs[factor] = {name: e["z"] for name, e in report.entries.items()}
    for name in zs[1.0]:
        assert zs[7.5][name] == pytest.approx(zs[1.0][name], rel=1e-12)
