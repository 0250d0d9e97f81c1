"""Cross-validation of the diagrams against independent brute-force oracles.

The degree-0 oracle replays the union-of-growing-disks definition on the
complete graph; the degree-1 oracle flood-fills a pixel grid of the distance
field.  Neither touches the Delaunay/alpha-filtration code paths.  The
acceptance suite runs the full-size version of this test.
"""

import math

import numpy as np
import pytest

from oracles import check_instance, draw_instance, pd0_oracle, pd1_oracle

TRIANGLE = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, math.sqrt(3.0) / 2.0]])


def test_pd0_oracle_two_point_case():
    pts = np.array([[0.0, 0.0], [3.0, 0.0]])
    np.testing.assert_allclose(pd0_oracle(pts, M=10.0), [1.5, 3.5], atol=1e-12)


def test_pd1_oracle_matches_analytic_triangle():
    b, d, sizes = pd1_oracle(TRIANGLE)
    assert len(b) == 1
    assert b[0] == pytest.approx(0.5, abs=1e-2)
    assert d[0] == pytest.approx(3.0 ** -0.5, abs=1e-2)
    assert sizes[0] == pytest.approx(1.0, abs=5e-2)


@pytest.mark.parametrize("M", [1.0, 2.0, 5.0])
def test_random_instances_match_oracles(M):
    rng = np.random.default_rng(int(M * 1000))
    for _ in range(10):
        check_instance(draw_instance(rng, M), M)
