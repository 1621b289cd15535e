import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from osilab import sketch
from osilab.errors import BadParams, NoConvergence
from osilab.estimators import (
    LowRankInstance,
    LpInstance,
    LSInstance,
    lp_regress,
    lp_sketch_and_solve,
    rangefinder_rsvd,
    sketch_and_solve_ls,
)
from oracles import lp_grid_oracle, lp_objective

TOY = LSInstance([[1.0], [0.0]], [0.0, 1.0])
B_PLUS = np.array([[1.0, 0.0], [1.0, 0.0]])


def random_ls(seed, n, d):
    rng = np.random.default_rng(seed)
    return LSInstance(rng.standard_normal((n, d)), rng.standard_normal(n))


def test_identity_sketch_is_exact():
    inst = random_ls(0, 7, 3)
    res = sketch_and_solve_ls(inst, np.eye(7))
    assert res.ratio == pytest.approx(1.0, abs=1e-12)
    assert not res.rank_deficient


def test_toy_counterexample_branch():
    res = sketch_and_solve_ls(TOY, B_PLUS)
    assert res.x_tilde[0] == pytest.approx(1.0)
    assert res.ratio == pytest.approx(math.sqrt(2), abs=1e-12)
    res = sketch_and_solve_ls(TOY, [[1.0, 0.0], [-1.0, 0.0]])
    assert res.x_tilde[0] == pytest.approx(-1.0)


def test_spike_plus_branch_closed_form():
    eps, L = 0.1, 2.0
    fam = sketch.augmented_spike(eps, L)
    plus = next(O for p, O, label in fam.branches() if label == 1)
    res = sketch_and_solve_ls(TOY, plus)
    g = math.sqrt(20)
    x_closed = eps * g * g / (1 - eps + eps * g * g)
    assert x_closed == pytest.approx(2 / 2.9, abs=1e-15)
    assert res.x_tilde[0] == pytest.approx(x_closed, abs=1e-12)
    assert res.ratio**2 == pytest.approx(1 + (2 / 2.9) ** 2, abs=1e-9)
    assert res.ratio**2 == pytest.approx(1.475624, abs=1e-6)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 9), st.integers(1, 4))
def test_scaled_orthogonal_sketch_gives_ratio_one(seed, n, d):
    d = min(d, n - 1)
    inst = random_ls(seed, n, d)
    rng = np.random.default_rng(seed + 7)
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    Om = (0.5 + rng.random()) * Q
    assert sketch_and_solve_ls(inst, Om).ratio == pytest.approx(1.0, abs=1e-8)


def test_general_invertible_sketch_reweights_the_problem():
    # a non-orthogonal square sketch solves a weighted problem with weight Omega Omega^T
    Om = np.array([[1.0, 0.0], [1.0, 1.0]])
    res = sketch_and_solve_ls(TOY, Om)
    assert res.x_tilde[0] == pytest.approx(1.0)
    assert res.ratio == pytest.approx(math.sqrt(2))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_ls_ratio_never_below_one(seed):
    inst = random_ls(seed, 8, 2)
    Om = sketch.gaussian(8, 3).sample([seed, seed + 1, seed + 2])[0]
    assert np.all(sketch_and_solve_ls(inst, Om).ratio >= 1 - 1e-12)


def test_batched_matches_single():
    inst = random_ls(1, 6, 2)
    Om = sketch.gaussian(6, 3).sample(np.arange(5, dtype=np.uint64))[0]
    batch = sketch_and_solve_ls(inst, Om)
    for i in range(5):
        single = sketch_and_solve_ls(inst, Om[i])
        assert single.ratio == pytest.approx(batch.ratio[i], rel=1e-12)


def test_rank_deficient_sketch_falls_back_to_pinv():
    inst = random_ls(2, 5, 2)
    res = sketch_and_solve_ls(inst, np.eye(5)[:, :1])
    assert res.rank_deficient and np.isfinite(res.ratio)


def test_zero_residual_instance_is_flagged():
    A = np.array([[1.0], [0.0]])
    inst = LSInstance(A, [3.0, 0.0])
    assert sketch_and_solve_ls(inst, np.eye(2)).ratio == 1.0
    miss = sketch_and_solve_ls(inst, [[0.0], [1.0]])
    assert miss.exact_fit_missed and math.isnan(miss.ratio)


def test_ls_instance_validation():
    with pytest.raises(BadParams):
        LSInstance(np.ones((2, 2)), [1.0, 2.0])
    with pytest.raises(BadParams):
        sketch_and_solve_ls(TOY, np.eye(3))


def test_rangefinder_top_singular_vectors_give_ratio_one():
    rng = np.random.default_rng(4)
    inst = LowRankInstance(rng.standard_normal((9, 6)), 2)
    assert rangefinder_rsvd(inst, inst.factors.V[:, :2]).ratio == pytest.approx(1.0, abs=1e-10)


def test_rangefinder_sign_pair_counterexample():
    tau = 0.2
    inst = LowRankInstance(np.diag([1.0, tau]), 1)
    expected = math.sqrt(2 / (1 + tau**2))
    assert expected == pytest.approx(1.386750, abs=1e-6)
    for _, Om, _ in sketch.sign_pair().branches():
        assert rangefinder_rsvd(inst, Om).ratio == pytest.approx(expected, abs=1e-12)


def test_rangefinder_sparse_miss_on_first_coordinate():
    tau = 0.2
    inst = LowRankInstance(np.diag([1.0] + [tau] * 29), 1)
    om = np.zeros((30, 1))
    om[[3, 7, 20], 0] = [math.sqrt(2), -math.sqrt(2), math.sqrt(2)]
    res = rangefinder_rsvd(inst, om)
    err2 = np.linalg.norm(inst.A - res.A_tilde) ** 2
    assert err2 == pytest.approx(1 + 28 * tau**2, abs=1e-12)
    assert res.ratio**2 == pytest.approx(2.12 / 1.16, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(3, 10), st.integers(3, 8), st.data())
def test_rangefinder_ratio_at_least_one_when_k_le_r(seed, n, d, data):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, d))
    r = data.draw(st.integers(1, min(n, d) - 1))
    k = data.draw(st.integers(1, r))
    inst = LowRankInstance(A, r)
    Om = rng.standard_normal((d, k))
    assert rangefinder_rsvd(inst, Om).ratio >= 1 - 1e-10


def test_rangefinder_batched():
    inst = LowRankInstance(np.random.default_rng(2).standard_normal((8, 5)), 2)
    Om = sketch.gaussian(5, 3).sample(np.arange(4, dtype=np.uint64))[0]
    out = rangefinder_rsvd(inst, Om)
    assert out.ratio.shape == (4,)
    assert np.allclose(out.ratio, [rangefinder_rsvd(inst, O).ratio for O in Om])


def test_lp_regress_examples():
    A, b = np.ones((3, 1)), np.array([0.0, 0.0, 3.0])
    x1 = lp_regress(A, b, 1)
    assert x1[0] == pytest.approx(0.0, abs=1e-9)
    assert lp_objective(A, b, x1, 1) == pytest.approx(3.0, abs=1e-9)
    assert lp_regress(A, b, 2)[0] == pytest.approx(1.0)


def test_lp_regress_p2_is_least_squares():
    inst = random_ls(3, 8, 2)
    assert np.allclose(lp_regress(inst.A, inst.b, 2), inst.optimum.x_star, atol=1e-8)


def test_lp_regress_matches_grid_oracle():
    rng = np.random.default_rng(2024)
    for _ in range(20):
        n, d = rng.integers(3, 9), rng.integers(1, 3)
        p = rng.choice([1.0, 1.5, 3.0])
        A, b = rng.standard_normal((n, d)), rng.standard_normal(n)
        got = lp_objective(A, b, lp_regress(A, b, p), p)
        ref = lp_objective(A, b, lp_grid_oracle(A, b, p, step=1e-6), p)
        assert got <= ref * (1 + 1e-6)


def test_lp_regress_strict_cap(monkeypatch):
    from osilab import estimators

    monkeypatch.setattr(estimators, "MAX_ITER", 1)
    A, b = np.ones((3, 1)), np.array([0.0, 1.0, 5.0])
    with pytest.raises(NoConvergence) as info:
        lp_regress(A, b, 1, strict=True)
    assert info.value.best is not None
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        lp_regress(A, b, 1)
    assert any("cap" in str(w.message) for w in caught)


def test_lp_sketch_identity():
    rng = np.random.default_rng(5)
    inst = LpInstance(rng.standard_normal((6, 1)), rng.standard_normal(6), 1.0)
    assert lp_sketch_and_solve(inst, np.eye(6)).ratio <= 1 + 1e-6


def test_lp_sampler_covering_all_rows():
    rng = np.random.default_rng(6)
    n = 5
    inst = LpInstance(rng.standard_normal((n, 1)), rng.standard_normal(n), 1.0)
    fam = sketch.lp_sampler(n, n, 1.0)
    seen = 0
    for seed in range(3000):
        Om = fam.draw(seed)
        if np.all(np.any(Om != 0, axis=1)):
            seen += 1
            assert lp_sketch_and_solve(inst, Om).ratio <= 1 + 1e-5
    assert seen > 0
