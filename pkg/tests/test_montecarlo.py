import math

import numpy as np
import pytest

from osilab import experiments, sketch
from osilab.errors import BadParams, RankDeficient, TooFewTrials
from osilab.estimators import LowRankInstance, LSInstance, rangefinder_rsvd
from osilab.montecarlo import (
    ExperimentPreset,
    TrialSet,
    calibrate,
    deflation_identity_check,
    deflation_sides,
    run_trials,
    verify_probability,
    verify_rsvd_bound,
)
from osilab.rng import derive_seed


def ls_counterexample_preset(rho=0.3):
    inst = experiments.toy_ls_instance()
    return ExperimentPreset("ls", sketch.identity_mix(rho), "ls", inst, np.array([[1.0], [0.0]]), 1.0)


def test_identity_mix_trials():
    trials = run_trials(ls_counterexample_preset(), 100_000, 42)
    bad = np.abs(trials.ratio - math.sqrt(2)) <= 1e-12
    assert np.all(bad | (np.abs(trials.ratio - 1) <= 1e-12))
    assert abs(bad.mean() - 0.3) <= 0.01
    # the bad event is exactly the B_+ / B_- branches
    assert np.array_equal(bad, trials.branch_label > 0)


def test_trial_seeds_are_derived_from_index():
    trials = run_trials(ls_counterexample_preset(), 1000, 9)
    assert [int(s) for s in trials.seeds[:3]] == [derive_seed(9, i) for i in range(3)]
    assert list(trials.index[:3]) == [0, 1, 2]


@pytest.mark.parametrize("threads", [2, 4])
def test_results_do_not_depend_on_thread_count(threads):
    rng = np.random.default_rng(0)
    inst = LSInstance(rng.standard_normal((6, 2)), rng.standard_normal(6))
    preset = ExperimentPreset("g", sketch.gaussian(6, 3), "ls", inst, np.linalg.qr(inst.A)[0], 0.2)
    ref = run_trials(preset, 200_000, 5, threads=1).to_csv()
    assert run_trials(preset, 200_000, 5, threads=threads).to_csv() == ref


def test_branch_frequencies_match_analytic_probabilities():
    fam = sketch.trace_spike(3, 0.4, 0.3)
    trials = run_trials(ExperimentPreset("t", fam, "spectrum", alpha=0.4), 50_000, 1)
    probs = {}
    for p, _, label in fam.branches():
        probs[label] = probs.get(label, 0) + p
    for label, p in probs.items():
        freq = np.mean(trials.branch_label == label)
        assert abs(freq - p) <= 3 * math.sqrt(p * (1 - p) / len(trials)) + 1e-12


def test_sign_pair_rsvd_trials():
    inst = LowRankInstance(np.diag([1.0, 0.2]), 1)
    trials = run_trials(ExperimentPreset("s", sketch.sign_pair(), "rsvd", inst), 1000, 0)
    assert np.all(np.abs(trials.ratio - math.sqrt(2 / 1.04)) <= 1e-12)


def test_augmented_spike_bad_event_rate():
    out = experiments.theorem_ls_stronger(1_000_000, 11)
    rep = out.reports["bad_event"]
    assert rep.consistent
    assert rep.empirical >= 0.025 - 3 * math.sqrt(0.025 * 0.975 / 1e6)


def test_verify_probability_directions():
    event = np.zeros(1000, dtype=bool)
    event[:300] = True
    assert verify_probability(None, event, 0.3, "equals").consistent
    assert not verify_probability(None, event, 0.4, "equals").consistent
    assert verify_probability(None, event, 0.25, "at_least").consistent
    assert not verify_probability(None, event, 0.35, "at_least").consistent
    assert verify_probability(None, event, 0.35, "at_most").consistent
    rep = verify_probability(None, event, 0.3, "equals")
    assert rep.std_error == pytest.approx(math.sqrt(0.21 / 1000))
    with pytest.raises(TooFewTrials):
        verify_probability(None, event[:999], 0.3, "equals")
    with pytest.raises(BadParams):
        verify_probability(None, event, 0.3, "sideways")


def test_verify_probability_accepts_callable():
    trials = run_trials(ls_counterexample_preset(), 2000, 3)
    rep = verify_probability(trials, lambda t: t.ratio > 1.01, 0.3, "equals")
    assert rep.consistent and rep.n_trials == 2000


def test_verify_rsvd_bound_identity_sketch():
    # Omega = I reproduces A exactly, so the bound holds trivially with alpha = 1, rho = 0
    inst = LowRankInstance(np.diag([1.0, 0.5, 0.1]), 1)
    ratio = rangefinder_rsvd(inst, np.eye(3)).ratio
    assert ratio == pytest.approx(0.0, abs=1e-12)
    n = 1000
    trials = TrialSet(
        np.arange(n), np.zeros(n, dtype=np.uint64), np.full(n, ratio), np.ones(n, dtype=bool), np.full(n, -1)
    )
    rep = verify_rsvd_bound(trials, 1.0, 0.0, 2, 0.1)
    assert rep.consistent and rep.bound.factor == 1 and rep.empirical == 1.0


def test_deflation_examples():
    rng = np.random.default_rng(3)
    inst = LowRankInstance(rng.standard_normal((8, 6)), 2)
    V1 = inst.factors.V[:, :2]
    lhs, rhs = deflation_sides(inst, V1)
    assert lhs == pytest.approx(inst.tail_frob**2) and rhs == pytest.approx(inst.tail_frob**2)
    for _ in range(200):
        inst = LowRankInstance(rng.standard_normal((7, 5)), int(rng.integers(1, 4)))
        Om = rng.standard_normal((5, inst.r + int(rng.integers(0, 3))))
        lhs, rhs = deflation_sides(inst, Om)
        assert deflation_identity_check(inst, Om) <= 1e-8 * rhs


def test_deflation_sign_pair():
    tau = 0.2
    inst = LowRankInstance(np.diag([1.0, tau]), 1)
    for _, Om, _ in sketch.sign_pair().branches():
        lhs, rhs = deflation_sides(inst, Om)
        assert lhs == pytest.approx(2 * tau**2 / (1 + tau**2), rel=1e-12)
        assert rhs == pytest.approx(2 * tau**2, rel=1e-12)
        assert lhs <= rhs


def test_deflation_needs_full_row_rank():
    inst = LowRankInstance(np.diag([1.0, 0.5, 0.1]), 2)
    with pytest.raises(RankDeficient):
        deflation_sides(inst, np.array([[1.0], [0.0], [0.0]]))


def test_trialset_csv_round_trip():
    trials = run_trials(ls_counterexample_preset(), 50, 1)
    text = trials.to_csv()
    again = TrialSet.from_csv(text)
    assert again.to_csv() == text
    header = text.splitlines()[0].split(",")
    assert header[:5] == ["trial_index", "seed", "ratio", "injectivity_held", "branch_label"]
    rec = trials[3]
    assert rec.trial_index == 3 and rec.ratio == trials.ratio[3]


def test_calibrate():
    stats = np.linspace(0.01, 1.0, 1000)
    cal = calibrate(stats, 0.01)
    assert cal.alpha == pytest.approx(np.quantile(stats, 0.01))
    assert cal.rho == pytest.approx(0.01, abs=0.002)
    per = np.column_stack([stats, np.full(1000, 2.0)])
    assert calibrate(stats, 0.01, per).rho == pytest.approx(cal.rho)
    with pytest.raises(BadParams):
        calibrate(np.zeros(100))
