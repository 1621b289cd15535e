"""Theorem checks and figure data built on the trial harness.

Each ``theorem_*`` runner returns a :class:`TheoremOutcome` whose ``passed``
flag is what the CLI turns into its exit code: for positive results the
bound must hold at the claimed rate, for counterexamples the bad event must
be observed at the claimed rate.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from . import bounds, sketch
from .errors import UnknownPreset
from .estimators import LowRankInstance, LpInstance, LSInstance
from .montecarlo import (
    ExperimentPreset,
    TrialSet,
    calibrate,
    lp_injectivity_stat,
    run_trials,
    tail_injectivity_stats,
    verify_probability,
    verify_rsvd_bound,
)
from .rng import CounterStream, derive_seed
from .sketch import iter_draws, trace_spike_heavy_value

EQ_ATOL = 1e-9
CALIBRATION_SALT = 0xCA11
INSTANCE_SALT = 0x1257


@dataclass
class TheoremOutcome:
    name: str
    params: dict
    reports: dict
    trials: TrialSet
    checks: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(r.consistent for r in self.reports.values()) and all(self.checks.values())

    def to_dict(self, N, seed):
        return {
            "preset": self.name,
            "params": self.params,
            "N": N,
            "seed": seed,
            "reports": {key: rep.to_dict() for key, rep in self.reports.items()},
            "checks": self.checks,
            "extra": self.extra,
            "verdict": "consistent" if self.passed else "violated",
        }


# ---------------------------------------------------------------- instances


def toy_ls_instance():
    """``A = e_1``, ``b = e_2`` in R^2: ``x_star = 0``, optimal residual 1."""
    return LSInstance(np.array([[1.0], [0.0]]), np.array([0.0, 1.0]))


def diag_instance(tau, size=2, r=1):
    """``diag(1, tau, ..., tau)`` with target rank ``r``."""
    return LowRankInstance(np.diag([1.0] + [tau] * (size - 1)), r)


def _orthonormal(stream, n, d):
    Q, R = np.linalg.qr(stream.normal(n * d).reshape(n, d))
    return Q * np.sign(np.diag(R))


def fig1_ls_instance(seed, n=1024, d=64, noise=0.2):
    """Geometric spectrum from 1 to 0.12, ``b = A x_star + e`` with ``e`` orthogonal
    to ``range(A)`` and ``||e|| = noise * ||A x_star|| / sqrt(n)``."""
    st = CounterStream([derive_seed(seed, 0, INSTANCE_SALT)])
    U = _orthonormal(st, n, d)
    V = _orthonormal(st, d, d)
    A = (U * np.geomspace(1.0, 0.12, d)) @ V.T
    x = st.normal(d)[0]
    Ax = A @ x
    e = st.normal(n)[0]
    e -= U @ (U.T @ e)
    e *= noise * np.linalg.norm(Ax) / math.sqrt(n) / np.linalg.norm(e)
    return LSInstance(A, Ax + e)


def fig1_rsvd_instance(seed, n=320, d=160, r=10):
    """``sigma_j = 1`` for ``j <= r`` and ``2^-(j-r)`` beyond, random singular vectors."""
    st = CounterStream([derive_seed(seed, 1, INSTANCE_SALT)])
    U = _orthonormal(st, n, d)
    V = _orthonormal(st, d, d)
    j = np.arange(1, d + 1)
    s = np.where(j <= r, 1.0, 2.0 ** -(j - r).astype(float))
    return LowRankInstance((U * s) @ V.T, r)


def small_lp_instance(seed, n=6, d=1, p=1.0):
    st = CounterStream([derive_seed(seed, 2, INSTANCE_SALT)])
    A = st.normal(n * d).reshape(n, d)
    b = st.normal(n)[0]
    return LpInstance(A, b, p)


# ---------------------------------------------------------------- theorems


def theorem_ls_counterexample(N, seed, rho=0.3, threads=None):
    inst = toy_ls_instance()
    preset = ExperimentPreset(
        "ls-counterexample", sketch.identity_mix(rho), "ls", inst, inst.residual_basis[:, :1], 1.0
    )
    trials = run_trials(preset, N, seed, threads)
    two_point = np.all(
        (np.abs(trials.ratio - 1) <= 1e-12) | (np.abs(trials.ratio - math.sqrt(2)) <= 1e-12)
    )
    rep = verify_probability(trials, trials.ratio > 1.01, rho, "equals")
    return TheoremOutcome(
        "ls-counterexample",
        {"rho": rho},
        {"bad_event": rep},
        trials,
        {"ratios_in_{1,sqrt2}": bool(two_point), "injective_on_range_A": bool(trials.injectivity_held.all())},
    )


def spike_branch_ratio_sq(epsilon, L):
    """Closed-form squared ratio on the ``u_+`` branch of the augmented spike."""
    t = 2 * L / epsilon
    g = math.sqrt(t / 2)
    x = epsilon * g * g / (1 - epsilon + epsilon * g * g)
    return 1 + x * x


def theorem_ls_stronger(N, seed, epsilon=0.1, L=2.0, threads=None):
    inst = toy_ls_instance()
    fam = sketch.augmented_spike(epsilon, L)
    preset = ExperimentPreset("ls-stronger", fam, "ls", inst, np.eye(2), 1 - epsilon)
    trials = run_trials(preset, N, seed, threads)
    threshold = 1 + L**2 / (1 + L) ** 2
    rep = verify_probability(trials, trials.ratio**2 >= threshold - 1e-12, epsilon / (2 * L), "at_least")
    plus = trials.branch_label == 1
    expected = spike_branch_ratio_sq(epsilon, L)
    branch_ok = bool(plus.any()) and bool(np.all(np.abs(trials.ratio[plus] ** 2 - expected) <= 1e-9))
    return TheoremOutcome(
        "ls-stronger",
        {"epsilon": epsilon, "L": L},
        {"bad_event": rep},
        trials,
        {"u_plus_ratio_sq_matches": branch_ok, "injective_everywhere": bool(trials.injectivity_held.all())},
        {"threshold_ratio_sq": threshold, "u_plus_ratio_sq": expected},
    )


def theorem_ls_rescue(N, seed, alpha=0.5, etas=(0.1, 0.25), threads=None):
    """Relative bound with injectivity on ``span(range(A), b)``, via ``expo_rank_one``."""
    inst = toy_ls_instance()
    fam = sketch.expo_rank_one(alpha)
    preset = ExperimentPreset("ls-rescue", fam, "ls", inst, inst.residual_basis, alpha)
    trials = run_trials(preset, N, seed, threads)
    delta_hat = 1.0 - float(trials.injectivity_held.mean())
    reports = {}
    for eta in etas:
        g = bounds.ls_relative_bound(alpha, 0.0, eta)
        reports[f"eta={eta}"] = verify_probability(
            trials, g.holds(trials.ratio), g.success_prob, "at_least", g
        )
    return TheoremOutcome(
        "ls-rescue",
        {"alpha": alpha, "etas": list(etas)},
        reports,
        trials,
        {"injective_on_augmented_space": delta_hat == 0.0},
    )


def _two_point(trials, s, alpha, q):
    heavy = trace_spike_heavy_value(s, alpha, q)
    lam = trials.aux["lambda_max"]
    on_heavy = np.abs(lam - heavy) <= EQ_ATOL
    on_light = np.abs(lam - alpha) <= EQ_ATOL
    return heavy, on_heavy, bool(np.all(on_heavy | on_light))


def theorem_ose_from_osi(N, seed, s=4, alpha=0.5, q=0.25, tau=None, threads=None):
    """The Markov-implied OSE on the trace-spike OSI, whose worst case it attains."""
    tau = q if tau is None else tau
    ose = bounds.implied_ose(s, alpha, 0.0, tau)
    preset = ExperimentPreset("ose-from-osi", sketch.trace_spike(s, alpha, q), "spectrum", alpha=alpha)
    trials = run_trials(preset, N, seed, threads)
    heavy, on_heavy, support_ok = _two_point(trials, s, alpha, q)
    inside = trials.injectivity_held & (trials.aux["lambda_max"] <= ose.beta + EQ_ATOL)
    rep = verify_probability(trials, inside, 1 - ose.rho, "at_least")
    return TheoremOutcome(
        "ose-from-osi",
        {"s": s, "alpha": alpha, "q": q, "tau": tau},
        {"implied_ose": rep, "heavy_value": verify_probability(trials, on_heavy, q, "equals")},
        trials,
        {"two_point_support": support_ok},
        {"beta": ose.beta, "rho_out": ose.rho, "heavy_value": heavy},
    )


def theorem_osi_sharpness(N, seed, s=4, alpha=0.5, q=0.25, threads=None):
    preset = ExperimentPreset("osi-sharpness", sketch.trace_spike(s, alpha, q), "spectrum", alpha=alpha)
    trials = run_trials(preset, N, seed, threads)
    heavy, on_heavy, support_ok = _two_point(trials, s, alpha, q)
    return TheoremOutcome(
        "osi-sharpness",
        {"s": s, "alpha": alpha, "q": q},
        {"heavy_value": verify_probability(trials, on_heavy, q, "equals")},
        trials,
        {"two_point_support": support_ok, "injective_everywhere": bool(trials.injectivity_held.all())},
        {"heavy_value": heavy},
    )


def theorem_rsvd_counterexample(N, seed, tau=0.2, threads=None):
    inst = diag_instance(tau)
    preset = ExperimentPreset(
        "rsvd-counterexample", sketch.sign_pair(), "rsvd", inst, np.eye(2), 1.0
    )
    trials = run_trials(preset, N, seed, threads)
    expected = math.sqrt(2 / (1 + tau**2))
    exact = np.abs(trials.ratio - expected) <= 1e-12
    # r+1 = 2: injectivity on span(v_1, v_2) = R^2 fails for a single column
    return TheoremOutcome(
        "rsvd-counterexample",
        {"tau": tau},
        {"ratio_equals": verify_probability(trials, exact, 1.0, "equals")},
        trials,
        {"augmented_injectivity_fails": not bool(trials.injectivity_held.any())},
        {"expected_ratio": expected},
    )


def calibrate_rsvd(inst, family, N, seed):
    """Estimate ``(alpha, rho)`` for injectivity on ``span(V_1, v_j)``."""
    per = np.concatenate(
        [tail_injectivity_stats(inst, Om) for Om, _ in iter_draws(family, N, seed, CALIBRATION_SALT)]
    )
    return calibrate(per.min(axis=1), 0.01, per)


def theorem_rsvd_rescue(N, seed, eta=0.1, oversample=5, calibration_trials=10_000, threads=None):
    inst = fig1_rsvd_instance(seed)
    fam = sketch.gaussian(inst.A.shape[1], inst.r + oversample)
    cal = calibrate_rsvd(inst, fam, calibration_trials, seed)
    q_minus_r = inst.rank - inst.r
    preset = ExperimentPreset("rsvd-rescue", fam, "rsvd", inst, alpha=cal.alpha)
    trials = run_trials(preset, N, seed, threads)
    rep = verify_rsvd_bound(trials, cal.alpha, cal.rho, q_minus_r, eta)
    return TheoremOutcome(
        "rsvd-rescue",
        {"eta": eta, "k": fam.k, "r": inst.r},
        {"bound": rep},
        trials,
        {},
        {"alpha_hat": cal.alpha, "rho_hat": cal.rho, "q_minus_r": q_minus_r},
    )


LP_SOLVER_RTOL = 1e-6


def theorem_lp_deterministic(N, seed, p=1.0, n=6, k=3, threads=None):
    """Per draw, plug the realized injectivity and residual-growth constants
    into the deterministic l_p bound."""
    inst = small_lp_instance(seed, n=n, p=p)
    preset = ExperimentPreset("lp-deterministic", sketch.lp_sampler(n, k, p), "lp", inst)
    trials = run_trials(preset, N, seed, threads)
    a, beta = trials.aux["inj_stat"], trials.aux["beta_stat"]
    factor = 1 + 2 * (beta / np.where(a > 0, a, 1.0)) ** (1 / p)
    ok = (a <= 0) | (trials.ratio <= factor * (1 + LP_SOLVER_RTOL))
    return TheoremOutcome(
        "lp-deterministic",
        {"p": p, "n": n, "k": k},
        {"bound_holds": verify_probability(trials, ok, 1.0, "equals")},
        trials,
    )


def calibrate_lp(inst, family, N, seed):
    stats = np.concatenate(
        [lp_injectivity_stat(inst.A, Om, inst.p) for Om, _ in iter_draws(family, N, seed, CALIBRATION_SALT)]
    )
    return calibrate(stats, 0.01)


def theorem_lp_probabilistic(N, seed, p=1.0, t=4.0, n=6, k=3, calibration_trials=10_000, threads=None):
    inst = small_lp_instance(seed, n=n, p=p)
    fam = sketch.lp_sampler(n, k, p)
    cal = calibrate_lp(inst, fam, calibration_trials, seed)
    g = bounds.lp_probabilistic_bound(cal.alpha, cal.rho, p, t)
    preset = ExperimentPreset("lp-probabilistic", fam, "lp", inst, alpha=cal.alpha)
    trials = run_trials(preset, N, seed, threads)
    rep = verify_probability(trials, g.holds(trials.ratio, LP_SOLVER_RTOL), g.success_prob, "at_least", g)
    return TheoremOutcome(
        "lp-probabilistic",
        {"p": p, "t": t, "n": n, "k": k},
        {"bound": rep},
        trials,
        {},
        {"alpha_hat": cal.alpha, "rho_hat": cal.rho},
    )


THEOREMS = {
    "ls-counterexample": theorem_ls_counterexample,
    "ls-stronger": theorem_ls_stronger,
    "ls-rescue": theorem_ls_rescue,
    "ose-from-osi": theorem_ose_from_osi,
    "osi-sharpness": theorem_osi_sharpness,
    "rsvd-counterexample": theorem_rsvd_counterexample,
    "rsvd-rescue": theorem_rsvd_rescue,
    "lp-deterministic": theorem_lp_deterministic,
    "lp-probabilistic": theorem_lp_probabilistic,
}


def run_theorem(name, N, seed, threads=None, **params):
    try:
        fn = THEOREMS[name]
    except KeyError:
        raise UnknownPreset(name) from None
    return fn(N, seed, threads=threads, **params)


# ---------------------------------------------------------------- figures


def percentile_summary(x, seed, n_boot=200):
    x = np.asarray(x)
    st = CounterStream([derive_seed(seed, 3, INSTANCE_SALT)])
    idx = st.integers(len(x), n_boot * len(x)).reshape(n_boot, len(x))
    boot = np.median(x[idx], axis=1)
    p10, med, p90 = np.percentile(x, [10, 50, 90])
    return {"median": med, "p10": p10, "p90": p90, "median_boot_sd": float(np.std(boot))}


def histogram(samples, bins=60):
    hi = max(float(np.max(v)) for v in samples.values())
    lo = min(float(np.min(v)) for v in samples.values())
    edges = np.linspace(lo, hi, bins + 1)
    return edges, {key: np.histogram(v, edges)[0] for key, v in samples.items()}


@dataclass
class FigureData:
    name: str
    columns: list
    rows: list
    summary: dict
    checks: dict

    @property
    def passed(self):
        return all(self.checks.values())


def figure_fig1(N=100, seed=0, threads=None):
    """Fixed-budget OSE vs OSI comparison (fig1-style: Gaussian is the only OSE)."""
    ls = fig1_ls_instance(seed)
    lr = fig1_rsvd_instance(seed)
    n, d = ls.A.shape
    k_ls, k_lr = 256, lr.r + 5
    panels = [
        ("least_squares", "ls", ls, [
            ("gaussian", sketch.gaussian(n, k_ls)),
            ("sparse_signed", sketch.sparse_signed(n, k_ls)),
            ("row_sampler", sketch.lp_sampler(n, k_ls, 2.0)),
        ]),
        ("randomized_svd", "rsvd", lr, [
            ("gaussian", sketch.gaussian(lr.A.shape[1], k_lr)),
            ("sparse_signed", sketch.sparse_signed(lr.A.shape[1], k_lr)),
            ("row_sampler", sketch.lp_sampler(lr.A.shape[1], k_lr, 2.0)),
        ]),
    ]
    rows, summary = [], {}
    for panel, kind, inst, methods in panels:
        for label, fam in methods:
            trials = run_trials(ExperimentPreset(f"fig1-{panel}", fam, kind, inst), N, seed, threads)
            stats = percentile_summary(trials.ratio, seed)
            summary[f"{panel}/{label}"] = stats
            rows.append([panel, label, stats["median"], stats["p10"], stats["p90"], stats["median_boot_sd"]])
    checks = {"all_medians_below_2": all(s["median"] < 2 for s in summary.values())}
    cols = ["panel", "method", "median", "p10", "p90", "median_boot_sd"]
    return FigureData("fig1", cols, rows, summary, checks)


def _histogram_figure(name, samples, summary, checks):
    edges, counts = histogram(samples)
    keys = list(samples)
    rows = [[edges[i], edges[i + 1], *(int(counts[key][i]) for key in keys)] for i in range(len(edges) - 1)]
    return FigureData(name, ["bin_left", "bin_right", *keys], rows, summary, checks)


def figure_fig2(N=10_000, seed=0, alpha=0.5, gaussian_k=20, threads=None):
    """LS ratio on the toy problem: Gaussian vs ``expo_rank_one``."""
    inst = toy_ls_instance()
    ose = run_trials(ExperimentPreset("fig2-ose", sketch.gaussian(2, gaussian_k), "ls", inst), N, seed, threads)
    osi = run_trials(ExperimentPreset("fig2-osi", sketch.expo_rank_one(alpha), "ls", inst), N, seed, threads)
    q_ose, q_osi = np.percentile(ose.ratio, 99), np.percentile(osi.ratio, 99)
    summary = {"ose_p99": q_ose, "osi_p99": q_osi, "gaussian_k": gaussian_k, "alpha": alpha}
    return _histogram_figure(
        "fig2", {"ose": ose.ratio, "osi": osi.ratio}, summary, {"osi_heavier_tail": bool(q_osi > q_ose)}
    )


def figure_fig3(N=10_000, seed=0, tau=0.2, size=30, threads=None):
    """rSVD ratio on ``diag(1, tau, ..., tau)``: one Gaussian vs one sparse signed vector."""
    inst = diag_instance(tau, size)
    ose = run_trials(ExperimentPreset("fig3-ose", sketch.gaussian(size, 1), "rsvd", inst), N, seed, threads)
    osi = run_trials(ExperimentPreset("fig3-osi", sketch.sparse_signed(size, 1), "rsvd", inst), N, seed, threads)
    mass = float(np.mean(osi.ratio > 1.3))
    summary = {"osi_mass_above_1.3": mass, "ose_mass_above_1.3": float(np.mean(ose.ratio > 1.3))}
    return _histogram_figure(
        "fig3", {"ose": ose.ratio, "osi": osi.ratio}, summary, {"bimodal_mass_near_half": 0.48 <= mass <= 0.52}
    )


FIGURES = {"fig1": figure_fig1, "fig2": figure_fig2, "fig3": figure_fig3}


def run_figure(name, N=None, seed=0, threads=None):
    try:
        fn = FIGURES[name]
    except KeyError:
        raise UnknownPreset(name) from None
    kwargs = {"seed": seed, "threads": threads}
    if N is not None:
        kwargs["N"] = N
    return fn(**kwargs)
