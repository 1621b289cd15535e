"""Seeded trial harness and verdicts on probability claims.

Trial ``i`` of a run with master seed ``m`` draws its sketch from
``derive_seed(m, i)``. Trials are evaluated in fixed-size chunks whose
boundaries depend only on the sketch shape, so results are bit-identical
for any thread count.
"""
import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import linalg
from .bounds import Guarantee, rsvd_relative_bound
from .errors import BadParams, RankDeficient, TooFewTrials
from .estimators import lp_sketch_and_solve, rangefinder_rsvd, sketch_and_solve_ls
from .rng import derive_seeds
from .sketch import INJECTIVITY_SLACK, SketchFamily, chunk_size, injectivity_held

KINDS = ("ls", "rsvd", "lp", "spectrum")
SIGMA_SLACK = 3.0
MIN_TRIALS = 1000


@dataclass
class TrialRecord:
    trial_index: int
    seed: int
    ratio: float
    injectivity_held: bool
    branch_label: Optional[int] = None
    aux: dict = field(default_factory=dict)


class TrialSet:
    """Column store of trial results; indexing yields :class:`TrialRecord`."""

    def __init__(self, index, seeds, ratio, injectivity_held, branch_label, aux=None):
        self.index = np.asarray(index, dtype=np.int64)
        self.seeds = np.asarray(seeds, dtype=np.uint64)
        self.ratio = np.asarray(ratio, dtype=np.float64)
        self.injectivity_held = np.asarray(injectivity_held, dtype=bool)
        self.branch_label = np.asarray(branch_label, dtype=np.int64)
        self.aux = {key: np.asarray(val, dtype=np.float64) for key, val in (aux or {}).items()}

    def __len__(self):
        return len(self.ratio)

    def __getitem__(self, i):
        label = int(self.branch_label[i])
        return TrialRecord(
            int(self.index[i]),
            int(self.seeds[i]),
            float(self.ratio[i]),
            bool(self.injectivity_held[i]),
            None if label < 0 else label,
            {key: float(val[i]) for key, val in self.aux.items()},
        )

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    @classmethod
    def concat(cls, parts):
        keys = parts[0].aux.keys()
        return cls(
            np.concatenate([p.index for p in parts]),
            np.concatenate([p.seeds for p in parts]),
            np.concatenate([p.ratio for p in parts]),
            np.concatenate([p.injectivity_held for p in parts]),
            np.concatenate([p.branch_label for p in parts]),
            {key: np.concatenate([p.aux[key] for p in parts]) for key in keys},
        )

    def columns(self):
        return ["trial_index", "seed", "ratio", "injectivity_held", "branch_label", *sorted(self.aux)]

    def rows(self):
        keys = sorted(self.aux)
        for i in range(len(self)):
            label = int(self.branch_label[i])
            yield [
                str(int(self.index[i])),
                str(int(self.seeds[i])),
                f"{self.ratio[i]:.17g}",
                str(int(self.injectivity_held[i])),
                "" if label < 0 else str(label),
                *(f"{self.aux[key][i]:.17g}" for key in keys),
            ]

    def to_csv(self, fh=None):
        """Write CSV to ``fh`` (or return it as a string)."""
        out = io.StringIO() if fh is None else fh
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(self.columns())
        writer.writerows(self.rows())
        return out.getvalue() if fh is None else None

    def to_json(self):
        cols = self.columns()
        return json.dumps([dict(zip(cols, row)) for row in self.rows()])

    @classmethod
    def from_csv(cls, text):
        reader = csv.reader(io.StringIO(text))
        header = next(reader)
        rows = list(reader)
        cols = {name: [row[j] for row in rows] for j, name in enumerate(header)}
        aux = {key: [float(v) for v in cols[key]] for key in header[5:]}
        return cls(
            [int(v) for v in cols["trial_index"]],
            np.array([int(v) for v in cols["seed"]], dtype=np.uint64),
            [float(v) for v in cols["ratio"]],
            [v == "1" for v in cols["injectivity_held"]],
            [int(v) if v else -1 for v in cols["branch_label"]],
            aux,
        )


@dataclass(eq=False)
class ExperimentPreset:
    """A family, a problem instance and how to score each draw.

    ``kind`` selects the estimator: ``ls``, ``rsvd``, ``lp``, or
    ``spectrum`` (eigenvalues of ``Omega Omega^T``, no estimator).
    ``subspace`` and ``alpha`` define the injectivity flag; for ``rsvd``
    with ``alpha`` set the flag is the simultaneous event over the
    augmented spaces ``span(V_1, v_j)``.
    """

    name: str
    family: SketchFamily
    kind: str
    instance: object = None
    subspace: Optional[np.ndarray] = None
    alpha: Optional[float] = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise BadParams(f"unknown preset kind {self.kind!r}")


# ---------------------------------------------------------------- per-chunk scoring


def tail_injectivity_stats(inst, Omegas):
    """``lambda_min`` of the Gram matrix on ``span(V_1, v_j)``, j = r+1..q.

    Returns an array of shape ``(N, q - r)`` for a stack of sketches.
    """
    r, q = inst.r, inst.rank
    V = inst.factors.V
    W1 = np.einsum("di,ndk->nik", V[:, :r], Omegas)
    W2 = np.einsum("dj,ndk->njk", V[:, r:q], Omegas)
    M = W1 @ np.swapaxes(W1, -1, -2)
    g = W2 @ np.swapaxes(W1, -1, -2)
    t = np.sum(W2 * W2, axis=-1)
    N, m = t.shape
    G = np.empty((N, m, r + 1, r + 1))
    G[:, :, :r, :r] = M[:, None]
    G[:, :, :r, r] = g
    G[:, :, r, :r] = g
    G[:, :, r, r] = t
    return np.linalg.eigvalsh(G)[..., 0]


def lp_injectivity_stat(A, Omegas, p):
    """``||Omega^T a||_p^p / ||a||_p^p`` for a single-column ``A``.

    On a one-dimensional subspace this ratio is the same for every vector,
    so it is the exact injectivity statistic.
    """
    a = np.asarray(A, dtype=np.float64).reshape(-1)
    if np.asarray(A).ndim == 2 and np.asarray(A).shape[1] != 1:
        raise BadParams("exact l_p injectivity statistic needs a single column")
    num = np.sum(np.abs(np.einsum("nik,i->nk", Omegas, a)) ** p, axis=-1)
    return num / np.sum(np.abs(a) ** p)


def _score_ls(preset, Om):
    inst = preset.instance
    res = sketch_and_solve_ls(inst, Om)
    aux = {"rank_deficient": res.rank_deficient.astype(float)}
    basis = inst.residual_basis
    if basis.shape[1] > inst.A.shape[1]:
        y = basis[:, -1]
        aux["t"] = np.sum(np.einsum("i,nik->nk", y, Om) ** 2, axis=-1)
    held = np.ones(len(Om), dtype=bool)
    if preset.alpha is not None:
        U = preset.subspace if preset.subspace is not None else basis
        held = injectivity_held(U, Om, preset.alpha)
    return res.ratio, held, aux


def _score_rsvd(preset, Om):
    res = rangefinder_rsvd(preset.instance, Om)
    held = np.ones(len(Om), dtype=bool)
    aux = {}
    if preset.alpha is not None:
        if preset.subspace is not None:
            held = injectivity_held(preset.subspace, Om, preset.alpha)
        else:
            stat = tail_injectivity_stats(preset.instance, Om).min(axis=-1)
            held = stat >= preset.alpha - INJECTIVITY_SLACK
            aux["min_tail_eig"] = stat
    return res.ratio, held, aux


def _score_lp(preset, Om):
    inst = preset.instance
    ratio = np.array([lp_sketch_and_solve(inst, O).ratio for O in Om])
    r_star = inst.A @ inst.x_star - inst.b
    r_norm = np.sum(np.abs(r_star) ** inst.p)
    beta = np.sum(np.abs(np.einsum("nik,i->nk", Om, r_star)) ** inst.p, axis=-1) / r_norm
    aux = {"beta_stat": beta}
    held = np.ones(len(Om), dtype=bool)
    if inst.A.shape[1] == 1:
        stat = lp_injectivity_stat(inst.A, Om, inst.p)
        aux["inj_stat"] = stat
        if preset.alpha is not None:
            held = stat >= preset.alpha - INJECTIVITY_SLACK
    return ratio, held, aux


def _score_spectrum(preset, Om):
    lam = np.linalg.eigvalsh(Om @ np.swapaxes(Om, -1, -2))
    held = np.ones(len(Om), dtype=bool)
    if preset.alpha is not None:
        if preset.subspace is not None:
            held = injectivity_held(preset.subspace, Om, preset.alpha)
        else:
            held = lam[:, 0] >= preset.alpha - INJECTIVITY_SLACK
    return lam[:, -1], held, {"lambda_min": lam[:, 0], "lambda_max": lam[:, -1]}


_SCORERS = {"ls": _score_ls, "rsvd": _score_rsvd, "lp": _score_lp, "spectrum": _score_spectrum}


def _run_chunk(preset, start, stop, master_seed, salt):
    idx = np.arange(start, stop)
    seeds = derive_seeds(master_seed, idx, salt)
    Om, labels = preset.family.sample(seeds)
    ratio, held, aux = _SCORERS[preset.kind](preset, Om)
    return TrialSet(idx, seeds, ratio, held, labels, aux)


def run_trials(preset, N, master_seed, threads=None, salt=0):
    """Run ``N`` independent trials of ``preset``; returns a :class:`TrialSet`."""
    if N < 1:
        raise BadParams("need N >= 1")
    fam = preset.family
    step = chunk_size(fam.n, fam.k, budget=2**20)
    if preset.kind == "rsvd":
        m = preset.instance.A.shape[0]
        step = max(1, min(step, 2**22 // (m * fam.k + m * preset.instance.A.shape[1])))
    starts = range(0, N, step)
    job = lambda s: _run_chunk(preset, s, min(N, s + step), master_seed, salt)  # noqa: E731
    if threads == 1 or len(starts) == 1:
        parts = [job(s) for s in starts]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(job, starts))
    return TrialSet.concat(parts)


# ---------------------------------------------------------------- verdicts


@dataclass
class BoundReport:
    claimed: float
    empirical: float
    std_error: float
    direction: str
    verdict: str
    n_trials: int
    bound: Optional[Guarantee] = None

    @property
    def consistent(self):
        return self.verdict == "consistent"

    @property
    def empirical_violation_rate(self):
        return 1.0 - self.empirical

    @property
    def allowed_failure(self):
        return 1.0 - self.claimed

    def to_dict(self):
        out = {
            "claimed": self.claimed,
            "empirical": self.empirical,
            "std_error": self.std_error,
            "direction": self.direction,
            "verdict": self.verdict,
            "N": self.n_trials,
        }
        if self.bound is not None:
            out["bound"] = {
                "factor": self.bound.factor,
                "success_prob": self.bound.success_prob,
                "squared": self.bound.squared,
            }
        return out


def verify_probability(records, predicate, claimed_prob, direction, bound=None):
    """Compare the frequency of ``predicate`` with a claimed probability.

    ``predicate`` is a boolean array over trials or a callable taking the
    :class:`TrialSet` and returning one. ``direction`` is ``at_least``,
    ``at_most`` or ``equals``; the claim is violated when the frequency
    misses it by more than three binomial standard errors.
    """
    event = np.asarray(predicate(records) if callable(predicate) else predicate, dtype=bool)
    N = event.size
    if N < MIN_TRIALS:
        raise TooFewTrials(f"need at least {MIN_TRIALS} trials, got {N}")
    p_hat = float(event.mean())
    se = math.sqrt(p_hat * (1 - p_hat) / N)
    slack = SIGMA_SLACK * se + 1e-12
    if direction == "at_least":
        bad = p_hat < claimed_prob - slack
    elif direction == "at_most":
        bad = p_hat > claimed_prob + slack
    elif direction == "equals":
        bad = abs(p_hat - claimed_prob) > slack
    else:
        raise BadParams(f"unknown direction {direction!r}")
    return BoundReport(
        float(claimed_prob), p_hat, se, direction, "violated" if bad else "consistent", N, bound
    )


def verify_rsvd_bound(records, alpha, rho, q_minus_r, eta):
    """Check the union-bound rSVD guarantee on squared Frobenius ratios."""
    g = rsvd_relative_bound(alpha, rho, q_minus_r, eta)
    return verify_probability(records, g.holds(records.ratio), g.success_prob, "at_least", g)


# ---------------------------------------------------------------- deflation and calibration


def deflation_sides(inst, Omega):
    """``(||A - A_tilde||_F^2, ||S_2||_F^2 + ||S_2 O_2 O_1^+||_F^2)``.

    The left side comes from the rangefinder projector, the right side from
    the SVD partition of ``A`` alone.
    """
    lhs = (rangefinder_rsvd(inst, Omega).ratio * inst.tail_frob) ** 2
    (_, _, V1), (_, s2, V2) = inst.factors.partition(inst.r)
    O1, O2 = V1.T @ Omega, V2.T @ Omega
    if linalg.numerical_rank(O1) < inst.r:
        raise RankDeficient("V_1^T Omega does not have full row rank")
    cross = s2[:, None] * (O2 @ linalg.pinv(O1))
    tail = float(np.sum(s2 * s2))
    return lhs, tail + float(np.sum(cross * cross))


def deflation_identity_check(inst, Omega):
    """``max(0, lhs - rhs)`` for the deflation inequality."""
    lhs, rhs = deflation_sides(inst, Omega)
    return max(0.0, lhs - rhs)


@dataclass(frozen=True)
class Calibration:
    """Empirical injectivity level and failure rate from a calibration run.

    An estimate, not a certificate.
    """

    alpha: float
    rho: float
    n_trials: int


def calibrate(stats, quantile=0.01, per_subspace=None):
    """Set ``alpha`` to the ``quantile`` of ``stats`` and measure ``rho``.

    ``stats`` is the per-draw simultaneous statistic. If ``per_subspace``
    (shape ``(N, m)``) is given, ``rho`` is the largest failure frequency
    over its columns; otherwise the failure frequency of ``stats`` itself.
    """
    stats = np.asarray(stats, dtype=np.float64)
    alpha = float(min(1.0, np.quantile(stats, quantile)))
    if not alpha > 0:
        raise BadParams("calibrated alpha is not positive")
    src = stats[:, None] if per_subspace is None else np.asarray(per_subspace)
    rho = float(np.max(np.mean(src < alpha - INJECTIVITY_SLACK, axis=0)))
    return Calibration(alpha, rho, len(stats))
