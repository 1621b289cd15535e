"""Sketched estimators: least squares, rangefinder rSVD, and l_p regression.

``sketch_and_solve_ls`` and ``rangefinder_rsvd`` accept either one sketch
``(n, k)`` or a stack ``(N, n, k)`` and then return arrays over the stack.
"""
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple
import warnings

import numpy as np
import scipy.linalg

from . import linalg
from .errors import BadExponent, BadParams, NoConvergence, RankDeficient

EXACT_FIT_RTOL = 1e-12


@dataclass(eq=False)
class LSInstance:
    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.A = linalg.as_matrix(self.A)
        self.b = np.asarray(self.b, dtype=np.float64).ravel()
        n, d = self.A.shape
        if not n > d >= 1:
            raise BadParams(f"need n > d >= 1, got {n}x{d}")
        if self.b.shape != (n,):
            raise BadParams("b must have length n")

    @cached_property
    def optimum(self):
        return linalg.lstsq_exact(self.A, self.b)

    @cached_property
    def residual_basis(self):
        """Orthonormal ``[Q y]`` spanning ``span(range(A), b)``."""
        Q, _ = linalg.qr_reduced(self.A)
        r = self.b - Q @ (Q.T @ self.b)
        nr = np.linalg.norm(r)
        if nr <= EXACT_FIT_RTOL * max(np.linalg.norm(self.b), 1.0):
            return Q
        return np.hstack([Q, (r / nr)[:, None]])


@dataclass(eq=False)
class LowRankInstance:
    A: np.ndarray
    r: int

    def __post_init__(self):
        self.A = linalg.as_matrix(self.A)
        rank = linalg.numerical_rank(self.A)
        if not 1 <= self.r < rank:
            raise BadParams(f"need 1 <= r < rank(A) = {rank}, got r = {self.r}")

    @cached_property
    def factors(self):
        return linalg.svd(self.A)

    @cached_property
    def rank(self):
        return linalg.numerical_rank(self.A)

    @cached_property
    def tail_frob(self):
        return linalg.best_rank_r(self.A, self.r).tail_frob


@dataclass(eq=False)
class LpInstance:
    A: np.ndarray
    b: np.ndarray
    p: float

    def __post_init__(self):
        self.A = linalg.as_matrix(self.A)
        self.b = np.asarray(self.b, dtype=np.float64).ravel()
        n, d = self.A.shape
        if not n > d >= 1:
            raise BadParams(f"need n > d >= 1, got {n}x{d}")
        if not 1 <= self.p < np.inf:
            raise BadExponent(f"p must be finite and >= 1, got {self.p}")

    @cached_property
    def x_star(self):
        return lp_regress(self.A, self.b, self.p)

    @cached_property
    def opt_value(self):
        return linalg.lp_norm(self.A @ self.x_star - self.b, self.p)


class LSResult(NamedTuple):
    x_tilde: np.ndarray
    ratio: object
    rank_deficient: object
    exact_fit_missed: object


class RSVDResult(NamedTuple):
    A_tilde: np.ndarray
    ratio: object


class LpResult(NamedTuple):
    x_tilde: np.ndarray
    ratio: float
    exact_fit_missed: bool


def _solve_sketched(SA, Sb):
    """Batched ``argmin ||SA x - Sb||`` with a pinv fallback for rank loss."""
    N, k, d = SA.shape
    x = np.empty((N, d))
    bad = np.ones(N, dtype=bool)
    if k >= d:
        Q, R = linalg._signed_qr(SA)
        ok = linalg.full_column_rank(R)
        if ok.any():
            rhs = np.einsum("nkd,nk->nd", Q[ok], Sb[ok])
            x[ok] = np.linalg.solve(R[ok], rhs[..., None])[..., 0]
        bad = ~ok
    if bad.any():
        x[bad] = np.einsum("ndk,nk->nd", linalg.pinv(SA[bad]), Sb[bad])
    return x, bad


def sketch_and_solve_ls(inst, Omega):
    """Minimize ``||Omega^T (A x - b)||_2`` and compare against the true optimum.

    ``ratio = ||A x_tilde - b|| / ||A x_star - b||``. When ``b`` lies in
    ``range(A)`` the ratio is 1 if the sketch recovers ``x_star`` and NaN with
    ``exact_fit_missed`` set otherwise.
    """
    Omega = np.asarray(Omega, dtype=np.float64)
    single = Omega.ndim == 2
    Om = Omega[None] if single else Omega
    if Om.shape[1] != inst.A.shape[0]:
        raise BadParams("Omega must have n rows")
    OmT = np.swapaxes(Om, -1, -2)
    x, bad = _solve_sketched(OmT @ inst.A, OmT @ inst.b)
    res = np.linalg.norm(x @ inst.A.T - inst.b, axis=-1)
    x_star, opt = inst.optimum
    missed = np.zeros(len(x), dtype=bool)
    if opt > EXACT_FIT_RTOL * max(np.linalg.norm(inst.b), 1.0):
        ratio = res / opt
    else:
        scale = max(np.linalg.norm(inst.b), 1.0)
        missed = res > 1e-9 * scale
        ratio = np.where(missed, np.nan, 1.0)
    if single:
        return LSResult(x[0], float(ratio[0]), bool(bad[0]), bool(missed[0]))
    return LSResult(x, ratio, bad, missed)


def rangefinder_rsvd(inst, Omega):
    """``A_tilde = (A Omega)(A Omega)^+ A`` and ``||A - A_tilde||_F / ||A - A_r||_F``."""
    Omega = np.asarray(Omega, dtype=np.float64)
    if Omega.shape[-2] != inst.A.shape[1]:
        raise BadParams("Omega must have d rows")
    if Omega.shape[-1] < 1:
        raise BadParams("need k >= 1")
    Y = inst.A @ Omega
    A_tilde = Y @ (linalg.pinv(Y) @ inst.A)
    err = np.linalg.norm(inst.A - A_tilde, axis=(-2, -1))
    ratio = err / inst.tail_frob
    return RSVDResult(A_tilde, float(ratio) if np.ndim(ratio) == 0 else ratio)


# ---------------------------------------------------------------- l_p regression

MU_START = 1e-4
MU_STOP = 1e-12
MAX_ITER = 500
REL_DECREASE = 1e-10


def _smoothed(r, p, mu):
    return np.sum((r * r + mu) ** (p / 2))


def _true_obj(r, p):
    return np.sum(np.abs(r) ** p)


def _weighted_ls(A, c, w):
    """``argmin_x sum w_i (a_i^T x - c_i)^2``."""
    sw = np.sqrt(w)
    return scipy.linalg.lstsq(A * sw[:, None], c * sw, lapack_driver="gelsy")[0]


def _vertex_polish(A, b, x):
    """Interpolate the ``d`` rows with the smallest residuals.

    Optimal l_1 fits pass through ``d`` data rows, which smoothing only
    approaches at rate ``sqrt(mu)``.
    """
    d = A.shape[1]
    rows = np.argsort(np.abs(A @ x - b))[:d]
    try:
        return np.linalg.solve(A[rows], b[rows])
    except np.linalg.LinAlgError:
        return None


def _backtrack(A, b, p, mu, x, f, direction):
    step = 1.0
    for _ in range(60):
        x_new = x + step * direction
        f_new = _smoothed(A @ x_new - b, p, mu)
        if f_new < f:
            return x_new, f_new
        step *= 0.5
    return x, f


def lp_regress(A, b, p, strict=False):
    """Minimize ``||A x - b||_p`` by IRLS with smoothing continuation.

    Stage ``mu`` minimizes ``sum (r_i^2 + mu)^{p/2}``; ``mu`` decreases
    geometrically from 1e-4 to 1e-12 and a stage ends once the relative
    decrease falls below 1e-10. Each iteration is a weighted least-squares
    solve with the Newton weights of the smoothed objective,
    ``p (r^2 + mu)^{p/2-2} ((p-1) r^2 + mu)``, backtracked until the objective
    drops; if that fails the classical weights ``(r^2 + mu)^{(p-2)/2}`` are
    tried. For ``p < 2`` the result is compared against the vertex through
    the ``d`` smallest residuals.

    Hitting the 500-iteration cap warns (or raises NoConvergence with
    ``strict=True``) and returns the best iterate.
    """
    A = linalg.as_matrix(A)
    b = np.asarray(b, dtype=np.float64).ravel()
    if not 1 <= p < np.inf:
        raise BadExponent(f"p must be finite and >= 1, got {p}")
    x = linalg.lstsq_exact(A, b).x_star
    if p == 2:
        return x
    n_iter = 0
    capped = False
    for mu in np.geomspace(MU_START, MU_STOP, 9):
        f = _smoothed(A @ x - b, p, mu)
        while not capped:
            if n_iter >= MAX_ITER:
                capped = True
                break
            n_iter += 1
            r = A @ x - b
            s = r * r + mu
            grad_w = p * s ** (p / 2 - 1)
            hess_w = p * s ** (p / 2 - 2) * ((p - 1) * r * r + mu)
            newton = -_weighted_ls(A, grad_w * r / hess_w, hess_w)
            x_new, f_new = _backtrack(A, b, p, mu, x, f, newton)
            if f_new >= f:
                mm = _weighted_ls(A, b, s ** ((p - 2) / 2)) - x
                x_new, f_new = _backtrack(A, b, p, mu, x, f, mm)
            decrease = (f - f_new) / max(f, np.finfo(float).tiny)
            x, f = x_new, f_new
            if decrease < REL_DECREASE:
                break
    best, best_obj = x, _true_obj(A @ x - b, p)
    if p < 2:
        cand = _vertex_polish(A, b, x)
        if cand is not None:
            obj = _true_obj(A @ cand - b, p)
            if obj < best_obj:
                best, best_obj = cand, obj
    if capped:
        msg = f"IRLS hit the {MAX_ITER}-iteration cap"
        if strict:
            raise NoConvergence(msg, best=best)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    return best


def lp_sketch_and_solve(inst, Omega):
    """``argmin ||Omega^T (A x - b)||_p`` and its l_p error ratio."""
    Omega = np.asarray(Omega, dtype=np.float64)
    if Omega.shape[0] != inst.A.shape[0]:
        raise BadParams("Omega must have n rows")
    SA, Sb = Omega.T @ inst.A, Omega.T @ inst.b
    try:
        x = lp_regress(SA, Sb, inst.p)
    except RankDeficient:
        x = linalg.pinv(SA) @ Sb
    res = linalg.lp_norm(inst.A @ x - inst.b, inst.p)
    opt = inst.opt_value
    scale = max(linalg.lp_norm(inst.b, inst.p), 1.0)
    if opt > EXACT_FIT_RTOL * scale:
        return LpResult(x, res / opt, False)
    missed = res > 1e-9 * scale
    return LpResult(x, float("nan") if missed else 1.0, bool(missed))
