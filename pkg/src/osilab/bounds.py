"""Closed-form guarantees for OSI sketches.

Least-squares and rSVD bounds control *squared* error ratios; the l_p bounds
control unsquared ones. :class:`Guarantee` carries that distinction in
``squared`` and :meth:`Guarantee.holds` applies it.
"""
import math
from dataclasses import dataclass

from .errors import BadParams, BadTau


@dataclass(frozen=True)
class OSEParams:
    s: int
    alpha: float
    beta: float
    rho: float

    def __post_init__(self):
        if not 0 < self.alpha <= self.beta:
            raise BadParams("need 0 < alpha <= beta")
        if not 0 <= self.rho < 1:
            raise BadParams("rho must lie in [0, 1)")


@dataclass(frozen=True)
class Guarantee:
    factor: float
    success_prob: float
    squared: bool

    def __post_init__(self):
        if not self.factor >= 1:
            raise BadParams(f"factor must be >= 1, got {self.factor}")
        if not 0 < self.success_prob <= 1:
            raise BadParams(f"success probability must lie in (0, 1], got {self.success_prob}")

    def holds(self, ratio, rtol=0.0):
        """Whether an (unsquared) error ratio satisfies the bound."""
        value = ratio * ratio if self.squared else ratio
        return value <= self.factor * (1 + rtol)


def implied_ose(s, alpha, rho, tau):
    """OSE parameters implied by an ``(s, alpha, rho)``-OSI via Markov's inequality."""
    if not 0 < alpha <= 1 or not 0 <= rho < 1 or s < 1:
        raise BadParams("invalid OSI parameters")
    if not 0 < tau < 1 - rho:
        raise BadTau(f"need 0 < tau < 1 - rho = {1 - rho}, got {tau}")
    beta = alpha + s * (1 - alpha + alpha * rho) / tau
    return OSEParams(s, alpha, beta, rho + tau)


def ose_relative_factor(alpha, beta):
    if not 0 < alpha <= beta:
        raise BadParams("need 0 < alpha <= beta")
    return math.sqrt(beta / alpha)


def ls_relative_bound(alpha, delta, eta):
    """Squared-residual factor when injectivity holds on ``span(range(A), b)``."""
    if not 0 < alpha <= 1 or delta < 0 or not 0 < eta < 1 or not delta + eta < 1:
        raise BadParams("need alpha in (0,1], delta >= 0, eta in (0,1), delta + eta < 1")
    factor = 1 + (1 - alpha + alpha * delta) / (4 * alpha * eta)
    return Guarantee(factor, 1 - delta - eta, squared=True)


def rsvd_relative_bound(alpha, rho, q_minus_r, eta):
    """Squared-Frobenius factor for an ``(r+1, alpha, rho)``-OSI (union over tail directions)."""
    delta = q_minus_r * rho
    if not 0 < alpha <= 1 or rho < 0 or q_minus_r < 1 or not 0 < eta < 1:
        raise BadParams("need alpha in (0,1], rho >= 0, q - r >= 1, eta in (0,1)")
    if not delta < 1 or not delta + eta < 1:
        raise BadParams(f"need (q-r)*rho + eta < 1, got {delta + eta}")
    factor = 1 + (1 - alpha + alpha * delta) / (4 * alpha * eta)
    return Guarantee(factor, 1 - delta - eta, squared=True)


def lp_deterministic_bound(alpha, beta, p):
    if not alpha > 0 or not beta >= 0 or not 1 <= p < math.inf:
        raise BadParams("need alpha > 0, beta >= 0, 1 <= p < inf")
    return Guarantee(1 + 2 * (beta / alpha) ** (1 / p), 1.0, squared=False)


def lp_probabilistic_bound(alpha, rho, p, t):
    if not 0 < alpha <= 1 or not 0 <= rho < 1 or not 1 <= p < math.inf:
        raise BadParams("need alpha in (0,1], rho in [0,1), 1 <= p < inf")
    if not t >= 1 or not rho + 1 / t < 1:
        raise BadParams(f"need t >= 1 and rho + 1/t < 1 (t={t}, rho={rho})")
    return Guarantee(1 + 2 * (t / alpha) ** (1 / p), 1 - rho - 1 / t, squared=False)


def lp_probabilistic_bound_delta(alpha, delta, p, rho=0.0):
    """The ``t = 2/delta`` specialization, valid when ``rho <= delta/2``."""
    if not 0 < delta < 1:
        raise BadParams("delta must lie in (0, 1)")
    if rho > delta / 2:
        raise BadParams("need rho <= delta/2")
    g = lp_probabilistic_bound(alpha, rho, p, 2 / delta)
    return Guarantee(g.factor, 1 - delta, squared=False)
