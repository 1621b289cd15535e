"""Sketch-matrix distributions with declared OSI parameters.

A :class:`SketchFamily` is a named distribution over ``n x k`` matrices.
Draws are pure functions of ``(family, seed)``: ``family.sample(seeds)``
returns a stack of matrices, one per seed, and ``family.draw(seed)`` is the
same computation for a single seed.
"""
import itertools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import linalg
from .errors import BadParams
from .rng import CounterStream, as_seeds, derive_seeds

INJECTIVITY_SLACK = 1e-12
SQRT_CLAMP = 1e-12
MAX_BRANCHES = 6561


@dataclass(frozen=True)
class OSIParams:
    """Declared ``(s, alpha, rho)``-OSI parameters; ``p`` set for OSI_p."""

    s: int
    alpha: float
    rho: float
    p: Optional[float] = None

    def __post_init__(self):
        if self.s < 1:
            raise BadParams("s must be >= 1")
        if not 0 < self.alpha <= 1:
            raise BadParams("alpha must lie in (0, 1]")
        if not 0 <= self.rho < 1:
            raise BadParams("rho must lie in [0, 1)")
        if self.p is not None and not 1 <= self.p < math.inf:
            raise BadParams("p must be finite and >= 1")


@dataclass(frozen=True)
class SketchFamily:
    name: str
    n: int
    k: int
    params: dict = field(default_factory=dict)
    declared: Optional[OSIParams] = None
    p: Optional[float] = None

    @property
    def labels(self):
        return _FAMILIES[self.name].labels

    def sample(self, seeds):
        """Draw one matrix per seed.

        Returns ``(Omegas, labels)`` with ``Omegas`` of shape ``(N, n, k)``
        and integer branch labels (``-1`` where the family has no small
        branch set).
        """
        stream = CounterStream(seeds)
        Om, lab = _FAMILIES[self.name].sampler(self, stream, len(stream.seeds))
        return Om, lab

    def draw(self, seed):
        return self.sample([seed])[0][0]

    def draw_labeled(self, seed):
        Om, lab = self.sample([seed])
        return Om[0], int(lab[0])

    def branches(self):
        """Exact ``[(prob, Omega, label), ...]`` for finite mixtures."""
        spec = _FAMILIES[self.name]
        if spec.branches is None:
            raise BadParams(f"{self.name} is not a finite mixture")
        return spec.branches(self)

    def to_config(self, seed=None):
        lines = [f"name = {self.name}", f"n = {self.n}", f"k = {self.k}"]
        lines += [f"{key} = {val!r}" for key, val in self.params.items()]
        if seed is not None:
            lines.append(f"seed = {int(seed)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_config(cls, text):
        """Parse ``key = value`` lines; returns ``(family, seed or None)``."""
        kv = {}
        for line in text.splitlines():
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, _, val = line.partition("=")
            kv[key.strip()] = val.strip()
        name = kv.pop("name")
        seed = int(kv.pop("seed")) if "seed" in kv else None
        if name not in _FAMILIES:
            raise BadParams(f"unknown sketch family {name!r}")
        n, k = int(kv.pop("n")), int(kv.pop("k"))
        params = {key: _parse_number(v) for key, v in kv.items()}
        fam = make_family(name, **{**_shape_args(name, n, k), **params})
        if (fam.n, fam.k) != (n, k):
            raise BadParams(f"config shape {n}x{k} does not match {name}")
        return fam, seed


def _parse_number(text):
    try:
        return int(text)
    except ValueError:
        return float(text)


def _shape_args(name, n, k):
    return {"n": n, "k": k} if name in ("gaussian", "sparse_signed", "lp_sampler") else {}


@dataclass(frozen=True)
class _Spec:
    sampler: callable
    branches: Optional[callable]
    labels: tuple


# ---------------------------------------------------------------- samplers


def _sample_gaussian(fam, st, N):
    n, k = fam.n, fam.k
    return st.normal(n * k).reshape(N, n, k) / math.sqrt(k), np.full(N, -1)


_B_PLUS = np.array([[1.0, 0.0], [1.0, 0.0]])
_B_MINUS = np.array([[1.0, 0.0], [-1.0, 0.0]])
_IDENTITY_MIX_MATS = np.stack([np.eye(2), _B_PLUS, _B_MINUS])


def _sample_identity_mix(fam, st, N):
    rho = fam.params["rho"]
    u = st.uniform(1)[:, 0]
    lab = np.where(u < 1 - rho, 0, np.where(u < 1 - rho / 2, 1, 2))
    return _IDENTITY_MIX_MATS[lab].copy(), lab


def _identity_mix_branches(fam):
    rho = fam.params["rho"]
    return [(1 - rho, np.eye(2), 0), (rho / 2, _B_PLUS.copy(), 1), (rho / 2, _B_MINUS.copy(), 2)]


def _spike_vectors(eps, L):
    t = 2 * L / eps
    u_plus = math.sqrt(t / 2) * np.array([1.0, 1.0])
    u_minus = math.sqrt(t / (2 * (t - 1))) * np.array([1.0, -1.0])
    return t, u_minus, u_plus


def _spike_matrix(eps, u):
    return np.hstack([math.sqrt(1 - eps) * np.eye(2), math.sqrt(eps) * u[:, None]])


def _sample_augmented_spike(fam, st, N):
    eps, L = fam.params["epsilon"], fam.params["L"]
    t, u_minus, u_plus = _spike_vectors(eps, L)
    mats = np.stack([_spike_matrix(eps, u_minus), _spike_matrix(eps, u_plus)])
    lab = (st.uniform(1)[:, 0] < 1 / t).astype(np.int64)
    return mats[lab].copy(), lab


def _augmented_spike_branches(fam):
    eps, L = fam.params["epsilon"], fam.params["L"]
    t, u_minus, u_plus = _spike_vectors(eps, L)
    return [(1 - 1 / t, _spike_matrix(eps, u_minus), 0), (1 / t, _spike_matrix(eps, u_plus), 1)]


def trace_spike_heavy_value(s, alpha, q):
    """Largest eigenvalue of ``Omega Omega^T`` on the spiked branch."""
    return alpha + s * (1 - alpha) / q


def _trace_spike_diag(s, alpha, q, j):
    d = np.full(s, alpha)
    if j is not None:
        d[j] += s * (1 - alpha) / q
    return d


def _sample_trace_spike(fam, st, N):
    s, alpha, q = fam.params["s"], fam.params["alpha"], fam.params["q"]
    u = st.uniform(2)
    spiked = u[:, 0] < q
    J = np.minimum((u[:, 1] * s).astype(np.int64), s - 1)
    diag = np.full((N, s), alpha)
    diag[np.flatnonzero(spiked), J[spiked]] += s * (1 - alpha) / q
    Om = np.zeros((N, s, s))
    idx = np.arange(s)
    Om[:, idx, idx] = np.sqrt(diag)
    return Om, np.where(spiked, J + 1, 0)


def _trace_spike_branches(fam):
    s, alpha, q = fam.params["s"], fam.params["alpha"], fam.params["q"]
    out = [(1 - q, np.diag(np.sqrt(_trace_spike_diag(s, alpha, q, None))), 0)]
    for j in range(s):
        out.append((q / s, np.diag(np.sqrt(_trace_spike_diag(s, alpha, q, j))), j + 1))
    return out


def psd_sqrt(S):
    """Symmetric square root of a (stack of) PSD matrices via ``eigh``.

    Eigenvalues in ``[-1e-12, 0)`` are clamped to zero; anything more
    negative is rejected.
    """
    lam, V = np.linalg.eigh(S)
    if np.any(lam < -SQRT_CLAMP):
        raise BadParams("matrix is not positive semidefinite")
    root = np.sqrt(np.clip(lam, 0.0, None))
    return (V * root[..., None, :]) @ np.swapaxes(V, -1, -2)


def _sample_expo_rank_one(fam, st, N):
    alpha = fam.params["alpha"]
    u = st.uniform(2)
    theta = 2 * math.pi * u[:, 0]
    T = -2 * (1 - alpha) * np.log(u[:, 1])
    vec = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    S = alpha * np.eye(2) + T[:, None, None] * vec[:, :, None] * vec[:, None, :]
    return psd_sqrt(S), np.full(N, -1)


_SIGN_PAIR = np.array([[[1.0], [1.0]], [[1.0], [-1.0]]])


def _sample_sign_pair(fam, st, N):
    lab = (st.uniform(1)[:, 0] >= 0.5).astype(np.int64)
    return _SIGN_PAIR[lab].copy(), lab


def _sign_pair_branches(fam):
    return [(0.5, _SIGN_PAIR[0].copy(), 0), (0.5, _SIGN_PAIR[1].copy(), 1)]


_TERNARY = np.array([math.sqrt(2), -math.sqrt(2), 0.0])


def _sample_sparse_signed(fam, st, N):
    n, k = fam.n, fam.k
    u = st.uniform(n * k)
    code = np.where(u < 0.25, 0, np.where(u < 0.5, 1, 2))
    return _TERNARY[code].reshape(N, n, k) / math.sqrt(k), np.full(N, -1)


def _sparse_signed_branches(fam):
    n, k = fam.n, fam.k
    if 3 ** (n * k) > MAX_BRANCHES:
        raise BadParams("too many branches to enumerate")
    probs = np.array([0.25, 0.25, 0.5])
    out = []
    for i, code in enumerate(itertools.product(range(3), repeat=n * k)):
        code = np.array(code)
        out.append((float(np.prod(probs[code])), _TERNARY[code].reshape(n, k) / math.sqrt(k), i))
    return out


def _lp_scale(fam):
    return (fam.n / fam.k) ** (1.0 / fam.p)


def _sample_lp_sampler(fam, st, N):
    n, k = fam.n, fam.k
    idx = st.integers(n, k)
    Om = np.zeros((N, n, k))
    Om[np.arange(N)[:, None], idx, np.arange(k)[None, :]] = _lp_scale(fam)
    return Om, np.full(N, -1)


def _lp_sampler_branches(fam):
    n, k = fam.n, fam.k
    if n**k > MAX_BRANCHES:
        raise BadParams("too many branches to enumerate")
    out = []
    for i, idx in enumerate(itertools.product(range(n), repeat=k)):
        Om = np.zeros((n, k))
        Om[list(idx), range(k)] = _lp_scale(fam)
        out.append((float(n) ** -k, Om, i))
    return out


_FAMILIES = {
    "gaussian": _Spec(_sample_gaussian, None, ()),
    "identity_mix": _Spec(_sample_identity_mix, _identity_mix_branches, ("I", "B+", "B-")),
    "augmented_spike": _Spec(_sample_augmented_spike, _augmented_spike_branches, ("u-", "u+")),
    "trace_spike": _Spec(_sample_trace_spike, _trace_spike_branches, ()),
    "expo_rank_one": _Spec(_sample_expo_rank_one, None, ()),
    "sign_pair": _Spec(_sample_sign_pair, _sign_pair_branches, ("w+", "w-")),
    "sparse_signed": _Spec(_sample_sparse_signed, _sparse_signed_branches, ()),
    "lp_sampler": _Spec(_sample_lp_sampler, _lp_sampler_branches, ()),
}
FAMILY_NAMES = tuple(_FAMILIES)


# ---------------------------------------------------------------- constructors


def _check(cond, msg):
    if not cond:
        raise BadParams(msg)


def _check_shape(n, k):
    _check(int(n) == n and int(k) == k and n >= 1 and k >= 1, "need integers n >= 1, k >= 1")


def gaussian(n, k):
    """I.i.d. N(0, 1/k) entries, so that ``E[Omega Omega^T] = I_n``."""
    _check_shape(n, k)
    return SketchFamily("gaussian", int(n), int(k))


def identity_mix(rho):
    _check(0 <= rho < 1, "rho must lie in [0, 1)")
    return SketchFamily("identity_mix", 2, 2, {"rho": float(rho)}, OSIParams(1, 1.0, float(rho)))


def augmented_spike(epsilon, L):
    _check(0 < epsilon < 1, "epsilon must lie in (0, 1)")
    _check(L >= 1, "L must be >= 1")
    return SketchFamily(
        "augmented_spike",
        2,
        3,
        {"epsilon": float(epsilon), "L": float(L)},
        OSIParams(1, 1 - float(epsilon), 0.0),
    )


def trace_spike(s, alpha, q):
    _check(int(s) == s and s >= 1, "s must be an integer >= 1")
    _check(0 < alpha <= 1, "alpha must lie in (0, 1]")
    _check(0 < q < 1, "q must lie in (0, 1)")
    s = int(s)
    return SketchFamily(
        "trace_spike",
        s,
        s,
        {"s": s, "alpha": float(alpha), "q": float(q)},
        OSIParams(s, float(alpha), 0.0),
    )


def expo_rank_one(alpha):
    _check(0 < alpha <= 1, "alpha must lie in (0, 1]")
    return SketchFamily(
        "expo_rank_one", 2, 2, {"alpha": float(alpha)}, OSIParams(1, float(alpha), 0.0)
    )


def sign_pair():
    return SketchFamily("sign_pair", 2, 1, {}, OSIParams(1, 1.0, 0.5))


def sparse_signed(n, k=1):
    _check_shape(n, k)
    return SketchFamily("sparse_signed", int(n), int(k))


def lp_sampler(n, k, p):
    _check_shape(n, k)
    _check(1 <= p < math.inf, "p must be finite and >= 1")
    return SketchFamily("lp_sampler", int(n), int(k), {"p": float(p)}, None, float(p))


_CONSTRUCTORS = {
    "gaussian": gaussian,
    "identity_mix": identity_mix,
    "augmented_spike": augmented_spike,
    "trace_spike": trace_spike,
    "expo_rank_one": expo_rank_one,
    "sign_pair": sign_pair,
    "sparse_signed": sparse_signed,
    "lp_sampler": lp_sampler,
}


def make_family(name, **params):
    try:
        ctor = _CONSTRUCTORS[name]
    except KeyError:
        raise BadParams(f"unknown sketch family {name!r}") from None
    try:
        return ctor(**params)
    except TypeError as exc:
        raise BadParams(str(exc)) from exc


# one-shot draws


def draw_gaussian(n, k, seed):
    return gaussian(n, k).draw(seed)


def draw_identity_mix(rho, seed):
    return identity_mix(rho).draw(seed)


def draw_augmented_spike(epsilon, L, seed):
    return augmented_spike(epsilon, L).draw(seed)


def draw_trace_spike(s, alpha, q, seed):
    return trace_spike(s, alpha, q).draw(seed)


def draw_expo_rank_one(alpha, seed):
    return expo_rank_one(alpha).draw(seed)


def draw_sign_pair(seed):
    return sign_pair().draw(seed)


def draw_sparse_signed(n, k, seed):
    return sparse_signed(n, k).draw(seed)


def draw_lp_sampler(n, k, p, seed):
    return lp_sampler(n, k, p).draw(seed)


# ---------------------------------------------------------------- empirical checks


def chunk_size(n, k, budget=2**21):
    return int(max(1, min(8192, budget // (n * k))))


def iter_draws(family, N, seed, salt=0):
    """Yield ``(Omegas, labels)`` chunks for trials ``0..N-1`` under ``seed``."""
    step = chunk_size(family.n, family.k)
    for start in range(0, N, step):
        seeds = derive_seeds(seed, np.arange(start, min(N, start + step)), salt)
        yield family.sample(seeds)


def gram_sum(Omegas):
    return np.einsum("nik,njk->ij", Omegas, Omegas)


def exact_gram_mean(family):
    """``E[Omega Omega^T]`` by enumerating the branches of a finite mixture."""
    return sum(prob * (Om @ Om.T) for prob, Om, _ in family.branches())


def check_isotropy(family, N, seed):
    """Largest deviation of the Monte Carlo mean from isotropy.

    For the l_p sampler this is the largest relative error of the mean of
    ``||Omega^T z||_p^p`` against ``||z||_p^p`` over 100 Gaussian ``z``;
    otherwise the entrywise max of ``|mean(Omega Omega^T) - I|``.
    """
    _check(N >= 1000, "check_isotropy needs N >= 1000")
    if family.p is not None:
        z = CounterStream(as_seeds([seed])).normal(100 * family.n).reshape(100, family.n)
        acc = np.zeros(100)
        for Om, _ in iter_draws(family, N, seed, salt=1):
            acc += np.sum(np.abs(np.einsum("cnk,zn->czk", Om, z)) ** family.p, axis=(0, 2))
        target = np.sum(np.abs(z) ** family.p, axis=1)
        return float(np.max(np.abs(acc / N - target) / target))
    acc = np.zeros((family.n, family.n))
    for Om, _ in iter_draws(family, N, seed, salt=1):
        acc += gram_sum(Om)
    return float(np.max(np.abs(acc / N - np.eye(family.n))))


def injectivity_held(U, Omegas, alpha):
    """Per-draw flag for ``||Omega^T x||^2 >= alpha ||x||^2`` on ``range(U)``."""
    return np.atleast_1d(linalg.gram_min_eig(U, Omegas)) >= alpha - INJECTIVITY_SLACK


def check_injectivity(family, U, N, alpha, seed):
    """Fraction of ``N`` draws for which injectivity on ``range(U)`` fails."""
    U = linalg.check_orthonormal(U)
    _check(U.shape[0] == family.n, "U must have n rows")
    fails = 0
    for Om, _ in iter_draws(family, N, seed, salt=2):
        fails += int(np.sum(~injectivity_held(U, Om, alpha)))
    return fails / N
