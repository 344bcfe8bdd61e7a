"""Ferromagnetic mean-field optimisation through blow-up and sampling.

Each vertex of a ferromagnetic model with uniform field is replaced by ``m``
copies with couplings ``J_ij / m`` between copies of different vertices.  The
net spin ``Y_i / m`` of a Glauber sample of the blow-up is a candidate product
measure for the original model; the best candidate after a gradient polish is
returned.  The sampler is single-site heat-bath dynamics, so the accuracy
guarantee is empirical.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import kernels
from .errors import InvalidParams, NonUniformField, NotFerromagnetic, TooLargeForExact
from .meanfield import gradient_ascent
from .models import IsingModel, ProductDistribution, all_states, mf_objective, validate

BLOWN_CAP = 5000
DEFAULT_SWEEPS = 200
TRANSITION_CAP = 10


@dataclass(frozen=True, eq=False)
class BlowUp:
    """``m``-fold blow-up; copy ``k`` of vertex ``i`` is vertex ``i * m + k``."""

    base: IsingModel
    m: int

    @property
    def n(self) -> int:
        return self.base.n * self.m

    @property
    def field(self) -> float:
        return float(self.base.fields[0]) if self.base.n else 0.0

    @cached_property
    def blown(self) -> IsingModel:
        """Dense blown-up model (built on first access)."""
        J = np.kron(self.base.couplings, np.ones((self.m, self.m))) / self.m
        return IsingModel(J, np.full(self.n, self.field))

    def lift(self, x) -> np.ndarray:
        """Block-constant vector on the blow-up."""
        return np.repeat(np.asarray(x, dtype=float), self.m)

    def net_spin(self, spins) -> np.ndarray:
        """``Y_i / m`` for a configuration of the blow-up."""
        return np.asarray(spins, dtype=float).reshape(self.base.n, self.m).sum(axis=1) / self.m


def _check_ferro(model: IsingModel):
    validate(model)
    neg = np.argwhere(model.couplings < 0)
    if len(neg):
        i, j = (int(v) for v in neg[0])
        raise NotFerromagnetic(f"coupling J[{i},{j}] = {model.couplings[i, j]!r} is negative")
    h = model.fields
    if h.size and np.any(h != h[0]):
        i = int(np.flatnonzero(h != h[0])[0])
        raise NonUniformField(f"field h[{i}] = {h[i]!r} differs from h[0] = {h[0]!r}")


def blow_up(model: IsingModel, m: int) -> BlowUp:
    _check_ferro(model)
    if int(m) != m or m < 1:
        raise InvalidParams(f"m must be a positive integer, got {m!r}")
    return BlowUp(model, int(m))


def _streams(seed, count):
    return [np.random.Generator(np.random.PCG64(s))
            for s in np.random.SeedSequence(int(seed) & (2 ** 64 - 1)).spawn(count)]


def glauber_sample(model: IsingModel, sweeps: int, seed: int, x0=None) -> np.ndarray:
    """Heat-bath Glauber dynamics for ``sweeps * n`` single-site updates.

    The chain starts from a uniform random configuration unless ``x0`` is
    given; site ``i`` is set to ``+1`` with probability
    ``sigmoid(2 (2 (J x)_i + h_i))``.
    """
    if sweeps < 1:
        raise InvalidParams("sweeps must be >= 1")
    rng = np.random.default_rng(seed)
    n = model.n
    x = rng.choice((-1.0, 1.0), size=n) if x0 is None else np.array(x0, dtype=float)
    steps = int(sweeps) * n
    sites = rng.integers(0, n, size=steps)
    uniforms = rng.random(steps)
    J = np.ascontiguousarray(model.couplings)
    local = J @ x
    kernels.glauber(J, np.ascontiguousarray(model.fields), x, local, sites, uniforms)
    return x


def glauber_samples(model: IsingModel, sweeps: int, count: int, seed: int) -> np.ndarray:
    """``count`` independent chains on split random streams; one row per sample."""
    out = np.empty((count, model.n))
    for k, rng in enumerate(_streams(seed, count)):
        out[k] = glauber_sample(model, sweeps, rng)
    return out


def glauber_transition_matrix(model: IsingModel) -> np.ndarray:
    """Exact one-step kernel of random-site heat-bath dynamics, states as in :func:`all_states`."""
    n = model.n
    if n > TRANSITION_CAP:
        raise TooLargeForExact(f"n = {n} exceeds the transition-matrix cap {TRANSITION_CAP}")
    X = all_states(n)
    P = np.zeros((len(X), len(X)))
    for s, x in enumerate(X):
        field = 2.0 * model.couplings @ x + model.fields
        for i in range(n):
            p_up = 1.0 / (1.0 + math.exp(-2.0 * field[i]))
            up = s & ~(1 << i)  # bit i clear means spin +1
            down = s | (1 << i)
            P[s, up] += p_up / n
            P[s, down] += (1.0 - p_up) / n
    return P


def _blowup_sample(bu: BlowUp, sweeps: int, rng) -> np.ndarray:
    N = bu.n
    spins = rng.choice((-1.0, 1.0), size=N)
    Y = spins.reshape(bu.base.n, bu.m).sum(axis=1)
    steps = int(sweeps) * N
    sites = rng.integers(0, N, size=steps)
    uniforms = rng.random(steps)
    kernels.glauber_blowup(np.ascontiguousarray(bu.base.couplings), bu.field, bu.m, spins, Y, sites, uniforms)
    return Y / bu.m


def default_replication(n: int, epsilon: float, c: float = 1.0) -> int:
    """``ceil(c n log(n + 1) / eps)``, capped so the blow-up has at most 5000 vertices."""
    m = math.ceil(c * n * math.log(n + 1) / epsilon)
    return max(1, min(m, BLOWN_CAP // max(n, 1)))


def sample_count(delta: float) -> int:
    return math.ceil(math.log(3.0 / delta) / math.log(3.0)) + 2


def ferro_optimize(model: IsingModel, epsilon: float = 0.1, delta: float = 0.1, seed: int = 0,
                   c: float = 1.0, sweeps: int | None = None, mixing: float = 1.0,
                   m: int | None = None, refine: bool = True):
    """Blow up, sample, map to net spins and keep the best polished candidate.

    Parameters
    ----------
    model : IsingModel
        Ferromagnetic couplings and a uniform field.
    epsilon, delta : float
        Target accuracy and failure probability; they set ``m`` and the number
        of samples ``ceil(log(3/delta) / log 3) + 2``.
    sweeps : int, optional
        Glauber sweeps over the blow-up per sample (default ``200 * mixing``).
    refine : bool
        Polish each ``Y/m`` by gradient ascent; never lowers its objective.

    Returns
    -------
    (ProductDistribution, float)
        Best candidate and its mean-field objective, a lower bound on ``F*``.
    """
    _check_ferro(model)
    if not (0.0 < epsilon) or not (0.0 < delta < 1.0):
        raise InvalidParams("need epsilon > 0 and 0 < delta < 1")
    m = default_replication(model.n, epsilon, c) if m is None else int(m)
    bu = blow_up(model, m)
    sweeps = max(1, int(round(DEFAULT_SWEEPS * mixing))) if sweeps is None else int(sweeps)
    best_x, best_val = None, -math.inf
    for rng in _streams(seed, sample_count(delta)):
        x = _blowup_sample(bu, sweeps, rng)
        val = mf_objective(model, x)
        if refine:
            res = gradient_ascent(model, x)
            if res.value >= val:
                x, val = res.x, res.value
        if val > best_val:
            best_x, best_val = x, val
    return ProductDistribution(np.clip(best_x, -1.0, 1.0)), float(best_val)
