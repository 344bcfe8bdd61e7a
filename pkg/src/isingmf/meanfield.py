"""Mean-field fixed points, Dobrushin certification and ascent solvers."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import BoundaryMarginal, NotInDobrushinRegime
from .models import TAU, IsingModel, ProductDistribution, _as_means, frobenius_norm, mf_objective

LO, HI = -1.0 + TAU, 1.0 - TAU
ARMIJO_C = 1e-4


@dataclass(frozen=True)
class DobrushinCertificate:
    satisfied: bool
    eta: float
    worst_row: int


@dataclass
class IterationTrace:
    iterates: list
    sup_deltas: list
    converged: bool
    steps: int

    @property
    def final(self) -> ProductDistribution:
        return self.iterates[-1]


@dataclass
class AscentResult:
    x: np.ndarray
    value: float
    pg_steps: int
    sweeps: int
    history: list = field(default_factory=list)

    @property
    def dist(self) -> ProductDistribution:
        return ProductDistribution(self.x)


def dobrushin_check(model: IsingModel) -> DobrushinCertificate:
    rows = 2.0 * np.abs(model.couplings).sum(axis=1)
    worst = int(np.argmax(rows))
    eta = 1.0 - float(rows[worst])
    return DobrushinCertificate(eta >= 0.0, eta, worst)


def mean_field_map(model: IsingModel, x) -> np.ndarray:
    return np.tanh(2.0 * model.couplings @ x + model.fields)


def mf_iterate(model: IsingModel, x0, tol: float = 1e-10, max_steps: int = 10_000) -> IterationTrace:
    """Parallel iteration of ``x <- tanh(2 J x + h)``.

    Non-convergence is reported through ``converged``; it never raises.
    """
    x = np.array(_as_means(x0), dtype=float)
    iterates = [ProductDistribution(x.copy())]
    deltas = []
    converged = False
    for _ in range(max_steps):
        nxt = mean_field_map(model, x)
        delta = float(np.max(np.abs(nxt - x))) if x.size else 0.0
        x = nxt
        iterates.append(ProductDistribution(x.copy()))
        deltas.append(delta)
        if delta <= tol:
            converged = True
            break
    return IterationTrace(iterates, deltas, converged, len(deltas))


def _check_interior(x):
    bad = np.flatnonzero(np.abs(x) > HI)
    if len(bad):
        raise BoundaryMarginal(f"marginal {int(bad[0])} = {x[bad[0]]!r} is within {TAU} of +-1")


def mf_gradient(model: IsingModel, dist) -> np.ndarray:
    """Gradient of energy + entropy: ``2 J x + h - artanh(x)``."""
    x = _as_means(dist)
    _check_interior(x)
    return 2.0 * model.couplings @ x + model.fields - np.arctanh(x)


def mf_hessian_extremal_eigenvalue(model: IsingModel, dist) -> float:
    """Largest eigenvalue of ``2J - diag(1 / (1 - x^2))``."""
    x = _as_means(dist)
    _check_interior(x)
    H = 2.0 * model.couplings - np.diag(1.0 / (1.0 - x * x))
    return float(np.linalg.eigvalsh(H)[-1])


def _grad(model, x):
    return 2.0 * model.couplings @ x + model.fields - np.arctanh(x)


def _projected_grad(g, x):
    pg = g.copy()
    pg[(x <= LO) & (g < 0)] = 0.0
    pg[(x >= HI) & (g > 0)] = 0.0
    return pg


def frank_wolfe_gap(model: IsingModel, x) -> float:
    """``max_{y in box} g.(y - x)``; an upper bound on ``F* - f(x)`` when f is concave."""
    g = _grad(model, x)
    return float(np.sum(np.where(g > 0, g * (HI - x), g * (LO - x))))


def gradient_ascent(model: IsingModel, x0, tol: float = 1e-10, max_steps: int = 200,
                    polish_sweeps: int = 20_000, record: bool = False) -> AscentResult:
    """Projected gradient ascent with Armijo backtracking, then Gauss-Seidel polish.

    Both phases are monotone: every accepted step satisfies the Armijo
    condition and every Gauss-Seidel update is an exact coordinate maximiser.
    """
    n = model.n
    x = np.clip(np.array(_as_means(x0), dtype=float), LO, HI)
    f = mf_objective(model, x)
    history = [f] if record else []
    step = 1.0 / (2.0 * frobenius_norm(model) + 1.0)
    stalls = 0
    k = 0
    for k in range(1, max_steps + 1):
        g = _grad(model, x)
        if np.max(np.abs(_projected_grad(g, x)), initial=0.0) <= tol / (2 * n):
            break
        while True:
            cand = np.clip(x + step * g, LO, HI)
            fc = mf_objective(model, cand)
            if fc >= f + ARMIJO_C * float(g @ (cand - x)):
                break
            step *= 0.5
            if step < 1e-300:
                cand, fc = x, f
                break
        rel = abs(fc - f) / max(1.0, abs(f))
        x, f = cand, fc
        if record:
            history.append(f)
        stalls = stalls + 1 if rel <= 1e-14 else 0
        if stalls >= 5:
            break
        step *= 2.0
    sweeps = kernels.gauss_seidel(model.couplings, model.fields, x, LO, HI, polish_sweeps, 1e-15)
    f_pol = mf_objective(model, x)
    if record:
        history.append(f_pol)
    return AscentResult(x, f_pol, k, sweeps, history)


def concave_solve(model: IsingModel, tol: float = 1e-9):
    """Solve the variational problem in the Dobrushin regime.

    Returns ``(dist, value)`` with ``value >= F* - tol``; optimality is
    certified by the Frank-Wolfe gap, which bounds the suboptimality of a
    concave objective.
    """
    cert = dobrushin_check(model)
    if not cert.satisfied:
        raise NotInDobrushinRegime(f"row {cert.worst_row} has 2 sum|J| = {1 - cert.eta:.6g} > 1")
    res = gradient_ascent(model, np.tanh(model.fields), tol=tol)
    x = res.x
    for _ in range(50):
        if frank_wolfe_gap(model, x) <= tol:
            break
        kernels.gauss_seidel(model.couplings, model.fields, x, LO, HI, 10_000, 0.0)
    return ProductDistribution(x), mf_objective(model, x)


def default_restarts(n: int) -> int:
    return 16 + n // 4


def multistart_ascent(model: IsingModel, restarts: int | None = None, seed: int = 0,
                      tol: float = 1e-10):
    """Best of ascents from ``0``, ``+-tanh(h)`` and uniform random interior starts.

    The returned value is a lower bound on ``log Z`` by the Gibbs principle.
    Ties go to the earliest start.
    """
    n = model.n
    restarts = default_restarts(n) if restarts is None else restarts
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    th = np.tanh(model.fields)
    starts = [np.zeros(n), th, -th]
    for child in np.random.SeedSequence(int(seed) & (2**64 - 1)).spawn(restarts):
        rng = np.random.Generator(np.random.PCG64(child))
        starts.append(rng.uniform(-1.0, 1.0, size=n))
    best = None
    for x0 in starts:
        res = gradient_ascent(model, x0, tol=tol)
        if best is None or res.value > best.value:
            best = res
    return ProductDistribution(best.x), best.value
