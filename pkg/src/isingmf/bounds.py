"""Closed-form structural bounds on ``F - F*`` and spectral quantities."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import AllIsolated, BadEpsilon, ZeroModel
from .models import IsingModel, Mrf, degree_norms, frobenius_norm

EIG_TOL = 1e-9


@dataclass(frozen=True)
class SpectralProfile:
    """Degrees and normalised-adjacency spectrum (sorted by decreasing ``|lambda|``).

    ``kept`` lists the vertices with positive degree; isolated ones are dropped.
    """

    degrees: np.ndarray
    eigenvalues: np.ndarray
    l1_total: float
    max_abs_entry: float
    kept: np.ndarray


def spectral_profile(model: IsingModel) -> SpectralProfile:
    J = model.couplings
    deg = np.abs(J).sum(axis=1)
    kept = np.flatnonzero(deg > 0)
    if len(kept) == 0:
        raise AllIsolated("every vertex has zero degree")
    if len(kept) < model.n:
        warnings.warn(f"dropping {model.n - len(kept)} isolated vertices", RuntimeWarning, stacklevel=3)
    scale = 1.0 / np.sqrt(deg[kept])
    JD = J[np.ix_(kept, kept)] * scale[:, None] * scale[None, :]
    lam = np.linalg.eigvalsh(JD)
    if np.max(np.abs(lam)) > 1.0 + EIG_TOL:
        raise ArithmeticError(f"normalised eigenvalue {np.max(np.abs(lam))!r} exceeds 1")
    lam = np.clip(lam, -1.0, 1.0)
    lam = lam[np.argsort(-np.abs(lam), kind="stable")]
    return SpectralProfile(deg, lam, float(np.abs(J).sum()), float(np.abs(J).max()), kept)


def _check_epsilon(epsilon):
    if not (0.0 < epsilon <= 1.0):
        raise BadEpsilon(f"epsilon must lie in (0, 1], got {epsilon!r}")


def mean_field_error_bound(model: IsingModel) -> float:
    """``200 n^(2/3) ||J||_F^(2/3) log^(1/3)(n ||J||_F + e)``."""
    n, fro = model.n, frobenius_norm(model)
    return 200.0 * n ** (2 / 3) * fro ** (2 / 3) * math.log(n * fro + math.e) ** (1 / 3)


def mrf_error_bound(model: Mrf) -> float:
    """``2000 r max_d a_d log^(1/3)(a_d + e)`` with ``a_d = d^(1/3) n^(d/3) ||J_{=d}||_F^(2/3)``."""
    norms = degree_norms(model)
    r, n = model.order, model.n
    best = 0.0
    for d in range(1, r + 1):
        a = d ** (1 / 3) * n ** (d / 3) * norms.get(d, 0.0) ** (2 / 3)
        best = max(best, a * math.log(a + math.e) ** (1 / 3))
    return 2000.0 * r * best


def epsilon_tradeoff_bound(model: IsingModel, epsilon: float) -> float:
    """``eps n ||J||_F + 10^5 log(e + 1/eps) / eps^2``."""
    _check_epsilon(epsilon)
    return epsilon * model.n * frobenius_norm(model) + 1e5 * math.log(math.e + 1.0 / epsilon) / epsilon ** 2


def threshold_rank(model: IsingModel, delta: float) -> float:
    """Sum of ``lambda_i^2`` over normalised eigenvalues with ``|lambda_i| > delta``."""
    lam = spectral_profile(model).eigenvalues
    return float(np.sum(lam[np.abs(lam) > delta] ** 2))


def low_threshold_rank_bound(model: IsingModel, epsilon: float) -> float:
    """``3 eps ||J||_1 + (32 t / eps^2) log(2 sqrt(t) n s / (eps ||J||_1) + 1)``.

    ``t`` is the threshold rank at ``eps / 2`` and ``s = 16 t / eps^2``.
    """
    _check_epsilon(epsilon)
    l1 = float(np.abs(model.couplings).sum())
    if l1 == 0.0:
        raise ZeroModel("the bound needs a nonzero coupling matrix")
    t = threshold_rank(model, epsilon / 2.0)
    s = 16.0 * t / epsilon ** 2
    return 3.0 * epsilon * l1 + 32.0 * t / epsilon ** 2 * math.log(
        2.0 * math.sqrt(t) * model.n * s / (epsilon * l1) + 1.0)
