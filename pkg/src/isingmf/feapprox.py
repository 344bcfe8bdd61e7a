"""Regularity-based free-energy approximation.

The model is replaced by a cut decomposition ``D``; every configuration is
bucketed by its cut-side magnetisations ``r_t(x) = sum_{a in R_t} x_a`` onto the
level grid, and the best bucket is scored by a max-entropy program over atoms
(the common refinement of the cut sides).  The estimate is

    F_hat = max_{levels} [ sum_t d_t prod_q level_{t,q} + n * H(levels) ],

with ``H`` the normalised program value.  The reported budget bounds both
``|F_hat - log Z|`` and the KL divergence of the returned product measure:

* ``cut_transfer = 2 w`` with ``w`` a certified bound on ``|x^T (J - D) y|``
  over the cube (exact infinity-to-one norm when the model is small);
* ``grouping = 2 sum_t |d_t| n^k ((1 + gamma)^k - 1)`` for cuts of order ``k``,
  the largest change of a cut energy inside one bucket;
* ``grid_count = K log |levels|``, the log of the number of buckets;
* ``solver = tol * n``.
"""
from __future__ import annotations

import itertools
import math
import time
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog, minimize
from scipy.special import entr, logsumexp

from . import kernels
from .errors import BadEpsilon, BadGamma, GridBudgetExceeded, InvalidParams, TooLargeForExact
from .models import (
    FreeEnergyReport,
    IsingModel,
    Mrf,
    ProductDistribution,
    all_states,
    degree_norms,
    mf_objective,
    validate,
)
from .regularity import (
    EXACT_NORM_CAP,
    AtomPartition,
    CutDecomposition,
    fk_decompose,
    inf_to_one_norm_exact,
    materialize,
    refine_atoms,
    slice_array,
    tensor_decompose,
    tensor_inf_to_one_exact,
)

DEFAULT_CAPS = {"max_width": 4, "max_levels": 9, "max_grid_points": 10 ** 6}
DEFAULT_TOL = 1e-9
MAX_SWEEPS = 20_000
Z_STAR_CAP = 15
Z_STAR_COMBO_CAP = 2_000_000
_WINDOW_SLACK = 1e-9


@dataclass(frozen=True)
class GridSpec:
    """Magnetisation levels ``{+-gamma n, +-3 gamma n, ..., +-ell gamma n}``."""

    gamma: float
    n: int
    ell: int
    levels: np.ndarray

    @property
    def normalized(self) -> np.ndarray:
        return self.levels / self.n

    def __len__(self):
        return len(self.levels)


@dataclass(frozen=True)
class Infeasible:
    """Returned when the window constraints admit no product measure."""

    reason: str = "empty constraint polytope"


@dataclass
class EntropyProgram:
    """Solved max-entropy program.

    ``z`` holds per-atom net magnetisations ``z_a = v_a u_a`` and ``u`` the
    per-atom means; ``value`` is normalised by ``n`` and includes the field
    term when ``fields`` was given.
    """

    atoms: AtomPartition
    r: np.ndarray
    c: np.ndarray
    gamma: float
    z: np.ndarray
    u: np.ndarray
    value: float
    gap: float
    method: str = "dual-cd"


def _ell(gamma: float) -> int:
    need = 1.0 / gamma - 1.0 - 1e-12
    ell = max(1, math.ceil(need))
    return ell if ell % 2 == 1 else ell + 1


def grid(n: int, gamma: float) -> GridSpec:
    """Level set with ``ell`` the smallest odd integer with ``|ell gamma n - n| <= gamma n``."""
    if not (0.0 < gamma < 1.0):
        raise BadGamma(f"gamma must lie in (0, 1), got {gamma!r}")
    if n < 1:
        raise InvalidParams("n must be positive")
    ell = _ell(gamma)
    pos = np.arange(1, ell + 1, 2) * gamma * n
    levels = np.concatenate([-pos[::-1], pos])
    return GridSpec(float(gamma), int(n), ell, levels)


def _check_epsilon(epsilon):
    if not (isinstance(epsilon, (int, float, np.floating)) and 0.0 < float(epsilon) <= 1.0):
        raise BadEpsilon(f"epsilon must lie in (0, 1], got {epsilon!r}")
    return float(epsilon)


# ---------------------------------------------------------------------------
# entropy program


def _binary_entropy_pm(u):
    p = np.clip(0.5 * (1.0 + u), 0.0, 1.0)
    return entr(p) + entr(1.0 - p)


def _scipy_windows(M, v, f, lo, hi):
    """Fallback: LP feasibility, then SLSQP from the LP point.  Returns (u, value) or None."""
    A = M * v[None, :]
    K, nA = A.shape
    if K:
        lp = linprog(np.zeros(nA), A_ub=np.vstack([A, -A]), b_ub=np.concatenate([hi, -lo]),
                     bounds=[(-1.0, 1.0)] * nA, method="highs")
        if lp.status == 2:
            return None
        u0 = lp.x if lp.x is not None else np.zeros(nA)
    else:
        u0 = np.zeros(nA)

    def neg(u):
        return -float(v @ (_binary_entropy_pm(u) + f * u))

    def grad(u):
        uc = np.clip(u, -1 + 1e-12, 1 - 1e-12)
        return -(v * (-np.arctanh(uc) + f))

    cons = []
    if K:
        cons = [{"type": "ineq", "fun": lambda u: hi - A @ u, "jac": lambda u: -A},
                {"type": "ineq", "fun": lambda u: A @ u - lo, "jac": lambda u: A}]
    res = minimize(neg, 0.999 * u0, jac=grad, bounds=[(-1.0, 1.0)] * nA, constraints=cons,
                   method="SLSQP", options={"ftol": 1e-14, "maxiter": 1000})
    u = np.clip(res.x, -1.0, 1.0)
    if K and (np.any(A @ u > hi + 1e-9) or np.any(A @ u < lo - 1e-9)):
        u = u0
    return u, -neg(u)


def _solve_windows(M, v, f, centers, gamma, tol):
    lo = np.ascontiguousarray(centers - gamma, dtype=float)
    hi = np.ascontiguousarray(centers + gamma, dtype=float)
    u = np.zeros(len(v))
    status, value, gap = kernels.entropy_cd(M, v, f, lo, hi, tol, MAX_SWEEPS, u)
    if status == kernels.STATUS_INFEASIBLE:
        return None
    if status == kernels.STATUS_OK:
        return u, value, gap, "dual-cd"
    out = _scipy_windows(M, v, f, lo, hi)
    if out is None:
        return None
    return out[0], out[1], float("nan"), "scipy"


def solve_entropy_program(atoms: AtomPartition, r, c, gamma: float, tol: float = DEFAULT_TOL,
                          fields=None):
    """Maximise ``sum_a v_a H((1 + z_a / v_a) / 2)`` under the cut-side windows.

    Parameters
    ----------
    atoms : AtomPartition
        Refinement of a matrix decomposition; sides are ``R_1, C_1, R_2, ...``.
    r, c : array_like
        Row and column levels in absolute units (elements of the level grid).
    gamma : float
        Window half-width in normalised units: ``|sum_{a in R_t} z_a - r_t / n| <= gamma``.
    fields : array_like, optional
        Per-atom field; adds ``sum_a f_a z_a`` to the objective.

    Returns
    -------
    EntropyProgram or Infeasible
    """
    r = np.atleast_1d(np.asarray(r, dtype=float))
    c = np.atleast_1d(np.asarray(c, dtype=float))
    if r.shape != c.shape or 2 * len(r) != len(atoms.membership):
        raise InvalidParams("r and c must each have one level per cut")
    centers = np.empty(2 * len(r))
    centers[0::2] = r / atoms.n
    centers[1::2] = c / atoms.n
    M = atoms.side_matrix()
    v = np.asarray(atoms.sizes, dtype=float)
    f = np.zeros(len(v)) if fields is None else np.asarray(fields, dtype=float)
    out = _solve_windows(M, v, f, centers, float(gamma), tol)
    if out is None:
        return Infeasible()
    u, value, gap, method = out
    return EntropyProgram(atoms, r, c, float(gamma), v * u, u, float(value), gap, method)


# ---------------------------------------------------------------------------
# grid search driver shared by the Ising and Mrf paths


def _choose_gamma(n, epsilon, s, n_axes, caps):
    """Target ``gamma = eps / (48 sqrt(s))``, coarsened until the grid fits the caps."""
    target = epsilon / (48.0 * math.sqrt(max(s, 1)))
    spec = grid(n, min(target, 0.999))
    if n_axes == 0:
        return spec, target, False
    if len(spec) <= caps["max_levels"] and len(spec) ** n_axes <= caps["max_grid_points"]:
        return spec, target, False
    L = caps["max_levels"] - caps["max_levels"] % 2
    while L > 2 and L ** n_axes > caps["max_grid_points"]:
        L -= 2
    L = max(L, 2)
    if L ** n_axes > caps["max_grid_points"]:
        raise GridBudgetExceeded(f"even two levels on {n_axes} axes exceed max_grid_points")
    return grid(n, 1.0 / L), target, True


def _run_grid(n, atoms, fields_atom, axes, coefs, spec, tol):
    M = np.ascontiguousarray(atoms.side_matrix())
    v = np.ascontiguousarray(atoms.sizes, dtype=float)
    f = np.ascontiguousarray(fields_atom, dtype=float)
    lv = np.ascontiguousarray(spec.normalized)
    width = max((len(a) for a in axes), default=1)
    cut_axes = -np.ones((len(axes), width), dtype=np.int64)
    for j, a in enumerate(axes):
        cut_axes[j, : len(a)] = a
    coefs = np.ascontiguousarray(coefs, dtype=float)
    best_u = np.zeros(len(v))
    unknown = np.zeros(4096, dtype=np.int64)
    best, best_t, counts = kernels.grid_search(M, v, f, lv, spec.gamma, cut_axes, coefs, n, tol,
                                               MAX_SWEEPS, best_u, unknown)
    K, L = M.shape[0], len(lv)
    n_unknown = counts[3]
    if n_unknown > len(unknown):
        raise RuntimeError("too many unresolved entropy programs")
    for t in sorted(int(t) for t in unknown[:n_unknown]):
        idx = np.array([(t // L ** (K - 1 - k)) % L for k in range(K)], dtype=int)
        out = _solve_windows(M, v, f, lv[idx], spec.gamma, tol)
        if out is None:
            continue
        e = sum(cf * math.prod(lv[idx[a]] * n for a in ax) for cf, ax in zip(coefs, axes))
        tot = e + n * out[1]
        if tot > best or (tot == best and t < best_t):
            best, best_t, best_u = tot, t, out[0]
    if best_t < 0:
        raise RuntimeError("no feasible grid point; the level grid must cover every configuration")
    idx = np.array([(best_t // L ** (K - 1 - k)) % L for k in range(K)], dtype=int)
    stats = {"solved": counts[0], "infeasible": counts[1], "pruned": counts[2], "fallback": n_unknown}
    return best, best_u, lv[idx] * n, stats


def _caps(budget_caps):
    caps = dict(DEFAULT_CAPS)
    if budget_caps:
        unknown = set(budget_caps) - set(caps)
        if unknown:
            raise InvalidParams(f"unknown budget caps {sorted(unknown)}")
        caps.update({k: int(v) for k, v in budget_caps.items()})
    if caps["max_width"] < 0 or caps["max_levels"] < 2 or caps["max_grid_points"] < 1:
        raise InvalidParams("caps must be max_width >= 0, max_levels >= 2, max_grid_points >= 1")
    return caps


def _keep_largest(values, k):
    order = sorted(range(len(values)), key=lambda i: (-values[i], i))
    return sorted(order[:k])


def _atom_fields(atoms: AtomPartition, h):
    return np.array([h[a[0]] for a in atoms.atoms], dtype=float)


def _cube_bound(W) -> float:
    """Bound on ``|x^T W y|`` over the cube without enumeration."""
    W = np.asarray(W, dtype=float)
    if not W.any():
        return 0.0
    l1 = float(np.abs(W).sum())
    if W.ndim == 2:
        return min(l1, W.shape[0] * float(np.linalg.norm(W, 2)))
    return l1


def lipschitz_gap_bound(J, decomp: CutDecomposition) -> float:
    """Upper bound on ``|F - F_D|`` and ``|F* - F*_D|``.

    Exact ``||J - D||_{inf->1}`` when the residual has at most 22 columns;
    otherwise the smallest of the entrywise l1 norm, ``n ||W||_2`` and, for a
    certified untruncated decomposition, ``4 eps sqrt(mn) ||J||_F``.
    """
    A = J.couplings if isinstance(J, IsingModel) else np.asarray(J, dtype=float)
    W = A - materialize(decomp)
    if not W.any():
        return 0.0
    if W.ndim == 2 and W.shape[1] <= EXACT_NORM_CAP:
        return inf_to_one_norm_exact(W)
    bound = _cube_bound(W)
    if decomp.certified and math.isfinite(decomp.residual_frobenius):
        # the cut norm is at most the final cut value; inf->1 <= 2^d cut norm
        bound = min(bound, 2.0 ** W.ndim * decomp.final_cut_value)
    return bound


def _array_gap_bound(T, decomp) -> float:
    W = np.asarray(T, dtype=float) - materialize(decomp)
    if not W.any():
        return 0.0
    n = W.shape[0]
    if n * (W.ndim - 1) <= EXACT_NORM_CAP + 4:
        return tensor_inf_to_one_exact(W)
    return _cube_bound(W)


def grouping_bound(decomps_weights_orders, n: int, gamma: float) -> float:
    """``sum_t |d_t| n^k ((1 + gamma)^k - 1)``: the largest drift of the cut energy inside a bucket."""
    return float(sum(abs(d) * n ** k * ((1.0 + gamma) ** k - 1.0) for d, k in decomps_weights_orders))


# ---------------------------------------------------------------------------
# public estimators


def approx_free_energy(model: IsingModel, epsilon: float = 0.5, seed: int = 0, budget_caps=None,
                       strict: bool = False, tol: float = DEFAULT_TOL,
                       cut_finder: str | None = None) -> FreeEnergyReport:
    """Regularity-based estimate of ``log Z`` with a product-measure witness.

    Parameters
    ----------
    model : IsingModel
    epsilon : float
        Accuracy in ``(0, 1]``; the decomposition runs at ``epsilon / 12``.
    seed : int
        Seeds the cut finder.
    budget_caps : dict, optional
        ``max_width`` (cuts kept, default 4), ``max_levels`` per axis
        (default 9) and ``max_grid_points`` (default ``10**6``).
    strict : bool
        Raise :class:`GridBudgetExceeded` instead of returning a degraded report.

    Returns
    -------
    FreeEnergyReport
        ``budget`` components sum to a bound on both ``|estimate - log Z|``
        and ``KL(marginals || P)``.
    """
    epsilon = _check_epsilon(epsilon)
    validate(model)
    caps = _caps(budget_caps)
    start = time.perf_counter()
    n = model.n
    full = fk_decompose(model.couplings, epsilon / 12.0, seed=seed, cut_finder=cut_finder)
    keep = _keep_largest(full.cut_values, caps["max_width"])
    truncated = len(keep) < full.width
    dec = full.truncated(keep) if truncated else full
    s = dec.width
    spec, target, coarse = _choose_gamma(n, epsilon, s, 2 * s, caps)
    degraded = truncated or coarse
    if degraded and strict:
        raise GridBudgetExceeded(
            f"caps force width {s} of {full.width} and gamma {spec.gamma:.4g} (target {target:.4g})")
    atoms = refine_atoms(dec, n, fields=model.fields)
    axes = [(2 * j, 2 * j + 1) for j in range(s)]
    best, u, lv, stats = _run_grid(n, atoms, _atom_fields(atoms, model.fields), axes,
                                   dec.weights, spec, tol)
    x = np.clip(u[atoms.labels], -1.0, 1.0)
    w = lipschitz_gap_bound(model.couplings, dec)
    G = grouping_bound([(d, 2) for d in dec.weights], n, spec.gamma)
    budget = {
        "cut_transfer": 2.0 * w,
        "grouping": 2.0 * G,
        "grid_count": 2 * s * math.log(len(spec)),
        "solver": tol * n,
    }
    extras = {
        "width_full": full.width, "width_used": s, "gamma": spec.gamma, "gamma_target": target,
        "levels": len(spec), "atoms": atoms.count, "grid_points": len(spec) ** (2 * s),
        "inf_to_one_residual": w, "argmax_levels": [float(a) for a in lv], **stats,
    }
    return FreeEnergyReport(float(best), ProductDistribution(x), budget, int(seed),
                            time.perf_counter() - start, degraded, extras)


def approx_free_energy_mrf(model: Mrf, epsilon: float = 0.5, seed: int = 0, mode: str = "narrow",
                           budget_caps=None, strict: bool = False, tol: float = DEFAULT_TOL,
                           cut_finder: str | None = None) -> FreeEnergyReport:
    """Regularity estimate for an order-``r`` Mrf.

    Every degree slice ``d >= 2`` is cut-decomposed (``narrow``: accuracy
    ``eps/12``; ``width-heavy``: ``(eps/12)^(d-1)``), atoms are refined jointly
    across slices and fields, and the grid runs over one axis per cut side.
    A model without terms of degree three or more goes through
    :func:`approx_free_energy`.
    """
    epsilon = _check_epsilon(epsilon)
    validate(model)
    if mode not in ("narrow", "width-heavy"):
        raise InvalidParams("mode must be 'narrow' or 'width-heavy'")
    if all(len(k) <= 2 for k in model.terms):
        return approx_free_energy(model.pairwise_part(), epsilon, seed, budget_caps, strict, tol, cut_finder)
    caps = _caps(budget_caps)
    start = time.perf_counter()
    n = model.n
    pair = model.pairwise_part()
    slices = {}
    for d in sorted({len(k) for k in model.terms if len(k) >= 2}):
        eps_d = epsilon / 12.0 if mode == "narrow" else (epsilon / 12.0) ** (d - 1)
        if d == 2:
            arr = pair.couplings
            dec = fk_decompose(arr, eps_d, seed=seed, cut_finder=cut_finder, max_width=caps["max_width"])
        else:
            arr = slice_array(model, d)
            dec = tensor_decompose(arr, eps_d, seed=seed, cut_finder=cut_finder, max_width=caps["max_width"])
        slices[d] = (arr, dec)
    pool = [(dec.cut_values[i], d, i) for d, (_, dec) in slices.items() for i in range(dec.width)]
    chosen = sorted(sorted(pool, key=lambda t: (-t[0], t[1], t[2]))[: caps["max_width"]], key=lambda t: (t[1], t[2]))
    truncated = len(chosen) < len(pool) or any(dec.hit_width_cap for _, dec in slices.values())
    kept = {d: dec.truncated([i for _, dd, i in chosen if dd == d]) for d, (_, dec) in slices.items()}
    cuts = [(c.weight, len(c.index_sets)) for d in sorted(kept) for c in kept[d].cuts]
    n_axes = sum(k for _, k in cuts)
    spec, target, coarse = _choose_gamma(n, epsilon, len(cuts), n_axes, caps)
    degraded = truncated or coarse
    if degraded and strict:
        raise GridBudgetExceeded(f"caps force {len(cuts)} cuts and gamma {spec.gamma:.4g} (target {target:.4g})")
    atoms = refine_atoms([kept[d] for d in sorted(kept)], n, fields=pair.fields)
    axes, pos = [], 0
    for _, k in cuts:
        axes.append(tuple(range(pos, pos + k)))
        pos += k
    best, u, lv, stats = _run_grid(n, atoms, _atom_fields(atoms, pair.fields), axes,
                                   [w for w, _ in cuts], spec, tol)
    x = np.clip(u[atoms.labels], -1.0, 1.0)
    per_degree = {}
    norms = degree_norms(model)
    transfer = 0.0
    for d, (arr, _) in slices.items():
        w_d = _array_gap_bound(arr, kept[d])
        transfer += w_d
        per_degree[str(d)] = {"cut_transfer": 2.0 * w_d, "width": kept[d].width,
                              "reference": epsilon * n ** (d / 2.0) * norms.get(d, 0.0)}
    G = grouping_bound(cuts, n, spec.gamma)
    budget = {
        "cut_transfer": 2.0 * transfer,
        "grouping": 2.0 * G,
        "grid_count": n_axes * math.log(len(spec)),
        "solver": tol * n,
    }
    extras = {
        "width_used": len(cuts), "gamma": spec.gamma, "gamma_target": target, "levels": len(spec),
        "atoms": atoms.count, "grid_points": len(spec) ** n_axes, "per_degree": per_degree,
        "mode": mode, **stats,
    }
    return FreeEnergyReport(float(best), ProductDistribution(x), budget, int(seed),
                            time.perf_counter() - start, degraded, extras)


# ---------------------------------------------------------------------------
# test oracle for the intermediate problem


def z_star_oracle(decomp: CutDecomposition, gamma: float) -> float:
    """``log Z*``: max over level vectors of ``sum_t d_t r_t c_t + log |X_{r,c}|``.

    ``X_{r,c}`` is the set of configurations with every cut-side sum within
    ``gamma n`` of its level (closed windows, so boundary states count in both
    neighbouring buckets).  Counted exactly over ``{+-1}^n``.
    """
    n = decomp.n
    if n > Z_STAR_CAP:
        raise TooLargeForExact(f"n = {n} exceeds the counting cap {Z_STAR_CAP}")
    spec = grid(n, gamma)
    X = all_states(n)
    sides = [s for c in decomp.cuts for s in c.index_sets]
    if not sides:
        return n * math.log(2.0)
    L = len(spec)
    width = gamma * n
    lo_idx, hi_idx = [], []
    for s in sides:
        vals = X[:, list(s)].sum(axis=1)
        k0 = np.clip(np.floor((vals - spec.levels[0] + width) / (2 * width)), 0, L - 1).astype(np.int64)

        def near(k):
            inside = np.abs(vals - spec.levels[np.clip(k, 0, L - 1)]) <= width + _WINDOW_SLACK
            return (k >= 0) & (k < L) & inside

        lo = np.where(near(k0 - 1), k0 - 1, k0)
        hi = np.where(near(k0 + 1), k0 + 1, k0)
        assert np.all(np.abs(vals - spec.levels[lo]) <= width + _WINDOW_SLACK)
        lo_idx.append(lo)
        hi_idx.append(hi)
    lo_idx, hi_idx = np.array(lo_idx).T, np.array(hi_idx).T
    amb = lo_idx != hi_idx
    if int(np.sum(2.0 ** amb.sum(axis=1))) > Z_STAR_COMBO_CAP:
        raise TooLargeForExact("too many boundary states to count the buckets exactly")
    counts = Counter()
    for lo, hi, a in zip(lo_idx, hi_idx, amb):
        where = np.flatnonzero(a)
        if not len(where):
            counts[lo.tobytes()] += 1
            continue
        for pick in itertools.product((False, True), repeat=len(where)):
            idx = lo.copy()
            idx[where[list(pick)]] = hi[where[list(pick)]]
            counts[idx.tobytes()] += 1
    offsets = np.cumsum([0] + [len(c.index_sets) for c in decomp.cuts])[:-1]
    best = -math.inf
    for key, cnt in counts.items():
        lv = spec.levels[np.frombuffer(key, dtype=lo_idx.dtype)]
        e = sum(c.weight * math.prod(lv[p + q] for q in range(len(c.index_sets)))
                for c, p in zip(decomp.cuts, offsets))
        best = max(best, e + math.log(cnt))
    return best


def cut_log_partition(decomp: CutDecomposition, fields=None) -> float:
    """Exact ``log sum_x exp(cut_energy(x) + h.x)`` over ``{+-1}^n`` (test oracle)."""
    n = decomp.n
    if n > Z_STAR_CAP + 5:
        raise TooLargeForExact(f"n = {n} too large to enumerate")
    X = all_states(n)
    E = np.zeros(len(X))
    for c in decomp.cuts:
        E += c.weight * np.prod([X[:, list(s)].sum(axis=1) for s in c.index_sets], axis=0)
    if fields is not None:
        E += X @ np.asarray(fields, dtype=float)
    return float(logsumexp(E))
