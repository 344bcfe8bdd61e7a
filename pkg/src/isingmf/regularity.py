"""Weak-regularity (cut) decompositions of matrices and index arrays.

A cut ``CUT(S, T, d)`` is the matrix equal to ``d`` on ``S x T`` and zero
elsewhere.  :func:`fk_decompose` greedily peels off the cut of largest
``|sum_{S x T} W|`` from the residual ``W`` and stops once that value drops to
``eps * ||J||_F * sqrt(mn)``.  Every accepted cut lowers ``||W||_F^2`` by
``d^2 |S||T|``, which yields the guarantees checked by the tests:

* width ``< 1 / eps^2``;
* ``sum |d_i| < ||J||_F / (eps sqrt(mn))``;
* with the exhaustive finder, ``||W||_{inf->1} <= 4 eps sqrt(mn) ||J||_F``.

Index arrays (degree slices of an :class:`~isingmf.models.Mrf`) use the same
loop over boxes ``S_1 x ... x S_d``.  A slice is stored as a dense array with
``J_alpha`` at the sorted position ``alpha`` and zeros elsewhere, so the array
applied to ``(x, ..., x)`` is the slice polynomial and its Frobenius norm is
``||J_{=d}||_F``.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import BadEpsilon, DimensionMismatch, InvalidParams, TooLargeForExact
from .models import IsingModel, Mrf

EXACT_NORM_CAP = 22
EXHAUSTIVE_DEFAULT_CAP = 16
EXHAUSTIVE_CAP = 22
TENSOR_EXHAUSTIVE_CAP = 30  # n * d
FINDERS = ("exhaustive", "greedy_local_search", "top_singular_rounding")
LOCAL_RESTARTS = 20


def _index_tuple(s) -> tuple:
    return tuple(sorted(int(i) for i in s))


@dataclass(frozen=True)
class CutMatrix:
    """``d`` on ``rows x cols``, zero elsewhere."""

    rows: tuple
    cols: tuple
    weight: float

    def __post_init__(self):
        object.__setattr__(self, "rows", _index_tuple(self.rows))
        object.__setattr__(self, "cols", _index_tuple(self.cols))
        if not self.rows or not self.cols:
            raise InvalidParams("cut rows and cols must be nonempty")
        if not math.isfinite(self.weight):
            raise InvalidParams("cut weight must be finite")
        object.__setattr__(self, "weight", float(self.weight))

    @property
    def index_sets(self) -> tuple:
        return (self.rows, self.cols)

    @property
    def size(self) -> int:
        return len(self.rows) * len(self.cols)


@dataclass(frozen=True)
class CutArray:
    """``d`` on the box ``S_1 x ... x S_k``."""

    index_sets: tuple
    weight: float

    def __post_init__(self):
        sets = tuple(_index_tuple(s) for s in self.index_sets)
        if len(sets) < 2:
            raise InvalidParams("a cut array needs at least two index sets")
        if any(not s for s in sets):
            raise InvalidParams("cut index sets must be nonempty")
        if not math.isfinite(self.weight):
            raise InvalidParams("cut weight must be finite")
        object.__setattr__(self, "index_sets", sets)
        object.__setattr__(self, "weight", float(self.weight))

    @property
    def size(self) -> int:
        return math.prod(len(s) for s in self.index_sets)


@dataclass
class CutDecomposition:
    """Ordered list of cuts approximating a matrix or index array.

    ``cut_values[i]`` is ``|sum|`` of the residual over the box of cut ``i`` at
    the moment it was extracted.  ``final_cut_value`` is the largest value the
    finder saw when it stopped; with the exhaustive finder it is the cut norm
    of the returned residual.
    """

    cuts: list
    n: int
    epsilon_used: float
    residual_frobenius: float
    shape: tuple = None
    finder: str = "exhaustive"
    cut_values: list = field(default_factory=list)
    final_cut_value: float = 0.0
    source_frobenius: float = 0.0
    hit_width_cap: bool = False

    def __post_init__(self):
        if self.shape is None:
            self.shape = (self.n, self.n)

    @property
    def width(self) -> int:
        return len(self.cuts)

    @property
    def order(self) -> int:
        return len(self.shape)

    @property
    def weights(self) -> np.ndarray:
        return np.array([c.weight for c in self.cuts], dtype=float)

    @property
    def coefficient_length(self) -> float:
        return float(np.sqrt(np.sum(self.weights ** 2)))

    @property
    def coefficient_l1(self) -> float:
        return float(np.sum(np.abs(self.weights)))

    @property
    def certified(self) -> bool:
        """True when the stop rule was checked by an exact cut search."""
        return self.finder == "exhaustive" and not self.hit_width_cap

    def materialize(self) -> np.ndarray:
        return materialize(self)

    def truncated(self, keep) -> "CutDecomposition":
        """Sub-decomposition with the cuts at positions ``keep`` (order kept)."""
        keep = sorted(keep)
        return CutDecomposition(
            [self.cuts[i] for i in keep], self.n, self.epsilon_used, float("nan"), self.shape,
            self.finder, [self.cut_values[i] for i in keep] if self.cut_values else [],
            float("nan"), self.source_frobenius, self.hit_width_cap,
        )

    def to_json(self) -> dict:
        cuts = []
        for c in self.cuts:
            if isinstance(c, CutMatrix):
                cuts.append({"rows": list(c.rows), "cols": list(c.cols), "d": c.weight})
            else:
                cuts.append({"sets": [list(s) for s in c.index_sets], "d": c.weight})
        return {"n": self.n, "cuts": cuts, "epsilon": self.epsilon_used}

    @classmethod
    def from_json(cls, data) -> "CutDecomposition":
        if isinstance(data, str):
            data = json.loads(data)
        cuts = []
        for c in data["cuts"]:
            if "sets" in c:
                cuts.append(CutArray(tuple(c["sets"]), c["d"]))
            else:
                cuts.append(CutMatrix(tuple(c["rows"]), tuple(c["cols"]), c["d"]))
        n = int(data["n"])
        order = len(cuts[0].index_sets) if cuts else 2
        dec = cls(cuts, n, float(data["epsilon"]), 0.0, (n,) * order)
        dec.residual_frobenius = float("nan")
        return dec


@dataclass
class AtomPartition:
    """Common refinement of the cut index sets.

    ``sides`` lists every cut side in order (``R_1, C_1, R_2, ...`` for
    matrices); ``membership[k]`` holds the atoms whose union is ``sides[k]``.
    """

    atoms: list
    membership: list
    sizes: np.ndarray
    n: int
    labels: np.ndarray
    sides: list

    @property
    def count(self) -> int:
        return len(self.atoms)

    def side_matrix(self) -> np.ndarray:
        """``K x A`` 0/1 matrix with a one where atom ``a`` lies in side ``k``."""
        M = np.zeros((len(self.membership), len(self.atoms)))
        for k, members in enumerate(self.membership):
            M[k, list(members)] = 1.0
        return M


# ---------------------------------------------------------------------------
# norms


def inf_to_one_norm_exact(W) -> float:
    """``max_{x in {+-1}^n} sum_i |(W x)_i|`` by enumeration of ``2^(n-1)`` sign vectors."""
    W = np.asarray(W, dtype=float)
    if W.ndim != 2:
        raise DimensionMismatch("expected a matrix")
    if W.shape[1] > EXACT_NORM_CAP:
        raise TooLargeForExact(f"{W.shape[1]} columns exceed the exact-norm cap {EXACT_NORM_CAP}")
    return kernels.inf_to_one(W)


def tensor_inf_to_one_exact(T) -> float:
    """Array version: sign vectors in every slot but the first.

    Bounds ``|T(x_1, ..., x_d)|`` for all ``x_q`` in the cube.
    """
    T = np.asarray(T, dtype=float)
    if T.ndim == 2:
        return inf_to_one_norm_exact(T)
    n = T.shape[0]
    outer = n * (T.ndim - 2)
    if outer + n > EXACT_NORM_CAP + 4:
        raise TooLargeForExact(f"{outer + n} enumerated signs exceed the cap")
    signs = 1.0 - 2.0 * ((np.arange(1 << n)[:, None] >> np.arange(n)) & 1)
    best = 0.0
    flat = T.reshape(n * n, -1)
    for combo in itertools.product(range(1 << n), repeat=T.ndim - 2):
        vec = signs[combo[0]]
        for c in combo[1:]:
            vec = np.multiply.outer(vec, signs[c])
        M = (flat @ vec.reshape(-1)).reshape(n, n)
        best = max(best, kernels.inf_to_one(M))
    return best


def _frob(A) -> float:
    return float(np.sqrt(np.sum(np.asarray(A, dtype=float) ** 2)))


# ---------------------------------------------------------------------------
# cut finders


def _box_sum(W, masks) -> float:
    A = W
    for q in range(len(masks) - 1, -1, -1):
        A = np.tensordot(A, masks[q].astype(float), axes=([q], [0]))
    return float(A)


def _contract_except(W, masks, q):
    A = W
    for p in range(len(masks) - 1, -1, -1):
        if p != q:
            A = np.tensordot(A, masks[p].astype(float), axes=([p], [0]))
    return A


def _local_search(W, masks, sign, max_rounds=200):
    """Alternate exact maximisation of ``sign * W(S_1, ..., S_d)`` over one slot at a time."""
    masks = [m.copy() for m in masks]
    value = sign * _box_sum(W, masks)
    for _ in range(max_rounds):
        improved = False
        for q in range(W.ndim):
            u = sign * _contract_except(W, masks, q)
            new = u > 0
            if not new.any():
                return masks, -math.inf
            cand = float(u[new].sum())
            if cand > value * (1 + 1e-13) + 1e-300 and not np.array_equal(new, masks[q]):
                masks[q] = new
                value = cand
                improved = True
        if not improved:
            break
    return masks, value


def _best_local(W, starts):
    best_masks, best_val = None, 0.0
    for masks in starts:
        for sign in (1.0, -1.0):
            if any(not m.any() for m in masks):
                continue
            got, val = _local_search(W, masks, sign)
            if val > best_val * (1 + 1e-12):
                best_masks, best_val = got, val
    return best_masks, best_val


def find_cut_greedy(W, rng, restarts: int = LOCAL_RESTARTS):
    """Best of alternating local searches from all-ones and random starts."""
    n = W.shape
    starts = [[np.ones(k, dtype=bool) for k in n]]
    for _ in range(restarts):
        starts.append([rng.random(k) < 0.5 for k in n])
    return _best_local(W, starts)


def find_cut_singular(W, rng, restarts: int = 2):
    """Sign-round the top singular vector of every unfolding, then local search."""
    vecs = []
    for q in range(W.ndim):
        unfold = np.moveaxis(W, q, 0).reshape(W.shape[q], -1)
        u = np.linalg.svd(unfold, full_matrices=False)[0][:, 0] if unfold.any() else np.ones(W.shape[q])
        vecs.append(u)
    starts = []
    for signs in itertools.product((1.0, -1.0), repeat=W.ndim):
        starts.append([s * v > 0 for s, v in zip(signs, vecs)])
    starts += [[rng.random(k) < 0.5 for k in W.shape] for _ in range(restarts)]
    return _best_local(W, starts)


def find_cut_exhaustive(W, rng=None):
    """Exact argmax of ``|W(S_1, ..., S_d)|``.

    The first ``d - 2`` sets are enumerated outright, the last two go to the
    gray-code row-set kernel.
    """
    if W.ndim == 2:
        if not W.any():
            return None, 0.0
        rows, sign = kernels.best_rowset(W)
        if not rows.any():
            return None, 0.0
        u = sign * W[rows].sum(axis=0)
        cols = u > 1e-14 * (1.0 + np.abs(u).max())
        if not cols.any():
            return None, 0.0
        return [rows, cols], abs(float(u[cols].sum()))
    n = W.shape[0]
    best_masks, best_val = None, 0.0
    bits = (np.arange(1 << n)[:, None] >> np.arange(n)) & 1
    flat = W.reshape(n, -1)
    for combo in itertools.product(range(1, 1 << n), repeat=W.ndim - 2):
        A = flat
        for c in combo:
            A = (bits[c].astype(float) @ A.reshape(n, -1))
        M = A.reshape(W.shape[-2], W.shape[-1])
        masks, val = find_cut_exhaustive(M)
        if masks is not None and val > best_val * (1 + 1e-12):
            best_masks = [bits[c].astype(bool) for c in combo] + masks
            best_val = val
    return best_masks, best_val


def _pick_finder(name, shape):
    n_max = max(shape)
    if name is None:
        if len(shape) == 2:
            name = "exhaustive" if n_max <= EXHAUSTIVE_DEFAULT_CAP else "greedy_local_search"
        else:
            name = "exhaustive" if n_max * len(shape) <= TENSOR_EXHAUSTIVE_CAP else "greedy_local_search"
    if name not in FINDERS:
        raise InvalidParams(f"unknown cut finder {name!r}; choose from {FINDERS}")
    if name == "exhaustive":
        if len(shape) == 2 and shape[0] > EXHAUSTIVE_CAP:
            raise TooLargeForExact(f"exhaustive cut search needs at most {EXHAUSTIVE_CAP} rows")
        if len(shape) > 2 and n_max * len(shape) > TENSOR_EXHAUSTIVE_CAP:
            raise TooLargeForExact(f"exhaustive box search needs n*d <= {TENSOR_EXHAUSTIVE_CAP}")
    return name


def _check_epsilon(epsilon):
    if not (isinstance(epsilon, (int, float, np.floating)) and 0.0 < float(epsilon) <= 1.0):
        raise BadEpsilon(f"epsilon must lie in (0, 1], got {epsilon!r}")
    return float(epsilon)


# ---------------------------------------------------------------------------
# decomposition loop


def _decompose(A, epsilon, seed, cut_finder, width_cap):
    A = np.array(A, dtype=float)
    rng = np.random.default_rng(seed)
    finder = _pick_finder(cut_finder, A.shape)
    search = {"exhaustive": find_cut_exhaustive, "greedy_local_search": find_cut_greedy,
              "top_singular_rounding": find_cut_singular}[finder]
    fro = _frob(A)
    N = math.prod(A.shape)
    threshold = epsilon * fro * math.sqrt(N)
    W = A.copy()
    cuts, values = [], []
    last = 0.0
    hit_cap = False
    while True:
        masks, val = search(W, rng)
        last = val if masks is not None else 0.0
        if masks is None or val <= threshold:
            break
        if len(cuts) >= width_cap:
            hit_cap = True
            break
        box = np.ix_(*masks)
        total = float(W[box].sum())
        d = total / math.prod(int(m.sum()) for m in masks)
        W[box] -= d
        sets = [np.flatnonzero(m) for m in masks]
        cuts.append(CutMatrix(sets[0], sets[1], d) if A.ndim == 2 else CutArray(tuple(sets), d))
        values.append(abs(total))
    return cuts, values, W, finder, last, hit_cap, fro


def fk_decompose(J, epsilon: float, seed: int = 0, cut_finder: str | None = None,
                 max_width: int | None = None) -> CutDecomposition:
    """Frieze-Kannan cut decomposition of a matrix (or an :class:`IsingModel`'s couplings).

    Parameters
    ----------
    J : array_like or IsingModel
        ``m x n`` matrix.
    epsilon : float
        Accuracy in ``(0, 1]``; the loop stops once no cut has
        ``|W(S, T)| > epsilon ||J||_F sqrt(mn)``.
    seed : int
        Seeds the randomised finders; the exhaustive finder ignores it.
    cut_finder : str, optional
        ``exhaustive``, ``greedy_local_search`` or ``top_singular_rounding``.
        Default: exhaustive when ``m <= 16``, else local search.
    max_width : int, optional
        Extra hard cap on the number of cuts (the default cap is ``ceil(16/eps^2)``).
    """
    epsilon = _check_epsilon(epsilon)
    A = J.couplings if isinstance(J, IsingModel) else np.asarray(J, dtype=float)
    if A.ndim != 2:
        raise DimensionMismatch("fk_decompose expects a matrix")
    cap = math.ceil(16.0 / epsilon ** 2)
    if max_width is not None:
        cap = min(cap, int(max_width))
    cuts, values, W, finder, last, hit, fro = _decompose(A, epsilon, seed, cut_finder, cap)
    return CutDecomposition(cuts, A.shape[1], epsilon, _frob(W), A.shape, finder, values, last, fro, hit)


def slice_array(model: Mrf, d: int) -> np.ndarray:
    """Dense ``n^d`` array holding the degree-``d`` coefficients at sorted positions."""
    T = np.zeros((model.n,) * d)
    for key, w in model.degree_slice(d).items():
        T[key] += w
    return T


def tensor_decompose(T, epsilon: float, seed: int = 0, cut_finder: str | None = None,
                     degree: int | None = None, max_width: int | None = None) -> CutDecomposition:
    """Cut decomposition of an order-``d`` array into boxes ``S_1 x ... x S_d``.

    ``T`` is a dense array, or an :class:`Mrf` together with ``degree``.
    Stops once no box has ``|W(S_1..S_d)| > epsilon ||T||_F sqrt(n^d)``, so the
    width is below ``1/eps^2`` and ``sum |d_i| < ||T||_F / (eps sqrt(n^d))``.
    """
    epsilon = _check_epsilon(epsilon)
    if isinstance(T, Mrf):
        if degree is None:
            raise InvalidParams("degree is required when decomposing an Mrf slice")
        T = slice_array(T, degree)
    T = np.asarray(T, dtype=float)
    if T.ndim < 2 or len(set(T.shape)) != 1:
        raise DimensionMismatch("expected a cubical array of order >= 2")
    cap = math.ceil(4.0 / epsilon ** 2)
    if max_width is not None:
        cap = min(cap, int(max_width))
    cuts, values, W, finder, last, hit, fro = _decompose(T, epsilon, seed, cut_finder, cap)
    return CutDecomposition(cuts, T.shape[0], epsilon, _frob(W), T.shape, finder, values, last, fro, hit)


# ---------------------------------------------------------------------------
# atoms, energies, materialisation


def refine_atoms(decomps, n: int | None = None, fields=None) -> AtomPartition:
    """Common refinement of every cut side of one or more decompositions.

    Passing ``fields`` additionally separates vertices with different field
    values, so a field term is constant on each atom.
    """
    if isinstance(decomps, CutDecomposition):
        decomps = [decomps]
    if n is None:
        if not decomps:
            raise InvalidParams("n is required without decompositions")
        n = decomps[0].n
    sides = [s for dec in decomps for c in dec.cuts for s in c.index_sets]
    sig = np.zeros((n, len(sides) + (0 if fields is None else 1)))
    for k, s in enumerate(sides):
        sig[list(s), k] = 1.0
    if fields is not None:
        sig[:, -1] = np.asarray(fields, dtype=float)
    _, first, labels = np.unique(sig, axis=0, return_index=True, return_inverse=True)
    labels = labels.reshape(-1)
    # renumber atoms by their smallest vertex
    order = np.argsort(first, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    labels = rank[labels]
    atoms = [np.flatnonzero(labels == a) for a in range(len(order))]
    membership = [tuple(sorted(set(int(a) for a in labels[list(s)]))) for s in sides]
    sizes = np.array([len(a) for a in atoms], dtype=float) / n
    return AtomPartition(atoms, membership, sizes, n, labels, [tuple(s) for s in sides])


def cut_energy(decomp: CutDecomposition, x) -> float:
    """``sum_i d_i prod_q (sum_{a in S_q^i} x_a)``; the materialised array applied to ``(x, ..., x)``."""
    x = np.asarray(x, dtype=float)
    if x.shape != (decomp.n,):
        raise DimensionMismatch(f"x has shape {x.shape}, expected ({decomp.n},)")
    total = 0.0
    for c in decomp.cuts:
        total += c.weight * math.prod(float(x[list(s)].sum()) for s in c.index_sets)
    return total


def materialize(decomp: CutDecomposition) -> np.ndarray:
    D = np.zeros(decomp.shape)
    for c in decomp.cuts:
        D[np.ix_(*[list(s) for s in c.index_sets])] += c.weight
    return D
