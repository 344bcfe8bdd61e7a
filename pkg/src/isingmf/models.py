"""Model types, norms, energies, entropies, exact oracles and generators.

Conventions
-----------
The quadratic energy counts ordered pairs: ``sum_{i,j} J_ij x_i x_j + h.x``,
so an undirected edge of matrix weight ``w`` contributes ``2 w x_i x_j``.
A sparse :class:`Mrf` stores multilinear coefficients ``J_alpha`` directly,
``J(x) = sum_alpha J_alpha prod_{i in alpha} x_i``.  All logs are natural.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Union

import numpy as np
from scipy.special import entr

from . import kernels
from .errors import (
    AsymmetricCoupling,
    BadSubsetKey,
    DimensionMismatch,
    InvalidParams,
    ModelFormatError,
    NonFiniteEntry,
    NonzeroDiagonal,
    TooLargeForExact,
    ValidationError,
)

EXACT_CAP = 25
TAU = 1e-12  # interior clamp for anything that differentiates the entropy


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class IsingModel:
    """Pairwise model ``P(x) ~ exp(x^T J x + h.x)`` on ``{-1, +1}^n``."""

    couplings: np.ndarray
    fields: np.ndarray = None

    def __post_init__(self):
        J = _frozen(self.couplings)
        if J.ndim != 2 or J.shape[0] != J.shape[1]:
            raise DimensionMismatch(f"couplings must be square, got shape {J.shape}")
        h = _frozen(np.zeros(J.shape[0]) if self.fields is None else self.fields)
        if h.shape != (J.shape[0],):
            raise DimensionMismatch(f"fields has shape {h.shape}, expected ({J.shape[0]},)")
        object.__setattr__(self, "couplings", J)
        object.__setattr__(self, "fields", h)

    @property
    def n(self) -> int:
        return self.couplings.shape[0]

    @classmethod
    def from_edges(cls, n, edges, fields=None) -> "IsingModel":
        J = np.zeros((n, n))
        for i, j, w in edges:
            J[i, j] = J[j, i] = w
        model = cls(J, np.zeros(n) if fields is None else fields)
        validate(model)
        return model

    def scaled(self, beta: float) -> "IsingModel":
        """Couplings multiplied by ``beta``; fields untouched."""
        return IsingModel(beta * self.couplings, self.fields)

    def to_mrf(self) -> "Mrf":
        terms = {}
        n = self.n
        for i in range(n):
            if self.fields[i] != 0.0:
                terms[(i,)] = float(self.fields[i])
            for j in range(i + 1, n):
                if self.couplings[i, j] != 0.0:
                    terms[(i, j)] = 2.0 * float(self.couplings[i, j])
        return Mrf(n, terms, order=2)


@dataclass(frozen=True, eq=False)
class Mrf:
    """Binary Markov random field with a sparse multilinear potential."""

    n: int
    terms: Mapping[tuple, float]
    order: int | None = None
    _packed: tuple = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        terms = {tuple(int(i) for i in k): float(w) for k, w in dict(self.terms).items()}
        object.__setattr__(self, "terms", terms)
        if self.order is None:
            object.__setattr__(self, "order", max((len(k) for k in terms), default=1))

    def degree_slice(self, d: int) -> dict:
        return {k: w for k, w in self.terms.items() if len(k) == d}

    def packed(self):
        """Padded index array, coefficients and vertex->term incidence (CSR)."""
        if self._packed is None:
            keys = list(self.terms)
            width = max(1, max((len(k) for k in keys), default=1))
            idx = -np.ones((len(keys), width), dtype=np.int64)
            for t, k in enumerate(keys):
                idx[t, : len(k)] = k
            coef = np.array([self.terms[k] for k in keys], dtype=float)
            buckets = [[] for _ in range(self.n)]
            for t, k in enumerate(keys):
                for i in k:
                    buckets[i].append(t)
            inc_ptr = np.zeros(self.n + 1, dtype=np.int64)
            inc_ptr[1:] = np.cumsum([len(b) for b in buckets])
            inc = np.array([t for b in buckets for t in b], dtype=np.int64)
            object.__setattr__(self, "_packed", (idx, coef, inc_ptr, inc))
        return self._packed

    def pairwise_part(self) -> IsingModel:
        """Ising model carrying the degree-1 and degree-2 terms."""
        J = np.zeros((self.n, self.n))
        h = np.zeros(self.n)
        for k, w in self.terms.items():
            if len(k) == 1:
                h[k[0]] += w
            elif len(k) == 2:
                J[k[0], k[1]] += w / 2.0
                J[k[1], k[0]] += w / 2.0
        return IsingModel(J, h)


@dataclass(frozen=True, eq=False)
class ProductDistribution:
    """Product measure on ``{-1, +1}^n`` with ``E[X_i] = means[i]``."""

    means: np.ndarray

    def __post_init__(self):
        x = _frozen(self.means)
        if x.ndim != 1:
            raise DimensionMismatch("means must be a vector")
        if not np.all(np.isfinite(x)) or np.any(np.abs(x) > 1.0):
            bad = int(np.flatnonzero(~(np.abs(x) <= 1.0))[0])
            raise ValidationError(f"mean {x[bad]!r} at index {bad} outside [-1, 1]", bad)
        object.__setattr__(self, "means", x)

    @property
    def n(self) -> int:
        return self.means.shape[0]


@dataclass
class FreeEnergyReport:
    estimate: float
    marginals: ProductDistribution | None = None
    budget: dict = field(default_factory=dict)
    seed: int = 0
    wall_time: float = 0.0
    degraded: bool = False
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if not math.isfinite(self.estimate):
            raise ValueError("estimate must be finite")
        for key, val in self.budget.items():
            if val < 0:
                raise ValueError(f"budget component {key} is negative")

    def to_json(self) -> dict:
        return {
            "estimate": float(self.estimate),
            "marginals": None if self.marginals is None else [float(v) for v in self.marginals.means],
            "budget": {k: float(v) for k, v in self.budget.items()},
            "degraded": bool(self.degraded),
            "seed": int(self.seed),
            "wall_time_s": float(self.wall_time),
        }


Model = Union[IsingModel, Mrf]


def _as_means(x) -> np.ndarray:
    if isinstance(x, ProductDistribution):
        return x.means
    return np.asarray(x, dtype=float)


# ---------------------------------------------------------------------------
# validation and norms


def validate(model: Model) -> None:
    """Raise the matching :class:`ValidationError` subclass if an invariant fails."""
    if isinstance(model, IsingModel):
        J, h = model.couplings, model.fields
        if model.n < 1:
            raise ValidationError("model needs at least one vertex")
        bad = np.argwhere(~np.isfinite(J))
        if len(bad):
            i, j = map(int, bad[0])
            raise NonFiniteEntry(f"coupling ({i}, {j}) is not finite", (i, j))
        bad = np.flatnonzero(~np.isfinite(h))
        if len(bad):
            raise NonFiniteEntry(f"field {int(bad[0])} is not finite", int(bad[0]))
        diag = np.flatnonzero(np.diag(J) != 0.0)
        if len(diag):
            i = int(diag[0])
            raise NonzeroDiagonal(f"diagonal entry ({i}, {i}) = {J[i, i]!r}", i)
        bad = np.argwhere(J != J.T)
        if len(bad):
            i, j = map(int, bad[0])
            raise AsymmetricCoupling(f"J[{i},{j}] = {J[i, j]!r} but J[{j},{i}] = {J[j, i]!r}", (i, j))
        return
    if isinstance(model, Mrf):
        if model.n < 1:
            raise ValidationError("model needs at least one vertex")
        if model.order < 1:
            raise ValidationError(f"order must be >= 1, got {model.order}")
        for key, w in model.terms.items():
            if (len(key) == 0 or len(key) > model.order
                    or any(b <= a for a, b in zip(key, key[1:]))
                    or key[0] < 0 or key[-1] >= model.n):
                raise BadSubsetKey(f"term key {key!r} is not a sorted subset of size 1..{model.order}", key)
            if not math.isfinite(w):
                raise NonFiniteEntry(f"coefficient of {key!r} is not finite", key)
        return
    raise TypeError(f"unsupported model type {type(model).__name__}")


def frobenius_norm(model) -> float:
    """Frobenius norm of the coupling matrix, or of all Mrf coefficients.

    Accepts a bare matrix as well.
    """
    if isinstance(model, Mrf):
        return math.sqrt(sum(w * w for w in model.terms.values()))
    J = model.couplings if isinstance(model, IsingModel) else np.asarray(model, dtype=float)
    return float(np.sqrt(np.sum(J * J)))


def degree_norms(model: Mrf) -> dict:
    """``{d: ||J_{=d}||_F}`` for d = 1..order."""
    out = {d: 0.0 for d in range(1, model.order + 1)}
    for key, w in model.terms.items():
        out[len(key)] += w * w
    return {d: math.sqrt(s) for d, s in out.items()}


# ---------------------------------------------------------------------------
# energy and entropy


def energy(model: Model, x) -> float:
    x = _as_means(x)
    if x.shape != (model.n,):
        raise DimensionMismatch(f"vector of length {x.shape} for a model on {model.n} vertices")
    if isinstance(model, IsingModel):
        return float(x @ model.couplings @ x + model.fields @ x)
    total = 0.0
    for key, w in model.terms.items():
        total += w * float(np.prod(x[list(key)]))
    return total


def binary_entropy(p):
    """Natural-log entropy of Bernoulli(p), with H(0) = H(1) = 0."""
    p = np.asarray(p, dtype=float)
    return entr(p) + entr(1.0 - p)


def spin_entropy(x) -> np.ndarray:
    """Per-site entropy H((1 + x_i) / 2) of a product measure with means x."""
    return binary_entropy(0.5 * (1.0 + np.asarray(x, dtype=float)))


def mf_objective(model: Model, dist) -> float:
    """Energy plus entropy of a product distribution."""
    x = _as_means(dist)
    return energy(model, x) + float(np.sum(spin_entropy(x)))


# ---------------------------------------------------------------------------
# exact oracles


def exact_free_energy(model: Model, cap: int = EXACT_CAP) -> float:
    """``log Z`` by enumerating all ``2^n`` states."""
    if model.n > cap:
        raise TooLargeForExact(f"n = {model.n} exceeds the exact-enumeration cap {cap}")
    if isinstance(model, IsingModel):
        return kernels.ising_logz(model.couplings, model.fields)
    idx, coef, inc_ptr, inc = model.packed()
    return kernels.mrf_logz(model.n, idx, coef, inc_ptr, inc)


def exact_kl_to_boltzmann(model: Model, dist, cap: int = EXACT_CAP) -> float:
    """KL(product measure || Boltzmann) = log Z - (energy + entropy)."""
    return exact_free_energy(model, cap) - mf_objective(model, dist)


def all_states(n: int) -> np.ndarray:
    """All of ``{-1, +1}^n`` as rows, bit k of the row index giving spin k."""
    t = np.arange(1 << n)
    return 1.0 - 2.0 * ((t[:, None] >> np.arange(n)[None, :]) & 1)


# ---------------------------------------------------------------------------
# generators


def rng_from_seed(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed) & (2**64 - 1))))


def curie_weiss(n: int, beta: float, h: float = 0.0) -> IsingModel:
    if n < 1:
        raise InvalidParams("n must be positive")
    J = np.full((n, n), beta / (2.0 * n))
    np.fill_diagonal(J, 0.0)
    return IsingModel(J, np.full(n, float(h)))


def uniform_graph(n: int, m: int, beta: float, seed: int = 0) -> IsingModel:
    """``m`` edges drawn without replacement, each of weight ``beta n / m``."""
    pairs = list(itertools.combinations(range(n), 2))
    if not 1 <= m <= len(pairs):
        raise InvalidParams(f"m = {m} edges impossible on {n} vertices (max {len(pairs)})")
    rng = rng_from_seed(seed)
    chosen = rng.choice(len(pairs), size=m, replace=False)
    w = beta * n / m
    return IsingModel.from_edges(n, [(*pairs[c], w) for c in sorted(chosen)])


def uniform_hypergraph(n: int, m: int, r: int, beta: float, seed: int = 0) -> Mrf:
    """``m`` distinct r-subsets, each with coefficient ``beta n / m``."""
    if r < 1 or r > n:
        raise InvalidParams(f"hyperedge size {r} impossible on {n} vertices")
    total = math.comb(n, r)
    if not 1 <= m <= total:
        raise InvalidParams(f"m = {m} hyperedges impossible (max {total})")
    rng = rng_from_seed(seed)
    if total <= 200_000:
        subsets = list(itertools.combinations(range(n), r))
        chosen = [subsets[c] for c in rng.choice(total, size=m, replace=False)]
    else:
        seen = set()
        while len(seen) < m:
            seen.add(tuple(sorted(rng.choice(n, size=r, replace=False).tolist())))
        chosen = list(seen)
    w = beta * n / m
    model = Mrf(n, {tuple(s): w for s in sorted(chosen)}, order=r)
    validate(model)
    return model


def block_copies(base: IsingModel, m: int) -> IsingModel:
    """``m`` vertex-disjoint copies of ``base`` (block-diagonal couplings)."""
    if m < 1:
        raise InvalidParams("m must be positive")
    J = np.kron(np.eye(m), base.couplings)
    return IsingModel(J, np.tile(base.fields, m))


def random_gaussian(n: int, sigma: float, seed: int = 0, field_sigma: float = 0.0) -> IsingModel:
    """Symmetric couplings with iid N(0, sigma^2) upper triangle, zero diagonal."""
    if n < 1 or sigma < 0 or field_sigma < 0:
        raise InvalidParams("need n >= 1 and nonnegative scales")
    rng = rng_from_seed(seed)
    upper = np.triu(rng.normal(0.0, sigma, size=(n, n)), 1)
    h = rng.normal(0.0, field_sigma, size=n) if field_sigma > 0 else np.zeros(n)
    return IsingModel(upper + upper.T, h)


def random_mrf(n: int, r: int, sigma: float, seed: int = 0, degrees=None) -> Mrf:
    """Gaussian coefficients on every subset whose size is in ``degrees`` (default ``{r}``)."""
    rng = rng_from_seed(seed)
    terms = {}
    for d in sorted(degrees or {r}):
        for s in itertools.combinations(range(n), d):
            terms[s] = float(rng.normal(0.0, sigma))
    return Mrf(n, terms, order=r)


GENERATORS = {
    "curie_weiss": curie_weiss,
    "uniform_graph": uniform_graph,
    "uniform_hypergraph": uniform_hypergraph,
    "block_copies": block_copies,
    "random_gaussian": random_gaussian,
}


def generate(kind: str, params: dict, seed: int = 0) -> Model:
    kind = kind.replace("-", "_")
    if kind not in GENERATORS:
        raise InvalidParams(f"unknown generator {kind!r}; choose from {sorted(GENERATORS)}")
    params = dict(params)
    if kind in ("uniform_graph", "uniform_hypergraph", "random_gaussian"):
        params["seed"] = seed
    try:
        model = GENERATORS[kind](**params)
    except TypeError as exc:
        raise InvalidParams(str(exc)) from exc
    validate(model)
    return model


# ---------------------------------------------------------------------------
# JSON model files


def model_to_json(model: Model) -> dict:
    if isinstance(model, IsingModel):
        n = model.n
        iu = np.argwhere(np.triu(model.couplings, 1) != 0.0)
        return {
            "n": n,
            "edges": [[int(i), int(j), float(model.couplings[i, j])] for i, j in iu],
            "fields": [float(v) for v in model.fields],
        }
    return {
        "n": model.n,
        "terms": [[list(k), float(w)] for k, w in sorted(model.terms.items())],
        "order": int(model.order),
    }


def model_from_json(data: dict) -> Model:
    try:
        n = int(data["n"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError("model file needs an integer 'n'") from exc
    if n < 1:
        raise ModelFormatError("'n' must be positive")
    edges = data.get("edges", [])
    fields = data.get("fields")
    if fields is not None and len(fields) != n:
        raise ModelFormatError(f"'fields' has {len(fields)} entries but n = {n}")
    for e in edges:
        if len(e) != 3 or not (0 <= int(e[0]) < int(e[1]) < n):
            raise ModelFormatError(f"edge {e!r} must be [i, j, w] with 0 <= i < j < n")
    try:
        if "terms" in data:
            terms = {}
            for key, w in data["terms"]:
                key = tuple(int(i) for i in key)
                if key and (key[-1] >= n or key[0] < 0):
                    raise ModelFormatError(f"term {list(key)} references a vertex outside 0..{n - 1}")
                terms[key] = terms.get(key, 0.0) + float(w)
            for i, j, w in edges:
                key = (int(i), int(j))
                terms[key] = terms.get(key, 0.0) + 2.0 * float(w)
            for i, w in enumerate(fields or []):
                if w:
                    terms[(i,)] = terms.get((i,), 0.0) + float(w)
            model = Mrf(n, terms, order=data.get("order"))
        else:
            model = IsingModel.from_edges(n, [(int(i), int(j), float(w)) for i, j, w in edges],
                                          np.zeros(n) if fields is None else np.asarray(fields, float))
        validate(model)
    except ValidationError as exc:
        raise ModelFormatError(str(exc)) from exc
    return model


def load_model(path) -> Model:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"cannot read model file {path}: {exc}") from exc
    return model_from_json(data)


def save_model(model: Model, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_json(model), fh, indent=1)
        fh.write("\n")
