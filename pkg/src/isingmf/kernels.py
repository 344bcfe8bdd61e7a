"""Hot inner loops.

Every kernel exists twice: a loop version compiled with numba and a numpy
version (vectorised where the loop allows it, a plain Python loop where it is
inherently sequential).  The public dispatchers at the bottom pick one based on
``isingmf._accel.USE_NUMBA``; the ``*_numpy`` and ``*_jit`` names stay
importable so tests and the benchmark can compare both paths directly.
"""
import math
import types

import numpy as np
from scipy.special import logsumexp

from ._accel import USE_NUMBA, jit_always

RESYNC = 4096  # gray-code steps between exact recomputations of the running state

STATUS_OK = 0
STATUS_INFEASIBLE = 1
STATUS_UNKNOWN = 2


def _trailing_zeros(t):
    k = 0
    while (t & 1) == 0:
        t >>= 1
        k += 1
    return k


_trailing_zeros_jit = jit_always(_trailing_zeros)


# ---------------------------------------------------------------------------
# exact log partition function, pairwise model


def _ising_state(J, h, x):
    n = J.shape[0]
    local = np.zeros(n)
    e = 0.0
    for i in range(n):
        s = 0.0
        for j in range(n):
            s += J[i, j] * x[j]
        local[i] = s
        e += x[i] * s + h[i] * x[i]
    return local, e


_ising_state_jit = jit_always(_ising_state)


@jit_always
def ising_logz_jit(J, h):
    n = J.shape[0]
    x = -np.ones(n)
    local, e = _ising_state_jit(J, h, x)
    m = e
    acc = 1.0
    total = 1 << n
    for t in range(1, total):
        k = _trailing_zeros_jit(t)
        old = x[k]
        e += -4.0 * old * local[k] - 2.0 * h[k] * old
        x[k] = -old
        for j in range(n):
            local[j] -= 2.0 * J[j, k] * old
        if (t & (RESYNC - 1)) == 0:
            local, e = _ising_state_jit(J, h, x)
        if e > m:
            acc = acc * math.exp(m - e) + 1.0
            m = e
        else:
            acc += math.exp(e - m)
    return m + math.log(acc)


def _sign_table(bits):
    idx = np.arange(1 << bits)
    return 1.0 - 2.0 * ((idx[:, None] >> np.arange(bits)[None, :]) & 1)


def ising_logz_numpy(J, h, chunk_bits=12):
    n = J.shape[0]
    b = min(n, chunk_bits)
    a = n - b
    lo, hi = slice(0, b), slice(b, n)
    X_lo = _sign_table(b)
    E_lo = np.einsum("ki,ij,kj->k", X_lo, J[lo, lo], X_lo) + X_lo @ h[lo]
    if a == 0:
        return float(logsumexp(E_lo))
    X_hi = _sign_table(a)
    E_hi = np.einsum("ki,ij,kj->k", X_hi, J[hi, hi], X_hi) + X_hi @ h[hi]
    cross = 2.0 * (X_hi @ J[hi, lo])
    parts = []
    step = max(1, (1 << 20) >> b)
    for start in range(0, X_hi.shape[0], step):
        sl = slice(start, start + step)
        E = E_hi[sl, None] + E_lo[None, :] + cross[sl] @ X_lo.T
        parts.append(logsumexp(E))
    return float(logsumexp(np.array(parts)))


# ---------------------------------------------------------------------------
# exact log partition function, sparse multilinear polynomial
#
# terms are given as a padded index array ``idx`` (T x r, padding = -1) with
# coefficients ``coef``; ``inc_ptr``/``inc`` is the vertex -> term incidence CSR.


@jit_always
def mrf_logz_jit(n, idx, coef, inc_ptr, inc):
    T = idx.shape[0]
    vals = coef.copy()  # all spins start at -1
    for t in range(T):
        for q in range(idx.shape[1]):
            if idx[t, q] >= 0:
                vals[t] = -vals[t]
    e = 0.0
    for t in range(T):
        e += vals[t]
    m = e
    acc = 1.0
    total = 1 << n
    for step in range(1, total):
        k = _trailing_zeros_jit(step)
        delta = 0.0
        for p in range(inc_ptr[k], inc_ptr[k + 1]):
            t = inc[p]
            delta -= 2.0 * vals[t]
            vals[t] = -vals[t]
        e += delta
        if (step & (RESYNC - 1)) == 0:
            e = 0.0
            for t in range(T):
                e += vals[t]
        if e > m:
            acc = acc * math.exp(m - e) + 1.0
            m = e
        else:
            acc += math.exp(e - m)
    return m + math.log(acc)


def mrf_logz_numpy(n, idx, coef, inc_ptr=None, inc=None, chunk=1 << 14):
    padded = np.where(idx < 0, n, idx)
    parts = []
    total = 1 << n
    for start in range(0, total, chunk):
        t = np.arange(start, min(total, start + chunk))
        X = 1.0 - 2.0 * ((t[:, None] >> np.arange(n)[None, :]) & 1)
        X = np.hstack([X, np.ones((X.shape[0], 1))])
        E = np.prod(X[:, padded], axis=2) @ coef if len(coef) else np.zeros(X.shape[0])
        parts.append(logsumexp(E))
    return float(logsumexp(np.array(parts)))


# ---------------------------------------------------------------------------
# infinity -> 1 norm by enumeration of column sign vectors


@jit_always
def inf_to_one_jit(W):
    m, n = W.shape
    if n == 0:
        return 0.0
    x = np.ones(n)
    y = np.zeros(m)
    for i in range(m):
        s = 0.0
        for j in range(n):
            s += W[i, j]
        y[i] = s
    best = 0.0
    for i in range(m):
        best += abs(y[i])
    # the last column stays +1: x and -x give the same value
    total = 1 << (n - 1)
    for t in range(1, total):
        k = _trailing_zeros_jit(t)
        old = x[k]
        x[k] = -old
        for i in range(m):
            y[i] -= 2.0 * old * W[i, k]
        if (t & (RESYNC - 1)) == 0:
            for i in range(m):
                s = 0.0
                for j in range(n):
                    s += W[i, j] * x[j]
                y[i] = s
        v = 0.0
        for i in range(m):
            v += abs(y[i])
        if v > best:
            best = v
    return best


def inf_to_one_numpy(W, chunk=1 << 14):
    m, n = W.shape
    if n == 0:
        return 0.0
    best = 0.0
    total = 1 << (n - 1)
    for start in range(0, total, chunk):
        t = np.arange(start, min(total, start + chunk))
        X = 1.0 - 2.0 * ((t[:, None] >> np.arange(n - 1)[None, :]) & 1)
        X = np.hstack([X, np.ones((X.shape[0], 1))])
        best = max(best, float(np.abs(X @ W.T).sum(axis=1).max()))
    return best


# ---------------------------------------------------------------------------
# exhaustive best cut: argmax over (S, T) of |sum_{S x T} W|
#
# Rows are enumerated in gray-code order; for a fixed row set the optimal
# column set is the support of the positive (or negative) part of the row sum.
# Near-ties (relative 1e-12) go to the smaller box |S||T|, then to the earlier
# gray index, so an exact cut matrix is recovered without padding rows.
# Returns the gray index of the best row set and the sign that won.

_TIE = 1e-12


@jit_always
def best_rowset_jit(W):
    m, n = W.shape
    u = np.zeros(n)
    best = 0.0
    best_t = 0
    best_sign = 1
    best_size = 1 << 62
    total = 1 << m
    mask = np.zeros(m, dtype=np.bool_)
    nrows = 0
    for t in range(1, total):
        k = _trailing_zeros_jit(t)
        if mask[k]:
            mask[k] = False
            nrows -= 1
            for j in range(n):
                u[j] -= W[k, j]
        else:
            mask[k] = True
            nrows += 1
            for j in range(n):
                u[j] += W[k, j]
        if (t & (RESYNC - 1)) == 0:
            for j in range(n):
                s = 0.0
                for i in range(m):
                    if mask[i]:
                        s += W[i, j]
                u[j] = s
        pos = 0.0
        neg = 0.0
        npos = 0
        nneg = 0
        for j in range(n):
            if u[j] > 0:
                pos += u[j]
                npos += 1
            elif u[j] < 0:
                neg -= u[j]
                nneg += 1
        for sgn in (1, -1):
            v = pos if sgn == 1 else neg
            size = nrows * (npos if sgn == 1 else nneg)
            if v <= 0.0:
                continue
            slack = _TIE * (1.0 + best)
            if v > best + slack or (v >= best - slack and size < best_size):
                best = v
                best_t = t
                best_sign = sgn
                best_size = size
    return best_t, best_sign


def best_rowset_numpy(W, chunk=1 << 13):
    m, n = W.shape
    best, best_t, best_sign, best_size = 0.0, 0, 1, 1 << 62
    total = 1 << m
    for start in range(1, total, chunk):
        t = np.arange(start, min(total, start + chunk))
        g = t ^ (t >> 1)
        B = ((g[:, None] >> np.arange(m)[None, :]) & 1).astype(float)
        U = B @ W
        rows = B.sum(axis=1).astype(np.int64)
        # interleave (pos, neg) per row set to mirror the loop order
        val = np.stack([np.where(U > 0, U, 0.0).sum(axis=1), -np.where(U < 0, U, 0.0).sum(axis=1)], axis=1).ravel()
        size = np.stack([rows * (U > 0).sum(axis=1), rows * (U < 0).sum(axis=1)], axis=1).ravel()
        vmax = float(val.max())
        if vmax <= 0.0:
            continue
        near = np.flatnonzero(val >= vmax - _TIE * (1.0 + vmax))
        i = int(near[np.argmin(size[near])])
        v, sz = float(val[i]), int(size[i])
        slack = _TIE * (1.0 + best)
        if v > best + slack or (v >= best - slack and sz < best_size):
            best, best_t, best_sign, best_size = v, int(t[i // 2]), 1 if i % 2 == 0 else -1, sz
    return best_t, best_sign


# ---------------------------------------------------------------------------
# Gauss-Seidel mean-field sweeps (exact coordinate ascent on the box)


@jit_always
def gauss_seidel_jit(J, h, x, lo, hi, max_sweeps, tol):
    n = J.shape[0]
    local = np.zeros(n)
    for i in range(n):
        s = 0.0
        for j in range(n):
            s += J[i, j] * x[j]
        local[i] = s
    sweeps = 0
    for sweep in range(max_sweeps):
        sweeps += 1
        biggest = 0.0
        for i in range(n):
            new = math.tanh(2.0 * local[i] + h[i])
            if new < lo:
                new = lo
            elif new > hi:
                new = hi
            d = new - x[i]
            if d != 0.0:
                for j in range(n):
                    local[j] += J[j, i] * d
                x[i] = new
                if abs(d) > biggest:
                    biggest = abs(d)
        if biggest <= tol:
            break
    return sweeps


def gauss_seidel_numpy(J, h, x, lo, hi, max_sweeps, tol):
    n = J.shape[0]
    local = J @ x
    sweeps = 0
    for _ in range(max_sweeps):
        sweeps += 1
        biggest = 0.0
        for i in range(n):
            new = min(max(math.tanh(2.0 * local[i] + h[i]), lo), hi)
            d = new - x[i]
            if d != 0.0:
                local += J[:, i] * d
                x[i] = new
                biggest = max(biggest, abs(d))
        if biggest <= tol:
            break
    return sweeps


# ---------------------------------------------------------------------------
# single-site heat-bath Glauber dynamics driven by pre-drawn randomness


def _glauber_loop(J, h, x, local, sites, uniforms):
    for t in range(sites.shape[0]):
        i = sites[t]
        field = 2.0 * local[i] + h[i]
        p = 1.0 / (1.0 + math.exp(-2.0 * field))
        new = 1.0 if uniforms[t] < p else -1.0
        if new != x[i]:
            d = new - x[i]
            for j in range(J.shape[0]):
                local[j] += J[j, i] * d
            x[i] = new


glauber_jit = jit_always(_glauber_loop)


def glauber_numpy(J, h, x, local, sites, uniforms):
    for t in range(sites.shape[0]):
        i = sites[t]
        field = 2.0 * local[i] + h[i]
        p = 1.0 / (1.0 + math.exp(-2.0 * field))
        new = 1.0 if uniforms[t] < p else -1.0
        if new != x[i]:
            local += J[:, i] * (new - x[i])
            x[i] = new


def _glauber_blowup_loop(J, h, m, spins, Y, sites, uniforms):
    n = J.shape[0]
    for t in range(sites.shape[0]):
        v = sites[t]
        i = v // m
        s = 0.0
        for j in range(n):
            s += J[i, j] * Y[j]
        field = 2.0 * s / m + h
        p = 1.0 / (1.0 + math.exp(-2.0 * field))
        new = 1.0 if uniforms[t] < p else -1.0
        if new != spins[v]:
            Y[i] += new - spins[v]
            spins[v] = new


glauber_blowup_jit = jit_always(_glauber_blowup_loop)


def glauber_blowup_numpy(J, h, m, spins, Y, sites, uniforms):
    for t in range(sites.shape[0]):
        v = sites[t]
        i = v // m
        field = 2.0 * float(J[i] @ Y) / m + h
        p = 1.0 / (1.0 + math.exp(-2.0 * field))
        new = 1.0 if uniforms[t] < p else -1.0
        if new != spins[v]:
            Y[i] += new - spins[v]
            spins[v] = new


# ---------------------------------------------------------------------------
# max-entropy program over atoms
#
#   max  sum_a v_a [H((1+u_a)/2) + f_a u_a]
#   s.t. -1 <= u_a <= 1,   lo_k <= sum_a M_ka v_a u_a <= hi_k
#
# solved by exact dual coordinate descent; u = tanh(f - M^T mu) on free atoms.
# Atoms forced to +-1 by a tight window are fixed by a presolve pass.

_FEAS_TOL = 1e-12


def _log2cosh_py(t):
    a = abs(t)
    return a + math.log1p(math.exp(-2.0 * a))


def _binary_entropy_pm_py(u):
    p = 0.5 * (1.0 + u)
    q = 1.0 - p
    r = 0.0
    if p > 0.0:
        r -= p * math.log(p)
    if q > 0.0:
        r -= q * math.log(q)
    return r


def _newton_polish(M, v, f, fixed, active, lo_e, hi_e, mu, iters):
    """Newton on the dual restricted to the constraints with nonzero multiplier.

    Each such constraint is held at the bound its multiplier points to.  The
    multipliers are overwritten only if no sign flips, i.e. the active set
    stays consistent.
    """
    K, A = M.shape
    sel = np.zeros(K, dtype=np.int64)
    na = 0
    for k in range(K):
        if active[k] and mu[k] != 0.0:
            sel[na] = k
            na += 1
    if na == 0:
        return False
    target = np.zeros(na)
    for p in range(na):
        k = sel[p]
        target[p] = hi_e[k] if mu[k] > 0.0 else lo_e[k]
    trial = mu.copy()
    theta = np.zeros(A)
    u = np.zeros(A)
    r = np.zeros(na)

    def residual(mv):
        for a in range(A):
            t = f[a]
            for k in range(K):
                if active[k] and M[k, a] != 0.0:
                    t -= mv[k]
            theta[a] = t
            u[a] = math.tanh(t) if fixed[a] == 0.0 else 0.0
        norm = 0.0
        for p in range(na):
            k = sel[p]
            sk = 0.0
            for a in range(A):
                if M[k, a] != 0.0 and fixed[a] == 0.0:
                    sk += v[a] * u[a]
            r[p] = sk - target[p]
            norm = max(norm, abs(r[p]))
        return norm

    norm = residual(trial)
    for it in range(iters):
        if norm <= 1e-15:
            break
        H = np.zeros((na, na))
        for p in range(na):
            for q in range(na):
                acc = 0.0
                for a in range(A):
                    if fixed[a] == 0.0 and M[sel[p], a] != 0.0 and M[sel[q], a] != 0.0:
                        acc += v[a] * (1.0 - u[a] * u[a])
                H[p, q] = acc
        biggest = 0.0
        for p in range(na):
            biggest = max(biggest, H[p, p])
        if biggest <= 0.0:
            return False
        for p in range(na):
            H[p, p] += 1e-14 * biggest
        delta = np.linalg.solve(H, r.copy())
        step = 1.0
        base = trial.copy()
        accepted = False
        while step > 1e-10:
            for p in range(na):
                trial[sel[p]] = base[sel[p]] + step * delta[p]
            new_norm = residual(trial)
            if new_norm < norm:
                accepted = True
                norm = new_norm
                break
            step *= 0.5
        if not accepted:
            trial[:] = base
            norm = residual(trial)
            break
    for p in range(na):
        k = sel[p]
        if trial[k] * mu[k] <= 0.0:
            return False
    for k in range(K):
        mu[k] = trial[k]
    return True


_newton_polish_jit = jit_always(_newton_polish)


_log2cosh = jit_always(_log2cosh_py)
_binary_entropy_pm = jit_always(_binary_entropy_pm_py)


def _entropy_cd(M, v, f, lo, hi, tol, max_sweeps, u_out):
    K, A = M.shape
    # identical constraint rows make the dual degenerate: intersect their windows
    lo_w = lo.copy()
    hi_w = hi.copy()
    active = np.ones(K, dtype=np.bool_)
    for k in range(K):
        for k2 in range(k):
            if not active[k2]:
                continue
            same = True
            for a in range(A):
                if M[k, a] != M[k2, a]:
                    same = False
                    break
            if same:
                lo_w[k2] = max(lo_w[k2], lo_w[k])
                hi_w[k2] = min(hi_w[k2], hi_w[k])
                active[k] = False
                break
    for k in range(K):
        if active[k] and lo_w[k] > hi_w[k] + _FEAS_TOL:
            return STATUS_INFEASIBLE, 0.0, 0.0
    fixed = np.zeros(A)
    lo_e = lo_w.copy()
    hi_e = hi_w.copy()
    changed = True
    while changed:
        changed = False
        for k in range(K):
            if not active[k]:
                continue
            cap = 0.0
            fs = 0.0
            for a in range(A):
                if M[k, a] != 0.0:
                    if fixed[a] == 0.0:
                        cap += v[a]
                    else:
                        fs += v[a] * fixed[a]
            lk = lo_w[k] - fs
            hk = hi_w[k] - fs
            if lk > cap + _FEAS_TOL or hk < -cap - _FEAS_TOL:
                return STATUS_INFEASIBLE, 0.0, 0.0
            if cap > 0.0:
                sgn = 0.0
                if lk >= cap - _FEAS_TOL:
                    sgn = 1.0
                elif hk <= -cap + _FEAS_TOL:
                    sgn = -1.0
                if sgn != 0.0:
                    for a in range(A):
                        if M[k, a] != 0.0 and fixed[a] == 0.0:
                            fixed[a] = sgn
                    changed = True
            lo_e[k] = lk
            hi_e[k] = hk
    const = 0.0
    lower = 0.0
    for a in range(A):
        if fixed[a] != 0.0:
            const += v[a] * f[a] * fixed[a]
            u_out[a] = fixed[a]
        else:
            lower -= v[a] * abs(f[a])
    lower += const
    # windows of constraints whose atoms are all fixed are already verified
    mu = np.zeros(K)
    theta = np.zeros(A)
    for a in range(A):
        theta[a] = f[a]
    s = np.zeros(K)
    status = STATUS_UNKNOWN
    value = 0.0
    gap = 0.0
    for sweep in range(max_sweeps):
        for k in range(K):
            if not active[k]:
                continue
            # theta with mu_k removed
            for a in range(A):
                if M[k, a] != 0.0:
                    theta[a] += mu[k]
            s0 = 0.0
            cap = 0.0
            for a in range(A):
                if M[k, a] != 0.0 and fixed[a] == 0.0:
                    s0 += v[a] * math.tanh(theta[a])
                    cap += v[a]
            new_mu = 0.0
            if cap > 0.0 and (s0 > hi_e[k] or s0 < lo_e[k]):
                target = hi_e[k] if s0 > hi_e[k] else lo_e[k]
                # s(mu) - target is decreasing in mu
                if s0 > target:
                    a_br = 0.0
                    b_br = 1.0
                    while True:
                        sv = 0.0
                        for a in range(A):
                            if M[k, a] != 0.0 and fixed[a] == 0.0:
                                sv += v[a] * math.tanh(theta[a] - b_br)
                        if sv <= target or b_br > 1e3:
                            break
                        a_br = b_br
                        b_br *= 2.0
                else:
                    b_br = 0.0
                    a_br = -1.0
                    while True:
                        sv = 0.0
                        for a in range(A):
                            if M[k, a] != 0.0 and fixed[a] == 0.0:
                                sv += v[a] * math.tanh(theta[a] - a_br)
                        if sv >= target or a_br < -1e3:
                            break
                        b_br = a_br
                        a_br *= 2.0
                x = mu[k]
                if x <= a_br or x >= b_br:
                    x = 0.5 * (a_br + b_br)
                for it in range(200):
                    sv = 0.0
                    ds = 0.0
                    for a in range(A):
                        if M[k, a] != 0.0 and fixed[a] == 0.0:
                            tt = math.tanh(theta[a] - x)
                            sv += v[a] * tt
                            ds -= v[a] * (1.0 - tt * tt)
                    r = sv - target
                    if abs(r) <= 1e-15 * (1.0 + abs(target)):
                        break
                    if r > 0.0:
                        a_br = x
                    else:
                        b_br = x
                    if b_br - a_br <= 1e-15 * (1.0 + abs(x)):
                        break
                    nx = x - r / ds if ds != 0.0 else 0.5 * (a_br + b_br)
                    if not (a_br < nx < b_br):
                        nx = 0.5 * (a_br + b_br)
                    x = nx
                new_mu = x
            mu[k] = new_mu
            for a in range(A):
                if M[k, a] != 0.0:
                    theta[a] -= new_mu
        # certificate
        fval = const
        g = const
        for a in range(A):
            if fixed[a] == 0.0:
                ua = math.tanh(theta[a])
                u_out[a] = ua
                fval += v[a] * (_binary_entropy_pm(ua) + f[a] * ua)
                g += v[a] * _log2cosh(theta[a])
        viol = 0.0
        gap = 0.0
        for k in range(K):
            if not active[k]:
                continue
            sk = 0.0
            for a in range(A):
                if M[k, a] != 0.0 and fixed[a] == 0.0:
                    sk += v[a] * u_out[a]
            s[k] = sk
            excess = max(lo_e[k] - sk, sk - hi_e[k], 0.0)
            if excess > viol:
                viol = excess
            pen = max(mu[k] * hi_e[k], mu[k] * lo_e[k])
            g += pen
            gap += pen - mu[k] * sk
        value = fval
        if g < lower - 1e-9:
            return STATUS_INFEASIBLE, 0.0, 0.0
        if viol <= 1e-11 and gap <= tol:
            status = STATUS_OK
            break
        if sweep % 20 == 19 and _newton_polish(M, v, f, fixed, active, lo_e, hi_e, mu, 30):
            for a in range(A):
                t = f[a]
                for k in range(K):
                    if active[k] and M[k, a] != 0.0:
                        t -= mu[k]
                theta[a] = t
    return status, value, gap


def _rebind(fn, **names):
    """Copy of ``fn`` whose global lookups of ``names`` hit the given objects."""
    env = dict(fn.__globals__)
    env.update(names)
    return types.FunctionType(fn.__code__, env, fn.__name__, fn.__defaults__, fn.__closure__)


entropy_cd_jit = jit_always(_rebind(_entropy_cd, _newton_polish=_newton_polish_jit))
# sequential, so the fallback is the same loop in plain Python
entropy_cd_numpy = _rebind(_entropy_cd, _log2cosh=_log2cosh_py, _binary_entropy_pm=_binary_entropy_pm_py,
                           _newton_polish=_newton_polish)


def _grid_search_loop(M, v, f, levels, gamma, cut_axes, coefs, n, tol, max_sweeps,
                      best_u, unknown):
    K, A = M.shape
    L = levels.shape[0]
    caps = np.zeros(K)
    for k in range(K):
        for a in range(A):
            if M[k, a] != 0.0:
                caps[k] += v[a]
    ub_ent = 0.0
    for a in range(A):
        ub_ent += v[a] * (math.log(2.0) + abs(f[a]))
    ub_ent *= n
    total = 1
    for k in range(K):
        total *= L
    idx = np.zeros(K, dtype=np.int64)
    lo = np.zeros(K)
    hi = np.zeros(K)
    u = np.zeros(A)
    best = -np.inf
    best_t = -1
    n_unknown = 0
    n_infeasible = 0
    n_pruned = 0
    n_solved = 0
    for t in range(total):
        r = t
        for k in range(K - 1, -1, -1):
            idx[k] = r % L
            r //= L
        ok = True
        for k in range(K):
            lv = levels[idx[k]]
            lo[k] = lv - gamma
            hi[k] = lv + gamma
            if lo[k] > caps[k] + _FEAS_TOL or hi[k] < -caps[k] - _FEAS_TOL:
                ok = False
                break
        if not ok:
            n_infeasible += 1
            continue
        e = 0.0
        for j in range(coefs.shape[0]):
            p = coefs[j]
            for q in range(cut_axes.shape[1]):
                ax = cut_axes[j, q]
                if ax >= 0:
                    p *= levels[idx[ax]] * n
            e += p
        if e + ub_ent <= best:
            n_pruned += 1
            continue
        status, val, gap = entropy_cd_jit(M, v, f, lo, hi, tol, max_sweeps, u)
        if status == STATUS_INFEASIBLE:
            n_infeasible += 1
            continue
        if status == STATUS_UNKNOWN:
            if n_unknown < unknown.shape[0]:
                unknown[n_unknown] = t
            n_unknown += 1
            continue
        n_solved += 1
        tot = e + n * val
        if tot > best:
            best = tot
            best_t = t
            for a in range(A):
                best_u[a] = u[a]
    return best, best_t, n_solved, n_infeasible, n_pruned, n_unknown


grid_search_jit = jit_always(_grid_search_loop)


def grid_search_numpy(M, v, f, levels, gamma, cut_axes, coefs, n, tol, max_sweeps, best_u, unknown):
    """Vectorised prescreen and energies; surviving points solved one by one."""
    K, A = M.shape
    L = len(levels)
    caps = (M != 0.0) @ v
    grid = np.indices((L,) * K).reshape(K, -1).T if K else np.zeros((1, 0), dtype=int)
    lv = levels[grid]
    ok = np.all((lv - gamma <= caps + _FEAS_TOL) & (lv + gamma >= -caps - _FEAS_TOL), axis=1)
    e = np.zeros(len(grid))
    for j in range(len(coefs)):
        axes = cut_axes[j][cut_axes[j] >= 0]
        e += coefs[j] * np.prod(lv[:, axes] * n, axis=1)
    ub_ent = n * float(v @ (math.log(2.0) + np.abs(f)))
    best, best_t = -np.inf, -1
    n_solved = n_unknown = n_pruned = 0
    n_infeasible = int((~ok).sum())
    u = np.zeros(A)
    for t in np.flatnonzero(ok):
        if e[t] + ub_ent <= best:
            n_pruned += 1
            continue
        status, val, _ = entropy_cd_numpy(M, v, f, lv[t] - gamma, lv[t] + gamma, tol, max_sweeps, u)
        if status == STATUS_INFEASIBLE:
            n_infeasible += 1
            continue
        if status == STATUS_UNKNOWN:
            if n_unknown < len(unknown):
                unknown[n_unknown] = t
            n_unknown += 1
            continue
        n_solved += 1
        tot = e[t] + n * val
        if tot > best:
            best, best_t = tot, int(t)
            best_u[:] = u
    return best, best_t, n_solved, n_infeasible, n_pruned, n_unknown


# ---------------------------------------------------------------------------
# dispatch


def ising_logz(J, h):
    J = np.ascontiguousarray(J, dtype=float)
    h = np.ascontiguousarray(h, dtype=float)
    return float(ising_logz_jit(J, h)) if USE_NUMBA else ising_logz_numpy(J, h)


def mrf_logz(n, idx, coef, inc_ptr, inc):
    if USE_NUMBA:
        return float(mrf_logz_jit(n, idx, coef, inc_ptr, inc))
    return mrf_logz_numpy(n, idx, coef)


def inf_to_one(W):
    W = np.ascontiguousarray(W, dtype=float)
    return float(inf_to_one_jit(W)) if USE_NUMBA else inf_to_one_numpy(W)


def best_rowset(W):
    W = np.ascontiguousarray(W, dtype=float)
    t, sign = best_rowset_jit(W) if USE_NUMBA else best_rowset_numpy(W)
    g = int(t) ^ (int(t) >> 1)
    rows = ((g >> np.arange(W.shape[0])) & 1).astype(bool)
    return rows, int(sign)


def gauss_seidel(J, h, x, lo, hi, max_sweeps, tol):
    fn = gauss_seidel_jit if USE_NUMBA else gauss_seidel_numpy
    return int(fn(J, h, x, float(lo), float(hi), int(max_sweeps), float(tol)))


def glauber(J, h, x, local, sites, uniforms):
    (glauber_jit if USE_NUMBA else glauber_numpy)(J, h, x, local, sites, uniforms)


def glauber_blowup(J, h, m, spins, Y, sites, uniforms):
    fn = glauber_blowup_jit if USE_NUMBA else glauber_blowup_numpy
    fn(J, float(h), int(m), spins, Y, sites, uniforms)


def entropy_cd(M, v, f, lo, hi, tol, max_sweeps, u_out):
    fn = entropy_cd_jit if USE_NUMBA else entropy_cd_numpy
    status, value, gap = fn(M, v, f, lo, hi, float(tol), int(max_sweeps), u_out)
    return int(status), float(value), float(gap)


def grid_search(M, v, f, levels, gamma, cut_axes, coefs, n, tol, max_sweeps, best_u, unknown):
    fn = grid_search_jit if USE_NUMBA else grid_search_numpy
    out = fn(M, v, f, levels, float(gamma), cut_axes, coefs, float(n), float(tol),
             int(max_sweeps), best_u, unknown)
    best, best_t = float(out[0]), int(out[1])
    return best, best_t, tuple(int(c) for c in out[2:])
