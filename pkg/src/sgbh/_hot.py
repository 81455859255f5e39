"""Hot inner loops, each with a numba kernel and a vectorized numpy twin.

The public entry points at the bottom dispatch on ``_backend.USE_NUMBA``.
Both paths compute the same formulas; results agree to rounding but are not
promised to be bit-identical across backends (libm differences). Within one
backend everything is deterministic.
"""

import numpy as np

from . import _backend

MASK32 = np.uint64(0xFFFFFFFF)
PHILOX_M0 = np.uint64(0xD2511F53)
PHILOX_M1 = np.uint64(0xCD9E8D57)
PHILOX_W0 = np.uint64(0x9E3779B9)
PHILOX_W1 = np.uint64(0xBB67AE85)
TWO_PI = 2.0 * np.pi
INV_2_53 = 1.0 / 9007199254740992.0

# g family codes shared with dynamics.GCoefficient
G_CONSTANT, G_LINEAR, G_SIGMOID = 0, 1, 2


# --------------------------------------------------------------------------
# Philox4x32-10 counter-based generator
# --------------------------------------------------------------------------

def _philox_numpy(c0, c1, c2, c3, k0, k1):
    c0, c1, c2, c3 = (np.asarray(c, dtype=np.uint64) & MASK32 for c in (c0, c1, c2, c3))
    k0 = np.uint64(k0) & MASK32
    k1 = np.uint64(k1) & MASK32
    s32 = np.uint64(32)
    for r in range(10):
        p0 = PHILOX_M0 * c0
        p1 = PHILOX_M1 * c2
        c0, c1, c2, c3 = ((p1 >> s32) ^ c1 ^ k0, p1 & MASK32,
                          (p0 >> s32) ^ c3 ^ k1, p0 & MASK32)
        if r < 9:
            k0 = (k0 + PHILOX_W0) & MASK32
            k1 = (k1 + PHILOX_W1) & MASK32
    return c0, c1, c2, c3


def _philox_block(c0, c1, c2, c3, k0, k1):
    s32 = np.uint64(32)
    for r in range(10):
        p0 = PHILOX_M0 * c0
        p1 = PHILOX_M1 * c2
        n0 = (p1 >> s32) ^ c1 ^ k0
        n1 = p1 & MASK32
        n2 = (p0 >> s32) ^ c3 ^ k1
        n3 = p0 & MASK32
        c0, c1, c2, c3 = n0, n1, n2, n3
        if r < 9:
            k0 = (k0 + PHILOX_W0) & MASK32
            k1 = (k1 + PHILOX_W1) & MASK32
    return c0, c1, c2, c3


_philox_block_jit = _backend.njit(_philox_block)


def _normals_numpy(seed, streams, step, m, lane):
    npairs = (m + 1) // 2
    seed = np.uint64(seed)
    k0, k1 = seed & MASK32, seed >> np.uint64(32)
    streams = np.asarray(streams, dtype=np.uint64)
    c0 = np.broadcast_to(np.arange(npairs, dtype=np.uint64)[None, :], (streams.size, npairs))
    c2 = np.broadcast_to((streams & MASK32)[:, None], c0.shape)
    w0, w1, w2, w3 = _philox_numpy(c0, np.uint64(step), c2, np.uint64(lane), k0, k1)
    s5, s6, s26 = np.uint64(5), np.uint64(6), np.uint64(26)
    ua = (((w0 >> s5) << s26) + (w1 >> s6)).astype(np.float64) * INV_2_53
    ub = (((w2 >> s5) << s26) + (w3 >> s6)).astype(np.float64) * INV_2_53
    rad = np.sqrt(-2.0 * np.log1p(-ua))
    out = np.empty((streams.size, 2 * npairs))
    out[:, 0::2] = rad * np.cos(TWO_PI * ub)
    out[:, 1::2] = rad * np.sin(TWO_PI * ub)
    return out[:, :m]


def _normals_loop(seed, streams, step, m, lane, out):
    npairs = (m + 1) // 2
    useed = np.uint64(seed)
    k0 = useed & MASK32
    k1 = useed >> np.uint64(32)
    s5 = np.uint64(5)
    s6 = np.uint64(6)
    s26 = np.uint64(26)
    c1 = np.uint64(step) & MASK32
    c3 = np.uint64(lane) & MASK32
    for p in range(streams.shape[0]):
        c2 = np.uint64(streams[p]) & MASK32
        for q in range(npairs):
            w0, w1, w2, w3 = _philox_block_jit(np.uint64(q), c1, c2, c3, k0, k1)
            ua = np.float64(((w0 >> s5) << s26) + (w1 >> s6)) * INV_2_53
            ub = np.float64(((w2 >> s5) << s26) + (w3 >> s6)) * INV_2_53
            rad = np.sqrt(-2.0 * np.log1p(-ua))
            out[p, 2 * q] = rad * np.cos(TWO_PI * ub)
            if 2 * q + 1 < m:
                out[p, 2 * q + 1] = rad * np.sin(TWO_PI * ub)


_normals_jit = _backend.njit(_normals_loop)


# --------------------------------------------------------------------------
# Constant-coefficient tridiagonal solve (I - r D2 h^2), Thomas algorithm
# --------------------------------------------------------------------------

def thomas_factor(n, r):
    """Forward-sweep factors for tridiag(-r, 1+2r, -r) of size n."""
    b, a = 1.0 + 2.0 * r, -r
    cp = np.empty(n)
    inv = np.empty(n)
    inv[0] = 1.0 / b
    cp[0] = a * inv[0]
    for i in range(1, n):
        inv[i] = 1.0 / (b - a * cp[i - 1])
        cp[i] = a * inv[i]
    return cp, inv, a


def _thomas_numpy(rhs, cp, inv, a):
    """Solve in place along the last axis for a stack of right-hand sides."""
    n = rhs.shape[-1]
    rhs[..., 0] *= inv[0]
    for i in range(1, n):
        rhs[..., i] = (rhs[..., i] - a * rhs[..., i - 1]) * inv[i]
    for i in range(n - 2, -1, -1):
        rhs[..., i] -= cp[i] * rhs[..., i + 1]
    return rhs


def _thomas_loop(rhs, cp, inv, a):
    n = rhs.shape[1]
    for p in range(rhs.shape[0]):
        rhs[p, 0] *= inv[0]
        for i in range(1, n):
            rhs[p, i] = (rhs[p, i] - a * rhs[p, i - 1]) * inv[i]
        for i in range(n - 2, -1, -1):
            rhs[p, i] -= cp[i] * rhs[p, i + 1]
    return rhs


_thomas_jit = _backend.njit(_thomas_loop)


# --------------------------------------------------------------------------
# Fused semi-implicit step for a batch of paths
# --------------------------------------------------------------------------

def _g_numpy(fam, K, L, u):
    if fam == G_CONSTANT:
        return np.full_like(u, K)
    if fam == G_LINEAR:
        return K * np.sqrt(1.0 + u * u) / np.sqrt(2.0)
    return K * np.tanh(L * u / K)


def _step_numpy(U, dt, h, alpha, beta, gamma, delta, sqrt_eps, gfam, gK, gL,
                dW, ctrl, pi, cp, inv, a):
    pu = U ** (delta + 1)
    conv = np.empty_like(U)
    conv[:, 1:-1] = pu[:, 2:] - pu[:, :-2]
    conv[:, 0] = pu[:, 1]
    conv[:, -1] = -pu[:, -2]
    ud = U ** delta
    drift = -(alpha / (delta + 1)) * (conv / (2.0 * h)) + beta * (U * (1.0 - ud) * (ud - gamma))
    piv = pi[:, None]
    rhs = U + dt * (piv * drift)
    if dW is not None or ctrl is not None:
        gu = _g_numpy(gfam, gK, gL, U)
        if dW is not None:
            rhs += piv * (sqrt_eps * gu * dW)
        if ctrl is not None:
            rhs += dt * gu * ctrl
    return _thomas_numpy(rhs, cp, inv, a)


def _step_loop(U, out, dt, h, alpha, beta, gamma, delta, sqrt_eps, gfam, gK, gL,
               dW, has_noise, ctrl, has_ctrl, pi, cp, inv, a):
    P, n = U.shape
    coef = alpha / (delta + 1)
    shared = ctrl.shape[0] == 1
    for p in range(P):
        for i in range(n):
            u = U[p, i]
            left = U[p, i - 1] ** (delta + 1) if i > 0 else 0.0
            right = U[p, i + 1] ** (delta + 1) if i < n - 1 else 0.0
            ud = u ** delta
            drift = -coef * ((right - left) / (2.0 * h)) + beta * (u * (1.0 - ud) * (ud - gamma))
            val = u + dt * (pi[p] * drift)
            if has_noise or has_ctrl:
                if gfam == 0:
                    gu = gK
                elif gfam == 1:
                    gu = gK * np.sqrt(1.0 + u * u) / np.sqrt(2.0)
                else:
                    gu = gK * np.tanh(gL * u / gK)
                if has_noise:
                    val += pi[p] * (sqrt_eps * gu * dW[p, i])
                if has_ctrl:
                    c = ctrl[0, i] if shared else ctrl[p, i]
                    val += dt * gu * c
            out[p, i] = val
        out[p, 0] *= inv[0]
        for i in range(1, n):
            out[p, i] = (out[p, i] - a * out[p, i - 1]) * inv[i]
        for i in range(n - 2, -1, -1):
            out[p, i] -= cp[i] * out[p, i + 1]
    return out


_step_jit = _backend.njit(_step_loop)


# --------------------------------------------------------------------------
# Dispatch
# --------------------------------------------------------------------------

def standard_normals(seed, streams, step, m, lane=0, backend=None):
    """(len(streams), m) standard normals keyed by (seed, stream, step, index, lane)."""
    streams = np.atleast_1d(np.asarray(streams, dtype=np.int64))
    if streams.size and (streams.min() < 0 or streams.max() >= 2**32):
        raise ValueError("stream ids must lie in [0, 2**32)")
    use = _backend.USE_NUMBA if backend is None else backend == "numba"
    if use and _normals_jit is not None:
        out = np.empty((streams.size, m))
        _normals_jit(np.uint64(seed), streams.astype(np.uint64), int(step), int(m), int(lane), out)
        return out
    return _normals_numpy(seed, streams, step, m, lane)


def philox4x32(counter, key):
    """Raw Philox4x32-10 block for one (counter[4], key[2]); returns four ints."""
    words = _philox_numpy(*[np.uint64(c) for c in counter], np.uint64(key[0]), np.uint64(key[1]))
    return tuple(int(w) for w in words)


def thomas_solve(rhs, cp, inv, a, backend=None):
    rhs = np.array(rhs, dtype=float, copy=True)
    flat = rhs.reshape(-1, rhs.shape[-1])
    use = _backend.USE_NUMBA if backend is None else backend == "numba"
    if use and _thomas_jit is not None:
        _thomas_jit(flat, cp, inv, a)
    else:
        _thomas_numpy(flat, cp, inv, a)
    return flat.reshape(rhs.shape)


_EMPTY2 = np.zeros((1, 1))


def step_batch(U, dt, h, alpha, beta, gamma, delta, sqrt_eps, gfam, gK, gL,
               dW, ctrl, pi, factor, backend=None):
    """One semi-implicit step for a (P, n) batch; returns a new array."""
    cp, inv, a = factor
    use = _backend.USE_NUMBA if backend is None else backend == "numba"
    if use and _step_jit is not None:
        out = np.empty_like(U)
        c2 = _EMPTY2 if ctrl is None else np.atleast_2d(ctrl)
        _step_jit(U, out, float(dt), float(h), float(alpha), float(beta), float(gamma), int(delta),
                  float(sqrt_eps), int(gfam), float(gK), float(gL),
                  _EMPTY2 if dW is None else dW, dW is not None, c2, ctrl is not None,
                  pi, cp, inv, float(a))
        return out
    return _step_numpy(U, dt, h, alpha, beta, gamma, int(delta), sqrt_eps, gfam, gK, gL,
                       dW, ctrl, pi, cp, inv, a)
