"""Hot integration kernels.

Every kernel exists twice: a numba ``@njit`` version taking the model's
compiled coefficient implementations as first-class function arguments,
and a pure-numpy twin used when numba is disabled (``HYPOFLOW_NUMBA=0``)
or when a model's callbacks are plain Python.  Both advance the same
Euler recursions:

  state   z' = z + a dt + (0; b dW)
  flow    J' = J + G J dt + sum_j B_j J dW_j
  inverse Ji' = Ji - Ji [sum_j B_j dW_j + (G - sum_j B_j^2) dt]

with G the full drift Jacobian and B_j the (zero-top-block) Jacobian of
the j-th diffusion column, evaluated at the left endpoint.  The reduced
covariance accumulator adds Ji (0;b)(0;b)^T Ji^T dt per step, also at the
left endpoint, so the final matrix factorizes exactly through J_T.
"""

from __future__ import annotations

import numpy as np

from .backend import NUMBA_ENABLED

__all__ = ["run_path", "run_bundle", "run_summary", "run_gradient"]

_EIGH_FAIL = -2.0


# ---------------------------------------------------------------------------
# pure-numpy twins
# ---------------------------------------------------------------------------

def _py_coeffs(impls, m, n, d, z, av, cv, bv, G, JB):
    a1, a2, b, ja1, ja2, jb = impls
    x = z[:m]
    y = z[m:]
    a1(x, y, av)
    a2(x, y, cv)
    b(x, y, bv)
    ja1(x, y, G[:m])
    ja2(x, y, G[m:])
    jb(x, y, JB)


def _py_step(m, n, d, dt, dWk, z, Jk, Jik, av, cv, bv, G, JB):
    """One Euler step of (state, flow, inverse flow); returns new triples."""
    H = G * dt
    BW = JB[:, 0, :] * dWk[0]
    for j in range(1, d):
        BW = BW + JB[:, j, :] * dWk[j]
    corr = np.einsum("pjr,rjq->pq", JB[:, :, m:], JB)
    H[m:] += BW - corr * dt
    Ji_new = Jik - Jik @ H

    Jn = Jk + (G @ Jk) * dt
    BJ = np.tensordot(JB, Jk, axes=([2], [0]))  # (n, d, dim)
    Jn[m:] += np.einsum("pjq,j->pq", BJ, dWk)

    zn = z.copy()
    zn[:m] = z[:m] + av * dt
    zn[m:] = z[m:] + cv * dt + bv @ dWk
    return zn, Jn, Ji_new


def _py_path(impls, m, n, z0, dW, dt, states):
    a1, a2, b = impls[0], impls[1], impls[2]
    d = dW.shape[1]
    N = dW.shape[0]
    av = np.empty(m)
    cv = np.empty(n)
    bv = np.empty((n, d))
    z = z0.copy()
    states[0] = z
    for k in range(N):
        x = z[:m]
        y = z[m:]
        a1(x, y, av)
        a2(x, y, cv)
        b(x, y, bv)
        zn = z.copy()
        zn[:m] = z[:m] + av * dt
        zn[m:] = z[m:] + cv * dt + bv @ dW[k]
        states[k + 1] = zn
        if not np.all(np.isfinite(zn)):
            return k + 1
        z = zn
    return -1


def _py_bundle(impls, m, n, z0, dW, dt, states, J, Jinv):
    d = dW.shape[1]
    dim = m + n
    N = dW.shape[0]
    av = np.empty(m)
    cv = np.empty(n)
    bv = np.empty((n, d))
    G = np.empty((dim, dim))
    JB = np.empty((n, d, dim))
    z = z0.copy()
    Jk = np.eye(dim)
    Jik = np.eye(dim)
    states[0] = z
    J[0] = Jk
    Jinv[0] = Jik
    for k in range(N):
        _py_coeffs(impls, m, n, d, z, av, cv, bv, G, JB)
        z, Jk, Jik = _py_step(m, n, d, dt, dW[k], z, Jk, Jik,
                              av, cv, bv, G, JB)
        states[k + 1] = z
        J[k + 1] = Jk
        Jinv[k + 1] = Jik
        if not (np.all(np.isfinite(z)) and np.all(np.isfinite(Jk))
                and np.all(np.isfinite(Jik))):
            return k + 1
    return -1


def _py_summary(impls, m, n, z0, dW, dt):
    d = dW.shape[1]
    dim = m + n
    N = dW.shape[0]
    av = np.empty(m)
    cv = np.empty(n)
    bv = np.empty((n, d))
    G = np.empty((dim, dim))
    JB = np.empty((n, d, dim))
    z = z0.copy()
    Jk = np.eye(dim)
    Jik = np.eye(dim)
    Mt = np.zeros((dim, dim))
    for k in range(N):
        _py_coeffs(impls, m, n, d, z, av, cv, bv, G, JB)
        V = Jik[:, m:] @ bv
        Mt += (V @ V.T) * dt
        z, Jk, Jik = _py_step(m, n, d, dt, dW[k], z, Jk, Jik,
                              av, cv, bv, G, JB)
        if not (np.all(np.isfinite(z)) and np.all(np.isfinite(Jk))
                and np.all(np.isfinite(Jik))):
            return z, Jk, Mt, k + 1
    return z, Jk, Mt, -1


def _py_gradient(impls, m, n, z0, dW, dt, h, rel_floor):
    """Vector Skorokhod weights: component i of the returned array is the
    divergence-corrected weight for the basis perturbation e_i, so the
    weight for an arbitrary direction xi is the dot product with xi."""
    d = dW.shape[1]
    dim = m + n
    N = dW.shape[0]
    av = np.empty(m)
    cv = np.empty(n)
    bv = np.empty((n, d))
    G = np.empty((dim, dim))
    JB = np.empty((n, d, dim))

    zs = np.empty((N + 1, dim))
    Js = np.empty((N + 1, dim, dim))
    Jis = np.empty((N + 1, dim, dim))
    Mpre = np.empty((N + 1, dim, dim))
    bvs = np.empty((N, n, d))
    zero_vec = np.zeros(dim)

    z = z0.copy()
    Jk = np.eye(dim)
    Jik = np.eye(dim)
    Mt = np.zeros((dim, dim))
    zs[0] = z
    Js[0] = Jk
    Jis[0] = Jik
    Mpre[0] = Mt
    for k in range(N):
        _py_coeffs(impls, m, n, d, z, av, cv, bv, G, JB)
        bvs[k] = bv
        V = Jik[:, m:] @ bv
        Mt = Mt + (V @ V.T) * dt
        z, Jk, Jik = _py_step(m, n, d, dt, dW[k], z, Jk, Jik,
                              av, cv, bv, G, JB)
        zs[k + 1] = z
        Js[k + 1] = Jk
        Jis[k + 1] = Jik
        Mpre[k + 1] = Mt
        if not (np.all(np.isfinite(z)) and np.all(np.isfinite(Jk))
                and np.all(np.isfinite(Jik))):
            return z, zero_vec, 0.0, 0.0, 1

    JT = Js[N]
    MT = JT @ Mpre[N] @ JT.T
    MT = 0.5 * (MT + MT.T)
    eig = np.linalg.eigvalsh(MT)
    lam_min = eig[0]
    tr = np.trace(MT)
    if lam_min < rel_floor * tr:
        return zs[N], zero_vec, lam_min, tr, 2

    W = JT.T @ np.linalg.solve(MT, JT)   # J^T M^-1 J, (dim, dim)
    delta1 = np.zeros(dim)
    for k in range(N):
        U = bvs[k].T @ (Jis[k][:, m:].T @ W)   # (d, dim)
        delta1 += U.T @ dW[k]

    def replay(k, j, bump):
        zz = zs[k].copy()
        Jl = Js[k].copy()
        Jil = Jis[k].copy()
        Ml = Mpre[k].copy()
        for s in range(k, N):
            _py_coeffs(impls, m, n, d, zz, av, cv, bv, G, JB)
            V = Jil[:, m:] @ bv
            Ml = Ml + (V @ V.T) * dt
            dWs = dW[s]
            if s == k:
                dWs = dWs.copy()
                dWs[j] += bump
            zz, Jl, Jil = _py_step(m, n, d, dt, dWs, zz, Jl, Jil,
                                   av, cv, bv, G, JB)
            if not np.all(np.isfinite(zz)):
                return None
        Mb = Jl @ Ml @ Jl.T
        Wb = Jl.T @ np.linalg.solve(0.5 * (Mb + Mb.T), Jl)
        return bvs[k][:, j] @ (Jis[k][:, m:].T @ Wb)   # (dim,)

    trace_div = np.zeros(dim)
    for k in range(N):
        for j in range(d):
            up = replay(k, j, h)
            um = replay(k, j, -h)
            if up is None or um is None:
                return zs[N], zero_vec, lam_min, tr, 1
            trace_div += (up - um) / (2.0 * h)
    if not np.all(np.isfinite(trace_div)):
        return zs[N], zero_vec, lam_min, tr, 1
    delta = delta1 - trace_div * dt
    return zs[N], delta, lam_min, tr, 0


# ---------------------------------------------------------------------------
# numba kernels
# ---------------------------------------------------------------------------

if NUMBA_ENABLED:
    from numba import njit

    @njit(cache=False, nogil=True)
    def _nb_path(a1, a2, b, z0, m, n, dW, dt, states):
        d = dW.shape[1]
        N = dW.shape[0]
        av = np.empty(m)
        cv = np.empty(n)
        bv = np.empty((n, d))
        z = z0.copy()
        for i in range(m + n):
            states[0, i] = z[i]
        for k in range(N):
            a1(z[:m], z[m:], av)
            a2(z[:m], z[m:], cv)
            b(z[:m], z[m:], bv)
            for i in range(m):
                z[i] = z[i] + av[i] * dt
            for p in range(n):
                acc = z[m + p] + cv[p] * dt
                for j in range(d):
                    acc += bv[p, j] * dW[k, j]
                z[m + p] = acc
            ok = 0.0
            for i in range(m + n):
                states[k + 1, i] = z[i]
                ok += z[i]
            if not np.isfinite(ok):
                return k + 1
        return -1

    @njit(cache=False, nogil=True)
    def _nb_step(m, n, d, dt, dW, k, bump_j, bump, z, Jk, Jik,
                 av, cv, bv, G, JB, H, Jn, Jin, zn):
        dim = m + n
        for i in range(dim):
            for q in range(dim):
                H[i, q] = G[i, q] * dt
        for j in range(d):
            w = dW[k, j]
            if j == bump_j:
                w += bump
            for p in range(n):
                for q in range(dim):
                    acc = 0.0
                    for r in range(n):
                        acc += JB[p, j, m + r] * JB[r, j, q]
                    H[m + p, q] += JB[p, j, q] * w - acc * dt
        for i in range(dim):
            for q in range(dim):
                acc = 0.0
                for r in range(dim):
                    acc += Jik[i, r] * H[r, q]
                Jin[i, q] = Jik[i, q] - acc
        for i in range(dim):
            for q in range(dim):
                acc = 0.0
                for r in range(dim):
                    acc += G[i, r] * Jk[r, q]
                Jn[i, q] = Jk[i, q] + acc * dt
        for j in range(d):
            w = dW[k, j]
            if j == bump_j:
                w += bump
            for p in range(n):
                for q in range(dim):
                    acc = 0.0
                    for r in range(dim):
                        acc += JB[p, j, r] * Jk[r, q]
                    Jn[m + p, q] += acc * w
        for i in range(m):
            zn[i] = z[i] + av[i] * dt
        for p in range(n):
            acc = z[m + p] + cv[p] * dt
            for j in range(d):
                w = dW[k, j]
                if j == bump_j:
                    w += bump
                acc += bv[p, j] * w
            zn[m + p] = acc

    @njit(cache=False, nogil=True)
    def _nb_bundle(a1, a2, b, ja1, ja2, jb, z0, m, n, dW, dt,
                   states, J, Jinv):
        d = dW.shape[1]
        dim = m + n
        N = dW.shape[0]
        av = np.empty(m)
        cv = np.empty(n)
        bv = np.empty((n, d))
        G = np.empty((dim, dim))
        JB = np.empty((n, d, dim))
        H = np.empty((dim, dim))
        Jn = np.empty((dim, dim))
        Jin = np.empty((dim, dim))
        zn = np.empty(dim)
        z = z0.copy()
        Jk = np.eye(dim)
        Jik = np.eye(dim)
        for i in range(dim):
            states[0, i] = z[i]
            for q in range(dim):
                J[0, i, q] = Jk[i, q]
                Jinv[0, i, q] = Jik[i, q]
        for k in range(N):
            a1(z[:m], z[m:], av)
            a2(z[:m], z[m:], cv)
            b(z[:m], z[m:], bv)
            ja1(z[:m], z[m:], G[:m, :])
            ja2(z[:m], z[m:], G[m:, :])
            jb(z[:m], z[m:], JB)
            _nb_step(m, n, d, dt, dW, k, -1, 0.0, z, Jk, Jik,
                     av, cv, bv, G, JB, H, Jn, Jin, zn)
            ok = 0.0
            for i in range(dim):
                z[i] = zn[i]
                states[k + 1, i] = zn[i]
                ok += zn[i]
                for q in range(dim):
                    Jk[i, q] = Jn[i, q]
                    Jik[i, q] = Jin[i, q]
                    J[k + 1, i, q] = Jn[i, q]
                    Jinv[k + 1, i, q] = Jin[i, q]
                    ok += Jn[i, q] + Jin[i, q]
            if not np.isfinite(ok):
                return k + 1
        return -1

    @njit(cache=False, nogil=True)
    def _nb_summary(a1, a2, b, ja1, ja2, jb, z0, m, n, dW, dt):
        d = dW.shape[1]
        dim = m + n
        N = dW.shape[0]
        av = np.empty(m)
        cv = np.empty(n)
        bv = np.empty((n, d))
        G = np.empty((dim, dim))
        JB = np.empty((n, d, dim))
        H = np.empty((dim, dim))
        Jn = np.empty((dim, dim))
        Jin = np.empty((dim, dim))
        zn = np.empty(dim)
        wv = np.empty(dim)
        z = z0.copy()
        Jk = np.eye(dim)
        Jik = np.eye(dim)
        Mt = np.zeros((dim, dim))
        for k in range(N):
            a1(z[:m], z[m:], av)
            a2(z[:m], z[m:], cv)
            b(z[:m], z[m:], bv)
            ja1(z[:m], z[m:], G[:m, :])
            ja2(z[:m], z[m:], G[m:, :])
            jb(z[:m], z[m:], JB)
            for j in range(d):
                for i in range(dim):
                    acc = 0.0
                    for p in range(n):
                        acc += Jik[i, m + p] * bv[p, j]
                    wv[i] = acc
                for i in range(dim):
                    for q in range(dim):
                        Mt[i, q] += wv[i] * wv[q] * dt
            _nb_step(m, n, d, dt, dW, k, -1, 0.0, z, Jk, Jik,
                     av, cv, bv, G, JB, H, Jn, Jin, zn)
            ok = 0.0
            for i in range(dim):
                z[i] = zn[i]
                ok += zn[i]
                for q in range(dim):
                    Jk[i, q] = Jn[i, q]
                    Jik[i, q] = Jin[i, q]
                    ok += Jn[i, q] + Jin[i, q]
            if not np.isfinite(ok):
                return z, Jk, Mt, k + 1
        return z, Jk, Mt, -1

    @njit(cache=False, nogil=True)
    def _nb_replay(a1, a2, b, ja1, ja2, jb, m, n, dW, dt,
                   zs, Js, Jis, Mpre, bvs, k, j, bump, u_out):
        d = dW.shape[1]
        dim = m + n
        N = dW.shape[0]
        av = np.empty(m)
        cv = np.empty(n)
        bv = np.empty((n, d))
        G = np.empty((dim, dim))
        JB = np.empty((n, d, dim))
        H = np.empty((dim, dim))
        Jn = np.empty((dim, dim))
        Jin = np.empty((dim, dim))
        zn = np.empty(dim)
        wv = np.empty(dim)
        z = zs[k].copy()
        Jk = Js[k].copy()
        Jik = Jis[k].copy()
        Mt = Mpre[k].copy()
        for s in range(k, N):
            a1(z[:m], z[m:], av)
            a2(z[:m], z[m:], cv)
            b(z[:m], z[m:], bv)
            ja1(z[:m], z[m:], G[:m, :])
            ja2(z[:m], z[m:], G[m:, :])
            jb(z[:m], z[m:], JB)
            for jj in range(d):
                for i in range(dim):
                    acc = 0.0
                    for p in range(n):
                        acc += Jik[i, m + p] * bv[p, jj]
                    wv[i] = acc
                for i in range(dim):
                    for q in range(dim):
                        Mt[i, q] += wv[i] * wv[q] * dt
            bj = j if s == k else -1
            _nb_step(m, n, d, dt, dW, s, bj, bump, z, Jk, Jik,
                     av, cv, bv, G, JB, H, Jn, Jin, zn)
            ok = 0.0
            for i in range(dim):
                z[i] = zn[i]
                ok += zn[i]
                for q in range(dim):
                    Jk[i, q] = Jn[i, q]
                    Jik[i, q] = Jin[i, q]
            if not np.isfinite(ok):
                return False
        Mb = Jk @ Mt @ Jk.T
        for i in range(dim):
            for q in range(i + 1, dim):
                sym = 0.5 * (Mb[i, q] + Mb[q, i])
                Mb[i, q] = sym
                Mb[q, i] = sym
        Wb = Jk.T @ np.linalg.solve(Mb, Jk)
        # u_out[c] = sum_p bvs[k,p,j] * (Jis[k][:, m+p] . Wb[:, c])
        for c in range(dim):
            acc2 = 0.0
            for p in range(n):
                acc = 0.0
                for i in range(dim):
                    acc += Jis[k, i, m + p] * Wb[i, c]
                acc2 += bvs[k, p, j] * acc
            u_out[c] = acc2
        return True

    @njit(cache=False, nogil=True)
    def _nb_gradient(a1, a2, b, ja1, ja2, jb, z0, m, n, dW, dt, h,
                     rel_floor):
        d = dW.shape[1]
        dim = m + n
        N = dW.shape[0]
        av = np.empty(m)
        cv = np.empty(n)
        bv = np.empty((n, d))
        G = np.empty((dim, dim))
        JB = np.empty((n, d, dim))
        H = np.empty((dim, dim))
        Jn = np.empty((dim, dim))
        Jin = np.empty((dim, dim))
        zn = np.empty(dim)
        wv = np.empty(dim)
        zero_vec = np.zeros(dim)

        zs = np.empty((N + 1, dim))
        Js = np.empty((N + 1, dim, dim))
        Jis = np.empty((N + 1, dim, dim))
        Mpre = np.empty((N + 1, dim, dim))
        bvs = np.empty((N, n, d))

        z = z0.copy()
        Jk = np.eye(dim)
        Jik = np.eye(dim)
        Mt = np.zeros((dim, dim))
        for i in range(dim):
            zs[0, i] = z[i]
            for q in range(dim):
                Js[0, i, q] = Jk[i, q]
                Jis[0, i, q] = Jik[i, q]
                Mpre[0, i, q] = 0.0
        for k in range(N):
            a1(z[:m], z[m:], av)
            a2(z[:m], z[m:], cv)
            b(z[:m], z[m:], bv)
            ja1(z[:m], z[m:], G[:m, :])
            ja2(z[:m], z[m:], G[m:, :])
            jb(z[:m], z[m:], JB)
            for p in range(n):
                for jj in range(d):
                    bvs[k, p, jj] = bv[p, jj]
            for jj in range(d):
                for i in range(dim):
                    acc = 0.0
                    for p in range(n):
                        acc += Jik[i, m + p] * bv[p, jj]
                    wv[i] = acc
                for i in range(dim):
                    for q in range(dim):
                        Mt[i, q] += wv[i] * wv[q] * dt
            _nb_step(m, n, d, dt, dW, k, -1, 0.0, z, Jk, Jik,
                     av, cv, bv, G, JB, H, Jn, Jin, zn)
            ok = 0.0
            for i in range(dim):
                z[i] = zn[i]
                zs[k + 1, i] = zn[i]
                ok += zn[i]
                for q in range(dim):
                    Jk[i, q] = Jn[i, q]
                    Jik[i, q] = Jin[i, q]
                    Js[k + 1, i, q] = Jn[i, q]
                    Jis[k + 1, i, q] = Jin[i, q]
                    Mpre[k + 1, i, q] = Mt[i, q]
                    ok += Jn[i, q] + Jin[i, q]
            if not np.isfinite(ok):
                return z, zero_vec, 0.0, 0.0, 1

        JT = Js[N]
        MT = JT @ Mpre[N] @ JT.T
        for i in range(dim):
            for q in range(i + 1, dim):
                sym = 0.5 * (MT[i, q] + MT[q, i])
                MT[i, q] = sym
                MT[q, i] = sym
        eig = np.linalg.eigvalsh(MT)
        lam_min = eig[0]
        tr = 0.0
        for i in range(dim):
            tr += MT[i, i]
        if lam_min < rel_floor * tr:
            return zs[N], zero_vec, lam_min, tr, 2

        W = JT.T @ np.linalg.solve(MT, JT)
        delta1 = np.zeros(dim)
        for k in range(N):
            for j in range(d):
                for c in range(dim):
                    acc2 = 0.0
                    for p in range(n):
                        acc = 0.0
                        for i in range(dim):
                            acc += Jis[k, i, m + p] * W[i, c]
                        acc2 += bvs[k, p, j] * acc
                    delta1[c] += acc2 * dW[k, j]

        trace_div = np.zeros(dim)
        up = np.empty(dim)
        um = np.empty(dim)
        for k in range(N):
            for j in range(d):
                ok1 = _nb_replay(a1, a2, b, ja1, ja2, jb, m, n, dW, dt,
                                 zs, Js, Jis, Mpre, bvs, k, j, h, up)
                ok2 = _nb_replay(a1, a2, b, ja1, ja2, jb, m, n, dW, dt,
                                 zs, Js, Jis, Mpre, bvs, k, j, -h, um)
                if not (ok1 and ok2):
                    return zs[N], zero_vec, lam_min, tr, 1
                for c in range(dim):
                    trace_div[c] += (up[c] - um[c]) / (2.0 * h)
        fin = 0.0
        for c in range(dim):
            fin += trace_div[c]
        if not np.isfinite(fin):
            return zs[N], zero_vec, lam_min, tr, 1
        delta = np.empty(dim)
        for c in range(dim):
            delta[c] = delta1[c] - trace_div[c] * dt
        return zs[N], delta, lam_min, tr, 0


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

def _prep(model, z0, dW):
    z0 = np.ascontiguousarray(z0, dtype=float)
    dW = np.ascontiguousarray(dW, dtype=float)
    return z0, dW


def run_path(model, z0, dW, dt, states) -> int:
    z0, dW = _prep(model, z0, dW)
    im = model._impls
    if model.engine == "numba":
        return int(_nb_path(im[0], im[1], im[2], z0, model.m, model.n,
                            dW, float(dt), states))
    return _py_path(im, model.m, model.n, z0, dW, float(dt), states)


def run_bundle(model, z0, dW, dt, states, J, Jinv) -> int:
    z0, dW = _prep(model, z0, dW)
    im = model._impls
    if model.engine == "numba":
        return int(_nb_bundle(im[0], im[1], im[2], im[3], im[4], im[5],
                              z0, model.m, model.n, dW, float(dt),
                              states, J, Jinv))
    return _py_bundle(im, model.m, model.n, z0, dW, float(dt),
                      states, J, Jinv)


def run_summary(model, z0, dW, dt):
    """Returns (z_T, J_T, Mtilde_T, exploded_step or -1)."""
    z0, dW = _prep(model, z0, dW)
    im = model._impls
    if model.engine == "numba":
        zT, JT, Mt, ex = _nb_summary(im[0], im[1], im[2], im[3], im[4],
                                     im[5], z0, model.m, model.n, dW,
                                     float(dt))
        return zT, JT, Mt, int(ex)
    zT, JT, Mt, ex = _py_summary(im, model.m, model.n, z0, dW, float(dt))
    return zT, JT, Mt, ex


def run_gradient(model, z0, dW, dt, h, rel_floor):
    """Returns (z_T, weight_vector, lam_min(M_T), trace(M_T), status) with
    status 0 = ok, 1 = exploded/non-finite, 2 = below spectral floor.
    ``weight_vector[i]`` is the divergence-corrected Skorokhod weight for
    the i-th basis direction; dot it with xi for a general direction.
    """
    z0, dW = _prep(model, z0, dW)
    im = model._impls
    try:
        if model.engine == "numba":
            zT, delta, lam, tr, st = _nb_gradient(
                im[0], im[1], im[2], im[3], im[4], im[5], z0,
                model.m, model.n, dW, float(dt), float(h),
                float(rel_floor))
            return zT, delta, float(lam), float(tr), int(st)
        zT, delta, lam, tr, st = _py_gradient(
            im, model.m, model.n, z0, dW, float(dt), float(h),
            float(rel_floor))
        return zT, delta, float(lam), float(tr), int(st)
    except np.linalg.LinAlgError:
        return z0, np.zeros(model.dim), 0.0, 0.0, 1
