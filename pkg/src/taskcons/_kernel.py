"""Compiled closed-loop right-hand side for the consensus modes.

Scalar re-statement of ``Simulator.closed_loop_rhs_numpy`` (same formulas,
same delayed-data lookup), written per agent so numba can compile it.  The
numpy path stays the reference; tests check the two agree to round-off.
Falls back to plain Python when numba is unavailable.
"""
import math

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f

# packed float parameters
P_ALPHA, P_BETA, P_LAM, P_TLO, P_THI, P_EPS = range(6)
P_K, P_GAMMA, P_LAMBDA, P_KP, P_KI = 6, 10, 19, 23, 27
P_SKD, P_SKP, P_SXH = 31, 32, 33
N_PARAMS = 35

MODE_DYNAMIC, MODE_PI = 0, 1
OK, ERR_SINGULAR, ERR_HISTORY = 0, 1, 2
N_AUX = 16  # x, xdot, qdot_r, s_star, tau, tau_h, xo_dot, xo_ddot


def pack_params(gains, pi=None, stim=None):
    p = np.zeros(N_PARAMS)
    p[P_ALPHA], p[P_BETA], p[P_LAM] = gains.alpha, gains.beta, gains.lam
    p[P_TLO], p[P_THI], p[P_EPS] = gains.theta_lo, gains.theta_hi, gains.eps_det
    p[P_K:P_K + 4] = np.ravel(gains.K)
    p[P_GAMMA:P_GAMMA + 9] = np.ravel(gains.Gamma)
    p[P_LAMBDA:P_LAMBDA + 4] = np.ravel(gains.Lambda)
    if pi is not None:
        p[P_KP:P_KP + 4] = np.ravel(pi.KP)
        p[P_KI:P_KI + 4] = np.ravel(pi.KI)
    if stim is not None:
        p[P_SKD], p[P_SKP] = stim.Kd, stim.Kp
        p[P_SXH:P_SXH + 2] = stim.x_h
    return p


@njit(cache=True)
def _locate(t, left, T, dt, count, hermite, k0s, k1s, wts):
    """Fill per-edge history indices and blend weights; returns a status."""
    h = dt
    for e in range(T.shape[0]):
        if T[e] == 0.0:
            k0s[e] = -1
            continue
        s = (t - T[e]) / dt
        kr = np.rint(s)
        fl = math.floor(s)
        if abs(s - kr) <= 1e-9 * max(1.0, abs(s)):
            k0 = int(kr) - (1 if left else 0)
            u = 1.0 if left else 0.0
        else:
            k0 = int(fl)
            u = s - fl
        if k0 < 0:
            k0s[e] = -2  # no data yet: zero vector
            continue
        if k0 >= count or (u > 0 and k0 + 1 >= count):
            return ERR_HISTORY
        k0s[e] = k0
        k1s[e] = min(k0 + 1, max(count - 1, 0))
        if hermite:
            u2 = u * u
            u3 = u2 * u
            wts[e, 0] = 2 * u3 - 3 * u2 + 1
            wts[e, 1] = (u3 - 2 * u2 + u) * h
            wts[e, 2] = -2 * u3 + 3 * u2
            wts[e, 3] = (u3 - u2) * h
        else:
            wts[e, 0] = 1 - u
            wts[e, 1] = 0.0
            wts[e, 2] = u
            wts[e, 3] = 0.0
    return OK


@njit(cache=True)
def consensus_rhs(t, left, y, noise, theta, vartheta, p, mode, stim_agent, stim_on,
                  recv, src, w, T, dt, hx, hxd, hxdd, hxdl, hxddl, count, hermite, dy, aux):
    """Write the state derivative into ``dy`` and signals into ``aux``.

    Returns (status, agent, det); status is OK, ERR_SINGULAR or ERR_HISTORY.
    """
    n = y.shape[0]
    E = recv.shape[0]
    alpha, beta, lam = p[P_ALPHA], p[P_BETA], p[P_LAM]
    k0s = np.empty(E, dtype=np.int64)
    k1s = np.empty(E, dtype=np.int64)
    wts = np.zeros((E, 4))
    st = _locate(t, left, T, dt, count, hermite, k0s, k1s, wts)
    if st != OK:
        return st, -1, 0.0

    # delayed positions -> coupling
    coup = np.zeros((n, 2))
    for e in range(E):
        i, j, k0, k1 = recv[e], src[e], k0s[e], k1s[e]
        for d in range(2):
            if k0 == -1:
                v = y[j, 4 + d]
            elif k0 == -2:
                v = 0.0
            else:
                v = (wts[e, 0] * hx[k0, j, d] + wts[e, 1] * hxd[k0, j, d]
                     + wts[e, 2] * hx[k1, j, d] + wts[e, 3] * hxdl[k1, j, d])
            coup[i, d] += w[e] * (y[i, 4 + d] - v)

    qdr = np.empty((n, 2))
    sst = np.empty((n, 2))
    xod = np.empty((n, 2))
    dxo = np.empty((n, 2))
    Jhs = np.empty((n, 4))
    mqs = np.empty((n, 4))
    for i in range(n):
        q1, q2 = y[i, 0], y[i, 1]
        l1, l2 = theta[i, 0], theta[i, 1]
        x1 = l1 * math.cos(q1) + l2 * math.cos(q1 + q2)
        x2 = l1 * math.sin(q1) + l2 * math.sin(q1 + q2)
        aux[i, 0], aux[i, 1] = x1, x2
        mq1, mq2 = q1 + noise[i, 0], q2 + noise[i, 1]
        mw1, mw2 = y[i, 2] + noise[i, 2], y[i, 3] + noise[i, 3]
        mx1, mx2 = x1 + noise[i, 4], x2 + noise[i, 5]
        mqs[i, 0], mqs[i, 1], mqs[i, 2], mqs[i, 3] = mq1, mq2, mw1, mw2

        s1, c1 = math.sin(mq1), math.cos(mq1)
        s12, c12 = math.sin(mq1 + mq2), math.cos(mq1 + mq2)
        h1, h2 = y[i, 10], y[i, 11]
        a = -h1 * s1 - h2 * s12
        b = -h2 * s12
        c = h1 * c1 + h2 * c12
        dd = h2 * c12
        det = a * dd - b * c
        if abs(det) < p[P_EPS]:
            return ERR_SINGULAR, i, det
        Jhs[i, 0], Jhs[i, 1], Jhs[i, 2], Jhs[i, 3] = a, b, c, dd

        u1 = -coup[i, 0] - alpha * y[i, 6]
        u2 = -coup[i, 1] - alpha * y[i, 7]
        r1 = (dd * u1 - b * u2) / det
        r2 = (a * u2 - c * u1) / det
        qdr[i, 0], qdr[i, 1] = r1, r2

        e1, e2 = y[i, 4] - mx1, y[i, 5] - mx2
        dxo[i, 0], dxo[i, 1] = e1, e2
        ss1 = -alpha * y[i, 6] - beta * e1 - lam * y[i, 8]
        ss2 = -alpha * y[i, 7] - beta * e2 - lam * y[i, 9]
        sst[i, 0], sst[i, 1] = ss1, ss2
        xod[i, 0] = u1 - beta * e1 - lam * y[i, 8]
        xod[i, 1] = u2 - beta * e2 - lam * y[i, 9]

        # Z^T dx_o, Z = [[-s1 r1, -s12 (r1+r2)], [c1 r1, c12 (r1+r2)]]
        z1 = -s1 * r1 * e1 + c1 * r1 * e2
        z2 = (-s12 * e1 + c12 * e2) * (r1 + r2)
        for d in range(2):
            raw = -(p[P_LAMBDA + 2 * d] * z1 + p[P_LAMBDA + 2 * d + 1] * z2)
            th = y[i, 10 + d]
            if (th >= p[P_THI] and raw > 0) or (th <= p[P_TLO] and raw < 0):
                raw = 0.0
            dy[i, 10 + d] = raw

    # delayed rates -> coupling rate
    crate = np.zeros((n, 2))
    for e in range(E):
        i, j, k0, k1 = recv[e], src[e], k0s[e], k1s[e]
        for d in range(2):
            if k0 == -1:
                v = xod[j, d]
            elif k0 == -2:
                v = 0.0
            elif hermite:
                v = (wts[e, 0] * hxd[k0, j, d] + wts[e, 1] * hxdd[k0, j, d]
                     + wts[e, 2] * hxdl[k1, j, d] + wts[e, 3] * hxddl[k1, j, d])
            else:
                v = wts[e, 0] * hxd[k0, j, d] + wts[e, 2] * hxdl[k1, j, d]
            crate[i, d] += w[e] * (xod[i, d] - v)

    for i in range(n):
        q1, q2, w1, w2 = y[i, 0], y[i, 1], y[i, 2], y[i, 3]
        mq1, mq2, mw1, mw2 = mqs[i, 0], mqs[i, 1], mqs[i, 2], mqs[i, 3]
        r1, r2 = qdr[i, 0], qdr[i, 1]
        ud1 = -crate[i, 0] - alpha * sst[i, 0]
        ud2 = -crate[i, 1] - alpha * sst[i, 1]

        if mode == MODE_DYNAMIC:
            s1, c1 = math.sin(mq1), math.cos(mq1)
            s12, c12 = math.sin(mq1 + mq2), math.cos(mq1 + mq2)
            h1, h2 = y[i, 10], y[i, 11]
            dh1, dh2 = dy[i, 10], dy[i, 11]
            w12 = mw1 + mw2
            j12 = -h2 * c12 * w12 - dh2 * s12
            j22 = -h2 * s12 * w12 + dh2 * c12
            j11 = -h1 * c1 * mw1 - dh1 * s1 + j12
            j21 = -h1 * s1 * mw1 + dh1 * c1 + j22
            b1 = ud1 - (j11 * r1 + j12 * r2)
            b2 = ud2 - (j21 * r1 + j22 * r2)
            a, b, c, dd = Jhs[i, 0], Jhs[i, 1], Jhs[i, 2], Jhs[i, 3]
            det = a * dd - b * c
            a1 = (dd * b1 - b * b2) / det
            a2 = (a * b2 - c * b1) / det
            ms2, mc2 = math.sin(mq2), math.cos(mq2)
            Y10 = a1
            Y11 = 2 * mc2 * a1 + mc2 * a2 - ms2 * mw2 * r1 - ms2 * (mw1 + mw2) * r2
            Y12 = a2
            Y21 = mc2 * a1 + ms2 * mw1 * r1
            Y22 = a1 + a2
            sv1, sv2 = mw1 - r1, mw2 - r2
            v1, v2, v3 = y[i, 12], y[i, 13], y[i, 14]
            t1 = -(p[P_K] * sv1 + p[P_K + 1] * sv2) + Y10 * v1 + Y11 * v2 + Y12 * v3
            t2 = -(p[P_K + 2] * sv1 + p[P_K + 3] * sv2) + Y21 * v2 + Y22 * v3
            g1 = Y10 * sv1
            g2 = Y11 * sv1 + Y21 * sv2
            g3 = Y12 * sv1 + Y22 * sv2
            for d in range(3):
                G = P_GAMMA + 3 * d
                dy[i, 12 + d] = -(p[G] * g1 + p[G + 1] * g2 + p[G + 2] * g3)
            dy[i, 15] = 0.0
            dy[i, 16] = 0.0
        else:
            e1, e2 = r1 - mw1, r2 - mw2
            t1 = p[P_KP] * e1 + p[P_KP + 1] * e2 + p[P_KI] * y[i, 15] + p[P_KI + 1] * y[i, 16]
            t2 = p[P_KP + 2] * e1 + p[P_KP + 3] * e2 + p[P_KI + 2] * y[i, 15] + p[P_KI + 3] * y[i, 16]
            dy[i, 12] = 0.0
            dy[i, 13] = 0.0
            dy[i, 14] = 0.0
            dy[i, 15] = e1
            dy[i, 16] = e2

        # true kinematics
        l1, l2 = theta[i, 0], theta[i, 1]
        s1, c1 = math.sin(q1), math.cos(q1)
        s12, c12 = math.sin(q1 + q2), math.cos(q1 + q2)
        Ja, Jb, Jc, Jd = -l1 * s1 - l2 * s12, -l2 * s12, l1 * c1 + l2 * c12, l2 * c12
        xd1 = Ja * w1 + Jb * w2
        xd2 = Jc * w1 + Jd * w2
        th1 = 0.0
        th2 = 0.0
        if stim_on and i == stim_agent:
            f1 = -p[P_SKD] * xd1 - p[P_SKP] * (aux[i, 0] - p[P_SXH])
            f2 = -p[P_SKD] * xd2 - p[P_SKP] * (aux[i, 1] - p[P_SXH + 1])
            th1 = Ja * f1 + Jc * f2
            th2 = Jb * f1 + Jd * f2

        # plant: M qddot = tau + tau_h - C qdot
        va1, va2, va3 = vartheta[i, 0], vartheta[i, 1], vartheta[i, 2]
        c2, s2 = math.cos(q2), math.sin(q2)
        hh = va2 * s2
        rhs1 = t1 + th1 - (-hh * w2 * w1 - hh * (w1 + w2) * w2)
        rhs2 = t2 + th2 - hh * w1 * w1
        m11 = va1 + 2 * va2 * c2
        m12 = va3 + va2 * c2
        m22 = va3
        mdet = m11 * m22 - m12 * m12
        dy[i, 0], dy[i, 1] = w1, w2
        dy[i, 2] = (m22 * rhs1 - m12 * rhs2) / mdet
        dy[i, 3] = (m11 * rhs2 - m12 * rhs1) / mdet
        dy[i, 4], dy[i, 5] = xod[i, 0], xod[i, 1]
        dy[i, 6], dy[i, 7] = sst[i, 0], sst[i, 1]
        dy[i, 8], dy[i, 9] = dxo[i, 0], dxo[i, 1]
        sv1, sv2 = w1 - r1, w2 - r2
        js1 = Ja * sv1 + Jb * sv2
        js2 = Jc * sv1 + Jd * sv2
        dy[i, 17] = js1 * js1 + js2 * js2

        aux[i, 2], aux[i, 3] = xd1, xd2
        aux[i, 4], aux[i, 5] = r1, r2
        aux[i, 6], aux[i, 7] = sst[i, 0], sst[i, 1]
        aux[i, 8], aux[i, 9] = t1, t2
        aux[i, 10], aux[i, 11] = th1, th2
        aux[i, 12], aux[i, 13] = xod[i, 0], xod[i, 1]
        aux[i, 14] = ud1 - beta * (xod[i, 0] - xd1) - lam * dxo[i, 0]
        aux[i, 15] = ud2 - beta * (xod[i, 1] - xd2) - lam * dxo[i, 1]
    return OK, -1, 0.0
