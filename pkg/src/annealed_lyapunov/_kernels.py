"""Compiled inner loops for walk simulation.

Move ``j`` in ``0..2d-1`` is the unit step along axis ``j // 2`` with sign
``+1`` for even ``j`` and ``-1`` for odd ``j``.  Every kernel seeds numba's
generator from its ``seed`` argument first, so output is a pure function of
the arguments.
"""
import numpy as np
from numba import njit


@njit(cache=True)
def _sample_move(cum, m):
    u = np.random.random()
    j = 0
    while j < m - 1 and u >= cum[j]:
        j += 1
    return j


@njit(cache=True)
def escape_walks(d, n_walks, stop_r2, seed):
    """Walks from 0 until they return to 0 or leave the ball |x|^2 > stop_r2.

    Returns sums over walks of x = 1{no return}, y = x * |S_stop|^(2-d)
    together with their second moments, for a ratio estimator.
    """
    np.random.seed(seed)
    sx = 0.0
    sy = 0.0
    sxx = 0.0
    syy = 0.0
    sxy = 0.0
    pos = np.zeros(d, np.int64)
    for _ in range(n_walks):
        for i in range(d):
            pos[i] = 0
        r2 = 0
        while True:
            j = int(np.random.random() * 2 * d)
            ax = j // 2
            old = pos[ax]
            if j % 2 == 0:
                pos[ax] = old + 1
            else:
                pos[ax] = old - 1
            r2 += pos[ax] * pos[ax] - old * old
            if r2 == 0:
                break
            if r2 > stop_r2:
                y = float(r2) ** (0.5 * (2 - d))
                sx += 1.0
                sy += y
                sxx += 1.0
                syy += y * y
                sxy += y
                break
    return sx, sy, sxx, syy, sxy


@njit(cache=True)
def exit_ball_walks(d, r2_max, n_walks, seed):
    """Exit displacement and exit time from the closed ball |x|^2 <= r2_max."""
    np.random.seed(seed)
    disp = np.zeros((n_walks, d), np.int64)
    times = np.zeros(n_walks, np.int64)
    pos = np.zeros(d, np.int64)
    for w in range(n_walks):
        for i in range(d):
            pos[i] = 0
        r2 = 0
        t = 0
        while r2 <= r2_max:
            j = int(np.random.random() * 2 * d)
            ax = j // 2
            old = pos[ax]
            if j % 2 == 0:
                pos[ax] = old + 1
            else:
                pos[ax] = old - 1
            r2 += pos[ax] * pos[ax] - old * old
            t += 1
        for i in range(d):
            disp[w, i] = pos[i]
        times[w] = t
    return disp, times


@njit(cache=True)
def substep_counts(d, r2_big, r2_small, n_walks, seed):
    """Number of radius-r_small coarse steps completed strictly before leaving the radius-R ball."""
    np.random.seed(seed)
    out = np.zeros(n_walks, np.int64)
    pos = np.zeros(d, np.int64)
    anchor = np.zeros(d, np.int64)
    for w in range(n_walks):
        for i in range(d):
            pos[i] = 0
            anchor[i] = 0
        k = 0
        while True:
            j = int(np.random.random() * 2 * d)
            ax = j // 2
            if j % 2 == 0:
                pos[ax] += 1
            else:
                pos[ax] -= 1
            r2 = 0
            a2 = 0
            for i in range(d):
                r2 += pos[i] * pos[i]
                diff = pos[i] - anchor[i]
                a2 += diff * diff
            if r2 > r2_big:
                break
            if a2 > r2_small:
                k += 1
                for i in range(d):
                    anchor[i] = pos[i]
        out[w] = k
    return out


@njit(cache=True)
def annealed_paths(n_paths, d, cum, step_loglr, proj_int, thr_int, proj_f, n_f, exact,
                   loglap, cap, seed):
    """Point-to-hyperplane paths under the (possibly tilted) step law ``cum``.

    For every path returns log(likelihood ratio) + sum over visited sites of
    log E[exp(-beta L_x V)], the local times L_x counting visits at times
    0..T-1.  Censored paths (T reached ``cap``) get log-weight -inf.
    ``max_lt`` reports the largest local time seen; when it exceeds
    ``len(loglap) - 1`` the weights of those paths are not valid and the
    caller must enlarge the table.
    """
    np.random.seed(seed)
    m = 2 * d
    bits = 63 // d
    off = np.int64(1) << (bits - 1)
    logw = np.empty(n_paths)
    steps = np.empty(n_paths, np.int64)
    censored = np.zeros(n_paths, np.bool_)
    kmax = loglap.shape[0] - 1
    max_lt = 0
    buf = np.empty(1024, np.int64)
    pos = np.zeros(d, np.int64)
    for s in range(n_paths):
        for i in range(d):
            pos[i] = 0
        pi = np.int64(0)
        pf = 0.0
        t = 0
        lw = 0.0
        while True:
            if exact:
                crossed = pi >= 0 and pi * pi >= thr_int
            else:
                crossed = pf >= n_f
            if crossed or t >= cap:
                break
            if t >= buf.shape[0]:
                nb = np.empty(2 * buf.shape[0], np.int64)
                nb[: buf.shape[0]] = buf
                buf = nb
            key = np.int64(0)
            for i in range(d):
                key |= (pos[i] + off) << (bits * i)
            buf[t] = key
            j = _sample_move(cum, m)
            lw += step_loglr[j]
            ax = j // 2
            if j % 2 == 0:
                pos[ax] += 1
            else:
                pos[ax] -= 1
            pi += proj_int[j]
            pf += proj_f[j]
            t += 1
        steps[s] = t
        if not crossed:
            censored[s] = True
            logw[s] = -np.inf
            continue
        if t > 0:
            keys = np.sort(buf[:t])
            run = 1
            for i in range(1, t + 1):
                if i < t and keys[i] == keys[i - 1]:
                    run += 1
                else:
                    if run > max_lt:
                        max_lt = run
                    if run <= kmax:
                        lw += loglap[run]
                    run = 1
        logw[s] = lw
    return logw, steps, censored, max_lt
