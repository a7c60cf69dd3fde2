"""Compiled path kernels.

Every kernel takes an encoded step model ``(kind, sign, par, vals, cdf)``
(see :func:`expwalk.steps.encode`), a batch size and a 32-bit seed.  The
seed is applied to numba's thread-local generator on entry, so a batch is a
pure function of its seed and results do not depend on which thread runs it.

Exponential functionals are accumulated in a rescaled linear form
``I = acc * exp(off)`` where the current term ``exp(-S_k - off)`` is updated
multiplicatively and re-synchronised from ``S_k`` periodically; this is a
streaming log-sum-exp that needs no ``exp``/``log`` per step for lattice laws.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

_BIG = 1e250
_TINY = 1e-250
_RESYNC = 128


@njit(cache=True, nogil=True)
def _pareto_from_survival(v, beta, scale, shift):
    return shift + scale * (v ** (-1.0 / beta) - 1.0)


@njit(cache=True, nogil=True)
def draw(kind, sign, par, vals, cdf):
    if kind == 0:
        u = np.random.random()
        i = 0
        n = cdf.size
        while i < n - 1 and u >= cdf[i]:
            i += 1
        x = vals[i]
    elif kind == 1:
        x = np.random.normal(par[0], par[1])
    elif kind == 2:
        v = 1.0 - np.random.random()
        x = _pareto_from_survival(v, par[0], par[1], par[2])
    else:
        while True:
            v = 1.0 - np.random.random()
            x = _pareto_from_survival(v, par[0], par[1], par[2])
            if np.random.random() <= math.exp(par[3] * (x - par[2])):
                break
    return sign * x


@njit(cache=True, nogil=True)
def _normal_tail(z0):
    # standard normal conditioned on Z >= z0
    if z0 < 0.5:
        while True:
            z = np.random.normal(0.0, 1.0)
            if z >= z0:
                return z
    rate = 0.5 * (z0 + math.sqrt(z0 * z0 + 4.0))
    while True:
        z = z0 - math.log(1.0 - np.random.random()) / rate
        if np.random.random() <= math.exp(-0.5 * (z - rate) ** 2):
            return z


@njit(cache=True, nogil=True)
def tail_mass(kind, sign, par, vals, cdf, thr):
    """P(X >= thr) for positive-sign atom and Pareto encodings."""
    if kind == 0:
        m = 0.0
        prev = 0.0
        for i in range(cdf.size):
            if sign * vals[i] >= thr - 1e-12 * max(1.0, abs(thr)):
                m += cdf[i] - prev
            prev = cdf[i]
        return m
    if kind == 2 and sign > 0:
        if thr <= par[2]:
            return 1.0
        return (1.0 + (thr - par[2]) / par[1]) ** (-par[0])
    return -1.0


@njit(cache=True, nogil=True)
def draw_tail(kind, sign, par, vals, cdf, thr, mass):
    """Draw X given X >= thr; ``mass`` is P(X >= thr)."""
    if kind == 2 and sign > 0:
        v = (1.0 - np.random.random()) * mass
        return _pareto_from_survival(v, par[0], par[1], par[2])
    if kind == 0:
        u = np.random.random() * mass
        acc = 0.0
        prev = 0.0
        last = 0.0
        for i in range(cdf.size):
            p = cdf[i] - prev
            prev = cdf[i]
            x = sign * vals[i]
            if x >= thr - 1e-12 * max(1.0, abs(thr)):
                last = x
                acc += p
                if u < acc:
                    return x
        return last
    if kind == 1 and sign > 0:
        return par[0] + par[1] * _normal_tail((thr - par[0]) / par[1])
    if kind == 3 and sign > 0:
        lo = max(thr, par[2])
        base = (1.0 + (lo - par[2]) / par[1]) ** (-par[0])
        while True:
            v = (1.0 - np.random.random()) * base
            x = _pareto_from_survival(v, par[0], par[1], par[2])
            if np.random.random() <= math.exp(par[3] * (x - lo)):
                return x
    while True:
        x = draw(kind, sign, par, vals, cdf)
        if x >= thr:
            return x


@njit(cache=True, nogil=True)
def draw_below(kind, sign, par, vals, cdf, thr, mass):
    """Draw X given X <= thr; ``mass`` is P(X <= thr)."""
    if kind == 2 and sign > 0:
        # survival in [1 - mass, 1]
        v = 1.0 - np.random.random() * mass
        return _pareto_from_survival(v, par[0], par[1], par[2])
    while True:
        x = draw(kind, sign, par, vals, cdf)
        if x <= thr:
            return x


# ---------------------------------------------------------------------------
# exponential functional of a plain walk
# ---------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def ef_paths(kind, sign, par, vals, cdf, rungs, start, lam, K0, theta, c0, count, seed):
    """``log(exp(-lam * S_n) * F(I_n))`` at each rung ``n`` for ``count`` paths."""
    np.random.seed(seed)
    R = rungs.size
    n_max = rungs[R - 1]
    out = np.empty((count, R))
    lc0 = math.log(c0)
    lK0 = math.log(K0)
    atoms = kind == 0
    ex = np.empty(vals.size)
    for i in range(vals.size):
        ex[i] = math.exp(-sign * vals[i])
    for p in range(count):
        s = start
        off = -start
        acc = 0.0
        cur = 1.0  # exp(-S_0 - off)
        small = False
        r = 0
        for k in range(1, n_max + 1):
            if atoms:
                u = np.random.random()
                i = 0
                while i < cdf.size - 1 and u >= cdf[i]:
                    i += 1
                x = sign * vals[i]
                s += x
                if small or k % _RESYNC == 0:
                    cur = math.exp(-s - off)
                else:
                    cur *= ex[i]
            else:
                x = draw(kind, sign, par, vals, cdf)
                s += x
                cur = math.exp(-s - off)
            small = cur < _TINY
            acc += cur
            if acc > _BIG:
                shift = math.log(acc)
                off += shift
                acc = 1.0
                cur = math.exp(-s - off)
            if k == rungs[r]:
                log_i = math.log(acc) + off if acc > 0 else -math.inf
                if log_i > lc0:
                    lse = log_i + math.log1p(math.exp(lc0 - log_i))
                else:
                    lse = lc0 + math.log1p(math.exp(log_i - lc0))
                out[p, r] = lK0 - theta * lse - lam * s
                r += 1
    return out


@njit(cache=True, nogil=True)
def first_passage(kind, sign, par, vals, cdf, start, level, cap, count, seed):
    """First ``k >= 1`` with ``S_k < level``; -1 when censored at ``cap``."""
    np.random.seed(seed)
    hit = np.full(count, -1, dtype=np.int64)
    pos = np.full(count, np.nan)
    for p in range(count):
        s = start
        for k in range(1, cap + 1):
            s += draw(kind, sign, par, vals, cdf)
            if s < level:
                hit[p] = k
                pos[p] = s
                break
    return hit, pos


@njit(cache=True, nogil=True)
def bigjump_survival(kind, sign, par, vals, cdf, start, n, thr, p_small, p_big, q_cdf, count, seed):
    """Importance-sampled indicator weights for ``{S_j >= 0, j <= n}``.

    The first step exceeding ``thr`` is placed at ``k`` drawn from ``q``
    (``k = 0`` meaning no such step up to ``n``); steps before it are drawn
    from X given ``X <= thr``, the step itself from X given ``X > thr`` and
    later steps from the plain law.  Returns weight times indicator.
    """
    np.random.seed(seed)
    out = np.zeros(count)
    log_small = math.log(p_small) if p_small > 0 else -math.inf
    for p in range(count):
        u = np.random.random()
        k = 0
        while k < q_cdf.size - 1 and u >= q_cdf[k]:
            k += 1
        qk = q_cdf[k] - (q_cdf[k - 1] if k > 0 else 0.0)
        if k == 0:
            logw = n * log_small - math.log(qk)
        else:
            logw = (k - 1) * log_small + math.log(p_big) - math.log(qk)
        s = start
        alive = True
        for j in range(1, n + 1):
            if k == 0 or j < k:
                x = draw_below(kind, sign, par, vals, cdf, thr, p_small)
            elif j == k:
                x = draw_tail(kind, sign, par, vals, cdf, thr, p_big)
            else:
                x = draw(kind, sign, par, vals, cdf)
            s += x
            if s < 0.0:
                alive = False
                break
        if alive:
            out[p] = math.exp(logw)
    return out


@njit(cache=True, nogil=True)
def _log_f(log_i, lK0, theta, lc0):
    if log_i == -math.inf:
        return lK0 - theta * lc0
    if log_i > lc0:
        lse = log_i + math.log1p(math.exp(lc0 - log_i))
    else:
        lse = lc0 + math.log1p(math.exp(log_i - lc0))
    return lK0 - theta * lse


@njit(cache=True, nogil=True)
def _lae(a, b):
    if a == -math.inf:
        return b
    if b == -math.inf:
        return a
    if a > b:
        return a + math.log1p(math.exp(b - a))
    return b + math.log1p(math.exp(a - b))


@njit(cache=True, nogil=True)
def bigjump_ef(kind, sign, par, vals, cdf, n, k, thr, mass, K0, theta, c0, count, seed):
    """``F(I_n)`` with step ``k`` drawn from X given ``X >= thr``."""
    np.random.seed(seed)
    out = np.empty(count)
    lK0, lc0 = math.log(K0), math.log(c0)
    for p in range(count):
        s = 0.0
        log_i = -math.inf
        for j in range(1, n + 1):
            if j == k:
                x = draw_tail(kind, sign, par, vals, cdf, thr, mass)
            else:
                x = draw(kind, sign, par, vals, cdf)
            s += x
            log_i = _lae(log_i, -s)
        out[p] = math.exp(_log_f(log_i, lK0, theta, lc0))
    return out


@njit(cache=True, nogil=True)
def c4_samples(kind, sign, par, vals, cdf, k, n, thr, mass, K0, theta, c0, count, seed):
    """``F(I_{k-1} + exp(-S_{k-1} - X) * I~_n)`` with X given ``X >= thr``."""
    np.random.seed(seed)
    out = np.empty(count)
    lK0, lc0 = math.log(K0), math.log(c0)
    for p in range(count):
        s = 0.0
        log_i = -math.inf
        for j in range(1, k):
            s += draw(kind, sign, par, vals, cdf)
            log_i = _lae(log_i, -s)
        x = draw_tail(kind, sign, par, vals, cdf, thr, mass)
        st = 0.0
        log_it = -math.inf
        for j in range(1, n + 1):
            st += draw(kind, sign, par, vals, cdf)
            log_it = _lae(log_it, -st)
        total = _lae(log_i, -s - x + log_it)
        out[p] = math.exp(_log_f(total, lK0, theta, lc0))
    return out


@njit(cache=True, nogil=True)
def prefix_paths(kind, sign, par, vals, cdf, k, count, seed):
    """``(S_k, log I_k)`` for ``count`` independent ``k``-step paths."""
    np.random.seed(seed)
    s_out = np.empty(count)
    li_out = np.empty(count)
    for p in range(count):
        s = 0.0
        log_i = -math.inf
        for j in range(1, k + 1):
            s += draw(kind, sign, par, vals, cdf)
            log_i = _lae(log_i, -s)
        s_out[p] = s
        li_out[p] = log_i
    return s_out, li_out


@njit(cache=True, nogil=True)
def i_infinity(kind, sign, par, vals, cdf, start, eps, window, cap, count, seed):
    """``log sum_{j>=1} exp(-S_j)`` for a walk drifting to +inf.

    Stops once the sum of the last ``window`` terms drops below
    ``eps`` times the running total; ``cap`` bounds the horizon.
    """
    np.random.seed(seed)
    out = np.empty(count)
    trunc = np.zeros(count, dtype=np.bool_)
    ring = np.zeros(window)
    for p in range(count):
        s = start
        log_i = -math.inf
        ring[:] = -math.inf
        done = False
        for j in range(1, cap + 1):
            s += draw(kind, sign, par, vals, cdf)
            log_i = _lae(log_i, -s)
            ring[j % window] = -s
            if j >= window and j % window == 0:
                w = 0.0
                for q in range(window):
                    w += math.exp(ring[q] - log_i)
                if w < eps:
                    done = True
                    break
        out[p] = log_i
        trunc[p] = not done
    return out, trunc


# ---------------------------------------------------------------------------
# walks conditioned to stay nonnegative (Doob h-transform)
# ---------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def v_lookup(x, grid, values, slope, step_mode):
    if x < -1e-9:
        return 0.0
    last = grid.size - 1
    if x >= grid[last]:
        if step_mode:
            # staircase continuation with the last grid period
            h = grid[last] - grid[last - 1]
            return values[last] + slope * h * math.floor((x - grid[last]) / h + 1e-9)
        return values[last] + slope * (x - grid[last])
    if step_mode:
        idx = np.searchsorted(grid, x + 1e-9, side="right") - 1
        if idx < 0:
            idx = 0
        return values[idx]
    idx = np.searchsorted(grid, x, side="right") - 1
    if idx < 0:
        return values[0]
    g0, g1 = grid[idx], grid[idx + 1]
    w = (x - g0) / (g1 - g0)
    return values[idx] * (1.0 - w) + values[idx + 1] * w


@njit(cache=True, nogil=True)
def _up_row(m, offsets, probs, spacing, grid, values, slope, step_mode, w):
    vx = v_lookup(m * spacing, grid, values, slope, step_mode)
    tot = 0.0
    for i in range(offsets.size):
        y = m + offsets[i]
        if y < 0:
            w[i] = 0.0
        else:
            w[i] = probs[i] * v_lookup(y * spacing, grid, values, slope, step_mode) / vx
        tot += w[i]
    return tot


@njit(cache=True, nogil=True)
def up_lattice(offsets, probs, spacing, grid, values, slope, step_mode,
               start_idx, n_steps, count, seed):
    """Paths of the h-transformed lattice walk (state indices, row sum status)."""
    np.random.seed(seed)
    out = np.empty((count, n_steps + 1), dtype=np.int64)
    w = np.empty(offsets.size)
    worst = 0.0
    for p in range(count):
        m = start_idx
        out[p, 0] = m
        for j in range(1, n_steps + 1):
            tot = _up_row(m, offsets, probs, spacing, grid, values, slope, step_mode, w)
            dev = abs(tot - 1.0)
            if dev > worst:
                worst = dev
            u = np.random.random() * tot
            acc = 0.0
            pick = offsets.size - 1
            for i in range(offsets.size):
                acc += w[i]
                if u < acc and w[i] > 0:
                    pick = i
                    break
            m += offsets[pick]
            out[p, j] = m
    return out, worst


@njit(cache=True, nogil=True)
def i_up_lattice(offsets, probs, spacing, grid, values, slope, step_mode,
                 start_idx, eps, window, cap, count, seed):
    """``I_up = sum_{j>=1} exp(-S_up_j)`` for the lattice h-transform."""
    np.random.seed(seed)
    out = np.empty(count)
    trunc = np.zeros(count, dtype=np.bool_)
    w = np.empty(offsets.size)
    ring = np.zeros(window)
    worst = 0.0
    for p in range(count):
        m = start_idx
        total = 0.0
        ring[:] = 0.0
        done = False
        for j in range(1, cap + 1):
            tot = _up_row(m, offsets, probs, spacing, grid, values, slope, step_mode, w)
            dev = abs(tot - 1.0)
            if dev > worst:
                worst = dev
            u = np.random.random() * tot
            acc = 0.0
            pick = offsets.size - 1
            for i in range(offsets.size):
                acc += w[i]
                if u < acc and w[i] > 0:
                    pick = i
                    break
            m += offsets[pick]
            t = math.exp(-m * spacing)
            total += t
            ring[j % window] = t
            if j >= window and j % window == 0:
                wsum = 0.0
                for q in range(window):
                    wsum += ring[q]
                if wsum < eps * total:
                    done = True
                    break
        out[p] = total
        trunc[p] = not done
    return out, trunc, worst


@njit(cache=True, nogil=True)
def _up_continuous_step(x, kind, sign, par, vals, cdf, reach, grid, values, slope, step_mode):
    env = v_lookup(x + reach, grid, values, slope, step_mode)
    while True:
        y = x + draw(kind, sign, par, vals, cdf)
        if y < 0.0:
            continue
        vy = v_lookup(y, grid, values, slope, step_mode)
        if np.random.random() * max(env, vy) <= vy:
            return y


@njit(cache=True, nogil=True)
def up_continuous(kind, sign, par, vals, cdf, reach, grid, values, slope, step_mode,
                  start, n_steps, count, seed):
    np.random.seed(seed)
    out = np.empty((count, n_steps + 1))
    for p in range(count):
        x = start
        out[p, 0] = x
        for j in range(1, n_steps + 1):
            x = _up_continuous_step(x, kind, sign, par, vals, cdf, reach, grid, values, slope,
                                    step_mode)
            out[p, j] = x
    return out


@njit(cache=True, nogil=True)
def i_up_continuous(kind, sign, par, vals, cdf, reach, grid, values, slope, step_mode,
                    start, eps, window, cap, count, seed):
    np.random.seed(seed)
    out = np.empty(count)
    trunc = np.zeros(count, dtype=np.bool_)
    ring = np.zeros(window)
    for p in range(count):
        x = start
        total = 0.0
        ring[:] = 0.0
        done = False
        for j in range(1, cap + 1):
            x = _up_continuous_step(x, kind, sign, par, vals, cdf, reach, grid, values, slope,
                                    step_mode)
            t = math.exp(-x)
            total += t
            ring[j % window] = t
            if j >= window and j % window == 0:
                wsum = 0.0
                for q in range(window):
                    wsum += ring[q]
                if wsum < eps * total:
                    done = True
                    break
        out[p] = total
        trunc[p] = not done
    return out, trunc


# ---------------------------------------------------------------------------
# ladder-series terms
# ---------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def ladder_terms(kind, sign, par, vals, cdf, k_max, log_iup, K0, theta, c0, count, seed):
    """Per-path contributions ``F(I_k + exp(-S_k) * I_up); sigma_k^- = k``.

    Column ``k`` holds the contribution at horizon ``k`` (zero unless ``k``
    is a strict descending ladder epoch); column 0 is ``F(I_up)``.
    """
    np.random.seed(seed)
    out = np.zeros((count, k_max + 1))
    lK0, lc0 = math.log(K0), math.log(c0)
    for p in range(count):
        lu = log_iup[p]
        out[p, 0] = math.exp(_log_f(lu, lK0, theta, lc0))
        s = 0.0
        low = 0.0
        log_i = -math.inf
        for k in range(1, k_max + 1):
            s += draw(kind, sign, par, vals, cdf)
            log_i = _lae(log_i, -s)
            if s < low:
                low = s
                out[p, k] = math.exp(_log_f(_lae(log_i, -s + lu), lK0, theta, lc0))
    return out
