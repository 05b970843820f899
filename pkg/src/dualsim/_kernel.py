"""Jitted tau-leap inner loop.

The public engine in `abm` compiles each channel's rate expression to a
postfix program (see `rates.compile_rate`) and hands flat arrays to
`run_tau_leap`, which advances a whole replication on its own.  Keeping
the loop free of Python objects is what makes 600-day, 50-replication
ensembles affordable on one core; numba's disk cache avoids recompiling
across processes.

Channel encoding (one row per transition, influxes appended last):
  kind: 0 spawn, 1 remove-self, 2 remove-other, 3 signed-branch, 4 influx
  src:  source species index (-1 for influx)
  tgt:  species index receiving spawns / losing agents to messages;
        equal to src for remove-self and signed rows
  mult: agents added per spawn firing (1 elsewhere)

The kernel uses numba's legacy per-thread RNG seeded once per
replication, so a whole replication is a single deterministic draw
sequence.  Status codes: 0 ok, 1 a rate evaluated non-finite, 2 a
negative rate on a channel that is not signed-branch.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _binomial_btpe(n, p):
    """Exact binomial sampling by the BTPE rejection method.

    Constant-time for large n*p, unlike the builtin which loops over
    successes.  Standard triangle/parallelogram/exponential-tail
    envelope with squeeze and Stirling-series acceptance tests; uniform
    draws come from the same jitted RNG stream as everything else.
    """
    r = p if p <= 0.5 else 1.0 - p
    q = 1.0 - r
    fm = n * r + r
    m = np.int64(np.floor(fm))
    nrq = n * r * q
    p1 = np.floor(2.195 * np.sqrt(nrq) - 4.6 * q) + 0.5
    xm = m + 0.5
    xl = xm - p1
    xr = xm + p1
    c = 0.134 + 20.5 / (15.3 + m)
    a = (fm - xl) / (fm - xl * r)
    laml = a * (1.0 + a / 2.0)
    a = (xr - fm) / (xr * q)
    lamr = a * (1.0 + a / 2.0)
    p2 = p1 * (1.0 + 2.0 * c)
    p3 = p2 + c / laml
    p4 = p3 + c / lamr

    while True:
        u = np.random.random() * p4
        v = np.random.random()
        if u <= p1:
            y = np.int64(np.floor(xm - p1 * v + u))
            break
        if u <= p2:
            x = xl + (u - p1) / c
            v = v * c + 1.0 - abs(m - x + 0.5) / p1
            if v > 1.0:
                continue
            y = np.int64(np.floor(x))
        elif u <= p3:
            if v == 0.0:
                continue
            y = np.int64(np.floor(xl + np.log(v) / laml))
            if y < 0:
                continue
            v = v * (u - p2) * laml
        else:
            if v == 0.0:
                continue
            y = np.int64(np.floor(xr - np.log(v) / lamr))
            if y > n:
                continue
            v = v * (u - p3) * lamr

        k = y - m if y >= m else m - y
        if k <= 20 or k >= nrq / 2.0 - 1.0:
            s = r / q
            aa = s * (n + 1)
            big_f = 1.0
            if m < y:
                for i in range(m + 1, y + 1):
                    big_f *= aa / i - s
            elif m > y:
                for i in range(y + 1, m + 1):
                    big_f /= aa / i - s
            if v <= big_f:
                break
            continue
        rho = (k / nrq) * ((k * (k / 3.0 + 0.625) + 0.16666666666666666) / nrq + 0.5)
        t = -k * k / (2.0 * nrq)
        log_v = np.log(v)
        if log_v < t - rho:
            break
        if log_v > t + rho:
            continue
        x1 = float(y + 1)
        f1 = float(m + 1)
        z = float(n + 1 - m)
        w = float(n - y + 1)
        x2 = x1 * x1
        f2 = f1 * f1
        z2 = z * z
        w2 = w * w
        bound = (
            xm * np.log(f1 / x1)
            + (n - m + 0.5) * np.log(z / w)
            + (y - m) * np.log(w * r / (x1 * q))
            + (13860.0 - (462.0 - (132.0 - (99.0 - 140.0 / f2) / f2) / f2) / f2) / f1 / 166320.0
            + (13860.0 - (462.0 - (132.0 - (99.0 - 140.0 / z2) / z2) / z2) / z2) / z / 166320.0
            + (13860.0 - (462.0 - (132.0 - (99.0 - 140.0 / x2) / x2) / x2) / x2) / x1 / 166320.0
            + (13860.0 - (462.0 - (132.0 - (99.0 - 140.0 / w2) / w2) / w2) / w2) / w / 166320.0
        )
        if log_v <= bound:
            break
    if p > 0.5:
        y = n - y
    return y


@njit(cache=True)
def _binomial(n, p):
    """Binomial(n, p) routed to whichever exact sampler is cheaper."""
    if n <= 0 or p <= 0.0:
        return np.int64(0)
    if p >= 1.0:
        return np.int64(n)
    r = p if p <= 0.5 else 1.0 - p
    if n * r < 30.0:
        return np.int64(np.random.binomial(n, p))
    return _binomial_btpe(n, p)


@njit(cache=True)
def _eval_prog(code, arg, lo, hi, counts_f, stack):
    """Run one postfix rate program over the scratch stack."""
    sp = 0
    for pc in range(lo, hi):
        op = code[pc]
        if op == 0:  # constant
            stack[sp] = arg[pc]
            sp += 1
        elif op == 1:  # species count
            stack[sp] = counts_f[np.int64(arg[pc])]
            sp += 1
        elif op == 2:
            sp -= 1
            stack[sp - 1] += stack[sp]
        elif op == 3:
            sp -= 1
            stack[sp - 1] -= stack[sp]
        elif op == 4:
            sp -= 1
            stack[sp - 1] *= stack[sp]
        elif op == 5:
            sp -= 1
            stack[sp - 1] /= stack[sp]
        else:
            sp -= 1
            stack[sp - 1] = stack[sp - 1] ** stack[sp]
    return stack[0]


@njit(cache=True)
def run_tau_leap(
    counts0,
    kind,
    src,
    tgt,
    mult,
    code,
    arg,
    offs,
    pat,
    pa,
    pb,
    pspec,
    dt,
    steps_per_sample,
    n_samples,
    guard,
    stack_size,
    seed,
):
    """Advance one stochastic replication and return sampled counts.

    `pat`/`pa`/`pb`/`pspec` are the per-channel closed-form summaries
    from `rates.classify_rate`; channels with pattern 0 fall back to the
    interpreted program.  Returns (out, clamped, substeps, status) where
    `out` has shape (n_samples + 1, n_species) with the initial state in
    row 0, `clamped` counts removal draws that found no agent left to
    remove, and `substeps` counts leap iterations actually taken.
    """
    np.random.seed(seed)
    n_species = counts0.size
    n_channels = kind.size
    counts = counts0.copy()
    counts_f = np.empty(n_species)
    rates = np.empty(n_channels)
    active = np.empty(n_channels, np.bool_)
    draws = np.empty(n_channels, np.int64)
    removed = np.empty(n_species, np.int64)
    added = np.empty(n_species, np.int64)
    stack = np.empty(stack_size)
    out = np.empty((n_samples + 1, n_species), np.int64)
    out[0] = counts
    clamped = np.int64(0)
    substeps = np.int64(0)
    status = np.int64(0)
    static = False  # no channel can ever fire again
    # Removal probabilities of constant-rate channels depend only on the
    # substep size, so they are recomputed only when it changes.
    pconst = np.zeros(n_channels)
    h_cached = -1.0

    for samp in range(1, n_samples + 1):
        if static:
            out[samp] = counts
            continue
        for _ in range(steps_per_sample):
            remaining = dt
            while remaining > 0.0:
                for i in range(n_species):
                    counts_f[i] = counts[i]
                max_rate = 0.0
                any_active = False
                for c in range(n_channels):
                    if kind[c] != 4 and counts[src[c]] == 0:
                        # No source agents: the channel cannot fire and
                        # its rate is never evaluated.
                        rates[c] = 0.0
                        active[c] = False
                        continue
                    pt = pat[c]
                    if pt == 1:
                        r = pa[c]
                    elif pt == 2:
                        r = pa[c] + pb[c] * counts_f[pspec[c]]
                    elif pt == 3:
                        x = counts_f[pspec[c]]
                        r = pa[c] * x / (pb[c] + x)
                    else:
                        r = _eval_prog(code, arg, offs[c], offs[c + 1], counts_f, stack)
                    if not np.isfinite(r):
                        status = 1
                        break
                    if r < 0.0 and kind[c] != 3:
                        status = 2
                        break
                    rates[c] = r
                    act = r != 0.0
                    active[c] = act
                    if act:
                        any_active = True
                        ar = abs(r)
                        if ar > max_rate:
                            max_rate = ar
                if status != 0:
                    return out, clamped, substeps, status
                if not any_active:
                    # Rates depend only on counts, so an all-quiet state
                    # stays quiet for the rest of the run.
                    static = True
                    break
                if max_rate * remaining <= guard * (1.0 + 1e-12):
                    h = remaining
                else:
                    h = guard / max_rate
                    if h > remaining:
                        h = remaining
                substeps += 1
                if h != h_cached:
                    for c in range(n_channels):
                        if pat[c] == 1:
                            k = kind[c]
                            if k == 1 or k == 2 or (k == 3 and pa[c] < 0.0):
                                pconst[c] = -np.expm1(-abs(pa[c]) * h)
                    h_cached = h

                # Draw firings channel by channel in declared order.
                for c in range(n_channels):
                    if not active[c]:
                        draws[c] = 0
                        continue
                    r = rates[c]
                    k = kind[c]
                    if k == 4:
                        draws[c] = np.random.poisson(r * h)
                    elif k == 0 or (k == 3 and r > 0.0):
                        draws[c] = np.random.poisson(counts[src[c]] * r * h)
                    else:
                        if pat[c] == 1:
                            p = pconst[c]
                        else:
                            p = -np.expm1(-abs(r) * h)
                        draws[c] = _binomial(counts[src[c]], p)

                # Apply removals first (declared order), clamping each
                # draw to the agents still available, then additions.
                for i in range(n_species):
                    removed[i] = 0
                    added[i] = 0
                for c in range(n_channels):
                    n = draws[c]
                    if n == 0:
                        continue
                    k = kind[c]
                    if k == 1 or (k == 3 and rates[c] < 0.0):
                        j = src[c]
                    elif k == 2:
                        j = tgt[c]
                    else:
                        continue
                    room = counts[j] - removed[j]
                    take = n if n <= room else room
                    clamped += n - take
                    removed[j] += take
                for c in range(n_channels):
                    n = draws[c]
                    if n == 0:
                        continue
                    k = kind[c]
                    if k == 0:
                        added[tgt[c]] += n * mult[c]
                    elif k == 4:
                        added[tgt[c]] += n
                    elif k == 3 and rates[c] > 0.0:
                        added[src[c]] += n
                for i in range(n_species):
                    counts[i] = counts[i] - removed[i] + added[i]
                remaining -= h
            if static:
                break
        out[samp] = counts
    return out, clamped, substeps, status
