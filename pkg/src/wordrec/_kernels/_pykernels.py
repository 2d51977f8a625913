"""Pure-Python edit-lattice kernels.

Reference implementations of the hot inner loops; the compiled module in
``_ckernels.pyx`` mirrors these operation for operation.  Symbol ids are
1-based; id 0 is reserved for the empty symbol (epsilon), so a weight
table indexed ``[x, y]`` covers input symbol x and output symbol y with
``[0, 0]`` permanently unused.

All lattice walks share one geometry: cell (i, j) means "consumed i input
symbols, emitted j output symbols", with three moves

    substitution  (i, j) -> (i+1, j+1)   arc (a[i]   -> b[j])
    deletion      (i, j) -> (i+1, j)     arc (a[i]   -> eps)
    insertion     (i, j) -> (i, j+1)     arc (eps    -> b[j])

Per-cell accumulation is always performed in the fixed order
substitution, deletion, insertion so results are reproducible bit for bit
regardless of backend or caller threading.
"""

import math

NEG_INF = float("-inf")


def _lse3(s: float, d: float, i: float) -> float:
    m = s
    if d > m:
        m = d
    if i > m:
        m = i
    if m == NEG_INF:
        return NEG_INF
    return m + math.log(math.exp(s - m) + math.exp(d - m) + math.exp(i - m))


def _lse2(a: float, b: float) -> float:
    m = a if a > b else b
    if m == NEG_INF:
        return NEG_INF
    return m + math.log(math.exp(a - m) + math.exp(b - m))


def levenshtein(a, b) -> int:
    """Unit-cost edit distance between two id sequences."""
    n, m = len(a), len(b)
    if n == 0:
        return m
    if m == 0:
        return n
    prev = list(range(m + 1))
    cur = [0] * (m + 1)
    for i in range(1, n + 1):
        cur[0] = i
        ai = a[i - 1]
        for j in range(1, m + 1):
            sub = prev[j - 1] + (0 if ai == b[j - 1] else 1)
            dele = prev[j] + 1
            ins = cur[j - 1] + 1
            best = sub
            if dele < best:
                best = dele
            if ins < best:
                best = ins
            cur[j] = best
        prev, cur = cur, prev
    return prev[m]


def lattice_logsum(logw, a, b) -> float:
    """log of the total weight of all monotone alignment paths.

    ``logw`` is an (n+1, n+1) table of per-arc log weights.  Returns -inf
    when every path crosses a zero-weight arc.
    """
    I, J = len(a), len(b)
    w = [list(map(float, row)) for row in logw]
    prev = [0.0] * (J + 1)
    for j in range(1, J + 1):
        prev[j] = prev[j - 1] + w[0][b[j - 1]]
    for i in range(1, I + 1):
        ai = a[i - 1]
        row = w[ai]
        ins_row = w[0]
        cur = [0.0] * (J + 1)
        cur[0] = prev[0] + row[0]
        for j in range(1, J + 1):
            bj = b[j - 1]
            cur[j] = _lse3(prev[j - 1] + row[bj],
                           prev[j] + row[0],
                           cur[j - 1] + ins_row[bj])
        prev = cur
    return prev[J]


def lattice_best(logw, a, b) -> float:
    """log weight of the single best monotone alignment path."""
    I, J = len(a), len(b)
    w = [list(map(float, row)) for row in logw]
    prev = [0.0] * (J + 1)
    for j in range(1, J + 1):
        prev[j] = prev[j - 1] + w[0][b[j - 1]]
    for i in range(1, I + 1):
        ai = a[i - 1]
        row = w[ai]
        ins_row = w[0]
        cur = [0.0] * (J + 1)
        cur[0] = prev[0] + row[0]
        for j in range(1, J + 1):
            bj = b[j - 1]
            s = prev[j - 1] + row[bj]
            d = prev[j] + row[0]
            ins = cur[j - 1] + ins_row[bj]
            best = s
            if d > best:
                best = d
            if ins > best:
                best = ins
            cur[j] = best
        prev = cur
    return prev[J]


def em_accumulate(logjoint, a, b, counts) -> float:
    """Forward-backward over one pair's edit lattice.

    Adds each arc's expected usage count (posterior probability summed
    over paths) into ``counts`` and returns the pair's log-likelihood
    under ``logjoint``.  ``counts`` is mutated in place; nothing is added
    when the pair has zero total probability.
    """
    I, J = len(a), len(b)
    w = [list(map(float, row)) for row in logjoint]

    fwd = [[NEG_INF] * (J + 1) for _ in range(I + 1)]
    fwd[0][0] = 0.0
    for j in range(1, J + 1):
        fwd[0][j] = fwd[0][j - 1] + w[0][b[j - 1]]
    for i in range(1, I + 1):
        ai = a[i - 1]
        row = w[ai]
        fwd[i][0] = fwd[i - 1][0] + row[0]
        for j in range(1, J + 1):
            bj = b[j - 1]
            fwd[i][j] = _lse3(fwd[i - 1][j - 1] + row[bj],
                              fwd[i - 1][j] + row[0],
                              fwd[i][j - 1] + w[0][bj])

    logz = fwd[I][J]
    if logz == NEG_INF:
        return NEG_INF

    bwd = [[NEG_INF] * (J + 1) for _ in range(I + 1)]
    bwd[I][J] = 0.0
    for j in range(J - 1, -1, -1):
        bwd[I][j] = bwd[I][j + 1] + w[0][b[j]]
    for i in range(I - 1, -1, -1):
        ai = a[i]
        row = w[ai]
        bwd[i][J] = bwd[i + 1][J] + row[0]
        for j in range(J - 1, -1, -1):
            bj = b[j]
            bwd[i][j] = _lse3(bwd[i + 1][j + 1] + row[bj],
                              bwd[i + 1][j] + row[0],
                              bwd[i][j + 1] + w[0][bj])

    for i in range(I + 1):
        fi = fwd[i]
        for j in range(J + 1):
            f = fi[j]
            if f == NEG_INF:
                continue
            if i < I and j < J:
                x, y = a[i], b[j]
                lp = f + w[x][y] + bwd[i + 1][j + 1] - logz
                if lp > NEG_INF:
                    counts[x][y] += math.exp(lp)
            if i < I:
                x = a[i]
                lp = f + w[x][0] + bwd[i + 1][j] - logz
                if lp > NEG_INF:
                    counts[x][0] += math.exp(lp)
            if j < J:
                y = b[j]
                lp = f + w[0][y] + bwd[i][j + 1] - logz
                if lp > NEG_INF:
                    counts[0][y] += math.exp(lp)
    return logz
