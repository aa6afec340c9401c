"""Rectangular maximum-quality assignment.

``solve`` runs a shortest-augmenting-path Hungarian solver and then
canonicalizes the result so that, among all optimal assignments, the
lexicographically smallest sequence of ``(gt_index, pred_index)`` pairs is
returned. ``solve_bruteforce`` enumerates injections and applies the same rule;
it exists to check ``solve``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

# Reduced costs within this band count as tight when canonicalizing ties.
TIGHT_TOL = 1e-10
# Totals within this band count as tied in the brute-force oracle.
TIE_TOL = 1e-10

BRUTEFORCE_MAX_G = 8
BRUTEFORCE_MAX_N = 10


class InvalidMatrixError(ValueError):
    pass


class OracleTooLargeError(ValueError):
    pass


@dataclass
class Assignment:
    pairs: List[Tuple[int, int, float]] = field(default_factory=list)
    unmatched_gts: List[int] = field(default_factory=list)

    @property
    def total_quality(self) -> float:
        return float(sum(q for _, _, q in self.pairs))

    def pair_set(self):
        return {(g, p) for g, p, _ in self.pairs}

    def pred_for_gt(self) -> dict:
        return {g: p for g, p, _ in self.pairs}

    def to_json(self) -> dict:
        return {
            "pairs": [{"gt": g, "pred": p, "quality": q} for g, p, q in self.pairs],
            "unmatched_gts": list(self.unmatched_gts),
        }


def as_quality_matrix(q, num_gts: int | None = None) -> np.ndarray:
    """Validate a G x N quality matrix. Empty inputs need ``num_gts`` to keep G."""
    arr = np.asarray(q, dtype=np.float64)
    if arr.size == 0:
        g = num_gts if num_gts is not None else (arr.shape[0] if arr.ndim == 2 else 0)
        n = arr.shape[1] if arr.ndim == 2 else 0
        return np.zeros((g, n))
    if arr.ndim != 2:
        raise InvalidMatrixError(f"quality matrix must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidMatrixError("quality matrix has non-finite entries")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise InvalidMatrixError("quality entries must lie in [0, 1]")
    return arr


def _hungarian_min(cost: np.ndarray):
    """Min-cost assignment of every row of ``cost`` (n <= m) to distinct columns.

    Returns ``(row_to_col, u, v)`` where ``u``/``v`` are optimal dual
    potentials with ``u[i] + v[j] <= cost[i, j]`` (equality on the matching)
    and ``v[j] == 0`` for unmatched columns.
    """
    n, m = cost.shape
    INF = np.inf
    u = np.zeros(n + 1)
    v = np.zeros(m + 1)
    # p[j]: row (1-based) matched to column j; column 0 is a virtual root
    p = np.zeros(m + 1, dtype=np.int64)
    way = np.zeros(m + 1, dtype=np.int64)
    a = np.zeros((n + 1, m + 1))
    a[1:, 1:] = cost
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(m + 1, INF)
        used = np.zeros(m + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            cur = a[i0] - u[i0] - v
            free = ~used
            better = free & (cur < minv)
            minv[better] = cur[better]
            way[better] = j0
            cand = np.where(free, minv, INF)
            j1 = int(np.argmin(cand))
            delta = cand[j1]
            u[p[used]] += delta
            v[used] -= delta
            minv[free] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    row_to_col = np.full(n, -1, dtype=np.int64)
    for j in range(1, m + 1):
        if p[j]:
            row_to_col[p[j] - 1] = j - 1
    return row_to_col, u[1:], v[1:]


def _feasible_completion(tight: np.ndarray, rows, cols, req_rows, req_cols):
    """Find a matching on tight edges inside ``rows x cols`` covering every
    required vertex, sized to exhaust the fully-required side.

    Returns ``{row: col}`` or ``None`` when no such matching exists. Solved as a
    small integer assignment problem, so the answer is exact.
    """
    rows = sorted(rows)
    cols = sorted(cols)
    if not rows or not cols:
        return {} if not (req_rows or req_cols) else None
    sub = tight[np.ix_(rows, cols)]
    col_major = len(req_cols) == len(cols) and len(cols) <= len(rows)
    if col_major:
        sub = sub.T
        a_side, b_side, b_req = cols, rows, req_rows
    else:
        a_side, b_side, b_req = rows, cols, req_cols
    if len(a_side) > len(b_side):
        return None
    bonus = np.array([1.0 if b in b_req else 0.0 for b in b_side])
    forbidden = float(len(b_side) + 2)
    cost = np.where(sub, -bonus[None, :], forbidden)
    a_to_b, _, _ = _hungarian_min(cost)
    picked = cost[np.arange(len(a_side)), a_to_b]
    if np.any(picked >= forbidden):
        return None
    if -picked.sum() < len(b_req) - 0.5:
        return None
    out = {}
    for ia, ib in enumerate(a_to_b):
        a, b = a_side[ia], b_side[ib]
        if col_major:
            out[b] = a
        else:
            out[a] = b
    return out


def _reroute(adj_r, cert: dict, g: int, p: int, rows_pool: set, cols_pool: set,
             req_cols: set):
    """Try to change a row-perfect certificate so that row ``g`` takes column ``p``.

    Every row in ``rows_pool`` stays matched and every required column stays
    covered. A valid alternative differs from ``cert`` by a single alternating
    component through ``g``: a chain displacing the old owner of ``p`` and, if
    ``g``'s old column is required, a chain re-covering it. The two chains
    cannot share vertices, so they are searched independently. Returns the
    new matching or ``None``.
    """
    b0 = cert[g]
    if p == b0:
        return dict(cert)
    owner = {c: r for r, c in cert.items() if r != g}
    new = dict(cert)
    new[g] = p

    def bfs(start_row, is_end):
        # alternating BFS: row -> tight column -> that column's owner
        parent = {}
        queue = [start_row]
        seen_rows = {start_row}
        for x in queue:
            for c in adj_r[x]:
                if c == p or c in parent or c not in cols_pool:
                    continue
                parent[c] = x
                if is_end(c):
                    return c, parent
                y = owner.get(c)
                if y is not None and y != g and y not in seen_rows:
                    seen_rows.add(y)
                    queue.append(y)
        return None, parent

    b0_covered = False
    r = owner.get(p)
    if r is not None:
        end, parent = bfs(r, lambda c: c == b0)
        if end is None:
            end = next((c for c in sorted(parent) if c not in owner and c != b0), None)
        if end is None:
            return None
        c = end
        while True:
            x = parent[c]
            prev = new.get(x)
            new[x] = c
            if x == r:
                break
            c = prev
        b0_covered = end == b0
    if b0_covered or b0 not in req_cols:
        return new
    # b0 chain: some row moves onto b0, vacating a column; repeat until the
    # vacated column is not required
    rows_on = {}
    for x in rows_pool:
        if x != g and new.get(x) == cert.get(x):
            for c in adj_r[x]:
                rows_on.setdefault(c, []).append(x)
    target = {}
    vacated_by = {}
    queue = [b0]
    for c in queue:
        for x in rows_on.get(c, ()):
            if x in target:
                continue
            target[x] = c
            v = new[x]
            if v not in req_cols:
                while True:
                    dest = target[x]
                    new[x] = dest
                    if dest == b0:
                        return new
                    x = vacated_by[dest]
            if v not in vacated_by and v != b0:
                vacated_by[v] = x
                queue.append(v)
    return None


def _lex_smallest(tight: np.ndarray, k: int, req_rows: set, req_cols: set, start: dict):
    """Lexicographically smallest size-k matching on tight edges covering required vertices.

    ``start`` is any valid such matching (row -> col); it doubles as a
    certificate so that only candidates beating it need a feasibility solve.
    """
    G, N = tight.shape
    adj_r = [np.flatnonzero(tight[i]).tolist() for i in range(G)]
    cert = dict(start)
    rows_left = set(range(G))
    cols_left = set(range(N))
    rows_all_required = len(req_rows) == G
    pairs = []
    last_g = -1
    for step in range(k):
        chosen = None
        for g in range(last_g + 1, G):
            limit = cert.get(g, N)
            for pcol in adj_r[g]:
                if pcol not in cols_left:
                    continue
                if pcol == limit:
                    chosen = (g, pcol)
                    break
                if pcol > limit:
                    break
                if rows_all_required:
                    sol = _reroute(adj_r, cert, g, pcol, rows_left, cols_left,
                                   req_cols & cols_left)
                else:
                    rp = {r for r in rows_left if r > g}
                    cp = cols_left - {pcol}
                    sol = _feasible_completion(tight, rp, cp, req_rows & rp, req_cols & cp)
                    if sol is not None:
                        sol[g] = pcol
                if sol is not None:
                    chosen = (g, pcol)
                    cert = sol
                    break
            # a row the certificate uses always yields a choice at `limit`;
            # a required row can never be skipped
            if chosen is not None or g in req_rows:
                break
        if chosen is None:
            raise RuntimeError("tie canonicalization failed")
        g, pcol = chosen
        pairs.append(chosen)
        rows_left = {r for r in rows_left if r > g}
        cols_left.discard(pcol)
        cert = {r: c for r, c in cert.items() if r in rows_left}
        last_g = g
    return pairs


def _finish(q: np.ndarray, pairs) -> Assignment:
    matched = {g for g, _ in pairs}
    return Assignment(
        pairs=[(int(g), int(p), float(q[g, p])) for g, p in sorted(pairs)],
        unmatched_gts=[g for g in range(q.shape[0]) if g not in matched],
    )


def solve(q) -> Assignment:
    """Maximum total-quality injective assignment of ground truths (rows) to predictions (columns)."""
    q = as_quality_matrix(q)
    G, N = q.shape
    if G == 0 or N == 0:
        return Assignment(pairs=[], unmatched_gts=list(range(G)))
    transposed = G > N
    work = q.T if transposed else q
    row_to_col, u, v = _hungarian_min(-work)
    # reduced cost of every edge; zero on tight edges
    reduced = -work - u[:, None] - v[None, :]
    tight = reduced <= TIGHT_TOL
    tight[np.arange(len(row_to_col)), row_to_col] = True
    req_work_cols = set(np.flatnonzero(v < -TIGHT_TOL).tolist())
    k = min(G, N)
    if transposed:
        # rows of `work` are predictions; all of them must be matched
        start = {int(g): p for p, g in enumerate(row_to_col)}
        pairs = _lex_smallest(tight.T, k, req_rows=req_work_cols,
                              req_cols=set(range(N)), start=start)
    else:
        start = {g: int(p) for g, p in enumerate(row_to_col)}
        pairs = _lex_smallest(tight, k, req_rows=set(range(G)),
                              req_cols=req_work_cols, start=start)
    return _finish(q, pairs)


def solve_bruteforce(q) -> Assignment:
    """Exhaustive oracle: enumerate every maximum-cardinality injection."""
    q = as_quality_matrix(q)
    G, N = q.shape
    if G > BRUTEFORCE_MAX_G or N > BRUTEFORCE_MAX_N:
        raise OracleTooLargeError(f"brute force limited to G<={BRUTEFORCE_MAX_G}, "
                                  f"N<={BRUTEFORCE_MAX_N}; got {G}x{N}")
    if G == 0 or N == 0:
        return Assignment(pairs=[], unmatched_gts=list(range(G)))
    k = min(G, N)
    candidates = []
    for gts in itertools.combinations(range(G), k):
        for preds in itertools.permutations(range(N), k):
            seq = tuple(zip(gts, preds))
            total = sum(q[g, p] for g, p in seq)
            candidates.append((total, seq))
    best = max(t for t, _ in candidates)
    seq = min(s for t, s in candidates if t >= best - TIE_TOL)
    return _finish(q, list(seq))
