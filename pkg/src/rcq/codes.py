"""Parity-check matrices: QC base matrices, circulant expansion, alist I/O.

A QC base matrix is an ``M x U`` grid whose entries are either ``-1`` (all-zero
block) or a shift ``0 <= i < S`` (identity cyclically shifted by ``i``).  Row
block ``r`` of the expanded matrix is layer ``r`` of a layered decoder.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

logger = logging.getLogger(__name__)

EMPTY = -1

BUILTIN_CODES = {
    "ieee80211n_1296_r12": "ieee80211n_1296_r12.qc",
}


class CodeFormatError(ValueError):
    """Malformed matrix text; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class QcBaseMatrix:
    entries: np.ndarray  # (M, U) int, -1 for an empty block
    circulant_size: int

    def __post_init__(self):
        e = np.array(self.entries, dtype=np.int64)
        if e.ndim != 2 or e.shape[0] < 1 or e.shape[1] < 1:
            raise ValueError(f"base matrix must be a non-empty 2-D grid, got shape {e.shape}")
        if self.circulant_size < 1:
            raise ValueError("circulant size must be >= 1")
        bad = (e != EMPTY) & ((e < 0) | (e >= self.circulant_size))
        if bad.any():
            r, c = np.argwhere(bad)[0]
            raise ValueError(
                f"shift {e[r, c]} at ({r}, {c}) outside [0, {self.circulant_size})"
            )
        e.setflags(write=False)
        object.__setattr__(self, "entries", e)

    @property
    def rows(self) -> int:
        return self.entries.shape[0]

    @property
    def cols(self) -> int:
        return self.entries.shape[1]

    @property
    def mask(self) -> np.ndarray:
        return self.entries != EMPTY

    @property
    def design_rate(self) -> float:
        return 1.0 - self.rows / self.cols

    def active_rows(self, c: int) -> list[int]:
        """Layers with a circulant in column ``c``."""
        return [int(r) for r in np.flatnonzero(self.mask[:, c])]

    def active_cols(self, r: int) -> list[int]:
        """Columns with a circulant in layer ``r``."""
        return [int(c) for c in np.flatnonzero(self.mask[r])]

    def to_text(self) -> str:
        lines = [f"{self.rows} {self.cols} {self.circulant_size}"]
        lines += [" ".join(str(int(v)) for v in row) for row in self.entries]
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class LayerPartition:
    layer_of_row: np.ndarray
    layer_size: int

    @property
    def n_layers(self) -> int:
        return len(self.layer_of_row) // self.layer_size

    def rows_of_layer(self, r: int) -> range:
        return range(r * self.layer_size, (r + 1) * self.layer_size)


@dataclass(frozen=True)
class SparseParityCheck:
    n: int
    m: int
    row_adjacency: tuple[tuple[int, ...], ...]
    col_adjacency: tuple[tuple[int, ...], ...]
    layers: LayerPartition | None = field(default=None, compare=False)

    def __post_init__(self):
        if len(self.row_adjacency) != self.m or len(self.col_adjacency) != self.n:
            raise ValueError("adjacency list lengths disagree with (m, n)")
        edges_r = set()
        for i, row in enumerate(self.row_adjacency):
            if len(set(row)) != len(row):
                raise ValueError(f"duplicate column in row {i}")
            for j in row:
                if not 0 <= j < self.n:
                    raise ValueError(f"column index {j} out of range in row {i}")
                edges_r.add((i, j))
        edges_c = {(i, j) for j, col in enumerate(self.col_adjacency) for i in col}
        if edges_r != edges_c:
            raise ValueError("row and column adjacency are inconsistent")
        if self.layers is not None:
            self._check_layers()

    def _check_layers(self):
        lay = self.layers.layer_of_row
        for j, col in enumerate(self.col_adjacency):
            seen = [lay[i] for i in col]
            if len(set(seen)) != len(seen):
                raise ValueError(f"column {j} has two neighbours in one layer")

    @classmethod
    def from_dense(cls, H, layers: LayerPartition | None = None) -> "SparseParityCheck":
        H = np.asarray(H)
        m, n = H.shape
        rows = tuple(tuple(int(j) for j in np.flatnonzero(H[i])) for i in range(m))
        cols = tuple(tuple(int(i) for i in np.flatnonzero(H[:, j])) for j in range(n))
        return cls(n=n, m=m, row_adjacency=rows, col_adjacency=cols, layers=layers)

    @property
    def n_edges(self) -> int:
        return sum(len(r) for r in self.row_adjacency)

    def to_dense(self) -> np.ndarray:
        H = np.zeros((self.m, self.n), dtype=np.uint8)
        for i, row in enumerate(self.row_adjacency):
            H[i, list(row)] = 1
        return H

    def col_degrees(self) -> np.ndarray:
        return np.array([len(c) for c in self.col_adjacency])

    def row_degrees(self) -> np.ndarray:
        return np.array([len(r) for r in self.row_adjacency])

    def syndrome(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.uint8)
        return np.array([int(x[list(r)].sum() & 1) for r in self.row_adjacency], dtype=np.uint8)

    def edge_arrays(self):
        """Row-major edge list: (row_ptr, edge_col, col_ptr, col_edges).

        ``col_edges[col_ptr[j]:col_ptr[j+1]]`` are the edge ids incident to column ``j``.
        """
        row_ptr = np.zeros(self.m + 1, dtype=np.int64)
        row_ptr[1:] = np.cumsum([len(r) for r in self.row_adjacency])
        edge_col = np.fromiter(
            (j for r in self.row_adjacency for j in r), dtype=np.int64, count=row_ptr[-1]
        )
        order = np.argsort(edge_col, kind="stable")
        col_ptr = np.zeros(self.n + 1, dtype=np.int64)
        col_ptr[1:] = np.cumsum(np.bincount(edge_col, minlength=self.n))
        return row_ptr, edge_col, col_ptr, order.astype(np.int64)


# ---------------------------------------------------------------------------
# text formats


def _int_tokens(line: str, lineno: int) -> list[int]:
    try:
        return [int(t) for t in line.split()]
    except ValueError as exc:
        raise CodeFormatError(f"non-integer token ({exc})", lineno) from None


def parse_alist(text: str) -> SparseParityCheck:
    """Parse the MacKay alist format (1-based indices, zero padding allowed)."""
    lines = [(i + 1, ln) for i, ln in enumerate(text.splitlines()) if ln.strip()]
    it = iter(lines)

    def nxt(what):
        try:
            lineno, ln = next(it)
        except StopIteration:
            raise CodeFormatError(f"unexpected end of input while reading {what}") from None
        return lineno, _int_tokens(ln, lineno)

    lineno, hdr = nxt("header")
    if len(hdr) != 2 or min(hdr) < 1:
        raise CodeFormatError("expected 'n m' header", lineno)
    n, m = hdr
    lineno, maxdeg = nxt("max degrees")
    if len(maxdeg) != 2:
        raise CodeFormatError("expected 'max_col_degree max_row_degree'", lineno)
    max_cd, max_rd = maxdeg
    lineno, cdeg = nxt("column degrees")
    if len(cdeg) != n:
        raise CodeFormatError(f"expected {n} column degrees, got {len(cdeg)}", lineno)
    lineno_r, rdeg = nxt("row degrees")
    if len(rdeg) != m:
        raise CodeFormatError(f"expected {m} row degrees, got {len(rdeg)}", lineno_r)
    if max(cdeg) > max_cd:
        raise CodeFormatError(f"column degree {max(cdeg)} exceeds declared max {max_cd}", lineno)
    if max(rdeg) > max_rd:
        raise CodeFormatError(f"row degree {max(rdeg)} exceeds declared max {max_rd}", lineno_r)

    def read_lists(count, degs, bound, maxd, what):
        out = []
        for k in range(count):
            lineno, vals = nxt(what)
            nz = [v for v in vals if v != 0]
            if len(vals) > maxd or len(nz) != degs[k]:
                raise CodeFormatError(
                    f"{what} {k}: declared degree {degs[k]} (max {maxd}) but lists {len(nz)} "
                    f"entries in {len(vals)} slots",
                    lineno,
                )
            for v in nz:
                if not 1 <= v <= bound:
                    raise CodeFormatError(f"index {v} out of range 1..{bound}", lineno)
            out.append((lineno, tuple(sorted(v - 1 for v in nz))))
        return out

    cols = read_lists(n, cdeg, m, max_cd, "column")
    rows = read_lists(m, rdeg, n, max_rd, "row")
    try:
        return SparseParityCheck(
            n=n, m=m,
            row_adjacency=tuple(r for _, r in rows),
            col_adjacency=tuple(c for _, c in cols),
        )
    except ValueError as exc:
        raise CodeFormatError(str(exc), rows[-1][0] if rows else None) from None


def serialize_alist(H: SparseParityCheck) -> str:
    cd, rd = H.col_degrees(), H.row_degrees()
    max_cd, max_rd = int(cd.max()), int(rd.max())
    out = [f"{H.n} {H.m}", f"{max_cd} {max_rd}",
           " ".join(map(str, cd)), " ".join(map(str, rd))]
    for col in H.col_adjacency:
        vals = [i + 1 for i in col] + [0] * (max_cd - len(col))
        out.append(" ".join(map(str, vals)))
    for row in H.row_adjacency:
        vals = [j + 1 for j in row] + [0] * (max_rd - len(row))
        out.append(" ".join(map(str, vals)))
    return "\n".join(out) + "\n"


def parse_base_matrix(text: str) -> QcBaseMatrix:
    """First line ``M U S``, then M rows of U integers (-1 = empty block)."""
    lines = [(i + 1, ln) for i, ln in enumerate(text.splitlines()) if ln.strip()]
    if not lines:
        raise CodeFormatError("empty base matrix text")
    lineno, hdr = lines[0][0], _int_tokens(lines[0][1], lines[0][0])
    if len(hdr) != 3:
        raise CodeFormatError("expected 'M U S' header", lineno)
    M, U, S = hdr
    if M < 1 or U < 1 or S < 1:
        raise CodeFormatError("M, U, S must all be >= 1", lineno)
    body = lines[1:]
    if len(body) != M:
        raise CodeFormatError(f"expected {M} rows, found {len(body)}", body[-1][0] if body else lineno)
    grid = []
    for lineno, ln in body:
        vals = _int_tokens(ln, lineno)
        if len(vals) != U:
            raise CodeFormatError(f"ragged row: expected {U} entries, got {len(vals)}", lineno)
        for v in vals:
            if v < EMPTY or v >= S:
                raise CodeFormatError(f"shift {v} outside [-1, {S})", lineno)
        grid.append(vals)
    return QcBaseMatrix(np.array(grid, dtype=np.int64), S)


def load_base_matrix(path_or_name: str) -> QcBaseMatrix:
    """Read a base matrix from a file path or a bundled name (``builtin:<name>``)."""
    name = path_or_name.removeprefix("builtin:")
    if name in BUILTIN_CODES:
        text = resources.files("rcq.data").joinpath(BUILTIN_CODES[name]).read_text()
    else:
        with open(path_or_name) as fh:
            text = fh.read()
    return parse_base_matrix(text)


def ieee80211n_1296() -> QcBaseMatrix:
    """IEEE 802.11n rate-1/2 code, n = 1296, circulant size 54."""
    return load_base_matrix("builtin:ieee80211n_1296_r12")


# ---------------------------------------------------------------------------
# expansion and generation


def expand(base: QcBaseMatrix) -> SparseParityCheck:
    S = base.circulant_size
    M, U = base.entries.shape
    rows: list[list[int]] = [[] for _ in range(M * S)]
    for r in range(M):
        for c in range(U):
            i = int(base.entries[r, c])
            if i == EMPTY:
                continue
            for k in range(S):
                rows[r * S + k].append(c * S + (k + i) % S)
    cols: list[list[int]] = [[] for _ in range(U * S)]
    for ri, row in enumerate(rows):
        row.sort()
        for j in row:
            cols[j].append(ri)
    layers = LayerPartition(np.repeat(np.arange(M), S), S)
    return SparseParityCheck(
        n=U * S, m=M * S,
        row_adjacency=tuple(tuple(r) for r in rows),
        col_adjacency=tuple(tuple(c) for c in cols),
        layers=layers,
    )


def single_layer_partition(H: SparseParityCheck) -> SparseParityCheck:
    """Attach a one-row-per-layer partition (the trivially valid layering)."""
    return SparseParityCheck(H.n, H.m, H.row_adjacency, H.col_adjacency,
                             LayerPartition(np.arange(H.m), 1))


def count_four_cycles(base: QcBaseMatrix) -> int:
    """Number of (r1<r2, c1<c2) circulant quadruples that close a length-4 cycle."""
    e, S = base.entries, base.circulant_size
    M, U = e.shape
    count = 0
    for r1 in range(M):
        for r2 in range(r1 + 1, M):
            both = np.flatnonzero((e[r1] != EMPTY) & (e[r2] != EMPTY))
            if len(both) < 2:
                continue
            d = (e[r1, both] - e[r2, both]) % S
            _, counts = np.unique(d, return_counts=True)
            count += int((counts * (counts - 1) // 2).sum())
    return count


def make_quasi_regular_qc(M: int, U: int, S: int, vn_degree: int, seed: int,
                          girth_passes: int = 200) -> QcBaseMatrix:
    """Random base matrix with fixed column weight and near-uniform row weights.

    Shifts are redrawn for ``girth_passes`` sweeps to remove length-4 cycles where
    possible; the residual count is logged, not enforced.
    """
    if vn_degree < 1 or vn_degree > M:
        raise ValueError(f"vn_degree={vn_degree} infeasible with M={M} layers")
    rng = np.random.default_rng(seed)
    entries = np.full((M, U), EMPTY, dtype=np.int64)
    row_w = np.zeros(M, dtype=np.int64)
    for c in range(U):
        # lightest rows first, random tie-break
        order = np.lexsort((rng.random(M), row_w))
        chosen = order[:vn_degree]
        row_w[chosen] += 1
        entries[chosen, c] = rng.integers(0, S, size=vn_degree)
    base = QcBaseMatrix(entries, S)
    best = count_four_cycles(base)
    for _ in range(girth_passes):
        if best == 0:
            break
        r, c = np.argwhere(entries != EMPTY)[rng.integers(0, (entries != EMPTY).sum())]
        old = entries[r, c]
        entries[r, c] = rng.integers(0, S)
        cand = count_four_cycles(QcBaseMatrix(entries, S))
        if cand <= best:
            best = cand
        else:
            entries[r, c] = old
    if best:
        logger.info("make_quasi_regular_qc: %d length-4 cycles remain", best)
    return QcBaseMatrix(entries, S)


def degree_profile(base: QcBaseMatrix) -> tuple[dict[int, int], dict[int, int]]:
    """Edge counts per VN degree and per CN degree (block-level)."""
    vdeg = base.mask.sum(axis=0)
    cdeg = base.mask.sum(axis=1)
    lam: dict[int, int] = {}
    rho: dict[int, int] = {}
    for d in vdeg:
        lam[int(d)] = lam.get(int(d), 0) + int(d)
    for d in cdeg:
        rho[int(d)] = rho.get(int(d), 0) + int(d)
    return lam, rho


def gf2_nullspace(H: np.ndarray) -> np.ndarray:
    """Basis of the binary null space of ``H`` (rows are codewords)."""
    A = (np.asarray(H) & 1).astype(np.uint8).copy()
    m, n = A.shape
    pivots: list[int] = []
    row = 0
    for col in range(n):
        if row >= m:
            break
        hits = np.flatnonzero(A[row:, col]) + row
        if len(hits) == 0:
            continue
        p = hits[0]
        if p != row:
            A[[row, p]] = A[[p, row]]
        others = np.flatnonzero(A[:, col])
        others = others[others != row]
        A[others] ^= A[row]
        pivots.append(col)
        row += 1
    free = [c for c in range(n) if c not in set(pivots)]
    basis = np.zeros((len(free), n), dtype=np.uint8)
    for k, f in enumerate(free):
        basis[k, f] = 1
        for i, p in enumerate(pivots):
            basis[k, p] = A[i, f]
    return basis

