"""
Parity-check matrix repository (alist text format)

    n m                     columns, rows
    max_col_deg max_row_deg
    column degrees (n values)
    row degrees (m values)
    n lines: 1-based row indices per column, zero padded
    m lines: 1-based column indices per row, zero padded
"""
import numpy as np
from scipy import sparse

from app.core.exceptions import RecordFormatError
from app.repositories.base import BaseRepository


def _format_line(values, width: int) -> str:
    padded = list(values) + [0] * (width - len(values))
    return " ".join(str(v) for v in padded)


class AlistRepository(BaseRepository[sparse.csr_matrix]):
    """Repository for sparse GF(2) parity-check matrices"""

    suffix = ".alist"

    def encode(self, record: sparse.csr_matrix) -> bytes:
        H = sparse.csr_matrix(record, dtype=np.uint8)
        H.eliminate_zeros()
        m, n = H.shape
        csc = H.tocsc()
        col_deg = np.diff(csc.indptr)
        row_deg = np.diff(H.indptr)
        max_col, max_row = int(col_deg.max(initial=0)), int(row_deg.max(initial=0))

        lines = [
            f"{n} {m}",
            f"{max_col} {max_row}",
            " ".join(map(str, col_deg.tolist())),
            " ".join(map(str, row_deg.tolist())),
        ]
        for c in range(n):
            rows = csc.indices[csc.indptr[c]:csc.indptr[c + 1]]
            lines.append(_format_line(np.sort(rows) + 1, max_col))
        for r in range(m):
            cols = H.indices[H.indptr[r]:H.indptr[r + 1]]
            lines.append(_format_line(np.sort(cols) + 1, max_row))
        return ("\n".join(lines) + "\n").encode("ascii")

    def decode(self, data: bytes) -> sparse.csr_matrix:
        tokens = data.decode("ascii").split()
        try:
            values = [int(t) for t in tokens]
        except ValueError as e:
            raise RecordFormatError(f"alist contains non-integer token: {e}")
        if len(values) < 4:
            raise RecordFormatError("alist header truncated")

        n, m, max_col, max_row = values[:4]
        pos = 4
        col_deg = values[pos:pos + n]
        pos += n
        row_deg = values[pos:pos + m]
        pos += m
        if len(col_deg) != n or len(row_deg) != m:
            raise RecordFormatError("alist degree lists truncated")

        rows, cols = [], []
        for c in range(n):
            entries = values[pos:pos + max_col]
            pos += max_col
            if len(entries) != max_col:
                raise RecordFormatError("alist column block truncated")
            nonzero = [e for e in entries if e != 0]
            if len(nonzero) != col_deg[c]:
                raise RecordFormatError("alist column degree mismatch", {"column": c})
            for r in nonzero:
                if not 1 <= r <= m:
                    raise RecordFormatError("alist row index out of range", {"column": c, "row": r})
                rows.append(r - 1)
                cols.append(c)

        H = sparse.csr_matrix(
            (np.ones(len(rows), dtype=np.uint8), (rows, cols)), shape=(m, n)
        )
        if not np.array_equal(np.diff(H.indptr), np.asarray(row_deg)):
            raise RecordFormatError("alist row degrees disagree with column lists")
        return H
