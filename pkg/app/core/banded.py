"""
Banded matrix utilities
Pentadiagonal storage in LAPACK/solve_banded layout and a residual-certified banded LU
"""
import logging
from typing import Optional

import numpy as np
from scipy import sparse
from scipy.linalg.lapack import get_lapack_funcs

from app.core.exceptions import NearResonanceError

logger = logging.getLogger(__name__)

# Two bands on each side of the diagonal; the radial schemes only fill one of them.
BAND_HALF_WIDTH = 2
BAND_OFFSETS = (2, 1, 0, -1, -2)


def empty_bands(size: int, dtype=float) -> np.ndarray:
    """Zero (5, size) band array"""
    return np.zeros((2 * BAND_HALF_WIDTH + 1, size), dtype=dtype)


def bands_from_diagonals(
    main: np.ndarray,
    lower: Optional[np.ndarray] = None,
    upper: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    Pack a tridiagonal matrix into pentadiagonal band storage

    The storage follows scipy.linalg.solve_banded with l = u = 2, i.e.
    ``ab[2 + i - j, j] == A[i, j]``.

    Args:
        main: Diagonal, length n
        lower: Sub-diagonal A[j+1, j], length n-1
        upper: Super-diagonal A[j, j+1], length n-1

    Returns:
        np.ndarray: Band array of shape (5, n)
    """
    main = np.asarray(main)
    dtype = np.result_type(main, *(x for x in (lower, upper) if x is not None))
    bands = empty_bands(main.size, dtype=dtype)
    bands[2] = main
    if upper is not None:
        bands[1, 1:] = upper
    if lower is not None:
        bands[3, :-1] = lower
    return bands


def bands_to_sparse(bands: np.ndarray) -> sparse.csr_matrix:
    """Band storage to CSR (same layout as scipy.sparse.dia_matrix)"""
    size = bands.shape[1]
    return sparse.dia_matrix((bands, BAND_OFFSETS), shape=(size, size)).tocsr()


def sparse_to_bands(matrix) -> np.ndarray:
    """
    Sparse matrix to band storage

    Raises:
        ValueError: If the matrix has entries outside the pentadiagonal band
    """
    dia = sparse.dia_matrix(matrix)
    size = dia.shape[0]
    bands = empty_bands(size, dtype=np.result_type(dia.dtype, float))
    for offset, row in zip(dia.offsets, dia.data):
        if abs(offset) > BAND_HALF_WIDTH:
            if np.any(row != 0):
                raise ValueError(f"entries on diagonal {offset} exceed the band width")
            continue
        values = np.array(row, dtype=bands.dtype)
        # dia rows carry padding outside the matrix
        if offset > 0:
            values[:offset] = 0
        elif offset < 0:
            values[size + offset:] = 0
        bands[BAND_HALF_WIDTH - offset] += values
    return bands


def banded_matvec(bands: np.ndarray, x: np.ndarray) -> np.ndarray:
    """y = A x for band storage, without forming the sparse matrix"""
    size = bands.shape[1]
    y = bands[2] * x
    for k in range(1, BAND_HALF_WIDTH + 1):
        # upper: A[j, j+k] = bands[2-k, j+k]
        y[: size - k] = y[: size - k] + bands[2 - k, k:] * x[k:]
        # lower: A[j+k, j] = bands[2+k, j]
        y[k:] = y[k:] + bands[2 + k, : size - k] * x[: size - k]
    return y


def banded_transpose(bands: np.ndarray) -> np.ndarray:
    """Band storage of A^T"""
    size = bands.shape[1]
    out = np.zeros_like(bands)
    out[2] = bands[2]
    for k in range(1, BAND_HALF_WIDTH + 1):
        # (A^T)[j, j+k] = A[j+k, j]
        out[2 - k, k:] = bands[2 + k, : size - k]
        out[2 + k, : size - k] = bands[2 - k, k:]
    return out


class BandedLU:
    """
    LU factorization with partial pivoting inside the band (LAPACK gbtrf/gbtrs)

    Solves are re-entrant; the factors are never modified after construction.
    """

    def __init__(self, bands: np.ndarray, label: str = "operator"):
        self.label = label
        self.size = bands.shape[1]
        kl = ku = BAND_HALF_WIDTH
        # gbtrf wants kl extra rows on top for fill-in
        ab = np.vstack([np.zeros((kl, self.size), dtype=bands.dtype), bands])
        self._gbtrf, self._gbtrs = get_lapack_funcs(("gbtrf", "gbtrs"), (ab,))
        self.dtype = ab.dtype
        lu, piv, info = self._gbtrf(ab, kl, ku)
        if info > 0:
            raise NearResonanceError(
                f"singular pivot while factoring {label}: the truncated problem is "
                "numerically resonant; enlarge Im z or r_max",
                context={"pivot": int(info)},
            )
        if info < 0:
            raise ValueError(f"illegal argument {-info} passed to gbtrf")
        self._lu = lu
        self._piv = piv

    def solve(self, rhs: np.ndarray, trans: int = 0) -> np.ndarray:
        """
        Solve A x = rhs (trans=0), A^T x = rhs (1) or A^H x = rhs (2)

        Args:
            rhs: Right-hand side vector
            trans: LAPACK transpose flag

        Returns:
            np.ndarray: Solution vector
        """
        b = np.asarray(rhs, dtype=np.result_type(self.dtype, rhs)).reshape(self.size, 1)
        if b.dtype != self.dtype:
            # real factors, complex data: solve real and imaginary parts separately
            return self.solve(b.real.ravel(), trans) + 1j * self.solve(b.imag.ravel(), trans)
        x, info = self._gbtrs(self._lu, BAND_HALF_WIDTH, BAND_HALF_WIDTH, b, self._piv, trans=trans)
        if info != 0:
            raise ValueError(f"illegal argument {-info} passed to gbtrs")
        return x.ravel()
