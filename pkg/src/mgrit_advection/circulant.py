"""Real circulant operators and their DFT diagonalisation.

A circulant matrix ``C`` of size ``n x n`` is stored by its first column ``c``;
entry ``(i, j)`` equals ``c[(i - j) % n]``.  All spectra use the unnormalised
forward transform ``sum_j c[j] exp(-2j*pi*k*j/n)``, i.e. :func:`numpy.fft.fft`,
and the inverse carries the ``1/n`` factor.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "CirculantOperator",
    "RationalStepper",
    "SpectralDiagonal",
    "SingularOperator",
    "ImaginaryResidue",
    "eigenvalues",
    "multiply",
    "power",
    "apply",
    "solve",
    "rational_first_column_power",
    "real_ifft",
    "export_dense",
]

#: Eigenvalue magnitude below which an operator is treated as singular.
SINGULAR_TOL = 1e-13
#: Largest tolerated imaginary part after an inverse transform.
IMAG_TOL = 1e-8
#: Operators with at most this many non-zeros are applied by direct
#: circular convolution; denser ones go through the FFT.
DIRECT_APPLY_NNZ = 12
#: ``power`` switches from repeated convolution to spectral powers above this.
DIRECT_POWER_MAX = 8
#: Dense export refuses anything larger.
MAX_DENSE = 4096


class SingularOperator(ArithmeticError):
    """Raised when a circulant with a (numerically) zero eigenvalue is inverted."""


class ImaginaryResidue(ValueError):
    """Raised when an inverse DFT leaves an imaginary part above ``IMAG_TOL``."""


def real_ifft(values, tol=IMAG_TOL):
    """Inverse DFT of a (conjugate-symmetric) spectrum, returning the real part.

    Returns
    -------
    column : ndarray
        Real part of ``ifft(values)``.
    residue : float
        ``max |imag|`` that was discarded.
    """
    col = np.fft.ifft(values, axis=-1)
    residue = float(np.max(np.abs(col.imag))) if col.size else 0.0
    if residue >= tol:
        raise ImaginaryResidue(f"imaginary residue {residue:.3e} exceeds {tol:.0e}")
    return np.ascontiguousarray(col.real), residue


@dataclass(frozen=True)
class SpectralDiagonal:
    """Eigenvalues of a circulant, indexed by Fourier frequency ``k``."""

    values: np.ndarray

    @property
    def n_x(self) -> int:
        return self.values.shape[0]

    @property
    def frequencies(self) -> np.ndarray:
        """``theta_k = 2*pi*k/n_x`` for ``k = 0..n_x-1``."""
        return 2.0 * np.pi * np.arange(self.n_x) / self.n_x

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)


class CirculantOperator:
    """Real ``n_x x n_x`` circulant matrix held by its first column.

    Instances are immutable; the spectrum is computed once at construction.

    Parameters
    ----------
    first_column : array_like
        Entry ``j`` is the matrix entry in row ``j``, column 0.
    """

    __slots__ = ("_col", "_spec", "_rspec", "_support")

    def __init__(self, first_column):
        col = np.array(first_column, dtype=float, copy=True)
        if col.ndim != 1 or col.shape[0] < 2:
            raise ValueError("first_column must be a 1-D array of length >= 2")
        col.setflags(write=False)
        self._col = col
        spec = np.fft.fft(col)
        spec.setflags(write=False)
        self._spec = spec
        self._rspec = np.fft.rfft(col)
        self._support = np.flatnonzero(col)

    # -- constructors ------------------------------------------------------
    @classmethod
    def identity(cls, n_x: int) -> "CirculantOperator":
        return cls.from_offsets({0: 1.0}, n_x)

    @classmethod
    def shift(cls, n_x: int, k: int = 1) -> "CirculantOperator":
        """Cyclic down-shift by ``k``: ``(S u)_i = u_{i-k}``."""
        return cls.from_offsets({k: 1.0}, n_x)

    @classmethod
    def from_offsets(cls, entries, n_x: int) -> "CirculantOperator":
        """Build from a mapping ``{column offset j: value}``; ``j`` taken mod ``n_x``.

        Offset ``j`` places ``value`` at ``first_column[j % n_x]``, so that
        ``(C u)_i`` picks up ``value * u_{i-j}``.
        """
        col = np.zeros(n_x)
        for j, v in dict(entries).items():
            col[int(j) % n_x] += v
        return cls(col)

    # -- attributes --------------------------------------------------------
    @property
    def first_column(self) -> np.ndarray:
        return self._col

    @property
    def n_x(self) -> int:
        return self._col.shape[0]

    @property
    def nnz(self) -> int:
        """Number of non-zeros per row."""
        return int(self._support.size)

    @property
    def support(self) -> np.ndarray:
        """Indices ``j`` with ``first_column[j] != 0``."""
        return self._support

    def signed_offsets(self) -> np.ndarray:
        """Support indices mapped to ``(-n_x/2, n_x/2]``."""
        j = self._support.copy()
        j[j > self.n_x // 2] -= self.n_x
        return np.sort(j)

    def eigenvalues(self) -> SpectralDiagonal:
        return SpectralDiagonal(self._spec)

    @property
    def spectrum(self) -> np.ndarray:
        return self._spec

    @property
    def half_spectrum(self) -> np.ndarray:
        """``rfft`` of the first column (frequencies ``0..n_x//2``)."""
        return self._rspec

    # -- actions -----------------------------------------------------------
    def apply(self, u):
        """Matrix-vector product along the last axis of ``u``."""
        u = np.asarray(u, dtype=float)
        if u.shape[-1] != self.n_x:
            raise ValueError(f"expected trailing dimension {self.n_x}, got {u.shape[-1]}")
        if self.nnz <= DIRECT_APPLY_NNZ:
            out = np.zeros_like(u)
            for j in self._support:
                out += self._col[j] * np.roll(u, j, axis=-1)
            return out
        return np.fft.irfft(np.fft.rfft(u, axis=-1) * self._rspec, n=self.n_x, axis=-1)

    def solve(self, b):
        """Solve ``C x = b`` along the last axis of ``b``."""
        b = np.asarray(b, dtype=float)
        if b.shape[-1] != self.n_x:
            raise ValueError(f"expected trailing dimension {self.n_x}, got {b.shape[-1]}")
        smallest = float(np.min(np.abs(self._spec)))
        if smallest <= SINGULAR_TOL:
            raise SingularOperator(f"eigenvalue of magnitude {smallest:.3e}")
        return np.fft.irfft(np.fft.rfft(b, axis=-1) / self._rspec, n=self.n_x, axis=-1)

    def to_dense(self) -> np.ndarray:
        if self.n_x > MAX_DENSE:
            raise ValueError(f"refusing to densify n_x={self.n_x} > {MAX_DENSE}")
        idx = (np.arange(self.n_x)[:, None] - np.arange(self.n_x)[None, :]) % self.n_x
        return self._col[idx]

    # -- arithmetic --------------------------------------------------------
    def __add__(self, other):
        if isinstance(other, CirculantOperator):
            _check_size(self, other)
            return CirculantOperator(self._col + other._col)
        return NotImplemented

    def __sub__(self, other):
        if isinstance(other, CirculantOperator):
            _check_size(self, other)
            return CirculantOperator(self._col - other._col)
        return NotImplemented

    def __mul__(self, scalar):
        if np.isscalar(scalar):
            return CirculantOperator(float(scalar) * self._col)
        return NotImplemented

    __rmul__ = __mul__

    def __matmul__(self, other):
        if isinstance(other, CirculantOperator):
            return multiply(self, other)
        return self.apply(other)

    def __eq__(self, other):
        if not isinstance(other, CirculantOperator):
            return NotImplemented
        return self.n_x == other.n_x and np.array_equal(self._col, other._col)

    __hash__ = None

    def __repr__(self):
        return f"CirculantOperator(n_x={self.n_x}, nnz={self.nnz})"


@dataclass(frozen=True)
class RationalStepper:
    """Implicit stepper ``P Q^{-1}`` with circulant numerator and denominator."""

    numerator: CirculantOperator
    denominator: CirculantOperator
    _ratio: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        _check_size(self.numerator, self.denominator)
        q = self.denominator.spectrum
        smallest = float(np.min(np.abs(q)))
        if smallest <= SINGULAR_TOL:
            raise SingularOperator(f"denominator eigenvalue of magnitude {smallest:.3e}")
        object.__setattr__(
            self, "_ratio", self.numerator.half_spectrum / self.denominator.half_spectrum
        )

    @property
    def n_x(self) -> int:
        return self.numerator.n_x

    @property
    def nnz(self) -> int:
        """Non-zeros of numerator plus denominator (cost proxy for one step)."""
        return self.numerator.nnz + self.denominator.nnz

    @property
    def spectrum(self) -> np.ndarray:
        return self.numerator.spectrum / self.denominator.spectrum

    def eigenvalues(self) -> SpectralDiagonal:
        return SpectralDiagonal(self.spectrum)

    def apply(self, u):
        """One implicit step: numerator product followed by denominator solve."""
        u = np.asarray(u, dtype=float)
        if u.shape[-1] != self.n_x:
            raise ValueError(f"expected trailing dimension {self.n_x}, got {u.shape[-1]}")
        return np.fft.irfft(np.fft.rfft(u, axis=-1) * self._ratio, n=self.n_x, axis=-1)

    def first_column_power(self, m: int = 1):
        return rational_first_column_power(self, m)

    def to_dense(self) -> np.ndarray:
        col, _ = rational_first_column_power(self, 1)
        return CirculantOperator(col).to_dense()


def _check_size(a, b):
    if a.n_x != b.n_x:
        raise ValueError(f"dimension mismatch: {a.n_x} vs {b.n_x}")


def eigenvalues(op: CirculantOperator) -> SpectralDiagonal:
    """Spectrum of ``op`` under the fixed forward-DFT convention."""
    return op.eigenvalues()


def multiply(a: CirculantOperator, b: CirculantOperator) -> CirculantOperator:
    """Product ``a @ b``; circular convolution of the first columns.

    Sparse factors are convolved directly so that structural zeros stay
    exactly zero.
    """
    _check_size(a, b)
    n = a.n_x
    if a.nnz * b.nnz <= 4 * n:
        col = np.zeros(n)
        for j in a.support:
            col += a.first_column[j] * np.roll(b.first_column, j)
        return CirculantOperator(col)
    col, _ = real_ifft(a.spectrum * b.spectrum)
    return CirculantOperator(col)


def power(op: CirculantOperator, m: int) -> CirculantOperator:
    """``op**m`` for ``m >= 1``.

    Small powers use repeated squaring with direct convolution; larger ones
    raise the spectrum to the ``m``-th power and transform back.
    """
    m = int(m)
    if m < 1:
        raise ValueError("m must be >= 1")
    if m <= DIRECT_POWER_MAX:
        result = None
        base = op
        while m:
            if m & 1:
                result = base if result is None else multiply(result, base)
            m >>= 1
            if m:
                base = multiply(base, base)
        return result
    col, _ = real_ifft(op.spectrum ** m)
    return CirculantOperator(col)


def apply(op, u):
    """``op @ u`` for a circulant or rational stepper."""
    return op.apply(u)


def solve(op: CirculantOperator, b):
    """Solve ``op @ x = b``; raises :class:`SingularOperator` if needed."""
    return op.solve(b)


def rational_first_column_power(stepper: RationalStepper, m: int):
    """Dense first column of ``(P Q^{-1})^m`` computed in spectral space.

    Returns
    -------
    column : ndarray
    imag_residue : float
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    return real_ifft(stepper.spectrum ** int(m))


def export_dense(op, path, enabled: bool = True):
    """Write ``op`` as a dense row-major CSV matrix (debugging aid)."""
    if not enabled:
        raise RuntimeError("dense export is disabled")
    dense = op.to_dense()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in dense:
            writer.writerow([repr(float(v)) for v in row])
    return path
