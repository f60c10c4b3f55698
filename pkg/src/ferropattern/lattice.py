"""Periodic lattices for rolls, rectangles and hexagons.

Fields are stored as Fourier coefficient arrays indexed by the integer
coordinates ``(m, n)`` of a wavevector ``k = m*k1 + n*k2`` in the dual basis.
Rolls are genuinely one-dimensional (only ``m``); rectangles and hexagons use a
``(2N+1, 2N+1)`` block with the origin at the centre.  For hexagons the
retained modes form the hexagonal shell ``max(|m|, |n|, |m+n|) <= N`` so that
the truncation is closed under rotation through pi/3.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "PatternKind",
    "WaveVector",
    "Lattice",
    "make_lattice",
    "dual_vectors_of_length",
    "rotate_coeffs",
    "symmetrize_coeffs",
]

SQRT3 = np.sqrt(3.0)


class PatternKind(enum.Enum):
    ROLLS = "rolls"
    RECTANGLES = "rectangles"
    HEXAGONS = "hexagons"

    @property
    def rotation_order(self) -> int:
        """Order of the cyclic rotation group leaving the pattern invariant."""
        return {"rolls": 2, "rectangles": 4, "hexagons": 6}[self.value]

    @property
    def rotation_angle(self) -> float:
        return 2 * np.pi / self.rotation_order

    @classmethod
    def parse(cls, value) -> "PatternKind":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        aliases = {"roll": "rolls", "rect": "rectangles", "rectangle": "rectangles",
                   "squares": "rectangles", "hex": "hexagons", "hexagon": "hexagons"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown pattern {value!r}") from None


@dataclass(frozen=True)
class WaveVector:
    m: int
    n: int
    cartesian: tuple[float, float]

    @property
    def length(self) -> float:
        return float(np.hypot(*self.cartesian))


@dataclass(frozen=True, eq=False)
class Lattice:
    """Lattice, dual lattice and truncation for one pattern.

    Attributes
    ----------
    pattern : PatternKind
    omega : float
        Fundamental wavenumber; ``|k1| = omega``.
    l1, l2 : ndarray, shape (2,)
        Lattice generators (``l2`` is ``(0, 0)`` for rolls).
    k1, k2 : ndarray, shape (2,)
        Dual generators with ``k_i . l_j = 2 pi delta_ij``.
    cell_constant : float
        Normalisation constant C(Gamma) of the Sobolev norms (the base-cell
        length or area).
    truncation : int
        Largest retained index N.
    """

    pattern: PatternKind
    omega: float
    l1: np.ndarray
    l2: np.ndarray
    k1: np.ndarray
    k2: np.ndarray
    cell_constant: float
    truncation: int

    @property
    def ndim(self) -> int:
        return 1 if self.pattern is PatternKind.ROLLS else 2

    @property
    def shape(self) -> tuple[int, ...]:
        size = 2 * self.truncation + 1
        return (size,) * self.ndim

    @cached_property
    def index_grids(self) -> tuple[np.ndarray, np.ndarray]:
        """Integer arrays ``(m, n)`` matching the coefficient layout."""
        r = np.arange(-self.truncation, self.truncation + 1)
        if self.ndim == 1:
            return r, np.zeros_like(r)
        m, n = np.meshgrid(r, r, indexing="ij")
        return m, n

    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, np.ndarray]:
        """Cartesian components ``(kx, kz)`` of every stored mode."""
        m, n = self.index_grids
        kx = m * self.k1[0] + n * self.k2[0]
        kz = m * self.k1[1] + n * self.k2[1]
        return kx, kz

    @cached_property
    def kmag(self) -> np.ndarray:
        return np.hypot(*self.wavenumbers)

    @cached_property
    def mask(self) -> np.ndarray:
        m, n = self.index_grids
        if self.pattern is PatternKind.HEXAGONS:
            return np.maximum(np.maximum(abs(m), abs(n)), abs(m + n)) <= self.truncation
        return np.ones(self.shape, dtype=bool)

    @property
    def origin(self) -> tuple[int, ...]:
        return (self.truncation,) * self.ndim

    def index(self, m: int, n: int = 0) -> tuple[int, ...]:
        """Array index of the mode ``(m, n)``."""
        N = self.truncation
        if self.ndim == 1:
            if n != 0:
                raise IndexError("rolls have no second dual direction")
            return (m + N,)
        return (m + N, n + N)

    def contains(self, m: int, n: int = 0) -> bool:
        N = self.truncation
        if self.ndim == 1:
            return n == 0 and abs(m) <= N
        if abs(m) > N or abs(n) > N:
            return False
        return bool(self.mask[m + N, n + N])

    @property
    def grid_size(self) -> int:
        """Physical grid points per direction for dealiased quadratic products."""
        size = 3 * self.truncation + 1
        return size + (size % 2)

    def physical_points(self, size: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Cartesian coordinates of the uniform grid over the base cell.

        The grid is uniform in the lattice coordinates, ``x = (a l1 + b l2)/M``.
        """
        M = self.grid_size if size is None else size
        a = np.arange(M) / M
        if self.ndim == 1:
            return a * self.l1[0], np.zeros(M)
        A, B = np.meshgrid(a, a, indexing="ij")
        x = A * self.l1[0] + B * self.l2[0]
        z = A * self.l1[1] + B * self.l2[1]
        return x, z

    def wavevector(self, m: int, n: int = 0) -> WaveVector:
        k = m * self.k1 + n * self.k2
        return WaveVector(int(m), int(n), (float(k[0]), float(k[1])))

    def with_truncation(self, truncation: int) -> "Lattice":
        return make_lattice(self.pattern, self.omega, truncation)

    def same_as(self, other: "Lattice") -> bool:
        return (self.pattern is other.pattern and self.truncation == other.truncation
                and np.isclose(self.omega, other.omega, rtol=1e-14, atol=0.0))

    def __repr__(self) -> str:
        return (f"Lattice({self.pattern.value}, omega={self.omega:.6g}, "
                f"N={self.truncation})")


def make_lattice(pattern, omega: float, truncation: int = 8) -> Lattice:
    """Build the lattice of the given pattern with fundamental wavenumber omega."""
    pattern = PatternKind.parse(pattern)
    if not omega > 0:
        raise ValueError(f"omega must be positive, got {omega}")
    if int(truncation) != truncation or truncation < 1:
        raise ValueError(f"truncation must be a positive integer, got {truncation}")
    truncation = int(truncation)
    omega = float(omega)
    L = 2 * np.pi / omega
    if pattern is PatternKind.ROLLS:
        l1, l2 = np.array([L, 0.0]), np.zeros(2)
        k1, k2 = np.array([omega, 0.0]), np.zeros(2)
        cell = L
    elif pattern is PatternKind.RECTANGLES:
        l1, l2 = np.array([L, 0.0]), np.array([0.0, L])
        k1, k2 = np.array([omega, 0.0]), np.array([0.0, omega])
        cell = 4 * (np.pi / omega) ** 2
    else:
        l1 = L * np.array([1.0, -1.0 / SQRT3])
        l2 = L * np.array([0.0, 2.0 / SQRT3])
        k1 = np.array([omega, 0.0])
        k2 = omega * np.array([0.5, SQRT3 / 2])
        cell = 8 / SQRT3 * (np.pi / omega) ** 2
    return Lattice(pattern, omega, l1, l2, k1, k2, cell, truncation)


def dual_vectors_of_length(lat: Lattice, rho: float, tol: float | None = None) -> list[WaveVector]:
    """All retained dual-lattice vectors with ``||k| - rho| <= tol``.

    The default tolerance is ``1e-9 * omega``.
    """
    if not rho > 0:
        raise ValueError("rho must be positive")
    if tol is None:
        tol = 1e-9 * lat.omega
    found = np.argwhere(lat.mask & (abs(lat.kmag - rho) <= tol))
    m, n = lat.index_grids
    out = [lat.wavevector(m[tuple(i)], n[tuple(i)]) for i in found]
    return sorted(out, key=lambda w: (np.arctan2(w.cartesian[1], w.cartesian[0]), w.m, w.n))


def _rotated_indices(lat: Lattice) -> tuple[np.ndarray, np.ndarray]:
    """Image ``(m', n')`` of every mode under one generating rotation."""
    m, n = lat.index_grids
    if lat.pattern is PatternKind.ROLLS:
        return -m, n
    if lat.pattern is PatternKind.RECTANGLES:
        # k1 -> k2, k2 -> -k1
        return -n, m
    # k1 -> k2, k2 -> k2 - k1
    return -n, m + n


def rotate_coeffs(lat: Lattice, coeffs: np.ndarray, times: int = 1) -> np.ndarray:
    """Coefficients of ``f(R^-1 x)`` where R generates the pattern's rotations.

    Works on arrays whose trailing axes are the lattice coefficient axes.
    """
    times %= lat.pattern.rotation_order
    out = np.asarray(coeffs)
    if times == 0:
        return out.copy()
    N = lat.truncation
    mp, np_ = _rotated_indices(lat)
    src = np.nonzero(lat.mask)
    for _ in range(times):
        rotated = np.zeros_like(out)
        if lat.ndim == 1:
            rotated[..., mp[src] + N] = out[..., src[0]]
        else:
            rotated[..., mp[src] + N, np_[src] + N] = out[..., src[0], src[1]]
        out = rotated
    return out


def symmetrize_coeffs(lat: Lattice, coeffs: np.ndarray) -> np.ndarray:
    """Average of the coefficients over the pattern's rotation group."""
    order = lat.pattern.rotation_order
    acc = np.zeros_like(np.asarray(coeffs), dtype=complex)
    for j in range(order):
        acc += rotate_coeffs(lat, coeffs, j)
    return acc / order
