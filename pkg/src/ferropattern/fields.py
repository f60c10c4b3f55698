"""Truncated Fourier fields on a lattice and Chebyshev profiles in the strips.

Surface quantities are stored as complex coefficient arrays on the lattice
index block.  Products and other pointwise nonlinearities are evaluated on a
physical grid that is uniform in lattice coordinates and transformed back with
the FFT, then truncated to the lattice mask.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from .lattice import Lattice, rotate_coeffs, symmetrize_coeffs

__all__ = [
    "FieldError",
    "shell_index",
    "DivergenceError",
    "to_grid",
    "from_grid",
    "SurfaceField",
    "StateTriple",
    "Strip",
    "VolumeField",
    "chebyshev",
    "strip_nodes",
    "multiply",
    "grad_h",
    "sobolev_norm",
    "reciprocal_one_plus",
    "symmetrize",
    "e1_field",
]


class FieldError(ValueError):
    """Invalid field operation (lattice mismatch, bad shapes)."""


class DivergenceError(ArithmeticError):
    """A Neumann series was requested outside its disc of convergence."""


# ---------------------------------------------------------------------------
# spectral transforms
# ---------------------------------------------------------------------------

def _wrap_indices(lat: Lattice, size: int):
    if size < 2 * lat.truncation + 1:
        raise FieldError(f"grid size {size} cannot represent truncation {lat.truncation}")
    r = np.arange(-lat.truncation, lat.truncation + 1) % size
    return r


def to_grid(lat: Lattice, coeffs: np.ndarray, size: int | None = None) -> np.ndarray:
    """Real samples on the uniform lattice grid of the coefficient array.

    The trailing ``lat.ndim`` axes of ``coeffs`` are the coefficient axes; any
    leading axes are carried along.
    """
    M = lat.grid_size if size is None else size
    coeffs = np.asarray(coeffs)
    lead = coeffs.shape[: coeffs.ndim - lat.ndim]
    r = _wrap_indices(lat, M)
    big = np.zeros(lead + (M,) * lat.ndim, dtype=complex)
    masked = np.where(lat.mask, coeffs, 0)
    if lat.ndim == 1:
        big[..., r] = masked
        axes = (-1,)
    else:
        big[..., r[:, None], r[None, :]] = masked
        axes = (-2, -1)
    out = np.fft.ifftn(big, axes=axes) * M**lat.ndim
    return out.real


def from_grid(lat: Lattice, values: np.ndarray) -> np.ndarray:
    """Coefficients (truncated to the lattice mask) of real grid samples."""
    values = np.asarray(values, dtype=float)
    M = values.shape[-1]
    axes = (-1,) if lat.ndim == 1 else (-2, -1)
    spec = np.fft.fftn(values, axes=axes) / M**lat.ndim
    r = _wrap_indices(lat, M)
    if lat.ndim == 1:
        out = spec[..., r]
    else:
        out = spec[..., r[:, None], r[None, :]]
    return np.where(lat.mask, out, 0)


def shell_index(lat: Lattice) -> np.ndarray:
    """Truncation index of every stored mode (the norm whose ball is the mask)."""
    m, n = lat.index_grids
    if lat.pattern.value == "hexagons":
        return np.maximum(np.maximum(abs(m), abs(n)), abs(m + n))
    return np.maximum(abs(m), abs(n))


def _hermitian_part(lat: Lattice, coeffs: np.ndarray) -> np.ndarray:
    """Project onto coefficient arrays of real fields: ``(c + conj(c[-k]))/2``."""
    flipped = coeffs[..., ::-1] if lat.ndim == 1 else coeffs[..., ::-1, ::-1]
    return 0.5 * (coeffs + np.conj(flipped))


# ---------------------------------------------------------------------------
# surface fields
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class SurfaceField:
    """Real field on the base cell given by its truncated Fourier coefficients.

    ``coeffs[lat.index(m, n)]`` is the amplitude of ``exp(i k.x)`` with
    ``k = m k1 + n k2``.
    """

    lat: Lattice
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.shape != self.lat.shape:
            raise FieldError(f"coefficient shape {c.shape} does not match lattice {self.lat.shape}")
        self.coeffs = np.where(self.lat.mask, c, 0)

    # constructors -------------------------------------------------------
    @classmethod
    def zeros(cls, lat: Lattice) -> "SurfaceField":
        return cls(lat, np.zeros(lat.shape, dtype=complex))

    @classmethod
    def constant(cls, lat: Lattice, value: float) -> "SurfaceField":
        c = np.zeros(lat.shape, dtype=complex)
        c[lat.origin] = value
        return cls(lat, c)

    @classmethod
    def from_grid(cls, lat: Lattice, values: np.ndarray) -> "SurfaceField":
        return cls(lat, _hermitian_part(lat, from_grid(lat, values)))

    @classmethod
    def from_function(cls, lat: Lattice, func: Callable, size: int | None = None) -> "SurfaceField":
        """Interpolate ``func(x, z)`` on the lattice grid (aliasing beyond N is the caller's concern)."""
        x, z = lat.physical_points(size)
        return cls.from_grid(lat, np.asarray(func(x, z), dtype=float))

    @classmethod
    def cosine(cls, lat: Lattice, m: int, n: int = 0, amplitude: float = 1.0) -> "SurfaceField":
        """``amplitude * cos(k.x)`` for the dual vector ``k = m k1 + n k2``."""
        return cls.exponential(lat, m, n, 0.5 * amplitude) + cls.exponential(lat, -m, -n, 0.5 * amplitude)

    @classmethod
    def sine(cls, lat: Lattice, m: int, n: int = 0, amplitude: float = 1.0) -> "SurfaceField":
        return (cls.exponential(lat, m, n, -0.5j * amplitude)
                + cls.exponential(lat, -m, -n, 0.5j * amplitude))

    @classmethod
    def exponential(cls, lat: Lattice, m: int, n: int = 0, amplitude: complex = 1.0) -> "SurfaceField":
        if not lat.contains(m, n):
            raise FieldError(f"mode ({m}, {n}) lies outside the truncation")
        c = np.zeros(lat.shape, dtype=complex)
        c[lat.index(m, n)] = amplitude
        return cls(lat, c)

    @classmethod
    def random(cls, lat: Lattice, rng: np.random.Generator, band: int | None = None,
               decay: float = 0.0, mean: bool = True) -> "SurfaceField":
        """Random real field; ``band`` limits the support, ``decay`` damps high modes."""
        shape = lat.shape
        c = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        c *= np.exp(-decay * lat.kmag / lat.omega)
        if band is not None:
            c[shell_index(lat) > band] = 0
        if not mean:
            c[lat.origin] = 0
        return cls(lat, _hermitian_part(lat, c))

    # basic protocol -----------------------------------------------------
    def _check(self, other: "SurfaceField"):
        if not isinstance(other, SurfaceField):
            raise FieldError("expected a SurfaceField")
        if not self.lat.same_as(other.lat):
            raise FieldError("fields live on different lattices")

    def copy(self) -> "SurfaceField":
        return SurfaceField(self.lat, self.coeffs.copy())

    def __add__(self, other):
        if np.isscalar(other):
            return self + SurfaceField.constant(self.lat, other)
        self._check(other)
        return SurfaceField(self.lat, self.coeffs + other.coeffs)

    __radd__ = __add__

    def __sub__(self, other):
        if np.isscalar(other):
            return self + (-other)
        self._check(other)
        return SurfaceField(self.lat, self.coeffs - other.coeffs)

    def __rsub__(self, other):
        return (-self) + other

    def __neg__(self):
        return SurfaceField(self.lat, -self.coeffs)

    def __mul__(self, other):
        if isinstance(other, SurfaceField):
            return multiply(self, other)
        return SurfaceField(self.lat, self.coeffs * other)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return SurfaceField(self.lat, self.coeffs / scalar)

    def __repr__(self):
        return f"SurfaceField({self.lat!r}, max|c|={np.abs(self.coeffs).max():.3g})"

    # queries --------------------------------------------------------------
    def coefficient(self, m: int, n: int = 0) -> complex:
        return complex(self.coeffs[self.lat.index(m, n)])

    @property
    def mean(self) -> float:
        return float(self.coeffs[self.lat.origin].real)

    def without_mean(self) -> "SurfaceField":
        c = self.coeffs.copy()
        c[self.lat.origin] = 0
        return SurfaceField(self.lat, c)

    def is_real(self, tol: float = 1e-12) -> bool:
        return bool(np.abs(self.coeffs - _hermitian_part(self.lat, self.coeffs)).max() <= tol)

    def to_grid(self, size: int | None = None) -> np.ndarray:
        return to_grid(self.lat, self.coeffs, size)

    def evaluate(self, x, z=None) -> np.ndarray:
        """Pointwise values at arbitrary Cartesian points."""
        x = np.asarray(x, dtype=float)
        z = np.zeros_like(x) if z is None else np.asarray(z, dtype=float)
        kx, kz = self.lat.wavenumbers
        sel = self.lat.mask & (self.coeffs != 0)
        phase = np.multiply.outer(x, kx[sel]) + np.multiply.outer(z, kz[sel])
        return (np.exp(1j * phase) @ self.coeffs[sel]).real

    def sup_norm(self, size: int | None = None) -> float:
        return float(np.abs(self.to_grid(size)).max())

    def norm(self, r: float = 0.0) -> float:
        return sobolev_norm(self, r)

    def rotated(self, times: int = 1) -> "SurfaceField":
        return SurfaceField(self.lat, rotate_coeffs(self.lat, self.coeffs, times))

    def dx(self) -> "SurfaceField":
        return SurfaceField(self.lat, 1j * self.lat.wavenumbers[0] * self.coeffs)

    def dz(self) -> "SurfaceField":
        return SurfaceField(self.lat, 1j * self.lat.wavenumbers[1] * self.coeffs)

    def laplacian(self) -> "SurfaceField":
        return SurfaceField(self.lat, -self.lat.kmag**2 * self.coeffs)

    # export ---------------------------------------------------------------
    def to_json(self) -> str:
        m, n = self.lat.index_grids
        sel = np.nonzero(self.lat.mask & (self.coeffs != 0))
        rows = [{"m": int(m[i]), "n": int(n[i]), "re": float(self.coeffs[i].real),
                 "im": float(self.coeffs[i].imag)} for i in zip(*sel)]
        return json.dumps({"pattern": self.lat.pattern.value, "omega": self.lat.omega,
                           "truncation": self.lat.truncation, "coefficients": rows})

    @classmethod
    def from_json(cls, lat: Lattice, text: str) -> "SurfaceField":
        data = json.loads(text) if isinstance(text, str) else text
        c = np.zeros(lat.shape, dtype=complex)
        for row in data["coefficients"]:
            c[lat.index(row["m"], row["n"])] = row["re"] + 1j * row["im"]
        return cls(lat, c)

    def to_csv(self, path, n: int = 64) -> None:
        """Write ``x, z, value`` samples on an ``n``-point grid over the base cell."""
        x, z = self.lat.physical_points(n)
        vals = self.evaluate(x, z)
        write_xyz_csv(path, x, z, vals, "value")


def write_xyz_csv(path, x, z, values, name: str) -> None:
    data = np.column_stack([np.ravel(x), np.ravel(z), np.ravel(values)])
    np.savetxt(path, data, delimiter=",", header=f"x,z,{name}", comments="", fmt="%.17g")


def multiply(a: SurfaceField, b: SurfaceField) -> SurfaceField:
    """Product truncated to the lattice, computed on the dealiased grid."""
    a._check(b)
    lat = a.lat
    prod = to_grid(lat, a.coeffs) * to_grid(lat, b.coeffs)
    return SurfaceField(lat, from_grid(lat, prod))


def grad_h(f: SurfaceField) -> tuple[SurfaceField, SurfaceField]:
    return f.dx(), f.dz()


def sobolev_norm(f: SurfaceField, r: float = 0.0) -> float:
    """``sqrt(C(Gamma) * sum (1 + |k|^2)^r |f_k|^2)``."""
    w = (1.0 + f.lat.kmag**2) ** r
    return float(np.sqrt(f.lat.cell_constant * np.sum(w * np.abs(f.coeffs) ** 2)))


def reciprocal_one_plus(scale: float, f: SurfaceField, order: int) -> SurfaceField:
    """Truncated Neumann series ``sum_{j<=order} (-scale f)^j`` for ``1/(1 + scale f)``."""
    if order < 0:
        raise ValueError("order must be nonnegative")
    g = scale * f
    sup = g.sup_norm(max(4 * f.lat.truncation + 2, f.lat.grid_size))
    if sup >= 1.0:
        raise DivergenceError(f"sup|scale*f| = {sup:.4g} >= 1; Neumann series diverges")
    term = SurfaceField.constant(f.lat, 1.0)
    total = term.copy()
    for _ in range(order):
        term = -multiply(term, g)
        total = total + term
    return total


def symmetrize(field, lat: Lattice | None = None):
    """Average over the rotation group of the pattern (fields or state triples)."""
    if isinstance(field, StateTriple):
        return StateTriple(*(symmetrize(c) for c in field.components))
    lat = field.lat if lat is None else lat
    if not lat.same_as(field.lat):
        raise FieldError("field is not defined on the given lattice")
    return SurfaceField(lat, symmetrize_coeffs(lat, field.coeffs))


def e1_field(lat: Lattice) -> SurfaceField:
    """Normalised critical mode: sum of cos(k.x) over one half of the ring |k| = omega."""
    if lat.pattern.value == "rolls":
        pairs = [(1, 0)]
    elif lat.pattern.value == "rectangles":
        pairs = [(1, 0), (0, 1)]
    else:
        pairs = [(1, 0), (0, 1), (-1, 1)]
    out = SurfaceField.zeros(lat)
    for m, n in pairs:
        out = out + SurfaceField.cosine(lat, m, n)
    return out


# ---------------------------------------------------------------------------
# state triples
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class StateTriple:
    """``(eta, phi_up, phi_lo)``: interface, upper and lower potential traces.

    The same container holds residuals ``(chi, Psi', Psi)``.  States in the
    admissible space have an upper trace with zero mean (see
    :meth:`is_admissible`); residuals need not, so nothing is projected here.
    """

    eta: SurfaceField
    phi_up: SurfaceField
    phi_lo: SurfaceField

    def __post_init__(self):
        self.eta._check(self.phi_up)
        self.eta._check(self.phi_lo)

    def is_admissible(self, tol: float = 1e-12) -> bool:
        """True if the second component has zero mean."""
        return abs(self.phi_up.mean) <= tol * max(1.0, self.phi_up.sup_norm())

    @property
    def lat(self) -> Lattice:
        return self.eta.lat

    @property
    def components(self) -> tuple[SurfaceField, SurfaceField, SurfaceField]:
        return self.eta, self.phi_up, self.phi_lo

    @classmethod
    def zeros(cls, lat: Lattice) -> "StateTriple":
        z = SurfaceField.zeros(lat)
        return cls(z, z.copy(), z.copy())

    @classmethod
    def from_vector(cls, vec: Iterable[float], shape: SurfaceField) -> "StateTriple":
        """``vec * shape``: the constant vector ``vec`` times a scalar field."""
        a, b, c = vec
        return cls(shape * a, shape * b, shape * c)

    def __add__(self, other: "StateTriple") -> "StateTriple":
        return StateTriple(*(a + b for a, b in zip(self.components, other.components)))

    def __sub__(self, other: "StateTriple") -> "StateTriple":
        return StateTriple(*(a - b for a, b in zip(self.components, other.components)))

    def __neg__(self):
        return StateTriple(*(-a for a in self.components))

    def __mul__(self, scalar: float) -> "StateTriple":
        return StateTriple(*(a * scalar for a in self.components))

    __rmul__ = __mul__

    def rotated(self, times: int = 1) -> "StateTriple":
        return StateTriple(*(a.rotated(times) for a in self.components))

    def stacked(self) -> np.ndarray:
        """Coefficients as an array of shape ``(3,) + lat.shape``."""
        return np.stack([a.coeffs for a in self.components])

    @classmethod
    def from_stacked(cls, lat: Lattice, arr: np.ndarray) -> "StateTriple":
        return cls(*(SurfaceField(lat, arr[i]) for i in range(3)))

    def sup_norm(self) -> float:
        return max(a.sup_norm() for a in self.components)

    def to_dict(self) -> dict:
        return {name: json.loads(comp.to_json())
                for name, comp in zip(("eta", "phi_up", "phi_lo"), self.components)}

    @classmethod
    def from_dict(cls, lat: Lattice, data: dict) -> "StateTriple":
        return cls(*(SurfaceField.from_json(lat, data[k]) for k in ("eta", "phi_up", "phi_lo")))


# ---------------------------------------------------------------------------
# vertical discretisation
# ---------------------------------------------------------------------------

class Strip(enum.Enum):
    LOWER = "lower"
    UPPER = "upper"


def chebyshev(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Chebyshev-Lobatto nodes ``cos(pi j/(n-1))`` on [-1, 1] and the differentiation matrix."""
    if n < 2:
        raise ValueError("need at least two Chebyshev points")
    j = np.arange(n)
    x = np.cos(np.pi * j / (n - 1))
    c = np.ones(n)
    c[0] = c[-1] = 2.0
    c *= (-1.0) ** j
    dX = x[:, None] - x[None, :]
    D = np.outer(c, 1.0 / c) / (dX + np.eye(n))
    D -= np.diag(D.sum(axis=1))
    return x, D


def strip_nodes(strip: Strip, depth: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and d/dy matrix on the strip; node 0 is the interface y = 0.

    The last node is the far boundary (``y = -depth`` below, ``y = +depth`` above).
    """
    x, D = chebyshev(n)
    if strip is Strip.LOWER:
        return 0.5 * depth * (x - 1.0), (2.0 / depth) * D
    return 0.5 * depth * (1.0 - x), (-2.0 / depth) * D


@dataclass(eq=False)
class VolumeField:
    """Fourier coefficients of a strip quantity at Chebyshev nodes.

    ``profiles`` has shape ``(n_y,) + lat.shape``; row 0 is the interface.
    """

    lat: Lattice
    strip: Strip
    depth: float
    profiles: np.ndarray
    y: np.ndarray = field(init=False)
    Dy: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.profiles = np.asarray(self.profiles, dtype=complex)
        n_y = self.profiles.shape[0]
        if n_y < 8:
            raise FieldError("a volume field needs at least 8 collocation points")
        if self.profiles.shape[1:] != self.lat.shape:
            raise FieldError("profile shape does not match the lattice")
        self.y, self.Dy = strip_nodes(self.strip, self.depth, n_y)

    @property
    def n_y(self) -> int:
        return self.profiles.shape[0]

    def trace(self) -> SurfaceField:
        return SurfaceField(self.lat, self.profiles[0])

    def dy(self) -> "VolumeField":
        d = np.tensordot(self.Dy, self.profiles, axes=(1, 0))
        return VolumeField(self.lat, self.strip, self.depth, d)

    def profile(self, m: int, n: int = 0) -> np.ndarray:
        return self.profiles[(slice(None),) + self.lat.index(m, n)]

    def to_grid(self, size: int | None = None) -> np.ndarray:
        return to_grid(self.lat, self.profiles, size)
