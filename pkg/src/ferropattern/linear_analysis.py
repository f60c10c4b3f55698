"""Linearisation about the flat state: pencil, dispersion relation, critical point.

For a single Fourier mode ``exp(i k.x)`` the linearised system acts on the
amplitude vector ``(eta, Phi', Phi)`` through the 3x3 matrix ``L0(|k|)``.
Nontrivial kernels occur where ``gamma0 = r(|k|)``; the critical point is the
positive maximum ``(omega, gamma0)`` of ``r``.  This module also provides the
spectral projection onto the symmetric kernel and the mode-wise resolvent on
its complement.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .fields import FieldError, StateTriple, SurfaceField, e1_field
from .lattice import Lattice, dual_vectors_of_length
from .magnetization import LawConstants

__all__ = [
    "NoPositiveMaximum",
    "NotInRange",
    "NearResonance",
    "LinearPencil",
    "CriticalPoint",
    "xcoth",
    "pencil_matrix",
    "det_closed_form",
    "dispersion_r",
    "dispersion_dr",
    "dispersion_d2r",
    "dispersion_table",
    "threshold_beta0",
    "critical_point",
    "beta0_from_omega_tilde",
    "deep_fluid_beta0",
    "apply_pencil",
    "kernel_basis",
    "bracket",
    "projection_P",
    "resolvent_solve",
    "transversality",
]

RESONANCE_GAP = 1e-6
DEEP_OMEGA_TILDE = 24.0


class NoPositiveMaximum(ValueError):
    """The dispersion relation has no positive maximum for these parameters."""


class NotInRange(ValueError):
    """Right-hand side has a component along the kernel direction."""


class NearResonance(ValueError):
    """A retained mode has length within RESONANCE_GAP of omega but not equal to it."""


def _consts(law) -> LawConstants:
    return law if isinstance(law, LawConstants) else law.constants()


# ---------------------------------------------------------------------------
# hyperbolic helpers, stable for small and large arguments
# ---------------------------------------------------------------------------

def xcoth(x):
    """``x coth x`` with the removable singularity at 0 filled in."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-4
    xs = np.where(small, 1.0, x)
    return np.where(small, 1.0 + x * x / 3.0, xs / np.tanh(xs))


def _dxcoth(x):
    """Derivative of ``x coth x``: ``coth x - x / sinh(x)^2``."""
    x = np.asarray(x, dtype=float)
    small = x < 1e-2
    xs = np.where(small, 1.0, x)
    em = np.exp(-2.0 * xs)
    x_over_sinh2 = 4.0 * xs * em / (1.0 - em) ** 2
    big = 1.0 / np.tanh(xs) - x_over_sinh2
    series = 2 * x / 3 - 4 * x**3 / 45 + 12 * x**5 / 945
    return np.where(small, series, big)


def _coth(x):
    return 1.0 / np.tanh(x)


def _csch2(x):
    em = np.exp(-2.0 * x)
    return 4.0 * em / (1.0 - em) ** 2


# ---------------------------------------------------------------------------
# pencil and dispersion relation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LinearPencil:
    kmag: float
    matrix: np.ndarray
    beta0: float
    gamma0: float
    consts: LawConstants

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.matrix))


def _pencil_entries(kmag, beta0, gamma0, c: LawConstants):
    k = np.asarray(kmag, dtype=float)
    p = k * np.tanh(k / beta0)
    q = c.mu1 / c.S1 * k * np.tanh(c.S1 * k / beta0)
    return k, p, q


def pencil_matrix(kmag: float, beta0: float, gamma0: float, law) -> LinearPencil:
    """The 3x3 matrix ``L0(|k|)`` acting on ``(eta, Phi', Phi)``."""
    c = _consts(law)
    k, p, q = _pencil_entries(kmag, beta0, gamma0, c)
    a = c.mu1 - 1.0
    mat = np.array([[a, 1.0, -1.0],
                    [0.0, p, q],
                    [-k * k - gamma0, -c.mu1 * p, -q]])
    return LinearPencil(float(kmag), mat, beta0, gamma0, c)


def _pencil_stack(kmag: np.ndarray, beta0: float, gamma0: float, c: LawConstants) -> np.ndarray:
    """Pencil matrices for an array of wavenumbers; shape ``(3, 3) + kmag.shape``."""
    k, p, q = _pencil_entries(kmag, beta0, gamma0, c)
    one = np.ones_like(k)
    zero = np.zeros_like(k)
    return np.array([[(c.mu1 - 1.0) * one, one, -one],
                     [zero, p, q],
                     [-k * k - gamma0, -c.mu1 * p, -q]])


def det_closed_form(kmag, beta0: float, gamma0: float, law):
    """Determinant of the pencil written out in closed form."""
    c = _consts(law)
    k, p, q = _pencil_entries(kmag, beta0, gamma0, c)
    return (c.mu1 - 1.0) ** 2 * p * q - (k * k + gamma0) * (p + q)


def threshold_beta0(law) -> float:
    """Largest inverse depth for which the dispersion relation takes positive values."""
    c = _consts(law)
    return c.mu1 * (c.mu1 - 1.0) ** 2 / (c.mu1 + 1.0)


def _A(k, beta0, c):
    """``mu1 |k| coth(|k|/beta0) + S1 |k| coth(S1|k|/beta0)``."""
    return beta0 * (c.mu1 * xcoth(k / beta0) + xcoth(c.S1 * k / beta0))


def dispersion_r(kmag, beta0: float, law):
    """``r(|k|)``, the value of ``gamma0`` for which ``L0(|k|)`` is singular."""
    c = _consts(law)
    k = np.asarray(kmag, dtype=float)
    cc = c.mu1 * (c.mu1 - 1.0) ** 2
    out = (cc / _A(k, beta0, c) - 1.0) * k * k
    return out if out.ndim else float(out)


def dispersion_dr(kmag, beta0: float, law):
    """Analytic derivative ``r'(|k|)``."""
    c = _consts(law)
    k = np.asarray(kmag, dtype=float)
    cc = c.mu1 * (c.mu1 - 1.0) ** 2
    A = _A(k, beta0, c)
    dA = c.mu1 * _dxcoth(k / beta0) + c.S1 * _dxcoth(c.S1 * k / beta0)
    out = -cc * dA * k * k / A**2 + 2.0 * k * (cc / A - 1.0)
    return out if out.ndim else float(out)


def dispersion_d2r(kmag, beta0: float, law, rel_step: float = 1e-5):
    """Second derivative by central differences of the analytic ``r'``."""
    k = np.asarray(kmag, dtype=float)
    h = rel_step * np.maximum(k, 1e-3)
    out = (dispersion_dr(k + h, beta0, law) - dispersion_dr(k - h, beta0, law)) / (2 * h)
    return out if np.ndim(out) else float(out)


def dispersion_table(kmag, beta0: float, law) -> np.ndarray:
    """Two-column array ``(kmag, r)`` for plotting or CSV export."""
    k = np.asarray(kmag, dtype=float)
    return np.column_stack([k, dispersion_r(k, beta0, law)])


# ---------------------------------------------------------------------------
# critical point
# ---------------------------------------------------------------------------

@dataclass
class CriticalPoint:
    """Positive maximum of the dispersion relation with kernel data.

    Attributes
    ----------
    omega, gamma0 : float
        Critical wavenumber and critical value of the bifurcation parameter.
    omega_tilde : float
        ``omega / beta0``.
    v, v_star : ndarray, shape (3,)
        Right and left null vectors of ``L0(omega)``.
    C_star : float
        Normalisation with ``C_star * (v . v_star) = 1``.
    other_maxima : list of (omega, r)
        Further local maxima found while bracketing, if any.
    identity_residual : float
        Residual of the depth identity relating beta0 and omega_tilde.
    """

    omega: float
    gamma0: float
    omega_tilde: float
    v: np.ndarray
    v_star: np.ndarray
    C_star: float
    beta0: float
    consts: LawConstants
    other_maxima: list = field(default_factory=list)
    identity_residual: float = 0.0

    @property
    def pencil(self) -> LinearPencil:
        return pencil_matrix(self.omega, self.beta0, self.gamma0, self.consts)

    def to_dict(self) -> dict:
        return {"omega": self.omega, "gamma0": self.gamma0, "omega_tilde": self.omega_tilde,
                "v": list(map(float, self.v)), "v_star": list(map(float, self.v_star)),
                "C_star": self.C_star, "beta0": self.beta0,
                "law_constants": list(self.consts.as_tuple()),
                "other_maxima": [list(map(float, m)) for m in self.other_maxima]}

    @classmethod
    def from_dict(cls, data: dict) -> "CriticalPoint":
        return cls(data["omega"], data["gamma0"], data["omega_tilde"], np.array(data["v"]),
                   np.array(data["v_star"]), data["C_star"], data["beta0"],
                   LawConstants(*data["law_constants"][:4]),
                   [tuple(m) for m in data.get("other_maxima", [])])


def _h(wt, c):
    return c.mu1 * _coth(wt) + c.S1 * _coth(c.S1 * wt)


def _hdot(wt, c):
    return -c.mu1 * _csch2(wt) - c.S1**2 * _csch2(c.S1 * wt)


def beta0_from_omega_tilde(omega_tilde: float, law) -> float:
    """Inverse depth whose critical wavenumber satisfies ``omega / beta0 = omega_tilde``."""
    c = _consts(law)
    wt = float(omega_tilde)
    if not wt > 0:
        raise ValueError("omega_tilde must be positive")
    h = _h(wt, c)
    cc = c.mu1 * (c.mu1 - 1.0) ** 2
    return float(cc / (2.0 * wt) * (h - wt * _hdot(wt, c)) / h**2)


def deep_fluid_beta0(law, omega_tilde: float | None = None) -> float:
    """Inverse depth standing in for infinite depth.

    ``omega_tilde`` defaults to ``24 / min(1, S1)``, at which every hyperbolic
    factor entering the branch coefficients equals its limit to double precision.
    """
    c = _consts(law)
    if omega_tilde is None:
        omega_tilde = DEEP_OMEGA_TILDE / min(1.0, c.S1)
    return beta0_from_omega_tilde(omega_tilde, c)


def _null_vectors(omega, beta0, gamma0, c):
    """Right/left null vectors of ``L0(omega)`` and ``C_star = 1/(v . v_star)``."""
    wt = omega / beta0
    t = np.tanh(c.S1 * wt) * _coth(wt)
    a = c.mu1 - 1.0
    h = _h(wt, c)
    v = np.array([(c.mu1 / c.S1 * t + 1.0) / a, -c.mu1 / c.S1 * t, 1.0])
    g = gamma0 + omega**2
    v_star = np.array([g / a, g / (a * a * omega) * (_coth(wt) + c.S1 * _coth(c.S1 * wt)), 1.0])
    dot = (c.mu1 * omega / c.S1 * np.tanh(c.S1 * wt)
           - c.mu1**2 / c.S1 * np.tanh(c.S1 * wt) * (_coth(wt) + c.S1 * _coth(c.S1 * wt))
           / (np.tanh(wt) * h) + 1.0)
    return v, v_star, float(1.0 / dot)


def critical_point(beta0: float, law, samples: int = 4000) -> CriticalPoint:
    """Locate the positive maximum of ``r`` and assemble the kernel data.

    The maximiser lies in ``(0, mu1 (mu1-1)^2 / (mu1 + S1)]`` since ``r`` is
    negative beyond.  A geometric-plus-uniform sample grid brackets every local
    maximum; each is polished by root-finding on the analytic ``r'``.  If more
    than one positive local maximum exists the largest is returned and the rest
    are listed in ``other_maxima``.
    """
    c = _consts(law)
    if not beta0 > 0:
        raise ValueError("beta0 must be positive")
    thr = threshold_beta0(c)
    if beta0 >= thr:
        raise NoPositiveMaximum(
            f"beta0 = {beta0:g} is not below the threshold {thr:g}; r has no positive values")
    kmax = c.mu1 * (c.mu1 - 1.0) ** 2 / (c.mu1 + c.S1)
    grid = np.unique(np.concatenate([kmax * np.logspace(-9, 0, samples // 2),
                                     np.linspace(0, kmax, samples // 2)[1:]]))
    dr = dispersion_dr(grid, beta0, c)
    maxima = []
    for i in np.nonzero((dr[:-1] > 0) & (dr[1:] <= 0))[0]:
        lo, hi = grid[i], grid[i + 1]
        w = lo if dr[i + 1] == 0 else brentq(dispersion_dr, lo, hi, args=(beta0, c),
                                               xtol=1e-15, rtol=1e-15, maxiter=200)
        rw = dispersion_r(w, beta0, c)
        if rw > 0:
            maxima.append((float(w), float(rw)))
    if not maxima:
        raise NoPositiveMaximum(f"no positive maximum of r found for beta0 = {beta0:g}")
    maxima.sort(key=lambda m: -m[1])
    omega, gamma0 = maxima[0]
    v, v_star, C_star = _null_vectors(omega, beta0, gamma0, c)
    wt = omega / beta0
    identity = abs(beta0_from_omega_tilde(wt, c) - beta0) / beta0
    return CriticalPoint(omega, gamma0, wt, v, v_star, C_star, beta0, c, maxima[1:], identity)


def transversality(cp: CriticalPoint) -> float:
    """Coefficient of ``v e1`` in the projected mixed derivative with respect to gamma."""
    c = cp.consts
    wt = cp.omega_tilde
    return float(-cp.C_star / (c.mu1 - 1.0) / c.S1 * np.tanh(c.S1 * wt)
                 * (c.mu1 * _coth(wt) + c.S1 * _coth(c.S1 * wt)))


# ---------------------------------------------------------------------------
# operators on state triples
# ---------------------------------------------------------------------------

def _check_lattice(lat: Lattice, cp: CriticalPoint):
    if not np.isclose(lat.omega, cp.omega, rtol=1e-12, atol=0.0):
        raise ValueError(f"lattice wavenumber {lat.omega!r} differs from omega = {cp.omega!r}")


def apply_pencil(lat: Lattice, cp: CriticalPoint, state: StateTriple) -> StateTriple:
    """Mode-wise application of ``L0`` to a state triple."""
    if not state.lat.same_as(lat):
        raise FieldError("state lives on a different lattice")
    mats = _pencil_stack(lat.kmag, cp.beta0, cp.gamma0, cp.consts)
    out = np.einsum("ij...,j...->i...", mats, state.stacked())
    return StateTriple.from_stacked(lat, out)


def kernel_basis(lat: Lattice, cp: CriticalPoint) -> list[StateTriple]:
    """``v cos(k.x)`` and ``v sin(k.x)`` for one of each pair ``+-k`` with ``|k| = omega``."""
    _check_lattice(lat, cp)
    basis = []
    seen = set()
    for w in dual_vectors_of_length(lat, cp.omega):
        if (-w.m, -w.n) in seen:
            continue
        seen.add((w.m, w.n))
        for shape in (SurfaceField.cosine(lat, w.m, w.n), SurfaceField.sine(lat, w.m, w.n)):
            basis.append(StateTriple.from_vector(cp.v, shape))
    return basis


def bracket(f, lat: Lattice | None = None) -> np.ndarray | float:
    """Coefficient of ``e1`` in ``f``: ``<f, e1> / <e1, e1>`` (componentwise for triples)."""
    if isinstance(f, StateTriple):
        return np.array([bracket(c) for c in f.components])
    e1 = e1_field(f.lat).coeffs
    return float(np.real(np.vdot(e1, f.coeffs)) / np.real(np.vdot(e1, e1)))


def projection_P(lat: Lattice, cp: CriticalPoint, f: StateTriple) -> StateTriple:
    """Rank-one projection onto ``v e1`` along the range of ``L0``."""
    _check_lattice(lat, cp)
    coef = cp.C_star * float(bracket(f) @ cp.v_star)
    return StateTriple.from_vector(coef * cp.v, e1_field(lat))


def _classify_modes(lat: Lattice, omega: float):
    k = lat.kmag
    on_ring = lat.mask & (np.abs(k - omega) <= 1e-12 * omega)
    near = lat.mask & ~on_ring & (np.abs(k - omega) < RESONANCE_GAP)
    return on_ring, near


def resolvent_solve(lat: Lattice, cp: CriticalPoint, rhs: StateTriple,
                    range_tol: float = 1e-9) -> StateTriple:
    """Solve ``L0 x = rhs`` with ``x`` in the complement of the kernel.

    Modes off the critical ring use direct 3x3 solves; the mean uses the
    explicit inverse of ``L0(0)`` on its range; on the ring the solution is the
    least-squares solution orthogonal to ``v_star`` (the convention that fixes
    ``P x = 0``).

    Raises
    ------
    NotInRange
        If ``rhs`` has a component outside the range of ``L0``.
    NearResonance
        If a retained mode has length within ``RESONANCE_GAP`` of omega.
    """
    _check_lattice(lat, cp)
    c = cp.consts
    data = rhs.stacked()
    scale = max(1.0, float(np.abs(data).max()))
    on_ring, near = _classify_modes(lat, cp.omega)
    if near.any():
        raise NearResonance("a retained wavevector is within 1e-6 of the critical ring")
    if abs(data[1][lat.origin]) > range_tol * scale:
        raise NotInRange("second component has nonzero mean")
    ring_idx = np.nonzero(on_ring)
    ring_vals = data[(slice(None),) + ring_idx]
    if ring_vals.size and np.abs(cp.v_star @ ring_vals).max() > range_tol * scale:
        raise NotInRange("right-hand side has a component along the kernel direction")

    out = np.zeros_like(data, dtype=complex)
    off = lat.mask & ~on_ring
    off[lat.origin] = False
    idx = np.nonzero(off)
    if idx[0].size:
        mats = _pencil_stack(lat.kmag[idx], cp.beta0, cp.gamma0, c)
        A = np.moveaxis(mats, -1, 0)
        b = data[(slice(None),) + idx].T[..., None]
        out[(slice(None),) + idx] = np.linalg.solve(A, b)[..., 0].T
    chi0, psi0 = data[0][lat.origin], data[2][lat.origin]
    out[0][lat.origin] = -psi0 / cp.gamma0
    out[2][lat.origin] = -chi0 - (c.mu1 - 1.0) * psi0 / cp.gamma0
    if ring_idx[0].size:
        L = cp.pencil.matrix
        aug = np.vstack([L, cp.v_star[None, :]])
        rhs_aug = np.vstack([ring_vals, np.zeros((1, ring_vals.shape[1]))])
        sol, *_ = np.linalg.lstsq(aug, rhs_aug, rcond=None)
        out[(slice(None),) + ring_idx] = sol
    return StateTriple.from_stacked(lat, out)
