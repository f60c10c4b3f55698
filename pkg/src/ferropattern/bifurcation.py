"""Residual map, its multilinear Taylor forms and the bifurcating branch.

The steady problem is written as ``G(gamma, state) = 0`` for the state triple
``(eta, Phi', Phi)``.  At the critical point the kernel of the linearisation
(restricted to rotation-invariant states) is spanned by ``v0 = v e1``.  The
branch ``gamma(s) = gamma0 + s gamma1 + s^2 gamma2 + ...``,
``state(s) = s v0 + s^2 w1 + ...`` is characterised by

* ``gamma1 = -[Q0(v0, v0)]_1 . v_star / [L1 v0]_1 . v_star``,
* ``L0 w1 = -Q0(v0, v0) - gamma1 L1 v0`` with ``P w1 = 0``,
* ``gamma2 = -[2 Q0(v0, w1) + C0(v0, v0, v0)]_1 . v_star / [L1 v0]_1 . v_star``,

where ``Q0`` and ``C0`` are the quadratic and cubic Taylor forms of the
residual at ``gamma0`` and ``L1 state = (0, 0, -eta)``.  A nonzero ``gamma1``
means a transcritical branch; otherwise the sign of ``gamma2`` decides between
super- and subcritical.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field

import numpy as np

from .dn_operators import auto_ny, nonlinear_dn, taylor_dn_lower, taylor_dn_upper
from .fields import FieldError, StateTriple, SurfaceField, e1_field, from_grid
from .lattice import Lattice, PatternKind, make_lattice
from .linear_analysis import (DEEP_OMEGA_TILDE, CriticalPoint, apply_pencil, bracket,
                              critical_point, deep_fluid_beta0, projection_P,
                              resolvent_solve, transversality)
from .magnetization import LawConstants, MagnetizationLaw

__all__ = [
    "BranchType",
    "BranchResult",
    "DegenerateTransversality",
    "WrongBranchType",
    "residual",
    "L1_apply",
    "Q0_apply",
    "C0_apply",
    "Q0_diag",
    "C0_diag",
    "kernel_vector",
    "gamma1",
    "solve_w1",
    "gamma2",
    "classify_branch",
    "branch_residual",
    "BranchSolver",
]


class DegenerateTransversality(ArithmeticError):
    """The denominator ``[L1 v0]_1 . v_star`` vanished numerically."""


class WrongBranchType(ValueError):
    """gamma2 requested although gamma1 does not vanish."""


class BranchType(enum.Enum):
    TRANSCRITICAL = "Transcritical"
    SUPERCRITICAL = "Supercritical"
    SUBCRITICAL = "Subcritical"


def _consts(law) -> LawConstants:
    return law if isinstance(law, LawConstants) else law.constants()


def _product_grid(lat: Lattice) -> int:
    """Grid on which cubic products of retained modes do not alias into the mask."""
    size = 4 * lat.truncation + 2
    return size + (size % 2)


def _field(lat: Lattice, values: np.ndarray) -> SurfaceField:
    return SurfaceField(lat, from_grid(lat, values))


def _gradient(f: SurfaceField, M: int):
    gx = f.dx().to_grid(M)
    gz = f.dz().to_grid(M) if f.lat.ndim == 2 else np.zeros_like(gx)
    return gx, gz


# ---------------------------------------------------------------------------
# full residual
# ---------------------------------------------------------------------------

def _potential_increment(law, s: np.ndarray) -> np.ndarray:
    """``M(s) - M(1) = int_1^s t mu(t) dt`` evaluated pointwise."""
    s = np.asarray(s, dtype=float)
    if isinstance(law, LawConstants):
        raise TypeError("the full residual needs a magnetisation law, not only its constants")
    nodes, weights = np.polynomial.legendre.leggauss(24)
    half = 0.5 * (s - 1.0)
    t = 1.0 + half[..., None] * (nodes + 1.0)
    vals = t * np.asarray(law.mu(t.ravel()), dtype=float).reshape(t.shape)
    return half * (vals @ weights)


def residual(lat: Lattice, law: MagnetizationLaw, beta0: float, gamma: float,
             state: StateTriple, tol: float = 1e-11, n_y: int | None = None) -> StateTriple:
    """Evaluate the three residual components at ``(gamma, state)``.

    The DN operators are computed by :func:`nonlinear_dn`; the pointwise
    nonlinearities (permeability, potential, curvature) on the lattice grid.
    """
    if not state.lat.same_as(lat):
        raise FieldError("state lives on a different lattice")
    eta, phi_up, phi_lo = state.components
    c = _consts(law)
    ny_lo = n_y or auto_ny(lat, beta0, c.S1)
    ny_up = n_y or auto_ny(lat, beta0, 1.0)
    M = lat.grid_size
    lower = nonlinear_dn(lat, law, beta0, "lower", eta, phi_lo, tol=tol, n_y=ny_lo, grid=M)
    upper = nonlinear_dn(lat, law, beta0, "upper", eta, phi_up, tol=tol, n_y=ny_up, grid=M)
    # untruncated grid values, so that the mean of the flux balance is exact
    G, H = lower.G_grid, lower.H_grid
    Gp, Hp = upper.G_grid, upper.H_grid
    ex, ez = _gradient(eta, M)
    px, pz = _gradient(phi_lo, M)
    qx, qz = _gradient(phi_up, M)
    grad2 = ex * ex + ez * ez
    s2 = px * px + pz * pz + 2.0 * (1.0 - ex * px - ez * pz) * H + (1.0 + grad2) * H * H + 1.0
    s = np.sqrt(s2)
    mu_star = np.asarray(law.mu(s), dtype=float)
    dM = _potential_increment(law, s)

    root = np.sqrt(1.0 + grad2)
    curv = SurfaceField(lat, 1j * lat.wavenumbers[0] * from_grid(lat, ex / root))
    if lat.ndim == 2:
        curv = curv + SurfaceField(lat, 1j * lat.wavenumbers[1] * from_grid(lat, ez / root))

    comp1 = phi_up - phi_lo + eta * (c.mu1 - 1.0)
    comp2 = _field(lat, Gp + G + mu_star - c.mu1)
    rest = (0.5 * (1.0 + grad2) * Hp * Hp - 0.5 * (qx * qx + qz * qz) - c.mu1 * Gp - G
            - (mu_star - c.mu1) + dM - mu_star * H - H * G)
    comp3 = eta * (-gamma) + curv + _field(lat, rest)
    return StateTriple(comp1, comp2, comp3)


def L1_apply(state: StateTriple) -> StateTriple:
    """Derivative of the residual with respect to gamma: ``(0, 0, -eta)``."""
    z = SurfaceField.zeros(state.lat)
    return StateTriple(z, z.copy(), -state.eta)


# ---------------------------------------------------------------------------
# quadratic and cubic forms
# ---------------------------------------------------------------------------

def _dn_terms(lat, law, beta0, state: StateTriple, order: int, n_y=None):
    c = _consts(law)
    lo = taylor_dn_lower(lat, c, beta0, state.eta, state.phi_lo, order,
                         n_y=n_y or auto_ny(lat, beta0, c.S1))
    up = taylor_dn_upper(lat, beta0, state.eta, state.phi_up, order,
                         n_y=n_y or auto_ny(lat, beta0, 1.0))
    return lo, up


def Q0_diag(lat: Lattice, law, beta0: float, state: StateTriple, n_y: int | None = None,
            _dn=None) -> StateTriple:
    """Quadratic Taylor term of the residual evaluated on the diagonal."""
    c = _consts(law)
    lo, up = _dn if _dn is not None else _dn_terms(lat, law, beta0, state, 2, n_y)
    M = _product_grid(lat)
    H1, H2 = lo.H_terms[1].to_grid(M), lo.H_terms[2].to_grid(M)
    G1, G2 = lo.G_terms[1].to_grid(M), lo.G_terms[2].to_grid(M)
    Gp1, Gp2 = up.G_terms[1].to_grid(M), up.G_terms[2].to_grid(M)
    px, pz = _gradient(state.phi_lo, M)
    qx, qz = _gradient(state.phi_up, M)
    gp2 = px * px + pz * pz
    gq2 = qx * qx + qz * qz
    mu1, dmu, ddmu = c.mu1, c.dmu1, c.ddmu1
    comp2 = Gp2 + G2 + dmu * H2 + 0.5 * (ddmu * H1 * H1 + dmu * gp2)
    comp3 = (0.5 * (Gp1 * Gp1 - gq2 + (mu1 - dmu) * H1 * H1 + mu1 * gp2 - 2.0 * G1 * H1
                    - ddmu * H1 * H1 - dmu * gp2)
             - mu1 * Gp2 - G2 - dmu * H2)
    return StateTriple(SurfaceField.zeros(lat), _field(lat, comp2), _field(lat, comp3))


def C0_diag(lat: Lattice, law, beta0: float, state: StateTriple, n_y: int | None = None,
            _dn=None) -> StateTriple:
    """Cubic Taylor term of the residual evaluated on the diagonal."""
    c = _consts(law)
    lo, up = _dn if _dn is not None else _dn_terms(lat, law, beta0, state, 3, n_y)
    M = _product_grid(lat)
    H1, H2, H3 = (lo.H_terms[n].to_grid(M) for n in (1, 2, 3))
    G1, G2, G3 = (lo.G_terms[n].to_grid(M) for n in (1, 2, 3))
    Gp1, Gp2, Gp3 = (up.G_terms[n].to_grid(M) for n in (1, 2, 3))
    eta = state.eta
    ex, ez = _gradient(eta, M)
    px, pz = _gradient(state.phi_lo, M)
    qx, qz = _gradient(state.phi_up, M)
    exx = eta.dx().dx().to_grid(M)
    if lat.ndim == 2:
        ezz = eta.dz().dz().to_grid(M)
        exz = eta.dx().dz().to_grid(M)
    else:
        ezz = exz = np.zeros_like(exx)
    gp2 = px * px + pz * pz
    eta_dot_phi = ex * px + ez * pz
    eta_dot_phiup = ex * qx + ez * qz
    grad2 = ex * ex + ez * ez
    mu1, dmu, ddmu, dddmu = c.mu1, c.dmu1, c.ddmu1, c.dddmu1

    common = (dmu * H3 + ddmu * H1 * H2 + 0.5 * (ddmu - dmu) * gp2 * H1
              - dmu * eta_dot_phi * H1 + dddmu / 6.0 * H1**3)
    comp2 = Gp3 + G3 + common
    curvature = (ex * ex * ezz + ez * ez * exx - 2.0 * ex * ez * exz
                 - 1.5 * grad2 * (exx + ezz))
    comp3 = (-(mu1 * Gp3 + G3 + common)
             + Gp1 * (Gp2 - eta_dot_phiup)
             - H1 * (G2 + mu1 * eta_dot_phi)
             + (mu1 - dmu) * H1 * H2
             + (dmu - ddmu) / 3.0 * H1**3
             - G1 * H2
             + curvature)
    return StateTriple(SurfaceField.zeros(lat), _field(lat, comp2), _field(lat, comp3))


def Q0_apply(lat: Lattice, law, beta0: float, cp: CriticalPoint | None, a: StateTriple,
             b: StateTriple, n_y: int | None = None) -> StateTriple:
    """Symmetric bilinear form obtained by polarising :func:`Q0_diag`."""
    for x in (a, b):
        if not x.lat.same_as(lat):
            raise FieldError("argument lives on a different lattice")
    if a is b:
        return Q0_diag(lat, law, beta0, a, n_y)
    plus = Q0_diag(lat, law, beta0, a + b, n_y)
    minus = Q0_diag(lat, law, beta0, a - b, n_y)
    return (plus - minus) * 0.25


def C0_apply(lat: Lattice, law, beta0: float, cp: CriticalPoint | None, a: StateTriple,
             b: StateTriple, c: StateTriple, n_y: int | None = None) -> StateTriple:
    """Symmetric trilinear form obtained by polarising :func:`C0_diag`."""
    for x in (a, b, c):
        if not x.lat.same_as(lat):
            raise FieldError("argument lives on a different lattice")
    if a is b and b is c:
        return C0_diag(lat, law, beta0, a, n_y)

    def cube(x):
        return C0_diag(lat, law, beta0, x, n_y)

    total = (cube(a + b + c) - cube(a + b) - cube(a + c) - cube(b + c)
             + cube(a) + cube(b) + cube(c))
    return total * (1.0 / 6.0)


# ---------------------------------------------------------------------------
# branch coefficients
# ---------------------------------------------------------------------------

def kernel_vector(lat: Lattice, cp: CriticalPoint) -> StateTriple:
    """The symmetric kernel element ``v0 = v e1``."""
    return StateTriple.from_vector(cp.v, e1_field(lat))


class BranchSolver:
    """Caches the intermediate quantities of one branch computation.

    Parameters
    ----------
    lat : Lattice
        Must have ``lat.omega == cp.omega``.
    law : MagnetizationLaw or LawConstants
    beta0 : float
    cp : CriticalPoint, optional
        Computed from ``beta0`` and ``law`` when omitted.
    n_y : int, optional
        Collocation points for both strips.
    """

    def __init__(self, lat: Lattice, law, beta0: float, cp: CriticalPoint | None = None,
                 n_y: int | None = None):
        self.law = law
        self.consts = _consts(law)
        self.beta0 = beta0
        self.cp = cp if cp is not None else critical_point(beta0, self.consts)
        if not np.isclose(lat.omega, self.cp.omega, rtol=1e-12, atol=0.0):
            raise ValueError("lattice wavenumber must equal the critical wavenumber")
        self.lat = lat
        self.n_y = n_y
        self.v0 = kernel_vector(lat, self.cp)
        self.diagnostics: dict = {}
        self._Q00 = None
        self._w1 = None
        self._gamma1 = None

    # denominators -------------------------------------------------------
    @property
    def denominator(self) -> float:
        """``[L1 v0]_1 . v_star``."""
        return float(bracket(L1_apply(self.v0)) @ self.cp.v_star)

    @property
    def tol_trans(self) -> float:
        return 1e-8 * abs(self.denominator)

    def _check_denominator(self):
        den = self.denominator
        if not np.isfinite(den) or abs(den) < 1e-14 * max(1.0, np.abs(self.cp.v).max()):
            raise DegenerateTransversality(f"[L1 v0]_1 . v_star = {den!r}")
        return den

    # pieces -----------------------------------------------------------------
    def Q00(self) -> StateTriple:
        if self._Q00 is None:
            self._Q00 = Q0_diag(self.lat, self.consts, self.beta0, self.v0, self.n_y)
        return self._Q00

    def gamma1(self) -> float:
        if self._gamma1 is None:
            den = self._check_denominator()
            self._gamma1 = float(-(bracket(self.Q00()) @ self.cp.v_star) / den)
        return self._gamma1

    def solve_w1(self) -> StateTriple:
        if self._w1 is None:
            g1 = self.gamma1()
            rhs = -self.Q00() - L1_apply(self.v0) * g1
            Prhs = projection_P(self.lat, self.cp, rhs)
            self.diagnostics["P_rhs_w1"] = Prhs.sup_norm()
            rhs = rhs - Prhs
            flux = float(rhs.phi_up.mean)
            self.diagnostics["flux_defect_order2"] = abs(flux)
            rhs = StateTriple(rhs.eta, rhs.phi_up.without_mean(), rhs.phi_lo)
            w1 = resolvent_solve(self.lat, self.cp, rhs)
            check = apply_pencil(self.lat, self.cp, w1) - rhs
            self.diagnostics["w1_residual"] = check.sup_norm()
            self._w1 = w1
        return self._w1

    def gamma2(self, force: bool = False) -> float:
        g1 = self.gamma1()
        if abs(g1) > self.tol_trans and not force:
            raise WrongBranchType(f"gamma1 = {g1:.3e} does not vanish; the branch is transcritical")
        w1 = self.solve_w1()
        q = Q0_apply(self.lat, self.consts, self.beta0, self.cp, self.v0, w1, self.n_y)
        cub = C0_diag(self.lat, self.consts, self.beta0, self.v0, self.n_y)
        num = bracket(q * 2.0 + cub) @ self.cp.v_star
        return float(-num / self._check_denominator())


# functional interface ------------------------------------------------------

def gamma1(lat: Lattice, law, beta0: float, cp: CriticalPoint | None = None,
           n_y: int | None = None) -> float:
    return BranchSolver(lat, law, beta0, cp, n_y).gamma1()


def solve_w1(lat: Lattice, law, beta0: float, cp: CriticalPoint | None = None,
             n_y: int | None = None) -> StateTriple:
    return BranchSolver(lat, law, beta0, cp, n_y).solve_w1()


def gamma2(lat: Lattice, law, beta0: float, cp: CriticalPoint | None = None,
           n_y: int | None = None) -> float:
    return BranchSolver(lat, law, beta0, cp, n_y).gamma2()


# ---------------------------------------------------------------------------
# classification
# ---------------------------------------------------------------------------

@dataclass
class BranchResult:
    pattern: PatternKind
    beta0: float
    cp: CriticalPoint
    gamma1: float
    w1: StateTriple | None
    gamma2: float | None
    classification: BranchType
    diagnostics: dict = field(default_factory=dict)
    truncation: int = 4

    def to_dict(self) -> dict:
        return {
            "pattern": self.pattern.value,
            "beta0": self.beta0,
            "truncation": self.truncation,
            "critical_point": self.cp.to_dict(),
            "gamma1": self.gamma1,
            "gamma2": self.gamma2,
            "classification": self.classification.value,
            "w1": None if self.w1 is None else self.w1.to_dict(),
            "diagnostics": {k: (float(v) if isinstance(v, (int, float, np.floating)) else v)
                            for k, v in self.diagnostics.items()},
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_json(cls, text: str) -> "BranchResult":
        data = json.loads(text)
        pattern = PatternKind.parse(data["pattern"])
        cp = CriticalPoint.from_dict(data["critical_point"])
        lat = make_lattice(pattern, cp.omega, data["truncation"])
        w1 = None if data["w1"] is None else StateTriple.from_dict(lat, data["w1"])
        return cls(pattern, data["beta0"], cp, data["gamma1"], w1, data["gamma2"],
                   BranchType(data["classification"]), data["diagnostics"], data["truncation"])


def classify_branch(pattern, law, beta0: float | None = None, truncation: int = 4,
                    n_y: int | None = None, deep: bool = False) -> BranchResult:
    """Critical point, gamma1 and (if gamma1 vanishes) gamma2 with the branch type.

    ``pattern`` may be a pattern name, a :class:`PatternKind` or a lattice
    (whose pattern and truncation are then used).  With ``deep=True`` or
    ``beta0=None`` the infinite-depth limit is approximated at the inverse
    depth of :func:`deep_fluid_beta0`.  A finite ``beta0`` whose critical
    ``omega / beta0`` exceeds that cap is replaced by the capped value, since
    all hyperbolic factors have saturated there; the value actually used is
    reported as ``diagnostics['beta0_effective']``.
    """
    if isinstance(pattern, Lattice):
        truncation = pattern.truncation
        pattern = pattern.pattern
    pattern = PatternKind.parse(pattern)
    c = _consts(law)
    cap = DEEP_OMEGA_TILDE / min(1.0, c.S1)
    diagnostics = {}
    if deep or beta0 is None:
        beta_eff = deep_fluid_beta0(c)
    else:
        beta_eff = beta0
        cp = critical_point(beta0, c)
        if cp.omega_tilde > cap:
            beta_eff = deep_fluid_beta0(c)
            diagnostics["depth_capped"] = True
    cp = critical_point(beta_eff, c)
    diagnostics["beta0_effective"] = beta_eff
    lat = make_lattice(pattern, cp.omega, truncation)
    solver = BranchSolver(lat, c, beta_eff, cp, n_y)
    g1 = solver.gamma1()
    diagnostics["tol_trans"] = solver.tol_trans
    diagnostics["transversality"] = transversality(cp)
    diagnostics["kernel_residual"] = apply_pencil(lat, cp, solver.v0).sup_norm()
    w1 = solver.solve_w1()
    g2 = None
    if abs(g1) > solver.tol_trans:
        kind = BranchType.TRANSCRITICAL
    else:
        g2 = solver.gamma2()
        kind = BranchType.SUPERCRITICAL if g2 > 0 else BranchType.SUBCRITICAL
        if g2 == 0:
            diagnostics["gamma2_vanishes"] = True
    diagnostics.update(solver.diagnostics)
    return BranchResult(pattern, beta0 if beta0 is not None else beta_eff, cp, g1, w1, g2,
                        kind, diagnostics, truncation)


def branch_residual(lat: Lattice, law: MagnetizationLaw, result: BranchResult, s: float,
                    tol: float = 1e-13, n_y: int | None = None) -> float:
    """Sup norm of the full residual on the truncated branch at amplitude ``s``."""
    cp = result.cp
    beta0 = result.diagnostics.get("beta0_effective", result.beta0)
    v0 = kernel_vector(lat, cp)
    gamma = cp.gamma0 + s * result.gamma1 + s * s * (result.gamma2 or 0.0)
    state = v0 * s + result.w1 * (s * s)
    return residual(lat, law, beta0, gamma, state, tol=tol, n_y=n_y).sup_norm()
