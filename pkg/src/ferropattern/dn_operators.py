"""Dirichlet-Neumann operators of the lower (magnetic) and upper strips.

Both free-boundary potential problems are flattened onto fixed strips with
``y~ = (y - eta)/(1 + s beta0 eta)`` (``s = +1`` below the interface,
``s = -1`` above it).  In flattened variables the potential satisfies

    div J = 0,   J = mu_dag (grad(u + y) - F(eta, u)),

with ``u = Phi`` on ``y = 0`` and ``J_y = mu(1)`` on the far boundary.  The
upper strip is the special case ``mu = 1`` with the opposite orientation.

Three evaluators share one discretisation (Fourier in the horizontal
directions, Chebyshev-Lobatto collocation in ``y``):

* :func:`solve_order_one_lower`, the linear problem;
* :func:`taylor_dn_lower` / :func:`taylor_dn_upper`, which compute the
  homogeneous Taylor terms ``G_n, H_n`` (n <= 3) by solving one linear strip
  problem per order with the forcing built from truncated power-series
  arithmetic in the amplitude;
* :func:`nonlinear_dn`, a Newton-Krylov solve of the full problem.

Because the Taylor terms are the exact amplitude derivatives of the discrete
nonlinear problem, the two can be compared to rounding error.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import linalg
from scipy.sparse.linalg import LinearOperator, gmres

from .fields import (FieldError, Strip, SurfaceField, VolumeField, from_grid, strip_nodes,
                     to_grid)
from .lattice import Lattice
from .magnetization import LawConstants, MagnetizationLaw, nu_apply

__all__ = [
    "ConvergenceError",
    "UnsupportedOrder",
    "DNExpansion",
    "DNResult",
    "StripProblem",
    "auto_ny",
    "solve_order_one_lower",
    "taylor_dn_lower",
    "taylor_dn_upper",
    "taylor_dn",
    "nonlinear_dn",
]

MAX_ORDER = 3
AMPLITUDE_GUARD = 0.5
STAGNATION_FLOOR = 1e-10


class ConvergenceError(RuntimeError):
    """Newton iteration failed; ``residual`` holds the last residual norm."""

    def __init__(self, message: str, residual: float = float("nan"), history=None):
        super().__init__(message)
        self.residual = residual
        self.history = list(history or [])


class UnsupportedOrder(ValueError):
    pass


def auto_ny(lat: Lattice, beta0: float, S1: float = 1.0) -> int:
    """Collocation points needed to resolve the steepest profile in the strip.

    The fastest mode varies like ``exp(S1 |k|_max y)``; the count grows with the
    number of e-folds across the depth and has a floor of 32.
    """
    efolds = float(lat.kmag[lat.mask].max()) * max(1.0, S1) / beta0
    return int(min(256, max(32, math.ceil(0.5 * efolds) + 24)))


# ---------------------------------------------------------------------------
# truncated power series in the amplitude
# ---------------------------------------------------------------------------

def _smul(a: Sequence, b: Sequence, order: int) -> list:
    """Cauchy product of two series; entries may be ``None`` (zero)."""
    out = [None] * (order + 1)
    for i, ai in enumerate(a[: order + 1]):
        if ai is None:
            continue
        for j, bj in enumerate(b[: order + 1 - i]):
            if bj is None:
                continue
            term = ai * bj
            out[i + j] = term if out[i + j] is None else out[i + j] + term
    return out


def _sadd(*series, order: int) -> list:
    out = [None] * (order + 1)
    for s in series:
        for n, v in enumerate(s[: order + 1]):
            if v is None:
                continue
            out[n] = v if out[n] is None else out[n] + v
    return out


def _sscale(c, s: Sequence) -> list:
    return [None if v is None else c * v for v in s]


def _zero_if_none(v, like):
    return np.zeros_like(like) if v is None else v


def _compositions(n: int, parts: int):
    """Ordered tuples of ``parts`` positive integers summing to ``n``."""
    for cut in itertools.combinations(range(1, n), parts - 1):
        bounds = (0,) + cut + (n,)
        yield tuple(bounds[i + 1] - bounds[i] for i in range(parts))


# ---------------------------------------------------------------------------
# the strip problem
# ---------------------------------------------------------------------------

@dataclass
class StripProblem:
    """Discretised flattened problem for one strip.

    Parameters
    ----------
    lat : Lattice
    strip : Strip
    beta0 : float
        Inverse depth; the strip is ``(-1/beta0, 0)`` or ``(0, 1/beta0)``.
    consts : LawConstants
        Constants at ``s = 1`` (identity law ``mu = 1`` for the upper strip).
    mu_func : callable
        Pointwise ``mu(s)`` used by the nonlinear solve.
    n_y : int, optional
        Collocation points; chosen by :func:`auto_ny` if omitted.
    grid : int, optional
        Horizontal grid points per direction for pointwise products.
    """

    lat: Lattice
    strip: Strip
    beta0: float
    consts: LawConstants
    mu_func: Callable = None
    n_y: int | None = None
    grid: int | None = None
    _lu: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        if not self.beta0 > 0:
            raise ValueError("beta0 must be positive")
        if self.n_y is None:
            self.n_y = auto_ny(self.lat, self.beta0, self.consts.S1)
        if self.n_y < 8:
            raise ValueError("n_y must be at least 8")
        if self.grid is None:
            self.grid = self.lat.grid_size
        self.sign = 1.0 if self.strip is Strip.LOWER else -1.0
        self.depth = 1.0 / self.beta0
        self.y, self.Dy = strip_nodes(self.strip, self.depth, self.n_y)
        self.D2 = self.Dy @ self.Dy
        self.a = self.consts.S1 ** -2
        if self.mu_func is None:
            mu1 = self.consts.mu1
            self.mu_func = lambda s: np.full_like(s, mu1)
        # broadcast shapes
        self._yb = self.y.reshape((-1,) + (1,) * self.lat.ndim)
        self._kx, self._kz = self.lat.wavenumbers
        self._k2 = self.lat.kmag ** 2
        # modes sharing |k| share one factorisation; the key is only used for
        # grouping, the factorised operator uses the exact |k|^2 of the group
        groups = {}
        exact = {}
        scale = max(float(self._k2.max()), 1e-300)
        for idx in zip(*np.nonzero(self.lat.mask)):
            key = round(float(self._k2[idx]) / scale, 12)
            groups.setdefault(key, []).append(idx)
            exact.setdefault(key, float(self._k2[idx]))
        self._groups = {exact[k]: tuple(np.array(v).T) for k, v in groups.items()}

    # ---- linear solves ------------------------------------------------------
    def _factor(self, k2: float):
        if k2 not in self._lu:
            A = self.a * self.D2 - k2 * np.eye(self.n_y)
            A[0] = 0.0
            A[0, 0] = 1.0
            A[-1] = self.a * self.Dy[-1]
            self._lu[k2] = linalg.lu_factor(A)
        return self._lu[k2]

    def solve_linear(self, rhs: np.ndarray) -> np.ndarray:
        """Solve ``a u'' - |k|^2 u = rhs`` mode by mode.

        ``rhs`` has shape ``(n_y,) + lat.shape``; row 0 holds the Dirichlet
        value at the interface and the last row the value of ``a u'`` at the
        far boundary.
        """
        out = np.zeros(rhs.shape, dtype=complex)
        for k2, idx in self._groups.items():
            lu = self._factor(k2)
            b = rhs[(slice(None),) + idx]
            sol = linalg.lu_solve(lu, np.concatenate([b.real, b.imag], axis=1))
            half = b.shape[1]
            out[(slice(None),) + idx] = sol[:, :half] + 1j * sol[:, half:]
        return out

    # ---- spectral helpers ---------------------------------------------------
    def grid_of(self, coeffs: np.ndarray) -> np.ndarray:
        return to_grid(self.lat, coeffs, self.grid)

    def coeffs_of(self, values: np.ndarray) -> np.ndarray:
        return from_grid(self.lat, values)

    def gradient_grids(self, coeffs: np.ndarray):
        """Grid values of ``(u_x, u_y, u_z)`` from volume coefficients."""
        ux = self.grid_of(1j * self._kx * coeffs)
        uz = self.grid_of(1j * self._kz * coeffs) if self.lat.ndim == 2 else np.zeros_like(ux)
        uy = self.grid_of(np.tensordot(self.Dy, coeffs, axes=(1, 0)))
        return ux, uy, uz

    def divergence(self, Jx, Jy, Jz) -> np.ndarray:
        """Coefficients of ``div J`` from grid values of the flux."""
        cx = self.coeffs_of(Jx)
        cy = self.coeffs_of(Jy)
        out = 1j * self._kx * cx + np.tensordot(self.Dy, cy, axes=(1, 0))
        if self.lat.ndim == 2:
            out = out + 1j * self._kz * self.coeffs_of(Jz)
        return out

    def surface_grids(self, eta: SurfaceField):
        if not eta.lat.same_as(self.lat):
            raise FieldError("eta lives on a different lattice")
        e = eta.to_grid(self.grid)
        ex = eta.dx().to_grid(self.grid)
        ez = eta.dz().to_grid(self.grid) if self.lat.ndim == 2 else np.zeros_like(e)
        return e, ex, ez

    def check_amplitude(self, eta: SurfaceField):
        sup = self.beta0 * eta.sup_norm(self.grid)
        if sup >= AMPLITUDE_GUARD:
            raise ValueError(f"sup|beta0 eta| = {sup:.3g} exceeds the guard {AMPLITUDE_GUARD}")

    # ---- flux as an amplitude series -----------------------------------------
    def flux_series(self, eta: SurfaceField, u_series: list, order: int, pointwise_mu=None):
        """Flux, DN value and trace derivative as power series in the amplitude.

        ``u_series[n]`` holds the volume coefficients of ``u^n`` (``None`` for
        zero).  Returns ``(Jx, Jy, Jz, G, H)`` where each entry is a list of
        grid arrays indexed by order.  When ``pointwise_mu`` is given, the
        series has order 0 only and the exact law is applied pointwise.
        """
        s = self.sign
        b0 = self.beta0
        e, ex, ez = self.surface_grids(eta)
        Y = self._yb
        shape = (self.n_y,) + (self.grid,) * self.lat.ndim
        zero = np.zeros(shape)

        grads = [self.gradient_grids(c) if c is not None else None for c in u_series]
        ux = [g[0] if g is not None else None for g in grads]
        uy = [g[1] if g is not None else None for g in grads]
        uz = [g[2] if g is not None else None for g in grads]

        if pointwise_mu is not None:
            # full nonlinear evaluation: everything is "order 0"
            return self._flux_pointwise(e, ex, ez, ux[0], uy[0], uz[0], pointwise_mu)

        be = [None, s * b0 * e]                       # s beta0 eta
        Ex, Ez = [None, ex], [None, ez]
        grad2 = [None, None, ex * ex + ez * ez]
        recip = [np.ones(e.shape)] + [(-s * b0 * e) ** j for j in range(1, order + 1)]
        wy = 1.0 + s * b0 * Y

        F1 = _sadd(_sscale(-1.0, _smul(be, ux, order)), _sscale(wy, _smul(Ex, uy, order)), order=order)
        F2 = _sadd(_sscale(-1.0, _smul(be, uz, order)), _sscale(wy, _smul(Ez, uy, order)), order=order)
        Ruy = _smul(recip, uy, order)
        F3 = _sadd(_smul(be, Ruy, order),
                   _sscale(wy, _sadd(_smul(Ex, ux, order), _smul(Ez, uz, order), order=order)),
                   _sscale(-wy * wy, _smul(grad2, Ruy, order)), order=order)

        Vx = _sadd(ux, _sscale(-1.0, F1), order=order)
        Vz = _sadd(uz, _sscale(-1.0, F2), order=order)
        Vy0 = _sadd(uy, _sscale(-1.0, F3), order=order)        # u_y - F3
        Tx = _smul(recip, Vx, order)
        Tz = _smul(recip, Vz, order)
        Ty = Ruy

        mu = [self.consts.mu1 * np.ones(shape)] + [None] * order
        for n in range(1, order + 1):
            acc = None
            for j in range(1, min(n, 3) + 1):
                for comp in _compositions(n, j):
                    if any(Tx[h] is None and Ty[h] is None and Tz[h] is None for h in comp):
                        continue
                    args = [(_zero_if_none(Tx[h], zero), _zero_if_none(Ty[h], zero),
                             _zero_if_none(Tz[h], zero)) for h in comp]
                    val = nu_apply(self.consts, j, *args)
                    acc = val if acc is None else acc + val
            mu[n] = acc

        Vy = list(Vy0)
        Vy[0] = np.ones(shape) if Vy[0] is None else Vy[0] + 1.0
        Jx = _smul(mu, Vx, order)
        Jy = _smul(mu, Vy, order)
        Jz = _smul(mu, Vz, order)
        Gser = _smul(mu, Vy0, order)
        if s < 0:
            Gser = _sscale(-1.0, Gser)
        G = [None if g is None else g[0] for g in Gser]
        H = [None if h is None else h[0] for h in Ruy]
        return Jx, Jy, Jz, G, H

    def _flux_pointwise(self, e, ex, ez, ux, uy, uz, mu_func):
        s = self.sign
        b0 = self.beta0
        wy = 1.0 + s * b0 * self._yb
        den = 1.0 + s * b0 * e
        F1 = -s * b0 * e * ux + wy * ex * uy
        F2 = -s * b0 * e * uz + wy * ez * uy
        grad2 = ex * ex + ez * ez
        F3 = s * b0 * e * uy / den + wy * (ex * ux + ez * uz) - wy * wy * grad2 * uy / den
        Tx, Ty, Tz = (ux - F1) / den, uy / den, (uz - F2) / den
        mu = mu_func(np.sqrt(Tx * Tx + (Ty + 1.0) ** 2 + Tz * Tz))
        Jx = mu * (ux - F1)
        Jy = mu * (uy + 1.0 - F3)
        Jz = mu * (uz - F2)
        G = mu[0] * (uy[0] - F3[0])
        if s < 0:
            G = -G
        H = uy[0] / den
        return Jx, Jy, Jz, G, H

    # ---- Taylor recursion -------------------------------------------------
    def taylor(self, eta: SurfaceField, phi: SurfaceField, order: int):
        """Volume terms ``u^1..u^order`` and the surface terms of G and H."""
        if not 1 <= order <= MAX_ORDER:
            raise UnsupportedOrder(f"Taylor order must be 1..{MAX_ORDER}, got {order}")
        if not phi.lat.same_as(self.lat):
            raise FieldError("Phi lives on a different lattice")
        mu1 = self.consts.mu1
        u = [None] * (order + 1)
        for n in range(1, order + 1):
            if n == 1:
                rhs = np.zeros((self.n_y,) + self.lat.shape, dtype=complex)
                rhs[0] = phi.coeffs
            else:
                Jx, Jy, Jz, _, _ = self.flux_series(eta, u, n)
                rhs = -self.divergence(Jx[n], Jy[n], Jz[n]) / mu1
                rhs[0] = 0.0
                rhs[-1] = -self.coeffs_of(Jy[n])[-1] / mu1
            u[n] = self.solve_linear(rhs)
        _, _, _, G, H = self.flux_series(eta, u, order)
        Gs = [SurfaceField.zeros(self.lat)] + [
            SurfaceField.from_grid(self.lat, g) if g is not None else SurfaceField.zeros(self.lat)
            for g in G[1:]]
        Hs = [SurfaceField.zeros(self.lat)] + [
            SurfaceField.from_grid(self.lat, h) if h is not None else SurfaceField.zeros(self.lat)
            for h in H[1:]]
        vols = [VolumeField(self.lat, self.strip, self.depth, c) for c in u[1:]]
        return vols, Gs, Hs

    # ---- nonlinear problem ------------------------------------------------
    def _split(self, vec: np.ndarray) -> np.ndarray:
        return vec.reshape((self.n_y,) + (self.grid,) * self.lat.ndim)

    def residual(self, ugrid: np.ndarray, eta: SurfaceField, phi: SurfaceField) -> np.ndarray:
        """Grid residual of the discrete nonlinear problem (scaled by 1/mu(1))."""
        mu1 = self.consts.mu1
        c = self.coeffs_of(ugrid)
        Jx, Jy, Jz, _, _ = self.flux_series(eta, [c], 0, pointwise_mu=self.mu_func)
        res = self.divergence(Jx, Jy, Jz) / mu1
        res[0] = c[0] - phi.coeffs
        res[-1] = (self.coeffs_of(Jy)[-1] - mu1 * self._unit()) / mu1
        return self.grid_of(res) + (ugrid - self.grid_of(c))

    def _unit(self) -> np.ndarray:
        one = np.zeros(self.lat.shape, dtype=complex)
        one[self.lat.origin] = 1.0
        return one

    def precondition(self, rgrid: np.ndarray) -> np.ndarray:
        rc = self.coeffs_of(rgrid)
        return self.grid_of(self.solve_linear(rc)) + (rgrid - self.grid_of(rc))

    def solve_nonlinear(self, eta: SurfaceField, phi: SurfaceField, tol: float = 1e-11,
                        max_iter: int = 40):
        self.check_amplitude(eta)
        rhs = np.zeros((self.n_y,) + self.lat.shape, dtype=complex)
        rhs[0] = phi.coeffs
        u = self.grid_of(self.solve_linear(rhs))
        size = u.size
        history = []
        eps = np.sqrt(np.finfo(float).eps)

        def F(v):
            return self.residual(self._split(v), eta, phi).ravel()

        x = u.ravel().copy()
        r = F(x)
        for it in range(max_iter + 1):
            rnorm = float(np.abs(r).max())
            history.append(rnorm)
            if rnorm < tol:
                break
            # rounding floor: no further progress although already tiny
            if (len(history) >= 3 and rnorm < STAGNATION_FLOOR
                    and rnorm > 0.5 * history[-2] and history[-2] > 0.5 * history[-3]):
                break
            if it == max_iter:
                raise ConvergenceError(
                    f"Newton did not converge in {max_iter} iterations (residual {rnorm:.3e})",
                    rnorm, history)

            def jvp(v, x=x, r=r):
                nv = np.abs(v).max()
                if nv == 0:
                    return np.zeros_like(v)
                h = eps * max(1.0, np.abs(x).max()) / nv
                return (F(x + h * v) - r) / h

            A = LinearOperator((size, size), matvec=jvp, dtype=float)
            Minv = LinearOperator((size, size),
                                  matvec=lambda v: self.precondition(self._split(v)).ravel(),
                                  dtype=float)
            dx, info = gmres(A, -r, M=Minv, rtol=1e-10, atol=0.1 * tol, restart=40, maxiter=5)
            x = x + dx
            r = F(x)
        ugrid = self._split(x)
        c = self.coeffs_of(ugrid)
        _, _, _, G, H = self.flux_series(eta, [c], 0, pointwise_mu=self.mu_func)
        vol = VolumeField(self.lat, self.strip, self.depth, c)
        return (SurfaceField.from_grid(self.lat, G), SurfaceField.from_grid(self.lat, H), vol,
                history, (G, H))


# ---------------------------------------------------------------------------
# public API
# ---------------------------------------------------------------------------

_IDENTITY = LawConstants(1.0, 0.0, 0.0, 0.0)


@dataclass
class DNExpansion:
    """Homogeneous Taylor terms of a DN operator.

    ``G_terms[n]`` and ``H_terms[n]`` are the n-homogeneous parts (index 0 is
    the zero field); ``u_terms[n-1]`` is the volume term ``u^n``.
    """

    order: int
    G_terms: list
    H_terms: list
    strip: Strip
    u_terms: list = field(default_factory=list, repr=False)

    def G(self, eps: float = 1.0, upto: int | None = None) -> SurfaceField:
        """Partial sum ``sum_n eps^n G_n``."""
        upto = self.order if upto is None else upto
        out = SurfaceField.zeros(self.G_terms[0].lat)
        for n in range(1, upto + 1):
            out = out + self.G_terms[n] * eps**n
        return out

    def H(self, eps: float = 1.0, upto: int | None = None) -> SurfaceField:
        upto = self.order if upto is None else upto
        out = SurfaceField.zeros(self.H_terms[0].lat)
        for n in range(1, upto + 1):
            out = out + self.H_terms[n] * eps**n
        return out


@dataclass
class DNResult:
    """Output of :func:`nonlinear_dn`.

    ``G_grid`` and ``H_grid`` are the untruncated values on the horizontal
    solver grid; pointwise nonlinearities built from them keep the discrete
    flux balance of the solve exact.
    """

    G: SurfaceField
    H: SurfaceField
    u: VolumeField
    history: list
    G_grid: np.ndarray | None = field(default=None, repr=False)
    H_grid: np.ndarray | None = field(default=None, repr=False)

    def __iter__(self):
        # allows ``G, H = nonlinear_dn(...)``
        return iter((self.G, self.H))


def _constants(law) -> LawConstants:
    if isinstance(law, LawConstants):
        return law
    return law.constants()


def _problem(lat, law, beta0, strip, n_y=None, grid=None) -> StripProblem:
    strip = Strip(strip) if not isinstance(strip, Strip) else strip
    if strip is Strip.UPPER:
        return StripProblem(lat, strip, beta0, _IDENTITY, None, n_y, grid)
    consts = _constants(law)
    mu_func = None
    if isinstance(law, MagnetizationLaw):
        mu_func = lambda s: np.asarray(law.mu(s), dtype=float)
    return StripProblem(lat, strip, beta0, consts, mu_func, n_y, grid)


def solve_order_one_lower(lat: Lattice, law, beta0: float, Phi: SurfaceField,
                          n_y: int | None = None) -> VolumeField:
    """Linear lower-strip potential ``u^1`` with trace ``Phi`` and no bottom flux."""
    prob = _problem(lat, law, beta0, Strip.LOWER, n_y)
    rhs = np.zeros((prob.n_y,) + lat.shape, dtype=complex)
    rhs[0] = Phi.coeffs
    return VolumeField(lat, Strip.LOWER, prob.depth, prob.solve_linear(rhs))


def taylor_dn(lat, law, beta0, strip, eta, phi, order=3, n_y=None, grid=None) -> DNExpansion:
    prob = _problem(lat, law, beta0, strip, n_y, grid)
    vols, G, H = prob.taylor(eta, phi, order)
    return DNExpansion(order, G, H, prob.strip, vols)


def taylor_dn_lower(lat: Lattice, law, beta0: float, eta: SurfaceField, Phi: SurfaceField,
                    order: int = 3, n_y: int | None = None, grid: int | None = None) -> DNExpansion:
    """Taylor terms ``G_n(eta, Phi)``, ``H_n(eta, Phi)`` of the magnetic strip, n <= order."""
    return taylor_dn(lat, law, beta0, Strip.LOWER, eta, Phi, order, n_y, grid)


def taylor_dn_upper(lat: Lattice, beta0: float, eta: SurfaceField, PhiPrime: SurfaceField,
                    order: int = 3, n_y: int | None = None, grid: int | None = None) -> DNExpansion:
    """Taylor terms ``G'_n``, ``H'_n`` of the non-magnetic strip (independent of the law)."""
    return taylor_dn(lat, None, beta0, Strip.UPPER, eta, PhiPrime, order, n_y, grid)


def nonlinear_dn(lat: Lattice, law, beta0: float, strip, eta: SurfaceField,
                 phi_boundary: SurfaceField, tol: float = 1e-11, n_y: int | None = None,
                 grid: int | None = None, max_iter: int = 40) -> DNResult:
    """Full nonlinear DN operator by Newton-Krylov iteration.

    Returns ``DNResult(G, H, u, history)``.  For the upper strip ``law`` is
    ignored and the outputs are ``G'`` and ``H'``.
    """
    prob = _problem(lat, law, beta0, strip, n_y, grid)
    G, H, vol, hist, (Gg, Hg) = prob.solve_nonlinear(eta, phi_boundary, tol, max_iter)
    return DNResult(G, H, vol, hist, Gg, Hg)
