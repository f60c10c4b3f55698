"""Magnetisation laws expressed through the relative permeability mu(s).

A law ``M = m(|H|) H/|H|`` enters the equations only through
``mu(s) = 1 + m(s)/s``, its derivatives at the reference field strength
``s = 1`` and the potential ``M(s) = int_0^s t mu(t) dt``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, interpolate, special

__all__ = [
    "LawError",
    "LawConstants",
    "MagnetizationLaw",
    "ConstantLaw",
    "LangevinLaw",
    "CallableLaw",
    "TabulatedLaw",
    "constants_at_one",
    "potential_M",
    "nu_apply",
    "richardson_derivatives",
    "law_from_spec",
]


class LawError(ValueError):
    """Raised for laws violating ellipticity or evaluated outside their domain."""


@dataclass(frozen=True)
class LawConstants:
    """Values of mu and its first three derivatives at s = 1."""

    mu1: float
    dmu1: float
    ddmu1: float
    dddmu1: float

    def __post_init__(self):
        if not self.mu1 + self.dmu1 > 0:
            raise LawError(
                f"ellipticity violated: mu(1) + mu'(1) = {self.mu1 + self.dmu1:.6g} <= 0")

    @property
    def S1(self) -> float:
        return math.sqrt(self.mu1 / (self.mu1 + self.dmu1))

    @property
    def is_constant(self) -> bool:
        return self.dmu1 == 0 and self.ddmu1 == 0 and self.dddmu1 == 0

    def as_tuple(self) -> tuple[float, float, float, float, float]:
        return self.mu1, self.dmu1, self.ddmu1, self.dddmu1, self.S1


def richardson_derivatives(f: Callable[[float], float], s: float, h: float = 1e-2,
                           levels: int = 4) -> tuple[float, float, float]:
    """First three derivatives of a scalar function by extrapolated central differences."""

    def stencil(step):
        fm2, fm1, f0, fp1, fp2 = (f(s + j * step) for j in (-2, -1, 0, 1, 2))
        d1 = (fp1 - fm1) / (2 * step)
        d2 = (fp1 - 2 * f0 + fm1) / step**2
        d3 = (fp2 - 2 * fp1 + 2 * fm1 - fm2) / (2 * step**3)
        return np.array([d1, d2, d3])

    # Each stencil has an error expansion in even powers of the step.
    table = [stencil(h / 2**i) for i in range(levels)]
    for order in range(1, levels):
        factor = 4.0**order
        table = [(factor * table[i + 1] - table[i]) / (factor - 1) for i in range(len(table) - 1)]
    d1, d2, d3 = table[0]
    return float(d1), float(d2), float(d3)


class MagnetizationLaw:
    """Base class; subclasses implement :meth:`mu` and may override the rest."""

    name = "law"

    def __init__(self, **parameters):
        self.parameters = dict(parameters)

    def mu(self, s):
        raise NotImplementedError

    def derivatives(self, s: float) -> tuple[float, float, float, float]:
        """``(mu, mu', mu'', mu''')`` at s; numerical unless overridden."""
        d1, d2, d3 = richardson_derivatives(self.mu, s, h=min(1e-2, 0.25 * s))
        return float(self.mu(s)), d1, d2, d3

    def potential(self, s: float) -> float:
        """``M(s) = int_0^s t mu(t) dt``."""
        if s < 0:
            raise LawError("potential M(s) requires s >= 0")
        if s == 0:
            return 0.0
        val, _ = integrate.quad(lambda t: t * self.mu(t), 0.0, s, epsabs=0.0, epsrel=1e-12,
                                limit=200)
        return float(val)

    def constants(self) -> LawConstants:
        return LawConstants(*self.derivatives(1.0))

    def __repr__(self) -> str:
        args = ", ".join(f"{k}={v!r}" for k, v in self.parameters.items())
        return f"{type(self).__name__}({args})"


class ConstantLaw(MagnetizationLaw):
    """Linear magnetisation law: mu is a constant (``mu = 1 + chi``)."""

    name = "constant"

    def __init__(self, mu: float):
        if not mu > 0:
            raise LawError("constant permeability must be positive")
        super().__init__(mu=float(mu))
        self.value = float(mu)

    def mu(self, s):
        return np.full_like(np.asarray(s, dtype=float), self.value)[()]

    def derivatives(self, s):
        return self.value, 0.0, 0.0, 0.0

    def potential(self, s):
        if s < 0:
            raise LawError("potential M(s) requires s >= 0")
        return 0.5 * self.value * s * s


# Maclaurin coefficients of g(x) = (coth x - 1/x)/x = sum_n c_n x^(2n).
_N_SERIES = 16
_G_SERIES = np.array([
    2.0 ** (2 * n) * special.bernoulli(2 * n)[2 * n] / math.factorial(2 * n)
    for n in range(1, _N_SERIES + 1)
])


def _langevin_g(x: np.ndarray, order: int) -> np.ndarray:
    """Derivative ``g^(order)(x)`` of ``g(x) = (coth x - 1/x)/x`` for x > 0."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = x < 1.0
    if np.any(small):
        xs = x[small]
        powers = 2 * np.arange(_N_SERIES)
        coef = _G_SERIES.copy()
        p = powers.astype(float)
        for _ in range(order):
            coef = coef * p
            p = p - 1
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = coef[:, None] * np.where(p[:, None] >= 0, xs[None, :] ** np.maximum(p, 0)[:, None], 0.0)
        out[small] = terms.sum(axis=0)
    big = ~small
    if np.any(big):
        xb = x[big]
        c = 1.0 / np.tanh(xb)
        c1 = 1.0 - c * c
        c2 = -2.0 * c * c1
        c3 = -2.0 * c1 * (1.0 - 3.0 * c * c)
        if order == 0:
            val = c / xb - 1.0 / xb**2
        elif order == 1:
            val = c1 / xb - c / xb**2 + 2.0 / xb**3
        elif order == 2:
            val = c2 / xb - 2 * c1 / xb**2 + 2 * c / xb**3 - 6.0 / xb**4
        elif order == 3:
            val = c3 / xb - 3 * c2 / xb**2 + 6 * c1 / xb**3 - 6 * c / xb**4 + 24.0 / xb**5
        else:
            raise ValueError("derivative order must be 0..3")
        out[big] = val
    return out


class LangevinLaw(MagnetizationLaw):
    """Langevin law ``mu(s) = 1 + (M/s)(coth(gamma s) - 1/(gamma s))``.

    ``M`` is the saturation magnetisation and ``gamma = 3 chi0 / M`` with chi0
    the initial susceptibility, so ``mu(0+) = 1 + M gamma / 3``.
    """

    name = "langevin"

    def __init__(self, M: float, gamma: float):
        if not (M > 0 and gamma > 0):
            raise LawError("Langevin parameters M and gamma must be positive")
        super().__init__(M=float(M), gamma=float(gamma))
        self.M = float(M)
        self.gamma = float(gamma)

    def mu(self, s):
        s = np.asarray(s, dtype=float)
        if np.any(s < 0):
            raise LawError("mu(s) is defined for s >= 0")
        # mu = 1 + M gamma g(gamma s), continuous at s = 0
        return (1.0 + self.M * self.gamma * _langevin_g(self.gamma * np.atleast_1d(s), 0)).reshape(s.shape)[()]

    def derivatives(self, s):
        x = np.atleast_1d(self.gamma * float(s))
        vals = [float(_langevin_g(x, j)[0]) * self.M * self.gamma ** (j + 1) for j in range(4)]
        vals[0] += 1.0
        return tuple(vals)

    def potential(self, s):
        if s < 0:
            raise LawError("potential M(s) requires s >= 0")
        x = self.gamma * s
        # int_0^s L(gamma t) dt = log(sinh(x)/x)/gamma
        if x < 1e-3:
            log_term = x * x / 6 - x**4 / 180 + x**6 / 2835
        elif x < 20:
            log_term = math.log(math.sinh(x) / x)
        else:
            log_term = x + math.log1p(-math.exp(-2 * x)) - math.log(2.0) - math.log(x)
        return 0.5 * s * s + self.M / self.gamma * log_term


class CallableLaw(MagnetizationLaw):
    """User-supplied mu(s); derivatives by Richardson-extrapolated differences."""

    name = "custom"

    def __init__(self, func: Callable[[float], float], label: str = "custom", **parameters):
        super().__init__(**parameters)
        self.func = func
        self.name = label

    def mu(self, s):
        return self.func(s)


class TabulatedLaw(MagnetizationLaw):
    """mu(s) from samples, interpolated by a monotone (PCHIP) cubic.

    Only C1 smoothness holds, so the second and third derivatives at s = 1 are
    those of the interpolant on its local cubic piece.
    """

    name = "custom-table"

    def __init__(self, s: Sequence[float], mu: Sequence[float]):
        s = np.asarray(s, dtype=float)
        mu = np.asarray(mu, dtype=float)
        if s.ndim != 1 or s.shape != mu.shape or s.size < 4:
            raise LawError("tabulated law needs at least 4 matching (s, mu) samples")
        order = np.argsort(s)
        s, mu = s[order], mu[order]
        if np.any(np.diff(s) <= 0):
            raise LawError("tabulated s values must be distinct")
        if not (s[0] <= 1.0 <= s[-1]):
            raise LawError("tabulated law must bracket s = 1")
        super().__init__(n_samples=int(s.size))
        self.s_samples, self.mu_samples = s, mu
        self._interp = interpolate.PchipInterpolator(s, mu, extrapolate=True)

    def mu(self, s):
        s_arr = np.asarray(s, dtype=float)
        out = self._interp(np.clip(s_arr, self.s_samples[0], None))
        return out[()] if np.ndim(out) == 0 else out

    def derivatives(self, s):
        return tuple(float(self._interp(s, nu=j)) for j in range(4))


def constants_at_one(law: MagnetizationLaw) -> LawConstants:
    """mu and its first three derivatives at s = 1; raises LawError if not elliptic."""
    return law.constants()


def potential_M(law: MagnetizationLaw, s: float) -> float:
    if s < 0:
        raise LawError("potential M(s) requires s >= 0")
    return law.potential(s)


def nu_apply(consts: LawConstants | MagnetizationLaw, j: int, *args):
    """Symmetric j-linear Taylor coefficient of ``nu(T) = mu(|T + e_y|)`` at T = 0.

    Each argument is a 3-vector ``(T_x, T_y, T_z)``; the components may be
    arrays, in which case the result is evaluated pointwise.  With
    ``sigma = |T + e_y| - 1 = T_y + |T_h|^2/2 - T_y |T_h|^2/2 + O(|T|^4)``
    (``T_h`` the horizontal part) the coefficients are

    * ``nu^0 = mu1``
    * ``nu^1(A) = mu1' A_y``
    * ``nu^2(A, B) = (mu1'/2) A_h.B_h + (mu1''/2) A_y B_y``
    * ``nu^3(A, B, C) = (mu1'' - mu1')/6 * (A_y B_h.C_h + B_y A_h.C_h + C_y A_h.B_h)
      + (mu1'''/6) A_y B_y C_y``
    """
    if isinstance(consts, MagnetizationLaw):
        consts = consts.constants()
    if j not in (0, 1, 2, 3):
        raise NotImplementedError(f"nu^{j} is not supported (orders 0..3 only)")
    if len(args) != j:
        raise ValueError(f"nu^{j} takes exactly {j} arguments, got {len(args)}")
    mu1, d1, d2, d3 = consts.mu1, consts.dmu1, consts.ddmu1, consts.dddmu1
    if j == 0:
        return mu1
    if j == 1:
        (a,) = args
        return d1 * a[1]
    if j == 2:
        a, b = args
        return 0.5 * d1 * (a[0] * b[0] + a[2] * b[2]) + 0.5 * d2 * a[1] * b[1]
    a, b, c = args

    def hdot(p, q):
        return p[0] * q[0] + p[2] * q[2]

    mixed = a[1] * hdot(b, c) + b[1] * hdot(a, c) + c[1] * hdot(a, b)
    return (d2 - d1) / 6.0 * mixed + d3 / 6.0 * a[1] * b[1] * c[1]


@dataclass
class _SpecParts:
    kind: str
    params: dict = field(default_factory=dict)


def _parse_law_spec(spec: str) -> _SpecParts:
    kind, _, rest = spec.partition(":")
    params = {}
    for item in filter(None, (p.strip() for p in rest.split(","))):
        key, eq, value = item.partition("=")
        if not eq:
            raise LawError(f"malformed law parameter {item!r} (expected key=value)")
        params[key.strip()] = value.strip()
    return _SpecParts(kind.strip().lower(), params)


def law_from_spec(spec: str) -> MagnetizationLaw:
    """Parse ``constant:mu=2``, ``langevin:M=1,gamma=3`` or ``custom-table:path=f.csv``.

    A tabulated law file holds two comma-separated columns ``s, mu`` (a header
    line is allowed).
    """
    parts = _parse_law_spec(spec)
    try:
        if parts.kind in ("constant", "linear"):
            if "mu" in parts.params:
                return ConstantLaw(float(parts.params["mu"]))
            return ConstantLaw(1.0 + float(parts.params["chi"]))
        if parts.kind == "langevin":
            if "chi0" in parts.params:
                M = float(parts.params["M"])
                return LangevinLaw(M, 3 * float(parts.params["chi0"]) / M)
            return LangevinLaw(float(parts.params["M"]), float(parts.params["gamma"]))
        if parts.kind in ("custom-table", "table"):
            data = np.genfromtxt(parts.params["path"], delimiter=",", comments="#")
            data = data[~np.isnan(data).any(axis=1)]
            return TabulatedLaw(data[:, 0], data[:, 1])
    except KeyError as exc:
        raise LawError(f"law {parts.kind!r} is missing parameter {exc.args[0]!r}") from None
    raise LawError(f"unknown law kind {parts.kind!r}")
