"""How good is the third-order expansion of the Dirichlet-Neumann operators?

The interface flux is a nonlinear function of the surface elevation ``eta``
and the boundary potential.  The package evaluates it in two independent
ways: a recursive Taylor expansion up to third order, and a Newton-Krylov
solve of the full flattened boundary-value problem.  Halving the amplitude
should shrink their difference sixteenfold.

Run with ``python demos/02_dn_expansion.py``.
"""
import numpy as np

from ferropattern import LangevinLaw, SurfaceField, make_lattice
from ferropattern.dn_operators import nonlinear_dn, taylor_dn

rng = np.random.default_rng(1)
law = LangevinLaw(1.5, 2.0)
beta0 = 0.5
lat = make_lattice("hexagons", 1.0, 3)


def unit_random():
    f = SurfaceField.random(lat, rng, band=2)
    return f * (1.0 / f.sup_norm(64))


eta, phi = unit_random(), unit_random().without_mean()
for strip in ("lower", "upper"):
    expansion = taylor_dn(lat, law, beta0, strip, eta, phi, order=3)
    n_y = expansion.u_terms[0].n_y
    print(f"{strip} strip ({n_y} Chebyshev points)")
    previous = None
    for eps in (2e-2, 1e-2, 5e-3):
        exact = nonlinear_dn(lat, law, beta0, strip, eta * eps, phi * eps, tol=1e-13, n_y=n_y)
        err = (exact.G - expansion.G(eps)).sup_norm()
        ratio = "" if previous is None else f"   ratio {previous / err:6.2f}"
        print(f"  eps = {eps:.0e}: |G - G_1..3| = {err:.3e}  "
              f"(Newton steps {len(exact.history) - 1}){ratio}")
        previous = err
