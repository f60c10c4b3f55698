"""Where does the flat surface lose stability?

For a fixed magnetisation law and inverse depth ``beta0`` the linearised
problem is a 3x3 matrix per wavenumber.  The value of the bifurcation
parameter at which it becomes singular defines the curve ``r(|k|)``; its
positive maximum is the critical point ``(omega, gamma0)``.

Run with ``python demos/01_linear_threshold.py``.
"""
import numpy as np

from ferropattern import ConstantLaw, LangevinLaw, make_lattice
from ferropattern.fields import symmetrize
from ferropattern.lattice import dual_vectors_of_length
from ferropattern.linear_analysis import (NoPositiveMaximum, critical_point, dispersion_r,
                                          kernel_basis, threshold_beta0)

law = ConstantLaw(2.0)
print(f"constant mu = 2: a positive maximum exists for beta0 < {threshold_beta0(law):.6f}")
for beta0 in (0.1, 0.4, 0.7):
    try:
        cp = critical_point(beta0, law)
        print(f"  beta0 = {beta0}: omega = {cp.omega:.6f}, gamma0 = {cp.gamma0:.6f}")
    except NoPositiveMaximum:
        print(f"  beta0 = {beta0}: r(|k|) <= 0 everywhere, the flat surface stays stable")

# A few samples of the curve itself; the CLI writes the full table as CSV.
k = np.array([0.05, 0.2, 0.4, 0.8, 1.6])
print("  r(|k|) at beta0 = 0.4:", np.array2string(dispersion_r(k, 0.4, law), precision=4))

# A nonlinear law: the slope of mu at s = 1 makes the medium anisotropic.
lang = LangevinLaw(1.5, 2.0)
c = lang.constants()
beta0 = 0.3 * threshold_beta0(lang)
cp = critical_point(beta0, lang)
print(f"\nLangevin M = 1.5, gamma = 2: mu1 = {c.mu1:.5f}, S1 = {c.S1:.5f}")
print(f"  beta0 = {beta0:.5f}: omega = {cp.omega:.6f}, gamma0 = {cp.gamma0:.6f}")
print(f"  null vector v = {np.array2string(cp.v, precision=5)}")

# Each lattice sees 2, 4 or 6 critical wavevectors; averaging over the
# rotation group leaves a single kernel direction.
for pattern in ("rolls", "rectangles", "hexagons"):
    lat = make_lattice(pattern, cp.omega, 4)
    ring = dual_vectors_of_length(lat, cp.omega)
    sym = np.array([symmetrize(b).stacked().ravel() for b in kernel_basis(lat, cp)])
    print(f"  {pattern:10s}: {len(ring)} critical wavevectors, "
          f"symmetric kernel dimension {np.linalg.matrix_rank(sym, tol=1e-10)}")
