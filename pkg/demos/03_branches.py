"""Which way do the patterns bifurcate?

Rolls and rectangles have ``gamma1 = 0`` by symmetry, so the sign of
``gamma2`` decides between super- and subcritical branches.  Hexagons
generally have ``gamma1 != 0`` and are transcritical.  The script also
locates the permeabilities at which deep-fluid rolls and rectangles switch
type, and writes a small surface sample through the command-line interface.

Run with ``python demos/03_branches.py``.
"""
import tempfile
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from ferropattern import ConstantLaw, LangevinLaw
from ferropattern.bifurcation import classify_branch
from ferropattern.cli import main

print("hexagons, mu = 2, beta0 = 0.1:")
hexa = classify_branch("hexagons", ConstantLaw(2.0), 0.1)
print(f"  gamma1 = {hexa.gamma1:.6g} -> {hexa.classification.value}")

print("Langevin law M = 1.5, gamma = 2 at beta0 = 0.2:")
for pattern in ("rolls", "rectangles"):
    res = classify_branch(pattern, LangevinLaw(1.5, 2.0), 0.2)
    print(f"  {pattern:10s}: gamma1 = {res.gamma1:.1e}, gamma2 = {res.gamma2:.6g} "
          f"-> {res.classification.value}")

print("deep fluid, constant mu: where gamma2 changes sign")
for pattern, lo, hi, exact in (("rolls", 3.0, 4.0, 21 / 11 + 8 / 11 * np.sqrt(5)),
                               ("rectangles", 1.2, 1.8, None)):
    mu_c = brentq(lambda m: classify_branch(pattern, ConstantLaw(m), deep=True).gamma2,
                  lo, hi, xtol=1e-8)
    note = "" if exact is None else f" (closed form {exact:.8f})"
    print(f"  {pattern:10s}: mu_c = {mu_c:.8f}{note}")

with tempfile.TemporaryDirectory() as tmp:
    out = Path(tmp) / "surface.csv"
    main(["surface", "--pattern", "hexagons", "--law", "constant:mu=2", "--beta0", "0.1",
          "--amplitude", "0.02", "--n", "32", "--out", str(out)])
    data = np.loadtxt(out, delimiter=",", skiprows=1)
    print(f"surface sample: {len(data)} points, eta in [{data[:, 2].min():.4f}, "
          f"{data[:, 2].max():.4f}]")
