import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from ferropattern import BranchResult, make_lattice
from ferropattern.cli import (EXIT_INVALID, EXIT_NO_MAXIMUM, EXIT_OK, InvalidArgument,
                              dimensionless, main, parse_range, read_config_file)

PHYS = dict(rho=1200.0, rho_prime=1.0, g=9.81, d=0.01, sigma=0.03, mu0=1.2566e-6, h=2000.0)


def phys_args(**over):
    vals = PHYS | over
    return [x for k, v in vals.items() for x in (f"--{k.replace('_', '-')}", str(v))]


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_dimensionless_numbers():
    base = dimensionless(**PHYS)
    assert np.isclose(base["gamma"], base["alpha"] * base["beta"])
    eq = dimensionless(**(PHYS | {"sigma": PHYS["mu0"] * PHYS["h"] ** 2 * PHYS["d"]}))
    assert np.isclose(eq["beta"], 1.0)
    doubled = dimensionless(**(PHYS | {"h": 2 * PHYS["h"]}))
    assert np.isclose(doubled["beta"], base["beta"] / 4)
    with pytest.raises(InvalidArgument):
        dimensionless(**(PHYS | {"sigma": 0.0}))
    with pytest.raises(InvalidArgument):
        dimensionless(**(PHYS | {"rho_prime": 2000.0}))


def test_dimensionless_command(capsys):
    assert main(["dimensionless", *phys_args()]) == EXIT_OK
    out = json.loads(capsys.readouterr().out)
    assert np.isclose(out["gamma"], out["alpha"] * out["beta"])
    assert main(["dimensionless", *phys_args(h=-1)]) == EXIT_INVALID


def test_parse_range():
    assert np.allclose(parse_range("1:2:3"), [1, 1.5, 2])
    assert np.allclose(parse_range("1, 4"), [1, 4])
    assert parse_range("").size == 0
    with pytest.raises(InvalidArgument):
        parse_range("a:b")


def test_dispersion_with_maximum(tmp_path):
    out = tmp_path / "disp.csv"
    assert main(["dispersion", "--law", "constant:mu=2", "--beta0", "0.3", "--out", str(out)]) == 0
    rows = read_csv(out)
    assert rows[0] == ["kmag", "r", "flag"]
    k = np.array([float(r[0]) for r in rows[1:]])
    assert np.all(np.diff(k) > 0)
    flagged = [r for r in rows[1:] if r[2] == "maximum"]
    assert len(flagged) == 1
    assert abs(float(rows[1][1])) < 1e-2 * float(flagged[0][1])


def test_dispersion_above_threshold(tmp_path):
    out = tmp_path / "disp.csv"
    assert main(["dispersion", "--law", "constant:mu=2", "--beta0", "0.7", "--out", str(out)]) == 0
    rows = read_csv(out)
    assert rows[1][2] == "no-maximum"
    assert all(float(r[1]) <= 0 for r in rows[1:])


def test_branch_hexagons(tmp_path, capsys):
    out = tmp_path / "b.json"
    code = main(["branch", "--pattern", "hexagons", "--law", "constant:mu=2", "--beta0", "0.1",
                 "--out", str(out)])
    assert code == EXIT_OK
    assert json.loads(capsys.readouterr().out)["classification"] == "Transcritical"
    res = BranchResult.from_json(out.read_text())
    # bit-identical scalars after a JSON round trip
    again = BranchResult.from_json(res.to_json())
    assert (again.gamma1, again.cp.omega, again.cp.gamma0) == (res.gamma1, res.cp.omega, res.cp.gamma0)


def test_branch_rolls_deep(capsys):
    assert main(["branch", "--pattern", "rolls", "--law", "constant:mu=5", "--deep"]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["classification"] == "Supercritical"


@pytest.mark.parametrize("argv", [
    ["branch", "--pattern", "pentagons", "--beta0", "0.1"],
    ["branch", "--law", "quadratic:a=1", "--beta0", "0.1"],
    ["branch", "--beta0", "-1"],
    ["branch"],
    ["branch", "--beta0", "0.1", *phys_args()],
    ["branch", "--bogus"],
])
def test_invalid_arguments(argv, capsys):
    assert main(argv) == EXIT_INVALID
    assert capsys.readouterr().err


def test_no_maximum_exit_code():
    assert main(["branch", "--law", "constant:mu=2", "--beta0", "0.9"]) == EXIT_NO_MAXIMUM


def test_config_file_and_environment(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment\npattern = rolls\nlaw = constant:mu=5\ndeep = true\n")
    assert read_config_file(cfg)["deep"] is True
    env = {"FERROPATTERN_PATTERN": "rectangles", "FERROPATTERN_LAW": "constant:mu=1.2"}
    assert main(["branch", "--config", str(cfg)], environ=env) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["pattern"] == "rectangles"
    # command-line arguments beat the environment
    assert main(["branch", "--config", str(cfg), "--pattern", "rolls"], environ=env) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["pattern"] == "rolls"


def test_signmap_constant_rolls(tmp_path):
    out = tmp_path / "map.csv"
    code = main(["signmap", "--pattern", "rolls", "--law", "constant", "--p1", "3,4",
                 "--p2", "20", "--out", str(out), "--jobs", "2"])
    assert code == EXIT_OK
    rows = read_csv(out)
    assert rows[0] == ["mu", "omega_tilde", "gamma2", "sign", "reason"]
    assert [int(r[3]) for r in rows[1:]] == [-1, 1]


def test_signmap_empty_grid(tmp_path):
    out = tmp_path / "map.csv"
    assert main(["signmap", "--law", "constant", "--p1", "", "--p2", "1", "--out", str(out)]) == 0
    assert read_csv(out) == [["mu", "omega_tilde", "gamma2", "sign", "reason"]]


def test_signmap_records_failures(tmp_path):
    out = tmp_path / "map.csv"
    code = main(["signmap", "--law", "langevin", "--beta0", "5", "--p1", "1", "--p2", "1",
                 "--out", str(out)])
    assert code == EXIT_OK
    row = read_csv(out)[1]
    assert row[2] == "nan" and "NoPositiveMaximum" in row[4]


def surface(tmp_path, *extra):
    out = tmp_path / "s.csv"
    assert main(["surface", "--out", str(out), "--n", "12", *extra]) == EXIT_OK
    return np.loadtxt(out, delimiter=",", skiprows=1)


def test_surface_flat_at_zero_amplitude(tmp_path):
    data = surface(tmp_path, "--law", "constant:mu=2", "--beta0", "0.2", "--amplitude", "0")
    assert np.all(data[:, 2] == 0)


def test_surface_rolls_independent_of_z(tmp_path):
    data = surface(tmp_path, "--law", "constant:mu=2", "--beta0", "0.2", "--amplitude", "0.05")
    grid = data[:, 2].reshape(12, 12)
    assert np.allclose(grid, grid[:, :1], atol=1e-14)
    assert np.ptp(grid) > 0


def test_surface_hexagons_rotation_invariant(tmp_path):
    args = ["--pattern", "hexagons", "--law", "constant:mu=2", "--beta0", "0.1",
            "--truncation", "3", "--amplitude", "0.01"]
    data = surface(tmp_path, *args)
    from ferropattern.bifurcation import classify_branch
    from ferropattern.cli import branch_surface
    from ferropattern import ConstantLaw
    eta = branch_surface(classify_branch("hexagons", ConstantLaw(2.0), 0.1, truncation=3), 0.01)
    x, z = data[:, 0], data[:, 1]
    assert np.allclose(eta.evaluate(x, z), data[:, 2], atol=1e-15)
    c, s = np.cos(np.pi / 3), np.sin(np.pi / 3)
    assert np.abs(eta.evaluate(c * x - s * z, s * x + c * z) - data[:, 2]).max() < 1e-8


def test_surface_amplitude_guard(tmp_path):
    out = tmp_path / "s.csv"
    assert main(["surface", "--beta0", "0.2", "--amplitude", "0.5", "--out", str(out)]) == EXIT_INVALID


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "ferropattern", "dimensionless", *phys_args()],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0 and "alpha" in proc.stdout
