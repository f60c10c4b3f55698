"""Command-line driver.

Subcommands
-----------
dimensionless   alpha, beta, gamma from physical inputs
dispersion      CSV of (kmag, r) with the maximum flagged
branch          JSON branch classification
signmap         CSV of gamma2 over a 2-D parameter grid
surface         CSV of the second-order surface (x, z, eta)

Settings are merged in the order: built-in defaults, ``--config`` file
(``key = value`` lines), environment variables ``FERROPATTERN_<KEY>``, and
finally explicit command-line flags.

Exit codes: 0 success, 1 I/O or unexpected error, 2 invalid argument,
3 no positive maximum of the dispersion relation, 4 solver convergence failure.
Machine-readable summaries go to stdout; diagnostics go to stderr.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .bifurcation import BranchResult, classify_branch, kernel_vector
from .dn_operators import ConvergenceError
from .lattice import PatternKind, make_lattice
from .linear_analysis import (NoPositiveMaximum, beta0_from_omega_tilde, critical_point,
                              dispersion_r, threshold_beta0)
from .magnetization import ConstantLaw, LangevinLaw, LawError, law_from_spec

log = logging.getLogger("ferropattern")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INVALID = 2
EXIT_NO_MAXIMUM = 3
EXIT_CONVERGENCE = 4

ENV_PREFIX = "FERROPATTERN_"
SURFACE_AMPLITUDE_MAX = 0.1
PHYSICAL_KEYS = ("rho", "rho_prime", "g", "d", "sigma", "mu0", "h")


class InvalidArgument(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass
class RunConfig:
    pattern: str = "rolls"
    law: str = "constant:mu=2"
    beta0: float | None = None
    rho: float | None = None
    rho_prime: float | None = None
    g: float | None = None
    d: float | None = None
    sigma: float | None = None
    mu0: float | None = None
    h: float | None = None
    truncation: int = 4
    ny: int | None = None
    out: str | None = None
    jobs: int = 1
    seed: int = 0
    deep: bool = False
    kmax: float | None = None
    samples: int = 400
    p1: str = "1.5:6:10"
    p2: str = "0.5:4:8"
    amplitude: float = 0.01
    n: int = 64
    extra: dict = field(default_factory=dict)

    @property
    def physical(self) -> dict:
        return {k: getattr(self, k) for k in PHYSICAL_KEYS if getattr(self, k) is not None}

    def validate(self, need_depth: bool = True):
        phys = self.physical
        if self.beta0 is not None and phys:
            raise InvalidArgument("give either beta0 or the physical inputs, not both")
        if phys and len(phys) != len(PHYSICAL_KEYS):
            missing = sorted(set(PHYSICAL_KEYS) - set(phys))
            raise InvalidArgument(f"incomplete physical inputs; missing {', '.join(missing)}")
        if need_depth and not self.deep and self.beta0 is None and not phys:
            raise InvalidArgument("one of --beta0, the physical inputs or --deep is required")
        if self.beta0 is not None and not self.beta0 > 0:
            raise InvalidArgument("beta0 must be positive")
        if self.truncation < 2:
            raise InvalidArgument("truncation must be at least 2")
        if self.ny is not None and self.ny < 8:
            raise InvalidArgument("ny must be at least 8")
        if self.jobs < 1:
            raise InvalidArgument("jobs must be at least 1")
        try:
            PatternKind.parse(self.pattern)
        except ValueError as exc:
            raise InvalidArgument(str(exc)) from None

    def resolved_beta0(self) -> float | None:
        if self.beta0 is not None:
            return self.beta0
        if self.physical:
            return dimensionless(**self.physical)["beta"]
        return None

    def make_law(self):
        try:
            return law_from_spec(self.law)
        except (LawError, ValueError, OSError) as exc:
            raise InvalidArgument(f"bad law spec {self.law!r}: {exc}") from None


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, value):
    if value is None:
        return None
    kind = _FIELD_TYPES.get(key, "str")
    text = str(value).strip()
    try:
        if kind == "bool":
            if isinstance(value, bool):
                return value
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if kind.startswith("int"):
            return int(text)
        if kind.startswith("float"):
            return float(text)
    except ValueError:
        raise InvalidArgument(f"invalid value for {key}: {value!r}") from None
    return text


def read_config_file(path) -> dict:
    """Parse a flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise InvalidArgument(f"cannot read config file {path}: {exc}") from None
    for number, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidArgument(f"{path}:{number}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_").lower()
        if key not in _FIELD_TYPES or key == "extra":
            raise InvalidArgument(f"{path}:{number}: unknown key {key!r}")
        out[key] = _coerce(key, value)
    return out


def read_environment(environ=None) -> dict:
    environ = os.environ if environ is None else environ
    out = {}
    for name, value in environ.items():
        if not name.startswith(ENV_PREFIX):
            continue
        key = name[len(ENV_PREFIX):].lower()
        if key in _FIELD_TYPES and key != "extra":
            out[key] = _coerce(key, value)
    return out


def build_config(args: argparse.Namespace, environ=None) -> RunConfig:
    merged = {}
    config_path = getattr(args, "config", None)
    if config_path:
        merged.update(read_config_file(config_path))
    merged.update(read_environment(environ))
    for key in _FIELD_TYPES:
        value = getattr(args, key, None)
        if value is not None and key != "extra":
            merged[key] = _coerce(key, value)
    return RunConfig(**merged)


# ---------------------------------------------------------------------------
# physics helpers used by the subcommands
# ---------------------------------------------------------------------------

def dimensionless(rho, rho_prime, g, d, sigma, mu0, h) -> dict:
    """``alpha = (rho - rho') g d / (mu0 h^2)``, ``beta = sigma / (mu0 h^2 d)``, ``gamma = alpha beta``."""
    values = dict(rho=rho, rho_prime=rho_prime, g=g, d=d, sigma=sigma, mu0=mu0, h=h)
    for key, value in values.items():
        if value is None or not float(value) > 0:
            raise InvalidArgument(f"{key} must be positive")
    if not rho > rho_prime:
        raise InvalidArgument("the magnetic fluid must be denser (rho > rho_prime)")
    alpha = (rho - rho_prime) * g * d / (mu0 * h * h)
    beta = sigma / (mu0 * h * h * d)
    return {"alpha": alpha, "beta": beta, "gamma": alpha * beta}


def parse_range(text: str) -> np.ndarray:
    """``start:stop:num`` (inclusive linspace) or a comma-separated list."""
    text = str(text).strip()
    if not text:
        return np.array([])
    try:
        if ":" in text:
            start, stop, num = text.split(":")
            return np.linspace(float(start), float(stop), int(num))
        return np.array([float(x) for x in text.split(",") if x.strip()])
    except ValueError:
        raise InvalidArgument(f"invalid range {text!r}; use start:stop:num or a list") from None


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        return "nan" if math.isnan(x) else f"{float(x):.17g}"
    return str(x)


def _open_out(path):
    if path is None or path == "-":
        return sys.stdout, False
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    return open(path, "w", newline=""), True


def _write_rows(path, header, rows):
    handle, close = _open_out(path)
    try:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(x) for x in row])
    finally:
        if close:
            handle.close()


def _summary(data: dict):
    print(json.dumps(data))


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_dimensionless(cfg: RunConfig) -> int:
    phys = cfg.physical
    if len(phys) != len(PHYSICAL_KEYS):
        missing = sorted(set(PHYSICAL_KEYS) - set(phys))
        raise InvalidArgument(f"missing physical inputs: {', '.join(missing)}")
    _summary(dimensionless(**phys))
    return EXIT_OK


def dispersion_rows(law, beta0: float, kmax: float | None = None, samples: int = 400):
    """Rows ``(kmag, r, flag)``; the maximiser is inserted and flagged if it exists."""
    c = law.constants()
    if kmax is None:
        kmax = max(1.0, 2.0 * c.mu1 * (c.mu1 - 1.0) ** 2 / (c.mu1 + c.S1))
    k = np.linspace(0.0, kmax, samples + 1)[1:]
    r = dispersion_r(k, beta0, c)
    rows = [(kk, rr, "") for kk, rr in zip(k, r)]
    try:
        cp = critical_point(beta0, c)
    except NoPositiveMaximum:
        return rows, None
    rows.append((cp.omega, cp.gamma0, "maximum"))
    rows.sort(key=lambda row: row[0])
    return rows, cp


def cmd_dispersion(cfg: RunConfig) -> int:
    cfg.validate()
    law = cfg.make_law()
    beta0 = cfg.resolved_beta0()
    if beta0 is None:
        raise InvalidArgument("dispersion needs a finite depth (beta0 or physical inputs)")
    rows, cp = dispersion_rows(law, beta0, cfg.kmax, cfg.samples)
    if cp is None:
        rows = [row[:2] + ("no-maximum",) if i == 0 else row for i, row in enumerate(rows)]
    _write_rows(cfg.out, ["kmag", "r", "flag"], rows)
    if cfg.out:
        _summary({"beta0": beta0, "threshold": threshold_beta0(law),
                  "omega": None if cp is None else cp.omega,
                  "gamma0": None if cp is None else cp.gamma0, "out": cfg.out})
    return EXIT_OK


def cmd_branch(cfg: RunConfig) -> int:
    cfg.validate()
    law = cfg.make_law()
    beta0 = cfg.resolved_beta0()
    result = classify_branch(cfg.pattern, law, beta0, truncation=cfg.truncation, n_y=cfg.ny,
                             deep=cfg.deep)
    text = result.to_json(indent=2)
    if cfg.out:
        Path(cfg.out).parent.mkdir(parents=True, exist_ok=True)
        Path(cfg.out).write_text(text)
        _summary({"classification": result.classification.value, "gamma1": result.gamma1,
                  "gamma2": result.gamma2, "out": cfg.out})
    else:
        print(text)
    return EXIT_OK


def _signmap_point(task):
    """Worker: gamma2 at one grid point; failures are returned as a reason string."""
    pattern, kind, p1, p2, beta0, deep, truncation, ny = task
    try:
        if kind == "constant":
            law = ConstantLaw(p1)
            beta = beta0_from_omega_tilde(p2, law)
            res = classify_branch(pattern, law, beta, truncation=truncation, n_y=ny)
        else:
            law = LangevinLaw(p1, p2)
            res = classify_branch(pattern, law, beta0, truncation=truncation, n_y=ny, deep=deep)
        g2 = res.gamma2
        if g2 is None:
            return (p1, p2, float("nan"), 0, "transcritical")
        return (p1, p2, g2, int(np.sign(g2)), "")
    except Exception as exc:  # recorded per point, the sweep goes on
        return (p1, p2, float("nan"), 0, f"{type(exc).__name__}: {exc}")


def signmap_rows(pattern, kind: str, p1, p2, beta0=None, deep=False, truncation=4, ny=None,
                 jobs: int = 1):
    tasks = [(pattern, kind, float(a), float(b), beta0, deep, truncation, ny)
             for a in p1 for b in p2]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_signmap_point, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    return [_signmap_point(t) for t in tasks]


def cmd_signmap(cfg: RunConfig) -> int:
    cfg.validate(need_depth=False)
    pattern = PatternKind.parse(cfg.pattern)
    if pattern is PatternKind.HEXAGONS:
        raise InvalidArgument("hexagon branches are transcritical; gamma2 maps apply to rolls and rectangles")
    kind = cfg.law.split(":", 1)[0].strip().lower()
    if kind not in ("constant", "langevin"):
        raise InvalidArgument("signmap sweeps constant (mu, omega_tilde) or langevin (M, gamma) laws")
    beta0 = cfg.resolved_beta0()
    if kind == "langevin" and beta0 is None and not cfg.deep:
        raise InvalidArgument("a Langevin sign map needs --beta0, physical inputs or --deep")
    p1, p2 = parse_range(cfg.p1), parse_range(cfg.p2)
    rows = signmap_rows(pattern.value, kind, p1, p2, beta0, cfg.deep, cfg.truncation, cfg.ny,
                        cfg.jobs)
    names = ("mu", "omega_tilde") if kind == "constant" else ("M", "gamma")
    _write_rows(cfg.out, [*names, "gamma2", "sign", "reason"], rows)
    failed = sum(1 for row in rows if row[4] and row[4] != "transcritical")
    if failed:
        log.warning("%d of %d grid points failed", failed, len(rows))
    if cfg.out:
        _summary({"points": len(rows), "failed": failed, "out": cfg.out})
    return EXIT_OK


def branch_surface(result: BranchResult, s: float):
    """Interface ``s eta(v0) + s^2 eta(w1)`` of the truncated branch."""
    lat = make_lattice(result.pattern, result.cp.omega, result.truncation)
    v0 = kernel_vector(lat, result.cp)
    return v0.eta * s + result.w1.eta * (s * s)


def cmd_surface(cfg: RunConfig) -> int:
    cfg.validate()
    if abs(cfg.amplitude) > SURFACE_AMPLITUDE_MAX:
        raise InvalidArgument(f"|amplitude| must not exceed {SURFACE_AMPLITUDE_MAX}")
    if cfg.n < 2:
        raise InvalidArgument("n must be at least 2")
    law = cfg.make_law()
    result = classify_branch(cfg.pattern, law, cfg.resolved_beta0(), truncation=cfg.truncation,
                             n_y=cfg.ny, deep=cfg.deep)
    eta = branch_surface(result, cfg.amplitude)
    lat = eta.lat
    a = np.arange(cfg.n) / cfg.n
    if lat.ndim == 1:
        A, B = np.meshgrid(a, a, indexing="ij")
        x = A * lat.l1[0]
        z = B * lat.l1[0]
    else:
        A, B = np.meshgrid(a, a, indexing="ij")
        x = A * lat.l1[0] + B * lat.l2[0]
        z = A * lat.l1[1] + B * lat.l2[1]
    values = eta.evaluate(x.ravel(), z.ravel())
    rows = zip(x.ravel(), z.ravel(), values)
    _write_rows(cfg.out, ["x", "z", "eta"], rows)
    if cfg.out:
        _summary({"classification": result.classification.value, "amplitude": cfg.amplitude,
                  "out": cfg.out})
    return EXIT_OK


COMMANDS = {
    "dimensionless": cmd_dimensionless,
    "dispersion": cmd_dispersion,
    "branch": cmd_branch,
    "signmap": cmd_signmap,
    "surface": cmd_surface,
}


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    add = common.add_argument
    add("--config", help="flat key = value settings file")
    add("--pattern", help="rolls, rectangles or hexagons")
    add("--law", help="constant:mu=2 | langevin:M=1,gamma=3 | custom-table:path=f.csv")
    add("--beta0", type=float, help="inverse depth")
    add("--truncation", type=int, help="largest retained Fourier index N")
    add("--ny", type=int, help="Chebyshev points per strip (default: automatic)")
    add("--out", help="output file (default: stdout)")
    add("--jobs", type=int, help="worker processes for sweeps")
    add("--seed", type=int, help="seed for randomised runs")
    add("--deep", action="store_const", const=True, default=None,
        help="approximate the infinite-depth limit")
    add("-v", "--verbose", action="store_true", help="log diagnostics to stderr")
    for key in PHYSICAL_KEYS:
        add("--" + key.replace("_", "-"), dest=key, type=float)

    parser = argparse.ArgumentParser(prog="ferropattern", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("dimensionless", parents=[common], help="alpha, beta, gamma from physical inputs")
    p = sub.add_parser("dispersion", parents=[common], help="dispersion curve CSV")
    p.add_argument("--kmax", type=float)
    p.add_argument("--samples", type=int)
    sub.add_parser("branch", parents=[common], help="branch classification JSON")
    p = sub.add_parser("signmap", parents=[common], help="sign map of gamma2 over a grid")
    p.add_argument("--p1", help="first parameter grid (mu or M), start:stop:num")
    p.add_argument("--p2", help="second parameter grid (omega_tilde or gamma)")
    p = sub.add_parser("surface", parents=[common], help="second-order surface CSV")
    p.add_argument("--amplitude", type=float)
    p.add_argument("--n", type=int)
    return parser


def main(argv=None, environ=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        stream=sys.stderr, format="%(levelname)s: %(message)s")
    try:
        cfg = build_config(args, environ)
        return COMMANDS[args.command](cfg)
    except InvalidArgument as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NoPositiveMaximum as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_MAXIMUM
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (LawError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
