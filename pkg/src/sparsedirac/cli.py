"""Command-line interface: JSON experiment configs in, CSV/JSON artifacts out.

Exit codes: 0 success, 1 validation failure, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import traceback
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from . import __version__
from .errors import ConfigurationError, SparseDiracError
from .potential import BumpPotential, potential_from_dict

COMMANDS = ("density", "construct", "concentration", "asymptotics", "channels", "validate")

DEFAULT_TOLERANCES = {
    "ode": 1e-10,
    "quadrature": 1e-10,
    "measure_rtol": 1e-8,
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description."""

    command: str
    potential: BumpPotential
    grid: dict | None = None
    k_list: tuple[int, ...] = (1,)
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    outputs: dict = field(default_factory=dict)
    seed: int = 0
    options: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    def kappa_grid(self) -> np.ndarray:
        g = self.grid
        k = np.linspace(g["min"], g["max"], int(g["count"]))
        return -k if g.get("sign") == "negative" else k


def _fail(field_name: str, message: str):
    raise ConfigurationError(f"{field_name}: {message}")


def _validate_grid(grid: Any) -> dict:
    if not isinstance(grid, Mapping):
        _fail("grid", "expected an object with min, max, count")
    try:
        lo, hi, count = float(grid["min"]), float(grid["max"]), int(grid["count"])
    except (KeyError, TypeError, ValueError) as exc:
        _fail("grid", f"needs numeric min, max, count ({exc})")
    sign = grid.get("sign", "positive")
    if sign not in ("positive", "negative"):
        _fail("grid", "sign must be 'positive' or 'negative'")
    if count < 2:
        _fail("grid", "count must be at least 2")
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi <= lo:
        _fail("grid", "need finite min < max")
    if lo <= 0 <= hi or lo == 0:
        _fail("grid", "grid must exclude kappa = 0")
    if lo < 0:
        _fail("grid", "give min/max as magnitudes and use sign='negative' for the lower branch")
    return {"min": lo, "max": hi, "count": count, "sign": sign}


def parse_config(source: str | os.PathLike | Mapping) -> ExperimentConfig:
    """Parse a config from a path, an inline JSON string or a mapping.

    Raises
    ------
    ConfigurationError
        On malformed JSON (with line and column) or invalid fields (named).
    """
    if isinstance(source, Mapping):
        raw = dict(source)
    else:
        text = str(source)
        if not text.lstrip().startswith("{"):
            path = Path(text)
            if not path.exists():
                _fail("config", f"file {text!r} does not exist")
            text = path.read_text(encoding="utf-8")
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config: malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(raw, dict):
        _fail("config", "top level must be an object")
    command = raw.get("command")
    if command not in COMMANDS:
        _fail("command", f"unknown command {command!r}; valid commands are {', '.join(COMMANDS)}")
    pot_raw = raw.get("potential", {"bumps": [], "distances": []})
    if isinstance(pot_raw, str):
        p = Path(pot_raw)
        if not p.exists():
            _fail("potential", f"file {pot_raw!r} does not exist")
        pot_raw = json.loads(p.read_text(encoding="utf-8"))
    try:
        potential = potential_from_dict(pot_raw)
    except SparseDiracError as exc:
        _fail("potential", str(exc))
    grid = None
    if "grid" in raw:
        grid = _validate_grid(raw["grid"])
    elif command in ("density", "channels"):
        _fail("grid", "required for this command")
    k_list = raw.get("k", raw.get("k_list", [1]))
    if isinstance(k_list, int):
        k_list = [k_list]
    if not all(isinstance(k, int) and k != 0 for k in k_list):
        _fail("k", "angular numbers must be nonzero integers")
    tol = dict(DEFAULT_TOLERANCES)
    for name, value in dict(raw.get("tolerances", {})).items():
        if not (isinstance(value, (int, float)) and value > 0):
            _fail("tolerances", f"{name} must be positive")
        tol[name] = float(value)
    seed = raw.get("seed", 0)
    if not isinstance(seed, int):
        _fail("seed", "must be an integer")
    options = dict(raw.get("options", {}))
    return ExperimentConfig(command, potential, grid, tuple(k_list), tol, dict(raw.get("outputs", {})), seed, options, raw)


# Artifact helpers --------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def write_csv(path: Path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, BumpPotential):
        return o.to_dict()
    return str(o)


def write_json(path: Path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, default=_json_default)
        fh.write("\n")


# Pipelines ------------------------------------------------------------------------


def _run_density(cfg: ExperimentConfig, out: Path, threads: int) -> list[str]:
    from .pruefer import lambda_of_kappa
    from .spectral import density_profile, regular_step_function

    k = cfg.kappa_grid()
    prod = density_profile(cfg.potential, k, "product", threads).density
    direct = density_profile(cfg.potential, k, "direct", threads).density
    lam = lambda_of_kappa(k)
    write_csv(out / "density.csv", ["kappa", "lambda", "density_product", "density_direct"], zip(k, lam, prod, direct))
    arts = ["density.csv"]
    reg = cfg.options.get("regular")
    if reg:
        from .pruefer import kappa_of_lambda

        steps = regular_step_function(cfg.potential, float(reg["b"]), tuple(reg["lambda_range"]))
        write_csv(out / "eigenvalues.csv", ["lambda", "kappa", "jump"], [(l, kappa_of_lambda(l), j) for l, j in steps])
        arts.append("eigenvalues.csv")
    return arts


def _construction_config(opts: Mapping):
    from .construction import ConstructionConfig, EpsilonSchedule, GrowthSchedule

    eps = EpsilonSchedule(**opts.get("epsilon", {}))
    growth = GrowthSchedule(**{k: (tuple(v) if k == "values" else v) for k, v in opts.get("growth", {}).items()})
    plain = {k: v for k, v in opts.items() if k not in ("epsilon", "growth", "density_grid")}
    if isinstance(plain.get("heights"), list):
        plain["heights"] = tuple(plain["heights"])
    try:
        return ConstructionConfig(epsilon=eps, growth=growth, **plain)
    except TypeError as exc:
        raise ConfigurationError(f"options: {exc}") from exc


def _run_construct(cfg: ExperimentConfig, out: Path, threads: int) -> list[str]:
    from .construction import build_pearson_sequence
    from .spectral import density_product
    from .pruefer import SpectralParam

    ccfg = _construction_config(cfg.options)
    result = build_pearson_sequence(ccfg)
    log = [st.to_json() for st in result.stages]
    write_json(out / "stages.json", log)
    write_json(out / "potential.json", result.potential.to_dict())
    arts = ["stages.json", "potential.json"]
    if cfg.grid is not None:
        k = cfg.kappa_grid()
        rows = []
        nu = 0
        for st in result.stages:
            nu = st.nu
            dens = density_product(result.potential.truncate(nu), SpectralParam.from_kappa(k))
            rows.extend((st.stage, kk, d) for kk, d in zip(k, dens))
        write_csv(out / "stage_densities.csv", ["stage", "kappa", "density"], rows)
        arts.append("stage_densities.csv")
    if result.failure is not None:
        raise result.failure
    return arts


def _run_concentration(cfg: ExperimentConfig, out: Path, threads: int) -> list[str]:
    from .construction import concentration_set, xi_interval, xi_measure

    stage = int(cfg.options.get("stage", 1))
    xi = xi_interval(stage)
    threshold = float(cfg.options.get("threshold", float(cfg.options.get("epsilon", 0.5)) / xi_measure(stage)))
    cs = concentration_set(cfg.potential, xi, threshold)
    write_json(
        out / "concentration.json",
        {
            "stage": stage,
            "xi": [list(c) for c in xi],
            "threshold": threshold,
            "s_measure": cs.measure,
            "intervals": [list(iv) for iv in cs.intervals],
            "mass_outside": cs.mass_outside,
            "retention_ok": cs.retention_ok,
        },
    )
    return ["concentration.json"]


def _run_asymptotics(cfg: ExperimentConfig, out: Path, threads: int) -> list[str]:
    from .coefficients import abc_asymptotic, abc_from_transfer, divergence_partial_sums, m_asymptotic
    from .odecore import bump_transfer
    from .potential import build_bump_potential, make_profile
    from .pruefer import lambda_of_kappa

    opts = cfg.options
    width = float(opts.get("width", 1.0))
    profile = make_profile(opts.get("profile", "rect"), width)
    kappa = float(opts.get("kappa", 1.0))
    lam = float(lambda_of_kappa(kappa))
    rows = []
    for H in opts.get("heights", [1e-1, 3e-2, 1e-2, 3e-3]):
        q = build_bump_potential([H], [profile], [1.0])
        c = abc_from_transfer(bump_transfer(q, 0, lam), lam)
        A_as, B_as, C_as = abc_asymptotic(profile, kappa, H)
        m_as = m_asymptotic(profile, kappa, H)
        rows.append((H, c.A, A_as, abs(c.A - A_as), c.m, m_as, abs(c.m - m_as)))
    write_csv(out / "asymptotics.csv", ["H", "A_numeric", "A_asymptotic", "A_error", "m_numeric", "m_asymptotic", "m_error"], rows)
    arts = ["asymptotics.csv"]
    n = int(opts.get("divergence_n", 0))
    if n:
        ns = sorted({int(x) for x in np.unique(np.geomspace(1, n, 25).astype(int))})
        heights = [1.0 / math.sqrt(j) for j in range(1, n + 1)]
        write_csv(
            out / "divergence.csv",
            ["n", "partial_sum"],
            [(m, divergence_partial_sums(heights, profile, kappa, m)) for m in ns],
        )
        arts.append("divergence.csv")
    return arts


def _run_channels(cfg: ExperimentConfig, out: Path, threads: int) -> list[str]:
    from .angular import Channel, density_k
    from .parallel import chunked_map
    from .pruefer import SpectralParam

    k = cfg.kappa_grid()
    p = SpectralParam.from_kappa(k)
    rows = []
    r_end = cfg.options.get("r_end")
    for kk in cfg.k_list:
        dens = chunked_map(lambda x: density_k(cfg.potential, SpectralParam.from_kappa(x), kk, r_end), k, threads, chunk=16)
        ch = Channel(kk, p)
        rows.extend(zip([kk] * k.size, k, dens, np.broadcast_to(ch.c_bound, k.shape), np.broadcast_to(ch.c_tilde_bound, k.shape)))
    write_csv(out / "channels.csv", ["k", "kappa", "density", "c_bound", "c_tilde_bound"], rows)
    return ["channels.csv"]


class ValidationFailed(Exception):
    pass


def _run_validate(cfg: ExperimentConfig, out: Path, threads: int) -> list[str]:
    from .validation import run_suite

    results = run_suite(cfg.seed)
    width = max(len(r.name) for r in results)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name.ljust(width)}  {r.detail}")
    write_json(out / "validate.json", [asdict(r) for r in results])
    if not all(r.passed for r in results):
        raise ValidationFailed("one or more invariant checks failed")
    return ["validate.json"]


PIPELINES = {
    "density": _run_density,
    "construct": _run_construct,
    "concentration": _run_concentration,
    "asymptotics": _run_asymptotics,
    "channels": _run_channels,
    "validate": _run_validate,
}


def run(cfg: ExperimentConfig, out_dir: str | os.PathLike = ".", threads: int = 1) -> int:
    """Execute the configured pipeline and write a manifest; returns the exit status."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "tool": "sparsedirac",
        "version": __version__,
        "command": cfg.command,
        "config": cfg.raw,
        "resolved": {
            "potential": cfg.potential.to_dict(),
            "grid": cfg.grid,
            "k": list(cfg.k_list),
            "tolerances": cfg.tolerances,
            "seed": cfg.seed,
            "options": cfg.options,
        },
        "threads": threads,
        "artifacts": [],
    }
    status = 0
    try:
        manifest["artifacts"] = PIPELINES[cfg.command](cfg, out, threads)
    except (ValidationFailed, ConfigurationError) as exc:
        status = 1
        manifest["error"] = str(exc)
    except (SparseDiracError, ArithmeticError, FloatingPointError) as exc:
        status = 2
        diag = {"error": type(exc).__name__, "message": str(exc), "traceback": traceback.format_exc()}
        for attr in ("best_distance", "best_gap"):
            if hasattr(exc, attr):
                diag[attr] = getattr(exc, attr)
        write_json(out / "diagnostic.json", diag)
        manifest["artifacts"].append("diagnostic.json")
        manifest["error"] = str(exc)
    manifest["status"] = status
    write_json(out / "manifest.json", manifest)
    return status


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sparsedirac", description=__doc__.splitlines()[0])
    p.add_argument("--config", required=True, help="path to a JSON config or an inline JSON object")
    p.add_argument("--out", default=".", help="output directory (created if missing)")
    p.add_argument("--threads", type=int, default=1, help="parallel width of grid sweeps")
    p.add_argument("--seed", type=int, default=None, help="seed for randomised suites (overrides the config)")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return 1
    try:
        cfg = parse_config(args.config)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_json(out / "manifest.json", {"tool": "sparsedirac", "version": __version__, "status": 1, "error": str(exc)})
        return 1
    if args.seed is not None:
        cfg = ExperimentConfig(**{**cfg.__dict__, "seed": args.seed})
    return run(cfg, args.out, args.threads)


if __name__ == "__main__":
    sys.exit(main())
