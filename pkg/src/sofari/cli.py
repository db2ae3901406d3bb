"""Command-line entry point: ``simulate``, ``fit``, ``infer`` and ``diagnose``.

Exit codes: 0 ok, 2 usage or configuration error, 3 runtime failure.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import platform
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .core import RegressionData
from .datagen import PRESETS, SimSetting, gen_instance, preset
from .debias import SofariConfig, diagnose_orthogonality, run_sofari
from .errors import SofariError
from .report import (bh_fdr, ci, coverage_run, coverage_tsv, kde_csv, kde_export,
                     pvalue_two_sided)
from .sofar import SofarConfig, fit_sofar

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    setting: int | dict | None = None
    reps: int = 200
    seed: int | None = None
    alpha: float = 0.05
    variant: str = "weak"
    rank: int | str = "auto"
    fdr: float = 0.05
    workers: int = 1
    out: str = "."
    lam: float | None = None
    max_iter: int = 200
    tol: float = 1e-7
    theta_const: float = 0.25
    delta: float = 2.0
    header: bool = False
    x: str | None = None
    y: str | None = None
    extra: dict = field(default_factory=dict)

    def validate(self, command: str):
        if not 0 < self.alpha < 1:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not 0 < self.fdr <= 1:
            raise ConfigError(f"fdr must lie in (0, 1], got {self.fdr}")
        if self.reps < 1:
            raise ConfigError(f"reps must be >= 1, got {self.reps}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.variant not in ("strong", "weak", "split", "auto"):
            raise ConfigError(f"unknown variant {self.variant!r}")
        if self.rank != "auto":
            min_rank = 1 if command == "fit" else 2
            if not isinstance(self.rank, int) or self.rank < min_rank:
                raise ConfigError(f"rank must be 'auto' or an integer >= {min_rank}")
        if self.lam is not None and self.lam < 0:
            raise ConfigError("lambda must be non-negative")
        if self.max_iter < 1 or self.tol <= 0 or self.theta_const <= 0 or self.delta < 0:
            raise ConfigError("max_iter >= 1, tol > 0, theta_const > 0 and delta >= 0 are required")
        if self.seed is not None and self.seed < 0:
            raise ConfigError("seed must be non-negative")

    def sofari_config(self) -> SofariConfig:
        sc = SofarConfig(rank=self.rank, lam=self.lam, max_iter=self.max_iter, tol=self.tol)
        return SofariConfig(sofar=sc, variant=self.variant, theta_const=self.theta_const,
                            delta=self.delta, split_seed=self.seed or 0)

    def sim_setting(self) -> SimSetting:
        seed = self.seed or 0
        try:
            if isinstance(self.setting, dict):
                return SimSetting.from_dict({**self.setting, "seed": seed})
            if self.setting is None:
                raise ConfigError("--setting is required")
            return preset(int(self.setting), seed=seed)
        except (ValueError, TypeError, SofariError) as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "extra"}
        return out


def _rank(text):
    if text == "auto":
        return "auto"
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"rank must be 'auto' or an integer, got {text!r}")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config; flags override its fields")
    common.add_argument("--seed", type=int)
    common.add_argument("--alpha", type=float)
    common.add_argument("--variant", choices=["strong", "weak", "split", "auto"])
    common.add_argument("--rank", type=_rank)
    common.add_argument("--fdr", type=float)
    common.add_argument("--workers", type=int)
    common.add_argument("--out", help="output directory")
    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--x", help="design CSV (rows are observations)")
    data.add_argument("--y", help="response CSV")
    data.add_argument("--header", action="store_true", default=None, help="CSVs start with a header row")

    p = _Parser(prog="sofari", description="Debiased inference for sparse SVD regression.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    s = sub.add_parser("simulate", parents=[common], help="Monte-Carlo coverage study")
    s.add_argument("--setting", type=int, choices=sorted(PRESETS))
    s.add_argument("--reps", type=int)
    sub.add_parser("fit", parents=[common, data], help="initial sparse SVD fit on CSV data")
    sub.add_parser("infer", parents=[common, data], help="confidence intervals and selections on CSV data")
    d = sub.add_parser("diagnose", parents=[common, data], help="cross-layer correlation report")
    d.add_argument("--setting", type=int, choices=sorted(PRESETS))
    return p


def load_config(args) -> RunConfig:
    cfg = {}
    if args.config:
        try:
            cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(cfg, dict):
            raise ConfigError("config must be a JSON object")
    if "lambda" in cfg:
        cfg["lam"] = cfg.pop("lambda")
    known = set(RunConfig.__dataclass_fields__) - {"extra"}
    unknown = set(cfg) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for key in ("setting", "reps", "seed", "alpha", "variant", "rank", "fdr", "workers", "out",
                "header", "x", "y"):
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    if cfg.get("seed") is None and os.environ.get("SOFARI_SEED"):
        try:
            cfg["seed"] = int(os.environ["SOFARI_SEED"])
        except ValueError as exc:
            raise ConfigError("SOFARI_SEED must be an integer") from exc
    try:
        rc = RunConfig(**cfg)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    return rc


def read_matrix(path, header=False) -> np.ndarray:
    """Parse a numeric comma-separated file; errors name the offending line."""
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise ConfigError(f"cannot open {path}: {exc}") from exc
    rows, width = [], None
    with fh:
        for lineno, rec in enumerate(csv.reader(fh), start=1):
            if header and lineno == 1:
                continue
            if not rec or all(not c.strip() for c in rec):
                continue
            if width is None:
                width = len(rec)
            elif len(rec) != width:
                raise ConfigError(f"{path}:{lineno}: expected {width} columns, found {len(rec)}")
            try:
                rows.append([float(c) for c in rec])
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: non-numeric entry ({exc})") from exc
    if not rows:
        raise ConfigError(f"{path}: no data rows")
    out = np.array(rows)
    if not np.all(np.isfinite(out)):
        raise ConfigError(f"{path}: non-finite entries")
    return out


def load_data(rc: RunConfig) -> RegressionData:
    if not rc.x or not rc.y:
        raise ConfigError("--x and --y are required")
    x = read_matrix(rc.x, rc.header)
    y = read_matrix(rc.y, rc.header)
    if x.shape[0] != y.shape[0]:
        raise ConfigError(f"row count mismatch: {rc.x} has {x.shape[0]} rows, {rc.y} has {y.shape[0]}")
    return RegressionData(x, y)


def provenance(rc: RunConfig, command: str) -> dict:
    return {
        "command": command,
        "config": rc.to_dict(),
        "seed": rc.seed or 0,
        "versions": {"sofari": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
    }


def _write_provenance(out: Path, prov: dict) -> str:
    text = json.dumps(prov, indent=2, sort_keys=True) + "\n"
    (out / "provenance.json").write_text(text)
    return f"# provenance: provenance.json sha256={hashlib.sha256(text.encode()).hexdigest()}\n"


def _outdir(rc) -> Path:
    out = Path(rc.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(rc: RunConfig) -> int:
    setting = rc.sim_setting()
    out = _outdir(rc)
    stamp = _write_provenance(out, provenance(rc, "simulate") | {"setting": setting.to_dict()})
    res = coverage_run(setting, rc.sofari_config(), rc.reps, rc.alpha, rc.workers)
    (out / "coverage.tsv").write_text(stamp + coverage_tsv(res))
    stats = res.stats()
    for i, comp in enumerate(res.components):
        col = stats[:, i]
        if np.isfinite(col).sum() == 0:
            continue
        grid, dens = kde_export(col, 401, -4.0, 4.0)
        name = comp.label.replace(",", "_")
        (out / f"kde_{name}.csv").write_text(stamp + kde_csv(grid, dens))
    print(f"{rc.reps} replications, {res.failed} with failed layers; wrote {out / 'coverage.tsv'}")
    return EXIT_OK


def cmd_fit(rc: RunConfig) -> int:
    data = load_data(rc)
    est = fit_sofar(data, rc.sofari_config().sofar)
    out = _outdir(rc)
    _write_provenance(out, provenance(rc, "fit"))
    t = est.triple
    rep = {"rank": t.r, "d": t.d.tolist(), "l": t.l.tolist(), "v": t.v.tolist(),
           "lambda": est.lambda_u, "iterations": est.iterations, "converged": est.converged,
           "provenance": "provenance.json"}
    (out / "fit.json").write_text(json.dumps(rep, indent=2) + "\n")
    print(f"rank {t.r}; d = {np.array2string(t.d, precision=4)}")
    return EXIT_OK


def infer_report(res, alpha: float, fdr: float) -> dict:
    n = res.data.n
    layers = []
    for L in res.layers:
        var = L.var_u
        t = np.where(var > 0, np.sqrt(n) * L.u_hat / np.sqrt(np.where(var > 0, var, 1.0)), np.nan)
        pv = np.where(np.isfinite(t), pvalue_two_sided(np.nan_to_num(t)), 1.0)
        sel = set(bh_fdr(pv, fdr))
        feats = []
        for j in range(L.u_hat.size):
            c = ci(L.u_hat[j], var[j], n, alpha) if var[j] > 0 else None
            feats.append({"j": j + 1, "u_hat": float(L.u_hat[j]),
                          "ci": [c.lower, c.upper] if c else None,
                          "pvalue": float(pv[j]), "selected": j in sel})
        dci = ci(L.d2_hat, L.var_d2, n, alpha) if L.var_d2 > 0 else None
        layers.append({"k": L.k + 1, "d2_hat": L.d2_hat, "d2_ci": [dci.lower, dci.upper] if dci else None,
                       "flags": list(L.flags), "features": feats})
    return {"variant": res.variant.value, "alpha": alpha, "fdr": fdr, "layers": layers,
            "failures": {str(k + 1): v for k, v in res.failures.items()},
            "provenance": "provenance.json"}


def cmd_infer(rc: RunConfig) -> int:
    data = load_data(rc)
    res = run_sofari(data, rc.sofari_config())
    out = _outdir(rc)
    _write_provenance(out, provenance(rc, "infer"))
    rep = infer_report(res, rc.alpha, rc.fdr)
    (out / "report.json").write_text(json.dumps(rep, indent=2) + "\n")
    for layer in rep["layers"]:
        n_sel = sum(f["selected"] for f in layer["features"])
        print(f"layer {layer['k']}: d2_hat = {layer['d2_hat']:.4f}, {n_sel} features selected")
    return EXIT_OK


def cmd_diagnose(rc: RunConfig) -> int:
    if rc.x or rc.y:
        data = load_data(rc)
        triple = fit_sofar(data, rc.sofari_config().sofar).triple
    else:
        sim = gen_instance(rc.sim_setting())
        data, triple = sim.data, sim.truth
    print("\n".join(diagnose_orthogonality(triple, data).lines()))
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "infer": cmd_infer, "diagnose": cmd_diagnose}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        rc = load_config(args)
        rc.validate(args.command)
        return COMMANDS[args.command](rc)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SofariError, np.linalg.LinAlgError, ValueError) as exc:
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
