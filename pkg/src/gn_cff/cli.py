"""Command-line front end: ``evaluate``, ``sweep`` and ``validate``.

Exit codes: 0 pass, 1 acceptance failure, 2 oracle non-convergence, 64 bad
configuration (nothing is computed in that case).
"""
from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .closed_form import (cff_combined, cff_generalized, cff_high_loss, cff_incoherent,
                          cff_single_span, validity_report)
from .model import fiber_from_engineering, link_from_engineering, spectrum_from_engineering
from .oracle import Domain, OracleConfig, gn_numeric
from .validation import (SweepGrid, check_acceptance, error_db, run_sweep, write_plot_files,
                         write_report_csv)

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_NONCONVERGED = 2
EXIT_CONFIG = 64

DEFAULT_THRESHOLD_DB = 0.5

# section -> key -> kind; "list" values are comma-separated
CONFIG_SCHEMA = {
    "fiber": {"loss_db_per_km": "float", "beta2_ps2_per_km": "float", "gamma_per_w_km": "float"},
    "link": {"span_km": "float", "n_spans": "int"},
    "spectrum": {"bandwidth_thz": "float", "psd_w_per_thz": "float"},
    "grid": {"loss_db_per_km": "floats", "loss_min_db_per_km": "float",
             "loss_max_db_per_km": "float", "loss_points": "int", "span_km": "floats",
             "n_spans": "ints", "workers": "int"},
    "oracle": {"domain": "str", "rel_tol": "float", "max_evals": "int", "threshold_db": "float"},
}

# flag -> (dest, section, key); in sweep/validate the link/loss flags address the grid
OVERRIDES = (
    ("--loss-db-km", "loss_db_km", "fiber", "loss_db_per_km"),
    ("--span-km", "span_km", "link", "span_km"),
    ("--n-spans", "n_spans", "link", "n_spans"),
    ("--gamma", "gamma", "fiber", "gamma_per_w_km"),
    ("--beta2", "beta2", "fiber", "beta2_ps2_per_km"),
    ("--bandwidth-thz", "bandwidth_thz", "spectrum", "bandwidth_thz"),
    ("--psd-w-per-thz", "psd_w_per_thz", "spectrum", "psd_w_per_thz"),
)
ORACLE_FLAGS = (
    ("--domain", "domain", "oracle", "domain"),
    ("--rel-tol", "rel_tol", "oracle", "rel_tol"),
    ("--max-evals", "max_evals", "oracle", "max_evals"),
    ("--threshold-db", "threshold_db", "oracle", "threshold_db"),
)
GRID_REDIRECT = {("fiber", "loss_db_per_km"): ("grid", "loss_db_per_km"),
                 ("link", "span_km"): ("grid", "span_km"),
                 ("link", "n_spans"): ("grid", "n_spans")}


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: config error: {message}\n")


def _convert(section: str, key: str, raw: str):
    kind = CONFIG_SCHEMA[section][key]
    field = f"{section}.{key}"
    try:
        if kind == "float":
            v = float(raw)
            if not math.isfinite(v):
                raise ValueError
            return v
        if kind == "int":
            return int(raw)
        if kind == "str":
            return raw.strip()
        items = [s.strip() for s in raw.split(",") if s.strip()]
        if not items:
            raise ConfigError(f"{field}: empty list")
        conv = float if kind == "floats" else int
        values = tuple(conv(s) for s in items)
        if kind == "floats" and not all(math.isfinite(v) for v in values):
            raise ValueError
        return values
    except ValueError:
        raise ConfigError(f"{field}: cannot parse {raw!r} as {kind}") from None


def _read_config(path: Optional[str]) -> dict:
    values: dict = {s: {} for s in CONFIG_SCHEMA}
    if path is None:
        return values
    cp = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"--config: cannot read {path}: {exc.strerror}") from None
    except configparser.Error as exc:
        raise ConfigError(f"--config: {exc}") from None
    for section in cp.sections():
        if section not in CONFIG_SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        for key, raw in cp.items(section):
            if key not in CONFIG_SCHEMA[section]:
                raise ConfigError(f"unknown config field {section}.{key}")
            values[section][key] = _convert(section, key, raw)
    return values


@dataclass(frozen=True)
class RunConfig:
    command: str
    values: dict
    overrides: tuple
    config_path: Optional[str]

    def get(self, section, key, default=None):
        return self.values[section].get(key, default)

    def require(self, section, key, flag):
        if key not in self.values[section]:
            raise ConfigError(f"missing required field {section}.{key} "
                              f"(set it in [{section}] or pass {flag})")
        return self.values[section][key]

    @property
    def oracle(self) -> OracleConfig:
        defaults = OracleConfig()
        try:
            return OracleConfig(domain=self.get("oracle", "domain", defaults.domain.value),
                                rel_tol=self.get("oracle", "rel_tol", defaults.rel_tol),
                                max_evals=self.get("oracle", "max_evals", defaults.max_evals))
        except ValueError as exc:
            raise ConfigError(f"oracle: {exc}") from None

    @property
    def threshold_db(self) -> float:
        return self.get("oracle", "threshold_db", DEFAULT_THRESHOLD_DB)

    @property
    def workers(self) -> int:
        return self.get("grid", "workers", 1)

    def digest(self) -> str:
        # the worker count cannot change results, so it stays out of the hash
        values = {s: {k: v for k, v in kv.items() if (s, k) != ("grid", "workers")}
                  for s, kv in self.values.items()}
        blob = json.dumps({"command": self.command, "values": values}, sort_keys=True)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def preamble(self) -> list:
        o = self.oracle
        lines = [f"gn_cff {__version__}", f"command: {self.command}",
                 f"config_sha256: {self.digest()}",
                 f"config_file: {self.config_path if self.config_path else '-'}",
                 f"oracle: domain={o.domain.value} rel_tol={o.rel_tol!r} max_evals={o.max_evals}"]
        lines += [f"override: {flag} {raw}" for flag, raw in self.overrides]
        return lines


def resolve(args: argparse.Namespace) -> RunConfig:
    """Merge the config file with command-line overrides and validate everything."""
    values = _read_config(args.config)
    overrides = []
    sweeping = args.command in ("sweep", "validate")
    for flag, dest, section, key in OVERRIDES + ORACLE_FLAGS:
        raw = getattr(args, dest, None)
        if raw is None:
            continue
        overrides.append((flag, raw))
        if sweeping and (section, key) in GRID_REDIRECT:
            section, key = GRID_REDIRECT[(section, key)]
        values[section][key] = _convert(section, key, raw)
    if getattr(args, "workers", None) is not None:
        values["grid"]["workers"] = _convert("grid", "workers", args.workers)
    cfg = RunConfig(args.command, values, tuple(overrides), args.config)
    _ = cfg.oracle
    t = cfg.threshold_db
    if not t > 0.0:
        raise ConfigError(f"oracle.threshold_db: must be > 0, got {t!r}")
    if sweeping:
        build_grid(cfg)
        w = cfg.workers
        if w < 1:
            raise ConfigError(f"grid.workers: must be >= 1, got {w!r}")
        out = Path(args.out)
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"--out: cannot create {out}: {exc.strerror}") from None
        if not out.is_dir():
            raise ConfigError(f"--out: {out} is not a directory")
    else:
        build_point(cfg)
    return cfg


def build_point(cfg: RunConfig):
    try:
        fiber = fiber_from_engineering(cfg.require("fiber", "loss_db_per_km", "--loss-db-km"),
                                       cfg.require("fiber", "beta2_ps2_per_km", "--beta2"),
                                       cfg.require("fiber", "gamma_per_w_km", "--gamma"))
        link = link_from_engineering(cfg.require("link", "span_km", "--span-km"),
                                     cfg.get("link", "n_spans", 1))
        spectrum = spectrum_from_engineering(cfg.get("spectrum", "bandwidth_thz", 5.0),
                                             cfg.get("spectrum", "psd_w_per_thz", 1.0))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return fiber, link, spectrum


def build_grid(cfg: RunConfig) -> SweepGrid:
    g = cfg.values["grid"]
    kwargs = {}
    if "loss_db_per_km" in g:
        kwargs["loss_db_per_km"] = g["loss_db_per_km"]
    elif {"loss_min_db_per_km", "loss_max_db_per_km", "loss_points"} & g.keys():
        lo = g.get("loss_min_db_per_km", 5e-4)
        hi = g.get("loss_max_db_per_km", 0.3)
        n = g.get("loss_points", 24)
        if not (0.0 < lo <= hi and n >= 1):
            raise ConfigError("grid: need 0 < loss_min_db_per_km <= loss_max_db_per_km and loss_points >= 1")
        kwargs["loss_db_per_km"] = tuple(float(v) for v in np.logspace(math.log10(lo), math.log10(hi), n))
    if "span_km" in g:
        kwargs["span_lengths_km"] = g["span_km"]
    if "n_spans" in g:
        kwargs["n_spans"] = g["n_spans"]
    f, s = cfg.values["fiber"], cfg.values["spectrum"]
    for name, section, key in (("gamma_per_w_km", f, "gamma_per_w_km"),
                               ("beta2_ps2_per_km", f, "beta2_ps2_per_km"),
                               ("bandwidth_thz", s, "bandwidth_thz"),
                               ("psd_w_per_thz", s, "psd_w_per_thz")):
        if key in section:
            kwargs[name] = section[key]
    try:
        return SweepGrid(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"grid: {exc}") from None


def _validity_dict(v) -> dict:
    return {"cond1_lhs": v.cond1_lhs, "cond1_holds": v.cond1_holds, "cond2_lhs": v.cond2_lhs,
            "cond2_holds": v.cond2_holds, "exp_neg_2aL": v.exp_neg_2aL}


def cmd_evaluate(cfg: RunConfig, args) -> tuple:
    fiber, link, spectrum = build_point(cfg)
    L = link.span_length
    estimates, notes = {}, []
    if fiber.alpha > 0.0:
        estimates["HighLoss8"] = cff_high_loss(fiber, L, spectrum).psd
    else:
        notes.append("HighLoss8 omitted: undefined for a lossless fiber (alpha = 0)")
    estimates["SingleSpan20"] = cff_single_span(fiber, L, spectrum).psd
    estimates["Generalized28"] = cff_generalized(fiber, link, spectrum).psd
    estimates["Incoherent29"] = cff_incoherent(fiber, link, spectrum).psd
    combined = cff_combined(fiber, link, spectrum)
    estimates["Combined30"] = combined.psd
    out = {
        "version": __version__,
        "inputs": {"loss_db_per_km": fiber.loss_db_per_km, "beta2_ps2_per_km": fiber.beta2_ps2_per_km,
                   "gamma_per_w_km": fiber.gamma_per_w_km, "span_km": L / 1e3,
                   "n_spans": link.num_spans, "bandwidth_thz": spectrum.b_wdm / 1e12,
                   "psd_w_per_thz": spectrum.g_wdm * 1e12},
        "estimates_w_per_hz": estimates,
        "combined": {"psd_w_per_hz": combined.psd, "branch": combined.branch.value},
        "validity": _validity_dict(validity_report(fiber, link, spectrum)),
        "notes": notes,
    }
    code = EXIT_OK
    if args.oracle:
        oc = cfg.oracle
        num = gn_numeric(fiber, link, spectrum, oc)
        out["oracle"] = {"domain": oc.domain.value, "psd_w_per_hz": num.psd,
                         "converged": num.quad.converged, "rel_tol_achieved": num.quad.rel_err,
                         "n_evals": num.quad.n_evals,
                         "error_db": error_db(combined.psd, num.psd) if num.psd > 0 else None}
        if not num.quad.converged:
            code = EXIT_NONCONVERGED
    if args.json:
        print(json.dumps(out, indent=2))
    else:
        print(_format_evaluate(out))
    return code, out


def _format_evaluate(out: dict) -> str:
    lines = ["inputs:"]
    lines += [f"  {k:<18} {v:g}" for k, v in out["inputs"].items()]
    lines.append("estimates [W/Hz]:")
    lines += [f"  {k:<18} {v:.17g}" for k, v in out["estimates_w_per_hz"].items()]
    lines.append(f"  branch             {out['combined']['branch']}")
    lines.append("validity:")
    lines += [f"  {k:<18} {v}" for k, v in out["validity"].items()]
    if "oracle" in out:
        o = out["oracle"]
        lines.append(f"oracle ({o['domain']}):")
        lines.append(f"  psd_w_per_hz       {o['psd_w_per_hz']:.17g}")
        if o["error_db"] is not None:
            lines.append(f"  error_db           {o['error_db']:.6f}")
        lines.append(f"  converged          {o['converged']}")
        lines.append(f"  rel_tol_achieved   {o['rel_tol_achieved']:.3e}")
    lines += [f"note: {n}" for n in out["notes"]]
    return "\n".join(lines)


def _run_and_write(cfg: RunConfig, out_dir: Path, progress: bool):
    grid = build_grid(cfg)

    def tick(row):
        if progress:
            print(f"{row.span_km:g} km x{row.n_spans} {row.loss_db_per_km:.4g} dB/km "
                  f"err={row.error_db:+.4f} dB", file=sys.stderr, flush=True)

    rows = run_sweep(grid, cfg.oracle, workers=cfg.workers, progress=tick)
    preamble = cfg.preamble()
    write_report_csv(rows, out_dir / "report.csv", preamble)
    write_plot_files(rows, out_dir, preamble)
    return rows


def cmd_sweep(cfg: RunConfig, args) -> tuple:
    rows = _run_and_write(cfg, Path(args.out), args.progress)
    bad = [list(r.point) for r in rows if not r.oracle_converged]
    if args.json:
        print(json.dumps({"version": __version__, "config_sha256": cfg.digest(), "rows": len(rows),
                          "nonconverged": bad, "report": str(Path(args.out) / "report.csv")}, indent=2))
    else:
        print(f"wrote {len(rows)} rows to {Path(args.out) / 'report.csv'}")
    if bad:
        print(f"oracle did not converge at {len(bad)} point(s): {bad}", file=sys.stderr)
        return EXIT_NONCONVERGED, rows
    return EXIT_OK, rows


def cmd_validate(cfg: RunConfig, args) -> tuple:
    out_dir = Path(args.out)
    rows = _run_and_write(cfg, out_dir, args.progress)
    summary = check_acceptance(rows, cfg.threshold_db)
    rel_tol = cfg.oracle.rel_tol
    lower_bound = [list(r.point) for r in rows
                   if r.oracle_converged and r.incoherent_psd > r.oracle_psd * (1 + 10 * rel_tol)]
    branches = sorted({r.branch for r in rows})
    doc = {"version": __version__, "config_sha256": cfg.digest(), **summary.to_dict(),
           "branches_selected": branches,
           "lower_bound_audit": {"passed": not lower_bound, "violations": lower_bound}}
    if summary.nonconverged:
        code = EXIT_NONCONVERGED
    else:
        code = EXIT_OK if summary.passed else EXIT_FAIL
    doc["exit_code"] = code
    text = json.dumps(doc, indent=2)
    (out_dir / "summary.json").write_text(text + "\n", encoding="utf-8")
    print(text)
    if summary.nonconverged:
        print(f"oracle did not converge at: {summary.nonconverged}", file=sys.stderr)
    return code, doc


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="INI file with [fiber] [link] [spectrum] [grid] [oracle]")
    common.add_argument("--json", action="store_true", help="machine-readable output")
    common.add_argument("--domain", choices=[d.value for d in Domain], help="oracle integration domain")
    common.add_argument("--rel-tol", metavar="X", help="oracle relative tolerance")
    common.add_argument("--max-evals", metavar="N", help="oracle evaluation budget per point")
    common.add_argument("--threshold-db", metavar="X", help="acceptance threshold (default 0.5)")
    for flag, dest, _, _ in OVERRIDES:
        common.add_argument(flag, dest=dest, metavar="V",
                            help="comma-separated list in sweep/validate" if dest in
                            ("loss_db_km", "span_km", "n_spans") else None)

    p = _Parser(prog="gn-cff", description="Closed-form GN-model NLI estimates and their validation.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    ev = sub.add_parser("evaluate", parents=[common], help="all closed-form estimates at one point")
    ev.add_argument("--oracle", action="store_true", help="also run the numerical oracle")
    for name, helptext in (("sweep", "grid sweep, writes report.csv and plot files"),
                           ("validate", "sweep plus the acceptance check, writes summary.json")):
        sp = sub.add_parser(name, parents=[common], help=helptext)
        sp.add_argument("--out", metavar="DIR", default=".", help="output directory")
        sp.add_argument("--workers", metavar="N", help="worker processes (output does not depend on it)")
        sp.add_argument("--progress", action="store_true", help="per-point progress on stderr")
    return p


COMMANDS = {"evaluate": cmd_evaluate, "sweep": cmd_sweep, "validate": cmd_validate}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve(args)
    except ConfigError as exc:
        print(f"gn-cff: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    code, _ = COMMANDS[args.command](cfg, args)
    return code


if __name__ == "__main__":
    sys.exit(main())
