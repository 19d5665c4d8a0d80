"""Command-line interface: fit, select, simulate, gof and diagnose workflows."""

from __future__ import annotations

import argparse
import configparser
import json
import math
import sys
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .copulas import DEFAULT_FAMILIES, NumericalFailure, get_family
from .data import DataError, OrdinalDataset, ingest_csv
from .diagnostics import DiagnosticError, diagnostics_table
from .estimate import DegenerateItemError, FitResult, fit
from .gof import DegreesOfFreedomError, m2
from .model import BIFACTOR, build_spec, equal_cutpoints, normalize_structure
from .quadrature import DEFAULT_NQ, gauss_legendre
from .select import SelectionError, select_families, vuong_interval
from .simulate import SimDesign, draw

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
COMMANDS = ("fit", "select", "simulate", "gof", "diagnose")


class UsageError(ValueError):
    pass


@dataclass
class RunConfig:
    structure: str = BIFACTOR
    groups: dict = field(default_factory=dict)
    families: tuple = ()
    nq: int = DEFAULT_NQ
    seed: int = 0
    code_offset: int = 0
    out: str = "."
    max_iter: int = 500
    n: int = 500
    categories: int = 5
    common_taus: tuple = ()
    group_taus: tuple = ()

    def echo(self) -> dict:
        return {"structure": self.structure, "groups": {k: list(v) for k, v in self.groups.items()},
                "families": list(self.families), "nq": self.nq, "seed": self.seed,
                "code_offset": self.code_offset, "max_iter": self.max_iter}


def _split(value: str) -> tuple:
    return tuple(x.strip() for x in value.replace(";", ",").split(",") if x.strip())


def load_config(path: str | Path | None) -> RunConfig:
    """Parse the key = value run configuration; a section header is optional."""
    cfg = RunConfig()
    if path is None:
        return cfg
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",),
                                       inline_comment_prefixes=("#",))
    parser.optionxform = str
    try:
        parser.read_string(text if text.lstrip().startswith("[") else "[run]\n" + text)
    except configparser.Error as exc:
        raise UsageError(f"malformed config {path}: {exc}") from exc
    items = {}
    for sec in parser.sections():
        items.update(parser.items(sec))
    groups = {}
    try:
        for key, value in items.items():
            k = key.strip()
            if k.startswith("groups."):
                groups[k[len("groups."):]] = _split(value)
            elif k == "structure":
                cfg.structure = normalize_structure(value)
            elif k == "families":
                cfg.families = _split(value)
            elif k in ("nq", "seed", "code_offset", "max_iter", "n", "categories"):
                setattr(cfg, k, int(value))
            elif k in ("common_taus", "group_taus"):
                setattr(cfg, k, tuple(float(x) for x in _split(value)))
            elif k == "out":
                cfg.out = value.strip()
            else:
                raise UsageError(f"unknown config key {k!r}")
    except ValueError as exc:
        if isinstance(exc, UsageError):
            raise
        raise UsageError(f"bad config value: {exc}") from exc
    cfg.groups = groups
    return cfg


def _families_for(cfg: RunConfig, G: int) -> list[str]:
    fams = list(cfg.families) or ["bvn"]
    if len(fams) == 1:
        fams = fams * (G + 1)
    if len(fams) != G + 1:
        raise UsageError(f"need 1 or {G + 1} families (X0 then one per group), got {len(fams)}")
    for f in fams:
        get_family(f)
    return fams


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


def _num(v):
    if isinstance(v, (float, np.floating)):
        return None if not math.isfinite(float(v)) else float(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, dict):
        return {str(k): _num(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_num(x) for x in v]
    return v


def write_report(out: Path, name: str, text: str, payload: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{name}.txt").write_text(text.rstrip() + "\n")
    (out / f"{name}.json").write_text(json.dumps(_num(payload), indent=2) + "\n")


def _header(command: str, cfg: RunConfig) -> list[str]:
    e = cfg.echo()
    lines = [f"# bifactor-copula {__version__} {command}"]
    for k in ("structure", "families", "nq", "seed", "code_offset", "max_iter"):
        v = e[k]
        lines.append(f"{k} = {','.join(v) if isinstance(v, list) else v}")
    for g, items in e["groups"].items():
        lines.append(f"groups.{g} = {','.join(items)}")
    return lines


def fit_table(res: FitResult, ds: OrdinalDataset) -> tuple[str, list]:
    """Estimates in Kendall's tau with SEs, one row per item."""
    spec = res.spec_hat
    est = res.estimates()
    theta = [r for r in est if r["kind"] == "theta"]
    delta = [r for r in est if r["kind"] == "delta"]
    group_of = np.repeat(np.arange(ds.G), ds.group_sizes)
    rows = []

    def cell(r):
        if not r["free"]:
            return f"{r['tau']:7.3f} (fixed)"
        se = r["se_tau"]
        return f"{r['tau']:7.3f} ({se:.3f})" if math.isfinite(se) else f"{r['tau']:7.3f} (  -  )"

    lines = [f"{'item':12s} {'group':8s} {'tau(theta)':>18s} {'tau(delta)':>18s}"]
    for j in range(ds.d):
        g = int(group_of[j])
        if spec.structure == BIFACTOR:
            dcell = cell(delta[j])
            drow = delta[j]
        else:
            dcell = cell(delta[g])
            drow = delta[g]
        lines.append(f"{ds.item_names[j]:12s} {ds.group_labels[g]:8s} {cell(theta[j]):>18s} {dcell:>18s}")
        rows.append({"item": ds.item_names[j], "group": ds.group_labels[g],
                     "theta": theta[j], "delta": drow})
    return "\n".join(lines), rows


def _fit_summary(res: FitResult) -> list[str]:
    return [f"loglik = {res.loglik:.4f}", f"aic = {res.aic:.4f}", f"free_params = {res.n_free}",
            f"iterations = {res.iterations}", f"converged = {res.converged}", f"message = {res.message}"]


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _load_data(args, cfg: RunConfig) -> OrdinalDataset:
    if not args.data:
        raise UsageError("--data is required for this command")
    ds = ingest_csv(args.data, cfg.groups or None, cfg.code_offset)
    if not cfg.groups:
        cfg.groups = {ds.group_labels[0]: ds.item_names}
    return ds


def cmd_fit(args, cfg, out):
    ds = _load_data(args, cfg)
    fams = _families_for(cfg, ds.G)
    cfg.families = tuple(fams)
    rule = gauss_legendre(cfg.nq)
    res = fit(ds, cfg.structure, fams, rule, max_iter=cfg.max_iter)
    table, rows = fit_table(res, ds)
    text = "\n".join(_header("fit", cfg) + [""] + _fit_summary(res) + ["", table])
    write_report(out, "fit", text, {"config": cfg.echo(), "loglik": res.loglik, "aic": res.aic,
                                    "free_params": res.n_free, "iterations": res.iterations,
                                    "converged": res.converged, "estimates": rows})
    return EXIT_OK if res.converged else EXIT_NUMERIC


def cmd_select(args, cfg, out):
    ds = _load_data(args, cfg)
    cands = tuple(dict.fromkeys(cfg.families)) or DEFAULT_FAMILIES
    cfg.families = cands
    rule = gauss_legendre(cfg.nq)
    trace = select_families(ds, cfg.structure, cands, rule, max_iter=cfg.max_iter)
    final = fit(ds, cfg.structure, trace.families, rule, max_iter=cfg.max_iter,
                start=trace.final.spec_hat)
    bvn = trace.start
    lo, hi = vuong_interval(bvn, final, ds, rule)
    table, rows = fit_table(final, ds)
    steps = [f"{'step':>4s} {'slot':>4s} {'candidate':>10s} {'aic':>14s}  chosen"]
    for r in trace.records():
        steps.append(f"{r['step']:4d} {r['slot']:4d} {r['candidate']:>10s} {r['aic']:14.3f}  {'*' if r['chosen'] else ''}")
    text = "\n".join(_header("select", cfg) + ["", f"selected = {','.join(trace.families)}",
                                                f"aic_all_bvn = {bvn.aic:.4f}"] + _fit_summary(final)
                     + [f"vuong_vs_all_bvn = ({lo:.4f}, {hi:.4f})", "", "\n".join(steps), "", table])
    write_report(out, "select", text, {
        "config": cfg.echo(), "selected": list(trace.families), "trace": trace.records(),
        "aic_all_bvn": bvn.aic, "aic": final.aic, "loglik": final.loglik, "converged": final.converged,
        "vuong_vs_all_bvn": [lo, hi], "estimates": rows})
    return EXIT_OK


def cmd_simulate(args, cfg, out):
    if not cfg.groups:
        raise UsageError("simulate needs groups.<name> = item,... entries in the config")
    sizes = [len(v) for v in cfg.groups.values()]
    G = len(sizes)
    fams = _families_for(cfg, G)
    cfg.families = tuple(fams)
    d = sum(sizes)
    ct = cfg.common_taus or (0.5,)
    gt = cfg.group_taus or (0.3,)
    spec = build_spec(cfg.structure, sizes, [equal_cutpoints(cfg.categories)] * d, fams,
                      common_taus=ct if len(ct) > 1 else ct[0], group_taus=gt if len(gt) > 1 else gt[0])
    names = [it for items in cfg.groups.values() for it in items]
    ds = draw(SimDesign(spec, cfg.n, cfg.seed), item_names=names)
    out.mkdir(parents=True, exist_ok=True)
    ds.to_csv(out / "data.csv", cfg.code_offset)
    text = "\n".join(_header("simulate", cfg) + [f"n = {cfg.n}", f"categories = {cfg.categories}",
                                                  f"data = {out / 'data.csv'}"])
    write_report(out, "simulate", text, {"config": cfg.echo(), "n": cfg.n, "categories": cfg.categories,
                                         "common_taus": list(ct), "group_taus": list(gt),
                                         "data": str(out / "data.csv")})
    return EXIT_OK


def cmd_gof(args, cfg, out):
    ds = _load_data(args, cfg)
    fams = _families_for(cfg, ds.G)
    cfg.families = tuple(fams)
    rule = gauss_legendre(cfg.nq)
    res = fit(ds, cfg.structure, fams, rule, max_iter=cfg.max_iter, compute_se=False)
    r = m2(res.spec_hat, ds, rule)
    disc = r.max_discrepancies
    lines = [f"m2 = {r.m2:.4f}", f"df = {r.df}", f"p_value = {r.p_value:.4g}", f"s = {r.s}", f"q = {r.q}"]
    if r.note:
        lines.append(f"note = {r.note}")
    dl = ["", "max deviation averages (n * max |p - pi|)"]
    labels = dict(zip([f"g{g + 1}" for g in range(ds.G)], ds.group_labels))
    for k, v in disc.within_group.items():
        dl.append(f"  within {labels.get(k, k):10s} {v:8.3f}")
    dl.append(f"  {'all pairs':17s} {disc.all_pairs:8.3f}")
    text = "\n".join(_header("gof", cfg) + [""] + _fit_summary(res) + [""] + lines + dl)
    payload = {"config": cfg.echo(), "fit": {"loglik": res.loglik, "aic": res.aic}, **r.to_dict()}
    write_report(out, "gof", text, payload)
    return EXIT_OK


def cmd_diagnose(args, cfg, out):
    ds = _load_data(args, cfg)
    fams = tuple(dict.fromkeys(cfg.families)) or DEFAULT_FAMILIES
    cfg.families = fams
    tab = diagnostics_table(ds, fams)
    text = "\n".join(_header("diagnose", cfg) + ["", tab.render()])
    write_report(out, "diagnose", text, {"config": cfg.echo(), **tab.to_dict()})
    return EXIT_OK


HANDLERS = {"fit": cmd_fit, "select": cmd_select, "simulate": cmd_simulate, "gof": cmd_gof,
            "diagnose": cmd_diagnose}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="bifactor-copula", description="Bi-factor and second-order copula models for ordinal items.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="key = value run configuration")
    p.add_argument("--data", help="CSV with a header row of item names and integer cells")
    p.add_argument("--out", help="output directory for reports")
    p.add_argument("--nq", type=int, help="quadrature points")
    p.add_argument("--seed", type=int, help="random seed")
    p.add_argument("--families", help="comma-separated families (fit/gof: X0 then groups; select: candidates)")
    p.add_argument("--structure", help="bifactor or secondorder")
    p.add_argument("--version", action="version", version=__version__)
    return p


def run(command: str, cfg: RunConfig, data: str | None = None) -> int:
    """Programmatic entry point; returns the exit status."""
    args = argparse.Namespace(data=data)
    out = Path(cfg.out)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return HANDLERS[command](args, cfg, out)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.structure:
            cfg.structure = normalize_structure(args.structure)
        if args.families:
            cfg.families = _split(args.families)
        if args.nq is not None:
            cfg.nq = args.nq
        if args.seed is not None:
            cfg.seed = args.seed
        if args.out:
            cfg.out = args.out
        if cfg.nq < 2:
            raise UsageError("nq must be at least 2")
        return run(args.command, cfg, args.data)
    except (DataError, DegenerateItemError, DiagnosticError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalFailure, DegreesOfFreedomError, SelectionError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (UsageError, ValueError, KeyError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
