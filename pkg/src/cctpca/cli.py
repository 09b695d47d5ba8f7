"""Command-line entry point: ``cctpca {powerflow,cct,rank,mc,compare}``.

Exit codes: 0 success, 1 analysis failure, 2 input error,
3 stable beyond the clearing horizon, 4 unstable at zero clearing.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from . import __version__
from .config import DEFAULTS, ConfigError, RunConfig, build_config, read_config_file
from .dynamics import (
    PowerFlowError,
    UnstableAtZeroClearing,
    critical_clearing_time,
    prepare_scenario,
    simulate_scenario,
    write_trajectory_csv,
)
from .montecarlo import (
    RetentionError,
    UncertaintyModel,
    estimate_cct_distribution,
    paired_study,
    report,
    sample_parameters,
    write_outputs,
)
from .netmodel import (
    NetworkReductionError,
    ParameterVector,
    PowerSystem,
    SystemFormatError,
    bus_table,
    ieee14,
    load_system,
    nominal_parameters,
    read_parameters,
    solve_power_flow,
)
from .pca import ConvergenceError, InfluenceRanking
from .pipeline import rank_scenario
from .sensitivity import SensitivityError

EXIT_OK = 0
EXIT_ANALYSIS = 1
EXIT_INPUT = 2
EXIT_STABLE_BEYOND_HORIZON = 3
EXIT_UNSTABLE_AT_ZERO = 4


class _Failure(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--system", help=DEFAULTS["system"][1])
    common.add_argument("--config", help="flat key = value configuration file; flags override it")
    common.add_argument("--params", help=DEFAULTS["params"][1])
    common.add_argument("--seed", type=int, help=DEFAULTS["seed"][1])
    common.add_argument("--json", action="store_true", help="print a JSON document instead of text")
    common.add_argument("--out-dir", help=DEFAULTS["out_dir"][1])
    common.add_argument("--workers", type=int, help=DEFAULTS["workers"][1])

    scen = argparse.ArgumentParser(add_help=False)
    scen.add_argument("--case", choices=["I", "II", "III"], help=DEFAULTS["case"][1])
    scen.add_argument("--fault-bus", type=int, help=DEFAULTS["fault_bus"][1])
    scen.add_argument("--clear-line", help=DEFAULTS["clear_line"][1])
    scen.add_argument("--tol", type=float, help=DEFAULTS["tol"][1])
    scen.add_argument("--step", type=float, help=DEFAULTS["step"][1])
    scen.add_argument("--max-clearing", type=float, help=DEFAULTS["max_clearing"][1])
    scen.add_argument("--horizon", type=float, help=DEFAULTS["horizon"][1])

    p = argparse.ArgumentParser(prog="cctpca", description="Critical clearing time uncertainty tools.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("powerflow", parents=[common], help="solve the nominal power flow")
    sub.add_parser("cct", parents=[common, scen], help="critical clearing time of one scenario")

    rank = sub.add_parser("rank", parents=[common, scen], help="rank parameters by influence")
    rank.add_argument("--threshold", type=float, help=DEFAULTS["threshold"][1])
    rank.add_argument("--samples", type=int, help=DEFAULTS["samples"][1])
    rank.add_argument("--h-rel", type=float, help=DEFAULTS["h_rel"][1])
    rank.add_argument("--h-abs", type=float, help=DEFAULTS["h_abs"][1])

    mc = sub.add_parser("mc", parents=[common, scen], help="Monte Carlo clearing-time distribution")
    mc.add_argument("-N", "--n", type=int, dest="n", help=DEFAULTS["n"][1])
    mc.add_argument("--cv-load", type=float, help=DEFAULTS["cv_load"][1])
    mc.add_argument("--cv-line", type=float, help=DEFAULTS["cv_line"][1])
    mc.add_argument("--ranking", help=DEFAULTS["ranking"][1])

    cmp_ = sub.add_parser("compare", parents=[common], help="variance retention from two mc reports")
    cmp_.add_argument("full_report", help="JSON report of the full-uncertainty run")
    cmp_.add_argument("reduced_report", help="JSON report of the reduced-uncertainty run")
    return p


def _config(args: argparse.Namespace) -> RunConfig:
    file_values = read_config_file(args.config) if args.config else {}
    flags = {k: v for k, v in vars(args).items() if k in RunConfig.__dataclass_fields__}
    return build_config(file_values, flags)


def _system(cfg: RunConfig) -> PowerSystem:
    return load_system(cfg.system) if cfg.system else ieee14()


def _parameters(cfg: RunConfig, system: PowerSystem) -> ParameterVector:
    nominal = nominal_parameters(system)
    if cfg.params is None:
        return nominal
    lam = read_parameters(Path(cfg.params).read_text(encoding="utf-8"))
    if lam.ids != nominal.ids:
        raise ConfigError("parameter file does not match the system's parameter list")
    return lam


def _scenario(cfg: RunConfig, system: PowerSystem):
    sc = cfg.scenario()
    if sc.faulted_bus not in system.bus_index:
        raise ConfigError(f"faulted bus {sc.faulted_bus} is not in the system")
    system.line_position(sc.cleared_line)  # raises KeyError for unknown lines
    return sc


def _emit(args, doc: dict, text: str) -> None:
    print(json.dumps(doc, indent=2) if args.json else text)


def _outdir(cfg: RunConfig) -> Path | None:
    if cfg.out_dir is None:
        return None
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _num(x):
    return float(x) if x is not None and math.isfinite(x) else None


def cmd_powerflow(args, cfg: RunConfig) -> int:
    system = _system(cfg)
    lam = _parameters(cfg, system)
    sol = solve_power_flow(system, lam)
    rows = bus_table(system, sol)
    doc = {
        "converged": bool(sol.converged),
        "iterations": int(sol.iterations),
        "max_mismatch": float(sol.max_mismatch),
        "buses": rows,
    }
    lines = [
        f"power flow {'converged' if sol.converged else 'FAILED'}: "
        f"{sol.iterations} iterations, max mismatch {sol.max_mismatch:.3e} pu",
        f"{'bus':>4} {'type':>5} {'|V| pu':>9} {'angle deg':>10} {'P_gen pu':>10} {'Q_gen pu':>10}",
    ]
    for r in rows:
        lines.append(
            f"{r['bus']:>4} {r['type']:>5} {r['vm']:>9.5f} {r['va_deg']:>10.4f} {r['p_gen']:>10.4f} {r['q_gen']:>10.4f}"
        )
    _emit(args, doc, "\n".join(lines))
    out = _outdir(cfg)
    if out:
        (out / "powerflow.json").write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    return EXIT_OK if sol.converged else EXIT_ANALYSIS


def cmd_cct(args, cfg: RunConfig) -> int:
    system = _system(cfg)
    lam = _parameters(cfg, system)
    sc = _scenario(cfg, system)
    prep = prepare_scenario(system, lam, sc)
    try:
        res = critical_clearing_time(None, None, sc, tol=cfg.tol, step=cfg.step, prepared=prep)
    except UnstableAtZeroClearing as exc:
        raise _Failure(str(exc), EXIT_UNSTABLE_AT_ZERO) from None
    doc = {
        "scenario": {"name": sc.name, "faulted_bus": sc.faulted_bus, "cleared_line": sc.cleared_line},
        "status": res.status,
        "t_cr": _num(res.t_cr),
        "bracket": [_num(res.lower), _num(res.upper)],
        "iterations": res.iterations,
        "tol": cfg.tol,
        "step": cfg.step,
    }
    if res.ok:
        text = (
            f"scenario {sc.name}: t_cr = {res.t_cr:.5f} s  bracket [{res.lower:.5f}, {res.upper:.5f}]"
            f"  {res.iterations} bisection steps"
        )
    else:
        text = f"scenario {sc.name}: stable for every clearing time up to {sc.max_clearing_time} s"
    _emit(args, doc, text)
    out = _outdir(cfg)
    if out:
        (out / "cct.json").write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
        if res.ok and res.lower > 0:
            f, p, _ = simulate_scenario(None, None, sc, res.lower, cfg.step, prepared=prep)
            write_trajectory_csv(out / "trajectory.csv", f, p)
    return EXIT_OK if res.ok else EXIT_STABLE_BEYOND_HORIZON


def cmd_rank(args, cfg: RunConfig) -> int:
    system = _system(cfg)
    lam = _parameters(cfg, system)
    sc = _scenario(cfg, system)
    res = rank_scenario(
        system, lam, sc, cfg.threshold, cfg.samples, cfg.h_rel, cfg.h_abs, cfg.step, cfg.tol, workers=cfg.worker_count
    )
    ranking = res.ranking
    doc = json.loads(ranking.to_json())
    doc["scenario"] = {"name": sc.name, "faulted_bus": sc.faulted_bus, "cleared_line": sc.cleared_line}
    doc["selected"] = list(ranking.selected)
    doc["t_cr"] = res.t_cr
    doc["guarded_rows"] = res.normalized.guarded_count
    lines = [
        f"scenario {sc.name}: t_cr = {res.t_cr:.5f} s, dominant eigenvalue {res.pair.value:.6g}",
        f"{len(ranking.selected)} of {len(lam)} parameters reach {ranking.cumulative_share:.4f} "
        f"of the eigenvector (threshold {cfg.threshold})",
        f"{'rank':>4}  {'parameter':<10} {'share':>9} {'cumulative':>10}",
    ]
    for rank, e in enumerate(ranking.entries, start=1):
        if not e.selected:
            break
        lines.append(f"{rank:>4}  {e.parameter_id:<10} {e.share:>9.5f} {e.cumulative:>10.5f}")
    _emit(args, doc, "\n".join(lines))
    out = _outdir(cfg)
    if out:
        (out / "ranking.csv").write_text(ranking.to_csv(), encoding="utf-8")
        (out / "ranking.json").write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    return EXIT_OK


def _read_ranking(path: str) -> InfluenceRanking:
    text = Path(path).read_text(encoding="utf-8")
    try:
        return InfluenceRanking.from_json(text) if path.endswith(".json") else InfluenceRanking.from_csv(text)
    except (KeyError, ValueError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read ranking {path}: {exc}") from None


def cmd_mc(args, cfg: RunConfig) -> int:
    system = _system(cfg)
    lam = _parameters(cfg, system)
    sc = _scenario(cfg, system)
    model = UncertaintyModel(cfg.cv_load, cfg.cv_line)
    workers = cfg.worker_count
    out = _outdir(cfg)

    if cfg.ranking is None:
        sset = sample_parameters(lam, model, None, cfg.n, cfg.seed)
        dist = estimate_cct_distribution(system, sset, sc, cfg.tol, cfg.step, workers)
        doc = report(dist, sc, sset)
        if out:
            write_outputs(out, "full", dist, doc)
        text = _mc_text("full", doc)
        _emit(args, doc, text)
        return EXIT_ANALYSIS if dist.unreliable else EXIT_OK

    selected = _read_ranking(cfg.ranking).selected
    unknown = [pid for pid in selected if pid not in lam.index_map]
    if unknown:
        raise ConfigError(f"ranking names unknown parameters: {', '.join(unknown)}")
    study = paired_study(system, lam, selected, sc, model, cfg.n, cfg.seed, cfg.tol, cfg.step, workers)
    try:
        retention = study.retention
    except RetentionError:
        retention = None
    full_doc = report(study.full, sc, study.full_set)
    reduced_doc = report(study.reduced, sc, study.reduced_set, retention)
    if out:
        write_outputs(out, "full", study.full, full_doc)
        write_outputs(out, "reduced", study.reduced, reduced_doc)
    doc = {"full": full_doc, "reduced": reduced_doc}
    text = _mc_text("full", full_doc) + "\n" + _mc_text("reduced", reduced_doc)
    if retention is not None:
        text += f"\nvariance retention {retention:.4f}  (sigma ratio {math.sqrt(retention):.4f})"
    else:
        text += "\nvariance retention undefined (full distribution has no spread)"
    _emit(args, doc, text)
    bad = study.full.unreliable or study.reduced.unreliable or retention is None
    return EXIT_ANALYSIS if bad else EXIT_OK


def _mc_text(label: str, doc: dict) -> str:
    mu = "nan" if doc["mu"] is None else f"{doc['mu']:.5f}"
    sigma = "nan" if doc["sigma"] is None else f"{doc['sigma']:.6f}"
    flag = "  UNRELIABLE" if doc["unreliable"] else ""
    return f"{label:>8}: N={doc['N']} mu={mu} s sigma={sigma} s failures={doc['failures']}{flag}"


def cmd_compare(args, cfg: RunConfig) -> int:
    docs = []
    for path in (args.full_report, args.reduced_report):
        try:
            docs.append(json.loads(Path(path).read_text(encoding="utf-8")))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read report {path}: {exc}") from None
    sig = []
    for path, d in zip((args.full_report, args.reduced_report), docs):
        if not isinstance(d, dict) or "sigma" not in d:
            raise ConfigError(f"{path} is not a Monte Carlo report")
        sig.append(d["sigma"])
    if sig[0] is None or sig[1] is None:
        raise _Failure("a report has no valid samples", EXIT_ANALYSIS)
    if sig[0] == 0:
        raise _Failure("full distribution has zero variance; retention undefined", EXIT_ANALYSIS)
    retention = (sig[1] / sig[0]) ** 2
    doc = {
        "full": {"mu": docs[0]["mu"], "sigma": sig[0], "N": docs[0].get("N")},
        "reduced": {"mu": docs[1]["mu"], "sigma": sig[1], "N": docs[1].get("N")},
        "variance_retention": retention,
        "sigma_ratio": math.sqrt(retention),
    }
    text = f"variance retention {retention:.4f}  (sigma ratio {math.sqrt(retention):.4f})"
    if docs[0].get("seed") != docs[1].get("seed") or docs[0].get("N") != docs[1].get("N"):
        text += "\nwarning: reports differ in seed or N, so the runs are not paired"
    _emit(args, doc, text)
    out = _outdir(cfg)
    if out:
        (out / "compare.json").write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    return EXIT_OK


COMMANDS = {
    "powerflow": cmd_powerflow,
    "cct": cmd_cct,
    "rank": cmd_rank,
    "mc": cmd_mc,
    "compare": cmd_compare,
}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = _config(args)
        return COMMANDS[args.command](args, cfg)
    except _Failure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (SystemFormatError, ConfigError, KeyError, FileNotFoundError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"input error: {msg}", file=sys.stderr)
        return EXIT_INPUT
    except (PowerFlowError, NetworkReductionError, SensitivityError, ConvergenceError, UnstableAtZeroClearing) as exc:
        print(f"analysis failed: {exc}", file=sys.stderr)
        return EXIT_ANALYSIS


if __name__ == "__main__":
    sys.exit(main())
