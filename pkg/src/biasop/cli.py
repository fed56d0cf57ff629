"""Command-line entry point: ``biasop <subcommand> --config experiment.yaml``.

Exit codes: 0 success, 1 verification failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import yaml

from . import bounds, dynamics, equilibria, graph as graphs, stability

log = logging.getLogger("biasop")


class ConfigError(ValueError):
    pass


def _dump(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def load_config(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        cfg = yaml.safe_load(path.read_text()) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    cfg.setdefault("_base", str(path.parent))
    return cfg


def _path(cfg, value) -> Path:
    p = Path(value)
    return p if p.is_absolute() else Path(cfg.get("_base", ".")) / p


def build_graph(cfg) -> graphs.WeightedGraph:
    section = cfg.get("graph")
    if not isinstance(section, dict):
        raise ConfigError("missing 'graph' section")
    if "file" in section:
        return graphs.read_graph(_path(cfg, section["file"]))
    try:
        return graphs.make_graph(section["kind"], int(section["n"]), float(section.get("w", 1.0)))
    except KeyError as exc:
        raise ConfigError(f"graph section needs {exc}") from None


def build_schedule(cfg):
    section = cfg.get("schedule")
    if section is None:
        return None
    if "file" in section:
        return graphs.read_schedule(_path(cfg, section["file"]))
    rr = section.get("round_robin")
    if rr is None:
        raise ConfigError("schedule needs 'file' or 'round_robin'")
    rng = np.random.default_rng(cfg["seed"]) if rr.get("random", True) else None
    return graphs.round_robin_schedule(int(rr["n"]), int(rr["period"]), rng,
                                       cycles=int(rr.get("cycles", 1)), c=float(rr.get("c", 1.0)))


def build_bias(cfg, n: int) -> np.ndarray:
    if "bias" not in cfg:
        raise ConfigError("missing 'bias'")
    return dynamics.as_bias(cfg["bias"], n)


def build_initial(cfg, n: int) -> np.ndarray:
    section = cfg.get("initial")
    if not isinstance(section, dict):
        raise ConfigError("missing 'initial' section")
    if "vector" in section:
        return dynamics.as_state(section["vector"], n)
    if "uniform" in section:
        u = section["uniform"]
        rng = np.random.default_rng(cfg["seed"])
        return rng.uniform(float(u.get("low", 0.0)), float(u.get("high", 1.0)), size=n)
    if "family" in section:
        f = section["family"]
        return equilibria.family_member(f["name"], n, f.get("params", ()))
    raise ConfigError("initial needs 'vector', 'uniform' or 'family'")


def build_protocol(cfg) -> stability.StabilityProtocol:
    p = dict(cfg.get("protocol") or {})
    return stability.StabilityProtocol(
        trials=int(p.get("trials", 100)), radius=float(p.get("radius", 0.015)),
        horizon=int(p.get("horizon", 10_000)), blowup=float(p.get("blowup", 3.0)),
        seed=int(cfg["seed"]))


# ---------------------------------------------------------------------------
# subcommands

def cmd_simulate(cfg, out: Path) -> int:
    system = build_schedule(cfg) or build_graph(cfg)
    bias = build_bias(cfg, system.n)
    x0 = build_initial(cfg, system.n)
    traj = dynamics.simulate(system, bias, x0, int(cfg.get("horizon", 100)),
                             float(cfg.get("tol", 0.0)), seed=cfg["seed"])
    traj.to_csv(out / "trajectory.csv")
    _dump({"final_state": traj.states[-1].tolist(), "steps": traj.horizon,
           "max_coordinate_curve": traj.max_curve.tolist()}, out / "summary.json")
    return 0


def cmd_verify_bounds(cfg, out: Path) -> int:
    if "sweep" in cfg:
        sw = cfg["sweep"] or {}
        summary, _ = bounds.envelope_sweep(int(sw.get("cases", 200)), int(sw.get("steps", 300)),
                                           seed=int(cfg["seed"]), mirror=bool(sw.get("mirror", False)))
        (out / "sweep.json").write_text(summary.to_json() + "\n")
        ok = summary.failures == 0 and summary.monotone_failures == 0
        log.info("sweep: %d cases, %d envelope failures", summary.cases, summary.failures)
        return 0 if ok else 1
    system = build_schedule(cfg) or build_graph(cfg)
    bias = build_bias(cfg, system.n)
    x0 = build_initial(cfg, system.n)
    params = bounds.envelope_params(system, bias, x0)
    traj = dynamics.simulate(system, bias, x0, int(cfg.get("horizon", 300)), seed=cfg["seed"])
    if "corrupt_at" in cfg:
        t = int(cfg["corrupt_at"])
        traj.states[t] = 1.0 if params.side is bounds.Side.LOWER else 0.0
    rep = bounds.check_envelope(traj, params)
    rep.to_csv(out / "envelope.csv")
    _dump({"passed": rep.ok, "side": params.side.value, "rate": params.rate,
           "period": params.period, "worst_slack": rep.worst_slack,
           "first_failure": rep.first_failure}, out / "verdict.json")
    log.info("envelope %s (rate %.6g)", "holds" if rep.ok else "FAILS", params.rate)
    return 0 if rep.ok else 1


def cmd_equilibria(cfg, out: Path) -> int:
    g = build_graph(cfg)
    if "bias" not in cfg:
        raise ConfigError("missing 'bias'")
    b = equilibria.scalar_bias(cfg["bias"])
    fams, closed = equilibria.families_for(g.kind, g.n, b)
    rng = np.random.default_rng(cfg["seed"])
    samples = int(cfg.get("samples", 5))
    fam_out = []
    for fam in fams:
        members = []
        for _ in range(samples if equilibria.family_dimension(fam, g.n) else 1):
            x = equilibria.sample_family(fam, g.n, rng)
            members.append({"point": x.tolist(), "residual": equilibria.residual(g, b, x).max_abs})
        fam_out.append({"family": fam.value, "description": equilibria.FAMILY_INFO[fam][3],
                        "members": members})
    report = {"graph": g.to_dict(), "b": b, "families": fam_out,
              "closed_form": closed, "note": None if closed else "no closed form known"}
    search = cfg.get("search") or {}
    if search.get("enabled", False):
        clusters = equilibria.numeric_search(g, b, float(search.get("grid_step", 0.05)),
                                             float(search.get("refine_tol", 1e-12)))
        report["clusters"] = [c.to_dict() for c in clusters]
        pts = np.array([c.point for c in clusters]).reshape(-1, g.n)
        checks = {}
        for fam in fams:
            err = equilibria.family_constraint_error(fam, pts) if len(pts) else np.zeros(0)
            checks[fam.value] = {"max_constraint_error": float(err.max()) if err.size else None,
                                 "all_on_family": bool(np.all(err <= 1e-8))}
        report["family_checks"] = checks
    _dump(report, out / "equilibria.json")
    return 0


def cmd_stability_scan(cfg, out: Path) -> int:
    g = build_graph(cfg)
    if g.n > stability.MAX_SCAN_NODES:
        raise ConfigError(f"vertex scan is capped at n = {stability.MAX_SCAN_NODES}")
    b = build_bias(cfg, g.n)
    report = stability.vertex_scan(g, b, build_protocol(cfg), mirrored=bool(cfg.get("mirrored", True)),
                                   workers=cfg.get("workers"))
    report.write(out)
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "verify-bounds": cmd_verify_bounds,
    "equilibria": cmd_equilibria,
    "stability-scan": cmd_stability_scan,
}


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="biasop", description="Biased opinion dynamics experiments")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="YAML experiment file")
        s.add_argument("--seed", type=int)
        s.add_argument("--workers", type=int)
        s.add_argument("--out-dir")
        s.add_argument("--horizon", type=int)
        if name == "equilibria":
            s.add_argument("--search", action="store_true", help="run the numeric search too")
        if name == "stability-scan":
            s.add_argument("--trials", type=int)
            s.add_argument("--radius", type=float)
            s.add_argument("--blowup", type=float)
    return p


def _merge_flags(cfg: dict, args) -> dict:
    if args.seed is not None:
        cfg["seed"] = args.seed
    cfg.setdefault("seed", 0)
    if args.workers is not None:
        cfg["workers"] = args.workers
    proto = dict(cfg.get("protocol") or {})
    if args.horizon is not None:
        if args.command == "stability-scan":
            proto["horizon"] = args.horizon
        else:
            cfg["horizon"] = args.horizon
    for key in ("trials", "radius", "blowup"):
        if getattr(args, key, None) is not None:
            proto[key] = getattr(args, key)
    cfg["protocol"] = proto
    if getattr(args, "search", False):
        cfg["search"] = {**(cfg.get("search") or {}), "enabled": True}
    return cfg


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s", stream=sys.stderr)
    args = make_parser().parse_args(argv)
    try:
        cfg = _merge_flags(load_config(args.config), args)
        # --out-dir is relative to the working directory, out_dir to the config file
        out = Path(args.out_dir) if args.out_dir else _path(cfg, cfg.get("out_dir", "out"))
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, out)
    except bounds.NotPolarizedError as exc:
        log.error("not polarized: %s", exc)
        return 2
    except (ConfigError, graphs.GraphError, ValueError, KeyError, TypeError, OSError) as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
