"""Experiment runner and data emitter.

Subcommands dispatch to the simulator and the analysis toolkit and write CSV
artifacts with fixed headers, one file per experiment, plus a sidecar
manifest recording the fully resolved configuration (the manifest is itself
a valid config file, so any run can be reproduced with `--config <manifest>`).

Configuration comes from a plain-text key=value file (`#` comments allowed)
and/or command-line flags; flags override the file. All time-like values are
integer milliseconds. The worker pool for multi-seed sweeps is capped by the
AW_THREADS environment variable.
"""

from __future__ import annotations

import argparse
import math
import os
import subprocess
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import __version__
from .analysis import (AnalysisParams, cut_attack_success,
                       detection_error_probs, mean_field_summary)
from .simnet import (SimConfig, run, run_bootstrap_experiment,
                     run_partition_experiment)

SIM_KINDS = ("bootstrap", "churn", "table-quality", "filtering", "slashing",
             "partition")


class ConfigError(Exception):
    pass


def _fmt(x) -> str:
    if isinstance(x, (np.floating,)):
        x = float(x)
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_csv(path: str, header: list[str], rows: list[tuple]) -> None:
    try:
        with open(path, "w") as f:
            f.write(",".join(header) + "\n")
            for row in rows:
                f.write(",".join(_fmt(v) for v in row) + "\n")
    except OSError as e:
        raise ConfigError(f"out_dir: cannot write {path}: {e}")


def _git_describe() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"],
                             capture_output=True, text=True, timeout=5,
                             cwd=os.path.dirname(os.path.abspath(__file__)))
        if out.returncode == 0:
            return out.stdout.strip()
    except Exception:
        pass
    return "unknown"


def write_manifest(path: str, command: str, resolved: dict) -> None:
    try:
        with open(path, "w") as f:
            f.write(f"# stakegossip {__version__} ({_git_describe()})\n")
            f.write(f"command={command}\n")
            for k in sorted(resolved):
                f.write(f"{k}={resolved[k]}\n")
    except OSError as e:
        raise ConfigError(f"out_dir: cannot write {path}: {e}")


def parse_kv_file(path: str) -> dict[str, str]:
    out = {}
    try:
        with open(path) as f:
            for ln, line in enumerate(f, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{ln}: expected key=value")
                k, v = line.split("=", 1)
                out[k.strip()] = v.strip()
    except OSError as e:
        raise ConfigError(f"config: cannot read {path}: {e}")
    return out


def _merge_config(args: argparse.Namespace, spec: dict[str, type]) -> dict:
    """File values first, then explicit flags; validates keys and types."""
    merged: dict = {}
    if getattr(args, "config", None):
        for k, v in parse_kv_file(args.config).items():
            if k == "command":
                continue
            if k not in spec:
                raise ConfigError(f"unknown key {k!r} in config file")
            merged[k] = _coerce(k, v, spec[k])
    for k, typ in spec.items():
        flag_val = getattr(args, k, None)
        if flag_val is not None:
            merged[k] = flag_val
    return merged


def _coerce(key: str, raw: str, typ: type):
    try:
        if typ is bool:
            if raw.lower() in ("1", "true", "yes"):
                return True
            if raw.lower() in ("0", "false", "no"):
                return False
            raise ValueError(raw)
        if typ is list:
            return [int(x) for x in raw.split(",") if x]
        if typ is _floatlist:
            return [float(x) for x in raw.split(",") if x]
        return typ(raw)
    except ValueError:
        raise ConfigError(f"bad value for {key!r}: {raw!r}")


class _floatlist:  # marker type for comma-separated float lists
    pass


def _ensure_out_dir(path: str) -> None:
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as e:
        raise ConfigError(f"out_dir: cannot create {path}: {e}")


def _pool_size() -> int:
    env = os.environ.get("AW_THREADS", "")
    if env.strip():
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"AW_THREADS: bad value {env!r}")
    return max(1, min(os.cpu_count() or 1, 8))


def _sim_config(cfg: dict, seed: int, adversary: str = "none",
                alpha: float | None = None) -> SimConfig:
    try:
        return SimConfig(
            n=cfg["n"], s=cfg["s"],
            alpha=cfg["alpha"] if alpha is None else alpha,
            rounds=cfg["rounds"], round_length=cfg["round_length"],
            delay_min=cfg["delay_min"], delay_max=cfg["delay_max"],
            churn_rate=cfg["churn"], adversary=adversary,
            oversample_k=cfg.get("k", 2), theta=cfg.get("theta"),
            seed=seed, retrieval_mode=cfg["retrieval_mode"],
            expiry_rounds=cfg["expiry_rounds"])
    except ValueError as e:
        raise ConfigError(str(e))


# -- worker entry points (picklable) ----------------------------------------

def _w_bootstrap(cfg: dict, seed: int):
    return run_bootstrap_experiment(_sim_config(cfg, seed))


def _w_churn(cfg: dict, seed: int):
    return run(_sim_config(cfg, seed)).record_correctness


def _w_quality(cfg: dict, seed_alpha: tuple[int, float]):
    seed, alpha = seed_alpha
    m = run(_sim_config(cfg, seed, adversary="silent", alpha=alpha))
    warm = min(cfg["rounds"] - 1, 5)
    return float(np.nanmean(m.table_quality[warm:]))


def _w_filtering(cfg: dict, seed_alpha: tuple[int, float]):
    seed, alpha = seed_alpha
    m = run(_sim_config(cfg, seed, adversary="filtering", alpha=alpha))
    warm = min(cfg["rounds"] - 1, 5)
    return (float(np.nanmean(m.representation_honest[warm:])),
            float(np.nanmean(m.representation_adv[warm:])))


def _w_slashing(cfg: dict, seed_k: tuple[int, int]):
    seed, k = seed_k
    c = dict(cfg)
    c["k"] = k
    alpha = 1.0 / c["n"] + 1e-9  # exactly one staked violator
    m = run(_sim_config(c, seed, adversary="oversampler", alpha=alpha))
    det = m.detection_round
    return min(det.values()) if det else None


def _w_partition(cfg: dict, seed: int):
    m = run_partition_experiment(_sim_config(cfg, seed), split=cfg["split"])
    return m.flag_rate_side_a, m.flag_rate_side_b


# -- subcommands --------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentSpec:
    """One experiment to run: the kind, its resolved parameter overrides,
    the seed list, and where output lands. Every run leaves a sidecar
    manifest (spec + binary version + seeds) beside its CSV."""

    kind: str
    params: dict
    seeds: tuple[int, ...]
    out_dir: str

    def manifest_fields(self) -> dict:
        resolved = {k: (",".join(map(str, v)) if isinstance(v, list) else v)
                    for k, v in self.params.items() if v is not None}
        resolved["kind"] = self.kind
        resolved["out_dir"] = self.out_dir
        resolved["seeds"] = ",".join(map(str, self.seeds))
        return resolved


_SIM_SPEC: dict[str, type] = {
    "kind": str, "n": int, "s": float, "alpha": float, "rounds": int,
    "round_length": int, "delay_min": int, "delay_max": int, "churn": int,
    "theta": float, "seed": int, "seeds": list, "retrieval_mode": str,
    "expiry_rounds": int, "alphas": _floatlist, "ks": list, "k": int,
    "split": float, "out_dir": str,
}

_SIM_DEFAULTS = {
    "n": 10_000, "s": 4.0, "alpha": 0.0, "rounds": 30, "round_length": 2_000,
    "delay_min": 20, "delay_max": 250, "churn": 0, "theta": None, "seed": 0,
    "seeds": None, "retrieval_mode": "seed-in-request", "expiry_rounds": 4,
    "alphas": [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7], "ks": [2, 3, 4], "k": 2,
    "split": 0.5, "out_dir": ".",
}


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = dict(_SIM_DEFAULTS)
    cfg.update(_merge_config(args, _SIM_SPEC))
    kind = cfg.get("kind")
    if kind not in SIM_KINDS:
        raise ConfigError(f"kind: expected one of {SIM_KINDS}, got {kind!r}")
    seeds = cfg["seeds"] if cfg["seeds"] else [cfg["seed"]]
    spec = ExperimentSpec(
        kind=kind,
        params={k: v for k, v in cfg.items()
                if k not in ("kind", "out_dir", "seeds")},
        seeds=tuple(seeds), out_dir=cfg["out_dir"])
    out_dir = spec.out_dir
    _ensure_out_dir(out_dir)
    base = os.path.join(out_dir, kind.replace("-", "_"))
    workers = _pool_size()

    def fan(fn, items):
        if workers == 1 or len(items) == 1:
            return [fn(cfg, it) for it in items]
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(fn, [cfg] * len(items), items))

    if kind == "bootstrap":
        series = fan(_w_bootstrap, seeds)
        mean = np.mean(np.stack(series), axis=0)
        rows = [(r, float(mean[r])) for r in range(len(mean))]
        write_csv(base + ".csv", ["round", "appearances"], rows)
    elif kind == "churn":
        series = fan(_w_churn, seeds)
        mean = np.mean(np.stack(series), axis=0)
        rows = [(r, float(mean[r])) for r in range(len(mean))]
        write_csv(base + ".csv", ["round", "success_rate"], rows)
    elif kind == "table-quality":
        items = [(s, a) for a in cfg["alphas"] for s in seeds]
        vals = fan(_w_quality, items)
        rows = []
        for ai, a in enumerate(cfg["alphas"]):
            chunk = vals[ai * len(seeds):(ai + 1) * len(seeds)]
            rows.append((a, float(np.mean(chunk))))
        write_csv(base + ".csv", ["alpha", "quality"], rows)
    elif kind == "filtering":
        items = [(s, a) for a in cfg["alphas"] for s in seeds]
        vals = fan(_w_filtering, items)
        rows = []
        for ai, a in enumerate(cfg["alphas"]):
            chunk = vals[ai * len(seeds):(ai + 1) * len(seeds)]
            rows.append((a, float(np.mean([c[0] for c in chunk])),
                         float(np.mean([c[1] for c in chunk]))))
        write_csv(base + ".csv", ["alpha", "honest_repr", "adv_repr"], rows)
    elif kind == "slashing":
        items = [(s, k) for k in cfg["ks"] for s in seeds]
        dets = fan(_w_slashing, items)
        horizon = cfg["rounds"]
        rows = []
        for r in range(horizon + 1):
            got = sum(1 for d in dets if d is not None and d <= r)
            rows.append((r, got / len(dets)))
        write_csv(base + ".csv", ["round", "cdf"], rows)
    elif kind == "partition":
        vals = fan(_w_partition, seeds)
        a = np.mean(np.stack([v[0] for v in vals]), axis=0)
        b = np.mean(np.stack([v[1] for v in vals]), axis=0)
        rows = [(r, float(a[r]), float(b[r])) for r in range(1, len(a))]
        write_csv(base + ".csv", ["round", "flag_rate_small", "flag_rate_large"],
                  rows)

    write_manifest(base + ".manifest", "simulate", spec.manifest_fields())
    return 0


_MF_SPEC = {"alpha": float, "n": int, "s_min": float, "s_max": float,
            "s_step": float, "out_dir": str}
_MF_DEFAULTS = {"alpha": 1 / 3, "n": 10_000, "s_min": 1.0, "s_max": 8.0,
                "s_step": 0.25, "out_dir": "."}


def cmd_meanfield(args: argparse.Namespace) -> int:
    cfg = dict(_MF_DEFAULTS)
    cfg.update(_merge_config(args, _MF_SPEC))
    if not 0 <= cfg["alpha"] < 1:
        raise ConfigError(f"alpha: out of range: {cfg['alpha']}")
    rows = []
    s = cfg["s_min"]
    while s <= cfg["s_max"] + 1e-12:
        mf = mean_field_summary(cfg["n"], s, cfg["alpha"])
        rows.append((s, mf.q_thresh, mf.q_high, mf.v_high))
        s = round(s + cfg["s_step"], 12)
    _ensure_out_dir(cfg["out_dir"])
    base = os.path.join(cfg["out_dir"], "meanfield")
    write_csv(base + ".csv", ["s", "q_thresh", "q_high", "v_high"], rows)
    write_manifest(base + ".manifest", "meanfield", cfg)
    return 0


_BOUNDS_SPEC = {"alpha": float, "s": float, "gamma": float, "theta": float,
                "n": list, "out_dir": str}
_BOUNDS_DEFAULTS = {"alpha": 0.25, "s": 4.0, "gamma": 0.90, "theta": 0.75,
                    "n": [10_000, 100_000, 1_000_000], "out_dir": "."}


def cmd_bounds(args: argparse.Namespace) -> int:
    cfg = dict(_BOUNDS_DEFAULTS)
    cfg.update(_merge_config(args, _BOUNDS_SPEC))
    rows = []
    for n in cfg["n"]:
        try:
            p = AnalysisParams(n=n, s=cfg["s"], alpha=cfg["alpha"],
                               gamma=cfg["gamma"], theta=cfg["theta"])
        except ValueError as e:
            raise ConfigError(str(e))
        fp, fn, fpc, fnc = detection_error_probs(p)
        rows.append((n, fp, fn, fpc, fnc))
    _ensure_out_dir(cfg["out_dir"])
    base = os.path.join(cfg["out_dir"], "bounds")
    write_csv(base + ".csv",
              ["n", "fp_exact", "fn_exact", "fp_chernoff", "fn_chernoff"], rows)
    resolved = dict(cfg)
    resolved["n"] = ",".join(map(str, cfg["n"]))
    write_manifest(base + ".manifest", "bounds", resolved)
    return 0


_CUT_SPEC = {"n": int, "s": float, "alpha": float, "delta": float,
             "theta": float, "thetas": _floatlist, "k": int, "ks": list,
             "degrees": _floatlist, "trials": int, "seed": int, "out_dir": str}
_CUT_DEFAULTS = {"n": 10_000, "s": 4.0, "alpha": 0.5, "delta": 0.25,
                 "theta": 0.9, "thetas": None, "k": 1, "ks": None,
                 "degrees": [25.0, 50.0, 75.0, 100.0], "trials": 5_000,
                 "seed": 0, "out_dir": "."}


def cmd_cutattack(args: argparse.Namespace) -> int:
    cfg = dict(_CUT_DEFAULTS)
    cfg.update(_merge_config(args, _CUT_SPEC))
    degrees = cfg["degrees"]
    xs: list[tuple[str, float | int]]
    if cfg["thetas"]:
        xs = [("theta", t) for t in cfg["thetas"]]
    else:
        ks = cfg["ks"] if cfg["ks"] else [cfg["k"]]
        xs = [("k", k) for k in ks]
    header = [xs[0][0]] + [f"log10_success_m{int(d)}" for d in degrees]
    rows = []
    for kind, x in xs:
        theta = x if kind == "theta" else cfg["theta"]
        k = int(x) if kind == "k" else cfg["k"]
        try:
            res = cut_attack_success(cfg["n"], cfg["s"], cfg["alpha"], k,
                                     theta, degrees, cfg["trials"],
                                     cfg["seed"], cfg["delta"])
        except ValueError as e:
            raise ConfigError(str(e))
        logs = []
        for d in degrees:
            _, exact = res[d]
            logs.append(math.log10(exact) if exact > 0 else float("-inf"))
        rows.append((x, *logs))
    _ensure_out_dir(cfg["out_dir"])
    base = os.path.join(cfg["out_dir"], "cutattack")
    write_csv(base + ".csv", header, rows)
    resolved = {k: (",".join(map(str, v)) if isinstance(v, list) else v)
                for k, v in cfg.items() if v is not None}
    write_manifest(base + ".manifest", "cutattack", resolved)
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    out_dir = args.out_dir or "."
    manifests = sorted(f for f in os.listdir(out_dir) if f.endswith(".manifest"))
    if not manifests:
        print(f"no manifests under {out_dir}")
        return 0
    for name in manifests:
        path = os.path.join(out_dir, name)
        kv = parse_kv_file(path)
        csv = path[:-len(".manifest")] + ".csv"
        status = "ok" if os.path.exists(csv) else "missing csv"
        print(f"{name}: command={kv.get('command', '?')} [{status}]")
        for k in sorted(kv):
            if k != "command":
                print(f"    {k}={kv[k]}")
    return 0


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value config file; flags override")
    p.add_argument("--out-dir", dest="out_dir", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="stakegossip",
        description="Stake-backed peer discovery experiments and analysis")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a network experiment")
    _add_common(p)
    p.add_argument("--kind", choices=SIM_KINDS)
    p.add_argument("--n", type=int)
    p.add_argument("--s", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--alphas", type=lambda v: [float(x) for x in v.split(",")])
    p.add_argument("--rounds", type=int)
    p.add_argument("--round-length", dest="round_length", type=int)
    p.add_argument("--delay-min", dest="delay_min", type=int)
    p.add_argument("--delay-max", dest="delay_max", type=int)
    p.add_argument("--churn", type=int)
    p.add_argument("--theta", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--seeds", type=lambda v: [int(x) for x in v.split(",")])
    p.add_argument("--retrieval-mode", dest="retrieval_mode",
                   choices=("seed-in-request", "full-table"))
    p.add_argument("--expiry-rounds", dest="expiry_rounds", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--ks", type=lambda v: [int(x) for x in v.split(",")])
    p.add_argument("--split", type=float)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("meanfield", help="mean-field fixed-point sweep")
    _add_common(p)
    p.add_argument("--alpha", type=float)
    p.add_argument("--n", type=int)
    p.add_argument("--s-min", dest="s_min", type=float)
    p.add_argument("--s-max", dest="s_max", type=float)
    p.add_argument("--s-step", dest="s_step", type=float)
    p.set_defaults(func=cmd_meanfield)

    p = sub.add_parser("bounds", help="detection error probabilities")
    _add_common(p)
    p.add_argument("--alpha", type=float)
    p.add_argument("--s", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--theta", type=float)
    p.add_argument("--n", type=lambda v: [int(x) for x in v.split(",")])
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("cutattack", help="omniscient-cut attack Monte Carlo")
    _add_common(p)
    p.add_argument("--n", type=int)
    p.add_argument("--s", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--theta", type=float)
    p.add_argument("--thetas", type=lambda v: [float(x) for x in v.split(",")])
    p.add_argument("--k", type=int)
    p.add_argument("--ks", type=lambda v: [int(x) for x in v.split(",")])
    p.add_argument("--degrees", type=lambda v: [float(x) for x in v.split(",")])
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_cutattack)

    p = sub.add_parser("report", help="summarize manifests in a directory")
    _add_common(p)
    p.set_defaults(func=cmd_report)
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
