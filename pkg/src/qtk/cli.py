"""qtk command line: build circuits, run noisy experiments, fit the results.

Every command takes ``--seed`` (falls back to the config file, then the
QTK_SEED environment variable, then 0), ``--jobs`` and ``--config``; flags
win over config values.  Result JSON carries ``"schema": "1"``.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import analysis
from .decomposer import GROVER_VARIANTS, ToffoliOptions, qubit_toffoli, qutrit_toffoli, to_dot
from .gates import Circuit, HardwareProfile, legality_check
from .noise import NoiseProfile
from .readout import estimate_confusion

SCHEMA = "1"


@dataclass
class RunConfig:
    command: str
    params: dict
    noise: NoiseProfile
    hardware: HardwareProfile
    seed: int
    jobs: int = 1
    outputs: dict = field(default_factory=dict)

    def header(self) -> dict:
        # jobs is deliberately left out: results must not depend on it
        return {"schema": SCHEMA, "command": self.command, "seed": self.seed, "params": self.params,
                "noise": self.noise.to_dict(), "hardware": asdict(self.hardware)}


def parse_n_range(text: str) -> list:
    """'5' -> [5]; '3..6' -> [3, 4, 5, 6]; '3,5,8' -> [3, 5, 8]."""
    text = str(text).strip()
    if ".." in text:
        lo, hi = (int(x) for x in text.split(".."))
        if hi < lo:
            raise ValueError(f"empty range {text!r}")
        return list(range(lo, hi + 1))
    return [int(x) for x in text.split(",")]


# option name -> built-in default, per command; None means "no default"
_COMMON = {"seed": None, "jobs": 1, "noiseless": False}
_DEFAULTS = {
    "decompose": {"family": "qutrit", "n": None, "no_stash": False, "leak_measure": False, "emit": "json",
                  "output": None},
    "truth-table": {"family": "qutrit", "n": None, "shots": 2048, "postselect": False, "circuit": None,
                    "confusion_shots": None, "resamples": 200, "no_stash": False, "output": None, "csv": None,
                    "plot": None},
    "grover": {"variant": "all", "shots": 2048, "output": None},
    "leak-scan": {"n_range": "3..10", "shots": 10000, "no_stash": False, "output": None, "csv": None, "plot": None},
    "calibrate": {"chi_a": 0.0, "chi_b": 0.0, "points": 16, "shots": None, "output": None},
    "fit": {"input": None, "output": None},
    "confusion": {"n": None, "shots": 2048, "output": None},
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qtk", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, help="master seed (default: config, then $QTK_SEED, then 0)")
        p.add_argument("--jobs", type=int, help="worker threads for shot batches")
        p.add_argument("--config", type=Path, help="JSON config with noise/hardware sections and option values")
        p.add_argument("--noiseless", action="store_true", default=None, help="switch every error channel off")
        return p

    p = common(sub.add_parser("decompose", help="emit a Toffoli circuit"))
    p.add_argument("--family", choices=analysis.FAMILIES)
    p.add_argument("-n", type=int)
    p.add_argument("--no-stash", action="store_true", default=None, help="drop the idle-ion parking pulses")
    p.add_argument("--leak-measure", action="store_true", default=None, help="append the double readout")
    p.add_argument("--emit", choices=("json", "dot"))
    p.add_argument("-o", "--output", type=Path)

    p = common(sub.add_parser("truth-table", help="noisy truth-table fidelity"))
    p.add_argument("--family", choices=analysis.FAMILIES)
    p.add_argument("-n", help="register size, a range like 3..6, or a list like 3,5")
    p.add_argument("--shots", type=int)
    p.add_argument("--postselect", action="store_true", default=None)
    p.add_argument("--circuit", type=Path, help="circuit JSON from `decompose` to run instead")
    p.add_argument("--confusion-shots", type=int)
    p.add_argument("--resamples", type=int)
    p.add_argument("--no-stash", action="store_true", default=None)
    p.add_argument("-o", "--output", type=Path)
    p.add_argument("--csv", type=Path)
    p.add_argument("--plot", type=Path, help="SVG of F_tt against N")

    p = common(sub.add_parser("grover", help="three-qubit Grover search error"))
    p.add_argument("--variant", choices=("all",) + GROVER_VARIANTS)
    p.add_argument("--shots", type=int)
    p.add_argument("-o", "--output", type=Path)

    p = common(sub.add_parser("leak-scan", help="leak probability against N plus the scaling fit"))
    p.add_argument("--n-range")
    p.add_argument("--shots", type=int, help="shots per N, split across the 2**N inputs")
    p.add_argument("--no-stash", action="store_true", default=None)
    p.add_argument("-o", "--output", type=Path)
    p.add_argument("--csv", type=Path)
    p.add_argument("--plot", type=Path)

    p = common(sub.add_parser("calibrate", help="Ramsey recovery of residual MS phases"))
    p.add_argument("--chi-a", type=float)
    p.add_argument("--chi-b", type=float)
    p.add_argument("--points", type=int)
    p.add_argument("--shots", type=int, help="shots per scan point (default: exact probabilities)")
    p.add_argument("-o", "--output", type=Path)

    p = common(sub.add_parser("fit", help="fit leakage points from a CSV (N,mean[,sigma])"))
    p.add_argument("--input", type=Path)
    p.add_argument("-o", "--output", type=Path)

    p = common(sub.add_parser("confusion", help="estimate a readout confusion matrix"))
    p.add_argument("-n", type=int)
    p.add_argument("--shots", type=int, help="shots per prepared basis state")
    p.add_argument("-o", "--output", type=Path)
    return ap


def resolve(args: argparse.Namespace) -> RunConfig:
    """Merge built-in defaults, the config file and explicit flags (in that order)."""
    cmd = args.command
    defaults = dict(_COMMON, **_DEFAULTS[cmd])
    cfg = {}
    if args.config is not None:
        cfg = json.loads(Path(args.config).read_text())
        if not isinstance(cfg, dict):
            raise ValueError("config file must hold a JSON object")
    allowed = set(defaults) | {"noise", "hardware"}
    unknown = {k.replace("-", "_") for k in cfg} - allowed
    if unknown:
        raise ValueError(f"unknown config keys for {cmd}: {sorted(unknown)}")
    values = dict(defaults)
    values.update({k.replace("-", "_"): v for k, v in cfg.items() if k not in ("noise", "hardware")})
    for k in defaults:
        v = getattr(args, k, None)
        if v is not None:
            values[k] = v
    seed = values.pop("seed")
    if seed is None:
        seed = int(os.environ.get("QTK_SEED", "0"))
    jobs = int(values.pop("jobs") or 1)
    if jobs < 1:
        raise ValueError("--jobs must be at least 1")
    noiseless = bool(values.pop("noiseless"))
    noise_cfg = dict(cfg.get("noise", {}))
    noise_cfg["master_seed"] = int(seed)
    noise = NoiseProfile.from_dict(noise_cfg)
    if noiseless:
        noise = NoiseProfile.noiseless(**{k: v for k, v in noise.to_dict().items()
                                          if k not in ("decay", "dephasing", "depolarizing", "leakage",
                                                       "crosstalk", "spam")})
    hw_cfg = cfg.get("hardware", {})
    hw_known = {f.name for f in fields(HardwareProfile)}
    if set(hw_cfg) - hw_known:
        raise ValueError(f"unknown hardware keys: {sorted(set(hw_cfg) - hw_known)}")
    hardware = HardwareProfile(**hw_cfg)
    outputs = {k: values.pop(k) for k in ("output", "csv", "plot") if k in values}
    params = {k: (str(v) if isinstance(v, Path) else v) for k, v in values.items()}
    return RunConfig(cmd, params, noise, hardware, int(seed), jobs, outputs)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n"


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    if isinstance(x, Path):
        return str(x)
    raise TypeError(f"cannot serialize {type(x).__name__}")


def _write(path, text: str):
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _finite(x):
    return None if x is None or (isinstance(x, float) and not math.isfinite(x)) else x


# -- commands ---------------------------------------------------------------------


def _build(family: str, n: int, cfg: RunConfig, leak: bool) -> Circuit:
    hw = cfg.hardware
    if n < 3:
        raise ValueError(f"generalized Toffoli needs n >= 3, got {n}")
    if family == "qutrit":
        return qutrit_toffoli(ToffoliOptions(n, stash_idle=not cfg.params["no_stash"], emit_leak_measure=leak,
                                             hardware=hw))
    return qubit_toffoli(n, hw)


def cmd_decompose(cfg: RunConfig) -> int:
    p = cfg.params
    if p["n"] is None:
        raise ValueError("decompose needs -n")
    circ = _build(p["family"], int(p["n"]), cfg, bool(p["leak_measure"]))
    problems = legality_check(circ, cfg.hardware)
    if problems:
        raise ValueError("generated circuit failed the legality check: " + "; ".join(problems))
    text = to_dot(circ) if p["emit"] == "dot" else circ.to_json(indent=2) + "\n"
    _write(cfg.outputs.get("output"), text)
    summary = {"schema": SCHEMA, "family": p["family"], "n": circ.n, "xx_count": circ.xx_count(),
               "instructions": len(circ), "duration_s": circ.duration()}
    out = sys.stderr if cfg.outputs.get("output") is None else sys.stdout
    out.write(_dump(summary))
    return 0


def cmd_truth_table(cfg: RunConfig) -> int:
    p = cfg.params
    custom = None
    if p["circuit"] is not None:
        custom = Circuit.from_json(Path(p["circuit"]).read_text())
        ns = [custom.n]
    else:
        if p["n"] is None:
            raise ValueError("truth-table needs -n or --circuit")
        ns = parse_n_range(p["n"])
    results = []
    for n in ns:
        r = analysis.truth_table_experiment(p["family"], n, int(p["shots"]), cfg.noise, bool(p["postselect"]),
                                            hardware=cfg.hardware, circuit=custom,
                                            confusion_shots=p["confusion_shots"], resamples=int(p["resamples"]),
                                            jobs=cfg.jobs, stash_idle=not p["no_stash"])
        results.append(r)
    doc = cfg.header()
    doc["results"] = [r.to_dict() for r in results]
    _write(cfg.outputs.get("output"), _dump(doc))
    if cfg.outputs.get("csv"):
        Path(cfg.outputs["csv"]).write_text("".join(r.to_csv() for r in results))
    if cfg.outputs.get("plot"):
        series = {"raw": (ns, [r.F_raw for r in results]), "corrected": (ns, [r.F_corrected for r in results])}
        if results[0].has_postselection:
            series["post-selected"] = (ns, [r.F_ps_raw for r in results])
        analysis.plot_svg(series, cfg.outputs["plot"], f"{p['family']} truth-table fidelity", "N", "F_tt")
    return 0


def cmd_grover(cfg: RunConfig) -> int:
    p = cfg.params
    variants = GROVER_VARIANTS if p["variant"] == "all" else (p["variant"],)
    doc = cfg.header()
    doc["results"] = [analysis.grover_experiment(v, int(p["shots"]), cfg.noise, hardware=cfg.hardware,
                                                 jobs=cfg.jobs).to_dict() for v in variants]
    _write(cfg.outputs.get("output"), _dump(doc))
    return 0


def cmd_leak_scan(cfg: RunConfig) -> int:
    p = cfg.params
    ns = parse_n_range(p["n_range"])
    fit = analysis.leak_scan(ns, int(p["shots"]), cfg.noise, hardware=cfg.hardware, jobs=cfg.jobs,
                             stash_idle=not p["no_stash"])
    doc = cfg.header()
    doc["results"] = fit.to_dict()
    _write(cfg.outputs.get("output"), _dump(doc))
    if cfg.outputs.get("csv"):
        Path(cfg.outputs["csv"]).write_text(fit.to_csv())
    if cfg.outputs.get("plot"):
        grid = np.linspace(min(ns), max(ns), 50)
        analysis.plot_svg({"mean leak probability": (ns, fit.means), "fit": (grid, fit.predict(grid))},
                          cfg.outputs["plot"], f"leakage fit, p = {fit.p:.3f}", "N", "leak probability")
    return 0


def cmd_calibrate(cfg: RunConfig) -> int:
    p = cfg.params
    shots = None if p["shots"] is None else int(p["shots"])
    calib, fa, fb = analysis.calibrate_pair(float(p["chi_a"]), float(p["chi_b"]), int(p["points"]), shots,
                                            cfg.noise, cfg.hardware)
    doc = cfg.header()
    doc["results"] = {"chi_a": calib.chi_a[0], "chi_b": calib.chi_b[0], "fit_a": asdict(fa), "fit_b": asdict(fb)}
    _write(cfg.outputs.get("output"), _dump(doc))
    return 0


def cmd_fit(cfg: RunConfig) -> int:
    path = cfg.params["input"]
    if path is None:
        raise ValueError("fit needs --input")
    ns, means, spreads = analysis.read_leak_csv(Path(path).read_text())
    fit = analysis.fit_leakage(list(zip(ns, means)), spreads)
    doc = cfg.header()
    doc["results"] = fit.to_dict()
    _write(cfg.outputs.get("output"), _dump(doc))
    return 0


def cmd_confusion(cfg: RunConfig) -> int:
    p = cfg.params
    if p["n"] is None:
        raise ValueError("confusion needs -n")
    cm = estimate_confusion(int(p["n"]), cfg.noise, int(p["shots"]), hardware=cfg.hardware, jobs=cfg.jobs)
    _write(cfg.outputs.get("output"), cm.to_csv())
    return 0


COMMANDS = {
    "decompose": cmd_decompose,
    "truth-table": cmd_truth_table,
    "grover": cmd_grover,
    "leak-scan": cmd_leak_scan,
    "calibrate": cmd_calibrate,
    "fit": cmd_fit,
    "confusion": cmd_confusion,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve(args)
        return COMMANDS[args.command](cfg)
    except (ValueError, OSError, RuntimeError, np.linalg.LinAlgError) as exc:
        print(f"qtk {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
