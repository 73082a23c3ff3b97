"""Command-line interface: design, locus, simulate, ensemble.

Every command that writes files also writes a JSON run manifest (the
resolved parameter set, seed, output paths, tool version and wall-clock
duration).  ``blochlock --from-manifest PATH`` re-executes the recorded
command; given the recorded seed the output files are reproduced
bit-exactly.

Angles are accepted either in radians ("0.5236") or as multiples of pi
("pi/6", "-3pi/4").  CSV output uses a header row, %.12g formatting,
comma separators and LF line endings; JSON uses UTF-8 with sorted keys.
The default output directory is $BLOCHLOCK_OUTDIR (falling back to the
working directory).

Exit codes: 0 ok, 1 usage, 2 domain/singularity error, 3 statistical
test failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import re
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .bloch import BlochVector
from .design import (
    EquatorSingularityError,
    GainSingularityError,
    SearchConfig,
    build_locus,
    optimize_noise,
    optimize_purity,
)
from .sde import SimConfig, ensemble, simulate
from .steady_state import (
    DegenerateSteadyStateError,
    InvalidParamsError,
    SystemParams,
    stability_eigenvalues,
)

_DOMAIN_ERRORS = (InvalidParamsError, DegenerateSteadyStateError,
                  EquatorSingularityError, GainSingularityError)

_PI_RE = re.compile(r"^([+-]?)(\d*\.?\d*)\*?pi(?:/(\d*\.?\d+))?$", re.IGNORECASE)


def parse_angle(text: str) -> float:
    """Radians from '0.52', 'pi/6', '-3pi/4', '2*pi/3'."""
    s = text.strip().replace(" ", "")
    m = _PI_RE.match(s)
    if m:
        sign = -1.0 if m.group(1) == "-" else 1.0
        num = float(m.group(2)) if m.group(2) else 1.0
        den = float(m.group(3)) if m.group(3) else 1.0
        return sign * num * math.pi / den
    try:
        return float(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot parse angle {text!r}") from None


def _parse_state(text: str) -> BlochVector:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("state must be 'x,y,z'")
    try:
        x, y, z = (float(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot parse state {text!r}") from None
    return BlochVector(x, y, z)


def _fmt(value) -> str:
    if isinstance(value, str):
        return value
    return f"{value:.12g}"


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _write_manifest(out_dir: Path, command: str, params: dict,
                    outputs: list[Path], duration: float, name: str) -> Path:
    payload = {
        "command": command,
        "parameters": params,
        "outputs": [str(p) for p in outputs],
        "tool_version": __version__,
        "duration_s": duration,
    }
    path = out_dir / name
    _write_json(path, payload)
    return path


def _design_payload(design, report) -> dict:
    return {
        "theta": design.theta,
        "gamma": design.gamma,
        "eta": design.eta,
        "lam": design.lam,
        "alpha": design.alpha,
        "steady_state": [design.steady_state.x, design.steady_state.y,
                         design.steady_state.z],
        "r_squared": design.r_squared,
        "objective": design.objective,
        "flags": list(design.flags),
        "eigenvalues": [[ev.real, ev.imag] for ev in report.eigenvalues],
        "classification": report.classification,
    }


# ---------------------------------------------------------------- executors
# Each executor takes the resolved parameter dict (as stored in a
# manifest) and returns (outputs, exit_code).

def _optimizer(objective: str):
    return optimize_noise if objective == "noise" else optimize_purity


def _search_config(params: dict) -> SearchConfig:
    off = params.get("near_equator_offset")
    return SearchConfig() if off is None else SearchConfig(equator_offset=off)


def _run_design(params: dict, out_dir: Path) -> tuple[list[Path], int]:
    design = _optimizer(params["objective"])(
        params["theta"], params["gamma"], params["eta"], _search_config(params))
    report = stability_eigenvalues(design.params())
    payload = _design_payload(design, report)
    b = design.steady_state
    print(f"theta          {design.theta:.10g}")
    print(f"gamma          {design.gamma:.10g}")
    print(f"eta            {design.eta:.10g}")
    print(f"objective      {design.objective}")
    print(f"gain lambda    {design.lam:.10g}")
    print(f"drive alpha    {design.alpha:.10g}")
    print(f"steady state   ({b.x:.10g}, {b.y:.10g}, {b.z:.10g})")
    print(f"purity r^2     {design.r_squared:.10g}")
    evs = ", ".join(f"{ev.real:.10g}{ev.imag:+.10g}j" for ev in report.eigenvalues)
    print(f"eigenvalues    {evs}")
    print(f"stability      {report.classification}")
    if design.flags:
        print(f"flags          {';'.join(design.flags)}")
    outputs: list[Path] = []
    if params.get("json_path"):
        path = out_dir / params["json_path"]
        _write_json(path, payload)
        outputs.append(path)
    if "equator-offset" in design.flags and params.get("near_equator_offset") is None:
        print("error: requested direction lies on the equator, where the "
              "design is only marginally stable and the drive diverges; "
              "pass --near-equator-offset to design nearby instead",
              file=sys.stderr)
        return outputs, 2
    return outputs, 0


def _run_locus(params: dict, out_dir: Path) -> tuple[list[Path], int]:
    thetas = np.linspace(-math.pi, math.pi, params["n_theta"])
    outputs = []
    for eta in params["etas"]:
        table = build_locus(eta, params["gamma"], thetas,
                            objective=params["objective"],
                            search=_search_config(params))
        path = out_dir / f"locus_eta{eta:g}.csv"
        _write_csv(path,
                   ["theta", "lambda", "alpha", "x", "z", "r_squared", "errors"],
                   [(r.theta, r.lam, r.alpha, r.x, r.z, r.r_squared, r.error)
                    for r in table.rows])
        outputs.append(path)
        n_err = sum(1 for r in table.rows if r.error)
        print(f"eta={eta:g}: {len(table.rows)} rows ({n_err} flagged) -> {path}")
    return outputs, 0


def _resolve_gain_drive(params: dict) -> tuple[float, float]:
    if params.get("lam") is not None:
        return params["lam"], params["alpha"]
    design = _optimizer(params["objective"])(
        params["theta"], params["gamma"], params["eta"], _search_config(params))
    if "equator-offset" in design.flags and params.get("near_equator_offset") is None:
        raise EquatorSingularityError(
            "equator direction requested; pass --near-equator-offset or "
            "explicit --lam/--alpha")
    return design.lam, design.alpha


def _run_simulate(params: dict, out_dir: Path) -> tuple[list[Path], int]:
    lam, alpha = _resolve_gain_drive(params)
    params["lam"], params["alpha"] = lam, alpha
    cfg = SimConfig(
        params=SystemParams(gamma=params["gamma"], eta=params["eta"],
                            alpha=alpha, lam=lam),
        dt=params["dt"], t_final=params["t_final"], seed=params["seed"],
        initial_state=BlochVector(*params["initial"]), scheme=params["scheme"])
    if cfg.dt_warning:
        print(f"warning: dt={cfg.dt:g} exceeds 1e-2/gamma", file=sys.stderr)
    traj = simulate(cfg)
    path = out_dir / params["out"]
    inc = np.append(traj.photocurrent_increments, np.nan)
    _write_csv(path, ["t", "x", "y", "z", "r2", "I_dt"],
               zip(traj.times, traj.x, traj.y, traj.z, traj.r_squared, inc))
    print(f"trajectory ({cfg.n_steps} steps, scheme {cfg.scheme}) -> {path}")
    print(f"final state ({traj.x[-1]:.6g}, {traj.y[-1]:.6g}, {traj.z[-1]:.6g}), "
          f"max r^2 = {traj.metadata['max_r_squared']:.6g}")
    return [path], 0


def _run_ensemble(params: dict, out_dir: Path) -> tuple[list[Path], int]:
    lam, alpha = _resolve_gain_drive(params)
    params["lam"], params["alpha"] = lam, alpha
    cfg = SimConfig(
        params=SystemParams(gamma=params["gamma"], eta=params["eta"],
                            alpha=alpha, lam=lam),
        dt=params["dt"], t_final=params["t_final"], seed=params["seed"],
        n_trajectories=params["n_trajectories"],
        initial_state=BlochVector(*params["initial"]), scheme=params["scheme"])
    sample_times = np.linspace(0.0, cfg.t_final, params["n_samples"])
    stats = ensemble(cfg, sample_times)
    path = out_dir / params["out"]
    _write_csv(path,
               ["t", "mean_x", "mean_y", "mean_z", "stderr_x", "stderr_y",
                "stderr_z", "mean_r2", "det_x", "det_y", "det_z"],
               [(t, *m, *se, r2, *d) for t, m, se, r2, d in
                zip(stats.times, stats.mean_bloch, stats.stderr_bloch,
                    stats.mean_r_squared, stats.deterministic)])
    print(f"ensemble stats ({cfg.n_trajectories} trajectories) -> {path}")
    # mean-vs-deterministic equivalence at 4 standard errors
    diff = np.abs(stats.mean_bloch - stats.deterministic)
    bound = 4.0 * stats.stderr_bloch
    ok = bool(np.all((diff <= bound) | (bound == 0.0) & (diff <= 1e-12)))
    worst = float(np.nanmax(np.where(bound > 0, diff / bound, 0.0)))
    print(f"ensemble-mean vs deterministic solution: "
          f"{'PASS' if ok else 'FAIL'} (worst |diff|/4SE = {worst:.3f})")
    return [path], 0 if ok else 3


_EXECUTORS = {
    "design": _run_design,
    "locus": _run_locus,
    "simulate": _run_simulate,
    "ensemble": _run_ensemble,
}


# ------------------------------------------------------------------ parser

class _Parser(argparse.ArgumentParser):
    """argparse variant that exits 1 (not 2) on usage errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_common_design_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--theta", type=parse_angle, default=None,
                   help="target Bloch angle (radians or 'pi/6' style)")
    p.add_argument("--gamma", type=float, default=1.0, help="decay rate (default 1)")
    p.add_argument("--eta", type=float, default=1.0, help="detector efficiency")
    p.add_argument("--objective", choices=["purity", "noise"], default="purity")
    p.add_argument("--near-equator-offset", type=float, default=None,
                   metavar="RAD", help="accept equator requests, designing "
                   "this far inside the matching hemisphere")


def _add_sim_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--lam", type=float, default=None,
                   help="explicit feedback gain (with --alpha, bypasses design)")
    p.add_argument("--alpha", type=float, default=None,
                   help="explicit drive amplitude (with --lam)")
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--t-final", type=float, default=10.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scheme", choices=["euler", "milstein", "taylor15"],
                   default="taylor15")
    p.add_argument("--initial", type=_parse_state, default=BlochVector(0, 0, -1),
                   metavar="X,Y,Z", help="initial state (default ground 0,0,-1)")


def build_parser() -> _Parser:
    parser = _Parser(prog="blochlock", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version",
                        version=f"blochlock {__version__}")
    parser.add_argument("--from-manifest", metavar="PATH", default=None,
                        help="re-execute the command recorded in a manifest")
    parser.add_argument("--out-dir", default=None,
                        help="output directory (default $BLOCHLOCK_OUTDIR or '.')")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("design", help="optimal gain/drive for a target angle")
    _add_common_design_flags(p)
    p.add_argument("--json", dest="json_path", default=None, metavar="FILE",
                   help="also write the design as JSON")

    p = sub.add_parser("locus", help="optimal-purity loci over a theta grid")
    p.add_argument("--eta", dest="etas", type=float, action="append", default=None,
                   help="detector efficiency (repeatable; default "
                        "1,0.8,0.6,0.4,0.2,0)")
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--n-theta", type=int, default=180)
    p.add_argument("--objective", choices=["purity", "noise"], default="purity")
    p.add_argument("--near-equator-offset", type=float, default=None)

    p = sub.add_parser("simulate", help="one conditioned trajectory to CSV")
    _add_common_design_flags(p)
    _add_sim_flags(p)
    p.add_argument("--out", default="trajectory.csv")

    p = sub.add_parser("ensemble", help="ensemble statistics + equivalence test")
    _add_common_design_flags(p)
    _add_sim_flags(p)
    p.add_argument("--n-trajectories", type=int, default=1000)
    p.add_argument("--n-samples", type=int, default=51)
    p.add_argument("--out", default="ensemble.csv")

    return parser


def _params_from_args(args: argparse.Namespace) -> dict:
    cmd = args.command
    if cmd == "design":
        if args.theta is None:
            raise _Usage("design requires --theta")
        return {"theta": args.theta, "gamma": args.gamma, "eta": args.eta,
                "objective": args.objective,
                "near_equator_offset": args.near_equator_offset,
                "json_path": args.json_path}
    if cmd == "locus":
        etas = args.etas if args.etas else [1.0, 0.8, 0.6, 0.4, 0.2, 0.0]
        return {"etas": etas, "gamma": args.gamma, "n_theta": args.n_theta,
                "objective": args.objective,
                "near_equator_offset": args.near_equator_offset}
    # simulate / ensemble
    if (args.lam is None) != (args.alpha is None):
        raise _Usage("--lam and --alpha must be given together")
    if args.lam is None and args.theta is None:
        raise _Usage(f"{cmd} requires --theta or an explicit --lam/--alpha pair")
    params = {"theta": args.theta, "gamma": args.gamma, "eta": args.eta,
              "objective": args.objective,
              "near_equator_offset": args.near_equator_offset,
              "lam": args.lam, "alpha": args.alpha,
              "dt": args.dt, "t_final": args.t_final, "seed": args.seed,
              "scheme": args.scheme,
              "initial": [args.initial.x, args.initial.y, args.initial.z],
              "out": args.out}
    if cmd == "ensemble":
        if args.n_trajectories < 2:
            raise _Usage("ensemble requires --n-trajectories >= 2")
        params.update({"n_trajectories": args.n_trajectories,
                       "n_samples": args.n_samples})
    return params


class _Usage(Exception):
    pass


def _dispatch(command: str, params: dict, out_dir: Path) -> int:
    out_dir.mkdir(parents=True, exist_ok=True)
    start = time.monotonic()
    try:
        outputs, code = _EXECUTORS[command](params, out_dir)
    except _DOMAIN_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if outputs:
        manifest = _write_manifest(
            out_dir, command, params, outputs, time.monotonic() - start,
            name=Path(outputs[0]).name + ".manifest.json"
            if command != "locus" else "locus.manifest.json")
        print(f"manifest -> {manifest}")
    return code


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    out_dir = Path(args.out_dir or os.environ.get("BLOCHLOCK_OUTDIR", "."))

    if args.from_manifest:
        try:
            with open(args.from_manifest, encoding="utf-8") as fh:
                manifest = json.load(fh)
            command = manifest["command"]
            params = manifest["parameters"]
        except (OSError, KeyError, json.JSONDecodeError) as exc:
            print(f"error: cannot load manifest: {exc}", file=sys.stderr)
            return 1
        if command not in _EXECUTORS:
            print(f"error: unknown command {command!r} in manifest", file=sys.stderr)
            return 1
        return _dispatch(command, params, out_dir)

    if not args.command:
        parser.error("a command is required (design, locus, simulate, ensemble)")
    try:
        params = _params_from_args(args)
    except _Usage as exc:
        parser.error(str(exc))
    return _dispatch(args.command, params, out_dir)


if __name__ == "__main__":
    sys.exit(main())
