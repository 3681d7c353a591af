"""Command-line entry point.

Commands: analyze, bode, simulate, sweep, modes. Exit codes follow the
documented contract: 0 success, 1 scenario validation error, 2 analysis
failure (any stability verdict false), 3 simulation divergence.

INVMODE_OUT_DIR sets the default output directory (default ./invmode_out).
"""

from __future__ import annotations

import argparse
import copy
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import check_stability, classify_mode, factorize, freq_shape
from .plant import line_tf
from .scenario import (
    Scenario,
    ScenarioError,
    load_scenario,
    parse_scenario,
    write_outputs,
)
from .sim import SimDivergenceError, Simulator
from .synth import make_controllers
from .tf import default_omega_grid, singular_values

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_ANALYSIS = 2
EXIT_DIVERGENCE = 3

MODE_TABLE_TEXT = """\
Vertex modes by structural integrator counts (d-axis, q-axis):
  (0,1) GFM      voltage+frequency droop at the PCC
  (0,2) ESS      d-axis droop, perfect frequency tracking
  (1,1) STATCOM  perfect d-axis tracking, frequency droop
  (1,2) GFL      perfect tracking of both axes
kappa_v = 0 inserts the d-axis integrator; kappa_theta = 0 inserts the
second q-axis integrator. Any kappa > 0 point lies on the 2D continuum
between the vertices; large kappa approaches stiff voltage-source (VSI)
behavior.
"""


def _outdir(args) -> Path:
    if getattr(args, "out", None):
        return Path(args.out)
    return Path(os.environ.get("INVMODE_OUT_DIR", "invmode_out"))


def _load(path: str) -> Scenario:
    return load_scenario(path)


def cmd_analyze(args) -> int:
    sc = _load(args.scenario)
    report = {"scenario": sc.name, "toolkit_version": __version__, "inverters": {}}
    all_ok = True
    for unit in sc.network.inverters:
        cs = make_controllers(unit.synth)
        stab = check_stability(cs, line_true=unit.line)
        mode = classify_mode(cs)
        report["inverters"][unit.name] = {
            "stability": stab.as_dict(),
            "mode": mode.as_dict(),
        }
        all_ok = all_ok and stab.verdict
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.json:
        Path(args.json).write_text(text)
    print(text)
    return EXIT_OK if all_ok else EXIT_ANALYSIS


def cmd_bode(args) -> int:
    sc = _load(args.scenario)
    names = [u.name for u in sc.network.inverters]
    idx = names.index(args.inverter) if args.inverter else 0
    unit = sc.network.inverters[idx]
    cs = make_controllers(unit.synth)
    GL = line_tf(unit.synth.line)
    GM = cs.KL @ GL
    w = default_omega_grid(args.wmin, args.wmax, args.per_decade)

    loop = args.loop
    if loop == "d":
        resp = (cs.Kd * GM[0, 0]).freqresp(w)
        cols, vals = ["mag", "phase_deg"], [np.abs(resp), np.degrees(np.unwrap(np.angle(resp)))]
    elif loop == "q":
        resp = (cs.Kq * GM[1, 1]).freqresp(w)
        cols, vals = ["mag", "phase_deg"], [np.abs(resp), np.degrees(np.unwrap(np.angle(resp)))]
    elif loop in ("Ttheta", "Tv"):
        sh = freq_shape(cs, GM[1, 1])
        tf = sh["T_theta"] if loop == "Ttheta" else sh["T_v"]
        resp = tf.freqresp(w)
        cols, vals = ["mag", "phase_deg"], [np.abs(resp), np.degrees(np.unwrap(np.angle(resp)))]
    elif loop == "eps":
        fr = factorize(cs.KL, cs.Ktilde(), GL, omega=w)
        cols, vals = ["eps"], [fr.eps_profile]
    elif loop == "sigma":
        r = GM.freqresp(w)
        sv = np.array([singular_values(r[k]) for k in range(len(w))])
        cols, vals = ["sigma_max", "sigma_min"], [sv[:, 0], sv[:, 1]]
    else:
        print(f"unknown loop {loop!r}", file=sys.stderr)
        return EXIT_VALIDATION

    out = args.out or f"bode_{unit.name}_{loop}.csv"
    with open(out, "w") as f:
        f.write("# omega_rad_s [rad/s]," + ",".join(f"{c} [-]" for c in cols) + "\n")
        f.write("omega_rad_s," + ",".join(cols) + "\n")
        np.savetxt(f, np.column_stack([w] + vals), delimiter=",", fmt="%.10g")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    sc = _load(args.scenario)
    outdir = _outdir(args)
    try:
        sim = Simulator(sc.network, sc.solver)
        res = sim.run(sc.events)
    except SimDivergenceError as e:
        print(f"simulation diverged: {e}", file=sys.stderr)
        outdir.mkdir(parents=True, exist_ok=True)
        (outdir / "manifest.json").write_text(
            json.dumps({"scenario_hash": sc.hash, "complete": False, "error": str(e)}, indent=2)
        )
        return EXIT_DIVERGENCE
    manifest = write_outputs(sc, res, outdir)
    print(f"wrote {len(manifest.files)} files + manifest.json to {outdir}")
    return EXIT_OK


def _set_path(d: dict, dotted: str, value: float):
    parts = dotted.split(".")
    cur = d
    for p in parts[:-1]:
        if isinstance(cur, list):
            cur = cur[int(p)]
        elif p in cur:
            cur = cur[p]
        else:
            raise KeyError(dotted)
    last = parts[-1]
    if isinstance(cur, list):
        cur[int(last)] = value
    elif last in cur:
        cur[last] = value
    else:
        raise KeyError(dotted)


def cmd_sweep(args) -> int:
    sc = _load(args.scenario)
    values = [float(v) for v in args.values.split(",")]
    rows = []
    for v in values:
        canon = copy.deepcopy(sc.canonical)
        try:
            _set_path(canon, args.param, v)
        except (KeyError, IndexError, ValueError):
            print(f"cannot resolve parameter path {args.param!r}", file=sys.stderr)
            return EXIT_VALIDATION
        raw = {"meta": {"name": f"{sc.name}_sweep"}, **{k: val for k, val in canon.items() if val is not None}}
        if not raw.get("event"):
            raw.pop("event", None)
        sub = parse_scenario(raw, name_hint=f"{sc.name}@{v:g}")
        row = {"value": v}
        verdicts = []
        for unit in sub.network.inverters:
            cs = make_controllers(unit.synth)
            stab = check_stability(cs, line_true=unit.line)
            verdicts.append(stab.verdict)
            row.setdefault("pm_d_deg", stab.margins_d.phase_margin_deg)
            row.setdefault("pm_q_deg", stab.margins_q.phase_margin_deg)
        row["analysis_ok"] = all(verdicts)
        try:
            res = Simulator(sub.network, sub.solver).run(sub.events)
            row["sim_bounded"] = True
            row["ig_peak_pu"] = float(
                max(np.abs(res.inv[:, i, 0:2]).max() / res.rating[i] for i in range(len(res.names)))
            )
            th = res.channel("theta_dot", 0)
            row["theta_dot_overshoot_rad_s"] = float(th.max() - res.w0)
            tail = res.steady_mean("ig_d", 0)
            x = res.channel("ig_d", 0)
            band = 0.02 * max(abs(tail), 0.05 * res.rating[0])
            out_of_band = np.flatnonzero(np.abs(x - tail) > band)
            row["settle_s"] = float(res.t[out_of_band[-1]]) if len(out_of_band) else 0.0
        except SimDivergenceError as e:
            row["sim_bounded"] = False
            row["ig_peak_pu"] = float("nan")
            row["theta_dot_overshoot_rad_s"] = float("nan")
            row["settle_s"] = float("nan")
        rows.append(row)

    out = args.out or "sweep.csv"
    cols = ["value", "analysis_ok", "pm_d_deg", "pm_q_deg", "sim_bounded",
            "ig_peak_pu", "theta_dot_overshoot_rad_s", "settle_s"]
    with open(out, "w") as f:
        f.write("# " + args.param + " sweep\n")
        f.write(",".join(cols) + "\n")
        for r in rows:
            f.write(",".join(str(r[c]) for c in cols) + "\n")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_modes(args) -> int:
    print(MODE_TABLE_TEXT)
    if args.scenario:
        sc = _load(args.scenario)
        for unit in sc.network.inverters:
            cs = make_controllers(unit.synth)
            m = classify_mode(cs)
            print(
                f"{unit.name}: mode={m.mode} integrators={m.integrators} "
                f"kappa=({m.kv:.4g}, {m.ktheta:.4g}) "
                f"droop_d={m.droop_d:.4g} ohm droop_q={m.droop_q:.4g} ohm*rad/s"
            )
    return EXIT_OK


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="invmode", description=__doc__)
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="stability + mode report for a scenario/design")
    p.add_argument("scenario")
    p.add_argument("--json", help="also write the JSON report to this path")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("bode", help="frequency-response CSV for a named loop")
    p.add_argument("scenario")
    p.add_argument("--loop", required=True, choices=["d", "q", "Ttheta", "Tv", "eps", "sigma"])
    p.add_argument("--inverter", help="inverter name (default: first)")
    p.add_argument("--out")
    p.add_argument("--wmin", type=float, default=1e-1)
    p.add_argument("--wmax", type=float, default=1e6)
    p.add_argument("--per-decade", type=int, default=200)
    p.set_defaults(func=cmd_bode)

    p = sub.add_parser("simulate", help="run a scenario, write CSVs + manifest")
    p.add_argument("scenario")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="one analysis+simulation per parameter value")
    p.add_argument("scenario")
    p.add_argument("--param", required=True, help="dotted path, e.g. inverter.0.line.l")
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("modes", help="print the mode table (optionally classify a design)")
    p.add_argument("scenario", nargs="?")
    p.set_defaults(func=cmd_modes)

    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as e:
        print(f"scenario error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except FileNotFoundError as e:
        print(str(e), file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
