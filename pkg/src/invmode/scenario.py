"""Scenario files: TOML schema, strict validation, and deterministic output.

A scenario fully describes one simulation/analysis case: grid and load,
inverters (filter, line, synthesis parameters, mode point, setpoints, mode
schedule), timed events, solver settings, and requested spectral extracts.
Unknown keys are rejected everywhere; a typo in a scenario file is an error,
never a silent default.

The run manifest hashes the canonical scenario (everything except [meta]),
so re-running an unchanged scenario is bit-reproducible and the hash moves
iff a semantically meaningful field does.
"""

from __future__ import annotations

import hashlib
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import __version__
from .plant import InverterParams, LineParams
from .sim import (
    GridConfig,
    NetworkConfig,
    SimEvent,
    SimInverter,
    SimResult,
    SolverConfig,
    spectral_extract,
)
from .synth import ModePoint, SynthParams, apply_mode_point, default_params

__all__ = [
    "Scenario",
    "ScenarioError",
    "RunManifest",
    "load_scenario",
    "parse_scenario",
    "serialize_scenario",
    "scenario_hash",
    "write_outputs",
]

TWO_PI = 2.0 * math.pi


class ScenarioError(ValueError):
    """Invalid scenario file content."""


EVENT_PARAMS = {
    "grid_voltage_step": {"dv_pu"},
    "grid_freq_step": {"df_hz"},
    "grid_freq_ramp": {"rate", "duration"},
    "islanding": set(),
    "reconnect": set(),
    "load_step": {"factor"},
    "l2g_fault": {"depth", "duration"},
    "setpoint_step": {"inverter", "setpoint_kind", "d_pu", "q_pu"},
    "mode_ramp": {"inverter", "kappa_v", "kappa_theta", "ramp"},
}

_SYNTH_KEYS = {
    "wm_hz", "wd_hz", "wq_hz", "w1_hz", "w2_hz", "wf_hz", "w_j_hz",
    "wtheta", "a", "a_d", "a_q", "alpha_v", "alpha_theta",
    "kappa_v", "kappa_theta", "k_w0", "k_2w0", "dw_max_hz", "shaper",
}
_FILTER_KEYS = {"li", "ri", "ci", "vdc", "v0", "rating"}
_LINE_KEYS = {"r", "l"}
_SETPOINT_KEYS = {"kind", "d_pu", "q_pu"}
_SCHED_KEYS = {"t", "kappa_v", "kappa_theta", "ramp"}


def _check_keys(d: dict, allowed: set, where: str):
    unknown = set(d) - allowed
    if unknown:
        raise ScenarioError(f"unknown key(s) {sorted(unknown)} in [{where}]")


@dataclass
class Scenario:
    """Fully-resolved scenario: canonical dict plus typed sim objects."""

    name: str
    description: str
    canonical: dict  # everything except meta, defaults applied
    network: NetworkConfig
    events: list[SimEvent]
    solver: SolverConfig
    spectral: list[dict] = field(default_factory=list)

    @property
    def hash(self) -> str:
        return scenario_hash(self.canonical)


def scenario_hash(canonical: dict) -> str:
    blob = json.dumps(canonical, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        with open(path, "rb") as f:
            raw = tomllib.load(f)
    except tomllib.TOMLDecodeError as e:
        raise ScenarioError(f"{path}: TOML parse error: {e}") from None
    return parse_scenario(raw, name_hint=path.stem)


def parse_scenario(raw: dict, name_hint: str = "scenario") -> Scenario:
    _check_keys(raw, {"meta", "grid", "load", "solver", "inverter", "event", "output"}, "root")
    meta = raw.get("meta", {})
    _check_keys(meta, {"name", "description"}, "meta")
    name = meta.get("name", name_hint)
    description = meta.get("description", "")

    grid_d = dict(raw.get("grid", {}))
    _check_keys(grid_d, {"v_mag_pu", "f_hz", "connected"}, "grid")
    grid_out = {
        "v_mag_pu": float(grid_d.get("v_mag_pu", 1.0)),
        "f_hz": float(grid_d.get("f_hz", 60.0)),
        "connected": bool(grid_d.get("connected", True)),
    }

    load_d = raw.get("load")
    load_out = None
    if load_d is not None:
        _check_keys(load_d, {"r_ohm"}, "load")
        load_out = {"r_ohm": float(load_d["r_ohm"])}
        if load_out["r_ohm"] <= 0:
            raise ScenarioError("load.r_ohm must be positive")

    sol_d = dict(raw.get("solver", {}))
    _check_keys(sol_d, {"duration", "physics_dt", "control_ts", "decimation", "seed"}, "solver")
    solver_out = {
        "duration": float(sol_d.get("duration", 1.0)),
        "physics_dt": float(sol_d.get("physics_dt", 2e-6)),
        "control_ts": float(sol_d.get("control_ts", 2e-5)),
        "decimation": int(sol_d.get("decimation", 10)),
        "seed": int(sol_d.get("seed", 0)),
    }
    try:
        solver = SolverConfig(**solver_out)
    except ValueError as e:
        raise ScenarioError(f"solver: {e}") from None

    invs_raw = raw.get("inverter", [])
    if not isinstance(invs_raw, list) or not invs_raw:
        raise ScenarioError("need at least one [[inverter]]")
    w0 = TWO_PI * grid_out["f_hz"]

    inv_out = []
    units = []
    names = []
    for k, d in enumerate(invs_raw):
        where = f"inverter.{k}"
        _check_keys(d, {"name", "filter", "line", "line_design", "synth", "setpoint", "mode_schedule"}, where)
        nm = d.get("name", f"inv{k + 1}")
        if nm in names:
            raise ScenarioError(f"duplicate inverter name {nm!r}")
        names.append(nm)

        f = dict(d.get("filter", {}))
        _check_keys(f, _FILTER_KEYS, where + ".filter")
        fil = {
            "li": float(f.get("li", 1e-3)),
            "ri": float(f.get("ri", 0.05)),
            "ci": float(f.get("ci", 15e-6)),
            "vdc": float(f.get("vdc", 450.0)),
            "v0": float(f.get("v0", 169.7)),
            "rating": float(f.get("rating", 10.0)),
        }
        ln = dict(d.get("line", {}))
        _check_keys(ln, _LINE_KEYS, where + ".line")
        line = {"r": float(ln.get("r", 0.5)), "l": float(ln.get("l", 1e-3))}
        line_design = None
        if "line_design" in d:
            lnd = dict(d["line_design"])
            _check_keys(lnd, _LINE_KEYS, where + ".line_design")
            line_design = {"r": float(lnd.get("r", line["r"])), "l": float(lnd.get("l", line["l"]))}

        s = dict(d.get("synth", {}))
        _check_keys(s, _SYNTH_KEYS, where + ".synth")
        wq = TWO_PI * float(s.get("wq_hz", 300.0))
        synth = {
            "wm_hz": float(s.get("wm_hz", 1000.0)),
            "wd_hz": float(s.get("wd_hz", 300.0)),
            "wq_hz": wq / TWO_PI,
            "w1_hz": float(s.get("w1_hz", 1.5)),
            "w2_hz": float(s.get("w2_hz", 15.0)),
            "a": float(s.get("a", 1.0 / 3.0)),
            "alpha_v": float(s.get("alpha_v", TWO_PI * 5)),
            "alpha_theta": float(s.get("alpha_theta", 600.0)),
            "kappa_v": float(s.get("kappa_v", 2.0)),
            "kappa_theta": float(s.get("kappa_theta", 0.01)),
            "k_w0": float(s.get("k_w0", 0.0)),
            "k_2w0": float(s.get("k_2w0", 0.0)),
            "dw_max_hz": float(s.get("dw_max_hz", 0.5)),
            "shaper": str(s.get("shaper", "diagonal")),
        }
        if "a_d" in s:
            synth["a_d"] = float(s["a_d"])
        if "a_q" in s:
            synth["a_q"] = float(s["a_q"])
        if "wf_hz" in s:
            synth["wf_hz"] = float(s["wf_hz"])
        if "w_j_hz" in s and "wtheta" in s:
            raise ScenarioError(f"{where}.synth: give w_j_hz or wtheta, not both")
        if "w_j_hz" in s:
            synth["w_j_hz"] = float(s["w_j_hz"])
        else:
            synth["wtheta"] = float(s.get("wtheta", 900.0))

        sp = dict(d.get("setpoint", {}))
        _check_keys(sp, _SETPOINT_KEYS, where + ".setpoint")
        setp = {
            "kind": str(sp.get("kind", "current")),
            "d_pu": float(sp.get("d_pu", 0.0)),
            "q_pu": float(sp.get("q_pu", 0.0)),
        }
        if setp["kind"] not in ("current", "pq"):
            raise ScenarioError(f"{where}.setpoint.kind must be 'current' or 'pq'")

        sched_out = []
        for j, row in enumerate(d.get("mode_schedule", [])):
            _check_keys(row, _SCHED_KEYS, f"{where}.mode_schedule.{j}")
            sched_out.append(
                {
                    "t": float(row["t"]),
                    "kappa_v": float(row["kappa_v"]),
                    "kappa_theta": float(row["kappa_theta"]),
                    "ramp": float(row.get("ramp", 0.0)),
                }
            )
            if sched_out[-1]["t"] > solver.duration:
                raise ScenarioError(f"{where}.mode_schedule.{j}: time beyond duration")

        entry = {
            "name": nm,
            "filter": fil,
            "line": line,
            "synth": synth,
            "setpoint": setp,
            "mode_schedule": sched_out,
        }
        if line_design is not None:
            entry["line_design"] = line_design
        inv_out.append(entry)
        units.append(_build_unit(nm, fil, line, line_design, synth, setp, sched_out, w0))

    events_out = []
    events = []
    for j, e in enumerate(raw.get("event", [])):
        where = f"event.{j}"
        if "t" not in e or "kind" not in e:
            raise ScenarioError(f"{where}: needs t and kind")
        kind = str(e["kind"])
        if kind not in EVENT_PARAMS:
            raise ScenarioError(f"{where}: unknown kind {kind!r}")
        _check_keys(e, EVENT_PARAMS[kind] | {"t", "kind"}, where)
        t = float(e["t"])
        if not (0 <= t <= solver.duration):
            raise ScenarioError(f"{where}: t={t} outside run duration")
        params = {k: e[k] for k in e if k not in ("t", "kind")}
        if "inverter" in params and params["inverter"] not in names:
            raise ScenarioError(f"{where}: unknown inverter {params['inverter']!r}")
        events_out.append({"t": t, "kind": kind, **params})
        events.append(_build_event(t, kind, params, units, names))
    events_out.sort(key=lambda d: d["t"])
    events.sort(key=lambda e: e.t)

    out_d = raw.get("output", {})
    _check_keys(out_d, {"spectral"}, "output")
    spectral = []
    for j, srow in enumerate(out_d.get("spectral", [])):
        _check_keys(srow, {"inverter", "channel", "f_hz", "window"}, f"output.spectral.{j}")
        if srow["inverter"] not in names:
            raise ScenarioError(f"output.spectral.{j}: unknown inverter")
        spectral.append(
            {
                "inverter": str(srow["inverter"]),
                "channel": str(srow["channel"]),
                "f_hz": float(srow["f_hz"]),
                "window": float(srow.get("window", 0.05)),
            }
        )

    grid_v = grid_out["v_mag_pu"] * units[0].inv.v0
    network = NetworkConfig(
        grid=GridConfig(v_mag=grid_v, connected=grid_out["connected"]),
        inverters=units,
        load_R=None if load_out is None else load_out["r_ohm"],
    )
    try:
        network.validate()
    except ValueError as e:
        raise ScenarioError(str(e)) from None

    canonical = {
        "grid": grid_out,
        "load": load_out,
        "solver": solver_out,
        "inverter": inv_out,
        "event": events_out,
        "output": {"spectral": spectral},
    }
    return Scenario(
        name=name,
        description=description,
        canonical=canonical,
        network=network,
        events=events,
        solver=solver,
        spectral=spectral,
    )


def _build_unit(nm, fil, line, line_design, synth, setp, sched, w0) -> SimInverter:
    # the controller is synthesized against the design line; physics uses the
    # true line (they coincide unless [inverter.line_design] is given)
    true_lp = LineParams(R=line["r"], L=line["l"], w0=w0)
    ld = line_design if line_design is not None else line
    lp = LineParams(R=ld["r"], L=ld["l"], w0=w0)
    ip = InverterParams(
        Li=fil["li"], Ri=fil["ri"], Ci=fil["ci"], vdc=fil["vdc"],
        v0=fil["v0"], rating=fil["rating"],
    )
    kw = {
        "wm": TWO_PI * synth["wm_hz"],
        "wd": TWO_PI * synth["wd_hz"],
        "wq": TWO_PI * synth["wq_hz"],
        "w1": TWO_PI * synth["w1_hz"],
        "w2": TWO_PI * synth["w2_hz"],
        "a": synth["a"],
        "alpha_v": synth["alpha_v"],
        "alpha_th": synth["alpha_theta"],
        "k_w0": synth["k_w0"],
        "k_2w0": synth["k_2w0"],
        "dw_max": TWO_PI * synth["dw_max_hz"],
        "shaper": synth["shaper"],
    }
    if "a_d" in synth:
        kw["a_d"] = synth["a_d"]
    if "a_q" in synth:
        kw["a_q"] = synth["a_q"]
    if "wf_hz" in synth:
        kw["wf"] = TWO_PI * synth["wf_hz"]
    try:
        p = default_params(lp, **kw)
        if "w_j_hz" in synth:
            from .synth import wtheta_for_inertia

            p = wtheta_for_inertia(p, TWO_PI * synth["w_j_hz"])
        else:
            from dataclasses import replace

            p = replace(p, wtheta=synth["wtheta"], wf=kw.get("wf", 5.0 * synth["wtheta"] * p.aq * p.w2 / p.wq))
        p = apply_mode_point(p, ModePoint(synth["kappa_v"], synth["kappa_theta"]))
    except ValueError as e:
        raise ScenarioError(f"inverter {nm}: {e}") from None

    if setp["kind"] == "pq":
        s_base = 1.5 * ip.v0 * ip.rating
        sp_si = (setp["d_pu"] * s_base, setp["q_pu"] * s_base)
    else:
        sp_si = (setp["d_pu"] * ip.rating, setp["q_pu"] * ip.rating)
    schedule = [(r["t"], r["kappa_v"], r["kappa_theta"], r["ramp"]) for r in sched]
    return SimInverter(nm, ip, p, setp["kind"], sp_si, schedule, line_true=true_lp)


def _build_event(t, kind, params, units, names) -> SimEvent:
    p = dict(params)
    if kind == "setpoint_step":
        i = names.index(p.pop("inverter"))
        u = units[i]
        k = p.pop("setpoint_kind", "current")
        if k == "pq":
            s_base = 1.5 * u.inv.v0 * u.inv.rating
            a, b = p.pop("d_pu", 0.0) * s_base, p.pop("q_pu", 0.0) * s_base
        else:
            a, b = p.pop("d_pu", 0.0) * u.inv.rating, p.pop("q_pu", 0.0) * u.inv.rating
        return SimEvent(t, kind, {"inverter": i, "kind": k, "a": a, "b": b})
    if kind == "mode_ramp":
        p["inverter"] = names.index(p["inverter"])
    return SimEvent(t, kind, p)


# --------------------------------------------------------------------------
# serialization (subset TOML emitter sufficient for scenario round-trips)


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    if isinstance(v, str):
        return json.dumps(v)
    raise TypeError(f"cannot serialize {type(v)}")


def serialize_scenario(sc: Scenario) -> str:
    c = sc.canonical
    lines = ["[meta]", f"name = {_toml_value(sc.name)}", f"description = {_toml_value(sc.description)}", ""]

    def table(name,
              d):
        lines.append(f"[{name}]")
        for k, v in d.items():
            lines.append(f"{k} = {_toml_value(v)}")
        lines.append("")

    table("grid", c["grid"])
    if c["load"] is not None:
        table("load", c["load"])
    table("solver", c["solver"])
    for inv in c["inverter"]:
        lines.append("[[inverter]]")
        lines.append(f"name = {_toml_value(inv['name'])}")
        lines.append("")
        for sect in ("filter", "line", "line_design", "synth", "setpoint"):
            if sect not in inv:
                continue
            lines.append(f"[inverter.{sect}]")
            for k, v in inv[sect].items():
                lines.append(f"{k} = {_toml_value(v)}")
            lines.append("")
        for row in inv["mode_schedule"]:
            lines.append("[[inverter.mode_schedule]]")
            for k, v in row.items():
                lines.append(f"{k} = {_toml_value(v)}")
            lines.append("")
    for e in c["event"]:
        lines.append("[[event]]")
        for k, v in e.items():
            lines.append(f"{k} = {_toml_value(v)}")
        lines.append("")
    for s in c["output"]["spectral"]:
        lines.append("[[output.spectral]]")
        for k, v in s.items():
            lines.append(f"{k} = {_toml_value(v)}")
        lines.append("")
    return "\n".join(lines)


# --------------------------------------------------------------------------
# outputs


@dataclass
class RunManifest:
    scenario_hash: str
    toolkit_version: str
    solver: dict
    wall_clock_s: float
    files: list[str]
    events_applied: list[dict]
    complete: bool = True
    schema_version: int = 1

    def as_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "scenario_hash": self.scenario_hash,
            "toolkit_version": self.toolkit_version,
            "solver": self.solver,
            "wall_clock_s": self.wall_clock_s,
            "files": self.files,
            "events_applied": self.events_applied,
            "complete": self.complete,
        }


_UNITS = {
    "t": "s", "ig_d": "A", "ig_q": "A", "vc_d": "V", "vc_q": "V",
    "theta_dot": "rad/s", "P": "W", "Q": "var", "u_theta": "V",
    "ep_d": "A", "ep_q": "A", "kappa_v": "-", "kappa_theta": "-",
    "m_d": "-", "m_q": "-", "vg_d": "V", "vg_q": "V",
    "grid_dw": "rad/s", "islanded": "-",
}


def _write_csv(path: Path, header: list[str], cols: list[np.ndarray]):
    with open(path, "w") as f:
        f.write("# " + ",".join(f"{h} [{_UNITS.get(h, '?')}]" for h in header) + "\n")
        f.write(",".join(header) + "\n")
        data = np.column_stack(cols)
        np.savetxt(f, data, delimiter=",", fmt="%.10g")


def write_outputs(sc: Scenario, res: SimResult, outdir) -> RunManifest:
    """One CSV per inverter, one bus CSV, spectral extracts, manifest last."""
    from ._kernel import BUS_CHANNELS, REC_CHANNELS

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    files = []
    for i, nm in enumerate(res.names):
        path = outdir / f"{nm}.csv"
        _write_csv(path, ["t"] + REC_CHANNELS, [res.t] + [res.inv[:, i, k] for k in range(len(REC_CHANNELS))])
        files.append(path.name)
    bus_path = outdir / "bus.csv"
    _write_csv(bus_path, ["t"] + BUS_CHANNELS, [res.t] + [res.bus[:, k] for k in range(len(BUS_CHANNELS))])
    files.append(bus_path.name)

    for s in sc.spectral:
        series = res.channel(s["channel"], s["inverter"])
        mag = spectral_extract(series, res.sample_rate, s["f_hz"], s["window"])
        name = f"spectral_{s['inverter']}_{s['channel']}_{s['f_hz']:g}Hz.csv"
        with open(outdir / name, "w") as f:
            f.write(f"# t [s],mag [{_UNITS.get(s['channel'], '?')}]\n")
            f.write("t,mag\n")
            np.savetxt(f, np.column_stack([res.t, mag]), delimiter=",", fmt="%.10g")
        files.append(name)

    manifest = RunManifest(
        scenario_hash=sc.hash,
        toolkit_version=__version__,
        solver=sc.canonical["solver"],
        wall_clock_s=res.wall_clock_s,
        files=files,
        events_applied=res.events_applied,
    )
    with open(outdir / "manifest.json", "w") as f:
        json.dump(manifest.as_dict(), f, indent=2, sort_keys=True)
    return manifest
