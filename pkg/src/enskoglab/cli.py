"""Command-line front end: ``enskoglab {simulate,kinetic,blobs,reversal,stscan} --config run.json``.

Every run writes its outputs plus ``manifest.json`` into ``--out``.  Exit
status is 0 on success, 2 for an invalid configuration and 3 when the run
itself fails; failures also print a JSON object on stderr.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import bev, blobs, collision, fields, hardspheres as hs, homogeneous as hk, io, reversibility
from .errors import ConfigError, EnskogError
from .seeding import stream

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

POTENTIAL_DEFAULTS = {"strength": 1.0, "cutoff": 0.4, "power": 2, "m": 1.0}

DEFAULTS = {
    "simulate": {
        "N": 2, "a": 0.1, "L": 1.0, "velocity_scale": 1.0, "t": 1.0,
        "positions": None, "velocities": None, "n_snapshots": 11,
        "potential": None, "dt": 1e-3, "max_events": hs.DEFAULT_MAX_EVENTS, "seed": 0,
    },
    "kinetic": {
        "initial": "bimodal", "M": 24, "v_max": 6.0, "theta": 1.0, "separation": 1.0,
        "a": 1.0, "n": 1.0, "dt": None, "dt_fraction": 0.5, "steps": 200, "reverse_at": None,
        "n_samples": 10**6, "seed": 0,
    },
    "blobs": {
        "positions": None, "velocities": None, "a": 0.16, "L": 1.0,
        "eps_r": [0.02, 0.01, 0.005], "eps_v_ratio": 1.0, "S": 2000,
        "t_probe": 0.6, "t_max": 1.2, "gap_times": [0.0, 0.1, 0.25, 0.5],
        "write_ensembles": False, "seed": 0,
    },
    "reversal": {
        "class": "particle",
        # particle
        "N": 8, "a": 0.1, "L": 1.0, "velocity_scale": 1.0, "t": 4.0, "tol": reversibility.PARTICLE_TOL,
        # smooth
        "initial": "bimodal", "M": 24, "v_max": 6.0, "theta": 1.0, "separation": 1.0,
        "n": 1.0, "dt": None, "dt_fraction": 0.2, "t_rev": None, "t_total": None, "steps": 100,
        # blob
        "eps_r": 0.005, "eps_v": None, "S": 200, "positions": None, "velocities": None,
        "seed": 0,
    },
    "stscan": {
        "field": "modulated", "amplitude": 0.5, "theta": 1.0, "L": 1.0, "a": 0.05, "na2": 1.0,
        "probes": 20, "n_theta": 16, "n_phi": 32, "n_v": 17, "v_max": None,
        "potential": POTENTIAL_DEFAULTS, "vlasov_grid": 32,
        "condition_11_samples": 10_000, "gap_scan": True, "seed": 0,
    },
}


# --- configuration ------------------------------------------------------------


def load_config(command, path, seed=None) -> dict:
    """Read a JSON config, fill defaults and re-check the physical gates."""
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}")
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    raw.pop("$schema", None)
    raw.pop("comment", None)
    unknown = sorted(set(raw) - set(DEFAULTS[command]))
    if unknown:
        raise ConfigError(f"unknown config keys for {command}: {unknown}")
    cfg = {**DEFAULTS[command], **raw}
    if seed is not None:
        cfg["seed"] = seed
    if not (isinstance(cfg["seed"], int) and 0 <= cfg["seed"] < 2**64):
        raise ConfigError("seed must be an unsigned 64-bit integer")
    VALIDATORS[command](cfg)
    return cfg


def _positive(cfg, *keys):
    for k in keys:
        v = cfg[k]
        if v is None or not isinstance(v, (int, float)) or not math.isfinite(v) or v <= 0:
            raise ConfigError(f"{k} must be a positive number")


def _geometry(cfg):
    _positive(cfg, "a", "L")
    if cfg["a"] >= 0.5 * cfg["L"]:
        raise ConfigError("sphere larger than half the box")


def _potential(cfg):
    p = cfg.get("potential")
    if p is None:
        return None
    if not isinstance(p, dict):
        raise ConfigError("potential must be an object or null")
    bad = sorted(set(p) - set(POTENTIAL_DEFAULTS))
    if bad:
        raise ConfigError(f"unknown potential keys: {bad}")
    p = {**POTENTIAL_DEFAULTS, **p}
    if not 0 < p["cutoff"] <= 0.5 * cfg["L"]:
        raise ConfigError("potential cutoff must lie in (0, L/2]")
    try:
        return bev.bump_potential(float(p["strength"]), float(p["cutoff"]), float(p["m"]), int(p["power"]))
    except ValueError as e:
        raise ConfigError(str(e))


def _explicit_config(cfg) -> hs.ParticleConfig | None:
    if cfg["positions"] is None and cfg["velocities"] is None:
        return None
    if cfg["positions"] is None or cfg["velocities"] is None:
        raise ConfigError("give both positions and velocities, or neither")
    try:
        c = hs.ParticleConfig(np.array(cfg["positions"], dtype=float), np.array(cfg["velocities"], dtype=float),
                              float(cfg["a"]), float(cfg["L"]))
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from None
    c.check_overlap()
    return c


def _check_simulate(cfg):
    _geometry(cfg)
    _positive(cfg, "dt", "velocity_scale")
    if not isinstance(cfg["t"], (int, float)) or cfg["t"] < 0:
        raise ConfigError("t must be non-negative")
    if int(cfg["n_snapshots"]) < 2:
        raise ConfigError("n_snapshots must be at least 2")
    _potential(cfg)
    if _explicit_config(cfg) is None and int(cfg["N"]) < 1:
        raise ConfigError("need at least one particle")


def _check_kinetic(cfg):
    if cfg["initial"] not in ("maxwellian", "bimodal"):
        raise ConfigError("initial must be 'maxwellian' or 'bimodal'")
    _positive(cfg, "v_max", "theta", "a", "n", "dt_fraction")
    if int(cfg["M"]) < 4 or int(cfg["steps"]) < 0:
        raise ConfigError("need M >= 4 and steps >= 0")
    if cfg["dt"] is not None:
        _positive(cfg, "dt")
    ra = cfg["reverse_at"]
    if ra is not None and not 0 <= int(ra) <= int(cfg["steps"]):
        raise ConfigError("reverse_at must lie in [0, steps]")


def _check_blobs(cfg):
    _geometry(cfg)
    eps = cfg["eps_r"]
    if not isinstance(eps, list) or not eps or any(not (isinstance(e, (int, float)) and e > 0) for e in eps):
        raise ConfigError("eps_r must be a non-empty list of positive numbers (fractions of L)")
    _positive(cfg, "eps_v_ratio", "t_max")
    if int(cfg["S"]) < 2:
        raise ConfigError("S must be at least 2")
    if cfg["t_probe"] < 0 or any(t < 0 for t in cfg["gap_times"]):
        raise ConfigError("probe times must be non-negative")
    gamma = _explicit_config(cfg) or blobs.three_particle_scenario(cfg["a"], cfg["L"])
    for e in eps:
        blobs._check_separation(gamma, blobs.Mollifier(e * cfg["L"], e * cfg["L"] * cfg["eps_v_ratio"]))


def _check_reversal(cfg):
    kind = cfg["class"]
    if kind not in ("particle", "smooth", "blob"):
        raise ConfigError("class must be 'particle', 'smooth' or 'blob'")
    if kind == "smooth":
        _check_kinetic({**DEFAULTS["kinetic"], **{k: cfg[k] for k in DEFAULTS["kinetic"] if k in cfg},
                        "reverse_at": None})
        if cfg["t_rev"] is not None and cfg["t_total"] is not None:
            if not 0 <= cfg["t_rev"] < cfg["t_total"]:
                raise ConfigError("t_rev must lie in [0, t_total)")
        return
    _geometry(cfg)
    if cfg["t"] < 0:
        raise ConfigError("t must be non-negative")
    if kind == "blob":
        _positive(cfg, "eps_r")
        gamma = _explicit_config(cfg) or blobs.three_particle_scenario(cfg["a"], cfg["L"])
        ev = cfg["eps_r"] if cfg["eps_v"] is None else cfg["eps_v"]
        blobs._check_separation(gamma, blobs.Mollifier(cfg["eps_r"] * cfg["L"], ev * cfg["L"]))
    else:
        _positive(cfg, "tol", "velocity_scale")


def _check_stscan(cfg):
    _positive(cfg, "L", "a", "na2", "theta")
    if cfg["field"] not in ("modulated", "maxwellian", "bimodal"):
        raise ConfigError("field must be 'modulated', 'maxwellian' or 'bimodal'")
    if cfg["a"] >= 0.5 * cfg["L"]:
        raise ConfigError("sphere larger than half the box")
    if not 0 <= cfg["amplitude"] < 1:
        raise ConfigError("amplitude must lie in [0, 1) to keep f non-negative")
    if int(cfg["probes"]) < 1:
        raise ConfigError("need at least one probe")
    _potential(cfg)


VALIDATORS = {"simulate": _check_simulate, "kinetic": _check_kinetic, "blobs": _check_blobs,
              "reversal": _check_reversal, "stscan": _check_stscan}


# --- commands -----------------------------------------------------------------


def _particles(cfg):
    return _explicit_config(cfg) or hs.sample_admissible_config(
        int(cfg["N"]), float(cfg["a"]), float(cfg["L"]), float(cfg["velocity_scale"]), seed=cfg["seed"])


def cmd_simulate(cfg, out: Path, threads=1):
    """Event-driven hard spheres, or the hybrid dynamics when a potential is set."""
    gamma = _particles(cfg)
    pot = _potential(cfg)
    t = float(cfg["t"])
    times = np.linspace(0.0, t, int(cfg["n_snapshots"]))
    snaps = [gamma]
    events = []
    energy = []
    cur = gamma
    for t0, t1 in zip(times[:-1], times[1:]):
        if pot is None:
            cur, log = hs.evolve(cur, t1 - t0, max_events=int(cfg["max_events"]), return_log=True)
            events.extend(log.events)
        else:
            cur, E, log = bev.evolve_bev(cur, pot, t1 - t0, float(cfg["dt"]), record_energy=True, return_log=True)
            events.extend(log)
            energy.extend(E if not energy else E[1:])
        snaps.append(cur)
    written = [out / "events.jsonl", out / "snapshots.csv"]
    io.write_events(written[0], events)
    io.write_snapshots(written[1], snaps)
    if pot is not None:
        written.append(out / "energy.csv")
        io.write_table(written[-1], io.ENERGY_HEADER, energy)
    summary = {"collisions": len(events), "min_pair_distance_final": cur.min_pair_distance() if cur.N > 1 else None,
               "kinetic_energy": [gamma.kinetic_energy(), cur.kinetic_energy()]}
    written.append(out / "summary.json")
    io.write_json(written[-1], summary)
    return written


def _velocity_field(cfg):
    M, vm = int(cfg["M"]), float(cfg["v_max"])
    if cfg["initial"] == "maxwellian":
        return hk.maxwellian_field(M, vm, float(cfg["theta"]))
    return hk.bimodal_field(M, vm, float(cfg["separation"]), float(cfg["theta"]))


def _step_size(cfg, f, quad):
    bound = hk.dt_max(f, cfg["a"], cfg["n"], quad)
    return float(cfg["dt"]) if cfg["dt"] is not None else float(cfg["dt_fraction"]) * bound, bound


def cmd_kinetic(cfg, out: Path, threads=1):
    """Space-homogeneous kinetic run on a velocity grid."""
    f = _velocity_field(cfg)
    quad = hk.CollisionSampler.build(f.M, f.v_max, int(cfg["n_samples"]), seed=cfg["seed"])
    dt, bound = _step_size(cfg, f, quad)
    ra = cfg["reverse_at"]
    run = hk.integrate(f, dt, int(cfg["steps"]), cfg["a"], cfg["n"], quad,
                       reverse_at=None if ra is None else int(ra))
    written = [out / "timeseries.csv"]
    hk.write_time_series(written[0], run.rows)
    hk.write_snapshot(out / "field_initial", f)
    hk.write_snapshot(out / "field_final", run.field)
    written += [out / "field_initial.csv", out / "field_initial.json", out / "field_final.csv", out / "field_final.json"]
    r0, r1 = np.asarray(run.rows[0]), np.asarray(run.rows[-1])
    summary = {"dt": dt, "dt_max": bound, "steps": int(cfg["steps"]), "clipped_mass": run.field.clipped,
               "H_initial": float(r0[6]), "H_final": float(r1[6]),
               "max_H_rise": float(np.max(np.diff([r[6] for r in run.rows]))) if len(run.rows) > 1 else 0.0,
               "moment_drift": [float(x) for x in np.abs(r1[1:6] - r0[1:6])]}
    written.append(out / "summary.json")
    io.write_json(written[-1], summary)
    return written


def cmd_blobs(cfg, out: Path, threads=1):
    """Blob-ensemble sweep over mollifier widths."""
    gamma = _explicit_config(cfg) or blobs.three_particle_scenario(cfg["a"], cfg["L"])
    L, S, seed = float(cfg["L"]), int(cfg["S"]), cfg["seed"]
    molls = [blobs.Mollifier(e * L, e * L * cfg["eps_v_ratio"]) for e in cfg["eps_r"]]
    ref = blobs.check_probe_time(gamma, float(cfg["t_probe"]))
    written, sweep = [], []
    for k, moll in enumerate(molls):
        ens = blobs.draw_ensemble(gamma, moll, S, seed)
        T = blobs.coherence_time(ens, float(cfg["t_max"]))
        gaps = []
        for tg in cfg["gap_times"]:
            g, rows = blobs.factorization_gap(blobs.flow_ensemble(ens, float(tg)))
            gaps.append({"t": float(tg), "max_gap": g, "probes": rows})
        at_probe = blobs.flow_ensemble(ens, float(cfg["t_probe"]))
        err, se = blobs.centroid_errors(at_probe, ref)
        report = blobs.harness_report(moll, S, T, gaps, [[float(e), float(s)] for e, s in zip(err, se)])
        path = out / f"report_{k}.json"
        blobs.write_report(path, report)
        written.append(path)
        if cfg["write_ensembles"]:
            path = out / f"ensemble_{k}.csv"
            blobs.write_ensemble_csv(path, [ens, at_probe])
            written.append(path)
        j = int(np.argmax(err))
        sweep.append({"epsilon_r": moll.eps_r, "T_epsilon": T, "centroid_error": float(err[j]),
                      "centroid_se": float(se[j])})
    written.append(out / "sweep.json")
    io.write_json(written[-1], {"t_probe": float(cfg["t_probe"]), "S": S, "sweep": sweep})
    return written


def cmd_reversal(cfg, out: Path, threads=1):
    """Reversal experiment for one solution class."""
    kind = cfg["class"]
    written = [out / "report.json"]
    if kind == "particle":
        rep = reversibility.run_particle_reversal(_particles(cfg), float(cfg["t"]), float(cfg["tol"]))
    elif kind == "blob":
        gamma = _explicit_config(cfg) or blobs.three_particle_scenario(cfg["a"], cfg["L"])
        ev = cfg["eps_r"] if cfg["eps_v"] is None else cfg["eps_v"]
        moll = blobs.Mollifier(cfg["eps_r"] * cfg["L"], ev * cfg["L"])
        rep = reversibility.run_blob_reversal(gamma, moll, int(cfg["S"]), float(cfg["t"]), cfg["seed"])
    else:
        f = _velocity_field(cfg)
        quad = hk.CollisionSampler.build(f.M, f.v_max, seed=cfg["seed"])
        dt, _ = _step_size(cfg, f, quad)
        t_total = cfg["t_total"] if cfg["t_total"] is not None else int(cfg["steps"]) * dt
        t_rev = cfg["t_rev"] if cfg["t_rev"] is not None else 0.5 * t_total
        if not 0 <= t_rev < t_total:
            raise ConfigError("t_rev must lie in [0, t_total)")
        rep = reversibility.run_smooth_irreversibility(f, t_rev, t_total, dt, cfg["a"], cfg["n"], quad)
        written.append(out / "h_series.csv")
        io.write_table(written[-1], ["t", "H"], rep.h_series)
    written[0].write_text(rep.to_json(indent=2) + "\n")
    return written


def _scan_field(cfg):
    L, th = float(cfg["L"]), float(cfg["theta"])
    if cfg["field"] == "modulated":
        return fields.modulated_maxwellian(float(cfg["amplitude"]), theta=th, L=L)
    if cfg["field"] == "bimodal":
        return fields.bimodal(theta=th, L=L)
    return fields.maxwellian(th, L=L)


def cmd_stscan(cfg, out: Path, threads=1):
    """Collision-integral, Vlasov and condition-11 scan on a phase field."""
    f = _scan_field(cfg)
    a, L = float(cfg["a"]), float(cfg["L"])
    n = float(cfg["na2"]) / a**2
    quad = collision.QuadratureRule.default(math.sqrt(float(cfg["theta"])), int(cfg["n_theta"]), int(cfg["n_phi"]),
                                            int(cfg["n_v"]), cfg["v_max"])
    pot = _potential(cfg)
    grid = collision.SpatialGrid(int(cfg["vlasov_grid"]))
    rng = stream(cfg["seed"], "stscan-probe")
    P = int(cfg["probes"])
    r = rng.uniform(0.0, L, size=(P, 3))
    v = rng.normal(0.0, math.sqrt(float(cfg["theta"])), size=(P, 3))

    def probe(k):
        ci = collision.collision_integrals(f, r[k], v[k], a, n, quad)
        vl = collision.vlasov_term(f, r[k], v[k], pot, n, grid=grid, quad=quad) if pot is not None else 0.0
        half = None
        if cfg["gap_scan"]:
            ch = collision.collision_integrals(f, r[k], v[k], 0.5 * a, 4.0 * n, quad)
            half = abs(ch.enskog - ch.boltzmann)
        return ci, vl, half

    with ThreadPoolExecutor(max_workers=max(1, threads)) as ex:
        results = list(ex.map(probe, range(P)))
    rows = [[*r[k], *v[k], ci.enskog, ci.boltzmann, vl] for k, (ci, vl, _) in enumerate(results)]
    written = [out / "scan.csv"]
    io.write_table(written[0], io.SCAN_HEADER, rows)
    samples = collision.sample_contact_set(stream(cfg["seed"], "stscan-contact"), int(cfg["condition_11_samples"]),
                                           L, math.sqrt(float(cfg["theta"])))
    viol = collision.check_condition_11(f, a, samples)
    floor = collision.condition_11_noise_floor(f, a, samples)
    summary = {"n": n, "a": a, "condition_11": {"violation": viol, "noise_floor": floor,
                                                "exceeds_5x_floor": bool(viol > 5 * floor)}}
    if cfg["gap_scan"]:
        g_full = float(np.mean([abs(ci.enskog - ci.boltzmann) for ci, _, _ in results]))
        g_half = float(np.mean([h for _, _, h in results]))
        summary["gap"] = {"mean_gap_a": g_full, "mean_gap_half_a": g_half,
                          "ratio": g_full / g_half if g_half > 0 else None}
    written.append(out / "summary.json")
    io.write_json(written[-1], summary)
    return written


COMMANDS = {"simulate": cmd_simulate, "kinetic": cmd_kinetic, "blobs": cmd_blobs,
            "reversal": cmd_reversal, "stscan": cmd_stscan}


# --- entry point --------------------------------------------------------------


def _seed(text):
    try:
        s = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError("seed must be an integer")
    if not 0 <= s < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return s


def build_parser():
    p = argparse.ArgumentParser(prog="enskoglab", description="Hard-sphere kinetics experiments driven by JSON config files.")
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        s = sub.add_parser(name, help=fn.__doc__ or name)
        s.add_argument("--config", required=True, help="JSON run configuration")
        s.add_argument("--seed", type=_seed, default=None, help="overrides the config seed")
        s.add_argument("--out", default="enskoglab-out", help="output directory (default: %(default)s)")
        s.add_argument("--threads", type=int, default=1, help="worker threads; results do not depend on it")
    return p


def _fail(code, exc):
    kind = "config" if code == EXIT_CONFIG else "runtime"
    sys.stderr.write(json.dumps({"error": kind, "type": type(exc).__name__, "message": str(exc)}) + "\n")
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        return _fail(EXIT_CONFIG, ConfigError("--threads must be at least 1"))
    try:
        cfg = load_config(args.command, args.config, args.seed)
    except (ConfigError, EnskogError, ValueError, TypeError, KeyError) as e:
        return _fail(EXIT_CONFIG, e)
    out = Path(args.out)
    start = time.perf_counter()
    try:
        out.mkdir(parents=True, exist_ok=True)
        written = COMMANDS[args.command](cfg, out, args.threads)
    except ConfigError as e:
        return _fail(EXIT_CONFIG, e)
    except Exception as e:  # noqa: BLE001 - every run failure maps to exit 3
        return _fail(EXIT_RUNTIME, e)
    wall = time.perf_counter() - start
    io.write_json(out / "manifest.json", io.manifest(args.command, cfg, cfg["seed"], written, wall, args.threads))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
