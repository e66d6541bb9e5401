"""Command-line shell: simulate, verify, constants, dispersion.

Exit codes: 0 success, 2 configuration/validation error, 3 solver blow-up
or non-convergence, 4 verification failure.  WWDAMP_OUTDIR overrides the
output directory; WWDAMP_THREADS is a fan-out hint for the dispersion
measurement sweep.  Identical (config, seed) produce byte-identical
artifacts.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .dynamics import (Simulator, SurfaceState, Trajectory, make_state,
                       standing_wave_state, suggested_dt)
from .energy import EnergyBreakdown
from .errors import (BlowUpError, CheckpointError, ConfigError,
                     MapDegenerateError, SolverConvergenceError, WwdampError)
from .grid import Grid
from .params import CutoffProfile, build_cutoff, profile_to_csv
from .runio import (RunConfig, load_config, read_checkpoint, read_states,
                    write_checkpoint, write_json, write_states,
                    write_trajectory_csv)
from .verify import check_decay, compute_constants, run_suite

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BLOWUP = 3
EXIT_VERIFY = 4


def _outdir(config: RunConfig, cli_value: str | None) -> str:
    env = os.environ.get("WWDAMP_OUTDIR")
    return env or cli_value or config.outdir


def _build_profile(config: RunConfig, grid: Grid):
    params = config.physical()
    ctrl = config.control()
    try:
        return build_cutoff(params, ctrl, grid)
    except ValueError:
        if config.damping:
            raise
        # undamped runs carry diagnostics against the trivial profile when
        # the grid cannot resolve the ramp
        return CutoffProfile.uniform(grid)


def _initial_state(config: RunConfig, grid: Grid, sim: Simulator) -> SurfaceState:
    params = config.physical()
    if "state_file" in config.initial:
        t, N, L, h, eta, psi = read_checkpoint(config.initial["state_file"])
        if N != grid.N or abs(L - grid.L) > 1e-12 * grid.L:
            raise ConfigError(
                "config.initial.state_file: checkpoint geometry "
                f"(N={N}, L={L}) does not match the run (N={grid.N}, L={grid.L})")
        state = make_state(grid, eta, psi, t=t)
    else:
        state = standing_wave_state(grid, params,
                                    config.initial["mode"],
                                    config.initial["amplitude_ratio"])
    if float(np.min(state.eta)) <= -0.5 * params.h:
        raise ConfigError(
            "config.initial: initial surface violates min(eta) > -h/2")
    return state


def run(config: RunConfig, outdir: str | None = None,
        resume: str | None = None, dump_interior_final: bool = False) -> int:
    """Execute a configured run and write its artifacts.

    Writes config echo, trajectory CSV, optional state snapshots, the
    constants ledger, the verification report and a final checkpoint; the
    exit status reflects validation, solver and verification outcomes.
    """
    out = _outdir(config, outdir)
    params = config.physical()
    ctrl = config.control()
    grid = Grid(config.L, config.N)
    profile = _build_profile(config, grid)
    sim = Simulator(grid, params, ctrl, profile, M=config.M,
                    damping=config.damping, rtol=config.solver_rtol)
    if resume is not None:
        t, N, L, h, eta, psi = read_checkpoint(resume)
        if N != grid.N:
            raise ConfigError("resume checkpoint does not match the grid")
        state0 = make_state(grid, eta, psi, t=t)
        horizon = config.T - t
        if horizon <= 0:
            raise ConfigError("resume checkpoint is already at or past T")
    else:
        state0 = _initial_state(config, grid, sim)
        horizon = config.T

    os.makedirs(out, exist_ok=True)
    write_json(os.path.join(out, "config.json"), _config_echo(config))
    profile_to_csv(profile, os.path.join(out, "profile.csv"))

    traj = sim.simulate(state0, horizon, dt=config.dt,
                        cadence=config.output_cadence)
    write_trajectory_csv(os.path.join(out, "trajectory.csv"), traj)
    if config.snapshots:
        write_states(os.path.join(out, "states.bin"), traj, params.h)
    write_checkpoint(os.path.join(out, "checkpoint.bin"),
                     traj.state(len(traj) - 1), grid, params.h)
    if dump_interior_final:
        from .dtn import dump_full_snapshot
        final = traj.state(len(traj) - 1)
        dtn = sim.solver.dtn_apply(final.eta, final.psi)
        dump_full_snapshot(os.path.join(out, "final_snapshot.bin"),
                           dtn.interior, final.eta, final.psi)

    if params.kappa > 0:
        ledger = compute_constants(params, ctrl, profile)
        write_json(os.path.join(out, "constants.json"), ledger.to_dict())
        decay = check_decay(traj, ledger)
        write_json(os.path.join(out, "decay.json"), decay.__dict__)
    else:
        ledger = None

    failing = []
    if config.verifiers:
        report = run_suite(traj, sim.solver, tags=config.verifiers)
        write_json(os.path.join(out, "verification.json"), report)
        failing = [tag for tag, entry in report.items() if not entry["pass"]]
    if failing:
        print("verification failed for:", ", ".join(sorted(failing)),
              file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


def _config_echo(config: RunConfig) -> dict:
    doc = dict(config.__dict__)
    doc["verifiers"] = list(config.verifiers)
    return doc


def load_trajectory(rundir: str) -> tuple[Trajectory, RunConfig]:
    """Rebuild a trajectory (states, diagnostics, running integrals) from a
    run directory's config.json, trajectory.csv and states.bin."""
    cfg_path = os.path.join(rundir, "config.json")
    with open(cfg_path) as f:
        doc = json.load(f)
    doc.pop("outdir", None)
    doc["lambda"] = doc.pop("lam", 1.0)
    from .runio import parse_config
    keep = ("g", "kappa", "h", "L", "delta", "N", "T", "lambda", "M", "dt",
            "damping", "initial", "output_cadence", "seed", "snapshots")
    config = parse_config({k: v for k, v in doc.items()
                           if k in keep and v is not None})
    params = config.physical()
    ctrl = config.control()
    grid = Grid(config.L, config.N)
    profile = _build_profile(config, grid)

    states = read_states(os.path.join(rundir, "states.bin"))
    rows = []
    with open(os.path.join(rundir, "trajectory.csv")) as f:
        reader = csv.reader(f)
        header = next(reader)
        for line in reader:
            row = {}
            for key, val in zip(header, line):
                if key in ("all_ok", "hypotheses_ok"):
                    row[key] = val == "1"
                elif key == "solver_iterations":
                    row[key] = int(val)
                else:
                    row[key] = float(val)
            rows.append(row)
    if len(rows) != len(states):
        raise CheckpointError("states.bin and trajectory.csv disagree in length")

    dt = rows[1]["t"] - rows[0]["t"] if len(rows) > 1 else config.T
    meta = {"dt": dt, "n_steps": None, "stride": None, "T": config.T,
            "damping": config.damping, "lambda": ctrl.lam, "N": grid.N,
            "M": config.M or max(32, grid.N // 4), "L": grid.L,
            "g": params.g, "kappa": params.kappa, "h": params.h,
            "delta": ctrl.delta, "solver_rtol": config.solver_rtol,
            "backend": "loaded"}
    traj = Trajectory(grid, params, ctrl, profile, meta)
    for (t, _, _, _, eta, psi), row in zip(states, rows):
        traj.append(SurfaceState(t, eta, psi), row)
    return traj, config


def cmd_simulate(args) -> int:
    config = load_config(args.config)
    return run(config, outdir=args.outdir, resume=args.resume,
               dump_interior_final=args.dump_interior)


def cmd_verify(args) -> int:
    traj, config = load_trajectory(args.rundir)
    sim = Simulator(traj.grid, traj.params, traj.ctrl, traj.profile,
                    M=config.M, damping=config.damping)
    tags = tuple(args.tags.split(",")) if args.tags else None
    report = run_suite(traj, sim.solver, tags=tags)
    write_json(os.path.join(args.rundir, "verification.json"), report)
    failing = [tag for tag, entry in report.items() if not entry["pass"]]
    for tag in sorted(report):
        entry = report[tag]
        value = entry.get("residual", entry.get("slack"))
        shown = "n/a" if value is None else f"{value:.3e}"
        print(f"{tag:7s} {'pass' if entry['pass'] else 'FAIL'}  {shown}")
    if failing:
        print("verification failed for:", ", ".join(sorted(failing)),
              file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


def cmd_constants(args) -> int:
    config = load_config(args.config)
    params = config.physical()
    ctrl = config.control()
    grid = Grid(config.L, config.N)
    profile = build_cutoff(params, ctrl, grid)
    ledger = compute_constants(params, ctrl, profile)
    doc = ledger.to_dict()
    if args.out:
        write_json(args.out, doc)
    print(json.dumps(doc, indent=2, sort_keys=True))
    return EXIT_OK


def _measure_frequency(sim: Simulator, mode: int, periods: float = 6.0) -> float:
    """Fit the oscillation frequency of one standing mode from a short run."""
    grid, params = sim.grid, sim.params
    k = mode * np.pi / grid.L
    omega0 = float(np.sqrt((params.g + params.kappa * k**2)
                           * k * np.tanh(k * params.h)))
    state = standing_wave_state(grid, params, mode, 1e-4)
    traj = sim.simulate(state, periods * 2 * np.pi / omega0)
    ts = np.array(traj.ts)
    series = np.array([np.fft.rfft(e)[mode].real for e in traj.etas])

    def resid(w):
        A = np.column_stack([np.cos(w * ts), np.sin(w * ts)])
        _, res, *_ = np.linalg.lstsq(A, series, rcond=None)
        return res[0] if len(res) else 0.0

    w = omega0
    for span in (0.05, 0.002, 1e-4, 5e-6):
        ws = np.linspace(w * (1 - span), w * (1 + span), 81)
        w = ws[int(np.argmin([resid(x) for x in ws]))]
    return float(w)


def cmd_dispersion(args) -> int:
    config = load_config(args.config)
    params = config.physical()
    grid = Grid(config.L, config.N)
    M = config.M or max(32, grid.N // 4)
    from .dtn import EllipticSolver, flat_symbol
    solver = EllipticSolver(grid, params.h, M)
    n_max = min(args.modes, grid.n_dealias)
    exact = flat_symbol(grid, params.h)
    rows = []
    measured = {}
    if args.measure:
        hint = int(os.environ.get("WWDAMP_THREADS", "1"))
        modes = list(range(1, n_max + 1))

        def worker(n):
            sim = Simulator(grid, params, config.control(),
                            CutoffProfile.uniform(grid), M=M, damping=False)
            return n, _measure_frequency(sim, n, periods=args.periods)

        if hint > 1:
            with ThreadPoolExecutor(max_workers=hint) as pool:
                for n, w in pool.map(worker, modes):
                    measured[n] = w
        else:
            for n in modes:
                measured[n] = worker(n)[1]
    for n in range(1, n_max + 1):
        k = grid.k[n]
        b = params.g + params.kappa * k**2
        om_exact = float(np.sqrt(b * exact[n]))
        om_disc = float(np.sqrt(b * solver.discrete_symbol[n]))
        row = {"mode": n, "k": float(k), "omega_exact": om_exact,
               "omega_discrete": om_disc,
               "rel_gap": (om_disc - om_exact) / om_exact}
        if n in measured:
            row["omega_measured"] = measured[n]
            row["measured_rel_err"] = (measured[n] - om_exact) / om_exact
        rows.append(row)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = list(rows[0].keys())
    writer.writerow(header)
    for row in rows:
        writer.writerow(["%d" % row["mode"]]
                        + ["%.17e" % row[key] for key in header[1:]])
    text = buf.getvalue()
    if args.out:
        from .runio import atomic_write_text
        atomic_write_text(args.out, text)
    print(text, end="")
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="wwdamp",
        description="Damped gravity-capillary wave tank: simulate and verify.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="run a configured simulation")
    p_sim.add_argument("--config", required=True)
    p_sim.add_argument("--outdir", default=None)
    p_sim.add_argument("--resume", default=None,
                       help="checkpoint file to resume from")
    p_sim.add_argument("--dump-interior", action="store_true",
                       help="write the final state's interior snapshot")
    p_sim.set_defaults(func=cmd_simulate)

    p_ver = sub.add_parser("verify", help="verify a stored trajectory")
    p_ver.add_argument("--rundir", required=True)
    p_ver.add_argument("--tags", default=None,
                       help="comma-separated equation tags (default: all)")
    p_ver.set_defaults(func=cmd_verify)

    p_con = sub.add_parser("constants", help="print the constants ledger")
    p_con.add_argument("--config", required=True)
    p_con.add_argument("--out", default=None)
    p_con.set_defaults(func=cmd_constants)

    p_dis = sub.add_parser("dispersion", help="linear-mode frequency table")
    p_dis.add_argument("--config", required=True)
    p_dis.add_argument("--modes", type=int, default=8)
    p_dis.add_argument("--measure", action="store_true",
                       help="also measure frequencies from short runs")
    p_dis.add_argument("--periods", type=float, default=6.0,
                       help="run length for --measure, in mode periods")
    p_dis.add_argument("--out", default=None)
    p_dis.set_defaults(func=cmd_dispersion)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (BlowUpError, SolverConvergenceError, MapDegenerateError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        if isinstance(exc, BlowUpError) and exc.diagnostics:
            print(f"diagnostics: {json.dumps(exc.diagnostics, sort_keys=True)}",
                  file=sys.stderr)
        return EXIT_BLOWUP
    except CheckpointError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
