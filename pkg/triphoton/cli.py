import argparse
from datetime import datetime
from importlib.metadata import version, PackageNotFoundError
import logging
import math
from pathlib import Path
import sys
from typing import NamedTuple
import warnings

from joblib import Parallel, delayed
import numpy as np
import yaml

from . import analysis, database, oracle, output
from .config import ConfigError, parse_config
from .dynamics import build_liouvillian
from .fockspace import SpaceError, build_space
from .integrator import (
    IntegrationError,
    StateSpecError,
    StepSizeError,
    aligned_step,
    automatic_step,
    check_step,
    evolve,
    initial_state,
    step_convergence,
)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

CONVERGENCE_TOLERANCE = 1e-6

#: truncation of the lab-vs-rotating comparison, small enough for lab-frame steps
FRAME_CHECK_TRUNCATIONS = (1, 3, 1)
FRAME_CHECK_TIME = 0.216

SNAPSHOT_NOTE = (
    "The third reference snapshot is labelled 't=0.328' without kappa; "
    "it is taken as t*kappa = 0.328 like the other two."
)


def code_version():
    try:
        return version("triphoton")
    except PackageNotFoundError:
        return "unknown"


class Schedule(NamedTuple):
    """Step size and times in 1/meV for one evolution."""

    dt: float
    t_final: float
    nsteps: int
    record_stride: int
    snapshots: tuple


def resolve_schedule(liouvillian, config):
    """dt aligned to the snapshot lattice, recording stride and times."""

    scale = config.time_scale
    requested = config.dt if config.dt is not None else automatic_step(liouvillian)
    dt = aligned_step(requested, (config.t_final_kappa,) + config.snapshots_kappa, scale)
    if config.dt is not None and dt != config.dt:
        logging.info("dt reduced from %.6g to %.6g to land on the snapshot times", config.dt, dt)

    t_final = config.t_final_kappa / scale
    nsteps = int(round(t_final / dt))
    stride = config.record_stride or max(1, nsteps // 200)

    return Schedule(dt, t_final, nsteps, stride, tuple(t / scale for t in config.snapshots_kappa))


def run_evolution(config, progress=False, check_positivity=True):
    """Build the model for `config` and evolve the configured initial state.

    Returns (space, liouvillian, schedule, trajectory).
    """

    space = build_space(*config.truncations)
    liouvillian = build_liouvillian(space, config)
    rho0 = initial_state(space, config.initial_state, frame=config.frame)
    schedule = resolve_schedule(liouvillian, config)

    logging.info(
        "Evolving %s in the %s frame: %d steps of dt=%.4g 1/meV",
        space,
        config.frame,
        schedule.nsteps,
        schedule.dt,
    )

    trajectory = evolve(
        rho0,
        liouvillian,
        schedule.t_final,
        schedule.dt,
        record_stride=schedule.record_stride,
        snapshots=schedule.snapshots,
        observe=analysis.record_observables,
        check_positivity=check_positivity,
        progress=progress,
    )
    return space, liouvillian, schedule, trajectory


def _now():
    return datetime.now().isoformat(timespec="seconds")


def cmd_evolve(config, out_dir, netcdf=False, catalog=None, progress=False):
    """Evolve, then write observables, mode-1 snapshots, distributions and
    the run manifest into out_dir. Returns the manifest."""

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    run_id = config.run_id()

    manifest = {
        "run_id": run_id,
        "code_version": code_version(),
        "config": config.to_dict(),
        "ratios": config.ratios(),
        "started": _now(),
        "status": "running",
        "outputs": [],
        "warnings": [],
        "notes": [SNAPSHOT_NOTE],
    }

    def add(path, kind):
        manifest["outputs"].append({"path": Path(path).name, "kind": kind})

    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            space, liouvillian, schedule, trajectory = run_evolution(config, progress=progress)

        for w in caught:
            logging.warning("%s", w.message)
            manifest["warnings"].append("{}: {}".format(w.category.__name__, w.message))

        manifest["schedule"] = {
            "dt_inverse_mev": schedule.dt,
            "nsteps": schedule.nsteps,
            "record_stride": schedule.record_stride,
            "restricted_elements": trajectory.observables.attrs["restricted_elements"],
        }

        time_unit = config.time_unit
        add(output.write_observables(out_dir / "observables.dat", trajectory, run_id), "observables")

        reduced_states = []
        for rho in trajectory.snapshots:
            reduced = analysis.reduce_to_mode1(rho)
            reduced_states.append(reduced)
            path = output.write_reduced(
                out_dir / output.snapshot_filename("rho1", rho.time), reduced, run_id, time_unit
            )
            add(path, "reduced_state")
            path = output.write_distribution(
                out_dir / output.snapshot_filename("pn1", rho.time),
                analysis.photon_distribution(reduced),
                run_id,
                rho.frame,
                time_unit,
                rho.time,
            )
            add(path, "photon_distribution")

        if netcdf:
            add(output.export_netcdf(out_dir / "trajectory.nc", trajectory, reduced_states, run_id), "netcdf")

        manifest["status"] = "ok"
    except IntegrationError as e:
        manifest["status"] = "failed"
        manifest["error"] = "IntegrationError at step {}: {}".format(e.step, e)
        raise
    except Exception as e:
        manifest["status"] = "failed"
        manifest["error"] = "{}: {}".format(type(e).__name__, e)
        raise
    finally:
        manifest["finished"] = _now()
        output.write_manifest(out_dir / "manifest.yaml", manifest)
        if catalog is not None:
            session = database.create_session(catalog)
            database.index_run(manifest, session, out_dir=out_dir.resolve())
            session.close()

    return manifest


def cmd_wigner(snapshot, out_dir, grid_max=6.0, grid_n=201, method="parity", n_jobs=1):
    """Wigner grid of a reduced-state snapshot file; returns the written path."""

    reduced, meta = output.read_reduced(snapshot)

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        w = analysis.wigner(reduced, grid_max=grid_max, grid_n=grid_n, method=method, n_jobs=n_jobs)
    for item in caught:
        logging.warning("%s", item.message)

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = output.write_wigner(
        out_dir / output.snapshot_filename("wigner", reduced.time),
        w,
        meta.get("run_id"),
        meta.get("time_unit"),
    )

    logging.info("W(0,0) = %.6g, grid integral %.6f", float(w.sel(x=0, p=0, method="nearest")), w.attrs["integral"])
    return path


def _check(passed, value, criterion):
    return {"passed": bool(passed), "value": value, "criterion": criterion}


def _oracle_checks(config, checks):
    lab = config.replace(frame="lab", trunc0=1, trunc1=1, trunc2=1)
    sweep = oracle.compare_variants(build_space(1, 1, 1), lab)
    conventional = sweep["conventional"]["max_abs_difference"]
    checks["oracle_basis_sweep"] = _check(
        conventional < 1e-12, conventional, "max |oracle - L| over all |A><B| at (1,1,1) < 1e-12"
    )

    literal = sweep["literal"]["terms"]
    checks["oracle_literal_variant"] = _check(
        bool(literal) and all(t.endswith("zeta ket 2") for t in literal),
        literal,
        "the literal sqrt((l-1)mn) coefficient is the only disagreeing term",
    )

    space = build_space(1, 2, 1)
    lab = config.replace(frame="lab", trunc0=1, trunc1=2, trunc2=1)
    liouvillian = build_liouvillian(space, lab)
    rng = np.random.default_rng(20170707)
    worst, trace = 0.0, 0.0
    for _ in range(100):
        rho = oracle.random_hermitian(space.dim, rng)
        d = oracle.elementwise_derivative(rho, lab, space)
        worst = max(worst, float(np.abs(d - liouvillian(rho)).max()))
        trace = max(trace, abs(np.trace(d)))
    checks["oracle_random_states"] = _check(
        worst < 1e-12, worst, "max |oracle - L| over 100 random states at (1,2,1) < 1e-12"
    )
    checks["elementwise_trace"] = _check(trace < 1e-12, float(trace), "|Tr d(rho)/dt| < 1e-12")


def jc_rabi_error(config, steps=4000):
    """Max deviation of <s†s> from cos²(g t) over one vacuum Rabi period of the
    resonant, lossless dot-cavity system."""

    jc = config.replace(
        zeta_mev=0.0,
        xi_mev=0.0,
        kappa_mev=0.0,
        pump_mev=0.0,
        omega_qd_mev=config.omega0_mev,
        frame="rotating",
        trunc0=1,
        trunc1=0,
        trunc2=0,
        snapshots_kappa=(),
    )
    space = build_space(1, 0, 0)
    liouvillian = build_liouvillian(space, jc)
    period = math.pi / jc.g_mev
    trajectory = evolve(
        initial_state(space, "e,0,0,0"),
        liouvillian,
        period,
        period / steps,
        observe=analysis.mode_observables,
    )
    t = trajectory.times
    return float(np.abs(trajectory.observables["exc"].values - np.cos(jc.g_mev * t) ** 2).max())


def frame_difference(config, truncations=FRAME_CHECK_TRUNCATIONS, time=FRAME_CHECK_TIME):
    """Max difference of the mode-1 distribution at `time` (config time unit)
    between lab- and rotating-frame evolutions with a common step."""

    space = build_space(*truncations)
    frames = {f: config.replace(frame=f, trunc0=truncations[0], trunc1=truncations[1], trunc2=truncations[2])
              for f in ("lab", "rotating")}
    lab = build_liouvillian(space, frames["lab"])

    scale = config.time_scale
    dt = aligned_step(0.99 * 0.1 / lab.hamiltonian.max_abs(), [time], scale)

    p = {}
    for frame, cfg in frames.items():
        rho = evolve(
            initial_state(space, config.initial_state, frame=frame),
            build_liouvillian(space, cfg),
            time / scale,
            dt,
            record_stride=10**9,
            check_positivity=False,
        ).final
        p[frame] = analysis.photon_distribution(analysis.reduce_to_mode1(rho))

    return float(np.abs(p["lab"] - p["rotating"]).max())


def cmd_validate(config):
    """Run the oracle, analytic and invariant checks; returns the report."""

    checks = {}

    _oracle_checks(config, checks)

    err = jc_rabi_error(config)
    checks["jc_rabi"] = _check(err < 1e-6, err, "max |<s†s> - cos²(g t)| over one period < 1e-6")

    diff = frame_difference(config)
    checks["frame_independence"] = _check(
        diff < 1e-8, diff, "lab vs rotating p(n1) at t*kappa={} < 1e-8, on the reduced truncation {} "
        "as a proxy for the configured one".format(
            FRAME_CHECK_TIME, FRAME_CHECK_TRUNCATIONS
        )
    )

    space = build_space(*config.truncations)
    liouvillian = build_liouvillian(space, config)
    scale = config.time_scale
    horizon = min(0.01, config.t_final_kappa)
    requested = config.dt if config.dt is not None else automatic_step(liouvillian)
    criterion = "dt*max|H_ij| <= 0.1"
    try:
        dt = aligned_step(requested, [horizon], scale) if config.dt is None else config.dt
        check_step(liouvillian, dt)
        checks["step_size_guard"] = _check(True, dt * liouvillian.hamiltonian.max_abs(), criterion)
    except StepSizeError as e:
        checks["step_size_guard"] = _check(False, str(e), criterion)
        dt = None

    criterion = "max|rho(dt) - rho(dt/2)| at t={} ({}) < 1e-8".format(horizon, config.time_unit)
    if dt is None:
        checks["step_convergence"] = _check(False, "skipped: step size guard failed", criterion)
    else:
        # a horizon that is a whole number of steps
        t_check = max(1, round(horizon / scale / dt)) * dt
        rho0 = initial_state(space, config.initial_state, frame=config.frame)
        report = step_convergence(rho0, liouvillian, t_check, dt)
        checks["step_convergence"] = _check(
            report["max_abs_diff"] < 1e-8, report["max_abs_diff"], criterion
        )

        trajectory = evolve(rho0, liouvillian, t_check, dt, observe=analysis.record_observables)
        obs = trajectory.observables
        values = {
            "trace": float(np.abs(obs["trace"].values - 1).max()),
            "hermiticity": float(obs["hermiticity"].max()),
            "min_eigenvalue": float(obs["min_eigenvalue"].min()),
            "sector_leak": float(obs["sector_leak"].max()),
        }
        checks["short_run_invariants"] = _check(
            values["trace"] <= 1e-9
            and values["hermiticity"] < 1e-10
            and values["min_eigenvalue"] >= -1e-8
            and values["sector_leak"] < 1e-12,
            values,
            "|Tr-1| <= 1e-9, |rho-rho†| < 1e-10, min eig >= -1e-8, sector leak < 1e-12",
        )

    passed = all(c["passed"] for c in checks.values())
    for name, check in checks.items():
        logging.info("%-22s %s", name, "pass" if check["passed"] else "FAIL")

    return {"passed": passed, "run_id": config.run_id(), "checks": checks}


def _snapshot_distributions(config):
    # top level so joblib can ship it to worker processes
    _, _, _, trajectory = run_evolution(config, check_positivity=False)
    return {
        round(rho.time, 12): analysis.photon_distribution(analysis.reduce_to_mode1(rho)).tolist()
        for rho in trajectory.snapshots
    }


def _max_change(base, other):
    changes = {}
    for t, p in base.items():
        q = other[t]
        n = max(len(p), len(q))
        p = np.pad(p, (0, n - len(p)))
        q = np.pad(q, (0, n - len(q)))
        changes[t] = float(np.abs(p - q).max())
    return changes


def cmd_converge(config, n_jobs=1, tolerance=CONVERGENCE_TOLERANCE):
    """Rerun with each truncation raised by one and with dt halved; report the
    largest change of p(n1) at each snapshot."""

    space = build_space(*config.truncations)
    base_dt = resolve_schedule(build_liouvillian(space, config), config).dt

    variants = {"base": config}
    for mode, key in enumerate(("trunc0", "trunc1", "trunc2")):
        variants["{}+1".format(key)] = config.replace(**{key: config.truncations[mode] + 1})
    variants["dt/2"] = config.replace(dt=base_dt / 2)

    names = list(variants)
    results = Parallel(n_jobs=n_jobs)(delayed(_snapshot_distributions)(variants[n]) for n in names)
    results = dict(zip(names, results))

    report = {"run_id": config.run_id(), "tolerance": tolerance, "variants": {}}
    for name in names[1:]:
        changes = _max_change(results["base"], results[name])
        worst = max(changes.values()) if changes else 0.0
        report["variants"][name] = {
            "max_change": worst,
            "per_snapshot": changes,
            "converged": worst < tolerance,
        }
        logging.info("%-8s max change in p(n1): %.3e", name, worst)

    report["converged"] = all(v["converged"] for v in report["variants"].values())
    return report


def cmd_catalog(db=None, frame=None, status=None):
    session = database.create_session(db)
    runs = database.get_runs(session, frame=frame, status=status)
    session.close()
    return runs


def _write_report(report, out_dir, name):
    text = yaml.safe_dump(report, sort_keys=True, default_flow_style=False)
    print(text, end="")
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / name).write_text(text)


def _add_config_args(parser):
    parser.add_argument("-c", "--config", type=Path, help="YAML configuration file.")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="Override a configuration key (repeatable).",
    )


def build_parser():
    parser = argparse.ArgumentParser(
        prog="triphoton",
        description="Quantum dot, cavity and cascaded down-conversion: three-photon state dynamics.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="Debug logging.")
    parser.add_argument("-q", "--quiet", action="store_true", help="Warnings and errors only.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("evolve", help="Evolve the master equation and write snapshots.")
    _add_config_args(p)
    p.add_argument("-o", "--out", type=Path, default=Path("."), help="Output directory.")
    p.add_argument("--netcdf", action="store_true", help="Also write trajectory.nc.")
    p.add_argument("--catalog", metavar="DB", help="Record the run in this catalog database.")
    p.add_argument("--progress", action=argparse.BooleanOptionalAction, default=False)

    p = sub.add_parser("wigner", help="Wigner function of a reduced-state snapshot.")
    p.add_argument("snapshot", type=Path, help="rho1_tk<time>.dat file written by evolve.")
    _add_config_args(p)
    p.add_argument("-o", "--out", type=Path, default=None, help="Output directory (default: next to the snapshot).")
    p.add_argument("--grid-max", type=float, default=None, help="Grid half-width (default: grid_max of the configuration).")
    p.add_argument("--grid-n", type=int, default=None, help="Points per axis (default: grid_n of the configuration).")
    p.add_argument("--method", choices=("parity", "laguerre"), default="parity")
    p.add_argument("-j", "--jobs", type=int, default=1, help="Parallel grid rows.")

    p = sub.add_parser("validate", help="Oracle, analytic and invariant checks.")
    _add_config_args(p)
    p.add_argument("-o", "--out", type=Path, default=None, help="Also write validate.yaml here.")

    p = sub.add_parser("converge", help="Truncation and step-size convergence scan.")
    _add_config_args(p)
    p.add_argument("-o", "--out", type=Path, default=None, help="Also write converge.yaml here.")
    p.add_argument("-j", "--jobs", type=int, default=1, help="Parallel variant runs.")

    p = sub.add_parser("catalog", help="List catalogued runs.")
    p.add_argument("-db", "--database", dest="db", default=None, help="Catalog database (default $TRIPHOTON_DB).")
    p.add_argument("--frame", choices=("lab", "rotating"))
    p.add_argument("--status")

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)

    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(levelname)s %(message)s")

    try:
        if args.command == "catalog":
            print(cmd_catalog(args.db, frame=args.frame, status=args.status).to_string(index=False))
            return EXIT_OK

        config = parse_config(args.config, args.overrides)

        if args.command == "wigner":
            out = args.out if args.out is not None else args.snapshot.parent
            grid_max = args.grid_max if args.grid_max is not None else config.grid_max
            grid_n = args.grid_n if args.grid_n is not None else config.grid_n
            path = cmd_wigner(args.snapshot, out, grid_max, grid_n, args.method, args.jobs)
            print("Wrote {}".format(path))
            return EXIT_OK

        if args.command == "evolve":
            manifest = cmd_evolve(config, args.out, netcdf=args.netcdf, catalog=args.catalog, progress=args.progress)
            print("Run {}: {} files in {}".format(manifest["run_id"], len(manifest["outputs"]), args.out))
            return EXIT_OK

        if args.command == "validate":
            report = cmd_validate(config)
            _write_report(report, args.out, "validate.yaml")
            return EXIT_OK if report["passed"] else EXIT_FAILED

        if args.command == "converge":
            report = cmd_converge(config, n_jobs=args.jobs)
            _write_report(report, args.out, "converge.yaml")
            return EXIT_OK if report["converged"] else EXIT_FAILED

    except (ConfigError, StateSpecError, StepSizeError, SpaceError, output.SnapshotFormatError) as e:
        logging.error("%s: %s", type(e).__name__, e)
        return EXIT_CONFIG
    except IntegrationError as e:
        logging.error("Numerical abort: %s", e)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
