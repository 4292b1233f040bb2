import numpy as np
import pytest
import yaml

from triphoton import analysis, cli, output
from triphoton.analysis import ReducedState
from triphoton.config import SimConfig, parse_config
from triphoton.dynamics import build_liouvillian
from triphoton.fockspace import build_space
from triphoton.integrator import IntegrationError

SMALL = "test/data/config/small.yaml"


def write_fock(tmp_path, n, dim=4):
    data = np.zeros((dim, dim))
    data[n, n] = 1
    return output.write_reduced(
        tmp_path / "rho1_tk0.000.dat", ReducedState(data, time=0.0), "abc123", "t*kappa"
    )


def test_evolve(tmp_path):
    assert cli.main(["evolve", "-c", SMALL, "--out", str(tmp_path), "--netcdf"]) == cli.EXIT_OK

    manifest = output.read_manifest(tmp_path / "manifest.yaml")
    assert manifest["status"] == "ok"
    assert manifest["run_id"] == parse_config(SMALL).run_id()
    assert manifest["config"]["trunc1"] == 3
    assert manifest["warnings"] == []

    names = {entry["path"] for entry in manifest["outputs"]}
    for t in ("0.000", "0.020", "0.050"):
        assert "rho1_tk{}.dat".format(t) in names
        assert "pn1_tk{}.dat".format(t) in names
    assert {"observables.dat", "trajectory.nc"} <= names
    for name in names:
        assert (tmp_path / name).exists()

    meta, table = output.read_table(tmp_path / "pn1_tk0.000.dat", ["n", "p"], kind="photon_distribution")
    assert meta["run_id"] == manifest["run_id"]
    assert list(table["p"]) == [1, 0, 0, 0]

    meta, table = output.read_table(tmp_path / "observables.dat", kind="observables")
    assert meta["time_unit"] == "t*kappa"
    assert table["time"].iloc[-1] == pytest.approx(0.05)
    assert np.abs(table["trace"] - 1).max() <= 1e-9


def test_evolve_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["evolve", "-c", SMALL, "--out", str(a)]) == cli.EXIT_OK
    assert cli.main(["evolve", "-c", SMALL, "--out", str(b)]) == cli.EXIT_OK

    files = sorted(p.name for p in a.glob("*.dat"))
    assert len(files) == 7
    for name in files:
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_evolve_fine_snapshot_times(tmp_path):
    args = ["evolve", "-c", SMALL, "--set", "snapshots_kappa=[0.0, 0.0004, 0.0008]", "--out", str(tmp_path)]
    assert cli.main(args) == cli.EXIT_OK

    manifest = output.read_manifest(tmp_path / "manifest.yaml")
    reduced = [e["path"] for e in manifest["outputs"] if e["kind"] == "reduced_state"]
    assert reduced == ["rho1_tk0.000.dat", "rho1_tk0.000400.dat", "rho1_tk0.000800.dat"]

    paths = [e["path"] for e in manifest["outputs"]]
    assert len(set(paths)) == len(paths)
    for name in paths:
        assert (tmp_path / name).exists()

    state, meta = output.read_reduced(tmp_path / "rho1_tk0.000400.dat")
    assert state.time == pytest.approx(0.0004)


def test_evolve_catalog(tmp_path):
    db = tmp_path / "runs.db"
    out = tmp_path / "run"
    assert cli.main(["evolve", "-c", SMALL, "--out", str(out), "--catalog", str(db)]) == cli.EXIT_OK

    runs = cli.cmd_catalog(str(db))
    assert list(runs["run_id"]) == [parse_config(SMALL).run_id()]
    assert runs["status"][0] == "ok"
    assert runs["out_dir"][0] == str(out.resolve())

    assert cli.main(["catalog", "-db", str(db), "--frame", "rotating"]) == cli.EXIT_OK


def test_evolve_config_error(tmp_path):
    code = cli.main(["evolve", "--set", "kappa_mev=-1", "--out", str(tmp_path)])
    assert code == cli.EXIT_CONFIG
    assert not (tmp_path / "manifest.yaml").exists()

    assert cli.main(["evolve", "-c", "test/data/config/bad_key.yaml"]) == cli.EXIT_CONFIG


def test_evolve_numerical_abort(tmp_path, monkeypatch):
    def abort(config, progress=False, check_positivity=True):
        raise IntegrationError("Trace drifted", step=7, time=0.1)

    monkeypatch.setattr(cli, "run_evolution", abort)
    assert cli.main(["evolve", "-c", SMALL, "--out", str(tmp_path)]) == cli.EXIT_NUMERICAL

    manifest = output.read_manifest(tmp_path / "manifest.yaml")
    assert manifest["status"] == "failed"
    assert "step 7" in manifest["error"]


@pytest.mark.parametrize("n, value", [(0, 1 / np.pi), (1, -1 / np.pi)])
def test_wigner(tmp_path, n, value):
    snapshot = write_fock(tmp_path, n)
    assert cli.main(["wigner", str(snapshot)]) == cli.EXIT_OK

    w = output.read_wigner(tmp_path / "wigner_tk0.000.dat")
    assert float(w.sel(x=0, p=0, method="nearest")) == pytest.approx(value, abs=1e-6)
    assert w.attrs["integral"] == pytest.approx(1, abs=5e-3)
    assert w.attrs["run_id"] == "abc123"
    assert w.attrs["grid_n"] == 201


def test_wigner_grid_from_config(tmp_path):
    snapshot = write_fock(tmp_path, 1)
    config = tmp_path / "grid.yaml"
    config.write_text("grid_max: 4.0\ngrid_n: 21\n")

    assert cli.main(["wigner", str(snapshot), "-c", str(config)]) == cli.EXIT_OK
    w = output.read_wigner(tmp_path / "wigner_tk0.000.dat")
    assert w.shape == (21, 21)
    assert w.attrs["grid_n"] == 21
    assert w.attrs["grid_max"] == 4.0
    assert float(w["x"].max()) == pytest.approx(4.0)

    assert cli.main(["wigner", str(snapshot), "-c", str(config), "--set", "grid_n=31"]) == cli.EXIT_OK
    assert output.read_wigner(tmp_path / "wigner_tk0.000.dat").shape == (31, 31)

    # explicit flags win over the configuration
    assert cli.main(["wigner", str(snapshot), "-c", str(config), "--grid-n", "11"]) == cli.EXIT_OK
    assert output.read_wigner(tmp_path / "wigner_tk0.000.dat").shape == (11, 11)

    assert cli.main(["wigner", str(snapshot), "--set", "grid_n=1"]) == cli.EXIT_CONFIG


def test_wigner_bad_snapshot(tmp_path):
    bad = tmp_path / "rho1_tk0.000.dat"
    bad.write_text("not a snapshot\n")
    assert cli.main(["wigner", str(bad)]) == cli.EXIT_CONFIG
    assert cli.main(["wigner", str(tmp_path / "missing.dat")]) == cli.EXIT_CONFIG


def test_validate_passes():
    report = cli.cmd_validate(SimConfig())
    failed = [name for name, check in report["checks"].items() if not check["passed"]]
    assert failed == []
    assert report["passed"]
    assert {"oracle_basis_sweep", "oracle_literal_variant", "jc_rabi", "frame_independence"} <= set(
        report["checks"]
    )
    criterion = report["checks"]["frame_independence"]["criterion"]
    assert "proxy" in criterion
    assert str(cli.FRAME_CHECK_TRUNCATIONS) in criterion


def test_validate_large_step(tmp_path):
    code = cli.main(["validate", "--set", "dt=0.05", "--out", str(tmp_path)])
    assert code == cli.EXIT_FAILED

    report = yaml.safe_load((tmp_path / "validate.yaml").read_text())
    assert not report["passed"]
    assert not report["checks"]["step_size_guard"]["passed"]
    assert "0.1" in report["checks"]["step_size_guard"]["criterion"]
    assert not report["checks"]["step_convergence"]["passed"]


def test_converge_zero_coupling():
    config = SimConfig(
        g_mev=0,
        zeta_mev=0,
        xi_mev=0,
        trunc0=1,
        trunc1=2,
        trunc2=1,
        t_final_kappa=0.05,
        snapshots_kappa=(0.0, 0.05),
    )
    report = cli.cmd_converge(config)
    assert report["converged"]
    # mode 1 never leaves the vacuum
    for variant in report["variants"].values():
        assert variant["max_change"] < 1e-14


def test_converge_flags_small_truncation(tmp_path):
    code = cli.main(
        [
            "converge",
            "--set", "trunc0=1",
            "--set", "trunc1=2",
            "--set", "trunc2=1",
            "--set", "t_final_kappa=0.328",
            "--out", str(tmp_path),
        ]
    )
    assert code == cli.EXIT_FAILED

    report = yaml.safe_load((tmp_path / "converge.yaml").read_text())
    assert not report["variants"]["trunc1+1"]["converged"]


def test_converge_default_truncations():
    report = cli.cmd_converge(SimConfig(t_final_kappa=0.328), n_jobs=-1)
    assert report["converged"], report["variants"]


def test_schedule_lands_on_snapshots():
    config = SimConfig()
    space = build_space(*config.truncations)
    liouvillian = build_liouvillian(space, config)
    schedule = cli.resolve_schedule(liouvillian, config)

    assert schedule.nsteps * schedule.dt == pytest.approx(schedule.t_final)
    for t in schedule.snapshots:
        assert t / schedule.dt == pytest.approx(round(t / schedule.dt), abs=1e-6)
    assert schedule.record_stride == schedule.nsteps // 200
    assert schedule.dt * liouvillian.hamiltonian.max_abs() <= 0.1


# Reference parameter set, |e,0,0,0> initial state


def test_reference_run_invariants(reference_run):
    config, space, trajectory = reference_run
    obs = trajectory.observables

    assert trajectory.times[-1] == pytest.approx(0.5)
    assert float(np.abs(obs["trace"] - 1).max()) <= 1e-9
    assert float(obs["hermiticity"].max()) < 1e-10
    assert float(obs["min_eigenvalue"].min()) >= -1e-8
    assert float(obs["sector_leak"].max()) < 1e-12

    final = trajectory.snapshot(0.328)
    assert abs(final.trace() - 1) <= 1e-9


def test_reference_run_starts_in_vacuum(reference_run):
    config, space, trajectory = reference_run
    p = analysis.photon_distribution(analysis.reduce_to_mode1(trajectory.snapshot(0.0)))
    assert p[0] == 1
    assert not p[1:].any()


def test_reference_run_three_photon_state(reference_run):
    config, space, trajectory = reference_run
    reduced = analysis.reduce_to_mode1(trajectory.snapshot(0.216))
    p = analysis.photon_distribution(reduced)

    assert p[3] > p[1]
    assert p[3] > p[2]

    w = analysis.wigner(reduced, grid_max=config.grid_max, grid_n=config.grid_n)
    assert float(w.min()) < 0
    assert not w.attrs["grid_warning"]


def test_frame_independence():
    assert cli.frame_difference(SimConfig()) < 1e-8


def test_jc_rabi():
    assert cli.jc_rabi_error(SimConfig()) < 1e-6
