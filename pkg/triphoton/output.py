"""output.py

Self-describing plain-text tables: a '#'-prefixed YAML metadata header, a
row of column names, then whitespace-separated values with floats written as
%.16e so that repeated runs produce identical files.
"""

import logging
from pathlib import Path

import numpy as np
import pandas as pd
import xarray as xr
import yaml

from .analysis import ReducedState

FLOAT_FORMAT = "%.16e"

REDUCED_COLUMNS = ["row", "col", "re", "im"]
DISTRIBUTION_COLUMNS = ["n", "p"]
WIGNER_COLUMNS = ["x", "p", "W"]

OBSERVABLE_UNITS = {
    "n0": "photons",
    "n1": "photons",
    "n2": "photons",
    "exc": "probability",
    "purity": "1",
    "trace": "1",
    "hermiticity": "1",
    "min_eigenvalue": "1",
    "sector_leak": "probability",
    "triplet_weight": "probability",
}


class SnapshotFormatError(ValueError):
    pass


def snapshot_filename(prefix, time):
    """e.g. 'rho1_tk0.216.dat'; times off the 1e-3 grid keep 6 or 9 decimals."""

    for digits in (3, 6, 9):
        if abs(round(time, digits) - time) <= 1e-12 * max(1.0, abs(time)):
            break
    return "{}_tk{:.{}f}.dat".format(prefix, time, digits)


def _header(meta):
    text = yaml.safe_dump(meta, sort_keys=True, default_flow_style=False)
    return "".join("# {}\n".format(line) for line in text.splitlines())


def write_table(path, frame, meta):
    """Write a DataFrame with its metadata header; returns the path."""

    path = Path(path)
    with path.open("w") as fh:
        fh.write(_header(meta))
        frame.to_csv(fh, sep=" ", index=False, float_format=FLOAT_FORMAT)

    logging.debug("Wrote %s (%d rows)", path, len(frame))
    return path


def read_header(path):
    lines = []
    with Path(path).open() as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            lines.append(line[2:] if line.startswith("# ") else line[1:])
    try:
        meta = yaml.safe_load("".join(lines))
    except yaml.YAMLError as e:
        raise SnapshotFormatError("Malformed header in {}: {}".format(path, e))
    if not isinstance(meta, dict):
        raise SnapshotFormatError("{} has no metadata header".format(path))
    return meta


def read_table(path, columns=None, kind=None):
    """Return (metadata, DataFrame), checking the kind and column names."""

    path = Path(path)
    if not path.exists():
        raise SnapshotFormatError("No such file: {}".format(path))

    meta = read_header(path)
    if kind is not None and meta.get("kind") != kind:
        raise SnapshotFormatError(
            "{} holds kind {!r}, expected {!r}".format(path, meta.get("kind"), kind)
        )

    try:
        frame = pd.read_csv(path, sep=r"\s+", comment="#", float_precision="round_trip")
    except (ValueError, pd.errors.ParserError) as e:
        raise SnapshotFormatError("Cannot parse {}: {}".format(path, e))

    if columns is not None and list(frame.columns) != list(columns):
        raise SnapshotFormatError(
            "{} has columns {}, expected {}".format(path, list(frame.columns), columns)
        )
    if columns is not None and frame.isnull().values.any():
        raise SnapshotFormatError("{} has missing values".format(path))

    return meta, frame


def base_meta(run_id, kind, frame, time_unit, units):
    return {
        "run_id": run_id,
        "kind": kind,
        "frame": frame,
        "time_unit": time_unit,
        "units": units,
    }


def write_observables(path, trajectory, run_id):
    obs = trajectory.observables
    table = trajectory.to_dataframe()
    units = {"time": obs.attrs["time_unit"]}
    units.update({c: OBSERVABLE_UNITS.get(c, "1") for c in table.columns if c != "time"})

    meta = base_meta(run_id, "observables", obs.attrs["frame"], obs.attrs["time_unit"], units)
    meta["dt_inverse_mev"] = float(obs.attrs["dt"])
    meta["record_stride"] = int(obs.attrs["record_stride"])
    return write_table(path, table, meta)


def write_reduced(path, reduced, run_id, time_unit):
    """Reduced density matrix as (row, col, re, im) quadruples."""

    data = reduced.data
    rows, cols = np.indices(data.shape)
    table = pd.DataFrame(
        {
            "row": rows.ravel(),
            "col": cols.ravel(),
            "re": data.real.ravel(),
            "im": data.imag.ravel(),
        }
    )
    meta = base_meta(
        run_id,
        "reduced_state",
        reduced.frame,
        time_unit,
        {"row": "photons", "col": "photons", "re": "1", "im": "1"},
    )
    meta["mode"] = int(reduced.mode)
    meta["time"] = float(reduced.time)
    meta["dim"] = int(reduced.dim)
    return write_table(path, table, meta)


def read_reduced(path):
    meta, table = read_table(path, REDUCED_COLUMNS, kind="reduced_state")

    dim = int(round(np.sqrt(len(table))))
    if dim * dim != len(table) or dim == 0:
        raise SnapshotFormatError("{}: {} entries do not form a square matrix".format(path, len(table)))
    if meta.get("dim", dim) != dim:
        raise SnapshotFormatError("{}: header dim {} but {} entries".format(path, meta["dim"], len(table)))

    rows = table["row"].to_numpy()
    cols = table["col"].to_numpy()
    if not (
        np.issubdtype(rows.dtype, np.integer)
        and np.issubdtype(cols.dtype, np.integer)
        and rows.min() >= 0
        and cols.min() >= 0
        and rows.max() < dim
        and cols.max() < dim
    ):
        raise SnapshotFormatError("{}: row/col indices outside 0..{}".format(path, dim - 1))

    data = np.zeros((dim, dim), dtype=complex)
    data[rows, cols] = table["re"].to_numpy() + 1j * table["im"].to_numpy()

    return ReducedState(
        data,
        time=float(meta.get("time", 0.0)),
        frame=meta.get("frame", "rotating"),
        mode=int(meta.get("mode", 1)),
    ), meta


def write_distribution(path, p, run_id, frame, time_unit, time):
    table = pd.DataFrame({"n": np.arange(len(p)), "p": np.asarray(p, dtype=float)})
    meta = base_meta(run_id, "photon_distribution", frame, time_unit, {"n": "photons", "p": "probability"})
    meta["time"] = float(time)
    return write_table(path, table, meta)


def write_wigner(path, w, run_id, time_unit):
    x, p = np.meshgrid(w["x"].values, w["p"].values, indexing="ij")
    table = pd.DataFrame({"x": x.ravel(), "p": p.ravel(), "W": w.values.ravel()})
    meta = base_meta(run_id, "wigner", w.attrs["frame"], time_unit, {"x": "1", "p": "1", "W": "1"})
    for key in ("time", "grid_max", "grid_n", "integral", "grid_warning", "imag_residue", "method"):
        value = w.attrs[key]
        meta[key] = value.item() if isinstance(value, np.generic) else value
    return write_table(path, table, meta)


def read_wigner(path):
    meta, table = read_table(path, WIGNER_COLUMNS, kind="wigner")

    xs = np.unique(table["x"].to_numpy())
    ps = np.unique(table["p"].to_numpy())
    if len(xs) * len(ps) != len(table):
        raise SnapshotFormatError("{} is not a full (x, p) grid".format(path))

    values = table["W"].to_numpy().reshape(len(xs), len(ps))
    return xr.DataArray(values, dims=("x", "p"), coords={"x": xs, "p": ps}, name="W", attrs=meta)


def write_manifest(path, manifest):
    path = Path(path)
    path.write_text(yaml.safe_dump(manifest, sort_keys=True, default_flow_style=False))
    return path


def read_manifest(path):
    return yaml.safe_load(Path(path).read_text())


def export_netcdf(path, trajectory, reduced_states, run_id):
    """Trajectory observables plus snapshot reduced states as netCDF.

    Complex matrices are stored as separate real and imaginary variables.
    """

    ds = trajectory.observables.copy()
    if reduced_states:
        stack = np.array([r.data for r in reduced_states])
        dims = ("snapshot", "row", "col")
        ds["rho1_re"] = (dims, stack.real)
        ds["rho1_im"] = (dims, stack.imag)
        ds = ds.assign_coords(snapshot=[r.time for r in reduced_states])
    ds.attrs["run_id"] = run_id

    ds.to_netcdf(path)
    logging.info("Wrote %s", path)
    return Path(path)
