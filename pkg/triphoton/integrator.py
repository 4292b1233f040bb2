"""integrator.py

Fixed-step classical Runge-Kutta propagation of the density matrix under a
Liouvillian, with recorded observables and snapshot states.

Times passed to evolve/propagate (t_final, dt, snapshots) are in 1/meV.
Recorded time stamps are reported in the configuration's time unit: t*kappa
when kappa > 0, t otherwise.
"""

import logging
import math
import re
import warnings

import numpy as np
from scipy import linalg
from tqdm import tqdm
import xarray as xr

from .dynamics import charges, coherence_charge, coherence_charge_support, spectral_bound

#: step-size guard: dt * max|H_ij| must stay below this
MAX_PHASE_PER_STEP = 0.1
#: automatic dt is chosen so dt * (spectral bound) equals this
AUTO_STEP_FACTOR = 0.02
TRACE_DRIFT_ABORT = 1e-6
POSITIVITY_WARN = -1e-8


class StateSpecError(ValueError):
    pass


class StepSizeError(ValueError):
    pass


class IntegrationError(RuntimeError):
    def __init__(self, message, step=None, time=None):
        super().__init__(message)
        self.step = step
        self.time = time


class PositivityWarning(UserWarning):
    pass


class NormalisationWarning(UserWarning):
    pass


class DensityMatrix:
    """Dense density matrix with its time stamp (config time unit) and frame."""

    __slots__ = ("data", "time", "frame", "space")

    def __init__(self, data, time=0.0, frame="rotating", space=None):
        self.data = np.asarray(data, dtype=complex)
        self.time = float(time)
        self.frame = frame
        self.space = space

    def __repr__(self):
        return "<DensityMatrix(dim={}, time={:g}, frame={})>".format(
            self.data.shape[0], self.time, self.frame
        )

    @property
    def dim(self):
        return self.data.shape[0]

    def replace(self, **changes):
        values = {k: getattr(self, k) for k in self.__slots__}
        values.update(changes)
        return DensityMatrix(**values)

    def trace(self):
        return complex(np.trace(self.data))

    def purity(self):
        """Tr rho² (real part; rho is Hermitian)."""
        return float(np.real(np.vdot(self.data.conj().T, self.data)))

    def hermiticity_error(self):
        return float(np.abs(self.data - self.data.conj().T).max())

    def symmetrized(self):
        return self.replace(data=0.5 * (self.data + self.data.conj().T))

    def min_eigenvalue(self, blocks=None):
        """Smallest eigenvalue of the Hermitian part; `blocks` (index arrays)
        restricts the computation to a block-diagonal structure."""

        h = 0.5 * (self.data + self.data.conj().T)
        if blocks is None:
            return float(linalg.eigvalsh(h)[0])
        return float(min(linalg.eigvalsh(h[np.ix_(b, b)])[0] for b in blocks))

    def check(self, hermiticity=1e-10, trace=1e-9, positivity=-1e-8, blocks=None):
        """Return a list of violated invariants (empty when valid)."""

        problems = []
        herr = self.hermiticity_error()
        if herr > hermiticity:
            problems.append("hermiticity error {:.3e} > {:g}".format(herr, hermiticity))
        tr = self.trace()
        if abs(tr - 1) > trace:
            problems.append("trace {:.12g} differs from 1 by more than {:g}".format(tr, trace))
        if positivity is not None:
            lmin = self.min_eigenvalue(blocks)
            if lmin < positivity:
                problems.append("min eigenvalue {:.3e} < {:g}".format(lmin, positivity))
        return problems


class Trajectory:
    """Recorded observables (xarray.Dataset on `time`) plus snapshot states."""

    def __init__(self, observables, snapshots=(), states=(), final=None):
        self.observables = observables
        self.snapshots = list(snapshots)
        self.states = list(states)
        self.final = final

    def __repr__(self):
        return "<Trajectory({} records, {} snapshots, time unit {})>".format(
            self.observables.sizes.get("time", 0),
            len(self.snapshots),
            self.observables.attrs.get("time_unit"),
        )

    @property
    def times(self):
        return self.observables["time"].values

    def snapshot(self, time, atol=1e-9):
        """Snapshot whose time stamp matches `time`."""

        for rho in self.snapshots:
            if abs(rho.time - time) <= atol:
                return rho
        raise KeyError("No snapshot at time {}".format(time))

    def to_dataframe(self):
        return self.observables.to_dataframe().reset_index()


_TERM_SPLIT = re.compile(r"\+(?=\s*(?:\d*\.?\d+(?:[eE]-?\d+)?\s*\*|\|?\s*[geGE]\s*,))")
_TERM = re.compile(
    r"^\s*(?:(?P<weight>\d*\.?\d+(?:[eE]-?\d+)?)\s*\*?\s*)?"
    r"\|?\s*(?P<dot>[geGE])\s*,\s*(?P<n0>\d+)\s*,\s*(?P<n1>\d+)\s*,\s*(?P<n2>\d+)\s*>?\s*$"
)


def parse_state_spec(spec):
    """Parse '0.5*g,0,0,0 + 0.5*e,0,0,0' into [(weight, 'g', n0, n1, n2), ...]."""

    if spec is None or str(spec).strip().lower() in ("", "default"):
        spec = "e,0,0,0"

    terms = []
    for part in _TERM_SPLIT.split(str(spec)):
        m = _TERM.match(part)
        if m is None:
            raise StateSpecError("Unknown state specification {!r} (term {!r})".format(spec, part))
        weight = float(m.group("weight")) if m.group("weight") else 1.0
        terms.append(
            (weight, m.group("dot").lower(), int(m.group("n0")), int(m.group("n1")), int(m.group("n2")))
        )
    return terms


def initial_state(space, spec="e,0,0,0", frame="rotating"):
    """Density matrix of a basis state or an incoherent mixture of basis states.

    The default is the excited dot with all three modes in vacuum.
    """

    terms = parse_state_spec(spec)

    total = sum(w for w, *_ in terms)
    if total <= 0:
        raise StateSpecError("State specification {!r} has zero total weight".format(spec))
    if abs(total - 1) > 1e-12:
        warnings.warn(
            "Mixture weights of {!r} sum to {:g}; renormalising".format(spec, total),
            NormalisationWarning,
        )

    data = np.zeros((space.dim, space.dim), dtype=complex)
    for weight, dot, n0, n1, n2 in terms:
        state = (0 if dot == "g" else 1, n0, n1, n2)
        if not space.contains(state):
            raise StateSpecError("{!r} lies outside {!r}".format(spec, space))
        i = space.flatten(state)
        data[i, i] += weight / total

    return DensityMatrix(data, time=0.0, frame=frame, space=space)


def automatic_step(liouvillian, factor=AUTO_STEP_FACTOR):
    """dt with dt * (Gershgorin bound of H + kappa trunc0 + P) = factor.

    Returns None for a vanishing generator.
    """

    cfg = liouvillian.config
    bound = (
        spectral_bound(liouvillian.hamiltonian)
        + cfg.kappa_mev * liouvillian.space.trunc0
        + cfg.pump_mev
    )
    if bound == 0:
        return None
    return factor / bound


def aligned_step(dt, times, scale=1.0):
    """Largest step <= dt dividing every time in `times` (reported units).

    Times are placed on a 1e-3 lattice (finer lattices are tried when they do
    not fit); the returned step is in 1/meV. dt=None returns the lattice base.
    """

    times = [t for t in times if t > 0]
    if not times:
        raise StepSizeError("Need at least one positive time to align the step")

    for resolution in (1e-3, 1e-6, 1e-9):
        ks = [int(round(t / resolution)) for t in times]
        if all(abs(k * resolution - t) <= 1e-12 * max(1.0, t) for k, t in zip(ks, times)):
            break
    else:
        raise StepSizeError("Times {} do not fit a 1e-9 lattice".format(times))

    base = math.gcd(*ks) * resolution / scale
    if dt is None:
        return base
    if dt <= 0:
        raise StepSizeError("dt must be > 0, got {}".format(dt))
    return base / math.ceil(base / dt - 1e-9)


def check_step(liouvillian, dt):
    """Raise StepSizeError unless 0 < dt and dt * max|H_ij| <= 0.1."""

    if not dt > 0:
        raise StepSizeError("dt must be > 0, got {}".format(dt))
    hmax = liouvillian.hamiltonian.max_abs()
    if dt * hmax > MAX_PHASE_PER_STEP:
        raise StepSizeError(
            "dt*|H|max = {:.4g} exceeds {} (dt={:.4g}, |H|max={:.4g} meV)".format(
                dt * hmax, MAX_PHASE_PER_STEP, dt, hmax
            )
        )


class _Stepper:
    """RK4 on the vectorised density matrix, optionally restricted to the
    coherence-charge classes present in the initial state."""

    def __init__(self, liouvillian, rho0, dt, restrict=True):
        space = liouvillian.space
        dim = space.dim
        self.dim = dim
        self.dt = dt

        data = np.asarray(rho0.data, dtype=complex)
        if restrict:
            self.support = coherence_charge_support(space, data)
            self.generator = liouvillian.restrict(self.support)
        else:
            self.support = np.arange(dim * dim)
            self.generator = liouvillian.matrix

        position = np.full(dim * dim, -1)
        position[self.support] = np.arange(self.support.size)
        transposed = np.arange(dim * dim).reshape(dim, dim).T.ravel()
        self.transpose = position[transposed[self.support]]
        self.diagonal = position[np.arange(dim) * (dim + 1)]
        self.diagonal = self.diagonal[self.diagonal >= 0]

        self.y = data.ravel()[self.support].copy()

        # per-sector blocks are exact when only Q-diagonal elements are evolved
        present = np.unique(coherence_charge(space).ravel()[self.support])
        if present.size == 1 and present[0] == 0:
            q = charges(space)
            self.blocks = [np.flatnonzero(q == v) for v in np.unique(q)]
        else:
            self.blocks = None

        logging.debug(
            "RK4 on %d of %d matrix elements (%d generator nonzeros)",
            self.support.size,
            dim * dim,
            self.generator.nnz,
        )

    def step(self):
        g, h, y = self.generator, self.dt, self.y
        k1 = g @ y
        k2 = g @ (y + 0.5 * h * k1)
        k3 = g @ (y + 0.5 * h * k2)
        k4 = g @ (y + h * k3)
        self.y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    def symmetrize(self):
        self.y = 0.5 * (self.y + self.y[self.transpose].conj())

    def trace(self):
        return complex(self.y[self.diagonal].sum())

    def finite(self):
        return bool(np.isfinite(self.y).all())

    def matrix(self):
        full = np.zeros(self.dim * self.dim, dtype=complex)
        full[self.support] = self.y
        return full.reshape(self.dim, self.dim)


def _steps_for(times, dt, what):
    steps = []
    for t in times:
        k = int(round(t / dt))
        if abs(k * dt - t) > 1e-6 * dt:
            raise StepSizeError(
                "{} time {:.6g} is not a multiple of dt={:.6g}; use aligned_step".format(what, t, dt)
            )
        steps.append(k)
    return steps


def _check_health(stepper, trace0, k, t):
    if not stepper.finite():
        raise IntegrationError(
            "Non-finite density matrix at step {} (t={:.6g})".format(k, t), step=k, time=t
        )
    drift = abs(stepper.trace() - trace0)
    if drift > TRACE_DRIFT_ABORT:
        raise IntegrationError(
            "Trace drifted by {:.3e} at step {} (t={:.6g})".format(drift, k, t), step=k, time=t
        )


def evolve(
    rho0,
    liouvillian,
    t_final,
    dt,
    record_stride=1,
    snapshots=(),
    observe=None,
    restrict=True,
    check_positivity=True,
    symmetrize_stride=1000,
    keep_states=False,
    progress=False,
):
    """Propagate rho0 to t_final with classical RK4 and record a trajectory.

    t_final, dt and snapshots are in 1/meV; t_final (and every snapshot) must
    be a multiple of dt. Every `record_stride` steps, at each snapshot and at
    the end, the state is re-symmetrised into a recorded copy, checked, and
    `observe(rho) -> dict` adds columns to the observables. The propagated
    state itself is re-symmetrised every `symmetrize_stride` steps, so the
    recorded values do not depend on record_stride.

    Raises StepSizeError for dt <= 0 or dt * max|H_ij| > 0.1, and
    IntegrationError on NaNs or a trace drift above 1e-6.
    """

    check_step(liouvillian, dt)
    if t_final < 0:
        raise StepSizeError("t_final must be >= 0, got {}".format(t_final))
    if record_stride < 1:
        raise StepSizeError("record_stride must be >= 1, got {}".format(record_stride))

    cfg = liouvillian.config
    scale = cfg.time_scale
    (nsteps,) = _steps_for([t_final], dt, "Final")
    snapshot_steps = set(_steps_for(snapshots, dt, "Snapshot"))
    if snapshot_steps and max(snapshot_steps) > nsteps:
        raise StepSizeError("Snapshot beyond t_final={}".format(t_final))

    stepper = _Stepper(liouvillian, rho0, dt, restrict=restrict)
    trace0 = stepper.trace()
    blocks = stepper.blocks

    rows = []
    recorded_snapshots = []
    states = []

    def record(k):
        t = k * dt
        _check_health(stepper, trace0, k, t)

        raw = DensityMatrix(stepper.matrix(), time=t * scale, frame=cfg.frame, space=liouvillian.space)
        herr = raw.hermiticity_error()
        rho = raw.symmetrized()

        row = {
            "time": rho.time,
            "trace": rho.trace().real,
            "hermiticity": herr,
            "min_eigenvalue": np.nan,
        }
        if check_positivity:
            lmin = rho.min_eigenvalue(blocks)
            row["min_eigenvalue"] = lmin
            if lmin < POSITIVITY_WARN:
                warnings.warn(
                    "Minimum eigenvalue {:.3e} at step {} (time {:.6g})".format(lmin, k, rho.time),
                    PositivityWarning,
                )
        if observe is not None:
            row.update(observe(rho))
        rows.append(row)

        if k in snapshot_steps:
            recorded_snapshots.append(rho)
        if keep_states:
            states.append(rho)
        return rho

    final = record(0)
    with tqdm(total=nsteps, disable=not progress, desc="RK4", unit="step") as bar:
        for k in range(1, nsteps + 1):
            stepper.step()
            if k % symmetrize_stride == 0:
                stepper.symmetrize()
                _check_health(stepper, trace0, k, k * dt)
            if k % record_stride == 0 or k == nsteps or k in snapshot_steps:
                final = record(k)
            if k % 1000 == 0 or k == nsteps:
                bar.update(k - bar.n)

    columns = {key: ("time", np.array([r[key] for r in rows])) for key in rows[0] if key != "time"}
    observables = xr.Dataset(
        columns,
        coords={"time": np.array([r["time"] for r in rows])},
        attrs={
            "time_unit": cfg.time_unit,
            "frame": cfg.frame,
            "dt": dt,
            "nsteps": nsteps,
            "record_stride": record_stride,
            "restricted_elements": int(stepper.support.size),
        },
    )

    logging.info(
        "Evolved %d RK4 steps of dt=%.4g 1/meV (%d records, %d snapshots)",
        nsteps,
        dt,
        len(rows),
        len(recorded_snapshots),
    )

    return Trajectory(observables, recorded_snapshots, states, final)


def propagate(rho0, liouvillian, t_final, dt, restrict=True, symmetrize_stride=1000):
    """Final state only, with the same stepping as evolve."""

    check_step(liouvillian, dt)
    (nsteps,) = _steps_for([t_final], dt, "Final")

    stepper = _Stepper(liouvillian, rho0, dt, restrict=restrict)
    trace0 = stepper.trace()
    for k in range(1, nsteps + 1):
        stepper.step()
        if k % symmetrize_stride == 0:
            stepper.symmetrize()
    _check_health(stepper, trace0, nsteps, nsteps * dt)

    return DensityMatrix(
        stepper.matrix(),
        time=nsteps * dt * liouvillian.config.time_scale,
        frame=liouvillian.config.frame,
        space=liouvillian.space,
    )


def step_convergence(rho0, liouvillian, t_final, dt, restrict=True):
    """Run at dt and dt/2 and report the max-abs difference of the final states."""

    coarse = propagate(rho0, liouvillian, t_final, dt, restrict=restrict)
    fine = propagate(rho0, liouvillian, t_final, dt / 2, restrict=restrict)
    diff = float(np.abs(coarse.data - fine.data).max())

    logging.info("Step convergence at dt=%.4g: max|drho| = %.3e", dt, diff)

    return {"dt": dt, "dt_half": dt / 2, "t_final": t_final, "max_abs_diff": diff}
