"""analysis.py

Reduced single-mode states, photon statistics and Wigner functions.

Wigner functions use alpha = (x + ip)/sqrt(2) and are normalised so that
the integral of W over dx dp is 1:

    W(x, p) = (1/pi) Tr[rho D(2 alpha) Pi],   Pi = (-1)^n

which is the displaced-parity form, since D(alpha) Pi D(alpha)† = D(2 alpha) Pi.
"""

import logging
import math
import warnings

from joblib import Parallel, delayed
import numpy as np
from scipy import linalg, special
import xarray as xr

from .dynamics import charges

#: extra Fock levels beyond the reduced dimension for the padded displacement
DISPLACEMENT_PAD = 10
GRID_TAIL_TOLERANCE = 1e-6

_REDUCTIONS = {0: "aimnajmn->ij", 1: "animanjm->ij", 2: "anmianmj->ij"}


class GridWarning(UserWarning):
    pass


class ReducedState:
    """Density matrix of a single cavity mode after tracing out the rest."""

    __slots__ = ("data", "time", "frame", "mode")

    def __init__(self, data, time=0.0, frame="rotating", mode=1):
        self.data = np.asarray(data, dtype=complex)
        self.time = float(time)
        self.frame = frame
        self.mode = mode

    def __repr__(self):
        return "<ReducedState(mode={}, dim={}, time={:g}, frame={})>".format(
            self.mode, self.dim, self.time, self.frame
        )

    @property
    def dim(self):
        return self.data.shape[0]

    def trace(self):
        return complex(np.trace(self.data))

    def hermiticity_error(self):
        return float(np.abs(self.data - self.data.conj().T).max())


def _as_array(rho):
    return np.asarray(getattr(rho, "data", rho), dtype=complex)


def reduce_to_mode(rho, mode, space=None):
    """Partial trace over the dot and the two other modes.

    rho_(mode)[i, j] = sum over the remaining labels of <.., i, ..|rho|.., j, ..>
    """

    space = space if space is not None else rho.space
    if mode not in _REDUCTIONS:
        raise ValueError("mode must be 0, 1 or 2, got {!r}".format(mode))

    full = _as_array(rho).reshape(space.shape + space.shape)
    data = np.einsum(_REDUCTIONS[mode], full)

    return ReducedState(
        data,
        time=getattr(rho, "time", 0.0),
        frame=getattr(rho, "frame", "rotating"),
        mode=mode,
    )


def reduce_to_mode1(rho, space=None):
    return reduce_to_mode(rho, 1, space)


def photon_distribution(reduced):
    """p(n) = rho_nn, real."""

    return np.real(np.diag(_as_array(reduced))).copy()


def triplet_weight(p):
    """Weight of the distribution on photon numbers divisible by three."""

    return float(np.sum(np.asarray(p)[::3]))


def populations(rho):
    return np.real(np.diag(_as_array(rho)))


def mode_observables(rho, space=None):
    """<n0>, <n1>, <n2>, <s†s> and Tr rho² of a full density matrix."""

    space = space if space is not None else rho.space
    data = _as_array(rho)
    pop = populations(data)
    occ = space.occupations()

    return {
        "n0": float(occ[:, 1] @ pop),
        "n1": float(occ[:, 2] @ pop),
        "n2": float(occ[:, 3] @ pop),
        "exc": float(occ[:, 0] @ pop),
        "purity": float(np.real(np.vdot(data.conj().T, data))),
    }


def sector_leak(rho, space=None):
    """Population outside the Q = 0 (mod 3) sectors."""

    space = space if space is not None else rho.space
    return float(populations(rho)[charges(space) % 3 != 0].sum())


def record_observables(rho):
    """Columns recorded along a trajectory: mode observables, selection-rule
    leak and the mode-1 triplet weight."""

    row = mode_observables(rho)
    row["sector_leak"] = sector_leak(rho)
    row["triplet_weight"] = triplet_weight(photon_distribution(reduce_to_mode1(rho)))
    return row


def fock_wigner(n, x, p):
    """Closed-form Wigner function of the Fock state |n>."""

    r2 = np.asarray(x) ** 2 + np.asarray(p) ** 2
    return (-1) ** n / np.pi * np.exp(-r2) * special.eval_laguerre(n, 2 * r2)


def grid_integral(w):
    """Riemann sum of W dx dp over the grid."""

    dx = float(w["x"][1] - w["x"][0])
    dp = float(w["p"][1] - w["p"][0])
    return float(w.sum()) * dx * dp


def energy_reach(grid_max):
    """Largest photon number whose Wigner function the grid resolves."""

    return int(math.floor((grid_max**2 - 1) / 2)) - 2


def padded_dimension(dim, beta_max):
    """Fock cutoff for D(beta) so that the dim x dim block is accurate well
    beyond double precision for |beta| <= beta_max."""

    reach = beta_max + math.sqrt(dim) + 5
    return dim + DISPLACEMENT_PAD + int(math.ceil(reach**2))


def displacement_generator(size):
    """Eigen-decomposition of K = i(a† - a) on `size` levels; D(r) = exp(-i r K)
    for real r."""

    k = np.arange(1, size)
    a = np.diag(np.sqrt(k.astype(float)), 1)
    return linalg.eigh(1j * (a.T - a))


def displacement_block(beta, dim, eig=None):
    """<k|D(beta)|j> for k, j < dim."""

    beta = complex(beta)
    if eig is None:
        eig = displacement_generator(padded_dimension(dim, abs(beta)))
    lam, vec = eig
    v = vec[:dim]

    block = (v * np.exp(-1j * abs(beta) * lam)) @ v.conj().T
    n = np.arange(dim)
    phase = np.exp(1j * np.angle(beta) * (n[:, None] - n[None, :]))
    return phase * block


def laguerre_displacement_block(beta, dim):
    """<k|D(beta)|j> from the associated Laguerre closed form."""

    beta = complex(beta)
    x = abs(beta) ** 2
    out = np.empty((dim, dim), dtype=complex)
    for k in range(dim):
        for j in range(dim):
            lo, hi = min(j, k), max(j, k)
            norm = math.exp(0.5 * (special.gammaln(lo + 1) - special.gammaln(hi + 1)) - x / 2)
            factor = beta ** (k - j) if k >= j else (-beta.conjugate()) ** (j - k)
            out[k, j] = norm * factor * special.eval_genlaguerre(lo, hi - lo, x)
    return out


def _weighted(data):
    # A[k, j] = rho_jk (-1)^j, so W = sum A * D(2 alpha)
    sign = (-1.0) ** np.arange(data.shape[0])
    return data.T * sign[None, :]


def _parity_row(weighted, x, p, eig):
    dim = weighted.shape[0]
    lam, vec = eig
    v = vec[:dim]

    beta = np.sqrt(2.0) * (x + 1j * p)
    r = np.abs(beta)
    theta = np.angle(beta)

    # (points, dim, dim) blocks of D(r), then the phase rotation
    blocks = (v[None, :, :] * np.exp(-1j * np.outer(r, lam))[:, None, :]) @ v.conj().T
    n = np.arange(dim)
    phases = np.exp(1j * theta[:, None, None] * (n[:, None] - n[None, :])[None])

    return np.einsum("kj,zkj->z", weighted, phases * blocks) / np.pi


def _laguerre_row(weighted, x, p):
    dim = weighted.shape[0]
    beta = np.sqrt(2.0) * (x + 1j * p)
    r2 = np.abs(beta) ** 2
    out = np.zeros(beta.shape, dtype=complex)

    for k in range(dim):
        for j in range(dim):
            if weighted[k, j] == 0:
                continue
            lo, hi = min(j, k), max(j, k)
            norm = np.exp(0.5 * (special.gammaln(lo + 1) - special.gammaln(hi + 1)) - r2 / 2)
            factor = beta ** (k - j) if k >= j else (-beta.conj()) ** (j - k)
            out += weighted[k, j] * norm * factor * special.eval_genlaguerre(lo, hi - lo, r2)

    return out / np.pi


def wigner(reduced, grid_max=6.0, grid_n=201, method="parity", n_jobs=1):
    """Wigner function of a reduced state on x, p in [-grid_max, grid_max].

    Returns an xarray.DataArray on (x, p) whose attrs carry the grid integral,
    the largest imaginary residue and whether the grid is too small for the
    state's photon distribution (a GridWarning is issued in that case).
    """

    data = _as_array(reduced)
    dim = data.shape[0]
    xs = np.linspace(-grid_max, grid_max, grid_n)

    reach = energy_reach(grid_max)
    tail = float(photon_distribution(data)[reach + 1 :].sum()) if reach + 1 < dim else 0.0
    grid_warning = tail > GRID_TAIL_TOLERANCE
    if grid_warning:
        warnings.warn(
            "Photon weight {:.3e} above n={} lies beyond the reach of a grid of half-width {}".format(
                tail, reach, grid_max
            ),
            GridWarning,
        )

    weighted = _weighted(data)
    if method == "parity":
        eig = displacement_generator(padded_dimension(dim, 2 * grid_max))
        rows = Parallel(n_jobs=n_jobs)(
            delayed(_parity_row)(weighted, np.full(grid_n, x), xs, eig) for x in xs
        )
    elif method == "laguerre":
        rows = Parallel(n_jobs=n_jobs)(
            delayed(_laguerre_row)(weighted, np.full(grid_n, x), xs) for x in xs
        )
    else:
        raise ValueError("Unknown Wigner method {!r}".format(method))

    values = np.array(rows)
    w = xr.DataArray(
        np.real(values),
        dims=("x", "p"),
        coords={"x": xs, "p": xs},
        name="W",
        attrs={
            "time": getattr(reduced, "time", 0.0),
            "frame": getattr(reduced, "frame", "rotating"),
            "method": method,
            "grid_max": float(grid_max),
            "grid_n": int(grid_n),
            "imag_residue": float(np.abs(np.imag(values)).max()),
            "grid_warning": bool(grid_warning),
            "tail_weight": tail,
        },
    )
    w.attrs["integral"] = grid_integral(w)

    logging.debug(
        "Wigner grid %dx%d (%s): integral %.6f, min %.4g", grid_n, grid_n, method, w.attrs["integral"], float(w.min())
    )

    return w
