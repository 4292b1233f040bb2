"""dynamics.py

Hamiltonian and Lindblad generator of the dot-cavity system followed by the
two cascaded down-conversion processes omega0 -> omega1 + omega2 and
omega2 -> omega1 + omega1:

    H = w0 n0 + w1 n1 + w2 n2 + wqd s†s + g (a0† s + a0 s†)
        + zeta (a0 a1† a2† + a0† a1 a2) + xi (a1†² a2 + a1² a2†)

    drho/dt = i[rho, H] + (P/2)(2 s† rho s - {s s†, rho})
                        + (kappa/2)(2 a0 rho a0† - {a0† a0, rho})

with w1 = w0/3 and w2 = 2 w0/3 fixed by the two processes. Energies are in
meV with hbar = 1.

Density matrices are vectorised row-major (vec[i * dim + j] = rho[i, j]), so
A rho -> kron(A, 1) and rho B -> kron(1, B^T).
"""

import logging

import numpy as np
from scipy import sparse

from .config import SimConfig, ConfigError, validate
from .fockspace import (
    BasisState,
    Dot,
    OperatorMatrix,
    dot_lowering,
    excitation_operator,
    ladder,
    number_operator,
)

#: mode frequencies in units of omega0
FREQUENCY_RATIOS = (1.0, 1.0 / 3.0, 2.0 / 3.0)

PROCESSES = ("jc", "zeta", "xi", "loss", "pump")


def _check_config(config):
    if not isinstance(config, SimConfig):
        raise ConfigError("<config>", "expected a SimConfig, got {!r}".format(type(config)))
    # SimConfig validates on construction; repeated here for objects built
    # through object.__setattr__ or unpickled from elsewhere
    validate(config)


def interaction_operators(space):
    """The three process operators whose Hermitian parts build H_int.

    Returns (a0† s, a0 a1† a2†, a1†² a2).
    """

    a0, a1, a2 = (ladder(space, mode) for mode in (0, 1, 2))
    sigma = dot_lowering(space)

    jc = a0.dag() @ sigma
    spdc_zeta = a0 @ a1.dag() @ a2.dag()
    spdc_xi = a1.dag() @ a1.dag() @ a2

    return jc, spdc_zeta, spdc_xi


def free_energies(space, config, frame=None):
    """Diagonal of the free Hamiltonian in the requested frame.

    lab:      w0 n0 + (w0/3) n1 + (2 w0/3) n2 + wqd s†s
    rotating: (wqd - w0) s†s, i.e. what remains after removing
              H0 = w0 (n0 + s†s) + (w0/3) n1 + (2 w0/3) n2 = (w0/3) Q.
    """

    frame = config.frame if frame is None else frame
    occ = space.occupations().astype(float)
    exc, n0, n1, n2 = occ.T

    if frame == "lab":
        w0 = config.omega0_mev
        return (
            w0 * n0
            + w0 * FREQUENCY_RATIOS[1] * n1
            + w0 * FREQUENCY_RATIOS[2] * n2
            + config.omega_qd_mev * exc
        )
    if frame == "rotating":
        return -config.detuning * exc

    raise ConfigError("frame", "unknown frame {!r}".format(frame))


def build_hamiltonian(space, config):
    """Sparse Hermitian Hamiltonian H = H_JC + H_SPDC in the configured frame."""

    _check_config(config)

    jc, spdc_zeta, spdc_xi = interaction_operators(space)

    # each pair is X + X† so the result is Hermitian element by element
    h = (
        config.g_mev * (jc.matrix + jc.matrix.conj().T)
        + config.zeta_mev * (spdc_zeta.matrix + spdc_zeta.matrix.conj().T)
        + config.xi_mev * (spdc_xi.matrix + spdc_xi.matrix.conj().T)
        + sparse.diags(free_energies(space, config))
    )
    h = sparse.csr_matrix(h, dtype=complex)
    h.eliminate_zeros()

    return OperatorMatrix(h, "H[{}]".format(config.frame))


def charges(space):
    """Q = 3 (n0 + s†s) + n1 + 2 n2 for every flat index."""

    exc, n0, n1, n2 = space.occupations().T
    return 3 * (n0 + exc) + n1 + 2 * n2


def charge_operator(space):
    """Diagonal operator Q, conserved by H; pump adds 3, loss removes 3."""

    return OperatorMatrix(sparse.diags(charges(space).astype(float)), "Q")


def one_process_neighbors(space, state):
    """States reachable from `state` by a single application of each process.

    Targets outside the truncation are included, so callers can tell
    interior states (all targets inside) from boundary ones.
    """

    dot, n0, n1, n2 = state
    dot = Dot(dot)
    out = {p: [] for p in PROCESSES}

    if dot is Dot.excited:
        out["jc"].append(BasisState(Dot.ground, n0 + 1, n1, n2))
    elif n0 >= 1:
        out["jc"].append(BasisState(Dot.excited, n0 - 1, n1, n2))

    if n0 >= 1:
        out["zeta"].append(BasisState(dot, n0 - 1, n1 + 1, n2 + 1))
        out["loss"].append(BasisState(dot, n0 - 1, n1, n2))
    if n1 >= 1 and n2 >= 1:
        out["zeta"].append(BasisState(dot, n0 + 1, n1 - 1, n2 - 1))

    if n2 >= 1:
        out["xi"].append(BasisState(dot, n0, n1 + 2, n2 - 1))
    if n1 >= 2:
        out["xi"].append(BasisState(dot, n0, n1 - 2, n2 + 1))

    if dot is Dot.ground:
        out["pump"].append(BasisState(Dot.excited, n0, n1, n2))

    return out


def is_interior(space, state):
    """True when every one-process neighbour lies inside the truncation."""

    return all(
        space.contains(s) for targets in one_process_neighbors(space, state).values() for s in targets
    )


def spectral_bound(hamiltonian):
    """Gershgorin bound on the spectral radius: max absolute row sum."""

    m = hamiltonian.matrix if isinstance(hamiltonian, OperatorMatrix) else hamiltonian
    if m.nnz == 0:
        return 0.0
    return float(np.asarray(abs(m).sum(axis=1)).max())


def _left(a):
    return sparse.kron(a, sparse.identity(a.shape[0], format="csr"), format="csr")


def _right(b):
    return sparse.kron(sparse.identity(b.shape[0], format="csr"), b.T, format="csr")


def _dissipator(jump, rate):
    """(rate/2)(2 J rho J† - {J† J, rho}) as a superoperator."""

    jd = jump.conj().T
    jdj = jd @ jump
    return 0.5 * rate * (2 * sparse.kron(jump, jd.T, format="csr") - _left(jdj) - _right(jdj))


class Liouvillian:
    """Linear generator L with drho/dt = L(rho).

    `matrix` is the dim² x dim² sparse superoperator on row-major vectorised
    density matrices; calling the object applies it to a dense dim x dim
    array. `apply` evaluates the same map through operator products.
    """

    def __init__(self, space, config, hamiltonian, matrix):
        self.space = space
        self.config = config
        self.hamiltonian = hamiltonian
        self.matrix = matrix

    def __repr__(self):
        return "<Liouvillian({!r}, frame={}, nnz={})>".format(
            self.space, self.config.frame, self.matrix.nnz
        )

    @property
    def dim(self):
        return self.space.dim

    def __call__(self, rho):
        rho = np.asarray(rho)
        return (self.matrix @ rho.ravel()).reshape(rho.shape)

    def apply(self, rho):
        """i[rho, H] + D_pump(rho) + D_loss(rho) from operator products."""

        rho = np.asarray(rho, dtype=complex)
        h = self.hamiltonian.matrix
        sigma = dot_lowering(self.space).matrix
        a0 = ladder(self.space, 0).matrix
        cfg = self.config

        def rmul(r, b):
            # r @ b for dense r and sparse b
            return (b.T @ r.T).T

        out = 1j * (rmul(rho, h) - h @ rho)

        if cfg.pump_mev:
            sd = sigma.conj().T
            proj = sigma @ sd
            out += 0.5 * cfg.pump_mev * (
                2 * rmul(sd @ rho, sigma) - proj @ rho - rmul(rho, proj)
            )
        if cfg.kappa_mev:
            a0d = a0.conj().T
            n0 = a0d @ a0
            out += 0.5 * cfg.kappa_mev * (2 * rmul(a0 @ rho, a0d) - n0 @ rho - rmul(rho, n0))

        return out

    def restrict(self, support):
        """Sub-generator acting on the vectorised elements listed in `support`.

        Only exact when L maps span(support) into itself, e.g. when support
        is a union of coherence-charge classes (see coherence_charge_support).
        """

        support = np.asarray(support)
        return self.matrix[support][:, support].tocsr()

    def coherence_support(self, rho):
        """Vectorised indices whose coherence charge Q(A) - Q(B) occurs in rho."""

        return coherence_charge_support(self.space, rho)


def coherence_charge(space):
    """dim x dim array of Q(A) - Q(B); L never mixes different values."""

    q = charges(space)
    return q[:, None] - q[None, :]


def coherence_charge_support(space, rho, atol=0.0):
    """Flat indices of all elements sharing a coherence charge with a nonzero
    element of rho. The set of charges is closed under negation, so the
    support is closed under transposition."""

    dq = coherence_charge(space)
    present = np.unique(dq[np.abs(np.asarray(rho)) > atol])
    present = np.union1d(present, -present)
    return np.flatnonzero(np.isin(dq.ravel(), present))


def build_liouvillian(space, config):
    """Assemble the sparse Lindblad superoperator for the configured frame."""

    h = build_hamiltonian(space, config)
    hm = h.matrix

    sigma = dot_lowering(space).matrix
    a0 = ladder(space, 0).matrix

    matrix = -1j * _left(hm) + 1j * _right(hm)
    if config.pump_mev:
        matrix = matrix + _dissipator(sigma.conj().T, config.pump_mev)
    if config.kappa_mev:
        matrix = matrix + _dissipator(a0, config.kappa_mev)

    matrix = sparse.csr_matrix(matrix, dtype=complex)
    matrix.eliminate_zeros()

    logging.debug(
        "Liouvillian for %r in the %s frame: %d nonzeros", space, config.frame, matrix.nnz
    )

    return Liouvillian(space, config, h, matrix)


def frame_phases(space, config, t):
    """exp(i (E0_A - E0_B) t) with E0 = (w0/3) Q, the rotating-frame factor
    that takes a lab-frame element rho_AB at time t to the rotating frame."""

    e0 = config.omega0_mev * charges(space) / 3.0
    return np.exp(1j * (e0[:, None] - e0[None, :]) * t)


def change_frame(rho, config, space, to):
    """Transform a DensityMatrix between the lab and rotating frames.

    The state's time stamp (in config.time_unit) fixes the frame rotation.
    Elements with equal Q on both sides are unchanged.
    """

    if to not in ("lab", "rotating"):
        raise ConfigError("frame", "unknown frame {!r}".format(to))
    if rho.frame == to:
        return rho

    t = rho.time / config.time_scale
    phases = frame_phases(space, config, t)
    if to == "lab":
        phases = phases.conj()

    return rho.replace(data=rho.data * phases, frame=to)
