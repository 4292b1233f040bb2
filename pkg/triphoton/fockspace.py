"""fockspace.py

Truncated composite Hilbert space of the quantum dot and the three cavity
modes, and the elementary operators acting on it.

Basis vectors are |a, n0, n1, n2> with the dot level `a` varying slowest and
n2 fastest, so the flat index is a C-ordered ravel over the shape
(2, trunc0 + 1, trunc1 + 1, trunc2 + 1).
"""

from enum import IntEnum
import os
from typing import NamedTuple

import numpy as np
from scipy import sparse

__DEFAULT_MAX_DIM__ = 5000

MODES = (0, 1, 2)


class SpaceError(ValueError):
    pass


class Dot(IntEnum):
    ground = 0
    excited = 1

    @classmethod
    def parse(cls, value):
        """Accept a Dot, 0/1, or one of 'g', 'e', 'ground', 'excited'."""

        if isinstance(value, str):
            key = value.strip().lower()
            if key in ("g", "ground"):
                return cls.ground
            if key in ("e", "excited"):
                return cls.excited
            raise SpaceError("Unknown dot level: {!r}".format(value))

        return cls(int(value))

    @property
    def symbol(self):
        return "g" if self is Dot.ground else "e"


class BasisState(NamedTuple):
    dot: Dot
    n0: int
    n1: int
    n2: int

    def __str__(self):
        return "|{},{},{},{}>".format(Dot(self.dot).symbol, self.n0, self.n1, self.n2)


def max_dimension():
    """Dimension cap for build_space, overridable through TRIPHOTON_MAX_DIM."""

    return int(os.getenv("TRIPHOTON_MAX_DIM", __DEFAULT_MAX_DIM__))


class FockSpace:
    """Truncation bounds of the three modes plus the flat index map."""

    __slots__ = ("trunc0", "trunc1", "trunc2", "shape", "dim")

    def __init__(self, trunc0, trunc1, trunc2):
        shape = (2, trunc0 + 1, trunc1 + 1, trunc2 + 1)
        object.__setattr__(self, "trunc0", trunc0)
        object.__setattr__(self, "trunc1", trunc1)
        object.__setattr__(self, "trunc2", trunc2)
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "dim", int(np.prod(shape)))

    def __setattr__(self, name, value):
        raise AttributeError("FockSpace is immutable")

    def __eq__(self, other):
        return isinstance(other, FockSpace) and self.truncations == other.truncations

    def __hash__(self):
        return hash(self.truncations)

    def __repr__(self):
        return "<FockSpace(trunc=({e.trunc0}, {e.trunc1}, {e.trunc2}), dim={e.dim})>".format(
            e=self
        )

    # the unpickler goes through __setattr__ otherwise
    def __reduce__(self):
        return (FockSpace, self.truncations)

    @property
    def truncations(self):
        return (self.trunc0, self.trunc1, self.trunc2)

    def mode_dim(self, mode):
        return self.shape[mode + 1]

    def contains(self, state):
        dot, n0, n1, n2 = state
        return (
            int(dot) in (0, 1)
            and 0 <= n0 <= self.trunc0
            and 0 <= n1 <= self.trunc1
            and 0 <= n2 <= self.trunc2
        )

    def flatten(self, state):
        """Flat index of a BasisState (or any (dot, n0, n1, n2) tuple)."""

        if not self.contains(state):
            raise SpaceError("{} lies outside {!r}".format(tuple(state), self))

        dot, n0, n1, n2 = state
        return int(np.ravel_multi_index((int(dot), n0, n1, n2), self.shape))

    def unflatten(self, index):
        if not 0 <= index < self.dim:
            raise SpaceError("Index {} outside 0..{}".format(index, self.dim - 1))

        dot, n0, n1, n2 = np.unravel_index(index, self.shape)
        return BasisState(Dot(int(dot)), int(n0), int(n1), int(n2))

    def state(self, spec):
        """Parse 'e,0,0,0' or '|g,1,0,2>' into a BasisState of this space."""

        fields = spec.strip().strip("|>").split(",")
        if len(fields) != 4:
            raise SpaceError("Cannot parse basis state {!r}".format(spec))
        try:
            state = BasisState(Dot.parse(fields[0]), *(int(f) for f in fields[1:]))
        except ValueError as e:
            raise SpaceError("Cannot parse basis state {!r}: {}".format(spec, e))

        if not self.contains(state):
            raise SpaceError("{} lies outside {!r}".format(state, self))
        return state

    def states(self):
        """Iterate over all basis states in flat-index order."""

        for index in range(self.dim):
            yield self.unflatten(index)

    def occupations(self):
        """Integer array (dim, 4) of (dot, n0, n1, n2) for every flat index."""

        return np.stack(np.unravel_index(np.arange(self.dim), self.shape), axis=1)


def build_space(trunc0, trunc1, trunc2):
    """Return the composite space for the given maximum photon numbers.

    dim = 2 (trunc0 + 1) (trunc1 + 1) (trunc2 + 1); the dimension is checked
    against max_dimension() and the superoperator index range (dim**2 must fit
    in a 64-bit index).
    """

    truncs = (trunc0, trunc1, trunc2)
    for mode, trunc in zip(MODES, truncs):
        if isinstance(trunc, bool) or int(trunc) != trunc:
            raise SpaceError("trunc{} must be an integer, got {!r}".format(mode, trunc))
        if trunc < 0:
            raise SpaceError("trunc{} must be >= 0, got {}".format(mode, trunc))

    # python ints, so no overflow while checking
    dim = 2 * (int(trunc0) + 1) * (int(trunc1) + 1) * (int(trunc2) + 1)
    if dim * dim > np.iinfo(np.int64).max:
        raise SpaceError("Dimension {} overflows the superoperator index".format(dim))

    cap = max_dimension()
    if dim > cap:
        raise SpaceError(
            "Dimension {} for truncations {} exceeds the cap of {} "
            "(set TRIPHOTON_MAX_DIM to raise it)".format(dim, truncs, cap)
        )

    return FockSpace(int(trunc0), int(trunc1), int(trunc2))


class OperatorMatrix:
    """Sparse complex matrix on a FockSpace, with a free-text label."""

    __slots__ = ("matrix", "label")

    def __init__(self, matrix, label=""):
        self.matrix = sparse.csr_matrix(matrix, dtype=complex)
        self.label = label

    def __repr__(self):
        return "<OperatorMatrix('{}', shape={}, nnz={})>".format(
            self.label, self.matrix.shape, self.matrix.nnz
        )

    @property
    def shape(self):
        return self.matrix.shape

    @property
    def nnz(self):
        return self.matrix.nnz

    def dag(self):
        return OperatorMatrix(self.matrix.conj().T, "({})†".format(self.label))

    def toarray(self):
        return self.matrix.toarray()

    def diagonal(self):
        return self.matrix.diagonal()

    def element(self, space, bra, ket):
        """<bra|O|ket> for two basis states."""

        return self.matrix[space.flatten(bra), space.flatten(ket)]

    def apply(self, space, state):
        """Column of O for a basis state, i.e. O|state> as a dense vector."""

        return self.matrix[:, space.flatten(state)].toarray().ravel()

    def max_abs(self):
        if self.matrix.nnz == 0:
            return 0.0
        return float(np.abs(self.matrix.data).max())

    def __matmul__(self, other):
        if isinstance(other, OperatorMatrix):
            return OperatorMatrix(
                self.matrix @ other.matrix, "{} {}".format(self.label, other.label)
            )
        return self.matrix @ other

    def __add__(self, other):
        return OperatorMatrix(
            self.matrix + other.matrix, "{} + {}".format(self.label, other.label)
        )

    def __sub__(self, other):
        return OperatorMatrix(
            self.matrix - other.matrix, "{} - {}".format(self.label, other.label)
        )

    def __mul__(self, scalar):
        return OperatorMatrix(self.matrix * scalar, "{}*{}".format(scalar, self.label))

    __rmul__ = __mul__


def _embed(space, factor, position):
    """Kronecker product placing a single-factor matrix at `position`
    (0 = dot, 1..3 = modes 0..2) with identities elsewhere."""

    out = None
    for i, d in enumerate(space.shape):
        m = factor if i == position else sparse.identity(d, dtype=complex, format="csr")
        out = m if out is None else sparse.kron(out, m, format="csr")
    return out


def _lowering_factor(n):
    """Single-mode annihilation matrix on n levels, <k-1|a|k> = sqrt(k)."""

    k = np.arange(1, n)
    return sparse.csr_matrix((np.sqrt(k.astype(float)), (k - 1, k)), shape=(n, n))


def ladder(space, mode, kind="lower"):
    """Photon annihilation ('lower') or creation ('raise') operator of a mode.

    Raising the top level of the truncation gives zero.
    """

    if mode not in MODES:
        raise SpaceError("mode must be one of {}, got {!r}".format(MODES, mode))

    lower = _embed(space, _lowering_factor(space.mode_dim(mode)), mode + 1)
    if kind == "lower":
        return OperatorMatrix(lower, "a{}".format(mode))
    if kind == "raise":
        return OperatorMatrix(lower.conj().T, "a{}†".format(mode))

    raise SpaceError("kind must be 'lower' or 'raise', got {!r}".format(kind))


def dot_lowering(space):
    """Exciton annihilation operator sigma = |g><e| on the dot factor."""

    sigma = sparse.csr_matrix(([1.0], ([Dot.ground], [Dot.excited])), shape=(2, 2))
    return OperatorMatrix(_embed(space, sigma, 0), "σ")


def number_operator(space, mode):
    """Diagonal photon number operator n_mode."""

    occ = space.occupations()[:, mode + 1]
    return OperatorMatrix(sparse.diags(occ.astype(float)), "n{}".format(mode))


def excitation_operator(space):
    """sigma† sigma, the projector onto the excited dot level."""

    occ = space.occupations()[:, 0]
    return OperatorMatrix(sparse.diags(occ.astype(float)), "σ†σ")


def identity(space):
    return OperatorMatrix(sparse.identity(space.dim, dtype=complex), "1")


def basis_projector(space, state, other=None):
    """|state><other| (|state><state| when other is None)."""

    other = state if other is None else other
    i, j = space.flatten(state), space.flatten(other)
    return OperatorMatrix(
        sparse.csr_matrix(([1.0], ([i], [j])), shape=(space.dim, space.dim)),
        "{}<{}|".format(state, str(other)[1:-1]),
    )
