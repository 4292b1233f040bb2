"""oracle.py

Element-wise equations of motion for rho_{a,i,j,k;b,l,m,n} = <a,i,j,k|rho|b,l,m,n>,
written out one term at a time. Used as an independent check of the
operator-built Liouvillian in dynamics; slow and dense.

Each term reads its source block of rho with an index shift and multiplies
by a coefficient evaluated on the index grids (i, j, k; l, m, n). Shifts that
leave the truncation read zero. The gg, ee and ge blocks are evaluated
directly; the eg block is the hermitian conjugate of the ge equation applied
to rho†.
"""

from collections import OrderedDict
from typing import NamedTuple

import numpy as np

from .dynamics import build_liouvillian, free_energies, interaction_operators
from .fockspace import Dot, dot_lowering, ladder, number_operator

VARIANTS = ("conventional", "literal")

_PAD = 2


class FrameError(ValueError):
    pass


class ElementIndex(NamedTuple):
    a: Dot
    i: int
    j: int
    k: int
    b: Dot
    l: int
    m: int
    n: int

    def __str__(self):
        return "rho[{},{},{},{};{},{},{},{}]".format(
            Dot(self.a).symbol, self.i, self.j, self.k, Dot(self.b).symbol, self.l, self.m, self.n
        )

    @classmethod
    def from_flat(cls, space, row, col):
        return cls(*space.unflatten(row), *space.unflatten(col))


class _Grid:
    """Index arrays i, j, k, l, m, n over one 6-d block."""

    def __init__(self, space):
        dims = space.shape[1:] * 2
        self.i, self.j, self.k, self.l, self.m, self.n = np.meshgrid(
            *(np.arange(d, dtype=float) for d in dims), indexing="ij"
        )


def _shifted(block, shift):
    """S[i, j, k, l, m, n] = block[i + di, ..., n + dn], zero outside."""

    padded = np.pad(block, _PAD)
    index = tuple(slice(_PAD + d, _PAD + d + size) for d, size in zip(shift, block.shape))
    return padded[index]


def _blocks(rho, space):
    full = np.asarray(rho, dtype=complex).reshape(space.shape + space.shape)
    return {
        "gg": full[0, :, :, :, 0],
        "ee": full[1, :, :, :, 1],
        "ge": full[0, :, :, :, 1],
        "eg": full[1, :, :, :, 0],
    }


def _spdc_terms(block, variant):
    """The eight zeta and xi terms shared by the gg, ee and ge equations.

    Entries are (tag suffix, source block, shift, coefficient(grid, config)).
    """

    root = np.emath.sqrt if variant == "literal" else np.sqrt
    if variant == "literal":
        ket2 = lambda x, c: 1j * c.zeta_mev * root((x.l - 1) * x.m * x.n)
    else:
        ket2 = lambda x, c: 1j * c.zeta_mev * np.sqrt((x.l + 1) * x.m * x.n)

    return [
        ("zeta ket 1", block, (0, 0, 0, -1, 1, 1),
         lambda x, c: 1j * c.zeta_mev * np.sqrt(x.l * (x.m + 1) * (x.n + 1))),
        ("zeta ket 2", block, (0, 0, 0, 1, -1, -1), ket2),
        ("zeta bra 1", block, (1, -1, -1, 0, 0, 0),
         lambda x, c: -1j * c.zeta_mev * np.sqrt((x.i + 1) * x.j * x.k)),
        ("zeta bra 2", block, (-1, 1, 1, 0, 0, 0),
         lambda x, c: -1j * c.zeta_mev * np.sqrt(x.i * (x.j + 1) * (x.k + 1))),
        ("xi ket 1", block, (0, 0, 0, 0, -2, 1),
         lambda x, c: 1j * c.xi_mev * np.sqrt(x.m * (x.m - 1) * (x.n + 1))),
        ("xi ket 2", block, (0, 0, 0, 0, 2, -1),
         lambda x, c: 1j * c.xi_mev * np.sqrt((x.m + 1) * (x.m + 2) * x.n)),
        ("xi bra 1", block, (0, 2, -1, 0, 0, 0),
         lambda x, c: -1j * c.xi_mev * np.sqrt((x.j + 1) * (x.j + 2) * x.k)),
        ("xi bra 2", block, (0, -2, 1, 0, 0, 0),
         lambda x, c: -1j * c.xi_mev * np.sqrt(x.j * (x.j - 1) * (x.k + 1))),
    ]


def _phase(x, c):
    return 1j * c.omega0_mev * ((x.l - x.i) + (x.m - x.j) / 3.0 + 2.0 * (x.n - x.k) / 3.0)


def _loss(x, c):
    return c.kappa_mev * np.sqrt((x.i + 1) * (x.l + 1))


def _equations(variant):
    """Ordered terms of the gg, ee and ge equations."""

    gg = [
        ("diagonal", "gg", (0,) * 6,
         lambda x, c: _phase(x, c) - c.kappa_mev * (x.l + x.i) / 2 - c.pump_mev),
        ("g ket", "ge", (0, 0, 0, -1, 0, 0), lambda x, c: 1j * c.g_mev * np.sqrt(x.l)),
        ("g bra", "eg", (-1, 0, 0, 0, 0, 0), lambda x, c: -1j * c.g_mev * np.sqrt(x.i)),
        ("loss", "gg", (1, 0, 0, 1, 0, 0), _loss),
    ] + _spdc_terms("gg", variant)

    ee = [
        ("diagonal", "ee", (0,) * 6,
         lambda x, c: _phase(x, c) - c.kappa_mev * (x.l + x.i) / 2),
        ("pump feed", "gg", (0,) * 6, lambda x, c: c.pump_mev + 0 * x.i),
        ("g ket", "eg", (0, 0, 0, 1, 0, 0), lambda x, c: 1j * c.g_mev * np.sqrt(x.l + 1)),
        ("g bra", "ge", (1, 0, 0, 0, 0, 0), lambda x, c: -1j * c.g_mev * np.sqrt(x.i + 1)),
        ("loss", "ee", (1, 0, 0, 1, 0, 0), _loss),
    ] + _spdc_terms("ee", variant)

    ge = [
        ("diagonal", "ge", (0,) * 6,
         lambda x, c: _phase(x, c) + 1j * c.omega_qd_mev - c.kappa_mev * (x.l + x.i) / 2 - c.pump_mev / 2),
        ("g ket", "gg", (0, 0, 0, 1, 0, 0), lambda x, c: 1j * c.g_mev * np.sqrt(x.l + 1)),
        ("g bra", "ee", (-1, 0, 0, 0, 0, 0), lambda x, c: -1j * c.g_mev * np.sqrt(x.i)),
        ("loss", "ge", (1, 0, 0, 1, 0, 0), _loss),
    ] + _spdc_terms("ge", variant)

    return {"gg": gg, "ee": ee, "ge": ge}


def _check(config, variant):
    if config.frame != "lab":
        raise FrameError(
            "The element-wise equations carry lab-frame phases; got frame={!r}".format(config.frame)
        )
    if variant not in VARIANTS:
        raise ValueError("variant must be one of {}, got {!r}".format(VARIANTS, variant))


def _block_terms(rho, config, space, variant):
    """OrderedDict '<block>.<position> <name>' -> 6-d contribution of that term."""

    blocks = _blocks(rho, space)
    grid = _Grid(space)
    out = OrderedDict()
    for target, terms in _equations(variant).items():
        for position, (name, source, shift, coefficient) in enumerate(terms, start=1):
            tag = "{}.{} {}".format(target, position, name)
            out[tag] = coefficient(grid, config) * _shifted(blocks[source], shift)
    return out


def _embed(space, target, block):
    """Place a 6-d block contribution into a dim x dim matrix."""

    full = np.zeros(space.shape + space.shape, dtype=complex)
    a, b = {"gg": (0, 0), "ee": (1, 1), "ge": (0, 1), "eg": (1, 0)}[target]
    full[a, :, :, :, b] = block
    return full.reshape(space.dim, space.dim)


def elementwise_terms(rho, config, space, variant="conventional"):
    """Every term as a dim x dim contribution, keyed by its tag.

    Tags name the target block, the position of the term in its
    equation and the process, e.g. 'gg.6 zeta ket 2'. The eg tags are the
    conjugates of the ge terms evaluated on rho†.
    """

    _check(config, variant)
    rho = np.asarray(rho, dtype=complex)

    out = OrderedDict()
    for tag, block in _block_terms(rho, config, space, variant).items():
        out[tag] = _embed(space, tag[:2], block)

    for tag, block in _block_terms(rho.conj().T, config, space, variant).items():
        if tag.startswith("ge."):
            out["eg" + tag[2:]] = _embed(space, "ge", block).conj().T

    return out


def elementwise_derivative(rho, config, space, variant="conventional"):
    """d rho/dt assembled from the element-wise equations (lab frame only)."""

    return sum(elementwise_terms(rho, config, space, variant).values())


def _operator_terms(space, config):
    """name -> f(rho), the operator expression each term expands."""

    h0 = np.diag(free_energies(space, config, frame="lab")).astype(complex)
    sigma = dot_lowering(space).toarray()
    a0 = ladder(space, 0).toarray()
    n0 = number_operator(space, 0).toarray()
    proj_g = sigma @ sigma.conj().T
    jc, x, y = (op.toarray() for op in interaction_operators(space))
    hg = config.g_mev * (jc + jc.conj().T)
    xd, yd = x.conj().T, y.conj().T
    c = config

    return {
        "diagonal": lambda r: 1j * (r @ h0 - h0 @ r)
        - 0.5 * c.kappa_mev * (n0 @ r + r @ n0)
        - 0.5 * c.pump_mev * (proj_g @ r + r @ proj_g),
        "pump feed": lambda r: c.pump_mev * sigma.conj().T @ r @ sigma,
        "g ket": lambda r: 1j * r @ hg,
        "g bra": lambda r: -1j * hg @ r,
        "loss": lambda r: c.kappa_mev * a0 @ r @ a0.conj().T,
        "zeta ket 1": lambda r: 1j * c.zeta_mev * r @ x,
        "zeta ket 2": lambda r: 1j * c.zeta_mev * r @ xd,
        "zeta bra 1": lambda r: -1j * c.zeta_mev * x @ r,
        "zeta bra 2": lambda r: -1j * c.zeta_mev * xd @ r,
        "xi ket 1": lambda r: 1j * c.xi_mev * r @ yd,
        "xi ket 2": lambda r: 1j * c.xi_mev * r @ y,
        "xi bra 1": lambda r: -1j * c.xi_mev * yd @ r,
        "xi bra 2": lambda r: -1j * c.xi_mev * y @ r,
    }


def _block_mask(space, target):
    mask = np.zeros(space.shape + space.shape, dtype=bool)
    a, b = {"gg": (0, 0), "ee": (1, 1), "ge": (0, 1), "eg": (1, 0)}[target]
    mask[a, :, :, :, b] = True
    return mask.reshape(space.dim, space.dim)


def localize(rho, config, space, variant="conventional", tol=1e-12):
    """Terms that disagree with their operator-level counterpart.

    Returns a list of (tag, max_abs_difference, ElementIndex) for every term
    whose contribution differs by more than tol, with the element where the
    difference is largest.
    """

    rho = np.asarray(rho, dtype=complex)
    operators = _operator_terms(space, config)
    found = []

    for tag, contribution in elementwise_terms(rho, config, space, variant).items():
        target, name = tag[:2], tag.split(" ", 1)[1]
        f = operators[name]
        expected = f(rho.conj().T).conj().T if target == "eg" else f(rho)
        expected = np.where(_block_mask(space, target), expected, 0)

        diff = np.abs(contribution - expected)
        worst = float(diff.max())
        if worst > tol:
            row, col = np.unravel_index(np.argmax(diff), diff.shape)
            found.append((tag, worst, ElementIndex.from_flat(space, int(row), int(col))))

    return found


def random_hermitian(dim, rng=None):
    """Random unit-trace positive Hermitian matrix."""

    rng = np.random.default_rng(rng)
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    h = a @ a.conj().T
    return h / np.trace(h).real


def compare_variants(space, config, tol=1e-12):
    """Sweep every single-element rho = |A><B| through both variants.

    Returns {variant: {'max_abs_difference', 'terms'}} where the difference
    is against the operator-built Liouvillian and 'terms' lists the
    terms localized as disagreeing anywhere in the sweep.
    """

    liouvillian = build_liouvillian(space, config)
    report = {}

    for variant in VARIANTS:
        worst = 0.0
        tags = set()
        for flat in range(space.dim**2):
            rho = np.zeros(space.dim**2, dtype=complex)
            rho[flat] = 1.0
            rho = rho.reshape(space.dim, space.dim)

            diff = np.abs(elementwise_derivative(rho, config, space, variant) - liouvillian(rho)).max()
            worst = max(worst, float(diff))
            if diff > tol:
                tags.update(tag for tag, _, _ in localize(rho, config, space, variant, tol))

        report[variant] = {"max_abs_difference": worst, "terms": sorted(tags)}

    return report
