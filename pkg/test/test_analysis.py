import numpy as np
import pytest

from triphoton.analysis import (
    GridWarning,
    ReducedState,
    displacement_block,
    energy_reach,
    fock_wigner,
    laguerre_displacement_block,
    mode_observables,
    photon_distribution,
    reduce_to_mode,
    reduce_to_mode1,
    sector_leak,
    triplet_weight,
    wigner,
)
from triphoton.fockspace import build_space
from triphoton.integrator import DensityMatrix, initial_state


def pure(space, *specs):
    psi = np.zeros(space.dim, dtype=complex)
    for spec in specs:
        psi[space.flatten(space.state(spec))] = 1
    psi /= np.linalg.norm(psi)
    return DensityMatrix(np.outer(psi, psi.conj()), space=space)


def fock(n, dim=None):
    dim = n + 1 if dim is None else dim
    data = np.zeros((dim, dim))
    data[n, n] = 1
    return ReducedState(data)


def random_density(dim, rng):
    m = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    rho = m @ m.conj().T
    return rho / np.trace(rho)


def test_product_state_reduction():
    space = build_space(1, 3, 1)
    reduced = reduce_to_mode1(pure(space, "g,0,2,0"))
    expected = np.zeros((4, 4))
    expected[2, 2] = 1
    np.testing.assert_array_equal(reduced.data, expected)
    assert reduced.mode == 1


def test_entangled_reduction():
    space = build_space(1, 3, 1)
    reduced = reduce_to_mode1(pure(space, "g,0,0,0", "g,0,3,1"))
    np.testing.assert_allclose(reduced.data, np.diag([0.5, 0, 0, 0.5]), atol=1e-15)


def test_reduction_of_other_modes():
    space = build_space(2, 1, 3)
    rho = pure(space, "e,2,1,3")
    np.testing.assert_array_equal(photon_distribution(reduce_to_mode(rho, 0)), [0, 0, 1])
    np.testing.assert_array_equal(photon_distribution(reduce_to_mode(rho, 2)), [0, 0, 0, 1])

    with pytest.raises(ValueError):
        reduce_to_mode(rho, 3)


def test_reduction_linear_and_trace_preserving():
    space = build_space(1, 2, 2)
    rng = np.random.default_rng(7)

    for _ in range(10):
        a = random_density(space.dim, rng)
        b = random_density(space.dim, rng)
        ra = reduce_to_mode1(a, space).data
        rb = reduce_to_mode1(b, space).data
        mixed = reduce_to_mode1(0.3 * a + 0.7 * b, space).data

        np.testing.assert_allclose(mixed, 0.3 * ra + 0.7 * rb, atol=1e-14)
        assert np.trace(ra) == pytest.approx(1, abs=1e-13)
        np.testing.assert_allclose(ra, ra.conj().T, atol=1e-14)


def test_reduction_keeps_metadata():
    space = build_space(1, 1, 1)
    rho = initial_state(space).replace(time=0.216)
    reduced = reduce_to_mode1(rho)
    assert reduced.time == 0.216
    assert reduced.frame == "rotating"


def test_photon_distribution():
    space = build_space(0, 4, 0)
    p = photon_distribution(reduce_to_mode1(initial_state(space)))
    np.testing.assert_array_equal(p, [1, 0, 0, 0, 0])

    p = photon_distribution(fock(3))
    assert p[3] == 1
    assert triplet_weight(p) == 1
    assert triplet_weight([0.2, 0.5, 0.1, 0.2]) == pytest.approx(0.4)


@pytest.mark.parametrize(
    "spec, expected",
    [("e,0,0,0", (0, 0, 0, 1, 1)), ("g,1,2,3", (1, 2, 3, 0, 1))],
)
def test_mode_observables(spec, expected):
    space = build_space(1, 2, 3)
    obs = mode_observables(pure(space, spec))
    assert tuple(obs[k] for k in ("n0", "n1", "n2", "exc", "purity")) == pytest.approx(expected)


def test_maximally_mixed_purity():
    space = build_space(1, 1, 1)
    rho = DensityMatrix(np.eye(16) / 16, space=space)
    assert mode_observables(rho)["purity"] == pytest.approx(1 / 16)


def test_sector_leak():
    space = build_space(1, 2, 1)
    assert sector_leak(pure(space, "g,0,0,0", "e,0,0,0")) == 0
    # Q = 1
    assert sector_leak(pure(space, "g,0,1,0")) == 1


@pytest.mark.parametrize("n, value", [(0, 1 / np.pi), (1, -1 / np.pi), (3, -1 / np.pi)])
def test_fock_state_origin(n, value):
    w = wigner(fock(n), grid_max=6, grid_n=201)
    assert float(w.sel(x=0, p=0, method="nearest")) == pytest.approx(value, abs=1e-6)


def test_fock_state_integral():
    w = wigner(fock(3), grid_max=6, grid_n=201)
    assert w.attrs["integral"] == pytest.approx(1, abs=5e-3)
    assert not w.attrs["grid_warning"]
    assert w.attrs["method"] == "parity"


@pytest.mark.parametrize("n", [3, 4])
def test_closed_form_agreement(n):
    rng = np.random.default_rng(11 + n)
    w = wigner(fock(n, 8), grid_max=6, grid_n=201)
    xs = w["x"].values

    i = rng.integers(0, xs.size, 50)
    j = rng.integers(0, xs.size, 50)
    expected = fock_wigner(n, xs[i], xs[j])
    np.testing.assert_allclose(w.values[i, j], expected, rtol=0, atol=1e-6)


def test_parity_matches_laguerre():
    rng = np.random.default_rng(12)
    state = ReducedState(random_density(6, rng))

    parity = wigner(state, grid_max=4, grid_n=21)
    laguerre = wigner(state, grid_max=4, grid_n=21, method="laguerre")
    np.testing.assert_allclose(parity.values, laguerre.values, rtol=0, atol=1e-10)

    with pytest.raises(ValueError):
        wigner(state, method="husimi")


def test_random_state_bounds():
    rng = np.random.default_rng(13)
    w = wigner(ReducedState(random_density(10, rng)), grid_max=6, grid_n=61)

    assert w.attrs["imag_residue"] < 1e-10
    assert np.abs(w.values).max() <= 1 / np.pi + 1e-9


def test_rotational_symmetry():
    p = np.array([0.5, 0.2, 0.0, 0.3])
    w = wigner(ReducedState(np.diag(p)), grid_max=4, grid_n=81)
    values = w.values
    xs = w["x"].values

    # off-axis points on 3-4-5 triangles share a radius with an on-axis point
    c = 40
    for k in range(1, 9):
        ring = [
            values[c + 5 * k, c],
            values[c + 3 * k, c + 4 * k],
            values[c - 4 * k, c + 3 * k],
            values[c - 3 * k, c - 4 * k],
            values[c + 4 * k, c - 3 * k],
        ]
        assert max(ring) - min(ring) < 1e-8

    rng = np.random.default_rng(15)
    i = rng.integers(0, xs.size, 50)
    j = rng.integers(0, xs.size, 50)
    expected = sum(p[n] * fock_wigner(n, xs[i], xs[j]) for n in range(4))
    np.testing.assert_allclose(values[i, j], expected, rtol=0, atol=1e-6)


def test_phase_rotation_turns_the_grid():
    rng = np.random.default_rng(16)
    data = random_density(5, rng)
    n = np.arange(5)

    # exp(-i n pi/2) rho exp(i n pi/2) rotates W by a quarter turn: W'(x, p) = W(-p, x)
    u = np.exp(-0.5j * np.pi * n)
    rotated = u[:, None] * data * u.conj()[None, :]

    w = wigner(ReducedState(data), grid_max=4, grid_n=41)
    wr = wigner(ReducedState(rotated), grid_max=4, grid_n=41)
    np.testing.assert_allclose(wr.values, w.values[::-1, :].T, rtol=0, atol=1e-9)
    assert np.abs(wr.values - w.values).max() > 1e-3


def test_grid_warning():
    reach = energy_reach(3)
    assert reach == 2
    with pytest.warns(GridWarning):
        w = wigner(fock(3), grid_max=3, grid_n=11)
    assert w.attrs["grid_warning"]
    assert w.attrs["tail_weight"] == 1


def test_parallel_rows_are_identical():
    rng = np.random.default_rng(14)
    state = ReducedState(random_density(5, rng), time=0.2)
    serial = wigner(state, grid_max=3, grid_n=15)
    parallel = wigner(state, grid_max=3, grid_n=15, n_jobs=2)
    np.testing.assert_allclose(serial.values, parallel.values, rtol=0, atol=1e-14)
    assert parallel.attrs["time"] == 0.2


@pytest.mark.parametrize("beta", [0.3, 1.2 - 0.4j, -2.5j, 3.0 + 2.0j])
def test_displacement_blocks(beta):
    dim = 6
    np.testing.assert_allclose(
        displacement_block(beta, dim), laguerre_displacement_block(beta, dim), rtol=0, atol=1e-12
    )


def test_displacement_of_vacuum():
    beta = 0.7 + 0.2j
    column = displacement_block(beta, 5)[:, 0]
    n = np.arange(5)
    factorial = np.array([1, 1, 2, 6, 24])
    coherent = np.exp(-abs(beta) ** 2 / 2) * beta**n / np.sqrt(factorial)
    np.testing.assert_allclose(column, coherent, rtol=0, atol=1e-13)
