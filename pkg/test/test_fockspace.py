import numpy as np
import pytest

from triphoton.fockspace import (
    BasisState,
    Dot,
    SpaceError,
    basis_projector,
    build_space,
    dot_lowering,
    excitation_operator,
    identity,
    ladder,
    number_operator,
)


def ket(space, spec):
    v = np.zeros(space.dim, dtype=complex)
    v[space.flatten(space.state(spec))] = 1
    return v


@pytest.mark.parametrize(
    "truncs, dim", [((0, 0, 0), 2), ((3, 9, 4), 400), ((1, 1, 1), 16), ((2, 0, 5), 36)]
)
def test_dimension(truncs, dim):
    space = build_space(*truncs)
    assert space.dim == dim
    assert space.shape == (2,) + tuple(t + 1 for t in truncs)


def test_negative_truncation():
    with pytest.raises(SpaceError, match="trunc1"):
        build_space(1, -1, 0)


def test_non_integer_truncation():
    with pytest.raises(SpaceError, match="integer"):
        build_space(1.5, 1, 1)


def test_dimension_cap(monkeypatch):
    monkeypatch.setenv("TRIPHOTON_MAX_DIM", "100")
    with pytest.raises(SpaceError, match="TRIPHOTON_MAX_DIM"):
        build_space(3, 9, 4)


def test_index_overflow():
    with pytest.raises(SpaceError, match="overflow"):
        build_space(10**6, 10**6, 10**6)


def test_index_ordering():
    space = build_space(1, 2, 3)
    # n2 fastest, dot slowest
    assert space.flatten((0, 0, 0, 1)) == 1
    assert space.flatten((0, 0, 1, 0)) == 4
    assert space.flatten((1, 0, 0, 0)) == space.dim // 2
    assert space.unflatten(space.dim - 1) == BasisState(Dot.excited, 1, 2, 3)


def test_flatten_bijection():
    space = build_space(1, 2, 1)
    states = list(space.states())
    assert len(set(states)) == space.dim
    for index, state in enumerate(states):
        assert space.flatten(state) == index
        assert space.unflatten(index) == state

    occ = space.occupations()
    assert occ.shape == (space.dim, 4)
    assert tuple(occ[5]) == tuple(states[5])


def test_state_parsing():
    space = build_space(1, 2, 2)
    assert space.state("|g,1,0,2>") == BasisState(Dot.ground, 1, 0, 2)
    assert space.state("e, 0, 2, 0") == BasisState(Dot.excited, 0, 2, 0)
    assert str(space.state("e,0,2,0")) == "|e,0,2,0>"

    with pytest.raises(SpaceError):
        space.state("x,0,0,0")
    with pytest.raises(SpaceError, match="outside"):
        space.state("g,2,0,0")


def test_space_is_immutable():
    space = build_space(1, 1, 1)
    with pytest.raises(AttributeError):
        space.trunc0 = 4
    assert space == build_space(1, 1, 1)
    assert hash(space) == hash(build_space(1, 1, 1))


def test_lowering_mode1():
    space = build_space(1, 3, 1)
    a1 = ladder(space, 1)

    np.testing.assert_array_equal(a1.apply(space, space.state("g,0,1,0")), ket(space, "g,0,0,0"))
    np.testing.assert_allclose(
        a1.apply(space, space.state("g,0,3,0")), np.sqrt(3) * ket(space, "g,0,2,0"), rtol=0, atol=0
    )
    assert a1.element(space, space.state("g,0,2,0"), space.state("g,0,3,0")) == np.sqrt(3)


def test_raise_at_truncation_edge():
    space = build_space(2, 1, 1)
    a0dag = ladder(space, 0, "raise")
    assert not a0dag.apply(space, space.state("g,2,0,0")).any()
    assert a0dag.element(space, space.state("g,2,0,0"), space.state("g,1,0,0")) == np.sqrt(2)


def test_raise_is_adjoint():
    space = build_space(1, 2, 2)
    for mode in (0, 1, 2):
        lower = ladder(space, mode).toarray()
        upper = ladder(space, mode, "raise").toarray()
        np.testing.assert_array_equal(upper, lower.conj().T)


def test_invalid_ladder_arguments():
    space = build_space(1, 1, 1)
    with pytest.raises(SpaceError):
        ladder(space, 3)
    with pytest.raises(SpaceError):
        ladder(space, 0, "up")


def test_ladder_sparsity():
    space = build_space(2, 3, 2)
    occ = space.occupations()
    for mode in (0, 1, 2):
        m = ladder(space, mode).matrix.tocsc()
        per_column = np.diff(m.indptr)
        # one entry per column, except where the mode is empty
        np.testing.assert_array_equal(per_column, (occ[:, mode + 1] > 0).astype(int))


def test_commutator_on_interior_states():
    space = build_space(2, 3, 2)
    occ = space.occupations()
    for mode in (0, 1, 2):
        a = ladder(space, mode).toarray()
        comm = a @ a.conj().T - a.conj().T @ a
        interior = occ[:, mode + 1] < space.truncations[mode]
        np.testing.assert_allclose(comm[np.ix_(interior, interior)], np.eye(interior.sum()), atol=1e-14)


def test_dot_lowering():
    space = build_space(1, 2, 1)
    sigma = dot_lowering(space)

    np.testing.assert_array_equal(sigma.apply(space, space.state("e,1,2,0")), ket(space, "g,1,2,0"))
    assert not sigma.apply(space, space.state("g,1,2,0")).any()

    exc = sigma.dag() @ sigma
    np.testing.assert_array_equal(exc.apply(space, space.state("e,0,0,0")), ket(space, "e,0,0,0"))
    np.testing.assert_array_equal(exc.toarray(), excitation_operator(space).toarray())


def test_number_operator():
    space = build_space(2, 2, 2)
    for mode in (0, 1, 2):
        a = ladder(space, mode)
        np.testing.assert_allclose(
            (a.dag() @ a).toarray(), number_operator(space, mode).toarray(), atol=1e-14
        )


def test_projector_and_identity():
    space = build_space(1, 1, 1)
    e = space.state("e,0,0,0")
    g = space.state("g,1,0,0")

    p = basis_projector(space, e)
    assert p.nnz == 1
    assert p.element(space, e, e) == 1

    flip = basis_projector(space, e, g)
    np.testing.assert_array_equal(flip.apply(space, g), ket(space, "e,0,0,0"))

    np.testing.assert_array_equal(identity(space).toarray(), np.eye(space.dim))
