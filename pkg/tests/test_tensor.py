import itertools
import pickle

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tensornorms.exceptions import SizingError, UnsupportedOrderError
from tensornorms.tensor import (Tensor0m, Tensor1m, contract, dumps, flatten_first, flatten_last,
                                frobenius_norm, loads, read_records, slice_block, square, symmetrize)

from oracles import loop_contract, random_partially_symmetric

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def tensors(max_n=3, max_m=3):
    return st.tuples(st.integers(1, 3), st.integers(1, max_n), st.integers(1, max_m)).flatmap(
        lambda s: arrays(float, (s[0],) + (s[1],) * s[2], elements=finite).map(Tensor1m))


# -- construction ----------------------------------------------------------------

def test_construction_symmetrizes_covariant_slots(rng):
    a = rng.standard_normal((2, 3, 3, 3))
    t = Tensor1m(a)
    for p in itertools.permutations((1, 2, 3)):
        assert np.allclose(t.entries, np.transpose(t.entries, (0,) + p), atol=0)
    assert t.partially_symmetric


def test_tensor_is_immutable():
    t = Tensor1m(np.eye(2))
    with pytest.raises(AttributeError):
        t.entries = np.zeros((2, 2))
    with pytest.raises(ValueError):
        t.entries[0, 0] = 5.0


def test_rejects_nonfinite_and_bad_shapes():
    with pytest.raises(ValueError):
        Tensor1m(np.array([[np.nan]]))
    with pytest.raises(SizingError):
        Tensor1m(np.zeros((2, 3, 2)))
    with pytest.raises(UnsupportedOrderError):
        Tensor1m(np.zeros((1,) + (2,) * 5))


def test_pickle_round_trip_keeps_flags(rng):
    t = slice_block(Tensor1m(rng.standard_normal((6, 6, 6))), (0, 3), [(0, 3), (3, 6)])
    back = pickle.loads(pickle.dumps(t))
    assert np.array_equal(back.entries, t.entries)
    assert back.partially_symmetric is False
    c = symmetrize(Tensor0m(rng.standard_normal((3, 3, 3))))
    assert pickle.loads(pickle.dumps(c)).symmetric


# -- contract ------------------------------------------------------------------

def test_contract_identity_matrix():
    assert np.array_equal(contract(Tensor1m(np.eye(3)), [1, 2, 3], 1), [1, 2, 3])


def test_contract_all_ones():
    assert np.array_equal(contract(Tensor1m(np.ones((2, 2, 2))), [1, 1], 2), [4, 4])


def test_contract_matches_loops(rng):
    b = Tensor1m(rng.standard_normal((3, 3, 3)))
    x = rng.standard_normal(3)
    assert np.allclose(contract(b, x, 2), loop_contract(b.entries, x, 2), rtol=1e-13, atol=1e-13)


def test_contract_return_types(rng):
    b = Tensor1m(rng.standard_normal((2, 3, 3, 3)))
    x = rng.standard_normal(3)
    assert isinstance(contract(b, x, 1), Tensor1m)
    assert contract(b, x, 2).shape == (2, 3)
    assert contract(b, x, 3).shape == (2,)


def test_contract_sizing_errors():
    b = Tensor1m(np.zeros((2, 3, 3)))
    with pytest.raises(SizingError):
        contract(b, np.ones(2), 1)
    with pytest.raises(SizingError):
        contract(b, np.ones(3), 3)


@given(tensors(), st.data())
def test_contract_via_flatten_first_agrees_with_loops(t, data):
    x = data.draw(arrays(float, (t.dim_in,), elements=finite))
    kron = x
    for _ in range(t.order - 1):
        kron = np.kron(kron, x)
    via_flat = flatten_first(t) @ kron
    ref = loop_contract(t.entries, x, t.order)
    scale = max(1.0, np.max(np.abs(ref)))
    assert np.allclose(via_flat, ref, rtol=1e-12, atol=1e-12 * scale)


# -- square / symmetrize -------------------------------------------------------------

def test_square_of_matrix_is_gram(rng):
    a = rng.standard_normal((4, 3))
    assert np.allclose(square(Tensor1m(a)).entries, a.T @ a)
    assert not square(Tensor1m(a)).symmetric


def test_square_scalar():
    assert square(Tensor1m(np.full((1, 1, 1), 2.0))).entries.item() == 4.0


@given(tensors(max_m=2), st.data())
def test_square_applied_equals_squared_norm(t, data):
    x = data.draw(arrays(float, (t.dim_in,), elements=finite))
    lhs = square(t).apply(x)
    rhs = float(np.sum(np.asarray(contract(t, x, t.order)) ** 2))
    assert np.isclose(lhs, rhs, rtol=1e-10, atol=1e-10 * max(1.0, rhs))


def test_symmetrize_fixed_point_and_matrix():
    m = np.array([[1.0, 2.0], [4.0, 3.0]])
    assert np.allclose(symmetrize(Tensor0m(m)).entries, (m + m.T) / 2)
    s = symmetrize(Tensor0m(m))
    assert np.array_equal(symmetrize(Tensor0m(s.entries)).entries, s.entries)


def test_symmetrize_order4_square_polynomial(rng):
    b = Tensor1m(rng.standard_normal((3, 3, 3)))
    sq = square(b)
    sym = symmetrize(sq)
    for x in rng.standard_normal((50, 3)):
        assert np.isclose(sq.apply(x), sym.apply(x), rtol=1e-12)


def test_symmetrize_order_limit():
    with pytest.raises(UnsupportedOrderError):
        symmetrize(Tensor0m(np.zeros((1,) * 9)))


@given(st.integers(1, 3), st.integers(1, 4), st.data())
def test_symmetrize_idempotent_and_polynomial_preserving(n, order, data):
    a = data.draw(arrays(float, (n,) * order, elements=finite))
    s1 = symmetrize(Tensor0m(a))
    s2 = symmetrize(Tensor0m(s1.entries))
    assert np.allclose(s1.entries, s2.entries, atol=1e-12)
    x = data.draw(arrays(float, (n,), elements=finite))
    p_in, p_out = Tensor0m(a).apply(x), s1.apply(x)
    assert np.isclose(p_in, p_out, rtol=1e-9, atol=1e-9 * max(1.0, abs(p_in)))


# -- flattenings -----------------------------------------------------------------

def test_flatten_last_bookkeeping():
    e = np.fromfunction(lambda i, j, k: i * 4 + j * 2 + k, (2, 2, 2))
    t = Tensor1m(e, symmetrize=False)
    flat = flatten_last(t)
    assert flat.shape == (4, 2)
    for i, j, k in itertools.product(range(2), repeat=3):
        assert flat[2 * i + j, k] == e[i, j, k]
    assert not np.any(flatten_last(Tensor1m.zeros(2, 2, 2)))


def test_flatten_last_order_check():
    with pytest.raises(UnsupportedOrderError):
        flatten_last(Tensor1m(np.eye(2)))


def test_flatten_last_norm_identity(rng):
    t = Tensor1m(random_partially_symmetric(rng, 3, 3, 2))
    for x in rng.standard_normal((20, 3)):
        x /= np.linalg.norm(x)
        assert np.isclose(np.linalg.norm(flatten_last(t) @ x), np.linalg.norm(contract(t, x, 1)))


def test_flatten_first_bookkeeping(rng):
    a = rng.standard_normal((3, 4))
    assert np.array_equal(flatten_first(Tensor1m(a)), a)
    e = np.arange(8.0).reshape(2, 2, 2)
    flat = flatten_first(Tensor1m(e, symmetrize=False))
    cols = [(0, 0), (0, 1), (1, 0), (1, 1)]
    for c, (j, k) in enumerate(cols):
        assert np.array_equal(flat[:, c], e[:, j, k])
    t = Tensor1m(rng.standard_normal((3, 3, 3)))
    for x in rng.standard_normal((20, 3)):
        assert np.allclose(flatten_first(t) @ np.outer(x, x).ravel(), contract(t, x, 2))


@given(tensors(max_m=2))
def test_flattenings_round_trip(t):
    assert np.array_equal(flatten_first(t).reshape(t.shape), t.entries)
    if t.order == 2:
        assert np.array_equal(flatten_last(t).reshape(t.shape), t.entries)


# -- frobenius / slicing ---------------------------------------------------------

def test_frobenius_norm_values():
    assert np.isclose(frobenius_norm(np.eye(3)), np.sqrt(3))
    assert frobenius_norm(Tensor1m.zeros(2, 2, 2)) == 0.0
    assert np.isclose(frobenius_norm(Tensor1m(np.ones((2, 2, 2)))), np.sqrt(8))


def test_slice_block(rng):
    t = Tensor1m(rng.standard_normal((6, 6, 6)))
    full = slice_block(t, (0, 6), [(0, 6), (0, 6)])
    assert np.array_equal(full.entries, t.entries) and full.partially_symmetric
    vv = slice_block(t, (0, 3), [(3, 6), (3, 6)])
    assert vv.shape == (3, 3, 3) and vv.partially_symmetric
    mixed = slice_block(t, slice(0, 3), [slice(0, 3), slice(3, 6)])
    assert not mixed.partially_symmetric
    for _ in range(10):
        i, j, k = rng.integers(0, 3, size=3)
        assert mixed.entries[i, j, k] == t.entries[i, j, 3 + k]
    with pytest.raises(SizingError):
        slice_block(t, (0, 7), [(0, 3), (0, 3)])
    with pytest.raises(SizingError):
        slice_block(t, (0, 3), [(0, 3)])


# -- text format ------------------------------------------------------------------

@given(tensors())
def test_text_round_trip_bit_exact(t):
    back = loads(dumps(t))
    assert np.array_equal(back.entries, t.entries)
    assert dumps(t).splitlines()[0] == f"tensor1m {t.dim_out} {t.dim_in} {t.order}"


def test_read_records_stream(rng):
    a, b = Tensor1m(rng.standard_normal((2, 2))), Tensor1m(rng.standard_normal((3, 2, 2)))
    recs = read_records(dumps(a) + dumps(b))
    assert len(recs) == 2 and np.array_equal(recs[1].entries, b.entries)
    with pytest.raises(ValueError):
        loads("tensor1m 1 2 1 0.0")
