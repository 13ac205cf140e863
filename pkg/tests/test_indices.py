import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tensornorms import scenarios
from tensornorms.dynamics import DynamicsModel, SttStack, cauchy_green, propagate_stt, propagate_sweep
from tensornorms.indices import (QUOTIENT_KINDS, beth_bound, beth_quotient, demon, demon_quotient,
                                 nu_quotient, nu_sampled, quotient_max, sphere_ascent, temon)
from tensornorms.tensor import symmetrize

from oracles import apply_rows, random_partially_symmetric, sphere


def stylized(primed):
    phi = np.zeros((2, 2))
    phi[0, 0] = 1.0
    psi = np.zeros((2, 2, 2))
    psi[0 if primed else 1, 0, 0] = 1.0
    return SttStack.from_tensors(phi, psi, np.zeros((2, 2, 2, 2)))


def random_system(rng, n=3):
    phi = np.eye(n) + 0.3 * rng.standard_normal((n, n))
    return SttStack.from_tensors(phi, random_partially_symmetric(rng, n, n, 2),
                                 random_partially_symmetric(rng, n, n, 3))


def rotated(stack, q):
    def rot(t):
        out = np.tensordot(q, t, axes=([1], [0]))
        for axis in range(1, t.ndim):
            out = np.moveaxis(np.tensordot(out, q, axes=([axis], [1])), -1, axis)
        return out
    return SttStack.from_tensors(rot(stack.phi), rot(stack.psi2.entries))


# -- stylized systems -----------------------------------------------------------------

@pytest.mark.parametrize("primed", [False, True])
def test_stylized_demon_and_beth(primed):
    st_ = stylized(primed)
    assert abs(demon(st_, 2).value - 1.0) <= 1e-10
    for r in (0.5, 1.0, 2.0):
        assert abs(beth_bound(st_, 2, r).value - r / 2) <= 1e-10


@pytest.mark.parametrize("r", [0.5, 1.0, 2.0])
def test_stylized_temon(r):
    assert abs(temon(stylized(False), 3, r).value) <= 1e-10
    # Quadratic growth term of |dx_f|^2 is the same for both systems.
    assert abs(temon(stylized(False), 4, r).value - r * r / 4) <= 1e-8
    assert abs(temon(stylized(True), 4, r).value - r * r / 4) <= 1e-8


@pytest.mark.parametrize("r", [0.5, 1.0, 2.0])
def test_stylized_primed_third_order_temon(r):
    # The Cauchy-Green coefficient (Phi x).(Psi x^2) carries weight one, so this is R.
    assert abs(temon(stylized(True), 3, r).value - r) <= 1e-8


# -- random systems against sampling -------------------------------------------------------

def test_demon_against_sphere_sampling(rng):
    for m in (2, 3):
        st_ = random_system(rng)
        res = demon(st_, m)
        u = sphere(rng, 100_000, 3)
        q = (np.linalg.norm(apply_rows(st_.stt(m).entries, u), axis=1)
             / np.linalg.norm(u @ st_.phi.T, axis=1))
        assert q.max() <= res.value * (1 + 1e-9)
        assert res.value <= q.max() * 1.01
        assert np.isclose(np.linalg.norm(res.direction), 1.0)


def test_temon_against_sphere_sampling(rng):
    for m in (3, 4):
        st_ = random_system(rng)
        res = temon(st_, m, 1.0)
        c_m = symmetrize(cauchy_green(st_, m)).entries
        c_2 = cauchy_green(st_, 2).entries
        u = sphere(rng, 100_000, 3)
        top = apply_rows(c_m[None], u)[:, 0]
        q = np.abs(top) / np.einsum("si,ij,sj->s", u, c_2, u)
        assert q.max() <= res.value * (1 + 1e-9)
        assert res.value <= q.max() * 1.02


def test_beth_bound_dominates_ball_samples(rng):
    full = random_system(rng)
    st_ = SttStack.from_tensors(full.phi, full.psi2)
    for r in (0.1, 1.0):
        bound = beth_bound(st_, 2, r).value
        u = sphere(rng, 10_000, 3) * rng.uniform(0, 1, (10_000, 1)) ** (1 / 3)
        assert np.all(beth_quotient(st_, r * u) <= bound * (1 + 1e-12))
    assert beth_bound(st_, 2, 0.0).value == 0.0
    assert np.isclose(beth_bound(st_, 2, 3.0).value, 1.5 * demon(st_, 2).value, rtol=1e-12)


def test_beth_third_order_terms(rng):
    st_ = random_system(rng)
    r = 0.7
    expected = r / 2 * demon(st_, 2).value + r**2 / 6 * demon(st_, 3).value
    assert np.isclose(beth_bound(st_, 3, r).value, expected, rtol=1e-12)


def test_radius_scaling_and_direction(rng):
    st_ = random_system(rng)
    a, b = temon(st_, 3, 1.0), temon(st_, 3, 2.5)
    assert np.isclose(b.value, 2.5 * a.value, rtol=1e-12)
    assert np.array_equal(a.direction, b.direction)
    a4, b4 = temon(st_, 4, 1.0), temon(st_, 4, 2.5)
    assert np.isclose(b4.value, 6.25 * a4.value, rtol=1e-12)


# -- linear systems and zero span --------------------------------------------------------

def test_linear_system_gives_zero(rng):
    st_ = SttStack.from_tensors(np.eye(3) + 0.3 * rng.standard_normal((3, 3)),
                                np.zeros((3, 3, 3)), np.zeros((3, 3, 3, 3)))
    assert demon(st_, 2).value == 0.0 and demon(st_, 3).value == 0.0
    assert temon(st_, 3, 1.0).value == 0.0 and temon(st_, 4, 1.0).value == 0.0
    for kind in QUOTIENT_KINDS:
        assert nu_quotient(st_, kind).value == 0.0


def test_zero_span_all_indices_zero(nrho):
    st_ = propagate_stt(nrho.model, nrho.x0, 0.0, 0.0, order=3)
    for kind in QUOTIENT_KINDS:
        assert nu_quotient(st_, kind).value == 0.0
    assert demon(st_, 2).value == 0.0 and temon(st_, 3, 1.0).value == 0.0


def test_free_motion_sampled_index_vanishes():
    res = nu_sampled(DynamicsModel.free(), np.array([1.0, 0, 0, 0, 1, 0]), 0.0, 1.0, 1e-3, 50, 0)
    assert res.value < 1e-14


# -- quotient indices -------------------------------------------------------------------

@settings(max_examples=15)
@given(st.integers(0, 2**31 - 1))
def test_rotation_invariance(seed):
    rng = np.random.default_rng(seed)
    base = random_system(rng, 4)
    q = np.linalg.qr(rng.standard_normal((4, 4)))[0]
    rot = rotated(base, q)
    for kind in ("nu_2", "nu_frob2", "nu_star", "nu_2_upper"):
        a, b = nu_quotient(base, kind).value, nu_quotient(rot, kind).value
        assert abs(a - b) <= 1e-9 * max(a, 1.0)


def test_upper_index_dominates_on_reference_orbits():
    for name in ("circular", "nrho"):
        sc = scenarios.get(name)
        for st_ in propagate_sweep(sc.model, sc.x0, sc.t0, sc.sweep_times()[::10], order=2):
            assert nu_quotient(st_, "nu_2_upper").value >= nu_quotient(st_, "nu_2").value * (1 - 1e-12)


def test_nrho_grows_faster_than_circular():
    vals = {}
    for name in ("circular", "nrho"):
        sc = scenarios.get(name)
        st_ = propagate_stt(sc.model, sc.x0, sc.t0, sc.t0 + 0.5 * sc.period, order=2)
        vals[name] = nu_quotient(st_, "nu_2").value
    assert vals["nrho"] >= 10 * vals["circular"]


def test_sampled_index_small_radius_limit(nrho, nrho_stack):
    st1 = propagate_stt(nrho.model, nrho.x0, nrho.t0, nrho.tf, order=2)
    r = 1e-6
    res = nu_sampled(nrho.model, nrho.x0, nrho.t0, nrho.tf, r, 5000, seed=3)
    star = nu_quotient(st1, "nu_star").value
    assert abs(res.value / r - star) <= 0.05 * star
    assert res.value / r <= star * (1 + 1e-3)
    assert res.n_failed == 0


def test_sampled_index_deterministic(nrho):
    a = nu_sampled(nrho.model, nrho.x0, nrho.t0, nrho.tf, 1e-3, 1, seed=11)
    b = nu_sampled(nrho.model, nrho.x0, nrho.t0, nrho.tf, 1e-3, 1, seed=11)
    assert a.value == b.value and np.array_equal(a.direction, b.direction)


def test_quotient_kind_errors(rng):
    with pytest.raises(ValueError):
        nu_quotient(random_system(rng), "nu_magic")
    with pytest.raises(ValueError):
        demon(random_system(rng), 4)
    with pytest.raises(ValueError):
        temon(random_system(rng), 2, 1.0)


# -- ascent helpers ------------------------------------------------------------------------

def test_sphere_ascent_finds_rayleigh_max(rng):
    a = rng.standard_normal((4, 4))
    a = a + a.T

    def fun(x):
        return float(x @ a @ x), 2 * a @ x

    val, x = sphere_ascent(fun, rng.standard_normal(4))
    assert np.isclose(val, np.linalg.eigvalsh(a)[-1], rtol=1e-9)
    val2, _ = quotient_max(fun, rng.standard_normal(4))
    assert np.isclose(val2, np.linalg.eigvalsh(a)[-1], rtol=1e-9)


def test_demon_quotient_gradient(rng):
    st_ = random_system(rng)
    fun = demon_quotient(st_, 2)
    x = rng.standard_normal(3)
    _, g = fun(x)
    h = 1e-6
    fd = np.array([(fun(x + h * e)[0] - fun(x - h * e)[0]) / (2 * h) for e in np.eye(3)])
    assert np.allclose(g, fd, rtol=1e-6, atol=1e-8)
