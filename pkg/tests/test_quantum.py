import numpy as np
import pytest
from hypothesis import given, strategies as st

from qresource import quantum as q
from qresource.linalg import ValidationError, partial_trace


def test_kraus_and_choi_agree(rng):
    ks = [np.sqrt(0.3) * np.eye(2), np.sqrt(0.7) * np.array([[0, 1], [1, 0]])]
    ch = q.channel_from_kraus(ks)
    rho = q.random_state(2, rng)
    expect = sum(k @ rho @ k.conj().T for k in ks)
    assert np.allclose(q.apply(ch, rho), expect, atol=1e-14)


def test_depolarizing_examples():
    assert np.allclose(q.depolarizing_channel(2, 0.0).choi, np.eye(4) / 4)
    out = q.apply(q.depolarizing_channel(2, 0.5), np.diag([1.0, 0.0]))
    assert np.allclose(out, np.diag([0.75, 0.25]))


@given(st.integers(0, 10_000))
def test_random_channel_is_cptp(seed):
    rng = np.random.default_rng(seed)
    ch = q.random_channel(2, 3, rng)
    assert np.min(np.linalg.eigvalsh(ch.choi)) > -1e-12
    assert np.allclose(partial_trace(ch.choi, [2, 3], [0]), np.eye(2) / 2)
    rho = q.random_state(2, rng)
    assert np.trace(q.apply(ch, rho)).real == pytest.approx(1.0)


@given(st.integers(0, 10_000))
def test_heisenberg_duality(seed):
    rng = np.random.default_rng(seed)
    ch = q.random_channel(3, 2, rng)
    rho, e = q.random_state(3, rng), q.random_hermitian(2, rng)
    lhs = np.vdot(e, q.apply(ch, rho))
    rhs = np.vdot(q.heisenberg_apply(ch, e), rho)
    assert abs(lhs - rhs) < 1e-12


@given(st.integers(0, 10_000))
def test_compose_matches_sequential(seed):
    rng = np.random.default_rng(seed)
    a, b = q.random_channel(2, 3, rng), q.random_channel(3, 2, rng)
    rho = q.random_state(2, rng)
    assert np.allclose(q.apply(q.compose(b, a), rho), q.apply(b, q.apply(a, rho)))


def test_named_states():
    assert np.allclose(q.plus_state(2), np.full((2, 2), 0.5))
    b = q.bell_state(2)
    assert np.allclose(partial_trace(b, [2, 2], [0]), np.eye(2) / 2)
    tmsv = q.truncated_cv_state("two_mode_squeezed", 3, 0.5)
    lam = np.linalg.eigvalsh(partial_trace(tmsv, [3, 3], [0]))[::-1]
    expect = np.array([1, 0.25, 0.0625]) / 1.3125
    assert np.allclose(lam, expect)


def test_povm_validation(rng):
    q.check_povm(q.random_povm(3, 4, rng))
    with pytest.raises(ValidationError):
        q.check_povm([np.eye(2) / 2])
    with pytest.raises(ValidationError):
        q.density_matrix(np.diag([1.5, -0.5]))
    with pytest.raises(ValidationError):
        q.ChoiChannel(2, 2, np.eye(4) / 2)


def test_apply_is_linear_on_matrix_units(rng):
    ch = q.random_channel(2, 2, rng)
    rho = q.random_state(2, rng)
    total = np.zeros((2, 2), dtype=complex)
    for i in range(2):
        for j in range(2):
            e = np.zeros((2, 2))
            e[i, j] = 1
            total += rho[i, j] * q.apply(ch, e)
    assert np.allclose(total, q.apply(ch, rho), atol=1e-14)
