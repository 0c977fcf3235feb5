import numpy as np
import pytest
from hypothesis import given, strategies as st

from qresource import approx as A, freesets as F, measures as M
from qresource import quantum as q
from qresource.linalg import ValidationError, partial_trace

import oracles

D = 8
LEVELS = tuple(range(2, D + 1))


@pytest.fixture
def scheme():
    return A.TruncationScheme(D, LEVELS)


@given(st.integers(0, 10_000))
def test_scheme_identities(seed):
    rng = np.random.default_rng(seed)
    s = A.TruncationScheme(D, LEVELS, q.random_state(2, rng))
    rho = q.random_state(D, rng)
    for n in LEVELS:
        once = s.apply(n, rho)
        assert np.allclose(s.apply(n, once), once, atol=1e-10)
        for m in LEVELS:
            if m <= n:
                assert np.allclose(s.apply(n, s.apply(m, rho)), s.apply(m, rho), atol=1e-10)
                assert np.allclose(s.apply(m, s.apply(n, rho)), s.apply(m, rho), atol=1e-10)


def test_supported_state_fixed(scheme, rng):
    for n in LEVELS:
        sub = q.random_state(n, rng)
        rho = np.zeros((D, D), dtype=complex)
        rho[:n, :n] = sub
        assert np.max(np.abs(scheme.apply(n, rho) - rho)) <= 1e-12


def test_scheme_validation():
    with pytest.raises(ValidationError):
        A.TruncationScheme(D, (3, 2))
    with pytest.raises(ValidationError):
        A.TruncationScheme(D, (2, 9))
    bad = np.zeros((D, D))
    bad[3, 3] = 1
    with pytest.raises(ValidationError):
        A.TruncationScheme(D, LEVELS, bad)


def test_truncation_channel_examples(scheme, rng):
    assert np.allclose(A.truncation_channel(scheme, D).choi, q.identity_channel(D).choi)
    ch = A.truncation_channel(scheme, 3)
    sub = np.zeros((D, D), dtype=complex)
    sub[:3, :3] = q.random_state(3, rng)
    assert np.allclose(q.apply(ch, sub), sub)
    for k in range(3, D):
        assert np.allclose(q.apply(ch, q.pure(q.ket(D, k))), scheme.anchor)
    rho = q.random_state(D, rng)
    assert np.allclose(q.apply(ch, rho), scheme.apply(3, rho))


def test_adjoint_is_unital_dual(scheme, rng):
    for n in LEVELS:
        assert np.allclose(scheme.adjoint(n, np.eye(n)), np.eye(D), atol=1e-12)
        rho, e = q.random_state(D, rng), q.random_hermitian(n, rng)
        lhs = np.vdot(e, scheme.compress(n, rho))
        rhs = np.vdot(scheme.adjoint(n, e), rho)
        assert abs(lhs - rhs) < 1e-12


def test_truncate_object_identity_at_ambient(scheme, rng):
    fs = F.EntanglementBreakingPpt(D, 2)
    ch = q.random_channel(D, 2, rng)
    out = A.truncate_object(ch, fs, scheme, D)
    assert np.allclose(out.choi, ch.choi)
    rho = q.random_state(2 * D, rng)
    assert np.allclose(A.truncate_object(rho, F.PptSeparable(D, 2), scheme, D), rho)


def test_embedding_matches_composition(scheme, rng):
    fs = F.EntanglementBreakingPpt(D, 2)
    ch = q.random_channel(D, 2, rng)
    for n in (2, 5):
        lvl = A.truncate_object(ch, fs, scheme, n)
        emb = A.embed_object(lvl, fs, scheme, n)
        direct = q.compose(ch, A.truncation_channel(scheme, n))
        assert np.allclose(emb.choi, direct.choi, atol=1e-12)
    fs = F.PptSeparable(D, D)
    rho = q.truncated_cv_state("two_mode_squeezed", D, 0.6)
    lvl = A.truncate_object(rho, fs, scheme, 3)
    emb = A.embed_object(lvl, fs, scheme, 3)
    # beta (x) beta applied through the truncation channel, factor by factor
    assert np.allclose(emb, _apply_product(scheme, 3, rho), atol=1e-12)


def _apply_product(scheme, n, rho):
    ch = A.truncation_channel(scheme, n)
    out = np.zeros_like(rho)
    for i in range(D * D):
        for j in range(D * D):
            if rho[i, j] == 0:
                continue
            (a, b), (c, d) = divmod(i, D), divmod(j, D)
            ea = np.zeros((D, D)); ea[a, c] = 1
            eb = np.zeros((D, D)); eb[b, d] = 1
            out += rho[i, j] * np.kron(q.apply(ch, ea), q.apply(ch, eb))
    return out


@given(st.integers(0, 10_000), st.sampled_from(LEVELS))
def test_ppt_truncation_closure_property(seed, n):
    rng = np.random.default_rng(seed)
    s = A.TruncationScheme(D, LEVELS)
    fs = F.PptSeparable(D, 2)
    x = fs.sample(rng)[0]
    lvl = A.level_free_set(fs, s, n)
    assert lvl.is_member(A.truncate_object(x, fs, s, n))
    assert fs.is_member(A.embed_object(A.truncate_object(x, fs, s, n), fs, s, n))


def test_compatible_pair_stays_compatible(scheme, rng):
    fs = F.CompatibleTuple(D, (2, 2))
    pair = [q.ChoiChannel(D, 2, m) for m in fs.sample(rng)]
    for n in (2, 4, 7):
        lvl = A.truncate_object(pair, fs, scheme, n)
        assert A.level_free_set(fs, scheme, n).is_member(lvl)


def test_constant_sweep_inside_first_level(scheme):
    rho = np.zeros((D, D), dtype=complex)
    rho[:2, :2] = q.plus_state(2)
    sw = A.approximate_quantifier(rho, F.Incoherent(D), "all", scheme)
    assert np.allclose(sw.values, 1.0, atol=1e-6)
    assert not sw.hard_failure


def test_coherent_sweep_matches_level_oracle(scheme):
    amps = q.coherent_amplitudes(1.0, D)
    sw = A.approximate_quantifier(q.pure(amps), F.Incoherent(D), "all", scheme)
    for n, v in zip(sw.levels, sw.values):
        assert v == pytest.approx(oracles.coherent_level_value(amps, n), abs=1e-6)
    assert all(sw.monotone_ok) and sw.upper_bound_ok
    assert sw.ambient_value == pytest.approx(oracles.coherence_robustness_pure(amps), abs=1e-6)


def test_tmsv_sweep(scheme):
    fs = F.PptSeparable(D, D)
    rho = q.truncated_cv_state("two_mode_squeezed", D, 0.5)
    sw = A.approximate_quantifier(rho, fs, "all", scheme)
    assert all(sw.monotone_ok) and sw.upper_bound_ok and not sw.hard_failure
    lam = np.linalg.eigvalsh(partial_trace(rho, [D, D], [0]))
    assert sw.ambient_value == pytest.approx(oracles.pure_state_robustness(np.clip(lam, 0, None)), abs=1e-5)
    # level 2 by hand: keep the qubit-qubit block, move leaked weight onto |00>
    c = np.array([0.5**k for k in range(D)])
    c /= np.linalg.norm(c)
    phi = np.zeros(4)
    phi[0], phi[3] = c[0], c[1]
    two = np.outer(phi, phi).astype(complex)
    two[0, 0] += np.sum(c[2:] ** 2)
    assert sw.values[0] == pytest.approx(M.robustness(two, F.PptSeparable(2, 2)).value, abs=1e-7)


def test_weight_sweep_direction(scheme, rng):
    fs = F.EntanglementBreakingPpt(D, 2)
    for _ in range(3):
        ch = q.random_channel(D, 2, rng, 4)
        sw = A.approximate_quantifier(ch, fs, "all", scheme, kind="weight")
        assert all(sw.monotone_ok) and sw.upper_bound_ok


def test_lifted_game(scheme, rng):
    fs = F.Incoherent(D)
    rho = q.random_state(D, rng)
    sw = A.approximate_quantifier(rho, fs, "all", scheme)
    rep = A.lifted_ratio(rho, sw, 6)
    assert rep["payoff_error"] <= 1e-8
    assert rep["povm_error"] <= 1e-9
    assert rep["error"] <= 1e-3
    top = A.game_certificate_lift(sw, D)[0]
    from qresource.games import witness_to_game
    base = witness_to_game(sw.results[-1].witness[0], (1, D))
    assert np.allclose(top.operator(), base.operator())


def test_sweep_outputs(scheme, rng):
    fs = F.Incoherent(D)
    rho = q.random_state(D, rng)
    a = A.approximate_quantifier(rho, fs, "all", scheme)
    b = A.approximate_quantifier(rho, fs, "all", scheme, jobs=3)
    assert a.values == b.values
    lines = a.to_csv().splitlines()
    assert lines[0] == "level,value,status,gap,monotone_ok"
    assert len(lines) == len(LEVELS) + 1
    doc = a.to_json()
    assert doc["limit_estimate"] == a.values[-1]


def test_unsupported_truncation(scheme):
    with pytest.raises(ValidationError):
        A.approximate_quantifier(np.eye(4) / 4, F.PptSeparable(2, 2), "all", scheme)
