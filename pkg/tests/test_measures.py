import math

import numpy as np
import pytest

from qresource import freesets as F, measures as M, sdp
from qresource import quantum as q
from qresource.linalg import partial_trace_map, trace_map

import oracles

Z4 = np.diag([1, 1j, -1, -1j])

FREE_SETS = [
    F.Incoherent(3),
    F.PptSeparable(2, 2),
    F.GroupSymmetric((Z4,)),
    F.EntanglementBreakingPpt(2, 2),
    F.CompatibleTuple(2, (2, 2)),
    F.MarginalCompatible(2, (2, 2)),
]


def _obj(fs, mats):
    """Object form of sampled matrices (channels for channel slots)."""
    out = []
    for (d_in, d_out), m in zip(fs.slot_dims, mats):
        out.append(q.ChoiChannel(d_in, d_out, m) if d_in > 1 else m)
    return out if fs.is_tuple else out[0]


def _random_object(fs, rng):
    out = []
    for d_in, d_out in fs.slot_dims:
        out.append(q.random_channel(d_in, d_out, rng) if d_in > 1 else q.random_state(d_out, rng))
    return out if fs.is_tuple else out[0]


def test_plus_state_robustness_matches_grid():
    r = M.robustness(q.plus_state(2), F.Incoherent(2))
    assert r.status == sdp.OPTIMAL
    assert r.value == pytest.approx(oracles.plus_state_grid_robustness(), abs=1e-5)
    assert M.e_max(q.plus_state(2), F.Incoherent(2)) == pytest.approx(1.0, abs=1e-5)


def test_bell_robustness_and_weight():
    fs = F.PptSeparable(2, 2)
    r = M.robustness(q.bell_state(2), fs)
    assert r.value == pytest.approx(oracles.pure_state_robustness([0.5, 0.5]), abs=1e-5)
    w = M.weight(q.bell_state(2), fs)
    assert w.value == pytest.approx(1.0, abs=1e-6)
    assert M.e_max(q.bell_state(2), fs) == pytest.approx(1.0, abs=1e-5)


def test_isotropic_weight_matches_bisection():
    rho = 0.5 * q.bell_state(2) + 0.5 * np.eye(4) / 4
    w = M.weight(rho, F.PptSeparable(2, 2))
    assert 0 < w.value < 1
    assert w.value == pytest.approx(oracles.isotropic_weight(0.625), abs=1e-4)


@pytest.mark.parametrize("dim", [2, 3, 4])
def test_pure_state_coherence_formula(dim, rng):
    psi = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    psi /= np.linalg.norm(psi)
    r = M.robustness(q.pure(psi), F.Incoherent(dim))
    assert r.value == pytest.approx(oracles.coherence_robustness_pure(psi), abs=1e-6)


def test_free_robustness_of_coherence_is_infinite():
    r = M.robustness(q.plus_state(2), F.Incoherent(2), "free")
    assert math.isinf(r.value) and r.status == sdp.INFEASIBLE


@pytest.mark.parametrize("fs", FREE_SETS, ids=lambda s: s.kind)
def test_faithful_on_members(fs, rng):
    for _ in range(30):
        x = _obj(fs, fs.sample(rng))
        assert M.robustness(x, fs).value <= 1e-7
        assert M.weight(x, fs).value <= 1e-7


@pytest.mark.parametrize("fs", FREE_SETS, ids=lambda s: s.kind)
def test_result_invariants(fs, rng):
    for _ in range(4):
        x = _random_object(fs, rng)
        js = M.components(x, fs)
        r = M.robustness(x, fs)
        assert r.slater
        assert r.gap <= 1e-7 * (1 + r.value)
        mix = [(j + r.value * n) / (1 + r.value) for j, n in zip(js, r.noise_point or js)]
        if r.value > 1e-9:
            assert fs.is_member(_obj(fs, mix), tol=1e-6)
            for n in r.noise_point:
                assert np.linalg.eigvalsh(n)[0] > -1e-7
        rep = M.witness_report(r, x, fs, rng, samples=50)
        assert rep["ok"], rep

        w = M.weight(x, fs)
        if w.free_point is not None and w.residual is not None:
            rec = [w.value * g + (1 - w.value) * f for g, f in zip(w.residual, w.free_point)]
            assert max(np.max(np.abs(a - b)) for a, b in zip(rec, js)) <= 1e-8
        rep = M.witness_report(w, x, fs, rng, samples=50)
        assert rep["ok"], rep


def test_slater_for_every_free_set(rng):
    for fs in FREE_SETS:
        assert M.robustness(_random_object(fs, rng), fs).slater


@pytest.mark.parametrize(
    "fs,gen",
    [
        (F.Incoherent(3), lambda rng: q.random_state(3, rng)),
        (F.PptSeparable(2, 2), lambda rng: q.random_state(4, rng, rank=2)),
    ],
    ids=["incoherent", "ppt"],
)
def test_convexity(fs, gen, rng):
    worst = -np.inf
    for _ in range(30):
        x, y = gen(rng), gen(rng)
        rx, ry = M.robustness(x, fs).value, M.robustness(y, fs).value
        wx, wy = M.weight(x, fs).value, M.weight(y, fs).value
        for t in (0.25, 0.5, 0.75):
            z = t * x + (1 - t) * y
            worst = max(worst, M.robustness(z, fs).value - (t * rx + (1 - t) * ry))
            worst = max(worst, M.weight(z, fs).value - (t * wx + (1 - t) * wy))
    assert worst <= 1e-6


def test_incoherent_invariance(rng):
    fs = F.Incoherent(3)
    for _ in range(5):
        rho = q.random_state(3, rng)
        perm = np.eye(3)[[2, 0, 1]]
        phase = np.diag(np.exp(1j * rng.uniform(0, 2 * np.pi, 3)))
        r0, w0 = M.robustness(rho, fs).value, M.weight(rho, fs).value
        for u in (perm, phase):
            v = u @ rho @ u.conj().T
            assert M.robustness(v, fs).value == pytest.approx(r0, abs=1e-6)
            assert M.weight(v, fs).value == pytest.approx(w0, abs=1e-6)


def test_ppt_local_channels_do_not_increase(rng):
    fs = F.PptSeparable(2, 2)
    for _ in range(5):
        rho = q.random_state(4, rng, rank=1)
        a, b = q.random_channel(2, 2, rng, 2), q.random_channel(2, 2, rng, 2)
        # local channel A (x) B applied via Kraus-free Choi composition on each factor
        out = _apply_local(rho, a, b)
        assert M.robustness(out, fs).value <= M.robustness(rho, fs).value + 1e-6
        assert M.weight(out, fs).value <= M.weight(rho, fs).value + 1e-6


def _apply_local(rho, a, b):
    out = np.zeros((4, 4), dtype=complex)
    for i in range(4):
        for j in range(4):
            e = np.zeros((4, 4))
            e[i, j] = 1
            ea, eb = divmod(i, 2), divmod(j, 2)
            blk = np.kron(q.apply(a, _unit(ea[0], eb[0])), q.apply(b, _unit(ea[1], eb[1])))
            out += rho[i, j] * blk
    return out


def _unit(i, j):
    e = np.zeros((2, 2), dtype=complex)
    e[i, j] = 1
    return e


def test_generalized_below_free_robustness(rng):
    fs = F.PptSeparable(2, 2)
    for _ in range(5):
        rho = q.random_state(4, rng)
        ra, rf = M.robustness(rho, fs).value, M.robustness(rho, fs, "free").value
        assert ra <= rf + 1e-6
        rep = M.witness_report(M.robustness(rho, fs, "free"), rho, fs, rng, samples=50)
        assert rep["ok"], rep


# -- tuples ------------------------------------------------------------------

def _joint_feasible(t):
    """Is there noise (N1, N2) with ((id + t N_i)/(1+t))_i broadcastable?"""
    j_id = q.identity_channel(2).choi
    p = sdp.SdpProblem()
    g = p.var("joint", 8)
    noise = [p.var(f"n{i}", 4) for i in range(2)]
    for i, n in enumerate(noise):
        p.equal(n.map(partial_trace_map([2, 2], [0])), np.eye(2) / 2)
        marg = g.map(partial_trace_map([2, 2, 2], [0, i + 1]))
        p.equal(marg - n * (t / (1 + t)), j_id / (1 + t))
    return sdp.solve(p).status == sdp.OPTIMAL


def test_identity_pair_robustness_matches_bisection():
    ident = q.identity_channel(2)
    r = M.tuple_robustness([ident, ident], F.CompatibleTuple(2, (2, 2)))
    assert r.value > 0
    lo, hi = 0.0, 1.0
    while hi - lo > 1e-4:
        mid = 0.5 * (lo + hi)
        lo, hi = (lo, mid) if _joint_feasible(mid) else (mid, hi)
    assert r.value == pytest.approx(hi, abs=2e-4)


def test_tuple_examples(rng):
    dep = q.depolarizing_channel(2, 0.0)
    assert M.tuple_robustness([dep, dep], F.CompatibleTuple(2, (2, 2))).value <= 1e-7
    prod = np.kron(np.diag([1.0, 0.0]), np.eye(2) / 2)
    mfs = F.MarginalCompatible(2, (2, 2))
    assert M.tuple_robustness([prod, prod], mfs).value <= 1e-7
    assert M.tuple_weight([q.bell_state(2)] * 2, mfs).value == pytest.approx(1.0, abs=1e-6)
    with pytest.raises(Exception):
        M.tuple_robustness(q.bell_state(2), F.PptSeparable(2, 2))


def _tuple_weight_oracle(xs, fs):
    """Bisection over mu: is there Z in cone(F) with Z_i <= x_i and tr Z = 1 - mu?"""
    def feasible(mu):
        p = sdp.SdpProblem()
        zs = [p.var(f"z{i}", x.shape[0]) for i, x in enumerate(xs)]
        fs.constrain(p, zs, require_psd=True)
        for i, (z, x) in enumerate(zip(zs, xs)):
            slack = p.var(f"s{i}", x.shape[0])
            p.equal(z + slack, x)
        p.equal(zs[0].map(trace_map(xs[0].shape[0], 1)), np.full((1, 1), 1 - mu))
        return sdp.solve(p).status == sdp.OPTIMAL

    lo, hi = 0.0, 1.0
    while hi - lo > 1e-5:
        mid = 0.5 * (lo + hi)
        lo, hi = (lo, mid) if feasible(mid) else (mid, hi)
    return hi


def test_mixed_tuple_weight_matches_bisection(rng):
    mfs = F.MarginalCompatible(2, (2, 2))
    for s in (0.3, 0.7):
        xs = [s * q.bell_state(2) + (1 - s) * np.eye(4) / 4] * 2
        w = M.tuple_weight(xs, mfs)
        assert w.value == pytest.approx(_tuple_weight_oracle(xs, mfs), abs=1e-4)


# -- max-relative entropy ----------------------------------------------------

def test_dmax_examples(rng):
    rho = q.random_state(3, rng)
    assert M.max_relative_entropy(rho, rho) == pytest.approx(0.0, abs=1e-9)
    assert M.max_relative_entropy(np.diag([1.0, 0.0]), np.eye(2) / 2) == pytest.approx(1.0)
    assert math.isinf(M.max_relative_entropy(np.eye(2) / 2, np.diag([1.0, 0.0])))


def test_dmax_random_pairs(rng):
    for _ in range(20):
        rho, sigma = q.random_state(3, rng), q.random_state(3, rng)
        lam = 2 ** M.max_relative_entropy(rho, sigma)
        assert -1e-9 <= np.linalg.eigvalsh(lam * sigma - rho)[0] <= 1e-6
        assert M.max_relative_entropy(rho, sigma) == pytest.approx(oracles.max_eig_dmax(rho, sigma), abs=1e-9)


def test_emax_below_sampled_dmax(rng):
    fs = F.Incoherent(3)
    rho = q.random_state(3, rng)
    e = M.e_max(rho, fs)
    for _ in range(50):
        sigma = fs.sample(rng)[0]
        assert M.max_relative_entropy(rho, sigma) >= e - 1e-6
    assert M.e_max(np.diag([0.2, 0.3, 0.5]).astype(complex), fs) == pytest.approx(0.0, abs=1e-7)
