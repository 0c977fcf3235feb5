"""Acceptance criteria, one PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -s`` to see only these lines; the
lines are printed with capture disabled so they also appear in a plain run.
"""
import time

import numpy as np
import pytest

from qresource import approx as A, freesets as F, games as G, measures as M
from qresource import quantum as q

import oracles

D = 8
LEVELS = tuple(range(2, D + 1))

# robustness/weight results produced by the criteria below, re-audited by criterion 8
RESULTS: list = []


def report(capsys, label, ok, detail):
    with capsys.disabled():
        print(f"\n{label}: {'PASS' if ok else 'FAIL'} {detail}")
    assert ok, detail


def _timed(fn, *args, **kw):
    t0 = time.perf_counter()
    out = fn(*args, **kw)
    return out, time.perf_counter() - t0


def _keep(res, x, fs):
    RESULTS.append((res, x, fs))
    return res


def test_criterion_1_plus_state(capsys):
    fs = F.Incoherent(2)
    x = q.plus_state(2)
    res, secs = _timed(M.robustness, x, fs, "all")
    _keep(res, x, fs)
    emax = M.e_max(x, fs)
    grid = oracles.plus_state_grid_robustness()
    ok = (abs(res.value - 1) <= 1e-5 and abs(grid - 1) <= 1e-3 and secs < 1.0
          and abs(emax - 1) <= 1e-5 and abs(emax - np.log2(1 + res.value)) <= 1e-9)
    report(capsys, "CRITERION 1", ok, f"R={res.value:.9f} grid={grid:.6f} Emax={emax:.9f} t={secs:.3f}s")


def test_criterion_2_bell_state(capsys):
    fs = F.PptSeparable(2, 2)
    x = q.bell_state(2)
    r, tr = _timed(M.robustness, x, fs, "all")
    w, tw = _timed(M.weight, x, fs)
    _keep(r, x, fs)
    _keep(w, x, fs)
    ok = abs(r.value - 1) <= 1e-5 and abs(w.value - 1) <= 1e-6 and tr < 2.0 and tw < 2.0
    report(capsys, "CRITERION 2", ok, f"R={r.value:.9f} ({tr:.3f}s) W={w.value:.9f} ({tw:.3f}s)")


def test_criterion_3_game_identity(capsys):
    rng = np.random.default_rng(3)
    cases = [(F.Incoherent(2), lambda: q.random_state(2, rng))] * 20
    cases += [(F.PptSeparable(2, 2), lambda: q.random_state(4, rng))] * 20
    worst_r = worst_w = 0.0
    excess = -np.inf
    checked = 0
    for k, (fs, draw) in enumerate(cases):
        x = draw()
        r = _keep(M.robustness(x, fs, "all"), x, fs)
        w = _keep(M.weight(x, fs), x, fs)
        rep = G.verify_advantage(x, fs, "all", r)
        wrep = G.verify_weight_advantage(x, fs, w)
        worst_r = max(worst_r, abs(rep["ratio"] - (1 + r.value)))
        worst_w = max(worst_w, abs(wrep["ratio"] - (1 - w.value)))
        # five random admissible games on every other instance, 100 in total
        if k % 2 == 0:
            d = x.shape[0]
            while checked < 5 * (k // 2 + 1):
                game = G.random_game(1, d, rng, 1, 3)
                ratio = G.advantage_ratio(x, fs, [game], "max")
                if ratio is None:
                    continue
                excess = max(excess, ratio - (1 + r.value))
                checked += 1
    ok = worst_r <= 1e-3 and worst_w <= 1e-3 and checked == 100 and excess <= 1e-6
    report(capsys, "CRITERION 3", ok,
           f"max|ratio-(1+R)|={worst_r:.2e} max|ratio-(1-W)|={worst_w:.2e} "
           f"random games={checked} max excess={excess:.2e}")


def _c4_instances(rng):
    parity = np.diag([(-1.0) ** k for k in range(D)])
    sets = [
        (F.Incoherent(D), lambda: q.random_state(D, rng)),
        (F.GroupSymmetric((parity,)), lambda: q.random_state(D, rng)),
        (F.PptSeparable(D, 2), lambda: q.random_state(2 * D, rng)),
        (F.EntanglementBreakingPpt(D, 2), lambda: q.random_channel(D, 2, rng, 4)),
        (F.CompatibleTuple(D, (2, 2)), lambda: [q.random_channel(D, 2, rng, 4) for _ in range(2)]),
        (F.MarginalCompatible(D, (2, 2)), lambda: [q.random_state(2 * D, rng) for _ in range(2)]),
    ]
    return sets


def test_criterion_4_monotone_sweeps(capsys):
    rng = np.random.default_rng(4)
    scheme = A.TruncationScheme(D, LEVELS)
    t0 = time.perf_counter()
    bad, count, per_set = [], 0, {}
    for fs, draw in _c4_instances(rng):
        for i in range(20):
            sw = A.approximate_quantifier(draw(), fs, "all", scheme)
            count += 1
            if not (all(sw.monotone_ok) and sw.upper_bound_ok and not sw.errors
                    and all(s == "optimal" for s in sw.statuses)):
                bad.append((fs.kind, i, sw.monotone_violations, sw.statuses))
        per_set[fs.kind] = round(time.perf_counter() - t0, 1)
    secs = time.perf_counter() - t0
    ok = not bad and secs < 300
    report(capsys, "CRITERION 4", ok, f"sweeps={count} failures={bad[:3]} t={secs:.1f}s cumulative={per_set}")


def _c5_members(fs, rng):
    xs = fs.sample(rng)
    if isinstance(fs, (F.EntanglementBreakingPpt,)):
        return q.ChoiChannel(fs.dim_in, fs.dim_out, xs[0])
    if isinstance(fs, F.CompatibleTuple):
        return [q.ChoiChannel(fs.dim_in, d, m) for m, d in zip(xs, fs.dims_out)]
    if fs.is_tuple:
        return xs
    return xs[0]


def test_criterion_5_truncation_closure(capsys):
    rng = np.random.default_rng(5)
    scheme = A.TruncationScheme(D, LEVELS)
    sets = [F.PptSeparable(D, 2), F.EntanglementBreakingPpt(D, 2),
            F.CompatibleTuple(D, (2, 2)), F.MarginalCompatible(D, (2, 2))]
    failures, checks = [], 0
    for fs in sets:
        level_sets = {n: A.level_free_set(fs, scheme, n) for n in LEVELS}
        for i in range(30):
            x = _c5_members(fs, rng)
            for n in LEVELS:
                lvl = A.truncate_object(x, fs, scheme, n)
                checks += 1
                if not level_sets[n].is_member(lvl):
                    failures.append((fs.kind, i, n))
    report(capsys, "CRITERION 5", not failures, f"membership checks={checks} failures={failures[:5]}")


def test_criterion_6_lifted_game(capsys):
    rng = np.random.default_rng(6)
    scheme = A.TruncationScheme(D, tuple(range(2, D)))
    cases = [(F.Incoherent(D), q.random_state(D, rng)) for _ in range(5)]
    cases += [(F.PptSeparable(D, 2), q.random_state(2 * D, rng)) for _ in range(5)]
    worst, worst_povm = 0.0, 0.0
    for fs, x in cases:
        sw = A.approximate_quantifier(x, fs, "all", scheme, compute_ambient=False)
        rep = A.lifted_ratio(x, sw, scheme.levels[-1])
        worst = max(worst, rep["error"])
        worst_povm = max(worst_povm, rep["povm_error"])
    ok = worst <= 1e-3 and worst_povm <= 1e-9
    report(capsys, "CRITERION 6", ok, f"instances={len(cases)} max|ratio-(1+R_A)|={worst:.2e} povm error={worst_povm:.2e}")


def test_criterion_7_broadcast_threshold(capsys):
    fs = F.CompatibleTuple(2, (2, 2))
    out, secs = _timed(F.membership_threshold, lambda e: [q.depolarizing_channel(2, e)] * 2, fs, 0.0, 1.0, 1e-3)
    ok = abs(out["threshold"] - 0.667) <= 0.01 and out["width"] <= 1e-3 and secs < 60
    report(capsys, "CRITERION 7", ok, f"threshold={out['threshold']:.5f} width={out['width']:.1e} t={secs:.1f}s")


def test_criterion_8_duality_hygiene(capsys, _audit_solves):
    rng = np.random.default_rng(8)
    # convexity of both quantifiers on 30 random pairs
    fs = F.Incoherent(2)
    violations = 0
    for _ in range(30):
        x, y = q.random_state(2, rng), q.random_state(2, rng)
        rx, ry = M.robustness(x, fs).value, M.robustness(y, fs).value
        wx, wy = M.weight(x, fs).value, M.weight(y, fs).value
        for t in (0.25, 0.5, 0.75):
            mix = t * x + (1 - t) * y
            violations += M.robustness(mix, fs).value > t * rx + (1 - t) * ry + 1e-6
            violations += M.weight(mix, fs).value > t * wx + (1 - t) * wy + 1e-6
    binding = [M.witness_report(res, x, f, rng, samples=50) for res, x, f in RESULTS
               if res.status == "optimal" and res.witness is not None]
    bind_err = max(r["binding_error"] for r in binding)
    solved = [s for s in _audit_solves if s.optimal]
    gap_bad = [s for s in solved if s.gap > 1e-7 * (1 + abs(s.primal_value))]
    ok = violations == 0 and bind_err <= 1e-6 and not gap_bad and len(solved) > 0
    report(capsys, "CRITERION 8", ok,
           f"optimal solves audited={len(solved)} gap violations={len(gap_bad)} "
           f"witness bindings={len(binding)} max binding error={bind_err:.2e} convexity violations={violations}")


def test_anchor_independence(capsys):
    rng = np.random.default_rng(9)
    levels = tuple(range(2, D))
    s0 = A.TruncationScheme(D, levels, q.pure(q.ket(D, 0)))
    s1 = A.TruncationScheme(D, levels, q.pure(q.ket(D, 1)))
    worst = 0.0
    for k in range(10):
        # rapidly decaying Fock envelope on the truncated factor
        env = 0.2 ** np.arange(D) * (0.5 + rng.random(D))
        if k < 5:
            fs, amps = F.Incoherent(D), env * np.exp(2j * np.pi * rng.random(D))
        else:
            fs = F.PptSeparable(D, 2)
            amps = (env[:, None] * (rng.normal(size=(D, 2)) + 1j * rng.normal(size=(D, 2)))).reshape(-1)
        x = q.pure(amps / np.linalg.norm(amps))
        a = A.approximate_quantifier(x, fs, "all", s0, compute_ambient=False)
        b = A.approximate_quantifier(x, fs, "all", s1, compute_ambient=False)
        worst = max(worst, abs(a.values[-1] - b.values[-1]))
    report(capsys, "ANCHOR INDEPENDENCE", worst <= 2e-4, f"instances=10 final level={levels[-1]} max difference={worst:.2e}")
