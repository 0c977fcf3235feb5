"""Generalized/free robustness, convex weight, max-relative entropy.

Objects are states (density matrices), channels (:class:`ChoiChannel`) or
lists of them for tuple free sets.  Internally every component is its unit
trace Choi matrix ``J_i``.  The programs solved are

robustness
    ``min (1/k) sum_i tr S_i`` over PSD ``S_i`` with ``S_i + J_i`` in
    ``cone(F)``; with ``noise="free"`` also ``S_i`` in ``cone(F)``.
    ``S_i + J_i = (1 + t) * free`` so the optimum is ``t``.
weight
    ``min (1/k) sum_i tr Q_i`` over PSD ``Q_i`` with ``J_i - Q_i`` in ``cone(F)``.

The witnesses are dual variables: for robustness ``Y_i = I/k - A_i`` where
``A_i`` collects the multipliers of the ``S_i + J_i`` cone constraints, for
weight ``Y_i`` is the dual slack of ``Q_i``.  They satisfy
``sum_i tr(Y_i J_i) = 1 + R`` (resp. ``1 - W``) and ``sum_i tr(Y_i T_i) <= 1``
(resp. ``>= 1``) on free tuples ``T``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import sdp
from .freesets import FreeSet
from .linalg import ValidationError, hermitize, min_eigenvalue, partial_trace, require_hermitian
from .quantum import ChoiChannel

log = logging.getLogger(__name__)

NOISE_MODES = ("all", "free")


@dataclass
class RobustnessResult:
    value: float
    status: str
    free_point: list | None
    noise_point: list | None
    witness: list | None
    exactness: str
    noise: str
    gap: float = 0.0
    slater: bool | None = None
    warnings: list = field(default_factory=list)
    solution: sdp.SdpSolution | None = field(default=None, repr=False)

    def to_json(self, emit_witness: bool = False) -> dict:
        from .io import matrix_to_json

        doc = {
            "quantity": "robustness",
            "noise": self.noise,
            "value": self.value,
            "status": self.status,
            "gap": self.gap,
            "exactness": self.exactness,
            "slater": self.slater,
            "warnings": list(self.warnings),
        }
        if emit_witness:
            doc["witness"] = None if self.witness is None else [matrix_to_json(y) for y in self.witness]
            doc["free_point"] = None if self.free_point is None else [matrix_to_json(t) for t in self.free_point]
        return doc


@dataclass
class WeightResult:
    value: float
    status: str
    free_point: list | None
    residual: list | None
    witness: list | None
    exactness: str
    gap: float = 0.0
    slater: bool | None = None
    warnings: list = field(default_factory=list)
    solution: sdp.SdpSolution | None = field(default=None, repr=False)

    def to_json(self, emit_witness: bool = False) -> dict:
        from .io import matrix_to_json

        doc = {
            "quantity": "weight",
            "value": self.value,
            "status": self.status,
            "gap": self.gap,
            "exactness": self.exactness,
            "slater": self.slater,
            "warnings": list(self.warnings),
        }
        if emit_witness:
            doc["witness"] = None if self.witness is None else [matrix_to_json(y) for y in self.witness]
            doc["free_point"] = None if self.free_point is None else [matrix_to_json(t) for t in self.free_point]
        return doc


def components(x, fs: FreeSet) -> list[np.ndarray]:
    """Validated unit-trace Choi matrices of the components of ``x``."""
    mats = fs.coerce(x)
    for i, m in enumerate(mats):
        d_in, d_out = fs.slot_dims[i]
        require_hermitian(m, 1e-9, f"component {i}")
        tr = np.trace(m).real
        if abs(tr - 1.0) > 1e-8:
            raise ValidationError(f"component {i} has trace {tr:.10g}, expected 1")
        if min_eigenvalue(m, 1e-9) < -1e-8:
            raise ValidationError(f"component {i} is not positive semidefinite")
        if d_in > 1:
            marg = partial_trace(m, [d_in, d_out], [0])
            if np.max(np.abs(marg - np.eye(d_in) / d_in)) > 1e-8:
                raise ValidationError(f"component {i} is not a trace-preserving channel")
    return [hermitize(m) for m in mats]


def _check_noise(noise: str):
    if noise not in NOISE_MODES:
        raise ValidationError(f"noise must be one of {NOISE_MODES}, got {noise!r}")


def _sum_tr(ys, ts) -> float:
    return float(sum(np.real(np.vdot(y, t)) for y, t in zip(ys, ts)))


def robustness(x, fs: FreeSet, noise: str = "all", opts: sdp.SolverOptions | None = None) -> RobustnessResult:
    """Generalized (``noise="all"``) or free (``noise="free"``) robustness."""
    _check_noise(noise)
    js = components(x, fs)
    k = len(js)
    p = sdp.SdpProblem()
    shifts = [p.var(f"shift{i}", j.shape[0]) for i, j in enumerate(js)]
    g_free = fs.constrain(p, [s + j for s, j in zip(shifts, js)], require_psd=False, tag="free")
    if noise == "free":
        fs.constrain(p, shifts, require_psd=False, tag="noise")
    for s in shifts:
        p.add_objective_trace(s, 1.0 / k)

    warnings = []
    slater = None
    if noise == "all":
        t0 = fs.interior_point()
        c = 1.0 + 2.0 * max(np.linalg.eigvalsh(j)[-1] / np.linalg.eigvalsh(t)[0] for j, t in zip(js, t0))
        known = {next(iter(s.terms)): c * t - j for s, t, j in zip(shifts, t0, js)}
        slater = sdp.slater_check(p, p.complete_candidate(known))
        if not slater:
            warnings.append("no strictly feasible point found for the primal problem")

    sol = sdp.solve(p, opts)
    blocks = [p.blocks[next(iter(s.terms))] for s in shifts]
    if sol.status == sdp.INFEASIBLE:
        return RobustnessResult(math.inf, sol.status, None, None, None, fs.exactness, noise,
                                0.0, slater, warnings, sol)
    value = max(sol.primal_value, 0.0)
    xs = [hermitize(sol.block(b) + j) for b, j in zip(blocks, js)]
    trx = [np.trace(xx).real for xx in xs]
    free_point = [xx / t for xx, t in zip(xs, trx)]
    svals = [hermitize(sol.block(b)) for b in blocks]
    trs = [np.trace(sv).real for sv in svals]
    noise_point = [sv / t for sv, t in zip(svals, trs)] if min(trs) > 1e-9 else None
    witness = [hermitize(np.eye(b.dim) / k - sol.adjoint(g_free, b)) for b in blocks]
    norm = _sum_tr(witness, free_point)
    if norm > 1e-12:
        witness = [y / norm for y in witness]
    if sol.status != sdp.OPTIMAL:
        warnings.append(f"solver stopped with status {sol.status}: {sol.message}")
    return RobustnessResult(value, sol.status, free_point, noise_point, witness, fs.exactness, noise,
                            sol.gap, slater, warnings, sol)


def tuple_robustness(xs, fs: FreeSet, noise: str = "all", opts: sdp.SolverOptions | None = None) -> RobustnessResult:
    if not fs.is_tuple:
        raise ValidationError(f"{fs.kind} is not a tuple free set")
    return robustness(list(xs), fs, noise, opts)


def weight(x, fs: FreeSet, opts: sdp.SolverOptions | None = None) -> WeightResult:
    """Convex weight ``W`` with ``x = W * residual + (1 - W) * free``."""
    js = components(x, fs)
    k = len(js)
    p = sdp.SdpProblem()
    resid = [p.var(f"resid{i}", j.shape[0]) for i, j in enumerate(js)]
    fs.constrain(p, [j - q for q, j in zip(resid, js)], require_psd=True, tag="free")
    for q in resid:
        p.add_objective_trace(q, 1.0 / k)

    warnings = []
    t0 = fs.interior_point()
    eps = min(np.linalg.eigvalsh(j)[0] / np.linalg.eigvalsh(t)[-1] for j, t in zip(js, t0)) / 2
    slater = False
    if eps > 1e-10:
        known = {next(iter(q.terms)): j - eps * t for q, t, j in zip(resid, t0, js)}
        slater = sdp.slater_check(p, p.complete_candidate(known))
    if not slater:
        warnings.append("primal has no strictly feasible point (rank-deficient object); dual is strictly feasible")

    sol = sdp.solve(p, opts)
    blocks = [p.blocks[next(iter(q.terms))] for q in resid]
    if sol.status == sdp.INFEASIBLE:
        # cannot happen: Q = J is always feasible
        raise RuntimeError("weight program reported infeasible")
    value = min(max(sol.primal_value, 0.0), 1.0)
    qs = [hermitize(sol.block(b)) for b in blocks]
    zs = [j - q for j, q in zip(js, qs)]
    trz = [np.trace(z).real for z in zs]
    trq = [np.trace(q).real for q in qs]
    free_point = [z / t for z, t in zip(zs, trz)] if min(trz) > 1e-9 else None
    residual = [q / t for q, t in zip(qs, trq)] if min(trq) > 1e-9 else None
    witness = [hermitize(sol.slack(b)) for b in blocks]
    if free_point is not None:
        norm = _sum_tr(witness, free_point)
        if norm > 1e-12:
            witness = [y / norm for y in witness]
    if sol.status != sdp.OPTIMAL:
        warnings.append(f"solver stopped with status {sol.status}: {sol.message}")
    return WeightResult(value, sol.status, free_point, residual, witness, fs.exactness, sol.gap,
                        slater, warnings, sol)


def tuple_weight(xs, fs: FreeSet, opts: sdp.SolverOptions | None = None) -> WeightResult:
    if not fs.is_tuple:
        raise ValidationError(f"{fs.kind} is not a tuple free set")
    return weight(list(xs), fs, opts)


def max_relative_entropy(rho, sigma, support_tol: float = 1e-10) -> float:
    """``log2`` of the smallest ``lam`` with ``rho <= lam * sigma`` (``inf`` if no such ``lam``)."""
    rho = hermitize(require_hermitian(rho, 1e-10, "rho"))
    sigma = hermitize(require_hermitian(sigma, 1e-10, "sigma"))
    if rho.shape != sigma.shape:
        raise ValidationError("rho and sigma have different dimensions")
    w, v = np.linalg.eigh(sigma)
    on = w > support_tol * max(1.0, w[-1])
    vs = v[:, on]
    outside = v[:, ~on]
    if outside.size:
        leak = outside.conj().T @ rho @ outside
        if np.max(np.abs(leak)) > 1e-9 or np.max(np.abs(outside.conj().T @ rho @ vs), initial=0.0) > 1e-9:
            log.info("support of rho is not contained in the support of sigma")
            return math.inf
    isq = 1.0 / np.sqrt(w[on])
    m = isq[:, None] * (vs.conj().T @ rho @ vs) * isq[None, :]
    lam = np.linalg.eigvalsh(hermitize(m))[-1]
    if lam <= 0:
        return -math.inf
    return float(np.log2(lam))


def e_max(rho, fs: FreeSet, opts: sdp.SolverOptions | None = None) -> float:
    """``log2(1 + R)`` with the generalized robustness against ``fs``."""
    if fs.slot_dims[0][0] != 1 or fs.arity != 1:
        raise ValidationError("e_max is defined for single-state free sets")
    r = robustness(rho, fs, "all", opts)
    if r.status != sdp.OPTIMAL:
        log.warning("robustness solve ended with status %s", r.status)
    return float(np.log2(1.0 + r.value))


def witness_report(res, x, fs: FreeSet, rng: np.random.Generator, samples: int = 200) -> dict:
    """Sampled dual-feasibility evidence for a robustness or weight witness."""
    js = components(x, fs)
    ys = res.witness
    binding = _sum_tr(ys, js)
    vals = [_sum_tr(ys, fs.sample(rng)) for _ in range(samples)]
    vals.append(_sum_tr(ys, fs.interior_point()))
    min_eig = min(np.linalg.eigvalsh(y)[0] for y in ys)
    if isinstance(res, RobustnessResult):
        target = 1.0 + res.value
        rep = {"kind": "robustness", "binding": binding, "target": target,
               "max_free": max(vals), "min_eig": min_eig,
               "binding_error": abs(binding - target)}
        rep["ok"] = rep["binding_error"] <= 1e-6 and rep["max_free"] <= 1 + 1e-6
        if res.noise == "all":
            rep["ok"] = rep["ok"] and min_eig >= -1e-7
        else:
            rep["min_noise"] = min(vals)
            rep["ok"] = rep["ok"] and rep["min_noise"] >= -1e-6
        return rep
    target = 1.0 - res.value
    rep = {"kind": "weight", "binding": binding, "target": target, "min_free": min(vals),
           "min_eig": min_eig, "binding_error": abs(binding - target)}
    rep["ok"] = rep["binding_error"] <= 1e-6 and rep["min_free"] >= 1 - 1e-6 and min_eig >= -1e-7
    return rep


def as_choi(x) -> np.ndarray:
    return x.choi if isinstance(x, ChoiChannel) else np.asarray(x, dtype=complex)
