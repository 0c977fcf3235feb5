"""Truncation-based approximation of the quantifiers.

A :class:`TruncationScheme` fixes a finite ambient cutoff ``D``, nested level
subspaces ``H_n = span{|0>, ..., |n-1>}`` and an anchor state ``rho0``
supported in the first level.  The truncation maps are

``alpha_n(rho) = P_n rho P_n + tr[rho P_n^perp] rho0``  (input side)
``beta_n``  the same map used on output factors.

Objects are truncated factor by factor: a factor is *truncated* when its
dimension equals the ambient cutoff (continuous-variable stand-in), other
factors are kept.  Level problems are solved on the compressed level space:
an input factor is restricted to ``H_n`` (``alpha_n`` acts as the identity
there and maps everything into ``H_n``), an output factor is mapped by
``beta_n`` and compressed to ``H_n``.
"""

from __future__ import annotations

import csv
import io as _io
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import freesets as fsets
from . import measures, sdp
from .games import QuantumGame, free_payoff_extremum, payoff, tuple_payoff, witness_to_game
from .linalg import NumericalError, ValidationError, hermitize, superop_from_function
from .quantum import ChoiChannel, density_matrix

log = logging.getLogger(__name__)

MONOTONE_TOL = 1e-7
UPPER_TOL = 1e-6
FAITHFUL_EPS = 1e-6


@dataclass(frozen=True, eq=False)
class TruncationScheme:
    """Nested projections ``P_n`` with anchor ``rho0``.

    Parameters
    ----------
    ambient_dim : int
        Cutoff dimension standing in for the infinite-dimensional space.
    levels : sequence of int
        Strictly increasing level dimensions ``n <= ambient_dim``.
    anchor : array, optional
        Anchor state on the ambient space, supported in the first level.
        Defaults to the vacuum ``|0><0|``.
    faithful : bool
        Mix the anchor with ``FAITHFUL_EPS`` of the maximally mixed state on
        the first level so that faithful inputs stay full rank.
    """

    ambient_dim: int
    levels: tuple
    anchor: np.ndarray | None = None
    faithful: bool = False
    side: str = "output"

    def __post_init__(self):
        d = int(self.ambient_dim)
        levels = tuple(int(n) for n in self.levels)
        if not levels:
            raise ValidationError("at least one truncation level is required")
        if any(b <= a for a, b in zip(levels, levels[1:])):
            raise ValidationError(f"levels must be strictly increasing, got {list(levels)}")
        if levels[0] < 1 or levels[-1] > d:
            raise ValidationError(f"levels must lie in 1..{d}, got {list(levels)}")
        if self.side not in ("input", "output"):
            raise ValidationError("side must be 'input' or 'output'")
        if self.anchor is None:
            rho0 = np.zeros((d, d), dtype=complex)
            rho0[0, 0] = 1.0
        else:
            rho0 = np.asarray(self.anchor, dtype=complex)
            if rho0.shape == (levels[0], levels[0]):
                rho0 = _pad(rho0, d)
            rho0 = density_matrix(rho0)
            if rho0.shape != (d, d):
                raise ValidationError(f"anchor must be {d}x{d} (or {levels[0]}x{levels[0]})")
            outside = rho0.copy()
            outside[: levels[0], : levels[0]] = 0
            if np.max(np.abs(outside)) >= 1e-12:
                raise ValidationError("anchor must be supported in the first level")
        if self.faithful:
            l0 = levels[0]
            mix = np.zeros((d, d), dtype=complex)
            mix[:l0, :l0] = np.eye(l0) / l0
            rho0 = (1 - FAITHFUL_EPS) * rho0 + FAITHFUL_EPS * mix
        rho0 = hermitize(rho0)
        rho0.setflags(write=False)
        object.__setattr__(self, "ambient_dim", d)
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "anchor", rho0)

    def check_level(self, n: int) -> int:
        if n not in self.levels:
            raise ValidationError(f"level {n} is not one of {list(self.levels)}")
        return n

    def projector(self, n: int) -> np.ndarray:
        p = np.zeros((self.ambient_dim, self.ambient_dim))
        p[:n, :n] = np.eye(n)
        return p

    def anchor_at(self, n: int) -> np.ndarray:
        """Anchor in level-``n`` coordinates."""
        return self.anchor[:n, :n]

    def apply(self, n: int, rho: np.ndarray) -> np.ndarray:
        """``alpha_n(rho)`` on the ambient space."""
        self.check_level(n)
        return _pad(self.compress(n, rho), self.ambient_dim)

    def compress(self, n: int, rho: np.ndarray) -> np.ndarray:
        """``alpha_n(rho)`` in level-``n`` coordinates."""
        rho = np.asarray(rho, dtype=complex)
        if rho.shape != (self.ambient_dim, self.ambient_dim):
            raise ValidationError(f"operator must be {self.ambient_dim}x{self.ambient_dim}")
        return _truncate_factor(rho, [self.ambient_dim], 0, n, self.anchor_at(n))

    def adjoint(self, n: int, effect: np.ndarray) -> np.ndarray:
        """``beta_n^*`` of a level-``n`` operator, as an ambient operator."""
        return _adjoint_factor(np.asarray(effect, dtype=complex), [n], 0, self.ambient_dim,
                               self.anchor_at(n))

    def to_json(self) -> dict:
        from .io import matrix_to_json

        return {"ambient_dim": self.ambient_dim, "levels": list(self.levels),
                "anchor": matrix_to_json(self.anchor), "faithful": self.faithful}


def _pad(m: np.ndarray, d: int) -> np.ndarray:
    out = np.zeros((d, d), dtype=complex)
    n = m.shape[0]
    out[:n, :n] = m
    return out


def _truncate_factor(m: np.ndarray, dims: list[int], f: int, n: int,
                     anchor: np.ndarray | None) -> np.ndarray:
    """Compress factor ``f`` to its first ``n`` levels.

    With ``anchor`` the weight outside the level is moved onto ``anchor``
    (output truncation ``beta_n``); without it the factor is only projected.
    """
    k = len(dims)
    t = m.reshape(dims + dims)
    t = np.moveaxis(t, (f, k + f), (-2, -1))
    out = t[..., :n, :n].copy()
    if anchor is not None:
        leak = np.einsum("...jj->...", t[..., n:, n:])
        out += leak[..., None, None] * anchor
    out = np.moveaxis(out, (-2, -1), (f, k + f))
    new_dims = list(dims)
    new_dims[f] = n
    size = int(np.prod(new_dims))
    return out.reshape(size, size)


def _adjoint_factor(m: np.ndarray, dims: list[int], f: int, d: int, anchor: np.ndarray) -> np.ndarray:
    """``beta_n^*`` on factor ``f`` (level dim ``dims[f]``) of an effect operator."""
    k = len(dims)
    n = dims[f]
    t = np.moveaxis(m.reshape(dims + dims), (f, k + f), (-2, -1))
    out = np.zeros(t.shape[:-2] + (d, d), dtype=complex)
    out[..., :n, :n] = t
    weight = np.einsum("...ij,ji->...", t, anchor)
    idx = np.arange(n, d)
    out[..., idx, idx] += weight[..., None]
    out = np.moveaxis(out, (-2, -1), (f, k + f))
    new_dims = list(dims)
    new_dims[f] = d
    size = int(np.prod(new_dims))
    return out.reshape(size, size)


def _embed_factor(m: np.ndarray, dims: list[int], f: int, d: int) -> np.ndarray:
    """Pad factor ``f`` of ``m`` with zeros up to dimension ``d``."""
    k = len(dims)
    n = dims[f]
    t = np.moveaxis(m.reshape(dims + dims), (f, k + f), (-2, -1))
    out = np.zeros(t.shape[:-2] + (d, d), dtype=complex)
    out[..., :n, :n] = t
    out = np.moveaxis(out, (-2, -1), (f, k + f))
    new_dims = list(dims)
    new_dims[f] = d
    size = int(np.prod(new_dims))
    return out.reshape(size, size)


# ---------------------------------------------------------------------------
# factor layouts of the supported free sets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _Factor:
    role: str  # "in" or "out"
    dim: int
    truncated: bool


def _layout(fs: fsets.FreeSet, d: int, truncate=None) -> list[list[_Factor]]:
    """Factors of every component (input factors first), with truncation flags."""
    if isinstance(fs, (fsets.Incoherent, fsets.GroupSymmetric)):
        comps = [[("out", fs.dim)]]
    elif isinstance(fs, fsets.PptSeparable):
        comps = [[("out", fs.dim_a), ("out", fs.dim_b)]]
    elif isinstance(fs, fsets.EntanglementBreakingPpt):
        comps = [[("in", fs.dim_in), ("out", fs.dim_out)]]
    elif isinstance(fs, fsets.CompatibleTuple):
        comps = [[("in", fs.dim_in), ("out", o)] for o in fs.dims_out]
    elif isinstance(fs, fsets.MarginalCompatible):
        comps = [[("out", fs.shared), ("out", e)] for e in fs.envs]
    else:
        raise ValidationError(f"free set {fs.kind!r} does not support truncation")
    if truncate is None:
        flags = [[dim == d for _, dim in c] for c in comps]
    else:
        flags = [list(truncate)] * len(comps) if not isinstance(truncate[0], (list, tuple)) else [list(t) for t in truncate]
        if any(len(fl) != len(c) for fl, c in zip(flags, comps)) or len(flags) != len(comps):
            raise ValidationError("truncate flags do not match the factor layout")
        for fl, c in zip(flags, comps):
            if any(t and dim != d for t, (_, dim) in zip(fl, c)):
                raise ValidationError(f"only factors of the ambient dimension {d} can be truncated")
    out = [[_Factor(r, dim, bool(t)) for (r, dim), t in zip(c, fl)] for c, fl in zip(comps, flags)]
    if not any(f.truncated for c in out for f in c):
        raise ValidationError(f"no factor of {fs.kind} has the ambient dimension {d}")
    return out


def _level_dim(f: _Factor, n: int) -> int:
    return n if f.truncated else f.dim


def level_free_set(fs: fsets.FreeSet, scheme: TruncationScheme, n: int, truncate=None) -> fsets.FreeSet:
    """Free set used at level ``n`` (on compressed level objects)."""
    scheme.check_level(n)
    lay = _layout(fs, scheme.ambient_dim, truncate)
    c0 = [_level_dim(f, n) for f in lay[0]]
    if isinstance(fs, fsets.Incoherent):
        return fsets.Incoherent(c0[0])
    if isinstance(fs, fsets.PptSeparable):
        return fsets.PptSeparable(c0[0], c0[1])
    if isinstance(fs, fsets.EntanglementBreakingPpt):
        return fsets.EntanglementBreakingPpt(c0[0], c0[1])
    if isinstance(fs, fsets.CompatibleTuple):
        return fsets.CompatibleTuple(c0[0], tuple(_level_dim(c[1], n) for c in lay))
    if isinstance(fs, fsets.MarginalCompatible):
        return fsets.MarginalCompatible(c0[0], tuple(_level_dim(c[1], n) for c in lay))
    # group-symmetric: image of the ambient cone under the truncation map
    if n == scheme.ambient_dim:
        return fs
    sup = superop_from_function(lambda x: scheme.compress(n, x), scheme.ambient_dim)
    return fsets.ImageFreeSet(fs, sup, (1, n))


def _truncate_matrix(m: np.ndarray, comp: list[_Factor], n: int, scheme: TruncationScheme) -> np.ndarray:
    dims = [f.dim for f in comp]
    projected = False
    for i, f in enumerate(comp):
        if not f.truncated:
            continue
        anchor = scheme.anchor_at(n) if f.role == "out" else None
        m = _truncate_factor(m, dims, i, n, anchor)
        dims[i] = n
        projected = projected or f.role == "in"
    if projected:
        m = m / np.trace(m).real
    return hermitize(m)


def truncate_object(x, fs: fsets.FreeSet, scheme: TruncationScheme, n: int, truncate=None):
    """``beta_n o x o alpha_n`` on the level space (states: ``beta_n(x)``).

    Returns a density matrix, a :class:`ChoiChannel` or a list of them,
    matching the shape of ``x``.
    """
    scheme.check_level(n)
    lay = _layout(fs, scheme.ambient_dim, truncate)
    mats = fs.coerce(x)
    out = []
    for m, comp in zip(mats, lay):
        t = _truncate_matrix(m, comp, n, scheme)
        d_in = int(np.prod([_level_dim(f, n) for f in comp if f.role == "in"]))
        out.append(ChoiChannel(d_in, t.shape[0] // d_in, t) if d_in > 1 or any(f.role == "in" for f in comp) else t)
    return out if fs.is_tuple or isinstance(x, (list, tuple)) else out[0]


def embed_object(y, fs: fsets.FreeSet, scheme: TruncationScheme, n: int, truncate=None):
    """Ambient form of a level object: ``Gamma o alpha_n`` with outputs padded.

    Channels must have a single input factor.
    """
    lay = _layout(fs, scheme.ambient_dim, truncate)
    level = level_free_set(fs, scheme, n, truncate)
    mats = level.coerce(y)
    d = scheme.ambient_dim
    out = []
    for m, comp in zip(mats, lay):
        dims = [_level_dim(f, n) for f in comp]
        for i, f in enumerate(comp):
            if f.truncated and f.role == "out":
                m = _embed_factor(m, dims, i, d)
                dims[i] = d
        ins = [i for i, f in enumerate(comp) if f.role == "in"]
        if ins:
            if len(ins) != 1 or ins[0] != 0:
                raise ValidationError("embedding supports a single leading input factor")
            f = comp[0]
            d_out = int(np.prod(dims[1:]))
            if f.truncated:
                # J = (n/D) pad(J_n) + (1/D) sum_{i>=n} |i><i| (x) Gamma(rho0)
                j4 = m.reshape(n, d_out, n, d_out)
                gamma_rho0 = n * np.einsum("ij,ikjl->kl", scheme.anchor_at(n), j4)
                big = np.zeros((d, d_out, d, d_out), dtype=complex)
                big[:n, :, :n, :] = j4 * (n / d)
                for i in range(n, d):
                    big[i, :, i, :] = gamma_rho0 / d
                m = big.reshape(d * d_out, d * d_out)
                dims[0] = d
            out.append(ChoiChannel(dims[0], d_out, hermitize(m)))
        else:
            out.append(hermitize(m))
    return out if fs.is_tuple else out[0]


def truncation_channel(scheme: TruncationScheme, n: int) -> ChoiChannel:
    """``alpha_n`` as a channel on the ambient space."""
    scheme.check_level(n)
    d = scheme.ambient_dim
    j = np.zeros((d, d, d, d), dtype=complex)
    for i in range(d):
        for k in range(d):
            if i < n and k < n:
                j[i, i, k, k] = 1.0
            elif i == k:
                j[i, :, i, :] += scheme.anchor
    return ChoiChannel(d, d, hermitize(j.reshape(d * d, d * d) / d))


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

@dataclass
class ApproxSweepResult:
    kind: str
    noise: str
    levels: list
    values: list
    statuses: list
    gaps: list
    results: list = field(repr=False)
    monotone_ok: list = field(default_factory=list)
    monotone_violations: list = field(default_factory=list)
    ambient_value: float | None = None
    upper_bound_ok: bool | None = None
    scheme: TruncationScheme | None = field(default=None, repr=False)
    free_set: fsets.FreeSet | None = field(default=None, repr=False)
    truncate: object = field(default=None, repr=False)
    errors: list = field(default_factory=list)

    @property
    def hard_failure(self) -> bool:
        return bool(self.monotone_violations) or self.upper_bound_ok is False

    @property
    def limit_estimate(self) -> float:
        return self.values[-1]

    @property
    def witnesses(self) -> list:
        return [None if r is None else r.witness for r in self.results]

    def to_csv(self) -> str:
        buf = _io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["level", "value", "status", "gap", "monotone_ok"])
        for row in zip(self.levels, self.values, self.statuses, self.gaps, self.monotone_ok):
            lvl, val, st, gap, ok = row
            w.writerow([lvl, _fmt(val), st, _fmt(gap), str(bool(ok)).lower()])
        return buf.getvalue()

    def to_json(self, emit_witness: bool = False) -> dict:
        doc = {
            "quantity": self.kind,
            "noise": self.noise,
            "levels": list(self.levels),
            "values": list(self.values),
            "statuses": list(self.statuses),
            "gaps": list(self.gaps),
            "monotone_ok": list(self.monotone_ok),
            "monotone_violations": self.monotone_violations,
            "ambient_value": self.ambient_value,
            "upper_bound_ok": self.upper_bound_ok,
            "limit_estimate": self.limit_estimate,
            "hard_failure": self.hard_failure,
            "errors": list(self.errors),
        }
        if emit_witness:
            doc["levels_detail"] = [None if r is None else r.to_json(True) for r in self.results]
        return doc


def _fmt(v) -> str:
    if v is None:
        return ""
    if math.isinf(v):
        return "inf"
    return f"{round(float(v), 9):.9f}"


def _solve(kind, x, fs, noise, opts):
    if kind == "robustness":
        return measures.robustness(x, fs, noise, opts)
    if kind == "weight":
        return measures.weight(x, fs, opts)
    raise ValidationError(f"kind must be 'robustness' or 'weight', got {kind!r}")


def approximate_quantifier(x, fs: fsets.FreeSet, noise: str, scheme: TruncationScheme,
                           kind: str = "robustness", opts: sdp.SolverOptions | None = None,
                           ambient_value: float | None = None, compute_ambient: bool = True,
                           jobs: int = 1, truncate=None) -> ApproxSweepResult:
    """Quantifier of ``beta_n o x o alpha_n`` against the level-``n`` free set.

    Both quantifiers are expected to be non-decreasing in ``n`` and bounded
    by the ambient value; violations beyond ``MONOTONE_TOL`` / ``UPPER_TOL``
    are recorded and flag a hard failure.
    """
    if kind not in ("robustness", "weight"):
        raise ValidationError(f"kind must be 'robustness' or 'weight', got {kind!r}")
    _layout(fs, scheme.ambient_dim, truncate)

    def run(n):
        try:
            lvl_fs = level_free_set(fs, scheme, n, truncate)
            return _solve(kind, truncate_object(x, fs, scheme, n, truncate), lvl_fs, noise, opts), None
        except (ValidationError, NumericalError, np.linalg.LinAlgError) as exc:
            log.warning("level %d failed: %s", n, exc)
            return None, f"level {n}: {exc}"

    levels = list(scheme.levels)
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outs = list(pool.map(run, levels))
    else:
        outs = [run(n) for n in levels]
    results = [r for r, _ in outs]
    errors = [e for _, e in outs if e]
    values = [math.nan if r is None else r.value for r in results]
    statuses = ["error" if r is None else r.status for r in results]
    gaps = [None if r is None else r.gap for r in results]

    monotone_ok = [True]
    violations = []
    last = None
    for n, v in zip(levels, values):
        if last is not None:
            ok = not math.isnan(v) and not (v < last[1] - MONOTONE_TOL)
            if not ok:
                violations.append({"level": n, "previous_level": last[0], "previous": last[1], "value": v})
            monotone_ok.append(ok)
        if not math.isnan(v):
            last = (n, v)

    if ambient_value is None and compute_ambient:
        if levels[-1] == scheme.ambient_dim and results[-1] is not None:
            ambient_value = results[-1].value
        else:
            ambient_value = _solve(kind, x, fs, noise, opts).value
    upper_ok = None
    if ambient_value is not None:
        upper_ok = all(math.isnan(v) or v <= ambient_value + UPPER_TOL for v in values)
    return ApproxSweepResult(kind, noise, levels, values, statuses, gaps, results, monotone_ok,
                             violations, ambient_value, upper_ok, scheme, fs, truncate, errors)


def game_certificate_lift(sweep: ApproxSweepResult, level: int) -> list[QuantumGame]:
    """Lift the level-``n`` witness games to the ambient space.

    Inputs are embedded (``alpha_n`` fixes them) and effects are pulled back
    with ``beta_n^*``, so the ambient payoff of ``x`` equals the level payoff
    of the truncated object.  Returns one game per component.
    """
    if level not in sweep.levels:
        raise ValidationError(f"level {level} was not part of the sweep")
    res = sweep.results[sweep.levels.index(level)]
    if res is None or res.witness is None:
        raise ValidationError(f"level {level} has no witness")
    scheme, fs = sweep.scheme, sweep.free_set
    lay = _layout(fs, scheme.ambient_dim, sweep.truncate)
    lvl_fs = level_free_set(fs, scheme, level, sweep.truncate)
    games = []
    for i, (y, comp) in enumerate(zip(res.witness, lay)):
        g0 = witness_to_game(y, lvl_fs.slot_dims[i])
        games.append(lift_game(g0, comp, scheme, level))
    return games


def lift_game(g0: QuantumGame, comp, scheme: TruncationScheme, n: int) -> QuantumGame:
    ins = [f for f in comp if f.role == "in"]
    outs = [f for f in comp if f.role == "out"]
    in_dims = [_level_dim(f, n) for f in ins] or [1]
    out_dims = [_level_dim(f, n) for f in outs]
    d = scheme.ambient_dim
    inputs = []
    for rho in g0.inputs:
        dims = list(in_dims)
        for i, f in enumerate(ins):
            if f.truncated:
                rho = _embed_factor(rho, dims, i, d)
                dims[i] = d
        inputs.append(rho)
    povm = []
    for m in g0.povm:
        dims = list(out_dims)
        for i, f in enumerate(outs):
            if f.truncated:
                m = _adjoint_factor(m, dims, i, d, scheme.anchor_at(n))
                dims[i] = d
        povm.append(hermitize(m))
    return QuantumGame(tuple(inputs), tuple(povm), g0.scores.copy())


def lifted_ratio(x, sweep: ApproxSweepResult, level: int) -> dict:
    """Ratio of the lifted game on ``x`` over the best ambient free object."""
    games = game_certificate_lift(sweep, level)
    fs = sweep.free_set
    xs = list(x) if fs.is_tuple else [x]
    num = tuple_payoff(xs, games)
    sense = "max" if sweep.kind == "robustness" else "min"
    den, status = free_payoff_extremum(fs, games, sense)
    value = sweep.values[sweep.levels.index(level)]
    target = 1 + value if sweep.kind == "robustness" else 1 - value
    ratio = num / den if den > 1e-10 else None
    level_obj = truncate_object(x, fs, sweep.scheme, level, sweep.truncate)
    level_objs = level_obj if fs.is_tuple else [level_obj]
    lvl_fs = level_free_set(fs, sweep.scheme, level, sweep.truncate)
    level_games = [witness_to_game(y, lvl_fs.slot_dims[i])
                   for i, y in enumerate(sweep.results[sweep.levels.index(level)].witness)]
    level_payoff = sum(payoff(o, g) for o, g in zip(level_objs, level_games))
    povm_error = max(np.max(np.abs(sum(g.povm) - np.eye(g.dim_out))) for g in games)
    return {"level": level, "numerator": num, "denominator": den, "denominator_status": status,
            "ratio": ratio, "target": target,
            "error": None if ratio is None else abs(ratio - target),
            "level_payoff": level_payoff, "payoff_error": abs(num - level_payoff),
            "povm_error": float(povm_error)}
