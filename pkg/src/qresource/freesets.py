"""SDP descriptions of free cones.

Every free set acts on a list of *slots*, one per component of the object it
classifies.  A slot holds the object's matrix representation: the density
matrix of a state, the normalised Choi matrix of a channel.  ``constrain``
adds equalities (and auxiliary PSD blocks) to an :class:`~qresource.sdp.SdpProblem`
forcing the slot expressions into ``cone(F) = {t*x : t >= 0, x in F}``.

Channel cones include the scaled trace-preservation condition
``tr_out X = (tr X / d_in) * I``, so a slot in the cone is a non-negative
multiple of a free channel.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from . import sdp
from .linalg import (
    ValidationError,
    as_matrix,
    hermitize,
    is_hermitian,
    min_eigenvalue,
    partial_trace,
    partial_trace_map,
    partial_transpose,
    partial_transpose_map,
    conjugation_map,
    trace_map,
)
from .quantum import ChoiChannel, random_channel, random_povm, random_state

log = logging.getLogger(__name__)

FREE = "free"
NOT_FREE = "not_free"
RELAXATION_MEMBER = "relaxation_member"

EXACT = "exact"
OUTER = "outer-relaxation"

MEMBERSHIP_TOL = 1e-7


def _tp_map(dim_in: int, dim_out: int) -> sp.csr_matrix:
    """``X -> tr_out X - (tr X / d_in) I``; zero for states."""
    n = dim_in * dim_out
    return (partial_trace_map([dim_in, dim_out], [0]) - trace_map(n, dim_in) / dim_in).tocsr()


class FreeSet:
    """Base class; subclasses fill in the cone constraints."""

    kind: str = ""
    #: True when membership of the cone already forces every slot PSD
    implies_psd: bool = False

    @property
    def arity(self) -> int:
        return len(self.slot_dims)

    @property
    def slot_dims(self) -> list[tuple[int, int]]:
        """``(dim_in, dim_out)`` of each component."""
        raise NotImplementedError

    @property
    def is_tuple(self) -> bool:
        return False

    @property
    def exactness(self) -> str:
        return EXACT

    def slot_size(self, i: int) -> int:
        d_in, d_out = self.slot_dims[i]
        return d_in * d_out

    # -- cone constraints ---------------------------------------------------

    def constrain(self, problem: sdp.SdpProblem, slots: Sequence[sdp.Affine],
                  require_psd: bool = True, tag: str = "cone") -> list[int]:
        """Force ``slots`` into the cone; return the equality group ids."""
        self._check_slots(slots)
        groups = self._constrain(problem, slots, tag)
        if require_psd and not self.implies_psd:
            for i, s in enumerate(slots):
                if s.is_block:
                    continue
                blk = problem.var(f"{tag}_psd{i}", s.dim)
                problem.hint(blk, lambda ev, s=s: ev(s))
                groups.append(problem.equal(blk, s, f"{tag}_psd{i}", tag))
        return groups

    cone_constraints = constrain

    def _constrain(self, problem, slots, tag) -> list[int]:
        raise NotImplementedError

    def _check_slots(self, slots):
        if len(slots) != self.arity:
            raise ValidationError(f"{self.kind} expects {self.arity} component(s), got {len(slots)}")
        for i, s in enumerate(slots):
            if s.dim != self.slot_size(i):
                raise ValidationError(
                    f"component {i} has dimension {s.dim}, {self.kind} expects {self.slot_size(i)}"
                )

    # -- points ---------------------------------------------------------------

    def interior_point(self) -> list[np.ndarray]:
        """Full-rank member (maximally mixed states / fully depolarising channels)."""
        return [np.eye(self.slot_size(i), dtype=complex) / self.slot_size(i) for i in range(self.arity)]

    def sample(self, rng: np.random.Generator) -> list[np.ndarray]:
        raise NotImplementedError

    # -- membership ---------------------------------------------------------

    def coerce(self, x) -> list[np.ndarray]:
        """Matrix representation of each component of ``x``."""
        if isinstance(x, (list, tuple)):
            items = list(x)
        else:
            items = [x]
        out = []
        for it in items:
            m = it.choi if isinstance(it, ChoiChannel) else as_matrix(it)
            out.append(np.asarray(m, dtype=complex))
        if len(out) != self.arity:
            raise ValidationError(f"{self.kind} expects {self.arity} component(s), got {len(out)}")
        for i, m in enumerate(out):
            if m.shape != (self.slot_size(i), self.slot_size(i)):
                raise ValidationError(
                    f"component {i} has shape {m.shape}, {self.kind} expects dimension {self.slot_size(i)}"
                )
            if not is_hermitian(m, 1e-9):
                raise ValidationError(f"component {i} is not Hermitian")
        return out

    def violation(self, xs: list[np.ndarray]) -> float:
        """Non-negative distance-like score; ~0 exactly on members."""
        raise NotImplementedError

    def membership(self, x, tol: float = MEMBERSHIP_TOL) -> str:
        xs = self.coerce(x)
        norm = []
        for m in xs:
            tr = np.trace(m).real
            if tr <= 0:
                return NOT_FREE
            norm.append(hermitize(m) / tr)
        if self.violation(norm) > tol:
            return NOT_FREE
        return RELAXATION_MEMBER if self.exactness == OUTER else FREE

    def is_member(self, x, tol: float = MEMBERSHIP_TOL) -> bool:
        return self.membership(x, tol) != NOT_FREE

    def to_json(self) -> dict:
        raise NotImplementedError


def _psd_violation(m: np.ndarray) -> float:
    return max(0.0, -min_eigenvalue(hermitize(m), 1e-6))


def _distance_membership(fs: FreeSet, xs: list[np.ndarray]) -> float:
    """Trace-norm distance from ``xs`` to the cone (solved as an SDP)."""
    p = sdp.SdpProblem()
    slots = []
    for i, x in enumerate(xs):
        pos = p.var(f"pos{i}", x.shape[0])
        neg = p.var(f"neg{i}", x.shape[0])
        slots.append(sdp.Affine.constant(x) - pos + neg)
        p.add_objective_trace(pos)
        p.add_objective_trace(neg)
    fs.constrain(p, slots, require_psd=True, tag="cone")
    sol = sdp.solve(p)
    if sol.status != sdp.OPTIMAL:
        log.warning("membership SDP ended with status %s", sol.status)
        return np.inf if sol.status == sdp.INFEASIBLE else max(sol.primal_value, 0.0)
    return max(sol.primal_value, 0.0)


# ---------------------------------------------------------------------------
# state sets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Incoherent(FreeSet):
    """States diagonal in the computational basis."""

    dim: int
    kind = "incoherent"

    def __post_init__(self):
        if self.dim < 1:
            raise ValidationError("dimension must be positive")

    @property
    def slot_dims(self):
        return [(1, self.dim)]

    def _offdiag(self):
        mask = (1.0 - np.eye(self.dim)).reshape(-1).astype(complex)
        return sp.diags(mask, format="csr")

    def _constrain(self, problem, slots, tag):
        if self.dim == 1:
            return []
        return [problem.add_equality(slots[0].map(self._offdiag()), f"{tag}_offdiag", tag)]

    def sample(self, rng):
        p = rng.dirichlet(np.ones(self.dim))
        return [np.diag(p).astype(complex)]

    def violation(self, xs):
        x = xs[0]
        off = np.max(np.abs(x - np.diag(np.diag(x))), initial=0.0)
        return max(off, _psd_violation(x))

    def to_json(self):
        return {"kind": self.kind, "dim": self.dim}


@dataclass(frozen=True)
class PptSeparable(FreeSet):
    """Bipartite states with positive partial transpose (separability surrogate)."""

    dim_a: int
    dim_b: int
    kind = "ppt_separable"

    def __post_init__(self):
        if self.dim_a < 1 or self.dim_b < 1:
            raise ValidationError("dimensions must be positive")

    @property
    def slot_dims(self):
        return [(1, self.dim_a * self.dim_b)]

    @property
    def exactness(self):
        return OUTER if self.dim_a * self.dim_b > 6 else EXACT

    def _constrain(self, problem, slots, tag):
        pt = slots[0].map(partial_transpose_map([self.dim_a, self.dim_b], 1))
        q = problem.var(f"{tag}_pt", pt.dim)
        problem.hint(q, lambda ev: ev(pt))
        return [problem.equal(q, pt, f"{tag}_pt", tag)]

    def sample(self, rng, terms: int = 4):
        w = rng.dirichlet(np.ones(terms))
        rho = sum(wk * np.kron(random_state(self.dim_a, rng, 1), random_state(self.dim_b, rng, 1)) for wk in w)
        return [hermitize(rho)]

    def violation(self, xs):
        x = xs[0]
        return max(_psd_violation(x), _psd_violation(partial_transpose(x, [self.dim_a, self.dim_b], 1)))

    def to_json(self):
        return {"kind": self.kind, "dims": [self.dim_a, self.dim_b]}


def group_closure(generators: Sequence[np.ndarray], limit: int = 2048) -> list[np.ndarray]:
    """All products of the generators (finite group assumed)."""
    d = generators[0].shape[0]
    elems = [np.eye(d, dtype=complex)]
    frontier = list(elems)
    while frontier:
        nxt = []
        for g in frontier:
            for u in generators:
                h = u @ g
                if not any(np.max(np.abs(h - e)) < 1e-9 for e in elems):
                    elems.append(h)
                    nxt.append(h)
                    if len(elems) > limit:
                        raise ValidationError(f"generated group exceeds {limit} elements; is it finite?")
        frontier = nxt
    return elems


@dataclass(frozen=True, eq=False)
class GroupSymmetric(FreeSet):
    """States commuting with a finite unitary representation."""

    generators: tuple
    kind = "group_symmetric"

    def __post_init__(self):
        gens = tuple(as_matrix(u) for u in self.generators)
        if not gens:
            raise ValidationError("at least one generator is required")
        d = gens[0].shape[0]
        for u in gens:
            if u.shape != (d, d):
                raise ValidationError("generators have inconsistent dimensions")
            if np.max(np.abs(u @ u.conj().T - np.eye(d))) > 1e-10:
                raise ValidationError("generator is not unitary to 1e-10")
        object.__setattr__(self, "generators", gens)

    @property
    def dim(self) -> int:
        return self.generators[0].shape[0]

    @property
    def slot_dims(self):
        return [(1, self.dim)]

    def _constrain(self, problem, slots, tag):
        ident = sp.identity(self.dim**2, dtype=complex, format="csr")
        return [
            problem.add_equality(slots[0].map(conjugation_map(u) - ident), f"{tag}_sym{k}", tag)
            for k, u in enumerate(self.generators)
        ]

    def twirl(self, rho: np.ndarray) -> np.ndarray:
        elems = group_closure(self.generators)
        return hermitize(sum(u @ rho @ u.conj().T for u in elems) / len(elems))

    def sample(self, rng):
        return [self.twirl(random_state(self.dim, rng))]

    def violation(self, xs):
        x = xs[0]
        comm = max(np.max(np.abs(u @ x @ u.conj().T - x)) for u in self.generators)
        return max(comm, _psd_violation(x))

    def to_json(self):
        from .io import matrix_to_json

        return {"kind": self.kind, "dim": self.dim, "generators": [matrix_to_json(u) for u in self.generators]}


# ---------------------------------------------------------------------------
# channel sets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EntanglementBreakingPpt(FreeSet):
    """Channels with PPT Choi matrix (entanglement-breaking surrogate)."""

    dim_in: int
    dim_out: int
    kind = "entanglement_breaking_ppt"

    @property
    def slot_dims(self):
        return [(self.dim_in, self.dim_out)]

    @property
    def exactness(self):
        return OUTER if self.dim_in * self.dim_out > 6 else EXACT

    def _constrain(self, problem, slots, tag):
        x = slots[0]
        pt = x.map(partial_transpose_map([self.dim_in, self.dim_out], 1))
        q = problem.var(f"{tag}_pt", pt.dim)
        problem.hint(q, lambda ev: ev(pt))
        groups = [problem.equal(q, pt, f"{tag}_pt", tag)]
        if self.dim_in > 1:
            groups.append(problem.add_equality(x.map(_tp_map(self.dim_in, self.dim_out)), f"{tag}_tp", tag))
        return groups

    def sample(self, rng, outcomes: int = 3):
        povm = random_povm(self.dim_in, outcomes, rng)
        states = [random_state(self.dim_out, rng) for _ in range(outcomes)]
        choi = sum(np.kron(m.T, s) for m, s in zip(povm, states)) / self.dim_in
        return [hermitize(choi)]

    def violation(self, xs):
        x = xs[0]
        tp = np.max(np.abs(partial_trace(x, [self.dim_in, self.dim_out], [0]) - np.eye(self.dim_in) / self.dim_in))
        pt = partial_transpose(x, [self.dim_in, self.dim_out], 1)
        return max(tp, _psd_violation(x), _psd_violation(pt))

    def to_json(self):
        return {"kind": self.kind, "dim_in": self.dim_in, "dim_out": self.dim_out}


# ---------------------------------------------------------------------------
# tuple sets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CompatibleTuple(FreeSet):
    """Channel tuples that are marginals of one joint channel."""

    dim_in: int
    dims_out: tuple
    kind = "compatible_tuple"
    implies_psd = True

    def __post_init__(self):
        object.__setattr__(self, "dims_out", tuple(int(d) for d in self.dims_out))
        if self.dim_in < 1 or not self.dims_out or min(self.dims_out) < 1:
            raise ValidationError("invalid dimensions for compatible_tuple")

    @property
    def slot_dims(self):
        return [(self.dim_in, d) for d in self.dims_out]

    @property
    def is_tuple(self):
        return True

    @property
    def joint_dims(self) -> list[int]:
        return [self.dim_in, *self.dims_out]

    def _constrain(self, problem, slots, tag):
        dims = self.joint_dims
        n = int(np.prod(dims))
        g = problem.var(f"{tag}_joint", n)
        # exact for slots proportional to the interior point
        problem.hint(g, lambda ev: np.trace(ev(slots[0])).real * np.eye(n) / n)
        groups = []
        if self.dim_in > 1:
            tp = (partial_trace_map(dims, [0]) - trace_map(n, self.dim_in) / self.dim_in).tocsr()
            groups.append(problem.add_equality(g.map(tp), f"{tag}_joint_tp", tag))
        for i, s in enumerate(slots):
            marg = g.map(partial_trace_map(dims, [0, i + 1]))
            groups.append(problem.equal(marg, s, f"{tag}_marg{i}", tag))
        return groups

    def marginals(self, joint: np.ndarray) -> list[np.ndarray]:
        return [partial_trace(joint, self.joint_dims, [0, i + 1]) for i in range(len(self.dims_out))]

    def sample(self, rng):
        joint = random_channel(self.dim_in, int(np.prod(self.dims_out)), rng)
        return [hermitize(m) for m in self.marginals(joint.choi)]

    def violation(self, xs):
        return _distance_membership(self, xs)

    def to_json(self):
        return {"kind": self.kind, "dim_in": self.dim_in, "dims_out": list(self.dims_out)}


@dataclass(frozen=True)
class MarginalCompatible(FreeSet):
    """State tuples on ``shared (x) env_i`` that are marginals of one global state."""

    shared: int
    envs: tuple
    kind = "marginal_compatible"
    implies_psd = True

    def __post_init__(self):
        object.__setattr__(self, "envs", tuple(int(d) for d in self.envs))
        if self.shared < 1 or not self.envs or min(self.envs) < 1:
            raise ValidationError("invalid dimensions for marginal_compatible")

    @property
    def slot_dims(self):
        return [(1, self.shared * e) for e in self.envs]

    @property
    def is_tuple(self):
        return True

    @property
    def global_dims(self) -> list[int]:
        return [self.shared, *self.envs]

    def _constrain(self, problem, slots, tag):
        dims = self.global_dims
        n = int(np.prod(dims))
        g = problem.var(f"{tag}_global", n)
        problem.hint(g, lambda ev: np.trace(ev(slots[0])).real * np.eye(n) / n)
        return [
            problem.equal(g.map(partial_trace_map(dims, [0, i + 1])), s, f"{tag}_marg{i}", tag)
            for i, s in enumerate(slots)
        ]

    def marginals(self, glob: np.ndarray) -> list[np.ndarray]:
        return [partial_trace(glob, self.global_dims, [0, i + 1]) for i in range(len(self.envs))]

    def sample(self, rng):
        return [hermitize(m) for m in self.marginals(random_state(int(np.prod(self.global_dims)), rng))]

    def violation(self, xs):
        return _distance_membership(self, xs)

    def to_json(self):
        return {"kind": self.kind, "shared": self.shared, "envs": list(self.envs)}


# ---------------------------------------------------------------------------
# image cones (used for truncated level sets)
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ImageFreeSet(FreeSet):
    """Image of a single-slot free set under a completely positive linear map.

    ``superop`` acts on the row-major ``vec`` of the base object and returns
    the ``vec`` of an ``out_dims`` object.
    """

    base: FreeSet
    superop: sp.csr_matrix
    out_dims: tuple
    implies_psd = True

    def __post_init__(self):
        if self.base.arity != 1:
            raise ValidationError("image cones are supported for single-component free sets only")
        n_out = self.out_dims[0] * self.out_dims[1]
        if self.superop.shape != (n_out**2, self.base.slot_size(0) ** 2):
            raise ValidationError("superoperator shape does not match the base set and output dims")

    @property
    def kind(self):  # type: ignore[override]
        return self.base.kind

    @property
    def slot_dims(self):
        return [tuple(self.out_dims)]

    @property
    def exactness(self):
        return self.base.exactness

    def _constrain(self, problem, slots, tag):
        y = problem.var(f"{tag}_pre", self.base.slot_size(0))
        t0 = self.base.interior_point()[0]
        scale = np.trace(self._apply(t0)).real
        problem.hint(y, lambda ev: np.trace(ev(slots[0])).real / scale * t0)
        groups = self.base.constrain(problem, [y], require_psd=True, tag=tag)
        groups.append(problem.equal(y.map(self.superop), slots[0], f"{tag}_image", tag))
        return groups

    def _apply(self, x):
        n = self.out_dims[0] * self.out_dims[1]
        return hermitize((self.superop @ x.reshape(-1)).reshape(n, n))

    def interior_point(self):
        pt = self._apply(self.base.interior_point()[0])
        return [pt / np.trace(pt).real]

    def sample(self, rng):
        pt = self._apply(self.base.sample(rng)[0])
        return [pt / np.trace(pt).real]

    def violation(self, xs):
        return _distance_membership(self, xs)

    def to_json(self):
        return {"kind": self.kind, "image_of": self.base.to_json()}


def membership_threshold(family, fs: FreeSet, lo: float = 0.0, hi: float = 1.0,
                         width: float = 1e-3) -> dict:
    """Bisect the boundary of ``{t : family(t) in F}`` on ``[lo, hi]``.

    ``family(lo)`` must be a member and ``family(hi)`` must not be.
    """
    if not fs.is_member(family(lo)):
        raise ValidationError(f"family({lo}) is not a member of {fs.kind}")
    if fs.is_member(family(hi)):
        raise ValidationError(f"family({hi}) is a member of {fs.kind}; no boundary in range")
    steps = 0
    while hi - lo > width:
        mid = 0.5 * (lo + hi)
        if fs.is_member(family(mid)):
            lo = mid
        else:
            hi = mid
        steps += 1
    return {"threshold": 0.5 * (lo + hi), "lower": lo, "upper": hi, "width": hi - lo, "steps": steps}
