"""States, POVMs and channels in normalised Choi form.

The Choi matrix of a channel ``L`` with input dimension ``d`` is

    J = (1/d) * sum_ij |i><j| (x) L(|i><j|),

input factor first, so ``tr J = 1``.  A state is the special case of a
channel with a one-dimensional input; :func:`as_channel` performs that
identification.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial
from typing import Sequence

import numpy as np

from .linalg import (
    PSD_TOL,
    ValidationError,
    as_matrix,
    hermitize,
    is_hermitian,
    min_eigenvalue,
    partial_trace,
    require_hermitian,
)

TRACE_TOL = 1e-10
TP_TOL = 1e-9


def _clean(m: np.ndarray) -> np.ndarray:
    """Re-Hermitise and drop eigenvalue noise below 1e-12."""
    m = hermitize(m)
    w, v = np.linalg.eigh(m)
    if w[0] < 0 and w[0] > -1e-12:
        w = np.where(np.abs(w) < 1e-12, np.clip(w, 0.0, None), w)
        m = hermitize((v * w) @ v.conj().T)
    return m


def density_matrix(rho, psd_tol: float = PSD_TOL) -> np.ndarray:
    """Validate and return ``rho`` as a density matrix."""
    rho = require_hermitian(rho, 1e-10, "density matrix")
    tr = np.trace(rho).real
    if abs(tr - 1.0) > TRACE_TOL:
        raise ValidationError(f"density matrix has trace {tr:.12g}, expected 1")
    lam = min_eigenvalue(rho, 1e-10)
    if lam < -psd_tol:
        raise ValidationError(f"density matrix is not PSD (min eigenvalue {lam:.3e})")
    return hermitize(rho)


def check_povm(effects: Sequence[np.ndarray], tol: float = TP_TOL) -> list[np.ndarray]:
    effects = [require_hermitian(e, 1e-10, "effect") for e in effects]
    if not effects:
        raise ValidationError("POVM needs at least one effect")
    d = effects[0].shape[0]
    for e in effects:
        if e.shape != (d, d):
            raise ValidationError("POVM effects have inconsistent dimensions")
        if min_eigenvalue(e, 1e-10) < -tol:
            raise ValidationError("POVM effect is not PSD")
    dev = np.max(np.abs(sum(effects) - np.eye(d)))
    if dev > tol:
        raise ValidationError(f"POVM effects do not sum to identity (deviation {dev:.3e})")
    return [hermitize(e) for e in effects]


@dataclass(frozen=True, eq=False)
class ChoiChannel:
    """Channel stored as its unit-trace Choi matrix (input factor first)."""

    dim_in: int
    dim_out: int
    choi: np.ndarray

    def __post_init__(self):
        j = require_hermitian(self.choi, 1e-10, "Choi matrix")
        n = self.dim_in * self.dim_out
        if j.shape != (n, n):
            raise ValidationError(f"Choi matrix shape {j.shape} does not match {self.dim_in}x{self.dim_out}")
        tr = np.trace(j).real
        if abs(tr - 1.0) > TRACE_TOL:
            raise ValidationError(f"Choi matrix has trace {tr:.12g}, expected 1")
        if min_eigenvalue(j, 1e-10) < -PSD_TOL:
            raise ValidationError("Choi matrix is not PSD (channel not completely positive)")
        marg = partial_trace(j, [self.dim_in, self.dim_out], [0])
        dev = np.max(np.abs(marg - np.eye(self.dim_in) / self.dim_in))
        if dev > TP_TOL:
            raise ValidationError(f"channel is not trace preserving (deviation {dev:.3e})")
        j = hermitize(j)
        j.setflags(write=False)
        object.__setattr__(self, "choi", j)

    @property
    def dims(self) -> tuple[int, int]:
        return self.dim_in, self.dim_out

    def __call__(self, rho) -> np.ndarray:
        return apply(self, rho)


def as_channel(x) -> ChoiChannel:
    """Return ``x`` as a channel; a density matrix becomes a 1 -> d channel."""
    if isinstance(x, ChoiChannel):
        return x
    rho = density_matrix(x)
    return ChoiChannel(1, rho.shape[0], rho)


def channel_from_kraus(kraus: Sequence[np.ndarray], tol: float = TP_TOL) -> ChoiChannel:
    ks = [as_matrix(k) for k in kraus]
    if not ks:
        raise ValidationError("empty Kraus set")
    d_out, d_in = ks[0].shape
    if any(k.shape != (d_out, d_in) for k in ks):
        raise ValidationError("Kraus operators have inconsistent shapes")
    dev = np.max(np.abs(sum(k.conj().T @ k for k in ks) - np.eye(d_in)))
    if dev > tol:
        raise ValidationError(f"Kraus set is not trace preserving (deviation {dev:.3e})")
    # column vector of (I (x) K)|Omega> for every Kraus operator
    vecs = np.stack([k.T.reshape(-1) for k in ks], axis=1)
    choi = vecs @ vecs.conj().T / d_in
    return ChoiChannel(d_in, d_out, hermitize(choi))


def apply(ch: ChoiChannel, rho) -> np.ndarray:
    """Schroedinger-picture action ``d_in * tr_in[(rho^T (x) I) J]``."""
    rho = as_matrix(rho)
    if rho.shape != (ch.dim_in, ch.dim_in):
        raise ValidationError(f"state dimension {rho.shape[0]} does not match channel input {ch.dim_in}")
    j4 = ch.choi.reshape(ch.dim_in, ch.dim_out, ch.dim_in, ch.dim_out)
    out = ch.dim_in * np.einsum("ij,ikjl->kl", rho, j4)
    # only Hermitian inputs have Hermitian images; keep the map linear otherwise
    return _clean(out) if is_hermitian(rho, 1e-12) else out


def heisenberg_apply(ch: ChoiChannel, effect) -> np.ndarray:
    """Heisenberg dual with ``tr[L*(B) rho] = tr[B L(rho)]``."""
    b = as_matrix(effect)
    if b.shape != (ch.dim_out, ch.dim_out):
        raise ValidationError(f"effect dimension {b.shape[0]} does not match channel output {ch.dim_out}")
    j4 = ch.choi.reshape(ch.dim_in, ch.dim_out, ch.dim_in, ch.dim_out)
    out = ch.dim_in * np.einsum("ikjl,lk->ji", j4, b)
    return hermitize(out) if np.allclose(b, b.conj().T) else out


def apply_to_output(choi_like: np.ndarray, dims_left: int, ch: ChoiChannel) -> np.ndarray:
    """``(id (x) ch)`` on an operator whose right factor is the channel input."""
    x4 = np.asarray(choi_like).reshape(dims_left, ch.dim_in, dims_left, ch.dim_in)
    j4 = ch.choi.reshape(ch.dim_in, ch.dim_out, ch.dim_in, ch.dim_out)
    out = ch.dim_in * np.einsum("piqj,ikjl->pkql", x4, j4)
    n = dims_left * ch.dim_out
    return out.reshape(n, n)


def compose(after: ChoiChannel, before: ChoiChannel) -> ChoiChannel:
    """Choi matrix of ``after o before``."""
    if before.dim_out != after.dim_in:
        raise ValidationError(
            f"cannot compose: inner output {before.dim_out} != outer input {after.dim_in}"
        )
    j = apply_to_output(before.choi, before.dim_in, after)
    return ChoiChannel(before.dim_in, after.dim_out, _clean(j))


def identity_channel(d: int) -> ChoiChannel:
    omega = np.eye(d, dtype=complex).reshape(-1)
    return ChoiChannel(d, d, np.outer(omega, omega) / d)


def depolarizing_channel(d: int, eta: float) -> ChoiChannel:
    """``rho -> eta*rho + (1-eta)*tr(rho)*I/d``."""
    if not -1.0 / (d * d - 1) <= eta <= 1.0 + 1e-12:
        raise ValidationError(f"depolarizing parameter {eta} outside the CPTP range")
    ident = identity_channel(d).choi
    return ChoiChannel(d, d, eta * ident + (1 - eta) * np.eye(d * d) / (d * d))


def replacement_channel(d_in: int, sigma) -> ChoiChannel:
    sigma = density_matrix(sigma)
    return ChoiChannel(d_in, sigma.shape[0], np.kron(np.eye(d_in) / d_in, sigma))


def ket(d: int, k: int) -> np.ndarray:
    v = np.zeros(d, dtype=complex)
    v[k] = 1.0
    return v


def pure(vec) -> np.ndarray:
    v = np.asarray(vec, dtype=complex).reshape(-1)
    v = v / np.linalg.norm(v)
    return np.outer(v, v.conj())


def bell_state(d: int = 2) -> np.ndarray:
    return pure(np.eye(d).reshape(-1))


def plus_state(d: int = 2) -> np.ndarray:
    return pure(np.ones(d))


def maximally_mixed(d: int) -> np.ndarray:
    return np.eye(d, dtype=complex) / d


def coherent_amplitudes(alpha: complex, cutoff: int) -> np.ndarray:
    c = np.array([alpha**k / np.sqrt(float(factorial(k))) for k in range(cutoff)], dtype=complex)
    return c / np.linalg.norm(c)


def truncated_cv_state(kind: str, cutoff: int, param: complex = 0.0) -> np.ndarray:
    """Pure Fock-truncated coherent (``kind='coherent'``, ``param=alpha``) or
    two-mode squeezed vacuum (``kind='two_mode_squeezed'``, ``param=lambda``)."""
    if cutoff < 2:
        raise ValidationError("cutoff must be at least 2")
    if kind == "coherent":
        return pure(coherent_amplitudes(param, cutoff))
    if kind in ("two_mode_squeezed", "tmsv"):
        if abs(param) >= 1:
            raise ValidationError("two-mode squeezing parameter must satisfy |lambda| < 1")
        c = np.array([param**k for k in range(cutoff)], dtype=complex)
        c /= np.linalg.norm(c)
        psi = np.zeros(cutoff * cutoff, dtype=complex)
        psi[np.arange(cutoff) * (cutoff + 1)] = c
        return pure(psi)
    raise ValidationError(f"unknown CV state kind {kind!r}")


# -- random objects ---------------------------------------------------------

def random_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    z = (rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_state(d: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    rank = d if rank is None else rank
    g = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    rho = g @ g.conj().T
    return hermitize(rho / np.trace(rho).real)


def random_pure_state(d: int, rng: np.random.Generator) -> np.ndarray:
    return random_state(d, rng, rank=1)


def random_hermitian(d: int, rng: np.random.Generator) -> np.ndarray:
    g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return hermitize(g)


def random_channel(d_in: int, d_out: int, rng: np.random.Generator, n_kraus: int | None = None) -> ChoiChannel:
    n_kraus = d_in * d_out if n_kraus is None else n_kraus
    g = rng.normal(size=(n_kraus * d_out, d_in)) + 1j * rng.normal(size=(n_kraus * d_out, d_in))
    q, _ = np.linalg.qr(g)
    ks = [q[k * d_out:(k + 1) * d_out, :] for k in range(n_kraus)]
    return channel_from_kraus(ks)


def random_povm(d: int, n: int, rng: np.random.Generator) -> list[np.ndarray]:
    parts = [random_state(d, rng) for _ in range(n)]
    t = sum(parts)
    w, v = np.linalg.eigh(t)
    t_isqrt = (v / np.sqrt(w)) @ v.conj().T
    return [hermitize(t_isqrt @ p @ t_isqrt) for p in parts]
