"""Dense Hermitian linear algebra shared by every other module.

Matrices are plain ``numpy`` arrays of ``complex128``.  Linear maps between
operator spaces are represented as ``scipy.sparse`` matrices acting on the
row-major vectorisation ``vec(X) = X.reshape(-1)``, so that
``vec(A @ X @ B) == kron(A, B.T) @ vec(X)``.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
import scipy.sparse as sp

HERMITIAN_TOL = 1e-12
PSD_TOL = 1e-9


class ValidationError(ValueError):
    """Input does not satisfy a documented precondition."""


class NumericalError(RuntimeError):
    """A numerical routine failed to converge."""


def as_matrix(m) -> np.ndarray:
    a = np.asarray(m, dtype=complex)
    if a.ndim != 2:
        raise ValidationError(f"expected a 2-d matrix, got shape {a.shape}")
    return a


def hermitian_deviation(m: np.ndarray) -> float:
    return float(np.max(np.abs(m - m.conj().T), initial=0.0))


def is_hermitian(m, tol: float = HERMITIAN_TOL) -> bool:
    a = as_matrix(m)
    return a.shape[0] == a.shape[1] and hermitian_deviation(a) <= tol


def require_hermitian(m, tol: float = HERMITIAN_TOL, name: str = "matrix") -> np.ndarray:
    a = as_matrix(m)
    if a.shape[0] != a.shape[1]:
        raise ValidationError(f"{name} is not square: {a.shape}")
    dev = hermitian_deviation(a)
    if dev > tol:
        raise ValidationError(f"{name} is not Hermitian (max deviation {dev:.3e} > {tol:.1e})")
    return a


def hermitize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.conj().T)


def eig_hermitian(m, tol: float = HERMITIAN_TOL):
    """Eigen-decomposition of a Hermitian matrix.

    Returns
    -------
    eigenvalues : ndarray
        Real eigenvalues in ascending order.
    eigenvectors : ndarray
        Unitary matrix whose columns are the matching eigenvectors.
    """
    a = require_hermitian(m, tol)
    try:
        w, v = np.linalg.eigh(hermitize(a))
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise NumericalError(f"eigensolver did not converge for n={a.shape[0]}: {exc}") from exc
    return w, v


def min_eigenvalue(m, tol: float = HERMITIAN_TOL) -> float:
    a = require_hermitian(m, tol)
    if a.shape[0] == 0:
        return 0.0
    return float(np.linalg.eigvalsh(hermitize(a))[0])


def is_psd(m, psd_tol: float = PSD_TOL, herm_tol: float = 1e-9) -> bool:
    return min_eigenvalue(m, herm_tol) >= -psd_tol


def trace_norm(m, tol: float = HERMITIAN_TOL) -> float:
    a = require_hermitian(m, tol)
    return float(np.sum(np.abs(np.linalg.eigvalsh(hermitize(a)))))


def psd_sqrt(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(hermitize(m))
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.conj().T


def _check_dims(n: int, dims: Sequence[int]) -> list[int]:
    dims = [int(d) for d in dims]
    if any(d < 1 for d in dims) or int(np.prod(dims)) != n:
        raise ValidationError(f"subsystem dims {dims} do not multiply to {n}")
    return dims


def partial_trace(m, dims: Sequence[int], keep: Sequence[int]) -> np.ndarray:
    """Trace out every subsystem not listed in ``keep`` (order of ``keep`` is ignored)."""
    a = as_matrix(m)
    dims = _check_dims(a.shape[0], dims)
    keep = sorted(set(int(k) for k in keep))
    if not keep or keep[0] < 0 or keep[-1] >= len(dims):
        raise ValidationError(f"invalid subsystem selection {keep} for dims {dims}")
    k = len(dims)
    t = a.reshape(dims + dims)
    traced = [s for s in range(k) if s not in keep]
    # contract traced pairs from the highest index so axis numbers stay valid
    for s in reversed(traced):
        nrem = t.ndim // 2
        t = np.trace(t, axis1=s, axis2=s + nrem)
    p = int(np.prod([dims[s] for s in keep]))
    return t.reshape(p, p)


def partial_transpose(m, dims: Sequence[int], on: int = 1) -> np.ndarray:
    a = as_matrix(m)
    dims = _check_dims(a.shape[0], dims)
    if not 0 <= on < len(dims):
        raise ValidationError(f"subsystem index {on} out of range for dims {dims}")
    k = len(dims)
    axes = list(range(2 * k))
    axes[on], axes[k + on] = axes[k + on], axes[on]
    return a.reshape(dims + dims).transpose(axes).reshape(a.shape)


def kron_all(*ops) -> np.ndarray:
    out = np.eye(1, dtype=complex)
    for op in ops:
        out = np.kron(out, op)
    return out


# ---------------------------------------------------------------------------
# sparse superoperators on row-major vec
# ---------------------------------------------------------------------------

def identity_map(n: int) -> sp.csr_matrix:
    return sp.identity(n * n, dtype=complex, format="csr")


def permutation_map(perm: np.ndarray) -> sp.csr_matrix:
    """Map with ``(P @ v)[i] = v[perm[i]]``."""
    size = perm.size
    return sp.csr_matrix((np.ones(size, dtype=complex), (np.arange(size), perm)), shape=(size, size))


def partial_transpose_map(dims: Sequence[int], on: int = 1) -> sp.csr_matrix:
    dims = [int(d) for d in dims]
    n = int(np.prod(dims))
    k = len(dims)
    axes = list(range(2 * k))
    axes[on], axes[k + on] = axes[k + on], axes[on]
    perm = np.arange(n * n).reshape(dims + dims).transpose(axes).reshape(-1)
    return permutation_map(perm)


def partial_trace_map(dims: Sequence[int], keep: Sequence[int]) -> sp.csr_matrix:
    dims = [int(d) for d in dims]
    keep = sorted(set(int(k) for k in keep))
    n = int(np.prod(dims))
    k = len(dims)
    idx = np.arange(n * n).reshape(dims + dims)
    traced = [s for s in range(k) if s not in keep]
    # move kept row axes, kept col axes, then (row, col) pairs of traced systems
    order = keep + [k + s for s in keep] + [ax for s in traced for ax in (s, k + s)]
    idx = idx.transpose(order)
    p = int(np.prod([dims[s] for s in keep]))
    tdims = [dims[s] for s in traced]
    tsize = int(np.prod(tdims)) if traced else 1
    idx = idx.reshape([p * p] + [d for s in traced for d in (dims[s], dims[s])])
    if traced:
        # keep diagonal entries of each traced (row, col) pair
        sel = [slice(None)]
        grids = np.meshgrid(*[np.arange(d) for d in tdims], indexing="ij")
        for g in grids:
            sel.append(g.reshape(-1))
            sel.append(g.reshape(-1))
        cols = idx[tuple(sel)] if len(sel) > 1 else idx
        # advanced indexing puts the traced combination axis last
        cols = cols.reshape(p * p, tsize)
    else:
        cols = idx.reshape(p * p, 1)
    rows = np.repeat(np.arange(p * p), tsize)
    data = np.ones(rows.size, dtype=complex)
    return sp.csr_matrix((data, (rows, cols.reshape(-1))), shape=(p * p, n * n))


def conjugation_map(u: np.ndarray) -> sp.csr_matrix:
    """Map ``X -> U X U^dagger``."""
    u = as_matrix(u)
    return sp.csr_matrix(np.kron(u, u.conj()))


def trace_map(n: int, p: int = 1) -> sp.csr_matrix:
    """Map ``X -> tr(X) * I_p``."""
    diag_in = np.arange(n) * (n + 1)
    diag_out = np.arange(p) * (p + 1)
    rows = np.repeat(diag_out, n)
    cols = np.tile(diag_in, p)
    return sp.csr_matrix((np.ones(rows.size, dtype=complex), (rows, cols)), shape=(p * p, n * n))


def compression_map(n: int, keep: int) -> sp.csr_matrix:
    """Map ``X -> X[:keep, :keep]``."""
    idx = (np.arange(keep)[:, None] * n + np.arange(keep)[None, :]).reshape(-1)
    return sp.csr_matrix(
        (np.ones(idx.size, dtype=complex), (np.arange(idx.size), idx)), shape=(keep * keep, n * n)
    )


def superop_from_function(f, n_in: int) -> sp.csr_matrix:
    """Sparse superoperator of a linear map given as a Python callable."""
    cols = []
    for k in range(n_in * n_in):
        e = np.zeros(n_in * n_in, dtype=complex)
        e[k] = 1.0
        cols.append(np.asarray(f(e.reshape(n_in, n_in)), dtype=complex).reshape(-1))
    dense = np.stack(cols, axis=1)
    dense[np.abs(dense) < 1e-15] = 0.0
    return sp.csr_matrix(dense)


def apply_map(mp: sp.spmatrix, x: np.ndarray) -> np.ndarray:
    out = mp @ np.asarray(x, dtype=complex).reshape(-1)
    p = int(round(np.sqrt(out.size)))
    return out.reshape(p, p)


def hermitian_basis(p: int) -> sp.csr_matrix:
    """Orthonormal basis of Hermitian p x p matrices, one vec per column."""
    rows, cols, vals = [], [], []
    c = 0
    s = 1.0 / np.sqrt(2.0)
    for k in range(p):
        rows.append(k * p + k)
        cols.append(c)
        vals.append(1.0)
        c += 1
    for k in range(p):
        for l in range(k + 1, p):
            rows += [k * p + l, l * p + k]
            cols += [c, c]
            vals += [s, s]
            c += 1
            rows += [k * p + l, l * p + k]
            cols += [c, c]
            vals += [1j * s, -1j * s]
            c += 1
    return sp.csr_matrix((np.asarray(vals, dtype=complex), (rows, cols)), shape=(p * p, p * p))
