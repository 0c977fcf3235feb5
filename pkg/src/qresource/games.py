"""Input-output games, payoffs and the witness-to-game decomposition.

A game is an input ensemble ``{rho_a}``, a POVM ``{M_b}`` on the output and a
real score table ``omega[a, b]``.  Its payoff on a channel ``L`` is
``sum_ab omega_ab tr[L(rho_a) M_b]``, which equals ``d_in * tr[Y_G J_L]``
with ``Y_G = sum_ab omega_ab rho_a^T (x) M_b``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import sdp
from .freesets import FreeSet
from .linalg import NumericalError, ValidationError, hermitize, partial_trace, trace_map
from .quantum import ChoiChannel, check_povm, density_matrix, random_povm, random_state

EXCLUDED_DENOMINATOR = 1e-10


@dataclass(frozen=True, eq=False)
class QuantumGame:
    inputs: tuple
    povm: tuple
    scores: np.ndarray

    def __post_init__(self):
        inputs = tuple(density_matrix(r) for r in self.inputs)
        povm = tuple(check_povm(list(self.povm)))
        if not inputs:
            raise ValidationError("game needs at least one input state")
        d_in = inputs[0].shape[0]
        if any(r.shape[0] != d_in for r in inputs):
            raise ValidationError("input states have inconsistent dimensions")
        scores = np.asarray(self.scores, dtype=float)
        if scores.shape != (len(inputs), len(povm)):
            raise ValidationError(f"scores shape {scores.shape} != ({len(inputs)}, {len(povm)})")
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "povm", povm)
        object.__setattr__(self, "scores", scores)

    @property
    def dim_in(self) -> int:
        return self.inputs[0].shape[0]

    @property
    def dim_out(self) -> int:
        return self.povm[0].shape[0]

    def operator(self) -> np.ndarray:
        """``Y_G = sum_ab omega_ab rho_a^T (x) M_b``."""
        y = np.zeros((self.dim_in * self.dim_out,) * 2, dtype=complex)
        for a, rho in enumerate(self.inputs):
            o_a = sum(self.scores[a, b] * m for b, m in enumerate(self.povm))
            y += np.kron(rho.T, o_a)
        return hermitize(y)

    def to_json(self) -> dict:
        from .io import matrix_to_json, state_to_json

        return {
            "inputs": [state_to_json(r) for r in self.inputs],
            "povm": [matrix_to_json(m) for m in self.povm],
            "scores": self.scores.tolist(),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "QuantumGame":
        from .io import matrix_from_json, state_from_json

        for key in ("inputs", "povm", "scores"):
            if key not in doc:
                raise ValidationError(f"game: missing field '{key}'")
        inputs = [state_from_json(r, f"game.inputs[{i}]") for i, r in enumerate(doc["inputs"])]
        povm = [matrix_from_json(m, True, f"game.povm[{i}]") for i, m in enumerate(doc["povm"])]
        return cls(tuple(inputs), tuple(povm), np.asarray(doc["scores"], dtype=float))


@dataclass(frozen=True)
class TupleGame:
    components: tuple

    def operators(self) -> list[np.ndarray]:
        return [g.operator() for g in self.components]


def _choi_of(x) -> tuple[np.ndarray, int]:
    """Choi matrix and input dimension of a channel or state."""
    if isinstance(x, ChoiChannel):
        return x.choi, x.dim_in
    m = np.asarray(x, dtype=complex)
    return m, 1


def payoff_choi(choi: np.ndarray, dim_in: int, game: QuantumGame) -> float:
    """Payoff of the (linearly extended) map with Choi matrix ``choi``."""
    d_out = game.dim_out
    if dim_in != game.dim_in or choi.shape[0] != dim_in * d_out:
        raise ValidationError(
            f"game dimensions ({game.dim_in}->{game.dim_out}) do not match object of size {choi.shape[0]}"
        )
    j4 = choi.reshape(dim_in, d_out, dim_in, d_out)
    total = 0.0
    for a, rho in enumerate(game.inputs):
        out = dim_in * np.einsum("ij,ikjl->kl", rho, j4)
        for b, m in enumerate(game.povm):
            total += game.scores[a, b] * float(np.real(np.vdot(m, out)))
    return total


def payoff(x, game: QuantumGame) -> float:
    """``sum_ab omega_ab tr[L(rho_a) M_b]`` for a channel or state ``x``."""
    choi, d_in = _choi_of(x)
    return payoff_choi(choi, d_in, game)


def tuple_payoff(xs, games) -> float:
    comps = games.components if isinstance(games, TupleGame) else tuple(games)
    if len(xs) != len(comps):
        raise ValidationError(f"tuple has {len(xs)} entries but the game has {len(comps)} components")
    return float(sum(payoff(x, g) for x, g in zip(xs, comps)))


def informationally_complete_states(d: int) -> list[np.ndarray]:
    """``d^2`` pure states spanning the Hermitian ``d x d`` matrices."""
    states = []
    for i in range(d):
        v = np.zeros(d, dtype=complex)
        v[i] = 1
        states.append(np.outer(v, v.conj()))
    for i in range(d):
        for j in range(i + 1, d):
            for phase in (1.0, 1j):
                v = np.zeros(d, dtype=complex)
                v[i] = 1 / np.sqrt(2)
                v[j] = phase / np.sqrt(2)
                states.append(np.outer(v, v.conj()))
    return states


def _dual_basis(mats: list[np.ndarray]) -> list[np.ndarray]:
    """Hermitian ``D_a`` with ``tr(D_a m_c) = delta_ac``."""
    vecs = np.stack([m.reshape(-1) for m in mats], axis=1)
    gram = np.real(vecs.conj().T @ vecs)
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > 1e12:
        raise NumericalError(f"spanning set is singular (condition number {cond:.2e})")
    ginv = np.linalg.inv(gram)
    return [hermitize(sum(ginv[a, c] * mats[c] for c in range(len(mats)))) for a in range(len(mats))]


def witness_to_game(y: np.ndarray, dims: tuple[int, int]) -> QuantumGame:
    """Decompose Hermitian ``Y`` as ``sum_ab omega_ab rho_a^T (x) M_b``."""
    d_in, d_out = dims
    y = hermitize(np.asarray(y, dtype=complex))
    if y.shape != (d_in * d_out, d_in * d_out):
        raise ValidationError(f"witness shape {y.shape} does not match dims {dims}")
    inputs = informationally_complete_states(d_in)
    duals_in = _dual_basis([r.T for r in inputs])
    # O_a = tr_in[(D_a (x) I) Y] so that Y = sum_a rho_a^T (x) O_a
    y4 = y.reshape(d_in, d_out, d_in, d_out)
    ops = [hermitize(np.einsum("ji,ikjl->kl", dmat, y4)) for dmat in duals_in]
    spans = informationally_complete_states(d_out)
    t = sum(spans)
    w, v = np.linalg.eigh(t)
    t_isqrt = (v / np.sqrt(w)) @ v.conj().T
    povm = [hermitize(t_isqrt @ s @ t_isqrt) for s in spans]
    duals_out = _dual_basis(povm)
    scores = np.array([[float(np.real(np.vdot(e, o))) for e in duals_out] for o in ops])
    return QuantumGame(tuple(inputs), tuple(povm), scores)


def reconstruction_error(game: QuantumGame, y: np.ndarray) -> float:
    return float(np.max(np.abs(game.operator() - y)))


def random_game(d_in: int, d_out: int, rng: np.random.Generator,
                n_inputs: int = 3, n_outcomes: int = 3) -> QuantumGame:
    """Game with non-negative scores (non-negative payoff on every channel)."""
    inputs = tuple(random_state(d_in, rng) for _ in range(n_inputs))
    povm = tuple(random_povm(d_out, n_outcomes, rng))
    scores = rng.uniform(0.0, 1.0, size=(n_inputs, n_outcomes))
    return QuantumGame(inputs, povm, scores)


# ---------------------------------------------------------------------------
# advantage verification
# ---------------------------------------------------------------------------

def free_payoff_extremum(fs: FreeSet, games: list[QuantumGame], sense: str = "max",
                         opts: sdp.SolverOptions | None = None) -> tuple[float, str]:
    """Best (``max``) or worst (``min``) total payoff over free objects."""
    if len(games) != fs.arity:
        raise ValidationError("number of games does not match the free set arity")
    p = sdp.SdpProblem("maximize" if sense == "max" else "minimize")
    slots = []
    for i, g in enumerate(games):
        d_in, _ = fs.slot_dims[i]
        xb = p.var(f"free{i}", fs.slot_size(i))
        slots.append(xb)
        p.add_objective_trace(xb, float(d_in), g.operator())
    fs.constrain(p, slots, require_psd=True, tag="free")
    n0 = fs.slot_size(0)
    p.equal(slots[0].map(trace_map(n0, 1)), np.ones((1, 1)), "unit_trace")
    sol = sdp.solve(p, opts)
    return sol.primal_value, sol.status


def _games_for(result, fs: FreeSet) -> list[QuantumGame]:
    if result.witness is None:
        raise ValidationError("result carries no witness")
    return [witness_to_game(y, fs.slot_dims[i]) for i, y in enumerate(result.witness)]


def _as_list(x, fs: FreeSet) -> list:
    return list(x) if fs.is_tuple or isinstance(x, (list, tuple)) else [x]


def verify_advantage(x, fs: FreeSet, noise: str, result, rng: np.random.Generator | None = None,
                     samples: int = 200, tol: float = 1e-4) -> dict:
    """Compare the witness game's advantage ratio with ``1 + R``."""
    rng = rng or np.random.default_rng(0)
    games = _games_for(result, fs)
    xs = _as_list(x, fs)
    num = tuple_payoff(xs, games)
    den, status = free_payoff_extremum(fs, games, "max")
    target = 1.0 + result.value
    rep = {"quantity": "robustness", "noise": noise, "numerator": num, "denominator": den,
           "target": target, "denominator_status": status,
           "reconstruction_error": max(reconstruction_error(g, y) for g, y in zip(games, result.witness))}
    if den <= EXCLUDED_DENOMINATOR:
        rep.update(excluded=True, ratio=None, error=None, passed=False)
        return rep
    ratio = num / den
    rep.update(excluded=False, ratio=ratio, error=abs(ratio - target))
    rep["passed"] = rep["error"] <= tol
    if noise == "free":
        worst = min(tuple_payoff([_wrap(t, fs, i) for i, t in enumerate(fs.sample(rng))], games)
                    for _ in range(samples))
        rep["min_noise_payoff"] = worst
        rep["admissible"] = worst >= -1e-8
        rep["passed"] = rep["passed"] and rep["admissible"]
    return rep


def verify_weight_advantage(x, fs: FreeSet, result, tol: float = 1e-4) -> dict:
    """Compare the witness game's ratio against the worst free object with ``1 - W``."""
    games = _games_for(result, fs)
    xs = _as_list(x, fs)
    num = tuple_payoff(xs, games)
    den, status = free_payoff_extremum(fs, games, "min")
    target = 1.0 - result.value
    min_eig = min(float(np.linalg.eigvalsh(y)[0]) for y in result.witness)
    rep = {"quantity": "weight", "numerator": num, "denominator": den, "target": target,
           "denominator_status": status, "witness_min_eig": min_eig,
           "reconstruction_error": max(reconstruction_error(g, y) for g, y in zip(games, result.witness))}
    if den <= EXCLUDED_DENOMINATOR:
        rep.update(excluded=True, ratio=None, error=None, passed=False)
        return rep
    ratio = num / den
    rep.update(excluded=False, ratio=ratio, error=abs(ratio - target))
    rep["passed"] = rep["error"] <= tol and min_eig >= -1e-7
    return rep


def advantage_ratio(x, fs: FreeSet, games: list[QuantumGame], sense: str = "max") -> float | None:
    """``payoff(x) / extremal free payoff``; ``None`` for an excluded game."""
    den, _ = free_payoff_extremum(fs, games, sense)
    if den <= EXCLUDED_DENOMINATOR:
        return None
    return tuple_payoff(_as_list(x, fs), games) / den


def _wrap(t: np.ndarray, fs: FreeSet, i: int):
    d_in, _ = fs.slot_dims[i]
    return ChoiChannel(d_in, t.shape[0] // d_in, t) if d_in > 1 else t


__all__ = [
    "QuantumGame", "TupleGame", "payoff", "payoff_choi", "tuple_payoff", "witness_to_game",
    "informationally_complete_states", "random_game", "verify_advantage", "verify_weight_advantage",
    "free_payoff_extremum", "advantage_ratio", "reconstruction_error", "partial_trace",
]
