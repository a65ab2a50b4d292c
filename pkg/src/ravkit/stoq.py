"""Stochastic approximate unitary compilation (STOQ).

The search is a Metropolis chain over instruction sequences. Each
iteration raises the inverse temperature ``beta`` by a fixed increment and
proposes either inserting a freshly drawn instruction or dropping one.
Proposals that lower the cost are always taken; the rest are taken with
probability ``exp(-beta * delta)``.

Edits land at a uniformly random position by default. The ``"end"`` mode
restricts them to the tail of the sequence, which is cheaper per iteration
but anneals markedly worse.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Protocol

import numpy as np

from .gates import GateInstance, GateKind, LayerDesign, gate_matrix, generate_layer, layer_unitary
from .linalg import apply_gate, make_rng, num_qubits


class InstructionSource(Protocol):
    """Anything that can draw a random instruction together with its unitary."""

    n_qubits: int

    def draw(self, rng: np.random.Generator) -> tuple[Any, np.ndarray]: ...


@dataclass(frozen=True)
class LayerSource:
    """Instructions are whole random layers from a design."""

    design: LayerDesign

    @property
    def n_qubits(self) -> int:
        return self.design.n_qubits

    def draw(self, rng):
        layer = generate_layer(self.design, rng)
        return layer, layer_unitary(layer, self.n_qubits)


@dataclass(frozen=True)
class GateSource:
    """Single gates drawn uniformly from ``kinds`` with angles uniform on ``[0, 2 pi)``.

    With ``kinds = (R, XX)`` this is the universal trapped-ion style set
    used for compiling Haar-random targets.
    """

    n_qubits: int
    kinds: tuple[GateKind, ...] = (GateKind.R, GateKind.XX)

    def draw(self, rng):
        kinds = [k for k in self.kinds if k.arity <= self.n_qubits]
        kind = kinds[int(rng.integers(len(kinds)))]
        theta = float(rng.uniform(0.0, 2 * math.pi))
        phi = float(rng.uniform(0.0, 2 * math.pi)) if kind in (GateKind.R, GateKind.MS) else 0.0
        if kind.arity == 1:
            targets = (int(rng.integers(self.n_qubits)),)
        else:
            targets = tuple(sorted(int(q) for q in rng.choice(self.n_qubits, 2, replace=False)))
        g = GateInstance(kind, targets, theta, phi)
        u = apply_gate(gate_matrix(g), g.targets, np.eye(1 << self.n_qubits, dtype=complex), self.n_qubits)
        return g, u


@dataclass(frozen=True)
class StoqParams:
    num_iterations: int = 10_000
    delta_beta: float = 0.01
    p_append: float = 0.5
    edit_position: str = "random"

    def __post_init__(self):
        if self.edit_position not in ("random", "end"):
            raise ValueError("edit_position must be 'random' or 'end'")
        if self.num_iterations < 0:
            raise ValueError("num_iterations must be non-negative")
        if self.delta_beta <= 0:
            raise ValueError("delta_beta must be positive")
        if not 0.0 < self.p_append < 1.0:
            raise ValueError("p_append must lie in (0, 1)")


@dataclass
class CompiledSequence:
    instructions: list
    final_cost: float
    cost_trace: np.ndarray
    seed: int | None = None
    product: np.ndarray | None = field(default=None, repr=False)

    @property
    def epsilon(self) -> float:
        """Inversion error ``1 - |Tr(V^dag U)|^2 / N^2`` implied by the final cost."""
        return 1.0 - (1.0 - self.final_cost) ** 2

    def __len__(self) -> int:
        return len(self.instructions)


class BudgetExceededError(RuntimeError):
    """Raised when repeated compilation never reaches the requested error."""

    def __init__(self, message: str, best: CompiledSequence | None):
        super().__init__(message)
        self.best = best


def cost(target: np.ndarray, candidate: np.ndarray) -> float:
    """``1 - |Tr(V^dag U)| / N``: zero iff equal up to a global phase."""
    if target.shape != candidate.shape:
        raise ValueError(f"dimension mismatch: {target.shape} vs {candidate.shape}")
    c = 1.0 - abs(np.vdot(candidate, target)) / target.shape[0]
    # rounding can push an exact match a hair below zero
    return min(max(c, 0.0), 1.0)


def inversion_error(target: np.ndarray, candidate: np.ndarray) -> float:
    """``1 - |Tr(V^dag U)|^2 / N^2`` between a target and its approximation."""
    return 1.0 - (1.0 - cost(target, candidate)) ** 2


def accept(old_cost: float, new_cost: float, beta: float, rng: np.random.Generator) -> bool:
    if beta < 0:
        raise ValueError("beta must be non-negative")
    delta = new_cost - old_cost
    if delta <= 0:
        return True
    return bool(rng.random() < math.exp(-beta * delta))


def compile(
    target: np.ndarray,
    source: InstructionSource,
    params: StoqParams = StoqParams(),
    rng: int | np.random.Generator | None = None,
) -> CompiledSequence:
    """Anneal a sequence of instructions whose product approximates ``target``.

    The chain starts from the empty sequence (the identity). A removal
    proposed on an empty sequence is a no-op iteration.
    """
    if num_qubits(target.shape[0]) != source.n_qubits:
        raise ValueError("target dimension does not match the instruction source")
    seed = rng if isinstance(rng, int) else None
    rng = make_rng(rng)
    if params.edit_position == "end":
        chain = _EndChain(target)
    else:
        chain = _RandomPositionChain(target)

    trace = np.empty(params.num_iterations + 1)
    trace[0] = chain.cost
    beta = 0.0
    for i in range(1, params.num_iterations + 1):
        beta += params.delta_beta
        if rng.random() < params.p_append:
            instr, u = source.draw(rng)
            pos = chain.insert_position(rng)
            new = chain.cost_after_insert(u, pos)
            if accept(chain.cost, new, beta, rng):
                chain.insert(instr, u, pos, new)
        elif chain.instructions:
            pos = chain.remove_position(rng)
            new = chain.cost_after_remove(pos)
            if accept(chain.cost, new, beta, rng):
                chain.remove(pos, new)
        trace[i] = chain.cost
    return CompiledSequence(list(chain.instructions), chain.cost, trace, seed, chain.product())


class _EndChain:
    """Sequence edited at its end only; running products live on a stack."""

    def __init__(self, target: np.ndarray):
        self.target = target
        self.instructions: list = []
        self.prefix = [np.eye(target.shape[0], dtype=complex)]
        self.cost = cost(target, self.prefix[0])
        self._pending = None

    def insert_position(self, rng):
        return len(self.instructions)

    def remove_position(self, rng):
        return len(self.instructions) - 1

    def cost_after_insert(self, u, pos):
        self._pending = u @ self.prefix[-1]
        return cost(self.target, self._pending)

    def insert(self, instr, u, pos, new_cost):
        self.instructions.append(instr)
        self.prefix.append(self._pending)
        self.cost = new_cost

    def cost_after_remove(self, pos):
        return cost(self.target, self.prefix[-2])

    def remove(self, pos, new_cost):
        self.instructions.pop()
        self.prefix.pop()
        self.cost = new_cost

    def product(self):
        return self.prefix[-1]


class _RandomPositionChain:
    """Sequence edited at uniformly random positions.

    ``prefix[k]`` is ``G_k ... G_1`` and ``suffix[k]`` is ``G_M ... G_{k+1}``,
    so the product with ``G`` inserted after ``k`` instructions is
    ``suffix[k] G prefix[k]``. An accepted edit updates all cached products
    with one batched multiplication by the edit transformed into their frame
    (e.g. ``P_k -> P_k P_pos^-1 u P_pos``) instead of re-multiplying the
    chain. A true inverse is used rather than the adjoint: the adjoint feeds
    rounding-level non-unitarity back into every later product and the
    error then grows exponentially. An exact rebuild every
    ``REBUILD_EVERY`` edits bounds the remaining linear drift.
    """

    REBUILD_EVERY = 256

    def __init__(self, target: np.ndarray):
        self.target = target
        self.target_h = target.conj().T
        self.instructions: list = []
        self.unitaries: list[np.ndarray] = []
        self._edits = 0
        self._rebuild()
        self.cost = cost(target, self.prefix[-1])

    def _rebuild(self):
        d = self.target.shape[0]
        m = len(self.unitaries)
        self.prefix = np.empty((m + 1, d, d), dtype=complex)
        self.suffix = np.empty((m + 1, d, d), dtype=complex)
        self.prefix[0] = self.suffix[m] = np.eye(d)
        for k, u in enumerate(self.unitaries):
            self.prefix[k + 1] = u @ self.prefix[k]
        for k in range(m - 1, -1, -1):
            self.suffix[k] = self.suffix[k + 1] @ self.unitaries[k]

    def _edited(self):
        self._edits += 1
        if self._edits % self.REBUILD_EVERY == 0:
            self._rebuild()

    def _cost_of(self, left: np.ndarray, right: np.ndarray) -> float:
        # |Tr(U^dag L R)| = |sum((R U^dag) * L^T)|, one product instead of two
        c = 1.0 - abs(np.sum((right @ self.target_h) * left.T)) / self.target.shape[0]
        return min(max(c, 0.0), 1.0)

    def insert_position(self, rng):
        return int(rng.integers(len(self.instructions) + 1))

    def remove_position(self, rng):
        return int(rng.integers(len(self.instructions)))

    def cost_after_insert(self, u, pos):
        return self._cost_of(self.suffix[pos] @ u, self.prefix[pos])

    def insert(self, instr, u, pos, new_cost):
        p, s = self.prefix[pos], self.suffix[pos]
        # later prefixes gain u after G_pos: P_k -> P_k (P_pos^-1 u P_pos)
        right = np.linalg.solve(p, u @ p)
        left = s @ u @ np.linalg.inv(s)
        self.prefix = np.concatenate([self.prefix[: pos + 1], self.prefix[pos:] @ right])
        self.suffix = np.concatenate([left @ self.suffix[: pos + 1], self.suffix[pos:]])
        self.instructions.insert(pos, instr)
        self.unitaries.insert(pos, u)
        self.cost = new_cost
        self._edited()

    def cost_after_remove(self, pos):
        return self._cost_of(self.suffix[pos + 1], self.prefix[pos])

    def remove(self, pos, new_cost):
        g = self.unitaries[pos]
        p = self.prefix[pos]
        right = np.linalg.solve(p, g.conj().T @ p)
        left = self.suffix[pos + 1] @ np.linalg.inv(self.suffix[pos])
        self.prefix = np.concatenate([self.prefix[: pos + 1], self.prefix[pos + 2 :] @ right])
        self.suffix = np.concatenate([left @ self.suffix[:pos], self.suffix[pos + 1 :]])
        del self.instructions[pos]
        del self.unitaries[pos]
        self.cost = new_cost
        self._edited()

    def product(self):
        self._rebuild()
        return self.prefix[-1]


def compile_until(
    target: np.ndarray,
    source: InstructionSource,
    params: StoqParams = StoqParams(),
    epsilon_target: float = 0.04,
    max_restarts: int = 25,
    rng: int | np.random.Generator | None = None,
) -> CompiledSequence:
    """Repeat :func:`compile` until the inversion error is at most ``epsilon_target``.

    Every attempt runs on its own seed drawn from ``rng``; the returned
    sequence records the seed of the winning attempt. At most
    ``1 + max_restarts`` attempts are made.

    Raises:
        BudgetExceededError: no attempt reached the target; ``best`` holds the
            lowest-error attempt.
    """
    if not 0.0 < epsilon_target <= 1.0:
        raise ValueError("epsilon_target must lie in (0, 1]")
    rng = make_rng(rng)
    best = None
    for _ in range(max_restarts + 1):
        seed = int(rng.integers(2**63))
        result = compile(target, source, params, seed)
        if result.epsilon <= epsilon_target:
            return result
        if best is None or result.epsilon < best.epsilon:
            best = result
    raise BudgetExceededError(
        f"no compilation reached epsilon <= {epsilon_target} in {max_restarts + 1} attempts "
        f"(best {best.epsilon:.4g})",
        best,
    )

