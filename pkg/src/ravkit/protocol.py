"""RAV and XEB sequence generation.

A RAV sequence is ``m0`` random layers followed by a STOQ-compiled
approximate inverse built from layers of the same design. A matched XEB
sequence has the same total layer count, all of it random.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import stoq
from .gates import Layer, LayerDesign, generate_layer, layers_unitary
from .linalg import make_rng, spawn_seeds

log = logging.getLogger(__name__)

RAV = "RAV"
XEB = "XEB"

# Layer instructions are small rotations, so a fast anneal works well for
# inversion. Reaches epsilon <= 0.04 for two qubits within a few restarts.
DEFAULT_INVERSION_PARAMS = stoq.StoqParams(num_iterations=4000, delta_beta=0.5, p_append=0.5)


@dataclass(frozen=True)
class VerificationSequence:
    kind: str
    n_qubits: int
    layers: tuple[Layer, ...]
    seed: int | None = None
    m0: int | None = None
    m_inv: int | None = None
    epsilon: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if self.kind not in (RAV, XEB):
            raise ValueError(f"unknown sequence kind {self.kind!r}")
        if self.kind == RAV:
            if self.m0 is None or self.m_inv is None or self.epsilon is None:
                raise ValueError("RAV sequences need m0, m_inv and epsilon")
            if self.m0 + self.m_inv != len(self.layers):
                raise ValueError("m0 + m_inv must equal the layer count")
        elif any(v is not None for v in (self.m0, self.m_inv, self.epsilon)):
            raise ValueError("XEB sequences carry no m0, m_inv or epsilon")

    @property
    def m(self) -> int:
        return len(self.layers)

    def unitary(self) -> np.ndarray:
        return layers_unitary(self.layers, self.n_qubits)

    def measured_epsilon(self) -> float:
        """Recompute ``1 - |Tr(V U)|^2 / N^2`` from the stored layers."""
        if self.kind != RAV:
            raise ValueError("only RAV sequences have an inversion error")
        u = layers_unitary(self.layers[: self.m0], self.n_qubits)
        v = layers_unitary(self.layers[self.m0 :], self.n_qubits)
        n = 1 << self.n_qubits
        return 1.0 - abs(np.trace(v @ u)) ** 2 / n**2


@dataclass(frozen=True)
class ExperimentPlan:
    design: LayerDesign
    m0_range: tuple[int, ...]
    epsilon_target: float = 0.04
    sequences_per_plan: int = 50
    seed: int = 0
    stoq_params: stoq.StoqParams = DEFAULT_INVERSION_PARAMS
    max_restarts: int = 25

    def __post_init__(self):
        object.__setattr__(self, "m0_range", tuple(int(m) for m in self.m0_range))
        if not self.m0_range or min(self.m0_range) < 1:
            raise ValueError("m0_range must be a non-empty list of positive layer counts")
        if self.sequences_per_plan < 1:
            raise ValueError("sequences_per_plan must be at least 1")

    @property
    def n_qubits(self) -> int:
        return self.design.n_qubits


def m0_schedule(m0_range: Sequence[int], count: int) -> list[int]:
    """Spread ``count`` sequences over the sorted ``m0_range``.

    With fewer sequences than points the points are subsampled at even
    spacing; with more, every point gets one sequence and the remainder
    cycles through the points again from the start.
    """
    points = sorted(int(m) for m in m0_range)
    if count <= len(points):
        idx = np.round(np.linspace(0, len(points) - 1, count)).astype(int)
        return [points[i] for i in idx]
    return [points[i % len(points)] for i in range(count)]


def generate_rav(plan: ExperimentPlan, m0: int, rng) -> VerificationSequence:
    """Random prefix of ``m0`` layers plus a compiled inverse.

    Raises:
        stoq.BudgetExceededError: the inverse never met ``plan.epsilon_target``.
    """
    if m0 < 1:
        raise ValueError("m0 must be at least 1")
    seed = rng if isinstance(rng, int) else None
    rng = make_rng(rng)
    design = plan.design
    initial = [generate_layer(design, rng) for _ in range(m0)]
    u = layers_unitary(initial, design.n_qubits)
    result = stoq.compile_until(
        u.conj().T,
        stoq.LayerSource(design),
        plan.stoq_params,
        plan.epsilon_target,
        plan.max_restarts,
        rng,
    )
    inverse = list(result.instructions)
    n = 1 << design.n_qubits
    epsilon = 1.0 - abs(np.trace(result.product @ u)) ** 2 / n**2
    return VerificationSequence(
        RAV, design.n_qubits, tuple(initial + inverse), seed, m0, len(inverse), float(epsilon)
    )


def generate_xeb_matched(rav: VerificationSequence, design: LayerDesign, rng) -> VerificationSequence:
    if rav.kind != RAV:
        raise ValueError("can only match the length of a RAV sequence")
    if design.n_qubits != rav.n_qubits:
        raise ValueError("design and sequence disagree on qubit count")
    seed = rng if isinstance(rng, int) else None
    rng = make_rng(rng)
    layers = tuple(generate_layer(design, rng) for _ in range(rav.m))
    return VerificationSequence(XEB, rav.n_qubits, layers, seed)


@dataclass
class ExperimentPair:
    index: int
    m0: int
    seed: int
    rav: VerificationSequence | None = None
    xeb: VerificationSequence | None = None
    status: str = "ok"
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def generate_pair(plan: ExperimentPlan, index: int, m0: int, seed: int) -> ExperimentPair:
    rav_seed, xeb_seed = spawn_seeds(seed, 2)
    pair = ExperimentPair(index, m0, seed)
    try:
        pair.rav = generate_rav(plan, m0, rav_seed)
    except stoq.BudgetExceededError as exc:
        pair.status, pair.error = "budget_exceeded", str(exc)
        return pair
    pair.xeb = generate_xeb_matched(pair.rav, plan.design, xeb_seed)
    return pair


def generate_experiment(plan: ExperimentPlan, workers: int = 1) -> list[ExperimentPair]:
    """One (RAV, matched XEB) pair per scheduled ``m0``, seeded from ``plan.seed``.

    Failed pairs are kept with a non-ok status instead of aborting the run.
    Results come back in schedule order whatever the worker count.
    """
    schedule = m0_schedule(plan.m0_range, plan.sequences_per_plan)
    seeds = spawn_seeds(plan.seed, len(schedule))
    jobs = [(plan, i, m0, s) for i, (m0, s) in enumerate(zip(schedule, seeds))]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(workers) as pool:
            pairs = list(pool.map(generate_pair, *zip(*jobs)))
    else:
        pairs = [generate_pair(*job) for job in jobs]
    for p in pairs:
        if not p.ok:
            log.warning("pair %d (m0=%d) failed: %s", p.index, p.m0, p.error)
    return pairs
