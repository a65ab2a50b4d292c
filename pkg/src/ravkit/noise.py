"""Noisy simulation of verification sequences.

Depolarization is a global channel on the whole register. Because such a
channel commutes with unitary conjugation, a circuit with per-gate
depolarization still ends in ``(1 - L) |psi><psi| + L I/N`` where ``psi`` is
the ideal output and ``1 - L`` is the product of the per-gate survival
factors, so no density matrix is needed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .gates import GateKind, apply_gates
from .linalg import basis_state, make_rng, sample_outcomes

R_REFERENCE_ANGLE = math.pi / 2
MS_REFERENCE_ANGLE = math.pi / 20


@dataclass(frozen=True)
class Noiseless:
    pass


@dataclass(frozen=True)
class GlobalDepolarizing:
    lam: float

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("depolarization must lie in [0, 1]")


@dataclass(frozen=True)
class PerGateDepolarizing:
    """Depolarization ``rate`` per reference rotation, proportional to ``|theta|``.

    The reference is ``pi/2`` for R and ``pi/20`` for MS; RZ is virtual and
    never depolarizes.
    """

    rate: float

    def __post_init__(self):
        if not 0.0 <= self.rate <= 1.0:
            raise ValueError("depolarization rate must lie in [0, 1]")

    def gate_lambda(self, gate) -> float:
        if gate.kind is GateKind.R:
            ref = R_REFERENCE_ANGLE
        elif gate.kind is GateKind.MS:
            ref = MS_REFERENCE_ANGLE
        else:
            return 0.0
        return min(1.0, self.rate * abs(gate.theta) / ref)


@dataclass(frozen=True)
class CoherentOverrotation:
    """Adds ``delta`` to theta of every physical gate (R, MS); RZ is untouched."""

    delta: float

    def __post_init__(self):
        if not math.isfinite(self.delta):
            raise ValueError("over-rotation must be finite")

    def perturb(self, gate):
        if gate.kind in (GateKind.R, GateKind.MS):
            return gate.with_theta(gate.theta + self.delta)
        return gate


NoiseModel = Noiseless | GlobalDepolarizing | PerGateDepolarizing | CoherentOverrotation


@dataclass
class SimOutput:
    ideal_probs: np.ndarray
    noisy_probs: np.ndarray
    accumulated_lambda: float
    initial_state_index: int


def _gates(seq):
    return [g for layer in seq.layers for g in layer.gates]


def simulate(seq, noise: NoiseModel, x0: int) -> SimOutput:
    n = seq.n_qubits
    gates = _gates(seq)
    psi0 = basis_state(x0, n)
    ideal = np.abs(apply_gates(gates, psi0, n)) ** 2
    lam = 0.0
    noisy = ideal
    if isinstance(noise, GlobalDepolarizing):
        lam = noise.lam
    elif isinstance(noise, PerGateDepolarizing):
        survival = 1.0
        for g in gates:
            survival *= 1.0 - noise.gate_lambda(g)
        lam = 1.0 - survival
    elif isinstance(noise, CoherentOverrotation):
        if noise.delta != 0.0:
            perturbed = [noise.perturb(g) for g in gates]
            noisy = np.abs(apply_gates(perturbed, psi0, n)) ** 2
    elif not isinstance(noise, Noiseless):
        raise TypeError(f"unsupported noise model {noise!r}")
    if lam:
        noisy = (1.0 - lam) * ideal + lam / ideal.size
    return SimOutput(ideal, noisy, lam, x0)


@dataclass
class ShotResult:
    sim: SimOutput
    outcomes: np.ndarray  # per-shot outcome index, in shot order
    counts: np.ndarray

    @property
    def q_x0(self) -> float:
        return self.counts[self.sim.initial_state_index] / self.outcomes.size


def run_shots(seq, noise: NoiseModel, x0: int, shots: int, rng) -> ShotResult:
    rng = make_rng(rng)
    sim = simulate(seq, noise, x0)
    outcomes = sample_outcomes(sim.noisy_probs, shots, rng)
    counts = np.bincount(outcomes, minlength=sim.noisy_probs.size)
    return ShotResult(sim, outcomes, counts)
