"""Continuously-parameterized native gates and random layer generation."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .linalg import apply_gate


class GateKind(str, enum.Enum):
    R = "R"
    RZ = "RZ"
    MS = "MS"
    XX = "XX"

    @property
    def arity(self) -> int:
        return 1 if self in (GateKind.R, GateKind.RZ) else 2


@dataclass(frozen=True)
class GateInstance:
    kind: GateKind
    targets: tuple[int, ...]
    theta: float
    phi: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", GateKind(self.kind))
        object.__setattr__(self, "targets", tuple(int(t) for t in self.targets))
        if len(self.targets) != self.kind.arity:
            raise ValueError(f"{self.kind.value} takes {self.kind.arity} target(s), got {self.targets}")
        if len(set(self.targets)) != len(self.targets):
            raise ValueError(f"duplicate targets {self.targets}")
        if not (math.isfinite(self.theta) and math.isfinite(self.phi)):
            raise ValueError("gate angles must be finite")

    def with_theta(self, theta: float) -> "GateInstance":
        return GateInstance(self.kind, self.targets, theta, self.phi)


def gate_matrix(g: GateInstance) -> np.ndarray:
    """Return the 2x2 or 4x4 unitary of a gate instance.

    ``R(theta, phi) = exp(-i theta/2 (cos phi X + sin phi Y))`` is a rotation
    by ``theta`` about an equatorial axis at azimuth ``phi``. ``RZ`` is
    ``diag(1, e^{i theta})``. ``MS`` uses half-angle entries with the
    ``e^{-+2i phi}`` corner phases, while ``XX(theta) = exp(-i theta X.X)``
    uses full-angle entries, so ``MS(theta, 0) == XX(theta / 2)``.
    """
    th, ph = g.theta, g.phi
    if g.kind is GateKind.R:
        c, s = math.cos(th / 2), math.sin(th / 2)
        return np.array(
            [[c, -1j * s * np.exp(-1j * ph)], [-1j * s * np.exp(1j * ph), c]], dtype=complex
        )
    if g.kind is GateKind.RZ:
        return np.array([[1, 0], [0, np.exp(1j * th)]], dtype=complex)
    if g.kind is GateKind.MS:
        c, s = math.cos(th / 2), math.sin(th / 2)
        return np.array(
            [
                [c, 0, 0, -1j * s * np.exp(-2j * ph)],
                [0, c, -1j * s, 0],
                [0, -1j * s, c, 0],
                [-1j * s * np.exp(2j * ph), 0, 0, c],
            ],
            dtype=complex,
        )
    c, s = math.cos(th), math.sin(th)
    return np.array(
        [[c, 0, 0, -1j * s], [0, c, -1j * s, 0], [0, -1j * s, c, 0], [-1j * s, 0, 0, c]],
        dtype=complex,
    )


@dataclass(frozen=True)
class ParamRange:
    lo: float
    hi: float

    def __post_init__(self):
        if self.lo > self.hi:
            raise ValueError(f"empty parameter range [{self.lo}, {self.hi}]")

    def draw(self, rng: np.random.Generator) -> float:
        return float(rng.uniform(self.lo, self.hi))


@dataclass(frozen=True)
class Slot:
    """How many gates of one kind a layer holds, and their angle ranges."""

    kind: GateKind
    count: int
    theta_range: ParamRange
    phi_range: ParamRange = ParamRange(0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "kind", GateKind(self.kind))
        if self.count < 0:
            raise ValueError("slot count must be non-negative")


@dataclass(frozen=True)
class LayerDesign:
    n_qubits: int
    slots: tuple[Slot, ...]

    def __post_init__(self):
        object.__setattr__(self, "slots", tuple(self.slots))
        if self.gates_per_layer < 1:
            raise ValueError("a layer design must place at least one gate")
        needs_pair = any(s.kind.arity == 2 and s.count > 0 for s in self.slots)
        if self.n_qubits < (2 if needs_pair else 1):
            raise ValueError(f"design needs more than {self.n_qubits} qubit(s)")

    @property
    def gates_per_layer(self) -> int:
        return sum(s.count for s in self.slots)


@dataclass(frozen=True)
class Layer:
    gates: tuple[GateInstance, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))

    def __len__(self) -> int:
        return len(self.gates)

    def __iter__(self):
        return iter(self.gates)


def default_design(n_qubits: int) -> LayerDesign:
    """Three R, three RZ and one MS per layer with ``|theta| <= pi/10``."""
    theta = ParamRange(-math.pi / 10, math.pi / 10)
    phi = ParamRange(-math.pi, math.pi)
    return LayerDesign(
        n_qubits,
        (
            Slot(GateKind.R, 3, theta, phi),
            Slot(GateKind.RZ, 3, theta),
            Slot(GateKind.MS, 1, theta, phi),
        ),
    )


def _draw_targets(arity: int, n: int, rng: np.random.Generator) -> tuple[int, ...]:
    if arity == 1:
        return (int(rng.integers(n)),)
    # unordered pair uniform over all pairs, stored in ascending order
    pair = rng.choice(n, size=2, replace=False)
    return tuple(sorted(int(q) for q in pair))


def generate_layer(design: LayerDesign, rng: np.random.Generator) -> Layer:
    gates = []
    for slot in design.slots:
        for _ in range(slot.count):
            theta = slot.theta_range.draw(rng)
            phi = slot.phi_range.draw(rng) if slot.kind in (GateKind.R, GateKind.MS) else 0.0
            targets = _draw_targets(slot.kind.arity, design.n_qubits, rng)
            gates.append(GateInstance(slot.kind, targets, theta, phi))
    order = rng.permutation(len(gates))
    return Layer(tuple(gates[i] for i in order))


def apply_gates(gates: Sequence[GateInstance], operand: np.ndarray, n: int) -> np.ndarray:
    """Apply ``gates`` in list order (first gate acts first) to a state or matrix."""
    out = operand
    for g in gates:
        out = apply_gate(gate_matrix(g), g.targets, out, n)
    return out


def layer_unitary(layer: Layer | Sequence[GateInstance], n: int) -> np.ndarray:
    gates = layer.gates if isinstance(layer, Layer) else tuple(layer)
    return apply_gates(gates, np.eye(1 << n, dtype=complex), n)


def layers_unitary(layers: Sequence[Layer], n: int) -> np.ndarray:
    """Product of a layer sequence, earliest layer rightmost."""
    out = np.eye(1 << n, dtype=complex)
    for layer in layers:
        out = apply_gates(layer.gates, out, n)
    return out
