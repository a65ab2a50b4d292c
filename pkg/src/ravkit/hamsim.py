"""Ising time-evolution targets and Hamiltonian compilation baselines.

Coefficients are energies in kHz with hbar = 1 and durations are in ms,
so ``H * t`` is dimensionless. Every Hamiltonian term is ``c_k P_k`` with
``P_k`` a Pauli string, which makes ``exp(i H_k t) = cos(c_k t) I + i sin(c_k t) P_k``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import stoq
from .linalg import embed_gate, exp_i_hermitian, make_rng

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)

# (couplings J_{i,i+1}, transverse fields h_i) per register size
ISING_COEFFICIENTS = {
    2: ((1.27,), (1.54, 1.19)),
    3: ((1.81, 1.27), (1.54, 1.19, 0.53)),
    5: ((1.20, 1.40, 1.60, 1.80), (1.60, 1.30, 1.00, 0.70, 0.40)),
    8: (
        (1.20, 1.30, 1.40, 1.50, 1.60, 1.70, 1.80),
        (1.40, 1.10, 0.80, 1.00, 1.20, 1.50, 1.70, 1.30),
    ),
}

DEFAULT_TAU = 0.5


@dataclass(frozen=True)
class HamiltonianSpec:
    n_qubits: int
    couplings: tuple[float, ...]
    fields: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "couplings", tuple(float(c) for c in self.couplings))
        object.__setattr__(self, "fields", tuple(float(h) for h in self.fields))
        if len(self.couplings) != self.n_qubits - 1 or len(self.fields) != self.n_qubits:
            raise ValueError("need n-1 couplings and n fields")

    @classmethod
    def preset(cls, n: int) -> "HamiltonianSpec":
        if n not in ISING_COEFFICIENTS:
            raise ValueError(f"no tabulated coefficients for n={n}; available {sorted(ISING_COEFFICIENTS)}")
        j, h = ISING_COEFFICIENTS[n]
        return cls(n, j, h)

    @property
    def num_terms(self) -> int:
        return 2 * self.n_qubits - 1


@dataclass(frozen=True)
class Term:
    coefficient: float
    pauli: np.ndarray  # full 2**n Pauli string
    label: str

    @property
    def matrix(self) -> np.ndarray:
        return self.coefficient * self.pauli

    def evolve(self, t: float) -> np.ndarray:
        """``exp(i c P t)`` in closed form."""
        a = self.coefficient * t
        return math.cos(a) * np.eye(self.pauli.shape[0]) + 1j * math.sin(a) * self.pauli


def build_ising(spec: HamiltonianSpec) -> tuple[np.ndarray, list[Term]]:
    """Return ``H = sum J X_i X_{i+1} + sum h Y_i`` and its terms (couplings first)."""
    n = spec.n_qubits
    xx = np.kron(PAULI_X, PAULI_X)
    terms = [
        Term(j, embed_gate(xx, [i, i + 1], n), f"XX{i}{i + 1}") for i, j in enumerate(spec.couplings)
    ]
    terms += [Term(h, embed_gate(PAULI_Y, [i], n), f"Y{i}") for i, h in enumerate(spec.fields)]
    hamiltonian = sum(t.matrix for t in terms)
    return hamiltonian, terms


def time_evolution_target(spec: HamiltonianSpec, tau: float = DEFAULT_TAU) -> np.ndarray:
    h, _ = build_ising(spec)
    return exp_i_hermitian(h, tau)


@dataclass(frozen=True)
class TermStep:
    term_index: int
    duration: float


@dataclass
class CompiledHamSequence:
    steps: list[TermStep]
    provenance: str
    final_cost: float | None = None

    @property
    def exec_time(self) -> float:
        return float(sum(abs(s.duration) for s in self.steps))


@dataclass(frozen=True)
class TermSource:
    """Draws one term uniformly and a duration uniform on ``[-eps*tau, eps*tau]``."""

    terms: tuple[Term, ...]
    n_qubits: int
    max_duration: float

    def draw(self, rng):
        k = int(rng.integers(len(self.terms)))
        t = float(rng.uniform(-self.max_duration, self.max_duration))
        return TermStep(k, t), self.terms[k].evolve(t)


def term_instruction_source(spec: HamiltonianSpec, tau: float = DEFAULT_TAU, eps_frac: float = 0.2) -> TermSource:
    if not 0.0 < eps_frac <= 1.0:
        raise ValueError("eps_frac must lie in (0, 1]")
    _, terms = build_ising(spec)
    return TermSource(tuple(terms), spec.n_qubits, eps_frac * tau)


def steps_product(steps: Sequence[TermStep], terms: Sequence[Term]) -> np.ndarray:
    dim = terms[0].pauli.shape[0]
    out = np.eye(dim, dtype=complex)
    for s in steps:
        out = terms[s.term_index].evolve(s.duration) @ out
    return out


def _with_cost(seq: CompiledHamSequence, spec: HamiltonianSpec, tau: float) -> CompiledHamSequence:
    _, terms = build_ising(spec)
    seq.final_cost = stoq.cost(time_evolution_target(spec, tau), steps_product(seq.steps, terms))
    return seq


def trotter_randomized(
    spec: HamiltonianSpec, tau: float = DEFAULT_TAU, steps: int = 10, rng=None
) -> CompiledHamSequence:
    """First-order product formula with a fresh random term order in each slice."""
    if steps < 1:
        raise ValueError("need at least one Trotter step")
    rng = make_rng(rng)
    dt = tau / steps
    seq = []
    for _ in range(steps):
        seq += [TermStep(int(k), dt) for k in rng.permutation(spec.num_terms)]
    return _with_cost(CompiledHamSequence(seq, "trotter"), spec, tau)


def qdrift(spec: HamiltonianSpec, tau: float = DEFAULT_TAU, reps: int = 1000, rng=None) -> CompiledHamSequence:
    """QDRIFT: sample term ``k`` with probability ``|c_k| / L1`` for each of ``reps`` steps.

    Each step applies ``exp(i sign(c_k) (L1 tau / reps) P_k)``, i.e. term ``k``
    for duration ``L1 tau / (reps |c_k|)``; execution time is the sum of these.
    """
    if reps < 1:
        raise ValueError("need at least one QDRIFT repetition")
    rng = make_rng(rng)
    _, terms = build_ising(spec)
    weights = np.array([abs(t.coefficient) for t in terms])
    l1 = weights.sum()
    picks = rng.choice(len(terms), size=reps, p=weights / l1)
    seq = [TermStep(int(k), l1 * tau / (reps * weights[k])) for k in picks]
    return _with_cost(CompiledHamSequence(seq, "qdrift"), spec, tau)


def stoq_compile(
    spec: HamiltonianSpec,
    tau: float = DEFAULT_TAU,
    params: stoq.StoqParams = stoq.StoqParams(),
    eps_frac: float = 0.2,
    rng=None,
) -> tuple[CompiledHamSequence, stoq.CompiledSequence]:
    source = term_instruction_source(spec, tau, eps_frac)
    result = stoq.compile(time_evolution_target(spec, tau), source, params, rng)
    seq = CompiledHamSequence(list(result.instructions), "stoq", result.final_cost)
    return seq, result


class _PathMetric:
    """Cost-normalized distance from a unitary to ``{exp(i H t): t in [0, tau]}``."""

    def __init__(self, h: np.ndarray, tau: float, grid: int = 1001):
        self.w, self.vecs = np.linalg.eigh(h)
        self.tau = tau
        self.ts = np.linspace(0.0, tau, grid)
        self.phases = np.exp(1j * np.outer(self.ts, self.w))

    def _dist(self, diag: np.ndarray, t) -> np.ndarray:
        # |Tr(V^dag e^{iHt})| = |sum_j (W^dag V^dag W)_jj e^{i w_j t}|
        ph = np.exp(1j * np.multiply.outer(t, self.w))
        return 1.0 - np.abs(ph @ diag) / diag.size

    def __call__(self, v: np.ndarray) -> tuple[float, float]:
        diag = np.einsum("ij,ij->j", self.vecs.conj(), v.conj().T @ self.vecs)
        d = 1.0 - np.abs(self.phases @ diag) / diag.size
        i = int(np.argmin(d))
        lo = self.ts[max(i - 1, 0)]
        hi = self.ts[min(i + 1, len(self.ts) - 1)]
        t, best = _golden_min(lambda x: float(self._dist(diag, x)), lo, hi)
        if d[i] < best:
            t, best = float(self.ts[i]), float(d[i])
        return max(best, 0.0), t


def _golden_min(f, lo: float, hi: float, tol: float = 1e-12) -> tuple[float, float]:
    invphi = (math.sqrt(5) - 1) / 2
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    x = (a + b) / 2
    return x, f(x)


def distance_to_path(v: np.ndarray, spec: HamiltonianSpec, tau: float = DEFAULT_TAU) -> float:
    h, _ = build_ising(spec)
    return _PathMetric(h, tau)(v)[0]


def path_distance(seq: CompiledHamSequence, spec: HamiltonianSpec, tau: float = DEFAULT_TAU) -> np.ndarray:
    """Distance ``d_m`` of every prefix ``m = 1..M`` from the ideal evolution path.

    Reported as ``1 - |Tr(V_m^dag e^{iHt})| / N`` at the closest ``t``, so 0
    means the prefix lies on the path. The closest ``t`` comes from a 1001
    point grid refined by golden-section search.
    """
    h, terms = build_ising(spec)
    metric = _PathMetric(h, tau)
    v = np.eye(1 << spec.n_qubits, dtype=complex)
    out = np.empty(len(seq.steps))
    for m, s in enumerate(seq.steps):
        v = terms[s.term_index].evolve(s.duration) @ v
        out[m] = metric(v)[0]
    return out
