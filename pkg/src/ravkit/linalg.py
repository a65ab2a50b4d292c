"""Dense linear algebra and state primitives for small qubit registers.

Operators and states are plain complex ``numpy`` arrays. Qubit 0 is the
most-significant bit of a computational-basis index, so for ``n = 2`` the
basis order is ``|00>, |01>, |10>, |11>`` with the left bit on qubit 0.

Random draws go through :class:`numpy.random.Generator` backed by PCG64,
which is bit-reproducible across platforms for a given integer seed.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy.stats import unitary_group

UNITARY_ATOL = 1e-10
DERIVED_ATOL = 1e-9
MAX_QUBITS = 10


def make_rng(seed: int | np.random.Generator | None) -> np.random.Generator:
    """Return a PCG64 generator for ``seed`` (passing a generator through)."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(seed))


def spawn_seeds(seed: int, count: int) -> list[int]:
    """Derive ``count`` independent 63-bit child seeds from ``seed``.

    Children come from :class:`numpy.random.SeedSequence`, so the i-th
    child does not depend on how many siblings are requested.
    """
    children = np.random.SeedSequence(seed).spawn(count)
    return [int(c.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1)) for c in children]


def num_qubits(dim: int) -> int:
    n = int(dim).bit_length() - 1
    if dim < 1 or (1 << n) != dim:
        raise ValueError(f"dimension {dim} is not a power of two")
    return n


def is_unitary(u: np.ndarray, atol: float = UNITARY_ATOL) -> bool:
    u = np.asarray(u)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        return False
    return bool(np.max(np.abs(u @ u.conj().T - np.eye(u.shape[0]))) <= atol)


def check_unitary(u: np.ndarray, atol: float = UNITARY_ATOL) -> np.ndarray:
    """Validate ``u`` as a unitary on a register of qubits and return it."""
    u = np.asarray(u, dtype=complex)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {u.shape}")
    num_qubits(u.shape[0])
    if not is_unitary(u, atol):
        raise ValueError("matrix is not unitary within tolerance")
    return u


def check_hermitian(h: np.ndarray, atol: float = UNITARY_ATOL) -> np.ndarray:
    h = np.asarray(h, dtype=complex)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {h.shape}")
    if np.max(np.abs(h - h.conj().T)) > atol:
        raise ValueError("matrix is not Hermitian within tolerance")
    return h


def _check_targets(targets: Sequence[int], n: int) -> tuple[int, ...]:
    targets = tuple(int(t) for t in targets)
    if len(set(targets)) != len(targets):
        raise ValueError(f"duplicate target qubits {targets}")
    if any(t < 0 or t >= n for t in targets):
        raise ValueError(f"targets {targets} out of range for {n} qubits")
    return targets


def apply_gate(gate: np.ndarray, targets: Sequence[int], operand: np.ndarray, n: int) -> np.ndarray:
    """Left-multiply ``operand`` by ``gate`` acting on ``targets`` of ``n`` qubits.

    ``operand`` is either a state vector of length ``2**n`` or a matrix with
    ``2**n`` rows; the embedded gate is never formed explicitly.
    """
    targets = _check_targets(targets, n)
    k = len(targets)
    if gate.shape != (1 << k, 1 << k):
        raise ValueError(f"gate of shape {gate.shape} does not match {k} targets")
    operand = np.asarray(operand)
    trailing = operand.shape[1:]
    psi = operand.reshape((2,) * n + trailing)
    g = gate.reshape((2,) * (2 * k))
    out = np.tensordot(g, psi, axes=(list(range(k, 2 * k)), list(targets)))
    # tensordot puts the gate's output axes first
    out = np.moveaxis(out, list(range(k)), list(targets))
    return out.reshape(operand.shape)


def embed_gate(gate: np.ndarray, targets: Sequence[int], n: int) -> np.ndarray:
    """Return the ``2**n`` operator acting as ``gate`` on ``targets`` (in order)."""
    gate = np.asarray(gate, dtype=complex)
    if len(targets) not in (1, 2):
        raise ValueError("only 1- and 2-qubit gates can be embedded")
    return apply_gate(gate, targets, np.eye(1 << n, dtype=complex), n)


def hs_distance(u: np.ndarray, v: np.ndarray) -> float:
    """Hilbert-Schmidt overlap magnitude ``|Tr(V^dagger U)|``."""
    u = np.asarray(u)
    v = np.asarray(v)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    # Tr(V^dag U) = sum_ij conj(V_ij) U_ij, avoiding the product
    return float(abs(np.vdot(v, u)))


def exp_i_hermitian(h: np.ndarray, t: float) -> np.ndarray:
    """Return ``exp(i H t)`` through the eigendecomposition of ``H``."""
    h = check_hermitian(h)
    w, vecs = np.linalg.eigh(h)
    return (vecs * np.exp(1j * w * t)) @ vecs.conj().T


def basis_state(index: int, n: int) -> np.ndarray:
    if not 0 <= index < (1 << n):
        raise ValueError(f"basis index {index} out of range for {n} qubits")
    psi = np.zeros(1 << n, dtype=complex)
    psi[index] = 1.0
    return psi


def measurement_probs(state: np.ndarray) -> np.ndarray:
    """Computational-basis outcome probabilities of a pure state."""
    return np.abs(np.asarray(state)) ** 2


def sample_counts(probs: np.ndarray, shots: int, rng: np.random.Generator) -> np.ndarray:
    """Draw a multinomial count vector of ``shots`` outcomes."""
    if shots < 1:
        raise ValueError("shot count must be at least 1")
    p = np.clip(np.asarray(probs, dtype=float), 0.0, None)
    return rng.multinomial(shots, p / p.sum())


def sample_outcomes(probs: np.ndarray, shots: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``shots`` individual outcome indices in shot order."""
    if shots < 1:
        raise ValueError("shot count must be at least 1")
    p = np.clip(np.asarray(probs, dtype=float), 0.0, None)
    return rng.choice(p.size, size=shots, p=p / p.sum())


def haar_random_unitary(n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw a ``2**n`` unitary from the Haar measure."""
    if n < 1:
        raise ValueError("need at least one qubit")
    return unitary_group.rvs(1 << n, random_state=rng)
