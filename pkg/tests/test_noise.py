import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ravkit import protocol
from ravkit.gates import GateInstance, GateKind, Layer, default_design, generate_layer, gate_matrix
from ravkit.linalg import make_rng
from ravkit.noise import (
    CoherentOverrotation,
    GlobalDepolarizing,
    Noiseless,
    PerGateDepolarizing,
    run_shots,
    simulate,
)

DESIGN = default_design(2)


def xeb_sequence(m, seed, n=2):
    rng = make_rng(seed)
    layers = tuple(generate_layer(default_design(n), rng) for _ in range(m))
    return protocol.VerificationSequence(protocol.XEB, n, layers, seed)


def single_gate_sequence(gate, n=1):
    return protocol.VerificationSequence(protocol.XEB, n, (Layer((gate,)),))


@pytest.fixture(scope="module")
def rav_seq():
    p = protocol.ExperimentPlan(DESIGN, (6,), seed=1)
    return protocol.generate_rav(p, 6, 77)


def test_noiseless_rav_returns(rav_seq):
    for x0 in range(4):
        out = simulate(rav_seq, Noiseless(), x0)
        assert out.noisy_probs[x0] == out.ideal_probs[x0]
        assert out.ideal_probs[x0] >= 1 - 3 * rav_seq.epsilon
        assert out.accumulated_lambda == 0


def test_global_full_depolarization_is_uniform():
    out = simulate(xeb_sequence(5, 0), GlobalDepolarizing(1.0), 2)
    assert np.array_equal(out.noisy_probs, np.full(4, 0.25))


@given(st.floats(0, 1), st.integers(0, 3), st.integers(0, 1000))
@settings(max_examples=30, deadline=None)
def test_global_mixing_identity(lam, x0, seed):
    out = simulate(xeb_sequence(4, seed), GlobalDepolarizing(lam), x0)
    expected = (1 - lam) * out.ideal_probs + lam / 4
    assert np.max(np.abs(out.noisy_probs - expected)) <= 1e-10
    assert out.accumulated_lambda == lam


def test_ideal_probs_match_matrix_product():
    seq = xeb_sequence(7, 3, n=3)
    u = seq.unitary()
    out = simulate(seq, Noiseless(), 5)
    assert np.allclose(out.ideal_probs, np.abs(u[:, 5]) ** 2, atol=1e-12)


def test_per_gate_reference_rotations():
    r = GateInstance(GateKind.R, (0,), math.pi / 2, 0.0)
    assert simulate(single_gate_sequence(r), PerGateDepolarizing(0.01), 0).accumulated_lambda == pytest.approx(0.01)
    ms = GateInstance(GateKind.MS, (0, 1), -math.pi / 20, 0.3)
    out = simulate(single_gate_sequence(ms, 2), PerGateDepolarizing(0.02), 0)
    assert out.accumulated_lambda == pytest.approx(0.02)
    rz = GateInstance(GateKind.RZ, (0,), 1.0)
    assert simulate(single_gate_sequence(rz), PerGateDepolarizing(0.5), 0).accumulated_lambda == 0


@pytest.mark.parametrize("count", [1, 5, 40])
def test_per_gate_accumulation_closed_form(count):
    theta = 0.3
    gates = tuple(GateInstance(GateKind.R, (0,), theta, 0.1 * i) for i in range(count))
    seq = protocol.VerificationSequence(protocol.XEB, 1, (Layer(gates),))
    lam_g = 0.01 * theta / (math.pi / 2)
    out = simulate(seq, PerGateDepolarizing(0.01), 0)
    assert out.accumulated_lambda == pytest.approx(1 - (1 - lam_g) ** count, abs=1e-12)
    assert np.allclose(out.noisy_probs, (1 - out.accumulated_lambda) * out.ideal_probs + out.accumulated_lambda / 2)


def test_per_gate_clamps():
    big = GateInstance(GateKind.R, (0,), 100.0, 0.0)
    assert PerGateDepolarizing(1.0).gate_lambda(big) == 1.0


def test_overrotation_zero_is_noiseless():
    seq = xeb_sequence(6, 4)
    a = simulate(seq, CoherentOverrotation(0.0), 1)
    b = simulate(seq, Noiseless(), 1)
    assert np.array_equal(a.noisy_probs, b.noisy_probs)


def test_overrotation_shifts_physical_gates_only():
    r = GateInstance(GateKind.R, (0,), 0.2, 0.0)
    rz = GateInstance(GateKind.RZ, (0,), 0.2)
    noise = CoherentOverrotation(0.15)
    assert noise.perturb(r).theta == pytest.approx(0.35)
    assert noise.perturb(rz) is rz
    out = simulate(single_gate_sequence(r), noise, 0)
    expected = np.abs(gate_matrix(GateInstance(GateKind.R, (0,), 0.35, 0.0))[:, 0]) ** 2
    assert np.allclose(out.noisy_probs, expected)
    assert out.accumulated_lambda == 0


def test_depolarization_fidelity_bridge():
    # state fidelity of rho = (1-L)|psi><psi| + L I/N with |psi> is (1-L) + L/N
    seq = xeb_sequence(5, 9)
    out = simulate(seq, GlobalDepolarizing(0.37), 0)
    psi = seq.unitary()[:, 0]
    rho = (1 - 0.37) * np.outer(psi, psi.conj()) + 0.37 * np.eye(4) / 4
    f = float(np.real(psi.conj() @ rho @ psi))
    big_f = 1 - out.accumulated_lambda
    assert f == pytest.approx(big_f + (1 - big_f) / 4, abs=1e-10)


def test_noise_validation():
    with pytest.raises(ValueError):
        GlobalDepolarizing(1.5)
    with pytest.raises(ValueError):
        PerGateDepolarizing(-0.1)
    with pytest.raises(ValueError):
        CoherentOverrotation(float("inf"))
    with pytest.raises(TypeError):
        simulate(xeb_sequence(1, 0), object(), 0)


def test_run_shots_empty_circuit():
    seq = protocol.VerificationSequence(protocol.XEB, 2, ())
    res = run_shots(seq, Noiseless(), 3, 100, make_rng(0))
    assert res.counts[3] == 100
    assert res.q_x0 == 1.0
    assert res.outcomes.shape == (100,)


def test_run_shots_fully_mixed():
    seq = xeb_sequence(2, 1)
    res = run_shots(seq, GlobalDepolarizing(1.0), 0, 10**6, make_rng(1))
    assert np.all(np.abs(res.counts / 1e6 - 0.25) < 0.005)


def test_run_shots_seeded():
    seq = xeb_sequence(3, 2)
    a = run_shots(seq, GlobalDepolarizing(0.2), 1, 50, 8)
    b = run_shots(seq, GlobalDepolarizing(0.2), 1, 50, 8)
    assert np.array_equal(a.outcomes, b.outcomes)
    assert a.counts.sum() == 50
