import numpy as np
import pytest

from rapgen.hilbert import (
    LevelScheme,
    Operator,
    QuantumState,
    basis_state,
    basis_labels,
    cesium_scheme,
    closed_scheme,
    embed_single,
    expectation,
    local_projector,
    partial_trace,
    rubidium_scheme,
    superposition,
    two_site_projector,
)


def kron_embed(local, index, n, d):
    """Independent reference: explicit Kronecker chain."""
    mats = [np.eye(d, dtype=complex)] * n
    mats[index] = np.asarray(local, dtype=complex)
    out = mats[0]
    for m in mats[1:]:
        out = np.kron(out, m)
    return out


class TestLevelScheme:
    def test_cesium_rates_sum_to_gamma(self):
        gamma = 3e-6
        scheme = cesium_scheme(gamma)
        assert sum(rate for *_, rate in scheme.decay_channels) == pytest.approx(gamma)
        assert scheme.dim_local == 3

    def test_rubidium_has_dump(self):
        scheme = rubidium_scheme(1e-5)
        assert scheme.levels == ("g0", "g1", "ryd", "dump")
        assert scheme.dim_local == 4

    def test_dump_without_channel_rejected(self):
        with pytest.raises(ValueError):
            LevelScheme(("g0", "g1", "ryd", "dump"), (), 0.0)

    def test_negative_rate_rejected(self):
        with pytest.raises(ValueError):
            LevelScheme(("g0", "g1", "ryd"), (("ryd", "g0", -1.0),), 0.0)


class TestQuantumState:
    def test_basis_state_index(self):
        psi = basis_state("1r0")
        # digits (1, 2, 0) base 3, atom 0 slowest
        assert psi.amplitudes[1 * 9 + 2 * 3 + 0] == 1.0

    def test_pure_norm_validation(self):
        amps = np.zeros(9, dtype=complex)
        amps[0] = 1.0 + 1e-6
        QuantumState("pure", 2, 3, amps)  # structural construction is fine
        with pytest.raises(ValueError):
            QuantumState("pure", 2, 3, amps).validate()

    def test_density_validation(self):
        rho = np.eye(9, dtype=complex) / 9.0
        QuantumState("density", 2, 3, rho).validate()
        bad = rho.copy()
        bad[0, 1] = 1e-8  # not Hermitian
        with pytest.raises(ValueError):
            QuantumState("density", 2, 3, bad).validate()

    def test_amplitudes_read_only(self):
        psi = basis_state("00")
        with pytest.raises(ValueError):
            psi.amplitudes[0] = 0.0

    def test_labels_roundtrip(self):
        labels = basis_labels(2, 3)
        assert labels[0] == "00"
        assert labels[8] == "rr"
        for lab in ("01", "1r", "r0"):
            psi = basis_state(lab)
            assert labels[int(np.argmax(np.abs(psi.amplitudes)))] == lab


class TestEmbedSingle:
    def test_identity_case(self):
        op = embed_single(np.eye(3), 1, 2, 3)
        assert np.array_equal(op.matrix, np.eye(9))

    def test_ryd_projector_atom0(self):
        op = embed_single(local_projector("ryd", 3), 0, 2, 3)
        diag = np.real(np.diag(op.matrix))
        assert np.array_equal(np.nonzero(diag)[0], [6, 7, 8])

    def test_trace_scaling_against_kron(self):
        rng = np.random.default_rng(3)
        for n, d in ((2, 3), (3, 3), (2, 4)):
            a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
            for i in range(n):
                op = embed_single(a, i, n, d)
                ref = kron_embed(a, i, n, d)
                assert np.allclose(op.matrix, ref, atol=1e-14)
                assert np.trace(op.matrix) == pytest.approx(np.trace(a) * d ** (n - 1))

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            embed_single(np.eye(2), 0, 2, 3)
        with pytest.raises(ValueError):
            embed_single(np.eye(3), 2, 2, 3)

    def test_commuting_supports(self):
        rng = np.random.default_rng(5)
        a = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
        b = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
        oa = embed_single(a, 0, 3, 3).matrix
        ob = embed_single(b, 2, 3, 3).matrix
        assert np.max(np.abs(oa @ ob - ob @ oa)) <= 1e-12


class TestTwoSiteProjector:
    def test_rr_projector(self):
        op = two_site_projector(0, 1, "ryd", 2, 3)
        diag = np.real(np.diag(op.matrix))
        assert np.array_equal(np.nonzero(diag)[0], [8])

    def test_trace_counts_remaining_atoms(self):
        for n in (2, 3, 4):
            op = two_site_projector(0, n - 1, "ryd", n, 3)
            assert np.trace(op.matrix) == pytest.approx(3 ** (n - 2))

    def test_commutes_with_single_site_projectors(self):
        p2 = two_site_projector(0, 2, "ryd", 3, 3).matrix
        for k in range(3):
            p1 = embed_single(local_projector("ryd", 3), k, 3, 3).matrix
            assert np.max(np.abs(p1 @ p2 - p2 @ p1)) <= 1e-12

    def test_same_atom_rejected(self):
        with pytest.raises(ValueError):
            two_site_projector(1, 1, "ryd", 3, 3)


class TestExpectation:
    def test_projector_on_own_state(self):
        psi = basis_state("11")
        proj = Operator(2, 3, np.outer(psi.amplitudes, psi.amplitudes.conj()))
        assert expectation(psi, proj) == pytest.approx(1.0)

    def test_maximally_mixed(self):
        rho = QuantumState("density", 2, 3, np.eye(9, dtype=complex) / 9.0)
        op = embed_single(local_projector("ryd", 3), 0, 2, 3)
        assert expectation(rho, op) == pytest.approx(1.0 / 3.0)

    def test_identity_trace_normalization(self):
        rng = np.random.default_rng(1)
        m = rng.normal(size=(9, 9)) + 1j * rng.normal(size=(9, 9))
        rho = m @ m.conj().T
        rho /= np.trace(rho)
        state = QuantumState("density", 2, 3, rho)
        assert expectation(state, Operator(2, 3, np.eye(9))) == pytest.approx(1.0)

    def test_hermitian_gives_real(self):
        psi = superposition(["01", "10"], 3)
        op = embed_single(local_projector("g1", 3), 0, 2, 3)
        assert abs(expectation(psi, op).imag) < 1e-10

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            expectation(basis_state("11"), Operator(3, 3, np.eye(27)))


class TestPartialTrace:
    def test_product_state(self):
        psi = basis_state("01")
        reduced = partial_trace(psi, keep={0})
        expected = np.zeros((3, 3), dtype=complex)
        expected[0, 0] = 1.0
        assert np.allclose(reduced.amplitudes, expected, atol=1e-14)

    def test_relay_projection_gives_bell(self):
        psi = superposition(["001", "100"], 3)
        reduced = partial_trace(psi, keep={0, 2})
        bell = superposition(["01", "10"], 3)
        overlap = np.vdot(bell.amplitudes, reduced.amplitudes @ bell.amplitudes)
        assert overlap.real == pytest.approx(1.0, abs=1e-12)

    def test_sequential_equals_direct(self):
        rng = np.random.default_rng(9)
        m = rng.normal(size=(27, 27)) + 1j * rng.normal(size=(27, 27))
        rho = m @ m.conj().T
        rho /= np.trace(rho)
        state = QuantumState("density", 3, 3, rho)
        step = partial_trace(partial_trace(state, keep={0, 1}), keep={0})
        direct = partial_trace(state, keep={0})
        assert np.max(np.abs(step.amplitudes - direct.amplitudes)) <= 1e-12

    def test_result_is_valid_density(self):
        rng = np.random.default_rng(11)
        m = rng.normal(size=(27, 27)) + 1j * rng.normal(size=(27, 27))
        rho = m @ m.conj().T
        rho /= np.trace(rho)
        reduced = partial_trace(QuantumState("density", 3, 3, rho), keep={1, 2})
        reduced.validate()
        assert np.trace(reduced.amplitudes).real == pytest.approx(1.0, abs=1e-10)

    def test_empty_keep_rejected(self):
        with pytest.raises(ValueError):
            partial_trace(basis_state("01"), keep=set())
