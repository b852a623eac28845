"""Layer composition, forward contract, initialization, and checkpoints."""

import numpy as np
import pytest

from cvqpinn import fock, qnn
from cvqpinn.errors import ConfigurationError, UsageError

CFG = qnn.NetworkConfig(num_modes=2, cutoff=14, multi_layers=2, single_layers=2, output_modes=(0, 1))


def manual_two_mode_layer(layer: qnn.TwoModeLayerParams, state: fock.FockState) -> fock.FockState:
    """Spec gate order via raw fock-core calls, independent of the engine."""
    c = state.cutoff
    state = fock.apply_gate(fock.beamsplitter_matrix(layer.u1_bs_theta, layer.u1_bs_phi, c), state, (0, 1))
    state = fock.apply_gate(fock.rotation_matrix(layer.u1_r_phi, c), state, 0)
    state = fock.apply_gate(fock.squeezing_matrix(layer.squeeze_r[0], 0.0, c), state, 0)
    state = fock.apply_gate(fock.squeezing_matrix(layer.squeeze_r[1], 0.0, c), state, 1)
    state = fock.apply_gate(fock.beamsplitter_matrix(layer.u2_bs_theta, layer.u2_bs_phi, c), state, (0, 1))
    state = fock.apply_gate(fock.rotation_matrix(layer.u2_r_phi, c), state, 0)
    state = fock.apply_gate(fock.displacement_matrix(layer.displacement[0], c), state, 0)
    state = fock.apply_gate(fock.displacement_matrix(layer.displacement[1], c), state, 1)
    state = fock.apply_gate(fock.kerr_matrix(layer.kerr_kappa[0], c), state, 0)
    state = fock.apply_gate(fock.kerr_matrix(layer.kerr_kappa[1], c), state, 1)
    return state


def manual_single_mode_layer(layer: qnn.SingleModeLayerParams, state, mode):
    c = state.cutoff
    state = fock.apply_gate(fock.rotation_matrix(layer.r1_phi, c), state, mode)
    state = fock.apply_gate(fock.squeezing_matrix(layer.squeeze_r, 0.0, c), state, mode)
    state = fock.apply_gate(fock.rotation_matrix(layer.r2_phi, c), state, mode)
    state = fock.apply_gate(fock.displacement_matrix(layer.displacement, c), state, mode)
    state = fock.apply_gate(fock.kerr_matrix(layer.kerr_kappa, c), state, mode)
    return state


class TestParamLayout:
    def test_count_law(self):
        assert qnn.param_count(CFG) == 12 * 2 + 5 * 2 * 2 == 44
        wide = qnn.NetworkConfig(2, 20, 4, 0, (0, 1))
        assert qnn.param_count(wide) == 48

    def test_split_round_trip(self):
        params = qnn.init_params(CFG, seed=9)
        multi, single = qnn.split_params(CFG, params)
        rebuilt = np.concatenate(
            [m.to_vector() for m in multi]
            + [s.to_vector() for per_mode in single for s in per_mode]
        )
        np.testing.assert_array_equal(rebuilt, params)

    def test_wrong_length_rejected(self):
        with pytest.raises(UsageError):
            qnn.split_params(CFG, np.zeros(13))

    def test_config_validation(self):
        with pytest.raises(ConfigurationError):
            qnn.NetworkConfig(1, 10, 1, 0, (0,))  # two-mode layers need 2 modes
        with pytest.raises(ConfigurationError):
            qnn.NetworkConfig(2, 10, 0, 0, (0,))
        with pytest.raises(ConfigurationError):
            qnn.NetworkConfig(2, 10, 1, 1, (2,))


class TestEncoding:
    def test_zero_input_is_vacuum(self):
        state = qnn.encode_inputs((0.0, 0.0), CFG)
        np.testing.assert_array_equal(state.amplitudes, fock.make_vacuum(2, CFG.cutoff).amplitudes)

    def test_coherent_expectation(self):
        cfg = qnn.NetworkConfig(2, 20, 2, 2, (0, 1))
        state = qnn.encode_inputs((0.7, 0.0), cfg)
        assert abs(fock.expectation_x(state, 0) - 1.4) < 1e-10

    def test_product_structure(self):
        cfg = qnn.NetworkConfig(2, 18, 2, 2, (0, 1))
        state = qnn.encode_inputs((0.5, 0.9), cfg)
        cx = fock.coherent_column(0.5, 18)
        ct = fock.coherent_column(0.9, 18)
        np.testing.assert_allclose(state.amplitudes, np.outer(cx, ct), atol=1e-14)
        # slicing out mode 1 at any level recovers the mode-0 coherent profile
        ratio = state.amplitudes[:, 3] / ct[3]
        np.testing.assert_allclose(ratio, cx, atol=1e-12)

    def test_input_count_checked(self):
        with pytest.raises(UsageError):
            qnn.encode_inputs((0.1,), CFG)


class TestLayers:
    def test_zero_params_identity(self):
        layer = qnn.TwoModeLayerParams.from_vector(np.zeros(12))
        state = qnn.encode_inputs((0.4, -0.2), CFG)
        out = qnn.apply_two_mode_layer(layer, state)
        np.testing.assert_allclose(out.amplitudes, state.amplitudes, atol=1e-12)

    def test_displacement_only_layer_gives_coherent_product(self):
        vec = np.zeros(12)
        vec[8], vec[9] = 0.6, -0.3
        layer = qnn.TwoModeLayerParams.from_vector(vec)
        out = qnn.apply_two_mode_layer(layer, fock.make_vacuum(2, CFG.cutoff))
        expected = np.outer(fock.coherent_column(0.6, CFG.cutoff), fock.coherent_column(-0.3, CFG.cutoff))
        np.testing.assert_allclose(out.amplitudes, expected, atol=1e-12)

    def test_two_mode_layer_matches_manual_chain(self):
        rng = np.random.default_rng(4)
        for _ in range(4):
            layer = qnn.TwoModeLayerParams.from_vector(rng.uniform(-0.6, 0.6, 12))
            state = qnn.encode_inputs((0.5, 0.2), CFG)
            np.testing.assert_allclose(
                qnn.apply_two_mode_layer(layer, state).amplitudes,
                manual_two_mode_layer(layer, state).amplitudes,
                atol=1e-12,
            )

    def test_single_mode_layer_matches_manual_chain(self):
        rng = np.random.default_rng(5)
        for mode in (0, 1):
            layer = qnn.SingleModeLayerParams.from_vector(rng.uniform(-0.6, 0.6, 5))
            state = qnn.encode_inputs((0.3, -0.4), CFG)
            np.testing.assert_allclose(
                qnn.apply_single_mode_layer(layer, state, mode).amplitudes,
                manual_single_mode_layer(layer, state, mode).amplitudes,
                atol=1e-12,
            )

    def test_zero_squeeze_single_layers_compose_phases(self):
        base = np.zeros(5)
        base[0], base[2] = 0.3, 0.5
        layer = qnn.SingleModeLayerParams.from_vector(base)
        state = fock.FockState(
            np.eye(CFG.cutoff, 1, -2).astype(np.complex128).ravel(), 1, CFG.cutoff
        )  # |2>
        out = qnn.apply_single_mode_layer(layer, state, 0)
        # R(0.3) then R(0.5) on |2>: phase e^{i 2 (0.3+0.5)}
        assert abs(out.amplitudes[2] - np.exp(1j * 2 * 0.8)) < 1e-12

    def test_norm_retention_small_params(self):
        rng = np.random.default_rng(6)
        cfg = qnn.NetworkConfig(2, 20, 2, 2, (0, 1))
        layer = qnn.TwoModeLayerParams.from_vector(rng.uniform(-0.5, 0.5, 12))
        out = qnn.apply_two_mode_layer(layer, fock.make_vacuum(2, 20))
        assert fock.norm_squared(out) >= 1 - 1e-6

    def test_mode_out_of_range(self):
        layer = qnn.SingleModeLayerParams.from_vector(np.zeros(5))
        with pytest.raises(UsageError):
            qnn.apply_single_mode_layer(layer, fock.make_vacuum(2, 8), 2)


class TestForward:
    def test_identity_network_passes_encoding_through(self):
        cfg = qnn.NetworkConfig(2, 20, 2, 2, (0, 1))
        outs, norm = qnn.forward(cfg, np.zeros(44), (0.3, 0.0))
        np.testing.assert_allclose(outs, [0.6, 0.0], atol=1e-9)
        assert norm > 1 - 1e-9

    def test_deterministic(self):
        params = qnn.init_params(CFG, seed=11)
        a = qnn.forward(CFG, params, (0.4, 0.1))
        b = qnn.forward(CFG, params, (0.4, 0.1))
        np.testing.assert_array_equal(a[0], b[0])
        assert a[1] == b[1]

    def test_two_outputs_for_benchmark_configs(self):
        for config in (CFG, qnn.NetworkConfig(2, 20, 4, 0, (0, 1))):
            outs, _ = qnn.forward(config, np.zeros(qnn.param_count(config)), (0.2, 0.1))
            assert outs.shape == (2,)

    def test_norm_finite_and_near_one_at_init(self):
        cfg = qnn.NetworkConfig(2, 20, 2, 2, (0, 1))
        params = qnn.init_params(cfg, seed=0)
        outs, norm = qnn.forward(cfg, params, (1.2, 0.4))
        assert np.all(np.isfinite(outs))
        assert norm >= 0.99

    def test_jacobian_finite_across_domain(self):
        cfg = qnn.NetworkConfig(2, 20, 2, 2, (0, 1))
        params = qnn.init_params(cfg, seed=3)
        gates = qnn.build_gates(cfg, params)
        for x in (-2.0, -0.5, 0.0, 1.0, 2.0):
            ev = qnn.evaluate_batch(cfg, gates, np.array([[x, 0.5 * x]]), np.eye(2))
            assert np.all(np.isfinite(ev.jac))


class TestInit:
    def test_deterministic_in_seed(self):
        np.testing.assert_array_equal(qnn.init_params(CFG, 7), qnn.init_params(CFG, 7))
        assert not np.array_equal(qnn.init_params(CFG, 7), qnn.init_params(CFG, 8))

    def test_zero_scale_gives_identity_network(self):
        params = qnn.init_params(CFG, 7, scale=0.0)
        np.testing.assert_array_equal(params, np.zeros(44))

    def test_ranges(self):
        params = qnn.init_params(CFG, 123)
        multi, single = qnn.split_params(CFG, params)
        for m in multi:
            for angle in (m.u1_bs_theta, m.u1_bs_phi, m.u1_r_phi, m.u2_bs_theta, m.u2_bs_phi, m.u2_r_phi, *m.kerr_kappa):
                assert abs(angle) <= 0.05
            for small in (*m.squeeze_r, *m.displacement):
                assert abs(small) < 0.1  # N(0, 0.01) tail guard
        for per_mode in single:
            for s in per_mode:
                assert abs(s.r1_phi) <= 0.05 and abs(s.r2_phi) <= 0.05 and abs(s.kerr_kappa) <= 0.05


class TestBatchEngine:
    def test_batch_matches_single_forward(self):
        params = qnn.init_params(CFG, 2)
        gates = qnn.build_gates(CFG, params)
        pts = np.array([[0.3, 0.0], [0.9, -0.4], [1.4, 0.2]])
        ev = qnn.evaluate_batch(CFG, gates, pts, None)
        for i, pt in enumerate(pts):
            outs, norm = qnn.forward(CFG, params, pt)
            np.testing.assert_allclose(ev.outputs[i], outs, atol=1e-13)
            assert abs(ev.norms[i] - norm) < 1e-13

    def test_dual_evaluator_matches_batch_jacobian(self):
        params = qnn.init_params(CFG, 2)
        gates = qnn.build_gates(CFG, params)
        pts = np.array([[0.7, 0.2]])
        ev = qnn.evaluate_batch(CFG, gates, pts, np.eye(2))
        from cvqpinn.duals import DualScalar

        net = qnn.dual_evaluator(CFG)
        duals = [DualScalar.seed(0.7, 0, 2), DualScalar.seed(0.2, 1, 2)]
        outs, norm = net(params, duals)
        for j in range(2):
            assert abs(outs[j].value - ev.outputs[0, j]) < 1e-13
            np.testing.assert_allclose(outs[j].tangents.real, ev.jac[0, j], atol=1e-12)
        assert abs(norm.value - ev.norms[0]) < 1e-13


class TestCheckpoint:
    def test_round_trip_exact(self, tmp_path):
        params = qnn.init_params(CFG, 5) * np.pi  # exercise many digits
        path = tmp_path / "ckpt.txt"
        qnn.save_checkpoint(str(path), CFG, params)
        config2, params2 = qnn.load_checkpoint(str(path))
        assert config2 == CFG
        np.testing.assert_array_equal(params2, params)

    def test_fixed_field_names(self, tmp_path):
        path = tmp_path / "ckpt.txt"
        qnn.save_checkpoint(str(path), CFG, np.zeros(44))
        text = path.read_text()
        assert text.startswith("version = 1\n")
        assert "config.num_modes = 2" in text
        assert "params = " in text

    def test_mismatched_params_rejected(self, tmp_path):
        path = tmp_path / "ckpt.txt"
        qnn.save_checkpoint(str(path), CFG, np.zeros(44))
        text = path.read_text().replace("config.multi_layers = 2", "config.multi_layers = 1")
        (tmp_path / "bad.txt").write_text(text)
        with pytest.raises(ConfigurationError):
            qnn.load_checkpoint(str(tmp_path / "bad.txt"))
