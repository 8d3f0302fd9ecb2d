"""Architecture forward passes, initialization laws, and checkpoints."""

import os

import numpy as np
import pytest

from nrfield.autodiff import Tape, grad_check
from nrfield.encodings import EncodingSpec
from nrfield.models import (
    ARCHITECTURES,
    CorruptCheckpointError,
    Model,
    ModelConfig,
    ModelConfigError,
    NormState,
    build_model,
    checkpoint_load,
    checkpoint_nbytes,
    checkpoint_save,
    default_config,
    siren_init,
)


def _tiny(arch, in_dim=2, out_dim=1, **kw):
    enc = None
    if arch == "mhe_net":
        enc = EncodingSpec(kind="hash_grid", levels=3, features=2, log2_table=8, base_resolution=2, fine_resolution=8)
    kw.setdefault("layers", 2)
    kw.setdefault("width", 8)
    if enc is not None:
        kw["encoding"] = enc
    return build_model(default_config(arch, in_dim, out_dim, **kw))


def _set(model, name, value):
    dict(model.named_parameters())[name].data = np.asarray(value, dtype=float)


def test_zero_final_layer_outputs_zero():
    model = _tiny("mlp")
    _set(model, "net.w2", np.zeros((8, 1)))
    _set(model, "net.b2", np.zeros((1, 1)))
    x = np.random.default_rng(0).uniform(-1, 1, (7, 2))
    assert np.all(model.forward(x) == 0.0)


def test_one_hidden_tanh_layer_hand_computed():
    model = build_model(default_config("mlp", 1, 1, layers=1, width=2))
    _set(model, "net.w0", [[1.0, 2.0]])
    _set(model, "net.b0", [[0.5, -0.5]])
    _set(model, "net.w1", [[1.0], [1.0]])
    _set(model, "net.b1", [[0.25]])
    got = model.forward(np.array([[0.3]]))[0, 0]
    want = np.tanh(0.8) + np.tanh(0.1) + 0.25
    assert abs(got - want) < 1e-15


def test_identical_input_rows_give_identical_output_rows():
    # BLAS gemm kernels may sum a trailing "cleanup" row in a different order
    # than the blocked rows, so row equality holds to a couple of ULPs rather
    # than bitwise; run-to-run determinism is exact and tested separately.
    for arch in ARCHITECTURES:
        model = _tiny(arch, in_dim=3)
        x = np.array([[0.1, -0.4, 0.7]])
        out = model.forward(np.repeat(x, 5, axis=0))
        assert np.max(np.abs(out - out[0])) < 1e-13, arch


def test_siren_init_bounds_and_coverage():
    rng = np.random.default_rng(0)
    w = siren_init(rng, 512, (512, 2000))
    bound = np.sqrt(6.0 / 512)
    assert np.all(np.abs(w) <= bound)
    # with ~1e6 draws the empirical extremes hug the bound
    assert w.max() > 0.999 * bound and w.min() < -0.999 * bound


def test_siren_init_same_seed_is_identical():
    a = siren_init(np.random.default_rng(3), 64, (64, 64))
    b = siren_init(np.random.default_rng(3), 64, (64, 64))
    assert np.array_equal(a, b)


def test_siren_single_neuron_hand_computed():
    model = build_model(default_config("siren", 1, 1, layers=1, width=1))
    _set(model, "net.w0", [[2.0]])
    _set(model, "net.b0", [[0.3]])
    _set(model, "net.w1", [[1.0]])
    _set(model, "net.b1", [[0.0]])
    got = model.forward(np.array([[0.0]]))[0, 0]
    assert abs(got - np.sin(30.0 * 0.3)) < 1e-15


def test_siren_first_layer_derivative_carries_omega0():
    # d/dx sin(omega0 * w * x) at x=0 is omega0 * w
    model = build_model(default_config("siren", 1, 1, layers=1, width=1))
    _set(model, "net.w0", [[0.05]])
    _set(model, "net.b0", [[0.0]])
    _set(model, "net.w1", [[1.0]])
    _set(model, "net.b1", [[0.0]])
    h = 1e-7
    fd = (model.forward([[h]])[0, 0] - model.forward([[-h]])[0, 0]) / (2 * h)
    assert abs(fd - 30.0 * 0.05) < 1e-5


def test_mfn_fourier_single_filter_is_a_sinusoid_readout():
    model = build_model(default_config("mfn_fourier", 1, 1, layers=1, width=1))
    _set(model, "flt.omega0", [[1.0]])
    _set(model, "flt.phi0", [[0.0]])
    _set(model, "net.w0", [[1.0]])
    _set(model, "net.b0", [[0.0]])
    x = np.array([[np.pi / 2]])
    assert abs(model.forward(x)[0, 0] - 1.0) < 1e-12


def test_mfn_two_layer_multiplicative_recursion():
    model = build_model(default_config("mfn_fourier", 1, 1, layers=2, width=1))
    _set(model, "flt.omega0", [[2.0]])
    _set(model, "flt.phi0", [[0.1]])
    _set(model, "flt.omega1", [[5.0]])
    _set(model, "flt.phi1", [[-0.2]])
    _set(model, "net.w0", [[1.5]])
    _set(model, "net.b0", [[0.25]])
    _set(model, "net.w1", [[2.0]])
    _set(model, "net.b1", [[-1.0]])
    x = np.linspace(-1, 1, 9).reshape(-1, 1)
    z1 = np.sin(2.0 * x + 0.1)
    z2 = (1.5 * z1 + 0.25) * np.sin(5.0 * x - 0.2)
    want = 2.0 * z2 - 1.0
    assert np.allclose(model.forward(x), want, atol=1e-12)


def test_gabor_filter_envelope_is_one_at_its_center():
    model = build_model(default_config("mfn_gabor", 2, 1, layers=1, width=1))
    mu = np.array([[0.3], [-0.2]])
    _set(model, "flt.mu0", mu)
    _set(model, "flt.omega0", [[1.0], [1.0]])
    _set(model, "flt.phi0", [[0.4]])
    _set(model, "flt.gamma0", [[8.0]])
    _set(model, "net.w0", [[1.0]])
    _set(model, "net.b0", [[0.0]])
    got = model.forward(mu.T)[0, 0]
    assert abs(got - np.sin(0.3 - 0.2 + 0.4)) < 1e-12


def test_gabor_envelope_decays_away_from_center():
    model = build_model(default_config("mfn_gabor", 2, 1, layers=1, width=1))
    _set(model, "flt.mu0", [[0.0], [0.0]])
    _set(model, "flt.omega0", [[0.0], [0.0]])
    _set(model, "flt.phi0", [[np.pi / 2]])  # wave == 1 everywhere
    _set(model, "flt.gamma0", [[2.0]])
    _set(model, "net.w0", [[1.0]])
    _set(model, "net.b0", [[0.0]])
    x = np.array([[0.5, 0.5]])
    want = np.exp(-0.5 * 2.0 * 0.5)
    assert abs(model.forward(x)[0, 0] - want) < 1e-12


def test_output_denormalization_applies_scale_then_shift():
    norm = NormState(
        in_lo=np.array([-1.0]),
        in_hi=np.array([1.0]),
        out_shift=np.array([3.0]),
        out_scale=np.array([2.0]),
    )
    model = build_model(default_config("mlp", 1, 1, layers=1, width=4), norm=norm)
    _set(model, "net.w1", np.zeros((4, 1)))
    _set(model, "net.b1", np.zeros((1, 1)))
    assert np.all(model.forward([[0.2]]) == 3.0)


def test_input_normalization_maps_box_to_unit_interval():
    norm = NormState(
        in_lo=np.array([0.0, 10.0]),
        in_hi=np.array([4.0, 30.0]),
        out_shift=np.zeros(1),
        out_scale=np.ones(1),
    )
    model = build_model(default_config("mlp", 2, 1), norm=norm)
    xn = model.normalize_in(np.array([[0.0, 10.0], [4.0, 30.0], [2.0, 20.0]]))
    assert np.allclose(xn, [[-1, -1], [1, 1], [0, 0]])


def test_every_architecture_gradient_checks_small():
    rng = np.random.default_rng(1)
    for arch in ("siren", "mfn_gabor", "mhe_net"):
        model = _tiny(arch, in_dim=2)
        x = rng.uniform(-1, 1, (12, 2))
        y = rng.normal(size=(12, 1))
        params = model.parameters()

        def build():
            tape = Tape()
            out = model.forward_normalized(tape, x)
            from nrfield.autodiff import Tensor

            return tape, tape.mean(tape.square(tape.sub(out, Tensor(y))))

        report = grad_check(build, params, n_coords=25, rng=np.random.default_rng(2))
        assert report["max_rel_err"] < 1e-5, (arch, report["failures"])


def test_smooth_architectures_have_bounded_second_differences():
    h = 1e-3
    x = np.arange(-0.9, 0.9, h).reshape(-1, 1)
    for arch in ("siren", "mfn_fourier", "mfn_gabor", "mlp"):
        model = _tiny(arch, in_dim=1)
        f = model.forward(x)[:, 0]
        second = np.abs(f[2:] - 2 * f[1:-1] + f[:-2]) / h**2
        # omega0=30 sines: |f''| is O(omega^2 * weight-scale); 1e5 is a loose ceiling
        assert np.max(second) < 1e5, arch


def test_build_is_deterministic_per_seed():
    for arch in ARCHITECTURES:
        a = _tiny(arch, in_dim=2)
        b = _tiny(arch, in_dim=2)
        for (na, ta), (nb, tb) in zip(a.named_parameters(), b.named_parameters()):
            assert na == nb and np.array_equal(ta.data, tb.data), arch


def test_preset_encodings_match_architecture():
    assert default_config("mlp", 3, 1).encoding.kind == "none"
    assert default_config("mlp_pe", 3, 1).encoding.kind == "gaussian_pe"
    assert default_config("mlp_pe_2l", 3, 1).encoding.kind == "fixed_pe_2l"
    assert default_config("mlp_pe_2l_id", 3, 1).encoding.rules == ("identity", "identity", "pe2l")
    assert default_config("mlp_pe_2l_lin", 2, 1).encoding.rules == ("linear", "pe2l")
    assert default_config("mhe_net", 3, 1).encoding.kind == "hash_grid"
    assert default_config("mhe_net", 3, 1).activation == "silu"
    assert default_config("mlp", 3, 1).activation == "tanh"


def test_incompatible_encoding_rejected():
    cfg = ModelConfig(architecture="siren", in_dim=2, out_dim=1, encoding=EncodingSpec(kind="gaussian_pe"))
    with pytest.raises(ModelConfigError, match="encoding must be 'none'"):
        build_model(cfg)
    with pytest.raises(ModelConfigError, match="unknown architecture"):
        build_model(ModelConfig(architecture="transformer", in_dim=2, out_dim=1))


def test_mlp_parameter_count_closed_form():
    model = build_model(default_config("mlp", 4, 4, layers=5, width=512))
    w = 512
    want = (4 * w + w) + 4 * (w * w + w) + (w * 4 + 4)
    assert model.param_count() == want == 1_055_236


def test_mhe_parameter_count_closed_form():
    enc = EncodingSpec(kind="hash_grid", levels=16, features=2, log2_table=19, base_resolution=2, fine_resolution=32)
    model = build_model(default_config("mhe_net", 3, 4, layers=5, width=512, encoding=enc))
    w = 512
    tables = 16 * (1 << 19) * 2
    net = (32 * w + w) + 4 * (w * w + w) + (w * 4 + 4)
    assert model.param_count() == tables + net == 17_846_788


def test_checkpoint_roundtrip_is_bitwise(tmp_path):
    rng = np.random.default_rng(5)
    for arch in ("mlp_pe", "mlp_pe_2l_lin", "siren", "mfn_gabor", "mhe_net"):
        model = _tiny(arch, in_dim=2)
        norm = model.norm
        norm.out_shift[:] = rng.normal(size=norm.out_shift.shape)
        norm.out_scale[:] = np.abs(rng.normal(size=norm.out_scale.shape)) + 0.5
        path = tmp_path / f"{arch}.nrfc"
        checkpoint_save(model, path)
        clone = checkpoint_load(path)
        x = rng.uniform(-1, 1, (20, 2))
        assert np.array_equal(model.forward(x), clone.forward(x)), arch
        assert clone.config == model.config


def test_checkpoint_file_size_is_exact(tmp_path):
    for arch in ("mlp", "mlp_pe", "mhe_net"):
        model = _tiny(arch, in_dim=2)
        path = tmp_path / f"{arch}.nrfc"
        written = checkpoint_save(model, path)
        info = checkpoint_nbytes(model)
        assert written == os.path.getsize(path) == info["file"]
        assert info["file"] == info["header"] + 8 * info["entries"]
        assert info["eq32"] == info["header"] + 4 * info["entries"]


def test_truncated_checkpoint_is_rejected(tmp_path):
    model = _tiny("mlp")
    path = tmp_path / "m.nrfc"
    checkpoint_save(model, path)
    blob = path.read_bytes()
    path.write_bytes(blob[: len(blob) // 2])
    with pytest.raises(CorruptCheckpointError):
        checkpoint_load(path)


def test_bitflipped_checkpoint_fails_crc(tmp_path):
    model = _tiny("mlp")
    path = tmp_path / "m.nrfc"
    checkpoint_save(model, path)
    blob = bytearray(path.read_bytes())
    blob[len(blob) // 2] ^= 0xFF
    path.write_bytes(bytes(blob))
    with pytest.raises(CorruptCheckpointError, match="CRC"):
        checkpoint_load(path)


def test_non_checkpoint_file_is_rejected(tmp_path):
    path = tmp_path / "not.nrfc"
    path.write_bytes(b"PGM rather than a checkpoint")
    with pytest.raises(CorruptCheckpointError, match="magic"):
        checkpoint_load(path)


def test_gaussian_pe_frequencies_survive_checkpoint(tmp_path):
    model = _tiny("mlp_pe")
    model.encoder.freqs[:] = np.arange(model.encoder.freqs.size).reshape(model.encoder.freqs.shape)
    path = tmp_path / "pe.nrfc"
    checkpoint_save(model, path)
    clone = checkpoint_load(path)
    assert np.array_equal(clone.encoder.freqs, model.encoder.freqs)
