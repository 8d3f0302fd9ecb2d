"""Coordinate-network architectures, initialization, and checkpoints.

Nine architectures share one interface: normalized coordinates in, field
values out.  ``layers`` counts hidden affine layers (the output affine is
extra), ``width`` is the hidden feature count.

* ``mlp`` and its positional-encoding variants ``mlp_pe`` (Gaussian random
  cosines), ``mlp_pe_2l`` (dyadic sin/cos ladder), ``mlp_pe_2l_id`` and
  ``mlp_pe_2l_lin`` (group encodings: identity / trainable-linear space
  dimensions, dyadic ladder on the last dimension) — tanh networks.
* ``siren`` — sine activations, the first pre-activation scaled by
  ``omega0``; every weight drawn from U(-sqrt(6/fan_in), sqrt(6/fan_in)).
* ``mfn_fourier`` / ``mfn_gabor`` — multiplicative filter networks:
  ``z1 = g1(x)``, ``z_{i+1} = (W_i z_i + b_i) * g_{i+1}(x)``, linear read-out;
  filters are ``sin(x @ omega + phi)``, the Gabor variant multiplied by
  Gaussian envelopes ``exp(-gamma/2 * ||x - mu||^2)``.
* ``mhe_net`` — multiresolution hash encoding feeding a SiLU network.

Models carry their own input/output normalization so a checkpoint is
self-contained: raw coordinates map to ``[-1, 1]`` per dimension, raw values
are recovered as ``network_output * out_scale + out_shift``.

Checkpoints are a single binary file: magic ``NRFCKPT1``, a JSON config
block, the normalization arrays, one 64-bit little-endian block per
parameter (plus frozen buffers such as sampled encoding frequencies), and a
trailing CRC-32.
"""

from __future__ import annotations

import dataclasses
import json
import struct
import zlib

import numpy as np

from .autodiff import Tape, Tensor
from .encodings import EncodingSpec, build_encoder

__all__ = [
    "ARCHITECTURES",
    "ModelConfig",
    "ModelConfigError",
    "CorruptCheckpointError",
    "NormState",
    "Model",
    "default_config",
    "build_model",
    "checkpoint_save",
    "checkpoint_load",
    "checkpoint_nbytes",
]

ARCHITECTURES = (
    "mlp",
    "mlp_pe",
    "mlp_pe_2l",
    "mlp_pe_2l_id",
    "mlp_pe_2l_lin",
    "siren",
    "mfn_fourier",
    "mfn_gabor",
    "mhe_net",
)

_MLP_FAMILY = ("mlp", "mlp_pe", "mlp_pe_2l", "mlp_pe_2l_id", "mlp_pe_2l_lin")

CHECKPOINT_MAGIC = b"NRFCKPT1"
CHECKPOINT_VERSION = 1


class ModelConfigError(ValueError):
    """Invalid model configuration."""


class CorruptCheckpointError(ValueError):
    """Checkpoint file is truncated, mangled, or fails its CRC."""


@dataclasses.dataclass(frozen=True)
class ModelConfig:
    architecture: str
    in_dim: int
    out_dim: int
    layers: int = 5
    width: int = 512
    activation: str | None = None  # None -> architecture default
    omega0: float = 30.0
    mfn_input_scale: float = 256.0
    mfn_gamma: float = 6.0  # mean of Gabor bandwidths is mfn_gamma / layers
    encoding: EncodingSpec = dataclasses.field(default_factory=EncodingSpec)
    seed: int = 0

    def to_json(self) -> dict:
        d = dataclasses.asdict(self)
        d["encoding"] = self.encoding.to_json()
        return d

    @classmethod
    def from_json(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["encoding"] = EncodingSpec.from_json(d["encoding"])
        return cls(**d)


@dataclasses.dataclass
class NormState:
    """Input box and per-component output shift/scale stored with the model."""

    in_lo: np.ndarray
    in_hi: np.ndarray
    out_shift: np.ndarray
    out_scale: np.ndarray

    @classmethod
    def identity(cls, in_dim: int, out_dim: int) -> "NormState":
        return cls(
            in_lo=np.full(in_dim, -1.0),
            in_hi=np.full(in_dim, 1.0),
            out_shift=np.zeros(out_dim),
            out_scale=np.ones(out_dim),
        )


_ACTIVATIONS = ("tanh", "silu", "relu", "sine")


def _activation_op(tape: Tape, name: str):
    return {"tanh": tape.tanh, "silu": tape.silu, "relu": tape.relu, "sine": tape.sin}[name]


def default_config(architecture: str, in_dim: int, out_dim: int, **overrides) -> ModelConfig:
    """Architecture preset: fills in the matching encoding and activation."""
    if architecture not in ARCHITECTURES:
        raise ModelConfigError(f"unknown architecture {architecture!r}; one of {ARCHITECTURES}")
    enc = overrides.pop("encoding", None)
    L = overrides.pop("L", None)
    if enc is None:
        base = EncodingSpec(L=L) if L is not None else EncodingSpec()
        if architecture == "mlp_pe":
            enc = dataclasses.replace(base, kind="gaussian_pe")
        elif architecture == "mlp_pe_2l":
            enc = dataclasses.replace(base, kind="fixed_pe_2l")
        elif architecture == "mlp_pe_2l_id":
            enc = dataclasses.replace(base, kind="group", rules=("identity",) * (in_dim - 1) + ("pe2l",))
        elif architecture == "mlp_pe_2l_lin":
            enc = dataclasses.replace(base, kind="group", rules=("linear",) * (in_dim - 1) + ("pe2l",))
        elif architecture == "mhe_net":
            enc = dataclasses.replace(base, kind="hash_grid")
        else:
            enc = EncodingSpec(kind="none")
    activation = overrides.pop("activation", None)
    if activation is None:
        activation = "silu" if architecture == "mhe_net" else ("sine" if architecture == "siren" else "tanh")
    return ModelConfig(
        architecture=architecture,
        in_dim=in_dim,
        out_dim=out_dim,
        activation=activation,
        encoding=enc,
        **overrides,
    )


def _uniform_fan_in(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def siren_init(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    """U(-sqrt(6/fan_in), sqrt(6/fan_in)), applied to every layer."""
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Model:
    """A built network: config, encoder, ordered parameters, normalization."""

    def __init__(self, config: ModelConfig, encoder, params: list[tuple[str, Tensor]], norm: NormState):
        self.config = config
        self.encoder = encoder
        self._params = params
        self._by_name = dict(params)
        self.norm = norm

    # ----- parameters ------------------------------------------------------

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        return list(self._params)

    def parameters(self) -> list[Tensor]:
        return [t for _, t in self._params]

    def named_buffers(self) -> list[tuple[str, np.ndarray]]:
        return list(self.encoder.buffers()) if self.encoder is not None else []

    def param_count(self) -> int:
        """Number of trainable scalar parameters."""
        return int(sum(t.data.size for t in self.parameters()))

    def state_entries(self) -> int:
        """Scalars a checkpoint must store: parameters plus frozen buffers."""
        return self.param_count() + int(sum(b.size for _, b in self.named_buffers()))

    # ----- normalization -----------------------------------------------------

    def normalize_in(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        span = self.norm.in_hi - self.norm.in_lo
        span = np.where(span > 0.0, span, 1.0)
        return 2.0 * (x - self.norm.in_lo) / span - 1.0

    def denormalize_out(self, y: np.ndarray) -> np.ndarray:
        return y * self.norm.out_scale + self.norm.out_shift

    # ----- forward -----------------------------------------------------------

    def forward_normalized(self, tape: Tape, xn: np.ndarray) -> Tensor:
        """Network output in normalized space; gradients flow to parameters."""
        xn = np.asarray(xn, dtype=np.float64)
        if xn.ndim != 2 or xn.shape[1] != self.config.in_dim:
            raise ModelConfigError(
                f"expected inputs of shape (batch, {self.config.in_dim}), got {xn.shape}"
            )
        arch = self.config.architecture
        if arch in _MLP_FAMILY or arch == "mhe_net":
            return self._mlp_forward(tape, xn)
        if arch == "siren":
            return self._siren_forward(tape, xn)
        return self._mfn_forward(tape, xn)

    def forward(self, x: np.ndarray, batch_rows: int | None = None) -> np.ndarray:
        """Denormalized prediction for raw coordinates (no gradients kept)."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            x = x.reshape(1, -1)
        if batch_rows is None or x.shape[0] <= batch_rows:
            out = self.forward_normalized(Tape(), self.normalize_in(x)).data
            return self.denormalize_out(out)
        chunks = [
            self.denormalize_out(self.forward_normalized(Tape(), self.normalize_in(c)).data)
            for c in np.array_split(x, int(np.ceil(x.shape[0] / batch_rows)))
        ]
        return np.concatenate(chunks, axis=0)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)

    def _weights(self, prefix: str) -> list[Tensor]:
        return [t for n, t in self._params if n.startswith(prefix)]

    def _mlp_forward(self, tape: Tape, xn: np.ndarray) -> Tensor:
        h = self.encoder.encode(tape, xn)
        act = _activation_op(tape, self.config.activation)
        ws, bs = self._weights("net.w"), self._weights("net.b")
        for i in range(self.config.layers):
            h = act(tape.affine(h, ws[i], bs[i]))
        return tape.affine(h, ws[-1], bs[-1])

    def _siren_forward(self, tape: Tape, xn: np.ndarray) -> Tensor:
        ws, bs = self._weights("net.w"), self._weights("net.b")
        h = tape.sin(tape.scale(tape.affine(Tensor(xn), ws[0], bs[0]), self.config.omega0))
        for i in range(1, self.config.layers):
            h = tape.sin(tape.affine(h, ws[i], bs[i]))
        return tape.affine(h, ws[-1], bs[-1])

    def _filter(self, tape: Tape, xn: np.ndarray, i: int) -> Tensor:
        """Filter g_i: sinusoid, with a Gaussian envelope for the Gabor variant."""
        omega = self._by_name[f"flt.omega{i}"]
        phi = self._by_name[f"flt.phi{i}"]
        wave = tape.sin(tape.affine(Tensor(xn), omega, phi))
        if self.config.architecture != "mfn_gabor":
            return wave
        mu = self._by_name[f"flt.mu{i}"]
        gamma = self._by_name[f"flt.gamma{i}"]
        xsq = Tensor((xn * xn).sum(axis=1, keepdims=True))  # (B,1), constant
        cross = tape.affine(Tensor(xn), mu, Tensor(np.zeros((1, mu.shape[1]))))
        musq = tape.sum(tape.square(mu), axis=0)
        dist2 = tape.add(tape.add(xsq, tape.scale(cross, -2.0)), musq)
        envelope = tape.exp(tape.hadamard(dist2, tape.scale(gamma, -0.5)))
        return tape.hadamard(wave, envelope)

    def _mfn_forward(self, tape: Tape, xn: np.ndarray) -> Tensor:
        k = self.config.layers
        ws, bs = self._weights("net.w"), self._weights("net.b")
        z = self._filter(tape, xn, 0)
        for i in range(1, k):
            z = tape.hadamard(tape.affine(z, ws[i - 1], bs[i - 1]), self._filter(tape, xn, i))
        return tape.affine(z, ws[-1], bs[-1])

    def __repr__(self) -> str:
        c = self.config
        return (
            f"Model({c.architecture}, in={c.in_dim}, out={c.out_dim}, "
            f"layers={c.layers}, width={c.width}, params={self.param_count()})"
        )


def build_model(config: ModelConfig, norm: NormState | None = None) -> Model:
    """Allocate and initialize a model from its configuration.

    Randomness is split into named streams derived from ``config.seed``:
    stream 0 for network weights, stream 1 for encoder state, so identical
    configs always build bitwise-identical models.
    """
    if config.architecture not in ARCHITECTURES:
        raise ModelConfigError(f"unknown architecture {config.architecture!r}; one of {ARCHITECTURES}")
    if config.layers < 1:
        raise ModelConfigError(f"layers must be >= 1, got {config.layers}")
    if config.width < 1:
        raise ModelConfigError(f"width must be >= 1, got {config.width}")
    if config.in_dim < 1 or config.out_dim < 1:
        raise ModelConfigError(f"in_dim/out_dim must be >= 1, got {config.in_dim}/{config.out_dim}")
    arch = config.architecture
    activation = config.activation
    if activation is None:
        activation = "silu" if arch == "mhe_net" else ("sine" if arch == "siren" else "tanh")
        config = dataclasses.replace(config, activation=activation)
    if activation not in _ACTIVATIONS:
        raise ModelConfigError(f"unknown activation {activation!r}; one of {_ACTIVATIONS}")
    if arch in ("siren", "mfn_fourier", "mfn_gabor") and config.encoding.kind != "none":
        raise ModelConfigError(f"{arch} embeds its own frequency structure; encoding must be 'none'")
    if arch == "mhe_net" and config.encoding.kind != "hash_grid":
        raise ModelConfigError("mhe_net requires the hash_grid encoding")

    w_rng = np.random.default_rng(np.random.SeedSequence((config.seed, 0)))
    e_rng = np.random.default_rng(np.random.SeedSequence((config.seed, 1)))
    encoder = None
    params: list[tuple[str, Tensor]] = []

    if arch in _MLP_FAMILY or arch == "mhe_net":
        encoder = build_encoder(config.encoding, config.in_dim, e_rng)
        params.extend(encoder.params())
        dims = [encoder.out_dim] + [config.width] * config.layers + [config.out_dim]
        for i, (a, b) in enumerate(zip(dims[:-1], dims[1:])):
            params.append((f"net.w{i}", Tensor(_uniform_fan_in(w_rng, a, (a, b)), requires_grad=True)))
            params.append((f"net.b{i}", Tensor(np.zeros((1, b)), requires_grad=True)))
    elif arch == "siren":
        dims = [config.in_dim] + [config.width] * config.layers + [config.out_dim]
        for i, (a, b) in enumerate(zip(dims[:-1], dims[1:])):
            params.append((f"net.w{i}", Tensor(siren_init(w_rng, a, (a, b)), requires_grad=True)))
            params.append((f"net.b{i}", Tensor(siren_init(w_rng, a, (1, b)), requires_grad=True)))
    else:  # mfn_fourier / mfn_gabor
        k, w = config.layers, config.width
        omega_std = config.mfn_input_scale / np.sqrt(k)
        for i in range(k):
            params.append((f"flt.omega{i}", Tensor(w_rng.normal(0.0, omega_std, (config.in_dim, w)), requires_grad=True)))
            params.append((f"flt.phi{i}", Tensor(w_rng.uniform(-np.pi, np.pi, (1, w)), requires_grad=True)))
            if arch == "mfn_gabor":
                params.append((f"flt.mu{i}", Tensor(w_rng.uniform(-1.0, 1.0, (config.in_dim, w)), requires_grad=True)))
                gscale = (config.mfn_gamma / k) / np.sqrt(2.0 / np.pi)
                params.append((f"flt.gamma{i}", Tensor(np.abs(w_rng.normal(0.0, 1.0, (1, w))) * gscale, requires_grad=True)))
        for i in range(k - 1):
            params.append((f"net.w{i}", Tensor(_uniform_fan_in(w_rng, w, (w, w)), requires_grad=True)))
            params.append((f"net.b{i}", Tensor(np.zeros((1, w)), requires_grad=True)))
        params.append((f"net.w{k - 1}", Tensor(_uniform_fan_in(w_rng, w, (w, config.out_dim)), requires_grad=True)))
        params.append((f"net.b{k - 1}", Tensor(np.zeros((1, config.out_dim)), requires_grad=True)))

    if norm is None:
        norm = NormState.identity(config.in_dim, config.out_dim)
    return Model(config, encoder, params, norm)


# ----- checkpoint serialization ----------------------------------------------


def _pack_array(arr: np.ndarray) -> bytes:
    return arr.astype("<f8").tobytes()


def _serialize(model: Model) -> bytes:
    out = bytearray()
    out += CHECKPOINT_MAGIC
    out += struct.pack("<I", CHECKPOINT_VERSION)
    cfg = json.dumps(model.config.to_json(), sort_keys=True).encode("utf-8")
    out += struct.pack("<I", len(cfg))
    out += cfg
    n = model.norm
    out += struct.pack("<II", model.config.in_dim, model.config.out_dim)
    for arr in (n.in_lo, n.in_hi, n.out_shift, n.out_scale):
        out += _pack_array(np.asarray(arr))
    blocks = [(name, t.data, True) for name, t in model.named_parameters()]
    blocks += [(name, np.atleast_2d(buf), False) for name, buf in model.named_buffers()]
    out += struct.pack("<I", len(blocks))
    for name, data, trainable in blocks:
        nb = name.encode("utf-8")
        out += struct.pack("<HBII", len(nb), int(trainable), data.shape[0], data.shape[1])
        out += nb
        out += _pack_array(data)
    out += struct.pack("<I", zlib.crc32(bytes(out)) & 0xFFFFFFFF)
    return bytes(out)


def checkpoint_save(model: Model, path) -> int:
    """Write the model to ``path``; returns the number of bytes written."""
    blob = _serialize(model)
    with open(path, "wb") as f:
        f.write(blob)
    return len(blob)


def checkpoint_nbytes(model: Model) -> dict:
    """Exact size accounting for one checkpoint.

    ``file`` is the on-disk size (8 bytes per stored scalar plus the header),
    ``header`` everything that is not parameter payload, and ``eq32`` the
    32-bit-equivalent size used for compression ratios.
    """
    total = len(_serialize(model))
    entries = model.state_entries()
    header = total - 8 * entries
    return {"file": total, "header": header, "entries": entries, "eq32": header + 4 * entries}


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise CorruptCheckpointError(
                f"checkpoint truncated: wanted {n} bytes at offset {self.pos}, "
                f"file has {len(self.blob)}"
            )
        piece = self.blob[self.pos : self.pos + n]
        self.pos += n
        return piece

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def checkpoint_load(path) -> Model:
    """Rebuild a model bitwise-identically from a checkpoint file."""
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < len(CHECKPOINT_MAGIC) + 4 or blob[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise CorruptCheckpointError(f"not a checkpoint: bad magic in {path}")
    stored_crc = struct.unpack("<I", blob[-4:])[0]
    actual_crc = zlib.crc32(blob[:-4]) & 0xFFFFFFFF
    if stored_crc != actual_crc:
        raise CorruptCheckpointError(
            f"checkpoint CRC mismatch in {path}: stored {stored_crc:#010x}, computed {actual_crc:#010x}"
        )
    r = _Reader(blob[:-4])
    r.take(len(CHECKPOINT_MAGIC))
    (version,) = r.unpack("<I")
    if version != CHECKPOINT_VERSION:
        raise CorruptCheckpointError(f"unsupported checkpoint version {version}")
    (cfg_len,) = r.unpack("<I")
    try:
        config = ModelConfig.from_json(json.loads(r.take(cfg_len).decode("utf-8")))
    except (ValueError, TypeError, KeyError) as e:
        raise CorruptCheckpointError(f"checkpoint config block unreadable: {e}") from e
    din, dout = r.unpack("<II")
    if (din, dout) != (config.in_dim, config.out_dim):
        raise CorruptCheckpointError(
            f"normalization dims ({din}, {dout}) disagree with config ({config.in_dim}, {config.out_dim})"
        )

    def arr(n):
        return np.frombuffer(r.take(8 * n), dtype="<f8").copy()

    norm = NormState(in_lo=arr(din), in_hi=arr(din), out_shift=arr(dout), out_scale=arr(dout))
    model = build_model(config, norm=norm)
    (n_blocks,) = r.unpack("<I")
    named = dict(model.named_parameters())
    buffers = {name: buf for name, buf in model.named_buffers()}
    seen = set()
    for _ in range(n_blocks):
        name_len, trainable, rows, cols = r.unpack("<HBII")
        name = r.take(name_len).decode("utf-8")
        data = np.frombuffer(r.take(8 * rows * cols), dtype="<f8").reshape(rows, cols).copy()
        if trainable:
            if name not in named:
                raise CorruptCheckpointError(f"checkpoint parameter {name!r} unknown to this architecture")
            if named[name].data.shape != (rows, cols):
                raise CorruptCheckpointError(
                    f"checkpoint parameter {name!r} has shape ({rows}, {cols}), expected {named[name].data.shape}"
                )
            named[name].data = data
        else:
            if name not in buffers:
                raise CorruptCheckpointError(f"checkpoint buffer {name!r} unknown to this architecture")
            buffers[name][...] = data.reshape(buffers[name].shape)
        seen.add(name)
    missing = (set(named) | set(buffers)) - seen
    if missing:
        raise CorruptCheckpointError(f"checkpoint missing parameter blocks: {sorted(missing)}")
    if r.pos != len(r.blob):
        raise CorruptCheckpointError(f"{len(r.blob) - r.pos} trailing bytes after last checkpoint block")
    return model
