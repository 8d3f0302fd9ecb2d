"""Input encodings that lift coordinates into higher-frequency feature spaces.

All encoders consume coordinates already normalized to ``[-1, 1]`` per
dimension and produce a feature matrix whose width is fixed by the encoder:

* ``none`` — pass-through, width ``in_dim``.
* ``gaussian_pe`` — per input dimension, ``L`` random frequencies
  ``f ~ N(0, bandwidth^2)`` drawn once at construction; features
  ``sqrt(2) * cos(f * x)``.  Width ``in_dim * L``.
* ``fixed_pe_2l`` — per input dimension, the dyadic ladder
  ``[sin(2^0 x) .. sin(2^(L-1) x), cos(2^0 x) .. cos(2^(L-1) x)]``.
  Width ``in_dim * 2L``.
* ``group`` — a per-dimension rule from ``{identity, linear, pe2l,
  gaussian}``; ``identity`` repeats the raw coordinate ``L`` times and
  ``linear`` repeats a trainable scalar map ``w * x + b`` ``L`` times, so
  heterogeneous inputs (e.g. space vs. time) can be encoded differently.
* ``hash_grid`` — multiresolution feature grids with trainable tables:
  ``levels`` resolutions spaced geometrically from ``base_resolution`` to
  ``fine_resolution``; at each level the ``2^d`` cell-corner features are
  gathered from a ``2^log2_table x features`` table (dense indexing when the
  full vertex grid fits, a prime-XOR hash otherwise) and d-linearly
  interpolated.  Width ``levels * features + aux``.

Trainable encoder state lives in ``params()`` (autodiff leaves); frozen
state that must survive a save/load round trip lives in ``buffers()``.
"""

from __future__ import annotations

import dataclasses
import itertools
import warnings

import numpy as np

from .autodiff import Tape, Tensor

__all__ = [
    "EncodingSpec",
    "EncodingError",
    "build_encoder",
    "mhe_level_resolutions",
    "mhe_hash",
    "HASH_PRIMES",
]

# Per-dimension mixing primes for the corner hash (dimension 0 is identity so
# a 1-D grid hashes to consecutive table rows).
HASH_PRIMES = (1, 2654435761, 805459861, 3674653429)

_GROUP_RULES = ("identity", "linear", "pe2l", "gaussian")


class EncodingError(ValueError):
    """Invalid encoding configuration."""


@dataclasses.dataclass(frozen=True)
class EncodingSpec:
    """Declarative encoder description, serializable into checkpoints."""

    kind: str = "none"
    L: int = 8
    bandwidth: float = 100.0
    rules: tuple[str, ...] | None = None  # group: one rule per input dim
    levels: int = 16
    features: int = 2
    log2_table: int = 19
    base_resolution: int = 2
    fine_resolution: int = 32
    aux: int | None = None  # hash_grid: trailing dims appended raw (None = all beyond 3)

    def __post_init__(self):
        if self.kind not in ("none", "gaussian_pe", "fixed_pe_2l", "group", "hash_grid"):
            raise EncodingError(f"unknown encoding kind {self.kind!r}")
        if self.L < 1:
            raise EncodingError(f"L must be >= 1, got {self.L}")
        if self.bandwidth <= 0:
            raise EncodingError(f"bandwidth must be positive, got {self.bandwidth}")
        if self.levels < 1:
            raise EncodingError(f"levels must be >= 1, got {self.levels}")
        if self.features < 1:
            raise EncodingError(f"features must be >= 1, got {self.features}")
        if self.log2_table < 1:
            raise EncodingError(f"log2_table must be >= 1, got {self.log2_table}")
        if self.base_resolution < 1 or self.fine_resolution < self.base_resolution:
            raise EncodingError(
                f"need 1 <= base <= fine resolution, got "
                f"{self.base_resolution}..{self.fine_resolution}"
            )
        if self.rules is not None:
            bad = [r for r in self.rules if r not in _GROUP_RULES]
            if bad:
                raise EncodingError(f"unknown group rules {bad}; one of {_GROUP_RULES}")
        if self.aux is not None and self.aux < 0:
            raise EncodingError(f"aux must be >= 0, got {self.aux}")

    def to_json(self) -> dict:
        d = dataclasses.asdict(self)
        d["rules"] = list(self.rules) if self.rules is not None else None
        return d

    @classmethod
    def from_json(cls, d: dict) -> "EncodingSpec":
        d = dict(d)
        if d.get("rules") is not None:
            d["rules"] = tuple(d["rules"])
        return cls(**d)


def mhe_level_resolutions(levels: int, r_min: int, r_max: int) -> list[int]:
    """Geometric ladder of grid resolutions, endpoint-exact.

    ``R_l = floor(r_min * b^l)`` with ``b = exp((ln r_max - ln r_min) /
    (levels - 1))``; the first and last entries are forced to ``r_min`` and
    ``r_max`` so rounding never detunes the endpoints.
    """
    if levels < 1:
        raise EncodingError(f"levels must be >= 1, got {levels}")
    if r_min < 1 or r_max < r_min:
        raise EncodingError(f"need 1 <= base <= fine resolution, got {r_min}..{r_max}")
    if levels == 1 or r_max == r_min:
        return [r_min] * levels if r_max == r_min else [r_min]
    b = np.exp((np.log(r_max) - np.log(r_min)) / (levels - 1))
    res = [int(np.floor(r_min * b**l)) for l in range(levels)]
    res[0], res[-1] = r_min, r_max
    return res


def mhe_hash(corners: np.ndarray, log2_table: int) -> np.ndarray:
    """Instant-hash of integer grid corners into ``2^log2_table`` rows.

    XOR of per-dimension products with fixed primes, reduced mod the table
    size.  Multiplication wraps in uint64, matching the reference scheme.
    """
    c = np.asarray(corners, dtype=np.uint64)
    if c.ndim == 1:
        c = c.reshape(1, -1)
    dims = c.shape[1]
    if dims > len(HASH_PRIMES):
        raise EncodingError(f"hash supports up to {len(HASH_PRIMES)} dims, got {dims}")
    acc = np.zeros(c.shape[0], dtype=np.uint64)
    with np.errstate(over="ignore"):
        for d in range(dims):
            acc ^= c[:, d] * np.uint64(HASH_PRIMES[d])
    return (acc & np.uint64((1 << log2_table) - 1)).astype(np.int64)


class _EncoderBase:
    out_dim: int

    def params(self) -> list[tuple[str, Tensor]]:
        return []

    def buffers(self) -> list[tuple[str, np.ndarray]]:
        return []

    def encode(self, tape: Tape, xn: np.ndarray) -> Tensor:
        raise NotImplementedError


class IdentityEncoder(_EncoderBase):
    def __init__(self, in_dim: int):
        self.out_dim = in_dim

    def encode(self, tape: Tape, xn: np.ndarray) -> Tensor:
        return Tensor(xn)


class GaussianPEEncoder(_EncoderBase):
    """Random cosine features; frequencies frozen at construction."""

    def __init__(self, in_dim: int, L: int, bandwidth: float, rng: np.random.Generator):
        if L < 1:
            raise EncodingError(f"L must be >= 1, got {L}")
        if bandwidth <= 0:
            raise EncodingError(f"bandwidth must be positive, got {bandwidth}")
        self.in_dim = in_dim
        self.L = L
        self.freqs = rng.normal(0.0, bandwidth, size=(in_dim, L))
        self.out_dim = in_dim * L

    def buffers(self):
        return [("gaussian_pe.freqs", self.freqs)]

    def encode(self, tape: Tape, xn: np.ndarray) -> Tensor:
        cols = [np.sqrt(2.0) * np.cos(xn[:, d : d + 1] * self.freqs[d][None, :]) for d in range(self.in_dim)]
        return Tensor(np.concatenate(cols, axis=1))


def _pe2l_features(x: np.ndarray, L: int) -> np.ndarray:
    """Dyadic sin/cos ladder of one coordinate column, width 2L."""
    scales = 2.0 ** np.arange(L)
    z = x * scales[None, :]
    return np.concatenate([np.sin(z), np.cos(z)], axis=1)


class FixedPE2LEncoder(_EncoderBase):
    def __init__(self, in_dim: int, L: int):
        if L < 1:
            raise EncodingError(f"L must be >= 1, got {L}")
        self.in_dim = in_dim
        self.L = L
        self.out_dim = in_dim * 2 * L

    def encode(self, tape: Tape, xn: np.ndarray) -> Tensor:
        cols = [_pe2l_features(xn[:, d : d + 1], self.L) for d in range(self.in_dim)]
        return Tensor(np.concatenate(cols, axis=1))


class GroupEncoder(_EncoderBase):
    """Per-dimension rules; every input dimension must be assigned exactly once."""

    def __init__(self, in_dim: int, L: int, bandwidth: float, rules: tuple[str, ...], rng: np.random.Generator):
        if rules is None or len(rules) != in_dim:
            raise EncodingError(
                f"group encoding needs one rule per input dimension ({in_dim}), got {rules}"
            )
        for r in rules:
            if r not in _GROUP_RULES:
                raise EncodingError(f"unknown group rule {r!r}; valid rules: {_GROUP_RULES}")
        self.in_dim = in_dim
        self.L = L
        self.rules = tuple(rules)
        self._lin_w: dict[int, Tensor] = {}
        self._lin_b: dict[int, Tensor] = {}
        self._gauss: dict[int, np.ndarray] = {}
        width = 0
        for d, rule in enumerate(self.rules):
            if rule in ("identity", "linear", "gaussian"):
                width += L
            else:  # pe2l
                width += 2 * L
            if rule == "linear":
                self._lin_w[d] = Tensor([[1.0]], requires_grad=True, name=f"group.w{d}")
                self._lin_b[d] = Tensor([[0.0]], requires_grad=True, name=f"group.b{d}")
            elif rule == "gaussian":
                self._gauss[d] = rng.normal(0.0, bandwidth, size=(1, L))
        self.out_dim = width

    def params(self):
        out = []
        for d in sorted(self._lin_w):
            out.append((f"group.w{d}", self._lin_w[d]))
            out.append((f"group.b{d}", self._lin_b[d]))
        return out

    def buffers(self):
        return [(f"group.freqs{d}", self._gauss[d]) for d in sorted(self._gauss)]

    def encode(self, tape: Tape, xn: np.ndarray) -> Tensor:
        parts: list[Tensor] = []
        for d, rule in enumerate(self.rules):
            col = xn[:, d : d + 1]
            if rule == "identity":
                parts.append(Tensor(np.repeat(col, self.L, axis=1)))
            elif rule == "linear":
                g = tape.affine(Tensor(col), self._lin_w[d], self._lin_b[d])
                parts.append(tape.concat([g] * self.L, axis=1))
            elif rule == "pe2l":
                parts.append(Tensor(_pe2l_features(col, self.L)))
            else:  # gaussian
                parts.append(Tensor(np.sqrt(2.0) * np.cos(col * self._gauss[d])))
        if len(parts) == 1:
            return parts[0]
        return tape.concat(parts, axis=1)


class HashGridEncoder(_EncoderBase):
    """Multiresolution trainable feature grids over the unit cube.

    Spatial inputs (at most the first three dimensions, fewer if the input is
    lower-dimensional) are mapped from ``[-1, 1]`` to ``[0, 1]`` and looked up
    in one table per level; remaining dimensions are appended unchanged as
    auxiliary features.  Coarse levels whose full vertex grid fits in the
    table are indexed densely (collision-free); finer levels use the XOR hash.
    """

    def __init__(self, in_dim: int, spec: EncodingSpec, rng: np.random.Generator):
        if spec.features < 1:
            raise EncodingError(f"features must be >= 1, got {spec.features}")
        if not 1 <= spec.log2_table <= 30:
            raise EncodingError(f"log2_table must be in [1, 30], got {spec.log2_table}")
        aux = spec.aux if spec.aux is not None else max(0, in_dim - 3)
        if not 0 <= aux < in_dim:
            raise EncodingError(f"aux dims {aux} incompatible with {in_dim} inputs")
        self.grid_dim = in_dim - aux
        if not 1 <= self.grid_dim <= len(HASH_PRIMES):
            raise EncodingError(f"hash grid supports 1..{len(HASH_PRIMES)} spatial dims, got {self.grid_dim}")
        self.aux = aux
        self.levels = spec.levels
        self.features = spec.features
        self.log2_table = spec.log2_table
        self.table_size = 1 << spec.log2_table
        self.resolutions = mhe_level_resolutions(spec.levels, spec.base_resolution, spec.fine_resolution)
        self.tables = [
            Tensor(
                rng.uniform(-1e-4, 1e-4, size=(self.table_size, spec.features)),
                requires_grad=True,
                name=f"hash.table{l}",
            )
            for l in range(spec.levels)
        ]
        self.out_dim = spec.levels * spec.features + aux
        self.clamped = 0  # running count of out-of-domain inputs
        self._corner_offsets = np.array(
            list(itertools.product((0, 1), repeat=self.grid_dim)), dtype=np.int64
        )

    def params(self):
        return [(f"hash.table{l}", t) for l, t in enumerate(self.tables)]

    def level_is_dense(self, level: int) -> bool:
        return (self.resolutions[level] + 1) ** self.grid_dim <= self.table_size

    def corner_indices(self, level: int, corners: np.ndarray) -> np.ndarray:
        """Table rows for integer corners, dense raveling or hashed."""
        if self.level_is_dense(level):
            side = self.resolutions[level] + 1
            idx = np.zeros(corners.shape[0], dtype=np.int64)
            stride = 1
            for d in range(self.grid_dim):
                idx += corners[:, d] * stride
                stride *= side
            return idx
        return mhe_hash(corners, self.log2_table)

    def encode(self, tape: Tape, xn: np.ndarray) -> Tensor:
        xg = xn[:, : self.grid_dim]
        x01 = (xg + 1.0) * 0.5
        outside = (x01 < 0.0) | (x01 > 1.0)
        if outside.any():
            n = int(outside.sum())
            self.clamped += n
            warnings.warn(f"hash grid: clamped {n} coordinates outside the unit cube", stacklevel=2)
            x01 = np.clip(x01, 0.0, 1.0)
        parts: list[Tensor] = []
        for l, r in enumerate(self.resolutions):
            pos = x01 * r
            cell = np.minimum(np.floor(pos), r - 1).astype(np.int64)
            frac = pos - cell
            level_out = None
            for offset in self._corner_offsets:
                corner = cell + offset[None, :]
                w = np.ones((xg.shape[0], 1))
                for d in range(self.grid_dim):
                    w = w * (frac[:, d : d + 1] if offset[d] else 1.0 - frac[:, d : d + 1])
                feats = tape.gather_rows(self.tables[l], self.corner_indices(l, corner))
                term = tape.hadamard(feats, Tensor(w))
                level_out = term if level_out is None else tape.add(level_out, term)
            parts.append(level_out)
        if self.aux:
            parts.append(Tensor(xn[:, self.grid_dim :]))
        return tape.concat(parts, axis=1) if len(parts) > 1 else parts[0]


def build_encoder(spec: EncodingSpec, in_dim: int, rng: np.random.Generator) -> _EncoderBase:
    """Construct the encoder named by ``spec`` for ``in_dim`` inputs."""
    if in_dim < 1:
        raise EncodingError(f"in_dim must be >= 1, got {in_dim}")
    if spec.kind == "none":
        return IdentityEncoder(in_dim)
    if spec.kind == "gaussian_pe":
        return GaussianPEEncoder(in_dim, spec.L, spec.bandwidth, rng)
    if spec.kind == "fixed_pe_2l":
        return FixedPE2LEncoder(in_dim, spec.L)
    if spec.kind == "group":
        return GroupEncoder(in_dim, spec.L, spec.bandwidth, spec.rules, rng)
    if spec.kind == "hash_grid":
        return HashGridEncoder(in_dim, spec, rng)
    raise EncodingError(f"unknown encoding kind {spec.kind!r}")
