"""Field dataset ingestion: images, point tables, tetrahedral nodal fields.

Three on-disk formats:

* PGM ``P2``/``P5`` grayscale images (maxval up to 65535; two-byte binary
  samples are big-endian per the format).  Pixels are normalized by maxval.
* ``NRFPTS1`` point tables.  Text: a ``#cols:`` header naming columns, then
  whitespace-separated rows.  Binary: ``NRFPTS1\\0`` magic, column names,
  row count, 64-bit little-endian values, trailing CRC-32.  Header names
  ``x y z t`` are coordinates (time last by convention); any other name is a
  value component.
* ``NRFTET1`` tetrahedral meshes: ``{magic, Nn, Ne, T, C}`` header
  (32-bit counts), node coordinates (f64), tet indices (i32), per-timestep
  nodal values (f64, ``T x Nn x C`` row-major), trailing CRC-32.

Interpolation follows linear shape functions: a uniform spatial bin grid
(resolution = cube root of the tet count) proposes candidate tets, an exact
barycentric test with tolerance 1e-10 decides containment, and ties on
shared faces resolve to the lowest tet index.
"""

from __future__ import annotations

import dataclasses
import os
import struct
import warnings
import zlib

import numpy as np

from .models import NormState

__all__ = [
    "DataError",
    "GreyImage",
    "FieldDataset",
    "TetMesh",
    "load_pgm",
    "write_pgm",
    "image_to_dataset",
    "load_point_field",
    "write_point_field",
    "load_tetmesh",
    "write_tetmesh",
    "dataset_from_tetmesh",
    "build_box_tetmesh",
    "normalize_io",
    "barycentric_interpolate",
]

COORD_NAMES = ("x", "y", "z", "t")
PTS_MAGIC = b"NRFPTS1\x00"
TET_MAGIC = b"NRFTET1\x00"


class DataError(ValueError):
    """Malformed or inconsistent input data."""


# ----- grayscale images -------------------------------------------------------


@dataclasses.dataclass
class GreyImage:
    """Row-major grayscale image with intensities normalized to [0, 1]."""

    width: int
    height: int
    pixels: np.ndarray  # (height, width) float64 in [0, 1]

    def __post_init__(self):
        if self.pixels.shape != (self.height, self.width):
            raise DataError(
                f"image pixel block is {self.pixels.shape}, expected ({self.height}, {self.width})"
            )


def _pgm_tokens(blob: bytes):
    """Yield (token, byte_offset) over the PGM header, skipping comments."""
    i = 0
    while i < len(blob):
        c = blob[i : i + 1]
        if c.isspace():
            i += 1
        elif c == b"#":
            while i < len(blob) and blob[i : i + 1] != b"\n":
                i += 1
        else:
            start = i
            while i < len(blob) and not blob[i : i + 1].isspace():
                i += 1
            yield blob[start:i], start
            i += 1  # single whitespace after a token


def load_pgm(path) -> GreyImage:
    """Read an ASCII (P2) or binary (P5) PGM file."""
    with open(path, "rb") as f:
        blob = f.read()
    tokens = _pgm_tokens(blob)

    def take(what: str) -> tuple[bytes, int]:
        try:
            return next(tokens)
        except StopIteration:
            raise DataError(f"PGM truncated at byte {len(blob)}: missing {what}") from None

    magic, off = take("magic")
    if magic not in (b"P2", b"P5"):
        raise DataError(f"not a PGM: magic {magic!r} at byte {off}")
    fields = []
    for what in ("width", "height", "maxval"):
        tok, off = take(what)
        try:
            val = int(tok)
        except ValueError:
            raise DataError(f"PGM {what} {tok!r} at byte {off} is not an integer") from None
        if val <= 0:
            raise DataError(f"PGM {what} must be positive, got {val} at byte {off}")
        fields.append((val, off))
    (w, _), (h, _), (maxval, mv_off) = fields
    if maxval > 65535:
        raise DataError(f"PGM maxval {maxval} at byte {mv_off} exceeds 65535")
    n = w * h
    if magic == b"P2":
        raster = []
        for tok, off in tokens:
            try:
                raster.append(int(tok))
            except ValueError:
                raise DataError(f"PGM sample {tok!r} at byte {off} is not an integer") from None
        if len(raster) != n:
            raise DataError(f"PGM has {len(raster)} samples, expected {n}")
        data = np.array(raster, dtype=np.float64)
    else:
        # binary raster starts one whitespace byte after maxval
        start = mv_off + len(str(maxval)) + 1
        bytes_per = 2 if maxval > 255 else 1
        need = n * bytes_per
        raster = blob[start : start + need]
        if len(raster) != need:
            raise DataError(
                f"PGM raster truncated at byte {start + len(raster)}: "
                f"got {len(raster)} of {need} bytes"
            )
        dtype = ">u2" if bytes_per == 2 else np.uint8
        data = np.frombuffer(raster, dtype=dtype).astype(np.float64)
    if data.max() > maxval:
        raise DataError(f"PGM sample {int(data.max())} exceeds maxval {maxval}")
    return GreyImage(width=w, height=h, pixels=(data / maxval).reshape(h, w))


def write_pgm(path, pixels: np.ndarray, maxval: int = 255, binary: bool = True) -> None:
    """Write intensities in [0, 1] as a PGM file."""
    pixels = np.asarray(pixels, dtype=np.float64)
    if pixels.ndim != 2:
        raise DataError(f"expected a 2-D image, got shape {pixels.shape}")
    q = np.rint(np.clip(pixels, 0.0, 1.0) * maxval).astype(np.uint32)
    h, w = pixels.shape
    header = f"{'P5' if binary else 'P2'}\n{w} {h}\n{maxval}\n".encode("ascii")
    with open(path, "wb") as f:
        f.write(header)
        if binary:
            f.write(q.astype(">u2" if maxval > 255 else np.uint8).tobytes())
        else:
            f.write("\n".join(" ".join(str(v) for v in row) for row in q).encode("ascii"))
            f.write(b"\n")


def make_test_pattern(n: int = 128) -> np.ndarray:
    """Deterministic grayscale test card in [0, 1]: a brightness ramp,
    diagonal sinusoidal stripes, and two hard-edged disks.

    Mixes smooth, periodic, and discontinuous content so representations
    with different spectral behavior separate measurably on one image.
    """
    yy, xx = np.meshgrid(np.linspace(0.0, 1.0, n), np.linspace(0.0, 1.0, n), indexing="ij")
    img = 0.45 + 0.25 * xx
    img = img + 0.22 * np.sin(2.0 * np.pi * (6.0 * xx + 10.0 * yy))
    for cy, cx, r, v in ((0.30, 0.70, 0.16, 0.30), (0.72, 0.28, 0.12, -0.30)):
        img = img + v * (((yy - cy) ** 2 + (xx - cx) ** 2) < r * r)
    return np.clip(img, 0.0, 1.0)


def bundled_image_path(name: str = "stripes_128.pgm") -> str:
    """Filesystem path of a grayscale image shipped inside the package."""
    path = os.path.join(os.path.dirname(__file__), "data", name)
    if not os.path.exists(path):
        raise DataError(f"no bundled image named {name!r}")
    return path


# ----- datasets ----------------------------------------------------------------


@dataclasses.dataclass
class FieldDataset:
    """Sampled field: coordinates (optional trailing time column) to values."""

    coords: np.ndarray  # (N, Din)
    values: np.ndarray  # (N, C)
    coord_names: tuple[str, ...]
    value_names: tuple[str, ...]
    mesh: "TetMesh | None" = None
    lo: np.ndarray = None
    hi: np.ndarray = None

    def __post_init__(self):
        self.coords = np.atleast_2d(np.asarray(self.coords, dtype=np.float64))
        self.values = np.atleast_2d(np.asarray(self.values, dtype=np.float64))
        if self.coords.shape[0] == 0:
            raise DataError("dataset has no records")
        if self.coords.shape[0] != self.values.shape[0]:
            raise DataError(
                f"{self.coords.shape[0]} coordinate rows but {self.values.shape[0]} value rows"
            )
        if len(self.coord_names) != self.coords.shape[1]:
            raise DataError("coordinate names do not match coordinate columns")
        if len(self.value_names) != self.values.shape[1]:
            raise DataError("value names do not match value columns")
        if not np.all(np.isfinite(self.coords)) or not np.all(np.isfinite(self.values)):
            raise DataError("dataset contains non-finite entries")
        if self.lo is None:
            self.lo = self.coords.min(axis=0)
        if self.hi is None:
            self.hi = self.coords.max(axis=0)
        self.lo = np.asarray(self.lo, dtype=np.float64)
        self.hi = np.asarray(self.hi, dtype=np.float64)
        if np.any(self.coords < self.lo - 1e-12) or np.any(self.coords > self.hi + 1e-12):
            raise DataError("domain box does not contain all coordinates")

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    @property
    def din(self) -> int:
        return self.coords.shape[1]

    @property
    def c(self) -> int:
        return self.values.shape[1]

    def select_values(self, names) -> "FieldDataset":
        """Dataset restricted to the named value components, order preserved."""
        names = tuple(names)
        missing = [m for m in names if m not in self.value_names]
        if missing:
            raise DataError(f"unknown value components {missing}; have {list(self.value_names)}")
        idx = [self.value_names.index(m) for m in names]
        return FieldDataset(
            coords=self.coords,
            values=self.values[:, idx],
            coord_names=self.coord_names,
            value_names=names,
            mesh=self.mesh,
            lo=self.lo,
            hi=self.hi,
        )


def image_to_dataset(img: GreyImage) -> FieldDataset:
    """Pixel centers mapped to [0,1]^2 (x = (col+0.5)/w, y = (row+0.5)/h)."""
    xs = (np.arange(img.width) + 0.5) / img.width
    ys = (np.arange(img.height) + 0.5) / img.height
    gx, gy = np.meshgrid(xs, ys)  # row-major over the image
    coords = np.column_stack([gx.ravel(), gy.ravel()])
    values = img.pixels.reshape(-1, 1)
    return FieldDataset(coords=coords, values=values, coord_names=("x", "y"), value_names=("g",))


# ----- point tables -------------------------------------------------------------


def _split_columns(names: tuple[str, ...]):
    coord_idx = [i for i, c in enumerate(names) if c in COORD_NAMES]
    value_idx = [i for i, c in enumerate(names) if c not in COORD_NAMES]
    if not coord_idx:
        raise DataError(f"point table declares no coordinate columns (of {COORD_NAMES}): {names}")
    if not value_idx:
        raise DataError(f"point table declares no value columns: {names}")
    return coord_idx, value_idx


def _dataset_from_table(names: tuple[str, ...], table: np.ndarray) -> FieldDataset:
    ci, vi = _split_columns(names)
    return FieldDataset(
        coords=table[:, ci],
        values=table[:, vi],
        coord_names=tuple(names[i] for i in ci),
        value_names=tuple(names[i] for i in vi),
    )


def load_point_field(path) -> FieldDataset:
    """Read an NRFPTS1 point table (text or binary, detected by magic)."""
    with open(path, "rb") as f:
        blob = f.read()
    if blob[: len(PTS_MAGIC)] == PTS_MAGIC:
        return _load_points_binary(blob, path)
    return _load_points_text(blob, path)


def _load_points_text(blob: bytes, path) -> FieldDataset:
    try:
        text = blob.decode("utf-8")
    except UnicodeDecodeError as e:
        raise DataError(f"{path}: not UTF-8 text and not binary NRFPTS1 ({e})") from None
    lines = text.splitlines()
    header_no = None
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        if line.lstrip().startswith("#cols:"):
            header_no = lineno
            names = tuple(line.split(":", 1)[1].split())
            break
        raise DataError(f"{path}:{lineno}: expected '#cols:' header before data rows")
    if header_no is None:
        raise DataError(f"{path}: missing '#cols:' header")
    if len(set(names)) != len(names):
        raise DataError(f"{path}:{header_no}: duplicate column names in {names}")
    rows = []
    for lineno, line in enumerate(lines[header_no:], start=header_no + 1):
        body = line.strip()
        if not body or body.startswith("#"):
            continue
        parts = body.split()
        if len(parts) != len(names):
            raise DataError(
                f"{path}:{lineno}: row has {len(parts)} fields, header declares {len(names)}"
            )
        try:
            rows.append([float(p) for p in parts])
        except ValueError as e:
            raise DataError(f"{path}:{lineno}: {e}") from None
    if not rows:
        raise DataError(f"{path}: no data rows")
    return _dataset_from_table(names, np.array(rows, dtype=np.float64))


def _load_points_binary(blob: bytes, path) -> FieldDataset:
    if len(blob) < len(PTS_MAGIC) + 4:
        raise DataError(f"{path}: binary point table truncated")
    stored = struct.unpack("<I", blob[-4:])[0]
    if stored != zlib.crc32(blob[:-4]) & 0xFFFFFFFF:
        raise DataError(f"{path}: binary point table CRC mismatch")
    body = blob[len(PTS_MAGIC) : -4]
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(body):
            raise DataError(f"{path}: binary point table truncated at byte {pos + len(PTS_MAGIC)}")
        piece = body[pos : pos + n]
        pos += n
        return piece

    (ncols,) = struct.unpack("<H", take(2))
    if ncols == 0:
        raise DataError(f"{path}: binary point table declares zero columns")
    names = []
    for _ in range(ncols):
        (ln,) = struct.unpack("<H", take(2))
        names.append(take(ln).decode("utf-8"))
    if len(set(names)) != len(names):
        raise DataError(f"{path}: duplicate column names in binary point table: {names}")
    (n,) = struct.unpack("<Q", take(8))
    if n == 0:
        raise DataError(f"{path}: binary point table has no rows")
    table = np.frombuffer(take(8 * n * ncols), dtype="<f8").reshape(n, ncols).copy()
    if pos != len(body):
        raise DataError(f"{path}: {len(body) - pos} trailing bytes in binary point table")
    if not np.all(np.isfinite(table)):
        raise DataError(f"{path}: binary point table contains non-finite values")
    return _dataset_from_table(tuple(names), table)


def write_point_field(path, dataset: FieldDataset, binary: bool = False) -> None:
    """Write a dataset as an NRFPTS1 table (column order: coords, values)."""
    names = tuple(dataset.coord_names) + tuple(dataset.value_names)
    table = np.column_stack([dataset.coords, dataset.values])
    if not binary:
        with open(path, "w", encoding="utf-8") as f:
            f.write("#cols: " + " ".join(names) + "\n")
            np.savetxt(f, table, fmt="%.17g")
        return
    out = bytearray()
    out += PTS_MAGIC
    out += struct.pack("<H", len(names))
    for name in names:
        nb = name.encode("utf-8")
        out += struct.pack("<H", len(nb)) + nb
    out += struct.pack("<Q", table.shape[0])
    out += table.astype("<f8").tobytes()
    out += struct.pack("<I", zlib.crc32(bytes(out)) & 0xFFFFFFFF)
    with open(path, "wb") as f:
        f.write(bytes(out))


# ----- tetrahedral meshes --------------------------------------------------------


class TetMesh:
    """Linear tetrahedral mesh with per-node, per-timestep values."""

    def __init__(self, nodes: np.ndarray, tets: np.ndarray, values: np.ndarray):
        self.nodes = np.asarray(nodes, dtype=np.float64)
        self.tets = np.asarray(tets, dtype=np.int64)
        self.values = np.asarray(values, dtype=np.float64)
        if self.nodes.ndim != 2 or self.nodes.shape[1] != 3:
            raise DataError(f"nodes must be (Nn, 3), got {self.nodes.shape}")
        if self.tets.ndim != 2 or self.tets.shape[1] != 4:
            raise DataError(f"tets must be (Ne, 4), got {self.tets.shape}")
        if self.values.ndim != 3 or self.values.shape[1] != self.nodes.shape[0]:
            raise DataError(
                f"values must be (T, Nn, C) with Nn={self.nodes.shape[0]}, got {self.values.shape}"
            )
        if self.tets.min(initial=0) < 0 or self.tets.max(initial=-1) >= self.nodes.shape[0]:
            raise DataError("tet indices out of node range")
        self._orient_positive()
        self._bins = None
        self._tet_inv = None

    @property
    def nn(self) -> int:
        return self.nodes.shape[0]

    @property
    def ne(self) -> int:
        return self.tets.shape[0]

    @property
    def timesteps(self) -> int:
        return self.values.shape[0]

    @property
    def c(self) -> int:
        return self.values.shape[2]

    def _signed_volumes(self) -> np.ndarray:
        a, b, c, d = (self.nodes[self.tets[:, i]] for i in range(4))
        return np.einsum("ij,ij->i", np.cross(b - a, c - a), d - a) / 6.0

    def _orient_positive(self) -> None:
        vol = self._signed_volumes()
        scale = np.abs(vol).max(initial=0.0)
        if np.any(np.abs(vol) <= 1e-14 * max(scale, 1.0)):
            bad = int(np.argmin(np.abs(vol)))
            raise DataError(f"tet {bad} is degenerate (zero volume)")
        flip = vol < 0
        if flip.any():
            self.tets[flip, 2], self.tets[flip, 3] = (
                self.tets[flip, 3].copy(),
                self.tets[flip, 2].copy(),
            )

    # ----- point location --------------------------------------------------

    def _build_bins(self) -> None:
        lo = self.nodes.min(axis=0)
        hi = self.nodes.max(axis=0)
        span = np.where(hi > lo, hi - lo, 1.0)
        nb = max(1, int(round(self.ne ** (1.0 / 3.0))))
        corners = self.nodes[self.tets]  # (Ne, 4, 3)
        tlo = np.clip(((corners.min(axis=1) - lo) / span * nb).astype(int), 0, nb - 1)
        thi = np.clip(((corners.max(axis=1) - lo) / span * nb).astype(int), 0, nb - 1)
        bins: dict[tuple[int, int, int], list[int]] = {}
        for e in range(self.ne):
            for i in range(tlo[e, 0], thi[e, 0] + 1):
                for j in range(tlo[e, 1], thi[e, 1] + 1):
                    for k in range(tlo[e, 2], thi[e, 2] + 1):
                        bins.setdefault((i, j, k), []).append(e)
        self._bins = {key: np.array(v, dtype=np.int64) for key, v in bins.items()}
        self._bin_geom = (lo, span, nb)
        a = self.nodes[self.tets[:, 0]]
        edges = np.stack([self.nodes[self.tets[:, i]] - a for i in (1, 2, 3)], axis=2)
        self._tet_inv = np.linalg.inv(edges)  # (Ne, 3, 3)
        self._tet_a = a

    def locate(self, q: np.ndarray, tol: float = 1e-10) -> tuple[int, np.ndarray | None]:
        """Containing tet (lowest index on ties) and barycentric coords, or (-1, None)."""
        if self._bins is None:
            self._build_bins()
        lo, span, nb = self._bin_geom
        q = np.asarray(q, dtype=np.float64)
        cell = tuple(np.clip(((q - lo) / span * nb).astype(int), 0, nb - 1))
        cand = self._bins.get(cell)
        if cand is None:
            return -1, None
        rel = q[None, :] - self._tet_a[cand]
        lam_rest = np.einsum("eij,ej->ei", self._tet_inv[cand], rel)
        lam0 = 1.0 - lam_rest.sum(axis=1)
        lam = np.column_stack([lam0, lam_rest])
        ok = np.all(lam >= -tol, axis=1)
        hits = np.nonzero(ok)[0]
        if hits.size == 0:
            return -1, None
        best = hits[0]  # candidates are index-sorted: lowest tet wins ties
        return int(cand[best]), lam[best]


def barycentric_interpolate(mesh: TetMesh, values_at_nodes: np.ndarray, q) -> np.ndarray | None:
    """Shape-function interpolation at ``q``; ``None`` when outside the mesh."""
    values_at_nodes = np.asarray(values_at_nodes, dtype=np.float64)
    if values_at_nodes.shape[0] != mesh.nn:
        raise DataError(
            f"nodal value table has {values_at_nodes.shape[0]} rows, mesh has {mesh.nn} nodes"
        )
    tet, lam = mesh.locate(np.asarray(q, dtype=np.float64))
    if tet < 0:
        return None
    return lam @ values_at_nodes[mesh.tets[tet]]


def load_tetmesh(path) -> TetMesh:
    """Read an NRFTET1 binary mesh."""
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < len(TET_MAGIC) + 4 or blob[: len(TET_MAGIC)] != TET_MAGIC:
        raise DataError(f"{path}: not an NRFTET1 mesh (bad magic)")
    stored = struct.unpack("<I", blob[-4:])[0]
    if stored != zlib.crc32(blob[:-4]) & 0xFFFFFFFF:
        raise DataError(f"{path}: mesh file CRC mismatch")
    body = blob[len(TET_MAGIC) : -4]
    need_header = 16
    if len(body) < need_header:
        raise DataError(f"{path}: mesh header truncated")
    nn, ne, t, c = struct.unpack("<IIII", body[:16])
    if nn == 0 or ne == 0 or t == 0 or c == 0:
        raise DataError(f"{path}: empty mesh (Nn={nn}, Ne={ne}, T={t}, C={c})")
    need = 16 + 8 * nn * 3 + 4 * ne * 4 + 8 * t * nn * c
    if len(body) != need:
        raise DataError(f"{path}: mesh payload is {len(body)} bytes, header implies {need}")
    pos = 16
    nodes = np.frombuffer(body, dtype="<f8", count=nn * 3, offset=pos).reshape(nn, 3).copy()
    pos += 8 * nn * 3
    tets = np.frombuffer(body, dtype="<i4", count=ne * 4, offset=pos).reshape(ne, 4).astype(np.int64)
    pos += 4 * ne * 4
    values = np.frombuffer(body, dtype="<f8", count=t * nn * c, offset=pos).reshape(t, nn, c).copy()
    if not (np.all(np.isfinite(nodes)) and np.all(np.isfinite(values))):
        raise DataError(f"{path}: mesh contains non-finite entries")
    return TetMesh(nodes=nodes, tets=tets, values=values)


def write_tetmesh(path, mesh: TetMesh) -> None:
    out = bytearray()
    out += TET_MAGIC
    out += struct.pack("<IIII", mesh.nn, mesh.ne, mesh.timesteps, mesh.c)
    out += mesh.nodes.astype("<f8").tobytes()
    out += mesh.tets.astype("<i4").tobytes()
    out += mesh.values.astype("<f8").tobytes()
    out += struct.pack("<I", zlib.crc32(bytes(out)) & 0xFFFFFFFF)
    with open(path, "wb") as f:
        f.write(bytes(out))


def dataset_from_tetmesh(mesh: TetMesh, value_names: tuple[str, ...] | None = None) -> FieldDataset:
    """Nodal records; for T > 1 the timestep index becomes a trailing t column."""
    if value_names is None:
        value_names = tuple(f"c{i}" for i in range(mesh.c))
    if len(value_names) != mesh.c:
        raise DataError(f"{len(value_names)} value names for {mesh.c} components")
    if mesh.timesteps == 1:
        coords = mesh.nodes
        values = mesh.values[0]
        coord_names = ("x", "y", "z")
    else:
        t = np.repeat(np.arange(mesh.timesteps, dtype=np.float64), mesh.nn)
        coords = np.column_stack([np.tile(mesh.nodes, (mesh.timesteps, 1)), t])
        values = mesh.values.reshape(-1, mesh.c)
        coord_names = ("x", "y", "z", "t")
    return FieldDataset(
        coords=coords, values=values, coord_names=coord_names, value_names=value_names, mesh=mesh
    )


def build_box_tetmesh(n: int, lo=(0.0, 0.0, 0.0), hi=(1.0, 1.0, 1.0), values_fn=None) -> TetMesh:
    """Regular box mesh: (n-1)^3 cells split into 6 tets each (Kuhn split).

    ``values_fn(nodes) -> (Nn, C)`` supplies nodal values; default is the
    zero scalar field.
    """
    if n < 2:
        raise DataError(f"need at least 2 nodes per axis, got {n}")
    axes = [np.linspace(lo[d], hi[d], n) for d in range(3)]
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    nodes = np.column_stack([gx.ravel(), gy.ravel(), gz.ravel()])

    def vid(i, j, k):
        return (i * n + j) * n + k

    # six tets per cube around the main diagonal, one per axis permutation
    perms = ((0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0))
    tets = []
    for i in range(n - 1):
        for j in range(n - 1):
            for k in range(n - 1):
                base = np.array([i, j, k])
                for perm in perms:
                    corner = [base.copy()]
                    for axis in perm:
                        nxt = corner[-1].copy()
                        nxt[axis] += 1
                        corner.append(nxt)
                    tets.append([vid(*v) for v in corner])
    tets = np.array(tets, dtype=np.int64)
    if values_fn is None:
        values = np.zeros((1, nodes.shape[0], 1))
    else:
        values = np.asarray(values_fn(nodes), dtype=np.float64)[None, :, :]
    return TetMesh(nodes=nodes, tets=tets, values=values)


# ----- normalization -------------------------------------------------------------


def normalize_io(dataset: FieldDataset) -> tuple[FieldDataset, NormState]:
    """Map inputs to [-1, 1] per dimension and outputs to zero mean, unit variance.

    Zero-variance components keep scale 1 (with a warning) so normalization
    is always invertible; the returned constants belong in the model so every
    checkpoint carries its own transform.
    """
    lo = dataset.coords.min(axis=0)
    hi = dataset.coords.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    coords_n = 2.0 * (dataset.coords - lo) / span - 1.0
    shift = dataset.values.mean(axis=0)
    scale = dataset.values.std(axis=0)
    # constant columns rarely have std exactly 0 (the mean itself rounds), so
    # detect them relative to the component magnitude
    flat = scale <= 1e-12 * np.maximum(1.0, np.abs(shift))
    if flat.any():
        names = [dataset.value_names[i] for i in np.nonzero(flat)[0]]
        warnings.warn(f"zero-variance output components {names}: normalized to zeros", stacklevel=2)
        scale = np.where(flat, 1.0, scale)
    values_n = (dataset.values - shift) / scale
    norm = NormState(in_lo=lo.copy(), in_hi=hi.copy(), out_shift=shift, out_scale=scale)
    out = FieldDataset(
        coords=coords_n,
        values=values_n,
        coord_names=dataset.coord_names,
        value_names=dataset.value_names,
        mesh=dataset.mesh,
    )
    return out, norm
