"""Evaluation quantities: RMSE, SNR/PSNR, compression accounting, grid checks.

All error metrics are computed in denormalized (physical) units.  Compression
follows 32-bit accounting on both sides: the raw field costs ``Nn * C * 4 * T``
bytes, and the model side uses a 32-bit-equivalent checkpoint size (header
plus four bytes per stored scalar) so ratios are comparable with float32
storage conventions even though checkpoints on disk hold float64.

``grid_validation`` measures off-node generalization: the network is evaluated
on a regular lattice, the reference comes from shape-function interpolation
of the nodal truth, and the RMSE between them exposes models that memorize
nodes but oscillate in between.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .fielddata import DataError, FieldDataset, TetMesh, barycentric_interpolate
from .models import Model, checkpoint_nbytes

__all__ = [
    "EvalReport",
    "rmse",
    "vnorm_rmse",
    "snr_psnr",
    "compression_report",
    "evaluate",
    "grid_validation",
    "profile_along_polyline",
]


def _as_columns(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    return a.reshape(-1, 1) if a.ndim == 1 else a


def rmse(pred, truth) -> np.ndarray:
    """Root-mean-square error per output component."""
    pred, truth = _as_columns(pred), _as_columns(truth)
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs truth {truth.shape}")
    return np.sqrt(np.mean((pred - truth) ** 2, axis=0))


def vnorm_rmse(pred, truth) -> float:
    """RMSE of the row 2-norms (e.g. velocity magnitude), not a norm of RMSEs."""
    pred, truth = _as_columns(pred), _as_columns(truth)
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs truth {truth.shape}")
    return float(rmse(np.linalg.norm(pred, axis=1), np.linalg.norm(truth, axis=1))[0])


def snr_psnr(pred, truth) -> tuple[float, float]:
    """(SNR dB, PSNR dB) over all entries; +inf when the error is exactly zero."""
    pred, truth = _as_columns(pred), _as_columns(truth)
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs truth {truth.shape}")
    mse = float(np.mean((pred - truth) ** 2))
    power = float(np.mean(truth**2))
    peak = float(np.max(np.abs(truth)))
    if power <= 0.0:
        raise ValueError("truth is identically zero: SNR undefined")
    if mse == 0.0:
        return np.inf, np.inf
    return 10.0 * np.log10(power / mse), 10.0 * np.log10(peak * peak / mse)


@dataclasses.dataclass
class EvalReport:
    """Flat evaluation summary with deterministic text/TSV serialization."""

    component_names: tuple[str, ...]
    rmse: np.ndarray  # per component, physical units
    snr_db: float
    psnr_db: float
    n_samples: int
    raw_bytes: int | None = None
    checkpoint_bytes: int | None = None
    eq32_bytes: int | None = None
    compression_ratio: float | None = None
    extras: dict = dataclasses.field(default_factory=dict)
    error_samples: np.ndarray | None = None  # strided signed errors, not serialized

    def items(self) -> list[tuple[str, float]]:
        out = [(f"rmse_{name}", float(v)) for name, v in zip(self.component_names, self.rmse)]
        out += [("snr_db", self.snr_db), ("psnr_db", self.psnr_db), ("n_samples", self.n_samples)]
        for key in ("raw_bytes", "checkpoint_bytes", "eq32_bytes", "compression_ratio"):
            val = getattr(self, key)
            if val is not None:
                out.append((key, val))
        out += list(self.extras.items())
        return out

    def to_text(self) -> str:
        return "\n".join(f"{k} {_fmt(v)}" for k, v in self.items()) + "\n"

    def to_tsv(self) -> str:
        items = self.items()
        head = "\t".join(k for k, _ in items)
        row = "\t".join(_fmt(v) for _, v in items)
        return head + "\n" + row + "\n"

    def write(self, text_path, tsv_path=None) -> None:
        with open(text_path, "w") as f:
            f.write(self.to_text())
        if tsv_path is not None:
            with open(tsv_path, "w") as f:
                f.write(self.to_tsv())


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.17g}"


def compression_report(model: Model, dims: dict) -> dict:
    """Byte accounting: raw field storage vs model checkpoint sizes.

    ``dims`` gives the field being represented: node count ``Nn``, component
    count ``C``, and timestep count ``T`` (default 1).  The raw side assumes
    32-bit storage per scalar: ``raw_bytes = Nn * C * 4 * T``.
    """
    unknown = set(dims) - {"Nn", "C", "T"}
    if unknown:
        raise ValueError(f"unknown dims keys {sorted(unknown)}; expected Nn, C, T")
    try:
        nn, c = int(dims["Nn"]), int(dims["C"])
    except KeyError as e:
        raise ValueError(f"dims missing required key {e}") from None
    t = int(dims.get("T", 1))
    if nn < 1 or c < 1 or t < 1:
        raise ValueError(f"dims must be positive, got Nn={nn}, C={c}, T={t}")
    raw = nn * c * 4 * t
    sizes = checkpoint_nbytes(model)
    return {
        "raw_bytes": raw,
        "checkpoint_bytes": sizes["file"],
        "eq32_bytes": sizes["eq32"],
        "compression_ratio": raw / sizes["eq32"],
    }


def evaluate(
    model: Model,
    dataset: FieldDataset,
    dims: dict | None = None,
    vnorm_components: tuple | None = None,
    batch_rows: int = 65536,
    max_error_samples: int = 1024,
) -> EvalReport:
    """Full-dataset evaluation in physical units.

    ``vnorm_components`` selects value columns forming a vector whose
    magnitude RMSE is reported as ``rmse_vnorm`` (velocity-style fields).
    """
    pred = model.forward(dataset.coords, batch_rows=batch_rows)
    per_component = rmse(pred, dataset.values)
    snr, psnr = snr_psnr(pred, dataset.values)
    extras = {}
    if vnorm_components is not None:
        idx = list(vnorm_components)
        extras["rmse_vnorm"] = vnorm_rmse(pred[:, idx], dataset.values[:, idx])
    report = EvalReport(
        component_names=dataset.value_names,
        rmse=per_component,
        snr_db=snr,
        psnr_db=psnr,
        n_samples=dataset.n,
        extras=extras,
    )
    if dims is not None:
        for k, v in compression_report(model, dims).items():
            setattr(report, k, v)
    stride = max(1, dataset.n // max_error_samples)
    report.error_samples = (pred - dataset.values)[::stride].copy()
    return report


def grid_validation(
    model: Model,
    mesh: TetMesh,
    grid,
    timestep: int = 0,
    time_value: float | None = None,
    box=None,
) -> EvalReport:
    """Off-node RMSE on a regular lattice against interpolated nodal truth.

    ``grid`` is a point count per axis (scalar or 3-tuple).  The lattice spans
    ``box`` (default: the mesh bounding box); points outside every tet are
    skipped.  For space-time models (4 inputs) ``time_value`` supplies the
    physical time appended to each lattice point, and ``timestep`` picks the
    matching truth snapshot.
    """
    shape = np.broadcast_to(np.asarray(grid, dtype=np.int64), (3,))
    if np.any(shape < 2):
        raise DataError(f"grid needs at least 2 points per axis, got {tuple(shape)}")
    if not 0 <= timestep < mesh.timesteps:
        raise DataError(f"timestep {timestep} out of range for {mesh.timesteps} snapshots")
    if box is None:
        lo, hi = mesh.nodes.min(axis=0), mesh.nodes.max(axis=0)
    else:
        lo, hi = (np.asarray(b, dtype=np.float64) for b in box)
    axes = [np.linspace(lo[k], hi[k], shape[k]) for k in range(3)]
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    pts = np.column_stack([gx.ravel(), gy.ravel(), gz.ravel()])

    nodal = mesh.values[timestep]
    truths, kept = [], []
    for i, q in enumerate(pts):
        v = barycentric_interpolate(mesh, nodal, q)
        if v is not None:
            truths.append(v)
            kept.append(i)
    if not kept:
        raise DataError("validation grid lies entirely outside the mesh")
    inside = pts[kept]
    truth = np.vstack(truths)

    if model.config.in_dim == 4:
        if time_value is None:
            raise DataError("model takes a time coordinate: pass time_value")
        coords = np.column_stack([inside, np.full(inside.shape[0], float(time_value))])
    elif model.config.in_dim == 3:
        coords = inside
    else:
        raise DataError(f"grid validation needs a 3- or 4-input model, got {model.config.in_dim}")
    pred = model.forward(coords, batch_rows=65536)
    per_component = rmse(pred, truth)
    snr, psnr = snr_psnr(pred, truth)
    names = tuple(f"c{i}" for i in range(truth.shape[1]))
    return EvalReport(
        component_names=names,
        rmse=per_component,
        snr_db=snr,
        psnr_db=psnr,
        n_samples=len(kept),
        extras={"n_grid": int(pts.shape[0]), "n_inside": int(len(kept))},
    )


def profile_along_polyline(model: Model, waypoints, n_samples: int = 200):
    """Evaluate the model along a polyline; returns (arclength, points, values).

    Sample positions are spaced uniformly in arclength from the first to the
    last waypoint, matching line-plot extraction along a centerline.
    """
    w = np.atleast_2d(np.asarray(waypoints, dtype=np.float64))
    if w.shape[0] < 2:
        raise DataError("polyline needs at least two waypoints")
    if w.shape[1] != model.config.in_dim:
        raise DataError(f"waypoints have {w.shape[1]} dims, model expects {model.config.in_dim}")
    if n_samples < 2:
        raise DataError(f"n_samples must be >= 2, got {n_samples}")
    seg = np.linalg.norm(np.diff(w, axis=0), axis=1)
    knots = np.concatenate([[0.0], np.cumsum(seg)])
    total = knots[-1]
    if total <= 0.0:
        raise DataError("polyline has zero length")
    s = np.linspace(0.0, total, n_samples)
    pts = np.empty((n_samples, w.shape[1]))
    for k in range(w.shape[1]):
        pts[:, k] = np.interp(s, knots, w[:, k])
    return s, pts, model.forward(pts)
