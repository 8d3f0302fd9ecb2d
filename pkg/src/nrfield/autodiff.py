"""Reverse-mode automatic differentiation on 2-D float64 arrays.

A :class:`Tape` records every operation as it runs (define-by-run), so the
list of nodes is already in topological order.  ``Tape.backward`` walks that
list once in reverse, accumulating vector-Jacobian products into per-node
gradient slots.  Only 2-D ``float64`` tensors exist: rows are batch samples,
columns are features.  Parameters are leaf tensors with
``requires_grad=True``; gradients never mutate parameter values.

The operation set is deliberately small: affine maps, elementwise
``sin/cos/tanh/silu/relu/exp/square``, broadcasting add / hadamard,
column/row concatenation, row gather (scatter-add adjoint), and
sum / mean reductions.  Everything in this package is composed from these.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Tensor",
    "Tape",
    "Adam",
    "ShapeError",
    "NumericOverflowError",
    "TapeUsageError",
    "grad_check",
]


class ShapeError(ValueError):
    """Operand shapes incompatible with the requested operation."""


class NumericOverflowError(FloatingPointError):
    """A tape node produced a non-finite value (debug mode only)."""


class TapeUsageError(RuntimeError):
    """The tape was used out of order (e.g. backward before any forward op)."""


class Tensor:
    """A 2-D float64 array, optionally tracked for gradients.

    Tensors created directly are leaves (parameters or watched inputs).
    Tensors returned by tape operations are interior nodes owned by that
    tape.  ``grad`` is only populated on leaves, by ``Tape.backward``.
    """

    __slots__ = ("data", "requires_grad", "grad", "name", "_node")

    def __init__(self, data, requires_grad: bool = False, name: str = ""):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        if arr.ndim != 2:
            raise ShapeError(f"tensors are 2-D; got array of shape {arr.shape}")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.name = name
        self._node: int | None = None  # index on the owning tape, leaves: None

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def __repr__(self) -> str:
        tag = self.name or ("leaf" if self._node is None else f"node {self._node}")
        return f"Tensor({tag}, shape={self.data.shape}, requires_grad={self.requires_grad})"


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (adjoint of numpy broadcasting)."""
    if g.shape == shape:
        return g
    out = g
    if shape[0] == 1 and g.shape[0] != 1:
        out = out.sum(axis=0, keepdims=True)
    if shape[1] == 1 and g.shape[1] != 1:
        out = out.sum(axis=1, keepdims=True)
    if out.shape != shape:
        raise ShapeError(f"cannot reduce gradient of shape {g.shape} to {shape}")
    return out


def _check_broadcast(name: str, a: Tensor, b: Tensor) -> None:
    ra, ca = a.shape
    rb, cb = b.shape
    if (ra != rb and 1 not in (ra, rb)) or (ca != cb and 1 not in (ca, cb)):
        raise ShapeError(f"{name}: shapes {a.shape} and {b.shape} do not broadcast")


class Tape:
    """Records operations for one forward pass and replays them backward.

    Parameters
    ----------
    check_finite:
        Debug mode: validate every node output with ``np.isfinite`` and
        raise :class:`NumericOverflowError` naming the offending node.
        Off by default (the training loop checks the scalar loss instead).
    """

    def __init__(self, check_finite: bool = False):
        self.check_finite = check_finite
        self._outs: list[Tensor] = []
        self._parents: list[tuple[Tensor, ...]] = []
        self._vjps: list = []
        self._names: list[str] = []
        self._grads: dict[int, np.ndarray] | None = None
        self._leaf_grads: dict[int, np.ndarray] = {}
        self._leaves: dict[int, Tensor] = {}

    def __len__(self) -> int:
        return len(self._outs)

    # ----- node plumbing ---------------------------------------------------

    def _record(self, name: str, out_data: np.ndarray, parents: tuple[Tensor, ...], vjp) -> Tensor:
        k = len(self._outs)
        if self.check_finite and not np.all(np.isfinite(out_data)):
            raise NumericOverflowError(f"numeric overflow at node {k} ({name})")
        out = Tensor(out_data)
        out._node = k
        self._outs.append(out)
        self._parents.append(parents)
        self._vjps.append(vjp)
        self._names.append(name)
        return out

    # ----- operations ------------------------------------------------------

    def affine(self, x: Tensor, w: Tensor, b: Tensor) -> Tensor:
        """``x @ w + b`` with ``b`` a (1, cols) row broadcast over the batch."""
        x, w, b = _as_tensor(x), _as_tensor(w), _as_tensor(b)
        if x.shape[1] != w.shape[0]:
            raise ShapeError(f"affine: x {x.shape} @ w {w.shape} inner dims differ")
        if b.shape != (1, w.shape[1]):
            raise ShapeError(f"affine: bias {b.shape} must be (1, {w.shape[1]})")
        out = x.data @ w.data + b.data

        def vjp(g):
            return g @ w.data.T, x.data.T @ g, g.sum(axis=0, keepdims=True)

        return self._record("affine", out, (x, w, b), vjp)

    def add(self, a: Tensor, b: Tensor) -> Tensor:
        a, b = _as_tensor(a), _as_tensor(b)
        _check_broadcast("add", a, b)
        out = a.data + b.data

        def vjp(g):
            return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

        return self._record("add", out, (a, b), vjp)

    def sub(self, a: Tensor, b: Tensor) -> Tensor:
        a, b = _as_tensor(a), _as_tensor(b)
        _check_broadcast("sub", a, b)
        out = a.data - b.data

        def vjp(g):
            return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

        return self._record("sub", out, (a, b), vjp)

    def hadamard(self, a: Tensor, b: Tensor) -> Tensor:
        """Elementwise product with row/column broadcasting."""
        a, b = _as_tensor(a), _as_tensor(b)
        _check_broadcast("hadamard", a, b)
        out = a.data * b.data

        def vjp(g):
            return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

        return self._record("hadamard", out, (a, b), vjp)

    def scale(self, x: Tensor, s: float) -> Tensor:
        x = _as_tensor(x)
        s = float(s)
        return self._record("scale", x.data * s, (x,), lambda g: (g * s,))

    def sin(self, x: Tensor) -> Tensor:
        x = _as_tensor(x)
        return self._record("sin", np.sin(x.data), (x,), lambda g: (g * np.cos(x.data),))

    def cos(self, x: Tensor) -> Tensor:
        x = _as_tensor(x)
        return self._record("cos", np.cos(x.data), (x,), lambda g: (-g * np.sin(x.data),))

    def tanh(self, x: Tensor) -> Tensor:
        x = _as_tensor(x)
        y = np.tanh(x.data)
        return self._record("tanh", y, (x,), lambda g: (g * (1.0 - y * y),))

    def silu(self, x: Tensor) -> Tensor:
        """x * sigmoid(x)."""
        x = _as_tensor(x)
        sig = 1.0 / (1.0 + np.exp(-x.data))
        y = x.data * sig
        return self._record("silu", y, (x,), lambda g: (g * (sig * (1.0 + x.data * (1.0 - sig))),))

    def relu(self, x: Tensor) -> Tensor:
        x = _as_tensor(x)
        return self._record("relu", np.maximum(x.data, 0.0), (x,), lambda g: (g * (x.data > 0.0),))

    def exp(self, x: Tensor) -> Tensor:
        x = _as_tensor(x)
        y = np.exp(x.data)
        return self._record("exp", y, (x,), lambda g: (g * y,))

    def square(self, x: Tensor) -> Tensor:
        x = _as_tensor(x)
        return self._record("square", x.data * x.data, (x,), lambda g: (g * (2.0 * x.data),))

    def concat(self, parts: list[Tensor], axis: int = 1) -> Tensor:
        if axis not in (0, 1):
            raise ShapeError(f"concat: axis must be 0 or 1, got {axis}")
        parts = [_as_tensor(p) for p in parts]
        if not parts:
            raise ShapeError("concat: need at least one tensor")
        other = 1 - axis
        ref = parts[0].shape[other]
        for p in parts:
            if p.shape[other] != ref:
                raise ShapeError(
                    f"concat: shapes {[p.shape for p in parts]} differ on axis {other}"
                )
        out = np.concatenate([p.data for p in parts], axis=axis)
        sizes = [p.shape[axis] for p in parts]
        splits = np.cumsum(sizes)[:-1]

        def vjp(g):
            return tuple(np.split(g, splits, axis=axis))

        return self._record("concat", out, tuple(parts), vjp)

    def gather_rows(self, x: Tensor, index: np.ndarray) -> Tensor:
        """Select rows ``x[index]``; the adjoint scatter-adds duplicates.

        The backward pass uses ``np.add.at``, which accumulates repeated
        indices sequentially, so gradients are bitwise deterministic.
        """
        x = _as_tensor(x)
        idx = np.asarray(index, dtype=np.intp).ravel()
        if idx.size and (idx.min() < 0 or idx.max() >= x.shape[0]):
            raise ShapeError(
                f"gather_rows: index range [{idx.min()}, {idx.max()}] outside {x.shape[0]} rows"
            )
        out = x.data[idx]

        def vjp(g):
            gx = np.zeros_like(x.data)
            np.add.at(gx, idx, g)
            return (gx,)

        return self._record("gather_rows", out, (x,), vjp)

    def sum(self, x: Tensor, axis: int | None = None) -> Tensor:
        x = _as_tensor(x)
        r, c = x.shape
        if axis is None:
            out = np.array([[x.data.sum()]])
            vjp = lambda g: (np.broadcast_to(g, (r, c)).copy(),)
        elif axis == 0:
            out = x.data.sum(axis=0, keepdims=True)
            vjp = lambda g: (np.broadcast_to(g, (r, c)).copy(),)
        elif axis == 1:
            out = x.data.sum(axis=1, keepdims=True)
            vjp = lambda g: (np.broadcast_to(g, (r, c)).copy(),)
        else:
            raise ShapeError(f"sum: axis must be None, 0 or 1, got {axis}")
        return self._record("sum", out, (x,), vjp)

    def mean(self, x: Tensor, axis: int | None = None) -> Tensor:
        x = _as_tensor(x)
        r, c = x.shape
        if axis is None:
            n, out = r * c, np.array([[x.data.mean()]])
        elif axis == 0:
            n, out = r, x.data.mean(axis=0, keepdims=True)
        elif axis == 1:
            n, out = c, x.data.mean(axis=1, keepdims=True)
        else:
            raise ShapeError(f"mean: axis must be None, 0 or 1, got {axis}")

        def vjp(g):
            return (np.broadcast_to(g / n, (r, c)).copy(),)

        return self._record("mean", out, (x,), vjp)

    # ----- reverse pass ------------------------------------------------------

    def backward(self, loss: Tensor, seed_grad: np.ndarray | None = None) -> None:
        """Run one reverse sweep from ``loss``; visits each node exactly once.

        Leaf gradients are retrievable with :meth:`grad` and are also written
        to ``leaf.grad`` for tensors with ``requires_grad=True``.  Parameter
        values themselves are never modified.
        """
        if not self._outs:
            raise TapeUsageError("backward called before any forward operation was recorded")
        if loss._node is None or loss._node >= len(self._outs) or self._outs[loss._node] is not loss:
            raise TapeUsageError("backward target was not produced by this tape")
        if seed_grad is None:
            seed = np.ones(loss.shape)
        else:
            seed = np.asarray(seed_grad, dtype=np.float64)
            if seed.shape != loss.shape:
                raise ShapeError(f"seed gradient shape {seed.shape} != loss shape {loss.shape}")
        grads: dict[int, np.ndarray] = {loss._node: seed}
        leaf_grads: dict[int, np.ndarray] = {}
        leaves: dict[int, Tensor] = {}
        for k in range(loss._node, -1, -1):
            g = grads.pop(k, None)
            if g is None:
                continue
            parent_grads = self._vjps[k](g)
            for parent, pg in zip(self._parents[k], parent_grads):
                if pg is None:
                    continue
                # vjps may hand back the upstream gradient itself (add) or a
                # view of it (concat); copy before storing so later in-place
                # accumulation cannot corrupt a sibling's gradient.
                if pg is g or pg.base is not None:
                    owned = pg.copy()
                else:
                    owned = pg
                if parent._node is not None:
                    node = parent._node
                    if node in grads:
                        grads[node] += pg
                    else:
                        grads[node] = owned
                else:
                    pid = id(parent)
                    if pid in leaf_grads:
                        leaf_grads[pid] += pg
                    else:
                        leaf_grads[pid] = owned
                        leaves[pid] = parent
        self._leaf_grads = leaf_grads
        self._leaves = leaves
        for pid, t in leaves.items():
            if t.requires_grad:
                t.grad = leaf_grads[pid]

    def grad(self, t: Tensor) -> np.ndarray | None:
        """Gradient of the last backward target w.r.t. leaf tensor ``t``."""
        return self._leaf_grads.get(id(t))


class Adam:
    """Adam optimizer with bias correction; updates parameters in place.

    Moment estimates are keyed per parameter tensor, so one instance can be
    reused across training iterations.  With zero gradient the update is
    exactly zero.
    """

    def __init__(self, lr: float = 1e-4, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if lr <= 0.0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self._m: dict[int, np.ndarray] = {}
        self._v: dict[int, np.ndarray] = {}

    def step(self, params: list[Tensor], grads: list[np.ndarray]) -> None:
        if len(params) != len(grads):
            raise ValueError(f"{len(params)} parameters but {len(grads)} gradients")
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for p, g in zip(params, grads):
            if g is None:
                continue
            if g.shape != p.data.shape:
                raise ShapeError(f"gradient shape {g.shape} != parameter shape {p.data.shape}")
            key = id(p)
            m = self._m.get(key)
            if m is None:
                m = self._m[key] = np.zeros_like(p.data)
                self._v[key] = np.zeros_like(p.data)
            v = self._v[key]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def grad_check(
    build,
    params: list[Tensor],
    *,
    n_coords: int = 50,
    h: float = 1e-6,
    tol: float = 1e-5,
    rng: np.random.Generator | None = None,
) -> dict:
    """Compare reverse-mode gradients against central finite differences.

    ``build`` is a zero-argument callable returning ``(tape, loss)`` for the
    current parameter values; it is re-evaluated for each perturbation.
    ``n_coords`` parameter coordinates are sampled uniformly across all
    parameters.  Relative error uses an absolute floor of 1e-3 in the
    denominator so near-zero gradients are compared absolutely.

    Returns a report dict with ``max_rel_err``, ``n_checked`` and a list of
    ``failures`` exceeding ``tol``.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    tape, loss = build()
    if loss.shape != (1, 1):
        raise ShapeError(f"grad_check expects a scalar loss, got shape {loss.shape}")
    tape.backward(loss)
    analytic = [tape.grad(p) for p in params]
    sizes = np.array([p.data.size for p in params])
    total = int(sizes.sum())
    if total == 0:
        raise ValueError("grad_check: no parameter coordinates to check")
    flat_choice = rng.choice(total, size=min(n_coords, total), replace=False)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    max_rel = 0.0
    failures = []
    for flat in flat_choice:
        pi = int(np.searchsorted(offsets, flat, side="right")) - 1
        local = int(flat - offsets[pi])
        p = params[pi]
        i, j = np.unravel_index(local, p.data.shape)
        keep = p.data[i, j]
        p.data[i, j] = keep + h
        up = build()[1].data[0, 0]
        p.data[i, j] = keep - h
        down = build()[1].data[0, 0]
        p.data[i, j] = keep
        fd = (up - down) / (2.0 * h)
        ad = 0.0 if analytic[pi] is None else analytic[pi][i, j]
        rel = abs(ad - fd) / max(abs(ad), abs(fd), 1e-3)
        max_rel = max(max_rel, rel)
        if rel > tol:
            failures.append({"param": pi, "coord": (int(i), int(j)), "ad": float(ad), "fd": float(fd), "rel": float(rel)})
    return {"max_rel_err": float(max_rel), "n_checked": len(flat_choice), "failures": failures}
