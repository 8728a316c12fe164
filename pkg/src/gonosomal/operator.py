"""Core gonosomal evolution operator.

A two-sex population is described by a vector split into a female block of
length ``n`` and a male block of length ``nu``.  Reproduction is encoded by an
inheritance tensor: the pair (female type i, male type k) contributes
``gamma_f[i, k, j]`` offspring of female type j and ``gamma_m[i, k, l]``
offspring of male type l, and each pair's contributions over all offspring
types sum to one.  The raw evolution operator maps a state ``s = (x, y)`` to

    x'_j = sum_{i,k} gamma_f[i, k, j] * x_i * y_k
    y'_l = sum_{i,k} gamma_m[i, k, l] * x_i * y_k

which is bilinear in the two blocks.  Because the coefficients of each pair
sum to one, the total offspring mass equals the product of the block sums:
``sum(W(s)) = sum(x) * sum(y)``.

This module provides the tensor and operator types, the built-in hemophilia
model, trajectory iteration with divergence/convergence detection, and a
plain-text tensor file format.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

__all__ = [
    "AnnihilatedStateError",
    "DimensionMismatchError",
    "GonosomalOperator",
    "InheritanceTensor",
    "PopulationState",
    "StopReason",
    "TensorFormatError",
    "TrajectoryRecord",
    "dump_tensor",
    "hemophilia_operator",
    "hemophilia_tensor",
    "load_tensor",
]

# Iteration defaults.  A trajectory is declared convergent when two successive
# iterates agree to TOL_FP and the landing point is a fixed point to the same
# tolerance; it is declared divergent past DIV_THRESHOLD in the sup norm.
TOL_FP = 1e-12
DIV_THRESHOLD = 1e12
BUDGET = 10_000

# Trajectories store every iterate up to this step, then every tenth.
_THIN_AFTER = 1_000
_THIN_STRIDE = 10

# The normalized map divides by the block sums; refuse anything at or below
# this magnitude rather than producing infinities.
_BLOCK_SUM_GUARD = 1e-300


class DimensionMismatchError(ValueError):
    """State length does not match the operator's type counts."""


class AnnihilatedStateError(ValueError):
    """A block sum vanished where the normalized map must divide by it."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


class TensorFormatError(ValueError):
    """Tensor file is malformed or fails coefficient validation."""


def as_state_vector(state, dim: int | None = None) -> np.ndarray:
    """Coerce a state (sequence, array, or PopulationState) to a float vector.

    Batched input is allowed: the coordinates live on the trailing axis.
    """
    vec = np.asarray(getattr(state, "vector", state), dtype=float)
    if vec.ndim == 0:
        raise DimensionMismatchError("state must be a vector, got a scalar")
    if dim is not None and vec.shape[-1] != dim:
        raise DimensionMismatchError(
            f"state has {vec.shape[-1]} coordinates, operator expects {dim}"
        )
    return vec


@dataclass(frozen=True, eq=False)
class PopulationState:
    """A population split into a female and a male block.

    Entries are arbitrary finite reals; nonnegativity is a property of
    particular regions of state space, not of the type.
    """

    female: np.ndarray
    male: np.ndarray

    def __post_init__(self):
        for name in ("female", "male"):
            block = np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
            if block.ndim != 1:
                raise ValueError(f"{name} block must be one-dimensional")
            if not np.isfinite(block).all():
                raise ValueError(f"{name} block contains non-finite entries")
            block.flags.writeable = False
            object.__setattr__(self, name, block)

    @classmethod
    def from_vector(cls, vec, n: int, nu: int) -> "PopulationState":
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (n + nu,):
            raise DimensionMismatchError(
                f"expected a vector of length {n + nu}, got shape {vec.shape}"
            )
        return cls(female=vec[:n], male=vec[n:])

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.female, self.male])

    @property
    def n(self) -> int:
        return self.female.size

    @property
    def nu(self) -> int:
        return self.male.size


class InheritanceTensor:
    """Inheritance coefficients of a gonosomal operator.

    ``gamma_f`` has shape (n, nu, n) and ``gamma_m`` shape (n, nu, nu).  For
    every parent pair (i, k) the combined row over all offspring types must
    sum to one; individual entries may be negative (signed measures are
    allowed in raw mode).  Instances are immutable.
    """

    def __init__(self, gamma_f, gamma_m, *, rowsum_tol: float = 1e-12):
        gamma_f = np.array(gamma_f, dtype=float)
        gamma_m = np.array(gamma_m, dtype=float)
        if gamma_f.ndim != 3 or gamma_m.ndim != 3:
            raise ValueError("gamma_f and gamma_m must be rank-3 arrays")
        n, nu = gamma_f.shape[0], gamma_f.shape[1]
        if n < 1 or nu < 1:
            raise ValueError("need at least one female and one male type")
        if gamma_f.shape != (n, nu, n) or gamma_m.shape != (n, nu, nu):
            raise ValueError(
                "shape mismatch: gamma_f must be (n, nu, n) and gamma_m "
                f"(n, nu, nu); got {gamma_f.shape} and {gamma_m.shape}"
            )
        if not (np.isfinite(gamma_f).all() and np.isfinite(gamma_m).all()):
            raise ValueError("tensor entries must be finite")
        row_sums = gamma_f.sum(axis=2) + gamma_m.sum(axis=2)
        bad = np.abs(row_sums - 1.0) > rowsum_tol
        if bad.any():
            i, k = np.argwhere(bad)[0]
            raise ValueError(
                f"coefficient row ({i + 1},{k + 1}) sums to {row_sums[i, k]!r}, "
                f"expected 1 within {rowsum_tol:g}"
            )
        gamma_f.flags.writeable = False
        gamma_m.flags.writeable = False
        self.gamma_f = gamma_f
        self.gamma_m = gamma_m

    @property
    def n(self) -> int:
        return self.gamma_f.shape[0]

    @property
    def nu(self) -> int:
        return self.gamma_f.shape[1]

    @property
    def dim(self) -> int:
        return self.n + self.nu

    def rows(self) -> np.ndarray:
        """All coefficient rows as an (n*nu, n+nu) array, pair index i-major."""
        n, nu = self.n, self.nu
        return np.concatenate(
            [self.gamma_f.reshape(n * nu, n), self.gamma_m.reshape(n * nu, nu)],
            axis=1,
        )

    def is_nonnegative(self, tol: float = 0.0) -> bool:
        return bool(self.gamma_f.min() >= -tol and self.gamma_m.min() >= -tol)

    def __repr__(self) -> str:
        return f"InheritanceTensor(n={self.n}, nu={self.nu})"


def hemophilia_tensor() -> InheritanceTensor:
    """Inheritance tensor of the X-linked recessive lethal (hemophilia) model.

    Types are female (XX, XX_h) and male (XY, X_hY); affected X_hX_h females
    and a matching share of sons do not survive, so the reduced coefficient
    rows of carrier pairings sum to one over fewer surviving offspring kinds.
    The constant 1/3 is stored as its nearest double.
    """
    gf = np.zeros((2, 2, 2))
    gm = np.zeros((2, 2, 2))
    # (XX, XY): half daughters XX, half sons XY
    gf[0, 0, 0] = 0.5
    gm[0, 0, 0] = 0.5
    # (XX, X_hY): all daughters carriers, sons healthy
    gf[0, 1, 1] = 0.5
    gm[0, 1, 0] = 0.5
    # (XX_h, XY): every surviving kind equally likely
    gf[1, 0, :] = 0.25
    gm[1, 0, :] = 0.25
    # (XX_h, X_hY): affected daughters removed, three kinds remain
    third = 1.0 / 3.0
    gf[1, 1, 1] = third
    gm[1, 1, 0] = third
    gm[1, 1, 1] = third
    return InheritanceTensor(gf, gm)


class StopReason(Enum):
    CONVERGED = "ConvergedToPoint"
    DIVERGED = "Diverged"
    BUDGET_EXHAUSTED = "BudgetExhausted"


@dataclass(frozen=True, eq=False)
class TrajectoryRecord:
    """Stored orbit of :meth:`GonosomalOperator.iterate`.

    ``iterates[j]`` is the state at step ``step_indices[j]``; every step is
    stored up to 1000, then every tenth, and the final state always.
    ``limit`` is set only when the run converged.
    """

    iterates: np.ndarray
    step_indices: np.ndarray
    stop_reason: StopReason
    steps_taken: int
    limit: np.ndarray | None = None
    mode: str = "raw"


class GonosomalOperator:
    """Evolution operator generated by an inheritance tensor.

    All state-taking methods accept anything coercible to a float vector of
    length ``n + nu``; batched input works with coordinates on the trailing
    axis.  Operators are immutable and safe to share across threads.
    """

    def __init__(self, tensor: InheritanceTensor):
        self.tensor = tensor

    @property
    def n(self) -> int:
        return self.tensor.n

    @property
    def nu(self) -> int:
        return self.tensor.nu

    @property
    def dim(self) -> int:
        return self.tensor.dim

    def split(self, state) -> tuple[np.ndarray, np.ndarray]:
        vec = as_state_vector(state, self.dim)
        return vec[..., : self.n], vec[..., self.n :]

    def block_sums(self, state) -> tuple[np.ndarray, np.ndarray]:
        x, y = self.split(state)
        return x.sum(axis=-1), y.sum(axis=-1)

    def apply_raw(self, state) -> np.ndarray:
        """One generation of the raw (unnormalized) dynamics."""
        x, y = self.split(state)
        xf = np.einsum("ikj,...i,...k->...j", self.tensor.gamma_f, x, y)
        xm = np.einsum("ikl,...i,...k->...l", self.tensor.gamma_m, x, y)
        return np.concatenate([xf, xm], axis=-1)

    def jacobian_raw(self, state) -> np.ndarray:
        """Jacobian of the raw map; rows index outputs, columns inputs."""
        x, y = self.split(state)
        dfx = np.einsum("ikj,...k->...ji", self.tensor.gamma_f, y)
        dfy = np.einsum("ikj,...i->...jk", self.tensor.gamma_f, x)
        dmx = np.einsum("ikl,...k->...li", self.tensor.gamma_m, y)
        dmy = np.einsum("ikl,...i->...lk", self.tensor.gamma_m, x)
        top = np.concatenate([dfx, dfy], axis=-1)
        bottom = np.concatenate([dmx, dmy], axis=-1)
        return np.concatenate([top, bottom], axis=-2)

    def sum_product_residual(self, state):
        """|sum(W(s)) - sum(female) * sum(male)|, the conservation defect.

        Exact row sums make this zero in exact arithmetic for every state;
        in floating point it stays at rounding level relative to the product.
        """
        fs, ms = self.block_sums(state)
        total = self.apply_raw(state).sum(axis=-1)
        out = np.abs(total - fs * ms)
        return float(out) if np.ndim(out) == 0 else out

    def _require_block_sums(self, state, step: int | None = None):
        fs, ms = self.block_sums(state)
        if np.any(fs <= _BLOCK_SUM_GUARD) or np.any(ms <= _BLOCK_SUM_GUARD):
            where = "" if step is None else f" at step {step}"
            raise AnnihilatedStateError(
                f"annihilated state{where}: a block sum is not positive, the "
                "normalized map cannot divide by it",
                step=step,
            )
        return fs, ms

    def apply_normalized(self, state) -> np.ndarray:
        """One generation of the normalized dynamics on the simplex.

        The raw image is divided by the product of the block sums, so the
        output always sums to one.  The map depends only on the ray of the
        input: scaling either block by a positive factor leaves it unchanged.
        """
        fs, ms = self._require_block_sums(state)
        return self.apply_raw(state) / (fs * ms)[..., np.newaxis]

    def jacobian_normalized(self, state) -> np.ndarray:
        """Analytic Jacobian of the normalized map."""
        fs, ms = self._require_block_sums(state)
        g = (fs * ms)[..., np.newaxis]
        v = self.apply_raw(state) / g
        # d(fs*ms)/ds_j is ms on the female block and fs on the male block
        dg = np.concatenate(
            [
                np.broadcast_to(ms[..., np.newaxis], fs.shape + (self.n,)),
                np.broadcast_to(fs[..., np.newaxis], fs.shape + (self.nu,)),
            ],
            axis=-1,
        )
        jw = self.jacobian_raw(state)
        return jw / g[..., np.newaxis] - np.einsum(
            "...i,...j->...ij", v, dg / g
        )

    def iterate(
        self,
        s0,
        mode: str = "raw",
        budget: int = BUDGET,
        tol_fp: float = TOL_FP,
        div_threshold: float = DIV_THRESHOLD,
    ) -> TrajectoryRecord:
        """Run the orbit of ``s0`` until convergence, divergence, or budget.

        Args:
            s0: starting state, length n + nu.
            mode: "raw" or "normalized".
            budget: maximum number of steps.
            tol_fp: convergence tolerance on both the step difference and
                the fixed-point residual of the landing point.
            div_threshold: sup-norm bound beyond which the orbit is declared
                divergent (non-finite iterates count as divergent too).

        Raises:
            AnnihilatedStateError: in normalized mode, when some iterate has
                a block sum at or below zero; the error names the step.
        """
        if mode not in ("raw", "normalized"):
            raise ValueError(f"mode must be 'raw' or 'normalized', got {mode!r}")
        if budget < 1:
            raise ValueError("budget must be at least 1")
        if tol_fp <= 0 or div_threshold <= 0:
            raise ValueError("tol_fp and div_threshold must be positive")
        s = as_state_vector(s0, self.dim)
        if s.ndim != 1:
            raise DimensionMismatchError("iterate expects a single state")
        s = s.copy()

        def _step(vec, k):
            if mode == "normalized":
                self._require_block_sums(vec, step=k)
            return self.apply_raw(vec) if mode == "raw" else self.apply_normalized(vec)

        kept_steps = [0]
        kept = [s.copy()]

        def _keep(k, vec):
            if k <= _THIN_AFTER or k % _THIN_STRIDE == 0:
                kept_steps.append(k)
                kept.append(vec.copy())

        def _record(reason, k, limit=None):
            if kept_steps[-1] != k:
                kept_steps.append(k)
                kept.append(s.copy())
            return TrajectoryRecord(
                iterates=np.array(kept),
                step_indices=np.array(kept_steps, dtype=int),
                stop_reason=reason,
                steps_taken=k,
                limit=None if limit is None else limit.copy(),
                mode=mode,
            )

        if not np.isfinite(s).all() or np.abs(s).max() > div_threshold:
            return _record(StopReason.DIVERGED, 0)

        for k in range(1, budget + 1):
            s_next = _step(s, k - 1)
            if not np.isfinite(s_next).all() or np.abs(s_next).max() > div_threshold:
                s = s_next
                return _record(StopReason.DIVERGED, k)
            settled = np.abs(s_next - s).max() <= tol_fp
            s = s_next
            _keep(k, s)
            if settled:
                residual = np.abs(_step(s, k) - s).max()
                if residual <= tol_fp:
                    return _record(StopReason.CONVERGED, k, limit=s)
        return _record(StopReason.BUDGET_EXHAUSTED, budget)


def hemophilia_operator() -> GonosomalOperator:
    return GonosomalOperator(hemophilia_tensor())


# ---------------------------------------------------------------------------
# Tensor file format
#
#   # comments run to end of line
#   mode raw            (optional; "raw" or "normalized", default raw)
#   2 2                 (counts: n nu)
#   0.5 0 0.5 0         (one row per pair (i,k), i-major; n+nu coefficients,
#   ...                  female offspring first)
#
# Rows must sum to 1 within 1e-9; files flagged "normalized" must in
# addition be nonnegative.
# ---------------------------------------------------------------------------

_FILE_ROWSUM_TOL = 1e-9


def _content_lines(text: str):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line


def load_tensor(path) -> tuple[InheritanceTensor, str]:
    """Read an inheritance tensor file; returns (tensor, mode)."""
    text = Path(path).read_text()
    lines = list(_content_lines(text))
    if not lines:
        raise TensorFormatError(f"{path}: no content lines")
    mode = "raw"
    pos = 0
    if lines[0][1].split()[0] == "mode":
        parts = lines[0][1].split()
        if len(parts) != 2 or parts[1] not in ("raw", "normalized"):
            raise TensorFormatError(
                f"{path}:{lines[0][0]}: mode line must read 'mode raw' or "
                "'mode normalized'"
            )
        mode = parts[1]
        pos = 1
    if pos >= len(lines):
        raise TensorFormatError(f"{path}: missing 'n nu' header")
    lineno, header = lines[pos]
    parts = header.split()
    try:
        n, nu = (int(p) for p in parts)
    except ValueError:
        raise TensorFormatError(
            f"{path}:{lineno}: header must be two integers 'n nu', got {header!r}"
        ) from None
    if n < 1 or nu < 1:
        raise TensorFormatError(f"{path}:{lineno}: counts must be positive")
    rows = lines[pos + 1 :]
    if len(rows) != n * nu:
        raise TensorFormatError(
            f"{path}: expected {n * nu} coefficient rows, found {len(rows)}"
        )
    gamma_f = np.zeros((n, nu, n))
    gamma_m = np.zeros((n, nu, nu))
    for idx, (lineno, line) in enumerate(rows):
        try:
            values = [float(tok) for tok in line.split()]
        except ValueError:
            raise TensorFormatError(
                f"{path}:{lineno}: row is not whitespace-separated numbers"
            ) from None
        if len(values) != n + nu:
            raise TensorFormatError(
                f"{path}:{lineno}: expected {n + nu} coefficients, got {len(values)}"
            )
        total = sum(values)
        if abs(total - 1.0) > _FILE_ROWSUM_TOL:
            raise TensorFormatError(
                f"{path}:{lineno}: row sums to {total!r}, expected 1 within "
                f"{_FILE_ROWSUM_TOL:g}"
            )
        if mode == "normalized" and min(values) < 0:
            raise TensorFormatError(
                f"{path}:{lineno}: normalized tensors must be nonnegative"
            )
        i, k = divmod(idx, nu)
        gamma_f[i, k] = values[:n]
        gamma_m[i, k] = values[n:]
    try:
        tensor = InheritanceTensor(gamma_f, gamma_m, rowsum_tol=_FILE_ROWSUM_TOL)
    except ValueError as exc:
        raise TensorFormatError(f"{path}: {exc}") from None
    return tensor, mode


def dump_tensor(tensor: InheritanceTensor, mode: str = "raw") -> str:
    """Serialize a tensor to the text format accepted by :func:`load_tensor`."""
    if mode not in ("raw", "normalized"):
        raise ValueError(f"mode must be 'raw' or 'normalized', got {mode!r}")
    out = [f"mode {mode}", f"{tensor.n} {tensor.nu}"]
    for row in tensor.rows():
        out.append(" ".join(f"{v:.17g}" for v in row))
    return "\n".join(out) + "\n"
