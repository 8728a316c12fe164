"""Fixed points of gonosomal dynamics and their linear stability.

Fixed points are located by damped Newton iteration from many random
seeds, run as one batched computation.  Raw mode solves W(s) = s on the
ambient space; normalized mode solves for the map restricted to the
simplex, in the chart that eliminates one coordinate through the sum
constraint (which removes the trivial unit eigenvalue the constraint
would otherwise contribute).

Stability is read off the spectrum of the Jacobian at the root: strictly
inside the unit circle is attracting, strictly outside repelling, mixed is
a saddle, and anything on the circle (within tolerance) is flagged
non-hyperbolic, where the linearization alone decides nothing.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .operator import GonosomalOperator, hemophilia_operator
from .normalized import sample_simplex

__all__ = [
    "Classification",
    "FixedPointReport",
    "FixedPointSearchResult",
    "classify",
    "eigenvalues",
    "find_fixed_points",
    "format_report",
]

# Moduli within this distance of 1 make a linearization non-hyperbolic.
UNIT_CIRCLE_TOL = 1e-8

_MAX_EIG_DIM = 32
_DEDUP_RADIUS = 1e-6
# Near a root with a unit Jacobian eigenvalue the chart residual scales like
# the squared distance, so the residual test alone would accept points 1e-5
# away; the step test pins the root itself.  Newton halves the step in the
# singular direction, hence this is also (twice) the point accuracy.
_STEP_TOL = 1e-12
_SINGULAR_DET = 1e-14
_JITTER = 1e-8
_MAX_HALVINGS = 40


class Classification(enum.Enum):
    ATTRACTING = "Attracting"
    REPELLING = "Repelling"
    SADDLE = "Saddle"
    NON_HYPERBOLIC = "NonHyperbolic"


def eigenvalues(matrix) -> np.ndarray:
    """Spectrum of a square matrix, sorted by real then imaginary part."""
    m = np.asarray(matrix, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    if m.shape[0] > _MAX_EIG_DIM:
        raise ValueError(
            f"matrix side {m.shape[0]} exceeds the supported maximum {_MAX_EIG_DIM}"
        )
    if not np.isfinite(m).all():
        raise ValueError("matrix contains non-finite entries")
    return np.sort_complex(np.linalg.eigvals(m))


def classify(eigs, unit_tol: float = UNIT_CIRCLE_TOL) -> Classification:
    """Stability class from Jacobian eigenvalues at a fixed point."""
    moduli = np.abs(np.asarray(eigs, dtype=complex))
    if moduli.size == 0:
        raise ValueError("empty spectrum")
    if (np.abs(moduli - 1.0) <= unit_tol).any():
        return Classification.NON_HYPERBOLIC
    if (moduli < 1.0).all():
        return Classification.ATTRACTING
    if (moduli > 1.0).all():
        return Classification.REPELLING
    return Classification.SADDLE


@dataclass(frozen=True, eq=False)
class FixedPointReport:
    """One located fixed point with its linearization.

    In normalized mode ``point`` is the full simplex state while
    ``jacobian`` and ``eigenvalues`` describe the reduced chart, so the
    spectrum is free of the sum-constraint artifact.
    """

    point: np.ndarray
    residual: float
    jacobian: np.ndarray
    eigenvalues: np.ndarray
    classification: Classification
    mode: str = "raw"
    note: str | None = None


class FixedPointSearchResult(list):
    """Deduplicated fixed-point reports plus multistart bookkeeping.

    ``n_dropped`` counts seeds that never met the convergence test
    (diverging Newton paths, repeated singular linearizations, exhausted
    iteration budget).
    """

    def __init__(self, reports, n_seeds: int, n_converged: int):
        super().__init__(reports)
        self.n_seeds = int(n_seeds)
        self.n_converged = int(n_converged)

    @property
    def n_dropped(self) -> int:
        return self.n_seeds - self.n_converged


def _newton_multistart(fun, jac, seeds, *, tol, max_steps, step_tol, rng):
    """Damped Newton from every seed at once.

    Convergence requires both a small residual and a small final step, so
    a root with a singular Jacobian (where the residual alone can stay
    small over a wide neighborhood) is still pinned to root accuracy of
    order ``step_tol``.  A singular linearization gets one random jitter;
    a second one kills the seed.
    """
    pts = np.array(seeds, dtype=float)
    k, d = pts.shape
    F = fun(pts)
    res = np.abs(F).max(axis=1)
    res = np.where(np.isfinite(res), res, np.inf)
    last_step = np.full(k, np.inf)
    done = np.zeros(k, dtype=bool)
    dead = np.isinf(res)
    jittered = np.zeros(k, dtype=bool)

    for _ in range(max_steps):
        done |= ~dead & (res <= tol) & (last_step <= step_tol)
        active = np.flatnonzero(~done & ~dead)
        if active.size == 0:
            break
        J = jac(pts[active])
        scale = np.maximum(np.abs(J).max(axis=(1, 2)), 1.0) ** d
        with np.errstate(over="ignore", invalid="ignore"):
            bad = ~np.isfinite(J).all(axis=(1, 2))
            det = np.where(bad, 0.0, np.linalg.det(np.where(np.isfinite(J), J, 0.0)))
            singular = bad | (np.abs(det) < _SINGULAR_DET * scale)
        if singular.any():
            hit = active[singular]
            retry = hit[~jittered[hit]]
            dead[hit[jittered[hit]]] = True
            if retry.size:
                pts[retry] += rng.normal(scale=_JITTER, size=(retry.size, d))
                jittered[retry] = True
                Fr = fun(pts[retry])
                rr = np.abs(Fr).max(axis=1)
                F[retry] = Fr
                res[retry] = np.where(np.isfinite(rr), rr, np.inf)
                last_step[retry] = np.inf
                dead[retry] |= np.isinf(res[retry])
            active = active[~singular]
            if active.size == 0:
                continue
            J = J[~singular]

        step = np.linalg.solve(J, -F[active][..., None])[..., 0]
        alpha = np.ones(active.size)
        pending = np.ones(active.size, dtype=bool)
        for _halving in range(_MAX_HALVINGS):
            if not pending.any():
                break
            idx = active[pending]
            trial = pts[idx] + alpha[pending, None] * step[pending]
            Ft = fun(trial)
            rt = np.abs(Ft).max(axis=1)
            ok = np.isfinite(rt) & (rt < res[idx])
            if ok.any():
                tgt = idx[ok]
                pts[tgt] = trial[ok]
                F[tgt] = Ft[ok]
                res[tgt] = rt[ok]
                last_step[tgt] = np.abs(
                    alpha[pending][ok, None] * step[pending][ok]
                ).max(axis=1)
                keep = pending.copy()
                keep[np.flatnonzero(pending)[ok]] = False
                pending = keep
            alpha[pending] *= 0.5
        dead[active[pending]] = True

    done |= ~dead & (res <= tol) & (last_step <= step_tol)
    return pts[done], int(done.sum())


def _deduplicate(points, residuals, radius):
    # best residual first; a point within radius of a kept one is its twin
    order = np.argsort(residuals)
    kept: list[int] = []
    for i in order:
        if all(np.abs(points[i] - points[j]).max() > radius for j in kept):
            kept.append(i)
    reps = points[kept]
    if len(reps) > 1:
        reps = reps[np.lexsort(reps.T[::-1])]
    return reps


def _reduced_jacobian_batch(op, full_states, eliminate):
    dim = op.dim
    keep = [i for i in range(dim) if i != eliminate]
    embed = np.zeros((dim, dim - 1))
    for col, i in enumerate(keep):
        embed[i, col] = 1.0
    embed[eliminate, :] = -1.0
    jw = op.jacobian_normalized(full_states)
    return jw[..., keep, :] @ embed


def _empirical_attraction_note(op, point, rng, *, n_probes=16, radius=1e-3, steps=5000):
    # convex blends scaled to a common sup-norm radius stay on the simplex;
    # the horizon must outlast transient growth plus an algebraic tail
    z = sample_simplex(rng, n_probes, op.n, op.nu)
    offset = z - point
    scale = radius / np.abs(offset).max(axis=1, keepdims=True)
    probes = point + np.minimum(scale, 1.0) * offset
    before = np.abs(probes - point).max(axis=1)
    cur = probes
    for _ in range(steps):
        cur = op.apply_normalized(cur)
    after = np.abs(cur - point).max(axis=1)
    if (after < before).all():
        return (
            f"unit-modulus eigenvalue: linearization is inconclusive; "
            f"{n_probes} simplex probes at distance {radius:g} all moved closer "
            f"over {steps} steps (worst remaining distance {after.max():.3g}), "
            f"consistent with algebraic convergence"
        )
    return (
        f"unit-modulus eigenvalue: linearization is inconclusive; "
        f"{int((after >= before).sum())} of {n_probes} simplex probes at distance "
        f"{radius:g} failed to move closer over {steps} steps"
    )


def find_fixed_points(
    op: GonosomalOperator | None = None,
    mode: str = "raw",
    n_seeds: int = 1000,
    seed_box: tuple[float, float] = (-5.0, 5.0),
    rng_seed: int = 0,
    tol: float = 1e-10,
    max_steps: int = 200,
    step_tol: float = _STEP_TOL,
    dedup_radius: float = _DEDUP_RADIUS,
) -> FixedPointSearchResult:
    """Multistart Newton search for fixed points, with stability reports.

    Raw mode seeds uniformly in ``seed_box`` per coordinate and solves
    W(s) = s.  Normalized mode seeds on the punctured simplex, solves in
    the chart without the first male coordinate (``seed_box`` is unused),
    and reports the reduced Jacobian; a non-hyperbolic normalized root
    additionally carries an empirical attraction probe in its note.

    Roots within ``dedup_radius`` (sup norm) collapse to the member with
    the smallest residual; reports come back lexicographically sorted.
    """
    op = hemophilia_operator() if op is None else op
    if mode not in ("raw", "normalized"):
        raise ValueError(f"mode must be 'raw' or 'normalized', got {mode!r}")
    if n_seeds < 1:
        raise ValueError("n_seeds must be at least 1")
    rng = np.random.default_rng(rng_seed)
    dim = op.dim

    if mode == "raw":
        lo, hi = seed_box
        if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
            raise ValueError(f"invalid seed box {seed_box!r}")
        seeds = rng.uniform(lo, hi, size=(n_seeds, dim))
        identity = np.eye(dim)

        def fun(s):
            return op.apply_raw(s) - s

        def jac(s):
            return op.jacobian_raw(s) - identity
    else:
        eliminate = op.n
        keep = [i for i in range(dim) if i != eliminate]
        full_seeds = sample_simplex(rng, n_seeds, op.n, op.nu)
        seeds = full_seeds[:, keep]
        identity = np.eye(dim - 1)

        def _embed(r):
            full = np.empty(r.shape[:-1] + (dim,))
            full[..., keep] = r
            full[..., eliminate] = 1.0 - r.sum(axis=-1)
            return full

        # Newton paths may leave the simplex; evaluate the chart map without
        # the annihilation guard (division blowups surface as non-finite
        # residuals and kill the seed) and refuse a Jacobian off the domain.
        def fun(r):
            full = _embed(r)
            fs, ms = op.block_sums(full)
            raw = op.apply_raw(full)
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                img = raw / (fs * ms)[..., None]
            return img[..., keep] - r

        def jac(r):
            full = _embed(r)
            fs, ms = op.block_sums(full)
            ok = (fs > 0) & (ms > 0)
            out = np.full(r.shape + (dim - 1,), np.inf)
            if ok.any():
                out[ok] = (
                    _reduced_jacobian_batch(op, full[ok], eliminate) - identity
                )
            return out

    roots, n_converged = _newton_multistart(
        fun, jac, seeds, tol=tol, max_steps=max_steps, step_tol=step_tol, rng=rng
    )

    if len(roots):
        residuals = np.abs(fun(roots)).max(axis=1)
        roots = _deduplicate(roots, residuals, dedup_radius)

    reports = []
    for root in roots:
        if mode == "raw":
            point = root
            residual = float(np.abs(op.apply_raw(point) - point).max())
            jacobian = op.jacobian_raw(point)
        else:
            point = _embed(root)
            residual = float(np.abs(op.apply_normalized(point) - point).max())
            jacobian = _reduced_jacobian_batch(op, point[None], eliminate)[0]
        eigs = eigenvalues(jacobian)
        label = classify(eigs)
        note = None
        if mode == "normalized" and label is Classification.NON_HYPERBOLIC:
            note = _empirical_attraction_note(op, point, rng)
        reports.append(
            FixedPointReport(
                point=point,
                residual=residual,
                jacobian=jacobian,
                eigenvalues=eigs,
                classification=label,
                mode=mode,
                note=note,
            )
        )
    return FixedPointSearchResult(reports, n_seeds=n_seeds, n_converged=n_converged)


def _fmt(value: float) -> str:
    return f"{value:.17g}"


def _fmt_complex(z: complex) -> str:
    return f"{z.real:.17g}{z.imag:+.17g}j"


def format_report(report: FixedPointReport) -> str:
    """Flat key=value stanza for one fixed point, stable across runs."""
    lines = [
        f"mode={report.mode}",
        "point=" + ",".join(_fmt(c) for c in report.point),
        f"residual={_fmt(report.residual)}",
        "jacobian=" + ";".join(
            ",".join(_fmt(c) for c in row) for row in report.jacobian
        ),
        "eigenvalues=" + ";".join(_fmt_complex(z) for z in report.eigenvalues),
        f"classification={report.classification.value}",
    ]
    if report.note is not None:
        lines.append(f"note={report.note}")
    return "\n".join(lines)
