"""Semigroup gradient estimators and the strong-Feller continuity probe.

Three estimators of <grad P_T f (x), xi> are provided:

* ``pathwise_gradient``   E[grad f(X_T) J_T xi], needs smooth f;
* ``malliavin_gradient``  E[f(X_T) delta(u)] with the covariance-
  normalized weight u_k = (D_k X_T)^T M_T^-1 J_T xi and the divergence
  computed by bump-and-rerun of each increment, works for bounded
  measurable f;
* ``finite_difference_gradient``  coupled-noise central difference,
  the model-free oracle the others are checked against.

The continuity probe compares coupled-noise semigroup values at nearby
starting points on both the original model and its compact-support
truncation, together with the exit frequency of the truncation ball that
controls the localization error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

import numpy as np

from ._kernels import run_gradient, run_path, run_summary
from .backend import maybe_njit
from .errors import ConfigError, NumericalFailureError
from .hormander import build_hierarchy, spanning_dimension
from .models import ModelSpec, sample_noise
from .runners import map_paths

__all__ = [
    "BoundedFunction", "get_f", "F_CATALOG",
    "GradientEstimate", "pathwise_gradient", "malliavin_gradient",
    "finite_difference_gradient",
    "ScanReport", "gradient_bound_scan",
    "truncate_model",
    "FellerProbe", "feller_probe",
    "BUMP_STEP_CAP",
]

BUMP_STEP_CAP = 400


# ---------------------------------------------------------------------------
# bounded test functions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundedFunction:
    """A bounded test function with unit-normalized sup norm, optionally
    smooth with an evaluable gradient."""

    name: str
    fn: Callable[[np.ndarray], float]
    sup_norm: float = 1.0
    grad: Optional[Callable[[np.ndarray], np.ndarray]] = None
    smooth: bool = False


def _halfspace(z):
    return 1.0 if z[0] > 0.0 else 0.0


def _box(z):
    return 1.0 if np.all(np.abs(z) <= 1.0) else 0.0


def _make_sin(k):
    def fn(z):
        return math.sin(k * z[0])

    def grad(z):
        g = np.zeros(len(z))
        g[0] = k * math.cos(k * z[0])
        return g

    return BoundedFunction(f"sin{k}", fn, 1.0, grad, smooth=True)


F_CATALOG = {
    "constant": BoundedFunction(
        "constant", lambda z: 1.0, 1.0,
        lambda z: np.zeros(len(z)), smooth=True),
    "halfspace": BoundedFunction("halfspace", _halfspace),
    "box": BoundedFunction("box", _box),
    "sin1": _make_sin(1),
    "sin2": _make_sin(2),
    "sin4": _make_sin(4),
}


def get_f(name: str) -> BoundedFunction:
    try:
        return F_CATALOG[name]
    except KeyError:
        raise ConfigError(
            f"unknown test function '{name}'; available: "
            f"{', '.join(F_CATALOG)}")


# ---------------------------------------------------------------------------
# estimators
# ---------------------------------------------------------------------------

@dataclass
class GradientEstimate:
    """Monte-Carlo estimate of one directional semigroup derivative."""

    direction: np.ndarray
    value: float
    stderr: float
    n_paths: int
    n_excluded: int
    n_below_floor: int
    estimator: str


def _mean_stderr(vals: np.ndarray):
    n = vals.size
    mean = float(np.sum(vals) / n) if n else float("nan")
    if n > 1:
        stderr = float(np.std(vals, ddof=1) / math.sqrt(n))
    else:
        stderr = float("nan")
    return mean, stderr


def _unit(xi, dim):
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (dim,):
        raise ConfigError(f"direction must have shape ({dim},)")
    nrm = np.linalg.norm(xi)
    if nrm == 0:
        raise ConfigError("direction must be nonzero")
    return xi / nrm


def pathwise_gradient(model: ModelSpec, x0, T: float, f: BoundedFunction,
                      xi, n_paths: int, seed: int, *, dt: float = 1e-3,
                      threads: int = 1) -> GradientEstimate:
    """E[grad f(X_T) J_T xi]; requires f.grad."""
    if f.grad is None:
        raise ConfigError(
            f"pathwise estimator needs a smooth f with gradient; "
            f"'{f.name}' has none")
    xi = _unit(xi, model.dim)
    x0 = np.asarray(x0, dtype=float)
    n_steps = max(1, int(round(T / dt)))

    def worker(i):
        grid = sample_noise(model.d, T, n_steps, seed, i)
        return run_summary(model, x0, grid.increments, grid.dt)

    results = map_paths(worker, n_paths, threads)
    vals = []
    excluded = 0
    for zT, JT, Mt, ex in results:
        if ex >= 0:
            excluded += 1
            continue
        vals.append(float(np.asarray(f.grad(zT)) @ (JT @ xi)))
    if not vals:
        raise NumericalFailureError("all paths exploded")
    mean, stderr = _mean_stderr(np.array(vals))
    return GradientEstimate(xi, mean, stderr, len(vals), excluded, 0,
                            "pathwise")


def _weight_paths(model, x0, T, n_paths, seed, dt, lam_floor, bump_h,
                  threads):
    """Per-path (z_T, weight_vector, status) for the covariance-normalized
    estimator; shared by the directional estimate and the bound scan."""
    n_steps = max(1, int(round(T / dt)))
    if n_steps > BUMP_STEP_CAP:
        raise ConfigError(
            f"bump-and-rerun budget is quadratic in the step count; "
            f"{n_steps} steps exceed the cap of {BUMP_STEP_CAP}. "
            f"Use a coarser dt or shorter T.")
    h = bump_h if bump_h is not None else math.sqrt(
        np.finfo(float).eps) * math.sqrt(T / n_steps)
    x0 = np.asarray(x0, dtype=float)

    def worker(i):
        grid = sample_noise(model.d, T, n_steps, seed, i)
        zT, delta, lam, tr, st = run_gradient(
            model, x0, grid.increments, grid.dt, h, lam_floor)
        return zT, delta, st

    return map_paths(worker, n_paths, threads)


def malliavin_gradient(model: ModelSpec, x0, T: float, f: BoundedFunction,
                       xi, n_paths: int, seed: int, *, dt: float = 1e-3,
                       lam_floor: float = 1e-10,
                       bump_h: Optional[float] = None,
                       threads: int = 1) -> GradientEstimate:
    """E[f(X_T) delta(u_xi)] for bounded measurable f.

    Paths whose covariance matrix falls below the relative spectral floor
    are excluded and counted; more than half of them failing aborts with
    a nondegeneracy warning.
    """
    xi = _unit(xi, model.dim)
    results = _weight_paths(model, x0, T, n_paths, seed, dt, lam_floor,
                            bump_h, threads)
    vals = []
    excluded = below = 0
    for zT, delta, st in results:
        if st == 1:
            excluded += 1
        elif st == 2:
            below += 1
        else:
            vals.append(f.fn(zT) * float(delta @ xi))
    if below + excluded > 0.5 * n_paths:
        raise NumericalFailureError(
            f"covariance spectral floor failed on {below} of {n_paths} "
            f"paths (plus {excluded} exploded): the model looks "
            "degenerate at this horizon; the weight estimator does not "
            "apply")
    if not vals:
        raise NumericalFailureError("no usable paths")
    mean, stderr = _mean_stderr(np.array(vals))
    return GradientEstimate(xi, mean, stderr, len(vals), excluded, below,
                            "malliavin_weight")


def finite_difference_gradient(model: ModelSpec, x0, T: float,
                               f: BoundedFunction, xi, n_paths: int,
                               seed: int, *, dt: float = 1e-3,
                               fd_h: float = 1e-2,
                               threads: int = 1) -> GradientEstimate:
    """Coupled-noise central difference (P_T f(x + h xi) - P_T f(x - h
    xi)) / 2h, the estimator-agnostic oracle."""
    xi = _unit(xi, model.dim)
    x0 = np.asarray(x0, dtype=float)
    n_steps = max(1, int(round(T / dt)))
    zp = x0 + fd_h * xi
    zm = x0 - fd_h * xi
    dim = model.dim

    def worker(i):
        grid = sample_noise(model.d, T, n_steps, seed, i)
        states = np.empty((n_steps + 1, dim))
        ex_p = run_path(model, zp, grid.increments, grid.dt, states)
        fp = f.fn(states[-1]) if ex_p < 0 else None
        ex_m = run_path(model, zm, grid.increments, grid.dt, states)
        fm = f.fn(states[-1]) if ex_m < 0 else None
        return fp, fm

    results = map_paths(worker, n_paths, threads)
    vals = []
    excluded = 0
    for fp, fm in results:
        if fp is None or fm is None:
            excluded += 1
            continue
        vals.append((fp - fm) / (2.0 * fd_h))
    if not vals:
        raise NumericalFailureError("all paths exploded")
    mean, stderr = _mean_stderr(np.array(vals))
    return GradientEstimate(xi, mean, stderr, len(vals), excluded, 0,
                            "finite_difference")


# ---------------------------------------------------------------------------
# gradient bound scan
# ---------------------------------------------------------------------------

@dataclass
class ScanReport:
    """|grad P_T f| / ||f||_inf over a family of bounded f and a grid of
    start points; the empirical max is the bound-constant estimate."""

    points: np.ndarray
    f_names: List[str]
    norms: np.ndarray          # (n_points, n_f), nan at flagged points
    stderrs: np.ndarray
    C_hat: float
    flagged_points: List[int]  # spanning failures, skipped not fatal
    T: float
    R: float


def gradient_bound_scan(model: ModelSpec, R: float, T: float,
                        f_family: Sequence[BoundedFunction], grid,
                        n_paths: int, seed: int, *, j0: int,
                        dt: float = 1e-3, lam_floor: float = 1e-10,
                        threads: int = 1) -> ScanReport:
    """Estimate the gradient norm at each grid point for each f.

    One weight pass per point serves every direction and every f (the
    weight is f-independent and linear in the direction).  Points where
    the rank condition fails at depth j0 are flagged and skipped.
    """
    pts = np.atleast_2d(np.asarray(grid, dtype=float))
    dim = model.dim
    hier = build_hierarchy(model, j0)
    norms = np.full((pts.shape[0], len(f_family)), np.nan)
    errs = np.full_like(norms, np.nan)
    flagged = []
    for ip, pt in enumerate(pts):
        if np.linalg.norm(pt) > R + 1e-12:
            raise ConfigError(f"grid point {pt.tolist()} outside the ball")
        rep = spanning_dimension(hier, pt)
        if not rep.spans:
            flagged.append(ip)
            continue
        results = _weight_paths(model, pt, T, n_paths, seed, dt,
                                lam_floor, None, threads)
        good = [(zT, delta) for zT, delta, st in results if st == 0]
        if len(good) < max(2, n_paths // 2):
            flagged.append(ip)
            continue
        zTs = np.array([g[0] for g in good])
        deltas = np.array([g[1] for g in good])
        nv = len(good)
        for jf, f in enumerate(f_family):
            fv = np.array([f.fn(z) for z in zTs])
            comps = deltas * fv[:, None]             # (nv, dim)
            gvec = comps.sum(axis=0) / nv
            norms[ip, jf] = float(np.linalg.norm(gvec) / f.sup_norm)
            var = comps.var(axis=0, ddof=1).sum() / nv
            errs[ip, jf] = float(math.sqrt(var) / f.sup_norm)
    C_hat = float(np.nanmax(norms)) if np.any(np.isfinite(norms)) \
        else float("nan")
    return ScanReport(points=pts, f_names=[f.name for f in f_family],
                      norms=norms, stderrs=errs, C_hat=C_hat,
                      flagged_points=flagged, T=T, R=R)


# ---------------------------------------------------------------------------
# compact-support truncation
# ---------------------------------------------------------------------------

def truncate_model(model: ModelSpec, l: float) -> ModelSpec:
    """Multiply drift and diffusion by a C^2 radial bump that is exactly 1
    on the ball of radius l and exactly 0 outside radius l+1, so the
    truncated coefficients agree bitwise with the originals inside and
    are globally bounded."""
    if l <= 0:
        raise ConfigError("truncation radius must be positive")
    m, n, d = model.m, model.n, model.d
    dim = model.dim
    a1i, a2i, bi, ja1i, ja2i, jbi = model._impls
    lv = float(l)

    @maybe_njit
    def _radius(x, y):
        r2 = 0.0
        for i in range(x.shape[0]):
            r2 += x[i] * x[i]
        for i in range(y.shape[0]):
            r2 += y[i] * y[i]
        return math.sqrt(r2)

    @maybe_njit
    def _bump(r):
        u = r - lv
        if u <= 0.0:
            return 1.0
        if u >= 1.0:
            return 0.0
        return 1.0 - u * u * u * (10.0 - 15.0 * u + 6.0 * u * u)

    @maybe_njit
    def _bump_slope(r):
        u = r - lv
        if u <= 0.0 or u >= 1.0:
            return 0.0
        w = u * (1.0 - u)
        return -30.0 * w * w

    @maybe_njit
    def a1t(x, y, out):
        a1i(x, y, out)
        w = _bump(_radius(x, y))
        if w != 1.0:
            for i in range(out.shape[0]):
                out[i] *= w

    @maybe_njit
    def a2t(x, y, out):
        a2i(x, y, out)
        w = _bump(_radius(x, y))
        if w != 1.0:
            for i in range(out.shape[0]):
                out[i] *= w

    @maybe_njit
    def bt(x, y, out):
        bi(x, y, out)
        w = _bump(_radius(x, y))
        if w != 1.0:
            for i in range(out.shape[0]):
                for j in range(out.shape[1]):
                    out[i, j] *= w

    @maybe_njit
    def _scale_jac(x, y, out, vals):
        # out <- bump * out + vals (x) grad(bump)
        r = _radius(x, y)
        w = _bump(r)
        dw = _bump_slope(r)
        if w == 1.0 and dw == 0.0:
            return
        for i in range(out.shape[0]):
            for q in range(out.shape[1]):
                out[i, q] *= w
        if dw != 0.0 and r > 0.0:
            for i in range(out.shape[0]):
                for q in range(out.shape[1]):
                    zq = x[q] if q < x.shape[0] else y[q - x.shape[0]]
                    out[i, q] += vals[i] * dw * zq / r

    @maybe_njit
    def ja1t(x, y, out):
        ja1i(x, y, out)
        vals = np.empty(out.shape[0])
        a1i(x, y, vals)
        _scale_jac(x, y, out, vals)

    @maybe_njit
    def ja2t(x, y, out):
        ja2i(x, y, out)
        vals = np.empty(out.shape[0])
        a2i(x, y, vals)
        _scale_jac(x, y, out, vals)

    @maybe_njit
    def jbt(x, y, out):
        jbi(x, y, out)
        r = _radius(x, y)
        w = _bump(r)
        dw = _bump_slope(r)
        if w == 1.0 and dw == 0.0:
            return
        vals = np.empty((out.shape[0], out.shape[1]))
        bi(x, y, vals)
        for i in range(out.shape[0]):
            for j in range(out.shape[1]):
                for q in range(out.shape[2]):
                    out[i, j, q] *= w
        if dw != 0.0 and r > 0.0:
            for i in range(out.shape[0]):
                for j in range(out.shape[1]):
                    for q in range(out.shape[2]):
                        zq = x[q] if q < x.shape[0] else y[q - x.shape[0]]
                        out[i, j, q] += vals[i, j] * dw * zq / r

    return ModelSpec.from_impls(
        m, n, d, (a1t, a2t, bt, ja1t, ja2t, jbt),
        name=f"{model.name}|trunc({l:g})", linear_drift=False)


# ---------------------------------------------------------------------------
# strong-Feller continuity probe
# ---------------------------------------------------------------------------

@dataclass
class FellerProbe:
    """Coupled-noise continuity table around a center point.

    ``diffs[r]`` estimates P_T f(x0 + r e) - P_T f(x0) with both points
    driven by identical increments; the localization error of the
    truncated comparison is bounded per path by ||f||_inf 1{exit before
    T}, which is what ``exit_freq`` measures.
    """

    center: np.ndarray
    direction: np.ndarray
    radii: np.ndarray
    f_name: str
    diffs: np.ndarray
    stderrs: np.ndarray
    monotone: bool
    intercept: float            # |diff| linearly extrapolated to r = 0
    intercept_stderr: float     # propagated error of the extrapolation
    p_center: float
    p_center_trunc: float
    truncation_gap: float
    truncation_gap_stderr: float
    exit_freq: float
    truncation_level: float
    used_truncated: bool        # probe ran on the truncated model
    explosion_rate: float
    n_paths: int


def feller_probe(model: ModelSpec, x0, T: float, f: BoundedFunction,
                 radii, l: float, n_paths: int, seed: int, *,
                 dt: float = 1e-3, direction=None,
                 threads: int = 1) -> FellerProbe:
    """Continuity-in-the-start-point probe with coupled noise.

    Runs the center point on the original and l-truncated models, then
    the shifted points on the original model (or the truncated one when
    the original explodes on more than 10% of paths, flagged).
    """
    radii = np.asarray(radii, dtype=float)
    if np.any(radii <= 0) or np.any(np.diff(radii) >= 0):
        raise ConfigError("radii must be positive and descending")
    x0 = np.asarray(x0, dtype=float)
    dim = model.dim
    if direction is None:
        direction = np.zeros(dim)
        direction[0] = 1.0
    e = _unit(direction, dim)
    n_steps = max(1, int(round(T / dt)))
    trunc = truncate_model(model, l)

    def endpoint(spec, start, i):
        grid = sample_noise(model.d, T, n_steps, seed, i)
        states = np.empty((n_steps + 1, dim))
        ex = run_path(spec, start, grid.increments, grid.dt, states)
        return states, ex

    # pass 1: center on both models, exit time of the truncated path
    def worker_center(i):
        states_o, ex_o = endpoint(model, x0, i)
        f_o = f.fn(states_o[-1]) if ex_o < 0 else None
        states_t, ex_t = endpoint(trunc, x0, i)
        f_t = f.fn(states_t[-1]) if ex_t < 0 else None
        norms = np.linalg.norm(states_t, axis=1)
        exited = bool((norms >= l).any())
        return f_o, f_t, exited

    center = map_paths(worker_center, n_paths, threads)
    f_orig = np.array([c[0] if c[0] is not None else np.nan
                       for c in center])
    f_tr = np.array([c[1] if c[1] is not None else np.nan for c in center])
    exits = np.array([c[2] for c in center])
    explosion_rate = float(np.isnan(f_orig).mean())
    exit_freq = float(exits.mean())

    use_trunc = explosion_rate > 0.10
    base_spec = trunc if use_trunc else model
    base_vals = f_tr if use_trunc else f_orig

    pair_ok = ~(np.isnan(f_orig) | np.isnan(f_tr))
    gap_samples = (f_orig - f_tr)[pair_ok]
    gap, gap_se = _mean_stderr(gap_samples) if gap_samples.size \
        else (float("nan"), float("nan"))

    diffs = np.empty(radii.size)
    errs = np.empty(radii.size)
    for ir, r in enumerate(radii):
        start = x0 + r * e

        def worker_r(i):
            states, ex = endpoint(base_spec, start, i)
            return f.fn(states[-1]) if ex < 0 else None

        shifted = map_paths(worker_r, n_paths, threads)
        fv = np.array([s if s is not None else np.nan for s in shifted])
        ok = ~(np.isnan(fv) | np.isnan(base_vals))
        dvals = (fv - base_vals)[ok]
        diffs[ir], errs[ir] = _mean_stderr(dvals)

    absd = np.abs(diffs)
    monotone = bool(np.all(np.diff(absd) <= 1e-15))
    if radii.size >= 2:
        # linear continuation to r = 0 through the two smallest radii
        r1, r0 = radii[-2], radii[-1]
        slope = (absd[-2] - absd[-1]) / (r1 - r0)
        w = r0 / (r1 - r0)
        intercept = float(absd[-1] - r0 * slope)
        intercept_stderr = float(math.hypot(
            (1.0 + w) * errs[-1], w * errs[-2]))
    else:
        intercept = float(absd[-1])
        intercept_stderr = float(errs[-1])

    def _safe_mean(vals):
        ok = vals[~np.isnan(vals)]
        return float(ok.mean()) if ok.size else float("nan")

    return FellerProbe(
        center=x0, direction=e, radii=radii, f_name=f.name,
        diffs=diffs, stderrs=errs, monotone=monotone, intercept=intercept,
        intercept_stderr=intercept_stderr,
        p_center=_safe_mean(f_orig),
        p_center_trunc=_safe_mean(f_tr),
        truncation_gap=abs(gap), truncation_gap_stderr=gap_se,
        exit_freq=exit_freq, truncation_level=float(l),
        used_truncated=use_trunc, explosion_rate=explosion_rate,
        n_paths=n_paths)
