"""Drift-derivative vector-field hierarchy and quantitative rank checks.

The hierarchy replaces classical bracket generation for the partitioned
system: level one holds the derivatives of the slow drift a1 along each
noisy coordinate, and level l is produced from level l-1 by either
differentiating along a noisy coordinate or applying the drift transport
k -> -(grad_x a1) k + (grad_x k) a1.  Spanning of the slow space R^m by
the union of levels at a point is the nondegeneracy condition every
downstream probe relies on.

Derivative bookkeeping: each field tracks how many nested
finite-difference layers its value closure contains.  Analytic first and
second derivatives of a1 keep levels one and two exact; deeper levels
either stay exact (constant fields of a drift with constant Jacobian) or
spend one finite-difference layer per level, with a hard cap of two
layers before the builder refuses and asks for analytic callbacks.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np
from scipy.special import ndtri
from scipy.stats import qmc

from .errors import ConfigError, HypothesisViolationError, \
    NumericalFailureError
from .models import ModelSpec, PathBundle, fd_jacobian

__all__ = [
    "HField", "Hierarchy", "build_hierarchy",
    "SpanningReport", "spanning_dimension",
    "LocalConstants", "local_constants",
    "EllipticityReport", "ellipticity_along_path",
    "ball_points",
]

_FD_LAYER_CAP = 2


@dataclass
class HField:
    """One field of the hierarchy: a function R^(m+n) -> R^m plus optional
    analytic first/second derivatives and provenance."""

    m: int
    dim: int
    value_fn: Callable
    provenance: str
    value_fd: int = 0
    jac_fn: Optional[Callable] = None
    jac_fd: int = 0
    hess_fn: Optional[Callable] = None
    hess_fd: int = 0
    constant: bool = False

    def value(self, z) -> np.ndarray:
        return np.asarray(self.value_fn(np.asarray(z, float)), dtype=float)

    def jac_closure(self):
        """Analytic Jacobian when available, else a central-difference
        wrapper around the value closure; returns (fn, fd_layers)."""
        if self.jac_fn is not None:
            return self.jac_fn, self.jac_fd
        layers = self.value_fd + 1
        if layers > _FD_LAYER_CAP:
            raise ConfigError(
                f"field {self.provenance} would need {layers} nested "
                "finite-difference layers; supply analytic jacobian and "
                "second-derivative callbacks for hierarchy depth >= 3")
        vf = self.value_fn
        m, dim = self.m, self.dim

        def jac(z):
            return fd_jacobian(vf, np.asarray(z, float), (m,))

        return jac, layers


@dataclass
class Hierarchy:
    """Levels of fields up to depth j0, all evaluable at any point."""

    j0: int
    m: int
    n: int
    levels: List[List[HField]]
    uses_fd: bool

    def all_fields(self) -> List[HField]:
        return [f for level in self.levels for f in level]


def _zero_field(m, dim, provenance):
    def value(z):
        return np.zeros(m)

    def jac(z):
        return np.zeros((m, dim))

    def hess(z):
        return np.zeros((m, dim, dim))

    return HField(m, dim, value, provenance, 0, jac, 0, hess, 0,
                  constant=True)


def _level_one(model: ModelSpec, j: int) -> HField:
    m, dim = model.m, model.dim
    col = m + j
    jac_a1 = model.jac_a1

    def value(z):
        return np.asarray(jac_a1(z[:m], z[m:]), float)[:, col]

    value_fd = 1 if model.uses_fd_jacobians else 0

    jac_fn = None
    if model.hess_a1 is not None:
        hess_a1 = model.hess_a1

        def jac_fn(z):
            return np.asarray(hess_a1(z[:m], z[m:]), float)[:, col, :]

    hess_fn = None
    if model.linear_drift:
        def hess_fn(z):
            return np.zeros((m, dim, dim))

    return HField(m, dim, value, f"dy{j + 1}(a1)", value_fd,
                  jac_fn, value_fd, hess_fn, 0,
                  constant=model.linear_drift)


def _derivative_child(model: ModelSpec, K: HField, j: int) -> HField:
    m, dim = K.m, K.dim
    col = m + j
    prov = f"dy{j + 1}({K.provenance})"
    if K.constant:
        return _zero_field(m, dim, prov)
    kj, kj_fd = K.jac_closure()

    def value(z):
        return np.asarray(kj(z), float)[:, col]

    jac_fn = None
    jac_fd = 0
    if K.hess_fn is not None:
        kh = K.hess_fn

        def jac_fn(z):
            return np.asarray(kh(z), float)[:, col, :]

        jac_fd = K.hess_fd
    return HField(m, dim, value, prov, kj_fd, jac_fn, jac_fd)


def _transport_child(model: ModelSpec, K: HField) -> HField:
    m, dim = K.m, K.dim
    prov = f"transport({K.provenance})"
    kj, kj_fd = K.jac_closure()
    kv = K.value_fn
    jac_a1, a1 = model.jac_a1, model.a1

    def value(z):
        x, y = z[:m], z[m:]
        Ja1 = np.asarray(jac_a1(x, y), float)
        return (-Ja1[:, :m] @ np.asarray(kv(z), float)
                + np.asarray(kj(z), float)[:, :m] @ np.asarray(a1(x, y),
                                                               float))

    value_fd = max(K.value_fd, kj_fd)
    if model.uses_fd_jacobians:
        value_fd = max(value_fd, 1)

    constant = model.linear_drift and K.constant

    jac_fn = None
    jac_fd = 0
    if constant:
        def jac_fn(z):
            return np.zeros((m, dim))
    elif model.hess_a1 is not None and K.jac_fn is not None \
            and K.hess_fn is not None:
        hess_a1 = model.hess_a1
        kjac, khess = K.jac_fn, K.hess_fn

        def jac_fn(z):
            x, y = z[:m], z[m:]
            Ja1 = np.asarray(jac_a1(x, y), float)
            Ha1 = np.asarray(hess_a1(x, y), float)
            a1v = np.asarray(a1(x, y), float)
            Kv = np.asarray(kv(z), float)
            Kj = np.asarray(kjac(z), float)
            Kh = np.asarray(khess(z), float)
            out = -np.einsum("ipq,p->iq", Ha1[:, :m, :], Kv)
            out -= Ja1[:, :m] @ Kj
            out += np.einsum("ipq,p->iq", Kh[:, :m, :], a1v)
            out += Kj[:, :m] @ Ja1
            return out

        jac_fd = max(K.jac_fd, K.hess_fd)

    hess_fn = None
    if constant:
        def hess_fn(z):
            return np.zeros((m, dim, dim))

    return HField(m, dim, value, prov, value_fd, jac_fn, jac_fd,
                  hess_fn, 0, constant=constant)


def build_hierarchy(model: ModelSpec, j0: int, dedup: bool = False) \
        -> Hierarchy:
    """Construct levels 1..j0.

    Level l has (n+1) times the entries of level l-1 (derivative children
    along each noisy coordinate, then the transport child); duplicates are
    kept unless ``dedup`` is set, in which case exactly-equal constant
    fields within a level are dropped.
    """
    if j0 < 1:
        raise ConfigError("hierarchy depth j0 must be >= 1")
    n = model.n
    levels = [[_level_one(model, j) for j in range(n)]]
    for _ in range(2, j0 + 1):
        new = []
        for K in levels[-1]:
            for j in range(n):
                new.append(_derivative_child(model, K, j))
            new.append(_transport_child(model, K))
        if dedup:
            kept = []
            seen = []
            origin = np.zeros(model.dim)
            for f in new:
                if f.constant:
                    v = f.value(origin)
                    if any(np.array_equal(v, s) for s in seen):
                        continue
                    seen.append(v)
                kept.append(f)
            new = kept
        levels.append(new)
    uses_fd = model.uses_fd_jacobians or any(
        f.value_fd > 0 for level in levels for f in level)
    return Hierarchy(j0=j0, m=model.m, n=n, levels=levels, uses_fd=uses_fd)


@dataclass
class SpanningReport:
    """Numerical rank of the stacked field evaluations at one point."""

    point: np.ndarray
    matrix: np.ndarray            # (m, n_fields), fields as columns
    singular_values: np.ndarray   # descending
    numerical_rank: int
    spans: bool
    modulus: float                # smallest eigenvalue of sum V V^T
    tol: float
    uses_fd: bool


def spanning_dimension(hierarchy: Hierarchy, point, tol: float = 1e-8) \
        -> SpanningReport:
    """Evaluate every field at ``point`` and report the numerical rank at
    relative SVD tolerance ``tol`` plus the spanning modulus (smallest
    eigenvalue of the Gram matrix of the family)."""
    if tol <= 0:
        raise ConfigError("tol must be positive")
    z = np.asarray(point, dtype=float)
    cols = []
    for f in hierarchy.all_fields():
        v = f.value(z)
        if not np.all(np.isfinite(v)):
            raise NumericalFailureError(
                f"field {f.provenance} evaluated to non-finite values "
                f"at {z.tolist()}")
        cols.append(v)
    stacked = np.column_stack(cols)
    sv = np.linalg.svd(stacked, compute_uv=False)
    smax = sv[0] if sv.size else 0.0
    rank = int(np.sum(sv > tol * smax)) if smax > 0 else 0
    gram = stacked @ stacked.T
    modulus = float(np.linalg.eigvalsh(gram)[0])
    return SpanningReport(
        point=z, matrix=stacked, singular_values=sv,
        numerical_rank=rank, spans=(rank == hierarchy.m),
        modulus=modulus, tol=tol, uses_fd=hierarchy.uses_fd)


def ball_points(dim: int, radius: float, count: int, center=None) \
        -> np.ndarray:
    """Deterministic low-discrepancy sample of the closed ball: Halton
    points mapped through normal scores for direction and a radial
    power transform for uniformity in volume."""
    sampler = qmc.Halton(d=dim + 1, scramble=False, seed=0)
    u = sampler.random(count + 1)[1:]  # first Halton point is all zeros
    g = ndtri(np.clip(u[:, :dim], 1e-12, 1 - 1e-12))
    norms = np.linalg.norm(g, axis=1)
    norms[norms == 0.0] = 1.0
    dirs = g / norms[:, None]
    radii = radius * u[:, dim] ** (1.0 / dim)
    pts = dirs * radii[:, None]
    if center is not None:
        pts = pts + np.asarray(center, float)
    return pts


@dataclass
class LocalConstants:
    """Quantitative nondegeneracy constants over the centered ball of
    radius R, from deterministic sampling (a lower-confidence surrogate
    for the true infima; the sample count is part of the record)."""

    R: float
    c: float        # half the sampled infimum of the spanning modulus
    R1: float       # enlargement radius keeping the modulus above c
    R3: float       # half the sampled infimum of lambda_min(b b^T)
    C0: float       # 1 / R3
    n_samples: int
    modulus_inf: float
    noise_inf: float


def _modulus_at(hierarchy, z):
    cols = [f.value(z) for f in hierarchy.all_fields()]
    stacked = np.column_stack(cols)
    return float(np.linalg.eigvalsh(stacked @ stacked.T)[0])


def _noise_floor_at(model, z):
    x, y = model.split(z)
    bv = np.asarray(model.b(x, y), float)
    return float(np.linalg.eigvalsh(bv @ bv.T)[0])


def _sampled_inf(fn, pts):
    vals = np.array([fn(z) for z in pts])
    i = int(np.argmin(vals))
    return float(vals[i]), pts[i]


def local_constants(model: ModelSpec, hierarchy: Hierarchy, R: float,
                    sampling: int = 512) -> LocalConstants:
    """Sample the centered ball of radius R for the spanning modulus and
    the noise floor, and search the enlargement radius by doubling.

    Raises a hypothesis violation naming the witness point whenever a
    sampled infimum is not strictly positive.
    """
    if R <= 0:
        raise ConfigError("R must be positive")
    dim = model.dim
    pts = np.vstack([np.zeros(dim), ball_points(dim, R, sampling)])

    mod_inf, mod_witness = _sampled_inf(
        lambda z: _modulus_at(hierarchy, z), pts)
    if mod_inf <= 1e-10 * max(1.0, abs(mod_inf)):
        raise HypothesisViolationError(
            f"spanning modulus is not positive on the ball "
            f"(sampled infimum {mod_inf:.3e} at {mod_witness.tolist()})",
            witness=mod_witness)
    c = 0.5 * mod_inf

    noise_inf, noise_witness = _sampled_inf(
        lambda z: _noise_floor_at(model, z), pts)
    if noise_inf <= 1e-10 * max(1.0, abs(noise_inf)):
        raise HypothesisViolationError(
            f"lambda_min(b b^T) is not positive on the ball "
            f"(sampled infimum {noise_inf:.3e} at "
            f"{noise_witness.tolist()})", witness=noise_witness)
    R3 = 0.5 * noise_inf

    def enlarged_ok(r1):
        big = np.vstack([np.zeros(dim), ball_points(dim, R + r1, sampling)])
        inf_big, _ = _sampled_inf(lambda z: _modulus_at(hierarchy, z), big)
        return inf_big > c

    R1 = R / 64.0
    if not enlarged_ok(R1):
        while R1 > R * 2.0 ** -20 and not enlarged_ok(R1):
            R1 /= 2.0
        if not enlarged_ok(R1):
            raise HypothesisViolationError(
                "no enlargement radius keeps the spanning modulus above "
                "half its ball infimum; hierarchy degenerates just outside "
                f"radius {R}")
    else:
        while R1 < 4.0 * R and enlarged_ok(2.0 * R1):
            R1 *= 2.0

    return LocalConstants(R=float(R), c=c, R1=float(R1), R3=R3,
                          C0=1.0 / R3, n_samples=int(pts.shape[0]),
                          modulus_inf=mod_inf, noise_inf=noise_inf)


@dataclass
class EllipticityReport:
    """Smallest eigenvalue of b b^T along a path and the first step of
    material change (the discrete analogue of the noise-stability
    stopping time, with threshold half the initial value)."""

    lams: np.ndarray
    tau_prime_step: Optional[int]
    threshold: float
    hypothesis_ok: bool


def ellipticity_along_path(model: ModelSpec, path: PathBundle) \
        -> EllipticityReport:
    states = path.states
    stop = path.exploded_step if path.exploded else states.shape[0]
    lams = np.full(states.shape[0], np.nan)
    for k in range(stop):
        lams[k] = _noise_floor_at(model, states[k])
    lam0 = lams[0]
    lam_scale = max(1.0, abs(lam0))
    ok = lam0 > 1e-10 * lam_scale
    threshold = 0.5 * lam0
    tau = None
    if ok:
        hits = np.nonzero(np.abs(lams[:stop] - lam0) >= threshold)[0]
        tau = int(hits[0]) if hits.size else None
    return EllipticityReport(lams=lams, tau_prime_step=tau,
                             threshold=threshold, hypothesis_ok=ok)
