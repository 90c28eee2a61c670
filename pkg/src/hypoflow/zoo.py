"""Built-in model catalogue.

Every entry carries analytic first derivatives (and the second derivative
of the slow drift where the rank hierarchy needs it), a set of declared,
machine-checkable facts consumed by the regression suite, and defaults
chosen so that desk-scale runs finish in seconds.

Entries:

* ``integrated_bm``     1+1 chain: dx = y dt, dy = dW.
* ``cascade``           3+1 linear cascade with one noisy channel; the
                        slow block needs three transport levels to fill.
* ``chain``             2+1 feed-forward chain (noisy coordinate drives
                        level two, level two drives level three).
* ``rank_deficient``    2+2 system with rank-one noise shared by both
                        noisy channels; its full covariance is singular
                        while the noisy marginal stays elliptic.
* ``langevin``          position/momentum pair with friction and a
                        confining potential.
* ``hamiltonian``       separable Hamiltonian pair with damping matrix.
* ``high_order``        companion embedding of an order-n scalar SDE.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .backend import maybe_njit
from .errors import ConfigError
from .models import ModelSpec

__all__ = [
    "ZooEntry", "integrated_bm", "cascade", "chain", "rank_deficient",
    "langevin", "hamiltonian", "high_order", "high_order_linear",
    "langevin_hypothesis_check", "hamiltonian_convexity_probe",
    "get_model", "zoo_names", "zoo_table",
    "HYPOTHESIS_OK_MODELS", "GRADIENT_AGREEMENT_MODELS",
]


@dataclass(frozen=True)
class ZooEntry:
    """A model together with its declared facts.

    ``expected`` holds machine-checkable claims (hierarchy depth, spanning
    rank, noise rank, whether the covariance is singular, whether the flow
    is deterministic) that the test suite verifies against the actual
    checkers.  ``citation`` records construction and default parameters.
    """

    spec: ModelSpec
    expected: dict
    citation: str
    default_x0: tuple = ()

    @property
    def name(self) -> str:
        return self.spec.name

    def x0(self) -> np.ndarray:
        if self.default_x0:
            return np.array(self.default_x0, dtype=float)
        return np.zeros(self.spec.dim)


def _zero_hess(m, dim):
    def hess(x, y):
        return np.zeros((m, dim, dim))
    return hess


# ---------------------------------------------------------------------------
# integrated Brownian motion
# ---------------------------------------------------------------------------

@functools.lru_cache(maxsize=None)
def _ibm_impls():
    @maybe_njit
    def a1(x, y, out):
        out[0] = y[0]

    @maybe_njit
    def a2(x, y, out):
        out[0] = 0.0

    @maybe_njit
    def b(x, y, out):
        out[0, 0] = 1.0

    @maybe_njit
    def ja1(x, y, out):
        out[0, 0] = 0.0
        out[0, 1] = 1.0

    @maybe_njit
    def ja2(x, y, out):
        out[0, 0] = 0.0
        out[0, 1] = 0.0

    @maybe_njit
    def jb(x, y, out):
        out[0, 0, 0] = 0.0
        out[0, 0, 1] = 0.0

    return (a1, a2, b, ja1, ja2, jb)


@functools.lru_cache(maxsize=None)
def integrated_bm() -> ZooEntry:
    """dx = y dt, dy = dW: the canonical degenerate pair with closed-form
    flow, covariance [[1/3, 1/2], [1/2, 1]] at T=1, and determinant 1/12."""
    spec = ModelSpec.from_impls(
        1, 1, 1, _ibm_impls(), hess_a1=_zero_hess(1, 2),
        name="integrated_bm", linear_drift=True)
    expected = {
        "j0": 1, "spans": True, "rank": 1,
        "noise_full_rank": True, "covariance_singular": False,
        "deterministic_flow": True, "hypothesis_ok": True,
        "globally_lipschitz": True,
        "flow_identity_first_order": True,
    }
    return ZooEntry(spec, expected,
                    "1+1 chain; defaults x0=0, dt=1e-3, T=1", (0.0, 0.0))


# ---------------------------------------------------------------------------
# 3+1 linear cascade
# ---------------------------------------------------------------------------

@functools.lru_cache(maxsize=None)
def _cascade_impls(a2_mode: str, a2_amp: float, diffusion: str,
                   b_const: float):
    @maybe_njit
    def a1(x, y, out):
        out[0] = x[1] + y[0]
        out[1] = x[0]
        out[2] = x[1] + x[2]

    if a2_mode == "sin":
        @maybe_njit
        def a2(x, y, out):
            out[0] = a2_amp * math.sin(x[0])

        @maybe_njit
        def ja2(x, y, out):
            out[0, 0] = a2_amp * math.cos(x[0])
            out[0, 1] = 0.0
            out[0, 2] = 0.0
            out[0, 3] = 0.0
    else:
        @maybe_njit
        def a2(x, y, out):
            out[0] = 0.0

        @maybe_njit
        def ja2(x, y, out):
            for q in range(4):
                out[0, q] = 0.0

    if diffusion == "sine":
        @maybe_njit
        def b(x, y, out):
            out[0, 0] = b_const * math.sin(y[0])

        @maybe_njit
        def jb(x, y, out):
            for q in range(4):
                out[0, 0, q] = 0.0
            out[0, 0, 3] = b_const * math.cos(y[0])
    else:
        @maybe_njit
        def b(x, y, out):
            out[0, 0] = b_const

        @maybe_njit
        def jb(x, y, out):
            for q in range(4):
                out[0, 0, q] = 0.0

    @maybe_njit
    def ja1(x, y, out):
        for i in range(3):
            for q in range(4):
                out[i, q] = 0.0
        out[0, 1] = 1.0
        out[0, 3] = 1.0
        out[1, 0] = 1.0
        out[2, 1] = 1.0
        out[2, 2] = 1.0

    return (a1, a2, b, ja1, ja2, jb)


@functools.lru_cache(maxsize=None)
def cascade(a2: str = "zero", a2_amp: float = 1.0,
            diffusion: str = "const", b: float = 1.0) -> ZooEntry:
    """Linear 3-dim slow block fed by one noisy channel.

    The slow drift couples x1 <- y, x2 <- x1, x3 <- (x2, x3), so the
    transport hierarchy needs depth 3 to span R^3.  ``a2="sin"`` switches
    the noisy drift to a bounded nonlinearity, which makes the flow (and
    hence the reduced covariance) genuinely random; the default a2=0
    keeps the whole flow deterministic.  ``diffusion="sine"`` replaces
    the constant noise by b(y) = b sin(y): elliptic at the default start
    y = pi/2 but vanishing on a lattice of valleys, so paths that linger
    near a valley produce the heavy small-eigenvalue tails the smallness
    analysis is about.
    """
    if a2 not in ("zero", "sin"):
        raise ConfigError("cascade a2 must be 'zero' or 'sin'")
    if diffusion not in ("const", "sine"):
        raise ConfigError("cascade diffusion must be 'const' or 'sine'")
    tags = ([] if a2 == "zero" else ["sin"]) \
        + ([] if diffusion == "const" else ["valley"])
    name = "cascade" + (f"[{','.join(tags)}]" if tags else "")
    spec = ModelSpec.from_impls(
        3, 1, 1, _cascade_impls(a2, a2_amp, diffusion, b),
        hess_a1=_zero_hess(3, 4), name=name, linear_drift=True)
    valley = diffusion == "sine"
    expected = {
        "j0": 3, "spans": True, "rank": 3,
        "noise_full_rank": True, "covariance_singular": False,
        "deterministic_flow": a2 == "zero" and not valley,
        "hypothesis_ok": True,       # pointwise, at the default start
        "uniformly_elliptic_noise": not valley,
        "flow_identity_first_order": not valley,
        "globally_lipschitz": True,
        "level_vectors": ((1.0, 0.0, 0.0), (0.0, -1.0, 0.0),
                          (1.0, 0.0, 1.0)),
    }
    x0 = (0.0, 0.0, 0.0, math.pi / 2) if valley else (0.0, 0.0, 0.0, 0.0)
    return ZooEntry(spec, expected,
                    f"3+1 linear cascade; a2={a2}, diffusion={diffusion}, "
                    f"b={b}, x0={'(0,0,0,pi/2)' if valley else '0'}", x0)


# ---------------------------------------------------------------------------
# 2+1 feed-forward chain
# ---------------------------------------------------------------------------

@functools.lru_cache(maxsize=None)
def _chain_impls(mid: str, sigma: float):
    # state = (u, v, w): w noisy, u driven by mid(w), v driven by u
    @maybe_njit
    def b(x, y, out):
        out[0, 0] = sigma

    @maybe_njit
    def a2(x, y, out):
        out[0] = 0.0

    @maybe_njit
    def ja2(x, y, out):
        for q in range(3):
            out[0, q] = 0.0

    @maybe_njit
    def jb(x, y, out):
        for q in range(3):
            out[0, 0, q] = 0.0

    if mid == "linear":
        @maybe_njit
        def a1(x, y, out):
            out[0] = y[0]
            out[1] = x[0]

        @maybe_njit
        def ja1(x, y, out):
            for i in range(2):
                for q in range(3):
                    out[i, q] = 0.0
            out[0, 2] = 1.0
            out[1, 0] = 1.0
    elif mid == "cubic":
        @maybe_njit
        def a1(x, y, out):
            out[0] = y[0] ** 3
            out[1] = x[0]

        @maybe_njit
        def ja1(x, y, out):
            for i in range(2):
                for q in range(3):
                    out[i, q] = 0.0
            out[0, 2] = 3.0 * y[0] ** 2
            out[1, 0] = 1.0
    else:  # "zero"
        @maybe_njit
        def a1(x, y, out):
            out[0] = 0.0
            out[1] = x[0]

        @maybe_njit
        def ja1(x, y, out):
            for i in range(2):
                for q in range(3):
                    out[i, q] = 0.0
            out[1, 0] = 1.0

    return (a1, a2, b, ja1, ja2, jb)


@functools.lru_cache(maxsize=None)
def chain(mid: str = "linear", sigma: float = 1.0) -> ZooEntry:
    """Feed-forward chain: noise -> level two -> level three.

    ``mid`` selects the coupling from the noisy coordinate into level two:
    'linear' (identity), 'cubic' (spans away from the origin only), or
    'zero' (never spans).  Level three is always driven linearly by level
    two, so the chain spans exactly when the mid coupling has a nonzero
    derivative at the point.
    """
    if mid not in ("linear", "cubic", "zero"):
        raise ConfigError("chain mid must be 'linear', 'cubic' or 'zero'")
    name = "chain" if mid == "linear" else f"chain[{mid}]"

    if mid == "cubic":
        def hess(x, y):
            h = np.zeros((2, 3, 3))
            h[0, 2, 2] = 6.0 * y[0]
            return h
        linear = False
    else:
        hess = _zero_hess(2, 3)
        linear = True

    spec = ModelSpec.from_impls(
        2, 1, 1, _chain_impls(mid, sigma), hess_a1=hess, name=name,
        linear_drift=linear)
    expected = {
        "j0": 2, "spans": mid == "linear", "rank": 2 if mid == "linear" else 0,
        "noise_full_rank": True, "covariance_singular": mid == "zero",
        "deterministic_flow": mid != "cubic", "hypothesis_ok": mid == "linear",
        "globally_lipschitz": mid != "cubic",
        "flow_identity_first_order": True,
    }
    return ZooEntry(spec, expected,
                    f"2+1 feed-forward chain; mid={mid}, sigma={sigma}",
                    (0.0, 0.0, 0.0))


# ---------------------------------------------------------------------------
# 2+2 rank-deficient noise
# ---------------------------------------------------------------------------

@functools.lru_cache(maxsize=None)
def _rank_deficient_impls():
    @maybe_njit
    def a1(x, y, out):
        out[0] = y[0]
        out[1] = y[1]

    @maybe_njit
    def a2(x, y, out):
        out[0] = y[0] + y[1]
        out[1] = y[1]

    @maybe_njit
    def b(x, y, out):
        out[0, 0] = 1.0
        out[1, 0] = 1.0

    @maybe_njit
    def ja1(x, y, out):
        for i in range(2):
            for q in range(4):
                out[i, q] = 0.0
        out[0, 2] = 1.0
        out[1, 3] = 1.0

    @maybe_njit
    def ja2(x, y, out):
        for i in range(2):
            for q in range(4):
                out[i, q] = 0.0
        out[0, 2] = 1.0
        out[0, 3] = 1.0
        out[1, 3] = 1.0

    @maybe_njit
    def jb(x, y, out):
        for i in range(2):
            for q in range(4):
                out[i, 0, q] = 0.0

    return (a1, a2, b, ja1, ja2, jb)


@functools.lru_cache(maxsize=None)
def rank_deficient() -> ZooEntry:
    """Two noisy channels share a single Brownian motion.

    b b^T = [[1, 1], [1, 1]] is singular, and the combination
    x1 - y1 + y2 is conserved along every path, so the full 4x4 covariance
    is singular almost surely even though the 2x2 noisy marginal is
    uniformly elliptic in the span sense (its own covariance is
    invertible).  Negative control for every nondegeneracy probe.
    """
    spec = ModelSpec.from_impls(
        2, 2, 1, _rank_deficient_impls(), hess_a1=_zero_hess(2, 4),
        name="rank_deficient", linear_drift=True)
    expected = {
        "j0": 1, "spans": True, "rank": 2,
        "noise_full_rank": False, "covariance_singular": True,
        "deterministic_flow": True, "hypothesis_ok": False,
        "globally_lipschitz": True,
        "flow_identity_first_order": True,
        "conserved_direction": (1.0, 0.0, -1.0, 1.0),
        "noisy_marginal_lambda_min": 0.0581,
    }
    return ZooEntry(spec, expected,
                    "2+2 with rank-one shared noise; x0=0",
                    (0.0, 0.0, 0.0, 0.0))


# ---------------------------------------------------------------------------
# Langevin position/momentum pair
# ---------------------------------------------------------------------------

@functools.lru_cache(maxsize=None)
def _langevin_impls(gamma: float, d: int, potential: str, sigma: float):
    quartic = potential == "quartic"

    @maybe_njit
    def a1(x, y, out):
        for i in range(d):
            out[i] = y[i]

    @maybe_njit
    def a2(x, y, out):
        for i in range(d):
            if quartic:
                r2 = 0.0
                for p in range(d):
                    r2 += x[p] * x[p]
                out[i] = -gamma * y[i] - r2 * x[i]
            else:
                out[i] = -gamma * y[i] - x[i]

    @maybe_njit
    def b(x, y, out):
        for i in range(d):
            for j in range(d):
                out[i, j] = sigma if i == j else 0.0

    @maybe_njit
    def ja1(x, y, out):
        for i in range(d):
            for q in range(2 * d):
                out[i, q] = 0.0
            out[i, d + i] = 1.0

    @maybe_njit
    def ja2(x, y, out):
        for i in range(d):
            for q in range(2 * d):
                out[i, q] = 0.0
        if quartic:
            r2 = 0.0
            for p in range(d):
                r2 += x[p] * x[p]
            for i in range(d):
                for p in range(d):
                    out[i, p] = -2.0 * x[p] * x[i]
                out[i, i] -= r2
                out[i, d + i] = -gamma
        else:
            for i in range(d):
                out[i, i] = -1.0
                out[i, d + i] = -gamma

    @maybe_njit
    def jb(x, y, out):
        for i in range(d):
            for j in range(d):
                for q in range(2 * d):
                    out[i, j, q] = 0.0

    return (a1, a2, b, ja1, ja2, jb)


@functools.lru_cache(maxsize=None)
def langevin(gamma: float = 1.0, d: int = 1, potential: str = "quadratic",
             sigma: float = 1.0) -> ZooEntry:
    """dq = p dt, dp = (-gamma p - grad V(q)) dt + sigma dW.

    The slow drift is just p, so one derivative level already spans R^d.
    ``potential`` is 'quadratic' (V = |q|^2/2) or 'quartic'
    (V = |q|^4/4, drift with cubic growth).
    """
    if potential not in ("quadratic", "quartic"):
        raise ConfigError("langevin potential must be quadratic or quartic")
    name = f"langevin" if (gamma, d, potential, sigma) == (1.0, 1, "quadratic", 1.0) \
        else f"langevin[{potential},g={gamma},d={d}]"
    spec = ModelSpec.from_impls(
        d, d, d, _langevin_impls(gamma, d, potential, sigma),
        hess_a1=_zero_hess(d, 2 * d), name=name, linear_drift=True)
    expected = {
        "j0": 1, "spans": True, "rank": d,
        "noise_full_rank": sigma != 0.0, "covariance_singular": False,
        "deterministic_flow": potential == "quadratic",
        "hypothesis_ok": potential == "quadratic",
        "globally_lipschitz": potential == "quadratic",
        "flow_identity_first_order": True,
    }
    x0 = (1.0,) + (0.0,) * (2 * d - 1)
    return ZooEntry(spec, expected,
                    f"position/momentum pair; gamma={gamma}, d={d}, "
                    f"V={potential}, sigma={sigma}", x0)


def langevin_hypothesis_check(F: Callable, grad_F: Callable, gamma: float,
                              grid, beta_grid=None, alpha_max: float = 1e6):
    """Search (beta, alpha) for the confinement inequality

        <grad F(q), q>/2 >= beta F(q)
                            + gamma^2 beta(2-beta)/(8(1-beta)) |q|^2 - alpha

    on the sample grid, with F >= 0 checked first.  Returns a dict with
    either the first feasible pair (smallest beta, smallest alpha >= 0)
    or the worst violating point.
    """
    pts = np.atleast_2d(np.asarray(grid, dtype=float))
    if pts.shape[0] == 1 and pts.shape[1] > 1 and pts.ndim == 2:
        pts = pts.T if pts.shape[0] == 1 else pts
    if beta_grid is None:
        beta_grid = np.round(np.arange(0.1, 1.0, 0.1), 10)

    fvals = np.array([float(F(q)) for q in pts])
    if np.any(fvals < 0):
        worst = int(np.argmin(fvals))
        return {"feasible": False, "reason": "F takes negative values",
                "witness": pts[worst].tolist(),
                "F_at_witness": float(fvals[worst])}

    lhs = np.array([0.5 * float(np.dot(grad_F(q), q)) for q in pts])
    norms2 = np.array([float(np.dot(q, q)) for q in pts])

    best = None
    worst_gap = -np.inf
    worst_pt = None
    for beta in beta_grid:
        coeff = gamma ** 2 * beta * (2.0 - beta) / (8.0 * (1.0 - beta))
        required = beta * fvals + coeff * norms2 - lhs
        alpha_needed = max(0.0, float(required.max()))
        if alpha_needed <= alpha_max:
            best = {"beta": float(beta), "alpha": alpha_needed}
            break
        gap = float(required.max())
        if gap > worst_gap:
            worst_gap = gap
            worst_pt = pts[int(np.argmax(required))].tolist()
    if best is None:
        return {"feasible": False, "reason": "no (beta, alpha) within range",
                "witness": worst_pt, "worst_gap": worst_gap}
    return {"feasible": True, **best, "n_grid": int(pts.shape[0])}


# ---------------------------------------------------------------------------
# separable Hamiltonian pair
# ---------------------------------------------------------------------------

@functools.lru_cache(maxsize=None)
def _hamiltonian_impls(gamma: float, d: int, potential: str):
    quartic = potential == "quartic"

    @maybe_njit
    def a1(x, y, out):
        for i in range(d):
            out[i] = y[i]

    @maybe_njit
    def a2(x, y, out):
        for i in range(d):
            if quartic:
                r2 = 0.0
                for p in range(d):
                    r2 += x[p] * x[p]
                out[i] = -r2 * x[i] - gamma * y[i]
            else:
                out[i] = -x[i] - gamma * y[i]

    @maybe_njit
    def b(x, y, out):
        for i in range(d):
            for j in range(d):
                out[i, j] = 1.0 if i == j else 0.0

    @maybe_njit
    def ja1(x, y, out):
        for i in range(d):
            for q in range(2 * d):
                out[i, q] = 0.0
            out[i, d + i] = 1.0

    @maybe_njit
    def ja2(x, y, out):
        for i in range(d):
            for q in range(2 * d):
                out[i, q] = 0.0
        if quartic:
            r2 = 0.0
            for p in range(d):
                r2 += x[p] * x[p]
            for i in range(d):
                for p in range(d):
                    out[i, p] = -2.0 * x[p] * x[i]
                out[i, i] -= r2
                out[i, d + i] = -gamma
        else:
            for i in range(d):
                out[i, i] = -1.0
                out[i, d + i] = -gamma

    @maybe_njit
    def jb(x, y, out):
        for i in range(d):
            for j in range(d):
                for q in range(2 * d):
                    out[i, j, q] = 0.0

    return (a1, a2, b, ja1, ja2, jb)


@functools.lru_cache(maxsize=None)
def hamiltonian(potential: str = "quadratic", gamma: float = 1.0,
                d: int = 1) -> ZooEntry:
    """Separable energy H(x, y) = V(x) + |y|^2/2 with damping gamma I:

        dX = dH/dy dt,   dY = -(dH/dx + gamma dH/dy) dt + dW.

    With the quadratic V this coincides step for step with the default
    Langevin entry; the quartic V has cubic drift growth and is the stock
    example for the compact-support truncation machinery.
    """
    if potential not in ("quadratic", "quartic"):
        raise ConfigError("hamiltonian potential must be quadratic or quartic")
    name = "hamiltonian" if potential == "quadratic" \
        else f"hamiltonian[{potential}]"
    spec = ModelSpec.from_impls(
        d, d, d, _hamiltonian_impls(gamma, d, potential),
        hess_a1=_zero_hess(d, 2 * d), name=name, linear_drift=True)
    expected = {
        "j0": 1, "spans": True, "rank": d,
        "noise_full_rank": True,
        "covariance_singular": False,
        "deterministic_flow": potential == "quadratic",
        "hypothesis_ok": potential == "quadratic",
        "globally_lipschitz": potential == "quadratic",
        "flow_identity_first_order": True,
        "momentum_convexity": 1.0,
    }
    x0 = (1.0,) + (0.0,) * (2 * d - 1)
    return ZooEntry(spec, expected,
                    f"separable Hamiltonian pair; V={potential}, "
                    f"gamma={gamma}, d={d}", x0)


def hamiltonian_convexity_probe(hess_yy: Callable, grid) -> float:
    """Smallest eigenvalue of the momentum Hessian of H over the grid; the
    uniform-convexity modulus required for depth-1 spanning."""
    pts = np.atleast_2d(np.asarray(grid, dtype=float))
    nu = np.inf
    for z in pts:
        H = np.atleast_2d(np.asarray(hess_yy(z), dtype=float))
        nu = min(nu, float(np.linalg.eigvalsh(H)[0]))
    return nu


# ---------------------------------------------------------------------------
# order-n companion embedding
# ---------------------------------------------------------------------------

@functools.lru_cache(maxsize=None)
def _high_order_impls(order: int, m: int, coeffs: tuple, c: float,
                      b_const: float):
    mx = m * (order - 1)
    dim = mx + m
    nlev = order

    @maybe_njit
    def a1(x, y, out):
        for i in range(mx - m):
            out[i] = x[i + m]
        for i in range(m):
            out[mx - m + i] = y[i]

    @maybe_njit
    def ja1(x, y, out):
        for i in range(mx):
            for q in range(dim):
                out[i, q] = 0.0
        for i in range(mx):
            out[i, m + i] = 1.0

    @maybe_njit
    def a2(x, y, out):
        for i in range(m):
            acc = -c
            for k in range(nlev - 1):
                acc -= coeffs[k] * x[k * m + i]
            acc -= coeffs[nlev - 1] * y[i]
            out[i] = acc

    @maybe_njit
    def ja2(x, y, out):
        for i in range(m):
            for q in range(dim):
                out[i, q] = 0.0
            for k in range(nlev):
                out[i, k * m + i] = -coeffs[k]

    @maybe_njit
    def b(x, y, out):
        for i in range(m):
            for j in range(m):
                out[i, j] = -b_const if i == j else 0.0

    @maybe_njit
    def jb(x, y, out):
        for i in range(m):
            for j in range(m):
                for q in range(dim):
                    out[i, j, q] = 0.0

    return (a1, a2, b, ja1, ja2, jb)


@functools.lru_cache(maxsize=None)
def high_order_linear(coeffs: tuple = (1.0, 1.0, 1.0), c: float = 0.0,
                      b: float = 1.0, m: int = 1) -> ZooEntry:
    """Companion form of the order-n scalar equation

        u^(n) + coeffs[n-1] u^(n-1) + ... + coeffs[0] u + c + b dW/dt = 0

    stacked as blocks (u, u', ..., u^(n-1)); the top n-1 blocks are the
    slow coordinates, the highest derivative carries the noise.  The
    transport hierarchy walks the companion shift one block per level, so
    depth n-1 spans the slow space.
    """
    order = len(coeffs)
    if order < 2:
        raise ConfigError("high_order needs order >= 2")
    mx = m * (order - 1)
    spec = ModelSpec.from_impls(
        mx, m, m, _high_order_impls(order, m, tuple(coeffs), c, b),
        hess_a1=_zero_hess(mx, mx + m),
        name=f"high_order(n={order},m={m})", linear_drift=True)
    expected = {
        "j0": order - 1, "spans": True, "rank": mx,
        "noise_full_rank": b != 0.0, "covariance_singular": False,
        "deterministic_flow": True, "hypothesis_ok": True,
        "globally_lipschitz": True,
        "flow_identity_first_order": True,
    }
    return ZooEntry(spec, expected,
                    f"order-{order} companion embedding; coeffs={coeffs}, "
                    f"c={c}, b={b}", (0.0,) * (mx + m))


def high_order(order: int = 3, m: int = 1, coeffs=None, c: float = 0.0,
               b: float = 1.0) -> ZooEntry:
    """Order-n companion entry; ``coeffs=None`` gives the zero drift on
    the top derivative (order 2 with b=1 is then exactly integrated
    Brownian motion up to state naming)."""
    if coeffs is None:
        coeffs = (0.0,) * order
    if len(coeffs) != order:
        raise ConfigError(f"need {order} coefficients, got {len(coeffs)}")
    return high_order_linear(tuple(float(v) for v in coeffs), c, b, m)


# ---------------------------------------------------------------------------
# registry
# ---------------------------------------------------------------------------

_REGISTRY = {
    "integrated_bm": integrated_bm,
    "cascade": cascade,
    "cascade_sin": lambda: cascade(a2="sin"),
    "cascade_valley": lambda: cascade(diffusion="sine", b=0.9),
    "chain": chain,
    "chain_cubic": lambda: chain(mid="cubic"),
    "rank_deficient": rank_deficient,
    "langevin": langevin,
    "hamiltonian": hamiltonian,
    "hamiltonian_quartic": lambda: hamiltonian(potential="quartic"),
    "high_order": lambda: high_order_linear(),
}

# entries satisfying every structural assumption of the main estimates
HYPOTHESIS_OK_MODELS = (
    "integrated_bm", "cascade", "cascade_sin", "chain", "langevin",
    "hamiltonian", "high_order",
)

# models on which the two gradient estimators are cross-checked
GRADIENT_AGREEMENT_MODELS = (
    "integrated_bm", "cascade", "chain", "langevin", "hamiltonian",
    "high_order",
)


def zoo_names():
    return list(_REGISTRY)


def get_model(name: str) -> ZooEntry:
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise ConfigError(
            f"unknown model '{name}'; available: {', '.join(_REGISTRY)}")
    return factory()


def zoo_table():
    """Rows (name, citation, expected facts) for the CLI listing."""
    rows = []
    for name in _REGISTRY:
        entry = get_model(name)
        rows.append({"name": name, "citation": entry.citation,
                     "expected": entry.expected})
    return rows
