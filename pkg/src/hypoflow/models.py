"""Partitioned SDE model definitions, reproducible noise, and path integration.

A model is the pair of drifts and the diffusion of the system

    dx = a1(x, y) dt                      x in R^m   (no noise)
    dy = a2(x, y) dt + b(x, y) dW         y in R^n,  W in R^d

Coefficient callbacks use the return convention ``a1(x, y) -> (m,)``,
``a2 -> (n,)``, ``b -> (n, d)``.  Jacobians are taken with respect to the
stacked point z = (x, y): ``jac_a1 -> (m, m+n)``, ``jac_a2 -> (n, m+n)``,
``jac_b -> (n, d, m+n)``, ``hess_a1 -> (m, m+n, m+n)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .backend import NUMBA_ENABLED, force_python_active, is_dispatcher
from .errors import ConfigError

__all__ = [
    "ModelSpec",
    "NoiseGrid",
    "PathBundle",
    "sample_noise",
    "integrate_path",
    "fd_jacobian",
]

_FD_STEP = np.finfo(float).eps ** (1.0 / 3.0)
_MASK64 = (1 << 64) - 1


def fd_jacobian(fn, z, out_shape):
    """Central-difference Jacobian of ``fn`` (a function of the stacked
    point z) with step h = eps**(1/3) * max(1, |coordinate|)."""
    dim = z.shape[0]
    jac = np.empty(out_shape + (dim,))
    for c in range(dim):
        h = _FD_STEP * max(1.0, abs(z[c]))
        zp = z.copy()
        zm = z.copy()
        zp[c] += h
        zm[c] -= h
        jac[..., c] = (fn(zp) - fn(zm)) / (2.0 * h)
    return jac


def _wrap_impl(fn_ret, shape):
    """Adapt a return-style callback to the out-parameter convention the
    engine uses internally."""

    def impl(x, y, out):
        out[...] = fn_ret(x, y)

    impl.__name__ = getattr(fn_ret, "__name__", "impl")
    return impl


def _wrap_ret(impl, shape):
    """Adapt an out-parameter implementation to the public return style."""

    def fn(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        out = np.empty(shape)
        impl(x, y, out)
        return out

    return fn


@dataclass
class ModelSpec:
    """A partitioned degenerate SDE model.

    ``jac_*`` callbacks are optional; when absent, central finite
    differences are substituted and ``uses_fd_jacobians`` is set so that
    reports can flag the lower accuracy.  ``hess_a1`` is only consumed by
    the rank-condition hierarchy (depth >= 2).  ``linear_drift`` declares
    that the Jacobian of a1 is constant in (x, y), which lets the
    hierarchy propagate exact constant fields to any depth.
    """

    m: int
    n: int
    d: int
    a1: Callable
    a2: Callable
    b: Callable
    jac_a1: Optional[Callable] = None
    jac_a2: Optional[Callable] = None
    jac_b: Optional[Callable] = None
    hess_a1: Optional[Callable] = None
    name: str = "model"
    linear_drift: bool = False
    uses_fd_jacobians: bool = field(default=False, init=False)
    _impls: tuple = field(default=None, init=False, repr=False)

    def __post_init__(self):
        if min(self.m, self.n, self.d) < 1:
            raise ConfigError("dimensions m, n, d must be positive integers")
        m, n, d, dim = self.m, self.n, self.d, self.m + self.n

        if self.jac_a1 is None:
            self.uses_fd_jacobians = True
            self.jac_a1 = self._fd_jac(self.a1, (m,))
        if self.jac_a2 is None:
            self.uses_fd_jacobians = True
            self.jac_a2 = self._fd_jac(self.a2, (n,))
        if self.jac_b is None:
            self.uses_fd_jacobians = True
            self.jac_b = self._fd_jac(self.b, (n, d))

        if self._impls is None:
            self._impls = (
                _wrap_impl(self.a1, (m,)),
                _wrap_impl(self.a2, (n,)),
                _wrap_impl(self.b, (n, d)),
                _wrap_impl(self.jac_a1, (m, dim)),
                _wrap_impl(self.jac_a2, (n, dim)),
                _wrap_impl(self.jac_b, (n, d, dim)),
            )

    def _fd_jac(self, fn_ret, out_shape):
        m = self.m

        def jac(x, y):
            z = np.concatenate([np.asarray(x, float), np.asarray(y, float)])
            return fd_jacobian(lambda zz: fn_ret(zz[:m], zz[m:]), z, out_shape)

        return jac

    @classmethod
    def from_impls(cls, m, n, d, impls, *, hess_a1=None, name="model",
                   linear_drift=False):
        """Build a spec from out-parameter implementations
        ``(a1, a2, b, jac_a1, jac_a2, jac_b)``, typically numba-compiled."""
        dim = m + n
        shapes = [(m,), (n,), (n, d), (m, dim), (n, dim), (n, d, dim)]
        rets = [_wrap_ret(impl, shape) for impl, shape in zip(impls, shapes)]
        obj = cls.__new__(cls)
        obj.m, obj.n, obj.d = m, n, d
        obj.a1, obj.a2, obj.b = rets[0], rets[1], rets[2]
        obj.jac_a1, obj.jac_a2, obj.jac_b = rets[3], rets[4], rets[5]
        obj.hess_a1 = hess_a1
        obj.name = name
        obj.linear_drift = linear_drift
        obj.uses_fd_jacobians = False
        obj._impls = tuple(impls)
        return obj

    @property
    def dim(self) -> int:
        return self.m + self.n

    @property
    def engine(self) -> str:
        """'numba' when every coefficient implementation is compiled."""
        if (NUMBA_ENABLED and not force_python_active()
                and all(is_dispatcher(f) for f in self._impls)):
            return "numba"
        return "python"

    def split(self, z):
        z = np.asarray(z, dtype=float)
        if z.shape != (self.dim,):
            raise ConfigError(
                f"point has shape {z.shape}, expected ({self.dim},)")
        return z[: self.m], z[self.m:]

    def check_point(self, z):
        """Evaluate every field at z and verify shapes and finiteness."""
        x, y = self.split(z)
        vals = {
            "a1": (self.a1(x, y), (self.m,)),
            "a2": (self.a2(x, y), (self.n,)),
            "b": (self.b(x, y), (self.n, self.d)),
            "jac_a1": (self.jac_a1(x, y), (self.m, self.dim)),
            "jac_a2": (self.jac_a2(x, y), (self.n, self.dim)),
            "jac_b": (self.jac_b(x, y), (self.n, self.d, self.dim)),
        }
        for label, (arr, shape) in vals.items():
            arr = np.asarray(arr, dtype=float)
            if arr.shape != shape:
                raise ConfigError(
                    f"{self.name}.{label} returned shape {arr.shape}, "
                    f"expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise ConfigError(
                    f"{self.name}.{label} returned non-finite values at {z}")


@dataclass(frozen=True)
class NoiseGrid:
    """Uniform time grid with its Gaussian increments.

    The increments are a pure function of (seed, path_index): regenerating
    with the same pair yields bit-identical arrays, and distinct
    path_index values give independent counter-based streams.
    """

    T: float
    n_steps: int
    increments: np.ndarray  # (n_steps, d), variance dt each
    seed: int
    path_index: int
    t0: float = 0.0

    @property
    def dt(self) -> float:
        return self.T / self.n_steps

    @property
    def d(self) -> int:
        return self.increments.shape[1]

    @property
    def times(self) -> np.ndarray:
        return np.linspace(self.t0, self.T, self.n_steps + 1)


def sample_noise(d: int, T: float, n_steps: int, seed: int,
                 path_index: int = 0) -> NoiseGrid:
    """Draw the i.i.d. N(0, dt I_d) increments for one path.

    Streams are keyed counter-style: the 128-bit Philox key is
    (seed << 64) | path_index, so each (seed, path_index) pair maps to an
    independent, reproducible stream regardless of scheduling.
    """
    if d < 1 or n_steps < 1:
        raise ConfigError("d and n_steps must be >= 1")
    if not (T > 0.0) or not math.isfinite(T):
        raise ConfigError("T must be positive and finite")
    key = ((int(seed) & _MASK64) << 64) | (int(path_index) & _MASK64)
    rng = np.random.Generator(np.random.Philox(key=key))
    dt = T / n_steps
    increments = rng.standard_normal((n_steps, d)) * math.sqrt(dt)
    return NoiseGrid(T=float(T), n_steps=int(n_steps), increments=increments,
                     seed=int(seed), path_index=int(path_index))


@dataclass
class PathBundle:
    """One simulated trajectory on its grid.

    ``states[k]`` is the stacked state (x, y) after k Euler steps;
    ``exploded_step`` is the first index with a non-finite state, or None.
    """

    grid: NoiseGrid
    states: np.ndarray  # (n_steps + 1, m + n)
    initial: np.ndarray
    exploded_step: Optional[int] = None
    model_name: str = ""

    @property
    def exploded(self) -> bool:
        return self.exploded_step is not None

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


def integrate_path(model: ModelSpec, initial, grid: NoiseGrid) -> PathBundle:
    """Euler-Maruyama on the partitioned system.

    The x-block is advanced by a1*dt only; noise enters through the
    y-block.  A non-finite state stops the recursion and marks the path
    exploded rather than raising, so badly-behaved models remain probeable.
    """
    from ._kernels import run_path

    initial = np.asarray(initial, dtype=float).reshape(-1)
    if initial.shape != (model.dim,):
        raise ConfigError(
            f"initial point has shape {initial.shape}, expected ({model.dim},)")
    if grid.d != model.d:
        raise ConfigError(
            f"noise dimension {grid.d} does not match model d={model.d}")
    states = np.empty((grid.n_steps + 1, model.dim))
    exploded = run_path(model, initial, grid.increments, grid.dt, states)
    if exploded >= 0:
        states[exploded + 1:] = np.nan
    return PathBundle(
        grid=grid,
        states=states,
        initial=initial,
        exploded_step=None if exploded < 0 else int(exploded),
        model_name=model.name,
    )
