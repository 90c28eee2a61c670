"""Jacobian flow of a path and its independently integrated inverse.

The flow J_t and its inverse solve linear matrix SDEs driven by the same
Brownian increments as the state path.  The inverse is *not* obtained by
inverting J_t: it has its own recursion, and the per-step defect
||J_k Jinv_k - I|| is the quality gate reported by
``flow_deviation_report``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._kernels import run_bundle
from .errors import ConfigError, NumericalFailureError
from .models import ModelSpec, NoiseGrid, PathBundle

__all__ = ["FlowRecord", "integrate_flow", "blocks_at",
           "flow_deviation_report"]


@dataclass
class FlowRecord:
    """Per-step flow matrices along one path.

    ``J[k]`` and ``J_inv[k]`` are the (m+n)x(m+n) matrices after k steps;
    both start at the identity.  The block tiling of ``J_inv`` is
    [[A (m x m), B (m x n)], [C (n x m), D (n x n)]].
    """

    grid: NoiseGrid
    m: int
    n: int
    J: np.ndarray       # (n_steps + 1, dim, dim)
    J_inv: np.ndarray   # (n_steps + 1, dim, dim)
    exploded_step: Optional[int] = None
    model_name: str = ""

    @property
    def exploded(self) -> bool:
        return self.exploded_step is not None

    @property
    def n_steps(self) -> int:
        return self.grid.n_steps


def integrate_flow(model: ModelSpec, path: PathBundle) -> FlowRecord:
    """Integrate J and J^-1 along ``path`` with the path's own increments.

    The state recursion is replayed inside the kernel so that the flow
    sees exactly the trajectory of ``path`` (same arithmetic, same
    noise).  Requires a non-exploded path.
    """
    if path.exploded:
        raise NumericalFailureError(
            f"cannot integrate flow on exploded path "
            f"(state non-finite at step {path.exploded_step})")
    grid = path.grid
    dim = model.dim
    states = np.empty((grid.n_steps + 1, dim))
    J = np.empty((grid.n_steps + 1, dim, dim))
    J_inv = np.empty((grid.n_steps + 1, dim, dim))
    exploded = run_bundle(model, path.initial, grid.increments, grid.dt,
                          states, J, J_inv)
    if exploded >= 0:
        J[exploded + 1:] = np.nan
        J_inv[exploded + 1:] = np.nan
    return FlowRecord(
        grid=grid,
        m=model.m,
        n=model.n,
        J=J,
        J_inv=J_inv,
        exploded_step=None if exploded < 0 else int(exploded),
        model_name=model.name,
    )


def blocks_at(flow: FlowRecord, k: int):
    """The (A, B, C, D) tiles of J_inv[k]; views, so reassembling them
    reproduces the stored matrix bitwise."""
    if not (0 <= k <= flow.n_steps):
        raise ConfigError(f"step index {k} outside [0, {flow.n_steps}]")
    m = flow.m
    Ji = flow.J_inv[k]
    return Ji[:m, :m], Ji[:m, m:], Ji[m:, :m], Ji[m:, m:]


def flow_deviation_report(flow: FlowRecord) -> np.ndarray:
    """Running maximum of ||J[k] @ J_inv[k] - I||_F over the grid.

    The array is nondecreasing; its final entry is the figure used by the
    acceptance gate, expected to scale linearly in the step size.
    """
    if flow.exploded:
        raise NumericalFailureError("flow exploded; deviation undefined")
    dim = flow.J.shape[1]
    prod = np.einsum("kij,kjl->kil", flow.J, flow.J_inv)
    prod[:, np.arange(dim), np.arange(dim)] -= 1.0
    per_step = np.sqrt((prod ** 2).sum(axis=(1, 2)))
    return np.maximum.accumulate(per_step)
