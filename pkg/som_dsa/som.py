# SPDX-FileCopyrightText: Copyright (c) 2024 NVIDIA CORPORATION & AFFILIATES. All rights reserved.
# SPDX-License-Identifier: Apache-2.0
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
# http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""
Self-organizing feature map for the spectrum allocation problem.

The input layer has one node per SC and the output layer one node per channel. W[j, k] scores how likely
SC j holds channel k. For every SC that raises demand, the output channels compete on the objective Y; the
winner and its neighborhood are pulled towards 1 and W is projected back on the plane of matrices whose
row sums equal the demand. Neighborhoods shrink every schedule step until they reach the demand.
"""

from dataclasses import asdict, dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from scipy.linalg import pinv

from .errors import ConfigError, DegenerateDemandError, InfeasibleRowError
from .model import NetworkInstance, build_proximity, channel_separation, cost
from .utils import check_keys, get_logger

logger = get_logger(__name__)

PRESENTATION_ORDERS = ('fixed', 'shuffled')
SCHEDULE_DECAY = 0.95
INITIAL_SIGMA = 9.0
TRACE_COLUMNS = ['outer_step', 'epoch', 'max_delta_w', 'decoded_cost', 'alpha', 'sigma']


@dataclass(frozen=True)
class SolverConfig:
    seed: int = 0
    n_epochs: int = 5
    delta_w_tol: float = 1e-4
    max_outer_steps: int = 200
    presentation_order: str = 'shuffled'

    def __post_init__(self):
        if self.n_epochs < 1:
            raise ConfigError(f'n_epochs must be at least 1, got {self.n_epochs}')
        if not self.delta_w_tol > 0:
            raise ConfigError(f'delta_w_tol must be positive, got {self.delta_w_tol}')
        if self.max_outer_steps < 1:
            raise ConfigError(f'max_outer_steps must be at least 1, got {self.max_outer_steps}')
        if self.presentation_order not in PRESENTATION_ORDERS:
            raise ConfigError(
                f'presentation_order must be one of {PRESENTATION_ORDERS}, got {self.presentation_order}'
            )

    @classmethod
    def from_dict(cls, values: Dict[str, Any]) -> 'SolverConfig':
        check_keys(values, [f.name for f in cls.__dataclass_fields__.values()], 'solver config')
        return cls(**values)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class SomState:
    weights: np.ndarray  # (S, C)
    step: int
    alpha: float
    sigma: float
    eta: np.ndarray  # (S,) neighborhood sizes
    rho: np.ndarray  # (S,) difficulty
    demand: np.ndarray  # (S,)
    allowed: Optional[np.ndarray] = None  # (S, C) channel availability, None if every channel is usable


@dataclass(frozen=True)
class TraceRecord:
    outer_step: int
    epoch: int
    max_delta_w: float
    decoded_cost: float
    alpha: float
    sigma: float


@dataclass
class SomResult:
    assignment: np.ndarray
    cost: float
    converged: bool
    outer_steps: int
    trace: List[TraceRecord] = field(default_factory=list)
    state: Optional[SomState] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            'assignment': self.assignment.tolist(),
            'cost': float(self.cost),
            'converged': bool(self.converged),
            'outer_steps': int(self.outer_steps),
        }

    def trace_frame(self) -> pd.DataFrame:
        return pd.DataFrame([asdict(record) for record in self.trace], columns=TRACE_COLUMNS)


# Constraint plane
# ================


def constraint_matrix(num_controllers: int, num_channels: int) -> np.ndarray:
    """Block matrix A_c of shape (S, S * C); row n has ones exactly over the channels of SC n."""
    return np.kron(np.eye(num_controllers), np.ones((1, num_channels)))


@dataclass(frozen=True)
class ConstraintPlane:
    """The affine set {w : A_c w = b} written with the generic pseudo-inverse.

    Kept independent of the closed-form projection used by the solver so the two can be checked against
    each other.
    """

    matrix: np.ndarray
    demand: np.ndarray

    @classmethod
    def for_demand(cls, demand: Sequence[float], num_channels: int) -> 'ConstraintPlane':
        demand = np.asarray(demand, dtype=np.float64)
        return cls(constraint_matrix(len(demand), num_channels), demand)

    @property
    def projector(self) -> np.ndarray:
        return np.eye(self.matrix.shape[1]) - pinv(self.matrix) @ self.matrix

    @property
    def offset(self) -> np.ndarray:
        return pinv(self.matrix) @ self.demand

    def project(self, weights: np.ndarray) -> np.ndarray:
        w = np.asarray(weights, dtype=np.float64).reshape(-1)
        return (self.projector @ w + self.offset).reshape(np.shape(weights))

    def energy(self, weights: np.ndarray) -> float:
        w = np.asarray(weights, dtype=np.float64).reshape(-1)
        return float(np.sum((w - (self.projector @ w + self.offset)) ** 2))

    def residual(self, weights: np.ndarray) -> float:
        w = np.asarray(weights, dtype=np.float64).reshape(-1)
        return float(np.abs(self.matrix @ w - self.demand).max())


def constraint_energy(weights: np.ndarray, demand: Sequence[float]) -> float:
    """Closed form of ||w - (P w + s)||^2 for the block constraint matrix."""
    weights = np.asarray(weights, dtype=np.float64)
    gap = np.asarray(demand, dtype=np.float64) - weights.sum(axis=1)
    return float(np.sum(gap**2) / weights.shape[1])


def plane_projection(weights: np.ndarray, demand: Sequence[float]) -> np.ndarray:
    """Orthogonal projection on the constraint plane: each row is shifted by its demand deficit over C."""
    weights = np.asarray(weights, dtype=np.float64)
    gap = np.asarray(demand, dtype=np.float64) - weights.sum(axis=1)
    return weights + (gap / weights.shape[1])[:, None]


def _shift_into_box(row: np.ndarray, demand: float, upper: np.ndarray) -> np.ndarray:
    """Find the uniform shift tau such that clip(row + tau, 0, upper) sums to `demand`.

    This is the fixed point of clipping and redistributing the deficit uniformly over unclipped entries.
    The clipped sum is piecewise linear in tau with kinks where an entry hits a bound, so tau is read off
    exactly from the bracketing pair of kinks.
    """
    capacity = upper.sum()
    if demand <= 0:
        return np.zeros_like(row)
    if demand >= capacity:
        return upper.copy()

    kinks = np.unique(np.concatenate([-row, upper - row]))
    totals = np.clip(row[None, :] + kinks[:, None], 0.0, upper[None, :]).sum(axis=1)
    idx = int(np.searchsorted(totals, demand))
    lo, hi = kinks[idx - 1], kinks[idx]
    total_lo, total_hi = totals[idx - 1], totals[idx]
    tau = lo + (demand - total_lo) * (hi - lo) / (total_hi - total_lo)
    return np.clip(row + tau, 0.0, upper)


def _check_capacity(demand: np.ndarray, upper: np.ndarray):
    capacity = np.asarray(upper).sum(axis=1)
    infeasible = np.flatnonzero((demand > capacity) | (demand < 0))
    if infeasible.size:
        n = infeasible[0]
        raise InfeasibleRowError(f'Demand {demand[n]} cannot be met by the {int(capacity[n])} channels of SC {n}')


def project_to_constraint_plane(
    weights: np.ndarray, demand: Sequence[int], allowed: Optional[np.ndarray] = None
) -> np.ndarray:
    """Project W on the constraint plane and repair rows that leave the box [0, 1] (or [0, 0] when blocked).

    Args:
        weights: weight matrix of shape (S, C)
        demand: demand vector of shape (S,)
        allowed: optional (S, C) channel availability mask

    Returns:
        projected weights with row sums equal to the demand and every entry within its bounds
    """
    weights = np.asarray(weights, dtype=np.float64)
    demand = np.asarray(demand)
    upper = np.ones_like(weights) if allowed is None else np.asarray(allowed, dtype=np.float64)

    _check_capacity(demand, upper)

    projected = plane_projection(weights, demand)
    for n in range(projected.shape[0]):
        row = projected[n]
        if np.all(row >= 0.0) and np.all(row <= upper[n]):
            continue
        projected[n] = _shift_into_box(row, float(demand[n]), upper[n])

    return projected


# SOM building blocks
# ===================


def difficulty_rho(instance: NetworkInstance) -> np.ndarray:
    """rho_i = sum_j R_j I_ij - I_ii with I_ij collapsed over channels by max."""
    interference = instance.interference.max(axis=2)
    return (interference @ instance.demand - np.diag(interference)).astype(np.float64)


def init_weights(
    instance: NetworkInstance,
    allowed: Optional[np.ndarray] = None,
    initial_weights: Optional[np.ndarray] = None,
) -> SomState:
    """Initial SOM state: W = R / C (spread over the allowed channels only, when a mask is given)."""
    demand = instance.demand
    if not np.any(demand > 0):
        raise DegenerateDemandError('Every SC has zero demand, there is nothing to allocate')

    S, C = instance.shape
    if allowed is None:
        weights = np.repeat((demand / C)[:, None], C, axis=1).astype(np.float64)
    else:
        allowed = np.asarray(allowed, dtype=bool)
        counts = allowed.sum(axis=1)
        share = np.divide(demand, counts, out=np.zeros(S), where=counts > 0)
        weights = allowed * share[:, None]

    _check_capacity(demand, np.ones((S, C)) if allowed is None else allowed)
    if initial_weights is not None:
        weights = project_to_constraint_plane(initial_weights, demand, allowed)

    return SomState(
        weights=weights,
        step=0,
        alpha=float(demand[demand > 0].min()),
        sigma=INITIAL_SIGMA,
        eta=demand + S // 5,
        rho=difficulty_rho(instance),
        demand=demand.copy(),
        allowed=allowed,
    )


def objective_row(weights: np.ndarray, proximity: np.ndarray, j_prime: int) -> np.ndarray:
    """Y[i] = sum_k sum_j P[j', k, |i - j|] W[k, j] for every output channel i."""
    separation = channel_separation(weights.shape[1])
    return np.einsum('kij,kj->i', proximity[j_prime][:, separation], weights)


def objective(state: SomState, proximity: np.ndarray, j_prime: int, i: int) -> float:
    return float(objective_row(state.weights, proximity, j_prime)[i])


def select_winner(y_row: Sequence[float]) -> int:
    return int(np.argmin(y_row))


def neighborhood(y_row: Sequence[float], eta: int) -> List[int]:
    """The `eta` channels with the smallest objective, in increasing order. The winner comes first."""
    if eta < 1:
        raise ValueError(f'Neighborhood size must be at least 1, got {eta}')
    order = np.argsort(np.asarray(y_row), kind='stable')
    return order[: min(int(eta), len(order))].tolist()


def effective_alpha(
    alpha: float, sigma: float, rho_jp: float, demand_jp: int, y_winner: float, y_k: float
) -> float:
    if demand_jp < 1:
        raise ValueError(f'Effective learning rate needs a positive demand, got {demand_jp}')
    if not sigma > 0:
        raise ValueError(f'Neighborhood temperature must be positive, got {sigma}')
    raw = alpha * rho_jp / demand_jp * np.exp(-abs(y_winner - y_k) / sigma)
    return float(np.clip(raw, 0.0, 1.0))


def apply_update(state: SomState, j_prime: int, channels: Sequence[int], y_row: Sequence[float]) -> np.ndarray:
    """Kohonen update of row j': W[j', k] += alpha_eff(k) * (1 - W[j', k]) for k in the neighborhood."""
    row = state.weights[j_prime].copy()
    y_winner = y_row[channels[0]]
    for k in channels:
        rate = effective_alpha(
            state.alpha, state.sigma, state.rho[j_prime], state.demand[j_prime], y_winner, y_row[k]
        )
        row[k] += rate * (1.0 - row[k])
    return row


def run_epoch(state: SomState, instance: NetworkInstance, proximity: np.ndarray, order: Sequence[int]):
    """Present every SC with nonzero demand once, in `order`.

    Returns:
        updated state, max absolute change of W over the epoch
    """
    if state.weights.shape != instance.shape:
        raise ValueError(f'State weights {state.weights.shape} do not match instance shape {instance.shape}')

    start = state.weights
    weights = state.weights.copy()
    for j_prime in order:
        if state.demand[j_prime] == 0:
            continue

        y_row = objective_row(weights, proximity, j_prime)
        eta = int(state.eta[j_prime])
        if state.allowed is not None:
            y_row = np.where(state.allowed[j_prime], y_row, np.inf)
            eta = min(eta, int(state.allowed[j_prime].sum()))

        channels = neighborhood(y_row, eta)
        weights[j_prime] = apply_update(replace(state, weights=weights), j_prime, channels, y_row)
        weights = project_to_constraint_plane(weights, state.demand, state.allowed)

    return replace(state, weights=weights), float(np.abs(weights - start).max())


def step_schedules(state: SomState) -> SomState:
    return replace(
        state,
        step=state.step + 1,
        alpha=state.alpha * SCHEDULE_DECAY,
        sigma=state.sigma * SCHEDULE_DECAY,
        eta=np.maximum(state.eta - 1, state.demand),
    )


def decode_assignment(
    weights: np.ndarray,
    demand: Sequence[int],
    allowed: Optional[np.ndarray] = None,
    preferred: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Binary assignment taking the R[j] largest weights of every row.

    Ties go to channels set in `preferred` (the incumbent grant, if any), then to the lowest channel index.
    """
    weights = np.asarray(weights, dtype=np.float64)
    if allowed is not None:
        weights = np.where(allowed, weights, -np.inf)

    assignment = np.zeros(weights.shape, dtype=np.int64)
    for n, row in enumerate(weights):
        if preferred is None:
            order = np.argsort(-row, kind='stable')
        else:
            order = np.lexsort((-np.asarray(preferred[n]), -row))
        top = order[: int(demand[n])]
        assignment[n, top] = 1
    return assignment


# Solver
# ======


def solve(
    instance: NetworkInstance,
    config: Optional[SolverConfig] = None,
    initial_weights: Optional[np.ndarray] = None,
    allowed: Optional[np.ndarray] = None,
    preferred: Optional[np.ndarray] = None,
) -> SomResult:
    """Run the SOM until the neighborhoods have shrunk to the demand and the weights stopped moving.

    Args:
        instance: network instance
        config: solver parameters. Default: `SolverConfig()`
        initial_weights: warm-start weights of shape (S, C); projected before use
        allowed: optional (S, C) channel availability mask
        preferred: optional (S, C) incumbent grant that wins decode ties

    Returns:
        decoded assignment, its cost, convergence flag and the per-epoch trace
    """
    config = config or SolverConfig()
    proximity = build_proximity(instance)
    state = init_weights(instance, allowed=allowed, initial_weights=initial_weights)
    rng = np.random.default_rng(config.seed)
    S = instance.num_controllers

    trace = []
    converged = False
    outer_steps = 0
    for outer_step in range(config.max_outer_steps):
        outer_steps = outer_step + 1
        delta = np.inf
        for epoch in range(config.n_epochs):
            order = rng.permutation(S) if config.presentation_order == 'shuffled' else np.arange(S)
            state, delta = run_epoch(state, instance, proximity, order)
            assignment = decode_assignment(state.weights, state.demand, state.allowed, preferred)
            trace.append(
                TraceRecord(outer_step, epoch, delta, float(cost(assignment, proximity)), state.alpha, state.sigma)
            )
            if delta < config.delta_w_tol:
                break

        if np.array_equal(state.eta, state.demand) and delta < config.delta_w_tol:
            converged = True
            break
        state = step_schedules(state)

    assignment = decode_assignment(state.weights, state.demand, state.allowed, preferred)
    result = SomResult(
        assignment=assignment,
        cost=float(cost(assignment, proximity)),
        converged=converged,
        outer_steps=outer_steps,
        trace=trace,
        state=state,
    )
    if converged:
        logger.debug(f'SOM converged after {outer_steps} schedule steps, cost {result.cost}')
    else:
        logger.warning(f'SOM did not converge within {config.max_outer_steps} schedule steps')
    return result
