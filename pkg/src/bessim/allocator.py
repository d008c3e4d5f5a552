"""Per-instant cluster power allocation.

Provides the balanced baseline split and a particle-swarm optimizer over
the simplex of allocation coefficients. Fitness is a one-step evaluation
of the native plant model: net battery energy stored when charging, AC
energy delivered when discharging.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NoCapacityError
from .plant import Plant


@dataclass(frozen=True)
class AllocationVector:
    """Per-cluster power-sharing coefficients; entries in [0,1], sum 1."""

    k: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.k, dtype=float)
        object.__setattr__(self, "k", arr)
        if np.any(arr < -1e-12) or np.any(arr > 1.0 + 1e-12):
            raise DomainError("allocation coefficients must lie in [0, 1]")
        if abs(float(arr.sum()) - 1.0) > 1e-9:
            raise DomainError("allocation coefficients must sum to 1")

    def __len__(self) -> int:
        return self.k.size


@dataclass(frozen=True)
class PsoParams:
    inertia: float = 0.85
    cognitive: float = 0.4
    social: float = 0.5
    particles: int = 30
    max_iterations: int = 50
    velocity_bound: float = 1.0
    init_spread: float = 0.1
    rng_seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.inertia < 1.0:
            raise DomainError("inertia must lie in (0, 1)")
        if self.particles < 2:
            raise DomainError("at least 2 particles required")


def balanced_allocation(blocked: np.ndarray) -> AllocationVector:
    """Equal coefficients over unblocked clusters, zero over blocked ones."""
    blocked = np.asarray(blocked, dtype=bool)
    n_free = int(np.sum(~blocked))
    if n_free == 0:
        raise NoCapacityError("every cluster is blocked by a SoC bound")
    k = np.where(blocked, 0.0, 1.0 / n_free)
    return AllocationVector(k=k)


def repair(k_raw: np.ndarray, blocked: np.ndarray,
           max_share: np.ndarray | None = None) -> np.ndarray:
    """Project raw coefficients onto the feasible allocation set.

    Clamp to [0,1], zero blocked entries, renormalize to sum 1; an all-zero
    result falls back to the balanced split. When max_share (per-cluster
    upper bound on k, from the power rating) is given, entries are capped
    and the excess redistributed over uncapped clusters.
    """
    blocked = np.asarray(blocked, dtype=bool)
    k = np.clip(np.asarray(k_raw, dtype=float), 0.0, 1.0)
    k[blocked] = 0.0
    total = k.sum()
    if total <= 0.0:
        k = balanced_allocation(blocked).k.copy()
    else:
        k = k / total
    if max_share is not None:
        cap = np.where(blocked, 0.0, np.asarray(max_share, dtype=float))
        if cap.sum() < 1.0 - 1e-9:
            raise NoCapacityError(
                "per-cluster power limits cannot absorb the system power")
        for _ in range(k.size):
            over = k > cap + 1e-15
            if not np.any(over):
                break
            excess = float(np.sum(k[over] - cap[over]))
            k[over] = cap[over]
            room = (~over) & (~blocked) & (k < cap)
            weights = np.where(room, np.maximum(k, 1e-12), 0.0)
            wsum = weights.sum()
            if wsum <= 0.0:
                room_cap = np.where(room, cap - k, 0.0)
                k = k + np.where(room, excess * room_cap / max(room_cap.sum(), 1e-30), 0.0)
            else:
                k = k + excess * weights / wsum
        k = np.minimum(k, cap)
        deficit = 1.0 - k.sum()
        if abs(deficit) > 1e-12:
            room = np.where(~blocked, cap - k, 0.0)
            if room.sum() > 0 and deficit > 0:
                k = k + deficit * room / room.sum()
    return k


def fitness(k, p_sys_w: float, plant: Plant, dt: float | None = None) -> float:
    """One-step plant evaluation of an allocation (Wh, larger is better).

    Charging: net battery energy stored. Discharging: net AC energy
    delivered, weighed against the battery energy drawn for it.
    Allocations driving any cluster above its power rating score -inf.
    """
    arr = np.asarray(getattr(k, "k", k), dtype=float)
    return float(plant.evaluate_allocations(p_sys_w, arr[None, :], dt)[0])


def pso_allocate(p_sys_w: float, plant: Plant, params: PsoParams,
                 dt: float | None = None) -> tuple[AllocationVector, np.ndarray]:
    """Optimize the per-cluster split of p_sys with a particle swarm.

    The swarm is anchored at the balanced allocation (particle 0 is exactly
    balanced, the rest are seeded perturbations of it), velocities are
    clamped to +-velocity_bound, positions repaired to the feasible set
    each iteration. Returns the global best and the per-iteration
    best-fitness trace (non-decreasing).
    """
    m = plant.n_clusters
    blocked = plant.blocked_mask(p_sys_w)
    base = balanced_allocation(blocked).k
    if m == 1:
        k = AllocationVector(k=np.ones(1))
        return k, np.array([fitness(k, p_sys_w, plant, dt)])

    max_share = None
    p_net = plant.net_cluster_power(p_sys_w)
    if p_net != 0.0:
        # cap against both the commanded cluster power and the system-side
        # share so neither view of a cluster's load exceeds its rating
        max_share = plant.params.rated_w / max(abs(p_net), abs(p_sys_w))
    base = repair(base, blocked, max_share)

    rng = np.random.default_rng(params.rng_seed)
    n = params.particles
    pos = np.empty((n, m))
    pos[0] = base
    for i in range(1, n):
        raw = base + rng.uniform(-params.init_spread, params.init_spread, m)
        pos[i] = repair(raw, blocked, max_share)
    vel = np.zeros((n, m))

    fit = plant.evaluate_allocations(p_sys_w, pos, dt)
    pbest = pos.copy()
    pbest_fit = fit.copy()
    g = int(np.argmax(fit))
    gbest = pos[g].copy()
    gbest_fit = float(fit[g])
    trace = np.empty(params.max_iterations + 1)
    trace[0] = gbest_fit

    vb = params.velocity_bound
    for it in range(params.max_iterations):
        r1 = rng.uniform(size=(n, m))
        r2 = rng.uniform(size=(n, m))
        vel = (params.inertia * vel
               + params.cognitive * r1 * (pbest - pos)
               + params.social * r2 * (gbest - pos))
        np.clip(vel, -vb, vb, out=vel)
        pos = pos + vel
        for i in range(n):
            pos[i] = repair(pos[i], blocked, max_share)
        fit = plant.evaluate_allocations(p_sys_w, pos, dt)
        better = fit > pbest_fit
        pbest[better] = pos[better]
        pbest_fit[better] = fit[better]
        g = int(np.argmax(pbest_fit))
        if pbest_fit[g] > gbest_fit:
            gbest_fit = float(pbest_fit[g])
            gbest = pbest[g].copy()
        trace[it + 1] = gbest_fit

    return AllocationVector(k=gbest), trace


def grid_search_allocation(p_sys_w: float, plant: Plant, resolution: float = 1e-3,
                           dt: float | None = None) -> tuple[np.ndarray, float]:
    """Exhaustive simplex grid search for small cluster counts (m <= 3).

    Independent check for the swarm optimizer; not meant for production m.
    """
    m = plant.n_clusters
    if m > 3:
        raise DomainError("grid search supported only for m <= 3")
    steps = int(round(1.0 / resolution))
    if m == 1:
        k = np.ones((1, 1))
    elif m == 2:
        k1 = np.linspace(0.0, 1.0, steps + 1)
        k = np.stack([k1, 1.0 - k1], axis=1)
    else:
        pts = []
        for i in range(steps + 1):
            a = i * resolution
            b = np.linspace(0.0, 1.0 - a, steps - i + 1)
            pts.append(np.stack([np.full_like(b, a), b, 1.0 - a - b], axis=1))
        k = np.concatenate(pts)
    blocked = plant.blocked_mask(p_sys_w)
    k = k[~np.any(k[:, blocked] > 0, axis=1)] if np.any(blocked) else k
    fits = np.empty(k.shape[0])
    chunk = 200_000
    for i in range(0, k.shape[0], chunk):
        fits[i:i + chunk] = plant.evaluate_allocations(p_sys_w, k[i:i + chunk], dt)
    best = int(np.argmax(fits))
    return k[best], float(fits[best])


def allocation_trace_csv(rows: list[tuple[int, float, np.ndarray]]) -> str:
    """Optimizer trace as CSV: iteration, best fitness, best coefficients."""
    lines = ["iteration,best_fitness_wh,best_k"]
    for it, f, k in rows:
        lines.append(f"{it},{f:.10g},\"{';'.join(f'{v:.8g}' for v in k)}\"")
    return "\n".join(lines) + "\n"


def allocation_matrix_csv(times_s: np.ndarray, K: np.ndarray) -> str:
    """Dense allocation time series (T x m) as CSV for heatmap plotting."""
    m = K.shape[1]
    header = "time_s," + ",".join(f"k_{j}" for j in range(m))
    lines = [header]
    for t, row in zip(times_s, K):
        lines.append(f"{t:.10g}," + ",".join(f"{v:.8g}" for v in row))
    return "\n".join(lines) + "\n"
