"""Closed-loop simulation: day-ahead plans driving the plant model.

Each day of the horizon is planned independently (perfect foresight on
that day's load), then executed step by step against the plant with the
chosen allocation mode. Per-step energies are recorded for the analysis
module.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .allocator import PsoParams, balanced_allocation, pso_allocate, repair
from .errors import DomainError
from .losses import transformer_loss
from .plant import Plant
from .scheduler import (
    LoadProfile,
    ShavingPlan,
    correct_references_improved,
    correct_references_original,
    depth_references,
)


@dataclass
class SimulationResult:
    """Per-step traces of one simulation run. All energies in Wh."""

    profile: LoadProfile
    dt_s: float
    plans: list[ShavingPlan]
    demand_w: np.ndarray          # system demand from the power law (signed)
    cluster_target_w: np.ndarray  # demand net of transformer loss
    delivered_w: np.ndarray       # actual cluster AC power (signed)
    grid_wh: np.ndarray
    stored_wh: np.ndarray
    transformer_wh: np.ndarray
    acdc_wh: np.ndarray
    dcdc_wh: np.ndarray
    ohmic_wh: np.ndarray
    polarization_wh: np.ndarray
    ss_wh: np.ndarray             # steady-state battery loss energy per step
    ts_wh: np.ndarray             # transient battery loss energy per step
    cluster0_dc_w: np.ndarray     # battery port power of cluster 0
    truncated: np.ndarray
    alloc_matrix: np.ndarray | None
    plant: Plant

    @property
    def n_steps(self) -> int:
        return self.demand_w.size

    @property
    def total_loss_wh(self) -> float:
        return float(self.transformer_wh.sum() + self.acdc_wh.sum()
                     + self.dcdc_wh.sum() + self.ohmic_wh.sum()
                     + self.polarization_wh.sum())


def plan_horizon(profile: LoadProfile, power_depth_w: float,
                 rated_energy_wh: float, method: str = "improved",
                 initial_energy_wh: float = 0.0) -> list[ShavingPlan]:
    """Independent day-ahead plan for each day of the horizon."""
    if method not in ("improved", "original"):
        raise DomainError(f"unknown scheduling method {method!r}")
    plans = []
    for day in profile.split_days():
        r_chr, r_dis = depth_references(day, power_depth_w)
        if method == "improved":
            plan = correct_references_improved(
                day, power_depth_w, rated_energy_wh, r_chr, r_dis,
                initial_energy_wh)
        else:
            plan = correct_references_original(
                day, power_depth_w, rated_energy_wh, r_chr, r_dis,
                initial_energy_wh)
        plans.append(plan)
    return plans


def _sample_refs(plans: list[ShavingPlan], n_total: int) -> tuple[np.ndarray, np.ndarray]:
    """Flatten per-day interval schedules to per-sample (kind, ref) arrays."""
    kinds = np.zeros(n_total, dtype=np.int8)  # +1 charge, -1 discharge
    refs = np.zeros(n_total)
    offset = 0
    for plan in plans:
        for iv in plan.intervals:
            sl = slice(offset + iv.start, offset + iv.stop)
            kinds[sl] = 1 if iv.kind == "charge" else -1
            refs[sl] = iv.ref_w
        offset += plan.n_samples
    return kinds, refs


def run_simulation(plant: Plant, profile: LoadProfile, power_depth_w: float,
                   rated_energy_wh: float, method: str = "improved",
                   alloc_mode: str = "balanced",
                   pso_params: PsoParams | None = None,
                   realloc_cadence_s: float = 900.0,
                   record_alloc: bool = False) -> SimulationResult:
    """Plan the horizon and execute it against the plant.

    alloc_mode is 'balanced' or 'pso'; with 'pso' the allocation is
    re-optimized every realloc_cadence_s of simulated time and repaired
    against the current blocked mask in between.
    """
    if alloc_mode not in ("balanced", "pso"):
        raise DomainError(f"unknown allocation mode {alloc_mode!r}")
    if alloc_mode == "pso" and pso_params is None:
        pso_params = PsoParams()
    dt = profile.dt_s
    if abs(dt - plant.cfg.dt_s) > 1e-9:
        raise DomainError("profile sampling must match the plant step")
    plans = plan_horizon(profile, power_depth_w, rated_energy_wh, method)
    kinds, refs = _sample_refs(plans, profile.n_samples)
    load = profile.values_w
    n = profile.n_samples
    m = plant.n_clusters
    step_h = dt / 3600.0
    soc_min, soc_max = plant.cfg.soc_min, plant.cfg.soc_max
    cadence_steps = max(int(round(realloc_cadence_s / dt)), 1)

    demand = np.zeros(n)
    target = np.zeros(n)
    delivered = np.zeros(n)
    grid = np.zeros(n)
    stored = np.zeros(n)
    tfmr = np.zeros(n)
    acdc = np.zeros(n)
    dcdc = np.zeros(n)
    ohmic = np.zeros(n)
    pol = np.zeros(n)
    ss = np.zeros(n)
    ts = np.zeros(n)
    clu0 = np.zeros(n)
    trunc = np.zeros(n, dtype=bool)
    alloc_rows = np.zeros((n, m)) if record_alloc else None

    k_current: np.ndarray | None = None
    seed_base = pso_params.rng_seed if pso_params is not None else 0

    # A balanced run over identical clusters keeps every cluster in the
    # same state, so one scalar evaluation per step stands for all of them.
    p_tot = float(np.sum(plant.params.rated_w))
    tf_params = plant.cfg.transformer
    tf_rated = tf_params.rated_power_w

    def _cap_to_plant(p: float, avail_w: float) -> float:
        # clusters must also cover the transformer loss when discharging
        if p > 0.0:
            return min(p, avail_w)
        if p < 0.0:
            tf_est = transformer_loss(min(-p / tf_rated, 1.2), tf_params)
            return max(p, -max(avail_w - tf_est, 0.0))
        return 0.0

    use_fast = alloc_mode == "balanced" and plant.is_uniform()
    if use_fast:
        soc_view = plant.soc
        for i in range(n):
            s = soc_view[0]
            p = 0.0
            if kinds[i] == 1:
                if s < soc_max - 1e-12:
                    p = min(max(refs[i] - load[i], 0.0), power_depth_w)
            elif kinds[i] == -1:
                if s > soc_min + 1e-12:
                    p = -min(max(load[i] - refs[i], 0.0), power_depth_w)
            p = _cap_to_plant(p, p_tot)
            demand[i] = p
            ledger, e_ac_tot, e_dc0, e_ss, e_ts, was_trunc = \
                plant.step_uniform(p, dt)
            grid[i] = ledger.grid_wh
            stored[i] = ledger.stored_wh
            tfmr[i] = ledger.transformer_wh
            acdc[i] = ledger.acdc_wh
            dcdc[i] = ledger.dcdc_wh
            ohmic[i] = ledger.battery_ohmic_wh
            pol[i] = ledger.battery_polarization_wh
            ss[i] = e_ss
            ts[i] = e_ts
            delivered[i] = e_ac_tot / step_h
            clu0[i] = e_dc0 / step_h
            trunc[i] = was_trunc
        if record_alloc:
            alloc_rows[:] = 1.0 / m
        return _assemble(profile, dt, plans, demand, tfmr, step_h, delivered,
                         grid, stored, acdc, dcdc, ohmic, pol, ss, ts, clu0,
                         trunc, alloc_rows, plant)

    for i in range(n):
        mean_soc = float(plant.soc.mean())
        p = 0.0
        if kinds[i] == 1 and mean_soc < soc_max:
            p = min(max(refs[i] - load[i], 0.0), power_depth_w)
        elif kinds[i] == -1 and mean_soc > soc_min:
            p = -min(max(load[i] - refs[i], 0.0), power_depth_w)
        demand[i] = p

        blocked = plant.blocked_mask(p)
        if bool(np.all(blocked)):
            p = 0.0
            blocked = plant.blocked_mask(p)
        avail = float(np.sum(plant.params.rated_w[~blocked]))
        p = _cap_to_plant(p, avail)
        demand[i] = p
        p_net = plant.net_cluster_power(p)
        max_share = plant.params.rated_w / abs(p_net) if p_net != 0.0 else None
        if alloc_mode == "balanced" or p == 0.0:
            k = repair(balanced_allocation(blocked).k, blocked, max_share)
        else:
            if k_current is None or i % cadence_steps == 0:
                params = PsoParams(
                    inertia=pso_params.inertia, cognitive=pso_params.cognitive,
                    social=pso_params.social, particles=pso_params.particles,
                    max_iterations=pso_params.max_iterations,
                    velocity_bound=pso_params.velocity_bound,
                    init_spread=pso_params.init_spread,
                    rng_seed=seed_base + i)
                best, _ = pso_allocate(p, plant, params)
                k_current = best.k
            k = repair(k_current, blocked, max_share)

        ledger = plant.step(p, k, dt)
        out = plant._last_step_detail
        grid[i] = ledger.grid_wh
        stored[i] = ledger.stored_wh
        tfmr[i] = ledger.transformer_wh
        acdc[i] = ledger.acdc_wh
        dcdc[i] = ledger.dcdc_wh
        ohmic[i] = ledger.battery_ohmic_wh
        pol[i] = ledger.battery_polarization_wh
        ss[i] = float(np.sum(out["ss_wh"]))
        ts[i] = float(np.sum(out["ts_wh"]))
        delivered[i] = float(np.sum(out["e_ac_wh"])) / step_h
        clu0[i] = float(out["e_dc_wh"][0]) / step_h
        trunc[i] = bool(np.any(out["truncated"]))
        if record_alloc:
            alloc_rows[i] = k

    return _assemble(profile, dt, plans, demand, tfmr, step_h, delivered,
                     grid, stored, acdc, dcdc, ohmic, pol, ss, ts, clu0,
                     trunc, alloc_rows, plant)


def _assemble(profile, dt, plans, demand, tfmr, step_h, delivered, grid,
              stored, acdc, dcdc, ohmic, pol, ss, ts, clu0, trunc,
              alloc_rows, plant) -> SimulationResult:
    # cluster AC target net of transformer loss, for utilization reporting
    target = np.where(demand > 0, np.maximum(demand - tfmr / step_h, 0.0),
                      np.where(demand < 0, demand - tfmr / step_h, 0.0))
    return SimulationResult(
        profile=profile, dt_s=dt, plans=plans, demand_w=demand,
        cluster_target_w=target, delivered_w=delivered, grid_wh=grid,
        stored_wh=stored, transformer_wh=tfmr, acdc_wh=acdc, dcdc_wh=dcdc,
        ohmic_wh=ohmic, polarization_wh=pol, ss_wh=ss, ts_wh=ts,
        cluster0_dc_w=clu0, truncated=trunc, alloc_matrix=alloc_rows,
        plant=plant)
