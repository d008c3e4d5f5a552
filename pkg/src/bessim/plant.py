"""Discrete-time simulation of the storage plant power chain.

Topology: grid -> station transformer -> per-cluster AC/DC -> per-cluster
DC/DC -> battery cluster. Each step ledgers energy per component and the
ledger closes exactly: grid = stored + transformer + AC/DC + DC/DC +
battery ohmic + battery polarization (signed, both directions).

Within a step the battery terminal current is held constant (solved from
the commanded DC power at the step-start state); the polarization branch
and the OCV integral are then evaluated in closed form, so the per-step
energy split is exact rather than sampled.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import DomainError, InfeasiblePowerError, ConfigError
from .losses import (
    CellParams,
    PcsEfficiencyCoeffs,
    RcState,
    TransformerParams,
    transformer_loss,
    PCS_EFFICIENCY_FLOOR,
)

WH_PER_J = 1.0 / 3600.0


@dataclass(frozen=True)
class ClusterParams:
    """One battery cluster: series/parallel cell block behind its own PCS.

    Aggregate electrical values follow from the cell block layout:
    resistances scale by n_series/n_parallel, capacity by n_parallel,
    polarization capacitance by n_parallel/n_series (time constant is
    preserved).
    """

    cell: CellParams = field(default_factory=CellParams)
    n_series: int = 200
    n_parallel: int = 24
    rated_power_w: float = 50_000.0
    rated_energy_wh: float = 200_000.0
    dc_bus_voltage_v: float = 700.0  # metadata; converters are power-level models
    dcdc_coeffs: PcsEfficiencyCoeffs = field(default_factory=PcsEfficiencyCoeffs)
    acdc_coeffs: PcsEfficiencyCoeffs = field(default_factory=PcsEfficiencyCoeffs)

    def __post_init__(self):
        if self.n_series < 1 or self.n_parallel < 1:
            raise DomainError("cell block counts must be at least 1")
        if self.rated_power_w <= 0 or self.rated_energy_wh <= 0:
            raise DomainError("cluster ratings must be strictly positive")

    @property
    def r_ohm_agg(self) -> float:
        return self.cell.r_ohm * self.n_series / self.n_parallel

    @property
    def r_pol_agg(self) -> float:
        return self.cell.r_pol * self.n_series / self.n_parallel

    @property
    def c_pol_agg(self) -> float:
        return self.cell.c_pol * self.n_parallel / self.n_series

    @property
    def capacity_agg_ah(self) -> float:
        return self.cell.capacity_ah * self.n_parallel

    @property
    def time_constant_s(self) -> float:
        return self.cell.time_constant_s


@dataclass(frozen=True)
class ClusterState:
    """SoC and aggregate polarization state of one cluster."""

    soc: float
    rc: RcState = field(default_factory=RcState)

    def __post_init__(self):
        if not 0.0 <= self.soc <= 1.0:
            raise DomainError("soc must lie in [0, 1]")


@dataclass(frozen=True)
class PlantConfig:
    clusters: tuple[ClusterParams, ...]
    transformer: TransformerParams = field(default_factory=TransformerParams)
    dt_s: float = 60.0
    soc_min: float = 0.03
    soc_max: float = 0.97
    initial_soc: float = 0.5

    def __post_init__(self):
        if len(self.clusters) < 1:
            raise ConfigError("clusters", "at least one cluster required")
        if self.dt_s <= 0:
            raise ConfigError("dt_s", "must be strictly positive")
        if not (0.0 <= self.soc_min < self.soc_max <= 1.0):
            raise ConfigError("soc_min/soc_max",
                              "need 0 <= soc_min < soc_max <= 1")
        if not (self.soc_min <= self.initial_soc <= self.soc_max):
            raise ConfigError("initial_soc", "must lie inside the SoC band")

    @property
    def total_rated_power_w(self) -> float:
        return sum(c.rated_power_w for c in self.clusters)

    @property
    def total_rated_energy_wh(self) -> float:
        return sum(c.rated_energy_wh for c in self.clusters)


@dataclass
class LossBreakdown:
    """Per-component energy ledger for one step or an accumulated run (Wh).

    Losses are always non-negative; stored_wh and grid_wh are signed
    (positive = charging direction).
    """

    transformer_wh: float = 0.0
    acdc_wh: float = 0.0
    dcdc_wh: float = 0.0
    battery_ohmic_wh: float = 0.0
    battery_polarization_wh: float = 0.0
    stored_wh: float = 0.0
    grid_wh: float = 0.0

    @property
    def total_loss_wh(self) -> float:
        return (self.transformer_wh + self.acdc_wh + self.dcdc_wh
                + self.battery_ohmic_wh + self.battery_polarization_wh)

    def balance_residual_wh(self) -> float:
        return self.grid_wh - self.stored_wh - self.total_loss_wh

    def __add__(self, other: "LossBreakdown") -> "LossBreakdown":
        return LossBreakdown(*[a + b for a, b in
                               zip(astuple(self), astuple(other))])

    def accumulate(self, other: "LossBreakdown") -> None:
        self.transformer_wh += other.transformer_wh
        self.acdc_wh += other.acdc_wh
        self.dcdc_wh += other.dcdc_wh
        self.battery_ohmic_wh += other.battery_ohmic_wh
        self.battery_polarization_wh += other.battery_polarization_wh
        self.stored_wh += other.stored_wh
        self.grid_wh += other.grid_wh


def astuple(lb: LossBreakdown) -> tuple:
    return (lb.transformer_wh, lb.acdc_wh, lb.dcdc_wh, lb.battery_ohmic_wh,
            lb.battery_polarization_wh, lb.stored_wh, lb.grid_wh)


class _ParamArrays:
    """Cluster parameters flattened to numpy arrays for vectorized stepping."""

    def __init__(self, clusters: tuple[ClusterParams, ...],
                 soc_min: float, soc_max: float):
        m = len(clusters)
        self.m = m
        self.soc_min = soc_min
        self.soc_max = soc_max
        self.r_ohm = np.array([c.r_ohm_agg for c in clusters])
        self.r_pol = np.array([c.r_pol_agg for c in clusters])
        self.tau = np.array([c.time_constant_s for c in clusters])
        self.cap_ah = np.array([c.capacity_agg_ah for c in clusters])
        self.n_series = np.array([float(c.n_series) for c in clusters])
        self.rated_w = np.array([c.rated_power_w for c in clusters])
        # coefficient matrices, shape (degree+1, m), low order first
        self.ocv_b = np.array([c.cell.ocv.b for c in clusters]).T
        self.acdc_a = np.array([c.acdc_coeffs.a for c in clusters]).T
        self.dcdc_a = np.array([c.dcdc_coeffs.a for c in clusters]).T
        self.identical = all(c == clusters[0] for c in clusters[1:])


def _horner(coeffs: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Evaluate per-cluster polynomials; coeffs shape (deg+1, m), low first."""
    y = np.broadcast_to(coeffs[-1], x.shape).copy()
    for c in coeffs[-2::-1]:
        y = y * x + c
    return y


def _ocv_antiderivative(coeffs: np.ndarray, soc: np.ndarray) -> np.ndarray:
    b0, b1, b2, b3 = coeffs
    return soc * (b0 + soc * (b1 / 2 + soc * (b2 / 3 + soc * b3 / 4)))


def _step_arrays(soc, ipol, p_ac_cmd_w, dt, pp: _ParamArrays):
    """Advance cluster states one step under commanded AC-side powers.

    All inputs broadcast against each other along the last (cluster) axis,
    so a batch of candidate allocations can be evaluated in one call.

    Returns a dict of arrays: next state, per-component energies (Wh),
    steady/transient loss split, terminal current and a truncation flag.
    """
    p_ac = np.asarray(p_ac_cmd_w, dtype=float)
    soc = np.asarray(soc, dtype=float)
    ipol = np.asarray(ipol, dtype=float)

    charging = p_ac >= 0.0
    lam = np.clip(np.abs(p_ac) / pp.rated_w, 0.0, 1.0)
    eta_ac = np.clip(_horner(pp.acdc_a, lam), PCS_EFFICIENCY_FLOOR, 1.0)
    eta_dc = np.clip(_horner(pp.dcdc_a, lam), PCS_EFFICIENCY_FLOOR, 1.0)
    eta2 = eta_ac * eta_dc

    # Commanded DC power: conversion losses come off the grid side when
    # charging and are supplied by the battery when discharging.
    p_dc = np.where(charging, p_ac * eta2, p_ac / eta2)

    # Terminal current from the battery-side power balance
    #   r_ohm * I^2 + (V_oc + r_pol * i_pol) * I = P_dc
    # smaller-magnitude root, sign matching P_dc (stable quadratic form).
    v_oc = pp.n_series * _horner(pp.ocv_b, soc)
    b = v_oc + pp.r_pol * ipol
    disc = b * b + 4.0 * pp.r_ohm * p_dc
    if np.any(disc < 0.0):
        raise InfeasiblePowerError(
            "demanded power exceeds maximum deliverable battery power")
    current = 2.0 * p_dc / (b + np.sqrt(disc))

    # SoC bound truncation: largest feasible constant current for the full dt.
    coulomb = dt / (3600.0 * pp.cap_ah)   # soc change per ampere
    i_hi = (pp.soc_max - soc) / coulomb
    i_lo = (pp.soc_min - soc) / coulomb
    i_clamped = np.clip(current, np.minimum(i_lo, 0.0), np.maximum(i_hi, 0.0))
    truncated = i_clamped != current
    current = i_clamped

    soc_new = soc + current * coulomb

    # Closed-form RC branch integrals for constant current over the step.
    decay = np.exp(-dt / pp.tau)
    d0 = ipol - current
    ipol_new = current + d0 * decay
    j1 = current * dt + d0 * pp.tau * (1.0 - decay)                  # int i_pol
    j2 = (current * current * dt
          + 2.0 * current * d0 * pp.tau * (1.0 - decay)
          + d0 * d0 * (pp.tau / 2.0) * (1.0 - decay * decay))        # int i_pol^2

    # Mean OCV over the traversed SoC interval (exact for the cubic fit).
    dsoc = soc_new - soc
    soc_c = np.clip(soc, 0.0, 1.0)
    soc_n = np.clip(soc_new, 0.0, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        v_mean = np.where(
            np.abs(dsoc) > 1e-15,
            pp.n_series * (_ocv_antiderivative(pp.ocv_b, soc_n)
                           - _ocv_antiderivative(pp.ocv_b, soc_c)) / dsoc,
            v_oc,
        )

    # Energy pieces (J). stored is defined as the residual of the exact
    # DC-side energy so the ledger closes bit-exactly; physically it equals
    # chemical energy plus the polarization capacitor energy change.
    e_ohm = current * current * pp.r_ohm * dt
    e_pol = pp.r_pol * j2
    e_rc_in = current * pp.r_pol * j1
    e_chem = current * v_mean * dt
    e_dc = e_chem + e_ohm + e_rc_in
    e_stored = e_dc - e_ohm - e_pol

    # Converter chain; with signed energies the stage losses are the
    # differences e_ac - e_mid and e_mid - e_dc in both directions, so the
    # ledger closes exactly.
    e_mid = np.where(charging, e_dc / eta_dc, e_dc * eta_dc)
    e_dcdc = e_mid - e_dc
    e_ac = np.where(charging, e_mid / eta_ac, e_mid * eta_ac)
    e_acdc = e_ac - e_mid

    e_ss = current * current * (pp.r_ohm + pp.r_pol) * dt
    e_ts = e_pol - current * current * pp.r_pol * dt

    return {
        "soc": soc_new,
        "ipol": ipol_new,
        "current_a": current,
        "truncated": truncated,
        "e_ac_wh": e_ac * WH_PER_J,
        "e_dc_wh": e_dc * WH_PER_J,
        "stored_wh": e_stored * WH_PER_J,
        "acdc_wh": e_acdc * WH_PER_J,
        "dcdc_wh": e_dcdc * WH_PER_J,
        "ohmic_wh": e_ohm * WH_PER_J,
        "polarization_wh": e_pol * WH_PER_J,
        "ss_wh": e_ss * WH_PER_J,
        "ts_wh": e_ts * WH_PER_J,
    }


def _step_scalar(soc: float, ipol: float, p_ac: float, dt: float,
                 p: ClusterParams, soc_min: float, soc_max: float) -> tuple:
    """Pure-scalar twin of _step_arrays for one cluster (hot-loop fast path).

    Same formulas and clamping order; used when every cluster of the plant
    carries an identical share of an identical state, so one evaluation
    stands for all of them.

    Returns (soc', ipol', current, truncated, e_ac, e_dc, stored, acdc,
    dcdc, ohmic, polarization, ss, ts) with energies in Wh.
    """
    a0, a1, a2, a3, a4 = p.acdc_coeffs.a
    d0_, d1, d2, d3, d4 = p.dcdc_coeffs.a
    b0, b1, b2, b3 = p.cell.ocv.b
    r_ohm, r_pol, tau = p.r_ohm_agg, p.r_pol_agg, p.time_constant_s

    charging = p_ac >= 0.0
    lam = abs(p_ac) / p.rated_power_w
    if lam > 1.0:
        lam = 1.0
    eta_ac = a0 + lam * (a1 + lam * (a2 + lam * (a3 + lam * a4)))
    eta_dc = d0_ + lam * (d1 + lam * (d2 + lam * (d3 + lam * d4)))
    eta_ac = min(max(eta_ac, PCS_EFFICIENCY_FLOOR), 1.0)
    eta_dc = min(max(eta_dc, PCS_EFFICIENCY_FLOOR), 1.0)
    eta2 = eta_ac * eta_dc
    p_dc = p_ac * eta2 if charging else p_ac / eta2

    v_oc = p.n_series * (b0 + soc * (b1 + soc * (b2 + soc * b3)))
    b = v_oc + r_pol * ipol
    disc = b * b + 4.0 * r_ohm * p_dc
    if disc < 0.0:
        raise InfeasiblePowerError(
            "demanded power exceeds maximum deliverable battery power")
    current = 2.0 * p_dc / (b + math.sqrt(disc))

    coulomb = dt / (3600.0 * p.capacity_agg_ah)
    i_hi = (soc_max - soc) / coulomb
    i_lo = (soc_min - soc) / coulomb
    i_clamped = min(max(current, min(i_lo, 0.0)), max(i_hi, 0.0))
    truncated = i_clamped != current
    current = i_clamped

    soc_new = soc + current * coulomb
    decay = math.exp(-dt / tau)
    d0 = ipol - current
    ipol_new = current + d0 * decay
    j1 = current * dt + d0 * tau * (1.0 - decay)
    j2 = (current * current * dt + 2.0 * current * d0 * tau * (1.0 - decay)
          + d0 * d0 * (tau / 2.0) * (1.0 - decay * decay))

    dsoc = soc_new - soc
    if abs(dsoc) > 1e-15:
        sc = min(max(soc, 0.0), 1.0)
        sn = min(max(soc_new, 0.0), 1.0)
        anti_c = sc * (b0 + sc * (b1 / 2 + sc * (b2 / 3 + sc * b3 / 4)))
        anti_n = sn * (b0 + sn * (b1 / 2 + sn * (b2 / 3 + sn * b3 / 4)))
        v_mean = p.n_series * (anti_n - anti_c) / dsoc
    else:
        v_mean = v_oc

    e_ohm = current * current * r_ohm * dt
    e_pol = r_pol * j2
    e_dc = current * v_mean * dt + e_ohm + current * r_pol * j1
    e_stored = e_dc - e_ohm - e_pol
    if charging:
        e_mid = e_dc / eta_dc
        e_ac = e_mid / eta_ac
    else:
        e_mid = e_dc * eta_dc
        e_ac = e_mid * eta_ac
    e_acdc = e_ac - e_mid
    e_dcdc = e_mid - e_dc
    e_ss = current * current * (r_ohm + r_pol) * dt
    e_ts = e_pol - current * current * r_pol * dt

    w = WH_PER_J
    return (soc_new, ipol_new, current, truncated, e_ac * w, e_dc * w,
            e_stored * w, e_acdc * w, e_dcdc * w, e_ohm * w, e_pol * w,
            e_ss * w, e_ts * w)


def cluster_current_from_power(state: ClusterState, dc_power_w: float,
                               p: ClusterParams) -> float:
    """Battery terminal current (A) delivering dc_power_w at the terminals.

    Solves r_agg*I^2 + (V_oc_agg + r_pol_agg*i_pol)*I - P_dc = 0 for the
    physical (smaller magnitude) root with the sign of P_dc.
    """
    v_oc = p.n_series * float(np.polyval(p.cell.ocv.b[::-1],
                                         np.clip(state.soc, 0.0, 1.0)))
    b = v_oc + p.r_pol_agg * state.rc.i_pol
    disc = b * b + 4.0 * p.r_ohm_agg * dc_power_w
    if disc < 0.0:
        raise InfeasiblePowerError(
            f"dc power {dc_power_w:.1f} W exceeds maximum deliverable")
    return 2.0 * dc_power_w / (b + math.sqrt(disc))


def step_cluster(state: ClusterState, ac_side_power_w: float, dt: float,
                 p: ClusterParams, soc_min: float = 0.03,
                 soc_max: float = 0.97) -> tuple[ClusterState, LossBreakdown, bool]:
    """Advance one cluster one step. Returns (state, ledger, truncated).

    The ledger has no transformer entry (system-level device) and grid_wh
    equal to the cluster AC-side energy.
    """
    if abs(ac_side_power_w) > p.rated_power_w * (1.0 + 1e-12):
        raise DomainError("ac_side_power_w above cluster rated power")
    if dt < 0:
        raise DomainError("dt must be non-negative")
    pp = _ParamArrays((p,), soc_min, soc_max)
    out = _step_arrays(np.array([state.soc]), np.array([state.rc.i_pol]),
                       np.array([ac_side_power_w]), dt, pp)
    new_state = ClusterState(
        soc=float(out["soc"][0]),
        rc=RcState(i_pol=float(out["ipol"][0]),
                   t_elapsed=state.rc.t_elapsed + dt),
    )
    ledger = LossBreakdown(
        transformer_wh=0.0,
        acdc_wh=float(out["acdc_wh"][0]),
        dcdc_wh=float(out["dcdc_wh"][0]),
        battery_ohmic_wh=float(out["ohmic_wh"][0]),
        battery_polarization_wh=float(out["polarization_wh"][0]),
        stored_wh=float(out["stored_wh"][0]),
        grid_wh=float(out["e_ac_wh"][0]),
    )
    return new_state, ledger, bool(out["truncated"][0])


class Plant:
    """Mutable plant state: per-cluster SoC and polarization current arrays.

    One Plant value is confined to a single simulation thread; distinct
    values may be stepped in parallel.
    """

    def __init__(self, cfg: PlantConfig):
        self.cfg = cfg
        self.params = _ParamArrays(cfg.clusters, cfg.soc_min, cfg.soc_max)
        self.soc = np.full(self.params.m, cfg.initial_soc, dtype=float)
        self.ipol = np.zeros(self.params.m, dtype=float)
        self.t_elapsed = 0.0
        self.cumulative = LossBreakdown()
        self.max_balance_residual_rel = 0.0
        self.last_truncated = np.zeros(self.params.m, dtype=bool)

    @property
    def n_clusters(self) -> int:
        return self.params.m

    def blocked_mask(self, p_sys_w: float) -> np.ndarray:
        """Clusters pinned at the SoC bound opposing the requested direction."""
        if p_sys_w > 0:
            return self.soc >= self.cfg.soc_max - 1e-12
        if p_sys_w < 0:
            return self.soc <= self.cfg.soc_min + 1e-12
        return np.zeros(self.params.m, dtype=bool)

    def net_cluster_power(self, p_sys_w: float) -> float:
        """Total power the clusters exchange for a system-level command.

        Net of transformer loss: less than p_sys when charging, more in
        magnitude when discharging (the clusters also feed the loss).
        """
        lam = min(abs(p_sys_w) / self.cfg.transformer.rated_power_w, 1.2)
        tf_w = transformer_loss(lam, self.cfg.transformer)
        if p_sys_w > 0:
            return max(p_sys_w - tf_w, 0.0)
        if p_sys_w < 0:
            return p_sys_w - tf_w
        return 0.0

    def _cluster_targets(self, p_sys_w: float, alloc) -> tuple[np.ndarray, float]:
        """Split system power into per-cluster AC targets plus transformer loss.

        The transformer is a single shared device; its loss is computed from
        the total |p_sys| and carried at system level. Clusters receive the
        remainder when charging and must additionally supply the loss when
        discharging.
        """
        k = np.asarray(getattr(alloc, "k", alloc), dtype=float)
        if k.shape[-1] != self.params.m:
            raise DomainError("allocation length does not match cluster count")
        lam = min(abs(p_sys_w) / self.cfg.transformer.rated_power_w, 1.2)
        tf_w = transformer_loss(lam, self.cfg.transformer)
        if p_sys_w > 0:
            p_net = max(p_sys_w - tf_w, 0.0)
        elif p_sys_w < 0:
            p_net = p_sys_w - tf_w
        else:
            p_net = 0.0
        targets = k * p_net
        over = np.abs(targets) > self.params.rated_w * (1.0 + 1e-9)
        if np.any(over):
            j = int(np.argmax(over))
            raise DomainError(
                f"allocation infeasible: cluster {j} commanded "
                f"{targets[j]:.1f} W above its {self.params.rated_w[j]:.0f} W rating")
        return targets, tf_w

    def step(self, p_sys_w: float, alloc, dt: float | None = None) -> LossBreakdown:
        """Advance the whole plant one step and return the step ledger."""
        dt = self.cfg.dt_s if dt is None else dt
        targets, tf_w = self._cluster_targets(p_sys_w, alloc)
        out = _step_arrays(self.soc, self.ipol, targets, dt, self.params)
        self.soc = out["soc"]
        self.ipol = out["ipol"]
        self.t_elapsed += dt
        self.last_truncated = out["truncated"]
        tf_wh = tf_w * dt * WH_PER_J
        ledger = LossBreakdown(
            transformer_wh=tf_wh,
            acdc_wh=float(np.sum(out["acdc_wh"])),
            dcdc_wh=float(np.sum(out["dcdc_wh"])),
            battery_ohmic_wh=float(np.sum(out["ohmic_wh"])),
            battery_polarization_wh=float(np.sum(out["polarization_wh"])),
            stored_wh=float(np.sum(out["stored_wh"])),
            grid_wh=float(np.sum(out["e_ac_wh"])) + tf_wh,
        )
        self.cumulative.accumulate(ledger)
        scale = max(abs(ledger.grid_wh), abs(ledger.stored_wh),
                    ledger.total_loss_wh, 1e-30)
        rel = abs(ledger.balance_residual_wh()) / scale
        if rel > self.max_balance_residual_rel:
            self.max_balance_residual_rel = rel
        self._last_step_detail = out
        return ledger

    def is_uniform(self) -> bool:
        """True when every cluster has identical parameters and state."""
        return (self.params.identical
                and bool(np.all(self.soc == self.soc[0]))
                and bool(np.all(self.ipol == self.ipol[0])))

    def step_uniform(self, p_sys_w: float, dt: float | None = None) -> tuple:
        """Fast balanced step for a uniform plant (see is_uniform).

        Evaluates one representative cluster with the scalar model and
        scales by the cluster count; numerically equivalent to step() with
        the balanced allocation. Returns
        (ledger, delivered_ac_wh, cluster0_dc_wh, ss_wh, ts_wh, truncated).
        """
        dt = self.cfg.dt_s if dt is None else dt
        m = self.params.m
        lam = min(abs(p_sys_w) / self.cfg.transformer.rated_power_w, 1.2)
        tf_w = transformer_loss(lam, self.cfg.transformer)
        if p_sys_w > 0:
            p_net = max(p_sys_w - tf_w, 0.0)
        elif p_sys_w < 0:
            p_net = p_sys_w - tf_w
        else:
            p_net = 0.0
        p_clu = p_net / m
        if abs(p_clu) > self.cfg.clusters[0].rated_power_w * (1.0 + 1e-9):
            raise DomainError(
                f"allocation infeasible: cluster 0 commanded {p_clu:.1f} W "
                f"above its {self.cfg.clusters[0].rated_power_w:.0f} W rating")
        (soc_new, ipol_new, _cur, truncated, e_ac, e_dc, e_stored, e_acdc,
         e_dcdc, e_ohm, e_pol, e_ss, e_ts) = _step_scalar(
            float(self.soc[0]), float(self.ipol[0]), p_clu, dt,
            self.cfg.clusters[0], self.cfg.soc_min, self.cfg.soc_max)
        self.soc.fill(soc_new)
        self.ipol.fill(ipol_new)
        self.t_elapsed += dt
        tf_wh = tf_w * dt * WH_PER_J
        ledger = LossBreakdown(
            transformer_wh=tf_wh, acdc_wh=m * e_acdc, dcdc_wh=m * e_dcdc,
            battery_ohmic_wh=m * e_ohm, battery_polarization_wh=m * e_pol,
            stored_wh=m * e_stored, grid_wh=m * e_ac + tf_wh)
        self.cumulative.accumulate(ledger)
        scale = max(abs(ledger.grid_wh), abs(ledger.stored_wh),
                    ledger.total_loss_wh, 1e-30)
        rel = abs(ledger.balance_residual_wh()) / scale
        if rel > self.max_balance_residual_rel:
            self.max_balance_residual_rel = rel
        return ledger, m * e_ac, e_dc, m * e_ss, m * e_ts, truncated

    def evaluate_allocations(self, p_sys_w: float, K: np.ndarray,
                             dt: float | None = None) -> np.ndarray:
        """Fitness of candidate allocations without mutating plant state.

        K has shape (n_candidates, m). Charging: net battery energy stored
        (Wh). Discharging: net AC energy delivered, counting the battery
        energy expended against it (so for a fixed delivery target the
        least lossy split wins, while under-delivering through SoC
        truncation is weighted twice and never attractive). Candidates
        commanding any cluster above its rating score -inf. The shared
        transformer term is constant across candidates and omitted.
        """
        dt = self.cfg.dt_s if dt is None else dt
        K = np.atleast_2d(np.asarray(K, dtype=float))
        lam = min(abs(p_sys_w) / self.cfg.transformer.rated_power_w, 1.2)
        tf_w = transformer_loss(lam, self.cfg.transformer)
        if p_sys_w > 0:
            p_net = max(p_sys_w - tf_w, 0.0)
        elif p_sys_w < 0:
            p_net = p_sys_w - tf_w
        else:
            p_net = 0.0
        targets = K * p_net
        infeasible = np.any(np.abs(targets) > self.params.rated_w * (1.0 + 1e-9),
                            axis=-1)
        safe_targets = np.where(np.abs(targets) > self.params.rated_w,
                                np.sign(targets) * self.params.rated_w, targets)
        out = _step_arrays(self.soc, self.ipol, safe_targets, dt, self.params)
        if p_sys_w >= 0:
            fitness = np.sum(out["stored_wh"], axis=-1)
        else:
            delivered = -np.sum(out["e_ac_wh"], axis=-1)
            drawn = -np.sum(out["stored_wh"], axis=-1)
            fitness = 2.0 * delivered - drawn
        fitness = np.where(infeasible, -np.inf, fitness)
        return fitness

    def snapshot(self) -> dict:
        """JSON-ready state snapshot for checkpoint/restart."""
        return {
            "soc": self.soc.tolist(),
            "i_pol": self.ipol.tolist(),
            "t_elapsed_s": self.t_elapsed,
            "cumulative_wh": asdict(self.cumulative),
        }

    def restore(self, snap: dict) -> None:
        soc = np.asarray(snap["soc"], dtype=float)
        ipol = np.asarray(snap["i_pol"], dtype=float)
        if soc.shape != (self.params.m,) or ipol.shape != (self.params.m,):
            raise DomainError("snapshot cluster count does not match plant")
        self.soc = soc
        self.ipol = ipol
        self.t_elapsed = float(snap["t_elapsed_s"])
        self.cumulative = LossBreakdown(**snap["cumulative_wh"])

    def snapshot_json(self) -> str:
        return json.dumps(self.snapshot(), sort_keys=True)

    def restore_json(self, text: str) -> None:
        self.restore(json.loads(text))


def build_plant(cfg: PlantConfig) -> Plant:
    """Construct a plant with every cluster at initial_soc and relaxed RC state."""
    return Plant(cfg)


def step_plant(plant: Plant, p_sys_w: float, alloc,
               dt: float | None = None) -> tuple[Plant, LossBreakdown]:
    """Step the plant in place; returned plant is the same (mutated) object."""
    ledger = plant.step(p_sys_w, alloc, dt)
    return plant, ledger


def uniform_plant_config(n_clusters: int, cluster: ClusterParams | None = None,
                         **kwargs) -> PlantConfig:
    """Convenience constructor for a plant of identical clusters."""
    cluster = cluster or ClusterParams()
    return PlantConfig(clusters=(cluster,) * n_clusters, **kwargs)
