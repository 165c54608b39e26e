"""
1-RC Thevenin equivalent-circuit simulator.

The RC branch is advanced with the exact exponential solution for a constant
current over each step. Terminal voltage, SOC bookkeeping and the ODE residual
in ``loss`` share one sign convention (charge current positive by default).
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from functools import lru_cache
from typing import Optional

import numpy as np
from tqdm import tqdm

from ..exceptions import ConfigError, DomainError, SimulationError
from ..schemas.ecm import (
    CellState,
    ChargeProtocol,
    CurrentConvention,
    CycleRecord,
    DegradationSchedule,
    EcmCoefficients,
    EcmParams,
    FleetConfig,
)
from ..schemas.features import SohLabel

logger = logging.getLogger(__name__)

KELVIN_OFFSET = 273.15
REFERENCE_TEMP_C = 25.0


@lru_cache(maxsize=128)
def _table_arrays(table: tuple[tuple[float, float], ...]) -> tuple[np.ndarray, np.ndarray]:
    socs = np.array([s for s, _ in table], dtype=np.float64)
    volts = np.array([v for _, v in table], dtype=np.float64)
    socs.flags.writeable = False
    volts.flags.writeable = False
    return socs, volts


def ocv_arrays(params: EcmParams) -> tuple[np.ndarray, np.ndarray]:
    """Read-only (soc, voltage) arrays of the OCV table."""
    return _table_arrays(tuple(tuple(p) for p in params.ocv_table))


def ocv_lookup(params: EcmParams, soc: float) -> float:
    """Open-circuit voltage at ``soc`` by piecewise-linear interpolation."""
    if not 0.0 <= soc <= 1.0:
        raise DomainError(f"soc must lie in [0, 1], got {soc}")
    socs, volts = ocv_arrays(params)
    return float(np.interp(soc, socs, volts))


def inverse_ocv(params: EcmParams, voltage: float) -> float:
    """SOC whose open-circuit voltage is ``voltage``, clamped to the table."""
    socs, volts = ocv_arrays(params)
    return float(np.interp(voltage, volts, socs))


def temperature_factor(temperature: float, arrhenius_k: float = 0.0) -> float:
    """
    Multiplicative resistance factor exp(k (1/T - 1/T_ref)).

    ``k`` > 0 raises resistance below the 25 degC reference and lowers it above.
    """
    if arrhenius_k == 0.0:
        return 1.0
    t_kelvin = temperature + KELVIN_OFFSET
    if t_kelvin <= 0:
        raise DomainError(f"temperature below absolute zero: {temperature} degC")
    t_ref = REFERENCE_TEMP_C + KELVIN_OFFSET
    return math.exp(arrhenius_k * (1.0 / t_kelvin - 1.0 / t_ref))


def scale_for_temperature(
    params: EcmParams, temperature: float, arrhenius_k: float = 0.0
) -> EcmParams:
    factor = temperature_factor(temperature, arrhenius_k)
    if factor == 1.0:
        return params
    return params.model_copy(
        update={"r_ohmic": params.r_ohmic * factor, "r_pol": params.r_pol * factor}
    )


def derive_coefficients(
    params: EcmParams, temperature: float = REFERENCE_TEMP_C, arrhenius_k: float = 0.0
) -> EcmCoefficients:
    """theta1 = (R + R_p)/(C_p R_p), theta2 = 1/(C_p R_p) at ``temperature``."""
    p = scale_for_temperature(params, temperature, arrhenius_k)
    theta2 = 1.0 / (p.c_pol * p.r_pol)
    theta1 = (p.r_ohmic + p.r_pol) * theta2
    return EcmCoefficients(theta1=theta1, theta2=theta2)


def step_cell(
    state: CellState,
    params: EcmParams,
    current: float,
    dt: float,
    convention: CurrentConvention = CurrentConvention.CHARGE_POSITIVE,
) -> CellState:
    """Advance the cell by ``dt`` seconds at constant ``current``."""
    if dt <= 0:
        raise DomainError(f"dt must be positive, got {dt}")
    decay = math.exp(-dt / params.tau)
    u_pol = state.u_pol * decay + current * params.r_pol * (1.0 - decay)
    soc = state.soc + convention.charge_sign * current * dt / (3600.0 * state.capacity_full)
    return CellState(
        soc=min(1.0, max(0.0, soc)), u_pol=u_pol, capacity_full=state.capacity_full
    )


def terminal_voltage(
    state: CellState,
    params: EcmParams,
    current: float,
    convention: CurrentConvention = CurrentConvention.CHARGE_POSITIVE,
) -> float:
    """u = OCV + s (I R + u_p), s = +1 charge-positive, -1 discharge-positive."""
    socs, volts = ocv_arrays(params)
    ocv = float(np.interp(state.soc, socs, volts))
    return ocv + convention.charge_sign * (current * params.r_ohmic + state.u_pol)


def simulate_charge_cycle(
    params: EcmParams,
    state0: CellState,
    protocol: ChargeProtocol,
    noise_seed: Optional[int | list[int]] = None,
    *,
    noise_sigma: float = 0.0,
    arrhenius_k: float = 0.0,
    cell_id: str = "cell_001",
    cycle: int = 1,
) -> CycleRecord:
    """Charge a cell and record samples from the v_lower crossing to termination.

    Raises:
        SimulationError: If the protocol does not terminate within max_steps
    """
    p = scale_for_temperature(params, protocol.temperature, arrhenius_k)
    current = protocol.current_rate * p.capacity_nom
    v_upper = protocol.v_upper
    dt = protocol.dt

    state = state0
    phase = "CC"
    recording = False
    n_recorded = 0
    q = 0.0
    rows: list[tuple[float, float, float, float, float]] = []

    for _ in range(protocol.max_steps):
        if phase == "CV":
            ocv = float(np.interp(state.soc, *ocv_arrays(p)))
            i_now = (v_upper - ocv - state.u_pol) / p.r_ohmic
            u = v_upper
        else:
            i_now = current
            u = terminal_voltage(state, p, i_now)

        if not recording and u >= protocol.v_lower:
            recording = True
        if recording:
            rows.append((n_recorded * dt, u, i_now, q, state.soc))
            n_recorded += 1
            if phase == "CC" and u >= v_upper:
                if protocol.mode == "CC":
                    break
                phase = "CV"
            elif phase == "CV" and i_now <= protocol.cv_cutoff_current:
                break

        state = step_cell(state, p, i_now, dt)
        if recording:
            q += i_now * dt / 3600.0
    else:
        raise SimulationError(
            f"{protocol.mode} protocol did not terminate within {protocol.max_steps} steps",
            {"cell_id": cell_id, "cycle": cycle, "soc": state.soc, "phase": phase},
        )

    data = np.array(rows, dtype=np.float64).reshape(-1, 5)
    voltage = data[:, 1].copy()
    if noise_sigma > 0.0:
        rng = np.random.default_rng(noise_seed)
        voltage = voltage + rng.normal(0.0, noise_sigma, size=voltage.shape)

    return CycleRecord(
        cell_id=cell_id,
        cycle=cycle,
        t_s=data[:, 0].copy(),
        voltage_v=voltage,
        current_a=data[:, 2].copy(),
        temp_c=np.full(len(data), protocol.temperature),
        q_ah=data[:, 3].copy(),
        soc=data[:, 4].copy(),
    )


def apply_degradation(
    params: EcmParams, cycle_index: int, schedule: DegradationSchedule
) -> EcmParams:
    """Age ``params`` by ``cycle_index`` cycles of ``schedule``."""
    if cycle_index < 0:
        raise DomainError(f"cycle_index must be >= 0, got {cycle_index}")
    if cycle_index == 0:
        return params
    capacity = params.capacity_full * (1.0 - schedule.capacity_fade_per_cycle) ** cycle_index
    if capacity <= 0:
        raise ConfigError(f"capacity fades to {capacity} Ah at cycle index {cycle_index}")
    growth = (1.0 + schedule.resistance_growth_per_cycle) ** cycle_index
    return params.model_copy(
        update={
            "capacity_full": capacity,
            "r_ohmic": params.r_ohmic * growth,
            "r_pol": params.r_pol * growth,
        }
    )


def fleet_cell_params(config: FleetConfig) -> dict[str, EcmParams]:
    """Undegraded parameters of every cell; cell 1 is the unjittered reference."""
    rng = np.random.default_rng(config.seed)
    cells: dict[str, EcmParams] = {}
    for index in range(config.n_cells):
        params = config.base_params
        if index > 0 and config.param_jitter:
            update = {}
            for name in sorted(config.param_jitter):
                spread = config.param_jitter[name]
                update[name] = getattr(params, name) * (1.0 + spread * rng.uniform(-1.0, 1.0))
            params = params.model_copy(update=update)
        cells[config.cell_id(index)] = params
    return cells


def _simulate_cell(
    args: tuple[FleetConfig, str, int, EcmParams],
) -> tuple[list[CycleRecord], list[SohLabel]]:
    config, cell_id, index, params = args
    records, labels = [], []
    for cycle in range(1, config.n_cycles + 1):
        aged = apply_degradation(params, cycle - 1, config.schedule)
        state0 = CellState(soc=0.0, u_pol=0.0, capacity_full=aged.capacity_full)
        record = simulate_charge_cycle(
            aged,
            state0,
            config.protocol,
            noise_seed=[config.seed, index, cycle],
            noise_sigma=config.schedule.noise_sigma,
            arrhenius_k=config.arrhenius_k,
            cell_id=cell_id,
            cycle=cycle,
        )
        records.append(record)
        labels.append(SohLabel.from_capacities(aged.capacity_full, aged.capacity_nom))
    return records, labels


def generate_fleet(
    config: FleetConfig, jobs: int = 1, progress: bool = False
) -> tuple[list[CycleRecord], list[SohLabel]]:
    """Simulate every cycle of every cell.

    Returns records and labels aligned index by index, ordered by cell then
    cycle. Output is independent of ``jobs``.
    """
    cells = fleet_cell_params(config)
    tasks = [(config, cid, i, params) for i, (cid, params) in enumerate(cells.items())]
    logger.info(
        f"Simulating fleet '{config.name}': {config.n_cells} cells x {config.n_cycles} cycles"
    )

    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(
                tqdm(pool.map(_simulate_cell, tasks), total=len(tasks), disable=not progress)
            )
    else:
        results = [_simulate_cell(t) for t in tqdm(tasks, disable=not progress)]

    records: list[CycleRecord] = []
    labels: list[SohLabel] = []
    for cell_records, cell_labels in results:
        records.extend(cell_records)
        labels.extend(cell_labels)
    return records, labels
