import math

import numpy as np
import pytest

from batteryttt.core.ecm import (
    apply_degradation,
    derive_coefficients,
    fleet_cell_params,
    generate_fleet,
    inverse_ocv,
    ocv_lookup,
    simulate_charge_cycle,
    step_cell,
    temperature_factor,
    terminal_voltage,
)
from batteryttt.exceptions import ConfigError, DomainError, SimulationError
from batteryttt.schemas.ecm import (
    CellState,
    ChargeProtocol,
    CurrentConvention,
    DegradationSchedule,
    EcmParams,
)
from batteryttt.utils.presets import fleet_from_preset


def _params(**update) -> EcmParams:
    base = dict(
        r_ohmic=0.05,
        r_pol=0.03,
        c_pol=1000.0,
        ocv_table=[(0.0, 3.0), (1.0, 4.2)],
        capacity_nom=1.1,
    )
    base.update(update)
    return EcmParams(**base)


class TestOcv:
    def test_breakpoints_and_midpoint(self):
        params = _params()
        assert ocv_lookup(params, 0.0) == pytest.approx(3.0)
        assert ocv_lookup(params, 0.5) == pytest.approx(3.6)

    def test_three_point_table(self):
        params = _params(ocv_table=[(0.0, 3.0), (0.5, 3.5), (1.0, 4.2)])
        assert ocv_lookup(params, 0.75) == pytest.approx(3.85)

    def test_out_of_range_soc(self):
        with pytest.raises(DomainError):
            ocv_lookup(_params(), 1.1)
        with pytest.raises(DomainError):
            ocv_lookup(_params(), -0.01)

    def test_inverse_lookup(self):
        assert inverse_ocv(_params(), 3.6) == pytest.approx(0.5)

    def test_non_monotone_table_rejected(self):
        with pytest.raises(ValueError):
            _params(ocv_table=[(0.0, 3.5), (1.0, 3.0)])


class TestCoefficients:
    def test_calce_values(self):
        coeffs = derive_coefficients(_params())
        assert coeffs.theta1 == pytest.approx(0.08 / 30.0)
        assert coeffs.theta2 == pytest.approx(1.0 / 30.0)

    def test_ratio_is_total_resistance(self):
        params = _params(r_ohmic=0.071, r_pol=0.013, c_pol=4321.0)
        coeffs = derive_coefficients(params)
        assert coeffs.theta1 / coeffs.theta2 == pytest.approx(0.084, rel=1e-12)

    def test_large_capacitance_limit(self):
        coeffs = derive_coefficients(_params(r_pol=0.03, c_pol=1e9))
        assert coeffs.theta2 == pytest.approx(1.0 / (1e9 * 0.03), rel=1e-12)
        assert coeffs.theta2 < 1e-7

    def test_arrhenius_factor(self):
        assert temperature_factor(25.0, 3000.0) == pytest.approx(1.0)
        assert temperature_factor(0.0, 3000.0) > 1.0
        assert temperature_factor(45.0, 3000.0) < 1.0
        assert temperature_factor(0.0, -3000.0) < 1.0
        assert temperature_factor(-10.0, 0.0) == 1.0

    def test_cold_cell_has_slower_polarization(self):
        cold = derive_coefficients(_params(), temperature=0.0, arrhenius_k=3000.0)
        warm = derive_coefficients(_params(), temperature=25.0, arrhenius_k=3000.0)
        factor = math.exp(3000.0 * (1.0 / 273.15 - 1.0 / 298.15))
        assert cold.theta2 == pytest.approx(warm.theta2 / factor, rel=1e-12)
        assert cold.theta1 / cold.theta2 == pytest.approx(0.08 * factor, rel=1e-12)


class TestStepCell:
    def test_equilibrium(self):
        state = step_cell(CellState(soc=0.5, u_pol=0.0, capacity_full=1.1), _params(), 0.0, 10.0)
        assert state.u_pol == 0.0
        assert state.soc == 0.5

    def test_relaxation(self):
        state = CellState(soc=0.5, u_pol=0.1, capacity_full=1.1)
        assert step_cell(state, _params(), 0.0, 30.0).u_pol == pytest.approx(0.1 * math.exp(-1.0))

    def test_steady_state(self):
        params = _params()
        state = CellState(soc=0.0, u_pol=0.0, capacity_full=1000.0)
        for _ in range(100):
            state = step_cell(state, params, 1.0, 10.0)
        assert state.u_pol == pytest.approx(0.03, rel=1e-9)

    def test_matches_fine_euler_integration(self):
        params = _params(r_pol=0.03, c_pol=2000.0)
        current, dt, n_sub = 1.0, 10.0, 1000
        exact = step_cell(CellState(soc=0.2, u_pol=0.0, capacity_full=1.1), params, current, dt)
        u, h = 0.0, dt / n_sub
        for _ in range(n_sub):
            u += h * (current / params.c_pol - u / params.tau)
        assert abs(exact.u_pol - u) < 1e-6

    def test_soc_bookkeeping_and_clamp(self):
        params = _params()
        state = CellState(soc=0.0, u_pol=0.0, capacity_full=1.1)
        assert step_cell(state, params, 1.1, 360.0).soc == pytest.approx(0.1)
        assert step_cell(state, params, 1.1, 36000.0).soc == 1.0
        discharge = step_cell(
            CellState(soc=0.5, u_pol=0.0, capacity_full=1.1),
            params, 1.1, 360.0, CurrentConvention.DISCHARGE_POSITIVE,
        )
        assert discharge.soc == pytest.approx(0.4)

    def test_non_positive_dt(self):
        with pytest.raises(DomainError):
            step_cell(CellState(soc=0.5, u_pol=0.0, capacity_full=1.1), _params(), 1.0, 0.0)


class TestTerminalVoltage:
    def test_open_circuit(self):
        state = CellState(soc=0.5, u_pol=0.0, capacity_full=1.1)
        assert terminal_voltage(state, _params(), 0.0) == pytest.approx(3.6)

    def test_sign_conventions(self):
        state = CellState(soc=0.5, u_pol=0.0, capacity_full=1.1)
        params = _params()
        assert terminal_voltage(state, params, 1.0) == pytest.approx(3.65)
        assert terminal_voltage(
            state, params, 1.0, CurrentConvention.DISCHARGE_POSITIVE
        ) == pytest.approx(3.55)


class TestSimulateChargeCycle:
    def _protocol(self, **update) -> ChargeProtocol:
        base = dict(mode="CC-CV", current_rate=0.5, v_lower=3.05, v_upper=4.2,
                    cv_cutoff_current=0.055, dt=10.0)
        base.update(update)
        return ChargeProtocol(**base)

    def test_cc_terminates_at_upper_voltage(self):
        params = _params()
        record = simulate_charge_cycle(
            params, CellState(soc=0.0, u_pol=0.0, capacity_full=1.1), self._protocol(mode="CC")
        )
        assert record.voltage_v[0] >= 3.05
        assert record.voltage_v[-1] >= 4.2
        assert np.all(record.voltage_v[:-1] < 4.2)
        np.testing.assert_allclose(np.diff(record.t_s), 10.0)
        assert record.t_s[0] == 0.0
        np.testing.assert_allclose(record.current_a, 0.55)

    def test_cc_cv_ends_below_cutoff(self):
        params = _params()
        record = simulate_charge_cycle(
            params, CellState(soc=0.0, u_pol=0.0, capacity_full=1.1), self._protocol()
        )
        assert record.current_a[-1] <= 0.055
        assert np.all(np.diff(record.q_ah) >= 0)
        assert record.q_ah[0] == 0.0

    def test_charge_conservation(self):
        params = _params()
        record = simulate_charge_cycle(
            params, CellState(soc=0.0, u_pol=0.0, capacity_full=1.1), self._protocol()
        )
        i, t = record.current_a, record.t_s
        trapezoid = float(np.sum(0.5 * (i[1:] + i[:-1]) * np.diff(t))) / 3600.0
        assert abs(record.capacity_ah - trapezoid) <= i.max() * 10.0 / 3600.0

    def test_cc_capacity_matches_soc_window(self):
        params = _params()
        record = simulate_charge_cycle(
            params, CellState(soc=0.0, u_pol=0.0, capacity_full=1.1), self._protocol(mode="CC")
        )
        window = record.soc[-1] - record.soc[0]
        assert record.capacity_ah == pytest.approx(1.1 * window, abs=0.55 * 10.0 / 3600.0)

    def test_deterministic_noise(self):
        params = _params()
        state = CellState(soc=0.0, u_pol=0.0, capacity_full=1.1)
        a = simulate_charge_cycle(params, state, self._protocol(), noise_seed=3, noise_sigma=0.002)
        b = simulate_charge_cycle(params, state, self._protocol(), noise_seed=3, noise_sigma=0.002)
        np.testing.assert_array_equal(a.voltage_v, b.voltage_v)

    def test_step_limit(self):
        with pytest.raises(SimulationError):
            simulate_charge_cycle(
                _params(),
                CellState(soc=0.0, u_pol=0.0, capacity_full=1.1),
                self._protocol(max_steps=5),
            )


class TestDegradation:
    def test_identity_at_zero(self):
        params = _params()
        assert apply_degradation(params, 0, DegradationSchedule(capacity_fade_per_cycle=0.01)) is params

    def test_fade_closed_form(self):
        schedule = DegradationSchedule(capacity_fade_per_cycle=0.001)
        aged = apply_degradation(_params(), 100, schedule)
        assert aged.capacity_full / 1.1 == pytest.approx(0.90479, abs=1e-5)
        assert aged.r_ohmic == 0.05

    def test_resistance_growth(self):
        schedule = DegradationSchedule(resistance_growth_per_cycle=0.01)
        aged = apply_degradation(_params(), 10, schedule)
        assert aged.r_ohmic == pytest.approx(0.05 * 1.01**10)
        assert aged.r_pol == pytest.approx(0.03 * 1.01**10)

    def test_negative_index(self):
        with pytest.raises(DomainError):
            apply_degradation(_params(), -1, DegradationSchedule())

    def test_capacity_underflow(self):
        with pytest.raises(ConfigError):
            apply_degradation(_params(), 200, DegradationSchedule(capacity_fade_per_cycle=0.999))


class TestFleet:
    def test_labels(self):
        fleet = fleet_from_preset("calce", n_cells=2, n_cycles=4, seed=5)
        fleet = fleet.model_copy(
            update={"schedule": fleet.schedule.model_copy(update={"noise_sigma": 0.0})}
        )
        records, labels = generate_fleet(fleet)
        assert len(records) == len(labels) == 8
        assert records[0].cell_id == "calce_001"
        assert labels[0].soh_pct == pytest.approx(100.0)
        first_cell = [lab.soh_pct for rec, lab in zip(records, labels) if rec.cell_id == "calce_001"]
        assert all(b < a for a, b in zip(first_cell, first_cell[1:]))
        assert first_cell[-1] == pytest.approx(100.0 * (1 - 0.0015) ** 3)

    def test_reference_cell_unjittered(self):
        fleet = fleet_from_preset("calce", n_cells=3, n_cycles=1, seed=2)
        cells = fleet_cell_params(fleet)
        assert cells["calce_001"] == fleet.base_params
        assert cells["calce_002"].r_ohmic != fleet.base_params.r_ohmic

    def test_deterministic(self):
        fleet = fleet_from_preset("sanyo", n_cells=1, n_cycles=2, seed=9)
        a, _ = generate_fleet(fleet)
        b, _ = generate_fleet(fleet)
        for ra, rb in zip(a, b):
            np.testing.assert_array_equal(ra.voltage_v, rb.voltage_v)
            np.testing.assert_array_equal(ra.q_ah, rb.q_ah)

    def test_parallel_matches_serial(self):
        fleet = fleet_from_preset("calce", n_cells=2, n_cycles=2, seed=4)
        serial, _ = generate_fleet(fleet, jobs=1)
        parallel, _ = generate_fleet(fleet, jobs=2)
        assert [(r.cell_id, r.cycle) for r in serial] == [(r.cell_id, r.cycle) for r in parallel]
        for ra, rb in zip(serial, parallel):
            np.testing.assert_array_equal(ra.voltage_v, rb.voltage_v)
