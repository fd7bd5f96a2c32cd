import json
import math

import pytest

from dsmsched.errors import InputError, PowerFlowError, TopologyError
from dsmsched.feeder import (
    BusState,
    FeederLine,
    FeederModel,
    SlotInjections,
    VoltageViolation,
    feeder_loss,
    incremental_home_loss,
    load_feeder_json,
    solve_power_flow,
    voltage_band_check,
    write_feeder_json,
    zero_home,
)
from dsmsched.feeder import canonical_feeder as build_canonical_feeder
from pf_reference import nr_two_bus


def two_bus(r=0.02, x=0.012, base_kva=50.0) -> FeederModel:
    return FeederModel(
        base_kva=base_kva,
        base_kv=12.47,
        slack_voltage_pu=1.0,
        lines=(FeederLine(from_bus=0, to_bus=1, r_pu=r, x_pu=x),),
        smart_home_bus=1,
    )


def chain(n_lines=3, r=0.01, x=0.006, home=None) -> FeederModel:
    home = n_lines if home is None else home
    return FeederModel(
        base_kva=50.0,
        base_kv=12.47,
        slack_voltage_pu=1.0,
        lines=tuple(
            FeederLine(from_bus=b, to_bus=b + 1, r_pu=r, x_pu=x) for b in range(n_lines)
        ),
        smart_home_bus=home,
    )


def inj(feeder, p, q=None, pv=0.0, slot=1) -> SlotInjections:
    q = [0.0] * feeder.bus_count if q is None else q
    return SlotInjections(slot=slot, p_kw=tuple(p), q_kvar=tuple(q), pv_kw=pv)


class TestTopology:
    def test_line_validation(self):
        with pytest.raises(TopologyError, match="itself"):
            FeederLine(from_bus=2, to_bus=2, r_pu=0.01, x_pu=0.01)
        with pytest.raises(TopologyError, match="negative"):
            FeederLine(from_bus=0, to_bus=1, r_pu=-0.01, x_pu=0.01)

    def test_bus_ids_must_be_contiguous(self):
        with pytest.raises(TopologyError, match="contiguous"):
            FeederModel(
                base_kva=50, base_kv=12.47, slack_voltage_pu=1.0,
                lines=(FeederLine(0, 2, 0.01, 0.01),),
                smart_home_bus=2,
            )

    def test_line_count_must_form_tree(self):
        lines = (
            FeederLine(0, 1, 0.01, 0.01),
            FeederLine(1, 2, 0.01, 0.01),
            FeederLine(0, 2, 0.01, 0.01),  # cycle
        )
        with pytest.raises(TopologyError, match="tree"):
            FeederModel(base_kva=50, base_kv=12.47, slack_voltage_pu=1.0,
                        lines=lines, smart_home_bus=2)

    def test_disconnected_component(self):
        lines = (
            FeederLine(0, 1, 0.01, 0.01),
            FeederLine(1, 0, 0.01, 0.01),  # duplicate edge eats the budget
            FeederLine(2, 3, 0.01, 0.01),
        )
        with pytest.raises(TopologyError, match="not connected"):
            FeederModel(base_kva=50, base_kv=12.47, slack_voltage_pu=1.0,
                        lines=lines, smart_home_bus=3)

    def test_smart_home_must_sit_at_the_end(self):
        with pytest.raises(TopologyError, match="end of the feeder"):
            chain(n_lines=3, home=1)
        with pytest.raises(TopologyError, match="not a house bus"):
            chain(n_lines=3, home=0)

    def test_bus_lists(self):
        feeder = chain(n_lines=4)
        assert feeder.bus_count == 5
        assert feeder.house_buses == (1, 2, 3, 4)
        assert feeder.neighbor_buses == (1, 2, 3)

    def test_base_validation(self):
        with pytest.raises(TopologyError):
            FeederModel(base_kva=0, base_kv=12.47, slack_voltage_pu=1.0,
                        lines=(FeederLine(0, 1, 0.01, 0.01),), smart_home_bus=1)
        with pytest.raises(TopologyError):
            FeederModel(base_kva=50, base_kv=12.47, slack_voltage_pu=0.0,
                        lines=(FeederLine(0, 1, 0.01, 0.01),), smart_home_bus=1)


def test_injection_validation():
    with pytest.raises(ValueError):
        SlotInjections(slot=1, p_kw=(0.0, 1.0), q_kvar=(0.0,))
    with pytest.raises(ValueError):
        SlotInjections(slot=1, p_kw=(0.0, -1.0), q_kvar=(0.0, 0.0))
    with pytest.raises(ValueError):
        SlotInjections(slot=1, p_kw=(0.0, 1.0), q_kvar=(0.0, 0.0), pv_kw=-2.0)


class TestSolve:
    def test_unloaded_feeder_is_flat(self):
        feeder = chain(n_lines=5)
        state = solve_power_flow(feeder, inj(feeder, [0.0] * 6))
        assert state.voltage_magnitudes() == pytest.approx([1.0] * 6, abs=1e-15)
        assert state.loss_kw == 0.0
        assert state.slack_p_kw == 0.0
        assert feeder_loss(state) == 0.0

    def test_matches_newton_raphson_on_two_bus(self):
        feeder = two_bus(r=0.03, x=0.018)
        p_kw, q_kvar = 12.0, 4.0
        state = solve_power_flow(feeder, inj(feeder, [0.0, p_kw], [0.0, q_kvar]))
        expected = nr_two_bus(0.03, 0.018, p_kw / 50.0, q_kvar / 50.0)
        assert abs(state.voltages[1] - expected) < 1e-8

    def test_matches_resistive_closed_form(self):
        # pure resistance, pure P: v^2 - v + r p = 0
        r, p_kw = 0.05, 8.0
        feeder = two_bus(r=r, x=0.0)
        state = solve_power_flow(feeder, inj(feeder, [0.0, p_kw]))
        p_pu = p_kw / 50.0
        v_expected = (1 + math.sqrt(1 - 4 * r * p_pu)) / 2
        assert abs(state.voltages[1]) == pytest.approx(v_expected, abs=1e-10)
        # loss = r * (p/v)^2 in pu
        i_pu = p_pu / v_expected
        assert state.loss_kw == pytest.approx(r * i_pu**2 * 50.0, abs=1e-9)

    def test_slack_covers_load_plus_loss(self):
        feeder = chain(n_lines=4)
        p = [0.0, 3.0, 1.5, 0.0, 6.0]
        q = [0.0, 1.0, 0.5, 0.0, 2.0]
        state = solve_power_flow(feeder, inj(feeder, p, q))
        assert state.slack_p_kw == pytest.approx(sum(p) + state.loss_kw, abs=1e-9)
        assert state.slack_q_kvar == pytest.approx(sum(q) + state.loss_kvar, abs=1e-9)

    def test_voltage_drops_along_a_loaded_chain(self):
        feeder = chain(n_lines=4)
        state = solve_power_flow(feeder, inj(feeder, [0.0, 1.0, 1.0, 1.0, 5.0]))
        mags = state.voltage_magnitudes()
        assert all(a > b for a, b in zip(mags, mags[1:]))

    def test_pv_at_the_end_bus_raises_every_voltage(self):
        feeder = chain(n_lines=4)
        p = [0.0, 2.0, 2.0, 1.0, 3.0]
        without = solve_power_flow(feeder, inj(feeder, p))
        with_pv = solve_power_flow(feeder, inj(feeder, p, pv=2.5))
        for a, b in zip(with_pv.voltage_magnitudes(), without.voltage_magnitudes()):
            assert a >= b - 1e-12

    def test_overload_raises_with_diagnostics(self):
        feeder = two_bus(r=0.3, x=0.2)
        with pytest.raises(PowerFlowError) as err:
            solve_power_flow(feeder, inj(feeder, [0.0, 60.0]))
        assert err.value.iterations >= 1

    def test_wrong_injection_width(self):
        feeder = chain(n_lines=2)
        with pytest.raises(ValueError, match="buses"):
            solve_power_flow(feeder, SlotInjections(slot=1, p_kw=(0.0,), q_kvar=(0.0,)))

    def test_deterministic(self):
        feeder = chain(n_lines=3)
        a = solve_power_flow(feeder, inj(feeder, [0.0, 1.0, 2.0, 3.0]))
        b = solve_power_flow(feeder, inj(feeder, [0.0, 1.0, 2.0, 3.0]))
        assert a == b


class TestHomeAttribution:
    def test_zero_home_strips_demand_and_pv(self):
        feeder = chain(n_lines=2)
        original = inj(feeder, [0.0, 2.0, 4.0], [0.0, 0.5, 1.5], pv=3.0)
        stripped = zero_home(original, feeder)
        assert stripped.p_kw == (0.0, 2.0, 0.0)
        assert stripped.q_kvar == (0.0, 0.5, 0.0)
        assert stripped.pv_kw == 0.0
        assert original.p_kw[2] == 4.0  # untouched

    def test_incremental_loss_positive_when_home_draws(self):
        feeder = chain(n_lines=2)
        loaded = inj(feeder, [0.0, 2.0, 4.0])
        assert incremental_home_loss(feeder, loaded) > 0.0

    def test_incremental_loss_floors_at_zero_under_export(self):
        # home exports more PV than it draws; its marginal loss contribution
        # is negative and must not become a credit
        feeder = chain(n_lines=2)
        exporting = inj(feeder, [0.0, 5.0, 0.0], pv=4.0)
        assert incremental_home_loss(feeder, exporting) == 0.0


def test_voltage_band_check_filters():
    state = BusState(
        slot=7,
        voltages=(1.0 + 0j, 0.97 + 0j, 0.94 + 0j, 1.06 + 0j),
        loss_kw=0.0, loss_kvar=0.0, slack_p_kw=0.0, slack_q_kvar=0.0, iterations=1,
    )
    violations = voltage_band_check([state], v_min=0.95, v_max=1.05)
    assert violations == [
        VoltageViolation(slot=7, bus=2, v_pu=0.94),
        VoltageViolation(slot=7, bus=3, v_pu=1.06),
    ]


class TestFeederJson:
    def test_round_trip(self, tmp_path):
        feeder = chain(n_lines=3)
        p = tmp_path / "feeder.json"
        write_feeder_json(p, feeder)
        again = load_feeder_json(p)
        assert again == feeder

    def test_bad_json(self, tmp_path):
        p = tmp_path / "feeder.json"
        p.write_text("{nope")
        with pytest.raises(InputError, match="invalid JSON"):
            load_feeder_json(p)

    def test_missing_key(self, tmp_path):
        p = tmp_path / "feeder.json"
        p.write_text(json.dumps({"base_kva": 50}))
        with pytest.raises(InputError, match="bad feeder"):
            load_feeder_json(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(InputError, match="cannot read"):
            load_feeder_json(tmp_path / "nope.json")


def test_canonical_feeder_layout(canonical_feeder):
    built = build_canonical_feeder()
    assert canonical_feeder == built  # fixture file mirrors the builder
    assert built.bus_count == 14
    assert built.smart_home_bus == 13
    assert len(built.neighbor_buses) == 12
    assert all(ln.r_pu == 0.006 and ln.x_pu == 0.00375 for ln in built.lines)
