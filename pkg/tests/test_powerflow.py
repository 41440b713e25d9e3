"""Power-flow solver tests against closed forms and independent solvers."""

import numpy as np
import pytest

from gridshed.derivatives import bus_injections, complex_voltage
from gridshed.netcase import apply_outage, build_admittance, load_case14
from gridshed.powerflow import (
    PowerFlowError,
    check_connectivity,
    frequency_proxy,
    line_flows,
    solve_power_flow,
)

from _cases import two_bus_analytic_solution, two_bus_case, two_bus_zero_demand
from _reference import reference_pf, union_find_connected

# Published operating point shipped with the 14-bus case (magnitudes in pu,
# angles in degrees, bus order 1..14).
CASE14_VM = np.array([1.06, 1.045, 1.01, 1.019, 1.02, 1.07, 1.062,
                      1.09, 1.056, 1.051, 1.057, 1.055, 1.05, 1.036])
CASE14_VA = np.array([0.0, -4.98, -12.72, -10.33, -8.78, -14.22, -13.37,
                      -13.36, -14.94, -15.10, -14.79, -15.07, -15.16, -16.04])


class TestTwoBus:
    def test_matches_closed_form(self):
        case = two_bus_case(p_mw=50.0, x=0.1)
        sol = solve_power_flow(case, tol=1e-12)
        v2, theta2 = two_bus_analytic_solution(p_mw=50.0, x=0.1)
        assert sol.converged
        assert abs(sol.v[1] - v2) <= 1e-10
        assert abs(sol.theta[1] - theta2) <= 1e-10
        assert sol.v[0] == 1.0 and sol.theta[0] == 0.0
        # Lossless line: the slack exactly covers the load.
        assert abs(sol.p_g[0] - 0.5) <= 1e-10

    def test_zero_demand_needs_no_iterations(self):
        sol = solve_power_flow(two_bus_zero_demand())
        assert sol.converged
        assert sol.iterations == 0
        np.testing.assert_allclose(sol.v, 1.0, atol=0)
        np.testing.assert_allclose(sol.theta, 0.0, atol=0)

    def test_infeasible_load_reports_divergence(self):
        # 600 MW over a 0.1 pu reactance is beyond the static transfer limit.
        case = two_bus_case(p_mw=600.0, x=0.1)
        sol = solve_power_flow(case)
        assert not sol.converged
        assert sol.iterations == 20
        assert sol.max_mismatch > 1e-8


class TestCase14:
    def test_matches_shipped_operating_point(self):
        sol = solve_power_flow(load_case14())
        assert sol.converged
        assert np.max(np.abs(sol.v - CASE14_VM)) <= 2e-3
        assert np.max(np.abs(np.degrees(sol.theta) - CASE14_VA)) <= 2e-2

    def test_agrees_with_independent_root_finder(self):
        case = load_case14()
        sol = solve_power_flow(case)
        vm_ref, va_ref = reference_pf(case)
        assert np.max(np.abs(sol.v - vm_ref)) <= 1e-8
        assert np.max(np.abs(sol.theta - va_ref)) <= 1e-8

    def test_residual_mismatch_below_tolerance(self):
        case = load_case14()
        sol = solve_power_flow(case, tol=1e-8)
        ybus = build_admittance(case).ybus()
        s = bus_injections(ybus, complex_voltage(sol.v, sol.theta))
        base = case.base_mva
        pos = case.bus_index()
        p_spec = -np.array([b.p_d for b in case.buses]) / base
        q_spec = -np.array([b.q_d for b in case.buses]) / base
        for g in case.active_gens():
            p_spec[pos[g.bus]] += g.p_set / base
        kinds = [b.kind for b in case.buses]
        dp = [p_spec[i] - s.real[i] for i in range(14) if kinds[i] != "slack"]
        dq = [q_spec[i] - s.imag[i] for i in range(14) if kinds[i] == "PQ"]
        assert np.max(np.abs(dp + dq)) <= 1e-8

    def test_complex_power_conservation(self):
        case = load_case14()
        sol = solve_power_flow(case)
        flows = line_flows(case, sol)
        v = complex_voltage(sol.v, sol.theta)
        injections = bus_injections(build_admittance(case).ybus(), v)
        shunt = sum(
            abs(v[i]) ** 2 * complex(b.shunt_g, -b.shunt_b)
            for i, b in enumerate(case.buses)
        )
        total_branch = np.sum(flows.s_from) + np.sum(flows.s_to)
        assert abs(np.sum(injections) - (total_branch + shunt)) <= 1e-10

    def test_reports_setpoint_reactive_violations(self):
        # The shipped operating point was solved without enforcing reactive
        # limits, so at least one generator sits outside its band.
        sol = solve_power_flow(load_case14())
        assert sol.converged
        violated = {v[0] for v in sol.q_violations}
        assert 1 in violated
        for bus, q_mvar, lo, hi in sol.q_violations:
            assert q_mvar < lo or q_mvar > hi

    def test_warm_start_converges_in_one_iteration(self):
        case = load_case14()
        cold = solve_power_flow(case)
        assert cold.iterations >= 2
        warm = solve_power_flow(case, start=cold)
        assert warm.converged
        assert warm.iterations <= 1

    def test_linear_solver_backends_agree(self):
        case = load_case14()
        dense = solve_power_flow(case, linear_solver="dense")
        sparse = solve_power_flow(case, linear_solver="sparse")
        assert np.max(np.abs(dense.v - sparse.v)) <= 1e-10
        assert np.max(np.abs(dense.theta - sparse.theta)) <= 1e-10

    def test_custom_linear_solver_callable(self):
        calls = []

        def solver(jac, rhs):
            calls.append(jac.shape)
            return np.linalg.solve(jac, rhs)

        sol = solve_power_flow(load_case14(), linear_solver=solver)
        assert sol.converged
        # 13 angle unknowns + 9 magnitude unknowns for the 14-bus system.
        assert calls and all(shape == (22, 22) for shape in calls)


class TestLineFlows:
    def test_bus_side_orientation_and_kcl(self):
        case = load_case14()
        sol = solve_power_flow(case)
        flows = line_flows(case, sol)
        base = case.base_mva
        # Sum of bus-side flows at a pure load bus equals the negative of its
        # injection, i.e. the demand it draws.
        for bus in (9, 14):
            i = case.bus_index()[bus]
            incident = [
                k for k in flows.branch_index
                if case.branches[k].from_bus == bus or case.branches[k].to_bus == bus
            ]
            total = sum(flows.bus_side(k, bus) for k in incident)
            b = case.buses[i]
            shunt = abs(sol.v[i]) ** 2 * complex(b.shunt_g, -b.shunt_b)
            expected = complex(-b.p_d / base, -b.q_d / base) - shunt
            assert abs(total - expected) <= 1e-8

    def test_unknown_endpoint_rejected(self):
        case = load_case14()
        flows = line_flows(case, solve_power_flow(case))
        with pytest.raises(KeyError):
            flows.bus_side(0, 14)  # branch 0 joins buses 1 and 2

    def test_outaged_branch_absent(self):
        case = apply_outage(load_case14(), [0])
        flows = line_flows(case, solve_power_flow(case))
        assert flows.row_of(0) is None
        assert 0 not in flows.branch_index
        assert len(flows.branch_index) == 19


class TestConnectivity:
    def test_intact_case_is_connected(self):
        report = check_connectivity(load_case14())
        assert report.connected
        assert report.islands == ()

    def test_bridge_outage_islands_bus_8(self):
        report = check_connectivity(apply_outage(load_case14(), [13]))
        assert not report.connected
        assert report.islands == (frozenset({8}),)

    def test_slack_can_be_islanded(self):
        # Removing both lines at bus 1 strands the slack; the 13-bus remainder
        # is still the main grid.
        report = check_connectivity(apply_outage(load_case14(), [0, 1]))
        assert not report.connected
        assert report.islands == (frozenset({1}),)

    def test_single_line_outages_have_one_bridge(self):
        case = load_case14()
        connected = [
            k for k in range(len(case.branches))
            if check_connectivity(apply_outage(case, [k])).connected
        ]
        assert len(connected) == 19
        assert set(range(20)) - set(connected) == {13}

    def test_power_flow_refuses_disconnected_network(self):
        with pytest.raises(PowerFlowError):
            solve_power_flow(apply_outage(load_case14(), [13]))

    def test_matches_union_find_on_random_outages(self):
        case = load_case14()
        rng = np.random.default_rng(7)
        for _ in range(40):
            k = int(rng.integers(1, 6))
            out = rng.choice(20, size=k, replace=False)
            damaged = apply_outage(case, [int(i) for i in out])
            report = check_connectivity(damaged)
            connected, comps = union_find_connected(damaged)
            assert report.connected == connected
            main = max(comps, key=lambda c: (len(c), 1 in c, -min(c)))
            expected = tuple(sorted((c for c in comps if c is not main), key=min))
            assert report.islands == expected


class TestFrequencyProxy:
    def test_unchanged_generation_is_nominal(self):
        assert frequency_proxy(2.3, 2.3) == 60.0

    def test_generation_rise_dips_frequency(self):
        assert frequency_proxy(2.0, 3.0, beta=10.0) == pytest.approx(59.9)
        assert frequency_proxy(3.0, 2.0, beta=10.0) == pytest.approx(60.1)

    def test_rejects_nonpositive_beta(self):
        with pytest.raises(ValueError):
            frequency_proxy(1.0, 1.0, beta=0.0)
