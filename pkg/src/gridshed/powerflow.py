"""Newton-Raphson AC power flow, line flows, connectivity, frequency proxy.

Full-Jacobian polar Newton iteration with no PV/PQ switching: PV buses hold
their setpoint voltage regardless of reactive limits, and any violations are
reported in the solution diagnostics instead of being enforced.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from gridshed import derivatives as dv
from gridshed.netcase import PQ, PV, SLACK, NetworkCase, build_admittance


class PowerFlowError(RuntimeError):
    """Structural failure (singular Jacobian, disconnected network)."""


@dataclass(frozen=True, eq=False)
class PowerFlowSolution:
    v: np.ndarray            # pu magnitude per bus (case order)
    theta: np.ndarray        # radians per bus
    p_g: np.ndarray          # realized real output per in-service gen, pu
    q_g: np.ndarray          # realized reactive output per in-service gen, pu
    converged: bool
    iterations: int
    max_mismatch: float      # pu, infinity norm at exit
    q_violations: tuple[tuple[int, float, float, float], ...]  # (bus, q_g, lo, hi) MVAr

    def gen_total_p(self) -> float:
        """Total realized generation, pu."""
        return float(np.sum(self.p_g))


@dataclass(frozen=True)
class ConnectivityReport:
    connected: bool
    islands: tuple[frozenset[int], ...]  # bus-id components without the slack


@dataclass(frozen=True, eq=False)
class LineFlowSet:
    """Both-end complex flows for the in-service branches of a solved case.

    Flows are bus-side oriented: ``s_from[k]`` is the power leaving the from
    bus into branch ``branch_index[k]`` (pu), likewise ``s_to`` at the to bus.
    """
    branch_index: tuple[int, ...]
    from_bus: tuple[int, ...]
    to_bus: tuple[int, ...]
    s_from: np.ndarray
    s_to: np.ndarray

    def row_of(self, branch_idx: int) -> int | None:
        try:
            return self.branch_index.index(branch_idx)
        except ValueError:
            return None

    def bus_side(self, branch_idx: int, bus_id: int) -> complex:
        """Flow leaving ``bus_id`` into the branch; raises if not an endpoint."""
        row = self.row_of(branch_idx)
        if row is None:
            raise KeyError(f"branch {branch_idx} is out of service")
        if self.from_bus[row] == bus_id:
            return complex(self.s_from[row])
        if self.to_bus[row] == bus_id:
            return complex(self.s_to[row])
        raise KeyError(f"bus {bus_id} is not an endpoint of branch {branch_idx}")


def check_connectivity(case: NetworkCase) -> ConnectivityReport:
    """BFS over in-service branches.

    The largest component is taken as the main grid (ties broken in favor of
    the slack's component, then by lowest bus id); every other component is
    an island. ``connected`` means there is exactly one component.
    """
    adj: dict[int, set[int]] = {b.id: set() for b in case.buses}
    for br in case.branches:
        if br.in_service:
            adj[br.from_bus].add(br.to_bus)
            adj[br.to_bus].add(br.from_bus)
    rest = {b.id for b in case.buses}
    components: list[frozenset[int]] = []
    while rest:
        start = min(rest)
        comp = {start}
        queue = deque([start])
        while queue:
            u = queue.popleft()
            for w in adj[u]:
                if w in rest and w not in comp:
                    comp.add(w)
                    queue.append(w)
        components.append(frozenset(comp))
        rest -= comp
    slack_id = case.buses[case.slack_position()].id
    main = max(components, key=lambda c: (len(c), slack_id in c, -min(c)))
    islands = sorted((c for c in components if c is not main), key=min)
    return ConnectivityReport(connected=len(components) == 1,
                              islands=tuple(islands))


def _setpoints(case: NetworkCase):
    """Per-bus specified injections (pu) and PV/slack voltage setpoints."""
    n = case.n_buses
    pos = case.bus_index()
    base = case.base_mva
    p_spec = -np.array([b.p_d for b in case.buses]) / base
    q_spec = -np.array([b.q_d for b in case.buses]) / base
    v_set = np.ones(n)
    for g in case.active_gens():
        i = pos[g.bus]
        p_spec[i] += g.p_set / base
        q_spec[i] += g.q_set / base
        if case.buses[i].kind in (PV, SLACK):
            v_set[i] = g.v_set
    return p_spec, q_spec, v_set


def solve_power_flow(case: NetworkCase, start: PowerFlowSolution | str = "flat",
                     tol: float = 1e-8, max_iter: int = 20,
                     damping: float = 1.0, linear_solver="dense") -> PowerFlowSolution:
    """Polar Newton-Raphson power flow.

    ``start`` is "flat" (setpoint magnitudes at generator buses, 1.0 pu
    elsewhere, zero angles) or a previous solution for a warm start.
    ``linear_solver`` selects the Newton-step solve: "dense", "sparse", or a
    callable ``(jacobian, rhs) -> step``. Convergence is checked before the
    first correction, so an already-solved state costs zero iterations.
    """
    report = check_connectivity(case)
    if not report.connected:
        raise PowerFlowError(f"network is disconnected ({len(report.islands)} island(s))")
    if isinstance(linear_solver, str):
        if linear_solver == "dense":
            lin_solve = np.linalg.solve
        elif linear_solver == "sparse":
            from scipy.sparse import csr_matrix
            from scipy.sparse.linalg import spsolve
            lin_solve = lambda a, rhs: spsolve(csr_matrix(a), rhs)
        else:
            raise ValueError(f"unknown linear_solver {linear_solver!r}")
    else:
        lin_solve = linear_solver

    n = case.n_buses
    ybus = build_admittance(case).ybus()
    p_spec, q_spec, v_set = _setpoints(case)
    kinds = np.array([b.kind for b in case.buses])
    pv_or_slack = (kinds == PV) | (kinds == SLACK)
    non_slack = np.flatnonzero(kinds != SLACK)
    pq = np.flatnonzero(kinds == PQ)

    if isinstance(start, PowerFlowSolution):
        vm = start.v.copy()
        va = start.theta.copy()
        vm[pv_or_slack] = v_set[pv_or_slack]
        va[case.slack_position()] = 0.0
    else:
        vm = np.where(pv_or_slack, v_set, 1.0)
        va = np.zeros(n)

    def mismatch(vm_, va_):
        s = dv.bus_injections(ybus, dv.complex_voltage(vm_, va_))
        dp = p_spec[non_slack] - s.real[non_slack]
        dq = q_spec[pq] - s.imag[pq]
        return np.concatenate([dp, dq])

    iterations = 0
    mis = mismatch(vm, va)
    max_mis = float(np.max(np.abs(mis))) if mis.size else 0.0
    while max_mis > tol and iterations < max_iter:
        v = dv.complex_voltage(vm, va)
        ds_dva, ds_dvm = dv.injection_jacobian(ybus, v)
        j11 = ds_dva.real[np.ix_(non_slack, non_slack)]
        j12 = ds_dvm.real[np.ix_(non_slack, pq)]
        j21 = ds_dva.imag[np.ix_(pq, non_slack)]
        j22 = ds_dvm.imag[np.ix_(pq, pq)]
        jac = np.block([[j11, j12], [j21, j22]])
        try:
            step = lin_solve(jac, mis)
        except np.linalg.LinAlgError as exc:
            raise PowerFlowError("singular Jacobian") from exc
        step = np.asarray(step, dtype=float)
        if not np.all(np.isfinite(step)):
            raise PowerFlowError("singular Jacobian")
        va[non_slack] += damping * step[:len(non_slack)]
        vm[pq] += damping * step[len(non_slack):]
        iterations += 1
        mis = mismatch(vm, va)
        max_mis = float(np.max(np.abs(mis))) if mis.size else 0.0

    converged = bool(max_mis <= tol)
    s = dv.bus_injections(ybus, dv.complex_voltage(vm, va))
    pos = case.bus_index()
    base = case.base_mva
    p_g, q_g, q_viol = [], [], []
    for g in case.active_gens():
        i = pos[g.bus]
        kind = case.buses[i].kind
        if kind == SLACK:
            pg = s.real[i] + case.buses[i].p_d / base
            qg = s.imag[i] + case.buses[i].q_d / base
        elif kind == PV:
            pg = g.p_set / base
            qg = s.imag[i] + case.buses[i].q_d / base
        else:
            pg = g.p_set / base
            qg = g.q_set / base
        p_g.append(pg)
        q_g.append(qg)
        q_mvar = qg * base
        if converged and not (g.q_min - 1e-9 <= q_mvar <= g.q_max + 1e-9):
            q_viol.append((g.bus, q_mvar, g.q_min, g.q_max))
    return PowerFlowSolution(
        v=vm, theta=va, p_g=np.array(p_g), q_g=np.array(q_g),
        converged=converged, iterations=iterations, max_mismatch=max_mis,
        q_violations=tuple(q_viol),
    )


def line_flows(case: NetworkCase, sol: PowerFlowSolution) -> LineFlowSet:
    """Both-end flows for every in-service branch of the solved case."""
    adm = build_admittance(case)
    pos = case.bus_index()
    live = [case.branches[k] for k in adm.branch_index]
    f_pos = np.array([pos[br.from_bus] for br in live], dtype=int)
    t_pos = np.array([pos[br.to_bus] for br in live], dtype=int)
    v = dv.complex_voltage(sol.v, sol.theta)
    s_from, s_to = dv.branch_flows(adm.y_from.toarray(), adm.y_to.toarray(),
                                   f_pos, t_pos, v)
    return LineFlowSet(
        branch_index=adm.branch_index,
        from_bus=tuple(br.from_bus for br in live),
        to_bus=tuple(br.to_bus for br in live),
        s_from=s_from, s_to=s_to,
    )


def frequency_proxy(pre_gen_total: float, post_gen_total: float,
                    beta: float = 10.0, f0: float = 60.0) -> float:
    """System frequency proxy from the steady-state generation change.

    A post-contingency rise in total generation (extra losses picked up by
    the slack) maps to a frequency dip: f = f0 - (post - pre) / beta, with
    ``beta`` in pu/Hz. The proxy is system-wide — every bus sees one value.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    return f0 - (post_gen_total - pre_gen_total) / beta
