"""Optimal load shedding as a nonlinear program over the AC equations.

Decision vector (per-unit): ``x = [v, theta, p_g, q_g, p_s, q_s]`` with one
voltage pair per bus, one dispatch pair per in-service generator, and one
shed pair per load bus. Power balance enters as equalities (shed acts like
generation), squared apparent-power limits enter as inequalities at both ends
of every rated branch, and everything else is a box: voltage bands, the
+-theta_bound angle window (slack angle pinned to zero), dispatch limits, and
shed limits ``0 <= p_s <= cap * p_d`` / ``0 <= q_s <= cap * max(q_d, 0)``.

Shedding physically disconnects load, and a disconnected block takes its
reactive draw with it in proportion: at every bus consuming both real and
reactive power the reactive share shed may not exceed the real share,
``q_s / q_d <= p_s / p_d``. Without that coupling the near-free reactive
shed variable would soak up all voltage stress and real shedding would never
occur on reactive-limited systems.

Shed power is priced far above generation so the optimizer only sheds what
feasibility forces: the linear coefficient of every shed variable must exceed
the steepest generator marginal cost by the dominance factor, which assembly
verifies. A configuration violating that ordering could make shedding look
profitable and is rejected outright.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from . import derivatives as dv
from .ipm import NlpProblem, NlpResult, solve_nlp
from .netcase import NetworkCase, build_admittance
from .powerflow import PowerFlowError, PowerFlowSolution, solve_power_flow

DOMINANCE = 100.0
_THETA_BOUND = 0.6  # radians, symmetric window on non-slack angles

# Objective coefficients beyond this per-unit magnitude are internally
# rescaled to keep the KKT system well conditioned; reported objectives and
# all solution quantities are unaffected.
_COEFF_CEILING = 1e4


class OlsError(RuntimeError):
    """Raised for unsolvable or malformed shedding problems."""


@dataclass(frozen=True)
class CostConfig:
    """Cost coefficients in natural units ($, MW, MVAr, h).

    ``shed_lin``/``shed_quad`` price real shed per load bus, and
    ``shed_q_lin``/``shed_q_quad`` price reactive shed. ``shed_cap`` limits
    the shed fraction of each bus demand. Arrays are aligned with the load
    buses of the case they were built for.
    """

    shed_lin: np.ndarray      # $/MWh
    shed_quad: np.ndarray     # $/MW^2 h
    shed_q_lin: np.ndarray    # $/MVArh
    shed_q_quad: np.ndarray   # $/MVAr^2 h
    shed_cap: float = 1.0

    @classmethod
    def for_case(
        cls,
        case: NetworkCase,
        dominance: float = DOMINANCE,
        reactive_weight: float = 1e-3,
        shed_cap: float = 1.0,
    ) -> "CostConfig":
        """Default pricing: the linear shed coefficient is ``dominance``
        times the steepest generator marginal cost, and the quadratic one is
        that amount spread over the smallest bus demand."""
        marg = _max_marginal_cost(case)
        if marg <= 0.0:
            raise OlsError(
                "cannot derive shed costs: every generator marginal cost is zero"
            )
        loads = load_buses(case)
        if not loads:
            raise OlsError("case has no load buses to shed")
        positive = [case.buses[case.bus_index()[b]].p_d for b in loads]
        positive = [p for p in positive if p > 0]
        min_pd = min(positive) if positive else 1.0
        n = len(loads)
        lin = dominance * marg
        quad = dominance * marg / min_pd
        return cls(
            shed_lin=np.full(n, lin),
            shed_quad=np.full(n, quad),
            shed_q_lin=np.full(n, reactive_weight * lin),
            shed_q_quad=np.full(n, reactive_weight * quad),
            shed_cap=shed_cap,
        )


@dataclass(frozen=True, eq=False)
class OlsProblem:
    """Assembled shedding problem: the NLP plus the metadata to read it."""

    case: NetworkCase
    cost: CostConfig
    load_bus_ids: tuple[int, ...]
    gen_bus_ids: tuple[int, ...]
    nlp: NlpProblem
    x0: np.ndarray
    index: Mapping[str, np.ndarray]   # name -> positions in x
    theta_bound: float
    obj_scale: float

    @property
    def n_vars(self) -> int:
        return self.nlp.n


@dataclass(frozen=True, eq=False)
class OlsSolution:
    """Shedding decision in natural units (per-bus arrays in case order)."""

    bus_ids: tuple[int, ...]
    v: np.ndarray             # pu
    theta: np.ndarray         # radians
    p_shed_mw: np.ndarray     # per bus; zero where nothing can shed
    q_shed_mvar: np.ndarray
    gen_bus_ids: tuple[int, ...]
    p_g_mw: np.ndarray
    q_g_mvar: np.ndarray
    objective: float          # $/h
    status: str
    iterations: int
    kkt: Mapping[str, float]

    @property
    def converged(self) -> bool:
        return self.status == "optimal"

    def total_shed_mw(self) -> float:
        return float(np.sum(self.p_shed_mw))

    def shed_at(self, bus_id: int) -> float:
        return float(self.p_shed_mw[self.bus_ids.index(bus_id)])


@dataclass(frozen=True)
class FeasibilityReport:
    ok: bool
    violations: tuple[tuple[str, float], ...]  # (description, magnitude)


@dataclass(frozen=True, eq=False)
class BruteForceSolution:
    objective: float
    p_shed_mw: np.ndarray     # per load bus, problem.load_bus_ids order
    q_shed_mvar: np.ndarray
    v: np.ndarray             # pu per bus
    theta: np.ndarray
    n_feasible: int
    n_grid: int


def load_buses(case: NetworkCase) -> tuple[int, ...]:
    """Buses carrying shed variables: any nonzero real or reactive demand."""
    return tuple(b.id for b in case.buses if b.p_d > 0 or b.q_d != 0)


def _max_marginal_cost(case: NetworkCase) -> float:
    """Steepest marginal generation cost over the active fleet, $/MWh."""
    marg = 0.0
    for g in case.active_gens():
        marg = max(marg, g.cost_b + 2.0 * g.cost_a * g.p_max)
    return marg


def assemble_ols(
    case: NetworkCase,
    cost: CostConfig | None = None,
    start: PowerFlowSolution | None = None,
    theta_bound: float = _THETA_BOUND,
) -> OlsProblem:
    """Build the NLP for one case. ``start`` seeds voltages and dispatch."""
    if cost is None:
        cost = CostConfig.for_case(case)

    loads = load_buses(case)
    n_load = len(loads)
    for name in ("shed_lin", "shed_quad", "shed_q_lin", "shed_q_quad"):
        if len(getattr(cost, name)) != n_load:
            raise OlsError(
                f"cost.{name} has {len(getattr(cost, name))} entries "
                f"for {n_load} load buses"
            )

    marg = _max_marginal_cost(case)
    pos = case.bus_index()
    p_d = np.array([case.buses[pos[b]].p_d for b in loads])
    positive = p_d[p_d > 0]
    min_pd = float(np.min(positive)) if len(positive) else 1.0
    if np.any(cost.shed_lin < DOMINANCE * marg - 1e-9):
        raise OlsError(
            "linear shed cost does not dominate generator marginal costs "
            f"(need >= {DOMINANCE * marg:.6g} $/MWh)"
        )
    if np.any(cost.shed_quad < DOMINANCE * marg / min_pd - 1e-9):
        raise OlsError(
            "quadratic shed cost does not dominate generator marginal costs "
            f"(need >= {DOMINANCE * marg / min_pd:.6g} $/MW^2h)"
        )

    n = case.n_buses
    base = case.base_mva
    gens = case.active_gens()
    ng = len(gens)
    slack = case.slack_position()

    idx_v = np.arange(n)
    idx_t = n + np.arange(n)
    idx_pg = 2 * n + np.arange(ng)
    idx_qg = 2 * n + ng + np.arange(ng)
    idx_ps = 2 * n + 2 * ng + np.arange(n_load)
    idx_qs = 2 * n + 2 * ng + n_load + np.arange(n_load)
    n_var = 2 * n + 2 * ng + 2 * n_load
    index = {
        "v": idx_v, "theta": idx_t, "p_g": idx_pg,
        "q_g": idx_qg, "p_s": idx_ps, "q_s": idx_qs,
    }

    lower = np.full(n_var, -np.inf)
    upper = np.full(n_var, np.inf)
    lower[idx_v] = [b.v_min for b in case.buses]
    upper[idx_v] = [b.v_max for b in case.buses]
    lower[idx_t] = -theta_bound
    upper[idx_t] = theta_bound
    lower[idx_t[slack]] = upper[idx_t[slack]] = 0.0
    lower[idx_pg] = [g.p_min / base for g in gens]
    upper[idx_pg] = [g.p_max / base for g in gens]
    lower[idx_qg] = [g.q_min / base for g in gens]
    upper[idx_qg] = [g.q_max / base for g in gens]
    q_d = np.array([case.buses[pos[b]].q_d for b in loads])
    lower[idx_ps] = 0.0
    upper[idx_ps] = cost.shed_cap * p_d / base
    lower[idx_qs] = 0.0
    upper[idx_qs] = cost.shed_cap * np.maximum(q_d, 0.0) / base

    # Incidence of generators and shed variables onto buses.
    gen_pos = np.array([pos[g.bus] for g in gens], dtype=int)
    load_pos = np.array([pos[b] for b in loads], dtype=int)
    p_d_bus = np.array([b.p_d for b in case.buses]) / base
    q_d_bus = np.array([b.q_d for b in case.buses]) / base

    adm = build_admittance(case)
    ybus = adm.ybus()

    # Rated, in-service branches contribute two squared-flow rows each.
    live = adm.branch_index
    rated_rows = [k for k, bi in enumerate(live)
                  if case.branches[bi].s_rating > 0.0]
    yf = adm.y_from.toarray()
    yt = adm.y_to.toarray()
    f_pos = np.array([pos[case.branches[live[k]].from_bus] for k in rated_rows],
                     dtype=int)
    t_pos = np.array([pos[case.branches[live[k]].to_bus] for k in rated_rows],
                     dtype=int)
    ybr = np.vstack([yf[rated_rows], yt[rated_rows]]) if rated_rows else np.zeros((0, n), complex)
    end_pos = np.concatenate([f_pos, t_pos]) if rated_rows else np.zeros(0, int)
    lim_sq = np.array(
        [(case.branches[live[k]].s_rating / base) ** 2 for k in rated_rows] * 2
    )
    n_flow = len(lim_sq)

    # Shedding disconnects load blocks at their power factor, so the reactive
    # share removed can never exceed the real share removed:
    # q_s / q_d <= p_s / p_d, one linear row per bus drawing both P and Q.
    cap_mask = (p_d > 0.0) & (q_d > 0.0)
    cap_ps = idx_ps[cap_mask]
    cap_qs = idx_qs[cap_mask]
    inv_pd = base / p_d[cap_mask]
    inv_qd = base / q_d[cap_mask]
    n_cap = len(cap_ps)
    cap_jac = np.zeros((n_cap, n_var))
    cap_jac[np.arange(n_cap), cap_qs] = inv_qd
    cap_jac[np.arange(n_cap), cap_ps] = -inv_pd

    # Per-unit objective coefficients; steep shed prices are rescaled down to
    # keep the Newton systems well conditioned.
    quad = np.zeros(n_var)
    lin = np.zeros(n_var)
    quad[idx_pg] = [g.cost_a * base * base for g in gens]
    lin[idx_pg] = [g.cost_b * base for g in gens]
    quad[idx_ps] = cost.shed_quad * base * base
    lin[idx_ps] = cost.shed_lin * base
    quad[idx_qs] = cost.shed_q_quad * base * base
    lin[idx_qs] = cost.shed_q_lin * base
    const = sum(g.cost_c for g in gens)
    coeff_max = max(
        float(np.max(2.0 * quad)) if n_var else 0.0,
        float(np.max(np.abs(lin))) if n_var else 0.0,
    )
    obj_scale = max(1.0, coeff_max / _COEFF_CEILING)
    quad_s, lin_s, const_s = quad / obj_scale, lin / obj_scale, const / obj_scale

    def objective(x):
        return (
            float(quad_s @ (x * x) + lin_s @ x + const_s),
            2.0 * quad_s * x + lin_s,
        )

    def equalities(x):
        v = dv.complex_voltage(x[idx_v], x[idx_t])
        s = dv.bus_injections(ybus, v)
        g_p = s.real + p_d_bus
        g_q = s.imag + q_d_bus
        np.subtract.at(g_p, gen_pos, x[idx_pg])
        np.subtract.at(g_q, gen_pos, x[idx_qg])
        np.subtract.at(g_p, load_pos, x[idx_ps])
        np.subtract.at(g_q, load_pos, x[idx_qs])
        ds_dva, ds_dvm = dv.injection_jacobian(ybus, v)
        jac = np.zeros((2 * n, n_var))
        jac[:n, idx_v] = ds_dvm.real
        jac[:n, idx_t] = ds_dva.real
        jac[n:, idx_v] = ds_dvm.imag
        jac[n:, idx_t] = ds_dva.imag
        jac[gen_pos, idx_pg] = -1.0
        jac[n + gen_pos, idx_qg] = -1.0
        jac[load_pos, idx_ps] = -1.0
        jac[n + load_pos, idx_qs] = -1.0
        return np.concatenate([g_p, g_q]), jac

    def inequalities(x):
        vals = np.empty(n_flow + n_cap)
        jac = np.zeros((n_flow + n_cap, n_var))
        if n_flow:
            v = dv.complex_voltage(x[idx_v], x[idx_t])
            s = (ybr @ v).conj() * v[end_pos]
            vals[:n_flow] = dv.squared_flow_values(s) - lim_sq
            dsa, dsm = dv.flow_jacobian(ybr, end_pos, v)
            da, dm = dv.squared_flow_jacobian(s, dsa, dsm)
            jac[:n_flow, idx_v] = dm
            jac[:n_flow, idx_t] = da
        if n_cap:
            vals[n_flow:] = x[cap_qs] * inv_qd - x[cap_ps] * inv_pd
            jac[n_flow:] = cap_jac
        return vals, jac

    def hessian(x, lam, mu):
        v = dv.complex_voltage(x[idx_v], x[idx_t])
        h = np.zeros((n_var, n_var))
        h[np.arange(n_var), np.arange(n_var)] = 2.0 * quad_s
        haa_p, hav_p, hva_p, hvv_p = dv.injection_hessian(ybus, v, lam[:n])
        haa_q, hav_q, hva_q, hvv_q = dv.injection_hessian(ybus, v, lam[n:])
        h[np.ix_(idx_t, idx_t)] += haa_p.real + haa_q.imag
        h[np.ix_(idx_t, idx_v)] += hav_p.real + hav_q.imag
        h[np.ix_(idx_v, idx_t)] += hva_p.real + hva_q.imag
        h[np.ix_(idx_v, idx_v)] += hvv_p.real + hvv_q.imag
        if n_flow:
            s = (ybr @ v).conj() * v[end_pos]
            dsa, dsm = dv.flow_jacobian(ybr, end_pos, v)
            faa, fav, fva, fvv = dv.squared_flow_hessian(
                ybr, end_pos, v, s, dsa, dsm, mu[:n_flow])
            h[np.ix_(idx_t, idx_t)] += faa
            h[np.ix_(idx_t, idx_v)] += fav
            h[np.ix_(idx_v, idx_t)] += fva
            h[np.ix_(idx_v, idx_v)] += fvv
        return h

    x0 = np.zeros(n_var)
    if start is not None:
        x0[idx_v] = start.v
        x0[idx_t] = start.theta
        x0[idx_pg] = np.clip(start.p_g, lower[idx_pg], upper[idx_pg])
        x0[idx_qg] = np.clip(start.q_g, lower[idx_qg], upper[idx_qg])
    else:
        x0[idx_v] = np.clip(1.0, lower[idx_v], upper[idx_v])
        x0[idx_pg] = 0.5 * (lower[idx_pg] + upper[idx_pg])
        x0[idx_qg] = 0.5 * (lower[idx_qg] + upper[idx_qg])
    x0[idx_ps] = 0.01 * p_d / base
    x0[idx_qs] = 0.005 * np.maximum(q_d, 0.0) / base

    nlp = NlpProblem(
        objective=objective,
        lower=lower,
        upper=upper,
        equalities=equalities,
        inequalities=inequalities if (n_flow or n_cap) else None,
        hessian=hessian,
    )
    return OlsProblem(
        case=case,
        cost=cost,
        load_bus_ids=loads,
        gen_bus_ids=tuple(g.bus for g in gens),
        nlp=nlp,
        x0=x0,
        index=index,
        theta_bound=theta_bound,
        obj_scale=obj_scale,
    )


def _objective_mw(problem: OlsProblem, p_g_mw, p_s_mw, q_s_mvar) -> float:
    """Dispatch plus shed cost in $/h, natural units."""
    total = 0.0
    for g, p in zip(problem.case.active_gens(), p_g_mw):
        total += g.cost_a * p * p + g.cost_b * p + g.cost_c
    c = problem.cost
    ps = np.asarray(p_s_mw, dtype=float)
    qs = np.asarray(q_s_mvar, dtype=float)
    total += float(c.shed_lin @ ps + c.shed_quad @ (ps * ps))
    total += float(c.shed_q_lin @ qs + c.shed_q_quad @ (qs * qs))
    return total


def solve_ols(
    problem: OlsProblem | NetworkCase,
    cost: CostConfig | None = None,
    start: PowerFlowSolution | None = None,
    tol: float = 1e-6,
    max_iter: int = 120,
) -> OlsSolution:
    """Solve the shedding problem; a bare case is assembled first.

    When no explicit start is given for a bare case, a converged power flow
    seeds the solver and a flat profile is used if the flow fails. The result
    always carries the best iterate found; check ``status`` before use.
    """
    if isinstance(problem, NetworkCase):
        case = problem
        if start is None:
            try:
                pf = solve_power_flow(case)
                start = pf if pf.converged else None
            except PowerFlowError:
                start = None
        problem = assemble_ols(case, cost=cost, start=start)
    elif cost is not None or start is not None:
        raise TypeError(
            "pass cost/start to assemble_ols when supplying an OlsProblem"
        )

    res: NlpResult = solve_nlp(problem.nlp, problem.x0, tol=tol, max_iter=max_iter)
    return _solution_from_x(problem, res)


def _solution_from_x(problem: OlsProblem, res: NlpResult) -> OlsSolution:
    case = problem.case
    base = case.base_mva
    idx = problem.index
    x = res.x
    n = case.n_buses
    pos = case.bus_index()
    p_shed = np.zeros(n)
    q_shed = np.zeros(n)
    load_pos = [pos[b] for b in problem.load_bus_ids]
    p_shed[load_pos] = x[idx["p_s"]] * base
    q_shed[load_pos] = x[idx["q_s"]] * base
    p_g_mw = x[idx["p_g"]] * base
    q_g_mvar = x[idx["q_g"]] * base
    objective = _objective_mw(
        problem, p_g_mw, x[idx["p_s"]] * base, x[idx["q_s"]] * base)
    return OlsSolution(
        bus_ids=tuple(b.id for b in case.buses),
        v=x[idx["v"]].copy(),
        theta=x[idx["theta"]].copy(),
        p_shed_mw=p_shed,
        q_shed_mvar=q_shed,
        gen_bus_ids=problem.gen_bus_ids,
        p_g_mw=p_g_mw,
        q_g_mvar=q_g_mvar,
        objective=objective,
        status=res.status,
        iterations=res.iterations,
        kkt=dict(res.kkt),
    )


def verify_feasibility(
    problem: OlsProblem, solution: OlsSolution, tol: float = 1e-5
) -> FeasibilityReport:
    """Independently check a solution against every constraint of the case.

    Residuals are recomputed from the case records (admittances, demands,
    limits) rather than through the solver callbacks. Any violation beyond
    ``tol`` (per-unit quantities) is listed with its magnitude.
    """
    case = problem.case
    base = case.base_mva
    pos = case.bus_index()
    n = case.n_buses
    violations: list[tuple[str, float]] = []

    v = solution.v
    theta = solution.theta
    vc = dv.complex_voltage(v, theta)
    s = dv.bus_injections(build_admittance(case).ybus(), vc)

    gen_p = np.zeros(n)
    gen_q = np.zeros(n)
    for g, p_mw, q_mvar in zip(case.active_gens(), solution.p_g_mw,
                               solution.q_g_mvar):
        gen_p[pos[g.bus]] += p_mw / base
        gen_q[pos[g.bus]] += q_mvar / base

    for i, b in enumerate(case.buses):
        p_res = s.real[i] - gen_p[i] + (b.p_d - solution.p_shed_mw[i]) / base
        q_res = s.imag[i] - gen_q[i] + (b.q_d - solution.q_shed_mvar[i]) / base
        if abs(p_res) > tol:
            violations.append((f"P balance at bus {b.id}", abs(p_res)))
        if abs(q_res) > tol:
            violations.append((f"Q balance at bus {b.id}", abs(q_res)))

    for i, b in enumerate(case.buses):
        if v[i] < b.v_min - tol or v[i] > b.v_max + tol:
            over = max(b.v_min - v[i], v[i] - b.v_max)
            violations.append((f"voltage bound at bus {b.id}", float(over)))
    slack = case.slack_position()
    for i, b in enumerate(case.buses):
        if i == slack:
            if abs(theta[i]) > tol:
                violations.append(("slack angle", abs(float(theta[i]))))
        elif abs(theta[i]) > problem.theta_bound + tol:
            violations.append(
                (f"angle bound at bus {b.id}",
                 abs(float(theta[i])) - problem.theta_bound)
            )

    for g, p_mw, q_mvar in zip(case.active_gens(), solution.p_g_mw,
                               solution.q_g_mvar):
        if p_mw < g.p_min - tol * base or p_mw > g.p_max + tol * base:
            over = max(g.p_min - p_mw, p_mw - g.p_max) / base
            violations.append((f"real dispatch at bus {g.bus}", float(over)))
        if q_mvar < g.q_min - tol * base or q_mvar > g.q_max + tol * base:
            over = max(g.q_min - q_mvar, q_mvar - g.q_max) / base
            violations.append((f"reactive dispatch at bus {g.bus}", float(over)))

    cap = problem.cost.shed_cap
    for b_id in problem.load_bus_ids:
        b = case.buses[pos[b_id]]
        ps = solution.p_shed_mw[pos[b_id]]
        qs = solution.q_shed_mvar[pos[b_id]]
        if ps < -tol * base or ps > cap * b.p_d + tol * base:
            violations.append((f"real shed bound at bus {b_id}",
                               max(-ps, ps - cap * b.p_d) / base))
        q_cap = cap * max(b.q_d, 0.0)
        if qs < -tol * base or qs > q_cap + tol * base:
            violations.append((f"reactive shed bound at bus {b_id}",
                               max(-qs, qs - q_cap) / base))
        if b.p_d > 0 and b.q_d > 0:
            over = qs / b.q_d - ps / b.p_d
            if over > tol:
                violations.append(
                    (f"shed power-factor cap at bus {b_id}", float(over)))

    adm = build_admittance(case)
    live = adm.branch_index
    yf, yt = adm.y_from.toarray(), adm.y_to.toarray()
    for row, k in enumerate(live):
        br = case.branches[k]
        if br.s_rating <= 0:
            continue
        lim = br.s_rating / base
        s_f = vc[pos[br.from_bus]] * np.conj(yf[row] @ vc)
        s_t = vc[pos[br.to_bus]] * np.conj(yt[row] @ vc)
        for label, flow in (("from", s_f), ("to", s_t)):
            over = abs(flow) - lim
            if over > tol:
                violations.append(
                    (f"flow limit ({label}) on branch {k}", float(over)))

    return FeasibilityReport(ok=not violations, violations=tuple(violations))


def _grid(lo: float, hi: float, step: float) -> np.ndarray:
    """Inclusive grid from lo to hi; both endpoints always present."""
    if hi <= lo:
        return np.array([lo])
    k = int(np.floor((hi - lo) / step + 1e-9))
    pts = lo + step * np.arange(k + 1)
    if hi - pts[-1] > 1e-12:
        pts = np.append(pts, hi)
    return pts


def brute_force_ols(problem: OlsProblem, step: float = 0.01,
                    chunk: int = 120_000) -> BruteForceSolution:
    """Exhaustive grid search oracle for very small cases.

    Grids every degree of freedom (voltage magnitude at generator buses,
    non-slack dispatch, and both shed variables) at ``step`` pu, completes the
    remaining steady state via Newton per grid point, and returns the feasible
    point with the least cost. Only cases with at most three buses and two
    generator buses are accepted; generators must sit on slack or PV buses.
    """
    case = problem.case
    if case.n_buses > 3:
        raise OlsError("grid oracle accepts at most three buses")
    gens = case.active_gens()
    if len(gens) > 2:
        raise OlsError("grid oracle accepts at most two generator buses")
    pos = case.bus_index()
    kinds = [b.kind for b in case.buses]
    for g in gens:
        if kinds[pos[g.bus]] == "PQ":
            raise OlsError("grid oracle requires generators on slack/PV buses")

    n = case.n_buses
    base = case.base_mva
    slack = case.slack_position()
    adm = build_admittance(case)
    ybus = adm.ybus()
    loads = problem.load_bus_ids
    cap = problem.cost.shed_cap

    # Grid axes: V at slack and PV buses, P at non-slack generators, and the
    # shed pair at every load bus.
    axes: list[np.ndarray] = []
    labels: list[tuple[str, int]] = []   # (kind, bus position or load index)
    for i, b in enumerate(case.buses):
        if kinds[i] in ("slack", "PV"):
            axes.append(_grid(b.v_min, b.v_max, step))
            labels.append(("v", i))
    for j, g in enumerate(gens):
        if pos[g.bus] != slack:
            axes.append(_grid(g.p_min / base, g.p_max / base, step))
            labels.append(("pg", j))
    for li, b_id in enumerate(loads):
        b = case.buses[pos[b_id]]
        axes.append(_grid(0.0, cap * b.p_d / base, step))
        labels.append(("ps", li))
        axes.append(_grid(0.0, cap * max(b.q_d, 0.0) / base, step))
        labels.append(("qs", li))

    mesh = np.meshgrid(*axes, indexing="ij") if axes else []
    grid = np.stack([m.ravel() for m in mesh]) if axes else np.zeros((0, 1))
    n_grid = grid.shape[1]

    pv_pos = [i for i in range(n) if kinds[i] == "PV"]
    pq_pos = [i for i in range(n) if kinds[i] == "PQ"]
    ns_pos = [i for i in range(n) if i != slack]
    p_d_bus = np.array([b.p_d for b in case.buses]) / base
    q_d_bus = np.array([b.q_d for b in case.buses]) / base

    best_obj = np.inf
    best_state = None
    n_feasible = 0
    ftol = 1e-6

    rated = [
        (row, k) for row, k in enumerate(adm.branch_index)
        if case.branches[k].s_rating > 0.0
    ]
    yf, yt = adm.y_from.toarray(), adm.y_to.toarray()

    for lo in range(0, n_grid, chunk):
        cols = grid[:, lo:lo + chunk]
        nb = cols.shape[1]
        vm = np.ones((nb, n))
        ps = np.zeros((nb, len(loads)))
        qs = np.zeros((nb, len(loads)))
        pg = np.zeros((nb, len(gens)))
        for row, (what, ref) in enumerate(labels):
            if what == "v":
                vm[:, ref] = cols[row]
            elif what == "pg":
                pg[:, ref] = cols[row]
            elif what == "ps":
                ps[:, ref] = cols[row]
            else:
                qs[:, ref] = cols[row]

        # Cull combinations that shed a larger reactive share than real share
        # before paying for the Newton completion.
        keep = np.ones(nb, dtype=bool)
        for li, b_id in enumerate(loads):
            b = case.buses[pos[b_id]]
            if b.p_d > 0 and b.q_d > 0:
                keep &= (qs[:, li] * base / b.q_d
                         - ps[:, li] * base / b.p_d) <= ftol
        if not np.any(keep):
            continue
        if not np.all(keep):
            vm, ps, qs, pg = vm[keep], ps[keep], qs[keep], pg[keep]
            nb = len(vm)

        p_net = np.tile(-p_d_bus, (nb, 1))
        q_net = np.tile(-q_d_bus, (nb, 1))
        for li, b_id in enumerate(loads):
            p_net[:, pos[b_id]] += ps[:, li]
            q_net[:, pos[b_id]] += qs[:, li]
        for j, g in enumerate(gens):
            if pos[g.bus] != slack:
                p_net[:, pos[g.bus]] += pg[:, j]

        va, vm, s_inj, solved = _complete_states(
            ybus, vm, p_net, q_net, ns_pos, pq_pos)

        feas = solved.copy()
        # Completed voltages and angles must respect their windows.
        for i in pq_pos:
            b = case.buses[i]
            feas &= (vm[:, i] >= b.v_min - ftol) & (vm[:, i] <= b.v_max + ftol)
        feas &= np.all(
            np.abs(va[:, ns_pos]) <= problem.theta_bound + ftol, axis=1)

        # Back out the completed injections at generator buses. The net
        # specification at those buses excludes their own generation, so the
        # implied dispatch is the injection surplus over the specification.
        pg_full = pg.copy()
        qg_full = np.zeros((nb, len(gens)))
        for j, g in enumerate(gens):
            i = pos[g.bus]
            qg_full[:, j] = s_inj.imag[:, i] - q_net[:, i]
            feas &= (qg_full[:, j] >= g.q_min / base - ftol)
            feas &= (qg_full[:, j] <= g.q_max / base + ftol)
            if i == slack:
                pg_full[:, j] = s_inj.real[:, i] - p_net[:, i]
                feas &= (pg_full[:, j] >= g.p_min / base - ftol)
                feas &= (pg_full[:, j] <= g.p_max / base + ftol)

        vc = vm * np.exp(1j * va)
        for row, k in rated:
            br = case.branches[k]
            lim = br.s_rating / base + ftol
            s_f = vc[:, pos[br.from_bus]] * np.conj(vc @ yf[row])
            s_t = vc[:, pos[br.to_bus]] * np.conj(vc @ yt[row])
            feas &= (np.abs(s_f) <= lim) & (np.abs(s_t) <= lim)

        if not np.any(feas):
            continue
        n_feasible += int(np.sum(feas))

        obj = np.zeros(nb)
        for j, g in enumerate(gens):
            p_mw = pg_full[:, j] * base
            obj += g.cost_a * p_mw * p_mw + g.cost_b * p_mw + g.cost_c
        c = problem.cost
        ps_mw = ps * base
        qs_mvar = qs * base
        obj += ps_mw @ c.shed_lin + (ps_mw * ps_mw) @ c.shed_quad
        obj += qs_mvar @ c.shed_q_lin + (qs_mvar * qs_mvar) @ c.shed_q_quad
        obj[~feas] = np.inf
        kbest = int(np.argmin(obj))
        if obj[kbest] < best_obj:
            best_obj = float(obj[kbest])
            best_state = (
                ps_mw[kbest].copy(), qs_mvar[kbest].copy(),
                vm[kbest].copy(), va[kbest].copy(),
            )

    if best_state is None:
        raise OlsError("no feasible grid point")
    ps_mw, qs_mvar, vm_b, va_b = best_state
    return BruteForceSolution(
        objective=best_obj,
        p_shed_mw=ps_mw,
        q_shed_mvar=qs_mvar,
        v=vm_b,
        theta=va_b,
        n_feasible=n_feasible,
        n_grid=n_grid,
    )


def _complete_states(ybus, vm0, p_net, q_net, ns_pos, pq_pos,
                     tol: float = 1e-10, max_iter: int = 15):
    """Batched Newton completion of (angles, PQ magnitudes) per grid point.

    ``vm0`` carries the gridded magnitudes (PQ entries are start values).
    Returns (va, vm, injections, converged-mask).
    """
    nb, n = vm0.shape
    ns = np.asarray(ns_pos, dtype=int)
    pq = np.asarray(pq_pos, dtype=int)
    n_p, n_q = len(ns), len(pq)
    m = n_p + n_q
    vm = vm0.copy()
    va = np.zeros((nb, n))
    dead = np.zeros(nb, dtype=bool)
    eye = np.eye(m)

    def mismatch():
        v = vm * np.exp(1j * va)
        ibus = v @ ybus.T
        s = v * np.conj(ibus)
        mis = np.concatenate(
            [s.real[:, ns] - p_net[:, ns], s.imag[:, pq] - q_net[:, pq]],
            axis=1,
        )
        return v, ibus, s, mis

    v, ibus, s, mis = mismatch()
    for _ in range(max_iter):
        bad = ~np.isfinite(mis).all(axis=1) | ~np.isfinite(vm).all(axis=1) \
            | (vm.min(axis=1) < 0.05)
        dead |= bad
        if dead.any():
            vm[dead] = 1.0
            va[dead] = 0.0
            v, ibus, s, mis = mismatch()
            mis[dead] = 1.0  # keep them unconverged
        worst = np.max(np.abs(mis), axis=1)
        if np.all((worst <= tol) | dead):
            break

        # Batched injection Jacobian blocks, (nb, n, n).
        dsa = -np.conj(ybus)[None, :, :] * np.conj(v)[:, None, :]
        dsa[:, np.arange(n), np.arange(n)] += np.conj(ibus)
        dsa = 1j * v[:, :, None] * dsa
        dsm = v[:, :, None] * np.conj(ybus[None, :, :] * v[:, None, :]) / vm[:, None, :]
        dsm[:, np.arange(n), np.arange(n)] += np.conj(ibus) * v / vm

        jac = np.empty((nb, m, m))
        jac[:, :n_p, :n_p] = dsa.real[:, ns][:, :, ns]
        jac[:, :n_p, n_p:] = dsm.real[:, ns][:, :, pq]
        jac[:, n_p:, :n_p] = dsa.imag[:, pq][:, :, ns]
        jac[:, n_p:, n_p:] = dsm.imag[:, pq][:, :, pq]

        det = np.linalg.det(jac)
        sing = ~np.isfinite(det) | (np.abs(det) < 1e-12)
        dead |= sing
        jac[dead] = eye
        step = np.linalg.solve(jac, -mis[:, :, None])[:, :, 0]
        step[dead] = 0.0
        va[:, ns] += step[:, :n_p]
        vm[:, pq] += step[:, n_p:]
        v, ibus, s, mis = mismatch()
        if dead.any():
            mis[dead] = 1.0

    worst = np.max(np.abs(mis), axis=1) if m else np.zeros(nb)
    converged = (worst <= tol) & ~dead
    return va, vm, s, converged
