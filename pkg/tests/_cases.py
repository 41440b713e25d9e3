"""Hand-built small networks shared across the test suite.

Everything here is constructed directly from records (no file parsing) so the
tests exercise known, analytically tractable systems:

* ``two_bus_case`` -- slack + single load behind one reactive line.  The
  power-flow solution has a closed form used as an exact oracle.
* ``two_bus_zero_demand`` -- same wiring with no load: the flat start is the
  exact solution, so a solver must converge in zero iterations.
* ``three_bus_instance`` -- seeded random triangle networks for comparing the
  interior-point solver against the exhaustive grid oracle.  Cost magnitudes
  are deliberately tiny so the oracle's 0.01 pu grid resolves the objective
  to the comparison tolerance (the optimal dispatch pattern is invariant to
  uniform cost rescaling, so nothing about the physics is special-cased).
"""

from __future__ import annotations

import math

import numpy as np

from gridshed.netcase import BranchRecord, BusRecord, GenRecord, NetworkCase


def two_bus_case(
    p_mw: float = 50.0,
    q_mvar: float = 0.0,
    r: float = 0.0,
    x: float = 0.1,
    rating_mva: float = 0.0,
    v_lo: float = 0.90,
    v_hi: float = 1.10,
) -> NetworkCase:
    """Slack generator at bus 1 feeding a load at bus 2 over a single line."""
    buses = (
        BusRecord(id=1, kind="slack", p_d=0.0, q_d=0.0, v_min=v_lo, v_max=v_hi),
        BusRecord(id=2, kind="PQ", p_d=p_mw, q_d=q_mvar, v_min=v_lo, v_max=v_hi),
    )
    gens = (
        GenRecord(
            bus=1,
            p_min=0.0,
            p_max=999.0,
            q_min=-999.0,
            q_max=999.0,
            v_set=1.0,
        ),
    )
    branches = (
        BranchRecord(from_bus=1, to_bus=2, r=r, x=x, b_ch=0.0, s_rating=rating_mva),
    )
    return NetworkCase(base_mva=100.0, buses=buses, gens=gens, branches=branches)


def two_bus_zero_demand() -> NetworkCase:
    return two_bus_case(p_mw=0.0, q_mvar=0.0)


def two_bus_analytic_solution(
    p_mw: float = 50.0, x: float = 0.1, base_mva: float = 100.0
) -> tuple[float, float]:
    """Closed-form (v2, theta2) for the lossless two-bus case with q_d = 0.

    With the slack held at 1.0 pu and a purely reactive line, the load-bus
    balance reduces to ``sin(theta2) = -p x / v2`` and ``cos(theta2) = v2``,
    hence ``u = v2**2`` satisfies ``u**2 - u + (p x)**2 = 0``.
    """
    p = p_mw / base_mva
    disc = 1.0 - 4.0 * (p * x) ** 2
    if disc < 0.0:
        raise ValueError("load exceeds the static transfer limit of the line")
    u = (1.0 + math.sqrt(disc)) / 2.0
    v2 = math.sqrt(u)
    theta2 = math.asin(-p * x / v2)
    return v2, theta2


def three_bus_instance(seed: int) -> NetworkCase:
    """Random triangle network: slack at bus 1, optional generator at bus 2,
    the only load at bus 3.

    Instances fall into three regimes -- generation shortfall, binding line
    ratings, and unconstrained -- so both sheds and zero-shed optima appear
    across a seed sweep.  Voltage bounds sit on the oracle's 0.01 grid.
    """
    rng = np.random.default_rng(seed)
    base = 100.0
    v_lo, v_hi = 0.96, 1.04

    has_gen2 = rng.random() < 0.7
    p_d = rng.uniform(10.0, 25.0)
    q_d = p_d * rng.uniform(0.1, 0.4)
    s_d = math.hypot(p_d, q_d)

    mode = rng.choice(("shortfall", "line_limit", "slack_capacity"))
    if mode == "shortfall":
        total = p_d * rng.uniform(0.5, 0.92)
        if has_gen2:
            share = rng.uniform(0.3, 0.7)
            p_max1, p_max2 = total * share, total * (1.0 - share)
        else:
            p_max1, p_max2 = total, 0.0
        rating13 = rating23 = 0.0
    elif mode == "line_limit":
        p_max1 = p_d * rng.uniform(1.2, 2.0)
        p_max2 = p_d * rng.uniform(0.6, 1.2) if has_gen2 else 0.0
        rating13 = s_d * rng.uniform(0.25, 0.5)
        rating23 = s_d * rng.uniform(0.25, 0.5)
    else:
        p_max1 = p_d * rng.uniform(1.2, 2.0)
        p_max2 = p_d * rng.uniform(0.6, 1.2) if has_gen2 else 0.0
        rating13 = rating23 = 0.0

    # Tiny marginal costs keep the oracle's grid-resolution error on the
    # objective far below the comparison tolerance used by the tests.
    a1, a2 = rng.uniform(0.0, 2e-8, size=2)
    b1, b2 = rng.uniform(1e-6, 3e-6, size=2)

    def _reactance() -> tuple[float, float]:
        x_line = rng.uniform(0.05, 0.15)
        return x_line * rng.uniform(0.05, 0.2), x_line

    r12, x12 = _reactance()
    r13, x13 = _reactance()
    r23, x23 = _reactance()

    buses = (
        BusRecord(id=1, kind="slack", p_d=0.0, q_d=0.0, v_min=v_lo, v_max=v_hi),
        BusRecord(
            id=2,
            kind="PV" if has_gen2 else "PQ",
            p_d=0.0,
            q_d=0.0,
            v_min=v_lo,
            v_max=v_hi,
        ),
        BusRecord(id=3, kind="PQ", p_d=p_d, q_d=q_d, v_min=v_lo, v_max=v_hi),
    )
    gens = [
        GenRecord(
            bus=1,
            p_min=0.0,
            p_max=p_max1,
            q_min=-rng.uniform(15.0, 30.0),
            q_max=rng.uniform(15.0, 30.0),
            cost_a=a1,
            cost_b=b1,
            v_set=1.0,
        )
    ]
    if has_gen2:
        gens.append(
            GenRecord(
                bus=2,
                p_min=0.0,
                p_max=p_max2,
                q_min=-rng.uniform(15.0, 30.0),
                q_max=rng.uniform(15.0, 30.0),
                cost_a=a2,
                cost_b=b2,
                v_set=1.0,
            )
        )
    branches = (
        BranchRecord(from_bus=1, to_bus=2, r=r12, x=x12, b_ch=0.0, s_rating=0.0),
        BranchRecord(from_bus=1, to_bus=3, r=r13, x=x13, b_ch=0.0, s_rating=rating13),
        BranchRecord(from_bus=2, to_bus=3, r=r23, x=x23, b_ch=0.0, s_rating=rating23),
    )
    return NetworkCase(base_mva=base, buses=buses, gens=tuple(gens), branches=branches)
