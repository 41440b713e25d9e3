"""Network case model: parsing, validation, admittance, outages, load scaling.

Cases use the common matrix-table text format (bus/gen/branch/gencost tables
on a common MVA base). Records keep MW/MVAr at the I/O boundary; impedances,
shunts and voltage bounds are per-unit. All math modules convert through
``base_mva``.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, replace
from importlib import resources
from typing import Iterable, Mapping

import numpy as np
from scipy import sparse

SLACK = "slack"
PV = "PV"
PQ = "PQ"

_KIND_FROM_CODE = {3: SLACK, 2: PV, 1: PQ}
_CODE_FROM_KIND = {v: k for k, v in _KIND_FROM_CODE.items()}


class CaseError(ValueError):
    """Malformed, inconsistent, or unsupported case data."""


@dataclass(frozen=True)
class BusRecord:
    id: int
    kind: str      # slack | PV | PQ
    p_d: float     # real demand, MW
    q_d: float     # reactive demand, MVAr
    v_min: float   # pu
    v_max: float   # pu
    base_kv: float = 1.0
    shunt_g: float = 0.0  # pu conductance to ground
    shunt_b: float = 0.0  # pu susceptance to ground


@dataclass(frozen=True)
class GenRecord:
    bus: int
    p_min: float   # MW
    p_max: float   # MW
    q_min: float   # MVAr
    q_max: float   # MVAr
    cost_a: float = 0.0  # $/MW^2 h
    cost_b: float = 0.0  # $/MWh
    cost_c: float = 0.0  # $/h
    p_set: float = 0.0    # dispatch setpoint, MW (power-flow injection)
    q_set: float = 0.0    # MVAr, used only if the gen sits on a PQ bus
    v_set: float = 1.0    # voltage setpoint, pu (held at PV/slack buses)
    in_service: bool = True


@dataclass(frozen=True)
class BranchRecord:
    from_bus: int
    to_bus: int
    r: float        # pu
    x: float        # pu
    b_ch: float = 0.0    # total line charging susceptance, pu
    tap: float = 1.0     # off-nominal turns ratio (1.0 = none)
    shift: float = 0.0   # phase shift, radians
    s_rating: float = 0.0  # MVA thermal limit, 0 = unlimited
    in_service: bool = True


@dataclass(frozen=True)
class NetworkCase:
    base_mva: float
    buses: tuple[BusRecord, ...]
    gens: tuple[GenRecord, ...]
    branches: tuple[BranchRecord, ...]

    def __post_init__(self):
        _validate(self)

    # -- index helpers ----------------------------------------------------
    @property
    def n_buses(self) -> int:
        return len(self.buses)

    def bus_index(self) -> dict[int, int]:
        """Map bus id -> position in ``buses``."""
        return {b.id: i for i, b in enumerate(self.buses)}

    def slack_position(self) -> int:
        return next(i for i, b in enumerate(self.buses) if b.kind == SLACK)

    def active_gens(self) -> tuple[GenRecord, ...]:
        return tuple(g for g in self.gens if g.in_service)

    def gen_bus_ids(self) -> tuple[int, ...]:
        return tuple(g.bus for g in self.active_gens())

    def load_bus_ids(self) -> tuple[int, ...]:
        return tuple(b.id for b in self.buses if b.p_d > 0.0)

    def total_p_d(self) -> float:
        return float(sum(b.p_d for b in self.buses))

    def p_d_pu(self) -> np.ndarray:
        return np.array([b.p_d for b in self.buses]) / self.base_mva

    def q_d_pu(self) -> np.ndarray:
        return np.array([b.q_d for b in self.buses]) / self.base_mva


@dataclass(frozen=True)
class AdmittanceMatrix:
    """Bus admittance Y = G + jB, per-unit, with branch-end matrices.

    ``g``/``b`` are N x N real sparse matrices. ``y_from``/``y_to`` map bus
    voltages to branch-end current injections for the in-service branches
    listed in ``branch_index`` (needed for line flows).
    """
    g: sparse.csr_matrix
    b: sparse.csr_matrix
    y_from: sparse.csr_matrix
    y_to: sparse.csr_matrix
    branch_index: tuple[int, ...]

    def ybus(self) -> np.ndarray:
        """Dense complex bus admittance matrix."""
        return (self.g + 1j * self.b).toarray()


def _validate(case: NetworkCase) -> None:
    if case.base_mva <= 0:
        raise CaseError("base_mva must be positive")
    if not case.buses:
        raise CaseError("case has no buses")
    ids = [b.id for b in case.buses]
    if len(set(ids)) != len(ids):
        raise CaseError("duplicate bus ids")
    slacks = [b for b in case.buses if b.kind == SLACK]
    if len(slacks) != 1:
        raise CaseError(f"expected exactly one slack bus, found {len(slacks)}")
    for b in case.buses:
        if b.kind not in (SLACK, PV, PQ):
            raise CaseError(f"bus {b.id}: unknown kind {b.kind!r}")
        if b.v_min <= 0:
            raise CaseError(f"bus {b.id}: v_min must be positive")
        if b.v_min > b.v_max:
            raise CaseError(f"bus {b.id}: v_min > v_max")
    known = set(ids)
    gen_buses = [g.bus for g in case.gens if g.in_service]
    if len(set(gen_buses)) != len(gen_buses):
        raise CaseError("more than one in-service generator on a bus "
                        "(aggregate at parse time)")
    for g in case.gens:
        if g.bus not in known:
            raise CaseError(f"generator references unknown bus {g.bus}")
        if g.p_min > g.p_max or g.q_min > g.q_max:
            raise CaseError(f"generator at bus {g.bus}: inverted limits")
    gen_set = set(gen_buses)
    for b in case.buses:
        if b.kind in (SLACK, PV) and b.id not in gen_set:
            raise CaseError(f"bus {b.id} is {b.kind} but has no in-service generator")
    for k, br in enumerate(case.branches):
        if br.from_bus not in known or br.to_bus not in known:
            raise CaseError(f"branch {k}: unknown endpoint")
        if br.from_bus == br.to_bus:
            raise CaseError(f"branch {k}: self-loop at bus {br.from_bus}")
        if br.r == 0.0 and br.x == 0.0:
            raise CaseError(f"branch {k}: zero impedance")
        if br.tap <= 0.0:
            raise CaseError(f"branch {k}: tap must be positive")
        if br.s_rating < 0.0:
            raise CaseError(f"branch {k}: negative rating")


# ---------------------------------------------------------------------------
# parsing / serialization


_TABLE_RE = re.compile(r"mpc\.(\w+)\s*=\s*\[(.*?)\];", re.DOTALL)
_SCALAR_RE = re.compile(r"mpc\.(\w+)\s*=\s*([0-9eE+\-.]+)\s*;")


def _strip_comments(text: str) -> str:
    return "\n".join(line.split("%", 1)[0] for line in text.splitlines())


def _parse_table(body: str, name: str, min_cols: int) -> list[list[float]]:
    rows = []
    for chunk in body.replace("\n", " ").split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        try:
            row = [float(tok) for tok in chunk.split()]
        except ValueError as exc:
            raise CaseError(f"{name} table: non-numeric entry in row {chunk!r}") from exc
        if len(row) < min_cols:
            raise CaseError(f"{name} table: row has {len(row)} columns, "
                            f"expected at least {min_cols}")
        rows.append(row)
    return rows


def parse_case(text: str) -> NetworkCase:
    """Parse a matrix-table case file into an immutable NetworkCase.

    Requires bus, gen, branch and gencost tables plus a baseMVA scalar.
    Multiple in-service generators on one bus are aggregated (bounds and
    setpoints summed) only when their cost coefficients are identical;
    differing costs are refused.
    """
    clean = _strip_comments(text)
    tables = {m.group(1): m.group(2) for m in _TABLE_RE.finditer(clean)}
    scalars = dict(_SCALAR_RE.findall(clean))
    if "baseMVA" not in scalars:
        raise CaseError("missing baseMVA")
    for required in ("bus", "gen", "branch", "gencost"):
        if required not in tables:
            raise CaseError(f"missing required table: {required}")
    base = float(scalars["baseMVA"])
    if base <= 0:
        raise CaseError("baseMVA must be positive")

    buses = []
    for row in _parse_table(tables["bus"], "bus", 13):
        code = int(row[1])
        if code == 4:
            raise CaseError(f"bus {int(row[0])}: isolated (type 4) buses unsupported")
        if code not in _KIND_FROM_CODE:
            raise CaseError(f"bus {int(row[0])}: unknown type code {code}")
        buses.append(BusRecord(
            id=int(row[0]), kind=_KIND_FROM_CODE[code],
            p_d=row[2], q_d=row[3],
            shunt_g=row[4] / base, shunt_b=row[5] / base,
            base_kv=row[9], v_max=row[11], v_min=row[12],
        ))

    gen_rows = _parse_table(tables["gen"], "gen", 10)
    cost_rows = _parse_table(tables["gencost"], "gencost", 4)
    if len(cost_rows) != len(gen_rows):
        raise CaseError(f"gencost has {len(cost_rows)} rows for {len(gen_rows)} generators")
    gens = []
    for row, cost in zip(gen_rows, cost_rows):
        model, ncost = int(cost[0]), int(cost[3])
        if model != 2:
            raise CaseError("only polynomial (model 2) generator costs are supported")
        coeffs = cost[4:4 + ncost]
        if len(coeffs) != ncost:
            raise CaseError("gencost row shorter than its declared ncost")
        if ncost == 3:
            a, b, c = coeffs
        elif ncost == 2:
            a, (b, c) = 0.0, coeffs
        else:
            raise CaseError(f"unsupported polynomial cost degree (ncost={ncost})")
        gens.append(GenRecord(
            bus=int(row[0]), p_set=row[1], q_set=row[2],
            q_max=row[3], q_min=row[4], v_set=row[5],
            in_service=row[7] != 0.0, p_max=row[8], p_min=row[9],
            cost_a=a, cost_b=b, cost_c=c,
        ))
    gens = _aggregate_gens(gens)

    branches = []
    for row in _parse_table(tables["branch"], "branch", 11):
        ratio = row[8]
        branches.append(BranchRecord(
            from_bus=int(row[0]), to_bus=int(row[1]),
            r=row[2], x=row[3], b_ch=row[4], s_rating=row[5],
            tap=ratio if ratio != 0.0 else 1.0,
            shift=float(np.radians(row[9])),
            in_service=row[10] != 0.0,
        ))

    return NetworkCase(base_mva=base, buses=tuple(buses),
                       gens=tuple(gens), branches=tuple(branches))


def _aggregate_gens(gens: list[GenRecord]) -> list[GenRecord]:
    by_bus: dict[int, list[GenRecord]] = {}
    order: list[int] = []
    for g in gens:
        if not g.in_service:
            continue
        if g.bus not in by_bus:
            order.append(g.bus)
        by_bus.setdefault(g.bus, []).append(g)
    out = []
    for bus in order:
        group = by_bus[bus]
        if len(group) == 1:
            out.append(group[0])
            continue
        costs = {(g.cost_a, g.cost_b, g.cost_c) for g in group}
        if len(costs) > 1:
            raise CaseError(f"bus {bus}: co-located generators with differing "
                            "cost coefficients cannot be aggregated")
        first = group[0]
        out.append(replace(
            first,
            p_min=sum(g.p_min for g in group), p_max=sum(g.p_max for g in group),
            q_min=sum(g.q_min for g in group), q_max=sum(g.q_max for g in group),
            p_set=sum(g.p_set for g in group), q_set=sum(g.q_set for g in group),
            cost_c=sum(g.cost_c for g in group),
        ))
    return out


def _fmt(value: float) -> str:
    if value == int(value) and abs(value) < 1e15:
        return str(int(value))
    return repr(float(value))


def serialize_case(case: NetworkCase, name: str = "case") -> str:
    """Emit the canonical matrix-table text for a case.

    parse(serialize(parse(text))) reproduces the records exactly (floats are
    written in shortest round-trip form).
    """
    lines = [f"function mpc = {name}", "", "mpc.version = '2';",
             f"mpc.baseMVA = {_fmt(case.base_mva)};", "", "mpc.bus = ["]
    for b in case.buses:
        row = [b.id, _CODE_FROM_KIND[b.kind], b.p_d, b.q_d,
               b.shunt_g * case.base_mva, b.shunt_b * case.base_mva,
               1, 1.0, 0.0, b.base_kv, 1, b.v_max, b.v_min]
        lines.append("\t" + "\t".join(_fmt(v) for v in row) + ";")
    lines += ["];", "", "mpc.gen = ["]
    for g in case.gens:
        row = [g.bus, g.p_set, g.q_set, g.q_max, g.q_min, g.v_set,
               case.base_mva, 1 if g.in_service else 0, g.p_max, g.p_min]
        lines.append("\t" + "\t".join(_fmt(v) for v in row) + ";")
    lines += ["];", "", "mpc.branch = ["]
    for br in case.branches:
        row = [br.from_bus, br.to_bus, br.r, br.x, br.b_ch, br.s_rating,
               0, 0, br.tap, float(np.degrees(br.shift)),
               1 if br.in_service else 0, -360, 360]
        lines.append("\t" + "\t".join(_fmt(v) for v in row) + ";")
    lines += ["];", "", "mpc.gencost = ["]
    for g in case.gens:
        row = [2, 0, 0, 3, g.cost_a, g.cost_b, g.cost_c]
        lines.append("\t" + "\t".join(_fmt(v) for v in row) + ";")
    lines += ["];", ""]
    return "\n".join(lines)


def case_digest(case: NetworkCase) -> str:
    """sha256 of the canonical serialization; identifies a case in manifests."""
    return hashlib.sha256(serialize_case(case).encode()).hexdigest()


def load_case14() -> NetworkCase:
    """The bundled 14-bus test system."""
    text = resources.files("gridshed.data").joinpath("case14.m").read_text()
    return parse_case(text)


# ---------------------------------------------------------------------------
# admittance


def build_admittance(case: NetworkCase) -> AdmittanceMatrix:
    """Assemble Y = G + jB from in-service branches and bus shunts.

    Branch model: series admittance ys = 1/(r+jx), total charging b_ch split
    half per end, off-nominal tap ``t`` with phase shift on the from side:
        Yff = (ys + j b_ch/2) / t^2        Yft = -ys / (t e^{-j shift})
        Ytf = -ys / (t e^{+j shift})       Ytt =  ys + j b_ch/2
    """
    n = case.n_buses
    pos = case.bus_index()
    live = [(k, br) for k, br in enumerate(case.branches) if br.in_service]
    nl = len(live)

    ybus = np.zeros((n, n), dtype=complex)
    yf = np.zeros((nl, n), dtype=complex)
    yt = np.zeros((nl, n), dtype=complex)
    for row, (_, br) in enumerate(live):
        f, t = pos[br.from_bus], pos[br.to_bus]
        ys = 1.0 / complex(br.r, br.x)
        ysh = 0.5j * br.b_ch
        tap = br.tap * np.exp(1j * br.shift)
        yff = (ys + ysh) / (tap * np.conj(tap))
        yft = -ys / np.conj(tap)
        ytf = -ys / tap
        ytt = ys + ysh
        ybus[f, f] += yff
        ybus[f, t] += yft
        ybus[t, f] += ytf
        ybus[t, t] += ytt
        yf[row, f], yf[row, t] = yff, yft
        yt[row, f], yt[row, t] = ytf, ytt
    for i, b in enumerate(case.buses):
        ybus[i, i] += complex(b.shunt_g, b.shunt_b)

    return AdmittanceMatrix(
        g=sparse.csr_matrix(ybus.real), b=sparse.csr_matrix(ybus.imag),
        y_from=sparse.csr_matrix(yf), y_to=sparse.csr_matrix(yt),
        branch_index=tuple(k for k, _ in live),
    )


# ---------------------------------------------------------------------------
# topology edits


def apply_outage(case: NetworkCase, lines: Iterable[int]) -> NetworkCase:
    """Copy of ``case`` with the given branch indices switched out.

    Indices are 0-based positions in ``case.branches``. Already-outaged
    indices are accepted; unknown indices raise CaseError.
    """
    out = set(lines)
    for k in out:
        if not 0 <= k < len(case.branches):
            raise CaseError(f"branch index {k} out of range "
                            f"(case has {len(case.branches)} branches)")
    branches = tuple(
        replace(br, in_service=False) if k in out else br
        for k, br in enumerate(case.branches)
    )
    return replace(case, branches=branches)


def scale_loads(case: NetworkCase,
                factors: Mapping[int, float] | float) -> NetworkCase:
    """Scale bus demands (p_d and q_d) by per-bus factors.

    ``factors`` is a map bus id -> factor (missing buses keep factor 1.0) or
    a single uniform factor. Factors must be positive. Everything else is
    unchanged; power factors are preserved per bus.
    """
    if isinstance(factors, Mapping):
        unknown = set(factors) - {b.id for b in case.buses}
        if unknown:
            raise CaseError(f"scale_loads: unknown bus ids {sorted(unknown)}")
        get = lambda bus_id: factors.get(bus_id, 1.0)
    else:
        uniform = float(factors)
        get = lambda bus_id: uniform
    for b in case.buses:
        if get(b.id) <= 0:
            raise CaseError(f"scale_loads: factor for bus {b.id} must be positive")
    buses = tuple(replace(b, p_d=b.p_d * get(b.id), q_d=b.q_d * get(b.id))
                  for b in case.buses)
    return replace(case, buses=buses)


def stress_to_total(case: NetworkCase, target_mw: float) -> NetworkCase:
    """Uniformly scale all demands so total real demand equals target_mw."""
    total = case.total_p_d()
    if total <= 0:
        raise CaseError("case has no real demand to scale")
    return scale_loads(case, target_mw / total)
