"""Toolkit for AC optimal load shedding under line outages and for training
per-bus decision rules that predict the optimal shed from local measurements.
"""

from gridshed.netcase import (
    AdmittanceMatrix,
    BranchRecord,
    BusRecord,
    CaseError,
    GenRecord,
    NetworkCase,
    apply_outage,
    build_admittance,
    case_digest,
    load_case14,
    parse_case,
    scale_loads,
    serialize_case,
    stress_to_total,
)

__all__ = [
    "AdmittanceMatrix", "BranchRecord", "BusRecord", "CaseError", "GenRecord",
    "NetworkCase", "apply_outage", "build_admittance", "case_digest",
    "load_case14", "parse_case", "scale_loads", "serialize_case",
    "stress_to_total",
]

__version__ = "0.1.0"
