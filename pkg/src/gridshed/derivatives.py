"""First and second derivatives of AC injections and branch flows.

Polar coordinates throughout: the complex bus voltage is V = vm * e^{j va}.
All functions work on dense complex matrices (fine for the network sizes this
package targets) and follow the usual complex-matrix formulations, so the
real/imaginary parts give the P/Q blocks directly. Every formula is checked
against central finite differences in the test suite.
"""

from __future__ import annotations

import numpy as np


def complex_voltage(vm: np.ndarray, va: np.ndarray) -> np.ndarray:
    return vm * np.exp(1j * va)


def bus_injections(ybus: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Complex net injections S = V .* conj(Y V) (per-unit)."""
    return v * np.conj(ybus @ v)


def injection_jacobian(ybus: np.ndarray, v: np.ndarray):
    """(dS/dva, dS/dvm), each complex N x N.

    dS/dva = j diag(V) conj(diag(I) - Y diag(V))
    dS/dvm = diag(V) conj(Y diag(Vn)) + conj(diag(I)) diag(Vn),  Vn = V/|V|
    """
    ibus = ybus @ v
    vn = v / np.abs(v)
    diag_v = np.diag(v)
    ds_dva = 1j * diag_v @ np.conj(np.diag(ibus) - ybus @ diag_v)
    ds_dvm = diag_v @ np.conj(ybus @ np.diag(vn)) + np.conj(np.diag(ibus)) @ np.diag(vn)
    return ds_dva, ds_dvm


def injection_hessian(ybus: np.ndarray, v: np.ndarray, lam: np.ndarray):
    """Second derivatives of lam^T S(V) for a real weight vector ``lam``.

    Returns complex blocks (haa, hav, hva, hvv): take the real part for a
    weighted sum of P injections and the imaginary part for Q.
    """
    n = len(v)
    ibus = ybus @ v
    diaglam = np.diag(lam)
    diagv = np.diag(v)

    a = np.diag(lam * v)
    b = ybus @ diagv
    c = a @ np.conj(b)
    d = ybus.conj().T @ diagv
    e = np.conj(diagv) @ (d @ diaglam - np.diag(d @ lam))
    f = c - a @ np.diag(np.conj(ibus))
    g = np.diag(1.0 / np.abs(v))

    haa = e + f
    hva = 1j * g @ (e - f)
    hav = hva.T
    hvv = g @ (c + c.T) @ g
    return haa, hav, hva, hvv


def branch_flows(yf: np.ndarray, yt: np.ndarray, f_pos: np.ndarray,
                 t_pos: np.ndarray, v: np.ndarray):
    """Complex power entering each branch at its two ends.

    s_from[k] = V[f_k] conj(row_k(Yf) V): power leaving bus f_k into branch k.
    Same convention at the to end, so both values are bus-side oriented.
    """
    s_from = v[f_pos] * np.conj(yf @ v)
    s_to = v[t_pos] * np.conj(yt @ v)
    return s_from, s_to


def flow_jacobian(ybr: np.ndarray, end_pos: np.ndarray, v: np.ndarray):
    """(dS/dva, dS/dvm) for one branch end, complex nl x N.

    ``ybr`` is the end's admittance rows (Yf or Yt); ``end_pos`` the bus
    position of that end per branch.
    """
    nl, n = ybr.shape
    ibr = ybr @ v
    vn = v / np.abs(v)
    cvf = np.zeros((nl, n), dtype=complex)
    cvnf = np.zeros((nl, n), dtype=complex)
    rows = np.arange(nl)
    cvf[rows, end_pos] = v[end_pos]
    cvnf[rows, end_pos] = vn[end_pos]
    ds_dva = 1j * (np.conj(np.diag(ibr)) @ cvf - np.diag(v[end_pos]) @ np.conj(ybr @ np.diag(v)))
    ds_dvm = np.diag(v[end_pos]) @ np.conj(ybr @ np.diag(vn)) + np.conj(np.diag(ibr)) @ cvnf
    return ds_dva, ds_dvm


def _flow_hessian_complex(ybr: np.ndarray, end_pos: np.ndarray, v: np.ndarray,
                          lam: np.ndarray):
    """Second derivatives of lam^T S_branch for complex weights ``lam``."""
    nl, n = ybr.shape
    cbr = np.zeros((nl, n), dtype=complex)
    cbr[np.arange(nl), end_pos] = 1.0
    diagv = np.diag(v)

    a = ybr.conj().T @ np.diag(lam) @ cbr
    b = np.conj(diagv) @ a @ diagv
    d = np.diag((a @ v) * np.conj(v))
    e = np.diag((a.T @ np.conj(v)) * v)
    f = b + b.T
    g = np.diag(1.0 / np.abs(v))

    haa = f - d - e
    hva = 1j * g @ (b - b.T - d + e)
    hav = hva.T
    hvv = g @ f @ g
    return haa, hav, hva, hvv


def squared_flow_values(s_branch: np.ndarray) -> np.ndarray:
    """|S|^2 per branch end."""
    return (s_branch * np.conj(s_branch)).real


def squared_flow_jacobian(s_branch: np.ndarray, ds_dva: np.ndarray,
                          ds_dvm: np.ndarray):
    """d|S|^2/d(va, vm) = 2 Re(conj(S) dS/d.) per branch end."""
    cs = np.conj(s_branch)[:, None]
    da = 2.0 * (cs * ds_dva).real
    dm = 2.0 * (cs * ds_dvm).real
    return da, dm


def squared_flow_hessian(ybr: np.ndarray, end_pos: np.ndarray, v: np.ndarray,
                         s_branch: np.ndarray, ds_dva: np.ndarray,
                         ds_dvm: np.ndarray, mu: np.ndarray):
    """Hessian blocks of sum_k mu_k |S_k|^2 w.r.t. (va, vm); real matrices."""
    saa, sav, sva, svv = _flow_hessian_complex(
        ybr, end_pos, v, np.conj(s_branch) * mu)
    diagmu = np.diag(mu)
    haa = 2.0 * (saa + ds_dva.T @ diagmu @ np.conj(ds_dva)).real
    hav = 2.0 * (sav + ds_dva.T @ diagmu @ np.conj(ds_dvm)).real
    hva = 2.0 * (sva + ds_dvm.T @ diagmu @ np.conj(ds_dva)).real
    hvv = 2.0 * (svv + ds_dvm.T @ diagmu @ np.conj(ds_dvm)).real
    return haa, hav, hva, hvv
