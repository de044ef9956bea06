"""Compiled reverse-mode kernels for the training hot loop.

States are column-major batches: a pure batch is (D, B) with one state per
column, a density matrix is (D, D). Gate codes: 0 RX, 1 RY, 2 RZ, 3 CX.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

GATE_CODES = {"RX": 0, "RY": 1, "RZ": 2, "CX": 3}


@njit(cache=True)
def _coeffs(kind, theta):
    c = math.cos(0.5 * theta)
    s = math.sin(0.5 * theta)
    if kind == 0:
        return complex(c, 0.0), complex(0.0, -s), complex(0.0, -s), complex(c, 0.0)
    if kind == 1:
        return complex(c, 0.0), complex(-s, 0.0), complex(s, 0.0), complex(c, 0.0)
    return complex(c, -s), 0j, 0j, complex(c, s)


@njit(cache=True, fastmath=True)
def _rows_batch(a, bit, kind, theta, sign):
    """Rotate column k of ``a`` by angle sign * theta[k]."""
    D, K = a.shape
    m = np.empty((4, K), dtype=np.complex128)
    for k in range(K):
        m[0, k], m[1, k], m[2, k], m[3, k] = _coeffs(kind, sign * theta[k])
    for i in range(D):
        if i & bit:
            continue
        j = i | bit
        for k in range(K):
            x = a[i, k]
            y = a[j, k]
            a[i, k] = m[0, k] * x + m[1, k] * y
            a[j, k] = m[2, k] * x + m[3, k] * y


@njit(cache=True, fastmath=True)
def _conjugate_blocks(a, bit, m00, m01, m10, m11):
    """a -> U a U^+ in one pass over the 2x2 blocks coupled by ``bit``."""
    D = a.shape[0]
    c00, c01, c10, c11 = m00.conjugate(), m01.conjugate(), m10.conjugate(), m11.conjugate()
    for rh in range(0, D, 2 * bit):
        for r0 in range(rh, rh + bit):
            r1 = r0 + bit
            for ch in range(0, D, 2 * bit):
                for q0 in range(ch, ch + bit):
                    q1 = q0 + bit
                    b00 = a[r0, q0]
                    b01 = a[r0, q1]
                    b10 = a[r1, q0]
                    b11 = a[r1, q1]
                    t00 = m00 * b00 + m01 * b10
                    t01 = m00 * b01 + m01 * b11
                    t10 = m10 * b00 + m11 * b10
                    t11 = m10 * b01 + m11 * b11
                    a[r0, q0] = t00 * c00 + t01 * c01
                    a[r0, q1] = t00 * c10 + t01 * c11
                    a[r1, q0] = t10 * c00 + t11 * c01
                    a[r1, q1] = t10 * c10 + t11 * c11


@njit(cache=True)
def _conjugate_by(a, bit, kind, theta):
    """a -> U a U^+ for the rotation U = exp(-i theta sigma / 2) on ``bit``."""
    if kind == 2:
        # diagonal: only entries whose row and column differ on the bit change
        ph = complex(math.cos(theta), -math.sin(theta))  # row bit 0, column bit 1
        phc = ph.conjugate()  # row bit 1, column bit 0
        D = a.shape[0]
        for r in range(D):
            for hi in range(0, D, 2 * bit):
                if r & bit:
                    for c in range(hi, hi + bit):
                        a[r, c] *= phc
                else:
                    for c in range(hi + bit, hi + 2 * bit):
                        a[r, c] *= ph
        return
    m00, m01, m10, m11 = _coeffs(kind, theta)
    _conjugate_blocks(a, bit, m00, m01, m10, m11)


@njit(cache=True)
def _swap_rows(a, cbit, tbit):
    D, K = a.shape
    for i in range(D):
        if (i & cbit) and not (i & tbit):
            j = i | tbit
            for k in range(K):
                x = a[i, k]
                a[i, k] = a[j, k]
                a[j, k] = x


@njit(cache=True)
def _swap_cols(a, cbit, tbit):
    D = a.shape[0]
    for r in range(D):
        for i in range(D):
            if (i & cbit) and not (i & tbit):
                j = i | tbit
                x = a[r, i]
                a[r, i] = a[r, j]
                a[r, j] = x


@njit(cache=True, fastmath=True)
def _dephase_mix(a, src, pm, p):
    """a <- (1 - p) a + p * (src with coherences between different pair-values removed)."""
    D = a.shape[0]
    for r in range(D):
        for c in range(D):
            keep = (r & pm) == (c & pm)
            a[r, c] = (1.0 - p) * a[r, c] + (p * src[r, c] if keep else 0j)


@njit(cache=True)
def _sigma_inner(lam, phi, bit, kind, k):
    """<lam_k| sigma |phi_k> for column k, sigma = X, Y or Z on ``bit``."""
    D = phi.shape[0]
    acc = 0j
    for i in range(D):
        if i & bit:
            continue
        j = i | bit
        x = phi[i, k]
        y = phi[j, k]
        if kind == 0:
            si, sj = y, x
        elif kind == 1:
            si, sj = -1j * y, 1j * x
        else:
            si, sj = x, -y
        acc += lam[i, k].conjugate() * si + lam[j, k].conjugate() * sj
    return acc


@njit(cache=True, nogil=True)
def pure_energy_grad(kinds, qa, qb, pidx, thetas, hmat, n):
    """Energies (B,) and gradients (B, M) for a batch of angle vectors (B, M)."""
    B, M = thetas.shape
    D = 1 << n
    G = kinds.shape[0]
    psi = np.zeros((D, B), dtype=np.complex128)
    for k in range(B):
        psi[0, k] = 1.0
    saved = np.zeros((M, D, B), dtype=np.complex128)
    for g in range(G):
        kind = kinds[g]
        if kind == 3:
            _swap_rows(psi, 1 << (n - 1 - qa[g]), 1 << (n - 1 - qb[g]))
            continue
        bit = 1 << (n - 1 - qa[g])
        par = pidx[g]
        _rows_batch(psi, bit, kind, thetas[:, par], 1.0)
        saved[par] = psi
    lam = hmat @ psi
    energies = np.zeros(B)
    for k in range(B):
        acc = 0j
        for i in range(D):
            acc += psi[i, k].conjugate() * lam[i, k]
        energies[k] = acc.real
    grads = np.zeros((B, M))
    for g in range(G - 1, -1, -1):
        kind = kinds[g]
        if kind == 3:
            _swap_rows(lam, 1 << (n - 1 - qa[g]), 1 << (n - 1 - qb[g]))
            continue
        bit = 1 << (n - 1 - qa[g])
        par = pidx[g]
        for k in range(B):
            grads[k, par] = _sigma_inner(lam, saved[par], bit, kind, k).imag
        _rows_batch(lam, bit, kind, thetas[:, par], -1.0)
    return energies, grads


@njit(cache=True, fastmath=True)
def _trace_sigma(obs, rho, bit, kind):
    """Tr[O sigma rho] for Hermitian rho, read row-wise as sum_ij O_ij f_j conj(rho_i,pi(j))."""
    D = rho.shape[0]
    acc = 0j
    for i in range(D):
        for hi in range(0, D, 2 * bit):
            for j in range(hi, hi + bit):
                k = j + bit
                if kind == 2:
                    acc += obs[i, j] * rho[i, j].conjugate() - obs[i, k] * rho[i, k].conjugate()
                elif kind == 0:
                    acc += obs[i, j] * rho[i, k].conjugate() + obs[i, k] * rho[i, j].conjugate()
                else:
                    acc += 1j * (obs[i, k] * rho[i, j].conjugate() - obs[i, j] * rho[i, k].conjugate())
    return acc


@njit(cache=True, nogil=True)
def mixed_energy_grad(kinds, qa, qb, pidx, theta, hmat, n, p, output_mode):
    """Energy and gradient of Tr[H rho_p(theta)] with dephased CX gates."""
    M = theta.shape[0]
    D = 1 << n
    G = kinds.shape[0]
    rho = np.zeros((D, D), dtype=np.complex128)
    rho[0, 0] = 1.0
    saved = np.empty((M, D, D), dtype=np.complex128)
    for g in range(G):
        kind = kinds[g]
        if kind == 3:
            cbit = 1 << (n - 1 - qa[g])
            tbit = 1 << (n - 1 - qb[g])
            src = rho.copy()
            _swap_rows(rho, cbit, tbit)
            _swap_cols(rho, cbit, tbit)
            if p > 0:
                if output_mode:
                    src = rho.copy()
                _dephase_mix(rho, src, cbit | tbit, p)
            continue
        _conjugate_by(rho, 1 << (n - 1 - qa[g]), kind, theta[pidx[g]])
        saved[pidx[g]] = rho
    energy = 0.0
    for i in range(D):
        for j in range(D):
            energy += (hmat[i, j] * rho[i, j].conjugate()).real
    obs = hmat.copy()
    grad = np.zeros(M)
    for g in range(G - 1, -1, -1):
        kind = kinds[g]
        if kind == 3:
            cbit = 1 << (n - 1 - qa[g])
            tbit = 1 << (n - 1 - qb[g])
            src = obs.copy()
            _swap_rows(obs, cbit, tbit)
            _swap_cols(obs, cbit, tbit)
            if p > 0:
                if output_mode:
                    # U^+ D(O) U equals D(U^+ O U) for permutation gates
                    src = obs.copy()
                _dephase_mix(obs, src, cbit | tbit, p)
            continue
        bit = 1 << (n - 1 - qa[g])
        par = pidx[g]
        grad[par] = _trace_sigma(obs, saved[par], bit, kind).imag
        _conjugate_by(obs, bit, kind, -theta[par])
    return energy, grad
