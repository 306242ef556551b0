"""Numba ``@njit`` kernels: the accelerated backend.

Same contracts as :mod:`.numpy_impl`; explicit loops instead of vectorized
numpy, compiled without fastmath so both backends agree to rounding error.
The Gibbs kernels consume the identical pre-drawn variate arrays.
"""

import numpy as np
from numba import njit

_GUARD = 1e-8

_jit = njit(cache=True, nogil=True)


@_jit
def _max_rel_change(cur, prev):
    worst = 0.0
    for i in range(cur.shape[0]):
        d = abs(cur[i] - prev[i]) / (abs(prev[i]) + _GUARD)
        if d > worst:
            worst = d
    return worst


@_jit
def _mfvb_single_core(
    Y,
    mu_lambda, sigma2_nu_prior, sigma2_lambda, kappa_psi, delta_psi_prior,
    kappa_sigma2, delta_sigma2_prior,
    mu_nu0, mu_inv_psi0, mu_lam0, mu_lam20, mu_eta0, mu_eta20, mu_inv_sigma20,
    tol, max_iter,
):
    n, m = Y.shape
    col_sum_y = np.zeros(m)
    col_sum_y2 = np.zeros(m)
    for i in range(n):
        for j in range(m):
            v = Y[i, j]
            col_sum_y[j] += v
            col_sum_y2[j] += v * v

    kappa_q_psi = n + kappa_psi + 1.0
    kappa_q_s2 = n + kappa_sigma2

    mu_nu = mu_nu0.copy()
    mu_inv_psi = mu_inv_psi0.copy()
    mu_lam = mu_lam0.copy()
    mu_lam2 = mu_lam20.copy()
    mu_eta = mu_eta0.copy()
    mu_eta2 = mu_eta20.copy()
    mu_inv_sigma2 = mu_inv_sigma20

    s2_nu = np.zeros(m)
    delta_q_psi = np.zeros(m)
    s2_lam = np.zeros(m)
    ycross = np.zeros(m)
    s2_eta = 0.0
    delta_q_s2 = 0.0

    size = 3 * m + 2 * (m - 1) + n + 2
    prev = np.empty(size)
    cur = np.empty(size)

    iters = 0
    converged = False
    rho = np.inf
    for it in range(1, max_iter + 1):
        iters = it

        sum_eta = 0.0
        sum_eta2 = 0.0
        for i in range(n):
            sum_eta += mu_eta[i]
            sum_eta2 += mu_eta2[i]
        for j in range(m):
            acc = 0.0
            for i in range(n):
                acc += Y[i, j] * mu_eta[i]
            ycross[j] = acc

        for j in range(m):
            s2_nu[j] = 1.0 / (n * mu_inv_psi[j] + 1.0 / sigma2_nu_prior)
            mu_nu[j] = s2_nu[j] * mu_inv_psi[j] * (col_sum_y[j] - mu_lam[j] * sum_eta)
            mu_nu2_j = s2_nu[j] + mu_nu[j] * mu_nu[j]
            delta_q_psi[j] = (
                col_sum_y2[j]
                + n * mu_nu2_j
                + mu_lam2[j] * sum_eta2
                - 2.0 * mu_nu[j] * col_sum_y[j]
                - 2.0 * mu_lam[j] * ycross[j]
                + 2.0 * mu_nu[j] * mu_lam[j] * sum_eta
                + (mu_lam2[j] - 2.0 * mu_lambda * mu_lam[j] + mu_lambda * mu_lambda)
                / sigma2_lambda
                + delta_psi_prior
            )
            mu_inv_psi[j] = kappa_q_psi / delta_q_psi[j]
            if j > 0:
                s2_lam[j] = 1.0 / (mu_inv_psi[j] * (sum_eta2 + 1.0 / sigma2_lambda))
                mu_lam[j] = (
                    s2_lam[j]
                    * mu_inv_psi[j]
                    * (ycross[j] - mu_nu[j] * sum_eta + mu_lambda / sigma2_lambda)
                )
                mu_lam2[j] = s2_lam[j] + mu_lam[j] * mu_lam[j]

        wsum = 0.0
        for j in range(m):
            wsum += mu_inv_psi[j] * mu_lam2[j]
        s2_eta = 1.0 / (wsum + mu_inv_sigma2)
        for i in range(n):
            acc = 0.0
            for j in range(m):
                acc += mu_inv_psi[j] * mu_lam[j] * (Y[i, j] - mu_nu[j])
            mu_eta[i] = s2_eta * acc
            mu_eta2[i] = s2_eta + mu_eta[i] * mu_eta[i]

        sum_eta2_new = 0.0
        for i in range(n):
            sum_eta2_new += mu_eta2[i]
        delta_q_s2 = sum_eta2_new + delta_sigma2_prior
        mu_inv_sigma2 = kappa_q_s2 / delta_q_s2

        pos = 0
        for j in range(m):
            cur[pos + j] = mu_nu[j]
        pos += m
        for j in range(m):
            cur[pos + j] = s2_nu[j]
        pos += m
        for j in range(m):
            cur[pos + j] = delta_q_psi[j]
        pos += m
        for j in range(1, m):
            cur[pos + j - 1] = mu_lam[j]
        pos += m - 1
        for j in range(1, m):
            cur[pos + j - 1] = s2_lam[j]
        pos += m - 1
        for i in range(n):
            cur[pos + i] = mu_eta[i]
        pos += n
        cur[pos] = s2_eta
        cur[pos + 1] = delta_q_s2

        if it > 1:
            rho = _max_rel_change(cur, prev)
            if rho < tol:
                converged = True
                break
        tmp = prev
        prev = cur
        cur = tmp

    return (
        mu_nu, s2_nu, delta_q_psi, mu_lam, s2_lam,
        mu_eta, s2_eta, delta_q_s2,
        iters, converged, rho,
    )


@_jit
def _mfvb_multi_core(
    Y, col_factor, ref_mask,
    mu_lambda, sigma2_nu_prior, sigma2_lambda, kappa_psi, delta_psi_prior,
    xi_Sigma, Lambda_Sigma,
    mu_nu0, mu_inv_psi0, mu_lam0, mu_lam20, mu_eta0, mu_eta20, M_inv0,
    tol, max_iter,
):
    n, m = Y.shape
    p = Lambda_Sigma.shape[0]
    n_free = 0
    for j in range(m):
        if not ref_mask[j]:
            n_free += 1
    col_sum_y = np.zeros(m)
    col_sum_y2 = np.zeros(m)
    for i in range(n):
        for j in range(m):
            v = Y[i, j]
            col_sum_y[j] += v
            col_sum_y2[j] += v * v

    kappa_q_psi = n + kappa_psi + 1.0
    xi_q = n + xi_Sigma
    m_inv_factor = xi_q - p + 1.0

    mu_nu = mu_nu0.copy()
    mu_inv_psi = mu_inv_psi0.copy()
    mu_lam = mu_lam0.copy()
    mu_lam2 = mu_lam20.copy()
    mu_eta = mu_eta0.copy()
    mu_eta2 = mu_eta20.copy()
    M_inv = M_inv0.copy()

    s2_nu = np.zeros(m)
    delta_q_psi = np.zeros(m)
    s2_lam = np.zeros(m)
    ycross = np.zeros(m)
    Sigma_eta = np.eye(p)
    Lambda_q = Lambda_Sigma.copy()
    sum_eta_k = np.zeros(p)
    sum_eta2_k = np.zeros(p)
    A = np.zeros((p, p))

    tri = p * (p + 1) // 2
    size = 3 * m + 2 * n_free + n * p + 2 * tri
    prev = np.empty(size)
    cur = np.empty(size)

    iters = 0
    converged = False
    rho = np.inf
    for it in range(1, max_iter + 1):
        iters = it

        for k in range(p):
            sum_eta_k[k] = 0.0
            sum_eta2_k[k] = 0.0
        for i in range(n):
            for k in range(p):
                sum_eta_k[k] += mu_eta[i, k]
                sum_eta2_k[k] += mu_eta2[i, k]
        for j in range(m):
            k = col_factor[j]
            acc = 0.0
            for i in range(n):
                acc += Y[i, j] * mu_eta[i, k]
            ycross[j] = acc

        for j in range(m):
            k = col_factor[j]
            s2_nu[j] = 1.0 / (n * mu_inv_psi[j] + 1.0 / sigma2_nu_prior)
            mu_nu[j] = s2_nu[j] * mu_inv_psi[j] * (
                col_sum_y[j] - mu_lam[j] * sum_eta_k[k]
            )
            mu_nu2_j = s2_nu[j] + mu_nu[j] * mu_nu[j]
            delta_q_psi[j] = (
                col_sum_y2[j]
                + n * mu_nu2_j
                + mu_lam2[j] * sum_eta2_k[k]
                - 2.0 * mu_nu[j] * col_sum_y[j]
                - 2.0 * mu_lam[j] * ycross[j]
                + 2.0 * mu_nu[j] * mu_lam[j] * sum_eta_k[k]
                + (mu_lam2[j] - 2.0 * mu_lambda * mu_lam[j] + mu_lambda * mu_lambda)
                / sigma2_lambda
                + delta_psi_prior
            )
            mu_inv_psi[j] = kappa_q_psi / delta_q_psi[j]
            if not ref_mask[j]:
                s2_lam[j] = 1.0 / (
                    mu_inv_psi[j] * (sum_eta2_k[k] + 1.0 / sigma2_lambda)
                )
                mu_lam[j] = (
                    s2_lam[j]
                    * mu_inv_psi[j]
                    * (ycross[j] - mu_nu[j] * sum_eta_k[k] + mu_lambda / sigma2_lambda)
                )
                mu_lam2[j] = s2_lam[j] + mu_lam[j] * mu_lam[j]

        for r_ in range(p):
            for c_ in range(p):
                A[r_, c_] = M_inv[r_, c_]
        for j in range(m):
            k = col_factor[j]
            A[k, k] += mu_lam2[j] * mu_inv_psi[j]
        Sigma_eta = np.linalg.inv(A)
        Sigma_eta = (Sigma_eta + Sigma_eta.T) / 2.0

        for i in range(n):
            bk = np.zeros(p)
            for j in range(m):
                bk[col_factor[j]] += (
                    mu_lam[j] * mu_inv_psi[j] * (Y[i, j] - mu_nu[j])
                )
            for k in range(p):
                acc = 0.0
                for k2 in range(p):
                    acc += Sigma_eta[k, k2] * bk[k2]
                mu_eta[i, k] = acc
            for k in range(p):
                mu_eta2[i, k] = Sigma_eta[k, k] + mu_eta[i, k] * mu_eta[i, k]

        for r_ in range(p):
            for c_ in range(p):
                acc = n * Sigma_eta[r_, c_] + Lambda_Sigma[r_, c_]
                for i in range(n):
                    acc += mu_eta[i, r_] * mu_eta[i, c_]
                Lambda_q[r_, c_] = acc
        Lambda_q = (Lambda_q + Lambda_q.T) / 2.0
        M_inv = m_inv_factor * np.linalg.inv(Lambda_q)
        M_inv = (M_inv + M_inv.T) / 2.0

        pos = 0
        for j in range(m):
            cur[pos + j] = mu_nu[j]
        pos += m
        for j in range(m):
            cur[pos + j] = s2_nu[j]
        pos += m
        for j in range(m):
            cur[pos + j] = delta_q_psi[j]
        pos += m
        for j in range(m):
            if not ref_mask[j]:
                cur[pos] = mu_lam[j]
                pos += 1
        for j in range(m):
            if not ref_mask[j]:
                cur[pos] = s2_lam[j]
                pos += 1
        for i in range(n):
            for k in range(p):
                cur[pos] = mu_eta[i, k]
                pos += 1
        for r_ in range(p):
            for c_ in range(r_, p):
                cur[pos] = Sigma_eta[r_, c_]
                pos += 1
        for r_ in range(p):
            for c_ in range(r_, p):
                cur[pos] = Lambda_q[r_, c_]
                pos += 1

        if it > 1:
            rho = _max_rel_change(cur, prev)
            if rho < tol:
                converged = True
                break
        tmp = prev
        prev = cur
        cur = tmp

    return (
        mu_nu, s2_nu, delta_q_psi, mu_lam, s2_lam,
        mu_eta, Sigma_eta, Lambda_q,
        iters, converged, rho,
    )


@_jit
def _gibbs_single_core(
    Y,
    mu_lambda, sigma2_nu_prior, sigma2_lambda, delta_psi_prior, delta_sigma2_prior,
    nu0, lam0, psi0, eta0, sigma20,
    z_nu, chi_psi, z_lam, z_eta, chi_s2,
    burn_in, thin,
    nu_out, lam_out, psi_out, eta_out, sigma2_out,
):
    n, m = Y.shape
    col_sum_y = np.zeros(m)
    for i in range(n):
        for j in range(m):
            col_sum_y[j] += Y[i, j]
    T = z_nu.shape[0]

    nu = nu0.copy()
    lam = lam0.copy()
    psi = psi0.copy()
    eta = eta0.copy()
    sigma2 = sigma20

    r = 0
    for t in range(T):
        sum_eta = 0.0
        sum_eta2 = 0.0
        for i in range(n):
            sum_eta += eta[i]
            sum_eta2 += eta[i] * eta[i]

        for j in range(m):
            var_nu = 1.0 / (n / psi[j] + 1.0 / sigma2_nu_prior)
            mean_nu = var_nu * (col_sum_y[j] - lam[j] * sum_eta) / psi[j]
            nu[j] = mean_nu + np.sqrt(var_nu) * z_nu[t, j]

        for j in range(m):
            acc = 0.0
            for i in range(n):
                d = Y[i, j] - nu[j] - lam[j] * eta[i]
                acc += d * d
            scale = acc + (lam[j] - mu_lambda) ** 2 / sigma2_lambda + delta_psi_prior
            psi[j] = scale / chi_psi[t, j]

        denom = sum_eta2 + 1.0 / sigma2_lambda
        for j in range(1, m):
            acc = 0.0
            for i in range(n):
                acc += Y[i, j] * eta[i]
            mean_lam = (acc - nu[j] * sum_eta + mu_lambda / sigma2_lambda) / denom
            var_lam = psi[j] / denom
            lam[j] = mean_lam + np.sqrt(var_lam) * z_lam[t, j - 1]

        prec = 1.0 / sigma2
        for j in range(m):
            prec += lam[j] * lam[j] / psi[j]
        var_eta = 1.0 / prec
        sd_eta = np.sqrt(var_eta)
        for i in range(n):
            acc = 0.0
            for j in range(m):
                acc += lam[j] * (Y[i, j] - nu[j]) / psi[j]
            eta[i] = var_eta * acc + sd_eta * z_eta[t, i]

        acc = 0.0
        for i in range(n):
            acc += eta[i] * eta[i]
        sigma2 = (acc + delta_sigma2_prior) / chi_s2[t]

        if t >= burn_in and (t - burn_in) % thin == 0:
            for j in range(m):
                nu_out[r, j] = nu[j]
                lam_out[r, j] = lam[j]
                psi_out[r, j] = psi[j]
            for i in range(n):
                eta_out[r, i] = eta[i]
            sigma2_out[r] = sigma2
            r += 1
    return r


@_jit
def _gibbs_multi_core(
    Y, col_factor, ref_mask,
    mu_lambda, sigma2_nu_prior, sigma2_lambda, delta_psi_prior, Lambda_Sigma,
    nu0, lam0, psi0, eta0, Sigma_inv0,
    z_nu, chi_psi, z_lam, z_eta, chi_bart, z_bart,
    burn_in, thin,
    nu_out, lam_out, psi_out, eta_out, Sigma_out,
):
    n, m = Y.shape
    p = Lambda_Sigma.shape[0]
    col_sum_y = np.zeros(m)
    for i in range(n):
        for j in range(m):
            col_sum_y[j] += Y[i, j]
    T = z_nu.shape[0]

    nu = nu0.copy()
    lam = lam0.copy()
    psi = psi0.copy()
    eta = eta0.copy()
    Sigma_inv = Sigma_inv0.copy()

    sum_eta_k = np.zeros(p)
    sum_eta2_k = np.zeros(p)
    A = np.zeros((p, p))
    S = np.zeros((p, p))
    bart = np.zeros((p, p))

    r = 0
    for t in range(T):
        for k in range(p):
            sum_eta_k[k] = 0.0
            sum_eta2_k[k] = 0.0
        for i in range(n):
            for k in range(p):
                sum_eta_k[k] += eta[i, k]
                sum_eta2_k[k] += eta[i, k] * eta[i, k]

        for j in range(m):
            k = col_factor[j]
            var_nu = 1.0 / (n / psi[j] + 1.0 / sigma2_nu_prior)
            mean_nu = var_nu * (col_sum_y[j] - lam[j] * sum_eta_k[k]) / psi[j]
            nu[j] = mean_nu + np.sqrt(var_nu) * z_nu[t, j]

        for j in range(m):
            k = col_factor[j]
            acc = 0.0
            for i in range(n):
                d = Y[i, j] - nu[j] - lam[j] * eta[i, k]
                acc += d * d
            scale = acc + (lam[j] - mu_lambda) ** 2 / sigma2_lambda + delta_psi_prior
            psi[j] = scale / chi_psi[t, j]

        jf = 0
        for j in range(m):
            if not ref_mask[j]:
                k = col_factor[j]
                acc = 0.0
                for i in range(n):
                    acc += Y[i, j] * eta[i, k]
                denom = sum_eta2_k[k] + 1.0 / sigma2_lambda
                mean_lam = (
                    acc - nu[j] * sum_eta_k[k] + mu_lambda / sigma2_lambda
                ) / denom
                var_lam = psi[j] / denom
                lam[j] = mean_lam + np.sqrt(var_lam) * z_lam[t, jf]
                jf += 1

        for r_ in range(p):
            for c_ in range(p):
                A[r_, c_] = Sigma_inv[r_, c_]
        for j in range(m):
            k = col_factor[j]
            A[k, k] += lam[j] * lam[j] / psi[j]
        A = (A + A.T) / 2.0
        C = np.linalg.cholesky(A)
        A_inv = np.linalg.inv(A)
        C_inv = np.linalg.inv(C)
        for i in range(n):
            bk = np.zeros(p)
            for j in range(m):
                bk[col_factor[j]] += lam[j] * (Y[i, j] - nu[j]) / psi[j]
            # eta_i = A^{-1} b + C^{-T} z with A = C C^T
            for k in range(p):
                mu_ik = 0.0
                for k2 in range(p):
                    mu_ik += A_inv[k, k2] * bk[k2]
                draw = 0.0
                for k2 in range(p):
                    draw += C_inv[k2, k] * z_eta[t, i, k2]
                eta[i, k] = mu_ik + draw

        for r_ in range(p):
            for c_ in range(p):
                acc = Lambda_Sigma[r_, c_]
                for i in range(n):
                    acc += eta[i, r_] * eta[i, c_]
                S[r_, c_] = acc
        S = (S + S.T) / 2.0
        S_inv = np.linalg.inv(S)
        S_inv = (S_inv + S_inv.T) / 2.0
        Lw = np.linalg.cholesky(S_inv)
        zi = 0
        for r_ in range(p):
            for c_ in range(p):
                bart[r_, c_] = 0.0
        for r_ in range(p):
            for c_ in range(r_):
                bart[r_, c_] = z_bart[t, zi]
                zi += 1
            bart[r_, r_] = np.sqrt(chi_bart[t, r_])
        M = Lw @ bart
        W = M @ M.T
        Sigma_inv = (W + W.T) / 2.0
        Sigma = np.linalg.inv(Sigma_inv)
        Sigma = (Sigma + Sigma.T) / 2.0

        if t >= burn_in and (t - burn_in) % thin == 0:
            for j in range(m):
                nu_out[r, j] = nu[j]
                lam_out[r, j] = lam[j]
                psi_out[r, j] = psi[j]
            for i in range(n):
                for k in range(p):
                    eta_out[r, i, k] = eta[i, k]
            for r_ in range(p):
                for c_ in range(p):
                    Sigma_out[r, r_, c_] = Sigma[r_, c_]
            r += 1
    return r


def mfvb_single(Y, *args):
    return _mfvb_single_core(np.ascontiguousarray(Y), *args)


def mfvb_multi(Y, col_factor, ref_mask, *args):
    return _mfvb_multi_core(
        np.ascontiguousarray(Y),
        np.ascontiguousarray(col_factor, dtype=np.int64),
        np.ascontiguousarray(ref_mask),
        *args,
    )


def gibbs_single_chain(Y, *args):
    return _gibbs_single_core(np.ascontiguousarray(Y), *args)


def gibbs_multi_chain(Y, col_factor, ref_mask, *args):
    return _gibbs_multi_core(
        np.ascontiguousarray(Y),
        np.ascontiguousarray(col_factor, dtype=np.int64),
        np.ascontiguousarray(ref_mask),
        *args,
    )
