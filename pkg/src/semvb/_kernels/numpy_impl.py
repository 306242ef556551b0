"""Pure-numpy kernels: the fallback backend.

Update order follows the coordinate-ascent sweeps exactly. Within the
per-column block the updates of different columns never read each other, and
within the per-row block the rows are mutually independent given the rest, so
vectorizing over columns/rows reproduces the sequential sweep. The Gibbs
chains consume caller-supplied standard variates (normal and chi-squared
draws with fixed degrees of freedom) so that both backends replay the same
seeded stream.
"""

import numpy as np

_GUARD = 1e-8  # denominator guard in the relative-change metric


def _rel_change(cur: np.ndarray, prev: np.ndarray) -> float:
    return float(np.max(np.abs(cur - prev) / (np.abs(prev) + _GUARD)))


# ---------------------------------------------------------------------------
# MFVB, single factor
# ---------------------------------------------------------------------------

def mfvb_single(
    Y,
    mu_lambda, sigma2_nu_prior, sigma2_lambda, kappa_psi, delta_psi_prior,
    kappa_sigma2, delta_sigma2_prior,
    mu_nu0, mu_inv_psi0, mu_lam0, mu_lam20, mu_eta0, mu_eta20, mu_inv_sigma20,
    tol, max_iter,
):
    n, m = Y.shape
    col_sum_y = Y.sum(axis=0)
    col_sum_y2 = (Y * Y).sum(axis=0)

    kappa_q_psi = n + kappa_psi + 1.0
    kappa_q_s2 = n + kappa_sigma2

    mu_nu = mu_nu0.copy()
    mu_inv_psi = mu_inv_psi0.copy()
    mu_lam = mu_lam0.copy()
    mu_lam2 = mu_lam20.copy()
    mu_eta = mu_eta0.copy()
    mu_eta2 = mu_eta20.copy()
    mu_inv_sigma2 = float(mu_inv_sigma20)

    s2_nu = np.zeros(m)
    delta_q_psi = np.zeros(m)
    s2_lam = np.zeros(m)
    s2_eta = 0.0
    delta_q_s2 = 0.0

    size = 3 * m + 2 * (m - 1) + n + 2
    prev = np.empty(size)
    cur = np.empty(size)

    prior_quad = lambda: (mu_lam2 - 2.0 * mu_lambda * mu_lam + mu_lambda**2) / sigma2_lambda

    iters = 0
    converged = False
    rho = np.inf
    for it in range(1, int(max_iter) + 1):
        iters = it

        # per-column block: nu_j, psi_j, then free lambda_j
        s2_nu = 1.0 / (n * mu_inv_psi + 1.0 / sigma2_nu_prior)
        sum_eta = mu_eta.sum()
        sum_eta2 = mu_eta2.sum()
        ycross = Y.T @ mu_eta
        mu_nu = s2_nu * mu_inv_psi * (col_sum_y - mu_lam * sum_eta)
        mu_nu2 = s2_nu + mu_nu**2
        delta_q_psi = (
            col_sum_y2
            + n * mu_nu2
            + mu_lam2 * sum_eta2
            - 2.0 * mu_nu * col_sum_y
            - 2.0 * mu_lam * ycross
            + 2.0 * mu_nu * mu_lam * sum_eta
            + prior_quad()
            + delta_psi_prior
        )
        mu_inv_psi = kappa_q_psi / delta_q_psi

        s2_lam_free = 1.0 / (mu_inv_psi[1:] * (sum_eta2 + 1.0 / sigma2_lambda))
        mu_lam_free = (
            s2_lam_free
            * mu_inv_psi[1:]
            * (ycross[1:] - mu_nu[1:] * sum_eta + mu_lambda / sigma2_lambda)
        )
        s2_lam = np.concatenate(([0.0], s2_lam_free))
        mu_lam = np.concatenate(([1.0], mu_lam_free))
        mu_lam2 = np.concatenate(([1.0], s2_lam_free + mu_lam_free**2))

        # per-row block: eta_i (the variance is shared across rows)
        s2_eta = 1.0 / (float(mu_inv_psi @ mu_lam2) + mu_inv_sigma2)
        w = mu_inv_psi * mu_lam
        mu_eta = s2_eta * ((Y - mu_nu) @ w)
        mu_eta2 = s2_eta + mu_eta**2

        # factor-scale block
        delta_q_s2 = mu_eta2.sum() + delta_sigma2_prior
        mu_inv_sigma2 = kappa_q_s2 / delta_q_s2

        cur[0:m] = mu_nu
        cur[m:2 * m] = s2_nu
        cur[2 * m:3 * m] = delta_q_psi
        cur[3 * m:4 * m - 1] = mu_lam[1:]
        cur[4 * m - 1:5 * m - 2] = s2_lam[1:]
        cur[5 * m - 2:5 * m - 2 + n] = mu_eta
        cur[-2] = s2_eta
        cur[-1] = delta_q_s2

        if it > 1:
            rho = _rel_change(cur, prev)
            if rho < tol:
                converged = True
                prev, cur = cur, prev
                break
        prev, cur = cur, prev

    return (
        mu_nu, s2_nu, delta_q_psi, mu_lam, s2_lam,
        mu_eta, s2_eta, delta_q_s2,
        iters, converged, rho,
    )


# ---------------------------------------------------------------------------
# MFVB, multiple factors
# ---------------------------------------------------------------------------

def mfvb_multi(
    Y, col_factor, ref_mask,
    mu_lambda, sigma2_nu_prior, sigma2_lambda, kappa_psi, delta_psi_prior,
    xi_Sigma, Lambda_Sigma,
    mu_nu0, mu_inv_psi0, mu_lam0, mu_lam20, mu_eta0, mu_eta20, M_inv0,
    tol, max_iter,
):
    n, m = Y.shape
    p = Lambda_Sigma.shape[0]
    free = ~ref_mask
    n_free = int(free.sum())
    col_sum_y = Y.sum(axis=0)
    col_sum_y2 = (Y * Y).sum(axis=0)
    # indicator matrix summing per-column quantities into their factor
    G = np.zeros((m, p))
    G[np.arange(m), col_factor] = 1.0
    iu = np.triu_indices(p)

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
    Sigma_eta = np.eye(p)
    Lambda_q = Lambda_Sigma.copy()

    tri = p * (p + 1) // 2
    size = 3 * m + 2 * n_free + n * p + 2 * tri
    prev = np.empty(size)
    cur = np.empty(size)

    iters = 0
    converged = False
    rho = np.inf
    for it in range(1, int(max_iter) + 1):
        iters = it

        sum_eta_k = mu_eta.sum(axis=0)          # (p,)
        sum_eta2_k = mu_eta2.sum(axis=0)        # (p,)
        eta_cols = mu_eta[:, col_factor]        # (n, m) factor mean per column
        ycross = np.einsum("ij,ij->j", Y, eta_cols)

        s2_nu = 1.0 / (n * mu_inv_psi + 1.0 / sigma2_nu_prior)
        mu_nu = s2_nu * mu_inv_psi * (col_sum_y - mu_lam * sum_eta_k[col_factor])
        mu_nu2 = s2_nu + mu_nu**2
        delta_q_psi = (
            col_sum_y2
            + n * mu_nu2
            + mu_lam2 * sum_eta2_k[col_factor]
            - 2.0 * mu_nu * col_sum_y
            - 2.0 * mu_lam * ycross
            + 2.0 * mu_nu * mu_lam * sum_eta_k[col_factor]
            + (mu_lam2 - 2.0 * mu_lambda * mu_lam + mu_lambda**2) / sigma2_lambda
            + delta_psi_prior
        )
        mu_inv_psi = kappa_q_psi / delta_q_psi

        s2f = 1.0 / (mu_inv_psi[free] * (sum_eta2_k[col_factor][free] + 1.0 / sigma2_lambda))
        muf = s2f * mu_inv_psi[free] * (
            ycross[free]
            - mu_nu[free] * sum_eta_k[col_factor][free]
            + mu_lambda / sigma2_lambda
        )
        s2_lam = np.zeros(m)
        s2_lam[free] = s2f
        mu_lam = np.where(free, 0.0, 1.0)
        mu_lam[free] = muf
        mu_lam2 = np.where(free, 0.0, 1.0)
        mu_lam2[free] = s2f + muf**2

        # eta block: shared covariance, then row means
        w2 = (mu_lam2 * mu_inv_psi) @ G       # (p,)
        A = np.diag(w2) + M_inv
        Sigma_eta = np.linalg.inv(A)
        Sigma_eta = (Sigma_eta + Sigma_eta.T) / 2.0
        B = ((Y - mu_nu) * (mu_lam * mu_inv_psi)) @ G   # (n, p)
        mu_eta = B @ Sigma_eta
        mu_eta2 = np.diag(Sigma_eta) + mu_eta**2

        # Sigma block
        Lambda_q = n * Sigma_eta + mu_eta.T @ mu_eta + Lambda_Sigma
        Lambda_q = (Lambda_q + Lambda_q.T) / 2.0
        M_inv = m_inv_factor * np.linalg.inv(Lambda_q)
        M_inv = (M_inv + M_inv.T) / 2.0

        pos = 0
        for block in (mu_nu, s2_nu, delta_q_psi, mu_lam[free], s2_lam[free]):
            cur[pos:pos + block.size] = block
            pos += block.size
        cur[pos:pos + n * p] = mu_eta.ravel()
        pos += n * p
        cur[pos:pos + tri] = Sigma_eta[iu]
        pos += tri
        cur[pos:pos + tri] = Lambda_q[iu]

        if it > 1:
            rho = _rel_change(cur, prev)
            if rho < tol:
                converged = True
                prev, cur = cur, prev
                break
        prev, cur = cur, prev

    return (
        mu_nu, s2_nu, delta_q_psi, mu_lam, s2_lam,
        mu_eta, Sigma_eta, Lambda_q,
        iters, converged, rho,
    )


# ---------------------------------------------------------------------------
# Gibbs, single factor
# ---------------------------------------------------------------------------

def gibbs_single_chain(
    Y,
    mu_lambda, sigma2_nu_prior, sigma2_lambda, delta_psi_prior, delta_sigma2_prior,
    nu, lam, psi, eta, sigma2,
    z_nu, chi_psi, z_lam, z_eta, chi_s2,
    burn_in, thin,
    nu_out, lam_out, psi_out, eta_out, sigma2_out,
):
    n, m = Y.shape
    col_sum_y = Y.sum(axis=0)
    T = z_nu.shape[0]

    nu = nu.copy()
    lam = lam.copy()
    psi = psi.copy()
    eta = eta.copy()
    sigma2 = float(sigma2)

    r = 0
    for t in range(T):
        sum_eta = eta.sum()
        sum_eta2 = float(eta @ eta)

        var_nu = 1.0 / (n / psi + 1.0 / sigma2_nu_prior)
        mean_nu = var_nu * (col_sum_y - lam * sum_eta) / psi
        nu = mean_nu + np.sqrt(var_nu) * z_nu[t]

        resid = Y - nu - np.outer(eta, lam)
        scale_psi = (
            (resid * resid).sum(axis=0)
            + (lam - mu_lambda) ** 2 / sigma2_lambda
            + delta_psi_prior
        )
        psi = scale_psi / chi_psi[t]

        denom = sum_eta2 + 1.0 / sigma2_lambda
        ycross = Y.T @ eta - nu * sum_eta
        mean_lam = (ycross + mu_lambda / sigma2_lambda) / denom
        var_lam = psi / denom
        lam = lam.copy()
        lam[1:] = mean_lam[1:] + np.sqrt(var_lam[1:]) * z_lam[t]

        prec_eta = float((lam * lam / psi).sum()) + 1.0 / sigma2
        var_eta = 1.0 / prec_eta
        mean_eta = var_eta * ((Y - nu) @ (lam / psi))
        eta = mean_eta + np.sqrt(var_eta) * z_eta[t]

        sigma2 = (float(eta @ eta) + delta_sigma2_prior) / chi_s2[t]

        if t >= burn_in and (t - burn_in) % thin == 0:
            nu_out[r] = nu
            lam_out[r] = lam
            psi_out[r] = psi
            eta_out[r] = eta
            sigma2_out[r] = sigma2
            r += 1
    return r


# ---------------------------------------------------------------------------
# Gibbs, multiple factors
# ---------------------------------------------------------------------------

def gibbs_multi_chain(
    Y, col_factor, ref_mask,
    mu_lambda, sigma2_nu_prior, sigma2_lambda, delta_psi_prior, Lambda_Sigma,
    nu, lam, psi, eta, Sigma_inv,
    z_nu, chi_psi, z_lam, z_eta, chi_bart, z_bart,
    burn_in, thin,
    nu_out, lam_out, psi_out, eta_out, Sigma_out,
):
    n, m = Y.shape
    p = Lambda_Sigma.shape[0]
    col_sum_y = Y.sum(axis=0)
    free = ~ref_mask
    G = np.zeros((m, p))
    G[np.arange(m), col_factor] = 1.0
    rows, cols = np.tril_indices(p, k=-1)
    T = z_nu.shape[0]

    nu = nu.copy()
    lam = lam.copy()
    psi = psi.copy()
    eta = eta.copy()
    Sigma_inv = Sigma_inv.copy()

    r = 0
    for t in range(T):
        sum_eta_k = eta.sum(axis=0)
        sum_eta2_k = (eta * eta).sum(axis=0)
        eta_cols = eta[:, col_factor]

        var_nu = 1.0 / (n / psi + 1.0 / sigma2_nu_prior)
        mean_nu = var_nu * (col_sum_y - lam * sum_eta_k[col_factor]) / psi
        nu = mean_nu + np.sqrt(var_nu) * z_nu[t]

        resid = Y - nu - eta_cols * lam
        scale_psi = (
            (resid * resid).sum(axis=0)
            + (lam - mu_lambda) ** 2 / sigma2_lambda
            + delta_psi_prior
        )
        psi = scale_psi / chi_psi[t]

        denom = sum_eta2_k[col_factor] + 1.0 / sigma2_lambda
        ycross = np.einsum("ij,ij->j", Y, eta_cols) - nu * sum_eta_k[col_factor]
        mean_lam = (ycross + mu_lambda / sigma2_lambda) / denom
        var_lam = psi / denom
        lam = np.where(free, mean_lam + np.sqrt(var_lam) * _expand(z_lam[t], free), 1.0)

        w2 = (lam * lam / psi) @ G
        A = np.diag(w2) + Sigma_inv
        A = (A + A.T) / 2.0
        C = np.linalg.cholesky(A)
        A_inv = np.linalg.inv(A)
        b = ((Y - nu) * (lam / psi)) @ G
        mean_eta = b @ A_inv.T
        eta = mean_eta + z_eta[t] @ np.linalg.inv(C)

        S = Lambda_Sigma + eta.T @ eta
        S_inv = np.linalg.inv((S + S.T) / 2.0)
        Lw = np.linalg.cholesky((S_inv + S_inv.T) / 2.0)
        bart = np.zeros((p, p))
        if rows.size:
            bart[rows, cols] = z_bart[t]
        bart[np.arange(p), np.arange(p)] = np.sqrt(chi_bart[t])
        M = Lw @ bart
        W = M @ M.T
        Sigma_inv = (W + W.T) / 2.0
        Sigma = np.linalg.inv(Sigma_inv)
        Sigma = (Sigma + Sigma.T) / 2.0

        if t >= burn_in and (t - burn_in) % thin == 0:
            nu_out[r] = nu
            lam_out[r] = lam
            psi_out[r] = psi
            eta_out[r] = eta
            Sigma_out[r] = Sigma
            r += 1
    return r


def _expand(z_free, free):
    out = np.zeros(free.shape[0])
    out[free] = z_free
    return out
