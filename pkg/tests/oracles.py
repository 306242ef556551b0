"""Independent brute-force oracles used only by the tests.

``single_sweep`` and ``multi_sweep`` re-derive one full coordinate-ascent
sweep with literal per-index loops, kept deliberately separate from the
package kernels so the fitters are checked against a second implementation
of the same update equations.
"""

import numpy as np


def state_from_single(state):
    return {
        "mu_nu": state.mu_q_nu.copy(),
        "s2_nu": state.sigma2_q_nu.copy(),
        "mu_nu2": state.mu_q_nu2.copy(),
        "delta_psi": state.delta_q_psi.copy(),
        "mu_inv_psi": state.mu_q_inv_psi.copy(),
        "mu_lam": state.mu_q_lambda.copy(),
        "s2_lam": state.sigma2_q_lambda.copy(),
        "mu_lam2": state.mu_q_lambda2.copy(),
        "mu_eta": state.mu_q_eta.copy(),
        "s2_eta": state.sigma2_q_eta,
        "mu_eta2": state.mu_q_eta2.copy(),
        "delta_s2": state.delta_q_sigma2,
        "mu_inv_s2": state.mu_q_inv_sigma2,
    }


def single_sweep(Y, hyper, s):
    """One literal sweep of the single-factor scheme; returns a new dict."""
    n, m = Y.shape
    s = {k: (v.copy() if isinstance(v, np.ndarray) else v) for k, v in s.items()}
    kq_psi = n + hyper.kappa_psi + 1.0
    kq_s2 = n + hyper.kappa_sigma2

    for j in range(m):
        s["s2_nu"][j] = 1.0 / (n * s["mu_inv_psi"][j] + 1.0 / hyper.sigma2_nu)
        acc = 0.0
        for i in range(n):
            acc += Y[i, j] - s["mu_lam"][j] * s["mu_eta"][i]
        s["mu_nu"][j] = s["s2_nu"][j] * s["mu_inv_psi"][j] * acc
        s["mu_nu2"][j] = s["s2_nu"][j] + s["mu_nu"][j] ** 2

        acc = 0.0
        for i in range(n):
            acc += (
                Y[i, j] ** 2
                + s["mu_nu2"][j]
                + s["mu_lam2"][j] * s["mu_eta2"][i]
                - 2.0 * Y[i, j] * s["mu_nu"][j]
                - 2.0 * Y[i, j] * s["mu_lam"][j] * s["mu_eta"][i]
                + 2.0 * s["mu_nu"][j] * s["mu_lam"][j] * s["mu_eta"][i]
            )
        acc += (
            s["mu_lam2"][j]
            - 2.0 * hyper.mu_lambda * s["mu_lam"][j]
            + hyper.mu_lambda**2
        ) / hyper.sigma2_lambda
        s["delta_psi"][j] = acc + hyper.delta_psi
        s["mu_inv_psi"][j] = kq_psi / s["delta_psi"][j]

        if j > 0:
            sum_eta2 = sum(s["mu_eta2"][i] for i in range(n))
            s["s2_lam"][j] = 1.0 / (
                s["mu_inv_psi"][j] * (sum_eta2 + 1.0 / hyper.sigma2_lambda)
            )
            acc = 0.0
            for i in range(n):
                acc += s["mu_eta"][i] * (Y[i, j] - s["mu_nu"][j])
            s["mu_lam"][j] = (
                s["s2_lam"][j]
                * (acc + hyper.mu_lambda / hyper.sigma2_lambda)
                * s["mu_inv_psi"][j]
            )
            s["mu_lam2"][j] = s["s2_lam"][j] + s["mu_lam"][j] ** 2

    denom = sum(s["mu_inv_psi"][j] * s["mu_lam2"][j] for j in range(m))
    s["s2_eta"] = 1.0 / (denom + s["mu_inv_s2"])
    for i in range(n):
        acc = 0.0
        for j in range(m):
            acc += s["mu_inv_psi"][j] * s["mu_lam"][j] * (Y[i, j] - s["mu_nu"][j])
        s["mu_eta"][i] = s["s2_eta"] * acc
        s["mu_eta2"][i] = s["s2_eta"] + s["mu_eta"][i] ** 2

    s["delta_s2"] = sum(s["mu_eta2"][i] for i in range(n)) + hyper.delta_sigma2
    s["mu_inv_s2"] = kq_s2 / s["delta_s2"]
    return s


def state_from_multi(state):
    return {
        "mu_nu": state.mu_q_nu.copy(),
        "s2_nu": state.sigma2_q_nu.copy(),
        "mu_nu2": state.mu_q_nu2.copy(),
        "delta_psi": state.delta_q_psi.copy(),
        "mu_inv_psi": state.mu_q_inv_psi.copy(),
        "mu_lam": state.mu_q_lambda.copy(),
        "s2_lam": state.sigma2_q_lambda.copy(),
        "mu_lam2": state.mu_q_lambda2.copy(),
        "mu_eta": state.mu_q_eta.copy(),
        "Sigma_eta": state.Sigma_q_eta.copy(),
        "mu_eta2": state.mu_q_eta2.copy(),
        "Lambda_q": state.Lambda_q_Sigma.copy(),
        "M_inv": state.M_q_Sigma_inv.copy(),
    }


def multi_sweep(Y, spec, hyper, s):
    """One literal sweep of the multi-factor scheme; returns a new dict."""
    n, m = Y.shape
    p = spec.p
    kof = spec.column_factor()
    ref = spec.reference_mask()
    s = {k: (v.copy() if isinstance(v, np.ndarray) else v) for k, v in s.items()}
    kq_psi = n + hyper.kappa_psi + 1.0
    xi_q = n + hyper.xi_Sigma

    for j in range(m):
        k = kof[j]
        s["s2_nu"][j] = 1.0 / (n * s["mu_inv_psi"][j] + 1.0 / hyper.sigma2_nu)
        acc = 0.0
        for i in range(n):
            acc += Y[i, j] - s["mu_lam"][j] * s["mu_eta"][i, k]
        s["mu_nu"][j] = s["s2_nu"][j] * s["mu_inv_psi"][j] * acc
        s["mu_nu2"][j] = s["s2_nu"][j] + s["mu_nu"][j] ** 2

        acc = 0.0
        for i in range(n):
            acc += (
                Y[i, j] ** 2
                + s["mu_nu2"][j]
                + s["mu_lam2"][j] * s["mu_eta2"][i, k]
                - 2.0 * Y[i, j] * s["mu_nu"][j]
                - 2.0 * Y[i, j] * s["mu_lam"][j] * s["mu_eta"][i, k]
                + 2.0 * s["mu_nu"][j] * s["mu_lam"][j] * s["mu_eta"][i, k]
            )
        acc += (
            s["mu_lam2"][j]
            - 2.0 * hyper.mu_lambda * s["mu_lam"][j]
            + hyper.mu_lambda**2
        ) / hyper.sigma2_lambda
        s["delta_psi"][j] = acc + hyper.delta_psi
        s["mu_inv_psi"][j] = kq_psi / s["delta_psi"][j]

        if not ref[j]:
            sum_eta2_k = sum(s["mu_eta2"][i, k] for i in range(n))
            s["s2_lam"][j] = 1.0 / (
                s["mu_inv_psi"][j] * (sum_eta2_k + 1.0 / hyper.sigma2_lambda)
            )
            acc = 0.0
            for i in range(n):
                acc += s["mu_eta"][i, k] * (Y[i, j] - s["mu_nu"][j])
            s["mu_lam"][j] = (
                s["s2_lam"][j]
                * (acc + hyper.mu_lambda / hyper.sigma2_lambda)
                * s["mu_inv_psi"][j]
            )
            s["mu_lam2"][j] = s["s2_lam"][j] + s["mu_lam"][j] ** 2

    diag = np.zeros(p)
    for j in range(m):
        diag[kof[j]] += s["mu_lam2"][j] * s["mu_inv_psi"][j]
    s["Sigma_eta"] = np.linalg.inv(np.diag(diag) + s["M_inv"])
    for i in range(n):
        b = np.zeros(p)
        for j in range(m):
            b[kof[j]] += s["mu_lam"][j] * s["mu_inv_psi"][j] * (
                Y[i, j] - s["mu_nu"][j]
            )
        s["mu_eta"][i] = s["Sigma_eta"] @ b
        s["mu_eta2"][i] = np.diag(s["Sigma_eta"]) + s["mu_eta"][i] ** 2

    acc = hyper.Lambda_Sigma.copy()
    for i in range(n):
        acc = acc + s["Sigma_eta"] + np.outer(s["mu_eta"][i], s["mu_eta"][i])
    s["Lambda_q"] = acc
    s["M_inv"] = (xi_q - p + 1.0) * np.linalg.inv(s["Lambda_q"])
    return s


def rel_change_single(a, b):
    keys = ["mu_nu", "s2_nu", "delta_psi", "mu_lam", "s2_lam", "mu_eta",
            "s2_eta", "delta_s2"]
    worst = 0.0
    for k in keys:
        x, y = np.atleast_1d(a[k]), np.atleast_1d(b[k])
        worst = max(worst, np.max(np.abs(x - y) / (np.abs(y) + 1e-8)))
    return worst


def rel_change_multi(a, b):
    keys = ["mu_nu", "s2_nu", "delta_psi", "mu_lam", "s2_lam", "mu_eta",
            "Sigma_eta", "Lambda_q"]
    worst = 0.0
    for k in keys:
        x, y = np.atleast_1d(a[k]), np.atleast_1d(b[k])
        worst = max(worst, np.max(np.abs(x - y) / (np.abs(y) + 1e-8)))
    return worst


def trapezoid_cdf(logpdf, lo, hi, n_grid=200_001):
    """Numeric CDF via dense trapezoid integration of exp(logpdf)."""
    x = np.linspace(lo, hi, n_grid)
    f = np.exp(logpdf(x))
    dx = x[1] - x[0]
    cum = np.concatenate(([0.0], np.cumsum((f[1:] + f[:-1]) * 0.5 * dx)))

    def cdf(v):
        return np.interp(v, x, cum)

    return cdf, cum[-1]
