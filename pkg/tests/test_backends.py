import numpy as np
import pytest

from semvb import backend
from semvb import fit_multi, fit_single, point_estimates
from semvb._kernels import get_impl
from semvb._rng import substream


class TestSelection:
    def test_env_override(self, monkeypatch):
        monkeypatch.setenv("SEMVB_BACKEND", "numpy")
        assert backend.active_backend() == "numpy"
        assert get_impl().__name__.endswith("numpy_impl")

    def test_invalid_value_rejected(self, monkeypatch):
        monkeypatch.setenv("SEMVB_BACKEND", "fortran")
        with pytest.raises(ValueError, match="fortran"):
            backend.active_backend()

    def test_default_prefers_numba_when_available(self, monkeypatch):
        monkeypatch.delenv("SEMVB_BACKEND", raising=False)
        if backend.numba_available():
            assert backend.active_backend() == "numba"


class TestMfvbParity:
    def test_single(self, single_data):
        a = fit_single(single_data, tol=1e-8, backend="numpy")
        b = fit_single(single_data, tol=1e-8, backend="numba")
        assert abs(a.iterations - b.iterations) <= 1
        ea, eb = point_estimates(a), point_estimates(b)
        for k in ea:
            assert ea[k] == pytest.approx(eb[k], rel=1e-9, abs=1e-12)
        np.testing.assert_allclose(
            a.state.sigma2_q_nu, b.state.sigma2_q_nu, rtol=1e-9
        )
        np.testing.assert_allclose(a.state.mu_q_eta, b.state.mu_q_eta, atol=1e-9)

    def test_multi(self, two_factor_data):
        a = fit_multi(two_factor_data, tol=1e-8, backend="numpy")
        b = fit_multi(two_factor_data, tol=1e-8, backend="numba")
        assert abs(a.iterations - b.iterations) <= 1
        ea, eb = point_estimates(a), point_estimates(b)
        for k in ea:
            assert ea[k] == pytest.approx(eb[k], rel=1e-9, abs=1e-12)
        np.testing.assert_allclose(
            a.state.Sigma_q_eta, b.state.Sigma_q_eta, rtol=1e-9
        )


class TestGibbsParity:
    def _variates_single(self, n, m, T, seed):
        rng = substream(seed, "parity-single")
        return (
            rng.standard_normal((T, m)),
            rng.chisquare(n + 2.0, (T, m)),
            rng.standard_normal((T, m - 1)),
            rng.standard_normal((T, n)),
            rng.chisquare(n + 1.0, T),
        )

    def test_single_chain_step_for_step(self, single_data):
        n, m = single_data.n, single_data.m
        T = 50
        z = self._variates_single(n, m, T, 1)
        out = []
        for name in ("numpy", "numba"):
            impl = get_impl(name)
            R = T
            nu_out = np.empty((R, m))
            lam_out = np.empty((R, m))
            psi_out = np.empty((R, m))
            eta_out = np.empty((R, n))
            s2_out = np.empty(R)
            impl.gibbs_single_chain(
                single_data.y,
                0.0, 100.0, 1.0, 0.01, 0.01,
                np.zeros(m), np.ones(m), np.full(m, 0.0033), np.zeros(n), 0.0033,
                *z,
                0, 1,
                nu_out, lam_out, psi_out, eta_out, s2_out,
            )
            out.append((nu_out, lam_out, psi_out, eta_out, s2_out))
        for a, b in zip(*out):
            np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-12)

    def test_multi_chain_step_for_step(self, two_factor_data):
        data = two_factor_data
        n, m, p = data.n, data.m, data.spec.p
        T = 30
        rng = substream(2, "parity-multi")
        n_free = m - p
        nu_dof = n + 14.0 - p + 1.0
        z = (
            rng.standard_normal((T, m)),
            rng.chisquare(n + 2.0, (T, m)),
            rng.standard_normal((T, n_free)),
            rng.standard_normal((T, n, p)),
            np.stack([rng.chisquare(nu_dof - i, T) for i in range(p)], axis=1),
            rng.standard_normal((T, p * (p - 1) // 2)),
        )
        Lambda_Sigma = 10.0 * np.eye(p)
        Sigma0 = Lambda_Sigma / 16.0
        out = []
        for name in ("numpy", "numba"):
            impl = get_impl(name)
            nu_out = np.empty((T, m))
            lam_out = np.empty((T, m))
            psi_out = np.empty((T, m))
            eta_out = np.empty((T, n, p))
            Sigma_out = np.empty((T, p, p))
            impl.gibbs_multi_chain(
                data.y,
                data.spec.column_factor().astype(np.int64),
                data.spec.reference_mask(),
                0.0, 100.0, 1.0, 0.01, Lambda_Sigma,
                np.zeros(m), np.ones(m), np.full(m, 0.0033),
                np.zeros((n, p)), np.linalg.inv(Sigma0),
                *z,
                0, 1,
                nu_out, lam_out, psi_out, eta_out, Sigma_out,
            )
            out.append((nu_out, lam_out, psi_out, eta_out, Sigma_out))
        for a, b in zip(*out):
            np.testing.assert_allclose(a, b, rtol=1e-8, atol=1e-10)
