import numpy as np
import pytest

from ptspinn.autodiff import Layout, ParamVector
from ptspinn.models import ConfigError, init_params
from ptspinn.optim import AdamState, LrSchedule, NonFiniteGradient, SoapState, adam_step, jacobi_eigh, lr_at, soap_step
from ptspinn.problems import get_problem


def _params(rng):
    lay = Layout.build([("W", (5, 3)), ("b", (3,)), ("V", (3, 3)), ("a", (1,))])
    return ParamVector(rng.normal(size=lay.size), lay)


def _reference_adam(theta, grads, lr, b1=0.9, b2=0.999, eps=1e-8):
    """Independent scalar-loop Adam."""
    theta = list(theta)
    m = [0.0] * len(theta)
    v = [0.0] * len(theta)
    for t, g in enumerate(grads, start=1):
        for i in range(len(theta)):
            m[i] = b1 * m[i] + (1 - b1) * g[i]
            v[i] = b2 * v[i] + (1 - b2) * g[i] ** 2
            theta[i] -= lr * (m[i] / (1 - b1**t)) / ((v[i] / (1 - b2**t)) ** 0.5 + eps)
    return np.array(theta)


class TestSchedule:
    def test_anchor_points(self):
        s = LrSchedule()
        assert lr_at(s, 0) == 0.0
        assert lr_at(s, 2000) == 1e-3
        assert lr_at(s, 4000) == pytest.approx(9e-4, rel=1e-14)
        assert lr_at(s, 1000) == pytest.approx(5e-4)

    def test_continuous_exponent(self):
        s = LrSchedule()
        assert lr_at(s, 3000) == pytest.approx(1e-3 * 0.9**0.5)

    def test_nonnegative(self):
        s = LrSchedule()
        assert all(s(k) >= 0 for k in range(0, 100000, 777))

    def test_bad_inputs(self):
        with pytest.raises(ValueError):
            lr_at(LrSchedule(), -1)
        with pytest.raises(ConfigError):
            LrSchedule(decay=0.0)


class TestAdam:
    def test_zero_gradient(self, rng):
        p = _params(rng)
        _, q = adam_step(AdamState.init(p), p, np.zeros(len(p)), 0.1)
        assert q == p

    def test_first_step(self):
        lay = Layout.build([("x", (1,))])
        p = ParamVector(np.array([2.0]), lay)
        _, q = adam_step(AdamState.init(p), p, np.array([1.0]), 0.1)
        assert q.numpy()[0] == pytest.approx(1.9, abs=1e-7)

    def test_quadratic_trajectory(self, rng):
        A = np.diag([1.0, 4.0, 0.5])
        x = rng.normal(size=3)
        lay = Layout.build([("x", (3,))])
        p, st = ParamVector(x.copy(), lay), None
        st = AdamState.init(p)
        grads = []
        for _ in range(3):
            g = A @ p.numpy()
            grads.append(g)
            st, p = adam_step(st, p, g, 0.05)
        np.testing.assert_allclose(p.numpy(), _reference_adam(x, grads, 0.05), rtol=0, atol=1e-12)

    def test_nonfinite_rejected(self, rng):
        p = _params(rng)
        st = AdamState.init(p)
        g = np.ones(len(p))
        g[3] = np.nan
        with pytest.raises(NonFiniteGradient):
            adam_step(st, p, g, 0.1)
        assert st.step == 0 and not st.m.any()


class TestSoap:
    def test_identity_bases_equal_adam(self, rng):
        p = _params(rng)
        a, s = AdamState.init(p), SoapState.init(p)
        pa = ps = p
        for _ in range(6):
            g = rng.normal(size=len(p))
            a, pa = adam_step(a, pa, g, 1e-2)
            s, ps = soap_step(s, ps, g, 1e-2, refresh=False)
        np.testing.assert_array_equal(pa.numpy(), ps.numpy())

    def test_first_step_equals_adam_with_refresh(self, rng):
        p = _params(rng)
        g = rng.normal(size=len(p))
        _, pa = adam_step(AdamState.init(p), p, g, 1e-2)
        _, ps = soap_step(SoapState.init(p, freq=2), p, g, 1e-2)
        assert np.max(np.abs(pa.numpy() - ps.numpy())) <= 1e-12

    def test_zero_gradient(self, rng):
        p = _params(rng)
        s = SoapState.init(p, freq=1)
        _, q = soap_step(s, p, np.zeros(len(p)), 0.1)
        assert q == p

    def test_bases_orthonormal(self, rng):
        spec = get_problem("burgers")
        p = init_params(spec.network_config(width=16), 0)
        s = SoapState.init(p, freq=2)
        for _ in range(10):
            s, p = soap_step(s, p, rng.normal(size=len(p)), 1e-3)
        for st in s.mats.values():
            for q in (st.q_l, st.q_r):
                assert np.max(np.abs(q.T @ q - np.eye(len(q)))) < 1e-8
        assert s.failed_refreshes == 0

    def test_bases_diagonalize_covariance(self, rng):
        p = _params(rng)
        s = SoapState.init(p, freq=1)
        s, p = soap_step(s, p, rng.normal(size=len(p)), 1e-3)
        st = s.mats["W"]
        d = st.q_l.T @ st.cov_l @ st.q_l
        assert np.linalg.norm(d - np.diag(np.diag(d))) <= 1e-9 * np.linalg.norm(d)

    def test_rotation_consistency(self, rng):
        """One step with given orthonormal bases equals Q_L (Adam on rotated G) Q_R^T."""
        p = _params(rng)
        s = SoapState.init(p)
        ql, _ = np.linalg.qr(rng.normal(size=(5, 5)))
        qr, _ = np.linalg.qr(rng.normal(size=(3, 3)))
        s.mats["W"].q_l, s.mats["W"].q_r = ql, qr
        g = rng.normal(size=len(p))
        _, q = soap_step(s, p, g, 0.01, refresh=False)
        G = g[:15].reshape(5, 3)
        Gr = ql.T @ G @ qr
        m, v = 0.1 * Gr, 0.001 * Gr**2
        d = (m / 0.1) / (np.sqrt(v / 0.001) + 1e-8)
        want = p.segment_array("W") - 0.01 * (ql @ d @ qr.T)
        np.testing.assert_allclose(q.segment_array("W"), want, rtol=1e-12, atol=1e-14)

    def test_failed_refresh_keeps_basis(self, rng, caplog):
        p = _params(rng)
        s = SoapState.init(p, freq=1, sweeps=1, tol=1e-300)
        s, p = soap_step(s, p, rng.normal(size=len(p)), 1e-3)
        assert s.failed_refreshes > 0
        np.testing.assert_array_equal(s.mats["W"].q_l, np.eye(5))
        assert "did not converge" in caplog.text

    def test_checkpoint_roundtrip(self, rng):
        p = _params(rng)
        s = SoapState.init(p, freq=1)
        s, p = soap_step(s, p, rng.normal(size=len(p)), 1e-3)
        back = s.load(s.arrays())
        g = rng.normal(size=len(p))
        _, a = soap_step(s, p, g, 1e-3)
        _, b = soap_step(back, p, g, 1e-3)
        assert a == b


class TestJacobi:
    def test_two_by_two_closed_form(self):
        a, b, c = 3.0, 1.0, 2.0
        w, q, ok = jacobi_eigh(np.array([[a, b], [b, c]]))
        assert ok
        lam = 0.5 * (a + c) + np.array([1, -1]) * np.hypot(0.5 * (a - c), b)
        for l in lam:
            vec = np.array([b, l - a])
            vec /= np.linalg.norm(vec)
            # some column equals the closed-form eigenvector up to sign
            assert min(np.linalg.norm(q[:, j] - s * vec) for j in range(2) for s in (1, -1)) < 1e-8
        np.testing.assert_allclose(np.sort(w), np.sort(lam), rtol=1e-14)

    @pytest.mark.parametrize("n", [1, 3, 8, 33])
    def test_random_batches(self, rng, n):
        g = rng.normal(size=(4, n, n))
        a = g @ np.swapaxes(g, -1, -2)
        w, q, ok = jacobi_eigh(a)
        assert ok.all()
        np.testing.assert_allclose(q @ (w[..., None] * np.swapaxes(q, -1, -2)), a, atol=1e-10 * np.abs(a).max())
        np.testing.assert_allclose(np.sort(w, axis=-1), np.linalg.eigvalsh(a), rtol=1e-9, atol=1e-9)

    def test_warm_start(self, rng):
        g = rng.normal(size=(10, 10))
        a = g @ g.T
        _, q, _ = jacobi_eigh(a)
        w2, q2, ok = jacobi_eigh(a + 1e-3 * np.eye(10), q)
        assert ok and np.max(np.abs(q2.T @ q2 - np.eye(10))) < 1e-12

    def test_not_converged_flag(self, rng):
        g = rng.normal(size=(12, 12))
        _, _, ok = jacobi_eigh(g @ g.T, max_sweeps=1, tol=1e-14)
        assert not ok
