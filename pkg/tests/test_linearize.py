"""Small-signal model: closed-form coefficients vs finite differences."""

from __future__ import annotations

import numpy as np
import pytest

import flowscope as fs

import _fixtures as fx


def entrywise_rel(M, ref):
    ref = np.asarray(ref, dtype=float)
    scale = np.max(np.abs(ref))
    denom = np.maximum(np.abs(ref), 1e-6 * scale)
    return float(np.max(np.abs(np.asarray(M) - ref) / denom))


class TestCoefficients:
    def test_toy_closed_forms(self):
        cfg = fx.toy_cfg()
        eq = fs.compute_equilibrium(cfg)
        lin = fs.linearize(eq, cfg)
        assert lin.a[0] == pytest.approx(fx.TOY_A, rel=1e-12)
        assert lin.e[0] == pytest.approx(fx.TOY_E, rel=1e-12)
        assert lin.h[0] == pytest.approx(fx.TOY_H, rel=1e-12)
        assert lin.f[0] == pytest.approx(fx.TOY_F, rel=1e-12)

    def test_all_coefficients_negative(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            cfg = fx.random_cfg(rng)
            lin = fs.linearize(fs.compute_equilibrium(cfg), cfg)
            for coeffs in (lin.a, lin.h, lin.f, lin.e):
                assert np.all(coeffs < 0.0)

    def test_matrix_structure(self, rt):
        _, _, lin, _ = rt
        n = 3
        assert lin.A.shape == (n + 1, n + 1)
        assert np.array_equal(np.diag(lin.A)[:n], lin.a)
        assert np.array_equal(lin.A[:n, n], lin.h)
        assert np.all(lin.A[n, :] == 0.0)
        # rate rows couple only through the forward-delayed aggregate
        off = lin.A[:n, :n] - np.diag(lin.a)
        assert np.all(off == 0.0)
        eta = np.full(n, fx.RT_ETA)
        assert np.allclose(lin.A_d[:n, :n], np.outer(lin.f, eta), rtol=1e-14)
        assert np.array_equal(lin.A_d[n, :n], eta)
        assert np.all(lin.A_d[:, n] == 0.0)
        assert np.array_equal(lin.B[:n], np.diag(lin.e))
        assert np.all(lin.B[n] == 0.0)
        assert lin.C.shape == (1, n + 1)
        assert np.array_equal(lin.C[0], np.eye(n + 1)[n])


class TestFiniteDifferenceOracle:
    @pytest.mark.parametrize("n", [1, 2, 3, 5])
    def test_fd_matches_analytic(self, n):
        rng = np.random.default_rng(100 + n)
        cfg = fx.random_cfg(rng, n=n)
        eq = fs.compute_equilibrium(cfg)
        lin = fs.linearize(eq, cfg)
        A_fd, Ad_fd = fs.fd_jacobian(cfg, eq)
        assert entrywise_rel(A_fd, lin.A) < 1e-5
        assert entrywise_rel(Ad_fd, lin.A_d) < 1e-5

    def test_fd_matches_on_reference_network(self, rt):
        cfg, eq, lin, _ = rt
        A_fd, Ad_fd = fs.fd_jacobian(cfg, eq)
        assert entrywise_rel(A_fd, lin.A) < 1e-5
        assert entrywise_rel(Ad_fd, lin.A_d) < 1e-5

    def test_drop_input_matrix_via_fd(self, rt):
        cfg, eq, lin, _ = rt
        n = cfg.n_sources
        delta = 1e-7
        B_fd = np.zeros((n + 1, n))
        for j in range(n):
            bump = np.zeros(n)
            bump[j] = delta
            hx, hb = fs.rhs_nonlinear(cfg, eq.x0, eq.x0, eq.x0, eq.b0, eq.p0 + bump)
            lx, lb = fs.rhs_nonlinear(cfg, eq.x0, eq.x0, eq.x0, eq.b0, eq.p0 - bump)
            B_fd[:, j] = np.concatenate([hx - lx, [hb - lb]]) / (2.0 * delta)
        assert entrywise_rel(B_fd, lin.B) < 1e-5


class TestAugmentation:
    def test_embedding_structure(self, rt):
        _, _, lin, aug = rt
        n = 3
        assert aug.A_bar.shape == (n + 2, n + 2)
        assert np.array_equal(aug.A_bar[: n + 1, : n + 1], lin.A)
        assert aug.A_bar[n, n + 1] == 1.0
        assert np.all(aug.A_bar[n + 1, :] == 0.0)
        assert np.all(aug.A_bar[: n, n + 1] == 0.0)
        assert np.array_equal(aug.B_bar[: n + 1], lin.B)
        assert np.all(aug.B_bar[n + 1] == 0.0)
        assert np.array_equal(aug.C_bar[0], np.eye(n + 2)[n])

    def test_delay_decomposition(self, rt):
        _, _, lin, aug = rt
        n = 3
        expected_sum = np.zeros((n + 2, n + 2))
        expected_sum[: n + 1, : n + 1] = lin.A_d
        assert np.allclose(sum(aug.A_bar_d), expected_sum, atol=1e-14)
        col = aug.delay_column()
        assert np.allclose(col, np.concatenate([lin.f, [1.0, 0.0]]), rtol=1e-14)
        for i, M in enumerate(aug.A_bar_d):
            nonzero_cols = np.nonzero(np.any(M != 0.0, axis=0))[0]
            assert np.array_equal(nonzero_cols, [i])
            assert np.allclose(M[:, i], fx.RT_ETA * col, rtol=1e-14)

    def test_spectrum_gains_one_integrator(self, rt):
        _, _, lin, aug = rt
        eig_a = np.sort_complex(np.linalg.eigvals(lin.A))
        eig_bar = np.sort_complex(np.linalg.eigvals(aug.A_bar))
        expected = np.sort_complex(np.concatenate([eig_a, [0.0]]))
        assert np.allclose(eig_bar, expected, atol=1e-9)

    def test_identical_sources_are_rejected_as_unobservable(self):
        cfg = fs.NetworkConfig(
            2500.0,
            400.0,
            100.0,
            (fs.Source(20.0, 0.05, 0.1), fs.Source(20.0, 0.05, 0.1)),
        )
        eq = fs.compute_equilibrium(cfg)
        lin = fs.linearize(eq, cfg)
        with pytest.raises(ValueError, match="observab"):
            fs.augment(lin)


class TestPinnedOperatingPoint:
    def test_printed_matrix_entries(self):
        cfg, eq = fx.pinned_equilibrium()
        lin = fs.linearize(eq, cfg)
        assert np.allclose(lin.a, fx.PIN_DIAG_A, atol=0.005)
        assert np.allclose(lin.h, fx.PIN_H, atol=0.005)
        assert np.allclose(lin.e, fx.PIN_DIAG_B, atol=0.5)
        assert np.allclose(lin.A_d[0, :3], fx.PIN_AD_ROW1, atol=0.005)
        assert np.allclose(lin.A_d[3, :3], fx.PIN_AD_LAST, atol=0.5)

    def test_augmented_feed_through(self):
        cfg, eq = fx.pinned_equilibrium()
        aug = fs.augment(fs.linearize(eq, cfg))
        assert aug.A_bar[3, 4] == 1.0
        assert aug.A_bar.shape == (5, 5)
