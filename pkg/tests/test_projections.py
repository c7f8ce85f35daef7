import itertools

import numpy as np
import pytest

from mfgprox.grid import assemble_constraint, pack_pair
from mfgprox.projections import (
    AffineProjector,
    DykstraConfig,
    DykstraStalledError,
    DykstraState,
    project_affine,
    project_cone_product,
    project_DK,
)

# sign of each cone coordinate within a node block (+ means >= 0)
CONE_SIGNS = np.array([1.0, -1.0, 1.0, -1.0])


def brute_projection_DK(z, con, tol=1e-9):
    """Exhaustive face enumeration for the cone-intersection projection at N=2.

    For every pattern of active (pinned to zero) field coordinates, project
    onto the affine set extended by those pins and keep the sign-feasible
    candidate closest to z. The true projection's own active set always
    yields it, so the minimum over feasible candidates is exact.
    """
    n = con.n
    assert n == 2
    A = con.A.toarray()
    b = con.b
    nn = n * n
    w_signs = np.concatenate([np.full(nn, s) for s in CONE_SIGNS])
    best = None
    best_dist = np.inf
    for pattern in itertools.product([0, 1], repeat=4 * nn):
        active = np.flatnonzero(pattern)
        rows = [A]
        rhs = [b]
        for k in active:
            pin = np.zeros(A.shape[1])
            pin[nn + k] = 1.0
            rows.append(pin[None, :])
            rhs.append([0.0])
        A_aug = np.vstack(rows)
        b_aug = np.concatenate(rhs)
        lam = np.linalg.lstsq(A_aug @ A_aug.T, A_aug @ z - b_aug, rcond=None)[0]
        cand = z - A_aug.T @ lam
        if np.abs(A_aug @ cand - b_aug).max() > 1e-8:
            continue
        if np.any(w_signs * cand[nn:] < -tol):
            continue
        dist = np.linalg.norm(cand - z)
        if dist < best_dist:
            best_dist = dist
            best = cand
    return best


class TestAffine:
    def test_feasible_point_fixed(self):
        for nu in (0.0, 0.5):
            p = AffineProjector.build(4, nu)
            x = pack_pair(np.ones((4, 4)), np.zeros((4, 4, 4)))
            assert np.allclose(p.project(x), x, atol=1e-13)

    def test_zero_maps_to_uniform_density(self):
        p = AffineProjector.build(6, 0.3)
        out = p.project(np.zeros(5 * 36))
        expected = pack_pair(np.ones((6, 6)), np.zeros((6, 6, 4)))
        assert np.allclose(out, expected, atol=1e-12)

    @pytest.mark.parametrize("n,nu", [(2, 0.0), (3, 0.5), (5, 0.1), (8, 0.0)])
    def test_matches_dense_kkt_oracle(self, n, nu):
        con = assemble_constraint(n, nu)
        p = AffineProjector(con)
        A = con.A.toarray()
        rng = np.random.default_rng(0)
        for _ in range(5):
            z = rng.normal(size=5 * n * n) * 2
            lam = np.linalg.lstsq(A @ A.T, A @ z - con.b, rcond=None)[0]
            assert np.abs(p.project(z) - (z - A.T @ lam)).max() <= 1e-11

    def test_residual_invariant(self):
        p = AffineProjector.build(10, 0.5)
        rng = np.random.default_rng(1)
        scale = 1.0 + np.linalg.norm(p.constraint.b)
        for _ in range(20):
            out = p.project(rng.normal(size=500) * 10)
            assert p.residual(out) <= 1e-10 * scale

    def test_idempotent_and_nonexpansive(self):
        p = AffineProjector.build(5, 0.2)
        rng = np.random.default_rng(2)
        for _ in range(50):
            x = rng.normal(size=125)
            y = rng.normal(size=125)
            px, py = p.project(x), p.project(y)
            assert np.abs(p.project(px) - px).max() <= 1e-12
            assert np.linalg.norm(px - py) <= np.linalg.norm(x - y) * (1 + 1e-12)

    def test_orthogonality_against_feasible_directions(self):
        # out - x is orthogonal to null(A): sample null directions via SVD
        n = 3
        con = assemble_constraint(n, 0.4)
        p = AffineProjector(con)
        A = con.A.toarray()
        _, s, vt = np.linalg.svd(A)
        null_basis = vt[np.sum(s > 1e-10):]
        rng = np.random.default_rng(3)
        for _ in range(10):
            x = rng.normal(size=45)
            d = x - p.project(x)
            assert np.abs(null_basis @ d).max() <= 1e-11

    def test_function_alias(self):
        p = AffineProjector.build(3, 0.0)
        rng = np.random.default_rng(4)
        z = rng.normal(size=45)
        assert np.array_equal(project_affine(z, p), p.project(z))


class TestConeProduct:
    def test_scalar_block_untouched(self):
        rng = np.random.default_rng(5)
        n = 3
        z = rng.normal(size=5 * n * n)
        out = project_cone_product(z, n)
        assert np.array_equal(out[: n * n], z[: n * n])
        nn = n * n
        assert np.all(out[nn : 2 * nn] >= 0)
        assert np.all(out[2 * nn : 3 * nn] <= 0)


class TestDykstra:
    def setup_method(self):
        self.n = 2
        self.nu = 0.1
        self.con = assemble_constraint(self.n, self.nu)
        self.proj = AffineProjector(self.con)

    def test_point_in_set_is_fixed(self):
        x = pack_pair(np.ones((2, 2)), np.zeros((2, 2, 4)))
        out = project_DK(x, self.proj)
        assert np.linalg.norm(out - x) <= 1e-9

    def test_inactive_cone_reduces_to_affine(self):
        # if the affine projection already lands in the cone the two agree
        rng = np.random.default_rng(6)
        found = 0
        for _ in range(200):
            z = rng.normal(size=20) * 0.1
            z[4:8] = np.abs(z[4:8])
            z[8:12] = -np.abs(z[8:12])
            z[12:16] = np.abs(z[12:16])
            z[16:] = -np.abs(z[16:])
            aff = self.proj.project(z)
            w = aff[4:]
            signs = np.concatenate([np.full(4, s) for s in CONE_SIGNS])
            if np.all(signs * w >= 0):
                out = project_DK(z, self.proj)
                assert np.linalg.norm(out - aff) <= 1e-8
                found += 1
        assert found > 0

    @pytest.mark.parametrize("nu", [0.0, 0.1])
    def test_matches_brute_force_qp(self, nu):
        con = assemble_constraint(2, nu)
        proj = AffineProjector(con)
        rng = np.random.default_rng(7)
        for _ in range(2):
            z = rng.normal(size=20)
            oracle = brute_projection_DK(z, con)
            assert oracle is not None
            out = project_DK(z, proj, DykstraConfig(tol=1e-12, max_inner=200000))
            assert np.abs(out - oracle).max() <= 1e-6

    def test_idempotent_within_tolerance(self):
        rng = np.random.default_rng(8)
        cfg = DykstraConfig(tol=1e-11)
        z = rng.normal(size=20)
        out = project_DK(z, self.proj, cfg)
        out2 = project_DK(out, self.proj, cfg)
        assert np.linalg.norm(out2 - out) <= 1e-7

    def test_nonexpansive_sampled(self):
        rng = np.random.default_rng(9)
        cfg = DykstraConfig(tol=1e-12, max_inner=100000)
        for _ in range(20):
            x = rng.normal(size=20)
            y = rng.normal(size=20)
            px = project_DK(x, self.proj, cfg)
            py = project_DK(y, self.proj, cfg)
            assert np.linalg.norm(px - py) <= np.linalg.norm(x - y) + 1e-8

    def test_cone_membership_exact(self):
        rng = np.random.default_rng(10)
        z = rng.normal(size=20) * 3
        out = project_DK(z, self.proj)
        w = out[4:].reshape(4, 4)
        assert np.all(w[0] >= 0) and np.all(w[1] <= 0)
        assert np.all(w[2] >= 0) and np.all(w[3] <= 0)

    def test_affine_residual_bound(self):
        rng = np.random.default_rng(11)
        z = rng.normal(size=20) * 2
        out = project_DK(z, self.proj)
        assert self.proj.residual(out) <= 1e-8 * (1 + np.linalg.norm(self.con.b))

    def test_warm_start_agrees_with_cold(self):
        rng = np.random.default_rng(12)
        cfg = DykstraConfig(tol=1e-11)
        state = DykstraState()
        z = rng.normal(size=20)
        for _ in range(5):
            z = z + 0.01 * rng.normal(size=20)
            warm = project_DK(z, self.proj, cfg, state)
            cold = project_DK(z, self.proj, cfg)
            assert np.linalg.norm(warm - cold) <= 10 * cfg.tol

    def test_iteration_cap_raises(self):
        rng = np.random.default_rng(13)
        z = rng.normal(size=20) * 5
        with pytest.raises(DykstraStalledError) as exc:
            project_DK(z, self.proj, DykstraConfig(tol=1e-14, max_inner=3))
        assert exc.value.iterations == 3
        assert np.isfinite(exc.value.change)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            DykstraConfig(tol=0.0)
        with pytest.raises(ValueError):
            DykstraConfig(max_inner=0)
