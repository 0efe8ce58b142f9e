import math

import numpy as np
import pytest

from hgt.basis import (
    BasisError,
    DesignMatrix,
    JointBasisLayout,
    assemble_joint_basis,
    export_basis_csv,
    knn_adjacency,
    knot_grid,
    morans_basis,
    morans_operator,
    ring_adjacency,
    thin_plate_value,
)
from hgt.data import MultiResponseDataset, Observation, ResponseKind


def random_symmetric(rng, n):
    a = rng.normal(size=(n, n))
    return a + a.T


class TestMoranOperator:
    def test_intercept_identity_gives_centering(self):
        N = 7
        G = morans_operator(np.ones((N, 1)), np.eye(N))
        assert np.allclose(G, np.eye(N) - np.ones((N, N)) / N, atol=1e-12)

    def test_zero_adjacency(self):
        rng = np.random.default_rng(0)
        assert np.all(morans_operator(rng.normal(size=(10, 2)), np.zeros((10, 10))) == 0)

    def test_symmetric(self):
        rng = np.random.default_rng(1)
        G = morans_operator(rng.normal(size=(50, 3)), random_symmetric(rng, 50))
        assert np.max(np.abs(G - G.T)) < 1e-10

    def test_rank_deficient_names_columns(self):
        x = np.arange(10.0)
        X = DesignMatrix(np.column_stack([np.ones(10), x, 2 * x]), labels=("one", "x", "twice_x"))
        with pytest.raises(BasisError, match="dependent columns"):
            morans_operator(X, np.eye(10))

    def test_asymmetric_w(self):
        W = np.zeros((4, 4))
        W[0, 1] = 1
        with pytest.raises(BasisError, match="symmetric"):
            morans_operator(np.ones((4, 1)), W)


class TestMoranBasis:
    def test_orthogonal_to_covariates(self):
        rng = np.random.default_rng(2)
        X = rng.normal(size=(100, 3))
        S = morans_basis(X, ring_adjacency(100), 10).S
        # independent oracle: residual of S after least-squares projection onto col(X)
        coef, *_ = np.linalg.lstsq(X, S, rcond=None)
        assert np.max(np.abs(X @ coef)) < 1e-8
        assert np.max(np.abs(S.T @ X)) < 1e-8
        assert np.max(np.abs(S.T @ S - np.eye(10))) < 1e-8

    def test_full_rank_r_is_orthogonal(self):
        rng = np.random.default_rng(3)
        N = 30
        S = morans_basis(rng.normal(size=(N, 2)), random_symmetric(rng, N), N).S
        assert np.max(np.abs(S.T @ S - np.eye(N))) < 1e-8

    def test_eigenvalues_descending_and_signs(self):
        rng = np.random.default_rng(4)
        b = morans_basis(rng.normal(size=(40, 2)), knn_adjacency(rng.normal(size=(40, 2)), 4), 12)
        assert np.all(np.diff(b.eigenvalues) <= 0)
        pivot = np.argmax(np.abs(b.S), axis=0)
        assert np.all(b.S[pivot, np.arange(12)] > 0)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(5)
        N = 25
        X = np.column_stack([np.ones(N), rng.normal(size=N)])
        W = random_symmetric(rng, N)
        perm = rng.permutation(N)
        S = morans_basis(X, W, 5).S
        Sp = morans_basis(X[perm], W[np.ix_(perm, perm)], 5).S
        for k in range(5):
            col = S[perm, k]
            assert min(np.max(np.abs(col - Sp[:, k])), np.max(np.abs(col + Sp[:, k]))) < 1e-8

    def test_r_too_large(self):
        with pytest.raises(BasisError):
            morans_basis(np.ones((5, 1)), np.eye(5), 6)


class TestKnn:
    def test_symmetric_zero_diagonal(self):
        W = knn_adjacency(np.random.default_rng(6).uniform(size=(60, 3)), 10)
        assert np.array_equal(W, W.T)
        assert np.all(np.diag(W) == 0)
        assert np.all(W.sum(axis=1) >= 10)


class TestThinPlate:
    def test_zero_at_knot(self):
        assert thin_plate_value(39, 78, 0.5) == 0.0

    def test_hand_value(self):
        assert thin_plate_value(78, 78, 0.5) == pytest.approx(0.25 * math.log(0.5), abs=1e-15)
        assert thin_plate_value(78, 78, 0.5) == pytest.approx(-0.173287, abs=1e-6)

    def test_ten_knot_grid_two_decimal_values(self):
        rounded = [0, 0.11, 0.22, 0.33, 0.44, 0.56, 0.67, 0.78, 0.89, 1]
        assert np.allclose(np.round(knot_grid(10), 2), rounded)
        assert len(knot_grid(25)) == 25 and knot_grid(25)[0] == 0 and knot_grid(25)[-1] == 1


def count_rows(regions, days):
    return [Observation(ResponseKind.POISSON, 1.0, region=a, day=t) for a in regions for t in days]


class TestJointBasis:
    def test_two_region_hand_assembly(self):
        data = MultiResponseDataset.from_observations(count_rows(["A", "B"], [1, 2, 3]))
        S = assemble_joint_basis(data, region_knots=2, shared_knots=2).S
        assert S.shape == (6, 6)
        tp = np.array([[thin_plate_value(t, 3, c) for c in (0.0, 1.0)] for t in (1, 2, 3)])
        expected = np.zeros((6, 6))
        expected[:, :2] = np.vstack([tp, tp])
        expected[:3, 2:4] = tp
        expected[3:, 4:6] = tp
        assert np.array_equal(S, expected)

    def test_reference_dimensions(self):
        layout = JointBasisLayout(tuple(range(266)), (1, 2), 78)
        assert layout.n_columns == 2735
        assert layout.n_columns - layout.shared_knots == 2710

    def test_single_observation_nonzeros(self):
        data = MultiResponseDataset.from_observations(
            count_rows(["A", "B"], [1, 2]) + [Observation(ResponseKind.GAUSSIAN, 0.0, day=2)]
        )
        S = assemble_joint_basis(data, region_knots=3, shared_knots=4).S
        own = np.zeros(S.shape[1], dtype=bool)
        own[:4] = True
        own[4 + 6 : 4 + 6 + 4] = True
        assert np.all(S[-1, ~own] == 0)
        assert np.count_nonzero(S[-1]) == np.count_nonzero(S[-1, own])

    def test_block_structure_invariant(self):
        rng = np.random.default_rng(7)
        obs = [Observation(ResponseKind.POISSON, 1.0, region=f"r{rng.integers(4)}", day=int(rng.integers(1, 21)))
               for _ in range(40)]
        obs += [Observation(ResponseKind.BINOMIAL, 3.0, trials=10, day=t) for t in range(1, 21)]
        data = MultiResponseDataset.from_observations(obs, n_days=20)
        layout = JointBasisLayout.from_dataset(data, 5, 6)
        S = layout.matrix(data).S
        blocks = layout.block_of(data)
        n_reg = len(layout.regions)
        for i, b in enumerate(blocks):
            start = 6 + b * 5 if b < n_reg else 6 + n_reg * 5 + (b - n_reg) * 6
            width = 5 if b < n_reg else 6
            mask = np.ones(S.shape[1], dtype=bool)
            mask[:6] = False
            mask[start : start + width] = False
            assert np.all(S[i, mask] == 0)

    def test_new_days_and_unseen_region(self):
        train = MultiResponseDataset.from_observations(count_rows(["A"], [1, 2]), n_days=4)
        layout = JointBasisLayout.from_dataset(train, 2, 2)
        future = MultiResponseDataset.from_observations(count_rows(["A"], [4]), n_days=4)
        assert layout.matrix(future).S.shape == (1, 4)
        unseen = MultiResponseDataset.from_observations(count_rows(["Z"], [3]), n_days=4)
        with pytest.raises(BasisError, match="row 0"):
            layout.matrix(unseen)

    def test_export(self, tmp_path):
        data = MultiResponseDataset.from_observations(count_rows(["A"], [1, 2, 3]))
        basis = assemble_joint_basis(data, 2, 2)
        path = tmp_path / "s.csv"
        export_basis_csv(basis, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "row,col,value"
        assert len(lines) - 1 == np.count_nonzero(basis.S)


class TestDesigns:
    def test_block_expand(self):
        from hgt.basis import block_expand

        d = block_expand(np.array([[0.5], [2.0], [3.0]]), [1, 3, 3])
        assert d.X.shape == (3, 6)
        assert np.array_equal(d.X, [[1, 0.5, 0, 0, 0, 0], [0, 0, 0, 0, 1, 2], [0, 0, 0, 0, 1, 3]])
        assert d.labels[4] == "poisson:intercept"

    def test_indicator_design(self):
        from hgt.basis import IndicatorDesign

        obs = count_rows(["A"], [1]) + [Observation(ResponseKind.POISSON, 2.0, region="A", day=1, death_flag=1),
                                        Observation(ResponseKind.GAUSSIAN, 0.0, day=1)]
        data = MultiResponseDataset.from_observations(obs)
        design = IndicatorDesign.from_dataset(data)
        assert design.flags == ("death_flag",)
        assert np.array_equal(design.matrix(data).X, [[0, 1, 0], [0, 1, 1], [1, 0, 0]])
