import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from deltainsert.geometry import DeltaPose
from deltainsert.observation import Observation
from deltainsert.predictor import (ModelFormatError, NoiseSpec, OraclePredictor, PredictionContext,
                                   fit_knn, knn_from_arrays, load_model, predict_features,
                                   predict_model, predict_oracle, ridge_from_arrays, save_model,
                                   solve_ridge)

DEG = math.pi / 180
TRUE = DeltaPose(0.002, -0.001, -0.03, 0.3)


def ctx(d=TRUE):
    return PredictionContext(None, d)


class TestOracle:
    def test_zero_noise_exact(self):
        rng = np.random.default_rng(0)
        assert predict_oracle(ctx(), NoiseSpec(), rng) == TRUE

    def test_flat_sigma_monte_carlo(self):
        rng = np.random.default_rng(1)
        noise = NoiseSpec(0.002, 0.002)
        err = [predict_oracle(ctx(), noise, rng).dx - TRUE.dx for _ in range(10_000)]
        assert abs(np.std(err) - 0.002) <= 0.05 * 0.002

    def test_coarse_profile_at_goal(self):
        rng = np.random.default_rng(2)
        noise = NoiseSpec(0.004, 0.008)
        zero = DeltaPose(0, 0, 0, 0)
        err = [predict_oracle(ctx(zero), noise, rng).dy for _ in range(10_000)]
        assert abs(np.std(err) - 0.004) <= 0.05 * 0.004

    def test_sigma_interpolation(self):
        n = NoiseSpec(0.001, 0.005, near_radius=0.04)
        assert n.sigma_xy(0.0) == 0.001
        assert n.sigma_xy(0.02) == pytest.approx(0.003)
        assert n.sigma_xy(0.04) == n.sigma_xy(1.0) == 0.005

    def test_yaw_wrapped(self):
        rng = np.random.default_rng(3)
        d = DeltaPose(0, 0, 0, math.pi - 1e-3)
        for _ in range(200):
            assert -math.pi < predict_oracle(ctx(d), NoiseSpec(sigma_psi=0.5), rng).dpsi <= math.pi

    def test_correlated_planar_error(self):
        noise = NoiseSpec(0.002, 0.002, xy_correlation=0.9)
        lag = []
        for seed in range(200):
            policy = OraclePredictor(noise).episode(np.random.default_rng(seed))
            e = [policy(None, TRUE).dx - TRUE.dx for _ in range(2)]
            lag.append(e)
        lag = np.array(lag)
        assert np.corrcoef(lag[:, 0], lag[:, 1])[0, 1] > 0.8
        assert abs(lag[:, 1].std() - 0.002) < 0.0004

    def test_invalid_specs(self):
        with pytest.raises(ValueError):
            NoiseSpec(-1.0)
        with pytest.raises(ValueError):
            NoiseSpec(near_radius=0.0)


def labels_of(*rows):
    return np.array(rows, dtype=float)


class TestKnn:
    def test_single_record(self):
        m = knn_from_arrays(np.array([[1.0, 2.0]]), labels_of([0.1, 0.2, 0.3, 0.4]), k=1)
        for q in ([0, 0], [5, -5]):
            assert predict_features(m, q) == DeltaPose(0.1, 0.2, 0.3, 0.4)

    def test_stored_query_returns_label(self):
        rng = np.random.default_rng(0)
        f = rng.normal(size=(50, 8))
        l = np.column_stack([rng.normal(size=(50, 3)), rng.uniform(-3, 3, 50)])
        m = knn_from_arrays(f, l, k=1)
        for i in (0, 17, 49):
            assert predict_features(m, f[i]) == DeltaPose(*l[i])

    def test_inverse_distance_weighting(self):
        f = np.array([[1.0, 0.0], [-3.0, 0.0]])
        m = knn_from_arrays(f, labels_of([1, 0, 0, 0], [0, 0, 0, 0]), k=2,
                            weighting="inverse_distance")
        assert predict_features(m, [0.0, 0.0]).dx == pytest.approx(0.75, abs=1e-15)

    def test_uniform_mean_and_circular_yaw(self):
        f = np.array([[0.0], [1.0], [10.0]])
        l = labels_of([1, 2, 3, math.pi - 0.1], [3, 4, 5, -math.pi + 0.1], [9, 9, 9, 0])
        got = predict_features(knn_from_arrays(f, l, k=2), [0.4])
        assert (got.dx, got.dy, got.dz) == (2.0, 3.0, 4.0)
        assert abs(got.dpsi) == pytest.approx(math.pi, abs=1e-12)

    def test_tie_takes_lowest_index(self):
        f = np.array([[1.0], [-1.0], [1.0]])
        l = labels_of([1, 0, 0, 0], [2, 0, 0, 0], [3, 0, 0, 0])
        m = knn_from_arrays(f, l, k=1)
        # both candidates sit at distance 1; the first row of the canonical order wins
        first = m.labels[np.flatnonzero(np.abs(m.features[:, 0]) == 1.0)[0], 0]
        assert predict_features(m, [0.0]).dx == first

    def test_record_order_invariance(self):
        rng = np.random.default_rng(4)
        f = rng.normal(size=(200, 6))
        l = rng.normal(size=(200, 4))
        a = knn_from_arrays(f, l, k=5)
        perm = rng.permutation(200)
        b = knn_from_arrays(f[perm], l[perm], k=5)
        for q in rng.normal(size=(30, 6)):
            assert predict_features(a, q) == predict_features(b, q)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(5)
        f = rng.integers(0, 3, size=(300, 10)).astype(float)
        l = rng.normal(size=(300, 4))
        m = knn_from_arrays(f, l, k=4)
        for q in rng.integers(0, 3, size=(50, 10)).astype(float):
            d = np.linalg.norm(m.features - q, axis=1)
            ref = np.lexsort((np.arange(len(d)), d))[:4]
            assert np.array_equal(np.sort(ref), np.sort(_neighbors(m, q)))

    def test_errors(self):
        with pytest.raises(ValueError):
            knn_from_arrays(np.empty((0, 2)), np.empty((0, 4)), k=1)
        with pytest.raises(ValueError):
            knn_from_arrays(np.zeros((2, 2)), np.zeros((2, 4)), k=3)
        m = knn_from_arrays(np.zeros((2, 2)), np.zeros((2, 4)), k=1)
        with pytest.raises(ValueError):
            predict_features(m, [0.0, 0.0, 0.0])

    def test_fit_from_records(self):
        class Rec:
            def __init__(self, v, label):
                self.observation = Observation(np.full((2, 2), v), np.zeros((2, 2)), 0.05)
                self.label = label
        recs = [Rec(0.0, DeltaPose(1, 0, 0, 0)), Rec(0.02, DeltaPose(0, 1, 0, 0))]
        m = fit_knn(recs, k=1)
        assert m.feature_length == 9
        assert predict_model(m, recs[1].observation) == DeltaPose(0, 1, 0, 0)


def _neighbors(model, q):
    from deltainsert.predictor import knn_neighbors
    return knn_neighbors(model, q)[0]


class TestRidge:
    def test_exact_recovery(self):
        rng = np.random.default_rng(0)
        f = rng.normal(size=(100, 5))
        l = np.column_stack([f[:, 0], np.zeros((100, 3))])
        m = ridge_from_arrays(f, l, lam=1e-9)
        assert m.weights[0, 0] == pytest.approx(1.0, abs=1e-6)
        assert np.abs(m.weights[1:, 0]).max() < 1e-6

    def test_huge_lambda_gives_label_mean(self):
        rng = np.random.default_rng(1)
        f = rng.normal(size=(60, 4))
        l = np.column_stack([rng.normal(size=(60, 3)), np.zeros(60)])
        m = ridge_from_arrays(f, l, lam=1e9)
        assert np.abs(m.weights).max() < 1e-6
        got = predict_features(m, rng.normal(size=4))
        assert got.as_array()[:3] == pytest.approx(l[:, :3].mean(axis=0), abs=1e-6)

    def test_zero_features_give_bias(self):
        rng = np.random.default_rng(2)
        m = ridge_from_arrays(rng.normal(size=(30, 3)), rng.normal(size=(30, 4)) * 0.1, lam=0.1)
        got = predict_features(m, np.zeros(3))
        b = m.bias
        assert got == DeltaPose(b[0], b[1], b[2], math.atan2(b[3], b[4]))

    def test_normal_equations_oracle(self):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(50, 6))
        Y = rng.normal(size=(50, 5))
        lam = 0.3
        w, b = solve_ridge(X, Y, lam)
        # augmented system with an unpenalized intercept column
        A = np.column_stack([X, np.ones(50)])
        P = np.diag([lam] * 6 + [0.0])
        sol = np.linalg.solve(A.T @ A + P, A.T @ Y)
        assert np.abs(w - sol[:6]).max() < 1e-8
        assert np.abs(b - sol[6]).max() < 1e-8

    def test_singular_requires_lambda(self):
        f = np.column_stack([np.arange(10.0), np.arange(10.0)])
        with pytest.raises(np.linalg.LinAlgError, match="lambda"):
            ridge_from_arrays(f, np.zeros((10, 4)), lam=0.0)

    def test_nested_datasets_objective_non_decreasing_in_size(self):
        rng = np.random.default_rng(4)
        X = rng.normal(size=(80, 4))
        Y = rng.normal(size=(80, 5))

        def objective(n, lam):
            w, b = solve_ridge(X[:n], Y[:n], lam)
            return ((X[:n] @ w + b - Y[:n]) ** 2).sum() + lam * (w ** 2).sum()
        for lam in (0.0, 0.5):
            vals = [objective(n, lam) for n in (10, 20, 40, 80)]
            assert all(a <= b + 1e-9 for a, b in zip(vals, vals[1:]))

    def test_sin_cos_yaw(self):
        rng = np.random.default_rng(5)
        f = rng.normal(size=(100, 3))
        psi = np.full(100, 3.0)
        m = ridge_from_arrays(f, np.column_stack([np.zeros((100, 3)), psi]), lam=1e-6)
        assert predict_features(m, f[0]).dpsi == pytest.approx(3.0, abs=1e-9)


def some_model(kind, n=100, F=7, seed=0):
    rng = np.random.default_rng(seed)
    f = rng.normal(size=(n, F))
    l = np.column_stack([rng.normal(size=(n, 3)), rng.uniform(-3, 3, n)])
    if kind == "knn":
        return knn_from_arrays(f, l, k=3, weighting="inverse_distance")
    return ridge_from_arrays(f, l, lam=0.01)


class TestModelFiles:
    @pytest.mark.parametrize("kind", ["knn", "ridge"])
    def test_round_trip(self, tmp_path, kind):
        m = some_model(kind)
        p = tmp_path / "m.bin"
        save_model(m, p)
        back = load_model(p)
        probes = np.random.default_rng(9).normal(size=(50, 7))
        for q in probes:
            assert predict_features(back, q) == predict_features(m, q)
        save_model(back, tmp_path / "again.bin")
        assert p.read_bytes() == (tmp_path / "again.bin").read_bytes()

    def test_empty_file(self, tmp_path):
        p = tmp_path / "e.bin"
        p.write_bytes(b"")
        with pytest.raises(ModelFormatError) as exc:
            load_model(p)
        assert exc.value.offset == 0

    def test_version_mismatch(self, tmp_path):
        p = tmp_path / "m.bin"
        save_model(some_model("knn"), p)
        raw = p.read_bytes().replace(b"deltainsert-model 1 ", b"deltainsert-model 7 ", 1)
        p.write_bytes(raw)
        with pytest.raises(ModelFormatError, match="version"):
            load_model(p)

    def test_truncated_payload(self, tmp_path):
        p = tmp_path / "m.bin"
        save_model(some_model("ridge"), p)
        p.write_bytes(p.read_bytes()[:-3])
        with pytest.raises(ModelFormatError, match="truncated"):
            load_model(p)

    def test_bad_field_offset(self, tmp_path):
        p = tmp_path / "m.bin"
        save_model(some_model("knn"), p)
        raw = p.read_bytes().replace(b"k=3", b"k=x", 1)
        p.write_bytes(raw)
        with pytest.raises(ModelFormatError) as exc:
            load_model(p)
        assert raw[exc.value.offset:exc.value.offset + 3] == b"k=x"

    def test_determinism(self):
        m = some_model("knn")
        q = np.random.default_rng(1).normal(size=7)
        assert predict_features(m, q) == predict_features(m, q)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 6), st.integers(0, 10_000))
def test_knn_yaw_in_range(k, seed):
    rng = np.random.default_rng(seed)
    f = rng.normal(size=(12, 3))
    l = np.column_stack([rng.normal(size=(12, 3)), rng.uniform(-math.pi, math.pi, 12)])
    m = knn_from_arrays(f, l, k=k)
    assert -math.pi < predict_features(m, rng.normal(size=3)).dpsi <= math.pi
