import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from riccicov.spd import (
    CovDescriptor,
    KernelParams,
    SPDError,
    SubjectSignature,
    covariance,
    geodesic_distance,
    kernel_matrix,
    load_signature,
    median_bandwidth,
    pairwise_distances,
    rbf_kernel,
    save_signature,
    set_kernel,
)


def random_spd(rng, d=3, spread=1.0):
    A = rng.normal(size=(d, d)) * spread
    return A @ A.T + 0.1 * np.eye(d)


def random_signature(rng, m, sid="s", label=0, d=3):
    return SubjectSignature([CovDescriptor(random_spd(rng, d), 0.0) for _ in range(m)], sid, label)


def covariance_oracle(F):
    n, d = F.shape
    mu = [sum(F[j, a] for j in range(n)) / n for a in range(d)]
    C = np.zeros((d, d))
    for a in range(d):
        for b in range(d):
            C[a, b] = sum((F[j, a] - mu[a]) * (F[j, b] - mu[b]) for j in range(n)) / n
    return C


def distance_oracle(X, Y):
    theta = scipy.linalg.eigh(Y, X, eigvals_only=True)
    return float(np.sqrt(np.sum(np.log(theta) ** 2)))


def set_kernel_oracle(S1, S2, sigma, mode):
    pick = max if mode == "best" else min

    def directed(A, B):
        total = 0.0
        for X in A.descriptors:
            total += pick(np.exp(-distance_oracle(X.matrix, Y.matrix) ** 2 / (2 * sigma**2)) for Y in B.descriptors)
        return total / A.m

    return 0.5 * (directed(S1, S2) + directed(S2, S1))


# -- covariance ---------------------------------------------------------------


def test_constant_rows_fall_back_to_identity_ridge():
    c = covariance(np.ones((10, 3)) * 4.2, reg=1e-6)
    assert np.array_equal(c.matrix, 1e-6 * np.eye(3))


def test_population_convention():
    assert covariance(np.array([[0.0], [2.0]]), reg=0.0).matrix.tolist() == [[1.0]]


def test_covariance_matches_double_loop():
    F = np.random.default_rng(0).normal(size=(100, 3))
    c = covariance(F, reg=0.0)
    assert np.abs(c.matrix - covariance_oracle(F)).max() < 1e-12


def test_ridge_is_relative_to_trace():
    F = np.random.default_rng(1).normal(size=(50, 3)) * [1, 10, 100]
    raw = covariance(F, reg=0.0).matrix
    c = covariance(F, reg=1e-3)
    assert c.reg == pytest.approx(1e-3 * np.trace(raw) / 3, rel=1e-14)
    assert np.allclose(c.matrix - raw, c.reg * np.eye(3), rtol=0, atol=1e-9)


def test_covariance_is_row_permutation_invariant():
    rng = np.random.default_rng(2)
    F = rng.normal(size=(64, 3))
    a = covariance(F).matrix
    b = covariance(F[rng.permutation(64)]).matrix
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-15)


def test_covariance_needs_two_rows():
    with pytest.raises(SPDError, match="at least 2"):
        covariance(np.ones((1, 3)))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 60))
def test_covariance_is_spd(seed, n):
    F = np.random.default_rng(seed).normal(size=(n, 3))
    C = covariance(F).matrix
    assert np.abs(C - C.T).max() <= 1e-12
    assert np.linalg.eigvalsh(C).min() > 0


# -- distance ---------------------------------------------------------------


def test_distance_examples():
    X = random_spd(np.random.default_rng(0))
    assert geodesic_distance(X, X) < 1e-12
    assert geodesic_distance(np.eye(2), np.diag([np.e**2, np.e**2])) == pytest.approx(2 * np.sqrt(2), abs=1e-14)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_distance_matches_generalized_eigen_oracle(seed):
    rng = np.random.default_rng(seed)
    X, Y = random_spd(rng), random_spd(rng)
    assert abs(geodesic_distance(X, Y) - distance_oracle(X, Y)) < 1e-10


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(1e-3, 1e3))
def test_distance_scale_invariance(seed, c):
    rng = np.random.default_rng(seed)
    X, Y = random_spd(rng), random_spd(rng)
    assert abs(geodesic_distance(c * X, c * Y) - geodesic_distance(X, Y)) < 1e-9


def test_identity_of_indiscernibles():
    rng = np.random.default_rng(5)
    X = random_spd(rng)
    assert geodesic_distance(X, X.copy()) < 1e-10
    assert geodesic_distance(X, X + 1e-6 * np.eye(3)) > 0


def test_pairwise_matches_scalar():
    rng = np.random.default_rng(3)
    A = np.stack([random_spd(rng) for _ in range(4)])
    B = np.stack([random_spd(rng) for _ in range(5)])
    D = pairwise_distances(A, B)
    for i in range(4):
        for j in range(5):
            assert D[i, j] == pytest.approx(geodesic_distance(A[i], B[j]), abs=1e-12)


def test_non_spd_rejected():
    with pytest.raises(SPDError):
        geodesic_distance(np.eye(3), np.diag([1.0, -1.0, 1.0]))
    with pytest.raises(SPDError, match="dimension"):
        geodesic_distance(np.eye(3), np.eye(2))


# -- kernels ---------------------------------------------------------------


def test_rbf_examples():
    rng = np.random.default_rng(0)
    X = random_spd(rng)
    assert rbf_kernel(X, X, 0.7) == 1.0
    Y = np.diag([np.e**2, np.e**2])
    d = 2 * np.sqrt(2)
    assert rbf_kernel(np.eye(2), Y, d / np.sqrt(2)) == pytest.approx(np.exp(-1), abs=1e-15)
    assert rbf_kernel(np.eye(2), Y, 1e8) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("mode", ["best", "worst"])
def test_set_kernel_examples(mode):
    rng = np.random.default_rng(1)
    X, Y = random_spd(rng), random_spd(rng)
    p = KernelParams(1.5, mode)
    single = set_kernel(
        SubjectSignature([CovDescriptor(X, 0.0)], "a"), SubjectSignature([CovDescriptor(Y, 0.0)], "b"), p
    )
    assert single == pytest.approx(rbf_kernel(X, Y, 1.5), abs=1e-15)


def test_self_kernel_is_one_in_best_mode():
    S = random_signature(np.random.default_rng(2), 6)
    assert set_kernel(S, S, KernelParams(1.0, "best")) == pytest.approx(1.0, abs=1e-15)


@pytest.mark.parametrize("mode", ["best", "worst"])
@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_set_kernel_matches_enumeration(mode, seed):
    rng = np.random.default_rng(seed)
    S1, S2 = random_signature(rng, 5, "a"), random_signature(rng, 5, "b")
    p = KernelParams(float(rng.uniform(0.5, 3.0)), mode)
    k = set_kernel(S1, S2, p)
    assert abs(k - set_kernel_oracle(S1, S2, p.sigma, mode)) < 1e-12
    assert k == set_kernel(S2, S1, p)
    assert 0 < k <= 1


def test_set_kernel_dimension_mismatch():
    rng = np.random.default_rng(0)
    with pytest.raises(SPDError, match="dimensions differ"):
        set_kernel(random_signature(rng, 2, d=3), random_signature(rng, 2, d=4), KernelParams())


def test_kernel_matrix_matches_set_kernel():
    rng = np.random.default_rng(4)
    sigs = [random_signature(rng, int(rng.integers(1, 6)), f"s{i}") for i in range(6)]
    p = KernelParams(2.0, "best")
    K = kernel_matrix(sigs, p)
    assert np.array_equal(K, K.T)
    for i in range(6):
        for j in range(6):
            assert K[i, j] == pytest.approx(set_kernel(sigs[i], sigs[j], p), abs=1e-14)


# -- bandwidth ---------------------------------------------------------------


def test_median_single_pair():
    X = CovDescriptor(np.eye(2), 0.0)
    Y = CovDescriptor(np.diag([np.e**2, 1.0]), 0.0)
    assert median_bandwidth([SubjectSignature([X, Y], "a")]) == pytest.approx(2.0, abs=1e-14)


def test_median_identical_descriptors_warns():
    X = CovDescriptor(np.eye(3), 0.0)
    with pytest.warns(UserWarning, match="zero"):
        assert median_bandwidth([SubjectSignature([X, X, X], "a")]) == 1.0


def test_median_exact_below_cap():
    rng = np.random.default_rng(6)
    sigs = [random_signature(rng, 10, f"s{i}") for i in range(10)]
    mats = np.concatenate([s.stack() for s in sigs])
    full = [geodesic_distance(mats[i], mats[j]) for i in range(100) for j in range(i + 1, 100)]
    assert median_bandwidth(sigs) == pytest.approx(np.median(full), abs=1e-12)
    sampled = median_bandwidth(sigs, cap=2000, seed=3)
    assert sampled == median_bandwidth(sigs, cap=2000, seed=3)
    assert abs(sampled - np.median(full)) < 0.1 * np.median(full)


# -- metric axioms ---------------------------------------------------------------


def test_metric_axioms_on_random_triples():
    rng = np.random.default_rng(2024)
    for _ in range(200):
        X, Y, Z = (random_spd(rng) for _ in range(3))
        dxy, dyx = geodesic_distance(X, Y), geodesic_distance(Y, X)
        assert abs(dxy - dyx) < 1e-12 * max(1.0, dxy)
        assert dxy <= geodesic_distance(X, Z) + geodesic_distance(Z, Y) + 1e-9
        A = rng.normal(size=(3, 3)) + 3 * np.eye(3)
        assert abs(geodesic_distance(A @ X @ A.T, A @ Y @ A.T) - dxy) < 1e-8


# -- files ---------------------------------------------------------------


@pytest.mark.parametrize("suffix", [".sig", ".npz"])
def test_signature_round_trip(tmp_path, suffix):
    sig = random_signature(np.random.default_rng(8), 4, "subj_01", 1)
    sig = SubjectSignature(sig.descriptors, sig.subject_id, sig.label, stages=[0, 2, 5, 9])
    save_signature(sig, tmp_path / f"s{suffix}")
    back = load_signature(tmp_path / f"s{suffix}")
    assert (back.subject_id, back.label, back.stages) == ("subj_01", 1, [0, 2, 5, 9])
    assert np.array_equal(back.stack(), sig.stack())


def test_unlabelled_signature_round_trip(tmp_path):
    sig = random_signature(np.random.default_rng(9), 2, "x", None)
    save_signature(sig, tmp_path / "s.sig")
    assert load_signature(tmp_path / "s.sig").label is None
