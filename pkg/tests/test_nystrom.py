import numpy as np
import pytest

from sosot.kernels import KernelSpec, SampleSet, gram_matrix
from sosot.nystrom import NystromFeatures, nystrom_features


def kernel_gram(seed, n, d=2, bandwidth=1.0):
    rng = np.random.default_rng(seed)
    pts = SampleSet(rng.standard_normal((n, d)))
    spec = KernelSpec("gaussian", bandwidth=bandwidth, dim=d)
    return gram_matrix(spec, pts, pts)


def direct_nystrom(mat, indices):
    v = mat[:, indices]
    w = mat[np.ix_(indices, indices)]
    return v @ np.linalg.solve(w, v.T)


class TestNystromFeatures:
    def test_full_rank_is_exact(self):
        k = kernel_gram(0, 12)
        nf = nystrom_features(k, rank=12, seed=0)
        err = np.linalg.norm(nf.approx_gram() - k) / np.linalg.norm(k)
        assert err <= 1e-8

    def test_identity_structure(self):
        k = np.eye(8)
        nf = nystrom_features(k, rank=3, seed=1)
        approx = nf.approx_gram()
        sel = nf.selected_indices
        assert np.allclose(approx[np.ix_(sel, sel)], np.eye(3))
        mask = np.ones(8, dtype=bool)
        mask[sel] = False
        assert np.allclose(approx[mask], 0.0)

    def test_exact_low_rank_recovery(self):
        rng = np.random.default_rng(2)
        g = rng.standard_normal((20, 5))
        k = g @ g.T
        nf = nystrom_features(k, rank=5, seed=3)
        assert np.linalg.norm(k - nf.approx_gram()) <= 1e-6

    def test_features_reproduce_direct_formula(self):
        k = kernel_gram(4, 15, bandwidth=0.5)
        nf = nystrom_features(k, rank=6, seed=5)
        want = direct_nystrom(k, nf.selected_indices)
        got = nf.approx_gram()
        assert np.linalg.norm(got - want) <= 1e-6 * np.linalg.norm(want) + 1e-10

    def test_residual_is_psd(self):
        k = kernel_gram(6, 18, bandwidth=0.7)
        nf = nystrom_features(k, rank=7, seed=7)
        resid = k - nf.approx_gram()
        w = np.linalg.eigvalsh(0.5 * (resid + resid.T))
        assert w[0] >= -1e-6 * np.linalg.eigvalsh(k)[-1]

    def test_error_monotone_on_nested_subsets(self):
        k = kernel_gram(8, 16, bandwidth=0.6)
        rng = np.random.default_rng(9)
        perm = rng.permutation(16)
        errs = []
        for r in (4, 8, 12, 16):
            approx = direct_nystrom(k + 1e-12 * np.eye(16), np.sort(perm[:r]))
            errs.append(np.linalg.norm(k - approx))
        assert all(errs[i + 1] <= errs[i] + 1e-8 for i in range(len(errs) - 1))

    def test_seed_determinism(self):
        k = kernel_gram(10, 14)
        a = nystrom_features(k, rank=5, seed=42)
        b = nystrom_features(k, rank=5, seed=42)
        assert np.array_equal(a.selected_indices, b.selected_indices)
        assert np.array_equal(a.features, b.features)

    def test_rank_bounds(self):
        k = kernel_gram(11, 6)
        with pytest.raises(ValueError):
            nystrom_features(k, rank=7, seed=0)
        with pytest.raises(ValueError):
            nystrom_features(k, rank=0, seed=0)
