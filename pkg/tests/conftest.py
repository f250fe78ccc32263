import numpy as np
import pytest

from sosot.baselines import GaussianMeasure, wishart_covariance
from sosot.dualsolve import DualProblemData, Hyperparameters, assemble
from sosot.kernels import FillingPairs, KernelSpec, SampleSet, paired_fill


def make_instance(
    seed,
    n=10,
    d=2,
    lam1=1e-2,
    lam2=1e-2,
    delta=1e3,
    rank=None,
    z_variant="derived",
    family="sobolev",
    bandwidth=1.0,
):
    """Random Gaussian-pair dual instance used across the solver tests."""
    rng = np.random.default_rng(seed)
    src = GaussianMeasure(0.3 * rng.standard_normal(d), wishart_covariance(d, rng))
    dst = GaussianMeasure(0.3 * rng.standard_normal(d), wishart_covariance(d, rng))
    mu = src.sample(n, rng)
    nu = dst.sample(n, rng)
    smooth = 20.0 if family == "sobolev" else None
    spec = KernelSpec(family, bandwidth=bandwidth, dim=d, smoothness=smooth)
    hyper = Hyperparameters(lam1, lam2, delta=delta, rank=rank)
    data = assemble(
        spec, spec, spec, mu, nu, paired_fill(mu, nu), hyper,
        z_variant=z_variant, nystrom_seed=seed,
    )
    return data, src, dst


def synthetic_data(qmat, features, inner, embed, q_sq, hyper, z_variant="derived"):
    """DualProblemData with hand-chosen matrices; geometry fields are dummies."""
    qmat = np.asarray(qmat, dtype=float)
    features = np.asarray(features, dtype=float)
    ell = qmat.shape[0]
    pts = np.linspace(0.0, 1.0, ell)[:, None]
    fill = FillingPairs(pts, pts)
    samples = SampleSet(np.zeros((1, 1)))
    spec = KernelSpec("gaussian", bandwidth=1.0, dim=1)
    gram = features.T @ features
    q_eigs = np.linalg.eigvalsh(0.5 * (qmat + qmat.T))
    return DualProblemData(
        qmat=qmat,
        inner=np.asarray(inner, dtype=float),
        embed=np.asarray(embed, dtype=float),
        q_sq=float(q_sq),
        features=features,
        feature_gram=gram,
        hyper=hyper,
        fill=fill,
        mu_samples=samples,
        nu_samples=samples,
        spec_x=spec,
        spec_y=spec,
        z_variant=z_variant,
        q_eig_min=float(q_eigs[0]),
        q_eig_max=float(q_eigs[-1]),
        k2_eig_max=float(np.linalg.eigvalsh(gram * gram)[-1]),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
