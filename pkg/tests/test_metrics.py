import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from esdlab import DiscreteViewGenerator, GaussianTarget, LinearGaussianGenerator, MixtureTarget
from esdlab.metrics import (MetricRecord, SyntheticClassifier, classify, collapse_diagnostics, frechet_distance,
                            inception_gain, inception_quality, inception_variety, metric_record, quality_variety,
                            trace_sqrt_product)


def _fid_oracle(a, b):
    mu_a, mu_b = a.mean(axis=0), b.mean(axis=0)
    ca, cb = np.atleast_2d(np.cov(a.T, bias=True)), np.atleast_2d(np.cov(b.T, bias=True))
    root = scipy.linalg.sqrtm(ca @ cb)
    return float(np.sum((mu_a - mu_b) ** 2) + np.trace(ca + cb - 2 * root.real))


def _two_class(sep=10.0, var=0.5):
    return MixtureTarget([0.5, 0.5], [GaussianTarget([-sep / 2, 0.0], var * np.eye(2)),
                                      GaussianTarget([sep / 2, 0.0], var * np.eye(2))])


def test_fid_identical_sets():
    x = np.random.default_rng(0).normal(size=(500, 3))
    assert frechet_distance(x, x) < 1e-10


def test_fid_point_masses():
    rng = np.random.default_rng(1)
    a = np.array([1.0, 2.0]) + 1e-9 * rng.normal(size=(100, 2))
    b = np.array([-1.0, 0.5]) + 1e-9 * rng.normal(size=(100, 2))
    assert frechet_distance(a, b) == pytest.approx(4.0 + 2.25, abs=1e-6)


def test_fid_shifted_gaussians():
    rng = np.random.default_rng(2)
    a = rng.normal(size=(100_000, 2))
    b = rng.normal(size=(100_000, 2)) + [1.0, 0.0]
    assert abs(frechet_distance(a, b) - 1.0) < 0.05


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 4))
def test_fid_matches_sqrtm_oracle(seed, D):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(200, D)) @ rng.normal(size=(D, D))
    b = rng.normal(size=(150, D)) @ rng.normal(size=(D, D)) + rng.normal(size=D)
    assert frechet_distance(a, b) == pytest.approx(_fid_oracle(a, b), rel=1e-6, abs=1e-8)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_fid_symmetric_nonnegative(seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(50, 2)) * rng.uniform(0.1, 3)
    b = rng.normal(size=(60, 2)) + rng.normal(size=2)
    ab, ba = frechet_distance(a, b), frechet_distance(b, a)
    assert ab >= 0
    assert ab == pytest.approx(ba, rel=1e-9, abs=1e-12)


def test_fid_consistency_with_sample_size():
    medians = []
    for n in (100, 1000, 10_000):
        vals = [frechet_distance(np.random.default_rng(s).normal(size=(n, 2)),
                                 np.random.default_rng(s + 1000).normal(size=(n, 2))) for s in range(15)]
        medians.append(np.median(vals))
    assert medians[0] > medians[1] > medians[2]


def test_fid_errors():
    with pytest.raises(ValueError):
        frechet_distance(np.zeros((1, 2)), np.zeros((5, 2)))
    with pytest.raises(ValueError):
        frechet_distance(np.zeros((5, 2)), np.zeros((5, 3)))


def test_trace_sqrt_product_commuting():
    a, b = np.diag([4.0, 9.0]), np.diag([1.0, 4.0])
    assert trace_sqrt_product(a, b) == pytest.approx(2.0 + 6.0, rel=1e-14)


def test_classify_examples():
    clf = SyntheticClassifier(_two_class())
    assert np.allclose(classify(clf, np.array([5.0, 0.0])), [0.0, 1.0], atol=1e-12)
    assert np.allclose(classify(clf, np.array([0.0, 3.0])), [0.5, 0.5], atol=1e-15)
    hot = SyntheticClassifier(_two_class(), temperature=1e12)
    assert np.allclose(classify(hot, np.array([5.0, 0.0])), [0.5, 0.5], atol=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_posterior_rows_normalised(seed):
    rng = np.random.default_rng(seed)
    K = int(rng.integers(1, 5))
    mix = MixtureTarget(rng.dirichlet(np.ones(K)),
                        [GaussianTarget(rng.normal(scale=3, size=2), np.diag(rng.uniform(0.1, 2, 2))) for _ in range(K)])
    post = classify(SyntheticClassifier(mix, rng.uniform(0.1, 5)), rng.normal(scale=20, size=(30, 2)))
    assert np.all(post >= 0)
    assert np.allclose(post.sum(axis=1), 1.0, atol=1e-10)


def test_quality_variety_examples():
    clf = SyntheticClassifier(_two_class(sep=40.0, var=0.1))
    left, right = np.array([-20.0, 0.0]), np.array([20.0, 0.0])
    iq, iv = quality_variety(np.stack([left, left]), clf)
    assert iq == pytest.approx(0.0, abs=1e-12) and iv == pytest.approx(iq, abs=1e-12)
    iq, iv = quality_variety(np.stack([left, right]), clf)
    assert iq == pytest.approx(0.0, abs=1e-12)
    assert iv == pytest.approx(math.log(2), abs=1e-12)
    flat = SyntheticClassifier(MixtureTarget(np.full(3, 1 / 3), [GaussianTarget([0.0, 0.0], np.eye(2))] * 3))
    iq, iv = quality_variety(np.random.default_rng(0).normal(size=(10, 2)), flat)
    assert iq == pytest.approx(math.log(3), rel=1e-14) and iv == pytest.approx(math.log(3), rel=1e-14)
    x = np.random.default_rng(1).normal(size=(1, 2))
    iq, iv = quality_variety(np.repeat(x, 5, axis=0), SyntheticClassifier(_two_class(sep=1.0)))
    assert iv == pytest.approx(iq, rel=1e-12)


def test_discrete_views_at_modes():
    clf = SyntheticClassifier(_two_class(sep=10.0, var=0.3))
    gen = DiscreteViewGenerator([[-5.0, 0.0], [5.0, 0.0]])
    rng = np.random.default_rng(2)
    assert inception_quality(gen, clf, 200, rng) < 0.05
    assert inception_variety(gen, clf, 200, rng) == pytest.approx(math.log(2), abs=0.02)
    with pytest.raises(ValueError):
        inception_quality(gen, clf, 0, rng)


def test_inception_gain_examples():
    assert inception_gain(0.7, 0.7) == 0.0
    assert inception_gain(0.5, 0.6) == pytest.approx(0.2, rel=1e-14)
    assert inception_gain(0.0, 0.3) is None
    assert inception_gain(5e-7, 0.3) is None


def test_jensen_randomised():
    rng = np.random.default_rng(3)
    for _ in range(1000):
        K = int(rng.integers(2, 5))
        mix = MixtureTarget(rng.dirichlet(np.ones(K)),
                            [GaussianTarget(rng.normal(scale=2, size=2), np.diag(rng.uniform(0.2, 2, 2)))
                             for _ in range(K)])
        clf = SyntheticClassifier(mix, rng.uniform(0.3, 3))
        iq, iv = quality_variety(rng.normal(scale=3, size=(int(rng.integers(1, 20)), 2)), clf)
        assert iv >= iq - 1e-10


def test_collapse_diagnostics_examples(lab_target):
    at_target = LinearGaussianGenerator(lab_target.mu, np.linalg.cholesky(lab_target.sigma))
    tr, err = collapse_diagnostics(at_target, lab_target)
    assert tr == pytest.approx(np.trace(lab_target.sigma), rel=1e-14) and err == 0.0
    flat = LinearGaussianGenerator([0.0, 0.0], np.zeros((2, 2)))
    assert collapse_diagnostics(flat, lab_target) == (0.0, pytest.approx(math.sqrt(2), rel=1e-15))
    with pytest.raises(ValueError):
        collapse_diagnostics(DiscreteViewGenerator([[0.0, 0.0]]), lab_target)


def test_metric_record(lab_target, lab_generator):
    clf = SyntheticClassifier(_two_class(sep=2.0))
    rec = metric_record(lab_generator, lab_target, clf, np.random.default_rng(4), step=7)
    assert rec.step == 7 and rec.fid > 0
    assert rec.iv >= rec.iq - 1e-10
    assert rec.trace_cov == pytest.approx(np.trace(lab_generator.A @ lab_generator.A.T))
    assert set(rec.to_dict()) == {"fid", "iq", "iv", "ig", "trace_cov", "mean_err", "step"}
    disc = metric_record(DiscreteViewGenerator([[0.0, 0.0], [1.0, 1.0]]), lab_target, clf,
                         np.random.default_rng(5))
    assert disc.trace_cov is None and disc.mean_err is None
    assert MetricRecord().ig is None
