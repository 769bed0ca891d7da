"""Sample-quality and collapse diagnostics.

The classifier behind the inception-style scores is the exact Bayes
posterior over the components of a reference Gaussian mixture, optionally
flattened by a temperature. Entropies use natural logarithms.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import softmax

IG_FLOOR = 1e-6


@dataclass
class MetricRecord:
    fid: float | None = None
    iq: float | None = None
    iv: float | None = None
    ig: float | None = None  # None when IQ is too small for the ratio to mean anything
    trace_cov: float | None = None
    mean_err: float | None = None
    step: int | None = None

    def to_dict(self):
        return asdict(self)


def _moments(samples):
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] < 2:
        raise ValueError("need at least 2 samples per set")
    mean = x.mean(axis=0)
    centred = x - mean
    return mean, centred.T @ centred / x.shape[0]


def _psd_sqrt(mat):
    evals, evecs = np.linalg.eigh(0.5 * (mat + mat.T))
    return (evecs * np.sqrt(np.clip(evals, 0.0, None))) @ evecs.T


def trace_sqrt_product(cov_a, cov_b):
    """``tr((cov_a cov_b)^{1/2})`` through the symmetric form ``sqrt(a) b sqrt(a)``."""
    root_a = _psd_sqrt(cov_a)
    inner = root_a @ cov_b @ root_a
    evals = np.linalg.eigvalsh(0.5 * (inner + inner.T))
    if evals.min(initial=0.0) < -1e-10 * max(1.0, abs(evals).max(initial=0.0)):
        raise ValueError("covariance product has a significantly negative eigenvalue")
    return float(np.sqrt(np.clip(evals, 0.0, None)).sum())


def frechet_distance(samples_a, samples_b) -> float:
    """Frechet distance between Gaussians fitted (biased covariance) to two sample sets."""
    mu_a, cov_a = _moments(samples_a)
    mu_b, cov_b = _moments(samples_b)
    if mu_a.shape != mu_b.shape:
        raise ValueError(f"sample dimensions differ: {mu_a.shape[0]} vs {mu_b.shape[0]}")
    diff = mu_a - mu_b
    value = diff @ diff + np.trace(cov_a) + np.trace(cov_b) - 2.0 * trace_sqrt_product(cov_a, cov_b)
    return float(max(value, 0.0))


class SyntheticClassifier:
    def __init__(self, reference, temperature=1.0):
        if not temperature > 0:
            raise ValueError("temperature must be positive")
        self.reference = reference.as_mixture()
        self.temperature = float(temperature)

    @property
    def n_classes(self):
        return len(self.reference.components)

    def logits(self, x):
        x = np.asarray(x, dtype=float)
        comp = np.stack([c._pg.logpdf(x, 1.0, 0.0) for c in self.reference.components], axis=-1)
        with np.errstate(divide="ignore"):
            return (np.log(self.reference.weights) + comp) / self.temperature

    def classify(self, x):
        return softmax(self.logits(x), axis=-1)


def classify(clf, x):
    return clf.classify(x)


def _entropy(probs):
    p = np.asarray(probs, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, -p * np.log(p), 0.0)
    return terms.sum(axis=-1)


def quality_variety(renders, clf):
    """IQ and IV of a set of rendered views."""
    post = clf.classify(np.atleast_2d(renders))
    return float(_entropy(post).mean()), float(_entropy(post.mean(axis=0)))


def _render_views(generator, n_views, rng):
    if n_views < 1:
        raise ValueError("n_views must be at least 1")
    return generator.render(generator.sample_cameras(rng, n_views))


def inception_quality(generator, clf, n_views, rng) -> float:
    """Mean per-view posterior entropy."""
    return quality_variety(_render_views(generator, n_views, rng), clf)[0]


def inception_variety(generator, clf, n_views, rng) -> float:
    """Entropy of the view-averaged posterior."""
    return quality_variety(_render_views(generator, n_views, rng), clf)[1]


def inception_gain(iq, iv):
    """``(iv - iq) / iq``, or ``None`` when ``iq`` is below ``IG_FLOOR``."""
    if iq <= IG_FLOOR:
        return None
    return (iv - iq) / iq


def collapse_diagnostics(generator, target):
    """``(trace(A A^T), ||b - mu*||)`` for a linear generator."""
    if generator.kind != "linear":
        raise ValueError("collapse diagnostics need a linear generator")
    A = generator.A
    return float(np.trace(A @ A.T)), float(np.linalg.norm(generator.b - target.mu))


def metric_record(generator, target, clf, rng, n_views=1000, n_reference=1000, step=None):
    """All diagnostics for one generator state, sharing one set of rendered views."""
    renders = _render_views(generator, n_views, rng)
    reference = target.sample(rng, n_reference)
    iq, iv = quality_variety(renders, clf)
    record = MetricRecord(fid=frechet_distance(renders, reference), iq=iq, iv=iv, ig=inception_gain(iq, iv),
                          step=step)
    if generator.kind == "linear" and target.kind == "gaussian":
        record.trace_cov, record.mean_err = collapse_diagnostics(generator, target)
    return record
