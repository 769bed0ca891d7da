"""Learned noise estimator with a camera-conditional and a null branch.

The estimator is affine in the noisy input with time-dependent coefficients::

    eps_hat(x, t, c) = sum_f phi_f(t) * (Wx[f] x + Wc[f] e(c) + u[f])
    eps_hat(x, t, NULL) = sum_f phi_f(t) * (Wx_null[f] x + u_null[f])

``e(c)`` is the raw camera vector for linear generators and a one-hot row
for discrete ones. The time features include ``1/sigma`` and
``alpha/sigma`` so that the exact conditional noise
``(x - alpha g(c)) / sigma`` of either generator family is representable.
"""

from __future__ import annotations

import json

import numpy as np

from .schedule import ScheduleDomainError

TIME_FEATURES = {
    "vp-affine": ("1", "alpha", "sigma", "1/sigma", "alpha/sigma"),
}

COND_KEYS = ("Wx", "Wc", "u")
NULL_KEYS = ("Wx_null", "u_null")


class _NullToken:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "NULL"

    def __reduce__(self):
        return (_NullToken, ())


NULL = _NullToken()


def is_null(cond):
    return cond is NULL


def time_features(t, schedule, name="vp-affine"):
    if name not in TIME_FEATURES:
        raise ValueError(f"unknown time feature set {name!r}")
    a, s = schedule.alpha_sigma(t)
    a = np.asarray(a, dtype=float)
    s = np.asarray(s, dtype=float)
    return np.stack([np.ones_like(a), a, s, 1.0 / s, a / s], axis=-1)


def score_from_eps(eps_hat, t, schedule):
    """Convert a noise estimate to a score estimate, ``-eps_hat / sigma_t``."""
    s = np.asarray(schedule.sigma(t), dtype=float)
    if np.any(s == 0):
        raise ScheduleDomainError("score is undefined at sigma_t = 0")
    if s.ndim == 1:
        s = s[:, None]
    return -np.asarray(eps_hat, dtype=float) / s


class AffineScoreModel:
    def __init__(self, dim, cond_dim, one_hot=False, features="vp-affine"):
        if features not in TIME_FEATURES:
            raise ValueError(f"unknown time feature set {features!r}")
        self.dim = dim
        self.cond_dim = cond_dim
        self.one_hot = one_hot
        self.features = features
        F = len(TIME_FEATURES[features])
        self.params = {
            "Wx": np.zeros((F, dim, dim)),
            "Wc": np.zeros((F, dim, cond_dim)),
            "u": np.zeros((F, dim)),
            "Wx_null": np.zeros((F, dim, dim)),
            "u_null": np.zeros((F, dim)),
        }

    @classmethod
    def for_generator(cls, generator, features="vp-affine"):
        if generator.kind == "discrete":
            return cls(generator.dim, generator.K, one_hot=True, features=features)
        return cls(generator.dim, generator.k, one_hot=False, features=features)

    def copy(self):
        out = AffineScoreModel(self.dim, self.cond_dim, self.one_hot, self.features)
        out.params = {k: v.copy() for k, v in self.params.items()}
        return out

    def embed(self, cond):
        if self.one_hot:
            idx = np.asarray(cond)
            if np.any(idx < 0) or np.any(idx >= self.cond_dim):
                raise ValueError(f"camera index out of range [0, {self.cond_dim})")
            return np.eye(self.cond_dim)[idx.astype(np.int64)]
        c = np.asarray(cond, dtype=float)
        if c.shape[-1] != self.cond_dim:
            raise ValueError(f"camera must have dimension {self.cond_dim}, got shape {c.shape}")
        return c

    def _branch(self, x, cond):
        """Per-feature affine outputs, shape ``(..., F, D)``."""
        if is_null(cond):
            p = self.params
            return np.einsum("fij,...j->...fi", p["Wx_null"], x) + p["u_null"]
        p = self.params
        e = self.embed(cond)
        return (np.einsum("fij,...j->...fi", p["Wx"], x)
                + np.einsum("fij,...j->...fi", p["Wc"], e) + p["u"])

    def predict_eps(self, x_t, t, cond, schedule):
        x = np.asarray(x_t, dtype=float)
        if x.shape[-1] != self.dim:
            raise ValueError(f"expected inputs of dimension {self.dim}, got shape {x.shape}")
        phi = time_features(t, schedule, self.features)
        return np.einsum("...f,...fi->...i", phi, self._branch(x, cond))

    def score(self, x_t, t, cond, schedule):
        return score_from_eps(self.predict_eps(x_t, t, cond, schedule), t, schedule)

    def dsm_loss(self, x_t, t, cond, eps, schedule):
        """``omega(t) * ||eps_hat - eps||^2`` for one sample."""
        r = self.predict_eps(x_t, t, cond, schedule) - eps
        return float(schedule.omega(t) * r @ r)

    def dsm_grad(self, x_t, t, cond, eps, schedule):
        """Gradient of :meth:`dsm_loss` for the branch selected by ``cond``."""
        x = np.asarray(x_t, dtype=float)
        phi = time_features(t, schedule, self.features)
        r = 2.0 * schedule.omega(t) * (self.predict_eps(x, t, cond, schedule) - eps)
        fr = phi[:, None] * r[None, :]
        if is_null(cond):
            return {"Wx_null": fr[:, :, None] * x[None, None, :], "u_null": fr}
        e = self.embed(cond)
        return {"Wx": fr[:, :, None] * x[None, None, :], "Wc": fr[:, :, None] * e[None, None, :], "u": fr}

    def dsm_step(self, sample, use_null, lr, schedule):
        """One SGD step on the denoising loss; only the chosen branch moves."""
        cond = NULL if use_null else sample.c
        for key, g in self.dsm_grad(sample.x_t, sample.t, cond, sample.eps, schedule).items():
            self.params[key] -= lr * g
        return self

    def branch_keys(self, use_null):
        return NULL_KEYS if use_null else COND_KEYS

    def to_json(self):
        state = {
            "dim": self.dim, "cond_dim": self.cond_dim, "one_hot": self.one_hot, "features": self.features,
            "params": {k: {"shape": list(v.shape), "data": v.ravel().tolist()} for k, v in self.params.items()},
        }
        return json.dumps(state, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        state = json.loads(text)
        model = cls(state["dim"], state["cond_dim"], state["one_hot"], state["features"])
        for k, v in state["params"].items():
            model.params[k] = np.asarray(v["data"], dtype=float).reshape(v["shape"])
        return model
