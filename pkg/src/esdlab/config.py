"""Experiment configuration: a flat ``block.key = value`` file or JSON.

Key-value files hold one assignment per line; ``#`` starts a comment and
values are parsed as JSON when possible (numbers, lists, objects, ``true``),
otherwise taken as bare strings::

    target.kind = gaussian
    target.mu = [1, -1]
    target.sigma = [[1, 0], [0, 0.25]]
    distill.method = ESD_CFG

JSON files may be flat (dotted keys) or nested by block. Every error raised
while loading is a :class:`ConfigError` whose message starts with
``path:line:`` when the offending key can be located.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .distill import ConfigError, DistillConfig, RandomStreams
from .generators import DiscreteViewGenerator, LinearGaussianGenerator
from .metrics import SyntheticClassifier
from .schedule import DiffusionSchedule
from .score_model import TIME_FEATURES, AffineScoreModel
from .targets import GaussianTarget, MixtureTarget

DEFAULTS = {
    "schedule.kind": "variance-preserving-exp",
    "schedule.T": 3.0,
    "schedule.t_min": 0.05,
    "schedule.t_max": None,
    "schedule.weight": "unit",
    "target.kind": "gaussian",
    "target.mu": None,
    "target.sigma": None,
    "target.components": None,
    "target.prior_guidance": 1.0,
    "generator.kind": "linear",
    "generator.D": None,
    "generator.k": None,
    "generator.K": None,
    "generator.init": "default",
    "score_model.eta2": None,
    "score_model.time_features": "vp-affine",
    "score_model.init_null_scale": 0.0,
    "distill.method": "ESD_CFG",
    "distill.lambda": 0.5,
    "distill.p_null": 0.5,
    "distill.eta1": 0.01,
    "distill.eta2": 1e-2,
    "distill.steps": 2000,
    "distill.warmup": 100,
    "distill.seed": 0,
    "distill.score_source": None,
    "distill.log_every": 10,
    "distill.init_scale": 1.0,
    "distill.optimizer": "sgd",
    "distill.fit_marginal_directly": False,
    "distill.guard": 1e6,
    "metrics.n_views": 1000,
    "metrics.n_reference": 1000,
    "metrics.temperature": 1.0,
    "metrics.reference": None,
    "metrics.seed": 0,
    "output.plot": False,
    "output.plot_every": None,
}


def _parse_value(raw):
    raw = raw.strip()
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        if len(raw) >= 2 and raw[0] == raw[-1] and raw[0] in "'\"":
            return raw[1:-1]
        return raw


def _flatten(obj, prefix=""):
    out = {}
    for key, value in obj.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict) and prefix == "" and "." not in key:
            out.update(_flatten(value, name + "."))
        else:
            out[name] = value
    return out


def parse_text(text, source="<config>"):
    """Return ``(values, lines)`` from config text; ``lines`` maps keys to 1-based line numbers."""
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            values = _flatten(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{source}:{exc.lineno}: invalid JSON: {exc.msg}") from None
        lines = {}
        text_lines = text.splitlines()
        for key in values:
            leaf = key.split(".")[-1]
            for i, line in enumerate(text_lines, 1):
                if f'"{key}"' in line or f'"{leaf}"' in line:
                    lines[key] = i
                    break
        return values, lines
    values, lines = {}, {}
    for i, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{source}:{i}: expected 'key = value', got {body!r}")
        key, raw = body.split("=", 1)
        key = key.strip()
        if key in values:
            raise ConfigError(f"{source}:{i}: duplicate key {key!r} (first set on line {lines[key]})")
        values[key] = _parse_value(raw)
        lines[key] = i
    return values, lines


@dataclass
class ExperimentConfig:
    values: dict
    lines: dict = field(default_factory=dict)
    source: str = "<config>"

    def where(self, key):
        line = self.lines.get(key)
        return f"{self.source}:{line}" if line else self.source

    def fail(self, message, key=None):
        raise ConfigError(f"{self.where(key)}: {message}", key)

    def __getitem__(self, key):
        return self.values[key]

    @property
    def seed(self):
        return int(self.values["distill.seed"])

    def with_overrides(self, **overrides):
        values = dict(self.values)
        values.update(overrides)
        return ExperimentConfig(values, dict(self.lines), self.source)

    def echo(self):
        """Canonical flat mapping; loading it back reproduces the run."""
        return {k: self.values[k] for k in sorted(self.values)}

    def echo_text(self):
        return json.dumps(self.echo(), indent=2, sort_keys=True) + "\n"

    # builders ---------------------------------------------------------------

    def schedule(self):
        v = self.values
        try:
            return DiffusionSchedule(kind=v["schedule.kind"], T=float(v["schedule.T"]),
                                     t_min=float(v["schedule.t_min"]),
                                     t_max=None if v["schedule.t_max"] is None else float(v["schedule.t_max"]),
                                     weight_kind=v["schedule.weight"])
        except (TypeError, ValueError) as exc:
            self.fail(f"invalid schedule: {exc}", "schedule.kind")

    def _matrix(self, key, value, D):
        arr = np.asarray(value, dtype=float)
        if arr.ndim == 1 and arr.size == D * D:
            arr = arr.reshape(D, D)
        if arr.ndim == 0 and D == 1:
            arr = arr.reshape(1, 1)
        if arr.shape != (D, D):
            self.fail(f"{key} must be a {D}x{D} matrix (nested or row-major flat), got shape {arr.shape}", key)
        return arr

    def _gaussian(self, key, mu, sigma, guidance=1.0):
        mu = np.atleast_1d(np.asarray(mu, dtype=float))
        try:
            return GaussianTarget(mu, self._matrix(key, sigma, mu.shape[0]), prior_guidance=guidance)
        except ConfigError:
            raise
        except ValueError as exc:
            self.fail(str(exc), key)

    def target(self):
        v = self.values
        kind = v["target.kind"]
        guidance = float(v["target.prior_guidance"])
        if kind == "gaussian":
            if v["target.mu"] is None or v["target.sigma"] is None:
                self.fail("a gaussian target needs target.mu and target.sigma", "target.kind")
            return self._gaussian("target.sigma", v["target.mu"], v["target.sigma"], guidance)
        if kind == "mixture":
            comps = v["target.components"]
            if not isinstance(comps, list) or not comps:
                self.fail("a mixture target needs target.components = [{weight, mu, sigma}, ...]",
                          "target.components")
            try:
                weights = [float(c["weight"]) for c in comps]
                parts = [self._gaussian("target.components", c["mu"], c["sigma"]) for c in comps]
                return MixtureTarget(weights, parts, prior_guidance=guidance)
            except ConfigError:
                raise
            except (KeyError, TypeError, ValueError) as exc:
                self.fail(f"invalid mixture component: {exc}", "target.components")
        self.fail(f"target.kind must be 'gaussian' or 'mixture', got {kind!r}", "target.kind")

    def generator(self, target=None):
        v = self.values
        kind = v["generator.kind"]
        D = v["generator.D"]
        if D is None and target is not None:
            D = target.dim
        if D is None:
            self.fail("generator.D is required when the target does not fix it", "generator.D")
        D = int(D)
        if target is not None and target.dim != D:
            self.fail(f"generator.D = {D} but the target has dimension {target.dim}", "generator.D")
        scale = float(v["distill.init_scale"])
        init = v["generator.init"]
        if kind == "linear":
            k = int(v["generator.k"] if v["generator.k"] is not None else D)
            if init == "default":
                return LinearGaussianGenerator.initial(D, k, scale)
            try:
                gen = LinearGaussianGenerator(init["b"], np.asarray(init["A"], dtype=float).reshape(D, k))
            except (KeyError, TypeError, ValueError) as exc:
                self.fail(f"generator.init for a linear generator must be {{'b': [...], 'A': [[...]]}}: {exc}",
                          "generator.init")
            if gen.dim != D:
                self.fail(f"generator.init has dimension {gen.dim}, expected {D}", "generator.init")
            return gen
        if kind == "discrete":
            if v["generator.K"] is None:
                self.fail("a discrete generator needs generator.K", "generator.K")
            K = int(v["generator.K"])
            if init == "default":
                return DiscreteViewGenerator.initial(K, D, RandomStreams(self.seed).init, scale)
            views = np.asarray(init, dtype=float).reshape(K, D) if init is not None else None
            return DiscreteViewGenerator(views)
        self.fail(f"generator.kind must be 'linear' or 'discrete', got {kind!r}", "generator.kind")

    def distill(self):
        v = self.values
        eta2 = v["distill.eta2"]
        if v["score_model.eta2"] is not None:
            if "distill.eta2" in self.lines and float(v["score_model.eta2"]) != float(eta2):
                self.fail("score_model.eta2 and distill.eta2 disagree", "score_model.eta2")
            eta2 = v["score_model.eta2"]
        try:
            cfg = DistillConfig(
                method=v["distill.method"], lam=float(v["distill.lambda"]), p_null=float(v["distill.p_null"]),
                eta1=float(v["distill.eta1"]), eta2=float(eta2), steps=int(v["distill.steps"]),
                warmup=int(v["distill.warmup"]), seed=int(v["distill.seed"]),
                score_source=v["distill.score_source"], log_every=int(v["distill.log_every"]),
                init_scale=float(v["distill.init_scale"]), optimizer=v["distill.optimizer"],
                fit_marginal_directly=bool(v["distill.fit_marginal_directly"]), guard=float(v["distill.guard"]))
            return cfg.validate()
        except ConfigError as exc:
            # a missing key has no line of its own; point at the method that needs it
            self.fail(str(exc), exc.key if exc.key in self.lines else "distill.method")
        except (TypeError, ValueError) as exc:
            self.fail(f"invalid distill block: {exc}", "distill.method")

    def score_model(self, generator):
        if self.values["distill.score_source"] != "learned":
            return None
        features = self.values["score_model.time_features"]
        if features not in TIME_FEATURES:
            self.fail(f"unknown score_model.time_features {features!r}; available: {sorted(TIME_FEATURES)}",
                      "score_model.time_features")
        model = AffineScoreModel.for_generator(generator, features)
        scale = float(self.values["score_model.init_null_scale"])
        if scale:
            model.params["Wx_null"][0] = scale * np.eye(generator.dim)
        return model

    def classifier(self, target):
        ref = self.values["metrics.reference"]
        reference = target
        if ref is not None:
            try:
                reference = MixtureTarget([float(c["weight"]) for c in ref],
                                          [self._gaussian("metrics.reference", c["mu"], c["sigma"]) for c in ref])
            except ConfigError:
                raise
            except (KeyError, TypeError, ValueError) as exc:
                self.fail(f"invalid metrics.reference: {exc}", "metrics.reference")
        try:
            return SyntheticClassifier(reference, float(self.values["metrics.temperature"]))
        except ValueError as exc:
            self.fail(str(exc), "metrics.temperature")

    def build(self):
        """Validate every block and return the runtime objects."""
        schedule = self.schedule()
        target = self.target()
        generator = self.generator(target)
        distill = self.distill()
        model = self.score_model(generator)
        clf = self.classifier(target)
        if generator.kind == "discrete" and distill.score_source == "learned" and generator.K < 1:
            self.fail("discrete generator needs K >= 1", "generator.K")
        return Experiment(self, schedule, target, generator, distill, model, clf)


@dataclass
class Experiment:
    config: ExperimentConfig
    schedule: DiffusionSchedule
    target: object
    generator: object
    distill: DistillConfig
    score_model: AffineScoreModel | None
    classifier: SyntheticClassifier


def from_values(values, lines=None, source="<config>"):
    unknown = sorted(set(values) - set(DEFAULTS))
    lines = lines or {}
    if unknown:
        key = unknown[0]
        where = f"{source}:{lines[key]}" if key in lines else source
        raise ConfigError(f"{where}: unknown key {key!r}", key)
    merged = dict(DEFAULTS)
    merged.update(values)
    return ExperimentConfig(merged, lines, source)


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror}") from None
    values, lines = parse_text(text, str(path))
    return from_values(values, lines, str(path))
