import os
import subprocess
import sys

import numpy as np
import pytest

from esdlab import GaussianTarget, LinearGaussianGenerator, kernels
from esdlab.distill import (_KERNEL_CODES, DistillConfig, Method, RandomStreams, _run_python, draw_run_noise, run)

compiled = pytest.mark.skipif(kernels.compiled_distill_linear_gaussian is None,
                              reason="compiled extension not built")


def _inputs(method, lam=0.5, seed=0, steps=2000, D=2, k=2, guidance=1.0, init_scale=1.0):
    from esdlab import DiffusionSchedule
    schedule = DiffusionSchedule()
    rng = np.random.default_rng(seed + 100)
    L = rng.normal(size=(D, D))
    target = GaussianTarget(rng.normal(size=D), L @ L.T + 0.2 * np.eye(D), prior_guidance=guidance)
    gen = LinearGaussianGenerator.initial(D, k, init_scale)
    cfg = DistillConfig(method=method, lam=lam, seed=seed, steps=steps, score_source="oracle")
    noise = draw_run_noise(gen, schedule, RandomStreams(seed), steps)
    lrs = np.array([cfg.lr_at(s) for s in range(steps)])
    args = (gen.params.copy(), D, k, target.mu, np.ascontiguousarray(target.sigma), guidance, _KERNEL_CODES[cfg.method],
            float(lam), np.ascontiguousarray(noise.cams, dtype=float), noise.alphas, noise.sigmas, noise.omegas,
            np.ascontiguousarray(noise.eps), lrs, cfg.log_every, cfg.guard)
    return schedule, target, gen, cfg, noise, lrs, args


def _close(a, b, tol=1e-9):
    return np.max(np.abs(a - b)) <= tol * max(1.0, np.max(np.abs(b)))


CASES = [(m, lam) for m in Method for lam in (0.0, 0.5, 1.0)] + [(Method.ESD_CFG, 0.25)]


@compiled
@pytest.mark.parametrize("method,lam", CASES)
def test_compiled_matches_python_twin(method, lam):
    *_, args = _inputs(method, lam)
    c_steps, c_snaps, c_norms, c_final, c_abort = kernels.compiled_distill_linear_gaussian(*args)
    p_steps, p_snaps, p_norms, p_final, p_abort = kernels.python_distill_linear_gaussian(*args)
    assert np.array_equal(c_steps, p_steps) and c_abort == p_abort
    assert _close(c_snaps, p_snaps) and _close(c_norms, p_norms) and _close(c_final, p_final)


@pytest.mark.parametrize("method,lam", CASES)
def test_kernel_matches_generic_loop(method, lam):
    schedule, target, gen, cfg, noise, lrs, args = _inputs(method, lam, D=3, k=2, guidance=1.5)
    steps, snaps, norms, final, abort = kernels.distill_linear_gaussian(*args)
    generic = _run_python(cfg, target, gen.copy(), schedule, None, noise, lrs)
    assert np.array_equal(steps, generic.steps) and abort == generic.abort_step
    assert _close(snaps, generic.thetas) and _close(norms, generic.grad_norms)


@compiled
def test_guard_agrees_across_backends():
    *_, args = _inputs(Method.ESD_EXACT, 1.0, init_scale=1.0)
    args = list(args)
    args[13] = np.full(len(args[13]), 50.0)  # absurd learning rate
    c = kernels.compiled_distill_linear_gaussian(*args)
    p = kernels.python_distill_linear_gaussian(*args)
    assert c[4] >= 0 and c[4] == p[4]
    assert np.array_equal(c[0], p[0])


def test_fast_path_is_used(schedule, lab_target):
    traj = run(DistillConfig(method="SDS", steps=20, warmup=0), lab_target, LinearGaussianGenerator.initial(2, 2),
               schedule)
    assert traj.backend == kernels.BACKEND


def test_pure_python_switch():
    code = "import esdlab.kernels as k; print(k.BACKEND)"
    env = dict(os.environ, ESDLAB_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
