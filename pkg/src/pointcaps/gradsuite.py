"""The finite-difference gradient suite.

Covers every differentiable operation plus the composed networks, all
in float64 on miniature instances positioned away from ReLU and max
kinks. The CLI gradcheck verb and the acceptance tests both run this.
"""
from __future__ import annotations

import numpy as np

from .autodiff import Tensor, gradcheck, gradcheck_params, ops
from .autodiff.batchnorm import BatchNormState, batchnorm
from .metrics import batch_chamfer_loss
from .nn.decoder import DecoderConfig, sample_grid
from .nn.encoder import EncoderConfig
from .nn.model import PointCapsuleAE
from .nn.routing import CONV_ABLATION, DYNAMIC_ROUTING, DynamicRouting, RoutingConfig


def _spaced_uniform(rng, shape, lo=-2.0, hi=2.0):
    """Random values with a guaranteed pairwise gap and no zeros.

    Evenly spaced levels in (lo, hi), randomly permuted: safe for max
    ties and ReLU kinks under a 1e-6 finite-difference step.
    """
    size = int(np.prod(shape))
    levels = (np.arange(size) + 0.5) / size * (hi - lo) + lo
    levels = levels[np.abs(levels) > 1e-3]
    while levels.size < size:
        levels = np.concatenate([levels, levels[-1:] + 0.01])
    return rng.permutation(levels[:size]).reshape(shape)


def _tie_free_clouds(rng, n, m, d=3):
    """Two clouds whose nearest-neighbor matches are unambiguous."""
    for _ in range(100):
        x = rng.uniform(-1.0, 1.0, size=(n, d))
        y = rng.uniform(-1.0, 1.0, size=(m, d))
        diff = x[:, None, :] - y[None, :, :]
        dist = np.sqrt(np.sum(diff * diff, axis=-1))
        part = np.sort(dist, axis=1)
        part_t = np.sort(dist, axis=0)
        if dist.min() > 1e-3 and np.all(part[:, 1] - part[:, 0] > 1e-3) \
                and np.all(part_t[1, :] - part_t[0, :] > 1e-3):
            return x, y
    raise RuntimeError("could not sample tie-free clouds")


def _op_checks(seed):
    rng = np.random.Generator(np.random.PCG64(seed))
    checks = []

    a = _spaced_uniform(rng, (3, 4))
    b = _spaced_uniform(rng, (3, 4))
    checks.append(gradcheck("op.add", lambda x, y: ops.sum_over_axis(ops.add(x, y)), [a, b]))
    checks.append(gradcheck("op.sub", lambda x, y: ops.sum_over_axis(ops.sub(x, y)), [a, b]))
    checks.append(gradcheck("op.mul", lambda x, y: ops.sum_over_axis(ops.mul(x, y)), [a, b]))
    checks.append(gradcheck(
        "op.add.broadcast",
        lambda x, y: ops.sum_over_axis(ops.add(x, y)),
        [a, _spaced_uniform(rng, (4,))],
    ))
    checks.append(gradcheck("op.scale", lambda x: ops.sum_over_axis(ops.scale(x, -1.7)), [a]))
    checks.append(gradcheck(
        "op.matmul",
        lambda x, y: ops.sum_over_axis(ops.matmul(x, y)),
        [_spaced_uniform(rng, (3, 5)), _spaced_uniform(rng, (5, 4))],
    ))
    checks.append(gradcheck(
        "op.matmul.batched",
        lambda x, y: ops.sum_over_axis(ops.matmul(x, y)),
        [_spaced_uniform(rng, (2, 3, 5)), _spaced_uniform(rng, (5, 4))],
    ))
    checks.append(gradcheck("op.relu", lambda x: ops.sum_over_axis(ops.relu(x)), [a]))
    checks.append(gradcheck("op.tanh", lambda x: ops.sum_over_axis(ops.tanh(x)), [a]))
    checks.append(gradcheck("op.exp", lambda x: ops.sum_over_axis(ops.exp(x)), [a * 0.5]))
    checks.append(gradcheck(
        "op.log",
        lambda x: ops.sum_over_axis(ops.log(x)),
        [_spaced_uniform(rng, (3, 4), lo=0.5, hi=2.5)],
    ))
    checks.append(gradcheck("op.square", lambda x: ops.sum_over_axis(ops.square(x)), [a]))
    checks.append(gradcheck(
        "op.sqrt",
        lambda x: ops.sum_over_axis(ops.sqrt(x)),
        [_spaced_uniform(rng, (3, 4), lo=0.5, hi=2.5)],
    ))
    sm_in = _spaced_uniform(rng, (4, 5))
    checks.append(gradcheck(
        "op.softmax",
        lambda x: ops.sum_over_axis(ops.mul(ops.softmax(x, axis=1), Tensor(sm_in.copy()))),
        [sm_in],
    ))
    checks.append(gradcheck(
        "op.max",
        lambda x: ops.sum_over_axis(ops.max_over_axis(x, axis=1)),
        [_spaced_uniform(rng, (4, 6))],
    ))
    weight = Tensor(_spaced_uniform(rng, (3, 4)))
    checks.append(gradcheck(
        "op.sum.weighted",
        lambda x: ops.sum_over_axis(ops.mul(ops.sum_over_axis(x, axis=0, keepdims=True), weight)),
        [_spaced_uniform(rng, (5, 4))],
    ))
    checks.append(gradcheck(
        "op.mean",
        lambda x: ops.sum_over_axis(ops.square(ops.mean_over_axis(x, axis=1))),
        [a],
    ))
    checks.append(gradcheck(
        "op.concat",
        lambda x, y: ops.sum_over_axis(ops.square(ops.concat([x, y], axis=1))),
        [a, _spaced_uniform(rng, (3, 2))],
    ))
    checks.append(gradcheck(
        "op.reshape",
        lambda x: ops.sum_over_axis(ops.square(ops.reshape(x, (4, 3)))),
        [a],
    ))
    checks.append(gradcheck(
        "op.transpose",
        lambda x: ops.sum_over_axis(ops.square(ops.transpose(x, (1, 0)))),
        [a],
    ))
    checks.append(gradcheck(
        "op.take_index",
        lambda x: ops.sum_over_axis(ops.square(ops.take_index(x, 1, axis=0))),
        [a],
    ))
    checks.append(gradcheck(
        "op.repeat_rows",
        lambda x: ops.sum_over_axis(ops.square(ops.mul(ops.repeat_rows(x, 3, axis=0), rep_w))),
        [a],
    ))
    checks.append(gradcheck(
        "op.squash",
        lambda x: ops.sum_over_axis(ops.mul(ops.squash(x, axis=-1), squash_w)),
        [_spaced_uniform(rng, (4, 5))],
    ))
    return checks


# weights used to make reductions non-trivial; module level so the
# closures above can reference them after definition
_rng_const = np.random.Generator(np.random.PCG64(12345))
rep_w = Tensor(_rng_const.uniform(0.5, 1.5, size=(9, 4)))
squash_w = Tensor(_rng_const.uniform(0.5, 1.5, size=(4, 5)))


def _bn_checks(seed):
    rng = np.random.Generator(np.random.PCG64(seed + 1))
    checks = []
    x = _spaced_uniform(rng, (6, 3))
    w = Tensor(rng.uniform(0.5, 1.5, size=(6, 3)))

    def run(mode):
        def fn(xv, gv, bv):
            state = BatchNormState(
                gamma=gv,
                beta=bv,
                running_mean=rng_means.copy(),
                running_var=rng_vars.copy(),
                mode=mode,
            )
            return ops.sum_over_axis(ops.mul(batchnorm(xv, state), w))

        return fn

    rng_means = rng.uniform(-0.5, 0.5, size=3)
    rng_vars = rng.uniform(0.5, 1.5, size=3)
    gamma = rng.uniform(0.5, 1.5, size=3)
    beta = rng.uniform(-0.5, 0.5, size=3)
    checks.append(gradcheck("op.batchnorm.train", run("train"), [x, gamma, beta]))
    checks.append(gradcheck("op.batchnorm.eval", run("eval"), [x, gamma, beta]))
    return checks


def _chamfer_check(seed):
    rng = np.random.Generator(np.random.PCG64(seed + 2))
    x, y = _tie_free_clouds(rng, 7, 9)
    return [gradcheck("op.chamfer", lambda a, b: ops.chamfer_distance(a, b), [x, y])]


def _routing_check(seed):
    from .autodiff import ParameterStore

    store = ParameterStore(dtype=np.float64)
    rng = np.random.Generator(np.random.PCG64(seed + 3))
    cfg = RoutingConfig(latent_count=4, latent_dim=6, iterations=3)
    router = DynamicRouting(cfg, in_dim=3, store=store, rng=rng)
    ppc = _spaced_uniform(rng, (2, 5, 3))
    w = Tensor(rng.uniform(0.5, 1.5, size=(2, 4, 6)))

    def loss_from(t):
        return ops.sum_over_axis(ops.mul(router(t), w))

    input_check = gradcheck("net.routing.input", loss_from, [ppc])
    param_check = gradcheck_params(
        "net.routing.params", lambda: loss_from(Tensor(ppc)), store
    )
    return [input_check, param_check]


def _miniature(seed, mode):
    enc = EncoderConfig(n_points=16, mlp_widths=(3, 6, 8), branch_count=4, branch_width=12)
    rod = RoutingConfig(latent_count=4, latent_dim=6, iterations=3, mode=mode)
    dec = DecoderConfig(replicas_per_capsule=4, mlp_widths=(8, 10, 6, 3))
    return PointCapsuleAE(enc, rod, dec, dtype=np.float64, seed=seed)


def _full_model_check(seed, mode, name):
    model = _miniature(seed, mode)
    model.set_mode("train")
    rng = np.random.Generator(np.random.PCG64(seed + 4))
    points = _spaced_uniform(rng, (2, 16, 3), lo=-1.0, hi=1.0)
    grid = sample_grid(model.decoder_cfg, model.routing_cfg.latent_count, seed=7,
                       dtype=np.float64)

    def loss_fn():
        latent = model.encode(points)
        recon = model.decode(latent, grid)
        return batch_chamfer_loss(recon, points)

    return [gradcheck_params(name, loss_fn, model.store)]


def run_gradient_suite(seed=0):
    """Every gradient check; returns the list of GradCheckResults."""
    checks = []
    checks.extend(_op_checks(seed))
    checks.extend(_bn_checks(seed))
    checks.extend(_chamfer_check(seed))
    checks.extend(_routing_check(seed))
    checks.extend(_full_model_check(seed, DYNAMIC_ROUTING, "net.full.dynamic-routing"))
    checks.extend(_full_model_check(seed, CONV_ABLATION, "net.full.conv-ablation"))
    return checks
