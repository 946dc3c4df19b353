"""Finite-difference gradient suite over every differentiable primitive.

Each primitive is probed at seeded random non-kink points with central
differences; the suite reports the max relative error per primitive. Used
by the `latticenet gradcheck` subcommand and the acceptance tests.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .fusion import FusionOp, fuse, l_block, late_fuse, log_compress


def _check_many(make_case, n_points, epsilon, seed):
    """Max grad_check error over n seeded random points.

    make_case(rng) returns (f, point) with f scalar-valued at Tensor point.
    """
    worst = 0.0
    for i in range(n_points):
        rng = np.random.default_rng([seed, i])
        f, point = make_case(rng)
        worst = max(worst, T.grad_check(f, point, epsilon))
    return worst


def gradient_suite(n_points=100, epsilon=1e-5, seed=20240824):
    """Run every primitive's gradient check; returns {name: max_rel_error}."""
    results = {}

    def conv_case(rng):
        k = T.Tensor(rng.standard_normal((3, 2, 3, 3)))
        b = T.Tensor(rng.standard_normal(3))
        return lambda x: T.conv2d(x, k, b, 1, 1).sum(), T.Tensor(
            rng.standard_normal((1, 2, 5, 5))
        )

    def conv_kernel_case(rng):
        x = T.Tensor(rng.standard_normal((1, 2, 5, 5)))
        b = T.Tensor(rng.standard_normal(3))
        return lambda k: T.conv2d(x, k, b, 2, 1).sum(), T.Tensor(
            rng.standard_normal((3, 2, 3, 3))
        )

    def relu_case(rng):
        # keep points off the kink at 0
        p = rng.standard_normal(12)
        p = np.where(np.abs(p) < 1e-2, p + 0.1, p)
        w = rng.standard_normal(12)
        return lambda x: T.mul(T.relu(x), w).sum(), T.Tensor(p)

    def maxpool_case(rng):
        return lambda x: T.maxpool2d(x, 2, 2).sum(), T.Tensor(
            rng.standard_normal((1, 1, 4, 4))
        )

    def avgpool_case(rng):
        return lambda x: T.avgpool2d(x, 2, 2).sum(), T.Tensor(
            rng.standard_normal((1, 1, 4, 4))
        )

    def dense_case(rng):
        w = T.Tensor(rng.standard_normal((3, 4)))
        b = T.Tensor(rng.standard_normal(4))
        return lambda x: T.dense(x, w, b).sum(), T.Tensor(rng.standard_normal((2, 3)))

    def dense_weight_case(rng):
        x = T.Tensor(rng.standard_normal((2, 3)))
        b = T.Tensor(rng.standard_normal(4))
        return lambda w: T.dense(x, w, b).sum(), T.Tensor(rng.standard_normal((3, 4)))

    def ce_case(rng):
        y = rng.integers(0, 5, size=3)
        return lambda x: T.softmax_cross_entropy(x, y), T.Tensor(
            rng.standard_normal((3, 5))
        )

    def fusion_case(kind):
        op = FusionOp(kind)

        def make(rng):
            if kind == "log_compression":
                # stay well clear of the clamp: 1 - s_bar > 2 * epsilon
                other = T.Tensor(rng.uniform(-0.5, 0.8, size=(2, 3)))
                point = T.Tensor(rng.uniform(-0.5, 0.8, size=(2, 3)))
            else:
                other = T.Tensor(rng.standard_normal((2, 3)))
                point = T.Tensor(rng.standard_normal((2, 3)))
            w = rng.standard_normal((2, 3))
            side = int(rng.integers(0, 2))
            if side == 0:
                return lambda x: T.mul(fuse(x, other, op), w).sum(), point
            return lambda x: T.mul(fuse(other, x, op), w).sum(), point

        return make

    def residual_case(rng):
        ka = T.Tensor(rng.standard_normal((2, 2, 3, 3)) * 0.5)
        kb = T.Tensor(rng.standard_normal((2, 2, 3, 3)) * 0.5)
        ba = T.Tensor(rng.standard_normal(2) * 0.1)
        bb = T.Tensor(rng.standard_normal(2) * 0.1)
        w = rng.standard_normal((1, 2, 4, 4))

        def f(x):
            branch = T.conv2d(T.relu(T.conv2d(x, ka, ba, 1, 1)), kb, bb, 1, 1)
            return T.mul(T.relu(T.add(branch, x)), w).sum()

        return f, T.Tensor(rng.standard_normal((1, 2, 4, 4)))

    def l_block_case(rng):
        op = FusionOp(("average", "addition", "subtraction")[int(rng.integers(0, 3))])
        other = T.Tensor(rng.standard_normal((2, 3)))
        wa = rng.standard_normal((2, 3))
        wb = rng.standard_normal((2, 3))

        def f(x):
            a_next, b_next = l_block(x, other, op)
            return T.add(T.mul(a_next, wa), T.mul(b_next, wb)).sum()

        return f, T.Tensor(rng.standard_normal((2, 3)))

    def late_fuse_case(rng):
        other = T.Tensor(rng.standard_normal((2, 4)))
        w = rng.standard_normal((2, 7))
        return (
            lambda x: T.mul(late_fuse([x, other]), w).sum(),
            T.Tensor(rng.standard_normal((2, 3))),
        )

    cases = {
        "conv2d_input": conv_case,
        "conv2d_kernel": conv_kernel_case,
        "relu": relu_case,
        "maxpool2d": maxpool_case,
        "avgpool2d": avgpool_case,
        "dense_input": dense_case,
        "dense_weight": dense_weight_case,
        "softmax_cross_entropy": ce_case,
        "fusion_average": fusion_case("average"),
        "fusion_addition": fusion_case("addition"),
        "fusion_subtraction": fusion_case("subtraction"),
        "fusion_log_compression": fusion_case("log_compression"),
        "residual_block": residual_case,
        "l_block": l_block_case,
        "late_fuse": late_fuse_case,
    }
    for name, make in cases.items():
        results[name] = _check_many(make, n_points, epsilon, seed)
    return results
