"""Elementwise stream-fusion operators and the cross-fusion block.

Two activation streams are combined elementwise after every conv-ReLU set.
The cross block feeds each stream's next layer with the fusion of both
current activations, operand order fixed per receiving stream, so for
non-commutative operators the two streams receive different signals.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DimensionError
from .tensor import Tensor, _check_same_shape, add, concat, scale, sub

FUSION_KINDS = ("average", "addition", "subtraction", "log_compression")


@dataclass
class FusionOp:
    """Selector for the elementwise fusion rule.

    ``clamp_epsilon`` only matters for log_compression, where it guards the
    logarithm's singularity. ``saturation_count`` tallies how many elements
    hit that clamp across all applications of this operator instance.
    """

    kind: str = "average"
    clamp_epsilon: float = 1e-6
    saturation_count: int = field(default=0, compare=False)

    def __post_init__(self):
        if self.kind not in FUSION_KINDS:
            raise ConfigurationError(
                f"unknown fusion kind {self.kind!r}; expected one of {FUSION_KINDS}"
            )
        if not 0.0 < self.clamp_epsilon < 1.0:
            raise ConfigurationError(
                f"clamp_epsilon must lie in (0, 1), got {self.clamp_epsilon}"
            )

    def reset_saturation(self):
        self.saturation_count = 0

    def to_dict(self):
        return {"kind": self.kind, "clamp_epsilon": self.clamp_epsilon}

    @classmethod
    def from_dict(cls, d):
        if isinstance(d, str):
            return cls(kind=d)
        return cls(kind=d["kind"], clamp_epsilon=d.get("clamp_epsilon", 1e-6))


def log_compress(s, s_bar, epsilon=1e-6, counter=None):
    """s - ln(max(1 - s_bar, epsilon)), elementwise.

    The clamp absorbs the singularity at s_bar >= 1; clamped elements
    contribute no gradient to s_bar. When ``counter`` (a FusionOp) is given,
    its saturation_count is bumped by the number of clamped elements.
    """
    _check_same_shape(s, s_bar)
    arg = 1.0 - s_bar.data
    clamped = arg < epsilon
    if counter is not None and clamped.any():
        counter.saturation_count += int(clamped.sum())
    safe = np.where(clamped, epsilon, arg)
    data = s.data - np.log(safe)

    def backward(g):
        return (g, np.where(clamped, 0.0, g / safe))

    return Tensor._from_op(data, (s, s_bar), backward)


def fuse(s, s_bar, op):
    """Apply the operator's elementwise rule to two same-shape streams."""
    _check_same_shape(s, s_bar)
    if op.kind == "average":
        return scale(add(s, s_bar), 0.5)
    if op.kind == "addition":
        return add(s, s_bar)
    if op.kind == "subtraction":
        return sub(s, s_bar)
    return log_compress(s, s_bar, op.clamp_epsilon, counter=op)


def l_block(a_act, b_act, op):
    """Cross-fusion of two post-ReLU activations.

    Returns (a_next, b_next) where each stream receives the fusion with its
    own activation first: a_next = a ⊕ b, b_next = b ⊕ a. Commutative
    operators therefore hand both streams the same signal.
    """
    if a_act.data.shape != b_act.data.shape:
        raise DimensionError(
            f"l_block streams differ in shape: {a_act.data.shape} vs {b_act.data.shape}"
        )
    return fuse(a_act, b_act, op), fuse(b_act, a_act, op)


def late_fuse(features):
    """Concatenate per-stream feature rows [N, D_i] into [N, sum(D_i)]."""
    features = list(features)
    if len(features) == 1:
        return features[0]
    return concat(features, axis=1)
