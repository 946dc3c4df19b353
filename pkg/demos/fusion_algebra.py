"""Walk through the four fusion operators and the cross-fusion block.

Run: python3 demos/fusion_algebra.py
"""

import numpy as np

from latticenet import FusionOp, Tensor, backward, fuse, l_block, late_fuse

rng = np.random.default_rng(0)
s = Tensor(rng.uniform(0.0, 0.9, (2, 4)))
s_bar = Tensor(rng.uniform(0.0, 0.9, (2, 4)))

print("stream s:\n", s.data)
print("stream s_bar:\n", s_bar.data)

for kind in ("average", "addition", "subtraction", "log_compression"):
    out = fuse(s, s_bar, FusionOp(kind))
    print(f"\nfuse[{kind}]:\n", out.data)

# The cross block: each stream's next layer sees the fusion with its own
# activation as the first operand. For subtraction the two outputs are
# exact negatives of each other.
a_next, b_next = l_block(s, s_bar, FusionOp("subtraction"))
print("\nl_block[subtraction] antisymmetry, max |a + b| =", np.abs(a_next.data + b_next.data).max())

# Log compression clamps once 1 - s_bar dips below epsilon and counts how
# often that happened -- the diagnostic for over-amplified activations.
op = FusionOp("log_compression", clamp_epsilon=1e-6)
hot = Tensor(np.array([[0.2, 0.9, 1.7, 42.0]]))
out = fuse(Tensor(np.zeros((1, 4))), hot, op)
print("\nlog_compression on s_bar =", hot.data[0], "->", np.round(out.data[0], 3))
print("saturation_count =", op.saturation_count, "(elements where 1 - s_bar < epsilon)")

# Clamped elements contribute no gradient to s_bar.
hot = Tensor(np.array([[0.2, 0.9, 1.7, 42.0]]), requires_grad=True)
backward(fuse(Tensor(np.zeros((1, 4))), hot, op).sum())
print("d/ds_bar =", np.round(hot.grad[0], 3), "(zeros where clamped)")

# Late fusion is plain feature concatenation before the dense head.
print("\nlate_fuse shapes:", late_fuse([s, s_bar]).shape, "from 2 x", s.shape)
