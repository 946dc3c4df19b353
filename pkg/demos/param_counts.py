"""Parameter counts by backbone and topology.

The headline invariant: lattice cross-fusion is parameter-free, so the
lattice variant costs exactly as many weights as plain late fusion, and a
late-fusion trunk is exactly twice the single-stream trunk.

Run: python3 demos/param_counts.py [width_scale]
"""

import sys

from latticenet import FusionOp, build_backbone, count_params, count_trunk_params, to_multistream

width_scale = float(sys.argv[1]) if len(sys.argv) > 1 else 1.0
backbones = ["mini-alexnet", "mini-vgg16", "mini-vgg19", "mini-resnet18", "mini-resnet34"]

print(f"width_scale = {width_scale:g}\n")
print(f"{'backbone':<14} {'single':>12} {'late':>12} {'lattice':>12}  trunk x2?")
for name in backbones:
    single = build_backbone(name, 10, width_scale=width_scale)
    late = to_multistream(single, "multistream_late", None)
    lattice = to_multistream(single, "multistream_lattice", FusionOp("average"))
    doubled = count_trunk_params(late) == 2 * count_trunk_params(single)
    print(
        f"{name:<14} {count_params(single):>12,} {count_params(late):>12,} "
        f"{count_params(lattice):>12,}  {doubled}"
    )
