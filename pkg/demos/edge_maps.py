"""Build the second input stream: Canny edge maps, stage by stage.

Writes the intermediate images as PGM files next to this script.
Run: python3 demos/edge_maps.py
"""

from pathlib import Path

import numpy as np

from latticenet.vision import (
    Image,
    canny,
    gaussian_blur,
    to_grayscale,
    write_pgm,
)

out_dir = Path(__file__).parent

# A synthetic scene: bright square on a dark field plus a soft gradient.
rng = np.random.default_rng(7)
px = np.tile(np.linspace(30, 90, 64, dtype=np.uint8)[None, :, None], (64, 1, 3))
px[16:48, 16:48] = (220, 200, 60)
px = np.clip(px.astype(int) + rng.normal(0, 6, px.shape), 0, 255).astype(np.uint8)
img = Image(px)

gray = to_grayscale(img)
blurred = gaussian_blur(gray, sigma=1.0)
edges = canny(img, low=50, high=100, sigma=1.0)

for name, stage in [("gray", gray), ("blurred", blurred), ("edges", edges)]:
    path = out_dir / f"demo_{name}.pgm"
    write_pgm(stage, path)
    print(f"wrote {path}")

total = edges.pixels.size
on = int((edges.pixels == 255).sum())
print(f"edge pixels: {on}/{total} ({100.0 * on / total:.1f}%)")
