"""Finite-difference verification of every differentiable primitive.

Run: python3 demos/gradient_checks.py [n_points]
"""

import sys
import time

from latticenet.checks import gradient_suite

n_points = int(sys.argv[1]) if len(sys.argv) > 1 else 25

started = time.monotonic()
results = gradient_suite(n_points=n_points)
elapsed = time.monotonic() - started

print(f"gradient suite, {n_points} seeded points per primitive ({elapsed:.1f}s)\n")
for name, err in sorted(results.items()):
    status = "ok" if err < 1e-4 else "FAIL"
    print(f"  {status:4s} {name:<24} max relative error {err:.3e}")
print(f"\nworst: {max(results.values()):.3e} (tolerance 1e-4)")
