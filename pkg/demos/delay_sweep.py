"""Minimum total delay meeting a reliability target, and how it is split."""
import numpy as np

from wetfbl import SystemParams, min_delay
from wetfbl.optimizer import delay_profile

params = SystemParams()
k = 216

# For each WIT blocklength n, find the fewest energy-transfer uses v that
# reach the target. Short WIT blocks need high power and thus long WET phases;
# long WIT blocks waste time. The total n + v has an interior minimum.
ns = np.unique(np.geomspace(100, 5000, 12).round().astype(int))
for eps0 in (1e-3, 1e-5):
    print(f"\ntarget {eps0:g}")
    print("     n      v  delay    nu")
    for r in delay_profile(params, k, eps0, ns):
        print(f"{r.n_star:6d} {r.v_star:6d} {r.delta_star:6d} {r.nu:5.3f}")
    best = min_delay(params, k, eps0)
    print(f"optimum: n*={best.n_star} v*={best.v_star} delay={best.delta_star} "
          f"({best.delta_seconds * 1e3:.2f} ms), exact-Q check {best.eps_certified:.3e}")

# Longer messages need proportionally more time.
for k in (96, 128, 216, 320):
    r = min_delay(params, k, 1e-5, n_step=2, certify=False)
    print(f"k={k:3d}: minimum delay {r.delta_star} channel uses (n*={r.n_star})")
