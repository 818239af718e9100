"""
Average broadcast age versus density and frame length
=====================================================

The age grows with density and blows up near the stability limit.  For a
fixed density it has an interior minimum in the frame length: short frames
overload the queue, long frames make updates stale.
"""

import numpy as np

from baoi import NetworkParams, Unstable, average_baoi, baoi_from_mu, max_stable_density, solve_fixed_point

rho_star = max_stable_density()
print("density sweep, T_F = 50")
for rho in list(np.arange(0.05, 0.351, 0.05)) + [0.99 * rho_star]:
    sol = average_baoi(solve_fixed_point(NetworkParams(rho)), 50)
    print(f"  rho={rho:.4f}  baoi={sol.baoi_avg:10.3f}  velocity={sol.velocity:.5f} hops/slot")

# frame sweep at rho = 0.2: the first frames are too short for the service rate
mu = solve_fixed_point(NetworkParams(0.2)).mu
print("frame sweep, rho = 0.2")
best = None
for T_F in range(10, 201, 10):
    try:
        b = baoi_from_mu(mu, T_F).baoi_avg
    except Unstable:
        print(f"  T_F={T_F:3d}  unstable (mu*T_F = {mu * T_F:.3f})")
        continue
    best = min(best or (b, T_F), (b, T_F))
    print(f"  T_F={T_F:3d}  baoi={b:8.3f}")
print(f"best frame length on this grid: {best[1]}")
