"""
Attempt and collision probabilities versus node density
=======================================================

Solve the coupled transmission/collision equations over a density grid and
show the service rate mu against the stability threshold 1/T_F.
"""

import numpy as np

from baoi import NetworkParams, max_stable_density, solve_fixed_point

# defaults: w_min = 16, transmit range 4, frame length 50
print(f"{'rho':>6} {'lambda':>8} {'p_tx':>9} {'p_cl':>9} {'mu':>9} {'mu*T_F':>7}")
for rho in np.arange(0.02, 0.42, 0.04):
    p = NetworkParams(rho)
    m = solve_fixed_point(p)
    print(f"{rho:6.2f} {p.lambda_nb:8.3f} {m.p_tx:9.5f} {m.p_cl_avg:9.5f} {m.mu:9.5f} {m.mu * p.frame_length:7.3f}")

# the update queue is stable while mu * T_F > 1; beyond this density it is not
print(f"largest stable density: {max_stable_density():.4f}")
