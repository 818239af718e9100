"""
Simulated network against the analytic model
============================================

Runs the slot-level simulator at rho = 0.1 under both queue-admission
readings and prints the relative gaps to the analytic values.  Takes about a
minute with the default 10 x 5000 frames; pass a smaller frame count as the
first argument for a quick look.
"""

import sys

from baoi import NetworkParams, average_baoi, solve_fixed_point
from baoi.simulator import SimConfig, run

frames = int(sys.argv[1]) if len(sys.argv) > 1 else 5000
params = NetworkParams(0.1)
model = solve_fixed_point(params)
target = average_baoi(model, params.frame_length).baoi_avg
print(f"analytic: p_tx={model.p_tx:.5f} p_cl={model.p_cl_avg:.5f} mu={model.mu:.5f} baoi={target:.3f}")

for admission in ("frame_end", "immediate"):
    for contention in ("on_demand", "saturated"):
        r = run(SimConfig(params, frames=frames, reps=10, seed=1, admission=admission, contention=contention))
        print(f"{admission:>9} {contention:>9}: "
              f"p_tx {r.p_tx:.5f} ({r.p_tx / model.p_tx - 1:+6.1%})  "
              f"p_cl {r.p_cl:.5f} ({r.p_cl / model.p_cl_avg - 1:+6.1%})  "
              f"baoi {r.baoi:8.2f} +- {r.baoi_ci:6.2f} ({r.baoi / target - 1:+6.1%})")
