"""
Normalised versus published inter-departure PGF
===============================================

The "consistent" inter-departure PGF satisfies G_Y(1) = 1 and G_Y'(1) = T_F
(departures keep pace with arrivals in a stable queue).  The "paper" mode
keeps the published expressions, which carry an extra P(X >= T) factor and
a T_F^4 term; both show up below.
"""

from baoi import queue_analysis as qa

for mu, T_F in [(0.6, 50), (0.3, 20), (0.1, 50)]:
    alpha = qa.solve_alpha(mu, T_F)
    nu = qa.nu_of_alpha(mu, alpha)
    for mode in qa.MODES:
        g1 = qa.pgf_Y(1.0, mu, nu, T_F, mode)
        slope = qa.left_derivative(lambda z: qa.pgf_Y(z, mu, nu, T_F, mode))
        ey = qa.mean_interdeparture(mu, nu, T_F, mode)
        b = qa.baoi_from_mu(mu, T_F, mode).baoi_avg
        print(f"mu={mu:<4} T_F={T_F:<3} {mode:>10}: G_Y(1)={g1:.10f}  G_Y'(1)={slope:10.4f}  "
              f"E[Y]={ey:12.4f}  baoi={b:10.4f}")
