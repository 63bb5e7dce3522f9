"""Sweep for the plateau half-width N used in test_ide.py::test_plateau_spreads.

Starts the IDE from v1 + delta on [-N, N]^2 (power model, theta = 2 theta1,
Bernstein degree 60) and checks u >= v2 - delta on [-3N, 3N]^2 at T = 5N/rho.
The torus side 9N + 3 keeps periodic images out of the checked box.

Recorded outcome (h = 0.1, rho(2 theta1) = 0.3183 from front_speed):
    N = 1  min 3.9e-17  fail  (also fails with side 12N + 4)
    N = 2  min 1.5e-05  fail
    N = 3  min 0.9973   pass
The test uses N = 3. Small plateaus first have to nucleate a core near v2
(about 5 time units) and their corners lag the flat sides, so the bound
needs N well above the interaction radius.
"""
import sys

import numpy as np

from savanna.ide import POWER_THETA1, ScalarField, front_speed, ide_solve
from savanna.meanfield import fixed_points
from savanna.rates import PowerLawSpec, power_rates


def trial(N, h=0.1, delta=0.05):
    G, H = power_rates(PowerLawSpec(3, 0.5), 60)
    th = 2 * POWER_THETA1
    v1, v2 = fixed_points(G, H, th, 1.0).bistable_pair()
    rho = front_speed(G, H, th, 1.0, length=60, t_end=6).speed
    M = 9 * N + 3
    c = M / 2
    u0 = ScalarField.from_function(M, h, lambda X, Y: np.where((abs(X - c) <= N) & (abs(Y - c) <= N),
                                                                v1 + delta, 0.0))
    u = ide_solve(u0, th, 1.0, G, H, 5 * N / rho)[-1]
    inside = np.abs(u0.centers() - c) <= 3 * N
    return float(u.values[np.ix_(inside, inside)].min()), v2 - delta


if __name__ == "__main__":
    for N in map(float, sys.argv[1:] or ["1", "2", "3"]):
        lo, need = trial(N)
        print(f"N={N:g} min={lo:.4g} need>={need:.4g} {'pass' if lo >= need else 'fail'}", flush=True)
