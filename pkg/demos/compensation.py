"""The effective eigenvalue restores agreement between the two adiabatic phase conventions.

Dressing the eigenvector with the orthogonal connection and the bare
eigenvalue misses the propagated state by an O(1) amount. Using the
effective eigenvalue instead recovers the O(1/T) adiabatic error of the
spectral convention.
"""

import numpy as np

from adiaphase import TimeGrid, propagate, track_eigensystem, two_level_pulse
from adiaphase import phases as ph


def main():
    model, grid = two_level_pulse(w0=1.0), TimeGrid(2000)
    eig = track_eigensystem(model, grid, 1, derivative_method="perturbative")
    print(f"{'T':>6} {'spectral':>10} {'orth+lam_a':>11} {'orth+lam_eff':>13} {'compensation':>13}")
    for T in (200.0, 400.0, 800.0):
        psi0 = ph.superadiabatic_system(eig, T).phi1[0]
        traj = propagate(model, T, psi0, grid)
        errs = [np.max(ph.adiabatic_error(traj, eig, w)) for w in ("spectral", "orthogonal", "orthogonal_eff")]
        res, bound = ph.compensation_residual(eig, T)
        print(f"{T:6g} {errs[0]:10.3e} {errs[1]:11.3e} {errs[2]:13.3e} {np.max(res / bound):13.2e}")


if __name__ == "__main__":
    main()
