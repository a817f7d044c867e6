"""Deviation between the spectral and orthogonal connections for a family of pulse strengths.

Prints, for each pulse amplitude, the minimal eigenvalue distance along the
path and the peak of |A_s - A_o|. Stronger pulses keep the levels further
apart and the deviation smaller.
"""

import numpy as np

from adiaphase import TimeGrid, deviation, track_eigensystem, two_level_pulse
from adiaphase.models import min_eigenvalue_distance


def main():
    grid = TimeGrid(2000)
    print(f"{'w0':>5} {'min gap':>12} {'peak |dev|':>12} {'at s':>7}")
    for w0 in (0.5, 1.0, 2.0, 4.0, 8.0):
        model = two_level_pulse(w0=w0)
        eig = track_eigensystem(model, grid, 1, derivative_method="perturbative")
        dev = np.abs(deviation(eig))
        k = int(np.argmax(dev))
        print(f"{w0:5g} {min_eigenvalue_distance(model, grid):12.5g} {dev[k]:12.5g} {grid.points[k]:7.4f}")


if __name__ == "__main__":
    main()
