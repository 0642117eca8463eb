# The price of welding the first element to the base frame: an upper bound
# on the endpoint error of the chain approximation, from the law of cosines.
# Prints the bound for a 1.92 m rod over element counts and deflection angles.

import numpy as np

from prbdyn import element_error_bound

L = 1.92  # rod length [m]

print(f"endpoint error bound [mm] for L = {L} m, first element = L_el / 2\n")
angles = np.deg2rad([5, 15, 30, 60, 90])
header = "n_el " + "".join(f"  zeta={round(np.rad2deg(z)):>3d}deg" for z in angles)
print(header)
for n_el in (1, 2, 4, 7, 10):
    first = L / n_el / 2.0  # half of one uniform element welded to the base
    row = [f"{1e3 * element_error_bound(L, first, z):11.1f}" for z in angles]
    print(f"{n_el:4d}" + "".join(row))

print("\nfiner discretizations shrink the welded element and with it the bound;")
print("learning the element lengths shrinks it further without extra elements.")
