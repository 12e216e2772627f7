"""Unit conversions and shared numerical tolerances.

Atomic units everywhere internally: energies in hartree, lengths in bohr,
masses in electron masses. Output files carry eV and cm^-1 columns.
"""

HARTREE_EV = 27.211396          # eV per hartree
BOHR_M = 0.529177e-10           # metres per bohr
EV_CM1 = 8065.543937            # cm^-1 per eV
HARTREE_CM1 = HARTREE_EV * EV_CM1

DEG = 0.017453292519943295      # radians per degree

# Nuclear masses in electron masses (O-16 value matches the grid-sizing anchor).
MASS_O16 = 29156.95
MASS_N14 = 25526.04


def hartree_to_ev(e):
    return e * HARTREE_EV


def hartree_to_cm1(e):
    return e * HARTREE_CM1
