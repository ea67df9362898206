"""Build a silicon bath, place 29Si nuclei and look at their couplings.

Run: python3 demos/01_lattice_and_couplings.py
"""

import numpy as np

from spindiff import (
    LatticeSpec,
    build_coupling_table,
    build_supercell,
    populate_isotopes,
    set_orientation,
    thermal_polarization,
)

spec = LatticeSpec(bath_radius=6.0)
sites = build_supercell(spec)
print(f"diamond sites within {spec.bath_radius} nm of the donor: {len(sites.index)}")

config = set_orientation(populate_isotopes(sites, spec.abundance, seed=1), (0, 0, 1))
print(f"occupied by 29Si at {spec.abundance:.2%}: {len(config.positions)}")

table = build_coupling_table(config)
A_kHz = np.abs(table.A) / (2 * np.pi * 1e3)
print(f"contact hyperfine |A|/2pi: median {np.median(A_kHz):.2f} kHz, max {A_kHz.max():.1f} kHz")
d_Hz = np.abs(table.d) / (2 * np.pi)
print(f"{table.n_pairs} dipolar pairs inside {table.pair_cutoff} nm, largest |d|/2pi {d_Hz.max():.0f} Hz")

print(f"thermal 29Si polarization at 8.58 T and 4 K: {thermal_polarization(8.58, 4.0):.3e}")
