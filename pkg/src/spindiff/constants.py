"""Physical constants (SI). Couplings elsewhere are angular frequencies, rad/s."""

from dataclasses import dataclass
import math

from scipy import constants as _sc


@dataclass(frozen=True)
class PhysicalConstants:
    # 29Si gyromagnetic ratio, rad s^-1 T^-1 (negative moment)
    gamma_n: float = -2 * math.pi * 8.465e6
    # free-electron-like donor gyromagnetic ratio, rad s^-1 T^-1
    gamma_e: float = _sc.physical_constants["electron gyromag. ratio"][0]
    mu0_over_4pi: float = _sc.mu_0 / (4 * math.pi)
    hbar: float = _sc.hbar
    kB: float = _sc.k
    # 31P hyperfine splitting of the two ESR lines, Hz; reference only
    donor_splitting: float = 117.5e6
    # lattice constant of silicon, nm
    a0_si: float = 0.5431
    # spin-1/2 (29Si) natural abundance
    abundance_si29: float = 0.0467


CONSTANTS = PhysicalConstants()
