"""Internal unit convention and reporting converters.

Everything inside the library uses c = eps0 = hbar = 1 (so mu0 = 1 too).
A :class:`UnitSystem` fixes a reference length and converts internal numbers
to SI for reporting only.
"""
from dataclasses import dataclass

C_SI = 299_792_458.0
EPS0_SI = 8.8541878128e-12
HBAR_SI = 1.054571817e-34

# internal constants
c = 1.0
eps0 = 1.0
hbar = 1.0
mu0 = 1.0 / (eps0 * c**2)


@dataclass(frozen=True)
class UnitSystem:
    """Reference length in metres; all other scales follow from c, eps0, hbar."""

    length_m: float = 1e-6

    def __post_init__(self):
        if not self.length_m > 0:
            raise ValueError("length_m must be positive")

    @property
    def time_s(self):
        return self.length_m / C_SI

    @property
    def frequency_hz(self):
        # angular frequency unit, rad/s
        return C_SI / self.length_m

    @property
    def energy_j(self):
        return HBAR_SI * self.frequency_hz

    def to_si_length(self, x):
        return x * self.length_m

    def from_si_length(self, x_m):
        return x_m / self.length_m

    def to_si_time(self, t):
        return t * self.time_s

    def from_si_time(self, t_s):
        return t_s / self.time_s

    def to_si_frequency(self, w):
        return w * self.frequency_hz

    def from_si_frequency(self, w_rad_s):
        return w_rad_s / self.frequency_hz

    def to_si_energy(self, e):
        return e * self.energy_j

    def from_si_energy(self, e_j):
        return e_j / self.energy_j
