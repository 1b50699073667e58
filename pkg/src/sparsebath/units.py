"""Physical constants and unit conversions.

Internal conventions: time in femtoseconds, angular frequency in rad/fs,
energies and frequencies at the I/O boundary in wavenumbers (cm^-1),
temperature in kelvin.  hbar is absorbed by expressing energies as
angular frequencies.
"""

import numpy as np

#: speed of light in cm/fs
SPEED_OF_LIGHT = 2.99792458e-5
#: Boltzmann constant in cm^-1 / K
BOLTZMANN = 0.69503476
#: rad/fs per cm^-1
ANGULAR_PER_WAVENUMBER = 2.0 * np.pi * SPEED_OF_LIGHT


def wavenumber_to_angular(nu):
    """Convert cm^-1 to rad/fs."""
    return np.multiply(nu, ANGULAR_PER_WAVENUMBER)


def angular_to_wavenumber(omega):
    """Convert rad/fs to cm^-1."""
    return np.divide(omega, ANGULAR_PER_WAVENUMBER)


def energy2_to_angular2(value):
    """Convert a squared energy (cm^-2) to (rad/fs)^2."""
    return np.multiply(value, ANGULAR_PER_WAVENUMBER**2)


def thermal_beta(temperature):
    """Inverse thermal energy 1/(k_B T) in cm (i.e. 1/cm^-1).

    Raises
    ------
    ValueError
        If ``temperature`` is not strictly positive.
    """
    temperature = float(temperature)
    if not temperature > 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    if np.isinf(temperature):
        return 0.0
    return 1.0 / (BOLTZMANN * temperature)


def nyquist_wavenumber(dt):
    """Highest resolvable frequency (cm^-1) for sampling interval ``dt`` fs."""
    return angular_to_wavenumber(np.pi / dt)
