"""
Reference constants for lunar single-satellite Doppler positioning

This module contains the enumerations and reference tables used across
lunakit: the frozen polar orbit, the link budget, the oscillator noise
parameters and the ephemeris error statistics of an LLO satellite.
"""

import math
from enum import IntEnum


class EphemerisVariant(IntEnum):
    """Broadcast ephemeris error models"""
    PERFECT = 0
    METHOD1 = 1  # predicted orbit, colored along/cross/radial error
    METHOD2 = 2  # white position noise


class ErrorSource(IntEnum):
    """Independent contributors to the Doppler error budget"""
    EPHEMERIS = 1
    SATELLITE_CLOCK = 2
    RECEIVER_CLOCK = 3
    CARRIER_TRACKING = 4


class SolverStep(IntEnum):
    """Stages of the positioning pipeline"""
    ALGEBRAIC = 1
    CONSTRAINED = 2
    UNCONSTRAINED = 3


SIDEREAL_MONTH_DAYS = 27.321661

# Physical constants (km, s, Hz)
PHYSICAL_CONSTANTS = {
    'SPEED_OF_LIGHT': 299792.458,
    'MOON_RADIUS': 1737.4,
    'CARRIER_FREQUENCY': 2050.0e6,
    'MOON_ROTATION_RATE': 2.0 * math.pi / (SIDEREAL_MONTH_DAYS * 86400.0),  # rad/s
    'MOON_GM': 4902.800066,  # km^3/s^2
}

# Frozen elliptical polar LLO, apolune over the North Pole
FROZEN_ORBIT = {
    'SEMI_MAJOR_AXIS': 1860.52,  # km
    'ECCENTRICITY': 0.0359457,
    'INCLINATION': 90.0,  # deg
    'ARG_PERIAPSIS': 270.0,  # deg
    'RAAN': 0.0,  # deg
    'MEAN_ANOMALY': 180.0,  # deg
}

# Receiver link budget
LINK_BUDGET = {
    'EIRP': 0.0,  # dBW
    'RX_GAIN': 22.0,  # dB
    'SYSTEM_TEMPERATURE': 113.0,  # K
    'NOISE_FIGURE': 1.0,  # dB
    'PLL_BANDWIDTH': 10.0,  # Hz
    'INTEGRATION_TIME': 0.02,  # s
    'BOLTZMANN': -228.6,  # dBW/K/Hz
    'REFERENCE_TEMPERATURE': 290.0,  # K
}

# Oscillator stability, power-law coefficients of the receiver clock
CLOCK_MODEL = {
    'SATELLITE_FRACTIONAL_STABILITY': 2.0e-13,
    'RECEIVER_H0': 1.3e-22,
    'RECEIVER_H_1': 2.3e-26,
    'RECEIVER_H_2': 3.3e-31,
    'SAMPLING_TIME': 1.0,  # s
}

# Ephemeris error statistics in metres, (rms, std) per component
EPHEMERIS_OBSERVED = {
    'ALONG': (5.29, 1.11),
    'CROSS': (4.05, 1.03),
    'RADIAL': (0.27, 0.06),
    'TOTAL': (6.70, 1.47),
}

EPHEMERIS_PREDICTED = {
    'ALONG': (49.14, 32.39),
    'CROSS': (9.28, 9.27),
    'RADIAL': (1.87, 1.61),
    'TOTAL': (51.29, 51.17),
}

EPHEMERIS_FITTED = {
    'TOTAL': (0.67, 0.67),
}

# Nominal ephemeris velocity error (mm/s)
EPHEMERIS_VELOCITY = {
    EphemerisVariant.PERFECT: 0.0,
    EphemerisVariant.METHOD1: 60.0,
    EphemerisVariant.METHOD2: 1.8,
}

EPHEMERIS_METHOD2_POSITION_STD = 9.32  # m, total

# Colored noise shaping filter H(z) = (1 - z^-2) / (1 - 1.9999 z^-1 + 0.9999 z^-2)
PREDICTION_NOISE_FILTER = {
    'NUMERATOR': (1.0, 0.0, -1.0),
    'DENOMINATOR': (1.0, -1.9999, 0.9999),
    'WARMUP': 10000,
}

CHEBYSHEV_DEGREE = 10
EXTRAPOLATION_TOLERANCE = 5.0  # s beyond a fit window

# Monte Carlo receiver draw
RECEIVER_DISTRIBUTION = {
    'LAT_MIN': 70.0,  # deg
    'LAT_MAX': 90.0,
    'LON_MIN': 0.0,
    'LON_MAX': 360.0,
    'ALT_MIN': -10.0,  # km
    'ALT_MAX': 10.0,
}

DEFAULT_ELEVATION_MASK = 5.0  # deg
OBSERVATION_RATE = 1.0  # Hz
