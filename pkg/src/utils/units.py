"""
Unit conversions between lab units, quanta and SI
"""

import math

import numpy as np

from src.core.constants import HBAR, K_B, KHZ, MICROSECOND, TWO_PI


def khz_to_angular(value_khz: float) -> float:
    """Cyclic frequency in kHz -> angular frequency in rad/s"""
    return TWO_PI * KHZ * value_khz


def khz_to_rate(value_khz: float) -> float:
    """Rate quoted in kHz -> 1/s (no 2pi)"""
    return KHZ * value_khz


def us_to_seconds(value_us: float) -> float:
    return MICROSECOND * value_us


def beta_quanta(temperature: float, quantum: float) -> float:
    """Inverse temperature in units of 1/(hbar*quantum)"""
    if temperature <= 0:
        raise ValueError(f"Temperature must be positive, got {temperature}")
    return HBAR * quantum / (K_B * temperature)


def quanta_to_joules(work_quanta, quantum: float):
    return np.asarray(work_quanta, dtype=float) * HBAR * quantum


def nbar_to_temperature(nbar: float, quantum: float) -> float:
    """Temperature whose Bose occupation at hbar*quantum equals nbar"""
    if nbar <= 0:
        raise ValueError(f"nbar must be positive for a finite temperature, got {nbar}")
    return HBAR * quantum / (K_B * math.log1p(1.0 / nbar))


def temperature_to_nbar(temperature: float, quantum: float) -> float:
    return 1.0 / math.expm1(beta_quanta(temperature, quantum))
