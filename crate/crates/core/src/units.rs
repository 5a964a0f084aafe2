//! Physical constants and the Hz <-> rad/s boundary conversions.
//!
//! Everything inside the crate is angular (rad/s). Only configuration and
//! exported files use ordinary frequency.

use std::f64::consts::PI;

/// Reduced Planck constant (J s).
pub const HBAR: f64 = 1.054_571_817e-34;
/// Boltzmann constant (J/K).
pub const K_B: f64 = 1.380_649e-23;
/// Speed of light (m/s).
pub const C_LIGHT: f64 = 299_792_458.0;

pub const TWO_PI: f64 = 2.0 * PI;

#[inline]
pub fn hz_to_rad(f: f64) -> f64 {
    TWO_PI * f
}

#[inline]
pub fn rad_to_hz(w: f64) -> f64 {
    w / TWO_PI
}

/// Equivalent temperature `T = hbar * omega * n / k_B`.
///
/// This linear convention (not the Bose inversion) is used for every
/// occupancy-to-temperature conversion in the crate.
#[inline]
pub fn occupancy_to_temperature(n: f64, omega: f64) -> f64 {
    HBAR * omega * n / K_B
}

#[inline]
pub fn temperature_to_occupancy(t: f64, omega: f64) -> f64 {
    K_B * t / (HBAR * omega)
}

/// Occupancy ratio expressed in decibels, `10 log10(reference / value)`.
pub fn reduction_db(reference: f64, value: f64) -> f64 {
    10.0 * (reference / value).log10()
}
