//! Physical constants (SI units).

/// Speed of light in vacuum (m/s).
pub const C0: f64 = 299_792_458.0;

/// Vacuum permittivity (F/m).
pub const EPS0: f64 = 8.854_187_812_8e-12;

/// Vacuum permeability (H/m).
pub const MU0: f64 = 1.256_637_062_12e-6;

/// Vacuum wave impedance (ohm).
pub const ETA0: f64 = 376.730_313_668;

/// Conductivity of bulk copper (S/m), used when exporting thresholded designs.
pub const SIGMA_COPPER: f64 = 5.8e7;
