//! Physical constants (CODATA 2018) and unit conversions.

use std::f64::consts::PI;

pub const HBAR: f64 = 1.054_571_817e-34;
pub const PLANCK: f64 = 6.626_070_15e-34;
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
pub const BOHR_MAGNETON: f64 = 9.274_010_078_3e-24;
pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;
pub const STANDARD_GRAVITY: f64 = 9.806_65;

/// 1 G/cm in T/m.
pub const GAUSS_PER_CM: f64 = 1e-2;
/// 1 mW/cm² in W/m².
pub const MW_PER_CM2: f64 = 10.0;

/// B(v''=0) ← X(v''=0) band of C₂⁻.
pub const C2MINUS_WAVELENGTH: f64 = 541e-9;
pub const C2MINUS_LIFETIME: f64 = 75e-9;
pub const C2MINUS_MASS_AMU: f64 = 24.022;

pub fn wavenumber(wavelength: f64) -> f64 {
    2.0 * PI / wavelength
}

/// Two-level saturation intensity `π h c Γ / (3 λ³)` in W/m².
pub fn saturation_intensity(gamma: f64, wavelength: f64) -> f64 {
    PI * PLANCK * SPEED_OF_LIGHT * gamma / (3.0 * wavelength.powi(3))
}

/// Zeeman angular frequency `μ_B |B| / ħ` for a field magnitude in tesla.
pub fn larmor(b: f64) -> f64 {
    BOHR_MAGNETON * b / HBAR
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn c2minus_saturation_intensity() {
        let gamma = 1.0 / C2MINUS_LIFETIME;
        let is = saturation_intensity(gamma, C2MINUS_WAVELENGTH) / MW_PER_CM2;
        assert!((is - 1.7516).abs() < 1e-3, "I_s = {is} mW/cm²");
        let s = 1.8 / is;
        assert!((s - 1.0276).abs() < 1e-3, "s = {s}");
    }

    #[test]
    fn c2minus_recoil_velocity() {
        let m = C2MINUS_MASS_AMU * ATOMIC_MASS_UNIT;
        assert!((m - 3.989e-26).abs() < 1e-29);
        let vr = HBAR * wavenumber(C2MINUS_WAVELENGTH) / m;
        assert!((vr - 3.07e-2).abs() < 1e-4, "v_rec = {vr}");
    }
}
