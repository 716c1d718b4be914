use nalgebra::Vector3;

use crate::fields::{LaserBeam, MagneticFieldMap};
use crate::rates::{rate_matrix, RateMatrix};
use crate::scheme::LevelScheme;

/// Everything needed to evaluate rates and forces for one particle species
/// in one light/field configuration.
#[derive(Clone, Debug)]
pub struct Setup {
    pub scheme: LevelScheme,
    pub beams: Vec<LaserBeam>,
    pub field: MagneticFieldMap,
    /// Particle mass in kg.
    pub mass: f64,
    /// Uniform external acceleration (gravity), if enabled.
    pub gravity: Option<Vector3<f64>>,
}

impl Setup {
    pub fn new(scheme: LevelScheme, beams: Vec<LaserBeam>, field: MagneticFieldMap, mass: f64) -> Self {
        Setup {
            scheme,
            beams,
            field,
            mass,
            gravity: None,
        }
    }

    pub fn rates(&self, r: &Vector3<f64>, v: &Vector3<f64>, t: f64) -> RateMatrix {
        rate_matrix(&self.scheme, &self.beams, &self.field, r, v, t)
    }

    /// Reference Γ (largest link decay rate).
    pub fn gamma(&self) -> f64 {
        self.scheme.gamma_max()
    }

    /// Reference wavenumber: that of the first beam, or of the first link.
    pub fn wavenumber(&self) -> f64 {
        self.beams
            .first()
            .map(|b| b.wavenumber)
            .unwrap_or_else(|| crate::units::wavenumber(self.scheme.links()[0].wavelength))
    }

    /// Natural force unit ħkΓ in newtons.
    pub fn force_unit(&self) -> f64 {
        crate::units::HBAR * self.wavenumber() * self.gamma()
    }

    /// Natural acceleration unit ħkΓ/m.
    pub fn accel_unit(&self) -> f64 {
        self.force_unit() / self.mass
    }

    /// Position at which the Zeeman shift μ_B b′ z / ħ equals `shift` Γ.
    pub fn zeeman_position(&self, shift: f64) -> f64 {
        shift * self.gamma() / crate::units::larmor(self.field.gradient)
    }

    /// Velocity whose Doppler shift k v equals `shift` Γ.
    pub fn doppler_velocity(&self, shift: f64) -> f64 {
        shift * self.gamma() / self.wavenumber()
    }

    pub fn has_schedules(&self) -> bool {
        self.beams.iter().any(|b| b.schedule.is_some())
    }
}
