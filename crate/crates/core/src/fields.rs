//! Laser beams, helicity decomposition and magnetic field maps.

use nalgebra::Vector3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type CVector3 = Vector3<Complex64>;

/// Named polarizations. Circular ones are defined about a reference axis
/// (lab `+z` for beams along `±z`), not about the propagation direction, so
/// `SigmaPlus` drives `ΔM = +1` for a quantization axis along that reference.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PolarizationPreset {
    #[serde(rename = "sigma+")]
    SigmaPlus,
    #[serde(rename = "sigma-")]
    SigmaMinus,
    /// Linear along the reference axis.
    #[serde(rename = "pi")]
    PiLinear,
}

impl PolarizationPreset {
    pub fn flipped(self) -> Self {
        match self {
            PolarizationPreset::SigmaPlus => PolarizationPreset::SigmaMinus,
            PolarizationPreset::SigmaMinus => PolarizationPreset::SigmaPlus,
            PolarizationPreset::PiLinear => PolarizationPreset::PiLinear,
        }
    }
}

/// Spherical basis `[e₋₁, e₀, e₊₁]` about `axis`:
/// `e₊₁ = -(u + i w)/√2`, `e₀ = n`, `e₋₁ = (u - i w)/√2` with `(u, w, n)` right-handed.
pub fn helicity_basis(axis: &Vector3<f64>) -> [CVector3; 3] {
    let n = axis.normalize();
    let helper = if n.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let u = helper.cross(&n).normalize();
    let w = n.cross(&u);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let cplx = |re: Vector3<f64>, im: Vector3<f64>| re.zip_map(&im, Complex64::new);
    [cplx(u * s, -w * s), cplx(n, Vector3::zeros()), cplx(-u * s, -w * s)]
}

/// The lab axis a beam is compared against for the named polarizations: its
/// direction, flipped so that the dominant component is positive.
pub fn reference_axis(direction: &Vector3<f64>) -> Vector3<f64> {
    let d = direction.normalize();
    let k = d.iamax();
    if d[k] < 0.0 {
        -d
    } else {
        d
    }
}

pub fn polarization_vector(preset: PolarizationPreset, reference: &Vector3<f64>) -> CVector3 {
    let basis = helicity_basis(reference);
    match preset {
        PolarizationPreset::SigmaMinus => basis[0],
        PolarizationPreset::PiLinear => basis[1],
        PolarizationPreset::SigmaPlus => basis[2],
    }
}

/// Square-wave gate: on during `[offset, offset + on_duration)` of every period.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Schedule {
    pub period: f64,
    pub offset: f64,
    pub on_duration: f64,
}

impl Schedule {
    /// Half-period gate: the first or the second half of each period.
    pub fn half(period: f64, first: bool) -> Self {
        Schedule {
            period,
            offset: if first { 0.0 } else { period / 2.0 },
            on_duration: period / 2.0,
        }
    }

    pub fn is_active(&self, t: f64) -> bool {
        if self.on_duration >= self.period {
            return true;
        }
        let phase = (t - self.offset).rem_euclid(self.period);
        phase < self.on_duration
    }

    pub fn duty(&self) -> f64 {
        (self.on_duration / self.period).clamp(0.0, 1.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LaserBeam {
    pub label: String,
    /// Unit propagation direction.
    pub direction: Vector3<f64>,
    /// |k| in rad/m.
    pub wavenumber: f64,
    /// δ₀ in rad/s, relative to the target link at B = 0, v = 0.
    pub detuning: f64,
    pub saturation: f64,
    /// Unit complex polarization, transverse to `direction`.
    pub polarization: CVector3,
    /// Index of the radiative link this beam drives.
    pub target_link: usize,
    pub schedule: Option<Schedule>,
}

impl LaserBeam {
    pub fn new(
        direction: Vector3<f64>,
        wavenumber: f64,
        detuning: f64,
        saturation: f64,
        polarization: CVector3,
        target_link: usize,
    ) -> Result<Self> {
        let norm = direction.norm();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::InvalidBeam("direction must be a nonzero finite vector".into()));
        }
        let direction = direction / norm;
        if !(saturation >= 0.0 && saturation.is_finite()) {
            return Err(Error::InvalidBeam(format!("saturation {saturation} must be finite and ≥ 0")));
        }
        if !(wavenumber > 0.0 && wavenumber.is_finite()) {
            return Err(Error::InvalidBeam(format!("wavenumber {wavenumber} must be positive")));
        }
        if !detuning.is_finite() {
            return Err(Error::InvalidBeam("detuning must be finite".into()));
        }
        let pnorm = polarization.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if !(pnorm > 0.0 && pnorm.is_finite()) {
            return Err(Error::InvalidBeam("polarization must be nonzero".into()));
        }
        let polarization = polarization.map(|c| c / pnorm);
        let longitudinal: Complex64 = polarization
            .iter()
            .zip(direction.iter())
            .map(|(e, d)| e * d)
            .sum();
        if longitudinal.norm() > 1e-9 {
            return Err(Error::InvalidBeam(format!(
                "polarization is not transverse to the propagation direction (|ε·k̂| = {:.3e})",
                longitudinal.norm()
            )));
        }
        Ok(LaserBeam {
            label: String::new(),
            direction,
            wavenumber,
            detuning,
            saturation,
            polarization,
            target_link,
            schedule: None,
        })
    }

    /// Beam with a named polarization about its [`reference_axis`].
    pub fn with_preset(
        direction: Vector3<f64>,
        wavenumber: f64,
        detuning: f64,
        saturation: f64,
        preset: PolarizationPreset,
        target_link: usize,
    ) -> Result<Self> {
        if direction.norm() == 0.0 {
            return Err(Error::InvalidBeam("direction must be nonzero".into()));
        }
        let reference = reference_axis(&direction);
        let pol = match preset {
            // π light about the lab z axis; only possible for beams with no z component.
            PolarizationPreset::PiLinear => {
                polarization_vector(PolarizationPreset::PiLinear, &Vector3::z())
            }
            _ => polarization_vector(preset, &reference),
        };
        LaserBeam::new(direction, wavenumber, detuning, saturation, pol, target_link)
    }

    pub fn labelled(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn scheduled(mut self, schedule: Schedule) -> Self {
        self.schedule = Some(schedule);
        self
    }

    pub fn wavevector(&self) -> Vector3<f64> {
        self.direction * self.wavenumber
    }

    pub fn is_active(&self, t: f64) -> bool {
        self.schedule.is_none_or(|s| s.is_active(t))
    }
}

/// Helicity weights `(c₋₁, c₀, c₊₁)` of the beam polarization about `axis`.
pub fn polarization_components(beam: &LaserBeam, axis: &Vector3<f64>) -> [f64; 3] {
    helicity_weights(&beam.polarization, axis)
}

pub fn helicity_weights(polarization: &CVector3, axis: &Vector3<f64>) -> [f64; 3] {
    let basis = helicity_basis(axis);
    let mut out = [0.0; 3];
    for (slot, e) in out.iter_mut().zip(basis.iter()) {
        let amp: Complex64 = e.iter().zip(polarization.iter()).map(|(a, b)| a.conj() * b).sum();
        *slot = amp.norm_sqr();
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    #[serde(rename = "linear_1d")]
    Linear1d,
    #[serde(rename = "quadrupole_3d")]
    Quadrupole3d,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MagneticFieldMap {
    pub kind: FieldKind,
    /// Axial gradient b′ in T/m.
    pub gradient: f64,
}

impl MagneticFieldMap {
    pub fn linear_1d(gradient: f64) -> Self {
        MagneticFieldMap {
            kind: FieldKind::Linear1d,
            gradient,
        }
    }

    pub fn quadrupole_3d(gradient: f64) -> Self {
        MagneticFieldMap {
            kind: FieldKind::Quadrupole3d,
            gradient,
        }
    }

    pub fn magnetic_field(&self, r: &Vector3<f64>) -> Vector3<f64> {
        let b = self.gradient;
        match self.kind {
            FieldKind::Linear1d => Vector3::new(0.0, 0.0, b * r.z),
            FieldKind::Quadrupole3d => Vector3::new(-0.5 * b * r.x, -0.5 * b * r.y, b * r.z),
        }
    }

    /// Largest |∇B| component, used to bound Zeeman drift along a flight.
    pub fn max_gradient(&self) -> f64 {
        self.gradient.abs()
    }
}

/// Local quantization axis: along `B`, or lab `+z` where the field vanishes.
pub fn quantization_axis(b: &Vector3<f64>) -> Vector3<f64> {
    let n = b.norm();
    if n > 0.0 {
        b / n
    } else {
        Vector3::z()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const K: f64 = 1.0e7;

    fn sigma_plus_along_z() -> LaserBeam {
        LaserBeam::with_preset(Vector3::z(), K, 0.0, 1.0, PolarizationPreset::SigmaPlus, 0).unwrap()
    }

    fn close(a: [f64; 3], b: [f64; 3]) -> bool {
        a.iter().zip(b.iter()).all(|(x, y)| (x - y).abs() < 1e-12)
    }

    #[test]
    fn sigma_plus_about_its_own_axis() {
        let c = polarization_components(&sigma_plus_along_z(), &Vector3::z());
        assert!(close(c, [0.0, 0.0, 1.0]), "{c:?}");
    }

    #[test]
    fn helicity_flips_with_axis_reversal() {
        let c = polarization_components(&sigma_plus_along_z(), &-Vector3::z());
        assert!(close(c, [1.0, 0.0, 0.0]), "{c:?}");
    }

    #[test]
    fn circular_beam_seen_from_perpendicular_axis() {
        let c = polarization_components(&sigma_plus_along_z(), &Vector3::x());
        assert!(close(c, [0.25, 0.5, 0.25]), "{c:?}");
    }

    /// Oracle: for circular light of helicity +1 about `z`, the weights about an
    /// axis tilted by θ are |d¹_{p,1}(θ)|² from the spin-1 rotation matrix.
    #[test]
    fn tilted_axis_matches_wigner_small_d() {
        for k in 0..=12 {
            let theta = std::f64::consts::PI * f64::from(k) / 12.0;
            let (s, c) = theta.sin_cos();
            let d_m1 = (1.0 - c) / 2.0;
            let d_0 = s / std::f64::consts::SQRT_2;
            let d_p1 = (1.0 + c) / 2.0;
            let expected = [d_m1 * d_m1, d_0 * d_0, d_p1 * d_p1];
            for phi in [0.0, 0.7, 2.0] {
                let axis = Vector3::new(s * f64::cos(phi), s * f64::sin(phi), c);
                let got = polarization_components(&sigma_plus_along_z(), &axis);
                assert!(close(got, expected), "θ={theta} φ={phi}: {got:?} vs {expected:?}");
            }
        }
    }

    #[test]
    fn sigma_minus_along_minus_z_is_transverse() {
        let b = LaserBeam::with_preset(-Vector3::z(), K, 0.0, 1.0, PolarizationPreset::SigmaMinus, 0).unwrap();
        let c = polarization_components(&b, &Vector3::z());
        assert!(close(c, [1.0, 0.0, 0.0]));
    }

    #[test]
    fn non_transverse_polarization_is_rejected() {
        assert!(LaserBeam::with_preset(Vector3::z(), K, 0.0, 1.0, PolarizationPreset::PiLinear, 0).is_err());
        let pi = LaserBeam::with_preset(Vector3::x(), K, 0.0, 1.0, PolarizationPreset::PiLinear, 0).unwrap();
        assert!(close(polarization_components(&pi, &Vector3::z()), [0.0, 1.0, 0.0]));
        assert!(LaserBeam::with_preset(Vector3::z(), K, 0.0, -1.0, PolarizationPreset::SigmaPlus, 0).is_err());
    }

    #[test]
    fn linear_field() {
        let f = MagneticFieldMap::linear_1d(0.1);
        let b = f.magnetic_field(&Vector3::new(0.3, -2.0, 1e-3));
        assert_eq!(b, Vector3::new(0.0, 0.0, 1e-4));
    }

    #[test]
    fn quadrupole_vanishes_at_origin_and_is_divergence_free() {
        let gradient = 0.1;
        let f = MagneticFieldMap::quadrupole_3d(gradient);
        assert_eq!(f.magnetic_field(&Vector3::zeros()), Vector3::zeros());
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let h = 1e-6;
        for _ in 0..10 {
            let r = Vector3::new(
                rng.random_range(-0.01..0.01),
                rng.random_range(-0.01..0.01),
                rng.random_range(-0.01..0.01),
            );
            let mut div = 0.0;
            for a in 0..3 {
                let mut e = Vector3::zeros();
                e[a] = h;
                div += (f.magnetic_field(&(r + e))[a] - f.magnetic_field(&(r - e))[a]) / (2.0 * h);
            }
            assert!(div.abs() < 1e-9 * gradient, "div = {div}");
        }
    }

    #[test]
    fn axis_defaults_to_lab_z_at_field_zero() {
        assert_eq!(quantization_axis(&Vector3::zeros()), Vector3::z());
        assert_eq!(quantization_axis(&Vector3::new(0.0, 0.0, -3.0)), -Vector3::z());
    }

    #[test]
    fn schedule_halves_partition_time() {
        let period = 7.5e-10;
        let a = Schedule::half(period, true);
        let b = Schedule::half(period, false);
        let n = 10_000;
        let mut on_a = 0;
        for k in 0..n {
            let t = 3.0 * period * (f64::from(k) + 0.5) / f64::from(n);
            assert!(a.is_active(t) ^ b.is_active(t), "exactly one set at t={t}");
            on_a += usize::from(a.is_active(t));
        }
        assert!((on_a as f64 / f64::from(n) - 0.5).abs() < 1e-3);
        assert!((a.duty() + b.duty() - 1.0).abs() < 1e-15);
        let always = Schedule { period, offset: 0.0, on_duration: period };
        assert!(always.is_active(0.4 * period) && always.is_active(0.9 * period));
    }

    fn unit(v: (f64, f64, f64)) -> Option<Vector3<f64>> {
        let v = Vector3::new(v.0, v.1, v.2);
        (v.norm() > 1e-3).then(|| v.normalize())
    }

    proptest! {
        #[test]
        fn weights_sum_to_one(d in (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64),
                              a in (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64),
                              scale in 0.1..10.0f64, plus in any::<bool>()) {
            let (Some(d), Some(a)) = (unit(d), unit(a)) else { return Ok(()) };
            let preset = if plus { PolarizationPreset::SigmaPlus } else { PolarizationPreset::SigmaMinus };
            let beam = LaserBeam::with_preset(d, K, 0.0, 1.0, preset, 0).unwrap();
            let c = polarization_components(&beam, &a);
            prop_assert!((c.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let c2 = polarization_components(&beam, &(a * scale));
            prop_assert!(close(c, c2));
        }

        #[test]
        fn weights_are_rotation_equivariant(d in (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64),
                                            a in (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64),
                                            rot in (-3.0..3.0f64, -3.0..3.0f64, -3.0..3.0f64)) {
            let (Some(d), Some(a)) = (unit(d), unit(a)) else { return Ok(()) };
            let r = nalgebra::Rotation3::new(Vector3::new(rot.0, rot.1, rot.2));
            let beam = LaserBeam::with_preset(d, K, 0.0, 1.0, PolarizationPreset::SigmaPlus, 0).unwrap();
            let mut rotated = beam.clone();
            rotated.direction = r * beam.direction;
            let re = r * beam.polarization.map(|c| c.re);
            let im = r * beam.polarization.map(|c| c.im);
            rotated.polarization = re.zip_map(&im, Complex64::new);
            let c1 = polarization_components(&beam, &a);
            let c2 = polarization_components(&rotated, &(r * a));
            prop_assert!(close(c1, c2), "{:?} vs {:?}", c1, c2);
        }
    }
}
