//! Stationary populations of the rate equations and the scattering force.

use nalgebra::{DMatrix, DVector, Vector3};

use crate::error::{Error, Result};
use crate::fields::{LaserBeam, MagneticFieldMap};
use crate::rates::{rate_matrix, RateMatrix};
use crate::scheme::LevelScheme;
use crate::units::HBAR;

/// Populations below this are treated as round-off and clamped to zero.
const CLAMP_TOLERANCE: f64 = 1e-12;
/// Stationarity residual, in units of the largest rate in the system.
const RESIDUAL_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct PopulationVector {
    pub rho: Vec<f64>,
}

impl PopulationVector {
    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.rho.iter().sum()
    }
}

impl std::ops::Index<usize> for PopulationVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.rho[i]
    }
}

/// Generator `A` of `ρ̇ = A ρ`: off-diagonal `A[to][from]` is the transfer
/// rate, the diagonal holds minus the total outflow.
pub fn generator(rm: &RateMatrix) -> DMatrix<f64> {
    let n = rm.len();
    let mut a = DMatrix::zeros(n, n);
    for from in 0..n {
        for to in 0..n {
            if from != to {
                let w = rm.transfer_rate(from, to);
                a[(to, from)] += w;
                a[(from, from)] -= w;
            }
        }
    }
    a
}

/// Sublevels that trap population: members of closed classes of the rate
/// graph that scatter no light, or, if several closed classes exist, every
/// class but the first.
fn trapped_sublevels(rm: &RateMatrix) -> Vec<usize> {
    let n = rm.len();
    let mut reach = vec![vec![false; n]; n];
    for (i, row) in reach.iter_mut().enumerate() {
        row[i] = true;
        for (j, r) in row.iter_mut().enumerate() {
            if i != j && rm.transfer_rate(i, j) > 0.0 {
                *r = true;
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            if reach[i][k] {
                for j in 0..n {
                    if reach[k][j] {
                        reach[i][j] = true;
                    }
                }
            }
        }
    }
    let closed: Vec<bool> = (0..n).map(|i| (0..n).all(|j| !reach[i][j] || reach[j][i])).collect();
    let mut classes: Vec<Vec<usize>> = Vec::new();
    for i in (0..n).filter(|&i| closed[i]) {
        match classes.iter_mut().find(|c| reach[c[0]][i]) {
            Some(c) => c.push(i),
            None => classes.push(vec![i]),
        }
    }
    let mut dark: Vec<usize> = classes.iter().filter(|c| c.len() == 1).map(|c| c[0]).collect();
    if dark.is_empty() && classes.len() > 1 {
        dark = classes[1..].iter().flatten().copied().collect();
    }
    dark.sort_unstable();
    dark
}

/// Solves `A ρ = 0`, `Σρ = 1`.
///
/// Errors with [`Error::DarkManifold`] when the stationary state is not
/// unique or population collects in sublevels that scatter no light.
pub fn steady_populations(rm: &RateMatrix) -> Result<PopulationVector> {
    let n = rm.len();
    if n == 0 {
        return Err(Error::Numerical("empty rate matrix".into()));
    }
    let dark = trapped_sublevels(rm);
    if !dark.is_empty() {
        return Err(Error::DarkManifold {
            sublevels: dark.iter().map(|&i| rm.labels()[i].clone()).collect(),
        });
    }
    let a = generator(rm);
    let scale = (0..n).map(|i| -a[(i, i)]).fold(rm.gamma_ref(), f64::max);
    let mut m = &a / scale;
    m.row_mut(0).fill(1.0);
    let mut rhs = DVector::zeros(n);
    rhs[0] = 1.0;
    let solution = m
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("singular rate-equation system".into()))?;
    let mut rho: Vec<f64> = solution.iter().copied().collect();
    if let Some((i, &r)) = rho.iter().enumerate().find(|(_, &r)| r < -CLAMP_TOLERANCE || !r.is_finite()) {
        return Err(Error::Numerical(format!(
            "population {r:e} of {} is negative beyond round-off",
            rm.labels()[i]
        )));
    }
    rho.iter_mut().for_each(|r| *r = r.max(0.0));
    let total: f64 = rho.iter().sum();
    rho.iter_mut().for_each(|r| *r /= total);
    let residual = (&a * DVector::from_column_slice(&rho)).amax();
    if residual > RESIDUAL_TOLERANCE * scale {
        return Err(Error::Numerical(format!(
            "stationarity residual {residual:e} s⁻¹ exceeds tolerance"
        )));
    }
    Ok(PopulationVector { rho })
}

/// Stationarity residual `max |A ρ|` in s⁻¹.
pub fn residual(rm: &RateMatrix, rho: &PopulationVector) -> f64 {
    (generator(rm) * DVector::from_column_slice(&rho.rho)).amax()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForceVector {
    /// Newtons.
    pub total: Vector3<f64>,
    pub per_beam: Vec<Vector3<f64>>,
}

/// `F = Σ_L ħ k_L Σᵢⱼ γᵢⱼᴸ (ρⱼ − ρᵢ)`.
pub fn force(rm: &RateMatrix, rho: &PopulationVector) -> ForceVector {
    let n = rm.len();
    let per_beam: Vec<Vector3<f64>> = (0..rm.beam_count())
        .map(|l| {
            let mut net = 0.0;
            for i in 0..n {
                for j in 0..n {
                    let g = rm.stim(l, i, j);
                    if g != 0.0 {
                        net += g * (rho[j] - rho[i]);
                    }
                }
            }
            rm.wavevector(l) * (HBAR * net)
        })
        .collect();
    ForceVector {
        total: per_beam.iter().sum(),
        per_beam,
    }
}

/// Steady force at a phase-space point.
pub fn steady_force(
    scheme: &LevelScheme,
    beams: &[LaserBeam],
    field: &MagneticFieldMap,
    r: &Vector3<f64>,
    v: &Vector3<f64>,
) -> Result<ForceVector> {
    let rm = rate_matrix(scheme, beams, field, r, v, 0.0);
    let rho = steady_populations(&rm)?;
    Ok(force(&rm, &rho))
}

#[derive(Clone, Debug, PartialEq)]
pub struct LowSatForce {
    /// z component in newtons.
    pub force: f64,
    /// Populated lower sublevels with no excitation at all; they contribute
    /// nothing.
    pub undriven: Vec<String>,
}

/// Low-intensity closed form along z,
///
/// ```text
/// F ≈ ħ Σⱼ [Σ_L k_Lz γⱼᴸ / Σ_L γⱼᴸ] Σᵢ Γᵢⱼ ρᵢ,   γⱼᴸ = Σᵢ γᵢⱼᴸ
/// ```
///
/// evaluated with the exact steady populations. For two counter-propagating
/// sets of equal |k| the bracket is `k (γⱼ⁺ − γⱼ⁻)/(γⱼ⁺ + γⱼ⁻)`.
pub fn force_low_sat(
    scheme: &LevelScheme,
    beams: &[LaserBeam],
    field: &MagneticFieldMap,
    z: f64,
    v: f64,
) -> Result<LowSatForce> {
    let rm = rate_matrix(scheme, beams, field, &Vector3::new(0.0, 0.0, z), &Vector3::new(0.0, 0.0, v), 0.0);
    let rho = steady_populations(&rm)?;
    let subs = scheme.sublevels();
    let n = rm.len();
    let mut total = 0.0;
    let mut undriven = Vec::new();
    for j in (0..n).filter(|&j| !subs[j].is_upper()) {
        let feed: f64 = (0..n).map(|i| rm.spont(i, j) * rho[i]).sum();
        let mut num = 0.0;
        let mut den = 0.0;
        for l in 0..rm.beam_count() {
            let g: f64 = (0..n).map(|i| rm.stim(l, i, j)).sum();
            num += rm.wavevector(l).z * g;
            den += g;
        }
        if den > 0.0 {
            total += HBAR * num / den * feed;
        } else if rho[j] > 0.0 {
            undriven.push(subs[j].label.clone());
        }
    }
    Ok(LowSatForce { force: total, undriven })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::PolarizationPreset::{SigmaMinus, SigmaPlus};
    use crate::presets::{bichromatic_1d_beams, standard_1d_beams};
    use crate::scheme::{build_preset, SchemePreset, Level, Manifold, RadiativeLink};
    use crate::angular::HalfInt;
    use proptest::prelude::*;

    const GRADIENT: f64 = 0.1;

    fn z_point(z: f64, v: f64) -> (Vector3<f64>, Vector3<f64>) {
        (Vector3::new(0.0, 0.0, z), Vector3::new(0.0, 0.0, v))
    }

    fn two_level(s: f64) -> (LevelScheme, Vec<LaserBeam>) {
        let scheme = build_preset(SchemePreset::Type1ZeroToOne).unwrap();
        let k = crate::units::wavenumber(scheme.links()[0].wavelength);
        let beam = LaserBeam::with_preset(Vector3::z(), k, 0.0, s, SigmaPlus, 0).unwrap();
        (scheme, vec![beam])
    }

    #[test]
    fn two_level_oracle() {
        let (scheme, beams) = two_level(1.0);
        let field = MagneticFieldMap::linear_1d(0.0);
        let rm = rate_matrix(&scheme, &beams, &field, &Vector3::zeros(), &Vector3::zeros(), 0.0);
        let rho = steady_populations(&rm).unwrap();
        let excited: f64 = scheme
            .sublevels()
            .iter()
            .zip(&rho.rho)
            .filter(|(s, _)| s.is_upper())
            .map(|(_, r)| r)
            .sum();
        assert!((excited - 0.25).abs() < 1e-12);
        assert!(residual(&rm, &rho) <= 1e-10 * scheme.gamma_max());
        let f = force(&rm, &rho);
        let unit = HBAR * beams[0].wavenumber * scheme.gamma_max();
        assert!((f.total.z / unit - 0.25).abs() < 1e-12);
        assert!(f.total.x.abs() + f.total.y.abs() < 1e-20);
    }

    #[test]
    fn two_level_saturation_curve() {
        for s in [0.1, 0.5, 3.0, 20.0] {
            let (scheme, beams) = two_level(s);
            let rm = rate_matrix(&scheme, &beams, &MagneticFieldMap::linear_1d(0.0), &Vector3::zeros(), &Vector3::zeros(), 0.0);
            let rho = steady_populations(&rm).unwrap();
            let excited: f64 = (0..rho.len()).filter(|&i| scheme.sublevels()[i].is_upper()).map(|i| rho[i]).sum();
            assert!((excited - s / 2.0 / (1.0 + s)).abs() < 1e-12, "s={s}: {excited}");
        }
    }

    #[test]
    fn lasers_off_is_a_dark_manifold() {
        let scheme = build_preset(SchemePreset::Lambda1To0).unwrap();
        let rm = rate_matrix(&scheme, &[], &MagneticFieldMap::linear_1d(GRADIENT), &Vector3::zeros(), &Vector3::zeros(), 0.0);
        match steady_populations(&rm) {
            Err(Error::DarkManifold { sublevels }) => assert_eq!(sublevels.len(), 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn m_zero_without_pi_light_is_named() {
        let scheme = build_preset(SchemePreset::Lambda1To0WithM0).unwrap();
        let beams = bichromatic_1d_beams(&scheme, 0, -scheme.gamma_max(), 0.0, 1.0, false).unwrap();
        let (r, v) = z_point(1e-4, 0.1);
        let rm = rate_matrix(&scheme, &beams, &MagneticFieldMap::linear_1d(GRADIENT), &r, &v, 0.0);
        match steady_populations(&rm) {
            Err(Error::DarkManifold { sublevels }) => {
                assert_eq!(sublevels.len(), 1);
                assert!(sublevels[0].contains("M=0"), "{sublevels:?}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn disconnected_subsystems_are_rejected() {
        // Two independent two-level systems sharing nothing.
        let levels = vec![
            Level::new("a", HalfInt::integer(0), 0.0, Manifold::Lower),
            Level::new("b", HalfInt::integer(0), 0.0, Manifold::Lower),
            Level::new("A", HalfInt::integer(1), 0.0, Manifold::Upper),
            Level::new("B", HalfInt::integer(1), 0.0, Manifold::Upper),
        ];
        let link = |name: &str, up: &str, low: &str| RadiativeLink {
            name: name.into(),
            upper: up.into(),
            lower: low.into(),
            gamma_total: 1e7,
            wavelength: 500e-9,
            branching: None,
        };
        let scheme = LevelScheme::new("split", levels, vec![link("aA", "A", "a"), link("bB", "B", "b")]).validated().unwrap();
        let k = crate::units::wavenumber(500e-9);
        let beams = vec![
            LaserBeam::with_preset(Vector3::z(), k, 0.0, 1.0, SigmaPlus, 0).unwrap(),
            LaserBeam::with_preset(Vector3::z(), k, 0.0, 1.0, SigmaPlus, 1).unwrap(),
        ];
        let rm = rate_matrix(&scheme, &beams, &MagneticFieldMap::linear_1d(0.0), &Vector3::zeros(), &Vector3::zeros(), 0.0);
        assert!(matches!(steady_populations(&rm), Err(Error::DarkManifold { .. })));
    }

    fn lambda_monochromatic(det: f64, s: f64) -> (LevelScheme, Vec<LaserBeam>) {
        let scheme = build_preset(SchemePreset::Lambda1To0).unwrap();
        let k = crate::units::wavenumber(scheme.links()[0].wavelength);
        let beams = standard_1d_beams(0, k, det * scheme.gamma_max(), s, false).unwrap();
        (scheme, beams)
    }

    #[test]
    fn lambda_compensation() {
        let (scheme, beams) = lambda_monochromatic(-1.0, 1.0);
        let field = MagneticFieldMap::linear_1d(GRADIENT);
        let (r, v) = z_point(7e-4, -0.4);
        let rm = rate_matrix(&scheme, &beams, &field, &r, &v, 0.0);
        let rho = steady_populations(&rm).unwrap();
        let subs = scheme.sublevels();
        let up = subs.iter().position(|s| s.is_upper()).unwrap();
        let lows: Vec<usize> = (0..subs.len()).filter(|&j| !subs[j].is_upper()).collect();
        // Net absorption γⱼ(ρⱼ − ρₑ) balances; it reduces to ρⱼγⱼ at low s.
        let flux = |j: usize| rm.stim_total(up, j) * (rho[j] - rho[up]);
        let (a, b) = (flux(lows[0]), flux(lows[1]));
        assert!((a - b).abs() < 1e-12 * a.max(b), "{a} {b}");
        assert!(rm.stim_total(up, lows[0]) != rm.stim_total(up, lows[1]));
    }

    #[test]
    fn symmetric_type1_at_origin_has_no_force() {
        let scheme = build_preset(SchemePreset::Type1ZeroToOne).unwrap();
        let k = crate::units::wavenumber(scheme.links()[0].wavelength);
        let beams = standard_1d_beams(0, k, -scheme.gamma_max(), 1.0, false).unwrap();
        let f = steady_force(&scheme, &beams, &MagneticFieldMap::linear_1d(GRADIENT), &Vector3::zeros(), &Vector3::zeros()).unwrap();
        let unit = HBAR * k * scheme.gamma_max();
        assert!(f.total.norm() < 1e-12 * unit);
        let low = force_low_sat(&scheme, &beams, &MagneticFieldMap::linear_1d(GRADIENT), 0.0, 0.0).unwrap();
        assert!(low.force.abs() < 1e-12 * unit);
    }

    #[test]
    fn sign_conventions_for_type1() {
        // Red-detuned σ⁺/σ⁻ pair on J=0 → J=1 with g'<0 cools and traps.
        let scheme = build_preset(SchemePreset::Type1ZeroToOne).unwrap();
        let k = crate::units::wavenumber(scheme.links()[0].wavelength);
        let beams = standard_1d_beams(0, k, -scheme.gamma_max(), 1.0, false).unwrap();
        let field = MagneticFieldMap::linear_1d(GRADIENT);
        let (r, v) = z_point(5e-4, 0.0);
        assert!(steady_force(&scheme, &beams, &field, &r, &v).unwrap().total.z < 0.0);
        let (r, v) = z_point(0.0, 0.3);
        assert!(steady_force(&scheme, &beams, &field, &r, &v).unwrap().total.z < 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn populations_are_a_distribution(z in -3e-3f64..3e-3, v in -3.0f64..3.0, det in -3.0f64..3.0, s in 0.01f64..10.0) {
            let scheme = build_preset(SchemePreset::C2MinusIII).unwrap();
            let beams = crate::presets::c2minus_beams(&scheme, crate::presets::C2Scheme::Both, det * scheme.gamma_max(), s, false).unwrap();
            let (r, vv) = z_point(z, v);
            let rm = rate_matrix(&scheme, &beams, &MagneticFieldMap::linear_1d(GRADIENT), &r, &vv, 0.0);
            let rho = steady_populations(&rm).unwrap();
            prop_assert!((rho.sum() - 1.0).abs() < 1e-12);
            prop_assert!(rho.rho.iter().all(|&p| p >= 0.0));
            prop_assert!(residual(&rm, &rho) <= 1e-10 * scheme.gamma_max());
        }

        #[test]
        fn lambda_null_force(z in -5e-3f64..5e-3, v in -5.0f64..5.0, det in -4.0f64..4.0, s in 0.01f64..10.0, grad in 0.0f64..0.5) {
            let (scheme, beams) = lambda_monochromatic(det, s);
            let field = MagneticFieldMap::linear_1d(grad);
            let (r, vv) = z_point(z, v);
            let f = steady_force(&scheme, &beams, &field, &r, &vv).unwrap();
            let unit = HBAR * beams[0].wavenumber * scheme.gamma_max();
            prop_assert!(f.total.norm() < 1e-10 * unit, "{}", f.total.z / unit);
            let low = force_low_sat(&scheme, &beams, &field, z, v).unwrap();
            prop_assert!(low.force.abs() < 1e-10 * unit);
        }

        #[test]
        fn lambda_polychromatic_null_force(z in -5e-3f64..5e-3, v in -5.0f64..5.0, d1 in -4.0f64..4.0, d2 in -4.0f64..4.0, s1 in 0.01f64..5.0, s2 in 0.01f64..5.0) {
            // Several frequencies, but each side keeps a single polarization.
            let scheme = build_preset(SchemePreset::Lambda1To0).unwrap();
            let gamma = scheme.gamma_max();
            let k = crate::units::wavenumber(scheme.links()[0].wavelength);
            let mut beams = standard_1d_beams(0, k, d1 * gamma, s1, false).unwrap();
            beams.extend(standard_1d_beams(0, k, d2 * gamma, s2, false).unwrap());
            let (r, vv) = z_point(z, v);
            let f = steady_force(&scheme, &beams, &MagneticFieldMap::linear_1d(GRADIENT), &r, &vv).unwrap();
            prop_assert!(f.total.norm() < 1e-10 * HBAR * k * gamma);
        }

        #[test]
        fn mirror_antisymmetry(z in -3e-3f64..3e-3, v in -3.0f64..3.0, d2 in -2.0f64..2.0, s in 0.05f64..5.0) {
            let scheme = build_preset(SchemePreset::Lambda1To0).unwrap();
            let gamma = scheme.gamma_max();
            let beams = bichromatic_1d_beams(&scheme, 0, -gamma, d2 * gamma, s, false).unwrap();
            let field = MagneticFieldMap::linear_1d(GRADIENT);
            let (r, vv) = z_point(z, v);
            let a = steady_force(&scheme, &beams, &field, &r, &vv).unwrap().total.z;
            let b = steady_force(&scheme, &beams, &field, &-r, &-vv).unwrap().total.z;
            let unit = HBAR * beams[0].wavenumber * gamma;
            prop_assert!((a + b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1e-6 * unit), "{a} {b}");
        }

        #[test]
        fn g_sum_scaling(z in -3e-3f64..3e-3, v in -3.0f64..3.0, d2 in -2.0f64..2.0) {
            let base = build_preset(SchemePreset::JHalfToHalf).unwrap();
            let gamma = base.gamma_max();
            let split = base.with_g_factor("g(J=1/2)", 0.5).unwrap().with_g_factor("e(J=1/2)", 0.5).unwrap();
            let field = MagneticFieldMap::linear_1d(GRADIENT);
            let (r, vv) = z_point(z, v);
            let beams = bichromatic_1d_beams(&base, 0, -gamma, d2 * gamma, 1.0, true).unwrap();
            let a = steady_force(&base, &beams, &field, &r, &vv).unwrap().total.z;
            let b = steady_force(&split, &beams, &field, &r, &vv).unwrap().total.z;
            let unit = HBAR * beams[0].wavenumber * gamma;
            prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1e-6 * unit));
        }
    }

    #[test]
    fn low_saturation_agrees_with_exact_force() {
        let scheme = build_preset(SchemePreset::Lambda1To0).unwrap();
        let gamma = scheme.gamma_max();
        let s = 0.01;
        let beams = bichromatic_1d_beams(&scheme, 0, -gamma, gamma, s, false).unwrap();
        let field = MagneticFieldMap::linear_1d(GRADIENT);
        let unit = HBAR * beams[0].wavenumber * gamma;
        for (z, v) in [(1e-3, 0.0), (0.0, 1.0), (-2e-3, 0.5), (3e-4, -2.0)] {
            let exact = steady_force(&scheme, &beams, &field, &Vector3::new(0.0, 0.0, z), &Vector3::new(0.0, 0.0, v)).unwrap().total.z;
            let low = force_low_sat(&scheme, &beams, &field, z, v).unwrap().force;
            if exact.abs() > 1e-3 * unit * s {
                assert!((low - exact).abs() < 0.05 * exact.abs(), "({z},{v}) {low} vs {exact}");
            }
        }
    }

    #[test]
    fn sigma_minus_only_pushes_backwards() {
        let (scheme, _) = two_level(1.0);
        let k = crate::units::wavenumber(scheme.links()[0].wavelength);
        let beam = LaserBeam::with_preset(-Vector3::z(), k, 0.0, 1.0, SigmaMinus, 0).unwrap();
        let f = steady_force(&scheme, &[beam], &MagneticFieldMap::linear_1d(0.0), &Vector3::zeros(), &Vector3::zeros()).unwrap();
        assert!(f.total.z < 0.0);
    }
}
