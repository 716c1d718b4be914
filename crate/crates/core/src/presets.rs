//! Laser configurations used throughout: standard and bichromatic 1D/3D
//! beam sets, the C₂⁻ schemes and the switched variant.
//!
//! Orientation convention: in the *standard* orientation the beam travelling
//! along `+a` (`a` a lab axis) carries the "cooling" polarization σ⁺ about
//! `+a` and its counter-propagating partner σ⁻ about `+a`; `flip` swaps them.
//! The second frequency of a bichromatic set always carries the opposite
//! polarization of the first on the same beam.

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::fields::{LaserBeam, PolarizationPreset, Schedule};
use crate::scheme::{LevelScheme, C2_LINK_HALF, C2_LINK_THREE_HALF};
use crate::units::wavenumber;

fn pair(
    axis: Vector3<f64>,
    k: f64,
    detuning: f64,
    saturation: f64,
    forward: PolarizationPreset,
    link: usize,
    tag: &str,
) -> Result<[LaserBeam; 2]> {
    let name = axis_name(&axis);
    Ok([
        LaserBeam::with_preset(axis, k, detuning, saturation, forward, link)?.labelled(format!("{tag}+{name}")),
        LaserBeam::with_preset(-axis, k, detuning, saturation, forward.flipped(), link)?
            .labelled(format!("{tag}-{name}")),
    ])
}

fn axis_name(axis: &Vector3<f64>) -> &'static str {
    match axis.iamax() {
        0 => "x",
        1 => "y",
        _ => "z",
    }
}

fn forward_polarization(flip: bool) -> PolarizationPreset {
    if flip {
        PolarizationPreset::SigmaMinus
    } else {
        PolarizationPreset::SigmaPlus
    }
}

/// Counter-propagating σ⁺/σ⁻ pair along z (single frequency).
pub fn standard_1d_beams(link: usize, k: f64, detuning: f64, saturation: f64, flip: bool) -> Result<Vec<LaserBeam>> {
    Ok(pair(Vector3::z(), k, detuning, saturation, forward_polarization(flip), link, "L1")?.to_vec())
}

/// Six-beam single-frequency MOT. The x and y pairs carry the opposite
/// orientation of the z pair because the quadrupole gradient changes sign
/// (and halves) in the radial plane.
pub fn standard_3d_beams(link: usize, k: f64, detuning: f64, saturation: f64, flip: bool) -> Result<Vec<LaserBeam>> {
    let mut out = Vec::with_capacity(6);
    out.extend(pair(Vector3::x(), k, detuning, saturation, forward_polarization(!flip), link, "L1")?);
    out.extend(pair(Vector3::y(), k, detuning, saturation, forward_polarization(!flip), link, "L1")?);
    out.extend(pair(Vector3::z(), k, detuning, saturation, forward_polarization(flip), link, "L1")?);
    Ok(out)
}

fn link_wavenumber(scheme: &LevelScheme, link: usize) -> Result<f64> {
    scheme
        .links()
        .get(link)
        .map(|l| wavenumber(l.wavelength))
        .ok_or_else(|| Error::InvalidBeam(format!("scheme `{}` has no link #{link}", scheme.name())))
}

/// Standard pair at `red_detuning` plus the opposite-polarization pair at
/// `second_detuning`, all at saturation `saturation`, along z.
pub fn bichromatic_1d_beams(
    scheme: &LevelScheme,
    link: usize,
    red_detuning: f64,
    second_detuning: f64,
    saturation: f64,
    flip: bool,
) -> Result<Vec<LaserBeam>> {
    let k = link_wavenumber(scheme, link)?;
    let mut out = standard_1d_beams(link, k, red_detuning, saturation, flip)?;
    let second = pair(Vector3::z(), k, second_detuning, saturation, forward_polarization(!flip), link, "L2")?;
    out.extend(second);
    Ok(out)
}

/// Twelve-beam bichromatic MOT: [`standard_3d_beams`] plus the mirrored set
/// at the second detuning.
pub fn bichromatic_3d_beams(
    scheme: &LevelScheme,
    link: usize,
    red_detuning: f64,
    second_detuning: f64,
    saturation: f64,
    flip: bool,
) -> Result<Vec<LaserBeam>> {
    let k = link_wavenumber(scheme, link)?;
    let mut out = standard_3d_beams(link, k, red_detuning, saturation, flip)?;
    let mut second = standard_3d_beams(link, k, second_detuning, saturation, !flip)?;
    for b in &mut second {
        b.label = b.label.replacen("L1", "L2", 1);
    }
    out.extend(second);
    Ok(out)
}

/// Switched version of [`bichromatic_1d_beams`]: the first-frequency pair is
/// on during the first half of each period, the second pair during the second
/// half.
pub fn switched_1d_beams(
    scheme: &LevelScheme,
    link: usize,
    red_detuning: f64,
    second_detuning: f64,
    saturation: f64,
    flip: bool,
    period: f64,
) -> Result<Vec<LaserBeam>> {
    let beams = bichromatic_1d_beams(scheme, link, red_detuning, second_detuning, saturation, flip)?;
    Ok(beams
        .into_iter()
        .enumerate()
        .map(|(n, b)| b.scheduled(Schedule::half(period, n < 2)))
        .collect())
}

/// Whether the link needs the flipped orientation for a restoring force:
/// true when σ⁺ transitions of the link shift up with |B| on average.
pub fn prefers_flipped(scheme: &LevelScheme, link: usize) -> bool {
    let subs = scheme.sublevels();
    let (sum, count) = scheme
        .couplings(link)
        .iter()
        .filter(|c| c.p == 1)
        .fold((0.0, 0usize), |(s, n), c| {
            let up = &subs[c.upper];
            let low = &subs[c.lower];
            (s + up.g * up.m.value() - low.g * low.m.value(), n + 1)
        });
    count > 0 && sum > 0.0
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum C2Scheme {
    /// Red-detuned cooling on J''=1/2 → J'=1/2.
    HalfToHalf,
    /// Red-detuned cooling on J''=3/2 → J'=1/2.
    ThreeHalfToHalf,
    /// Both.
    Both,
}

/// C₂⁻ beams along z: resonant opposite-polarization pairs on both links plus
/// red-detuned pairs on the link(s) selected by `which`. Each link gets the
/// orientation from [`prefers_flipped`].
pub fn c2minus_beams(
    scheme: &LevelScheme,
    which: C2Scheme,
    red_detuning: f64,
    saturation: f64,
    flip_all: bool,
) -> Result<Vec<LaserBeam>> {
    let find = |name: &str| {
        scheme
            .link_index(name)
            .ok_or_else(|| Error::InvalidBeam(format!("scheme `{}` has no link `{name}`", scheme.name())))
    };
    let half = find(C2_LINK_HALF)?;
    let three_half = find(C2_LINK_THREE_HALF)?;
    let mut out = Vec::new();
    for (link, red) in [
        (half, matches!(which, C2Scheme::HalfToHalf | C2Scheme::Both)),
        (three_half, matches!(which, C2Scheme::ThreeHalfToHalf | C2Scheme::Both)),
    ] {
        let k = link_wavenumber(scheme, link)?;
        let flip = prefers_flipped(scheme, link) ^ flip_all;
        let tag = &scheme.links()[link].name;
        if red {
            out.extend(pair(Vector3::z(), k, red_detuning, saturation, forward_polarization(flip), link, &format!("{tag}:red"))?);
        }
        out.extend(pair(Vector3::z(), k, 0.0, saturation, forward_polarization(!flip), link, &format!("{tag}:res"))?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::polarization_components;
    use crate::scheme::{build_preset, SchemePreset};

    #[test]
    fn orientation_follows_zeeman_sign() {
        let lambda = build_preset(SchemePreset::Lambda1To0).unwrap();
        assert!(!prefers_flipped(&lambda, 0));
        let type1 = build_preset(SchemePreset::Type1ZeroToOne).unwrap();
        assert!(!prefers_flipped(&type1, 0));
        let half = build_preset(SchemePreset::JHalfToHalf).unwrap();
        assert!(prefers_flipped(&half, 0));
        let c2 = build_preset(SchemePreset::C2MinusIII).unwrap();
        assert!(prefers_flipped(&c2, c2.link_index(C2_LINK_HALF).unwrap()));
        assert!(!prefers_flipped(&c2, c2.link_index(C2_LINK_THREE_HALF).unwrap()));
    }

    #[test]
    fn bichromatic_pairs_have_opposite_polarizations() {
        let s = build_preset(SchemePreset::Lambda1To0).unwrap();
        let g = s.gamma_max();
        let beams = bichromatic_1d_beams(&s, 0, -g, 0.0, 1.0, false).unwrap();
        assert_eq!(beams.len(), 4);
        let w = |b: &LaserBeam| polarization_components(b, &Vector3::z());
        // L⁺ red σ⁺, L⁻ red σ⁻, L⁺ second σ⁻, L⁻ second σ⁺ (about lab z).
        assert_eq!(w(&beams[0])[2].round(), 1.0);
        assert_eq!(w(&beams[1])[0].round(), 1.0);
        assert_eq!(w(&beams[2])[0].round(), 1.0);
        assert_eq!(w(&beams[3])[2].round(), 1.0);
        assert!(beams[0].direction.z > 0.0 && beams[1].direction.z < 0.0);
    }

    #[test]
    fn three_d_set_has_twelve_transverse_beams() {
        let s = build_preset(SchemePreset::Lambda1To0WithM0).unwrap();
        let beams = bichromatic_3d_beams(&s, 0, -s.gamma_max(), 0.0, 1.0, false).unwrap();
        assert_eq!(beams.len(), 12);
        // Radial pairs are oriented opposite to the axial one.
        let x = &beams[0];
        assert!(x.direction.x > 0.0);
        assert_eq!(polarization_components(x, &Vector3::x())[0].round(), 1.0);
    }

    #[test]
    fn c2minus_beam_counts() {
        let s = build_preset(SchemePreset::C2MinusI).unwrap();
        let g = s.gamma_max();
        assert_eq!(c2minus_beams(&s, C2Scheme::HalfToHalf, -g, 1.0, false).unwrap().len(), 6);
        assert_eq!(c2minus_beams(&s, C2Scheme::ThreeHalfToHalf, -g, 1.0, false).unwrap().len(), 6);
        assert_eq!(c2minus_beams(&s, C2Scheme::Both, -g, 1.0, false).unwrap().len(), 8);
    }

    #[test]
    fn switched_sets_alternate() {
        let s = build_preset(SchemePreset::Lambda1To0).unwrap();
        let g = s.gamma_max();
        let period = 0.01 / g;
        let beams = switched_1d_beams(&s, 0, -g, 0.0, 2.0, false, period).unwrap();
        for t in [0.1 * period, 0.6 * period, 1.3 * period] {
            let on: Vec<bool> = beams.iter().map(|b| b.is_active(t)).collect();
            assert_eq!(on[0], on[1]);
            assert_eq!(on[2], on[3]);
            assert_ne!(on[0], on[2]);
        }
    }
}
