//! Stimulated and spontaneous rates at a phase-space point.
//!
//! A beam drives only the couplings of its target link. For a lower sublevel
//! `j` and an upper sublevel `i` joined by helicity `p = M_i − M_j`:
//!
//! ```text
//! δ = δ₀ − k·v + (μ_B |B| / ħ)(g′M′ − g″M″)
//! γ = (Γ/2) s c_p f / (1 + 4δ²/Γ²)
//! ```
//!
//! with `c_p` the helicity weight of the polarization about the local field
//! and `f` the dipole strength of the coupling (line strength times the
//! manifold branching).

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::fields::{polarization_components, quantization_axis, LaserBeam, MagneticFieldMap};
use crate::scheme::{Coupling, LevelScheme};
use crate::units::larmor;

/// Per-beam stimulated rates and spontaneous rates, indexed by sublevel.
#[derive(Clone, Debug)]
pub struct RateMatrix {
    n: usize,
    /// `[beam][upper][lower]`, row-major.
    stim: Vec<f64>,
    spont: Vec<f64>,
    wavevectors: Vec<Vector3<f64>>,
    active: Vec<bool>,
    labels: Vec<String>,
    gamma_ref: f64,
}

impl RateMatrix {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn beam_count(&self) -> usize {
        self.wavevectors.len()
    }

    /// γᵢⱼᴸ for beam `l`, upper sublevel `i`, lower sublevel `j`.
    pub fn stim(&self, l: usize, i: usize, j: usize) -> f64 {
        self.stim[(l * self.n + i) * self.n + j]
    }

    /// γᵢⱼ summed over beams.
    pub fn stim_total(&self, i: usize, j: usize) -> f64 {
        (0..self.beam_count()).map(|l| self.stim(l, i, j)).sum()
    }

    /// Γᵢⱼ.
    pub fn spont(&self, i: usize, j: usize) -> f64 {
        self.spont[i * self.n + j]
    }

    pub fn wavevector(&self, l: usize) -> Vector3<f64> {
        self.wavevectors[l]
    }

    pub fn is_active(&self, l: usize) -> bool {
        self.active[l]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Largest link Γ, used to scale residual tolerances.
    pub fn gamma_ref(&self) -> f64 {
        self.gamma_ref
    }

    /// Rate of the `from → to` transition (stimulated plus spontaneous).
    pub fn transfer_rate(&self, from: usize, to: usize) -> f64 {
        self.spont(from, to) + self.stim_total(from, to) + self.stim_total(to, from)
    }
}

fn zeeman_factor(scheme: &LevelScheme, c: &Coupling) -> f64 {
    let up = &scheme.sublevels()[c.upper];
    let low = &scheme.sublevels()[c.lower];
    up.g * up.m.value() - low.g * low.m.value()
}

#[inline]
fn lorentzian_rate(gamma: f64, saturation: f64, weight: f64, delta: f64) -> f64 {
    0.5 * gamma * saturation * weight / (1.0 + 4.0 * delta * delta / (gamma * gamma))
}

/// Calls `f(coupling, γ)` for every coupling the beam drives.
fn for_each_rate(
    scheme: &LevelScheme,
    beam: &LaserBeam,
    axis: &Vector3<f64>,
    larmor_freq: f64,
    v: &Vector3<f64>,
    mut f: impl FnMut(&Coupling, f64),
) {
    let link = &scheme.links()[beam.target_link];
    let gamma = link.gamma_total;
    let c = polarization_components(beam, axis);
    let doppler = beam.wavevector().dot(v);
    for coupling in scheme.couplings(beam.target_link) {
        let weight = c[(coupling.p + 1) as usize] * coupling.strength;
        if weight == 0.0 {
            continue;
        }
        let delta = beam.detuning - doppler + larmor_freq * zeeman_factor(scheme, coupling);
        f(coupling, lorentzian_rate(gamma, beam.saturation, weight, delta));
    }
}

fn find_coupling<'a>(scheme: &'a LevelScheme, beam: &LaserBeam, i: usize, j: usize) -> Result<&'a Coupling> {
    let link = scheme
        .links()
        .get(beam.target_link)
        .ok_or_else(|| Error::LinkMismatch(format!("beam targets missing link {}", beam.target_link)))?;
    scheme
        .couplings(beam.target_link)
        .iter()
        .find(|c| c.upper == i && c.lower == j)
        .ok_or_else(|| {
            let label = |k: usize| {
                scheme
                    .sublevels()
                    .get(k)
                    .map_or_else(|| format!("#{k}"), |s| s.label.clone())
            };
            Error::LinkMismatch(format!(
                "{} → {} is not a dipole coupling of link `{}`",
                label(j),
                label(i),
                link.name
            ))
        })
}

/// δᵢⱼᴸ in rad/s for upper sublevel `i`, lower sublevel `j`.
pub fn detuning(
    scheme: &LevelScheme,
    beam: &LaserBeam,
    i: usize,
    j: usize,
    v: &Vector3<f64>,
    b: &Vector3<f64>,
) -> Result<f64> {
    let c = find_coupling(scheme, beam, i, j)?;
    Ok(beam.detuning - beam.wavevector().dot(v) + larmor(b.norm()) * zeeman_factor(scheme, c))
}

/// γᵢⱼᴸ in s⁻¹ for upper sublevel `i`, lower sublevel `j`.
pub fn excitation_rate(
    scheme: &LevelScheme,
    beam: &LaserBeam,
    i: usize,
    j: usize,
    v: &Vector3<f64>,
    b: &Vector3<f64>,
) -> Result<f64> {
    let c = find_coupling(scheme, beam, i, j)?;
    let delta = detuning(scheme, beam, i, j, v, b)?;
    let weight = polarization_components(beam, &quantization_axis(b))[(c.p + 1) as usize] * c.strength;
    let gamma = scheme.links()[beam.target_link].gamma_total;
    Ok(lorentzian_rate(gamma, beam.saturation, weight, delta))
}

/// Full rate matrix at position `r`, velocity `v` and time `t`.
pub fn rate_matrix(
    scheme: &LevelScheme,
    beams: &[LaserBeam],
    field: &MagneticFieldMap,
    r: &Vector3<f64>,
    v: &Vector3<f64>,
    t: f64,
) -> RateMatrix {
    let n = scheme.len();
    let b = field.magnetic_field(r);
    let axis = quantization_axis(&b);
    let wl = larmor(b.norm());
    let mut stim = vec![0.0; beams.len() * n * n];
    let mut active = Vec::with_capacity(beams.len());
    for (l, beam) in beams.iter().enumerate() {
        let on = beam.is_active(t);
        active.push(on);
        if !on {
            continue;
        }
        for_each_rate(scheme, beam, &axis, wl, v, |c, rate| {
            stim[(l * n + c.upper) * n + c.lower] += rate;
        });
    }
    let spont = scheme.decay_rates().iter().flatten().copied().collect();
    RateMatrix {
        n,
        stim,
        spont,
        wavevectors: beams.iter().map(LaserBeam::wavevector).collect(),
        active,
        labels: scheme.sublevel_labels(),
        gamma_ref: scheme.gamma_max(),
    }
}

/// What a KMC jump does to the internal state and the momentum.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ChannelKind {
    /// Lower → upper, momentum `+ħk` of the beam.
    Absorption { beam: usize },
    /// Upper → lower, momentum `−ħk` of the beam.
    StimulatedEmission { beam: usize },
    /// Upper → lower, photon of the link wavenumber in a random direction.
    Spontaneous { wavenumber: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Channel {
    pub target: usize,
    pub rate: f64,
    pub kind: ChannelKind,
}

/// Appends every transition leaving sublevel `from` to `out` (cleared first)
/// and returns the total rate.
pub fn outgoing_channels(
    scheme: &LevelScheme,
    beams: &[LaserBeam],
    field: &MagneticFieldMap,
    from: usize,
    r: &Vector3<f64>,
    v: &Vector3<f64>,
    t: f64,
    out: &mut Vec<Channel>,
) -> f64 {
    out.clear();
    let upper = scheme.sublevels()[from].is_upper();
    if upper {
        for (j, &rate) in scheme.decay_rates()[from].iter().enumerate() {
            if rate > 0.0 {
                out.push(Channel {
                    target: j,
                    rate,
                    kind: ChannelKind::Spontaneous {
                        wavenumber: scheme.emission_wavenumber(j),
                    },
                });
            }
        }
    }
    let active: Vec<usize> = (0..beams.len()).filter(|&l| beams[l].is_active(t)).collect();
    if !active.is_empty() {
        let b = field.magnetic_field(r);
        let axis = quantization_axis(&b);
        let wl = larmor(b.norm());
        for l in active {
            let beam = &beams[l];
            for_each_rate(scheme, beam, &axis, wl, v, |c, rate| {
                if upper && c.upper == from {
                    out.push(Channel {
                        target: c.lower,
                        rate,
                        kind: ChannelKind::StimulatedEmission { beam: l },
                    });
                } else if !upper && c.lower == from {
                    out.push(Channel {
                        target: c.upper,
                        rate,
                        kind: ChannelKind::Absorption { beam: l },
                    });
                }
            });
        }
    }
    out.iter().map(|c| c.rate).sum()
}

/// Upper bound on the total rate out of any sublevel, valid at every
/// position, velocity and time.
pub fn rate_bound(scheme: &LevelScheme, beams: &[LaserBeam]) -> f64 {
    let spont = (0..scheme.len()).map(|i| scheme.total_decay(i)).fold(0.0, f64::max);
    let stim: f64 = beams
        .iter()
        .map(|b| 0.5 * scheme.links()[b.target_link].gamma_total * b.saturation)
        .sum();
    spont + stim
}
