//! Level schemes: magnetic sublevels, Landé factors and radiative links.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::angular::{line_strength, HalfInt};
use crate::error::{Error, Result};
use crate::units::{C2MINUS_LIFETIME, C2MINUS_WAVELENGTH};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Manifold {
    Lower,
    Upper,
}

/// A fine-structure level `J` with its Zeeman sublevels.
#[derive(Clone, Debug, PartialEq)]
pub struct Level {
    pub name: String,
    pub j: HalfInt,
    pub g: f64,
    /// Angular frequency (rad/s) relative to the scheme reference.
    pub energy_offset: f64,
    pub manifold: Manifold,
    /// Sublevels left out of the model (e.g. `M'' = 0` of a 1D Λ system).
    pub excluded: Vec<HalfInt>,
}

impl Level {
    pub fn new(name: impl Into<String>, j: HalfInt, g: f64, manifold: Manifold) -> Self {
        Level {
            name: name.into(),
            j,
            g,
            energy_offset: 0.0,
            manifold,
            excluded: Vec::new(),
        }
    }

    pub fn with_energy_offset(mut self, offset: f64) -> Self {
        self.energy_offset = offset;
        self
    }

    pub fn excluding(mut self, m: HalfInt) -> Self {
        self.excluded.push(m);
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sublevel {
    /// Index into [`LevelScheme::levels`].
    pub level: usize,
    pub j: HalfInt,
    pub m: HalfInt,
    pub g: f64,
    pub energy_offset: f64,
    pub manifold: Manifold,
    pub label: String,
}

impl Sublevel {
    pub fn is_upper(&self) -> bool {
        self.manifold == Manifold::Upper
    }
}

/// Spontaneous decay channel between an upper and a lower level.
#[derive(Clone, Debug, PartialEq)]
pub struct RadiativeLink {
    pub name: String,
    pub upper: String,
    pub lower: String,
    /// Total decay rate Γ of the upper level (s⁻¹).
    pub gamma_total: f64,
    pub wavelength: f64,
    /// Fraction of upper-level decays that end in this lower level. `None`
    /// derives it from the line strengths of all links leaving the upper level.
    pub branching: Option<f64>,
}

/// One sublevel pair driven through a link, with the dipole strength an
/// absorbed photon of helicity `p` sees.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Coupling {
    pub upper: usize,
    pub lower: usize,
    pub p: i32,
    /// `b · |⟨J'' M'', 1 p | J' M'⟩|²` where `b` is the manifold branching.
    pub strength: f64,
}

#[derive(Clone, Debug)]
pub struct LevelScheme {
    name: String,
    levels: Vec<Level>,
    sublevels: Vec<Sublevel>,
    links: Vec<RadiativeLink>,
    /// Resolved manifold branching per link.
    branching: Vec<f64>,
    couplings: Vec<Vec<Coupling>>,
    /// `decay[i][j]`: spontaneous rate Γᵢⱼ from sublevel `i` to sublevel `j`.
    decay: Vec<Vec<f64>>,
    /// Wavenumber of photons emitted into each lower sublevel.
    emission_k: Vec<f64>,
    /// Problems found while assembling (unresolved levels and the like).
    build_issues: Vec<String>,
}

fn m_label(m: HalfInt) -> String {
    if m.twice() > 0 {
        format!("+{m}")
    } else {
        m.to_string()
    }
}

impl LevelScheme {
    /// Assembles a scheme. Structural defects do not fail construction; they
    /// are reported by [`validate`].
    pub fn new(name: impl Into<String>, levels: Vec<Level>, links: Vec<RadiativeLink>) -> Self {
        let mut build_issues = Vec::new();
        let mut sublevels = Vec::new();
        for (li, level) in levels.iter().enumerate() {
            for m in level.j.projections() {
                if level.excluded.contains(&m) {
                    continue;
                }
                sublevels.push(Sublevel {
                    level: li,
                    j: level.j,
                    m,
                    g: level.g,
                    energy_offset: level.energy_offset,
                    manifold: level.manifold,
                    label: format!("{} M={}", level.name, m_label(m)),
                });
            }
        }
        let n = sublevels.len();
        let find = |name: &str| levels.iter().position(|l| l.name == name);

        // Manifold branching from the emission-direction line strengths: the
        // total strength from a fixed upper sublevel into level J'' is
        // (2J''+1)/(2J'+1), so links share decays in proportion to 2J''+1.
        let mut branching = Vec::with_capacity(links.len());
        for link in &links {
            let b = match link.branching {
                Some(b) => b,
                None => {
                    let weight = |l: &RadiativeLink| {
                        find(&l.lower).map_or(0.0, |k| f64::from(levels[k].j.twice() + 1))
                    };
                    let total: f64 = links.iter().filter(|l| l.upper == link.upper).map(weight).sum();
                    if total > 0.0 {
                        weight(link) / total
                    } else {
                        0.0
                    }
                }
            };
            branching.push(b);
        }

        let mut couplings = vec![Vec::new(); links.len()];
        let mut emission_k = vec![0.0; n];
        let mut decay = vec![vec![0.0; n]; n];
        for (k, link) in links.iter().enumerate() {
            let (Some(up), Some(low)) = (find(&link.upper), find(&link.lower)) else {
                for name in [&link.upper, &link.lower] {
                    if find(name).is_none() {
                        build_issues.push(format!(
                            "closure violation: link `{}` refers to absent level `{}`",
                            link.name, name
                        ));
                    }
                }
                continue;
            };
            let uppers: Vec<usize> = (0..n).filter(|&i| sublevels[i].level == up).collect();
            let lowers: Vec<usize> = (0..n).filter(|&j| sublevels[j].level == low).collect();
            for &j in &lowers {
                if emission_k[j] == 0.0 && link.wavelength > 0.0 {
                    emission_k[j] = crate::units::wavenumber(link.wavelength);
                }
            }
            for &i in &uppers {
                let mut raw = Vec::new();
                for &j in &lowers {
                    let p2 = sublevels[i].m.twice() - sublevels[j].m.twice();
                    if p2.abs() > 2 {
                        continue;
                    }
                    let p = p2 / 2;
                    match line_strength(sublevels[j].j, sublevels[j].m, p, sublevels[i].j, sublevels[i].m) {
                        Ok(f) if f > 0.0 => raw.push((j, p, f)),
                        Ok(_) => {}
                        Err(e) => build_issues.push(format!("link `{}`: {e}", link.name)),
                    }
                }
                let kept: f64 = raw.iter().map(|r| r.2).sum();
                for &(j, p, f) in &raw {
                    couplings[k].push(Coupling {
                        upper: i,
                        lower: j,
                        p,
                        strength: branching[k] * f,
                    });
                    // Renormalise over the sublevels kept in the model.
                    decay[i][j] += link.gamma_total * branching[k] * f / kept;
                }
            }
        }

        LevelScheme {
            name: name.into(),
            levels,
            sublevels,
            links,
            branching,
            couplings,
            decay,
            emission_k,
            build_issues,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn sublevels(&self) -> &[Sublevel] {
        &self.sublevels
    }

    pub fn len(&self) -> usize {
        self.sublevels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sublevels.is_empty()
    }

    pub fn links(&self) -> &[RadiativeLink] {
        &self.links
    }

    pub fn link_index(&self, name: &str) -> Option<usize> {
        self.links.iter().position(|l| l.name == name)
    }

    pub fn level_index(&self, name: &str) -> Option<usize> {
        self.levels.iter().position(|l| l.name == name)
    }

    /// Resolved manifold branching fraction of link `k`.
    pub fn branching(&self, k: usize) -> f64 {
        self.branching[k]
    }

    pub fn couplings(&self, link: usize) -> &[Coupling] {
        &self.couplings[link]
    }

    /// Spontaneous rate Γᵢⱼ (s⁻¹).
    pub fn decay_rate(&self, i: usize, j: usize) -> f64 {
        self.decay[i][j]
    }

    pub fn decay_rates(&self) -> &[Vec<f64>] {
        &self.decay
    }

    /// Wavenumber of a photon emitted in a decay that ends in lower sublevel `j`.
    pub fn emission_wavenumber(&self, j: usize) -> f64 {
        self.emission_k[j]
    }

    /// Total spontaneous rate out of sublevel `i`.
    pub fn total_decay(&self, i: usize) -> f64 {
        self.decay[i].iter().sum()
    }

    /// Largest Γ among the links.
    pub fn gamma_max(&self) -> f64 {
        self.links.iter().map(|l| l.gamma_total).fold(0.0, f64::max)
    }

    /// Overrides a single spontaneous rate; used to build defective schemes
    /// when exercising [`validate`].
    pub fn with_decay_rate(mut self, i: usize, j: usize, rate: f64) -> Self {
        self.decay[i][j] = rate;
        self
    }

    /// Returns an error listing the diagnostics unless the scheme is valid.
    pub fn validated(self) -> Result<Self> {
        let diagnostics = validate(&self);
        if diagnostics.is_empty() {
            Ok(self)
        } else {
            Err(Error::InvalidScheme(diagnostics))
        }
    }

    pub fn sublevel_labels(&self) -> Vec<String> {
        self.sublevels.iter().map(|s| s.label.clone()).collect()
    }

    /// Copy of the scheme with the Landé factor of one level replaced.
    pub fn with_g_factor(&self, level: &str, g: f64) -> Result<Self> {
        let mut levels = self.levels.clone();
        let l = levels
            .iter_mut()
            .find(|l| l.name == level)
            .ok_or_else(|| Error::config("scheme.g_factors", format!("no level named `{level}`")))?;
        l.g = g;
        Ok(LevelScheme::new(self.name.clone(), levels, self.links.clone()))
    }
}

/// Lists every violated scheme invariant; empty for a valid scheme.
pub fn validate(scheme: &LevelScheme) -> Vec<String> {
    let mut out = scheme.build_issues.clone();
    for level in &scheme.levels {
        if !level.g.is_finite() {
            out.push(format!("level `{}` has no finite g-factor", level.name));
        }
        if level.j.twice() < 0 {
            out.push(format!("level `{}` has negative J", level.name));
        }
        for m in &level.excluded {
            if m.twice().abs() > level.j.twice() || (level.j.twice() - m.twice()) % 2 != 0 {
                out.push(format!("level `{}` excludes M={} which is not a sublevel", level.name, m));
            }
        }
    }
    for link in &scheme.links {
        if let Some(k) = scheme.level_index(&link.upper) {
            if scheme.levels[k].manifold != Manifold::Upper {
                out.push(format!("link `{}`: `{}` is not an upper level", link.name, link.upper));
            }
        }
        if let Some(k) = scheme.level_index(&link.lower) {
            if scheme.levels[k].manifold != Manifold::Lower {
                out.push(format!("link `{}`: `{}` is not a lower level", link.name, link.lower));
            }
        }
        if !(link.gamma_total > 0.0 && link.gamma_total.is_finite()) {
            out.push(format!("link `{}`: decay rate must be positive", link.name));
        }
        if !(link.wavelength > 0.0 && link.wavelength.is_finite()) {
            out.push(format!("link `{}`: wavelength must be positive", link.name));
        }
    }
    for (li, level) in scheme.levels.iter().enumerate() {
        if level.manifold != Manifold::Upper {
            continue;
        }
        let gammas: Vec<f64> = scheme
            .links
            .iter()
            .filter(|l| l.upper == level.name)
            .map(|l| l.gamma_total)
            .collect();
        if gammas.is_empty() {
            out.push(format!("upper level `{}` has no radiative link", level.name));
            continue;
        }
        let gamma = gammas[0];
        if gammas.iter().any(|&g| (g - gamma).abs() > 1e-12 * gamma) {
            out.push(format!("links leaving `{}` disagree on the total decay rate", level.name));
        }
        for (i, s) in scheme.sublevels.iter().enumerate() {
            if s.level != li {
                continue;
            }
            let sum = scheme.total_decay(i) / gamma;
            if (sum - 1.0).abs() > 1e-12 {
                out.push(format!("branching sum {sum:.6} ≠ 1 for {}", s.label));
            }
        }
    }
    for (i, row) in scheme.decay.iter().enumerate() {
        for (j, &rate) in row.iter().enumerate() {
            if rate == 0.0 {
                continue;
            }
            if rate < 0.0 || !rate.is_finite() {
                out.push(format!("negative or non-finite decay rate {rate} from sublevel {i} to {j}"));
            }
            if !scheme.sublevels[i].is_upper() || scheme.sublevels[j].is_upper() {
                out.push(format!(
                    "closure violation: decay {} → {} does not go from an upper to a lower sublevel",
                    scheme.sublevels[i].label, scheme.sublevels[j].label
                ));
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemePreset {
    /// J''=0 → J'=1, the standard type-I MOT transition.
    #[serde(rename = "type1_0to1")]
    Type1ZeroToOne,
    /// J''=1 → J'=0 restricted to M''=±1.
    #[serde(rename = "lambda_1to0")]
    Lambda1To0,
    /// J''=1 → J'=0 with all three lower sublevels.
    #[serde(rename = "lambda_1to0_with_M0")]
    Lambda1To0WithM0,
    #[serde(rename = "j_half_to_half")]
    JHalfToHalf,
    #[serde(rename = "c2minus_i")]
    C2MinusI,
    #[serde(rename = "c2minus_ii")]
    C2MinusII,
    #[serde(rename = "c2minus_iii")]
    C2MinusIII,
}

impl SchemePreset {
    pub const ALL: [SchemePreset; 7] = [
        SchemePreset::Type1ZeroToOne,
        SchemePreset::Lambda1To0,
        SchemePreset::Lambda1To0WithM0,
        SchemePreset::JHalfToHalf,
        SchemePreset::C2MinusI,
        SchemePreset::C2MinusII,
        SchemePreset::C2MinusIII,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchemePreset::Type1ZeroToOne => "type1_0to1",
            SchemePreset::Lambda1To0 => "lambda_1to0",
            SchemePreset::Lambda1To0WithM0 => "lambda_1to0_with_M0",
            SchemePreset::JHalfToHalf => "j_half_to_half",
            SchemePreset::C2MinusI => "c2minus_i",
            SchemePreset::C2MinusII => "c2minus_ii",
            SchemePreset::C2MinusIII => "c2minus_iii",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            SchemePreset::Type1ZeroToOne => "J''=0 -> J'=1, g'=-1, g''=0 (type-I reference)",
            SchemePreset::Lambda1To0 => "J''=1 -> J'=0, M''=0 omitted, g''=-1, g'=0 (1D runs)",
            SchemePreset::Lambda1To0WithM0 => "J''=1 -> J'=0 with M''=0, g''=-1, g'=0 (3D runs)",
            SchemePreset::JHalfToHalf => "J''=1/2 -> J'=1/2, g''=1, g'=0",
            SchemePreset::C2MinusI | SchemePreset::C2MinusII | SchemePreset::C2MinusIII => {
                "C2- X(N''=0,J''=1/2), X(N''=2,J''=3/2) <- B(N'=1,J'=1/2), 541 nm, 75 ns"
            }
        }
    }

    pub fn is_c2minus(self) -> bool {
        matches!(self, SchemePreset::C2MinusI | SchemePreset::C2MinusII | SchemePreset::C2MinusIII)
    }
}

impl FromStr for SchemePreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SchemePreset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::UnknownPreset(s.to_string()))
    }
}

impl fmt::Display for SchemePreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Transition constants shared by the presets.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransitionParams {
    pub gamma: f64,
    pub wavelength: f64,
}

impl Default for TransitionParams {
    fn default() -> Self {
        TransitionParams {
            gamma: 1.0 / C2MINUS_LIFETIME,
            wavelength: C2MINUS_WAVELENGTH,
        }
    }
}

/// Hund's case (b) Landé factor of a ²Σ rotational level, `g_S = 2`.
pub fn hund_b_g_factor(j: HalfInt, n: i32) -> f64 {
    let (j, s, n) = (j.value(), 0.5, f64::from(n));
    2.0 * (j * (j + 1.0) + s * (s + 1.0) - n * (n + 1.0)) / (2.0 * j * (j + 1.0))
}

pub const C2_LOWER_HALF: &str = "X(N=0,J=1/2)";
pub const C2_LOWER_THREE_HALF: &str = "X(N=2,J=3/2)";
pub const C2_UPPER: &str = "B(N=1,J=1/2)";
pub const C2_LINK_HALF: &str = "J1/2";
pub const C2_LINK_THREE_HALF: &str = "J3/2";
/// Name of the single link in the one-transition presets.
pub const MAIN_LINK: &str = "main";

/// Builds a preset with the default C₂⁻-band transition constants.
pub fn build_preset(preset: SchemePreset) -> Result<LevelScheme> {
    build_preset_with(preset, TransitionParams::default())
}

pub fn build_preset_with(preset: SchemePreset, tp: TransitionParams) -> Result<LevelScheme> {
    let link = |name: &str, upper: &str, lower: &str| RadiativeLink {
        name: name.to_string(),
        upper: upper.to_string(),
        lower: lower.to_string(),
        gamma_total: tp.gamma,
        wavelength: tp.wavelength,
        branching: None,
    };
    let single = |lower: Level, upper: Level| {
        let l = link(MAIN_LINK, &upper.name, &lower.name);
        LevelScheme::new(preset.name(), vec![lower, upper], vec![l])
    };
    let scheme = match preset {
        SchemePreset::Type1ZeroToOne => single(
            Level::new("g(J=0)", HalfInt::ZERO, 0.0, Manifold::Lower),
            Level::new("e(J=1)", HalfInt::ONE, -1.0, Manifold::Upper),
        ),
        SchemePreset::Lambda1To0 => single(
            Level::new("g(J=1)", HalfInt::ONE, -1.0, Manifold::Lower).excluding(HalfInt::ZERO),
            Level::new("e(J=0)", HalfInt::ZERO, 0.0, Manifold::Upper),
        ),
        SchemePreset::Lambda1To0WithM0 => single(
            Level::new("g(J=1)", HalfInt::ONE, -1.0, Manifold::Lower),
            Level::new("e(J=0)", HalfInt::ZERO, 0.0, Manifold::Upper),
        ),
        SchemePreset::JHalfToHalf => single(
            Level::new("g(J=1/2)", HalfInt::HALF, 1.0, Manifold::Lower),
            Level::new("e(J=1/2)", HalfInt::HALF, 0.0, Manifold::Upper),
        ),
        SchemePreset::C2MinusI | SchemePreset::C2MinusII | SchemePreset::C2MinusIII => {
            let three_half = HalfInt::from_twice(3);
            // The rotational splitting only labels the manifolds: detunings
            // are always quoted against a beam's own target link.
            let splitting = 1.0e4 * tp.gamma;
            let levels = vec![
                Level::new(C2_LOWER_HALF, HalfInt::HALF, hund_b_g_factor(HalfInt::HALF, 0), Manifold::Lower),
                Level::new(C2_LOWER_THREE_HALF, three_half, hund_b_g_factor(three_half, 2), Manifold::Lower)
                    .with_energy_offset(splitting),
                Level::new(C2_UPPER, HalfInt::HALF, 0.0, Manifold::Upper),
            ];
            let links = vec![
                link(C2_LINK_HALF, C2_UPPER, C2_LOWER_HALF),
                link(C2_LINK_THREE_HALF, C2_UPPER, C2_LOWER_THREE_HALF),
            ];
            LevelScheme::new(preset.name(), levels, links)
        }
    };
    scheme.validated()
}
