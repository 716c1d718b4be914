//! Run configuration documents.
//!
//! A document is JSON. Quantities are given in laboratory units (nm, ns,
//! mW/cm², G/cm, mm, m/s, amu) or in units of Γ, and are resolved to SI by
//! [`RunConfig::from_document`]. The canonical serialization of a document
//! (without `jobs` and `output`) is hashed into every output file.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::Vector3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::angular::HalfInt;
use crate::error::{Error, Result};
use crate::fields::{
    polarization_components, polarization_vector, reference_axis, FieldKind, LaserBeam, MagneticFieldMap,
    PolarizationPreset, Schedule,
};
use crate::kmc::{switched_setup, Duration, KmcOptions};
use crate::presets::{self, C2Scheme};
use crate::rng::point_key;
use crate::scheme::{
    build_preset, build_preset_with, LevelScheme, Manifold, RadiativeLink, SchemePreset, TransitionParams,
};
use crate::setup::Setup;
use crate::sweep::{linspace, MapAxis, Method, SweepGrid};
use crate::units::{
    saturation_intensity, wavenumber, ATOMIC_MASS_UNIT, C2MINUS_MASS_AMU,
    GAUSS_PER_CM, MW_PER_CM2, STANDARD_GRAVITY,
};

/// Prefix of the header line that carries the embedded config in CSV output.
pub const EMBEDDED_PREFIX: &str = "# config: ";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Force maps over the `maps` grids.
    #[default]
    Sweep,
    /// Full force vectors at the listed phase-space `points`.
    Point,
    /// Sampled Monte Carlo trajectories.
    Trajectory,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    #[default]
    Steady,
    Kmc,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDocument {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub method: MethodKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kmc: Option<KmcSpec>,
    pub cases: Vec<CaseSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub maps: Vec<MapSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub points: Vec<PointSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<TrajectorySpec>,
    /// Output directory. Not part of the hash.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    /// Worker threads. Not part of the hash.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
}

fn default_n_traj() -> usize {
    1000
}

fn default_burn_in() -> f64 {
    200.0
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KmcSpec {
    #[serde(default = "default_n_traj")]
    pub n_traj: usize,
    /// Evolution time in units of 1/Γ; absent or null selects the automatic rule.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_gamma: Option<f64>,
    #[serde(default = "default_burn_in")]
    pub burn_in_gamma: f64,
}

impl Default for KmcSpec {
    fn default() -> Self {
        KmcSpec {
            n_traj: default_n_traj(),
            duration_gamma: None,
            burn_in_gamma: default_burn_in(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseSpec {
    pub name: String,
    pub scheme: SchemeSpec,
    pub mass_amu: f64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub gravity: bool,
    pub field: FieldSpec,
    pub beams: Vec<BeamSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub switching: Option<SwitchingSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SchemeSpec {
    Preset(String),
    Tuned(TunedPreset),
    Custom(CustomScheme),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TunedPreset {
    pub preset: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub g_factors: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wavelength_nm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lifetime_ns: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomScheme {
    pub name: String,
    pub levels: Vec<LevelSpec>,
    pub links: Vec<LinkSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelSpec {
    pub name: String,
    pub j: HalfInt,
    pub g: f64,
    pub manifold: Manifold,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub excluded: Vec<HalfInt>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    pub name: String,
    pub upper: String,
    pub lower: String,
    pub wavelength_nm: f64,
    pub lifetime_ns: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub branching: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    pub kind: FieldKind,
    pub gradient_g_per_cm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub direction: DirectionSpec,
    pub polarization: PolarizationSpec,
    /// A number (units of Γ of the target link) or a string with a unit:
    /// `"-1 Gamma"`, `"-13.3 MHz"` (cyclic), `"-8.4e7 rad/s"`.
    pub detuning: Quantity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub saturation: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intensity_mw_cm2: Option<f64>,
    /// Target link name; defaults to the first link of the scheme.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub link: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<ScheduleSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DirectionSpec {
    /// `"+x"`, `"-z"`, ...
    Axis(String),
    Vector([f64; 3]),
    Angles { theta_deg: f64, phi_deg: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PolarizationSpec {
    /// `"sigma+"`, `"sigma-"`, `"pi"`, optionally `"_along_<axis>"`.
    Named(String),
    /// Lab-frame components `[re, im]` for x, y, z.
    Jones { jones: [[f64; 2]; 3] },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Quantity {
    Number(f64),
    Text(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    pub period_gamma: f64,
    #[serde(default)]
    pub offset_gamma: f64,
    pub on_gamma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwitchingSpec {
    pub period_gamma: f64,
    /// Labels of the beams on during the first half-period.
    pub first: Vec<String>,
    #[serde(default = "yes")]
    pub preserve_average: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GridUnit {
    #[serde(rename = "mm")]
    Millimetre,
    #[serde(rename = "m")]
    Metre,
    /// Position whose Zeeman shift μ_B b′ z/ħ is the given multiple of Γ.
    #[serde(rename = "zeeman_gamma")]
    ZeemanGamma,
    #[serde(rename = "m/s")]
    MetrePerSecond,
    /// Velocity whose Doppler shift k v is the given multiple of Γ.
    #[serde(rename = "doppler_gamma")]
    DopplerGamma,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    Range {
        from: f64,
        to: f64,
        points: usize,
        unit: GridUnit,
    },
    Values {
        values: Vec<f64>,
        unit: GridUnit,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSpec {
    pub name: String,
    pub axis: MapAxis,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<GridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<GridSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointSpec {
    pub r_mm: [f64; 3],
    pub v_m_s: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectorySpec {
    pub count: usize,
    pub duration_gamma: f64,
    pub stride_gamma: f64,
    pub r_mm: [f64; 3],
    pub v_m_s: [f64; 3],
}

impl ConfigDocument {
    /// Parses JSON, or the config line embedded in a CSV file produced by a
    /// previous run.
    pub fn parse(text: &str) -> Result<Self> {
        let json = embedded_config(text).unwrap_or(text);
        let mut de = serde_json::Deserializer::from_str(json);
        let doc: ConfigDocument = serde_path_to_error::deserialize(&mut de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(path, e.into_inner().to_string())
        })?;
        de.end().map_err(|e| Error::config(".", e.to_string()))?;
        Ok(doc)
    }

    /// Canonical compact JSON without the run-local fields.
    pub fn canonical_json(&self) -> String {
        let mut doc = self.clone();
        doc.output = None;
        doc.jobs = None;
        serde_json::to_string(&doc).expect("config documents always serialize")
    }

    pub fn to_pretty_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config documents always serialize")
    }

    /// SHA-256 of [`Self::canonical_json`], hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }
}

/// The JSON carried on the `# config:` line of a CSV file, if any.
pub fn embedded_config(text: &str) -> Option<&str> {
    text.lines().find_map(|l| l.strip_prefix(EMBEDDED_PREFIX))
}

/// One case resolved to SI.
#[derive(Clone, Debug)]
pub struct CaseRun {
    pub name: String,
    pub setup: Setup,
    pub grids: Vec<(String, SweepGrid)>,
    /// Seed of this case's random streams (derived from the run seed).
    pub seed: u64,
    pub kmc: KmcOptions,
}

impl CaseRun {
    /// Monte Carlo options seeded for this case.
    pub fn kmc_options(&self) -> KmcOptions {
        KmcOptions {
            seed: self.seed,
            ..self.kmc.clone()
        }
    }

    pub fn method(&self, kind: MethodKind, map: usize) -> Method {
        match kind {
            MethodKind::Steady => Method::Steady,
            MethodKind::Kmc => Method::Kmc(KmcOptions {
                seed: point_key(self.seed, map as u64),
                ..self.kmc.clone()
            }),
        }
    }
}

/// A fully resolved run.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub document: ConfigDocument,
    pub hash: String,
    pub cases: Vec<CaseRun>,
    /// `(r, v)` in SI for point mode.
    pub points: Vec<(Vector3<f64>, Vector3<f64>)>,
}

/// Parses and resolves a document.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    RunConfig::from_document(ConfigDocument::parse(text)?)
}

impl RunConfig {
    pub fn from_document(document: ConfigDocument) -> Result<Self> {
        if document.cases.is_empty() {
            return Err(Error::config("cases", "at least one case is required"));
        }
        if document.jobs == Some(0) {
            return Err(Error::config("jobs", "must be at least 1"));
        }
        match document.mode {
            Mode::Sweep if document.maps.is_empty() => {
                return Err(Error::config("maps", "sweep mode needs at least one map"));
            }
            Mode::Point if document.points.is_empty() => {
                return Err(Error::config("points", "point mode needs at least one point"));
            }
            Mode::Trajectory if document.trajectory.is_none() => {
                return Err(Error::config("trajectory", "trajectory mode needs a `trajectory` block"));
            }
            _ => {}
        }
        let kmc = document.kmc.clone().unwrap_or_default();
        if kmc.n_traj == 0 {
            return Err(Error::config("kmc.n_traj", "must be at least 1"));
        }
        if let Some(t) = kmc.duration_gamma {
            positive("kmc.duration_gamma", t)?;
        }
        if !(kmc.burn_in_gamma >= 0.0 && kmc.burn_in_gamma.is_finite()) {
            return Err(Error::config("kmc.burn_in_gamma", "must be finite and ≥ 0"));
        }
        let mut names = std::collections::HashSet::new();
        let mut cases = Vec::with_capacity(document.cases.len());
        for (c, spec) in document.cases.iter().enumerate() {
            let path = format!("cases[{c}]");
            if !names.insert(spec.name.as_str()) {
                return Err(Error::config(format!("{path}.name"), format!("duplicate case `{}`", spec.name)));
            }
            let setup = resolve_case(spec, &path)?;
            let gamma = setup.gamma();
            let mut grids = Vec::with_capacity(document.maps.len());
            for (m, map) in document.maps.iter().enumerate() {
                grids.push((map.name.clone(), resolve_map(map, &setup, &format!("maps[{m}]"))?));
            }
            cases.push(CaseRun {
                name: spec.name.clone(),
                seed: point_key(document.seed, c as u64),
                kmc: KmcOptions {
                    n_traj: kmc.n_traj,
                    duration: kmc.duration_gamma.map_or(Duration::Auto, |t| Duration::Fixed(t / gamma)),
                    burn_in: kmc.burn_in_gamma / gamma,
                    seed: document.seed,
                },
                setup,
                grids,
            });
        }
        let points = document
            .points
            .iter()
            .map(|p| (Vector3::from(p.r_mm) * 1e-3, Vector3::from(p.v_m_s)))
            .collect();
        if let Some(t) = &document.trajectory {
            positive("trajectory.duration_gamma", t.duration_gamma)?;
            positive("trajectory.stride_gamma", t.stride_gamma)?;
            if t.count == 0 {
                return Err(Error::config("trajectory.count", "must be at least 1"));
            }
        }
        let hash = document.hash();
        Ok(RunConfig {
            document,
            hash,
            cases,
            points,
        })
    }
}

fn positive(path: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::config(path, format!("must be positive and finite, got {x}")))
    }
}

fn with_path(path: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::Config { .. } => e,
        other => Error::config(path, other.to_string()),
    }
}

fn resolve_scheme(spec: &SchemeSpec, path: &str) -> Result<LevelScheme> {
    match spec {
        SchemeSpec::Preset(name) => name.parse::<SchemePreset>().and_then(build_preset),
        SchemeSpec::Tuned(t) => {
            let preset: SchemePreset = t.preset.parse()?;
            let mut tp = TransitionParams::default();
            if let Some(nm) = t.wavelength_nm {
                positive(&format!("{path}.wavelength_nm"), nm)?;
                tp.wavelength = nm * 1e-9;
            }
            if let Some(ns) = t.lifetime_ns {
                positive(&format!("{path}.lifetime_ns"), ns)?;
                tp.gamma = 1.0 / (ns * 1e-9);
            }
            let mut scheme = build_preset_with(preset, tp)?;
            for (level, g) in &t.g_factors {
                scheme = scheme.with_g_factor(level, *g).map_err(|_| {
                    Error::config(format!("{path}.g_factors.{level}"), format!("no level named `{level}`"))
                })?;
            }
            scheme.validated()
        }
        SchemeSpec::Custom(c) => {
            let levels = c
                .levels
                .iter()
                .map(|l| {
                    let mut level = crate::scheme::Level::new(l.name.clone(), l.j, l.g, l.manifold);
                    level.excluded = l.excluded.clone();
                    level
                })
                .collect();
            let mut links = Vec::with_capacity(c.links.len());
            for (i, l) in c.links.iter().enumerate() {
                positive(&format!("{path}.links[{i}].wavelength_nm"), l.wavelength_nm)?;
                positive(&format!("{path}.links[{i}].lifetime_ns"), l.lifetime_ns)?;
                links.push(RadiativeLink {
                    name: l.name.clone(),
                    upper: l.upper.clone(),
                    lower: l.lower.clone(),
                    gamma_total: 1.0 / (l.lifetime_ns * 1e-9),
                    wavelength: l.wavelength_nm * 1e-9,
                    branching: l.branching,
                });
            }
            LevelScheme::new(c.name.clone(), levels, links).validated()
        }
    }
    .map_err(with_path(path))
}

fn axis_vector(s: &str) -> Option<Vector3<f64>> {
    let (sign, axis) = match s.as_bytes() {
        [b'+', a] => (1.0, *a),
        [b'-', a] => (-1.0, *a),
        [a] => (1.0, *a),
        _ => return None,
    };
    let v = match axis {
        b'x' => Vector3::x(),
        b'y' => Vector3::y(),
        b'z' => Vector3::z(),
        _ => return None,
    };
    Some(v * sign)
}

fn resolve_direction(spec: &DirectionSpec, path: &str) -> Result<Vector3<f64>> {
    match spec {
        DirectionSpec::Axis(s) => {
            axis_vector(s).ok_or_else(|| Error::config(path, format!("`{s}` is not an axis like \"+z\"")))
        }
        DirectionSpec::Vector(v) => Ok(Vector3::from(*v)),
        DirectionSpec::Angles { theta_deg, phi_deg } => {
            let (t, p) = (theta_deg.to_radians(), phi_deg.to_radians());
            Ok(Vector3::new(t.sin() * p.cos(), t.sin() * p.sin(), t.cos()))
        }
    }
}

fn named_polarization(name: &str) -> Option<PolarizationPreset> {
    match name {
        "sigma+" => Some(PolarizationPreset::SigmaPlus),
        "sigma-" => Some(PolarizationPreset::SigmaMinus),
        "pi" => Some(PolarizationPreset::PiLinear),
        _ => None,
    }
}

/// Parses `"<number> <unit>"` detunings into rad/s.
pub fn detuning_rad_s(q: &Quantity, gamma: f64, path: &str) -> Result<f64> {
    let value = match q {
        Quantity::Number(x) => x * gamma,
        Quantity::Text(s) => {
            let s = s.trim();
            let split = s
                .find(|c: char| c.is_whitespace())
                .ok_or_else(|| Error::config(path, format!("`{s}` has no unit")))?;
            let (num, unit) = s.split_at(split);
            let x: f64 = num
                .parse()
                .map_err(|_| Error::config(path, format!("`{num}` is not a number")))?;
            match unit.trim() {
                "Gamma" | "Γ" => x * gamma,
                "MHz" => x * 2.0 * PI * 1e6,
                "rad/s" => x,
                other => {
                    return Err(Error::config(
                        path,
                        format!("unknown detuning unit `{other}` (use Gamma, MHz or rad/s)"),
                    ))
                }
            }
        }
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::config(path, "detuning must be finite"))
    }
}

fn resolve_beam(spec: &BeamSpec, scheme: &LevelScheme, index: usize, path: &str) -> Result<LaserBeam> {
    let link = match &spec.link {
        Some(name) => scheme
            .link_index(name)
            .ok_or_else(|| Error::config(format!("{path}.link"), format!("scheme has no link `{name}`")))?,
        None => 0,
    };
    let radiative = &scheme.links()[link];
    let gamma = radiative.gamma_total;
    let direction = resolve_direction(&spec.direction, &format!("{path}.direction"))?;
    let detuning = detuning_rad_s(&spec.detuning, gamma, &format!("{path}.detuning"))?;
    let saturation = match (spec.saturation, spec.intensity_mw_cm2) {
        (Some(s), None) => s,
        (None, Some(i)) => i * MW_PER_CM2 / saturation_intensity(gamma, radiative.wavelength),
        _ => {
            return Err(Error::config(
                path,
                "give exactly one of `saturation` and `intensity_mw_cm2`",
            ))
        }
    };
    let k = wavenumber(radiative.wavelength);
    let pol_path = format!("{path}.polarization");
    let beam = match &spec.polarization {
        PolarizationSpec::Named(name) => {
            let (base, axis) = match name.split_once("_along_") {
                Some((base, axis)) => {
                    let a = axis_vector(axis)
                        .ok_or_else(|| Error::config(&pol_path, format!("`{axis}` is not an axis")))?;
                    (base, Some(a))
                }
                None => (name.as_str(), None),
            };
            let preset = named_polarization(base).ok_or_else(|| {
                Error::config(&pol_path, format!("unknown polarization `{base}` (sigma+, sigma-, pi)"))
            })?;
            match axis {
                None => LaserBeam::with_preset(direction, k, detuning, saturation, preset, link),
                Some(a) => {
                    LaserBeam::new(direction, k, detuning, saturation, polarization_vector(preset, &a), link)
                }
            }
        }
        PolarizationSpec::Jones { jones } => {
            let e = Vector3::from_fn(|i, _| Complex64::new(jones[i][0], jones[i][1]));
            LaserBeam::new(direction, k, detuning, saturation, e, link)
        }
    }
    .map_err(with_path(path))?;
    let mut beam = beam.labelled(spec.label.clone().unwrap_or_else(|| format!("beam{index}")));
    if let Some(s) = &spec.schedule {
        positive(&format!("{path}.schedule.period_gamma"), s.period_gamma)?;
        if !(s.on_gamma >= 0.0 && s.offset_gamma.is_finite()) {
            return Err(Error::config(format!("{path}.schedule"), "on time must be ≥ 0 and offset finite"));
        }
        let gamma_ref = scheme.gamma_max();
        beam = beam.scheduled(Schedule {
            period: s.period_gamma / gamma_ref,
            offset: s.offset_gamma / gamma_ref,
            on_duration: s.on_gamma / gamma_ref,
        });
    }
    Ok(beam)
}

fn resolve_case(spec: &CaseSpec, path: &str) -> Result<Setup> {
    let scheme = resolve_scheme(&spec.scheme, &format!("{path}.scheme"))?;
    positive(&format!("{path}.mass_amu"), spec.mass_amu)?;
    if !spec.field.gradient_g_per_cm.is_finite() {
        return Err(Error::config(format!("{path}.field.gradient_g_per_cm"), "must be finite"));
    }
    let gradient = spec.field.gradient_g_per_cm * GAUSS_PER_CM;
    let field = match spec.field.kind {
        FieldKind::Linear1d => MagneticFieldMap::linear_1d(gradient),
        FieldKind::Quadrupole3d => MagneticFieldMap::quadrupole_3d(gradient),
    };
    let mut beams = Vec::with_capacity(spec.beams.len());
    for (i, b) in spec.beams.iter().enumerate() {
        beams.push(resolve_beam(b, &scheme, i, &format!("{path}.beams[{i}]"))?);
    }
    let mut labels = std::collections::HashSet::new();
    for (i, b) in beams.iter().enumerate() {
        if !labels.insert(b.label.as_str()) {
            return Err(Error::config(
                format!("{path}.beams[{i}].label"),
                format!("duplicate beam label `{}`", b.label),
            ));
        }
    }
    let mut setup = Setup::new(scheme, beams, field, spec.mass_amu * ATOMIC_MASS_UNIT);
    if spec.gravity {
        setup.gravity = Some(Vector3::new(0.0, 0.0, -STANDARD_GRAVITY));
    }
    if let Some(sw) = &spec.switching {
        let sw_path = format!("{path}.switching");
        positive(&format!("{sw_path}.period_gamma"), sw.period_gamma)?;
        let mut first = Vec::with_capacity(sw.first.len());
        for (i, label) in sw.first.iter().enumerate() {
            first.push(setup.beams.iter().position(|b| &b.label == label).ok_or_else(|| {
                Error::config(format!("{sw_path}.first[{i}]"), format!("no beam labelled `{label}`"))
            })?);
        }
        if setup.beams.iter().any(|b| b.schedule.is_some()) {
            return Err(Error::config(sw_path, "beams with their own schedule cannot also be switched"));
        }
        setup = switched_setup(&setup, &first, sw.period_gamma / setup.gamma(), sw.preserve_average)?;
    }
    Ok(setup)
}

fn resolve_grid(spec: &GridSpec, setup: &Setup, position: bool, path: &str) -> Result<Vec<f64>> {
    let (raw, unit) = match spec {
        GridSpec::Range { from, to, points, unit } => {
            if *points == 0 {
                return Err(Error::config(format!("{path}.points"), "must be at least 1"));
            }
            (linspace(*from, *to, *points), *unit)
        }
        GridSpec::Values { values, unit } => (values.clone(), *unit),
    };
    let scale = match (unit, position) {
        (GridUnit::Millimetre, true) => 1e-3,
        (GridUnit::Metre, true) => 1.0,
        (GridUnit::ZeemanGamma, true) => {
            if setup.field.gradient == 0.0 {
                return Err(Error::config(format!("{path}.unit"), "zeeman_gamma needs a nonzero gradient"));
            }
            setup.zeeman_position(1.0)
        }
        (GridUnit::MetrePerSecond, false) => 1.0,
        (GridUnit::DopplerGamma, false) => setup.doppler_velocity(1.0),
        (u, _) => {
            let what = if position { "position" } else { "velocity" };
            return Err(Error::config(format!("{path}.unit"), format!("{u:?} is not a {what} unit")));
        }
    };
    Ok(raw.into_iter().map(|x| x * scale).collect())
}

fn resolve_map(spec: &MapSpec, setup: &Setup, path: &str) -> Result<SweepGrid> {
    let need = |g: &Option<GridSpec>, which: &str| {
        g.clone()
            .ok_or_else(|| Error::config(format!("{path}.{which}"), format!("axis {} needs a `{which}` grid", spec.axis.name())))
    };
    let remap = |e: Error| match e {
        Error::Config { path: p, message } => Error::config(format!("{path}.{p}"), message),
        other => other,
    };
    match spec.axis {
        MapAxis::ZAtV0 => {
            let z = resolve_grid(&need(&spec.z, "z")?, setup, true, &format!("{path}.z"))?;
            SweepGrid::z_axis(z).map_err(remap)
        }
        MapAxis::VAtZ0 => {
            let v = resolve_grid(&need(&spec.v, "v")?, setup, false, &format!("{path}.v"))?;
            SweepGrid::v_axis(v).map_err(remap)
        }
        MapAxis::FullGrid => {
            let z = resolve_grid(&need(&spec.z, "z")?, setup, true, &format!("{path}.z"))?;
            let v = resolve_grid(&need(&spec.v, "v")?, setup, false, &format!("{path}.v"))?;
            SweepGrid::full(z, v).map_err(remap)
        }
    }
}

// Preset documents.

/// Named preset documents with one-line descriptions.
pub const PRESET_DOCUMENTS: [(&str, &str); 9] = [
    ("type1", "type-I J''=0 -> J'=1 reference MOT, trap and cooling maps"),
    ("fig2", "Lambda bichromatic MOT vs type-I reference, trap and cooling maps (4 files)"),
    ("fig2_kmc", "Lambda bichromatic MOT, 1D Monte Carlo maps"),
    ("fig2_3d", "Lambda bichromatic 3D MOT (12 beams), Monte Carlo maps"),
    ("fig3", "Lambda bichromatic MOT for second-pair detunings -1, 0, +1 Gamma"),
    ("fig4", "J''=1/2 -> J'=1/2, monochromatic and bichromatic"),
    ("fig6", "C2- schemes (i), (ii), (iii) at 1.8 mW/cm^2 and 10 G/cm"),
    ("switched", "Lambda MOT with the two frequency pairs switched in turn, period 0.01/Gamma"),
    ("lambda_dark", "Lambda with M''=0 and no pi light (dark-state diagnostic)"),
];

fn dimensionless_maps(points: usize) -> Vec<MapSpec> {
    let range = |unit| GridSpec::Range {
        from: -3.0,
        to: 3.0,
        points,
        unit,
    };
    vec![
        MapSpec {
            name: "trap".into(),
            axis: MapAxis::ZAtV0,
            z: Some(range(GridUnit::ZeemanGamma)),
            v: None,
        },
        MapSpec {
            name: "cool".into(),
            axis: MapAxis::VAtZ0,
            z: None,
            v: Some(range(GridUnit::DopplerGamma)),
        },
    ]
}

fn axis_label(d: &Vector3<f64>) -> Option<&'static str> {
    let labels = [("+x", Vector3::x()), ("-x", -Vector3::x()), ("+y", Vector3::y()), ("-y", -Vector3::y()), ("+z", Vector3::z()), ("-z", -Vector3::z())];
    labels.into_iter().find(|(_, a)| (d - a).norm() < 1e-12).map(|(l, _)| l)
}

/// Explicit spec of a beam built in code.
pub fn beam_spec(beam: &LaserBeam, scheme: &LevelScheme) -> BeamSpec {
    let link = &scheme.links()[beam.target_link];
    let w = polarization_components(beam, &reference_axis(&beam.direction));
    let polarization = if (w[2] - 1.0).abs() < 1e-12 {
        PolarizationSpec::Named("sigma+".into())
    } else if (w[0] - 1.0).abs() < 1e-12 {
        PolarizationSpec::Named("sigma-".into())
    } else {
        PolarizationSpec::Jones {
            jones: [0, 1, 2].map(|i| [beam.polarization[i].re, beam.polarization[i].im]),
        }
    };
    BeamSpec {
        label: Some(beam.label.clone()),
        direction: axis_label(&beam.direction)
            .map(|s| DirectionSpec::Axis(s.into()))
            .unwrap_or(DirectionSpec::Vector(beam.direction.into())),
        polarization,
        detuning: Quantity::Number(beam.detuning / link.gamma_total),
        saturation: Some(beam.saturation),
        intensity_mw_cm2: None,
        link: Some(link.name.clone()),
        schedule: beam.schedule.map(|s| ScheduleSpec {
            period_gamma: s.period * scheme.gamma_max(),
            offset_gamma: s.offset * scheme.gamma_max(),
            on_gamma: s.on_duration * scheme.gamma_max(),
        }),
    }
}

fn case(name: &str, preset: SchemePreset, field: FieldKind, beams: &[LaserBeam]) -> CaseSpec {
    let scheme = build_preset(preset).expect("presets are valid");
    CaseSpec {
        name: name.into(),
        scheme: SchemeSpec::Preset(preset.name().into()),
        mass_amu: C2MINUS_MASS_AMU,
        gravity: false,
        field: FieldSpec {
            kind: field,
            gradient_g_per_cm: 10.0,
        },
        beams: beams.iter().map(|b| beam_spec(b, &scheme)).collect(),
        switching: None,
    }
}

fn lambda_bichromatic(preset: SchemePreset, second: f64, three_d: bool) -> Result<Vec<LaserBeam>> {
    let s = build_preset(preset)?;
    let g = s.gamma_max();
    let flip = presets::prefers_flipped(&s, 0);
    if three_d {
        presets::bichromatic_3d_beams(&s, 0, -g, second * g, 1.0, flip)
    } else {
        presets::bichromatic_1d_beams(&s, 0, -g, second * g, 1.0, flip)
    }
}

fn base_document(name: &str, cases: Vec<CaseSpec>, maps: Vec<MapSpec>) -> ConfigDocument {
    ConfigDocument {
        name: name.into(),
        title: PRESET_DOCUMENTS.iter().find(|(n, _)| *n == name).map(|(_, d)| d.to_string()),
        seed: 1,
        mode: Mode::Sweep,
        method: MethodKind::Steady,
        kmc: None,
        cases,
        maps,
        points: Vec::new(),
        trajectory: None,
        output: None,
        jobs: None,
    }
}

fn kmc_document(mut doc: ConfigDocument, n_traj: usize) -> ConfigDocument {
    doc.method = MethodKind::Kmc;
    doc.kmc = Some(KmcSpec {
        n_traj,
        ..KmcSpec::default()
    });
    doc
}

fn type1_case() -> Result<CaseSpec> {
    let s = build_preset(SchemePreset::Type1ZeroToOne)?;
    let g = s.gamma_max();
    let beams = presets::standard_1d_beams(0, wavenumber(s.links()[0].wavelength), -g, 1.0, presets::prefers_flipped(&s, 0))?;
    Ok(case("reference", SchemePreset::Type1ZeroToOne, FieldKind::Linear1d, &beams))
}

/// Builds one of the [`PRESET_DOCUMENTS`].
pub fn preset_document(name: &str) -> Result<ConfigDocument> {
    use FieldKind::{Linear1d, Quadrupole3d};
    use SchemePreset::*;
    let doc = match name {
        "type1" => base_document(name, vec![type1_case()?], dimensionless_maps(61)),
        "fig2" => base_document(
            name,
            vec![
                case("bichromatic", Lambda1To0, Linear1d, &lambda_bichromatic(Lambda1To0, 0.0, false)?),
                type1_case()?,
            ],
            dimensionless_maps(61),
        ),
        "fig2_kmc" => kmc_document(
            base_document(
                name,
                vec![case("bichromatic", Lambda1To0, Linear1d, &lambda_bichromatic(Lambda1To0, 0.0, false)?)],
                dimensionless_maps(11),
            ),
            1000,
        ),
        "fig2_3d" => kmc_document(
            base_document(
                name,
                vec![case("bichromatic_3d", Lambda1To0WithM0, Quadrupole3d, &lambda_bichromatic(Lambda1To0WithM0, 0.0, true)?)],
                dimensionless_maps(11),
            ),
            2000,
        ),
        "fig3" => {
            let cases = [("second_minus1", -1.0), ("second_0", 0.0), ("second_plus1", 1.0)]
                .into_iter()
                .map(|(n, d)| Ok(case(n, Lambda1To0, Linear1d, &lambda_bichromatic(Lambda1To0, d, false)?)))
                .collect::<Result<_>>()?;
            base_document(name, cases, dimensionless_maps(61))
        }
        "fig4" => {
            let s = build_preset(JHalfToHalf)?;
            let g = s.gamma_max();
            let flip = presets::prefers_flipped(&s, 0);
            let k = wavenumber(s.links()[0].wavelength);
            let mono = presets::standard_1d_beams(0, k, -g, 1.0, flip)?;
            let bi = presets::bichromatic_1d_beams(&s, 0, -g, 0.0, 1.0, flip)?;
            base_document(
                name,
                vec![
                    case("monochromatic", JHalfToHalf, Linear1d, &mono),
                    case("bichromatic", JHalfToHalf, Linear1d, &bi),
                ],
                dimensionless_maps(61),
            )
        }
        "fig6" => {
            let mut cases = Vec::new();
            for (n, preset, which) in [
                ("scheme_i", C2MinusI, C2Scheme::HalfToHalf),
                ("scheme_ii", C2MinusII, C2Scheme::ThreeHalfToHalf),
                ("scheme_iii", C2MinusIII, C2Scheme::Both),
            ] {
                let s = build_preset(preset)?;
                let beams = presets::c2minus_beams(&s, which, -s.gamma_max(), 1.0, false)?;
                let mut c = case(n, preset, Linear1d, &beams);
                for b in &mut c.beams {
                    b.saturation = None;
                    b.intensity_mw_cm2 = Some(1.8);
                }
                cases.push(c);
            }
            let range = |lim: f64, unit| GridSpec::Range {
                from: -lim,
                to: lim,
                points: 81,
                unit,
            };
            let maps = vec![
                MapSpec {
                    name: "trap".into(),
                    axis: MapAxis::ZAtV0,
                    z: Some(range(10.0, GridUnit::Millimetre)),
                    v: None,
                },
                MapSpec {
                    name: "cool".into(),
                    axis: MapAxis::VAtZ0,
                    z: None,
                    v: Some(range(15.0, GridUnit::MetrePerSecond)),
                },
            ];
            base_document(name, cases, maps)
        }
        "switched" => {
            let mut c = case("switched", Lambda1To0, Linear1d, &lambda_bichromatic(Lambda1To0, 0.0, false)?);
            c.switching = Some(SwitchingSpec {
                period_gamma: 0.01,
                first: c.beams.iter().take(2).filter_map(|b| b.label.clone()).collect(),
                preserve_average: true,
            });
            kmc_document(base_document(name, vec![c], dimensionless_maps(11)), 1000)
        }
        "lambda_dark" => base_document(
            name,
            vec![case("lambda_with_m0", Lambda1To0WithM0, Linear1d, &lambda_bichromatic(Lambda1To0WithM0, 0.0, false)?)],
            dimensionless_maps(21),
        ),
        other => return Err(Error::UnknownPreset(other.to_string())),
    };
    Ok(doc)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "name": "t",
        "cases": [{
            "name": "a",
            "scheme": "type1_0to1",
            "mass_amu": 24.022,
            "field": {"kind": "linear_1d", "gradient_g_per_cm": 10},
            "beams": [
                {"direction": "+z", "polarization": "sigma+", "detuning": "-1.0 Gamma", "saturation": 1},
                {"direction": "-z", "polarization": "sigma+_along_-z", "detuning": -1, "saturation": 1}
            ]
        }],
        "maps": [{"name": "trap", "axis": "z_at_v0", "z": {"from": -3, "to": 3, "points": 7, "unit": "zeeman_gamma"}}]
    }"#;

    #[test]
    fn minimal_document_resolves() {
        let run = parse_config(MINIMAL).unwrap();
        let setup = &run.cases[0].setup;
        let gamma = setup.gamma();
        assert!((setup.beams[0].detuning + gamma).abs() < 1e-6);
        assert!((gamma - 1.0 / 75e-9).abs() < 1e-3);
        assert_eq!(setup.beams[1].detuning, setup.beams[0].detuning);
        // σ⁺ about −z is σ⁻ about +z.
        let w = polarization_components(&setup.beams[1], &Vector3::z());
        assert!((w[0] - 1.0).abs() < 1e-12);
        let grid = &run.cases[0].grids[0].1;
        assert!((grid.z[6] - setup.zeeman_position(3.0)).abs() < 1e-15);
    }

    #[test]
    fn intensity_becomes_saturation() {
        let text = MINIMAL.replace(r#""saturation": 1}"#, r#""intensity_mw_cm2": 1.8}"#);
        let run = parse_config(&text).unwrap();
        let s = run.cases[0].setup.beams[0].saturation;
        assert!((s - 1.8 / 1.7517).abs() < 1e-3, "{s}");
    }

    #[test]
    fn detuning_units() {
        let g = 1.0 / 75e-9;
        let q = |s: &str| detuning_rad_s(&Quantity::Text(s.into()), g, "d");
        assert!((q("-1.0 Gamma").unwrap() + 1.3333e7).abs() < 1e3);
        assert!((q("1 MHz").unwrap() - 2.0 * PI * 1e6).abs() < 1e-6);
        assert_eq!(q("5 rad/s").unwrap(), 5.0);
        assert!(matches!(q("5 furlongs"), Err(Error::Config { .. })));
        assert!(matches!(q("-1"), Err(Error::Config { .. })));
    }

    #[test]
    fn errors_carry_field_paths() {
        let bad = MINIMAL.replace(r#""mass_amu": 24.022"#, r#""mass_amu": "heavy""#);
        match parse_config(&bad) {
            Err(Error::Config { path, .. }) => assert!(path.starts_with("cases[0]"), "{path}"),
            other => panic!("{other:?}"),
        }
        let bad = MINIMAL.replace(r#""polarization": "sigma+","#, r#""polarization": "sigma+_along_+x","#);
        match parse_config(&bad) {
            Err(Error::Config { path, message }) => {
                assert_eq!(path, "cases[0].beams[0]");
                assert!(message.contains("transverse"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        let bad = MINIMAL.replace("type1_0to1", "type9");
        assert!(matches!(parse_config(&bad), Err(Error::Config { .. })));
        let bad = MINIMAL.replace(r#""name": "t","#, r#""name": "t", "colour": 1,"#);
        assert!(matches!(parse_config(&bad), Err(Error::Config { .. })));
    }

    #[test]
    fn every_preset_round_trips() {
        for (name, _) in PRESET_DOCUMENTS {
            let doc = preset_document(name).unwrap();
            let text = doc.to_pretty_json();
            let again = ConfigDocument::parse(&text).unwrap();
            assert_eq!(doc, again, "{name}");
            assert_eq!(again.canonical_json(), ConfigDocument::parse(&again.canonical_json()).unwrap().canonical_json());
            RunConfig::from_document(again).unwrap();
        }
    }

    #[test]
    fn hash_ignores_jobs_and_output() {
        let mut doc = preset_document("fig2").unwrap();
        let h = doc.hash();
        doc.jobs = Some(8);
        doc.output = Some("elsewhere".into());
        assert_eq!(doc.hash(), h);
        doc.seed += 1;
        assert_ne!(doc.hash(), h);
    }

    #[test]
    fn preset_beams_survive_the_document() {
        let s = build_preset(SchemePreset::Lambda1To0).unwrap();
        let beams = lambda_bichromatic(SchemePreset::Lambda1To0, 0.0, false).unwrap();
        let run = RunConfig::from_document(preset_document("fig2").unwrap()).unwrap();
        let resolved = &run.cases[0].setup.beams;
        assert_eq!(resolved.len(), beams.len());
        for (a, b) in resolved.iter().zip(&beams) {
            assert_eq!(a.label, b.label);
            assert!((a.direction - b.direction).norm() < 1e-15);
            assert!((a.detuning - b.detuning).abs() <= 1e-9 * s.gamma_max());
            for i in 0..3 {
                assert!((a.polarization[i] - b.polarization[i]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn embedded_config_is_found() {
        let doc = preset_document("type1").unwrap();
        let csv = format!("# title\n{EMBEDDED_PREFIX}{}\nz_m,a\n", doc.canonical_json());
        assert_eq!(ConfigDocument::parse(&csv).unwrap(), doc);
    }

    #[test]
    fn switching_needs_known_labels() {
        let mut doc = preset_document("switched").unwrap();
        RunConfig::from_document(doc.clone()).unwrap();
        doc.cases[0].switching.as_mut().unwrap().first.push("nope".into());
        match RunConfig::from_document(doc) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "cases[0].switching.first[2]"),
            other => panic!("{other:?}"),
        }
    }
}
