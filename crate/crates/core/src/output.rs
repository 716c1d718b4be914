//! Run orchestration and CSV output.
//!
//! Every file starts with `#` comment lines: title, config hash, seed, case,
//! units and sign convention, solver warnings, and finally the canonical
//! config document on a single `# config: ` line, from which the file can be
//! regenerated. Numbers are written as `{:.12e}`, so output is byte-identical
//! for identical config and seed whatever the worker count.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use rand::Rng;
use rayon::prelude::*;

use crate::config::{CaseRun, MethodKind, Mode, RunConfig, EMBEDDED_PREFIX};
use crate::error::{Error, Result};
use crate::kmc::{estimate_force, simulate_trajectory, TrajectoryOptions, TrajectoryState};
use crate::rng::trajectory_rng;
use crate::steady::steady_force;
use crate::sweep::{sweep, trap_metrics, ForceMap, MapAxis};

/// One output file: a name relative to the output directory and its contents.
#[derive(Clone, Debug, PartialEq)]
pub struct Artifact {
    pub file_name: String,
    pub contents: String,
}

const SIGN_CONVENTION: &str =
    "accelerations are along +z; restoring means a*z < 0 (kappa > 0), damping means a*v < 0 (alpha > 0)";

fn num(x: f64) -> String {
    format!("{x:.12e}")
}

fn header(run: &RunConfig, case: &CaseRun, kind: &str, extra: &[String], warnings: &[String]) -> String {
    let doc = &run.document;
    let setup = &case.setup;
    let mut h = String::new();
    let _ = writeln!(h, "# motsim {kind}");
    if let Some(title) = &doc.title {
        let _ = writeln!(h, "# title: {title}");
    }
    let _ = writeln!(h, "# config_hash: sha256:{}", run.hash);
    let _ = writeln!(h, "# seed: {}", doc.seed);
    let _ = writeln!(h, "# case: {} (scheme {})", case.name, setup.scheme.name());
    let method = match doc.method {
        MethodKind::Steady => "steady".to_string(),
        MethodKind::Kmc => format!(
            "kmc (n_traj={}, duration={}, burn_in_s={})",
            case.kmc.n_traj,
            match case.kmc.duration {
                crate::kmc::Duration::Auto => "auto".to_string(),
                crate::kmc::Duration::Fixed(t) => format!("{}s", num(t)),
            },
            num(case.kmc.burn_in)
        ),
    };
    let _ = writeln!(h, "# method: {method}");
    let _ = writeln!(h, "# gamma_s-1: {}", num(setup.gamma()));
    let _ = writeln!(h, "# accel_unit_m_s2: {} (hbar k Gamma / m)", num(setup.accel_unit()));
    let _ = writeln!(h, "# sign: {SIGN_CONVENTION}");
    for line in extra {
        let _ = writeln!(h, "# {line}");
    }
    for w in warnings {
        let _ = writeln!(h, "# warning: {w}");
    }
    let _ = writeln!(h, "{EMBEDDED_PREFIX}{}", doc.canonical_json());
    h
}

fn metrics_line(map: &ForceMap) -> Option<String> {
    let m = trap_metrics(map).ok()?;
    let opt = |x: Option<f64>| x.map_or_else(|| "na".to_string(), num);
    Some(format!(
        "metrics: kappa_s-2={} alpha_s-1={} peak_m_s2={} capture_z_m={} capture_v_m_s={}",
        opt(m.stiffness),
        opt(m.damping),
        num(m.peak),
        opt(m.capture_range_z),
        opt(m.capture_range_v)
    ))
}

/// CSV text of one force map.
pub fn format_force_map(run: &RunConfig, case: &CaseRun, map_name: &str, map: &ForceMap) -> String {
    let mut extra = vec![format!("map: {map_name} ({}, {} points)", map.axis.name(), map.points.len())];
    extra.extend(metrics_line(map));
    let stochastic = map.sigma.is_some();
    let columns = if stochastic {
        "z_m,v_m_s,a_m_s2,sigma_m_s2,a_natural"
    } else {
        "z_m,v_m_s,a_m_s2,a_natural"
    };
    extra.push(format!(
        "columns: z_m position, v_m_s velocity, a_m_s2 acceleration{}, a_natural = a / accel_unit",
        if stochastic { ", sigma_m_s2 standard error" } else { "" }
    ));
    let mut out = header(run, case, "force map", &extra, &map.warnings);
    out.push_str(columns);
    out.push('\n');
    for (i, &(z, v)) in map.points.iter().enumerate() {
        let a = map.accel[i];
        let _ = write!(out, "{},{},{}", num(z), num(v), num(a));
        if let Some(s) = &map.sigma {
            let _ = write!(out, ",{}", num(s[i]));
        }
        let _ = writeln!(out, ",{}", num(a / map.accel_unit));
    }
    out
}

fn map_file_name(run: &RunConfig, case: &str, suffix: &str) -> String {
    format!("{}_{}_{}.csv", run.document.name, case, suffix)
}

fn sweep_artifacts(run: &RunConfig, case: &CaseRun) -> Result<Vec<Artifact>> {
    let mut out = Vec::with_capacity(case.grids.len());
    for (m, (name, grid)) in case.grids.iter().enumerate() {
        let mut map = sweep(&case.setup, grid, &case.method(run.document.method, m))?;
        map.provenance = run.hash.clone();
        out.push(Artifact {
            file_name: map_file_name(run, &case.name, name),
            contents: format_force_map(run, case, name, &map),
        });
    }
    Ok(out)
}

fn point_artifact(run: &RunConfig, case: &CaseRun) -> Result<Artifact> {
    let setup = &case.setup;
    let gravity = setup.gravity.unwrap_or_else(Vector3::zeros);
    let results: Vec<Result<(Vector3<f64>, Option<Vector3<f64>>, Vec<String>)>> = run
        .points
        .par_iter()
        .enumerate()
        .map(|(i, (r, v))| {
            let res = match run.document.method {
                MethodKind::Steady => {
                    if setup.has_schedules() {
                        return Err(Error::Physics(
                            "the steady solver needs continuous beams; use the Monte Carlo method for switched light"
                                .into(),
                        ));
                    }
                    let f = steady_force(&setup.scheme, &setup.beams, &setup.field, r, v)?;
                    (f.total / setup.mass + gravity, None, Vec::new())
                }
                MethodKind::Kmc => {
                    let est = estimate_force(setup, r, v, &case.kmc_options(), i as u64)?;
                    (est.a, Some(est.sigma), est.warnings)
                }
            };
            Ok(res)
        })
        .collect();
    let mut rows = Vec::with_capacity(results.len());
    let mut warnings = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        let (r0, v0) = run.points[i];
        let (a, s, w) = r.map_err(|e| Error::AtGridPoint {
            z: r0.z,
            v: v0.z,
            source: Box::new(e),
        })?;
        warnings.extend(w.into_iter().map(|w| format!("point {i}: {w}")));
        rows.push((r0, v0, a, s));
    }
    let stochastic = run.document.method == MethodKind::Kmc;
    let mut columns = "x_m,y_m,z_m,vx_m_s,vy_m_s,vz_m_s,ax_m_s2,ay_m_s2,az_m_s2".to_string();
    if stochastic {
        columns.push_str(",sigma_ax_m_s2,sigma_ay_m_s2,sigma_az_m_s2");
    }
    let extra = vec![format!("columns: position, velocity, acceleration vector{}", if stochastic { ", standard errors" } else { "" })];
    let mut out = header(run, case, "force at points", &extra, &warnings);
    out.push_str(&columns);
    out.push('\n');
    for (r, v, a, s) in rows {
        let mut fields: Vec<String> = r.iter().chain(v.iter()).chain(a.iter()).map(|&x| num(x)).collect();
        if let Some(s) = s {
            fields.extend(s.iter().map(|&x| num(x)));
        }
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    Ok(Artifact {
        file_name: map_file_name(run, &case.name, "points"),
        contents: out,
    })
}

/// Stream index reserved for trajectory dumps, away from grid-point indices.
const TRAJECTORY_STREAM: u64 = u64::MAX;

fn trajectory_artifact(run: &RunConfig, case: &CaseRun) -> Result<Artifact> {
    let spec = run.document.trajectory.as_ref().ok_or_else(|| Error::config("trajectory", "missing"))?;
    let setup = &case.setup;
    let gamma = setup.gamma();
    let lower: Vec<usize> = (0..setup.scheme.len())
        .filter(|&i| !setup.scheme.sublevels()[i].is_upper())
        .collect();
    if lower.is_empty() {
        return Err(Error::Physics("scheme has no lower sublevels".into()));
    }
    let options = TrajectoryOptions {
        sample_stride: Some(spec.stride_gamma / gamma),
        record_events: false,
        burn_in: case.kmc.burn_in,
    };
    let r0 = Vector3::from(spec.r_mm) * 1e-3;
    let v0 = Vector3::from(spec.v_m_s);
    let trajectories = (0..spec.count as u64)
        .into_par_iter()
        .map(|n| {
            let mut rng = trajectory_rng(case.seed, TRAJECTORY_STREAM, n);
            let start = lower[rng.random_range(0..lower.len())];
            simulate_trajectory(TrajectoryState::new(r0, v0, start), setup, spec.duration_gamma / gamma, &mut rng, &options)
        })
        .collect::<Result<Vec<_>>>()?;
    let labels = setup.scheme.sublevel_labels();
    let extra = vec![
        format!(
            "sublevels: {}",
            labels.iter().enumerate().map(|(i, l)| format!("{i}={l}")).collect::<Vec<_>>().join("; ")
        ),
        "columns: trajectory index, time, position, velocity, internal sublevel index".to_string(),
    ];
    let mut out = header(run, case, "trajectories", &extra, &[]);
    out.push_str("trajectory,t_s,x_m,y_m,z_m,vx_m_s,vy_m_s,vz_m_s,sublevel\n");
    for (n, traj) in trajectories.iter().enumerate() {
        for s in &traj.samples {
            let values: Vec<String> = std::iter::once(s.t).chain(s.r.iter().copied()).chain(s.v.iter().copied()).map(num).collect();
            let _ = writeln!(out, "{n},{},{}", values.join(","), s.sublevel);
        }
    }
    Ok(Artifact {
        file_name: map_file_name(run, &case.name, "trajectories"),
        contents: out,
    })
}

/// Computes every output of a run on the current rayon pool.
pub fn render(run: &RunConfig) -> Result<Vec<Artifact>> {
    let mut out = Vec::new();
    for case in &run.cases {
        match run.document.mode {
            Mode::Sweep => out.extend(sweep_artifacts(run, case)?),
            Mode::Point => out.push(point_artifact(run, case)?),
            Mode::Trajectory => out.push(trajectory_artifact(run, case)?),
        }
    }
    Ok(out)
}

/// Renders a run on a pool of `jobs` workers (all cores when `None`).
pub fn render_with_jobs(run: &RunConfig, jobs: Option<usize>) -> Result<Vec<Artifact>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::Numerical(format!("cannot start worker pool: {e}")))?;
    pool.install(|| render(run))
}

/// Renders a run and writes its files into `dir`, returning their paths.
pub fn run(run: &RunConfig, dir: &Path, jobs: Option<usize>) -> Result<Vec<PathBuf>> {
    let artifacts = render_with_jobs(run, jobs)?;
    fs::create_dir_all(dir)?;
    let mut paths = Vec::with_capacity(artifacts.len());
    for a in artifacts {
        let path = dir.join(&a.file_name);
        fs::write(&path, a.contents)?;
        paths.push(path);
    }
    Ok(paths)
}

/// Parses a data row of a force-map CSV into its numeric fields.
pub fn parse_rows(text: &str) -> Vec<Vec<f64>> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').filter_map(|f| f.parse().ok()).collect())
        .collect()
}

/// The axis a force-map file was computed along, read from its header.
pub fn map_axis(text: &str) -> Option<MapAxis> {
    let line = text.lines().find_map(|l| l.strip_prefix("# map: "))?;
    [MapAxis::ZAtV0, MapAxis::VAtZ0, MapAxis::FullGrid]
        .into_iter()
        .find(|a| line.contains(&format!("({},", a.name())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{parse_config, preset_document, ConfigDocument, RunConfig};

    fn small(name: &str, points: usize) -> RunConfig {
        let mut doc = preset_document(name).unwrap();
        for m in &mut doc.maps {
            for g in [&mut m.z, &mut m.v].into_iter().flatten() {
                if let crate::config::GridSpec::Range { points: p, .. } = g {
                    *p = points;
                }
            }
        }
        if let Some(k) = &mut doc.kmc {
            k.n_traj = 20;
        }
        RunConfig::from_document(doc).unwrap()
    }

    #[test]
    fn fig2_writes_four_maps_with_provenance() {
        let run = small("fig2", 9);
        let files = render(&run).unwrap();
        assert_eq!(files.len(), 4);
        for f in &files {
            assert!(f.contents.contains(&format!("# config_hash: sha256:{}", run.hash)));
            assert!(f.contents.contains("# seed: 1"));
            assert_eq!(parse_rows(&f.contents).len(), 9);
            let again = parse_config(&f.contents).unwrap();
            assert_eq!(again.hash, run.hash);
        }
        assert_eq!(map_axis(&files[0].contents), Some(MapAxis::ZAtV0));
        assert_eq!(map_axis(&files[1].contents), Some(MapAxis::VAtZ0));
    }

    #[test]
    fn embedded_config_reproduces_the_file() {
        let run = small("fig2_kmc", 5);
        let first = render(&run).unwrap();
        let again = RunConfig::from_document(ConfigDocument::parse(&first[0].contents).unwrap()).unwrap();
        assert_eq!(render(&again).unwrap(), first);
    }

    #[test]
    fn worker_count_does_not_change_bytes() {
        let run = small("fig2_kmc", 5);
        assert_eq!(render_with_jobs(&run, Some(1)).unwrap(), render_with_jobs(&run, Some(4)).unwrap());
    }

    #[test]
    fn point_and_trajectory_modes() {
        let mut doc = preset_document("type1").unwrap();
        doc.mode = Mode::Point;
        doc.points = vec![crate::config::PointSpec {
            r_mm: [0.0, 0.0, 0.0],
            v_m_s: [0.0, 0.0, 1.0],
        }];
        let run = RunConfig::from_document(doc.clone()).unwrap();
        let files = render(&run).unwrap();
        let rows = parse_rows(&files[0].contents);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].len(), 9);
        assert!(rows[0][8] < 0.0, "moving atom is slowed");

        doc.mode = Mode::Trajectory;
        doc.trajectory = Some(crate::config::TrajectorySpec {
            count: 3,
            duration_gamma: 100.0,
            stride_gamma: 10.0,
            r_mm: [0.0; 3],
            v_m_s: [0.0; 3],
        });
        let run = RunConfig::from_document(doc).unwrap();
        let files = render(&run).unwrap();
        let rows = parse_rows(&files[0].contents);
        assert_eq!(rows.len(), 3 * 11);
        assert!(files[0].file_name.ends_with("_trajectories.csv"));
    }

    #[test]
    fn dark_preset_is_a_physics_error() {
        let run = small("lambda_dark", 5);
        let err = render(&run).unwrap_err();
        assert_eq!(err.exit_code(), 3);
        assert!(matches!(err, Error::AtGridPoint { .. }));
    }
}
