//! Kinetic Monte Carlo trajectories with photon recoil.
//!
//! Internal jumps (absorption, stimulated emission, spontaneous emission)
//! are sampled by thinning against a constant rate bound, so the rates may
//! change freely along the ballistic flights between events. Spontaneous
//! photons are emitted isotropically.
//!
//! Sublevels are labelled along the local field. The label follows the field
//! direction adiabatically, except when the field reverses (a passage through
//! a field zero): the lab-frame state is then kept, so `M` becomes `-M`.

use nalgebra::Vector3;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fields::{quantization_axis, LaserBeam, Schedule};
use crate::rates::{outgoing_channels, rate_bound, Channel, ChannelKind};
use crate::rng::trajectory_rng;
use crate::setup::Setup;
use crate::units::{larmor, HBAR};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryState {
    pub r: Vector3<f64>,
    pub v: Vector3<f64>,
    pub sublevel: usize,
    pub t: f64,
}

impl TrajectoryState {
    pub fn new(r: Vector3<f64>, v: Vector3<f64>, sublevel: usize) -> Self {
        TrajectoryState { r, v, sublevel, t: 0.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub r: Vector3<f64>,
    pub v: Vector3<f64>,
    pub sublevel: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EventKind {
    Absorption,
    StimulatedEmission,
    Spontaneous,
}

/// A recorded jump: time, sublevels and the velocity kick it produced.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Event {
    pub t: f64,
    pub from: usize,
    pub to: usize,
    pub kind: EventKind,
    pub kick: Vector3<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EventCounts {
    pub absorption: u64,
    pub stimulated: u64,
    pub spontaneous: u64,
    /// Rejected thinning candidates.
    pub null: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub initial: TrajectoryState,
    pub final_state: TrajectoryState,
    pub samples: Vec<Sample>,
    pub events: Vec<Event>,
    /// Sum of all recoil velocity kicks.
    pub kick_sum: Vector3<f64>,
    pub counts: EventCounts,
    /// Time spent in upper-manifold sublevels.
    pub upper_time: f64,
}

#[derive(Clone, Debug, Default)]
pub struct TrajectoryOptions {
    /// Record a [`Sample`] every `stride` seconds.
    pub sample_stride: Option<f64>,
    /// Keep the full event log.
    pub record_events: bool,
    /// Evolve only the internal state for this long before `t0`, with the
    /// motion frozen and no recoil.
    pub burn_in: f64,
}

/// Uniformly distributed unit vector.
pub fn random_direction(rng: &mut impl Rng) -> Vector3<f64> {
    let cos_theta: f64 = rng.random_range(-1.0..=1.0);
    let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let sin_theta = (1.0 - cos_theta * cos_theta).max(0.0).sqrt();
    Vector3::new(sin_theta * phi.cos(), sin_theta * phi.sin(), cos_theta)
}

fn mirror_sublevels(setup: &Setup) -> Vec<usize> {
    let subs = setup.scheme.sublevels();
    (0..subs.len())
        .map(|i| {
            subs.iter()
                .position(|s| s.level == subs[i].level && s.m.twice() == -subs[i].m.twice())
                .unwrap_or(i)
        })
        .collect()
}

/// Length over which the largest Zeeman shift changes by Γ.
pub fn zeeman_length(setup: &Setup) -> f64 {
    let g = setup.scheme.levels().iter().map(|l| l.g.abs()).fold(0.0, f64::max);
    let per_metre = larmor(setup.field.max_gradient()) * g;
    if per_metre > 0.0 {
        setup.gamma() / per_metre
    } else {
        f64::INFINITY
    }
}

struct Engine<'a> {
    setup: &'a Setup,
    bound: f64,
    gamma: f64,
    zeeman_length: f64,
    channels: Vec<Channel>,
    /// Quantization axis at the last rate evaluation.
    axis: Vector3<f64>,
    /// Index of the `-M` partner of each sublevel.
    mirror: Vec<usize>,
}

impl<'a> Engine<'a> {
    fn new(setup: &'a Setup) -> Self {
        Engine {
            setup,
            bound: rate_bound(&setup.scheme, &setup.beams),
            gamma: setup.gamma(),
            zeeman_length: zeeman_length(setup),
            channels: Vec::new(),
            axis: Vector3::z(),
            mirror: mirror_sublevels(setup),
        }
    }

    /// Re-labels the sublevel if the field has reversed since the last call.
    fn follow_field(&mut self, state: &mut TrajectoryState) {
        let axis = quantization_axis(&self.setup.field.magnetic_field(&state.r));
        if axis.dot(&self.axis) < 0.0 {
            state.sublevel = self.mirror[state.sublevel];
        }
        self.axis = axis;
    }

    fn flight_cap(&self, v: &Vector3<f64>) -> f64 {
        let drift = 0.1 * self.zeeman_length / v.norm();
        (0.1 / self.gamma).min(drift)
    }

    fn fly(&self, state: &mut TrajectoryState, dt: f64) {
        match self.setup.gravity {
            Some(g) => {
                state.r += state.v * dt + g * (0.5 * dt * dt);
                state.v += g * dt;
            }
            None => state.r += state.v * dt,
        }
        state.t += dt;
    }

    fn ballistic(&self, state: &TrajectoryState, t: f64) -> (Vector3<f64>, Vector3<f64>) {
        let dt = t - state.t;
        match self.setup.gravity {
            Some(g) => (state.r + state.v * dt + g * (0.5 * dt * dt), state.v + g * dt),
            None => (state.r + state.v * dt, state.v),
        }
    }

    /// Runs until `t_end`. With `frozen` the position and velocity do not
    /// change and nothing is recorded.
    fn run(
        &mut self,
        state: &mut TrajectoryState,
        t_end: f64,
        frozen: bool,
        rng: &mut ChaCha8Rng,
        mut out: Option<&mut Recorder>,
    ) {
        let setup = self.setup;
        let mass = setup.mass;
        if self.bound <= 0.0 {
            if !frozen {
                if let Some(rec) = out.as_deref_mut() {
                    rec.sample_until(self, state, t_end);
                    if setup.scheme.sublevels()[state.sublevel].is_upper() {
                        rec.upper_time += t_end - state.t;
                    }
                }
                let dt = t_end - state.t;
                self.fly(state, dt);
            }
            state.t = t_end;
            return;
        }
        while state.t < t_end {
            let cap = if frozen { f64::INFINITY } else { self.flight_cap(&state.v) };
            let wait = -(1.0 - rng.random::<f64>()).ln() / self.bound;
            let step = wait.min(cap).min(t_end - state.t);
            let upper = setup.scheme.sublevels()[state.sublevel].is_upper();
            if let Some(rec) = out.as_deref_mut() {
                rec.sample_until(self, state, state.t + step);
                if upper {
                    rec.upper_time += step;
                }
            }
            if frozen {
                state.t += step;
            } else {
                self.fly(state, step);
            }
            if step < wait {
                continue;
            }
            self.follow_field(state);
            let total = outgoing_channels(
                &setup.scheme,
                &setup.beams,
                &setup.field,
                state.sublevel,
                &state.r,
                &state.v,
                state.t,
                &mut self.channels,
            );
            debug_assert!(total <= self.bound * (1.0 + 1e-12));
            let mut u = rng.random::<f64>() * self.bound;
            if u >= total {
                if let Some(rec) = out.as_deref_mut() {
                    rec.counts.null += 1;
                }
                continue;
            }
            let mut chosen = *self.channels.last().expect("positive total rate implies a channel");
            for c in &self.channels {
                if u < c.rate {
                    chosen = *c;
                    break;
                }
                u -= c.rate;
            }
            let (kind, kick) = match chosen.kind {
                ChannelKind::Absorption { beam } => {
                    (EventKind::Absorption, setup.beams[beam].wavevector() * (HBAR / mass))
                }
                ChannelKind::StimulatedEmission { beam } => {
                    (EventKind::StimulatedEmission, -setup.beams[beam].wavevector() * (HBAR / mass))
                }
                ChannelKind::Spontaneous { wavenumber } => {
                    let dir = random_direction(rng);
                    (EventKind::Spontaneous, dir * (HBAR * wavenumber / mass))
                }
            };
            let from = state.sublevel;
            state.sublevel = chosen.target;
            if frozen {
                continue;
            }
            state.v += kick;
            if let Some(rec) = out.as_deref_mut() {
                rec.kick_sum += kick;
                match kind {
                    EventKind::Absorption => rec.counts.absorption += 1,
                    EventKind::StimulatedEmission => rec.counts.stimulated += 1,
                    EventKind::Spontaneous => rec.counts.spontaneous += 1,
                }
                if rec.record_events {
                    rec.events.push(Event {
                        t: state.t,
                        from,
                        to: chosen.target,
                        kind,
                        kick,
                    });
                }
            }
        }
    }
}

#[derive(Default)]
struct Recorder {
    stride: Option<f64>,
    next_sample: f64,
    samples: Vec<Sample>,
    record_events: bool,
    events: Vec<Event>,
    kick_sum: Vector3<f64>,
    counts: EventCounts,
    upper_time: f64,
}

impl Recorder {
    /// Records samples at stride times in `[state.t, t_next)` along the
    /// current flight.
    fn sample_until(&mut self, engine: &Engine, state: &TrajectoryState, t_next: f64) {
        let Some(stride) = self.stride else { return };
        while self.next_sample < t_next {
            let (r, v) = engine.ballistic(state, self.next_sample);
            self.samples.push(Sample {
                t: self.next_sample,
                r,
                v,
                sublevel: state.sublevel,
            });
            self.next_sample += stride;
        }
    }
}

fn check_duration(duration: f64) -> Result<()> {
    if duration > 0.0 && duration.is_finite() {
        Ok(())
    } else {
        Err(Error::Physics(format!("trajectory duration must be positive, got {duration}")))
    }
}

/// Evolves `state0` for `duration` seconds.
pub fn simulate_trajectory(
    state0: TrajectoryState,
    setup: &Setup,
    duration: f64,
    rng: &mut ChaCha8Rng,
    options: &TrajectoryOptions,
) -> Result<Trajectory> {
    check_duration(duration)?;
    if state0.sublevel >= setup.scheme.len() {
        return Err(Error::Physics(format!("initial sublevel {} out of range", state0.sublevel)));
    }
    if !(state0.r.iter().chain(state0.v.iter()).all(|x| x.is_finite())) {
        return Err(Error::Physics("initial position and velocity must be finite".into()));
    }
    let mut engine = Engine::new(setup);
    let mut state = state0;
    engine.axis = quantization_axis(&setup.field.magnetic_field(&state.r));
    if options.burn_in > 0.0 {
        let t0 = state.t;
        state.t -= options.burn_in;
        engine.run(&mut state, t0, true, rng, None);
        state.t = t0;
    }
    let initial = state;
    let mut rec = Recorder {
        stride: options.sample_stride.filter(|s| *s > 0.0),
        next_sample: state.t,
        record_events: options.record_events,
        ..Default::default()
    };
    let t_end = state.t + duration;
    engine.run(&mut state, t_end, false, rng, Some(&mut rec));
    engine.follow_field(&mut state);
    if let Some(stride) = rec.stride {
        if rec.next_sample <= t_end + 1e-9 * stride {
            rec.samples.push(Sample {
                t: state.t,
                r: state.r,
                v: state.v,
                sublevel: state.sublevel,
            });
        }
    }
    Ok(Trajectory {
        initial,
        final_state: state,
        samples: rec.samples,
        events: rec.events,
        kick_sum: rec.kick_sum,
        counts: rec.counts,
        upper_time: rec.upper_time,
    })
}

/// Beams listed in `first` are on during the first half of each period, the
/// others during the second half. With `preserve_average` each beam's
/// saturation is divided by its duty cycle so the time-averaged rates of
/// the continuous configuration are kept.
pub fn switched_setup(setup: &Setup, first: &[usize], period: f64, preserve_average: bool) -> Result<Setup> {
    if !(period > 0.0 && period.is_finite()) {
        return Err(Error::Physics(format!("switching period must be positive, got {period}")));
    }
    let mut out = setup.clone();
    out.beams = setup
        .beams
        .iter()
        .enumerate()
        .map(|(l, b)| {
            let schedule = Schedule::half(period, first.contains(&l));
            let mut beam: LaserBeam = b.clone().scheduled(schedule);
            if preserve_average {
                beam.saturation /= schedule.duty();
            }
            beam
        })
        .collect();
    Ok(out)
}

/// [`simulate_trajectory`] on the switched version of `setup`.
pub fn simulate_switched(
    state0: TrajectoryState,
    setup: &Setup,
    first: &[usize],
    period: f64,
    duration: f64,
    rng: &mut ChaCha8Rng,
    options: &TrajectoryOptions,
) -> Result<Trajectory> {
    let switched = switched_setup(setup, first, period, true)?;
    simulate_trajectory(state0, &switched, duration, rng, options)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Duration {
    /// A tenth of the time over which the particle would drift a Zeeman
    /// length or change its Doppler shift by Γ.
    Auto,
    Fixed(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct KmcOptions {
    pub n_traj: usize,
    pub duration: Duration,
    /// Frozen-motion equilibration of the internal state, in seconds.
    pub burn_in: f64,
    pub seed: u64,
}

impl KmcOptions {
    /// 1000 trajectories, automatic duration, 200/Γ burn-in.
    pub fn for_setup(setup: &Setup, seed: u64) -> Self {
        KmcOptions {
            n_traj: 1000,
            duration: Duration::Auto,
            burn_in: 200.0 / setup.gamma(),
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForceEstimate {
    /// Mean acceleration, m/s².
    pub a: Vector3<f64>,
    /// Standard error of each component.
    pub sigma: Vector3<f64>,
    pub n_traj: usize,
    pub duration: f64,
    pub warnings: Vec<String>,
}

/// The two drift limits (Doppler, Zeeman) on the evolution time.
pub fn duration_limits(setup: &Setup, v0: &Vector3<f64>) -> (f64, f64) {
    let a_max = 0.5 * setup.accel_unit();
    let t_v = setup.doppler_velocity(1.0) / a_max;
    let l_z = zeeman_length(setup);
    let speed = v0.norm();
    let t_z = (l_z / speed).min((2.0 * l_z / a_max).sqrt());
    (t_v, t_z)
}

pub fn auto_duration(setup: &Setup, v0: &Vector3<f64>) -> f64 {
    let (t_v, t_z) = duration_limits(setup, v0);
    t_v.min(t_z) / 10.0
}

/// Mean acceleration over `n_traj` trajectories started at `(r0, v0)`.
///
/// Trajectory `n` of grid point `point` draws from stream `n` of the point's
/// key, so the estimate does not depend on the thread count.
pub fn estimate_force(
    setup: &Setup,
    r0: &Vector3<f64>,
    v0: &Vector3<f64>,
    options: &KmcOptions,
    point: u64,
) -> Result<ForceEstimate> {
    if options.n_traj < 1 {
        return Err(Error::Physics("n_traj must be at least 1".into()));
    }
    let (t_v, t_z) = duration_limits(setup, v0);
    let duration = match options.duration {
        Duration::Auto => t_v.min(t_z) / 10.0,
        Duration::Fixed(t) => t,
    };
    check_duration(duration)?;
    let mut warnings = Vec::new();
    if duration > t_v {
        warnings.push(format!(
            "duration {duration:.3e} s lets the Doppler shift drift by more than Γ (limit {t_v:.3e} s)"
        ));
    }
    if duration > t_z {
        warnings.push(format!(
            "duration {duration:.3e} s lets the particle drift over a Zeeman length (limit {t_z:.3e} s)"
        ));
    }
    let lower: Vec<usize> = (0..setup.scheme.len())
        .filter(|&i| !setup.scheme.sublevels()[i].is_upper())
        .collect();
    if lower.is_empty() {
        return Err(Error::Physics("scheme has no lower sublevels".into()));
    }
    let traj_options = TrajectoryOptions {
        burn_in: options.burn_in,
        ..Default::default()
    };
    let kicks: Vec<Vector3<f64>> = (0..options.n_traj as u64)
        .into_par_iter()
        .map(|n| {
            let mut rng = trajectory_rng(options.seed, point, n);
            let start = lower[rng.random_range(0..lower.len())];
            let state = TrajectoryState::new(*r0, *v0, start);
            simulate_trajectory(state, setup, duration, &mut rng, &traj_options)
                .map(|t| t.final_state.v - t.initial.v)
        })
        .collect::<Result<_>>()?;
    let n = kicks.len() as f64;
    let mean: Vector3<f64> = kicks.iter().sum::<Vector3<f64>>() / n;
    let sigma = if kicks.len() > 1 {
        let var = kicks
            .iter()
            .map(|k| (k - mean).component_mul(&(k - mean)))
            .sum::<Vector3<f64>>()
            / (n - 1.0);
        var.map(|x| (x / n).sqrt() / duration)
    } else {
        Vector3::zeros()
    };
    Ok(ForceEstimate {
        a: mean / duration,
        sigma,
        n_traj: kicks.len(),
        duration,
        warnings,
    })
}
