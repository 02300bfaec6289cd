//! Parallel autonomy: uncertainty-weighted blending of network and human
//! curvature commands, a constant-speed curvature-driven vehicle, and the
//! closed-loop simulator tying them to the MC-dropout network.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mc::{mc_sample, predictive_mean, predictive_variance, McConfig};
use crate::net::Network;
use crate::synth::{render_view, wrap_angle, ImageConfig, Pose, Track};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FusionConfig {
    /// Gain `kappa` mapping predictive variance to blend weight.
    pub gain: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            gain: 1.0,
            sigma_min: 0.0,
            sigma_max: 1.0,
        }
    }
}

impl FusionConfig {
    pub fn with_gain(gain: f64) -> Self {
        Self {
            gain,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gain >= 0.0 && self.gain.is_finite()) {
            return Err(Error::InvalidConfig(format!("fusion gain must be finite and >= 0, got {}", self.gain)));
        }
        if !(0.0 <= self.sigma_min && self.sigma_min <= self.sigma_max && self.sigma_max <= 1.0) {
            return Err(Error::InvalidConfig("sigma bounds must satisfy 0 <= min <= max <= 1".into()));
        }
        Ok(())
    }
}

/// Blend weight and fused command.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Fusion {
    pub sigma: f64,
    pub u_pa: f64,
}

/// `sigma = clamp(gain * variance)`, `u_pa = (1 - sigma) * u_n + sigma * u_h`.
pub fn fuse(u_n: f64, u_h: f64, variance: f64, config: &FusionConfig) -> Result<Fusion> {
    config.validate()?;
    if variance.is_nan() || !u_n.is_finite() || !u_h.is_finite() {
        return Err(Error::NonFinite("fusion inputs".into()));
    }
    if variance < 0.0 {
        return Err(Error::NegativeVariance(variance));
    }
    let raw = config.gain * variance;
    let sigma = if raw.is_nan() { config.sigma_min } else { raw.clamp(config.sigma_min, config.sigma_max) };
    Ok(Fusion {
        sigma,
        u_pa: (1.0 - sigma) * u_n + sigma * u_h,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    /// Radians in `(-pi, pi]`.
    pub heading: f64,
    /// Distance traveled, meters.
    pub s: f64,
    pub speed: f64,
}

impl VehicleState {
    pub fn at(pose: Pose, s: f64, speed: f64) -> Self {
        Self {
            x: pose.x,
            y: pose.y,
            heading: wrap_angle(pose.heading),
            s,
            speed,
        }
    }

    pub fn pose(&self) -> Pose {
        Pose {
            x: self.x,
            y: self.y,
            heading: self.heading,
        }
    }
}

/// One explicit Euler step of the curvature-driven unicycle. The heading
/// is updated first and the position then advances along the new heading.
pub fn vehicle_step(state: &VehicleState, u: f64, dt: f64, kappa_max: f64) -> Result<VehicleState> {
    let vals = [state.x, state.y, state.heading, state.s, state.speed, u, dt];
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("vehicle step".into()));
    }
    if dt <= 0.0 {
        return Err(Error::InvalidConfig(format!("dt must be positive, got {dt}")));
    }
    if u.abs() > kappa_max {
        return Err(Error::OutOfRange(format!("curvature command {u} exceeds {kappa_max}")));
    }
    let v = state.speed;
    let heading = wrap_angle(state.heading + v * u * dt);
    Ok(VehicleState {
        x: state.x + v * heading.cos() * dt,
        y: state.y + v * heading.sin() * dt,
        heading,
        s: state.s + v * dt,
        speed: v,
    })
}

/// Search half-width around the vehicle's progress for centerline
/// projection, meters.
pub const PROJECTION_WINDOW: f64 = 30.0;

/// Signed lateral distance to the centerline, positive to the left.
pub fn cross_track_error(state: &VehicleState, track: &Track) -> f64 {
    track.project(state.x, state.y, state.s, PROJECTION_WINDOW).lateral
}

/// A human policy evaluated once per tick from the true vehicle state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ScriptedHuman {
    /// Commands the track curvature at the nearest centerline point.
    Perfect,
    /// Track curvature plus feedback on lateral and heading error.
    Corrective { lateral_gain: f64, heading_gain: f64 },
    Constant(f64),
}

impl ScriptedHuman {
    pub fn corrective() -> Self {
        Self::Corrective {
            lateral_gain: 0.1,
            heading_gain: 0.8,
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "perfect" => Ok(Self::Perfect),
            "corrective" => Ok(Self::corrective()),
            other => match other.strip_prefix("constant=") {
                Some(v) => v
                    .parse()
                    .map(Self::Constant)
                    .map_err(|_| Error::InvalidConfig(format!("bad constant human `{other}`"))),
                None => Err(Error::InvalidConfig(format!("unknown scripted human `{other}`"))),
            },
        }
    }

    pub fn command(&self, state: &VehicleState, track: &Track, kappa_max: f64) -> f64 {
        let u = match *self {
            Self::Constant(u) => u,
            Self::Perfect => {
                let p = track.project(state.x, state.y, state.s, PROJECTION_WINDOW);
                track.curvature_at(p.s)
            }
            Self::Corrective {
                lateral_gain,
                heading_gain,
            } => {
                let p = track.project(state.x, state.y, state.s, PROJECTION_WINDOW);
                let heading_err = wrap_angle(state.heading - track.pose_at(p.s).heading);
                track.curvature_at(p.s) - lateral_gain * p.lateral - heading_gain * heading_err
            }
        };
        u.clamp(-kappa_max, kappa_max)
    }
}

/// Latest human command shared between an input producer and the tick
/// loop (zero-order hold). Lock-free.
#[derive(Debug, Default)]
pub struct CommandCell {
    bits: AtomicU64,
    present: AtomicBool,
}

impl CommandCell {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&self, u: f64) {
        self.bits.store(u.to_bits(), Ordering::Release);
        self.present.store(true, Ordering::Release);
    }

    /// Marks the human as absent (e.g. on disconnect).
    pub fn clear(&self) {
        self.present.store(false, Ordering::Release);
    }

    pub fn get(&self) -> Option<f64> {
        self.present
            .load(Ordering::Acquire)
            .then(|| f64::from_bits(self.bits.load(Ordering::Acquire)))
    }
}

#[derive(Clone, Debug)]
pub enum HumanSource {
    /// No human: sigma is forced to 0.
    None,
    Scripted(ScriptedHuman),
    /// Zero-order hold on the last command written to the cell; absent
    /// commands force sigma to 0.
    Live(Arc<CommandCell>),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub speed: f64,
    pub kappa_max: f64,
    /// Runs terminate when |cross-track error| exceeds this, meters.
    pub corridor: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 0.05,
            speed: 5.0,
            kappa_max: 0.2,
            corridor: 10.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    pub tick: u64,
    /// Pose at which the frame for this tick was rendered.
    pub pose: Pose,
    pub u_n: f64,
    pub u_h: Option<f64>,
    pub sigma: f64,
    pub u_pa: f64,
    /// Predictive variance in standardized label units.
    pub variance: f64,
    pub cross_track: f64,
}

impl StepRecord {
    /// `|u_pa - ((1-sigma) u_n + sigma u_h)|`, with an absent human read as 0.
    pub fn blend_residual(&self) -> f64 {
        let u_h = self.u_h.unwrap_or(0.0);
        (self.u_pa - ((1.0 - self.sigma) * self.u_n + self.sigma * u_h)).abs()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunStatus {
    Completed,
    LeftCorridor { tick: u64 },
    EndOfTrack { tick: u64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimOutcome {
    pub records: Vec<StepRecord>,
    pub status: RunStatus,
}

impl SimOutcome {
    pub fn mean_abs_cross_track(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records.iter().map(|r| r.cross_track.abs()).sum::<f64>() / self.records.len() as f64
    }
}

/// Tick-driven closed loop: render at the current pose, MC-sample the
/// network, fuse with the human command, advance the vehicle.
pub struct Simulator<'a> {
    pub net: &'a Network,
    pub track: &'a Track,
    pub fusion: FusionConfig,
    pub mc: McConfig,
    pub sim: SimConfig,
    pub image: ImageConfig,
    pub state: VehicleState,
    pub tick: u64,
}

impl<'a> Simulator<'a> {
    pub fn new(
        net: &'a Network,
        track: &'a Track,
        fusion: FusionConfig,
        mc: McConfig,
        sim: SimConfig,
        image: ImageConfig,
    ) -> Result<Self> {
        fusion.validate()?;
        image.validate()?;
        if mc.passes < 2 {
            return Err(Error::TooFewSamples {
                needed: 2,
                got: mc.passes,
            });
        }
        if image.shape() != net.config.input {
            return Err(Error::InvalidConfig(format!(
                "image shape {:?} does not match network input {:?}",
                image.shape(),
                net.config.input
            )));
        }
        Ok(Self {
            net,
            track,
            fusion,
            mc,
            sim,
            image,
            state: VehicleState::at(track.pose_at(0.0), 0.0, sim.speed),
            tick: 0,
        })
    }

    pub fn reset(&mut self) {
        self.state = VehicleState::at(self.track.pose_at(0.0), 0.0, self.sim.speed);
        self.tick = 0;
    }

    /// Advances one tick with the given human command (`None` = absent).
    pub fn step(&mut self, u_h: Option<f64>) -> Result<StepRecord> {
        let proj = self
            .track
            .project(self.state.x, self.state.y, self.state.s, PROJECTION_WINDOW);
        let image = render_view(self.track, self.state.pose(), proj.s, &self.image)?;
        // Per-tick MC seed keeps passes independent across ticks.
        let mc = McConfig {
            seed: crate::seed::derive_seed(self.mc.seed, &[self.tick]),
            ..self.mc
        };
        let samples = mc_sample(self.net, &image, &mc)?;
        let mean = predictive_mean(&samples)?;
        let variance = predictive_variance(&samples)?;
        let kmax = self.sim.kappa_max;
        let u_n = self.net.scaler.unscale(mean).clamp(-kmax, kmax);
        let u_h = u_h.map(|u| u.clamp(-kmax, kmax));
        let fusion = match u_h {
            Some(h) => fuse(u_n, h, variance, &self.fusion)?,
            None => Fusion { sigma: 0.0, u_pa: u_n },
        };
        let record = StepRecord {
            tick: self.tick,
            pose: self.state.pose(),
            u_n,
            u_h,
            sigma: fusion.sigma,
            u_pa: fusion.u_pa,
            variance,
            cross_track: proj.lateral,
        };
        self.state = vehicle_step(&self.state, fusion.u_pa.clamp(-kmax, kmax), self.sim.dt, kmax)?;
        self.tick += 1;
        Ok(record)
    }

    pub fn human_command(&self, human: &HumanSource) -> Option<f64> {
        match human {
            HumanSource::None => None,
            HumanSource::Scripted(h) => Some(h.command(&self.state, self.track, self.sim.kappa_max)),
            HumanSource::Live(cell) => cell.get(),
        }
    }

    /// True once the remaining track is shorter than the view ahead.
    pub fn near_track_end(&self) -> bool {
        self.state.s + self.image.far * 1.6 >= self.track.length()
    }
}

/// Runs `ticks` steps. Stops early, keeping the partial log, when the
/// vehicle leaves the corridor or runs out of track.
pub fn run_closed_loop(
    net: &Network,
    track: &Track,
    human: &HumanSource,
    fusion: FusionConfig,
    mc: McConfig,
    sim: SimConfig,
    image: ImageConfig,
    ticks: u64,
) -> Result<SimOutcome> {
    let mut sim = Simulator::new(net, track, fusion, mc, sim, image)?;
    let mut records = Vec::with_capacity(ticks as usize);
    let mut status = RunStatus::Completed;
    for _ in 0..ticks {
        if sim.near_track_end() {
            status = RunStatus::EndOfTrack { tick: sim.tick };
            break;
        }
        let u_h = sim.human_command(human);
        let rec = sim.step(u_h)?;
        let off = rec.cross_track.abs() > sim.sim.corridor;
        records.push(rec);
        if off {
            status = RunStatus::LeftCorridor { tick: rec.tick };
            break;
        }
    }
    Ok(SimOutcome { records, status })
}
