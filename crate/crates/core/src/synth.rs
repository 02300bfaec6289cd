//! Synthetic driving data: piecewise-constant-curvature tracks, a
//! pseudo-perspective road renderer and labeled datasets with a
//! seekable binary file format.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::binio::{put_f64s, put_text, put_u32, put_u64, OffsetReader};
use crate::error::{Error, Result};
use crate::kv::KvMap;
use crate::seed::{derive_seed, rng, TAG_NOISE, TAG_SAMPLE, TAG_SPLIT, TAG_TRACK};
use crate::tensor::Tensor;

/// Planar pose: position in meters, heading in radians.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

/// Wraps an angle to `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub length: f64,
    /// Signed curvature in 1/m, positive turning left.
    pub curvature: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrackConfig {
    pub kappa_max: f64,
    pub total_length: f64,
    pub straight_len: (f64, f64),
    pub arc_len: (f64, f64),
    /// Arc curvature magnitude is `min + (max - min) * u^exponent`.
    pub arc_kappa: (f64, f64),
    pub curvature_exponent: f64,
}

impl Default for TrackConfig {
    fn default() -> Self {
        Self {
            kappa_max: 0.2,
            total_length: 400.0,
            straight_len: (10.0, 40.0),
            arc_len: (10.0, 40.0),
            arc_kappa: (0.0, 0.2),
            curvature_exponent: 4.0,
        }
    }
}

impl TrackConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("track: {m}")));
        let range_ok = |(lo, hi): (f64, f64)| lo > 0.0 && hi >= lo && hi.is_finite();
        if !(self.kappa_max > 0.0 && self.kappa_max.is_finite()) {
            return bad("kappa_max must be positive");
        }
        if !(self.total_length > 0.0 && self.total_length.is_finite()) {
            return bad("total_length must be positive");
        }
        if !range_ok(self.straight_len) || !range_ok(self.arc_len) {
            return bad("segment length ranges must be positive and ordered");
        }
        let (lo, hi) = self.arc_kappa;
        if !(lo >= 0.0 && hi >= lo && hi <= self.kappa_max) {
            return bad("arc curvature range must satisfy 0 <= min <= max <= kappa_max");
        }
        if !(self.curvature_exponent > 0.0 && self.curvature_exponent.is_finite()) {
            return bad("curvature_exponent must be positive");
        }
        Ok(())
    }

    pub fn read_kv(kv: &KvMap, prefix: &str) -> Result<Self> {
        let d = Self::default();
        let k = |n: &str| format!("{prefix}{n}");
        let kappa_max = kv.parse_or(&k("kappa_max"), d.kappa_max)?;
        Ok(Self {
            kappa_max,
            total_length: kv.parse_or(&k("track_length"), d.total_length)?,
            straight_len: (
                kv.parse_or(&k("straight_min"), d.straight_len.0)?,
                kv.parse_or(&k("straight_max"), d.straight_len.1)?,
            ),
            arc_len: (
                kv.parse_or(&k("arc_min"), d.arc_len.0)?,
                kv.parse_or(&k("arc_max"), d.arc_len.1)?,
            ),
            arc_kappa: (
                kv.parse_or(&k("arc_kappa_min"), d.arc_kappa.0)?,
                kv.parse_or(&k("arc_kappa_max"), kappa_max)?,
            ),
            curvature_exponent: kv.parse_or(&k("curvature_exponent"), d.curvature_exponent)?,
        })
    }

    pub fn write_kv(&self, kv: &mut KvMap) {
        kv.set("kappa_max", self.kappa_max);
        kv.set("track_length", self.total_length);
        kv.set("straight_min", self.straight_len.0);
        kv.set("straight_max", self.straight_len.1);
        kv.set("arc_min", self.arc_len.0);
        kv.set("arc_max", self.arc_len.1);
        kv.set("arc_kappa_min", self.arc_kappa.0);
        kv.set("arc_kappa_max", self.arc_kappa.1);
        kv.set("curvature_exponent", self.curvature_exponent);
    }
}

/// An arc-length parameterized road centerline starting at the origin
/// heading along +x.
#[derive(Clone, Debug, PartialEq)]
pub struct Track {
    pub seed: u64,
    segments: Vec<Segment>,
    // Arc position and pose at the start of each segment.
    starts: Vec<(f64, Pose)>,
    length: f64,
}

/// Closest centerline point to a query position.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projection {
    pub s: f64,
    /// Signed distance, positive when the point lies left of the centerline.
    pub lateral: f64,
}

impl Track {
    pub fn from_segments(segments: Vec<Segment>, seed: u64) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::InvalidConfig("track needs at least one segment".into()));
        }
        let mut starts = Vec::with_capacity(segments.len());
        let mut s = 0.0;
        let mut pose = Pose {
            x: 0.0,
            y: 0.0,
            heading: 0.0,
        };
        for seg in &segments {
            if !(seg.length > 0.0 && seg.length.is_finite() && seg.curvature.is_finite()) {
                return Err(Error::InvalidConfig(format!("invalid segment {seg:?}")));
            }
            starts.push((s, pose));
            pose = advance(pose, seg.curvature, seg.length);
            s += seg.length;
        }
        Ok(Self {
            seed,
            segments,
            starts,
            length: s,
        })
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// The same track with every curvature negated (reflected about x).
    pub fn mirrored(&self) -> Self {
        let segs = self
            .segments
            .iter()
            .map(|s| Segment {
                length: s.length,
                curvature: -s.curvature,
            })
            .collect();
        Self::from_segments(segs, self.seed).expect("mirror of a valid track")
    }

    fn segment_index(&self, s: f64) -> usize {
        match self.starts.binary_search_by(|(s0, _)| s0.total_cmp(&s)) {
            Ok(i) => i,
            Err(i) => i.saturating_sub(1),
        }
    }

    pub fn curvature_at(&self, s: f64) -> f64 {
        self.segments[self.segment_index(s.clamp(0.0, self.length))].curvature
    }

    pub fn pose_at(&self, s: f64) -> Pose {
        let s = s.clamp(0.0, self.length);
        let i = self.segment_index(s);
        let (s0, p0) = self.starts[i];
        advance(p0, self.segments[i].curvature, s - s0)
    }

    /// Closest centerline point to `(x, y)` restricted to arc positions
    /// within `window` of `s_hint`.
    pub fn project(&self, x: f64, y: f64, s_hint: f64, window: f64) -> Projection {
        let lo = (s_hint - window).max(0.0);
        let hi = (s_hint + window).min(self.length).max(lo);
        let mut best: Option<(f64, f64)> = None; // (distance^2, s)
        let mut consider = |s: f64| {
            let p = self.pose_at(s);
            let d2 = (x - p.x).powi(2) + (y - p.y).powi(2);
            if best.is_none_or(|(b, _)| d2 < b) {
                best = Some((d2, s));
            }
        };
        for (i, seg) in self.segments.iter().enumerate() {
            let (s0, p0) = self.starts[i];
            let (a, b) = (lo.max(s0), hi.min(s0 + seg.length));
            if a > b {
                continue;
            }
            consider(a);
            consider(b);
            let k = seg.curvature;
            if k == 0.0 {
                let t = (x - p0.x) * p0.heading.cos() + (y - p0.y) * p0.heading.sin();
                consider((s0 + t).clamp(a, b));
            } else {
                let cx = p0.x - p0.heading.sin() / k;
                let cy = p0.y + p0.heading.cos() / k;
                let (vx, vy) = (x - cx, y - cy);
                if vx == 0.0 && vy == 0.0 {
                    continue;
                }
                let theta = if k > 0.0 { vx.atan2(-vy) } else { (-vx).atan2(vy) };
                let period = 2.0 * PI / k.abs();
                let mut t = (wrap_angle(theta - p0.heading) / k).rem_euclid(period);
                while s0 + t <= b {
                    if s0 + t >= a {
                        consider(s0 + t);
                    }
                    t += period;
                }
            }
        }
        let (_, s) = best.expect("at least one candidate");
        let p = self.pose_at(s);
        let (dx, dy) = (x - p.x, y - p.y);
        let normal = -p.heading.sin() * dx + p.heading.cos() * dy;
        let dist = (dx * dx + dy * dy).sqrt();
        Projection {
            s,
            lateral: if normal < 0.0 { -dist } else { dist },
        }
    }
}

/// Moves along a constant-curvature arc (or straight line) by `t` meters.
fn advance(p: Pose, k: f64, t: f64) -> Pose {
    if k == 0.0 {
        Pose {
            x: p.x + t * p.heading.cos(),
            y: p.y + t * p.heading.sin(),
            heading: p.heading,
        }
    } else {
        let h = p.heading + k * t;
        Pose {
            x: p.x + (h.sin() - p.heading.sin()) / k,
            y: p.y - (h.cos() - p.heading.cos()) / k,
            heading: h,
        }
    }
}

/// Alternating straights and arcs with curvature magnitudes concentrated
/// near zero and a sparse tail of tight turns.
pub fn generate_track(seed: u64, config: &TrackConfig) -> Result<Track> {
    config.validate()?;
    if config.arc_kappa.1 == 0.0 {
        return Track::from_segments(
            vec![Segment {
                length: config.total_length,
                curvature: 0.0,
            }],
            seed,
        );
    }
    let mut r = rng(seed);
    let mut segments = Vec::new();
    let mut total = 0.0;
    let mut straight = true;
    while total < config.total_length {
        let (range, curvature) = if straight {
            (config.straight_len, 0.0)
        } else {
            let (lo, hi) = config.arc_kappa;
            let u: f64 = r.random();
            let mag = lo + (hi - lo) * u.powf(config.curvature_exponent);
            let sign = if r.random::<bool>() { 1.0 } else { -1.0 };
            (config.arc_len, sign * mag)
        };
        let mut length = if range.1 > range.0 {
            r.random_range(range.0..range.1)
        } else {
            range.0
        };
        length = length.min(config.total_length - total);
        if length <= 0.0 {
            break;
        }
        segments.push(Segment { length, curvature });
        total += length;
        straight = !straight;
    }
    Track::from_segments(segments, seed)
}

/// Synthetic front camera geometry.
///
/// Rows map to ground distances with `1/d` linear between `far` (top row)
/// and `near` (bottom row); a pixel column spans `2 * d * half_fov / (W-1)`
/// meters laterally at distance `d`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageConfig {
    pub height: usize,
    pub width: usize,
    pub near: f64,
    pub far: f64,
    pub half_fov: f64,
    pub lane_half_width: f64,
    pub line_half_width: f64,
    /// Uniform pixel noise amplitude; 0 disables noise.
    pub noise: f64,
    pub noise_seed: u64,
}

impl Default for ImageConfig {
    fn default() -> Self {
        Self {
            height: 56,
            width: 96,
            near: 2.0,
            far: 20.0,
            half_fov: 0.5,
            lane_half_width: 1.8,
            line_half_width: 0.12,
            noise: 0.02,
            noise_seed: 0,
        }
    }
}

impl ImageConfig {
    pub fn validate(&self) -> Result<()> {
        if self.height < 2 || self.width < 2 {
            return Err(Error::InvalidConfig("image must be at least 2x2".into()));
        }
        if !(self.near > 0.0 && self.far > self.near && self.half_fov > 0.0) {
            return Err(Error::InvalidConfig("image: need 0 < near < far and half_fov > 0".into()));
        }
        if !(self.lane_half_width > 0.0 && self.line_half_width > 0.0 && (0.0..=1.0).contains(&self.noise)) {
            return Err(Error::InvalidConfig("image: invalid lane geometry or noise".into()));
        }
        Ok(())
    }

    pub fn shape(&self) -> [usize; 3] {
        [1, self.height, self.width]
    }

    pub fn read_kv(kv: &KvMap) -> Result<Self> {
        let d = Self::default();
        Ok(Self {
            height: kv.parse_or("image_height", d.height)?,
            width: kv.parse_or("image_width", d.width)?,
            near: kv.parse_or("view_near", d.near)?,
            far: kv.parse_or("view_far", d.far)?,
            half_fov: kv.parse_or("half_fov", d.half_fov)?,
            lane_half_width: kv.parse_or("lane_half_width", d.lane_half_width)?,
            line_half_width: kv.parse_or("line_half_width", d.line_half_width)?,
            noise: kv.parse_or("noise", d.noise)?,
            noise_seed: kv.parse_or("noise_seed", d.noise_seed)?,
        })
    }

    pub fn write_kv(&self, kv: &mut KvMap) {
        kv.set("image_height", self.height);
        kv.set("image_width", self.width);
        kv.set("view_near", self.near);
        kv.set("view_far", self.far);
        kv.set("half_fov", self.half_fov);
        kv.set("lane_half_width", self.lane_half_width);
        kv.set("line_half_width", self.line_half_width);
        kv.set("noise", self.noise);
        kv.set("noise_seed", self.noise_seed);
    }
}

/// A labeled camera frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub image: Tensor,
    /// Curvature (inverse turning radius) at the capture pose.
    pub label: f64,
    pub pose_id: u64,
    /// Arc position of the capture pose.
    pub s: f64,
}

const POLY_STEP: f64 = 0.2;

/// Rasterizes the road ahead as seen from `pose`. `s_hint` is the arc
/// position the visible centerline is traced from.
pub fn render_view(track: &Track, pose: Pose, s_hint: f64, cfg: &ImageConfig) -> Result<Tensor> {
    cfg.validate()?;
    let (ch, sh) = (pose.heading.cos(), pose.heading.sin());
    let start = (s_hint - 2.0).max(0.0);
    let end = (s_hint + 1.6 * cfg.far + 5.0).min(track.length());
    let steps = ((end - start) / POLY_STEP).ceil().max(1.0) as usize;
    let poly: Vec<(f64, f64)> = (0..=steps)
        .map(|i| {
            let s = (start + i as f64 * POLY_STEP).min(end);
            let p = track.pose_at(s);
            let (dx, dy) = (p.x - pose.x, p.y - pose.y);
            (ch * dx + sh * dy, -sh * dx + ch * dy)
        })
        .collect();

    let (h, w) = (cfg.height, cfg.width);
    let half = (w - 1) as f64 / 2.0;
    let mut data = vec![0.1; h * w];
    let mut noise_rng = (cfg.noise > 0.0).then(|| {
        rng(derive_seed(
            cfg.noise_seed,
            &[TAG_NOISE, track.seed, s_hint.to_bits(), pose.x.to_bits(), pose.y.to_bits()],
        ))
    });
    for r in 0..h {
        let t = r as f64 / (h - 1) as f64;
        let d = 1.0 / (1.0 / cfg.far + (1.0 / cfg.near - 1.0 / cfg.far) * t);
        let center = poly.windows(2).find_map(|seg| {
            let ((f0, l0), (f1, l1)) = (seg[0], seg[1]);
            (f0 <= d && f1 > d).then(|| l0 + (l1 - l0) * (d - f0) / (f1 - f0))
        });
        let row = &mut data[r * w..(r + 1) * w];
        let Some(yc) = center else { continue };
        let px = 2.0 * d * cfg.half_fov / (w - 1) as f64;
        let lw = cfg.line_half_width.max(0.5 * px);
        for (c, v) in row.iter_mut().enumerate() {
            let y = (half - c as f64) / half * d * cfg.half_fov;
            let off = (y - yc).abs();
            let road = 0.1 + 0.35 * ((cfg.lane_half_width - off) / px + 0.5).clamp(0.0, 1.0);
            let left = (-((y - (yc + cfg.lane_half_width)) / lw).powi(2)).exp();
            let right = (-((y - (yc - cfg.lane_half_width)) / lw).powi(2)).exp();
            *v = road.max(left.max(right));
        }
    }
    if let Some(r) = noise_rng.as_mut() {
        for v in data.iter_mut() {
            *v = (*v + cfg.noise * (2.0 * r.random::<f64>() - 1.0)).clamp(0.0, 1.0);
        }
    }
    Tensor::new(vec![1, h, w], data)
}

/// Renders the centerline view at arc position `s`.
pub fn render_frame(track: &Track, s: f64, cfg: &ImageConfig) -> Result<Frame> {
    if !(s >= 0.0 && s < track.length()) {
        return Err(Error::OutOfRange(format!(
            "arc position {s} outside [0, {})",
            track.length()
        )));
    }
    let image = render_view(track, track.pose_at(s), s, cfg)?;
    Ok(Frame {
        image,
        label: track.curvature_at(s),
        pose_id: 0,
        s,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub count: usize,
    pub image_shape: [usize; 3],
    pub label_min: f64,
    pub label_max: f64,
    pub label_mean: f64,
    pub label_std: f64,
    pub seed: u64,
    pub config_hash: u64,
    /// Camera the frames were rendered with.
    pub image: ImageConfig,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LabelStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub std: f64,
}

pub fn label_stats(labels: impl IntoIterator<Item = f64>) -> Option<LabelStats> {
    let v: Vec<f64> = labels.into_iter().collect();
    if v.is_empty() {
        return None;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    Some(LabelStats {
        min: v.iter().copied().fold(f64::INFINITY, f64::min),
        max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        mean,
        std: var.sqrt(),
    })
}

impl DatasetManifest {
    fn to_kv(&self) -> KvMap {
        let mut kv = KvMap::new();
        kv.set("count", self.count);
        self.image.write_kv(&mut kv);
        kv.set("label_min", self.label_min);
        kv.set("label_max", self.label_max);
        kv.set("label_mean", self.label_mean);
        kv.set("label_std", self.label_std);
        kv.set("seed", self.seed);
        kv.set("config_hash", format!("{:016x}", self.config_hash));
        kv
    }

    fn from_kv(kv: &KvMap) -> Result<Self> {
        let hash = kv.require("config_hash")?;
        let image = ImageConfig::read_kv(kv)?;
        image.validate()?;
        Ok(Self {
            count: kv.parse_required("count")?,
            image_shape: image.shape(),
            image,
            label_min: kv.parse_required("label_min")?,
            label_max: kv.parse_required("label_max")?,
            label_mean: kv.parse_required("label_mean")?,
            label_std: kv.parse_required("label_std")?,
            seed: kv.parse_required("seed")?,
            config_hash: u64::from_str_radix(hash, 16)
                .map_err(|_| Error::InvalidConfig(format!("bad config_hash `{hash}`")))?,
        })
    }

    /// True when the stored statistics match `frames` within 1e-9.
    pub fn consistent_with(&self, frames: &[Frame]) -> bool {
        let Some(st) = label_stats(frames.iter().map(|f| f.label)) else {
            return false;
        };
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9;
        self.count == frames.len()
            && close(self.label_min, st.min)
            && close(self.label_max, st.max)
            && close(self.label_mean, st.mean)
            && close(self.label_std, st.std)
            && frames.iter().all(|f| f.image.shape() == self.image_shape)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub frames: Vec<Frame>,
    pub manifest: DatasetManifest,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn subset(&self, indices: &[usize]) -> Vec<Frame> {
        indices.iter().map(|&i| self.frames[i].clone()).collect()
    }
}

/// Uniformly samples arc positions on every track, renders them, and
/// shuffles the records by `seed`.
pub fn build_dataset(
    tracks: &[Track],
    samples_per_track: usize,
    seed: u64,
    image: &ImageConfig,
    config_hash: u64,
) -> Result<Dataset> {
    if tracks.is_empty() {
        return Err(Error::InvalidConfig("need at least one track".into()));
    }
    if samples_per_track == 0 {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    image.validate()?;
    let mut frames = Vec::with_capacity(tracks.len() * samples_per_track);
    for (ti, track) in tracks.iter().enumerate() {
        let mut r = rng(derive_seed(seed, &[TAG_SAMPLE, ti as u64]));
        // Keep the full view ahead on the track.
        let limit = (track.length() - 1.6 * image.far).max(0.5 * track.length());
        for k in 0..samples_per_track {
            let s = r.random_range(0.0..limit);
            let mut f = render_frame(track, s, image)?;
            f.pose_id = (ti * samples_per_track + k) as u64;
            frames.push(f);
        }
    }
    frames.shuffle(&mut rng(derive_seed(seed, &[TAG_SAMPLE, u64::MAX])));
    let st = label_stats(frames.iter().map(|f| f.label)).expect("non-empty");
    let manifest = DatasetManifest {
        count: frames.len(),
        image_shape: image.shape(),
        label_min: st.min,
        label_max: st.max,
        label_mean: st.mean,
        label_std: st.std,
        seed,
        config_hash,
        image: image.clone(),
    };
    Ok(Dataset { frames, manifest })
}

/// Deterministic disjoint `(train, validation)` index split.
pub fn split_indices(n: usize, val_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..1.0).contains(&val_fraction) {
        return Err(Error::InvalidConfig(format!("validation fraction {val_fraction} not in [0, 1)")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng(derive_seed(seed, &[TAG_SPLIT])));
    let n_val = (n as f64 * val_fraction).round() as usize;
    let train = idx.split_off(n_val);
    Ok((train, idx))
}

/// FNV-1a, used to fingerprint configuration text.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Generator settings read from a `key = value` file.
///
/// Required keys: `tracks`, `samples_per_track`. Everything else has a
/// default (see [`TrackConfig`] and [`ImageConfig`]).
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub tracks: usize,
    pub samples_per_track: usize,
    pub track: TrackConfig,
    pub image: ImageConfig,
}

impl GeneratorConfig {
    pub fn from_kv(kv: &KvMap) -> Result<Self> {
        let cfg = Self {
            seed: kv.parse_or("seed", 0)?,
            tracks: kv.parse_required("tracks")?,
            samples_per_track: kv.parse_required("samples_per_track")?,
            track: TrackConfig::read_kv(kv, "")?,
            image: ImageConfig::read_kv(kv)?,
        };
        cfg.track.validate()?;
        cfg.image.validate()?;
        if cfg.tracks == 0 {
            return Err(Error::InvalidConfig("tracks must be at least 1".into()));
        }
        Ok(cfg)
    }

    pub fn to_kv(&self) -> KvMap {
        let mut kv = KvMap::new();
        kv.set("seed", self.seed);
        kv.set("tracks", self.tracks);
        kv.set("samples_per_track", self.samples_per_track);
        self.track.write_kv(&mut kv);
        self.image.write_kv(&mut kv);
        kv
    }

    pub fn hash(&self) -> u64 {
        fnv1a(self.to_kv().to_text().as_bytes())
    }

    pub fn track_seed(&self, index: usize) -> u64 {
        derive_seed(self.seed, &[TAG_TRACK, index as u64])
    }

    pub fn generate_tracks(&self) -> Result<Vec<Track>> {
        (0..self.tracks)
            .map(|i| generate_track(self.track_seed(i), &self.track))
            .collect()
    }

    pub fn generate(&self) -> Result<Dataset> {
        let tracks = self.generate_tracks()?;
        build_dataset(&tracks, self.samples_per_track, self.seed, &self.image, self.hash())
    }
}

pub const DATASET_MAGIC: &[u8; 8] = b"STEERDAT";
pub const DATASET_VERSION: u32 = 1;

/// Writes a dataset.
///
/// ```text
/// magic     8 bytes  "STEERDAT"
/// version   u32      1
/// header    u32 length + UTF-8 `key = value` manifest
/// records   count x [label f64, pose_id u64, s f64, C*H*W pixels f64]
/// ```
/// All integers and floats are little-endian.
pub fn write_dataset(w: &mut impl Write, ds: &Dataset) -> Result<()> {
    w.write_all(DATASET_MAGIC)?;
    put_u32(w, DATASET_VERSION)?;
    put_text(w, &ds.manifest.to_kv().to_text())?;
    for f in &ds.frames {
        put_f64s(w, &[f.label])?;
        put_u64(w, f.pose_id)?;
        put_f64s(w, &[f.s])?;
        put_f64s(w, f.image.data())?;
    }
    Ok(())
}

pub fn read_dataset(r: &mut impl Read) -> Result<Dataset> {
    let mut r = OffsetReader::new(r);
    r.magic(DATASET_MAGIC)?;
    r.version(DATASET_VERSION)?;
    let header_at = r.offset();
    let header = r.text(1 << 20, "manifest header")?;
    let manifest = KvMap::parse(&header)
        .and_then(|kv| DatasetManifest::from_kv(&kv))
        .map_err(|e| Error::Corrupt {
            offset: header_at,
            reason: format!("manifest: {e}"),
        })?;
    let shape = manifest.image_shape;
    let pixels: usize = shape.iter().product();
    if pixels == 0 || pixels > 1 << 24 {
        return Err(Error::Corrupt {
            offset: header_at,
            reason: format!("implausible image shape {shape:?}"),
        });
    }
    let mut frames = Vec::with_capacity(manifest.count.min(1 << 16));
    for _ in 0..manifest.count {
        let label = r.f64s(1, "label")?[0];
        let pose_id = r.u64("pose id")?;
        let s = r.f64s(1, "arc position")?[0];
        let data = r.f64s(pixels, "pixels")?;
        let image = Tensor::new(shape.to_vec(), data).map_err(|e| r.corrupt(e.to_string()))?;
        frames.push(Frame {
            image,
            label,
            pose_id,
            s,
        });
    }
    r.expect_eof()?;
    if !manifest.consistent_with(&frames) {
        return Err(Error::Corrupt {
            offset: header_at,
            reason: "manifest statistics do not match records".into(),
        });
    }
    Ok(Dataset { frames, manifest })
}

pub fn save_dataset(path: impl AsRef<Path>, ds: &Dataset) -> Result<()> {
    let mut buf = Vec::new();
    write_dataset(&mut buf, ds)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let bytes = std::fs::read(path)?;
    read_dataset(&mut bytes.as_slice())
}
