//! Synthetic moving-polygon scenes with exact ground truth.
//!
//! Each polygon is sampled along its edges. At every generator step the edge
//! samples are moved with the polygon's pose and each one accumulates the
//! distance it travelled along the edge's outward normal, firing an event per
//! `contrast_event_spacing` pixels. Edges whose normal is (nearly)
//! perpendicular to the local motion fire nothing, the way a real sensor sees
//! no change along an edge sliding parallel to itself. Polarity follows
//! whether the bright or the dark side of the edge is moving onto the pixel.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use super::{CenterRecord, TruthFile};
use crate::error::{Error, Result};
use crate::event::{Event, Polarity, SensorGeometry};

/// Edges with `|n . v_hat|` below this emit nothing.
pub const PARALLEL_CUTOFF: f64 = 0.1;

fn one() -> f64 {
    1.0
}

fn default_dt_gen() -> f64 {
    1e-4
}

fn default_center_interval() -> f64 {
    1e-3
}

/// Pose offset at time `t`. Rotation (radians) and scale act about the
/// polygon's centroid; translation moves the centroid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Keyframe {
    pub t: f64,
    #[serde(default)]
    pub dx: f64,
    #[serde(default)]
    pub dy: f64,
    #[serde(default)]
    pub rotation: f64,
    #[serde(default = "one")]
    pub scale: f64,
}

impl Keyframe {
    pub fn at(t: f64, dx: f64, dy: f64) -> Self {
        Keyframe {
            t,
            dx,
            dy,
            rotation: 0.0,
            scale: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeSpec {
    /// Polygon vertices in pixels at the identity pose.
    pub vertices: Vec<[f64; 2]>,
    /// Sign of the polygon's brightness against the background.
    #[serde(default = "one")]
    pub contrast: f64,
    /// Piecewise-linear pose; clamped before the first and after the last
    /// keyframe. Empty means static.
    #[serde(default)]
    pub trajectory: Vec<Keyframe>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub width: u32,
    pub height: u32,
    pub shapes: Vec<ShapeSpec>,
    /// Pixels of normal edge travel per event, and edge sample spacing.
    #[serde(default = "one")]
    pub contrast_event_spacing: f64,
    /// Uniform background noise, events per second of scene time.
    #[serde(default)]
    pub noise_rate: f64,
    /// Scene length in seconds, before the speed factor is applied.
    pub duration: f64,
    #[serde(default = "one")]
    pub speed_factor: f64,
    #[serde(default = "default_dt_gen")]
    pub dt_gen: f64,
    /// Spacing of ground-truth center samples in scene time.
    #[serde(default = "default_center_interval")]
    pub center_interval: f64,
}

impl SceneSpec {
    pub fn geometry(&self) -> Result<SensorGeometry> {
        SensorGeometry::new(self.width, self.height)
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry()?;
        let positive = |name: &'static str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(name, format!("must be finite and > 0, got {v}")))
            }
        };
        positive("duration", self.duration)?;
        positive("contrast_event_spacing", self.contrast_event_spacing)?;
        positive("speed_factor", self.speed_factor)?;
        positive("dt_gen", self.dt_gen)?;
        positive("center_interval", self.center_interval)?;
        if !(self.noise_rate.is_finite() && self.noise_rate >= 0.0) {
            return Err(Error::invalid(
                "noise_rate",
                format!("must be finite and >= 0, got {}", self.noise_rate),
            ));
        }
        for (i, s) in self.shapes.iter().enumerate() {
            if s.vertices.len() < 3 || polygon_area(&s.vertices).abs() < 1e-9 {
                return Err(Error::invalid("shapes", format!("shape {i} is not a proper polygon")));
            }
            if s.vertices.iter().flatten().any(|v| !v.is_finite()) || !s.contrast.is_finite() || s.contrast == 0.0 {
                return Err(Error::invalid("shapes", format!("shape {i} has non-finite vertices or zero contrast")));
            }
            if s.trajectory.windows(2).any(|w| !(w[1].t > w[0].t)) {
                return Err(Error::invalid("shapes", format!("shape {i} keyframes must have increasing t")));
            }
            if s.trajectory.iter().any(|k| !(k.scale > 0.0)) {
                return Err(Error::invalid("shapes", format!("shape {i} keyframe scale must be > 0")));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            path: "<scene>".into(),
            line: e.line(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_owned(),
            line: e.line(),
            message: e.to_string(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene specs always serialize")
    }
}

/// Generator output. `labels[i]` is the object index of `events[i]`, `None`
/// for background noise.
#[derive(Clone, Debug, PartialEq)]
pub struct Synthesis {
    pub geom: SensorGeometry,
    pub events: Vec<Event>,
    pub labels: Vec<Option<usize>>,
    pub centers: Vec<CenterRecord>,
}

impl Synthesis {
    pub fn truth(&self) -> TruthFile {
        TruthFile {
            geom: self.geom,
            events: self.events.clone(),
            labels: self.labels.clone(),
        }
    }

    /// Number of objects whose center is on the sensor at `t`, using the
    /// latest center sample at or before `t`.
    pub fn visible_at(&self, t: f64) -> usize {
        let end = self.centers.partition_point(|c| c.t <= t);
        let Some(last) = end.checked_sub(1) else {
            return 0;
        };
        let t_sample = self.centers[last].t;
        self.centers[..end]
            .iter()
            .rev()
            .take_while(|c| c.t == t_sample)
            .filter(|c| c.visible)
            .count()
    }
}

/// Signed shoelace area.
pub fn polygon_area(v: &[[f64; 2]]) -> f64 {
    let n = v.len();
    (0..n)
        .map(|i| {
            let (a, b) = (v[i], v[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
        / 2.0
}

/// Area centroid of a simple polygon.
pub fn polygon_centroid(v: &[[f64; 2]]) -> [f64; 2] {
    let n = v.len();
    let a = polygon_area(v);
    let (mut cx, mut cy) = (0.0, 0.0);
    for i in 0..n {
        let (p, q) = (v[i], v[(i + 1) % n]);
        let cross = p[0] * q[1] - q[0] * p[1];
        cx += (p[0] + q[0]) * cross;
        cy += (p[1] + q[1]) * cross;
    }
    [cx / (6.0 * a), cy / (6.0 * a)]
}

#[derive(Clone, Copy, Debug)]
struct Pose {
    dx: f64,
    dy: f64,
    rotation: f64,
    scale: f64,
}

fn pose_at(trajectory: &[Keyframe], t: f64) -> Pose {
    let from = |k: &Keyframe| Pose {
        dx: k.dx,
        dy: k.dy,
        rotation: k.rotation,
        scale: k.scale,
    };
    match trajectory {
        [] => Pose {
            dx: 0.0,
            dy: 0.0,
            rotation: 0.0,
            scale: 1.0,
        },
        [first, ..] if t <= first.t => from(first),
        [.., last] if t >= last.t => from(last),
        _ => {
            let i = trajectory.partition_point(|k| k.t <= t);
            let (a, b) = (&trajectory[i - 1], &trajectory[i]);
            let s = (t - a.t) / (b.t - a.t);
            let lerp = |x: f64, y: f64| x + (y - x) * s;
            Pose {
                dx: lerp(a.dx, b.dx),
                dy: lerp(a.dy, b.dy),
                rotation: lerp(a.rotation, b.rotation),
                scale: lerp(a.scale, b.scale),
            }
        }
    }
}

impl Pose {
    /// Maps a centroid-relative point to the sensor.
    fn apply(&self, centroid: [f64; 2], q: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.rotation.sin_cos();
        [
            centroid[0] + self.dx + self.scale * (c * q[0] - s * q[1]),
            centroid[1] + self.dy + self.scale * (s * q[0] + c * q[1]),
        ]
    }

    fn rotate(&self, v: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.rotation.sin_cos();
        [c * v[0] - s * v[1], s * v[0] + c * v[1]]
    }
}

struct EdgeSamples {
    /// Centroid-relative sample positions.
    local: Vec<[f64; 2]>,
    /// Outward unit normal in the polygon frame.
    normal: [f64; 2],
    /// Normal travel accumulated since the last event, per sample.
    travel: Vec<f64>,
}

struct ShapeState {
    centroid: [f64; 2],
    edges: Vec<EdgeSamples>,
}

fn prepare(shape: &ShapeSpec, spacing: f64, rng: &mut ChaCha8Rng) -> ShapeState {
    let centroid = polygon_centroid(&shape.vertices);
    let orientation = polygon_area(&shape.vertices).signum();
    let max_scale = shape.trajectory.iter().map(|k| k.scale).fold(1.0, f64::max);
    let local: Vec<[f64; 2]> = shape
        .vertices
        .iter()
        .map(|v| [v[0] - centroid[0], v[1] - centroid[1]])
        .collect();
    let n = local.len();
    let edges = (0..n)
        .map(|i| {
            let (a, b) = (local[i], local[(i + 1) % n]);
            let e = [b[0] - a[0], b[1] - a[1]];
            let len = e[0].hypot(e[1]);
            let count = ((len * max_scale / spacing).ceil() as usize).max(1);
            let samples = (0..count)
                .map(|m| {
                    let s = (m as f64 + 0.5) / count as f64;
                    [a[0] + s * e[0], a[1] + s * e[1]]
                })
                .collect();
            EdgeSamples {
                local: samples,
                normal: [orientation * e[1] / len, -orientation * e[0] / len],
                // Pixels differ in their firing thresholds, so edge samples start
                // out of phase instead of firing as one front.
                travel: (0..count).map(|_| rng.random::<f64>()).collect(),
            }
        })
        .collect();
    ShapeState { centroid, edges }
}

fn to_pixel(p: [f64; 2], geom: &SensorGeometry) -> Option<(u16, u16)> {
    let (x, y) = (p[0].round(), p[1].round());
    if x < 0.0 || y < 0.0 || x > f64::from(geom.width - 1) || y > f64::from(geom.height - 1) {
        return None;
    }
    Some((x as u16, y as u16))
}

fn round_us(t: f64) -> f64 {
    (t * 1e6).round() / 1e6
}

/// Renders `spec` into an event stream with per-event truth and center
/// trajectories. Deterministic in `seed`; the speed factor only divides the
/// final timestamps.
pub fn generate(spec: &SceneSpec, seed: u64) -> Result<Synthesis> {
    spec.validate()?;
    let geom = spec.geometry()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(seed);
    noise_rng.set_stream(1);

    let mut shapes: Vec<ShapeState> = spec
        .shapes
        .iter()
        .map(|s| prepare(s, spec.contrast_event_spacing, &mut rng))
        .collect();

    let mut tagged: Vec<(f64, Event, Option<usize>)> = Vec::new();
    let steps = (spec.duration / spec.dt_gen).ceil() as usize;
    for k in 0..steps {
        let t0 = k as f64 * spec.dt_gen;
        let t1 = ((k + 1) as f64 * spec.dt_gen).min(spec.duration);
        let start = tagged.len();
        for (obj, (shape, state)) in spec.shapes.iter().zip(&mut shapes).enumerate() {
            let before = pose_at(&shape.trajectory, t0);
            let after = pose_at(&shape.trajectory, t1);
            for edge in &mut state.edges {
                let n = after.rotate(edge.normal);
                for (q, travel) in edge.local.iter().zip(&mut edge.travel) {
                    let p0 = before.apply(state.centroid, *q);
                    let p1 = after.apply(state.centroid, *q);
                    let d = [p1[0] - p0[0], p1[1] - p0[1]];
                    let speed = d[0].hypot(d[1]);
                    if speed == 0.0 {
                        continue;
                    }
                    let along = n[0] * d[0] + n[1] * d[1];
                    if along.abs() < PARALLEL_CUTOFF * speed {
                        continue;
                    }
                    *travel += along.abs() / spec.contrast_event_spacing;
                    // Advancing edges put the polygon's side on the pixel.
                    let polarity = if shape.contrast * along > 0.0 {
                        Polarity::Positive
                    } else {
                        Polarity::Negative
                    };
                    while *travel >= 1.0 {
                        *travel -= 1.0;
                        let t = t0 + rng.random::<f64>() * (t1 - t0);
                        if let Some((x, y)) = to_pixel(p1, &geom) {
                            tagged.push((t, Event::new(t, x, y, polarity), Some(obj)));
                        }
                    }
                }
            }
        }
        tagged[start..].sort_by(|a, b| a.0.total_cmp(&b.0));
    }

    if spec.noise_rate > 0.0 {
        let gap = Exp::new(spec.noise_rate).map_err(|e| Error::invalid("noise_rate", e.to_string()))?;
        let mut t = gap.sample(&mut noise_rng);
        let mut noise = Vec::new();
        while t < spec.duration {
            let x = noise_rng.random_range(0..geom.width) as u16;
            let y = noise_rng.random_range(0..geom.height) as u16;
            let p = if noise_rng.random_bool(0.5) {
                Polarity::Positive
            } else {
                Polarity::Negative
            };
            noise.push((t, Event::new(t, x, y, p), None));
            t += gap.sample(&mut noise_rng);
        }
        tagged.extend(noise);
        tagged.sort_by(|a, b| a.0.total_cmp(&b.0));
    }

    let mut events = Vec::with_capacity(tagged.len());
    let mut labels = Vec::with_capacity(tagged.len());
    for (t, mut e, label) in tagged {
        e.t = round_us(t) / spec.speed_factor;
        events.push(e);
        labels.push(label);
    }

    let samples = (spec.duration / spec.center_interval).floor() as usize;
    let mut centers = Vec::with_capacity((samples + 1) * shapes.len());
    for k in 0..=samples {
        let t = k as f64 * spec.center_interval;
        for (obj, (shape, state)) in spec.shapes.iter().zip(&shapes).enumerate() {
            let pose = pose_at(&shape.trajectory, t);
            let [x, y] = pose.apply(state.centroid, [0.0, 0.0]);
            centers.push(CenterRecord {
                t: round_us(t) / spec.speed_factor,
                object_id: obj,
                x,
                y,
                visible: x >= 0.0 && y >= 0.0 && x <= f64::from(geom.width - 1) && y <= f64::from(geom.height - 1),
            });
        }
    }

    Ok(Synthesis {
        geom,
        events,
        labels,
        centers,
    })
}

/// Regular polygon with `n` vertices of circumradius `r` around `(cx, cy)`.
pub fn regular_polygon(n: usize, r: f64, cx: f64, cy: f64, phase: f64) -> Vec<[f64; 2]> {
    (0..n)
        .map(|i| {
            let a = phase + std::f64::consts::TAU * i as f64 / n as f64;
            [cx + r * a.cos(), cy + r * a.sin()]
        })
        .collect()
}

pub fn rectangle(cx: f64, cy: f64, w: f64, h: f64) -> Vec<[f64; 2]> {
    vec![
        [cx - w / 2.0, cy - h / 2.0],
        [cx + w / 2.0, cy - h / 2.0],
        [cx + w / 2.0, cy + h / 2.0],
        [cx - w / 2.0, cy + h / 2.0],
    ]
}

/// Keyframes visiting `offsets` in turn every `segment` seconds until
/// `duration`, with rotation advancing at `spin` rad/s.
pub fn cyclic_path(offsets: &[[f64; 2]], segment: f64, duration: f64, spin: f64) -> Vec<Keyframe> {
    let count = (duration / segment).ceil() as usize + 1;
    (0..count)
        .map(|i| {
            let t = i as f64 * segment;
            let [dx, dy] = offsets[i % offsets.len()];
            Keyframe {
                t,
                dx,
                dy,
                rotation: spin * t,
                scale: 1.0,
            }
        })
        .collect()
}

fn shape(vertices: Vec<[f64; 2]>, contrast: f64, trajectory: Vec<Keyframe>) -> ShapeSpec {
    ShapeSpec {
        vertices,
        contrast,
        trajectory,
    }
}

/// Five shapes of mixed contrast on a 240x180 sensor. They share a fast
/// jittering translation, as seen from a moving camera, and some also spin.
/// Background noise runs at about 5% of the object event rate.
pub fn reference_scene(duration: f64) -> SceneSpec {
    let seg = 0.06;
    let ego = [[0.0, 0.0], [18.0, 10.0], [-4.0, 16.0], [-16.0, -6.0], [10.0, -12.0]];
    let path = |spin: f64| cyclic_path(&ego, seg, duration, spin);
    let shapes = vec![
        shape(rectangle(45.0, 45.0, 26.0, 26.0), 1.0, path(0.0)),
        shape(regular_polygon(3, 17.0, 120.0, 47.0, -std::f64::consts::FRAC_PI_2), -1.0, path(6.0)),
        shape(regular_polygon(6, 14.0, 195.0, 45.0, 0.0), 1.0, path(0.0)),
        shape(rectangle(80.0, 132.0, 32.0, 20.0), -1.0, path(-4.0)),
        shape(regular_polygon(5, 16.0, 160.0, 132.0, 0.3), 1.0, path(0.0)),
    ];
    SceneSpec {
        width: 240,
        height: 180,
        shapes,
        contrast_event_spacing: 1.0,
        noise_rate: 0.0,
        duration,
        speed_factor: 1.0,
        dt_gen: default_dt_gen(),
        center_interval: default_center_interval(),
    }
    .with_noise_fraction(0.05)
}

/// Four centrally symmetric shapes carried along one piecewise-linear path
/// by camera motion, without rotation, so every edge-event centroid sits on
/// the polygon centroid.
pub fn tracking_scene(duration: f64) -> SceneSpec {
    let ego = [[0.0, 0.0], [28.0, 14.0], [8.0, -18.0], [-24.0, 6.0], [-6.0, 18.0]];
    let path = || cyclic_path(&ego, 0.3, duration, 0.0);
    let shapes = vec![
        shape(rectangle(50.0, 45.0, 32.0, 32.0), 1.0, path()),
        shape(regular_polygon(6, 18.0, 190.0, 45.0, 0.0), -1.0, path()),
        shape(rectangle(52.0, 135.0, 40.0, 24.0), 1.0, path()),
        shape(regular_polygon(4, 21.0, 190.0, 135.0, 0.0), -1.0, path()),
    ];
    SceneSpec {
        width: 240,
        height: 180,
        shapes,
        contrast_event_spacing: 1.0,
        noise_rate: 0.0,
        duration,
        speed_factor: 1.0,
        dt_gen: default_dt_gen(),
        center_interval: default_center_interval(),
    }
    .with_noise_fraction(0.05)
}

/// Seven objects. Six polygons spin in place in two rows; the seventh
/// crosses the middle lane at constant speed and leaves through the right
/// border after about 4.4 s.
pub fn exit_scene(duration: f64) -> SceneSpec {
    let spin = |rate: f64| vec![Keyframe::at(0.0, 0.0, 0.0), Keyframe { rotation: rate * duration, ..Keyframe::at(duration, 0.0, 0.0) }];
    let mut shapes = vec![
        shape(rectangle(40.0, 35.0, 24.0, 24.0), 1.0, spin(14.0)),
        shape(regular_polygon(3, 16.0, 120.0, 35.0, 0.0), -1.0, spin(-16.0)),
        shape(regular_polygon(5, 15.0, 200.0, 35.0, 0.0), 1.0, spin(15.0)),
        shape(regular_polygon(6, 14.0, 40.0, 145.0, 0.0), -1.0, spin(-15.0)),
        shape(rectangle(120.0, 145.0, 28.0, 18.0), 1.0, spin(13.0)),
        shape(regular_polygon(4, 16.0, 200.0, 145.0, 0.4), -1.0, spin(-14.0)),
    ];
    let speed = 50.0;
    shapes.push(shape(rectangle(20.0, 90.0, 24.0, 24.0), 1.0, vec![Keyframe::at(0.0, 0.0, 0.0), Keyframe::at(duration, speed * duration, 0.0)]));
    SceneSpec {
        width: 240,
        height: 180,
        shapes,
        contrast_event_spacing: 1.0,
        noise_rate: 0.0,
        duration,
        speed_factor: 1.0,
        dt_gen: default_dt_gen(),
        center_interval: default_center_interval(),
    }
    .with_noise_fraction(0.05)
}

impl SceneSpec {
    /// Sets the noise rate to `fraction` of the expected object event rate,
    /// estimated from a noiseless rendering.
    pub fn with_noise_fraction(mut self, fraction: f64) -> Self {
        let mut probe = self.clone();
        probe.noise_rate = 0.0;
        probe.speed_factor = 1.0;
        let rate = generate(&probe, 0)
            .map(|s| s.events.len() as f64 / probe.duration)
            .unwrap_or(0.0);
        self.noise_rate = fraction * rate;
        self
    }
}
