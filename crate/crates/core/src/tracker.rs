//! Constant-velocity Kalman tracking of cluster centroids.
//!
//! State is `[x, y, vx, vy]` in pixels and pixels/s; only the position is
//! measured. Tracks are associated to clusters greedily by distance and go
//! through a Tentative -> Confirmed -> Dead lifecycle.

use nalgebra::{Matrix2, Matrix2x4, Matrix4, Vector2, Vector4};

use crate::error::{Error, Result};
use crate::meanshift::ClusterLabeling;

/// Matrix-vector products per predict: the mean plus two 4x4 products for
/// `A P A^T`.
pub const PREDICT_MATVECS: u64 = 9;
/// Matrix-vector products per update: gain, innovation, and the Joseph-form
/// covariance correction.
pub const UPDATE_MATVECS: u64 = 12;

const NEW_VELOCITY_VAR: f64 = 1e4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrackerParams {
    /// Process noise intensity (white acceleration), px^2/s^3 scale.
    pub q_var: f64,
    /// Measurement noise variance, px^2.
    pub r_var: f64,
    /// Association gate, px.
    pub gate: f64,
    pub confirm_hits: u32,
    pub max_misses: u32,
}

impl TrackerParams {
    pub fn validate(&self) -> Result<()> {
        let non_negative = |name: &'static str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(name, format!("must be finite and >= 0, got {v}")))
            }
        };
        non_negative("q_var", self.q_var)?;
        non_negative("r_var", self.r_var)?;
        if !(self.gate.is_finite() && self.gate > 0.0) {
            return Err(Error::invalid("gate", format!("must be > 0, got {}", self.gate)));
        }
        if self.confirm_hits == 0 {
            return Err(Error::invalid("confirm_hits", "must be at least 1"));
        }
        if self.max_misses == 0 {
            return Err(Error::invalid("max_misses", "must be at least 1"));
        }
        Ok(())
    }
}

impl Default for TrackerParams {
    fn default() -> Self {
        TrackerParams {
            q_var: 100.0,
            r_var: 4.0,
            gate: 15.0,
            confirm_hits: 3,
            max_misses: 10,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrackState {
    /// `[x, y, vx, vy]`.
    pub mean: Vector4<f64>,
    pub cov: Matrix4<f64>,
}

impl TrackState {
    /// A stationary state at `(x, y)` with position variance `pos_var` and a
    /// wide velocity prior.
    pub fn at(x: f64, y: f64, pos_var: f64) -> Self {
        TrackState {
            mean: Vector4::new(x, y, 0.0, 0.0),
            cov: Matrix4::from_diagonal(&Vector4::new(
                pos_var,
                pos_var,
                NEW_VELOCITY_VAR,
                NEW_VELOCITY_VAR,
            )),
        }
    }

    pub fn position(&self) -> [f64; 2] {
        [self.mean[0], self.mean[1]]
    }

    pub fn velocity(&self) -> [f64; 2] {
        [self.mean[2], self.mean[3]]
    }

    /// Smallest eigenvalue of the covariance.
    pub fn min_eigenvalue(&self) -> f64 {
        self.cov.symmetric_eigenvalues().min()
    }
}

fn transition(dt: f64) -> Matrix4<f64> {
    let mut a = Matrix4::identity();
    a[(0, 2)] = dt;
    a[(1, 3)] = dt;
    a
}

fn process_noise(dt: f64, q_var: f64) -> Matrix4<f64> {
    let (d3, d2) = (dt * dt * dt / 3.0, dt * dt / 2.0);
    q_var
        * Matrix4::new(
            d3, 0.0, d2, 0.0, //
            0.0, d3, 0.0, d2, //
            d2, 0.0, dt, 0.0, //
            0.0, d2, 0.0, dt,
        )
}

fn measurement_matrix() -> Matrix2x4<f64> {
    Matrix2x4::new(
        1.0, 0.0, 0.0, 0.0, //
        0.0, 1.0, 0.0, 0.0,
    )
}

fn symmetrize(m: Matrix4<f64>) -> Matrix4<f64> {
    (m + m.transpose()) * 0.5
}

pub fn predict(state: &TrackState, dt: f64, params: &TrackerParams) -> Result<TrackState> {
    if !(dt >= 0.0) {
        return Err(Error::invalid("dt", format!("must be >= 0, got {dt}")));
    }
    let a = transition(dt);
    Ok(TrackState {
        mean: a * state.mean,
        cov: symmetrize(a * state.cov * a.transpose() + process_noise(dt, params.q_var)),
    })
}

/// Kalman correction with a position measurement `z`.
pub fn update(state: &TrackState, z: [f64; 2], params: &TrackerParams) -> Result<TrackState> {
    let h = measurement_matrix();
    let r = Matrix2::identity() * params.r_var;
    let s = h * state.cov * h.transpose() + r;
    let s_inv = s
        .try_inverse()
        .filter(|inv| inv.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::Numerical("singular innovation covariance".into()))?;
    let gain = state.cov * h.transpose() * s_inv;
    let innovation = Vector2::new(z[0], z[1]) - h * state.mean;
    let i_kh = Matrix4::identity() - gain * h;
    // Joseph form keeps the covariance positive semidefinite.
    let cov = i_kh * state.cov * i_kh.transpose() + gain * r * gain.transpose();
    Ok(TrackState {
        mean: state.mean + gain * innovation,
        cov: symmetrize(cov),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TrackStatus {
    Tentative,
    Confirmed,
    Dead,
}

impl TrackStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            TrackStatus::Tentative => "tentative",
            TrackStatus::Confirmed => "confirmed",
            TrackStatus::Dead => "dead",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "tentative" => Some(TrackStatus::Tentative),
            "confirmed" => Some(TrackStatus::Confirmed),
            "dead" => Some(TrackStatus::Dead),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Track {
    pub id: u64,
    pub state: TrackState,
    /// Time the state refers to.
    pub last_update: f64,
    pub hits: u32,
    /// Hits since the last miss.
    pub streak: u32,
    /// Consecutive misses.
    pub misses: u32,
    pub status: TrackStatus,
    /// Centroid matched at the latest step, if any.
    pub measurement: Option<[f64; 2]>,
    /// Set when a correction failed numerically.
    pub degraded: bool,
}

/// Work done by the tracker, in exact counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TrackerOps {
    pub predictions: u64,
    pub updates: u64,
}

impl TrackerOps {
    pub fn cycles(&self) -> u64 {
        self.predictions + self.updates
    }

    pub fn matvecs(&self) -> u64 {
        self.predictions * PREDICT_MATVECS + self.updates * UPDATE_MATVECS
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    /// Track id each cluster was assigned to (new tracks included).
    pub assignments: Vec<u64>,
    /// Tracks that died at this step.
    pub died: Vec<Track>,
}

/// The live track set. Ids grow monotonically and are never reused.
#[derive(Clone, Debug)]
pub struct MultiTracker {
    params: TrackerParams,
    tracks: Vec<Track>,
    next_id: u64,
    ops: TrackerOps,
}

impl MultiTracker {
    pub fn new(params: TrackerParams) -> Result<Self> {
        params.validate()?;
        Ok(MultiTracker {
            params,
            tracks: Vec::new(),
            next_id: 0,
            ops: TrackerOps::default(),
        })
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    pub fn ops(&self) -> TrackerOps {
        self.ops
    }

    pub fn confirmed_count(&self) -> usize {
        self.tracks
            .iter()
            .filter(|t| t.status == TrackStatus::Confirmed)
            .count()
    }

    pub fn step_labeling(&mut self, clusters: &ClusterLabeling, t: f64) -> Result<StepOutcome> {
        self.step(&clusters.centroids, t)
    }

    /// Predicts every track to `t`, associates `centroids` greedily by
    /// ascending distance within the gate, corrects matched tracks, ages the
    /// rest and spawns tracks for unmatched centroids.
    pub fn step(&mut self, centroids: &[[f64; 2]], t: f64) -> Result<StepOutcome> {
        if let Some(track) = self.tracks.iter().find(|tr| tr.last_update > t) {
            return Err(Error::invalid(
                "t",
                format!("{t} precedes track {} at {}", track.id, track.last_update),
            ));
        }
        for track in &mut self.tracks {
            track.state = predict(&track.state, t - track.last_update, &self.params)?;
            track.last_update = t;
            track.measurement = None;
            self.ops.predictions += 1;
        }

        let mut pairs = Vec::new();
        for (ti, track) in self.tracks.iter().enumerate() {
            let [px, py] = track.state.position();
            for (ci, c) in centroids.iter().enumerate() {
                let d = ((c[0] - px).powi(2) + (c[1] - py).powi(2)).sqrt();
                if d <= self.params.gate {
                    pairs.push((d, track.id, ci, ti));
                }
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

        let mut track_taken = vec![false; self.tracks.len()];
        let mut assignments: Vec<Option<u64>> = vec![None; centroids.len()];
        for (_, id, ci, ti) in pairs {
            if track_taken[ti] || assignments[ci].is_some() {
                continue;
            }
            track_taken[ti] = true;
            assignments[ci] = Some(id);
            let track = &mut self.tracks[ti];
            match update(&track.state, centroids[ci], &self.params) {
                Ok(state) => track.state = state,
                Err(_) => track.degraded = true,
            }
            self.ops.updates += 1;
            track.measurement = Some(centroids[ci]);
            track.hits += 1;
            track.streak += 1;
            track.misses = 0;
            if track.status == TrackStatus::Tentative && track.streak >= self.params.confirm_hits {
                track.status = TrackStatus::Confirmed;
            }
        }

        let mut died = Vec::new();
        let mut survivors = Vec::with_capacity(self.tracks.len());
        for (track, taken) in self.tracks.drain(..).zip(track_taken) {
            let mut track = track;
            if !taken {
                track.misses += 1;
                track.streak = 0;
                if track.misses >= self.params.max_misses {
                    track.status = TrackStatus::Dead;
                    died.push(track);
                    continue;
                }
            }
            survivors.push(track);
        }
        self.tracks = survivors;

        let mut resolved = Vec::with_capacity(centroids.len());
        for (ci, assigned) in assignments.into_iter().enumerate() {
            let id = match assigned {
                Some(id) => id,
                None => {
                    let id = self.next_id;
                    self.next_id += 1;
                    let status = if self.params.confirm_hits <= 1 {
                        TrackStatus::Confirmed
                    } else {
                        TrackStatus::Tentative
                    };
                    let [x, y] = centroids[ci];
                    self.tracks.push(Track {
                        id,
                        state: TrackState::at(x, y, self.params.r_var.max(1e-6)),
                        last_update: t,
                        hits: 1,
                        streak: 1,
                        misses: 0,
                        status,
                        measurement: Some(centroids[ci]),
                        degraded: false,
                    });
                    id
                }
            };
            resolved.push(id);
        }
        Ok(StepOutcome {
            assignments: resolved,
            died,
        })
    }
}
