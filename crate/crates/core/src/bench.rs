//! Operation accounting against a frame-based baseline.
//!
//! A frame-based mean-shift touches every pixel of every frame, so it runs at
//! `fps * width * height` operations per second regardless of scene content.
//! The event-based pipeline instead does work per event: one operation per
//! event pushed through mean-shift and one per Kalman predict or update. Raw
//! kernel evaluations are reported alongside for reference.

use std::io::Write;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::event::{Event, SensorGeometry};
use crate::pipeline::{cluster_events, track_packets, PipelineParams};

pub const REPORT_HEADER: &str = "factor,ms_ops_per_s,track_ops_per_s,frame_baseline,reduction,detections_per_s";

pub const OPS_NOTE: &str =
    "# ops: mean-shift = events clustered, tracking = Kalman predict/update calls, frame baseline = fps*width*height";

/// Operations per second of frame-based processing.
pub fn frame_baseline(geom: &SensorGeometry, fps: f64) -> Result<f64> {
    if !(fps.is_finite() && fps > 0.0) {
        return Err(Error::invalid("fps", format!("must be finite and > 0, got {fps}")));
    }
    Ok(fps * f64::from(geom.width) * f64::from(geom.height))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostReport {
    pub factor: f64,
    /// Length of rescaled time processed.
    pub window: f64,
    pub events: u64,
    pub ms_ops: u64,
    pub kernel_evaluations: u64,
    pub track_ops: u64,
    pub detections: u64,
    pub frame_baseline: f64,
    pub wall_seconds: f64,
}

impl CostReport {
    pub fn ms_ops_per_s(&self) -> f64 {
        self.ms_ops as f64 / self.window
    }

    pub fn track_ops_per_s(&self) -> f64 {
        self.track_ops as f64 / self.window
    }

    pub fn kernel_evaluations_per_s(&self) -> f64 {
        self.kernel_evaluations as f64 / self.window
    }

    /// Saving of the event pipeline's mean-shift work over the frame baseline.
    pub fn reduction(&self) -> f64 {
        1.0 - self.ms_ops_per_s() / self.frame_baseline
    }

    /// Tracking's share of total operations.
    pub fn tracking_overhead(&self) -> f64 {
        let total = self.ms_ops + self.track_ops;
        if total == 0 {
            0.0
        } else {
            self.track_ops as f64 / total as f64
        }
    }

    pub fn detections_per_s(&self) -> f64 {
        self.detections as f64 / self.window
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepParams {
    /// Rescaled time processed per factor, from the first event on.
    pub window: f64,
    pub fps: f64,
}

/// Runs the pipeline once per speed factor over the first `window` seconds of
/// the rescaled stream. A factor `f` divides every timestamp by `f`.
pub fn run_sweep(
    events: &[Event],
    geom: SensorGeometry,
    factors: &[f64],
    sweep: &SweepParams,
    params: &PipelineParams,
) -> Result<Vec<CostReport>> {
    if factors.is_empty() {
        return Err(Error::invalid("factors", "need at least one speed factor"));
    }
    if let Some(f) = factors.iter().find(|f| !(f.is_finite() && **f > 0.0)) {
        return Err(Error::invalid("factors", format!("must be finite and > 0, got {f}")));
    }
    if !(sweep.window.is_finite() && sweep.window > 0.0) {
        return Err(Error::invalid("window", format!("must be finite and > 0, got {}", sweep.window)));
    }
    let baseline = frame_baseline(&geom, sweep.fps)?;
    let t0 = events.first().map_or(0.0, |e| e.t);

    factors
        .iter()
        .map(|&factor| {
            let started = Instant::now();
            let scaled: Vec<Event> = events
                .iter()
                .map(|e| Event { t: (e.t - t0) / factor, ..*e })
                .take_while(|e| e.t < sweep.window)
                .collect();
            let run = cluster_events(&scaled, geom, params)?;
            let tracks = track_packets(&run.packets, &params.tracker)?;
            Ok(CostReport {
                factor,
                window: sweep.window,
                events: scaled.len() as u64,
                ms_ops: run.kept.len() as u64,
                kernel_evaluations: run.kernel_evaluations(),
                track_ops: tracks.ops.cycles(),
                detections: run.detections() as u64,
                frame_baseline: baseline,
                wall_seconds: started.elapsed().as_secs_f64(),
            })
        })
        .collect()
}

pub fn write_report(w: &mut dyn Write, reports: &[CostReport]) -> std::io::Result<()> {
    writeln!(w, "{OPS_NOTE}")?;
    writeln!(w, "{REPORT_HEADER}")?;
    for r in reports {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.factor,
            r.ms_ops_per_s(),
            r.track_ops_per_s(),
            r.frame_baseline,
            r.reduction(),
            r.detections_per_s()
        )?;
    }
    Ok(())
}
