//! Pipeline parameters from flags, a flat `key = value` config file, and
//! built-in defaults, in that order of precedence.
//!
//! Config keys are the long flag names without the leading dashes. Blank
//! lines and lines starting with `#` are ignored.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use evshift_core::event::{DecayParams, DEFAULT_PACKET_SIZE};
use evshift_core::pipeline::PipelineParams;
use evshift_core::{FilterParams, MeanShiftParams};

use crate::error::{CliError, Result};

/// Parameters shared by every command.
#[derive(Args, Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    /// Flat `key = value` file supplying defaults for the flags below.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Mean-shift kernel radius in normalized coordinates [default: 0.1].
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub bandwidth: Option<f64>,
    /// Weight of polarity differences inside the kernel [default: 0.1].
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub polarity_weight: Option<f64>,
    /// Time-decay constant in seconds [default: 0.025].
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub tau: Option<f64>,
    /// Events per clustering packet [default: 500].
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub packet_size: Option<usize>,
    /// Noise-filter neighborhood half-width in pixels [default: 1].
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub filter_radius: Option<u32>,
    /// Noise-filter recency window in seconds [default: 0.005].
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub filter_window: Option<f64>,
    /// Track association gate in pixels [default: 15].
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub gate: Option<f64>,
    /// Kalman process noise intensity [default: 100].
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub q_var: Option<f64>,
    /// Kalman measurement noise variance in px^2 [default: 4].
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub r_var: Option<f64>,
    /// Seed for every random choice [default: 1].
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub seed: Option<u64>,
    /// Divides all generated timestamps [default: the scene's own, 1].
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub speed_factor: Option<f64>,
    /// Tracking error bound in pixels for the valid fraction [default: 2.5].
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub threshold: Option<f64>,
    /// Cluster count for the k-means baseline [default: true object count].
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub kmeans_k: Option<usize>,
}

/// Fully resolved settings.
#[derive(Clone, Debug, PartialEq)]
pub struct Settings {
    pub pipeline: PipelineParams,
    pub seed: u64,
    pub speed_factor: Option<f64>,
    pub threshold: f64,
    pub kmeans_k: Option<usize>,
}

fn set<T: FromStr>(slot: &mut Option<T>, path: &Path, line: usize, key: &str, value: &str) -> Result<()> {
    let parsed = value.parse().map_err(|_| CliError::Config {
        path: path.to_owned(),
        line,
        message: format!("bad value `{value}` for `{key}`"),
    })?;
    slot.get_or_insert(parsed);
    Ok(())
}

impl Overrides {
    /// Fills every unset flag from the config file's `text`.
    pub fn merge_config(&mut self, path: &Path, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let raw = raw.trim();
            if raw.is_empty() || raw.starts_with('#') {
                continue;
            }
            let Some((key, value)) = raw.split_once('=') else {
                return Err(CliError::Config {
                    path: path.to_owned(),
                    line,
                    message: format!("expected `key = value`, got `{raw}`"),
                });
            };
            let (key, value) = (key.trim(), value.trim());
            match key {
                "bandwidth" => set(&mut self.bandwidth, path, line, key, value)?,
                "polarity-weight" => set(&mut self.polarity_weight, path, line, key, value)?,
                "tau" => set(&mut self.tau, path, line, key, value)?,
                "packet-size" => set(&mut self.packet_size, path, line, key, value)?,
                "filter-radius" => set(&mut self.filter_radius, path, line, key, value)?,
                "filter-window" => set(&mut self.filter_window, path, line, key, value)?,
                "gate" => set(&mut self.gate, path, line, key, value)?,
                "q-var" => set(&mut self.q_var, path, line, key, value)?,
                "r-var" => set(&mut self.r_var, path, line, key, value)?,
                "seed" => set(&mut self.seed, path, line, key, value)?,
                "speed-factor" => set(&mut self.speed_factor, path, line, key, value)?,
                "threshold" => set(&mut self.threshold, path, line, key, value)?,
                "kmeans-k" => set(&mut self.kmeans_k, path, line, key, value)?,
                _ => {
                    return Err(CliError::Config {
                        path: path.to_owned(),
                        line,
                        message: format!("unknown key `{key}`"),
                    })
                }
            }
        }
        Ok(())
    }

    /// Reads the config file if one was named, then applies defaults.
    pub fn resolve(mut self) -> Result<Settings> {
        if let Some(path) = self.config.clone() {
            let text = std::fs::read_to_string(&path).map_err(|source| CliError::Io { path: path.clone(), source })?;
            self.merge_config(&path, &text)?;
        }
        Ok(self.settings())
    }

    fn settings(&self) -> Settings {
        let mut meanshift = match self.bandwidth {
            Some(h) => MeanShiftParams::with_bandwidth(h),
            None => MeanShiftParams::default(),
        };
        if let Some(w) = self.polarity_weight {
            meanshift.polarity_weight = w;
        }
        let decay = DecayParams {
            tau: self.tau.unwrap_or(DecayParams::default().tau),
        };
        let f = FilterParams::default();
        let filter = FilterParams {
            radius: self.filter_radius.unwrap_or(f.radius),
            window: self.filter_window.unwrap_or(f.window),
        };
        let mut pipeline = PipelineParams {
            decay,
            filter: Some(filter),
            meanshift,
            packet_size: self.packet_size.unwrap_or(DEFAULT_PACKET_SIZE),
            ..PipelineParams::default()
        };
        let t = &mut pipeline.tracker;
        t.gate = self.gate.unwrap_or(t.gate);
        t.q_var = self.q_var.unwrap_or(t.q_var);
        t.r_var = self.r_var.unwrap_or(t.r_var);
        Settings {
            pipeline,
            seed: self.seed.unwrap_or(1),
            speed_factor: self.speed_factor,
            threshold: self.threshold.unwrap_or(2.5),
            kmeans_k: self.kmeans_k,
        }
    }
}
