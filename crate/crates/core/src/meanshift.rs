//! Event-based hybrid mean-shift.
//!
//! Every event of a packet seeds a mode search in the 4D feature space. The
//! reference set the seeds climb against mixes two kinds of coordinates: the
//! spatial part of each reference is pinned to the event's original position,
//! while its polarity and time components follow that event's own iterate from
//! the previous iteration. All seeds advance in lock-step and the shared
//! reference state is republished only between iterations, so the result does
//! not depend on event order or thread count.
//!
//! Converged modes closer than `merge_radius` are merged by single linkage and
//! undersized groups are labelled noise.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::event::{FeatureVector, Packet};

/// A point in (possibly non-binary) feature space.
pub type Point = [f64; 4];

const POLARITY: usize = 2;
const TIME: usize = 3;

// Below this total weight a seed is considered isolated.
const WEIGHT_FLOOR: f64 = 1e-300;

// Packets smaller than this are shifted on the calling thread.
const PARALLEL_MIN: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeanShiftParams {
    /// Kernel radius `h` in normalized units.
    pub bandwidth: f64,
    /// Shift magnitude below which a seed counts as converged.
    pub epsilon: f64,
    pub max_iters: usize,
    /// Modes closer than this share a cluster.
    pub merge_radius: f64,
    /// Smaller clusters are relabelled noise.
    pub min_cluster_size: usize,
    /// Scale applied to polarity differences inside the kernel. `1.0` treats
    /// polarity like any other coordinate.
    pub polarity_weight: f64,
}

impl MeanShiftParams {
    pub fn with_bandwidth(bandwidth: f64) -> Self {
        MeanShiftParams {
            bandwidth,
            merge_radius: bandwidth / 2.0,
            ..MeanShiftParams::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &'static str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(name, format!("must be finite and > 0, got {v}")))
            }
        };
        positive("bandwidth", self.bandwidth)?;
        if self.bandwidth > 1.0 {
            return Err(Error::invalid(
                "bandwidth",
                format!("must lie in (0, 1], got {}", self.bandwidth),
            ));
        }
        positive("epsilon", self.epsilon)?;
        positive("merge_radius", self.merge_radius)?;
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters", "must be at least 1"));
        }
        if self.min_cluster_size == 0 {
            return Err(Error::invalid("min_cluster_size", "must be at least 1"));
        }
        if !(self.polarity_weight.is_finite() && self.polarity_weight >= 0.0) {
            return Err(Error::invalid(
                "polarity_weight",
                format!("must be finite and >= 0, got {}", self.polarity_weight),
            ));
        }
        Ok(())
    }

    fn scale(&self) -> Point {
        let inv = 1.0 / self.bandwidth;
        [inv, inv, self.polarity_weight * inv, inv]
    }

    /// Distance between two points in the kernel's metric, in normalized
    /// units (not divided by the bandwidth).
    pub fn distance(&self, a: &Point, b: &Point) -> f64 {
        let w = [1.0, 1.0, self.polarity_weight, 1.0];
        (0..4)
            .map(|k| ((a[k] - b[k]) * w[k]).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

impl Default for MeanShiftParams {
    fn default() -> Self {
        MeanShiftParams {
            bandwidth: 0.1,
            epsilon: 1e-3,
            max_iters: 100,
            merge_radius: 0.05,
            min_cluster_size: 5,
            polarity_weight: 0.1,
        }
    }
}

/// Gaussian kernel profile `exp(-|u|^2 / 2)`. The normalization constant is
/// omitted since it cancels in every weighted mean.
pub fn kernel_weight(u: &Point) -> f64 {
    let sq: f64 = u.iter().map(|c| c * c).sum();
    (-0.5 * sq).exp()
}

/// Kernel density (unnormalized) of `references` at `at`.
pub fn density(at: &Point, references: &[Point], params: &MeanShiftParams) -> f64 {
    let s = params.scale();
    references
        .iter()
        .map(|r| {
            let u = [
                (at[0] - r[0]) * s[0],
                (at[1] - r[1]) * s[1],
                (at[2] - r[2]) * s[2],
                (at[3] - r[3]) * s[3],
            ];
            kernel_weight(&u)
        })
        .sum()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Shift {
    pub point: Point,
    /// Total weight fell below the underflow floor; `point` is the input.
    pub stalled: bool,
}

/// One mean-shift step of `current` against `references`: the kernel-weighted
/// mean of the reference points. Adds one kernel evaluation per reference to
/// `ops`.
pub fn shift_once(
    current: &Point,
    references: &[Point],
    params: &MeanShiftParams,
    ops: &mut u64,
) -> Shift {
    let s = params.scale();
    let mut acc = [0.0f64; 4];
    let mut total = 0.0f64;
    for r in references {
        let d0 = (current[0] - r[0]) * s[0];
        let d1 = (current[1] - r[1]) * s[1];
        let d2 = (current[2] - r[2]) * s[2];
        let d3 = (current[3] - r[3]) * s[3];
        let w = (-0.5 * (d0 * d0 + d1 * d1 + d2 * d2 + d3 * d3)).exp();
        total += w;
        acc[0] += w * r[0];
        acc[1] += w * r[1];
        acc[2] += w * r[2];
        acc[3] += w * r[3];
    }
    *ops += references.len() as u64;
    if total < WEIGHT_FLOOR {
        return Shift {
            point: *current,
            stalled: true,
        };
    }
    Shift {
        point: acc.map(|a| a / total),
        stalled: false,
    }
}

fn euclid(a: &Point, b: &Point) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Lock-step evolution of every seed in a packet.
pub struct HybridMeanShift<'a> {
    params: &'a MeanShiftParams,
    references: Vec<Point>,
    iterates: Vec<Point>,
    iterations: Vec<usize>,
    active: Vec<bool>,
    stalled: Vec<bool>,
    sweeps: usize,
    shift_calls: u64,
    ops: u64,
}

impl<'a> HybridMeanShift<'a> {
    pub fn new(packet: &Packet, params: &'a MeanShiftParams) -> Self {
        let points: Vec<Point> = packet.features().iter().map(|f| f.to_array()).collect();
        let n = points.len();
        HybridMeanShift {
            params,
            references: points.clone(),
            iterates: points,
            iterations: vec![0; n],
            active: vec![true; n],
            stalled: vec![false; n],
            sweeps: 0,
            shift_calls: 0,
            ops: 0,
        }
    }

    /// Reference set the next step climbs against.
    pub fn references(&self) -> &[Point] {
        &self.references
    }

    pub fn iterates(&self) -> &[Point] {
        &self.iterates
    }

    pub fn is_active(&self, seed: usize) -> bool {
        self.active[seed]
    }

    pub fn is_done(&self) -> bool {
        self.sweeps >= self.params.max_iters || !self.active.iter().any(|&a| a)
    }

    /// Advances every unconverged seed by one shift, then republishes the
    /// polarity and time components of the reference set. Returns `false`
    /// once nothing is left to do.
    pub fn step(&mut self) -> bool {
        if self.is_done() {
            return false;
        }
        let seeds: Vec<usize> = (0..self.iterates.len()).filter(|&i| self.active[i]).collect();
        let refs = &self.references;
        let iterates = &self.iterates;
        let params = self.params;
        let shift = |&i: &usize| {
            let mut ops = 0;
            shift_once(&iterates[i], refs, params, &mut ops)
        };
        let shifted: Vec<Shift> = if seeds.len() >= PARALLEL_MIN {
            seeds.par_iter().map(shift).collect()
        } else {
            seeds.iter().map(shift).collect()
        };

        let n = self.references.len() as u64;
        for (&i, s) in seeds.iter().zip(&shifted) {
            let moved = euclid(&s.point, &self.iterates[i]);
            self.iterates[i] = s.point;
            self.iterations[i] += 1;
            if s.stalled {
                self.stalled[i] = true;
                self.active[i] = false;
            } else if moved < self.params.epsilon {
                self.active[i] = false;
            }
        }
        self.shift_calls += seeds.len() as u64;
        self.ops += seeds.len() as u64 * n;
        for (r, y) in self.references.iter_mut().zip(&self.iterates) {
            r[POLARITY] = y[POLARITY];
            r[TIME] = y[TIME];
        }
        self.sweeps += 1;
        !self.is_done()
    }

    pub fn run(mut self) -> ModeSearch {
        while self.step() {}
        ModeSearch {
            modes: self.iterates,
            iterations: self.iterations,
            stalled: self.stalled,
            shift_calls: self.shift_calls,
            ops: self.ops,
        }
    }
}

/// Outcome of mode seeking over a whole packet.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeSearch {
    pub modes: Vec<Point>,
    pub iterations: Vec<usize>,
    pub stalled: Vec<bool>,
    pub shift_calls: u64,
    /// Kernel evaluations.
    pub ops: u64,
}

pub fn seek_modes(packet: &Packet, params: &MeanShiftParams) -> ModeSearch {
    HybridMeanShift::new(packet, params).run()
}

/// Mode reached by one seed, with the number of shifts it took. The other
/// seeds of the packet evolve alongside it since they shape the reference set.
pub fn find_mode(
    seed: usize,
    packet: &Packet,
    params: &MeanShiftParams,
) -> Result<(FeatureVector, usize)> {
    params.validate()?;
    if seed >= packet.len() {
        return Err(Error::invalid(
            "seed",
            format!("index {seed} outside packet of {}", packet.len()),
        ));
    }
    let search = seek_modes(packet, params);
    let [fx, fy, fp, ft] = search.modes[seed];
    Ok((FeatureVector { fx, fy, fp, ft }, search.iterations[seed]))
}

/// Per-event cluster assignment for one packet.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterLabeling {
    /// `None` marks noise.
    pub labels: Vec<Option<usize>>,
    /// Mean pixel position `(x, y)` of each cluster.
    pub centroids: Vec<[f64; 2]>,
    pub masses: Vec<usize>,
    pub iterations: Vec<usize>,
    /// Kernel evaluations performed.
    pub ops_count: u64,
    /// Shifts executed across all seeds.
    pub shift_calls: u64,
    pub stalled_seeds: usize,
}

impl ClusterLabeling {
    pub fn cluster_count(&self) -> usize {
        self.masses.len()
    }

    pub fn noise_count(&self) -> usize {
        self.labels.iter().filter(|l| l.is_none()).count()
    }

    /// Builds a labeling from raw group ids, dropping groups smaller than
    /// `min_size` to noise. Cluster ids follow the first appearance of each
    /// group in event order.
    pub fn from_groups(packet: &Packet, groups: &[usize], min_size: usize) -> Self {
        let mut size = std::collections::HashMap::new();
        for &g in groups {
            *size.entry(g).or_insert(0usize) += 1;
        }
        let mut ids = std::collections::HashMap::new();
        let mut labels = Vec::with_capacity(groups.len());
        for &g in groups {
            if size[&g] < min_size {
                labels.push(None);
                continue;
            }
            let next = ids.len();
            labels.push(Some(*ids.entry(g).or_insert(next)));
        }
        let k = ids.len();
        let mut sums = vec![[0.0f64; 2]; k];
        let mut masses = vec![0usize; k];
        for (e, label) in packet.events().iter().zip(&labels) {
            if let Some(c) = *label {
                sums[c][0] += f64::from(e.x);
                sums[c][1] += f64::from(e.y);
                masses[c] += 1;
            }
        }
        let centroids = sums
            .iter()
            .zip(&masses)
            .map(|(s, &m)| [s[0] / m as f64, s[1] / m as f64])
            .collect();
        ClusterLabeling {
            labels,
            centroids,
            masses,
            iterations: vec![0; groups.len()],
            ops_count: 0,
            shift_calls: 0,
            stalled_seeds: 0,
        }
    }
}

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // Smaller root wins so the forest shape is order independent.
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Single-linkage grouping of modes closer than `merge_radius`.
pub fn merge_modes(modes: &[Point], params: &MeanShiftParams) -> Vec<usize> {
    let mut set = DisjointSet::new(modes.len());
    for i in 0..modes.len() {
        for j in (i + 1)..modes.len() {
            if params.distance(&modes[i], &modes[j]) < params.merge_radius {
                set.union(i, j);
            }
        }
    }
    (0..modes.len()).map(|i| set.find(i)).collect()
}

pub fn cluster_packet(packet: &Packet, params: &MeanShiftParams) -> Result<ClusterLabeling> {
    params.validate()?;
    let search = seek_modes(packet, params);
    let groups = merge_modes(&search.modes, params);
    let mut labeling = ClusterLabeling::from_groups(packet, &groups, params.min_cluster_size);
    labeling.iterations = search.iterations;
    labeling.ops_count = search.ops;
    labeling.shift_calls = search.shift_calls;
    labeling.stalled_seeds = search.stalled.iter().filter(|&&s| s).count();
    Ok(labeling)
}
