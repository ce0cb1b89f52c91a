//! External clustering-quality metrics and tracking accuracy.
//!
//! Pair counting follows the usual convention: a pair of events in the same
//! predicted cluster is a true positive when the ground truth also groups
//! them and a false positive otherwise; a pair split by the prediction but
//! grouped by the truth is a false negative.
//!
//! Noise handling: events the prediction marks as noise are dropped before
//! scoring. Ground-truth noise events are kept, each as its own singleton
//! class, so clustering them into an object is penalized.

mod kmeans;
mod tracking;

pub use kmeans::{kmeans_baseline, kmeans_points, KMeansParams};
pub use tracking::{tracking_error, CenterSample, TrackSample, TrackingErrors};

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Counts of label co-occurrence between a prediction (rows) and ground
/// truth (columns).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Contingency {
    pub table: Vec<Vec<u64>>,
    pub row_sums: Vec<u64>,
    pub col_sums: Vec<u64>,
    pub n: u64,
}

impl Contingency {
    pub fn new(pred: &[usize], truth: &[usize]) -> Result<Self> {
        if pred.len() != truth.len() {
            return Err(Error::LengthMismatch {
                left: pred.len(),
                right: truth.len(),
            });
        }
        let compact = |labels: &[usize]| {
            let mut ids = BTreeMap::new();
            for &l in labels {
                let next = ids.len();
                ids.entry(l).or_insert(next);
            }
            ids
        };
        let (rows, cols) = (compact(pred), compact(truth));
        let mut table = vec![vec![0u64; cols.len()]; rows.len()];
        for (p, t) in pred.iter().zip(truth) {
            table[rows[p]][cols[t]] += 1;
        }
        let row_sums = table.iter().map(|r| r.iter().sum()).collect();
        let col_sums = (0..cols.len())
            .map(|j| table.iter().map(|r| r[j]).sum())
            .collect();
        Ok(Contingency {
            table,
            row_sums,
            col_sums,
            n: pred.len() as u64,
        })
    }
}

fn choose2(n: u64) -> u64 {
    n * n.saturating_sub(1) / 2
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PairCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl PairCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

pub fn pair_counts(ct: &Contingency) -> PairCounts {
    let tp: u64 = ct.table.iter().flatten().map(|&c| choose2(c)).sum();
    let same_pred: u64 = ct.row_sums.iter().map(|&c| choose2(c)).sum();
    let same_truth: u64 = ct.col_sums.iter().map(|&c| choose2(c)).sum();
    let total = choose2(ct.n);
    PairCounts {
        tp,
        fp: same_pred - tp,
        fn_: same_truth - tp,
        tn: total + tp - same_pred - same_truth,
    }
}

pub fn pair_counts_of(pred: &[usize], truth: &[usize]) -> Result<PairCounts> {
    if pred.len() < 2 {
        return Err(Error::Empty("pair counting needs at least two events"));
    }
    Ok(pair_counts(&Contingency::new(pred, truth)?))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrecisionRecall {
    pub precision: f64,
    pub recall: f64,
    pub f: f64,
    /// No true positive pairs, or no positive pairs at all.
    pub degenerate: bool,
}

/// Pairwise precision, recall and F-beta.
pub fn precision_recall_f(pc: &PairCounts, beta: f64) -> PrecisionRecall {
    if pc.tp == 0 {
        return PrecisionRecall {
            precision: 0.0,
            recall: 0.0,
            f: 0.0,
            degenerate: true,
        };
    }
    let precision = pc.tp as f64 / (pc.tp + pc.fp) as f64;
    let recall = pc.tp as f64 / (pc.tp + pc.fn_) as f64;
    let b2 = beta * beta;
    let f = (1.0 + b2) * precision * recall / (b2 * precision + recall);
    PrecisionRecall {
        precision,
        recall,
        f,
        degenerate: false,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ari {
    pub value: f64,
    /// Both partitions were trivial and the value is fixed at 1 by convention.
    pub degenerate: bool,
}

pub fn adjusted_rand_index(ct: &Contingency) -> Result<Ari> {
    if ct.n < 2 {
        return Err(Error::Empty("ARI needs at least two events"));
    }
    let index: f64 = ct.table.iter().flatten().map(|&c| choose2(c) as f64).sum();
    let a: f64 = ct.row_sums.iter().map(|&c| choose2(c) as f64).sum();
    let b: f64 = ct.col_sums.iter().map(|&c| choose2(c) as f64).sum();
    let total = choose2(ct.n) as f64;
    let expected = a * b / total;
    let max = 0.5 * (a + b);
    let denom = max - expected;
    if denom == 0.0 {
        return Ok(Ari {
            value: 1.0,
            degenerate: true,
        });
    }
    Ok(Ari {
        value: (index - expected) / denom,
        degenerate: false,
    })
}

fn entropy(counts: &[u64], n: f64) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Mutual information normalized by the geometric mean of the entropies.
pub fn nmi(ct: &Contingency) -> Result<f64> {
    if ct.n == 0 {
        return Err(Error::Empty("NMI needs at least one event"));
    }
    let n = ct.n as f64;
    let hp = entropy(&ct.row_sums, n);
    let ht = entropy(&ct.col_sums, n);
    if hp == 0.0 && ht == 0.0 {
        return Ok(1.0);
    }
    if hp == 0.0 || ht == 0.0 {
        return Ok(0.0);
    }
    let mut mi = 0.0;
    for (i, row) in ct.table.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c > 0 {
                let c = c as f64;
                mi += c / n * (n * c / (ct.row_sums[i] as f64 * ct.col_sums[j] as f64)).ln();
            }
        }
    }
    Ok((mi / (hp * ht).sqrt()).clamp(0.0, 1.0))
}

/// Drops prediction-noise events and gives every truth-noise event its own
/// label. Returns aligned dense label vectors.
pub fn prepare_labels(
    pred: &[Option<usize>],
    truth: &[Option<usize>],
) -> Result<(Vec<usize>, Vec<usize>)> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: pred.len(),
            right: truth.len(),
        });
    }
    let offset = truth.iter().flatten().max().map_or(0, |m| m + 1);
    let mut p = Vec::with_capacity(pred.len());
    let mut t = Vec::with_capacity(pred.len());
    for (i, (pl, tl)) in pred.iter().zip(truth).enumerate() {
        if let Some(pl) = pl {
            p.push(*pl);
            t.push(tl.unwrap_or(offset + i));
        }
    }
    Ok((p, t))
}

/// All clustering scores for one packet.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClusterScores {
    pub ari: f64,
    pub nmi: f64,
    pub precision: f64,
    pub recall: f64,
    pub f: f64,
    /// Events scored after noise exclusion.
    pub scored: usize,
}

pub fn score_clustering(
    pred: &[Option<usize>],
    truth: &[Option<usize>],
    beta: f64,
) -> Result<ClusterScores> {
    let (p, t) = prepare_labels(pred, truth)?;
    if p.len() < 2 {
        return Err(Error::Empty("fewer than two non-noise events to score"));
    }
    let ct = Contingency::new(&p, &t)?;
    let prf = precision_recall_f(&pair_counts(&ct), beta);
    Ok(ClusterScores {
        ari: adjusted_rand_index(&ct)?.value,
        nmi: nmi(&ct)?,
        precision: prf.precision,
        recall: prf.recall,
        f: prf.f,
        scored: p.len(),
    })
}

/// Arithmetic mean of per-packet scores.
pub fn mean_scores(scores: &[ClusterScores]) -> Option<ClusterScores> {
    if scores.is_empty() {
        return None;
    }
    let n = scores.len() as f64;
    let sum = |f: fn(&ClusterScores) -> f64| scores.iter().map(f).sum::<f64>() / n;
    Some(ClusterScores {
        ari: sum(|s| s.ari),
        nmi: sum(|s| s.nmi),
        precision: sum(|s| s.precision),
        recall: sum(|s| s.recall),
        f: sum(|s| s.f),
        scored: scores.iter().map(|s| s.scored).sum(),
    })
}
