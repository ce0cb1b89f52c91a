//! Lloyd's k-means with k-means++ seeding, used as the clustering baseline.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::event::Packet;
use crate::meanshift::{ClusterLabeling, Point};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KMeansParams {
    pub k: usize,
    pub seed: u64,
    pub max_iters: usize,
    /// Scale of the polarity axis, matching the mean-shift metric.
    pub polarity_weight: f64,
}

impl KMeansParams {
    pub fn new(k: usize, seed: u64) -> Self {
        KMeansParams {
            k,
            seed,
            max_iters: 100,
            polarity_weight: 1.0,
        }
    }
}

fn sq_dist(a: &Point, b: &Point) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Returns `(assignments, centers, iterations)`.
pub fn kmeans_points(points: &[Point], params: &KMeansParams) -> Result<(Vec<usize>, Vec<Point>, usize)> {
    let k = params.k;
    if k == 0 || k > points.len() {
        return Err(Error::invalid(
            "k",
            format!("must lie in 1..={}, got {k}", points.len()),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    let mut centers = vec![points[rng.random_range(0..points.len())]];
    let mut nearest: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = nearest.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = points.len() - 1;
            for (i, &d) in nearest.iter().enumerate() {
                if target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            // Every point already coincides with a center.
            rng.random_range(0..points.len())
        };
        let c = points[next];
        for (d, p) in nearest.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centers.push(c);
    }

    let mut assign = vec![usize::MAX; points.len()];
    let mut iterations = 0;
    for _ in 0..params.max_iters {
        iterations += 1;
        let mut changed = false;
        for (a, p) in assign.iter_mut().zip(points) {
            let best = (0..k)
                .min_by(|&i, &j| sq_dist(p, &centers[i]).total_cmp(&sq_dist(p, &centers[j])))
                .unwrap_or(0);
            if *a != best {
                *a = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![[0.0f64; 4]; k];
        let mut counts = vec![0usize; k];
        for (&a, p) in assign.iter().zip(points) {
            counts[a] += 1;
            for d in 0..4 {
                sums[a][d] += p[d];
            }
        }
        for c in 0..k {
            // An emptied center keeps its position.
            if counts[c] > 0 {
                centers[c] = sums[c].map(|s| s / counts[c] as f64);
            }
        }
    }
    Ok((assign, centers, iterations))
}

/// Lloyd's k-means over the packet's feature vectors (polarity axis scaled by
/// `params.polarity_weight`). Every event gets a cluster; empty clusters are
/// dropped from the labeling.
pub fn kmeans_baseline(packet: &Packet, params: &KMeansParams) -> Result<ClusterLabeling> {
    let points: Vec<Point> = packet
        .features()
        .iter()
        .map(|f| [f.fx, f.fy, f.fp * params.polarity_weight, f.ft])
        .collect();
    let (assign, _, _) = kmeans_points(&points, params)?;
    Ok(ClusterLabeling::from_groups(packet, &assign, 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::{DecayParams, Event, Polarity, SensorGeometry};
    use crate::metrics::score_clustering;

    fn packet(events: Vec<Event>) -> Packet {
        Packet::new(events, &SensorGeometry::DAVIS240, &DecayParams::default()).unwrap()
    }

    fn two_blobs() -> (Packet, Vec<Option<usize>>) {
        let mut events = Vec::new();
        let mut truth = Vec::new();
        for i in 0..40u16 {
            let (x, y, label) = if i % 2 == 0 { (30 + i % 5, 30 + i % 3, 0) } else { (200 + i % 4, 150 + i % 5, 1) };
            events.push(Event::new(f64::from(i) * 1e-5, x, y, Polarity::Positive));
            truth.push(Some(label));
        }
        (packet(events), truth)
    }

    #[test]
    fn single_cluster_center_is_mean() {
        let (p, _) = two_blobs();
        let points: Vec<Point> = p.features().iter().map(|f| f.to_array()).collect();
        let (assign, centers, _) = kmeans_points(&points, &KMeansParams::new(1, 3)).unwrap();
        assert!(assign.iter().all(|&a| a == 0));
        for d in 0..4 {
            let mean = points.iter().map(|q| q[d]).sum::<f64>() / points.len() as f64;
            assert!((centers[0][d] - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn recovers_separated_blobs() {
        let (p, truth) = two_blobs();
        let labeling = kmeans_baseline(&p, &KMeansParams::new(2, 9)).unwrap();
        let s = score_clustering(&labeling.labels, &truth, 1.0).unwrap();
        assert_eq!(s.f, 1.0);
    }

    #[test]
    fn seeded_runs_repeat() {
        let (p, _) = two_blobs();
        let a = kmeans_baseline(&p, &KMeansParams::new(3, 42)).unwrap();
        let b = kmeans_baseline(&p, &KMeansParams::new(3, 42)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_k() {
        let (p, _) = two_blobs();
        assert!(kmeans_baseline(&p, &KMeansParams::new(0, 1)).is_err());
        assert!(kmeans_baseline(&p, &KMeansParams::new(41, 1)).is_err());
    }
}
