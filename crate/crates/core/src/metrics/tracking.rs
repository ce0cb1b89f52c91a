use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// A tracked position at one instant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrackSample {
    pub t: f64,
    pub track_id: u64,
    pub x: f64,
    pub y: f64,
}

/// A ground-truth object center at one instant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CenterSample {
    pub t: f64,
    pub object_id: usize,
    pub x: f64,
    pub y: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrackingErrors {
    /// `(object_id, error in px)` per aligned estimate.
    pub samples: Vec<(usize, f64)>,
    /// Object each track was bound to.
    pub correspondence: BTreeMap<u64, usize>,
}

impl TrackingErrors {
    pub fn mean_error(&self) -> f64 {
        self.samples.iter().map(|s| s.1).sum::<f64>() / self.samples.len() as f64
    }

    /// Share of estimates within `threshold` px of the truth.
    pub fn valid_fraction(&self, threshold: f64) -> f64 {
        let ok = self.samples.iter().filter(|s| s.1 <= threshold).count();
        ok as f64 / self.samples.len() as f64
    }

    pub fn per_object(&self) -> BTreeMap<usize, (f64, usize)> {
        let mut acc: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
        for &(obj, err) in &self.samples {
            let e = acc.entry(obj).or_default();
            e.0 += err;
            e.1 += 1;
        }
        acc.into_iter()
            .map(|(obj, (sum, n))| (obj, (sum / n as f64, n)))
            .collect()
    }
}

fn nearest_in_time(series: &[CenterSample], t: f64) -> Option<&CenterSample> {
    let i = series.partition_point(|s| s.t < t);
    let before = i.checked_sub(1).map(|j| &series[j]);
    let after = series.get(i);
    match (before, after) {
        (Some(b), Some(a)) => Some(if t - b.t <= a.t - t { b } else { a }),
        (b, a) => b.or(a),
    }
}

/// Distance of each tracked position to its object's ground-truth center.
///
/// Estimates are matched to the truth sample nearest in time, and only when
/// that sample is within `max_dt` seconds. Each track is bound to the object
/// whose center is nearest at the track's first aligned sample and keeps that
/// binding.
pub fn tracking_error(est: &[TrackSample], gt: &[CenterSample], max_dt: f64) -> Result<TrackingErrors> {
    let mut objects: BTreeMap<usize, Vec<CenterSample>> = BTreeMap::new();
    for s in gt {
        objects.entry(s.object_id).or_default().push(*s);
    }
    for series in objects.values_mut() {
        series.sort_by(|a, b| a.t.total_cmp(&b.t));
    }

    let mut order: Vec<&TrackSample> = est.iter().collect();
    order.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.track_id.cmp(&b.track_id)));

    let mut correspondence = BTreeMap::new();
    let mut samples = Vec::new();
    for e in order {
        let bound = match correspondence.get(&e.track_id) {
            Some(&obj) => obj,
            None => {
                let nearest = objects
                    .iter()
                    .filter_map(|(&obj, series)| {
                        let s = nearest_in_time(series, e.t)?;
                        ((s.t - e.t).abs() <= max_dt).then(|| (obj, (s.x - e.x).hypot(s.y - e.y)))
                    })
                    .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
                match nearest {
                    Some((obj, _)) => {
                        correspondence.insert(e.track_id, obj);
                        obj
                    }
                    None => continue,
                }
            }
        };
        if let Some(s) = nearest_in_time(&objects[&bound], e.t) {
            if (s.t - e.t).abs() <= max_dt {
                samples.push((bound, (s.x - e.x).hypot(s.y - e.y)));
            }
        }
    }
    if samples.is_empty() {
        return Err(Error::EmptyAlignment);
    }
    Ok(TrackingErrors {
        samples,
        correspondence,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn truth() -> Vec<CenterSample> {
        (0..100)
            .flat_map(|i| {
                let t = i as f64 * 0.01;
                [
                    CenterSample { t, object_id: 0, x: 10.0 + 50.0 * t, y: 20.0 },
                    CenterSample { t, object_id: 1, x: 100.0, y: 80.0 - 30.0 * t },
                ]
            })
            .collect()
    }

    fn as_estimates(gt: &[CenterSample], dx: f64) -> Vec<TrackSample> {
        gt.iter()
            .map(|s| TrackSample { t: s.t, track_id: s.object_id as u64 + 7, x: s.x + dx, y: s.y })
            .collect()
    }

    #[test]
    fn perfect_tracks() {
        let gt = truth();
        let e = tracking_error(&as_estimates(&gt, 0.0), &gt, 0.005).unwrap();
        assert_eq!(e.mean_error(), 0.0);
        assert_eq!(e.valid_fraction(1e-9), 1.0);
        assert_eq!(e.correspondence[&7], 0);
        assert_eq!(e.correspondence[&8], 1);
    }

    #[test]
    fn constant_offset() {
        let gt = truth();
        let e = tracking_error(&as_estimates(&gt, 1.0), &gt, 0.005).unwrap();
        assert!((e.mean_error() - 1.0).abs() < 1e-12);
        assert_eq!(e.valid_fraction(2.5), 1.0);
        assert_eq!(e.valid_fraction(0.5), 0.0);
    }

    #[test]
    fn noisy_trajectory_matches_direct_distances() {
        let gt = truth();
        let offsets = [(0.5, -1.0), (2.0, 2.0), (-3.0, 0.0), (0.0, 0.1)];
        let est: Vec<TrackSample> = gt
            .iter()
            .filter(|s| s.object_id == 0)
            .zip(offsets.iter().cycle())
            .map(|(s, (dx, dy))| TrackSample { t: s.t + 0.001, track_id: 3, x: s.x + dx, y: s.y + dy })
            .collect();
        let e = tracking_error(&est, &gt, 0.005).unwrap();
        let direct: Vec<f64> = offsets.iter().cycle().take(100).map(|(dx, dy)| f64::hypot(*dx, *dy)).collect();
        let mean = direct.iter().sum::<f64>() / 100.0;
        assert!((e.mean_error() - mean).abs() < 1e-12);
        let valid = direct.iter().filter(|&&d| d <= 2.5).count() as f64 / 100.0;
        assert_eq!(e.valid_fraction(2.5), valid);
    }

    #[test]
    fn no_overlap_is_an_error() {
        let gt = truth();
        let est = [TrackSample { t: 50.0, track_id: 0, x: 0.0, y: 0.0 }];
        assert!(matches!(tracking_error(&est, &gt, 0.01), Err(Error::EmptyAlignment)));
    }
}
