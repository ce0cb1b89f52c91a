//! Brute-force oracles shared by the oracle suite and the acceptance run.
//! Each check returns a one-line summary, or a description of the first
//! disagreement.

#![allow(dead_code)]

use std::collections::HashMap;

use evshift_core::event::{DecayParams, Event, Packet, Polarity, SensorGeometry};
use evshift_core::io::synth::{generate, reference_scene};
use evshift_core::io::{self, LabeledEvent, TrackRow};
use evshift_core::meanshift::{cluster_packet, find_mode, HybridMeanShift, MeanShiftParams, Point};
use evshift_core::metrics::{adjusted_rand_index, nmi, pair_counts, Contingency, PairCounts};
use evshift_core::pipeline::{cluster_events, track_packets, PipelineParams};
use evshift_core::tracker::{predict, update, TrackState, TrackStatus, TrackerParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Check = Result<String, String>;

const GEOM: SensorGeometry = SensorGeometry::DAVIS240;

fn packet(events: Vec<Event>) -> Packet {
    Packet::new(events, &GEOM, &DecayParams::default()).unwrap()
}

fn polarity(rng: &mut ChaCha8Rng) -> Polarity {
    if rng.random_bool(0.5) {
        Polarity::Positive
    } else {
        Polarity::Negative
    }
}

/// Same partition up to renaming.
fn same_partition(a: &[usize], b: &[usize]) -> bool {
    let mut ab = HashMap::new();
    let mut ba = HashMap::new();
    a.iter().zip(b).all(|(x, y)| *ab.entry(x).or_insert(y) == y && *ba.entry(y).or_insert(x) == x)
}

/// Packets of 2-4 compact blobs, well apart, all events simultaneous and of
/// one polarity so that only the spatial coordinates carry structure.
fn blob_packet(rng: &mut ChaCha8Rng) -> (Packet, Vec<usize>) {
    let k = rng.random_range(2..=4);
    let mut centers: Vec<(f64, f64)> = Vec::new();
    while centers.len() < k {
        let c = (rng.random_range(15.0..225.0), rng.random_range(15.0..165.0));
        let far = centers
            .iter()
            .all(|&(x, y)| ((c.0 - x) / 239.0).hypot((c.1 - y) / 179.0) > 0.45);
        if far {
            centers.push(c);
        }
    }
    let mut events = Vec::new();
    let mut truth = Vec::new();
    for (label, &(cx, cy)) in centers.iter().enumerate() {
        let n = rng.random_range(5..=25);
        for _ in 0..n {
            let x = (cx + rng.random_range(-3.0..=3.0)).round() as u16;
            let y = (cy + rng.random_range(-3.0..=3.0)).round() as u16;
            events.push(Event::new(0.5, x, y, Polarity::Positive));
            truth.push(label);
        }
    }
    (packet(events), truth)
}

/// Discrete hill climb over a grid of spatial kernel density values.
struct GridKde<'a> {
    points: Vec<[f64; 2]>,
    h: f64,
    step: f64,
    cache: HashMap<(i64, i64), f64>,
    _packet: &'a Packet,
}

impl<'a> GridKde<'a> {
    fn new(packet: &'a Packet, h: f64, step: f64) -> Self {
        GridKde {
            points: packet.features().iter().map(|f| [f.fx, f.fy]).collect(),
            h,
            step,
            cache: HashMap::new(),
            _packet: packet,
        }
    }

    fn value(&mut self, cell: (i64, i64)) -> f64 {
        let (points, h, step) = (&self.points, self.h, self.step);
        *self.cache.entry(cell).or_insert_with(|| {
            let (x, y) = (cell.0 as f64 * step, cell.1 as f64 * step);
            points
                .iter()
                .map(|p| {
                    let d2 = ((x - p[0]) / h).powi(2) + ((y - p[1]) / h).powi(2);
                    (-0.5 * d2).exp()
                })
                .sum()
        })
    }

    fn climb(&mut self, x: f64, y: f64) -> (i64, i64) {
        let mut cell = ((x / self.step).round() as i64, (y / self.step).round() as i64);
        loop {
            let here = self.value(cell);
            let mut best = (here, cell);
            for dx in -1..=1 {
                for dy in -1..=1 {
                    let c = (cell.0 + dx, cell.1 + dy);
                    let v = self.value(c);
                    if v > best.0 {
                        best = (v, c);
                    }
                }
            }
            if best.1 == cell {
                return cell;
            }
            cell = best.1;
        }
    }
}

/// Mean-shift labels agree with basins of attraction found by hill climbing
/// a gridded density; the first seed's mode lands on its basin's peak.
pub fn kde_basins(packets: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0xBA51);
    let params = MeanShiftParams::default();
    let step = 0.0025;
    let mut events = 0;
    for p in 0..packets {
        let (packet, truth) = blob_packet(&mut rng);
        let labeling = cluster_packet(&packet, &params).map_err(|e| e.to_string())?;
        let Some(ms): Option<Vec<usize>> = labeling.labels.iter().copied().collect() else {
            return Err(format!("packet {p}: mean-shift left noise in a blob packet"));
        };
        let mut grid = GridKde::new(&packet, params.bandwidth, step);
        let basins: Vec<(i64, i64)> = packet.features().iter().map(|f| grid.climb(f.fx, f.fy)).collect();
        let mut ids = HashMap::new();
        let basin_labels: Vec<usize> = basins
            .iter()
            .map(|b| {
                let next = ids.len();
                *ids.entry(*b).or_insert(next)
            })
            .collect();
        if !same_partition(&ms, &basin_labels) {
            return Err(format!("packet {p}: labels {ms:?} vs basins {basin_labels:?}"));
        }
        if !same_partition(&ms, &truth) {
            return Err(format!("packet {p}: labels {ms:?} vs blobs {truth:?}"));
        }
        let (mode, _) = find_mode(0, &packet, &params).map_err(|e| e.to_string())?;
        let peak = basins[0];
        let d = (mode.fx - peak.0 as f64 * step).hypot(mode.fy - peak.1 as f64 * step);
        if d > 2.0 * step {
            return Err(format!("packet {p}: mode {mode:?} is {d:.4} from grid peak"));
        }
        events += packet.len();
    }
    Ok(format!("{packets} packets, {events} events match their density basins"))
}

fn density(at: &Point, refs: &[Point], params: &MeanShiftParams) -> f64 {
    let h = params.bandwidth;
    let w = [1.0, 1.0, params.polarity_weight, 1.0];
    refs.iter()
        .map(|r| {
            let d2: f64 = (0..4).map(|k| (w[k] * (at[k] - r[k]) / h).powi(2)).sum();
            (-0.5 * d2).exp()
        })
        .sum()
}

/// Every shift raises the density of the reference set it climbed against.
pub fn monotone_ascent(seeds: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0xA5CE);
    let params = MeanShiftParams::default();
    let per_packet = 50;
    let mut checked = 0usize;
    for p in 0..seeds.div_ceil(per_packet) {
        let mut t = 0.0;
        let events: Vec<Event> = (0..per_packet)
            .map(|_| {
                t += rng.random_range(0.0..2e-3);
                let (cx, cy) = if rng.random_bool(0.5) { (60.0, 50.0) } else { (150.0, 120.0) };
                let x = (cx + rng.random_range(-25.0..25.0)) as u16;
                let y = (cy + rng.random_range(-25.0..25.0)) as u16;
                Event::new(t, x, y, polarity(&mut rng))
            })
            .collect();
        let packet = packet(events);
        let mut ms = HybridMeanShift::new(&packet, &params);
        while !ms.is_done() {
            let refs = ms.references().to_vec();
            let before = ms.iterates().to_vec();
            let active: Vec<bool> = (0..before.len()).map(|i| ms.is_active(i)).collect();
            ms.step();
            for (i, after) in ms.iterates().iter().enumerate().filter(|(i, _)| active[*i]) {
                let (d0, d1) = (density(&before[i], &refs, &params), density(after, &refs, &params));
                if d1 < d0 - 1e-12 {
                    return Err(format!("packet {p} seed {i}: density fell from {d0} to {d1}"));
                }
                checked += 1;
            }
        }
    }
    Ok(format!("{seeds} seeds, {checked} shifts never lost density"))
}

fn brute_pairs(pred: &[usize], truth: &[usize]) -> PairCounts {
    let mut pc = PairCounts::default();
    for i in 0..pred.len() {
        for j in (i + 1)..pred.len() {
            match (pred[i] == pred[j], truth[i] == truth[j]) {
                (true, true) => pc.tp += 1,
                (true, false) => pc.fp += 1,
                (false, true) => pc.fn_ += 1,
                (false, false) => pc.tn += 1,
            }
        }
    }
    pc
}

fn brute_ari(pred: &[usize], truth: &[usize]) -> f64 {
    let pc = brute_pairs(pred, truth);
    let total = pc.total() as f64;
    let a = (pc.tp + pc.fp) as f64;
    let b = (pc.tp + pc.fn_) as f64;
    let expected = a * b / total;
    let denom = 0.5 * (a + b) - expected;
    if denom == 0.0 {
        1.0
    } else {
        (pc.tp as f64 - expected) / denom
    }
}

fn brute_nmi(pred: &[usize], truth: &[usize]) -> f64 {
    let n = pred.len() as f64;
    let mut joint: HashMap<(usize, usize), f64> = HashMap::new();
    let mut pa: HashMap<usize, f64> = HashMap::new();
    let mut pb: HashMap<usize, f64> = HashMap::new();
    for (&a, &b) in pred.iter().zip(truth) {
        *joint.entry((a, b)).or_default() += 1.0 / n;
        *pa.entry(a).or_default() += 1.0 / n;
        *pb.entry(b).or_default() += 1.0 / n;
    }
    let h = |m: &HashMap<usize, f64>| -> f64 { m.values().map(|p| -p * p.ln()).sum() };
    let (ha, hb) = (h(&pa), h(&pb));
    if ha == 0.0 && hb == 0.0 {
        return 1.0;
    }
    if ha == 0.0 || hb == 0.0 {
        return 0.0;
    }
    let mi: f64 = joint.iter().map(|(&(a, b), &p)| p * (p / (pa[&a] * pb[&b])).ln()).sum();
    mi / (ha * hb).sqrt()
}

/// Pair counts, ARI and NMI against enumeration, and chance-level ARI.
pub fn clustering_metrics(labelings: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x3E7);
    for case in 0..labelings {
        let n = rng.random_range(2..=50);
        let (kp, kt) = (rng.random_range(1..=6), rng.random_range(1..=6));
        let pred: Vec<usize> = (0..n).map(|_| rng.random_range(0..kp)).collect();
        let truth: Vec<usize> = (0..n).map(|_| rng.random_range(0..kt)).collect();
        let ct = Contingency::new(&pred, &truth).map_err(|e| e.to_string())?;
        if pair_counts(&ct) != brute_pairs(&pred, &truth) {
            return Err(format!("case {case}: pair counts differ"));
        }
        let ari = adjusted_rand_index(&ct).map_err(|e| e.to_string())?.value;
        if (ari - brute_ari(&pred, &truth)).abs() > 1e-9 {
            return Err(format!("case {case}: ARI {ari} vs {}", brute_ari(&pred, &truth)));
        }
        let v = nmi(&ct).map_err(|e| e.to_string())?;
        // Near-independent labelings put MI at rounding level, where the
        // summation orders of the two computations disagree by ~1e-8.
        if (v - brute_nmi(&pred, &truth).clamp(0.0, 1.0)).abs() > 1e-6 {
            return Err(format!("case {case}: NMI {v} vs {}", brute_nmi(&pred, &truth)));
        }
    }
    let pairs = 1000;
    let mut sum = 0.0;
    for _ in 0..pairs {
        let a: Vec<usize> = (0..50).map(|_| rng.random_range(0..4)).collect();
        let b: Vec<usize> = (0..50).map(|_| rng.random_range(0..4)).collect();
        sum += adjusted_rand_index(&Contingency::new(&a, &b).unwrap()).unwrap().value;
    }
    let mean = sum / pairs as f64;
    if mean.abs() > 0.02 {
        return Err(format!("mean ARI of random pairs {mean:.4}"));
    }
    Ok(format!("{labelings} labelings match enumeration, random-pair ARI {mean:+.4}"))
}

/// Covariance stays symmetric PSD under random predict/update sequences, and
/// a noiseless constant-velocity target is locked onto.
pub fn kalman(sequences: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x4A1);
    let mut worst = 0.0f64;
    for seq in 0..sequences {
        let params = TrackerParams {
            q_var: rng.random_range(0.0..1e4),
            r_var: rng.random_range(1e-3..100.0),
            ..TrackerParams::default()
        };
        let mut s = TrackState::at(rng.random_range(0.0..240.0), rng.random_range(0.0..180.0), params.r_var);
        for _ in 0..rng.random_range(1..40) {
            s = if rng.random_bool(0.5) {
                update(&s, [rng.random_range(-50.0..300.0), rng.random_range(-50.0..250.0)], &params)
            } else {
                predict(&s, rng.random_range(0.0..0.1), &params)
            }
            .map_err(|e| format!("sequence {seq}: {e}"))?;
            if s.cov != s.cov.transpose() {
                return Err(format!("sequence {seq}: covariance lost symmetry"));
            }
            let scale = s.cov.abs().max().max(1.0);
            let min = s.min_eigenvalue() / scale;
            worst = worst.min(min);
            if min < -1e-9 {
                return Err(format!("sequence {seq}: eigenvalue {min:e} relative to scale"));
            }
        }
    }

    let params = TrackerParams::default();
    let (vx, vy) = (80.0, -35.0);
    let dt = 0.005;
    let mut s = TrackState::at(20.0, 150.0, params.r_var);
    for k in 1..=50 {
        let t = k as f64 * dt;
        s = predict(&s, dt, &params).map_err(|e| e.to_string())?;
        s = update(&s, [20.0 + vx * t, 150.0 + vy * t], &params).map_err(|e| e.to_string())?;
    }
    let [ex, ey] = [(s.mean[2] - vx) / vx, (s.mean[3] - vy) / vy];
    if ex.abs() > 0.01 || ey.abs() > 0.01 {
        return Err(format!("velocity after 50 updates off by {:.2}% / {:.2}%", 100.0 * ex, 100.0 * ey));
    }
    Ok(format!(
        "{sequences} sequences PSD (worst relative eigenvalue {worst:.1e}); velocity within {:.3}% after 50 updates",
        100.0 * ex.abs().max(ey.abs())
    ))
}

/// Speed factor only rescales timestamps.
pub fn speed_factor_identity() -> Check {
    let mut spec = reference_scene(0.05);
    let base = generate(&spec, 21).map_err(|e| e.to_string())?;
    for factor in [2.0, 3.0, 0.5] {
        spec.speed_factor = factor;
        let fast = generate(&spec, 21).map_err(|e| e.to_string())?;
        let same = base.events.len() == fast.events.len()
            && base.labels == fast.labels
            && base
                .events
                .iter()
                .zip(&fast.events)
                .all(|(a, b)| a.t / factor == b.t && (a.x, a.y, a.polarity) == (b.x, b.y, b.polarity));
        if !same {
            return Err(format!("factor {factor} changed more than timestamps"));
        }
    }
    Ok(format!("{} events identical under factors 2, 3, 0.5", base.events.len()))
}

/// Every file format reads back to what was written.
pub fn round_trips() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let s = generate(&reference_scene(0.03), 4).map_err(|e| e.to_string())?;
    let err = |e: evshift_core::Error| e.to_string();

    let path = dir.path().join("events.txt");
    io::write_events(&path, &s.geom, &s.events).map_err(err)?;
    let back = io::read_events(&path, None, false).map_err(err)?;
    if back.events != s.events || back.geom != s.geom {
        return Err("event file".into());
    }

    let truth = s.truth();
    let path = dir.path().join("truth.csv");
    io::write_truth(&path, &truth).map_err(err)?;
    if io::read_truth(&path).map_err(err)? != truth {
        return Err("truth file".into());
    }

    let path = dir.path().join("centers.csv");
    io::write_centers(&path, &s.centers).map_err(err)?;
    if io::read_centers(&path).map_err(err)? != s.centers {
        return Err("centers file".into());
    }

    let params = PipelineParams::default();
    let run = cluster_events(&s.events, s.geom, &params).map_err(err)?;
    let rows: Vec<LabeledEvent> = io::labeled_rows(&run.packets);
    let path = dir.path().join("labeled.csv");
    io::write_labeled_events(&path, &rows).map_err(err)?;
    if io::read_labeled_events(&path).map_err(err)? != rows {
        return Err("labeled events file".into());
    }

    let tracks: Vec<TrackRow> = track_packets(&run.packets, &params.tracker).map_err(err)?.rows;
    let path = dir.path().join("tracks.csv");
    io::write_tracks(&path, &tracks).map_err(err)?;
    if io::read_tracks(&path).map_err(err)? != tracks {
        return Err("tracks file".into());
    }
    Ok(format!(
        "events, truth, centers, {} labeled rows and {} track rows round-trip exactly",
        rows.len(),
        tracks.len()
    ))
}

fn pipeline_bytes(seed: u64) -> Result<Vec<Vec<u8>>, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let err = |e: evshift_core::Error| e.to_string();
    let s = generate(&reference_scene(0.04), seed).map_err(err)?;
    let params = PipelineParams::default();
    let run = cluster_events(&s.events, s.geom, &params).map_err(err)?;
    let tracks = track_packets(&run.packets, &params.tracker).map_err(err)?;
    let files = ["events.txt", "labeled.csv", "tracks.csv"].map(|f| dir.path().join(f));
    io::write_events(&files[0], &s.geom, &s.events).map_err(err)?;
    io::write_labeled_events(&files[1], &io::labeled_rows(&run.packets)).map_err(err)?;
    io::write_tracks(&files[2], &tracks.rows).map_err(err)?;
    files.iter().map(|f| std::fs::read(f).map_err(|e| e.to_string())).collect()
}

/// Generation, clustering and tracking reproduce byte-identical files.
pub fn pipeline_determinism() -> Check {
    let a = pipeline_bytes(9)?;
    let b = pipeline_bytes(9)?;
    if a != b {
        return Err("outputs differ between identical runs".into());
    }
    let confirmed = String::from_utf8_lossy(&a[2]).matches(TrackStatus::Confirmed.as_str()).count();
    Ok(format!("{} bytes identical across runs ({confirmed} confirmed track rows)", a.iter().map(Vec::len).sum::<usize>()))
}
