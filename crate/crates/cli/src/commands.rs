use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use evshift_core::bench::{run_sweep, write_report, SweepParams};
use evshift_core::io::synth::{exit_scene, generate, reference_scene, tracking_scene, SceneSpec};
use evshift_core::io::{self, EventFile, LabeledEvent};
use evshift_core::metrics::{
    kmeans_baseline, mean_scores, score_clustering, tracking_error, CenterSample, ClusterScores, KMeansParams,
    TrackSample,
};
use evshift_core::noise::filter_indices;
use evshift_core::pipeline::{cluster_events, track_packets, PipelineParams};
use evshift_core::{Error as CoreError, Packet, SensorGeometry, TrackStatus};

use crate::config::Settings;
use crate::error::{CliError, Result};
use crate::{Command, EventInput, Positions, Preset, SceneArgs};

pub fn run(command: Command, settings: &Settings) -> Result<()> {
    match command {
        Command::Synth { scene, out_prefix } => synth(&scene, &out_prefix, settings),
        Command::Filter { input, out } => filter(&input, &out, settings),
        Command::Cluster {
            input,
            out,
            plot,
            plot_packet_size,
            no_filter,
        } => cluster(&input, &out, plot.as_deref(), plot_packet_size, no_filter, settings),
        Command::Track { input, out, no_filter } => track(&input, &out, no_filter, settings),
        Command::EvalCluster {
            labeled,
            truth,
            kmeans,
            beta,
            out,
        } => eval_cluster(&labeled, &truth, kmeans, beta, out.as_deref(), settings),
        Command::EvalTrack {
            tracks,
            centers,
            positions,
            max_dt,
            out,
        } => eval_track(&tracks, &centers, positions, max_dt, out.as_deref(), settings),
        Command::Bench {
            events,
            scene,
            factors,
            window,
            fps,
            out,
        } => bench(events.as_deref(), &scene, &factors, window, fps, out.as_deref(), settings),
    }
}

fn invalid(name: &'static str, reason: String) -> CliError {
    CoreError::InvalidParameter { name, reason }.into()
}

/// Writes to `out` atomically, or to stdout.
fn emit<F>(out: Option<&Path>, fill: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> std::io::Result<()>,
{
    match out {
        Some(path) => Ok(io::write_atomic(path, fill)?),
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            fill(&mut lock)
                .and_then(|_| lock.flush())
                .map_err(|source| CliError::Io {
                    path: PathBuf::from("<stdout>"),
                    source,
                })
        }
    }
}

fn scene(args: &SceneArgs, settings: &Settings) -> Result<SceneSpec> {
    let mut spec = match &args.spec {
        Some(path) => SceneSpec::load(path)?,
        None => {
            let preset = args.preset.unwrap_or(Preset::Reference);
            let duration = args.duration.unwrap_or(match preset {
                Preset::Reference => 0.5,
                Preset::Tracking => 4.0,
                Preset::Exit => 10.0,
            });
            if !(duration.is_finite() && duration > 0.0) {
                return Err(invalid("duration", format!("must be finite and > 0, got {duration}")));
            }
            match preset {
                Preset::Reference => reference_scene(duration),
                Preset::Tracking => tracking_scene(duration),
                Preset::Exit => exit_scene(duration),
            }
        }
    };
    if let Some(f) = settings.speed_factor {
        spec.speed_factor = f;
    }
    spec.validate()?;
    Ok(spec)
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = OsString::from(prefix.as_os_str());
    s.push(suffix);
    PathBuf::from(s)
}

fn synth(args: &SceneArgs, prefix: &Path, settings: &Settings) -> Result<()> {
    let spec = scene(args, settings)?;
    let s = generate(&spec, settings.seed)?;
    io::write_events(&with_suffix(prefix, ".events.txt"), &s.geom, &s.events)?;
    io::write_truth(&with_suffix(prefix, ".truth.csv"), &s.truth())?;
    io::write_centers(&with_suffix(prefix, ".centers.csv"), &s.centers)?;
    let noise = s.labels.iter().filter(|l| l.is_none()).count();
    eprintln!(
        "synth: {} events ({noise} noise), {} objects, {} center samples",
        s.events.len(),
        spec.shapes.len(),
        s.centers.len()
    );
    Ok(())
}

fn read_input(input: &EventInput) -> Result<EventFile> {
    let geom = match (input.width, input.height) {
        (Some(w), Some(h)) => Some(SensorGeometry::new(w, h)?),
        _ => None,
    };
    let file = io::read_events(&input.events, geom, input.sort)?;
    if file.was_unordered {
        let action = if input.sort { "sorted by timestamp" } else { "rerun with --sort to order it" };
        eprintln!("evshift: warning: {} is not time ordered; {action}", input.events.display());
    }
    Ok(file)
}

fn pipeline(settings: &Settings, no_filter: bool) -> PipelineParams {
    let mut params = settings.pipeline;
    if no_filter {
        params.filter = None;
    }
    params
}

fn filter(input: &EventInput, out: &Path, settings: &Settings) -> Result<()> {
    let file = read_input(input)?;
    let params = settings.pipeline.filter.unwrap_or_default();
    let kept = filter_indices(&file.events, params, file.geom)?;
    let events: Vec<_> = kept.iter().map(|&i| file.events[i]).collect();
    io::write_events(out, &file.geom, &events)?;
    eprintln!("filter: kept {} of {} events", events.len(), file.events.len());
    Ok(())
}

fn cluster(
    input: &EventInput,
    out: &Path,
    plot: Option<&Path>,
    plot_packet_size: usize,
    no_filter: bool,
    settings: &Settings,
) -> Result<()> {
    let file = read_input(input)?;
    let params = pipeline(settings, no_filter);
    let run = cluster_events(&file.events, file.geom, &params)?;
    io::write_labeled_events(out, &io::labeled_rows(&run.packets))?;
    eprintln!(
        "cluster: {} packets, {} clusters, {} kernel evaluations",
        run.packets.len(),
        run.detections(),
        run.kernel_evaluations()
    );
    if let Some(path) = plot {
        let params = PipelineParams {
            packet_size: plot_packet_size,
            ..params
        };
        let run = cluster_events(&file.events, file.geom, &params)?;
        let rows = io::labeled_rows(&run.packets);
        io::write_atomic(path, |w| {
            writeln!(w, "packet_id,x,y,t,label")?;
            for r in &rows {
                let label = r.cluster.map_or(-1, |c| c as i64);
                writeln!(w, "{},{},{},{},{label}", r.packet_id, r.event.x, r.event.y, r.event.t)?;
            }
            Ok(())
        })?;
    }
    Ok(())
}

fn track(input: &EventInput, out: &Path, no_filter: bool, settings: &Settings) -> Result<()> {
    let file = read_input(input)?;
    let params = pipeline(settings, no_filter);
    let run = cluster_events(&file.events, file.geom, &params)?;
    let tracks = track_packets(&run.packets, &params.tracker)?;
    io::write_tracks(out, &tracks.rows)?;
    let ids: std::collections::BTreeSet<u64> = tracks
        .rows
        .iter()
        .filter(|r| r.status == TrackStatus::Confirmed)
        .map(|r| r.track_id)
        .collect();
    eprintln!(
        "track: {} packets, {} confirmed tracks, {} predict/update calls",
        run.packets.len(),
        ids.len(),
        tracks.ops.cycles()
    );
    Ok(())
}

fn score_fields(s: &ClusterScores) -> String {
    format!("{},{},{},{},{}", s.ari, s.nmi, s.precision, s.recall, s.f)
}

fn eval_cluster(
    labeled: &Path,
    truth: &Path,
    kmeans: bool,
    beta: f64,
    out: Option<&Path>,
    settings: &Settings,
) -> Result<()> {
    if !(beta.is_finite() && beta > 0.0) {
        return Err(invalid("beta", format!("must be finite and > 0, got {beta}")));
    }
    let rows = io::read_labeled_events(labeled)?;
    let truth = io::read_truth(truth)?;
    let labels = io::align_truth(&rows, &truth)?;

    let mut packets: BTreeMap<usize, Vec<(LabeledEvent, Option<usize>)>> = BTreeMap::new();
    for (r, l) in rows.iter().zip(labels) {
        packets.entry(r.packet_id).or_default().push((*r, l));
    }

    let mut lines = Vec::new();
    let mut ms_scores = Vec::new();
    let mut km_scores = Vec::new();
    let mut skipped = 0;
    for (id, members) in &packets {
        let pred: Vec<Option<usize>> = members.iter().map(|(r, _)| r.cluster).collect();
        let gt: Vec<Option<usize>> = members.iter().map(|(_, l)| *l).collect();
        let ms = match score_clustering(&pred, &gt, beta) {
            Ok(s) => s,
            Err(CoreError::Empty(_)) => {
                skipped += 1;
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let mut line = format!("{id},{},{},{}", members.len(), ms.scored, score_fields(&ms));
        if kmeans {
            let events = members.iter().map(|(r, _)| r.event).collect();
            let packet = Packet::new(events, &truth.geom, &settings.pipeline.decay)?;
            let k = settings.kmeans_k.unwrap_or_else(|| {
                let objects: std::collections::BTreeSet<usize> = gt.iter().flatten().copied().collect();
                objects.len()
            });
            let k = k.clamp(1, packet.len());
            let labeling = kmeans_baseline(&packet, &KMeansParams::new(k, settings.seed))?;
            let km = score_clustering(&labeling.labels, &gt, beta)?;
            line.push(',');
            line.push_str(&score_fields(&km));
            km_scores.push(km);
        }
        ms_scores.push(ms);
        lines.push(line);
    }
    let Some(mean) = mean_scores(&ms_scores) else {
        return Err(CoreError::Empty("no packet has two non-noise events to score").into());
    };
    let mut summary = format!("mean,{},{},{}", rows.len(), mean.scored, score_fields(&mean));
    if let Some(km) = mean_scores(&km_scores) {
        summary.push(',');
        summary.push_str(&score_fields(&km));
    }
    lines.push(summary);
    if skipped > 0 {
        eprintln!("eval-cluster: skipped {skipped} packets with fewer than two scorable events");
    }

    let mut header = String::from("packet_id,events,scored,ari,nmi,precision,recall,f");
    if kmeans {
        header.push_str(",kmeans_ari,kmeans_nmi,kmeans_precision,kmeans_recall,kmeans_f");
    }
    emit(out, |w| {
        writeln!(w, "{header}")?;
        for line in &lines {
            writeln!(w, "{line}")?;
        }
        Ok(())
    })
}

fn eval_track(
    tracks: &Path,
    centers: &Path,
    positions: Positions,
    max_dt: f64,
    out: Option<&Path>,
    settings: &Settings,
) -> Result<()> {
    let threshold = settings.threshold;
    if !(threshold.is_finite() && threshold >= 0.0) {
        return Err(invalid("threshold", format!("must be finite and >= 0, got {threshold}")));
    }
    if !(max_dt.is_finite() && max_dt >= 0.0) {
        return Err(invalid("max_dt", format!("must be finite and >= 0, got {max_dt}")));
    }
    let rows = io::read_tracks(tracks)?;
    let gt: Vec<CenterSample> = io::read_centers(centers)?.iter().map(|c| c.sample()).collect();
    let est: Vec<TrackSample> = rows
        .iter()
        .filter(|r| r.status == TrackStatus::Confirmed)
        .filter_map(|r| {
            let [x, y] = match positions {
                Positions::Raw => r.raw?,
                Positions::Filtered => [r.x, r.y],
            };
            Some(TrackSample {
                t: r.t,
                track_id: r.track_id,
                x,
                y,
            })
        })
        .collect();
    let errors = tracking_error(&est, &gt, max_dt)?;

    let mut per: BTreeMap<usize, (f64, usize, usize)> = BTreeMap::new();
    for &(obj, err) in &errors.samples {
        let e = per.entry(obj).or_default();
        e.0 += err;
        e.1 += 1;
        e.2 += usize::from(err <= threshold);
    }
    emit(out, |w| {
        writeln!(w, "object_id,mean_error,valid_fraction,samples")?;
        for (obj, (sum, n, ok)) in &per {
            writeln!(w, "{obj},{},{},{n}", sum / *n as f64, *ok as f64 / *n as f64)?;
        }
        writeln!(
            w,
            "all,{},{},{}",
            errors.mean_error(),
            errors.valid_fraction(threshold),
            errors.samples.len()
        )
    })
}

fn bench(
    events: Option<&Path>,
    scene_args: &SceneArgs,
    factors: &[f64],
    window: Option<f64>,
    fps: f64,
    out: Option<&Path>,
    settings: &Settings,
) -> Result<()> {
    let (geom, events) = match events {
        Some(path) => {
            let file = io::read_events(path, None, true)?;
            (file.geom, file.events)
        }
        None => {
            let s = generate(&scene(scene_args, settings)?, settings.seed)?;
            (s.geom, s.events)
        }
    };
    let span = match (events.first(), events.last()) {
        (Some(a), Some(b)) => b.t - a.t,
        _ => 0.0,
    };
    let window = window.unwrap_or(if span > 0.0 { span / 3.0 } else { 1.0 });
    let sweep = SweepParams { window, fps };
    let reports = run_sweep(&events, geom, factors, &sweep, &settings.pipeline)?;
    for r in &reports {
        eprintln!(
            "bench: factor {}: {} events in window, {} kernel evaluations, tracking overhead {:.2}%, {:.2}s",
            r.factor,
            r.events,
            r.kernel_evaluations,
            100.0 * r.tracking_overhead(),
            r.wall_seconds
        );
    }
    emit(out, |w| write_report(w, &reports))
}
