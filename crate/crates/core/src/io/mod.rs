//! Text formats.
//!
//! * Event streams: one `t x y p` line per event (seconds, integer pixels,
//!   polarity `0`/`1`), optionally preceded by a `# width height` line.
//! * Labeled events: CSV `t,x,y,p,packet_id,cluster_id`, noise as `-1`.
//! * Tracks: CSV `t,track_id,x,y,vx,vy,status,raw_cx,raw_cy`, the raw
//!   columns empty when the track missed.
//! * Ground truth: CSV `t,x,y,p,label` per event and
//!   `t,object_id,cx,cy,visible` per object center sample.
//!
//! Floats are written in their shortest round-trip form, so reading back a
//! written file reproduces the values exactly. All files are UTF-8 with LF
//! line endings and are replaced atomically.

pub mod synth;

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::event::{Event, Packet, Polarity, SensorGeometry};
use crate::meanshift::ClusterLabeling;
use crate::metrics::CenterSample;
use crate::tracker::{Track, TrackStatus};

/// Writes through a sibling temp file renamed into place on success.
pub fn write_atomic<F>(path: &Path, fill: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> std::io::Result<()>,
{
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    let result = (|| {
        let mut w = BufWriter::new(File::create(&tmp)?);
        fill(&mut w)?;
        w.flush()?;
        w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.map_err(|e| Error::io(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

fn lines(path: &Path) -> Result<Vec<String>> {
    open(path)?
        .lines()
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_owned(),
        line,
        message: message.into(),
    }
}

fn field<T: std::str::FromStr>(path: &Path, line: usize, name: &str, raw: Option<&str>) -> Result<T> {
    let raw = raw.ok_or_else(|| parse_err(path, line, format!("missing field `{name}`")))?;
    raw.trim()
        .parse()
        .map_err(|_| parse_err(path, line, format!("bad {name} `{raw}`")))
}

fn geometry_header(line: &str) -> Option<SensorGeometry> {
    let mut it = line.trim_start_matches('#').split_whitespace();
    let w = it.next()?.parse().ok()?;
    let h = it.next()?.parse().ok()?;
    if it.next().is_some() {
        return None;
    }
    SensorGeometry::new(w, h).ok()
}

fn polarity(path: &Path, line: usize, raw: Option<&str>) -> Result<Polarity> {
    let bit: u8 = field(path, line, "polarity", raw)?;
    Polarity::from_bit(bit).ok_or_else(|| parse_err(path, line, format!("polarity must be 0 or 1, got {bit}")))
}

#[derive(Clone, Debug, PartialEq)]
pub struct EventFile {
    pub geom: SensorGeometry,
    pub events: Vec<Event>,
    /// The file was not time ordered (it was sorted if sorting was asked for).
    pub was_unordered: bool,
}

/// Reads a `t x y p` event file. `geom_override` wins over the header.
pub fn read_events(path: &Path, geom_override: Option<SensorGeometry>, sort: bool) -> Result<EventFile> {
    let mut geom = geom_override;
    let mut events = Vec::new();
    for (i, line) in lines(path)?.iter().enumerate() {
        let lineno = i + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('#') {
            if geom.is_none() && events.is_empty() {
                geom = geometry_header(line);
            }
            continue;
        }
        let mut it = line.split_whitespace();
        let t: f64 = field(path, lineno, "t", it.next())?;
        if !(t.is_finite() && t >= 0.0) {
            return Err(parse_err(path, lineno, format!("timestamp must be finite and >= 0, got {t}")));
        }
        let x: u16 = field(path, lineno, "x", it.next())?;
        let y: u16 = field(path, lineno, "y", it.next())?;
        let p = polarity(path, lineno, it.next())?;
        if it.next().is_some() {
            return Err(parse_err(path, lineno, "trailing fields"));
        }
        let event = Event::new(t, x, y, p);
        if let Some(g) = &geom {
            g.check(&event).map_err(|e| parse_err(path, lineno, e.to_string()))?;
        }
        events.push(event);
    }
    let geom = geom.ok_or_else(|| parse_err(path, 1, "no `# width height` header and no geometry given"))?;
    let was_unordered = events.windows(2).any(|w| w[1].t < w[0].t);
    if was_unordered && sort {
        events.sort_by(|a, b| a.t.total_cmp(&b.t));
    }
    Ok(EventFile {
        geom,
        events,
        was_unordered,
    })
}

pub fn write_events(path: &Path, geom: &SensorGeometry, events: &[Event]) -> Result<()> {
    write_atomic(path, |w| {
        writeln!(w, "# {} {}", geom.width, geom.height)?;
        for e in events {
            writeln!(w, "{} {} {} {}", e.t, e.x, e.y, e.polarity.as_bit())?;
        }
        Ok(())
    })
}

/// One row of a labeled-events CSV.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LabeledEvent {
    pub event: Event,
    pub packet_id: usize,
    pub cluster: Option<usize>,
}

pub const LABELED_HEADER: &str = "t,x,y,p,packet_id,cluster_id";

fn label_code(label: Option<usize>) -> i64 {
    label.map_or(-1, |l| l as i64)
}

fn parse_label(path: &Path, line: usize, raw: Option<&str>) -> Result<Option<usize>> {
    let v: i64 = field(path, line, "label", raw)?;
    match v {
        -1 => Ok(None),
        v if v >= 0 => Ok(Some(v as usize)),
        v => Err(parse_err(path, line, format!("label must be >= -1, got {v}"))),
    }
}

pub fn labeled_rows(packets: &[(Packet, ClusterLabeling)]) -> Vec<LabeledEvent> {
    packets
        .iter()
        .enumerate()
        .flat_map(|(packet_id, (packet, labeling))| {
            packet
                .events()
                .iter()
                .zip(&labeling.labels)
                .map(move |(e, l)| LabeledEvent {
                    event: *e,
                    packet_id,
                    cluster: *l,
                })
        })
        .collect()
}

pub fn write_labeled_events(path: &Path, rows: &[LabeledEvent]) -> Result<()> {
    write_atomic(path, |w| {
        writeln!(w, "{LABELED_HEADER}")?;
        for r in rows {
            let e = &r.event;
            writeln!(
                w,
                "{},{},{},{},{},{}",
                e.t,
                e.x,
                e.y,
                e.polarity.as_bit(),
                r.packet_id,
                label_code(r.cluster)
            )?;
        }
        Ok(())
    })
}

fn csv_body<'a>(path: &Path, all: &'a [String], header: &str) -> Result<impl Iterator<Item = (usize, &'a String)>> {
    let mut it = all.iter().enumerate().filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));
    match it.next() {
        Some((_, h)) if h.trim() == header => Ok(it.map(|(i, l)| (i + 1, l))),
        Some((i, h)) => Err(parse_err(path, i + 1, format!("expected header `{header}`, got `{h}`"))),
        None => Err(parse_err(path, 1, format!("missing header `{header}`"))),
    }
}

pub fn read_labeled_events(path: &Path) -> Result<Vec<LabeledEvent>> {
    let all = lines(path)?;
    let mut rows = Vec::new();
    for (lineno, line) in csv_body(path, &all, LABELED_HEADER)? {
        let mut it = line.split(',');
        let t = field(path, lineno, "t", it.next())?;
        let x = field(path, lineno, "x", it.next())?;
        let y = field(path, lineno, "y", it.next())?;
        let p = polarity(path, lineno, it.next())?;
        let packet_id = field(path, lineno, "packet_id", it.next())?;
        let cluster = parse_label(path, lineno, it.next())?;
        rows.push(LabeledEvent {
            event: Event::new(t, x, y, p),
            packet_id,
            cluster,
        });
    }
    Ok(rows)
}

/// One row of a tracks CSV: a live track's state after a step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrackRow {
    pub t: f64,
    pub track_id: u64,
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub status: TrackStatus,
    pub raw: Option<[f64; 2]>,
}

impl TrackRow {
    pub fn from_track(t: f64, track: &Track) -> Self {
        let [x, y] = track.state.position();
        let [vx, vy] = track.state.velocity();
        TrackRow {
            t,
            track_id: track.id,
            x,
            y,
            vx,
            vy,
            status: track.status,
            raw: track.measurement,
        }
    }
}

pub const TRACKS_HEADER: &str = "t,track_id,x,y,vx,vy,status,raw_cx,raw_cy";

pub fn write_tracks(path: &Path, rows: &[TrackRow]) -> Result<()> {
    write_atomic(path, |w| {
        writeln!(w, "{TRACKS_HEADER}")?;
        for r in rows {
            write!(
                w,
                "{},{},{},{},{},{},{},",
                r.t,
                r.track_id,
                r.x,
                r.y,
                r.vx,
                r.vy,
                r.status.as_str()
            )?;
            match r.raw {
                Some([cx, cy]) => writeln!(w, "{cx},{cy}")?,
                None => writeln!(w, ",")?,
            }
        }
        Ok(())
    })
}

pub fn read_tracks(path: &Path) -> Result<Vec<TrackRow>> {
    let all = lines(path)?;
    let mut rows = Vec::new();
    for (lineno, line) in csv_body(path, &all, TRACKS_HEADER)? {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 9 {
            return Err(parse_err(path, lineno, format!("expected 9 fields, got {}", f.len())));
        }
        let status = TrackStatus::parse(f[6]).ok_or_else(|| parse_err(path, lineno, format!("bad status `{}`", f[6])))?;
        let raw = match (f[7].trim(), f[8].trim()) {
            ("", "") => None,
            (cx, cy) => Some([
                field(path, lineno, "raw_cx", Some(cx))?,
                field(path, lineno, "raw_cy", Some(cy))?,
            ]),
        };
        rows.push(TrackRow {
            t: field(path, lineno, "t", Some(f[0]))?,
            track_id: field(path, lineno, "track_id", Some(f[1]))?,
            x: field(path, lineno, "x", Some(f[2]))?,
            y: field(path, lineno, "y", Some(f[3]))?,
            vx: field(path, lineno, "vx", Some(f[4]))?,
            vy: field(path, lineno, "vy", Some(f[5]))?,
            status,
            raw,
        });
    }
    Ok(rows)
}

pub const TRUTH_HEADER: &str = "t,x,y,p,label";

/// Per-event ground truth with the sensor geometry.
#[derive(Clone, Debug, PartialEq)]
pub struct TruthFile {
    pub geom: SensorGeometry,
    pub events: Vec<Event>,
    /// Object index, `None` for background noise.
    pub labels: Vec<Option<usize>>,
}

pub fn write_truth(path: &Path, truth: &TruthFile) -> Result<()> {
    write_atomic(path, |w| {
        writeln!(w, "# {} {}", truth.geom.width, truth.geom.height)?;
        writeln!(w, "{TRUTH_HEADER}")?;
        for (e, l) in truth.events.iter().zip(&truth.labels) {
            writeln!(w, "{},{},{},{},{}", e.t, e.x, e.y, e.polarity.as_bit(), label_code(*l))?;
        }
        Ok(())
    })
}

pub fn read_truth(path: &Path) -> Result<TruthFile> {
    let all = lines(path)?;
    let geom = all
        .iter()
        .find(|l| l.starts_with('#'))
        .and_then(|l| geometry_header(l))
        .ok_or_else(|| parse_err(path, 1, "missing `# width height` header"))?;
    let mut events = Vec::new();
    let mut labels = Vec::new();
    for (lineno, line) in csv_body(path, &all, TRUTH_HEADER)? {
        let mut it = line.split(',');
        let t = field(path, lineno, "t", it.next())?;
        let x = field(path, lineno, "x", it.next())?;
        let y = field(path, lineno, "y", it.next())?;
        let p = polarity(path, lineno, it.next())?;
        events.push(Event::new(t, x, y, p));
        labels.push(parse_label(path, lineno, it.next())?);
    }
    Ok(TruthFile { geom, events, labels })
}

pub const CENTERS_HEADER: &str = "t,object_id,cx,cy,visible";

/// Ground-truth center of one object at one instant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CenterRecord {
    pub t: f64,
    pub object_id: usize,
    pub x: f64,
    pub y: f64,
    /// Center lies on the sensor.
    pub visible: bool,
}

impl CenterRecord {
    pub fn sample(&self) -> CenterSample {
        CenterSample {
            t: self.t,
            object_id: self.object_id,
            x: self.x,
            y: self.y,
        }
    }
}

pub fn write_centers(path: &Path, centers: &[CenterRecord]) -> Result<()> {
    write_atomic(path, |w| {
        writeln!(w, "{CENTERS_HEADER}")?;
        for c in centers {
            writeln!(w, "{},{},{},{},{}", c.t, c.object_id, c.x, c.y, u8::from(c.visible))?;
        }
        Ok(())
    })
}

pub fn read_centers(path: &Path) -> Result<Vec<CenterRecord>> {
    let all = lines(path)?;
    let mut out = Vec::new();
    for (lineno, line) in csv_body(path, &all, CENTERS_HEADER)? {
        let mut it = line.split(',');
        let t = field(path, lineno, "t", it.next())?;
        let object_id = field(path, lineno, "object_id", it.next())?;
        let x = field(path, lineno, "cx", it.next())?;
        let y = field(path, lineno, "cy", it.next())?;
        let visible: u8 = field(path, lineno, "visible", it.next())?;
        out.push(CenterRecord {
            t,
            object_id,
            x,
            y,
            visible: visible != 0,
        });
    }
    Ok(out)
}

/// Pairs each labeled event with its ground-truth label. Labeled rows must be
/// an in-order subsequence of the truth events (filtering only drops events).
pub fn align_truth(rows: &[LabeledEvent], truth: &TruthFile) -> Result<Vec<Option<usize>>> {
    let mut out = Vec::with_capacity(rows.len());
    let mut cursor = 0;
    for (i, r) in rows.iter().enumerate() {
        let found = truth.events[cursor..].iter().position(|e| *e == r.event);
        match found {
            Some(offset) => {
                cursor += offset;
                out.push(truth.labels[cursor]);
                cursor += 1;
            }
            None => {
                return Err(Error::Parse {
                    path: PathBuf::from("<labeled events>"),
                    line: i + 2,
                    message: format!("event {:?} not found in ground truth", r.event),
                })
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tmpfile(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn reads_event_line() {
        let f = tmpfile("# 240 180\n0.003811 96 61 1\n");
        let ef = read_events(f.path(), None, false).unwrap();
        assert_eq!(ef.geom, SensorGeometry::DAVIS240);
        assert_eq!(ef.events, vec![Event::new(0.003811, 96, 61, Polarity::Positive)]);
    }

    #[test]
    fn empty_file_needs_geometry() {
        let f = tmpfile("");
        assert!(read_events(f.path(), None, false).is_err());
        let ef = read_events(f.path(), Some(SensorGeometry::DVS128), false).unwrap();
        assert!(ef.events.is_empty());
    }

    #[test]
    fn malformed_line_reports_number() {
        let f = tmpfile("# 240 180\n0.1 1 1 1\n0.2 x 1 0\n");
        match read_events(f.path(), None, false) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        let f = tmpfile("# 240 180\n0.1 1 1 2\n");
        assert!(read_events(f.path(), None, false).is_err());
        let f = tmpfile("# 10 10\n0.1 11 1 0\n");
        assert!(read_events(f.path(), None, false).is_err());
    }

    #[test]
    fn shuffled_file_sorts_stably() {
        let f = tmpfile("# 240 180\n0.3 1 1 1\n0.1 2 2 0\n0.3 3 3 0\n0.2 4 4 1\n0.1 5 5 1\n");
        let raw = read_events(f.path(), None, false).unwrap();
        assert!(raw.was_unordered);
        let sorted = read_events(f.path(), None, true).unwrap();
        let xs: Vec<u16> = sorted.events.iter().map(|e| e.x).collect();
        assert_eq!(xs, vec![2, 5, 4, 1, 3]);
        assert!(sorted.events.windows(2).all(|w| w[0].t <= w[1].t));
    }

    #[test]
    fn labeled_noise_is_minus_one() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("l.csv");
        let rows = [
            LabeledEvent { event: Event::new(0.5, 1, 2, Polarity::Negative), packet_id: 0, cluster: None },
            LabeledEvent { event: Event::new(0.6, 3, 4, Polarity::Positive), packet_id: 1, cluster: Some(2) },
        ];
        write_labeled_events(&path, &rows).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text, "t,x,y,p,packet_id,cluster_id\n0.5,1,2,0,0,-1\n0.6,3,4,1,1,2\n");
        assert_eq!(read_labeled_events(&path).unwrap(), rows);
    }

    #[test]
    fn tracks_round_trip_with_misses() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let rows = [
            TrackRow { t: 0.1, track_id: 0, x: 1.5, y: 2.25, vx: -0.1, vy: 3.0, status: TrackStatus::Tentative, raw: Some([1.0, 2.0]) },
            TrackRow { t: 0.2, track_id: 0, x: 1.0 / 3.0, y: 2.0, vx: 0.0, vy: 1e-17, status: TrackStatus::Confirmed, raw: None },
        ];
        write_tracks(&path, &rows).unwrap();
        assert_eq!(read_tracks(&path).unwrap(), rows);
    }

    #[test]
    fn truth_alignment_skips_filtered_events() {
        let events: Vec<Event> = (0..6).map(|i| Event::new(i as f64, i, 0, Polarity::Positive)).collect();
        let truth = TruthFile {
            geom: SensorGeometry::DVS128,
            events: events.clone(),
            labels: vec![Some(0), None, Some(1), Some(1), None, Some(0)],
        };
        let rows: Vec<LabeledEvent> = [1, 2, 5]
            .iter()
            .map(|&i| LabeledEvent { event: events[i], packet_id: 0, cluster: Some(0) })
            .collect();
        assert_eq!(align_truth(&rows, &truth).unwrap(), vec![None, Some(1), Some(0)]);
    }

    fn arb_events() -> impl Strategy<Value = Vec<Event>> {
        prop::collection::vec((0.0f64..1e3, 0u16..240, 0u16..180, any::<bool>()), 0..50).prop_map(|v| {
            v.into_iter()
                .map(|(t, x, y, p)| Event::new(t, x, y, if p { Polarity::Positive } else { Polarity::Negative }))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn event_file_round_trip(events in arb_events()) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("e.txt");
            write_events(&path, &SensorGeometry::DAVIS240, &events).unwrap();
            let back = read_events(&path, None, false).unwrap();
            prop_assert_eq!(back.events, events);
        }

        #[test]
        fn truth_and_centers_round_trip(events in arb_events(), ids in prop::collection::vec(-1i64..5, 50)) {
            let dir = tempfile::tempdir().unwrap();
            let labels: Vec<Option<usize>> = ids[..events.len()].iter().map(|&i| (i >= 0).then_some(i as usize)).collect();
            let truth = TruthFile { geom: SensorGeometry::DAVIS240, events: events.clone(), labels };
            let path = dir.path().join("truth.csv");
            write_truth(&path, &truth).unwrap();
            prop_assert_eq!(read_truth(&path).unwrap(), truth);

            let centers: Vec<CenterRecord> = events.iter().enumerate().map(|(i, e)| CenterRecord {
                t: e.t, object_id: i % 3, x: f64::from(e.x) / 7.0, y: f64::from(e.y) * 0.1, visible: e.polarity == Polarity::Positive,
            }).collect();
            let path = dir.path().join("centers.csv");
            write_centers(&path, &centers).unwrap();
            prop_assert_eq!(read_centers(&path).unwrap(), centers);
        }
    }
}
