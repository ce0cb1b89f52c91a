//! End-to-end wiring: filter, packetize, cluster, track.

use crate::error::Result;
use crate::event::{packetize, DecayParams, Event, Packet, SensorGeometry, DEFAULT_PACKET_SIZE};
use crate::io::TrackRow;
use crate::meanshift::{cluster_packet, ClusterLabeling, MeanShiftParams};
use crate::noise::{filter_indices, FilterParams};
use crate::tracker::{MultiTracker, TrackerOps, TrackerParams};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PipelineParams {
    pub decay: DecayParams,
    /// `None` skips the background-activity filter.
    pub filter: Option<FilterParams>,
    pub meanshift: MeanShiftParams,
    pub tracker: TrackerParams,
    pub packet_size: usize,
}

impl Default for PipelineParams {
    fn default() -> Self {
        PipelineParams {
            decay: DecayParams::default(),
            filter: Some(FilterParams::default()),
            meanshift: MeanShiftParams::default(),
            tracker: TrackerParams::default(),
            packet_size: DEFAULT_PACKET_SIZE,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterRun {
    /// Indices of the input events that survived filtering, in order.
    pub kept: Vec<usize>,
    pub packets: Vec<(Packet, ClusterLabeling)>,
}

impl ClusterRun {
    pub fn kernel_evaluations(&self) -> u64 {
        self.packets.iter().map(|(_, l)| l.ops_count).sum()
    }

    pub fn detections(&self) -> usize {
        self.packets.iter().map(|(_, l)| l.cluster_count()).sum()
    }
}

/// Filters `events` (if enabled) and clusters them packet by packet.
pub fn cluster_events(events: &[Event], geom: SensorGeometry, params: &PipelineParams) -> Result<ClusterRun> {
    params.meanshift.validate()?;
    let kept = match params.filter {
        Some(f) => filter_indices(events, f, geom)?,
        None => (0..events.len()).collect(),
    };
    let stream = kept.iter().map(|&i| events[i]);
    let packets = packetize(stream, params.packet_size, geom, params.decay)?
        .map(|p| {
            let p = p?;
            let labeling = cluster_packet(&p, &params.meanshift)?;
            Ok((p, labeling))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ClusterRun { kept, packets })
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrackRun {
    /// Every live track after every step.
    pub rows: Vec<TrackRow>,
    /// Confirmed tracks after each packet.
    pub confirmed: Vec<usize>,
    pub ops: TrackerOps,
}

/// Feeds each packet's centroids to a fresh tracker at the packet's newest
/// timestamp.
pub fn track_packets(packets: &[(Packet, ClusterLabeling)], params: &TrackerParams) -> Result<TrackRun> {
    let mut tracker = MultiTracker::new(*params)?;
    let mut rows = Vec::new();
    let mut confirmed = Vec::with_capacity(packets.len());
    for (packet, labeling) in packets {
        let t = packet.t_ref();
        tracker.step_labeling(labeling, t)?;
        rows.extend(tracker.tracks().iter().map(|tr| TrackRow::from_track(t, tr)));
        confirmed.push(tracker.confirmed_count());
    }
    Ok(TrackRun {
        rows,
        confirmed,
        ops: tracker.ops(),
    })
}
