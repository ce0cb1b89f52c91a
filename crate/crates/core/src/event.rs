//! Events, sensor geometry and the normalized feature space the clustering
//! works in.
//!
//! Every event maps to a 4D point `[x, y, p, f(t)]` where the spatial
//! coordinates are scaled to `[0, 1]`, polarity is `0` or `1`, and the time
//! coordinate is an exponential decay measured back from the newest event of
//! the packet it belongs to.

use crate::error::{Error, Result};

/// Sign of the brightness change that triggered an event.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Polarity {
    Negative,
    Positive,
}

impl Polarity {
    /// Text-format encoding: `1` is positive, `0` negative.
    pub fn from_bit(bit: u8) -> Option<Self> {
        match bit {
            0 => Some(Polarity::Negative),
            1 => Some(Polarity::Positive),
            _ => None,
        }
    }

    pub fn as_bit(self) -> u8 {
        match self {
            Polarity::Negative => 0,
            Polarity::Positive => 1,
        }
    }
}

/// One asynchronous sensor sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Event {
    /// Seconds.
    pub t: f64,
    /// Column.
    pub x: u16,
    /// Row.
    pub y: u16,
    pub polarity: Polarity,
}

impl Event {
    pub fn new(t: f64, x: u16, y: u16, polarity: Polarity) -> Self {
        Event { t, x, y, polarity }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SensorGeometry {
    pub width: u32,
    pub height: u32,
}

impl SensorGeometry {
    /// DAVIS240 resolution.
    pub const DAVIS240: SensorGeometry = SensorGeometry {
        width: 240,
        height: 180,
    };

    /// DVS128 resolution.
    pub const DVS128: SensorGeometry = SensorGeometry {
        width: 128,
        height: 128,
    };

    pub fn new(width: u32, height: u32) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(
                "geometry",
                format!("dimensions must be positive, got {width}x{height}"),
            ));
        }
        Ok(SensorGeometry { width, height })
    }

    pub fn pixel_count(&self) -> u64 {
        u64::from(self.width) * u64::from(self.height)
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        x < self.width && y < self.height
    }

    pub fn check(&self, event: &Event) -> Result<()> {
        let (x, y) = (u32::from(event.x), u32::from(event.y));
        if self.contains(x, y) {
            Ok(())
        } else {
            Err(Error::OutOfBounds {
                x,
                y,
                width: self.width,
                height: self.height,
            })
        }
    }

    // A one-pixel axis maps everything to 0.
    fn normalize(coord: u16, dim: u32) -> f64 {
        if dim <= 1 {
            0.0
        } else {
            f64::from(coord) / f64::from(dim - 1)
        }
    }
}

/// How the time coordinate decays. `Δt` is measured from the newest event in
/// the packet.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecayParams {
    /// Decay time constant in seconds.
    pub tau: f64,
}

impl DecayParams {
    pub fn new(tau: f64) -> Result<Self> {
        let params = DecayParams { tau };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tau.is_finite() && self.tau > 0.0 {
            Ok(())
        } else {
            Err(Error::invalid(
                "tau",
                format!("must be finite and > 0, got {}", self.tau),
            ))
        }
    }
}

impl Default for DecayParams {
    fn default() -> Self {
        DecayParams { tau: 0.025 }
    }
}

/// Exponential time decay `exp(-(t_ref - t) / tau)`.
pub fn decay(t: f64, t_ref: f64, params: &DecayParams) -> Result<f64> {
    if t > t_ref {
        return Err(Error::FutureTimestamp { t, t_ref });
    }
    Ok((-(t_ref - t) / params.tau).exp())
}

/// Normalized 4D point for one event.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeatureVector {
    pub fx: f64,
    pub fy: f64,
    pub fp: f64,
    pub ft: f64,
}

impl FeatureVector {
    pub fn to_array(self) -> [f64; 4] {
        [self.fx, self.fy, self.fp, self.ft]
    }
}

pub fn to_feature(
    event: &Event,
    t_ref: f64,
    geom: &SensorGeometry,
    params: &DecayParams,
) -> Result<FeatureVector> {
    geom.check(event)?;
    Ok(FeatureVector {
        fx: SensorGeometry::normalize(event.x, geom.width),
        fy: SensorGeometry::normalize(event.y, geom.height),
        fp: f64::from(event.polarity.as_bit()),
        ft: decay(event.t, t_ref, params)?,
    })
}

/// A time-ordered batch of events clustered as one unit, with their feature
/// vectors precomputed.
#[derive(Clone, Debug, PartialEq)]
pub struct Packet {
    events: Vec<Event>,
    features: Vec<FeatureVector>,
    t_ref: f64,
}

impl Packet {
    pub fn new(events: Vec<Event>, geom: &SensorGeometry, params: &DecayParams) -> Result<Self> {
        if events.is_empty() {
            return Err(Error::Empty("packet"));
        }
        for (index, pair) in events.windows(2).enumerate() {
            if pair[1].t < pair[0].t {
                return Err(Error::StreamOrder {
                    index: index + 1,
                    t: pair[1].t,
                    previous: pair[0].t,
                });
            }
        }
        let t_ref = events[events.len() - 1].t;
        let features = events
            .iter()
            .map(|e| to_feature(e, t_ref, geom, params))
            .collect::<Result<Vec<_>>>()?;
        Ok(Packet {
            events,
            features,
            t_ref,
        })
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn features(&self) -> &[FeatureVector] {
        &self.features
    }

    /// Timestamp of the newest event.
    pub fn t_ref(&self) -> f64 {
        self.t_ref
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn span(&self) -> f64 {
        self.t_ref - self.events[0].t
    }
}

pub const DEFAULT_PACKET_SIZE: usize = 500;

/// Splits a time-ordered stream into consecutive packets of `size` events.
/// The final packet holds the remainder.
pub struct Packetizer<I> {
    stream: I,
    size: usize,
    geom: SensorGeometry,
    decay: DecayParams,
    index: usize,
    last_t: f64,
    failed: bool,
}

impl<I: Iterator<Item = Event>> Iterator for Packetizer<I> {
    type Item = Result<Packet>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        let mut events = Vec::with_capacity(self.size);
        for event in self.stream.by_ref() {
            if event.t < self.last_t {
                self.failed = true;
                return Some(Err(Error::StreamOrder {
                    index: self.index,
                    t: event.t,
                    previous: self.last_t,
                }));
            }
            self.last_t = event.t;
            self.index += 1;
            events.push(event);
            if events.len() == self.size {
                break;
            }
        }
        if events.is_empty() {
            return None;
        }
        let packet = Packet::new(events, &self.geom, &self.decay);
        self.failed = packet.is_err();
        Some(packet)
    }
}

pub fn packetize<I>(
    stream: I,
    size: usize,
    geom: SensorGeometry,
    decay: DecayParams,
) -> Result<Packetizer<I::IntoIter>>
where
    I: IntoIterator<Item = Event>,
{
    if size == 0 {
        return Err(Error::invalid("packet_size", "must be at least 1"));
    }
    decay.validate()?;
    Ok(Packetizer {
        stream: stream.into_iter(),
        size,
        geom,
        decay,
        index: 0,
        last_t: f64::NEG_INFINITY,
        failed: false,
    })
}
