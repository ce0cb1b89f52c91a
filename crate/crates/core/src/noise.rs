//! Background-activity filter.
//!
//! An event survives only if some earlier event (kept or not) fired within
//! `radius` pixels (Chebyshev distance, the pixel itself included) during the
//! preceding `window` seconds. Support is always checked against the raw
//! stream history.

use crate::error::{Error, Result};
use crate::event::{Event, SensorGeometry};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FilterParams {
    /// Neighborhood half-width in pixels.
    pub radius: u32,
    /// Recency horizon in seconds.
    pub window: f64,
}

impl FilterParams {
    pub fn validate(&self) -> Result<()> {
        if self.radius < 1 {
            return Err(Error::invalid("filter_radius", "must be at least 1"));
        }
        if !(self.window.is_finite() && self.window > 0.0) {
            return Err(Error::invalid(
                "filter_window",
                format!("must be finite and > 0, got {}", self.window),
            ));
        }
        Ok(())
    }
}

impl Default for FilterParams {
    fn default() -> Self {
        FilterParams {
            radius: 1,
            window: 0.005,
        }
    }
}

/// Per-pixel timestamp memory. Each pixel remembers its newest timestamp and
/// the newest one strictly older than that, so same-timestamp bursts cannot
/// hide an older supporting event.
#[derive(Clone, Copy)]
struct PixelHistory {
    newest: f64,
    previous: f64,
}

impl PixelHistory {
    const EMPTY: PixelHistory = PixelHistory {
        newest: f64::NEG_INFINITY,
        previous: f64::NEG_INFINITY,
    };

    fn latest_before(&self, t: f64) -> f64 {
        if self.newest < t {
            self.newest
        } else {
            self.previous
        }
    }

    fn record(&mut self, t: f64) {
        if t > self.newest {
            self.previous = self.newest;
            self.newest = t;
        }
    }
}

pub struct BackgroundActivityFilter {
    params: FilterParams,
    geom: SensorGeometry,
    history: Vec<PixelHistory>,
    last_t: f64,
    seen: usize,
}

impl BackgroundActivityFilter {
    pub fn new(params: FilterParams, geom: SensorGeometry) -> Result<Self> {
        params.validate()?;
        Ok(BackgroundActivityFilter {
            params,
            geom,
            history: vec![PixelHistory::EMPTY; geom.pixel_count() as usize],
            last_t: f64::NEG_INFINITY,
            seen: 0,
        })
    }

    /// Returns whether `event` has support, then records it.
    pub fn accept(&mut self, event: &Event) -> Result<bool> {
        self.geom.check(event)?;
        if event.t < self.last_t {
            return Err(Error::StreamOrder {
                index: self.seen,
                t: event.t,
                previous: self.last_t,
            });
        }
        self.last_t = event.t;
        self.seen += 1;

        let r = self.params.radius;
        let (x, y) = (u32::from(event.x), u32::from(event.y));
        let (x0, x1) = (x.saturating_sub(r), (x + r).min(self.geom.width - 1));
        let (y0, y1) = (y.saturating_sub(r), (y + r).min(self.geom.height - 1));
        let width = self.geom.width as usize;

        let supported = (y0..=y1).any(|yy| {
            let row = yy as usize * width;
            (x0..=x1).any(|xx| {
                let prior = self.history[row + xx as usize].latest_before(event.t);
                event.t - prior <= self.params.window
            })
        });
        self.history[y as usize * width + x as usize].record(event.t);
        Ok(supported)
    }
}

pub struct FilteredStream<I> {
    stream: I,
    filter: BackgroundActivityFilter,
    failed: bool,
}

impl<I: Iterator<Item = Event>> Iterator for FilteredStream<I> {
    type Item = Result<Event>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        for event in self.stream.by_ref() {
            match self.filter.accept(&event) {
                Ok(true) => return Some(Ok(event)),
                Ok(false) => {}
                Err(err) => {
                    self.failed = true;
                    return Some(Err(err));
                }
            }
        }
        None
    }
}

pub fn filter_stream<I>(
    stream: I,
    params: FilterParams,
    geom: SensorGeometry,
) -> Result<FilteredStream<I::IntoIter>>
where
    I: IntoIterator<Item = Event>,
{
    Ok(FilteredStream {
        stream: stream.into_iter(),
        filter: BackgroundActivityFilter::new(params, geom)?,
        failed: false,
    })
}

/// Filters a slice, returning the indices of the surviving events.
pub fn filter_indices(
    events: &[Event],
    params: FilterParams,
    geom: SensorGeometry,
) -> Result<Vec<usize>> {
    let mut filter = BackgroundActivityFilter::new(params, geom)?;
    let mut kept = Vec::new();
    for (i, event) in events.iter().enumerate() {
        if filter.accept(event)? {
            kept.push(i);
        }
    }
    Ok(kept)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::Polarity;
    use proptest::prelude::*;

    const GEOM: SensorGeometry = SensorGeometry::DAVIS240;

    fn ev(t: f64, x: u16, y: u16) -> Event {
        Event::new(t, x, y, Polarity::Positive)
    }

    fn brute_force(events: &[Event], params: FilterParams) -> Vec<usize> {
        (0..events.len())
            .filter(|&i| {
                let e = &events[i];
                events[..i].iter().any(|o| {
                    (i32::from(e.x) - i32::from(o.x)).unsigned_abs() <= params.radius
                        && (i32::from(e.y) - i32::from(o.y)).unsigned_abs() <= params.radius
                        && e.t - o.t > 0.0
                        && e.t - o.t <= params.window
                })
            })
            .collect()
    }

    fn run(events: &[Event]) -> Vec<usize> {
        filter_indices(events, FilterParams::default(), GEOM).unwrap()
    }

    #[test]
    fn same_pixel_pair() {
        let w = FilterParams::default().window;
        assert_eq!(run(&[ev(0.0, 10, 10), ev(w / 2.0, 10, 10)]), vec![1]);
    }

    #[test]
    fn isolated_event_dropped() {
        assert!(run(&[ev(0.1, 50, 50)]).is_empty());
    }

    #[test]
    fn burst_and_far_event() {
        let events = [
            ev(0.0000, 20, 20),
            ev(0.0005, 21, 20),
            ev(0.0010, 20, 21),
            ev(0.0015, 21, 22),
            ev(0.0020, 21, 21),
            ev(0.0025, 70, 20),
        ];
        let expected = brute_force(&events, FilterParams::default());
        assert_eq!(expected, vec![1, 2, 3, 4]);
        assert_eq!(run(&events), expected);
    }

    #[test]
    fn simultaneous_events_do_not_support_each_other() {
        let events = [ev(0.001, 5, 5), ev(0.001, 5, 6), ev(0.0015, 5, 5)];
        assert_eq!(run(&events), vec![2]);
    }

    #[test]
    fn stale_support_is_ignored() {
        let events = [ev(0.0, 5, 5), ev(0.0051, 5, 5)];
        assert!(run(&events).is_empty());
    }

    #[test]
    fn out_of_order_stream_rejected() {
        let err = filter_indices(&[ev(0.2, 1, 1), ev(0.1, 1, 1)], FilterParams::default(), GEOM)
            .unwrap_err();
        assert!(matches!(err, Error::StreamOrder { index: 1, .. }));
    }

    #[test]
    fn iterator_preserves_order() {
        let events: Vec<Event> = (0..50).map(|i| ev(i as f64 * 1e-4, 30 + (i % 2) as u16, 30)).collect();
        let out: Vec<Event> = filter_stream(events.clone(), FilterParams::default(), GEOM)
            .unwrap()
            .map(|e| e.unwrap())
            .collect();
        assert_eq!(out, events[1..].to_vec());
    }

    #[test]
    fn params_validated() {
        assert!(FilterParams { radius: 0, window: 0.005 }.validate().is_err());
        assert!(FilterParams { radius: 1, window: 0.0 }.validate().is_err());
    }

    fn arb_events() -> impl Strategy<Value = Vec<Event>> {
        // A small patch and coarse time grid make ties and near-misses common.
        prop::collection::vec((0u32..400, 0u16..12, 0u16..12), 0..400).prop_map(|mut raw| {
            raw.sort_by_key(|r| r.0);
            raw.into_iter().map(|(tick, x, y)| ev(tick as f64 * 5e-4, x, y)).collect()
        })
    }

    proptest! {
        #[test]
        fn matches_brute_force(events in arb_events(), radius in 1u32..3, window_ticks in 1u32..20) {
            let params = FilterParams { radius, window: window_ticks as f64 * 5e-4 };
            let fast = filter_indices(&events, params, GEOM).unwrap();
            prop_assert_eq!(fast, brute_force(&events, params));
        }

        #[test]
        fn dense_streams_lose_nothing_after_first(n in 2usize..300) {
            let events: Vec<Event> = (0..n).map(|i| ev(i as f64 * 1e-4, 100 + (i % 3) as u16, 60)).collect();
            prop_assert_eq!(run(&events).len(), n - 1);
        }
    }
}
