//! Event storage and period indexing, CSV ingestion, and synthetic city
//! generation.
//!
//! Periods are abstract 1-based integers on a one-hour grid; a week is 168
//! periods. The labeled set for a target period `u` is the events from the
//! same hour-of-week slot in the preceding `M` weeks; the past window is
//! every event from the preceding `M` weeks regardless of slot.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read};
use std::ops::Range;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::error::{Error, Result};
use crate::{Point, PERIODS_PER_WEEK};

/// One demand event: the 1-hour period it arose in and its planar location.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub period: u32,
    pub location: Point,
}

impl Event {
    pub fn new(period: u32, x: f64, y: f64) -> Self {
        Event {
            period,
            location: Point::new(x, y),
        }
    }
}

/// Immutable store of events sorted by period (insertion order within a
/// period is preserved).
#[derive(Debug, Clone)]
pub struct EventStore {
    events: Vec<Event>,
}

impl EventStore {
    /// Build a store from events in any order. Periods must be ≥ 1 and
    /// coordinates finite.
    pub fn from_events(mut events: Vec<Event>) -> Result<Self> {
        for e in &events {
            if e.period == 0 {
                return Err(Error::Validation("event period must be >= 1".into()));
            }
            if !e.location.is_finite() {
                return Err(Error::Validation("event coordinates must be finite".into()));
            }
        }
        events.sort_by_key(|e| e.period);
        Ok(EventStore { events })
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn max_period(&self) -> u32 {
        self.events.last().map(|e| e.period).unwrap_or(0)
    }

    fn period_range(&self, lo: u32, hi: u32) -> Range<usize> {
        let start = self.events.partition_point(|e| e.period < lo);
        let end = self.events.partition_point(|e| e.period <= hi);
        start..end
    }

    /// All events of one period, in insertion order.
    pub fn events_at(&self, period: u32) -> &[Event] {
        &self.events[self.period_range(period, period)]
    }

    /// Number of events in one period.
    pub fn count_at(&self, period: u32) -> usize {
        self.events_at(period).len()
    }

    /// Events with period in `[lo, hi]`.
    pub fn events_between(&self, lo: u32, hi: u32) -> &[Event] {
        &self.events[self.period_range(lo, hi)]
    }

    /// Labeled data for target period `u`: events from the same hour-of-week
    /// slot in each of the preceding `m` weeks, ordered by (period, insertion).
    pub fn labeled_set(&self, u: u32, m: u32) -> Result<Vec<Event>> {
        check_history(u, m)?;
        let mut out = Vec::new();
        for k in (1..=m).rev() {
            out.extend_from_slice(self.events_at(u - PERIODS_PER_WEEK * k));
        }
        Ok(out)
    }

    /// All events in the `m` weeks preceding `u`, regardless of slot.
    pub fn past_window(&self, u: u32, m: u32) -> Result<Vec<Event>> {
        check_history(u, m)?;
        Ok(self.events_between(u - PERIODS_PER_WEEK * m, u - 1).to_vec())
    }

    /// Bounding box of event locations in `[lo, hi]`, if any.
    pub fn bounding_box(&self, lo: u32, hi: u32) -> Option<(Point, Point)> {
        let slice = self.events_between(lo, hi);
        let first = slice.first()?;
        let mut min = first.location;
        let mut max = first.location;
        for e in slice {
            min.x = min.x.min(e.location.x);
            min.y = min.y.min(e.location.y);
            max.x = max.x.max(e.location.x);
            max.y = max.y.max(e.location.y);
        }
        Some((min, max))
    }
}

fn check_history(u: u32, m: u32) -> Result<()> {
    let required = PERIODS_PER_WEEK * m;
    if u <= required {
        return Err(Error::InsufficientHistory { period: u, required });
    }
    Ok(())
}

const CSV_HEADER: &str = "period,x_km,y_km";

/// Read an event CSV (`period,x_km,y_km`).
pub fn ingest_csv(path: &Path) -> Result<EventStore> {
    let file = std::fs::File::open(path)?;
    ingest_csv_reader(BufReader::new(file))
}

/// Same as [`ingest_csv`] from any reader.
pub fn ingest_csv_reader<R: Read>(reader: BufReader<R>) -> Result<EventStore> {
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(h) => h?,
        None => {
            return Err(Error::Parse {
                line: 1,
                message: "missing header".into(),
            })
        }
    };
    if header.trim() != CSV_HEADER {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `{CSV_HEADER}`, got `{}`", header.trim()),
        });
    }
    let mut events = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let mut fields = trimmed.split(',');
        let (p, x, y) = match (fields.next(), fields.next(), fields.next(), fields.next()) {
            (Some(p), Some(x), Some(y), None) => (p, x, y),
            _ => {
                return Err(Error::Parse {
                    line: line_no,
                    message: "expected exactly 3 comma-separated fields".into(),
                })
            }
        };
        let period: i64 = p.trim().parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("invalid period `{}`", p.trim()),
        })?;
        if period < 1 {
            return Err(Error::Validation(format!(
                "line {line_no}: period must be >= 1, got {period}"
            )));
        }
        let x: f64 = x.trim().parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("invalid x coordinate `{}`", x.trim()),
        })?;
        let y: f64 = y.trim().parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("invalid y coordinate `{}`", y.trim()),
        })?;
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::Parse {
                line: line_no,
                message: "coordinates must be finite".into(),
            });
        }
        events.push(Event::new(period as u32, x, y));
    }
    EventStore::from_events(events)
}

/// Write the store as CSV; floats use the shortest round-trip formatting so
/// an export→ingest cycle preserves every field bit-exactly.
pub fn export_csv(store: &EventStore) -> String {
    let mut out = String::with_capacity(store.len() * 24 + 16);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for e in store.events() {
        let _ = writeln!(out, "{},{},{}", e.period, e.location.x, e.location.y);
    }
    out
}

/// A simple (non-self-intersecting) polygon in km coordinates.
#[derive(Debug, Clone)]
pub struct Polygon {
    vertices: Vec<Point>,
}

impl Polygon {
    pub fn new(vertices: Vec<Point>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::Validation("polygon needs at least 3 vertices".into()));
        }
        for v in &vertices {
            if !v.is_finite() {
                return Err(Error::Validation("polygon vertices must be finite".into()));
            }
        }
        let n = vertices.len();
        for i in 0..n {
            if vertices[i] == vertices[(i + 1) % n] {
                return Err(Error::Validation("polygon has repeated consecutive vertices".into()));
            }
        }
        let poly = Polygon { vertices };
        if poly.area().abs() < 1e-12 {
            return Err(Error::Validation("polygon has zero area".into()));
        }
        if !poly.is_simple() {
            return Err(Error::Validation("polygon is self-intersecting".into()));
        }
        Ok(poly)
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    /// Signed shoelace area.
    pub fn area(&self) -> f64 {
        let n = self.vertices.len();
        let mut s = 0.0;
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            s += a.x * b.y - b.x * a.y;
        }
        s / 2.0
    }

    pub fn bbox(&self) -> (Point, Point) {
        let mut min = self.vertices[0];
        let mut max = self.vertices[0];
        for v in &self.vertices {
            min.x = min.x.min(v.x);
            min.y = min.y.min(v.y);
            max.x = max.x.max(v.x);
            max.y = max.y.max(v.y);
        }
        (min, max)
    }

    /// Even-odd ray-casting point-in-polygon test.
    pub fn contains(&self, p: Point) -> bool {
        let n = self.vertices.len();
        let mut inside = false;
        let mut j = n - 1;
        for i in 0..n {
            let vi = self.vertices[i];
            let vj = self.vertices[j];
            if ((vi.y > p.y) != (vj.y > p.y))
                && (p.x < (vj.x - vi.x) * (p.y - vi.y) / (vj.y - vi.y) + vi.x)
            {
                inside = !inside;
            }
            j = i;
        }
        inside
    }

    fn is_simple(&self) -> bool {
        let n = self.vertices.len();
        for i in 0..n {
            let a1 = self.vertices[i];
            let a2 = self.vertices[(i + 1) % n];
            for j in (i + 1)..n {
                // Adjacent edges share an endpoint; skip those pairs.
                if j == i || (j + 1) % n == i || (i + 1) % n == j {
                    continue;
                }
                let b1 = self.vertices[j];
                let b2 = self.vertices[(j + 1) % n];
                if segments_intersect(a1, a2, b1, b2) {
                    return false;
                }
            }
        }
        true
    }
}

fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

fn on_segment(a: Point, b: Point, p: Point) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

fn segments_intersect(a1: Point, a2: Point, b1: Point, b2: Point) -> bool {
    let d1 = orient(a1, a2, b1);
    let d2 = orient(a1, a2, b2);
    let d3 = orient(b1, b2, a1);
    let d4 = orient(b1, b2, a2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(a1, a2, b1))
        || (d2 == 0.0 && on_segment(a1, a2, b2))
        || (d3 == 0.0 && on_segment(b1, b2, a1))
        || (d4 == 0.0 && on_segment(b1, b2, a2))
}

/// A road corridor: a segment with a demand intensity weight.
#[derive(Debug, Clone, Copy)]
pub struct Road {
    pub a: Point,
    pub b: Point,
    pub weight: f64,
}

/// Configuration for the synthetic NHPP city generator.
#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub polygon: Polygon,
    pub roads: Vec<Road>,
    /// Relative weekly intensity, one entry per hour-of-week slot.
    pub profile: Vec<f64>,
    pub mean_events: f64,
    pub weeks: u32,
    pub seed: u64,
    /// Weight of the uniform-in-polygon mixture component relative to the
    /// road weights.
    pub uniform_weight: f64,
    /// Gaussian jitter (km std) applied around road segments.
    pub road_jitter_km: f64,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.profile.len() != PERIODS_PER_WEEK as usize {
            return Err(Error::Validation(format!(
                "weekly profile must have {} entries, got {}",
                PERIODS_PER_WEEK,
                self.profile.len()
            )));
        }
        if self.profile.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::Validation("weekly profile entries must be > 0".into()));
        }
        if !(self.mean_events > 0.0) {
            return Err(Error::Validation("mean events per period must be > 0".into()));
        }
        if self.weeks == 0 {
            return Err(Error::Validation("weeks must be >= 1".into()));
        }
        if self.uniform_weight < 0.0 || self.roads.iter().any(|r| r.weight < 0.0) {
            return Err(Error::Validation("mixture weights must be >= 0".into()));
        }
        let total: f64 = self.uniform_weight + self.roads.iter().map(|r| r.weight).sum::<f64>();
        if !(total > 0.0) {
            return Err(Error::Validation("mixture weights must not all be zero".into()));
        }
        if !(self.road_jitter_km > 0.0) && !self.roads.is_empty() {
            return Err(Error::Validation("road jitter must be > 0".into()));
        }
        Ok(())
    }
}

/// Parse a line-based `key = value` synthetic-city config.
///
/// Keys: `seed`, `weeks`, `mean_events`, `uniform_weight`, `road_jitter_km`,
/// `polygon` (semicolon-separated `x,y` pairs), `road` (repeatable,
/// `weight ; x1,y1 ; x2,y2`), `profile` (168 comma-separated values,
/// defaults to all ones). Lines starting with `#` are comments.
pub fn parse_synth_config(text: &str) -> Result<SynthConfig> {
    let mut polygon: Option<Polygon> = None;
    let mut roads = Vec::new();
    let mut profile: Option<Vec<f64>> = None;
    let mut mean_events = None;
    let mut weeks = None;
    let mut seed = 0u64;
    let mut uniform_weight = 1.0;
    let mut road_jitter_km = 0.25;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: line_no,
            message: "expected `key = value`".into(),
        })?;
        let key = key.trim();
        let value = value.trim();
        let parse_f64 = |v: &str| -> Result<f64> {
            v.parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("invalid number `{v}`"),
            })
        };
        match key {
            "seed" => {
                seed = value.parse().map_err(|_| Error::Parse {
                    line: line_no,
                    message: format!("invalid seed `{value}`"),
                })?
            }
            "weeks" => {
                weeks = Some(value.parse().map_err(|_| Error::Parse {
                    line: line_no,
                    message: format!("invalid weeks `{value}`"),
                })?)
            }
            "mean_events" => mean_events = Some(parse_f64(value)?),
            "uniform_weight" => uniform_weight = parse_f64(value)?,
            "road_jitter_km" => road_jitter_km = parse_f64(value)?,
            "polygon" => {
                let pts = parse_point_list(value, line_no)?;
                polygon = Some(Polygon::new(pts)?);
            }
            "road" => {
                let mut parts = value.split(';');
                let w = parts.next().ok_or_else(|| Error::Parse {
                    line: line_no,
                    message: "road needs `weight ; x1,y1 ; x2,y2`".into(),
                })?;
                let weight = parse_f64(w.trim())?;
                let rest: Vec<&str> = parts.collect();
                if rest.len() != 2 {
                    return Err(Error::Parse {
                        line: line_no,
                        message: "road needs exactly two endpoints".into(),
                    });
                }
                let a = parse_point(rest[0], line_no)?;
                let b = parse_point(rest[1], line_no)?;
                roads.push(Road { a, b, weight });
            }
            "profile" => {
                let vals: Result<Vec<f64>> = value.split(',').map(|v| parse_f64(v.trim())).collect();
                profile = Some(vals?);
            }
            other => {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("unknown key `{other}`"),
                })
            }
        }
    }

    let cfg = SynthConfig {
        polygon: polygon.ok_or_else(|| Error::Validation("config missing `polygon`".into()))?,
        roads,
        profile: profile.unwrap_or_else(|| vec![1.0; PERIODS_PER_WEEK as usize]),
        mean_events: mean_events
            .ok_or_else(|| Error::Validation("config missing `mean_events`".into()))?,
        weeks: weeks.ok_or_else(|| Error::Validation("config missing `weeks`".into()))?,
        seed,
        uniform_weight,
        road_jitter_km,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn parse_point(s: &str, line_no: usize) -> Result<Point> {
    let (x, y) = s.trim().split_once(',').ok_or_else(|| Error::Parse {
        line: line_no,
        message: format!("expected `x,y`, got `{s}`"),
    })?;
    let px: f64 = x.trim().parse().map_err(|_| Error::Parse {
        line: line_no,
        message: format!("invalid coordinate `{x}`"),
    })?;
    let py: f64 = y.trim().parse().map_err(|_| Error::Parse {
        line: line_no,
        message: format!("invalid coordinate `{y}`"),
    })?;
    Ok(Point::new(px, py))
}

fn parse_point_list(s: &str, line_no: usize) -> Result<Vec<Point>> {
    s.split(';').map(|p| parse_point(p, line_no)).collect()
}

const MAX_REJECTIONS: usize = 100_000;

/// Generate a synthetic event store: per period, a Poisson number of events
/// whose locations mix a uniform draw inside the boundary polygon with
/// Gaussian-jittered points along road corridors (rejected outside the
/// polygon). Deterministic given the seed.
pub fn synth_generate(cfg: &SynthConfig) -> Result<EventStore> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (bmin, bmax) = cfg.polygon.bbox();
    let total_weight: f64 = cfg.uniform_weight + cfg.roads.iter().map(|r| r.weight).sum::<f64>();
    let jitter = Normal::new(0.0, cfg.road_jitter_km).map_err(|e| {
        Error::Validation(format!("invalid road jitter: {e}"))
    })?;

    let n_periods = cfg.weeks * PERIODS_PER_WEEK;
    let mut events = Vec::new();
    for t in 1..=n_periods {
        let slot = (t % PERIODS_PER_WEEK) as usize;
        let delta = cfg.mean_events * cfg.profile[slot];
        let n = Poisson::new(delta)
            .map_err(|e| Error::Validation(format!("invalid intensity {delta}: {e}")))?
            .sample(&mut rng) as usize;
        for _ in 0..n {
            let pick = rng.random_range(0.0..total_weight);
            let location = if pick < cfg.uniform_weight {
                sample_uniform_in_polygon(&cfg.polygon, bmin, bmax, &mut rng)?
            } else {
                let mut acc = cfg.uniform_weight;
                let mut chosen = cfg.roads[cfg.roads.len() - 1];
                for r in &cfg.roads {
                    acc += r.weight;
                    if pick < acc {
                        chosen = *r;
                        break;
                    }
                }
                sample_on_road(&cfg.polygon, chosen, &jitter, &mut rng)?
            };
            events.push(Event {
                period: t,
                location,
            });
        }
    }
    EventStore::from_events(events)
}

fn sample_uniform_in_polygon(
    poly: &Polygon,
    bmin: Point,
    bmax: Point,
    rng: &mut ChaCha8Rng,
) -> Result<Point> {
    for _ in 0..MAX_REJECTIONS {
        let p = Point::new(
            rng.random_range(bmin.x..bmax.x),
            rng.random_range(bmin.y..bmax.y),
        );
        if poly.contains(p) {
            return Ok(p);
        }
    }
    Err(Error::Validation(
        "degenerate polygon: rejection sampling failed".into(),
    ))
}

fn sample_on_road(
    poly: &Polygon,
    road: Road,
    jitter: &Normal<f64>,
    rng: &mut ChaCha8Rng,
) -> Result<Point> {
    for _ in 0..MAX_REJECTIONS {
        let t: f64 = rng.random_range(0.0..1.0);
        let base = Point::new(
            road.a.x + t * (road.b.x - road.a.x),
            road.a.y + t * (road.b.y - road.a.y),
        );
        let p = Point::new(base.x + jitter.sample(rng), base.y + jitter.sample(rng));
        if poly.contains(p) {
            return Ok(p);
        }
    }
    Err(Error::Validation(
        "degenerate road geometry: rejection sampling failed".into(),
    ))
}
