use std::io::Read;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceSource {
    Synthetic,
    Ingested,
}

/// Per-user position series, `positions[i][t]` in metres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSet {
    pub positions: Vec<Vec<[f64; 2]>>,
    pub slot_duration_s: f64,
    pub source: TraceSource,
}

impl TraceSet {
    pub fn num_users(&self) -> usize {
        self.positions.len()
    }

    pub fn num_slots(&self) -> usize {
        self.positions.first().map_or(0, Vec::len)
    }

    /// Every user's position at slot index `t` (0-based).
    pub fn at(&self, t: usize) -> Vec<[f64; 2]> {
        self.positions.iter().map(|p| p[t]).collect()
    }

    /// `(min, max)` corners of the bounding box of all points.
    pub fn bounds(&self) -> Option<([f64; 2], [f64; 2])> {
        let mut pts = self.positions.iter().flatten();
        let first = *pts.next()?;
        Some(pts.fold((first, first), |(lo, hi), p| {
            ([lo[0].min(p[0]), lo[1].min(p[1])], [hi[0].max(p[0]), hi[1].max(p[1])])
        }))
    }

    /// Similarity map that fits the bounding box into `[0, side]²`: scale by
    /// `min(1, side / extent)` then centre. Traces that already fit are only
    /// translated.
    pub fn zoom_to_area(&mut self, side: f64) {
        let Some((lo, hi)) = self.bounds() else { return };
        let extent = (hi[0] - lo[0]).max(hi[1] - lo[1]);
        let scale = if extent > side { side / extent } else { 1.0 };
        let mid = [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])];
        let c = 0.5 * side;
        for p in self.positions.iter_mut().flatten() {
            *p = [c + scale * (p[0] - mid[0]), c + scale * (p[1] - mid[1])];
        }
    }

    /// Keep only the first `n` users.
    pub fn take_users(mut self, n: usize) -> Result<Self> {
        if n > self.num_users() {
            return Err(Error::Trace(format!(
                "need {n} users, traces have {}",
                self.num_users()
            )));
        }
        self.positions.truncate(n);
        Ok(self)
    }
}

/// Random-waypoint mobility parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaypointParams {
    pub side: f64,
    pub min_speed: f64,
    pub max_speed: f64,
    /// Largest heading change per slot (radians).
    pub max_turn: f64,
    pub slot_duration_s: f64,
}

impl WaypointParams {
    pub fn from_config(cfg: &crate::SimConfig) -> Self {
        Self {
            side: cfg.area_side_m,
            min_speed: cfg.trace_min_speed,
            max_speed: cfg.trace_max_speed,
            max_turn: cfg.trace_max_turn_rad,
            slot_duration_s: cfg.slot_duration_s,
        }
    }
}

fn wrap_angle(a: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    let r = a.rem_euclid(tau);
    if r > std::f64::consts::PI {
        r - tau
    } else {
        r
    }
}

/// Each user walks towards a uniformly drawn waypoint at a speed drawn per
/// leg, turning by at most `max_turn` per slot; on arrival a new waypoint
/// and speed are drawn.
pub fn synth_traces<R: Rng + ?Sized>(users: usize, slots: usize, params: &WaypointParams, rng: &mut R) -> TraceSet {
    let side = params.side;
    let lo_speed = params.min_speed.min(params.max_speed);
    let hi_speed = params.max_speed;
    let draw_speed = |rng: &mut R| {
        if hi_speed > lo_speed {
            rng.random_range(lo_speed..hi_speed)
        } else {
            hi_speed
        }
    };
    let mut positions = Vec::with_capacity(users);
    for _ in 0..users {
        let mut p = [rng.random::<f64>() * side, rng.random::<f64>() * side];
        let mut heading = rng.random::<f64>() * std::f64::consts::TAU;
        let mut target = [rng.random::<f64>() * side, rng.random::<f64>() * side];
        let mut speed = draw_speed(rng);
        let mut series = Vec::with_capacity(slots);
        for _ in 0..slots {
            series.push(p);
            let step = speed * params.slot_duration_s;
            let to = [target[0] - p[0], target[1] - p[1]];
            let dist = to[0].hypot(to[1]);
            if dist <= step.max(1e-9) {
                p = target;
                target = [rng.random::<f64>() * side, rng.random::<f64>() * side];
                speed = draw_speed(rng);
                continue;
            }
            let want = to[1].atan2(to[0]);
            let turn = wrap_angle(want - heading).clamp(-params.max_turn, params.max_turn);
            heading = wrap_angle(heading + turn);
            p = [
                (p[0] + step * heading.cos()).clamp(0.0, side),
                (p[1] + step * heading.sin()).clamp(0.0, side),
            ];
        }
        positions.push(series);
    }
    TraceSet {
        positions,
        slot_duration_s: params.slot_duration_s,
        source: TraceSource::Synthetic,
    }
}

#[derive(Debug, Deserialize)]
struct TraceRow {
    user_id: usize,
    slot: usize,
    x_m: f64,
    y_m: f64,
}

/// Parse `user_id,slot,x_m,y_m` rows. User ids must be `0..N` or `1..N`,
/// each user needs every slot from 1 exactly once, in increasing order.
pub fn parse_traces<R: Read>(reader: R, slot_duration_s: f64) -> Result<TraceSet> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut rows: Vec<TraceRow> = Vec::new();
    for (line, rec) in rdr.deserialize().enumerate() {
        let row: TraceRow = rec.map_err(|e| Error::Trace(format!("row {}: {e}", line + 2)))?;
        if !row.x_m.is_finite() || !row.y_m.is_finite() {
            return Err(Error::Trace(format!("row {}: non-finite coordinate", line + 2)));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Ok(TraceSet {
            positions: Vec::new(),
            slot_duration_s,
            source: TraceSource::Ingested,
        });
    }
    let min_id = rows.iter().map(|r| r.user_id).min().unwrap_or(0);
    let max_id = rows.iter().map(|r| r.user_id).max().unwrap_or(0);
    let n = max_id - min_id + 1;
    let mut positions: Vec<Vec<[f64; 2]>> = vec![Vec::new(); n];
    for r in &rows {
        let series = &mut positions[r.user_id - min_id];
        if r.slot != series.len() + 1 {
            return Err(Error::Trace(format!(
                "user {}: slot {} out of order (expected {})",
                r.user_id,
                r.slot,
                series.len() + 1
            )));
        }
        series.push([r.x_m, r.y_m]);
    }
    let len = positions[0].len();
    if let Some((i, s)) = positions
        .iter()
        .enumerate()
        .find(|(_, s)| s.len() != len || s.is_empty())
    {
        return Err(Error::Trace(format!(
            "user {} has {} slots, expected {len}",
            i + min_id,
            s.len()
        )));
    }
    Ok(TraceSet {
        positions,
        slot_duration_s,
        source: TraceSource::Ingested,
    })
}

/// Read a trace CSV and zoom it into `[0, side]²`.
pub fn ingest_traces(path: &Path, side: f64, slot_duration_s: f64) -> Result<TraceSet> {
    let file = std::fs::File::open(path)?;
    let mut set = parse_traces(file, slot_duration_s)?;
    set.zoom_to_area(side);
    Ok(set)
}

/// Write traces in the ingest schema (1-based slots, 0-based user ids).
pub fn write_traces<W: std::io::Write>(set: &TraceSet, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["user_id", "slot", "x_m", "y_m"])?;
    for (i, series) in set.positions.iter().enumerate() {
        for (t, p) in series.iter().enumerate() {
            w.write_record(&[i.to_string(), (t + 1).to_string(), p[0].to_string(), p[1].to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}
