//! Placement trigger: turns a timestamped IMU stream into capture events.
//!
//! A sample is *sub-threshold* when every axis of both the linear
//! acceleration and the angular rate is strictly below its threshold in
//! absolute value. `debounce_n` consecutive sub-threshold samples move the
//! device from moving (S2) to stationary (S1) and fire exactly one capture.
//! A stationary episode longer than `tt` seconds backgrounds the sensing
//! program; the next movement brings it back to the foreground.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write as _;

use crate::rng::{self, Rng};
use crate::{Error, Result};

/// One IMU reading. `la` in m/s², `aa` in °/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    pub t: f64,
    pub la: [f64; 3],
    pub aa: [f64; 3],
}

impl ImuSample {
    pub fn new(t: f64, la: [f64; 3], aa: [f64; 3]) -> Self {
        Self { t, la, aa }
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite() && self.la.iter().chain(&self.aa).all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriggerConfig {
    pub la_thresh: [f64; 3],
    pub aa_thresh: [f64; 3],
    /// Stationary duration (s) after which the program backgrounds itself.
    pub tt: f64,
    /// Consecutive sub-threshold samples needed to enter the stationary state.
    pub debounce_n: usize,
}

impl Default for TriggerConfig {
    fn default() -> Self {
        Self {
            la_thresh: [0.04; 3],
            aa_thresh: [0.02; 3],
            tt: 30.0,
            debounce_n: 10,
        }
    }
}

impl TriggerConfig {
    pub fn validate(&self) -> Result<()> {
        let thresholds_ok = self
            .la_thresh
            .iter()
            .chain(&self.aa_thresh)
            .all(|v| v.is_finite() && *v > 0.0);
        if !thresholds_ok {
            return Err(Error::InvalidArgument("trigger thresholds must be finite and > 0".into()));
        }
        if !(self.tt.is_finite() && self.tt > 0.0) {
            return Err(Error::InvalidArgument("tt must be > 0".into()));
        }
        if self.debounce_n == 0 {
            return Err(Error::InvalidArgument("debounce_n must be >= 1".into()));
        }
        Ok(())
    }

    /// The stationarity predicate, strict on every axis.
    pub fn is_sub_threshold(&self, s: &ImuSample) -> bool {
        (0..3).all(|i| libm::fabs(s.la[i]) < self.la_thresh[i] && libm::fabs(s.aa[i]) < self.aa_thresh[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// S1
    Stationary,
    /// S2
    Moving,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlacementState {
    pub mode: Mode,
    /// Time the current mode was entered.
    pub since: f64,
    pub backgrounded: bool,
    /// Consecutive sub-threshold samples seen while moving.
    pub quiet_run: usize,
    last_t: Option<f64>,
}

impl Default for PlacementState {
    fn default() -> Self {
        Self {
            mode: Mode::Moving,
            since: f64::NEG_INFINITY,
            backgrounded: false,
            quiet_run: 0,
            last_t: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    Capture,
    BackgroundEnter,
    ForegroundResume,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Capture => "capture",
            EventKind::BackgroundEnter => "background_enter",
            EventKind::ForegroundResume => "foreground_resume",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "capture" => Some(EventKind::Capture),
            "background_enter" => Some(EventKind::BackgroundEnter),
            "foreground_resume" => Some(EventKind::ForegroundResume),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriggerEvent {
    pub t: f64,
    pub kind: EventKind,
}

impl PlacementState {
    /// Back to moving, not backgrounded. Stream ordering is forgotten too, so
    /// a fresh stream may start at any timestamp.
    pub fn reset(&mut self) {
        *self = Self::default();
    }

    /// Feeds one sample. Rejected samples leave the state untouched.
    pub fn ingest(&mut self, sample: &ImuSample, cfg: &TriggerConfig) -> Result<Option<TriggerEvent>> {
        if !sample.is_finite() {
            return Err(Error::NonFinite("imu sample"));
        }
        if let Some(prev) = self.last_t {
            if sample.t <= prev {
                return Err(Error::StreamOrder { previous: prev, got: sample.t });
            }
        }
        self.last_t = Some(sample.t);
        let quiet = cfg.is_sub_threshold(sample);
        let event = |kind| Some(TriggerEvent { t: sample.t, kind });

        match (self.mode, quiet) {
            (Mode::Moving, true) => {
                self.quiet_run += 1;
                if self.quiet_run >= cfg.debounce_n {
                    self.mode = Mode::Stationary;
                    self.since = sample.t;
                    self.quiet_run = 0;
                    return Ok(event(EventKind::Capture));
                }
                Ok(None)
            }
            (Mode::Moving, false) => {
                self.quiet_run = 0;
                Ok(None)
            }
            (Mode::Stationary, true) => {
                if !self.backgrounded && sample.t - self.since >= cfg.tt {
                    self.backgrounded = true;
                    return Ok(event(EventKind::BackgroundEnter));
                }
                Ok(None)
            }
            (Mode::Stationary, false) => {
                self.mode = Mode::Moving;
                self.since = sample.t;
                self.quiet_run = 0;
                if self.backgrounded {
                    self.backgrounded = false;
                    return Ok(event(EventKind::ForegroundResume));
                }
                Ok(None)
            }
        }
    }
}

/// Runs a whole trace through a fresh state machine.
pub fn run_trace(samples: &[ImuSample], cfg: &TriggerConfig) -> Result<Vec<TriggerEvent>> {
    cfg.validate()?;
    let mut state = PlacementState::default();
    let mut events = Vec::new();
    for s in samples {
        if let Some(e) = state.ingest(s, cfg)? {
            events.push(e);
        }
    }
    Ok(events)
}

/// Scripted motion for synthetic traces: alternating handling bursts and
/// resting periods.
#[derive(Debug, Clone, PartialEq)]
pub struct PlacementScript {
    pub rate_hz: f64,
    /// (motion seconds, rest seconds) for each set-down.
    pub segments: Vec<(f64, f64)>,
    /// Trailing motion after the last rest.
    pub tail_motion: f64,
    pub seed: u64,
}

impl PlacementScript {
    /// Ten minutes with `placements` evenly spread set-downs.
    pub fn ten_minutes(placements: usize, rate_hz: f64, seed: u64) -> Self {
        let total = 600.0;
        let per = total / placements.max(1) as f64;
        let segments = (0..placements).map(|_| (per * 0.3, per * 0.7)).collect();
        Self { rate_hz, segments, tail_motion: 0.0, seed }
    }

    pub fn generate(&self) -> Vec<ImuSample> {
        let mut rng = rng::rng(self.seed);
        let dt = 1.0 / self.rate_hz;
        let mut out = Vec::new();
        let mut t = 0.0;
        let mut emit = |dur: f64, moving: bool, t: &mut f64, rng: &mut rng::ChaCha8Rng| {
            let n = libm::round(dur * self.rate_hz) as usize;
            for _ in 0..n {
                let (la_sd, aa_sd) = if moving { (0.8, 0.6) } else { (0.006, 0.003) };
                let mut la = [0.0; 3];
                let mut aa = [0.0; 3];
                for i in 0..3 {
                    la[i] = rng::normal(rng) * la_sd;
                    aa[i] = rng::normal(rng) * aa_sd;
                }
                if moving {
                    // Handling always exceeds the thresholds on at least one axis.
                    la[rng.gen_range(0..3)] += if rng.gen::<bool>() { 0.5 } else { -0.5 };
                } else {
                    for v in la.iter_mut() {
                        *v = v.clamp(-0.03, 0.03);
                    }
                    for v in aa.iter_mut() {
                        *v = v.clamp(-0.015, 0.015);
                    }
                }
                out.push(ImuSample::new(*t, la, aa));
                *t += dt;
            }
        };
        for &(motion, rest) in &self.segments {
            emit(motion, true, &mut t, &mut rng);
            emit(rest, false, &mut t, &mut rng);
        }
        emit(self.tail_motion, true, &mut t, &mut rng);
        out
    }
}

/// A recorded five-placement trace (10 Hz, five set-downs of 40 s each).
pub const BUNDLED_TRACE: &str = include_str!("../data/five_placements.trace");

/// Parses a trace: one `t la_x la_y la_z aa_x aa_y aa_z` sample per line.
/// Blank lines and lines starting with `#` are ignored.
pub fn parse_trace(text: &str) -> Result<Vec<ImuSample>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut v = [0.0f64; 7];
        let mut fields = line.split_whitespace();
        for slot in v.iter_mut() {
            let f = fields
                .next()
                .ok_or_else(|| Error::Format(alloc::format!("trace line {}: expected 7 fields", n + 1)))?;
            *slot = f
                .parse()
                .map_err(|_| Error::Format(alloc::format!("trace line {}: bad number {f:?}", n + 1)))?;
        }
        if fields.next().is_some() {
            return Err(Error::Format(alloc::format!("trace line {}: expected 7 fields", n + 1)));
        }
        out.push(ImuSample::new(v[0], [v[1], v[2], v[3]], [v[4], v[5], v[6]]));
    }
    Ok(out)
}

pub fn format_trace(samples: &[ImuSample]) -> String {
    let mut s = String::new();
    for x in samples {
        let _ = writeln!(
            s,
            "{:.3} {:.6} {:.6} {:.6} {:.6} {:.6} {:.6}",
            x.t, x.la[0], x.la[1], x.la[2], x.aa[0], x.aa[1], x.aa[2]
        );
    }
    s
}

/// Event log: one `t kind` line per event.
pub fn format_events(events: &[TriggerEvent]) -> String {
    let mut s = String::new();
    for e in events {
        let _ = writeln!(s, "{:.3} {}", e.t, e.kind.as_str());
    }
    s
}
