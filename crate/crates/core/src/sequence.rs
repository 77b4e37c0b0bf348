//! Executable pulse sequences.
//!
//! A [`Sequence`] is a flat, strictly sequential list of events: each pulse,
//! delay or detection window starts when the previous one ends. Repetition
//! only exists in the text form (see [`crate::dsl`]).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pulse::Pulse;
use crate::spin::Transition;

/// Acquisition of the complex signal of a transition over a window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detect {
    pub transition: Transition,
    /// Window length (s).
    pub window: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Event {
    Pulse(Pulse),
    Delay(f64),
    Detect(Detect),
}

impl Event {
    /// Wall-clock length of the event.
    pub fn duration(&self) -> f64 {
        match self {
            Event::Pulse(p) => p.total_duration(),
            Event::Delay(d) => *d,
            Event::Detect(d) => d.window,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Sequence {
    pub events: Vec<Event>,
}

impl Sequence {
    pub fn new(events: Vec<Event>) -> Self {
        Self { events }
    }

    pub fn push(&mut self, e: Event) {
        self.events.push(e);
    }

    pub fn extend(&mut self, other: &Sequence) {
        self.events.extend_from_slice(&other.events);
    }

    pub fn duration(&self) -> f64 {
        self.events.iter().map(Event::duration).sum()
    }

    pub fn pulses(&self) -> impl Iterator<Item = &Pulse> {
        self.events.iter().filter_map(|e| match e {
            Event::Pulse(p) => Some(p),
            _ => None,
        })
    }

    pub fn pulse_count(&self) -> usize {
        self.pulses().count()
    }

    pub fn detects(&self) -> impl Iterator<Item = &Detect> {
        self.events.iter().filter_map(|e| match e {
            Event::Detect(d) => Some(d),
            _ => None,
        })
    }

    /// Start time of every event.
    pub fn start_times(&self) -> Vec<f64> {
        let mut t = 0.0;
        self.events
            .iter()
            .map(|e| {
                let s = t;
                t += e.duration();
                s
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        for e in &self.events {
            match e {
                Event::Pulse(p) => p.validate()?,
                Event::Delay(d) => {
                    if !(*d >= 0.0) || !d.is_finite() {
                        return Err(Error::NegativeDuration(*d));
                    }
                }
                Event::Detect(d) => {
                    if !(d.window > 0.0) || !d.window.is_finite() {
                        return Err(Error::Window(format!("detection window {} must be positive", d.window)));
                    }
                    if !d.transition.is_drivable() {
                        return Err(Error::Window(format!("cannot detect on {}", d.transition)));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Builds a [`Sequence`] from events placed at absolute times, inserting
/// the delays between them and rejecting overlaps.
#[derive(Debug, Clone, Default)]
pub struct Timeline {
    seq: Sequence,
    now: f64,
}

/// Slack for floating-point rounding of absolute times.
const OVERLAP_TOL: f64 = 1e-15;

/// Remove subtraction noise from a gap between absolute times of magnitude
/// `scale`: round to 12 significant digits of `scale` when that moves the
/// value by no more than a few ulps of `scale`.
fn snap(x: f64, scale: f64) -> f64 {
    let exp = |v: f64| v.abs().log10().floor() as i32;
    let scale = scale.max(x);
    let prec = (11 - (exp(scale) - exp(x))).max(0) as usize;
    let r: f64 = format!("{x:.prec$e}").parse().unwrap_or(x);
    if (r - x).abs() <= 16.0 * f64::EPSILON * scale { r } else { x }
}

impl Timeline {
    pub fn new() -> Self {
        Self::default()
    }

    /// Current end of the timeline.
    pub fn now(&self) -> f64 {
        self.now
    }

    fn advance_to(&mut self, start: f64, what: &str) -> Result<()> {
        let gap = start - self.now;
        if gap < -OVERLAP_TOL * self.now.abs().max(1e-6) {
            return Err(Error::Timing(format!(
                "{what} starting at {start:e} s overlaps the previous event ending at {:e} s",
                self.now
            )));
        }
        if gap > 0.0 {
            self.seq.push(Event::Delay(snap(gap, start.abs())));
        }
        self.now = self.now.max(start);
        Ok(())
    }

    pub fn delay(&mut self, d: f64) -> Result<&mut Self> {
        if !(d >= 0.0) {
            return Err(Error::NegativeDuration(d));
        }
        let t = self.now + d;
        self.advance_to(t, "delay")?;
        Ok(self)
    }

    /// Append a pulse immediately.
    pub fn pulse(&mut self, p: Pulse) -> &mut Self {
        self.now += p.total_duration();
        self.seq.push(Event::Pulse(p));
        self
    }

    /// Place a pulse so that its midpoint falls at `center`.
    pub fn pulse_centered(&mut self, p: Pulse, center: f64) -> Result<&mut Self> {
        self.advance_to(center - p.total_duration() / 2.0, &format!("pulse on {}", p.transition))?;
        Ok(self.pulse(p))
    }

    /// Place a detection window centred on `center`.
    pub fn detect_centered(&mut self, transition: Transition, center: f64, window: f64) -> Result<&mut Self> {
        if !(window > 0.0) {
            return Err(Error::Window(format!("detection window {window} must be positive")));
        }
        self.advance_to(center - window / 2.0, "detection window")?;
        self.now += window;
        self.seq.push(Event::Detect(Detect { transition, window }));
        Ok(self)
    }

    pub fn build(self) -> Sequence {
        self.seq
    }
}
