//! Line-oriented text format for pulse sequences (`.sps`).
//!
//! ```text
//! # Hahn echo
//! pulse mw 1-2 pi/2 phase=0deg dur=700ns
//! delay 40us
//! pulse mw 1-2 pi phase=0deg dur=1400ns composite=bb1 err=0.05
//! repeat 3 {
//!     pulse rf 1-3 pi phase=90deg dur=20us offset=2kHz
//!     delay 1ms
//! }
//! detect 1-2 window=10us
//! ```
//!
//! Numbers with units are scaled textually (the unit shifts the decimal
//! exponent before conversion), so every value printed by [`serialize`]
//! parses back to the identical `f64`.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::pulse::{CompositeScheme, Pulse};
use crate::sequence::{Detect, Event, Sequence};
use crate::spin::{Channel, Transition};

/// Location of a diagnostic: 1-based line and character columns, end inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceSpan {
    pub line: usize,
    pub start: usize,
    pub end: usize,
}

impl SourceSpan {
    pub fn new(line: usize, start: usize, end: usize) -> Self {
        let start = start.max(1);
        Self { line: line.max(1), start, end: end.max(start) }
    }
}

impl fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}-{}", self.line, self.start, self.end)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DslErrorKind {
    /// Malformed text.
    Syntax,
    /// Well-formed text describing an invalid sequence.
    Semantic,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error, Serialize, Deserialize)]
#[error("{span}: {} error: {message} (at `{token}`)", match kind { DslErrorKind::Syntax => "syntax", DslErrorKind::Semantic => "semantic" })]
pub struct DslError {
    pub kind: DslErrorKind,
    pub span: SourceSpan,
    pub token: String,
    pub message: String,
}

impl DslError {
    fn syntax(tok: &Token, message: impl Into<String>) -> Self {
        Self { kind: DslErrorKind::Syntax, span: tok.span, token: tok.text.clone(), message: message.into() }
    }

    fn semantic(tok: &Token, message: impl Into<String>) -> Self {
        Self { kind: DslErrorKind::Semantic, span: tok.span, token: tok.text.clone(), message: message.into() }
    }

    pub fn is_syntax(&self) -> bool {
        self.kind == DslErrorKind::Syntax
    }
}

/// Upper bound on the number of events after expanding `repeat` blocks.
pub const MAX_EVENTS: usize = 10_000_000;

#[derive(Debug, Clone)]
struct Token {
    text: String,
    span: SourceSpan,
}

fn tokenize(line_no: usize, line: &str) -> Vec<Token> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut start = 0;
    let flush = |cur: &mut String, start: usize, col: usize, out: &mut Vec<Token>| {
        if !cur.is_empty() {
            out.push(Token { text: std::mem::take(cur), span: SourceSpan::new(line_no, start, col - 1) });
        }
    };
    for (i, ch) in line.chars().enumerate() {
        let col = i + 1;
        if ch == '#' {
            flush(&mut cur, start, col, &mut out);
            return out;
        }
        if ch.is_whitespace() {
            flush(&mut cur, start, col, &mut out);
        } else if matches!(ch, '=' | '{' | '}') {
            flush(&mut cur, start, col, &mut out);
            out.push(Token { text: ch.to_string(), span: SourceSpan::new(line_no, col, col) });
        } else {
            if cur.is_empty() {
                start = col;
            }
            cur.push(ch);
        }
    }
    let end = line.chars().count() + 1;
    flush(&mut cur, start, end, &mut out);
    out
}

/// Split `<number><unit>` into a validated decimal literal and the unit.
fn split_number(s: &str) -> Option<(&str, &str)> {
    let b = s.as_bytes();
    let mut i = 0;
    if i < b.len() && (b[i] == b'+' || b[i] == b'-') {
        i += 1;
    }
    let d0 = i;
    while i < b.len() && b[i].is_ascii_digit() {
        i += 1;
    }
    if i == d0 {
        return None;
    }
    if i < b.len() && b[i] == b'.' {
        i += 1;
        let f0 = i;
        while i < b.len() && b[i].is_ascii_digit() {
            i += 1;
        }
        if i == f0 {
            return None;
        }
    }
    if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
        let mut j = i + 1;
        if j < b.len() && (b[j] == b'+' || b[j] == b'-') {
            j += 1;
        }
        let e0 = j;
        while j < b.len() && b[j].is_ascii_digit() {
            j += 1;
        }
        if j > e0 {
            i = j;
        }
    }
    Some((&s[..i], &s[i..]))
}

/// Value of a decimal literal times 10^shift, correctly rounded.
fn scaled(num: &str, shift: i64) -> Option<f64> {
    let (mant, exp) = match num.find(['e', 'E']) {
        Some(k) => (&num[..k], num[k + 1..].parse::<i64>().ok()?),
        None => (num, 0),
    };
    let e = exp.checked_add(shift)?;
    format!("{mant}e{e}").parse::<f64>().ok()
}

fn number(tok: &Token, text: &str, units: &[(&str, i64)], what: &str) -> Result<f64, DslError> {
    let (num, unit) = split_number(text).ok_or_else(|| DslError::syntax(tok, format!("expected a number for {what}")))?;
    let names: Vec<&str> = units.iter().map(|u| u.0).collect();
    let shift = units
        .iter()
        .find(|u| u.0 == unit)
        .map(|u| u.1)
        .ok_or_else(|| DslError::syntax(tok, format!("{what} needs a unit ({})", names.join("|"))))?;
    let v = scaled(num, shift).ok_or_else(|| DslError::syntax(tok, "exponent out of range"))?;
    if !v.is_finite() {
        return Err(DslError::semantic(tok, format!("{what} is out of range")));
    }
    Ok(v)
}

const TIME_UNITS: [(&str, i64); 4] = [("ns", -9), ("us", -6), ("ms", -3), ("s", 0)];
const DUR_UNITS: [(&str, i64); 3] = [("ns", -9), ("us", -6), ("ms", -3)];
const WINDOW_UNITS: [(&str, i64); 2] = [("us", -6), ("ms", -3)];
const FREQ_UNITS: [(&str, i64); 2] = [("kHz", 3), ("MHz", 6)];

fn deg_to_rad(d: f64) -> f64 {
    d * (PI / 180.0)
}

fn phase_value(tok: &Token, text: &str) -> Result<f64, DslError> {
    let (num, unit) = split_number(text).ok_or_else(|| DslError::syntax(tok, "expected a phase"))?;
    let v = scaled(num, 0).ok_or_else(|| DslError::syntax(tok, "exponent out of range"))?;
    let r = match unit {
        "deg" => deg_to_rad(v),
        "rad" => v,
        "" if v == 0.0 => v,
        _ => return Err(DslError::syntax(tok, "phase needs a unit (deg|rad)")),
    };
    if !r.is_finite() {
        return Err(DslError::semantic(tok, "phase is out of range"));
    }
    Ok(r)
}

fn angle_value(tok: &Token) -> Result<f64, DslError> {
    match tok.text.as_str() {
        "pi" => Ok(PI),
        "pi/2" => Ok(FRAC_PI_2),
        t => {
            let (num, unit) = split_number(t).ok_or_else(|| DslError::syntax(tok, "expected an angle (pi, pi/2 or <x>rad)"))?;
            if unit != "rad" {
                return Err(DslError::syntax(tok, "angle needs `rad` or a symbolic value"));
            }
            let v = scaled(num, 0).ok_or_else(|| DslError::syntax(tok, "exponent out of range"))?;
            if !v.is_finite() {
                return Err(DslError::semantic(tok, "angle is out of range"));
            }
            Ok(v)
        }
    }
}

fn levels(tok: &Token) -> Result<(u8, u8), DslError> {
    let bad = || DslError::syntax(tok, "expected levels as i-j");
    let (a, b) = tok.text.split_once('-').ok_or_else(bad)?;
    if a.is_empty() || b.is_empty() || !a.bytes().all(|c| c.is_ascii_digit()) || !b.bytes().all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let parse = |s: &str| s.parse::<u8>().ok().filter(|v| (1..=4).contains(v));
    match (parse(a), parse(b)) {
        (Some(a), Some(b)) if a != b => Ok((a, b)),
        _ => Err(DslError::semantic(tok, "levels must be two distinct values in 1..4")),
    }
}

struct Options<'a> {
    toks: &'a [Token],
    pos: usize,
}

impl<'a> Options<'a> {
    /// Next `key = value` pair.
    fn next(&mut self) -> Option<Result<(&'a Token, &'a Token), DslError>> {
        let key = self.toks.get(self.pos)?;
        let eq = match self.toks.get(self.pos + 1) {
            Some(t) if t.text == "=" => t,
            Some(t) => return Some(Err(DslError::syntax(t, format!("expected `=` after `{}`", key.text)))),
            None => return Some(Err(DslError::syntax(key, "expected key=value"))),
        };
        let val = match self.toks.get(self.pos + 2) {
            Some(t) if !matches!(t.text.as_str(), "=" | "{" | "}") => t,
            Some(t) => return Some(Err(DslError::syntax(t, "expected a value"))),
            None => return Some(Err(DslError::syntax(eq, "expected a value after `=`"))),
        };
        self.pos += 3;
        Some(Ok((key, val)))
    }
}

fn parse_pulse(toks: &[Token]) -> Result<Pulse, DslError> {
    let kw = &toks[0];
    let ch_tok = toks.get(1).ok_or_else(|| DslError::syntax(kw, "expected channel (mw|rf)"))?;
    let channel = match ch_tok.text.as_str() {
        "mw" => Channel::Mw,
        "rf" => Channel::Rf,
        _ => return Err(DslError::syntax(ch_tok, "expected channel (mw|rf)")),
    };
    let lv_tok = toks.get(2).ok_or_else(|| DslError::syntax(ch_tok, "expected levels i-j"))?;
    let (a, b) = levels(lv_tok)?;
    let transition = Transition::new(channel, a, b).map_err(|e| DslError::semantic(lv_tok, e.to_string()))?;
    let ang_tok = toks.get(3).ok_or_else(|| DslError::syntax(lv_tok, "expected an angle"))?;
    let angle = angle_value(ang_tok)?;

    let mut opts = Options { toks, pos: 4 };
    let (mut phase, mut dur, mut offset, mut composite, mut err) = (None, None, None, None, None);
    while let Some(kv) = opts.next() {
        let (k, v) = kv?;
        let slot_taken = match k.text.as_str() {
            "phase" => phase.replace(phase_value(v, &v.text)?).is_some(),
            "dur" => {
                let d = number(v, &v.text, &DUR_UNITS, "duration")?;
                if d < 0.0 {
                    return Err(DslError::semantic(v, "negative duration"));
                }
                dur.replace(d).is_some()
            }
            "offset" => offset.replace(number(v, &v.text, &FREQ_UNITS, "offset")?).is_some(),
            "composite" => {
                if v.text != "bb1" {
                    return Err(DslError::syntax(v, "unknown composite scheme (bb1)"));
                }
                composite.replace(CompositeScheme::Bb1).is_some()
            }
            "err" => {
                let (num, unit) = split_number(&v.text).ok_or_else(|| DslError::syntax(v, "expected a number"))?;
                if !unit.is_empty() {
                    return Err(DslError::syntax(v, "err takes a bare fraction"));
                }
                let e = scaled(num, 0).ok_or_else(|| DslError::syntax(v, "exponent out of range"))?;
                err.replace(e).is_some()
            }
            _ => return Err(DslError::syntax(k, "unknown pulse option")),
        };
        if slot_taken {
            return Err(DslError::syntax(k, "option given twice"));
        }
    }
    let phase = phase.ok_or_else(|| DslError::syntax(toks.last().unwrap_or(kw), "pulse needs phase=<value><deg|rad>"))?;
    let mut p = Pulse::new(transition, angle, phase).with_duration(dur.unwrap_or(0.0)).with_offset(offset.unwrap_or(0.0));
    if let Some(c) = composite {
        p = p.with_composite(c);
    }
    if let Some(e) = err {
        p = p.with_angle_error(e);
    }
    p.validate().map_err(|e| DslError::semantic(kw, e.to_string()))?;
    Ok(p)
}

fn parse_delay(toks: &[Token]) -> Result<f64, DslError> {
    let v = toks.get(1).ok_or_else(|| DslError::syntax(&toks[0], "expected a duration"))?;
    if let Some(extra) = toks.get(2) {
        return Err(DslError::syntax(extra, "unexpected token"));
    }
    let d = number(v, &v.text, &TIME_UNITS, "delay")?;
    if d < 0.0 {
        return Err(DslError::semantic(v, "negative duration"));
    }
    Ok(d)
}

fn parse_detect(toks: &[Token]) -> Result<Detect, DslError> {
    let lv = toks.get(1).ok_or_else(|| DslError::syntax(&toks[0], "expected levels i-j"))?;
    let (a, b) = levels(lv)?;
    let transition = Transition::from_levels(a, b).map_err(|e| DslError::semantic(lv, e.to_string()))?;
    if !transition.is_drivable() {
        return Err(DslError::semantic(lv, format!("cannot detect on {transition}")));
    }
    let mut opts = Options { toks, pos: 2 };
    let mut window = None;
    while let Some(kv) = opts.next() {
        let (k, v) = kv?;
        if k.text != "window" {
            return Err(DslError::syntax(k, "unknown detect option"));
        }
        if window.is_some() {
            return Err(DslError::syntax(k, "option given twice"));
        }
        let w = number(v, &v.text, &WINDOW_UNITS, "window")?;
        if !(w > 0.0) {
            return Err(DslError::semantic(v, "window must be positive"));
        }
        window = Some(w);
    }
    let window = window.ok_or_else(|| DslError::syntax(toks.last().unwrap_or(lv), "detect needs window=<value><us|ms>"))?;
    Ok(Detect { transition, window })
}

struct Frame {
    events: Vec<Event>,
    count: usize,
    opener: Option<Token>,
}

/// Parse `.sps` text into a flat, validated sequence.
pub fn parse(text: &str) -> Result<Sequence, DslError> {
    let mut stack = vec![Frame { events: Vec::new(), count: 1, opener: None }];
    let mut total = 0usize;
    let mut last_line = 0;
    for (i, line) in text.lines().enumerate() {
        last_line = i + 1;
        let toks = tokenize(i + 1, line);
        let Some(head) = toks.first() else { continue };
        let top = stack.len() - 1;
        match head.text.as_str() {
            "pulse" => {
                let p = parse_pulse(&toks)?;
                stack[top].events.push(Event::Pulse(p));
            }
            "delay" => {
                let d = parse_delay(&toks)?;
                stack[top].events.push(Event::Delay(d));
            }
            "detect" => {
                let d = parse_detect(&toks)?;
                stack[top].events.push(Event::Detect(d));
            }
            "repeat" => {
                let n_tok = toks.get(1).ok_or_else(|| DslError::syntax(head, "expected a repeat count"))?;
                if !n_tok.text.bytes().all(|c| c.is_ascii_digit()) {
                    return Err(DslError::syntax(n_tok, "repeat count must be a non-negative integer"));
                }
                let n: usize = n_tok.text.parse().map_err(|_| DslError::semantic(n_tok, "repeat count too large"))?;
                if n == 0 {
                    return Err(DslError::semantic(n_tok, "repeat count must be at least 1"));
                }
                match toks.get(2) {
                    Some(t) if t.text == "{" => {}
                    Some(t) => return Err(DslError::syntax(t, "expected `{`")),
                    None => return Err(DslError::syntax(n_tok, "expected `{` after the repeat count")),
                }
                if let Some(extra) = toks.get(3) {
                    return Err(DslError::syntax(extra, "`{` must end the line"));
                }
                stack.push(Frame { events: Vec::new(), count: n, opener: Some(head.clone()) });
            }
            "}" => {
                if let Some(extra) = toks.get(1) {
                    return Err(DslError::syntax(extra, "`}` must stand alone"));
                }
                if stack.len() == 1 {
                    return Err(DslError::syntax(head, "unmatched `}`"));
                }
                let frame = stack.pop().expect("stack has an open block");
                let size = frame.events.len().checked_mul(frame.count);
                match size {
                    Some(s) if s <= MAX_EVENTS && total.saturating_add(s) <= MAX_EVENTS => {}
                    _ => return Err(DslError::semantic(frame.opener.as_ref().unwrap_or(head), "repeat expands beyond the event limit")),
                }
                let top = stack.last_mut().expect("outer frame");
                for _ in 0..frame.count {
                    top.events.extend_from_slice(&frame.events);
                }
                total = total.saturating_add(size.unwrap_or(0));
            }
            _ => return Err(DslError::syntax(head, "unknown statement (pulse|delay|detect|repeat)")),
        }
    }
    if stack.len() > 1 {
        let open = stack.pop().and_then(|f| f.opener);
        let tok = open.unwrap_or(Token { text: String::new(), span: SourceSpan::new(last_line, 1, 1) });
        return Err(DslError::syntax(&tok, "unclosed `repeat` block"));
    }
    let seq = Sequence::new(stack.pop().map(|f| f.events).unwrap_or_default());
    if seq.events.len() > MAX_EVENTS {
        let tok = Token { text: String::new(), span: SourceSpan::new(last_line, 1, 1) };
        return Err(DslError::semantic(&tok, "sequence exceeds the event limit"));
    }
    Ok(seq)
}

/// Shift the decimal point of an unsigned literal by `shift` places.
fn shift_decimal(mant: &str, shift: i64) -> String {
    let point = mant.find('.').unwrap_or(mant.len()) as i64;
    let digits: String = mant.chars().filter(|c| *c != '.').collect();
    let np = point + shift;
    let len = digits.len() as i64;
    let raw = if np <= 0 {
        format!("0.{}{}", "0".repeat((-np) as usize), digits)
    } else if np >= len {
        format!("{}{}", digits, "0".repeat((np - len) as usize))
    } else {
        format!("{}.{}", &digits[..np as usize], &digits[np as usize..])
    };
    let (int, frac) = raw.split_once('.').map_or((raw.as_str(), ""), |(a, b)| (a, b));
    let int = int.trim_start_matches('0');
    let int = if int.is_empty() { "0" } else { int };
    let frac = frac.trim_end_matches('0');
    if frac.is_empty() {
        int.to_string()
    } else {
        format!("{int}.{frac}")
    }
}

/// Exact decimal rendering of `x` in the unit whose exponent fits best.
fn with_unit(x: f64, units: &[(&str, i64)]) -> String {
    let sci = format!("{:e}", x.abs());
    let (mant, exp) = sci.split_once('e').expect("scientific format");
    let exp: i64 = exp.parse().expect("integer exponent");
    let (name, k) = if x == 0.0 {
        units[0]
    } else {
        units.iter().rev().find(|u| u.1 <= exp).copied().unwrap_or(units[0])
    };
    let sign = if x.is_sign_negative() && x != 0.0 { "-" } else { "" };
    format!("{sign}{}{name}", shift_decimal(mant, exp - k))
}

fn format_phase(phase: f64) -> String {
    let deg = phase.to_degrees();
    if deg.is_finite() {
        let sci = format!("{:.5e}", deg.abs());
        let (mant, exp) = sci.split_once('e').expect("scientific format");
        let exp: i64 = exp.parse().expect("integer exponent");
        let sign = if deg < 0.0 { "-" } else { "" };
        let text = format!("{sign}{}", shift_decimal(mant, exp));
        if scaled(&text, 0).map(deg_to_rad) == Some(phase) {
            return format!("{text}deg");
        }
    }
    format!("{phase:e}rad").replace("e0rad", "rad")
}

fn format_angle(angle: f64) -> String {
    if angle == PI {
        "pi".into()
    } else if angle == FRAC_PI_2 {
        "pi/2".into()
    } else {
        format!("{angle:e}rad").replace("e0rad", "rad")
    }
}

fn format_event(e: &Event) -> String {
    match e {
        Event::Pulse(p) => {
            let (a, b) = p.transition.levels();
            let mut s = format!("pulse {} {a}-{b} {} phase={}", p.transition.channel().name(), format_angle(p.angle), format_phase(p.phase));
            if p.duration != 0.0 {
                s += &format!(" dur={}", with_unit(p.duration, &DUR_UNITS));
            }
            if p.offset_hz != 0.0 {
                s += &format!(" offset={}", with_unit(p.offset_hz, &FREQ_UNITS));
            }
            if p.composite == CompositeScheme::Bb1 {
                s += " composite=bb1";
            }
            if let Some(err) = p.angle_error {
                s += &format!(" err={err}");
            }
            s
        }
        Event::Delay(d) => format!("delay {}", with_unit(*d, &TIME_UNITS)),
        Event::Detect(d) => {
            let (a, b) = d.transition.levels();
            format!("detect {a}-{b} window={}", with_unit(d.window, &WINDOW_UNITS))
        }
    }
}

/// Longest period considered when detecting repeated runs.
const MAX_PERIOD: usize = 32;

enum Block {
    Line(Event),
    Repeat(usize, Vec<Block>),
}

fn compress(events: &[Event]) -> Vec<Block> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < events.len() {
        let mut best: Option<(usize, usize)> = None;
        let mut best_saved = 0;
        for p in 1..=MAX_PERIOD.min((events.len() - i) / 2) {
            let mut c = 1;
            while i + (c + 1) * p <= events.len() && events[i + c * p..i + (c + 1) * p] == events[i..i + p] {
                c += 1;
            }
            let saved = (c - 1) * p;
            if c >= 2 && saved > best_saved {
                best_saved = saved;
                best = Some((p, c));
            }
        }
        match best {
            Some((p, c)) => {
                out.push(Block::Repeat(c, compress(&events[i..i + p])));
                i += p * c;
            }
            None => {
                out.push(Block::Line(events[i]));
                i += 1;
            }
        }
    }
    out
}

fn emit(blocks: &[Block], depth: usize, out: &mut String) {
    let pad = "    ".repeat(depth);
    for b in blocks {
        match b {
            Block::Line(e) => {
                out.push_str(&pad);
                out.push_str(&format_event(e));
                out.push('\n');
            }
            Block::Repeat(n, body) => {
                out.push_str(&format!("{pad}repeat {n} {{\n"));
                emit(body, depth + 1, out);
                out.push_str(&format!("{pad}}}\n"));
            }
        }
    }
}

/// Canonical text; runs of identical events are folded into `repeat` blocks.
pub fn serialize(seq: &Sequence) -> String {
    let mut out = String::new();
    emit(&compress(&seq.events), 0, &mut out);
    out
}
