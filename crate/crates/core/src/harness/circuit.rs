//! Circuit strings.
//!
//! ```text
//! circuit := "{}" | item*
//! item    := label | "(" item* ")" "^" count
//! label   := gate [":" qubit] ["^" count]
//! gate    := Gxp | Gxm | Gyp | Gym | Gzp | Gzm | Gpi | Gzz | Gr<degrees>
//! ```
//!
//! `Gxp`..`Gzm` are ±π/2 rotations, `Gpi` a π rotation about X, `Gzz` the
//! entangling gate, `Gr<φ>` a π/2 rotation about the equatorial axis at
//! azimuth `φ` degrees. Qubit 1 is Ca, qubit 2 is Sr. The canonical form is
//! the expanded label list separated by single spaces, `{}` when empty.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qcore::{c, pauli, Mat2c, Mat4c, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum GateLabel {
    Xp(u8),
    Xm(u8),
    Yp(u8),
    Ym(u8),
    Zp(u8),
    Zm(u8),
    Pi(u8),
    Gzz,
    /// Equatorial π/2 rotation, azimuth in millidegrees.
    Rot(u8, i32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateKind {
    Entangling,
    /// Physical single-qubit π/2 pulse.
    Physical,
    /// Physical single-qubit π pulse.
    PiPulse,
    /// Z rotation done as a phase update in software.
    SoftwareZ,
}

impl GateLabel {
    pub fn qubit(&self) -> Option<u8> {
        use GateLabel::*;
        match *self {
            Xp(q) | Xm(q) | Yp(q) | Ym(q) | Zp(q) | Zm(q) | Pi(q) | Rot(q, _) => Some(q),
            Gzz => None,
        }
    }

    pub fn kind(&self) -> GateKind {
        use GateLabel::*;
        match self {
            Gzz => GateKind::Entangling,
            Zp(_) | Zm(_) => GateKind::SoftwareZ,
            Pi(_) => GateKind::PiPulse,
            _ => GateKind::Physical,
        }
    }

    fn name(&self) -> String {
        use GateLabel::*;
        match *self {
            Xp(_) => "Gxp".into(),
            Xm(_) => "Gxm".into(),
            Yp(_) => "Gyp".into(),
            Ym(_) => "Gym".into(),
            Zp(_) => "Gzp".into(),
            Zm(_) => "Gzm".into(),
            Pi(_) => "Gpi".into(),
            Gzz => "Gzz".into(),
            Rot(_, md) => format!("Gr{}", format_millideg(md)),
        }
    }

    /// The single-qubit factor, for labels acting on one qubit.
    pub fn single_qubit_unitary(&self) -> Option<Mat2c> {
        use GateLabel::*;
        let rot = |axis: usize, angle: f64| {
            let (s, co) = (angle / 2.0).sin_cos();
            Mat2c::identity() * c(co) - pauli::single(axis) * C64::new(0.0, s)
        };
        let h = std::f64::consts::FRAC_PI_2;
        Some(match *self {
            Xp(_) => rot(1, h),
            Xm(_) => rot(1, -h),
            Yp(_) => rot(2, h),
            Ym(_) => rot(2, -h),
            Zp(_) => rot(3, h),
            Zm(_) => rot(3, -h),
            Pi(_) => rot(1, std::f64::consts::PI),
            Rot(_, md) => {
                let phi = (md as f64 / 1000.0).to_radians();
                let n = pauli::single(1) * c(phi.cos()) + pauli::single(2) * c(phi.sin());
                let (s, co) = (h / 2.0).sin_cos();
                Mat2c::identity() * c(co) - n * C64::new(0.0, s)
            }
            Gzz => return None,
        })
    }

    pub fn unitary(&self) -> Mat4c {
        match (self.single_qubit_unitary(), self.qubit()) {
            (Some(u), Some(1)) => pauli::kron2(&u, &Mat2c::identity()),
            (Some(u), _) => pauli::kron2(&Mat2c::identity(), &u),
            (None, _) => crate::gatesim::ideal_gate_unitary(),
        }
    }
}

fn format_millideg(md: i32) -> String {
    let sign = if md < 0 { "-" } else { "" };
    let a = md.unsigned_abs();
    if a % 1000 == 0 {
        format!("{sign}{}", a / 1000)
    } else {
        let frac = format!("{:03}", a % 1000);
        format!("{sign}{}.{}", a / 1000, frac.trim_end_matches('0'))
    }
}

impl fmt::Display for GateLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.qubit() {
            Some(q) => write!(f, "{}:{q}", self.name()),
            None => write!(f, "{}", self.name()),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Circuit(pub Vec<GateLabel>);

impl Circuit {
    pub fn new(ops: Vec<GateLabel>) -> Self {
        Self(ops)
    }

    pub fn ops(&self) -> &[GateLabel] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn then(mut self, other: &Circuit) -> Self {
        self.0.extend_from_slice(&other.0);
        self
    }

    pub fn repeat(&self, n: usize) -> Self {
        Self(self.0.iter().copied().cycle().take(self.0.len() * n).collect())
    }

    /// Ideal unitary, first label applied first.
    pub fn unitary(&self) -> Mat4c {
        self.0.iter().fold(Mat4c::identity(), |acc, g| g.unitary() * acc)
    }
}

impl fmt::Display for Circuit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("{}");
        }
        for (i, g) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{g}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("syntax error at byte {offset}: expected {}, found {found:?}", expected.join(" | "))]
pub struct ParseError {
    pub offset: usize,
    pub expected: Vec<&'static str>,
    pub found: String,
}

const MAX_OPS: usize = 10_000_000;

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn bytes(&self) -> &'a [u8] {
        self.src.as_bytes()
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.bytes()[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.bytes().get(self.pos).copied()
    }

    fn error(&self, at: usize, expected: Vec<&'static str>) -> ParseError {
        let rest = &self.src[at..];
        let found = rest.split(|ch: char| ch.is_whitespace()).next().unwrap_or("");
        let found = if found.is_empty() { "end of input".to_string() } else { found.to_string() };
        ParseError { offset: at, expected, found }
    }

    fn count(&mut self) -> Result<usize, ParseError> {
        let start = self.pos;
        while self.peek().is_some_and(|b| b.is_ascii_digit()) {
            self.pos += 1;
        }
        self.src[start..self.pos].parse().map_err(|_| self.error(start, vec!["repeat count"]))
    }

    fn items(&mut self, depth: usize, out: &mut Vec<GateLabel>) -> Result<(), ParseError> {
        loop {
            self.skip_ws();
            match self.peek() {
                None => {
                    return if depth == 0 { Ok(()) } else { Err(self.error(self.pos, vec![")"])) };
                }
                Some(b')') => {
                    return if depth > 0 { Ok(()) } else { Err(self.error(self.pos, vec!["gate label", "("])) };
                }
                Some(b'(') => {
                    self.pos += 1;
                    let mut inner = Vec::new();
                    self.items(depth + 1, &mut inner)?;
                    self.pos += 1;
                    if self.peek() != Some(b'^') {
                        return Err(self.error(self.pos, vec!["^"]));
                    }
                    self.pos += 1;
                    let n = self.count()?;
                    self.push_repeated(out, &inner, n)?;
                }
                Some(_) => {
                    let start = self.pos;
                    let label = self.label()?;
                    let n = if self.peek() == Some(b'^') {
                        self.pos += 1;
                        self.count()?
                    } else {
                        1
                    };
                    self.push_repeated(out, &[label], n).map_err(|mut e| {
                        e.offset = start;
                        e
                    })?;
                }
            }
        }
    }

    fn push_repeated(&self, out: &mut Vec<GateLabel>, ops: &[GateLabel], n: usize) -> Result<(), ParseError> {
        if out.len() + ops.len().saturating_mul(n) > MAX_OPS {
            return Err(self.error(self.pos, vec!["circuit of at most 10^7 operations"]));
        }
        for _ in 0..n {
            out.extend_from_slice(ops);
        }
        Ok(())
    }

    fn label(&mut self) -> Result<GateLabel, ParseError> {
        let start = self.pos;
        while self.peek().is_some_and(|b| b.is_ascii_alphanumeric() || b == b'.' || b == b'-') {
            self.pos += 1;
        }
        let name = &self.src[start..self.pos];
        let gates = vec!["Gxp", "Gxm", "Gyp", "Gym", "Gzp", "Gzm", "Gpi", "Gzz", "Gr<degrees>"];
        if name == "Gzz" {
            return Ok(GateLabel::Gzz);
        }
        let make: Box<dyn Fn(u8) -> GateLabel> = match name {
            "Gxp" => Box::new(GateLabel::Xp),
            "Gxm" => Box::new(GateLabel::Xm),
            "Gyp" => Box::new(GateLabel::Yp),
            "Gym" => Box::new(GateLabel::Ym),
            "Gzp" => Box::new(GateLabel::Zp),
            "Gzm" => Box::new(GateLabel::Zm),
            "Gpi" => Box::new(GateLabel::Pi),
            _ => match name.strip_prefix("Gr").and_then(parse_millideg) {
                Some(md) => Box::new(move |q| GateLabel::Rot(q, md)),
                None => return Err(self.error(start, gates)),
            },
        };
        if self.peek() != Some(b':') {
            return Err(self.error(self.pos, vec![":"]));
        }
        self.pos += 1;
        match self.peek() {
            Some(q @ (b'1' | b'2')) if !self.bytes().get(self.pos + 1).is_some_and(|b| b.is_ascii_digit()) => {
                self.pos += 1;
                Ok(make(q - b'0'))
            }
            _ => Err(self.error(start, vec!["qubit 1", "qubit 2"])),
        }
    }
}

fn parse_millideg(s: &str) -> Option<i32> {
    let (neg, s) = match s.strip_prefix('-') {
        Some(r) => (true, r),
        None => (false, s),
    };
    let (int, frac) = s.split_once('.').unwrap_or((s, ""));
    if int.is_empty() || frac.len() > 3 || !int.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    if !frac.bytes().all(|b| b.is_ascii_digit()) || (s.contains('.') && frac.is_empty()) {
        return None;
    }
    let whole: i64 = int.parse().ok()?;
    let frac_val: i64 = if frac.is_empty() { 0 } else { format!("{frac:0<3}").parse().ok()? };
    let md = whole.checked_mul(1000)?.checked_add(frac_val)?;
    i32::try_from(if neg { -md } else { md }).ok()
}

pub fn parse_circuit(text: &str) -> Result<Circuit, ParseError> {
    let trimmed = text.trim();
    if trimmed == "{}" {
        return Ok(Circuit::default());
    }
    let mut p = Parser { src: text, pos: 0 };
    let mut out = Vec::new();
    p.items(0, &mut out)?;
    Ok(Circuit(out))
}

pub fn serialize_circuit(c: &Circuit) -> String {
    c.to_string()
}

impl FromStr for Circuit {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_circuit(s)
    }
}
