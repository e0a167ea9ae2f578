//! Feature-name grammar: every morphological feature has a compact name
//! such as `LT`, `dVp1`, `Kv2`, `S1`, `Lv1p2`, or `RLTLp1p3`, and the
//! parser maps names back to structured features with byte-exact error
//! positions.

use std::fmt;

use thiserror::Error;

/// A named point on the pulse: three valleys and three peaks in time order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Landmark {
    V1,
    P1,
    V2,
    P2,
    V3,
    P3,
}

impl Landmark {
    /// All landmarks in time order.
    pub const ALL: [Landmark; 6] = [
        Landmark::V1,
        Landmark::P1,
        Landmark::V2,
        Landmark::P2,
        Landmark::V3,
        Landmark::P3,
    ];

    /// Position in time order, 0 to 5.
    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&l| l == self).unwrap()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Landmark::V1 => "v1",
            Landmark::P1 => "p1",
            Landmark::V2 => "v2",
            Landmark::P2 => "p2",
            Landmark::V3 => "v3",
            Landmark::P3 => "p3",
        }
    }
}

impl fmt::Display for Landmark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A time interval on the beat: the onset transit time `LT` or the latency
/// between two landmarks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Delay {
    /// Time from the QRS reference to the pulse onset valley.
    Lt,
    /// Time from the first landmark to the second.
    Latency(Landmark, Landmark),
}

/// Number of distinct delays: `LT` plus the 15 unordered landmark pairs.
pub const DELAY_COUNT: usize = 16;

impl Delay {
    /// All delays in canonical order: `LT` first, then landmark pairs
    /// ordered by their position in time order.
    pub fn all() -> Vec<Delay> {
        let mut out = vec![Delay::Lt];
        for i in 0..Landmark::ALL.len() {
            for j in i + 1..Landmark::ALL.len() {
                out.push(Delay::Latency(Landmark::ALL[i], Landmark::ALL[j]));
            }
        }
        out
    }

    /// Position in the canonical delay order, 0 to 15.
    pub fn index(self) -> usize {
        match self {
            Delay::Lt => 0,
            Delay::Latency(a, b) => {
                let (i, j) = (a.index(), b.index());
                debug_assert!(i < j);
                // Pairs before row i, plus offset within row i, plus LT.
                1 + i * (11 - i) / 2 + (j - i - 1)
            }
        }
    }

    /// Landmarks this delay touches.
    pub fn endpoints(self) -> Vec<Landmark> {
        match self {
            Delay::Lt => vec![Landmark::V1],
            Delay::Latency(a, b) => vec![a, b],
        }
    }
}

impl fmt::Display for Delay {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Delay::Lt => f.write_str("LT"),
            Delay::Latency(a, b) => write!(f, "L{a}{b}"),
        }
    }
}

/// One pulse-morphology feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Feature {
    /// `LT` or `L<a><b>`: a delay used directly as a time feature.
    Delay(Delay),
    /// `dV<lm>`: landmark amplitude above the pulse minimum.
    Amplitude(Landmark),
    /// `K<lm>`: curvature magnitude at the landmark.
    Curvature(Landmark),
    /// `S<k>`: rising slope into peak k, k in 1..=3.
    Slope(u8),
    /// `MAC`: mean absolute curvature over the whole pulse.
    Mac,
    /// `R<d1><d2>`: ratio of two delays.
    Ratio(Delay, Delay),
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Feature::Delay(d) => write!(f, "{d}"),
            Feature::Amplitude(l) => write!(f, "dV{l}"),
            Feature::Curvature(l) => write!(f, "K{l}"),
            Feature::Slope(k) => write!(f, "S{k}"),
            Feature::Mac => f.write_str("MAC"),
            Feature::Ratio(a, b) => write!(f, "R{a}{b}"),
        }
    }
}

/// Parse failure, pointing at the first offending byte of the input.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("parse error at byte {offset}: {message}")]
pub struct ParseError {
    pub offset: usize,
    pub message: String,
}

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err<T>(&self, message: &str) -> Result<T, ParseError> {
        Err(ParseError {
            offset: self.pos,
            message: message.into(),
        })
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn eat(&mut self, b: u8) -> bool {
        if self.peek() == Some(b) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn landmark(&mut self) -> Result<Landmark, ParseError> {
        let kind = match self.peek() {
            Some(b'v') => b'v',
            Some(b'p') => b'p',
            _ => return self.err("expected landmark"),
        };
        let digit = match self.bytes.get(self.pos + 1) {
            Some(d @ b'1'..=b'3') => d - b'0',
            _ => {
                self.pos += 1;
                return self.err("expected landmark digit 1-3");
            }
        };
        self.pos += 2;
        Ok(match (kind, digit) {
            (b'v', 1) => Landmark::V1,
            (b'v', 2) => Landmark::V2,
            (b'v', 3) => Landmark::V3,
            (b'p', 1) => Landmark::P1,
            (b'p', 2) => Landmark::P2,
            _ => Landmark::P3,
        })
    }

    fn delay(&mut self) -> Result<Delay, ParseError> {
        if !self.eat(b'L') {
            return self.err("expected delay starting with 'L'");
        }
        if self.eat(b'T') {
            return Ok(Delay::Lt);
        }
        let a = self.landmark()?;
        let b = self.landmark()?;
        if a.index() >= b.index() {
            self.pos -= 4;
            return self.err("latency landmarks must be in time order");
        }
        Ok(Delay::Latency(a, b))
    }

    fn feature(&mut self) -> Result<Feature, ParseError> {
        match self.peek() {
            Some(b'M') => {
                if self.bytes[self.pos..].starts_with(b"MAC") {
                    self.pos += 3;
                    Ok(Feature::Mac)
                } else {
                    self.err("expected 'MAC'")
                }
            }
            Some(b'd') => {
                if self.bytes[self.pos..].starts_with(b"dV") {
                    self.pos += 2;
                    Ok(Feature::Amplitude(self.landmark()?))
                } else {
                    self.err("expected 'dV'")
                }
            }
            Some(b'K') => {
                self.pos += 1;
                Ok(Feature::Curvature(self.landmark()?))
            }
            Some(b'S') => {
                self.pos += 1;
                match self.peek() {
                    Some(d @ b'1'..=b'3') => {
                        self.pos += 1;
                        Ok(Feature::Slope(d - b'0'))
                    }
                    _ => self.err("expected slope digit 1-3"),
                }
            }
            Some(b'R') => {
                self.pos += 1;
                let a = self.delay()?;
                let b = self.delay()?;
                Ok(Feature::Ratio(a, b))
            }
            Some(b'L') => Ok(Feature::Delay(self.delay()?)),
            _ => self.err("expected feature"),
        }
    }
}

/// Parse one feature name; the whole input must be consumed.
pub fn parse_feature(input: &str) -> Result<Feature, ParseError> {
    let mut p = Parser {
        bytes: input.as_bytes(),
        pos: 0,
    };
    let feature = p.feature()?;
    if p.pos != p.bytes.len() {
        return p.err("trailing input");
    }
    Ok(feature)
}
