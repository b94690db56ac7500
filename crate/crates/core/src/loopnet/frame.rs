//! Robot protocol frames.
//!
//! One frame per line, ASCII, fields separated by a single space, terminated
//! by `\n`:
//!
//! ```text
//! JUNCTION <id> <mask>        mask: 0..=7, bit0 left, bit1 forward, bit2 right
//! POLL <id>
//! PENDING <id>
//! CMD <id> <command> <conf>   command: 0..=2, conf: 0.0..=1.0, 1 to 4 decimals
//! ERR <code> <text>           text: rest of the line, non-empty
//! ```
//!
//! Integers are unsigned decimal without sign or leading zeros.

use std::fmt;

use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::mazebot::Command;

/// Probability quantized to 1e-4.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Confidence(u16);

impl Confidence {
    pub const SCALE: u16 = 10_000;

    pub fn from_units(units: u16) -> Option<Self> {
        (units <= Self::SCALE).then_some(Self(units))
    }

    /// Rounds to the nearest 1e-4, clamping into [0, 1]. NaN maps to 0.
    pub fn from_prob(p: f64) -> Self {
        if p.is_nan() {
            return Self(0);
        }
        Self((p.clamp(0.0, 1.0) * Self::SCALE as f64).round() as u16)
    }

    pub fn units(self) -> u16 {
        self.0
    }

    pub fn value(self) -> f64 {
        self.0 as f64 / Self::SCALE as f64
    }
}

impl Serialize for Confidence {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.value())
    }
}

impl fmt::Display for Confidence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let whole = self.0 / Self::SCALE;
        let frac = format!("{:04}", self.0 % Self::SCALE);
        let trimmed = frac.trim_end_matches('0');
        write!(
            f,
            "{whole}.{}",
            if trimmed.is_empty() { "0" } else { trimmed }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Frame {
    Junction {
        id: u32,
        open_mask: u8,
    },
    Poll {
        id: u32,
    },
    Pending {
        id: u32,
    },
    Cmd {
        id: u32,
        command: Command,
        confidence: Confidence,
    },
    Err {
        code: u16,
        text: String,
    },
}

impl Frame {
    /// Error frame; line breaks in `text` become spaces and empty text becomes "error".
    pub fn error(code: u16, text: impl AsRef<str>) -> Self {
        let text: String = text
            .as_ref()
            .chars()
            .map(|c| if c == '\n' || c == '\r' { ' ' } else { c })
            .collect();
        Frame::Err {
            code,
            text: if text.is_empty() {
                "error".into()
            } else {
                text
            },
        }
    }

    pub fn verb(&self) -> &'static str {
        match self {
            Frame::Junction { .. } => "JUNCTION",
            Frame::Poll { .. } => "POLL",
            Frame::Pending { .. } => "PENDING",
            Frame::Cmd { .. } => "CMD",
            Frame::Err { .. } => "ERR",
        }
    }
}

impl fmt::Display for Frame {
    /// The line without its terminator.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Frame::Junction { id, open_mask } => write!(f, "JUNCTION {id} {open_mask}"),
            Frame::Poll { id } => write!(f, "POLL {id}"),
            Frame::Pending { id } => write!(f, "PENDING {id}"),
            Frame::Cmd {
                id,
                command,
                confidence,
            } => write!(f, "CMD {id} {} {confidence}", command.index()),
            Frame::Err { code, text } => write!(f, "ERR {code} {text}"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FrameError {
    #[error("frame is not valid UTF-8")]
    NotUtf8,
    #[error("frame must end with a single newline")]
    MissingNewline,
    #[error("frame contains a control character")]
    ControlCharacter,
    #[error("empty frame")]
    Empty,
    #[error("unknown verb {0:?}")]
    UnknownVerb(String),
    #[error("{verb} takes {expected} fields, found {found}")]
    FieldCount {
        verb: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("field {field} is not a canonical unsigned integer: {text:?}")]
    BadInteger { field: &'static str, text: String },
    #[error("open-direction mask out of range: {0}")]
    MaskOutOfRange(u64),
    #[error("command out of range: {0}")]
    CommandOutOfRange(u64),
    #[error("malformed confidence {0:?}")]
    BadConfidence(String),
    #[error("confidence out of range: {0}")]
    ConfidenceOutOfRange(String),
    #[error("error frame has empty text")]
    EmptyErrorText,
}

pub fn encode_frame(frame: &Frame) -> Vec<u8> {
    format!("{frame}\n").into_bytes()
}

fn parse_uint(field: &'static str, text: &str, max: u64) -> Result<u64, FrameError> {
    let bad = || FrameError::BadInteger {
        field,
        text: text.to_string(),
    };
    let canonical = !text.is_empty()
        && text.bytes().all(|b| b.is_ascii_digit())
        && (text == "0" || !text.starts_with('0'))
        && text.len() <= 20;
    if !canonical {
        return Err(bad());
    }
    let v: u64 = text.parse().map_err(|_| bad())?;
    if v > max {
        return Err(bad());
    }
    Ok(v)
}

fn parse_confidence(text: &str) -> Result<Confidence, FrameError> {
    let bad = || FrameError::BadConfidence(text.to_string());
    let (whole, frac) = text.split_once('.').ok_or_else(bad)?;
    if !(whole == "0" || whole == "1") {
        if whole.bytes().all(|b| b.is_ascii_digit()) && !whole.is_empty() {
            return Err(FrameError::ConfidenceOutOfRange(text.to_string()));
        }
        return Err(bad());
    }
    if frac.is_empty() || frac.len() > 4 || !frac.bytes().all(|b| b.is_ascii_digit()) {
        return Err(bad());
    }
    let frac_units: u16 = format!("{frac:0<4}").parse().map_err(|_| bad())?;
    let units = if whole == "1" {
        Confidence::SCALE + frac_units
    } else {
        frac_units
    };
    Confidence::from_units(units).ok_or_else(|| FrameError::ConfidenceOutOfRange(text.to_string()))
}

/// Decodes one complete line including its `\n`.
pub fn decode_frame(bytes: &[u8]) -> Result<Frame, FrameError> {
    let body = bytes
        .strip_suffix(b"\n")
        .ok_or(FrameError::MissingNewline)?;
    decode_line(std::str::from_utf8(body).map_err(|_| FrameError::NotUtf8)?)
}

/// Decodes a line without its terminator.
pub fn decode_line(line: &str) -> Result<Frame, FrameError> {
    if line.chars().any(|c| c.is_control()) {
        return Err(if line.contains('\n') {
            FrameError::MissingNewline
        } else {
            FrameError::ControlCharacter
        });
    }
    if line.is_empty() {
        return Err(FrameError::Empty);
    }
    let (verb, rest) = line.split_once(' ').unwrap_or((line, ""));
    if verb == "ERR" {
        let mut parts = rest.splitn(2, ' ');
        let code = parts.next().filter(|c| !c.is_empty());
        let text = parts.next();
        let (Some(code), Some(text)) = (code, text) else {
            let found = rest.split(' ').filter(|s| !s.is_empty()).count();
            return Err(FrameError::FieldCount {
                verb: "ERR",
                expected: 2,
                found,
            });
        };
        let code = parse_uint("code", code, u16::MAX as u64)? as u16;
        if text.is_empty() {
            return Err(FrameError::EmptyErrorText);
        }
        return Ok(Frame::Err {
            code,
            text: text.to_string(),
        });
    }
    let fields: Vec<&str> = if rest.is_empty() && !line.ends_with(' ') {
        Vec::new()
    } else {
        rest.split(' ').collect()
    };
    let expect = |verb: &'static str, n: usize| {
        if fields.len() == n {
            Ok(())
        } else {
            Err(FrameError::FieldCount {
                verb,
                expected: n,
                found: fields.len(),
            })
        }
    };
    let id = |i: usize| parse_uint("id", fields[i], u32::MAX as u64).map(|v| v as u32);
    match verb {
        "JUNCTION" => {
            expect("JUNCTION", 2)?;
            let id = id(0)?;
            let mask = parse_uint("mask", fields[1], u64::MAX)?;
            if mask > 7 {
                return Err(FrameError::MaskOutOfRange(mask));
            }
            Ok(Frame::Junction {
                id,
                open_mask: mask as u8,
            })
        }
        "POLL" => {
            expect("POLL", 1)?;
            Ok(Frame::Poll { id: id(0)? })
        }
        "PENDING" => {
            expect("PENDING", 1)?;
            Ok(Frame::Pending { id: id(0)? })
        }
        "CMD" => {
            expect("CMD", 3)?;
            let id = id(0)?;
            let cmd = parse_uint("command", fields[1], u64::MAX)?;
            if cmd > 2 {
                return Err(FrameError::CommandOutOfRange(cmd));
            }
            let command = Command::try_from(cmd as u8).expect("checked range");
            Ok(Frame::Cmd {
                id,
                command,
                confidence: parse_confidence(fields[2])?,
            })
        }
        other => Err(FrameError::UnknownVerb(other.to_string())),
    }
}
