use std::fmt::Write as _;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    /// Bytes this client wrote.
    Sent,
    Received,
    /// Harness commentary, never on the wire.
    Note,
}

impl Direction {
    fn tag(self) -> &'static str {
        match self {
            Direction::Sent => "C:",
            Direction::Received => "S:",
            Direction::Note => "*",
        }
    }

    fn from_tag(s: &str) -> Option<Self> {
        match s {
            "C:" => Some(Direction::Sent),
            "S:" => Some(Direction::Received),
            "*" => Some(Direction::Note),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entry {
    pub at: DateTime<Utc>,
    pub direction: Direction,
    pub bytes: Vec<u8>,
}

/// Everything said in one session, one entry per write or reply line.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub target: String,
    pub entries: Vec<Entry>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("transcript line {line}: {reason}")]
pub struct TranscriptParseError {
    pub line: usize,
    pub reason: String,
}

impl Transcript {
    pub fn new(target: impl Into<String>) -> Self {
        Self { target: target.into(), entries: Vec::new() }
    }

    pub fn push(&mut self, at: DateTime<Utc>, direction: Direction, bytes: &[u8]) {
        self.entries.push(Entry { at, direction, bytes: bytes.to_vec() });
    }

    pub fn note(&mut self, at: DateTime<Utc>, text: &str) {
        self.push(at, Direction::Note, text.as_bytes());
    }

    /// Time of the first entry.
    pub fn started_at(&self) -> Option<DateTime<Utc>> {
        self.entries.first().map(|e| e.at)
    }

    /// Time of the first byte written.
    pub fn first_sent_at(&self) -> Option<DateTime<Utc>> {
        self.entries.iter().find(|e| e.direction == Direction::Sent).map(|e| e.at)
    }

    /// The exact client byte stream, for replay.
    pub fn sent_bytes(&self) -> Vec<u8> {
        self.of(Direction::Sent)
    }

    pub fn received_bytes(&self) -> Vec<u8> {
        self.of(Direction::Received)
    }

    fn of(&self, d: Direction) -> Vec<u8> {
        self.entries.iter().filter(|e| e.direction == d).flat_map(|e| e.bytes.iter().copied()).collect()
    }

    /// Whether any client write contains `needle`.
    pub fn sent_contains(&self, needle: &str) -> bool {
        let hay = self.sent_bytes();
        hay.windows(needle.len()).any(|w| w == needle.as_bytes())
    }

    /// Line-delimited text: ISO-8601 timestamp, direction, escaped bytes.
    pub fn to_text(&self) -> String {
        let mut out = format!("# target {}\n", self.target);
        for e in &self.entries {
            let _ = writeln!(
                out,
                "{} {} {}",
                e.at.to_rfc3339_opts(SecondsFormat::Millis, true),
                e.direction.tag(),
                escape(&e.bytes)
            );
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, TranscriptParseError> {
        let mut t = Transcript::default();
        for (n, line) in text.lines().enumerate() {
            let err = |reason: &str| TranscriptParseError { line: n + 1, reason: reason.to_owned() };
            if let Some(target) = line.strip_prefix("# target ") {
                t.target = target.to_owned();
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let mut parts = line.splitn(3, ' ');
            let (ts, tag) = (parts.next().unwrap_or(""), parts.next().unwrap_or(""));
            let at = DateTime::parse_from_rfc3339(ts).map_err(|_| err("bad timestamp"))?.with_timezone(&Utc);
            let direction = Direction::from_tag(tag).ok_or_else(|| err("bad direction"))?;
            let bytes = unescape(parts.next().unwrap_or("")).ok_or_else(|| err("bad escape"))?;
            t.entries.push(Entry { at, direction, bytes });
        }
        Ok(t)
    }
}

fn escape(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len());
    for &b in bytes {
        match b {
            b'\\' => s.push_str("\\\\"),
            b'\r' => s.push_str("\\r"),
            b'\n' => s.push_str("\\n"),
            b'\t' => s.push_str("\\t"),
            0x20..=0x7e => s.push(b as char),
            _ => {
                let _ = write!(s, "\\x{b:02x}");
            }
        }
    }
    s
}

fn unescape(s: &str) -> Option<Vec<u8>> {
    let b = s.as_bytes();
    let mut out = Vec::with_capacity(b.len());
    let mut i = 0;
    while i < b.len() {
        if b[i] != b'\\' {
            out.push(b[i]);
            i += 1;
            continue;
        }
        match b.get(i + 1)? {
            b'\\' => out.push(b'\\'),
            b'r' => out.push(b'\r'),
            b'n' => out.push(b'\n'),
            b't' => out.push(b'\t'),
            b'x' => {
                let hex = std::str::from_utf8(b.get(i + 2..i + 4)?).ok()?;
                out.push(u8::from_str_radix(hex, 16).ok()?);
                i += 2;
            }
            _ => return None,
        }
        i += 2;
    }
    Some(out)
}
