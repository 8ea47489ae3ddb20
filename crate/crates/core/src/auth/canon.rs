//! DKIM canonicalization (RFC 6376 section 3.4).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Canon {
    Simple,
    Relaxed,
}

impl Canon {
    pub const ALL: [Canon; 2] = [Canon::Simple, Canon::Relaxed];
}

impl fmt::Display for Canon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Canon::Simple => "simple",
            Canon::Relaxed => "relaxed",
        })
    }
}

impl FromStr for Canon {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s.trim().to_ascii_lowercase().as_str() {
            "simple" => Ok(Canon::Simple),
            "relaxed" => Ok(Canon::Relaxed),
            _ => Err(()),
        }
    }
}

/// `(header, body)` canonicalization pair, written `relaxed/simple`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CanonPair {
    pub header: Canon,
    pub body: Canon,
}

impl CanonPair {
    pub const RELAXED: CanonPair = CanonPair { header: Canon::Relaxed, body: Canon::Relaxed };

    pub fn new(header: Canon, body: Canon) -> Self {
        Self { header, body }
    }

    pub fn all() -> impl Iterator<Item = CanonPair> {
        Canon::ALL
            .into_iter()
            .flat_map(|h| Canon::ALL.into_iter().map(move |b| CanonPair::new(h, b)))
    }

    /// The `c=` tag value; a missing body part means simple.
    pub fn parse_tag(s: &str) -> Option<Self> {
        let (h, b) = s.split_once('/').unwrap_or((s, "simple"));
        Some(Self::new(h.parse().ok()?, b.parse().ok()?))
    }
}

impl fmt::Display for CanonPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.header, self.body)
    }
}

fn is_wsp(b: u8) -> bool {
    b == b' ' || b == b'\t'
}

/// One header field in canonical form, CRLF-terminated.
pub fn canon_header(name: &str, raw_value: &[u8], c: Canon) -> Vec<u8> {
    let mut out = Vec::with_capacity(name.len() + raw_value.len() + 3);
    match c {
        Canon::Simple => {
            out.extend_from_slice(name.as_bytes());
            out.push(b':');
            out.extend_from_slice(raw_value);
        }
        Canon::Relaxed => {
            out.extend_from_slice(name.trim_end_matches([' ', '\t']).to_ascii_lowercase().as_bytes());
            out.push(b':');
            let unfolded: Vec<u8> = raw_value.iter().copied().filter(|&b| b != b'\r' && b != b'\n').collect();
            let collapsed = relax_line(&unfolded);
            let start = collapsed.iter().position(|&b| b != b' ').unwrap_or(collapsed.len());
            out.extend_from_slice(&collapsed[start..]);
        }
    }
    out.extend_from_slice(b"\r\n");
    out
}

/// Body lines with CRLF removed. Bare LF also ends a line.
fn body_lines(body: &[u8]) -> Vec<&[u8]> {
    let mut lines = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < body.len() {
        if body[i] == b'\n' {
            let end = if i > start && body[i - 1] == b'\r' { i - 1 } else { i };
            lines.push(&body[start..end]);
            start = i + 1;
        }
        i += 1;
    }
    if start < body.len() {
        lines.push(&body[start..]);
    }
    lines
}

pub fn canon_body(body: &[u8], c: Canon) -> Vec<u8> {
    let mut lines: Vec<Vec<u8>> = body_lines(body)
        .into_iter()
        .map(|l| match c {
            Canon::Simple => l.to_vec(),
            Canon::Relaxed => relax_line(l),
        })
        .collect();
    while lines.last().is_some_and(|l| l.is_empty()) {
        lines.pop();
    }
    let mut out = Vec::with_capacity(body.len() + 2);
    for l in &lines {
        out.extend_from_slice(l);
        out.extend_from_slice(b"\r\n");
    }
    if out.is_empty() && c == Canon::Simple {
        out.extend_from_slice(b"\r\n");
    }
    out
}

fn relax_line(line: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(line.len());
    let mut in_ws = false;
    for &b in line {
        if is_wsp(b) {
            in_ws = true;
        } else {
            if in_ws {
                out.push(b' ');
            }
            in_ws = false;
            out.push(b);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    // Hand-applied RFC 6376 3.4.4: strip WSP at line end, collapse WSP
    // runs, drop trailing empty lines, end a non-empty body with CRLF.
    #[test]
    fn relaxed_body_hand_derived() {
        let table: [(&[u8], &[u8]); 5] = [
            (b"Hi \r\n\r\n\r\n", b"Hi\r\n"),
            (b"a  \t b\r\n", b"a b\r\n"),
            (b"", b""),
            (b"x\r\n \r\n", b"x\r\n"),
            (b"no-newline\t", b"no-newline\r\n"),
        ];
        for (input, want) in table {
            assert_eq!(canon_body(input, Canon::Relaxed), want, "{:?}", String::from_utf8_lossy(input));
        }
    }

    #[test]
    fn simple_body() {
        assert_eq!(canon_body(b"", Canon::Simple), b"\r\n");
        assert_eq!(canon_body(b"Hi \r\n\r\n", Canon::Simple), b"Hi \r\n");
        assert_eq!(canon_body(b"a\r\n \r\n", Canon::Simple), b"a\r\n \r\n");
        assert_eq!(canon_body(b"abc", Canon::Simple), b"abc\r\n");
    }

    #[test]
    fn relaxed_header() {
        assert_eq!(canon_header("SubJect ", b" A  \t b\r\n  c ", Canon::Relaxed), b"subject:A b c\r\n");
        assert_eq!(canon_header("From", b"<a@a.com>", Canon::Relaxed), b"from:<a@a.com>\r\n");
        assert_eq!(canon_header("X", b"", Canon::Relaxed), b"x:\r\n");
    }

    #[test]
    fn simple_header_is_verbatim() {
        assert_eq!(canon_header("SubJect", b" A  b\r\n c", Canon::Simple), b"SubJect: A  b\r\n c\r\n");
    }

    #[test]
    fn canon_pair_tag() {
        assert_eq!(CanonPair::parse_tag("relaxed"), Some(CanonPair::new(Canon::Relaxed, Canon::Simple)));
        assert_eq!(CanonPair::parse_tag("simple/relaxed"), Some(CanonPair::new(Canon::Simple, Canon::Relaxed)));
        assert_eq!(CanonPair::parse_tag("odd"), None);
        assert_eq!(CanonPair::all().count(), 4);
    }
}
