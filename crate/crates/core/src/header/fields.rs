use super::{HeaderField, RawMessage, Violation};
use crate::profile::{ParseMode, QuirkProfile};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum HeaderError {
    #[error("continuation line {line} has no field to continue")]
    MalformedFold { line: usize },
    #[error("illegal field name {name:?} at ordinal {ordinal}")]
    IllegalFieldName { name: String, ordinal: usize },
}

/// Fields in source order plus anything the parser had to tolerate.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ParsedHeaders {
    pub fields: Vec<HeaderField>,
    pub violations: Vec<Violation>,
}

impl ParsedHeaders {
    pub fn named<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a HeaderField> + 'a {
        self.fields.iter().filter(move |f| f.is(name))
    }

    pub fn first(&self, name: &str) -> Option<&HeaderField> {
        self.fields.iter().find(|f| f.is(name))
    }
}

pub fn parse_header_block(block: &[u8], profile: &QuirkProfile) -> Result<ParsedHeaders, HeaderError> {
    parse_header_block_with(block, profile.parse_mode)
}

/// Split a header block into fields. Stops at the first empty line, so a
/// whole `.eml` can be passed in.
///
/// Strict mode errors on a fold with nothing to continue and on names
/// outside printable ASCII; it reports a second `From` as a violation.
/// Lenient mode records problems and carries on.
pub fn parse_header_block_with(block: &[u8], mode: ParseMode) -> Result<ParsedHeaders, HeaderError> {
    let mut out = ParsedHeaders::default();
    let mut current: Option<(String, Vec<u8>)> = None;
    let strict = mode == ParseMode::Strict;

    let finish = |out: &mut ParsedHeaders, cur: &mut Option<(String, Vec<u8>)>| {
        if let Some((name, raw_value)) = cur.take() {
            let ordinal = out.fields.len();
            out.fields.push(HeaderField { name, raw_value, ordinal });
        }
    };

    for (line_no, line) in lines(block).enumerate() {
        if line.content.is_empty() {
            break;
        }
        if matches!(line.content[0], b' ' | b'\t') {
            match current.as_mut() {
                Some((_, value)) => {
                    value.extend_from_slice(line.prev_terminator);
                    value.extend_from_slice(line.content);
                }
                None if strict => return Err(HeaderError::MalformedFold { line: line_no }),
                None => out.violations.push(Violation::MalformedFold { line: line_no }),
            }
            continue;
        }
        finish(&mut out, &mut current);
        let Some(colon) = line.content.iter().position(|&b| b == b':') else {
            if strict {
                return Err(HeaderError::IllegalFieldName {
                    name: String::from_utf8_lossy(line.content).into_owned(),
                    ordinal: out.fields.len(),
                });
            }
            out.violations.push(Violation::MissingColon { line: line_no });
            continue;
        };
        let name_bytes = &line.content[..colon];
        let legal = !name_bytes.is_empty() && name_bytes.iter().all(|&b| (33..=126).contains(&b));
        let name = String::from_utf8_lossy(name_bytes).into_owned();
        if !legal {
            if strict {
                return Err(HeaderError::IllegalFieldName { name, ordinal: out.fields.len() });
            }
            out.violations.push(Violation::IllegalFieldName { ordinal: out.fields.len() });
        }
        current = Some((name, line.content[colon + 1..].to_vec()));
    }
    finish(&mut out, &mut current);

    if strict && out.fields.iter().filter(|f| f.is("From")).count() > 1 {
        out.violations.push(Violation::MultipleFrom);
    }
    Ok(out)
}

struct Line<'a> {
    content: &'a [u8],
    /// Terminator of the previous line, kept so folds survive byte-exact.
    prev_terminator: &'a [u8],
}

/// Lines split on LF with an optional preceding CR.
fn lines(block: &[u8]) -> impl Iterator<Item = Line<'_>> {
    let mut rest = block;
    let mut prev_terminator: &[u8] = b"\r\n";
    std::iter::from_fn(move || {
        if rest.is_empty() {
            return None;
        }
        let (content, term, next) = match rest.iter().position(|&b| b == b'\n') {
            Some(lf) if lf > 0 && rest[lf - 1] == b'\r' => (&rest[..lf - 1], &rest[lf - 1..=lf], &rest[lf + 1..]),
            Some(lf) => (&rest[..lf], &rest[lf..=lf], &rest[lf + 1..]),
            None => (rest, &b""[..], &b""[..]),
        };
        let line = Line { content, prev_terminator };
        prev_terminator = term;
        rest = next;
        Some(line)
    })
}

/// Remove folding: a line break followed by whitespace becomes that
/// whitespace.
pub fn unfold(raw: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(raw.len());
    let mut i = 0;
    while i < raw.len() {
        match raw[i] {
            b'\r' if raw.get(i + 1) == Some(&b'\n') && matches!(raw.get(i + 2), Some(b' ' | b'\t')) => i += 2,
            b'\n' if matches!(raw.get(i + 1), Some(b' ' | b'\t')) => i += 1,
            b => {
                out.push(b);
                i += 1;
            }
        }
    }
    out
}

/// Header block and body of a serialized message.
pub fn split_message(eml: &[u8]) -> (&[u8], &[u8]) {
    if eml.starts_with(b"\r\n") {
        return (&[], &eml[2..]);
    }
    if let Some(i) = find(eml, b"\r\n\r\n") {
        return (&eml[..i + 2], &eml[i + 4..]);
    }
    if let Some(i) = find(eml, b"\n\n") {
        return (&eml[..i + 1], &eml[i + 2..]);
    }
    (eml, &[])
}

fn find(hay: &[u8], needle: &[u8]) -> Option<usize> {
    hay.windows(needle.len()).position(|w| w == needle)
}

/// Parse a serialized message into fields and body.
pub fn parse_message(eml: &[u8], mode: ParseMode) -> Result<(ParsedHeaders, Vec<u8>), HeaderError> {
    let (head, body) = split_message(eml);
    Ok((parse_header_block_with(head, mode)?, body.to_vec()))
}

/// `.eml` bytes: the header block exactly as stored (with a CRLF added if
/// the last field lacks one), a blank line, then the body. Field contents
/// are never normalized.
pub fn serialize_message(msg: &RawMessage) -> Vec<u8> {
    let mut out = Vec::with_capacity(msg.header_block.len() + msg.body.len() + 4);
    out.extend_from_slice(&msg.header_block);
    if !out.is_empty() && !out.ends_with(b"\n") {
        out.extend_from_slice(b"\r\n");
    }
    out.extend_from_slice(b"\r\n");
    out.extend_from_slice(&msg.body);
    out
}

/// Rebuild a header block from fields: `name:raw_value CRLF` each.
pub(crate) fn serialize_fields(fields: &[HeaderField]) -> Vec<u8> {
    let mut out = Vec::new();
    for f in fields {
        out.extend_from_slice(f.name.as_bytes());
        out.push(b':');
        out.extend_from_slice(&f.raw_value);
        out.extend_from_slice(b"\r\n");
    }
    out
}
