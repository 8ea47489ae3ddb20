//! Address-list parsing.
//!
//! One scanner serves both modes. Lenient mode records oddities as
//! [`Violation`]s and keeps whatever it can; strict mode turns them into
//! errors and validates the addr-spec grammar of RFC 5322.

use std::collections::BTreeSet;
use std::ops::Range;

use super::{apply_truncation_in, header_text, Mailbox, Truncation, TruncationCause, Violation};
use crate::profile::{NullMembers, ParseMode, QuirkProfile, RouteHandling};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AddressError {
    #[error("no parsable mailbox")]
    EmptyResult,
    #[error("empty list member")]
    NullMember,
    #[error("route portion not accepted")]
    Route,
    #[error("malformed mailbox: {0:?}")]
    Malformed(Violation),
}

/// Mailboxes in source order plus what lenient parsing tolerated.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AddressList {
    pub mailboxes: Vec<Mailbox>,
    pub violations: Vec<Violation>,
}

/// Everything the parser needs besides the profile's character classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AddressOptions {
    pub mode: ParseMode,
    pub truncation: BTreeSet<TruncationCause>,
}

impl AddressOptions {
    /// Verification-side options of `profile`.
    pub fn for_auth(profile: &QuirkProfile) -> Self {
        Self { mode: profile.parse_mode, truncation: profile.truncation.clone() }
    }

    /// Display-side options of `profile`.
    pub fn for_display(profile: &QuirkProfile) -> Self {
        Self { mode: profile.parse_mode, truncation: profile.display_truncation.clone() }
    }
}

pub fn parse_address_list(raw: &[u8], profile: &QuirkProfile) -> Result<AddressList, AddressError> {
    parse_address_list_with(raw, profile, &AddressOptions::for_auth(profile))
}

/// Parse an address-list value. Folding is neutralised in place (line
/// breaks before whitespace become spaces) so `raw_span` indexes `raw`.
pub fn parse_address_list_with(
    raw: &[u8],
    profile: &QuirkProfile,
    opts: &AddressOptions,
) -> Result<AddressList, AddressError> {
    let strict = opts.mode == ParseMode::Strict;
    let (text, latin1) = header_text(&neutralise_folds(raw));
    let mut out = AddressList::default();

    let (members, unclosed) = split_members(&text);
    if unclosed {
        if strict {
            return Err(AddressError::Malformed(Violation::UnclosedAngle));
        }
        out.violations.push(Violation::UnclosedAngle);
    }

    for span in members {
        let member = &text[span.clone()];
        if member.trim().is_empty() {
            match profile.null_list_members {
                NullMembers::Reject => return Err(AddressError::NullMember),
                NullMembers::Skip => {
                    out.violations.push(Violation::NullMember);
                    continue;
                }
            }
        }
        match parse_member(member, span.start, profile, opts, latin1) {
            Ok((mailbox, mut violations)) => {
                out.violations.append(&mut violations);
                out.mailboxes.push(mailbox);
            }
            Err(MemberError::Fatal(e)) => return Err(e),
            Err(MemberError::Skip(v)) if !strict => out.violations.push(v),
            Err(MemberError::Skip(v)) => return Err(AddressError::Malformed(v)),
        }
    }

    if out.mailboxes.is_empty() {
        return Err(AddressError::EmptyResult);
    }
    if latin1 {
        // spans were computed on the one-char-per-byte view; map back
        for m in &mut out.mailboxes {
            m.raw_span = byte_span(&text, m.raw_span.clone());
        }
    }
    Ok(out)
}

fn byte_span(latin1_text: &str, span: Range<usize>) -> Range<usize> {
    let chars_before = |i: usize| latin1_text[..i].chars().count();
    chars_before(span.start)..chars_before(span.end)
}

fn neutralise_folds(raw: &[u8]) -> Vec<u8> {
    let mut v = raw.to_vec();
    for i in 0..v.len() {
        let next_ws = |j: usize| matches!(v.get(j), Some(b' ' | b'\t'));
        if v[i] == b'\r' && v.get(i + 1) == Some(&b'\n') && next_ws(i + 2) {
            v[i] = b' ';
            v[i + 1] = b' ';
        } else if v[i] == b'\n' && next_ws(i + 1) {
            v[i] = b' ';
        }
    }
    v
}

/// Byte ranges of top-level comma-separated members. Commas inside quotes,
/// comments and angle brackets do not split. The flag reports an angle
/// bracket left open at the end.
fn split_members(text: &str) -> (Vec<Range<usize>>, bool) {
    let mut out = Vec::new();
    let mut start = 0;
    let mut quoted = false;
    let mut escaped = false;
    let mut comment = 0usize;
    let mut angle = false;
    for (i, c) in text.char_indices() {
        if escaped {
            escaped = false;
            continue;
        }
        match c {
            '\\' if quoted || comment > 0 => escaped = true,
            '"' if comment == 0 => quoted = !quoted,
            '(' if !quoted => comment += 1,
            ')' if !quoted && comment > 0 => comment -= 1,
            '<' if !quoted && comment == 0 => angle = true,
            '>' if !quoted && comment == 0 => angle = false,
            ',' if !quoted && comment == 0 && !angle => {
                out.push(start..i);
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(start..text.len());
    (out, angle)
}

enum MemberError {
    /// Stops the whole parse.
    Fatal(AddressError),
    /// Drops this member in lenient mode.
    Skip(Violation),
}

/// Text with comments removed, each kept character paired with its offset
/// in the member.
struct Stripped {
    chars: Vec<(usize, char)>,
    comments: Vec<String>,
    /// Byte offsets where each comment opened.
    starts: Vec<usize>,
}

impl Stripped {
    fn text(&self, range: Range<usize>) -> String {
        self.chars[range].iter().map(|&(_, c)| c).collect()
    }

    fn find(&self, from: usize, pred: impl Fn(char) -> bool) -> Option<usize> {
        self.chars[from..].iter().position(|&(_, c)| pred(c)).map(|p| p + from)
    }
}

fn strip_comments(member: &str) -> Stripped {
    let mut chars = Vec::new();
    let mut comments = Vec::new();
    let mut starts = Vec::new();
    let mut current = String::new();
    let mut depth = 0usize;
    let mut quoted = false;
    let mut escaped = false;
    for (i, c) in member.char_indices() {
        if depth > 0 {
            if escaped {
                escaped = false;
                current.push(c);
                continue;
            }
            match c {
                '\\' => escaped = true,
                '(' => {
                    depth += 1;
                    current.push(c);
                }
                ')' => {
                    depth -= 1;
                    if depth == 0 {
                        comments.push(std::mem::take(&mut current));
                    } else {
                        current.push(c);
                    }
                }
                _ => current.push(c),
            }
            continue;
        }
        if escaped {
            escaped = false;
        } else if c == '\\' && quoted {
            escaped = true;
        } else if c == '"' {
            quoted = !quoted;
        } else if c == '(' && !quoted {
            depth = 1;
            starts.push(i);
            continue;
        }
        chars.push((i, c));
    }
    if depth > 0 {
        comments.push(current);
    }
    Stripped { chars, comments, starts }
}

fn parse_member(
    member: &str,
    base: usize,
    profile: &QuirkProfile,
    opts: &AddressOptions,
    latin1: bool,
) -> Result<(Mailbox, Vec<Violation>), MemberError> {
    let strict = opts.mode == ParseMode::Strict;
    let mut violations = Vec::new();
    let s = strip_comments(member);

    // locate the address text inside the comment-free character list
    let (display_name, mut addr_range) = match s.find(0, |c| c == '<') {
        Some(lt) => {
            let name = unquote(s.text(0..lt).trim());
            let end = s.find(lt + 1, |c| c == '>').unwrap_or(s.chars.len());
            (Some(name).filter(|n| !n.is_empty()), lt + 1..end)
        }
        None => (None, 0..s.chars.len()),
    };
    trim_range(&s, &mut addr_range);
    // a comment between the brackets, or inside a bare addr-spec
    let span = match s.find(0, |c| c == '<') {
        Some(lt) => {
            let gt = s.find(lt + 1, |c| c == '>');
            s.chars[lt].0..gt.map_or(member.len(), |g| s.chars[g].0)
        }
        None if addr_range.is_empty() => 0..0,
        None => s.chars[addr_range.start].0..s.chars[addr_range.end - 1].0,
    };
    if s.starts.iter().any(|o| span.contains(o)) {
        violations.push(Violation::EmbeddedComment);
    }
    if display_name.is_none() {
        let bracketed = addr_range.len() >= 2
            && s.chars[addr_range.start].1 == '['
            && s.chars[addr_range.end - 1].1 == ']';
        if bracketed {
            if strict {
                return Err(MemberError::Fatal(AddressError::Malformed(Violation::BracketedAddress)));
            }
            violations.push(Violation::BracketedAddress);
            addr_range = addr_range.start + 1..addr_range.end - 1;
            trim_range(&s, &mut addr_range);
        }
    }

    // obsolete route: @a.com,@b.com:
    let mut route = Vec::new();
    if addr_range.start < addr_range.end && s.chars[addr_range.start].1 == '@' {
        if let Some(colon) = s.find(addr_range.start, |c| c == ':').filter(|&c| c < addr_range.end) {
            if profile.route_handling == RouteHandling::Reject {
                return Err(MemberError::Fatal(AddressError::Route));
            }
            route = s
                .text(addr_range.start..colon)
                .split(',')
                .map(|d| d.trim().trim_start_matches('@').trim().to_owned())
                .filter(|d| !d.is_empty())
                .collect();
            violations.push(Violation::Route);
            addr_range.start = colon + 1;
            trim_range(&s, &mut addr_range);
        }
    }

    let mut addr = s.text(addr_range.clone());
    let addr_offset = s.chars.get(addr_range.start).map_or(member.len(), |&(o, _)| o);

    let mut truncated_at = None;
    if !strict {
        let (cut, cause) = apply_truncation_in(&addr, profile, &opts.truncation, latin1);
        if let Some((at, cause)) = cause {
            truncated_at = Some(Truncation { offset: base + addr_offset + at, cause });
            violations.push(Violation::Truncated { cause });
            addr = cut;
        }
    }

    let Some(at) = addr.rfind('@') else {
        return Err(MemberError::Skip(Violation::MissingAt));
    };
    let local_part = addr[..at].trim().to_owned();
    let domain = addr[at + 1..].trim().to_owned();

    if strict {
        if !valid_local_part(&local_part) {
            return Err(MemberError::Fatal(AddressError::Malformed(Violation::InvalidLocalPart)));
        }
        if !valid_domain(&domain) {
            return Err(MemberError::Fatal(AddressError::Malformed(Violation::InvalidDomain)));
        }
    } else if domain.is_empty() {
        return Err(MemberError::Skip(Violation::InvalidDomain));
    }

    Ok((
        Mailbox {
            display_name,
            local_part,
            domain,
            route,
            comments: s.comments,
            raw_span: base..base + member.len(),
            truncated_at,
        },
        violations,
    ))
}

fn trim_range(s: &Stripped, r: &mut Range<usize>) {
    while r.start < r.end && s.chars[r.start].1.is_whitespace() {
        r.start += 1;
    }
    while r.end > r.start && s.chars[r.end - 1].1.is_whitespace() {
        r.end -= 1;
    }
}

fn unquote(s: &str) -> String {
    match s.strip_prefix('"').and_then(|t| t.strip_suffix('"')) {
        Some(inner) => {
            let mut out = String::with_capacity(inner.len());
            let mut chars = inner.chars();
            while let Some(c) = chars.next() {
                if c == '\\' {
                    if let Some(n) = chars.next() {
                        out.push(n);
                    }
                } else {
                    out.push(c);
                }
            }
            out
        }
        None => s.to_owned(),
    }
}

fn is_atext(c: char) -> bool {
    c.is_ascii_alphanumeric() || "!#$%&'*+-/=?^_`{|}~".contains(c)
}

fn dot_atom(s: &str) -> bool {
    !s.is_empty() && s.split('.').all(|part| !part.is_empty() && part.chars().all(is_atext))
}

fn valid_local_part(s: &str) -> bool {
    if s.len() >= 2 && s.starts_with('"') && s.ends_with('"') {
        let inner = &s[1..s.len() - 1];
        return inner.chars().all(|c| c.is_ascii() && (c == ' ' || c == '\t' || c.is_ascii_graphic()));
    }
    dot_atom(s)
}

fn valid_domain(s: &str) -> bool {
    if s.starts_with('[') && s.ends_with(']') && s.len() >= 2 {
        let inner = &s[1..s.len() - 1];
        return inner.chars().all(|c| c.is_ascii_graphic() && !matches!(c, '[' | ']' | '\\'));
    }
    dot_atom(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::{builtin_profiles, strict_rfc, LENIENT_BASE};

    fn lenient() -> QuirkProfile {
        builtin_profiles().into_iter().find(|p| p.name == LENIENT_BASE).unwrap()
    }

    fn addrs(list: &AddressList) -> Vec<String> {
        list.mailboxes.iter().map(Mailbox::address).collect()
    }

    #[test]
    fn plain_mailbox() {
        let l = parse_address_list(b"<alice@a.com>", &strict_rfc()).unwrap();
        assert_eq!(addrs(&l), ["alice@a.com"]);
        assert!(l.mailboxes[0].route.is_empty());
        assert!(l.mailboxes[0].comments.is_empty());
        assert_eq!(l.mailboxes[0].raw_span, 0..13);
    }

    #[test]
    fn route_is_recorded_and_stripped() {
        let l = parse_address_list(b"<@a.com,@b.com:admin@c.com>", &lenient()).unwrap();
        assert_eq!(addrs(&l), ["admin@c.com"]);
        assert_eq!(l.mailboxes[0].route, ["a.com", "b.com"]);
        assert_eq!(
            parse_address_list(b"<@a.com,@b.com:admin@c.com>", &strict_rfc()),
            Err(AddressError::Route)
        );
    }

    #[test]
    fn null_members() {
        let l = parse_address_list(b"<a@a.com>, ,<b@b.com>", &lenient()).unwrap();
        assert_eq!(addrs(&l), ["a@a.com", "b@b.com"]);
        assert_eq!(l.violations, [Violation::NullMember]);
        assert_eq!(
            parse_address_list(b"<a@a.com>, ,<b@b.com>", &strict_rfc()),
            Err(AddressError::NullMember)
        );
    }

    #[test]
    fn comments_are_recorded_not_addressed() {
        for p in [strict_rfc(), lenient()] {
            let l = parse_address_list(b"<admin(username)@a.com(domain name)>", &p).unwrap();
            assert_eq!(addrs(&l), ["admin@a.com"]);
            assert_eq!(l.mailboxes[0].comments, ["username", "domain name"]);
            assert_eq!(l.violations, [Violation::EmbeddedComment]);
        }
        let l = parse_address_list(b"Alice (work) <alice@a.com>", &strict_rfc()).unwrap();
        assert!(l.violations.is_empty());
        let l = parse_address_list(b"<alice@a.com (x)>", &strict_rfc()).unwrap();
        assert_eq!(l.violations, [Violation::EmbeddedComment]);
    }

    #[test]
    fn display_names() {
        let l = parse_address_list(br#""Smith, Alice" <alice@a.com>, Bob <b@b.com>"#, &strict_rfc()).unwrap();
        assert_eq!(addrs(&l), ["alice@a.com", "b@b.com"]);
        assert_eq!(l.mailboxes[0].display_name.as_deref(), Some("Smith, Alice"));
        assert_eq!(l.mailboxes[1].display_name.as_deref(), Some("Bob"));
    }

    #[test]
    fn truncation_only_in_lenient_mode() {
        let mut p = lenient();
        p.truncation = [TruncationCause::Nul].into_iter().collect();
        let l = parse_address_list(b"admin@a.com\0@attack.com", &p).unwrap();
        assert_eq!(addrs(&l), ["admin@a.com"]);
        assert_eq!(l.mailboxes[0].truncated_at, Some(Truncation { offset: 11, cause: TruncationCause::Nul }));

        p.truncation.clear();
        let l = parse_address_list(b"admin@a.com\0@attack.com", &p).unwrap();
        assert_eq!(l.mailboxes[0].domain, "attack.com");
        assert_eq!(l.mailboxes[0].truncated_at, None);

        assert!(parse_address_list(b"admin@a.com\0@attack.com", &strict_rfc()).is_err());
    }

    #[test]
    fn brackets_stripped_leniently() {
        let l = parse_address_list(b"[Alice@a.com], <Oscar@attack.com>", &lenient()).unwrap();
        assert_eq!(addrs(&l), ["Alice@a.com", "Oscar@attack.com"]);
        assert!(parse_address_list(b"[Alice@a.com]", &strict_rfc()).is_err());
    }

    #[test]
    fn garbage_is_empty_result() {
        assert_eq!(parse_address_list(b"=?utf-8?b?QWxpY2VAYS5jb20=?=", &lenient()), Err(AddressError::EmptyResult));
        assert_eq!(parse_address_list(b"", &lenient()), Err(AddressError::EmptyResult));
    }

    #[test]
    fn unclosed_angle() {
        let l = parse_address_list(b"<a@a.com", &lenient()).unwrap();
        assert_eq!(addrs(&l), ["a@a.com"]);
        assert!(l.violations.contains(&Violation::UnclosedAngle));
        assert!(parse_address_list(b"<a@a.com", &strict_rfc()).is_err());
    }

    #[test]
    fn folded_value_keeps_offsets() {
        let l = parse_address_list(b"<a@a.com>,\r\n <b@b.com>", &strict_rfc()).unwrap();
        assert_eq!(addrs(&l), ["a@a.com", "b@b.com"]);
        assert_eq!(l.mailboxes[1].raw_span, 10..22);
    }

    #[test]
    fn strict_grammar() {
        let s = strict_rfc();
        assert!(parse_address_list(b"\"a b\"@a.com", &s).is_ok());
        assert!(parse_address_list(b"a..b@a.com", &s).is_err());
        assert!(parse_address_list(b"a@[192.0.2.1]", &s).is_ok());
        assert!(parse_address_list("\u{202E}moc.a@\u{202D}alice".as_bytes(), &s).is_err());
    }

    #[test]
    fn latin1_spans_are_byte_offsets() {
        let l = parse_address_list(b"caf\xe9 <a@a.com>, <b@b.com>", &lenient()).unwrap();
        assert_eq!(l.mailboxes[1].raw_span, 15..25);
        assert_eq!(l.mailboxes[0].display_name.as_deref(), Some("caf\u{e9}"));
    }
}
