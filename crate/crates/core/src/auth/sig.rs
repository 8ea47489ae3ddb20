//! Signature machinery shared by DKIM-Signature and ARC-Message-Signature.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use sha2::{Digest, Sha256};

use super::canon::{canon_body, canon_header, CanonPair};
use super::dkim::DkimResult;
use super::dns::{canonical_name, Resolver};
use super::keys::{verify_with_public, DkimAlgorithm, DkimKeyPair};
use crate::header::{HeaderField, ParsedHeaders};

/// `tag=value` pairs in order. `None` on a malformed list or a duplicate
/// tag.
pub(crate) fn parse_tags(value: &str) -> Option<Vec<(String, String)>> {
    let mut out: Vec<(String, String)> = Vec::new();
    for part in value.split(';') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let (name, v) = part.split_once('=')?;
        let name = name.trim().to_owned();
        if name.is_empty() || out.iter().any(|(n, _)| *n == name) {
            return None;
        }
        out.push((name, v.trim().to_owned()));
    }
    Some(out)
}

pub(crate) fn tag<'a>(tags: &'a [(String, String)], name: &str) -> Option<&'a str> {
    tags.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_str())
}

pub(crate) fn strip_ws(s: &str) -> String {
    s.chars().filter(|c| !c.is_whitespace()).collect()
}

/// The field value with the `b=` tag's value removed, as hashed by both
/// signer and verifier.
pub(crate) fn without_b_value(raw: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(raw.len());
    for (i, seg) in raw.split(|&b| b == b';').enumerate() {
        if i > 0 {
            out.push(b';');
        }
        match seg.iter().position(|&b| b == b'=') {
            Some(eq) if seg[..eq].iter().filter(|b| !b.is_ascii_whitespace()).eq(b"b".iter()) => {
                out.extend_from_slice(&seg[..=eq]);
            }
            _ => out.extend_from_slice(seg),
        }
    }
    out
}

/// Fields named in `h=`, each name consuming instances from the bottom up.
pub(crate) fn select_headers<'a>(fields: &'a [HeaderField], names: &[String]) -> Vec<&'a HeaderField> {
    let mut used = vec![false; fields.len()];
    let mut out = Vec::new();
    for name in names {
        if let Some(i) = (0..fields.len()).rev().find(|&i| !used[i] && fields[i].is(name)) {
            used[i] = true;
            out.push(&fields[i]);
        }
    }
    out
}

pub(crate) fn body_hash(body: &[u8], canon: CanonPair) -> String {
    STANDARD.encode(Sha256::digest(canon_body(body, canon.body)))
}

/// Data covered by the signature: selected headers, then the signature
/// field itself without its `b=` value and without a final CRLF.
fn signed_data(selected: &[&HeaderField], sig_name: &str, sig_value_no_b: &[u8], canon: CanonPair) -> Vec<u8> {
    let mut data = Vec::new();
    for f in selected {
        data.extend_from_slice(&canon_header(&f.name, &f.raw_value, canon.header));
    }
    let mut own = canon_header(sig_name, sig_value_no_b, canon.header);
    own.truncate(own.len() - 2);
    data.extend_from_slice(&own);
    data
}

/// Build a complete signature field value (leading space included).
pub(crate) fn sign_fields(
    headers: &ParsedHeaders,
    body: &[u8],
    sig_name: &str,
    lead: &str,
    key: &DkimKeyPair,
    canon: CanonPair,
    signed_headers: &[String],
) -> Vec<u8> {
    let h = signed_headers.iter().map(|s| s.to_ascii_lowercase()).collect::<Vec<_>>().join(":");
    let unsigned = format!(
        " {lead}; a={}; c={canon}; d={}; s={}; h={h}; bh={}; b=",
        key.algorithm,
        key.domain,
        key.selector,
        body_hash(body, canon)
    );
    let selected = select_headers(&headers.fields, signed_headers);
    let data = signed_data(&selected, sig_name, unsigned.as_bytes(), canon);
    let b = STANDARD.encode(key.sign(&data));
    format!("{unsigned}{b}").into_bytes()
}

/// Outcome of checking one signature field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct SigCheck {
    pub domain: String,
    pub selector: String,
    pub result: DkimResult,
    pub reason: Option<String>,
}

pub(crate) fn fetch_key(
    resolver: &dyn Resolver,
    selector: &str,
    domain: &str,
    algorithm: DkimAlgorithm,
) -> Result<Vec<u8>, (DkimResult, String)> {
    let name = format!("{selector}._domainkey.{domain}");
    let txt = resolver.txt(&name).map_err(|e| (DkimResult::TempError, e.to_string()))?;
    let Some(record) = txt.iter().find_map(|t| parse_tags(t)) else {
        return Err((DkimResult::PermError, format!("no key record at {name}")));
    };
    if tag(&record, "v").is_some_and(|v| v != "DKIM1") {
        return Err((DkimResult::PermError, "bad key record version".into()));
    }
    let k = tag(&record, "k").unwrap_or("rsa");
    if !k.eq_ignore_ascii_case(algorithm.key_type()) {
        return Err((DkimResult::PermError, format!("key type {k} does not match {algorithm}")));
    }
    let p = strip_ws(tag(&record, "p").unwrap_or(""));
    if p.is_empty() {
        return Err((DkimResult::Fail, "key revoked".into()));
    }
    STANDARD.decode(p).map_err(|_| (DkimResult::PermError, "key is not base64".into()))
}

/// Verify one signature field. `lead` names the tag that must be present
/// first-class (`v` for DKIM, `i` for ARC).
pub(crate) fn verify_field(
    headers: &ParsedHeaders,
    body: &[u8],
    field: &HeaderField,
    lead: (&str, Option<&str>),
    require_from: bool,
    resolver: &dyn Resolver,
) -> SigCheck {
    let value = String::from_utf8_lossy(&field.unfolded()).into_owned();
    let mut check = SigCheck {
        domain: String::new(),
        selector: String::new(),
        result: DkimResult::PermError,
        reason: None,
    };
    let fail = |mut c: SigCheck, r: DkimResult, why: &str| {
        c.result = r;
        c.reason = Some(why.to_owned());
        c
    };
    let Some(tags) = parse_tags(&value) else {
        return fail(check, DkimResult::PermError, "malformed tag list");
    };
    check.domain = canonical_name(tag(&tags, "d").unwrap_or(""));
    check.selector = tag(&tags, "s").unwrap_or("").to_owned();

    match (tag(&tags, lead.0), lead.1) {
        (None, _) => return fail(check, DkimResult::PermError, "missing version/instance tag"),
        (Some(v), Some(want)) if v != want => return fail(check, DkimResult::PermError, "unsupported version"),
        _ => {}
    }
    let (Some(a), Some(b), Some(bh), Some(h)) = (tag(&tags, "a"), tag(&tags, "b"), tag(&tags, "bh"), tag(&tags, "h")) else {
        return fail(check, DkimResult::PermError, "missing required tag");
    };
    if check.domain.is_empty() || check.selector.is_empty() {
        return fail(check, DkimResult::PermError, "missing d= or s=");
    }
    let Some(algorithm) = DkimAlgorithm::from_tag(a) else {
        return fail(check, DkimResult::PermError, "unsupported algorithm");
    };
    if tag(&tags, "l").is_some() {
        return fail(check, DkimResult::PermError, "body length limits are not accepted");
    }
    let Some(canon) = CanonPair::parse_tag(tag(&tags, "c").unwrap_or("simple/simple")) else {
        return fail(check, DkimResult::PermError, "unknown canonicalization");
    };
    let names: Vec<String> = h.split(':').map(|n| n.trim().to_owned()).filter(|n| !n.is_empty()).collect();
    if require_from && !names.iter().any(|n| n.eq_ignore_ascii_case("from")) {
        return fail(check, DkimResult::PermError, "h= does not cover From");
    }
    let public = match fetch_key(resolver, &check.selector, &check.domain, algorithm) {
        Ok(p) => p,
        Err((r, why)) => return fail(check, r, &why),
    };
    if strip_ws(bh) != body_hash(body, canon) {
        return fail(check, DkimResult::Fail, "body hash mismatch");
    }
    let Ok(sig) = STANDARD.decode(strip_ws(b)) else {
        return fail(check, DkimResult::PermError, "b= is not base64");
    };
    let selected = select_headers(&headers.fields, &names);
    let data = signed_data(&selected, &field.name, &without_b_value(&field.raw_value), canon);
    if !verify_with_public(algorithm, &public, &data, &sig) {
        return fail(check, DkimResult::Fail, "signature mismatch");
    }
    check.result = DkimResult::Pass;
    check
}
