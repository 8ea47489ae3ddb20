//! Minimal ARC (RFC 8617): sealing and chain validation, without the
//! finer points of the cv= state machine.

use std::collections::BTreeMap;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::canon::{canon_header, Canon, CanonPair};
use super::dkim::{DkimResult, DEFAULT_SIGNED_HEADERS};
use super::dmarc::DmarcResult;
use super::dns::{canonical_name, Resolver};
use super::keys::{verify_with_public, DkimAlgorithm, DkimKeyPair};
use super::results::{format_results, parse_results};
use super::sig::{fetch_key, parse_tags, sign_fields, strip_ws, tag, verify_field};
use super::AuthVerdict;
use crate::header::{HeaderField, ParsedHeaders, RawMessage};

pub const ARC_AUTHENTICATION_RESULTS: &str = "ARC-Authentication-Results";
pub const ARC_MESSAGE_SIGNATURE: &str = "ARC-Message-Signature";
pub const ARC_SEAL: &str = "ARC-Seal";

/// Highest instance number the protocol allows.
pub const MAX_INSTANCE: u32 = 50;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArcOutcome {
    pub chain_valid: bool,
    pub instance_count: u32,
    /// What the newest ARC-Authentication-Results claims about DMARC.
    pub claimed_dmarc: Option<DmarcResult>,
    pub claimed_header_from: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ArcError {
    #[error("instance {got} does not follow existing chain (expected {expected})")]
    InstanceGap { expected: u32, got: u32 },
}

fn instance_of(field: &HeaderField) -> Option<u32> {
    let v = String::from_utf8_lossy(&field.unfolded()).into_owned();
    let first = v.split(';').next()?.trim();
    let (name, n) = first.split_once('=')?;
    (name.trim() == "i").then(|| n.trim().parse().ok()).flatten()
}

fn highest_instance(headers: &ParsedHeaders) -> u32 {
    headers
        .fields
        .iter()
        .filter(|f| f.is(ARC_SEAL))
        .filter_map(instance_of)
        .max()
        .unwrap_or(0)
}

/// Instance number the next sealer must use.
pub fn next_arc_instance(msg: &RawMessage) -> u32 {
    highest_instance(&msg.lenient_headers()) + 1
}

/// Seal `msg` as hop `instance`. The ARC-Authentication-Results field
/// records `prior` exactly as given, so a caller can seal a verdict that
/// was never actually reached.
pub fn arc_seal(msg: &RawMessage, key: &DkimKeyPair, instance: u32, prior: &AuthVerdict) -> Result<RawMessage, ArcError> {
    let headers = msg.lenient_headers();
    let expected = highest_instance(&headers) + 1;
    if instance != expected || instance > MAX_INSTANCE {
        return Err(ArcError::InstanceGap { expected, got: instance });
    }
    let mut out = msg.clone();

    let aar = format!(" i={instance}; {}", format_results(&key.domain, prior));
    out.prepend_field(ARC_AUTHENTICATION_RESULTS, aar.as_bytes());

    let names: Vec<String> = DEFAULT_SIGNED_HEADERS
        .iter()
        .chain(&["dkim-signature"])
        .map(|s| s.to_string())
        .collect();
    let headers = out.lenient_headers();
    let ams = sign_fields(
        &headers,
        &out.body,
        ARC_MESSAGE_SIGNATURE,
        &format!("i={instance}"),
        key,
        CanonPair::RELAXED,
        &names,
    );
    out.prepend_field(ARC_MESSAGE_SIGNATURE, &ams);

    let cv = if instance == 1 { "none" } else { "pass" };
    let unsigned = format!(
        " i={instance}; a={}; cv={cv}; d={}; s={}; b=",
        key.algorithm, key.domain, key.selector
    );
    let sealed_headers = out.lenient_headers();
    let sets = arc_sets(&sealed_headers);
    let data = seal_data(&sets, instance, unsigned.as_bytes());
    let b = STANDARD.encode(key.sign(&data));
    out.prepend_field(ARC_SEAL, format!("{unsigned}{b}").as_bytes());
    Ok(out)
}

#[derive(Default)]
struct ArcSet<'a> {
    aar: Vec<&'a HeaderField>,
    ams: Vec<&'a HeaderField>,
    seal: Vec<&'a HeaderField>,
}

fn arc_sets(headers: &ParsedHeaders) -> BTreeMap<u32, ArcSet<'_>> {
    let mut sets: BTreeMap<u32, ArcSet<'_>> = BTreeMap::new();
    for f in &headers.fields {
        let is_arc = f.is(ARC_AUTHENTICATION_RESULTS) || f.is(ARC_MESSAGE_SIGNATURE) || f.is(ARC_SEAL);
        let Some(i) = is_arc.then(|| instance_of(f)).flatten() else {
            continue;
        };
        let set = sets.entry(i).or_default();
        if f.is(ARC_AUTHENTICATION_RESULTS) {
            set.aar.push(f);
        } else if f.is(ARC_MESSAGE_SIGNATURE) {
            set.ams.push(f);
        } else {
            set.seal.push(f);
        }
    }
    sets
}

/// Data an ARC-Seal at `instance` signs: every set up to and including its
/// own, in AAR, AMS, AS order, with its own `b=` empty and no final CRLF.
fn seal_data(sets: &BTreeMap<u32, ArcSet<'_>>, instance: u32, own_unsigned: &[u8]) -> Vec<u8> {
    let mut data = Vec::new();
    for i in 1..=instance {
        let Some(set) = sets.get(&i) else { continue };
        for f in set.aar.iter().chain(&set.ams) {
            data.extend_from_slice(&canon_header(&f.name, &f.raw_value, Canon::Relaxed));
        }
        if i < instance {
            for f in &set.seal {
                data.extend_from_slice(&canon_header(&f.name, &f.raw_value, Canon::Relaxed));
            }
        }
    }
    let mut own = canon_header(ARC_SEAL, own_unsigned, Canon::Relaxed);
    own.truncate(own.len() - 2);
    data.extend_from_slice(&own);
    data
}

/// Validate the ARC chain. `None` when the message carries no ARC fields.
pub fn arc_validate(msg: &RawMessage, resolver: &dyn Resolver) -> Option<ArcOutcome> {
    let headers = msg.lenient_headers();
    let sets = arc_sets(&headers);
    let n = *sets.keys().max()?;
    let mut out = ArcOutcome {
        chain_valid: false,
        instance_count: n,
        claimed_dmarc: None,
        claimed_header_from: None,
        reason: None,
    };
    if let Some(aar) = sets.get(&n).and_then(|s| s.aar.first()) {
        let v = String::from_utf8_lossy(&aar.unfolded()).into_owned();
        let body = v.split_once(';').map_or("", |(_, rest)| rest);
        if let Some((r, from)) = parse_results(body).and_then(|c| c.dmarc().map(|(r, f)| (r, f.map(str::to_owned)))) {
            out.claimed_dmarc = Some(r);
            out.claimed_header_from = from;
        }
    }
    let invalid = |mut o: ArcOutcome, why: String| {
        o.reason = Some(why);
        Some(o)
    };
    if n > MAX_INSTANCE {
        return invalid(out, format!("instance {n} exceeds {MAX_INSTANCE}"));
    }
    for i in 1..=n {
        let complete = sets
            .get(&i)
            .is_some_and(|s| s.aar.len() == 1 && s.ams.len() == 1 && s.seal.len() == 1);
        if !complete {
            return invalid(out, format!("instance {i} is missing or duplicated"));
        }
    }
    for i in 1..=n {
        let set = &sets[&i];
        let ams = verify_field(&headers, &msg.body, set.ams[0], ("i", Some(&i.to_string())), false, resolver);
        if ams.result != DkimResult::Pass {
            return invalid(out, format!("message signature {i}: {}", ams.reason.unwrap_or_default()));
        }
        if let Err(why) = verify_seal(&sets, i, set.seal[0], resolver) {
            return invalid(out, format!("seal {i}: {why}"));
        }
    }
    out.chain_valid = true;
    Some(out)
}

fn verify_seal(
    sets: &BTreeMap<u32, ArcSet<'_>>,
    instance: u32,
    seal: &HeaderField,
    resolver: &dyn Resolver,
) -> Result<(), String> {
    let value = String::from_utf8_lossy(&seal.unfolded()).into_owned();
    let tags = parse_tags(&value).ok_or("malformed tag list")?;
    let cv = tag(&tags, "cv").ok_or("missing cv=")?;
    let cv_ok = if instance == 1 { cv == "none" } else { cv == "pass" };
    if !cv_ok {
        return Err(format!("cv={cv}"));
    }
    let algorithm = tag(&tags, "a").and_then(DkimAlgorithm::from_tag).ok_or("unsupported algorithm")?;
    let domain = canonical_name(tag(&tags, "d").ok_or("missing d=")?);
    let selector = tag(&tags, "s").ok_or("missing s=")?;
    let sig = STANDARD
        .decode(strip_ws(tag(&tags, "b").ok_or("missing b=")?))
        .map_err(|_| "b= is not base64")?;
    let public = fetch_key(resolver, selector, &domain, algorithm).map_err(|(_, why)| why)?;
    let data = seal_data(sets, instance, &super::sig::without_b_value(&seal.raw_value));
    if verify_with_public(algorithm, &public, &data, &sig) {
        Ok(())
    } else {
        Err("signature mismatch".into())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::auth::results::falsified;
    use crate::auth::spf::{IdentitySource, SpfOutcome, SpfResult};
    use crate::auth::{AlignedVia, DmarcOutcome, DnsZone, Policy};
    use crate::header::HeaderBlock;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use std::net::{IpAddr, Ipv4Addr};

    fn key(domain: &str, seed: u64) -> DkimKeyPair {
        DkimKeyPair::generate_rsa(domain, "arc", 1024, &mut ChaCha20Rng::seed_from_u64(seed)).unwrap()
    }

    fn msg() -> RawMessage {
        let mut m = RawMessage::new("h", IpAddr::V4(Ipv4Addr::LOCALHOST), vec!["bob@b.com".into()]);
        let mut h = HeaderBlock::new();
        h.push("From", "<Alice@a.com>").push("To", "<bob@b.com>").push("Subject", "hi");
        m.header_block = h.into_bytes();
        m.body = b"body\r\n".to_vec();
        m
    }

    fn verdict(dmarc: DmarcResult) -> AuthVerdict {
        AuthVerdict {
            spf: SpfOutcome { result: SpfResult::Fail, identity_domain: "attack.com".into(), identity_source: IdentitySource::MailFrom },
            dkim: vec![],
            dmarc: DmarcOutcome {
                result: dmarc,
                aligned_via: AlignedVia::None,
                policy_applied: Policy::None,
                from_domain: Some("a.com".into()),
                record_domain: None,
                published_policy: None,
            },
            arc: None,
        }
    }

    fn zone(keys: &[&DkimKeyPair]) -> DnsZone {
        let mut z = DnsZone::new();
        for k in keys {
            z.txt_record(&k.dns_name(), k.public_record());
        }
        z
    }

    #[test]
    fn single_hop() {
        let k = key("fwd.net", 1);
        let sealed = arc_seal(&msg(), &k, 1, &verdict(DmarcResult::None)).unwrap();
        let out = arc_validate(&sealed, &zone(&[&k])).unwrap();
        assert!(out.chain_valid, "{:?}", out.reason);
        assert_eq!(out.instance_count, 1);
        assert_eq!(out.claimed_dmarc, Some(DmarcResult::None));
    }

    #[test]
    fn two_hops() {
        let k1 = key("fwd.net", 1);
        let k2 = key("relay.org", 2);
        let once = arc_seal(&msg(), &k1, 1, &verdict(DmarcResult::None)).unwrap();
        assert_eq!(arc_seal(&once, &k2, 3, &verdict(DmarcResult::None)), Err(ArcError::InstanceGap { expected: 2, got: 3 }));
        let twice = arc_seal(&once, &k2, 2, &verdict(DmarcResult::Fail)).unwrap();
        let out = arc_validate(&twice, &zone(&[&k1, &k2])).unwrap();
        assert!(out.chain_valid, "{:?}", out.reason);
        assert_eq!(out.instance_count, 2);
        assert_eq!(out.claimed_dmarc, Some(DmarcResult::Fail));
    }

    #[test]
    fn tampered_header_breaks_chain() {
        let k = key("fwd.net", 1);
        let mut sealed = arc_seal(&msg(), &k, 1, &verdict(DmarcResult::None)).unwrap();
        sealed.header_block = String::from_utf8(sealed.header_block)
            .unwrap()
            .replace("Subject: hi", "Subject: urgent")
            .into_bytes();
        let out = arc_validate(&sealed, &zone(&[&k])).unwrap();
        assert!(!out.chain_valid);
    }

    #[test]
    fn falsified_verdict_is_recorded_verbatim() {
        let k = key("fwd.net", 1);
        let sealed = arc_seal(&msg(), &k, 1, &falsified(&verdict(DmarcResult::None))).unwrap();
        let out = arc_validate(&sealed, &zone(&[&k])).unwrap();
        assert!(out.chain_valid);
        assert_eq!(out.claimed_dmarc, Some(DmarcResult::Pass));
        let text = String::from_utf8(sealed.header_block).unwrap();
        assert!(text.contains("dmarc=pass header.from=a.com"));
    }

    #[test]
    fn missing_set_member() {
        let k = key("fwd.net", 1);
        let sealed = arc_seal(&msg(), &k, 1, &verdict(DmarcResult::None)).unwrap();
        let mut headers = sealed.lenient_headers();
        headers.fields.retain(|f| !f.is(ARC_MESSAGE_SIGNATURE));
        let mut m = sealed.clone();
        m.header_block = crate::header::serialize_fields(&headers.fields);
        assert!(!arc_validate(&m, &zone(&[&k])).unwrap().chain_valid);
        assert!(arc_validate(&msg(), &zone(&[&k])).is_none());
    }
}
