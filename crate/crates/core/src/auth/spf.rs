//! SPF (RFC 7208) without the macro language.

use std::net::IpAddr;

use serde::{Deserialize, Serialize};

use super::dns::{canonical_name, Resolver};
use crate::header::address_domain;
use crate::profile::QuirkProfile;

/// Lookups allowed per evaluation before the record is declared broken.
pub const LOOKUP_LIMIT: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpfResult {
    Pass,
    Fail,
    SoftFail,
    Neutral,
    None,
    TempError,
    PermError,
}

impl SpfResult {
    pub fn as_str(self) -> &'static str {
        match self {
            SpfResult::Pass => "pass",
            SpfResult::Fail => "fail",
            SpfResult::SoftFail => "softfail",
            SpfResult::Neutral => "neutral",
            SpfResult::None => "none",
            SpfResult::TempError => "temperror",
            SpfResult::PermError => "permerror",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IdentitySource {
    MailFrom,
    Helo,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpfOutcome {
    pub result: SpfResult,
    pub identity_domain: String,
    pub identity_source: IdentitySource,
}

/// Check the MAIL FROM domain, or the HELO name for a null reverse-path
/// when the profile falls back to it. Without the fallback a null sender
/// gets `none`.
pub fn spf_evaluate(
    client_ip: IpAddr,
    helo_domain: &str,
    mail_from: Option<&str>,
    resolver: &dyn Resolver,
    profile: &QuirkProfile,
) -> SpfOutcome {
    match mail_from {
        Some(addr) => {
            let domain = canonical_name(address_domain(addr).unwrap_or(addr));
            SpfOutcome {
                result: check_host(client_ip, &domain, resolver),
                identity_domain: domain,
                identity_source: IdentitySource::MailFrom,
            }
        }
        None => {
            let domain = canonical_name(helo_domain);
            let result = if profile.spf_helo_fallback {
                check_host(client_ip, &domain, resolver)
            } else {
                SpfResult::None
            };
            SpfOutcome { result, identity_domain: domain, identity_source: IdentitySource::Helo }
        }
    }
}

/// The `check_host()` function.
pub fn check_host(ip: IpAddr, domain: &str, resolver: &dyn Resolver) -> SpfResult {
    let mut lookups = 0;
    match evaluate(ip, &canonical_name(domain), resolver, &mut lookups) {
        Ok(r) => r,
        Err(e) => e,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Qualifier {
    Pass,
    Fail,
    SoftFail,
    Neutral,
}

impl Qualifier {
    fn result(self) -> SpfResult {
        match self {
            Qualifier::Pass => SpfResult::Pass,
            Qualifier::Fail => SpfResult::Fail,
            Qualifier::SoftFail => SpfResult::SoftFail,
            Qualifier::Neutral => SpfResult::Neutral,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Mechanism {
    All,
    Include(String),
    A(Option<String>, Cidr),
    Mx(Option<String>, Cidr),
    Ip(IpAddr, u8),
    Exists(String),
    Ptr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Cidr {
    v4: u8,
    v6: u8,
}

#[derive(Debug, Default)]
struct Record {
    terms: Vec<(Qualifier, Mechanism)>,
    redirect: Option<String>,
}

/// Result of one evaluation, with errors short-circuiting as `Err`.
type Eval = Result<SpfResult, SpfResult>;

fn evaluate(ip: IpAddr, domain: &str, resolver: &dyn Resolver, lookups: &mut usize) -> Eval {
    if domain.is_empty() || !domain.contains('.') {
        return Ok(SpfResult::None);
    }
    let txt = resolver.txt(domain).map_err(|_| SpfResult::TempError)?;
    let records: Vec<&String> = txt.iter().filter(|t| is_spf(t)).collect();
    let text = match records.as_slice() {
        [] => return Ok(SpfResult::None),
        [one] => one.as_str(),
        _ => return Err(SpfResult::PermError),
    };
    let record = parse_record(text)?;

    for (q, mech) in &record.terms {
        if matches_mechanism(ip, domain, mech, resolver, lookups)? {
            return Ok(q.result());
        }
    }
    if let Some(target) = &record.redirect {
        count(lookups)?;
        return match evaluate(ip, &canonical_name(target), resolver, lookups)? {
            SpfResult::None => Err(SpfResult::PermError),
            r => Ok(r),
        };
    }
    Ok(SpfResult::Neutral)
}

fn is_spf(txt: &str) -> bool {
    let t = txt.trim_start();
    t.get(..6).is_some_and(|p| p.eq_ignore_ascii_case("v=spf1")) && t[6..].chars().next().is_none_or(|c| c == ' ')
}

fn count(lookups: &mut usize) -> Result<(), SpfResult> {
    *lookups += 1;
    if *lookups > LOOKUP_LIMIT {
        Err(SpfResult::PermError)
    } else {
        Ok(())
    }
}

fn parse_record(text: &str) -> Result<Record, SpfResult> {
    if text.contains('%') {
        // macros are not supported
        return Err(SpfResult::PermError);
    }
    let mut rec = Record::default();
    let mut saw_all = false;
    for term in text.split_whitespace().skip(1) {
        // modifiers: name=value with no ':' or '/' before the '='
        if let Some((name, value)) = term.split_once('=') {
            if !name.contains(':') && !name.contains('/') {
                match name.to_ascii_lowercase().as_str() {
                    "redirect" if rec.redirect.is_none() => rec.redirect = Some(value.to_owned()),
                    "redirect" => return Err(SpfResult::PermError),
                    _ => {}
                }
                continue;
            }
        }
        let (q, rest) = match term.as_bytes()[0] {
            b'+' => (Qualifier::Pass, &term[1..]),
            b'-' => (Qualifier::Fail, &term[1..]),
            b'~' => (Qualifier::SoftFail, &term[1..]),
            b'?' => (Qualifier::Neutral, &term[1..]),
            _ => (Qualifier::Pass, term),
        };
        let mech = parse_mechanism(rest).ok_or(SpfResult::PermError)?;
        saw_all |= mech == Mechanism::All;
        rec.terms.push((q, mech));
    }
    if saw_all {
        // redirect is ignored when the record has an `all`
        rec.redirect = None;
    }
    Ok(rec)
}

fn parse_mechanism(s: &str) -> Option<Mechanism> {
    let lower = s.to_ascii_lowercase();
    let (name, arg) = match lower.find([':', '/']) {
        Some(i) => (&lower[..i], &s[i..]),
        None => (lower.as_str(), ""),
    };
    let domain_arg = |a: &str| -> Option<Option<String>> {
        match a.strip_prefix(':') {
            Some(d) if !d.is_empty() => Some(Some(d.to_owned())),
            Some(_) => None,
            None if a.is_empty() || a.starts_with('/') => Some(None),
            None => None,
        }
    };
    match name {
        "all" if arg.is_empty() => Some(Mechanism::All),
        "include" => Some(Mechanism::Include(domain_arg(arg)??)),
        "exists" => Some(Mechanism::Exists(domain_arg(arg)??)),
        "ptr" => Some(Mechanism::Ptr),
        "a" | "mx" => {
            let (dom, cidr) = split_cidr(arg)?;
            let dom = domain_arg(dom)?;
            Some(if name == "a" { Mechanism::A(dom, cidr) } else { Mechanism::Mx(dom, cidr) })
        }
        "ip4" | "ip6" => {
            let body = arg.strip_prefix(':')?;
            let (addr, len) = match body.split_once('/') {
                Some((a, l)) => (a, Some(l.parse::<u8>().ok()?)),
                None => (body, None),
            };
            let ip: IpAddr = addr.parse().ok()?;
            match (name, ip) {
                ("ip4", IpAddr::V4(_)) => {
                    let l = len.unwrap_or(32);
                    (l <= 32).then_some(Mechanism::Ip(ip, l))
                }
                ("ip6", IpAddr::V6(_)) => {
                    let l = len.unwrap_or(128);
                    (l <= 128).then_some(Mechanism::Ip(ip, l))
                }
                _ => None,
            }
        }
        _ => None,
    }
}

/// Split `:domain/24//64` into the domain part and the prefix lengths.
fn split_cidr(arg: &str) -> Option<(&str, Cidr)> {
    let mut cidr = Cidr { v4: 32, v6: 128 };
    let (head, v6) = match arg.split_once("//") {
        Some((h, v6)) => (h, Some(v6)),
        None => (arg, None),
    };
    let (dom, v4) = match head.rfind('/') {
        Some(i) => (&head[..i], Some(&head[i + 1..])),
        None => (head, None),
    };
    if let Some(v4) = v4 {
        cidr.v4 = v4.parse().ok().filter(|&l| l <= 32)?;
    }
    if let Some(v6) = v6 {
        cidr.v6 = v6.parse().ok().filter(|&l| l <= 128)?;
    }
    Some((dom, cidr))
}

fn in_network(ip: IpAddr, net: IpAddr, len: u8) -> bool {
    match (ip, net) {
        (IpAddr::V4(a), IpAddr::V4(b)) => {
            let mask = if len == 0 { 0 } else { u32::MAX << (32 - len as u32) };
            u32::from(a) & mask == u32::from(b) & mask
        }
        (IpAddr::V6(a), IpAddr::V6(b)) => {
            let mask = if len == 0 { 0 } else { u128::MAX << (128 - len as u32) };
            u128::from(a) & mask == u128::from(b) & mask
        }
        _ => false,
    }
}

fn any_in(ip: IpAddr, addrs: &[IpAddr], cidr: Cidr) -> bool {
    let len = if ip.is_ipv4() { cidr.v4 } else { cidr.v6 };
    addrs.iter().any(|&a| in_network(ip, a, len))
}

fn matches_mechanism(
    ip: IpAddr,
    domain: &str,
    mech: &Mechanism,
    resolver: &dyn Resolver,
    lookups: &mut usize,
) -> Result<bool, SpfResult> {
    let temp = |_| SpfResult::TempError;
    Ok(match mech {
        Mechanism::All => true,
        Mechanism::Ip(net, len) => in_network(ip, *net, *len),
        Mechanism::Include(target) => {
            count(lookups)?;
            match evaluate(ip, &canonical_name(target), resolver, lookups) {
                Ok(SpfResult::Pass) => true,
                Ok(SpfResult::Fail | SpfResult::SoftFail | SpfResult::Neutral) => false,
                Ok(SpfResult::None) | Ok(SpfResult::PermError) => return Err(SpfResult::PermError),
                Ok(SpfResult::TempError) => return Err(SpfResult::TempError),
                Err(e) => return Err(e),
            }
        }
        Mechanism::A(target, cidr) => {
            count(lookups)?;
            let name = target.as_deref().map_or_else(|| domain.to_owned(), canonical_name);
            any_in(ip, &resolver.addrs(&name).map_err(temp)?, *cidr)
        }
        Mechanism::Mx(target, cidr) => {
            count(lookups)?;
            let name = target.as_deref().map_or_else(|| domain.to_owned(), canonical_name);
            let mut hit = false;
            for (_, host) in resolver.mx(&name).map_err(temp)?.into_iter().take(LOOKUP_LIMIT) {
                if any_in(ip, &resolver.addrs(&host).map_err(temp)?, *cidr) {
                    hit = true;
                    break;
                }
            }
            hit
        }
        Mechanism::Exists(target) => {
            count(lookups)?;
            !resolver.addrs(&canonical_name(target)).map_err(temp)?.is_empty()
        }
        // deprecated and never matched here, but it still costs a lookup
        Mechanism::Ptr => {
            count(lookups)?;
            false
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::auth::DnsZone;
    use crate::profile::strict_rfc;

    fn ip(s: &str) -> IpAddr {
        s.parse().unwrap()
    }

    fn zone(records: &[(&str, &str)]) -> DnsZone {
        let mut z = DnsZone::new();
        for (n, v) in records {
            z.txt_record(n, *v);
        }
        z
    }

    #[test]
    fn direct_ip_match() {
        let z = zone(&[("a.com", "v=spf1 ip4:192.0.2.10/32 -all")]);
        let out = spf_evaluate(ip("192.0.2.10"), "h", Some("x@a.com"), &z, &strict_rfc());
        assert_eq!(out.result, SpfResult::Pass);
        assert_eq!(out.identity_domain, "a.com");
        assert_eq!(out.identity_source, IdentitySource::MailFrom);
        assert_eq!(check_host(ip("192.0.2.11"), "a.com", &z), SpfResult::Fail);
    }

    #[test]
    fn null_sender_without_fallback_is_none() {
        let z = zone(&[("a.com", "v=spf1 -all")]);
        let mut p = strict_rfc();
        p.spf_helo_fallback = false;
        let out = spf_evaluate(ip("203.0.113.66"), "a.com", None, &z, &p);
        assert_eq!(out.result, SpfResult::None);
        assert_eq!(out.identity_source, IdentitySource::Helo);
        p.spf_helo_fallback = true;
        assert_eq!(spf_evaluate(ip("203.0.113.66"), "a.com", None, &z, &p).result, SpfResult::Fail);
    }

    #[test]
    fn subdomain_without_record_is_none() {
        let z = zone(&[("a.com", "v=spf1 -all")]);
        let out = spf_evaluate(ip("203.0.113.66"), "h", Some("x@mail.a.com"), &z, &strict_rfc());
        assert_eq!(out.result, SpfResult::None);
    }

    #[test]
    fn qualifiers() {
        for (rec, want) in [
            ("v=spf1 ~all", SpfResult::SoftFail),
            ("v=spf1 ?all", SpfResult::Neutral),
            ("v=spf1 +all", SpfResult::Pass),
            ("v=spf1", SpfResult::Neutral),
        ] {
            assert_eq!(check_host(ip("192.0.2.1"), "a.com", &zone(&[("a.com", rec)])), want, "{rec}");
        }
    }

    #[test]
    fn include_and_redirect() {
        let z = zone(&[
            ("a.com", "v=spf1 include:_spf.a.com -all"),
            ("_spf.a.com", "v=spf1 ip4:192.0.2.0/24 -all"),
            ("b.com", "v=spf1 redirect=a.com"),
            ("c.com", "v=spf1 include:missing.com -all"),
        ]);
        assert_eq!(check_host(ip("192.0.2.5"), "a.com", &z), SpfResult::Pass);
        assert_eq!(check_host(ip("198.51.100.1"), "a.com", &z), SpfResult::Fail);
        assert_eq!(check_host(ip("192.0.2.5"), "b.com", &z), SpfResult::Pass);
        assert_eq!(check_host(ip("192.0.2.5"), "c.com", &z), SpfResult::PermError);
    }

    #[test]
    fn a_and_mx() {
        let mut z = zone(&[("a.com", "v=spf1 a mx:b.com/24 -all")]);
        z.add("a.com", crate::auth::RecordType::A, "192.0.2.10");
        z.add("b.com", crate::auth::RecordType::Mx, "10 mx.b.com");
        z.add("mx.b.com", crate::auth::RecordType::A, "198.51.100.7");
        z.add("a.com", crate::auth::RecordType::Aaaa, "2001:db8::1");
        assert_eq!(check_host(ip("192.0.2.10"), "a.com", &z), SpfResult::Pass);
        assert_eq!(check_host(ip("198.51.100.200"), "a.com", &z), SpfResult::Pass);
        assert_eq!(check_host(ip("2001:db8::1"), "a.com", &z), SpfResult::Pass);
        assert_eq!(check_host(ip("2001:db8::2"), "a.com", &z), SpfResult::Fail);
    }

    #[test]
    fn ip6_ranges() {
        let z = zone(&[("a.com", "v=spf1 ip6:2001:db8::/32 -all")]);
        assert_eq!(check_host(ip("2001:db8:1::5"), "a.com", &z), SpfResult::Pass);
        assert_eq!(check_host(ip("2001:db9::5"), "a.com", &z), SpfResult::Fail);
        assert_eq!(check_host(ip("192.0.2.1"), "a.com", &z), SpfResult::Fail);
    }

    #[test]
    fn lookup_limit() {
        let mut recs: Vec<(String, String)> = (0..11)
            .map(|i| (format!("l{i}.com"), format!("v=spf1 include:l{}.com -all", i + 1)))
            .collect();
        recs.push(("l11.com".into(), "v=spf1 +all".into()));
        let mut z = DnsZone::new();
        for (n, v) in &recs {
            z.txt_record(n, v.clone());
        }
        assert_eq!(check_host(ip("192.0.2.1"), "l0.com", &z), SpfResult::PermError);
        // ten includes deep is still allowed
        assert_eq!(check_host(ip("192.0.2.1"), "l1.com", &z), SpfResult::Pass);
    }

    #[test]
    fn malformed_and_macros() {
        for rec in ["v=spf1 bogus -all", "v=spf1 ip4:999.1.1.1 -all", "v=spf1 exists:%{i}.x.com -all"] {
            assert_eq!(check_host(ip("192.0.2.1"), "a.com", &zone(&[("a.com", rec)])), SpfResult::PermError, "{rec}");
        }
        let two = zone(&[("a.com", "v=spf1 -all"), ("a.com", "v=spf1 +all")]);
        assert_eq!(check_host(ip("192.0.2.1"), "a.com", &two), SpfResult::PermError);
        // not an SPF record at all
        assert_eq!(check_host(ip("192.0.2.1"), "a.com", &zone(&[("a.com", "v=spf10")])), SpfResult::None);
    }

    #[test]
    fn resolver_failure_is_temperror() {
        let mut z = zone(&[("a.com", "v=spf1 include:b.com -all")]);
        z.fail_on("b.com");
        assert_eq!(check_host(ip("192.0.2.1"), "a.com", &z), SpfResult::TempError);
    }

    #[test]
    fn non_ascii_txt_is_not_spf() {
        assert!(!is_spf("v=sp\u{e9}1 -all"));
        assert!(!is_spf("\u{e9}"));
        assert!(is_spf("v=spf1"));
    }
}
