use serde::{Deserialize, Serialize};

use super::dkim::{DkimOutcome, DkimResult};
use super::dns::{canonical_name, Resolver};
use super::org_domain::{org_domain, SuffixSet};
use super::sig::{parse_tags, tag};
use super::spf::{SpfOutcome, SpfResult};
use crate::profile::QuirkProfile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DmarcResult {
    Pass,
    Fail,
    None,
    TempError,
}

impl DmarcResult {
    pub fn as_str(self) -> &'static str {
        match self {
            DmarcResult::Pass => "pass",
            DmarcResult::Fail => "fail",
            DmarcResult::None => "none",
            DmarcResult::TempError => "temperror",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlignedVia {
    Spf,
    Dkim,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    None,
    Quarantine,
    Reject,
}

impl Policy {
    fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" => Some(Policy::None),
            "quarantine" => Some(Policy::Quarantine),
            "reject" => Some(Policy::Reject),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Alignment {
    Relaxed,
    Strict,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DmarcRecord {
    pub p: Policy,
    pub sp: Option<Policy>,
    pub adkim: Alignment,
    pub aspf: Alignment,
    /// Parsed for completeness; evaluation always applies the policy to
    /// every message.
    pub pct: u8,
}

impl DmarcRecord {
    pub fn parse(txt: &str) -> Option<Self> {
        let tags = parse_tags(txt)?;
        if tags.first().map(|(n, v)| (n.as_str(), v.as_str())) != Some(("v", "DMARC1")) {
            return None;
        }
        let align = |name| match tag(&tags, name).map(|v| v.to_ascii_lowercase()) {
            None => Some(Alignment::Relaxed),
            Some(v) if v == "r" => Some(Alignment::Relaxed),
            Some(v) if v == "s" => Some(Alignment::Strict),
            Some(_) => None,
        };
        Some(Self {
            p: Policy::parse(tag(&tags, "p")?)?,
            sp: match tag(&tags, "sp") {
                Some(v) => Some(Policy::parse(v)?),
                None => None,
            },
            adkim: align("adkim")?,
            aspf: align("aspf")?,
            pct: tag(&tags, "pct").map_or(Some(100), |v| v.parse().ok().filter(|&n| n <= 100))?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DmarcOutcome {
    pub result: DmarcResult,
    pub aligned_via: AlignedVia,
    /// The published policy when the result is fail, otherwise `none`.
    pub policy_applied: Policy,
    pub from_domain: Option<String>,
    /// Where the record was found: the From domain or its organizational
    /// domain.
    pub record_domain: Option<String>,
    pub published_policy: Option<Policy>,
}

impl DmarcOutcome {
    fn none(from_domain: Option<String>) -> Self {
        Self {
            result: DmarcResult::None,
            aligned_via: AlignedVia::None,
            policy_applied: Policy::None,
            from_domain,
            record_domain: None,
            published_policy: None,
        }
    }
}

pub fn aligned(identifier: &str, from_domain: &str, mode: Alignment, suffixes: &SuffixSet) -> bool {
    let a = canonical_name(identifier);
    let b = canonical_name(from_domain);
    if a.is_empty() || b.is_empty() {
        return false;
    }
    match mode {
        Alignment::Strict => a == b,
        Alignment::Relaxed => match (org_domain(&a, suffixes), org_domain(&b, suffixes)) {
            (Ok(x), Ok(y)) => x == y,
            _ => a == b,
        },
    }
}

fn lookup(resolver: &dyn Resolver, domain: &str) -> Result<Option<DmarcRecord>, ()> {
    let txt = resolver.txt(&format!("_dmarc.{domain}")).map_err(|_| ())?;
    Ok(txt.iter().find_map(|t| DmarcRecord::parse(t)))
}

/// Evaluate DMARC for the domain the profile extracted from `From`. `None`
/// means no identity could be extracted, which yields `none`.
pub fn dmarc_evaluate(
    from_domain: Option<&str>,
    spf: &SpfOutcome,
    dkim: &[DkimOutcome],
    resolver: &dyn Resolver,
    profile: &QuirkProfile,
    suffixes: &SuffixSet,
) -> DmarcOutcome {
    let Some(from) = from_domain.map(canonical_name).filter(|d| !d.is_empty()) else {
        return DmarcOutcome::none(None);
    };
    let mut out = DmarcOutcome::none(Some(from.clone()));
    let temp = |mut o: DmarcOutcome| {
        o.result = DmarcResult::TempError;
        o
    };

    let (record, record_domain, is_org) = match lookup(resolver, &from) {
        Err(()) => return temp(out),
        Ok(Some(r)) => (r, from.clone(), false),
        Ok(None) => {
            let org = match org_domain(&from, suffixes) {
                Ok(o) if o != from && profile.dmarc_org_fallback => o,
                _ => return out,
            };
            match lookup(resolver, &org) {
                Err(()) => return temp(out),
                Ok(Some(r)) => (r, org, true),
                Ok(None) => return out,
            }
        }
    };

    let policy = if is_org { record.sp.unwrap_or(record.p) } else { record.p };
    out.record_domain = Some(record_domain);
    out.published_policy = Some(policy);

    let spf_ok = spf.result == SpfResult::Pass && aligned(&spf.identity_domain, &from, record.aspf, suffixes);
    let dkim_ok = dkim
        .iter()
        .any(|d| d.result == DkimResult::Pass && aligned(&d.domain, &from, record.adkim, suffixes));

    if spf_ok || dkim_ok {
        out.result = DmarcResult::Pass;
        out.aligned_via = if spf_ok { AlignedVia::Spf } else { AlignedVia::Dkim };
    } else {
        out.result = DmarcResult::Fail;
        out.policy_applied = policy;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::auth::spf::IdentitySource;
    use crate::auth::DnsZone;
    use crate::profile::strict_rfc;

    fn spf(result: SpfResult, domain: &str) -> SpfOutcome {
        SpfOutcome { result, identity_domain: domain.into(), identity_source: IdentitySource::MailFrom }
    }

    fn dkim(result: DkimResult, domain: &str) -> DkimOutcome {
        DkimOutcome { domain: domain.into(), selector: "s".into(), result, reason: None }
    }

    fn zone() -> DnsZone {
        let mut z = DnsZone::new();
        z.txt_record("_dmarc.a.com", "v=DMARC1; p=reject");
        z.txt_record("_dmarc.google.com", "v=DMARC1; p=reject; sp=none");
        z.txt_record("_dmarc.s.com", "v=DMARC1; p=quarantine; adkim=s; aspf=s");
        z
    }

    fn eval(from: &str, s: SpfOutcome, d: &[DkimOutcome]) -> DmarcOutcome {
        dmarc_evaluate(Some(from), &s, d, &zone(), &strict_rfc(), &SuffixSet::default())
    }

    #[test]
    fn spf_exact_alignment() {
        let o = eval("a.com", spf(SpfResult::Pass, "a.com"), &[]);
        assert_eq!((o.result, o.aligned_via), (DmarcResult::Pass, AlignedVia::Spf));
        assert_eq!(o.policy_applied, Policy::None);
    }

    #[test]
    fn relaxed_dkim_alignment() {
        let o = eval("mail.a.com", spf(SpfResult::Fail, "x.net"), &[dkim(DkimResult::Pass, "a.com")]);
        assert_eq!((o.result, o.aligned_via), (DmarcResult::Pass, AlignedVia::Dkim));
        assert_eq!(o.record_domain.as_deref(), Some("a.com"));
    }

    #[test]
    fn org_record_for_subdomain() {
        let o = eval("sub.google.com", spf(SpfResult::None, "sub.google.com"), &[]);
        assert_eq!(o.record_domain.as_deref(), Some("google.com"));
        assert_eq!(o.published_policy, Some(Policy::None));
        assert_eq!(o.result, DmarcResult::Fail);
        assert_eq!(o.policy_applied, Policy::None);

        let mut p = strict_rfc();
        p.dmarc_org_fallback = false;
        let o = dmarc_evaluate(
            Some("sub.google.com"),
            &spf(SpfResult::None, "sub.google.com"),
            &[],
            &zone(),
            &p,
            &SuffixSet::default(),
        );
        assert_eq!(o.result, DmarcResult::None);
    }

    #[test]
    fn failure_carries_policy() {
        let o = eval("a.com", spf(SpfResult::Fail, "a.com"), &[dkim(DkimResult::Pass, "attack.com")]);
        assert_eq!(o.result, DmarcResult::Fail);
        assert_eq!(o.policy_applied, Policy::Reject);
    }

    #[test]
    fn strict_alignment() {
        let o = eval("s.com", spf(SpfResult::Pass, "mail.s.com"), &[dkim(DkimResult::Pass, "mail.s.com")]);
        assert_eq!(o.result, DmarcResult::Fail);
        assert_eq!(o.policy_applied, Policy::Quarantine);
    }

    #[test]
    fn no_identity_or_record_is_none() {
        let none = dmarc_evaluate(None, &spf(SpfResult::Pass, "a.com"), &[], &zone(), &strict_rfc(), &SuffixSet::default());
        assert_eq!(none.result, DmarcResult::None);
        assert_eq!(eval("nodmarc.net", spf(SpfResult::Fail, "nodmarc.net"), &[]).result, DmarcResult::None);
    }

    #[test]
    fn resolver_failure() {
        let mut z = zone();
        z.fail_on("_dmarc.a.com");
        let o = dmarc_evaluate(Some("a.com"), &spf(SpfResult::Pass, "a.com"), &[], &z, &strict_rfc(), &SuffixSet::default());
        assert_eq!(o.result, DmarcResult::TempError);
    }

    #[test]
    fn record_parsing() {
        assert!(DmarcRecord::parse("v=DMARC1; p=none; pct=50").is_some_and(|r| r.pct == 50));
        assert!(DmarcRecord::parse("p=none; v=DMARC1").is_none());
        assert!(DmarcRecord::parse("v=DMARC1").is_none());
        assert!(DmarcRecord::parse("v=DMARC1; p=bogus").is_none());
        assert!(DmarcRecord::parse("v=DMARC1; p=none; pct=200").is_none());
    }
}
