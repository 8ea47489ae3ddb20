//! `Authentication-Results` text: written by receivers and ARC sealers,
//! read back by renderers and by ARC consumers.

use serde::{Deserialize, Serialize};

use super::dkim::DkimResult;
use super::dmarc::DmarcResult;
use super::spf::{IdentitySource, SpfResult};
use super::AuthVerdict;

pub const AUTHENTICATION_RESULTS: &str = "Authentication-Results";

/// One `method=result` clause with its properties.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResultClause {
    pub method: String,
    pub result: String,
    pub props: Vec<(String, String)>,
}

impl ResultClause {
    pub fn prop(&self, name: &str) -> Option<&str> {
        self.props.iter().find(|(n, _)| n.eq_ignore_ascii_case(name)).map(|(_, v)| v.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClaimedResults {
    pub authserv_id: String,
    pub clauses: Vec<ResultClause>,
}

impl ClaimedResults {
    pub fn method(&self, method: &str) -> impl Iterator<Item = &ResultClause> {
        let m = method.to_owned();
        self.clauses.iter().filter(move |c| c.method.eq_ignore_ascii_case(&m))
    }

    /// `(result, header.from)` of the first dmarc clause.
    pub fn dmarc(&self) -> Option<(DmarcResult, Option<&str>)> {
        let c = self.method("dmarc").next()?;
        let r = match c.result.to_ascii_lowercase().as_str() {
            "pass" => DmarcResult::Pass,
            "fail" => DmarcResult::Fail,
            "none" => DmarcResult::None,
            _ => DmarcResult::TempError,
        };
        Some((r, c.prop("header.from")))
    }
}

/// Render a verdict as the value of an Authentication-Results field (or
/// the body of an ARC-Authentication-Results field).
pub fn format_results(authserv_id: &str, v: &AuthVerdict) -> String {
    let mut parts = vec![authserv_id.to_owned()];
    let spf_prop = match v.spf.identity_source {
        IdentitySource::MailFrom => "smtp.mailfrom",
        IdentitySource::Helo => "smtp.helo",
    };
    parts.push(format!("spf={} {spf_prop}={}", v.spf.result.as_str(), v.spf.identity_domain));
    if v.dkim.is_empty() {
        parts.push("dkim=none".into());
    }
    for d in &v.dkim {
        parts.push(format!("dkim={} header.d={} header.s={}", d.result.as_str(), d.domain, d.selector));
    }
    let from = v.dmarc.from_domain.as_deref().unwrap_or("");
    parts.push(format!("dmarc={} header.from={from}", v.dmarc.result.as_str()));
    if let Some(arc) = &v.arc {
        parts.push(format!("arc={}", if arc.chain_valid { "pass" } else { "fail" }));
    }
    parts.join(";\r\n\t")
}

/// Lenient reader for Authentication-Results values.
pub fn parse_results(value: &str) -> Option<ClaimedResults> {
    let unfolded: String = value.chars().filter(|&c| c != '\r' && c != '\n').collect();
    let mut parts = unfolded.split(';').map(str::trim);
    let authserv_id = parts.next()?.split_whitespace().next()?.to_owned();
    let mut clauses = Vec::new();
    for part in parts {
        let mut tokens = part.split_whitespace();
        let Some((method, result)) = tokens.next().and_then(|t| t.split_once('=')) else {
            continue;
        };
        let props = tokens
            .filter_map(|t| t.split_once('='))
            .map(|(n, v)| (n.to_owned(), v.trim_matches('"').to_owned()))
            .collect();
        clauses.push(ResultClause { method: method.to_owned(), result: result.to_owned(), props });
    }
    Some(ClaimedResults { authserv_id, clauses })
}

/// The verdict a dishonest sealer reports: every mechanism passed.
pub fn falsified(v: &AuthVerdict) -> AuthVerdict {
    let mut f = v.clone();
    f.spf.result = SpfResult::Pass;
    for d in &mut f.dkim {
        d.result = DkimResult::Pass;
    }
    f.dmarc.result = DmarcResult::Pass;
    f
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::auth::{AlignedVia, DmarcOutcome, Policy, SpfOutcome};

    fn verdict() -> AuthVerdict {
        AuthVerdict {
            spf: SpfOutcome {
                result: SpfResult::None,
                identity_domain: "attack.com".into(),
                identity_source: IdentitySource::Helo,
            },
            dkim: vec![],
            dmarc: DmarcOutcome {
                result: DmarcResult::None,
                aligned_via: AlignedVia::None,
                policy_applied: Policy::None,
                from_domain: Some("a.com".into()),
                record_domain: None,
                published_policy: None,
            },
            arc: None,
        }
    }

    #[test]
    fn format_then_parse() {
        let text = format_results("mx.b.com", &verdict());
        let c = parse_results(&text).unwrap();
        assert_eq!(c.authserv_id, "mx.b.com");
        assert_eq!(c.method("spf").next().unwrap().prop("smtp.helo"), Some("attack.com"));
        assert_eq!(c.method("dkim").next().unwrap().result, "none");
        assert_eq!(c.dmarc(), Some((DmarcResult::None, Some("a.com"))));
    }

    #[test]
    fn falsified_claims_pass() {
        let f = falsified(&verdict());
        let c = parse_results(&format_results("fwd", &f)).unwrap();
        assert_eq!(c.dmarc().unwrap().0, DmarcResult::Pass);
        assert_eq!(c.method("spf").next().unwrap().result, "pass");
    }

    #[test]
    fn tolerates_odd_input() {
        assert!(parse_results("").is_none());
        let c = parse_results("x; garbage; dmarc=pass").unwrap();
        assert_eq!(c.clauses.len(), 1);
    }
}
