//! SPF, DKIM, DMARC and a minimal ARC, all resolving through [`Resolver`].

mod arc;
mod canon;
mod dkim;
mod dmarc;
mod dns;
mod keys;
mod org_domain;
mod results;
mod sig;
mod spf;

use serde::{Deserialize, Serialize};

pub use arc::{arc_seal, arc_validate, next_arc_instance, ArcError, ArcOutcome, ARC_AUTHENTICATION_RESULTS, ARC_MESSAGE_SIGNATURE, ARC_SEAL};
pub use canon::{canon_body, canon_header, Canon, CanonPair};
pub use dkim::{
    dkim_sign, dkim_summary, dkim_verify, DkimError, DkimOutcome, DkimResult, DEFAULT_SIGNED_HEADERS, DKIM_SIGNATURE,
};
pub use dmarc::{aligned, dmarc_evaluate, AlignedVia, Alignment, DmarcOutcome, DmarcRecord, DmarcResult, Policy};
pub use dns::{canonical_name, DnsError, DnsZone, RecordType, Resolver, ZoneError};
pub use keys::{DkimAlgorithm, DkimKeyPair, KeyError};
pub use org_domain::{org_domain, OrgDomainError, SuffixSet, DEFAULT_SUFFIXES};
pub use results::{falsified, format_results, parse_results, ClaimedResults, ResultClause, AUTHENTICATION_RESULTS};
pub use spf::{check_host, spf_evaluate, IdentitySource, SpfOutcome, SpfResult, LOOKUP_LIMIT};

/// Everything a receiver concluded about one message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthVerdict {
    pub spf: SpfOutcome,
    pub dkim: Vec<DkimOutcome>,
    pub dmarc: DmarcOutcome,
    pub arc: Option<ArcOutcome>,
}

impl AuthVerdict {
    pub fn dkim_result(&self) -> DkimResult {
        dkim_summary(&self.dkim)
    }

    /// Broken structural promises, empty when the verdict is coherent:
    /// a DMARC pass names a passing mechanism, and a HELO identity only
    /// appears for a null sender.
    pub fn invariant_violations(&self, mail_from_present: bool) -> Vec<String> {
        let mut v = Vec::new();
        if self.dmarc.result == DmarcResult::Pass {
            let from = self.dmarc.from_domain.as_deref().unwrap_or("");
            let backed = match self.dmarc.aligned_via {
                AlignedVia::Spf => self.spf.result == SpfResult::Pass && !from.is_empty(),
                AlignedVia::Dkim => self.dkim.iter().any(|d| d.result == DkimResult::Pass),
                AlignedVia::None => false,
            };
            if !backed {
                v.push(format!("dmarc pass via {:?} without a passing mechanism", self.dmarc.aligned_via));
            }
        }
        if self.spf.identity_source == IdentitySource::Helo && mail_from_present {
            v.push("spf checked HELO although MAIL FROM was present".into());
        }
        v
    }
}
