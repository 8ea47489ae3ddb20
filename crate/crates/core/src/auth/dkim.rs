use serde::{Deserialize, Serialize};

use super::canon::CanonPair;
use super::dns::Resolver;
use super::keys::DkimKeyPair;
use super::sig::{sign_fields, verify_field};
use crate::header::RawMessage;

pub const DKIM_SIGNATURE: &str = "DKIM-Signature";

/// Headers signed when the caller does not choose.
pub const DEFAULT_SIGNED_HEADERS: &[&str] = &["from", "to", "subject", "date", "message-id"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DkimResult {
    Pass,
    Fail,
    None,
    PermError,
    TempError,
}

impl DkimResult {
    pub fn as_str(self) -> &'static str {
        match self {
            DkimResult::Pass => "pass",
            DkimResult::Fail => "fail",
            DkimResult::None => "none",
            DkimResult::PermError => "permerror",
            DkimResult::TempError => "temperror",
        }
    }
}

/// Result of one DKIM-Signature field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DkimOutcome {
    pub domain: String,
    pub selector: String,
    pub result: DkimResult,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DkimError {
    #[error("signed header list must include From")]
    MissingFromHeader,
}

/// Sign and prepend a DKIM-Signature field.
pub fn dkim_sign(
    msg: &RawMessage,
    key: &DkimKeyPair,
    canon: CanonPair,
    signed_headers: &[&str],
) -> Result<RawMessage, DkimError> {
    if !signed_headers.iter().any(|h| h.eq_ignore_ascii_case("from")) {
        return Err(DkimError::MissingFromHeader);
    }
    let names: Vec<String> = signed_headers.iter().map(|s| s.to_string()).collect();
    let headers = msg.lenient_headers();
    let value = sign_fields(&headers, &msg.body, DKIM_SIGNATURE, "v=1", key, canon, &names);
    let mut out = msg.clone();
    out.prepend_field(DKIM_SIGNATURE, &value);
    Ok(out)
}

/// One outcome per DKIM-Signature field, top to bottom. No signatures
/// gives an empty list, which reads as `none`.
pub fn dkim_verify(msg: &RawMessage, resolver: &dyn Resolver) -> Vec<DkimOutcome> {
    let headers = msg.lenient_headers();
    headers
        .fields
        .iter()
        .filter(|f| f.is(DKIM_SIGNATURE))
        .map(|f| {
            let c = verify_field(&headers, &msg.body, f, ("v", Some("1")), true, resolver);
            DkimOutcome { domain: c.domain, selector: c.selector, result: c.result, reason: c.reason }
        })
        .collect()
}

/// Overall DKIM result: pass if any signature passes, none if unsigned.
pub fn dkim_summary(outcomes: &[DkimOutcome]) -> DkimResult {
    if outcomes.is_empty() {
        DkimResult::None
    } else if outcomes.iter().any(|o| o.result == DkimResult::Pass) {
        DkimResult::Pass
    } else if outcomes.iter().any(|o| o.result == DkimResult::TempError) {
        DkimResult::TempError
    } else if outcomes.iter().all(|o| o.result == DkimResult::PermError) {
        DkimResult::PermError
    } else {
        DkimResult::Fail
    }
}
