use crate::chain::ChainReport;
use crate::corpus::AttackId;

pub const SIC_ADVISORY: &str =
    "Rendering: enable sender inconsistency checks and show a UI notification when the displayed sender is not the verified one.";

/// Mitigation for the weakness an attack id exploits.
pub fn advisory_for(id: AttackId) -> &'static str {
    match id {
        AttackId::A1 => "Sending: require MAIL FROM to equal the authenticated user.",
        AttackId::A2 => "Sending: require exactly one From mailbox, equal to the authenticated sender.",
        AttackId::A3 => "Receiving: evaluate SPF against the HELO name when MAIL FROM is empty.",
        AttackId::A4 => "Receiving: reject messages carrying more than one From field (strict multiple-From rejection).",
        AttackId::A5 => "Receiving: reject From fields that hold more than one mailbox.",
        AttackId::A6 => {
            "Receiving: reject From addresses with routes, null members, NUL or invisible characters instead of truncating them."
        }
        AttackId::A7 => "Receiving: decode encoded-words before extracting the From domain for DMARC (decode before verify).",
        AttackId::A8 => "Receiving: apply the organizational domain's DMARC policy to subdomains without a record.",
        AttackId::A9 => "Forwarding: confirm forward targets with their owner before forwarding.",
        AttackId::A10 => {
            "Forwarding: verify before signing; never add DKIM signatures to mail that did not pass DKIM verification."
        }
        AttackId::A11 => "Forwarding: record verification results faithfully in ARC seals and honour ARC only from trusted sealers.",
        AttackId::A12 => {
            "Rendering: raise a homograph alert for look-alike or mixed-script domains and set Unicode characters apart in the address."
        }
        AttackId::A13 => "Rendering: display the address exactly as verified; never drop characters from it.",
        AttackId::A14 => "Rendering: strip or flag bidirectional control characters in sender addresses.",
    }
}

/// Advice for a successful attack, one entry per id plus the UI
/// notification advice when the receiver runs no sender consistency check.
/// Empty for a failed attack.
pub fn advise(report: &ChainReport) -> Vec<String> {
    if !report.success {
        return Vec::new();
    }
    let mut out: Vec<String> = report.ids.iter().map(|id| format!("{id}: {}", advisory_for(*id))).collect();
    if !report.deployment.sic {
        out.push(SIC_ADVISORY.to_owned());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{run_chain, scenario_by_name};
    use crate::corpus::{default_bindings, generate, witness, GenOptions};

    fn run(id: AttackId, scenario: &str) -> ChainReport {
        let c = generate(id, &default_bindings(id), &GenOptions { variant: witness(id).1, seed: 0 }).unwrap();
        run_chain(&c, &scenario_by_name(scenario).unwrap()).unwrap()
    }

    #[test]
    fn a10_mentions_signing() {
        let a = advise(&run(AttackId::A10, "aliyun-like"));
        assert!(a[0].starts_with("A10:") && a[0].contains("DKIM"), "{a:?}");
    }

    #[test]
    fn a12_mentions_homograph() {
        let a = advise(&run(AttackId::A12, "gmail-like"));
        assert!(a.iter().any(|s| s.contains("homograph")));
    }

    #[test]
    fn failure_gets_nothing() {
        assert!(advise(&run(AttackId::A12, "strict-rfc")).is_empty());
    }
}
