//! The simulated internet: DNS, signing keys, and who runs which MTA.

use std::collections::BTreeMap;
use std::net::IpAddr;
use std::sync::{Arc, OnceLock};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::auth::{DkimKeyPair, DnsZone, RecordType, Resolver, SuffixSet};
use crate::profile::{builtin_profiles, strict_rfc, QuirkProfile};

/// DNS plus the DKIM keys MTAs sign with, keyed by signing domain.
#[derive(Debug, Clone, Default)]
pub struct World {
    pub zone: DnsZone,
    pub keys: BTreeMap<String, DkimKeyPair>,
}

impl World {
    pub fn new(zone: DnsZone) -> Self {
        Self { zone, keys: BTreeMap::new() }
    }

    /// Add a key and publish its record.
    pub fn add_key(&mut self, key: DkimKeyPair) {
        self.zone.txt_record(&key.dns_name(), key.public_record());
        self.keys.insert(key.domain.to_ascii_lowercase(), key);
    }

    pub fn key_for(&self, domain: &str) -> Option<&DkimKeyPair> {
        self.keys.get(&domain.to_ascii_lowercase())
    }

    /// Address of the MTA serving `domain`: its first A or AAAA record.
    pub fn mta_ip(&self, domain: &str) -> Option<IpAddr> {
        self.zone.addrs(domain).ok()?.into_iter().next()
    }
}

pub const ATTACKER_SPF: &str = "v=spf1 ip4:203.0.113.66 -all";

/// Zone of the shipped fixture world. The attacker's MTA is 203.0.113.66;
/// it is authorised for `attack.com` and the look-alike domains.
pub const WORLD_ZONE: &str = r#"
# legitimate senders
a.com                 A    192.0.2.10
a.com                 TXT  "v=spf1 ip4:192.0.2.10 -all"
_dmarc.a.com          TXT  "v=DMARC1; p=reject"
a.org                 A    192.0.2.20
a.org                 TXT  "v=spf1 ip4:192.0.2.20 -all"
yahoo.com             A    192.0.2.30
yahoo.com             TXT  "v=spf1 ip4:192.0.2.30 -all"
_dmarc.yahoo.com      TXT  "v=DMARC1; p=reject"
aliyun.com            A    192.0.2.40
aliyun.com            TXT  "v=spf1 ip4:192.0.2.40 -all"
_dmarc.aliyun.com     TXT  "v=DMARC1; p=reject"
fwd.net               A    192.0.2.50
fwd.net               TXT  "v=spf1 ip4:192.0.2.50 -all"
_dmarc.fwd.net        TXT  "v=DMARC1; p=none"
paypal.com            A    198.51.100.5
paypal.com            TXT  "v=spf1 ip4:198.51.100.5 -all"
_dmarc.paypal.com     TXT  "v=DMARC1; p=reject"
gmail.com             A    198.51.100.10
gmail.com             TXT  "v=spf1 ip4:198.51.100.10 -all"
_dmarc.gmail.com      TXT  "v=DMARC1; p=none"
google.com            A    198.51.100.11
google.com            TXT  "v=spf1 ip4:198.51.100.11 -all"
_dmarc.google.com     TXT  "v=DMARC1; p=reject; sp=none"
b.com                 A    198.51.100.20
b.com                 MX   10 b.com
b.com                 TXT  "v=spf1 ip4:198.51.100.20 -all"
# attacker
attack.com            A    203.0.113.66
attack.com            TXT  "v=spf1 ip4:203.0.113.66 -all"
_dmarc.attack.com     TXT  "v=DMARC1; p=none"
ail.com               A    203.0.113.66
ail.com               TXT  "v=spf1 ip4:203.0.113.66 -all"
_dmarc.ail.com        TXT  "v=DMARC1; p=none"
xn--aypal-uye.com     A    203.0.113.66
xn--aypal-uye.com     TXT  "v=spf1 ip4:203.0.113.66 -all"
_dmarc.xn--aypal-uye.com TXT "v=DMARC1; p=none"
"#;

/// Domains whose MTAs sign outgoing or forwarded mail in the fixture world.
pub const SIGNING_DOMAINS: &[&str] = &["a.com", "yahoo.com", "aliyun.com", "fwd.net"];

pub const DEFAULT_SELECTOR: &str = "s1";

/// Domains a renderer protects against look-alikes by default.
pub fn default_protected_domains() -> Vec<String> {
    ["a.com", "paypal.com", "gmail.com", "aliyun.com", "yahoo.com"].map(String::from).to_vec()
}

/// Deterministic fixture key for `domain`.
pub fn fixture_key(domain: &str) -> DkimKeyPair {
    let seed = domain.bytes().fold(0xC0FFEEu64, |h, b| h.wrapping_mul(31).wrapping_add(b as u64));
    DkimKeyPair::generate_rsa(domain, DEFAULT_SELECTOR, 1024, &mut ChaCha20Rng::seed_from_u64(seed))
        .expect("1024-bit RSA generation")
}

/// The shipped world. Built once per process; key generation dominates.
pub fn builtin_world() -> Arc<World> {
    static WORLD: OnceLock<Arc<World>> = OnceLock::new();
    WORLD
        .get_or_init(|| {
            let mut w = World::new(DnsZone::parse(WORLD_ZONE).expect("fixture zone parses"));
            for d in SIGNING_DOMAINS {
                w.add_key(fixture_key(d));
            }
            Arc::new(w)
        })
        .clone()
}

/// Which profile plays each role in a delivery.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub sender: QuirkProfile,
    pub forwarder: QuirkProfile,
    pub receiver: QuirkProfile,
    pub world: Arc<World>,
    pub protected_domains: Vec<String>,
    pub suffixes: SuffixSet,
}

impl Scenario {
    /// Every role played by `profile`, in the shipped world.
    pub fn uniform(profile: QuirkProfile) -> Self {
        Self::roles(&profile.name.clone(), profile.clone(), profile.clone(), profile)
    }

    pub fn roles(name: &str, sender: QuirkProfile, forwarder: QuirkProfile, receiver: QuirkProfile) -> Self {
        Self {
            name: name.to_owned(),
            sender,
            forwarder,
            receiver,
            world: builtin_world(),
            protected_domains: default_protected_domains(),
            suffixes: SuffixSet::default(),
        }
    }

    pub fn resolver(&self) -> &dyn Resolver {
        &self.world.zone
    }

    pub fn has_record(&self, name: &str, t: RecordType) -> bool {
        !self.world.zone.get(name, t).is_empty()
    }
}

pub const CASE1_SCENARIO: &str = "case1";
pub const CASE2_SCENARIO: &str = "case2";

/// One uniform scenario per shipped profile, then the two mixed ones used
/// by the combined attacks.
pub fn builtin_scenarios() -> Vec<Scenario> {
    let p = |n: &str| crate::profile::profile_by_name(n).expect("builtin profile");
    let mut out: Vec<Scenario> = builtin_profiles().into_iter().map(Scenario::uniform).collect();
    out.push(Scenario::roles(CASE1_SCENARIO, p("yahoo-like"), strict_rfc(), p("icloud-like")));
    out.push(Scenario::roles(CASE2_SCENARIO, strict_rfc(), p("aliyun-like"), p("gmail-like")));
    out
}

pub fn scenario_by_name(name: &str) -> Option<Scenario> {
    builtin_scenarios().into_iter().find(|s| s.name == name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::auth::check_host;
    use crate::auth::SpfResult;

    #[test]
    fn world_is_consistent() {
        let w = builtin_world();
        for d in SIGNING_DOMAINS {
            let ip = w.mta_ip(d).unwrap();
            assert_eq!(check_host(ip, d, &w.zone), SpfResult::Pass, "{d}");
            assert!(w.key_for(d).is_some());
        }
        let attacker: IpAddr = "203.0.113.66".parse().unwrap();
        for d in ["attack.com", "ail.com", "xn--aypal-uye.com"] {
            assert_eq!(check_host(attacker, d, &w.zone), SpfResult::Pass, "{d}");
        }
        assert_eq!(check_host(attacker, "a.com", &w.zone), SpfResult::Fail);
    }

    #[test]
    fn fixture_keys_are_deterministic() {
        assert_eq!(fixture_key("x.com").public_record(), fixture_key("x.com").public_record());
    }

    #[test]
    fn scenario_names_are_unique() {
        let all = builtin_scenarios();
        let mut names: Vec<_> = all.iter().map(|s| s.name.clone()).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), all.len());
        assert!(scenario_by_name("case1").is_some());
    }
}
