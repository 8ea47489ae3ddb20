//! Look-alike detection for displayed domains.

use std::collections::BTreeMap;

use unicode_script::{Script, UnicodeScript};

/// Per-codepoint mapping from a look-alike to the Latin letter it imitates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusableTable {
    map: BTreeMap<char, char>,
}

const DEFAULT_PAIRS: &[(char, char)] = &[
    // Cyrillic
    ('а', 'a'),
    ('в', 'b'),
    ('с', 'c'),
    ('ԁ', 'd'),
    ('е', 'e'),
    ('һ', 'h'),
    ('і', 'i'),
    ('ј', 'j'),
    ('к', 'k'),
    ('ӏ', 'l'),
    ('м', 'm'),
    ('о', 'o'),
    ('р', 'p'),
    ('ԛ', 'q'),
    ('ѕ', 's'),
    ('т', 't'),
    ('ц', 'u'),
    ('ѵ', 'v'),
    ('ԝ', 'w'),
    ('х', 'x'),
    ('у', 'y'),
    ('А', 'A'),
    ('В', 'B'),
    ('С', 'C'),
    ('Е', 'E'),
    ('Н', 'H'),
    ('І', 'I'),
    ('Ј', 'J'),
    ('К', 'K'),
    ('М', 'M'),
    ('О', 'O'),
    ('Р', 'P'),
    ('Ѕ', 'S'),
    ('Т', 'T'),
    ('Х', 'X'),
    ('Ү', 'Y'),
    // Greek
    ('α', 'a'),
    ('ε', 'e'),
    ('ι', 'i'),
    ('κ', 'k'),
    ('ν', 'v'),
    ('ο', 'o'),
    ('ρ', 'p'),
    ('τ', 't'),
    ('υ', 'u'),
    ('χ', 'x'),
    ('Α', 'A'),
    ('Β', 'B'),
    ('Ε', 'E'),
    ('Η', 'H'),
    ('Ι', 'I'),
    ('Κ', 'K'),
    ('Μ', 'M'),
    ('Ν', 'N'),
    ('Ο', 'O'),
    ('Ρ', 'P'),
    ('Τ', 'T'),
    ('Χ', 'X'),
    ('Υ', 'Y'),
    ('Ζ', 'Z'),
];

impl Default for ConfusableTable {
    fn default() -> Self {
        Self { map: DEFAULT_PAIRS.iter().copied().collect() }
    }
}

impl ConfusableTable {
    pub fn empty() -> Self {
        Self { map: BTreeMap::new() }
    }

    pub fn insert(&mut self, lookalike: char, target: char) {
        self.map.insert(lookalike, target);
    }

    pub fn target_of(&self, c: char) -> Option<char> {
        self.map.get(&c).copied()
    }

    /// Look-alikes for a Latin letter, in table order.
    pub fn lookalikes(&self, latin: char) -> Vec<char> {
        self.map.iter().filter(|(_, &t)| t == latin).map(|(&c, _)| c).collect()
    }

    /// Replace every look-alike by its target, then ASCII-lowercase.
    pub fn skeleton(&self, s: &str) -> String {
        s.chars()
            .map(|c| self.target_of(c).unwrap_or(c))
            .collect::<String>()
            .to_ascii_lowercase()
    }
}

pub fn skeleton(s: &str) -> String {
    ConfusableTable::default().skeleton(s)
}

/// True when one label mixes letters from more than one script.
pub fn mixed_script(domain: &str) -> bool {
    domain.split('.').any(|label| {
        let mut seen: Option<Script> = None;
        for c in label.chars() {
            let s = c.script();
            if matches!(s, Script::Common | Script::Inherited | Script::Unknown) {
                continue;
            }
            match seen {
                None => seen = Some(s),
                Some(prev) if prev != s => return true,
                _ => {}
            }
        }
        false
    })
}

/// Unicode form of a domain; names that do not decode are returned as is.
pub fn domain_to_unicode(domain: &str) -> String {
    if !domain.split('.').any(|l| l.len() > 4 && l.get(..4).is_some_and(|p| p.eq_ignore_ascii_case("xn--"))) {
        return domain.to_owned();
    }
    match idna::domain_to_unicode(domain) {
        (s, Ok(())) => s,
        _ => domain.to_owned(),
    }
}

/// ASCII (punycode) form of a domain; names that cannot be converted are
/// lowercased and returned otherwise unchanged.
pub fn domain_to_ascii(domain: &str) -> String {
    if domain.is_ascii() {
        return domain.to_ascii_lowercase();
    }
    idna::domain_to_ascii(domain).unwrap_or_else(|_| domain.to_lowercase())
}

/// Whether `domain` imitates one of `protected`: it is not one of them but
/// shares a skeleton with one, or one of its labels mixes scripts.
pub fn is_homograph(domain: &str, protected: &[String], table: &ConfusableTable) -> bool {
    let unicode = domain_to_unicode(domain);
    if mixed_script(&unicode) {
        return true;
    }
    let ascii = domain_to_ascii(&unicode);
    let sk = table.skeleton(&unicode);
    protected
        .iter()
        .any(|p| !p.eq_ignore_ascii_case(&ascii) && table.skeleton(p) == sk)
}

/// What a reader perceives as the same address: equal skeletons, ignoring
/// ASCII case.
pub fn perceived_equal(a: &str, b: &str) -> bool {
    let t = ConfusableTable::default();
    t.skeleton(a.trim()) == t.skeleton(b.trim())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn punycode_round_trip() {
        // Computed independently with Python's `"рaypal.com".encode("idna")`.
        assert_eq!(domain_to_ascii("рaypal.com"), "xn--aypal-uye.com");
        assert_eq!(domain_to_unicode("xn--aypal-uye.com"), "рaypal.com");
        assert_eq!(domain_to_unicode("paypal.com"), "paypal.com");
        assert_eq!(domain_to_unicode("a\u{FFFF}bc.com"), "a\u{FFFF}bc.com");
    }

    #[test]
    fn skeletons() {
        assert_eq!(skeleton("рaypal.com"), "paypal.com");
        assert_eq!(skeleton("PayPal.com"), "paypal.com");
        assert!(perceived_equal("admin@рaypal.com", "admin@paypal.com"));
        assert!(!perceived_equal("admin@xn--aypal-uye.com", "admin@paypal.com"));
    }

    #[test]
    fn homographs() {
        let protected = vec!["paypal.com".to_owned()];
        let t = ConfusableTable::default();
        assert!(is_homograph("xn--aypal-uye.com", &protected, &t));
        assert!(!is_homograph("paypal.com", &protected, &t));
        assert!(!is_homograph("attack.com", &protected, &t));
        // Mixed scripts are flagged even without a protected match.
        assert!(is_homograph("bаnk.com", &[], &t));
        // A whole-Cyrillic label is one script.
        assert!(!mixed_script("пример.com"));
    }
}
