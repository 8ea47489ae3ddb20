use std::collections::BTreeSet;

use super::dns::canonical_name;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OrgDomainError {
    #[error("`{0}` is itself a public suffix")]
    DomainIsSuffix(String),
    #[error("empty domain")]
    Empty,
}

/// Public suffixes known to the harness. A small embedded list stands in
/// for the full public suffix list; load more with [`SuffixSet::extend`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuffixSet(BTreeSet<String>);

pub const DEFAULT_SUFFIXES: &[&str] = &["com", "net", "org", "co.uk", "com.cn", "example", "test"];

impl Default for SuffixSet {
    fn default() -> Self {
        Self(DEFAULT_SUFFIXES.iter().map(|s| s.to_string()).collect())
    }
}

impl SuffixSet {
    pub fn empty() -> Self {
        Self(BTreeSet::new())
    }

    pub fn extend<I: IntoIterator<Item = S>, S: AsRef<str>>(&mut self, suffixes: I) {
        self.0.extend(suffixes.into_iter().map(|s| canonical_name(s.as_ref())));
    }

    /// One suffix per line; `//` and `#` comments, as in the public suffix
    /// list file.
    pub fn parse(text: &str) -> Self {
        let mut s = Self::empty();
        s.extend(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with("//") && !l.starts_with('#')),
        );
        s
    }

    pub fn contains(&self, suffix: &str) -> bool {
        self.0.contains(suffix)
    }
}

/// Registrable domain: one label beyond the longest matching suffix. An
/// unknown top-level label counts as a suffix on its own.
pub fn org_domain(domain: &str, suffixes: &SuffixSet) -> Result<String, OrgDomainError> {
    let d = canonical_name(domain);
    if d.is_empty() {
        return Err(OrgDomainError::Empty);
    }
    let labels: Vec<&str> = d.split('.').collect();
    // longest suffix = earliest starting index that matches
    let suffix_start = (0..labels.len())
        .find(|&i| suffixes.contains(&labels[i..].join(".")))
        .unwrap_or(labels.len() - 1);
    if suffix_start == 0 {
        return Err(OrgDomainError::DomainIsSuffix(d));
    }
    Ok(labels[suffix_start - 1..].join("."))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn org(d: &str) -> Result<String, OrgDomainError> {
        org_domain(d, &SuffixSet::default())
    }

    #[test]
    fn examples() {
        assert_eq!(org("mail.google.com").unwrap(), "google.com");
        assert_eq!(org("a.b.co.uk").unwrap(), "b.co.uk");
        assert_eq!(org("com"), Err(OrgDomainError::DomainIsSuffix("com".into())));
        assert_eq!(org("co.uk"), Err(OrgDomainError::DomainIsSuffix("co.uk".into())));
    }

    #[test]
    fn unknown_tld_is_its_own_suffix() {
        assert_eq!(org("x.y.zz").unwrap(), "y.zz");
        assert!(org("zz").is_err());
    }

    #[test]
    fn case_and_trailing_dot() {
        assert_eq!(org("Mail.A.COM.").unwrap(), "a.com");
    }

    #[test]
    fn loaded_list() {
        let s = SuffixSet::parse("// comment\nuk\nco.uk\n");
        assert_eq!(org_domain("x.co.uk", &s).unwrap(), "x.co.uk");
        assert_eq!(org_domain("x.uk", &s).unwrap(), "x.uk");
    }
}
