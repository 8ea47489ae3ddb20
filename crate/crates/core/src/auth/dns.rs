use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::net::IpAddr;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum RecordType {
    Txt,
    Mx,
    A,
    Aaaa,
}

impl fmt::Display for RecordType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RecordType::Txt => "TXT",
            RecordType::Mx => "MX",
            RecordType::A => "A",
            RecordType::Aaaa => "AAAA",
        })
    }
}

impl FromStr for RecordType {
    type Err = ZoneError;

    fn from_str(s: &str) -> Result<Self, ZoneError> {
        match s.to_ascii_uppercase().as_str() {
            "TXT" => Ok(RecordType::Txt),
            "MX" => Ok(RecordType::Mx),
            "A" => Ok(RecordType::A),
            "AAAA" => Ok(RecordType::Aaaa),
            _ => Err(ZoneError::UnknownType(s.to_owned())),
        }
    }
}

/// A lookup that could not be answered. An empty answer is not an error.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("DNS lookup for {name} failed: {reason}")]
pub struct DnsError {
    pub name: String,
    pub reason: String,
}

/// Source of DNS answers. Implementations must be safe to query from
/// several threads at once.
pub trait Resolver: Send + Sync {
    fn txt(&self, name: &str) -> Result<Vec<String>, DnsError>;
    /// `(preference, exchange)` pairs.
    fn mx(&self, name: &str) -> Result<Vec<(u16, String)>, DnsError>;
    /// A and AAAA answers together.
    fn addrs(&self, name: &str) -> Result<Vec<IpAddr>, DnsError>;
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ZoneError {
    #[error("line {line}: expected `<name> <TYPE> <value>`")]
    Syntax { line: usize },
    #[error("unknown record type `{0}`")]
    UnknownType(String),
    #[error("line {line}: bad value `{value}`")]
    BadValue { line: usize, value: String },
}

/// Canonical form of a DNS name: lowercase, no trailing dot.
pub fn canonical_name(name: &str) -> String {
    name.trim().trim_end_matches('.').to_ascii_lowercase()
}

/// In-memory zone: the resolver used for simulation and tests.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DnsZone {
    records: BTreeMap<(String, RecordType), Vec<String>>,
    /// Names whose lookups fail, for exercising temperror paths.
    failing: BTreeSet<String>,
}

impl DnsZone {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, rtype: RecordType, value: impl Into<String>) -> &mut Self {
        self.records.entry((canonical_name(name), rtype)).or_default().push(value.into());
        self
    }

    pub fn txt_record(&mut self, name: &str, value: impl Into<String>) -> &mut Self {
        self.add(name, RecordType::Txt, value)
    }

    pub fn remove(&mut self, name: &str, rtype: RecordType) {
        self.records.remove(&(canonical_name(name), rtype));
    }

    pub fn fail_on(&mut self, name: &str) -> &mut Self {
        self.failing.insert(canonical_name(name));
        self
    }

    pub fn get(&self, name: &str, rtype: RecordType) -> &[String] {
        self.records
            .get(&(canonical_name(name), rtype))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn records(&self) -> impl Iterator<Item = (&str, RecordType, &str)> {
        self.records
            .iter()
            .flat_map(|((n, t), vs)| vs.iter().map(move |v| (n.as_str(), *t, v.as_str())))
    }

    pub fn merge(&mut self, other: &DnsZone) {
        for (n, t, v) in other.records() {
            self.add(n, t, v);
        }
        self.failing.extend(other.failing.iter().cloned());
    }

    fn check(&self, name: &str) -> Result<String, DnsError> {
        let n = canonical_name(name);
        if self.failing.contains(&n) {
            return Err(DnsError { name: n, reason: "SERVFAIL".into() });
        }
        Ok(n)
    }

    /// Parse the flat zone format: one `<name> <TYPE> <value>` per line,
    /// `#` comments, TXT values optionally quoted (adjacent quoted strings
    /// are concatenated).
    pub fn parse(text: &str) -> Result<Self, ZoneError> {
        let mut zone = DnsZone::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((name, rtype, value)) = split_record(line) else {
                return Err(ZoneError::Syntax { line: line_no });
            };
            let rtype: RecordType = rtype.parse()?;
            let value = value.trim();
            let bad = || ZoneError::BadValue { line: line_no, value: value.to_owned() };
            let value = match rtype {
                RecordType::Txt if value.starts_with('"') => unquote_txt(value).ok_or_else(bad)?,
                RecordType::Txt => value.to_owned(),
                RecordType::A => {
                    let ip: std::net::Ipv4Addr = value.parse().map_err(|_| bad())?;
                    ip.to_string()
                }
                RecordType::Aaaa => {
                    let ip: std::net::Ipv6Addr = value.parse().map_err(|_| bad())?;
                    ip.to_string()
                }
                RecordType::Mx => {
                    parse_mx(value).ok_or_else(bad)?;
                    value.to_owned()
                }
            };
            zone.add(name, rtype, value);
        }
        Ok(zone)
    }

    pub fn to_zone_file(&self) -> String {
        let mut out = String::new();
        for (n, t, v) in self.records() {
            let v = match t {
                RecordType::Txt => quote_txt(v),
                _ => v.to_owned(),
            };
            out.push_str(&format!("{n} {t} {v}\n"));
        }
        out
    }
}

fn split_record(line: &str) -> Option<(&str, &str, &str)> {
    let (name, rest) = line.split_once(char::is_whitespace)?;
    let (rtype, value) = rest.trim_start().split_once(char::is_whitespace)?;
    let value = value.trim();
    (!value.is_empty()).then_some((name, rtype, value))
}

fn parse_mx(value: &str) -> Option<(u16, String)> {
    let mut it = value.split_whitespace();
    let first = it.next()?;
    match it.next() {
        Some(host) => Some((first.parse().ok()?, canonical_name(host))),
        None => Some((0, canonical_name(first))),
    }
}

fn unquote_txt(value: &str) -> Option<String> {
    let mut out = String::new();
    let mut chars = value.chars().peekable();
    loop {
        while chars.peek().is_some_and(|c| c.is_whitespace()) {
            chars.next();
        }
        match chars.next() {
            None => return Some(out),
            Some('"') => {}
            Some(_) => return None,
        }
        loop {
            match chars.next()? {
                '"' => break,
                '\\' => out.push(chars.next()?),
                c => out.push(c),
            }
        }
    }
}

fn quote_txt(v: &str) -> String {
    format!("\"{}\"", v.replace('\\', "\\\\").replace('"', "\\\""))
}

impl Resolver for DnsZone {
    fn txt(&self, name: &str) -> Result<Vec<String>, DnsError> {
        let n = self.check(name)?;
        Ok(self.get(&n, RecordType::Txt).to_vec())
    }

    fn mx(&self, name: &str) -> Result<Vec<(u16, String)>, DnsError> {
        let n = self.check(name)?;
        let mut v: Vec<_> = self.get(&n, RecordType::Mx).iter().filter_map(|s| parse_mx(s)).collect();
        v.sort();
        Ok(v)
    }

    fn addrs(&self, name: &str) -> Result<Vec<IpAddr>, DnsError> {
        let n = self.check(name)?;
        Ok(self
            .get(&n, RecordType::A)
            .iter()
            .chain(self.get(&n, RecordType::Aaaa))
            .filter_map(|s| s.parse().ok())
            .collect())
    }
}

impl<R: Resolver + ?Sized> Resolver for &R {
    fn txt(&self, name: &str) -> Result<Vec<String>, DnsError> {
        (**self).txt(name)
    }
    fn mx(&self, name: &str) -> Result<Vec<(u16, String)>, DnsError> {
        (**self).mx(name)
    }
    fn addrs(&self, name: &str) -> Result<Vec<IpAddr>, DnsError> {
        (**self).addrs(name)
    }
}
