use std::path::Path;

use serde::{Deserialize, Serialize};

/// Spacing the harness keeps between two sends to one target unless the
/// operator opts into a shorter one for a lab server they run.
pub const DEFAULT_MIN_INTERVAL_SECS: u64 = 600;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Credentials {
    pub username: String,
    pub password: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImapConfig {
    pub host: String,
    #[serde(default = "default_imap_port")]
    pub port: u16,
    /// Implicit TLS from the first byte.
    #[serde(default = "yes")]
    pub tls: bool,
    pub credentials: Credentials,
    #[serde(default = "default_mailbox")]
    pub mailbox: String,
}

fn default_imap_port() -> u16 {
    993
}

fn default_mailbox() -> String {
    "INBOX".into()
}

fn default_smtp_port() -> u16 {
    25
}

fn yes() -> bool {
    true
}

fn default_interval() -> u64 {
    DEFAULT_MIN_INTERVAL_SECS
}

/// One operator-owned mail server.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetConfig {
    pub smtp_host: String,
    #[serde(default = "default_smtp_port")]
    pub smtp_port: u16,
    /// Upgrade with STARTTLS when the server offers it.
    #[serde(default = "yes")]
    pub use_starttls: bool,
    /// Skip certificate validation. For lab servers with self-signed certs.
    #[serde(default)]
    pub tls_insecure: bool,
    pub auth: Option<Credentials>,
    pub imap: Option<ImapConfig>,
    /// Replaces the case's envelope recipients, which name fictional
    /// mailboxes.
    #[serde(default)]
    pub recipients: Vec<String>,
    #[serde(default = "default_interval")]
    pub min_interval_seconds: u64,
    /// Required for any interval below the default.
    #[serde(default)]
    pub reduced_safety_lab_interval: bool,
    #[serde(default)]
    pub consent_ack: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum TargetError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Toml(#[from] toml::de::Error),
    #[error("min_interval_seconds must be at least 1")]
    ZeroInterval,
    #[error("min_interval_seconds {0} is below {DEFAULT_MIN_INTERVAL_SECS}; set reduced_safety_lab_interval = true to allow it against your own lab server")]
    IntervalNeedsOptIn(u64),
}

impl TargetConfig {
    /// A target with defaults and no consent.
    pub fn new(smtp_host: impl Into<String>, smtp_port: u16) -> Self {
        Self {
            smtp_host: smtp_host.into(),
            smtp_port,
            use_starttls: true,
            tls_insecure: false,
            auth: None,
            imap: None,
            recipients: Vec::new(),
            min_interval_seconds: DEFAULT_MIN_INTERVAL_SECS,
            reduced_safety_lab_interval: false,
            consent_ack: false,
        }
    }

    pub fn parse(text: &str) -> Result<Self, TargetError> {
        let t: Self = toml::from_str(text)?;
        t.validate()?;
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<Self, TargetError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| TargetError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<(), TargetError> {
        if self.min_interval_seconds == 0 {
            return Err(TargetError::ZeroInterval);
        }
        if self.min_interval_seconds < DEFAULT_MIN_INTERVAL_SECS && !self.reduced_safety_lab_interval {
            return Err(TargetError::IntervalNeedsOptIn(self.min_interval_seconds));
        }
        Ok(())
    }

    /// Rate-limit key for the SMTP side.
    pub fn smtp_key(&self) -> String {
        format!("smtp://{}:{}", self.smtp_host.to_ascii_lowercase(), self.smtp_port)
    }

    pub fn min_interval(&self) -> std::time::Duration {
        std::time::Duration::from_secs(self.min_interval_seconds)
    }
}

impl ImapConfig {
    pub fn key(&self) -> String {
        format!("imap://{}:{}", self.host.to_ascii_lowercase(), self.port)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_safe() {
        let t = TargetConfig::parse("smtp_host = \"mx.lab.test\"\n").unwrap();
        assert_eq!(t.smtp_port, 25);
        assert_eq!(t.min_interval_seconds, 600);
        assert!(!t.consent_ack);
        assert!(t.use_starttls && !t.tls_insecure);
    }

    #[test]
    fn short_interval_needs_the_lab_flag() {
        let short = "smtp_host = \"mx\"\nmin_interval_seconds = 5\n";
        assert!(matches!(TargetConfig::parse(short), Err(TargetError::IntervalNeedsOptIn(5))));
        let t = TargetConfig::parse(&format!("{short}reduced_safety_lab_interval = true\n")).unwrap();
        assert_eq!(t.min_interval_seconds, 5);
        let zero = "smtp_host = \"mx\"\nmin_interval_seconds = 0\nreduced_safety_lab_interval = true\n";
        assert!(matches!(TargetConfig::parse(zero), Err(TargetError::ZeroInterval)));
    }

    #[test]
    fn imap_section() {
        let t = TargetConfig::parse(
            "smtp_host = \"mx\"\n[imap]\nhost = \"imap.lab\"\ncredentials = { username = \"u\", password = \"p\" }\n",
        )
        .unwrap();
        let i = t.imap.unwrap();
        assert_eq!((i.port, i.mailbox.as_str(), i.tls), (993, "INBOX", true));
        assert!(TargetConfig::parse("smtp_host = \"mx\"\nbogus = 1\n").is_err());
    }
}
