//! Harness configuration and scenario documents, both TOML.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::auth::{DkimKeyPair, DnsZone, KeyError, SuffixSet, ZoneError, DEFAULT_SUFFIXES};
use crate::chain::{builtin_scenarios, builtin_world, default_protected_domains, Scenario, World};
use crate::profile::{builtin_profiles, ProfileError, QuirkProfile};

pub const CONFIG_ENV: &str = "SPOOFCHAIN_CONFIG";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Toml { path: PathBuf, source: toml::de::Error },
    #[error("{path}: does not exist")]
    Missing { path: PathBuf },
    #[error("{path}: {source}")]
    Zone { path: PathBuf, source: ZoneError },
    #[error("{path}: {source}")]
    Key { path: PathBuf, source: KeyError },
    #[error("{path}: key files are named <selector>._domainkey.<domain>.pem")]
    KeyName { path: PathBuf },
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error("unknown profile `{0}`")]
    UnknownProfile(String),
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
}

fn read(path: &Path) -> Result<String, ConfigError> {
    fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_owned(), source })
}

fn must_exist(path: &Path) -> Result<(), ConfigError> {
    if path.exists() {
        Ok(())
    } else {
        Err(ConfigError::Missing { path: path.to_owned() })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarnessConfig {
    /// Extra `*.toml` profiles; a file overrides a shipped profile of the
    /// same name.
    pub profiles_dir: Option<PathBuf>,
    /// Replaces the shipped DNS zone.
    pub zone_file: Option<PathBuf>,
    /// Signing keys named `<selector>._domainkey.<domain>.pem`.
    pub key_dir: Option<PathBuf>,
    /// Extra scenario documents.
    pub scenario_dir: Option<PathBuf>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_scenario")]
    pub default_scenario: String,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("spoofchain-out")
}

fn default_scenario() -> String {
    "strict-rfc".into()
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            profiles_dir: None,
            zone_file: None,
            key_dir: None,
            scenario_dir: None,
            output_dir: default_output_dir(),
            default_scenario: default_scenario(),
        }
    }
}

/// A delivery path in terms of profile names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    pub sender: String,
    pub forwarder: String,
    pub receiver: String,
    pub zone: Option<PathBuf>,
    #[serde(default)]
    pub keys: Vec<PathBuf>,
    pub protected_domains: Option<Vec<String>>,
    pub suffixes: Option<Vec<String>>,
}

impl HarnessConfig {
    pub fn parse(text: &str, origin: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|source| ConfigError::Toml { path: origin.to_owned(), source })
    }

    /// Load and check that every referenced path exists.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let c = Self::parse(&read(path)?, path)?;
        c.check_paths()?;
        Ok(c)
    }

    pub fn check_paths(&self) -> Result<(), ConfigError> {
        for p in [&self.profiles_dir, &self.zone_file, &self.key_dir, &self.scenario_dir].into_iter().flatten() {
            must_exist(p)?;
        }
        Ok(())
    }

    pub fn profiles(&self) -> Result<Vec<QuirkProfile>, ConfigError> {
        let mut by_name: BTreeMap<String, QuirkProfile> = BTreeMap::new();
        let mut order = Vec::new();
        for p in builtin_profiles() {
            order.push(p.name.clone());
            by_name.insert(p.name.clone(), p);
        }
        if let Some(dir) = &self.profiles_dir {
            for path in toml_files(dir)? {
                let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_owned();
                let p = QuirkProfile::from_toml(&read(&path)?, &stem)?;
                if !by_name.contains_key(&p.name) {
                    order.push(p.name.clone());
                }
                by_name.insert(p.name.clone(), p);
            }
        }
        Ok(order.into_iter().filter_map(|n| by_name.remove(&n)).collect())
    }

    pub fn profile(&self, name: &str) -> Result<QuirkProfile, ConfigError> {
        self.profiles()?
            .into_iter()
            .find(|p| p.name == name)
            .ok_or_else(|| ConfigError::UnknownProfile(name.to_owned()))
    }

    /// The shipped world unless a zone or key directory is configured.
    pub fn world(&self) -> Result<Arc<World>, ConfigError> {
        if self.zone_file.is_none() && self.key_dir.is_none() {
            return Ok(builtin_world());
        }
        let mut world = match &self.zone_file {
            Some(z) => World::new(load_zone(z)?),
            None => (*builtin_world()).clone(),
        };
        if let Some(dir) = &self.key_dir {
            must_exist(dir)?;
            let mut entries: Vec<PathBuf> = fs::read_dir(dir)
                .map_err(|source| ConfigError::Io { path: dir.clone(), source })?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|e| e == "pem"))
                .collect();
            entries.sort();
            for p in entries {
                world.add_key(load_key(&p)?);
            }
        }
        Ok(Arc::new(world))
    }

    /// Shipped scenarios rebuilt over this configuration's profiles and
    /// world, then any scenario documents.
    pub fn scenarios(&self) -> Result<Vec<Scenario>, ConfigError> {
        let profiles = self.profiles()?;
        let find = |n: &str| {
            profiles.iter().find(|p| p.name == n).cloned().ok_or_else(|| ConfigError::UnknownProfile(n.to_owned()))
        };
        let world = self.world()?;
        let mut out = Vec::new();
        for s in builtin_scenarios() {
            let mut s = Scenario::roles(&s.name, find(&s.sender.name)?, find(&s.forwarder.name)?, find(&s.receiver.name)?);
            s.world = world.clone();
            out.push(s);
        }
        for p in builtin_profiles_not_in(&profiles) {
            let mut s = Scenario::uniform(p);
            s.world = world.clone();
            out.push(s);
        }
        if let Some(dir) = &self.scenario_dir {
            for path in toml_files(dir)? {
                let doc: ScenarioFile = toml::from_str(&read(&path)?)
                    .map_err(|source| ConfigError::Toml { path: path.clone(), source })?;
                let s = doc.build(&find, world.clone())?;
                out.retain(|o| o.name != s.name);
                out.push(s);
            }
        }
        Ok(out)
    }

    pub fn scenario(&self, name: &str) -> Result<Scenario, ConfigError> {
        self.scenarios()?
            .into_iter()
            .find(|s| s.name == name)
            .ok_or_else(|| ConfigError::UnknownScenario(name.to_owned()))
    }
}

/// Profiles from a profile directory that no shipped scenario covers.
fn builtin_profiles_not_in(profiles: &[QuirkProfile]) -> Vec<QuirkProfile> {
    let shipped: Vec<String> = builtin_profiles().into_iter().map(|p| p.name).collect();
    profiles.iter().filter(|p| !shipped.contains(&p.name)).cloned().collect()
}

impl ScenarioFile {
    fn build(
        &self,
        find: &dyn Fn(&str) -> Result<QuirkProfile, ConfigError>,
        world: Arc<World>,
    ) -> Result<Scenario, ConfigError> {
        let mut s = Scenario::roles(&self.name, find(&self.sender)?, find(&self.forwarder)?, find(&self.receiver)?);
        s.world = world;
        if self.zone.is_some() || !self.keys.is_empty() {
            let mut w = match &self.zone {
                Some(z) => World::new(load_zone(z)?),
                None => (*s.world).clone(),
            };
            for k in &self.keys {
                w.add_key(load_key(k)?);
            }
            s.world = Arc::new(w);
        }
        s.protected_domains = self.protected_domains.clone().unwrap_or_else(default_protected_domains);
        if let Some(extra) = &self.suffixes {
            let mut set = SuffixSet::empty();
            set.extend(DEFAULT_SUFFIXES.iter().copied());
            set.extend(extra);
            s.suffixes = set;
        }
        Ok(s)
    }
}

fn toml_files(dir: &Path) -> Result<Vec<PathBuf>, ConfigError> {
    must_exist(dir)?;
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|source| ConfigError::Io { path: dir.to_owned(), source })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "toml"))
        .collect();
    v.sort();
    Ok(v)
}

pub fn load_zone(path: &Path) -> Result<DnsZone, ConfigError> {
    must_exist(path)?;
    DnsZone::parse(&read(path)?).map_err(|source| ConfigError::Zone { path: path.to_owned(), source })
}

/// `<selector>._domainkey.<domain>.pem` holding a PKCS#8 private key.
pub fn load_key(path: &Path) -> Result<DkimKeyPair, ConfigError> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
    let (selector, domain) = name
        .strip_suffix(".pem")
        .and_then(|n| n.split_once("._domainkey."))
        .ok_or_else(|| ConfigError::KeyName { path: path.to_owned() })?;
    DkimKeyPair::from_pkcs8_pem(domain, selector, &read(path)?)
        .map_err(|source| ConfigError::Key { path: path.to_owned(), source })
}

/// File name a key is stored under in a key directory.
pub fn key_file_name(key: &DkimKeyPair) -> String {
    format!("{}.pem", key.dns_name())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::fixture_key;

    fn tmp(tag: &str) -> PathBuf {
        let d = std::env::temp_dir().join(format!("spoofchain-config-{tag}-{}", std::process::id()));
        let _ = fs::remove_dir_all(&d);
        fs::create_dir_all(&d).unwrap();
        d
    }

    #[test]
    fn defaults() {
        let c = HarnessConfig::parse("", Path::new("x")).unwrap();
        assert_eq!(c, HarnessConfig::default());
        assert!(Arc::ptr_eq(&c.world().unwrap(), &builtin_world()));
        assert_eq!(c.scenario("case2").unwrap().forwarder.name, "aliyun-like");
    }

    #[test]
    fn missing_zone_is_an_error() {
        let d = tmp("missing");
        let path = d.join("harness.toml");
        fs::write(&path, "zone_file = \"/nonexistent/zone.txt\"\n").unwrap();
        assert!(matches!(HarnessConfig::load(&path), Err(ConfigError::Missing { .. })));
        assert!(HarnessConfig::parse("bogus = 1", &path).is_err());
    }

    #[test]
    fn profiles_scenarios_and_keys_from_disk() {
        let d = tmp("full");
        fs::create_dir_all(d.join("profiles")).unwrap();
        fs::create_dir_all(d.join("scenarios")).unwrap();
        fs::create_dir_all(d.join("keys")).unwrap();
        fs::write(d.join("profiles/lab.toml"), "honor_arc = true\n").unwrap();
        fs::write(
            d.join("scenarios/lab.toml"),
            "name = \"lab-path\"\nsender = \"strict-rfc\"\nforwarder = \"lab\"\nreceiver = \"gmail-like\"\n",
        )
        .unwrap();
        let key = fixture_key("lab.test");
        fs::write(d.join("keys").join(key_file_name(&key)), key.to_pkcs8_pem()).unwrap();
        let c = HarnessConfig {
            profiles_dir: Some(d.join("profiles")),
            key_dir: Some(d.join("keys")),
            scenario_dir: Some(d.join("scenarios")),
            ..HarnessConfig::default()
        };
        c.check_paths().unwrap();
        let lab = c.profile("lab").unwrap();
        assert!(lab.honor_arc);
        let s = c.scenario("lab-path").unwrap();
        assert_eq!(s.forwarder.name, "lab");
        assert!(s.world.key_for("lab.test").is_some());
        assert!(s.world.key_for("a.com").is_some());
        assert!(c.scenario("lab").is_ok());
        assert!(matches!(c.scenario("nope"), Err(ConfigError::UnknownScenario(_))));
        fs::remove_dir_all(&d).unwrap();
    }
}
