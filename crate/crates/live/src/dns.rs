use std::net::{IpAddr, SocketAddr};
use std::time::Duration;

use hickory_resolver::config::{NameServerConfig, Protocol, ResolverConfig, ResolverOpts};
use hickory_resolver::error::{ResolveError, ResolveErrorKind};
use hickory_resolver::Resolver as Hickory;

use spoofchain_core::auth::{DnsError, Resolver};

/// Real DNS over UDP with TCP fallback. Answers are not cached, so a
/// verdict always reflects the zone as published at query time.
pub struct LiveResolver {
    inner: Hickory,
}

fn opts() -> ResolverOpts {
    let mut o = ResolverOpts::default();
    o.cache_size = 0;
    o.timeout = Duration::from_secs(5);
    o.attempts = 2;
    o
}

impl LiveResolver {
    /// Name servers from the host's resolver configuration.
    pub fn system() -> std::io::Result<Self> {
        let (config, _) = hickory_resolver::system_conf::read_system_conf()?;
        Ok(Self { inner: Hickory::new(config, opts())? })
    }

    /// A single name server, queried over UDP then TCP.
    pub fn with_nameserver(addr: SocketAddr) -> std::io::Result<Self> {
        let mut config = ResolverConfig::new();
        config.add_name_server(NameServerConfig::new(addr, Protocol::Udp));
        config.add_name_server(NameServerConfig::new(addr, Protocol::Tcp));
        Ok(Self { inner: Hickory::new(config, opts())? })
    }
}

/// Absolute form so no search domain is appended.
fn fqdn(name: &str) -> String {
    let n = name.trim();
    if n.ends_with('.') {
        n.to_owned()
    } else {
        format!("{n}.")
    }
}

/// No such name and no such record are empty answers, not failures.
fn answer<T>(name: &str, r: Result<Vec<T>, ResolveError>) -> Result<Vec<T>, DnsError> {
    match r {
        Ok(v) => Ok(v),
        Err(e) if matches!(e.kind(), ResolveErrorKind::NoRecordsFound { .. }) => Ok(Vec::new()),
        Err(e) => Err(DnsError { name: name.to_owned(), reason: e.to_string() }),
    }
}

impl Resolver for LiveResolver {
    fn txt(&self, name: &str) -> Result<Vec<String>, DnsError> {
        let r = self.inner.txt_lookup(fqdn(name)).map(|l| {
            l.iter()
                .map(|t| t.txt_data().iter().map(|s| String::from_utf8_lossy(s).into_owned()).collect::<String>())
                .collect()
        });
        answer(name, r)
    }

    fn mx(&self, name: &str) -> Result<Vec<(u16, String)>, DnsError> {
        let r = self.inner.mx_lookup(fqdn(name)).map(|l| {
            let mut v: Vec<(u16, String)> = l
                .iter()
                .map(|m| (m.preference(), m.exchange().to_utf8().trim_end_matches('.').to_ascii_lowercase()))
                .collect();
            v.sort();
            v
        });
        answer(name, r)
    }

    fn addrs(&self, name: &str) -> Result<Vec<IpAddr>, DnsError> {
        answer(name, self.inner.lookup_ip(fqdn(name)).map(|l| l.iter().collect()))
    }
}
