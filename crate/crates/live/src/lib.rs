//! Delivery of generated cases to a mail server the operator owns.
//!
//! Nothing here touches the network unless the target carries
//! `consent_ack = true`, and every target is held to its minimum send
//! interval across the whole process.

use std::sync::Arc;
use std::time::Duration;

use spoofchain_core::corpus::AttackCase;
use spoofchain_core::header::RawMessage;
use spoofchain_core::report::LiveAttempt;

mod clock;
mod config;
mod conn;
mod dns;
mod imap;
pub mod mock;
mod smtp;
mod transcript;

pub use clock::{Clock, MockClock, RateLimiter, SystemClock};
pub use config::{Credentials, ImapConfig, TargetConfig, TargetError, DEFAULT_MIN_INTERVAL_SECS};
pub use conn::{tls_config, Connector, Stream, TcpConnector};
pub use dns::LiveResolver;
pub use smtp::{dot_stuff, reverse_path, Reply};
pub use transcript::{Direction, Entry, Transcript, TranscriptParseError};

use conn::Conn;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LiveError {
    #[error("consent-required: the target must set consent_ack = true")]
    ConsentRequired,
    #[error("rate-limited: {}s until the next send is allowed", remaining.as_secs_f64().ceil())]
    RateLimited { remaining: Duration },
    #[error("connection-failed: {0}")]
    ConnectionFailed(String),
    /// The server answered `command` with an unexpected code.
    #[error("rejected-at-{command}({code})")]
    Rejected { command: String, code: u16, reply: String },
    #[error("rejected-at-{command}: {reply}")]
    ImapRejected { command: String, reply: String },
    #[error("append-rejected: {0}")]
    AppendRejected(String),
    #[error("imap-not-configured: the target has no [imap] section")]
    ImapNotConfigured,
    #[error("tls: {0}")]
    Tls(String),
    #[error("protocol: {0}")]
    Protocol(String),
    #[error("case has no message to send")]
    EmptyCase,
}

impl LiveError {
    /// Refusals decided locally, before any byte could leave.
    pub fn is_precondition(&self) -> bool {
        matches!(self, LiveError::ConsentRequired | LiveError::ImapNotConfigured | LiveError::EmptyCase)
    }
}

/// An error together with whatever was said before it happened. The
/// transcript is empty when no connection was made.
#[derive(Debug, Clone, thiserror::Error)]
#[error("{error}")]
pub struct Failure {
    pub error: LiveError,
    pub transcript: Transcript,
}

impl Failure {
    fn before_connect(error: LiveError) -> Self {
        Self { error, transcript: Transcript::default() }
    }
}

pub type Outcome = Result<Transcript, Failure>;

/// What deliveries run against. Tests swap the connector and clock; the
/// limiter is shared so spacing holds across every caller.
#[derive(Clone)]
pub struct LiveEnv {
    pub connector: Arc<dyn Connector>,
    pub clock: Arc<dyn Clock>,
    pub limiter: &'static RateLimiter,
}

impl Default for LiveEnv {
    fn default() -> Self {
        Self {
            connector: Arc::new(TcpConnector::default()),
            clock: Arc::new(SystemClock),
            limiter: RateLimiter::global(),
        }
    }
}

impl LiveEnv {
    pub fn new(connector: Arc<dyn Connector>, clock: Arc<dyn Clock>, limiter: &'static RateLimiter) -> Self {
        Self { connector, clock, limiter }
    }

    fn claim(&self, key: &str, interval: Duration) -> Result<(), LiveError> {
        self.limiter.acquire(key, self.clock.now(), interval).map_err(|remaining| LiveError::RateLimited { remaining })
    }

    fn open(&self, key: &str, host: &str, port: u16) -> Result<Conn<'_>, Failure> {
        let mut transcript = Transcript::new(key);
        transcript.note(self.clock.now(), &format!("connecting to {host}:{port}"));
        match self.connector.connect(host, port) {
            Ok(stream) => Ok(Conn::new(stream, self.clock.as_ref(), transcript)),
            Err(e) => Err(Failure { error: LiveError::ConnectionFailed(e.to_string()), transcript }),
        }
    }
}

/// The message a live send carries. Multi-message cases depend on a
/// forwarder in between, which a single target does not provide, so only
/// the first hop is sent.
fn first_message(case: &AttackCase) -> Result<&RawMessage, Failure> {
    case.messages.first().ok_or_else(|| Failure::before_connect(LiveError::EmptyCase))
}

/// Send `case` over SMTP to `target`.
pub fn deliver_smtp(case: &AttackCase, target: &TargetConfig, env: &LiveEnv) -> Outcome {
    if !target.consent_ack {
        return Err(Failure::before_connect(LiveError::ConsentRequired));
    }
    let msg = first_message(case)?;
    let key = target.smtp_key();
    env.claim(&key, target.min_interval()).map_err(Failure::before_connect)?;
    let c = env.open(&key, &target.smtp_host, target.smtp_port)?;
    let (c, r) = smtp::session(c, msg, target);
    finish(c.transcript, r)
}

/// Place `case` straight into a mailbox with IMAP APPEND, skipping every
/// server-side check. Used to test what a client renders.
pub fn imap_append(case: &AttackCase, target: &TargetConfig, env: &LiveEnv) -> Outcome {
    let imap = target.imap.as_ref().ok_or_else(|| Failure::before_connect(LiveError::ImapNotConfigured))?;
    if !target.consent_ack {
        return Err(Failure::before_connect(LiveError::ConsentRequired));
    }
    let msg = first_message(case)?;
    let key = imap.key();
    env.claim(&key, target.min_interval()).map_err(Failure::before_connect)?;
    let c = env.open(&key, &imap.host, imap.port)?;
    let (c, r) = imap::session(c, msg, imap, target.tls_insecure);
    finish(c.transcript, r)
}

fn finish(transcript: Transcript, r: Result<(), LiveError>) -> Outcome {
    match r {
        Ok(()) => Ok(transcript),
        Err(error) => Err(Failure { error, transcript }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    Smtp,
    Imap,
}

/// Deliver `case` `repeat` times, waiting on the env clock between
/// attempts so each one lands at least the target interval after the
/// last. Stops at the first precondition refusal.
pub fn deliver_repeated(
    case: &AttackCase,
    target: &TargetConfig,
    env: &LiveEnv,
    channel: Channel,
    repeat: u32,
) -> Vec<Outcome> {
    let key = match channel {
        Channel::Smtp => target.smtp_key(),
        Channel::Imap => target.imap.as_ref().map(ImapConfig::key).unwrap_or_default(),
    };
    if !target.consent_ack {
        return vec![Err(Failure::before_connect(LiveError::ConsentRequired))];
    }
    let mut out = Vec::new();
    for _ in 0..repeat {
        let wait = env.limiter.remaining(&key, env.clock.now(), target.min_interval());
        if wait > Duration::ZERO {
            env.clock.sleep(wait);
        }
        let r = match channel {
            Channel::Smtp => deliver_smtp(case, target, env),
            Channel::Imap => imap_append(case, target, env),
        };
        let stop = matches!(&r, Err(f) if f.error.is_precondition());
        out.push(r);
        if stop {
            break;
        }
    }
    out
}

/// Summary for the result matrix. `transcript` is wherever the caller
/// stored the text form.
pub fn to_attempt(case: &AttackCase, target: &str, attempt: u32, r: &Outcome, transcript: Option<String>) -> LiveAttempt {
    LiveAttempt {
        target: target.to_owned(),
        case_id: case.label(),
        attempt,
        outcome: match r {
            Ok(_) => "delivered".to_owned(),
            Err(f) => f.error.to_string(),
        },
        transcript,
    }
}
