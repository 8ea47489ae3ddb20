use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;

use spoofchain_core::header::{serialize_message, RawMessage};

use crate::conn::Conn;
use crate::{LiveError, TargetConfig};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reply {
    pub code: u16,
    pub lines: Vec<String>,
}

impl Reply {
    fn text(&self) -> String {
        self.lines.join(" / ")
    }

    fn has_extension(&self, name: &str) -> bool {
        self.lines.iter().skip(1).any(|l| l.split_whitespace().next().is_some_and(|k| k.eq_ignore_ascii_case(name)))
    }
}

fn read_reply(c: &mut Conn<'_>) -> Result<Reply, LiveError> {
    let mut lines = Vec::new();
    loop {
        let raw = c.read_line()?;
        let line = String::from_utf8_lossy(&raw).trim_end().to_owned();
        let code = line.get(..3).and_then(|s| s.parse::<u16>().ok());
        let Some(code) = code else {
            return Err(LiveError::Protocol(format!("malformed reply `{line}`")));
        };
        let more = line.as_bytes().get(3) == Some(&b'-');
        lines.push(line.get(4..).unwrap_or("").to_owned());
        if !more {
            return Ok(Reply { code, lines });
        }
    }
}

/// Send one command and require a reply in `want`'s hundred.
fn command(c: &mut Conn<'_>, label: &str, line: &str, want: u16) -> Result<Reply, LiveError> {
    c.send(format!("{line}\r\n").as_bytes())?;
    expect(c, label, want)
}

fn expect(c: &mut Conn<'_>, label: &str, want: u16) -> Result<Reply, LiveError> {
    let r = read_reply(c)?;
    if r.code / 100 != want / 100 {
        return Err(LiveError::Rejected { command: label.to_owned(), code: r.code, reply: r.text() });
    }
    Ok(r)
}

/// Transparency: a leading dot on any line is doubled. Line endings are
/// left exactly as the message has them.
pub fn dot_stuff(data: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(data.len() + 8);
    let mut at_line_start = true;
    for &b in data {
        if at_line_start && b == b'.' {
            out.push(b'.');
        }
        out.push(b);
        at_line_start = b == b'\n';
    }
    if !out.ends_with(b"\r\n") {
        out.extend_from_slice(b"\r\n");
    }
    out.extend_from_slice(b".\r\n");
    out
}

pub fn reverse_path(msg: &RawMessage) -> String {
    format!("MAIL FROM:<{}>", msg.mail_from.as_deref().unwrap_or(""))
}

/// One SMTP session carrying `msg`. The caller has already checked
/// consent and the rate limit.
pub(crate) fn session<'a>(mut c: Conn<'a>, msg: &RawMessage, target: &TargetConfig) -> (Conn<'a>, Result<(), LiveError>) {
    let r = run(&mut c, msg, target);
    if r.is_ok() {
        let _ = command(&mut c, "QUIT", "QUIT", 221);
    }
    (c, r)
}

fn run(c: &mut Conn<'_>, msg: &RawMessage, target: &TargetConfig) -> Result<(), LiveError> {
    expect(c, "CONNECT", 220)?;
    let ehlo = format!("EHLO {}", msg.helo_domain);
    let mut caps = command(c, "EHLO", &ehlo, 250)?;
    if target.use_starttls && caps.has_extension("STARTTLS") {
        command(c, "STARTTLS", "STARTTLS", 220)?;
        c.upgrade(&target.smtp_host, target.tls_insecure)?;
        caps = command(c, "EHLO", &ehlo, 250)?;
    } else if target.use_starttls {
        c.note("STARTTLS not offered; continuing in clear text");
    }
    if let Some(auth) = &target.auth {
        if !caps.has_extension("AUTH") {
            return Err(LiveError::Protocol("server does not offer AUTH".into()));
        }
        let token = STANDARD.encode(format!("\0{}\0{}", auth.username, auth.password));
        command(c, "AUTH", &format!("AUTH PLAIN {token}"), 235)?;
    }
    command(c, "MAIL", &reverse_path(msg), 250)?;
    let rcpts = if target.recipients.is_empty() { &msg.rcpt_to } else { &target.recipients };
    for r in rcpts {
        command(c, "RCPT", &format!("RCPT TO:<{r}>"), 250)?;
    }
    command(c, "DATA", "DATA", 354)?;
    c.send(&dot_stuff(&serialize_message(msg)))?;
    expect(c, "DATA", 250)?;
    Ok(())
}
