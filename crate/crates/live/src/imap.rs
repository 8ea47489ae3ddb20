use spoofchain_core::header::{serialize_message, RawMessage};

use crate::conn::Conn;
use crate::{ImapConfig, LiveError};

fn quoted(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

fn line_text(raw: &[u8]) -> String {
    String::from_utf8_lossy(raw).trim_end().to_owned()
}

/// Read until the tagged completion for `tag`, returning its status word
/// and the rest of the line.
fn tagged(c: &mut Conn<'_>, tag: &str) -> Result<(String, String), LiveError> {
    loop {
        let line = line_text(&c.read_line()?);
        if let Some(rest) = line.strip_prefix(tag).and_then(|r| r.strip_prefix(' ')) {
            let (status, text) = rest.split_once(' ').unwrap_or((rest, ""));
            return Ok((status.to_ascii_uppercase(), text.to_owned()));
        }
    }
}

pub(crate) fn session<'a>(
    mut c: Conn<'a>,
    msg: &RawMessage,
    imap: &ImapConfig,
    insecure: bool,
) -> (Conn<'a>, Result<(), LiveError>) {
    let r = run(&mut c, msg, imap, insecure);
    if !matches!(r, Err(LiveError::ConnectionFailed(_))) && c.send(b"a3 LOGOUT\r\n").is_ok() {
        let _ = tagged(&mut c, "a3");
    }
    (c, r)
}

fn run(c: &mut Conn<'_>, msg: &RawMessage, imap: &ImapConfig, insecure: bool) -> Result<(), LiveError> {
    if imap.tls {
        c.upgrade(&imap.host, insecure)?;
    }
    let greeting = line_text(&c.read_line()?);
    if !greeting.starts_with("* OK") && !greeting.starts_with("* PREAUTH") {
        return Err(LiveError::ConnectionFailed(format!("unexpected greeting `{greeting}`")));
    }
    let creds = &imap.credentials;
    c.send(format!("a1 LOGIN {} {}\r\n", quoted(&creds.username), quoted(&creds.password)).as_bytes())?;
    let (status, text) = tagged(c, "a1")?;
    if status != "OK" {
        return Err(LiveError::ImapRejected { command: "LOGIN".into(), reply: format!("{status} {text}") });
    }

    let data = serialize_message(msg);
    c.send(format!("a2 APPEND {} {{{}}}\r\n", quoted(&imap.mailbox), data.len()).as_bytes())?;
    loop {
        let line = line_text(&c.read_line()?);
        if line.starts_with('+') {
            break;
        }
        if let Some(rest) = line.strip_prefix("a2 ") {
            return Err(LiveError::AppendRejected(rest.to_owned()));
        }
    }
    let mut literal = data;
    literal.extend_from_slice(b"\r\n");
    c.send(&literal)?;
    let (status, text) = tagged(c, "a2")?;
    if status != "OK" {
        return Err(LiveError::AppendRejected(format!("{status} {text}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::quoted;

    #[test]
    fn quoting() {
        assert_eq!(quoted(r#"a"b\c"#), r#""a\"b\\c""#);
    }
}
