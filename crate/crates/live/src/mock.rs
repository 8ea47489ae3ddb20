//! Scripted loopback SMTP and IMAP servers plus a connector that counts
//! what passes through it. Lets the delivery path run end to end without
//! leaving the machine.

use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;

use crate::conn::{Connector, Stream, TcpConnector};

/// Everything a mock server saw, shared with the test.
#[derive(Debug, Default)]
pub struct Seen {
    pub connections: AtomicUsize,
    pub bytes: Mutex<Vec<u8>>,
    /// One entry per completed DATA or APPEND.
    pub messages: Mutex<Vec<Vec<u8>>>,
}

impl Seen {
    pub fn connections(&self) -> usize {
        self.connections.load(Ordering::SeqCst)
    }

    pub fn byte_count(&self) -> usize {
        self.bytes.lock().unwrap().len()
    }

    pub fn bytes(&self) -> Vec<u8> {
        self.bytes.lock().unwrap().clone()
    }
}

/// Reply codes the SMTP mock uses; 250 everywhere by default.
#[derive(Debug, Clone, Copy)]
pub struct SmtpScript {
    pub mail: u16,
    pub rcpt: u16,
    pub data_end: u16,
}

impl Default for SmtpScript {
    fn default() -> Self {
        Self { mail: 250, rcpt: 250, data_end: 250 }
    }
}

pub struct MockServer {
    pub port: u16,
    pub seen: Arc<Seen>,
}

struct Recorder<'a> {
    inner: BufReader<TcpStream>,
    seen: &'a Seen,
}

impl Recorder<'_> {
    fn line(&mut self) -> Option<Vec<u8>> {
        let mut buf = Vec::new();
        match self.inner.read_until(b'\n', &mut buf) {
            Ok(0) | Err(_) => None,
            Ok(_) => {
                self.seen.bytes.lock().unwrap().extend_from_slice(&buf);
                Some(buf)
            }
        }
    }

    fn exact(&mut self, n: usize) -> Option<Vec<u8>> {
        let mut buf = vec![0; n];
        self.inner.read_exact(&mut buf).ok()?;
        self.seen.bytes.lock().unwrap().extend_from_slice(&buf);
        Some(buf)
    }
}

fn serve(handler: impl Fn(TcpStream, &Seen) -> io::Result<()> + Send + 'static) -> io::Result<MockServer> {
    let listener = TcpListener::bind("127.0.0.1:0")?;
    let port = listener.local_addr()?.port();
    let seen = Arc::new(Seen::default());
    let shared = seen.clone();
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(stream) = stream else { return };
            shared.connections.fetch_add(1, Ordering::SeqCst);
            let _ = handler(stream, &shared);
        }
    });
    Ok(MockServer { port, seen })
}

impl MockServer {
    pub fn smtp(script: SmtpScript) -> io::Result<Self> {
        serve(move |s, seen| smtp_session(s, seen, script))
    }

    /// An IMAP server refusing literals above `literal_limit` bytes.
    pub fn imap(literal_limit: usize) -> io::Result<Self> {
        serve(move |s, seen| imap_session(s, seen, literal_limit))
    }
}

fn smtp_session(stream: TcpStream, seen: &Seen, script: SmtpScript) -> io::Result<()> {
    let mut out = stream.try_clone()?;
    let mut r = Recorder { inner: BufReader::new(stream), seen };
    out.write_all(b"220 mock.lab ESMTP\r\n")?;
    while let Some(line) = r.line() {
        let verb = String::from_utf8_lossy(&line).get(..4).unwrap_or("").to_ascii_uppercase();
        let reply = match verb.as_str() {
            "EHLO" => "250-mock.lab\r\n250 8BITMIME\r\n".to_owned(),
            "HELO" => "250 mock.lab\r\n".to_owned(),
            "MAIL" => format!("{} mail\r\n", script.mail),
            "RCPT" => format!("{} rcpt\r\n", script.rcpt),
            "DATA" => {
                out.write_all(b"354 go ahead\r\n")?;
                let mut body = Vec::new();
                while let Some(l) = r.line() {
                    if l == b".\r\n" {
                        break;
                    }
                    body.extend_from_slice(&l);
                }
                seen.messages.lock().unwrap().push(body);
                format!("{} queued\r\n", script.data_end)
            }
            "QUIT" => {
                out.write_all(b"221 bye\r\n")?;
                return Ok(());
            }
            "RSET" | "NOOP" => "250 ok\r\n".to_owned(),
            _ => "500 unrecognized\r\n".to_owned(),
        };
        out.write_all(reply.as_bytes())?;
    }
    Ok(())
}

fn imap_session(stream: TcpStream, seen: &Seen, literal_limit: usize) -> io::Result<()> {
    let mut out = stream.try_clone()?;
    let mut r = Recorder { inner: BufReader::new(stream), seen };
    out.write_all(b"* OK mock IMAP4rev1 ready\r\n")?;
    while let Some(line) = r.line() {
        let text = String::from_utf8_lossy(&line).trim_end().to_owned();
        let mut words = text.splitn(3, ' ');
        let tag = words.next().unwrap_or("*").to_owned();
        let verb = words.next().unwrap_or("").to_ascii_uppercase();
        match verb.as_str() {
            "LOGIN" => write!(out, "{tag} OK logged in\r\n")?,
            "APPEND" => {
                let size = text
                    .rsplit_once('{')
                    .and_then(|(_, rest)| rest.strip_suffix('}'))
                    .and_then(|n| n.parse::<usize>().ok());
                match size {
                    None => write!(out, "{tag} BAD missing literal\r\n")?,
                    Some(n) if n > literal_limit => write!(out, "{tag} NO [TOOBIG] message too large\r\n")?,
                    Some(n) => {
                        out.write_all(b"+ ready for literal\r\n")?;
                        let Some(body) = r.exact(n) else { return Ok(()) };
                        r.line();
                        seen.messages.lock().unwrap().push(body);
                        write!(out, "{tag} OK APPEND completed\r\n")?;
                    }
                }
            }
            "LOGOUT" => {
                write!(out, "* BYE\r\n{tag} OK logout\r\n")?;
                return Ok(());
            }
            _ => write!(out, "{tag} BAD unknown command\r\n")?,
        }
    }
    Ok(())
}

/// Wraps another connector and counts connection attempts.
pub struct CountingConnector<C = TcpConnector> {
    pub inner: C,
    pub attempts: AtomicUsize,
}

impl<C> CountingConnector<C> {
    pub fn new(inner: C) -> Self {
        Self { inner, attempts: AtomicUsize::new(0) }
    }

    pub fn attempts(&self) -> usize {
        self.attempts.load(Ordering::SeqCst)
    }
}

impl<C: Connector> Connector for CountingConnector<C> {
    fn connect(&self, host: &str, port: u16) -> io::Result<Box<dyn Stream>> {
        self.attempts.fetch_add(1, Ordering::SeqCst);
        self.inner.connect(host, port)
    }
}
