use std::io::{self, Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::sync::Arc;
use std::time::Duration;

use rustls::client::danger::{HandshakeSignatureValid, ServerCertVerified, ServerCertVerifier};
use rustls::pki_types::{CertificateDer, ServerName, UnixTime};
use rustls::{ClientConfig, ClientConnection, DigitallySignedStruct, RootCertStore, SignatureScheme, StreamOwned};

use crate::clock::Clock;
use crate::transcript::{Direction, Transcript};
use crate::LiveError;

pub trait Stream: Read + Write + Send {}

impl<T: Read + Write + Send> Stream for T {}

/// Opens byte streams to a host. The only place a delivery touches the
/// network, so tests can count or script every connection.
pub trait Connector: Send + Sync {
    fn connect(&self, host: &str, port: u16) -> io::Result<Box<dyn Stream>>;
}

#[derive(Debug, Clone)]
pub struct TcpConnector {
    pub timeout: Duration,
}

impl Default for TcpConnector {
    fn default() -> Self {
        Self { timeout: Duration::from_secs(30) }
    }
}

impl Connector for TcpConnector {
    fn connect(&self, host: &str, port: u16) -> io::Result<Box<dyn Stream>> {
        let mut last = io::Error::new(io::ErrorKind::NotFound, format!("{host}: no addresses"));
        for addr in (host, port).to_socket_addrs()? {
            match TcpStream::connect_timeout(&addr, self.timeout) {
                Ok(s) => {
                    s.set_read_timeout(Some(self.timeout))?;
                    s.set_write_timeout(Some(self.timeout))?;
                    return Ok(Box::new(s));
                }
                Err(e) => last = e,
            }
        }
        Err(last)
    }
}

/// Accepts any certificate. Signatures are still checked so the session
/// is at least bound to the presented key.
#[derive(Debug)]
struct AcceptAnyCert(Arc<rustls::crypto::CryptoProvider>);

impl ServerCertVerifier for AcceptAnyCert {
    fn verify_server_cert(
        &self,
        _: &CertificateDer<'_>,
        _: &[CertificateDer<'_>],
        _: &ServerName<'_>,
        _: &[u8],
        _: UnixTime,
    ) -> Result<ServerCertVerified, rustls::Error> {
        Ok(ServerCertVerified::assertion())
    }

    fn verify_tls12_signature(
        &self,
        message: &[u8],
        cert: &CertificateDer<'_>,
        dss: &DigitallySignedStruct,
    ) -> Result<HandshakeSignatureValid, rustls::Error> {
        rustls::crypto::verify_tls12_signature(message, cert, dss, &self.0.signature_verification_algorithms)
    }

    fn verify_tls13_signature(
        &self,
        message: &[u8],
        cert: &CertificateDer<'_>,
        dss: &DigitallySignedStruct,
    ) -> Result<HandshakeSignatureValid, rustls::Error> {
        rustls::crypto::verify_tls13_signature(message, cert, dss, &self.0.signature_verification_algorithms)
    }

    fn supported_verify_schemes(&self) -> Vec<SignatureScheme> {
        self.0.signature_verification_algorithms.supported_schemes()
    }
}

pub fn tls_config(insecure: bool) -> Result<Arc<ClientConfig>, LiveError> {
    let provider = Arc::new(rustls::crypto::ring::default_provider());
    let builder = ClientConfig::builder_with_provider(provider.clone())
        .with_safe_default_protocol_versions()
        .map_err(|e| LiveError::Tls(e.to_string()))?;
    let config = if insecure {
        builder.dangerous().with_custom_certificate_verifier(Arc::new(AcceptAnyCert(provider))).with_no_client_auth()
    } else {
        let roots = RootCertStore { roots: webpki_roots::TLS_SERVER_ROOTS.to_vec() };
        builder.with_root_certificates(roots).with_no_client_auth()
    };
    Ok(Arc::new(config))
}

/// A line-oriented session that logs every byte to a transcript.
pub struct Conn<'a> {
    stream: Box<dyn Stream>,
    buf: Vec<u8>,
    clock: &'a dyn Clock,
    pub transcript: Transcript,
}

impl<'a> Conn<'a> {
    pub fn new(stream: Box<dyn Stream>, clock: &'a dyn Clock, transcript: Transcript) -> Self {
        Self { stream, buf: Vec::new(), clock, transcript }
    }

    pub fn note(&mut self, text: &str) {
        let now = self.clock.now();
        self.transcript.note(now, text);
    }

    pub fn send(&mut self, bytes: &[u8]) -> Result<(), LiveError> {
        let now = self.clock.now();
        self.transcript.push(now, Direction::Sent, bytes);
        self.stream.write_all(bytes).and_then(|_| self.stream.flush()).map_err(io_err)
    }

    /// One line including its terminator. EOF before a newline is an error.
    pub fn read_line(&mut self) -> Result<Vec<u8>, LiveError> {
        loop {
            if let Some(p) = self.buf.iter().position(|&b| b == b'\n') {
                let line: Vec<u8> = self.buf.drain(..=p).collect();
                let now = self.clock.now();
                self.transcript.push(now, Direction::Received, &line);
                return Ok(line);
            }
            let mut chunk = [0u8; 4096];
            let n = self.stream.read(&mut chunk).map_err(io_err)?;
            if n == 0 {
                return Err(LiveError::ConnectionFailed("connection closed by server".into()));
            }
            self.buf.extend_from_slice(&chunk[..n]);
        }
    }

    /// Wrap the stream in TLS. Anything the server sent ahead of the
    /// handshake is a protocol error.
    pub fn upgrade(&mut self, host: &str, insecure: bool) -> Result<(), LiveError> {
        if !self.buf.is_empty() {
            return Err(LiveError::Protocol("data received before TLS handshake".into()));
        }
        let name = ServerName::try_from(host.to_owned()).map_err(|e| LiveError::Tls(e.to_string()))?;
        let conn = ClientConnection::new(tls_config(insecure)?, name).map_err(|e| LiveError::Tls(e.to_string()))?;
        let plain = std::mem::replace(&mut self.stream, Box::new(Detached));
        self.stream = Box::new(StreamOwned::new(conn, plain));
        self.note("tls started");
        Ok(())
    }
}

/// Stand-in while the stream is being wrapped.
struct Detached;

impl Read for Detached {
    fn read(&mut self, _: &mut [u8]) -> io::Result<usize> {
        Ok(0)
    }
}

impl Write for Detached {
    fn write(&mut self, _: &[u8]) -> io::Result<usize> {
        Err(io::ErrorKind::NotConnected.into())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

fn io_err(e: io::Error) -> LiveError {
    LiveError::ConnectionFailed(e.to_string())
}
