use std::fmt;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use rand::{CryptoRng, RngCore};
use rsa::pkcs1v15;
use rsa::pkcs8::{DecodePrivateKey, DecodePublicKey, EncodePrivateKey, EncodePublicKey, LineEnding};
use rsa::signature::{SignatureEncoding, Signer, Verifier};
use rsa::{RsaPrivateKey, RsaPublicKey};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DkimAlgorithm {
    #[serde(rename = "rsa-sha256")]
    RsaSha256,
    #[serde(rename = "ed25519-sha256")]
    Ed25519Sha256,
}

impl DkimAlgorithm {
    pub fn tag(self) -> &'static str {
        match self {
            DkimAlgorithm::RsaSha256 => "rsa-sha256",
            DkimAlgorithm::Ed25519Sha256 => "ed25519-sha256",
        }
    }

    /// `k=` value in the key record.
    pub fn key_type(self) -> &'static str {
        match self {
            DkimAlgorithm::RsaSha256 => "rsa",
            DkimAlgorithm::Ed25519Sha256 => "ed25519",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag.trim().to_ascii_lowercase().as_str() {
            "rsa-sha256" => Some(DkimAlgorithm::RsaSha256),
            "ed25519-sha256" if cfg!(feature = "ed25519") => Some(DkimAlgorithm::Ed25519Sha256),
            _ => None,
        }
    }
}

impl fmt::Display for DkimAlgorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum KeyError {
    #[error("key generation failed: {0}")]
    Generate(String),
    #[error("unreadable private key: {0}")]
    Decode(String),
    #[error("algorithm {0} is not compiled in")]
    Unsupported(DkimAlgorithm),
}

/// A signing key bound to the `(domain, selector)` it is published under.
#[derive(Clone, PartialEq, Eq)]
pub struct DkimKeyPair {
    pub algorithm: DkimAlgorithm,
    pub domain: String,
    pub selector: String,
    /// PKCS#8 DER.
    private_key: Vec<u8>,
}

impl fmt::Debug for DkimKeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DkimKeyPair")
            .field("algorithm", &self.algorithm)
            .field("domain", &self.domain)
            .field("selector", &self.selector)
            .finish_non_exhaustive()
    }
}

impl DkimKeyPair {
    pub fn generate_rsa<R: RngCore + CryptoRng>(
        domain: &str,
        selector: &str,
        bits: usize,
        rng: &mut R,
    ) -> Result<Self, KeyError> {
        let key = RsaPrivateKey::new(rng, bits).map_err(|e| KeyError::Generate(e.to_string()))?;
        let der = key.to_pkcs8_der().map_err(|e| KeyError::Generate(e.to_string()))?;
        Ok(Self::from_parts(DkimAlgorithm::RsaSha256, domain, selector, der.as_bytes().to_vec()))
    }

    #[cfg(feature = "ed25519")]
    pub fn generate_ed25519<R: RngCore + CryptoRng>(domain: &str, selector: &str, rng: &mut R) -> Result<Self, KeyError> {
        use ed25519_dalek::pkcs8::EncodePrivateKey as _;
        let key = ed25519_dalek::SigningKey::generate(rng);
        let der = key.to_pkcs8_der().map_err(|e| KeyError::Generate(e.to_string()))?;
        Ok(Self::from_parts(DkimAlgorithm::Ed25519Sha256, domain, selector, der.as_bytes().to_vec()))
    }

    fn from_parts(algorithm: DkimAlgorithm, domain: &str, selector: &str, private_key: Vec<u8>) -> Self {
        Self {
            algorithm,
            domain: domain.to_ascii_lowercase(),
            selector: selector.to_owned(),
            private_key,
        }
    }

    /// Load a PKCS#8 PEM key, detecting the algorithm.
    pub fn from_pkcs8_pem(domain: &str, selector: &str, pem: &str) -> Result<Self, KeyError> {
        if let Ok(k) = RsaPrivateKey::from_pkcs8_pem(pem) {
            let der = k.to_pkcs8_der().map_err(|e| KeyError::Decode(e.to_string()))?;
            return Ok(Self::from_parts(DkimAlgorithm::RsaSha256, domain, selector, der.as_bytes().to_vec()));
        }
        #[cfg(feature = "ed25519")]
        {
            use ed25519_dalek::pkcs8::{DecodePrivateKey as _, EncodePrivateKey as _};
            if let Ok(k) = ed25519_dalek::SigningKey::from_pkcs8_pem(pem) {
                let der = k.to_pkcs8_der().map_err(|e| KeyError::Decode(e.to_string()))?;
                return Ok(Self::from_parts(DkimAlgorithm::Ed25519Sha256, domain, selector, der.as_bytes().to_vec()));
            }
        }
        Err(KeyError::Decode("neither an RSA nor an Ed25519 PKCS#8 key".into()))
    }

    pub fn to_pkcs8_pem(&self) -> String {
        match self.algorithm {
            DkimAlgorithm::RsaSha256 => self
                .rsa()
                .to_pkcs8_pem(LineEnding::LF)
                .expect("stored key re-encodes")
                .to_string(),
            DkimAlgorithm::Ed25519Sha256 => pem_wrap("PRIVATE KEY", &self.private_key),
        }
    }

    fn rsa(&self) -> RsaPrivateKey {
        RsaPrivateKey::from_pkcs8_der(&self.private_key).expect("stored key was validated at construction")
    }

    /// `<selector>._domainkey.<domain>`
    pub fn dns_name(&self) -> String {
        format!("{}._domainkey.{}", self.selector, self.domain)
    }

    /// Raw `p=` bytes: SubjectPublicKeyInfo for RSA, the 32-byte key for
    /// Ed25519.
    pub fn public_key_bytes(&self) -> Vec<u8> {
        match self.algorithm {
            DkimAlgorithm::RsaSha256 => RsaPublicKey::from(&self.rsa())
                .to_public_key_der()
                .expect("public key encodes")
                .as_bytes()
                .to_vec(),
            DkimAlgorithm::Ed25519Sha256 => self.ed25519_public(),
        }
    }

    #[cfg(feature = "ed25519")]
    fn ed25519_public(&self) -> Vec<u8> {
        self.ed25519().verifying_key().to_bytes().to_vec()
    }

    #[cfg(not(feature = "ed25519"))]
    fn ed25519_public(&self) -> Vec<u8> {
        unreachable!("ed25519 keys cannot be constructed without the feature")
    }

    #[cfg(feature = "ed25519")]
    fn ed25519(&self) -> ed25519_dalek::SigningKey {
        use ed25519_dalek::pkcs8::DecodePrivateKey as _;
        ed25519_dalek::SigningKey::from_pkcs8_der(&self.private_key).expect("stored key was validated at construction")
    }

    /// TXT value to publish at [`Self::dns_name`].
    pub fn public_record(&self) -> String {
        format!(
            "v=DKIM1; k={}; p={}",
            self.algorithm.key_type(),
            STANDARD.encode(self.public_key_bytes())
        )
    }

    /// The record as a zone-file line.
    pub fn zone_line(&self) -> String {
        format!("{} TXT \"{}\"", self.dns_name(), self.public_record())
    }

    pub(crate) fn sign(&self, data: &[u8]) -> Vec<u8> {
        match self.algorithm {
            DkimAlgorithm::RsaSha256 => pkcs1v15::SigningKey::<Sha256>::new(self.rsa()).sign(data).to_vec(),
            DkimAlgorithm::Ed25519Sha256 => self.sign_ed25519(data),
        }
    }

    #[cfg(feature = "ed25519")]
    fn sign_ed25519(&self, data: &[u8]) -> Vec<u8> {
        use ed25519_dalek::Signer as _;
        // RFC 8463: Ed25519 signs the SHA-256 digest
        self.ed25519().sign(&Sha256::digest(data)).to_bytes().to_vec()
    }

    #[cfg(not(feature = "ed25519"))]
    fn sign_ed25519(&self, _: &[u8]) -> Vec<u8> {
        unreachable!("ed25519 keys cannot be constructed without the feature")
    }
}

/// Check `sig` over `data` against published `p=` bytes.
pub(crate) fn verify_with_public(algorithm: DkimAlgorithm, public: &[u8], data: &[u8], sig: &[u8]) -> bool {
    match algorithm {
        DkimAlgorithm::RsaSha256 => {
            let Ok(key) = RsaPublicKey::from_public_key_der(public)
                .or_else(|_| <RsaPublicKey as rsa::pkcs1::DecodeRsaPublicKey>::from_pkcs1_der(public))
            else {
                return false;
            };
            let Ok(sig) = pkcs1v15::Signature::try_from(sig) else {
                return false;
            };
            pkcs1v15::VerifyingKey::<Sha256>::new(key).verify(data, &sig).is_ok()
        }
        DkimAlgorithm::Ed25519Sha256 => verify_ed25519(public, data, sig),
    }
}

#[cfg(feature = "ed25519")]
fn verify_ed25519(public: &[u8], data: &[u8], sig: &[u8]) -> bool {
    let Ok(bytes) = <[u8; 32]>::try_from(public) else {
        return false;
    };
    let Ok(key) = ed25519_dalek::VerifyingKey::from_bytes(&bytes) else {
        return false;
    };
    let Ok(sig) = ed25519_dalek::Signature::from_slice(sig) else {
        return false;
    };
    key.verify_strict(&Sha256::digest(data), &sig).is_ok()
}

#[cfg(not(feature = "ed25519"))]
fn verify_ed25519(_: &[u8], _: &[u8], _: &[u8]) -> bool {
    false
}

fn pem_wrap(label: &str, der: &[u8]) -> String {
    let b64 = STANDARD.encode(der);
    let mut out = format!("-----BEGIN {label}-----\n");
    for chunk in b64.as_bytes().chunks(64) {
        out.push_str(std::str::from_utf8(chunk).expect("base64 is ASCII"));
        out.push('\n');
    }
    out.push_str(&format!("-----END {label}-----\n"));
    out
}
