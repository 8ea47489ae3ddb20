use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use sha2::{Digest, Sha256};

use spoofchain_core::auth::{
    canon_body, canon_header, dkim_sign, dkim_verify, Canon, CanonPair, DkimResult, DEFAULT_SIGNED_HEADERS,
};
use spoofchain_core::chain::builtin_world;
use spoofchain_core::corpus::{baseline, Bindings, GenOptions};
use spoofchain_core::header::RawMessage;

fn message() -> RawMessage {
    let mut m = baseline(&Bindings::new("Alice@a.com", "Alice@a.com", "Bob@b.com"), &GenOptions::default());
    m.body = b"Quarterly figures attached.  \r\nPlease\t review\r\n\r\n".to_vec();
    m
}

fn sign(m: &RawMessage, canon: CanonPair) -> RawMessage {
    let world = builtin_world();
    dkim_sign(m, world.key_for("a.com").unwrap(), canon, DEFAULT_SIGNED_HEADERS).unwrap()
}

fn verify(m: &RawMessage) -> DkimResult {
    let out = dkim_verify(m, &builtin_world().zone);
    assert_eq!(out.len(), 1);
    out[0].result
}

#[test]
fn round_trip_and_tamper_in_every_mode() {
    assert_eq!(CanonPair::all().count(), 4);
    for canon in CanonPair::all() {
        let signed = sign(&message(), canon);
        assert_eq!(verify(&signed), DkimResult::Pass, "{canon}");
        for at in [0, 10, 33] {
            let mut t = signed.clone();
            assert!(t.body[at].is_ascii_alphabetic());
            t.body[at] ^= 0x20;
            assert_eq!(verify(&t), DkimResult::Fail, "{canon} byte {at}");
        }
    }
}

fn bh_tag(m: &RawMessage) -> String {
    let f = &m.lenient_headers().fields[0];
    let v = String::from_utf8(f.unfolded()).unwrap();
    let bh = v.split(';').map(str::trim).find_map(|t| t.strip_prefix("bh=")).unwrap();
    bh.chars().filter(|c| !c.is_whitespace()).collect()
}

#[test]
fn body_hash_matches_an_independent_digest() {
    for canon in CanonPair::all() {
        let m = message();
        let want = match canon.body {
            Canon::Simple => b"Quarterly figures attached.  \r\nPlease\t review\r\n".to_vec(),
            Canon::Relaxed => b"Quarterly figures attached.\r\nPlease review\r\n".to_vec(),
        };
        let digest = STANDARD.encode(Sha256::digest(&want));
        assert_eq!(bh_tag(&sign(&m, canon)), digest, "{canon}");
    }
}

#[test]
fn relaxed_body_rules_applied_by_hand() {
    // reduce WSP runs to one SP, drop trailing WSP, drop trailing empty
    // lines, and end a non-empty body with CRLF
    let cases: [(&[u8], &[u8]); 5] = [
        (b"Hi \r\n\r\n\r\n", b"Hi\r\n"),
        (b" C \r\nD \t E\r\n\r\n\r\n", b" C\r\nD E\r\n"),
        (b"", b""),
        (b"\r\n\r\n", b""),
        (b"a\t\tb  \r\nc", b"a b\r\nc\r\n"),
    ];
    for (input, want) in cases {
        assert_eq!(canon_body(input, Canon::Relaxed), want, "{:?}", String::from_utf8_lossy(input));
    }
    assert_eq!(canon_body(b"Hi \r\n\r\n\r\n", Canon::Relaxed), canon_body(b"Hi\r\n", Canon::Relaxed));
}

#[test]
fn simple_body_rules_applied_by_hand() {
    assert_eq!(canon_body(b"", Canon::Simple), b"\r\n");
    assert_eq!(canon_body(b" C \r\nD \t E\r\n\r\n\r\n", Canon::Simple), b" C \r\nD \t E\r\n");
    assert_eq!(canon_body(b"x", Canon::Simple), b"x\r\n");
}

#[test]
fn header_rules_applied_by_hand() {
    assert_eq!(canon_header("A", b" X", Canon::Relaxed), b"a:X\r\n");
    assert_eq!(canon_header("B ", b" Y\t\r\n\tZ  ", Canon::Relaxed), b"b:Y Z\r\n");
    assert_eq!(canon_header("B ", b" Y\t\r\n\tZ  ", Canon::Simple), b"B : Y\t\r\n\tZ  \r\n");
}
