use std::net::{IpAddr, Ipv4Addr, SocketAddr, UdpSocket};
use std::str::FromStr;
use std::thread;

use hickory_proto::op::{Message, MessageType, ResponseCode};
use hickory_proto::rr::rdata::{A, MX, TXT};
use hickory_proto::rr::{Name, RData, Record};
use hickory_proto::serialize::binary::{BinDecodable, BinEncodable};

use spoofchain_core::auth::{spf_evaluate, Resolver, SpfResult};
use spoofchain_core::profile::strict_rfc;
use spoofchain_live::LiveResolver;

fn name(s: &str) -> Name {
    Name::from_str(s).unwrap()
}

/// Answers from `records`; NXDOMAIN for names it has nothing for.
fn serve(records: Vec<Record>) -> SocketAddr {
    let sock = UdpSocket::bind("127.0.0.1:0").unwrap();
    let addr = sock.local_addr().unwrap();
    thread::spawn(move || {
        let mut buf = [0u8; 2048];
        while let Ok((n, peer)) = sock.recv_from(&mut buf) {
            let Ok(q) = Message::from_bytes(&buf[..n]) else { continue };
            let mut resp = Message::new();
            resp.set_id(q.id())
                .set_message_type(MessageType::Response)
                .set_op_code(q.op_code())
                .set_recursion_desired(q.recursion_desired())
                .set_recursion_available(true)
                .set_authoritative(true);
            resp.add_queries(q.queries().to_vec());
            if let Some(query) = q.queries().first() {
                let known = records.iter().any(|r| r.name() == query.name());
                let answers: Vec<Record> = records
                    .iter()
                    .filter(|r| r.name() == query.name() && r.record_type() == query.query_type())
                    .cloned()
                    .collect();
                if !known {
                    resp.set_response_code(ResponseCode::NXDomain);
                }
                resp.add_answers(answers);
            }
            let _ = sock.send_to(&resp.to_bytes().unwrap(), peer);
        }
    });
    addr
}

fn fixture() -> LiveResolver {
    let txt = |n: &str, parts: &[&str]| {
        Record::from_rdata(name(n), 60, RData::TXT(TXT::new(parts.iter().map(|s| s.to_string()).collect())))
    };
    let addr = serve(vec![
        txt("a.org.", &["v=spf1 ip4:192.0.2.20 ", "-all"]),
        txt("_dmarc.a.org.", &["v=DMARC1; p=reject"]),
        Record::from_rdata(name("a.org."), 60, RData::MX(MX::new(10, name("MX.a.org.")))),
        Record::from_rdata(name("mx.a.org."), 60, RData::A(A(Ipv4Addr::new(192, 0, 2, 20)))),
    ]);
    LiveResolver::with_nameserver(addr).unwrap()
}

#[test]
fn answers_come_back_in_resolver_shape() {
    let r = fixture();
    assert_eq!(r.txt("a.org").unwrap(), ["v=spf1 ip4:192.0.2.20 -all"]);
    assert_eq!(r.txt("A.ORG.").unwrap(), ["v=spf1 ip4:192.0.2.20 -all"]);
    assert_eq!(r.mx("a.org").unwrap(), [(10, "mx.a.org".to_owned())]);
    assert_eq!(r.addrs("mx.a.org").unwrap(), [IpAddr::V4(Ipv4Addr::new(192, 0, 2, 20))]);
    assert!(r.txt("absent.a.org").unwrap().is_empty());
    assert!(r.mx("mx.a.org").unwrap().is_empty());
}

#[test]
fn spf_evaluates_over_live_dns() {
    let r = fixture();
    let p = strict_rfc();
    let good = IpAddr::V4(Ipv4Addr::new(192, 0, 2, 20));
    let bad = IpAddr::V4(Ipv4Addr::new(203, 0, 113, 66));
    assert_eq!(spf_evaluate(good, "x", Some("Alice@a.org"), &r, &p).result, SpfResult::Pass);
    assert_eq!(spf_evaluate(bad, "x", Some("Alice@a.org"), &r, &p).result, SpfResult::Fail);
    assert_eq!(spf_evaluate(bad, "x", Some("Alice@absent.test"), &r, &p).result, SpfResult::None);
}
