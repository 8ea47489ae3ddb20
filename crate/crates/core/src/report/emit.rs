use std::fmt::Write;
use std::str::FromStr;

use super::ResultMatrix;
use crate::chain::Stage;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    TextTable,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown format `{0}` (expected json or text)")]
pub struct UnknownFormat(pub String);

impl FromStr for Format {
    type Err = UnknownFormat;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(Format::Json),
            "text" | "text-table" | "table" => Ok(Format::TextTable),
            _ => Err(UnknownFormat(s.to_owned())),
        }
    }
}

pub fn emit(m: &ResultMatrix, format: Format) -> Vec<u8> {
    match format {
        Format::Json => {
            let mut v = serde_json::to_vec_pretty(m).expect("matrix serializes");
            v.push(b'\n');
            v
        }
        Format::TextTable => text_table(m).into_bytes(),
    }
}

pub fn parse_matrix(bytes: &[u8]) -> Result<ResultMatrix, serde_json::Error> {
    serde_json::from_slice(bytes)
}

/// Policies are applied without sampling so runs repeat exactly.
pub const PCT_NOTE: &str = "note: DMARC pct= is parsed but every policy is applied at pct=100";

fn mark(b: bool) -> String {
    if b { "yes" } else { "-" }.to_owned()
}

/// Fixed-width table, one row per scenario. Columns are as wide as their
/// widest entry so nothing is cut.
fn text_table(m: &ResultMatrix) -> String {
    let mut header: Vec<String> = ["Scenario", "SPF", "DKIM", "DMARC", "SIC", "Cases", "Succeeded"]
        .map(String::from)
        .to_vec();
    header.extend(Stage::ALL.iter().map(|s| s.title().to_owned()));
    let mut rows = vec![header];
    for r in &m.rows {
        let d = r.deployment;
        let mut row = vec![
            r.name.clone(),
            mark(d.spf),
            mark(d.dkim),
            mark(d.dmarc),
            mark(d.sic),
            r.cases.to_string(),
            r.successes.to_string(),
        ];
        for s in Stage::ALL {
            let ids = r.cells.get(&s).map(Vec::as_slice).unwrap_or_default();
            row.push(if ids.is_empty() {
                "-".into()
            } else {
                ids.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(", ")
            });
        }
        rows.push(row);
    }
    let widths: Vec<usize> =
        (0..rows[0].len()).map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    let line = |out: &mut String, cells: &[String]| {
        let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        let _ = writeln!(out, "{}", padded.join(" | ").trim_end());
    };
    line(&mut out, &rows[0]);
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    let _ = writeln!(out, "{}", rule.join("-+-"));
    for r in &rows[1..] {
        line(&mut out, r);
    }
    let _ = writeln!(out, "\n{PCT_NOTE}");
    if !m.live.is_empty() {
        let _ = writeln!(out, "\nLive attempts:");
        for a in &m.live {
            let _ = writeln!(out, "  {} {} #{}: {}", a.target, a.case_id, a.attempt, a.outcome);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::Deployment;
    use crate::corpus::AttackId;
    use crate::report::{MatrixRow, SCHEMA_VERSION};

    fn matrix(n: usize) -> ResultMatrix {
        let rows = (0..n)
            .map(|i| MatrixRow {
                name: format!("scenario-with-a-long-name-{i:02}"),
                deployment: Deployment { spf: true, dkim: i % 2 == 0, dmarc: true, sic: i % 3 == 0 },
                cases: 16,
                successes: i,
                cells: Stage::ALL
                    .into_iter()
                    .map(|s| (s, if i % 4 == 0 { vec![AttackId::A12, AttackId::A13, AttackId::A14] } else { vec![] }))
                    .collect(),
            })
            .collect();
        ResultMatrix { schema_version: SCHEMA_VERSION, rows, live: vec![] }
    }

    #[test]
    fn json_round_trip() {
        let m = matrix(5);
        assert_eq!(parse_matrix(&emit(&m, Format::Json)).unwrap(), m);
        let empty = ResultMatrix::empty();
        let text = emit(&empty, Format::Json);
        let v: serde_json::Value = serde_json::from_slice(&text).unwrap();
        assert_eq!(v["schema_version"], 1);
        assert_eq!(parse_matrix(&text).unwrap(), empty);
    }

    /// Every line has the same width up to the last column, and every
    /// row name appears whole.
    #[test]
    fn thirty_rows_are_not_truncated() {
        let m = matrix(30);
        let text = String::from_utf8(emit(&m, Format::TextTable)).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 34);
        assert_eq!(lines[33], PCT_NOTE);
        let name_w = m.rows.iter().map(|r| r.name.len()).max().unwrap();
        for (l, r) in lines[2..].iter().zip(&m.rows) {
            assert!(l.starts_with(&r.name));
            assert_eq!(l.find(" | "), Some(name_w));
        }
        assert!(text.contains("A12, A13, A14"));
    }
}
