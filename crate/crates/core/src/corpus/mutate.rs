use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::header::{encode_word_b64, header_text, serialize_fields, HeaderField, RawMessage};

/// Header fuzzing operations used when hunting for parser disagreements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mutation {
    RepeatHeader,
    InsertSpace,
    InsertUnicode,
    EncodeWord,
    CaseVary,
}

impl Mutation {
    pub const ALL: [Mutation; 5] = [
        Mutation::RepeatHeader,
        Mutation::InsertSpace,
        Mutation::InsertUnicode,
        Mutation::EncodeWord,
        Mutation::CaseVary,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Mutation::RepeatHeader => "repeat-header",
            Mutation::InsertSpace => "insert-space",
            Mutation::InsertUnicode => "insert-unicode",
            Mutation::EncodeWord => "encode-word",
            Mutation::CaseVary => "case-vary",
        }
    }
}

impl fmt::Display for Mutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mutation {
    type Err = MutateError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mutation::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| MutateError::UnknownMutation(s.to_owned()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MutateError {
    #[error("no `{0}` field to mutate")]
    LocusNotFound(String),
    #[error("unknown mutation `{0}`")]
    UnknownMutation(String),
}

/// Characters prefixed to a field name by `insert-unicode`.
const NAME_PREFIXES: [char; 3] = ['\u{0B}', '\u{200B}', '\u{FEFF}'];

/// Apply one mutation to the first field named `locus`. The input is left
/// untouched; `seed` decides any choice the mutation makes.
pub fn mutate(msg: &RawMessage, mutation: Mutation, locus: &str, seed: u64) -> Result<RawMessage, MutateError> {
    let mut fields = msg.lenient_headers().fields;
    let i = fields
        .iter()
        .position(|f| f.is(locus))
        .ok_or_else(|| MutateError::LocusNotFound(locus.to_owned()))?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    match mutation {
        Mutation::RepeatHeader => {
            let copy = fields[i].clone();
            fields.insert(i + 1, copy);
        }
        Mutation::InsertSpace => fields[i].name.push(' '),
        Mutation::InsertUnicode => {
            let c = NAME_PREFIXES[rng.gen_range(0..NAME_PREFIXES.len())];
            fields[i].name.insert(0, c);
        }
        Mutation::EncodeWord => {
            let (text, _) = header_text(&fields[i].unfolded());
            fields[i].raw_value = format!(" {}", encode_word_b64(text.trim())).into_bytes();
        }
        Mutation::CaseVary => fields[i].name = vary_case(&fields[i].name, &mut rng),
    }
    for (n, f) in fields.iter_mut().enumerate() {
        f.ordinal = n;
    }
    let mut out = msg.clone();
    out.header_block = serialize_fields(&fields);
    Ok(out)
}

/// Random per-letter case that always differs from the input when it has
/// any ASCII letter.
fn vary_case(name: &str, rng: &mut ChaCha20Rng) -> String {
    let flip = |c: char| if c.is_ascii_uppercase() { c.to_ascii_lowercase() } else { c.to_ascii_uppercase() };
    let mut out: Vec<char> = name.chars().map(|c| if rng.gen_bool(0.5) { flip(c) } else { c }).collect();
    if out.iter().collect::<String>() == name {
        if let Some(p) = out.iter().position(|c| c.is_ascii_alphabetic()) {
            out[p] = flip(out[p]);
        }
    }
    out.into_iter().collect()
}

/// Fields named `locus` in the mutated message, for assertions.
pub fn fields_named(msg: &RawMessage, locus: &str) -> Vec<HeaderField> {
    msg.lenient_headers().fields.into_iter().filter(|f| f.is(locus)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{baseline, default_bindings, AttackId, GenOptions};
    use crate::header::decode_encoded_words;

    fn msg() -> RawMessage {
        baseline(&default_bindings(AttackId::A1), &GenOptions::default())
    }

    #[test]
    fn repeat_is_adjacent() {
        let m = mutate(&msg(), Mutation::RepeatHeader, "From", 0).unwrap();
        let f = fields_named(&m, "From");
        assert_eq!(f.len(), 2);
        assert_eq!(f[1].ordinal, f[0].ordinal + 1);
        assert_eq!(f[0].raw_value, f[1].raw_value);
    }

    #[test]
    fn case_vary_is_seeded() {
        let a = mutate(&msg(), Mutation::CaseVary, "From", 5).unwrap();
        let b = mutate(&msg(), Mutation::CaseVary, "From", 5).unwrap();
        assert_eq!(a, b);
        let name = &a.lenient_headers().fields[0].name;
        assert!(name.eq_ignore_ascii_case("From") && name != "From", "{name}");
    }

    #[test]
    fn encode_word_round_trips() {
        let m = mutate(&msg(), Mutation::EncodeWord, "From", 0).unwrap();
        let v = String::from_utf8(fields_named(&m, "From")[0].raw_value.clone()).unwrap();
        assert!(v.trim().starts_with("=?utf-8?b?"));
        assert_eq!(decode_encoded_words(v.trim()), "<Oscar@attack.com>");
    }

    #[test]
    fn space_and_unicode_touch_the_name() {
        let m = mutate(&msg(), Mutation::InsertSpace, "From", 0).unwrap();
        assert_eq!(m.lenient_headers().fields[0].name, "From ");
        let m = mutate(&msg(), Mutation::InsertUnicode, "From", 3).unwrap();
        let name = &m.lenient_headers().fields[0].name;
        assert!(name.ends_with("From") && name.chars().count() == 5);
    }

    #[test]
    fn original_unchanged_and_missing_locus() {
        let m = msg();
        let before = m.clone();
        let _ = mutate(&m, Mutation::RepeatHeader, "Subject", 0).unwrap();
        assert_eq!(m, before);
        assert_eq!(
            mutate(&m, Mutation::CaseVary, "Sender", 0),
            Err(MutateError::LocusNotFound("Sender".into()))
        );
    }

    #[test]
    fn names_parse() {
        for m in Mutation::ALL {
            assert_eq!(m.to_string().parse::<Mutation>().unwrap(), m);
        }
    }
}
