use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, Write};

use fsmt_core::{Error, Result, StyleTag, TokenSeq};
use serde::{Deserialize, Serialize};

pub const UNK: &str = "<unk>";
pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";

/// Shared source/target vocabulary. The default layout reserves
/// `<unk> <s> </s> <F> <I>` as ids 0..5.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "VocabRepr", try_from = "VocabRepr")]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    unk: u32,
    bos: u32,
    eos: u32,
}

#[derive(Serialize, Deserialize)]
struct VocabRepr {
    tokens: Vec<String>,
    unk: String,
    bos: String,
    eos: String,
}

impl From<Vocab> for VocabRepr {
    fn from(v: Vocab) -> Self {
        VocabRepr {
            unk: v.tokens[v.unk as usize].clone(),
            bos: v.tokens[v.bos as usize].clone(),
            eos: v.tokens[v.eos as usize].clone(),
            tokens: v.tokens,
        }
    }
}

impl TryFrom<VocabRepr> for Vocab {
    type Error = Error;
    fn try_from(r: VocabRepr) -> Result<Self> {
        Vocab::with_specials(r.tokens, &r.unk, &r.bos, &r.eos)
    }
}

impl Vocab {
    /// Builds a vocabulary over every token of `corpus`, after the reserved symbols.
    pub fn build<'a, I>(corpus: I) -> Vocab
    where
        I: IntoIterator<Item = &'a TokenSeq>,
    {
        let reserved: Vec<String> = [UNK, BOS, EOS]
            .into_iter()
            .chain(StyleTag::ALL.iter().map(|t| t.token()))
            .map(String::from)
            .collect();
        let mut rest = BTreeSet::new();
        for seq in corpus {
            for t in seq.iter() {
                if !reserved.contains(t) {
                    rest.insert(t.clone());
                }
            }
        }
        let tokens = reserved.into_iter().chain(rest).collect();
        Vocab::with_specials(tokens, UNK, BOS, EOS).expect("reserved symbols are present")
    }

    /// A vocabulary over exactly `tokens`; the special symbols must be among
    /// them and may coincide.
    pub fn with_specials(tokens: Vec<String>, unk: &str, bos: &str, eos: &str) -> Result<Vocab> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(Error::Argument(format!("duplicate vocabulary entry {t:?}")));
            }
        }
        let find = |s: &str| {
            index
                .get(s)
                .copied()
                .ok_or_else(|| Error::Argument(format!("vocabulary lacks {s:?}")))
        };
        Ok(Vocab {
            unk: find(unk)?,
            bos: find(bos)?,
            eos: find(eos)?,
            tokens,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn unk(&self) -> u32 {
        self.unk
    }

    pub fn bos(&self) -> u32 {
        self.bos
    }

    pub fn eos(&self) -> u32 {
        self.eos
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(self.unk)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    /// Token ids without any added symbols; unknown tokens map to `<unk>`.
    pub fn encode(&self, seq: &TokenSeq) -> Vec<u32> {
        seq.iter().map(|t| self.id(t)).collect()
    }

    /// Drops everything from the first `</s>` on.
    pub fn decode(&self, ids: &[u32]) -> TokenSeq {
        ids.iter()
            .take_while(|&&i| i != self.eos)
            .map(|&i| self.token(i).to_string())
            .collect()
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        for t in &self.tokens {
            writeln!(w, "{t}")?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(r: R) -> Result<Vocab> {
        let tokens = r.lines().collect::<std::io::Result<Vec<_>>>()?;
        Vocab::with_specials(tokens, UNK, BOS, EOS)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reserved_ids_come_first() {
        let v = Vocab::build(&[TokenSeq::from_line("b a <F> a")]);
        assert_eq!(v.tokens(), ["<unk>", "<s>", "</s>", "<F>", "<I>", "a", "b"]);
        assert_eq!(v.encode(&TokenSeq::from_line("a zzz")), [5, 0]);
        assert_eq!(v.decode(&[6, 5, 2, 6]), TokenSeq::from_line("b a"));
    }

    #[test]
    fn degenerate_single_symbol_vocab() {
        let v = Vocab::with_specials(vec!["x".into()], "x", "x", "x").unwrap();
        assert_eq!((v.len(), v.unk(), v.bos(), v.eos()), (1, 0, 0, 0));
        assert!(Vocab::with_specials(vec!["x".into(), "x".into()], "x", "x", "x").is_err());
    }

    #[test]
    fn serde_round_trip() {
        let v = Vocab::build(&[TokenSeq::from_line("q r")]);
        let json = serde_json::to_string(&v).unwrap();
        assert_eq!(serde_json::from_str::<Vocab>(&json).unwrap(), v);
    }
}
