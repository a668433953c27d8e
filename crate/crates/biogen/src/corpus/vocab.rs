//! The shared token vocabulary used by both the input and output sides.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use super::delex::copy_token;
use super::record::SlotSchema;
use crate::error::{Error, Result};

pub const PAD: &str = "<pad>";
pub const GO: &str = "<go>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";

/// Token/id bijection with reserved control and copy tokens at the lowest
/// ids, in this fixed order: `<pad>`, `<go>`, `</s>`, `<unk>`, then
/// `TITLE0..TITLE{k-1}`.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    tokens: Vec<String>,
    counts: Vec<u64>,
    id_of: HashMap<String, u32>,
    copy_budget: usize,
}

impl Vocabulary {
    pub const PAD_ID: u32 = 0;
    pub const GO_ID: u32 = 1;
    pub const EOS_ID: u32 = 2;
    pub const UNK_ID: u32 = 3;

    /// Number of reserved tokens for a copy budget of `k`.
    pub fn reserved_len(copy_budget: usize) -> usize {
        4 + copy_budget
    }

    /// Build the single shared vocabulary over input-side and output-side
    /// token sequences. Tokens are ranked by frequency with lexicographic
    /// tie-breaks; slot-name tokens from `schema` are always retained, no
    /// matter how rare; everything past `max_vocab` maps to `<unk>`.
    pub fn build<'a, I>(
        corpora: I,
        schema: &SlotSchema,
        max_vocab: usize,
        copy_budget: usize,
    ) -> Result<Vocabulary>
    where
        I: IntoIterator<Item = &'a [String]>,
    {
        let reserved = Self::reserved_len(copy_budget);
        if max_vocab <= reserved {
            return Err(Error::Invalid(format!(
                "max_vocab {max_vocab} must exceed the {reserved} reserved tokens"
            )));
        }

        let mut freq: HashMap<&str, u64> = HashMap::new();
        for seq in corpora {
            for tok in seq {
                *freq.entry(tok.as_str()).or_insert(0) += 1;
            }
        }

        let mut vocab = Vocabulary::reserved_only(copy_budget);
        for tok in &vocab.tokens {
            freq.remove(tok.as_str());
        }

        // Slot names first so they survive any cutoff, then everything else
        // by (frequency desc, token asc).
        let mut slot_entries: Vec<(&str, u64)> = Vec::new();
        for slot in schema.slots() {
            if let Some(count) = freq.remove(slot.as_str()) {
                slot_entries.push((slot.as_str(), count));
            }
        }
        slot_entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

        let mut rest: Vec<(&str, u64)> = freq.into_iter().collect();
        rest.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

        for (tok, count) in slot_entries.into_iter().chain(rest) {
            if vocab.tokens.len() >= max_vocab {
                break;
            }
            vocab.push(tok.to_string(), count);
        }
        Ok(vocab)
    }

    fn reserved_only(copy_budget: usize) -> Vocabulary {
        let mut vocab = Vocabulary {
            tokens: Vec::new(),
            counts: Vec::new(),
            id_of: HashMap::new(),
            copy_budget,
        };
        for tok in [PAD, GO, EOS, UNK] {
            vocab.push(tok.to_string(), 0);
        }
        for i in 0..copy_budget {
            vocab.push(copy_token(i), 0);
        }
        vocab
    }

    fn push(&mut self, token: String, count: u64) {
        let id = self.tokens.len() as u32;
        self.id_of.insert(token.clone(), id);
        self.tokens.push(token);
        self.counts.push(count);
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn copy_budget(&self) -> usize {
        self.copy_budget
    }

    /// Id for a token, falling back to `<unk>`.
    pub fn id(&self, token: &str) -> u32 {
        self.id_of.get(token).copied().unwrap_or(Self::UNK_ID)
    }

    /// Id only if the token is in the vocabulary.
    pub fn lookup(&self, token: &str) -> Option<u32> {
        self.id_of.get(token).copied()
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    pub fn copy_id(&self, i: usize) -> u32 {
        debug_assert!(i < self.copy_budget);
        (4 + i) as u32
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<u32> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    pub fn decode(&self, ids: &[u32]) -> Vec<String> {
        ids.iter().map(|&i| self.token(i).to_string()).collect()
    }

    /// Hex SHA-256 over the id/token listing; checkpoints store this to
    /// detect dataset/model mismatches.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        for (i, tok) in self.tokens.iter().enumerate() {
            hasher.update(format!("{i}\t{tok}\n").as_bytes());
        }
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Serialize as TSV: `id \t token \t count`, one row per token.
    pub fn save_tsv(&self, path: &Path, header: &[String]) -> Result<()> {
        let mut file =
            std::fs::File::create(path).map_err(|e| Error::io(path.to_path_buf(), e))?;
        let mut body = String::new();
        for line in header {
            body.push_str(&format!("# {line}\n"));
        }
        body.push_str(&format!("# copy_budget={}\n", self.copy_budget));
        for (i, tok) in self.tokens.iter().enumerate() {
            body.push_str(&format!("{i}\t{tok}\t{}\n", self.counts[i]));
        }
        file.write_all(body.as_bytes())
            .map_err(|e| Error::io(path.to_path_buf(), e))
    }

    pub fn load_tsv(path: &Path) -> Result<Vocabulary> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path.to_path_buf(), e))?;
        let mut vocab = Vocabulary {
            tokens: Vec::new(),
            counts: Vec::new(),
            id_of: HashMap::new(),
            copy_budget: 0,
        };
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path.to_path_buf(), e))?;
            if let Some(rest) = line.strip_prefix('#') {
                if let Some(v) = rest.trim().strip_prefix("copy_budget=") {
                    vocab.copy_budget = v
                        .parse()
                        .map_err(|_| Error::data(path, lineno + 1, "bad copy_budget"))?;
                }
                continue;
            }
            let mut parts = line.split('\t');
            let id: usize = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::data(path, lineno + 1, "expected numeric id"))?;
            let token = parts
                .next()
                .ok_or_else(|| Error::data(path, lineno + 1, "expected token column"))?;
            let count: u64 = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::data(path, lineno + 1, "expected count column"))?;
            if id != vocab.tokens.len() {
                return Err(Error::data(path, lineno + 1, "ids must be dense"));
            }
            vocab.push(token.to_string(), count);
        }
        if vocab.tokens.len() < Self::reserved_len(vocab.copy_budget) {
            return Err(Error::data(path, 0, "vocabulary shorter than reserved set"));
        }
        Ok(vocab)
    }
}
