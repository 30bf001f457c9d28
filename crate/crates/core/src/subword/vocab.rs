use std::collections::HashMap;

use crate::error::{Error, Result};

/// Dense bijection between subword pieces and ids. The five specials
/// occupy ids 0..5 in a fixed order; regular pieces follow.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenVocab {
    pieces: Vec<String>,
    index: HashMap<String, u32>,
}

impl TokenVocab {
    pub const PAD: u32 = 0;
    pub const BOS: u32 = 1;
    pub const EOS: u32 = 2;
    pub const UNK: u32 = 3;
    pub const MASK: u32 = 4;
    pub const SPECIALS: usize = 5;
    pub const SPECIAL_NAMES: [&'static str; 5] = ["<pad>", "<s>", "</s>", "<unk>", "<mask>"];

    /// Regular pieces in id order; duplicates and special names are skipped.
    pub fn from_pieces(pieces: impl IntoIterator<Item = String>) -> Self {
        let mut vocab = Self {
            pieces: Vec::new(),
            index: HashMap::new(),
        };
        for name in Self::SPECIAL_NAMES {
            vocab.push(name.to_string());
        }
        for p in pieces {
            if !vocab.index.contains_key(&p) {
                vocab.push(p);
            }
        }
        vocab
    }

    fn push(&mut self, piece: String) {
        self.index.insert(piece.clone(), self.pieces.len() as u32);
        self.pieces.push(piece);
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, piece: &str) -> u32 {
        self.index.get(piece).copied().unwrap_or(Self::UNK)
    }

    pub fn get(&self, piece: &str) -> Option<u32> {
        self.index.get(piece).copied()
    }

    pub fn piece(&self, id: u32) -> Option<&str> {
        self.pieces.get(id as usize).map(String::as_str)
    }

    pub fn is_special(id: u32) -> bool {
        (id as usize) < Self::SPECIALS
    }

    pub fn ids<S: AsRef<str>>(&self, pieces: &[S]) -> Vec<u32> {
        pieces.iter().map(|p| self.id(p.as_ref())).collect()
    }

    /// Pieces for ids, skipping PAD/BOS/EOS/MASK.
    pub fn pieces_for(&self, ids: &[u32]) -> Vec<String> {
        ids.iter()
            .filter(|&&i| !matches!(i, Self::PAD | Self::BOS | Self::EOS | Self::MASK))
            .map(|&i| self.piece(i).unwrap_or("<unk>").to_string())
            .collect()
    }

    /// One regular piece per line; line `n` holds id `n + SPECIALS`.
    pub fn to_text(&self) -> String {
        self.pieces[Self::SPECIALS..]
            .iter()
            .map(|p| format!("{p}\n"))
            .collect()
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let pieces: Vec<String> = text.lines().map(str::to_string).collect();
        for (n, p) in pieces.iter().enumerate() {
            if p.is_empty() || p.contains(char::is_whitespace) {
                return Err(Error::data(Some(n + 1), format!("invalid vocabulary piece {p:?}")));
            }
        }
        let vocab = Self::from_pieces(pieces.iter().cloned());
        if vocab.len() != pieces.len() + Self::SPECIALS {
            return Err(Error::data(None, "duplicate vocabulary piece"));
        }
        Ok(vocab)
    }
}
