//! Fallback tokenizer and vocabulary.
//!
//! CJK spans are split per code point; contiguous Latin/digit spans
//! become whitespace-delimited word tokens; any other non-whitespace
//! character is its own token. Position 0 of every sequence is a
//! synthetic start-of-review token whose encoder output serves as the
//! pooled review vector.

use super::EncoderError;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

pub const PAD_TOKEN: &str = "[PAD]";
pub const START_TOKEN: &str = "[START]";
pub const UNK_TOKEN: &str = "[UNK]";

pub const PAD_ID: u32 = 0;
pub const START_ID: u32 = 1;
pub const UNK_ID: u32 = 2;

fn is_word_char(c: char) -> bool {
    c.is_ascii_alphanumeric()
}

/// Split text into token strings, truncated to `max_len - 1` content
/// tokens, with the start token prepended.
pub fn tokenize(text: &str, max_len: usize) -> Result<Vec<String>, EncoderError> {
    if text.chars().all(|c| c.is_whitespace()) {
        return Err(EncoderError::EmptyText);
    }
    assert!(max_len >= 2, "max_len must be at least 2");
    let mut tokens = vec![START_TOKEN.to_string()];
    let mut word = String::new();
    for c in text.chars() {
        if tokens.len() == max_len {
            break;
        }
        if is_word_char(c) {
            word.push(c);
            continue;
        }
        if !word.is_empty() {
            tokens.push(std::mem::take(&mut word));
            if tokens.len() == max_len {
                break;
            }
        }
        if c.is_whitespace() {
            continue;
        }
        tokens.push(c.to_string());
    }
    if !word.is_empty() && tokens.len() < max_len {
        tokens.push(word);
    }
    debug_assert!(tokens.len() <= max_len);
    Ok(tokens)
}

/// Token-to-id mapping with fixed special tokens.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Vocab {
    tokens: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, u32>,
}

impl Vocab {
    pub fn new() -> Self {
        let mut v = Vocab {
            tokens: vec![
                PAD_TOKEN.to_string(),
                START_TOKEN.to_string(),
                UNK_TOKEN.to_string(),
            ],
            index: HashMap::new(),
        };
        v.rebuild_index();
        v
    }

    /// Restore the id map after deserialization.
    pub fn rebuild_index(&mut self) {
        self.index = self
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Add every token of `texts` in first-seen order.
    pub fn extend_from_texts<'a>(
        &mut self,
        texts: impl IntoIterator<Item = &'a str>,
        max_len: usize,
    ) -> Result<(), EncoderError> {
        for text in texts {
            for token in tokenize(text, max_len)? {
                if !self.index.contains_key(&token) {
                    self.index.insert(token.clone(), self.tokens.len() as u32);
                    self.tokens.push(token);
                }
            }
        }
        Ok(())
    }

    pub fn id_of(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(|s| s.as_str())
    }

    pub fn to_ids(&self, tokens: &[String]) -> Vec<u32> {
        tokens.iter().map(|t| self.id_of(t)).collect()
    }
}

impl Default for Vocab {
    fn default() -> Self {
        Vocab::new()
    }
}
