//! The case-folded character alphabet shared by every head.

use serde::{Deserialize, Serialize};

use crate::corpus::PUNCTUATION;

/// 26 letters + 10 digits + 6 punctuation marks = 42 character classes.
/// Index 42 is the head-specific special class: CTC blank, attention EOS,
/// or segmentation background.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassSet {
    chars: Vec<char>,
}

pub const NUM_CHAR_CLASSES: usize = 42;

impl Default for ClassSet {
    fn default() -> Self {
        Self::standard()
    }
}

impl ClassSet {
    pub fn standard() -> Self {
        let mut chars: Vec<char> = ('a'..='z').collect();
        chars.extend('0'..='9');
        chars.extend(PUNCTUATION);
        debug_assert_eq!(chars.len(), NUM_CHAR_CLASSES);
        ClassSet { chars }
    }

    pub fn num_chars(&self) -> usize {
        self.chars.len()
    }

    /// Character classes plus the special class.
    pub fn num_classes(&self) -> usize {
        self.chars.len() + 1
    }

    pub fn blank_index(&self) -> usize {
        self.chars.len()
    }

    pub fn eos_index(&self) -> usize {
        self.chars.len()
    }

    pub fn background_index(&self) -> usize {
        self.chars.len()
    }

    /// Class index of a character, case-folded.
    pub fn index_of(&self, c: char) -> Option<usize> {
        let folded = c.to_ascii_lowercase();
        self.chars.iter().position(|&x| x == folded)
    }

    pub fn char_at(&self, idx: usize) -> Option<char> {
        self.chars.get(idx).copied()
    }

    /// Render a sequence of character indices; special indices are skipped.
    pub fn indices_to_string(&self, indices: &[usize]) -> String {
        indices.iter().filter_map(|&i| self.char_at(i)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bijective_over_charset() {
        let cs = ClassSet::standard();
        assert_eq!(cs.num_chars(), 42);
        for i in 0..cs.num_chars() {
            let c = cs.char_at(i).unwrap();
            assert_eq!(cs.index_of(c), Some(i));
        }
        assert_eq!(cs.index_of('A'), cs.index_of('a'));
        assert_eq!(cs.index_of('€'), None);
        assert_eq!(cs.blank_index(), 42);
        assert!(cs.char_at(cs.blank_index()).is_none());
    }
}
