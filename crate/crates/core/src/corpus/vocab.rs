use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::column::TaggedSentence;

pub const PAD: usize = 0;
pub const UNK: usize = 1;
const PAD_SYMBOL: &str = "<pad>";
const UNK_SYMBOL: &str = "<unk>";

/// Word and character indices. Words are lowercased, characters keep case.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    words: IndexMap<String, usize>,
    chars: IndexMap<char, usize>,
    /// Task name to word id, present only when task tokens are prepended.
    task_tokens: Option<IndexMap<String, usize>>,
}

/// Literal surface form of a task token, e.g. `<<upos>>`.
pub fn task_token(name: &str) -> String {
    format!("<<{name}>>")
}

impl Vocabulary {
    /// Index the lowercased training tokens and all their characters. When
    /// `task_names` is given, one `<<name>>` word per task is appended; the
    /// char table is not extended, so unseen task-token characters are UNK.
    pub fn build<'a>(
        sentences: impl IntoIterator<Item = &'a TaggedSentence>,
        task_names: Option<&[String]>,
    ) -> Vocabulary {
        let mut words = IndexMap::new();
        words.insert(PAD_SYMBOL.to_string(), PAD);
        words.insert(UNK_SYMBOL.to_string(), UNK);
        // chars use sentinel code points that cannot collide with text
        let mut chars = IndexMap::new();
        chars.insert('\u{0}', PAD);
        chars.insert('\u{1}', UNK);

        let add_chars = |s: &str, chars: &mut IndexMap<char, usize>| {
            for c in s.chars() {
                let n = chars.len();
                chars.entry(c).or_insert(n);
            }
        };
        for s in sentences {
            for (tok, low) in s.tokens.iter().zip(&s.lowercased) {
                let n = words.len();
                words.entry(low.clone()).or_insert(n);
                add_chars(tok, &mut chars);
            }
        }
        let task_tokens = task_names.map(|names| {
            let mut map = IndexMap::new();
            for name in names {
                let tok = task_token(name);
                let n = words.len();
                // the char table stays training-text only; unseen task-token
                // characters fall back to UNK
                let id = *words.entry(tok).or_insert(n);
                map.insert(name.clone(), id);
            }
            map
        });
        Vocabulary {
            words,
            chars,
            task_tokens,
        }
    }

    pub fn num_words(&self) -> usize {
        self.words.len()
    }

    pub fn num_chars(&self) -> usize {
        self.chars.len()
    }

    /// Look up a word (lowercased first); unknown words map to UNK.
    pub fn word_id(&self, word: &str) -> usize {
        if let Some(&id) = self.words.get(word) {
            return id;
        }
        self.words.get(&word.to_lowercase()).copied().unwrap_or(UNK)
    }

    pub fn char_id(&self, c: char) -> usize {
        self.chars.get(&c).copied().unwrap_or(UNK)
    }

    pub fn char_ids(&self, word: &str) -> Vec<usize> {
        word.chars().map(|c| self.char_id(c)).collect()
    }

    pub fn contains_word(&self, word: &str) -> bool {
        self.words.contains_key(word)
    }

    pub fn contains_char(&self, c: char) -> bool {
        self.chars.contains_key(&c)
    }

    /// Words in id order, reserved entries first.
    pub fn words(&self) -> impl Iterator<Item = (&str, usize)> {
        self.words.iter().map(|(w, &i)| (w.as_str(), i))
    }

    pub fn task_token_id(&self, task: &str) -> Option<usize> {
        self.task_tokens.as_ref()?.get(task).copied()
    }

    pub fn has_task_tokens(&self) -> bool {
        self.task_tokens.is_some()
    }

    pub fn is_reserved(id: usize) -> bool {
        id == PAD || id == UNK
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sent(tokens: &[&str]) -> TaggedSentence {
        TaggedSentence::new(
            tokens.iter().map(|s| s.to_string()).collect(),
            tokens.iter().map(|_| "O".to_string()).collect(),
            0,
        )
        .unwrap()
    }

    #[test]
    fn words_lowercased_chars_not() {
        let v = Vocabulary::build(&[sent(&["The", "the"])], None);
        assert_eq!(v.num_words(), 3);
        assert!(v.contains_word("the"));
        assert!(v.contains_char('T') && v.contains_char('t'));
        assert_eq!(v.word_id("THE"), v.word_id("the"));
        assert!(!v.has_task_tokens());
    }

    #[test]
    fn task_tokens_added_when_requested() {
        let names = vec!["upos".to_string(), "chunk".to_string()];
        let v = Vocabulary::build(&[sent(&["a"])], Some(&names));
        assert!(v.contains_word("<<upos>>"));
        assert!(v.contains_word("<<chunk>>"));
        assert_eq!(v.task_token_id("upos"), Some(3));
        assert_eq!(v.num_words(), 5);
        assert_eq!(v.num_chars(), 3);
        assert_eq!(v.char_id('<'), UNK);
    }

    #[test]
    fn reserved_ids_and_unknowns() {
        let v = Vocabulary::build(&[sent(&["x", "y"])], None);
        assert_eq!(v.word_id("x"), 2);
        assert_eq!(v.word_id("zzz"), UNK);
        assert_eq!(v.char_id('q'), UNK);
        let ids: Vec<usize> = v.words().map(|(_, i)| i).collect();
        assert_eq!(ids, (0..v.num_words()).collect::<Vec<_>>());
    }
}
