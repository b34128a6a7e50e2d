//! Pluggable tokenizer hook.
//!
//! Token budgets and repetition checks operate on tokens, but the production
//! tokenizer is external to this crate. The default counts whitespace-delimited
//! tokens; anything smarter plugs in through [`Tokenizer`].

use std::ops::Range;

pub trait Tokenizer {
    /// Byte ranges of the tokens of `text`, in order.
    fn token_spans(&self, text: &str) -> Vec<Range<usize>>;

    fn count(&self, text: &str) -> usize {
        self.token_spans(text).len()
    }

    fn tokens<'a>(&self, text: &'a str) -> Vec<&'a str> {
        self.token_spans(text)
            .into_iter()
            .map(|r| &text[r])
            .collect()
    }

    /// Longest prefix of `text` containing at most `budget` tokens.
    fn truncate_to<'a>(&self, text: &'a str, budget: usize) -> &'a str {
        if budget == 0 {
            return "";
        }
        let spans = self.token_spans(text);
        if spans.len() <= budget {
            text
        } else {
            &text[..spans[budget - 1].end]
        }
    }
}

/// Splits on Unicode whitespace.
#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespaceTokenizer;

impl Tokenizer for WhitespaceTokenizer {
    fn token_spans(&self, text: &str) -> Vec<Range<usize>> {
        let mut spans = Vec::new();
        let mut start = None;
        for (i, ch) in text.char_indices() {
            if ch.is_whitespace() {
                if let Some(s) = start.take() {
                    spans.push(s..i);
                }
            } else if start.is_none() {
                start = Some(i);
            }
        }
        if let Some(s) = start {
            spans.push(s..text.len());
        }
        spans
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spans_match_split_whitespace() {
        let tok = WhitespaceTokenizer;
        let text = "  one two\tthree\nfour ";
        let via_spans = tok.tokens(text);
        let via_std: Vec<&str> = text.split_whitespace().collect();
        assert_eq!(via_spans, via_std);
    }

    #[test]
    fn truncate_keeps_first_tokens() {
        let tok = WhitespaceTokenizer;
        let text = "t0 t1 t2 t3 t4 t5 t6 t7 t8 t9";
        let cut = tok.truncate_to(text, 4);
        assert_eq!(cut, "t0 t1 t2 t3");
        assert_eq!(tok.count(cut), 4);
    }

    #[test]
    fn truncate_is_noop_within_budget() {
        let tok = WhitespaceTokenizer;
        assert_eq!(tok.truncate_to("a b", 10), "a b");
        assert_eq!(tok.truncate_to("", 3), "");
        assert_eq!(tok.truncate_to("a b", 0), "");
    }
}
