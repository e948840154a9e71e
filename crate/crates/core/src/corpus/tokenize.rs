use serde::{Deserialize, Serialize};

/// One lowercase token of a title.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub is_word: bool,
}

impl Token {
    pub fn word(surface: impl Into<String>) -> Self {
        Token {
            surface: surface.into(),
            is_word: true,
        }
    }

    pub fn punct(surface: impl Into<String>) -> Self {
        Token {
            surface: surface.into(),
            is_word: false,
        }
    }
}

fn is_joiner(c: char) -> bool {
    matches!(c, '-' | '\'' | '\u{2019}' | '\u{2010}' | '\u{2011}')
}

/// Splits a title into lowercase tokens.
///
/// A word is a maximal run of letters and digits, where a hyphen or
/// apostrophe counts as part of the word only when it sits between two
/// alphanumerics. Every other non-whitespace character becomes its own
/// non-word token.
pub fn tokenize(text: &str) -> Vec<Token> {
    let chars: Vec<char> = text.chars().flat_map(char::to_lowercase).collect();
    let mut tokens = Vec::new();
    let mut current = String::new();
    for (i, &c) in chars.iter().enumerate() {
        if c.is_alphanumeric() {
            current.push(c);
            continue;
        }
        let inner = is_joiner(c)
            && !current.is_empty()
            && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric());
        if inner {
            current.push(c);
            continue;
        }
        if !current.is_empty() {
            tokens.push(Token::word(std::mem::take(&mut current)));
        }
        if !c.is_whitespace() {
            tokens.push(Token::punct(c.to_string()));
        }
    }
    if !current.is_empty() {
        tokens.push(Token::word(current));
    }
    tokens
}

/// The word-only view used by language models and lexicon lookups.
pub fn words(tokens: &[Token]) -> Vec<&str> {
    tokens
        .iter()
        .filter(|t| t.is_word)
        .map(|t| t.surface.as_str())
        .collect()
}
