//! Canonical name normalization and tokenization shared by the graph,
//! the gazetteer and the query templates.

/// Maximum length of a normalized entity name, in characters.
pub const MAX_NAME_CHARS: usize = 256;

/// Lowercases, trims, and collapses every internal whitespace run into a
/// single underscore. `"  Half   Cheetah "` becomes `"half_cheetah"`.
pub fn normalize_name(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    for (i, word) in raw.split_whitespace().enumerate() {
        if i > 0 {
            out.push('_');
        }
        out.extend(word.chars().flat_map(char::to_lowercase));
    }
    out
}

/// True for characters that form a token on their own (CJK ideographs,
/// kana, hangul).
pub fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3040..=0x30FF     // hiragana, katakana
        | 0x3400..=0x4DBF   // CJK extension A
        | 0x4E00..=0x9FFF   // CJK unified ideographs
        | 0xAC00..=0xD7AF   // hangul syllables
        | 0xF900..=0xFAFF   // compatibility ideographs
        | 0x20000..=0x2FA1F)
}

fn is_word_char(c: char) -> bool {
    (c.is_alphanumeric() || c == '_' || c == '-') && !is_cjk(c)
}

/// A lowercased token with its byte span in the source text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub start: usize,
    pub end: usize,
    pub cjk: bool,
}

/// Splits text into word tokens on whitespace and punctuation. Each CJK
/// character becomes its own token.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut word_start: Option<usize> = None;
    for (i, c) in text.char_indices() {
        if is_word_char(c) {
            word_start.get_or_insert(i);
            continue;
        }
        if let Some(start) = word_start.take() {
            tokens.push(word(text, start, i));
        }
        if is_cjk(c) {
            tokens.push(Token {
                text: c.to_lowercase().collect(),
                start: i,
                end: i + c.len_utf8(),
                cjk: true,
            });
        }
    }
    if let Some(start) = word_start {
        tokens.push(word(text, start, text.len()));
    }
    tokens
}

fn word(text: &str, start: usize, end: usize) -> Token {
    Token {
        text: text[start..end].to_lowercase(),
        start,
        end,
        cjk: false,
    }
}

/// Joins a token run into the key it would have as a normalized name:
/// words are joined by `_`, adjacent CJK characters are concatenated.
pub fn join_tokens(tokens: &[Token]) -> String {
    let mut out = String::new();
    for (i, t) in tokens.iter().enumerate() {
        if i > 0 && !(t.cjk && tokens[i - 1].cjk) {
            out.push('_');
        }
        out.push_str(&t.text);
    }
    out
}
