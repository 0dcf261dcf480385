//! Normalization and tokenization shared by every downstream model.
//!
//! Rules, applied to each whitespace-delimited chunk of the NFC-normalized
//! input:
//!
//! * chunks starting with `http://`, `https://` or `www.` are dropped
//!   (`url_strip`), chunks starting with `@` are dropped (`mention_strip`);
//! * `!` and `?` are counted before any stripping;
//! * letters and digits form tokens; everything else separates them, except
//!   a leading `#` (hashtags), an apostrophe between two word characters,
//!   `.`/`,` between two digits and a currency sign directly before a digit;
//! * tokens are lowercased; a token whose letters were all uppercase (two or
//!   more letters) is flagged in `caps`.
//!
//! Stopwords are not removed here; each model applies its own list.

use serde::{Deserialize, Serialize};
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PrepOptions {
    pub url_strip: bool,
    pub mention_strip: bool,
    pub keep_hashtags: bool,
}

impl Default for PrepOptions {
    fn default() -> Self {
        PrepOptions {
            url_strip: true,
            mention_strip: true,
            keep_hashtags: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct TokenizedText {
    pub raw: String,
    pub tokens: Vec<String>,
    /// Hashtag tokens (with their `#`), in order of appearance.
    pub hashtags: Vec<String>,
    /// Parallel to `tokens`: the token was written in ALL CAPS.
    pub caps: Vec<bool>,
    pub exclamations: usize,
    pub questions: usize,
}

impl TokenizedText {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Tokens re-joined by single spaces.
    pub fn joined(&self) -> String {
        self.tokens.join(" ")
    }
}

const CURRENCY: &[char] = &['$', '€', '£', '¥'];

fn is_url(chunk: &str) -> bool {
    let lower = chunk.to_lowercase();
    lower.starts_with("http://") || lower.starts_with("https://") || lower.starts_with("www.")
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

pub fn tokenize(raw: &str, options: &PrepOptions) -> TokenizedText {
    let normalized: String = raw.nfc().collect();
    let mut out = TokenizedText {
        raw: raw.to_string(),
        ..Default::default()
    };

    for chunk in normalized.split_whitespace() {
        if options.url_strip && is_url(chunk) {
            continue;
        }
        if options.mention_strip && chunk.starts_with('@') {
            continue;
        }
        out.exclamations += chunk.chars().filter(|&c| c == '!').count();
        out.questions += chunk.chars().filter(|&c| c == '?').count();
        split_chunk(chunk, options, &mut out);
    }
    out
}

fn split_chunk(chunk: &str, options: &PrepOptions, out: &mut TokenizedText) {
    let chars: Vec<char> = chunk.chars().collect();
    let mut current = String::new();
    let mut is_hashtag = false;

    for (i, &c) in chars.iter().enumerate() {
        let prev = current.chars().last();
        let next = chars.get(i + 1).copied();
        let next_word = next.is_some_and(is_word_char);
        let next_digit = next.is_some_and(|n| n.is_ascii_digit());

        if is_word_char(c) || (is_combining_mark(c) && !current.is_empty()) {
            current.push(c);
        } else if c == '#' && current.is_empty() && next_word {
            is_hashtag = true;
            if options.keep_hashtags {
                current.push('#');
            }
        } else if (c == '\'' || c == '\u{2019}') && prev.is_some_and(is_word_char) && next_word {
            current.push('\'');
        } else if (c == '.' || c == ',') && prev.is_some_and(|p| p.is_ascii_digit()) && next_digit {
            current.push(c);
        } else if CURRENCY.contains(&c) && current.is_empty() && next_digit {
            current.push(c);
        } else {
            flush(&mut current, &mut is_hashtag, options, out);
        }
    }
    flush(&mut current, &mut is_hashtag, options, out);
}

fn flush(current: &mut String, is_hashtag: &mut bool, options: &PrepOptions, out: &mut TokenizedText) {
    if current.is_empty() {
        *is_hashtag = false;
        return;
    }
    let letters: Vec<char> = current.chars().filter(|c| c.is_alphabetic()).collect();
    let caps = letters.len() >= 2 && letters.iter().all(|c| c.is_uppercase());
    let token: String = current.to_lowercase().nfc().collect();
    if *is_hashtag && options.keep_hashtags {
        out.hashtags.push(token.clone());
    }
    out.tokens.push(token);
    out.caps.push(caps);
    current.clear();
    *is_hashtag = false;
}

/// Tokenize with default options and re-join; used to normalize keywords
/// and gazetteer surfaces so they compare equal to token n-grams.
pub fn normalize_phrase(phrase: &str) -> String {
    tokenize(phrase, &PrepOptions::default()).joined()
}

/// Contiguous n-grams joined by single spaces. Empty when `n` is zero or
/// larger than the token count.
pub fn ngrams(tokens: &[String], n: usize) -> Vec<String> {
    if n == 0 || n > tokens.len() {
        return Vec::new();
    }
    tokens.windows(n).map(|w| w.join(" ")).collect()
}

/// Strip a leading `#` if present.
pub fn strip_hash(token: &str) -> &str {
    token.strip_prefix('#').unwrap_or(token)
}
