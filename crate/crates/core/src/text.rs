//! Text normalization and the shared word tokenizer.
//!
//! The tokenizer lowercases, keeps runs of alphanumerics (with word-internal
//! apostrophes) together and emits every other non-space character as its own
//! token. Angle-bracket special tokens (`<hateSpeech>`, `<s>`) and the mask
//! literal survive as single tokens.

/// Literal token substituted for topic keywords.
pub const MASK_TOKEN: &str = "#MASK#";

/// Collapses whitespace runs to a single space and trims both ends.
pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Lowercased word/punctuation tokenization used by the metrics and models.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for chunk in text.split_whitespace() {
        tokenize_chunk(chunk, &mut tokens);
    }
    tokens
}

fn tokenize_chunk(chunk: &str, out: &mut Vec<String>) {
    let chars: Vec<char> = chunk.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        if let Some(len) = special_at(&chars[i..]) {
            out.push(chars[i..i + len].iter().collect());
            i += len;
            continue;
        }
        let c = chars[i];
        if c.is_alphanumeric() {
            let start = i;
            i += 1;
            while i < chars.len() {
                let d = chars[i];
                if d.is_alphanumeric() {
                    i += 1;
                } else if (d == '\'' || d == '\u{2019}')
                    && i + 1 < chars.len()
                    && chars[i + 1].is_alphanumeric()
                {
                    i += 2;
                } else {
                    break;
                }
            }
            out.push(chars[start..i].iter().collect::<String>().to_lowercase());
        } else {
            out.push(c.to_lowercase().collect());
            i += 1;
        }
    }
}

/// Length of a protected special token at the start of `chars`, if any.
fn special_at(chars: &[char]) -> Option<usize> {
    let mask: Vec<char> = MASK_TOKEN.chars().collect();
    if chars.starts_with(&mask) {
        return Some(mask.len());
    }
    if chars.first() == Some(&'<') {
        let close = chars.iter().position(|&c| c == '>')?;
        let inner = &chars[1..close];
        let valid = !inner.is_empty()
            && inner
                .iter()
                .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | ':' | '/' | '-'));
        if valid {
            return Some(close + 1);
        }
    }
    None
}

/// Joins tokens back into display text.
pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    tokens
        .iter()
        .map(|t| t.as_ref())
        .collect::<Vec<_>>()
        .join(" ")
}
