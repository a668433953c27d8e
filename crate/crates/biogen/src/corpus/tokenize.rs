//! Deterministic rule-based tokenizer shared by every stage of the pipeline.
//!
//! Rules: text is lowercased, whitespace collapsed, and the punctuation
//! characters `( ) , . ; : " –` plus `-` and `/` are split off as standalone
//! tokens. The exception is `-` and `/` between two ASCII digits, which stay
//! inside the token so dates like `16/04/1927` and `1985-09-03` survive as
//! single tokens.

/// Characters that always become standalone tokens.
const ALWAYS_SPLIT: &[char] = &['(', ')', ',', '.', ';', ':', '"', '–'];

/// Characters that split unless they sit between two ASCII digits.
const DIGIT_JOINERS: &[char] = &['-', '/'];

/// Tokenize a string into lowercased tokens. Empty input yields an empty
/// sequence.
pub fn tokenize(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.to_lowercase().chars().collect();
    let mut tokens = Vec::new();
    let mut current = String::new();

    for (i, &c) in chars.iter().enumerate() {
        if c.is_whitespace() {
            flush(&mut current, &mut tokens);
        } else if ALWAYS_SPLIT.contains(&c) {
            flush(&mut current, &mut tokens);
            tokens.push(c.to_string());
        } else if DIGIT_JOINERS.contains(&c) {
            let prev_digit = i > 0 && chars[i - 1].is_ascii_digit();
            let next_digit = i + 1 < chars.len() && chars[i + 1].is_ascii_digit();
            if prev_digit && next_digit {
                current.push(c);
            } else {
                flush(&mut current, &mut tokens);
                tokens.push(c.to_string());
            }
        } else {
            current.push(c);
        }
    }
    flush(&mut current, &mut tokens);
    tokens
}

fn flush(current: &mut String, tokens: &mut Vec<String>) {
    if !current.is_empty() {
        tokens.push(std::mem::take(current));
    }
}

/// Join tokens with single spaces, the inverse-ish of [`tokenize`] used when
/// writing generated sentences.
pub fn detokenize(tokens: &[String]) -> String {
    tokens.join(" ")
}
