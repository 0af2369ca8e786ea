/// Lowercase, split punctuation into single-character tokens, collapse
/// whitespace. Deterministic; empty text yields an empty list.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut word = String::new();
    for ch in text.chars() {
        if ch.is_whitespace() {
            if !word.is_empty() {
                tokens.push(std::mem::take(&mut word));
            }
        } else if ch.is_alphanumeric() {
            for lc in ch.to_lowercase() {
                word.push(lc);
            }
        } else {
            if !word.is_empty() {
                tokens.push(std::mem::take(&mut word));
            }
            tokens.push(ch.to_string());
        }
    }
    if !word.is_empty() {
        tokens.push(word);
    }
    tokens
}

/// Keep the head of a sequence; never lengthens and is idempotent.
pub fn truncate<T>(tokens: &mut Vec<T>, max_len: usize) {
    tokens.truncate(max_len);
}
