/// Lowercases `text` and splits it into alphanumeric runs; every other
/// non-whitespace character becomes a single-character token.
pub fn tokenize(text: &str) -> Vec<String> {
    let lower = text.to_lowercase();
    let mut out = Vec::new();
    let mut word = String::new();
    for ch in lower.chars() {
        if ch.is_alphanumeric() {
            word.push(ch);
            continue;
        }
        if !word.is_empty() {
            out.push(std::mem::take(&mut word));
        }
        if !ch.is_whitespace() {
            out.push(ch.to_string());
        }
    }
    if !word.is_empty() {
        out.push(word);
    }
    out
}

/// Tokenizes and keeps at most `max_len` tokens.
pub fn tokenize_truncated(text: &str, max_len: usize) -> Vec<String> {
    let mut t = tokenize(text);
    t.truncate(max_len);
    t
}
