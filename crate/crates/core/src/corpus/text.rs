use crate::error::{Error, Result};

/// Input limit of the document encoder the pipeline stands in for.
pub const DEFAULT_TRUNCATION_LIMIT: usize = 4096;
pub const DEFAULT_HEAD_FRACTION: f64 = 0.5;

/// Lowercases and splits on runs of non-alphanumeric characters.
///
/// Paragraph numbers (`12.` at the start of a line) are structural noise in
/// judgment texts and are dropped before splitting.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for line in text.lines() {
        let body = strip_paragraph_number(line);
        tokens.extend(
            body.split(|c: char| !c.is_alphanumeric())
                .filter(|t| !t.is_empty())
                .map(str::to_lowercase),
        );
    }
    tokens
}

fn strip_paragraph_number(line: &str) -> &str {
    let trimmed = line.trim_start();
    let digits = trimmed.bytes().take_while(u8::is_ascii_digit).count();
    if digits > 0 && trimmed[digits..].starts_with('.') {
        &trimmed[digits + 1..]
    } else {
        line
    }
}

/// Keeps the first `floor(limit * head_fraction)` items and fills the rest of
/// the budget from the end of the sequence.
pub fn head_tail_truncate<T: Clone>(tokens: &[T], limit: usize, head_fraction: f64) -> Result<Vec<T>> {
    if limit < 2 {
        return Err(Error::Config(format!("truncation limit must be at least 2, got {limit}")));
    }
    if !(0.0..=1.0).contains(&head_fraction) {
        return Err(Error::Config(format!("head fraction must lie in [0, 1], got {head_fraction}")));
    }
    if tokens.len() <= limit {
        return Ok(tokens.to_vec());
    }
    let head = ((limit as f64) * head_fraction).floor() as usize;
    let tail = limit - head;
    let mut out = Vec::with_capacity(limit);
    out.extend_from_slice(&tokens[..head]);
    out.extend_from_slice(&tokens[tokens.len() - tail..]);
    Ok(out)
}
