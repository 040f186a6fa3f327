use super::{Lang, Sentence};

/// Splits normalized text into tokens.
///
/// Rules, applied to each whitespace-separated chunk:
///
/// * letters, digits and marks form words;
/// * an apostrophe between two letters starts a new token (`don't` → `don 't`);
/// * `.` and `,` between two digits stay inside the number (`3.14`, `1,000`);
/// * `-` between two alphanumerics stays inside the word (`self-made`);
/// * every other character is a token of its own.
pub fn tokenize(text: &str, lang: Lang) -> Sentence {
    let mut tokens = Vec::new();
    for chunk in text.split_whitespace() {
        split_chunk(chunk, &mut tokens);
    }
    Sentence::new(tokens, lang)
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || is_mark(c)
}

// Combining marks (general category M) for the scripts a toolkit like this
// is likely to meet.
fn is_mark(c: char) -> bool {
    matches!(c as u32, 0x0300..=0x036F | 0x0900..=0x097F | 0x1AB0..=0x1AFF | 0x20D0..=0x20FF)
        && !c.is_alphanumeric()
}

fn split_chunk(chunk: &str, out: &mut Vec<String>) {
    let chars: Vec<char> = chunk.chars().collect();
    let mut word = String::new();
    let flush = |word: &mut String, out: &mut Vec<String>| {
        if !word.is_empty() {
            out.push(std::mem::take(word));
        }
    };
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let prev = i.checked_sub(1).map(|j| chars[j]);
        let next = chars.get(i + 1).copied();
        if is_word_char(c) {
            word.push(c);
        } else if c == '\'' && prev.is_some_and(char::is_alphabetic) && next.is_some_and(char::is_alphabetic) {
            flush(&mut word, out);
            word.push(c);
        } else if (c == '.' || c == ',')
            && prev.is_some_and(|p| p.is_ascii_digit())
            && next.is_some_and(|n| n.is_ascii_digit())
            && !word.is_empty()
        {
            word.push(c);
        } else if c == '-' && prev.is_some_and(is_word_char) && next.is_some_and(is_word_char) && !word.is_empty() {
            word.push(c);
        } else {
            flush(&mut word, out);
            out.push(c.to_string());
        }
        i += 1;
    }
    flush(&mut word, out);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        tokenize(s, Lang::from("en")).tokens
    }

    #[test]
    fn detaches_punctuation() {
        assert_eq!(toks("Hello, world."), ["Hello", ",", "world", "."]);
        assert_eq!(toks("a b"), ["a", "b"]);
        assert_eq!(toks("(x)!"), ["(", "x", ")", "!"]);
        assert_eq!(toks("\"quoted\""), ["\"", "quoted", "\""]);
    }

    #[test]
    fn apostrophe_rule() {
        assert_eq!(toks("don't"), ["don", "'t"]);
        assert_eq!(toks("'tis"), ["'", "tis"]);
        assert_eq!(toks("dogs'"), ["dogs", "'"]);
    }

    #[test]
    fn numbers_and_hyphens() {
        assert_eq!(toks("3.14 and 1,000."), ["3.14", "and", "1,000", "."]);
        assert_eq!(toks("self-made"), ["self-made"]);
        assert_eq!(toks("-x"), ["-", "x"]);
        assert_eq!(toks("x--y"), ["x", "-", "-", "y"]);
    }

    #[test]
    fn empty_input() {
        assert!(toks("").is_empty());
        assert!(toks("   ").is_empty());
    }

    #[test]
    fn ellipsis_splits_per_char() {
        assert_eq!(toks("wait..."), ["wait", ".", ".", "."]);
    }
}
