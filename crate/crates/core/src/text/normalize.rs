/// Punctuation variants and their canonical ASCII replacement.
pub const PUNCTUATION_MAP: &[(char, &str)] = &[
    ('\u{201C}', "\""), // left double quotation mark
    ('\u{201D}', "\""), // right double quotation mark
    ('\u{201E}', "\""), // double low-9 quotation mark
    ('\u{201F}', "\""), // double high-reversed-9 quotation mark
    ('\u{00AB}', "\""), // left guillemet
    ('\u{00BB}', "\""), // right guillemet
    ('\u{2033}', "\""), // double prime
    ('\u{FF02}', "\""), // fullwidth quotation mark
    ('\u{2018}', "'"),  // left single quotation mark
    ('\u{2019}', "'"),  // right single quotation mark
    ('\u{201A}', "'"),  // single low-9 quotation mark
    ('\u{201B}', "'"),  // single high-reversed-9 quotation mark
    ('\u{2032}', "'"),  // prime
    ('\u{FF07}', "'"),  // fullwidth apostrophe
    ('\u{2010}', "-"),  // hyphen
    ('\u{2011}', "-"),  // non-breaking hyphen
    ('\u{2012}', "-"),  // figure dash
    ('\u{2013}', "-"),  // en dash
    ('\u{2014}', "-"),  // em dash
    ('\u{2015}', "-"),  // horizontal bar
    ('\u{2212}', "-"),  // minus sign
    ('\u{2026}', "..."), // horizontal ellipsis
];

/// Format characters removed alongside the C0/C1 controls.
const INVISIBLE: &[char] = &['\u{00AD}', '\u{200B}', '\u{200C}', '\u{200D}', '\u{2060}', '\u{FEFF}'];

/// Canonicalizes one line of text.
///
/// Every Unicode whitespace character counts as a separator, runs of
/// separators collapse to one ASCII space and the ends are trimmed. Control
/// and zero-width format characters are dropped, and the characters in
/// [`PUNCTUATION_MAP`] are replaced by their ASCII form.
pub fn normalize(line: &str) -> String {
    let mut out = String::with_capacity(line.len());
    let mut pending_space = false;
    for c in line.chars() {
        if c.is_whitespace() {
            pending_space = !out.is_empty();
            continue;
        }
        if c.is_control() || INVISIBLE.contains(&c) {
            continue;
        }
        if pending_space {
            out.push(' ');
            pending_space = false;
        }
        match PUNCTUATION_MAP.iter().find(|(from, _)| *from == c) {
            Some((_, to)) => out.push_str(to),
            None => out.push(c),
        }
    }
    out
}
