//! American Soundex.
//!
//! The first letter is kept; the rest map to digit groups
//! (b f p v = 1, c g j k q s x z = 2, d t = 3, l = 4, m n = 5, r = 6).
//! Vowels and `y` separate equal digits, `h` and `w` do not. The result is
//! padded or truncated to one letter plus three digits.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("no ASCII letters in {0:?}")]
pub struct NoLetters(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SoundexCode([u8; 4]);

impl SoundexCode {
    pub fn as_str(&self) -> &str {
        std::str::from_utf8(&self.0).expect("ascii")
    }
}

impl fmt::Display for SoundexCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn digit(c: u8) -> Option<u8> {
    match c {
        b'b' | b'f' | b'p' | b'v' => Some(b'1'),
        b'c' | b'g' | b'j' | b'k' | b'q' | b's' | b'x' | b'z' => Some(b'2'),
        b'd' | b't' => Some(b'3'),
        b'l' => Some(b'4'),
        b'm' | b'n' => Some(b'5'),
        b'r' => Some(b'6'),
        _ => None,
    }
}

/// First letter (uppercase) followed by every emitted digit, untruncated.
pub(crate) fn raw_code(token: &str) -> Result<(u8, Vec<u8>), NoLetters> {
    let mut letters = token
        .bytes()
        .filter(u8::is_ascii_alphabetic)
        .map(|b| b.to_ascii_lowercase());
    let first = letters.next().ok_or_else(|| NoLetters(token.to_string()))?;
    let mut digits = Vec::new();
    let mut last = digit(first);
    for c in letters {
        match digit(c) {
            Some(d) => {
                if Some(d) != last {
                    digits.push(d);
                }
                last = Some(d);
            }
            None if c == b'h' || c == b'w' => {}
            None => last = None,
        }
    }
    Ok((first.to_ascii_uppercase(), digits))
}

pub fn soundex(token: &str) -> Result<SoundexCode, NoLetters> {
    let (first, digits) = raw_code(token)?;
    let mut code = [first, b'0', b'0', b'0'];
    for (slot, d) in code[1..].iter_mut().zip(digits) {
        *slot = d;
    }
    Ok(SoundexCode(code))
}
