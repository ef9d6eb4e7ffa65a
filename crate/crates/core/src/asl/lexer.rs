// SPDX-License-Identifier: Apache-2.0

use crate::bits::Bits;

use super::AslError;

#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) enum Tok {
    Ident(String),
    Int(i128),
    Bits(Bits),
    Punct(&'static str),
}

#[derive(Clone, Debug)]
pub(crate) struct Token {
    pub tok: Tok,
    pub line: usize,
    pub col: usize,
}

impl Token {
    pub fn is_punct(&self, p: &str) -> bool {
        matches!(&self.tok, Tok::Punct(q) if *q == p)
    }

    pub fn is_word(&self, w: &str) -> bool {
        matches!(&self.tok, Tok::Ident(i) if i == w)
    }
}

// Longest first so that `<<` wins over `<`.
const PUNCT: &[&str] = &[
    "==", "!=", "<=", ">=", "<<", "&&", "||", "(", ")", "[", "]", ",", ";", ":", "=", "<", ">",
    "+", "-", "*", "!",
];

pub(crate) fn tokenize(text: &str) -> Result<Vec<Token>, AslError> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let chars: Vec<char> = line.chars().collect();
        let mut i = 0;
        'outer: while i < chars.len() {
            let c = chars[i];
            let col = i + 1;
            if c.is_whitespace() {
                i += 1;
                continue;
            }
            if c == '/' && chars.get(i + 1) == Some(&'/') {
                break;
            }
            if c == '\'' {
                let start = i + 1;
                let mut j = start;
                while j < chars.len() && chars[j] != '\'' {
                    j += 1;
                }
                if j >= chars.len() {
                    return Err(AslError::Syntax {
                        line: line_no,
                        col,
                        msg: "unterminated bit-string literal".into(),
                    });
                }
                let lit: String = chars[start..j].iter().filter(|c| **c != ' ').collect();
                let bits = lit.parse::<Bits>().map_err(|_| AslError::Syntax {
                    line: line_no,
                    col,
                    msg: format!("invalid bit-string literal '{lit}'"),
                })?;
                out.push(Token {
                    tok: Tok::Bits(bits),
                    line: line_no,
                    col,
                });
                i = j + 1;
                continue;
            }
            if c.is_ascii_digit() {
                let mut j = i;
                while j < chars.len() && (chars[j].is_ascii_alphanumeric() || chars[j] == '_') {
                    j += 1;
                }
                let lit: String = chars[i..j].iter().filter(|c| **c != '_').collect();
                let value = if let Some(hex) = lit.strip_prefix("0x") {
                    i128::from_str_radix(hex, 16)
                } else {
                    lit.parse::<i128>()
                }
                .map_err(|_| AslError::Syntax {
                    line: line_no,
                    col,
                    msg: format!("invalid integer literal `{lit}`"),
                })?;
                out.push(Token {
                    tok: Tok::Int(value),
                    line: line_no,
                    col,
                });
                i = j;
                continue;
            }
            if c.is_ascii_alphabetic() || c == '_' {
                let mut j = i;
                while j < chars.len() && (chars[j].is_ascii_alphanumeric() || chars[j] == '_') {
                    j += 1;
                }
                out.push(Token {
                    tok: Tok::Ident(chars[i..j].iter().collect()),
                    line: line_no,
                    col,
                });
                i = j;
                continue;
            }
            for p in PUNCT {
                let pc: Vec<char> = p.chars().collect();
                if chars[i..].starts_with(&pc) {
                    out.push(Token {
                        tok: Tok::Punct(p),
                        line: line_no,
                        col,
                    });
                    i += pc.len();
                    continue 'outer;
                }
            }
            return Err(AslError::Syntax {
                line: line_no,
                col,
                msg: format!("unexpected character `{c}`"),
            });
        }
    }
    Ok(out)
}
