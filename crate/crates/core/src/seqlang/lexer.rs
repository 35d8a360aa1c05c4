use super::ast::Unit;
use super::parser::Diagnostic;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    Ident(String),
    Number(f64),
    Quantity(f64, Unit),
    Plus,
    Minus,
    Star,
    Slash,
    LParen,
    RParen,
    Eq,
    Sep,
    Eof,
}

impl Tok {
    pub(crate) fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("'{s}'"),
            Tok::Number(v) => format!("number {v}"),
            Tok::Quantity(v, u) => format!("'{v}{}'", u.as_str()),
            Tok::Plus => "'+'".into(),
            Tok::Minus => "'-'".into(),
            Tok::Star => "'*'".into(),
            Tok::Slash => "'/'".into(),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::Eq => "'='".into(),
            Tok::Sep => "end of statement".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Token {
    pub tok: Tok,
    pub line: usize,
    pub col: usize,
}

pub(crate) fn lex(src: &str, diags: &mut Vec<Diagnostic>) -> Vec<Token> {
    let mut out = Vec::new();
    for (li, raw) in src.lines().enumerate() {
        let line = li + 1;
        let text = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        };
        let chars: Vec<(usize, char)> = text.char_indices().collect();
        let mut i = 0;
        while i < chars.len() {
            let (_, ch) = chars[i];
            let col = i + 1;
            let push = |out: &mut Vec<Token>, tok| out.push(Token { tok, line, col });
            match ch {
                c if c.is_whitespace() => {
                    i += 1;
                }
                ';' => {
                    push(&mut out, Tok::Sep);
                    i += 1;
                }
                '+' | '-' | '*' | '/' | '(' | ')' | '=' => {
                    let tok = match ch {
                        '+' => Tok::Plus,
                        '-' => Tok::Minus,
                        '*' => Tok::Star,
                        '/' => Tok::Slash,
                        '(' => Tok::LParen,
                        ')' => Tok::RParen,
                        _ => Tok::Eq,
                    };
                    push(&mut out, tok);
                    i += 1;
                }
                c if c.is_ascii_digit() || (c == '.' && next_is_digit(&chars, i)) => {
                    let start = i;
                    while i < chars.len() && chars[i].1.is_ascii_digit() {
                        i += 1;
                    }
                    if i < chars.len() && chars[i].1 == '.' {
                        i += 1;
                        while i < chars.len() && chars[i].1.is_ascii_digit() {
                            i += 1;
                        }
                    }
                    if i < chars.len() && matches!(chars[i].1, 'e' | 'E') {
                        let mut j = i + 1;
                        if j < chars.len() && matches!(chars[j].1, '+' | '-') {
                            j += 1;
                        }
                        if j < chars.len() && chars[j].1.is_ascii_digit() {
                            i = j;
                            while i < chars.len() && chars[i].1.is_ascii_digit() {
                                i += 1;
                            }
                        }
                    }
                    let num_text: String = chars[start..i].iter().map(|c| c.1).collect();
                    let value: f64 = match num_text.parse() {
                        Ok(v) => v,
                        Err(_) => {
                            diags.push(Diagnostic::new(line, col, format!("malformed number '{num_text}'")));
                            f64::NAN
                        }
                    };
                    if !value.is_finite() && !value.is_nan() {
                        diags.push(Diagnostic::new(line, col, format!("number '{num_text}' out of range")));
                    }
                    let ustart = i;
                    while i < chars.len() && is_ident_char(chars[i].1) {
                        i += 1;
                    }
                    if ustart == i {
                        push(&mut out, Tok::Number(value));
                    } else {
                        let suffix: String = chars[ustart..i].iter().map(|c| c.1).collect();
                        match Unit::parse(&suffix) {
                            Some(u) => push(&mut out, Tok::Quantity(value, u)),
                            None => {
                                diags.push(Diagnostic::new(
                                    line,
                                    ustart + 1,
                                    format!("unknown unit '{suffix}' (expected ns, us, ms, MHz or deg)"),
                                ));
                                push(&mut out, Tok::Number(value));
                            }
                        }
                    }
                }
                c if c.is_alphabetic() || c == '_' => {
                    let start = i;
                    while i < chars.len() && is_ident_char(chars[i].1) {
                        i += 1;
                    }
                    let word: String = chars[start..i].iter().map(|c| c.1).collect();
                    push(&mut out, Tok::Ident(word));
                }
                other => {
                    diags.push(Diagnostic::new(line, col, format!("unexpected character '{other}'")));
                    i += 1;
                }
            }
        }
        out.push(Token {
            tok: Tok::Sep,
            line,
            col: text.chars().count() + 1,
        });
    }
    let line = src.lines().count().max(1);
    out.push(Token {
        tok: Tok::Eof,
        line,
        col: 1,
    });
    out
}

fn is_ident_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

fn next_is_digit(chars: &[(usize, char)], i: usize) -> bool {
    chars.get(i + 1).is_some_and(|c| c.1.is_ascii_digit())
}
