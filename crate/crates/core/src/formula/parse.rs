use super::{ModelFormula, Term};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(String),
    Tilde,
    Plus,
    LParen,
    RParen,
    Comma,
    End,
}

fn perr(position: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        position,
        message: message.into(),
    }
}

fn lex(text: &str) -> Result<Vec<(usize, Tok)>> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let start = i;
        let single = match c {
            '~' => Some(Tok::Tilde),
            '+' => Some(Tok::Plus),
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            ',' => Some(Tok::Comma),
            _ => None,
        };
        if let Some(t) = single {
            out.push((start, t));
            i += 1;
        } else if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_alphabetic() || c == '_' || c == '.' && !next_is_digit(&chars, i) {
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_' || chars[i] == '.') {
                i += 1;
            }
            out.push((start, Tok::Ident(chars[start..i].iter().collect())));
        } else if c.is_ascii_digit() || c == '-' || c == '.' {
            i += 1;
            while i < chars.len() {
                let d = chars[i];
                let exp_sign = (d == '-' || d == '+') && matches!(chars[i - 1], 'e' | 'E');
                if d.is_ascii_digit() || d == '.' || d == 'e' || d == 'E' || exp_sign {
                    i += 1;
                } else {
                    break;
                }
            }
            out.push((start, Tok::Num(chars[start..i].iter().collect())));
        } else {
            return Err(perr(start, format!("unexpected character `{c}`")));
        }
    }
    out.push((chars.len(), Tok::End));
    Ok(out)
}

fn next_is_digit(chars: &[char], i: usize) -> bool {
    chars.get(i + 1).is_some_and(|c| c.is_ascii_digit())
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &(usize, Tok) {
        &self.toks[self.pos]
    }

    fn next(&mut self) -> (usize, Tok) {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<usize> {
        let (p, t) = self.next();
        if t == want {
            Ok(p)
        } else {
            Err(perr(p, format!("expected {what}")))
        }
    }

    fn ident(&mut self, what: &str) -> Result<String> {
        match self.next() {
            (_, Tok::Ident(s)) => Ok(s),
            (p, _) => Err(perr(p, format!("expected {what}"))),
        }
    }

    fn number(&mut self) -> Result<(usize, String, f64)> {
        match self.next() {
            (p, Tok::Num(s)) => {
                let v = s
                    .parse::<f64>()
                    .map_err(|_| perr(p, format!("malformed number `{s}`")))?;
                Ok((p, s, v))
            }
            (p, _) => Err(perr(p, "expected a number")),
        }
    }

    /// Returns `None` for the explicit intercept `1`.
    fn term(&mut self) -> Result<Option<Term>> {
        let (p, t) = self.next();
        match t {
            Tok::Num(s) if s == "1" => Ok(None),
            Tok::Ident(name) => {
                if self.peek().1 != Tok::LParen {
                    return Ok(Some(Term::Var(name)));
                }
                self.next();
                let term = match name.as_str() {
                    "pow" => {
                        let v = self.ident("a variable name")?;
                        self.expect(Tok::Comma, "`,`")?;
                        let (ep, es, _) = self.number()?;
                        let e = es
                            .parse::<u32>()
                            .ok()
                            .filter(|&e| e >= 1)
                            .ok_or_else(|| perr(ep, format!("malformed exponent `{es}`; expected a positive integer")))?;
                        if e == 1 {
                            Term::Var(v)
                        } else {
                            Term::Power(v, e)
                        }
                    }
                    "factor" => Term::Factor(self.ident("a variable name")?),
                    "rcs" => {
                        let v = self.ident("a variable name")?;
                        let mut knots = Vec::new();
                        while self.peek().1 == Tok::Comma {
                            self.next();
                            let (kp, _, k) = self.number()?;
                            if knots.last().is_some_and(|&last| k <= last) {
                                return Err(perr(kp, "spline knots must be strictly increasing"));
                            }
                            knots.push(k);
                        }
                        if knots.len() < 3 {
                            return Err(perr(p, "rcs needs at least 3 knots"));
                        }
                        Term::Spline(v, knots)
                    }
                    other => return Err(perr(p, format!("unknown function `{other}`"))),
                };
                self.expect(Tok::RParen, "`)`")?;
                Ok(Some(term))
            }
            Tok::End => Err(perr(p, "expected a term")),
            _ => Err(perr(p, "expected a term")),
        }
    }
}

/// Parses and normalises a model statement.
pub fn parse_formula(text: &str) -> Result<ModelFormula> {
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
    };
    let response = p.ident("a response variable")?;
    p.expect(Tok::Tilde, "`~`")?;
    if p.peek().1 == Tok::End {
        return Err(perr(p.peek().0, "empty right-hand side"));
    }
    let mut terms: Vec<Term> = Vec::new();
    loop {
        if let Some(t) = p.term()? {
            if !terms.contains(&t) {
                terms.push(t);
            }
        }
        match p.next() {
            (_, Tok::Plus) => continue,
            (_, Tok::End) => break,
            (pos, _) => return Err(perr(pos, "expected `+` or end of formula")),
        }
    }
    Ok(ModelFormula { response, terms })
}
