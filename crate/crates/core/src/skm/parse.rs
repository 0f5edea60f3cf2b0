//! Text format for reaction systems.
//!
//! ```text
//! # time-unit: hours
//! I + S -> 2 I @ 0.1
//! I -> S @ 0.05
//! 0 -> I @ 0.001
//! ```

use std::fmt;

use thiserror::Error;

use super::{Event, ReactionSystem, Species};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}, column {column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Int(u64),
    Ident(String),
    Plus,
    Arrow,
    At,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Int(n) => write!(f, "'{n}'"),
            Tok::Ident(s) => write!(f, "'{s}'"),
            Tok::Plus => f.write_str("'+'"),
            Tok::Arrow => f.write_str("'->'"),
            Tok::At => f.write_str("'@'"),
        }
    }
}

struct LineParser<'a> {
    line: usize,
    chars: Vec<(usize, char)>,
    text: &'a str,
}

fn err(line: usize, column: usize, message: impl Into<String>) -> ParseError {
    ParseError { line, column, message: message.into() }
}

impl<'a> LineParser<'a> {
    /// Tokenizes up to and including '@'; returns tokens with 1-based columns
    /// and the byte offset of the rate text, if an '@' was found.
    fn lex(&self) -> Result<(Vec<(Tok, usize)>, Option<(usize, usize)>), ParseError> {
        let mut toks = Vec::new();
        let mut i = 0;
        let cs = &self.chars;
        while i < cs.len() {
            let (byte, c) = cs[i];
            let col = i + 1;
            if c.is_whitespace() {
                i += 1;
            } else if c.is_ascii_digit() {
                let start = i;
                while i < cs.len() && cs[i].1.is_ascii_digit() {
                    i += 1;
                }
                let s: String = cs[start..i].iter().map(|p| p.1).collect();
                let n = s.parse::<u64>().map_err(|_| err(self.line, col, "coefficient too large"))?;
                toks.push((Tok::Int(n), col));
            } else if c.is_ascii_alphabetic() || c == '_' {
                let start = i;
                while i < cs.len() && (cs[i].1.is_ascii_alphanumeric() || cs[i].1 == '_') {
                    i += 1;
                }
                toks.push((Tok::Ident(cs[start..i].iter().map(|p| p.1).collect()), col));
            } else if c == '+' {
                toks.push((Tok::Plus, col));
                i += 1;
            } else if c == '-' && i + 1 < cs.len() && cs[i + 1].1 == '>' {
                toks.push((Tok::Arrow, col));
                i += 2;
            } else if c == '@' {
                toks.push((Tok::At, col));
                let rate_byte = byte + 1;
                return Ok((toks, Some((rate_byte, col + 1))));
            } else {
                return Err(err(self.line, col, format!("unexpected character '{c}'")));
            }
        }
        Ok((toks, None))
    }

    fn parse(&self, species: &mut Vec<Species>) -> Result<(Vec<(u32, usize)>, Vec<(u32, usize)>, f64), ParseError> {
        let (toks, rate_at) = self.lex()?;
        let end_col = self.chars.len() + 1;
        let mut pos = 0;
        let lhs = self.side(&toks, &mut pos, species, &Tok::Arrow)?;
        pos += 1;
        let rhs = self.side(&toks, &mut pos, species, &Tok::At)?;
        let (rate_byte, rate_col) = rate_at.ok_or_else(|| err(self.line, end_col, "expected '@' followed by a rate"))?;
        let raw = &self.text[rate_byte..];
        let trimmed = raw.trim_start();
        let col = rate_col + raw[..raw.len() - trimmed.len()].chars().count();
        let trimmed = trimmed.trim_end();
        if trimmed.is_empty() {
            return Err(err(self.line, col, "missing rate after '@'"));
        }
        if trimmed.starts_with('-') {
            return Err(err(self.line, col, format!("negative rate '{trimmed}'")));
        }
        let ok_chars = trimmed.chars().all(|c| c.is_ascii_digit() || matches!(c, '.' | 'e' | 'E' | '+' | '-'));
        let rate = match trimmed.parse::<f64>() {
            Ok(r) if ok_chars && r.is_finite() => r,
            _ => return Err(err(self.line, col, format!("rate '{trimmed}' is not a nonnegative number"))),
        };
        Ok((lhs, rhs, rate))
    }

    fn side(&self, toks: &[(Tok, usize)], pos: &mut usize, species: &mut Vec<Species>, stop: &Tok) -> Result<Vec<(u32, usize)>, ParseError> {
        let end_col = self.chars.len() + 1;
        let here = |p: usize| toks.get(p).map(|t| t.1).unwrap_or(end_col);
        let expect_name = |p: usize| match stop {
            Tok::Arrow => format!("expected '+' or '->' but found {}", describe(toks.get(p))),
            _ => format!("expected '+' or '@' but found {}", describe(toks.get(p))),
        };
        if let Some((Tok::Int(0), c)) = toks.get(*pos) {
            match toks.get(*pos + 1) {
                Some((t, _)) if t == stop => {
                    *pos += 1;
                    return Ok(Vec::new());
                }
                Some((Tok::Ident(_), _)) => return Err(err(self.line, *c, "stoichiometric coefficient must be positive")),
                None if matches!(stop, Tok::At) => {
                    return Err(err(self.line, end_col, "expected '@' followed by a rate"));
                }
                _ => return Err(err(self.line, here(*pos + 1), expect_name(*pos + 1))),
            }
        }
        let mut terms = Vec::new();
        let mut plus_col: Option<usize> = None;
        loop {
            let mut coef = 1u32;
            let mut had_coef = false;
            let term_col = here(*pos);
            if let Some((Tok::Int(n), c)) = toks.get(*pos) {
                if *n == 0 {
                    return Err(err(self.line, *c, "stoichiometric coefficient must be positive"));
                }
                coef = u32::try_from(*n).map_err(|_| err(self.line, *c, "coefficient too large"))?;
                had_coef = true;
                *pos += 1;
            }
            match toks.get(*pos) {
                Some((Tok::Ident(name), _)) => {
                    let id = match species.iter().position(|s| &s.name == name) {
                        Some(i) => i,
                        None => {
                            species.push(Species { id: species.len(), name: name.clone() });
                            species.len() - 1
                        }
                    };
                    *pos += 1;
                    match terms.iter_mut().find(|(s, _): &&mut (u32, usize)| *s as usize == id) {
                        Some(t) => t.1 += coef as usize,
                        None => terms.push((id as u32, coef as usize)),
                    }
                }
                other => {
                    if let Some(pc) = plus_col {
                        return Err(err(self.line, pc, "dangling '+' with no following term"));
                    }
                    if had_coef {
                        return Err(err(self.line, here(*pos), format!("expected species name after coefficient, found {}", describe(other))));
                    }
                    return Err(err(self.line, term_col, format!("expected a term or '0', found {}", describe(other))));
                }
            }
            match toks.get(*pos) {
                Some((Tok::Plus, c)) => {
                    plus_col = Some(*c);
                    *pos += 1;
                }
                Some((t, _)) if t == stop => return Ok(terms),
                None if matches!(stop, Tok::At) => return Err(err(self.line, end_col, "expected '@' followed by a rate")),
                _ => return Err(err(self.line, here(*pos), expect_name(*pos))),
            }
        }
    }
}

fn describe(t: Option<&(Tok, usize)>) -> String {
    match t {
        Some((t, _)) => t.to_string(),
        None => "end of line".to_string(),
    }
}

/// Parse a reaction system. Species are numbered in order of first appearance.
pub fn parse_model(text: &str) -> Result<ReactionSystem, ParseError> {
    let mut species: Vec<Species> = Vec::new();
    let mut raw_events = Vec::new();
    let mut time_unit = None;
    let mut last_line = 1;
    for (idx, full) in text.lines().enumerate() {
        let line_no = idx + 1;
        last_line = line_no;
        let (body, comment) = match full.find('#') {
            Some(i) => (&full[..i], Some(&full[i + 1..])),
            None => (full, None),
        };
        if let Some(c) = comment {
            let c = c.trim();
            if let Some(rest) = c.strip_prefix("time-unit:") {
                if time_unit.is_none() {
                    time_unit = Some(rest.trim().to_string());
                }
            }
        }
        if body.trim().is_empty() {
            continue;
        }
        let lp = LineParser { line: line_no, chars: body.char_indices().collect(), text: body };
        raw_events.push(lp.parse(&mut species)?);
    }
    if raw_events.is_empty() {
        return Err(err(last_line, 1, "model contains no reactions"));
    }
    let m = species.len();
    let events = raw_events
        .into_iter()
        .map(|(lhs, rhs, rate)| {
            let mut a = vec![0u32; m];
            let mut b = vec![0u32; m];
            for (s, c) in lhs {
                a[s as usize] = c as u32;
            }
            for (s, c) in rhs {
                b[s as usize] = c as u32;
            }
            Event::new(a, b, rate).expect("validated stoichiometry")
        })
        .collect();
    Ok(ReactionSystem { species, events, time_unit })
}

fn print_side(sys: &ReactionSystem, stoich: &[u32]) -> String {
    let terms: Vec<String> = stoich
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(i, &c)| {
            if c == 1 {
                sys.species[i].name.clone()
            } else {
                format!("{c} {}", sys.species[i].name)
            }
        })
        .collect();
    if terms.is_empty() {
        "0".to_string()
    } else {
        terms.join(" + ")
    }
}

/// Canonical text form; `parse_model(print_model(s)) == s`.
pub fn print_model(sys: &ReactionSystem) -> String {
    let mut out = String::new();
    if let Some(u) = &sys.time_unit {
        out.push_str(&format!("# time-unit: {u}\n"));
    }
    for e in &sys.events {
        out.push_str(&format!("{} -> {} @ {}\n", print_side(sys, &e.reactants), print_side(sys, &e.products), e.rate));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_reaction() {
        let s = parse_model("I + S -> 2 I @ 0.1").unwrap();
        assert_eq!(s.species.iter().map(|s| s.name.as_str()).collect::<Vec<_>>(), ["I", "S"]);
        assert_eq!(s.events.len(), 1);
        assert_eq!(s.events[0].reactants, vec![1, 1]);
        assert_eq!(s.events[0].products, vec![2, 0]);
        assert_eq!(s.events[0].delta, vec![1, -1]);
        assert_eq!(s.events[0].rate, 0.1);
    }

    #[test]
    fn two_reactions() {
        let s = parse_model("I -> S @ 0.05\nS -> I @ 0.01").unwrap();
        assert_eq!(s.species.len(), 2);
        assert_eq!(s.events.len(), 2);
        assert_eq!(s.events[1].reactants, vec![0, 1]);
    }

    #[test]
    fn dangling_plus() {
        let e = parse_model("I + -> S @ 1").unwrap_err();
        assert_eq!((e.line, e.column), (1, 3));
    }

    #[test]
    fn empty_sides_and_header() {
        let s = parse_model("# time-unit: hours\n0 -> I @ 2 # birth\nI -> 0 @ 1\n").unwrap();
        assert_eq!(s.time_unit.as_deref(), Some("hours"));
        assert_eq!(s.events[0].reactants, vec![0]);
        assert_eq!(s.events[1].products, vec![0]);
        let again = parse_model(&print_model(&s)).unwrap();
        assert_eq!(again, s);
    }

    #[test]
    fn duplicate_lines_are_distinct_events() {
        let s = parse_model("A -> B @ 1\nA -> B @ 1\n").unwrap();
        assert_eq!(s.events.len(), 2);
    }

    #[test]
    fn bad_rates() {
        let e = parse_model("I -> S @ -0.5").unwrap_err();
        assert_eq!((e.line, e.column), (1, 10));
        let e = parse_model("\nI -> S @ fast").unwrap_err();
        assert_eq!((e.line, e.column), (2, 10));
        assert!(parse_model("I -> S @ inf").is_err());
        assert!(parse_model("I -> S @").is_err());
    }

    #[test]
    fn assorted_errors() {
        assert_eq!(parse_model("I S -> R @ 1").unwrap_err().column, 3);
        assert_eq!(parse_model("0 I -> R @ 1").unwrap_err().column, 1);
        assert_eq!(parse_model("I$ -> R @ 1").unwrap_err().column, 2);
        assert_eq!(parse_model("I -> S -> R @ 1").unwrap_err().column, 8);
        assert_eq!(parse_model("-> S @ 1").unwrap_err().column, 1);
        assert_eq!(parse_model("I -> S").unwrap_err().column, 7);
        assert_eq!(parse_model("2 -> S @ 1").unwrap_err().column, 3);
        let e = parse_model("# nothing\n").unwrap_err();
        assert_eq!(e.line, 1);
    }
}
