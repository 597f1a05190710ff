use num_traits::Zero;
use thiserror::Error;

use super::{Coeff, Idx, KernelAtom, KernelExpr, KernelTerm, Named, PhiKind, Rational};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("semantic error at byte {offset}: {message}")]
    Semantic { offset: usize, message: String },
}

impl ParseError {
    pub fn offset(&self) -> usize {
        match self {
            ParseError::Syntax { offset, .. } | ParseError::Semantic { offset, .. } => *offset,
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    template: bool,
}

/// Parses a kernel expression in complex dimension `n`.
///
/// Besides the bare atom grammar this accepts rational coefficient factors
/// (`2 * ...`, `1/2 * ...`), the unspecified constant `C`, subtraction, the
/// empty sum `0` and the named comparable quantities used by the rule base.
pub fn parse(text: &str, n: u32) -> Result<KernelExpr, ParseError> {
    parse_with(text, n, false)
}

/// Like [`parse`], but accepts positive powers of `P`. Rule replacements such
/// as `Gamma^-1 * E[0,0] * P^1` are only ever multiplied into expressions that
/// carry enough negative powers to compensate.
pub fn parse_template(text: &str, n: u32) -> Result<KernelExpr, ParseError> {
    parse_with(text, n, true)
}

fn parse_with(text: &str, n: u32, template: bool) -> Result<KernelExpr, ParseError> {
    let mut p = Parser { src: text.as_bytes(), pos: 0, template };
    let terms = p.expr()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(p.syntax("unexpected trailing input"));
    }
    Ok(KernelExpr { n, terms })
}

impl<'a> Parser<'a> {
    fn syntax(&self, message: &str) -> ParseError {
        ParseError::Syntax { offset: self.pos, message: message.to_string() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8) -> Result<(), ParseError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.syntax(&format!("expected `{}`", c as char)))
        }
    }

    fn expr(&mut self) -> Result<Vec<KernelTerm>, ParseError> {
        let mut terms = Vec::new();
        let mut negate = self.eat(b'-');
        if !negate && self.peek() == Some(b'0') {
            let save = self.pos;
            self.pos += 1;
            self.skip_ws();
            if self.pos == self.src.len() {
                return Ok(terms);
            }
            self.pos = save;
        }
        loop {
            let mut t = self.term()?;
            if negate {
                t.coeff = t.coeff.neg();
            }
            terms.push(t);
            if self.eat(b'+') {
                negate = false;
            } else if self.eat(b'-') {
                negate = true;
            } else {
                break;
            }
        }
        Ok(terms)
    }

    fn term(&mut self) -> Result<KernelTerm, ParseError> {
        let mut coeff = Coeff::one();
        let mut atoms = Vec::new();
        loop {
            match self.peek() {
                Some(c) if c.is_ascii_digit() => {
                    let r = self.rational()?;
                    coeff = coeff.mul(Coeff::Exact(r));
                }
                Some(c) if c.is_ascii_alphabetic() => {
                    let start = self.pos;
                    let word = self.ident();
                    if word == "C" {
                        coeff = coeff.mul(Coeff::Opaque);
                    } else {
                        atoms.push(self.atom(word, start)?);
                    }
                }
                None => return Err(self.syntax("unexpected end of input")),
                _ => return Err(self.syntax("expected an atom")),
            }
            if !self.eat(b'*') {
                break;
            }
        }
        Ok(KernelTerm { coeff, atoms })
    }

    fn ident(&mut self) -> &'a str {
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphanumeric() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("")
    }

    fn uint(&mut self) -> Result<i64, ParseError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.syntax("expected an integer"));
        }
        let s = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
        s.parse::<i64>().map_err(|_| ParseError::Syntax { offset: start, message: "integer out of range".into() })
    }

    fn int(&mut self) -> Result<i64, ParseError> {
        if self.eat(b'-') {
            Ok(-self.uint()?)
        } else {
            self.eat(b'+');
            self.uint()
        }
    }

    fn rational(&mut self) -> Result<Rational, ParseError> {
        let num = self.uint()?;
        if self.eat(b'/') {
            let at = self.pos;
            let den = self.uint()?;
            if den == 0 {
                return Err(ParseError::Semantic { offset: at, message: "zero denominator".into() });
            }
            Ok(Rational::new(num, den))
        } else {
            Ok(Rational::from_integer(num))
        }
    }

    fn exponent(&mut self) -> Result<i64, ParseError> {
        self.expect(b'^')?;
        self.int()
    }

    fn opt_exponent(&mut self) -> Result<i64, ParseError> {
        if self.peek() == Some(b'^') {
            self.exponent()
        } else {
            Ok(1)
        }
    }

    fn index(&mut self) -> Result<Idx, ParseError> {
        match self.peek() {
            Some(c) if c.is_ascii_lowercase() => {
                self.pos += 1;
                Ok(Idx(c as char))
            }
            _ => Err(self.syntax("expected an index letter")),
        }
    }

    fn semantic(offset: usize, message: String) -> ParseError {
        ParseError::Semantic { offset, message }
    }

    fn atom(&mut self, word: &str, start: usize) -> Result<KernelAtom, ParseError> {
        let small = |v: i64| -> Result<i32, ParseError> {
            i32::try_from(v).map_err(|_| Self::semantic(start, "exponent out of range".into()))
        };
        let nonneg = |v: i64, what: &str| -> Result<u32, ParseError> {
            u32::try_from(v).map_err(|_| Self::semantic(start, format!("{what} exponent must be nonnegative")))
        };
        let atom = match word {
            "R" | "Rs" => {
                let e = self.exponent()?;
                KernelAtom::RFactor { starred: word == "Rs", count: nonneg(e, word)? }
            }
            "E" | "Es" => {
                self.expect(b'[')?;
                let j = self.int()?;
                self.expect(b',')?;
                let k = self.int()?;
                self.expect(b']')?;
                if j < 0 {
                    return Err(Self::semantic(start, format!("{word}[{j},{k}] has negative order")));
                }
                KernelAtom::EFactor { starred: word == "Es", j: small(j)?, k: small(k)? }
            }
            "Phi" | "PhiBar" | "PhiStar" | "PhiBarStar" => {
                let kind = match word {
                    "Phi" => PhiKind::Phi,
                    "PhiBar" => PhiKind::PhiBar,
                    "PhiStar" => PhiKind::PhiStar,
                    _ => PhiKind::PhiBarStar,
                };
                KernelAtom::PhiFactor { kind, exponent: small(self.exponent()?)? }
            }
            "P" => {
                let e = self.exponent()?;
                if e > 0 && !self.template {
                    return Err(Self::semantic(start, format!("P^{e}: P may only appear to nonpositive powers")));
                }
                KernelAtom::PPower { t0: small(-e)? }
            }
            "r" | "rs" => {
                let e = self.exponent()?;
                KernelAtom::DefFn { starred: word == "rs", l: nonneg(e, word)? }
            }
            "Gamma" | "GammaStar" => {
                KernelAtom::GammaWeight { starred: word == "GammaStar", exponent: small(self.exponent()?)? }
            }
            _ => return self.named(word, start),
        };
        Ok(atom)
    }

    fn named(&mut self, word: &str, start: usize) -> Result<KernelAtom, ParseError> {
        let (base, starred) = match word.strip_suffix("Star") {
            Some(b) => (b, true),
            None => (word, false),
        };
        let sym = match base {
            "Rho2" => Named::Rho2,
            "LrhoSq" => Named::LrhoSq,
            "CoordSqT" => Named::CoordSqT,
            "Lrho" | "Lbarrho" | "Coord" | "CoordBar" => {
                self.expect(b'[')?;
                let i = self.index()?;
                self.expect(b']')?;
                match base {
                    "Lrho" => Named::Lrho(i),
                    "Lbarrho" => Named::Lbarrho(i),
                    "Coord" => Named::Coord(i),
                    _ => Named::CoordBar(i),
                }
            }
            "Delta" => {
                self.expect(b'[')?;
                let a = self.index()?;
                let b = self.index()?;
                self.expect(b']')?;
                Named::Delta(a, b)
            }
            _ => return Err(ParseError::Syntax { offset: start, message: format!("unknown atom `{word}`") }),
        };
        let e = self.opt_exponent()?;
        let exponent =
            u32::try_from(e).map_err(|_| Self::semantic(start, format!("{word} exponent must be nonnegative")))?;
        if exponent.is_zero() {
            return Err(Self::semantic(start, format!("{word}^0 is not a factor")));
        }
        Ok(KernelAtom::Named { sym, starred, exponent })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_atom_term() {
        let e = parse("R^1 * E[1,0] * PhiBar^-1 * P^-1", 2).unwrap();
        assert_eq!(e.terms.len(), 1);
        assert_eq!(e.terms[0].atoms.len(), 4);
    }

    #[test]
    fn two_term_sum() {
        let e = parse("E[3,0]*Phi^-1*P^-2 + Gamma^-1 * E[2,0]*Phi^-1*P^-2", 2).unwrap();
        assert_eq!(e.terms.len(), 2);
    }

    #[test]
    fn positive_p_is_semantic() {
        let err = parse("P^1", 2).unwrap_err();
        assert!(matches!(err, ParseError::Semantic { offset: 0, .. }), "{err:?}");
    }

    #[test]
    fn syntax_offsets() {
        let err = parse("E[1,0] * Foo^2", 2).unwrap_err();
        assert!(matches!(err, ParseError::Syntax { offset: 9, .. }), "{err:?}");
        let err = parse("E[1,0] *", 2).unwrap_err();
        assert_eq!(err.offset(), 8);
        let err = parse("E[1 0]", 2).unwrap_err();
        assert_eq!(err.offset(), 4);
    }

    #[test]
    fn zero_and_coefficients() {
        assert!(parse("0", 2).unwrap().terms.is_empty());
        let e = parse("-1/2 * Rho2 - C * Coord[n]^2", 3).unwrap();
        assert_eq!(e.terms[0].coeff, Coeff::Exact(Rational::new(-1, 2)));
        assert_eq!(e.terms[1].coeff, Coeff::Opaque);
    }

    #[test]
    fn whitespace_insensitive() {
        let a = parse("R^1*E[1,0]*PhiBar^-1*P^-1", 2).unwrap();
        let b = parse("  R ^ 1 *E[ 1 , 0 ]* PhiBar^ -1 *P^-1 ", 2).unwrap();
        assert_eq!(a, b);
    }
}
