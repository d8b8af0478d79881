//! Domains as boolean combinations of linear integer inequalities.
//!
//! Expressions use species names as variables, e.g. `p < 100` or
//! `x1 > 0 && x2 > 0`. Supported: integer coefficients (`2*m`, `3 m`),
//! `+`/`-`, comparisons `< <= > >= == !=`, `&&`, `||`, `!`, parentheses
//! around boolean subexpressions, and the literals `true`/`false`.

use std::fmt;

use crate::error::{Error, Result};
use crate::model::State;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cmp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl Cmp {
    fn holds(self, lhs: i64, rhs: i64) -> bool {
        match self {
            Cmp::Lt => lhs < rhs,
            Cmp::Le => lhs <= rhs,
            Cmp::Gt => lhs > rhs,
            Cmp::Ge => lhs >= rhs,
            Cmp::Eq => lhs == rhs,
            Cmp::Ne => lhs != rhs,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            Cmp::Lt => "<",
            Cmp::Le => "<=",
            Cmp::Gt => ">",
            Cmp::Ge => ">=",
            Cmp::Eq => "==",
            Cmp::Ne => "!=",
        }
    }
}

/// `Σ coeffs[i]·x[i]  cmp  rhs`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinearConstraint {
    pub coeffs: Vec<i64>,
    pub cmp: Cmp,
    pub rhs: i64,
}

impl LinearConstraint {
    pub fn new(coeffs: Vec<i64>, cmp: Cmp, rhs: i64) -> Self {
        LinearConstraint { coeffs, cmp, rhs }
    }

    pub fn holds(&self, x: &[u32]) -> bool {
        let lhs: i64 = self.coeffs.iter().zip(x).map(|(&a, &c)| a * c as i64).sum();
        self.cmp.holds(lhs, self.rhs)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DomainPredicate {
    All,
    Linear(LinearConstraint),
    And(Vec<DomainPredicate>),
    Or(Vec<DomainPredicate>),
    Not(Box<DomainPredicate>),
}

impl DomainPredicate {
    /// `x[i] cmp rhs` in dimension `dim`.
    pub fn coordinate(dim: usize, i: usize, cmp: Cmp, rhs: i64) -> Self {
        let mut coeffs = vec![0; dim];
        coeffs[i] = 1;
        DomainPredicate::Linear(LinearConstraint::new(coeffs, cmp, rhs))
    }

    pub fn contains(&self, x: &State) -> bool {
        self.holds(x.coords())
    }

    pub fn holds(&self, x: &[u32]) -> bool {
        match self {
            DomainPredicate::All => true,
            DomainPredicate::Linear(c) => c.holds(x),
            DomainPredicate::And(ps) => ps.iter().all(|p| p.holds(x)),
            DomainPredicate::Or(ps) => ps.iter().any(|p| p.holds(x)),
            DomainPredicate::Not(p) => !p.holds(x),
        }
    }

    pub fn parse(expr: &str, species: &[String]) -> Result<Self> {
        let tokens = tokenize(expr)?;
        let mut parser = Parser {
            tokens,
            pos: 0,
            species,
        };
        let p = parser.or_expr()?;
        if parser.pos != parser.tokens.len() {
            return Err(Error::DomainParse(format!(
                "unexpected '{}' in '{expr}'",
                parser.tokens[parser.pos]
            )));
        }
        Ok(p)
    }

    /// Renders the predicate as an expression accepted by [`Self::parse`].
    pub fn display<'a>(&'a self, species: &'a [String]) -> impl fmt::Display + 'a {
        Render { pred: self, species }
    }
}

struct Render<'a> {
    pred: &'a DomainPredicate,
    species: &'a [String],
}

impl fmt::Display for Render<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sub = |p| Render {
            pred: p,
            species: self.species,
        };
        match self.pred {
            DomainPredicate::All => f.write_str("true"),
            DomainPredicate::Linear(c) => {
                let mut first = true;
                for (i, &a) in c.coeffs.iter().enumerate() {
                    if a == 0 {
                        continue;
                    }
                    let name = &self.species[i];
                    let sign = if a < 0 { "-" } else { "+" };
                    if first {
                        if a < 0 {
                            f.write_str("-")?;
                        }
                    } else {
                        write!(f, " {sign} ")?;
                    }
                    if a.abs() == 1 {
                        write!(f, "{name}")?;
                    } else {
                        write!(f, "{}*{name}", a.abs())?;
                    }
                    first = false;
                }
                if first {
                    f.write_str("0")?;
                }
                write!(f, " {} {}", c.cmp.symbol(), c.rhs)
            }
            DomainPredicate::And(ps) | DomainPredicate::Or(ps) => {
                if ps.is_empty() {
                    let empty_and = matches!(self.pred, DomainPredicate::And(_));
                    return f.write_str(if empty_and { "true" } else { "false" });
                }
                let op = if matches!(self.pred, DomainPredicate::And(_)) { " && " } else { " || " };
                for (i, p) in ps.iter().enumerate() {
                    if i > 0 {
                        f.write_str(op)?;
                    }
                    write!(f, "({})", sub(p))?;
                }
                Ok(())
            }
            DomainPredicate::Not(p) => write!(f, "!({})", sub(p)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Int(i64),
    Ident(String),
    Cmp(Cmp),
    And,
    Or,
    Not,
    LParen,
    RParen,
    Plus,
    Minus,
    Star,
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Int(v) => write!(f, "{v}"),
            Token::Ident(s) => f.write_str(s),
            Token::Cmp(c) => f.write_str(c.symbol()),
            Token::And => f.write_str("&&"),
            Token::Or => f.write_str("||"),
            Token::Not => f.write_str("!"),
            Token::LParen => f.write_str("("),
            Token::RParen => f.write_str(")"),
            Token::Plus => f.write_str("+"),
            Token::Minus => f.write_str("-"),
            Token::Star => f.write_str("*"),
        }
    }
}

fn tokenize(s: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = s.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let next = chars.get(i + 1).copied();
        match c {
            ' ' | '\t' | '\n' => i += 1,
            '0'..='9' => {
                let start = i;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                let text: String = chars[start..i].iter().collect();
                let v = text
                    .parse()
                    .map_err(|_| Error::DomainParse(format!("integer '{text}' out of range")))?;
                out.push(Token::Int(v));
            }
            c if c.is_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                out.push(Token::Ident(chars[start..i].iter().collect()));
            }
            '<' | '>' | '=' | '!' if next == Some('=') => {
                out.push(Token::Cmp(match c {
                    '<' => Cmp::Le,
                    '>' => Cmp::Ge,
                    '=' => Cmp::Eq,
                    _ => Cmp::Ne,
                }));
                i += 2;
            }
            '<' => {
                out.push(Token::Cmp(Cmp::Lt));
                i += 1;
            }
            '>' => {
                out.push(Token::Cmp(Cmp::Gt));
                i += 1;
            }
            '!' => {
                out.push(Token::Not);
                i += 1;
            }
            '&' if next == Some('&') => {
                out.push(Token::And);
                i += 2;
            }
            '|' if next == Some('|') => {
                out.push(Token::Or);
                i += 2;
            }
            '(' => {
                out.push(Token::LParen);
                i += 1;
            }
            ')' => {
                out.push(Token::RParen);
                i += 1;
            }
            '+' => {
                out.push(Token::Plus);
                i += 1;
            }
            '-' => {
                out.push(Token::Minus);
                i += 1;
            }
            '*' => {
                out.push(Token::Star);
                i += 1;
            }
            other => return Err(Error::DomainParse(format!("unexpected character '{other}'"))),
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    species: &'a [String],
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn bump(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn or_expr(&mut self) -> Result<DomainPredicate> {
        let mut terms = vec![self.and_expr()?];
        while self.peek() == Some(&Token::Or) {
            self.pos += 1;
            terms.push(self.and_expr()?);
        }
        Ok(if terms.len() == 1 { terms.pop().unwrap() } else { DomainPredicate::Or(terms) })
    }

    fn and_expr(&mut self) -> Result<DomainPredicate> {
        let mut terms = vec![self.unary()?];
        while self.peek() == Some(&Token::And) {
            self.pos += 1;
            terms.push(self.unary()?);
        }
        Ok(if terms.len() == 1 { terms.pop().unwrap() } else { DomainPredicate::And(terms) })
    }

    fn unary(&mut self) -> Result<DomainPredicate> {
        match self.peek() {
            Some(Token::Not) => {
                self.pos += 1;
                Ok(DomainPredicate::Not(Box::new(self.unary()?)))
            }
            Some(Token::LParen) => {
                self.pos += 1;
                let inner = self.or_expr()?;
                match self.bump() {
                    Some(Token::RParen) => Ok(inner),
                    _ => Err(Error::DomainParse("missing ')'".into())),
                }
            }
            Some(Token::Ident(s)) if s == "true" => {
                self.pos += 1;
                Ok(DomainPredicate::All)
            }
            Some(Token::Ident(s)) if s == "false" => {
                self.pos += 1;
                Ok(DomainPredicate::Not(Box::new(DomainPredicate::All)))
            }
            _ => self.comparison(),
        }
    }

    fn comparison(&mut self) -> Result<DomainPredicate> {
        let (lc, lk) = self.linear()?;
        let cmp = match self.bump() {
            Some(Token::Cmp(c)) => c,
            other => {
                return Err(Error::DomainParse(format!(
                    "expected comparison operator, found {}",
                    other.map(|t| format!("'{t}'")).unwrap_or_else(|| "end of input".into())
                )))
            }
        };
        let (rc, rk) = self.linear()?;
        let coeffs = lc.iter().zip(&rc).map(|(a, b)| a - b).collect();
        Ok(DomainPredicate::Linear(LinearConstraint::new(coeffs, cmp, rk - lk)))
    }

    // Returns (coefficients, constant).
    fn linear(&mut self) -> Result<(Vec<i64>, i64)> {
        let mut coeffs = vec![0i64; self.species.len()];
        let mut constant = 0i64;
        let mut sign = match self.peek() {
            Some(Token::Minus) => {
                self.pos += 1;
                -1
            }
            Some(Token::Plus) => {
                self.pos += 1;
                1
            }
            _ => 1,
        };
        loop {
            // A signed literal such as `a + -2*b`.
            while self.peek() == Some(&Token::Minus) {
                self.pos += 1;
                sign = -sign;
            }
            match self.bump() {
                Some(Token::Int(v)) => {
                    if self.peek() == Some(&Token::Star) {
                        self.pos += 1;
                    }
                    if let Some(Token::Ident(name)) = self.peek().cloned() {
                        self.pos += 1;
                        coeffs[self.species_index(&name)?] += sign * v;
                    } else {
                        constant += sign * v;
                    }
                }
                Some(Token::Ident(name)) => {
                    let idx = self.species_index(&name)?;
                    let mut coef = 1;
                    if self.peek() == Some(&Token::Star) {
                        self.pos += 1;
                        match self.bump() {
                            Some(Token::Int(v)) => coef = v,
                            _ => return Err(Error::DomainParse(format!("expected integer after '{name} *'"))),
                        }
                    }
                    coeffs[idx] += sign * coef;
                }
                other => {
                    return Err(Error::DomainParse(format!(
                        "expected term, found {}",
                        other.map(|t| format!("'{t}'")).unwrap_or_else(|| "end of input".into())
                    )))
                }
            }
            match self.peek() {
                Some(Token::Plus) => {
                    self.pos += 1;
                    sign = 1;
                }
                Some(Token::Minus) => {
                    self.pos += 1;
                    sign = -1;
                }
                _ => return Ok((coeffs, constant)),
            }
        }
    }

    fn species_index(&self, name: &str) -> Result<usize> {
        self.species
            .iter()
            .position(|s| s == name)
            .ok_or_else(|| Error::DomainParse(format!("unknown species '{name}'")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn gene_threshold_domain() {
        let d = DomainPredicate::parse("p < 100", &names(&["m", "p"])).unwrap();
        assert!(d.contains(&State::from([5, 99])));
        assert!(!d.contains(&State::from([5, 100])));
    }

    #[test]
    fn coexistence_domain() {
        let d = DomainPredicate::parse("x1 > 0 && x2 > 0", &names(&["x1", "x2"])).unwrap();
        assert!(!d.contains(&State::from([0, 7])));
        assert!(!d.contains(&State::from([3, 0])));
        assert!(d.contains(&State::from([1, 1])));
    }

    #[test]
    fn coefficients_and_constants_on_both_sides() {
        let sp = names(&["a", "b"]);
        let d = DomainPredicate::parse("2*a - b + 3 <= b * 2 - 1", &sp).unwrap();
        // 2a - 3b <= -4
        assert_eq!(
            d,
            DomainPredicate::Linear(LinearConstraint::new(vec![2, -3], Cmp::Le, -4))
        );
        assert!(d.contains(&State::from([1, 2])));
        assert!(!d.contains(&State::from([2, 2])));
    }

    #[test]
    fn negation_and_disjunction() {
        let sp = names(&["a", "b"]);
        let d = DomainPredicate::parse("!(a == 0) || b >= 3", &sp).unwrap();
        assert!(d.contains(&State::from([1, 0])));
        assert!(d.contains(&State::from([0, 3])));
        assert!(!d.contains(&State::from([0, 2])));
    }

    #[test]
    fn parse_errors() {
        let sp = names(&["a"]);
        for bad in ["a <", "c > 1", "a > 1 &&", "(a > 1", "a # 2", "a + 1"] {
            assert!(
                matches!(DomainPredicate::parse(bad, &sp), Err(Error::DomainParse(_))),
                "{bad}"
            );
        }
    }

    proptest! {
        #[test]
        fn rendering_reparses_to_same_predicate(
            c in proptest::collection::vec(-3i64..4, 2),
            rhs in -5i64..20,
            op in 0usize..6,
            x in proptest::collection::vec(0u32..25, 2),
        ) {
            let sp = names(&["u", "v"]);
            let cmp = [Cmp::Lt, Cmp::Le, Cmp::Gt, Cmp::Ge, Cmp::Eq, Cmp::Ne][op];
            let pred = DomainPredicate::And(vec![
                DomainPredicate::Linear(LinearConstraint::new(c, cmp, rhs)),
                DomainPredicate::Not(Box::new(DomainPredicate::coordinate(2, 0, Cmp::Eq, 3))),
            ]);
            let text = pred.display(&sp).to_string();
            let back = DomainPredicate::parse(&text, &sp).unwrap();
            let s = State::new(x);
            prop_assert_eq!(pred.contains(&s), back.contains(&s));
        }
    }
}
