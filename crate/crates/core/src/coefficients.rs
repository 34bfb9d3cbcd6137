//! Parser and evaluator for user-supplied coefficient functions of the state
//! variable.
//!
//! The grammar covers numeric literals, the variable `y`, the binary
//! operators `+ - * / ^`, unary minus, parentheses, and the functions
//! `exp`, `log`, `sqrt`, `tanh`, `abs`. `^` is right-associative and binds
//! tighter than unary minus, so `-y^2` means `-(y^2)`. There is no implicit
//! multiplication: `2y` is a syntax error.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FuncKind {
    Exp,
    Log,
    Sqrt,
    Tanh,
    Abs,
}

impl FuncKind {
    fn name(self) -> &'static str {
        match self {
            FuncKind::Exp => "exp",
            FuncKind::Log => "log",
            FuncKind::Sqrt => "sqrt",
            FuncKind::Tanh => "tanh",
            FuncKind::Abs => "abs",
        }
    }
}

/// Abstract syntax tree of a scalar coefficient function of `y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CoefficientExpr {
    Num(f64),
    Var,
    Neg(Box<CoefficientExpr>),
    Bin(BinOp, Box<CoefficientExpr>, Box<CoefficientExpr>),
    Func(FuncKind, Box<CoefficientExpr>),
}

impl CoefficientExpr {
    /// Binding power of the node's top-level construct, used by the printer
    /// to insert the minimal set of parentheses.
    fn binding_power(&self) -> u8 {
        match self {
            CoefficientExpr::Num(_) | CoefficientExpr::Var | CoefficientExpr::Func(..) => 10,
            CoefficientExpr::Bin(BinOp::Pow, ..) => 8,
            CoefficientExpr::Neg(_) => 5,
            CoefficientExpr::Bin(BinOp::Mul, ..) | CoefficientExpr::Bin(BinOp::Div, ..) => 3,
            CoefficientExpr::Bin(BinOp::Add, ..) | CoefficientExpr::Bin(BinOp::Sub, ..) => 1,
        }
    }
}

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    LParen,
    RParen,
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    Eof,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            src: src.as_bytes(),
            pos: 0,
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    /// Next token together with its byte offset.
    fn next(&mut self) -> Result<(Tok, usize)> {
        self.skip_ws();
        let start = self.pos;
        if self.pos >= self.src.len() {
            return Ok((Tok::Eof, start));
        }
        let c = self.src[self.pos];
        let tok = match c {
            b'(' => {
                self.pos += 1;
                Tok::LParen
            }
            b')' => {
                self.pos += 1;
                Tok::RParen
            }
            b'+' => {
                self.pos += 1;
                Tok::Plus
            }
            b'-' => {
                self.pos += 1;
                Tok::Minus
            }
            b'*' => {
                self.pos += 1;
                Tok::Star
            }
            b'/' => {
                self.pos += 1;
                Tok::Slash
            }
            b'^' => {
                self.pos += 1;
                Tok::Caret
            }
            b'0'..=b'9' | b'.' => {
                while self.pos < self.src.len()
                    && (self.src[self.pos].is_ascii_digit() || self.src[self.pos] == b'.')
                {
                    self.pos += 1;
                }
                // Optional exponent part.
                if self.pos < self.src.len() && matches!(self.src[self.pos], b'e' | b'E') {
                    let mut probe = self.pos + 1;
                    if probe < self.src.len() && matches!(self.src[probe], b'+' | b'-') {
                        probe += 1;
                    }
                    if probe < self.src.len() && self.src[probe].is_ascii_digit() {
                        self.pos = probe;
                        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                            self.pos += 1;
                        }
                    }
                }
                let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                let value: f64 = text.parse().map_err(|_| Error::Syntax {
                    offset: start,
                    msg: format!("malformed number `{text}`"),
                })?;
                Tok::Num(value)
            }
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                while self.pos < self.src.len()
                    && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
                {
                    self.pos += 1;
                }
                Tok::Ident(std::str::from_utf8(&self.src[start..self.pos]).unwrap().to_owned())
            }
            other => {
                return Err(Error::Syntax {
                    offset: start,
                    msg: format!("unexpected character `{}`", other as char),
                })
            }
        };
        Ok((tok, start))
    }
}

// ---------------------------------------------------------------------------
// Pratt parser
// ---------------------------------------------------------------------------

struct Parser<'a> {
    lexer: Lexer<'a>,
    peeked: Option<(Tok, usize)>,
}

const PREFIX_MINUS_BP: u8 = 5;

fn infix_binding_power(tok: &Tok) -> Option<(u8, u8)> {
    match tok {
        Tok::Plus | Tok::Minus => Some((1, 2)),
        Tok::Star | Tok::Slash => Some((3, 4)),
        // Right-associative and tighter than unary minus.
        Tok::Caret => Some((8, 7)),
        _ => None,
    }
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Self {
        Parser {
            lexer: Lexer::new(src),
            peeked: None,
        }
    }

    fn peek(&mut self) -> Result<&(Tok, usize)> {
        if self.peeked.is_none() {
            self.peeked = Some(self.lexer.next()?);
        }
        Ok(self.peeked.as_ref().unwrap())
    }

    fn advance(&mut self) -> Result<(Tok, usize)> {
        match self.peeked.take() {
            Some(t) => Ok(t),
            None => self.lexer.next(),
        }
    }

    fn parse_expr(&mut self, min_bp: u8) -> Result<CoefficientExpr> {
        let (tok, offset) = self.advance()?;
        let mut lhs = match tok {
            Tok::Num(v) => CoefficientExpr::Num(v),
            Tok::Ident(name) => match name.as_str() {
                "y" => CoefficientExpr::Var,
                "exp" | "log" | "sqrt" | "tanh" | "abs" => {
                    let kind = match name.as_str() {
                        "exp" => FuncKind::Exp,
                        "log" => FuncKind::Log,
                        "sqrt" => FuncKind::Sqrt,
                        "tanh" => FuncKind::Tanh,
                        _ => FuncKind::Abs,
                    };
                    let (open, open_off) = self.advance()?;
                    if open != Tok::LParen {
                        return Err(Error::Syntax {
                            offset: open_off,
                            msg: format!("expected `(` after `{name}`"),
                        });
                    }
                    let arg = self.parse_expr(0)?;
                    let (close, close_off) = self.advance()?;
                    if close != Tok::RParen {
                        return Err(Error::Syntax {
                            offset: close_off,
                            msg: "expected `)`".into(),
                        });
                    }
                    CoefficientExpr::Func(kind, Box::new(arg))
                }
                other => {
                    return Err(Error::Syntax {
                        offset,
                        msg: format!("unknown identifier `{other}`"),
                    })
                }
            },
            Tok::Minus => {
                let operand = self.parse_expr(PREFIX_MINUS_BP)?;
                CoefficientExpr::Neg(Box::new(operand))
            }
            Tok::LParen => {
                let inner = self.parse_expr(0)?;
                let (close, close_off) = self.advance()?;
                if close != Tok::RParen {
                    return Err(Error::Syntax {
                        offset: close_off,
                        msg: "expected `)`".into(),
                    });
                }
                inner
            }
            Tok::Eof => {
                return Err(Error::Syntax {
                    offset,
                    msg: "expected operand, found end of input".into(),
                })
            }
            other => {
                return Err(Error::Syntax {
                    offset,
                    msg: format!("expected operand, found `{other:?}`"),
                })
            }
        };

        loop {
            let (tok, _) = self.peek()?.clone();
            let Some((left_bp, right_bp)) = infix_binding_power(&tok) else {
                break;
            };
            if left_bp < min_bp {
                break;
            }
            self.advance()?;
            let rhs = self.parse_expr(right_bp)?;
            let op = match tok {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                Tok::Caret => BinOp::Pow,
                _ => unreachable!(),
            };
            lhs = CoefficientExpr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }
}

/// Parses an expression string into an AST.
pub fn parse_coefficient(text: &str) -> Result<CoefficientExpr> {
    if text.trim().is_empty() {
        return Err(Error::Syntax {
            offset: 0,
            msg: "empty input".into(),
        });
    }
    let mut parser = Parser::new(text);
    let expr = parser.parse_expr(0)?;
    let (trailing, offset) = parser.advance()?;
    if trailing != Tok::Eof {
        return Err(Error::Syntax {
            offset,
            msg: format!("unexpected trailing token `{trailing:?}`"),
        });
    }
    Ok(expr)
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

/// Evaluates the expression at `y`, reporting domain errors with the
/// offending sub-expression.
pub fn eval_coefficient(expr: &CoefficientExpr, y: f64) -> Result<f64> {
    let v = eval_inner(expr, y)?;
    if !v.is_finite() {
        return Err(Error::domain(expr.to_string(), "non-finite result"));
    }
    Ok(v)
}

fn eval_inner(expr: &CoefficientExpr, y: f64) -> Result<f64> {
    match expr {
        CoefficientExpr::Num(v) => Ok(*v),
        CoefficientExpr::Var => Ok(y),
        CoefficientExpr::Neg(e) => Ok(-eval_inner(e, y)?),
        CoefficientExpr::Bin(op, a, b) => {
            let lhs = eval_inner(a, y)?;
            let rhs = eval_inner(b, y)?;
            match op {
                BinOp::Add => Ok(lhs + rhs),
                BinOp::Sub => Ok(lhs - rhs),
                BinOp::Mul => Ok(lhs * rhs),
                BinOp::Div => {
                    if rhs == 0.0 {
                        Err(Error::domain(expr.to_string(), "division by zero"))
                    } else {
                        Ok(lhs / rhs)
                    }
                }
                BinOp::Pow => {
                    if lhs < 0.0 && rhs.fract() != 0.0 {
                        Err(Error::domain(
                            expr.to_string(),
                            format!("negative base {lhs} with non-integer exponent {rhs}"),
                        ))
                    } else {
                        Ok(lhs.powf(rhs))
                    }
                }
            }
        }
        CoefficientExpr::Func(kind, arg) => {
            let v = eval_inner(arg, y)?;
            match kind {
                FuncKind::Exp => Ok(v.exp()),
                FuncKind::Log => {
                    if v <= 0.0 {
                        Err(Error::domain(
                            expr.to_string(),
                            format!("log of nonpositive value {v}"),
                        ))
                    } else {
                        Ok(v.ln())
                    }
                }
                FuncKind::Sqrt => {
                    if v < 0.0 {
                        Err(Error::domain(
                            expr.to_string(),
                            format!("sqrt of negative value {v}"),
                        ))
                    } else {
                        Ok(v.sqrt())
                    }
                }
                FuncKind::Tanh => Ok(v.tanh()),
                FuncKind::Abs => Ok(v.abs()),
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Printing (round-trips through the parser)
// ---------------------------------------------------------------------------

impl fmt::Display for CoefficientExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoefficientExpr::Num(v) => write!(f, "{v}"),
            CoefficientExpr::Var => write!(f, "y"),
            CoefficientExpr::Neg(e) => {
                write!(f, "-")?;
                // Operand must rebind at least as tightly as the prefix minus.
                if e.binding_power() > PREFIX_MINUS_BP {
                    write!(f, "{e}")
                } else {
                    write!(f, "({e})")
                }
            }
            CoefficientExpr::Bin(op, a, b) => {
                let (sym, left_bp, right_bp) = match op {
                    BinOp::Add => (" + ", 1, 2),
                    BinOp::Sub => (" - ", 1, 2),
                    BinOp::Mul => ("*", 3, 4),
                    BinOp::Div => ("/", 3, 4),
                    BinOp::Pow => ("^", 8, 7),
                };
                // `^` is right-associative, so a left child of equal
                // precedence re-binds the wrong way without parentheses.
                let left_ok = if matches!(op, BinOp::Pow) {
                    a.binding_power() > left_bp
                } else {
                    a.binding_power() >= left_bp
                };
                if left_ok {
                    write!(f, "{a}")?;
                } else {
                    write!(f, "({a})")?;
                }
                write!(f, "{sym}")?;
                // `Neg` on the right re-parses as a prefix minus, so it never
                // needs parentheses there.
                let rhs_ok = b.binding_power() >= right_bp || matches!(**b, CoefficientExpr::Neg(_));
                if rhs_ok {
                    write!(f, "{b}")
                } else {
                    write!(f, "({b})")
                }
            }
            CoefficientExpr::Func(kind, arg) => write!(f, "{}({arg})", kind.name()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval_str(text: &str, y: f64) -> Result<f64> {
        eval_coefficient(&parse_coefficient(text)?, y)
    }

    #[test]
    fn basic_arithmetic() {
        assert_eq!(eval_str("-y", 2.0).unwrap(), -2.0);
        assert_eq!(eval_str("exp(-y^2)", 0.0).unwrap(), 1.0);
        assert_eq!(eval_str("2*y^2 - 1", 1.5).unwrap(), 3.5);
        assert_eq!(eval_str("2+3*4", 0.0).unwrap(), 14.0);
    }

    #[test]
    fn identity_in_y() {
        for &t in &[-3.0, -0.5, 0.0, 1.0, 7.25] {
            assert_eq!(eval_str("y", t).unwrap(), t);
        }
    }

    #[test]
    fn unary_minus_binds_looser_than_pow() {
        assert_eq!(eval_str("-y^2", 2.0).unwrap(), -4.0);
        assert_eq!(eval_str("(-y)^2", 2.0).unwrap(), 4.0);
        assert_eq!(eval_str("2^-2", 0.0).unwrap(), 0.25);
        // Right-associativity.
        assert_eq!(eval_str("2^3^2", 0.0).unwrap(), 512.0);
    }

    #[test]
    fn syntax_error_carries_offset() {
        match parse_coefficient("y +") {
            Err(Error::Syntax { offset, .. }) => assert_eq!(offset, 3),
            other => panic!("expected syntax error, got {other:?}"),
        }
        assert!(parse_coefficient("").is_err());
        match parse_coefficient("2y") {
            Err(Error::Syntax { offset, .. }) => assert_eq!(offset, 1),
            other => panic!("expected syntax error, got {other:?}"),
        }
        match parse_coefficient("z + 1") {
            Err(Error::Syntax { offset, msg }) => {
                assert_eq!(offset, 0);
                assert!(msg.contains("unknown identifier"));
            }
            other => panic!("expected unknown identifier, got {other:?}"),
        }
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(eval_str("log(y)", -1.0), Err(Error::Domain { .. })));
        assert!(matches!(eval_str("1/(1-y)", 1.0), Err(Error::Domain { .. })));
        assert!(matches!(eval_str("sqrt(y)", -4.0), Err(Error::Domain { .. })));
        // Negative base with fractional exponent is rejected rather than NaN.
        assert!(matches!(eval_str("y^0.5", -2.0), Err(Error::Domain { .. })));
    }

    #[test]
    fn print_parse_round_trip() {
        let cases = [
            "-y^2",
            "(-y)^2",
            "2*y^2 - 1",
            "exp(-(y - 1)^2/2)",
            "1/(1 + y^2)",
            "y - -y",
            "-(y*y)",
            "2^-3",
            "tanh(abs(y))*sqrt(y^2 + 1)",
        ];
        for case in cases {
            let ast = parse_coefficient(case).unwrap();
            let printed = ast.to_string();
            let reparsed = parse_coefficient(&printed).unwrap();
            assert_eq!(ast, reparsed, "round trip failed for `{case}` -> `{printed}`");
        }
    }
}
