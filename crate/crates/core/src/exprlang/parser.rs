use super::ast::{BinOp, Expr, Func};
use super::lexer::{tokenize, Token, TokenKind};
use super::ParseError;

// Binding powers. `^` is right-associative and binds tighter than unary minus,
// which in turn binds tighter than `*` and `/`.
const BP_ADD: (u8, u8) = (1, 2);
const BP_MUL: (u8, u8) = (3, 4);
const BP_PREFIX_NEG: u8 = 5;
const BP_POW: (u8, u8) = (8, 7);

pub(crate) struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    depth: usize,
    allowed: Option<&'a [&'a str]>,
}

const MAX_DEPTH: usize = 200;

impl<'a> Parser<'a> {
    /// `allowed = None` accepts any identifier as a variable.
    pub(crate) fn new(source: &str, allowed: Option<&'a [&'a str]>) -> Result<Self, ParseError> {
        if source.trim().is_empty() {
            return Err(ParseError::Empty);
        }
        Ok(Parser {
            tokens: tokenize(source)?,
            pos: 0,
            depth: 0,
            allowed,
        })
    }

    pub(crate) fn parse(mut self) -> Result<Expr, ParseError> {
        let expr = self.expr(0)?;
        let tok = self.peek();
        if tok.kind != TokenKind::End {
            return Err(self.unexpected(&["operator", "end of input"]));
        }
        Ok(expr)
    }

    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn advance(&mut self) -> Token {
        let tok = self.tokens[self.pos].clone();
        if tok.kind != TokenKind::End {
            self.pos += 1;
        }
        tok
    }

    fn unexpected(&self, expected: &[&str]) -> ParseError {
        let tok = self.peek();
        ParseError::Syntax {
            offset: tok.offset,
            found: tok.kind.describe(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn expr(&mut self, min_bp: u8) -> Result<Expr, ParseError> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(ParseError::TooDeep {
                offset: self.peek().offset,
            });
        }
        let result = self.expr_inner(min_bp);
        self.depth -= 1;
        result
    }

    fn expr_inner(&mut self, min_bp: u8) -> Result<Expr, ParseError> {
        let mut lhs = self.prefix()?;
        loop {
            let op = match self.peek().kind {
                TokenKind::Plus => BinOp::Add,
                TokenKind::Minus => BinOp::Sub,
                TokenKind::Star => BinOp::Mul,
                TokenKind::Slash => BinOp::Div,
                TokenKind::Caret => BinOp::Pow,
                TokenKind::RParen | TokenKind::Comma | TokenKind::End => break,
                _ => return Err(self.unexpected(&["operator", "`)`", "end of input"])),
            };
            let (l_bp, r_bp) = match op {
                BinOp::Add | BinOp::Sub => BP_ADD,
                BinOp::Mul | BinOp::Div => BP_MUL,
                BinOp::Pow => BP_POW,
            };
            if l_bp < min_bp {
                break;
            }
            self.advance();
            let rhs = self.expr(r_bp)?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn prefix(&mut self) -> Result<Expr, ParseError> {
        const OPERAND: [&str; 4] = ["number", "identifier", "`(`", "`-`"];
        let tok = self.peek().clone();
        match tok.kind {
            TokenKind::Number(v) => {
                self.advance();
                Ok(Expr::Num(v))
            }
            TokenKind::Minus => {
                self.advance();
                let operand = self.expr(BP_PREFIX_NEG)?;
                Ok(Expr::Neg(Box::new(operand)))
            }
            TokenKind::LParen => {
                self.advance();
                let inner = self.expr(0)?;
                self.expect_rparen()?;
                Ok(inner)
            }
            TokenKind::Ident(name) => {
                self.advance();
                if self.peek().kind == TokenKind::LParen {
                    self.call(&name, tok.offset)
                } else {
                    match self.allowed {
                        Some(names) if !names.contains(&name.as_str()) => {
                            Err(ParseError::UnknownIdentifier {
                                name,
                                offset: tok.offset,
                                allowed: names.iter().map(|s| s.to_string()).collect(),
                            })
                        }
                        _ => Ok(Expr::Var(name)),
                    }
                }
            }
            _ => Err(self.unexpected(&OPERAND)),
        }
    }

    fn call(&mut self, name: &str, offset: usize) -> Result<Expr, ParseError> {
        let func = Func::from_name(name).ok_or_else(|| ParseError::UnknownIdentifier {
            name: name.to_string(),
            offset,
            allowed: Func::ALL.iter().map(|f| f.name().to_string()).collect(),
        })?;
        self.advance(); // `(`
        let mut args = vec![self.expr(0)?];
        while self.peek().kind == TokenKind::Comma {
            self.advance();
            args.push(self.expr(0)?);
        }
        self.expect_rparen()?;
        if args.len() != func.arity() {
            return Err(ParseError::Arity {
                func: func.name().to_string(),
                expected: func.arity(),
                found: args.len(),
                offset,
            });
        }
        Ok(Expr::Call(func, args))
    }

    fn expect_rparen(&mut self) -> Result<(), ParseError> {
        if self.peek().kind == TokenKind::RParen {
            self.advance();
            Ok(())
        } else {
            Err(self.unexpected(&["`)`", "operator"]))
        }
    }
}
