//! A small expression language for right-hand sides and cost integrands.
//!
//! Grammar (EBNF):
//!
//! ```text
//! expr    = sum ;
//! sum     = term , { ( "+" | "-" ) , term } ;
//! term    = unary , { ( "*" | "/" ) , unary } ;
//! unary   = "-" , unary | power ;
//! power   = atom , [ "^" , unary ] ;            (* right associative *)
//! atom    = number | variable | "pi"
//!         | func , "(" , expr , { "," , expr } , ")"
//!         | "if" , "(" , cond , "," , expr , "," , expr , ")"
//!         | "(" , expr , ")" ;
//! cond    = sum , ( ">=" | ">" | "<=" | "<" | "==" ) , sum ;
//! variable = "x" , digits | "u" , digits | "t" ;
//! func    = "sin" | "cos" | "exp" | "log" | "abs" | "sqrt" | "sign"   (* 1 arg *)
//!         | "min" | "max" ;                                          (* 2 args *)
//! ```
//!
//! `^` binds tighter than unary minus, so `-x1^2` is `-(x1^2)`, while the
//! exponent itself may carry a sign (`x1^-1`).

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("syntax error at {position}: expected {expected}")]
    Syntax { position: usize, expected: String },
    #[error("unknown identifier `{0}`")]
    UnknownIdentifier(String),
    #[error("variable index {index} out of range (declared {declared})")]
    Dimension { index: usize, declared: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("domain violation: {0}")]
    DomainViolation(&'static str),
    #[error("division by zero")]
    DivisionByZero,
    #[error("non-finite result")]
    NonFinite,
    #[error("environment has {got} {what} components, expression needs {need}")]
    DimensionMismatch {
        what: &'static str,
        got: usize,
        need: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    State(usize),
    Control(usize),
    Time,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Abs,
    Sqrt,
    Sign,
    Min,
    Max,
}

impl Func {
    fn lookup(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "abs" => Func::Abs,
            "sqrt" => Func::Sqrt,
            "sign" => Func::Sign,
            "min" => Func::Min,
            "max" => Func::Max,
            _ => return None,
        })
    }

    fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Abs => "abs",
            Func::Sqrt => "sqrt",
            Func::Sign => "sign",
            Func::Min => "min",
            Func::Max => "max",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Ge,
    Gt,
    Le,
    Lt,
    Eq,
}

impl CmpOp {
    fn symbol(self) -> &'static str {
        match self {
            CmpOp::Ge => ">=",
            CmpOp::Gt => ">",
            CmpOp::Le => "<=",
            CmpOp::Lt => "<",
            CmpOp::Eq => "==",
        }
    }

    fn holds(self, a: f64, b: f64) -> bool {
        match self {
            CmpOp::Ge => a >= b,
            CmpOp::Gt => a > b,
            CmpOp::Le => a <= b,
            CmpOp::Lt => a < b,
            CmpOp::Eq => a == b,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Num(f64),
    Pi,
    Var(Var),
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
    If {
        op: CmpOp,
        lhs: Box<Node>,
        rhs: Box<Node>,
        then: Box<Node>,
        otherwise: Box<Node>,
    },
}

/// A parsed expression together with the dimensions it was validated against.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    root: Node,
    dims: (usize, usize),
}

/// Evaluation point: state, control and model time.
#[derive(Debug, Clone, Copy)]
pub struct EvalEnv<'a> {
    pub x: &'a [f64],
    pub u: &'a [f64],
    pub t: f64,
}

impl<'a> EvalEnv<'a> {
    pub fn new(x: &'a [f64], u: &'a [f64], t: f64) -> Self {
        EvalEnv { x, u, t }
    }
}

/// Parses `src` against `dims = (n, r)` state and control dimensions.
pub fn parse(src: &str, dims: (usize, usize)) -> Result<Expr, ParseError> {
    Expr::parse(src, dims)
}

/// Evaluates `e` at `env`.
pub fn eval(e: &Expr, env: &EvalEnv<'_>) -> Result<f64, EvalError> {
    e.eval(env)
}

impl Expr {
    pub fn parse(src: &str, dims: (usize, usize)) -> Result<Expr, ParseError> {
        let tokens = lex(src)?;
        let mut p = Parser {
            tokens,
            pos: 0,
            dims,
            src_len: src.len(),
        };
        if p.tokens.is_empty() {
            return Err(ParseError::Syntax {
                position: 0,
                expected: "expression".into(),
            });
        }
        let root = p.sum()?;
        if let Some(tok) = p.tokens.get(p.pos) {
            return Err(ParseError::Syntax {
                position: tok.pos,
                expected: "operator or end of input".into(),
            });
        }
        Ok(Expr { root, dims })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.dims
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn eval(&self, env: &EvalEnv<'_>) -> Result<f64, EvalError> {
        if env.x.len() < self.dims.0 {
            return Err(EvalError::DimensionMismatch {
                what: "state",
                got: env.x.len(),
                need: self.dims.0,
            });
        }
        if env.u.len() < self.dims.1 {
            return Err(EvalError::DimensionMismatch {
                what: "control",
                got: env.u.len(),
                need: self.dims.1,
            });
        }
        let v = eval_node(&self.root, env)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite)
        }
    }

    /// Whether `t` appears anywhere in the expression.
    pub fn uses_time(&self) -> bool {
        fn walk(n: &Node) -> bool {
            match n {
                Node::Num(_) | Node::Pi => false,
                Node::Var(v) => *v == Var::Time,
                Node::Neg(a) => walk(a),
                Node::Bin(_, a, b) => walk(a) || walk(b),
                Node::Call(_, args) => args.iter().any(walk),
                Node::If { lhs, rhs, then, otherwise, .. } => {
                    walk(lhs) || walk(rhs) || walk(then) || walk(otherwise)
                }
            }
        }
        walk(&self.root)
    }

    /// Evaluates on a concatenated `(x, u)` coordinate vector at `t = 0`.
    pub fn eval_joint(&self, coords: &[f64]) -> Result<f64, EvalError> {
        let (n, _) = self.dims;
        let (x, u) = coords.split_at(n.min(coords.len()));
        self.eval(&EvalEnv::new(x, u, 0.0))
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.root)
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Num(v) => write!(f, "{v}"),
            Node::Pi => write!(f, "pi"),
            Node::Var(Var::State(i)) => write!(f, "x{}", i + 1),
            Node::Var(Var::Control(i)) => write!(f, "u{}", i + 1),
            Node::Var(Var::Time) => write!(f, "t"),
            Node::Neg(a) => write!(f, "(-{a})"),
            Node::Bin(op, a, b) => {
                let sym = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                    BinOp::Pow => "^",
                };
                write!(f, "({a} {sym} {b})")
            }
            Node::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
            Node::If {
                op,
                lhs,
                rhs,
                then,
                otherwise,
            } => write!(f, "if({lhs} {} {rhs}, {then}, {otherwise})", op.symbol()),
        }
    }
}

fn eval_node(node: &Node, env: &EvalEnv<'_>) -> Result<f64, EvalError> {
    match node {
        Node::Num(v) => Ok(*v),
        Node::Pi => Ok(std::f64::consts::PI),
        Node::Var(Var::State(i)) => Ok(env.x[*i]),
        Node::Var(Var::Control(i)) => Ok(env.u[*i]),
        Node::Var(Var::Time) => Ok(env.t),
        Node::Neg(a) => Ok(-eval_node(a, env)?),
        Node::Bin(BinOp::Mul, a, b) => {
            let va = eval_node(a, env);
            let vb = eval_node(b, env);
            // 0 * (something that only failed by dividing by zero) is the
            // continuous extension at a removable singularity.
            match (va, vb) {
                (Ok(x), Ok(y)) => {
                    if (x == 0.0 && !y.is_finite()) || (y == 0.0 && !x.is_finite()) {
                        Ok(0.0)
                    } else {
                        Ok(x * y)
                    }
                }
                (Ok(z), Err(EvalError::DivisionByZero)) | (Err(EvalError::DivisionByZero), Ok(z))
                    if z == 0.0 =>
                {
                    Ok(0.0)
                }
                (Err(e), _) | (_, Err(e)) => Err(e),
            }
        }
        Node::Bin(op, a, b) => {
            let x = eval_node(a, env)?;
            let y = eval_node(b, env)?;
            match op {
                BinOp::Add => Ok(x + y),
                BinOp::Sub => Ok(x - y),
                BinOp::Div => {
                    if y == 0.0 {
                        Err(EvalError::DivisionByZero)
                    } else {
                        Ok(x / y)
                    }
                }
                BinOp::Pow => power(x, y),
                BinOp::Mul => unreachable!(),
            }
        }
        Node::Call(func, args) => {
            let a = eval_node(&args[0], env)?;
            match func {
                Func::Sin => Ok(a.sin()),
                Func::Cos => Ok(a.cos()),
                Func::Exp => Ok(a.exp()),
                Func::Log => {
                    if a > 0.0 {
                        Ok(a.ln())
                    } else {
                        Err(EvalError::DomainViolation("log of a non-positive value"))
                    }
                }
                Func::Abs => Ok(a.abs()),
                Func::Sqrt => {
                    if a >= 0.0 {
                        Ok(a.sqrt())
                    } else {
                        Err(EvalError::DomainViolation("sqrt of a negative value"))
                    }
                }
                Func::Sign => Ok(if a > 0.0 {
                    1.0
                } else if a < 0.0 {
                    -1.0
                } else {
                    0.0
                }),
                Func::Min => Ok(a.min(eval_node(&args[1], env)?)),
                Func::Max => Ok(a.max(eval_node(&args[1], env)?)),
            }
        }
        Node::If {
            op,
            lhs,
            rhs,
            then,
            otherwise,
        } => {
            let a = eval_node(lhs, env)?;
            let b = eval_node(rhs, env)?;
            if op.holds(a, b) {
                eval_node(then, env)
            } else {
                eval_node(otherwise, env)
            }
        }
    }
}

fn power(base: f64, exp: f64) -> Result<f64, EvalError> {
    if exp.fract() == 0.0 && exp.abs() <= i32::MAX as f64 {
        if base == 0.0 && exp < 0.0 {
            return Err(EvalError::DivisionByZero);
        }
        return Ok(base.powi(exp as i32));
    }
    if base < 0.0 {
        return Err(EvalError::DomainViolation(
            "real exponent of a negative base",
        ));
    }
    if base == 0.0 && exp < 0.0 {
        return Err(EvalError::DivisionByZero);
    }
    Ok(base.powf(exp))
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    Cmp(CmpOp),
    LParen,
    RParen,
    Comma,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    pos: usize,
}

fn lex(src: &str) -> Result<Vec<Token>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || (c == '.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let text = &src[start..i];
            let v: f64 = text.parse().map_err(|_| ParseError::Syntax {
                position: start,
                expected: "number".into(),
            })?;
            out.push(Token {
                tok: Tok::Num(v),
                pos: start,
            });
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push(Token {
                tok: Tok::Ident(src[start..i].to_string()),
                pos: start,
            });
            continue;
        }
        let next = bytes.get(i + 1).map(|b| *b as char);
        let tok = match (c, next) {
            ('>', Some('=')) => {
                i += 1;
                Tok::Cmp(CmpOp::Ge)
            }
            ('<', Some('=')) => {
                i += 1;
                Tok::Cmp(CmpOp::Le)
            }
            ('=', Some('=')) => {
                i += 1;
                Tok::Cmp(CmpOp::Eq)
            }
            ('>', _) => Tok::Cmp(CmpOp::Gt),
            ('<', _) => Tok::Cmp(CmpOp::Lt),
            ('+' | '-' | '*' | '/' | '^', _) => Tok::Op(c),
            ('(', _) => Tok::LParen,
            (')', _) => Tok::RParen,
            (',', _) => Tok::Comma,
            _ => {
                return Err(ParseError::Syntax {
                    position: start,
                    expected: "a valid token".into(),
                })
            }
        };
        i += 1;
        out.push(Token { tok, pos: start });
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    dims: (usize, usize),
    src_len: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|t| &t.tok)
    }

    fn here(&self) -> usize {
        self.tokens
            .get(self.pos)
            .map(|t| t.pos)
            .unwrap_or(self.src_len)
    }

    fn err<T>(&self, expected: &str) -> Result<T, ParseError> {
        Err(ParseError::Syntax {
            position: self.here(),
            expected: expected.into(),
        })
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), ParseError> {
        if self.peek() == Some(&want) {
            self.pos += 1;
            Ok(())
        } else {
            self.err(what)
        }
    }

    fn sum(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Op('+')) => BinOp::Add,
                Some(Tok::Op('-')) => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Op('*')) => BinOp::Mul,
                Some(Tok::Op('/')) => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Node, ParseError> {
        if self.peek() == Some(&Tok::Op('-')) {
            self.pos += 1;
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node, ParseError> {
        let base = self.atom()?;
        if self.peek() == Some(&Tok::Op('^')) {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Node::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node, ParseError> {
        let tok = match self.tokens.get(self.pos) {
            Some(t) => t.tok.clone(),
            None => return self.err("operand"),
        };
        match tok {
            Tok::Num(v) => {
                self.pos += 1;
                Ok(Node::Num(v))
            }
            Tok::LParen => {
                self.pos += 1;
                let inner = self.sum()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                self.pos += 1;
                self.ident(name)
            }
            _ => self.err("operand"),
        }
    }

    fn ident(&mut self, name: String) -> Result<Node, ParseError> {
        if name == "if" {
            self.expect(Tok::LParen, "`(` after `if`")?;
            let lhs = self.sum()?;
            let op = match self.peek() {
                Some(Tok::Cmp(op)) => *op,
                _ => return self.err("comparison operator"),
            };
            self.pos += 1;
            let rhs = self.sum()?;
            self.expect(Tok::Comma, "`,`")?;
            let then = self.sum()?;
            self.expect(Tok::Comma, "`,`")?;
            let otherwise = self.sum()?;
            self.expect(Tok::RParen, "`)`")?;
            return Ok(Node::If {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
                then: Box::new(then),
                otherwise: Box::new(otherwise),
            });
        }
        if let Some(func) = Func::lookup(&name) {
            self.expect(Tok::LParen, "`(` after function name")?;
            let mut args = vec![self.sum()?];
            while self.peek() == Some(&Tok::Comma) {
                self.pos += 1;
                args.push(self.sum()?);
            }
            if args.len() != func.arity() {
                return self.err(&format!("{} argument(s) to {}", func.arity(), func.name()));
            }
            self.expect(Tok::RParen, "`)`")?;
            return Ok(Node::Call(func, args));
        }
        if name == "pi" {
            return Ok(Node::Pi);
        }
        if name == "t" {
            return Ok(Node::Var(Var::Time));
        }
        let (prefix, digits) = name.split_at(1);
        if (prefix == "x" || prefix == "u")
            && !digits.is_empty()
            && digits.bytes().all(|b| b.is_ascii_digit())
        {
            let index: usize = digits
                .parse()
                .map_err(|_| ParseError::UnknownIdentifier(name.clone()))?;
            let declared = if prefix == "x" { self.dims.0 } else { self.dims.1 };
            if index == 0 || index > declared {
                return Err(ParseError::Dimension { index, declared });
            }
            return Ok(Node::Var(if prefix == "x" {
                Var::State(index - 1)
            } else {
                Var::Control(index - 1)
            }));
        }
        Err(ParseError::UnknownIdentifier(name))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ev(src: &str, dims: (usize, usize), x: &[f64], u: &[f64]) -> Result<f64, EvalError> {
        parse(src, dims).unwrap().eval(&EvalEnv::new(x, u, 0.0))
    }

    #[test]
    fn arithmetic_and_precedence() {
        assert_eq!(ev("x1^2 - u1^2", (1, 1), &[2.0], &[1.0]), Ok(3.0));
        assert_eq!(ev("x1^2 - u1^2", (1, 1), &[0.5], &[1.0]), Ok(-0.75));
        assert_eq!(ev("2+3*4", (0, 0), &[], &[]), Ok(14.0));
        assert_eq!(ev("(2+3)*4", (0, 0), &[], &[]), Ok(20.0));
        assert_eq!(ev("-2^2", (0, 0), &[], &[]), Ok(-4.0));
        assert_eq!(ev("(-2)^2", (0, 0), &[], &[]), Ok(4.0));
        assert_eq!(ev("2^3^2", (0, 0), &[], &[]), Ok(512.0));
        assert_eq!(ev("2^-1", (0, 0), &[], &[]), Ok(0.5));
        assert_eq!(ev("8/4/2", (0, 0), &[], &[]), Ok(1.0));
        assert_eq!(ev("1.5e1 + .5", (0, 0), &[], &[]), Ok(15.5));
    }

    #[test]
    fn piecewise_branch() {
        let src = "if(x1 >= 0, (x1-1)^2, (x1+1)^2)";
        assert_eq!(ev(src, (1, 0), &[0.0], &[]), Ok(1.0));
        assert_eq!(ev(src, (1, 0), &[-3.0], &[]), Ok(4.0));
        assert_eq!(ev(src, (1, 0), &[1.0], &[]), Ok(0.0));
    }

    #[test]
    fn removable_singularity() {
        let src = "x1 * sin(1/x1) + u1";
        assert_eq!(ev(src, (1, 1), &[0.0], &[0.0]), Ok(0.0));
        assert_eq!(ev(src, (1, 1), &[0.0], &[0.25]), Ok(0.25));
        let v = ev(src, (1, 1), &[0.5], &[0.0]).unwrap();
        assert!((v - 0.5 * 2f64.sin()).abs() < 1e-15);
        assert_eq!(ev("1/x1", (1, 0), &[0.0], &[]), Err(EvalError::DivisionByZero));
        assert_eq!(ev("(x1+1) * (1/x1)", (1, 0), &[0.0], &[]), Err(EvalError::DivisionByZero));
    }

    #[test]
    fn time_dependence() {
        assert!(Expr::parse("x1 + if(t > 1, 0, u1)", (1, 1)).unwrap().uses_time());
        assert!(!Expr::parse("x1 * sin(1/x1) + u1", (1, 1)).unwrap().uses_time());
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(
            ev("log(x1)", (1, 0), &[-1.0], &[]),
            Err(EvalError::DomainViolation(_))
        ));
        assert!(matches!(
            ev("sqrt(x1)", (1, 0), &[-1.0], &[]),
            Err(EvalError::DomainViolation(_))
        ));
        assert!(matches!(
            ev("x1^0.5", (1, 0), &[-4.0], &[]),
            Err(EvalError::DomainViolation(_))
        ));
        assert_eq!(ev("x1^3", (1, 0), &[-2.0], &[]), Ok(-8.0));
        assert_eq!(ev("exp(1000)", (0, 0), &[], &[]), Err(EvalError::NonFinite));
    }

    #[test]
    fn parse_errors() {
        assert_eq!(
            parse("x3 + 1", (2, 0)),
            Err(ParseError::Dimension {
                index: 3,
                declared: 2
            })
        );
        assert_eq!(
            parse("u1", (1, 0)),
            Err(ParseError::Dimension {
                index: 1,
                declared: 0
            })
        );
        assert_eq!(
            parse("foo(x1)", (1, 0)),
            Err(ParseError::UnknownIdentifier("foo".into()))
        );
        assert!(matches!(
            parse("x1 +", (1, 0)),
            Err(ParseError::Syntax { position: 4, .. })
        ));
        assert!(matches!(
            parse("(x1", (1, 0)),
            Err(ParseError::Syntax { position: 3, .. })
        ));
        assert!(matches!(parse("", (1, 0)), Err(ParseError::Syntax { .. })));
        assert!(matches!(parse("min(x1)", (1, 0)), Err(ParseError::Syntax { .. })));
        assert!(matches!(parse("if(x1, 1, 2)", (1, 0)), Err(ParseError::Syntax { .. })));
        assert!(matches!(parse("x1 $ 2", (1, 0)), Err(ParseError::Syntax { position: 3, .. })));
    }

    #[test]
    fn functions_and_time() {
        let e = parse("max(min(x1, u1), t) + sign(-3) + abs(-2) + cos(0) + exp(0)", (1, 1)).unwrap();
        let v = e.eval(&EvalEnv::new(&[1.0], &[2.0], 0.5)).unwrap();
        assert_eq!(v, 1.0 - 1.0 + 2.0 + 1.0 + 1.0);
    }

    #[test]
    fn dimension_mismatch_at_eval() {
        let e = parse("x1 + x2", (2, 0)).unwrap();
        assert!(matches!(
            e.eval(&EvalEnv::new(&[1.0], &[], 0.0)),
            Err(EvalError::DimensionMismatch { .. })
        ));
    }

    fn arb_node() -> impl Strategy<Value = Node> {
        let leaf = prop_oneof![
            (0u32..1000).prop_map(|v| Node::Num(v as f64 / 8.0)),
            Just(Node::Var(Var::State(0))),
            Just(Node::Var(Var::State(1))),
            Just(Node::Var(Var::Control(0))),
            Just(Node::Var(Var::Time)),
            Just(Node::Pi),
        ];
        leaf.prop_recursive(4, 32, 3, |inner| {
            prop_oneof![
                inner.clone().prop_map(|a| Node::Neg(Box::new(a))),
                (
                    prop_oneof![
                        Just(BinOp::Add),
                        Just(BinOp::Sub),
                        Just(BinOp::Mul),
                        Just(BinOp::Div),
                        Just(BinOp::Pow)
                    ],
                    inner.clone(),
                    inner.clone()
                )
                    .prop_map(|(op, a, b)| Node::Bin(op, Box::new(a), Box::new(b))),
                inner.clone().prop_map(|a| Node::Call(Func::Sin, vec![a])),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Node::Call(Func::Max, vec![a, b])),
                (inner.clone(), inner.clone(), inner.clone(), inner).prop_map(|(a, b, c, d)| {
                    Node::If {
                        op: CmpOp::Le,
                        lhs: Box::new(a),
                        rhs: Box::new(b),
                        then: Box::new(c),
                        otherwise: Box::new(d),
                    }
                }),
            ]
        })
    }

    proptest! {
        #[test]
        fn print_then_parse_is_identity(node in arb_node()) {
            let e = Expr { root: node, dims: (2, 1) };
            let printed = e.to_string();
            let back = parse(&printed, (2, 1)).unwrap();
            prop_assert_eq!(back, e);
        }

        #[test]
        fn eval_is_deterministic(node in arb_node(), x1 in -3.0..3.0f64, u1 in -1.0..1.0f64) {
            let e = Expr { root: node, dims: (2, 1) };
            let (x, u) = ([x1, 0.5], [u1]);
            let env = EvalEnv::new(&x, &u, 0.25);
            prop_assert_eq!(e.eval(&env), e.eval(&env));
        }
    }
}
