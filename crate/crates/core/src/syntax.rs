//! Labeled abstract syntax for the call-by-value λ-calculus extended with
//! `if`, `set!`, `#f` and `callcc`, plus its s-expression reader and
//! canonical printer.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Identifier.
pub type Name = Arc<str>;

/// Pre-order position of a node in its program. Labels double as
/// allocation sites for the abstract machine.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Label(pub u32);

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum ExprKind {
    Var(Name),
    App(Expr, Expr),
    Lam(Name, Expr),
    If(Expr, Expr, Expr),
    SetBang(Name, Expr),
    False,
    Callcc,
}

#[derive(Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Node {
    pub label: Label,
    pub kind: ExprKind,
    /// Sorted free variables, computed at construction.
    fv: Arc<[Name]>,
}

/// A shared, immutable expression node.
///
/// Equality and ordering are structural and include labels. Hashing only
/// looks at the label and the node shape, which is consistent with
/// equality and keeps hashing of machine states cheap.
#[derive(Clone)]
pub struct Expr(Arc<Node>);

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || self.0 == other.0
    }
}

impl Eq for Expr {}

impl PartialOrd for Expr {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Expr {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        if Arc::ptr_eq(&self.0, &other.0) {
            return std::cmp::Ordering::Equal;
        }
        self.0.cmp(&other.0)
    }
}

impl Hash for Expr {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.0.label.hash(state);
        std::mem::discriminant(&self.0.kind).hash(state);
    }
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self, self.label())
    }
}

impl Expr {
    pub fn with_label(label: Label, kind: ExprKind) -> Expr {
        let fv = node_fv(&kind);
        Expr(Arc::new(Node { label, kind, fv }))
    }

    /// Free variables, sorted. Cached; agrees with [`free_vars`].
    pub fn fv(&self) -> &[Name] {
        &self.0.fv
    }

    /// Builds an unlabeled node (label 0). Call [`Expr::relabel`] on the
    /// finished tree to obtain program labels.
    pub fn new(kind: ExprKind) -> Expr {
        Expr::with_label(Label(0), kind)
    }

    pub fn var(name: &str) -> Expr {
        Expr::new(ExprKind::Var(name.into()))
    }

    pub fn app(operator: Expr, operand: Expr) -> Expr {
        Expr::new(ExprKind::App(operator, operand))
    }

    pub fn lam(param: &str, body: Expr) -> Expr {
        Expr::new(ExprKind::Lam(param.into(), body))
    }

    pub fn if_(test: Expr, then: Expr, els: Expr) -> Expr {
        Expr::new(ExprKind::If(test, then, els))
    }

    pub fn set(target: &str, rhs: Expr) -> Expr {
        Expr::new(ExprKind::SetBang(target.into(), rhs))
    }

    pub fn lit_false() -> Expr {
        Expr::new(ExprKind::False)
    }

    pub fn callcc() -> Expr {
        Expr::new(ExprKind::Callcc)
    }

    pub fn label(&self) -> Label {
        self.0.label
    }

    pub fn kind(&self) -> &ExprKind {
        &self.0.kind
    }

    /// `λ`, `#f` and `callcc` are values; everything else needs evaluating.
    pub fn is_value(&self) -> bool {
        matches!(self.kind(), ExprKind::Lam(..) | ExprKind::False | ExprKind::Callcc)
    }

    pub fn is_lam(&self) -> bool {
        matches!(self.kind(), ExprKind::Lam(..))
    }

    /// Reassigns labels in pre-order starting at 1.
    pub fn relabel(&self) -> Expr {
        let mut next = 1;
        self.relabel_from(&mut next)
    }

    fn relabel_from(&self, next: &mut u32) -> Expr {
        let label = Label(*next);
        *next += 1;
        let kind = match self.kind() {
            ExprKind::Var(x) => ExprKind::Var(x.clone()),
            ExprKind::App(f, a) => {
                let f = f.relabel_from(next);
                ExprKind::App(f, a.relabel_from(next))
            }
            ExprKind::Lam(x, b) => ExprKind::Lam(x.clone(), b.relabel_from(next)),
            ExprKind::If(c, t, e) => {
                let c = c.relabel_from(next);
                let t = t.relabel_from(next);
                ExprKind::If(c, t, e.relabel_from(next))
            }
            ExprKind::SetBang(x, e) => ExprKind::SetBang(x.clone(), e.relabel_from(next)),
            ExprKind::False => ExprKind::False,
            ExprKind::Callcc => ExprKind::Callcc,
        };
        Expr::with_label(label, kind)
    }

    pub fn children(&self) -> Vec<&Expr> {
        match self.kind() {
            ExprKind::Var(_) | ExprKind::False | ExprKind::Callcc => vec![],
            ExprKind::App(f, a) => vec![f, a],
            ExprKind::Lam(_, b) => vec![b],
            ExprKind::If(c, t, e) => vec![c, t, e],
            ExprKind::SetBang(_, e) => vec![e],
        }
    }

    /// All nodes in pre-order.
    pub fn preorder(&self) -> Vec<&Expr> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(e) = stack.pop() {
            out.push(e);
            let mut kids = e.children();
            kids.reverse();
            stack.extend(kids);
        }
        out
    }

    pub fn node_count(&self) -> usize {
        self.preorder().len()
    }

    pub fn labels(&self) -> Vec<Label> {
        self.preorder().into_iter().map(Expr::label).collect()
    }

    pub fn find(&self, label: Label) -> Option<&Expr> {
        self.preorder().into_iter().find(|e| e.label() == label)
    }

    /// Every identifier appearing in binding, reference or assignment position.
    pub fn variables(&self) -> BTreeSet<Name> {
        let mut out = BTreeSet::new();
        for e in self.preorder() {
            match e.kind() {
                ExprKind::Var(x) | ExprKind::Lam(x, _) | ExprKind::SetBang(x, _) => {
                    out.insert(x.clone());
                }
                _ => {}
            }
        }
        out
    }

    /// True when the term uses only the pure core plus `if`/`#f`.
    pub fn is_pure(&self) -> bool {
        self.preorder().iter().all(|e| !matches!(e.kind(), ExprKind::SetBang(..) | ExprKind::Callcc))
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind() {
            ExprKind::Var(x) => write!(f, "{x}"),
            ExprKind::App(a, b) => write!(f, "({a} {b})"),
            ExprKind::Lam(x, b) => write!(f, "(λ ({x}) {b})"),
            ExprKind::If(c, t, e) => write!(f, "(if {c} {t} {e})"),
            ExprKind::SetBang(x, e) => write!(f, "(set! {x} {e})"),
            ExprKind::False => write!(f, "#f"),
            ExprKind::Callcc => write!(f, "callcc"),
        }
    }
}

fn node_fv(kind: &ExprKind) -> Arc<[Name]> {
    let mut out: BTreeSet<Name> = BTreeSet::new();
    match kind {
        ExprKind::Var(x) => {
            out.insert(x.clone());
        }
        ExprKind::SetBang(x, e) => {
            out.insert(x.clone());
            out.extend(e.fv().iter().cloned());
        }
        ExprKind::Lam(x, b) => out.extend(b.fv().iter().filter(|y| *y != x).cloned()),
        ExprKind::App(f, a) => {
            out.extend(f.fv().iter().cloned());
            out.extend(a.fv().iter().cloned());
        }
        ExprKind::If(c, t, e) => {
            for part in [c, t, e] {
                out.extend(part.fv().iter().cloned());
            }
        }
        ExprKind::False | ExprKind::Callcc => {}
    }
    out.into_iter().collect()
}

/// Free variables. `set!` counts its target as a free occurrence.
pub fn free_vars(e: &Expr) -> BTreeSet<Name> {
    let mut out = BTreeSet::new();
    let mut bound = Vec::new();
    collect_free(e, &mut bound, &mut out, &mut |_, _| {});
    out
}

fn collect_free(e: &Expr, bound: &mut Vec<Name>, out: &mut BTreeSet<Name>, on_free: &mut dyn FnMut(&Name, Label)) {
    match e.kind() {
        ExprKind::Var(x) | ExprKind::SetBang(x, _) if !bound.contains(x) => {
            out.insert(x.clone());
            on_free(x, e.label());
        }
        _ => {}
    }
    match e.kind() {
        ExprKind::Lam(x, b) => {
            bound.push(x.clone());
            collect_free(b, bound, out, on_free);
            bound.pop();
        }
        _ => {
            for c in e.children() {
                collect_free(c, bound, out, on_free);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("open term: {}", .free.iter().map(|(x, l)| format!("{x}@{l}")).collect::<Vec<_>>().join(", "))]
pub struct OpenTermError {
    /// Each free occurrence with the label of the referencing node.
    pub free: Vec<(Name, Label)>,
}

pub fn check_closed(e: &Expr) -> Result<(), OpenTermError> {
    let mut free = Vec::new();
    let mut sink = BTreeSet::new();
    collect_free(e, &mut Vec::new(), &mut sink, &mut |x, l| free.push((x.clone(), l)));
    if free.is_empty() {
        Ok(())
    } else {
        Err(OpenTermError { free })
    }
}

/// Label-insensitive α-equivalence.
pub fn alpha_eq(a: &Expr, b: &Expr) -> bool {
    fn go(a: &Expr, b: &Expr, ba: &mut Vec<Name>, bb: &mut Vec<Name>) -> bool {
        fn index(stack: &[Name], x: &Name) -> Option<usize> {
            stack.iter().rev().position(|y| y == x)
        }
        match (a.kind(), b.kind()) {
            (ExprKind::Var(x), ExprKind::Var(y)) => match (index(ba, x), index(bb, y)) {
                (Some(i), Some(j)) => i == j,
                (None, None) => x == y,
                _ => false,
            },
            (ExprKind::App(f1, a1), ExprKind::App(f2, a2)) => go(f1, f2, ba, bb) && go(a1, a2, ba, bb),
            (ExprKind::Lam(x, b1), ExprKind::Lam(y, b2)) => {
                ba.push(x.clone());
                bb.push(y.clone());
                let r = go(b1, b2, ba, bb);
                ba.pop();
                bb.pop();
                r
            }
            (ExprKind::If(c1, t1, e1), ExprKind::If(c2, t2, e2)) => {
                go(c1, c2, ba, bb) && go(t1, t2, ba, bb) && go(e1, e2, ba, bb)
            }
            (ExprKind::SetBang(x, e1), ExprKind::SetBang(y, e2)) => {
                let same_target = match (index(ba, x), index(bb, y)) {
                    (Some(i), Some(j)) => i == j,
                    (None, None) => x == y,
                    _ => false,
                };
                same_target && go(e1, e2, ba, bb)
            }
            (ExprKind::False, ExprKind::False) | (ExprKind::Callcc, ExprKind::Callcc) => true,
            _ => false,
        }
    }
    go(a, b, &mut Vec::new(), &mut Vec::new())
}

/// Simultaneous substitution of closed terms for free variables.
///
/// Every replacement must be closed, so no renaming is needed; binders
/// shadow the substitution beneath them. Nodes that are rebuilt keep their
/// original labels.
pub fn substitute(e: &Expr, subst: &BTreeMap<Name, Expr>) -> Expr {
    if subst.is_empty() {
        return e.clone();
    }
    match e.kind() {
        ExprKind::Var(x) => match subst.get(x) {
            Some(v) => v.clone(),
            None => e.clone(),
        },
        ExprKind::Lam(x, b) => {
            if subst.contains_key(x) {
                let mut inner = subst.clone();
                inner.remove(x);
                Expr::with_label(e.label(), ExprKind::Lam(x.clone(), substitute(b, &inner)))
            } else {
                Expr::with_label(e.label(), ExprKind::Lam(x.clone(), substitute(b, subst)))
            }
        }
        ExprKind::App(f, a) => Expr::with_label(e.label(), ExprKind::App(substitute(f, subst), substitute(a, subst))),
        ExprKind::If(c, t, f) => {
            Expr::with_label(e.label(), ExprKind::If(substitute(c, subst), substitute(t, subst), substitute(f, subst)))
        }
        // A set! of a substituted variable has no substitution meaning; the
        // callers only substitute into pure terms.
        ExprKind::SetBang(x, r) => Expr::with_label(e.label(), ExprKind::SetBang(x.clone(), substitute(r, subst))),
        ExprKind::False | ExprKind::Callcc => e.clone(),
    }
}

// ---------------------------------------------------------------------------
// Reader

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SyntaxErrorKind {
    UnexpectedEof,
    UnexpectedClose,
    TrailingInput,
    EmptyList,
    InvalidIdentifier(String),
    ReservedWord(String),
    /// A form was given the wrong number of parts.
    Arity {
        form: &'static str,
        expected: &'static str,
    },
    MalformedParams,
}

impl fmt::Display for SyntaxErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SyntaxErrorKind::UnexpectedEof => write!(f, "unexpected end of input"),
            SyntaxErrorKind::UnexpectedClose => write!(f, "unexpected `)`"),
            SyntaxErrorKind::TrailingInput => write!(f, "input continues after the program"),
            SyntaxErrorKind::EmptyList => write!(f, "empty list is not an expression"),
            SyntaxErrorKind::InvalidIdentifier(s) => write!(f, "invalid identifier `{s}`"),
            SyntaxErrorKind::ReservedWord(s) => write!(f, "`{s}` is reserved"),
            SyntaxErrorKind::Arity { form, expected } => {
                write!(f, "arity error: `{form}` expects {expected}")
            }
            SyntaxErrorKind::MalformedParams => {
                write!(f, "lambda takes exactly one parameter: (lambda (x) body)")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{col}: {kind}")]
pub struct SyntaxError {
    pub line: usize,
    pub col: usize,
    pub kind: SyntaxErrorKind,
}

#[derive(Debug, Clone, Copy)]
struct Pos {
    line: usize,
    col: usize,
}

#[derive(Debug)]
enum Sexp {
    Atom(String, Pos),
    List(Vec<Sexp>, Pos),
}

impl Sexp {
    fn pos(&self) -> Pos {
        match self {
            Sexp::Atom(_, p) | Sexp::List(_, p) => *p,
        }
    }
}

fn err(pos: Pos, kind: SyntaxErrorKind) -> SyntaxError {
    SyntaxError { line: pos.line, col: pos.col, kind }
}

enum Token {
    Open(Pos),
    Close(Pos),
    Atom(String, Pos),
}

fn tokenize(text: &str) -> Vec<Token> {
    let mut out = Vec::new();
    let mut chars = text.chars().peekable();
    let (mut line, mut col) = (1, 1);
    while let Some(&c) = chars.peek() {
        let pos = Pos { line, col };
        match c {
            '\n' => {
                chars.next();
                line += 1;
                col = 1;
            }
            ';' => {
                while let Some(&c) = chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    chars.next();
                }
            }
            c if c.is_whitespace() => {
                chars.next();
                col += 1;
            }
            '(' | '[' => {
                chars.next();
                col += 1;
                out.push(Token::Open(pos));
            }
            ')' | ']' => {
                chars.next();
                col += 1;
                out.push(Token::Close(pos));
            }
            _ => {
                let mut atom = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_whitespace() || matches!(c, '(' | ')' | '[' | ']' | ';') {
                        break;
                    }
                    atom.push(c);
                    chars.next();
                    col += 1;
                }
                out.push(Token::Atom(atom, pos));
            }
        }
    }
    out
}

fn read_sexp(tokens: &[Token], i: &mut usize, end: Pos) -> Result<Sexp, SyntaxError> {
    match tokens.get(*i) {
        None => Err(err(end, SyntaxErrorKind::UnexpectedEof)),
        Some(Token::Close(p)) => Err(err(*p, SyntaxErrorKind::UnexpectedClose)),
        Some(Token::Atom(s, p)) => {
            *i += 1;
            Ok(Sexp::Atom(s.clone(), *p))
        }
        Some(Token::Open(p)) => {
            let open = *p;
            *i += 1;
            let mut items = Vec::new();
            loop {
                match tokens.get(*i) {
                    None => return Err(err(end, SyntaxErrorKind::UnexpectedEof)),
                    Some(Token::Close(_)) => {
                        *i += 1;
                        return Ok(Sexp::List(items, open));
                    }
                    Some(_) => items.push(read_sexp(tokens, i, end)?),
                }
            }
        }
    }
}

const RESERVED: [&str; 5] = ["lambda", "λ", "if", "set!", "callcc"];

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || matches!(c, '-' | '_' | '!' | '?') => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '!' | '?'))
}

fn identifier(s: &Sexp) -> Result<Name, SyntaxError> {
    match s {
        Sexp::Atom(a, p) => {
            if RESERVED.contains(&a.as_str()) || a == "#f" {
                Err(err(*p, SyntaxErrorKind::ReservedWord(a.clone())))
            } else if is_identifier(a) {
                Ok(a.as_str().into())
            } else {
                Err(err(*p, SyntaxErrorKind::InvalidIdentifier(a.clone())))
            }
        }
        Sexp::List(_, p) => Err(err(*p, SyntaxErrorKind::InvalidIdentifier("(…)".into()))),
    }
}

fn to_expr(s: &Sexp) -> Result<Expr, SyntaxError> {
    match s {
        Sexp::Atom(a, p) => match a.as_str() {
            "#f" => Ok(Expr::lit_false()),
            "callcc" => Ok(Expr::callcc()),
            "lambda" | "λ" | "if" | "set!" => Err(err(*p, SyntaxErrorKind::ReservedWord(a.clone()))),
            _ => Ok(Expr::new(ExprKind::Var(identifier(s)?))),
        },
        Sexp::List(items, p) => {
            let head = match items.first() {
                None => return Err(err(*p, SyntaxErrorKind::EmptyList)),
                Some(h) => h,
            };
            let keyword = match head {
                Sexp::Atom(a, _) => Some(a.as_str()),
                Sexp::List(..) => None,
            };
            match keyword {
                Some("lambda") | Some("λ") => {
                    if items.len() != 3 {
                        return Err(err(
                            *p,
                            SyntaxErrorKind::Arity { form: "lambda", expected: "a parameter list and a body" },
                        ));
                    }
                    let param = match &items[1] {
                        Sexp::List(ps, _) if ps.len() == 1 => identifier(&ps[0])?,
                        other => return Err(err(other.pos(), SyntaxErrorKind::MalformedParams)),
                    };
                    Ok(Expr::new(ExprKind::Lam(param, to_expr(&items[2])?)))
                }
                Some("if") => {
                    if items.len() != 4 {
                        return Err(err(
                            *p,
                            SyntaxErrorKind::Arity { form: "if", expected: "a test and two branches" },
                        ));
                    }
                    Ok(Expr::if_(to_expr(&items[1])?, to_expr(&items[2])?, to_expr(&items[3])?))
                }
                Some("set!") => {
                    if items.len() != 3 {
                        return Err(err(
                            *p,
                            SyntaxErrorKind::Arity { form: "set!", expected: "a variable and an expression" },
                        ));
                    }
                    Ok(Expr::new(ExprKind::SetBang(identifier(&items[1])?, to_expr(&items[2])?)))
                }
                _ => {
                    if items.len() != 2 {
                        return Err(err(
                            *p,
                            SyntaxErrorKind::Arity { form: "application", expected: "exactly one operand" },
                        ));
                    }
                    Ok(Expr::app(to_expr(&items[0])?, to_expr(&items[1])?))
                }
            }
        }
    }
}

/// Reads one program. Labels are assigned in pre-order starting at 1.
pub fn parse(text: &str) -> Result<Expr, SyntaxError> {
    let tokens = tokenize(text);
    let end = {
        let lines: Vec<&str> = text.split('\n').collect();
        Pos { line: lines.len(), col: lines.last().map_or(0, |l| l.chars().count()) + 1 }
    };
    let mut i = 0;
    let sexp = read_sexp(&tokens, &mut i, end)?;
    if let Some(tok) = tokens.get(i) {
        let pos = match tok {
            Token::Open(p) | Token::Close(p) | Token::Atom(_, p) => *p,
        };
        return Err(err(pos, SyntaxErrorKind::TrailingInput));
    }
    Ok(to_expr(&sexp)?.relabel())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(xs: &[&str]) -> BTreeSet<Name> {
        xs.iter().map(|x| Name::from(*x)).collect()
    }

    #[test]
    fn parses_identity_with_preorder_labels() {
        let e = parse("(lambda (x) x)").unwrap();
        assert_eq!(e.label(), Label(1));
        match e.kind() {
            ExprKind::Lam(x, b) => {
                assert_eq!(&**x, "x");
                assert_eq!(b.label(), Label(2));
                assert_eq!(b.kind(), &ExprKind::Var("x".into()));
            }
            k => panic!("unexpected {k:?}"),
        }
    }

    #[test]
    fn lambda_spellings_are_interchangeable() {
        let a = parse("((λ (x) x) (λ (y) y))").unwrap();
        let b = parse("((lambda (x) x) (lambda (y) y))").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.labels(), (1..=5).map(Label).collect::<Vec<_>>());
    }

    #[test]
    fn set_without_rhs_is_an_arity_error() {
        let e = parse("(set! x)").unwrap_err();
        assert!(matches!(e.kind, SyntaxErrorKind::Arity { form: "set!", .. }));
        assert_eq!((e.line, e.col), (1, 1));
    }

    #[test]
    fn multi_parameter_lambda_is_rejected() {
        let e = parse("(lambda (x y) x)").unwrap_err();
        assert_eq!(e.kind, SyntaxErrorKind::MalformedParams);
        assert_eq!(e.col, 9);
    }

    #[test]
    fn syntax_errors_carry_positions() {
        let e = parse("(f\n  (g x)").unwrap_err();
        assert_eq!(e.kind, SyntaxErrorKind::UnexpectedEof);
        let e = parse("(f x))").unwrap_err();
        assert_eq!((e.kind.clone(), e.col), (SyntaxErrorKind::TrailingInput, 6));
        let e = parse("(f a b)").unwrap_err();
        assert!(matches!(e.kind, SyntaxErrorKind::Arity { form: "application", .. }));
        let e = parse("\n ((λ (1x) x) #f)").unwrap_err();
        assert_eq!((e.line, e.col), (2, 7));
        assert!(parse("()").is_err());
        assert!(parse("(if #f #f)").is_err());
        assert!(parse("(lambda (if) if)").is_err());
    }

    #[test]
    fn comments_and_literals() {
        let e = parse("; leading comment\n(callcc ; inner\n #f)").unwrap();
        assert_eq!(e.to_string(), "(callcc #f)");
    }

    #[test]
    fn free_variable_examples() {
        let id = parse("(lambda (x) x)").unwrap();
        assert!(free_vars(&id).is_empty());
        assert_eq!(free_vars(&Expr::lam("y", Expr::var("x"))), names(&["x"]));
        let s = Expr::set("x", Expr::lam("y", Expr::var("y")));
        assert_eq!(free_vars(&s), names(&["x"]));
    }

    #[test]
    fn closedness_reports_labels() {
        assert!(check_closed(&parse("(lambda (x) x)").unwrap()).is_ok());
        let e = check_closed(&parse("x").unwrap()).unwrap_err();
        assert_eq!(e.free, vec![("x".into(), Label(1))]);
        let e = check_closed(&parse("((lambda (x) x) z)").unwrap()).unwrap_err();
        assert_eq!(e.free, vec![("z".into(), Label(4))]);
        assert_eq!(e.to_string(), "open term: z@4");
    }

    #[test]
    fn alpha_equivalence_ignores_labels_and_binder_names() {
        let a = parse("(λ (x) (λ (y) (x y)))").unwrap();
        let b = parse("(λ (p) (λ (q) (p q)))").unwrap();
        let c = parse("(λ (p) (λ (q) (q p)))").unwrap();
        assert!(alpha_eq(&a, &b));
        assert!(!alpha_eq(&a, &c));
        assert!(alpha_eq(&Expr::lam("z", Expr::var("z")), &parse("(λ (w) w)").unwrap()));
        assert!(!alpha_eq(&Expr::var("x"), &Expr::var("y")));
    }

    #[test]
    fn substitution_respects_shadowing() {
        let e = parse("((λ (x) x) x)").unwrap();
        let mut s = BTreeMap::new();
        s.insert(Name::from("x"), Expr::lit_false());
        assert_eq!(substitute(&e, &s).to_string(), "((λ (x) x) #f)");
    }
}
