//! Symbolic scenes and the toy program executor.
//!
//! Programs are compositional calls over a scene of attribute-bearing
//! objects, e.g. `COUNT(FILTER(color=red))`. Six operations exist:
//!
//! | Op        | Signature                         | Result                        |
//! |-----------|-----------------------------------|-------------------------------|
//! | `FILTER`  | `FILTER([set,] k=v ...)`          | matching objects              |
//! | `COUNT`   | `COUNT([set])`                    | object count                  |
//! | `EXISTS`  | `EXISTS([set])`                   | `yes` / `no`                  |
//! | `COMPARE` | `COMPARE(num, num)`               | `greater` / `less` / `equal`  |
//! | `REPLACE` | `REPLACE([set,] k=v ...)`         | whole scene, set updated      |
//! | `REMOVE`  | `REMOVE(set \| k=v ...)`          | whole scene minus the set     |
//!
//! With the set argument omitted, `FILTER`/`COUNT`/`EXISTS`/`REPLACE` operate
//! on the whole scene. Execution is pure: the payload scene is never mutated;
//! editing ops return a new scene rendered as the result text.

use std::collections::BTreeMap;

use crate::error::{EhcError, Result};

/// One object: a set of `attribute = value` pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SceneObject {
    attrs: BTreeMap<String, String>,
}

impl SceneObject {
    pub fn new(pairs: &[(&str, &str)]) -> Self {
        Self {
            attrs: pairs
                .iter()
                .map(|(k, v)| ((*k).to_owned(), (*v).to_owned()))
                .collect(),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.attrs.get(key).map(String::as_str)
    }

    pub fn matches(&self, preds: &[(String, String)]) -> bool {
        preds.iter().all(|(k, v)| self.get(k) == Some(v.as_str()))
    }

    fn render(&self) -> String {
        self.attrs
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// An ordered object list. Canonical text form: objects joined by `"; "`,
/// attributes within an object sorted by name; the empty scene renders as
/// `"(empty)"`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Scene {
    objects: Vec<SceneObject>,
}

pub const EMPTY_SCENE_TEXT: &str = "(empty)";

impl Scene {
    pub fn new(objects: Vec<SceneObject>) -> Self {
        Self { objects }
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    pub fn objects(&self) -> &[SceneObject] {
        &self.objects
    }

    pub fn push(&mut self, object: SceneObject) {
        self.objects.push(object);
    }

    /// Parses the canonical text form. The empty string and `"(empty)"` both
    /// parse to the empty scene.
    pub fn parse(text: &str) -> Result<Self> {
        let trimmed = text.trim();
        if trimmed.is_empty() || trimmed == EMPTY_SCENE_TEXT {
            return Ok(Self::default());
        }
        let mut objects = Vec::new();
        for (i, chunk) in trimmed.split(';').enumerate() {
            let chunk = chunk.trim();
            if chunk.is_empty() {
                return Err(EhcError::Usage(format!("scene object {} is empty", i + 1)));
            }
            let mut attrs = BTreeMap::new();
            for pair in chunk.split_whitespace() {
                let Some((k, v)) = pair.split_once('=') else {
                    return Err(EhcError::Usage(format!(
                        "scene object {}: {pair:?} is not attribute=value",
                        i + 1
                    )));
                };
                if k.is_empty() || v.is_empty() {
                    return Err(EhcError::Usage(format!(
                        "scene object {}: empty attribute or value in {pair:?}",
                        i + 1
                    )));
                }
                if attrs.insert(k.to_owned(), v.to_owned()).is_some() {
                    return Err(EhcError::Usage(format!(
                        "scene object {}: duplicate attribute {k:?}",
                        i + 1
                    )));
                }
            }
            objects.push(SceneObject { attrs });
        }
        Ok(Self { objects })
    }

    pub fn render(&self) -> String {
        if self.objects.is_empty() {
            return EMPTY_SCENE_TEXT.to_owned();
        }
        self.objects
            .iter()
            .map(SceneObject::render)
            .collect::<Vec<_>>()
            .join("; ")
    }

    /// Indexes of objects matching all predicates, ascending.
    pub fn matching(&self, preds: &[(String, String)]) -> Vec<usize> {
        self.objects
            .iter()
            .enumerate()
            .filter(|(_, o)| o.matches(preds))
            .map(|(i, _)| i)
            .collect()
    }

    /// A new scene with `preds` applied to the objects at `indexes`.
    pub fn with_replaced(&self, indexes: &[usize], preds: &[(String, String)]) -> Scene {
        let mut objects = self.objects.clone();
        for &i in indexes {
            for (k, v) in preds {
                objects[i].attrs.insert(k.clone(), v.clone());
            }
        }
        Scene { objects }
    }

    /// A new scene without the objects at `indexes`.
    pub fn without(&self, indexes: &[usize]) -> Scene {
        let objects = self
            .objects
            .iter()
            .enumerate()
            .filter(|(i, _)| !indexes.contains(i))
            .map(|(_, o)| o.clone())
            .collect();
        Scene { objects }
    }

    /// The sub-scene holding only the objects at `indexes` (ascending order
    /// expected).
    pub fn subset(&self, indexes: &[usize]) -> Scene {
        Scene {
            objects: indexes.iter().map(|&i| self.objects[i].clone()).collect(),
        }
    }
}

/// Outcome of running one program against one payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecOutcome {
    pub ok: bool,
    /// Rendered result value when `ok`; empty otherwise.
    pub result: String,
    /// Failure explanation when `!ok`; empty otherwise.
    pub diagnostic: String,
}

impl ExecOutcome {
    fn success(result: String) -> Self {
        Self { ok: true, result, diagnostic: String::new() }
    }

    fn failure(diagnostic: String) -> Self {
        Self { ok: false, result: String::new(), diagnostic }
    }
}

/// Anything that can run a generated program against a task payload.
pub trait Executor: Send + Sync {
    fn execute(&self, program: &str, payload: &str) -> ExecOutcome;
}

/// The built-in symbolic executor.
#[derive(Debug, Default, Clone, Copy)]
pub struct ToyExecutor;

impl Executor for ToyExecutor {
    fn execute(&self, program: &str, payload: &str) -> ExecOutcome {
        let scene = match Scene::parse(payload) {
            Ok(s) => s,
            Err(e) => return ExecOutcome::failure(format!("bad payload: {e}")),
        };
        let expr = match parse_program(program) {
            Ok(e) => e,
            Err(e) => return ExecOutcome::failure(e),
        };
        match eval(&expr, &scene) {
            Ok(value) => ExecOutcome::success(render_value(&value, &scene)),
            Err(e) => ExecOutcome::failure(e),
        }
    }
}

// ---- program syntax ----

#[derive(Debug, Clone, PartialEq, Eq)]
enum Expr {
    Call { op: String, args: Vec<Arg> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Arg {
    Expr(Expr),
    Preds(Vec<(String, String)>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Token {
    Ident(String),
    LParen,
    RParen,
    Comma,
    Eq,
}

fn lex(program: &str) -> std::result::Result<Vec<Token>, String> {
    let mut tokens = Vec::new();
    let mut chars = program.char_indices().peekable();
    while let Some(&(i, c)) = chars.peek() {
        match c {
            c if c.is_whitespace() => {
                chars.next();
            }
            '(' => {
                tokens.push(Token::LParen);
                chars.next();
            }
            ')' => {
                tokens.push(Token::RParen);
                chars.next();
            }
            ',' => {
                tokens.push(Token::Comma);
                chars.next();
            }
            '=' => {
                tokens.push(Token::Eq);
                chars.next();
            }
            c if c.is_ascii_alphanumeric() || c == '_' => {
                let mut ident = String::new();
                while let Some(&(_, c)) = chars.peek() {
                    if c.is_ascii_alphanumeric() || c == '_' {
                        ident.push(c);
                        chars.next();
                    } else {
                        break;
                    }
                }
                tokens.push(Token::Ident(ident));
            }
            other => return Err(format!("unexpected character {other:?} at byte {i}")),
        }
    }
    Ok(tokens)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, token: &Token, what: &str) -> std::result::Result<(), String> {
        match self.next() {
            Some(t) if t == *token => Ok(()),
            other => Err(format!("expected {what}, found {other:?}")),
        }
    }

    fn parse_expr(&mut self) -> std::result::Result<Expr, String> {
        let op = match self.next() {
            Some(Token::Ident(name)) => name,
            other => return Err(format!("expected operation name, found {other:?}")),
        };
        self.expect(&Token::LParen, "'('")?;
        let mut args = Vec::new();
        if self.peek() != Some(&Token::RParen) {
            loop {
                args.push(self.parse_arg()?);
                match self.peek() {
                    Some(Token::Comma) => {
                        self.next();
                    }
                    _ => break,
                }
            }
        }
        self.expect(&Token::RParen, "')'")?;
        Ok(Expr::Call { op, args })
    }

    fn parse_arg(&mut self) -> std::result::Result<Arg, String> {
        // Lookahead: `ident (` starts a nested call, `ident =` a predicate
        // list.
        match (self.peek(), self.tokens.get(self.pos + 1)) {
            (Some(Token::Ident(_)), Some(Token::LParen)) => Ok(Arg::Expr(self.parse_expr()?)),
            (Some(Token::Ident(_)), Some(Token::Eq)) => {
                let mut preds = Vec::new();
                loop {
                    let key = match self.next() {
                        Some(Token::Ident(k)) => k,
                        other => return Err(format!("expected attribute name, found {other:?}")),
                    };
                    self.expect(&Token::Eq, "'='")?;
                    let value = match self.next() {
                        Some(Token::Ident(v)) => v,
                        other => return Err(format!("expected attribute value, found {other:?}")),
                    };
                    preds.push((key, value));
                    // Another `ident =` pair continues the list.
                    match (self.peek(), self.tokens.get(self.pos + 1)) {
                        (Some(Token::Ident(_)), Some(Token::Eq)) => continue,
                        _ => break,
                    }
                }
                Ok(Arg::Preds(preds))
            }
            (other, _) => Err(format!("expected argument, found {other:?}")),
        }
    }
}

fn parse_program(program: &str) -> std::result::Result<Expr, String> {
    let tokens = lex(program)?;
    if tokens.is_empty() {
        return Err("empty program".into());
    }
    let mut parser = Parser { tokens, pos: 0 };
    let expr = parser.parse_expr()?;
    if parser.pos != parser.tokens.len() {
        return Err(format!(
            "trailing input after program: {:?}",
            &parser.tokens[parser.pos..]
        ));
    }
    Ok(expr)
}

// ---- evaluation ----

#[derive(Debug, Clone, PartialEq)]
enum Value {
    Num(i64),
    Text(String),
    /// Indexes into the root scene, ascending.
    Set(Vec<usize>),
    Scene(Scene),
}

fn render_value(value: &Value, scene: &Scene) -> String {
    match value {
        Value::Num(n) => n.to_string(),
        Value::Text(t) => t.clone(),
        Value::Set(indexes) => scene.subset(indexes).render(),
        Value::Scene(s) => s.render(),
    }
}

fn eval(expr: &Expr, scene: &Scene) -> std::result::Result<Value, String> {
    let Expr::Call { op, args } = expr;
    let name = op.to_ascii_uppercase();
    match name.as_str() {
        "FILTER" => {
            let (base, preds) = split_set_and_preds(args, scene, &name)?;
            let preds = preds.ok_or_else(|| "FILTER needs predicates".to_owned())?;
            Ok(Value::Set(
                base.into_iter()
                    .filter(|&i| scene.objects()[i].matches(&preds))
                    .collect(),
            ))
        }
        "COUNT" => {
            let set = optional_set(args, scene, &name)?;
            Ok(Value::Num(set.len() as i64))
        }
        "EXISTS" => {
            let set = optional_set(args, scene, &name)?;
            Ok(Value::Text(if set.is_empty() { "no" } else { "yes" }.to_owned()))
        }
        "COMPARE" => {
            if args.len() != 2 {
                return Err(format!("COMPARE takes 2 arguments, got {}", args.len()));
            }
            let a = eval_num(&args[0], scene)?;
            let b = eval_num(&args[1], scene)?;
            Ok(Value::Text(
                match a.cmp(&b) {
                    std::cmp::Ordering::Greater => "greater",
                    std::cmp::Ordering::Less => "less",
                    std::cmp::Ordering::Equal => "equal",
                }
                .to_owned(),
            ))
        }
        "REPLACE" => {
            let (base, preds) = split_set_and_preds(args, scene, &name)?;
            let preds = preds.ok_or_else(|| "REPLACE needs attribute=value updates".to_owned())?;
            Ok(Value::Scene(scene.with_replaced(&base, &preds)))
        }
        "REMOVE" => {
            let (base, preds) = split_set_and_preds(args, scene, &name)?;
            // REMOVE(k=v) is sugar for REMOVE(FILTER(k=v)).
            let doomed: Vec<usize> = match preds {
                Some(preds) => base
                    .into_iter()
                    .filter(|&i| scene.objects()[i].matches(&preds))
                    .collect(),
                None => base,
            };
            Ok(Value::Scene(scene.without(&doomed)))
        }
        other => Err(format!("unknown operation {other:?}")),
    }
}

/// Evaluates an optional leading set argument plus an optional trailing
/// predicate list. With no set argument the whole scene is the base.
fn split_set_and_preds(
    args: &[Arg],
    scene: &Scene,
    op: &str,
) -> std::result::Result<(Vec<usize>, Option<Vec<(String, String)>>), String> {
    let all: Vec<usize> = (0..scene.len()).collect();
    match args {
        [] => Ok((all, None)),
        [Arg::Preds(preds)] => Ok((all, Some(preds.clone()))),
        [Arg::Expr(e)] => Ok((eval_set(e, scene)?, None)),
        [Arg::Expr(e), Arg::Preds(preds)] => Ok((eval_set(e, scene)?, Some(preds.clone()))),
        _ => Err(format!("{op}: unsupported argument shape")),
    }
}

fn optional_set(args: &[Arg], scene: &Scene, op: &str) -> std::result::Result<Vec<usize>, String> {
    match args {
        [] => Ok((0..scene.len()).collect()),
        [Arg::Expr(e)] => eval_set(e, scene),
        // COUNT(color=red) reads naturally; accept it as FILTER sugar.
        [Arg::Preds(preds)] => Ok(scene.matching(preds)),
        _ => Err(format!("{op} takes at most one argument")),
    }
}

fn eval_set(expr: &Expr, scene: &Scene) -> std::result::Result<Vec<usize>, String> {
    match eval(expr, scene)? {
        Value::Set(s) => Ok(s),
        other => Err(format!("expected an object set, got {}", value_kind(&other))),
    }
}

fn eval_num(arg: &Arg, scene: &Scene) -> std::result::Result<i64, String> {
    match arg {
        Arg::Expr(e) => match eval(e, scene)? {
            Value::Num(n) => Ok(n),
            other => Err(format!("expected a number, got {}", value_kind(&other))),
        },
        Arg::Preds(_) => Err("expected a number, got predicates".into()),
    }
}

fn value_kind(value: &Value) -> &'static str {
    match value {
        Value::Num(_) => "a number",
        Value::Text(_) => "text",
        Value::Set(_) => "an object set",
        Value::Scene(_) => "a scene",
    }
}
