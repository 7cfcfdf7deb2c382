//! A small PlanOut-style assignment language.
//!
//! ```text
//! # hierarchical block random assignment
//! smoking_program_prob = randomFloat(min=0, max=1, unit=subject_group_id);
//! smoking_program = bernoulliTrial(p=smoking_program_prob, unit=subject_id);
//! ```
//!
//! Statements are `name = builtin(key=value, ...);`. The value of `unit=` names
//! a unit column; any other bare identifier refers to an earlier variable.
//! Variable `v` of experiment `e` hashes under the salt `e.v`.

use std::collections::{HashMap, HashSet};
use std::fmt;

use thiserror::Error;

use crate::hashing::SaltedHasher;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DslError {
    #[error("{line}:{col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("{line}:{col}: unknown builtin {name:?}")]
    UnknownBuiltin { name: String, line: usize, col: usize },
    #[error("{line}:{col}: {builtin} requires keyword {keyword:?}")]
    MissingKeyword { builtin: Builtin, keyword: &'static str, line: usize, col: usize },
    #[error("{line}:{col}: {builtin} does not take keyword {keyword:?}")]
    UnexpectedKeyword { builtin: Builtin, keyword: String, line: usize, col: usize },
    #[error("{line}:{col}: undefined variable {name:?}")]
    UndefinedVariable { name: String, line: usize, col: usize },
    #[error("{line}:{col}: keyword {keyword:?} expects {expected}")]
    BadArgument { keyword: String, expected: &'static str, line: usize, col: usize },
    #[error("no value bound for unit {0:?}")]
    UnboundUnit(String),
    #[error("{variable}: probability {p} outside [0,1]")]
    InvalidProbability { variable: String, p: f64 },
    #[error("{variable}: empty choices")]
    EmptyChoices { variable: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Builtin {
    UniformChoice,
    BernoulliTrial,
    RandomFloat,
}

impl Builtin {
    fn from_name(name: &str) -> Option<Self> {
        match name {
            "uniformChoice" => Some(Builtin::UniformChoice),
            "bernoulliTrial" => Some(Builtin::BernoulliTrial),
            "randomFloat" => Some(Builtin::RandomFloat),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Builtin::UniformChoice => "uniformChoice",
            Builtin::BernoulliTrial => "bernoulliTrial",
            Builtin::RandomFloat => "randomFloat",
        }
    }

    fn keywords(self) -> &'static [&'static str] {
        match self {
            Builtin::UniformChoice => &["choices", "unit"],
            Builtin::BernoulliTrial => &["p", "unit"],
            Builtin::RandomFloat => &["min", "max", "unit"],
        }
    }
}

impl fmt::Display for Builtin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Number(f64),
    List(Vec<f64>),
    Variable(String),
    Unit(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Call {
    pub builtin: Builtin,
    pub args: Vec<(String, Value)>,
}

impl Call {
    pub fn arg(&self, keyword: &str) -> Option<&Value> {
        self.args.iter().find(|(k, _)| k == keyword).map(|(_, v)| v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Statement {
    pub variable: String,
    pub call: Call,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    pub statements: Vec<Statement>,
}

impl Program {
    /// Unit names referenced by any statement, in order of first use.
    pub fn units(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for s in &self.statements {
            for (_, v) in &s.call.args {
                if let Value::Unit(u) = v {
                    if seen.insert(u.as_str()) {
                        out.push(u.as_str());
                    }
                }
            }
        }
        out
    }

    /// Assigned variable names in order of first assignment.
    pub fn variables(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.statements.iter().map(|s| s.variable.as_str()).filter(|v| seen.insert(*v)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(f64),
    Punct(char),
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(source: &str) -> Result<Vec<Token>, DslError> {
    let mut tokens = Vec::new();
    for (line_idx, line) in source.lines().enumerate() {
        let chars: Vec<char> = line.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let (line, col) = (line_idx + 1, i + 1);
            if c == '#' {
                break;
            } else if c.is_whitespace() {
                i += 1;
            } else if c.is_ascii_alphabetic() || c == '_' {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                tokens.push(Token { tok: Tok::Ident(chars[start..i].iter().collect()), line, col });
            } else if c.is_ascii_digit() || c == '.' || c == '-' || c == '+' {
                let start = i;
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
                let text: String = chars[start..i].iter().collect();
                let value = text
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| DslError::Syntax { line, col, msg: format!("bad number {text:?}") })?;
                tokens.push(Token { tok: Tok::Number(value), line, col });
            } else if "=(),;[]".contains(c) {
                tokens.push(Token { tok: Tok::Punct(c), line, col });
                i += 1;
            } else {
                return Err(DslError::Syntax { line, col, msg: format!("unexpected character {c:?}") });
            }
        }
    }
    Ok(tokens)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    end: (usize, usize),
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn here(&self) -> (usize, usize) {
        self.peek().map_or(self.end, |t| (t.line, t.col))
    }

    fn error(&self, msg: impl Into<String>) -> DslError {
        let (line, col) = self.here();
        DslError::Syntax { line, col, msg: msg.into() }
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn punct(&mut self, c: char) -> Result<(), DslError> {
        match self.peek() {
            Some(Token { tok: Tok::Punct(p), .. }) if *p == c => {
                self.pos += 1;
                Ok(())
            }
            Some(t) => Err(self.error(format!("expected {c:?}, found {}", describe(&t.tok)))),
            None => Err(self.error(format!("expected {c:?}, found end of input"))),
        }
    }

    fn ident(&mut self, what: &str) -> Result<(String, usize, usize), DslError> {
        match self.next() {
            Some(Token { tok: Tok::Ident(s), line, col }) => Ok((s, line, col)),
            Some(t) => {
                self.pos -= 1;
                Err(self.error(format!("expected {what}, found {}", describe(&t.tok))))
            }
            None => Err(self.error(format!("expected {what}, found end of input"))),
        }
    }

    fn at_punct(&self, c: char) -> bool {
        matches!(self.peek(), Some(Token { tok: Tok::Punct(p), .. }) if *p == c)
    }
}

fn describe(tok: &Tok) -> String {
    match tok {
        Tok::Ident(s) => format!("identifier {s:?}"),
        Tok::Number(v) => format!("number {v}"),
        Tok::Punct(c) => format!("{c:?}"),
    }
}

/// Parses a program, checking builtins, keywords and variable definitions.
pub fn parse(source: &str) -> Result<Program, DslError> {
    let lines = source.lines().count().max(1);
    let mut p = Parser { tokens: lex(source)?, pos: 0, end: (lines, source.lines().last().map_or(1, |l| l.len() + 1)) };
    let mut defined: HashSet<String> = HashSet::new();
    let mut statements = Vec::new();
    while p.peek().is_some() {
        let (variable, line, _) = p.ident("variable name")?;
        p.punct('=')?;
        let (name, bline, bcol) = p.ident("builtin name")?;
        let builtin =
            Builtin::from_name(&name).ok_or(DslError::UnknownBuiltin { name: name.clone(), line: bline, col: bcol })?;
        p.punct('(')?;
        let mut args: Vec<(String, Value)> = Vec::new();
        while !p.at_punct(')') {
            if !args.is_empty() {
                p.punct(',')?;
            }
            let (keyword, kline, kcol) = p.ident("keyword")?;
            if !builtin.keywords().contains(&keyword.as_str()) {
                return Err(DslError::UnexpectedKeyword { builtin, keyword, line: kline, col: kcol });
            }
            if args.iter().any(|(k, _)| *k == keyword) {
                return Err(DslError::Syntax { line: kline, col: kcol, msg: format!("repeated keyword {keyword:?}") });
            }
            p.punct('=')?;
            let value = parse_value(&mut p, &keyword, &defined)?;
            args.push((keyword, value));
        }
        p.punct(')')?;
        p.punct(';')?;
        if let Some(missing) = builtin.keywords().iter().find(|k| !args.iter().any(|(a, _)| a == *k)) {
            return Err(DslError::MissingKeyword { builtin, keyword: missing, line: bline, col: bcol });
        }
        defined.insert(variable.clone());
        statements.push(Statement { variable, call: Call { builtin, args }, line });
    }
    Ok(Program { statements })
}

fn parse_value(p: &mut Parser, keyword: &str, defined: &HashSet<String>) -> Result<Value, DslError> {
    let (line, col) = p.here();
    let bad = |expected| DslError::BadArgument { keyword: keyword.to_string(), expected, line, col };
    let value = match p.next() {
        Some(Token { tok: Tok::Number(v), .. }) => Value::Number(v),
        Some(Token { tok: Tok::Ident(name), .. }) if keyword == "unit" => Value::Unit(name),
        Some(Token { tok: Tok::Ident(name), .. }) => {
            if !defined.contains(&name) {
                return Err(DslError::UndefinedVariable { name, line, col });
            }
            Value::Variable(name)
        }
        Some(Token { tok: Tok::Punct('['), .. }) => {
            let mut items = Vec::new();
            while !p.at_punct(']') {
                if !items.is_empty() {
                    p.punct(',')?;
                }
                match p.next() {
                    Some(Token { tok: Tok::Number(v), .. }) => items.push(v),
                    _ => {
                        p.pos -= 1;
                        return Err(p.error("expected a number in list"));
                    }
                }
            }
            p.punct(']')?;
            Value::List(items)
        }
        _ => {
            p.pos -= 1;
            return Err(p.error(format!("expected a value for {keyword:?}")));
        }
    };
    match (keyword, &value) {
        ("unit", Value::Unit(_)) => Ok(value),
        ("unit", _) => Err(bad("a unit name")),
        ("choices", Value::List(_)) => Ok(value),
        ("choices", _) => Err(bad("a list of numbers")),
        (_, Value::Number(_) | Value::Variable(_)) => Ok(value),
        _ => Err(bad("a number or variable")),
    }
}

/// Values assigned by one evaluation, in order of first assignment.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Evaluation {
    values: Vec<(String, f64)>,
}

impl Evaluation {
    pub fn get(&self, variable: &str) -> Option<f64> {
        self.values.iter().find(|(v, _)| v == variable).map(|(_, x)| *x)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.values.iter().map(|(v, x)| (v.as_str(), *x))
    }

    fn set(&mut self, variable: &str, value: f64) {
        match self.values.iter_mut().find(|(v, _)| v == variable) {
            Some(slot) => slot.1 = value,
            None => self.values.push((variable.to_string(), value)),
        }
    }
}

/// Evaluates `program` for one set of unit bindings. Pure: the result depends
/// only on the arguments.
pub fn evaluate(program: &Program, experiment: &str, units: &HashMap<String, String>) -> Result<Evaluation, DslError> {
    let mut out = Evaluation::default();
    for stmt in &program.statements {
        let call = &stmt.call;
        let scalar = |key: &str| -> f64 {
            match call.arg(key) {
                Some(Value::Number(v)) => *v,
                Some(Value::Variable(name)) => out.get(name).expect("parser checked definitions"),
                _ => unreachable!("parser checked argument kinds"),
            }
        };
        let Some(Value::Unit(unit_name)) = call.arg("unit") else { unreachable!("parser checked unit") };
        let unit = units.get(unit_name).ok_or_else(|| DslError::UnboundUnit(unit_name.clone()))?;
        let u = SaltedHasher::new(&format!("{experiment}.{}", stmt.variable)).uniform(unit);
        let value = match call.builtin {
            Builtin::UniformChoice => {
                let Some(Value::List(choices)) = call.arg("choices") else { unreachable!() };
                if choices.is_empty() {
                    return Err(DslError::EmptyChoices { variable: stmt.variable.clone() });
                }
                choices[((u * choices.len() as f64) as usize).min(choices.len() - 1)]
            }
            Builtin::BernoulliTrial => {
                let p = scalar("p");
                if !(0.0..=1.0).contains(&p) {
                    return Err(DslError::InvalidProbability { variable: stmt.variable.clone(), p });
                }
                f64::from(u8::from(u < p))
            }
            Builtin::RandomFloat => {
                let (lo, hi) = (scalar("min"), scalar("max"));
                lo + u * (hi - lo)
            }
        };
        out.set(&stmt.variable, value);
    }
    Ok(out)
}

/// Shortest decimal form of a numeric unit id, the canonical string that
/// gets hashed.
pub fn unit_key(value: f64) -> String {
    if value.fract() == 0.0 && value.abs() < 1e15 {
        format!("{}", value as i64)
    } else {
        format!("{value}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hashing::hash_uniform;

    pub(crate) const LISTING: &str = "\
# i.i.d. random assignment
smoking_program = uniformChoice(choices=[0,1], unit=subject_id);

# block random assignment
smoking_program = uniformChoice(choices=[0,1], unit=subject_group_id);

# hierarchical block random assignment
smoking_program_prob = randomFloat(min=0, max=1, unit=subject_group_id);
smoking_program = bernoulliTrial(p=smoking_program_prob, unit=subject_id);
";

    fn units(pairs: &[(&str, &str)]) -> HashMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn single_statement() {
        let p = parse("smoking_program = uniformChoice(choices=[0,1], unit=subject_id);").unwrap();
        assert_eq!(p.statements.len(), 1);
        assert_eq!(p.statements[0].call.builtin, Builtin::UniformChoice);
        assert_eq!(p.statements[0].call.arg("choices"), Some(&Value::List(vec![0.0, 1.0])));
        assert_eq!(p.units(), vec!["subject_id"]);
    }

    #[test]
    fn full_listing_parses() {
        let p = parse(LISTING).unwrap();
        assert_eq!(p.statements.len(), 4);
        assert_eq!(p.variables(), vec!["smoking_program", "smoking_program_prob"]);
        assert_eq!(p.units(), vec!["subject_id", "subject_group_id"]);
    }

    #[test]
    fn whitespace_insensitive() {
        let a = parse("x=bernoulliTrial(p=0.5,unit=u);").unwrap();
        let b = parse("x =\n  bernoulliTrial( p = 0.5 ,\n unit = u ) ;  # trailing").unwrap();
        assert_eq!(a.statements[0].call, b.statements[0].call);
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(parse("x = mystery(unit=u);"), Err(DslError::UnknownBuiltin { line: 1, col: 5, .. })));
        assert!(matches!(parse("x = bernoulliTrial(p=0.5);"), Err(DslError::MissingKeyword { keyword: "unit", .. })));
        assert!(matches!(
            parse("x = bernoulliTrial(p=q, unit=u);"),
            Err(DslError::UndefinedVariable { ref name, .. }) if name == "q"
        ));
        assert!(matches!(parse("x = bernoulliTrial(p=0.5, unit=u)"), Err(DslError::Syntax { .. })));
        assert!(matches!(
            parse("x = randomFloat(min=0, max=1, unit=u);\ny = bernoulliTrial(p=0.5 unit=u);"),
            Err(DslError::Syntax { line: 2, col: 26, .. })
        ));
        assert!(matches!(parse("x = bernoulliTrial(p=0.5, unit=u, q=1);"), Err(DslError::UnexpectedKeyword { .. })));
        assert!(matches!(parse("x = bernoulliTrial(p=0.5, unit=3);"), Err(DslError::BadArgument { .. })));
        assert!(matches!(parse("x = uniformChoice(choices=1, unit=u);"), Err(DslError::BadArgument { .. })));
        assert!(matches!(parse("x = bernoulliTrial(p=0.5, p=0.2, unit=u);"), Err(DslError::Syntax { .. })));
        assert!(matches!(parse("x = bernoulliTrial(p=0.5, unit=u); $"), Err(DslError::Syntax { .. })));
    }

    #[test]
    fn self_reference_is_undefined() {
        assert!(matches!(parse("p = randomFloat(min=0, max=p, unit=u);"), Err(DslError::UndefinedVariable { .. })));
    }

    #[test]
    fn evaluation_follows_hash_definitions() {
        let p = parse(LISTING).unwrap();
        let u = units(&[("subject_id", "17"), ("subject_group_id", "3")]);
        let e = evaluate(&p, "smoke", &u).unwrap();
        let prob = hash_uniform("smoke.smoking_program_prob", "3");
        assert_eq!(e.get("smoking_program_prob"), Some(prob));
        let z = f64::from(u8::from(hash_uniform("smoke.smoking_program", "17") < prob));
        assert_eq!(e.get("smoking_program"), Some(z));
        assert_eq!(e, evaluate(&p, "smoke", &u).unwrap());
    }

    #[test]
    fn uniform_choice_indexing() {
        let p = parse("arm = uniformChoice(choices=[10, 20, 30], unit=id);").unwrap();
        for id in 0..50 {
            let u = units(&[("id", &id.to_string())]);
            let got = evaluate(&p, "e", &u).unwrap().get("arm").unwrap();
            let h = hash_uniform("e.arm", &id.to_string());
            assert_eq!(got, [10.0, 20.0, 30.0][(h * 3.0) as usize]);
        }
    }

    #[test]
    fn evaluation_errors() {
        let p = parse("x = bernoulliTrial(p=0.0, unit=subject_id);").unwrap();
        assert!(matches!(evaluate(&p, "e", &units(&[])), Err(DslError::UnboundUnit(_))));
        for id in 0..100 {
            assert_eq!(evaluate(&p, "e", &units(&[("subject_id", &id.to_string())])).unwrap().get("x"), Some(0.0));
        }
        let bad = parse("q = randomFloat(min=0, max=2, unit=u);\nx = bernoulliTrial(p=q, unit=u);").unwrap();
        let hits = (0..40)
            .filter(|id| matches!(evaluate(&bad, "e", &units(&[("u", &id.to_string())])), Err(DslError::InvalidProbability { .. })))
            .count();
        assert!(hits > 0);
        let empty = parse("x = uniformChoice(choices=[], unit=u);").unwrap();
        assert!(matches!(evaluate(&empty, "e", &units(&[("u", "1")])), Err(DslError::EmptyChoices { .. })));
    }

    #[test]
    fn numeric_unit_keys() {
        assert_eq!(unit_key(42.0), "42");
        assert_eq!(unit_key(-3.0), "-3");
        assert_eq!(unit_key(0.25), "0.25");
    }

    #[test]
    fn distinct_variables_are_independent() {
        let p = parse("a = randomFloat(min=0, max=1, unit=id);\nb = randomFloat(min=0, max=1, unit=id);").unwrap();
        let n = 100_000;
        let (mut xs, mut ys) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for id in 0..n {
            let e = evaluate(&p, "ind", &units(&[("id", &id.to_string())])).unwrap();
            xs.push(e.get("a").unwrap());
            ys.push(e.get("b").unwrap());
        }
        let r = crate::test_util::pearson(&xs, &ys);
        assert!(r.abs() < 0.01, "{r}");
    }

    #[test]
    fn choice_and_trial_share_marginals() {
        let p = parse("c = uniformChoice(choices=[0,1], unit=id);\nt = bernoulliTrial(p=0.5, unit=id);").unwrap();
        let n = 100_000;
        let (mut c, mut t, mut same) = (0.0, 0.0, 0usize);
        for id in 0..n {
            let e = evaluate(&p, "m", &units(&[("id", &id.to_string())])).unwrap();
            c += e.get("c").unwrap();
            t += e.get("t").unwrap();
            same += usize::from(e.get("c") == e.get("t"));
        }
        let se = (0.25 / n as f64).sqrt();
        assert!((c / n as f64 - 0.5).abs() < 4.0 * se);
        assert!((t / n as f64 - 0.5).abs() < 4.0 * se);
        assert!(same < n);
    }
}
