//! Line-oriented mission spec parser. A spec is a sequence of sections:
//! `[BINDINGS]` declares propositions with their sensing/behavior
//! bindings; the six GR(1) sections (`[ENV_INIT]`, `[SYS_INIT]`,
//! `[ENV_TRANS]`, `[SYS_TRANS]`, `[ENV_LIVE]`, `[SYS_LIVE]`) hold one
//! formula per line. `#` starts a comment.
//!
//! Formula surface syntax: `! & | -> <->`, `next(p)`, `true`, `false`,
//! parentheses, plus the sugar `always F` (transition sections),
//! `always eventually F` (liveness sections) and `if F then G` (an
//! implication).

use super::{Atom, Binding, EnvBinding, Formula, MissionSpec, Proposition, SysBinding, TargetRef};
use crate::envchar::EnvironmentType;
use crate::Color;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ParseError {
    #[error("line {line}, column {col}: expected {expected}, found `{found}`")]
    Syntax { line: usize, col: usize, expected: String, found: String },
    #[error("line {line}: unbound proposition `{name}`")]
    UnboundProposition { line: usize, name: String },
    #[error("line {line}: duplicate proposition `{name}`")]
    DuplicateProposition { line: usize, name: String },
    #[error("invalid spec: {0}")]
    Structural(String),
}

impl ParseError {
    pub(super) fn structural(msg: &str) -> ParseError {
        ParseError::Structural(msg.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    LParen,
    RParen,
    Comma,
    Eq,
    Not,
    And,
    Or,
    Arrow,
    DArrow,
}

impl std::fmt::Display for Tok {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Tok::Ident(s) => s.as_str(),
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::Comma => ",",
            Tok::Eq => "=",
            Tok::Not => "!",
            Tok::And => "&",
            Tok::Or => "|",
            Tok::Arrow => "->",
            Tok::DArrow => "<->",
        };
        f.write_str(s)
    }
}

fn tokenize(line: &str, lineno: usize) -> Result<Vec<(Tok, usize)>, ParseError> {
    let mut out = Vec::new();
    let bytes: Vec<char> = line.chars().collect();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let col = i + 1;
        match c {
            ' ' | '\t' => i += 1,
            '#' => break,
            '(' => {
                out.push((Tok::LParen, col));
                i += 1;
            }
            ')' => {
                out.push((Tok::RParen, col));
                i += 1;
            }
            ',' => {
                out.push((Tok::Comma, col));
                i += 1;
            }
            '=' => {
                out.push((Tok::Eq, col));
                i += 1;
            }
            '!' => {
                out.push((Tok::Not, col));
                i += 1;
            }
            '&' => {
                out.push((Tok::And, col));
                i += 1;
            }
            '|' => {
                out.push((Tok::Or, col));
                i += 1;
            }
            '-' if bytes.get(i + 1) == Some(&'>') => {
                out.push((Tok::Arrow, col));
                i += 2;
            }
            '<' if bytes.get(i + 1) == Some(&'-') && bytes.get(i + 2) == Some(&'>') => {
                out.push((Tok::DArrow, col));
                i += 3;
            }
            c if c.is_alphanumeric() || c == '_' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_alphanumeric() || bytes[i] == '_') {
                    i += 1;
                }
                out.push((Tok::Ident(bytes[start..i].iter().collect()), col));
            }
            other => {
                return Err(ParseError::Syntax {
                    line: lineno,
                    col,
                    expected: "a token".into(),
                    found: other.to_string(),
                })
            }
        }
    }
    Ok(out)
}

struct FormulaParser<'a> {
    toks: &'a [(Tok, usize)],
    pos: usize,
    line: usize,
    env: &'a [Proposition],
    sys: &'a [Proposition],
}

impl<'a> FormulaParser<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn err(&self, expected: &str) -> ParseError {
        let (found, col) = match self.toks.get(self.pos) {
            Some((t, c)) => (t.to_string(), *c),
            None => ("end of line".to_string(), self.toks.last().map(|(_, c)| c + 1).unwrap_or(1)),
        };
        ParseError::Syntax { line: self.line, col, expected: expected.into(), found }
    }

    fn eat(&mut self, t: &Tok, expected: &str) -> Result<(), ParseError> {
        if self.peek() == Some(t) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(expected))
        }
    }

    fn ident_is(&self, s: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(i)) if i == s)
    }

    fn formula(&mut self) -> Result<Formula, ParseError> {
        if self.ident_is("if") {
            self.pos += 1;
            let cond = self.iff()?;
            if !self.ident_is("then") {
                return Err(self.err("`then`"));
            }
            self.pos += 1;
            let cons = self.formula()?;
            return Ok(Formula::Implies(Box::new(cond), Box::new(cons)));
        }
        self.iff()
    }

    fn iff(&mut self) -> Result<Formula, ParseError> {
        let mut f = self.implies()?;
        while self.peek() == Some(&Tok::DArrow) {
            self.pos += 1;
            let r = self.implies()?;
            f = Formula::Iff(Box::new(f), Box::new(r));
        }
        Ok(f)
    }

    fn implies(&mut self) -> Result<Formula, ParseError> {
        let l = self.or()?;
        if self.peek() == Some(&Tok::Arrow) {
            self.pos += 1;
            let r = self.implies()?;
            Ok(Formula::Implies(Box::new(l), Box::new(r)))
        } else {
            Ok(l)
        }
    }

    fn or(&mut self) -> Result<Formula, ParseError> {
        let mut f = self.and()?;
        while self.peek() == Some(&Tok::Or) {
            self.pos += 1;
            let r = self.and()?;
            f = Formula::Or(Box::new(f), Box::new(r));
        }
        Ok(f)
    }

    fn and(&mut self) -> Result<Formula, ParseError> {
        let mut f = self.unary()?;
        while self.peek() == Some(&Tok::And) {
            self.pos += 1;
            let r = self.unary()?;
            f = Formula::And(Box::new(f), Box::new(r));
        }
        Ok(f)
    }

    fn unary(&mut self) -> Result<Formula, ParseError> {
        match self.peek() {
            Some(Tok::Not) => {
                self.pos += 1;
                Ok(Formula::Not(Box::new(self.unary()?)))
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let f = self.formula()?;
                self.eat(&Tok::RParen, "`)`")?;
                Ok(f)
            }
            Some(Tok::Ident(name)) => {
                let name = name.clone();
                self.pos += 1;
                match name.as_str() {
                    "true" => Ok(Formula::Const(true)),
                    "false" => Ok(Formula::Const(false)),
                    "next" => {
                        self.eat(&Tok::LParen, "`(` after next")?;
                        let inner = self.formula()?;
                        self.eat(&Tok::RParen, "`)`")?;
                        Ok(prime(inner))
                    }
                    _ => {
                        let atom = if let Some(i) = self.env.iter().position(|p| p.name == name) {
                            Atom::Env(i)
                        } else if let Some(i) = self.sys.iter().position(|p| p.name == name) {
                            Atom::Sys(i)
                        } else {
                            return Err(ParseError::UnboundProposition { line: self.line, name });
                        };
                        Ok(Formula::Prop(atom, false))
                    }
                }
            }
            _ => Err(self.err("a formula")),
        }
    }
}

/// Mark every atom below `f` as next-step.
fn prime(f: Formula) -> Formula {
    match f {
        Formula::Const(b) => Formula::Const(b),
        Formula::Prop(a, _) => Formula::Prop(a, true),
        Formula::Not(x) => Formula::Not(Box::new(prime(*x))),
        Formula::And(a, b) => Formula::And(Box::new(prime(*a)), Box::new(prime(*b))),
        Formula::Or(a, b) => Formula::Or(Box::new(prime(*a)), Box::new(prime(*b))),
        Formula::Implies(a, b) => Formula::Implies(Box::new(prime(*a)), Box::new(prime(*b))),
        Formula::Iff(a, b) => Formula::Iff(Box::new(prime(*a)), Box::new(prime(*b))),
    }
}

fn parse_binding(
    toks: &[(Tok, usize)],
    line: usize,
) -> Result<(bool, String, Binding), ParseError> {
    let mut p = 0;
    let side_env = match toks.first() {
        Some((Tok::Ident(s), _)) if s == "env" => true,
        Some((Tok::Ident(s), _)) if s == "sys" => false,
        _ => {
            return Err(ParseError::Syntax {
                line,
                col: 1,
                expected: "`env` or `sys`".into(),
                found: toks.first().map(|(t, _)| t.to_string()).unwrap_or_default(),
            })
        }
    };
    p += 1;
    let name = match toks.get(p) {
        Some((Tok::Ident(s), _)) => s.clone(),
        other => {
            return Err(ParseError::Syntax {
                line,
                col: other.map(|(_, c)| *c).unwrap_or(1),
                expected: "proposition name".into(),
                found: other.map(|(t, _)| t.to_string()).unwrap_or("end of line".into()),
            })
        }
    };
    p += 1;
    let syntax = |expected: &str, at: usize| ParseError::Syntax {
        line,
        col: toks.get(at).map(|(_, c)| *c).unwrap_or(99),
        expected: expected.into(),
        found: toks.get(at).map(|(t, _)| t.to_string()).unwrap_or("end of line".into()),
    };
    if toks.get(p).map(|(t, _)| t) != Some(&Tok::Eq) {
        return Err(syntax("`=`", p));
    }
    p += 1;
    let func = match toks.get(p) {
        Some((Tok::Ident(s), _)) => s.clone(),
        _ => return Err(syntax("binding function", p)),
    };
    p += 1;
    let mut args: Vec<String> = Vec::new();
    if toks.get(p).map(|(t, _)| t) == Some(&Tok::LParen) {
        p += 1;
        while toks.get(p).map(|(t, _)| t) != Some(&Tok::RParen) {
            match toks.get(p) {
                Some((Tok::Ident(s), _)) => {
                    args.push(s.clone());
                    p += 1;
                    if toks.get(p).map(|(t, _)| t) == Some(&Tok::Comma) {
                        p += 1;
                    }
                }
                _ => return Err(syntax("argument or `)`", p)),
            }
        }
        p += 1;
    }
    if p != toks.len() {
        return Err(syntax("end of line", p));
    }
    let argc = |n: usize| -> Result<(), ParseError> {
        if args.len() == n {
            Ok(())
        } else {
            Err(syntax(&format!("{n} argument(s) for {func}"), toks.len().saturating_sub(1)))
        }
    };
    let env_type = |s: &str| -> Result<EnvironmentType, ParseError> {
        match s {
            "free" => Ok(EnvironmentType::Free),
            "tunnel" => Ok(EnvironmentType::Tunnel),
            "high" => Ok(EnvironmentType::High),
            "stairs" => Ok(EnvironmentType::Stairs),
            _ => Err(syntax("an environment type (free/tunnel/high/stairs)", p - 2)),
        }
    };
    let binding = if side_env {
        let b = match func.as_str() {
            "object_seen" => {
                argc(1)?;
                EnvBinding::ObjectSeen(Color::new(&args[0]))
            }
            "env_type_is" => {
                argc(1)?;
                EnvBinding::EnvTypeIs(env_type(&args[0])?)
            }
            "carrying" => {
                argc(0)?;
                EnvBinding::Carrying
            }
            "pending" => {
                if args.is_empty() {
                    return Err(syntax("at least one color for pending", p - 1));
                }
                EnvBinding::Pending(args.iter().map(|a| Color::new(a)).collect())
            }
            "explored" => {
                argc(0)?;
                EnvBinding::Explored
            }
            "elevated" => {
                argc(0)?;
                EnvBinding::Elevated
            }
            "config_can" => {
                argc(1)?;
                EnvBinding::ConfigCan(args[0].clone())
            }
            _ => return Err(syntax("an environment binding function", 3)),
        };
        Binding::Env(b)
    } else {
        let b = match func.as_str() {
            "explore" => {
                argc(0)?;
                SysBinding::Explore
            }
            "goto" => {
                argc(1)?;
                SysBinding::Goto(Color::new(&args[0]))
            }
            "behavior" => match args.len() {
                1 => SysBinding::Behavior { property: args[0].clone(), target: None },
                2 => {
                    let target = if args[1] == "pending" {
                        TargetRef::Pending
                    } else {
                        TargetRef::Color(Color::new(&args[1]))
                    };
                    SysBinding::Behavior { property: args[0].clone(), target: Some(target) }
                }
                _ => return Err(syntax("behavior(property[, target])", 3)),
            },
            "complete" => {
                argc(0)?;
                SysBinding::Complete
            }
            _ => return Err(syntax("a system binding function", 3)),
        };
        Binding::Sys(b)
    };
    Ok((side_env, name, binding))
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Section {
    Bindings,
    EnvInit,
    SysInit,
    EnvTrans,
    SysTrans,
    EnvLive,
    SysLive,
}

pub fn parse_spec(text: &str) -> Result<MissionSpec, ParseError> {
    let mut spec = MissionSpec {
        env_props: vec![],
        sys_props: vec![],
        env_init: vec![],
        sys_init: vec![],
        env_trans: vec![],
        sys_trans: vec![],
        env_live: vec![],
        sys_live: vec![],
    };
    let mut section: Option<Section> = None;
    // first pass collects bindings so formulas can reference any prop
    let mut formula_lines: Vec<(Section, usize, Vec<(Tok, usize)>)> = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let lineno = ln + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if line.starts_with('[') {
            let name = line.trim_matches(|c| c == '[' || c == ']').trim();
            section = Some(match name {
                "BINDINGS" => Section::Bindings,
                "ENV_INIT" => Section::EnvInit,
                "SYS_INIT" => Section::SysInit,
                "ENV_TRANS" => Section::EnvTrans,
                "SYS_TRANS" => Section::SysTrans,
                "ENV_LIVE" => Section::EnvLive,
                "SYS_LIVE" => Section::SysLive,
                other => {
                    return Err(ParseError::Syntax {
                        line: lineno,
                        col: 1,
                        expected: "a section name".into(),
                        found: other.to_string(),
                    })
                }
            });
            continue;
        }
        let toks = tokenize(line, lineno)?;
        if toks.is_empty() {
            continue;
        }
        match section {
            Some(Section::Bindings) => {
                let (is_env, name, binding) = parse_binding(&toks, lineno)?;
                if spec.env_props.iter().chain(&spec.sys_props).any(|pr| pr.name == name) {
                    return Err(ParseError::DuplicateProposition { line: lineno, name });
                }
                let prop = Proposition { name, binding };
                if is_env {
                    spec.env_props.push(prop);
                } else {
                    spec.sys_props.push(prop);
                }
            }
            Some(s) => formula_lines.push((s, lineno, toks)),
            None => {
                return Err(ParseError::Syntax {
                    line: lineno,
                    col: 1,
                    expected: "a section header".into(),
                    found: line.to_string(),
                })
            }
        }
    }
    for (sect, lineno, toks) in formula_lines {
        let mut p = FormulaParser {
            toks: &toks,
            pos: 0,
            line: lineno,
            env: &spec.env_props,
            sys: &spec.sys_props,
        };
        // surface sugar: `always F` in transition sections,
        // `always eventually F` in liveness sections
        if p.ident_is("always") {
            p.pos += 1;
            if p.ident_is("eventually") {
                p.pos += 1;
            }
        }
        let f = p.formula()?;
        if p.pos != p.toks.len() {
            return Err(p.err("end of line"));
        }
        match sect {
            Section::Bindings => unreachable!(),
            Section::EnvInit => spec.env_init.push(f),
            Section::SysInit => spec.sys_init.push(f),
            Section::EnvTrans => spec.env_trans.push(f),
            Section::SysTrans => spec.sys_trans.push(f),
            Section::EnvLive => spec.env_live.push(f),
            Section::SysLive => spec.sys_live.push(f),
        }
    }
    spec.validate()?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MAILBOX_SPEC: &str = r#"
# deliver an object once the mailbox is found
[BINDINGS]
env mailBox = object_seen(pink)
sys explore = explore()
sys driveToMailBox = goto(pink)
sys drop = behavior(drop)

[ENV_INIT]
!mailBox

[SYS_INIT]
explore & !driveToMailBox & !drop

[SYS_TRANS]
always (if !mailBox then next(explore) & !next(drop))
always (if mailBox then next(driveToMailBox) | next(drop))

[SYS_LIVE]
always eventually (drop | !mailBox)
"#;

    #[test]
    fn mailbox_spec_shape() {
        let spec = parse_spec(MAILBOX_SPEC).unwrap();
        assert_eq!(spec.env_props.len(), 1);
        assert_eq!(spec.sys_props.len(), 3);
        assert_eq!(spec.env_props[0].name, "mailBox");
        assert_eq!(
            spec.env_props[0].binding,
            Binding::Env(EnvBinding::ObjectSeen(Color::new("pink")))
        );
        assert_eq!(spec.sys_trans.len(), 2);
        assert_eq!(spec.sys_live.len(), 1);
    }

    #[test]
    fn empty_guarantees_parse_to_empty_lists() {
        let spec = parse_spec("[BINDINGS]\nsys a = explore()\n[SYS_TRANS]\n").unwrap();
        assert!(spec.sys_trans.is_empty());
        assert!(spec.env_trans.is_empty());
    }

    #[test]
    fn unbound_proposition_named() {
        let err = parse_spec("[BINDINGS]\nsys a = explore()\n[SYS_INIT]\na & ghost\n").unwrap_err();
        assert_eq!(err, ParseError::UnboundProposition { line: 4, name: "ghost".into() });
    }

    #[test]
    fn syntax_error_carries_position() {
        let err = parse_spec("[BINDINGS]\nsys a = explore()\n[SYS_INIT]\na & & a\n").unwrap_err();
        match err {
            ParseError::Syntax { line, col, .. } => {
                assert_eq!(line, 4);
                assert_eq!(col, 5);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn env_init_may_not_mention_sys() {
        let txt = "[BINDINGS]\nenv e = carrying()\nsys a = explore()\n[ENV_INIT]\na\n";
        assert!(matches!(parse_spec(txt), Err(ParseError::Structural(_))));
    }

    #[test]
    fn env_trans_may_not_prime_sys() {
        let txt = "[BINDINGS]\nenv e = carrying()\nsys a = explore()\n[ENV_TRANS]\nalways next(a)\n";
        assert!(matches!(parse_spec(txt), Err(ParseError::Structural(_))));
    }

    #[test]
    fn if_then_lowers_to_implication() {
        let spec = parse_spec(
            "[BINDINGS]\nenv e = carrying()\nsys a = explore()\n[SYS_TRANS]\nalways (if e then next(a))\n",
        )
        .unwrap();
        // e=1 requires a'=1; e=0 allows anything
        let nx = spec.nx_bits();
        assert!(!spec.sys_trans[0].eval(0b1, 0b0, nx));
        assert!(spec.sys_trans[0].eval(0b1, 0b10, nx));
        assert!(spec.sys_trans[0].eval(0b0, 0b0, nx));
    }
}
