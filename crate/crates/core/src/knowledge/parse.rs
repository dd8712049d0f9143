//! Rule-file parser. One rule per block:
//!
//! ```text
//! rule "low_hp_retreat" priority 10
//! when health < 15 or not available(attack)
//! prefer north:0.25 south:0.25 east:0.25 west:0.25
//! ```
//!
//! The `when` clause is an and/or/not expression over `feature cmp number`
//! and `available(action)` atoms; `#` starts a comment line.

use crate::error::{Error, Result};
use crate::knowledge::{Cmp, Condition, RuleSet, SoftRule, Vocabulary};

pub fn parse_rules(text: &str, vocab: &Vocabulary) -> Result<RuleSet> {
    let mut rules = Vec::new();
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .peekable();

    while let Some((lineno, line)) = lines.next() {
        let header = line
            .strip_prefix("rule ")
            .ok_or_else(|| err(lineno, "expected a line starting with 'rule'"))?;
        let (name, priority) = parse_header(header, lineno)?;

        let (when_line, when_text) = lines
            .next()
            .ok_or_else(|| err(lineno, "rule block is missing its 'when' line"))?;
        let when_text = when_text
            .strip_prefix("when ")
            .ok_or_else(|| err(when_line, "expected 'when <condition>'"))?;
        let condition = parse_condition(when_text, when_line, vocab)?;

        let (prefer_line, prefer_text) = lines
            .next()
            .ok_or_else(|| err(when_line, "rule block is missing its 'prefer' line"))?;
        let prefer_text = prefer_text
            .strip_prefix("prefer")
            .ok_or_else(|| err(prefer_line, "expected 'prefer action:weight ...'"))?;
        let preference = parse_preference(prefer_text, prefer_line, vocab)?;

        rules.push(SoftRule { name, priority, condition, preference, support: 0 });
    }

    RuleSet::new(rules, vocab)
}

fn err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

fn parse_header(text: &str, line: usize) -> Result<(String, i64)> {
    let text = text.trim();
    let rest = text
        .strip_prefix('"')
        .ok_or_else(|| err(line, "rule name must be quoted"))?;
    let end = rest
        .find('"')
        .ok_or_else(|| err(line, "unterminated rule name"))?;
    let name = rest[..end].to_string();
    if name.is_empty() {
        return Err(err(line, "rule name is empty"));
    }
    let tail = rest[end + 1..].trim();
    let priority = match tail.strip_prefix("priority") {
        Some(p) => p
            .trim()
            .parse::<i64>()
            .map_err(|_| err(line, format!("bad priority '{}'", p.trim())))?,
        None if tail.is_empty() => 0,
        None => return Err(err(line, format!("unexpected text after rule name: '{tail}'"))),
    };
    Ok((name, priority))
}

fn parse_preference(text: &str, line: usize, vocab: &Vocabulary) -> Result<Vec<(usize, f64)>> {
    let mut prefs = Vec::new();
    for part in text.split_whitespace() {
        let (action, weight) = part
            .split_once(':')
            .ok_or_else(|| err(line, format!("expected action:weight, found '{part}'")))?;
        let idx = vocab
            .actions
            .iter()
            .position(|a| a == action)
            .ok_or_else(|| err(line, format!("unknown action '{action}'")))?;
        let w: f64 = weight
            .parse()
            .map_err(|_| err(line, format!("bad weight '{weight}'")))?;
        if !(0.0..=1.0).contains(&w) {
            return Err(err(line, format!("weight {w} for '{action}' is outside [0,1]")));
        }
        if prefs.iter().any(|&(i, _)| i == idx) {
            return Err(err(line, format!("action '{action}' listed twice")));
        }
        prefs.push((idx, w));
    }
    if prefs.is_empty() {
        return Err(err(line, "prefer clause lists no actions"));
    }
    Ok(prefs)
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Ident(String),
    Number(f64),
    Cmp(Cmp),
    LParen,
    RParen,
    And,
    Or,
    Not,
    Available,
}

fn tokenize(text: &str, line: usize) -> Result<Vec<Token>> {
    let mut tokens = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            ' ' | '\t' => i += 1,
            '(' => {
                tokens.push(Token::LParen);
                i += 1;
            }
            ')' => {
                tokens.push(Token::RParen);
                i += 1;
            }
            '<' => {
                if chars.get(i + 1) == Some(&'=') {
                    tokens.push(Token::Cmp(Cmp::Le));
                    i += 2;
                } else {
                    tokens.push(Token::Cmp(Cmp::Lt));
                    i += 1;
                }
            }
            '>' => {
                if chars.get(i + 1) == Some(&'=') {
                    tokens.push(Token::Cmp(Cmp::Ge));
                    i += 2;
                } else {
                    tokens.push(Token::Cmp(Cmp::Gt));
                    i += 1;
                }
            }
            '=' => {
                tokens.push(Token::Cmp(Cmp::Eq));
                i += 1;
            }
            c if c.is_ascii_digit() || c == '-' || c == '.' => {
                let start = i;
                i += 1;
                while i < chars.len()
                    && (chars[i].is_ascii_digit() || chars[i] == '.' || chars[i] == 'e'
                        || chars[i] == 'E'
                        || (chars[i] == '-' && matches!(chars[i - 1], 'e' | 'E')))
                {
                    i += 1;
                }
                let text: String = chars[start..i].iter().collect();
                let v: f64 = text
                    .parse()
                    .map_err(|_| err(line, format!("bad number '{text}'")))?;
                tokens.push(Token::Number(v));
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                let word: String = chars[start..i].iter().collect();
                tokens.push(match word.as_str() {
                    "and" => Token::And,
                    "or" => Token::Or,
                    "not" => Token::Not,
                    "available" => Token::Available,
                    _ => Token::Ident(word),
                });
            }
            other => return Err(err(line, format!("unexpected character '{other}'"))),
        }
    }
    Ok(tokens)
}

struct CondParser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    line: usize,
    vocab: &'a Vocabulary,
}

fn parse_condition(text: &str, line: usize, vocab: &Vocabulary) -> Result<Condition> {
    let tokens = tokenize(text, line)?;
    let mut p = CondParser { tokens, pos: 0, line, vocab };
    let cond = p.or_expr()?;
    if p.pos != p.tokens.len() {
        return Err(err(line, "trailing tokens after condition"));
    }
    Ok(cond)
}

impl CondParser<'_> {
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

    fn expect(&mut self, want: Token, what: &str) -> Result<()> {
        match self.next() {
            Some(t) if t == want => Ok(()),
            _ => Err(err(self.line, format!("expected {what}"))),
        }
    }

    fn or_expr(&mut self) -> Result<Condition> {
        let mut parts = vec![self.and_expr()?];
        while self.peek() == Some(&Token::Or) {
            self.next();
            parts.push(self.and_expr()?);
        }
        Ok(if parts.len() == 1 { parts.pop().unwrap() } else { Condition::Or(parts) })
    }

    fn and_expr(&mut self) -> Result<Condition> {
        let mut parts = vec![self.unary()?];
        while self.peek() == Some(&Token::And) {
            self.next();
            parts.push(self.unary()?);
        }
        Ok(if parts.len() == 1 { parts.pop().unwrap() } else { Condition::And(parts) })
    }

    fn unary(&mut self) -> Result<Condition> {
        match self.peek() {
            Some(Token::Not) => {
                self.next();
                Ok(Condition::Not(Box::new(self.unary()?)))
            }
            Some(Token::LParen) => {
                self.next();
                let inner = self.or_expr()?;
                self.expect(Token::RParen, "')'")?;
                Ok(inner)
            }
            Some(Token::Available) => {
                self.next();
                self.expect(Token::LParen, "'(' after available")?;
                let name = match self.next() {
                    Some(Token::Ident(n)) => n,
                    _ => return Err(err(self.line, "expected an action name in available()")),
                };
                self.expect(Token::RParen, "')' after available(action")?;
                let indices = self.vocab.action_group(&name);
                if indices.is_empty() {
                    return Err(err(self.line, format!("unknown action '{name}' in available()")));
                }
                Ok(Condition::Available { name, indices })
            }
            Some(Token::Ident(_)) => {
                let name = match self.next() {
                    Some(Token::Ident(n)) => n,
                    _ => unreachable!(),
                };
                let index = self
                    .vocab
                    .feature_index(&name)
                    .ok_or_else(|| err(self.line, format!("unknown feature '{name}'")))?;
                let cmp = match self.next() {
                    Some(Token::Cmp(c)) => c,
                    _ => return Err(err(self.line, format!("expected a comparison after '{name}'"))),
                };
                let value = match self.next() {
                    Some(Token::Number(v)) => v,
                    _ => return Err(err(self.line, "expected a number on the right of the comparison")),
                };
                Ok(Condition::Feature { name, index, cmp, value })
            }
            _ => Err(err(self.line, "expected a condition")),
        }
    }
}
