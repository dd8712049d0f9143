//! Soft-logic rule base: conditions over named observation features mapped
//! to action-preference weights in [0,1]. Rules come from hand-written rule
//! files or from decision trees fit on trajectory dumps.

pub mod parse;
pub mod tree;

use std::fmt::Write as _;

use crate::error::{Error, Result};

pub use parse::parse_rules;
pub use tree::{extract_rules, fit_tree, tree_leaves, Dataset, TreeConfig, TreeNode};

/// The names a rule file is validated against: the environment's feature
/// names and action names.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    pub features: Vec<String>,
    pub actions: Vec<String>,
}

impl Vocabulary {
    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f == name)
    }

    /// `available(x)` accepts an exact action name or a prefix group: the
    /// argument `attack` covers `attack_0`, `attack_1`, ...
    pub fn action_group(&self, name: &str) -> Vec<usize> {
        let prefix = format!("{name}_");
        self.actions
            .iter()
            .enumerate()
            .filter(|(_, a)| a.as_str() == name || a.starts_with(&prefix))
            .map(|(i, _)| i)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cmp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
}

impl Cmp {
    fn holds(&self, lhs: f64, rhs: f64) -> bool {
        match self {
            Cmp::Lt => lhs < rhs,
            Cmp::Le => lhs <= rhs,
            Cmp::Gt => lhs > rhs,
            Cmp::Ge => lhs >= rhs,
            Cmp::Eq => lhs == rhs,
        }
    }

    fn symbol(&self) -> &'static str {
        match self {
            Cmp::Lt => "<",
            Cmp::Le => "<=",
            Cmp::Gt => ">",
            Cmp::Ge => ">=",
            Cmp::Eq => "=",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Condition {
    /// `feature cmp number`, with the feature index resolved at parse time.
    Feature { name: String, index: usize, cmp: Cmp, value: f64 },
    /// `available(action)`: true if any action in the group is available.
    Available { name: String, indices: Vec<usize> },
    Not(Box<Condition>),
    And(Vec<Condition>),
    Or(Vec<Condition>),
}

impl Condition {
    pub fn eval(&self, features: &[f64], avail: &[bool]) -> bool {
        match self {
            Condition::Feature { index, cmp, value, .. } => cmp.holds(features[*index], *value),
            Condition::Available { indices, .. } => indices.iter().any(|&i| avail[i]),
            Condition::Not(inner) => !inner.eval(features, avail),
            Condition::And(parts) => parts.iter().all(|c| c.eval(features, avail)),
            Condition::Or(parts) => parts.iter().any(|c| c.eval(features, avail)),
        }
    }

    fn render(&self, out: &mut String) {
        match self {
            Condition::Feature { name, cmp, value, .. } => {
                write!(out, "{name} {} {value}", cmp.symbol()).unwrap();
            }
            Condition::Available { name, .. } => {
                write!(out, "available({name})").unwrap();
            }
            Condition::Not(inner) => {
                out.push_str("not ");
                if matches!(**inner, Condition::And(_) | Condition::Or(_)) {
                    out.push('(');
                    inner.render(out);
                    out.push(')');
                } else {
                    inner.render(out);
                }
            }
            Condition::And(parts) => {
                for (i, p) in parts.iter().enumerate() {
                    if i > 0 {
                        out.push_str(" and ");
                    }
                    if matches!(p, Condition::Or(_)) {
                        out.push('(');
                        p.render(out);
                        out.push(')');
                    } else {
                        p.render(out);
                    }
                }
            }
            Condition::Or(parts) => {
                for (i, p) in parts.iter().enumerate() {
                    if i > 0 {
                        out.push_str(" or ");
                    }
                    p.render(out);
                }
            }
        }
    }
}

/// One soft rule: a condition plus action-preference weights in [0,1].
#[derive(Debug, Clone)]
pub struct SoftRule {
    pub name: String,
    pub priority: i64,
    pub condition: Condition,
    /// (action index, weight) pairs; weights lie in [0,1].
    pub preference: Vec<(usize, f64)>,
    /// Records backing the rule when it came from extraction; 0 for
    /// hand-written rules.
    pub support: u64,
}

/// An immutable ordered rule collection. Higher priority is checked first;
/// ties keep file order.
#[derive(Debug, Clone)]
pub struct RuleSet {
    rules: Vec<SoftRule>,
    n_features: usize,
    n_actions: usize,
}

#[derive(Debug, Clone)]
pub struct RuleMatch {
    pub rule_index: usize,
    /// Availability-masked preference renormalized to sum 1, over the full
    /// action vocabulary.
    pub distribution: Vec<f64>,
}

impl RuleSet {
    pub fn new(mut rules: Vec<SoftRule>, vocab: &Vocabulary) -> Result<Self> {
        for rule in &rules {
            for &(action, weight) in &rule.preference {
                if action >= vocab.actions.len() {
                    return Err(Error::Config(format!(
                        "rule '{}' prefers action index {action} outside the vocabulary",
                        rule.name
                    )));
                }
                if !(0.0..=1.0).contains(&weight) {
                    return Err(Error::Config(format!(
                        "rule '{}' has weight {weight} outside [0,1]",
                        rule.name
                    )));
                }
            }
            validate_condition(&rule.condition, vocab, &rule.name)?;
        }
        // stable: equal priorities keep their file order
        rules.sort_by_key(|r| std::cmp::Reverse(r.priority));
        Ok(RuleSet {
            rules,
            n_features: vocab.features.len(),
            n_actions: vocab.actions.len(),
        })
    }

    pub fn empty(vocab: &Vocabulary) -> Self {
        RuleSet {
            rules: Vec::new(),
            n_features: vocab.features.len(),
            n_actions: vocab.actions.len(),
        }
    }

    pub fn rules(&self) -> &[SoftRule] {
        &self.rules
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    /// First matching rule wins. Its preference is masked by availability
    /// and renormalized; when no rule matches, or every preferred action of
    /// the matching rule is unavailable, there is no preference.
    pub fn evaluate(&self, features: &[f64], avail: &[bool]) -> Result<Option<RuleMatch>> {
        if features.len() != self.n_features {
            return Err(Error::Config(format!(
                "expected {} features, got {}",
                self.n_features,
                features.len()
            )));
        }
        if avail.len() != self.n_actions {
            return Err(Error::Config(format!(
                "expected {} availability entries, got {}",
                self.n_actions,
                avail.len()
            )));
        }
        for (idx, rule) in self.rules.iter().enumerate() {
            if !rule.condition.eval(features, avail) {
                continue;
            }
            let mut dist = vec![0.0; self.n_actions];
            let mut sum = 0.0;
            for &(action, weight) in &rule.preference {
                if avail[action] {
                    dist[action] = weight;
                    sum += weight;
                }
            }
            if sum <= 0.0 {
                return Ok(None);
            }
            for v in &mut dist {
                *v /= sum;
            }
            return Ok(Some(RuleMatch { rule_index: idx, distribution: dist }));
        }
        Ok(None)
    }

    /// Render to the rule-file grammar; parse_rules reads this back.
    pub fn render(&self, vocab: &Vocabulary) -> String {
        let mut out = String::new();
        for rule in &self.rules {
            writeln!(out, "rule \"{}\" priority {}", rule.name, rule.priority).unwrap();
            if rule.support > 0 {
                writeln!(out, "# support {}", rule.support).unwrap();
            }
            out.push_str("when ");
            rule.condition.render(&mut out);
            out.push('\n');
            out.push_str("prefer");
            for &(action, weight) in &rule.preference {
                write!(out, " {}:{}", vocab.actions[action], weight).unwrap();
            }
            out.push_str("\n\n");
        }
        out
    }
}

fn validate_condition(cond: &Condition, vocab: &Vocabulary, rule: &str) -> Result<()> {
    match cond {
        Condition::Feature { name, index, .. } => {
            if vocab.feature_index(name) != Some(*index) {
                return Err(Error::Config(format!(
                    "rule '{rule}' references unknown feature '{name}'"
                )));
            }
            Ok(())
        }
        Condition::Available { name, indices } => {
            let want = vocab.action_group(name);
            if want.is_empty() || want != *indices {
                return Err(Error::Config(format!(
                    "rule '{rule}' references unknown action '{name}' in available()"
                )));
            }
            Ok(())
        }
        Condition::Not(inner) => validate_condition(inner, vocab, rule),
        Condition::And(parts) | Condition::Or(parts) => {
            parts.iter().try_for_each(|c| validate_condition(c, vocab, rule))
        }
    }
}
