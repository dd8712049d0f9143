//! CART-style rule extraction: fit a Gini-impurity decision tree to
//! (features, action) records, then turn sufficiently pure, sufficiently
//! supported leaves into soft rules whose preferences are the leaves'
//! empirical action frequencies.



use crate::env::trace::TraceRecord;
use crate::error::{Error, Result};
use crate::knowledge::{Cmp, Condition, RuleSet, SoftRule, Vocabulary};

#[derive(Debug, Clone)]
pub struct TreeConfig {
    pub max_depth: usize,
    pub min_leaf: usize,
    pub min_purity: f64,
    pub min_support: u64,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig { max_depth: 4, min_leaf: 20, min_purity: 0.6, min_support: 50 }
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub action_names: Vec<String>,
    /// (feature vector, action class index)
    pub rows: Vec<(Vec<f64>, usize)>,
}

impl Dataset {
    pub fn from_trace(records: &[TraceRecord]) -> Result<Dataset> {
        if records.is_empty() {
            return Err(Error::InvalidInput("trajectory dump holds no records".into()));
        }
        let feature_names: Vec<String> = records[0].features.keys().cloned().collect();
        let mut action_names: Vec<String> =
            records.iter().map(|r| r.action.clone()).collect();
        action_names.sort();
        action_names.dedup();

        let mut rows = Vec::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if r.features.len() != feature_names.len()
                || !feature_names.iter().all(|n| r.features.contains_key(n))
            {
                return Err(Error::InvalidInput(format!(
                    "record {i} has a different feature set than the first record"
                )));
            }
            let feats: Vec<f64> = feature_names.iter().map(|n| r.features[n]).collect();
            let class = action_names.iter().position(|a| *a == r.action).unwrap();
            rows.push((feats, class));
        }
        Ok(Dataset { feature_names, action_names, rows })
    }

    pub fn vocabulary(&self) -> Vocabulary {
        Vocabulary { features: self.feature_names.clone(), actions: self.action_names.clone() }
    }
}

#[derive(Debug)]
pub enum TreeNode {
    Leaf {
        /// Per-class record counts.
        counts: Vec<u64>,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

fn gini(counts: &[u64]) -> f64 {
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

fn class_counts(rows: &[(Vec<f64>, usize)], idx: &[usize], n_classes: usize) -> Vec<u64> {
    let mut counts = vec![0u64; n_classes];
    for &i in idx {
        counts[rows[i].1] += 1;
    }
    counts
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    weighted_gini: f64,
}

/// Scan every (feature, midpoint) candidate; the winner minimizes the
/// size-weighted child impurity, breaking exact ties toward the lowest
/// feature index, then the lowest threshold.
fn best_split(
    rows: &[(Vec<f64>, usize)],
    idx: &[usize],
    n_classes: usize,
    min_leaf: usize,
) -> Option<BestSplit> {
    let n = idx.len();
    let n_features = rows[idx[0]].0.len();
    let total = class_counts(rows, idx, n_classes);
    let mut best: Option<BestSplit> = None;

    for f in 0..n_features {
        let mut order: Vec<usize> = idx.to_vec();
        order.sort_by(|&a, &b| rows[a].0[f].partial_cmp(&rows[b].0[f]).unwrap());
        let mut left = vec![0u64; n_classes];
        let mut right = total.clone();
        for k in 0..n - 1 {
            let i = order[k];
            left[rows[i].1] += 1;
            right[rows[i].1] -= 1;
            let v = rows[i].0[f];
            let next = rows[order[k + 1]].0[f];
            if v == next {
                continue; // threshold only between distinct values
            }
            let n_left = k + 1;
            let n_right = n - n_left;
            if n_left < min_leaf || n_right < min_leaf {
                continue;
            }
            let threshold = (v + next) / 2.0;
            let wg = (n_left as f64 * gini(&left) + n_right as f64 * gini(&right)) / n as f64;
            let better = match &best {
                None => true,
                Some(b) => wg < b.weighted_gini,
            };
            if better {
                best = Some(BestSplit { feature: f, threshold, weighted_gini: wg });
            }
        }
    }
    best
}

pub fn fit_tree(dataset: &Dataset, cfg: &TreeConfig) -> Result<TreeNode> {
    if dataset.rows.is_empty() {
        return Err(Error::InvalidInput("cannot fit a tree on an empty dataset".into()));
    }
    if cfg.min_leaf == 0 {
        return Err(Error::Config("min_leaf must be at least 1".into()));
    }
    let idx: Vec<usize> = (0..dataset.rows.len()).collect();
    Ok(grow(&dataset.rows, idx, dataset.action_names.len(), cfg, 0))
}

fn grow(
    rows: &[(Vec<f64>, usize)],
    idx: Vec<usize>,
    n_classes: usize,
    cfg: &TreeConfig,
    depth: usize,
) -> TreeNode {
    let counts = class_counts(rows, &idx, n_classes);
    let parent_gini = gini(&counts);
    if depth >= cfg.max_depth || parent_gini == 0.0 || idx.len() < 2 * cfg.min_leaf {
        return TreeNode::Leaf { counts };
    }
    let Some(split) = best_split(rows, &idx, n_classes, cfg.min_leaf) else {
        return TreeNode::Leaf { counts };
    };
    if split.weighted_gini >= parent_gini - 1e-12 {
        return TreeNode::Leaf { counts }; // no real improvement
    }
    let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = idx
        .into_iter()
        .partition(|&i| rows[i].0[split.feature] <= split.threshold);
    TreeNode::Split {
        feature: split.feature,
        threshold: split.threshold,
        left: Box::new(grow(rows, left_idx, n_classes, cfg, depth + 1)),
        right: Box::new(grow(rows, right_idx, n_classes, cfg, depth + 1)),
    }
}

/// Every leaf with its path condition, in left-to-right order, before any
/// purity or support filtering.
pub fn tree_leaves(tree: &TreeNode, dataset: &Dataset) -> Vec<(Condition, Vec<u64>)> {
    let mut out = Vec::new();
    let mut path: Vec<Condition> = Vec::new();
    walk(tree, dataset, &mut path, &mut out);
    out
}

fn walk(
    node: &TreeNode,
    dataset: &Dataset,
    path: &mut Vec<Condition>,
    out: &mut Vec<(Condition, Vec<u64>)>,
) {
    match node {
        TreeNode::Leaf { counts } => {
            let cond = match path.len() {
                0 => Condition::And(Vec::new()),
                1 => path[0].clone(),
                _ => Condition::And(path.clone()),
            };
            out.push((cond, counts.clone()));
        }
        TreeNode::Split { feature, threshold, left, right } => {
            let name = dataset.feature_names[*feature].clone();
            path.push(Condition::Feature {
                name: name.clone(),
                index: *feature,
                cmp: Cmp::Le,
                value: *threshold,
            });
            walk(left, dataset, path, out);
            path.pop();
            path.push(Condition::Feature { name, index: *feature, cmp: Cmp::Gt, value: *threshold });
            walk(right, dataset, path, out);
            path.pop();
        }
    }
}

/// Fit a tree and emit one soft rule per qualifying leaf.
pub fn extract_rules(dataset: &Dataset, cfg: &TreeConfig) -> Result<RuleSet> {
    let tree = fit_tree(dataset, cfg)?;
    let vocab = dataset.vocabulary();
    let mut rules = Vec::new();
    for (k, (condition, counts)) in tree_leaves(&tree, dataset).into_iter().enumerate() {
        let support: u64 = counts.iter().sum();
        if support < cfg.min_support {
            continue;
        }
        let max = *counts.iter().max().unwrap();
        if (max as f64) < cfg.min_purity * support as f64 {
            continue;
        }
        let preference: Vec<(usize, f64)> = counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(a, &c)| (a, c as f64 / support as f64))
            .collect();
        rules.push(SoftRule {
            name: format!("leaf_{k}"),
            priority: 0,
            condition,
            preference,
            support,
        });
    }
    RuleSet::new(rules, &vocab)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;

    fn dataset(rows: Vec<(Vec<f64>, usize)>) -> Dataset {
        let n_features = rows[0].0.len();
        Dataset {
            feature_names: (0..n_features).map(|i| format!("f{i}")).collect(),
            action_names: vec!["move".into(), "attack".into(), "wait".into()],
            rows,
        }
    }

    #[test]
    fn perfectly_separable_gives_depth_one_rule() {
        // action = move iff health < 15
        let mut rows = Vec::new();
        for i in 0..60 {
            let h = i as f64 / 2.0; // 0.0 .. 29.5
            rows.push((vec![h], if h < 15.0 { 0 } else { 1 }));
        }
        let ds = Dataset {
            feature_names: vec!["health".into()],
            action_names: vec!["move".into(), "attack".into()],
            rows,
        };
        let cfg = TreeConfig { min_leaf: 5, min_support: 10, ..TreeConfig::default() };
        let rs = extract_rules(&ds, &cfg).unwrap();
        assert_eq!(rs.len(), 2, "one rule per side of the single split");
        let move_rule = rs
            .rules()
            .iter()
            .find(|r| r.preference == vec![(0, 1.0)])
            .expect("a pure move leaf");
        match &move_rule.condition {
            Condition::Feature { cmp: Cmp::Le, value, .. } => {
                assert!((*value - 14.75).abs() < 1e-9, "midpoint between 14.5 and 15.0");
            }
            other => panic!("expected a single predicate, got {other:?}"),
        }
    }

    #[test]
    fn leaf_frequencies_become_soft_weights() {
        // one feature that cannot split under min_leaf, 70/30 class mix
        let mut rows = Vec::new();
        for i in 0..100 {
            rows.push((vec![0.0], if i < 70 { 1 } else { 0 }));
        }
        let ds = dataset(rows);
        let cfg = TreeConfig { min_support: 50, min_purity: 0.6, ..TreeConfig::default() };
        let rs = extract_rules(&ds, &cfg).unwrap();
        assert_eq!(rs.len(), 1);
        let prefs: BTreeMap<usize, f64> = rs.rules()[0].preference.iter().cloned().collect();
        assert!((prefs[&1] - 0.7).abs() < 1e-12);
        assert!((prefs[&0] - 0.3).abs() < 1e-12);

        let strict = TreeConfig { min_support: 50, min_purity: 0.9, ..TreeConfig::default() };
        let rs = extract_rules(&ds, &strict).unwrap();
        assert!(rs.is_empty(), "a 70% leaf fails min_purity 0.9");
    }

    #[test]
    fn empty_dataset_is_invalid() {
        let ds = Dataset {
            feature_names: vec!["f0".into()],
            action_names: vec!["a".into()],
            rows: vec![],
        };
        assert!(matches!(fit_tree(&ds, &TreeConfig::default()), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn leaves_partition_the_feature_space() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows: Vec<(Vec<f64>, usize)> = (0..300)
            .map(|_| {
                let f0 = rng.gen_range(0.0..30.0);
                let f1 = rng.gen_range(-5.0..5.0);
                let class = if f0 < 12.0 { 0 } else if f1 > 0.0 { 1 } else { 2 };
                (vec![f0, f1], class)
            })
            .collect();
        let ds = dataset(rows);
        let cfg = TreeConfig { min_leaf: 10, min_support: 1, min_purity: 0.0, ..TreeConfig::default() };
        let tree = fit_tree(&ds, &cfg).unwrap();
        let leaves = tree_leaves(&tree, &ds);
        assert!(leaves.len() >= 3);

        let avail: Vec<bool> = vec![true; ds.action_names.len()];
        for _ in 0..500 {
            let probe = vec![rng.gen_range(-2.0..32.0), rng.gen_range(-6.0..6.0)];
            let holds = leaves
                .iter()
                .filter(|(cond, _)| cond.eval(&probe, &avail))
                .count();
            assert_eq!(holds, 1, "exactly one leaf claims {probe:?}");
        }
    }

    #[test]
    fn replaying_training_rows_reproduces_leaf_distributions() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let rows: Vec<(Vec<f64>, usize)> = (0..400)
            .map(|_| {
                let f0 = rng.gen_range(0.0..30.0);
                let noisy = rng.gen_bool(0.1);
                let class = if noisy {
                    rng.gen_range(0..3)
                } else if f0 < 15.0 {
                    0
                } else {
                    1
                };
                (vec![f0], class)
            })
            .collect();
        let ds = dataset(rows.clone());
        let cfg = TreeConfig { min_leaf: 20, min_support: 20, min_purity: 0.0, ..TreeConfig::default() };
        let rs = extract_rules(&ds, &cfg).unwrap();
        assert!(!rs.is_empty());

        // Route every training row through evaluate; per-rule action counts
        // must equal the stored preference exactly.
        let avail = vec![true; ds.action_names.len()];
        let mut counts: BTreeMap<usize, Vec<u64>> = BTreeMap::new();
        for (feats, class) in &rows {
            if let Some(m) = rs.evaluate(feats, &avail).unwrap() {
                counts.entry(m.rule_index).or_insert_with(|| vec![0; 3])[*class] += 1;
            }
        }
        for (rule_idx, c) in counts {
            let rule = &rs.rules()[rule_idx];
            let total: u64 = c.iter().sum();
            assert_eq!(total, rule.support);
            for &(action, weight) in &rule.preference {
                assert_eq!(weight, c[action] as f64 / total as f64, "rule {}", rule.name);
            }
        }
    }

    #[test]
    fn chosen_split_matches_brute_force_enumerator() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for trial in 0..10 {
            let rows: Vec<(Vec<f64>, usize)> = (0..150)
                .map(|_| {
                    let f: Vec<f64> = (0..3).map(|_| rng.gen_range(0.0..10.0)).collect();
                    let class = rng.gen_range(0..3);
                    (f, class)
                })
                .collect();
            let n = rows.len();
            let idx: Vec<usize> = (0..n).collect();
            let min_leaf = 5;
            let Some(chosen) = best_split(&rows, &idx, 3, min_leaf) else {
                continue;
            };

            // Brute force: every feature, every midpoint.
            let parent = gini(&class_counts(&rows, &idx, 3));
            let mut best = f64::INFINITY;
            for f in 0..3 {
                let mut vals: Vec<f64> = rows.iter().map(|r| r.0[f]).collect();
                vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
                vals.dedup();
                for w in vals.windows(2) {
                    let t = (w[0] + w[1]) / 2.0;
                    let left: Vec<usize> = idx.iter().copied().filter(|&i| rows[i].0[f] <= t).collect();
                    let right: Vec<usize> = idx.iter().copied().filter(|&i| rows[i].0[f] > t).collect();
                    if left.len() < min_leaf || right.len() < min_leaf {
                        continue;
                    }
                    let wg = (left.len() as f64 * gini(&class_counts(&rows, &left, 3))
                        + right.len() as f64 * gini(&class_counts(&rows, &right, 3)))
                        / n as f64;
                    if wg < best {
                        best = wg;
                    }
                }
            }
            assert!(
                (chosen.weighted_gini - best).abs() < 1e-12,
                "trial {trial}: sweep found {}, brute force found {best}",
                chosen.weighted_gini
            );
            assert!(chosen.weighted_gini <= parent + 1e-12, "children never worse than parent");
        }
    }
}
