//! The reward core: a per-agent intrinsic reward equal to the negative
//! Euclidean distance between the agent's action distribution and the
//! matched rule's preference distribution, and the shaped team reward that
//! folds the per-agent intrinsics into the extrinsic signal.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// -||preference - agent_dist||_2 when a preference exists, otherwise 0.
/// Both distributions live on the same action vocabulary under the same
/// availability mask, so the value lies in [-sqrt(2), 0].
pub fn intrinsic_reward(preference: Option<&[f64]>, agent_dist: &[f64]) -> Result<f64> {
    let Some(pref) = preference else {
        return Ok(0.0);
    };
    if pref.len() != agent_dist.len() {
        return Err(Error::Config(format!(
            "preference has {} entries but the action distribution has {}",
            pref.len(),
            agent_dist.len()
        )));
    }
    let sq: f64 = pref
        .iter()
        .zip(agent_dist)
        .map(|(p, a)| (p - a) * (p - a))
        .sum();
    Ok(-sq.sqrt())
}

/// R_t = r_ex + lambda * mean(intrinsics).
pub fn shaped_team_reward(r_ex: f64, intrinsics: &[f64], lambda: f64) -> Result<f64> {
    if intrinsics.is_empty() {
        return Err(Error::InvalidInput("shaped reward needs at least one agent".into()));
    }
    if lambda < 0.0 {
        return Err(Error::Config(format!("lambda must be nonnegative, got {lambda}")));
    }
    let mean: f64 = intrinsics.iter().sum::<f64>() / intrinsics.len() as f64;
    Ok(r_ex + lambda * mean)
}

/// One logged intrinsic-reward observation, streamed to JSON lines for the
/// per-step curve plots.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IntrinsicRecord {
    pub episode: u64,
    pub step: usize,
    pub agent: usize,
    /// Name of the rule that fired, if any.
    pub rule: Option<String>,
    /// The fired rule's masked preference distribution.
    pub preference: Option<Vec<f64>>,
    /// The agent's action distribution at this step.
    pub action_dist: Vec<f64>,
    pub intrinsic_reward: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_distributions_cost_nothing() {
        let d = [0.25, 0.25, 0.5];
        assert_eq!(intrinsic_reward(Some(&d), &d).unwrap(), 0.0);
    }

    #[test]
    fn disjoint_one_hots_hit_the_floor() {
        let p = [1.0, 0.0, 0.0];
        let a = [0.0, 1.0, 0.0];
        let r = intrinsic_reward(Some(&p), &a).unwrap();
        assert!((r + 2.0_f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn half_split_against_one_hot() {
        let p = [0.5, 0.5];
        let a = [1.0, 0.0];
        let r = intrinsic_reward(Some(&p), &a).unwrap();
        assert!((r + 0.5_f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn missing_preference_is_zero() {
        assert_eq!(intrinsic_reward(None, &[0.3, 0.7]).unwrap(), 0.0);
    }

    #[test]
    fn vocabulary_mismatch_is_config_error() {
        assert!(matches!(
            intrinsic_reward(Some(&[1.0]), &[0.5, 0.5]),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn symmetric_and_nonpositive() {
        let p = [0.1, 0.6, 0.3];
        let a = [0.4, 0.4, 0.2];
        let ab = intrinsic_reward(Some(&p), &a).unwrap();
        let ba = intrinsic_reward(Some(&a), &p).unwrap();
        assert_eq!(ab, ba);
        assert!(ab < 0.0);
    }

    #[test]
    fn shaped_reward_arithmetic() {
        let r = shaped_team_reward(0.0, &[-0.5, -0.3], 1.0).unwrap();
        assert!((r + 0.4).abs() < 1e-15);

        // lambda = 0 removes the intrinsic term entirely
        assert_eq!(shaped_team_reward(2.5, &[-1.0, -1.0], 0.0).unwrap(), 2.5);
        assert_eq!(shaped_team_reward(2.5, &[0.0, 0.0, 0.0], 0.7).unwrap(), 2.5);
        assert!(shaped_team_reward(1.0, &[], 0.5).is_err());
    }

    #[test]
    fn shaping_only_subtracts_within_bounds() {
        // over random simplex pairs the shift stays in [-sqrt(2)*lambda, 0]
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let lambda = 0.5;
        for _ in 0..2000 {
            let n = rng.gen_range(2..6);
            let simplex = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
                let raw: Vec<f64> = (0..n).map(|_| -rng.gen::<f64>().ln()).collect();
                let s: f64 = raw.iter().sum();
                raw.iter().map(|v| v / s).collect()
            };
            let p = simplex(&mut rng);
            let a = simplex(&mut rng);
            let ri = intrinsic_reward(Some(&p), &a).unwrap();
            assert!((-2.0_f64.sqrt()..=0.0).contains(&ri));
            let r_ex = rng.gen_range(-5.0..5.0);
            let shaped = shaped_team_reward(r_ex, &[ri], lambda).unwrap();
            let shift = shaped - r_ex;
            assert!(shift <= 0.0 && shift >= -lambda * 2.0_f64.sqrt() - 1e-12);
        }
    }
}
