//! Condition-dropout schedule for training.
//!
//! Each (condition, step) decision comes from its own ChaCha8 stream, keyed
//! by the FNV-1a hash of the condition name and positioned by the step, so a
//! decision is a pure function of `(seed, step, name)` and can be recomputed
//! in any order.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const NEIGHBOR_VIEW: &str = "neighbor_view";
pub const DEFAULT_CONDITION_PROB: f64 = 0.40;
pub const DEFAULT_NEIGHBOR_VIEW_PROB: f64 = 0.50;
pub const DEFAULT_CONDITIONS: [&str; 3] = ["first_frame", "bev_map", "bounding_boxes"];

#[derive(Clone, Debug, PartialEq)]
pub struct DropoutPolicy {
    per_condition_prob: BTreeMap<String, f64>,
    neighbor_view_prob: f64,
    seed: u64,
}

fn check_prob(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "dropout probability for {name} is {p}, expected [0, 1]"
        )))
    }
}

impl DropoutPolicy {
    pub fn new(
        per_condition_prob: BTreeMap<String, f64>,
        neighbor_view_prob: f64,
        seed: u64,
    ) -> Result<Self> {
        for (name, &p) in &per_condition_prob {
            if name == NEIGHBOR_VIEW {
                return Err(Error::invalid(format!(
                    "`{NEIGHBOR_VIEW}` is reserved for the neighbor-view probability"
                )));
            }
            check_prob(name, p)?;
        }
        check_prob(NEIGHBOR_VIEW, neighbor_view_prob)?;
        Ok(Self {
            per_condition_prob,
            neighbor_view_prob,
            seed,
        })
    }

    /// Default conditions at 0.40, neighbor view at 0.50.
    pub fn with_seed(seed: u64) -> Self {
        let probs = DEFAULT_CONDITIONS
            .iter()
            .map(|c| (c.to_string(), DEFAULT_CONDITION_PROB))
            .collect();
        Self::new(probs, DEFAULT_NEIGHBOR_VIEW_PROB, seed).expect("defaults are valid")
    }

    pub fn per_condition_prob(&self) -> &BTreeMap<String, f64> {
        &self.per_condition_prob
    }

    pub fn neighbor_view_prob(&self) -> f64 {
        self.neighbor_view_prob
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Every condition with its probability, neighbor view included, in name order.
    pub fn conditions(&self) -> BTreeMap<&str, f64> {
        let mut all: BTreeMap<&str, f64> = self
            .per_condition_prob
            .iter()
            .map(|(k, &v)| (k.as_str(), v))
            .collect();
        all.insert(NEIGHBOR_VIEW, self.neighbor_view_prob);
        all
    }
}

impl Default for DropoutPolicy {
    fn default() -> Self {
        Self::with_seed(0)
    }
}

fn fnv1a(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

fn stream(seed: u64, name: &str) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a(name));
    rng
}

/// Uniform draw in `[0, 1)` for one (condition, step).
fn uniform(seed: u64, step: u64, name: &str) -> f64 {
    let mut rng = stream(seed, name);
    // one f64 consumes two 32-bit words
    rng.set_word_pos(u128::from(step) * 2);
    rng.random::<f64>()
}

/// Which conditions are dropped at `step`. `true` means dropped.
pub fn sample_dropout(policy: &DropoutPolicy, step: u64) -> BTreeMap<String, bool> {
    policy
        .conditions()
        .into_iter()
        .map(|(name, p)| (name.to_string(), uniform(policy.seed, step, name) < p))
        .collect()
}

/// Decisions for steps `0..steps`, per condition in name order. Equal to
/// calling [`sample_dropout`] for each step, but reads each stream once.
pub fn dropout_schedule(policy: &DropoutPolicy, steps: u64) -> BTreeMap<String, Vec<bool>> {
    policy
        .conditions()
        .into_iter()
        .map(|(name, p)| {
            let mut rng = stream(policy.seed, name);
            let drops = (0..steps).map(|_| rng.random::<f64>() < p).collect();
            (name.to_string(), drops)
        })
        .collect()
}

/// Empirical drop frequency per condition over steps `0..steps`.
pub fn drop_frequencies(policy: &DropoutPolicy, steps: u64) -> BTreeMap<String, f64> {
    dropout_schedule(policy, steps)
        .into_iter()
        .map(|(k, d)| {
            let n = d.iter().filter(|&&x| x).count();
            (k, n as f64 / steps.max(1) as f64)
        })
        .collect()
}
