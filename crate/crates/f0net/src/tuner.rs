//! Seeded random-search study over (lr, alpha, dropout_p).
//!
//! Learning rate and alpha are sampled log-uniformly, dropout uniformly. The
//! whole trial list is drawn up front from the seed, so the study is
//! reproducible and order-independent. Random search is deliberate: three
//! parameters and a 50-trial budget do not reward a model-based sampler, and
//! the sampler sits behind [`suggest`] if one is ever added.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io_util::write_atomic;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    /// Log-uniform bounds for the learning rate.
    pub lr: (f64, f64),
    /// Log-uniform bounds for the loss trade-off weight.
    pub alpha: (f64, f64),
    /// Uniform bounds for the dropout probability.
    pub dropout_p: (f64, f64),
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            lr: (1e-5, 1e-2),
            alpha: (1e-5, 1e-1),
            dropout_p: (0.0, 0.5),
        }
    }
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [("lr", self.lr), ("alpha", self.alpha)] {
            if lo <= 0.0 {
                return Err(Error::Config(format!("{name} bounds must be > 0")));
            }
            if lo > hi {
                return Err(Error::Config(format!("{name} bounds are inverted")));
            }
        }
        if self.dropout_p.0 > self.dropout_p.1 || self.dropout_p.0 < 0.0 || self.dropout_p.1 >= 1.0
        {
            return Err(Error::Config(
                "dropout_p bounds must satisfy 0 <= lo <= hi < 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialParams {
    pub lr: f64,
    pub alpha: f64,
    pub dropout_p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trial {
    pub trial_id: usize,
    pub params: TrialParams,
    /// Best validation loss of the trial; `None` when the objective failed or
    /// returned a non-finite value.
    pub objective: Option<f64>,
}

impl Trial {
    pub fn is_complete(&self) -> bool {
        self.objective.is_some()
    }
}

fn log_uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        return lo;
    }
    (rng.gen_range(lo.ln()..hi.ln())).exp()
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        return lo;
    }
    rng.gen_range(lo..hi)
}

/// Draws one parameter set from the space.
pub fn suggest(space: &SearchSpace, rng: &mut ChaCha8Rng) -> TrialParams {
    TrialParams {
        lr: log_uniform(rng, space.lr),
        alpha: log_uniform(rng, space.alpha),
        dropout_p: uniform(rng, space.dropout_p),
    }
}

/// Runs `n_trials` objective evaluations on parameters pre-drawn from `seed`
/// and returns the best completed trial plus the full log. Objectives that
/// error or return a non-finite value mark their trial failed.
pub fn run_study<F>(
    space: &SearchSpace,
    n_trials: usize,
    seed: u64,
    mut objective: F,
) -> Result<(Trial, Vec<Trial>)>
where
    F: FnMut(&TrialParams) -> Result<f64>,
{
    space.validate()?;
    if n_trials == 0 {
        return Err(Error::Config("n_trials must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params: Vec<TrialParams> = (0..n_trials).map(|_| suggest(space, &mut rng)).collect();

    let mut trials = Vec::with_capacity(n_trials);
    for (trial_id, p) in params.into_iter().enumerate() {
        let objective_value = match objective(&p) {
            Ok(v) if v.is_finite() => Some(v),
            _ => None,
        };
        trials.push(Trial {
            trial_id,
            params: p,
            objective: objective_value,
        });
    }
    let best = trials
        .iter()
        .filter(|t| t.is_complete())
        .min_by(|a, b| a.objective.partial_cmp(&b.objective).unwrap())
        .cloned()
        .ok_or_else(|| Error::NonFinite(format!("all {n_trials} trials failed")))?;
    Ok((best, trials))
}

/// `trial_id,lr,alpha,dropout_p,objective,status` rows.
pub fn study_csv(trials: &[Trial]) -> String {
    let mut out = String::from("trial_id,lr,alpha,dropout_p,objective,status\n");
    for t in trials {
        let (objective, status) = match t.objective {
            Some(v) => (v.to_string(), "complete"),
            None => ("NaN".to_string(), "failed"),
        };
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            t.trial_id, t.params.lr, t.params.alpha, t.params.dropout_p, objective, status
        ));
    }
    out
}

pub fn write_study_csv(trials: &[Trial], path: &Path) -> Result<()> {
    write_atomic(path, study_csv(trials).as_bytes())
}

pub fn write_best_json(best: &Trial, path: &Path) -> Result<()> {
    let json = serde_json::to_vec_pretty(best).expect("trial serializes");
    write_atomic(path, &json)
}
