//! The evolutionary engine.
//!
//! A generational loop over expression trees: ramped half-and-half
//! initialisation, tournament selection on parsimony-adjusted fitness,
//! subtree crossover, subtree and point mutation, reproduction, and an
//! elite of one. Every random draw comes from a ChaCha8 stream seeded by
//! the run seed, so runs are bit-reproducible regardless of thread count.

mod engine;
mod init;
mod variation;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Op;

pub use engine::{
    evolve, fitness, parsimony_coefficient, replicate, tournament_select, write_generation_log,
    GenerationStats, RunResult,
};
pub use init::{grow_tree, init_population, Primitives};
pub use variation::{crossover, mutate, MutationKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parsimony {
    /// Penalise size by `|c|` per node with `c = Cov(size, fitness) / Var(size)`,
    /// recomputed every generation.
    Covariant,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitnessMetric {
    Rmse,
    Mae,
}

/// Engine settings. Every field has a default, so config files only need
/// the fields they change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GpConfig {
    pub population_size: usize,
    /// Generations bred after the initial population.
    pub generations: usize,
    pub tournament_size: usize,
    pub p_crossover: f64,
    pub p_subtree_mutation: f64,
    pub p_point_mutation: f64,
    pub init_depth_range: (usize, usize),
    pub max_depth: usize,
    pub parsimony: Parsimony,
    pub fitness_metric: FitnessMetric,
    pub rng_seed: u64,
    pub runs: usize,
    pub operators: Vec<Op>,
    /// Range of ephemeral constants; `None` leaves constants out of the
    /// terminal set.
    pub constant_range: Option<(f64, f64)>,
    /// Stop once the best raw fitness is at or below this value.
    pub early_stop: f64,
}

impl Default for GpConfig {
    fn default() -> Self {
        GpConfig {
            population_size: 1000,
            generations: 20,
            tournament_size: 20,
            p_crossover: 0.9,
            p_subtree_mutation: 0.03,
            p_point_mutation: 0.03,
            init_depth_range: (2, 6),
            max_depth: 17,
            parsimony: Parsimony::Covariant,
            fitness_metric: FitnessMetric::Rmse,
            rng_seed: 0,
            runs: 50,
            operators: Op::ALL.to_vec(),
            constant_range: Some((-1.0, 1.0)),
            early_stop: 0.0,
        }
    }
}

impl GpConfig {
    /// Whatever probability mass is left after the variation operators.
    pub fn p_reproduction(&self) -> f64 {
        (1.0 - self.p_crossover - self.p_subtree_mutation - self.p_point_mutation).max(0.0)
    }

    /// The same configuration without the `lag` operator (plain symbolic
    /// regression).
    pub fn without_lag(&self) -> GpConfig {
        let mut c = self.clone();
        c.operators.retain(|op| *op != Op::Lag);
        c
    }

    pub fn uses_lag(&self) -> bool {
        self.operators.contains(&Op::Lag)
    }

    pub fn validate(&self) -> Result<()> {
        let probs = [
            ("p_crossover", self.p_crossover),
            ("p_subtree_mutation", self.p_subtree_mutation),
            ("p_point_mutation", self.p_point_mutation),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(format!("{name} = {p} is not a probability")));
            }
        }
        let total: f64 = probs.iter().map(|p| p.1).sum();
        if total > 1.0 + 1e-12 {
            return Err(Error::config(format!(
                "operator probabilities sum to {total} > 1"
            )));
        }
        if self.tournament_size == 0 || self.tournament_size > self.population_size {
            return Err(Error::config(format!(
                "tournament size {} must be in 1..={}",
                self.tournament_size, self.population_size
            )));
        }
        let (lo, hi) = self.init_depth_range;
        if lo > hi {
            return Err(Error::config(format!("init depth range ({lo}, {hi}) is reversed")));
        }
        if self.max_depth < hi {
            return Err(Error::config(format!(
                "max_depth {} is below the initial depth {hi}",
                self.max_depth
            )));
        }
        if self.runs == 0 {
            return Err(Error::config("runs must be at least 1"));
        }
        if self.operators.is_empty() {
            return Err(Error::config("operator set is empty"));
        }
        if let Some((a, b)) = self.constant_range {
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(Error::config(format!("constant range ({a}, {b}) is empty")));
            }
        }
        if let Parsimony::Fixed(c) = self.parsimony {
            if !c.is_finite() {
                return Err(Error::config("fixed parsimony coefficient must be finite"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = GpConfig::default();
        c.validate().unwrap();
        assert!((c.p_reproduction() - 0.04).abs() < 1e-12);
        assert!(c.uses_lag());
        assert!(!c.without_lag().uses_lag());
        assert_eq!(c.without_lag().operators.len(), 3);
    }

    #[test]
    fn partial_toml_keeps_defaults() {
        let c: GpConfig = toml::from_str(
            "population_size = 50\nparsimony = { fixed = 0.01 }\noperators = [\"add\", \"lag\"]\n",
        )
        .unwrap();
        assert_eq!(c.population_size, 50);
        assert_eq!(c.parsimony, Parsimony::Fixed(0.01));
        assert_eq!(c.operators, vec![Op::Add, Op::Lag]);
        assert_eq!(c.generations, 20);
        let c: GpConfig = toml::from_str("parsimony = \"covariant\"\nconstant_range = [-2.0, 2.0]").unwrap();
        assert_eq!(c.constant_range, Some((-2.0, 2.0)));
        assert!(toml::from_str::<GpConfig>("populaton_size = 5").is_err());
    }

    #[test]
    fn invalid_configs() {
        let bad = [
            GpConfig { p_crossover: 0.99, ..Default::default() },
            GpConfig { tournament_size: 2000, ..Default::default() },
            GpConfig { tournament_size: 0, ..Default::default() },
            GpConfig { max_depth: 3, ..Default::default() },
            GpConfig { init_depth_range: (4, 2), ..Default::default() },
            GpConfig { runs: 0, ..Default::default() },
            GpConfig { operators: vec![], ..Default::default() },
            GpConfig { constant_range: Some((1.0, 1.0)), ..Default::default() },
        ];
        for c in bad {
            assert!(matches!(c.validate(), Err(Error::Config(_))), "{c:?}");
        }
    }
}
