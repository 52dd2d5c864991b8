use std::io::Write;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::init::{init_population, Primitives};
use super::variation::{crossover, mutate, MutationKind};
use super::{FitnessMetric, GpConfig, Parsimony};
use crate::data::DatasetView;
use crate::error::{Error, Result};
use crate::expr::{evaluate_series, ExprTree};
use crate::metrics::{evaluate, EvalReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub generation: usize,
    pub best_fitness: f64,
    /// Mean over individuals with finite fitness.
    pub mean_fitness: f64,
    pub mean_size: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub best_tree: ExprTree,
    pub train_fitness: f64,
    /// One row per evaluated population; row 0 is the initial population.
    pub generation_log: Vec<GenerationStats>,
    pub seed: u64,
}

/// RMSE or MAE of `tree` against the view's output. Anything that does not
/// evaluate to finite numbers scores `+∞`.
pub fn fitness(tree: &ExprTree, train: &DatasetView, metric: FitnessMetric) -> f64 {
    let Ok(pred) = evaluate_series(tree, train) else {
        return f64::INFINITY;
    };
    let y = train.output();
    let n = y.len() as f64;
    let score = match metric {
        FitnessMetric::Rmse => {
            (pred.iter().zip(y).map(|(p, a)| (p - a) * (p - a)).sum::<f64>() / n).sqrt()
        }
        FitnessMetric::Mae => pred.iter().zip(y).map(|(p, a)| (p - a).abs()).sum::<f64>() / n,
    };
    if score.is_finite() {
        score
    } else {
        f64::INFINITY
    }
}

/// `Cov(size, fitness) / Var(size)` over the individuals with finite
/// fitness; zero when sizes do not vary.
pub fn parsimony_coefficient(fitnesses: &[f64], sizes: &[usize]) -> f64 {
    let pairs: Vec<(f64, f64)> = fitnesses
        .iter()
        .zip(sizes)
        .filter(|(f, _)| f.is_finite())
        .map(|(f, s)| (*s as f64, *f))
        .collect();
    if pairs.len() < 2 {
        return 0.0;
    }
    let n = pairs.len() as f64;
    let ms = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let mf = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let var = pairs.iter().map(|p| (p.0 - ms).powi(2)).sum::<f64>() / n;
    if var == 0.0 {
        return 0.0;
    }
    let cov = pairs.iter().map(|p| (p.0 - ms) * (p.1 - mf)).sum::<f64>() / n;
    cov / var
}

/// Index of the winner among `k` contestants drawn without replacement:
/// lowest adjusted fitness, then fewest nodes, then lowest index.
pub fn tournament_select<R: Rng>(adjusted: &[f64], sizes: &[usize], k: usize, rng: &mut R) -> usize {
    sample(rng, adjusted.len(), k)
        .into_iter()
        .min_by(|&a, &b| rank(adjusted, sizes, a, b))
        .expect("tournament of at least one")
}

fn rank(score: &[f64], sizes: &[usize], a: usize, b: usize) -> std::cmp::Ordering {
    score[a]
        .total_cmp(&score[b])
        .then(sizes[a].cmp(&sizes[b]))
        .then(a.cmp(&b))
}

fn best_index(score: &[f64], sizes: &[usize]) -> usize {
    (0..score.len())
        .min_by(|&a, &b| rank(score, sizes, a, b))
        .expect("non-empty population")
}

fn evaluate_all(
    trees: &[ExprTree],
    known: Vec<Option<f64>>,
    train: &DatasetView,
    metric: FitnessMetric,
) -> Vec<f64> {
    trees
        .par_iter()
        .zip(known)
        .map(|(t, k)| k.unwrap_or_else(|| fitness(t, train, metric)))
        .collect()
}

fn stats(generation: usize, fit: &[f64], sizes: &[usize]) -> GenerationStats {
    let finite: Vec<f64> = fit.iter().copied().filter(|f| f.is_finite()).collect();
    GenerationStats {
        generation,
        best_fitness: fit.iter().copied().fold(f64::INFINITY, f64::min),
        mean_fitness: if finite.is_empty() {
            f64::INFINITY
        } else {
            finite.iter().sum::<f64>() / finite.len() as f64
        },
        mean_size: sizes.iter().sum::<usize>() as f64 / sizes.len() as f64,
    }
}

/// One run seeded by `config.rng_seed`.
pub fn evolve(config: &GpConfig, train: &DatasetView) -> Result<RunResult> {
    config.validate()?;
    if train.arity() == 0 {
        return Err(Error::config("training view has no input arms"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let prims = Primitives::new(config, train.arity());
    let n = config.population_size;
    let metric = config.fitness_metric;
    let (_, init_max) = config.init_depth_range;
    let p_sub = config.p_crossover + config.p_subtree_mutation;
    let p_point = p_sub + config.p_point_mutation;

    let mut pop = init_population(config, train.arity(), &mut rng);
    let mut fit = evaluate_all(&pop, vec![None; n], train, metric);
    let mut sizes: Vec<usize> = pop.iter().map(ExprTree::node_count).collect();
    let mut log = vec![stats(0, &fit, &sizes)];

    for generation in 1..=config.generations {
        if log.last().is_some_and(|s| s.best_fitness <= config.early_stop) {
            break;
        }
        let c = match config.parsimony {
            Parsimony::Covariant => parsimony_coefficient(&fit, &sizes),
            Parsimony::Fixed(c) => c,
        };
        let adjusted: Vec<f64> = fit
            .iter()
            .zip(&sizes)
            .map(|(f, s)| f + c.abs() * *s as f64)
            .collect();

        let elite = best_index(&fit, &sizes);
        let mut next = Vec::with_capacity(n);
        let mut known = Vec::with_capacity(n);
        next.push(pop[elite].clone());
        known.push(Some(fit[elite]));

        while next.len() < n {
            let r: f64 = rng.random();
            let a = tournament_select(&adjusted, &sizes, config.tournament_size, &mut rng);
            if r < config.p_crossover {
                let b = tournament_select(&adjusted, &sizes, config.tournament_size, &mut rng);
                let (c1, c2) = crossover(&pop[a], &pop[b], config.max_depth, &mut rng);
                next.push(c1);
                known.push(None);
                if next.len() < n {
                    next.push(c2);
                    known.push(None);
                }
            } else if r < p_sub {
                let kind = MutationKind::Subtree;
                next.push(mutate(&pop[a], kind, &prims, init_max, config.max_depth, &mut rng));
                known.push(None);
            } else if r < p_point {
                let kind = MutationKind::Point;
                next.push(mutate(&pop[a], kind, &prims, init_max, config.max_depth, &mut rng));
                known.push(None);
            } else {
                next.push(pop[a].clone());
                known.push(Some(fit[a]));
            }
        }
        debug_assert!(next
            .iter()
            .all(|t| t.validate(config.max_depth, train.arity()).is_ok()));

        pop = next;
        fit = evaluate_all(&pop, known, train, metric);
        sizes = pop.iter().map(ExprTree::node_count).collect();
        log.push(stats(generation, &fit, &sizes));
    }

    let best = best_index(&fit, &sizes);
    Ok(RunResult {
        best_tree: pop[best].clone(),
        train_fitness: fit[best],
        generation_log: log,
        seed: config.rng_seed,
    })
}

/// `config.runs` independent runs with seeds `rng_seed + i`, each scored on
/// `test`. Runs execute in parallel and are returned in seed order.
pub fn replicate(
    config: &GpConfig,
    train: &DatasetView,
    test: &DatasetView,
) -> Result<Vec<(RunResult, EvalReport)>> {
    config.validate()?;
    (0..config.runs)
        .into_par_iter()
        .map(|i| {
            let mut c = config.clone();
            c.rng_seed = config.rng_seed.wrapping_add(i as u64);
            let run = evolve(&c, train)?;
            let pred = evaluate_series(&run.best_tree, test)?;
            let report = evaluate(&pred, test.output())?;
            Ok((run, report))
        })
        .collect()
}

pub fn write_generation_log<W: Write>(log: &[GenerationStats], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["generation", "best_fitness", "mean_fitness", "mean_size"])?;
    for s in log {
        w.write_record([
            s.generation.to_string(),
            s.best_fitness.to_string(),
            s.mean_fitness.to_string(),
            s.mean_size.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Op;
    use proptest::prelude::*;

    fn view(n: usize) -> DatasetView {
        let x0: Vec<f64> = (0..n).map(|t| ((t * 7) % 13) as f64).collect();
        let x1: Vec<f64> = (0..n).map(|t| ((t * 5) % 11) as f64 + 1.0).collect();
        let y = x0.clone();
        DatasetView::from_columns(vec![x0, x1], y).unwrap()
    }

    fn small(seed: u64) -> GpConfig {
        GpConfig {
            population_size: 60,
            generations: 5,
            tournament_size: 5,
            init_depth_range: (1, 3),
            max_depth: 6,
            rng_seed: seed,
            runs: 3,
            ..Default::default()
        }
    }

    #[test]
    fn fitness_examples() {
        let v = view(40);
        assert_eq!(fitness(&ExprTree::input(0), &v, FitnessMetric::Rmse), 0.0);

        let y = v.output();
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let sd = (y.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / y.len() as f64).sqrt();
        let f = fitness(&ExprTree::constant(mean), &v, FitnessMetric::Rmse);
        assert!((f - sd).abs() < 1e-12);

        let mut huge = ExprTree::constant(1e200);
        for _ in 0..3 {
            huge = huge.clone() * huge;
        }
        assert_eq!(fitness(&huge, &v, FitnessMetric::Rmse), f64::INFINITY);
        assert_eq!(fitness(&ExprTree::input(7), &v, FitnessMetric::Mae), f64::INFINITY);
    }

    #[test]
    fn parsimony_examples() {
        assert_eq!(parsimony_coefficient(&[1.0, 5.0, 2.0], &[4, 4, 4]), 0.0);
        assert!((parsimony_coefficient(&[1.0, 2.0, 3.0], &[1, 2, 3]) - 1.0).abs() < 1e-15);
        assert_eq!(parsimony_coefficient(&[2.0; 4], &[1, 5, 2, 9]), 0.0);
        // Culled individuals are ignored.
        let c = parsimony_coefficient(&[1.0, 2.0, f64::INFINITY, 3.0], &[1, 2, 40, 3]);
        assert!((c - 1.0).abs() < 1e-15);
    }

    #[test]
    fn tournament_rules() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let adjusted = [3.0, 1.0, 2.0, 1.0];
        let sizes = [1, 7, 1, 3];
        // k = n sees everyone: tie at 1.0 broken by size.
        for _ in 0..10 {
            assert_eq!(tournament_select(&adjusted, &sizes, 4, &mut rng), 3);
        }
        // Equal fitness and size falls back to index.
        assert_eq!(tournament_select(&[1.0; 3], &[2; 3], 3, &mut rng), 0);
        // k = 1 picks uniformly.
        let mut counts = [0; 4];
        for _ in 0..4000 {
            counts[tournament_select(&adjusted, &sizes, 1, &mut rng)] += 1;
        }
        assert!(counts.iter().all(|&c| (800..1200).contains(&c)), "{counts:?}");
    }

    #[test]
    fn solves_identity_target() {
        let r = evolve(&small(1), &view(50)).unwrap();
        assert_eq!(r.train_fitness, 0.0);
        assert!(r.generation_log.len() <= 6);
    }

    #[test]
    fn runs_are_reproducible() {
        let v = view(50);
        let mut c = small(7);
        c.early_stop = -1.0;
        assert_eq!(evolve(&c, &v).unwrap(), evolve(&c, &v).unwrap());
        let a = replicate(&c, &v, &v).unwrap();
        let b = replicate(&c, &v, &v).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 3);
        assert_eq!(a.iter().map(|r| r.0.seed).collect::<Vec<_>>(), vec![7, 8, 9]);
    }

    #[test]
    fn zero_generations_returns_initial_best() {
        let mut c = small(3);
        c.generations = 0;
        let v = view(30);
        let r = evolve(&c, &v).unwrap();
        assert_eq!(r.generation_log.len(), 1);
        let pop = init_population(&c, 2, &mut ChaCha8Rng::seed_from_u64(3));
        let best = pop
            .iter()
            .map(|t| fitness(t, &v, FitnessMetric::Rmse))
            .fold(f64::INFINITY, f64::min);
        assert_eq!(r.train_fitness, best);
    }

    #[test]
    fn elitism_keeps_best_non_increasing() {
        let x: Vec<f64> = (0..60).map(|t| ((t * 7) % 17) as f64).collect();
        let y: Vec<f64> = (0..60).map(|t| 0.3 * x[t] + 0.7 * x[t.saturating_sub(2)] + 1.3).collect();
        let v = DatasetView::from_columns(vec![x], y).unwrap();
        let mut c = small(11);
        c.generations = 12;
        let r = evolve(&c, &v).unwrap();
        for w in r.generation_log.windows(2) {
            assert!(w[1].best_fitness <= w[0].best_fitness);
        }
        assert_eq!(r.generation_log.last().unwrap().best_fitness, r.train_fitness);
    }

    #[test]
    fn no_lag_config_never_lags() {
        let c = small(5).without_lag();
        let r = replicate(&c, &view(30), &view(30)).unwrap();
        assert!(r.iter().all(|(run, _)| !run.best_tree.uses_op(Op::Lag)));
    }

    #[test]
    fn single_run_summary_has_zero_ci() {
        let mut c = small(2);
        c.runs = 1;
        let r = replicate(&c, &view(30), &view(30)).unwrap();
        let s = crate::metrics::summarize_runs(&[r[0].1], 0.95).unwrap();
        assert_eq!((s.mean_rmse, s.ci_rmse), (r[0].1.rmse, 0.0));
    }

    #[test]
    fn log_csv() {
        let mut buf = Vec::new();
        let log = vec![GenerationStats {
            generation: 0,
            best_fitness: 1.5,
            mean_fitness: 3.0,
            mean_size: 7.25,
        }];
        write_generation_log(&log, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "generation,best_fitness,mean_fitness,mean_size\n0,1.5,3,7.25\n"
        );
    }

    proptest! {
        #[test]
        fn smaller_of_equal_fitness_wins(
            f in 0.0f64..10.0,
            small in 1usize..20,
            extra in 1usize..20,
            others in prop::collection::vec((0.0f64..10.0, 1usize..40), 0..10),
            seed in 0u64..1000,
        ) {
            let mut fit = vec![f, f];
            let mut sizes = vec![small + extra, small];
            for (of, os) in others {
                fit.push(of);
                sizes.push(os);
            }
            let c = parsimony_coefficient(&fit, &sizes);
            let adjusted: Vec<f64> = fit.iter().zip(&sizes).map(|(f, s)| f + c.abs() * *s as f64).collect();
            // Restrict the tournament to the two tied individuals.
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let winner = tournament_select(&adjusted[..2], &sizes[..2], 2, &mut rng);
            prop_assert_eq!(winner, 1);
        }
    }
}
