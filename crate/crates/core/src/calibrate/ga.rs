//! Real-coded genetic algorithm: tournament selection, uniform crossover,
//! Gaussian mutation clipped to the bounds, and elitism.
//!
//! The fitness is minimized. Individuals of a generation are evaluated in
//! parallel but collected in population order, so a run is a pure function of
//! its seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Real;

/// One calibrated parameter and its admissible range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gene<T> {
    pub name: String,
    pub lower: T,
    pub upper: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec<T> {
    pub genes: Vec<Gene<T>>,
}

impl<T: Real> ParamSpec<T> {
    pub fn new(genes: impl IntoIterator<Item = (String, T, T)>) -> Result<Self> {
        let spec = Self {
            genes: genes.into_iter().map(|(name, lower, upper)| Gene { name, lower, upper }).collect(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.genes.is_empty() {
            return Err(Error::Config("parameter spec has no genes".into()));
        }
        for g in &self.genes {
            if !(g.lower.is_finite() && g.upper.is_finite() && g.lower < g.upper) {
                return Err(Error::Config(format!("gene `{}`: need finite lower < upper", g.name)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.genes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.genes.is_empty()
    }

    pub fn clip(&self, x: &mut [T]) {
        for (v, g) in x.iter_mut().zip(&self.genes) {
            *v = v.max(g.lower).min(g.upper);
        }
    }

    pub fn contains(&self, x: &[T]) -> bool {
        x.len() == self.genes.len() && x.iter().zip(&self.genes).all(|(v, g)| *v >= g.lower && *v <= g.upper)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaConfig {
    pub population: usize,
    pub generations: usize,
    pub tournament: usize,
    pub crossover_rate: f64,
    /// Per-gene mutation probability.
    pub mutation_rate: f64,
    /// Mutation std. dev. as a fraction of each gene's range.
    pub mutation_sigma: f64,
    pub elitism: usize,
    pub seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population: 50,
            generations: 100,
            tournament: 3,
            crossover_rate: 0.9,
            mutation_rate: 0.1,
            mutation_sigma: 0.1,
            elitism: 2,
            seed: 0,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |p: f64| (0.0..=1.0).contains(&p);
        if self.population < 2 {
            return Err(Error::Config("ga.population must be >= 2".into()));
        }
        if self.tournament == 0 {
            return Err(Error::Config("ga.tournament must be >= 1".into()));
        }
        if !unit(self.crossover_rate) || !unit(self.mutation_rate) {
            return Err(Error::Config("ga rates must lie in [0, 1]".into()));
        }
        if !(self.mutation_sigma >= 0.0 && self.mutation_sigma.is_finite()) {
            return Err(Error::Config("ga.mutation_sigma must be >= 0".into()));
        }
        if self.elitism > self.population {
            return Err(Error::Config("ga.elitism must not exceed ga.population".into()));
        }
        Ok(())
    }
}

/// Best-so-far and population mean fitness after one generation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats<T> {
    pub generation: usize,
    pub best: T,
    pub mean: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaResult<T> {
    pub best: Vec<T>,
    pub best_fitness: T,
    /// Entry 0 describes the initial population.
    pub history: Vec<GenerationStats<T>>,
    pub evaluations: usize,
}

impl<T: Real> GaResult<T> {
    /// `generation,best,mean` rows.
    pub fn history_csv(&self) -> String {
        let mut s = String::from("generation,best,mean\n");
        for h in &self.history {
            s.push_str(&format!("{},{},{}\n", h.generation, h.best, h.mean));
        }
        s
    }
}

/// NaN fitness ranks behind everything else.
fn key<T: Real>(f: T) -> T {
    if f.is_nan() {
        T::infinity()
    } else {
        f
    }
}

fn evaluate<T, F>(pop: &[Vec<T>], fitness: &F) -> Vec<T>
where
    T: Real,
    F: Fn(&[T]) -> T + Sync,
{
    pop.par_iter().map(|x| key(fitness(x))).collect()
}

fn tournament<T: Real>(rng: &mut ChaCha8Rng, fit: &[T], size: usize) -> usize {
    let mut best = rng.gen_range(0..fit.len());
    for _ in 1..size {
        let c = rng.gen_range(0..fit.len());
        if fit[c] < fit[best] || (fit[c] == fit[best] && c < best) {
            best = c;
        }
    }
    best
}

fn summarize<T: Real>(generation: usize, fit: &[T], best_so_far: T) -> GenerationStats<T> {
    let sum = fit.iter().fold(T::zero(), |a, &b| a + b);
    GenerationStats {
        generation,
        best: best_so_far,
        mean: sum / T::from_usize(fit.len()).expect("population size"),
    }
}

/// Minimizes `fitness` over the box of `spec`, starting from a uniform random population.
pub fn run_ga<T, F>(spec: &ParamSpec<T>, cfg: &GaConfig, fitness: F) -> Result<GaResult<T>>
where
    T: Real,
    F: Fn(&[T]) -> T + Sync,
{
    spec.validate()?;
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let initial: Vec<Vec<T>> = (0..cfg.population)
        .map(|_| {
            spec.genes
                .iter()
                .map(|g| g.lower + (g.upper - g.lower) * T::lit(rng.gen::<f64>()))
                .collect()
        })
        .collect();
    evolve(spec, cfg, initial, &mut rng, &fitness)
}

/// Like [`run_ga`] but starts from the given population (clipped to the bounds).
pub fn run_ga_from<T, F>(spec: &ParamSpec<T>, cfg: &GaConfig, initial: Vec<Vec<T>>, fitness: F) -> Result<GaResult<T>>
where
    T: Real,
    F: Fn(&[T]) -> T + Sync,
{
    spec.validate()?;
    cfg.validate()?;
    if initial.len() != cfg.population || initial.iter().any(|x| x.len() != spec.len()) {
        return Err(Error::Config(format!(
            "initial population must hold {} individuals of {} genes",
            cfg.population,
            spec.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    evolve(spec, cfg, initial, &mut rng, &fitness)
}

fn evolve<T, F>(spec: &ParamSpec<T>, cfg: &GaConfig, mut pop: Vec<Vec<T>>, rng: &mut ChaCha8Rng, fitness: &F) -> Result<GaResult<T>>
where
    T: Real,
    F: Fn(&[T]) -> T + Sync,
{
    for x in &mut pop {
        spec.clip(x);
    }
    let mut fit = evaluate(&pop, fitness);
    let mut evaluations = pop.len();
    let argmin = |fit: &[T]| {
        (0..fit.len())
            .min_by(|&a, &b| fit[a].partial_cmp(&fit[b]).expect("keys are never NaN"))
            .expect("non-empty population")
    };
    let i0 = argmin(&fit);
    let mut best = pop[i0].clone();
    let mut best_fit = fit[i0];
    let mut history = vec![summarize(0, &fit, best_fit)];

    for generation in 1..=cfg.generations {
        let mut order: Vec<usize> = (0..pop.len()).collect();
        order.sort_by(|&a, &b| fit[a].partial_cmp(&fit[b]).expect("keys are never NaN"));
        let mut next: Vec<Vec<T>> = order[..cfg.elitism].iter().map(|&i| pop[i].clone()).collect();
        let mut next_fit: Vec<T> = order[..cfg.elitism].iter().map(|&i| fit[i]).collect();
        let mut children = Vec::with_capacity(pop.len() - cfg.elitism);
        while next.len() + children.len() < pop.len() {
            let a = tournament(rng, &fit, cfg.tournament);
            let b = tournament(rng, &fit, cfg.tournament);
            let mut child = pop[a].clone();
            if rng.gen::<f64>() < cfg.crossover_rate {
                for (c, &gb) in child.iter_mut().zip(&pop[b]) {
                    if rng.gen::<bool>() {
                        *c = gb;
                    }
                }
            }
            for (c, g) in child.iter_mut().zip(&spec.genes) {
                if rng.gen::<f64>() < cfg.mutation_rate {
                    let z: f64 = StandardNormal.sample(rng);
                    *c += T::lit(z * cfg.mutation_sigma) * (g.upper - g.lower);
                }
            }
            spec.clip(&mut child);
            children.push(child);
        }
        next_fit.extend(evaluate(&children, fitness));
        evaluations += children.len();
        next.extend(children);
        pop = next;
        fit = next_fit;
        let i = argmin(&fit);
        if fit[i] < best_fit {
            best_fit = fit[i];
            best = pop[i].clone();
        }
        history.push(summarize(generation, &fit, best_fit));
    }
    Ok(GaResult {
        best,
        best_fitness: best_fit,
        history,
        evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec2() -> ParamSpec<f64> {
        ParamSpec::new([("a".to_string(), -1.0, 1.0), ("b".to_string(), 0.0, 2.0)]).unwrap()
    }

    #[test]
    fn rejects_bad_bounds_and_config() {
        assert!(ParamSpec::new([("a".to_string(), 1.0, 1.0)]).is_err());
        let cfg = GaConfig {
            elitism: 60,
            ..GaConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn offspring_stay_inside_bounds() {
        let spec = spec2();
        let cfg = GaConfig {
            population: 20,
            generations: 10,
            mutation_rate: 1.0,
            mutation_sigma: 5.0,
            ..GaConfig::default()
        };
        let seen = std::sync::Mutex::new(Vec::new());
        run_ga(&spec, &cfg, |x: &[f64]| {
            seen.lock().unwrap().push(x.to_vec());
            x[0] * x[0]
        })
        .unwrap();
        assert!(seen.into_inner().unwrap().iter().all(|x| spec.contains(x)));
    }

    #[test]
    fn nan_fitness_never_wins() {
        let spec = spec2();
        let cfg = GaConfig {
            population: 10,
            generations: 5,
            ..GaConfig::default()
        };
        let r = run_ga(&spec, &cfg, |x: &[f64]| if x[0] > 0.0 { f64::NAN } else { -x[0] }).unwrap();
        assert!(r.best_fitness.is_finite());
        assert!(r.best[0] <= 0.0);
    }
}
