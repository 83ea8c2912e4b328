//! Genetic-algorithm calibration of GHR and IDM parameters against
//! closed-loop spacing error.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bench::rollout_mse;
use crate::error::{Error, Result};
use crate::events::CarFollowingEvent;
use crate::models::{GhrParams, IdmParams};
use crate::policy::{AccelPolicy, GhrModel, IdmModel, ModelHandle};
use crate::sim::rollout;

/// Fitness added per collided event.
pub const COLLISION_PENALTY: f64 = 1e6;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitnessAggregate {
    /// Mean of per-event MSEs.
    #[default]
    PerEvent,
    /// Squared errors pooled over every compared step.
    Pooled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GAConfig {
    pub population_size: usize,
    pub generations: usize,
    pub tournament_k: usize,
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    pub mutation_sigma_frac: f64,
    pub elitism: usize,
    pub seed: u64,
    pub aggregate: FitnessAggregate,
}

impl Default for GAConfig {
    fn default() -> Self {
        GAConfig {
            population_size: 100,
            generations: 200,
            tournament_k: 3,
            crossover_rate: 0.9,
            mutation_rate: 0.1,
            mutation_sigma_frac: 0.1,
            elitism: 2,
            seed: 0,
            aggregate: FitnessAggregate::PerEvent,
        }
    }
}

impl GAConfig {
    pub fn validate(&self) -> Result<()> {
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if !prob(self.crossover_rate) || !prob(self.mutation_rate) {
            return Err(Error::Config("GA rates must lie in [0, 1]".into()));
        }
        if self.population_size < 2 || self.elitism >= self.population_size {
            return Err(Error::Config(format!(
                "population {} must be at least 2 and exceed elitism {}",
                self.population_size, self.elitism
            )));
        }
        if self.tournament_k == 0 || !(self.mutation_sigma_frac >= 0.0) {
            return Err(Error::Config("tournament_k must be positive and mutation sigma non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelFamily {
    Ghr,
    Idm,
}

impl ModelFamily {
    pub fn gene_names(self) -> &'static [&'static str] {
        match self {
            ModelFamily::Ghr => &["c", "m_exp", "l_exp", "reaction_time_s"],
            ModelFamily::Idm => &["a0_mps2", "b_mps2", "v_des_mps", "t_des_s", "s0_m", "lambda"],
        }
    }

    /// Builds the policy a gene vector encodes; GHR reaction times snap to whole steps.
    pub fn decode(self, genes: &[f64], dt_s: f64) -> Result<ModelHandle> {
        if genes.len() != self.gene_names().len() {
            return Err(Error::ShapeMismatch(format!(
                "{} genes for a {}-gene family",
                genes.len(),
                self.gene_names().len()
            )));
        }
        Ok(match self {
            ModelFamily::Ghr => {
                let p = GhrParams {
                    c: genes[0],
                    m_exp: genes[1],
                    l_exp: genes[2],
                    reaction_time_s: genes[3],
                };
                ModelHandle::Ghr(GhrModel::new(p.quantized(dt_s), dt_s)?)
            }
            ModelFamily::Idm => ModelHandle::Idm(IdmModel::new(IdmParams {
                a0: genes[0],
                b: genes[1],
                v_des: genes[2],
                t_des: genes[3],
                s0: genes[4],
                lambda: genes[5],
            })?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamBounds {
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

impl ParamBounds {
    pub fn new(low: Vec<f64>, high: Vec<f64>) -> Result<Self> {
        let b = ParamBounds { low, high };
        b.validate()?;
        Ok(b)
    }

    pub fn default_for(family: ModelFamily) -> Self {
        match family {
            ModelFamily::Idm => ParamBounds {
                low: vec![0.1, 0.1, 1.0, 0.1, 0.1, 1.0],
                high: vec![5.0, 5.0, 45.0, 5.0, 10.0, 10.0],
            },
            ModelFamily::Ghr => ParamBounds {
                low: vec![-10.0, -2.0, -1.0, 0.0],
                high: vec![10.0, 2.0, 4.0, 3.0],
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.low.len() != self.high.len() || self.low.is_empty() {
            return Err(Error::Config("bounds need matching nonempty low/high".into()));
        }
        if let Some(i) = (0..self.low.len()).find(|&i| !(self.low[i] < self.high[i])) {
            return Err(Error::Config(format!(
                "gene {i}: low {} is not below high {}",
                self.low[i], self.high[i]
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.low.len()
    }

    pub fn contains(&self, genes: &[f64]) -> bool {
        genes.len() == self.dim() && genes.iter().enumerate().all(|(i, g)| *g >= self.low[i] && *g <= self.high[i])
    }

    fn clip(&self, genes: &mut [f64]) {
        for (i, g) in genes.iter_mut().enumerate() {
            *g = g.clamp(self.low[i], self.high[i]);
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.dim()).map(|i| rng.random_range(self.low[i]..=self.high[i])).collect()
    }
}

/// Closed-loop spacing error of `policy` over `events`, plus
/// [`COLLISION_PENALTY`] for each collided event.
pub fn fitness(policy: &dyn AccelPolicy, events: &[CarFollowingEvent], aggregate: FitnessAggregate) -> Result<f64> {
    if events.is_empty() {
        return Err(Error::Empty("calibration events"));
    }
    let (mut sum, mut steps, mut penalty) = (0.0, 0usize, 0.0);
    for e in events {
        let r = rollout(policy, e)?;
        let mse = rollout_mse(&r, e)?;
        match aggregate {
            FitnessAggregate::PerEvent => sum += mse,
            FitnessAggregate::Pooled => {
                sum += mse * r.spacing_sim_m.len() as f64;
                steps += r.spacing_sim_m.len();
            }
        }
        if r.collided {
            penalty += COLLISION_PENALTY;
        }
    }
    Ok(match aggregate {
        FitnessAggregate::PerEvent => (sum + penalty) / events.len() as f64,
        FitnessAggregate::Pooled => sum / steps as f64 + penalty / events.len() as f64,
    })
}

/// Fitness of a gene vector; out-of-bounds or unusable genes score +∞.
pub fn gene_fitness(
    family: ModelFamily,
    genes: &[f64],
    bounds: &ParamBounds,
    events: &[CarFollowingEvent],
    aggregate: FitnessAggregate,
) -> f64 {
    if !bounds.contains(genes) || events.is_empty() {
        return f64::INFINITY;
    }
    family
        .decode(genes, events[0].dt_s)
        .and_then(|m| fitness(&m, events, aggregate))
        .ok()
        .filter(|f| f.is_finite())
        .unwrap_or(f64::INFINITY)
}

fn tournament<R: Rng + ?Sized>(fitnesses: &[f64], k: usize, rng: &mut R) -> usize {
    let mut best = rng.random_range(0..fitnesses.len());
    for _ in 1..k {
        let c = rng.random_range(0..fitnesses.len());
        if fitnesses[c] < fitnesses[best] {
            best = c;
        }
    }
    best
}

/// Indices sorted by fitness, ties and NaN broken by position.
fn ranked(fitnesses: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..fitnesses.len()).collect();
    idx.sort_by(|&a, &b| fitnesses[a].total_cmp(&fitnesses[b]).then(a.cmp(&b)));
    idx
}

/// Produces the next population: elites copied, the rest bred by
/// tournament selection, BLX-0.5 crossover and Gaussian mutation.
pub fn evolve_generation<R: Rng + ?Sized>(
    population: &[Vec<f64>],
    fitnesses: &[f64],
    bounds: &ParamBounds,
    cfg: &GAConfig,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    if population.len() != fitnesses.len() || population.is_empty() {
        return Err(Error::ShapeMismatch("population and fitness lengths differ".into()));
    }
    let n = population.len();
    let mut next: Vec<Vec<f64>> = ranked(fitnesses)
        .into_iter()
        .take(cfg.elitism.min(n))
        .map(|i| population[i].clone())
        .collect();
    let widths: Vec<f64> = (0..bounds.dim()).map(|i| bounds.high[i] - bounds.low[i]).collect();
    while next.len() < n {
        let mut a = population[tournament(fitnesses, cfg.tournament_k, rng)].clone();
        let mut b = population[tournament(fitnesses, cfg.tournament_k, rng)].clone();
        if rng.random::<f64>() < cfg.crossover_rate {
            for i in 0..a.len() {
                let (lo, hi) = (a[i].min(b[i]), a[i].max(b[i]));
                let d = 0.5 * (hi - lo);
                let (lo, hi) = (lo - d, hi + d);
                if hi > lo {
                    a[i] = rng.random_range(lo..hi);
                    b[i] = rng.random_range(lo..hi);
                }
            }
        }
        for child in [&mut a, &mut b] {
            for (i, g) in child.iter_mut().enumerate() {
                if rng.random::<f64>() < cfg.mutation_rate {
                    let sigma = cfg.mutation_sigma_frac * widths[i];
                    if sigma > 0.0 {
                        let noise = Normal::new(0.0, sigma).map_err(|e| Error::Config(e.to_string()))?;
                        *g += noise.sample(rng);
                    }
                }
            }
            bounds.clip(child);
        }
        next.push(a);
        if next.len() < n {
            next.push(b);
        }
    }
    Ok(next)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub family: ModelFamily,
    pub gene_names: Vec<String>,
    pub best_genes: Vec<f64>,
    pub best_fitness: f64,
    pub model: ModelHandle,
    pub bounds: ParamBounds,
    pub config: GAConfig,
    /// Best-so-far fitness after each generation.
    pub trace: Vec<f64>,
}

impl CalibrationResult {
    pub fn write_trace_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["generation", "best_fitness"])?;
        for (g, f) in self.trace.iter().enumerate() {
            w.write_record([g.to_string(), f.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<trace>", e))?;
        Ok(())
    }

    pub fn save_trace_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_trace_csv(f)
    }
}

/// Runs the GA with an arbitrary objective over gene vectors.
pub fn minimize<F>(objective: F, bounds: &ParamBounds, cfg: &GAConfig) -> Result<(Vec<f64>, f64, Vec<f64>)>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    cfg.validate()?;
    bounds.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut population: Vec<Vec<f64>> = (0..cfg.population_size).map(|_| bounds.sample(&mut rng)).collect();
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut trace = Vec::with_capacity(cfg.generations);
    for generation in 0..cfg.generations.max(1) {
        let fit: Vec<f64> = population.par_iter().map(|g| objective(g)).collect();
        let top = ranked(&fit)[0];
        if best.as_ref().is_none_or(|(_, f)| fit[top] < *f) {
            best = Some((population[top].clone(), fit[top]));
        }
        let best_f = best.as_ref().map(|b| b.1).unwrap_or(f64::INFINITY);
        log::debug!("generation {generation}: best {best_f:.6}");
        trace.push(best_f);
        if generation + 1 < cfg.generations {
            population = evolve_generation(&population, &fit, bounds, cfg, &mut rng)?;
        }
    }
    let (genes, f) = best.expect("at least one generation ran");
    Ok((genes, f, trace))
}

/// Calibrates one model family on `train_events`.
pub fn calibrate(
    family: ModelFamily,
    train_events: &[CarFollowingEvent],
    bounds: &ParamBounds,
    cfg: &GAConfig,
) -> Result<CalibrationResult> {
    if train_events.is_empty() {
        return Err(Error::Empty("calibration events"));
    }
    if bounds.dim() != family.gene_names().len() {
        return Err(Error::Config(format!(
            "{:?} needs {} bounds, got {}",
            family,
            family.gene_names().len(),
            bounds.dim()
        )));
    }
    let (best_genes, best_fitness, trace) = minimize(
        |g| gene_fitness(family, g, bounds, train_events, cfg.aggregate),
        bounds,
        cfg,
    )?;
    if !best_fitness.is_finite() {
        return Err(Error::Diverged("no individual produced a finite fitness".into()));
    }
    Ok(CalibrationResult {
        family,
        gene_names: family.gene_names().iter().map(|s| s.to_string()).collect(),
        model: family.decode(&best_genes, train_events[0].dt_s)?,
        best_genes,
        best_fitness,
        bounds: bounds.clone(),
        config: cfg.clone(),
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{synthesize_set, LeaderProfile, SynthSetSpec};

    fn sphere_bounds() -> ParamBounds {
        ParamBounds::new(vec![-5.0; 4], vec![5.0; 4]).unwrap()
    }

    fn sphere(g: &[f64]) -> f64 {
        g.iter().map(|x| (x - 1.0).powi(2)).sum()
    }

    #[test]
    fn sphere_converges() {
        let cfg = GAConfig {
            generations: 100,
            seed: 11,
            ..GAConfig::default()
        };
        let (_, best, trace) = minimize(sphere, &sphere_bounds(), &cfg).unwrap();
        assert!(best < 1e-2, "best {best}");
        assert_eq!(trace.len(), 100);
        assert!(trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn seeded_runs_match() {
        let cfg = GAConfig {
            generations: 20,
            population_size: 30,
            seed: 4,
            ..GAConfig::default()
        };
        assert_eq!(
            minimize(sphere, &sphere_bounds(), &cfg).unwrap(),
            minimize(sphere, &sphere_bounds(), &cfg).unwrap()
        );
    }

    #[test]
    fn selection_only_resamples_parents() {
        let bounds = sphere_bounds();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pop: Vec<Vec<f64>> = (0..12).map(|_| bounds.sample(&mut rng)).collect();
        let fit: Vec<f64> = pop.iter().map(|g| sphere(g)).collect();
        let cfg = GAConfig {
            crossover_rate: 0.0,
            mutation_rate: 0.0,
            population_size: 12,
            ..GAConfig::default()
        };
        let next = evolve_generation(&pop, &fit, &bounds, &cfg, &mut rng).unwrap();
        assert_eq!(next.len(), 12);
        assert!(next.iter().all(|g| pop.contains(g)));
        let order = ranked(&fit);
        assert_eq!(next[0], pop[order[0]]);
        assert_eq!(next[1], pop[order[1]]);
    }

    #[test]
    fn genes_stay_in_bounds() {
        let bounds = ParamBounds::default_for(ModelFamily::Idm);
        let cfg = GAConfig {
            population_size: 20,
            mutation_rate: 0.5,
            mutation_sigma_frac: 1.0,
            ..GAConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut pop: Vec<Vec<f64>> = (0..20).map(|_| bounds.sample(&mut rng)).collect();
        for _ in 0..1000 {
            let fit: Vec<f64> = (0..pop.len()).map(|_| rng.random::<f64>()).collect();
            pop = evolve_generation(&pop, &fit, &bounds, &cfg, &mut rng).unwrap();
            assert!(pop.iter().all(|g| bounds.contains(g)));
        }
    }

    #[test]
    fn config_and_bounds_validation() {
        assert!(GAConfig {
            elitism: 100,
            ..GAConfig::default()
        }
        .validate()
        .is_err());
        assert!(GAConfig {
            mutation_rate: 1.5,
            ..GAConfig::default()
        }
        .validate()
        .is_err());
        assert!(ParamBounds::new(vec![1.0], vec![1.0]).is_err());
        let events = synthesize_set(&SynthSetSpec::new(LeaderProfile::from_name("constant").unwrap(), 1, 1)).unwrap();
        let err = calibrate(ModelFamily::Ghr, &events, &ParamBounds::default_for(ModelFamily::Idm), &GAConfig::default());
        assert!(matches!(err, Err(Error::Config(_))));
        assert!(calibrate(ModelFamily::Idm, &[], &ParamBounds::default_for(ModelFamily::Idm), &GAConfig::default()).is_err());
    }

    fn idm_genes(p: &IdmParams) -> Vec<f64> {
        vec![p.a0, p.b, p.v_des, p.t_des, p.s0, p.lambda]
    }

    #[test]
    fn fitness_orders_generator_and_perturbations() {
        let events = synthesize_set(&SynthSetSpec::new(LeaderProfile::from_name("sinusoidal").unwrap(), 5, 8)).unwrap();
        let bounds = ParamBounds::default_for(ModelFamily::Idm);
        let truth = idm_genes(&IdmParams::default());
        let f_true = gene_fitness(ModelFamily::Idm, &truth, &bounds, &events, FitnessAggregate::PerEvent);
        assert!(f_true < 1e-3, "{f_true}");
        let mut doubled = truth.clone();
        doubled[0] *= 2.0;
        let f_doubled = gene_fitness(ModelFamily::Idm, &doubled, &bounds, &events, FitnessAggregate::PerEvent);
        assert!(f_doubled > f_true);
        let mut outside = truth.clone();
        outside[2] = 100.0;
        assert_eq!(
            gene_fitness(ModelFamily::Idm, &outside, &bounds, &events, FitnessAggregate::PerEvent),
            f64::INFINITY
        );
    }

    #[test]
    fn collisions_are_penalised() {
        let events = synthesize_set(&SynthSetSpec::new(LeaderProfile::from_name("stop_and_go").unwrap(), 2, 5)).unwrap();
        // Strong positive gain on the follower-minus-leader stimulus drives into the leader.
        let reckless = GhrModel {
            sign: crate::models::StimulusSign::FollowerMinusLeader,
            ..GhrModel::new(
                GhrParams {
                    c: 10.0,
                    m_exp: 0.0,
                    l_exp: 0.0,
                    reaction_time_s: 0.0,
                },
                0.1,
            )
            .unwrap()
        };
        let f = fitness(&reckless, &events, FitnessAggregate::PerEvent).unwrap();
        assert!(f >= COLLISION_PENALTY, "{f}");
    }
}
