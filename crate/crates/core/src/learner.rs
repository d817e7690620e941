//! Primitive learning: antithetic random search over activation signals
//! against the free energy of the resulting drawing, with the Kohonen map
//! trained on the same drawings.

use std::fmt::Write as _;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::canvas::{ArmConfig, Observation};
use crate::error::{check_len, Error, Result};
use crate::free_energy::{free_energy_f1, FreeEnergyBreakdown, LikelihoodParams, PriorDistance};
use crate::kohonen::{KohonenMap, KohonenParams, Neighborhood, UpdateRule};
use crate::motor::MotorSystem;
use crate::reservoir::ReservoirConfig;
use crate::rng::{self, Stream};

/// Piecewise-linear function of the episode index with constant
/// extrapolation beyond the first and last breakpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    points: Vec<(f64, f64)>,
}

impl Schedule {
    pub fn new(mut points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Config("schedule: no breakpoints".into()));
        }
        if points.iter().any(|(e, v)| !e.is_finite() || !v.is_finite()) {
            return Err(Error::Config("schedule: non-finite breakpoint".into()));
        }
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(Self { points })
    }

    pub fn constant(v: f64) -> Self {
        Self {
            points: vec![(0.0, v)],
        }
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn eval(&self, e: f64) -> f64 {
        let pts = &self.points;
        if e <= pts[0].0 {
            return pts[0].1;
        }
        for w in pts.windows(2) {
            let ((e0, v0), (e1, v1)) = (w[0], w[1]);
            if e <= e1 {
                if e1 == e0 {
                    return v1;
                }
                return v0 + (v1 - v0) * (e - e0) / (e1 - e0);
            }
        }
        pts[pts.len() - 1].1
    }

    pub fn min_value(&self) -> f64 {
        self.points
            .iter()
            .map(|p| p.1)
            .fold(f64::INFINITY, f64::min)
    }

    /// High plateau until `0.625 E`, then linear decay (search variance).
    pub fn default_search(episodes: usize) -> Self {
        let e = episodes as f64;
        Self {
            points: vec![(0.0, 2.0), (0.625 * e, 2.0), (e, 0.1)],
        }
    }

    /// Linear shrink until `0.625 E`, then constant (Kohonen width).
    pub fn default_kohonen(episodes: usize) -> Self {
        let e = episodes as f64;
        Self {
            points: vec![(0.0, 10.0), (0.625 * e, 2.0), (e, 2.0)],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub episodes: usize,
    /// Random-search step size.
    pub lambda: f64,
    pub search_schedule: Schedule,
    pub kohonen_schedule: Schedule,
    pub beta: f64,
    pub train_kohonen: bool,
    pub lambda_k: f64,
    pub kernel: Neighborhood,
    pub update_rule: UpdateRule,
    pub prior_distance: PriorDistance,
    pub likelihood: LikelihoodParams,
}

impl TrainConfig {
    pub fn with_episodes(episodes: usize) -> Self {
        Self {
            episodes,
            lambda: 0.01,
            search_schedule: Schedule::default_search(episodes),
            kohonen_schedule: Schedule::default_kohonen(episodes),
            beta: 8.0,
            train_kohonen: true,
            lambda_k: 0.01,
            kernel: Neighborhood::Gaussian,
            update_rule: UpdateRule::Convex,
            prior_distance: PriorDistance::Cyclic,
            likelihood: LikelihoodParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("train: {m}")));
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return bad(format!("lambda={} must be > 0", self.lambda));
        }
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return bad(format!("beta={} must be > 0", self.beta));
        }
        if !(self.search_schedule.min_value() > 0.0) {
            return bad("search schedule must stay positive".into());
        }
        if !(self.kohonen_schedule.min_value() > 0.0) {
            return bad("kohonen schedule must stay positive".into());
        }
        KohonenParams::new(self.lambda_k, 1.0).validate()?;
        self.likelihood.validate()
    }

    pub fn kohonen_params(&self, e: usize) -> KohonenParams {
        KohonenParams {
            lambda_k: self.lambda_k,
            sigma_k_sq: self.kohonen_schedule.eval(e as f64),
            kernel: self.kernel,
            rule: self.update_rule,
        }
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::with_episodes(20_000)
    }
}

/// Activation signals plus everything needed to replay them.
#[derive(Debug, Clone, PartialEq)]
pub struct Repertoire {
    pub signals: Vec<Vec<f64>>,
    pub reservoir: ReservoirConfig,
    pub arm: ArmConfig,
    pub seed: u64,
}

impl Repertoire {
    /// `n` signals with entries drawn from `N(0, 1)`.
    pub fn random(
        n: usize,
        reservoir: &ReservoirConfig,
        arm: &ArmConfig,
        seed: u64,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("repertoire: size must be >= 1".into()));
        }
        reservoir.validate()?;
        let mut rng = rng::stream(seed, Stream::Repertoire);
        let signals = (0..n)
            .map(|_| {
                (0..reservoir.n_r)
                    .map(|_| StandardNormal.sample(&mut rng))
                    .collect()
            })
            .collect();
        Ok(Self {
            signals,
            reservoir: reservoir.clone(),
            arm: arm.clone(),
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.signals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signals.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub k: usize,
    pub f_plus: f64,
    pub f_minus: f64,
    /// Mean over the two perturbed rollouts.
    pub complexity: f64,
    /// Mean over the two perturbed rollouts.
    pub inaccuracy: f64,
    /// Winner for the positive perturbation.
    pub winner: usize,
    pub sigma_search: f64,
    pub sigma_kohonen: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<EpisodeRecord>,
}

pub const TRAIN_LOG_HEADER: &str =
    "episode,k,f_plus,f_minus,complexity,inaccuracy,i_w,sigma_search,sigma_kohonen";

impl TrainLog {
    pub fn to_csv(&self, config_hash: &str) -> String {
        let mut s = format!("# config_hash={config_hash}\n{TRAIN_LOG_HEADER}\n");
        for r in &self.records {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                r.episode,
                r.k,
                r.f_plus,
                r.f_minus,
                r.complexity,
                r.inaccuracy,
                r.winner,
                r.sigma_search,
                r.sigma_kohonen
            );
        }
        s
    }

    /// Mean complexity over records `[from, to)`.
    pub fn mean_complexity(&self, from: usize, to: usize) -> f64 {
        let slice = &self.records[from..to];
        slice.iter().map(|r| r.complexity).sum::<f64>() / slice.len() as f64
    }
}

/// `x <- x - lambda (f_plus - f_minus) dx`.
pub fn antithetic_update(x: &mut [f64], dx: &[f64], lambda: f64, f_plus: f64, f_minus: f64) {
    let c = lambda * (f_plus - f_minus);
    for (xi, di) in x.iter_mut().zip(dx) {
        *xi -= c * di;
    }
}

/// Mutable training state: repertoire, map and the search stream.
pub struct Trainer {
    pub motor: MotorSystem,
    pub repertoire: Repertoire,
    pub map: KohonenMap,
    pub cfg: TrainConfig,
    rng: rng::Rng,
}

impl Trainer {
    pub fn new(
        cfg: TrainConfig,
        reservoir: &ReservoirConfig,
        arm: &ArmConfig,
        n: usize,
        seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        let motor = MotorSystem::new(reservoir.clone(), arm.clone())?;
        let repertoire = Repertoire::random(n, reservoir, arm, seed)?;
        let mut krng = rng::stream(seed, Stream::Kohonen);
        let map = KohonenMap::random(n, crate::canvas::PIXELS, cfg.likelihood.eps, &mut krng)?;
        Ok(Self {
            motor,
            repertoire,
            map,
            cfg,
            rng: rng::stream(seed, Stream::Search),
        })
    }

    fn free_energy(&self, o: &Observation, k: usize) -> Result<FreeEnergyBreakdown> {
        free_energy_f1(
            o.values(),
            &self.map,
            k,
            self.cfg.beta,
            self.cfg.prior_distance,
            &self.cfg.likelihood,
        )
    }

    /// Run episode `e`. Free energies use the map as it was before this
    /// episode's Kohonen updates.
    pub fn episode(&mut self, e: usize) -> Result<EpisodeRecord> {
        let n = self.repertoire.len();
        let k = self.rng.random_range(0..n);
        let sigma_search = self.cfg.search_schedule.eval(e as f64);
        let sd = sigma_search.sqrt();
        let dx: Vec<f64> = (0..self.motor.n_r())
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut self.rng);
                sd * z
            })
            .collect();
        self.episode_with(e, k, &dx)
    }

    /// Episode with a given primitive index and perturbation.
    pub fn episode_with(&mut self, e: usize, k: usize, dx: &[f64]) -> Result<EpisodeRecord> {
        check_len("perturbation", self.motor.n_r(), dx.len())?;
        let x = &self.repertoire.signals[k];
        let plus: Vec<f64> = x.iter().zip(dx).map(|(a, b)| a + b).collect();
        let minus: Vec<f64> = x.iter().zip(dx).map(|(a, b)| a - b).collect();
        let (o_plus, o_minus) = rayon::join(
            || self.motor.observe_primitive(&plus),
            || self.motor.observe_primitive(&minus),
        );
        let (o_plus, o_minus) = (o_plus?, o_minus?);
        let sigma_search = self.cfg.search_schedule.eval(e as f64);
        let fp = self.free_energy(&o_plus, k)?;
        let fm = self.free_energy(&o_minus, k)?;

        antithetic_update(
            &mut self.repertoire.signals[k],
            dx,
            self.cfg.lambda,
            fp.total,
            fm.total,
        );
        if self.repertoire.signals[k].iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "activation signal {k} diverged at episode {e}"
            )));
        }

        let kp = self.cfg.kohonen_params(e);
        if self.cfg.train_kohonen {
            for o in [&o_plus, &o_minus] {
                let w = self.map.winner(o.values())?;
                self.map.update(o.values(), w, &kp)?;
            }
        }

        Ok(EpisodeRecord {
            episode: e,
            k,
            f_plus: fp.total,
            f_minus: fm.total,
            complexity: 0.5 * (fp.complexity + fm.complexity),
            inaccuracy: 0.5 * (fp.inaccuracy + fm.inaccuracy),
            winner: fp.winner,
            sigma_search,
            sigma_kohonen: kp.sigma_k_sq,
        })
    }

    /// Free energy of every unperturbed primitive under the current map.
    pub fn evaluate(&self) -> Result<Vec<FreeEnergyBreakdown>> {
        evaluate_repertoire(
            &self.motor,
            &self.repertoire,
            &self.map,
            self.cfg.beta,
            self.cfg.prior_distance,
            &self.cfg.likelihood,
        )
    }
}

pub fn evaluate_repertoire(
    motor: &MotorSystem,
    repertoire: &Repertoire,
    map: &KohonenMap,
    beta: f64,
    distance: PriorDistance,
    likelihood: &LikelihoodParams,
) -> Result<Vec<FreeEnergyBreakdown>> {
    repertoire
        .signals
        .par_iter()
        .enumerate()
        .map(|(k, x)| {
            let o = motor.observe_primitive(x)?;
            free_energy_f1(o.values(), map, k, beta, distance, likelihood)
        })
        .collect()
}

/// Mean lattice distance between each primitive's winner and its index.
pub fn mean_winner_distance(evals: &[FreeEnergyBreakdown]) -> f64 {
    let n = evals.len();
    evals
        .iter()
        .enumerate()
        .map(|(k, b)| crate::kohonen::cyclic_distance(b.winner, k, n) as f64)
        .sum::<f64>()
        / n as f64
}

pub struct TrainOutput {
    pub motor: MotorSystem,
    pub repertoire: Repertoire,
    pub map: KohonenMap,
    pub log: TrainLog,
}

/// Full training run. `checkpoint` is called after every `every` episodes.
pub fn train_with_checkpoints(
    cfg: &TrainConfig,
    reservoir: &ReservoirConfig,
    arm: &ArmConfig,
    n: usize,
    seed: u64,
    every: usize,
    mut checkpoint: impl FnMut(usize, &Trainer) -> Result<()>,
) -> Result<TrainOutput> {
    let mut trainer = Trainer::new(cfg.clone(), reservoir, arm, n, seed)?;
    let mut log = TrainLog::default();
    for e in 0..cfg.episodes {
        log.records.push(trainer.episode(e)?);
        if every > 0 && (e + 1) % every == 0 {
            checkpoint(e + 1, &trainer)?;
        }
    }
    Ok(TrainOutput {
        motor: trainer.motor,
        repertoire: trainer.repertoire,
        map: trainer.map,
        log,
    })
}

pub fn train(
    cfg: &TrainConfig,
    reservoir: &ReservoirConfig,
    arm: &ArmConfig,
    n: usize,
    seed: u64,
) -> Result<TrainOutput> {
    train_with_checkpoints(cfg, reservoir, arm, n, seed, 0, |_, _| Ok(()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BetaRow {
    pub beta: f64,
    pub mean_distance: f64,
    pub per_seed: Vec<f64>,
}

/// Train once per (beta, seed) pair and report the mean final distance
/// between winner and primitive index.
pub fn beta_sweep(
    betas: &[f64],
    cfg: &TrainConfig,
    reservoir: &ReservoirConfig,
    arm: &ArmConfig,
    n: usize,
    seeds: &[u64],
) -> Result<Vec<BetaRow>> {
    if betas.is_empty() || seeds.is_empty() {
        return Err(Error::Config(
            "beta sweep: need at least one beta and one seed".into(),
        ));
    }
    let jobs: Vec<(usize, u64)> = (0..betas.len())
        .flat_map(|b| seeds.iter().map(move |&s| (b, s)))
        .collect();
    let dists: Vec<f64> = jobs
        .par_iter()
        .map(|&(b, seed)| {
            let cfg = TrainConfig {
                beta: betas[b],
                ..cfg.clone()
            };
            let reservoir = ReservoirConfig {
                seed,
                ..reservoir.clone()
            };
            let out = train(&cfg, &reservoir, arm, n, seed)?;
            let evals = evaluate_repertoire(
                &out.motor,
                &out.repertoire,
                &out.map,
                cfg.beta,
                cfg.prior_distance,
                &cfg.likelihood,
            )?;
            Ok(mean_winner_distance(&evals))
        })
        .collect::<Result<_>>()?;
    Ok(betas
        .iter()
        .enumerate()
        .map(|(b, &beta)| {
            let per_seed = dists[b * seeds.len()..(b + 1) * seeds.len()].to_vec();
            BetaRow {
                beta,
                mean_distance: per_seed.iter().sum::<f64>() / per_seed.len() as f64,
                per_seed,
            }
        })
        .collect())
}
