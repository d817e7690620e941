//! Chaining primitives into letters by expected-free-energy planning.

use rayon::prelude::*;

use crate::canvas::{EnvSnapshot, EnvState, Observation};
use crate::error::{check_len, Error, Result};
use crate::free_energy::{
    bernoulli_entropy, expected_free_energy, kl_divergence, log_likelihood, AmbiguitySign,
    Categorical, LikelihoodParams,
};
use crate::learner::Repertoire;
use crate::motor::MotorSystem;
use crate::reservoir::ReservoirConfig;

/// Class-mean letter images with their entropies.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassFilterSet {
    labels: Vec<String>,
    filters: Vec<Vec<f64>>,
    entropies: Vec<f64>,
    eps: f64,
}

impl ClassFilterSet {
    /// Clips every filter to `[eps, 1 - eps]` and caches its entropy.
    pub fn new(labels: Vec<String>, filters: Vec<Vec<f64>>, eps: f64) -> Result<Self> {
        LikelihoodParams { eps }.validate()?;
        check_len("class filters", labels.len(), filters.len())?;
        if labels.is_empty() {
            return Err(Error::Config("class filter set is empty".into()));
        }
        let d = filters[0].len();
        let mut clipped = Vec::with_capacity(filters.len());
        for f in filters {
            check_len("class filter", d, f.len())?;
            if f.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric("class filter has non-finite entries".into()));
            }
            clipped.push(
                f.into_iter()
                    .map(|v| v.clamp(eps, 1.0 - eps))
                    .collect::<Vec<_>>(),
            );
        }
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(Error::Config(format!("duplicate class label '{l}'")));
            }
        }
        let entropies = clipped.iter().map(|f| bernoulli_entropy(f)).collect();
        Ok(Self {
            labels,
            filters: clipped,
            entropies,
            eps,
        })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn filter(&self, i: usize) -> &[f64] {
        &self.filters[i]
    }

    pub fn filters(&self) -> &[Vec<f64>] {
        &self.filters
    }

    pub fn entropies(&self) -> &[f64] {
        &self.entropies
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.filters[0].len()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

/// Preference `target_mass` on `target`, the rest spread evenly.
pub fn preference_prior(n_labels: usize, target: usize, target_mass: f64) -> Result<Categorical> {
    if target >= n_labels {
        return Err(Error::Config(format!(
            "target class {target} out of range for {n_labels} labels"
        )));
    }
    if !(0.0..=1.0).contains(&target_mass) {
        return Err(Error::Config(format!(
            "target preference {target_mass} not in [0, 1]"
        )));
    }
    if n_labels == 1 {
        return Categorical::new(vec![1.0]);
    }
    let rest = (1.0 - target_mass) / (n_labels - 1) as f64;
    let p = (0..n_labels)
        .map(|i| if i == target { target_mass } else { rest })
        .collect();
    Categorical::new(p)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainConfig {
    pub m: usize,
    pub prior: Categorical,
    pub ambiguity_sign: AmbiguitySign,
}

impl ChainConfig {
    /// Preference 0.96 on `target`.
    pub fn for_target(filters: &ClassFilterSet, target: &str, m: usize) -> Result<Self> {
        let idx = filters.index_of(target).ok_or_else(|| {
            Error::Usage(format!(
                "unknown letter '{target}' (available: {})",
                filters.labels().join(",")
            ))
        })?;
        Ok(Self {
            m,
            prior: preference_prior(filters.len(), idx, 0.96)?,
            ambiguity_sign: AmbiguitySign::default(),
        })
    }
}

/// Bayes classifier with a flat class prior over the Bernoulli filters.
pub fn classify(o: &[f64], filters: &ClassFilterSet) -> Result<Categorical> {
    let params = LikelihoodParams { eps: filters.eps };
    let logits = filters
        .filters
        .iter()
        .map(|f| log_likelihood(o, f, &params))
        .collect::<Result<Vec<_>>>()?;
    Categorical::from_log_weights(&logits)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub k: usize,
    pub table: Vec<f64>,
    /// Predicted observation after executing `k`.
    pub predicted: Observation,
}

fn check_prior(filters: &ClassFilterSet, cfg: &ChainConfig) -> Result<()> {
    check_len("prior preferences", filters.len(), cfg.prior.len())
}

/// Score every primitive on a copy of `snapshot` and return the argmin.
pub fn select_primitive(
    snapshot: &EnvSnapshot,
    motor: &MotorSystem,
    rep: &Repertoire,
    filters: &ClassFilterSet,
    cfg: &ChainConfig,
) -> Result<Selection> {
    if rep.is_empty() {
        return Err(Error::Config(
            "cannot select from an empty repertoire".into(),
        ));
    }
    check_prior(filters, cfg)?;
    let scored: Vec<(f64, Observation)> = rep
        .signals
        .par_iter()
        .map(|x| {
            let mut env = snapshot.restore();
            motor.draw(x, &mut env)?;
            let o = env.observe();
            let q = classify(o.values(), filters)?;
            let g = expected_free_energy(&q, &cfg.prior, &filters.entropies, cfg.ambiguity_sign)?;
            if !g.is_finite() {
                return Err(Error::Numeric(format!(
                    "expected free energy not finite: {g}"
                )));
            }
            Ok((g, o))
        })
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (k, (g, _)) in scored.iter().enumerate() {
        if *g < scored[best].0 {
            best = k;
        }
    }
    let table = scored.iter().map(|(g, _)| *g).collect();
    let predicted = scored
        .into_iter()
        .nth(best)
        .map(|(_, o)| o)
        .expect("non-empty");
    Ok(Selection {
        k: best,
        table,
        predicted,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainResult {
    pub chosen: Vec<usize>,
    pub tables: Vec<Vec<f64>>,
    pub predicted: Vec<Observation>,
    /// Observation after each executed slot.
    pub executed: Vec<Observation>,
    pub final_observation: Observation,
    pub final_q: Categorical,
    pub final_complexity: f64,
}

/// Greedy slot-by-slot chaining on `env`; strokes and joint angles carry
/// over between slots.
pub fn chain(
    env: &mut EnvState,
    motor: &MotorSystem,
    rep: &Repertoire,
    filters: &ClassFilterSet,
    cfg: &ChainConfig,
) -> Result<ChainResult> {
    check_prior(filters, cfg)?;
    let mut out = ChainResult {
        chosen: Vec::with_capacity(cfg.m),
        tables: Vec::with_capacity(cfg.m),
        predicted: Vec::with_capacity(cfg.m),
        executed: Vec::with_capacity(cfg.m),
        final_observation: env.observe(),
        final_q: Categorical::uniform(filters.len()),
        final_complexity: 0.0,
    };
    for _ in 0..cfg.m {
        let sel = select_primitive(&env.snapshot(), motor, rep, filters, cfg)?;
        motor.draw(&rep.signals[sel.k], env)?;
        out.chosen.push(sel.k);
        out.tables.push(sel.table);
        out.predicted.push(sel.predicted);
        out.executed.push(env.observe());
    }
    out.final_observation = env.observe();
    out.final_q = classify(out.final_observation.values(), filters)?;
    out.final_complexity = kl_divergence(&out.final_q, &cfg.prior)?;
    Ok(out)
}

/// Untrained control: signals drawn exactly as the learner initialises them.
pub fn random_repertoire(
    n: usize,
    reservoir: &ReservoirConfig,
    arm: &crate::canvas::ArmConfig,
    seed: u64,
) -> Result<Repertoire> {
    Repertoire::random(n, reservoir, arm, seed)
}

pub const COMPARISON_HEADER: &str = "size,type,letter,seed,final_complexity";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RepertoireKind {
    Learned,
    Random,
}

impl RepertoireKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RepertoireKind::Learned => "learned",
            RepertoireKind::Random => "random",
        }
    }
}

/// One repertoire entering the comparison.
pub struct Candidate<'a> {
    pub kind: RepertoireKind,
    pub seed: u64,
    pub motor: &'a MotorSystem,
    pub repertoire: &'a Repertoire,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub size: usize,
    pub kind: RepertoireKind,
    pub letter: String,
    pub seed: u64,
    pub final_complexity: f64,
}

/// Chain every letter with every candidate repertoire from a blank canvas.
pub fn evaluate_repertoires(
    candidates: &[Candidate<'_>],
    filters: &ClassFilterSet,
    letters: &[String],
    m: usize,
    sign: AmbiguitySign,
) -> Result<Vec<ComparisonRow>> {
    let mut rows = Vec::with_capacity(candidates.len() * letters.len());
    for c in candidates {
        for letter in letters {
            let mut cfg = ChainConfig::for_target(filters, letter, m)?;
            cfg.ambiguity_sign = sign;
            let mut env = EnvState::new(&c.motor.arm);
            let res = chain(&mut env, c.motor, c.repertoire, filters, &cfg)?;
            rows.push(ComparisonRow {
                size: c.repertoire.len(),
                kind: c.kind,
                letter: letter.clone(),
                seed: c.seed,
                final_complexity: res.final_complexity,
            });
        }
    }
    Ok(rows)
}

/// Mean final complexity per `(size, kind)` in order of first appearance.
pub fn summarize(rows: &[ComparisonRow]) -> Vec<(usize, RepertoireKind, f64)> {
    let mut acc: Vec<(usize, RepertoireKind, f64, usize)> = Vec::new();
    for r in rows {
        match acc.iter_mut().find(|a| a.0 == r.size && a.1 == r.kind) {
            Some(a) => {
                a.2 += r.final_complexity;
                a.3 += 1;
            }
            None => acc.push((r.size, r.kind, r.final_complexity, 1)),
        }
    }
    acc.into_iter()
        .map(|(s, k, sum, n)| (s, k, sum / n as f64))
        .collect()
}

pub fn comparison_csv(rows: &[ComparisonRow], config_hash: &str) -> String {
    let mut s = format!("# config_hash={config_hash}\n{COMPARISON_HEADER}\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            r.size,
            r.kind.as_str(),
            r.letter,
            r.seed,
            r.final_complexity
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::canvas::{ArmConfig, PIXELS};

    fn toy_filters() -> ClassFilterSet {
        // four classes, each owning a disjoint block of 8 pixels in a 32-pixel image
        let filters = (0..4)
            .map(|c| {
                (0..32)
                    .map(|p| if p / 8 == c { 1.0 } else { 0.0 })
                    .collect()
            })
            .collect();
        ClassFilterSet::new(
            vec!["a".into(), "b".into(), "c".into(), "d".into()],
            filters,
            1e-3,
        )
        .unwrap()
    }

    #[test]
    fn classify_identical_filters_is_uniform() {
        let f = vec![vec![0.3; 16]; 3];
        let set = ClassFilterSet::new(vec!["x".into(), "y".into(), "z".into()], f, 1e-3).unwrap();
        let q = classify(&[1.0; 16], &set).unwrap();
        for p in q.probs() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn classify_matching_image() {
        let set = toy_filters();
        let o: Vec<f64> = (0..32)
            .map(|p| if p / 8 == 2 { 1.0 } else { 0.0 })
            .collect();
        let q = classify(&o, &set).unwrap();
        assert!(q.probs()[2] > 0.99);
    }

    #[test]
    fn blank_goes_to_lightest_filter() {
        let filters = vec![vec![0.2; 10], vec![0.05; 10], vec![0.4; 10]];
        let set =
            ClassFilterSet::new(vec!["a".into(), "b".into(), "c".into()], filters, 1e-3).unwrap();
        let q = classify(&[0.0; 10], &set).unwrap();
        assert_eq!(q.argmax(), 1);
    }

    #[test]
    fn preference_prior_layout() {
        let p = preference_prior(5, 3, 0.96).unwrap();
        assert_eq!(p.probs()[3], 0.96);
        assert!((p.probs()[0] - 0.01).abs() < 1e-15);
        assert!(preference_prior(5, 5, 0.96).is_err());
        let q = Categorical::new(vec![1.0, 0.0]).unwrap();
        let p = preference_prior(2, 0, 0.96).unwrap();
        assert!((kl_divergence(&q, &p).unwrap() - 0.0408).abs() < 1e-4);
    }

    #[test]
    fn filter_set_validation() {
        assert!(ClassFilterSet::new(vec![], vec![], 1e-3).is_err());
        assert!(
            ClassFilterSet::new(vec!["a".into()], vec![vec![0.5; 3], vec![0.5; 3]], 1e-3).is_err()
        );
        assert!(
            ClassFilterSet::new(vec!["a".into(), "a".into()], vec![vec![0.5; 3]; 2], 1e-3).is_err()
        );
        let s = ClassFilterSet::new(vec!["a".into()], vec![vec![0.0, 1.0]], 1e-3).unwrap();
        assert_eq!(s.filter(0), &[1e-3, 1.0 - 1e-3]);
        assert!((s.entropies()[0] - bernoulli_entropy(s.filter(0))).abs() == 0.0);
    }

    fn setup(n: usize) -> (MotorSystem, Repertoire, ClassFilterSet) {
        let res = ReservoirConfig {
            seed: 3,
            ..Default::default()
        };
        let arm = ArmConfig::default();
        let motor = MotorSystem::new(res.clone(), arm.clone()).unwrap();
        let rep = Repertoire::random(n, &res, &arm, 9).unwrap();
        let filters = (0..3)
            .map(|c| {
                (0..PIXELS)
                    .map(|p| 0.05 + 0.1 * ((p + c * 997) % 7) as f64 / 7.0)
                    .collect()
            })
            .collect();
        let set =
            ClassFilterSet::new(vec!["a".into(), "b".into(), "c".into()], filters, 1e-3).unwrap();
        (motor, rep, set)
    }

    #[test]
    fn single_primitive_always_selected() {
        let (motor, rep, set) = setup(1);
        let cfg = ChainConfig::for_target(&set, "b", 1).unwrap();
        let env = EnvState::new(&motor.arm);
        let sel = select_primitive(&env.snapshot(), &motor, &rep, &set, &cfg).unwrap();
        assert_eq!(sel.k, 0);
        assert_eq!(sel.table.len(), 1);
    }

    #[test]
    fn chain_zero_slots() {
        let (motor, rep, set) = setup(3);
        let cfg = ChainConfig::for_target(&set, "a", 0).unwrap();
        let mut env = EnvState::new(&motor.arm);
        let r = chain(&mut env, &motor, &rep, &set, &cfg).unwrap();
        assert!(r.chosen.is_empty());
        let q = classify(Observation::blank(PIXELS).values(), &set).unwrap();
        assert_eq!(r.final_complexity, kl_divergence(&q, &cfg.prior).unwrap());
    }

    #[test]
    fn chain_is_replayable_and_consistent() {
        let (motor, rep, set) = setup(4);
        let cfg = ChainConfig::for_target(&set, "c", 3).unwrap();
        let mut e1 = EnvState::new(&motor.arm);
        let mut e2 = EnvState::new(&motor.arm);
        let r1 = chain(&mut e1, &motor, &rep, &set, &cfg).unwrap();
        let r2 = chain(&mut e2, &motor, &rep, &set, &cfg).unwrap();
        assert_eq!(r1, r2);
        assert_eq!(e1, e2);
        assert_eq!(r1.predicted, r1.executed);
        assert!(r1.tables.iter().all(|t| t.len() == 4));
        for (k, t) in r1.chosen.iter().zip(&r1.tables) {
            assert!(t.iter().all(|g| t[*k] <= *g));
        }
    }

    #[test]
    fn unknown_letter_lists_labels() {
        let (_, _, set) = setup(1);
        let err = ChainConfig::for_target(&set, "q", 1).unwrap_err();
        assert!(matches!(err, Error::Usage(ref m) if m.contains("a,b,c")));
    }

    #[test]
    fn comparison_control_and_summary() {
        let (motor, rep, set) = setup(3);
        let letters = vec!["a".to_string(), "c".to_string()];
        let cands = [
            Candidate {
                kind: RepertoireKind::Learned,
                seed: 1,
                motor: &motor,
                repertoire: &rep,
            },
            Candidate {
                kind: RepertoireKind::Random,
                seed: 1,
                motor: &motor,
                repertoire: &rep,
            },
        ];
        let rows = evaluate_repertoires(&cands, &set, &letters, 2, AmbiguitySign::Plus).unwrap();
        assert_eq!(rows.len(), 4);
        let s = summarize(&rows);
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].2, s[1].2);
        let csv = comparison_csv(&rows, "abc");
        assert!(csv.starts_with("# config_hash=abc\nsize,type,letter,seed,final_complexity\n"));
        assert_eq!(csv.lines().count(), 6);
    }
}
