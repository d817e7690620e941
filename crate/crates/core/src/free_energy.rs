//! Variational quantities over discrete hidden states. All logarithms are
//! natural, so every quantity is in nats.

use crate::error::{check_len, Error, Result};
use crate::kohonen::{cyclic_distance, KohonenMap};

/// Floor applied to prior entries before taking their logarithm in a KL.
pub const PRIOR_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LikelihoodParams {
    /// Bernoulli parameters are clipped to `[eps, 1 - eps]`.
    pub eps: f64,
}

impl Default for LikelihoodParams {
    fn default() -> Self {
        Self { eps: 1e-3 }
    }
}

impl LikelihoodParams {
    pub fn validate(&self) -> Result<()> {
        if self.eps > 0.0 && self.eps < 0.5 {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "likelihood: eps={} outside (0, 0.5)",
                self.eps
            )))
        }
    }
}

/// Probability vector over a finite set of states.
#[derive(Debug, Clone, PartialEq)]
pub struct Categorical {
    p: Vec<f64>,
}

impl Categorical {
    pub const SUM_TOLERANCE: f64 = 1e-12;

    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::Config("categorical: no states".into()));
        }
        if p.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Config(format!(
                "categorical: invalid entry in {p:?}"
            )));
        }
        let s: f64 = p.iter().sum();
        if (s - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(Error::Config(format!("categorical: entries sum to {s}")));
        }
        Ok(Self { p })
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            p: vec![1.0 / n as f64; n],
        }
    }

    /// Softmax of unnormalised log-weights.
    pub fn from_log_weights(logits: &[f64]) -> Result<Self> {
        let lse = log_sum_exp(logits);
        if !lse.is_finite() {
            return Err(Error::Numeric(format!(
                "softmax of {} logits is not finite",
                logits.len()
            )));
        }
        let p: Vec<f64> = logits.iter().map(|l| (l - lse).exp()).collect();
        // one renormalisation pass absorbs rounding in exp
        let s: f64 = p.iter().sum();
        Self::new(p.into_iter().map(|v| v / s).collect())
    }

    pub fn probs(&self) -> &[f64] {
        &self.p
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.p.iter().enumerate() {
            if v > self.p[best] {
                best = i;
            }
        }
        best
    }
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Distance used by the prior around the primitive index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PriorDistance {
    Linear,
    #[default]
    Cyclic,
}

impl PriorDistance {
    pub fn between(self, k: usize, i: usize, n: usize) -> usize {
        match self {
            PriorDistance::Linear => k.abs_diff(i),
            PriorDistance::Cyclic => cyclic_distance(k, i, n),
        }
    }
}

/// Log-probabilities of the softmax prior `p(s_i) ~ exp(-beta dist(k, i))`.
pub fn log_prior_over_states(
    k: usize,
    n: usize,
    beta: f64,
    distance: PriorDistance,
) -> Result<Vec<f64>> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::Config(format!("prior: beta={beta} must be > 0")));
    }
    if k >= n {
        return Err(Error::Config(format!(
            "prior: index {k} out of range for {n} states"
        )));
    }
    let logits: Vec<f64> = (0..n)
        .map(|i| -beta * distance.between(k, i, n) as f64)
        .collect();
    let lse = log_sum_exp(&logits);
    Ok(logits.into_iter().map(|l| l - lse).collect())
}

pub fn prior_over_states(
    k: usize,
    n: usize,
    beta: f64,
    distance: PriorDistance,
) -> Result<Categorical> {
    let logits = log_prior_over_states(k, n, beta, distance)?;
    Categorical::from_log_weights(&logits)
}

/// Bernoulli log-likelihood `sum_l o_l ln W_l + (1 - o_l) ln(1 - W_l)`, with
/// `W` clipped to `[eps, 1 - eps]`.
pub fn log_likelihood(o: &[f64], filter: &[f64], params: &LikelihoodParams) -> Result<f64> {
    check_len("filter", o.len(), filter.len())?;
    let (lo, hi) = (params.eps, 1.0 - params.eps);
    Ok(o.iter()
        .zip(filter)
        .map(|(&x, &w)| {
            let w = w.clamp(lo, hi);
            x * w.ln() + (1.0 - x) * (1.0 - w).ln()
        })
        .sum())
}

/// Entropy of independent Bernoulli pixels.
pub fn bernoulli_entropy(filter: &[f64]) -> f64 {
    filter.iter().map(|&w| binary_entropy(w)).sum()
}

fn binary_entropy(w: f64) -> f64 {
    let xlnx = |v: f64| if v > 0.0 { v * v.ln() } else { 0.0 };
    -xlnx(w) - xlnx(1.0 - w)
}

/// `KL(q || p)` with `p` floored at [`PRIOR_FLOOR`].
pub fn kl_divergence(q: &Categorical, p: &Categorical) -> Result<f64> {
    check_len("categorical support", q.len(), p.len())?;
    Ok(q.probs()
        .iter()
        .zip(p.probs())
        .filter(|(&qi, _)| qi > 0.0)
        .map(|(&qi, &pi)| qi * (qi.ln() - pi.max(PRIOR_FLOOR).ln()))
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AmbiguitySign {
    /// Expected entropy is added: ambiguous outcomes are penalised.
    #[default]
    Plus,
    /// Expected entropy is subtracted.
    Minus,
}

impl AmbiguitySign {
    pub fn factor(self) -> f64 {
        match self {
            AmbiguitySign::Plus => 1.0,
            AmbiguitySign::Minus => -1.0,
        }
    }
}

/// `KL(q_k || prior) +/- sum_i q_k(i) H_i` where `H_i` is the entropy of the
/// observation mapping of state `i`.
pub fn expected_free_energy(
    q_k: &Categorical,
    prior: &Categorical,
    entropies: &[f64],
    sign: AmbiguitySign,
) -> Result<f64> {
    check_len("state entropies", q_k.len(), entropies.len())?;
    let kl = kl_divergence(q_k, prior)?;
    let ambiguity: f64 = q_k.probs().iter().zip(entropies).map(|(q, h)| q * h).sum();
    Ok(kl + sign.factor() * ambiguity)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreeEnergyBreakdown {
    pub winner: usize,
    pub complexity: f64,
    pub inaccuracy: f64,
    pub total: f64,
}

/// Free energy of an observation under the map with a one-hot posterior on
/// the winning unit: complexity `-ln p(s_w)` plus inaccuracy `-ln p(o | s_w)`.
pub fn free_energy_f1(
    o: &[f64],
    map: &KohonenMap,
    k: usize,
    beta: f64,
    distance: PriorDistance,
    params: &LikelihoodParams,
) -> Result<FreeEnergyBreakdown> {
    let winner = map.winner(o)?;
    let log_prior = log_prior_over_states(k, map.n(), beta, distance)?;
    let complexity = -log_prior[winner];
    let inaccuracy = -log_likelihood(o, map.filter(winner), params)?;
    let total = complexity + inaccuracy;
    if !total.is_finite() {
        return Err(Error::Numeric(format!(
            "free energy not finite (complexity {complexity}, inaccuracy {inaccuracy})"
        )));
    }
    Ok(FreeEnergyBreakdown {
        winner,
        complexity,
        inaccuracy,
        total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{self, Stream};
    use proptest::prelude::*;
    use rand::Rng;

    const LN2: f64 = std::f64::consts::LN_2;

    #[test]
    fn prior_flat_limit() {
        let p = prior_over_states(3, 10, 1e-8, PriorDistance::Cyclic).unwrap();
        let max = p.probs().iter().copied().fold(f64::MIN, f64::max);
        let min = p.probs().iter().copied().fold(f64::MAX, f64::min);
        assert!(max - min < 1e-6);
    }

    #[test]
    fn prior_hand_normalisation() {
        let p = prior_over_states(1, 3, LN2, PriorDistance::Linear).unwrap();
        for (a, b) in p.probs().iter().zip([0.25, 0.5, 0.25]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn prior_sharp_regime() {
        let p = prior_over_states(17, 50, 8.0, PriorDistance::Cyclic).unwrap();
        assert!(p.probs()[17] > 0.999);
        assert_eq!(p.argmax(), 17);
        let huge = log_prior_over_states(0, 50, 1e3, PriorDistance::Cyclic).unwrap();
        assert!(huge.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn prior_rejects_bad_beta() {
        assert!(prior_over_states(0, 3, 0.0, PriorDistance::Cyclic).is_err());
        assert!(prior_over_states(0, 3, -1.0, PriorDistance::Linear).is_err());
        assert!(prior_over_states(3, 3, 1.0, PriorDistance::Linear).is_err());
    }

    #[test]
    fn linear_and_cyclic_differ_at_the_seam() {
        let lin = prior_over_states(0, 6, 1.0, PriorDistance::Linear).unwrap();
        let cyc = prior_over_states(0, 6, 1.0, PriorDistance::Cyclic).unwrap();
        assert!(cyc.probs()[5] > lin.probs()[5]);
    }

    #[test]
    fn likelihood_cases() {
        let eps = 1e-3;
        let params = LikelihoodParams { eps };
        let o = vec![0.0; 4096];
        let ll = log_likelihood(&o, &vec![eps; 4096], &params).unwrap();
        assert!((ll - 4096.0 * (1.0 - eps).ln()).abs() < 1e-9);
        assert!((ll + 4.098).abs() < 1e-3);

        let mut rng = rng::stream(0, Stream::Dataset);
        let o: Vec<f64> = (0..4096)
            .map(|_| rng.random_bool(0.3) as u8 as f64)
            .collect();
        let half = log_likelihood(&o, &vec![0.5; 4096], &params).unwrap();
        assert!((half + 4096.0 * LN2).abs() < 1e-9);

        // a binary filter is clipped; matching it is the best case
        let best = log_likelihood(&o, &o, &params).unwrap();
        assert!((best - 4096.0 * (1.0 - eps).ln()).abs() < 1e-9);
        let mut flipped = o.clone();
        flipped[0] = 1.0 - flipped[0];
        let worse = log_likelihood(&o, &flipped, &params).unwrap();
        assert!(worse.is_finite() && worse < best);
    }

    #[test]
    fn entropy_cases() {
        assert!((bernoulli_entropy(&vec![0.5; 4096]) - 4096.0 * LN2).abs() < 1e-9);
        assert!((bernoulli_entropy(&vec![0.5; 4096]) - 2839.3).abs() < 0.25);
        let h = binary_entropy(1e-3);
        assert!((h - 0.00791).abs() < 1e-5);
        assert!((bernoulli_entropy(&vec![1e-3; 4096]) - 32.4).abs() < 0.05);
        for delta in [1e-6, 1e-3, 0.1, 0.49] {
            assert!(binary_entropy(0.5 + delta) < binary_entropy(0.5));
            assert!(binary_entropy(0.5 - delta) < binary_entropy(0.5));
        }
        assert_eq!(bernoulli_entropy(&[0.0, 1.0]), 0.0);
    }

    #[test]
    fn kl_and_efe_cases() {
        let p = Categorical::new(vec![0.2, 0.3, 0.5]).unwrap();
        assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
        let h = [7.0; 3];
        let efe = expected_free_energy(&p, &p, &h, AmbiguitySign::Plus).unwrap();
        assert!((efe - 7.0).abs() < 1e-12);
        let efe = expected_free_energy(&p, &p, &h, AmbiguitySign::Minus).unwrap();
        assert!((efe + 7.0).abs() < 1e-12);

        let q = Categorical::new(vec![1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let prior = Categorical::new(vec![0.96, 0.01, 0.01, 0.01, 0.01]).unwrap();
        let kl = kl_divergence(&q, &prior).unwrap();
        assert!((kl + 0.96f64.ln()).abs() < 1e-15);
        assert!((kl - 0.0408).abs() < 1e-4);
    }

    #[test]
    fn kl_handles_zero_prior_mass() {
        let q = Categorical::new(vec![0.5, 0.5]).unwrap();
        let p = Categorical::new(vec![1.0, 0.0]).unwrap();
        let kl = kl_divergence(&q, &p).unwrap();
        assert!(kl.is_finite() && kl > 10.0);
    }

    #[test]
    fn categorical_validation() {
        assert!(Categorical::new(vec![]).is_err());
        assert!(Categorical::new(vec![0.5, 0.6]).is_err());
        assert!(Categorical::new(vec![1.5, -0.5]).is_err());
        assert!(Categorical::new(vec![f64::NAN, 1.0]).is_err());
        let u = Categorical::uniform(7);
        assert!((u.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn f1_matches_hand_composition() {
        let eps = 1e-3;
        let d = 4096;
        // row 0 is the eps filter and wins for a blank observation
        let mut w = vec![eps; d];
        w.extend(vec![0.6; 2 * d]);
        let map = KohonenMap::from_weights(3, d, eps, w).unwrap();
        let o = vec![0.0; d];
        let br = free_energy_f1(
            &o,
            &map,
            1,
            LN2,
            PriorDistance::Linear,
            &LikelihoodParams { eps },
        )
        .unwrap();
        assert_eq!(br.winner, 0);
        let expect = -(0.25f64.ln()) + 4096.0 * (-(1.0 - eps).ln());
        assert!((br.total - expect).abs() < 1e-9);
        assert_eq!(br.total, br.complexity + br.inaccuracy);
    }

    #[test]
    fn f1_complexity_limits() {
        let eps = 1e-3;
        let mut rng = rng::stream(2, Stream::Kohonen);
        let map = KohonenMap::random(5, 16, eps, &mut rng).unwrap();
        let o: Vec<f64> = (0..16).map(|l| (l % 3 == 0) as u8 as f64).collect();
        let params = LikelihoodParams { eps };
        let w = map.winner(&o).unwrap();
        let at_mode = free_energy_f1(&o, &map, w, 2.0, PriorDistance::Cyclic, &params).unwrap();
        let log_p = log_prior_over_states(w, 5, 2.0, PriorDistance::Cyclic).unwrap();
        assert!((at_mode.complexity + log_p[w]).abs() < 1e-15);
        for k in 0..5 {
            let br = free_energy_f1(&o, &map, k, 2.0, PriorDistance::Cyclic, &params).unwrap();
            assert!(br.complexity >= at_mode.complexity);
            let flat = free_energy_f1(&o, &map, k, 1e-10, PriorDistance::Cyclic, &params).unwrap();
            assert!((flat.complexity - 5f64.ln()).abs() < 1e-8);
        }
    }

    proptest! {
        #[test]
        fn gibbs_inequality(a in proptest::collection::vec(0.0f64..1.0, 2..8), seed in 0u64..10_000) {
            let mut rng = rng::stream(seed, Stream::Search);
            let b: Vec<f64> = a.iter().map(|_| rng.random::<f64>()).collect();
            let norm = |v: &[f64]| {
                let s: f64 = v.iter().sum::<f64>() + 1e-9 * v.len() as f64;
                Categorical::new(v.iter().map(|x| (x + 1e-9) / s).collect::<Vec<_>>())
            };
            if let (Ok(q), Ok(p)) = (norm(&a), norm(&b)) {
                prop_assert!(kl_divergence(&q, &p).unwrap() >= -1e-12);
            }
        }

        #[test]
        fn prior_mode_is_k(k in 0usize..20, n in 20usize..60, beta in 1e-3f64..50.0, cyclic in any::<bool>()) {
            let dist = if cyclic { PriorDistance::Cyclic } else { PriorDistance::Linear };
            let p = prior_over_states(k, n, beta, dist).unwrap();
            prop_assert_eq!(p.argmax(), k);
            prop_assert!((p.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
