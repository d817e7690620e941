//! One-dimensional cyclic self-organising map over binary images.
//!
//! Each row of the weight matrix is a filter with entries in `[eps, 1 - eps]`
//! that doubles as the Bernoulli parameter vector of its discrete state.

use crate::error::{check_len, Error, Result};

/// Lattice distance on a ring of `n` units.
pub fn cyclic_distance(i: usize, j: usize, n: usize) -> usize {
    let d = i.abs_diff(j);
    d.min(n - d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Neighborhood {
    /// `exp(-d^2 / (2 sigma^2))`
    #[default]
    Gaussian,
    /// `exp(-d / sigma)`
    Laplacian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UpdateRule {
    /// Per-row convex step: `W[i] <- (1 - lambda N_i) W[i] + lambda N_i o`.
    #[default]
    Convex,
    /// Whole-matrix decay: `W <- (1 - lambda) W + lambda N (.) o`.
    PaperLiteral,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KohonenParams {
    pub lambda_k: f64,
    pub sigma_k_sq: f64,
    pub kernel: Neighborhood,
    pub rule: UpdateRule,
}

impl KohonenParams {
    pub fn new(lambda_k: f64, sigma_k_sq: f64) -> Self {
        Self {
            lambda_k,
            sigma_k_sq,
            kernel: Neighborhood::default(),
            rule: UpdateRule::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_k >= 0.0 && self.lambda_k <= 1.0) {
            return Err(Error::Config(format!(
                "kohonen: lambda_k={} outside [0, 1]",
                self.lambda_k
            )));
        }
        if !(self.sigma_k_sq > 0.0) || !self.sigma_k_sq.is_finite() {
            return Err(Error::Config(format!(
                "kohonen: sigma_k_sq={} must be > 0",
                self.sigma_k_sq
            )));
        }
        Ok(())
    }
}

/// Neighbourhood weights around the winner, maximal (1) at `i_w`.
pub fn neighborhood(i_w: usize, n: usize, sigma_k_sq: f64, kernel: Neighborhood) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let d = cyclic_distance(i, i_w, n) as f64;
            if d == 0.0 {
                return 1.0;
            }
            match kernel {
                Neighborhood::Gaussian => (-d * d / (2.0 * sigma_k_sq)).exp(),
                Neighborhood::Laplacian => (-d / sigma_k_sq.sqrt()).exp(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct KohonenMap {
    n: usize,
    d: usize,
    eps: f64,
    weights: Vec<f64>,
}

impl KohonenMap {
    /// Filters drawn uniformly in `[0.25, 0.75]`.
    pub fn random(n: usize, d: usize, eps: f64, rng: &mut impl rand::Rng) -> Result<Self> {
        let weights = (0..n * d).map(|_| rng.random_range(0.25..=0.75)).collect();
        Self::from_weights(n, d, eps, weights)
    }

    /// Build from a row-major `n x d` matrix; entries are clipped to
    /// `[eps, 1 - eps]`.
    pub fn from_weights(n: usize, d: usize, eps: f64, mut weights: Vec<f64>) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::Config("kohonen: n and d must be >= 1".into()));
        }
        if !(eps > 0.0 && eps < 0.5) {
            return Err(Error::Config(format!(
                "kohonen: eps={eps} outside (0, 0.5)"
            )));
        }
        check_len("kohonen weights", n * d, weights.len())?;
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Numeric("kohonen: non-finite filter entry".into()));
        }
        for w in &mut weights {
            *w = w.clamp(eps, 1.0 - eps);
        }
        Ok(Self { n, d, eps, weights })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn filter(&self, i: usize) -> &[f64] {
        &self.weights[i * self.d..(i + 1) * self.d]
    }

    pub fn filters(&self) -> std::slice::ChunksExact<'_, f64> {
        self.weights.chunks_exact(self.d)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Squared distances from `o` to every filter.
    pub fn distances(&self, o: &[f64]) -> Result<Vec<f64>> {
        check_len("observation", self.d, o.len())?;
        Ok(self
            .filters()
            .map(|f| f.iter().zip(o).map(|(w, x)| (w - x) * (w - x)).sum())
            .collect())
    }

    /// Index of the nearest filter; ties go to the lowest index.
    pub fn winner(&self, o: &[f64]) -> Result<usize> {
        let dist = self.distances(o)?;
        let mut best = 0;
        for (i, &v) in dist.iter().enumerate().skip(1) {
            if v < dist[best] {
                best = i;
            }
        }
        Ok(best)
    }

    pub fn update(&mut self, o: &[f64], i_w: usize, params: &KohonenParams) -> Result<()> {
        check_len("observation", self.d, o.len())?;
        if i_w >= self.n {
            return Err(Error::Shape {
                what: "winner index bound",
                expected: self.n,
                actual: i_w,
            });
        }
        let nb = neighborhood(i_w, self.n, params.sigma_k_sq, params.kernel);
        let (lo, hi) = (self.eps, 1.0 - self.eps);
        let lambda = params.lambda_k;
        for (row, &n_i) in self.weights.chunks_exact_mut(self.d).zip(&nb) {
            let (keep, gain) = match params.rule {
                UpdateRule::Convex => (1.0 - lambda * n_i, lambda * n_i),
                UpdateRule::PaperLiteral => (1.0 - lambda, lambda * n_i),
            };
            for (w, &x) in row.iter_mut().zip(o) {
                *w = (keep * *w + gain * x).clamp(lo, hi);
            }
        }
        Ok(())
    }
}
