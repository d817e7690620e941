//! Fixed random recurrent network with a random tanh readout.
//!
//! The network is never trained. A primitive is encoded entirely by the
//! initial pre-activation `x = u(0)`; running the leaky dynamics for `T`
//! steps and reading out through `tanh(W_o r)` yields the motor commands.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::error::{check_len, Error, Result};
use crate::rng::{self, Stream};

#[derive(Debug, Clone, PartialEq)]
pub struct ReservoirConfig {
    pub n_r: usize,
    /// Time constant in steps.
    pub tau: f64,
    /// Probability that a recurrent coefficient is non-null.
    pub p_r: f64,
    pub sigma_r_sq: f64,
    pub n_o: usize,
    pub sigma_o_sq: f64,
    /// Primitive duration in steps.
    pub t_steps: usize,
    pub seed: u64,
}

impl Default for ReservoirConfig {
    fn default() -> Self {
        Self {
            n_r: 100,
            tau: 10.0,
            p_r: 0.1,
            sigma_r_sq: 1.5,
            n_o: 2,
            sigma_o_sq: 1.0,
            t_steps: 100,
            seed: 0,
        }
    }
}

impl ReservoirConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("reservoir: {m}")));
        if self.n_r < 1 {
            return bad("n_r must be >= 1");
        }
        if !(self.tau >= 1.0) || !self.tau.is_finite() {
            return bad("tau must be >= 1");
        }
        if !(0.0..=1.0).contains(&self.p_r) {
            return bad("p_r must lie in [0, 1]");
        }
        if !(self.sigma_r_sq > 0.0) || !self.sigma_r_sq.is_finite() {
            return bad("sigma_r_sq must be > 0");
        }
        if self.n_o < 1 {
            return bad("n_o must be >= 1");
        }
        if !(self.sigma_o_sq > 0.0) || !self.sigma_o_sq.is_finite() {
            return bad("sigma_o_sq must be > 0");
        }
        if self.t_steps < 1 {
            return bad("t_steps must be >= 1");
        }
        Ok(())
    }
}

/// Square sparse matrix in row-major (row, col, value) triplet form.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    rows: Vec<u32>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl SparseMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            rows: Vec::new(),
            cols: Vec::new(),
            vals: Vec::new(),
        }
    }

    /// Build from triplets. Entries are kept in the given order, which fixes
    /// the floating-point summation order of `mul_vec`.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut m = Self::zeros(n);
        for &(r, c, v) in triplets {
            if r >= n || c >= n {
                return Err(Error::Config(format!(
                    "triplet ({r}, {c}) out of bounds for {n}x{n} matrix"
                )));
            }
            m.push(r, c, v);
        }
        Ok(m)
    }

    pub fn from_dense(n: usize, dense: &[f64]) -> Result<Self> {
        check_len("dense matrix entries", n * n, dense.len())?;
        let mut m = Self::zeros(n);
        for (idx, &v) in dense.iter().enumerate() {
            if v != 0.0 {
                m.push(idx / n, idx % n, v);
            }
        }
        Ok(m)
    }

    fn push(&mut self, r: usize, c: usize, v: f64) {
        self.rows.push(r as u32);
        self.cols.push(c as u32);
        self.vals.push(v);
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.rows
            .iter()
            .zip(&self.cols)
            .zip(&self.vals)
            .map(|((&r, &c), &v)| (r as usize, c as usize, v))
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n * self.n];
        for (r, c, v) in self.triplets() {
            d[r * self.n + c] += v;
        }
        d
    }

    pub fn mul_vec_into(&self, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (r, c, v) in self.triplets() {
            out[r] += v * x[c];
        }
    }

    /// Largest row sum of absolute values.
    pub fn max_abs_row_sum(&self) -> f64 {
        let mut sums = vec![0.0f64; self.n];
        for (r, _, v) in self.triplets() {
            sums[r] += v.abs();
        }
        sums.into_iter().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReservoirWeights {
    pub recurrent: SparseMatrix,
    /// Dense `n_o x n_r` readout, row-major.
    pub readout: Vec<f64>,
    pub n_o: usize,
}

impl ReservoirWeights {
    pub fn from_parts(recurrent: SparseMatrix, readout: Vec<f64>, n_o: usize) -> Result<Self> {
        check_len("readout entries", n_o * recurrent.dim(), readout.len())?;
        Ok(Self {
            recurrent,
            readout,
            n_o,
        })
    }

    pub fn n_r(&self) -> usize {
        self.recurrent.dim()
    }

    fn readout_into(&self, r: &[f64], out: &mut [f64]) {
        let n_r = self.n_r();
        for (o, row) in out.iter_mut().zip(self.readout.chunks_exact(n_r)) {
            let z: f64 = row.iter().zip(r).map(|(w, x)| w * x).sum();
            *o = z.tanh();
        }
    }
}

/// Sample the recurrent and readout weights from the `Weights` stream of
/// `cfg.seed`. Non-null recurrent coefficients follow `N(0, sigma_r^2 / n_r)`,
/// readout coefficients `N(0, sigma_o^2)`.
pub fn init_weights(cfg: &ReservoirConfig) -> Result<ReservoirWeights> {
    cfg.validate()?;
    let mut rng = rng::stream(cfg.seed, Stream::Weights);
    let n = cfg.n_r;
    let rec_dist = Normal::new(0.0, (cfg.sigma_r_sq / n as f64).sqrt())
        .map_err(|e| Error::Config(e.to_string()))?;
    let out_dist =
        Normal::new(0.0, cfg.sigma_o_sq.sqrt()).map_err(|e| Error::Config(e.to_string()))?;

    let mut recurrent = SparseMatrix::zeros(n);
    for r in 0..n {
        for c in 0..n {
            if rng.random::<f64>() < cfg.p_r {
                recurrent.push(r, c, rec_dist.sample(&mut rng));
            }
        }
    }
    let readout = (0..cfg.n_o * n)
        .map(|_| out_dist.sample(&mut rng))
        .collect();
    ReservoirWeights::from_parts(recurrent, readout, cfg.n_o)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReservoirState {
    pub u: Vec<f64>,
    pub r: Vec<f64>,
}

impl ReservoirState {
    /// State with `u = x` and `r = tanh(x)`.
    pub fn from_activation(x: &[f64]) -> Self {
        Self {
            u: x.to_vec(),
            r: x.iter().map(|v| v.tanh()).collect(),
        }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            u: vec![0.0; n],
            r: vec![0.0; n],
        }
    }
}

/// `T x n_o` motor commands, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionSequence {
    data: Vec<f64>,
    dim: usize,
}

impl ActionSequence {
    pub fn new(data: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::Shape {
                what: "action sequence length (multiple of dim)",
                expected: dim,
                actual: data.len(),
            });
        }
        Ok(Self { data, dim })
    }

    pub fn zeros(len: usize, dim: usize) -> Self {
        Self {
            data: vec![0.0; len * dim],
            dim,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// One leaky-integrator update followed by the readout.
pub fn step(
    state: &ReservoirState,
    w: &ReservoirWeights,
    tau: f64,
) -> Result<(ReservoirState, Vec<f64>)> {
    let n = w.n_r();
    check_len("state u", n, state.u.len())?;
    check_len("state r", n, state.r.len())?;
    let mut next = ReservoirState::zeros(n);
    let mut action = vec![0.0; w.n_o];
    step_into(state, w, tau, &mut next, &mut action);
    Ok((next, action))
}

fn step_into(
    state: &ReservoirState,
    w: &ReservoirWeights,
    tau: f64,
    next: &mut ReservoirState,
    action: &mut [f64],
) {
    let leak = 1.0 - 1.0 / tau;
    w.recurrent.mul_vec_into(&state.r, &mut next.u);
    for ((u_next, &u), r_next) in next.u.iter_mut().zip(&state.u).zip(next.r.iter_mut()) {
        *u_next = leak * u + *u_next / tau;
        *r_next = u_next.tanh();
    }
    w.readout_into(&next.r, action);
}

/// Output of [`run_with_trajectory`]: the `T` states after each step.
#[derive(Debug, Clone)]
pub struct Rollout {
    pub actions: ActionSequence,
    pub states: Vec<ReservoirState>,
}

/// Simulate one primitive from activation signal `x`.
pub fn run(x: &[f64], w: &ReservoirWeights, cfg: &ReservoirConfig) -> Result<ActionSequence> {
    run_impl(x, w, cfg, None)
}

pub fn run_with_trajectory(
    x: &[f64],
    w: &ReservoirWeights,
    cfg: &ReservoirConfig,
) -> Result<Rollout> {
    let mut states = Vec::with_capacity(cfg.t_steps);
    let actions = run_impl(x, w, cfg, Some(&mut states))?;
    Ok(Rollout { actions, states })
}

fn run_impl(
    x: &[f64],
    w: &ReservoirWeights,
    cfg: &ReservoirConfig,
    mut keep: Option<&mut Vec<ReservoirState>>,
) -> Result<ActionSequence> {
    let n = w.n_r();
    check_len("activation signal", n, x.len())?;
    let mut cur = ReservoirState::from_activation(x);
    let mut next = ReservoirState::zeros(n);
    let mut data = vec![0.0; cfg.t_steps * w.n_o];
    for a in data.chunks_exact_mut(w.n_o) {
        step_into(&cur, w, cfg.tau, &mut next, a);
        std::mem::swap(&mut cur, &mut next);
        if let Some(states) = keep.as_deref_mut() {
            states.push(cur.clone());
        }
    }
    ActionSequence::new(data, w.n_o)
}
