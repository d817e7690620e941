//! Run configuration: a strict `key=value` text format with dotted section
//! prefixes. Unknown or repeated keys are errors.
//!
//! Schedule breakpoints are written `episode:value`, comma separated. An
//! episode written with an `E` suffix (`0.625E`) is a fraction of
//! `train.episodes`.

use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::canvas::ArmConfig;
use crate::dataset::CoordFormat;
use crate::error::{Error, Result};
use crate::free_energy::{AmbiguitySign, LikelihoodParams, PriorDistance};
use crate::kohonen::{Neighborhood, UpdateRule};
use crate::learner::{Schedule, TrainConfig};
use crate::reservoir::ReservoirConfig;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum At {
    Episode(f64),
    Fraction(f64),
}

/// Schedule whose breakpoints may be relative to the episode count.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleSpec(pub Vec<(At, f64)>);

impl ScheduleSpec {
    pub fn resolve(&self, episodes: usize) -> Result<Schedule> {
        let e = episodes as f64;
        Schedule::new(
            self.0
                .iter()
                .map(|&(at, v)| match at {
                    At::Episode(x) => (x, v),
                    At::Fraction(f) => (f * e, v),
                })
                .collect(),
        )
    }
}

impl FromStr for ScheduleSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let mut pts = Vec::new();
        for part in s.split(',') {
            let (at, v) = part
                .split_once(':')
                .ok_or_else(|| format!("breakpoint '{part}' is not 'episode:value'"))?;
            let at = at.trim();
            let at = match at.strip_suffix('E') {
                Some(f) => At::Fraction(parse_f64(f)?),
                None => At::Episode(parse_f64(at)?),
            };
            pts.push((at, parse_f64(v.trim())?));
        }
        Ok(Self(pts))
    }
}

impl fmt::Display for ScheduleSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (at, v)) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            match at {
                At::Episode(x) => write!(f, "{x}:{v}")?,
                At::Fraction(x) => write!(f, "{x}E:{v}")?,
            }
        }
        Ok(())
    }
}

fn parse_f64(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| format!("'{s}' is not a number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("'{s}' is not finite"))
    }
}

fn parse_list<T: FromStr>(s: &str) -> std::result::Result<Vec<T>, String> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| format!("bad list entry '{p}'"))
        })
        .collect()
}

fn join<T: fmt::Display>(xs: &[T]) -> String {
    xs.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Seeds the reservoir weights and every training stream.
    pub seed: u64,
    pub reservoir: ReservoirConfig,
    pub arm_l1: f64,
    pub arm_l2: f64,
    pub arm_base: [f64; 2],
    pub arm_gain: f64,
    pub lambda_k: f64,
    pub kernel: Neighborhood,
    pub update_rule: UpdateRule,
    pub kohonen_schedule: ScheduleSpec,
    pub n: usize,
    pub episodes: usize,
    pub lambda: f64,
    pub search_schedule: ScheduleSpec,
    pub beta: f64,
    pub train_kohonen: bool,
    pub prior_distance: PriorDistance,
    pub checkpoint_every: usize,
    pub eps: f64,
    pub chain_m: usize,
    pub target_preference: f64,
    pub ambiguity_sign: AmbiguitySign,
    pub letters: Vec<String>,
    /// Trajectory file; the built-in synthetic glyphs are used when unset.
    pub dataset_path: Option<PathBuf>,
    pub dataset_format: CoordFormat,
    pub dataset_per_letter: usize,
    pub dataset_labels: Vec<String>,
    /// Seed of the synthetic glyph generator.
    pub dataset_seed: u64,
    pub compare_sizes: Vec<usize>,
    pub compare_repeats: usize,
    /// Episodes per primitive when training comparison repertoires; 0 keeps
    /// `train.episodes`.
    pub compare_episodes_per_primitive: usize,
    pub sweep_betas: Vec<f64>,
    pub sweep_repeats: usize,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let labels: Vec<String> = ["c", "h", "i", "s", "r"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        Self {
            seed: 0,
            reservoir: ReservoirConfig::default(),
            arm_l1: 0.5,
            arm_l2: 0.5,
            arm_base: [0.5, 0.0],
            arm_gain: 0.02,
            lambda_k: 0.01,
            kernel: Neighborhood::Gaussian,
            update_rule: UpdateRule::Convex,
            kohonen_schedule: "0:10,0.625E:2,1E:2".parse().expect("valid"),
            n: 50,
            episodes: 20_000,
            lambda: 0.01,
            search_schedule: "0:2,0.625E:2,1E:0.1".parse().expect("valid"),
            beta: 8.0,
            train_kohonen: true,
            prior_distance: PriorDistance::Cyclic,
            checkpoint_every: 0,
            eps: 1e-3,
            chain_m: 5,
            target_preference: 0.96,
            ambiguity_sign: AmbiguitySign::Plus,
            letters: vec!["c".into(), "s".into()],
            dataset_path: None,
            dataset_format: CoordFormat::Positions,
            dataset_per_letter: 70,
            dataset_labels: labels,
            dataset_seed: 0,
            compare_sizes: vec![10, 20],
            compare_repeats: 3,
            compare_episodes_per_primitive: 0,
            sweep_betas: vec![0.03125, 0.0625, 0.125, 0.25, 0.5, 1.0],
            sweep_repeats: 3,
            output_dir: PathBuf::from("out"),
        }
    }
}

fn word<T: Copy + PartialEq>(table: &[(&'static str, T)], v: T) -> &'static str {
    table
        .iter()
        .find(|(_, t)| *t == v)
        .map(|(w, _)| *w)
        .unwrap_or("?")
}

const KERNELS: &[(&str, Neighborhood)] = &[
    ("gaussian", Neighborhood::Gaussian),
    ("laplacian", Neighborhood::Laplacian),
];
const RULES: &[(&str, UpdateRule)] = &[
    ("convex", UpdateRule::Convex),
    ("paper-literal", UpdateRule::PaperLiteral),
];
const DISTANCES: &[(&str, PriorDistance)] = &[
    ("cyclic", PriorDistance::Cyclic),
    ("linear", PriorDistance::Linear),
];
const SIGNS: &[(&str, AmbiguitySign)] = &[
    ("plus", AmbiguitySign::Plus),
    ("minus", AmbiguitySign::Minus),
];

fn pick<T: Copy>(table: &[(&str, T)], s: &str) -> std::result::Result<T, String> {
    table
        .iter()
        .find(|(w, _)| *w == s)
        .map(|(_, t)| *t)
        .ok_or_else(|| {
            let names: Vec<&str> = table.iter().map(|(w, _)| *w).collect();
            format!("'{s}' is not one of {}", names.join("|"))
        })
}

fn parse_bool(s: &str) -> std::result::Result<bool, String> {
    match s {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("'{s}' is not true|false")),
    }
}

fn num<T: FromStr>(s: &str) -> std::result::Result<T, String> {
    s.parse()
        .map_err(|_| format!("'{s}' is not a valid number"))
}

fn float(s: &str) -> std::result::Result<f64, String> {
    parse_f64(s)
}

impl RunConfig {
    fn set(&mut self, key: &str, v: &str) -> std::result::Result<(), String> {
        match key {
            "seed" => self.seed = num(v)?,
            "reservoir.n_r" => self.reservoir.n_r = num(v)?,
            "reservoir.tau" => self.reservoir.tau = float(v)?,
            "reservoir.p_r" => self.reservoir.p_r = float(v)?,
            "reservoir.sigma_r_sq" => self.reservoir.sigma_r_sq = float(v)?,
            "reservoir.n_o" => self.reservoir.n_o = num(v)?,
            "reservoir.sigma_o_sq" => self.reservoir.sigma_o_sq = float(v)?,
            "reservoir.t_steps" => self.reservoir.t_steps = num(v)?,
            "arm.l1" => self.arm_l1 = float(v)?,
            "arm.l2" => self.arm_l2 = float(v)?,
            "arm.base_x" => self.arm_base[0] = float(v)?,
            "arm.base_y" => self.arm_base[1] = float(v)?,
            "arm.gain" => self.arm_gain = float(v)?,
            "kohonen.lambda_k" => self.lambda_k = float(v)?,
            "kohonen.kernel" => self.kernel = pick(KERNELS, v)?,
            "kohonen.update_rule" => self.update_rule = pick(RULES, v)?,
            "kohonen.schedule" => self.kohonen_schedule = v.parse()?,
            "train.n" => self.n = num(v)?,
            "train.episodes" => self.episodes = num(v)?,
            "train.lambda" => self.lambda = float(v)?,
            "train.search_schedule" => self.search_schedule = v.parse()?,
            "train.beta" => self.beta = float(v)?,
            "train.train_kohonen" => self.train_kohonen = parse_bool(v)?,
            "train.prior_distance" => self.prior_distance = pick(DISTANCES, v)?,
            "train.checkpoint_every" => self.checkpoint_every = num(v)?,
            "likelihood.eps" => self.eps = float(v)?,
            "chain.m" => self.chain_m = num(v)?,
            "chain.target_preference" => self.target_preference = float(v)?,
            "chain.ambiguity_sign" => self.ambiguity_sign = pick(SIGNS, v)?,
            "chain.letters" => self.letters = parse_list(v)?,
            "dataset.path" => {
                self.dataset_path = if v.is_empty() {
                    None
                } else {
                    Some(PathBuf::from(v))
                }
            }
            "dataset.format" => {
                self.dataset_format = v.parse().map_err(|e: Error| e.to_string())?
            }
            "dataset.per_letter" => self.dataset_per_letter = num(v)?,
            "dataset.labels" => self.dataset_labels = parse_list(v)?,
            "dataset.seed" => self.dataset_seed = num(v)?,
            "compare.sizes" => self.compare_sizes = parse_list(v)?,
            "compare.repeats" => self.compare_repeats = num(v)?,
            "compare.episodes_per_primitive" => self.compare_episodes_per_primitive = num(v)?,
            "sweep.betas" => self.sweep_betas = parse_list(v)?,
            "sweep.repeats" => self.sweep_repeats = num(v)?,
            "output.dir" => self.output_dir = PathBuf::from(v),
            _ => return Err(format!("unknown key '{key}'")),
        }
        Ok(())
    }

    /// Overlay `key=value` lines on the defaults.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen: Vec<String> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| Error::Parse {
                path: origin.to_path_buf(),
                line: idx + 1,
                msg,
            };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key=value, got '{line}'")))?;
            let (k, v) = (k.trim(), v.trim());
            if seen.iter().any(|s| s == k) {
                return Err(err(format!("key '{k}' given twice")));
            }
            cfg.set(k, v).map_err(|m| err(format!("{k}: {m}")))?;
            seen.push(k.to_string());
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn validate(&self) -> Result<()> {
        self.reservoir_config().validate()?;
        self.arm_config()?;
        self.train_config()?.validate()?;
        if self.n == 0 {
            return Err(Error::Config("train.n must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.target_preference) {
            return Err(Error::Config(
                "chain.target_preference outside [0, 1]".into(),
            ));
        }
        if self.dataset_labels.is_empty() {
            return Err(Error::Config("dataset.labels is empty".into()));
        }
        for l in &self.letters {
            if !self.dataset_labels.contains(l) {
                return Err(Error::Config(format!(
                    "chain letter '{l}' is not among dataset.labels"
                )));
            }
        }
        if self.compare_sizes.contains(&0) {
            return Err(Error::Config("compare.sizes entries must be >= 1".into()));
        }
        if self.sweep_betas.iter().any(|b| !(*b > 0.0)) {
            return Err(Error::Config("sweep.betas entries must be > 0".into()));
        }
        Ok(())
    }

    pub fn reservoir_config(&self) -> ReservoirConfig {
        ReservoirConfig {
            seed: self.seed,
            ..self.reservoir.clone()
        }
    }

    pub fn arm_config(&self) -> Result<ArmConfig> {
        ArmConfig::centered(self.arm_l1, self.arm_l2, self.arm_base, self.arm_gain)
    }

    pub fn likelihood(&self) -> LikelihoodParams {
        LikelihoodParams { eps: self.eps }
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        Ok(TrainConfig {
            episodes: self.episodes,
            lambda: self.lambda,
            search_schedule: self.search_schedule.resolve(self.episodes)?,
            kohonen_schedule: self.kohonen_schedule.resolve(self.episodes)?,
            beta: self.beta,
            train_kohonen: self.train_kohonen,
            lambda_k: self.lambda_k,
            kernel: self.kernel,
            update_rule: self.update_rule,
            prior_distance: self.prior_distance,
            likelihood: self.likelihood(),
        })
    }

    /// Every key in a fixed order; parsing the result gives back `self`.
    pub fn to_text(&self) -> String {
        let r = &self.reservoir;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k}={v}");
        };
        kv("seed", self.seed.to_string());
        kv("reservoir.n_r", r.n_r.to_string());
        kv("reservoir.tau", r.tau.to_string());
        kv("reservoir.p_r", r.p_r.to_string());
        kv("reservoir.sigma_r_sq", r.sigma_r_sq.to_string());
        kv("reservoir.n_o", r.n_o.to_string());
        kv("reservoir.sigma_o_sq", r.sigma_o_sq.to_string());
        kv("reservoir.t_steps", r.t_steps.to_string());
        kv("arm.l1", self.arm_l1.to_string());
        kv("arm.l2", self.arm_l2.to_string());
        kv("arm.base_x", self.arm_base[0].to_string());
        kv("arm.base_y", self.arm_base[1].to_string());
        kv("arm.gain", self.arm_gain.to_string());
        kv("kohonen.lambda_k", self.lambda_k.to_string());
        kv("kohonen.kernel", word(KERNELS, self.kernel).into());
        kv("kohonen.update_rule", word(RULES, self.update_rule).into());
        kv("kohonen.schedule", self.kohonen_schedule.to_string());
        kv("train.n", self.n.to_string());
        kv("train.episodes", self.episodes.to_string());
        kv("train.lambda", self.lambda.to_string());
        kv("train.search_schedule", self.search_schedule.to_string());
        kv("train.beta", self.beta.to_string());
        kv("train.train_kohonen", self.train_kohonen.to_string());
        kv(
            "train.prior_distance",
            word(DISTANCES, self.prior_distance).into(),
        );
        kv("train.checkpoint_every", self.checkpoint_every.to_string());
        kv("likelihood.eps", self.eps.to_string());
        kv("chain.m", self.chain_m.to_string());
        kv(
            "chain.target_preference",
            self.target_preference.to_string(),
        );
        kv(
            "chain.ambiguity_sign",
            word(SIGNS, self.ambiguity_sign).into(),
        );
        kv("chain.letters", self.letters.join(","));
        kv(
            "dataset.path",
            self.dataset_path
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default(),
        );
        kv(
            "dataset.format",
            match self.dataset_format {
                CoordFormat::Positions => "positions".into(),
                CoordFormat::Velocities => "velocities".into(),
            },
        );
        kv("dataset.per_letter", self.dataset_per_letter.to_string());
        kv("dataset.labels", self.dataset_labels.join(","));
        kv("dataset.seed", self.dataset_seed.to_string());
        kv("compare.sizes", join(&self.compare_sizes));
        kv("compare.repeats", self.compare_repeats.to_string());
        kv(
            "compare.episodes_per_primitive",
            self.compare_episodes_per_primitive.to_string(),
        );
        kv("sweep.betas", join(&self.sweep_betas));
        kv("sweep.repeats", self.sweep_repeats.to_string());
        kv("output.dir", self.output_dir.display().to_string());
        s
    }

    /// First 16 hex digits of the SHA-256 of [`RunConfig::to_text`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}
