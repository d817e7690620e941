//! Command-line front end.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::canvas::{tiles_to_pgm, write_file, EnvState};
use crate::chaining::{
    chain, comparison_csv, evaluate_repertoires, preference_prior, random_repertoire, summarize,
    Candidate, ChainConfig, ClassFilterSet, RepertoireKind,
};
use crate::config::RunConfig;
use crate::dataset::{build_class_filters, load_trajectories, synthetic_trajectories};
use crate::error::{Error, Result};
use crate::learner::{beta_sweep, train_with_checkpoints, Trainer};
use crate::repertoire_file::RepertoireFile;
use crate::rng::derive_seed;

#[derive(Debug, Parser)]
#[command(
    name = "motor-fep",
    version,
    about = "Learn and chain drawing primitives by free-energy minimisation"
)]
pub struct Cli {
    /// Configuration file (key=value lines).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a repertoire and write it with its training log.
    Train,
    /// Chain primitives to draw one letter.
    Chain(ChainArgs),
    /// Compare learned and random repertoires over sizes and letters.
    Compare(CompareArgs),
    /// Train across beta values and report the final winner distance.
    SweepBeta(SweepArgs),
    /// Write the Kohonen and class filters of a repertoire as PGM strips.
    RenderFilters(FileArg),
    /// Print a repertoire file as text.
    Dump(FileArg),
}

#[derive(Debug, Args)]
pub struct FileArg {
    #[arg(long)]
    pub repertoire: PathBuf,
}

#[derive(Debug, Args)]
pub struct ChainArgs {
    #[arg(long)]
    pub repertoire: PathBuf,
    #[arg(long)]
    pub letter: String,
    /// Number of primitives to chain; defaults to `chain.m`.
    #[arg(short = 'M')]
    pub m: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Directory holding `learned_n<size>_r<repeat>.bin`; defaults to the
    /// output directory.
    #[arg(long)]
    pub repertoire: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub letters: Option<Vec<String>>,
    #[arg(short = 'M')]
    pub m: Option<usize>,
    /// Train learned repertoires that are missing instead of failing.
    #[arg(long)]
    pub train: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, value_delimiter = ',')]
    pub betas: Option<Vec<f64>>,
    #[arg(long)]
    pub repeats: Option<usize>,
}

/// Parse arguments and run; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.output_dir = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = resolve_config(&cli)?;
    match cli.command {
        Command::Train => cmd_train(&cfg),
        Command::Chain(a) => cmd_chain(&cfg, &a),
        Command::Compare(a) => cmd_compare(&cfg, &a),
        Command::SweepBeta(a) => cmd_sweep_beta(&cfg, &a),
        Command::RenderFilters(a) => cmd_render_filters(&cfg, &a.repertoire),
        Command::Dump(a) => {
            print!("{}", RepertoireFile::load(&a.repertoire)?.dump());
            Ok(())
        }
    }
}

/// Letter filters from the configured trajectory file, or from the
/// synthetic glyphs when none is set.
pub fn class_filters(cfg: &RunConfig) -> Result<ClassFilterSet> {
    let trajs = match &cfg.dataset_path {
        Some(p) => load_trajectories(p, cfg.dataset_format)?,
        None => synthetic_trajectories(
            &cfg.dataset_labels,
            cfg.dataset_per_letter,
            cfg.dataset_seed,
        )?,
    };
    build_class_filters(&trajs, &cfg.dataset_labels, cfg.eps)
}

fn file_from_trainer(
    cfg: &RunConfig,
    trainer: &Trainer,
    filters: &ClassFilterSet,
) -> RepertoireFile {
    RepertoireFile {
        config: cfg.clone(),
        weights: trainer.motor.weights.clone(),
        signals: trainer.repertoire.signals.clone(),
        map: Some(trainer.map.clone()),
        filters: Some(filters.clone()),
    }
}

/// Train with `cfg` and return the repertoire file plus the log CSV.
pub fn train_repertoire(
    cfg: &RunConfig,
    filters: &ClassFilterSet,
) -> Result<(RepertoireFile, String)> {
    let tc = cfg.train_config()?;
    let res = cfg.reservoir_config();
    let arm = cfg.arm_config()?;
    let every = cfg.checkpoint_every;
    let progress = (cfg.episodes / 10).max(1);
    let step = if every > 0 {
        every.min(progress)
    } else {
        progress
    };
    let out = train_with_checkpoints(&tc, &res, &arm, cfg.n, cfg.seed, step, |e, t| {
        log::info!("episode {e}/{}", cfg.episodes);
        if every > 0 && e % every == 0 {
            let path = cfg.output_dir.join(format!("checkpoint_{e}.bin"));
            file_from_trainer(cfg, t, filters).save(&path)?;
        }
        Ok(())
    })?;
    let file = RepertoireFile {
        config: cfg.clone(),
        weights: out.motor.weights,
        signals: out.repertoire.signals,
        map: Some(out.map),
        filters: Some(filters.clone()),
    };
    Ok((file, out.log.to_csv(&cfg.hash())))
}

fn cmd_train(cfg: &RunConfig) -> Result<()> {
    let filters = class_filters(cfg)?;
    let (file, log) = train_repertoire(cfg, &filters)?;
    let dir = &cfg.output_dir;
    file.save(&dir.join("repertoire.bin"))?;
    write_file(&dir.join("train_log.csv"), log.as_bytes())?;
    write_filter_strips(&file, dir)?;
    println!("wrote {}", dir.join("repertoire.bin").display());
    Ok(())
}

fn write_filter_strips(file: &RepertoireFile, dir: &Path) -> Result<()> {
    if let Some(map) = &file.map {
        write_file(
            &dir.join("kohonen_filters.pgm"),
            &tiles_to_pgm(map.filters()),
        )?;
    }
    if let Some(f) = &file.filters {
        write_file(
            &dir.join("class_filters.pgm"),
            &tiles_to_pgm(f.filters().iter().map(Vec::as_slice)),
        )?;
    }
    Ok(())
}

fn cmd_render_filters(cfg: &RunConfig, path: &Path) -> Result<()> {
    let file = RepertoireFile::load(path)?;
    if file.map.is_none() && file.filters.is_none() {
        return Err(Error::Format(format!(
            "{} holds no filters",
            path.display()
        )));
    }
    write_filter_strips(&file, &cfg.output_dir)
}

fn stored_filters(file: &RepertoireFile, path: &Path) -> Result<ClassFilterSet> {
    file.filters
        .clone()
        .ok_or_else(|| Error::Format(format!("{} holds no class filters", path.display())))
}

fn cmd_chain(cfg: &RunConfig, a: &ChainArgs) -> Result<()> {
    let file = RepertoireFile::load(&a.repertoire)?;
    let filters = stored_filters(&file, &a.repertoire)?;
    let m = a.m.unwrap_or(cfg.chain_m);
    let mut chain_cfg = ChainConfig::for_target(&filters, &a.letter, m)?;
    let target = filters.index_of(&a.letter).expect("checked by for_target");
    chain_cfg.prior = preference_prior(filters.len(), target, cfg.target_preference)?;
    chain_cfg.ambiguity_sign = cfg.ambiguity_sign;

    let motor = file.motor()?;
    let rep = file.repertoire()?;
    let mut env = EnvState::new(&motor.arm);
    let res = chain(&mut env, &motor, &rep, &filters, &chain_cfg)?;

    let hash = cfg.hash();
    let mut table = format!("# config_hash={hash}\nslot,candidate,efe,selected\n");
    for (slot, (t, &k)) in res.tables.iter().zip(&res.chosen).enumerate() {
        for (c, g) in t.iter().enumerate() {
            let _ = writeln!(table, "{slot},{c},{g},{}", u8::from(c == k));
        }
    }
    let mut summary = format!("# config_hash={hash}\nletter,m,chosen,final_complexity");
    for l in filters.labels() {
        let _ = write!(summary, ",q_{l}");
    }
    let chosen: Vec<String> = res.chosen.iter().map(|k| k.to_string()).collect();
    let _ = write!(
        summary,
        "\n{},{m},{},{}",
        a.letter,
        chosen.join(" "),
        res.final_complexity
    );
    for q in res.final_q.probs() {
        let _ = write!(summary, ",{q}");
    }
    summary.push('\n');

    let dir = &cfg.output_dir;
    write_file(
        &dir.join(format!("chain_{}.csv", a.letter)),
        table.as_bytes(),
    )?;
    write_file(
        &dir.join(format!("chain_{}_summary.csv", a.letter)),
        summary.as_bytes(),
    )?;
    write_file(
        &dir.join(format!("chain_{}.pgm", a.letter)),
        &env.canvas.to_pgm(),
    )?;
    println!("final_complexity {}", res.final_complexity);
    Ok(())
}

pub fn learned_file_name(size: usize, repeat: usize) -> String {
    format!("learned_n{size}_r{repeat}.bin")
}

/// Configuration used for the learned repertoire of one comparison cell.
pub fn compare_run_config(cfg: &RunConfig, size: usize, repeat: usize) -> RunConfig {
    let mut c = cfg.clone();
    c.n = size;
    c.seed = derive_seed(cfg.seed, repeat as u64);
    if cfg.compare_episodes_per_primitive > 0 {
        c.episodes = cfg.compare_episodes_per_primitive * size;
    }
    c.checkpoint_every = 0;
    c
}

fn cmd_compare(cfg: &RunConfig, a: &CompareArgs) -> Result<()> {
    let sizes = a.sizes.clone().unwrap_or_else(|| cfg.compare_sizes.clone());
    let repeats = a.repeats.unwrap_or(cfg.compare_repeats);
    let letters = a.letters.clone().unwrap_or_else(|| cfg.letters.clone());
    let m = a.m.unwrap_or(cfg.chain_m);
    let dir = a
        .repertoire
        .clone()
        .unwrap_or_else(|| cfg.output_dir.clone());
    if sizes.is_empty() || sizes.contains(&0) || repeats == 0 {
        return Err(Error::Usage(
            "compare needs sizes >= 1 and repeats >= 1".into(),
        ));
    }
    let filters = class_filters(cfg)?;
    for l in &letters {
        ChainConfig::for_target(&filters, l, m)?;
    }

    let mut learned = Vec::new();
    for &size in &sizes {
        for r in 0..repeats {
            let path = dir.join(learned_file_name(size, r));
            let file = if !path.exists() && a.train {
                let rc = compare_run_config(cfg, size, r);
                log::info!("training {}", path.display());
                let (file, _) = train_repertoire(&rc, &filters)?;
                file.save(&path)?;
                file
            } else {
                RepertoireFile::load(&path)?
            };
            if file.signals.len() != size {
                return Err(Error::Config(format!(
                    "{} holds {} primitives, expected {size}",
                    path.display(),
                    file.signals.len()
                )));
            }
            learned.push(file);
        }
    }

    let mut loaded = Vec::new();
    for file in &learned {
        let motor = file.motor()?;
        let rep = file.repertoire()?;
        let random = random_repertoire(rep.len(), &rep.reservoir, &rep.arm, rep.seed)?;
        loaded.push((file.config.seed, motor, rep, random));
    }
    let mut candidates = Vec::new();
    for (seed, motor, rep, random) in &loaded {
        candidates.push(Candidate {
            kind: RepertoireKind::Learned,
            seed: *seed,
            motor,
            repertoire: rep,
        });
        candidates.push(Candidate {
            kind: RepertoireKind::Random,
            seed: *seed,
            motor,
            repertoire: random,
        });
    }
    let rows = evaluate_repertoires(&candidates, &filters, &letters, m, cfg.ambiguity_sign)?;
    write_file(
        &cfg.output_dir.join("compare.csv"),
        comparison_csv(&rows, &cfg.hash()).as_bytes(),
    )?;
    for (size, kind, mean) in summarize(&rows) {
        println!("{size} {} {mean}", kind.as_str());
    }
    Ok(())
}

fn cmd_sweep_beta(cfg: &RunConfig, a: &SweepArgs) -> Result<()> {
    let betas = a.betas.clone().unwrap_or_else(|| cfg.sweep_betas.clone());
    let repeats = a.repeats.unwrap_or(cfg.sweep_repeats);
    if betas.is_empty() || repeats == 0 {
        return Err(Error::Usage(
            "sweep-beta needs at least one beta and one repeat".into(),
        ));
    }
    let seeds: Vec<u64> = (0..repeats as u64)
        .map(|r| derive_seed(cfg.seed, r))
        .collect();
    let rows = beta_sweep(
        &betas,
        &cfg.train_config()?,
        &cfg.reservoir_config(),
        &cfg.arm_config()?,
        cfg.n,
        &seeds,
    )?;
    let mut csv = format!("# config_hash={}\nbeta,mean_distance\n", cfg.hash());
    for r in &rows {
        let _ = writeln!(csv, "{},{}", r.beta, r.mean_distance);
    }
    write_file(&cfg.output_dir.join("beta_sweep.csv"), csv.as_bytes())?;
    print!(
        "{}",
        csv.lines()
            .skip(1)
            .map(|l| format!("{l}\n"))
            .collect::<String>()
    );
    Ok(())
}
