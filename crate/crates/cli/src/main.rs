//! Command-line front end for the cascading buffet network sampler.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use cibp::data::{self, load_path, mask_bottom_half, parse_mask_csv};
use cibp::experiment::{
    export_feature_maps, fantasize, load_samples, reconstruct, train_on, write_feature_maps, write_images,
    ReconstructionConfig, RunConfig,
};
use cibp::ibp::{drift, poisson_rate, sample_cibp, simulate_width_chain, DEFAULT_DEPTH_CAP};
use cibp::mcmc::{MoveFlags, SweepConfig};
use cibp::random::seeded;
use cibp::{Checkpoint, Dataset, HyperParameters, IbpParams};

/// Environment variable overriding the default output directory.
const OUT_DIR_ENV: &str = "CIBP_OUT_DIR";

#[derive(Parser, Debug)]
#[command(name = "cibp", version, about = "Cascading buffet priors over deep belief network structure")]
struct Cli {
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Worker threads for data-parallel passes (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw network structures from the cascade prior.
    SamplePrior(SamplePriorArgs),
    /// Simulate the layer-width Markov chain.
    SimulateWidths(SimulateWidthsArgs),
    /// Tabulate the expected next width and the drift per width.
    DiagnoseDrift(DriftArgs),
    /// Run the sampler on a dataset, writing thinned checkpoints.
    Train(TrainArgs),
    /// Fill in missing pixels of test images by posterior averaging.
    Reconstruct(ReconstructArgs),
    /// Draw images from the model by ancestral sampling.
    Fantasize(FantasizeArgs),
    /// Summarize a checkpoint and optionally export its feature maps.
    Inspect(InspectArgs),
}

#[derive(Args, Debug)]
struct IbpArgs {
    /// Buffet mass parameter.
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Buffet concentration parameter.
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
}

impl IbpArgs {
    fn params(&self) -> Result<IbpParams> {
        IbpParams::new(self.alpha, self.beta).context("invalid --alpha/--beta")
    }
}

#[derive(Args, Debug)]
struct OutArgs {
    /// Output directory.
    #[arg(long, env = OUT_DIR_ENV, default_value = "cibp-out")]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct SamplePriorArgs {
    /// Number of visible units.
    #[arg(long, default_value_t = 10)]
    k0: usize,
    #[command(flatten)]
    ibp: IbpArgs,
    /// Number of structures to draw.
    #[arg(long, default_value_t = 1)]
    count: usize,
    /// Give up on a draw that is still active at this depth.
    #[arg(long, default_value_t = DEFAULT_DEPTH_CAP)]
    depth_cap: usize,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Debug)]
struct SimulateWidthsArgs {
    /// Initial width.
    #[arg(long, default_value_t = 50)]
    k0: usize,
    #[command(flatten)]
    ibp: IbpArgs,
    /// Number of independent traces.
    #[arg(long, default_value_t = 1)]
    runs: usize,
    /// Longest trace before stopping.
    #[arg(long, default_value_t = DEFAULT_DEPTH_CAP)]
    max_steps: usize,
}

#[derive(Args, Debug)]
struct DriftArgs {
    #[command(flatten)]
    ibp: IbpArgs,
    /// Largest width to tabulate.
    #[arg(long, default_value_t = 20)]
    kmax: usize,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Training data: IDX file, PGM file or directory, or CSV.
    #[arg(long, required_unless_present = "bars", conflicts_with = "bars")]
    data: Option<PathBuf>,
    /// Generate this many 8x8 bars images instead of reading data; 50 more
    /// are saved as a test set.
    #[arg(long)]
    bars: Option<usize>,
    #[arg(long, default_value_t = 1000)]
    sweeps: usize,
    #[arg(long, default_value_t = 500)]
    burn_in: usize,
    #[arg(long, default_value_t = 10)]
    thin: usize,
    /// Sweeps between resumable full-state checkpoints (0 = never).
    #[arg(long, default_value_t = 0)]
    checkpoint_every: usize,
    /// Candidates per multiple-try hidden-state update.
    #[arg(long, default_value_t = 5)]
    mtm: usize,
    #[command(flatten)]
    ibp: IbpArgs,
    /// Keep alpha and beta fixed instead of sampling them.
    #[arg(long)]
    fixed_hypers: bool,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Debug)]
struct ReconstructArgs {
    /// Directory holding `sample_*.ckpt` files.
    #[arg(long)]
    samples: PathBuf,
    /// Training data, used only for the per-pixel mean baseline.
    #[arg(long)]
    train: PathBuf,
    /// Test data.
    #[arg(long)]
    test: PathBuf,
    /// Mask CSV (1 = observed); the bottom half is hidden when omitted.
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Hidden-state sweeps per image and checkpoint.
    #[arg(long, default_value_t = 20)]
    hidden_sweeps: usize,
    /// Leading sweeps left out of the average.
    #[arg(long, default_value_t = 5)]
    discard: usize,
    #[arg(long, default_value_t = 5)]
    mtm: usize,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Debug)]
struct FantasizeArgs {
    /// Directory holding `sample_*.ckpt` files.
    #[arg(long)]
    samples: PathBuf,
    #[arg(long, default_value_t = 16)]
    count: usize,
    /// Image shape as HEIGHTxWIDTH; a square is assumed when omitted.
    #[arg(long)]
    shape: Option<String>,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Debug)]
struct InspectArgs {
    /// Checkpoint file.
    checkpoint: PathBuf,
    /// Write feature-map images into this directory.
    #[arg(long)]
    features: Option<PathBuf>,
    /// Image shape as HEIGHTxWIDTH; a square is assumed when omitted.
    #[arg(long)]
    shape: Option<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        return ExitCode::from(1);
    }
    ExitCode::SUCCESS
}

fn run(cli: Cli) -> Result<()> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match cli.command {
        Command::SamplePrior(a) => sample_prior(a, cli.seed),
        Command::SimulateWidths(a) => simulate_widths(a, cli.seed),
        Command::DiagnoseDrift(a) => diagnose_drift(a),
        Command::Train(a) => train(a, cli.seed),
        Command::Reconstruct(a) => reconstruct_cmd(a, cli.seed),
        Command::Fantasize(a) => fantasize_cmd(a, cli.seed),
        Command::Inspect(a) => inspect(a),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn sample_prior(a: SamplePriorArgs, seed: u64) -> Result<()> {
    let params = a.ibp.params()?;
    let mut rng = seeded(seed);
    create_dir(&a.out.out_dir)?;
    for i in 0..a.count {
        let sample = sample_cibp(a.k0, &[params], a.depth_cap, &mut rng)?;
        let path = a.out.out_dir.join(format!("structure_{i:04}.txt"));
        write(&path, sample.structure.to_adjacency())?;
        println!(
            "{}\tdepth {}\twidths {:?}{}",
            path.display(),
            sample.depth(),
            sample.structure.widths(),
            if sample.truncated { "\ttruncated" } else { "" }
        );
    }
    Ok(())
}

fn simulate_widths(a: SimulateWidthsArgs, seed: u64) -> Result<()> {
    let params = a.ibp.params()?;
    let mut rng = seeded(seed);
    for _ in 0..a.runs {
        let trace = simulate_width_chain(a.k0, &params, a.max_steps, &mut rng)?;
        let line: Vec<String> = trace.widths.iter().map(|w| w.to_string()).collect();
        println!("{}", line.join(" "));
    }
    Ok(())
}

fn diagnose_drift(a: DriftArgs) -> Result<()> {
    let params = a.ibp.params()?;
    println!("K\texpected_next\tdrift");
    for k in 1..=a.kmax {
        println!("{k}\t{:.5}\t{:+.5}", poisson_rate(k, &params)?, drift(k, &params)?);
    }
    Ok(())
}

fn train(a: TrainArgs, seed: u64) -> Result<()> {
    let mut rng = seeded(seed);
    let dir = a.out.out_dir.clone();
    let data = match (&a.data, a.bars) {
        (Some(path), _) => load_path(path).with_context(|| format!("loading {}", path.display()))?,
        (None, Some(n)) => {
            let all = data::bars(n + 50, 8, 0.25, &mut rng);
            let train = all.subset(&(0..n).collect::<Vec<_>>());
            let test = all.subset(&(n..n + 50).collect::<Vec<_>>());
            create_dir(&dir)?;
            write(&dir.join("train.csv"), data::to_csv(&train))?;
            write(&dir.join("test.csv"), data::to_csv(&test))?;
            train
        }
        (None, None) => bail!("one of --data or --bars is required"),
    };
    let mut moves = MoveFlags::all();
    moves.cibp_hypers = !a.fixed_hypers;
    let config = RunConfig {
        sweeps: a.sweeps,
        burn_in: a.burn_in,
        thin: a.thin,
        checkpoint_every: a.checkpoint_every,
        sweep: SweepConfig { mtm_candidates: a.mtm, moves, seed, ..SweepConfig::default() },
        hypers: HyperParameters::uniform(a.ibp.params()?),
        train_path: a.data.clone(),
        test_path: None,
        output_dir: Some(dir.clone()),
    };
    let out = train_on(Arc::new(data), &config, &mut rng)?;
    println!(
        "{} samples in {}; final widths {:?}; acceptance: mtm {:.3} birth {:.3} death {:.3} hypers {:.3}",
        out.samples.len(),
        dir.display(),
        out.final_state.structure.widths(),
        out.totals.mtm_rate(),
        out.totals.birth_rate(),
        out.totals.death_rate(),
        out.totals.hyper_rate()
    );
    Ok(())
}

fn image_shape(shape: Option<&str>, width: usize, known: Option<(usize, usize)>) -> Result<(usize, usize)> {
    if let Some(s) = shape {
        let (h, w) = s
            .split_once('x')
            .and_then(|(h, w)| Some((h.parse().ok()?, w.parse().ok()?)))
            .with_context(|| format!("--shape expects HEIGHTxWIDTH, got `{s}`"))?;
        if h * w != width {
            bail!("--shape {h}x{w} does not match {width} visible units");
        }
        return Ok((h, w));
    }
    if let Some(shape) = known {
        return Ok(shape);
    }
    let side = (width as f64).sqrt().round() as usize;
    if side * side != width {
        bail!("{width} visible units are not square; pass --shape");
    }
    Ok((side, side))
}

fn load_dataset(path: &Path) -> Result<Dataset> {
    load_path(path).with_context(|| format!("loading {}", path.display()))
}

fn reconstruct_cmd(a: ReconstructArgs, seed: u64) -> Result<()> {
    let mut rng = seeded(seed);
    let samples = load_samples(&a.samples)?;
    if samples.is_empty() {
        bail!("no sample_*.ckpt files in {}", a.samples.display());
    }
    let train = load_dataset(&a.train)?;
    let mut test = load_dataset(&a.test)?;
    test = match &a.mask {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            test.with_masks(parse_mask_csv(&text)?)?
        }
        None => mask_bottom_half(&test)?,
    };
    let config = ReconstructionConfig {
        hidden_sweeps: a.hidden_sweeps,
        discard: a.discard,
        mtm_candidates: a.mtm,
    };
    let rec = reconstruct(&samples, &test, &train.column_means(), &config, &mut rng)?;
    create_dir(&a.out.out_dir)?;
    write(&a.out.out_dir.join("report.csv"), rec.report.to_csv())?;
    let shape = image_shape(None, test.width(), test.image_shape)?;
    write_images(&rec.images, shape, test.maxval, &a.out.out_dir, "reconstruction")?;
    println!(
        "model MSE {:.2}, baseline MSE {:.2}, {} posterior samples per image",
        rec.report.mean_model_mse(),
        rec.report.mean_baseline_mse(),
        rec.report.samples_used
    );
    Ok(())
}

fn fantasize_cmd(a: FantasizeArgs, seed: u64) -> Result<()> {
    let mut rng = seeded(seed);
    let samples = load_samples(&a.samples)?;
    if samples.is_empty() {
        bail!("no sample_*.ckpt files in {}", a.samples.display());
    }
    let width = samples[0].structure.visible_width();
    let shape = image_shape(a.shape.as_deref(), width, None)?;
    let images = fantasize(&samples, a.count, &mut rng);
    let paths = write_images(&images, shape, 255, &a.out.out_dir, "fantasy")?;
    println!("{} fantasies in {}", paths.len(), a.out.out_dir.display());
    Ok(())
}

fn inspect(a: InspectArgs) -> Result<()> {
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    let s = &ckpt.structure;
    println!("depth\t{}", s.depth());
    println!("widths\t{:?}", s.widths());
    println!("edges\t{}", s.edge_count());
    for (m, p) in ckpt.hypers.ibp.iter().enumerate() {
        println!("ibp[{m}]\talpha {:.4}\tbeta {:.4}", p.alpha, p.beta);
    }
    for (m, lp) in ckpt.layers.iter().enumerate() {
        let mean_nu = lp.precisions.iter().sum::<f64>() / lp.precisions.len().max(1) as f64;
        println!("layer {m}\tunits {}\tmean precision {mean_nu:.4}", lp.width());
    }
    println!("unit states\t{}", if ckpt.states.is_some() { "stored" } else { "absent" });
    if let Some(dir) = &a.features {
        let shape = image_shape(a.shape.as_deref(), s.visible_width(), None)?;
        let maps = export_feature_maps(&ckpt);
        let written = write_feature_maps(&maps, shape, 255, dir)?;
        println!("feature maps\t{} files in {}", written.len(), dir.display());
    }
    Ok(())
}
