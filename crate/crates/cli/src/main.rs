mod config;

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;
use stitchstab::hyperlapse::{HyperlapseParams, Preset};
use stitchstab::io::{write_ground_truth, FrameWriter};
use stitchstab::metrics::EvalReport;
use stitchstab::pipeline;
use stitchstab::sidecar::{MotionRecord, MotionSidecar};
use stitchstab::synth::{Synth, SynthSpec};
use stitchstab::Exec;

use crate::config::Config;

#[derive(Parser)]
#[command(name = "stitchstab", version, about = "Video stabilizer that stitches neighboring frames into the crop")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate frame-to-frame motion and store it in a sidecar file.
    Analyze(Common),
    /// Stabilize a clip.
    Stabilize(Common),
    /// Plan and render a stabilized fast-forward.
    Hyperlapse {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        hl: HyperlapseArgs,
    },
    /// Render a synthetic shaky clip with its ground-truth camera path.
    Synth {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        synth: SynthArgs,
    },
    /// Run both stabilizer modes and hyperlapses on a clip and report metrics.
    Eval {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        hl: HyperlapseArgs,
    },
}

#[derive(Args)]
struct Common {
    /// TOML configuration file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Y4M file or image directory.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Y4M file or image directory to write.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Fraction of the input width and height kept in the output [default: 0.9].
    #[arg(long)]
    crop_ratio: Option<f64>,
    /// Use the conventional inside test (no stitching from neighbor frames).
    #[arg(long)]
    no_stitch: bool,
    /// Motion sidecar (JSON lines): written by analyze and synth, read otherwise.
    #[arg(long)]
    sidecar: Option<PathBuf>,
    /// Write a seam overlay image per stitched frame into this directory.
    #[arg(long)]
    dump_seams: Option<PathBuf>,
    /// Focal length in pixels [default: frame width].
    #[arg(long)]
    focal: Option<f64>,
    /// Effective sensor height for rolling shutter, relative to frame height [default: 2].
    #[arg(long)]
    sensor_height_factor: Option<f64>,
    /// Seed for synthetic clips.
    #[arg(long)]
    seed: Option<u64>,
    /// Write the metrics report (JSON) here.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Include per-stage frame rates in the report (makes it run dependent).
    #[arg(long)]
    timings: bool,
    /// Run every stage on a single thread.
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct HyperlapseArgs {
    /// Input frames per output frame (eval accepts it more than once) [default: 4; eval: 4 and 8].
    #[arg(long)]
    skip: Vec<usize>,
    /// Search size: standard or lite.
    #[arg(long)]
    preset: Option<Preset>,
    /// Nodes kept per search level (overrides the preset).
    #[arg(long)]
    beam: Option<usize>,
    /// Search depth before the first output frame.
    #[arg(long)]
    horizon: Option<usize>,
    /// Cost per frame of forcing the crop inside.
    #[arg(long)]
    eps_outside: Option<f64>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    /// Still image to film instead of the procedural texture.
    #[arg(long)]
    source: Option<PathBuf>,
    /// Ground-truth path file [default: next to the output].
    #[arg(long)]
    ground_truth: Option<PathBuf>,
}

impl Common {
    fn config(&self) -> Result<Config> {
        let mut cfg = match &self.config {
            Some(p) => Config::load(p)?,
            None => Config::default(),
        };
        let run = &mut cfg.run;
        if let Some(v) = self.crop_ratio {
            run.filter.crop_ratio = v;
        }
        if self.no_stitch {
            run.stitching = false;
        }
        if self.focal.is_some() {
            run.focal = self.focal;
        }
        if let Some(v) = self.sensor_height_factor {
            run.sensor_height_factor = v;
        }
        if self.timings {
            run.timings = true;
        }
        run.exec = if self.sequential { Exec::Sequential } else { Exec::default() };
        run.dump_seams = self.dump_seams.clone();
        if let Some(seed) = self.seed {
            cfg.synth.seed = seed;
        }
        if self.focal.is_some() {
            cfg.synth.focal = self.focal;
        }
        Ok(cfg)
    }

    fn input(&self) -> Result<&Path> {
        self.input.as_deref().context("--input is required")
    }

    fn write_report(&self, report: &EvalReport) -> Result<()> {
        if let Some(path) = &self.report {
            report.save(path).with_context(|| format!("writing report {}", path.display()))?;
        }
        Ok(())
    }
}

impl HyperlapseArgs {
    /// Hyperlapse settings for each requested skip, defaulting to the file's skip.
    fn params(&self, cfg: &Config, default_skips: &[usize]) -> Vec<HyperlapseParams> {
        let mut base = cfg.hyperlapse;
        if let Some(p) = self.preset {
            base = base.with_preset(p);
        }
        if let Some(b) = self.beam {
            base.beam = b;
        }
        if let Some(h) = self.horizon {
            base.horizon = h;
        }
        if let Some(e) = self.eps_outside {
            base.eps_outside = e;
        }
        let skips = if self.skip.is_empty() { default_skips.to_vec() } else { self.skip.clone() };
        skips.into_iter().map(|skip| HyperlapseParams { skip, ..base }).collect()
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Analyze(c) => analyze(&c),
        Command::Stabilize(c) => stabilize(&c),
        Command::Hyperlapse { common, hl } => hyperlapse(&common, &hl),
        Command::Synth { common, synth: args } => synth(&common, &args),
        Command::Eval { common, hl } => eval(&common, &hl),
    }
}

fn analyze(c: &Common) -> Result<()> {
    let cfg = c.config()?;
    let out = c.sidecar.as_deref().context("analyze writes its result to --sidecar")?;
    let sc = pipeline::run_analyze(c.input()?, out, &cfg.run)?;
    let unsure = sc.records.iter().filter(|r| !r.confident).count();
    println!("{} transitions analyzed, {} low confidence", sc.records.len(), unsure);
    Ok(())
}

fn stabilize(c: &Common) -> Result<()> {
    let cfg = c.config()?;
    if let Some(dir) = &cfg.run.dump_seams {
        std::fs::create_dir_all(dir)?;
    }
    let out = pipeline::run_stabilize(c.input()?, c.output.as_deref(), c.sidecar.as_deref(), &cfg.run)?;
    let m = &out.metrics;
    println!("frames {} n_f {} jitter {:.6} stitched {} holes {}", m.frames, m.n_f, m.jitter, m.stitched_prev + m.stitched_next, m.holes);
    let mut report = EvalReport::default();
    report.add_run(out.metrics);
    c.write_report(&report)
}

fn hyperlapse(c: &Common, hl: &HyperlapseArgs) -> Result<()> {
    let cfg = c.config()?;
    let params = hl.params(&cfg, &[cfg.hyperlapse.skip]);
    let [params] = params.as_slice() else {
        bail!("hyperlapse takes a single --skip");
    };
    let out = pipeline::run_hyperlapse(c.input()?, c.output.as_deref(), c.sidecar.as_deref(), params, &cfg.run)?;
    info!("{} output frames, n_f {}", out.plan.frames.len(), out.plan.n_f);
    println!("{}", out.plan.final_cost);
    let report = EvalReport { frames: out.input_frames, hyperlapse: vec![out.metrics], ..EvalReport::default() };
    c.write_report(&report)
}

fn synth(c: &Common, args: &SynthArgs) -> Result<()> {
    let cfg = c.config()?;
    let spec = SynthSpec {
        frames: args.frames.unwrap_or(cfg.synth.frames),
        width: args.width.unwrap_or(cfg.synth.width),
        height: args.height.unwrap_or(cfg.synth.height),
        source: args.source.clone().or(cfg.synth.source.clone()),
        ..cfg.synth.clone()
    };
    let output = c.output.as_deref().context("synth needs --output")?;
    let s = Synth::new(spec)?;
    let mut writer = FrameWriter::create(output, s.cam.width, s.cam.height, s.spec.color, pipeline::default_rate())?;
    for n in 0..s.len() {
        writer.write(&s.frame(n, cfg.run.exec))?;
    }
    writer.finish()?;
    let gt_path = match &args.ground_truth {
        Some(p) => p.clone(),
        None if output.is_dir() => output.join("ground_truth.txt"),
        None => output.with_extension("gt.txt"),
    };
    write_ground_truth(&gt_path, s.angles())?;
    if let Some(path) = &c.sidecar {
        let mut sc = MotionSidecar::new(s.cam.with_sensor_height_factor(cfg.run.sensor_height_factor));
        for (i, m) in s.ground_truth_motions()?.into_iter().enumerate() {
            sc.records.push(MotionRecord { frame: i + 1, m, confident: true });
        }
        sc.save(path)?;
    }
    println!("{} frames written, ground truth in {}", s.len(), gt_path.display());
    Ok(())
}

fn eval(c: &Common, hl: &HyperlapseArgs) -> Result<()> {
    let cfg = c.config()?;
    let skips = cfg.eval_skips.clone().unwrap_or_else(|| vec![4, 8]);
    let params = hl.params(&cfg, &skips);
    let report = pipeline::run_eval(c.input()?, c.sidecar.as_deref(), &params, &cfg.run)?;
    if c.report.is_some() {
        c.write_report(&report)?;
    } else {
        println!("{}", report.to_json()?);
    }
    Ok(())
}
