//! `xhrnet`: audits, forwards, gradient checks and heatmap toys.
//!
//! Exit status: 0 on success, 1 on a domain error (bad config, shape,
//! failed check), 2 on a usage error.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use xhrnet_core::analysis::{count_macs, FlopsReport};
use xhrnet_core::backbone::{build_network, load_config, load_weights, save_weights, NetConfig};
use xhrnet_core::blocks::BlockType;
use xhrnet_core::gradcheck::{run_target, GradTarget};
use xhrnet_core::heatmap::{
    decode, fusion_toy, gaussian_heatmap, project, read_csv_grid, reconstruction_error, write_csv_heatmap,
    write_csv_slice, Heatmap,
};
use xhrnet_core::init::Initializer;
use xhrnet_core::susa::{Fusion, SusaAxis};
use xhrnet_core::{Network, Tensor};

#[derive(Parser)]
#[command(name = "xhrnet", version, about = "X-HRNet backbone, SUSA attention and complexity auditor")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Architecture overview with per-stage parameter and MAC totals.
    Summarize(NetArgs),
    /// Per-layer parameter and MAC audit.
    Flops(FlopsArgs),
    /// Run the network on a seeded or CSV image.
    Forward(ForwardArgs),
    /// Compare reverse-mode gradients with central differences.
    Gradcheck(GradArgs),
    /// Fuse two Gaussian maps by addition or multiplication.
    FusionToy(ToyArgs),
    /// Generate, project, reconstruct and decode one Gaussian heatmap.
    HeatmapDemo(DemoArgs),
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Source {
    /// Bundled preset: x18, x30, x18-shuffle or x18-bare.
    #[arg(long)]
    variant: Option<String>,
    /// JSON network config.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct NetArgs {
    #[command(flatten)]
    source: Source,
    /// Override the block type.
    #[arg(long, value_parser = parse_block_type)]
    block_type: Option<BlockType>,
    /// Override the SUSA order, e.g. `H,W`.
    #[arg(long, value_parser = parse_order)]
    susa_order: Option<(SusaAxis, SusaAxis)>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Json,
}

#[derive(Args)]
struct FlopsArgs {
    #[command(flatten)]
    net: NetArgs,
    /// Input extents `HxW`; defaults to the config's.
    #[arg(long, value_parser = parse_hw)]
    input: Option<(usize, usize)>,
    /// List every layer instead of stage groups.
    #[arg(long)]
    per_layer: bool,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
}

#[derive(Clone, Debug)]
enum InputSpec {
    Random { hw: Option<(usize, usize)>, seed: u64 },
    Csv(PathBuf),
}

#[derive(Args)]
struct ForwardArgs {
    #[command(flatten)]
    net: NetArgs,
    /// `random:SEED`, `HxW:random:SEED` or `csv:PATH` (3*H rows of W values).
    #[arg(long, value_parser = parse_input)]
    input: InputSpec,
    /// XHW1 weights file; without it the network is seed-initialised.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Initialisation seed when no weights are given.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write heatmaps as CSV (K*H rows of W values).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the weights actually used.
    #[arg(long)]
    save_weights: Option<PathBuf>,
}

#[derive(Args)]
struct GradArgs {
    #[arg(long, value_parser = parse_target)]
    target: GradTarget,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Add,
    Mul,
}

#[derive(Args)]
struct ToyArgs {
    #[arg(long, default_value_t = 2.0)]
    sigma: f64,
    /// Offset of the second Gaussian, `DX,DY` pixels.
    #[arg(long, value_parser = parse_pair, default_value = "0,0", allow_hyphen_values = true)]
    offset: (f64, f64),
    #[arg(long, value_enum)]
    mode: Mode,
    /// Grid `HxW`.
    #[arg(long, value_parser = parse_hw, default_value = "64x48")]
    size: (usize, usize),
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
}

#[derive(Args)]
struct DemoArgs {
    /// Centre `X,Y` in pixels.
    #[arg(long, value_parser = parse_pair, allow_hyphen_values = true)]
    center: (f64, f64),
    #[arg(long, default_value_t = 2.0)]
    sigma: f64,
    #[arg(long, value_parser = parse_hw, default_value = "64x48")]
    size: (usize, usize),
    /// Write the slice as CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_hw(s: &str) -> Result<(usize, usize), String> {
    let (h, w) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected HxW, got '{s}'"))?;
    let p = |v: &str| v.trim().parse::<usize>().map_err(|_| format!("expected HxW with integers, got '{s}'"));
    let (h, w) = (p(h)?, p(w)?);
    if h == 0 || w == 0 {
        return Err(format!("extents must be positive, got '{s}'"));
    }
    Ok((h, w))
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected A,B, got '{s}'"))?;
    let p = |v: &str| v.trim().parse::<f64>().map_err(|_| format!("expected two numbers, got '{s}'"));
    Ok((p(a)?, p(b)?))
}

fn parse_input(s: &str) -> Result<InputSpec, String> {
    if let Some(path) = s.strip_prefix("csv:") {
        return Ok(InputSpec::Csv(PathBuf::from(path)));
    }
    let seed = |v: &str| v.parse::<u64>().map_err(|_| format!("bad seed in '{s}'"));
    if let Some(rest) = s.strip_prefix("random:") {
        return Ok(InputSpec::Random { hw: None, seed: seed(rest)? });
    }
    match s.split_once(":random:") {
        Some((hw, sd)) => Ok(InputSpec::Random { hw: Some(parse_hw(hw)?), seed: seed(sd)? }),
        None => Err(format!("expected random:SEED, HxW:random:SEED or csv:PATH, got '{s}'")),
    }
}

fn parse_block_type(s: &str) -> Result<BlockType, String> {
    s.parse().map_err(|e: xhrnet_core::Error| e.to_string())
}

fn parse_target(s: &str) -> Result<GradTarget, String> {
    s.parse().map_err(|e: xhrnet_core::Error| e.to_string())
}

fn parse_order(s: &str) -> Result<(SusaAxis, SusaAxis), String> {
    let axis = |v: &str| match v.trim() {
        "H" | "h" => Ok(SusaAxis::HWise),
        "W" | "w" => Ok(SusaAxis::WWise),
        other => Err(format!("unknown SUSA axis '{other}' (expected H or W)")),
    };
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected FIRST,SECOND like W,H, got '{s}'"))?;
    Ok((axis(a)?, axis(b)?))
}

fn resolve(net: &NetArgs) -> Result<NetConfig> {
    let mut cfg = match (&net.source.variant, &net.source.config) {
        (Some(v), _) => NetConfig::preset(v).context("--variant")?,
        (None, Some(p)) => load_config(p).with_context(|| format!("--config {}", p.display()))?,
        (None, None) => bail!(xhrnet_core::Error::Usage("one of --variant or --config is required".into())),
    };
    if let Some(b) = net.block_type {
        cfg = cfg.with_block_type(b);
    }
    if let Some((a, b)) = net.susa_order {
        cfg = cfg.with_susa_order(a, b);
    }
    cfg.validate().context("network config")?;
    Ok(cfg)
}

fn summarize(args: &NetArgs) -> Result<()> {
    let cfg = resolve(args)?;
    let [h, w] = cfg.input_hw;
    let report = count_macs(&cfg, (h, w))?;
    println!(
        "variant {:?}  block {}  susa order ({},{})  fusion {:?}  joints {}",
        cfg.variant,
        cfg.block_type.label(),
        cfg.susa_order[0].label(),
        cfg.susa_order[1].label(),
        cfg.fusion_mode,
        cfg.num_joints
    );
    println!("input 3x{h}x{w}  stem -> {}x{}x{}", cfg.stem_channels, h / 4, w / 4);
    for (s, stage) in cfg.stages.iter().enumerate() {
        let branches: Vec<String> = stage
            .branch_channels
            .iter()
            .enumerate()
            .map(|(b, c)| format!("{c}x{}x{}", (h / 4) >> b, (w / 4) >> b))
            .collect();
        println!(
            "stage{}  modules {}  blocks/module {}  branches {}",
            s + 1,
            stage.num_modules,
            stage.blocks_per_module,
            branches.join(" ")
        );
    }
    println!("head -> {}x{}x{}", cfg.num_joints, h / 4, w / 4);
    print!("{}", report.to_table(false));
    Ok(())
}

fn flops(args: &FlopsArgs) -> Result<()> {
    let cfg = resolve(&args.net)?;
    let hw = args.input.unwrap_or((cfg.input_hw[0], cfg.input_hw[1]));
    let report: FlopsReport = count_macs(&cfg, hw).context("--input")?;
    match args.format {
        Format::Table => print!("{}", report.to_table(args.per_layer)),
        Format::Json => println!("{}", report.to_json()),
    }
    Ok(())
}

fn read_image(spec: &InputSpec, cfg: &NetConfig) -> Result<Tensor> {
    match spec {
        InputSpec::Random { hw, seed } => {
            let (h, w) = hw.unwrap_or((cfg.input_hw[0], cfg.input_hw[1]));
            Ok(Initializer::new(*seed).uniform(&[3, h, w], -1.0, 1.0)?)
        }
        InputSpec::Csv(path) => {
            let (rows, cols, values) =
                read_csv_grid(path).with_context(|| format!("--input csv:{}", path.display()))?;
            if rows % 3 != 0 {
                bail!(xhrnet_core::Error::Dimension(format!(
                    "--input csv:{}: expected 3*H rows (channels stacked), got {rows}",
                    path.display()
                )));
            }
            Ok(Tensor::new(vec![3, rows / 3, cols], values)?)
        }
    }
}

fn forward(args: &ForwardArgs) -> Result<()> {
    let cfg = resolve(&args.net)?;
    let seeded: Network = build_network(&cfg, args.seed)?;
    let net = match &args.weights {
        Some(p) => load_weights(&seeded, p).with_context(|| format!("--weights {}", p.display()))?,
        None => seeded,
    };
    let image = read_image(&args.input, &cfg)?;
    let out = net.forward(&image).context("--input")?;
    let s = out.shape();
    println!("output shape {}x{}x{}", s[0], s[1], s[2]);
    let data = out.data();
    let (lo, hi) = data.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    println!("range [{lo:.6e}, {hi:.6e}]  mean {:.6e}", out.sum() / data.len() as f64);
    let hm = Heatmap::new(out)?;
    if let Some(p) = &args.out {
        write_csv_heatmap(&hm, p).with_context(|| format!("--out {}", p.display()))?;
    }
    if let Some(p) = &args.save_weights {
        save_weights(&net, p).with_context(|| format!("--save-weights {}", p.display()))?;
    }
    Ok(())
}

fn gradcheck(args: &GradArgs) -> Result<bool> {
    let cases = run_target(args.target, args.seed, args.tol).context("--tol")?;
    let mut worst = 0.0f64;
    for c in &cases {
        worst = worst.max(c.report.max_rel_err);
        println!(
            "{:<4} {:<48} max_rel_err={:.3e} max_abs_err={:.3e} n={}",
            if c.report.pass { "ok" } else { "BAD" },
            c.name,
            c.report.max_rel_err,
            c.report.max_abs_err,
            c.report.element_count
        );
    }
    let pass = cases.iter().all(|c| c.report.pass);
    println!(
        "{} {} max_rel_err={worst:.3e} tol={:e}",
        if pass { "PASS" } else { "FAIL" },
        args.target.label(),
        args.tol
    );
    Ok(pass)
}

fn toy(args: &ToyArgs) -> Result<()> {
    let (h, w) = args.size;
    let c = (w as f64 / 2.0, h as f64 / 2.0);
    let a = gaussian_heatmap::<f64>(c, args.sigma, (h, w)).context("--sigma")?.slice;
    let b = gaussian_heatmap::<f64>((c.0 + args.offset.0, c.1 + args.offset.1), args.sigma, (h, w))
        .context("--offset")?
        .slice;
    let mode = match args.mode {
        Mode::Add => Fusion::Add,
        Mode::Mul => Fusion::Multiply,
    };
    let r = fusion_toy(&a, &b, mode)?;
    if r.degenerate {
        eprintln!("warning: fused map has no positive value");
    }
    match args.format {
        Format::Json => println!("{}", r.to_json()),
        Format::Table => println!(
            "mode {}  peak ({}, {})  half_max_area {}",
            if mode == Fusion::Add { "add" } else { "mul" },
            r.peak[0],
            r.peak[1],
            r.half_max_area
        ),
    }
    Ok(())
}

fn demo(args: &DemoArgs) -> Result<()> {
    let g = gaussian_heatmap::<f64>(args.center, args.sigma, args.size).context("--sigma")?;
    if g.empty {
        eprintln!("warning: centre lies outside the grid margin; the slice is effectively empty");
    }
    let pair = project(&g.slice).context("--center")?;
    let argmax = |v: &[f64]| v.iter().enumerate().fold((0, f64::MIN), |a, (i, &x)| if x > a.1 { (i, x) } else { a }).0;
    println!("grid {}x{}  sigma {}  peak {:.6}", args.size.0, args.size.1, args.sigma, g.slice.max_value());
    println!("h_vec argmax {}  w_vec argmax {}", argmax(&pair.h_vec), argmax(&pair.w_vec));
    println!("reconstruction error {:.3e}", reconstruction_error(&g.slice)?);
    let kp = decode(&Heatmap::from_slices(std::slice::from_ref(&g.slice))?)[0];
    println!("decoded ({:.2}, {:.2}) score {:.4}  true ({}, {})", kp.x, kp.y, kp.score, args.center.0, args.center.1);
    if let Some(p) = &args.out {
        write_csv_slice(&g.slice, p).with_context(|| format!("--out {}", p.display()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match &cli.command {
        Command::Summarize(a) => summarize(a)?,
        Command::Flops(a) => flops(a)?,
        Command::Forward(a) => forward(a)?,
        Command::Gradcheck(a) => return gradcheck(a),
        Command::FusionToy(a) => toy(a)?,
        Command::HeatmapDemo(a) => demo(a)?,
    }
    Ok(true)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<xhrnet_core::Error>() {
        Some(xhrnet_core::Error::Usage(_)) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
