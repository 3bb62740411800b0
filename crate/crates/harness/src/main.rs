use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use toe_core::fractopo::fractional_pipeline;
use toe_core::ocsmap::{round, RoundingMethod, DEFAULT_ITERATIONS};
use toe_core::traffic::{choose_k_silhouette, recurrence_curve, synth_trace, GeneratorSpec};
use toe_core::{FabricFile, FractionalTopology};
use toe_harness::bench::{bench_csv, run_bench, summarize, BenchConfig};
use toe_harness::experiment::{epoch_ranges, representatives, Fabric};
use toe_harness::report::{create_dir, pca_csv, write_file};
use toe_harness::{emit_report, run_epochal, sweep_reconfig_frequency, ExperimentConfig, HarnessError, Result, TopologyScheme};

#[derive(Parser)]
#[command(name = "toe", version, about = "Multi-TM topology engineering experiments")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic trace from a generator spec.
    Generate(Common),
    /// Recurrence, silhouette and PCA summaries of the configured trace.
    Analyze {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0.95)]
        threshold: f64,
    },
    /// One multi-TM epoch trained on the window ending at `--end`.
    Optimize {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        end: Option<usize>,
    },
    /// Round a fractional topology onto the OCS planes.
    Map {
        #[arg(long)]
        fabric: PathBuf,
        #[arg(long)]
        fractional: PathBuf,
        #[arg(long, default_value = "ldm")]
        method: RoundingMethod,
        #[arg(long, default_value_t = DEFAULT_ITERATIONS)]
        iterations: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Replay the trace under every configured scheme.
    Evaluate(Common),
    /// Replay at several reconfiguration periods.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        periods: Vec<usize>,
    },
    /// Compare rounding methods on generated fabrics.
    BenchRounding {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        instances: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))
}

fn parse_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read(path)?).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
}

fn experiment(c: &Common) -> Result<(ExperimentConfig, PathBuf)> {
    let mut cfg = ExperimentConfig::load(&c.config)?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    let out = c
        .out
        .clone()
        .or_else(|| cfg.output_dir.as_ref().map(|d| cfg.base_dir.join(d)))
        .ok_or_else(|| HarnessError::Config("no output directory: pass --out or set output_dir".into()))?;
    cfg.output_dir = Some(out.clone());
    create_dir(&out)?;
    Ok((cfg, out))
}

fn write_json(path: &Path, v: &impl serde::Serialize) -> Result<()> {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    write_file(path, s.as_bytes())
}

fn generate(c: &Common) -> Result<()> {
    let spec: GeneratorSpec = parse_json(&c.config)?;
    let out = c.out.clone().ok_or_else(|| HarnessError::Config("--out is required".into()))?;
    create_dir(&out)?;
    let trace = synth_trace(&spec, c.seed.unwrap_or(0))?;
    write_file(&out.join("trace.csv"), trace.to_csv().as_bytes())?;
    write_json(&out.join("generator.json"), &json!({ "spec": spec, "seed": c.seed.unwrap_or(0) }))
}

fn analyze(c: &Common, threshold: f64) -> Result<()> {
    let (cfg, out) = experiment(c)?;
    let trace = cfg.load_trace()?;
    let mut lookbacks = vec![];
    let mut l = 1;
    while l * 2 <= trace.len() {
        lookbacks.push(l);
        l *= 2;
    }
    let mut s = String::from("lookback,fraction\n");
    if let Some(&start) = lookbacks.last() {
        for (l, f) in lookbacks.iter().zip(recurrence_curve(&trace, &lookbacks, threshold, start)?) {
            s.push_str(&format!("{l},{f}\n"));
        }
    }
    write_file(&out.join("recurrence.csv"), s.as_bytes())?;
    let window = trace.window(trace.len().saturating_sub(cfg.lookback_window)..trace.len());
    let (lo, hi) = cfg.silhouette_k;
    let mut s = String::from("k,silhouette\n");
    let mut chosen = None;
    if window.len() > lo {
        let r = choose_k_silhouette(window, lo, hi.min(window.len() - 1), cfg.seed)?;
        for (k, v) in &r.silhouette {
            s.push_str(&format!("{k},{}\n", v.map(|x| x.to_string()).unwrap_or_default()));
        }
        chosen = Some(r.chosen_k);
    }
    write_file(&out.join("silhouette.csv"), s.as_bytes())?;
    let report = toe_harness::RunReport {
        config: cfg.clone(),
        trace_len: trace.len(),
        pods: trace.n().unwrap_or(0),
        runs: vec![],
        pca: toe_core::traffic::pca_project(&trace.snapshots).ok(),
    };
    write_file(&out.join("pca.csv"), pca_csv(&report).as_bytes())?;
    write_json(
        &out.join("analysis.json"),
        &json!({ "threshold": threshold, "chosen_k": chosen, "pca_pve": report.pca.map(|p| p.pve) }),
    )
}

fn optimize(c: &Common, end: Option<usize>) -> Result<()> {
    let (cfg, out) = experiment(c)?;
    let trace = cfg.load_trace()?;
    let fabric = Fabric::new(cfg.load_fabric()?)?;
    let end = end.unwrap_or(trace.len()).min(trace.len());
    let window = trace.window(end.saturating_sub(cfg.lookback_window)..end);
    if window.is_empty() {
        return Err(HarnessError::Config("training window is empty".into()));
    }
    let k = cfg
        .schemes
        .iter()
        .find_map(|s| match s.topology {
            TopologyScheme::MultiTm { k } => Some(k),
            _ => None,
        })
        .unwrap_or(None);
    let (reps, silhouette) = representatives(window, k, cfg.silhouette_k, cfg.seed)?;
    let pipe = fractional_pipeline(&reps.tms, &fabric.phys, &fabric.paths)?;
    let r = round(cfg.rounding.method, &pipe.combined.d_star, &fabric.phys, cfg.rounding.iterations)?;
    let mut s = String::from("representative,i,j,share\n");
    for (c, tm) in reps.tms.iter().enumerate() {
        for i in 0..tm.n() {
            for j in 0..tm.n() {
                if tm.get(i, j) != 0.0 {
                    s.push_str(&format!("{c},{i},{j},{}\n", tm.get(i, j)));
                }
            }
        }
    }
    write_file(&out.join("representatives.csv"), s.as_bytes())?;
    write_file(&out.join("fractional.csv"), pipe.combined.d_star.to_csv().as_bytes())?;
    write_file(&out.join("logical.csv"), r.topo.to_csv().as_bytes())?;
    write_json(
        &out.join("epoch.json"),
        &json!({
            "window": [end.saturating_sub(cfg.lookback_window), end],
            "k": reps.tms.len(),
            "silhouette": silhouette,
            "alpha": pipe.combined.alpha,
            "per_tm_mu": pipe.per_tm.iter().map(|s| s.mu).collect::<Vec<_>>(),
            "method": r.method,
            "violations": r.violations,
            "violation_ratio": r.violation_ratio,
            "goodness": r.goodness,
            "iterations_used": r.iterations_used,
        }),
    )
}

fn map(fabric: &Path, fractional: &Path, method: RoundingMethod, iterations: usize, out: &Path) -> Result<()> {
    let phys = FabricFile::from_json(&read(fabric)?)?;
    let d = FractionalTopology::from_csv(&read(fractional)?)?;
    d.check_degrees(&phys)?;
    let r = round(method, &d, &phys, iterations)?;
    create_dir(out)?;
    write_file(&out.join("logical.csv"), r.topo.to_csv().as_bytes())?;
    write_json(
        &out.join("rounding.json"),
        &json!({
            "method": r.method,
            "violations": r.violations,
            "violation_ratio": r.violation_ratio,
            "goodness": r.goodness,
            "iterations_used": r.iterations_used,
        }),
    )
}

fn evaluate(c: &Common) -> Result<()> {
    let (cfg, out) = experiment(c)?;
    let report = run_epochal(&cfg)?;
    emit_report(&report, &out)?;
    let epochs = epoch_ranges(report.trace_len, cfg.warmup, cfg.reconfig_period).len();
    eprintln!("{} schemes x {epochs} epochs -> {}", report.runs.len(), out.display());
    Ok(())
}

fn sweep(c: &Common, periods: &[usize]) -> Result<()> {
    let (cfg, out) = experiment(c)?;
    let periods = if periods.is_empty() { cfg.sweep_periods.clone() } else { periods.to_vec() };
    let report = sweep_reconfig_frequency(&cfg, &periods)?;
    emit_report(&report, &out)?;
    Ok(())
}

fn bench(config: Option<&Path>, instances: Option<usize>, seed: Option<u64>, out: &Path) -> Result<()> {
    let mut cfg: BenchConfig = match config {
        Some(p) => parse_json(p)?,
        None => BenchConfig::default(),
    };
    if let Some(i) = instances {
        cfg.instances = i;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let records = run_bench(&cfg)?;
    create_dir(out)?;
    write_file(&out.join("rounding_bench.csv"), bench_csv(&records).as_bytes())?;
    let summary = summarize(&records);
    for m in &summary.methods {
        eprintln!(
            "{:<8} median vr {:.4}  median loss {:.4}  beats greedy {:.1}%",
            m.method.as_str(),
            m.median_violation_ratio,
            m.median_loss,
            100.0 * m.beats_greedy
        );
    }
    write_json(&out.join("summary.json"), &json!({ "config": cfg, "summary": summary }))
}

fn run(cli: Cli) -> Result<()> {
    if let Some(w) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build_global()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
    }
    match &cli.cmd {
        Command::Generate(c) => generate(c),
        Command::Analyze { common, threshold } => analyze(common, *threshold),
        Command::Optimize { common, end } => optimize(common, *end),
        Command::Map { fabric, fractional, method, iterations, out } => map(fabric, fractional, *method, *iterations, out),
        Command::Evaluate(c) => evaluate(c),
        Command::Sweep { common, periods } => sweep(common, periods),
        Command::BenchRounding { config, instances, seed, out } => bench(config.as_deref(), *instances, *seed, out),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
