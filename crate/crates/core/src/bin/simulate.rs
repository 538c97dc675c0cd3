use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Parser, ValueEnum};

use cellfree::harness::{dbw_to_watts, emit_rate_cdf, emit_sumrate_curve, run_sweep, OperatingPoint, RunMeta};
use cellfree::slbm::Objective;
use cellfree::{CsiMode, NetworkMode, SystemConfig};

const DEFAULT_PMAX_DBW: [f64; 7] = [-20.0, -15.0, -10.0, -5.0, 0.0, 5.0, 10.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Emit {
    Curve,
    Cdf,
    Trace,
}

/// Monte-Carlo downlink power-control simulation for cell-free and user-centric networks.
#[derive(Debug, Parser)]
#[command(version)]
struct Args {
    /// Config file (TOML key/value table). Flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Network modes to evaluate on the same channel draws.
    #[arg(long, value_delimiter = ',')]
    mode: Vec<String>,
    #[arg(long)]
    objective: Option<String>,
    /// CSI models to evaluate on the same channel draws.
    #[arg(long, value_delimiter = ',')]
    csi: Vec<String>,
    /// Users per AP in UC mode.
    #[arg(long)]
    n_cluster: Option<usize>,
    /// Per-AP power budgets in dBW.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pmax_dbw: Vec<f64>,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Outputs to write; defaults to the curve, plus the CDF when a single budget is swept.
    #[arg(long, value_enum, value_delimiter = ',')]
    emit: Vec<Emit>,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

fn main() -> anyhow::Result<()> {
    let args = Args::parse();
    let mut config = match &args.config {
        Some(path) => SystemConfig::from_file(path).with_context(|| format!("reading {}", path.display()))?,
        None => SystemConfig::default(),
    };
    if let Some(n) = args.n_cluster {
        config.n_cluster = Some(n);
    }
    if let Some(obj) = &args.objective {
        config.objective = obj.parse::<Objective>()?;
    }
    let modes: Vec<NetworkMode> = if args.mode.is_empty() {
        vec![config.mode]
    } else {
        args.mode.iter().map(|s| s.parse()).collect::<Result<_, _>>()?
    };
    let csis: Vec<CsiMode> = if args.csi.is_empty() {
        vec![config.csi]
    } else {
        args.csi.iter().map(|s| s.parse()).collect::<Result<_, _>>()?
    };
    let sweep_is_default = args.pmax_dbw.is_empty();
    let pmax_dbw = if sweep_is_default { DEFAULT_PMAX_DBW.to_vec() } else { args.pmax_dbw.clone() };
    if modes.contains(&NetworkMode::Uc) && config.n_cluster.is_none() {
        bail!("UC mode needs --n-cluster (or N_cluster in the config file)");
    }
    config.mode = modes[0];
    config.csi = csis[0];

    let mut points = Vec::new();
    for &p in &pmax_dbw {
        for &mode in &modes {
            for &csi in &csis {
                points.push(OperatingPoint { mode, csi, p_max_w: dbw_to_watts(p) });
            }
        }
    }

    let results = match run_sweep(&config, &points, args.seed, args.trials, args.workers) {
        Ok(r) => r,
        Err(e) => {
            fs::create_dir_all(&args.out)?;
            let dump = serde_json::to_string_pretty(&e.partial)?;
            fs::write(args.out.join("partial_results.json"), dump)?;
            return Err(e.into());
        }
    };

    let emit = if args.emit.is_empty() {
        let mut e = vec![Emit::Curve];
        if pmax_dbw.len() == 1 {
            e.push(Emit::Cdf);
        }
        e
    } else {
        args.emit.clone()
    };

    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    if emit.contains(&Emit::Curve) {
        fs::write(args.out.join("sumrate_curve.csv"), emit_sumrate_curve(&results)?)?;
    }
    if emit.contains(&Emit::Cdf) {
        fs::write(args.out.join("rate_cdf.csv"), emit_rate_cdf(&results)?)?;
    }
    if emit.contains(&Emit::Trace) {
        let single = results.len() == 1;
        for r in &results {
            let p = r.point();
            for t in &r.trials {
                let name = if single {
                    format!("trace_{}.csv", t.trial_index)
                } else {
                    format!(
                        "trace_{}_{}_{}_{}dBW.csv",
                        t.trial_index,
                        p.mode.as_str(),
                        p.csi.as_str(),
                        10.0 * p.p_max_w.log10()
                    )
                };
                fs::write(args.out.join(name), t.trace.to_csv())?;
            }
        }
    }
    let meta = RunMeta::new(&config, args.seed, args.trials, &pmax_dbw, sweep_is_default, &results);
    fs::write(args.out.join("run_meta.json"), meta.to_json()?)?;

    for r in &results {
        let p = r.point();
        eprintln!(
            "{:>6.1} dBW {} {}: sum-rate uniform {:.4e} optimized {:.4e} bit/s, p5 uniform {:.4e} optimized {:.4e}",
            10.0 * p.p_max_w.log10(),
            p.mode.as_str(),
            p.csi.as_str(),
            r.uniform.mean_sum_rate,
            r.optimized.mean_sum_rate,
            r.uniform.p5_rate,
            r.optimized.p5_rate
        );
    }
    Ok(())
}
