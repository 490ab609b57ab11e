use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use higt_bench::{run_grid, BenchGrid};
use higt_core::io::{read_groups, read_matrix, write_groups, write_matrix};
use higt_core::screening::screen_with_stats;
use higt_core::solver::kkt_audit;
use higt_core::{
    build_tree, fit, precompute_correlation, score, simulate, CoefficientMatrix, Dataset,
    FitResult, GroupStructure, RegParams, Scaling, SimConfig, SolverConfig, TreeConfig,
};
use serde::{Deserialize, Serialize};
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "higt",
    version,
    about = "Hierarchical group-thresholding for multi-task regression"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a simulated instance.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the screening pass only.
    Screen(ScreenArgs),
    /// Screen and solve.
    Fit(FitArgs),
    /// Score an estimate against the true coefficients.
    Eval {
        #[arg(long)]
        est: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, default_value_t = higt_core::metrics::DEFAULT_THRESHOLD)]
        threshold: f64,
    },
    /// Run an experiment grid.
    Bench {
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads (defaults to the grid file, then every core).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Inspect the screening tree.
    Tree {
        #[command(subcommand)]
        command: TreeCommand,
    },
}

#[derive(Subcommand)]
enum TreeCommand {
    Dump {
        #[arg(long)]
        groups: PathBuf,
        /// Number of outputs K; defaults to the largest index in the file.
        #[arg(long)]
        outputs: Option<usize>,
        /// Number of inputs J; defaults to the largest index in the file.
        #[arg(long)]
        inputs: Option<usize>,
        #[arg(long, default_value_t = 2)]
        block_inputs: usize,
        #[arg(long, default_value_t = 2)]
        block_outputs: usize,
    },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Units {
    /// Used as given.
    Absolute,
    /// Multiplied by the number of samples.
    PerSample,
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    x: PathBuf,
    #[arg(long)]
    y: PathBuf,
    #[arg(long)]
    groups: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    lambda1: f64,
    #[arg(long, default_value_t = 0.0)]
    lambda2: f64,
    #[arg(long, default_value_t = 0.0)]
    lambda3: f64,
    #[arg(long, value_enum, default_value_t = Units::Absolute)]
    lambda_units: Units,
    /// Treat X and Y as already standardized.
    #[arg(long)]
    no_standardize: bool,
}

#[derive(Args)]
struct ScreenArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 2)]
    block_inputs: usize,
    #[arg(long, default_value_t = 2)]
    block_outputs: usize,
    /// Solve on the survivors and audit the screened coefficients.
    #[arg(long)]
    safe: bool,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    /// JSON with optional `solver` and `tree` sections.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Skip screening and solve over every coefficient.
    #[arg(long)]
    no_screen: bool,
    #[arg(long)]
    safe: bool,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct FitConfig {
    solver: SolverConfig,
    tree: TreeConfig,
}

struct Loaded {
    ds: Dataset,
    scaling: Option<Scaling>,
    gs: GroupStructure,
    rp: RegParams,
}

fn load(args: &DataArgs) -> Result<Loaded> {
    let x = read_matrix(&args.x).with_context(|| format!("reading {}", args.x.display()))?;
    let y = read_matrix(&args.y).with_context(|| format!("reading {}", args.y.display()))?;
    let raw = Dataset::new(x, y)?;
    let gs = read_groups(&args.groups)
        .with_context(|| format!("reading {}", args.groups.display()))?
        .into_structure(raw.k(), raw.j())?;
    let (ds, scaling) = if args.no_standardize {
        (raw, None)
    } else {
        let (ds, s) = raw.standardize_with_scaling()?;
        (ds, Some(s))
    };
    let rp = RegParams::new(args.lambda1, args.lambda2, args.lambda3)?;
    let rp = match args.lambda_units {
        Units::Absolute => rp,
        Units::PerSample => rp.scaled(ds.n() as f64),
    };
    Ok(Loaded {
        ds,
        scaling,
        gs,
        rp,
    })
}

fn print_json(v: &impl Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn survivor_json(res: &FitResult, gs: &GroupStructure) -> serde_json::Value {
    let v = &res.survivor;
    json!({
        "penalty_groups": v.penalty_group_count(gs),
        "total_penalty_groups": gs.penalty_group_count(),
        "input_groups": v.input_groups().len(),
        "output_groups": v.output_groups().len(),
        "blocks": v.blocks().len(),
        "coefficients": v.coefficient_count(),
        "screen_stats": res.screen_stats,
    })
}

fn cmd_simulate(config: &Path, out: &Path) -> Result<()> {
    let cfg: SimConfig = serde_json::from_str(
        &fs::read_to_string(config).with_context(|| format!("reading {}", config.display()))?,
    )
    .context("parsing simulation config")?;
    let inst = simulate(&cfg)?;
    fs::create_dir_all(out)?;
    write_matrix(out.join("x.csv"), &inst.raw.x().to_owned())?;
    write_matrix(out.join("y.csv"), &inst.raw.y().to_owned())?;
    write_groups(out.join("groups.txt"), &inst.groups)?;
    write_matrix(out.join("btrue.csv"), inst.b_true.as_array())?;
    let meta = json!({
        "config": cfg,
        "seed": inst.seed(),
        "n": inst.dataset.n(),
        "j": inst.dataset.j(),
        "k": inst.dataset.k(),
        "input_groups": inst.groups.input_groups().len(),
        "output_groups": inst.groups.output_groups().len(),
        "true_nonzeros": inst.true_support().len(),
        "fingerprint": format!("{:016x}", inst.fingerprint()),
    });
    fs::write(out.join("meta.json"), serde_json::to_string_pretty(&meta)?)?;
    print_json(&meta)
}

fn cmd_screen(args: &ScreenArgs) -> Result<()> {
    let l = load(&args.data)?;
    let start = Instant::now();
    let tree = build_tree(&l.gs, args.block_inputs, args.block_outputs)?;
    let c = precompute_correlation(&l.ds);
    let (v, stats) = screen_with_stats(&tree, &c, &l.gs, &l.rp)?;
    let wall = start.elapsed().as_secs_f64() * 1e3;
    let mut out = json!({
        "survivor_group_counts": {
            "penalty_groups": v.penalty_group_count(&l.gs),
            "total_penalty_groups": l.gs.penalty_group_count(),
            "input_groups": v.input_groups().len(),
            "output_groups": v.output_groups().len(),
            "blocks": v.blocks().len(),
        },
        "survivor_coefficient_count": v.coefficient_count(),
        "nodes_visited": stats.nodes_visited,
        "nodes_skipped": stats.nodes_skipped,
        "wall_time_ms": wall,
    });
    if args.safe {
        let tree_cfg = TreeConfig {
            block_inputs: args.block_inputs,
            block_outputs: args.block_outputs,
        };
        let solver = SolverConfig::default();
        let res = fit(&l.ds, &l.gs, &l.rp, &tree_cfg, &solver)?;
        out["audit"] = serde_json::to_value(kkt_audit(&l.ds, &l.gs, &l.rp, &res, &solver)?)?;
    }
    print_json(&out)
}

fn cmd_fit(args: &FitArgs) -> Result<()> {
    let l = load(&args.data)?;
    let cfg: FitConfig = match &args.config {
        Some(p) => serde_json::from_str(
            &fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        )
        .context("parsing fit config")?,
        None => FitConfig::default(),
    };
    let res = if args.no_screen {
        higt_core::fit_without_screening(&l.ds, &l.gs, &l.rp, &cfg.solver)?
    } else {
        fit(&l.ds, &l.gs, &l.rp, &cfg.tree, &cfg.solver)?
    };
    let beta: CoefficientMatrix = match &l.scaling {
        Some(s) => s.to_raw(&res.b),
        None => res.b.clone(),
    };
    let beta_path = PathBuf::from(format!("{}.beta.csv", args.out.display()));
    let result_path = PathBuf::from(format!("{}.result.json", args.out.display()));
    if let Some(dir) = beta_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    write_matrix(&beta_path, beta.as_array())?;
    let mut result = json!({
        "lambda": l.rp,
        "screened": !args.no_screen,
        "standardized": l.scaling.is_some(),
        "screen_time_ms": res.screen_time.as_secs_f64() * 1e3,
        "solve_time_ms": res.solve_time.as_secs_f64() * 1e3,
        "iterations": res.iterations,
        "converged": res.converged,
        "final_objective": res.final_objective(),
        "objective_trace": res.objective_trace,
        "nonzeros": res.b.support(0.0).len(),
        "survivor": survivor_json(&res, &l.gs),
        "solver": cfg.solver,
        "tree": cfg.tree,
    });
    if args.safe {
        result["audit"] = serde_json::to_value(kkt_audit(&l.ds, &l.gs, &l.rp, &res, &cfg.solver)?)?;
    }
    fs::write(&result_path, serde_json::to_string_pretty(&result)?)?;
    eprintln!(
        "wrote {} and {} ({} iterations, objective {:.6e})",
        beta_path.display(),
        result_path.display(),
        res.iterations,
        res.final_objective()
    );
    Ok(())
}

fn cmd_eval(est: &Path, truth: &Path, threshold: f64) -> Result<()> {
    let e = CoefficientMatrix::from_array(read_matrix(est)?);
    let t = CoefficientMatrix::from_array(read_matrix(truth)?);
    print_json(&score(&e, &t, threshold)?)
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy())
        .unwrap_or_default();
    out.with_file_name(format!("{stem}{suffix}"))
}

fn cmd_bench(grid: &Path, out: &Path, jobs: Option<usize>) -> Result<()> {
    let mut grid: BenchGrid = serde_json::from_str(
        &fs::read_to_string(grid).with_context(|| format!("reading {}", grid.display()))?,
    )
    .context("parsing grid")?;
    if jobs.is_some() {
        grid.jobs = jobs;
    }
    let report = run_grid(&grid)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let md = sibling(out, ".md");
    let records = sibling(out, ".records.csv");
    fs::write(out, report.summary_csv())?;
    fs::write(&records, report.records_csv())?;
    fs::write(&md, report.markdown())?;
    print!("{}", report.markdown());
    eprintln!(
        "wrote {}, {} and {}",
        out.display(),
        records.display(),
        md.display()
    );
    Ok(())
}

fn cmd_tree_dump(
    groups: &Path,
    outputs: Option<usize>,
    inputs: Option<usize>,
    block_inputs: usize,
    block_outputs: usize,
) -> Result<()> {
    let gf = read_groups(groups)?;
    let span = |gs: &[Vec<usize>]| gs.iter().flatten().max().map_or(0, |m| m + 1);
    let k = outputs.unwrap_or_else(|| span(&gf.output_groups));
    let j = inputs.unwrap_or_else(|| span(&gf.input_groups));
    if k == 0 || j == 0 {
        bail!(
            "cannot infer dimensions from {}; pass --outputs and --inputs",
            groups.display()
        );
    }
    let gs = gf.into_structure(k, j)?;
    let tree = build_tree(&gs, block_inputs, block_outputs)?;
    print!("{}", tree.dump(&gs));
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Simulate { config, out } => cmd_simulate(&config, &out),
        Command::Screen(args) => cmd_screen(&args),
        Command::Fit(args) => cmd_fit(&args),
        Command::Eval {
            est,
            truth,
            threshold,
        } => cmd_eval(&est, &truth, threshold),
        Command::Bench { grid, out, jobs } => cmd_bench(&grid, &out, jobs),
        Command::Tree {
            command:
                TreeCommand::Dump {
                    groups,
                    outputs,
                    inputs,
                    block_inputs,
                    block_outputs,
                },
        } => cmd_tree_dump(&groups, outputs, inputs, block_inputs, block_outputs),
    }
}
