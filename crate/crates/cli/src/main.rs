mod report;

use std::path::Path;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use report::{emit_rows, print_text, Format, Row, CSV_HEADER};
use trainperf::netmodel::{self, GroupLocality, RingKind};
use trainperf::search::{optimize, optimize_placement_with_panels};
use trainperf::{
    training_time_days, Error, Estimate, NvsAssignment, ParallelConfig, SystemSpec, TpStrategy,
    TransformerSpec,
};

/// Analytical performance model for large-transformer training: searches
/// parallelization configurations, explains single points, and sweeps
/// hardware axes.
#[derive(Parser)]
#[command(name = "trainperf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Find the fastest feasible configuration for a model on a system.
    Optimize(OptimizeArgs),
    /// Evaluate one explicit configuration and print its breakdown.
    Explain(ExplainArgs),
    /// Re-run the optimizer along a scale or hardware axis.
    Sweep(SweepArgs),
    /// Tabulate collective time against communication volume.
    CommCurve(CommCurveArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Model preset (gpt3-1t, vit-64k) or a model TOML file.
    #[arg(long)]
    model: String,
    /// System preset, optionally with a domain size (e.g. b200:nvs8), or a
    /// system TOML file.
    #[arg(long)]
    system: String,
    /// Global batch size in samples.
    #[arg(long, default_value_t = 4096)]
    batch: u64,
    /// Output format: text, csv or json.
    #[arg(long, default_value = "text")]
    format: Format,
    /// Token budget; training time is reported when set.
    #[arg(long)]
    tokens: Option<f64>,
    /// Sample budget; alternative to --tokens.
    #[arg(long)]
    samples: Option<f64>,
}

#[derive(Args)]
struct OptimizeArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Total GPU count.
    #[arg(long)]
    gpus: u64,
    /// Tensor-parallel strategy: tp1d, tp2d or summa.
    #[arg(long, value_parser = parse_strategy)]
    strategy: TpStrategy,
    /// Also report the next-fastest configurations.
    #[arg(long, default_value_t = 1)]
    top_k: usize,
}

#[derive(Args)]
struct ExplainArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, value_parser = parse_strategy)]
    strategy: TpStrategy,
    #[arg(long, default_value_t = 1)]
    n1: u64,
    #[arg(long, default_value_t = 1)]
    n2: u64,
    #[arg(long, default_value_t = 1)]
    np: u64,
    #[arg(long, default_value_t = 1)]
    nd: u64,
    /// Microbatch size.
    #[arg(long, default_value_t = 1)]
    bm: u64,
    /// SUMMA panel count; searched when omitted.
    #[arg(long)]
    nb: Option<u64>,
    /// NVS assignment as a1,a2,ap,ad; searched when omitted.
    #[arg(long, value_parser = parse_assignment)]
    assign: Option<NvsAssignment>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, value_parser = parse_strategy)]
    strategy: TpStrategy,
    /// Base GPU count (the swept value when the axis is gpu-count).
    #[arg(long)]
    gpus: Option<u64>,
    /// Axis: gpu-count, nvs-size, hbm-bw-cap or tensor-flops.
    #[arg(long)]
    axis: Option<String>,
    /// Strictly increasing axis values. gpu-count and nvs-size take counts;
    /// hbm-bw-cap and tensor-flops take scale factors on the base system.
    #[arg(long, value_delimiter = ',')]
    values: Vec<f64>,
    /// Named axis/values bundle: gpu-scaling, nvs-sizes, hbm-grid, flops-grid.
    #[arg(long)]
    recipe: Option<String>,
}

#[derive(Args)]
struct CommCurveArgs {
    /// System preset or TOML file.
    #[arg(long)]
    system: String,
    /// Collective: allgather, reducescatter, allreduce, broadcast, reduce, p2p.
    #[arg(long)]
    collective: String,
    /// Communicating group size.
    #[arg(long)]
    group_size: u64,
    /// Group members co-resident per NVS domain.
    #[arg(long, default_value_t = 1)]
    gpus_per_nvs: u64,
    /// Volumes in bytes; a decade sweep from 1 KB to 10 GB when omitted.
    #[arg(long, value_delimiter = ',')]
    volumes: Vec<f64>,
}

fn parse_strategy(s: &str) -> Result<TpStrategy, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_assignment(s: &str) -> Result<NvsAssignment, String> {
    let parts: Vec<u64> = s
        .split(',')
        .map(|p| p.trim().parse::<u64>().map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    if parts.len() != 4 {
        return Err("expected a1,a2,ap,ad".into());
    }
    Ok(NvsAssignment {
        a1: parts[0],
        a2: parts[1],
        ap: parts[2],
        ad: parts[3],
    })
}

fn load_model(arg: &str) -> Result<TransformerSpec, Error> {
    match TransformerSpec::builtin(arg) {
        Ok(spec) => Ok(spec),
        Err(_) if Path::new(arg).exists() => TransformerSpec::load(arg),
        Err(e) => Err(e),
    }
}

fn load_system(arg: &str) -> Result<SystemSpec, Error> {
    if let Some((gpu, nvs)) = arg.split_once(':') {
        let nvs = nvs
            .strip_prefix("nvs")
            .and_then(|v| v.parse::<u64>().ok())
            .ok_or_else(|| Error::invalid_field("system", format!("bad domain size in `{arg}`")))?;
        return SystemSpec::builtin(gpu, nvs);
    }
    match SystemSpec::builtin(arg, 8) {
        Ok(sys) => Ok(sys),
        Err(_) if Path::new(arg).exists() => SystemSpec::load(arg),
        Err(e) => Err(e),
    }
}

/// Samples implied by the budget flags, if any.
fn budget_samples(common: &CommonArgs, spec: &TransformerSpec) -> Option<f64> {
    common
        .samples
        .or_else(|| common.tokens.map(|t| t / spec.seq_len as f64))
}

fn budget_row(est: &Estimate, common: &CommonArgs, spec: &TransformerSpec) -> Row {
    let days = budget_samples(common, spec).map(|s| training_time_days(est, s, common.batch));
    Row::from_estimate(est, common.batch, days)
}

fn cmd_optimize(args: &OptimizeArgs) -> Result<(), Error> {
    let spec = load_model(&args.common.model)?;
    let sys = load_system(&args.common.system)?;
    let result = optimize(
        args.gpus,
        args.common.batch,
        &spec,
        args.strategy,
        &sys,
        args.top_k,
    )?;

    match args.common.format {
        Format::Text => {
            println!(
                "model {}  system {}  gpus {}  batch {}  strategy {}",
                args.common.model, args.common.system, args.gpus, args.common.batch, args.strategy
            );
            println!(
                "configurations evaluated: {} ({} infeasible)\n",
                result.space_size, result.infeasible_count
            );
            let samples = budget_samples(&args.common, &spec);
            let days = samples.map(|s| training_time_days(&result.best, s, args.common.batch));
            let iters = samples.map(|s| (s / args.common.batch as f64).ceil() as u64);
            print_text(&result.best, sys.hbm_capacity, days, iters);
            if args.top_k > 1 {
                println!("\nranked (fastest first):");
                println!("{CSV_HEADER}");
                for est in &result.ranked {
                    println!(
                        "{}",
                        report::csv_line(&budget_row(est, &args.common, &spec))
                    );
                }
            }
        }
        format => {
            let rows: Vec<Row> = result
                .ranked
                .iter()
                .map(|est| budget_row(est, &args.common, &spec))
                .collect();
            emit_rows(format, "optimize", &rows);
        }
    }
    Ok(())
}

fn cmd_explain(args: &ExplainArgs) -> Result<(), Error> {
    let spec = load_model(&args.common.model)?;
    let sys = load_system(&args.common.system)?;
    let b = args.common.batch;
    let denom = args.nd * args.bm;
    if denom == 0 || !b.is_multiple_of(denom) {
        return Err(Error::InvalidConfig(format!(
            "b_m = {} with n_d = {} does not divide the global batch {b}",
            args.bm, args.nd
        )));
    }
    let m = b / denom;

    let est = match args.assign {
        Some(assignment) => {
            let cfg = ParallelConfig {
                strategy: args.strategy,
                n1: args.n1,
                n2: args.n2,
                np: args.np,
                nd: args.nd,
                micro_batch: args.bm,
                num_microbatches: m,
                assignment,
                summa_panels: args.nb.unwrap_or(1),
            };
            trainperf::evaluate_config(&cfg, &spec, &sys)?
        }
        None => {
            let searched = optimize_placement_with_panels(
                &spec,
                &sys,
                args.strategy,
                (args.n1, args.n2, args.np, args.nd),
                args.bm,
                m,
                args.nb,
            );
            match searched {
                Ok(est) => est,
                // Nothing fits; still report the configuration, flagged
                // infeasible, under the trivial placement.
                Err(Error::NoFeasibleConfig { .. }) => {
                    let cfg = ParallelConfig {
                        strategy: args.strategy,
                        n1: args.n1,
                        n2: args.n2,
                        np: args.np,
                        nd: args.nd,
                        micro_batch: args.bm,
                        num_microbatches: m,
                        assignment: NvsAssignment::UNIT,
                        summa_panels: args.nb.unwrap_or(1),
                    };
                    trainperf::evaluate_config(&cfg, &spec, &sys)?
                }
                Err(e) => return Err(e),
            }
        }
    };

    match args.common.format {
        Format::Text => {
            let samples = budget_samples(&args.common, &spec);
            let days = samples.map(|s| training_time_days(&est, s, b));
            let iters = samples.map(|s| (s / b as f64).ceil() as u64);
            print_text(&est, sys.hbm_capacity, days, iters);
        }
        format => emit_rows(format, "explain", &[budget_row(&est, &args.common, &spec)]),
    }
    Ok(())
}

fn recipe_axis(recipe: &str) -> Result<(String, Vec<f64>), Error> {
    let (axis, values): (&str, Vec<f64>) = match recipe {
        "gpu-scaling" => ("gpu-count", vec![1024.0, 2048.0, 4096.0, 8192.0, 16384.0]),
        "nvs-sizes" => ("nvs-size", vec![4.0, 8.0, 64.0]),
        "hbm-grid" => ("hbm-bw-cap", vec![0.25, 0.5, 1.0, 2.0, 4.0]),
        "flops-grid" => ("tensor-flops", vec![0.25, 0.5, 1.0, 2.0, 4.0]),
        other => return Err(Error::UnknownPreset(other.to_string())),
    };
    Ok((axis.to_string(), values))
}

fn cmd_sweep(args: &SweepArgs) -> Result<(), Error> {
    let spec = load_model(&args.common.model)?;
    let base_sys = load_system(&args.common.system)?;

    let (axis, values) = match &args.recipe {
        Some(r) => recipe_axis(r)?,
        None => {
            let axis = args.axis.clone().ok_or_else(|| {
                Error::invalid_field("axis", "required unless --recipe is given")
            })?;
            (axis, args.values.clone())
        }
    };
    if values.is_empty() {
        return Err(Error::invalid_field("values", "must be non-empty"));
    }
    if values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid_field("values", "must be strictly increasing"));
    }

    let base_gpus = match axis.as_str() {
        "gpu-count" => args.gpus.unwrap_or(0), // unused
        _ => args.gpus.ok_or_else(|| {
            Error::invalid_field("gpus", "required for non-gpu-count axes")
        })?,
    };

    let mut rows = Vec::new();
    for &value in &values {
        let (n, sys) = match axis.as_str() {
            "gpu-count" => {
                if value.fract() != 0.0 || value < 1.0 {
                    return Err(Error::invalid_field("values", "gpu counts must be integers"));
                }
                (value as u64, base_sys)
            }
            "nvs-size" => {
                if value.fract() != 0.0 || value < 1.0 {
                    return Err(Error::invalid_field("values", "domain sizes must be integers"));
                }
                let mut sys = base_sys;
                sys.n_nvs = value as u64;
                sys.n_nic = value as u64;
                (base_gpus, sys)
            }
            "hbm-bw-cap" => {
                let mut sys = base_sys;
                sys.hbm_bw *= value;
                sys.hbm_capacity *= value;
                (base_gpus, sys)
            }
            "tensor-flops" => {
                let mut sys = base_sys;
                sys.tensor_flops *= value;
                sys.vector_flops *= value;
                (base_gpus, sys)
            }
            other => {
                return Err(Error::invalid_field(
                    "axis",
                    format!("unknown axis `{other}`"),
                ))
            }
        };
        let result = optimize(n, args.common.batch, &spec, args.strategy, &sys, 1)?;
        let mut row = budget_row(&result.best, &args.common, &spec);
        row.axis = Some(axis.clone());
        row.axis_value = Some(value);
        rows.push(row);
    }

    match args.common.format {
        Format::Text | Format::Csv => {
            println!("{CSV_HEADER}");
            for row in &rows {
                println!("{}", report::csv_line(row));
            }
        }
        Format::Json => emit_rows(Format::Json, "sweep", &rows),
    }
    Ok(())
}

fn cmd_comm_curve(args: &CommCurveArgs) -> Result<(), Error> {
    let sys = load_system(&args.system)?;
    if args.group_size < 1 || args.gpus_per_nvs < 1 || !args.group_size.is_multiple_of(args.gpus_per_nvs) {
        return Err(Error::invalid_field(
            "gpus_per_nvs",
            "must divide group_size",
        ));
    }
    let volumes: Vec<f64> = if args.volumes.is_empty() {
        (3..=10).map(|p| 10f64.powi(p)).collect()
    } else {
        args.volumes.clone()
    };
    let loc = GroupLocality::for_system(args.group_size, args.gpus_per_nvs, &sys);
    println!("volume_bytes,time_s");
    for &v in &volumes {
        let t = match args.collective.to_ascii_lowercase().as_str() {
            "allgather" | "ag" => netmodel::ring_time(RingKind::AllGather, v, loc, &sys),
            "reducescatter" | "rs" => netmodel::ring_time(RingKind::ReduceScatter, v, loc, &sys),
            "allreduce" | "ar" => netmodel::allreduce_time(v, loc, &sys),
            "broadcast" => netmodel::broadcast_time(v, loc, &sys),
            "reduce" => netmodel::reduce_time(v, loc, &sys),
            "p2p" => netmodel::p2p_time(v, args.gpus_per_nvs >= 2, &sys),
            other => {
                return Err(Error::invalid_field(
                    "collective",
                    format!("unknown collective `{other}`"),
                ))
            }
        };
        println!("{v:.6e},{t:.9e}");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Optimize(args) => cmd_optimize(args),
        Command::Explain(args) => cmd_explain(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::CommCurve(args) => cmd_comm_curve(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Error::NoFeasibleConfig { evaluated }) => {
            eprintln!("error: no feasible configuration fits in HBM ({evaluated} evaluated)");
            ExitCode::from(3)
        }
        Err(e @ (Error::InvalidField { .. }
        | Error::InvalidConfig(_)
        | Error::UnknownPreset(_)
        | Error::Parse(_))) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
