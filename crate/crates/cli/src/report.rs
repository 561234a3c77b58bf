//! Machine-readable report rows shared by the subcommands.

use serde::Serialize;
use trainperf::Estimate;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Text,
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "text" => Ok(Format::Text),
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(format!("unknown format `{other}` (text, csv, json)")),
        }
    }
}

/// One configuration's estimate, flattened for CSV/JSON output.
#[derive(Debug, Clone, Serialize)]
pub struct Row {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub axis: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub axis_value: Option<f64>,
    pub n_gpus: u64,
    pub batch: u64,
    pub strategy: String,
    pub n1: u64,
    pub n2: u64,
    pub np: u64,
    pub nd: u64,
    pub bm: u64,
    pub m: u64,
    pub nb: u64,
    pub a1: u64,
    pub a2: u64,
    pub ap: u64,
    pub ad: u64,
    pub feasible: bool,
    pub hbm_gb: f64,
    pub t_total_s: f64,
    pub t_compute_s: f64,
    pub t_hbm_extra_s: f64,
    pub t_tp_s: f64,
    pub t_dp_s: f64,
    pub t_pp_s: f64,
    pub t_bubble_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub days: Option<f64>,
}

impl Row {
    pub fn from_estimate(est: &Estimate, batch: u64, days: Option<f64>) -> Self {
        let c = est.config;
        let b = est.breakdown;
        Row {
            axis: None,
            axis_value: None,
            n_gpus: c.total_gpus(),
            batch,
            strategy: c.strategy.to_string(),
            n1: c.n1,
            n2: c.n2,
            np: c.np,
            nd: c.nd,
            bm: c.micro_batch,
            m: c.num_microbatches,
            nb: c.summa_panels,
            a1: c.assignment.a1,
            a2: c.assignment.a2,
            ap: c.assignment.ap,
            ad: c.assignment.ad,
            feasible: est.feasible,
            hbm_gb: est.footprint.total / 1e9,
            t_total_s: b.total,
            t_compute_s: b.compute,
            t_hbm_extra_s: b.hbm_bound_extra,
            t_tp_s: b.tp_comm_exposed,
            t_dp_s: b.dp_comm_exposed,
            t_pp_s: b.pp_comm,
            t_bubble_s: b.bubble,
            days,
        }
    }
}

pub const CSV_HEADER: &str = "axis,axis_value,n_gpus,batch,strategy,n1,n2,np,nd,bm,m,nb,a1,a2,ap,ad,\
feasible,hbm_gb,t_total_s,t_compute_s,t_hbm_extra_s,t_tp_s,t_dp_s,t_pp_s,t_bubble_s,days";

pub fn csv_line(r: &Row) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{:.6},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{}",
        r.axis.as_deref().unwrap_or(""),
        r.axis_value.map(|v| v.to_string()).unwrap_or_default(),
        r.n_gpus,
        r.batch,
        r.strategy,
        r.n1,
        r.n2,
        r.np,
        r.nd,
        r.bm,
        r.m,
        r.nb,
        r.a1,
        r.a2,
        r.ap,
        r.ad,
        r.feasible,
        r.hbm_gb,
        r.t_total_s,
        r.t_compute_s,
        r.t_hbm_extra_s,
        r.t_tp_s,
        r.t_dp_s,
        r.t_pp_s,
        r.t_bubble_s,
        r.days.map(|d| format!("{d:.4}")).unwrap_or_default(),
    )
}

pub fn emit_rows(format: Format, command: &str, rows: &[Row]) {
    match format {
        Format::Csv => {
            println!("{CSV_HEADER}");
            for row in rows {
                println!("{}", csv_line(row));
            }
        }
        Format::Json | Format::Text => {
            #[derive(Serialize)]
            struct Doc<'a> {
                schema_version: u32,
                command: &'a str,
                rows: &'a [Row],
            }
            let doc = Doc {
                schema_version: SCHEMA_VERSION,
                command,
                rows,
            };
            println!("{}", serde_json::to_string_pretty(&doc).unwrap());
        }
    }
}

fn pct(part: f64, total: f64) -> f64 {
    if total > 0.0 {
        100.0 * part / total
    } else {
        0.0
    }
}

/// Human-readable report for a single estimate.
pub fn print_text(est: &Estimate, hbm_capacity: f64, days: Option<f64>, iterations: Option<u64>) {
    let c = est.config;
    let b = est.breakdown;
    println!("configuration:");
    println!(
        "  strategy {}  n1 {}  n2 {}  pipeline {}  data-parallel {}  microbatch {} (m = {})",
        c.strategy, c.n1, c.n2, c.np, c.nd, c.micro_batch, c.num_microbatches
    );
    if c.strategy == trainperf::TpStrategy::Tp2dSumma {
        println!("  summa panels {}", c.summa_panels);
    }
    println!(
        "  nvs assignment: n1 {} / n2 {} / pp {} / dp {}",
        c.assignment.a1, c.assignment.a2, c.assignment.ap, c.assignment.ad
    );
    let fp = est.footprint;
    println!(
        "  hbm per gpu: {:.2} GB of {:.2} GB ({}; weights {:.2}, grads {:.2}, optimizer {:.2}, activations {:.2}, masks {:.2})",
        fp.total / 1e9,
        hbm_capacity / 1e9,
        if est.feasible { "fits" } else { "exceeds capacity" },
        fp.weights / 1e9,
        fp.gradients / 1e9,
        fp.optimizer / 1e9,
        fp.activations / 1e9,
        fp.masks / 1e9,
    );
    println!("iteration time: {:.6} s", b.total);
    println!("  compute     {:>12.6} s  ({:5.1}%)", b.compute, pct(b.compute, b.total));
    println!(
        "  hbm extra   {:>12.6} s  ({:5.1}%)",
        b.hbm_bound_extra,
        pct(b.hbm_bound_extra, b.total)
    );
    println!(
        "  tp comm     {:>12.6} s  ({:5.1}%)",
        b.tp_comm_exposed,
        pct(b.tp_comm_exposed, b.total)
    );
    println!(
        "  dp comm     {:>12.6} s  ({:5.1}%)",
        b.dp_comm_exposed,
        pct(b.dp_comm_exposed, b.total)
    );
    println!("  pp comm     {:>12.6} s  ({:5.1}%)", b.pp_comm, pct(b.pp_comm, b.total));
    println!("  bubble      {:>12.6} s  ({:5.1}%)", b.bubble, pct(b.bubble, b.total));
    if let (Some(days), Some(iters)) = (days, iterations) {
        println!("training: {iters} iterations, {days:.2} days");
    }
}
