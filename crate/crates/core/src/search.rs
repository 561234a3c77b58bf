//! Design-space enumeration and minimum-time configuration search.

use serde::Serialize;

use crate::arch::{self, TransformerSpec};
use crate::error::{Error, Result};
use crate::hwspec::SystemSpec;
use crate::parallel::{NvsAssignment, ParallelConfig, TpStrategy};
use crate::timemodel::{self, Estimate};

/// At most this many panel-count candidates per SUMMA configuration.
const MAX_PANEL_CANDIDATES: usize = 64;

pub fn divisors(x: u64) -> Vec<u64> {
    let mut small = Vec::new();
    let mut large = Vec::new();
    let mut d = 1;
    while d * d <= x {
        if x.is_multiple_of(d) {
            small.push(d);
            if d != x / d {
                large.push(x / d);
            }
        }
        d += 1;
    }
    large.reverse();
    small.extend(large);
    small
}

/// Ordered factorizations of `n` into (n_1, n_2, n_p, n_d) that satisfy the
/// strategy's divisibility constraints against `spec` and divide the batch.
fn factorizations(
    n: u64,
    b: u64,
    spec: &TransformerSpec,
    strategy: TpStrategy,
) -> Vec<(u64, u64, u64, u64)> {
    let mut out = Vec::new();
    for n1 in divisors(n) {
        for n2 in divisors(n / n1) {
            if strategy == TpStrategy::Tp1d && n2 != 1 {
                continue;
            }
            if !tp_divisibility(spec, strategy, n1, n2) {
                continue;
            }
            for np in divisors(n / (n1 * n2)) {
                if !spec.depth.is_multiple_of(np) {
                    continue;
                }
                let nd = n / (n1 * n2 * np);
                if !b.is_multiple_of(nd) {
                    continue;
                }
                out.push((n1, n2, np, nd));
            }
        }
    }
    out
}

fn tp_divisibility(spec: &TransformerSpec, strategy: TpStrategy, n1: u64, n2: u64) -> bool {
    let (l, e, f, h) = (
        spec.seq_len,
        spec.embed_dim,
        spec.hidden_dim,
        spec.num_heads,
    );
    let basic = h % n1 == 0 && e % n1 == 0 && f % n1 == 0 && l % (n1 * n2) == 0 && l % n2 == 0;
    match strategy {
        TpStrategy::Tp1d => basic && l % n1 == 0,
        TpStrategy::Tp2d => basic,
        TpStrategy::Tp2dSumma => basic && e % n2 == 0 && f % n2 == 0,
    }
}

fn assignments(n1: u64, n2: u64, np: u64, nd: u64, n_nvs: u64) -> Vec<NvsAssignment> {
    let mut out = Vec::new();
    for a1 in divisors(n1) {
        if a1 > n_nvs {
            break;
        }
        for a2 in divisors(n2) {
            if a1 * a2 > n_nvs {
                break;
            }
            for ap in divisors(np) {
                if a1 * a2 * ap > n_nvs {
                    break;
                }
                for ad in divisors(nd) {
                    if a1 * a2 * ap * ad > n_nvs {
                        break;
                    }
                    out.push(NvsAssignment { a1, a2, ap, ad });
                }
            }
        }
    }
    out
}

fn panel_candidates(spec: &TransformerSpec, strategy: TpStrategy, n2: u64) -> Vec<u64> {
    if strategy != TpStrategy::Tp2dSumma {
        return vec![1];
    }
    let e = spec.embed_dim / n2;
    let f = spec.hidden_dim / n2;
    let g = gcd(e, f);
    let mut ds = divisors(g);
    ds.truncate(MAX_PANEL_CANDIDATES);
    ds
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Every valid configuration of `n` GPUs at global batch `b`: ordered
/// factorizations, every microbatch size dividing the replica batch, every
/// NVS assignment within the domain budget and (for SUMMA) every panel
/// count. No duplicates.
pub fn enumerate_configs<'a>(
    n: u64,
    b: u64,
    spec: &'a TransformerSpec,
    strategy: TpStrategy,
    sys: &'a SystemSpec,
) -> impl Iterator<Item = ParallelConfig> + 'a {
    let n_nvs = sys.n_nvs;
    factorizations(n, b, spec, strategy)
        .into_iter()
        .flat_map(move |(n1, n2, np, nd)| {
            let panels = panel_candidates(spec, strategy, n2);
            let assigns = assignments(n1, n2, np, nd, n_nvs);
            divisors(b / nd).into_iter().flat_map(move |bm| {
                let m = b / nd / bm;
                let assigns = assigns.clone();
                let panels = panels.clone();
                assigns.into_iter().flat_map(move |assignment| {
                    let panels = panels.clone();
                    panels.into_iter().map(move |nb| ParallelConfig {
                        strategy,
                        n1,
                        n2,
                        np,
                        nd,
                        micro_batch: bm,
                        num_microbatches: m,
                        assignment,
                        summa_panels: nb,
                    })
                })
            })
        })
}

/// Validates an explicit configuration against the architecture and system,
/// then produces its full estimate.
pub fn evaluate_config(
    cfg: &ParallelConfig,
    spec: &TransformerSpec,
    sys: &SystemSpec,
) -> Result<Estimate> {
    cfg.validate_structure(sys.n_nvs)?;
    arch::check_divisibility(spec, cfg)?;
    timemodel::iteration_estimate(spec, cfg, sys)
}

#[derive(Debug, Clone, Serialize)]
pub struct SearchResult {
    pub best: Estimate,
    /// Feasible estimates ranked fastest-first, up to the requested count.
    pub ranked: Vec<Estimate>,
    pub space_size: u64,
    pub infeasible_count: u64,
}

fn better(a: &Estimate, b: &Estimate) -> bool {
    // Lexicographic tie-break keeps the result deterministic however the
    // space is traversed.
    (a.breakdown.total, a.config.tie_break_key()) < (b.breakdown.total, b.config.tie_break_key())
}

/// Exhaustive minimum-time search over the configuration space. Fails with
/// [`Error::NoFeasibleConfig`] when nothing fits in HBM.
pub fn optimize(
    n: u64,
    b: u64,
    spec: &TransformerSpec,
    strategy: TpStrategy,
    sys: &SystemSpec,
    top_k: usize,
) -> Result<SearchResult> {
    spec.validate()?;
    sys.validate()?;
    if n == 0 || b == 0 {
        return Err(Error::InvalidConfig("n and b must be >= 1".into()));
    }
    let mut best: Option<Estimate> = None;
    let mut ranked: Vec<Estimate> = Vec::new();
    let keep = top_k.max(1);
    let mut space_size = 0u64;
    let mut infeasible = 0u64;

    for cfg in enumerate_configs(n, b, spec, strategy, sys) {
        let est = timemodel::iteration_estimate(spec, &cfg, sys)?;
        space_size += 1;
        if !est.feasible {
            infeasible += 1;
            continue;
        }
        match &best {
            Some(cur) if !better(&est, cur) => {}
            _ => best = Some(est),
        }
        if keep > 1 {
            let pos = ranked
                .partition_point(|e| (e.breakdown.total, e.config.tie_break_key())
                    <= (est.breakdown.total, est.config.tie_break_key()));
            ranked.insert(pos, est);
            ranked.truncate(keep);
        }
    }

    let best = best.ok_or(Error::NoFeasibleConfig {
        evaluated: space_size,
    })?;
    if keep == 1 {
        ranked = vec![best];
    }
    Ok(SearchResult {
        best,
        ranked,
        space_size,
        infeasible_count: infeasible,
    })
}

/// Best estimate for fixed parallel degrees and microbatch, searching only
/// the NVS assignment (and panel count for SUMMA unless pinned). This is
/// how a single point of a sweep is scored when placement is left free.
pub fn optimize_placement(
    spec: &TransformerSpec,
    sys: &SystemSpec,
    strategy: TpStrategy,
    degrees: (u64, u64, u64, u64),
    micro_batch: u64,
    num_microbatches: u64,
) -> Result<Estimate> {
    optimize_placement_with_panels(spec, sys, strategy, degrees, micro_batch, num_microbatches, None)
}

/// [`optimize_placement`] with an explicit SUMMA panel count.
#[allow(clippy::too_many_arguments)]
pub fn optimize_placement_with_panels(
    spec: &TransformerSpec,
    sys: &SystemSpec,
    strategy: TpStrategy,
    degrees: (u64, u64, u64, u64),
    micro_batch: u64,
    num_microbatches: u64,
    panels: Option<u64>,
) -> Result<Estimate> {
    let (n1, n2, np, nd) = degrees;
    let panel_set = match panels {
        Some(nb) => vec![nb],
        None => panel_candidates(spec, strategy, n2),
    };
    let mut best: Option<Estimate> = None;
    let mut seen = 0u64;
    for assignment in assignments(n1, n2, np, nd, sys.n_nvs) {
        for &nb in &panel_set {
            let cfg = ParallelConfig {
                strategy,
                n1,
                n2,
                np,
                nd,
                micro_batch,
                num_microbatches,
                assignment,
                summa_panels: nb,
            };
            let est = evaluate_config(&cfg, spec, sys)?;
            seen += 1;
            if !est.feasible {
                continue;
            }
            match &best {
                Some(cur) if !better(&est, cur) => {}
                _ => best = Some(est),
            }
        }
    }
    best.ok_or(Error::NoFeasibleConfig { evaluated: seen })
}
