//! Roofline op times, collective exposure, pipeline bubbles and the full
//! iteration estimate.

use serde::Serialize;

use crate::arch::{CollectiveKind, TransformerSpec};
use crate::counting::{
    self, BlockCost, CollectiveEvent, CostedOp, MemoryFootprint, OpCost, Phase,
};
use crate::error::Result;
use crate::hwspec::SystemSpec;
use crate::netmodel::{self, GroupLocality, RingKind};
use crate::parallel::ParallelConfig;

/// Seconds in a day.
const DAY: f64 = 86_400.0;

/// Roofline time of one operation: the slower of the FLOP side (tensor-core
/// work pays the fixed GEMM latency) and the HBM side.
pub fn roofline_time(cost: &OpCost, sys: &SystemSpec) -> f64 {
    let (flops_side, hbm_extra) = roofline_split(cost, sys);
    flops_side + hbm_extra
}

/// The FLOP-side time and whatever additional time HBM traffic forces
/// beyond it. Their sum is the roofline time.
pub fn roofline_split(cost: &OpCost, sys: &SystemSpec) -> (f64, f64) {
    let mut flops_side = 0.0;
    if cost.tensor_flops > 0 {
        flops_side += sys.flops_latency + cost.tensor_flops as f64 / sys.tensor_flops;
    }
    if cost.vector_flops > 0 {
        flops_side += cost.vector_flops as f64 / sys.vector_flops;
    }
    let mem = cost.hbm_bytes as f64 / (sys.hbm_bw * sys.hbm_efficiency);
    (flops_side, (mem - flops_side).max(0.0))
}

fn event_time(ev: &CollectiveEvent, sys: &SystemSpec) -> f64 {
    let loc = GroupLocality::for_system(ev.group_size, ev.gpus_per_nvs_in_group, sys);
    let v = ev.volume_bytes as f64;
    match ev.kind {
        CollectiveKind::AllGather => netmodel::ring_time(RingKind::AllGather, v, loc, sys),
        CollectiveKind::ReduceScatter => netmodel::ring_time(RingKind::ReduceScatter, v, loc, sys),
        CollectiveKind::AllReduce => netmodel::allreduce_time(v, loc, sys),
        CollectiveKind::Broadcast => netmodel::broadcast_time(v, loc, sys),
        CollectiveKind::Reduce => netmodel::reduce_time(v, loc, sys),
        CollectiveKind::PointToPoint => {
            netmodel::p2p_time(v, ev.gpus_per_nvs_in_group >= 2, sys)
        }
    }
}

/// Per-microbatch stage time split into its exposed parts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct StageComponents {
    pub compute: f64,
    pub hbm_extra: f64,
    pub tp_comm: f64,
}

impl StageComponents {
    pub fn total(&self) -> f64 {
        self.compute + self.hbm_extra + self.tp_comm
    }
}

fn summa_op_time(
    op: &CostedOp,
    cfg: &ParallelConfig,
    sys: &SystemSpec,
    acc: &mut StageComponents,
) {
    let info = op.summa.expect("summa op");
    let nb = cfg.summa_panels;
    let panel_flops = op.cost.tensor_flops as f64 / (info.products as f64 * nb as f64);
    let kb = info.k / nb;
    let panel_bytes = 2 * (info.m * kb + kb * info.n + info.m * info.n);

    let flops_side = sys.flops_latency + panel_flops / sys.tensor_flops;
    let mem = panel_bytes as f64 / (sys.hbm_bw * sys.hbm_efficiency);
    let hbm_extra = (mem - flops_side).max(0.0);
    let panel_time = flops_side + hbm_extra;

    // Panel broadcast pair: activation panels along process rows, weight
    // panels along process columns. The first pair is a prologue; later
    // pairs overlap the previous panel's GEMM.
    let row_loc = GroupLocality::for_system(cfg.n1, cfg.assignment.a1, sys);
    let col_loc = GroupLocality::for_system(cfg.n2, cfg.assignment.a2, sys);
    let pair = netmodel::broadcast_time(info.act_bytes as f64 / nb as f64, row_loc, sys)
        + netmodel::broadcast_time(info.weight_bytes as f64 / nb as f64, col_loc, sys);

    let products = info.products as f64;
    acc.compute += products * nb as f64 * flops_side;
    acc.hbm_extra += products * nb as f64 * hbm_extra;
    acc.tp_comm += products * (pair + nb as f64 * (pair - panel_time).max(0.0));
}

fn stage_components(block: &BlockCost, cfg: &ParallelConfig, sys: &SystemSpec) -> StageComponents {
    let mut acc = StageComponents::default();
    for op in &block.ops {
        if op.summa.is_some() {
            summa_op_time(op, cfg, sys, &mut acc);
        } else {
            let (flops_side, hbm_extra) = roofline_split(&op.cost, sys);
            acc.compute += flops_side;
            acc.hbm_extra += hbm_extra;
        }
        // Panel-pair events are charged through the overlap formula above;
        // everything else is exposed serially.
        for ev in &op.comm {
            if ev.overlap == counting::OverlapClass::Exposed {
                acc.tp_comm += event_time(ev, sys);
            }
        }
    }
    acc
}

/// Forward and backward time of one microbatch through one pipeline stage
/// (its `d / n_p` blocks), tensor-parallel collectives exposed.
pub fn microbatch_stage_times(
    spec: &TransformerSpec,
    cfg: &ParallelConfig,
    sys: &SystemSpec,
) -> Result<(f64, f64)> {
    let (f, b) = stage_component_pair(spec, cfg, sys)?;
    Ok((f.total(), b.total()))
}

fn stage_component_pair(
    spec: &TransformerSpec,
    cfg: &ParallelConfig,
    sys: &SystemSpec,
) -> Result<(StageComponents, StageComponents)> {
    let fwd = counting::block_cost(spec, cfg, Phase::Forward)?;
    let bwd = counting::block_cost(spec, cfg, Phase::Backward)?;
    let blocks = (spec.depth / cfg.np) as f64;
    let scale = |c: StageComponents| StageComponents {
        compute: blocks * c.compute,
        hbm_extra: blocks * c.hbm_extra,
        tp_comm: blocks * c.tp_comm,
    };
    Ok((
        scale(stage_components(&fwd, cfg, sys)),
        scale(stage_components(&bwd, cfg, sys)),
    ))
}

/// Iteration time decomposition. `total` is the sum of the six components;
/// the steady state is `m * (t_f + t_b)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeBreakdown {
    pub compute: f64,
    pub hbm_bound_extra: f64,
    pub tp_comm_exposed: f64,
    pub dp_comm_exposed: f64,
    pub pp_comm: f64,
    pub bubble: f64,
    pub total: f64,
    /// Per-microbatch forward stage time.
    pub t_f: f64,
    /// Per-microbatch backward stage time.
    pub t_b: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub breakdown: TimeBreakdown,
    pub footprint: MemoryFootprint,
    pub feasible: bool,
    pub config: ParallelConfig,
}

/// Full iteration estimate: steady-state microbatches, the (n_p - 1) fill/
/// drain bubble, data-parallel exposure outside its overlap windows, and
/// the un-overlapped pipeline point-to-point transfer.
pub fn iteration_estimate(
    spec: &TransformerSpec,
    cfg: &ParallelConfig,
    sys: &SystemSpec,
) -> Result<Estimate> {
    let (f, b) = stage_component_pair(spec, cfg, sys)?;
    let t_f = f.total();
    let t_b = b.total();
    let m = cfg.num_microbatches as f64;

    // Ratio-first keeps bubble / steady equal to (n_p - 1) / m exactly.
    let steady = m * (t_f + t_b);
    let bubble = ((cfg.np - 1) as f64 / m) * steady;

    // Gradient reduce-scatter hides behind the last microbatch's backward,
    // the weight gather behind the first forward after the flush.
    let mut dp_exposed = 0.0;
    let dp_group = cfg.dp_group();
    if dp_group > 1 {
        let volume = (2 * counting::local_param_count(spec, cfg)?) as f64;
        let loc = GroupLocality::for_system(dp_group, cfg.dp_gpus_per_nvs(), sys);
        let t_rs = netmodel::ring_time(RingKind::ReduceScatter, volume, loc, sys);
        let t_ag = netmodel::ring_time(RingKind::AllGather, volume, loc, sys);
        dp_exposed = (t_rs - t_b).max(0.0) + (t_ag - t_f).max(0.0);
    }

    // Stages transfer concurrently, so the critical path pays one boundary's
    // worth of activations per iteration.
    let mut pp_comm = 0.0;
    if cfg.np > 1 {
        let volume = (2 * cfg.num_microbatches * cfg.micro_batch * spec.seq_len * spec.embed_dim
            / cfg.tp_degree()) as f64;
        pp_comm = netmodel::p2p_time(volume, cfg.assignment.ap >= 2, sys);
    }

    let compute = m * (f.compute + b.compute);
    let hbm_bound_extra = m * (f.hbm_extra + b.hbm_extra);
    let tp_comm_exposed = m * (f.tp_comm + b.tp_comm);
    let total = compute + hbm_bound_extra + tp_comm_exposed + dp_exposed + pp_comm + bubble;

    let footprint = counting::memory_footprint(spec, cfg, sys.hbm_reserve)?;
    Ok(Estimate {
        breakdown: TimeBreakdown {
            compute,
            hbm_bound_extra,
            tp_comm_exposed,
            dp_comm_exposed: dp_exposed,
            pp_comm,
            bubble,
            total,
            t_f,
            t_b,
        },
        footprint,
        feasible: footprint.total <= sys.hbm_capacity,
        config: *cfg,
    })
}

/// Days to process `total_samples` at global batch `b`, one `est.total`
/// iteration per batch.
pub fn training_time_days(est: &Estimate, total_samples: f64, global_batch: u64) -> f64 {
    let iterations = (total_samples / global_batch as f64).ceil();
    iterations * est.breakdown.total / DAY
}
