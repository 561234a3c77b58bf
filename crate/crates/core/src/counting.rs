//! FLOP, HBM-byte, communication-volume and memory-footprint counting.
//!
//! All counts are exact integers for one microbatch on one pipeline stage's
//! GPU; the time layer converts them to seconds.

use serde::Serialize;

use crate::arch::{
    self, BlockOp, CollectiveKind, CommGroup, OpKind, OpMath, TransformerSpec,
};
use crate::error::{Error, Result};
use crate::parallel::ParallelConfig;

/// Per-element FLOP estimates for the non-matmul ops. These ops are
/// memory-bound, so byte counts dominate and the exact constants barely
/// move results.
pub const LAYERNORM_FLOPS_PER_ELEM: u64 = 5;
pub const SOFTMAX_FLOPS_PER_ELEM: u64 = 5;
pub const GELU_FLOPS_PER_ELEM: u64 = 8;
pub const DROPOUT_FLOPS_PER_ELEM: u64 = 1;
pub const BIAS_FLOPS_PER_ELEM: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Forward,
    Backward,
}

/// FLOPs (split by execution class) and HBM traffic of one operation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct OpCost {
    /// Tensor-core-class FLOPs.
    pub tensor_flops: u64,
    /// Vector-class FLOPs.
    pub vector_flops: u64,
    pub hbm_bytes: u64,
}

impl OpCost {
    pub fn flops(&self) -> u64 {
        self.tensor_flops + self.vector_flops
    }

    fn add(&mut self, other: &OpCost) {
        self.tensor_flops += other.tensor_flops;
        self.vector_flops += other.vector_flops;
        self.hbm_bytes += other.hbm_bytes;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum OverlapClass {
    Exposed,
    /// Hidden behind the last backward / first forward microbatch.
    OverlapDpWindow,
    /// Hidden behind SUMMA panel compute after the prologue pair.
    OverlapSummaPipeline,
}

/// One communication event: what, how much, over whom, and how it may
/// overlap with compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CollectiveEvent {
    pub kind: CollectiveKind,
    pub volume_bytes: u64,
    pub group_size: u64,
    pub gpus_per_nvs_in_group: u64,
    pub overlap: OverlapClass,
}

/// Cost of the matrix product C = A B with A (m x k) and B (k x n):
/// (2k - 1) m n FLOPs and 2 (mk + kn + mn) bytes at FP16.
pub fn matmul_cost(m: u64, k: u64, n: u64) -> OpCost {
    OpCost {
        tensor_flops: (2 * k - 1) * m * n,
        vector_flops: 0,
        hbm_bytes: 2 * (m * k + k * n + m * n),
    }
}

/// Fused logit-softmax-attend region. Bytes cover only the fused inputs
/// (Q, K, V) and the output; the l x l map is never materialized. When
/// `dropout` is set, attention-probability dropout runs inside the fusion
/// and only its one-byte mask touches HBM. Backward re-runs the forward
/// recompute plus the two gradient products of each matmul.
pub fn fused_attention_cost(
    batch: u64,
    heads: u64,
    q_len: u64,
    kv_len: u64,
    head_dim: u64,
    phase: Phase,
    dropout: bool,
) -> OpCost {
    let per_head = (2 * head_dim - 1) * q_len * kv_len + (2 * kv_len - 1) * q_len * head_dim;
    let matmul = batch * heads * per_head;
    let map_elems = batch * heads * q_len * kv_len;
    let vector = SOFTMAX_FLOPS_PER_ELEM * map_elems
        + if dropout {
            DROPOUT_FLOPS_PER_ELEM * map_elems
        } else {
            0
        };
    let io_bytes = 2 * batch * heads * head_dim * (2 * q_len + 2 * kv_len);
    let mask_bytes = if dropout { map_elems } else { 0 };
    match phase {
        Phase::Forward => OpCost {
            tensor_flops: matmul,
            vector_flops: vector,
            hbm_bytes: io_bytes + mask_bytes,
        },
        Phase::Backward => OpCost {
            tensor_flops: 3 * matmul,
            vector_flops: 2 * vector,
            hbm_bytes: 2 * io_bytes + mask_bytes,
        },
    }
}

/// Elementwise op cost. Forward reads the input and writes the output at
/// two bytes each; dropout adds a one-byte mask write. Backward re-reads
/// the stored input (or mask) alongside the gradient streams.
pub fn vector_op_cost(kind: OpKind, numel: u64, phase: Phase) -> Result<OpCost> {
    let per_elem = match kind {
        OpKind::LayerNorm => LAYERNORM_FLOPS_PER_ELEM,
        OpKind::Softmax => SOFTMAX_FLOPS_PER_ELEM,
        OpKind::Gelu => GELU_FLOPS_PER_ELEM,
        OpKind::Dropout => DROPOUT_FLOPS_PER_ELEM,
        OpKind::BiasAdd => BIAS_FLOPS_PER_ELEM,
        other => {
            return Err(Error::InvalidConfig(format!(
                "{other:?} is not a vector op"
            )))
        }
    };
    let bytes = match (kind, phase) {
        (OpKind::Dropout, _) => 5 * numel,
        (OpKind::BiasAdd, _) => 4 * numel,
        (_, Phase::Forward) => 4 * numel,
        (_, Phase::Backward) => 6 * numel,
    };
    Ok(OpCost {
        tensor_flops: 0,
        vector_flops: per_elem * numel,
        hbm_bytes: bytes,
    })
}

/// SUMMA panel structure of a distributed matmul: broadcast volumes and the
/// local panel GEMM shape. Backward runs `products` transposed products,
/// each with a broadcast + reduce pair of the same volumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SummaComm {
    pub act_bytes: u64,
    pub weight_bytes: u64,
    /// Local rows, global inner dimension and local columns of the product.
    pub m: u64,
    pub k: u64,
    pub n: u64,
    pub products: u32,
}

/// One costed block operation with its exposed collectives.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostedOp {
    pub kind: OpKind,
    pub cost: OpCost,
    pub comm: Vec<CollectiveEvent>,
    pub summa: Option<SummaComm>,
}

/// All costed ops of one block for one phase.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockCost {
    pub ops: Vec<CostedOp>,
}

impl BlockCost {
    pub fn total(&self) -> OpCost {
        let mut acc = OpCost::default();
        for op in &self.ops {
            acc.add(&op.cost);
        }
        acc
    }

    /// All collective events of the block, including the SUMMA broadcast
    /// pairs expanded per product.
    pub fn events(&self) -> Vec<CollectiveEvent> {
        let mut out = Vec::new();
        for op in &self.ops {
            out.extend(op.comm.iter().copied());
        }
        out
    }

    pub fn comm_volume(&self) -> u64 {
        self.events().iter().map(|e| e.volume_bytes).sum()
    }
}

fn group_size(cfg: &ParallelConfig, group: CommGroup) -> u64 {
    match group {
        CommGroup::Row => cfg.n1,
        CommGroup::Col => cfg.n2,
    }
}

fn group_nvs(cfg: &ParallelConfig, group: CommGroup) -> u64 {
    match group {
        CommGroup::Row => cfg.assignment.a1,
        CommGroup::Col => cfg.assignment.a2,
    }
}

fn conjugate(kind: CollectiveKind) -> CollectiveKind {
    match kind {
        CollectiveKind::AllGather => CollectiveKind::ReduceScatter,
        CollectiveKind::ReduceScatter => CollectiveKind::AllGather,
        CollectiveKind::Broadcast => CollectiveKind::Reduce,
        CollectiveKind::Reduce => CollectiveKind::Broadcast,
        other => other,
    }
}

fn events_for_op(op: &BlockOp, cfg: &ParallelConfig, phase: Phase) -> Vec<CollectiveEvent> {
    op.comm
        .iter()
        .filter(|c| group_size(cfg, c.group) > 1)
        .map(|c| CollectiveEvent {
            kind: match phase {
                Phase::Forward => c.kind,
                Phase::Backward => conjugate(c.kind),
            },
            volume_bytes: c.volume_bytes,
            group_size: group_size(cfg, c.group),
            gpus_per_nvs_in_group: group_nvs(cfg, c.group),
            overlap: if matches!(c.kind, CollectiveKind::Broadcast | CollectiveKind::Reduce) {
                OverlapClass::OverlapSummaPipeline
            } else {
                OverlapClass::Exposed
            },
        })
        .collect()
}

/// Costs one block of the transformer under `cfg` for one microbatch,
/// attaching the tensor-parallel collectives each op incurs. Backward emits
/// the conjugate collectives (gathers and scatters swap; SUMMA products
/// emit broadcast + reduce pairs twice).
pub fn block_cost(spec: &TransformerSpec, cfg: &ParallelConfig, phase: Phase) -> Result<BlockCost> {
    let ops = arch::block_ops(spec, cfg)?;
    let dropout = spec.include_dropout;
    let mut out = Vec::with_capacity(ops.len());
    for op in &ops {
        let (cost, summa) = match op.math {
            OpMath::Matmul { m, k, n, summa } => {
                let mut base = matmul_cost(m, k, n);
                if summa {
                    // Panelization re-touches the accumulator once per panel.
                    base.hbm_bytes = 2 * (m * k + k * n + cfg.summa_panels * m * n);
                }
                let products = match phase {
                    Phase::Forward => 1,
                    Phase::Backward => 2,
                };
                let cost = match phase {
                    Phase::Forward => base,
                    Phase::Backward => OpCost {
                        tensor_flops: 2 * base.tensor_flops,
                        vector_flops: 0,
                        hbm_bytes: 2 * base.hbm_bytes,
                    },
                };
                let summa_info = if summa {
                    let act = op
                        .comm
                        .iter()
                        .find(|c| c.group == CommGroup::Row)
                        .map(|c| c.volume_bytes)
                        .unwrap_or(0);
                    let weight = op
                        .comm
                        .iter()
                        .find(|c| c.group == CommGroup::Col)
                        .map(|c| c.volume_bytes)
                        .unwrap_or(0);
                    Some(SummaComm {
                        act_bytes: act,
                        weight_bytes: weight,
                        m,
                        k,
                        n,
                        products,
                    })
                } else {
                    None
                };
                (cost, summa_info)
            }
            OpMath::FusedAttention {
                batch,
                heads,
                q_len,
                kv_len,
                head_dim,
            } => (
                fused_attention_cost(batch, heads, q_len, kv_len, head_dim, phase, dropout),
                None,
            ),
            OpMath::Vector { numel } => (vector_op_cost(op.kind, numel, phase)?, None),
        };
        let mut comm = events_for_op(op, cfg, phase);
        if let Some(info) = &summa {
            // Re-emit the panel pair per product: forward broadcasts the
            // activation and weight panels; each transposed backward product
            // broadcasts one operand and reduces the partial result. K/V
            // gathers attached to the same op stay ordinary exposed events.
            comm.retain(|e| {
                !matches!(e.kind, CollectiveKind::Broadcast | CollectiveKind::Reduce)
            });
            let pair = |kind, volume_bytes, group: CommGroup| CollectiveEvent {
                kind,
                volume_bytes,
                group_size: group_size(cfg, group),
                gpus_per_nvs_in_group: group_nvs(cfg, group),
                overlap: OverlapClass::OverlapSummaPipeline,
            };
            for _ in 0..info.products {
                comm.push(pair(CollectiveKind::Broadcast, info.act_bytes, CommGroup::Row));
                comm.push(pair(
                    match phase {
                        Phase::Forward => CollectiveKind::Broadcast,
                        Phase::Backward => CollectiveKind::Reduce,
                    },
                    info.weight_bytes,
                    CommGroup::Col,
                ));
            }
            comm.retain(|e| e.group_size > 1);
        }
        out.push(CostedOp {
            kind: op.kind,
            cost,
            comm,
            summa,
        });
    }
    Ok(BlockCost { ops: out })
}

/// Data-parallel gradient/weight collectives and pipeline point-to-point
/// transfers for a full iteration.
pub fn dp_and_pp_events(spec: &TransformerSpec, cfg: &ParallelConfig) -> Result<Vec<CollectiveEvent>> {
    let mut events = Vec::new();
    let p_loc = local_param_count(spec, cfg)?;
    let dp_group = cfg.dp_group();
    if dp_group > 1 {
        let volume = 2 * p_loc;
        let g = cfg.dp_gpus_per_nvs();
        events.push(CollectiveEvent {
            kind: CollectiveKind::ReduceScatter,
            volume_bytes: volume,
            group_size: dp_group,
            gpus_per_nvs_in_group: g,
            overlap: OverlapClass::OverlapDpWindow,
        });
        events.push(CollectiveEvent {
            kind: CollectiveKind::AllGather,
            volume_bytes: volume,
            group_size: dp_group,
            gpus_per_nvs_in_group: g,
            overlap: OverlapClass::OverlapDpWindow,
        });
    }
    if cfg.np > 1 {
        let volume = 2 * cfg.num_microbatches * cfg.micro_batch * spec.seq_len * spec.embed_dim
            / cfg.tp_degree();
        let g = if cfg.assignment.ap >= 2 { 2 } else { 1 };
        for _ in 0..cfg.np - 1 {
            events.push(CollectiveEvent {
                kind: CollectiveKind::PointToPoint,
                volume_bytes: volume,
                group_size: 2,
                gpus_per_nvs_in_group: g,
                overlap: OverlapClass::Exposed,
            });
        }
    }
    Ok(events)
}

/// Parameters resident on one GPU (its pipeline stage's share).
pub fn local_param_count(spec: &TransformerSpec, cfg: &ParallelConfig) -> Result<u64> {
    let per_block = arch::block_local_params(spec, cfg)?;
    Ok(per_block * (spec.depth / cfg.np))
}

/// Per-GPU memory footprint in bytes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MemoryFootprint {
    pub weights: f64,
    pub gradients: f64,
    pub optimizer: f64,
    pub activations: f64,
    pub masks: f64,
    pub hbm_reserve: f64,
    pub total: f64,
}

/// Memory held on one GPU: FP16 weights and gradient-accumulation buffers,
/// optimizer state sharded over the data-parallel group, and the stored
/// activations/masks of the in-flight microbatches. The 1F1B schedule keeps
/// at most `min(m, n_p)` microbatches alive; FlashAttention stores no
/// l x l intermediate.
pub fn memory_footprint(
    spec: &TransformerSpec,
    cfg: &ParallelConfig,
    hbm_reserve: f64,
) -> Result<MemoryFootprint> {
    let ops = arch::block_ops(spec, cfg)?;
    let p_loc = local_param_count(spec, cfg)? as f64;
    let blocks = (spec.depth / cfg.np) as f64;
    let retained = cfg.num_microbatches.min(cfg.np) as f64;

    let stored_per_block: u64 = ops.iter().map(|op| op.stored_elems).sum();
    let mask_per_block: u64 = ops.iter().map(|op| op.mask_elems).sum();

    let weights = 2.0 * p_loc;
    let gradients = 2.0 * p_loc;
    let optimizer = 12.0 * p_loc / cfg.nd as f64;
    let activations = blocks * retained * 2.0 * stored_per_block as f64;
    let masks = blocks * retained * mask_per_block as f64;
    let total = weights + gradients + optimizer + activations + masks + hbm_reserve;
    Ok(MemoryFootprint {
        weights,
        gradients,
        optimizer,
        activations,
        masks,
        hbm_reserve,
        total,
    })
}
