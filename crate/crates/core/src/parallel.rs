//! Parallel configuration: one point in the design space.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tensor-parallel strategy for the block's weight/activation partitioning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TpStrategy {
    /// 1D tensor parallelism over `n_t = n_1` GPUs (sequence split included).
    Tp1d,
    /// 2D tensor parallelism over an `n_1 x n_2` grid (heads/width x sequence).
    Tp2d,
    /// 2D grid with SUMMA-blocked weight matmuls (no shared weights).
    Tp2dSumma,
}

impl TpStrategy {
    pub fn as_str(&self) -> &'static str {
        match self {
            TpStrategy::Tp1d => "tp1d",
            TpStrategy::Tp2d => "tp2d",
            TpStrategy::Tp2dSumma => "summa",
        }
    }

    pub fn is_2d(&self) -> bool {
        !matches!(self, TpStrategy::Tp1d)
    }
}

impl FromStr for TpStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tp1d" | "1d" => Ok(TpStrategy::Tp1d),
            "tp2d" | "2d" => Ok(TpStrategy::Tp2d),
            "summa" | "tp2d-summa" | "2d-summa" => Ok(TpStrategy::Tp2dSumma),
            other => Err(Error::UnknownPreset(other.to_string())),
        }
    }
}

impl fmt::Display for TpStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Ordering key for deterministic winner selection among equal-time
/// configurations: (n_p, n_2, n_1, n_d, b_m, assignment, n_b).
pub type TieBreakKey = (u64, u64, u64, u64, u64, (u64, u64, u64, u64), u64);

/// How many GPUs of each parallel group are co-resident in one NVS domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NvsAssignment {
    pub a1: u64,
    pub a2: u64,
    pub ap: u64,
    pub ad: u64,
}

impl NvsAssignment {
    pub const UNIT: NvsAssignment = NvsAssignment {
        a1: 1,
        a2: 1,
        ap: 1,
        ad: 1,
    };

    pub fn product(&self) -> u64 {
        self.a1 * self.a2 * self.ap * self.ad
    }

    fn key(&self) -> (u64, u64, u64, u64) {
        (self.a1, self.a2, self.ap, self.ad)
    }
}

/// One point in the design space: parallel degrees, microbatching, GPU
/// placement on the NVS domain, and the SUMMA panel count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParallelConfig {
    pub strategy: TpStrategy,
    pub n1: u64,
    pub n2: u64,
    pub np: u64,
    pub nd: u64,
    /// Microbatch size `b_m`.
    pub micro_batch: u64,
    /// Microbatch count per replica, `m = b / (n_d * b_m)`.
    pub num_microbatches: u64,
    pub assignment: NvsAssignment,
    /// SUMMA panel count `n_b`; 1 for non-SUMMA strategies.
    pub summa_panels: u64,
}

impl ParallelConfig {
    /// Single-GPU configuration processing the whole batch in `m` microbatches.
    pub fn serial(strategy: TpStrategy, micro_batch: u64, num_microbatches: u64) -> Self {
        ParallelConfig {
            strategy,
            n1: 1,
            n2: 1,
            np: 1,
            nd: 1,
            micro_batch,
            num_microbatches,
            assignment: NvsAssignment::UNIT,
            summa_panels: 1,
        }
    }

    /// Total GPU count `n = n_1 * n_2 * n_p * n_d`.
    pub fn total_gpus(&self) -> u64 {
        self.n1 * self.n2 * self.np * self.nd
    }

    /// Tensor-parallel degree `n_t = n_1 * n_2`.
    pub fn tp_degree(&self) -> u64 {
        self.n1 * self.n2
    }

    /// Global batch this configuration processes per iteration.
    pub fn global_batch(&self) -> u64 {
        self.nd * self.micro_batch * self.num_microbatches
    }

    /// Group over which gradients are reduce-scattered and weights gathered.
    /// The 2D variants fold the n_2 weight-gradient reduction into it.
    pub fn dp_group(&self) -> u64 {
        match self.strategy {
            TpStrategy::Tp1d => self.nd,
            _ => self.nd * self.n2,
        }
    }

    /// NVS co-residency of the combined data-parallel group.
    pub fn dp_gpus_per_nvs(&self) -> u64 {
        match self.strategy {
            TpStrategy::Tp1d => self.assignment.ad,
            _ => self.assignment.ad * self.assignment.a2,
        }
    }

    /// Deterministic tie-break key: smallest wins on equal iteration time.
    pub fn tie_break_key(&self) -> TieBreakKey {
        (
            self.np,
            self.n2,
            self.n1,
            self.nd,
            self.micro_batch,
            self.assignment.key(),
            self.summa_panels,
        )
    }

    /// Structural validation independent of any architecture: degree bounds,
    /// strategy shape, assignment divisibility, NVS budget.
    pub fn validate_structure(&self, n_nvs: u64) -> Result<()> {
        for (name, v) in [
            ("n_1", self.n1),
            ("n_2", self.n2),
            ("n_p", self.np),
            ("n_d", self.nd),
            ("b_m", self.micro_batch),
            ("m", self.num_microbatches),
            ("n_b", self.summa_panels),
        ] {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be >= 1")));
            }
        }
        if self.strategy == TpStrategy::Tp1d && self.n2 != 1 {
            return Err(Error::InvalidConfig(format!(
                "n_2 must be 1 under tp1d (got {})",
                self.n2
            )));
        }
        if self.strategy != TpStrategy::Tp2dSumma && self.summa_panels != 1 {
            return Err(Error::InvalidConfig(format!(
                "n_b must be 1 for non-SUMMA strategies (got {})",
                self.summa_panels
            )));
        }
        let a = &self.assignment;
        for (name, ai, ni) in [
            ("a_1", a.a1, self.n1),
            ("a_2", a.a2, self.n2),
            ("a_p", a.ap, self.np),
            ("a_d", a.ad, self.nd),
        ] {
            if ai == 0 || ni % ai != 0 {
                return Err(Error::InvalidConfig(format!(
                    "{name} = {ai} does not divide its group size {ni}"
                )));
            }
        }
        if a.product() > n_nvs {
            return Err(Error::InvalidConfig(format!(
                "NVS assignment product {} exceeds domain size {n_nvs}",
                a.product()
            )));
        }
        Ok(())
    }
}
