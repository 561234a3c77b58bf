//! GPU and network hardware descriptions.
//!
//! A [`SystemSpec`] carries per-GPU compute and memory rates plus the
//! two-tier network: a fast intra-domain fabric (NVS) and a slower
//! inter-domain fabric (IB) with one or more NICs per domain. Units are SI
//! throughout: bytes, seconds, FLOP/s; GB means 1e9 bytes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    /// Peak FP16 tensor-core rate (FLOP/s).
    pub tensor_flops: f64,
    /// Peak FP16 vector rate (FLOP/s).
    pub vector_flops: f64,
    /// Fixed launch/latency cost charged per tensor-core GEMM (s).
    pub flops_latency: f64,
    /// HBM bandwidth (bytes/s).
    pub hbm_bw: f64,
    /// HBM capacity (bytes).
    pub hbm_capacity: f64,
    /// One-directional NVS bandwidth per GPU (bytes/s).
    pub nvs_bw: f64,
    /// NVS per-hop latency (s).
    pub nvs_latency: f64,
    /// IB bandwidth per NIC (bytes/s), one-directional.
    pub ib_bw_per_nic: f64,
    /// IB per-hop latency (s).
    pub ib_latency: f64,
    /// GPUs per NVS domain.
    pub n_nvs: u64,
    /// NICs per NVS domain.
    pub n_nic: u64,
    /// Achievable fraction of nominal network bandwidth.
    pub bw_efficiency: f64,
    /// Achievable fraction of nominal HBM bandwidth.
    #[serde(default = "default_hbm_efficiency")]
    pub hbm_efficiency: f64,
    /// HBM reserved for framework overhead (bytes).
    #[serde(default)]
    pub hbm_reserve: f64,
}

fn default_hbm_efficiency() -> f64 {
    1.0
}

impl SystemSpec {
    /// Built-in GPU generations (`a100`, `h200`, `b200`) with a chosen NVS
    /// domain size. NICs per domain track the domain size and networks run
    /// at 70% of nominal bandwidth.
    pub fn builtin(gpu: &str, n_nvs: u64) -> Result<Self> {
        if n_nvs == 0 || !n_nvs.is_power_of_two() {
            return Err(Error::invalid_field(
                "n_nvs",
                format!("must be a power of two >= 1, got {n_nvs}"),
            ));
        }
        let (tensor, vector, hbm_bw, hbm_cap, nvs_bw, ib_bw) =
            match gpu.trim().to_ascii_lowercase().as_str() {
                "a100" => (312e12, 78e12, 1555e9, 80e9, 300e9, 25e9),
                "h200" => (990e12, 134e12, 4800e9, 141e9, 450e9, 50e9),
                "b200" => (2500e12, 339e12, 8000e9, 192e9, 900e9, 100e9),
                other => return Err(Error::UnknownPreset(other.to_string())),
            };
        Ok(SystemSpec {
            tensor_flops: tensor,
            vector_flops: vector,
            flops_latency: 2e-5,
            hbm_bw,
            hbm_capacity: hbm_cap,
            nvs_bw,
            nvs_latency: 2.5e-6,
            ib_bw_per_nic: ib_bw,
            ib_latency: 5e-6,
            n_nvs,
            n_nic: n_nvs,
            bw_efficiency: 0.70,
            hbm_efficiency: 1.0,
            hbm_reserve: 0.0,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("tensor_flops", self.tensor_flops),
            ("vector_flops", self.vector_flops),
            ("hbm_bw", self.hbm_bw),
            ("hbm_capacity", self.hbm_capacity),
            ("nvs_bw", self.nvs_bw),
            ("ib_bw_per_nic", self.ib_bw_per_nic),
        ];
        for (name, v) in positive {
            if v <= 0.0 || !v.is_finite() {
                return Err(Error::invalid_field(name, format!("must be > 0, got {v}")));
            }
        }
        let non_negative = [
            ("flops_latency", self.flops_latency),
            ("nvs_latency", self.nvs_latency),
            ("ib_latency", self.ib_latency),
            ("hbm_reserve", self.hbm_reserve),
        ];
        for (name, v) in non_negative {
            if v < 0.0 || !v.is_finite() {
                return Err(Error::invalid_field(name, format!("must be >= 0, got {v}")));
            }
        }
        for (name, v) in [
            ("bw_efficiency", self.bw_efficiency),
            ("hbm_efficiency", self.hbm_efficiency),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::invalid_field(
                    name,
                    format!("must be in (0, 1], got {v}"),
                ));
            }
        }
        if self.n_nvs < 1 {
            return Err(Error::invalid_field("n_nvs", "must be >= 1"));
        }
        if self.n_nic < 1 {
            return Err(Error::invalid_field("n_nic", "must be >= 1"));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let spec: SystemSpec = toml::from_str(&text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = toml::to_string_pretty(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }
}
