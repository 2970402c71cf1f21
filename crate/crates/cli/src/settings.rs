//! Config file plus command-line overrides.

use std::path::Path;

use clap::{Args, ValueEnum};
use ofw_core::bloom::derive_params_with;
use ofw_core::detection::{DecisionPath, FailPolicy};
use ofw_core::firewall::{EvalMode, FilterConfig, ProductPath};
use ofw_core::sharing::SchemeKind;
use ofw_core::transport::sim::{BloomSpec, SchemeSpec};
use ofw_core::transport::{GatewaySpec, TimingPolicy};
use ofw_core::{Error, Result};
use serde::Deserialize;

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SchemeArg {
    Shamir,
    Additive,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum PolicyArg {
    /// Drop the packet
    Closed,
    /// Forward the packet
    Open,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ProtocolArg {
    Sum,
    Product,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum PathArg {
    Tree,
    Fanin,
}

/// Overrides accepted by every subcommand.
#[derive(Args, Clone, Debug, Default)]
pub struct Overrides {
    /// TOML config file
    #[arg(long, global = true)]
    pub config: Option<std::path::PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub scheme: Option<SchemeArg>,
    /// Number of servers (m)
    #[arg(short = 'm', long, global = true)]
    pub parties: Option<usize>,
    /// Reconstruction threshold (t)
    #[arg(short = 't', long, global = true)]
    pub threshold: Option<usize>,
    /// Prime modulus N
    #[arg(long, global = true)]
    pub modulus: Option<u64>,
    /// Target false-positive rate
    #[arg(long, global = true)]
    pub fp: Option<f64>,
    /// Filter capacity (η)
    #[arg(long, global = true)]
    pub eta: Option<u64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    pub fail_policy: Option<PolicyArg>,
    /// Response window in milliseconds
    #[arg(long, global = true)]
    pub window_ms: Option<f64>,
    #[arg(long, global = true, value_enum)]
    pub protocol: Option<ProtocolArg>,
    #[arg(long, global = true, value_enum)]
    pub product_path: Option<PathArg>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    seed: Option<u64>,
    window_ms: Option<f64>,
    scheme: Option<SchemeSpec>,
    bloom: Option<BloomSpec>,
    gateway: Option<GatewaySpec>,
}

/// Resolved settings.
#[derive(Debug)]
pub struct Settings {
    pub seed: Option<u64>,
    pub scheme: SchemeSpec,
    pub bloom: BloomSpec,
    pub gateway: GatewaySpec,
    pub timing: TimingPolicy,
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Input(format!("cannot read {}: {e}", path.display())))
}

impl Settings {
    pub fn load(o: &Overrides) -> Result<Self> {
        let file: FileConfig = match &o.config {
            Some(p) => toml::from_str(&read_text(p)?).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
            None => FileConfig::default(),
        };
        let mut scheme = file.scheme.unwrap_or(SchemeSpec {
            kind: SchemeKind::Shamir,
            parties: 3,
            threshold: Some(2),
            modulus: None,
        });
        if let Some(s) = o.scheme {
            scheme.kind = match s {
                SchemeArg::Shamir => SchemeKind::Shamir,
                SchemeArg::Additive => SchemeKind::Additive,
            };
        }
        if let Some(m) = o.parties {
            scheme.parties = m;
        }
        if o.threshold.is_some() {
            scheme.threshold = o.threshold;
        }
        if o.modulus.is_some() {
            scheme.modulus = o.modulus;
        }
        scheme.build()?;

        let mut bloom = file.bloom.unwrap_or_default();
        if let Some(fp) = o.fp {
            bloom.fp = fp;
        }
        if o.eta.is_some() {
            bloom.eta = o.eta;
        }

        let mut gateway = file.gateway.unwrap_or_default();
        if let Some(p) = o.fail_policy {
            gateway.fail_policy = match p {
                PolicyArg::Closed => FailPolicy::Closed,
                PolicyArg::Open => FailPolicy::Open,
            };
        }
        if let Some(p) = o.protocol {
            gateway.protocol = match p {
                ProtocolArg::Sum => EvalMode::Sum,
                ProtocolArg::Product => EvalMode::Product,
            };
        }
        if let Some(p) = o.product_path {
            gateway.product_path = match p {
                PathArg::Tree => ProductPath::Tree,
                PathArg::Fanin => ProductPath::Fanin,
            };
        }
        if gateway.decision_path != DecisionPath::Auto {
            log::info!("decision path forced to {:?}", gateway.decision_path);
        }

        let mut timing = TimingPolicy::networked();
        if let Some(w) = o.window_ms.or(file.window_ms) {
            timing.window_ms = w;
        }
        timing.validate()?;
        Ok(Settings {
            seed: o.seed.or(file.seed),
            scheme,
            bloom,
            gateway,
            timing,
        })
    }

    pub fn filter_config(&self, blacklist_len: usize) -> Result<FilterConfig> {
        let eta = self.bloom.eta.unwrap_or(blacklist_len.max(1) as u64);
        let hash_seed = self.bloom.hash_seed.or(self.seed).unwrap_or_else(rand::random);
        let bloom = derive_params_with(eta, self.bloom.fp, hash_seed, self.bloom.hash_rule)?;
        FilterConfig::new(self.scheme.build()?, bloom)
    }
}
