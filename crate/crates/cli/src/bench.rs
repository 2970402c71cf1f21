//! Timing sweeps over filter width, hash count and party count.

use std::io::Write;
use std::time::Instant;

use clap::ValueEnum;
use ofw_core::bloom::BloomParams;
use ofw_core::firewall::{eval_product_servers, eval_sum_server, firewall_init, FilterConfig, ProductPath};
use ofw_core::modmath::{smallest_prime_geq, HashSpec};
use ofw_core::sharing::{LocalNet, SchemeConfig};
use ofw_core::transport::sim::ADDR_BITS;
use ofw_core::{rng, Field, Result};
use rand::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Sweep {
    /// Initialization time against β, m fixed
    InitBeta,
    /// Initialization time against m, β fixed
    InitM,
    /// Sum-protocol evaluation against κ, m fixed
    SumKappa,
    /// Sum-protocol evaluation against m, κ fixed
    SumM,
    /// Product-protocol evaluation against κ, m fixed
    ProductKappa,
    /// Product-protocol evaluation against m, κ fixed
    ProductM,
}

impl Sweep {
    fn name(self) -> &'static str {
        match self {
            Sweep::InitBeta => "init-beta",
            Sweep::InitM => "init-m",
            Sweep::SumKappa => "sum-kappa",
            Sweep::SumM => "sum-m",
            Sweep::ProductKappa => "product-kappa",
            Sweep::ProductM => "product-m",
        }
    }

    pub fn default_values(self) -> Vec<u64> {
        match self {
            Sweep::InitBeta => vec![1_000, 10_000, 100_000, 1_000_000],
            Sweep::InitM => vec![3, 5, 10, 15, 20],
            Sweep::SumKappa => (1..=20).collect(),
            Sweep::SumM => vec![3, 5, 8, 10, 12, 15, 18, 20],
            Sweep::ProductKappa => vec![1, 2, 4, 8, 12, 16, 20],
            Sweep::ProductM => vec![3, 5, 7, 9],
        }
    }
}

pub struct BenchSpec {
    pub sweep: Sweep,
    pub values: Vec<u64>,
    /// The axis held constant: m for β and κ sweeps, β or κ for m sweeps.
    pub fixed: Option<u64>,
    pub queries: usize,
    pub seed: u64,
    pub modulus: u64,
}

#[derive(Clone, Copy, Debug)]
pub struct Row {
    pub beta: u64,
    pub kappa: usize,
    pub m: usize,
    pub runtime_ns: u64,
    pub bytes: u64,
    pub rounds: u64,
}

pub const CSV_HEADER: &str = "sweep,beta,kappa,m,runtime_ns,bytes,rounds";

/// κ random hash functions onto β slots.
fn params(beta: u64, kappa: usize, eta: u64, seed: u64) -> Result<BloomParams> {
    let q = smallest_prime_geq(beta.max(u32::MAX as u64) + 1)?;
    let mut g = rng::derive(seed, &[beta, kappa as u64]);
    let hashes = (0..kappa)
        .map(|_| HashSpec {
            a: g.gen_range(1..q),
            b: g.gen_range(1..q),
            q,
        })
        .collect();
    BloomParams::with_hashes(eta, beta, hashes)
}

fn scheme(m: usize, modulus: u64) -> Result<SchemeConfig> {
    SchemeConfig::shamir(m, 2.min(m), Field::new(modulus)?)
}

fn bytes_of(bits: u64) -> u64 {
    bits.div_ceil(8)
}

fn init_row(beta: u64, m: usize, spec: &BenchSpec) -> Result<Row> {
    // Roughly the fill of a filter sized for 1% false positives.
    let eta = (beta / 10).max(1);
    let bloom = params(beta, 7, eta, spec.seed)?;
    let cfg = FilterConfig::new(scheme(m, spec.modulus)?, bloom)?;
    let mut g = rng::derive(spec.seed, &[1]);
    let keys: Vec<u32> = (0..eta).map(|_| g.gen()).collect();
    let start = Instant::now();
    let (states, _) = firewall_init(&keys, &cfg, &mut g)?;
    let runtime_ns = start.elapsed().as_nanos() as u64;
    Ok(Row {
        beta,
        kappa: 7,
        m,
        runtime_ns,
        bytes: states.len() as u64 * beta * 8,
        rounds: 0,
    })
}

fn sum_row(kappa: usize, m: usize, spec: &BenchSpec) -> Result<Row> {
    let beta = 10_000;
    let cfg = FilterConfig::new(scheme(m, spec.modulus)?, params(beta, kappa, 500, spec.seed)?)?;
    let mut g = rng::derive(spec.seed, &[2]);
    let keys: Vec<u32> = (0..500).map(|_| g.gen()).collect();
    let (states, _) = firewall_init(&keys, &cfg, &mut g)?;
    let probes: Vec<u32> = (0..spec.queries).map(|_| g.gen()).collect();
    let mut sink = 0u64;
    let start = Instant::now();
    for &k in &probes {
        for s in &states {
            sink ^= eval_sum_server(k, s).value.value();
        }
    }
    let elapsed = start.elapsed().as_nanos() as u64;
    std::hint::black_box(sink);
    let ell = cfg.scheme.share_bits() as u64;
    Ok(Row {
        beta,
        kappa,
        m,
        runtime_ns: elapsed / spec.queries.max(1) as u64,
        bytes: bytes_of(m as u64 * (ADDR_BITS + ell)),
        rounds: 1,
    })
}

fn product_row(kappa: usize, m: usize, spec: &BenchSpec) -> Result<Row> {
    let beta = 10_000;
    let cfg = FilterConfig::new(scheme(m, spec.modulus)?, params(beta, kappa, 500, spec.seed)?)?;
    let mut g = rng::derive(spec.seed, &[3]);
    let keys: Vec<u32> = (0..500).map(|_| g.gen()).collect();
    let (states, _) = firewall_init(&keys, &cfg, &mut g)?;
    let probes: Vec<u32> = (0..spec.queries).map(|_| g.gen()).collect();
    let mut net = LocalNet::new(spec.seed);
    let start = Instant::now();
    for &k in &probes {
        std::hint::black_box(eval_product_servers(k, &states, &mut net, ProductPath::Tree)?);
    }
    let elapsed = start.elapsed().as_nanos() as u64;
    let n = spec.queries.max(1) as u64;
    let t = net.traffic();
    let ell = cfg.scheme.share_bits() as u64;
    Ok(Row {
        beta,
        kappa,
        m,
        runtime_ns: elapsed / n,
        bytes: bytes_of(t.bits(cfg.scheme.share_bits()) / n + m as u64 * (ADDR_BITS + ell)),
        rounds: 1 + t.rounds / n,
    })
}

pub fn run(spec: &BenchSpec) -> Result<Vec<Row>> {
    let values = if spec.values.is_empty() {
        spec.sweep.default_values()
    } else {
        spec.values.clone()
    };
    values
        .into_iter()
        .map(|v| match spec.sweep {
            Sweep::InitBeta => init_row(v, spec.fixed.unwrap_or(10) as usize, spec),
            Sweep::InitM => init_row(spec.fixed.unwrap_or(100_000), v as usize, spec),
            Sweep::SumKappa => sum_row(v as usize, spec.fixed.unwrap_or(20) as usize, spec),
            Sweep::SumM => sum_row(spec.fixed.unwrap_or(20) as usize, v as usize, spec),
            Sweep::ProductKappa => product_row(v as usize, spec.fixed.unwrap_or(5) as usize, spec),
            Sweep::ProductM => product_row(spec.fixed.unwrap_or(10) as usize, v as usize, spec),
        })
        .collect()
}

pub fn write_csv<W: Write>(out: &mut W, sweep: Sweep, rows: &[Row]) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            sweep.name(),
            r.beta,
            r.kappa,
            r.m,
            r.runtime_ns,
            r.bytes,
            r.rounds
        )?;
    }
    Ok(())
}
