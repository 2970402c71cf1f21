//! Plaintext Bloom filter: geometry from a target false-positive rate,
//! construction, insertion, query, and the index derivation shared with the
//! secret-shared evaluation path.
//!
//! Indices are a multiset. When two hash functions land on the same slot the
//! slot is listed twice, so the shared sum over a member's slots is exactly
//! κ and never less.

use std::net::Ipv4Addr;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modmath::{smallest_prime_geq, universal_hash, HashSpec};
use crate::rng;

/// Filters longer than this are refused.
pub const MAX_BETA: u64 = 1 << 32;

/// The approximation `(1 - p)^κ ≈ 0.6185^(β/η)` for the false-positive rate.
pub const FP_BASE: f64 = 0.6185;

/// How the hash modulus q is chosen relative to β.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HashModulusRule {
    /// Smallest prime above both β and the 32-bit key space. Distinct keys
    /// never alias before the final `mod β`, so the κ hashes act
    /// independently.
    #[default]
    AboveKeySpace,
    /// Smallest prime above β. Keys congruent mod q collide on every hash,
    /// which puts a floor of roughly η/q under the false-positive rate.
    AboveBeta,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BloomParams {
    pub eta: u64,
    pub beta: u64,
    pub kappa: usize,
    pub target_fp: f64,
    pub hashes: Vec<HashSpec>,
    /// Probability a given bit is still zero after η insertions.
    pub bit_zero_prob: f64,
}

impl BloomParams {
    /// Explicit geometry, for tests and hand-built filters.
    pub fn with_hashes(eta: u64, beta: u64, hashes: Vec<HashSpec>) -> Result<Self> {
        let kappa = hashes.len();
        let p = BloomParams {
            eta,
            beta,
            kappa,
            target_fp: estimated_fp(eta, beta, kappa),
            hashes,
            bit_zero_prob: bit_zero_probability(eta, beta, kappa),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.kappa < 1 || self.eta < 1 || self.beta < self.kappa as u64 {
            return Err(Error::Param(format!(
                "need κ ≥ 1, η ≥ 1, β ≥ κ (got κ={}, η={}, β={})",
                self.kappa, self.eta, self.beta
            )));
        }
        if self.beta > MAX_BETA {
            return Err(Error::Param(format!("β = {} exceeds {MAX_BETA}", self.beta)));
        }
        if self.hashes.len() != self.kappa {
            return Err(Error::Param(format!(
                "{} hash functions for κ = {}",
                self.hashes.len(),
                self.kappa
            )));
        }
        for (i, h) in self.hashes.iter().enumerate() {
            h.validate()?;
            if h.q <= self.beta {
                return Err(Error::Param(format!(
                    "hash modulus {} must exceed β = {}",
                    h.q, self.beta
                )));
            }
            if self.hashes[..i].iter().any(|g| (g.a, g.b) == (h.a, h.b)) {
                return Err(Error::Param(format!("duplicate hash coefficients ({}, {})", h.a, h.b)));
            }
        }
        Ok(())
    }
}

pub fn bit_zero_probability(eta: u64, beta: u64, kappa: usize) -> f64 {
    (1.0 - 1.0 / beta as f64).powf(kappa as f64 * eta as f64)
}

pub fn estimated_fp(eta: u64, beta: u64, kappa: usize) -> f64 {
    (1.0 - bit_zero_probability(eta, beta, kappa)).powi(kappa as i32)
}

pub fn derive_params(eta: u64, target_fp: f64, seed: u64) -> Result<BloomParams> {
    derive_params_with(eta, target_fp, seed, HashModulusRule::default())
}

/// β from `fp ≈ 0.6185^(β/η)`, then κ = round((β/η) ln 2), then κ hash
/// functions drawn from a generator seeded by `seed`.
pub fn derive_params_with(
    eta: u64,
    target_fp: f64,
    seed: u64,
    rule: HashModulusRule,
) -> Result<BloomParams> {
    if eta == 0 {
        return Err(Error::Param("η must be at least 1".into()));
    }
    if !(target_fp > 0.0 && target_fp < 1.0) {
        return Err(Error::Param(format!("target false-positive rate {target_fp} not in (0, 1)")));
    }
    let beta_real = (eta as f64 * target_fp.ln() / FP_BASE.ln()).ceil();
    if !beta_real.is_finite() || beta_real > MAX_BETA as f64 {
        return Err(Error::Param(format!(
            "false-positive target {target_fp} needs β beyond {MAX_BETA}"
        )));
    }
    let beta = (beta_real as u64).max(1);
    let kappa = ((beta as f64 / eta as f64) * std::f64::consts::LN_2).round().max(1.0) as usize;
    let floor = match rule {
        HashModulusRule::AboveKeySpace => beta.max(u32::MAX as u64),
        HashModulusRule::AboveBeta => beta,
    };
    let q = smallest_prime_geq(floor + 1)?;

    let mut gen = rng::derive(seed, &[0x6861_7368]);
    let mut hashes: Vec<HashSpec> = Vec::with_capacity(kappa);
    let distinct = (q - 1) as u128 * (q - 1) as u128;
    if distinct < kappa as u128 {
        return Err(Error::Param(format!("q = {q} cannot supply {kappa} distinct hash functions")));
    }
    while hashes.len() < kappa {
        let h = HashSpec {
            a: gen.gen_range(1..q),
            b: gen.gen_range(1..q),
            q,
        };
        if !hashes.iter().any(|g| (g.a, g.b) == (h.a, h.b)) {
            hashes.push(h);
        }
    }
    Ok(BloomParams {
        eta,
        beta,
        kappa,
        target_fp,
        hashes,
        bit_zero_prob: bit_zero_probability(eta, beta, kappa),
    })
}

/// The κ slots `key` maps to, in hash order, duplicates kept.
pub fn indices(key: u32, params: &BloomParams) -> Vec<usize> {
    params
        .hashes
        .iter()
        .map(|h| universal_hash(key as u64, h, params.beta) as usize)
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BloomFilter {
    params: BloomParams,
    bits: Vec<bool>,
}

// f64 fields in params are derived from the integer ones, so Eq is sound.
impl Eq for BloomParams {}

impl BloomFilter {
    pub fn empty(params: BloomParams) -> Self {
        let bits = vec![false; params.beta as usize];
        BloomFilter { params, bits }
    }

    pub fn params(&self) -> &BloomParams {
        &self.params
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn into_bits(self) -> Vec<bool> {
        self.bits
    }

    pub fn popcount(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn insert(&mut self, key: u32) {
        for j in indices(key, &self.params) {
            self.bits[j] = true;
        }
    }

    pub fn contains(&self, key: u32) -> bool {
        indices(key, &self.params).into_iter().all(|j| self.bits[j])
    }
}

pub fn build_filter(keys: &[u32], params: &BloomParams) -> BloomFilter {
    let mut f = BloomFilter::empty(params.clone());
    for &k in keys {
        f.insert(k);
    }
    f
}

pub fn query(filter: &BloomFilter, key: u32) -> bool {
    filter.contains(key)
}

pub fn insert(mut filter: BloomFilter, key: u32) -> BloomFilter {
    filter.insert(key);
    filter
}

/// Big-endian integer value of a dotted quad.
pub fn addr_key(addr: Ipv4Addr) -> u32 {
    u32::from(addr)
}

/// One IPv4 dotted quad per line; `#` starts a comment.
pub fn parse_blacklist(text: &str) -> Result<Vec<u32>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let addr = Ipv4Addr::from_str(line)
            .map_err(|_| Error::Input(format!("line {}: '{line}' is not an IPv4 address", n + 1)))?;
        out.push(addr_key(addr));
    }
    Ok(out)
}
