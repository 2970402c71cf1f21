//! Blacklist queries over a secret-shared Bloom filter.
//!
//! Two evaluation protocols are offered. The sum protocol needs no server
//! interaction: each server adds its shares at the address's κ positions
//! and the gateway reconstructs σ, which equals κ exactly for members. The
//! product protocol multiplies the κ shared bits among the servers, so the
//! gateway only ever sees π ∈ {0, 1}.

mod decide;
mod insert;

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

pub use decide::{gateway_decide, Fallback, GatewayPolicy, Verdict};
pub use insert::{insert_transaction, InsertParticipant, StagedInsert};

use crate::bloom::{self, BloomParams};
use crate::detection::FailPolicy;
use crate::error::{Error, Result};
use crate::sharing::{Channel, LocalNet, Party, PartyId, SchemeConfig, SchemeKind, Share, ShareVector};

pub type ConfigDigest = [u8; 32];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    #[default]
    Sum,
    Product,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProductPath {
    /// Zero-safe, ceil(log2 κ) multiplication rounds.
    #[default]
    Tree,
    /// Constant rounds, but opens a zero whenever an indexed bit is 0.
    Fanin,
}

/// Everything all servers must agree on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub scheme: SchemeConfig,
    pub bloom: BloomParams,
}

impl FilterConfig {
    pub fn new(scheme: SchemeConfig, bloom: BloomParams) -> Result<Self> {
        let c = FilterConfig { scheme, bloom };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        self.scheme.validate()?;
        self.bloom.validate()?;
        // σ ≤ κ must not wrap.
        if self.bloom.kappa as u64 >= self.scheme.field.modulus() {
            return Err(Error::Config(format!(
                "κ = {} needs a modulus above it, N = {}",
                self.bloom.kappa,
                self.scheme.field.modulus()
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: FilterConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn digest(&self) -> ConfigDigest {
        let canon = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&canon).into()
    }
}

/// One server's view: the shared configuration and its share vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FirewallState {
    config: FilterConfig,
    digest: ConfigDigest,
    shares: ShareVector,
    staged: Option<StagedInsert>,
    last_commit: Option<StagedInsert>,
}

impl Eq for FilterConfig {}

impl FirewallState {
    pub fn new(config: FilterConfig, shares: ShareVector) -> Result<Self> {
        config.validate()?;
        if shares.config() != &config.scheme {
            return Err(Error::Config("share vector was made for a different scheme".into()));
        }
        if shares.len() as u64 != config.bloom.beta {
            return Err(Error::Config(format!(
                "share vector has {} slots, filter has β = {}",
                shares.len(),
                config.bloom.beta
            )));
        }
        Ok(FirewallState {
            digest: config.digest(),
            config,
            shares,
            staged: None,
            last_commit: None,
        })
    }

    pub fn config(&self) -> &FilterConfig {
        &self.config
    }

    pub fn digest(&self) -> ConfigDigest {
        self.digest
    }

    pub fn shares(&self) -> &ShareVector {
        &self.shares
    }

    pub fn party(&self) -> PartyId {
        self.shares.party()
    }

    pub fn indices(&self, key: u32) -> Vec<usize> {
        bloom::indices(key, &self.config.bloom)
    }

    /// This server's shares at the key's positions, with multiplicity.
    pub fn indexed_shares(&self, key: u32) -> Vec<u64> {
        self.indices(key).into_iter().map(|j| self.shares.get(j)).collect()
    }

    /// Overwrites one stored share. Used to model tampering.
    pub fn overwrite_share(&mut self, index: usize, value: u64) -> Result<()> {
        if index >= self.shares.len() {
            return Err(Error::Input(format!("slot {index} beyond β = {}", self.shares.len())));
        }
        let v = self.config.scheme.field.reduce(value);
        self.shares.set(index, v);
        Ok(())
    }

    /// Sets every slot of `key` to this party's share of the public
    /// constant 1, so the bit reads 1 whatever it was.
    pub fn insert_rule(&mut self, key: u32) {
        let staged = self.stage_insert(key);
        self.apply(&staged);
    }

    fn stage_insert(&self, key: u32) -> StagedInsert {
        let mut idx = self.indices(key);
        idx.sort_unstable();
        idx.dedup();
        StagedInsert {
            key,
            previous: idx.iter().map(|&j| (j, self.shares.get(j))).collect(),
        }
    }

    fn apply(&mut self, staged: &StagedInsert) {
        let one = crate::sharing::public_share_value(&self.config.scheme, self.party(), 1);
        for &(j, _) in &staged.previous {
            self.shares.set(j, one);
        }
    }

    fn undo(&mut self, staged: &StagedInsert) {
        for &(j, old) in &staged.previous {
            self.shares.set(j, old);
        }
    }
}

/// Builds the plaintext filter, shares every bit independently and returns
/// one state per server. The plaintext filter is dropped before returning.
pub fn firewall_init<R: Rng + ?Sized>(
    blacklist: &[u32],
    config: &FilterConfig,
    rng: &mut R,
) -> Result<(Vec<FirewallState>, ConfigDigest)> {
    config.validate()?;
    let scheme = &config.scheme;
    let filter = bloom::build_filter(blacklist, &config.bloom);
    let (m, t, f) = (scheme.parties, scheme.threshold, scheme.field);
    let n = f.modulus();
    let beta = config.bloom.beta as usize;
    let mut cols: Vec<Vec<u64>> = (0..m).map(|_| Vec::with_capacity(beta)).collect();
    let mut coeffs = vec![0u64; t];
    for &bit in filter.bits() {
        let s = bit as u64;
        match scheme.scheme {
            SchemeKind::Shamir => {
                coeffs[0] = s;
                for c in coeffs.iter_mut().skip(1) {
                    *c = rng.gen_range(0..n);
                }
                for (i, col) in cols.iter_mut().enumerate() {
                    col.push(f.eval_poly(&coeffs, (i + 1) as u64));
                }
            }
            SchemeKind::Additive => {
                let mut last = s;
                for col in cols.iter_mut().take(m - 1) {
                    let r = rng.gen_range(0..n);
                    last = f.sub(last, r);
                    col.push(r);
                }
                cols[m - 1].push(last);
            }
        }
    }
    drop(filter);
    let states = cols
        .into_iter()
        .enumerate()
        .map(|(i, col)| FirewallState::new(config.clone(), ShareVector::new((i + 1) as PartyId, col, *scheme)?))
        .collect::<Result<Vec<_>>>()?;
    Ok((states, config.digest()))
}

/// Local share of σ: the sum of this server's shares at the κ positions.
pub fn eval_sum_server(key: u32, state: &FirewallState) -> Share {
    let f = state.config.scheme.field;
    let sigma = state.indexed_shares(key).into_iter().fold(0, |acc, v| f.add(acc, v));
    Share {
        party: state.party(),
        value: f.elem(sigma),
        scheme: state.config.scheme.scheme,
    }
}

/// One server's side of the product protocol. Returns its share of π and
/// whether a fan-in opening revealed a zero.
pub async fn eval_product_party<C: Channel>(
    party: &mut Party<C>,
    key: u32,
    state: &FirewallState,
    path: ProductPath,
) -> Result<(u64, bool)> {
    let bits = state.indexed_shares(key);
    match path {
        ProductPath::Tree => Ok((party.tree_product(&bits).await?, false)),
        ProductPath::Fanin => {
            let o = party.fanin_product(&bits).await?;
            Ok((o.share, o.zero_revealed))
        }
    }
}

fn check_servers(states: &[&FirewallState]) -> Result<FilterConfig> {
    let first = states.first().ok_or_else(|| Error::Config("no servers".into()))?;
    let cfg = first.config.clone();
    if states.len() != cfg.scheme.parties {
        return Err(Error::Protocol(format!(
            "the product protocol needs all {} servers, {} present",
            cfg.scheme.parties,
            states.len()
        )));
    }
    for (i, s) in states.iter().enumerate() {
        if s.digest != first.digest {
            return Err(Error::Config(format!("server {} holds a different configuration", s.party())));
        }
        if s.party() as usize != i + 1 {
            return Err(Error::Input("servers must be listed in party order".into()));
        }
    }
    Ok(cfg)
}

fn wrap(values: Vec<u64>, cfg: &SchemeConfig) -> Vec<Share> {
    values
        .into_iter()
        .enumerate()
        .map(|(i, v)| Share {
            party: (i + 1) as PartyId,
            value: cfg.field.elem(v),
            scheme: cfg.scheme,
        })
        .collect()
}

/// Runs the product protocol among all servers in-process.
pub fn eval_product_servers(
    key: u32,
    states: &[FirewallState],
    net: &mut LocalNet,
    path: ProductPath,
) -> Result<(Vec<Share>, bool)> {
    let refs: Vec<&FirewallState> = states.iter().collect();
    let cfg = check_servers(&refs)?;
    cfg.scheme.require_multiplication()?;
    let out = net.run(&cfg.scheme, |mut party| {
        let state = &states[party.index()];
        async move { eval_product_party(&mut party, key, state, path).await }
    })?;
    let leaked = out.iter().any(|o| o.1);
    Ok((wrap(out.into_iter().map(|o| o.0).collect(), &cfg.scheme), leaked))
}

/// One server's side of a conjunction over several filters: a product per
/// filter, then the product of those, so only the overall bit leaves.
pub async fn compose_party<C: Channel>(
    party: &mut Party<C>,
    queries: &[(&FirewallState, u32)],
    path: ProductPath,
) -> Result<(u64, bool)> {
    let lists: Vec<Vec<u64>> = queries.iter().map(|(s, k)| s.indexed_shares(*k)).collect();
    let (per_filter, leaked) = match path {
        ProductPath::Tree => (party.tree_products(&lists).await?, false),
        ProductPath::Fanin => {
            let mut out = Vec::with_capacity(lists.len());
            let mut leaked = false;
            for l in &lists {
                let o = party.fanin_product(l).await?;
                leaked |= o.zero_revealed;
                out.push(o.share);
            }
            (out, leaked)
        }
    };
    Ok((party.tree_product(&per_filter).await?, leaked))
}

/// Named filters held by one server.
pub type FilterSet = BTreeMap<String, FirewallState>;

/// Evaluates the conjunction of several filters, each queried with its own
/// key (source address, destination address, ...), and decides on the
/// combined bit.
pub fn compose_filters(
    queries: &[(&str, u32)],
    servers: &[FilterSet],
    net: &mut LocalNet,
    path: ProductPath,
    policy: &GatewayPolicy,
) -> Result<Verdict> {
    if queries.is_empty() {
        return Err(Error::Input("no filters to compose".into()));
    }
    let mut per_server: Vec<Vec<(&FirewallState, u32)>> = Vec::with_capacity(servers.len());
    for set in servers {
        let mut row = Vec::with_capacity(queries.len());
        for &(name, key) in queries {
            let st = set
                .get(name)
                .ok_or_else(|| Error::Config(format!("filter {name:?} is not initialized")))?;
            row.push((st, key));
        }
        per_server.push(row);
    }
    let mut cfg = None;
    for q in 0..queries.len() {
        let col: Vec<&FirewallState> = per_server.iter().map(|r| r[q].0).collect();
        let c = check_servers(&col)?;
        match &cfg {
            None => cfg = Some(c),
            Some(prev) if prev.scheme != c.scheme => {
                return Err(Error::Config("composed filters use different sharing schemes".into()))
            }
            _ => {}
        }
    }
    let cfg = cfg.unwrap();
    cfg.scheme.require_multiplication()?;
    let out = net.run(&cfg.scheme, |mut party| {
        let row = per_server[party.index()].clone();
        async move { compose_party(&mut party, &row, path).await }
    })?;
    let leaked = out.iter().any(|o| o.1);
    let shares = wrap(out.into_iter().map(|o| o.0).collect(), &cfg.scheme);
    let mut v = gateway_decide(&shares, &cfg, EvalMode::Product, policy)?;
    v.leakage_warning = leaked;
    Ok(v)
}

/// Plaintext-free convenience used by tests and the simulator: every
/// server's σ share for `key`.
pub fn sum_responses(key: u32, states: &[FirewallState]) -> Vec<Share> {
    states.iter().map(|s| eval_sum_server(key, s)).collect()
}

impl Default for GatewayPolicy {
    fn default() -> Self {
        GatewayPolicy {
            fail_policy: FailPolicy::default(),
            whitelist: false,
            path: Default::default(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bloom::derive_params;
    use crate::detection::Decision;
    use crate::modmath::Field;
    use crate::sharing::reveal;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn config(m: usize, t: usize, eta: u64, fp: f64) -> FilterConfig {
        FilterConfig::new(
            SchemeConfig::shamir(m, t, Field::default()).unwrap(),
            derive_params(eta, fp, 7).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn kappa_must_fit_the_field() {
        let bloom = derive_params(10, 0.01, 1).unwrap();
        let scheme = SchemeConfig::shamir(3, 2, Field::new(5).unwrap()).unwrap();
        assert!(matches!(FilterConfig::new(scheme, bloom), Err(Error::Config(_))));
    }

    #[test]
    fn empty_blacklist_reveals_zeros() {
        let cfg = config(3, 2, 50, 0.01);
        let (states, _) = firewall_init(&[], &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        for j in 0..cfg.bloom.beta as usize {
            let sh: Vec<Share> = states.iter().map(|s| s.shares().share(j)).collect();
            assert_eq!(reveal(&sh, &cfg.scheme).unwrap().value(), 0);
        }
    }

    #[test]
    fn shared_filter_matches_plaintext() {
        for scheme in [
            SchemeConfig::shamir(3, 2, Field::default()).unwrap(),
            SchemeConfig::additive(3, Field::default()).unwrap(),
        ] {
            let cfg = FilterConfig::new(scheme, derive_params(100, 0.01, 2).unwrap()).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(2);
            let list: Vec<u32> = (0..100).map(|_| rng.gen()).collect();
            let plain = bloom::build_filter(&list, &cfg.bloom);
            let (states, digest) = firewall_init(&list, &cfg, &mut rng).unwrap();
            assert_eq!(digest, cfg.digest());
            for j in 0..cfg.bloom.beta as usize {
                let sh: Vec<Share> = states.iter().map(|s| s.shares().share(j)).collect();
                assert_eq!(reveal(&sh, &cfg.scheme).unwrap().value(), plain.bits()[j] as u64);
            }
        }
    }

    #[test]
    fn sigma_counts_set_positions() {
        let cfg = config(5, 3, 20, 0.01);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let list: Vec<u32> = (0..20).map(|_| rng.gen()).collect();
        let plain = bloom::build_filter(&list, &cfg.bloom);
        let (states, _) = firewall_init(&list, &cfg, &mut rng).unwrap();
        for &k in &list {
            let v = gateway_decide(&sum_responses(k, &states), &cfg, EvalMode::Sum, &GatewayPolicy::default()).unwrap();
            assert_eq!(v.value, Some(cfg.bloom.kappa as u64));
            assert_eq!(v.decision, Decision::Block);
        }
        for _ in 0..200 {
            let k: u32 = rng.gen();
            let expect = bloom::indices(k, &cfg.bloom).iter().filter(|&&j| plain.bits()[j]).count() as u64;
            let sh = sum_responses(k, &states);
            assert_eq!(reveal(&sh, &cfg.scheme).unwrap().value(), expect);
        }
    }

    #[test]
    fn insert_sets_and_is_idempotent() {
        let cfg = config(3, 2, 30, 0.01);
        let (mut states, _) = firewall_init(&[1, 2, 3], &cfg, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let key = 0xC0A8_0001;
        for s in states.iter_mut() {
            s.insert_rule(key);
        }
        let once: Vec<FirewallState> = states.clone();
        for s in states.iter_mut() {
            s.insert_rule(key);
        }
        assert_eq!(once, states);
        for j in bloom::indices(key, &cfg.bloom) {
            let sh: Vec<Share> = states.iter().map(|s| s.shares().share(j)).collect();
            assert_eq!(reveal(&sh, &cfg.scheme).unwrap().value(), 1);
        }
        let v = gateway_decide(&sum_responses(key, &states), &cfg, EvalMode::Sum, &GatewayPolicy::default()).unwrap();
        assert_eq!(v.decision, Decision::Block);
    }

    #[test]
    fn state_checks() {
        let cfg = config(3, 2, 10, 0.1);
        let wrong = ShareVector::new(1, vec![0; 3], cfg.scheme).unwrap();
        assert!(FirewallState::new(cfg.clone(), wrong).is_err());
    }
}
