//! Shamir and additive secret sharing over Z_N, plus the interactive
//! arithmetic built on them.
//!
//! The dealer-side functions here (`shamir_share`, `additive_reveal`, ...)
//! work on complete share sets. Interactive protocols are written from a
//! single party's point of view in [`protocol`] and run over any
//! [`channel::Channel`]; the wrappers at the bottom of this module drive all
//! parties at once over an in-process [`channel::LocalNet`].

pub mod channel;
pub mod protocol;
pub mod store;

use std::collections::HashSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modmath::{Field, FieldElement};

pub use channel::{Channel, LocalChannel, LocalNet, Traffic};
pub use protocol::{FaninOutcome, Party};

/// 1-based party index.
pub type PartyId = u16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    Additive,
    Shamir,
}

impl SchemeKind {
    pub fn tag(self) -> u8 {
        match self {
            SchemeKind::Additive => 0,
            SchemeKind::Shamir => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(SchemeKind::Additive),
            1 => Ok(SchemeKind::Shamir),
            other => Err(Error::Input(format!("unknown scheme tag {other}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub scheme: SchemeKind,
    /// m
    pub parties: usize,
    /// t; equal to m for the additive scheme
    pub threshold: usize,
    pub field: Field,
}

impl SchemeConfig {
    pub fn shamir(parties: usize, threshold: usize, field: Field) -> Result<Self> {
        let c = SchemeConfig {
            scheme: SchemeKind::Shamir,
            parties,
            threshold,
            field,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn additive(parties: usize, field: Field) -> Result<Self> {
        let c = SchemeConfig {
            scheme: SchemeKind::Additive,
            parties,
            threshold: parties,
            field,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.parties > u16::MAX as usize {
            return Err(Error::Config(format!("{} parties exceeds the 16-bit id space", self.parties)));
        }
        match self.scheme {
            SchemeKind::Shamir => {
                if self.threshold < 2 || self.threshold > self.parties {
                    return Err(Error::Config(format!(
                        "Shamir needs 2 ≤ t ≤ m (t={}, m={})",
                        self.threshold, self.parties
                    )));
                }
                if self.parties as u64 >= self.field.modulus() {
                    return Err(Error::Config(format!(
                        "m = {} evaluation points do not fit in Z_{}",
                        self.parties,
                        self.field.modulus()
                    )));
                }
            }
            SchemeKind::Additive => {
                if self.parties < 2 {
                    return Err(Error::Config("additive sharing needs m ≥ 2".into()));
                }
                if self.threshold != self.parties {
                    return Err(Error::Config("additive sharing has t = m".into()));
                }
            }
        }
        Ok(())
    }

    /// ℓ
    pub fn share_bits(&self) -> u32 {
        self.field.bits()
    }

    pub fn can_multiply(&self) -> bool {
        match self.scheme {
            SchemeKind::Shamir => self.parties + 1 >= 2 * self.threshold,
            SchemeKind::Additive => self.parties == 3,
        }
    }

    pub fn require_multiplication(&self) -> Result<()> {
        if self.can_multiply() {
            Ok(())
        } else {
            Err(Error::Protocol(match self.scheme {
                SchemeKind::Shamir => format!(
                    "multiplication needs m ≥ 2t - 1 (m={}, t={})",
                    self.parties, self.threshold
                ),
                SchemeKind::Additive => {
                    format!("additive multiplication is defined for 3 parties, not {}", self.parties)
                }
            }))
        }
    }

    /// m ≥ t + 1: a single manipulated share becomes visible.
    pub fn can_detect(&self) -> bool {
        self.scheme == SchemeKind::Shamir && self.parties > self.threshold
    }

    /// m ≥ 2t + 1: a single manipulator can be named.
    pub fn can_identify(&self) -> bool {
        self.scheme == SchemeKind::Shamir && self.parties > 2 * self.threshold
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Share {
    pub party: PartyId,
    pub value: FieldElement,
    pub scheme: SchemeKind,
}

/// One party's shares of every filter slot.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShareVector {
    party: PartyId,
    values: Vec<u64>,
    config: SchemeConfig,
}

impl ShareVector {
    pub fn new(party: PartyId, values: Vec<u64>, config: SchemeConfig) -> Result<Self> {
        if party == 0 || party as usize > config.parties {
            return Err(Error::Input(format!("party id {party} outside 1..={}", config.parties)));
        }
        let n = config.field.modulus();
        if let Some(v) = values.iter().find(|&&v| v >= n) {
            return Err(Error::Domain(format!("share value {v} outside Z_{n}")));
        }
        Ok(ShareVector {
            party,
            values,
            config,
        })
    }

    pub fn party(&self) -> PartyId {
        self.party
    }

    pub fn values(&self) -> &[u64] {
        &self.values
    }

    pub fn config(&self) -> &SchemeConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, j: usize) -> u64 {
        self.values[j]
    }

    pub fn share(&self, j: usize) -> Share {
        Share {
            party: self.party,
            value: self.config.field.elem(self.values[j]),
            scheme: self.config.scheme,
        }
    }

    pub(crate) fn set(&mut self, j: usize, value: u64) {
        debug_assert!(value < self.config.field.modulus());
        self.values[j] = value;
    }
}

fn check_secret(s: FieldElement, cfg: &SchemeConfig) -> Result<()> {
    if s.field() != cfg.field {
        return Err(Error::Domain(format!(
            "secret lives in Z_{}, scheme uses Z_{}",
            s.modulus(),
            cfg.field.modulus()
        )));
    }
    Ok(())
}

/// Evaluations f(1..=m) of `coeffs` (constant term first).
pub(crate) fn eval_points(field: Field, coeffs: &[u64], parties: usize) -> impl Iterator<Item = u64> + '_ {
    (1..=parties as u64).map(move |x| field.eval_poly(coeffs, x))
}

pub fn shamir_share<R: Rng + ?Sized>(s: FieldElement, cfg: &SchemeConfig, rng: &mut R) -> Result<Vec<Share>> {
    let n = cfg.field.modulus();
    let coeffs: Vec<u64> = (1..cfg.threshold).map(|_| rng.gen_range(0..n)).collect();
    shamir_share_with_coeffs(s, &coeffs, cfg)
}

/// Shares `s` on `f(x) = s + c_1 x + ... + c_{t-1} x^{t-1}` with the given
/// coefficients.
pub fn shamir_share_with_coeffs(s: FieldElement, coeffs: &[u64], cfg: &SchemeConfig) -> Result<Vec<Share>> {
    if cfg.scheme != SchemeKind::Shamir {
        return Err(Error::Config("shamir_share on a non-Shamir configuration".into()));
    }
    check_secret(s, cfg)?;
    if coeffs.len() != cfg.threshold - 1 {
        return Err(Error::Input(format!(
            "degree-{} polynomial needs {} coefficients, got {}",
            cfg.threshold - 1,
            cfg.threshold - 1,
            coeffs.len()
        )));
    }
    let mut poly = Vec::with_capacity(cfg.threshold);
    poly.push(s.value());
    poly.extend(coeffs.iter().map(|&c| cfg.field.reduce(c)));
    Ok(eval_points(cfg.field, &poly, cfg.parties)
        .enumerate()
        .map(|(i, y)| Share {
            party: (i + 1) as PartyId,
            value: cfg.field.elem(y),
            scheme: SchemeKind::Shamir,
        })
        .collect())
}

/// Lagrange weights λ_j with f(0) = Σ λ_j f(x_j).
pub fn lagrange_at_zero(field: Field, xs: &[u64]) -> Result<Vec<u64>> {
    let mut out = Vec::with_capacity(xs.len());
    for (j, &xj) in xs.iter().enumerate() {
        let (mut num, mut den) = (1u64, 1u64);
        for (k, &xk) in xs.iter().enumerate() {
            if k != j {
                num = field.mul(num, field.reduce(xk));
                den = field.mul(den, field.sub(field.reduce(xk), field.reduce(xj)));
            }
        }
        let inv = field
            .inv(den)
            .map_err(|_| Error::Input("interpolation points are not distinct".into()))?;
        out.push(field.mul(num, inv));
    }
    Ok(out)
}

fn distinct_parties(shares: &[Share]) -> Result<()> {
    let mut seen = HashSet::new();
    for s in shares {
        if !seen.insert(s.party) {
            return Err(Error::Input(format!("duplicate share from party {}", s.party)));
        }
    }
    Ok(())
}

/// Interpolates at zero through exactly the supplied points.
pub fn shamir_reveal(shares: &[Share], cfg: &SchemeConfig) -> Result<FieldElement> {
    if shares.len() < cfg.threshold {
        return Err(Error::Threshold {
            needed: cfg.threshold,
            got: shares.len(),
        });
    }
    distinct_parties(shares)?;
    let f = cfg.field;
    let xs: Vec<u64> = shares.iter().map(|s| s.party as u64).collect();
    let w = lagrange_at_zero(f, &xs)?;
    let v = shares
        .iter()
        .zip(&w)
        .fold(0, |acc, (s, &l)| f.add(acc, f.mul(l, s.value.value())));
    Ok(f.elem(v))
}

pub fn additive_share<R: Rng + ?Sized>(s: FieldElement, cfg: &SchemeConfig, rng: &mut R) -> Result<Vec<Share>> {
    let n = cfg.field.modulus();
    let randoms: Vec<u64> = (1..cfg.parties).map(|_| rng.gen_range(0..n)).collect();
    additive_share_with(s, &randoms, cfg)
}

/// First m-1 shares given; the last closes the sum.
pub fn additive_share_with(s: FieldElement, randoms: &[u64], cfg: &SchemeConfig) -> Result<Vec<Share>> {
    if cfg.scheme != SchemeKind::Additive {
        return Err(Error::Config("additive_share on a non-additive configuration".into()));
    }
    check_secret(s, cfg)?;
    if randoms.len() != cfg.parties - 1 {
        return Err(Error::Input(format!("need {} random shares", cfg.parties - 1)));
    }
    let f = cfg.field;
    let mut last = s.value();
    let mut out = Vec::with_capacity(cfg.parties);
    for (i, &r) in randoms.iter().enumerate() {
        let r = f.reduce(r);
        last = f.sub(last, r);
        out.push(Share {
            party: (i + 1) as PartyId,
            value: f.elem(r),
            scheme: SchemeKind::Additive,
        });
    }
    out.push(Share {
        party: cfg.parties as PartyId,
        value: f.elem(last),
        scheme: SchemeKind::Additive,
    });
    Ok(out)
}

/// Needs every one of the m shares.
pub fn additive_reveal(shares: &[Share], cfg: &SchemeConfig) -> Result<FieldElement> {
    if shares.len() != cfg.parties {
        return Err(Error::Threshold {
            needed: cfg.parties,
            got: shares.len(),
        });
    }
    distinct_parties(shares)?;
    let f = cfg.field;
    Ok(f.elem(shares.iter().fold(0, |acc, s| f.add(acc, s.value.value()))))
}

pub fn share<R: Rng + ?Sized>(s: FieldElement, cfg: &SchemeConfig, rng: &mut R) -> Result<Vec<Share>> {
    match cfg.scheme {
        SchemeKind::Shamir => shamir_share(s, cfg, rng),
        SchemeKind::Additive => additive_share(s, cfg, rng),
    }
}

pub fn reveal(shares: &[Share], cfg: &SchemeConfig) -> Result<FieldElement> {
    match cfg.scheme {
        SchemeKind::Shamir => shamir_reveal(shares, cfg),
        SchemeKind::Additive => additive_reveal(shares, cfg),
    }
}

/// The sharing of a public constant every party can write down without
/// communication: the constant polynomial for Shamir, party 1 holding the
/// value for additive.
pub fn public_share_value(cfg: &SchemeConfig, party: PartyId, c: u64) -> u64 {
    let c = cfg.field.reduce(c);
    match cfg.scheme {
        SchemeKind::Shamir => c,
        SchemeKind::Additive if party == 1 => c,
        SchemeKind::Additive => 0,
    }
}

fn same_slot(a: &Share, b: &Share) -> Result<()> {
    if a.party != b.party || a.scheme != b.scheme {
        return Err(Error::Input(format!(
            "cannot combine share of party {} ({:?}) with party {} ({:?})",
            a.party, a.scheme, b.party, b.scheme
        )));
    }
    if a.value.field() != b.value.field() {
        return Err(Error::Config("shares from different fields".into()));
    }
    Ok(())
}

pub fn local_add(a: &Share, b: &Share) -> Result<Share> {
    same_slot(a, b)?;
    let f = a.value.field();
    Ok(Share {
        value: f.elem(f.add(a.value.value(), b.value.value())),
        ..*a
    })
}

/// For additive sharing the constant lands on party 1 only.
pub fn add_const(a: &Share, c: FieldElement) -> Result<Share> {
    let f = a.value.field();
    if c.field() != f {
        return Err(Error::Config("constant from a different field".into()));
    }
    let apply = match a.scheme {
        SchemeKind::Shamir => true,
        SchemeKind::Additive => a.party == 1,
    };
    let v = if apply {
        f.add(a.value.value(), c.value())
    } else {
        a.value.value()
    };
    Ok(Share {
        value: f.elem(v),
        ..*a
    })
}

pub fn mul_const(a: &Share, c: FieldElement) -> Result<Share> {
    let f = a.value.field();
    if c.field() != f {
        return Err(Error::Config("constant from a different field".into()));
    }
    Ok(Share {
        value: f.elem(f.mul(a.value.value(), c.value())),
        ..*a
    })
}

/// Orders a complete share set by party and strips it to raw values.
fn by_party(shares: &[Share], cfg: &SchemeConfig) -> Result<Vec<u64>> {
    if shares.len() != cfg.parties {
        return Err(Error::Protocol(format!(
            "all {} parties must take part, got {} shares",
            cfg.parties,
            shares.len()
        )));
    }
    let mut out = vec![None; cfg.parties];
    for s in shares {
        if s.scheme != cfg.scheme || s.value.field() != cfg.field {
            return Err(Error::Input("share does not match the scheme configuration".into()));
        }
        let slot = out
            .get_mut((s.party as usize).wrapping_sub(1))
            .ok_or_else(|| Error::Input(format!("party id {} out of range", s.party)))?;
        if slot.replace(s.value.value()).is_some() {
            return Err(Error::Input(format!("duplicate share from party {}", s.party)));
        }
    }
    Ok(out.into_iter().map(|v| v.unwrap()).collect())
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

fn transpose(sharings: &[Vec<Share>], cfg: &SchemeConfig) -> Result<Vec<Vec<u64>>> {
    let per_elem: Vec<Vec<u64>> = sharings.iter().map(|s| by_party(s, cfg)).collect::<Result<_>>()?;
    Ok((0..cfg.parties)
        .map(|p| per_elem.iter().map(|e| e[p]).collect())
        .collect())
}

/// Degree-reduction multiplication, all parties driven over `net`.
pub fn shamir_mul(a: &[Share], b: &[Share], cfg: &SchemeConfig, net: &mut LocalNet) -> Result<Vec<Share>> {
    if cfg.scheme != SchemeKind::Shamir {
        return Err(Error::Config("shamir_mul on a non-Shamir configuration".into()));
    }
    cfg.require_multiplication()?;
    mul_shared(a, b, cfg, net)
}

/// The three-party additive multiplication.
pub fn additive_smm(u: &[Share], v: &[Share], cfg: &SchemeConfig, net: &mut LocalNet) -> Result<Vec<Share>> {
    if cfg.scheme != SchemeKind::Additive || cfg.parties != 3 {
        return Err(Error::Protocol("additive multiplication is defined for 3 parties".into()));
    }
    mul_shared(u, v, cfg, net)
}

fn mul_shared(a: &[Share], b: &[Share], cfg: &SchemeConfig, net: &mut LocalNet) -> Result<Vec<Share>> {
    let (a, b) = (by_party(a, cfg)?, by_party(b, cfg)?);
    let out = net.run(cfg, |mut party| {
        let (x, y) = (a[party.index()], b[party.index()]);
        async move { Ok(party.mul(&[x], &[y]).await?[0]) }
    })?;
    Ok(wrap(out, cfg))
}

/// Fresh shares of a uniform nonzero r and of r^-1.
pub fn random_shared_invertible_pair(cfg: &SchemeConfig, net: &mut LocalNet) -> Result<(Vec<Share>, Vec<Share>)> {
    cfg.require_multiplication()?;
    let out = net.run(cfg, |mut party| async move {
        let (r, r_inv) = party.invertible_pairs(1).await?;
        Ok((r[0], r_inv[0]))
    })?;
    let (r, r_inv): (Vec<u64>, Vec<u64>) = out.into_iter().unzip();
    Ok((wrap(r, cfg), wrap(r_inv, cfg)))
}

/// Constant-round product of k sharings with masks.
/// `zero_revealed` is set when a masked factor opened to zero, which tells
/// every party that one of the inputs was zero.
pub fn fanin_product(
    elements: &[Vec<Share>],
    cfg: &SchemeConfig,
    net: &mut LocalNet,
) -> Result<(Vec<Share>, bool)> {
    cfg.require_multiplication()?;
    let cols = transpose(elements, cfg)?;
    let out = net.run(cfg, |mut party| {
        let mine = cols[party.index()].clone();
        async move { party.fanin_product(&mine).await }
    })?;
    let leaked = out.iter().any(|o| o.zero_revealed);
    Ok((wrap(out.into_iter().map(|o| o.share).collect(), cfg), leaked))
}

/// Balanced-tree product; safe for zero factors and never opens anything.
pub fn tree_product(elements: &[Vec<Share>], cfg: &SchemeConfig, net: &mut LocalNet) -> Result<Vec<Share>> {
    cfg.require_multiplication()?;
    let cols = transpose(elements, cfg)?;
    let out = net.run(cfg, |mut party| {
        let mine = cols[party.index()].clone();
        async move { party.tree_product(&mine).await }
    })?;
    Ok(wrap(out, cfg))
}

/// Opens shared values to every party over the network.
pub fn open(shares: &[Share], cfg: &SchemeConfig, net: &mut LocalNet) -> Result<FieldElement> {
    let vals = by_party(shares, cfg)?;
    let out = net.run(cfg, |mut party| {
        let x = vals[party.index()];
        async move { Ok(party.reveal(&[x]).await?[0]) }
    })?;
    Ok(cfg.field.elem(out[0]))
}
