//! Spotting and naming servers that return bad shares.
//!
//! With m′ > t responses the gateway can reconstruct from every t-subset;
//! honest shares all interpolate to the same value, so any disagreement
//! means someone lied. The party sitting in every deviating subset is the
//! suspect. For large m′ the subset count explodes and Reed-Solomon
//! decoding (Berlekamp-Welch) takes over.

mod bw;
pub mod log;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

pub use bw::{berlekamp_welch, Decoded};

use crate::error::{Error, Result};
use crate::modmath::Field;
use crate::sharing::{lagrange_at_zero, PartyId, Share};

/// Subset counts above this switch the gateway to decoding.
pub const ENUMERATION_LIMIT: u128 = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Block,
    Forward,
}

/// What to do with a packet when no trustworthy verdict exists.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailPolicy {
    /// Drop.
    #[default]
    Closed,
    /// Forward.
    Open,
}

impl FailPolicy {
    pub fn decision(self) -> Decision {
        match self {
            FailPolicy::Closed => Decision::Block,
            FailPolicy::Open => Decision::Forward,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Enumeration,
    BerlekampWelch,
    Vote,
    /// Additive sharing: one sum over all m shares, nothing to cross-check.
    Sum,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionPath {
    /// Enumerate while C(m′, t) ≤ [`ENUMERATION_LIMIT`], decode above.
    #[default]
    Auto,
    Enumeration,
    BerlekampWelch,
}

/// One reconstruction per t-subset of responders, subsets in
/// lexicographic order of sorted party ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RevealTable {
    pub threshold: usize,
    pub responders: Vec<PartyId>,
    pub entries: Vec<(Vec<PartyId>, u64)>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub consensus: Option<u64>,
    pub disagreement: bool,
    pub suspects: BTreeSet<PartyId>,
    /// Reconstructions that differ from the consensus (or, without one,
    /// from the most common value).
    pub influenced_count: u64,
    pub method: Method,
}

pub fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// t-subsets of m that contain at least one of x chosen parties.
pub fn influence_count(x: u64, m: u64, t: u64) -> u128 {
    if x > m {
        return 0;
    }
    (1..=x.min(t)).map(|i| binomial(x, i) * binomial(m - x, t - i)).sum()
}

/// C(m′, t) > 2 · influence: honest reconstructions outnumber every
/// possible tampered one, so the majority is right.
pub fn correctness_guard(m_prime: u64, t: u64, x: u64) -> bool {
    binomial(m_prime, t) > 2 * influence_count(x, m_prime, t)
}

/// Share of subsets one corrupter touches when m = 2t + 1, as
/// (numerator, denominator) in lowest terms.
pub fn influence_fraction_minimal(t: u64) -> (u64, u64) {
    // gcd(t, 2t + 1) = gcd(t, 1) = 1
    (t, 2 * t + 1)
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k > n {
        return out;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        let mut i = k;
        while i > 0 && idx[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

fn sorted_points(responses: &[Share]) -> Result<Vec<(PartyId, u64)>> {
    let mut pts: Vec<(PartyId, u64)> = responses.iter().map(|s| (s.party, s.value.value())).collect();
    pts.sort_unstable();
    if pts.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(Error::Input("two responses claim the same party id".into()));
    }
    if pts.first().is_some_and(|p| p.0 == 0) {
        return Err(Error::Input("party id 0 is not a share holder".into()));
    }
    Ok(pts)
}

pub fn enumerate_reveals(responses: &[Share], t: usize, field: Field) -> Result<RevealTable> {
    if responses.len() < t {
        return Err(Error::Threshold {
            needed: t,
            got: responses.len(),
        });
    }
    let pts = sorted_points(responses)?;
    let entries = subsets(pts.len(), t)
        .into_iter()
        .map(|sub| {
            let xs: Vec<u64> = sub.iter().map(|&i| pts[i].0 as u64).collect();
            let w = lagrange_at_zero(field, &xs)?;
            let v = sub
                .iter()
                .zip(&w)
                .fold(0, |acc, (&i, &l)| field.add(acc, field.mul(l, pts[i].1)));
            Ok((sub.iter().map(|&i| pts[i].0).collect(), v))
        })
        .collect::<Result<_>>()?;
    Ok(RevealTable {
        threshold: t,
        responders: pts.iter().map(|p| p.0).collect(),
        entries,
    })
}

pub fn analyze(table: &RevealTable) -> Result<DetectionReport> {
    if table.entries.is_empty() {
        return Err(Error::Input("empty reveal table".into()));
    }
    let mut classes: BTreeMap<u64, usize> = BTreeMap::new();
    for (_, v) in &table.entries {
        *classes.entry(*v).or_default() += 1;
    }
    let n = table.entries.len();
    let largest = *classes.values().max().unwrap();
    let consensus = classes
        .iter()
        .find(|(_, &c)| 2 * c > n)
        .map(|(&v, _)| v);
    let mut suspects = BTreeSet::new();
    if let Some(c) = consensus {
        let mut deviating = table.entries.iter().filter(|(_, v)| *v != c);
        if let Some((first, _)) = deviating.next() {
            let mut common: BTreeSet<PartyId> = first.iter().copied().collect();
            for (sub, _) in deviating {
                common.retain(|p| sub.contains(p));
            }
            // Anyone in an honest-looking subset is cleared.
            for (sub, _) in table.entries.iter().filter(|(_, v)| *v == c) {
                for p in sub {
                    common.remove(p);
                }
            }
            suspects = common;
        }
    }
    Ok(DetectionReport {
        consensus,
        disagreement: classes.len() > 1,
        suspects,
        influenced_count: (n - largest) as u64,
        method: Method::Enumeration,
    })
}

/// Largest error count decoding can correct.
pub fn default_error_bound(m_prime: usize, t: usize) -> usize {
    m_prime.saturating_sub(t) / 2
}

/// Reconstructs via decoding; failure is reported as a disagreement with
/// no consensus rather than a wrong value.
pub fn decode_report(responses: &[Share], t: usize, field: Field) -> Result<DetectionReport> {
    if responses.len() < t {
        return Err(Error::Threshold {
            needed: t,
            got: responses.len(),
        });
    }
    let pts = sorted_points(responses)?;
    let pts: Vec<(u64, u64)> = pts.into_iter().map(|(p, v)| (p as u64, v)).collect();
    let e_max = default_error_bound(pts.len(), t);
    Ok(match berlekamp_welch(&pts, t, e_max, field) {
        Ok(d) => DetectionReport {
            consensus: Some(d.coeffs[0]),
            disagreement: !d.errors.is_empty(),
            influenced_count: influence_count(d.errors.len() as u64, pts.len() as u64, t as u64) as u64,
            suspects: d.errors.iter().map(|&x| x as PartyId).collect(),
            method: Method::BerlekampWelch,
        },
        Err(_) => DetectionReport {
            consensus: None,
            disagreement: true,
            suspects: BTreeSet::new(),
            influenced_count: 0,
            method: Method::BerlekampWelch,
        },
    })
}

/// Cross-checks the responses by whichever method `path` selects.
pub fn detect(responses: &[Share], t: usize, field: Field, path: DecisionPath) -> Result<DetectionReport> {
    let enumerate = match path {
        DecisionPath::Enumeration => true,
        DecisionPath::BerlekampWelch => false,
        DecisionPath::Auto => binomial(responses.len() as u64, t as u64) <= ENUMERATION_LIMIT,
    };
    if enumerate {
        analyze(&enumerate_reveals(responses, t, field)?)
    } else {
        decode_report(responses, t, field)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Agreement {
    pub decision: Decision,
    /// False when the vote was tied and the fail-policy decided.
    pub majority: bool,
    /// Voters (1-based position in `votes`) that went against the outcome.
    pub dissenters: Vec<PartyId>,
}

/// Strict-majority vote over per-server decisions.
pub fn majority_agreement(votes: &[Decision], policy: FailPolicy) -> Agreement {
    let blocks = votes.iter().filter(|&&d| d == Decision::Block).count();
    let forwards = votes.len() - blocks;
    let (decision, majority) = if 2 * blocks > votes.len() {
        (Decision::Block, true)
    } else if 2 * forwards > votes.len() {
        (Decision::Forward, true)
    } else {
        (policy.decision(), false)
    };
    let dissenters = if majority {
        votes
            .iter()
            .enumerate()
            .filter(|(_, &d)| d != decision)
            .map(|(i, _)| (i + 1) as PartyId)
            .collect()
    } else {
        Vec::new()
    };
    if !dissenters.is_empty() {
        ::log::info!("vote dissent from {dissenters:?}");
    }
    Agreement {
        decision,
        majority,
        dissenters,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sharing::{shamir_share, SchemeConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn f11() -> Field {
        Field::new(11).unwrap()
    }

    fn shares(cfg: &SchemeConfig, s: u64, seed: u64) -> Vec<Share> {
        shamir_share(cfg.field.elem(s), cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    fn corrupt(sh: &mut [Share], party: usize, delta: u64) {
        let f = sh[party].value.field();
        sh[party].value = f.elem(f.add(sh[party].value.value(), delta));
    }

    #[test]
    fn influence_examples() {
        assert_eq!(influence_count(1, 7, 3), 15);
        assert_eq!(influence_count(0, 7, 3), 0);
        assert_eq!(influence_count(2, 7, 3), 25);
        assert!(correctness_guard(7, 3, 1));
        assert!(!correctness_guard(7, 3, 2));
        for m in 3..10 {
            assert!(correctness_guard(m, 3, 0));
        }
        assert_eq!(influence_fraction_minimal(3), (3, 7));
        assert_eq!(influence_fraction_minimal(2), (2, 5));
    }

    #[test]
    fn influence_matches_brute_force() {
        for m in 1..=9u64 {
            for t in 1..=m {
                for x in 0..=m {
                    // corrupt parties are 0..x
                    let brute = (0u32..1 << m)
                        .filter(|s| s.count_ones() as u64 == t && (s & ((1u32 << x) - 1)) != 0)
                        .count() as u128;
                    assert_eq!(influence_count(x, m, t), brute, "x={x} m={m} t={t}");
                }
            }
        }
    }

    #[test]
    fn minimal_fraction_identity() {
        for t in 2..=6u64 {
            let (a, b) = influence_fraction_minimal(t);
            let num = influence_count(1, 2 * t + 1, t);
            let den = binomial(2 * t + 1, t);
            assert_eq!(num * b as u128, den * a as u128);
            assert_eq!(binomial(2 * t, t - 1), num);
        }
    }

    #[test]
    fn table_sizes() {
        let cfg = SchemeConfig::shamir(7, 3, f11()).unwrap();
        let sh = shares(&cfg, 5, 1);
        assert_eq!(enumerate_reveals(&sh[..3], 3, cfg.field).unwrap().entries.len(), 1);
        let t = enumerate_reveals(&sh, 3, cfg.field).unwrap();
        assert_eq!(t.entries.len(), 35);
        assert!(t.entries.iter().all(|(_, v)| *v == 5));
        let r = analyze(&t).unwrap();
        assert!(!r.disagreement && r.suspects.is_empty());
        assert_eq!(r.consensus, Some(5));
        assert!(matches!(enumerate_reveals(&sh[..2], 3, cfg.field), Err(Error::Threshold { .. })));
    }

    #[test]
    fn seven_servers_one_liar() {
        let cfg = SchemeConfig::shamir(7, 3, Field::default()).unwrap();
        let mut sh = shares(&cfg, 10, 2);
        corrupt(&mut sh, 4, 12345);
        let r = analyze(&enumerate_reveals(&sh, 3, cfg.field).unwrap()).unwrap();
        assert_eq!(r.consensus, Some(10));
        assert_eq!(r.influenced_count, 15);
        assert_eq!(r.suspects, BTreeSet::from([5]));
        assert!(r.disagreement);
    }

    #[test]
    fn four_servers_one_liar() {
        let cfg = SchemeConfig::shamir(4, 3, Field::default()).unwrap();
        let mut sh = shares(&cfg, 10, 3);
        corrupt(&mut sh, 0, 999);
        let r = analyze(&enumerate_reveals(&sh, 3, cfg.field).unwrap()).unwrap();
        assert!(r.disagreement);
        assert_eq!(r.influenced_count, 3);
        assert_ne!(r.consensus, Some(10));
        assert!(!correctness_guard(4, 3, 1));
    }

    #[test]
    fn identification_exhaustive_small_field() {
        let t = 3;
        let cfg = SchemeConfig::shamir(2 * t + 1, t, f11()).unwrap();
        for secret in [0, 1, 7] {
            let honest = shares(&cfg, secret, secret + 10);
            for liar in 0..cfg.parties {
                for delta in 1..11 {
                    let mut sh = honest.clone();
                    corrupt(&mut sh, liar, delta);
                    let r = analyze(&enumerate_reveals(&sh, t, cfg.field).unwrap()).unwrap();
                    assert_eq!(r.consensus, Some(secret));
                    assert_eq!(r.suspects, BTreeSet::from([(liar + 1) as PartyId]));
                }
            }
        }
    }

    #[test]
    fn analyze_ignores_response_order() {
        let cfg = SchemeConfig::shamir(6, 2, Field::default()).unwrap();
        let mut sh = shares(&cfg, 77, 4);
        corrupt(&mut sh, 2, 5);
        let base = analyze(&enumerate_reveals(&sh, 2, cfg.field).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let mut p = sh.clone();
            for i in (1..p.len()).rev() {
                p.swap(i, rng.gen_range(0..=i));
            }
            assert_eq!(analyze(&enumerate_reveals(&p, 2, cfg.field).unwrap()).unwrap(), base);
        }
    }

    #[test]
    fn detection_soundness_campaign() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let field = Field::default();
        for _ in 0..1000 {
            let t = rng.gen_range(2..5);
            let m = rng.gen_range(t + 1..=2 * t + 2);
            let cfg = SchemeConfig::shamir(m, t, field).unwrap();
            let mut sh = shares(&cfg, rng.gen_range(0..2), rng.gen());
            // up to m - t liars keep at least t honest responders
            let x = rng.gen_range(1..=m - t);
            let mut ids: Vec<usize> = (0..m).collect();
            for i in (1..m).rev() {
                ids.swap(i, rng.gen_range(0..=i));
            }
            for &p in &ids[..x] {
                corrupt(&mut sh, p, rng.gen_range(1..field.modulus()));
            }
            let r = analyze(&enumerate_reveals(&sh, t, field).unwrap()).unwrap();
            assert!(r.disagreement);
        }
    }

    #[test]
    fn decoding_recovers_within_bound() {
        let field = Field::default();
        let cfg = SchemeConfig::shamir(5, 2, field).unwrap();
        let mut sh = shares(&cfg, 1, 7);
        let r = decode_report(&sh, 2, field).unwrap();
        assert_eq!((r.consensus, r.disagreement), (Some(1), false));
        corrupt(&mut sh, 3, 42);
        let r = decode_report(&sh, 2, field).unwrap();
        assert_eq!(r.consensus, Some(1));
        assert_eq!(r.suspects, BTreeSet::from([4]));
        let e = analyze(&enumerate_reveals(&sh, 2, field).unwrap()).unwrap();
        assert_eq!((e.consensus, &e.suspects), (r.consensus, &r.suspects));

        let cfg = SchemeConfig::shamir(7, 3, field).unwrap();
        let mut sh = shares(&cfg, 0, 8);
        corrupt(&mut sh, 0, 3);
        corrupt(&mut sh, 6, 9);
        let r = decode_report(&sh, 3, field).unwrap();
        assert_eq!(r.consensus, Some(0));
        assert_eq!(r.suspects, BTreeSet::from([1, 7]));
    }

    #[test]
    fn decoding_beyond_bound_fails_cleanly() {
        let field = Field::default();
        let cfg = SchemeConfig::shamir(5, 3, field).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let s = rng.gen_range(0..field.modulus());
            let mut sh = shares(&cfg, s, rng.gen());
            corrupt(&mut sh, 0, rng.gen_range(1..field.modulus()));
            corrupt(&mut sh, 2, rng.gen_range(1..field.modulus()));
            let r = decode_report(&sh, 3, field).unwrap();
            // one error is the bound; two are reported, not patched over
            assert!(r.disagreement);
            assert_eq!(r.consensus, None);
        }
    }

    #[test]
    fn decoding_agrees_with_enumeration() {
        let field = Field::default();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..300 {
            let t = rng.gen_range(2..5);
            let m = rng.gen_range(t..=3 * t);
            let cfg = SchemeConfig::shamir(m, t, field).unwrap();
            let s = rng.gen_range(0..100);
            let mut sh = shares(&cfg, s, rng.gen());
            let e = rng.gen_range(0..=default_error_bound(m, t));
            for p in 0..e {
                corrupt(&mut sh, p, rng.gen_range(1..field.modulus()));
            }
            let bw = decode_report(&sh, t, field).unwrap();
            assert_eq!(bw.consensus, Some(s));
            assert_eq!(bw.suspects.len(), e);
            let en = analyze(&enumerate_reveals(&sh, t, field).unwrap()).unwrap();
            if en.consensus.is_some() {
                assert_eq!(en.consensus, bw.consensus);
            }
        }
    }

    #[test]
    fn path_selection() {
        let field = Field::default();
        let cfg = SchemeConfig::shamir(30, 10, field).unwrap();
        let sh = shares(&cfg, 3, 11);
        assert!(binomial(30, 10) > ENUMERATION_LIMIT);
        let r = detect(&sh, 10, field, DecisionPath::Auto).unwrap();
        assert_eq!((r.method, r.consensus), (Method::BerlekampWelch, Some(3)));
        let r = detect(&sh[..12], 10, field, DecisionPath::Auto).unwrap();
        assert_eq!(r.method, Method::Enumeration);
        let r = detect(&sh[..12], 10, field, DecisionPath::BerlekampWelch).unwrap();
        assert_eq!(r.method, Method::BerlekampWelch);
    }

    #[test]
    fn votes() {
        use Decision::*;
        let a = majority_agreement(&[Block; 5], FailPolicy::Open);
        assert_eq!((a.decision, a.majority), (Block, true));
        let a = majority_agreement(&[Block, Block, Forward, Block, Block, Block, Block], FailPolicy::Open);
        assert_eq!(a.decision, Block);
        assert_eq!(a.dissenters, vec![3]);
        let a = majority_agreement(&[Block, Forward, Forward, Block], FailPolicy::Closed);
        assert_eq!((a.decision, a.majority), (Block, false));
        let a = majority_agreement(&[Block, Forward, Forward, Block], FailPolicy::Open);
        assert_eq!(a.decision, Forward);
    }

    #[test]
    fn subset_enumeration_order() {
        assert_eq!(subsets(4, 2), vec![vec![0, 1], vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3], vec![2, 3]]);
        assert_eq!(subsets(3, 3).len(), 1);
        assert_eq!(subsets(2, 3).len(), 0);
    }
}
