use serde::{Deserialize, Serialize};

use super::{EvalMode, FilterConfig};
use crate::detection::{self, correctness_guard, Decision, DecisionPath, DetectionReport, FailPolicy, Method};
use crate::error::{Error, Result};
use crate::sharing::{PartyId, SchemeKind, Share};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GatewayPolicy {
    pub fail_policy: FailPolicy,
    /// Forward listed addresses and drop everything else.
    pub whitelist: bool,
    pub path: DecisionPath,
}

/// Why the fail-policy decided instead of the reconstructed value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fallback {
    InsufficientShares,
    /// Reconstructions disagree and no value holds a strict majority.
    NoMajority,
    /// A majority exists but too few subsets are honest to trust it.
    Untrusted,
    DecodeFailure,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub decision: Decision,
    /// The agreed σ or π, if any.
    pub value: Option<u64>,
    pub m_prime: usize,
    pub malicious: bool,
    pub suspects: Vec<PartyId>,
    pub method: Method,
    pub influenced: u64,
    pub fallback: Option<Fallback>,
    /// Fan-in evaluation opened a zero (see the product path docs).
    pub leakage_warning: bool,
}

impl Verdict {
    pub fn fail(policy: &GatewayPolicy, m_prime: usize, method: Method, why: Fallback) -> Self {
        Verdict {
            decision: policy.fail_policy.decision(),
            value: None,
            m_prime,
            malicious: why != Fallback::InsufficientShares,
            suspects: Vec::new(),
            method,
            influenced: 0,
            fallback: Some(why),
            leakage_warning: false,
        }
    }
}

fn listed_decision(listed: bool, policy: &GatewayPolicy) -> Decision {
    match (listed, policy.whitelist) {
        (true, false) | (false, true) => Decision::Block,
        _ => Decision::Forward,
    }
}

/// Turns the m′ responses that arrived in time into a verdict.
pub fn gateway_decide(
    responses: &[Share],
    config: &FilterConfig,
    mode: EvalMode,
    policy: &GatewayPolicy,
) -> Result<Verdict> {
    let scheme = &config.scheme;
    let f = scheme.field;
    for r in responses {
        if r.scheme != scheme.scheme || r.value.field() != f {
            return Err(Error::Input(format!("response from party {} does not match the scheme", r.party)));
        }
        if r.party == 0 || r.party as usize > scheme.parties {
            return Err(Error::Input(format!("response from unknown party {}", r.party)));
        }
    }
    let m_prime = responses.len();
    let target = match mode {
        EvalMode::Sum => config.bloom.kappa as u64,
        EvalMode::Product => 1,
    };

    let report: DetectionReport = match scheme.scheme {
        SchemeKind::Additive => {
            if m_prime < scheme.parties {
                ::log::warn!("additive sharing needs all {} servers, have {m_prime}", scheme.parties);
                return Ok(Verdict::fail(policy, m_prime, Method::Sum, Fallback::InsufficientShares));
            }
            let v = crate::sharing::additive_reveal(responses, scheme)?.value();
            DetectionReport {
                consensus: Some(v),
                disagreement: false,
                suspects: Default::default(),
                influenced_count: 0,
                method: Method::Sum,
            }
        }
        SchemeKind::Shamir => {
            if m_prime < scheme.threshold {
                ::log::warn!("{m_prime} responses, threshold {}", scheme.threshold);
                return Ok(Verdict::fail(policy, m_prime, Method::Enumeration, Fallback::InsufficientShares));
            }
            if m_prime == scheme.threshold {
                ::log::info!("only t responses: a single reconstruction, no cross-check");
            }
            detection::detect(responses, scheme.threshold, f, policy.path)?
        }
    };

    let suspects: Vec<PartyId> = report.suspects.iter().copied().collect();
    let Some(value) = report.consensus else {
        let why = if report.method == Method::BerlekampWelch {
            Fallback::DecodeFailure
        } else {
            Fallback::NoMajority
        };
        let mut v = Verdict::fail(policy, m_prime, report.method, why);
        v.influenced = report.influenced_count;
        return Ok(v);
    };
    if report.disagreement && report.method == Method::Enumeration {
        let x = suspects.len().max(1) as u64;
        if !correctness_guard(m_prime as u64, scheme.threshold as u64, x) {
            let mut v = Verdict::fail(policy, m_prime, report.method, Fallback::Untrusted);
            v.suspects = suspects;
            v.influenced = report.influenced_count;
            v.value = Some(value);
            return Ok(v);
        }
    }
    Ok(Verdict {
        decision: listed_decision(value == target, policy),
        value: Some(value),
        m_prime,
        malicious: report.disagreement,
        suspects,
        method: report.method,
        influenced: report.influenced_count,
        fallback: None,
        leakage_warning: false,
    })
}
