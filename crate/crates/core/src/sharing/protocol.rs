//! Interactive arithmetic on shared values, seen from one party.
//!
//! Every method must be called by all m parties in the same order with
//! equally sized inputs; rounds line up by position.

use rand::Rng;

use super::channel::Channel;
use super::{eval_points, lagrange_at_zero, public_share_value, PartyId, SchemeConfig, SchemeKind};
use crate::error::{Error, Result};
use crate::modmath::Field;
use crate::rng::ProtocolRng;

/// Attempts at drawing invertible masks before giving up.
pub const PAIR_RETRIES: usize = 64;
/// Restarts of the whole fan-in schedule when a mask turns out singular.
pub const FANIN_ATTEMPTS: usize = 1024;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FaninOutcome {
    pub share: u64,
    /// A masked factor opened to zero, so everyone learned that some input
    /// was zero. The result is still right.
    pub zero_revealed: bool,
}

pub struct Party<C> {
    cfg: SchemeConfig,
    chan: C,
    rng: ProtocolRng,
    /// Lagrange weights at zero over all m points.
    weights: Vec<u64>,
}

impl<C: Channel> Party<C> {
    pub fn new(cfg: SchemeConfig, chan: C, rng: ProtocolRng) -> Self {
        let weights = match cfg.scheme {
            SchemeKind::Shamir => {
                let xs: Vec<u64> = (1..=cfg.parties as u64).collect();
                lagrange_at_zero(cfg.field, &xs).expect("party ids are distinct")
            }
            SchemeKind::Additive => vec![1; cfg.parties],
        };
        Party { cfg, chan, rng, weights }
    }

    pub fn id(&self) -> PartyId {
        self.chan.party()
    }

    pub fn index(&self) -> usize {
        self.chan.party() as usize - 1
    }

    pub fn config(&self) -> &SchemeConfig {
        &self.cfg
    }

    pub fn channel(&mut self) -> &mut C {
        &mut self.chan
    }

    pub fn rng(&mut self) -> &mut ProtocolRng {
        &mut self.rng
    }

    fn field(&self) -> Field {
        self.cfg.field
    }

    fn draw(&mut self) -> u64 {
        self.rng.gen_range(0..self.cfg.field.modulus())
    }

    /// Share of a public constant.
    pub fn constant(&self, c: u64) -> u64 {
        public_share_value(&self.cfg, self.id(), c)
    }

    /// Sends several outboxes in one round. Each part is indexed by
    /// recipient and includes the own slot, which is handed back locally.
    async fn exchange_parts(&mut self, parts: Vec<Vec<Vec<u64>>>) -> Result<Vec<Vec<Vec<u64>>>> {
        let m = self.cfg.parties;
        let me = self.index();
        let lens: Vec<Vec<usize>> = parts.iter().map(|p| p.iter().map(Vec::len).collect()).collect();
        let mut outbox = vec![Vec::new(); m];
        for part in &parts {
            for (j, msg) in part.iter().enumerate() {
                if j != me {
                    outbox[j].extend_from_slice(msg);
                }
            }
        }
        let inbox = self.chan.exchange(outbox).await?;
        if inbox.len() != m {
            return Err(Error::Protocol(format!("inbox has {} slots", inbox.len())));
        }
        let mut out: Vec<Vec<Vec<u64>>> = parts.iter().map(|_| vec![Vec::new(); m]).collect();
        for (j, msg) in inbox.into_iter().enumerate() {
            if j == me {
                for (p, part) in parts.iter().enumerate() {
                    out[p][j] = part[j].clone();
                }
                continue;
            }
            // Peers run the same step, so they send us what we send them.
            let expect: usize = lens.iter().map(|l| l[j]).sum();
            if msg.len() != expect {
                return Err(Error::Protocol(format!(
                    "party {} sent {} elements, expected {expect}",
                    j + 1,
                    msg.len()
                )));
            }
            let mut at = 0;
            for (p, l) in lens.iter().enumerate() {
                out[p][j] = msg[at..at + l[j]].to_vec();
                at += l[j];
            }
        }
        Ok(out)
    }

    async fn exchange_one(&mut self, part: Vec<Vec<u64>>) -> Result<Vec<Vec<u64>>> {
        Ok(self.exchange_parts(vec![part]).await?.pop().unwrap())
    }

    fn check_range(&self, values: &[u64]) -> Result<()> {
        let n = self.cfg.field.modulus();
        match values.iter().find(|&&v| v >= n) {
            Some(v) => Err(Error::Domain(format!("{v} is not in Z_{n}"))),
            None => Ok(()),
        }
    }

    /// Fresh degree-(t-1) sharings of each secret, indexed by recipient.
    fn deal(&mut self, secrets: &[u64]) -> Vec<Vec<u64>> {
        let (m, t, f) = (self.cfg.parties, self.cfg.threshold, self.field());
        let mut out = vec![Vec::with_capacity(secrets.len()); m];
        let mut poly = vec![0u64; t];
        for &s in secrets {
            poly[0] = s;
            for c in poly.iter_mut().skip(1) {
                *c = self.rng.gen_range(0..f.modulus());
            }
            for (j, y) in eval_points(f, &poly, m).enumerate() {
                out[j].push(y);
            }
        }
        out
    }

    fn weighted_sum(&self, inbox: &[Vec<u64>], weighted: bool) -> Vec<u64> {
        let f = self.field();
        let n = inbox[0].len();
        (0..n)
            .map(|e| {
                inbox.iter().enumerate().fold(0, |acc, (j, col)| {
                    let v = if weighted { f.mul(self.weights[j], col[e]) } else { col[e] };
                    f.add(acc, v)
                })
            })
            .collect()
    }

    fn broadcast_part(&self, shares: &[u64]) -> Vec<Vec<u64>> {
        vec![shares.to_vec(); self.cfg.parties]
    }

    fn finish_reveal(&self, inbox: &[Vec<u64>]) -> Vec<u64> {
        self.weighted_sum(inbox, self.cfg.scheme == SchemeKind::Shamir)
    }

    /// Opens the shared values to every party.
    pub async fn reveal(&mut self, shares: &[u64]) -> Result<Vec<u64>> {
        self.check_range(shares)?;
        if shares.is_empty() {
            return Ok(Vec::new());
        }
        let part = self.broadcast_part(shares);
        let inbox = self.exchange_one(part).await?;
        Ok(self.finish_reveal(&inbox))
    }

    /// Shares of n uniform values nobody knows. Additive shares are just
    /// local draws; Shamir parties each deal a random value and sum.
    pub async fn random(&mut self, n: usize) -> Result<Vec<u64>> {
        match self.cfg.scheme {
            SchemeKind::Additive => Ok((0..n).map(|_| self.draw()).collect()),
            SchemeKind::Shamir => {
                if n == 0 {
                    return Ok(Vec::new());
                }
                let secrets: Vec<u64> = (0..n).map(|_| self.draw()).collect();
                let part = self.deal(&secrets);
                let inbox = self.exchange_one(part).await?;
                Ok(self.weighted_sum(&inbox, false))
            }
        }
    }

    /// Element-wise product of two shared vectors.
    pub async fn mul(&mut self, a: &[u64], b: &[u64]) -> Result<Vec<u64>> {
        if a.len() != b.len() {
            return Err(Error::Input(format!("mul of {} by {} values", a.len(), b.len())));
        }
        self.check_range(a)?;
        self.check_range(b)?;
        self.cfg.require_multiplication()?;
        if a.is_empty() {
            return Ok(Vec::new());
        }
        match self.cfg.scheme {
            SchemeKind::Shamir => {
                let part = self.mul_part(a, b);
                let inbox = self.exchange_one(part).await?;
                Ok(self.weighted_sum(&inbox, true))
            }
            SchemeKind::Additive => self.smm(a, b).await,
        }
    }

    /// Reshares the local degree-2(t-1) products.
    fn mul_part(&mut self, a: &[u64], b: &[u64]) -> Vec<Vec<u64>> {
        let f = self.field();
        let prods: Vec<u64> = a.iter().zip(b).map(|(&x, &y)| f.mul(x, y)).collect();
        self.deal(&prods)
    }

    /// Three-party multiplication of additive shares. Each ordered pair
    /// (A = i, B = i+1) computes shares of u_A v_B + v_A u_B with masks
    /// from the third party; a zero-sharing rerandomises the outputs.
    async fn smm(&mut self, u: &[u64], v: &[u64]) -> Result<Vec<u64>> {
        let f = self.field();
        let n = u.len();
        let me = self.index();
        let (next, prev) = ((me + 1) % 3, (me + 2) % 3);

        let mut to_next = Vec::with_capacity(3 * n);
        let mut to_prev = Vec::with_capacity(2 * n);
        let mut helper = Vec::with_capacity(n);
        let mut tau = Vec::with_capacity(n);
        for _ in 0..n {
            let (a1, a2, b1, b2, z) = (self.draw(), self.draw(), self.draw(), self.draw(), self.draw());
            to_next.extend([a1, a2, z]);
            to_prev.extend([b1, b2]);
            helper.push(f.add(f.mul(a1, b1), f.mul(a2, b2)));
            tau.push(z);
        }
        let mut out = vec![Vec::new(); 3];
        out[next] = to_next;
        out[prev] = to_prev;
        let inbox = self.chan.exchange(out).await?;
        let (alpha, beta) = (&inbox[prev], &inbox[next]);
        if alpha.len() != 3 * n || beta.len() != 2 * n {
            return Err(Error::Protocol("malformed mask message".into()));
        }

        let mut to_next = Vec::with_capacity(2 * n);
        let mut to_prev = Vec::with_capacity(2 * n);
        for e in 0..n {
            to_next.extend([f.add(u[e], alpha[3 * e]), f.add(v[e], alpha[3 * e + 1])]);
            to_prev.extend([f.add(v[e], beta[2 * e]), f.add(u[e], beta[2 * e + 1])]);
        }
        let mut out = vec![Vec::new(); 3];
        out[next] = to_next;
        out[prev] = to_prev;
        let inbox2 = self.chan.exchange(out).await?;
        let (y_hat, x_hat) = (&inbox2[next], &inbox2[prev]);
        if y_hat.len() != 2 * n || x_hat.len() != 2 * n {
            return Err(Error::Protocol("malformed masked-share message".into()));
        }

        self.chan.local_round();
        Ok((0..n)
            .map(|e| {
                let own = f.mul(u[e], v[e]);
                let as_a = f.add(f.mul(u[e], y_hat[2 * e]), f.mul(v[e], y_hat[2 * e + 1]));
                let as_b = f.neg(f.add(
                    f.mul(x_hat[2 * e], beta[2 * e]),
                    f.mul(x_hat[2 * e + 1], beta[2 * e + 1]),
                ));
                let zero = f.sub(alpha[3 * e + 2], tau[e]);
                [own, as_a, as_b, helper[e], zero].into_iter().fold(0, |a, x| f.add(a, x))
            })
            .collect())
    }

    /// Shares of n uniform nonzero r and of r^-1: open r·s for random s and
    /// scale s by the inverse. Singular draws are redrawn.
    pub async fn invertible_pairs(&mut self, n: usize) -> Result<(Vec<u64>, Vec<u64>)> {
        let f = self.field();
        let mut r = vec![0; n];
        let mut r_inv = vec![0; n];
        let mut pending: Vec<usize> = (0..n).collect();
        for _ in 0..PAIR_RETRIES {
            if pending.is_empty() {
                break;
            }
            let k = pending.len();
            let rs = self.random(2 * k).await?;
            let (rr, ss) = rs.split_at(k);
            let w = self.mul(rr, ss).await?;
            let w = self.reveal(&w).await?;
            let mut still = Vec::new();
            for (slot, &i) in pending.iter().enumerate() {
                match f.inv(w[slot]) {
                    Ok(wi) => {
                        r[i] = rr[slot];
                        r_inv[i] = f.mul(wi, ss[slot]);
                    }
                    Err(_) => still.push(i),
                }
            }
            pending = still;
        }
        if !pending.is_empty() {
            return Err(Error::Randomness(format!(
                "no invertible mask after {PAIR_RETRIES} attempts"
            )));
        }
        Ok((r, r_inv))
    }

    /// Product of all inputs in a constant number of rounds. Each x_i is
    /// blinded as r_{i-1} x_i r_i^-1 and opened; the opened values multiply
    /// out to r_0 (Π x_i) r_k^-1, which one more shared factor unwinds.
    pub async fn fanin_product(&mut self, xs: &[u64]) -> Result<FaninOutcome> {
        self.check_range(xs)?;
        self.cfg.require_multiplication()?;
        match xs.len() {
            0 => {
                return Ok(FaninOutcome {
                    share: self.constant(1),
                    zero_revealed: false,
                })
            }
            1 => {
                return Ok(FaninOutcome {
                    share: xs[0],
                    zero_revealed: false,
                })
            }
            _ => {}
        }
        match self.cfg.scheme {
            SchemeKind::Shamir => self.fanin_fused(xs).await,
            SchemeKind::Additive => self.fanin_sequential(xs).await,
        }
    }

    /// Four communication rounds: masks, first products, opening r_i s_i
    /// alongside the second products, opening the blinded factors.
    async fn fanin_fused(&mut self, xs: &[u64]) -> Result<FaninOutcome> {
        let f = self.field();
        let k = xs.len();
        for _ in 0..FANIN_ATTEMPTS {
            let rs = self.random(2 * (k + 1)).await?;
            let (r, s) = rs.split_at(k + 1);

            // w_i = r_i s_i, u_i = r_{i-1} x_i, y = s_0 r_k
            let mut a = r.to_vec();
            let mut b = s.to_vec();
            a.extend_from_slice(&r[..k]);
            b.extend_from_slice(xs);
            a.push(s[0]);
            b.push(r[k]);
            let prods = self.mul(&a, &b).await?;
            let (w, rest) = prods.split_at(k + 1);
            let (u, y) = (&rest[..k], rest[k]);

            let open_w = self.broadcast_part(w);
            let mul_v = self.mul_part(u, &s[1..]);
            let mut parts = self.exchange_parts(vec![open_w, mul_v]).await?;
            let v = self.weighted_sum(&parts.pop().unwrap(), true);
            let w_open = self.finish_reveal(&parts.pop().unwrap());

            self.chan.local_round();
            let Ok(w_inv) = w_open.iter().map(|&wi| f.inv(wi)).collect::<Result<Vec<u64>>>() else {
                continue;
            };
            // r_{i-1} x_i s_i (r_i s_i)^-1
            let blinded: Vec<u64> = (0..k).map(|i| f.mul(w_inv[i + 1], v[i])).collect();
            let opened = self.reveal(&blinded).await?;

            self.chan.local_round();
            let zero_revealed = opened.contains(&0);
            let public = opened.iter().fold(1, |acc, &c| f.mul(acc, c));
            // y / w_0 = r_k r_0^-1
            let unwind = f.mul(w_inv[0], y);
            return Ok(FaninOutcome {
                share: f.mul(public, unwind),
                zero_revealed,
            });
        }
        Err(Error::Randomness(format!(
            "no invertible masks after {FANIN_ATTEMPTS} attempts"
        )))
    }

    /// Same blinding, one step per round; works for any scheme with a
    /// multiplication.
    async fn fanin_sequential(&mut self, xs: &[u64]) -> Result<FaninOutcome> {
        let f = self.field();
        let k = xs.len();
        let (r, r_inv) = self.invertible_pairs(k + 1).await?;

        let mut a = r[..k].to_vec();
        let mut b = xs.to_vec();
        a.push(r_inv[0]);
        b.push(r[k]);
        let first = self.mul(&a, &b).await?;
        let (u, unwind) = (&first[..k], first[k]);
        let blinded = self.mul(u, &r_inv[1..]).await?;
        let opened = self.reveal(&blinded).await?;

        self.chan.local_round();
        let public = opened.iter().fold(1, |acc, &c| f.mul(acc, c));
        Ok(FaninOutcome {
            share: f.mul(public, unwind),
            zero_revealed: opened.contains(&0),
        })
    }

    /// Product by pairwise multiplication, ceil(log2 k) rounds.
    pub async fn tree_product(&mut self, xs: &[u64]) -> Result<u64> {
        Ok(self.tree_products(&[xs.to_vec()]).await?[0])
    }

    /// Several independent products sharing rounds.
    pub async fn tree_products(&mut self, lists: &[Vec<u64>]) -> Result<Vec<u64>> {
        for l in lists {
            self.check_range(l)?;
        }
        let one = self.constant(1);
        let mut cur: Vec<Vec<u64>> = lists
            .iter()
            .map(|l| if l.is_empty() { vec![one] } else { l.clone() })
            .collect();
        while cur.iter().any(|l| l.len() > 1) {
            let (mut a, mut b) = (Vec::new(), Vec::new());
            for l in &cur {
                for pair in l.chunks_exact(2) {
                    a.push(pair[0]);
                    b.push(pair[1]);
                }
            }
            let prods = self.mul(&a, &b).await?;
            let mut it = prods.into_iter();
            cur = cur
                .iter()
                .map(|l| {
                    let mut next: Vec<u64> = it.by_ref().take(l.len() / 2).collect();
                    if l.len() % 2 == 1 {
                        next.push(l[l.len() - 1]);
                    }
                    next
                })
                .collect();
        }
        Ok(cur.into_iter().map(|l| l[0]).collect())
    }
}
