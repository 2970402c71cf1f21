mod common;

use common::*;
use ofw_core::error::Error;
use ofw_core::sharing::{self, LocalNet, SchemeConfig, Share};
use ofw_core::Field;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn all_subsets_agree(shares: &[Share], cfg: &SchemeConfig) -> Option<u64> {
    let m = shares.len();
    let t = cfg.threshold;
    let mut seen = None;
    for mask in 0u32..(1 << m) {
        if mask.count_ones() as usize != t {
            continue;
        }
        let sub: Vec<Share> = (0..m).filter(|i| mask >> i & 1 == 1).map(|i| shares[i]).collect();
        let v = open(&sub, cfg);
        match seen {
            None => seen = Some(v),
            Some(s) if s != v => return None,
            _ => {}
        }
    }
    seen
}

#[test]
fn shamir_mul_small_example() {
    let cfg = SchemeConfig::shamir(3, 2, field(101)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut net = LocalNet::new(1);
    for _ in 0..200 {
        let a = share_of(3, &cfg, &mut rng);
        let b = share_of(4, &cfg, &mut rng);
        let c = sharing::shamir_mul(&a, &b, &cfg, &mut net).unwrap();
        assert_eq!(all_subsets_agree(&c, &cfg), Some(12));
        let one = share_of(1, &cfg, &mut rng);
        let same = sharing::shamir_mul(&a, &one, &cfg, &mut net).unwrap();
        assert_eq!(open(&same, &cfg), 3);
    }
}

#[test]
fn shamir_mul_degree_and_traffic() {
    let f = Field::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (m, t) in [(3, 2), (5, 3), (6, 3), (7, 4)] {
        let cfg = SchemeConfig::shamir(m, t, f).unwrap();
        let mut net = LocalNet::new(m as u64);
        for _ in 0..50 {
            let (x, y) = (rng.gen_range(0..f.modulus()), rng.gen_range(0..f.modulus()));
            let c = sharing::shamir_mul(&share_of(x, &cfg, &mut rng), &share_of(y, &cfg, &mut rng), &cfg, &mut net)
                .unwrap();
            assert_eq!(all_subsets_agree(&c, &cfg), Some(f.mul(x, y)));
        }
        let tr = net.take_traffic();
        assert_eq!(tr.rounds, 50);
        assert_eq!(tr.messages, 50 * (m * (m - 1)) as u64);
        assert_eq!(tr.elements, 50 * (m * (m - 1)) as u64);
    }
}

#[test]
fn shamir_mul_needs_enough_parties() {
    let cfg = SchemeConfig::shamir(4, 3, field(101)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let a = share_of(3, &cfg, &mut rng);
    let r = sharing::shamir_mul(&a, &a, &cfg, &mut LocalNet::new(0));
    assert!(matches!(r, Err(Error::Protocol(_))));
    let r = sharing::shamir_mul(&a[..3], &a[..3], &cfg, &mut LocalNet::new(0));
    assert!(r.is_err());
}

#[test]
fn smm_small_example_and_traffic() {
    let cfg = SchemeConfig::additive(3, field(101)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut net = LocalNet::new(2);
    for _ in 0..1000 {
        let u = share_of(3, &cfg, &mut rng);
        let v = share_of(4, &cfg, &mut rng);
        assert_eq!(open(&sharing::additive_smm(&u, &v, &cfg, &mut net).unwrap(), &cfg), 12);
    }
    net.take_traffic();
    let z = share_of(0, &cfg, &mut rng);
    let v = share_of(77, &cfg, &mut rng);
    assert_eq!(open(&sharing::additive_smm(&z, &v, &cfg, &mut net).unwrap(), &cfg), 0);
    let tr = net.take_traffic();
    assert_eq!(tr.elements, 27);
    assert_eq!(tr.messages, 12);
    assert_eq!((tr.rounds, tr.local_rounds), (2, 1));
    assert_eq!(tr.total_rounds(), 3);
    assert_eq!(tr.bits(cfg.share_bits()), 27 * 7);
}

#[test]
fn smm_exhaustive_small_field() {
    let cfg = SchemeConfig::additive(3, field(11)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let mut net = LocalNet::new(3);
    for u in 0..11 {
        for v in 0..11 {
            for _ in 0..5 {
                let su = share_of(u, &cfg, &mut rng);
                let sv = share_of(v, &cfg, &mut rng);
                let out = sharing::additive_smm(&su, &sv, &cfg, &mut net).unwrap();
                assert_eq!(open(&out, &cfg), u * v % 11, "{u}·{v}");
            }
        }
    }
}

#[test]
fn smm_rejects_other_party_counts() {
    let cfg = SchemeConfig::additive(4, field(11)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let a = share_of(2, &cfg, &mut rng);
    assert!(sharing::additive_smm(&a, &a, &cfg, &mut LocalNet::new(0)).is_err());
}

#[test]
fn smm_output_shares_look_fresh() {
    // Party 1's output share of a fixed product is uniform on Z_11.
    let cfg = SchemeConfig::additive(3, field(11)).unwrap();
    let mut net = LocalNet::new(4);
    let (u, v) = (sharing::additive_share_with(cfg.field.elem(3), &[1, 1], &cfg).unwrap(),
                  sharing::additive_share_with(cfg.field.elem(5), &[2, 2], &cfg).unwrap());
    let mut counts = [0u64; 11];
    for _ in 0..20_000 {
        let out = sharing::additive_smm(&u, &v, &cfg, &mut net).unwrap();
        counts[out[0].value.value() as usize] += 1;
    }
    assert_uniform(&counts, "output share of party 1");
}

#[test]
fn invertible_pairs() {
    for cfg in [
        SchemeConfig::shamir(3, 2, field(11)).unwrap(),
        SchemeConfig::additive(3, field(11)).unwrap(),
    ] {
        let mut net = LocalNet::new(5);
        let mut counts = [0u64; 11];
        for _ in 0..5000 {
            let (r, ri) = sharing::random_shared_invertible_pair(&cfg, &mut net).unwrap();
            let (r, ri) = (open(&r, &cfg), open(&ri, &cfg));
            assert_ne!(r, 0);
            assert_eq!(r * ri % 11, 1);
            counts[r as usize] += 1;
        }
        assert_eq!(counts[0], 0);
        assert_uniform(&counts[1..], "revealed r");
        let tr = net.take_traffic();
        // Three rounds per attempt under either scheme.
        assert!(tr.rounds >= 3 * 5000);
    }
}

#[test]
fn invertible_pair_default_field_rounds() {
    let cfg = SchemeConfig::shamir(5, 3, Field::default()).unwrap();
    let mut net = LocalNet::new(6);
    let (r, ri) = sharing::random_shared_invertible_pair(&cfg, &mut net).unwrap();
    assert_eq!(cfg.field.mul(open(&r, &cfg), open(&ri, &cfg)), 1);
    assert_eq!(net.traffic().rounds, 3);
}

fn sharings(values: &[u64], cfg: &SchemeConfig, rng: &mut ChaCha8Rng) -> Vec<Vec<Share>> {
    values.iter().map(|&v| share_of(v, cfg, rng)).collect()
}

#[test]
fn fanin_trivial_cases() {
    let cfg = SchemeConfig::shamir(3, 2, field(101)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut net = LocalNet::new(7);
    let one = sharings(&[42], &cfg, &mut rng);
    let (p, leak) = sharing::fanin_product(&one, &cfg, &mut net).unwrap();
    assert_eq!((open(&p, &cfg), leak), (42, false));
    let ones = sharings(&[1; 5], &cfg, &mut rng);
    assert_eq!(open(&sharing::fanin_product(&ones, &cfg, &mut net).unwrap().0, &cfg), 1);
    let (p, _) = sharing::fanin_product(&[], &cfg, &mut net).unwrap();
    assert_eq!(open(&p, &cfg), 1);
}

#[test]
fn fanin_matches_plaintext_mod_101() {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    for cfg in [
        SchemeConfig::shamir(3, 2, field(101)).unwrap(),
        SchemeConfig::additive(3, field(101)).unwrap(),
    ] {
        let mut net = LocalNet::new(8);
        for _ in 0..1000 {
            let xs: Vec<u64> = (0..5).map(|_| rng.gen_range(1..101)).collect();
            let expect = xs.iter().fold(1, |a, &x| a * x % 101);
            let (p, leak) = sharing::fanin_product(&sharings(&xs, &cfg, &mut rng), &cfg, &mut net).unwrap();
            assert!(!leak);
            assert_eq!(open(&p, &cfg), expect);
        }
    }
}

#[test]
fn fanin_zero_factor_is_flagged() {
    let cfg = SchemeConfig::shamir(5, 3, Field::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let mut net = LocalNet::new(9);
    let (p, leak) = sharing::fanin_product(&sharings(&[5, 0, 9], &cfg, &mut rng), &cfg, &mut net).unwrap();
    assert_eq!(open(&p, &cfg), 0);
    assert!(leak);
}

#[test]
fn fanin_traffic_is_seven_k_plus_five_per_link() {
    let f = Field::default();
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for (m, t, k) in [(3, 2, 2), (5, 3, 10), (7, 4, 20)] {
        let cfg = SchemeConfig::shamir(m, t, f).unwrap();
        let mut net = LocalNet::new(10);
        let xs: Vec<u64> = (0..k).map(|_| rng.gen_range(1..f.modulus())).collect();
        let expect = xs.iter().fold(1, |a, &x| f.mul(a, x));
        let (p, _) = sharing::fanin_product(&sharings(&xs, &cfg, &mut rng), &cfg, &mut net).unwrap();
        assert_eq!(open(&p, &cfg), expect);
        let tr = net.traffic();
        assert_eq!(tr.elements, ((7 * k + 5) * m * (m - 1)) as u64);
        assert_eq!(tr.rounds, 4);
    }
}

#[test]
fn fanin_additive_rounds_after_setup() {
    let cfg = SchemeConfig::additive(3, Field::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut net = LocalNet::new(11);
    let xs = sharings(&[3, 5, 7, 11], &cfg, &mut rng);
    let (p, _) = sharing::fanin_product(&xs, &cfg, &mut net).unwrap();
    assert_eq!(open(&p, &cfg), 1155);
    // Setup: multiply + open (3); then two products and an opening (5).
    assert_eq!(net.traffic().rounds, 3 + 5);
}

#[test]
fn tree_product_properties() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for cfg in [
        SchemeConfig::shamir(5, 3, Field::default()).unwrap(),
        SchemeConfig::additive(3, Field::default()).unwrap(),
    ] {
        let f = cfg.field;
        let mut net = LocalNet::new(12);
        for _ in 0..100 {
            let bits: Vec<u64> = (0..10).map(|_| rng.gen_range(0..2)).collect();
            let and = bits.iter().all(|&b| b == 1) as u64;
            let out = sharing::tree_product(&sharings(&bits, &cfg, &mut rng), &cfg, &mut net).unwrap();
            assert_eq!(open(&out, &cfg), and);
        }
        let with_zero = sharings(&[4, 0, 6], &cfg, &mut rng);
        assert_eq!(open(&sharing::tree_product(&with_zero, &cfg, &mut net).unwrap(), &cfg), 0);
        for k in 1..=20usize {
            let xs: Vec<u64> = (0..k).map(|_| rng.gen_range(1..f.modulus())).collect();
            let sh = sharings(&xs, &cfg, &mut rng);
            net.take_traffic();
            let tree = open(&sharing::tree_product(&sh, &cfg, &mut net).unwrap(), &cfg);
            let mult_rounds = net.take_traffic().rounds;
            let per_mult = if cfg.scheme == sharing::SchemeKind::Shamir { 1 } else { 2 };
            assert_eq!(mult_rounds, per_mult * (k as f64).log2().ceil() as u64);
            let fan = open(&sharing::fanin_product(&sh, &cfg, &mut net).unwrap().0, &cfg);
            assert_eq!(tree, fan);
            assert_eq!(tree, xs.iter().fold(1, |a, &x| f.mul(a, x)));
        }
    }
}

#[test]
fn shares_are_marginally_uniform() {
    let cfg = SchemeConfig::shamir(4, 3, field(11)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut counts = vec![[0u64; 11]; 4];
    for _ in 0..10_000 {
        for (p, s) in share_of(6, &cfg, &mut rng).iter().enumerate() {
            counts[p][s.value.value() as usize] += 1;
        }
    }
    for (p, c) in counts.iter().enumerate() {
        assert_uniform(c, &format!("share of party {}", p + 1));
    }
}

/// Joint law of the shares held by `who`, as a histogram over Z_11^|who|.
fn joint_histogram(secret: u64, cfg: &SchemeConfig, who: &[usize], rng: &mut ChaCha8Rng) -> Vec<u64> {
    let cells = 11usize.pow(who.len() as u32);
    let mut h = vec![0u64; cells];
    for _ in 0..100_000 {
        let s = share_of(secret, cfg, rng);
        let idx = who.iter().fold(0, |acc, &p| acc * 11 + s[p].value.value() as usize);
        h[idx] += 1;
    }
    h
}

#[test]
fn below_threshold_views_do_not_depend_on_the_secret() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let shamir = SchemeConfig::shamir(5, 3, field(11)).unwrap();
    for who in [[0, 1], [2, 4]] {
        let a = joint_histogram(0, &shamir, &who, &mut rng);
        let b = joint_histogram(7, &shamir, &who, &mut rng);
        assert_same_distribution(&a, &b, "Shamir t-1 view");
        assert_uniform(&a, "Shamir t-1 view");
    }
    let additive = SchemeConfig::additive(3, field(11)).unwrap();
    for who in [[0, 1], [1, 2]] {
        let a = joint_histogram(1, &additive, &who, &mut rng);
        let b = joint_histogram(9, &additive, &who, &mut rng);
        assert_same_distribution(&a, &b, "additive m-1 view");
        assert_uniform(&a, "additive m-1 view");
    }
}

#[test]
fn runs_are_reproducible_from_the_seed() {
    let cfg = SchemeConfig::shamir(5, 3, Field::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    let a = share_of(123, &cfg, &mut rng);
    let b = share_of(456, &cfg, &mut rng);
    let run = |seed| {
        let mut net = LocalNet::new(seed);
        net.record_messages(true);
        sharing::shamir_mul(&a, &b, &cfg, &mut net).unwrap();
        net.transcript().to_vec()
    };
    assert_eq!(run(1), run(1));
    assert_ne!(run(1), run(2));
}

#[test]
fn a_party_leaving_early_is_an_error_not_a_hang() {
    let cfg = SchemeConfig::shamir(3, 2, Field::default()).unwrap();
    let mut net = LocalNet::new(26);
    let r = net.run(&cfg, |mut party| async move {
        if party.id() == 2 {
            return Ok(0);
        }
        Ok(party.reveal(&[1]).await?[0])
    });
    assert!(matches!(r, Err(Error::Protocol(_))));
}
