#![allow(dead_code)]

use ofw_core::sharing::{self, SchemeConfig, Share};
use ofw_core::Field;
use rand::Rng;

/// Upper 1e-4 tail of χ²(df), Wilson–Hilferty approximation.
pub fn chi2_critical(df: usize) -> f64 {
    let z = 3.719;
    let k = df as f64;
    let a = 2.0 / (9.0 * k);
    k * (1.0 - a + z * a.sqrt()).powi(3)
}

/// Goodness of fit against the uniform distribution on the cells.
pub fn chi2_uniform(counts: &[u64]) -> (f64, usize) {
    let total: u64 = counts.iter().sum();
    let expect = total as f64 / counts.len() as f64;
    let stat = counts
        .iter()
        .map(|&c| (c as f64 - expect).powi(2) / expect)
        .sum();
    (stat, counts.len() - 1)
}

/// Two-sample homogeneity test over the same cells.
pub fn chi2_homogeneity(a: &[u64], b: &[u64]) -> (f64, usize) {
    let (na, nb) = (a.iter().sum::<u64>() as f64, b.iter().sum::<u64>() as f64);
    let mut stat = 0.0;
    let mut cells = 0usize;
    for (&x, &y) in a.iter().zip(b) {
        let col = (x + y) as f64;
        if col == 0.0 {
            continue;
        }
        cells += 1;
        let ea = col * na / (na + nb);
        let eb = col * nb / (na + nb);
        stat += (x as f64 - ea).powi(2) / ea + (y as f64 - eb).powi(2) / eb;
    }
    (stat, cells.saturating_sub(1))
}

pub fn assert_uniform(counts: &[u64], what: &str) {
    let (stat, df) = chi2_uniform(counts);
    assert!(stat < chi2_critical(df), "{what}: χ² = {stat:.1} on {df} df");
}

pub fn assert_same_distribution(a: &[u64], b: &[u64], what: &str) {
    let (stat, df) = chi2_homogeneity(a, b);
    assert!(stat < chi2_critical(df), "{what}: χ² = {stat:.1} on {df} df");
}

pub fn field(n: u64) -> Field {
    Field::new(n).unwrap()
}

pub fn share_of<R: Rng>(v: u64, cfg: &SchemeConfig, rng: &mut R) -> Vec<Share> {
    sharing::share(cfg.field.elem(v), cfg, rng).unwrap()
}

pub fn open(shares: &[Share], cfg: &SchemeConfig) -> u64 {
    sharing::reveal(shares, cfg).unwrap().value()
}
