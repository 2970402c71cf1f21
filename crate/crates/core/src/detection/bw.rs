use crate::error::{Error, Result};
use crate::modmath::Field;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Decoded {
    /// Coefficients of the recovered polynomial, constant term first.
    pub coeffs: Vec<u64>,
    /// x-coordinates of points off that polynomial.
    pub errors: Vec<u64>,
}

/// Solves A z = b mod N; free variables are set to zero. None if the
/// system is inconsistent.
fn solve(field: Field, mut a: Vec<Vec<u64>>, mut b: Vec<u64>) -> Option<Vec<u64>> {
    let rows = a.len();
    let cols = a.first().map_or(0, Vec::len);
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        let Some(p) = (r..rows).find(|&i| a[i][c] != 0) else {
            continue;
        };
        a.swap(r, p);
        b.swap(r, p);
        let inv = field.inv(a[r][c]).unwrap();
        for v in a[r].iter_mut() {
            *v = field.mul(*v, inv);
        }
        b[r] = field.mul(b[r], inv);
        for i in 0..rows {
            if i != r && a[i][c] != 0 {
                let k = a[i][c];
                for j in c..cols {
                    let d = field.mul(k, a[r][j]);
                    a[i][j] = field.sub(a[i][j], d);
                }
                b[i] = field.sub(b[i], field.mul(k, b[r]));
            }
        }
        pivots.push(c);
        r += 1;
        if r == rows {
            break;
        }
    }
    if b[r..].iter().any(|&v| v != 0) {
        return None;
    }
    let mut z = vec![0; cols];
    for (i, &c) in pivots.iter().enumerate() {
        z[c] = b[i];
    }
    Some(z)
}

/// Long division; returns (quotient, remainder is zero).
fn divide(field: Field, num: &[u64], den: &[u64]) -> (Vec<u64>, bool) {
    let mut rem = num.to_vec();
    let dd = den.len() - 1;
    let lead = field.inv(den[dd]).unwrap();
    if rem.len() <= dd {
        return (vec![0], rem.iter().all(|&v| v == 0));
    }
    let mut q = vec![0; rem.len() - dd];
    for i in (0..q.len()).rev() {
        let c = field.mul(rem[i + dd], lead);
        q[i] = c;
        for (j, &d) in den.iter().enumerate() {
            rem[i + j] = field.sub(rem[i + j], field.mul(c, d));
        }
    }
    (q, rem.iter().all(|&v| v == 0))
}

/// Recovers the degree-(t-1) polynomial through all but at most `e_max` of
/// the points. Needs n ≥ t + 2·e_max; more errors than that give an error
/// result, never a silently wrong polynomial.
pub fn berlekamp_welch(points: &[(u64, u64)], t: usize, e_max: usize, field: Field) -> Result<Decoded> {
    let n = points.len();
    if t == 0 {
        return Err(Error::Input("threshold must be positive".into()));
    }
    if n < t + 2 * e_max {
        return Err(Error::Input(format!(
            "{n} points cannot correct {e_max} errors at threshold {t}"
        )));
    }
    let e = e_max;
    let qdeg = t - 1 + e;
    // Unknowns: q_0..q_qdeg, then e_0..e_{e-1}; E is monic of degree e.
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    for &(x, y) in points {
        let (x, y) = (field.reduce(x), field.reduce(y));
        let mut row = Vec::with_capacity(qdeg + 1 + e);
        let mut xp = 1;
        let mut powers = Vec::with_capacity(qdeg + 1);
        for _ in 0..=qdeg.max(e) {
            powers.push(xp);
            xp = field.mul(xp, x);
        }
        row.extend_from_slice(&powers[..=qdeg]);
        for &p in &powers[..e] {
            row.push(field.neg(field.mul(y, p)));
        }
        a.push(row);
        b.push(field.mul(y, field.pow(x, e as u64)));
    }
    let z = solve(field, a, b).ok_or_else(|| Error::Protocol("no consistent error locator".into()))?;
    let q = &z[..=qdeg];
    let mut locator = z[qdeg + 1..].to_vec();
    locator.push(1);
    let (mut p, exact) = divide(field, q, &locator);
    if !exact {
        return Err(Error::Protocol("error locator does not divide".into()));
    }
    p.resize(t.max(p.len()), 0);
    if p[t..].iter().any(|&c| c != 0) {
        return Err(Error::Protocol("decoded polynomial exceeds the degree bound".into()));
    }
    p.truncate(t);
    let errors: Vec<u64> = points
        .iter()
        .filter(|&&(x, y)| field.eval_poly(&p, field.reduce(x)) != field.reduce(y))
        .map(|&(x, _)| x)
        .collect();
    if errors.len() > e_max {
        return Err(Error::Protocol(format!(
            "{} points disagree, more than the {e_max} correctable",
            errors.len()
        )));
    }
    Ok(Decoded { coeffs: p, errors })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clean_points_interpolate() {
        let f = Field::new(101).unwrap();
        let poly = [4, 3, 9];
        let pts: Vec<(u64, u64)> = (1..=7).map(|x| (x, f.eval_poly(&poly, x))).collect();
        for e in 0..=2 {
            let d = berlekamp_welch(&pts, 3, e, f).unwrap();
            assert_eq!(d.coeffs, poly);
            assert!(d.errors.is_empty());
        }
    }

    #[test]
    fn one_error_t2_m5() {
        let f = Field::new(101).unwrap();
        let poly = [7, 5];
        let mut pts: Vec<(u64, u64)> = (1..=5).map(|x| (x, f.eval_poly(&poly, x))).collect();
        pts[2].1 = f.add(pts[2].1, 50);
        let d = berlekamp_welch(&pts, 2, 1, f).unwrap();
        assert_eq!(d.coeffs, poly);
        assert_eq!(d.errors, vec![3]);
    }

    #[test]
    fn insufficient_points_rejected() {
        let f = Field::new(101).unwrap();
        let pts = [(1, 1), (2, 2), (3, 3)];
        assert!(berlekamp_welch(&pts, 2, 1, f).is_err());
    }

    #[test]
    fn division() {
        let f = Field::new(11).unwrap();
        // (x + 1)(x + 2) = x² + 3x + 2
        let (q, exact) = divide(f, &[2, 3, 1], &[1, 1]);
        assert!(exact);
        assert_eq!(q, vec![2, 1]);
        assert!(!divide(f, &[3, 3, 1], &[1, 1]).1);
    }
}
