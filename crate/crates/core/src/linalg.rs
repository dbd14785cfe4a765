//! Exact integer and rational linear algebra: Smith normal form, Hermite
//! normal form, determinants and inverses over `Q`.
use num_integer::Integer;
use num_rational::Ratio;
use num_traits::{One, Signed, Zero};

/// Exact rational number.
pub type Q = Ratio<i128>;

/// Dense integer matrix stored row-major.
pub type IMat = Vec<Vec<i128>>;

/// Dense rational matrix stored row-major.
pub type QMat = Vec<Vec<Q>>;

/// Result of a Smith normal form computation: `u * m * v = diag`.
#[derive(Clone, Debug)]
pub struct Smith {
    pub diag: Vec<i128>,
    pub u: IMat,
    pub v: IMat,
}

pub fn identity(n: usize) -> IMat {
    (0..n).map(|i| (0..n).map(|j| if i == j { 1 } else { 0 }).collect()).collect()
}

pub fn imat_mul(a: &IMat, b: &IMat) -> IMat {
    let n = a.len();
    let m = b[0].len();
    let k = b.len();
    let mut c = vec![vec![0i128; m]; n];
    for i in 0..n {
        for l in 0..k {
            if a[i][l] == 0 {
                continue;
            }
            for j in 0..m {
                c[i][j] += a[i][l] * b[l][j];
            }
        }
    }
    c
}

/// Smith normal form of a square or rectangular integer matrix.
/// The diagonal entries are non-negative and each divides the next.
pub fn smith_normal_form(m: &IMat) -> Smith {
    let rows = m.len();
    let cols = if rows == 0 { 0 } else { m[0].len() };
    let mut a = m.clone();
    let mut u = identity(rows);
    let mut v = identity(cols);
    let n = rows.min(cols);
    for t in 0..n {
        loop {
            // Pivot: smallest nonzero absolute value in the remaining block.
            let mut best: Option<(usize, usize)> = None;
            for i in t..rows {
                for j in t..cols {
                    if a[i][j] != 0 {
                        match best {
                            None => best = Some((i, j)),
                            Some((bi, bj)) => {
                                if a[i][j].abs() < a[bi][bj].abs() {
                                    best = Some((i, j));
                                }
                            }
                        }
                    }
                }
            }
            let Some((pi, pj)) = best else {
                break;
            };
            a.swap(t, pi);
            u.swap(t, pi);
            for row in a.iter_mut() {
                row.swap(t, pj);
            }
            for row in v.iter_mut() {
                row.swap(t, pj);
            }
            let p = a[t][t];
            let mut clean = true;
            for i in (t + 1)..rows {
                let q = Integer::div_floor(&a[i][t], &p);
                if q != 0 {
                    for j in 0..cols {
                        a[i][j] -= q * a[t][j];
                    }
                    for j in 0..rows {
                        u[i][j] -= q * u[t][j];
                    }
                }
                if a[i][t] != 0 {
                    clean = false;
                }
            }
            for j in (t + 1)..cols {
                let q = Integer::div_floor(&a[t][j], &p);
                if q != 0 {
                    for i in 0..rows {
                        a[i][j] -= q * a[i][t];
                    }
                    for i in 0..cols {
                        v[i][j] -= q * v[i][t];
                    }
                }
                if a[t][j] != 0 {
                    clean = false;
                }
            }
            if !clean {
                continue;
            }
            // Divisibility condition against the remaining block.
            let mut fixed = true;
            'outer: for i in (t + 1)..rows {
                for j in (t + 1)..cols {
                    if a[i][j] % p != 0 {
                        for jj in 0..cols {
                            let x = a[i][jj];
                            a[t][jj] += x;
                        }
                        for jj in 0..rows {
                            let x = u[i][jj];
                            u[t][jj] += x;
                        }
                        fixed = false;
                        break 'outer;
                    }
                }
            }
            if fixed {
                break;
            }
        }
        if a[t][t] < 0 {
            for j in 0..cols {
                a[t][j] = -a[t][j];
            }
            for j in 0..rows {
                u[t][j] = -u[t][j];
            }
        }
    }
    let diag = (0..n).map(|i| a[i][i]).collect();
    Smith { diag, u, v }
}

/// Lower-triangular-free Hermite normal form of the row lattice of `m`
/// (upper triangular, positive pivots, reduced entries above pivots).
/// Zero rows are dropped.
pub fn hermite_rows(m: &IMat) -> IMat {
    let mut a: IMat = m.clone();
    let rows = a.len();
    if rows == 0 {
        return a;
    }
    let cols = a[0].len();
    let mut r = 0;
    for c in 0..cols {
        if r == rows {
            break;
        }
        loop {
            let mut best: Option<usize> = None;
            for i in r..rows {
                if a[i][c] != 0 && best.is_none_or(|b| a[i][c].abs() < a[b][c].abs()) {
                    best = Some(i);
                }
            }
            let Some(b) = best else { break };
            a.swap(r, b);
            let mut done = true;
            for i in (r + 1)..rows {
                if a[i][c] != 0 {
                    let q = Integer::div_floor(&a[i][c], &a[r][c]);
                    for j in 0..cols {
                        a[i][j] -= q * a[r][j];
                    }
                    if a[i][c] != 0 {
                        done = false;
                    }
                }
            }
            if done {
                break;
            }
        }
        if r < rows && a[r][c] != 0 {
            if a[r][c] < 0 {
                for j in 0..cols {
                    a[r][j] = -a[r][j];
                }
            }
            for i in 0..r {
                let q = Integer::div_floor(&a[i][c], &a[r][c]);
                if q != 0 {
                    for j in 0..cols {
                        a[i][j] -= q * a[r][j];
                    }
                }
            }
            r += 1;
        }
    }
    a.truncate(r);
    a
}

pub fn q(n: i128, d: i128) -> Q {
    Q::new(n, d)
}

pub fn qi(n: i128) -> Q {
    Q::from_integer(n)
}

pub fn qmat_from_int(m: &IMat) -> QMat {
    m.iter().map(|r| r.iter().map(|&x| qi(x)).collect()).collect()
}

pub fn qmat_mul(a: &QMat, b: &QMat) -> QMat {
    let n = a.len();
    let k = b.len();
    let m = b[0].len();
    let mut c = vec![vec![Q::zero(); m]; n];
    for i in 0..n {
        for l in 0..k {
            if a[i][l].is_zero() {
                continue;
            }
            for j in 0..m {
                c[i][j] += a[i][l] * b[l][j];
            }
        }
    }
    c
}

pub fn qmat_transpose(a: &QMat) -> QMat {
    if a.is_empty() {
        return vec![];
    }
    (0..a[0].len()).map(|j| (0..a.len()).map(|i| a[i][j]).collect()).collect()
}

pub fn qmat_vec(a: &QMat, x: &[Q]) -> Vec<Q> {
    a.iter().map(|r| r.iter().zip(x).fold(Q::zero(), |s, (p, q)| s + p * q)).collect()
}

/// Determinant by fraction-exact Gaussian elimination.
pub fn qdet(m: &QMat) -> Q {
    let n = m.len();
    let mut a = m.clone();
    let mut det = Q::one();
    for c in 0..n {
        let Some(p) = (c..n).find(|&i| !a[i][c].is_zero()) else {
            return Q::zero();
        };
        if p != c {
            a.swap(p, c);
            det = -det;
        }
        let piv = a[c][c];
        det *= piv;
        for i in (c + 1)..n {
            let f = a[i][c] / piv;
            if f.is_zero() {
                continue;
            }
            for j in c..n {
                let t = a[c][j];
                a[i][j] -= f * t;
            }
        }
    }
    det
}

/// Inverse of a non-singular rational matrix.
pub fn qinv(m: &QMat) -> Option<QMat> {
    let n = m.len();
    let mut a: QMat = m.clone();
    let mut inv: QMat = (0..n).map(|i| (0..n).map(|j| if i == j { Q::one() } else { Q::zero() }).collect()).collect();
    for c in 0..n {
        let p = (c..n).find(|&i| !a[i][c].is_zero())?;
        a.swap(p, c);
        inv.swap(p, c);
        let piv = a[c][c];
        for j in 0..n {
            a[c][j] /= piv;
            inv[c][j] /= piv;
        }
        for i in 0..n {
            if i == c || a[i][c].is_zero() {
                continue;
            }
            let f = a[i][c];
            for j in 0..n {
                let t = a[c][j];
                a[i][j] -= f * t;
                let t2 = inv[c][j];
                inv[i][j] -= f * t2;
            }
        }
    }
    Some(inv)
}

/// Least common multiple of the denominators of a rational matrix.
pub fn denominator_lcm(m: &QMat) -> i128 {
    m.iter().flatten().fold(1i128, |acc, x| acc.lcm(x.denom()))
}

/// Greatest common divisor of the numerators of a rational matrix
/// (after clearing to a common denominator this gives the content).
pub fn numerator_gcd(m: &QMat) -> i128 {
    m.iter().flatten().fold(0i128, |acc, x| acc.gcd(x.numer()))
}

/// Squarefree part (with sign) of a non-zero rational number.
pub fn square_class(x: Q) -> i128 {
    assert!(!x.is_zero(), "square class of zero");
    let v = x.numer() * x.denom();
    let sign = v.signum();
    let mut n = v.abs();
    let mut out = 1i128;
    let mut p = 2i128;
    while p * p <= n {
        let mut e = 0;
        while n % p == 0 {
            n /= p;
            e += 1;
        }
        if e % 2 == 1 {
            out *= p;
        }
        p += 1;
    }
    out * n * sign
}

/// Integer square root (floor) of a non-negative integer.
pub fn isqrt(n: i128) -> i128 {
    assert!(n >= 0);
    if n < 2 {
        return n;
    }
    let mut x = (n as f64).sqrt() as i128;
    while x * x > n {
        x -= 1;
    }
    while (x + 1) * (x + 1) <= n {
        x += 1;
    }
    x
}

/// Factorization into primes with exponents, by trial division.
pub fn factorize(mut n: u64) -> Vec<(u64, u32)> {
    let mut out = vec![];
    let mut p = 2u64;
    while p * p <= n {
        if n.is_multiple_of(p) {
            let mut e = 0;
            while n.is_multiple_of(p) {
                n /= p;
                e += 1;
            }
            out.push((p, e));
        }
        p += if p == 2 { 1 } else { 2 };
    }
    if n > 1 {
        out.push((n, 1));
    }
    out
}

/// Positive divisors in increasing order.
pub fn divisors(n: u64) -> Vec<u64> {
    let mut ds = vec![1u64];
    for (p, e) in factorize(n) {
        let cur = ds.clone();
        let mut pk = 1;
        for _ in 0..e {
            pk *= p;
            ds.extend(cur.iter().map(|d| d * pk));
        }
    }
    ds.sort_unstable();
    ds
}

pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    let mut p = 2u64;
    while p * p <= n {
        if n.is_multiple_of(p) {
            return false;
        }
        p += 1;
    }
    true
}

/// Primes up to `n` inclusive.
pub fn primes_up_to(n: usize) -> Vec<usize> {
    if n < 2 {
        return vec![];
    }
    let mut sieve = vec![true; n + 1];
    sieve[0] = false;
    sieve[1] = false;
    let mut i = 2;
    while i * i <= n {
        if sieve[i] {
            let mut j = i * i;
            while j <= n {
                sieve[j] = false;
                j += i;
            }
        }
        i += 1;
    }
    (0..=n).filter(|&i| sieve[i]).collect()
}

/// Modular exponentiation.
pub fn pow_mod(mut b: i128, mut e: u128, m: i128) -> i128 {
    let mut r = 1i128.rem_euclid(m);
    b = b.rem_euclid(m);
    while e > 0 {
        if e & 1 == 1 {
            r = (r * b) % m;
        }
        b = (b * b) % m;
        e >>= 1;
    }
    r
}

/// Extended gcd: returns `(g, x, y)` with `a x + b y = g >= 0`.
pub fn ext_gcd(a: i128, b: i128) -> (i128, i128, i128) {
    let e = a.extended_gcd(&b);
    if e.gcd < 0 {
        (-e.gcd, -e.x, -e.y)
    } else {
        (e.gcd, e.x, e.y)
    }
}

/// Modular inverse of `a` modulo `m`, if it exists.
pub fn inv_mod(a: i128, m: i128) -> Option<i128> {
    let (g, x, _) = ext_gcd(a.rem_euclid(m), m);
    if g != 1 {
        None
    } else {
        Some(x.rem_euclid(m))
    }
}

pub fn is_abs_one(x: &Q) -> bool {
    x.abs().is_one()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn check_smith(m: &IMat) {
        let s = smith_normal_form(m);
        let d = imat_mul(&imat_mul(&s.u, m), &s.v);
        for i in 0..d.len() {
            for j in 0..d[0].len() {
                if i == j {
                    assert_eq!(d[i][j], s.diag[i]);
                } else {
                    assert_eq!(d[i][j], 0);
                }
            }
        }
        for w in s.diag.windows(2) {
            if w[0] != 0 {
                assert_eq!(w[1] % w[0], 0);
            }
        }
        let du = qdet(&qmat_from_int(&s.u));
        let dv = qdet(&qmat_from_int(&s.v));
        assert!(du.abs().is_one() && dv.abs().is_one());
    }

    #[test]
    fn smith_known() {
        let m = vec![vec![2, 4, 4], vec![-6, 6, 12], vec![10, -4, -16]];
        let s = smith_normal_form(&m);
        assert_eq!(s.diag, vec![2, 6, 12]);
        check_smith(&m);
    }

    proptest! {
        #[test]
        fn smith_invariants(entries in proptest::collection::vec(-30i128..30, 16)) {
            let m: IMat = entries.chunks(4).map(|c| c.to_vec()).collect();
            check_smith(&m);
            let s = smith_normal_form(&m);
            let prod: i128 = s.diag.iter().product();
            let det = qdet(&qmat_from_int(&m));
            prop_assert_eq!(qi(prod), det.abs());
        }

        #[test]
        fn inverse_roundtrip(entries in proptest::collection::vec(-9i128..9, 9)) {
            let m: QMat = entries.chunks(3).map(|c| c.iter().map(|&x| qi(x)).collect()).collect();
            if let Some(inv) = qinv(&m) {
                let p = qmat_mul(&m, &inv);
                for i in 0..3 { for j in 0..3 {
                    prop_assert_eq!(p[i][j], if i == j { Q::one() } else { Q::zero() });
                }}
            } else {
                prop_assert!(qdet(&m).is_zero());
            }
        }
    }

    #[test]
    fn hermite_basic() {
        let h = hermite_rows(&vec![vec![4, 2], vec![6, 5], vec![2, 1]]);
        assert_eq!(h, vec![vec![2, 1], vec![0, 2]]);
    }

    #[test]
    fn square_classes() {
        assert_eq!(square_class(q(20, 1)), 5);
        assert_eq!(square_class(q(-8, 9)), -2);
        assert_eq!(square_class(q(1, 4)), 1);
    }

    #[test]
    fn divisor_lists() {
        assert_eq!(divisors(12), vec![1, 2, 3, 4, 6, 12]);
        assert_eq!(factorize(360), vec![(2, 3), (3, 2), (5, 1)]);
    }
}
