//! Fourier coefficients of the weight-two newform attached to an elliptic
//! curve over `Q`, obtained by counting points modulo primes, together with
//! quadratic twists and the factorization `N = N+ N-` of the level according
//! to the quadratic character of a real quadratic field.
use crate::cache;
use crate::error::{Error, Result};
use crate::linalg::{factorize, primes_up_to};
use crate::par;
use crate::quadorder::{kronecker, RealQuadraticField};
use num_integer::Integer;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Largest prime accepted by the naive point counter.
pub const MAX_COUNT_PRIME: u64 = 1 << 20;

/// An elliptic curve over `Q` in long Weierstrass form with its conductor.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurveSpec {
    pub label: String,
    /// Coefficients `[a1, a2, a3, a4, a6]`.
    pub a: [i64; 5],
    /// Conductor, supplied by the user.
    #[serde(rename = "N")]
    pub conductor: u64,
}

/// Reduction type of the curve at a prime.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reduction {
    Good,
    SplitMultiplicative,
    NonsplitMultiplicative,
    Additive,
}

impl CurveSpec {
    /// Validates the invariants: nonzero discriminant and positive conductor.
    pub fn new(label: &str, a: [i64; 5], conductor: u64) -> Result<Self> {
        let c = Self { label: label.to_string(), a, conductor };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.conductor == 0 {
            return Err(Error::Validation("conductor must be positive".into()));
        }
        if self.discriminant() == 0 {
            return Err(Error::Validation(format!("curve {} is singular (zero discriminant)", self.label)));
        }
        Ok(())
    }

    /// Reads a curve file `{label, a: [a1,a2,a3,a4,a6], N}`.
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let c: Self = serde_json::from_str(&text)?;
        c.validate()?;
        Ok(c)
    }

    /// The curve 11a: `y^2 + y = x^3 - x^2 - 10x - 20`.
    pub fn curve_11a() -> Self {
        Self::new("11a", [0, -1, 1, -10, -20], 11).unwrap()
    }

    /// The curve 37a: `y^2 + y = x^3 - x`.
    pub fn curve_37a() -> Self {
        Self::new("37a", [0, 0, 1, -1, 0], 37).unwrap()
    }

    /// The quantities `b2, b4, b6, b8`.
    pub fn b_invariants(&self) -> [i128; 4] {
        let [a1, a2, a3, a4, a6] = self.a.map(i128::from);
        let b2 = a1 * a1 + 4 * a2;
        let b4 = 2 * a4 + a1 * a3;
        let b6 = a3 * a3 + 4 * a6;
        let b8 = a1 * a1 * a6 + 4 * a2 * a6 - a1 * a3 * a4 + a2 * a3 * a3 - a4 * a4;
        [b2, b4, b6, b8]
    }

    pub fn c4(&self) -> i128 {
        let [b2, b4, _, _] = self.b_invariants();
        b2 * b2 - 24 * b4
    }

    pub fn discriminant(&self) -> i128 {
        let [b2, b4, b6, b8] = self.b_invariants();
        -b2 * b2 * b8 - 8 * b4 * b4 * b4 - 27 * b6 * b6 + 9 * b2 * b4 * b6
    }

    /// Reduction type at `p` for the (assumed minimal) model.
    pub fn reduction(&self, p: u64) -> Reduction {
        let pp = p as i128;
        if self.discriminant() % pp != 0 {
            return Reduction::Good;
        }
        if self.c4() % pp == 0 {
            return Reduction::Additive;
        }
        // The reduced cubic has a node; #E~(F_p) = p when the tangents are
        // rational and p + 2 otherwise.
        if count_points(self, p) == p {
            Reduction::SplitMultiplicative
        } else {
            Reduction::NonsplitMultiplicative
        }
    }
}

/// Number of projective points of the reduction modulo `p` (including the
/// point at infinity and a singular point, if any).
fn count_points(e: &CurveSpec, p: u64) -> u64 {
    let pi = p as i64;
    let a: Vec<i64> = e.a.iter().map(|x| x.rem_euclid(pi)).collect();
    if p == 2 {
        let mut n = 1;
        for x in 0..2i64 {
            for y in 0..2i64 {
                let lhs = y * y + a[0] * x * y + a[2] * y;
                let rhs = x * x * x + a[1] * x * x + a[3] * x + a[4];
                if (lhs - rhs).rem_euclid(2) == 0 {
                    n += 1;
                }
            }
        }
        return n;
    }
    // Completing the square: (2y + a1 x + a3)^2 = 4x^3 + b2 x^2 + 2 b4 x + b6.
    let [b2, b4, b6, _] = e.b_invariants();
    let m = |v: i128| v.rem_euclid(p as i128) as u64;
    let (b2, b4, b6) = (m(b2), m(2 * b4), m(b6));
    let mut is_sq = vec![false; p as usize];
    for t in 0..p {
        is_sq[((t * t) % p) as usize] = true;
    }
    let mut n = 1u64;
    for x in 0..p {
        let v = ((((4 * x + b2) % p) * x + b4) % p * x + b6) % p;
        n += if v == 0 {
            1
        } else if is_sq[v as usize] {
            2
        } else {
            0
        };
    }
    n
}

/// Trace of Frobenius `a_p = p + 1 - #E(F_p)` at a prime `p`.
///
/// At bad primes the value follows from the reduction type: `+1` split
/// multiplicative, `-1` nonsplit multiplicative, `0` additive.
pub fn ap_point_count(e: &CurveSpec, p: u64) -> Result<i64> {
    if p >= MAX_COUNT_PRIME {
        return Err(Error::Validation(format!("prime {p} exceeds the naive point-count bound {MAX_COUNT_PRIME}")));
    }
    if p < 2 || !crate::linalg::is_prime(p) {
        return Err(Error::Validation(format!("{p} is not prime")));
    }
    Ok(match e.reduction(p) {
        Reduction::Good => {
            let ap = p as i64 + 1 - count_points(e, p) as i64;
            if (ap * ap) as u64 > 4 * p {
                return Err(Error::Numeric(format!("Hasse bound violated at p = {p}")));
            }
            ap
        }
        Reduction::SplitMultiplicative => 1,
        Reduction::NonsplitMultiplicative => -1,
        Reduction::Additive => 0,
    })
}

/// Where a coefficient table came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoeffSource {
    PointCount,
    File,
}

/// Coefficients `c(1..=M)` of a weight-two newform.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CoeffTable {
    pub source: CoeffSource,
    /// `coeffs[m - 1] = c(m)`.
    pub coeffs: Vec<i64>,
    /// Level of the form, when known.
    pub level: Option<u64>,
}

impl CoeffTable {
    /// Number of stored coefficients.
    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// `c(m)` for `1 <= m <= M`.
    pub fn c(&self, m: usize) -> i64 {
        self.coeffs[m - 1]
    }

    /// Checks `c(1) = 1` and `c(mn) = c(m) c(n)` for coprime `m, n` with
    /// `mn <= bound`.
    pub fn check_multiplicative(&self, bound: usize) -> Result<()> {
        if self.coeffs.first() != Some(&1) {
            return Err(Error::Validation("c(1) must equal 1".into()));
        }
        let b = bound.min(self.len());
        for m in 2..=b {
            for n in m..=b / m {
                if m.gcd(&n) == 1 && self.c(m * n) != self.c(m) * self.c(n) {
                    return Err(Error::Validation(format!("multiplicativity fails at ({m}, {n})")));
                }
            }
        }
        Ok(())
    }

    /// Checks the prime-power recursion against the stored prime values.
    pub fn check_prime_powers(&self) -> Result<()> {
        let level = self.level.unwrap_or(1);
        for p in primes_up_to(self.len()) {
            let ap = self.c(p);
            let bad = level.is_multiple_of(p as u64);
            let (mut prev, mut cur, mut pk) = (1i64, ap, p);
            while pk * p <= self.len() {
                let next = if bad { ap * cur } else { ap * cur - p as i64 * prev };
                pk *= p;
                if self.c(pk) != next {
                    return Err(Error::Validation(format!("Hecke recursion fails at {pk}")));
                }
                prev = cur;
                cur = next;
            }
        }
        Ok(())
    }

    /// Writes the table as CSV with header `m,c`.
    pub fn to_csv_rows(&self) -> Vec<String> {
        self.coeffs.iter().enumerate().map(|(i, c)| format!("{},{c}", i + 1)).collect()
    }

    /// Parses rows `m,c` (ascending, starting at 1, no gaps).
    pub fn from_csv_rows<S: AsRef<str>>(rows: &[S], level: Option<u64>) -> Result<Self> {
        let mut coeffs = Vec::with_capacity(rows.len());
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref().trim();
            if row.is_empty() {
                continue;
            }
            let (m, c) =
                row.split_once(',').ok_or_else(|| Error::Validation(format!("malformed coefficient row `{row}`")))?;
            let m: usize = m.trim().parse().map_err(|_| Error::Validation(format!("bad index in `{row}`")))?;
            let c: i64 = c.trim().parse().map_err(|_| Error::Validation(format!("bad coefficient in `{row}`")))?;
            if m != i + 1 {
                return Err(Error::Validation(format!(
                    "coefficient rows must be 1, 2, 3, ... without gaps (found {m} at row {})",
                    i + 1
                )));
            }
            coeffs.push(c);
        }
        let t = Self { source: CoeffSource::File, coeffs, level };
        if !t.is_empty() && t.c(1) != 1 {
            return Err(Error::Validation("c(1) must equal 1".into()));
        }
        Ok(t)
    }

    /// Reads an external coefficient file (plain CSV, header `m,c`).
    pub fn from_csv_file(path: &Path, level: Option<u64>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut lines = text.lines().filter(|l| !l.starts_with('#'));
        if lines.next().map(str::trim) != Some("m,c") {
            return Err(Error::Validation(format!("{}: expected header `m,c`", path.display())));
        }
        let rows: Vec<&str> = lines.collect();
        Self::from_csv_rows(&rows, level)
    }
}

/// Coefficients `c(1..=M)` from point counts, multiplicativity and the
/// prime-power recursion.
pub fn coefficients_from_curve(e: &CurveSpec, m: usize) -> Result<CoeffTable> {
    if m == 0 {
        return Err(Error::Validation("M must be positive".into()));
    }
    let primes = primes_up_to(m);
    let aps: Vec<Result<i64>> = par::map_slice(&primes, |&p| ap_point_count(e, p as u64));
    let mut ap = vec![0i64; m + 1];
    for (p, r) in primes.iter().zip(aps) {
        ap[*p] = r?;
    }
    // Smallest prime factor sieve.
    let mut spf = vec![0usize; m + 1];
    for &p in &primes {
        let mut k = p;
        while k <= m {
            if spf[k] == 0 {
                spf[k] = p;
            }
            k += p;
        }
    }
    let mut c = vec![0i64; m + 1];
    c[1] = 1;
    for n in 2..=m {
        let p = spf[n];
        let mut rest = n;
        let mut k = 0;
        while rest % p == 0 {
            rest /= p;
            k += 1;
        }
        let pk = n / rest;
        if rest > 1 {
            c[n] = c[pk].checked_mul(c[rest]).ok_or_else(|| Error::Overflow(format!("c({n})")))?;
        } else if k == 1 {
            c[n] = ap[p];
        } else if e.conductor.is_multiple_of(p as u64) {
            c[n] = ap[p] * c[n / p];
        } else {
            c[n] = ap[p] * c[n / p] - p as i64 * c[n / p / p];
        }
    }
    c.remove(0);
    Ok(CoeffTable { source: CoeffSource::PointCount, coeffs: c, level: Some(e.conductor) })
}

fn cache_file(dir: &Path, e: &CurveSpec, m: usize) -> std::path::PathBuf {
    let a = e.a.map(|x| x.to_string()).join("_");
    let label: String = e.label.chars().map(|ch| if ch.is_ascii_alphanumeric() { ch } else { '-' }).collect();
    dir.join(format!("coeffs_{label}_N{}_a{a}_M{m}.csv", e.conductor))
}

/// Coefficients with an optional on-disk cache. A cached file that fails
/// its checksum or a sampled multiplicativity check is recomputed and
/// rewritten.
pub fn coefficients(e: &CurveSpec, m: usize, cache_dir: Option<&Path>) -> Result<CoeffTable> {
    let Some(dir) = cache_dir else {
        return coefficients_from_curve(e, m);
    };
    let path = cache_file(dir, e, m);
    if path.exists() {
        let loaded = cache::read_table(&path, "m,c").and_then(|rows| {
            let mut t = CoeffTable::from_csv_rows(&rows, Some(e.conductor))?;
            t.source = CoeffSource::PointCount;
            if t.len() != m {
                return Err(Error::Cache("length mismatch".into()));
            }
            t.check_multiplicative(m.min(2000))
                .and_then(|_| t.check_prime_powers())
                .map_err(|err| Error::Cache(err.to_string()))?;
            Ok(t)
        });
        if let Ok(t) = loaded {
            return Ok(t);
        }
    }
    let t = coefficients_from_curve(e, m)?;
    cache::write_table(&path, "m,c", &t.to_csv_rows())?;
    Ok(t)
}

/// Coefficients of the twist `f (x) eta_K`: `eta(m) c(m)`, zero when
/// `gcd(m, d_K) > 1`.
pub fn twist_coefficients(t: &CoeffTable, f: &RealQuadraticField) -> Result<CoeffTable> {
    if let Some(n) = t.level {
        if (n as i128).gcd(&f.d_k) != 1 {
            return Err(Error::Validation(format!("level {n} is not coprime to d_K = {}", f.d_k)));
        }
    }
    let coeffs = t
        .coeffs
        .iter()
        .enumerate()
        .map(|(i, &c)| Ok(kronecker(f, i as i128 + 1)? as i64 * c))
        .collect::<Result<Vec<i64>>>()?;
    Ok(CoeffTable { source: t.source, coeffs, level: t.level.map(|n| n * (f.d_k * f.d_k) as u64) })
}

/// Splitting of the level by the quadratic character of `K`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelSplit {
    pub n_plus: u64,
    pub n_minus: u64,
    /// `N-` is squarefree with an odd number of prime factors.
    pub ehh_holds: bool,
    /// `eta(N)`.
    pub sign: i32,
}

/// Factors `N = N+ N-` where primes of `N-` are inert in `K` and those of
/// `N+` split.
pub fn level_split(n: u64, f: &RealQuadraticField) -> Result<LevelSplit> {
    if n == 0 {
        return Err(Error::Validation("level must be positive".into()));
    }
    if (n as i128).gcd(&f.d_k) != 1 {
        return Err(Error::Validation(format!("level {n} is not coprime to d_K = {}", f.d_k)));
    }
    let (mut n_plus, mut n_minus) = (1u64, 1u64);
    let mut minus_primes = 0;
    let mut minus_squarefree = true;
    for (q, v) in factorize(n) {
        if kronecker(f, q as i128)? == 1 {
            n_plus *= q.pow(v);
        } else {
            n_minus *= q.pow(v);
            minus_primes += 1;
            minus_squarefree &= v == 1;
        }
    }
    Ok(LevelSplit {
        n_plus,
        n_minus,
        ehh_holds: minus_squarefree && minus_primes % 2 == 1,
        sign: kronecker(f, n as i128)?,
    })
}
