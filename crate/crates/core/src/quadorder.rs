//! Real quadratic fields, orders `O_c = Z + c O_K`, fundamental units,
//! the Kronecker character of the field, ring class groups computed from
//! cycles of reduced indefinite binary quadratic forms, and their characters.
use crate::abelian::{Character, FiniteAbelianGroup};
use crate::error::{Error, Result};
use crate::linalg::{factorize, hermite_rows, isqrt, q, qi, Q};
use num_integer::Integer;
use num_traits::Zero;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// A real quadratic field `K = Q(sqrt d)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RealQuadraticField {
    /// Squarefree radicand `d > 1`.
    pub d: i128,
    /// Fundamental discriminant.
    pub d_k: i128,
    /// Floating-point approximation of `sqrt(d_K)`.
    pub sqrt_dk: f64,
}

/// Unit data of the maximal order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitData {
    /// Least solution of `t^2 - d_K u^2 = 4` with `u` minimal.
    pub t: i128,
    pub u: i128,
    /// `eps0 = x + y * omega` with `omega = (sigma + sqrt d_K)/2`.
    pub eps0_x: i128,
    pub eps0_y: i128,
    pub eps0_log: f64,
    pub eps0_norm: i32,
    /// Logarithm of the Pell-4 unit `(t + u sqrt d_K)/2`.
    pub eps_k_log: f64,
}

/// Element `x + y sqrt(d_K)` of `K` with rational coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct QuadElem {
    pub x: Q,
    pub y: Q,
}

impl QuadElem {
    pub fn new(x: Q, y: Q) -> Self {
        Self { x, y }
    }

    pub fn rational(x: Q) -> Self {
        Self { x, y: Q::zero() }
    }

    pub fn mul(&self, o: &Self, d_k: i128) -> Self {
        Self { x: self.x * o.x + qi(d_k) * self.y * o.y, y: self.x * o.y + self.y * o.x }
    }

    pub fn add(&self, o: &Self) -> Self {
        Self { x: self.x + o.x, y: self.y + o.y }
    }

    pub fn scale(&self, s: Q) -> Self {
        Self { x: self.x * s, y: self.y * s }
    }

    pub fn conj(&self) -> Self {
        Self { x: self.x, y: -self.y }
    }

    pub fn norm(&self, d_k: i128) -> Q {
        self.x * self.x - qi(d_k) * self.y * self.y
    }

    pub fn trace(&self) -> Q {
        self.x * qi(2)
    }

    /// The two real embeddings `(x + y sqrt d_K, x - y sqrt d_K)`.
    pub fn embeddings(&self, sqrt_dk: f64) -> (f64, f64) {
        let x = q_to_f64(self.x);
        let y = q_to_f64(self.y);
        (x + y * sqrt_dk, x - y * sqrt_dk)
    }

    /// Serialized as `[x_num, y_num, den]` meaning `(x_num + y_num sqrt d_K)/den`.
    pub fn to_triple(&self) -> [i128; 3] {
        let den = self.x.denom().lcm(self.y.denom());
        [self.x.numer() * (den / self.x.denom()), self.y.numer() * (den / self.y.denom()), den]
    }

    pub fn from_triple(t: [i128; 3]) -> Self {
        Self { x: q(t[0], t[2]), y: q(t[1], t[2]) }
    }
}

pub fn q_to_f64(x: Q) -> f64 {
    *x.numer() as f64 / *x.denom() as f64
}

/// A fractional ideal of an order, with a Z-basis `(alpha, z)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FractionalIdeal {
    pub d_k: i128,
    /// Conductor of the order the ideal belongs to.
    pub conductor: i128,
    pub alpha: QuadElem,
    pub z: QuadElem,
    /// Norm (module index relative to the order).
    pub norm: Q,
}

/// Primitive binary quadratic form `a x^2 + b x y + c y^2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Form {
    pub a: i128,
    pub b: i128,
    pub c: i128,
}

impl std::fmt::Display for Form {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{},{},{}]", self.a, self.b, self.c)
    }
}

impl Form {
    pub fn new(a: i128, b: i128, c: i128) -> Self {
        Self { a, b, c }
    }

    pub fn disc(&self) -> i128 {
        self.b * self.b - 4 * self.a * self.c
    }

    pub fn eval(&self, x: i128, y: i128) -> i128 {
        self.a * x * x + self.b * x * y + self.c * y * y
    }

    pub fn negate(&self) -> Self {
        Self::new(-self.a, self.b, -self.c)
    }

    pub fn is_primitive(&self) -> bool {
        self.a.gcd(&self.b).gcd(&self.c) == 1
    }

    /// Whether the indefinite form is reduced: `|sqrt D - 2|a|| < b < sqrt D`.
    pub fn is_reduced(&self) -> bool {
        let dd = self.disc();
        let s = isqrt(dd);
        let aa = self.a.abs();
        self.b > 0 && self.b <= s && 2 * aa + self.b > s && 2 * aa - self.b <= s
    }

    /// Form transformed by `[[x, r], [y, t]]` (right action).
    pub fn transform(&self, x: i128, r: i128, y: i128, t: i128) -> Self {
        Self::new(self.eval(x, y), 2 * self.a * x * r + self.b * (x * t + r * y) + 2 * self.c * y * t, self.eval(r, t))
    }
}

/// Ring class group `Pic(O_c)` with ideal representatives.
#[derive(Clone, Debug)]
pub struct RingClassGroup {
    pub d_k: i128,
    pub conductor: i128,
    pub disc: i128,
    /// Canonical label of each class (lexicographically least reduced form with `a > 0`).
    pub labels: Vec<Form>,
    /// Form representative of each class whose first coefficient avoids the configured primes.
    pub rep_forms: Vec<Form>,
    /// Ideal representatives, one per class.
    pub reps: Vec<FractionalIdeal>,
    /// Composition table.
    pub table: Vec<Vec<usize>>,
    pub group: FiniteAbelianGroup,
    reduced_index: HashMap<Form, usize>,
}

/// Ring class character stored as exact phases over the class indices.
pub type RingClassCharacter = Character;

fn is_squarefree(n: i128) -> bool {
    factorize(n as u64).iter().all(|&(_, e)| e == 1)
}

/// Builds `Q(sqrt d)` for squarefree `d > 1`.
pub fn make_field(d: i128) -> Result<RealQuadraticField> {
    if d <= 1 {
        return Err(Error::Validation(format!("radicand must exceed 1, got {d}")));
    }
    if d > (1i128 << 40) {
        return Err(Error::Validation("radicand exceeds supported range".into()));
    }
    if !is_squarefree(d) {
        return Err(Error::Validation(format!("{d} is not squarefree")));
    }
    let d_k = if d % 4 == 1 { d } else { 4 * d };
    Ok(RealQuadraticField { d, d_k, sqrt_dk: (d_k as f64).sqrt() })
}

/// Builds the field from its fundamental discriminant.
pub fn field_from_disc(d_k: i128) -> Result<RealQuadraticField> {
    let d = if d_k % 4 == 0 { d_k / 4 } else { d_k };
    let f = make_field(d)?;
    if f.d_k != d_k {
        return Err(Error::Validation(format!("{d_k} is not a fundamental discriminant")));
    }
    Ok(f)
}

impl RealQuadraticField {
    /// Parity `sigma = d_K mod 2`, so that `omega = (sigma + sqrt d_K)/2`.
    pub fn sigma(&self) -> i128 {
        self.d_k.rem_euclid(2)
    }

    /// `omega = (sigma + sqrt d_K)/2`, generator of `O_K` over `Z`.
    pub fn omega(&self) -> QuadElem {
        QuadElem::new(q(self.sigma(), 2), q(1, 2))
    }

    /// The order `O_c` as a fractional ideal with basis `(1, c omega)`.
    pub fn order_ideal(&self, c: i128) -> FractionalIdeal {
        FractionalIdeal {
            d_k: self.d_k,
            conductor: c,
            alpha: QuadElem::rational(qi(1)),
            z: self.omega().scale(qi(c)),
            norm: qi(1),
        }
    }
}

fn checked(v: Option<i128>, what: &str) -> Result<i128> {
    v.ok_or_else(|| Error::Overflow(what.to_string()))
}

/// Norm of `x + y omega`.
fn norm_x_y_omega(f: &RealQuadraticField, x: i128, y: i128) -> Result<i128> {
    let s = f.sigma();
    let c0 = (s * s - f.d_k) / 4;
    let t1 = checked(x.checked_mul(x), "unit norm")?;
    let t2 = checked(x.checked_mul(y).and_then(|v| v.checked_mul(s)), "unit norm")?;
    let t3 = checked(y.checked_mul(y).and_then(|v| v.checked_mul(c0)), "unit norm")?;
    checked(t1.checked_add(t2).and_then(|v| v.checked_add(t3)), "unit norm")
}

/// Fundamental unit from the continued fraction of `omega`, with Pell-4 data.
pub fn fundamental_unit(f: &RealQuadraticField) -> Result<UnitData> {
    let dd = f.d_k;
    let s = isqrt(dd);
    let (mut pp, mut qq) = (f.sigma(), 2i128);
    let (mut p_prev, mut p_cur) = (0i128, 1i128);
    let (mut q_prev, mut q_cur) = (1i128, 0i128);
    for _ in 0..100_000 {
        let a = if qq > 0 { Integer::div_floor(&(pp + s), &qq) } else { Integer::div_floor(&(pp + s + 1), &qq) };
        let p_new = checked(a.checked_mul(p_cur).and_then(|v| v.checked_add(p_prev)), "continued fraction numerator")?;
        let q_new =
            checked(a.checked_mul(q_cur).and_then(|v| v.checked_add(q_prev)), "continued fraction denominator")?;
        p_prev = p_cur;
        p_cur = p_new;
        q_prev = q_cur;
        q_cur = q_new;
        // Candidate unit (p - q sigma) + q omega.
        let x = p_cur - q_cur * f.sigma();
        let y = q_cur;
        let n = norm_x_y_omega(f, x, y)?;
        if n == 1 || n == -1 {
            let eps0 = q_to_f64(qi(x)) + (y as f64) * (f.sigma() as f64 + f.sqrt_dk) / 2.0;
            let (ex, ey) = if n == 1 {
                (x, y)
            } else {
                // eps0^2 = x^2 + 2xy omega + y^2 omega^2, omega^2 = sigma omega - c0.
                let c0 = (f.sigma() * f.sigma() - dd) / 4;
                let yy = checked(y.checked_mul(y), "unit square")?;
                (
                    checked(x.checked_mul(x).and_then(|v| v.checked_sub(yy.checked_mul(c0)?)), "unit square")?,
                    checked(
                        x.checked_mul(y)
                            .and_then(|v| v.checked_mul(2))
                            .and_then(|v| v.checked_add(yy.checked_mul(f.sigma())?)),
                        "unit square",
                    )?,
                )
            };
            let t =
                checked(ex.checked_mul(2).and_then(|v| v.checked_add(ey.checked_mul(f.sigma())?)), "Pell solution")?;
            let u = ey;
            debug_assert_eq!(t * t - dd * u * u, 4);
            let eps0_log = eps0.ln();
            return Ok(UnitData {
                t,
                u,
                eps0_x: x,
                eps0_y: y,
                eps0_log,
                eps0_norm: n as i32,
                eps_k_log: if n == 1 { eps0_log } else { 2.0 * eps0_log },
            });
        }
        pp = a * qq - pp;
        qq = (dd - pp * pp) / qq;
    }
    Err(Error::Numeric("continued fraction did not close a period".into()))
}

/// Kronecker symbol `(a / n)` for integers `a, n`.
pub fn kronecker_symbol(a: i128, n: i128) -> i32 {
    if n == 0 {
        return if a.abs() == 1 { 1 } else { 0 };
    }
    let mut a = a;
    let mut n = n;
    let mut k = 1i32;
    if n < 0 {
        n = -n;
        if a < 0 {
            k = -k;
        }
    }
    let mut v = 0;
    while n % 2 == 0 {
        n /= 2;
        v += 1;
    }
    if v > 0 {
        if a % 2 == 0 {
            return 0;
        }
        if v % 2 == 1 {
            let r = a.rem_euclid(8);
            if r == 3 || r == 5 {
                k = -k;
            }
        }
    }
    // Jacobi symbol (a / n) for odd positive n.
    a = a.rem_euclid(n);
    while a != 0 {
        while a % 2 == 0 {
            a /= 2;
            let r = n % 8;
            if r == 3 || r == 5 {
                k = -k;
            }
        }
        std::mem::swap(&mut a, &mut n);
        if a % 4 == 3 && n % 4 == 3 {
            k = -k;
        }
        a %= n;
    }
    if n == 1 {
        k
    } else {
        0
    }
}

/// The quadratic character `eta_K(n) = (d_K / n)`.
pub fn kronecker(f: &RealQuadraticField, n: i128) -> Result<i32> {
    if n == 0 {
        return Err(Error::Validation("Kronecker symbol at n = 0".into()));
    }
    Ok(kronecker_symbol(f.d_k, n))
}

/// Normalization `r(b, a)` used by the reduction operator.
fn normalize_b(b: i128, a: i128, s: i128) -> i128 {
    let aa = a.abs();
    let m = 2 * aa;
    if aa > s {
        // -|a| < r <= |a|
        let mut r = b.rem_euclid(m);
        if r > aa {
            r -= m;
        }
        r
    } else {
        // sqrt D - 2|a| < r < sqrt D, i.e. the largest r <= s congruent to b.
        s - (s - b).rem_euclid(m)
    }
}

/// One step of the reduction operator `rho(a, b, c) = (c, r(-b, c), *)`.
pub fn rho(f: &Form) -> Form {
    let dd = f.disc();
    let s = isqrt(dd);
    let r = normalize_b(-f.b, f.c, s);
    Form::new(f.c, r, (r * r - dd) / (4 * f.c))
}

/// Reduces an indefinite form to a properly equivalent reduced form.
pub fn reduce(f: &Form) -> Form {
    let dd = f.disc();
    let s = isqrt(dd);
    let mut g = *f;
    // Normalize first so that the iteration starts from a normalized form.
    let r = normalize_b(g.b, g.a, s);
    g = Form::new(g.a, r, (r * r - dd) / (4 * g.a));
    let mut guard = 0;
    while !g.is_reduced() {
        g = rho(&g);
        guard += 1;
        assert!(guard < 10_000, "reduction failed to terminate");
    }
    g
}

/// Composition of two forms of the same discriminant (Gauss/Shanks).
pub fn compose(f1: &Form, f2: &Form) -> Form {
    let dd = f1.disc();
    assert_eq!(dd, f2.disc(), "composition of forms with different discriminants");
    let (f1, f2) = if f1.a.abs() > f2.a.abs() { (f2, f1) } else { (f1, f2) };
    let (a1, b1) = (f1.a, f1.b);
    let (a2, b2, c2) = (f2.a, f2.b, f2.c);
    let s = (b1 + b2) / 2;
    let n = b2 - s;
    let (y1, d) = if a2 % a1 == 0 {
        (0, a1)
    } else {
        let e = a2.extended_gcd(&a1);
        if e.gcd < 0 {
            (-e.x, -e.gcd)
        } else {
            (e.x, e.gcd)
        }
    };
    let (x2, y2, d1) = if s % d == 0 {
        (0, -1, d)
    } else {
        let e = s.extended_gcd(&d);
        let (g, u, v) = if e.gcd < 0 { (-e.gcd, -e.x, -e.y) } else { (e.gcd, e.x, e.y) };
        (u, -v, g)
    };
    let v1 = a1 / d1;
    let v2 = a2 / d1;
    let r = (y1 * y2 * n - x2 * c2).rem_euclid(v1.abs());
    let b3 = b2 + 2 * v2 * r;
    let a3 = v1 * v2;
    let c3 = (b3 * b3 - dd) / (4 * a3);
    Form::new(a3, b3, c3)
}

/// All reduced primitive forms of discriminant `dd`.
pub fn reduced_forms(dd: i128) -> Vec<Form> {
    let s = isqrt(dd);
    let mut out = vec![];
    for b in 1..=s {
        if (b - dd).rem_euclid(2) != 0 {
            continue;
        }
        let m = (dd - b * b) / 4; // = -a c > 0
        for aa in 1..=m {
            if m % aa != 0 {
                continue;
            }
            if 2 * aa + b <= s || 2 * aa - b > s {
                continue;
            }
            for sign in [1i128, -1] {
                let a = sign * aa;
                let c = -m / a;
                let f = Form::new(a, b, c);
                if f.is_primitive() {
                    out.push(f);
                }
            }
        }
    }
    out.sort();
    out
}

/// Cycle of `rho` through a reduced form.
pub fn cycle(f: &Form) -> Vec<Form> {
    let mut out = vec![*f];
    let mut g = rho(f);
    while g != *f {
        out.push(g);
        g = rho(&g);
        assert!(out.len() < 100_000, "cycle did not close");
    }
    out
}

fn principal_form(dd: i128) -> Form {
    let b = dd.rem_euclid(2);
    Form::new(1, b, (b * b - dd) / 4)
}

/// Ideal attached to a form with `a > 0`: basis `(a, (b + sqrt D)/2)` of norm `a`,
/// whose norm form `N(x a + y z)/a` is the form itself.
pub fn ideal_of_form(d_k: i128, conductor: i128, f: &Form) -> FractionalIdeal {
    assert!(f.a > 0, "ideal_of_form requires a > 0");
    FractionalIdeal {
        d_k,
        conductor,
        alpha: QuadElem::rational(qi(f.a)),
        z: QuadElem::new(q(f.b, 2), q(conductor, 2)),
        norm: qi(f.a),
    }
}

/// Primitive integral norm form `N(x alpha + y z)/N(a)` of an ideal with rational `alpha`.
pub fn ideal_norm_form(a: &FractionalIdeal) -> Result<Form> {
    if !a.alpha.y.is_zero() {
        return Err(Error::Validation("ideal basis is not normalized (alpha must be rational)".into()));
    }
    let na = a.alpha.norm(a.d_k) / a.norm;
    let nb = (a.alpha.x * a.z.trace()) / a.norm;
    let nc = a.z.norm(a.d_k) / a.norm;
    let den = na.denom().lcm(nb.denom()).lcm(nc.denom());
    let (ia, ib, ic) =
        (na.numer() * (den / na.denom()), nb.numer() * (den / nb.denom()), nc.numer() * (den / nc.denom()));
    let g = ia.gcd(&ib).gcd(&ic);
    if g == 0 {
        return Err(Error::Validation("degenerate ideal basis".into()));
    }
    let f = Form::new(ia / g, ib / g, ic / g);
    let expected = a.conductor * a.conductor * a.d_k;
    if f.disc() != expected {
        return Err(Error::Validation(format!(
            "norm form discriminant {} differs from c^2 d_K = {}",
            f.disc(),
            expected
        )));
    }
    Ok(f)
}

fn coprime_to_all(n: i128, primes: &[i128]) -> bool {
    primes.iter().all(|p| n % p != 0)
}

/// Finds a properly equivalent form whose first coefficient is positive and
/// prime to the given primes, by searching small coprime `(x, y)`.
fn coprime_rep(f: &Form, primes: &[i128], bound: i128) -> Option<Form> {
    if f.a > 0 && coprime_to_all(f.a, primes) {
        return Some(*f);
    }
    let mut best: Option<(i128, Form)> = None;
    for x in -bound..=bound {
        for y in 0..=bound {
            if x.gcd(&y) != 1 {
                continue;
            }
            let m = f.eval(x, y);
            if m <= 0 || !coprime_to_all(m, primes) {
                continue;
            }
            if best.as_ref().is_some_and(|(bm, _)| *bm <= m) {
                continue;
            }
            // Complete (x, y) to [[x, r], [y, t]] of determinant 1.
            let e = x.extended_gcd(&y);
            let (t, r) = if e.gcd == 1 { (e.x, -e.y) } else { (-e.x, e.y) };
            debug_assert_eq!(x * t - r * y, 1);
            let g = f.transform(x, r, y, t);
            best = Some((m, g));
        }
    }
    best.map(|(_, g)| g)
}

impl RingClassGroup {
    pub fn order(&self) -> usize {
        self.labels.len()
    }

    /// Class index of an arbitrary primitive form of the right discriminant.
    pub fn class_of_form(&self, f: &Form) -> Result<usize> {
        if f.disc() != self.disc {
            return Err(Error::Validation("form discriminant mismatch".into()));
        }
        let r = reduce(f);
        self.reduced_index
            .get(&r)
            .copied()
            .ok_or_else(|| Error::Validation("reduced form not found in class table".into()))
    }

    /// Class index of a proper ideal of the order.
    pub fn class_of_ideal(&self, a: &FractionalIdeal) -> Result<usize> {
        self.class_of_form(&ideal_norm_form(a)?)
    }

    /// All reduced forms in a class.
    pub fn reduced_forms_of_class(&self, k: usize) -> Vec<Form> {
        let mut v: Vec<Form> = self.reduced_index.iter().filter(|(_, &i)| i == k).map(|(f, _)| *f).collect();
        v.sort();
        v
    }

    pub fn identity(&self) -> usize {
        0
    }

    pub fn characters(&self) -> Vec<RingClassCharacter> {
        self.group.characters()
    }

    /// JSON document `{d, dK, pell, eps0_log, classes, table}`.
    pub fn to_json(&self, f: &RealQuadraticField, u: &UnitData) -> serde_json::Value {
        let classes: Vec<serde_json::Value> = self
            .labels
            .iter()
            .zip(&self.reps)
            .map(|(l, r)| {
                serde_json::json!({
                    "label": [l.a, l.b, l.c],
                    "basis": [r.alpha.to_triple(), r.z.to_triple()],
                    "norm": [r.norm.numer(), r.norm.denom()],
                })
            })
            .collect();
        serde_json::json!({
            "d": f.d,
            "dK": f.d_k,
            "pell": [u.t, u.u],
            "eps0_log": u.eps0_log,
            "conductor": self.conductor,
            "classes": classes,
            "table": self.table,
        })
    }
}

/// Primes dividing any of the given integers.
pub fn prime_set(ns: &[i128]) -> Vec<i128> {
    let mut ps: Vec<i128> = ns
        .iter()
        .filter(|&&n| n.abs() > 1)
        .flat_map(|&n| factorize(n.unsigned_abs() as u64).into_iter().map(|(p, _)| p as i128))
        .collect();
    ps.sort_unstable();
    ps.dedup();
    ps
}

/// Ring class group of conductor `c`; representatives are chosen with norms
/// prime to `c d_K level`. Conductors not prime to `d_K level` are rejected.
pub fn ring_class_group(f: &RealQuadraticField, c: i128, level: i128) -> Result<RingClassGroup> {
    if c < 1 {
        return Err(Error::Validation("conductor must be positive".into()));
    }
    if c.gcd(&(f.d_k * level.max(1))) > 1 {
        return Err(Error::Validation(format!("conductor {c} is not prime to d_K * N = {}", f.d_k * level.max(1))));
    }
    let dd = checked(c.checked_mul(c).and_then(|v| v.checked_mul(f.d_k)), "order discriminant")?;
    if dd > 1i128 << 40 {
        return Err(Error::Validation("order discriminant exceeds supported range".into()));
    }
    let forms = reduced_forms(dd);
    let mut narrow: HashMap<Form, usize> = HashMap::new();
    let mut cycles: Vec<Vec<Form>> = vec![];
    for g in &forms {
        if narrow.contains_key(g) {
            continue;
        }
        let cyc = cycle(g);
        for h in &cyc {
            narrow.insert(*h, cycles.len());
        }
        cycles.push(cyc);
    }
    // Fuse each cycle with the cycle of its sign flip (wide classes).
    let mut parent: Vec<usize> = (0..cycles.len()).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        p[x] = r;
        r
    }
    for (i, cyc) in cycles.iter().enumerate() {
        let j = narrow[&cyc[0].negate()];
        let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
        if ri != rj {
            parent[ri.max(rj)] = ri.min(rj);
        }
    }
    let mut wide: HashMap<usize, Vec<Form>> = HashMap::new();
    for (i, cyc) in cycles.iter().enumerate() {
        let r = find(&mut parent, i);
        wide.entry(r).or_default().extend(cyc.iter().copied());
    }
    let principal = reduce(&principal_form(dd));
    let mut classes: Vec<(Form, Vec<Form>)> = wide
        .into_values()
        .map(|fs| {
            let label = *fs.iter().filter(|g| g.a > 0).min().unwrap();
            (label, fs)
        })
        .collect();
    classes.sort_by(|x, y| {
        let px = x.1.contains(&principal);
        let py = y.1.contains(&principal);
        py.cmp(&px).then(x.0.cmp(&y.0))
    });
    let mut reduced_index = HashMap::new();
    for (k, (_, fs)) in classes.iter().enumerate() {
        for g in fs {
            reduced_index.insert(*g, k);
        }
    }
    let labels: Vec<Form> = classes.iter().map(|(l, _)| *l).collect();
    let h = labels.len();
    let mut table = vec![vec![0usize; h]; h];
    let lookup = |g: &Form| -> Result<usize> {
        reduced_index.get(&reduce(g)).copied().ok_or_else(|| Error::Validation("composed form not in table".into()))
    };
    for i in 0..h {
        for j in 0..h {
            table[i][j] = lookup(&compose(&labels[i], &labels[j]))?;
        }
    }
    let group = FiniteAbelianGroup::from_table(table.clone())?;
    let avoid = prime_set(&[c, f.d_k, level]);
    let mut rep_forms = vec![];
    let mut reps = vec![];
    for l in &labels {
        let g = coprime_rep(l, &avoid, 60)
            .ok_or_else(|| Error::Numeric("no representative prime to the avoidance set found".into()))?;
        debug_assert_eq!(lookup(&g)?, lookup(l)?);
        reps.push(ideal_of_form(f.d_k, c, &g));
        rep_forms.push(g);
    }
    Ok(RingClassGroup { d_k: f.d_k, conductor: c, disc: dd, labels, rep_forms, reps, table, group, reduced_index })
}

/// Product of two proper ideals of the order of discriminant `dd`, computed by
/// Hermite normal form of the four generator products. Returns the primitive
/// part as a form `(a, b, c)` (ideal `[a, (b + sqrt D)/2]`) together with the content.
pub fn multiply_ideal_forms(f1: &Form, f2: &Form) -> (Form, i128) {
    let dd = f1.disc();
    // Elements stored as (X, Y) meaning (X + Y sqrt D)/2.
    let mul = |p: (i128, i128), r: (i128, i128)| -> (i128, i128) {
        ((p.0 * r.0 + dd * p.1 * r.1) / 2, (p.0 * r.1 + p.1 * r.0) / 2)
    };
    let g1 = [(2 * f1.a, 0), (f1.b, 1)];
    let g2 = [(2 * f2.a, 0), (f2.b, 1)];
    let mut rows = vec![];
    for x in g1 {
        for y in g2 {
            let (xx, yy) = mul(x, y);
            rows.push(vec![yy, xx]);
        }
    }
    let h = hermite_rows(&rows);
    let content = h[0][0];
    let b = h[0][1] / content;
    let a = h[1][1] / (2 * content);
    let b = b.rem_euclid(2 * a);
    (Form::new(a, b, (b * b - dd) / (4 * a)), content)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pell_bruteforce(d_k: i128) -> (i128, i128) {
        for u in 1.. {
            let t2 = d_k * u * u + 4;
            let t = isqrt(t2);
            if t * t == t2 {
                return (t, u);
            }
        }
        unreachable!()
    }

    #[test]
    fn field_case_split() {
        assert_eq!(make_field(5).unwrap().d_k, 5);
        assert_eq!(make_field(2).unwrap().d_k, 8);
        assert_eq!(make_field(10).unwrap().d_k, 40);
        assert!(make_field(12).is_err());
        assert!(make_field(1).is_err());
    }

    #[test]
    fn units_match_bruteforce_pell() {
        for d in [2, 3, 5, 6, 7, 10, 11, 13, 14, 15, 17, 19, 21, 22, 23, 29, 31, 37, 41, 43, 46, 57, 61, 94, 109, 229] {
            let f = make_field(d).unwrap();
            let u = fundamental_unit(&f).unwrap();
            assert_eq!((u.t, u.u), pell_bruteforce(f.d_k), "d = {d}");
            let eps_k = ((u.t as f64) + (u.u as f64) * f.sqrt_dk) / 2.0;
            assert!((eps_k.ln() - u.eps_k_log).abs() < 1e-12 * u.eps_k_log);
            assert_eq!(norm_x_y_omega(&f, u.eps0_x, u.eps0_y).unwrap(), u.eps0_norm as i128);
        }
    }

    #[test]
    fn unit_examples() {
        let u = fundamental_unit(&make_field(5).unwrap()).unwrap();
        assert_eq!((u.t, u.u, u.eps0_norm), (3, 1, -1));
        assert!((u.eps0_log - ((1.0 + 5f64.sqrt()) / 2.0).ln()).abs() < 1e-15);
        let u = fundamental_unit(&make_field(2).unwrap()).unwrap();
        assert_eq!((u.t, u.u, u.eps0_norm), (6, 2, -1));
        assert!((u.eps0_log - (1.0 + 2f64.sqrt()).ln()).abs() < 1e-15);
        let u = fundamental_unit(&make_field(3).unwrap()).unwrap();
        assert_eq!((u.t, u.u, u.eps0_norm), (4, 1, 1));
        assert!((u.eps0_log - (2.0 + 3f64.sqrt()).ln()).abs() < 1e-15);
    }

    /// Exhaustive residue oracle for the Kronecker symbol at odd primes and at 2.
    fn kron_oracle(d: i128, p: i128) -> i32 {
        if d % p == 0 {
            return 0;
        }
        if p == 2 {
            // Splitting of 2 in the ring of integers: d = 1 mod 8 split, 5 mod 8 inert.
            return if d.rem_euclid(8) == 1 { 1 } else { -1 };
        }
        if (1..p).any(|x| (x * x - d).rem_euclid(p) == 0) {
            1
        } else {
            -1
        }
    }

    #[test]
    fn kronecker_examples_and_oracle() {
        let f5 = make_field(5).unwrap();
        let f8 = make_field(2).unwrap();
        assert_eq!(kronecker(&f5, 2).unwrap(), -1);
        assert_eq!(kronecker(&f5, 5).unwrap(), 0);
        assert_eq!(kronecker(&f8, 7).unwrap(), 1);
        assert!(kronecker(&f5, 0).is_err());
        for d_k in [5i128, 8, 12, 13, 40, 229] {
            for p in crate::linalg::primes_up_to(200) {
                let p = p as i128;
                if p == 2 && d_k % 4 == 0 {
                    assert_eq!(kronecker_symbol(d_k, 2), 0);
                    continue;
                }
                assert_eq!(kronecker_symbol(d_k, p), kron_oracle(d_k, p), "d_K={d_k} p={p}");
            }
        }
    }

    #[test]
    fn norm_form_examples() {
        let f = make_field(5).unwrap();
        assert_eq!(ideal_norm_form(&f.order_ideal(1)).unwrap(), Form::new(1, 1, -1));
        let f = make_field(2).unwrap();
        assert_eq!(ideal_norm_form(&f.order_ideal(1)).unwrap(), Form::new(1, 0, -2));
    }

    #[test]
    fn class_numbers_of_examples() {
        for (d, h) in [(5, 1), (2, 1), (3, 1), (13, 1), (10, 2), (229, 3), (79, 3), (82, 4)] {
            let f = make_field(d).unwrap();
            let g = ring_class_group(&f, 1, 1).unwrap();
            assert_eq!(g.order(), h, "d = {d}");
            assert_eq!(
                g.labels[0],
                *reduced_forms(f.d_k).iter().filter(|x| g.class_of_form(x).unwrap() == 0 && x.a > 0).min().unwrap()
            );
        }
    }

    /// Ring class numbers from h(O_c) = h_K c prod(1 - eta(p)/p) / [O_K^x : O_c^x].
    #[test]
    fn ring_class_numbers_match_formula() {
        for d in [2i128, 3, 5, 13, 10] {
            let f = make_field(d).unwrap();
            let hk = ring_class_group(&f, 1, 1).unwrap().order() as i128;
            let u = fundamental_unit(&f).unwrap();
            for c in [2i128, 3, 4, 7, 9, 11] {
                if c.gcd(&f.d_k) > 1 {
                    continue;
                }
                let g = ring_class_group(&f, c, 1).unwrap();
                // Unit index: least k with eps0^k in O_c (i.e. y-coordinate divisible by c).
                let mut k = 1i128;
                let (mut x, mut y) = (u.eps0_x.rem_euclid(c), u.eps0_y.rem_euclid(c));
                let s = f.sigma();
                let c0 = (s * s - f.d_k) / 4;
                while y % c != 0 {
                    let (nx, ny) = (x * u.eps0_x - y * u.eps0_y * c0, x * u.eps0_y + y * u.eps0_x + y * u.eps0_y * s);
                    x = nx.rem_euclid(c);
                    y = ny.rem_euclid(c);
                    k += 1;
                }
                let mut num = hk * c;
                let mut den = 1i128;
                for (p, _) in factorize(c as u64) {
                    let p = p as i128;
                    num *= p - kronecker_symbol(f.d_k, p) as i128;
                    den *= p;
                }
                assert_eq!(num % (den * k), 0);
                assert_eq!(g.order() as i128, num / (den * k), "d={d} c={c}");
            }
        }
    }

    #[test]
    fn composition_matches_ideal_multiplication() {
        for (d, c) in [(10i128, 1i128), (229, 1), (82, 1), (5, 11), (2, 7), (79, 1)] {
            let f = make_field(d).unwrap();
            let g = ring_class_group(&f, c, 1).unwrap();
            for i in 0..g.order() {
                for j in 0..g.order() {
                    let (p, _) = multiply_ideal_forms(&g.rep_forms[i], &g.rep_forms[j]);
                    assert_eq!(g.class_of_form(&p).unwrap(), g.table[i][j]);
                }
            }
        }
    }

    #[test]
    fn representatives_are_coprime_and_in_class() {
        let f = make_field(229).unwrap();
        let g = ring_class_group(&f, 1, 37).unwrap();
        for (k, r) in g.reps.iter().enumerate() {
            let n = *r.norm.numer();
            assert!(n % 229 != 0 && n % 37 != 0);
            assert_eq!(g.class_of_ideal(r).unwrap(), k);
        }
    }

    #[test]
    fn conductor_validation() {
        let f = make_field(5).unwrap();
        assert!(ring_class_group(&f, 5, 1).is_err());
        assert!(ring_class_group(&f, 37, 37).is_err());
    }

    #[test]
    fn characters_sum_to_zero() {
        let f = make_field(229).unwrap();
        let g = ring_class_group(&f, 1, 1).unwrap();
        let chars = g.characters();
        assert_eq!(chars.len(), 3);
        for ch in chars.iter().skip(1) {
            let s: crate::numeric::C64 = ch.values().iter().sum();
            assert!(s.norm() < 1e-14);
        }
    }
}
