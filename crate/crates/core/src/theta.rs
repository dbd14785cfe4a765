//! Representation numbers of ideal norm forms, partial and Hecke theta
//! series, Siegel theta functions of signature (2,2) on the tube domain and
//! of signature (1,1) along closed geodesics, translation of lattices through
//! the class group, and geodesic data of ideal classes.
use crate::abelian::Character;
use crate::cache::{read_table, write_table};
use crate::error::{Error, Result};
use crate::linalg::{divisors, hermite_rows, qi, qinv, IMat, QMat, Q};
use crate::numeric::{e, gamma, CSum, C64};
use crate::par::map_slice;
use crate::qspace::{dual_and_discriminant, m2_isometry, DiscriminantGroup, LatticeModel, Variant};
use crate::quadorder::{
    ideal_norm_form, kronecker, q_to_f64, Form, FractionalIdeal, QuadElem, RealQuadraticField, RingClassGroup, UnitData,
};
use num_integer::Integer;
use num_traits::{Signed, Zero};
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

/// Cutoffs above this bound are computed but not written to the cache.
pub const REP_CACHE_BOUND: u64 = 100_000;

/// Default absolute tolerance for theta truncation.
pub const DEFAULT_THETA_TOL: f64 = 1e-14;

/// Default bound on the number of enumerated lattice points per evaluation.
pub const DEFAULT_MAX_POINTS: usize = 50_000_000;

/// Representation numbers of one ideal class.
#[derive(Clone, Debug, PartialEq)]
pub struct RepCountTable {
    /// Label of the class of the ideal whose norm form is counted.
    pub label: Form,
    /// Scale of the quadratic form (1 for the primitive norm form).
    pub scale: i128,
    /// Largest `m` covered.
    pub cutoff: Q,
    /// Nonzero counts `m -> r(m)`.
    pub entries: BTreeMap<Q, u64>,
}

impl RepCountTable {
    pub fn get(&self, m: Q) -> u64 {
        self.entries.get(&m).copied().unwrap_or(0)
    }

    fn to_rows(&self) -> Vec<String> {
        self.entries.iter().map(|(m, c)| format!("{},{},{}", m.numer(), m.denom(), c)).collect()
    }

    fn from_rows(label: Form, scale: i128, cutoff: Q, rows: &[String]) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for r in rows {
            let f: Vec<&str> = r.split(',').collect();
            let parse = |s: &str| -> Result<i128> {
                s.trim().parse::<i128>().map_err(|e| Error::Cache(format!("bad rep-count row {r:?}: {e}")))
            };
            if f.len() != 3 {
                return Err(Error::Cache(format!("bad rep-count row {r:?}")));
            }
            let (num, den, c) = (parse(f[0])?, parse(f[1])?, parse(f[2])?);
            if den <= 0 || c < 0 {
                return Err(Error::Cache(format!("bad rep-count row {r:?}")));
            }
            entries.insert(Q::new(num, den), c as u64);
        }
        Ok(Self { label, scale, cutoff, entries })
    }
}

/// Element `(p + r sqrt d_K)/2` with integer `p, r`, used for exact unit powers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct HalfInt {
    p: i128,
    r: i128,
}

impl HalfInt {
    fn mul(self, o: Self, d_k: i128) -> Result<Self> {
        let ov = || Error::Overflow("unit power".into());
        let a = self.p.checked_mul(o.p).ok_or_else(ov)?;
        let b = self.r.checked_mul(o.r).and_then(|v| v.checked_mul(d_k)).ok_or_else(ov)?;
        let c = self.p.checked_mul(o.r).ok_or_else(ov)?;
        let d = self.r.checked_mul(o.p).ok_or_else(ov)?;
        Ok(Self { p: a.checked_add(b).ok_or_else(ov)? / 2, r: c.checked_add(d).ok_or_else(ov)? / 2 })
    }

    fn to_elem(self) -> QuadElem {
        QuadElem::new(Q::new(self.p, 2), Q::new(self.r, 2))
    }
}

/// `eps0` as an element `x + y sqrt d_K`.
pub fn eps0_elem(f: &RealQuadraticField, u: &UnitData) -> QuadElem {
    let s = f.sigma();
    QuadElem::new(qi(u.eps0_x) + Q::new(u.eps0_y * s, 2), Q::new(u.eps0_y, 2))
}

fn in_order(x: &QuadElem, c: i128, sigma: i128) -> bool {
    // x = a + b c omega with omega = (sigma + sqrt d_K)/2.
    let b = x.y * qi(2) / qi(c);
    let a = x.x - x.y * qi(sigma);
    b.is_integer() && a.is_integer()
}

/// Fundamental unit of the order `O_c` (the least power of `eps0` lying in
/// it) together with its norm.
pub fn unit_of_order(f: &RealQuadraticField, u: &UnitData, c: i128) -> Result<(QuadElem, i32)> {
    let e0 = eps0_elem(f, u);
    let base = HalfInt { p: (e0.x * qi(2)).to_integer(), r: (e0.y * qi(2)).to_integer() };
    let mut acc = base;
    for k in 1..=4096i32 {
        let el = acc.to_elem();
        if in_order(&el, c, f.sigma()) {
            let norm = if u.eps0_norm == -1 && k % 2 == 1 { -1 } else { 1 };
            return Ok((el, norm));
        }
        acc = acc.mul(base, f.d_k)?;
    }
    Err(Error::Numeric(format!("no power of eps0 up to 4096 lies in the order of conductor {c}")))
}

/// Norm-one fundamental unit `eps1` of `O_c` (`eps_c` or `eps_c^2`) and its logarithm.
pub fn norm_one_unit(f: &RealQuadraticField, u: &UnitData, c: i128) -> Result<(QuadElem, f64)> {
    let (eps, n) = unit_of_order(f, u, c)?;
    let e1 = if n == 1 { eps } else { eps.mul(&eps, f.d_k) };
    let (x1, _) = e1.embeddings(f.sqrt_dk);
    Ok((e1, x1.ln()))
}

/// Exact sign of the first real embedding `x + y sqrt d`.
fn sign_first(x: &QuadElem, d_k: i128) -> i32 {
    let sx = x.x.signum();
    let sy = x.y.signum();
    let (sx, sy) = (sx.to_integer() as i32, sy.to_integer() as i32);
    if sx == 0 {
        return sy;
    }
    if sy == 0 || sx == sy {
        return sx;
    }
    let lhs = x.x * x.x;
    let rhs = qi(d_k) * x.y * x.y;
    if lhs > rhs {
        sx
    } else {
        sy
    }
}

/// Whether `|lambda / lambda^tau| >= 1`, i.e. `x y >= 0`.
fn ratio_at_least_one(x: &QuadElem) -> bool {
    !(x.x * x.y).is_negative()
}

fn elem_inverse(x: &QuadElem, d_k: i128) -> QuadElem {
    x.conj().scale(x.norm(d_k).recip())
}

/// Counting data for [`count_orbits`].
struct OrbitCount<'a> {
    d_k: i128,
    sqrt_dk: f64,
    basis: [QuadElem; 2],
    shift: QuadElem,
    /// `Q(lambda) = nu N(lambda)`.
    nu: Q,
    /// Totally positive generator of the free part of the unit group.
    eta: &'a QuadElem,
    /// Whether `-1` belongs to the unit group.
    minus: bool,
    /// Count `Q = m` (signed) or `|Q| = m`.
    signed: bool,
    cutoff: Q,
}

/// Counts vectors `lambda in shift + Z basis` with `Q(lambda) = m` (or
/// `|Q| = m`), one per orbit of the unit group, using the fundamental domain
/// `1 <= |lambda / lambda^tau| < eta^2` (and `lambda > 0` if `-1` acts).
fn count_orbits(c: &OrbitCount<'_>) -> Result<BTreeMap<Q, u64>> {
    let mut out = BTreeMap::new();
    if !c.cutoff.is_positive() {
        return Ok(out);
    }
    let nmax = q_to_f64(c.cutoff / c.nu.abs());
    let (eta1, _) = c.eta.embeddings(c.sqrt_dk);
    let pad = 1e-7;
    let x1 = eta1 * nmax.sqrt() * (1.0 + pad) + pad;
    let x2 = nmax.sqrt() * (1.0 + pad) + pad;
    let (b00, b01) = c.basis[0].embeddings(c.sqrt_dk);
    let (b10, b11) = c.basis[1].embeddings(c.sqrt_dk);
    let (s1, s2) = c.shift.embeddings(c.sqrt_dk);
    // lambda_1 = b00 a + b10 b + s1, lambda_2 = b01 a + b11 b + s2.
    let det = b00 * b11 - b10 * b01;
    if det.abs() < 1e-300 {
        return Err(Error::Validation("degenerate lattice basis".into()));
    }
    let lo1 = if c.minus { -pad } else { -x1 };
    let corners = [(lo1, -x2), (lo1, x2), (x1, -x2), (x1, x2)];
    let a_of = |l1: f64, l2: f64| ((l1 - s1) * b11 - (l2 - s2) * b10) / det;
    let amin = corners.iter().map(|&(p, q)| a_of(p, q)).fold(f64::INFINITY, f64::min);
    let amax = corners.iter().map(|&(p, q)| a_of(p, q)).fold(f64::NEG_INFINITY, f64::max);
    if !(amax - amin).is_finite() || amax - amin > 1e9 {
        return Err(Error::Numeric("representation search box too large".into()));
    }
    let eta_inv = elem_inverse(c.eta, c.d_k);
    let b_range = |coef: f64, off: f64, lo: f64, hi: f64| -> (f64, f64) {
        // coef * b + off in [lo, hi].
        let (u, v) = ((lo - off) / coef, (hi - off) / coef);
        (u.min(v), u.max(v))
    };
    let mut a = amin.floor() as i128 - 1;
    while (a as f64) <= amax + 1.0 {
        let af = a as f64;
        let (l1lo, l1hi) = b_range(b10, b00 * af + s1, lo1, x1);
        let (l2lo, l2hi) = b_range(b11, b01 * af + s2, -x2, x2);
        let blo = l1lo.max(l2lo).floor() as i128 - 1;
        let bhi = l1hi.min(l2hi).ceil() as i128 + 1;
        for b in blo..=bhi {
            let lam = c.shift.add(&c.basis[0].scale(qi(a))).add(&c.basis[1].scale(qi(b)));
            let n = lam.norm(c.d_k);
            if n.is_zero() {
                continue;
            }
            let val = c.nu * n;
            if c.signed && !val.is_positive() {
                continue;
            }
            let m = val.abs();
            if m > c.cutoff {
                continue;
            }
            if c.minus && sign_first(&lam, c.d_k) <= 0 {
                continue;
            }
            if !ratio_at_least_one(&lam) {
                continue;
            }
            let shifted = lam.mul(&eta_inv, c.d_k);
            if ratio_at_least_one(&shifted) {
                continue;
            }
            *out.entry(m).or_insert(0u64) += 1;
        }
        a += 1;
    }
    Ok(out)
}

/// Representation numbers of the primitive norm form `N(lambda)/N(a)` of an
/// ideal: for each `1 <= m <= cutoff`, the number of orbits of the unit
/// group `O^x` on `{lambda in a : |N(lambda)| = m N(a)}`. This is the number
/// of integral ideals of norm `m` in the class of `a^-1`.
pub fn rep_counts(
    f: &RealQuadraticField,
    u: &UnitData,
    rcg: &RingClassGroup,
    a: &FractionalIdeal,
    cutoff: u64,
) -> Result<RepCountTable> {
    let (eps, _) = unit_of_order(f, u, a.conductor)?;
    let entries = count_orbits(&OrbitCount {
        d_k: f.d_k,
        sqrt_dk: f.sqrt_dk,
        basis: [a.alpha, a.z],
        shift: QuadElem::rational(Q::zero()),
        nu: a.norm.recip(),
        eta: &eps,
        minus: true,
        signed: false,
        cutoff: qi(cutoff as i128),
    })?;
    let label = rcg.labels[rcg.class_of_ideal(a)?];
    Ok(RepCountTable { label, scale: 1, cutoff: qi(cutoff as i128), entries })
}

/// [`rep_counts`] backed by the on-disk cache (`m_num,m_den,count`).
pub fn rep_counts_cached(
    f: &RealQuadraticField,
    u: &UnitData,
    rcg: &RingClassGroup,
    a: &FractionalIdeal,
    cutoff: u64,
    dir: Option<&Path>,
) -> Result<RepCountTable> {
    let label = rcg.labels[rcg.class_of_ideal(a)?];
    let path = dir.map(|d| {
        d.join(format!("repcounts_dK{}_c{}_{}_{}_{}_s1_M{}.csv", f.d_k, a.conductor, label.a, label.b, label.c, cutoff))
    });
    if let Some(p) = &path {
        if p.exists() {
            if let Ok(rows) = read_table(p, "m_num,m_den,count") {
                if let Ok(t) = RepCountTable::from_rows(label, 1, qi(cutoff as i128), &rows) {
                    return Ok(t);
                }
            }
        }
    }
    let t = rep_counts(f, u, rcg, a, cutoff)?;
    if let Some(p) = &path {
        if cutoff <= REP_CACHE_BOUND {
            write_table(p, "m_num,m_den,count", &t.to_rows())?;
        }
    }
    Ok(t)
}

/// The lattice element of `K` with ambient coordinates `(c0, c1)` in the basis `(alpha, z)`.
pub fn k_elem(a: &FractionalIdeal, c: &[Q]) -> QuadElem {
    a.alpha.scale(c[0]).add(&a.z.scale(c[1]))
}

/// Coordinates of an element of `K` in the basis `(alpha, z)` (alpha rational).
pub fn coords_in_basis(a: &FractionalIdeal, x: &QuadElem) -> [Q; 2] {
    let b = x.y / a.z.y;
    let c0 = (x.x - b * a.z.x) / a.alpha.x;
    [c0, b]
}

/// Matrix of multiplication by `g` on row vectors of `(alpha, z)`-coordinates.
pub fn mult_matrix(a: &FractionalIdeal, g: &QuadElem) -> QMat {
    [a.alpha, a.z].iter().map(|b| coords_in_basis(a, &g.mul(b, a.d_k)).to_vec()).collect()
}

fn lattice_coords(l: &LatticeModel, amb: &[Q]) -> Result<Vec<Q>> {
    let binv = qinv(&l.basis).ok_or_else(|| Error::Validation("lattice basis is singular".into()))?;
    let n = l.rank();
    Ok((0..n).map(|j| (0..n).fold(Q::zero(), |acc, i| acc + amb[i] * binv[i][j])).collect())
}

fn row_times(x: &[Q], m: &QMat) -> Vec<Q> {
    (0..m[0].len()).map(|j| x.iter().zip(m).fold(Q::zero(), |acc, (xi, r)| acc + *xi * r[j])).collect()
}

fn block_mult(l: &LatticeModel, g: &QuadElem) -> Result<QMat> {
    let a = &l.ambient.ideal;
    let m = mult_matrix(a, g);
    let n = l.ambient.gram.len();
    if !n.is_multiple_of(2) {
        return Err(Error::Validation("ambient space is not a sum of copies of K".into()));
    }
    let mut out = vec![vec![Q::zero(); n]; n];
    for b in 0..n / 2 {
        for i in 0..2 {
            for j in 0..2 {
                out[2 * b + i][2 * b + j] = m[i][j];
            }
        }
    }
    Ok(out)
}

/// Permutation `mu -> g mu` of the discriminant group induced by an ambient
/// isometry `g` (acting on row vectors) that preserves the lattice.
pub fn isometry_permutation(l: &LatticeModel, disc: &DiscriminantGroup, g: &QMat) -> Result<Vec<usize>> {
    for row in &l.basis {
        let img = lattice_coords(l, &row_times(row, g))?;
        if img.iter().any(|x| !x.is_integer()) {
            return Err(Error::Validation("isometry does not preserve the lattice".into()));
        }
    }
    disc.coset_reps
        .iter()
        .map(|mu| {
            let amb = l.to_ambient(mu);
            disc.index_of(&lattice_coords(l, &row_times(&amb, g))?)
        })
        .collect()
}

/// Representation numbers on a coset `mu + L` of a rank-2 lattice in `V1` or
/// `V2`: the number of solutions of `Q(lambda) = m` (scaled form, `m > 0`)
/// modulo the norm-one units that stabilize the coset.
pub fn rep_counts_coset(
    f: &RealQuadraticField,
    u: &UnitData,
    l: &LatticeModel,
    disc: &DiscriminantGroup,
    mu: usize,
    cutoff: Q,
) -> Result<RepCountTable> {
    let a = &l.ambient.ideal;
    let sign = match l.ambient.variant {
        Variant::V2 => 1,
        Variant::V1 => -1,
        _ => return Err(Error::Validation("coset representation numbers need a lattice in V1 or V2".into())),
    };
    let (eps1, _) = norm_one_unit(f, u, a.conductor)?;
    let basis = [k_elem(a, &l.basis[0]), k_elem(a, &l.basis[1])];
    let shift_amb = l.to_ambient(&disc.coset_reps[mu]);
    let shift = k_elem(a, &shift_amb);
    let in_l = |x: &QuadElem| -> Result<bool> {
        let c = coords_in_basis(a, x);
        Ok(lattice_coords(l, &c)?.iter().all(|v| v.is_integer()))
    };
    let two_mu = shift.scale(qi(2));
    let minus = in_l(&two_mu)?;
    let mut eta = eps1;
    let mut found = false;
    for _ in 0..512 {
        let img = eta.mul(&shift, f.d_k);
        let diff = img.add(&shift.scale(qi(-1)));
        let sum = img.add(&shift);
        if in_l(&diff)? || in_l(&sum)? {
            found = true;
            break;
        }
        eta = eta.mul(&eps1, f.d_k);
    }
    if !found {
        return Err(Error::Numeric("coset stabilizer not found among eps1^k, k <= 512".into()));
    }
    let entries = count_orbits(&OrbitCount {
        d_k: f.d_k,
        sqrt_dk: f.sqrt_dk,
        basis,
        shift,
        nu: qi(sign) * l.scale / a.norm,
        eta: &eta,
        minus,
        signed: true,
        cutoff,
    })?;
    let label = ideal_norm_form(a)?;
    Ok(RepCountTable { label, scale: l.scale.to_integer(), cutoff, entries })
}

/// `sum_{d | m} eta(d)`: the number of integral ideals of `O_K` of norm `m`.
pub fn eta_divisor_sum(f: &RealQuadraticField, m: u64) -> Result<i64> {
    let mut s = 0i64;
    for d in divisors(m) {
        s += kronecker(f, d as i128)? as i64;
    }
    Ok(s)
}

/// `theta_A = sum_{m >= 0} r_A(m) q^m` with constant term 1, coefficients `0..=cutoff`.
pub fn partial_theta(
    f: &RealQuadraticField,
    u: &UnitData,
    rcg: &RingClassGroup,
    class: usize,
    cutoff: u64,
    cache: Option<&Path>,
) -> Result<Vec<f64>> {
    let a = rcg.reps.get(class).ok_or_else(|| Error::Validation(format!("class index {class} out of range")))?;
    let t = rep_counts_cached(f, u, rcg, a, cutoff, cache)?;
    let mut out = vec![0.0; cutoff as usize + 1];
    out[0] = 1.0;
    for (m, c) in &t.entries {
        out[m.to_integer() as usize] = *c as f64;
    }
    Ok(out)
}

/// `theta(chi) = sum_A chi(A) theta_A`.
pub fn hecke_theta(
    f: &RealQuadraticField,
    u: &UnitData,
    rcg: &RingClassGroup,
    chi: &Character,
    cutoff: u64,
    cache: Option<&Path>,
) -> Result<Vec<C64>> {
    let mut out = vec![C64::new(0.0, 0.0); cutoff as usize + 1];
    for k in 0..rcg.order() {
        let th = partial_theta(f, u, rcg, k, cutoff, cache)?;
        let w = chi.value(k);
        for (o, t) in out.iter_mut().zip(&th) {
            *o += w * *t;
        }
    }
    Ok(out)
}

/// A point of `H x H`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TubePoint {
    pub z1: C64,
    pub z2: C64,
}

impl TubePoint {
    pub fn new(z1: C64, z2: C64) -> Result<Self> {
        if !(z1.im > 0.0 && z2.im > 0.0) {
            return Err(Error::Validation("tube point needs Im z1 > 0 and Im z2 > 0".into()));
        }
        Ok(Self { z1, z2 })
    }
}

/// Truncation controls for theta sums.
#[derive(Clone, Copy, Debug)]
pub struct ThetaOptions {
    /// Absolute tolerance on the neglected tail.
    pub tol: f64,
    /// Enumeration radius in the majorant norm; chosen automatically if absent.
    pub radius: Option<f64>,
    pub max_points: usize,
}

impl Default for ThetaOptions {
    fn default() -> Self {
        Self { tol: DEFAULT_THETA_TOL, radius: None, max_points: DEFAULT_MAX_POINTS }
    }
}

/// A theta value over the discriminant group with truncation data.
#[derive(Clone, Debug)]
pub struct ThetaValue {
    pub values: Vec<C64>,
    pub radius: f64,
    pub tail_bound: f64,
    pub points: usize,
}

/// Upper-triangular `R` with `M = R^T R`.
fn cholesky_upper(m: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = m.len();
    let mut r = vec![vec![0.0; n]; n];
    for j in 0..n {
        let mut s = m[j][j];
        for k in 0..j {
            s -= r[k][j] * r[k][j];
        }
        if !(s > 0.0) {
            return Err(Error::Validation("majorant is not positive definite".into()));
        }
        r[j][j] = s.sqrt();
        for i in j + 1..n {
            let mut t = m[j][i];
            for k in 0..j {
                t -= r[k][j] * r[k][i];
            }
            r[j][i] = t / r[j][j];
        }
    }
    Ok(r)
}

/// Bound on `sum_{x in mu + Z^n, M(x) > R^2} exp(-pi v M(x))` by counting
/// points in shells with a covering-radius margin.
pub fn gaussian_tail_bound(m: &[Vec<f64>], det: f64, v: f64, radius: f64) -> f64 {
    let n = m.len() as f64;
    let rho = 0.5 * (0..m.len()).map(|i| m[i][i]).sum::<f64>().sqrt();
    let vol = PI.powf(n / 2.0) / gamma(n / 2.0 + 1.0) / det.sqrt();
    let step = (0.25 / (PI * v)).sqrt().min(1.0);
    let mut total = 0.0;
    let mut r = radius;
    for _ in 0..100_000 {
        let r1 = r + step;
        let count = vol * ((r1 + rho).powf(n) - (r - rho).max(0.0).powf(n));
        let c = count.max(1.0) * (-PI * v * r * r).exp();
        total += c;
        if c < 1e-30 * total.max(1e-300) || (c == 0.0 && r > radius) {
            break;
        }
        r = r1;
    }
    total
}

fn enumerate_level(r: &[Vec<f64>], shift: &[f64], x: &mut Vec<f64>, level: usize, rem: f64, out: &mut Vec<Vec<f64>>) {
    let n = r.len();
    let mut c = 0.0;
    for j in level + 1..n {
        c -= r[level][j] / r[level][level] * x[j];
    }
    let w = (rem.max(0.0)).sqrt() / r[level][level];
    let k0 = (c - w - shift[level]).ceil() as i64;
    let k1 = (c + w - shift[level]).floor() as i64;
    for k in k0..=k1 {
        let xi = shift[level] + k as f64;
        let d = r[level][level] * (xi - c);
        let rem2 = rem - d * d;
        if rem2 < -1e-9 * rem.abs().max(1.0) {
            continue;
        }
        x[level] = xi;
        if level == 0 {
            out.push(x.clone());
        } else {
            enumerate_level(r, shift, x, level - 1, rem2, out);
        }
    }
}

/// `theta_mu(tau) = sum_{x in mu + L} e(u Q(x)) exp(-pi v M(x))` for every
/// coset, where `Q` is the scaled quadratic form with Gram `gram` and `M`
/// a positive definite majorant, both in lattice coordinates.
pub fn theta_with_majorant(
    gram: &IMat,
    disc: &DiscriminantGroup,
    maj: &[Vec<f64>],
    tau: C64,
    opts: &ThetaOptions,
) -> Result<ThetaValue> {
    let n = gram.len();
    if maj.len() != n {
        return Err(Error::Validation("majorant dimension mismatch".into()));
    }
    if !(tau.im > 0.0) {
        return Err(Error::Validation("Im tau must be positive".into()));
    }
    let v = tau.im;
    let r = cholesky_upper(maj)?;
    let det: f64 = (0..n).map(|i| r[i][i] * r[i][i]).product();
    let vol_unit = PI.powf(n as f64 / 2.0) / gamma(n as f64 / 2.0 + 1.0) / det.sqrt();
    let rho = 0.5 * (0..n).map(|i| maj[i][i]).sum::<f64>().sqrt();
    let radius = match opts.radius {
        Some(rad) => {
            let tail = gaussian_tail_bound(maj, det, v, rad);
            if tail > opts.tol {
                let mut need = rad.max(1e-3);
                while gaussian_tail_bound(maj, det, v, need) > opts.tol {
                    need *= 1.05;
                }
                return Err(Error::Numeric(format!(
                    "theta truncation: tail bound {tail:.3e} at radius {rad} exceeds tolerance {:.1e}; required radius {need:.6}",
                    opts.tol
                )));
            }
            rad
        }
        None => {
            let mut rad = ((opts.tol.recip().ln()).max(1.0) / (PI * v)).sqrt();
            while gaussian_tail_bound(maj, det, v, rad) > opts.tol {
                rad *= 1.05;
            }
            rad
        }
    };
    let tail = gaussian_tail_bound(maj, det, v, radius);
    let est = vol_unit * (radius + rho).powi(n as i32) * disc.order() as f64;
    if est > opts.max_points as f64 {
        return Err(Error::Numeric(format!(
            "theta enumeration would visit about {est:.3e} points (radius {radius:.4}, limit {})",
            opts.max_points
        )));
    }
    let r2 = radius * radius;
    let gf: Vec<Vec<f64>> = gram.iter().map(|row| row.iter().map(|&x| x as f64).collect()).collect();
    let mut values = Vec::with_capacity(disc.order());
    let mut points = 0usize;
    for mu in &disc.coset_reps {
        let shift: Vec<f64> = mu.iter().map(|x| q_to_f64(*x)).collect();
        // Top coordinate values, processed in parallel; lower levels serially.
        let top = n - 1;
        let w = r2.sqrt() / r[top][top];
        let k0 = (-w - shift[top]).ceil() as i64;
        let k1 = (w - shift[top]).floor() as i64;
        let tops: Vec<i64> = (k0..=k1).collect();
        let partial: Vec<(C64, usize)> = map_slice(&tops, |&k| {
            let mut x = vec![0.0; n];
            let xt = shift[top] + k as f64;
            let d = r[top][top] * xt;
            let rem = r2 - d * d;
            let mut pts = vec![];
            if rem >= -1e-12 {
                x[top] = xt;
                if top == 0 {
                    pts.push(x.clone());
                } else {
                    enumerate_level(&r, &shift, &mut x, top - 1, rem, &mut pts);
                }
            }
            let mut acc = CSum::new();
            for p in &pts {
                let mut mx = 0.0;
                let mut qx = 0.0;
                for i in 0..n {
                    let mut si = 0.0;
                    let mut gi = 0.0;
                    for j in 0..n {
                        si += maj[i][j] * p[j];
                        gi += gf[i][j] * p[j];
                    }
                    mx += p[i] * si;
                    qx += p[i] * gi;
                }
                qx *= 0.5;
                acc.add(e(tau.re * qx) * (-PI * v * mx).exp());
            }
            (acc.value(), pts.len())
        });
        let mut acc = CSum::new();
        for (z, c) in partial {
            acc.add(z);
            points += c;
        }
        values.push(acc.value());
    }
    Ok(ThetaValue { values, radius, tail_bound: tail, points })
}

/// A lattice point of a coset: `(coset index, Q(x), M(x))` with `Q` the
/// scaled form and `M` the majorant.
pub type CosetPoint = (usize, f64, f64);

/// LLL reduction (`delta = 3/4`) of the standard basis with respect to a
/// positive definite Gram matrix. Returns `(U, U^-1, U^T G U)` with `U`
/// unimodular; the reduced basis vectors are the columns of `U`.
pub fn lll_reduce(g: &[Vec<f64>]) -> (Vec<Vec<i64>>, Vec<Vec<i64>>, Vec<Vec<f64>>) {
    let n = g.len();
    let mut u: Vec<Vec<i64>> = (0..n).map(|i| (0..n).map(|j| (i == j) as i64).collect()).collect();
    let mut uinv = u.clone();
    let mut gr = g.to_vec();
    let gso = |gr: &[Vec<f64>]| -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut mu = vec![vec![0.0; n]; n];
        let mut bb = vec![0.0; n];
        for i in 0..n {
            for j in 0..i {
                let mut s = gr[i][j];
                for k in 0..j {
                    s -= mu[j][k] * mu[i][k] * bb[k];
                }
                mu[i][j] = s / bb[j];
            }
            let mut s = gr[i][i];
            for k in 0..i {
                s -= mu[i][k] * mu[i][k] * bb[k];
            }
            bb[i] = s;
        }
        (mu, bb)
    };
    // b_k <- b_k - q b_j on the Gram matrix and the transforms.
    let reduce =
        |gr: &mut Vec<Vec<f64>>, u: &mut Vec<Vec<i64>>, uinv: &mut Vec<Vec<i64>>, k: usize, j: usize, q: i64| {
            let qf = q as f64;
            let gkk = gr[k][k] - 2.0 * qf * gr[k][j] + qf * qf * gr[j][j];
            for i in 0..n {
                if i != k {
                    let v = gr[k][i] - qf * gr[j][i];
                    gr[k][i] = v;
                    gr[i][k] = v;
                }
            }
            gr[k][k] = gkk;
            for row in u.iter_mut() {
                row[k] -= q * row[j];
            }
            for c in 0..n {
                uinv[j][c] += q * uinv[k][c];
            }
        };
    let mut k = 1;
    let mut guard = 0;
    while k < n && guard < 10_000 {
        guard += 1;
        for j in (0..k).rev() {
            let (mu, _) = gso(&gr);
            let q = mu[k][j].round();
            if q != 0.0 {
                reduce(&mut gr, &mut u, &mut uinv, k, j, q as i64);
            }
        }
        let (mu, bb) = gso(&gr);
        if bb[k] >= (0.75 - mu[k][k - 1] * mu[k][k - 1]) * bb[k - 1] {
            k += 1;
        } else {
            gr.swap(k, k - 1);
            for row in gr.iter_mut() {
                row.swap(k, k - 1);
            }
            for row in u.iter_mut() {
                row.swap(k, k - 1);
            }
            uinv.swap(k, k - 1);
            k = k.max(2) - 1;
        }
    }
    (u, uinv, gr)
}

/// All `x in mu + L` with `M(x) <= radius^2`, for every coset `mu` with
/// `cosets[mu]` set (all cosets when `cosets` is `None`). Enumeration runs
/// in an LLL-reduced basis for `M`.
pub fn enumerate_points(
    gram: &IMat,
    disc: &DiscriminantGroup,
    maj: &[Vec<f64>],
    radius: f64,
    max_points: usize,
    cosets: Option<&[bool]>,
) -> Result<Vec<CosetPoint>> {
    let n = gram.len();
    if maj.len() != n {
        return Err(Error::Validation("majorant dimension mismatch".into()));
    }
    let (umat, uinv, red) = lll_reduce(maj);
    let r = cholesky_upper(&red)?;
    let det: f64 = (0..n).map(|i| r[i][i] * r[i][i]).product();
    let rho = 0.5 * (0..n).map(|i| red[i][i]).sum::<f64>().sqrt();
    let active = match cosets {
        Some(m) => m.iter().filter(|&&b| b).count(),
        None => disc.order(),
    };
    let vol_unit = PI.powf(n as f64 / 2.0) / gamma(n as f64 / 2.0 + 1.0) / det.sqrt();
    let est = vol_unit * (radius + rho).powi(n as i32) * active as f64;
    if est > max_points as f64 {
        return Err(Error::Numeric(format!(
            "enumeration would visit about {est:.3e} points (radius {radius:.4}, limit {max_points})"
        )));
    }
    let gf: Vec<Vec<f64>> = gram.iter().map(|row| row.iter().map(|&x| x as f64).collect()).collect();
    let mut out = vec![];
    for (idx, mu) in disc.coset_reps.iter().enumerate() {
        if cosets.is_some_and(|m| !m[idx]) {
            continue;
        }
        let mu_f: Vec<f64> = mu.iter().map(|x| q_to_f64(*x)).collect();
        let shift: Vec<f64> = (0..n).map(|i| (0..n).map(|j| uinv[i][j] as f64 * mu_f[j]).sum()).collect();
        let mut pts = vec![];
        let mut y = vec![0.0; n];
        enumerate_level(&r, &shift, &mut y, n - 1, radius * radius, &mut pts);
        for yv in pts {
            let p: Vec<f64> = (0..n).map(|i| (0..n).map(|j| umat[i][j] as f64 * yv[j]).sum()).collect();
            let (mut mx, mut qx) = (0.0, 0.0);
            for i in 0..n {
                let (mut si, mut gi) = (0.0, 0.0);
                for j in 0..n {
                    si += maj[i][j] * p[j];
                    gi += gf[i][j] * p[j];
                }
                mx += p[i] * si;
                qx += p[i] * gi;
            }
            out.push((idx, 0.5 * qx, mx));
        }
    }
    Ok(out)
}

/// Determinant of a positive definite majorant.
pub fn majorant_det(maj: &[Vec<f64>]) -> Result<f64> {
    let r = cholesky_upper(maj)?;
    Ok((0..maj.len()).map(|i| r[i][i] * r[i][i]).product())
}

fn f64_mat(m: &QMat) -> Vec<Vec<f64>> {
    m.iter().map(|r| r.iter().map(|x| q_to_f64(*x)).collect()).collect()
}

/// Isotropic vector `w(z)` in ambient coordinates of `(V_A, Q_A)`: the image
/// of `[[z1, -z1 z2], [1, -z2]]` under the isometry from `(M_2, det)`.
pub fn tube_vector(a: &FractionalIdeal, z: &TubePoint) -> Result<Vec<C64>> {
    let phi = f64_mat(&m2_isometry(a)?);
    let x = [z.z1, -z.z1 * z.z2, C64::new(1.0, 0.0), -z.z2];
    Ok((0..4).map(|i| (0..4).fold(C64::new(0.0, 0.0), |acc, k| acc + x[k] * phi[i][k])).collect())
}

/// Tube point of the negative plane spanned by the real and imaginary parts
/// of an isotropic ambient vector.
pub fn tube_point_of_vector(a: &FractionalIdeal, w: &[C64]) -> Result<TubePoint> {
    let phi = m2_isometry(a)?;
    let inv = f64_mat(&qinv(&phi).ok_or_else(|| Error::Validation("singular isometry".into()))?);
    let x: Vec<C64> = (0..4).map(|i| (0..4).fold(C64::new(0.0, 0.0), |acc, k| acc + w[k] * inv[i][k])).collect();
    if x[2].norm() < 1e-300 {
        return Err(Error::Numeric("plane meets the boundary of the tube domain".into()));
    }
    let mut z1 = x[0] / x[2];
    let mut z2 = -x[3] / x[2];
    if z1.im < 0.0 && z2.im < 0.0 {
        z1 = z1.conj();
        z2 = z2.conj();
    }
    TubePoint::new(z1, z2)
}

fn ambient_pairings(l: &LatticeModel, w: &[C64]) -> (Vec<C64>, f64) {
    let g = f64_mat(&l.ambient.gram);
    let n = g.len();
    let gw: Vec<C64> = (0..n).map(|i| (0..n).fold(C64::new(0.0, 0.0), |acc, j| acc + w[j] * g[i][j])).collect();
    let b = f64_mat(&l.basis);
    let u: Vec<C64> = b.iter().map(|row| (0..n).fold(C64::new(0.0, 0.0), |acc, i| acc + gw[i] * row[i])).collect();
    let ww = (0..n).fold(C64::new(0.0, 0.0), |acc, i| acc + w[i].conj() * gw[i]);
    (u, ww.re)
}

/// Majorant `(x, x) + 4 |(x, w)|^2 / |(w, w-bar)|` in lattice coordinates (scaled).
pub fn tube_majorant(l: &LatticeModel, z: &TubePoint) -> Result<Vec<Vec<f64>>> {
    if l.ambient.variant != Variant::BigQ {
        return Err(Error::Validation("the tube domain model needs a lattice in (V_A, Q_A)".into()));
    }
    let w = tube_vector(&l.ambient.ideal, z)?;
    let (u, ww) = ambient_pairings(l, &w);
    if !(ww < 0.0) {
        return Err(Error::Numeric("w(z) does not span a negative plane".into()));
    }
    let gb = f64_mat(&l.gram());
    let s = q_to_f64(l.scale);
    let n = l.rank();
    Ok((0..n)
        .map(|i| (0..n).map(|j| s * (gb[i][j] + 4.0 * (u[i].re * u[j].re + u[i].im * u[j].im) / ww.abs())).collect())
        .collect())
}

/// Majorant `(lambda_1^2 e^{-t} + lambda_2^2 e^{t}) / N(a)` along the
/// geodesic of `V1` or `V2`, in lattice coordinates (scaled).
pub fn geodesic_majorant(l: &LatticeModel, t: f64) -> Result<Vec<Vec<f64>>> {
    if !matches!(l.ambient.variant, Variant::V1 | Variant::V2) {
        return Err(Error::Validation("geodesic majorant needs a lattice in V1 or V2".into()));
    }
    let a = &l.ambient.ideal;
    let sq = (a.d_k as f64).sqrt();
    let na = q_to_f64(a.norm);
    let s = q_to_f64(l.scale);
    let emb: Vec<(f64, f64)> = l.basis.iter().map(|row| k_elem(a, row).embeddings(sq)).collect();
    let (em, ep) = ((-t).exp(), t.exp());
    Ok((0..2)
        .map(|i| (0..2).map(|j| s * (emb[i].0 * emb[j].0 * em + emb[i].1 * emb[j].1 * ep) / na).collect())
        .collect())
}

/// A lattice of the genus of `L` obtained by multiplying by `b b-bar^-1`,
/// with the identification of discriminant groups `mu -> k mu`.
#[derive(Clone, Debug)]
pub struct GenusTranslate {
    pub lattice: LatticeModel,
    pub disc: DiscriminantGroup,
    /// `map[mu]` is the coset of the translated lattice identified with `mu`.
    pub map: Vec<usize>,
}

fn z_span_rows(rows: &[Vec<Q>]) -> Result<QMat> {
    let n = rows[0].len();
    let den = rows.iter().flat_map(|r| r.iter()).fold(1i128, |acc, x| acc.lcm(x.denom()));
    let im: IMat = rows.iter().map(|r| r.iter().map(|x| (*x * qi(den)).to_integer()).collect()).collect();
    let h = hermite_rows(&im);
    let out: QMat = h
        .into_iter()
        .filter(|r| r.iter().any(|&x| x != 0))
        .map(|r| r.into_iter().map(|x| Q::new(x, den)).collect())
        .collect();
    if out.len() != n {
        return Err(Error::Validation("generators do not span a full lattice".into()));
    }
    Ok(out)
}

/// Z-basis of the product `b b-bar^-1 = b^2 / N(b)` as elements of `K`.
fn ideal_ratio_basis(b: &FractionalIdeal) -> Result<[QuadElem; 2]> {
    let gens = [b.alpha, b.z];
    let mut rows = vec![];
    for x in &gens {
        for y in &gens {
            let p = x.mul(y, b.d_k).scale(b.norm.recip());
            rows.push(vec![p.x, p.y]);
        }
    }
    let h = z_span_rows(&rows)?;
    Ok([QuadElem::new(h[0][0], h[0][1]), QuadElem::new(h[1][0], h[1][1])])
}

/// Translates an `O`-stable lattice (ideal sums or summands) by the class of `b`.
pub fn genus_translate(
    l: &LatticeModel,
    disc: &DiscriminantGroup,
    b: &FractionalIdeal,
    max_order: usize,
) -> Result<GenusTranslate> {
    if !matches!(l.kind, crate::qspace::LatticeKind::IdealSum { .. } | crate::qspace::LatticeKind::IdealSummand { .. })
    {
        return Err(Error::Validation("class translation is defined for ideal lattices only".into()));
    }
    let c = ideal_ratio_basis(b)?;
    let mut rows = vec![];
    for g in &c {
        let m = block_mult(l, g)?;
        for r in &l.basis {
            rows.push(row_times(r, &m));
        }
    }
    let basis = z_span_rows(&rows)?;
    let mut lat = LatticeModel::new(l.ambient.clone(), basis, l.kind.clone())?;
    lat = lat.rescaled(l.scale)?;
    let d2 = dual_and_discriminant(&lat, max_order)?;
    if d2.order() != disc.order() {
        return Err(Error::Numeric("translated lattice has a different discriminant".into()));
    }
    let e = (2 * disc.exponent).lcm(&disc.level());
    let nb = (b.norm.numer() * b.norm.denom()).abs();
    if nb.gcd(&e) != 1 {
        return Err(Error::Validation(format!("ideal norm {nb} is not prime to the discriminant exponent {e}")));
    }
    // k = 1 mod e and k = 0 mod N(b).
    let inv = crate::linalg::inv_mod(nb.rem_euclid(e), e).unwrap_or(1);
    let k = nb * inv;
    let mut map = Vec::with_capacity(disc.order());
    for (i, mu) in disc.coset_reps.iter().enumerate() {
        let amb: Vec<Q> = l.to_ambient(mu).into_iter().map(|x| x * qi(k)).collect();
        let j = d2.index_of(&lattice_coords(&lat, &amb)?)?;
        if d2.q_values[j] != disc.q_values[i] {
            return Err(Error::Numeric("class translation does not preserve Q mod 1".into()));
        }
        map.push(j);
    }
    Ok(GenusTranslate { lattice: lat, disc: d2, map })
}

fn reindex(v: ThetaValue, map: &[usize]) -> ThetaValue {
    let values = map.iter().map(|&j| v.values[j]).collect();
    ThetaValue { values, ..v }
}

/// Siegel theta function of a lattice in `(V_A, Q_A)` at a tube point,
/// optionally translated by the class of `h`.
pub fn siegel_theta_22(
    l: &LatticeModel,
    disc: &DiscriminantGroup,
    tau: C64,
    z: &TubePoint,
    h: Option<&FractionalIdeal>,
    opts: &ThetaOptions,
) -> Result<ThetaValue> {
    match h {
        None => theta_with_majorant(&l.scaled_gram(), disc, &tube_majorant(l, z)?, tau, opts),
        Some(b) => {
            let g = genus_translate(l, disc, b, disc.order().max(1))?;
            let v = theta_with_majorant(&g.lattice.scaled_gram(), &g.disc, &tube_majorant(&g.lattice, z)?, tau, opts)?;
            Ok(reindex(v, &g.map))
        }
    }
}

/// Siegel theta function of a lattice in `V1` or `V2` at the point `t` of
/// the geodesic, optionally translated by the class of `h`.
pub fn theta_11(
    l: &LatticeModel,
    disc: &DiscriminantGroup,
    tau: C64,
    t: f64,
    h: Option<&FractionalIdeal>,
    opts: &ThetaOptions,
) -> Result<ThetaValue> {
    match h {
        None => theta_with_majorant(&l.scaled_gram(), disc, &geodesic_majorant(l, t)?, tau, opts),
        Some(b) => {
            let g = genus_translate(l, disc, b, disc.order().max(1))?;
            let v =
                theta_with_majorant(&g.lattice.scaled_gram(), &g.disc, &geodesic_majorant(&g.lattice, t)?, tau, opts)?;
            Ok(reindex(v, &g.map))
        }
    }
}

/// Permutation `mu -> eps1 mu` of the discriminant group of an ideal lattice.
pub fn unit_permutation(
    f: &RealQuadraticField,
    u: &UnitData,
    l: &LatticeModel,
    disc: &DiscriminantGroup,
) -> Result<Vec<usize>> {
    let (eps1, _) = norm_one_unit(f, u, l.ambient.ideal.conductor)?;
    isometry_permutation(l, disc, &block_mult(l, &eps1)?)
}

/// Tube point `g z` for an ambient isometry `g` of `(V_A, Q_A)` (row action).
pub fn act_on_tube(a: &FractionalIdeal, g: &QMat, z: &TubePoint) -> Result<TubePoint> {
    let w = tube_vector(a, z)?;
    let gf = f64_mat(g);
    let w2: Vec<C64> = (0..4).map(|j| (0..4).fold(C64::new(0.0, 0.0), |acc, i| acc + w[i] * gf[i][j])).collect();
    tube_point_of_vector(a, &w2)
}

/// Multiplication by a unit on both summands of `(V_A, Q_A)`, as a row-action matrix.
pub fn diagonal_unit_matrix(l: &LatticeModel, g: &QuadElem) -> Result<QMat> {
    block_mult(l, g)
}

/// Closed geodesic attached to an ideal class.
#[derive(Clone, Debug, PartialEq)]
pub struct GeodesicSet {
    pub label: Form,
    /// Norm form `(a, b, c)` of the class representative.
    pub form: Form,
    /// `(-b +- sqrt Delta) / 2a` exactly.
    pub endpoints: [QuadElem; 2],
    pub endpoints_f64: [f64; 2],
    /// `2 log eps1`.
    pub period: f64,
    /// Labels of all classes (the translates `h`).
    pub classes: Vec<Form>,
}

/// Geodesic data of the class with index `class`.
pub fn geodesic_set(f: &RealQuadraticField, u: &UnitData, rcg: &RingClassGroup, class: usize) -> Result<GeodesicSet> {
    let a = rcg.reps.get(class).ok_or_else(|| Error::Validation(format!("class index {class} out of range")))?;
    let form = ideal_norm_form(a)?;
    let two_a = 2 * form.a;
    // sqrt(Delta) = c * sqrt(d_K).
    let plus = QuadElem::new(Q::new(-form.b, two_a), Q::new(rcg.conductor, two_a));
    let minus = plus.conj();
    let (_, log_e1) = norm_one_unit(f, u, rcg.conductor)?;
    Ok(GeodesicSet {
        label: rcg.labels[class],
        form,
        endpoints: [plus, minus],
        endpoints_f64: [plus.embeddings(f.sqrt_dk).0, minus.embeddings(f.sqrt_dk).0],
        period: 2.0 * log_e1,
        classes: rcg.labels.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qspace::{lattice_from_level, DEFAULT_MAX_DISC_ORDER};
    use crate::quadorder::{field_from_disc, fundamental_unit, ring_class_group};
    use std::collections::HashSet;

    proptest::proptest! {
        #[test]
        fn lll_transform_is_unimodular_and_consistent(
            a in -40i64..40, b in -40i64..40, c in -40i64..40, skew in 0.0f64..8.0
        ) {
            let base = [vec![1.0 + skew.exp(), 0.3, 0.1], vec![0.3, 2.0, 0.2], vec![0.1, 0.2, 1.5]];
            // Conjugate by a shear so the standard basis is badly reduced.
            let s = [[1i64, a, b], [0, 1, c], [0, 0, 1]];
            let g: Vec<Vec<f64>> = (0..3).map(|i| (0..3).map(|j| {
                let mut acc = 0.0;
                for k in 0..3 { for l in 0..3 { acc += s[k][i] as f64 * base[k][l] * s[l][j] as f64; } }
                acc
            }).collect()).collect();
            let (u, uinv, red) = lll_reduce(&g);
            for i in 0..3 {
                for j in 0..3 {
                    let id: i64 = (0..3).map(|k| u[i][k] * uinv[k][j]).sum();
                    proptest::prop_assert_eq!(id, (i == j) as i64);
                    let mut acc = 0.0;
                    for k in 0..3 { for l in 0..3 { acc += u[k][i] as f64 * g[k][l] * u[l][j] as f64; } }
                    proptest::prop_assert!((acc - red[i][j]).abs() < 1e-6 * (1.0 + acc.abs()));
                }
            }
        }
    }

    #[test]
    fn reduced_enumeration_matches_brute_force() {
        let gram: IMat = vec![vec![2, 1], vec![1, -4]];
        let disc = crate::qspace::discriminant_group(&gram, 100).unwrap();
        let t: f64 = 6.0;
        let maj = vec![vec![2.0 * t.exp(), 9.0 * t.exp()], vec![9.0 * t.exp(), 41.0 * t.exp() + 1e-3 * (-t).exp()]];
        let pts = enumerate_points(&gram, &disc, &maj, 3.0, 1_000_000, None).unwrap();
        let mut brute = 0;
        for mu in &disc.coset_reps {
            let m: Vec<f64> = mu.iter().map(|x| q_to_f64(*x)).collect();
            for i in -3000..3000 {
                for j in -3000..3000 {
                    let x = [m[0] + i as f64, m[1] + j as f64];
                    let v = maj[0][0] * x[0] * x[0] + 2.0 * maj[0][1] * x[0] * x[1] + maj[1][1] * x[1] * x[1];
                    if v <= 9.0 {
                        brute += 1;
                    }
                }
            }
        }
        assert_eq!(pts.len(), brute);
    }

    fn setup(dk: i128) -> (RealQuadraticField, UnitData, RingClassGroup) {
        let f = field_from_disc(dk).unwrap();
        let u = fundamental_unit(&f).unwrap();
        let r = ring_class_group(&f, 1, 1).unwrap();
        (f, u, r)
    }

    /// Orbit counting by brute force: enumerate a box, join elements related
    /// by -1 or eps0^{+-1}, and count connected components per |norm|.
    fn brute_orbits(
        f: &RealQuadraticField,
        u: &UnitData,
        a: &FractionalIdeal,
        m_max: i128,
        bx: i128,
    ) -> BTreeMap<i128, u64> {
        let eps = eps0_elem(f, u);
        let eps_inv = elem_inverse(&eps, f.d_k);
        let mut pts: Vec<QuadElem> = vec![];
        let mut index = std::collections::HashMap::new();
        for x in -bx..=bx {
            for y in -bx..=bx {
                let l = k_elem(a, &[qi(x), qi(y)]);
                let n = (l.norm(f.d_k) / a.norm).abs();
                if n.is_zero() || n > qi(m_max) {
                    continue;
                }
                index.insert(l, pts.len());
                pts.push(l);
            }
        }
        let mut parent: Vec<usize> = (0..pts.len()).collect();
        fn find(p: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while p[r] != r {
                r = p[r];
            }
            p[x] = r;
            r
        }
        for (i, l) in pts.iter().enumerate() {
            for g in [l.scale(qi(-1)), l.mul(&eps, f.d_k), l.mul(&eps_inv, f.d_k)] {
                if let Some(&j) = index.get(&g) {
                    let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                    parent[ri] = rj;
                }
            }
        }
        let mut seen = HashSet::new();
        let mut out = BTreeMap::new();
        for i in 0..pts.len() {
            let r = find(&mut parent, i);
            if seen.insert(r) {
                let n = (pts[i].norm(f.d_k) / a.norm).abs().to_integer();
                *out.entry(n).or_insert(0) += 1;
            }
        }
        out
    }

    #[test]
    fn rep_count_examples() {
        let (f, u, r) = setup(5);
        let t = rep_counts(&f, &u, &r, &r.reps[0], 10).unwrap();
        assert_eq!(t.get(qi(1)), 1);
        assert_eq!(t.get(qi(2)), 0);
        assert_eq!(t.get(qi(3)), 0);
        assert_eq!(t.get(qi(4)), 1);
        assert_eq!(t.get(qi(5)), 1);
    }

    #[test]
    fn rep_counts_match_brute_force_orbits() {
        for dk in [5i128, 8, 12, 13, 40] {
            let (f, u, r) = setup(dk);
            for a in &r.reps {
                let t = rep_counts(&f, &u, &r, a, 30).unwrap();
                let b = brute_orbits(&f, &u, a, 30, 60);
                for m in 1..=30i128 {
                    assert_eq!(t.get(qi(m)), b.get(&m).copied().unwrap_or(0), "dK={dk} m={m}");
                }
            }
        }
    }

    #[test]
    fn coefficient_identity_small() {
        for dk in [5i128, 8, 12, 13, 40, 229] {
            let (f, u, r) = setup(dk);
            let tables: Vec<RepCountTable> = r.reps.iter().map(|a| rep_counts(&f, &u, &r, a, 200).unwrap()).collect();
            for m in 1..=200u64 {
                let s: u64 = tables.iter().map(|t| t.get(qi(m as i128))).sum();
                assert_eq!(s as i64, eta_divisor_sum(&f, m).unwrap(), "dK={dk} m={m}");
            }
        }
    }

    #[test]
    fn hecke_theta_constant_terms() {
        let (f, u, r) = setup(40);
        for chi in r.characters() {
            let th = hecke_theta(&f, &u, &r, &chi, 20, None).unwrap();
            let expect = if chi.is_trivial() { r.order() as f64 } else { 0.0 };
            assert!((th[0].re - expect).abs() < 1e-12 && th[0].im.abs() < 1e-12);
        }
    }

    #[test]
    fn rep_count_cache_roundtrip() {
        let (f, u, r) = setup(13);
        let dir = tempfile::tempdir().unwrap();
        let a = rep_counts_cached(&f, &u, &r, &r.reps[0], 50, Some(dir.path())).unwrap();
        let b = rep_counts_cached(&f, &u, &r, &r.reps[0], 50, Some(dir.path())).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_coset_counts_match_ideal_counts() {
        let (f, u, r) = setup(5);
        let (_, _, l2) = lattice_from_level(&r.reps[0], 1).unwrap();
        let d = dual_and_discriminant(&l2, DEFAULT_MAX_DISC_ORDER).unwrap();
        let t0 = rep_counts_coset(&f, &u, &l2, &d, 0, qi(20)).unwrap();
        // For a = O_K the scaled form on the zero coset is N(lambda) itself.
        assert_eq!(l2.scale, qi(1));
        let direct = rep_counts(&f, &u, &r, &r.reps[0], 20).unwrap();
        for m in 1..=20i128 {
            assert_eq!(t0.get(qi(m)), direct.get(qi(m)), "m={m}");
        }
    }

    #[test]
    fn geodesic_examples() {
        let (f, u, r) = setup(5);
        let g = geodesic_set(&f, &u, &r, 0).unwrap();
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((g.period - 4.0 * phi.ln()).abs() < 1e-12);
        for dk in [5i128, 8, 13, 40, 229] {
            let (f, u, r) = setup(dk);
            for k in 0..r.order() {
                let g = geodesic_set(&f, &u, &r, k).unwrap();
                let (fa, fb, fc) = (qi(g.form.a), qi(g.form.b), qi(g.form.c));
                let s = g.endpoints[0].add(&g.endpoints[1]);
                let p = g.endpoints[0].mul(&g.endpoints[1], f.d_k);
                assert_eq!(s, QuadElem::rational(-fb / fa));
                assert_eq!(p, QuadElem::rational(fc / fa));
            }
        }
        let (f, u, r) = setup(5);
        let g = geodesic_set(&f, &u, &r, 0).unwrap();
        assert_eq!(g.form, Form::new(1, 1, -1));
        let mut e = g.endpoints_f64;
        e.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((e[0] - (-1.0 - 5f64.sqrt()) / 2.0).abs() < 1e-14);
        assert!((e[1] - (-1.0 + 5f64.sqrt()) / 2.0).abs() < 1e-14);
    }

    #[test]
    fn unary_theta_oracle() {
        let gram = vec![vec![2i128]];
        let d = crate::qspace::discriminant_group(&gram, 10).unwrap();
        let tau = C64::new(0.3, 0.7);
        let th = theta_with_majorant(&gram, &d, &[vec![2.0]], tau, &ThetaOptions::default()).unwrap();
        for (i, mu) in d.coset_reps.iter().enumerate() {
            let m0 = q_to_f64(mu[0]);
            let mut s = C64::new(0.0, 0.0);
            for n in -60..=60 {
                let x = m0 + n as f64;
                s += (C64::new(0.0, 2.0 * PI) * tau * x * x).exp();
            }
            assert!((th.values[i] - s).norm() < 1e-13);
        }
    }

    #[test]
    fn theta_11_periodicity_and_limits() {
        let (f, u, r) = setup(5);
        let (_, _, l2) = lattice_from_level(&r.reps[0], 1).unwrap();
        let d = dual_and_discriminant(&l2, DEFAULT_MAX_DISC_ORDER).unwrap();
        let g = geodesic_set(&f, &u, &r, 0).unwrap();
        let perm = unit_permutation(&f, &u, &l2, &d).unwrap();
        let o = ThetaOptions::default();
        let tau = C64::new(0.2, 0.9);
        for t in [0.0, 0.37, 1.1] {
            let a = theta_11(&l2, &d, tau, t, None, &o).unwrap();
            let b = theta_11(&l2, &d, tau, t + g.period, None, &o).unwrap();
            for mu in 0..d.order() {
                assert!((a.values[mu] - b.values[perm[mu]]).norm() < 1e-10);
            }
        }
        let big = theta_11(&l2, &d, C64::new(0.1, 40.0), 0.3, None, &o).unwrap();
        assert!((big.values[0] - 1.0).norm() < 1e-10);
        // Radius refinement.
        let a = theta_11(&l2, &d, tau, 0.5, None, &o).unwrap();
        let o2 = ThetaOptions { radius: Some(2.0 * a.radius), ..o };
        let b = theta_11(&l2, &d, tau, 0.5, None, &o2).unwrap();
        for mu in 0..d.order() {
            assert!((a.values[mu] - b.values[mu]).norm() < 1e-10);
        }
        let o3 = ThetaOptions { radius: Some(0.2), ..o };
        match theta_11(&l2, &d, tau, 0.5, None, &o3) {
            Err(Error::Numeric(msg)) => assert!(msg.contains("required radius")),
            other => panic!("expected truncation error, got {other:?}"),
        }
    }

    #[test]
    fn siegel_theta_22_unit_invariance_and_limit() {
        let (f, u, r) = setup(8);
        let (la, _, _) = lattice_from_level(&r.reps[0], 1).unwrap();
        let d = dual_and_discriminant(&la, DEFAULT_MAX_DISC_ORDER).unwrap();
        let (eps1, _) = norm_one_unit(&f, &u, 1).unwrap();
        let g = diagonal_unit_matrix(&la, &eps1).unwrap();
        let ginv = qinv(&g).unwrap();
        let perm_inv = isometry_permutation(&la, &d, &ginv).unwrap();
        let z = TubePoint::new(C64::new(0.3, 1.1), C64::new(-0.2, 0.8)).unwrap();
        let gz = act_on_tube(&la.ambient.ideal, &g, &z).unwrap();
        let o = ThetaOptions::default();
        let tau = C64::new(0.1, 1.3);
        let a = siegel_theta_22(&la, &d, tau, &z, None, &o).unwrap();
        let b = siegel_theta_22(&la, &d, tau, &gz, None, &o).unwrap();
        for mu in 0..d.order() {
            assert!((b.values[mu] - a.values[perm_inv[mu]]).norm() < 1e-8, "mu={mu}");
        }
        let big = siegel_theta_22(&la, &d, C64::new(0.0, 30.0), &z, None, &o).unwrap();
        assert!((big.values[0] - 1.0).norm() < 1e-10);
    }

    #[test]
    fn tensor_splitting_at_geodesic_points() {
        let (_f, _u, r) = setup(5);
        let a = &r.reps[0];
        let (la, l1, l2) = lattice_from_level(a, 1).unwrap();
        let da = dual_and_discriminant(&la, DEFAULT_MAX_DISC_ORDER).unwrap();
        let d1 = dual_and_discriminant(&l1, DEFAULT_MAX_DISC_ORDER).unwrap();
        let d2 = dual_and_discriminant(&l2, DEFAULT_MAX_DISC_ORDER).unwrap();
        let (t2, t1) = (0.4, -0.7);
        // Negative lines: lambda = (e^{t/2}, -e^{-t/2}) in V2 and (e^{t/2}, e^{-t/2}) in V1.
        let sq = 5f64.sqrt();
        let (al, zl) = (a.alpha.embeddings(sq), a.z.embeddings(sq));
        let solve = |l1: f64, l2: f64| -> [f64; 2] {
            let det = al.0 * zl.1 - zl.0 * al.1;
            [(l1 * zl.1 - l2 * zl.0) / det, (al.0 * l2 - al.1 * l1) / det]
        };
        let n2 = solve((t2 / 2.0f64).exp(), -(-t2 / 2.0f64).exp());
        let n1 = solve((t1 / 2.0f64).exp(), (-t1 / 2.0f64).exp());
        let w = vec![C64::new(n2[0], 0.0), C64::new(n2[1], 0.0), C64::new(0.0, n1[0]), C64::new(0.0, n1[1])];
        let z = tube_point_of_vector(a, &w).unwrap();
        let tau = C64::new(0.15, 0.8);
        let o = ThetaOptions::default();
        let full = siegel_theta_22(&la, &da, tau, &z, None, &o).unwrap();
        let th1 = theta_11(&l1, &d1, tau, t1, None, &o).unwrap();
        let th2 = theta_11(&l2, &d2, tau, t2, None, &o).unwrap();
        for (i, mu) in da.coset_reps.iter().enumerate() {
            let i2 = d2.index_of(&mu[0..2]).unwrap();
            let i1 = d1.index_of(&mu[2..4]).unwrap();
            let prod = th2.values[i2] * th1.values[i1];
            assert!((full.values[i] - prod).norm() < 1e-9, "mu={i}");
        }
    }

    #[test]
    fn genus_translation_is_consistent() {
        let (f, u, r) = setup(40);
        for a in &r.reps {
            let (_, _, l2) = lattice_from_level(a, 1).unwrap();
            let d = dual_and_discriminant(&l2, DEFAULT_MAX_DISC_ORDER).unwrap();
            let tau = C64::new(0.0, 1.0);
            let o = ThetaOptions::default();
            let base = theta_11(&l2, &d, tau, 0.3, None, &o).unwrap();
            let triv = theta_11(&l2, &d, tau, 0.3, Some(&f.order_ideal(1)), &o).unwrap();
            for mu in 0..d.order() {
                assert!((base.values[mu] - triv.values[mu]).norm() < 1e-12);
            }
            let g = geodesic_set(&f, &u, &r, 0).unwrap();
            for b in &r.reps {
                let x = theta_11(&l2, &d, tau, 0.3, Some(b), &o).unwrap();
                assert!(x.values.iter().all(|v| v.is_finite()));
                let y = theta_11(&l2, &d, tau, 0.3 + g.period, Some(b), &o).unwrap();
                let xs: f64 = x.values.iter().map(|v| v.norm()).sum();
                let ys: f64 = y.values.iter().map(|v| v.norm()).sum();
                assert!((xs - ys).abs() < 1e-9, "{xs} {ys}");
            }
        }
    }
}
