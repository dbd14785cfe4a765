//! The Weil representation of `SL_2(Z)` on the group ring of a discriminant
//! group, vector-valued q-expansions, the vector-valued lift of a weight-two
//! newform, the `xi`-operator on coefficients, and restriction of
//! vector-valued forms to sublattices.
use crate::error::{Error, Result};
use crate::linalg::{factorize, inv_mod, q, qi, Q};
use crate::newform::CoeffTable;
use crate::numeric::{e_rat, gamma_upper, max_norm, C64};
use crate::par;
use crate::qspace::{dual_and_discriminant, DiscriminantGroup, LatticeKind, LatticeModel};
use num_integer::Integer;
use num_traits::Zero;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;

/// Largest discriminant group for which dense Weil matrices are built.
pub const MAX_WEIL_DIM: usize = 4096;

/// Dense complex square matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct CMatrix {
    pub n: usize,
    pub data: Vec<C64>,
}

impl CMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![C64::zero(); n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn<F: Fn(usize, usize) -> C64 + Sync>(n: usize, f: F) -> Self {
        let rows: Vec<Vec<C64>> = par::map_range(n, |i| (0..n).map(|j| f(i, j)).collect());
        Self { n, data: rows.into_iter().flatten().collect() }
    }

    pub fn diag(d: &[C64]) -> Self {
        let n = d.len();
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = d[i];
        }
        m
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[i * self.n + j]
    }

    pub fn mul(&self, o: &Self) -> Self {
        let n = self.n;
        let rows: Vec<Vec<C64>> = par::map_range(n, |i| {
            let mut row = vec![C64::zero(); n];
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == C64::zero() {
                    continue;
                }
                let orow = &o.data[k * n..(k + 1) * n];
                for (r, b) in row.iter_mut().zip(orow) {
                    *r += a * b;
                }
            }
            row
        });
        Self { n, data: rows.into_iter().flatten().collect() }
    }

    pub fn mul_vec(&self, v: &[C64]) -> Vec<C64> {
        let n = self.n;
        par::map_range(n, |i| self.data[i * n..(i + 1) * n].iter().zip(v).map(|(a, b)| a * b).sum())
    }

    pub fn adjoint(&self) -> Self {
        let n = self.n;
        Self::from_fn(n, |i, j| self.get(j, i).conj())
    }

    pub fn scale(&self, s: C64) -> Self {
        Self { n: self.n, data: self.data.iter().map(|x| x * s).collect() }
    }

    /// Max-norm of the entrywise difference.
    pub fn max_diff(&self, o: &Self) -> f64 {
        self.data.iter().zip(&o.data).fold(0.0, |m, (a, b)| m.max((a - b).norm()))
    }
}

/// An element of `SL_2(Z)` as `[[a, b], [c, d]]`.
pub type Sl2 = [[i128; 2]; 2];

pub fn sl2_mul(x: &Sl2, y: &Sl2) -> Sl2 {
    [
        [x[0][0] * y[0][0] + x[0][1] * y[1][0], x[0][0] * y[0][1] + x[0][1] * y[1][1]],
        [x[1][0] * y[0][0] + x[1][1] * y[1][0], x[1][0] * y[0][1] + x[1][1] * y[1][1]],
    ]
}

pub const S_MAT: Sl2 = [[0, -1], [1, 0]];

pub fn t_pow(k: i128) -> Sl2 {
    [[1, k], [0, 1]]
}

/// Letters of a word in the generators.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Letter {
    S,
    T(i128),
}

/// Writes `gamma` as a product of letters, read left to right.
pub fn sl2_word(g: &Sl2) -> Result<Vec<Letter>> {
    if g[0][0] * g[1][1] - g[0][1] * g[1][0] != 1 {
        return Err(Error::Validation("matrix is not in SL_2(Z)".into()));
    }
    let mut word = vec![];
    let (mut a, mut b, mut c, mut d) = (g[0][0], g[0][1], g[1][0], g[1][1]);
    // Invariant: g = word * [[a, b], [c, d]].
    while c != 0 {
        let k = Integer::div_floor(&a, &c);
        if k != 0 {
            word.push(Letter::T(k));
        }
        let (a1, b1) = (a - k * c, b - k * d);
        // [[a1, b1], [c, d]] = S * [[c, d], [-a1, -b1]].
        word.push(Letter::S);
        (a, b, c, d) = (c, d, -a1, -b1);
    }
    if a == 1 {
        if b != 0 {
            word.push(Letter::T(b));
        }
    } else {
        // -T^(-b) = S^2 T^(-b).
        debug_assert_eq!(a, -1);
        word.push(Letter::S);
        word.push(Letter::S);
        if b != 0 {
            word.push(Letter::T(-b));
        }
    }
    let _ = d;
    Ok(word)
}

/// The Weil representation attached to a discriminant group.
#[derive(Clone, Debug)]
pub struct WeilRep {
    pub disc: DiscriminantGroup,
    /// `b+ - b-` modulo 8.
    pub sig_mod8: i64,
    /// Diagonal of `rho(T)`.
    pub rho_t: Vec<C64>,
    pub rho_s: CMatrix,
    /// Exact phases of `rho(T)`: `q(mu) = t_num[mu] / t_den`.
    t_num: Vec<i128>,
    t_den: i128,
}

/// Residuals of the defining relations.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct WeilResiduals {
    /// `||(S T)^3 - S^2||`.
    pub st_cubed: f64,
    /// `||S^2 - e(-sig/4) P_{-1}||`.
    pub s_squared: f64,
    /// `max(||S S* - I||, ||T T* - I||)`.
    pub unitarity: f64,
}

impl WeilResiduals {
    pub fn max(&self) -> f64 {
        self.st_cubed.max(self.s_squared).max(self.unitarity)
    }
}

/// Builds `rho(T)` and `rho(S)`:
/// `rho(T) e_mu = e(q(mu)) e_mu`,
/// `rho(S) e_mu = e(-sig/8) |D|^(-1/2) sum_nu e(-(mu, nu)) e_nu`.
pub fn weil_generators(disc: &DiscriminantGroup) -> Result<WeilRep> {
    let n = disc.order();
    if n > MAX_WEIL_DIM {
        return Err(Error::Validation(format!("discriminant group of order {n} is too large for dense Weil matrices")));
    }
    let sig = disc.sig_mod8();
    let t_den = disc.level().max(1);
    let t_num: Vec<i128> = disc.q_values.iter().map(|v| v.numer() * (t_den / v.denom())).collect();
    let rho_t: Vec<C64> = t_num.iter().map(|&k| e_rat(k, t_den)).collect();
    let phase = e_rat(-(sig as i128), 8) / (n as f64).sqrt();
    let rho_s = CMatrix::from_fn(n, |nu, mu| {
        let b = disc.bilinear(mu, nu);
        phase * e_rat(-b.numer(), *b.denom())
    });
    let w = WeilRep { disc: disc.clone(), sig_mod8: sig, rho_t, rho_s, t_num, t_den };
    let r = w.probe_residual();
    if r > 1e-9 {
        return Err(Error::Numeric(format!("Weil relations fail with residual {r:e}; discriminant data inconsistent")));
    }
    Ok(w)
}

/// Weil representation of the discriminant group of a lattice.
pub fn weil_of_lattice(l: &LatticeModel, max_order: usize) -> Result<WeilRep> {
    weil_generators(&dual_and_discriminant(l, max_order)?)
}

impl WeilRep {
    pub fn dim(&self) -> usize {
        self.rho_t.len()
    }

    /// `rho(T)^k v`.
    pub fn apply_t_pow(&self, k: i128, v: &[C64]) -> Vec<C64> {
        v.iter().zip(&self.t_num).map(|(x, &t)| x * e_rat(k * t, self.t_den)).collect()
    }

    pub fn apply_s(&self, v: &[C64]) -> Vec<C64> {
        self.rho_s.mul_vec(v)
    }

    /// `rho(gamma) v`.
    pub fn apply_gamma(&self, g: &Sl2, v: &[C64]) -> Result<Vec<C64>> {
        let word = sl2_word(g)?;
        if self.sig_mod8 % 2 != 0 && word.contains(&Letter::S) {
            return Err(Error::Validation(
                "odd signature: the representation is only defined on the metaplectic cover".into(),
            ));
        }
        let mut out = v.to_vec();
        for l in word.iter().rev() {
            out = match l {
                Letter::S => self.apply_s(&out),
                Letter::T(k) => self.apply_t_pow(*k, &out),
            };
        }
        Ok(out)
    }

    /// `rho(gamma)^-1 v = rho(gamma^-1) v`.
    pub fn apply_gamma_inv(&self, g: &Sl2, v: &[C64]) -> Result<Vec<C64>> {
        let inv = [[g[1][1], -g[0][1]], [-g[1][0], g[0][0]]];
        self.apply_gamma(&inv, v)
    }

    /// The matrix `rho(gamma)`, from a word in `S` and `T`.
    pub fn rho_of_gamma(&self, g: &Sl2) -> Result<CMatrix> {
        let word = sl2_word(g)?;
        if self.sig_mod8 % 2 != 0 && word.contains(&Letter::S) {
            return Err(Error::Validation(
                "odd signature: the representation is only defined on the metaplectic cover".into(),
            ));
        }
        let n = self.dim();
        let mut m = CMatrix::identity(n);
        for l in &word {
            m = match l {
                Letter::S => m.mul(&self.rho_s),
                Letter::T(k) => {
                    let d: Vec<C64> = self.t_num.iter().map(|&t| e_rat(k * t, self.t_den)).collect();
                    CMatrix::from_fn(n, |i, j| m.get(i, j) * d[j])
                }
            };
        }
        Ok(m)
    }

    /// The permutation matrix `e_mu -> e_{-mu}` scaled by `e(-sig/4)`.
    pub fn s_squared_closed_form(&self) -> CMatrix {
        let n = self.dim();
        let ph = e_rat(-self.sig_mod8 as i128, 4);
        let mut m = CMatrix::zeros(n);
        for mu in 0..n {
            let nu = self.disc.neg(mu);
            m.data[nu * n + mu] = ph;
        }
        m
    }

    /// Full dense relation residuals (cubic cost in the dimension).
    pub fn relation_residuals(&self) -> WeilResiduals {
        let n = self.dim();
        let t = CMatrix::diag(&self.rho_t);
        let st = self.rho_s.mul(&t);
        let st3 = st.mul(&st).mul(&st);
        let s2 = self.rho_s.mul(&self.rho_s);
        let id = CMatrix::identity(n);
        let uni_s = self.rho_s.mul(&self.rho_s.adjoint()).max_diff(&id);
        let uni_t = self.rho_t.iter().fold(0.0f64, |m, z| m.max((z.norm() - 1.0).abs()));
        WeilResiduals {
            st_cubed: st3.max_diff(&s2),
            s_squared: s2.max_diff(&self.s_squared_closed_form()),
            unitarity: uni_s.max(uni_t),
        }
    }

    /// Quadratic-cost residual of the relations applied to a few basis vectors.
    pub fn probe_residual(&self) -> f64 {
        let n = self.dim();
        let mut worst: f64 = 0.0;
        let ph = e_rat(-self.sig_mod8 as i128, 4);
        for &k in [0usize, n / 2, n - 1].iter() {
            let mut v = vec![C64::zero(); n];
            v[k] = C64::new(1.0, 0.0);
            let s2 = self.apply_s(&self.apply_s(&v));
            let mut st3 = v.clone();
            for _ in 0..3 {
                st3 = self.apply_s(&self.apply_t_pow(1, &st3));
            }
            let mut closed = vec![C64::zero(); n];
            closed[self.disc.neg(k)] = ph;
            let sv = self.apply_s(&v);
            let norm_err = (sv.iter().map(|z| z.norm_sqr()).sum::<f64>() - 1.0).abs();
            worst = worst
                .max(crate::numeric::max_diff(&s2, &st3))
                .max(crate::numeric::max_diff(&s2, &closed))
                .max(norm_err);
        }
        worst
    }

    /// The dual representation, realized by negating the quadratic form.
    pub fn conjugate(&self) -> Result<WeilRep> {
        let mut d = self.disc.clone();
        d.gram = d.gram.iter().map(|r| r.iter().map(|x| -x).collect()).collect();
        d.signature = (d.signature.1, d.signature.0);
        d.q_values = d
            .q_values
            .iter()
            .map(|v| {
                let w = -*v;
                w - w.floor()
            })
            .collect();
        d.q_values_raw = d.q_values_raw.iter().map(|v| -*v).collect();
        weil_generators(&d)
    }
}

/// A vector-valued q-expansion `sum_mu sum_n c(mu, n/denom) e(n tau/denom) e_mu`.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorQExpansion {
    pub weight: f64,
    pub denom: i64,
    /// `Q(mu) mod 1` of each coset.
    pub q_values: Vec<Q>,
    pub coeffs: BTreeMap<(usize, i64), C64>,
}

#[derive(Serialize, Deserialize)]
struct QExpEntry {
    mu_index: usize,
    n: i64,
    re: f64,
    im: f64,
}

#[derive(Serialize, Deserialize)]
struct QExpFile {
    denom: i64,
    weight: f64,
    entries: Vec<QExpEntry>,
}

impl VectorQExpansion {
    pub fn new(weight: f64, denom: i64, q_values: Vec<Q>) -> Self {
        Self { weight, denom, q_values, coeffs: BTreeMap::new() }
    }

    pub fn dim(&self) -> usize {
        self.q_values.len()
    }

    /// Whether the exponent `n/denom` is congruent to `sign * Q(mu)` modulo 1.
    pub fn exponent_allowed(&self, mu: usize, n: i64, sign: i128) -> bool {
        let x = q(n as i128, self.denom as i128) - qi(sign) * self.q_values[mu];
        x.is_integer()
    }

    /// Adds `c` to the coefficient at `(mu, n)`; exponents outside the
    /// class of `Q(mu)` are rejected.
    pub fn add_coeff(&mut self, mu: usize, n: i64, c: C64) -> Result<()> {
        if !self.exponent_allowed(mu, n, 1) {
            return Err(Error::Validation(format!("exponent {n}/{} not congruent to Q(mu) for mu = {mu}", self.denom)));
        }
        *self.coeffs.entry((mu, n)).or_insert(C64::zero()) += c;
        Ok(())
    }

    pub fn get(&self, mu: usize, n: i64) -> C64 {
        self.coeffs.get(&(mu, n)).copied().unwrap_or_default()
    }

    pub fn max_exponent(&self) -> i64 {
        self.coeffs.keys().map(|k| k.1).max().unwrap_or(0)
    }

    pub fn is_zero(&self, tol: f64) -> bool {
        self.coeffs.values().all(|c| c.norm() <= tol)
    }

    /// Componentwise value at `tau`.
    pub fn eval(&self, tau: C64) -> Vec<C64> {
        let mut out = vec![C64::zero(); self.dim()];
        for (&(mu, n), c) in &self.coeffs {
            let x = tau * (2.0 * PI * n as f64 / self.denom as f64);
            out[mu] += c * (C64::i() * x).exp();
        }
        out
    }

    pub fn linear_combination(&self, a: C64, o: &Self, b: C64) -> Result<Self> {
        if self.denom != o.denom || self.q_values != o.q_values {
            return Err(Error::Validation("incompatible expansions".into()));
        }
        let mut out = self.clone();
        for c in out.coeffs.values_mut() {
            *c *= a;
        }
        for (k, c) in &o.coeffs {
            *out.coeffs.entry(*k).or_insert(C64::zero()) += b * c;
        }
        Ok(out)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let entries: Vec<QExpEntry> =
            self.coeffs.iter().map(|(&(mu, n), c)| QExpEntry { mu_index: mu, n, re: c.re, im: c.im }).collect();
        serde_json::to_value(QExpFile { denom: self.denom, weight: self.weight, entries }).expect("serializable")
    }

    pub fn from_json(v: &serde_json::Value, q_values: Vec<Q>) -> Result<Self> {
        let f: QExpFile = serde_json::from_value(v.clone())?;
        let mut out = Self::new(f.weight, f.denom, q_values);
        for e in f.entries {
            if e.mu_index >= out.dim() {
                return Err(Error::Validation(format!("coset index {} out of range", e.mu_index)));
            }
            out.add_coeff(e.mu_index, e.n, C64::new(e.re, e.im))?;
        }
        Ok(out)
    }
}

/// Reading of the multiplicity factor in the displayed lift formula, or the
/// induced lift.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LiftConvention {
    /// `F = sum over Gamma_0(N) \ SL_2(Z) of (f|gamma) rho(gamma)^-1 e_0`,
    /// normalized by `N / w_N`.
    Induced,
    /// Displayed formula with `s(m) = 2^(number of primes dividing gcd(m, N))`.
    PrimeDivisors,
    /// Displayed formula with `s(m) = 2^(number of divisors of gcd(m, N))`.
    AllDivisors,
}

impl LiftConvention {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "induced" => Ok(Self::Induced),
            "prime-divisors" => Ok(Self::PrimeDivisors),
            "all-divisors" => Ok(Self::AllDivisors),
            _ => Err(Error::Config(format!("unknown lift convention `{s}`"))),
        }
    }
}

/// Level attached to a lattice for the lift.
pub fn lattice_level(l: &LatticeModel, disc: &DiscriminantGroup) -> i128 {
    match l.kind {
        LatticeKind::IdealSum { level } | LatticeKind::IdealSummand { level } | LatticeKind::Eichler { level } => level,
        LatticeKind::Custom => disc.level(),
    }
}

/// Atkin-Lehner eigenvalue `w_Q = prod_{p | Q} (-a_p)` for squarefree `N`.
pub fn atkin_lehner_sign(t: &CoeffTable, qd: i128) -> Result<i64> {
    let mut w = 1i64;
    for (p, _) in factorize(qd as u64) {
        if p as usize > t.len() {
            return Err(Error::Validation(format!("coefficient table lacks c({p})")));
        }
        w *= -t.c(p as usize);
    }
    Ok(w)
}

/// `gamma_Q = [[1, y], [Q' , Q w]]` with `Q w - Q' y = 1`, so that
/// `gamma_Q diag(Q, 1)` is an Atkin-Lehner matrix for the divisor `Q` of `N`.
pub fn atkin_lehner_coset(n: i128, qd: i128) -> Sl2 {
    let qp = n / qd;
    // Q w = 1 + Q' y.
    let w = inv_mod(qd.rem_euclid(qp.max(1)), qp.max(1)).unwrap_or(0);
    let w = if qp == 1 { 0 } else { w };
    let y = (qd * w - 1) / qp;
    let g = [[1, y], [qp, qd * w]];
    debug_assert_eq!(g[0][0] * g[1][1] - g[0][1] * g[1][0], 1);
    g
}

/// Lift of a weight-two newform of squarefree level `N` to a vector-valued
/// form for the discriminant group of `l`, truncated at exponents `n/N`
/// with `n <= T.len()`.
pub fn lift_newform(
    t: &CoeffTable,
    l: &LatticeModel,
    weil: &WeilRep,
    conv: LiftConvention,
) -> Result<VectorQExpansion> {
    let disc = &weil.disc;
    let n = lattice_level(l, disc);
    if factorize(n as u64).iter().any(|&(_, e)| e > 1) {
        return Err(Error::Validation(format!("level {n} is not squarefree")));
    }
    let mut out = VectorQExpansion::new(2.0, n as i64, disc.q_values.clone());
    let m_max = t.len();
    match conv {
        LiftConvention::PrimeDivisors | LiftConvention::AllDivisors => {
            for mu in 0..disc.order() {
                let nq = qi(n) * disc.q_values[mu];
                if !nq.is_integer() {
                    return Err(Error::Validation(format!(
                        "scaling mismatch: N Q(mu) = {nq} is not integral for mu = {mu}"
                    )));
                }
                let r = nq.to_integer().rem_euclid(n);
                let mut m = if r == 0 { n } else { r };
                while m as usize <= m_max {
                    let g = m.gcd(&n);
                    let k = match conv {
                        LiftConvention::PrimeDivisors => factorize(g as u64).len() as u32,
                        _ => crate::linalg::divisors(g as u64).len() as u32,
                    };
                    let c = t.c(m as usize) as f64 * 2f64.powi(k as i32);
                    out.add_coeff(mu, m as i64, C64::new(c, 0.0))?;
                    m += n;
                }
            }
        }
        LiftConvention::Induced => {
            let w_n = atkin_lehner_sign(t, n)?;
            let dim = disc.order();
            let mut e0 = vec![C64::zero(); dim];
            e0[0] = C64::new(1.0, 0.0);
            for qd in crate::linalg::divisors(n as u64) {
                let qd = qd as i128;
                let qp = n / qd;
                let w_q = atkin_lehner_sign(t, qd)? as f64;
                let v = weil.apply_gamma_inv(&atkin_lehner_coset(n, qd), &e0)?;
                // Sum over j mod Q of e(j (m/Q - Q(nu))) v[nu] (w_Q/Q) c(m) e(m tau/Q).
                for (nu, &vn) in v.iter().enumerate() {
                    if vn.norm() < 1e-14 {
                        continue;
                    }
                    let qn = disc.q_values[nu];
                    for m in 1..=(m_max as i128 / qp) {
                        let frac = q(m, qd) - qn;
                        let geo = if frac.is_integer() {
                            C64::new(qd as f64, 0.0)
                        } else if (frac * qi(qd)).is_integer() {
                            continue;
                        } else {
                            return Err(Error::Numeric(format!(
                                "coset vector has support off the exponent lattice at nu = {nu}"
                            )));
                        };
                        let c = t.c(m as usize) as f64;
                        if c == 0.0 {
                            continue;
                        }
                        let coeff = vn * geo * (w_q / qd as f64) * c * (n as f64 / w_n as f64);
                        out.add_coeff(nu, (m * qp) as i64, coeff)?;
                    }
                }
            }
            out.coeffs.retain(|_, c| c.norm() > 1e-12);
        }
    }
    Ok(out)
}

/// Closed form of the normalized induced lift on the Eichler lattice:
/// the coefficient at `(mu, n)` with `n = N Q(mu) mod N` is
/// `c(n) prod_{p | gcd(n, N), p not dividing ord(mu)} (1 - p)`.
pub fn induced_lift_closed_form(t: &CoeffTable, disc: &DiscriminantGroup, n: i128) -> Result<VectorQExpansion> {
    let mut out = VectorQExpansion::new(2.0, n as i64, disc.q_values.clone());
    for mu in 0..disc.order() {
        let nq = qi(n) * disc.q_values[mu];
        if !nq.is_integer() {
            return Err(Error::Validation("scaling mismatch".into()));
        }
        let order_mu = element_order(disc, mu);
        let r = nq.to_integer().rem_euclid(n);
        let mut m = if r == 0 { n } else { r };
        while m as usize <= t.len() {
            let g = m.gcd(&n);
            let mut f = t.c(m as usize) as f64;
            for (p, _) in factorize(g as u64) {
                if order_mu % p as i128 != 0 {
                    f *= 1.0 - p as f64;
                }
            }
            if f != 0.0 {
                out.add_coeff(mu, m as i64, C64::new(f, 0.0))?;
            }
            m += n;
        }
    }
    Ok(out)
}

fn element_order(disc: &DiscriminantGroup, mu: usize) -> i128 {
    disc.digits(mu).iter().zip(&disc.invariant_factors).fold(1i128, |acc, (t, d)| acc.lcm(&(d / t.gcd(d))))
}

/// Bound on the tail `sum_{n > M} |c(mu, n/N)| e^(-2 pi n v / N)` assuming
/// `|c(mu, n/N)| <= amp * 2 n` (from `|c_f(m)| <= d(m) sqrt m <= 2m`).
pub fn lift_tail_bound(m_max: usize, denom: i64, v: f64, amp: f64) -> f64 {
    let a = 2.0 * PI * v / denom as f64;
    let m = m_max as f64;
    2.0 * amp * (-a * m).exp() * (m / a + 1.0 / (a * a) + 1.0 / a)
}

/// Relative residual of `g(-1/tau) tau^(-k) = rho(S) g(tau)`.
pub fn s_transformation_residual(g: &VectorQExpansion, w: &WeilRep, tau: C64) -> f64 {
    let lhs: Vec<C64> = g.eval(-tau.inv()).into_iter().map(|x| x * tau.powf(-g.weight)).collect();
    let rhs = w.apply_s(&g.eval(tau));
    let scale = max_norm(&rhs).max(max_norm(&lhs)).max(1e-300);
    crate::numeric::max_diff(&lhs, &rhs) / scale
}

/// A harmonic weak Maass form given by its holomorphic part and finitely
/// many coefficients of its non-holomorphic part.
#[derive(Clone, Debug)]
pub struct HarmonicMaassInput {
    /// Weight `l`.
    pub weight: f64,
    pub plus: VectorQExpansion,
    /// `(mu, n, c)` with `n < 0`: the term `c Gamma(1 - l, 4 pi |n/denom| v) e(n tau/denom)`.
    pub minus: Vec<(usize, i64, C64)>,
}

impl HarmonicMaassInput {
    pub fn new(plus: VectorQExpansion, minus: Vec<(usize, i64, C64)>) -> Result<Self> {
        for &(mu, n, _) in &minus {
            if n >= 0 {
                return Err(Error::Validation("non-holomorphic exponents must be negative".into()));
            }
            if !plus.exponent_allowed(mu, n, 1) {
                return Err(Error::Validation(format!(
                    "non-holomorphic exponent {n} not congruent to Q(mu) for mu = {mu}"
                )));
            }
        }
        Ok(Self { weight: plus.weight, plus, minus })
    }

    /// Reads the q-expansion file format extended by a `minus` array of
    /// entries `{mu_index, n, re, im}` (absent means holomorphic).
    pub fn from_json(v: &serde_json::Value, q_values: Vec<Q>) -> Result<Self> {
        let plus = VectorQExpansion::from_json(v, q_values)?;
        let minus = match v.get("minus") {
            None | Some(serde_json::Value::Null) => vec![],
            Some(m) => {
                let e: Vec<QExpEntry> = serde_json::from_value(m.clone())?;
                e.into_iter().map(|e| (e.mu_index, e.n, C64::new(e.re, e.im))).collect()
            }
        };
        Self::new(plus, minus)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut v = self.plus.to_json();
        let minus: Vec<QExpEntry> =
            self.minus.iter().map(|&(mu, n, c)| QExpEntry { mu_index: mu, n, re: c.re, im: c.im }).collect();
        v["minus"] = serde_json::to_value(minus).expect("serializable");
        v
    }

    /// Value at `tau`.
    pub fn eval(&self, tau: C64) -> Vec<C64> {
        let mut out = self.plus.eval(tau);
        let v = tau.im;
        for &(mu, n, c) in &self.minus {
            let m = n as f64 / self.plus.denom as f64;
            let w = gamma_upper(1.0 - self.weight, 4.0 * PI * m.abs() * v);
            out[mu] += c * w * (C64::new(0.0, 2.0 * PI * m) * tau).exp();
        }
        out
    }
}

/// `xi_l` on coefficients: `b(mu, n) = -(4 pi n)^(1-l) conj(c^-(mu, -n))`.
/// The result transforms with the dual representation, so its exponents
/// satisfy `n/denom = -Q(mu) mod 1`; they are stored with `q_values` negated.
pub fn xi_image(h: &HarmonicMaassInput) -> VectorQExpansion {
    let l = h.weight;
    let neg_q: Vec<Q> = h
        .plus
        .q_values
        .iter()
        .map(|v| {
            let w = -*v;
            w - w.floor()
        })
        .collect();
    let mut out = VectorQExpansion::new(2.0 - l, h.plus.denom, neg_q);
    for &(mu, n, c) in &h.minus {
        let m = (-n) as f64 / h.plus.denom as f64;
        let b = -(4.0 * PI * m).powf(1.0 - l) * c.conj();
        // The exponent class was validated at construction.
        out.add_coeff(mu, -n, b).expect("validated exponent");
    }
    out
}

/// Numerical `xi_l f = 2 i v^l conj(d f / d tau-bar)` by central differences
/// in `u` and `v` with Richardson extrapolation.
pub fn xi_numeric(h: &HarmonicMaassInput, tau: C64, step: f64) -> Vec<C64> {
    let du = crate::numeric::richardson_derivative_vec(|u| h.eval(C64::new(u, tau.im)), tau.re, step);
    let dv = crate::numeric::richardson_derivative_vec(|v| h.eval(C64::new(tau.re, v)), tau.im, step);
    let vl = tau.im.powf(h.weight);
    du.value
        .iter()
        .zip(&dv.value)
        .map(|(a, b)| {
            let dbar = (a + C64::new(0.0, 1.0) * b) * 0.5;
            C64::new(0.0, 2.0) * vl * dbar.conj()
        })
        .collect()
}

/// Largest relative discrepancy between [`xi_image`] and [`xi_numeric`] on
/// the given points. Used as a start-up self-test of the closed form.
pub fn xi_validation_residual(h: &HarmonicMaassInput, taus: &[C64]) -> f64 {
    let img = xi_image(h);
    let mut worst: f64 = 0.0;
    for &tau in taus {
        let a = img.eval(tau);
        let b = xi_numeric(h, tau, 1e-3);
        let scale = max_norm(&a).max(max_norm(&b)).max(1e-300);
        worst = worst.max(crate::numeric::max_diff(&a, &b) / scale);
    }
    worst
}

/// Checks the closed form of `xi` against the differential operator on a
/// single seed and returns an error on mismatch.
pub fn xi_self_test() -> Result<f64> {
    let q_values = vec![qi(0), q(1, 2)];
    let plus = VectorQExpansion::new(0.0, 2, q_values);
    let h = HarmonicMaassInput::new(plus, vec![(1, -1, C64::new(0.7, -0.2)), (0, -2, C64::new(0.3, 0.1))])?;
    let r = xi_validation_residual(&h, &[C64::new(0.1, 0.9), C64::new(-0.3, 1.2)]);
    if r > 1e-6 {
        return Err(Error::Numeric(format!("xi closed form disagrees with the operator: {r:e}")));
    }
    Ok(r)
}

/// Pullback of a vector-valued form on `L` to a finite-index sublattice `M`
/// (same ambient space, compared under the scale of `L`).
pub fn restrict_to_sublattice(
    f: &VectorQExpansion,
    l: &LatticeModel,
    m: &LatticeModel,
    max_order: usize,
) -> Result<VectorQExpansion> {
    let dl = dual_and_discriminant(l, max_order)?;
    if dl.q_values != f.q_values {
        return Err(Error::Validation("expansion does not live on L".into()));
    }
    let ms = m.rescaled(l.scale)?;
    let dm = dual_and_discriminant(&ms, max_order)?;
    // Express M's basis in L's basis: B_M = C B_L with C integral.
    let bl_inv = crate::linalg::qinv(&l.basis).ok_or_else(|| Error::Validation("lattice basis is singular".into()))?;
    let c = crate::linalg::qmat_mul(&ms.basis, &bl_inv);
    if c.iter().flatten().any(|x| !x.is_integer()) {
        return Err(Error::Validation("M is not contained in L".into()));
    }
    let mut out = VectorQExpansion::new(f.weight, f.denom, dm.q_values.clone());
    // Component of mu in M^dual/M: x (M coordinates) maps to y = C^T x (L coordinates).
    let mut image: Vec<Option<usize>> = vec![None; dm.order()];
    for (i, x) in dm.coset_reps.iter().enumerate() {
        let y: Vec<Q> = (0..l.rank()).map(|j| (0..ms.rank()).fold(Q::zero(), |acc, k| acc + c[k][j] * x[k])).collect();
        image[i] = dl.index_of(&y).ok();
    }
    for (i, img) in image.iter().enumerate() {
        if let Some(j) = img {
            for (&(mu, n), c) in f.coeffs.range((*j, i64::MIN)..=(*j, i64::MAX)) {
                debug_assert_eq!(mu, *j);
                out.add_coeff(i, n, *c)?;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::IMat;
    use crate::qspace::{discriminant_group, eichler_lattice, lattice_from_level, DEFAULT_MAX_DISC_ORDER};
    use crate::quadorder::{field_from_disc, ring_class_group};
    use rand::{Rng, SeedableRng};

    fn disc(g: IMat) -> DiscriminantGroup {
        discriminant_group(&g, 10_000).unwrap()
    }

    #[test]
    fn small_examples() {
        let w = weil_generators(&disc(vec![vec![0, 1], vec![1, 0]])).unwrap();
        assert_eq!(w.dim(), 1);
        assert!((w.rho_s.get(0, 0) - C64::new(1.0, 0.0)).norm() < 1e-15);
        let w = weil_generators(&disc(vec![vec![2]])).unwrap();
        assert!((w.rho_t[1] - C64::new(0.0, 1.0)).norm() < 1e-15);
        assert!(w.relation_residuals().max() < 1e-12);
    }

    #[test]
    fn relations_for_field_lattices() {
        for (dk, n) in [(5i128, 37i128), (8, 11), (5, 14)] {
            let f = field_from_disc(dk).unwrap();
            let g = ring_class_group(&f, 1, n).unwrap();
            for a in &g.reps {
                let (l, l1, l2) = lattice_from_level(a, n).unwrap();
                for lat in [l, l1, l2, eichler_lattice(a, n).unwrap()] {
                    let d = dual_and_discriminant(&lat, DEFAULT_MAX_DISC_ORDER).unwrap();
                    if d.order() > 400 {
                        continue;
                    }
                    let w = weil_generators(&d).unwrap();
                    assert!(w.relation_residuals().max() < 1e-12, "{dk} {n}");
                }
            }
        }
    }

    #[test]
    fn words_reproduce_matrices() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let g = random_sl2(&mut rng);
            let word = sl2_word(&g).unwrap();
            let mut m: Sl2 = [[1, 0], [0, 1]];
            for l in &word {
                m = sl2_mul(
                    &m,
                    &match l {
                        Letter::S => S_MAT,
                        Letter::T(k) => t_pow(*k),
                    },
                );
            }
            assert_eq!(m, g);
        }
    }

    fn random_sl2(rng: &mut impl Rng) -> Sl2 {
        loop {
            let a: i128 = rng.gen_range(-30..=30);
            let c: i128 = rng.gen_range(-30..=30);
            if a.gcd(&c) != 1 {
                continue;
            }
            let e = a.extended_gcd(&c);
            // a x + c y = 1 -> [[a, -y], [c, x]].
            let (x, y) = (e.x, e.y);
            let k: i128 = rng.gen_range(-5..=5);
            let g = [[a, -y + k * a], [c, x + k * c]];
            assert_eq!(g[0][0] * g[1][1] - g[0][1] * g[1][0], 1);
            return g;
        }
    }

    #[test]
    fn rho_is_a_homomorphism() {
        let f = field_from_disc(5).unwrap();
        let a = &ring_class_group(&f, 1, 1).unwrap().reps[0];
        let (l, _, _) = lattice_from_level(a, 1).unwrap();
        let w = weil_of_lattice(&l, 1000).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let g1 = random_sl2(&mut rng);
            let g2 = random_sl2(&mut rng);
            let lhs = w.rho_of_gamma(&sl2_mul(&g1, &g2)).unwrap();
            let rhs = w.rho_of_gamma(&g1).unwrap().mul(&w.rho_of_gamma(&g2).unwrap());
            assert!(lhs.max_diff(&rhs) < 1e-10);
        }
        let minus = w.rho_of_gamma(&[[-1, 0], [0, -1]]).unwrap();
        assert!(minus.max_diff(&w.s_squared_closed_form()) < 1e-12);
        let t5 = w.rho_of_gamma(&t_pow(5)).unwrap();
        let d: Vec<C64> = w.rho_t.iter().map(|z| z.powi(5)).collect();
        assert!(t5.max_diff(&CMatrix::diag(&d)) < 1e-12);
        assert!(w.rho_of_gamma(&[[1, 0], [0, 1]]).unwrap().max_diff(&CMatrix::identity(w.dim())) < 1e-15);
    }

    #[test]
    fn e0_is_gamma0_invariant_on_eichler() {
        let f = field_from_disc(5).unwrap();
        let a = &ring_class_group(&f, 1, 14).unwrap().reps[0];
        let l = eichler_lattice(a, 14).unwrap();
        let w = weil_of_lattice(&l, 1000).unwrap();
        let mut e0 = vec![C64::zero(); w.dim()];
        e0[0] = C64::new(1.0, 0.0);
        for g in [[[1, 0], [14, 1]], [[3, 1], [14, 5]], [[-1, 0], [0, -1]], [[1, 3], [0, 1]]] {
            let v = w.apply_gamma(&g, &e0).unwrap();
            assert!(crate::numeric::max_diff(&v, &e0) < 1e-12);
        }
    }

    #[test]
    fn xi_examples() {
        xi_self_test().unwrap();
        let q_values = vec![qi(0), q(1, 2)];
        let plus = VectorQExpansion::new(0.0, 2, q_values.clone());
        let h = HarmonicMaassInput::new(plus.clone(), vec![(1, -1, C64::new(1.0, 0.0))]).unwrap();
        let img = xi_image(&h);
        assert_eq!(img.coeffs.len(), 1);
        let b = img.get(1, 1);
        assert!((b.norm() - 4.0 * PI * 0.5).abs() < 1e-12);
        let zero = HarmonicMaassInput::new(plus, vec![]).unwrap();
        assert!(xi_image(&zero).is_zero(0.0));
    }

    #[test]
    fn harmonic_input_json_roundtrip() {
        let q = vec![Q::from_integer(0), Q::new(1, 2)];
        let mut p = VectorQExpansion::new(0.0, 2, q.clone());
        p.add_coeff(0, -2, C64::new(1.0, 0.0)).unwrap();
        p.add_coeff(1, 1, C64::new(0.5, -0.25)).unwrap();
        let h = HarmonicMaassInput::new(p, vec![(0, -2, C64::new(0.0, 3.0))]).unwrap();
        let back = HarmonicMaassInput::from_json(&h.to_json(), q.clone()).unwrap();
        assert_eq!(back.plus.coeffs, h.plus.coeffs);
        assert_eq!(back.minus, h.minus);
        let mut v = h.to_json();
        v.as_object_mut().unwrap().remove("minus");
        assert!(HarmonicMaassInput::from_json(&v, q).unwrap().minus.is_empty());
    }

    #[test]
    fn qexp_json_roundtrip() {
        let mut f = VectorQExpansion::new(2.0, 3, vec![qi(0), q(1, 3), q(1, 3)]);
        f.add_coeff(1, 1, C64::new(1.5, -2.0)).unwrap();
        f.add_coeff(0, 3, C64::new(0.25, 0.0)).unwrap();
        assert!(f.add_coeff(0, 1, C64::new(1.0, 0.0)).is_err());
        let back = VectorQExpansion::from_json(&f.to_json(), f.q_values.clone()).unwrap();
        assert_eq!(back, f);
    }

    fn eichler_setup(dk: i128, n: i128) -> (LatticeModel, WeilRep) {
        let f = field_from_disc(dk).unwrap();
        let a = &ring_class_group(&f, 1, n).unwrap().reps[0];
        let l = eichler_lattice(a, n).unwrap();
        let w = weil_of_lattice(&l, DEFAULT_MAX_DISC_ORDER).unwrap();
        (l, w)
    }

    #[test]
    fn induced_lift_matches_closed_form_and_is_modular() {
        use crate::newform::{coefficients_from_curve, CurveSpec};
        for (curve, dk) in [(CurveSpec::curve_11a(), 8i128), (CurveSpec::curve_37a(), 5)] {
            let n = curve.conductor as i128;
            let t = coefficients_from_curve(&curve, 40 * n as usize).unwrap();
            let (l, w) = eichler_setup(dk, n);
            let g = lift_newform(&t, &l, &w, LiftConvention::Induced).unwrap();
            let closed = induced_lift_closed_form(&t, &w.disc, n).unwrap();
            let keys: Vec<_> = g.coeffs.keys().chain(closed.coeffs.keys()).copied().collect();
            for k in keys {
                let d = (g.get(k.0, k.1) - closed.get(k.0, k.1)).norm();
                assert!(d < 1e-8, "{} {:?}: {} vs {}", curve.label, k, g.get(k.0, k.1), closed.get(k.0, k.1));
            }
            for tau in [C64::new(0.1, 1.0), C64::new(-0.3, 0.95)] {
                let r = s_transformation_residual(&g, &w, tau);
                assert!(r < 1e-6, "{} residual {r}", curve.label);
            }
            let lit = lift_newform(&t, &l, &w, LiftConvention::PrimeDivisors).unwrap();
            assert!(s_transformation_residual(&lit, &w, C64::new(0.1, 1.0)) > 1e-3);
        }
    }

    #[test]
    fn literal_lift_rejects_ideal_lattice_scaling() {
        use crate::newform::{coefficients_from_curve, CurveSpec};
        let t = coefficients_from_curve(&CurveSpec::curve_37a(), 200).unwrap();
        let f = field_from_disc(5).unwrap();
        let a = &ring_class_group(&f, 1, 37).unwrap().reps[0];
        let (l, _, _) = lattice_from_level(a, 37).unwrap();
        let w = weil_of_lattice(&l, 1000).unwrap();
        assert!(lift_newform(&t, &l, &w, LiftConvention::PrimeDivisors).is_err());
    }

    /// Theta series of a positive definite lattice, component-wise, by
    /// enumerating dual vectors in a box.
    fn definite_theta(l: &LatticeModel, d: &DiscriminantGroup, tau: C64, r: i128) -> Vec<C64> {
        let g = l.scaled_gram();
        let mut out = vec![C64::zero(); d.order()];
        for (mu, rep) in d.coset_reps.iter().enumerate() {
            for i in -r..=r {
                for j in -r..=r {
                    let x = [rep[0] + qi(i), rep[1] + qi(j)];
                    let mut qv = Q::zero();
                    for a in 0..2 {
                        for b in 0..2 {
                            qv += x[a] * qi(g[a][b]) * x[b];
                        }
                    }
                    let qf = crate::quadorder::q_to_f64(qv / qi(2));
                    out[mu] += (C64::i() * 2.0 * PI * qf * tau).exp();
                }
            }
        }
        out
    }

    #[test]
    fn restriction_preserves_theta_pairing() {
        use crate::qspace::{build_space, LatticeKind, Variant};
        let f = field_from_disc(5).unwrap();
        let a = &ring_class_group(&f, 1, 1).unwrap().reps[0];
        let amb = build_space(a, Variant::V2).unwrap();
        // A positive definite lattice needs a definite ambient form; replace the Gram.
        let mut amb = amb;
        amb.gram = vec![vec![qi(2), qi(1)], vec![qi(1), qi(2)]];
        let l =
            LatticeModel::new(amb.clone(), vec![vec![qi(1), qi(0)], vec![qi(0), qi(1)]], LatticeKind::Custom).unwrap();
        let m = LatticeModel::new(amb, vec![vec![qi(2), qi(0)], vec![qi(1), qi(3)]], LatticeKind::Custom).unwrap();
        let dl = dual_and_discriminant(&l, 1000).unwrap();
        let mut fl = VectorQExpansion::new(1.0, 3, dl.q_values.clone());
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for mu in 0..dl.order() {
            for k in 0..6i64 {
                let n = (dl.q_values[mu] * qi(3)).to_integer() as i64 + 3 * k;
                fl.add_coeff(mu, n, C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).unwrap();
            }
        }
        let fm = restrict_to_sublattice(&fl, &l, &m, 1000).unwrap();
        let ms = m.rescaled(l.scale).unwrap();
        let dm = dual_and_discriminant(&ms, 1000).unwrap();
        for tau in
            [C64::new(0.1, 0.8), C64::new(-0.4, 1.1), C64::new(0.3, 0.7), C64::new(0.0, 1.0), C64::new(0.45, 0.9)]
        {
            let tl = definite_theta(&l, &dl, tau, 12);
            let tm = definite_theta(&ms, &dm, tau, 12);
            let pl: C64 = fl.eval(tau).iter().zip(&tl).map(|(a, b)| a * b.conj()).sum();
            let pm: C64 = fm.eval(tau).iter().zip(&tm).map(|(a, b)| a * b.conj()).sum();
            assert!((pl - pm).norm() < 1e-8 * pl.norm().max(1.0), "{pl} {pm}");
        }
        let same = restrict_to_sublattice(&fl, &l, &l, 1000).unwrap();
        assert_eq!(same.coeffs, fl.coeffs);
    }
}
