//! Dirichlet L-values and the class number formula, Rankin–Selberg
//! coefficients of a newform against ring class theta series, and completed
//! L-functions evaluated by a smoothed approximate functional equation.
//!
//! Every L-series here is in analytic normalization (center `1/2`):
//! `Lambda(s) = Q^(s/2) prod_j Gamma_C(s + kappa_j) L(s)` with
//! `Gamma_C(s) = 2 (2 pi)^-s Gamma(s)`, and `Lambda(s) = sign Lambda(1 - s)`.
//! With `phi` the inverse Mellin transform of the gamma factor,
//! `Lambda(s) = sum_m b(m) [A^s F(s, A m / sqrt Q) + sign A^(s-1) F(1 - s, m / (A sqrt Q))]`
//! for every split point `A > 0`, where `F(s, y) = int_1^infty phi(y t) t^s dt / t`.
//! Agreement across split points is the functional-equation test.
use crate::dirichlet::kronecker_l_value;
use crate::error::{Error, Result};
use crate::linalg::{factorize, primes_up_to};
use crate::newform::{coefficients, level_split, twist_coefficients, CoeffTable, CurveSpec};
use crate::numeric::{bessel_k, exp_int_e1, gauss_legendre_ab, KSum, C64};
use crate::par::map_range;
use crate::quadorder::{kronecker, RealQuadraticField, RingClassGroup, UnitData};
use crate::theta::partial_theta;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::Path;

/// `phi(y)` is treated as zero once its exponential argument exceeds this.
const KERNEL_CUTOFF: f64 = 52.0;

/// Split point used for the functional-equation residual.
pub const FE_SPLIT: f64 = 1.2;

/// `L(s, eta)` for the quadratic character of `K` (Hurwitz-zeta sum over one period).
pub fn dirichlet_l(f: &RealQuadraticField, s: C64) -> Result<C64> {
    kronecker_l_value(f.d_k, s)
}

/// Class number formula data: `L(1, eta)`, the class number it predicts and
/// the relative residual against `2 h log(eps0) / sqrt(d_K)`.
#[derive(Clone, Debug, Serialize)]
pub struct ClassNumberCheck {
    pub d_k: i128,
    pub l1: f64,
    pub predicted_h: f64,
    pub h: usize,
    pub residual: f64,
    /// `L(1, eta) sqrt(d_K) / (2 log eps_K)` with the Pell-4 unit `eps_K`.
    pub predicted_with_eps_k: f64,
}

pub fn class_number_check(f: &RealQuadraticField, u: &UnitData, h: usize) -> Result<ClassNumberCheck> {
    let l1 = dirichlet_l(f, C64::new(1.0, 0.0))?.re;
    let sd = (f.d_k as f64).sqrt();
    let rhs = 2.0 * h as f64 * u.eps0_log / sd;
    Ok(ClassNumberCheck {
        d_k: f.d_k,
        l1,
        predicted_h: l1 * sd / (2.0 * u.eps0_log),
        h,
        residual: (l1 - rhs).abs() / l1,
        predicted_with_eps_k: l1 * sd / (2.0 * u.eps_k_log),
    })
}

/// `|L(1, eta) - 2 h log eps0 / sqrt d_K| / L(1, eta)`.
pub fn class_number_residual(f: &RealQuadraticField, u: &UnitData, h: usize) -> Result<f64> {
    Ok(class_number_check(f, u, h)?.residual)
}

/// Gamma factor `prod_j Gamma_C(s + kappa_j)` of degree one or two.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaFactor {
    pub shifts: Vec<f64>,
}

impl GammaFactor {
    pub fn new(shifts: Vec<f64>) -> Result<Self> {
        if shifts.is_empty() || shifts.len() > 2 {
            return Err(Error::Validation("gamma factors of degree one or two (in Gamma_C) are supported".into()));
        }
        Ok(Self { shifts })
    }

    /// Inverse Mellin transform `phi(y)` with `int_0^infty phi(y) y^s dy/y = prod Gamma_C(s + kappa)`.
    pub fn phi(&self, y: f64) -> f64 {
        match self.shifts.as_slice() {
            [k] => 2.0 * y.powf(*k) * (-2.0 * PI * y).exp(),
            [a, b] => {
                let z = 4.0 * PI * y.sqrt();
                if z > 2.0 * KERNEL_CUTOFF {
                    return 0.0;
                }
                8.0 * y.powf((a + b) / 2.0) * bessel_k(a - b, z)
            }
            _ => unreachable!(),
        }
    }

    /// Height beyond which `phi` is negligible.
    fn y_cut(&self) -> f64 {
        match self.shifts.len() {
            1 => KERNEL_CUTOFF / (2.0 * PI),
            _ => (KERNEL_CUTOFF / (4.0 * PI)).powi(2),
        }
    }

    /// `prod Gamma_C(s + kappa)`.
    pub fn value(&self, s: f64) -> f64 {
        self.shifts.iter().map(|k| 2.0 * (2.0 * PI).powf(-(s + k)) * crate::numeric::gamma(s + k)).product()
    }
}

/// Values `F(s, y)` and `dF/ds(s, y)` at increasing heights.
///
/// Uses `F(s, y) = y^-s G(s, y)` with `G(s, y) = int_y^infty phi(w) w^(s-1) dw`
/// accumulated from the top, so every interval is integrated once.
pub fn kernel_values(g: &GammaFactor, s: f64, ys: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = ys.len();
    debug_assert!(ys.windows(2).all(|w| w[0] < w[1]));
    let (xg, wg) = gauss_legendre_ab(12, 0.0, 1.0);
    // Integrate phi(e^x) e^{s x} (and times x) over [a, b] in x = log w.
    let piece = |a: f64, b: f64| -> (f64, f64) {
        let steps = ((b - a) / 0.5).ceil().max(1.0) as usize;
        let h = (b - a) / steps as f64;
        let (mut i0, mut i1) = (KSum::new(), KSum::new());
        for k in 0..steps {
            let lo = a + k as f64 * h;
            for (x, w) in xg.iter().zip(&wg) {
                let t = lo + h * x;
                let v = g.phi(t.exp()) * (s * t).exp() * w * h;
                i0.add(v);
                i1.add(v * t);
            }
        }
        (i0.value(), i1.value())
    };
    let top = g.y_cut().max(ys.last().copied().unwrap_or(1.0) * 1.01);
    let pieces: Vec<(f64, f64)> = map_range(n, |i| {
        let a = ys[i].ln();
        let b = if i + 1 < n { ys[i + 1].ln() } else { top.ln() };
        if a >= top.ln() {
            (0.0, 0.0)
        } else {
            piece(a, b.min(top.ln()))
        }
    });
    let mut fv = vec![0.0; n];
    let mut dv = vec![0.0; n];
    let (mut g0, mut g1) = (KSum::new(), KSum::new());
    for i in (0..n).rev() {
        g0.add(pieces[i].0);
        g1.add(pieces[i].1);
        let ly = ys[i].ln();
        let ys_s = (-s * ly).exp();
        fv[i] = ys_s * g0.value();
        dv[i] = ys_s * (g1.value() - ly * g0.value());
    }
    (fv, dv)
}

/// A self-dual L-series `sum b(m) m^-s` with its completion data.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LSeriesJob {
    pub label: String,
    /// `coeffs[m - 1] = b(m)`, analytic normalization.
    pub coeffs: Vec<f64>,
    pub conductor: f64,
    pub gamma: GammaFactor,
    pub sign: i32,
}

/// Value, derivative and diagnostics at the center.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CentralValueReport {
    pub label: String,
    pub value: f64,
    /// `Lambda'(1/2)` from differentiated kernels.
    pub derivative: f64,
    /// `Lambda'(1/2)` from Richardson differences of completed values.
    pub derivative_richardson: f64,
    /// Relative gap between the two derivative estimates.
    pub estimator_gap: f64,
    pub terms_used: usize,
    pub fe_residual: f64,
    pub tail_bound: f64,
}

impl LSeriesJob {
    pub fn new(label: &str, coeffs: Vec<f64>, conductor: f64, gamma: GammaFactor, sign: i32) -> Result<Self> {
        if sign != 1 && sign != -1 {
            return Err(Error::Validation(format!("sign must be +1 or -1, got {sign}")));
        }
        if !(conductor > 0.0) {
            return Err(Error::Validation("conductor must be positive".into()));
        }
        let job = Self { label: label.to_string(), coeffs, conductor, gamma, sign };
        job.check_envelope()?;
        Ok(job)
    }

    /// `|b(m)| <= C m^(1/2 + eps)` on the stored range, with `C = 64`, `eps = 0.1`.
    fn check_envelope(&self) -> Result<()> {
        for (i, b) in self.coeffs.iter().enumerate() {
            let m = (i + 1) as f64;
            if !b.is_finite() || b.abs() > 64.0 * m.powf(0.6) {
                return Err(Error::Validation(format!("coefficient b({}) = {b} violates the growth envelope", i + 1)));
            }
        }
        Ok(())
    }

    /// Number of terms needed for split points up to `a_max`.
    pub fn terms_needed(&self, a_max: f64) -> usize {
        (self.gamma.y_cut() * self.conductor.sqrt() * a_max).ceil() as usize + 1
    }

    fn check_length(&self, a_max: f64) -> Result<usize> {
        let need = self.terms_needed(a_max);
        if self.coeffs.len() < need {
            return Err(Error::Validation(format!(
                "{}: {} coefficients supplied, {need} required",
                self.label,
                self.coeffs.len()
            )));
        }
        Ok(need)
    }

    fn heights(&self, n: usize, scale: f64) -> Vec<f64> {
        let sq = self.conductor.sqrt();
        (1..=n).map(|m| m as f64 * scale / sq).collect()
    }

    /// `Lambda(s)` and `Lambda'(s)` with split point `a`.
    fn completed_with_split(&self, s: f64, a: f64) -> Result<(f64, f64)> {
        let n = self.check_length(a.max(1.0 / a))?;
        let b = &self.coeffs[..n];
        let (f1, d1) = kernel_values(&self.gamma, s, &self.heights(n, a));
        let (f2, d2) = kernel_values(&self.gamma, 1.0 - s, &self.heights(n, 1.0 / a));
        let eps = self.sign as f64;
        let (pa, pb) = (a.powf(s), a.powf(s - 1.0));
        let la = a.ln();
        let (mut v, mut d) = (KSum::new(), KSum::new());
        for m in 0..n {
            v.add(b[m] * (pa * f1[m] + eps * pb * f2[m]));
            d.add(b[m] * (pa * (la * f1[m] + d1[m]) + eps * pb * (la * f2[m] - d2[m])));
        }
        Ok((v.value(), d.value()))
    }

    /// `Lambda(s)` for real `s`.
    pub fn completed_value(&self, s: f64) -> Result<f64> {
        Ok(self.completed_with_split(s, 1.0)?.0)
    }

    /// `Lambda(s)` with the sum split at `a` instead of the symmetric point. At
    /// `s = 1/2` with sign `-1` the symmetric split vanishes identically, while
    /// this value vanishes only if the functional equation holds.
    pub fn completed_value_split(&self, s: f64, a: f64) -> Result<f64> {
        if !(a > 0.0) {
            return Err(Error::Validation("split point must be positive".into()));
        }
        Ok(self.completed_with_split(s, a)?.0)
    }

    /// `Lambda'(s)` from differentiated kernels.
    pub fn completed_derivative(&self, s: f64) -> Result<f64> {
        Ok(self.completed_with_split(s, 1.0)?.1)
    }

    /// `|Lambda_A(s) - sign Lambda_1(1 - s)| / max(1, |Lambda(s)|)` with split point `A = FE_SPLIT`.
    pub fn fe_residual(&self, s: f64) -> Result<f64> {
        let a = self.completed_with_split(s, FE_SPLIT)?.0;
        let b = self.completed_with_split(1.0 - s, 1.0)?.0;
        Ok((a - self.sign as f64 * b).abs() / a.abs().max(1.0))
    }

    /// Bound on the neglected terms: `phi` at the first dropped height times the coefficient envelope.
    pub fn tail_bound(&self) -> f64 {
        let n = self.terms_needed(1.0);
        let y = n as f64 / self.conductor.sqrt();
        let sq = self.conductor.sqrt();
        // sum_{m > n} |b(m)| F(1/2, m/sqrt Q) <= 64 n^0.6 sqrt(Q) int_y^infty phi.
        64.0 * (n as f64).powf(0.6) * sq * self.gamma.phi(y) * 4.0
    }

    /// Central value and derivative with cross-checks.
    pub fn central_derivative(&self) -> Result<CentralValueReport> {
        let (value, derivative) = self.completed_with_split(0.5, 1.0)?;
        let h = 1e-3;
        let f = |s: f64| self.completed_value(s);
        let d1 = (f(0.5 + h)? - f(0.5 - h)?) / (2.0 * h);
        let d2 = (f(0.5 + h / 2.0)? - f(0.5 - h / 2.0)?) / h;
        let rich = (4.0 * d2 - d1) / 3.0;
        let gap = (rich - derivative).abs() / derivative.abs().max(1e-300);
        Ok(CentralValueReport {
            label: self.label.clone(),
            value,
            derivative,
            derivative_richardson: rich,
            estimator_gap: gap,
            terms_used: self.terms_needed(1.0),
            fe_residual: self.fe_residual(0.6)?,
            tail_bound: self.tail_bound(),
        })
    }

    pub fn report_json(&self, r: &CentralValueReport, extra: serde_json::Value) -> serde_json::Value {
        let mut v = serde_json::json!({
            "label": self.label,
            "value": r.value,
            "derivative": r.derivative,
            "derivative_richardson": r.derivative_richardson,
            "estimator_gap": r.estimator_gap,
            "fe_residual": r.fe_residual,
            "terms_used": r.terms_used,
            "tail_bound": r.tail_bound,
            "sign": self.sign,
            "conductor": self.conductor,
        });
        if let (Some(o), serde_json::Value::Object(e)) = (v.as_object_mut(), extra) {
            o.extend(e);
        }
        v
    }

    /// Scales every coefficient by `lambda`.
    pub fn scaled(&self, lambda: f64) -> Self {
        Self { coeffs: self.coeffs.iter().map(|b| b * lambda).collect(), ..self.clone() }
    }
}

/// Root number of a semistable curve: `-prod_{p | N} (-a_p)`.
pub fn root_number(t: &CoeffTable, n: u64) -> Result<i32> {
    let mut w = -1i64;
    for (p, e) in factorize(n) {
        if e != 1 {
            return Err(Error::Validation(format!("root number needs a squarefree level, {p}^{e} divides {n}")));
        }
        if (p as usize) > t.len() {
            return Err(Error::Validation(format!("a_{p} is not in the table")));
        }
        w *= -t.c(p as usize);
    }
    Ok(w as i32)
}

/// Degree-two job for the newform itself: `b(m) = c(m)/sqrt m`, `Q = N`, sign `w_E`.
pub fn newform_job(label: &str, t: &CoeffTable, n: u64) -> Result<LSeriesJob> {
    let coeffs = t.coeffs.iter().enumerate().map(|(i, &c)| c as f64 / ((i + 1) as f64).sqrt()).collect();
    LSeriesJob::new(label, coeffs, n as f64, GammaFactor::new(vec![0.5])?, root_number(t, n)?)
}

/// Degree-two job for the quadratic twist by `eta`: conductor `N d_K^2`,
/// sign `w_E eta(-N)`.
pub fn twisted_job(label: &str, t: &CoeffTable, n: u64, f: &RealQuadraticField) -> Result<LSeriesJob> {
    let tw = twist_coefficients(t, f)?;
    let coeffs = tw.coeffs.iter().enumerate().map(|(i, &c)| c as f64 / ((i + 1) as f64).sqrt()).collect();
    let sign = root_number(t, n)? * kronecker(f, -(n as i128))?;
    LSeriesJob::new(label, coeffs, n as f64 * (f.d_k * f.d_k) as f64, GammaFactor::new(vec![0.5])?, sign)
}

/// `b_chi(m) = sum_A Re chi(A) c_f(m) r_A(m)` for `1 <= m <= M` (arithmetic normalization).
/// `r_tables[A][m]` holds `r_A(m)`.
pub fn rs_coefficients(t: &CoeffTable, r_tables: &[Vec<f64>], chi_re: &[f64]) -> Result<Vec<f64>> {
    if r_tables.len() != chi_re.len() {
        return Err(Error::Validation("one character value per class is required".into()));
    }
    let m_max = t.len();
    if r_tables.iter().any(|r| r.len() < m_max + 1) {
        let have = r_tables.iter().map(|r| r.len()).min().unwrap_or(0).saturating_sub(1);
        return Err(Error::Validation(format!("representation counts cover m <= {have}, need {m_max}")));
    }
    Ok((1..=m_max)
        .map(|m| {
            let r: f64 = r_tables.iter().zip(chi_re).map(|(t, c)| c * t[m]).sum();
            t.c(m) as f64 * r
        })
        .collect())
}

/// Local data of the Rankin–Selberg job at one bad prime.
#[derive(Clone, Debug, Serialize)]
pub struct LocalCorrection {
    pub p: u64,
    /// Naive local series `sum_k b(p^k) X^k` of the convolution.
    pub naive: Vec<f64>,
    /// Local series of `L(s, E/K, chi)`.
    pub actual: Vec<f64>,
    /// Formal quotient `actual / naive`.
    pub quotient: Vec<f64>,
}

/// The degree-four job `Lambda(s, E/K, chi)` and its construction data.
#[derive(Clone, Debug)]
pub struct RankinSelbergJob {
    pub job: LSeriesJob,
    pub corrections: Vec<LocalCorrection>,
    /// `b_chi(m)` before the `L(2s, eta)` factor and the local corrections.
    pub rs: Vec<f64>,
}

fn power_series_inverse(a: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    out[0] = 1.0 / a[0];
    for k in 1..n {
        let mut s = 0.0;
        for j in 1..=k.min(a.len() - 1) {
            s += a[j] * out[k - j];
        }
        out[k] = -s / a[0];
    }
    out
}

fn power_series_mul(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for (i, x) in a.iter().enumerate().take(n) {
        for (j, y) in b.iter().enumerate().take(n - i) {
            out[i + j] += x * y;
        }
    }
    out
}

/// Euler factor polynomial (in `X = p^-s`, analytic normalization) of
/// `L(s, E/K, chi)` at `p`, given `a_p`, whether `p | N`, the splitting type
/// `eta(p)` and `t = sum_{P | p} chi(P)` (`chi(P) + chi(P-bar)` when split).
fn local_polynomial(ap: i64, p: u64, bad: bool, eta_p: i32, t: f64) -> Vec<f64> {
    let pf = p as f64;
    let lam = ap as f64 / pf.sqrt();
    match (bad, eta_p) {
        (false, 1) => {
            // (1 - lam c X + X^2)(1 - lam c' X + X^2) with c c' = 1, c + c' = t.
            vec![1.0, -lam * t, 2.0 + lam * lam, -lam * t, 1.0]
        }
        (false, -1) => vec![1.0, 0.0, -(lam * lam - 2.0), 0.0, 1.0],
        (false, _) => vec![1.0, -lam * t, 1.0],
        (true, 1) => vec![1.0, -lam * t, lam * lam],
        (true, -1) => vec![1.0, 0.0, -lam * lam],
        (true, _) => vec![1.0, -lam * t],
    }
}

/// The Rankin–Selberg coefficients `L(2s, eta) * sum b_chi(m) m^-s`, with the
/// local factors at `p | N d_K` replaced by those of `L(s, E/K, chi)`.
pub fn rankin_selberg_job(
    label: &str,
    e: &CurveSpec,
    f: &RealQuadraticField,
    rcg: &RingClassGroup,
    u: &UnitData,
    chi_index: usize,
    extra_terms: f64,
    cache: Option<&Path>,
) -> Result<RankinSelbergJob> {
    if rcg.conductor != 1 {
        return Err(Error::Validation("local corrections are implemented for the maximal order (c = 1) only".into()));
    }
    let n = e.conductor;
    let split = level_split(n, f)?;
    let q = (f.d_k * f.d_k) as f64 * (n * n) as f64;
    let gamma = GammaFactor::new(vec![0.5, 0.5])?;
    let m = (gamma.y_cut() * q.sqrt() * extra_terms.max(FE_SPLIT)).ceil() as usize + 2;
    let t = coefficients(e, m, cache)?;
    let chars = rcg.characters();
    let chi =
        chars.get(chi_index).ok_or_else(|| Error::Validation(format!("character index {chi_index} out of range")))?;
    let chi_re: Vec<f64> = (0..rcg.order()).map(|k| chi.value(k).re).collect();
    let r_tables: Vec<Vec<f64>> =
        (0..rcg.order()).map(|k| partial_theta(f, u, rcg, k, m as u64, cache)).collect::<Result<_>>()?;
    let rs = rs_coefficients(&t, &r_tables, &chi_re)?;
    // Naive analytic coefficients: (sum eta(k) k^{-2s}) * sum rs(m) m^{-1/2} m^{-s}.
    let mut naive = vec![0.0; m + 1];
    for k in 1..=m {
        let kk = k * k;
        if kk > m {
            break;
        }
        let ek = kronecker(f, k as i128)? as f64;
        if ek == 0.0 {
            continue;
        }
        for j in 1..=m / kk {
            naive[kk * j] += ek * rs[j - 1] / (j as f64).sqrt();
        }
    }
    // Replace the local factors at bad primes.
    let mut bad: Vec<u64> = factorize(n).into_iter().map(|(p, _)| p).collect();
    for (p, _) in factorize(f.d_k as u64) {
        if !bad.contains(&p) {
            bad.push(p);
        }
    }
    bad.sort_unstable();
    let mut coeffs = naive.clone();
    let mut corrections = vec![];
    for &p in &bad {
        let pu = p as usize;
        let mut kmax = 0;
        let mut pk = 1usize;
        while pk * pu <= m {
            pk *= pu;
            kmax += 1;
        }
        let naive_local: Vec<f64> = (0..=kmax).map(|k| naive[pu.pow(k as u32)]).collect();
        let tp: f64 = (0..rcg.order()).map(|a| chi_re[a] * r_tables[a][pu]).sum();
        let poly = local_polynomial(t.c(pu), p, n.is_multiple_of(p), kronecker(f, p as i128)?, tp);
        let actual = power_series_inverse(&poly, kmax + 1);
        let quotient = power_series_mul(&actual, &power_series_inverse(&naive_local, kmax + 1), kmax + 1);
        // b(m) = b(m') * (actual_k / naive_k) for m = p^k m' with p not dividing m'.
        for mm in 1..=m {
            let mut r = mm;
            let mut k = 0;
            while r % pu == 0 {
                r /= pu;
                k += 1;
            }
            if k == 0 {
                continue;
            }
            let base = coeffs[r];
            coeffs[mm] = base * actual[k];
        }
        corrections.push(LocalCorrection { p, naive: naive_local, actual, quotient });
    }
    coeffs.remove(0);
    let job = LSeriesJob::new(label, coeffs, q, gamma, split.sign)?;
    Ok(RankinSelbergJob { job, corrections, rs })
}

/// Coefficients of `L(s, E/K, chi)` straight from the Euler product, using
/// only the representation counts at primes.
pub fn euler_product_coefficients(
    t: &CoeffTable,
    n: u64,
    f: &RealQuadraticField,
    prime_traces: &dyn Fn(u64) -> f64,
) -> Result<Vec<f64>> {
    let m = t.len();
    let mut b = vec![0.0; m + 1];
    b[1] = 1.0;
    for p in primes_up_to(m) {
        let pu = p as u64;
        let poly = local_polynomial(t.c(p), pu, n.is_multiple_of(pu), kronecker(f, p as i128)?, prime_traces(pu));
        let mut kmax = 0;
        let mut pk = 1usize;
        while pk * p <= m {
            pk *= p;
            kmax += 1;
        }
        let local = power_series_inverse(&poly, kmax + 1);
        // Multiply the current series by the local factor, largest m first.
        for mm in (1..=m).rev() {
            if mm % p == 0 {
                continue;
            }
            if b[mm] == 0.0 {
                continue;
            }
            let mut q = mm;
            for k in 1..=kmax {
                q *= p;
                if q > m {
                    break;
                }
                b[q] += b[mm] * local[k];
            }
        }
    }
    b.remove(0);
    Ok(b)
}

/// `Lambda(s, E/K, 1)` versus `Lambda(s, E) Lambda(s, E (x) eta)`: largest relative gap.
#[derive(Clone, Debug, Serialize)]
pub struct ArtinCheck {
    pub points: Vec<f64>,
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
    pub residual: f64,
}

pub fn artin_residual(
    e: &CurveSpec,
    f: &RealQuadraticField,
    rcg: &RingClassGroup,
    u: &UnitData,
    points: &[f64],
    cache: Option<&Path>,
) -> Result<ArtinCheck> {
    let rs = rankin_selberg_job("E/K", e, f, rcg, u, 0, FE_SPLIT, cache)?;
    let n = e.conductor;
    let m2 = rs.job.coeffs.len();
    let t = coefficients(e, m2, cache)?;
    let j1 = newform_job("E", &t, n)?;
    let j2 = twisted_job("E(x)eta", &t, n, f)?;
    let mut lhs = vec![];
    let mut rhs = vec![];
    let mut residual: f64 = 0.0;
    for &s in points {
        let a = rs.job.completed_value(s)?;
        let b = j1.completed_value(s)? * j2.completed_value(s)?;
        residual = residual.max((a - b).abs() / b.abs().max(1e-300));
        lhs.push(a);
        rhs.push(b);
    }
    Ok(ArtinCheck { points: points.to_vec(), lhs, rhs, residual })
}

/// Rank-one oracle: `Lambda'(E, 1/2)` for a curve of root number `-1` from
/// `L'(E, 1) = 2 sum a_n / n E_1(2 pi n / sqrt N)`, in the analytic completion.
pub fn rank_one_derivative_oracle(t: &CoeffTable, n: u64) -> Result<f64> {
    if root_number(t, n)? != -1 {
        return Err(Error::Validation("the rank-one oracle needs root number -1".into()));
    }
    let sq = (n as f64).sqrt();
    let mut s = KSum::new();
    for k in 1..=t.len() {
        let x = 2.0 * PI * k as f64 / sq;
        if x > 700.0 {
            break;
        }
        s.add(t.c(k) as f64 / k as f64 * exp_int_e1(x));
    }
    // Lambda(s) = N^(s/2) Gamma_C(s + 1/2) L(E, s + 1/2) and Gamma_C(1) = 1/pi.
    Ok((n as f64).powf(0.25) / PI * 2.0 * s.value())
}

/// Central value oracle `Lambda(E, 1/2)` for root number `+1` from
/// `L(E, 1) = 2 sum a_n / n exp(-2 pi n / sqrt N)`.
pub fn central_value_oracle(coeffs: &[i64], n: f64) -> f64 {
    let sq = n.sqrt();
    let mut s = KSum::new();
    for (i, &c) in coeffs.iter().enumerate() {
        let k = (i + 1) as f64;
        let x = 2.0 * PI * k / sq;
        if x > 700.0 {
            break;
        }
        s.add(c as f64 / k * (-x).exp());
    }
    n.powf(0.25) / PI * 2.0 * s.value()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{gamma_upper, zeta};
    use crate::quadorder::{field_from_disc, fundamental_unit, ring_class_group};

    fn field(dk: i128) -> (RealQuadraticField, UnitData, RingClassGroup) {
        let f = field_from_disc(dk).unwrap();
        let u = fundamental_unit(&f).unwrap();
        let r = ring_class_group(&f, 1, 1).unwrap();
        (f, u, r)
    }

    #[test]
    fn class_number_formula() {
        let expect = [(5, 0.430409), (8, 0.623225)];
        for (dk, l1) in expect {
            let (f, u, r) = field(dk);
            let c = class_number_check(&f, &u, r.order()).unwrap();
            assert!((c.l1 - l1).abs() < 1e-6);
            assert!(c.residual < 1e-8);
        }
        for dk in [12, 13, 40, 229] {
            let (f, u, r) = field(dk);
            assert!(class_number_residual(&f, &u, r.order()).unwrap() < 1e-8);
        }
    }

    #[test]
    fn kernel_matches_incomplete_gamma() {
        let g = GammaFactor::new(vec![0.5]).unwrap();
        let ys: Vec<f64> = (1..40).map(|m| m as f64 * 0.173).collect();
        for s in [0.3, 0.5, 0.9] {
            let (fv, _) = kernel_values(&g, s, &ys);
            for (y, v) in ys.iter().zip(&fv) {
                let x = 2.0 * PI * y;
                let exact = 2.0 * (2.0 * PI).powf(-0.5) * x.powf(-s) * gamma_upper(s + 0.5, x);
                assert!((v - exact).abs() < 1e-13 * exact.max(1e-3), "{y} {v} {exact}");
            }
        }
        // Degree two: phi integrates to Gamma_C(s + 1/2)^2 as y -> 0.
        let g2 = GammaFactor::new(vec![0.5, 0.5]).unwrap();
        let y0 = 1e-9;
        let (fv, _) = kernel_values(&g2, 0.7, &[y0]);
        assert!((fv[0] * y0.powf(0.7) / g2.value(0.7) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn kernel_derivative_matches_difference() {
        let g = GammaFactor::new(vec![0.5, 0.5]).unwrap();
        let ys = [0.05, 0.3, 1.1];
        let (_, d) = kernel_values(&g, 0.5, &ys);
        let (fp, _) = kernel_values(&g, 0.5 + 1e-4, &ys);
        let (fm, _) = kernel_values(&g, 0.5 - 1e-4, &ys);
        for i in 0..3 {
            let fd = (fp[i] - fm[i]) / 2e-4;
            assert!((fd - d[i]).abs() < 1e-7 * d[i].abs().max(1.0));
        }
    }

    #[test]
    fn quadratic_l_value_matches_direct_sum() {
        let f = field_from_disc(5).unwrap();
        let l = dirichlet_l(&f, C64::new(2.0, 0.0)).unwrap().re;
        let mut direct = KSum::new();
        for n in 1..200_000i128 {
            direct.add(kronecker(&f, n).unwrap() as f64 / (n * n) as f64);
        }
        assert!((l - direct.value()).abs() < 1e-9);
        assert!(l < zeta(2.0));
    }

    #[test]
    fn root_numbers() {
        let t37 = coefficients(&CurveSpec::curve_37a(), 100, None).unwrap();
        let t11 = coefficients(&CurveSpec::curve_11a(), 100, None).unwrap();
        assert_eq!(root_number(&t37, 37).unwrap(), -1);
        assert_eq!(root_number(&t11, 11).unwrap(), 1);
    }

    #[test]
    fn degree_two_jobs_satisfy_the_functional_equation() {
        let t = coefficients(&CurveSpec::curve_11a(), 2000, None).unwrap();
        let j = newform_job("11a", &t, 11).unwrap();
        for s in [0.6, 0.75] {
            assert!(j.fe_residual(s).unwrap() < 1e-10);
        }
        // A wrong sign is detected.
        let mut bad = j.clone();
        bad.sign = -1;
        assert!(bad.fe_residual(0.6).unwrap() > 1e-3);
        // Central value against the classical series.
        let v = j.completed_value(0.5).unwrap();
        let o = central_value_oracle(&t.coeffs, 11.0);
        assert!((v - o).abs() < 1e-10 * o.abs());
    }

    #[test]
    fn rank_one_oracle_matches_kernel_derivative() {
        let t = coefficients(&CurveSpec::curve_37a(), 2000, None).unwrap();
        let j = newform_job("37a", &t, 37).unwrap();
        let r = j.central_derivative().unwrap();
        let o = rank_one_derivative_oracle(&t, 37).unwrap();
        assert!((r.derivative - o).abs() < 1e-9 * o.abs(), "{} {o}", r.derivative);
        assert!(r.value.abs() < 1e-12);
        assert!(r.estimator_gap < 1e-6);
        // Scaling.
        let r2 = j.scaled(3.0).central_derivative().unwrap();
        assert!((r2.derivative - 3.0 * r.derivative).abs() < 1e-10);
    }

    #[test]
    fn rs_coefficient_examples() {
        let (f, u, r) = field(5);
        let t = coefficients(&CurveSpec::curve_37a(), 50, None).unwrap();
        let th = vec![partial_theta(&f, &u, &r, 0, 50, None).unwrap()];
        let b = rs_coefficients(&t, &th, &[1.0]).unwrap();
        assert_eq!(b[1], 0.0); // 2 is inert in Q(sqrt 5).
        assert_eq!(b[0], 1.0);
        // Good split primes: sum_A r_A(p) c(p) = c(p)(1 + eta(p)).
        for p in [11usize, 19, 29, 31, 41] {
            if p > 50 {
                continue;
            }
            let eta = kronecker(&f, p as i128).unwrap() as f64;
            assert_eq!(b[p - 1], t.c(p) as f64 * (1.0 + eta));
        }
    }

    #[test]
    fn euler_product_agrees_with_rankin_selberg() {
        let (f, u, r) = field(5);
        let e = CurveSpec::curve_37a();
        let rs = rankin_selberg_job("37a/5", &e, &f, &r, &u, 0, FE_SPLIT, None).unwrap();
        let m = rs.job.coeffs.len();
        let t = coefficients(&e, m, None).unwrap();
        let th = partial_theta(&f, &u, &r, 0, m as u64, None).unwrap();
        let ep = euler_product_coefficients(&t, 37, &f, &|p| th[p as usize]).unwrap();
        for i in 0..m {
            let (want, got) = (ep[i], rs.job.coeffs[i]);
            assert!((want - got).abs() < 1e-9 * want.abs().max(1.0), "m = {}: {got} vs {want}", i + 1);
        }
        // The naive factor at the inert level prime carries an extra (1 + X^2)^-1.
        let c37 = rs.corrections.iter().find(|c| c.p == 37).unwrap();
        assert!((c37.quotient[2] - 1.0).abs() < 1e-12);
    }
}
