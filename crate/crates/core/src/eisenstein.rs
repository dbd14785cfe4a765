//! Vector-valued Eisenstein series `E_L(tau, s; l)` for the Weil
//! representation of an even lattice of even signature.
//!
//! Two evaluation routes are provided. The γ-sum adds
//! `(c tau + d)^-l v^((s+1-l)/2) |c tau + d|^-(s+1-l) rho(gamma)^-1 e_0`
//! over coprime bottom rows and converges for `s > 1`. The continued route
//! writes the series as a finite combination of shifted lattice sums
//! `Z_(alpha, beta)(s) = sum_{(c,d) = (alpha,beta) mod N} (c tau + d)^-l |c tau + d|^-(s+1-l)`
//! with coefficients built from Dirichlet characters modulo the level `N`
//! divided by `L(s + 1, chi)`, and evaluates each lattice sum by an
//! incomplete-gamma (Ewald) splitting that is analytic in `s`. The continued
//! route is valid for all real `s > -1` away from poles.
//!
//! On top of the evaluators: Fourier coefficients by discrete Fourier
//! transform in `u`, s-derivatives, the completed functional equation, weight
//! lowering, κ-coefficient extraction and the Siegel–Weil comparison with
//! geodesic theta averages.
use crate::dirichlet::{kronecker_l_value, DirichletGroup};
use crate::error::{Error, Result};
use crate::linalg::{ext_gcd, Q};
use crate::numeric::{e, e_rat, gamma, gamma_upper, max_norm, richardson_derivative_vec, CSum, Derivative, C64};
use crate::par::{map_range, map_slice};
use crate::qspace::{dual_and_discriminant, lattice_from_level, DiscriminantGroup};
use crate::quadorder::{RealQuadraticField, RingClassGroup, UnitData};
use crate::theta::{
    genus_translate, geodesic_majorant, norm_one_unit, theta_with_majorant, unit_permutation, ThetaOptions,
};
use crate::weilrep::{weil_generators, Sl2, VectorQExpansion, WeilRep};
use num_integer::Integer;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Incomplete-gamma arguments beyond this bound are dropped (`e^-46 < 1.1e-20`).
const EWALD_CUTOFF: f64 = 46.0;

/// Largest level for which the coset tables are built.
pub const MAX_EISENSTEIN_LEVEL: i128 = 400;

/// How a value of the series is computed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EisMethod {
    /// Direct γ-sum over coprime `(c, d)` with `|c|, |d| <= trunc_c`.
    GammaSum { trunc_c: i64 },
    /// Character decomposition and incomplete-gamma splitting.
    Continued,
}

/// One evaluation of `E_L(tau, s; l)`.
#[derive(Clone, Debug, Serialize)]
pub struct EisensteinEval {
    pub weight: i64,
    pub s: f64,
    pub tau: (f64, f64),
    pub value: Vec<C64>,
    /// Truncation of the γ-sum; `None` for the continued route.
    pub trunc_c: Option<i64>,
    /// Estimated truncation error.
    pub est_error: f64,
}

/// Coset data for one discriminant group.
#[derive(Clone, Debug)]
pub struct EisensteinContext {
    pub weil: WeilRep,
    /// Level `N` of the discriminant form.
    pub level: i128,
    chars: DirichletGroup,
    /// Residue pairs `(alpha, beta)` modulo `N` with `gcd(alpha, beta, N) = 1`.
    pairs: Vec<[i128; 2]>,
    pair_index: Vec<Option<usize>>,
    /// `phi[p][mu] = <e_mu, rho(gamma)^-1 e_0>` for `gamma` with bottom row `pairs[p]`.
    phi: Vec<Vec<C64>>,
    /// `char_sums[k][p][mu] = sum_u chi_k(u) phi[u p][mu]`.
    char_sums: Vec<Vec<Vec<C64>>>,
}

/// A matrix of `SL2(Z)` whose bottom row is congruent to `(a, b)` modulo `n`.
pub fn lift_bottom_row(a: i128, b: i128, n: i128) -> Result<Sl2> {
    let a0 = a.rem_euclid(n);
    let c = if a0 == 0 { n } else { a0 };
    let mut d = b.rem_euclid(n);
    let mut steps = 0;
    while c.gcd(&d) != 1 {
        d += n;
        steps += 1;
        if steps > 100_000 {
            return Err(Error::Validation(format!("({a}, {b}) is not a primitive row modulo {n}")));
        }
    }
    // x d + y c = 1  =>  [[x, -y], [c, d]] has determinant 1.
    let (g, x, y) = ext_gcd(d, c);
    debug_assert_eq!(g, 1);
    Ok([[x, -y], [c, d]])
}

impl EisensteinContext {
    pub fn new(disc: &DiscriminantGroup) -> Result<Self> {
        let weil = weil_generators(disc)?;
        if weil.sig_mod8 % 2 != 0 {
            return Err(Error::Validation("Eisenstein series are implemented for even signature only".into()));
        }
        let n = disc.level().max(1);
        if n > MAX_EISENSTEIN_LEVEL {
            return Err(Error::Validation(format!("level {n} exceeds the supported bound {MAX_EISENSTEIN_LEVEL}")));
        }
        let chars = DirichletGroup::new(n)?;
        let mut pairs = vec![];
        let mut pair_index = vec![None; (n * n) as usize];
        for a in 0..n {
            for b in 0..n {
                if a.gcd(&b).gcd(&n) == 1 {
                    pair_index[(a * n + b) as usize] = Some(pairs.len());
                    pairs.push([a, b]);
                }
            }
        }
        let dim = weil.dim();
        let mut e0 = vec![C64::new(0.0, 0.0); dim];
        e0[0] = C64::new(1.0, 0.0);
        let phi: Vec<Vec<C64>> = map_slice(&pairs, |p| {
            let g = lift_bottom_row(p[0], p[1], n)?;
            weil.apply_gamma_inv(&g, &e0)
        })
        .into_iter()
        .collect::<Result<_>>()?;
        let char_sums = (0..chars.len())
            .map(|k| {
                pairs
                    .iter()
                    .map(|p| {
                        let mut out = vec![C64::new(0.0, 0.0); dim];
                        for &u in &chars.units {
                            let q = pair_index[(((u * p[0]) % n) * n + (u * p[1]) % n) as usize]
                                .expect("unit multiples of primitive rows are primitive");
                            let x = chars.value(k, u);
                            for (o, v) in out.iter_mut().zip(&phi[q]) {
                                *o += x * v;
                            }
                        }
                        out
                    })
                    .collect()
            })
            .collect();
        Ok(Self { weil, level: n, chars, pairs, pair_index, phi, char_sums })
    }

    pub fn dim(&self) -> usize {
        self.weil.dim()
    }

    /// `rho(gamma)^-1 e_0` for a bottom row `(c, d)`, read from the coset table.
    pub fn coset_vector(&self, c: i128, d: i128) -> Option<&Vec<C64>> {
        let n = self.level;
        self.pair_index[(c.rem_euclid(n) * n + d.rem_euclid(n)) as usize].map(|i| &self.phi[i])
    }

    /// Evaluates `E_L(tau, s; l)` by the chosen route.
    pub fn eval(&self, tau: C64, s: f64, l: i64, method: EisMethod) -> Result<EisensteinEval> {
        if !(tau.im > 0.0) {
            return Err(Error::Validation("tau must lie in the upper half-plane".into()));
        }
        // rho(-I) e_0 = e(-sig/4) e_0 must equal (-1)^l e_0.
        if (l + self.weil.sig_mod8 / 2).rem_euclid(2) != 0 {
            return Err(Error::Validation(format!(
                "weight {l} is incompatible with signature {} mod 8",
                self.weil.sig_mod8
            )));
        }
        match method {
            EisMethod::GammaSum { trunc_c } => self.gamma_sum(tau, s, l, trunc_c),
            EisMethod::Continued => self.continued(tau, s, l),
        }
    }

    fn gamma_sum(&self, tau: C64, s: f64, l: i64, trunc_c: i64) -> Result<EisensteinEval> {
        if trunc_c > 0 && s <= 1.0 {
            return Err(Error::Validation(format!(
                "the γ-sum converges only for s > 1 (got s = {s}); use the continued route"
            )));
        }
        let v = tau.im;
        let sigma = (s + 1.0 - l as f64) / 2.0;
        let dim = self.dim();
        let cs: Vec<i64> = (1..=trunc_c).collect();
        // Row c = 0 contributes only (0, 1).
        let rows = map_slice(&cs, |&c| {
            let mut acc = vec![CSum::new(); dim];
            for d in -trunc_c..=trunc_c {
                if (c as i128).gcd(&(d as i128)) != 1 {
                    continue;
                }
                let x = tau * c as f64 + d as f64;
                let f = x.powi(-(l as i32)) * x.norm().powf(-(s + 1.0 - l as f64));
                let vec = self.coset_vector(c as i128, d as i128).expect("coprime rows are primitive modulo N");
                for (a, y) in acc.iter_mut().zip(vec) {
                    a.add(f * y);
                }
            }
            acc.into_iter().map(|a| a.value()).collect::<Vec<C64>>()
        });
        let mut total = vec![CSum::new(); dim];
        total[0].add(C64::new(1.0, 0.0));
        for r in &rows {
            for (t, x) in total.iter_mut().zip(r) {
                t.add(*x);
            }
        }
        let scale = v.powf(sigma);
        let value: Vec<C64> = total.into_iter().map(|t| t.value() * scale).collect();
        let est_error = if trunc_c == 0 {
            f64::INFINITY
        } else {
            // Shell k holds at most 8k rows, each with |c tau + d| >= k m.
            let m = v / (1.0 + tau.re.abs() + v);
            let p = s + 1.0;
            8.0 * scale * m.powf(-p) * (trunc_c as f64).powf(2.0 - p) / (p - 2.0).max(1e-3)
        };
        Ok(EisensteinEval { weight: l, s, tau: (tau.re, tau.im), value, trunc_c: Some(trunc_c), est_error })
    }

    /// Coefficients `C_mu(alpha, beta; s)` of the lattice sums.
    fn pair_coefficients(&self, s: f64) -> Vec<Vec<C64>> {
        let phi_n = self.chars.units.len() as f64;
        let inv_l: Vec<C64> =
            (0..self.chars.len()).map(|k| self.chars.inv_l_one_plus(self.chars.conj_index(k), s)).collect();
        (0..self.pairs.len())
            .map(|p| {
                let mut out = vec![C64::new(0.0, 0.0); self.dim()];
                for (k, il) in inv_l.iter().enumerate() {
                    for (o, a) in out.iter_mut().zip(&self.char_sums[k][p]) {
                        *o += a * il;
                    }
                }
                out.into_iter().map(|x| x / phi_n).collect()
            })
            .collect()
    }

    fn continued(&self, tau: C64, s: f64, l: i64) -> Result<EisensteinEval> {
        let w = (s + 1.0 + l as f64) / 2.0;
        if !(w > 0.0) {
            return Err(Error::Validation(format!("continued route needs s > -1 - l (got s = {s}, l = {l})")));
        }
        let ew = Ewald::new(tau, self.level, w, l);
        let coeffs = self.pair_coefficients(s);
        let sums: Vec<C64> = map_range(self.pairs.len(), |p| ew.shifted_sum(self.pairs[p][0], self.pairs[p][1]));
        let dim = self.dim();
        let mut acc = vec![CSum::new(); dim];
        for (c, z) in coeffs.iter().zip(&sums) {
            for (a, x) in acc.iter_mut().zip(c) {
                a.add(x * z);
            }
        }
        if l == 0 {
            // The y = 0 Fourier term is the same for every pair and carries the
            // pole at s = 1; its total coefficient vanishes when the
            // representation has no invariants.
            for mu in 0..dim {
                let total: C64 = coeffs.iter().map(|c| c[mu]).sum();
                if total.norm() > 1e-10 {
                    if (w - 1.0).abs() < 1e-12 {
                        return Err(Error::Numeric("the series has a pole at s = 1".into()));
                    }
                    acc[mu].add(total * ew.zero_mode());
                }
            }
        }
        let scale = 0.5 * tau.im.powf((s + 1.0 - l as f64) / 2.0);
        Ok(EisensteinEval {
            weight: l,
            s,
            tau: (tau.re, tau.im),
            value: acc.into_iter().map(|a| a.value() * scale).collect(),
            trunc_c: None,
            est_error: 1e-12 * scale.max(1.0),
        })
    }

    /// `E_L(tau, s; l)` by the continued route, as a plain vector.
    pub fn value(&self, tau: C64, s: f64, l: i64) -> Result<Vec<C64>> {
        Ok(self.eval(tau, s, l, EisMethod::Continued)?.value)
    }

    /// `Q(mu) mod 1` of each coset.
    pub fn q_values(&self) -> &[Q] {
        &self.weil.disc.q_values
    }
}

/// Incomplete-gamma splitting of
/// `sum_{x in omega + Lambda, x != 0} conj(x)^l |x|^-2w`, with
/// `Lambda = N (Z tau + Z)` and `omega = alpha tau + beta`.
struct Ewald {
    tau: C64,
    n: i128,
    w: f64,
    l: i64,
    /// Covolume of `Lambda`.
    vol: f64,
    t0: f64,
    gamma_w: f64,
    /// `(p, q, weight)` for the dual-lattice terms `y = p b1* + q b2*`.
    dual_terms: Vec<(i128, i128, C64)>,
}

impl Ewald {
    fn new(tau: C64, n: i128, w: f64, l: i64) -> Self {
        let nf = n as f64;
        let (u, v) = (tau.re, tau.im);
        let vol = nf * nf * v;
        let t0 = 1.0 / vol;
        let gamma_w = gamma(w);
        let pref = PI.powf(w) / gamma_w / vol * C64::new(0.0, -1.0).powi(l as i32);
        // Dual lattice points y = (q/N, (p - q u)/(N v)) with pi |y|^2 / t0 <= cutoff.
        let ymax2 = EWALD_CUTOFF * t0 / PI;
        let qmax = (nf * ymax2.sqrt()).floor() as i128 + 1;
        let mut dual_terms = vec![];
        for q in -qmax..=qmax {
            let re = q as f64 / nf;
            let rest = ymax2 - re * re;
            if rest < 0.0 {
                continue;
            }
            let span = nf * v * rest.sqrt();
            let c = q as f64 * u;
            let pmin = (c - span).floor() as i128 - 1;
            let pmax = (c + span).ceil() as i128 + 1;
            for p in pmin..=pmax {
                if p == 0 && q == 0 {
                    continue;
                }
                let y = C64::new(re, (p as f64 - q as f64 * u) / (nf * v));
                let r2 = y.norm_sqr();
                let arg = PI * r2 / t0;
                if arg > EWALD_CUTOFF {
                    continue;
                }
                let wt = pref
                    * y.conj().powi(l as i32)
                    * (PI * r2).powf(w - l as f64 - 1.0)
                    * gamma_upper(l as f64 + 1.0 - w, arg);
                dual_terms.push((p, q, wt));
            }
        }
        Self { tau, n, w, l, vol, t0, gamma_w, dual_terms }
    }

    /// The `y = 0` dual term for weight 0 (excluding the removed `x = 0`).
    fn zero_mode(&self) -> C64 {
        let w = self.w;
        C64::new(PI.powf(w) / self.gamma_w * self.t0.powf(w - 1.0) / (self.vol * (w - 1.0)), 0.0)
    }

    fn shifted_sum(&self, alpha: i128, beta: i128) -> C64 {
        let nf = self.n as f64;
        let (u, v) = (self.tau.re, self.tau.im);
        let w = self.w;
        let mut acc = CSum::new();
        // Direct-space terms x = (alpha + N m) tau + (beta + N k).
        let xmax2 = EWALD_CUTOFF / (PI * self.t0);
        let xmax = xmax2.sqrt();
        let mlo = ((-xmax / v - alpha as f64) / nf).floor() as i128 - 1;
        let mhi = ((xmax / v - alpha as f64) / nf).ceil() as i128 + 1;
        for m in mlo..=mhi {
            let c = (alpha + self.n * m) as f64;
            let im = c * v;
            if im.abs() > xmax {
                continue;
            }
            let span = (xmax2 - im * im).sqrt();
            let base = c * u + beta as f64;
            let klo = ((-span - base) / nf).floor() as i128 - 1;
            let khi = ((span - base) / nf).ceil() as i128 + 1;
            for k in klo..=khi {
                let x = C64::new(base + nf * k as f64, im);
                let r2 = x.norm_sqr();
                if r2 == 0.0 {
                    continue;
                }
                let arg = PI * self.t0 * r2;
                if arg > EWALD_CUTOFF {
                    continue;
                }
                acc.add(x.conj().powi(self.l as i32) * r2.powf(-w) * (gamma_upper(w, arg) / self.gamma_w));
            }
        }
        // Dual-space terms.
        for &(p, q, wt) in &self.dual_terms {
            acc.add(wt * e_rat(alpha * p + beta * q, self.n));
        }
        // Removed x = 0 term when omega lies in Lambda.
        if self.l == 0 && alpha.rem_euclid(self.n) == 0 && beta.rem_euclid(self.n) == 0 {
            acc.add(C64::new(-PI.powf(w) / self.gamma_w * self.t0.powf(w) / w, 0.0));
        }
        acc.value()
    }
}

/// Fourier coefficients `A(mu, m, v)` in the expansion
/// `E_mu(u + i v) = sum_m A(mu, m, v) e(m tau)`, with `m = Q(mu) + n`.
#[derive(Clone, Debug, Serialize)]
pub struct FourierCoeffs {
    pub v: f64,
    pub modes: usize,
    /// `entries[mu]` lists `(m, A(mu, m, v))` for `|n| < modes / 2`.
    pub entries: Vec<Vec<(Q, C64)>>,
    /// Largest change of the retained coefficients when the sample count is doubled.
    pub aliasing: f64,
}

impl FourierCoeffs {
    pub fn get(&self, mu: usize, m: Q) -> Option<C64> {
        self.entries[mu].iter().find(|(x, _)| *x == m).map(|(_, c)| *c)
    }
}

fn dft_once<F>(f: &F, q_values: &[Q], v: f64, modes: usize) -> Result<Vec<Vec<(Q, C64)>>>
where
    F: Fn(C64) -> Result<Vec<C64>> + Sync,
{
    let samples: Vec<Vec<C64>> =
        map_range(modes, |j| f(C64::new(j as f64 / modes as f64, v))).into_iter().collect::<Result<_>>()?;
    let half = (modes / 2) as i64;
    let mut out = vec![];
    for (mu, q) in q_values.iter().enumerate() {
        let qf = *q.numer() as f64 / *q.denom() as f64;
        let mut row = vec![];
        for n in -half..half {
            let mut acc = CSum::new();
            for (j, smp) in samples.iter().enumerate() {
                let u = j as f64 / modes as f64;
                acc.add(smp[mu] * e(-(qf + n as f64) * u));
            }
            let m = *q + Q::from_integer(n as i128);
            let mf = qf + n as f64;
            row.push((m, acc.value() / modes as f64 * (2.0 * PI * mf * v).exp()));
        }
        out.push(row);
    }
    Ok(out)
}

/// Discrete Fourier transform in `u` of a vector-valued function of period
/// one after the twist `e(-Q(mu) u)`, with an aliasing estimate from doubling
/// the sample count.
pub fn fourier_transform<F>(f: F, q_values: &[Q], v: f64, modes: usize) -> Result<FourierCoeffs>
where
    F: Fn(C64) -> Result<Vec<C64>> + Sync,
{
    if modes < 2 {
        return Err(Error::Validation("need at least two Fourier samples".into()));
    }
    let a = dft_once(&f, q_values, v, modes)?;
    let b = dft_once(&f, q_values, v, 2 * modes)?;
    let mut aliasing: f64 = 0.0;
    let keep = (modes / 4) as i128;
    for mu in 0..a.len() {
        for (m, c) in &a[mu] {
            let n = (*m - q_values[mu]).to_integer();
            if n.abs() <= keep {
                let d = b[mu].iter().find(|(x, _)| x == m).map(|(_, y)| *y).unwrap();
                let damp = (-2.0 * PI * q_to_f(m) * v).exp();
                aliasing = aliasing.max(((c - d) * damp).norm());
            }
        }
    }
    Ok(FourierCoeffs { v, modes, entries: a, aliasing })
}

fn q_to_f(x: &Q) -> f64 {
    *x.numer() as f64 / *x.denom() as f64
}

/// Fourier coefficients of `E_L(tau, s; l)` at height `v`.
pub fn fourier_coeffs(
    ctx: &EisensteinContext,
    s: f64,
    l: i64,
    v: f64,
    modes: usize,
    method: EisMethod,
) -> Result<FourierCoeffs> {
    fourier_transform(|tau| Ok(ctx.eval(tau, s, l, method)?.value), ctx.q_values(), v, modes)
}

/// `d/ds E_L(tau, s; l)` at `s0` by Richardson-extrapolated central differences.
pub fn derivative_in_s(ctx: &EisensteinContext, tau: C64, l: i64, s0: f64, step: f64) -> Result<Derivative<Vec<C64>>> {
    let err = std::cell::RefCell::new(None);
    let d = richardson_derivative_vec(
        |s| match ctx.value(tau, s, l) {
            Ok(v) => v,
            Err(x) => {
                err.borrow_mut().get_or_insert(x);
                vec![C64::new(f64::NAN, 0.0); ctx.dim()]
            }
        },
        s0,
        step,
    );
    if let Some(x) = err.into_inner() {
        return Err(x);
    }
    Ok(d)
}

/// `Gamma_R(s) = pi^(-s/2) Gamma(s/2)`.
pub fn gamma_r(s: f64) -> f64 {
    PI.powf(-s / 2.0) * gamma(s / 2.0)
}

/// Shift `delta` in the archimedean factor `Gamma_R(s + delta)` of the
/// completed L-function of the quadratic character.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GammaFactor {
    /// `Gamma_R(s)`, the factor of an even character.
    Even,
    /// `Gamma_R(s + 1)`.
    Shifted,
}

/// `Lambda(s, eta) = d_K^(s/2) Gamma_R(s + delta) L(s, eta)`.
pub fn completed_l(f: &RealQuadraticField, s: f64, gf: GammaFactor) -> Result<f64> {
    let delta = match gf {
        GammaFactor::Even => 0.0,
        GammaFactor::Shifted => 1.0,
    };
    let l = kronecker_l_value(f.d_k, C64::new(s, 0.0))?.re;
    Ok((f.d_k as f64).powf(s / 2.0) * gamma_r(s + delta) * l)
}

/// Relative residual `|E*(tau, s) - E*(tau, -s)| / |E*(tau, s)|` of the
/// completed series `E*(tau, s) = Lambda(s + 1, eta) E(tau, s; 0)`.
pub fn completed_fe_residual(
    ctx: &EisensteinContext,
    f: &RealQuadraticField,
    tau: C64,
    s: f64,
    gf: GammaFactor,
) -> Result<f64> {
    let a = ctx.value(tau, s, 0)?;
    let b = ctx.value(tau, -s, 0)?;
    let la = completed_l(f, 1.0 + s, gf)?;
    let lb = completed_l(f, 1.0 - s, gf)?;
    let ea: Vec<C64> = a.iter().map(|x| x * la).collect();
    let eb: Vec<C64> = b.iter().map(|x| x * lb).collect();
    let scale = max_norm(&ea).max(1e-300);
    Ok(crate::numeric::max_diff(&ea, &eb) / scale)
}

/// `L_2 E(tau, s; 2)` with `L_2 = -2 i v^2 d/d(tau-bar)`, by Richardson central
/// differences in `u` and `v`.
pub fn lowered_weight_two(ctx: &EisensteinContext, tau: C64, s: f64) -> Result<Vec<C64>> {
    let h = 1e-3 * tau.im.min(1.0);
    let fu = |x: f64| -> Result<Vec<C64>> { ctx.value(C64::new(x, tau.im), s, 2) };
    let fv = |y: f64| -> Result<Vec<C64>> { ctx.value(C64::new(tau.re, y), s, 2) };
    let du = richardson_result(&fu, tau.re, h)?;
    let dv = richardson_result(&fv, tau.im, h)?;
    let v2 = tau.im * tau.im;
    Ok(du
        .iter()
        .zip(&dv)
        .map(|(a, b)| {
            // d/d(tau-bar) = (d/du + i d/dv) / 2.
            let dbar = (a + C64::new(0.0, 1.0) * b) * 0.5;
            C64::new(0.0, -2.0) * v2 * dbar
        })
        .collect())
}

fn richardson_result<F>(f: &F, x0: f64, h: f64) -> Result<Vec<C64>>
where
    F: Fn(f64) -> Result<Vec<C64>>,
{
    let fp = f(x0 + h)?;
    let fm = f(x0 - h)?;
    let fp2 = f(x0 + h / 2.0)?;
    let fm2 = f(x0 - h / 2.0)?;
    Ok((0..fp.len())
        .map(|i| {
            let d1 = (fp[i] - fm[i]) / (2.0 * h);
            let d2 = (fp2[i] - fm2[i]) / h;
            (d2 * 4.0 - d1) / 3.0
        })
        .collect())
}

/// `|| L_2 E(tau, s; 2) - (s - 1)/2 E(tau, s; 0) ||`.
pub fn lowering_residual(ctx: &EisensteinContext, tau: C64, s: f64) -> Result<f64> {
    let lhs = lowered_weight_two(ctx, tau, s)?;
    let e0 = ctx.value(tau, s, 0)?;
    let rhs: Vec<C64> = e0.iter().map(|x| x * (0.5 * (s - 1.0))).collect();
    Ok(crate::numeric::max_diff(&lhs, &rhs))
}

/// Largest `2 pi m v` at which a positive-mode coefficient is read off.
const KAPPA_MAX_GROWTH: f64 = 16.0;

/// Limit of `b(v) = kappa + a / v + ...` from the two largest heights, with the
/// change against the next pair as residual.
fn extrapolate_inverse_height(v: &[f64], b: &[f64]) -> (f64, f64) {
    let k = v.len();
    let pair = |i: usize, j: usize| (v[j] * b[j] - v[i] * b[i]) / (v[j] - v[i]);
    match k {
        0 => (f64::NAN, f64::INFINITY),
        1 => (b[0], f64::INFINITY),
        2 => (pair(0, 1), (b[1] - b[0]).abs()),
        _ => {
            let top = pair(k - 2, k - 1);
            (top, (top - pair(k - 3, k - 2)).abs())
        }
    }
}

/// One κ-coefficient with its per-height values.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KappaEntry {
    pub mu: usize,
    pub m_num: i128,
    pub m_den: i128,
    pub kappa: f64,
    /// Heights of the grid at which `b(mu, m, v)` is resolvable in double precision.
    pub heights: Vec<f64>,
    /// `b(mu, m, v)` (minus `log v` at `(0, 0)`) at those heights.
    pub values: Vec<f64>,
    /// Change of the extrapolated value when the largest height is dropped;
    /// infinite when fewer than two heights are usable.
    pub residual: f64,
}

/// κ-coefficients extracted from `d/ds E(tau, s; 2)` at `s = 0`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KappaTable {
    pub lattice_key: String,
    pub entries: Vec<KappaEntry>,
    pub v_grid: Vec<f64>,
}

impl KappaTable {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("kappa table serializes")
    }

    /// Entries whose values keep moving across the grid.
    pub fn unstable(&self, tol: f64) -> Vec<&KappaEntry> {
        self.entries.iter().filter(|e| e.residual > tol).collect()
    }

    /// Holomorphic part `sum kappa(mu, m) e(m tau) e_mu` as a q-expansion with
    /// exponents in `(1/denom) Z`.
    pub fn holomorphic_part(&self, q_values: Vec<Q>, denom: i64) -> Result<VectorQExpansion> {
        let mut out = VectorQExpansion::new(2.0, denom, q_values);
        for e in &self.entries {
            let n = Q::new(e.m_num, e.m_den) * Q::from_integer(denom as i128);
            if !n.is_integer() {
                return Err(Error::Validation(format!("exponent {}/{} is not in (1/{denom}) Z", e.m_num, e.m_den)));
            }
            out.add_coeff(e.mu, n.to_integer() as i64, C64::new(e.kappa, 0.0))?;
        }
        Ok(out)
    }
}

/// `b(mu, m, v)`: Fourier coefficients of `d/ds E(tau, s; 2)` at `s = 0`.
pub fn derivative_coeffs(ctx: &EisensteinContext, v: f64, modes: usize, step: f64) -> Result<FourierCoeffs> {
    fourier_transform(|tau| Ok(derivative_in_s(ctx, tau, 2, 0.0, step)?.value), ctx.q_values(), v, modes)
}

/// κ-table over the requested `(mu, m)` pairs and heights.
pub fn kappa_table(
    ctx: &EisensteinContext,
    lattice_key: &str,
    mu_m: &[(usize, Q)],
    v_grid: &[f64],
    modes: usize,
) -> Result<KappaTable> {
    if v_grid.len() < 2 {
        return Err(Error::Validation("κ extraction needs at least two heights".into()));
    }
    let per_v: Vec<FourierCoeffs> =
        v_grid.iter().map(|&v| derivative_coeffs(ctx, v, modes, 1e-3)).collect::<Result<_>>()?;
    let mut entries = vec![];
    for &(mu, m) in mu_m {
        if mu >= ctx.dim() {
            return Err(Error::Validation(format!("coset index {mu} out of range")));
        }
        let mf = q_to_f(&m);
        let mut heights = vec![];
        let mut values = vec![];
        for (fc, &v) in per_v.iter().zip(v_grid) {
            // Samples carry absolute errors near 1e-12; e(m tau) removes e^{-2 pi m v}.
            if 2.0 * PI * mf * v > KAPPA_MAX_GROWTH {
                continue;
            }
            let b = fc.get(mu, m).ok_or_else(|| {
                Error::Validation(format!("exponent {m} is not available for coset {mu} with {modes} modes"))
            })?;
            let sub = if mu == 0 && m == Q::from_integer(0) { v.ln() } else { 0.0 };
            heights.push(v);
            values.push(b.re - sub);
        }
        let (kappa, residual) = extrapolate_inverse_height(&heights, &values);
        entries.push(KappaEntry { mu, m_num: *m.numer(), m_den: *m.denom(), kappa, residual, heights, values });
    }
    Ok(KappaTable { lattice_key: lattice_key.to_string(), entries, v_grid: v_grid.to_vec() })
}

/// Outcome of the Siegel–Weil comparison.
#[derive(Clone, Debug, Serialize)]
pub struct SiegelWeilReport {
    pub d_k: i128,
    pub taus: Vec<(f64, f64)>,
    /// Constant `C` with `theta average = C E(tau, 0; 0)`, fitted at the first `tau`.
    pub fitted_constant: f64,
    /// Largest relative residual over the remaining points, all classes and cosets.
    pub residual: f64,
    /// Residual of each `tau` (the first is the fitting point).
    pub per_tau: Vec<f64>,
    pub quad_points: usize,
    /// Change of the averages when the node count is halved.
    pub quad_change: f64,
}

/// `v^(1/2)` times the average of `theta_{L_2}(tau, t)` over the geodesic
/// (uniform probability measure on the unit orbit) and over the class group
/// translates, for the class of `a`. Returns the averages at `nodes` and at
/// `nodes / 2` trapezoid points.
fn geodesic_theta_average(
    f: &RealQuadraticField,
    u: &UnitData,
    rcg: &RingClassGroup,
    class: usize,
    tau: C64,
    nodes: usize,
) -> Result<(Vec<C64>, Vec<C64>)> {
    let a = &rcg.reps[class];
    let (_, _, l2) = lattice_from_level(a, 1)?;
    let disc = dual_and_discriminant(&l2, crate::qspace::DEFAULT_MAX_DISC_ORDER)?;
    let perm = unit_permutation(f, u, &l2, &disc)?;
    let mut orbit = 1usize;
    let mut cur = perm.clone();
    while cur.iter().enumerate().any(|(i, &j)| i != j) {
        cur = cur.iter().map(|&j| perm[j]).collect();
        orbit += 1;
    }
    let (_, log_e1) = norm_one_unit(f, u, rcg.conductor)?;
    let length = 2.0 * log_e1 * orbit as f64;
    let dim = disc.order();
    let opts = ThetaOptions::default();
    let mut full = vec![CSum::new(); dim];
    let mut half = vec![CSum::new(); dim];
    for b in &rcg.reps {
        let g = genus_translate(&l2, &disc, b, dim.max(1))?;
        let gram = g.lattice.scaled_gram();
        let vals: Vec<Vec<C64>> = map_range(nodes, |j| {
            let t = length * j as f64 / nodes as f64;
            let maj = geodesic_majorant(&g.lattice, t)?;
            let th = theta_with_majorant(&gram, &g.disc, &maj, tau, &opts)?;
            Ok(g.map.iter().map(|&k| th.values[k]).collect())
        })
        .into_iter()
        .collect::<Result<_>>()?;
        for (j, row) in vals.iter().enumerate() {
            for mu in 0..dim {
                full[mu].add(row[mu]);
                if j % 2 == 0 {
                    half[mu].add(row[mu]);
                }
            }
        }
    }
    let sv = tau.im.sqrt();
    let nb = rcg.reps.len() as f64;
    let fin =
        |acc: Vec<CSum>, n: usize| -> Vec<C64> { acc.into_iter().map(|x| x.value() * sv / (n as f64 * nb)).collect() };
    Ok((fin(full, nodes), fin(half, nodes.div_ceil(2))))
}

/// Compares class-averaged geodesic theta integrals with `E_{L_2}(tau, 0; 0)`
/// for the given classes, fitting one constant at `taus[0]`.
pub fn siegel_weil_residual(
    f: &RealQuadraticField,
    u: &UnitData,
    rcg: &RingClassGroup,
    classes: &[usize],
    taus: &[C64],
    quad_points: usize,
) -> Result<SiegelWeilReport> {
    if taus.is_empty() || classes.is_empty() {
        return Err(Error::Validation("need at least one tau and one class".into()));
    }
    if quad_points < 4 {
        return Err(Error::Validation("need at least four quadrature points".into()));
    }
    // lhs[class][tau], rhs[class][tau].
    let mut lhs = vec![];
    let mut rhs = vec![];
    let mut quad_change: f64 = 0.0;
    for &c in classes {
        let a = rcg.reps.get(c).ok_or_else(|| Error::Validation(format!("class index {c} out of range")))?;
        let (_, _, l2) = lattice_from_level(a, 1)?;
        let disc = dual_and_discriminant(&l2, crate::qspace::DEFAULT_MAX_DISC_ORDER)?;
        let ctx = EisensteinContext::new(&disc)?;
        let mut lrow = vec![];
        let mut rrow = vec![];
        for &tau in taus {
            let (full, half) = geodesic_theta_average(f, u, rcg, c, tau, quad_points)?;
            quad_change = quad_change.max(crate::numeric::max_diff(&full, &half) / max_norm(&full));
            lrow.push(full);
            rrow.push(ctx.value(tau, 0.0, 0)?);
        }
        lhs.push(lrow);
        rhs.push(rrow);
    }
    // Least-squares constant over all classes and cosets at the first tau.
    let mut num = 0.0;
    let mut den = 0.0;
    for (lr, rr) in lhs.iter().zip(&rhs) {
        for (x, y) in lr[0].iter().zip(&rr[0]) {
            num += (y.conj() * x).re;
            den += y.norm_sqr();
        }
    }
    if den == 0.0 {
        return Err(Error::Numeric("Eisenstein values vanish at the fitting point".into()));
    }
    let c = num / den;
    let mut per_tau = vec![0.0; taus.len()];
    for (lr, rr) in lhs.iter().zip(&rhs) {
        for t in 0..taus.len() {
            let fitted: Vec<C64> = rr[t].iter().map(|y| y * c).collect();
            let r = crate::numeric::max_diff(&lr[t], &fitted) / max_norm(&fitted).max(1e-300);
            per_tau[t] = f64::max(per_tau[t], r);
        }
    }
    if quad_change > 1e-4 {
        return Err(Error::Numeric(format!(
            "geodesic quadrature has not converged (change {quad_change:e} on halving)"
        )));
    }
    Ok(SiegelWeilReport {
        d_k: f.d_k,
        taus: taus.iter().map(|t| (t.re, t.im)).collect(),
        fitted_constant: c,
        residual: per_tau[1..].iter().cloned().fold(0.0, f64::max),
        per_tau,
        quad_points,
        quad_change,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{bessel_k, max_diff, zeta};
    use crate::qspace::{discriminant_group, DEFAULT_MAX_DISC_ORDER};
    use crate::quadorder::{field_from_disc, fundamental_unit, ring_class_group};

    fn trivial_ctx() -> EisensteinContext {
        let d = discriminant_group(&vec![vec![0, 1], vec![1, 0]], 10).unwrap();
        EisensteinContext::new(&d).unwrap()
    }

    fn field_ctx(dk: i128) -> (RealQuadraticField, EisensteinContext) {
        let f = field_from_disc(dk).unwrap();
        let r = ring_class_group(&f, 1, 1).unwrap();
        let (_, _, l2) = lattice_from_level(&r.reps[0], 1).unwrap();
        let d = dual_and_discriminant(&l2, DEFAULT_MAX_DISC_ORDER).unwrap();
        (f, EisensteinContext::new(&d).unwrap())
    }

    /// `sum_{(m,n) != 0} v^w / |m tau + n|^(2w)` from its Fourier expansion in `u`
    /// (Bessel-K route).
    fn epstein_bessel(tau: C64, w: f64) -> f64 {
        let (u, v) = (tau.re, tau.im);
        let mut s = 2.0 * zeta(2.0 * w) * v.powf(w)
            + 2.0 * PI.sqrt() * gamma(w - 0.5) / gamma(w) * zeta(2.0 * w - 1.0) * v.powf(1.0 - w);
        for n in 1..60i64 {
            let sigma: f64 = (1..=n).filter(|d| n % d == 0).map(|d| (d as f64).powf(1.0 - 2.0 * w)).sum();
            s += 8.0 * PI.powf(w) * v.sqrt() / gamma(w)
                * (n as f64).powf(w - 0.5)
                * sigma
                * bessel_k(w - 0.5, 2.0 * PI * n as f64 * v)
                * (2.0 * PI * n as f64 * u).cos();
        }
        s
    }

    #[test]
    fn identity_coset_only() {
        let ctx = trivial_ctx();
        let tau = C64::new(0.3, 1.7);
        let e = ctx.eval(tau, 2.0, 0, EisMethod::GammaSum { trunc_c: 0 }).unwrap();
        assert!((e.value[0] - 1.7f64.powf(1.5)).norm() < 1e-14);
    }

    #[test]
    fn trivial_lattice_matches_epstein_oracle() {
        let ctx = trivial_ctx();
        let tau = C64::new(0.0, 1.0);
        let s = 2.0;
        let w = (s + 1.0) / 2.0;
        let oracle = epstein_bessel(tau, w) / (2.0 * zeta(s + 1.0));
        let cont = ctx.value(tau, s, 0).unwrap()[0];
        assert!((cont.re - oracle).abs() / oracle < 1e-10, "{cont} {oracle}");
        assert!(cont.im.abs() < 1e-12);
        let direct = ctx.eval(tau, s, 0, EisMethod::GammaSum { trunc_c: 400 }).unwrap();
        let rel = (direct.value[0].re - oracle).abs() / oracle;
        assert!(rel < direct.est_error, "{rel} {}", direct.est_error);
        // Off the imaginary axis and below the convergence line.
        for (tau, s) in [(C64::new(0.31, 0.8), 0.4), (C64::new(-0.2, 1.3), -0.35)] {
            let w = (s + 1.0) / 2.0;
            let oracle = epstein_bessel(tau, w) * inv_zeta(s) / 2.0;
            let cont = ctx.value(tau, s, 0).unwrap()[0];
            assert!((cont.re - oracle).abs() < 1e-10 * oracle.abs().max(1.0), "{cont} {oracle}");
        }
    }

    fn inv_zeta(s: f64) -> f64 {
        crate::numeric::inv_zeta_one_plus(s)
    }

    #[test]
    fn doubling_truncation_stays_within_estimate() {
        let (_, ctx) = field_ctx(5);
        let tau = C64::new(0.2, 1.1);
        let a = ctx.eval(tau, 3.0, 0, EisMethod::GammaSum { trunc_c: 60 }).unwrap();
        let b = ctx.eval(tau, 3.0, 0, EisMethod::GammaSum { trunc_c: 120 }).unwrap();
        assert!(max_diff(&a.value, &b.value) < a.est_error);
    }

    #[test]
    fn continued_route_matches_gamma_sum() {
        for dk in [5, 8] {
            let (_, ctx) = field_ctx(dk);
            for l in [0i64, 2] {
                let tau = C64::new(0.17, 0.93);
                let g = ctx.eval(tau, 4.0, l, EisMethod::GammaSum { trunc_c: 300 }).unwrap();
                let c = ctx.value(tau, 4.0, l).unwrap();
                let d = max_diff(&g.value, &c);
                assert!(d < 1e-7 && d < g.est_error.max(1e-9), "dk {dk} l {l}: {d}");
            }
        }
    }

    #[test]
    fn coset_table_matches_weil_action() {
        let (_, ctx) = field_ctx(8);
        let mut e0 = vec![C64::new(0.0, 0.0); ctx.dim()];
        e0[0] = C64::new(1.0, 0.0);
        for g in [[[2i128, 1], [5, 3]], [[1, 0], [7, 1]], [[-3, 2], [-5, 3]]] {
            let direct = ctx.weil.apply_gamma_inv(&g, &e0).unwrap();
            let table = ctx.coset_vector(g[1][0], g[1][1]).unwrap();
            assert!(max_diff(&direct, table) < 1e-12);
        }
    }

    #[test]
    fn modular_under_s() {
        let (_, ctx) = field_ctx(5);
        let tau = C64::new(0.21, 1.13);
        let st = -C64::new(1.0, 0.0) / tau;
        for (s, l) in [(0.3, 0i64), (0.3, 2), (2.0, 0)] {
            let a = ctx.value(st, s, l).unwrap();
            let b = ctx.weil.apply_s(&ctx.value(tau, s, l).unwrap());
            let b: Vec<C64> = b.iter().map(|x| x * tau.powi(l as i32)).collect();
            assert!(max_diff(&a, &b) < 1e-9, "s {s} l {l}: {}", max_diff(&a, &b));
        }
        // Γ-invariance of the γ-sum itself.
        let a = ctx.eval(st, 2.0, 0, EisMethod::GammaSum { trunc_c: 1500 }).unwrap();
        let b = ctx.eval(tau, 2.0, 0, EisMethod::GammaSum { trunc_c: 1500 }).unwrap();
        let sb = ctx.weil.apply_s(&b.value);
        assert!(max_diff(&a.value, &sb) < 1e-2 * max_norm(&sb).max(1.0));
    }

    #[test]
    fn fourier_constant_term_shape() {
        let ctx = trivial_ctx();
        let s = 0.4;
        // Constant term v^((s+1)/2) + c(s) v^((1-s)/2), fitted at two heights.
        let a = fourier_coeffs(&ctx, s, 0, 1.0, 16, EisMethod::Continued).unwrap();
        let b = fourier_coeffs(&ctx, s, 0, 2.0, 16, EisMethod::Continued).unwrap();
        let c = fourier_coeffs(&ctx, s, 0, 3.0, 16, EisMethod::Continued).unwrap();
        let z = Q::from_integer(0);
        let (a0, b0, c0) = (a.get(0, z).unwrap().re, b.get(0, z).unwrap().re, c.get(0, z).unwrap().re);
        let (p, q) = ((s + 1.0) / 2.0, (1.0 - s) / 2.0);
        // Solve x 1^p + y 1^q = a0 and x 2^p + y 2^q = b0.
        let det = 2f64.powf(q) - 2f64.powf(p);
        let x = (a0 * 2f64.powf(q) - b0) / det;
        let y = (b0 - a0 * 2f64.powf(p)) / det;
        assert!((x * 3f64.powf(p) + y * 3f64.powf(q) - c0).abs() < 1e-9);
        assert!((x - 1.0).abs() < 1e-9, "{x} {y}");
        assert!(a.aliasing < 1e-10);
        // Coefficients decay like e^{-2 pi |m| v}.
        let m3 = a.get(0, Q::from_integer(3)).unwrap().norm() * (-6.0 * PI).exp();
        assert!(m3 < 1e-6);
    }

    #[test]
    fn s_derivative_of_leading_power() {
        let ctx = trivial_ctx();
        // trunc_c = 0 gives exactly v^((s+1)/2).
        let v = 1.7f64;
        let d = richardson_derivative_vec(
            |s| ctx.eval(C64::new(0.0, v), s, 0, EisMethod::GammaSum { trunc_c: 0 }).unwrap().value,
            0.0,
            1e-3,
        );
        assert!((d.value[0].re - 0.5 * v.ln() * v.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn completed_functional_equation() {
        for dk in [5, 8] {
            let (f, ctx) = field_ctx(dk);
            for tau in [C64::new(0.0, 1.0), C64::new(0.5, 0.9)] {
                for s in [0.2, 0.3, 0.5] {
                    let r = completed_fe_residual(&ctx, &f, tau, s, GammaFactor::Even).unwrap();
                    assert!(r < 1e-8, "dk {dk} tau {tau} s {s}: {r}");
                    let r2 = completed_fe_residual(&ctx, &f, tau, -s, GammaFactor::Even).unwrap();
                    assert!((r2 - r).abs() < 1e-8 || r2 < 1e-8);
                }
                assert!(completed_fe_residual(&ctx, &f, tau, 0.0, GammaFactor::Even).unwrap() < 1e-15);
            }
        }
        // The shifted archimedean factor does not give a symmetric completion.
        let (f, ctx) = field_ctx(5);
        let r = completed_fe_residual(&ctx, &f, C64::new(0.0, 1.0), 0.3, GammaFactor::Shifted).unwrap();
        assert!(r > 1e-3);
    }

    #[test]
    fn lowering_identities() {
        let (_, ctx) = field_ctx(5);
        for tau in [C64::new(0.0, 1.0), C64::new(0.5, 0.9)] {
            for s in [0.0, 0.3, 1.0, 2.0] {
                let r = lowering_residual(&ctx, tau, s).unwrap();
                assert!(r < 1e-7, "tau {tau} s {s}: {r}");
            }
        }
    }

    #[test]
    fn derivative_at_zero_is_proportional_to_value() {
        // E*(s) even => E'(0) = -(Lambda'/Lambda)(1) E(0).
        let (f, ctx) = field_ctx(5);
        let tau = C64::new(0.0, 1.0);
        let d = derivative_in_s(&ctx, tau, 0, 0.0, 1e-3).unwrap();
        let e0 = ctx.value(tau, 0.0, 0).unwrap();
        let lam = |s: f64| completed_l(&f, s, GammaFactor::Even).unwrap();
        let ld = (lam(1.0 + 1e-4) - lam(1.0 - 1e-4)) / 2e-4 / lam(1.0);
        let pred: Vec<C64> = e0.iter().map(|x| x * (-ld)).collect();
        assert!(max_diff(&d.value, &pred) < 1e-6);
        assert!(max_norm(&d.value) > 1e-3);
    }

    #[test]
    fn kappa_extraction() {
        let (_, ctx) = field_ctx(5);
        let q = ctx.q_values().to_vec();
        let mu = (0..q.len()).find(|&m| q[m] == Q::new(1, 5)).unwrap();
        let list = [(mu, Q::new(1, 5)), (mu, Q::new(-4, 5)), (0, Q::from_integer(0))];
        let t = kappa_table(&ctx, "dk5", &list, &[2.0, 4.0, 8.0, 16.0], 16).unwrap();
        let pos = &t.entries[0];
        assert_eq!(pos.heights, vec![2.0, 4.0, 8.0]);
        assert!(pos.residual < 2e-2, "{pos:?}");
        assert!(pos.kappa > pos.values[2]);
        // Negative modes vanish in the limit.
        assert!(t.entries[1].kappa.abs() < 1e-8);
        // At weight 2 the constant term decays like v^(-1/2), so b(0,0,v) - log v
        // keeps drifting and the entry is reported as unstable.
        assert!(!t.unstable(1e-4).is_empty());
        assert!(t.unstable(1e-4).iter().any(|e| e.mu == 0 && e.m_num == 0));
        let h = t.holomorphic_part(q, 5).unwrap();
        assert!((h.get(mu, 1).re - pos.kappa).abs() < 1e-15);
        let back: KappaTable = serde_json::from_value(t.to_json()).unwrap();
        assert_eq!(back.entries.len(), 3);
    }

    #[test]
    fn siegel_weil_d5() {
        let f = field_from_disc(5).unwrap();
        let u = fundamental_unit(&f).unwrap();
        let r = ring_class_group(&f, 1, 1).unwrap();
        let taus = [C64::new(0.0, 1.0), C64::new(0.0, 2.0), C64::new(1.0, 0.8)];
        let rep = siegel_weil_residual(&f, &u, &r, &[0], &taus, 48).unwrap();
        assert!(rep.per_tau[0] < 1e-10);
        assert!(rep.residual < 1e-3, "{rep:?}");
    }
}
