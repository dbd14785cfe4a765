//! The regularized theta lift `Phi(f0, z, h)` of a weight-zero harmonic
//! Maass form against the Siegel theta function of a signature `(2, 2)`
//! lattice, its sums along closed geodesics, the constant-term pairing, the
//! assembly of the main formula's right-hand side, and Green-function
//! diagnostics.
//!
//! The truncated domain `F_T` is split at `v = 1`. On `[-1/2, 1/2] x [1, T]`
//! the `u`-integral is taken exactly on Fourier modes: a lattice point `x`
//! paired with the coefficient of `f0` at exponent `-Q(x)` contributes
//! `c exp(-a v) / v` to the `v`-integrand, with `a = 2 pi R(x, z)` for the
//! holomorphic part and `a = 2 pi (R(x, z) + 2 Q(x))` for the non-holomorphic
//! part, where `R = (M(x) - 2 Q(x)) / 2` and `M` is the majorant. Points with
//! `R = 0` produce the `A0 log T` divergence. The remaining piece
//! `{|u| <= 1/2, sqrt(1 - u^2) <= v <= 1}` is integrated pointwise by
//! Gauss–Legendre quadrature.
use crate::error::{Error, Result};
use crate::linalg::{IMat, Q};
use crate::numeric::{exp_int_e1, gauss_legendre_ab, CSum, KSum, C64};
use crate::par::map_range;
use crate::qspace::{DiscriminantGroup, LatticeModel};
use crate::quadorder::{FractionalIdeal, RealQuadraticField, UnitData};
use crate::theta::{
    enumerate_points, gaussian_tail_bound, genus_translate, geodesic_majorant, majorant_det, tube_majorant,
    tube_vector, unit_permutation, CosetPoint, TubePoint,
};
use crate::weilrep::{HarmonicMaassInput, VectorQExpansion};
use num_traits::Zero;
use serde::Serialize;
use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;

/// Points with `R(x, z)` below this (relative to `1 + M(x)`) lie in `z`-perp.
const PERP_TOL: f64 = 1e-11;

/// Lowest height of the fundamental domain.
const V_MIN: f64 = 0.866_025_403_784_438_6;

/// Where the Siegel theta function is evaluated.
#[derive(Clone, Copy, Debug)]
pub enum PointSource<'a> {
    /// A lattice in `(V_A, Q_A)` at a point of the tube domain `H x H`.
    Tube { lattice: &'a LatticeModel, disc: &'a DiscriminantGroup, z: TubePoint },
    /// `L1 + L2` with `L1` in `V1` at geodesic parameter `t1` and `L2` in
    /// `V2` at `t2`, optionally translated by the class of `h` on `V2` only.
    /// Cosets are indexed by `mu1 * |D2| + mu2`.
    Split {
        l1: &'a LatticeModel,
        d1: &'a DiscriminantGroup,
        t1: f64,
        l2: &'a LatticeModel,
        d2: &'a DiscriminantGroup,
        t2: f64,
        h: Option<&'a FractionalIdeal>,
    },
}

/// `-q mod 1` for each entry.
pub fn dual_q_values(q: &[Q]) -> Vec<Q> {
    q.iter()
        .map(|x| {
            let y = -*x;
            y - y.floor()
        })
        .collect()
}

/// Enumerated lattice points with the majorant used for tail bounds.
struct PointSet {
    points: Vec<CosetPoint>,
    majorant: Vec<Vec<f64>>,
}

fn block_diag(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let (n, m) = (a.len(), b.len());
    let mut out = vec![vec![0.0; n + m]; n + m];
    for i in 0..n {
        out[i][..n].copy_from_slice(&a[i]);
    }
    for i in 0..m {
        out[n + i][n..].copy_from_slice(&b[i]);
    }
    out
}

impl<'a> PointSource<'a> {
    /// Order of the discriminant group the input must live on.
    pub fn dim(&self) -> usize {
        match self {
            PointSource::Tube { disc, .. } => disc.order(),
            PointSource::Split { d1, d2, .. } => d1.order() * d2.order(),
        }
    }

    /// `Q(mu) mod 1` for each coset index.
    pub fn q_values(&self) -> Vec<Q> {
        match self {
            PointSource::Tube { disc, .. } => disc.q_values.clone(),
            PointSource::Split { d1, d2, .. } => {
                let mut out = Vec::with_capacity(d1.order() * d2.order());
                for a in &d1.q_values {
                    for b in &d2.q_values {
                        let s = *a + *b;
                        out.push(s - s.floor());
                    }
                }
                out
            }
        }
    }

    /// Coset data an input must carry: `-Q(mu) mod 1`, the dual of the theta type.
    pub fn input_q_values(&self) -> Vec<Q> {
        dual_q_values(&self.q_values())
    }

    fn majorant(&self) -> Result<Vec<Vec<f64>>> {
        match self {
            PointSource::Tube { lattice, z, .. } => tube_majorant(lattice, z),
            PointSource::Split { l1, t1, l2, t2, h, d2, .. } => {
                let m1 = geodesic_majorant(l1, *t1)?;
                let m2 = match h {
                    None => geodesic_majorant(l2, *t2)?,
                    Some(b) => {
                        let g = genus_translate(l2, d2, b, d2.order().max(1))?;
                        geodesic_majorant(&g.lattice, *t2)?
                    }
                };
                Ok(block_diag(&m1, &m2))
            }
        }
    }

    fn points(&self, radius: f64, max_points: usize, support: &[bool]) -> Result<PointSet> {
        match self {
            PointSource::Tube { lattice, disc, z } => {
                let maj = tube_majorant(lattice, z)?;
                let points = enumerate_points(&lattice.scaled_gram(), disc, &maj, radius, max_points, Some(support))?;
                Ok(PointSet { points, majorant: maj })
            }
            PointSource::Split { l1, d1, t1, l2, d2, t2, h } => {
                let n2 = d2.order();
                let mask1: Vec<bool> = (0..d1.order()).map(|a| (0..n2).any(|b| support[a * n2 + b])).collect();
                let mask2: Vec<bool> = (0..n2).map(|b| (0..d1.order()).any(|a| support[a * n2 + b])).collect();
                let m1 = geodesic_majorant(l1, *t1)?;
                let p1 = enumerate_points(&l1.scaled_gram(), d1, &m1, radius, max_points, Some(&mask1))?;
                let (m2, p2) = match h {
                    None => {
                        let m2 = geodesic_majorant(l2, *t2)?;
                        let p2 = enumerate_points(&l2.scaled_gram(), d2, &m2, radius, max_points, Some(&mask2))?;
                        (m2, p2)
                    }
                    Some(b) => {
                        let g = genus_translate(l2, d2, b, d2.order().max(1))?;
                        let mut inv = vec![0usize; g.map.len()];
                        for (mu, &j) in g.map.iter().enumerate() {
                            inv[j] = mu;
                        }
                        let m2 = geodesic_majorant(&g.lattice, *t2)?;
                        let mask: Vec<bool> = inv.iter().map(|&mu| mask2[mu]).collect();
                        let p2 =
                            enumerate_points(&g.lattice.scaled_gram(), &g.disc, &m2, radius, max_points, Some(&mask))?
                                .into_iter()
                                .map(|(j, q, m)| (inv[j], q, m))
                                .collect();
                        (m2, p2)
                    }
                };
                let r2 = radius * radius;
                let mut points = vec![];
                for &(a, qa, ma) in &p1 {
                    for &(b, qb, mb) in &p2 {
                        if ma + mb <= r2 && support[a * n2 + b] {
                            points.push((a * n2 + b, qa + qb, ma + mb));
                        }
                    }
                }
                if points.len() > max_points {
                    return Err(Error::Numeric(format!(
                        "split enumeration produced {} points (limit {max_points})",
                        points.len()
                    )));
                }
                Ok(PointSet { points, majorant: block_diag(&m1, &m2) })
            }
        }
    }
}

/// Quadrature and truncation controls for the lift.
#[derive(Clone, Debug)]
pub struct LiftOptions {
    /// Target for the neglected lattice tail.
    pub tol: f64,
    /// Gauss–Legendre nodes in `u` and `v` on the lower piece (doubled for the error estimate).
    pub n_u: usize,
    pub n_v: usize,
    pub max_points: usize,
    /// Truncation heights; the last two define the stability figure.
    pub t_grid: Vec<f64>,
    /// Two positive `s` values for the `CT_{s=0}` fit; empty to skip it.
    pub s_probe: Vec<f64>,
}

impl Default for LiftOptions {
    fn default() -> Self {
        Self { tol: 1e-12, n_u: 20, n_v: 12, max_points: 5_000_000, t_grid: vec![8.0, 16.0], s_probe: vec![1e-3, 2e-3] }
    }
}

/// Result of `reg_integral`.
#[derive(Clone, Debug, Serialize)]
pub struct LiftEvaluation {
    /// Limit `T -> infinity` of `int_{F_T} - A0 log T`: the strip modes are
    /// integrated to infinity in closed form (`c E1(a)`).
    pub value: f64,
    #[serde(rename = "A0")]
    pub a0: f64,
    #[serde(rename = "T_grid")]
    pub t_grid: Vec<f64>,
    /// `int_{F_T} - A0 log T` at each height.
    pub values: Vec<f64>,
    /// `|value(T_last) - value(T_prev)|`.
    pub stability: f64,
    /// Largest of the lower-piece doubling difference and the strip quadrature check.
    pub quad_error: f64,
    /// `CT_{s=0}` from the two-point Laurent fit, when requested.
    pub ct_value: Option<f64>,
    /// `|ct_value - value|`.
    pub ct_gap: Option<f64>,
    /// Largest imaginary part met (zero for real inputs).
    pub imag_part: f64,
    pub tail_bound: f64,
    pub points: usize,
    /// `|c(mu, m_top)| exp(-2 pi m_top sqrt(3)/2)` for the top stored exponent.
    pub expansion_weight: f64,
}

/// Coefficient lookups of an input by `(coset, exponent numerator)`.
struct Coeffs<'a> {
    f0: &'a HarmonicMaassInput,
    minus: HashMap<(usize, i64), C64>,
}

impl<'a> Coeffs<'a> {
    fn new(f0: &'a HarmonicMaassInput) -> Self {
        let mut minus = HashMap::new();
        for &(mu, n, c) in &f0.minus {
            *minus.entry((mu, n)).or_insert(C64::zero()) += c;
        }
        Self { f0, minus }
    }

    /// Exponent numerator `n` with `n / denom = -q`, if integral.
    fn exponent(&self, q: f64) -> Option<i64> {
        let d = self.f0.plus.denom as f64;
        let x = -q * d;
        let n = x.round();
        ((x - n).abs() < 1e-7).then_some(n as i64)
    }
}

fn check_input(f0: &HarmonicMaassInput, src: &PointSource) -> Result<()> {
    if f0.weight != 0.0 {
        return Err(Error::Validation(format!("the lift needs a weight-zero input, got weight {}", f0.weight)));
    }
    if f0.plus.dim() != src.dim() {
        return Err(Error::Validation(format!(
            "input has {} components, the lattice has {} cosets",
            f0.plus.dim(),
            src.dim()
        )));
    }
    if f0.plus.q_values != src.input_q_values() {
        return Err(Error::Validation(
            "input coset data must be -Q(mu) mod 1 of the lattice (the dual of the theta type)".into(),
        ));
    }
    Ok(())
}

/// Upper bounds for `|f0|` on the lower piece and for the per-point weight in the strip.
fn coefficient_weights(f0: &HarmonicMaassInput) -> (f64, f64, f64) {
    let d = f0.plus.denom as f64;
    let mut per_mu: BTreeMap<usize, f64> = BTreeMap::new();
    let mut w: f64 = 0.0;
    let mut top: BTreeMap<usize, (i64, f64)> = BTreeMap::new();
    for (&(mu, n), c) in &f0.plus.coeffs {
        let m = n as f64 / d;
        let vstar = if m > 0.0 { V_MIN } else { 1.0 };
        *per_mu.entry(mu).or_insert(0.0) += c.norm() * (-2.0 * PI * m * vstar).exp();
        w = w.max(c.norm() * (-2.0 * PI * m).exp());
        let e = top.entry(mu).or_insert((n, 0.0));
        if n >= e.0 {
            *e = (n, c.norm() * (-2.0 * PI * m * V_MIN).exp());
        }
    }
    for &(mu, _, c) in &f0.minus {
        *per_mu.entry(mu).or_insert(0.0) += c.norm();
        w = w.max(c.norm());
    }
    let fmax = per_mu.values().cloned().fold(0.0, f64::max);
    let expansion = top.values().map(|x| x.1).fold(0.0, f64::max);
    (fmax, w, expansion)
}

/// Strip terms `c exp(-a v)/v` and the `z`-perp total `A0`.
struct StripTerms {
    terms: Vec<(C64, f64)>,
    a0: C64,
}

fn strip_terms(co: &Coeffs, pts: &[CosetPoint]) -> StripTerms {
    let mut terms = vec![];
    let mut a0 = C64::zero();
    for &(mu, q, m) in pts {
        let Some(n) = co.exponent(q) else { continue };
        let r = ((m - 2.0 * q) / 2.0).max(0.0);
        let cp = co.f0.plus.get(mu, n);
        if cp != C64::zero() {
            if r < PERP_TOL * (1.0 + m) {
                a0 += cp;
            } else {
                terms.push((cp, 2.0 * PI * r));
            }
        }
        if n < 0 {
            if let Some(&cm) = co.minus.get(&(mu, n)) {
                terms.push((cm, 2.0 * PI * (r + 2.0 * q)));
            }
        }
    }
    StripTerms { terms, a0 }
}

/// `int_1^T exp(-a v) dv / v`.
fn e1_window(a: f64, t: f64) -> f64 {
    let hi = if a * t > 700.0 { 0.0 } else { exp_int_e1(a * t) };
    exp_int_e1(a) - hi
}

/// `int_1^infty exp(-a v) v^(-1-s) dv` by Gauss–Legendre on geometric panels.
fn e1_window_s(a: f64, s: f64) -> f64 {
    let (x, w) = gauss_legendre_ab(16, 0.0, 1.0);
    let mut acc = KSum::new();
    let mut lo = 1.0;
    let stop = (60.0 / a).max(2.0);
    while lo < stop {
        let hi = (lo * 1.5).min(lo + 4.0 / a).max(lo + 1e-3);
        for (xi, wi) in x.iter().zip(&w) {
            let v = lo + (hi - lo) * xi;
            acc.add(wi * (hi - lo) * (-a * v).exp() * v.powf(-1.0 - s));
        }
        lo = hi;
    }
    acc.value()
}

/// Pointwise lower piece: returns node values `(weight, v, integrand)`.
fn lower_piece(f0: &HarmonicMaassInput, pts: &[CosetPoint], n_u: usize, n_v: usize) -> Vec<(f64, f64, C64)> {
    let (xu, wu) = gauss_legendre_ab(n_u, -0.5, 0.5);
    let (xv, wv) = gauss_legendre_ab(n_v, 0.0, 1.0);
    let dim = f0.plus.dim();
    let nodes: Vec<(f64, f64, f64)> = xu
        .iter()
        .zip(&wu)
        .flat_map(|(&u, &wu)| {
            let lo = (1.0 - u * u).sqrt();
            let len = 1.0 - lo;
            xv.iter().zip(&wv).map(move |(&t, &wt)| (u, lo + len * t, wu * wt * len)).collect::<Vec<_>>()
        })
        .collect();
    map_range(nodes.len(), |k| {
        let (u, v, w) = nodes[k];
        let tau = C64::new(u, v);
        let f = f0.eval(tau);
        let mut th = vec![CSum::new(); dim];
        for &(mu, q, m) in pts {
            th[mu].add(C64::from_polar((-PI * v * m).exp(), 2.0 * PI * u * q));
        }
        let mut acc = CSum::new();
        for mu in 0..dim {
            acc.add(f[mu] * th[mu].value());
        }
        // <<f0, v theta>> dmu = <<f0, theta>> v^-1 du dv.
        (w, v, acc.value() / v)
    })
}

fn choose_radius(maj: &[Vec<f64>], weight: f64, tol: f64) -> Result<(f64, f64)> {
    let det = majorant_det(maj)?;
    let target = tol / weight.max(1e-300);
    let mut rad = ((target.recip().ln()).max(1.0) / (PI * V_MIN)).sqrt();
    let mut tail = gaussian_tail_bound(maj, det, V_MIN, rad);
    let mut guard = 0;
    while tail > target {
        rad *= 1.05;
        tail = gaussian_tail_bound(maj, det, V_MIN, rad);
        guard += 1;
        if guard > 400 {
            return Err(Error::Numeric("no enumeration radius meets the tail tolerance".into()));
        }
    }
    Ok((rad, tail * weight))
}

/// `CT_{s=0} lim_T int_{F_T} <<f0, theta>> v^-s dmu`. The truncated values
/// `int_{F_T} - A0 log T` are reported on a grid of heights, the limit is
/// taken in closed form on the strip, and the two-point Laurent fit in `s`
/// gives a second route when `s_probe` is set.
pub fn reg_integral(f0: &HarmonicMaassInput, src: &PointSource, opts: &LiftOptions) -> Result<LiftEvaluation> {
    check_input(f0, src)?;
    if opts.t_grid.is_empty() || opts.t_grid.iter().any(|&t| !(t >= 1.0)) {
        return Err(Error::Validation("truncation heights must be at least 1".into()));
    }
    let (fmax, w, expansion_weight) = coefficient_weights(f0);
    if fmax == 0.0 && w == 0.0 {
        return Ok(LiftEvaluation {
            value: 0.0,
            a0: 0.0,
            t_grid: opts.t_grid.clone(),
            values: vec![0.0; opts.t_grid.len()],
            stability: 0.0,
            quad_error: 0.0,
            ct_value: (!opts.s_probe.is_empty()).then_some(0.0),
            ct_gap: (!opts.s_probe.is_empty()).then_some(0.0),
            imag_part: 0.0,
            tail_bound: 0.0,
            points: 0,
            expansion_weight: 0.0,
        });
    }
    let maj = src.majorant()?;
    let (radius, tail_bound) = choose_radius(&maj, fmax + w, opts.tol)?;
    let mut support = vec![false; src.dim()];
    for (&(mu, _), c) in &f0.plus.coeffs {
        support[mu] |= *c != C64::zero();
    }
    for &(mu, _, c) in &f0.minus {
        support[mu] |= c != C64::zero();
    }
    let ps = src.points(radius, opts.max_points, &support)?;
    debug_assert_eq!(ps.majorant.len(), maj.len());
    let co = Coeffs::new(f0);
    let st = strip_terms(&co, &ps.points);

    // Lower piece at two resolutions.
    let coarse = lower_piece(f0, &ps.points, opts.n_u, opts.n_v);
    let fine = lower_piece(f0, &ps.points, 2 * opts.n_u, 2 * opts.n_v);
    let sum_nodes = |nodes: &[(f64, f64, C64)], s: f64| -> C64 {
        let mut acc = CSum::new();
        for &(wt, v, g) in nodes {
            acc.add(g * wt * v.powf(-s));
        }
        acc.value()
    };
    let lower = sum_nodes(&fine, 0.0);
    let lower_err = (lower - sum_nodes(&coarse, 0.0)).norm();

    // Strip in closed form and by quadrature at the top height.
    let strip = |t: f64| -> C64 {
        let mut acc = CSum::new();
        for &(c, a) in &st.terms {
            acc.add(c * e1_window(a, t));
        }
        acc.value()
    };
    let t_top = *opts.t_grid.last().expect("non-empty grid");
    let strip_quad = {
        let (x, wq) = gauss_legendre_ab(24, 0.0, 1.0);
        let mut acc = CSum::new();
        let mut lo = 1.0f64;
        while lo < t_top {
            let hi = (lo * 1.25).min(t_top);
            for (xi, wi) in x.iter().zip(&wq) {
                let v = lo + (hi - lo) * xi;
                let mut g = CSum::new();
                for &(c, a) in &st.terms {
                    g.add(c * (-a * v).exp());
                }
                acc.add(g.value() * (wi * (hi - lo) / v));
            }
            lo = hi;
        }
        acc.value()
    };
    let strip_top = strip(t_top);
    let strip_err = (strip_quad - strip_top).norm();

    let mut values = vec![];
    let mut imag: f64 = 0.0;
    for &t in &opts.t_grid {
        // The z-perp points give exactly A0 log T, which the subtraction removes.
        let v = lower + strip(t);
        imag = imag.max(v.im.abs());
        values.push(v.re);
    }
    let limit = {
        let mut acc = CSum::new();
        acc.add(lower);
        for &(c, a) in &st.terms {
            acc.add(c * exp_int_e1(a));
        }
        acc.value()
    };
    imag = imag.max(limit.im.abs());
    let value = limit.re;
    let stability = if values.len() >= 2 { (values[values.len() - 1] - values[values.len() - 2]).abs() } else { 0.0 };

    let (ct_value, ct_gap) = if opts.s_probe.len() >= 2 {
        let (s1, s2) = (opts.s_probe[0], opts.s_probe[1]);
        if !(s1 > 0.0 && s2 > 0.0 && s1 != s2) {
            return Err(Error::Validation("s_probe needs two distinct positive values".into()));
        }
        // G(s) = F(s) - A0/s, analytic at 0; linear extrapolation from s1, s2.
        let g = |s: f64| -> f64 {
            let mut acc = KSum::new();
            acc.add(sum_nodes(&fine, s).re);
            for &(c, a) in &st.terms {
                acc.add((c * e1_window_s(a, s)).re);
            }
            acc.value()
        };
        let (g1, g2) = (g(s1), g(s2));
        let ct = g1 - s1 * (g2 - g1) / (s2 - s1);
        (Some(ct), Some((ct - value).abs()))
    } else {
        (None, None)
    };

    Ok(LiftEvaluation {
        value,
        a0: st.a0.re,
        t_grid: opts.t_grid.clone(),
        values,
        stability,
        quad_error: lower_err.max(strip_err),
        ct_value,
        ct_gap,
        imag_part: imag,
        tail_bound,
        points: ps.points.len(),
        expansion_weight,
    })
}

/// `A0 = sum_mu sum_{x in mu + L1} c+(mu, -Q(x))` for a positive definite `L1`,
/// or `c+(0, 0)` for an anisotropic binary `L1` when no principal part is present.
pub fn a0_constant(f0: &HarmonicMaassInput, gram: &IMat, disc: &DiscriminantGroup) -> Result<f64> {
    if f0.plus.q_values != dual_q_values(&disc.q_values) {
        return Err(Error::Validation("input coset data must be -Q(mu) mod 1 of the lattice".into()));
    }
    let n = gram.len();
    let g: Vec<Vec<f64>> = gram.iter().map(|r| r.iter().map(|&x| x as f64).collect()).collect();
    let d = f0.plus.denom as f64;
    let principal: Vec<(usize, i64, C64)> =
        f0.plus.coeffs.iter().filter(|(&(_, k), c)| k < 0 && c.norm() > 0.0).map(|(&(mu, k), &c)| (mu, k, c)).collect();
    let c00 = f0.plus.get(0, 0).re;
    if majorant_det(&g).is_err() {
        let anisotropic_binary = n == 2 && {
            let disc2 = gram[0][1] * gram[0][1] - gram[0][0] * gram[1][1];
            disc2 <= 0 || crate::linalg::isqrt(disc2).pow(2) != disc2
        };
        if !anisotropic_binary {
            return Err(Error::Validation("A0 needs a positive definite or anisotropic binary lattice".into()));
        }
        if !principal.is_empty() {
            return Err(Error::Validation(
                "principal part meets infinitely many vectors of an indefinite lattice".into(),
            ));
        }
        return Ok(c00);
    }
    let top = principal.iter().map(|&(_, k, _)| -(k as f64) / d).fold(0.0, f64::max);
    // M = 2Q on a positive definite lattice.
    let radius = (2.0 * top + 1e-6).sqrt();
    let pts = enumerate_points(gram, disc, &g, radius.max(1e-3), 50_000_000, None)?;
    let mut a0 = KSum::new();
    for (mu, q, _) in pts {
        let x = -q * d;
        let k = x.round();
        if (x - k).abs() < 1e-7 {
            a0.add(f0.plus.get(mu, k as i64).re);
        }
    }
    Ok(a0.value())
}

/// Closed-geodesic average of the lift over the classes.
#[derive(Clone, Debug, Serialize)]
pub struct GeodesicSumReport {
    /// Per-class normalized averages at `quad_n`, `2 quad_n`, `4 quad_n` nodes.
    pub per_class: Vec<[f64; 3]>,
    pub total: f64,
    pub quad_n: usize,
    /// Length of the closed geodesic after the unit orbit on cosets closes.
    pub period: f64,
    /// `|S_n - S_2n| / |S_2n - S_4n|` (trapezoid on a periodic function: large or infinite).
    pub richardson_ratio: f64,
    pub change: f64,
    pub aut_weight: f64,
}

/// Data for `geodesic_sum`: `L1` at `t1`, and `L2` moved along its geodesic.
#[derive(Clone, Copy, Debug)]
pub struct GeodesicSetup<'a> {
    pub field: &'a RealQuadraticField,
    pub units: &'a UnitData,
    pub l1: &'a LatticeModel,
    pub d1: &'a DiscriminantGroup,
    pub t1: f64,
    pub l2: &'a LatticeModel,
    pub d2: &'a DiscriminantGroup,
}

fn permutation_order(perm: &[usize]) -> usize {
    let mut order = 1;
    let mut cur = perm.to_vec();
    while cur.iter().enumerate().any(|(i, &j)| i != j) {
        cur = cur.iter().map(|&j| perm[j]).collect();
        order += 1;
    }
    order
}

/// `Phi(f0, G(V2))`: for each class translate `h`, the trapezoid average of
/// `Phi(f0, z(t), h)` over one closed geodesic (normalized mass 1), weighted
/// by `aut_weight = 1/#Aut`, summed over classes.
pub fn geodesic_sum(
    f0s: &[HarmonicMaassInput],
    setup: &GeodesicSetup,
    classes: &[Option<FractionalIdeal>],
    quad_n: usize,
    aut_weight: f64,
    opts: &LiftOptions,
) -> Result<GeodesicSumReport> {
    if f0s.len() != classes.len() {
        return Err(Error::Validation("one input per class is required".into()));
    }
    if quad_n < 2 {
        return Err(Error::Validation("quad_n must be at least 2".into()));
    }
    let perm = unit_permutation(setup.field, setup.units, setup.l2, setup.d2)?;
    let k = permutation_order(&perm);
    let (_, log_e1) = crate::theta::norm_one_unit(setup.field, setup.units, setup.l2.ambient.ideal.conductor)?;
    let period = 2.0 * log_e1 * k as f64;
    let mut per_class = vec![];
    let mut lopts = opts.clone();
    lopts.s_probe.clear();
    for (f0, h) in f0s.iter().zip(classes) {
        let nmax = 4 * quad_n;
        let vals: Vec<f64> = (0..nmax)
            .map(|j| {
                let t = period * j as f64 / nmax as f64;
                let src = PointSource::Split {
                    l1: setup.l1,
                    d1: setup.d1,
                    t1: setup.t1,
                    l2: setup.l2,
                    d2: setup.d2,
                    t2: t,
                    h: h.as_ref(),
                };
                Ok(reg_integral(f0, &src, &lopts)?.value)
            })
            .collect::<Result<_>>()?;
        let avg = |step: usize| -> f64 {
            let mut acc = KSum::new();
            let mut cnt = 0;
            for j in (0..nmax).step_by(step) {
                acc.add(vals[j]);
                cnt += 1;
            }
            acc.value() / cnt as f64
        };
        per_class.push([avg(4), avg(2), avg(1)]);
    }
    let tot = |i: usize| per_class.iter().map(|r| r[i]).sum::<f64>() * aut_weight;
    let (s1, s2, s4) = (tot(0), tot(1), tot(2));
    let d12 = (s1 - s2).abs();
    let d24 = (s2 - s4).abs();
    let change = d24;
    if change > 1e-4 * s4.abs().max(1.0) {
        return Err(Error::Numeric(format!(
            "geodesic quadrature did not converge: doubling changed the sum by {change:.3e}"
        )));
    }
    Ok(GeodesicSumReport {
        per_class,
        total: s4,
        quad_n,
        period,
        richardson_ratio: if d24 > 0.0 { d12 / d24 } else { f64::INFINITY },
        change,
        aut_weight,
    })
}

/// The input carries coset data `-Q(mu)`, the two factors `+Q(mu_i)`.
/// `CT <<f0+, theta1+ (x) E>> = sum c+(mu1 + mu2, -(m1 + m2)) c_theta(mu1, m1) kappa(mu2, m2)`
/// with cosets of the split lattice indexed by `mu1 * |D2| + mu2`.
pub fn ct_pairing(f0_plus: &VectorQExpansion, theta1: &VectorQExpansion, e_table: &VectorQExpansion) -> Result<C64> {
    let (n1, n2) = (theta1.dim(), e_table.dim());
    if f0_plus.dim() != n1 * n2 {
        return Err(Error::Validation(format!(
            "coset mismatch: input has {} components, expected {} x {}",
            f0_plus.dim(),
            n1,
            n2
        )));
    }
    for a in 0..n1 {
        for b in 0..n2 {
            let s = -(theta1.q_values[a] + e_table.q_values[b]);
            if s - s.floor() != f0_plus.q_values[a * n2 + b] {
                return Err(Error::Validation(format!("coset matching failure at ({a}, {b}): Q values do not add up")));
            }
        }
    }
    let d0 = f0_plus.denom as i128;
    let mut acc = CSum::new();
    for (&(a, k1), c1) in &theta1.coeffs {
        for (&(b, k2), c2) in &e_table.coeffs {
            let m = Q::new(k1 as i128, theta1.denom as i128) + Q::new(k2 as i128, e_table.denom as i128);
            let n = -m * Q::from_integer(d0);
            if !n.is_integer() {
                continue;
            }
            let c0 = f0_plus.get(a * n2 + b, n.to_integer() as i64);
            if c0 != C64::zero() {
                acc.add(c0 * c1 * c2);
            }
        }
    }
    Ok(acc.value())
}

/// One class's contribution to the main formula.
#[derive(Clone, Debug, Serialize)]
pub struct ClassContribution {
    pub label: String,
    pub ct_pairing: C64,
    pub geodesic_term: f64,
}

/// Where the input family comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum FamilySource {
    /// Verified harmonic Maass preimages of the lifted newform.
    Preimage,
    /// Synthetic or unverified inputs.
    Synthetic,
}

/// Gap between the two sides, or the reason it is not computed.
#[derive(Clone, Debug, Serialize)]
#[serde(untagged)]
pub enum Gap {
    Value(f64),
    NotComputable(String),
}

/// Right-hand side of the main formula for one character.
#[derive(Clone, Debug, Serialize)]
pub struct MainFormulaReport {
    pub per_class: BTreeMap<String, (C64, f64)>,
    pub chi_sum: C64,
    /// `-sqrt(d_K) / (2 log eps_K h_K)`.
    pub prefactor: f64,
    /// `-L(1, eta) / 2`, the factor in the theorem form of the statement.
    pub theorem_prefactor: f64,
    pub rhs: C64,
    pub lhs: Option<C64>,
    pub gap: Gap,
    pub vol: f64,
}

/// `-sqrt(d_K) / (2 log eps_K h_K)`.
pub fn main_prefactor(f: &RealQuadraticField, u: &UnitData, h: usize) -> f64 {
    -(f.d_k as f64).sqrt() / (2.0 * u.eps_k_log * h as f64)
}

/// Assembles `prefactor * sum_A chi(A) (ct_A + vol/2 * geodesic_A)`.
pub fn main_formula_rhs(
    classes: &[ClassContribution],
    chi: &[C64],
    f: &RealQuadraticField,
    u: &UnitData,
    vol: f64,
    lhs: Option<C64>,
    source: FamilySource,
) -> Result<MainFormulaReport> {
    if classes.len() != chi.len() {
        return Err(Error::Validation(format!(
            "{} class contributions for {} character values",
            classes.len(),
            chi.len()
        )));
    }
    if classes.is_empty() {
        return Err(Error::Validation("missing class inputs".into()));
    }
    if !(vol > 0.0) {
        return Err(Error::Validation("vol(U_2) must be positive".into()));
    }
    let h = classes.len();
    let mut per_class = BTreeMap::new();
    let mut acc = CSum::new();
    for (c, x) in classes.iter().zip(chi) {
        per_class.insert(c.label.clone(), (c.ct_pairing, c.geodesic_term));
        acc.add(*x * (c.ct_pairing + vol / 2.0 * c.geodesic_term));
    }
    let chi_sum = acc.value();
    let prefactor = main_prefactor(f, u, h);
    let rhs = chi_sum * prefactor;
    let l1 = crate::lfunc::dirichlet_l(f, C64::new(1.0, 0.0))?.re;
    let gap = match (lhs, source) {
        (Some(l), FamilySource::Preimage) => Gap::Value((l - rhs).norm()),
        (None, _) => Gap::NotComputable("left side not evaluated".into()),
        (Some(_), FamilySource::Synthetic) => {
            Gap::NotComputable("the input family is not a verified set of harmonic Maass preimages".into())
        }
    };
    Ok(MainFormulaReport { per_class, chi_sum, prefactor, theorem_prefactor: -l1 / 2.0, rhs, lhs, gap, vol })
}

/// Slope of `Phi` against `log(distance^2)` when approaching a divisor.
#[derive(Clone, Debug, Serialize)]
pub struct SlopeFit {
    pub distances: Vec<f64>,
    pub values: Vec<f64>,
    /// Least-squares slope over all distances.
    pub slope: f64,
    /// Slopes between consecutive distances.
    pub pair_slopes: Vec<f64>,
    /// Spread of the pair slopes.
    pub instability: f64,
}

/// Fits `Phi(delta) = slope * log(delta^2) + b`.
pub fn divisor_slope<F>(phi_at: F, deltas: &[f64]) -> Result<SlopeFit>
where
    F: Fn(f64) -> Result<f64>,
{
    if deltas.len() < 2 {
        return Err(Error::Validation("at least two distances are needed".into()));
    }
    let values: Vec<f64> = deltas.iter().map(|&d| phi_at(d)).collect::<Result<_>>()?;
    let xs: Vec<f64> = deltas.iter().map(|d| (d * d).ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = values.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&values).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    let pair_slopes: Vec<f64> = (1..xs.len()).map(|i| (values[i] - values[i - 1]) / (xs[i] - xs[i - 1])).collect();
    let lo = pair_slopes.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = pair_slopes.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let instability = hi - lo;
    if !instability.is_finite() || instability > 0.5 {
        return Err(Error::Numeric(format!("divisor slope fit unstable: pair slopes {pair_slopes:?}")));
    }
    Ok(SlopeFit { distances: deltas.to_vec(), values, slope, pair_slopes, instability })
}

/// `Delta_z Phi` at a tube point with `Delta_z = (1/4) sum_j y_j^2 (d^2/dx_j^2 + d^2/dy_j^2)`,
/// by 5-point stencils in each factor with Richardson extrapolation.
#[derive(Clone, Debug, Serialize)]
pub struct LaplacianPoint {
    pub z: [(f64, f64); 2],
    pub phi: f64,
    pub laplacian: f64,
    /// `Delta Phi / Phi`.
    pub ratio: f64,
}

pub fn tube_laplacian(
    f0: &HarmonicMaassInput,
    lattice: &LatticeModel,
    disc: &DiscriminantGroup,
    z: TubePoint,
    rel_step: f64,
    opts: &LiftOptions,
) -> Result<LaplacianPoint> {
    let mut lopts = opts.clone();
    lopts.s_probe.clear();
    let phi = |z1: C64, z2: C64| -> Result<f64> {
        let src = PointSource::Tube { lattice, disc, z: TubePoint::new(z1, z2)? };
        Ok(reg_integral(f0, &src, &lopts)?.value)
    };
    let p0 = phi(z.z1, z.z2)?;
    let stencil = |h1: f64, h2: f64| -> Result<f64> {
        let mut total = 0.0;
        for (j, h) in [(0usize, h1), (1usize, h2)] {
            let mut s = -4.0 * p0;
            for d in [C64::new(h, 0.0), C64::new(-h, 0.0), C64::new(0.0, h), C64::new(0.0, -h)] {
                let (a, b) = if j == 0 { (z.z1 + d, z.z2) } else { (z.z1, z.z2 + d) };
                s += phi(a, b)?;
            }
            let y = if j == 0 { z.z1.im } else { z.z2.im };
            total += 0.25 * y * y * s / (h * h);
        }
        Ok(total)
    };
    let (h1, h2) = (rel_step * z.z1.im, rel_step * z.z2.im);
    let l1 = stencil(h1, h2)?;
    let l2 = stencil(h1 / 2.0, h2 / 2.0)?;
    let lap = (4.0 * l2 - l1) / 3.0;
    Ok(LaplacianPoint { z: [(z.z1.re, z.z1.im), (z.z2.re, z.z2.im)], phi: p0, laplacian: lap, ratio: lap / p0 })
}

/// Green-function diagnostics: divisor slope and Laplacian checks.
#[derive(Clone, Debug, Serialize)]
pub struct GreenReport {
    pub slope: Option<SlopeFit>,
    pub laplacian: Vec<LaplacianPoint>,
    /// `c+(0, 0) / 2`.
    pub predicted: f64,
    /// `max |Delta Phi - c+(0,0)/2|`: the Laplacian is constant.
    pub constant_gap: f64,
    /// `max |Delta Phi / Phi - c+(0,0)/2|`: eigenfunction reading.
    pub eigen_gap: f64,
}

/// Approach to a divisor: `z(delta) = base + delta * direction` in tube coordinates.
#[derive(Clone, Copy, Debug)]
pub struct DivisorApproach {
    pub base: TubePoint,
    pub direction: (C64, C64),
}

pub fn green_diagnostics(
    f0: &HarmonicMaassInput,
    lattice: &LatticeModel,
    disc: &DiscriminantGroup,
    divisor: Option<(DivisorApproach, &[f64])>,
    generic: &[TubePoint],
    opts: &LiftOptions,
) -> Result<GreenReport> {
    let mut lopts = opts.clone();
    lopts.s_probe.clear();
    let slope = match divisor {
        None => None,
        Some((ap, deltas)) => Some(divisor_slope(
            |d| {
                let z = TubePoint::new(ap.base.z1 + ap.direction.0 * d, ap.base.z2 + ap.direction.1 * d)?;
                let src = PointSource::Tube { lattice, disc, z };
                Ok(reg_integral(f0, &src, &lopts)?.value)
            },
            deltas,
        )?),
    };
    let laplacian: Vec<LaplacianPoint> =
        generic.iter().map(|z| tube_laplacian(f0, lattice, disc, *z, 0.02, &lopts)).collect::<Result<_>>()?;
    let predicted = f0.plus.get(0, 0).re / 2.0;
    let constant_gap = laplacian.iter().map(|p| (p.laplacian - predicted).abs()).fold(0.0, f64::max);
    let eigen_gap = laplacian.iter().map(|p| (p.ratio - predicted).abs()).fold(0.0, f64::max);
    Ok(GreenReport { slope, laplacian, predicted, constant_gap, eigen_gap })
}

/// Tube point `z2` with `x` orthogonal to `w(z1, z2)`: a point of the
/// special divisor of a vector `x` (ambient coordinates) with `Q(x) > 0`.
pub fn divisor_partner(lattice: &LatticeModel, x: &[f64], z1: C64) -> Result<TubePoint> {
    let a = &lattice.ambient.ideal;
    let g: Vec<Vec<f64>> =
        lattice.ambient.gram.iter().map(|r| r.iter().map(|v| crate::quadorder::q_to_f64(*v)).collect()).collect();
    let pair = |w: &[C64]| -> C64 {
        let mut acc = C64::zero();
        for i in 0..4 {
            for j in 0..4 {
                acc += w[j] * (x[i] * g[i][j]);
            }
        }
        acc
    };
    // (x, w(z1, z2)) = alpha + beta z2 is affine in z2 for fixed z1.
    let p0 = pair(&tube_vector(a, &TubePoint::new(z1, C64::new(0.0, 1.0))?)?);
    let p1 = pair(&tube_vector(a, &TubePoint::new(z1, C64::new(1.0, 1.0))?)?);
    let beta = p1 - p0;
    if beta.norm() < 1e-14 {
        return Err(Error::Numeric("divisor does not meet this z1 slice".into()));
    }
    let alpha = p0 - beta * C64::new(0.0, 1.0);
    let z2 = -alpha / beta;
    TubePoint::new(z1, z2)
}

/// Coefficients of `j - 744` from `q^-1` through `q^n_max` (index 0 is
/// `q^-1`), from `E4^3 / Delta` in exact integer arithmetic.
pub fn j_coefficients(n_max: usize) -> Result<Vec<i128>> {
    let len = n_max + 2;
    let overflow = || Error::Overflow(format!("j coefficients through q^{n_max} exceed i128"));
    let mut e4 = vec![0i128; len];
    e4[0] = 1;
    for n in 1..len {
        let s: i128 = (1..=n).filter(|d| n % d == 0).map(|d| (d as i128).pow(3)).sum();
        e4[n] = 240 * s;
    }
    let mul = |a: &[i128], b: &[i128]| -> Result<Vec<i128>> {
        let mut c = vec![0i128; len];
        for i in 0..len {
            for j in 0..len - i {
                let t = a[i].checked_mul(b[j]).ok_or_else(overflow)?;
                c[i + j] = c[i + j].checked_add(t).ok_or_else(overflow)?;
            }
        }
        Ok(c)
    };
    let e4c = mul(&mul(&e4, &e4)?, &e4)?;
    // prod (1 - q^n)^24 and its power-series inverse.
    let mut p = vec![0i128; len];
    p[0] = 1;
    for n in 1..len {
        for _ in 0..24 {
            for k in (n..len).rev() {
                p[k] -= p[k - n];
            }
        }
    }
    let mut inv = vec![0i128; len];
    inv[0] = 1;
    for k in 1..len {
        let mut s = 0i128;
        for j in 1..=k {
            s = s.checked_add(p[j].checked_mul(inv[k - j]).ok_or_else(overflow)?).ok_or_else(overflow)?;
        }
        inv[k] = -s;
    }
    let mut j = mul(&e4c, &inv)?;
    j[1] -= 744;
    Ok(j)
}

/// `j(z)` evaluated numerically as `E4(z)^3 / eta(z)^24`.
pub fn klein_j(z: C64) -> C64 {
    let q = (C64::new(0.0, 2.0 * PI) * z).exp();
    let mut e4 = C64::new(1.0, 0.0);
    let mut prod = C64::new(1.0, 0.0);
    let mut qn = q;
    for n in 1..400u64 {
        let s3: f64 = (1..=n).filter(|d| n % d == 0).map(|d| (d as f64).powi(3)).sum();
        e4 += qn * (240.0 * s3);
        prod *= C64::new(1.0, 0.0) - qn;
        qn *= q;
        if qn.norm() < 1e-30 {
            break;
        }
    }
    e4 * e4 * e4 / (q * prod.powu(24))
}

/// `M_2(Z)` with `Q = det` (even unimodular of signature `(2, 2)`) placed in
/// `(V_A, Q_A)` for `Q(sqrt 5)`: the lattice on which the lift of `j - 744` is
/// `-4 log |j(z1) - j(z2)|`.
pub fn unimodular_tube_lattice() -> Result<(LatticeModel, DiscriminantGroup)> {
    let f = crate::quadorder::field_from_disc(5)?;
    let r = crate::quadorder::ring_class_group(&f, 1, 1)?;
    let lat = crate::qspace::eichler_lattice(&r.reps[0], 1)?;
    let disc = crate::qspace::dual_and_discriminant(&lat, crate::qspace::DEFAULT_MAX_DISC_ORDER)?;
    Ok((lat, disc))
}

/// The weight-zero input `j - 744` on the zero coset of a discriminant group.
pub fn j_input_on(disc: &DiscriminantGroup, n_max: usize) -> Result<HarmonicMaassInput> {
    let mut p = VectorQExpansion::new(0.0, 1, dual_q_values(&disc.q_values));
    for (k, c) in j_coefficients(n_max)?.iter().enumerate() {
        if *c != 0 {
            p.add_coeff(0, k as i64 - 1, C64::new(*c as f64, 0.0))?;
        }
    }
    HarmonicMaassInput::new(p, vec![])
}

/// The constant input `c 1_0` with the given (input-side) coset data.
pub fn constant_input_on(q_values: &[Q], denom: i64, c: f64) -> Result<HarmonicMaassInput> {
    let mut p = VectorQExpansion::new(0.0, denom, q_values.to_vec());
    p.add_coeff(0, 0, C64::new(c, 0.0))?;
    HarmonicMaassInput::new(p, vec![])
}

/// `theta+_{L1} = 1_0 + sum_{mu, m > 0} r(mu, m) q^m 1_mu` for a rank-2 lattice in
/// `V1` or `V2`, with representation numbers taken modulo the coset stabilizers.
pub fn theta_plus_series(
    f: &RealQuadraticField,
    u: &UnitData,
    l: &LatticeModel,
    disc: &DiscriminantGroup,
    m_max: i128,
) -> Result<VectorQExpansion> {
    let denom = disc.level() as i64;
    let mut out = VectorQExpansion::new(1.0, denom, disc.q_values.clone());
    out.add_coeff(0, 0, C64::new(1.0, 0.0))?;
    for mu in 0..disc.order() {
        let t = crate::theta::rep_counts_coset(f, u, l, disc, mu, Q::from_integer(m_max))?;
        for (m, c) in &t.entries {
            let n = *m * Q::from_integer(denom as i128);
            if !n.is_integer() {
                return Err(Error::Validation(format!("exponent {m} is not in (1/{denom}) Z")));
            }
            if *c != 0 {
                out.add_coeff(mu, n.to_integer() as i64, C64::new(*c as f64, 0.0))?;
            }
        }
    }
    Ok(out)
}

/// Settings for the synthetic main-formula family.
#[derive(Clone, Debug)]
pub struct SyntheticOptions {
    /// Constant term `c+(0, 0)` of the input on every class.
    pub c0: f64,
    /// Trapezoid nodes of the coarsest geodesic rule.
    pub quad_n: usize,
    /// `#Aut` weight of each geodesic.
    pub aut_weight: f64,
    /// Largest exponent of the `L1` theta series.
    pub theta_m_max: i128,
    /// Heights and Fourier modes for the κ-coefficients of `L2`.
    pub kappa_heights: Vec<f64>,
    pub kappa_modes: usize,
    /// A κ-entry counts as stable when its extrapolation moved by less than this.
    pub kappa_tol: f64,
    pub lift: LiftOptions,
}

impl Default for SyntheticOptions {
    fn default() -> Self {
        Self {
            c0: 1.0,
            quad_n: 8,
            aut_weight: 0.5,
            theta_m_max: 2,
            kappa_heights: vec![2.0, 4.0, 8.0, 16.0],
            kappa_modes: 16,
            kappa_tol: 1e-4,
            lift: LiftOptions { s_probe: vec![], ..Default::default() },
        }
    }
}

/// Per-class inputs of the main formula for the synthetic family, with the
/// diagnostics behind each number.
#[derive(Clone, Debug, Serialize)]
pub struct SyntheticFamily {
    pub classes: Vec<ClassContribution>,
    pub geodesic: Vec<GeodesicSumReport>,
    /// κ-entries that did not stabilize, as `class:mu:m`.
    pub kappa_unstable: Vec<String>,
    pub warnings: Vec<String>,
}

/// The constant input `c0 1_0` on `L_A = L_{A,1} + L_{A,2}` for every class `A`
/// of the maximal order: the constant-term pairing against
/// `theta+_{L_{A,1}} (x) E_{L_{A,2}}` and the geodesic sum over all class
/// translates of `L_{A,2}`.
pub fn synthetic_family(
    f: &RealQuadraticField,
    u: &UnitData,
    rcg: &crate::quadorder::RingClassGroup,
    opts: &SyntheticOptions,
) -> Result<SyntheticFamily> {
    if rcg.conductor != 1 {
        return Err(Error::Validation("the synthetic family is set up for the maximal order".into()));
    }
    let mut classes = vec![];
    let mut geodesic = vec![];
    let mut kappa_unstable = vec![];
    let mut warnings = vec![];
    let translates: Vec<Option<FractionalIdeal>> =
        (0..rcg.order()).map(|k| if k == rcg.identity() { None } else { Some(rcg.reps[k].clone()) }).collect();
    for (k, a) in rcg.reps.iter().enumerate() {
        let label = rcg.labels[k].to_string();
        let (_, l1, l2) = crate::qspace::lattice_from_level(a, 1)?;
        let max = crate::qspace::DEFAULT_MAX_DISC_ORDER;
        let d1 = crate::qspace::dual_and_discriminant(&l1, max)?;
        let d2 = crate::qspace::dual_and_discriminant(&l2, max)?;
        let src = PointSource::Split { l1: &l1, d1: &d1, t1: 0.0, l2: &l2, d2: &d2, t2: 0.0, h: None };
        let den = (d1.level() * d2.level()) as i64;
        let f0 = constant_input_on(&src.input_q_values(), den, opts.c0)?;
        // Constant-term pairing.
        let theta1 = theta_plus_series(f, u, &l1, &d1, opts.theta_m_max)?;
        let mut pairs = vec![];
        for &(mu1, k1) in theta1.coeffs.keys() {
            if mu1 != 0 {
                continue;
            }
            pairs.push((0usize, -Q::new(k1 as i128, theta1.denom as i128)));
        }
        let ctx = crate::eisenstein::EisensteinContext::new(&d2)?;
        let kt = crate::eisenstein::kappa_table(&ctx, &label, &pairs, &opts.kappa_heights, opts.kappa_modes)?;
        for e in kt.unstable(opts.kappa_tol) {
            kappa_unstable.push(format!("{label}:{}:{}/{}", e.mu, e.m_num, e.m_den));
        }
        let e_table = kt.holomorphic_part(d2.q_values.clone(), d2.level() as i64)?;
        let ct = ct_pairing(&f0.plus, &theta1, &e_table)?;
        // Geodesic sum over the class translates.
        let setup = GeodesicSetup { field: f, units: u, l1: &l1, d1: &d1, t1: 0.0, l2: &l2, d2: &d2 };
        let inputs = vec![f0.clone(); translates.len()];
        let g = geodesic_sum(&inputs, &setup, &translates, opts.quad_n, opts.aut_weight, &opts.lift)?;
        classes.push(ClassContribution { label, ct_pairing: ct, geodesic_term: g.total });
        geodesic.push(g);
    }
    if !kappa_unstable.is_empty() {
        warnings.push(format!(
            "{} κ-coefficients did not stabilize; the constant-term pairing uses their last extrapolation",
            kappa_unstable.len()
        ));
    }
    Ok(SyntheticFamily { classes, geodesic, kappa_unstable, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qspace::{dual_and_discriminant, lattice_from_level};
    use crate::quadorder::{field_from_disc, fundamental_unit, ring_class_group};

    fn eta(z: C64) -> C64 {
        let q = (C64::new(0.0, 2.0 * PI) * z).exp();
        let mut p = (C64::new(0.0, 2.0 * PI / 24.0) * z).exp();
        let mut qn = q;
        for _ in 0..200 {
            p *= C64::new(1.0, 0.0) - qn;
            qn *= q;
        }
        p
    }

    struct Unimodular {
        lat: LatticeModel,
        disc: DiscriminantGroup,
    }

    fn unimodular() -> Unimodular {
        let (lat, disc) = unimodular_tube_lattice().unwrap();
        Unimodular { lat, disc }
    }

    fn j_input(disc: &DiscriminantGroup, n_max: usize) -> HarmonicMaassInput {
        j_input_on(disc, n_max).unwrap()
    }

    fn constant_input(disc: &DiscriminantGroup, c: f64) -> HarmonicMaassInput {
        constant_input_on(&dual_q_values(&disc.q_values), 1, c).unwrap()
    }

    fn tz(a: (f64, f64), b: (f64, f64)) -> TubePoint {
        TubePoint::new(C64::new(a.0, a.1), C64::new(b.0, b.1)).unwrap()
    }

    #[test]
    fn j_coefficients_and_special_values() {
        let c = j_coefficients(4).unwrap();
        assert_eq!(c, vec![1, 0, 196_884, 21_493_760, 864_299_970, 20_245_856_256]);
        assert!((klein_j(C64::new(0.0, 1.0)) - 1728.0).norm() < 1e-8);
        let rho = C64::new(-0.5, 3f64.sqrt() / 2.0);
        assert!(klein_j(rho).norm() < 1e-8);
        // The series and the product agree away from the special points.
        let z = C64::new(0.21, 1.1);
        let q = (C64::new(0.0, 2.0 * PI) * z).exp();
        let c = j_coefficients(28).unwrap();
        let series: C64 = c.iter().enumerate().map(|(k, a)| q.powi(k as i32 - 1) * (*a as f64)).sum();
        assert!((series + 744.0 - klein_j(z)).norm() < 1e-6 * klein_j(z).norm());
        assert!(j_coefficients(200).is_err());
    }

    #[test]
    fn zero_input_gives_zero() {
        let m = unimodular();
        let mut p = VectorQExpansion::new(0.0, 1, dual_q_values(&m.disc.q_values));
        p.add_coeff(0, 0, C64::zero()).unwrap();
        let f0 = HarmonicMaassInput::new(p, vec![]).unwrap();
        let src = PointSource::Tube { lattice: &m.lat, disc: &m.disc, z: tz((0.1, 1.2), (0.3, 0.9)) };
        let r = reg_integral(&f0, &src, &LiftOptions::default()).unwrap();
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn j_input_reproduces_the_borcherds_product() {
        let m = unimodular();
        assert_eq!(m.disc.order(), 1);
        let f0 = j_input(&m.disc, 24);
        for (a, b) in [((0.1, 1.2), (0.3, 0.9)), ((-0.37, 0.8), (0.21, 1.7))] {
            let z = tz(a, b);
            let src = PointSource::Tube { lattice: &m.lat, disc: &m.disc, z };
            let r = reg_integral(&f0, &src, &LiftOptions::default()).unwrap();
            let oracle = -4.0 * (klein_j(z.z1) - klein_j(z.z2)).norm().ln();
            assert!((r.value - oracle).abs() < 1e-7, "{} vs {oracle}", r.value);
            assert!((r.values[1] - r.value).abs() < 1e-2);
            assert_eq!(r.a0, 0.0);
            assert!(r.quad_error < 1e-8, "{}", r.quad_error);
        }
    }

    #[test]
    fn truncation_is_stable_away_from_divisors() {
        let m = unimodular();
        let f0 = j_input(&m.disc, 24);
        let src = PointSource::Tube { lattice: &m.lat, disc: &m.disc, z: tz((0.1, 2.5), (-0.2, 0.9)) };
        let r = reg_integral(&f0, &src, &LiftOptions::default()).unwrap();
        assert!(r.stability < 1e-4, "{}", r.stability);
        assert!((r.values[1] - r.value).abs() < 1e-5);
    }

    #[test]
    fn constant_input_matches_the_eta_shape() {
        let m = unimodular();
        let f0 = constant_input(&m.disc, 2.0);
        let shape = |z: &TubePoint| -> f64 { -2.0 * (z.z1.im * z.z2.im * (eta(z.z1) * eta(z.z2)).norm().powi(4)).ln() };
        let pts = [tz((0.1, 1.2), (0.3, 0.9)), tz((-0.2, 1.5), (0.45, 1.1)), tz((0.0, 2.0), (0.1, 0.95))];
        let mut diffs = vec![];
        for z in &pts {
            let src = PointSource::Tube { lattice: &m.lat, disc: &m.disc, z: *z };
            let r = reg_integral(&f0, &src, &LiftOptions::default()).unwrap();
            assert!((r.a0 - 2.0).abs() < 1e-12);
            let ct = r.ct_value.unwrap();
            assert!((ct - r.value).abs() < 1e-4, "{ct} vs {}", r.value);
            diffs.push(r.value - shape(z));
        }
        for d in &diffs[1..] {
            assert!((d - diffs[0]).abs() < 1e-7, "{diffs:?}");
        }
    }

    #[test]
    fn lift_is_invariant_under_the_modular_group() {
        let m = unimodular();
        let f0 = j_input(&m.disc, 24);
        let z = tz((0.1, 1.2), (0.3, 0.9));
        // S acting on z1 moves it outside the usual range but stays in H.
        let z1s = -z.z1.inv();
        let z2t = z.z2 + 1.0;
        let a = reg_integral(&f0, &PointSource::Tube { lattice: &m.lat, disc: &m.disc, z }, &LiftOptions::default())
            .unwrap();
        let b = reg_integral(
            &f0,
            &PointSource::Tube { lattice: &m.lat, disc: &m.disc, z: TubePoint::new(z1s, z2t).unwrap() },
            &LiftOptions::default(),
        )
        .unwrap();
        assert!((a.value - b.value).abs() < 1e-5);
    }

    #[test]
    fn green_function_diagnostics() {
        let m = unimodular();
        let f0 = j_input(&m.disc, 24);
        // The identity matrix has Q = 1; its divisor is the diagonal.
        let phi = crate::qspace::m2_isometry(&m.lat.ambient.ideal).unwrap();
        let x: Vec<f64> = (0..4).map(|i| crate::quadorder::q_to_f64(phi[i][0] + phi[i][3])).collect();
        let z1 = C64::new(0.13, 1.1);
        let base = divisor_partner(&m.lat, &x, z1).unwrap();
        assert!((base.z2 - z1).norm() < 1e-9);
        let ap = DivisorApproach { base, direction: (C64::zero(), C64::new(0.0, 1.0)) };
        let deltas = [1e-2, 5e-3, 2.5e-3];
        let generic = [tz((0.1, 1.2), (0.3, 0.9))];
        let g =
            green_diagnostics(&f0, &m.lat, &m.disc, Some((ap, &deltas)), &generic, &LiftOptions::default()).unwrap();
        let s = g.slope.unwrap();
        assert!((s.slope + 2.0).abs() < 0.05, "{}", s.slope);
        assert!(g.constant_gap < 1e-3, "{}", g.constant_gap);
        // Constant input: Delta Phi = c(0,0)/2 everywhere.
        let c = constant_input(&m.disc, 2.0);
        let g = green_diagnostics(&c, &m.lat, &m.disc, None, &generic, &LiftOptions::default()).unwrap();
        assert!(g.constant_gap < 5e-3, "{}", g.constant_gap);
    }

    #[test]
    fn a0_counts_vectors() {
        // A positive definite binary lattice x^2 + y^2 (Gram 2I): Q(x) = 1 has 4 solutions.
        let gram: IMat = vec![vec![2, 0], vec![0, 2]];
        let disc = crate::qspace::discriminant_group(&gram, 100).unwrap();
        let mut p = VectorQExpansion::new(0.0, 2, dual_q_values(&disc.q_values));
        let zero = disc.q_values.iter().position(|q| q.is_zero()).unwrap();
        p.add_coeff(zero, -2, C64::new(1.0, 0.0)).unwrap();
        p.add_coeff(zero, 0, C64::new(3.0, 0.0)).unwrap();
        let f0 = HarmonicMaassInput::new(p, vec![]).unwrap();
        assert!((a0_constant(&f0, &gram, &disc).unwrap() - 7.0).abs() < 1e-12);
        // Anisotropic binary lattice with a principal part is ill-posed.
        let f = field_from_disc(5).unwrap();
        let r = ring_class_group(&f, 1, 1).unwrap();
        let (_, l1, _) = lattice_from_level(&r.reps[0], 1).unwrap();
        let d1 = dual_and_discriminant(&l1, 1000).unwrap();
        let mut p = VectorQExpansion::new(0.0, d1.exponent as i64, dual_q_values(&d1.q_values));
        p.add_coeff(0, 0, C64::new(2.0, 0.0)).unwrap();
        let f0 = HarmonicMaassInput::new(p.clone(), vec![]).unwrap();
        assert_eq!(a0_constant(&f0, &l1.scaled_gram(), &d1).unwrap(), 2.0);
        p.add_coeff(0, -(d1.exponent as i64), C64::new(1.0, 0.0)).unwrap();
        let f0 = HarmonicMaassInput::new(p, vec![]).unwrap();
        assert!(a0_constant(&f0, &l1.scaled_gram(), &d1).is_err());
    }

    #[test]
    fn ct_pairing_matches_fourier_constant_mode() {
        // D1 = Z/2 with Q = 1/4 (x^2 lattice scaled), D2 = Z/2 with Q = 3/4.
        let q1 = vec![Q::zero(), Q::new(1, 4)];
        let q2 = vec![Q::zero(), Q::new(3, 4)];
        let q0: Vec<Q> = q1
            .iter()
            .flat_map(|a| {
                q2.iter().map(move |b| {
                    let s = -(*a + *b);
                    s - s.floor()
                })
            })
            .collect();
        let mut f = VectorQExpansion::new(0.0, 4, q0);
        f.add_coeff(0, -4, C64::new(1.0, 0.0)).unwrap();
        f.add_coeff(0, 0, C64::new(2.0, 0.0)).unwrap();
        f.add_coeff(1, -3, C64::new(-1.5, 0.0)).unwrap();
        f.add_coeff(2, -1, C64::new(0.5, 0.0)).unwrap();
        f.add_coeff(3, -4, C64::new(0.7, 0.0)).unwrap();
        let mut t1 = VectorQExpansion::new(0.5, 4, q1);
        t1.add_coeff(0, 0, C64::new(1.0, 0.0)).unwrap();
        t1.add_coeff(0, 4, C64::new(2.0, 0.0)).unwrap();
        t1.add_coeff(1, 1, C64::new(2.0, 0.0)).unwrap();
        let mut e = VectorQExpansion::new(1.5, 4, q2);
        e.add_coeff(0, 0, C64::new(0.3, 0.0)).unwrap();
        e.add_coeff(1, 3, C64::new(-0.8, 0.0)).unwrap();
        e.add_coeff(0, 4, C64::new(1.1, 0.0)).unwrap();
        let ct = ct_pairing(&f, &t1, &e).unwrap();
        // DFT of the product over a full period in u; the constant mode does not
        // depend on v, and v = 1 keeps the principal part from swamping rounding.
        let v = 1.0;
        let n = 64;
        let mut acc = C64::zero();
        for k in 0..n {
            let tau = C64::new(k as f64 / n as f64, v);
            let (fv, av, bv) = (f.eval(tau), t1.eval(tau), e.eval(tau));
            for a in 0..2 {
                for b in 0..2 {
                    acc += fv[a * 2 + b] * av[a] * bv[b];
                }
            }
        }
        acc /= n as f64;
        assert!((ct - acc).norm() < 1e-9 * acc.norm().max(1.0), "{ct} vs {acc}");
        // Bilinearity in E.
        let mut e2 = e.clone();
        for c in e2.coeffs.values_mut() {
            *c *= 2.0;
        }
        assert!((ct_pairing(&f, &t1, &e2).unwrap() - ct * 2.0).norm() < 1e-12);
        // Mismatched coset data is rejected.
        let bad = VectorQExpansion::new(0.0, 4, vec![Q::zero(); 4]);
        assert!(ct_pairing(&bad, &t1, &e).is_err());
    }

    #[test]
    fn main_formula_prefactor_and_linearity() {
        let f = field_from_disc(5).unwrap();
        let u = fundamental_unit(&f).unwrap();
        let want = -(5f64).sqrt() / (2.0 * ((3.0 + 5f64.sqrt()) / 2.0).ln());
        assert!((main_prefactor(&f, &u, 1) - want).abs() < 1e-14);
        let cls = |ct: f64, g: f64| {
            vec![ClassContribution { label: "A".into(), ct_pairing: C64::new(ct, 0.0), geodesic_term: g }]
        };
        let one = [C64::new(1.0, 0.0)];
        let zero = main_formula_rhs(&cls(0.0, 0.0), &one, &f, &u, 1.0, None, FamilySource::Synthetic).unwrap();
        assert_eq!(zero.rhs, C64::zero());
        let a = main_formula_rhs(&cls(1.0, 2.0), &one, &f, &u, 1.0, None, FamilySource::Synthetic).unwrap();
        let b = main_formula_rhs(&cls(3.0, -1.0), &one, &f, &u, 1.0, None, FamilySource::Synthetic).unwrap();
        let ab = main_formula_rhs(&cls(4.0, 1.0), &one, &f, &u, 1.0, None, FamilySource::Synthetic).unwrap();
        assert!((a.rhs + b.rhs - ab.rhs).norm() < 1e-14);
        assert!(matches!(ab.gap, Gap::NotComputable(_)));
        assert!(main_formula_rhs(&[], &[], &f, &u, 1.0, None, FamilySource::Synthetic).is_err());
    }

    #[test]
    fn geodesic_sum_converges_and_is_class_equivariant() {
        let f = field_from_disc(5).unwrap();
        let u = fundamental_unit(&f).unwrap();
        let r = ring_class_group(&f, 1, 1).unwrap();
        let (_, l1, l2) = lattice_from_level(&r.reps[0], 1).unwrap();
        let d1 = dual_and_discriminant(&l1, 1000).unwrap();
        let d2 = dual_and_discriminant(&l2, 1000).unwrap();
        let setup = GeodesicSetup { field: &f, units: &u, l1: &l1, d1: &d1, t1: 0.0, l2: &l2, d2: &d2 };
        let src = PointSource::Split { l1: &l1, d1: &d1, t1: 0.0, l2: &l2, d2: &d2, t2: 0.0, h: None };
        let den = (d1.exponent * d2.exponent) as i64;
        let mut p = VectorQExpansion::new(0.0, den, src.input_q_values());
        p.add_coeff(0, 0, C64::new(1.0, 0.0)).unwrap();
        let f0 = HarmonicMaassInput::new(p, vec![]).unwrap();
        let opts = LiftOptions { s_probe: vec![], ..Default::default() };
        let rep = geodesic_sum(std::slice::from_ref(&f0), &setup, &[None], 4, 0.5, &opts).unwrap();
        assert!(rep.change < 1e-8, "{rep:?}");
        // Zero input.
        let z = HarmonicMaassInput::new(VectorQExpansion::new(0.0, den, src.input_q_values()), vec![]).unwrap();
        let rz = geodesic_sum(&[z], &setup, &[None], 4, 0.5, &opts).unwrap();
        assert_eq!(rz.total, 0.0);
        // Translating by the principal class changes nothing, and per-class
        // values follow the order of the class list.
        let one = r.reps[0].clone();
        let mut p2 = VectorQExpansion::new(0.0, den, src.input_q_values());
        p2.add_coeff(0, 0, C64::new(2.0, 0.0)).unwrap();
        let two = HarmonicMaassInput::new(p2, vec![]).unwrap();
        let ra = geodesic_sum(&[f0.clone(), two.clone()], &setup, &[None, Some(one.clone())], 4, 0.5, &opts).unwrap();
        let rb = geodesic_sum(&[two, f0], &setup, &[Some(one), None], 4, 0.5, &opts).unwrap();
        assert!((ra.per_class[0][2] - rep.per_class[0][2]).abs() < 1e-10);
        assert!((ra.per_class[1][2] - 2.0 * rep.per_class[0][2]).abs() < 1e-9);
        assert!((ra.per_class[0][2] - rb.per_class[1][2]).abs() < 1e-12);
        assert!((ra.total - rb.total).abs() < 1e-12);
    }
}
