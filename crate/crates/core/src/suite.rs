//! The acceptance suite: twelve numbered criteria, each a list of named
//! checks against a tolerance plus a runtime budget.
//!
//! A check may be marked as a known deviation when the statement it tests
//! is false as stated and the library implements a corrected form (which is
//! checked alongside). A criterion with failing known deviations still
//! fails; [`Outcome::known_deviation`] records that every failure is of that
//! kind, which is what `selftest` accepts.
use crate::eisenstein::{
    completed_fe_residual, completed_l, derivative_in_s, lowering_residual, siegel_weil_residual, EisensteinContext,
    GammaFactor,
};
use crate::error::{Error, Result};
use crate::lfunc::{
    central_value_oracle, class_number_check, rank_one_derivative_oracle, rankin_selberg_job, RankinSelbergJob,
    FE_SPLIT,
};
use crate::linalg::Q;
use crate::newform::{coefficients, coefficients_from_curve, level_split, twist_coefficients, CurveSpec};
use crate::numeric::{max_diff, max_norm, C64};
use crate::qspace::{
    build_space, dual_and_discriminant, eichler_lattice, lattice_from_level, space_invariants, Variant,
    DEFAULT_MAX_DISC_ORDER,
};
use crate::quadorder::{
    field_from_disc, fundamental_unit, ideal_of_form, ring_class_group, Form, RealQuadraticField, RingClassGroup,
    UnitData,
};
use crate::reglift::{
    constant_input_on, divisor_partner, dual_q_values, green_diagnostics, j_input_on, main_formula_rhs, reg_integral,
    synthetic_family, unimodular_tube_lattice, ClassContribution, DivisorApproach, FamilySource, Gap, LiftOptions,
    PointSource, SyntheticOptions,
};
use crate::theta::{eta_divisor_sum, rep_counts, TubePoint};
use crate::weilrep::{lift_newform, s_transformation_residual, weil_generators, weil_of_lattice, LiftConvention};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};
use std::time::Instant;

/// Fields used by the arithmetic criteria.
pub const FIELD_LIST: [i128; 6] = [5, 8, 12, 13, 40, 229];

/// Seed of the ideal sampler in criterion 3.
pub const IDEAL_SEED: u64 = 20_240_601;

/// One named comparison `value < tol` (or an exact equality, `tol = 0`).
#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tol: f64,
    pub pass: bool,
    /// The statement is false as stated; a corrected form is checked separately.
    pub known_deviation: bool,
}

impl Check {
    fn below(name: impl Into<String>, value: f64, tol: f64) -> Self {
        Self { name: name.into(), value, tol, pass: value < tol, known_deviation: false }
    }

    fn exact(name: impl Into<String>, mismatches: usize) -> Self {
        Self { name: name.into(), value: mismatches as f64, tol: 0.0, pass: mismatches == 0, known_deviation: false }
    }

    fn deviation(mut self) -> Self {
        self.known_deviation = true;
        self
    }
}

/// Result of one criterion.
#[derive(Clone, Debug, Serialize)]
pub struct Outcome {
    pub id: u32,
    pub title: String,
    pub pass: bool,
    /// Every failing check is a recorded known deviation and the budget held.
    pub known_deviation: bool,
    pub seconds: f64,
    pub budget_seconds: f64,
    pub checks: Vec<Check>,
    pub details: Value,
    /// Set when the criterion could not be evaluated.
    pub error: Option<String>,
}

impl Outcome {
    /// One line for terminal output.
    pub fn line(&self) -> String {
        let tag = if self.pass { "PASS" } else { "FAIL" };
        let mut s = format!(
            "criterion {:>2} {tag} ({:.2}s / {:.0}s) {}",
            self.id, self.seconds, self.budget_seconds, self.title
        );
        if let Some(e) = &self.error {
            s.push_str(&format!(" | error: {e}"));
        }
        let failing: Vec<String> = self
            .checks
            .iter()
            .filter(|c| !c.pass)
            .map(|c| {
                format!(
                    "{} = {:.3e} (tol {:.0e}{})",
                    c.name,
                    c.value,
                    c.tol,
                    if c.known_deviation { ", known deviation" } else { "" }
                )
            })
            .collect();
        if !failing.is_empty() {
            s.push_str(&format!(" | failing: {}", failing.join("; ")));
        }
        if self.seconds > self.budget_seconds {
            s.push_str(" | over time budget");
        }
        s
    }
}

/// Number of criteria.
pub const CRITERIA: u32 = 12;

/// Title and runtime budget (seconds) of each criterion.
pub fn criterion_info(id: u32) -> Option<(&'static str, f64)> {
    Some(match id {
        1 => ("class number formula", 5.0),
        2 => ("theta coefficient identity", 10.0),
        3 => ("square class of d(V_A)", 1.0),
        4 => ("Weil representation relations", 5.0),
        5 => ("lift modularity", 30.0),
        6 => ("Eisenstein suite", 120.0),
        7 => ("Siegel-Weil", 120.0),
        8 => ("forced central vanishing", 60.0),
        9 => ("Rankin-Selberg functional equation", 120.0),
        10 => ("rank-one cross-check", 120.0),
        11 => ("regularized lift", 300.0),
        12 => ("main formula right side: linearity, equivariance, gap path", 300.0),
        _ => return None,
    })
}

/// Runs one criterion.
pub fn run(id: u32) -> Result<Outcome> {
    let (title, budget) = criterion_info(id).ok_or_else(|| Error::Validation(format!("no criterion {id}")))?;
    let start = Instant::now();
    let res = match id {
        1 => c1_class_number(),
        2 => c2_theta_identity(),
        3 => c3_square_class(),
        4 => c4_weil(),
        5 => c5_lift_modularity(),
        6 => c6_eisenstein(),
        7 => c7_siegel_weil(),
        8 => c8_vanishing(),
        9 => c9_rs_fe(),
        10 => c10_rank_one(),
        11 => c11_reglift(),
        _ => c12_main_rhs(),
    };
    let seconds = start.elapsed().as_secs_f64();
    let (checks, details, error) = match res {
        Ok((c, d)) => (c, d, None),
        Err(e) => (vec![], Value::Null, Some(e.to_string())),
    };
    let in_budget = seconds <= budget;
    let all = error.is_none() && !checks.is_empty() && checks.iter().all(|c| c.pass);
    let only_known = error.is_none() && checks.iter().all(|c| c.pass || c.known_deviation);
    Ok(Outcome {
        id,
        title: title.to_string(),
        pass: all && in_budget,
        known_deviation: !all && only_known && in_budget,
        seconds,
        budget_seconds: budget,
        checks,
        details,
        error,
    })
}

/// Runs criteria `1..=12` in order.
pub fn run_all() -> Vec<Outcome> {
    (1..=CRITERIA).map(|i| run(i).expect("criterion ids are in range")).collect()
}

type Evaluated = Result<(Vec<Check>, Value)>;

fn field(dk: i128) -> Result<(RealQuadraticField, UnitData, RingClassGroup)> {
    let f = field_from_disc(dk)?;
    let u = fundamental_unit(&f)?;
    let r = ring_class_group(&f, 1, 1)?;
    Ok((f, u, r))
}

fn c1_class_number() -> Evaluated {
    let mut checks = vec![];
    let mut rows = vec![];
    for dk in FIELD_LIST {
        let (f, u, r) = field(dk)?;
        let c = class_number_check(&f, &u, r.order())?;
        checks.push(Check::below(format!("d_K={dk}"), c.residual, 1e-6));
        rows.push(json!({"dK": dk, "h": c.h, "L1": c.l1, "predicted_h": c.predicted_h, "residual": c.residual}));
    }
    Ok((checks, json!(rows)))
}

fn c2_theta_identity() -> Evaluated {
    const M: u64 = 500;
    let mut checks = vec![];
    let mut rows = vec![];
    for dk in FIELD_LIST {
        let (f, u, r) = field(dk)?;
        let tables = r.reps.iter().map(|a| rep_counts(&f, &u, &r, a, M)).collect::<Result<Vec<_>>>()?;
        let mut bad = vec![];
        for m in 1..=M {
            let lhs: u64 = tables.iter().map(|t| t.get(Q::from_integer(m as i128))).sum();
            let rhs = eta_divisor_sum(&f, m)?;
            if lhs as i64 != rhs {
                bad.push(m);
            }
        }
        checks.push(Check::exact(format!("d_K={dk} mismatches"), bad.len()));
        rows.push(json!({"dK": dk, "classes": r.order(), "m_max": M, "mismatches": bad}));
    }
    Ok((checks, json!(rows)))
}

/// A random element of `SL_2(Z)` as a product of `T^k` and `S`.
fn random_sl2(rng: &mut ChaCha8Rng) -> [i128; 4] {
    let mut g = [1i128, 0, 0, 1];
    for _ in 0..rng.gen_range(2..7) {
        let k: i128 = rng.gen_range(-3..=3);
        let m = if rng.gen_bool(0.5) { [1, k, 0, 1] } else { [0, -1, 1, 0] };
        g = [
            g[0] * m[0] + g[1] * m[2],
            g[0] * m[1] + g[1] * m[3],
            g[2] * m[0] + g[3] * m[2],
            g[2] * m[1] + g[3] * m[3],
        ];
    }
    g
}

/// A random integral ideal: a class label moved by a random `SL_2(Z)`
/// transformation, kept when its first coefficient is positive.
pub fn random_ideals(n: usize, seed: u64) -> Result<Vec<(i128, Form, crate::quadorder::FractionalIdeal)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![];
    let groups: Vec<_> = FIELD_LIST.iter().map(|&dk| field(dk)).collect::<Result<_>>()?;
    while out.len() < n {
        let (f, _, r) = &groups[rng.gen_range(0..groups.len())];
        let base = r.labels[rng.gen_range(0..r.order())];
        let g = random_sl2(&mut rng);
        let form = base.transform(g[0], g[1], g[2], g[3]);
        if form.a <= 0 || form.a > 1_000_000 {
            continue;
        }
        out.push((f.d_k, form, ideal_of_form(f.d_k, 1, &form)));
    }
    Ok(out)
}

fn c3_square_class() -> Evaluated {
    let mut bad = 0;
    let mut rows = vec![];
    for (dk, form, a) in random_ideals(20, IDEAL_SEED)? {
        let d = field_from_disc(dk)?.d;
        let small = space_invariants(&build_space(&a, Variant::SmallQ)?)?.square_class;
        let big = space_invariants(&build_space(&a, Variant::BigQ)?)?.square_class;
        if small != d || big != 1 {
            bad += 1;
        }
        rows.push(json!({"dK": dk, "form": form.to_string(), "qA": small, "QA": big, "d": d}));
    }
    Ok((vec![Check::exact("ideals with a wrong square class", bad)], json!({"seed": IDEAL_SEED, "ideals": rows})))
}

fn c4_weil() -> Evaluated {
    let mut worst: f64 = 0.0;
    let mut groups = 0;
    let mut rows = vec![];
    for (dk, n) in [(5i128, 37i128), (8, 11), (5, 14)] {
        let f = field_from_disc(dk)?;
        let g = ring_class_group(&f, 1, n)?;
        for a in &g.reps {
            let (l, l1, l2) = lattice_from_level(a, n)?;
            for (name, lat) in [("L", l), ("L1", l1), ("L2", l2), ("eichler", eichler_lattice(a, n)?)] {
                let d = dual_and_discriminant(&lat, DEFAULT_MAX_DISC_ORDER)?;
                if d.order() > 400 {
                    continue;
                }
                let r = weil_generators(&d)?.relation_residuals();
                worst = worst.max(r.max());
                groups += 1;
                rows.push(json!({"dK": dk, "N": n, "lattice": name, "order": d.order(), "residuals": r}));
            }
        }
    }
    let checks = vec![
        Check::below("max relation residual", worst, 1e-12),
        Check::exact("no groups tested", usize::from(groups == 0)),
    ];
    Ok((checks, json!({"groups": groups, "rows": rows})))
}

/// The five points of the S-transformation test.
pub const LIFT_TAUS: [(f64, f64); 5] = [(0.1, 1.0), (-0.3, 0.95), (0.25, 1.3), (0.4, 0.8), (-0.45, 1.1)];

fn c5_lift_modularity() -> Evaluated {
    let e = CurveSpec::curve_37a();
    let n = e.conductor as i128;
    let f = field_from_disc(5)?;
    let a = &ring_class_group(&f, 1, n)?.reps[0];
    let l = eichler_lattice(a, n)?;
    let w = weil_of_lattice(&l, DEFAULT_MAX_DISC_ORDER)?;
    let t = coefficients_from_curve(&e, 40 * n as usize)?;
    let g = lift_newform(&t, &l, &w, LiftConvention::Induced)?;
    let mut checks = vec![];
    let mut rows = vec![];
    for (x, y) in LIFT_TAUS {
        let r = s_transformation_residual(&g, &w, C64::new(x, y));
        checks.push(Check::below(format!("tau={x}+{y}i"), r, 1e-6));
        rows.push(json!({"tau": [x, y], "residual": r}));
    }
    Ok((checks, json!({"curve": "37a", "dK": 5, "lattice": "eichler", "disc_order": w.disc.order(), "points": rows})))
}

fn c6_eisenstein() -> Evaluated {
    let taus = [C64::new(0.0, 1.0), C64::new(0.5, 0.9)];
    let mut fe: f64 = 0.0;
    let mut vanish: f64 = 0.0;
    let mut corrected: f64 = 0.0;
    let mut lowering: f64 = 0.0;
    for dk in [5i128, 8] {
        let (f, _, r) = field(dk)?;
        let (_, _, l2) = lattice_from_level(&r.reps[0], 1)?;
        let ctx = EisensteinContext::new(&dual_and_discriminant(&l2, DEFAULT_MAX_DISC_ORDER)?)?;
        let lam = |s: f64| completed_l(&f, s, GammaFactor::Even);
        let log_der = (lam(1.0 + 1e-4)? - lam(1.0 - 1e-4)?) / 2e-4 / lam(1.0)?;
        for tau in taus {
            for s in [0.2, 0.3, 0.5] {
                fe = fe.max(completed_fe_residual(&ctx, &f, tau, s, GammaFactor::Even)?);
            }
            let d = derivative_in_s(&ctx, tau, 0, 0.0, 1e-3)?.value;
            vanish = vanish.max(max_norm(&d));
            let e0 = ctx.value(tau, 0.0, 0)?;
            let pred: Vec<C64> = e0.iter().map(|x| x * (-log_der)).collect();
            corrected = corrected.max(max_diff(&d, &pred) / max_norm(&pred).max(1e-300));
            for s in [0.0, 0.3, 0.5] {
                lowering = lowering.max(lowering_residual(&ctx, tau, s)?);
            }
        }
    }
    let checks = vec![
        Check::below("completed FE residual", fe, 1e-5),
        Check::below("|E'(tau,0;0)|", vanish, 1e-5).deviation(),
        Check::below("E'(tau,0;0) + (Lambda'/Lambda)(1) E(tau,0;0)", corrected, 1e-5),
        Check::below("lowering identity residual", lowering, 1e-5),
    ];
    Ok((checks, json!({"dK": [5, 8], "s_grid": [0.2, 0.3, 0.5], "taus": [[0.0, 1.0], [0.5, 0.9]]})))
}

fn c7_siegel_weil() -> Evaluated {
    let taus = [C64::new(0.0, 1.0), C64::new(0.0, 2.0), C64::new(1.0, 0.8)];
    let mut checks = vec![];
    let mut rows = vec![];
    for dk in [5i128, 40] {
        let (f, u, r) = field(dk)?;
        let classes: Vec<usize> = (0..r.order()).collect();
        let rep = siegel_weil_residual(&f, &u, &r, &classes, &taus, 48)?;
        checks.push(Check::below(format!("d_K={dk}"), rep.residual, 1e-3));
        rows.push(serde_json::to_value(&rep)?);
    }
    Ok((checks, json!(rows)))
}

/// The `(curve, d_K)` matrix of the L-function criteria.
pub fn rs_matrix() -> [(CurveSpec, i128); 2] {
    [(CurveSpec::curve_37a(), 5), (CurveSpec::curve_11a(), 8)]
}

fn rs_jobs() -> Result<Vec<(String, bool, RankinSelbergJob)>> {
    let mut out = vec![];
    for (e, dk) in rs_matrix() {
        let (f, u, r) = field(dk)?;
        let ehh = level_split(e.conductor, &f)?.ehh_holds;
        for chi in 0..r.characters().len() {
            let label = format!("{}/{dk}/chi{chi}", e.label);
            out.push((label.clone(), ehh, rankin_selberg_job(&label, &e, &f, &r, &u, chi, FE_SPLIT, None)?));
        }
    }
    Ok(out)
}

fn c8_vanishing() -> Evaluated {
    let mut checks = vec![];
    let mut rows = vec![];
    for (label, ehh, rs) in rs_jobs()? {
        // The symmetric split is zero by construction at sign -1; use an off-center split.
        let v = rs.job.completed_value_split(0.5, FE_SPLIT)?;
        if ehh {
            checks.push(Check::below(label.clone(), v.abs(), 1e-8));
        }
        rows.push(json!({"job": label, "ehh_holds": ehh, "sign": rs.job.sign, "Lambda_half": v}));
    }
    checks.push(Check::exact("no ehh configuration", usize::from(checks.is_empty())));
    Ok((checks, json!(rows)))
}

fn c9_rs_fe() -> Evaluated {
    let mut checks = vec![];
    let mut rows = vec![];
    for (label, _, rs) in rs_jobs()? {
        for s in [0.6, 0.75] {
            let r = rs.job.fe_residual(s)?;
            checks.push(Check::below(format!("{label} s={s}"), r, 1e-6));
            rows.push(json!({"job": label, "s": s, "fe_residual": r}));
        }
    }
    Ok((checks, json!(rows)))
}

fn c10_rank_one() -> Evaluated {
    let e = CurveSpec::curve_37a();
    let (f, u, r) = field(5)?;
    let rs = rankin_selberg_job("37a/5/chi0", &e, &f, &r, &u, 0, FE_SPLIT, None)?;
    let report = rs.job.central_derivative()?;
    let t = coefficients(&e, 4000, None)?;
    let d_e = rank_one_derivative_oracle(&t, e.conductor)?;
    let tw = twist_coefficients(&t, &f)?;
    let v_tw = central_value_oracle(&tw.coeffs, (e.conductor as f64) * (f.d_k * f.d_k) as f64);
    let oracle = d_e * v_tw;
    let rel = (report.derivative - oracle).abs() / oracle.abs();
    let checks = vec![Check::below("relative gap", rel, 1e-5)];
    Ok((
        checks,
        json!({"convolution": report, "Lambda_prime_E": d_e, "Lambda_twist": v_tw, "oracle": oracle, "relative_gap": rel}),
    ))
}

fn tube(a: (f64, f64), b: (f64, f64)) -> Result<TubePoint> {
    TubePoint::new(C64::new(a.0, a.1), C64::new(b.0, b.1))
}

/// Evaluation points of the T-stability check, away from the divisor of each input.
pub const STABILITY_POINTS_J: [((f64, f64), (f64, f64)); 2] = [((0.1, 2.5), (-0.2, 0.9)), ((0.0, 3.0), (0.5, 1.2))];
pub const STABILITY_POINTS_CONSTANT: [((f64, f64), (f64, f64)); 1] = [((0.1, 1.2), (0.3, 0.9))];

fn c11_reglift() -> Evaluated {
    let (lat, disc) = unimodular_tube_lattice()?;
    let j = j_input_on(&disc, 24)?;
    let two = constant_input_on(&dual_q_values(&disc.q_values), 1, 2.0)?;
    let opts = LiftOptions::default();
    let mut checks = vec![];
    let mut rows = vec![];
    for (name, f0, pts) in
        [("j-744", &j, &STABILITY_POINTS_J[..]), ("constant 2", &two, &STABILITY_POINTS_CONSTANT[..])]
    {
        for &(a, b) in pts {
            let src = PointSource::Tube { lattice: &lat, disc: &disc, z: tube(a, b)? };
            let r = reg_integral(f0, &src, &opts)?;
            checks.push(Check::below(format!("T-stability {name} at {a:?},{b:?}"), r.stability, 1e-4));
            rows.push(json!({"input": name, "z": [a, b], "stability": r.stability, "value": r.value, "values": r.values, "T_grid": r.t_grid}));
        }
    }
    // Divisor of the identity matrix (Q = 1): the diagonal z1 = z2.
    let phi = crate::qspace::m2_isometry(&lat.ambient.ideal)?;
    let x: Vec<f64> = (0..4).map(|i| crate::quadorder::q_to_f64(phi[i][0] + phi[i][3])).collect();
    let base = divisor_partner(&lat, &x, C64::new(0.13, 1.1))?;
    let ap = DivisorApproach { base, direction: (C64::new(0.0, 0.0), C64::new(0.0, 1.0)) };
    let deltas = [1e-2, 5e-3, 2.5e-3];
    let generic = [tube((0.1, 1.2), (0.3, 0.9))?];
    let gj = green_diagnostics(&j, &lat, &disc, Some((ap, &deltas)), &generic, &opts)?;
    let slope = gj.slope.as_ref().map(|s| s.slope).unwrap_or(f64::NAN);
    checks.push(Check::below("|slope + 2|", (slope + 2.0).abs(), 0.1));
    let gc = green_diagnostics(&two, &lat, &disc, None, &generic, &opts)?;
    checks.push(Check::below("Laplacian eigen gap (synthetic c(0,0)=2)", gc.eigen_gap, 5e-2).deviation());
    checks.push(Check::below("Laplacian constant gap (synthetic c(0,0)=2)", gc.constant_gap, 5e-2));
    Ok((checks, json!({"lattice": "M2(Z), Q = det", "stability": rows, "green_j": gj, "green_constant": gc})))
}

fn c12_main_rhs() -> Evaluated {
    let mut checks = vec![];
    // Linearity of the full pipeline in the input (d_K = 5).
    let (f, u, r) = field(5)?;
    let base = synthetic_family(&f, &u, &r, &SyntheticOptions::default())?;
    let scaled = synthetic_family(&f, &u, &r, &SyntheticOptions { c0: 2.5, ..Default::default() })?;
    let mut lin: f64 = 0.0;
    for (a, b) in base.classes.iter().zip(&scaled.classes) {
        lin = lin.max((b.ct_pairing - a.ct_pairing * 2.5).norm() / a.ct_pairing.norm().max(1.0));
        lin = lin.max((b.geodesic_term - 2.5 * a.geodesic_term).abs() / a.geodesic_term.abs().max(1e-3));
    }
    checks.push(Check::below("pipeline linearity (c0 = 1 vs 2.5)", lin, 1e-9));
    let one = [C64::new(1.0, 0.0)];
    let r1 = main_formula_rhs(&base.classes, &one, &f, &u, 1.0, None, FamilySource::Synthetic)?;
    let r2 = main_formula_rhs(&scaled.classes, &one, &f, &u, 1.0, None, FamilySource::Synthetic)?;
    checks.push(Check::below("rhs linearity", (r2.rhs - r1.rhs * 2.5).norm() / r1.rhs.norm().max(1e-300), 1e-9));
    // Equivariance under translation by a class (d_K = 40, h = 2).
    let (f40, u40, r40) = field(40)?;
    let fam = synthetic_family(&f40, &u40, &r40, &SyntheticOptions::default())?;
    let mut eq: f64 = 0.0;
    let mut reports = vec![];
    for chi in r40.characters() {
        let vals = chi.values();
        let rep = main_formula_rhs(&fam.classes, &vals, &f40, &u40, 1.0, None, FamilySource::Synthetic)?;
        for b in 0..r40.order() {
            // c'_A = c_{A B}: sum chi(A) c_{AB} = conj(chi(B)) sum chi(A) c_A.
            let moved: Vec<ClassContribution> =
                (0..r40.order()).map(|a| fam.classes[r40.table[a][b]].clone()).collect();
            let rb = main_formula_rhs(&moved, &vals, &f40, &u40, 1.0, None, FamilySource::Synthetic)?;
            eq = eq.max((rb.rhs - rep.rhs * vals[b].conj()).norm() / rep.rhs.norm().max(1e-12));
        }
        reports.push(rep);
    }
    checks.push(Check::below("class-translation equivariance", eq, 1e-12));
    // Gap path: synthetic inputs never produce a numeric gap.
    let with_lhs =
        main_formula_rhs(&base.classes, &one, &f, &u, 1.0, Some(C64::new(1.0, 0.0)), FamilySource::Synthetic)?;
    let not_computable = matches!(r1.gap, Gap::NotComputable(_)) && matches!(with_lhs.gap, Gap::NotComputable(_));
    checks.push(Check::exact("gap reported as not computable", usize::from(!not_computable)));
    Ok((checks, json!({"dK5": r1, "dK5_scaled": r2, "dK40": reports, "warnings": [base.warnings, fam.warnings]})))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_ideals_are_reproducible_and_integral() {
        let a = random_ideals(20, IDEAL_SEED).unwrap();
        let b = random_ideals(20, IDEAL_SEED).unwrap();
        assert_eq!(a.len(), 20);
        for ((d1, f1, _), (d2, f2, _)) in a.iter().zip(&b) {
            assert_eq!((d1, f1), (d2, f2));
            assert_eq!(f1.disc(), *d1);
            assert!(f1.a > 0);
        }
    }

    #[test]
    fn outcome_flags() {
        let o = run(3).unwrap();
        assert!(o.pass, "{}", o.line());
        assert!(!o.known_deviation);
        assert!(o.line().contains("PASS"));
        assert!(run(13).is_err());
    }
}
