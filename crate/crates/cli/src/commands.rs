//! Subcommand pipelines. Each returns a JSON report, an optional τ-grid (or
//! other sampling grid) for `--emit-grid`, and the tolerance checks that
//! decide the exit status.
use crate::config::{is_builtin_curve, ChiSel, RunConfig};
use geogreen_core::cache;
use geogreen_core::eisenstein::{
    completed_fe_residual, completed_l, derivative_in_s, kappa_table, lowering_residual, siegel_weil_residual,
    EisensteinContext, GammaFactor,
};
use geogreen_core::error::{Error, Result};
use geogreen_core::lfunc::{
    central_value_oracle, class_number_check, rank_one_derivative_oracle, rankin_selberg_job, root_number,
    RankinSelbergJob, FE_SPLIT,
};
use geogreen_core::linalg::Q;
use geogreen_core::newform::{coefficients, level_split, twist_coefficients, CoeffTable, CurveSpec};
use geogreen_core::numeric::{max_diff, max_norm, C64};
use geogreen_core::qspace::{dual_and_discriminant, lattice_from_level, DEFAULT_MAX_DISC_ORDER};
use geogreen_core::quadorder::{
    field_from_disc, fundamental_unit, make_field, ring_class_group, RealQuadraticField, RingClassGroup, UnitData,
};
use geogreen_core::reglift::{
    constant_input_on, dual_q_values, geodesic_sum, j_input_on, main_formula_rhs, reg_integral, synthetic_family,
    unimodular_tube_lattice, FamilySource, Gap, GeodesicSetup, LiftOptions, PointSource, SyntheticOptions,
};
use geogreen_core::suite;
use geogreen_core::theta::{eta_divisor_sum, rep_counts, TubePoint};
use geogreen_core::weilrep::HarmonicMaassInput;
use serde_json::{json, Value};
use std::path::{Path, PathBuf};

/// Rows for `--emit-grid`.
pub struct Grid {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<f64>>,
}

impl Grid {
    pub fn to_csv(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(|x| format!("{x:e}")).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }
}

/// A residual compared against a named tolerance.
pub struct TolCheck {
    pub name: String,
    pub value: f64,
    pub tol: f64,
}

impl TolCheck {
    pub fn new(cfg: &RunConfig, key: &str, label: impl Into<String>, value: f64) -> Self {
        Self { name: label.into(), value, tol: cfg.tol(key) }
    }

    pub fn ok(&self) -> bool {
        self.value < self.tol
    }
}

/// What a command produced.
pub struct CommandOutput {
    pub report: Value,
    pub grid: Option<Grid>,
    pub checks: Vec<TolCheck>,
    /// Overrides the tolerance-based exit status (used by `selftest`).
    pub failed: Option<bool>,
}

impl CommandOutput {
    fn new(report: Value) -> Self {
        Self { report, grid: None, checks: vec![], failed: None }
    }
}

fn require_d(cfg: &RunConfig) -> Result<i128> {
    cfg.d.ok_or_else(|| Error::Validation("missing --d (fundamental discriminant or squarefree radicand)".into()))
}

/// `d` as a fundamental discriminant, or else as a squarefree radicand.
pub fn resolve_field(d: i128) -> Result<RealQuadraticField> {
    field_from_disc(d).or_else(|_| make_field(d))
}

fn field_data(cfg: &RunConfig) -> Result<(RealQuadraticField, UnitData, RingClassGroup)> {
    let f = resolve_field(require_d(cfg)?)?;
    let u = fundamental_unit(&f)?;
    let r = ring_class_group(&f, cfg.c, 1)?;
    Ok((f, u, r))
}

fn cache_path(cfg: &RunConfig) -> Option<PathBuf> {
    cache::cache_dir(cfg.cache_dir.as_deref())
}

fn curve(cfg: &RunConfig) -> Result<CurveSpec> {
    let c = cfg.curve.as_deref().ok_or_else(|| Error::Validation("missing --curve".into()))?;
    match c {
        "11a" => Ok(CurveSpec::curve_11a()),
        "37a" => Ok(CurveSpec::curve_37a()),
        path if path.ends_with(".csv") => Err(Error::Config(format!(
            "`{path}` is a coefficient file; this command needs a curve model (JSON with label, a, N)"
        ))),
        path => CurveSpec::from_json_file(Path::new(path)),
    }
}

fn chi_indices(cfg: &RunConfig, r: &RingClassGroup) -> Result<Vec<usize>> {
    let n = r.characters().len();
    match cfg.chi {
        ChiSel::All => Ok((0..n).collect()),
        ChiSel::Index(i) if i < n => Ok(vec![i]),
        ChiSel::Index(i) => Err(Error::Validation(format!("character index {i} out of range (group order {n})"))),
    }
}

fn single_or_list(cfg: &RunConfig, mut items: Vec<Value>) -> Value {
    if cfg.chi == ChiSel::All || items.len() != 1 {
        json!({ "jobs": items })
    } else {
        items.remove(0)
    }
}

/// Parses `x,y` into `x + iy` with `y > 0`.
pub fn parse_tau(s: &str) -> Result<C64> {
    let v = parse_list(s)?;
    if v.len() != 2 || !(v[1] > 0.0) {
        return Err(Error::Validation(format!("tau must be `x,y` with y > 0, got `{s}`")));
    }
    Ok(C64::new(v[0], v[1]))
}

/// Parses a comma-separated list of reals.
pub fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|_| Error::Validation(format!("`{x}` is not a number in `{s}`"))))
        .collect()
}

fn taus_or(list: &[String], default: &[(f64, f64)]) -> Result<Vec<C64>> {
    if list.is_empty() {
        Ok(default.iter().map(|&(x, y)| C64::new(x, y)).collect())
    } else {
        list.iter().map(|s| parse_tau(s)).collect()
    }
}

pub fn field(cfg: &RunConfig) -> Result<CommandOutput> {
    let (f, u, r) = field_data(&RunConfig { c: 1, ..cfg.clone() })?;
    let cn = class_number_check(&f, &u, r.order())?;
    let report = json!({
        "d": f.d,
        "dK": f.d_k,
        "pell": [u.t, u.u],
        "eps0": [u.eps0_x, u.eps0_y],
        "eps0_norm": u.eps0_norm,
        "eps0_log": u.eps0_log,
        "eps_K_log": u.eps_k_log,
        "h": r.order(),
        "L1_eta": cn.l1,
        "class_number_residual": cn.residual,
    });
    let mut out = CommandOutput::new(report);
    out.checks.push(TolCheck::new(cfg, "class_number", "class number formula", cn.residual));
    Ok(out)
}

pub fn classgroup(cfg: &RunConfig, level: i128) -> Result<CommandOutput> {
    let f = resolve_field(require_d(cfg)?)?;
    let u = fundamental_unit(&f)?;
    let r = ring_class_group(&f, cfg.c, level)?;
    let mut report = r.to_json(&f, &u);
    let chars: Vec<Value> = r.characters().iter().map(|c| json!({"num": c.num, "den": c.den})).collect();
    report["order"] = json!(r.order());
    report["characters"] = json!(chars);
    report["level"] = json!(level);
    Ok(CommandOutput::new(report))
}

pub fn coeffs(cfg: &RunConfig, m: Option<usize>, twist: bool, level: Option<u64>) -> Result<CommandOutput> {
    let m = m.unwrap_or(cfg.trunc("coeffs") as usize);
    let src = cfg.curve.as_deref().ok_or_else(|| Error::Validation("missing --curve".into()))?;
    let (label, table) = if src.ends_with(".csv") && !is_builtin_curve(src) {
        let t = CoeffTable::from_csv_file(Path::new(src), level)?;
        (src.to_string(), t)
    } else {
        let e = curve(cfg)?;
        (e.label.clone(), coefficients(&e, m, cache_path(cfg).as_deref())?)
    };
    table.check_multiplicative(table.len().min(m))?;
    let (table, twisted_by) = if twist {
        let f = resolve_field(require_d(cfg)?)?;
        (twist_coefficients(&table, &f)?, Some(f.d_k))
    } else {
        (table, None)
    };
    let n = table.len().min(m);
    let report = json!({
        "label": label,
        "level": table.level,
        "twisted_by": twisted_by,
        "m": n,
        "coeffs": &table.coeffs[..n],
        "multiplicativity_checked_to": n,
    });
    let mut out = CommandOutput::new(report);
    out.grid =
        Some(Grid { header: vec!["m", "c"], rows: (1..=n).map(|k| vec![k as f64, table.c(k) as f64]).collect() });
    Ok(out)
}

pub fn theta(cfg: &RunConfig, m: Option<u64>) -> Result<CommandOutput> {
    let (f, u, r) = field_data(cfg)?;
    let m = m.unwrap_or(cfg.trunc("theta_m") as u64);
    let tables = r.reps.iter().map(|a| rep_counts(&f, &u, &r, a, m)).collect::<Result<Vec<_>>>()?;
    let mut grid = vec![];
    let mut classes = vec![];
    for (k, t) in tables.iter().enumerate() {
        let entries: Vec<Value> = t.entries.iter().map(|(q, c)| json!([q.to_string(), c])).collect();
        for (q, c) in &t.entries {
            grid.push(vec![k as f64, *q.numer() as f64 / *q.denom() as f64, *c as f64]);
        }
        classes.push(json!({"label": r.labels[k].to_string(), "counts": entries}));
    }
    let mut mismatches = vec![];
    if cfg.c == 1 {
        for n in 1..=m {
            let lhs: u64 = tables.iter().map(|t| t.get(Q::from_integer(n as i128))).sum();
            if lhs as i64 != eta_divisor_sum(&f, n)? {
                mismatches.push(n);
            }
        }
    }
    let report = json!({
        "dK": f.d_k,
        "c": cfg.c,
        "cutoff": m,
        "classes": classes,
        "identity_checked": cfg.c == 1,
        "identity_mismatches": mismatches,
    });
    let mut out = CommandOutput::new(report);
    out.checks.push(TolCheck {
        name: "sum_A r_A(m) = sum_{d|m} eta(d) mismatches".into(),
        value: mismatches.len() as f64,
        tol: 0.5,
    });
    out.grid = Some(Grid { header: vec!["class", "m", "count"], rows: grid });
    Ok(out)
}

fn rs_jobs(cfg: &RunConfig) -> Result<(RealQuadraticField, CurveSpec, bool, Vec<(usize, RankinSelbergJob)>)> {
    let (f, u, r) = field_data(cfg)?;
    let e = curve(cfg)?;
    let ehh = level_split(e.conductor, &f)?.ehh_holds;
    let cache = cache_path(cfg);
    let mut jobs = vec![];
    for chi in chi_indices(cfg, &r)? {
        let label = format!("{}/{}/chi{chi}", e.label, f.d_k);
        jobs.push((chi, rankin_selberg_job(&label, &e, &f, &r, &u, chi, FE_SPLIT, cache.as_deref())?));
    }
    Ok((f, e, ehh, jobs))
}

pub fn lvalue(cfg: &RunConfig) -> Result<CommandOutput> {
    let (_, _, ehh, jobs) = rs_jobs(cfg)?;
    let mut items = vec![];
    let mut checks = vec![];
    for (chi, rs) in &jobs {
        let j = &rs.job;
        let fe6 = j.fe_residual(0.6)?;
        let fe75 = j.fe_residual(0.75)?;
        checks.push(TolCheck::new(cfg, "fe", format!("{} fe_residual(0.6)", j.label), fe6));
        checks.push(TolCheck::new(cfg, "fe", format!("{} fe_residual(0.75)", j.label), fe75));
        items.push(json!({
            "label": j.label,
            "chi": chi,
            "sign": j.sign,
            "conductor": j.conductor,
            "ehh_holds": ehh,
            "value": j.completed_value(0.5)?,
            "value_off_center_split": j.completed_value_split(0.5, FE_SPLIT)?,
            "fe_residual": fe6,
            "fe_residual_075": fe75,
            "tail_bound": j.tail_bound(),
            "local_corrections": rs.corrections.iter().map(|c| json!({"p": c.p, "quotient": c.quotient})).collect::<Vec<_>>(),
        }));
    }
    let mut out = CommandOutput::new(single_or_list(cfg, items));
    out.checks = checks;
    Ok(out)
}

pub fn lderiv(cfg: &RunConfig) -> Result<CommandOutput> {
    let (f, e, ehh, jobs) = rs_jobs(cfg)?;
    let mut items = vec![];
    let mut checks = vec![];
    for (chi, rs) in &jobs {
        let j = &rs.job;
        let rep = j.central_derivative()?;
        checks.push(TolCheck::new(cfg, "fe", format!("{} fe_residual", j.label), rep.fe_residual));
        checks.push(TolCheck::new(cfg, "estimator_gap", format!("{} estimator_gap", j.label), rep.estimator_gap));
        let oracle = if *chi == 0 && cfg.c == 1 { rank_one_cross_check(&e, &f, rep.derivative) } else { Value::Null };
        items.push(j.report_json(&rep, json!({"chi": chi, "ehh_holds": ehh, "rank_one_check": oracle})));
    }
    let mut out = CommandOutput::new(single_or_list(cfg, items));
    out.checks = checks;
    Ok(out)
}

/// `Lambda'(E, 1/2) Lambda(E^(d_K), 1/2)` against the convolution derivative.
fn rank_one_cross_check(e: &CurveSpec, f: &RealQuadraticField, derivative: f64) -> Value {
    let run = || -> Result<Value> {
        let t = coefficients(e, 4000, None)?;
        if root_number(&t, e.conductor)? != -1 {
            return Ok(json!({"status": "not-applicable", "reason": "root number of E is +1"}));
        }
        let d = rank_one_derivative_oracle(&t, e.conductor)?;
        let tw = twist_coefficients(&t, f)?;
        let v = central_value_oracle(&tw.coeffs, e.conductor as f64 * (f.d_k * f.d_k) as f64);
        let oracle = d * v;
        Ok(json!({
            "status": "computed",
            "Lambda_prime_E": d,
            "Lambda_twist": v,
            "product": oracle,
            "relative_gap": (derivative - oracle).abs() / oracle.abs().max(1e-300),
        }))
    };
    run().unwrap_or_else(|err| json!({"status": "not-applicable", "reason": err.to_string()}))
}

fn l2_context(cfg: &RunConfig) -> Result<(RealQuadraticField, EisensteinContext, Vec<Q>)> {
    let (f, _, r) = field_data(cfg)?;
    let (_, _, l2) = lattice_from_level(&r.reps[0], 1)?;
    let d = dual_and_discriminant(&l2, DEFAULT_MAX_DISC_ORDER)?;
    let ctx = EisensteinContext::new(&d)?;
    Ok((f, ctx, d.q_values.clone()))
}

pub fn eis_fe(cfg: &RunConfig, s_list: &[f64], taus: &[String]) -> Result<CommandOutput> {
    let (f, ctx, _) = l2_context(cfg)?;
    let taus = taus_or(taus, &[(0.0, 1.0), (0.5, 0.9)])?;
    let s_list = if s_list.is_empty() { vec![0.2, 0.3, 0.5] } else { s_list.to_vec() };
    let lam = |s: f64| completed_l(&f, s, GammaFactor::Even);
    let log_der = (lam(1.0 + 1e-4)? - lam(1.0 - 1e-4)?) / 2e-4 / lam(1.0)?;
    let mut rows = vec![];
    let mut grid = vec![];
    let mut checks = vec![];
    for &tau in &taus {
        let d = derivative_in_s(&ctx, tau, 0, 0.0, 1e-3)?.value;
        let e0 = ctx.value(tau, 0.0, 0)?;
        let pred: Vec<C64> = e0.iter().map(|x| x * (-log_der)).collect();
        let rel = max_diff(&d, &pred) / max_norm(&pred).max(1e-300);
        checks.push(TolCheck::new(cfg, "eis_derivative", format!("E'(tau,0) relation at {tau}"), rel));
        for &s in &s_list {
            let fe = completed_fe_residual(&ctx, &f, tau, s, GammaFactor::Even)?;
            let low = lowering_residual(&ctx, tau, s)?;
            checks.push(TolCheck::new(cfg, "eis_fe", format!("completed FE at {tau}, s={s}"), fe));
            checks.push(TolCheck::new(cfg, "lowering", format!("lowering at {tau}, s={s}"), low));
            let e = ctx.value(tau, s, 0)?;
            rows.push(json!({"tau": [tau.re, tau.im], "s": s, "fe_residual": fe, "lowering_residual": low, "E0": e.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>()}));
            grid.push(vec![tau.re, tau.im, s, fe, low, e[0].re, e[0].im]);
        }
        rows.push(json!({"tau": [tau.re, tau.im], "s": 0.0, "derivative_norm": max_norm(&d), "derivative_relation_residual": rel}));
    }
    let report = json!({
        "dK": f.d_k,
        "gamma_factor": "even",
        "log_derivative_Lambda_1": log_der,
        "points": rows,
    });
    let mut out = CommandOutput::new(report);
    out.checks = checks;
    out.grid = Some(Grid {
        header: vec!["tau_re", "tau_im", "s", "fe_residual", "lowering_residual", "E0_re", "E0_im"],
        rows: grid,
    });
    Ok(out)
}

pub fn eis_kappa(cfg: &RunConfig, m_max: i128, heights: &[f64]) -> Result<CommandOutput> {
    let (f, ctx, q) = l2_context(cfg)?;
    let heights = if heights.is_empty() { vec![2.0, 4.0, 8.0, 16.0] } else { heights.to_vec() };
    let mut pairs = vec![];
    for (mu, qv) in q.iter().enumerate() {
        let mut m = *qv - Q::from_integer(1);
        while m <= Q::from_integer(m_max) {
            pairs.push((mu, m));
            m += Q::from_integer(1);
        }
    }
    let t = kappa_table(&ctx, &format!("dK{}", f.d_k), &pairs, &heights, cfg.trunc("kappa_modes") as usize)?;
    let unstable: Vec<Value> = t
        .unstable(cfg.tol("kappa"))
        .iter()
        .map(|e| json!({"mu": e.mu, "m": format!("{}/{}", e.m_num, e.m_den), "residual": e.residual}))
        .collect();
    let report = json!({"dK": f.d_k, "table": t.to_json(), "unstable": unstable});
    let mut out = CommandOutput::new(report);
    out.grid = Some(Grid {
        header: vec!["mu", "m", "kappa", "residual"],
        rows: t
            .entries
            .iter()
            .map(|e| vec![e.mu as f64, e.m_num as f64 / e.m_den as f64, e.kappa, e.residual])
            .collect(),
    });
    Ok(out)
}

pub fn siegel_weil(cfg: &RunConfig, taus: &[String]) -> Result<CommandOutput> {
    let (f, u, r) = field_data(cfg)?;
    let taus = taus_or(taus, &[(0.0, 1.0), (0.0, 2.0), (1.0, 0.8)])?;
    let classes: Vec<usize> = (0..r.order()).collect();
    let rep = siegel_weil_residual(&f, &u, &r, &classes, &taus, cfg.trunc("sw_quad") as usize)?;
    let mut out = CommandOutput::new(serde_json::to_value(&rep)?);
    out.checks.push(TolCheck::new(cfg, "siegel_weil", "Siegel-Weil residual", rep.residual));
    out.grid = Some(Grid {
        header: vec!["tau_re", "tau_im", "residual"],
        rows: taus.iter().zip(&rep.per_tau).map(|(t, r)| vec![t.re, t.im, *r]).collect(),
    });
    Ok(out)
}

/// Options of the `reglift` command.
pub struct RegliftArgs {
    pub input: String,
    pub lattice: String,
    pub z: Option<String>,
    pub class: usize,
    pub t1: f64,
    pub t2: f64,
    pub t_grid: Option<String>,
    pub geodesic: bool,
}

fn lift_options(cfg: &RunConfig, t_grid: Option<&str>) -> Result<LiftOptions> {
    let mut o =
        LiftOptions { n_u: cfg.trunc("lift_n_u") as usize, n_v: cfg.trunc("lift_n_v") as usize, ..Default::default() };
    if let Some(g) = t_grid {
        o.t_grid = parse_list(g)?;
        if o.t_grid.len() < 2 || o.t_grid.iter().any(|&t| !(t > 1.0)) {
            return Err(Error::Validation("--t-grid needs at least two heights above 1".into()));
        }
    }
    Ok(o)
}

fn read_input(
    spec: &str,
    q_values: &[Q],
    denom: i64,
    cfg: &RunConfig,
    disc: Option<&geogreen_core::qspace::DiscriminantGroup>,
) -> Result<(HarmonicMaassInput, String)> {
    if spec == "j" {
        let d =
            disc.ok_or_else(|| Error::Validation("the j input is defined on the unimodular lattice only".into()))?;
        return Ok((j_input_on(d, cfg.trunc("j_terms") as usize)?, "j-744".into()));
    }
    if let Some(rest) = spec.strip_prefix("constant") {
        let c = match rest.strip_prefix(':') {
            Some(v) => v.parse::<f64>().map_err(|_| Error::Validation(format!("bad constant `{v}`")))?,
            None if rest.is_empty() => 1.0,
            None => return Err(Error::Validation(format!("unknown input `{spec}`"))),
        };
        return Ok((constant_input_on(q_values, denom, c)?, format!("constant {c}")));
    }
    let text = std::fs::read_to_string(spec).map_err(|e| Error::Config(format!("cannot read input `{spec}`: {e}")))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| Error::Config(format!("input `{spec}`: {e}")))?;
    Ok((HarmonicMaassInput::from_json(&v, q_values.to_vec())?, spec.to_string()))
}

pub fn reglift(cfg: &RunConfig, a: &RegliftArgs) -> Result<CommandOutput> {
    let opts = lift_options(cfg, a.t_grid.as_deref())?;
    match a.lattice.as_str() {
        "unimodular" => {
            let (lat, disc) = unimodular_tube_lattice()?;
            let z = parse_list(a.z.as_deref().unwrap_or("0.1,2.5,-0.2,0.9"))?;
            if z.len() != 4 {
                return Err(Error::Validation("--z needs x1,y1,x2,y2".into()));
            }
            let zp = TubePoint::new(C64::new(z[0], z[1]), C64::new(z[2], z[3]))?;
            let (f0, name) = read_input(&a.input, &dual_q_values(&disc.q_values), 1, cfg, Some(&disc))?;
            let r = reg_integral(&f0, &PointSource::Tube { lattice: &lat, disc: &disc, z: zp }, &opts)?;
            let mut out = CommandOutput::new(json!({"lattice": "M2(Z), Q = det", "input": name, "z": z, "lift": r}));
            out.checks.push(TolCheck::new(cfg, "lift_stability", "T-stability", r.stability));
            out.grid = Some(Grid {
                header: vec!["T", "value"],
                rows: r.t_grid.iter().zip(&r.values).map(|(t, v)| vec![*t, *v]).collect(),
            });
            Ok(out)
        }
        "split" => {
            let (f, u, r) = field_data(cfg)?;
            if cfg.c != 1 {
                return Err(Error::Validation("the split lattice is set up for the maximal order".into()));
            }
            let rep = r
                .reps
                .get(a.class)
                .ok_or_else(|| Error::Validation(format!("class index {} out of range", a.class)))?;
            let (_, l1, l2) = lattice_from_level(rep, 1)?;
            let d1 = dual_and_discriminant(&l1, DEFAULT_MAX_DISC_ORDER)?;
            let d2 = dual_and_discriminant(&l2, DEFAULT_MAX_DISC_ORDER)?;
            let src = PointSource::Split { l1: &l1, d1: &d1, t1: a.t1, l2: &l2, d2: &d2, t2: a.t2, h: None };
            let den = (d1.level() * d2.level()) as i64;
            let (f0, name) = read_input(&a.input, &src.input_q_values(), den, cfg, None)?;
            if a.geodesic {
                let setup = GeodesicSetup { field: &f, units: &u, l1: &l1, d1: &d1, t1: a.t1, l2: &l2, d2: &d2 };
                let translates: Vec<_> =
                    (0..r.order()).map(|k| if k == r.identity() { None } else { Some(r.reps[k].clone()) }).collect();
                let inputs = vec![f0; translates.len()];
                let mut lo = opts.clone();
                lo.s_probe.clear();
                let g = geodesic_sum(&inputs, &setup, &translates, cfg.trunc("geodesic_quad") as usize, 0.5, &lo)?;
                let out = CommandOutput::new(
                    json!({"lattice": "L1 + L2", "dK": f.d_k, "class": a.class, "input": name, "t1": a.t1, "geodesic": g}),
                );
                return Ok(out);
            }
            let res = reg_integral(&f0, &src, &opts)?;
            let mut out = CommandOutput::new(
                json!({"lattice": "L1 + L2", "dK": f.d_k, "class": a.class, "input": name, "t1": a.t1, "t2": a.t2, "lift": res}),
            );
            out.checks.push(TolCheck::new(cfg, "lift_stability", "T-stability", res.stability));
            out.grid = Some(Grid {
                header: vec!["T", "value"],
                rows: res.t_grid.iter().zip(&res.values).map(|(t, v)| vec![*t, *v]).collect(),
            });
            Ok(out)
        }
        other => Err(Error::Validation(format!("unknown lattice `{other}` (unimodular or split)"))),
    }
}

pub fn main_rhs(cfg: &RunConfig, c0: f64, vol: f64, lhs: Option<&str>) -> Result<CommandOutput> {
    let (f, u, r) = field_data(cfg)?;
    let lhs = match lhs {
        None => None,
        Some(s) => {
            let v = parse_list(s)?;
            match v.as_slice() {
                [re] => Some(C64::new(*re, 0.0)),
                [re, im] => Some(C64::new(*re, *im)),
                _ => return Err(Error::Validation("--lhs takes `re` or `re,im`".into())),
            }
        }
    };
    let opts = SyntheticOptions {
        c0,
        quad_n: cfg.trunc("geodesic_quad") as usize,
        theta_m_max: cfg.trunc("theta1_m") as i128,
        kappa_modes: cfg.trunc("kappa_modes") as usize,
        kappa_tol: cfg.tol("kappa"),
        ..Default::default()
    };
    let fam = synthetic_family(&f, &u, &r, &opts)?;
    let chars = r.characters();
    let mut items = vec![];
    for chi in chi_indices(cfg, &r)? {
        let vals = chars[chi].values();
        let rep = main_formula_rhs(&fam.classes, &vals, &f, &u, vol, lhs, FamilySource::Synthetic)?;
        let status = match &rep.gap {
            Gap::Value(_) => "computed",
            Gap::NotComputable(_) => "not-computable",
        };
        let mut v = serde_json::to_value(&rep)?;
        v["chi"] = json!(chi);
        v["gap_status"] = json!(status);
        items.push(v);
    }
    let report = json!({
        "dK": f.d_k,
        "family": "synthetic",
        "c0": c0,
        "reports": items,
        "geodesic": fam.geodesic,
        "kappa_unstable": fam.kappa_unstable,
        "warnings": fam.warnings,
    });
    Ok(CommandOutput::new(report))
}

pub fn selftest(criteria: &[u32]) -> Result<CommandOutput> {
    let ids: Vec<u32> = if criteria.is_empty() { (1..=suite::CRITERIA).collect() } else { criteria.to_vec() };
    let mut outcomes = vec![];
    for id in ids {
        let o = suite::run(id)?;
        eprintln!("{}", o.line());
        outcomes.push(o);
    }
    let failed: Vec<u32> = outcomes.iter().filter(|o| !o.pass && !o.known_deviation).map(|o| o.id).collect();
    let known: Vec<u32> = outcomes.iter().filter(|o| o.known_deviation).map(|o| o.id).collect();
    let passed: Vec<u32> = outcomes.iter().filter(|o| o.pass).map(|o| o.id).collect();
    let report = json!({
        "passed": passed,
        "known_deviations": known,
        "failed": failed,
        "outcomes": outcomes,
    });
    let mut out = CommandOutput::new(report);
    out.failed = Some(!failed.is_empty());
    Ok(out)
}
