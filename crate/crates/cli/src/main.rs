//! `geogreen`: command-line front end. Every invocation prints one JSON
//! object on stdout. Exit codes: 0 ok, 2 usage, 3 configuration,
//! 4 numeric tolerance, 5 cache corruption.
// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity)]
mod commands;
mod config;

use clap::{Args, Parser, Subcommand};
use commands::CommandOutput;
use config::{ChiSel, ConfigError, RunConfig};
use geogreen_core::error::Error;
use serde_json::{json, Value};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "geogreen",
    version,
    about = "Central derivatives, Weil representations and regularized theta lifts over real quadratic fields"
)]
struct Cli {
    /// Configuration file (`key = value` lines with `[tolerances]` and `[truncations]` sections).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Multiplies every tolerance.
    #[arg(long, global = true)]
    tol_scale: Option<f64>,
    /// Writes the command's sampling grid as CSV to this path.
    #[arg(long, global = true)]
    emit_grid: Option<PathBuf>,
    /// Cache directory (the GEOGREEN_CACHE environment variable takes precedence).
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
    /// Worker threads; 1 runs sequentially.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Fundamental discriminant d_K (or a squarefree radicand).
    #[arg(long)]
    d: Option<i128>,
    /// Conductor of the order.
    #[arg(long)]
    c: Option<i128>,
    /// Curve: `11a`, `37a`, a curve JSON file or a coefficient CSV file.
    #[arg(long)]
    curve: Option<String>,
    /// Ring class character index, or `all`.
    #[arg(long)]
    chi: Option<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Field data: discriminant, Pell solution, units, class number check.
    Field(Common),
    /// Ring class group with representatives, composition table and characters.
    Classgroup {
        #[command(flatten)]
        common: Common,
        /// Level whose primes the representatives avoid.
        #[arg(long, default_value_t = 1)]
        level: i128,
    },
    /// Newform coefficients c(1..m), optionally twisted by the field character.
    Coeffs {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        twist: bool,
        /// Level of a coefficient CSV file.
        #[arg(long)]
        level: Option<u64>,
    },
    /// Representation numbers r_A(m) per class and the divisor-sum identity.
    Theta {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        m: Option<u64>,
    },
    /// Rankin-Selberg central value with functional-equation residuals.
    Lvalue(Common),
    /// Rankin-Selberg central derivative report.
    Lderiv(Common),
    /// Eisenstein series: completed functional equation, lowering, s-derivative at 0.
    EisFe {
        #[command(flatten)]
        common: Common,
        /// Comma-separated s values.
        #[arg(long)]
        s: Option<String>,
        /// Point `x,y` (repeatable).
        #[arg(long)]
        tau: Vec<String>,
    },
    /// κ-coefficients of the L2 Eisenstein series.
    EisKappa {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1)]
        m_max: i128,
        /// Comma-separated heights.
        #[arg(long)]
        heights: Option<String>,
    },
    /// Siegel-Weil comparison with one fitted constant.
    SiegelWeil {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        tau: Vec<String>,
    },
    /// Regularized theta lift at a point, or its geodesic sum.
    Reglift {
        #[command(flatten)]
        common: Common,
        /// `j`, `constant[:c]`, or a q-expansion JSON file with a `minus` array.
        #[arg(long, default_value = "j")]
        input: String,
        /// `unimodular` (M2(Z) with Q = det) or `split` (L1 + L2 of a class).
        #[arg(long, default_value = "unimodular")]
        lattice: String,
        /// Tube point `x1,y1,x2,y2` (unimodular lattice).
        #[arg(long)]
        z: Option<String>,
        #[arg(long, default_value_t = 0)]
        class: usize,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        t1: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        t2: f64,
        /// Comma-separated truncation heights.
        #[arg(long)]
        t_grid: Option<String>,
        /// Average over the closed geodesic of L2 (split lattice).
        #[arg(long)]
        geodesic: bool,
    },
    /// Right side of the main formula for the synthetic family.
    MainRhs {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1.0)]
        c0: f64,
        /// vol(U_2).
        #[arg(long, default_value_t = 1.0)]
        vol: f64,
        /// Left side `re[,im]`, when available.
        #[arg(long, allow_hyphen_values = true)]
        lhs: Option<String>,
    },
    /// Runs the acceptance suite (all criteria or a comma-separated subset).
    Selftest {
        #[arg(long, value_delimiter = ',')]
        criteria: Vec<u32>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Validation(_) => 2,
        Error::Config(_) | Error::Io(_) | Error::Json(_) => 3,
        Error::Numeric(_) | Error::Overflow(_) => 4,
        Error::Cache(_) => 5,
    }
}

fn kind(e: &Error) -> &'static str {
    match e {
        Error::Validation(_) => "usage",
        Error::Config(_) | Error::Io(_) | Error::Json(_) => "config",
        Error::Numeric(_) | Error::Overflow(_) => "numeric",
        Error::Cache(_) => "cache",
    }
}

fn emit(v: &Value) {
    use std::io::Write;
    let text = serde_json::to_string_pretty(v).expect("JSON values serialize");
    // A closed downstream pipe is not an error for a report printer.
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn fail(kind: &str, message: String, code: u8) -> ExitCode {
    emit(&json!({"error": {"kind": kind, "message": message, "exit_code": code}}));
    ExitCode::from(code)
}

fn build_config(cli: &Cli, common: Option<&Common>) -> Result<RunConfig, ConfigError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    if let Some(c) = common {
        if let Some(d) = c.d {
            cfg.d = Some(d);
        }
        if let Some(cc) = c.c {
            cfg.c = cc;
        }
        if let Some(cv) = &c.curve {
            cfg.curve = Some(cv.clone());
        }
        if let Some(chi) = &c.chi {
            cfg.chi = ChiSel::parse(chi)?;
        }
    }
    if let Some(s) = cli.tol_scale {
        cfg.tol_scale = s;
    }
    if let Some(p) = &cli.cache_dir {
        cfg.cache_dir = Some(p.clone());
    }
    if let Some(t) = cli.threads {
        cfg.threads = t.max(1);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn common_of(cmd: &Cmd) -> Option<&Common> {
    match cmd {
        Cmd::Field(c) | Cmd::Lvalue(c) | Cmd::Lderiv(c) => Some(c),
        Cmd::Classgroup { common, .. }
        | Cmd::Coeffs { common, .. }
        | Cmd::Theta { common, .. }
        | Cmd::EisFe { common, .. }
        | Cmd::EisKappa { common, .. }
        | Cmd::SiegelWeil { common, .. }
        | Cmd::Reglift { common, .. }
        | Cmd::MainRhs { common, .. } => Some(common),
        Cmd::Selftest { .. } => None,
    }
}

fn list_or_empty(s: &Option<String>) -> geogreen_core::error::Result<Vec<f64>> {
    s.as_deref().map(commands::parse_list).transpose().map(Option::unwrap_or_default)
}

fn dispatch(cli: &Cli, cfg: &RunConfig) -> geogreen_core::error::Result<(&'static str, CommandOutput)> {
    Ok(match &cli.cmd {
        Cmd::Field(_) => ("field", commands::field(cfg)?),
        Cmd::Classgroup { level, .. } => ("classgroup", commands::classgroup(cfg, *level)?),
        Cmd::Coeffs { m, twist, level, .. } => ("coeffs", commands::coeffs(cfg, *m, *twist, *level)?),
        Cmd::Theta { m, .. } => ("theta", commands::theta(cfg, *m)?),
        Cmd::Lvalue(_) => ("lvalue", commands::lvalue(cfg)?),
        Cmd::Lderiv(_) => ("lderiv", commands::lderiv(cfg)?),
        Cmd::EisFe { s, tau, .. } => ("eis-fe", commands::eis_fe(cfg, &list_or_empty(s)?, tau)?),
        Cmd::EisKappa { m_max, heights, .. } => {
            ("eis-kappa", commands::eis_kappa(cfg, *m_max, &list_or_empty(heights)?)?)
        }
        Cmd::SiegelWeil { tau, .. } => ("siegel-weil", commands::siegel_weil(cfg, tau)?),
        Cmd::Reglift { input, lattice, z, class, t1, t2, t_grid, geodesic, .. } => (
            "reglift",
            commands::reglift(
                cfg,
                &commands::RegliftArgs {
                    input: input.clone(),
                    lattice: lattice.clone(),
                    z: z.clone(),
                    class: *class,
                    t1: *t1,
                    t2: *t2,
                    t_grid: t_grid.clone(),
                    geodesic: *geodesic,
                },
            )?,
        ),
        Cmd::MainRhs { c0, vol, lhs, .. } => ("main-rhs", commands::main_rhs(cfg, *c0, *vol, lhs.as_deref())?),
        Cmd::Selftest { criteria } => ("selftest", commands::selftest(criteria)?),
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(
                e.kind(),
                ErrorKind::DisplayHelp
                    | ErrorKind::DisplayVersion
                    | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand
            ) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            return fail("usage", e.to_string().trim().to_string(), 2);
        }
    };
    let cfg = match build_config(&cli, common_of(&cli.cmd)) {
        Ok(c) => c,
        Err(e) => return fail("config", e.to_string(), 3),
    };
    geogreen_core::par::set_threads(cfg.threads);
    let (name, out) = match dispatch(&cli, &cfg) {
        Ok(x) => x,
        Err(e) => return fail(kind(&e), e.to_string(), exit_code(&e)),
    };
    if let Some(path) = &cli.emit_grid {
        let Some(grid) = &out.grid else {
            return fail("usage", format!("`{name}` has no grid to emit"), 2);
        };
        if let Err(e) = std::fs::write(path, grid.to_csv()) {
            return fail("config", format!("cannot write grid to {}: {e}", path.display()), 3);
        }
    }
    let failures: Vec<Value> = out
        .checks
        .iter()
        .filter(|c| !c.ok())
        .map(|c| json!({"name": c.name, "value": c.value, "tol": c.tol}))
        .collect();
    let failed = out.failed.unwrap_or(!failures.is_empty());
    let mut report = out.report;
    if let Value::Object(o) = &mut report {
        o.insert("command".into(), json!(name));
        o.insert(
            "tolerance_checks".into(),
            json!(out
                .checks
                .iter()
                .map(|c| json!({"name": c.name, "value": c.value, "tol": c.tol, "ok": c.ok()}))
                .collect::<Vec<_>>()),
        );
        if failed {
            o.insert(
                "error".into(),
                json!({"kind": "numeric", "message": "tolerance check failed", "failures": failures, "exit_code": 4}),
            );
        }
    }
    emit(&report);
    if failed {
        ExitCode::from(4)
    } else {
        ExitCode::SUCCESS
    }
}
