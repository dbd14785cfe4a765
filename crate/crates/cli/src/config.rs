//! Run configuration: a line-oriented `key = value` file with `[section]`
//! headers, overridden by command-line flags.
//!
//! Top-level keys: `curve`, `d`, `c`, `chi` (an index or `all`), `cache_dir`,
//! `threads`, `tol_scale`. Sections: `[tolerances]` (name = positive real)
//! and `[truncations]` (name = positive integer). `#` starts a comment.
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// Configuration error with the offending location.
#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}:{line}: {msg}")]
    Syntax { path: String, line: usize, msg: String },
    #[error("{0}")]
    Invalid(String),
    #[error("cannot read {path}: {source}")]
    Read { path: String, source: std::io::Error },
}

/// Which ring class characters a job runs over.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChiSel {
    Index(usize),
    All,
}

impl ChiSel {
    pub fn parse(s: &str) -> Result<Self, ConfigError> {
        if s == "all" {
            return Ok(Self::All);
        }
        s.parse()
            .map(Self::Index)
            .map_err(|_| ConfigError::Invalid(format!("chi must be an index or `all`, got `{s}`")))
    }
}

/// Everything a subcommand needs besides its own flags.
#[derive(Clone, Debug)]
pub struct RunConfig {
    /// Built-in label (`11a`, `37a`), a curve JSON file or a coefficient CSV file.
    pub curve: Option<String>,
    pub d: Option<i128>,
    pub c: i128,
    pub chi: ChiSel,
    pub tolerances: BTreeMap<String, f64>,
    pub truncations: BTreeMap<String, i64>,
    pub cache_dir: Option<PathBuf>,
    pub threads: usize,
    pub tol_scale: f64,
}

/// Tolerances every command starts from.
pub fn default_tolerances() -> BTreeMap<String, f64> {
    [
        ("class_number", 1e-6),
        ("fe", 1e-6),
        ("estimator_gap", 1e-6),
        ("eis_fe", 1e-5),
        ("lowering", 1e-5),
        ("eis_derivative", 1e-5),
        ("siegel_weil", 1e-3),
        ("lift_stability", 1e-4),
        ("kappa", 1e-4),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

/// Truncations every command starts from.
pub fn default_truncations() -> BTreeMap<String, i64> {
    [
        ("coeffs", 100),
        ("theta_m", 50),
        ("sw_quad", 48),
        ("geodesic_quad", 8),
        ("kappa_modes", 16),
        ("lift_n_u", 20),
        ("lift_n_v", 12),
        ("j_terms", 24),
        ("theta1_m", 2),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            curve: None,
            d: None,
            c: 1,
            chi: ChiSel::Index(0),
            tolerances: default_tolerances(),
            truncations: default_truncations(),
            cache_dir: None,
            threads: 1,
            tol_scale: 1.0,
        }
    }
}

impl RunConfig {
    /// Tolerance `name` times the global scale.
    pub fn tol(&self, name: &str) -> f64 {
        self.tolerances.get(name).copied().unwrap_or(1e-6) * self.tol_scale
    }

    pub fn trunc(&self, name: &str) -> i64 {
        self.truncations.get(name).copied().unwrap_or(0)
    }

    /// Parses a configuration file on top of the defaults.
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Read { path: path.display().to_string(), source })?;
        let mut cfg = Self::default();
        cfg.apply_text(&text, &path.display().to_string())?;
        Ok(cfg)
    }

    /// Applies `key = value` lines to this configuration.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), ConfigError> {
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let err = |msg: String| ConfigError::Syntax { path: origin.to_string(), line: i + 1, msg };
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| err("unterminated section header".into()))?;
                let name = name.trim();
                if !matches!(name, "tolerances" | "truncations") {
                    return Err(err(format!("unknown section `{name}`")));
                }
                section = name.to_string();
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| err("expected `key = value`".into()))?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() || v.is_empty() {
                return Err(err("empty key or value".into()));
            }
            match section.as_str() {
                "tolerances" => {
                    let x: f64 = v.parse().map_err(|_| err(format!("tolerance `{k}` is not a number")))?;
                    if !(x > 0.0) || !x.is_finite() {
                        return Err(err(format!("tolerance `{k}` must be positive")));
                    }
                    self.tolerances.insert(k.to_string(), x);
                }
                "truncations" => {
                    let n: i64 = v.parse().map_err(|_| err(format!("truncation `{k}` is not an integer")))?;
                    if n <= 0 {
                        return Err(err(format!("truncation `{k}` must be positive")));
                    }
                    self.truncations.insert(k.to_string(), n);
                }
                _ => self.set_top(k, v).map_err(|e| err(e.to_string()))?,
            }
        }
        Ok(())
    }

    fn set_top(&mut self, k: &str, v: &str) -> Result<(), ConfigError> {
        let int = |v: &str| -> Result<i128, ConfigError> {
            v.parse().map_err(|_| ConfigError::Invalid(format!("`{k}` must be an integer")))
        };
        match k {
            "curve" => self.curve = Some(v.to_string()),
            "d" => self.d = Some(int(v)?),
            "c" => self.c = int(v)?,
            "chi" => self.chi = ChiSel::parse(v)?,
            "cache_dir" => self.cache_dir = Some(PathBuf::from(v)),
            "threads" => self.threads = int(v)?.max(1) as usize,
            "tol_scale" => {
                self.tol_scale = v.parse().map_err(|_| ConfigError::Invalid("`tol_scale` must be a number".into()))?
            }
            _ => return Err(ConfigError::Invalid(format!("unknown key `{k}`"))),
        }
        Ok(())
    }

    /// Checks invariants after flags have been applied.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.tol_scale > 0.0) || !self.tol_scale.is_finite() {
            return Err(ConfigError::Invalid("tol_scale must be positive".into()));
        }
        if self.c < 1 {
            return Err(ConfigError::Invalid("conductor c must be positive".into()));
        }
        if let Some(c) = &self.curve {
            if !is_builtin_curve(c) && !Path::new(c).exists() {
                return Err(ConfigError::Invalid(format!("curve file `{c}` does not exist")));
            }
        }
        Ok(())
    }
}

/// Curves available without a file.
pub fn is_builtin_curve(s: &str) -> bool {
    matches!(s, "11a" | "37a")
}
