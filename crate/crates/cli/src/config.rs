//! Flat key-value run configuration.
//!
//! One file fully determines a run: system matrices, safe set, mission
//! parameters, and the master seed. Matrices are bracketed row-major
//! literals (`A = [[1, 1], [0, 1]]`), vectors single-bracketed, scalars
//! bare. `#` starts a comment. Errors carry the line and key they refer
//! to, so a broken experiment file points at itself.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use mwsmpc::{LinearSystem, MissionSpec, Polytope};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(String),
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("missing required key `{0}`")]
    MissingKey(&'static str),
    #[error("key `{key}` (line {line}): {msg}")]
    Value {
        key: String,
        line: usize,
        msg: String,
    },
}

impl ConfigError {
    fn value(key: &str, line: usize, msg: impl Into<String>) -> Self {
        ConfigError::Value {
            key: key.to_string(),
            line,
            msg: msg.into(),
        }
    }
}

/// Fully validated run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub system: LinearSystem,
    pub safe_set: Polytope,
    pub spec: MissionSpec,
    pub s0: DVector<f64>,
    pub missions: usize,
}

const REQUIRED_KEYS: [&str; 13] = [
    "A", "B", "sigma_w", "C", "c", "Q", "R", "N", "S0", "gamma", "beta", "s0", "seed",
];
const OPTIONAL_KEYS: [&str; 3] = ["sk_cap", "mc_samples", "missions"];

const DEFAULT_SK_CAP: f64 = 0.995;
const DEFAULT_MC_SAMPLES: usize = 10_000;

pub fn parse_config_file(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let entries = lex(text)?;

    for key in entries.keys() {
        if !REQUIRED_KEYS.contains(&key.as_str()) && !OPTIONAL_KEYS.contains(&key.as_str()) {
            let (line, _) = entries[key];
            return Err(ConfigError::value(key, line, "unknown key"));
        }
    }
    for key in REQUIRED_KEYS {
        if !entries.contains_key(key) {
            return Err(ConfigError::MissingKey(key));
        }
    }

    let a = matrix(&entries, "A")?;
    let b = matrix(&entries, "B")?;
    let sigma_w = matrix(&entries, "sigma_w")?;
    let c_mat = matrix(&entries, "C")?;
    let c_off = vector(&entries, "c")?;
    let q = matrix(&entries, "Q")?;
    let r = matrix(&entries, "R")?;
    let n_mission = integer(&entries, "N")?;
    let s0_bound = scalar(&entries, "S0")?;
    let beta = scalar(&entries, "beta")?;
    let s0 = vector(&entries, "s0")?;
    let seed = integer(&entries, "seed")? as u64;
    let sk_cap = optional_scalar(&entries, "sk_cap")?.unwrap_or(DEFAULT_SK_CAP);
    let mc_samples = optional_integer(&entries, "mc_samples")?.unwrap_or(DEFAULT_MC_SAMPLES);
    let missions = optional_integer(&entries, "missions")?.unwrap_or(1);

    let sys = LinearSystem::new(a, b, sigma_w)
        .map_err(|e| keyed(&entries, "A", format!("invalid system: {e}")))?;
    let safe_set = Polytope::new(c_mat, c_off)
        .map_err(|e| keyed(&entries, "C", format!("invalid safe set: {e}")))?;
    if safe_set.dim() != sys.n() {
        return Err(keyed(
            &entries,
            "C",
            format!("safe set dimension {} but state dimension {}", safe_set.dim(), sys.n()),
        ));
    }
    if n_mission == 0 {
        return Err(keyed(&entries, "N", "mission horizon must be positive"));
    }
    let gammas = gammas(&entries, n_mission)?;

    let spec = MissionSpec {
        n_mission,
        s0_bound,
        gammas,
        beta,
        q_cost: q,
        r_cost: r,
        sk_cap,
        mc_samples,
        seed,
    };
    spec.validate(&sys).map_err(|e| {
        let key = match &e {
            mwsmpc::Error::Invalid { name, .. } => name,
            _ => "N",
        };
        keyed(&entries, key, e.to_string())
    })?;

    if s0.len() != sys.n() {
        return Err(keyed(&entries, "s0", "initial state has wrong dimension"));
    }
    if !safe_set.contains(&s0) {
        return Err(keyed(&entries, "s0", "initial state lies outside the safe set"));
    }
    if missions == 0 {
        return Err(keyed(&entries, "missions", "must be positive"));
    }

    Ok(RunConfig {
        system: sys,
        safe_set,
        spec,
        s0,
        missions,
    })
}

impl RunConfig {
    /// Canonical text form; parsing it back yields an equal configuration.
    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "A = {}", fmt_matrix(self.system.a()));
        let _ = writeln!(out, "B = {}", fmt_matrix(self.system.b()));
        let _ = writeln!(out, "sigma_w = {}", fmt_matrix(self.system.sigma_w()));
        let _ = writeln!(out, "C = {}", fmt_matrix(self.safe_set.c_mat()));
        let _ = writeln!(out, "c = {}", fmt_vector(self.safe_set.c_off()));
        let _ = writeln!(out, "Q = {}", fmt_matrix(&self.spec.q_cost));
        let _ = writeln!(out, "R = {}", fmt_matrix(&self.spec.r_cost));
        let _ = writeln!(out, "N = {}", self.spec.n_mission);
        let _ = writeln!(out, "S0 = {}", self.spec.s0_bound);
        let gamma_list: Vec<String> = self.spec.gammas.iter().map(|g| format!("{g}")).collect();
        let _ = writeln!(out, "gamma = [{}]", gamma_list.join(", "));
        let _ = writeln!(out, "beta = {}", self.spec.beta);
        let _ = writeln!(out, "s0 = {}", fmt_vector(&self.s0));
        let _ = writeln!(out, "seed = {}", self.spec.seed);
        let _ = writeln!(out, "sk_cap = {}", self.spec.sk_cap);
        let _ = writeln!(out, "mc_samples = {}", self.spec.mc_samples);
        let _ = writeln!(out, "missions = {}", self.missions);
        out
    }
}

fn fmt_matrix(m: &DMatrix<f64>) -> String {
    let rows: Vec<String> = (0..m.nrows())
        .map(|i| {
            let cells: Vec<String> = (0..m.ncols()).map(|j| format!("{}", m[(i, j)])).collect();
            format!("[{}]", cells.join(", "))
        })
        .collect();
    format!("[{}]", rows.join(", "))
}

fn fmt_vector(v: &DVector<f64>) -> String {
    let cells: Vec<String> = v.iter().map(|x| format!("{x}")).collect();
    format!("[{}]", cells.join(", "))
}

type Entries = BTreeMap<String, (usize, String)>;

fn lex(text: &str) -> Result<Entries, ConfigError> {
    let mut entries = Entries::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw_line.find('#') {
            Some(pos) => &raw_line[..pos],
            None => raw_line,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let Some(eq) = line.find('=') else {
            return Err(ConfigError::Syntax {
                line: line_no,
                msg: format!("expected `key = value`, got `{line}`"),
            });
        };
        let key = line[..eq].trim();
        let value = line[eq + 1..].trim();
        if key.is_empty() || value.is_empty() {
            return Err(ConfigError::Syntax {
                line: line_no,
                msg: "empty key or value".into(),
            });
        }
        if entries
            .insert(key.to_string(), (line_no, value.to_string()))
            .is_some()
        {
            return Err(ConfigError::Syntax {
                line: line_no,
                msg: format!("duplicate key `{key}`"),
            });
        }
    }
    Ok(entries)
}

fn keyed(entries: &Entries, key: &str, msg: impl Into<String>) -> ConfigError {
    let line = entries.get(key).map(|(l, _)| *l).unwrap_or(0);
    ConfigError::value(key, line, msg)
}

fn raw<'a>(entries: &'a Entries, key: &str) -> (usize, &'a str) {
    let (line, value) = &entries[key];
    (*line, value.as_str())
}

fn parse_number(key: &str, line: usize, token: &str) -> Result<f64, ConfigError> {
    token
        .trim()
        .parse::<f64>()
        .map_err(|_| ConfigError::value(key, line, format!("`{}` is not a number", token.trim())))
}

fn scalar(entries: &Entries, key: &str) -> Result<f64, ConfigError> {
    let (line, value) = raw(entries, key);
    if value.starts_with('[') {
        return Err(ConfigError::value(key, line, "expected a scalar"));
    }
    parse_number(key, line, value)
}

fn optional_scalar(entries: &Entries, key: &str) -> Result<Option<f64>, ConfigError> {
    if entries.contains_key(key) {
        scalar(entries, key).map(Some)
    } else {
        Ok(None)
    }
}

fn integer(entries: &Entries, key: &str) -> Result<usize, ConfigError> {
    let (line, value) = raw(entries, key);
    value
        .parse::<usize>()
        .map_err(|_| ConfigError::value(key, line, format!("`{value}` is not a nonnegative integer")))
}

fn optional_integer(entries: &Entries, key: &str) -> Result<Option<usize>, ConfigError> {
    if entries.contains_key(key) {
        integer(entries, key).map(Some)
    } else {
        Ok(None)
    }
}

fn split_top_level(inner: &str) -> Vec<String> {
    let mut parts = Vec::new();
    let mut depth = 0i32;
    let mut current = String::new();
    for ch in inner.chars() {
        match ch {
            '[' => {
                depth += 1;
                current.push(ch);
            }
            ']' => {
                depth -= 1;
                current.push(ch);
            }
            ',' if depth == 0 => {
                parts.push(current.trim().to_string());
                current.clear();
            }
            _ => current.push(ch),
        }
    }
    if !current.trim().is_empty() {
        parts.push(current.trim().to_string());
    }
    parts
}

fn vector_from(key: &str, line: usize, value: &str) -> Result<DVector<f64>, ConfigError> {
    let trimmed = value.trim();
    if !trimmed.starts_with('[') || !trimmed.ends_with(']') {
        return Err(ConfigError::value(key, line, "expected a bracketed vector"));
    }
    let inner = &trimmed[1..trimmed.len() - 1];
    let parts = split_top_level(inner);
    if parts.is_empty() {
        return Err(ConfigError::value(key, line, "vector is empty"));
    }
    let mut data = Vec::with_capacity(parts.len());
    for p in &parts {
        if p.starts_with('[') {
            return Err(ConfigError::value(key, line, "expected a vector, found nested rows"));
        }
        data.push(parse_number(key, line, p)?);
    }
    Ok(DVector::from_vec(data))
}

fn vector(entries: &Entries, key: &str) -> Result<DVector<f64>, ConfigError> {
    let (line, value) = raw(entries, key);
    vector_from(key, line, value)
}

fn matrix(entries: &Entries, key: &str) -> Result<DMatrix<f64>, ConfigError> {
    let (line, value) = raw(entries, key);
    let trimmed = value.trim();
    if !trimmed.starts_with('[') || !trimmed.ends_with(']') {
        return Err(ConfigError::value(key, line, "expected a bracketed matrix"));
    }
    let inner = &trimmed[1..trimmed.len() - 1];
    let rows = split_top_level(inner);
    if rows.is_empty() {
        return Err(ConfigError::value(key, line, "matrix is empty"));
    }
    let mut data: Vec<Vec<f64>> = Vec::with_capacity(rows.len());
    for row in &rows {
        if !row.starts_with('[') || !row.ends_with(']') {
            return Err(ConfigError::value(
                key,
                line,
                format!("matrix rows must be bracketed, got `{row}`"),
            ));
        }
        let cells = split_top_level(&row[1..row.len() - 1]);
        let mut parsed = Vec::with_capacity(cells.len());
        for cell in &cells {
            parsed.push(parse_number(key, line, cell)?);
        }
        if let Some(first) = data.first() {
            if parsed.len() != first.len() {
                return Err(ConfigError::value(key, line, "matrix rows have unequal lengths"));
            }
        }
        data.push(parsed);
    }
    let nrows = data.len();
    let ncols = data[0].len();
    if ncols == 0 {
        return Err(ConfigError::value(key, line, "matrix rows are empty"));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| data[i][j]))
}

/// `gamma` accepts a scalar (expanded to all N-1 switches) or an explicit
/// list of length N-1.
fn gammas(entries: &Entries, n_mission: usize) -> Result<Vec<f64>, ConfigError> {
    let (line, value) = raw(entries, "gamma");
    let list = if value.trim().starts_with('[') {
        if value.trim() == "[]" {
            Vec::new()
        } else {
            vector_from("gamma", line, value)?.iter().cloned().collect()
        }
    } else {
        let g = parse_number("gamma", line, value)?;
        vec![g; n_mission - 1]
    };
    if list.len() != n_mission - 1 {
        return Err(ConfigError::value(
            "gamma",
            line,
            format!("expected {} entries for N = {n_mission}, got {}", n_mission - 1, list.len()),
        ));
    }
    for (i, g) in list.iter().enumerate() {
        if !(*g > 0.0 && *g <= 1.0) {
            return Err(ConfigError::value(
                "gamma",
                line,
                format!("entry {i} is {g}, must lie in (0, 1]"),
            ));
        }
    }
    Ok(list)
}
