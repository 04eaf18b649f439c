//! Scenario files: line-based `key = value` pairs under `[section]` headers.
//!
//! ```text
//! [domain]
//! kind = unit_ball_3d
//! [potential]
//! family = hardy_boundary
//! a = 0.1
//! gamma = 2
//! truncation_k = 32
//! ```
//!
//! `#` starts a comment. Every key is optional except the parameters of the
//! chosen potential family; see [`Scenario::default`] for the defaults.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{DomainKind, ModelDomain};
use crate::error::{Error, Result};
use crate::mesh::{MIN_ANGULAR, MIN_RADIAL};
use crate::operators::PotentialForm;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub kind: DomainKind,
    pub truncation_radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeshSpec {
    pub n_radial: usize,
    pub n_angular: usize,
    pub boundary_n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    pub form: PotentialForm,
    pub truncation_k: Option<u32>,
}

/// Which analyses to run, plus switches for the expensive or
/// nondeterministic extras.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSpec {
    pub solve: bool,
    pub conditions: bool,
    pub estimates: bool,
    pub riccati: bool,
    /// Compare the series against a dense LU solve.
    pub oracle: bool,
    /// Record wall-clock times. Off makes reports bit-reproducible.
    pub timing: bool,
    /// Probe points for the boundary-integral estimate.
    pub probes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub tol_series: f64,
    pub tol_power: f64,
    pub j_max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    pub domain: DomainSpec,
    pub mesh: MeshSpec,
    pub potential: PotentialSpec,
    pub run: RunSpec,
    pub tolerances: Tolerances,
    /// Constants at which `∫ e^{C P*(δq)} dσ` is evaluated.
    pub exp_constants: Vec<f64>,
    pub seed: u64,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            id: "scenario".into(),
            domain: DomainSpec { kind: DomainKind::UnitBall3D, truncation_radius: 4.0 },
            mesh: MeshSpec { n_radial: 16, n_angular: 16, boundary_n: 16 },
            potential: PotentialSpec { form: PotentialForm::Zero, truncation_k: None },
            run: RunSpec {
                solve: true,
                conditions: true,
                estimates: true,
                riccati: true,
                oracle: true,
                timing: true,
                probes: 32,
            },
            tolerances: Tolerances { tol_series: 1e-8, tol_power: 1e-10, j_max: 10_000 },
            exp_constants: vec![0.5, 1.0, 2.0],
            seed: 0,
        }
    }
}

const HARDY_DEFAULT_K: u32 = 16;

const KEYS: &[(&str, &[&str])] = &[
    ("domain", &["kind", "truncation_radius"]),
    ("mesh", &["n_radial", "n_angular", "boundary_n"]),
    ("potential", &["family", "lambda", "a", "gamma", "radius", "center", "truncation_k"]),
    ("run", &["id", "stages", "oracle", "timing", "probes", "seed", "exp_constants"]),
    ("tolerances", &["tol_series", "tol_power", "j_max"]),
];

struct Entry {
    value: String,
    line: usize,
}

type Table = BTreeMap<(&'static str, &'static str), Entry>;

fn tokenize(text: &str) -> Result<Table> {
    let mut table = Table::new();
    let mut section: Option<&'static str> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| Error::ConfigParse { line, msg: format!("unterminated section header `{content}`") })?
                .trim();
            section = Some(
                KEYS.iter()
                    .find(|(s, _)| *s == name)
                    .map(|(s, _)| *s)
                    .ok_or_else(|| Error::ConfigParse { line, msg: format!("unknown section `[{name}]`") })?,
            );
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| Error::ConfigParse { line, msg: format!("expected `key = value`, found `{content}`") })?;
        let (key, value) = (key.trim(), value.trim());
        let sec = section.ok_or_else(|| Error::ConfigParse { line, msg: format!("key `{key}` outside any section") })?;
        if key.is_empty() || value.is_empty() {
            return Err(Error::ConfigParse { line, msg: format!("expected `key = value`, found `{content}`") });
        }
        let allowed = KEYS.iter().find(|(s, _)| *s == sec).expect("known section").1;
        let key = allowed
            .iter()
            .find(|k| **k == key)
            .copied()
            .ok_or_else(|| Error::ConfigParse { line, msg: format!("unknown key `{key}` in [{sec}]") })?;
        if let Some(prev) = table.get(&(sec, key)) {
            return Err(Error::ConfigParse {
                line,
                msg: format!("duplicate key `{key}` in [{sec}] (lines {} and {line})", prev.line),
            });
        }
        table.insert((sec, key), Entry { value: value.to_string(), line });
    }
    Ok(table)
}

fn parse_value<T: std::str::FromStr>(table: &Table, sec: &'static str, key: &'static str) -> Result<Option<T>> {
    match table.get(&(sec, key)) {
        None => Ok(None),
        Some(e) => e.value.parse().map(Some).map_err(|_| Error::ConfigParse {
            line: e.line,
            msg: format!("cannot parse `{}` as the value of `{key}`", e.value),
        }),
    }
}

fn parse_list(table: &Table, sec: &'static str, key: &'static str) -> Result<Option<Vec<f64>>> {
    let Some(e) = table.get(&(sec, key)) else { return Ok(None) };
    e.value
        .split(',')
        .map(|s| {
            s.trim().parse::<f64>().map_err(|_| Error::ConfigParse {
                line: e.line,
                msg: format!("cannot parse `{}` in the list `{key}`", s.trim()),
            })
        })
        .collect::<Result<Vec<_>>>()
        .map(Some)
}

fn required(table: &Table, family: &str, key: &'static str) -> Result<f64> {
    parse_value(table, "potential", key)?
        .ok_or_else(|| Error::Config(format!("potential family `{family}` requires `{key}`")))
}

fn parse_potential(table: &Table) -> Result<PotentialSpec> {
    let family = table.get(&("potential", "family")).map_or("zero", |e| e.value.as_str());
    let uses: &[&str] = match family {
        "zero" => &[],
        "constant" => &["lambda"],
        "hardy_boundary" => &["a", "gamma", "truncation_k"],
        "radial_bump" => &["a", "radius", "center", "truncation_k"],
        "inverse_square_origin" => &["a", "truncation_k"],
        other => {
            let line = table.get(&("potential", "family")).map_or(0, |e| e.line);
            return Err(Error::ConfigParse { line, msg: format!("unknown potential family `{other}`") });
        }
    };
    for ((sec, key), e) in table {
        if *sec == "potential" && *key != "family" && !uses.contains(key) {
            return Err(Error::ConfigParse {
                line: e.line,
                msg: format!("key `{key}` does not apply to potential family `{family}`"),
            });
        }
    }
    let form = match family {
        "zero" => PotentialForm::Zero,
        "constant" => PotentialForm::Constant { lambda: required(table, family, "lambda")? },
        "hardy_boundary" => PotentialForm::HardyBoundary {
            a: required(table, family, "a")?,
            gamma: required(table, family, "gamma")?,
        },
        "radial_bump" => {
            let center = match parse_list(table, "potential", "center")? {
                None => [0.0; 3],
                Some(c) if c.len() == 2 || c.len() == 3 => [c[0], c[1], c.get(2).copied().unwrap_or(0.0)],
                Some(_) => {
                    let line = table[&("potential", "center")].line;
                    return Err(Error::ConfigParse { line, msg: "`center` needs 2 or 3 coordinates".into() });
                }
            };
            PotentialForm::RadialBump { a: required(table, family, "a")?, radius: required(table, family, "radius")?, center }
        }
        _ => PotentialForm::InverseSquareOrigin { a: required(table, family, "a")? },
    };
    let mut truncation_k = parse_value(table, "potential", "truncation_k")?;
    if family == "hardy_boundary" && truncation_k.is_none() {
        truncation_k = Some(HARDY_DEFAULT_K);
    }
    Ok(PotentialSpec { form, truncation_k })
}

fn parse_bool(table: &Table, key: &'static str) -> Result<Option<bool>> {
    let Some(e) = table.get(&("run", key)) else { return Ok(None) };
    match e.value.as_str() {
        "true" | "yes" | "on" => Ok(Some(true)),
        "false" | "no" | "off" => Ok(Some(false)),
        v => Err(Error::ConfigParse { line: e.line, msg: format!("`{key}` must be true or false, found `{v}`") }),
    }
}

/// Parses scenario text. Keys absent from the text keep their defaults.
pub fn parse_config_str(text: &str) -> Result<Scenario> {
    let table = tokenize(text)?;
    let mut s = Scenario::default();
    if let Some(e) = table.get(&("domain", "kind")) {
        s.domain.kind = DomainKind::parse(&e.value)
            .ok_or_else(|| Error::ConfigParse { line: e.line, msg: format!("unknown domain kind `{}`", e.value) })?;
    }
    if let Some(r) = parse_value(&table, "domain", "truncation_radius")? {
        s.domain.truncation_radius = r;
    }
    if let Some(v) = parse_value(&table, "mesh", "n_radial")? {
        s.mesh.n_radial = v;
    }
    if let Some(v) = parse_value(&table, "mesh", "n_angular")? {
        s.mesh.n_angular = v;
    }
    s.mesh.boundary_n = parse_value(&table, "mesh", "boundary_n")?.unwrap_or(s.mesh.n_angular);
    s.potential = parse_potential(&table)?;
    if let Some(id) = table.get(&("run", "id")) {
        s.id = id.value.clone();
    }
    if let Some(e) = table.get(&("run", "stages")) {
        s.run.solve = false;
        s.run.conditions = false;
        s.run.estimates = false;
        s.run.riccati = false;
        for stage in e.value.split(',').map(str::trim) {
            match stage {
                "solve" => s.run.solve = true,
                "conditions" => s.run.conditions = true,
                "estimates" => s.run.estimates = true,
                "riccati" => s.run.riccati = true,
                other => {
                    return Err(Error::ConfigParse { line: e.line, msg: format!("unknown stage `{other}`") });
                }
            }
        }
    }
    if let Some(v) = parse_bool(&table, "oracle")? {
        s.run.oracle = v;
    }
    if let Some(v) = parse_bool(&table, "timing")? {
        s.run.timing = v;
    }
    if let Some(v) = parse_value(&table, "run", "probes")? {
        s.run.probes = v;
    }
    if let Some(v) = parse_value(&table, "run", "seed")? {
        s.seed = v;
    }
    if let Some(v) = parse_list(&table, "run", "exp_constants")? {
        s.exp_constants = v;
    }
    if let Some(v) = parse_value(&table, "tolerances", "tol_series")? {
        s.tolerances.tol_series = v;
    }
    if let Some(v) = parse_value(&table, "tolerances", "tol_power")? {
        s.tolerances.tol_power = v;
    }
    if let Some(v) = parse_value(&table, "tolerances", "j_max")? {
        s.tolerances.j_max = v;
    }
    s.validate()?;
    Ok(s)
}

pub fn parse_config(path: &Path) -> Result<Scenario> {
    parse_config_str(&std::fs::read_to_string(path)?)
}

impl Scenario {
    pub fn model_domain(&self) -> Result<ModelDomain> {
        ModelDomain::new(self.domain.kind, self.domain.truncation_radius)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        let t = &self.tolerances;
        if !(t.tol_series > 0.0 && t.tol_power > 0.0) || t.j_max == 0 {
            return bad("tolerances must be positive".into());
        }
        if self.mesh.n_radial < MIN_RADIAL || self.mesh.n_angular < MIN_ANGULAR || self.mesh.boundary_n < MIN_ANGULAR {
            return bad(format!(
                "mesh needs n_radial ≥ {MIN_RADIAL}, n_angular ≥ {MIN_ANGULAR} and boundary_n ≥ {MIN_ANGULAR}"
            ));
        }
        if self.potential.truncation_k == Some(0) {
            return bad("truncation_k must be positive".into());
        }
        if self.exp_constants.iter().any(|c| !c.is_finite()) {
            return bad("exp_constants must be finite".into());
        }
        self.model_domain()?;
        Ok(())
    }

    /// The scenario with one parameter replaced. Integer axes round `value`.
    pub fn with_axis(&self, axis: &str, value: f64) -> Result<Scenario> {
        let mut s = self.clone();
        let count = || -> Result<usize> {
            if value >= 0.0 && value.fract() == 0.0 {
                Ok(value as usize)
            } else {
                Err(Error::Config(format!("axis `{axis}` needs whole numbers, got {value}")))
            }
        };
        let form = &mut s.potential.form;
        match (axis, form) {
            ("lambda", PotentialForm::Constant { lambda }) => *lambda = value,
            ("a", PotentialForm::HardyBoundary { a, .. })
            | ("a", PotentialForm::RadialBump { a, .. })
            | ("a", PotentialForm::InverseSquareOrigin { a }) => *a = value,
            ("gamma", PotentialForm::HardyBoundary { gamma, .. }) => *gamma = value,
            ("radius", PotentialForm::RadialBump { radius, .. }) => *radius = value,
            ("truncation_k", _) => s.potential.truncation_k = Some(count()? as u32),
            ("truncation_radius", _) => s.domain.truncation_radius = value,
            ("n_radial", _) => s.mesh.n_radial = count()?,
            ("n_angular", _) => s.mesh.n_angular = count()?,
            ("boundary_n", _) => s.mesh.boundary_n = count()?,
            ("resolution", _) => {
                let n = count()?;
                s.mesh = MeshSpec { n_radial: n, n_angular: n, boundary_n: n };
            }
            ("seed", _) => s.seed = count()? as u64,
            (other, form) => {
                return Err(Error::Config(format!(
                    "cannot sweep `{other}` for potential family `{}`",
                    form.family()
                )))
            }
        }
        s.id = format!("{}/{axis}={value}", self.id);
        s.validate()?;
        Ok(s)
    }
}
