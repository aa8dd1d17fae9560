//! Flat `key = value` experiment configs.
//!
//! One assignment per line; `#` starts a comment. Unknown keys, repeated keys
//! and malformed values are errors that name the file, line and key. The
//! recognized keys are listed in [`KEYS`] and documented in the README.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use kodlab_core::model::ModelSpace;
use kodlab_core::sections::{BundleSpec, TorusFn, Twist};
use kodlab_core::zeros::{MeasureKind, TestFunction};
use kodlab_core::C64;
use nalgebra::DMatrix;
use sha2::{Digest, Sha256};

pub const KEYS: &[&str] = &[
    "experiment",
    "model",
    "p",
    "grid",
    "degrees",
    "allow_high_rank",
    "e.conformal",
    "e.constant",
    "e.base",
    "e.direction",
    "e.profile",
    "line.profile",
    "k",
    "samples",
    "kind",
    "battery",
    "points",
    "compare_kinds",
    "shift_baseline",
    "seed",
    "workers",
    "out",
];

/// Keys that affect results; `workers` and `out` do not.
fn digested(key: &str) -> bool {
    key != "workers" && key != "out"
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub location: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Tian,
    Bergman,
    Equidistribution,
    Expectation,
    Covariance,
    GrassmannCheck,
    Degrees,
    Identities,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 8] = [
        ExperimentKind::Tian,
        ExperimentKind::Bergman,
        ExperimentKind::Equidistribution,
        ExperimentKind::Expectation,
        ExperimentKind::Covariance,
        ExperimentKind::GrassmannCheck,
        ExperimentKind::Degrees,
        ExperimentKind::Identities,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Tian => "tian",
            ExperimentKind::Bergman => "bergman",
            ExperimentKind::Equidistribution => "equidistribution",
            ExperimentKind::Expectation => "expectation",
            ExperimentKind::Covariance => "covariance",
            ExperimentKind::GrassmannCheck => "grassmann-check",
            ExperimentKind::Degrees => "degrees",
            ExperimentKind::Identities => "identities",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.name() == name)
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub spec: BundleSpec,
    pub grid: Option<Vec<u32>>,
    pub k: Option<usize>,
    pub samples: Option<usize>,
    pub kind: MeasureKind,
    pub battery: Vec<TestFunction>,
    pub points: usize,
    pub compare_kinds: bool,
    pub shift_baseline: bool,
    pub seed: u64,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    /// Every assignment after overrides, in key order.
    pub entries: BTreeMap<String, String>,
}

impl ExperimentConfig {
    /// SHA-256 of the canonical `key=value` lines of the result-affecting keys.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in self.entries.iter().filter(|(k, _)| digested(k)) {
            h.update(format!("{k}={v}\n").as_bytes());
        }
        hex(&h.finalize())
    }

    pub fn params(&self) -> BTreeMap<String, String> {
        self.entries
            .iter()
            .filter(|(k, _)| digested(k))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect()
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Raw assignments of a config text, rejecting unknown and repeated keys.
pub fn parse_entries(text: &str, source: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let at = |key: &str| ConfigError {
            location: format!("{source}:{}{}", i + 1, if key.is_empty() { String::new() } else { format!(": {key}") }),
            message: String::new(),
        };
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError {
                message: "expected `key = value`".into(),
                ..at("")
            });
        };
        let (key, value) = (key.trim(), value.trim());
        if !KEYS.contains(&key) {
            return Err(ConfigError {
                message: format!("unknown key (known keys: {})", KEYS.join(", ")),
                ..at(key)
            });
        }
        if out.insert(key.to_string(), value.to_string()).is_some() {
            return Err(ConfigError {
                message: "key assigned twice".into(),
                ..at(key)
            });
        }
    }
    Ok(out)
}

/// Command-line values that replace config entries.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
}

pub fn load(path: &Path, overrides: &Overrides) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
        location: path.display().to_string(),
        message: format!("cannot read config: {e}"),
    })?;
    parse(&text, &path.display().to_string(), overrides)
}

pub fn parse(text: &str, source: &str, overrides: &Overrides) -> Result<ExperimentConfig, ConfigError> {
    let mut entries = parse_entries(text, source)?;
    if let Some(s) = overrides.seed {
        entries.insert("seed".into(), s.to_string());
    }
    if let Some(w) = overrides.workers {
        entries.insert("workers".into(), w.to_string());
    }
    if let Some(o) = &overrides.out {
        entries.insert("out".into(), o.display().to_string());
    }
    build(entries, source)
}

fn build(entries: BTreeMap<String, String>, source: &str) -> Result<ExperimentConfig, ConfigError> {
    let err = |key: &str, message: String| ConfigError {
        location: format!("{source}: {key}"),
        message,
    };
    let get = |key: &str| entries.get(key).map(String::as_str);
    fn num<T: std::str::FromStr>(key: &str, v: &str, err: &dyn Fn(&str, String) -> ConfigError) -> Result<T, ConfigError> {
        v.parse().map_err(|_| err(key, format!("cannot parse `{v}`")))
    }
    let list = |key: &str, v: &str| -> Result<Vec<u32>, ConfigError> {
        v.split(',').map(|s| num(key, s.trim(), &err)).collect()
    };
    let flag = |key: &str| -> Result<bool, ConfigError> {
        match get(key) {
            None | Some("false") => Ok(false),
            Some("true") => Ok(true),
            Some(v) => Err(err(key, format!("expected true or false, got `{v}`"))),
        }
    };

    let experiment = match get("experiment") {
        None => return Err(err("experiment", "required".into())),
        Some(v) => ExperimentKind::from_name(v).ok_or_else(|| {
            let names: Vec<_> = ExperimentKind::ALL.iter().map(|e| e.name()).collect();
            err("experiment", format!("unknown experiment `{v}` (one of {})", names.join(", ")))
        })?,
    };
    let space = match get("model").unwrap_or("cp2") {
        "cp1" => ModelSpace::cp1(),
        "cp2" => ModelSpace::cp2(),
        v => return Err(err("model", format!("expected cp1 or cp2, got `{v}`"))),
    };
    let n = space.n();
    let p = match get("p") {
        Some(v) => num("p", v, &err)?,
        None => 5,
    };
    let degrees = match get("degrees") {
        Some(v) => list("degrees", v)?,
        None => vec![0],
    };
    let r = degrees.len();
    let mut spec = BundleSpec::new(space, p, degrees);
    if flag("allow_high_rank")? {
        spec = spec.allow_high_rank();
    }
    let profile = |key: &str| -> Result<Option<TorusFn>, ConfigError> {
        get(key)
            .map(|v| parse_torus_fn(v, n).map_err(|m| err(key, m)))
            .transpose()
    };
    let matrix = |key: &str| -> Result<Option<DMatrix<C64>>, ConfigError> {
        get(key)
            .map(|v| parse_matrix(v, r).map_err(|m| err(key, m)))
            .transpose()
    };
    let twist_keys: Vec<&str> = ["e.conformal", "e.constant", "e.base"]
        .into_iter()
        .filter(|k| entries.contains_key(*k))
        .collect();
    if twist_keys.len() > 1 {
        return Err(err(twist_keys[1], format!("conflicts with {}", twist_keys[0])));
    }
    if let Some(v) = get("e.conformal") {
        let parts: Result<Vec<TorusFn>, String> = v.split('|').map(|s| parse_torus_fn(s, n)).collect();
        let parts = parts.map_err(|m| err("e.conformal", m))?;
        if parts.len() != r {
            return Err(err("e.conformal", format!("{} profiles for {r} summands", parts.len())));
        }
        spec = spec.with_twist(Twist::Conformal(parts));
    } else if let Some(a) = matrix("e.constant")? {
        spec = spec.with_twist(Twist::Constant(a));
    } else if let Some(base) = matrix("e.base")? {
        let direction = matrix("e.direction")?.ok_or_else(|| err("e.direction", "required with e.base".into()))?;
        let profile = profile("e.profile")?.ok_or_else(|| err("e.profile", "required with e.base".into()))?;
        spec = spec.with_twist(Twist::Matrix {
            base,
            direction,
            profile,
        });
    } else if let Some(k) = ["e.direction", "e.profile"].into_iter().find(|k| entries.contains_key(*k)) {
        return Err(err(k, "needs e.base".into()));
    }
    if let Some(chi) = profile("line.profile")? {
        spec = spec.with_line_twist(chi);
    }
    spec.validate().map_err(|e| err("degrees", e.to_string()))?;

    let kind = match get("kind") {
        None => MeasureKind::Gaussian,
        Some(v) => MeasureKind::from_name(v).ok_or_else(|| err("kind", format!("expected gaussian or fubini-study, got `{v}`")))?,
    };
    let battery = match get("battery") {
        None => TestFunction::BATTERY.to_vec(),
        Some(v) => v
            .split(',')
            .map(|s| {
                TestFunction::from_name(s.trim()).ok_or_else(|| err("battery", format!("unknown test function `{}`", s.trim())))
            })
            .collect::<Result<_, _>>()?,
    };
    let workers: Option<usize> = get("workers").map(|v| num("workers", v, &err)).transpose()?;
    if workers == Some(0) {
        return Err(err("workers", "must be positive".into()));
    }
    Ok(ExperimentConfig {
        experiment,
        spec,
        grid: get("grid").map(|v| list("grid", v)).transpose()?,
        k: get("k").map(|v| num("k", v, &err)).transpose()?,
        samples: get("samples").map(|v| num("samples", v, &err)).transpose()?,
        kind,
        battery,
        points: get("points").map(|v| num("points", v, &err)).transpose()?.unwrap_or(200),
        compare_kinds: flag("compare_kinds")?,
        shift_baseline: flag("shift_baseline")?,
        seed: get("seed").map(|v| num("seed", v, &err)).transpose()?.unwrap_or(1),
        workers,
        out: get("out").map(PathBuf::from),
        entries: entries.clone(),
    })
}

fn floats(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|_| format!("cannot parse number `{}`", x.trim())))
        .collect()
}

/// `zero`, `lin(c_0, …, c_n)` or `bump(center_0, …, center_n; width; amplitude)`.
pub fn parse_torus_fn(s: &str, n: usize) -> Result<TorusFn, String> {
    let s = s.trim();
    if s == "zero" {
        return Ok(TorusFn::Zero);
    }
    let (head, rest) = s.split_once('(').ok_or_else(|| format!("expected zero, lin(…) or bump(…), got `{s}`"))?;
    let body = rest.strip_suffix(')').ok_or_else(|| format!("missing `)` in `{s}`"))?;
    match head.trim() {
        "lin" => {
            let c = floats(body)?;
            if c.len() != n + 1 {
                return Err(format!("lin needs {} coefficients, got {}", n + 1, c.len()));
            }
            Ok(TorusFn::Linear(c))
        }
        "bump" => {
            let parts: Vec<&str> = body.split(';').collect();
            if parts.len() != 3 {
                return Err("bump needs `center; width; amplitude`".into());
            }
            let center = floats(parts[0])?;
            if center.len() != n + 1 {
                return Err(format!("bump center needs {} coordinates", n + 1));
            }
            let width = floats(parts[1])?;
            let amplitude = floats(parts[2])?;
            if width.len() != 1 || amplitude.len() != 1 || width[0] <= 0.0 {
                return Err("bump width must be one positive number and amplitude one number".into());
            }
            Ok(TorusFn::Bump {
                center,
                width: width[0],
                amplitude: amplitude[0],
            })
        }
        other => Err(format!("unknown profile `{other}`")),
    }
}

/// Rows separated by `;`, entries by `,`; an entry is `re` or `re:im`.
pub fn parse_matrix(s: &str, r: usize) -> Result<DMatrix<C64>, String> {
    let rows: Vec<&str> = s.split(';').collect();
    if rows.len() != r {
        return Err(format!("expected {r} rows, got {}", rows.len()));
    }
    let mut m = DMatrix::zeros(r, r);
    for (i, row) in rows.iter().enumerate() {
        let entries: Vec<&str> = row.split(',').collect();
        if entries.len() != r {
            return Err(format!("row {i} has {} entries, expected {r}", entries.len()));
        }
        for (j, e) in entries.iter().enumerate() {
            let e = e.trim();
            let (re, im) = e.split_once(':').unwrap_or((e, "0"));
            let parse = |x: &str| x.trim().parse::<f64>().map_err(|_| format!("cannot parse entry `{e}`"));
            m[(i, j)] = C64::new(parse(re)?, parse(im)?);
        }
    }
    Ok(m)
}
