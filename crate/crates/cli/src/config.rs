//! Run configuration: a single JSON document, optionally patched with
//! `--set key=value` overrides, validated strictly.

use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

pub const OUT_DIR_ENV: &str = "CASIMIR_LAB_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "casimir-lab-out";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{origin}: JSON syntax error at line {line}, column {column}: {message}")]
    Syntax { origin: String, line: usize, column: usize, message: String },

    #[error("{origin}: field `{path}`{location}: {message}")]
    Field { origin: String, path: String, location: Location, message: String },

    #[error("unknown preset {name:?}; valid presets: {}", catalog.join(", "))]
    UnknownPreset { name: String, catalog: Vec<&'static str> },

    #[error("field `{field}`: {message}")]
    Invalid { field: String, message: String },

    #[error("bad override {0:?}: expected key=value with a dotted key")]
    BadOverride(String),
}

/// Optional `(line, column)` of a field diagnostic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Location(pub Option<(usize, usize)>);

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Some((line, column)) => write!(f, " (line {line}, column {column})"),
            None => Ok(()),
        }
    }
}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field: field.to_string(), message: message.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Euler2d,
    Rmhd2d,
    Phantom2,
    Phantom3,
    KernelDeficit,
    SingularLeaf,
    Finitedim,
    Ionacoustic1d,
    KdvSoliton,
    JacobiCheck,
}

/// What kind of spatial grid a preset runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridKind {
    None,
    Line,
    Plane,
}

impl Preset {
    pub const ALL: [Preset; 10] = [
        Preset::Euler2d,
        Preset::Rmhd2d,
        Preset::Phantom2,
        Preset::Phantom3,
        Preset::KernelDeficit,
        Preset::SingularLeaf,
        Preset::Finitedim,
        Preset::Ionacoustic1d,
        Preset::KdvSoliton,
        Preset::JacobiCheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Euler2d => "euler2d",
            Preset::Rmhd2d => "rmhd2d",
            Preset::Phantom2 => "phantom2",
            Preset::Phantom3 => "phantom3",
            Preset::KernelDeficit => "kernel_deficit",
            Preset::SingularLeaf => "singular_leaf",
            Preset::Finitedim => "finitedim",
            Preset::Ionacoustic1d => "ionacoustic1d",
            Preset::KdvSoliton => "kdv_soliton",
            Preset::JacobiCheck => "jacobi_check",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Preset::Euler2d => "2D Euler vorticity (level I) with energy and enstrophy monitoring",
            Preset::Rmhd2d => "reduced MHD (level II); enstrophy is expected to drift",
            Preset::Phantom2 => "level II driven by the Euler energy; vorticity must not depend on the phantom",
            Preset::Phantom3 => "level III with two identical phantoms; they must stay bitwise equal",
            Preset::KernelDeficit => "kernel state (xi(zeta), eta(zeta)) and the non-functional witness",
            Preset::SingularLeaf => "level II on the leaf psi = 0 with the interior Casimir",
            Preset::Finitedim => "planar x*J_c system; the line x = 0 is never crossed",
            Preset::Ionacoustic1d => "1D ion acoustic flow; linear dispersion and invariants",
            Preset::KdvSoliton => "KdV soliton with integrating-factor RK4",
            Preset::JacobiCheck => "finite-difference Jacobi residuals of finite-dimensional operators",
        }
    }

    pub fn from_name(name: &str) -> Result<Self, ConfigError> {
        Self::ALL.into_iter().find(|p| p.name() == name).ok_or_else(|| ConfigError::UnknownPreset {
            name: name.to_string(),
            catalog: Self::ALL.iter().map(|p| p.name()).collect(),
        })
    }

    pub fn grid_kind(self) -> GridKind {
        match self {
            Preset::Finitedim | Preset::JacobiCheck => GridKind::None,
            Preset::Ionacoustic1d | Preset::KdvSoliton => GridKind::Line,
            _ => GridKind::Plane,
        }
    }

    pub fn is_static(self) -> bool {
        matches!(self, Preset::KernelDeficit | Preset::JacobiCheck)
    }

    fn defaults(self) -> Defaults {
        let plane = |n| GridSpec::Plane { nx: n, ny: n, lx: 2.0 * PI, ly: 2.0 * PI };
        let d = |grid, dt, t_end, output_every, watch: &[&str]| Defaults {
            grid,
            dt,
            t_end,
            output_every,
            watch: watch.iter().map(|s| s.to_string()).collect(),
        };
        match self {
            Preset::Euler2d => d(plane(64), 1e-2, 10.0, 0.1, &["H_E", "C0:square", "C0:quartic"]),
            Preset::Rmhd2d => d(plane(64), 1e-3, 1.0, 0.01, &["H_RMHD", "C0:square", "C1:identity", "C2:square"]),
            Preset::Phantom2 => d(plane(64), 1e-2, 10.0, 0.1, &["H_E", "C0:square", "C1:identity", "C2:square"]),
            Preset::Phantom3 => d(plane(64), 2.5e-3, 5.0, 0.05, &["H_RMHD", "C1:identity", "C3:identity", "C4:square"]),
            Preset::KernelDeficit => d(plane(128), 0.0, 0.0, 0.0, &[]),
            Preset::SingularLeaf => d(plane(64), 1e-2, 5.0, 0.05, &["H_RMHD", "C0:square", "C0:quartic", "leaf"]),
            Preset::Finitedim => d(GridSpec::None, 1e-3, 20.0, 0.1, &["H", "x", "y", "Y_eps:0.1"]),
            Preset::Ionacoustic1d => d(
                GridSpec::Line { n: 128, l: 2.0 * PI },
                1e-2,
                50.0,
                0.1,
                &["H_ion", "mass", "momentum", "mode:1"],
            ),
            Preset::KdvSoliton => d(GridSpec::Line { n: 512, l: 40.0 }, 1e-3, 10.0, 0.1, &["I1", "I2", "I3"]),
            Preset::JacobiCheck => d(GridSpec::None, 0.0, 0.0, 0.0, &[]),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

struct Defaults {
    grid: GridSpec,
    dt: f64,
    t_end: f64,
    output_every: f64,
    watch: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GridSpec {
    None,
    Line { n: usize, l: f64 },
    Plane { nx: usize, ny: usize, lx: f64, ly: f64 },
}

/// The document as written by the user.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub preset: String,
    pub n: Option<usize>,
    pub nx: Option<usize>,
    pub ny: Option<usize>,
    pub l: Option<f64>,
    pub lx: Option<f64>,
    pub ly: Option<f64>,
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    pub output_every: Option<f64>,
    pub initial: Option<Value>,
    pub watch: Option<Vec<String>>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub snapshots: Option<bool>,
}

/// A validated configuration with every default filled in.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub preset: Preset,
    pub grid: GridSpec,
    pub dt: f64,
    pub t_end: f64,
    pub output_every: f64,
    pub initial: Value,
    pub watch: Vec<String>,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub snapshots: bool,
}

impl RunConfig {
    pub fn steps(&self) -> usize {
        if self.preset.is_static() {
            0
        } else {
            (self.t_end / self.dt).round() as usize
        }
    }

    pub fn output_stride(&self) -> usize {
        ((self.output_every / self.dt).round() as usize).max(1)
    }
}

/// Sets `root.a.b.c = value` for the key `a.b.c`, creating objects on the way.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<(), ConfigError> {
    let (key, raw) = assignment.split_once('=').ok_or_else(|| ConfigError::BadOverride(assignment.into()))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(ConfigError::BadOverride(assignment.into()));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if !node.is_object() {
            *node = Value::Object(Map::new());
        }
        let map = node.as_object_mut().expect("just made an object");
        if i == parts.len() - 1 {
            map.insert(part.to_string(), value);
            return Ok(());
        }
        node = map.entry(part.to_string()).or_insert_with(|| Value::Object(Map::new()));
    }
    unreachable!("key has at least one part")
}

fn field_error(origin: &str, err: serde_path_to_error::Error<serde_json::Error>, with_location: bool) -> ConfigError {
    let path = err.path().to_string();
    let inner = err.into_inner();
    let location = if with_location && inner.line() > 0 { Location(Some((inner.line(), inner.column()))) } else { Location(None) };
    let message = inner.to_string();
    let message = match message.rfind(" at line ") {
        Some(cut) if with_location => message[..cut].to_string(),
        _ => message,
    };
    ConfigError::Field { origin: origin.to_string(), path, location, message }
}

/// Parses a JSON document and applies overrides, keeping line numbers when
/// no override touched the document.
pub fn parse_raw(text: &str, origin: &str, overrides: &[String]) -> Result<RawConfig, ConfigError> {
    let syntax = |e: serde_json::Error| ConfigError::Syntax {
        origin: origin.to_string(),
        line: e.line(),
        column: e.column(),
        message: e.to_string().rsplit_once(" at line ").map_or(e.to_string(), |(m, _)| m.to_string()),
    };
    let tree: Value = serde_json::from_str(text).map_err(syntax)?;
    if overrides.is_empty() {
        let de = &mut serde_json::Deserializer::from_str(text);
        return serde_path_to_error::deserialize(de).map_err(|e| field_error(origin, e, true));
    }
    let mut tree = tree;
    for o in overrides {
        apply_override(&mut tree, o)?;
    }
    serde_path_to_error::deserialize(tree).map_err(|e| field_error(origin, e, false))
}

pub fn read_raw(path: &Path, overrides: &[String]) -> Result<RawConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    parse_raw(&text, &path.display().to_string(), overrides)
}

/// Builds the configuration for `run <preset> [--config FILE] [--set k=v]...`.
pub fn parse_config(preset: &str, file: Option<&Path>, overrides: &[String]) -> Result<RunConfig, ConfigError> {
    let mut all = vec![format!("preset={}", Value::String(preset.to_string()))];
    all.extend(overrides.iter().cloned());
    let raw = match file {
        Some(path) => {
            let text =
                std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
            let origin = path.display().to_string();
            let from_file = parse_raw(&text, &origin, &[])?;
            if from_file.preset != preset {
                return Err(invalid(
                    "preset",
                    format!("config file names preset {:?} but the command line asks for {preset:?}", from_file.preset),
                ));
            }
            parse_raw(&text, &origin, &all)?
        }
        None => parse_raw("{}", "command line", &all)?,
    };
    resolve(raw)
}

fn positive(field: &str, v: f64) -> Result<f64, ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(invalid(field, format!("must be positive and finite, got {v}")))
    }
}

fn grid_points(field: &str, n: usize) -> Result<usize, ConfigError> {
    if n >= 8 && n % 2 == 0 {
        Ok(n)
    } else {
        Err(invalid(field, format!("grid size must be even and at least 8, got {n}")))
    }
}

fn is_multiple(total: f64, step: f64) -> bool {
    let n = (total / step).round();
    n >= 1.0 && (n * step - total).abs() <= 1e-9 * total
}

/// Fills defaults and validates every field.
pub fn resolve(raw: RawConfig) -> Result<RunConfig, ConfigError> {
    let preset = Preset::from_name(&raw.preset)?;
    let defaults = preset.defaults();
    let grid = match (preset.grid_kind(), defaults.grid) {
        (GridKind::None, _) => {
            for (name, set) in [
                ("n", raw.n.is_some()),
                ("nx", raw.nx.is_some()),
                ("ny", raw.ny.is_some()),
                ("l", raw.l.is_some()),
                ("lx", raw.lx.is_some()),
                ("ly", raw.ly.is_some()),
            ] {
                if set {
                    return Err(invalid(name, format!("preset {preset} has no spatial grid")));
                }
            }
            GridSpec::None
        }
        (GridKind::Line, GridSpec::Line { n, l }) => {
            for (name, set) in [("nx", raw.nx.is_some()), ("ny", raw.ny.is_some()), ("lx", raw.lx.is_some()), ("ly", raw.ly.is_some())] {
                if set {
                    return Err(invalid(name, format!("preset {preset} is one-dimensional; use `n` and `l`")));
                }
            }
            GridSpec::Line { n: grid_points("n", raw.n.unwrap_or(n))?, l: positive("l", raw.l.unwrap_or(l))? }
        }
        (GridKind::Plane, GridSpec::Plane { nx, ny, lx, ly }) => GridSpec::Plane {
            nx: grid_points("nx", raw.nx.or(raw.n).unwrap_or(nx))?,
            ny: grid_points("ny", raw.ny.or(raw.n).unwrap_or(ny))?,
            lx: positive("lx", raw.lx.or(raw.l).unwrap_or(lx))?,
            ly: positive("ly", raw.ly.or(raw.l).unwrap_or(ly))?,
        },
        _ => unreachable!("preset defaults match their grid kind"),
    };
    let (dt, t_end, output_every) = if preset.is_static() {
        for (name, set) in [("dt", raw.dt.is_some()), ("t_end", raw.t_end.is_some()), ("output_every", raw.output_every.is_some())] {
            if set {
                return Err(invalid(name, format!("preset {preset} does not integrate in time")));
            }
        }
        (0.0, 0.0, 0.0)
    } else {
        let dt = positive("dt", raw.dt.unwrap_or(defaults.dt))?;
        let t_end = positive("t_end", raw.t_end.unwrap_or(defaults.t_end))?;
        let output_every = positive("output_every", raw.output_every.unwrap_or(defaults.output_every))?;
        if !is_multiple(t_end, dt) {
            return Err(invalid("t_end", format!("{t_end} is not a whole number of steps of dt = {dt}")));
        }
        if !is_multiple(output_every, dt) {
            return Err(invalid("output_every", format!("{output_every} is not a whole number of steps of dt = {dt}")));
        }
        (dt, t_end, output_every)
    };
    let initial = match raw.initial {
        None => Value::Object(Map::new()),
        Some(v @ Value::Object(_)) => v,
        Some(other) => return Err(invalid("initial", format!("must be an object, got {other}"))),
    };
    if preset.is_static() && raw.watch.is_some() {
        return Err(invalid("watch", format!("preset {preset} has no time series to watch")));
    }
    let out_dir = match std::env::var_os(OUT_DIR_ENV) {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => raw.out_dir.unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR)),
    };
    Ok(RunConfig {
        preset,
        grid,
        dt,
        t_end,
        output_every,
        initial,
        watch: raw.watch.unwrap_or(defaults.watch),
        seed: raw.seed.unwrap_or(0),
        out_dir,
        snapshots: raw.snapshots.unwrap_or(false),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(text: &str) -> Result<RunConfig, ConfigError> {
        resolve(parse_raw(text, "test", &[])?)
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = raw(r#"{"preset": "euler2d", "n": 64, "dt": 0.01, "t_end": 1}"#).unwrap();
        assert_eq!(cfg.grid, GridSpec::Plane { nx: 64, ny: 64, lx: 2.0 * PI, ly: 2.0 * PI });
        assert_eq!(cfg.steps(), 100);
        assert_eq!(cfg.watch, vec!["H_E", "C0:square", "C0:quartic"]);
        assert_eq!(cfg.output_stride(), 10);
        assert_eq!(cfg.seed, 0);
    }

    #[test]
    fn unknown_preset_lists_catalog() {
        let err = raw(r#"{"preset": "euler3d"}"#).unwrap_err();
        let text = err.to_string();
        assert!(matches!(err, ConfigError::UnknownPreset { .. }));
        for p in Preset::ALL {
            assert!(text.contains(p.name()), "{text}");
        }
    }

    #[test]
    fn negative_dt_cites_field() {
        let err = raw(r#"{"preset": "euler2d", "dt": -0.1}"#).unwrap_err();
        assert!(matches!(&err, ConfigError::Invalid { field, .. } if field == "dt"), "{err}");
    }

    #[test]
    fn unknown_and_mistyped_keys_are_rejected_with_location() {
        let err = raw("{\n  \"preset\": \"euler2d\",\n  \"dtt\": 0.1\n}").unwrap_err();
        let ConfigError::Field { location, message, .. } = &err else { panic!("{err}") };
        assert_eq!(location.0.map(|l| l.0), Some(3));
        assert!(message.contains("dtt"), "{message}");

        let err = raw("{\"preset\": \"euler2d\", \"n\": \"big\"}").unwrap_err();
        assert!(matches!(&err, ConfigError::Field { path, .. } if path == "n"), "{err}");
        assert!(matches!(raw("{\"n\": 64}"), Err(ConfigError::Field { .. })));
        assert!(matches!(raw("{\"preset\": "), Err(ConfigError::Syntax { .. })));
    }

    #[test]
    fn overrides_patch_nested_keys() {
        let mut v = serde_json::json!({"preset": "kdv_soliton"});
        apply_override(&mut v, "initial.c=2.5").unwrap();
        apply_override(&mut v, "out_dir=/tmp/x").unwrap();
        apply_override(&mut v, "watch=[\"I1\"]").unwrap();
        assert_eq!(v["initial"]["c"], 2.5);
        assert_eq!(v["out_dir"], "/tmp/x");
        assert_eq!(v["watch"][0], "I1");
        assert!(apply_override(&mut v, "novalue").is_err());
        assert!(apply_override(&mut v, "a..b=1").is_err());
    }

    #[test]
    fn grid_keys_follow_preset_kind() {
        assert!(raw(r#"{"preset": "finitedim", "n": 64}"#).is_err());
        assert!(raw(r#"{"preset": "kdv_soliton", "nx": 64}"#).is_err());
        assert!(raw(r#"{"preset": "euler2d", "n": 63}"#).is_err());
        let cfg = raw(r#"{"preset": "euler2d", "n": 32, "ny": 16, "l": 3.0}"#).unwrap();
        assert_eq!(cfg.grid, GridSpec::Plane { nx: 32, ny: 16, lx: 3.0, ly: 3.0 });
        assert!(raw(r#"{"preset": "jacobi_check", "dt": 0.1}"#).is_err());
        assert!(raw(r#"{"preset": "euler2d", "dt": 0.3, "t_end": 1}"#).is_err());
    }
}
