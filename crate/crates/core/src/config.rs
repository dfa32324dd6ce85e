//! Run configuration: a TOML file mapped onto a validated `RunConfig`, with
//! environment overrides (`VESIFLOW_SECTION__KEY=value`, `__` separating
//! nesting levels) applied before validation. Unknown keys anywhere are hard
//! errors, every validation message names the offending key and the violated
//! constraint, and file paths referenced by the config must resolve while it
//! is being parsed.

use crate::checkpoint;
use crate::diagnostics::{CriterionKind, CriterionSpec};
use crate::dynamics::{FlowMode, SimState, StepConfig, TimeScheme};
use crate::energy::ModelParams;
use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::grid::Grid;
use crate::initial::{
    random_band_limited, random_solenoidal, tanh_disk, tanh_ellipse, taylor_green,
};
use std::path::{Path, PathBuf};

pub const ENV_PREFIX: &str = "VESIFLOW_";

/// How to react when a resumed checkpoint's parameter hash disagrees with
/// the configured run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HashMismatchPolicy {
    Warn,
    Fail,
}

/// Initial phase field.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    TanhDisk { center: Vec<f64>, radius: f64 },
    TanhEllipse { center: Vec<f64>, axes: Vec<f64> },
    Constant { value: f64 },
    Random { seed: u64, band: i64, amplitude: f64 },
    FromCheckpoint { path: PathBuf },
}

/// Initial velocity field.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialVelocity {
    Zero,
    TaylorGreen { amplitude: f64 },
    RandomSolenoidal { seed: u64, band: i64, amplitude: f64 },
}

/// Fully validated run description.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub grid: Grid,
    /// Model parameters; the volume / area targets may still be placeholders
    /// (see the `*_target_given` flags) until `build_initial` fills them.
    pub model: ModelParams,
    pub volume_target_given: bool,
    pub area_target_given: bool,
    pub step: StepConfig,
    pub mode: FlowMode,
    pub t_end: f64,
    pub record_every: usize,
    pub output_dir: PathBuf,
    /// Emit a checkpoint every this many steps (0 = only at the end).
    pub checkpoint_every: usize,
    pub on_hash_mismatch: HashMismatchPolicy,
    pub initial_condition: InitialCondition,
    pub initial_velocity: InitialVelocity,
    pub criteria: Vec<CriterionSpec>,
}

/// Everything needed to start integrating, plus human-readable notes about
/// decisions taken while building (auto-filled targets, checkpoint details).
#[derive(Debug, Clone)]
pub struct PreparedRun {
    pub state: SimState,
    /// History level recovered from a checkpoint, if any.
    pub prev: Option<SimState>,
    /// Model parameters with the targets resolved.
    pub params: ModelParams,
    pub notes: Vec<String>,
}

fn cfg_err(key: &str, message: impl Into<String>) -> Error {
    Error::Config {
        key: key.to_string(),
        message: message.into(),
    }
}

// ---------------------------------------------------------------------------
// toml::Value schema mapping with drain-style sections
// ---------------------------------------------------------------------------

struct Section {
    path: String,
    entries: toml::map::Map<String, toml::Value>,
}

impl Section {
    fn key(&self, name: &str) -> String {
        if self.path.is_empty() {
            name.to_string()
        } else {
            format!("{}.{name}", self.path)
        }
    }

    fn take(&mut self, name: &str) -> Option<toml::Value> {
        self.entries.remove(name)
    }

    fn f64(&mut self, name: &str) -> Result<Option<f64>> {
        match self.take(name) {
            None => Ok(None),
            Some(toml::Value::Float(v)) => Ok(Some(v)),
            Some(toml::Value::Integer(v)) => Ok(Some(v as f64)),
            Some(other) => Err(cfg_err(
                &self.key(name),
                format!("expected a number, got {}", other.type_str()),
            )),
        }
    }

    fn require_f64(&mut self, name: &str) -> Result<f64> {
        self.f64(name)?
            .ok_or_else(|| cfg_err(&self.key(name), "missing required key"))
    }

    fn usize(&mut self, name: &str) -> Result<Option<usize>> {
        match self.take(name) {
            None => Ok(None),
            Some(toml::Value::Integer(v)) if v >= 0 => Ok(Some(v as usize)),
            Some(other) => Err(cfg_err(
                &self.key(name),
                format!("expected a non-negative integer, got {other}"),
            )),
        }
    }

    fn u64(&mut self, name: &str) -> Result<Option<u64>> {
        match self.take(name) {
            None => Ok(None),
            Some(toml::Value::Integer(v)) if v >= 0 => Ok(Some(v as u64)),
            Some(other) => Err(cfg_err(
                &self.key(name),
                format!("expected a non-negative integer, got {other}"),
            )),
        }
    }

    fn i64(&mut self, name: &str) -> Result<Option<i64>> {
        match self.take(name) {
            None => Ok(None),
            Some(toml::Value::Integer(v)) => Ok(Some(v)),
            Some(other) => Err(cfg_err(
                &self.key(name),
                format!("expected an integer, got {}", other.type_str()),
            )),
        }
    }

    fn bool(&mut self, name: &str) -> Result<Option<bool>> {
        match self.take(name) {
            None => Ok(None),
            Some(toml::Value::Boolean(v)) => Ok(Some(v)),
            Some(other) => Err(cfg_err(
                &self.key(name),
                format!("expected a boolean, got {}", other.type_str()),
            )),
        }
    }

    fn string(&mut self, name: &str) -> Result<Option<String>> {
        match self.take(name) {
            None => Ok(None),
            Some(toml::Value::String(v)) => Ok(Some(v)),
            Some(other) => Err(cfg_err(
                &self.key(name),
                format!("expected a string, got {}", other.type_str()),
            )),
        }
    }

    /// A number per axis; a scalar is broadcast to `dim` entries.
    fn f64_per_axis(&mut self, name: &str, dim: usize) -> Result<Option<Vec<f64>>> {
        let key = self.key(name);
        match self.take(name) {
            None => Ok(None),
            Some(toml::Value::Float(v)) => Ok(Some(vec![v; dim])),
            Some(toml::Value::Integer(v)) => Ok(Some(vec![v as f64; dim])),
            Some(toml::Value::Array(items)) => {
                let mut out = Vec::with_capacity(items.len());
                for item in items {
                    match item {
                        toml::Value::Float(v) => out.push(v),
                        toml::Value::Integer(v) => out.push(v as f64),
                        other => {
                            return Err(cfg_err(
                                &key,
                                format!("expected numbers, got {}", other.type_str()),
                            ))
                        }
                    }
                }
                if out.len() != dim {
                    return Err(cfg_err(
                        &key,
                        format!("expected {dim} entries (one per axis), got {}", out.len()),
                    ));
                }
                Ok(Some(out))
            }
            Some(other) => Err(cfg_err(
                &key,
                format!("expected a number or array of numbers, got {}", other.type_str()),
            )),
        }
    }

    /// Reject leftover keys by name.
    fn finish(self) -> Result<()> {
        if let Some(name) = self.entries.keys().next() {
            return Err(cfg_err(&self.key(name), "unknown key"));
        }
        Ok(())
    }
}

fn take_section(root: &mut toml::map::Map<String, toml::Value>, name: &str) -> Result<Option<Section>> {
    match root.remove(name) {
        None => Ok(None),
        Some(toml::Value::Table(entries)) => Ok(Some(Section {
            path: name.to_string(),
            entries,
        })),
        Some(other) => Err(cfg_err(
            name,
            format!("expected a table, got {}", other.type_str()),
        )),
    }
}

fn require_section(root: &mut toml::map::Map<String, toml::Value>, name: &str) -> Result<Section> {
    take_section(root, name)?.ok_or_else(|| cfg_err(name, "missing required section"))
}

// ---------------------------------------------------------------------------
// environment overrides
// ---------------------------------------------------------------------------

/// Parse an override value: anything that reads as a TOML scalar/array keeps
/// that type, everything else becomes a string.
fn parse_env_value(raw: &str) -> toml::Value {
    let doc = format!("value = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("value").expect("value key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Apply `VESIFLOW_A__B=value` pairs onto the parsed tree (`a.b = value`).
fn apply_env_overrides(
    root: &mut toml::map::Map<String, toml::Value>,
    env: &[(String, String)],
) -> Result<()> {
    for (name, raw) in env {
        let Some(stripped) = name.strip_prefix(ENV_PREFIX) else {
            continue;
        };
        if stripped.is_empty() {
            continue;
        }
        let segments: Vec<String> = stripped.split("__").map(str::to_lowercase).collect();
        if segments.iter().any(String::is_empty) {
            return Err(cfg_err(name, "override has an empty key segment"));
        }
        let mut table = &mut *root;
        for seg in &segments[..segments.len() - 1] {
            let slot = table
                .entry(seg.clone())
                .or_insert_with(|| toml::Value::Table(toml::map::Map::new()));
            match slot {
                toml::Value::Table(t) => table = t,
                _ => {
                    return Err(cfg_err(
                        name,
                        format!("override descends into non-table key {seg}"),
                    ))
                }
            }
        }
        table.insert(
            segments.last().expect("non-empty").clone(),
            parse_env_value(raw),
        );
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// RunConfig
// ---------------------------------------------------------------------------

impl RunConfig {
    /// Read a config file, applying `VESIFLOW_` overrides from the process
    /// environment. Relative checkpoint paths resolve against the config
    /// file's directory.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| cfg_err(&path.display().to_string(), format!("cannot read: {e}")))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let env: Vec<(String, String)> = std::env::vars().collect();
        RunConfig::from_toml(&text, base, &env)
    }

    /// Parse from TOML text (entry point for tests and the loader above).
    pub fn from_toml(text: &str, base_dir: &Path, env: &[(String, String)]) -> Result<RunConfig> {
        let mut root: toml::map::Map<String, toml::Value> = text
            .parse::<toml::Table>()
            .map_err(|e| cfg_err("<config>", format!("TOML parse error: {e}")))?;
        apply_env_overrides(&mut root, env)?;

        // [grid]
        let mut grid_sec = require_section(&mut root, "grid")?;
        let dim = grid_sec
            .usize("dimension")?
            .ok_or_else(|| cfg_err("grid.dimension", "missing required key"))?;
        if dim != 2 && dim != 3 {
            return Err(cfg_err("grid.dimension", format!("must be 2 or 3, got {dim}")));
        }
        let resolution = grid_sec
            .f64_per_axis("resolution", dim)?
            .ok_or_else(|| cfg_err("grid.resolution", "missing required key"))?;
        let resolution: Vec<usize> = resolution
            .iter()
            .map(|&v| {
                if v.fract() == 0.0 && v >= 4.0 {
                    Ok(v as usize)
                } else {
                    Err(cfg_err(
                        "grid.resolution",
                        format!("entries must be integers >= 4, got {v}"),
                    ))
                }
            })
            .collect::<Result<_>>()?;
        let box_length = grid_sec
            .f64_per_axis("box_length", dim)?
            .unwrap_or_else(|| vec![1.0; dim]);
        grid_sec.finish()?;
        let grid = Grid::new(&resolution, &box_length).map_err(|e| match e {
            Error::Grid(msg) => cfg_err("grid", msg),
            other => other,
        })?;

        // [model]
        let defaults = ModelParams::default();
        let mut model = defaults;
        let mut volume_target_given = false;
        let mut area_target_given = false;
        if let Some(mut sec) = take_section(&mut root, "model")? {
            model.epsilon = sec.f64("epsilon")?.unwrap_or(defaults.epsilon);
            model.bending_rigidity = sec
                .f64("bending_rigidity")?
                .unwrap_or(defaults.bending_rigidity);
            model.mobility = sec.f64("mobility")?.unwrap_or(defaults.mobility);
            model.viscosity = sec.f64("viscosity")?.unwrap_or(defaults.viscosity);
            model.volume_penalty = sec
                .f64("volume_penalty")?
                .unwrap_or(defaults.volume_penalty);
            model.area_penalty = sec.f64("area_penalty")?.unwrap_or(defaults.area_penalty);
            if let Some(v) = sec.f64("volume_target")? {
                model.volume_target = v;
                volume_target_given = true;
            }
            if let Some(v) = sec.f64("area_target")? {
                model.area_target = v;
                area_target_given = true;
            }
            sec.finish()?;
        }
        model.validate()?;

        // [step]
        let mut step_sec = require_section(&mut root, "step")?;
        let step = StepConfig {
            dt: step_sec.require_f64("dt")?,
            scheme: match step_sec.string("scheme")? {
                None => TimeScheme::ImexEuler,
                Some(s) => TimeScheme::parse(&s).ok_or_else(|| {
                    cfg_err("step.scheme", format!("must be imex_euler or imex_bdf2, got {s}"))
                })?,
            },
            dealias: step_sec.bool("dealias")?.unwrap_or(true),
            negate_elastic_force: step_sec.bool("negate_elastic_force")?.unwrap_or(false),
        };
        step_sec.finish()?;
        step.validate()?;

        // [run]
        let mut run_sec = require_section(&mut root, "run")?;
        let t_end = run_sec.require_f64("t_end")?;
        if !(t_end.is_finite() && t_end >= 0.0) {
            return Err(cfg_err("run.t_end", format!("must be finite and >= 0, got {t_end}")));
        }
        let record_every = run_sec.usize("record_every")?.unwrap_or(1);
        if record_every == 0 {
            return Err(cfg_err("run.record_every", "must be >= 1"));
        }
        let mode = match run_sec.string("mode")? {
            None => FlowMode::Coupled,
            Some(s) => FlowMode::parse(&s).ok_or_else(|| {
                cfg_err("run.mode", format!("must be coupled or gradient_flow, got {s}"))
            })?,
        };
        let output_dir = PathBuf::from(
            run_sec
                .string("output_dir")?
                .unwrap_or_else(|| "out".to_string()),
        );
        let checkpoint_every = run_sec.usize("checkpoint_every")?.unwrap_or(0);
        let on_hash_mismatch = match run_sec.string("on_hash_mismatch")? {
            None => HashMismatchPolicy::Fail,
            Some(s) => match s.as_str() {
                "warn" => HashMismatchPolicy::Warn,
                "fail" => HashMismatchPolicy::Fail,
                other => {
                    return Err(cfg_err(
                        "run.on_hash_mismatch",
                        format!("must be warn or fail, got {other}"),
                    ))
                }
            },
        };
        run_sec.finish()?;

        // [initial_condition]
        let mut ic_sec = require_section(&mut root, "initial_condition")?;
        let ic_kind = ic_sec
            .string("kind")?
            .ok_or_else(|| cfg_err("initial_condition.kind", "missing required key"))?;
        let initial_condition = match ic_kind.as_str() {
            "tanh_disk" => {
                let center = ic_sec
                    .f64_per_axis("center", dim)?
                    .unwrap_or_else(|| box_length.iter().map(|l| 0.5 * l).collect());
                let radius = ic_sec.require_f64("radius")?;
                if !(radius.is_finite() && radius > 0.0) {
                    return Err(cfg_err(
                        "initial_condition.radius",
                        format!("must be finite and > 0, got {radius}"),
                    ));
                }
                InitialCondition::TanhDisk { center, radius }
            }
            "tanh_ellipse" => {
                let center = ic_sec
                    .f64_per_axis("center", dim)?
                    .unwrap_or_else(|| box_length.iter().map(|l| 0.5 * l).collect());
                let axes = ic_sec
                    .f64_per_axis("axes", dim)?
                    .ok_or_else(|| cfg_err("initial_condition.axes", "missing required key"))?;
                if axes.iter().any(|&a| !(a.is_finite() && a > 0.0)) {
                    return Err(cfg_err(
                        "initial_condition.axes",
                        "every semi-axis must be finite and > 0",
                    ));
                }
                InitialCondition::TanhEllipse { center, axes }
            }
            "constant" => InitialCondition::Constant {
                value: ic_sec.require_f64("value")?,
            },
            "random" => {
                let seed = ic_sec
                    .u64("seed")?
                    .ok_or_else(|| cfg_err("initial_condition.seed", "missing required key"))?;
                let band = ic_sec
                    .i64("band")?
                    .ok_or_else(|| cfg_err("initial_condition.band", "missing required key"))?;
                if band < 1 {
                    return Err(cfg_err(
                        "initial_condition.band",
                        format!("must be >= 1, got {band}"),
                    ));
                }
                let amplitude = ic_sec.f64("amplitude")?.unwrap_or(0.1);
                InitialCondition::Random {
                    seed,
                    band,
                    amplitude,
                }
            }
            "from_checkpoint" => {
                let raw = ic_sec
                    .string("path")?
                    .ok_or_else(|| cfg_err("initial_condition.path", "missing required key"))?;
                let mut path = PathBuf::from(&raw);
                if path.is_relative() {
                    path = base_dir.join(path);
                }
                if !path.is_file() {
                    return Err(cfg_err(
                        "initial_condition.path",
                        format!("checkpoint {} does not exist", path.display()),
                    ));
                }
                InitialCondition::FromCheckpoint { path }
            }
            other => {
                return Err(cfg_err(
                    "initial_condition.kind",
                    format!(
                        "must be one of tanh_disk, tanh_ellipse, constant, random, from_checkpoint; got {other}"
                    ),
                ))
            }
        };
        ic_sec.finish()?;

        // [initial_velocity]
        let initial_velocity = match take_section(&mut root, "initial_velocity")? {
            None => InitialVelocity::Zero,
            Some(mut sec) => {
                let kind = sec
                    .string("kind")?
                    .ok_or_else(|| cfg_err("initial_velocity.kind", "missing required key"))?;
                let iv = match kind.as_str() {
                    "zero" => InitialVelocity::Zero,
                    "taylor_green" => InitialVelocity::TaylorGreen {
                        amplitude: sec.f64("amplitude")?.unwrap_or(1.0),
                    },
                    "random_solenoidal" => {
                        let seed = sec
                            .u64("seed")?
                            .ok_or_else(|| cfg_err("initial_velocity.seed", "missing required key"))?;
                        let band = sec
                            .i64("band")?
                            .ok_or_else(|| cfg_err("initial_velocity.band", "missing required key"))?;
                        if band < 1 {
                            return Err(cfg_err(
                                "initial_velocity.band",
                                format!("must be >= 1, got {band}"),
                            ));
                        }
                        InitialVelocity::RandomSolenoidal {
                            seed,
                            band,
                            amplitude: sec.f64("amplitude")?.unwrap_or(0.1),
                        }
                    }
                    other => {
                        return Err(cfg_err(
                            "initial_velocity.kind",
                            format!(
                                "must be one of zero, taylor_green, random_solenoidal; got {other}"
                            ),
                        ))
                    }
                };
                sec.finish()?;
                iv
            }
        };

        // [[criteria]]
        let mut criteria = Vec::new();
        match root.remove("criteria") {
            None => {}
            Some(toml::Value::Array(items)) => {
                for (i, item) in items.into_iter().enumerate() {
                    let toml::Value::Table(entries) = item else {
                        return Err(cfg_err(
                            &format!("criteria[{i}]"),
                            "expected a table with kind, p, s",
                        ));
                    };
                    let mut sec = Section {
                        path: format!("criteria[{i}]"),
                        entries,
                    };
                    let kind_s = sec
                        .string("kind")?
                        .ok_or_else(|| cfg_err(&sec.key("kind"), "missing required key"))?;
                    let kind = CriterionKind::parse(&kind_s).ok_or_else(|| {
                        cfg_err(
                            &sec.key("kind"),
                            format!(
                                "must be one of serrin_gradient, serrin_velocity, log_gradient, log_velocity; got {kind_s}"
                            ),
                        )
                    })?;
                    let p = sec.require_f64("p")?;
                    let s = sec.require_f64("s")?;
                    sec.finish()?;
                    criteria.push(CriterionSpec::new(kind, p, s)?);
                }
            }
            Some(other) => {
                return Err(cfg_err(
                    "criteria",
                    format!("expected an array of tables, got {}", other.type_str()),
                ))
            }
        }

        if let Some(name) = root.keys().next() {
            return Err(cfg_err(name, "unknown key"));
        }

        Ok(RunConfig {
            grid,
            model,
            volume_target_given,
            area_target_given,
            step,
            mode,
            t_end,
            record_every,
            output_dir,
            checkpoint_every,
            on_hash_mismatch,
            initial_condition,
            initial_velocity,
            criteria,
        })
    }

    /// Hash of the run-shaping parameters (for checkpoint stamping).
    pub fn params_hash(&self, params: &ModelParams) -> u64 {
        checkpoint::params_hash(&self.grid, params, &self.step, self.mode)
    }

    /// Construct the initial state, resolving the volume / area targets from
    /// the initial data when the config left them out.
    pub fn build_initial(&self) -> Result<PreparedRun> {
        let mut notes = Vec::new();
        let grid = &self.grid;

        let mut stored_hash = None;
        let (phi, u_from_ckpt, prev, t0) = match &self.initial_condition {
            InitialCondition::TanhDisk { center, radius } => (
                tanh_disk(grid, center, *radius, self.model.epsilon)?,
                None,
                None,
                0.0,
            ),
            InitialCondition::TanhEllipse { center, axes } => (
                tanh_ellipse(grid, center, axes, self.model.epsilon)?,
                None,
                None,
                0.0,
            ),
            InitialCondition::Constant { value } => (
                crate::field::ScalarField::constant(grid.clone(), *value)?,
                None,
                None,
                0.0,
            ),
            InitialCondition::Random {
                seed,
                band,
                amplitude,
            } => (
                random_band_limited(grid, *seed, *band, *amplitude)?,
                None,
                None,
                0.0,
            ),
            InitialCondition::FromCheckpoint { path } => {
                let loaded = checkpoint::load(path, None, true)?;
                let ck = loaded.checkpoint;
                ck.state
                    .grid()
                    .check_same(grid, "checkpoint grid vs configured grid")?;
                notes.push(format!(
                    "resuming from {} at t = {:.6e}",
                    path.display(),
                    ck.state.t
                ));
                if self.initial_velocity != InitialVelocity::Zero {
                    notes.push(
                        "initial_velocity ignored: velocity restored from the checkpoint".into(),
                    );
                }
                stored_hash = Some(ck.params_hash);
                let t0 = ck.state.t;
                (ck.state.phi.clone(), Some(ck.state.u), ck.prev, t0)
            }
        };

        let u = match (&u_from_ckpt, &self.initial_velocity) {
            (Some(u), _) => u.clone(),
            (None, InitialVelocity::Zero) => VectorField::zeros(grid.clone()),
            (None, InitialVelocity::TaylorGreen { amplitude }) => taylor_green(grid, *amplitude)?,
            (None, InitialVelocity::RandomSolenoidal {
                seed,
                band,
                amplitude,
            }) => random_solenoidal(grid, *seed, *band, *amplitude)?,
        };

        let mut params = self.model;
        if !self.volume_target_given || !self.area_target_given {
            let filled = self.model.with_targets_from(&phi)?;
            if !self.volume_target_given {
                params.volume_target = filled.volume_target;
                notes.push(format!(
                    "volume_target auto-filled from the initial data: {:.16e}",
                    params.volume_target
                ));
            }
            if !self.area_target_given {
                params.area_target = filled.area_target;
                notes.push(format!(
                    "area_target auto-filled from the initial data: {:.16e}",
                    params.area_target
                ));
            }
        }

        // checkpoint hash check against the resolved parameters
        if let Some(stored) = stored_hash {
            let expected = self.params_hash(&params);
            if stored != expected {
                let msg = format!(
                    "parameter hash mismatch: checkpoint has {stored:#018x}, run configured {expected:#018x}"
                );
                match self.on_hash_mismatch {
                    HashMismatchPolicy::Fail => return Err(Error::Checkpoint(msg)),
                    HashMismatchPolicy::Warn => notes.push(format!("warning: {msg}")),
                }
            }
        }

        let state = SimState::new(u, phi, t0)?;
        Ok(PreparedRun {
            state,
            prev,
            params,
            notes,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
[grid]
dimension = 2
resolution = 32

[step]
dt = 1e-3

[run]
t_end = 0.01

[initial_condition]
kind = "tanh_disk"
radius = 0.25
"#;

    fn parse(text: &str) -> Result<RunConfig> {
        RunConfig::from_toml(text, Path::new("."), &[])
    }

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg = parse(BASE).unwrap();
        assert_eq!(cfg.grid.resolution(), &[32, 32]);
        assert_eq!(cfg.step.scheme, TimeScheme::ImexEuler);
        assert!(cfg.step.dealias);
        assert_eq!(cfg.mode, FlowMode::Coupled);
        assert_eq!(cfg.record_every, 1);
        assert!(!cfg.volume_target_given);
        assert_eq!(cfg.on_hash_mismatch, HashMismatchPolicy::Fail);
        assert!(matches!(
            cfg.initial_condition,
            InitialCondition::TanhDisk { .. }
        ));
    }

    #[test]
    fn unknown_keys_are_named_at_every_level() {
        let top = format!("whatever = 1\n{BASE}");
        match parse(&top) {
            Err(Error::Config { key, .. }) => assert_eq!(key, "whatever"),
            other => panic!("unexpected {other:?}"),
        }
        let nested = BASE.replace("dt = 1e-3", "dt = 1e-3\ndtt = 2.0");
        match parse(&nested) {
            Err(Error::Config { key, .. }) => assert_eq!(key, "step.dtt"),
            other => panic!("unexpected {other:?}"),
        }
        let in_ic = BASE.replace("radius = 0.25", "radius = 0.25\nradiusz = 1.0");
        match parse(&in_ic) {
            Err(Error::Config { key, .. }) => assert_eq!(key, "initial_condition.radiusz"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn env_overrides_reach_nested_keys() {
        let env = vec![
            ("VESIFLOW_STEP__DT".to_string(), "5e-4".to_string()),
            ("VESIFLOW_STEP__SCHEME".to_string(), "imex_bdf2".to_string()),
            ("VESIFLOW_RUN__OUTPUT_DIR".to_string(), "/tmp/elsewhere".to_string()),
            ("OTHER_VAR".to_string(), "ignored".to_string()),
        ];
        let cfg = RunConfig::from_toml(BASE, Path::new("."), &env).unwrap();
        assert_eq!(cfg.step.dt, 5e-4);
        assert_eq!(cfg.step.scheme, TimeScheme::ImexBdf2);
        assert_eq!(cfg.output_dir, PathBuf::from("/tmp/elsewhere"));
    }

    #[test]
    fn env_override_with_unknown_key_is_rejected() {
        let env = vec![("VESIFLOW_STEP__BOGUS".to_string(), "1".to_string())];
        match RunConfig::from_toml(BASE, Path::new("."), &env) {
            Err(Error::Config { key, .. }) => assert_eq!(key, "step.bogus"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_checkpoint_path_fails_at_parse_time() {
        let text = BASE.replace(
            "kind = \"tanh_disk\"\nradius = 0.25",
            "kind = \"from_checkpoint\"\npath = \"does_not_exist.vfcp\"",
        );
        match parse(&text) {
            Err(Error::Config { key, message }) => {
                assert_eq!(key, "initial_condition.path");
                assert!(message.contains("does not exist"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn criteria_entries_are_validated_on_parse() {
        let good = format!(
            "{BASE}\n[[criteria]]\nkind = \"serrin_gradient\"\np = 4.0\ns = 4.0\n"
        );
        let cfg = parse(&good).unwrap();
        assert_eq!(cfg.criteria.len(), 1);
        let bad = format!(
            "{BASE}\n[[criteria]]\nkind = \"serrin_velocity\"\np = 2.0\ns = 4.0\n"
        );
        match parse(&bad) {
            Err(Error::InvalidCriterion { violated, .. }) => {
                assert_eq!(violated, "3 < p <= inf")
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn build_fills_targets_and_reports_them() {
        let cfg = parse(BASE).unwrap();
        let prepared = cfg.build_initial().unwrap();
        assert!(prepared
            .notes
            .iter()
            .any(|n| n.contains("volume_target auto-filled")));
        assert!(prepared
            .notes
            .iter()
            .any(|n| n.contains("area_target auto-filled")));
        // the filled targets make the penalties vanish at t = 0
        let e = crate::energy::total_energy(&prepared.state.phi, &prepared.params).unwrap();
        assert!(e.volume_penalty.abs() < 1e-20, "{}", e.volume_penalty);
        assert!(e.area_penalty.abs() < 1e-20, "{}", e.area_penalty);
    }

    #[test]
    fn explicit_targets_are_kept() {
        let text = format!("{BASE}\n[model]\nvolume_target = 0.125\n");
        let cfg = parse(&text).unwrap();
        assert!(cfg.volume_target_given);
        let prepared = cfg.build_initial().unwrap();
        assert_eq!(prepared.params.volume_target, 0.125);
        assert!(prepared
            .notes
            .iter()
            .all(|n| !n.contains("volume_target auto-filled")));
        assert!(prepared
            .notes
            .iter()
            .any(|n| n.contains("area_target auto-filled")));
    }
}
