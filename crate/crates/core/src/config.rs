//! TOML run configuration.
//!
//! ```toml
//! command = "sweep"
//! seed = 7
//!
//! [params]
//! gamma_e = 4.5      # μs⁻¹
//! gamma_f = 0.3
//! gamma_phi = 0.5
//!
//! [sweep]
//! j_start = 1.2      # rad·μs⁻¹
//! j_stop = 4.0
//! j_points = 29
//! ```
//!
//! Only the section named by `command` may appear. Every key is optional
//! except `command`, `params.gamma_e` and `params.gamma_f`.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use toml::{Table, Value};

use crate::model::SystemParams;
use crate::smallmat::DEFAULT_DEFECT_TOL;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Spectrum,
    Ep,
    Sweep,
    Relax,
    Loop,
    Trajectories,
}

impl Command {
    pub const ALL: [Command; 6] =
        [Command::Spectrum, Command::Ep, Command::Sweep, Command::Relax, Command::Loop, Command::Trajectories];

    pub fn name(self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::Ep => "ep",
            Command::Sweep => "sweep",
            Command::Relax => "relax",
            Command::Loop => "loop",
            Command::Trajectories => "trajectories",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s)
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumSpec {
    pub j_start: f64,
    pub j_stop: f64,
    pub j_points: usize,
    pub include_l1: bool,
    pub defect_tol: f64,
}

impl Default for SpectrumSpec {
    fn default() -> Self {
        Self { j_start: 0.0, j_stop: 4.0, j_points: 81, include_l1: true, defect_tol: DEFAULT_DEFECT_TOL }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpSpec {
    /// Search bracket; `None` means [0, 2·max rate].
    pub j_min: Option<f64>,
    pub j_max: Option<f64>,
    pub j_tol: f64,
}

impl Default for EpSpec {
    fn default() -> Self {
        Self { j_min: None, j_max: None, j_tol: 1e-10 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub j_start: f64,
    pub j_stop: f64,
    pub j_points: usize,
    pub samples: usize,
    pub lifetimes: f64,
    pub min_periods: f64,
    pub undamped_t_max: f64,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            j_start: 1.2,
            j_stop: 4.0,
            j_points: 29,
            samples: 200,
            lifetimes: 3.0,
            min_periods: 2.0,
            undamped_t_max: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelaxSpec {
    pub t_max: f64,
    pub samples: usize,
    /// (e, f) amplitudes; `None` starts from |−⟩.
    pub initial_state: Option<[Complex64; 2]>,
}

impl Default for RelaxSpec {
    fn default() -> Self {
        Self { t_max: 5.0, samples: 1001, initial_state: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopSpec {
    pub period: f64,
    pub amplitude: f64,
    pub sign: i8,
    pub include_l1: bool,
    pub samples_per_period: usize,
}

impl Default for LoopSpec {
    fn default() -> Self {
        Self { period: 4.0, amplitude: 30.0 * PI, sign: 1, include_l1: true, samples_per_period: 2000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialKet {
    E,
    F,
    PlusX,
}

impl InitialKet {
    const NAMES: [(&'static str, InitialKet); 3] =
        [("e", InitialKet::E), ("f", InitialKet::F), ("plus_x", InitialKet::PlusX)];

    pub fn name(self) -> &'static str {
        Self::NAMES.iter().find(|(_, k)| *k == self).map(|(n, _)| *n).unwrap_or("f")
    }

    pub fn ket(self) -> [Complex64; 2] {
        match self {
            InitialKet::E => crate::model::ket_e(),
            InitialKet::F => crate::model::ket_f(),
            InitialKet::PlusX => crate::model::ket_plus_x(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySpec {
    pub t_max: f64,
    pub samples: usize,
    pub n_trajectories: usize,
    pub initial: InitialKet,
}

impl Default for TrajectorySpec {
    fn default() -> Self {
        Self { t_max: 1.0, samples: 101, n_trajectories: 10_000, initial: InitialKet::F }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CommandSpec {
    Spectrum(SpectrumSpec),
    Ep(EpSpec),
    Sweep(SweepSpec),
    Relax(RelaxSpec),
    Loop(LoopSpec),
    Trajectories(TrajectorySpec),
}

impl CommandSpec {
    pub fn command(&self) -> Command {
        match self {
            CommandSpec::Spectrum(_) => Command::Spectrum,
            CommandSpec::Ep(_) => Command::Ep,
            CommandSpec::Sweep(_) => Command::Sweep,
            CommandSpec::Relax(_) => Command::Relax,
            CommandSpec::Loop(_) => Command::Loop,
            CommandSpec::Trajectories(_) => Command::Trajectories,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub params: SystemParams,
    /// Keep the γφ σz ρ σz recycle term in L1.
    pub dephasing_recycle: bool,
    pub seed: Option<u64>,
    /// Output directory used when none is given on the command line.
    pub out: Option<String>,
    pub spec: CommandSpec,
}

impl RunConfig {
    pub fn command(&self) -> Command {
        self.spec.command()
    }

    pub fn with_spec(params: SystemParams, spec: CommandSpec) -> Self {
        Self { params, dephasing_recycle: true, seed: None, out: None, spec }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("{} configuration error(s):\n  {}", .0.len(), .0.join("\n  "))]
    Invalid(Vec<String>),
}

impl ConfigError {
    pub fn messages(&self) -> Vec<String> {
        match self {
            ConfigError::Syntax(m) => vec![m.clone()],
            ConfigError::Invalid(v) => v.clone(),
        }
    }
}

/// Reads typed values out of one table, recording every problem instead of
/// stopping at the first.
struct Reader<'t, 'e> {
    table: Option<&'t Table>,
    prefix: &'static str,
    errors: &'e mut Vec<String>,
}

#[derive(Clone, Copy)]
enum Range {
    Any,
    NonNegative,
    Positive,
}

impl<'t> Reader<'t, '_> {
    fn key(&self, k: &str) -> String {
        if self.prefix.is_empty() {
            k.to_string()
        } else {
            format!("{}.{k}", self.prefix)
        }
    }

    fn get(&self, k: &str) -> Option<&'t Value> {
        self.table.and_then(|t| t.get(k))
    }

    fn reject_unknown(&mut self, allowed: &[&str]) {
        if let Some(t) = self.table {
            for k in t.keys() {
                if !allowed.contains(&k.as_str()) {
                    let msg = format!("unknown key `{}`", self.key(k));
                    self.errors.push(msg);
                }
            }
        }
    }

    fn float_opt(&mut self, k: &str, range: Range, unit: &str) -> Option<f64> {
        let v = match self.get(k)? {
            Value::Float(f) => *f,
            Value::Integer(i) => *i as f64,
            other => {
                let msg = format!("`{}` must be a number ({unit}), got {}", self.key(k), other.type_str());
                self.errors.push(msg);
                return None;
            }
        };
        let bad = match range {
            _ if !v.is_finite() => Some("finite"),
            Range::NonNegative if v < 0.0 => Some(">= 0"),
            Range::Positive if v <= 0.0 => Some("> 0"),
            _ => None,
        };
        if let Some(req) = bad {
            let msg = format!("`{}` = {v} out of range: must be {req} ({unit})", self.key(k));
            self.errors.push(msg);
            return None;
        }
        Some(v)
    }

    fn float(&mut self, k: &str, default: f64, range: Range, unit: &str) -> f64 {
        self.float_opt(k, range, unit).unwrap_or(default)
    }

    fn required_float(&mut self, k: &str, range: Range, unit: &str) -> f64 {
        if self.get(k).is_none() {
            let msg = format!("missing required key `{}` ({unit})", self.key(k));
            self.errors.push(msg);
            return 0.0;
        }
        self.float_opt(k, range, unit).unwrap_or(0.0)
    }

    fn uint(&mut self, k: &str, default: usize, min: usize) -> usize {
        match self.get(k) {
            None => default,
            Some(Value::Integer(i)) if *i >= min as i64 => *i as usize,
            Some(Value::Integer(i)) => {
                let msg = format!("`{}` = {i} out of range: must be an integer >= {min}", self.key(k));
                self.errors.push(msg);
                default
            }
            Some(other) => {
                let msg = format!("`{}` must be an integer, got {}", self.key(k), other.type_str());
                self.errors.push(msg);
                default
            }
        }
    }

    fn boolean(&mut self, k: &str, default: bool) -> bool {
        match self.get(k) {
            None => default,
            Some(Value::Boolean(b)) => *b,
            Some(other) => {
                let msg = format!("`{}` must be a boolean, got {}", self.key(k), other.type_str());
                self.errors.push(msg);
                default
            }
        }
    }

    fn string(&mut self, k: &str) -> Option<&'t str> {
        match self.get(k)? {
            Value::String(s) => Some(s.as_str()),
            other => {
                let msg = format!("`{}` must be a string, got {}", self.key(k), other.type_str());
                self.errors.push(msg);
                None
            }
        }
    }
}

fn section<'a>(root: &'a Table, name: &str, errors: &mut Vec<String>) -> Option<&'a Table> {
    match root.get(name)? {
        Value::Table(t) => Some(t),
        other => {
            errors.push(format!("`{name}` must be a table, got {}", other.type_str()));
            None
        }
    }
}

const RATE: &str = "μs⁻¹";
const COUPLING: &str = "rad·μs⁻¹";
const TIME: &str = "μs";

fn check_grid(start: f64, stop: f64, points: usize, prefix: &str, errors: &mut Vec<String>) {
    if points > 1 && stop <= start {
        errors.push(format!("`{prefix}.j_stop` ({stop}) must exceed `{prefix}.j_start` ({start}) when j_points > 1"));
    }
}

fn parse_spectrum(t: Option<&Table>, errors: &mut Vec<String>) -> SpectrumSpec {
    let d = SpectrumSpec::default();
    let mut r = Reader { table: t, prefix: "spectrum", errors };
    r.reject_unknown(&["j_start", "j_stop", "j_points", "include_l1", "defect_tol"]);
    let s = SpectrumSpec {
        j_start: r.float("j_start", d.j_start, Range::NonNegative, COUPLING),
        j_stop: r.float("j_stop", d.j_stop, Range::NonNegative, COUPLING),
        j_points: r.uint("j_points", d.j_points, 1),
        include_l1: r.boolean("include_l1", d.include_l1),
        defect_tol: r.float("defect_tol", d.defect_tol, Range::Positive, "relative"),
    };
    if s.defect_tol >= 1.0 {
        errors.push(format!("`spectrum.defect_tol` = {} out of range: must be < 1", s.defect_tol));
    }
    check_grid(s.j_start, s.j_stop, s.j_points, "spectrum", errors);
    s
}

fn parse_ep(t: Option<&Table>, errors: &mut Vec<String>) -> EpSpec {
    let d = EpSpec::default();
    let mut r = Reader { table: t, prefix: "ep", errors };
    r.reject_unknown(&["j_min", "j_max", "j_tol"]);
    let s = EpSpec {
        j_min: r.float_opt("j_min", Range::NonNegative, COUPLING),
        j_max: r.float_opt("j_max", Range::NonNegative, COUPLING),
        j_tol: r.float("j_tol", d.j_tol, Range::Positive, COUPLING),
    };
    if let (Some(lo), Some(hi)) = (s.j_min, s.j_max) {
        if hi <= lo {
            errors.push(format!("`ep.j_max` ({hi}) must exceed `ep.j_min` ({lo})"));
        }
    }
    s
}

fn parse_sweep(t: Option<&Table>, errors: &mut Vec<String>) -> SweepSpec {
    let d = SweepSpec::default();
    let mut r = Reader { table: t, prefix: "sweep", errors };
    r.reject_unknown(&["j_start", "j_stop", "j_points", "samples", "lifetimes", "min_periods", "undamped_t_max"]);
    let s = SweepSpec {
        j_start: r.float("j_start", d.j_start, Range::NonNegative, COUPLING),
        j_stop: r.float("j_stop", d.j_stop, Range::NonNegative, COUPLING),
        j_points: r.uint("j_points", d.j_points, 1),
        samples: r.uint("samples", d.samples, crate::analysis::fit::MIN_SAMPLES),
        lifetimes: r.float("lifetimes", d.lifetimes, Range::Positive, "lifetimes"),
        min_periods: r.float("min_periods", d.min_periods, Range::NonNegative, "periods"),
        undamped_t_max: r.float("undamped_t_max", d.undamped_t_max, Range::Positive, TIME),
    };
    check_grid(s.j_start, s.j_stop, s.j_points, "sweep", errors);
    s
}

fn parse_relax(t: Option<&Table>, errors: &mut Vec<String>) -> RelaxSpec {
    let d = RelaxSpec::default();
    let mut r = Reader { table: t, prefix: "relax", errors };
    r.reject_unknown(&["t_max", "samples", "initial_state"]);
    let t_max = r.float("t_max", d.t_max, Range::Positive, TIME);
    let samples = r.uint("samples", d.samples, 2);
    let initial_state = match r.get("initial_state") {
        None => None,
        Some(Value::Array(a)) if a.len() == 4 && a.iter().all(|v| v.is_float() || v.is_integer()) => {
            let x: Vec<f64> =
                a.iter().map(|v| v.as_float().unwrap_or_else(|| v.as_integer().unwrap_or(0) as f64)).collect();
            if x.iter().any(|v| !v.is_finite()) || x.iter().all(|v| *v == 0.0) {
                errors.push("`relax.initial_state` must be finite and not all zero".into());
                None
            } else {
                Some([Complex64::new(x[0], x[1]), Complex64::new(x[2], x[3])])
            }
        }
        Some(_) => {
            errors.push("`relax.initial_state` must be an array [re_e, im_e, re_f, im_f]".into());
            None
        }
    };
    RelaxSpec { t_max, samples, initial_state }
}

fn parse_loop(t: Option<&Table>, errors: &mut Vec<String>) -> LoopSpec {
    let d = LoopSpec::default();
    let mut r = Reader { table: t, prefix: "loop", errors };
    r.reject_unknown(&["period", "amplitude", "sign", "include_l1", "samples_per_period"]);
    let period = r.float("period", d.period, Range::Positive, TIME);
    let amplitude = r.float("amplitude", d.amplitude, Range::Any, COUPLING);
    let sign = match r.get("sign") {
        None => d.sign,
        Some(Value::Integer(1)) => 1,
        Some(Value::Integer(-1)) => -1,
        Some(_) => {
            errors.push("`loop.sign` must be 1 or -1".into());
            d.sign
        }
    };
    let mut r = Reader { table: t, prefix: "loop", errors };
    LoopSpec {
        period,
        amplitude,
        sign,
        include_l1: r.boolean("include_l1", d.include_l1),
        samples_per_period: r.uint("samples_per_period", d.samples_per_period, 2),
    }
}

fn parse_trajectories(t: Option<&Table>, errors: &mut Vec<String>) -> TrajectorySpec {
    let d = TrajectorySpec::default();
    let mut r = Reader { table: t, prefix: "trajectories", errors };
    r.reject_unknown(&["t_max", "samples", "n_trajectories", "initial"]);
    let t_max = r.float("t_max", d.t_max, Range::Positive, TIME);
    let samples = r.uint("samples", d.samples, 2);
    let n_trajectories = r.uint("n_trajectories", d.n_trajectories, 1);
    let initial = match r.string("initial") {
        None => d.initial,
        Some(s) => match InitialKet::NAMES.iter().find(|(n, _)| *n == s) {
            Some((_, k)) => *k,
            None => {
                errors.push(format!("`trajectories.initial` = {s:?} must be one of \"e\", \"f\", \"plus_x\""));
                d.initial
            }
        },
    };
    TrajectorySpec { t_max, samples, n_trajectories, initial }
}

/// Parses and validates a configuration, reporting every problem found.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let root: Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Syntax(e.to_string()))?;
    let mut errors = Vec::new();

    let command = match root.get("command") {
        None => {
            errors.push("missing required key `command`".to_string());
            None
        }
        Some(Value::String(s)) => {
            let c = Command::from_name(s);
            if c.is_none() {
                let names: Vec<_> = Command::ALL.iter().map(|c| c.name()).collect();
                errors.push(format!("unknown command {s:?}; expected one of {}", names.join(", ")));
            }
            c
        }
        Some(other) => {
            errors.push(format!("`command` must be a string, got {}", other.type_str()));
            None
        }
    };

    let mut top_allowed = vec!["command", "seed", "out", "dephasing_recycle", "params"];
    if let Some(c) = command {
        top_allowed.push(c.name());
    }
    let mut top = Reader { table: Some(&root), prefix: "", errors: &mut errors };
    top.reject_unknown(&top_allowed);
    let dephasing_recycle = top.boolean("dephasing_recycle", true);
    let out = top.string("out").map(str::to_string);
    let seed = match root.get("seed") {
        None => None,
        Some(Value::Integer(i)) if *i >= 0 => Some(*i as u64),
        Some(_) => {
            errors.push("`seed` must be a non-negative integer".into());
            None
        }
    };

    let params_table = section(&root, "params", &mut errors);
    let mut pr = Reader { table: params_table, prefix: "params", errors: &mut errors };
    if params_table.is_none() && root.get("params").is_none() {
        pr.errors.push("missing required table `params`".into());
    }
    pr.reject_unknown(&["j", "delta", "gamma_e", "gamma_f", "gamma_phi"]);
    let params = SystemParams {
        j: pr.float("j", 0.0, Range::NonNegative, COUPLING),
        delta: pr.float("delta", 0.0, Range::Any, COUPLING),
        gamma_e: pr.required_float("gamma_e", Range::NonNegative, RATE),
        gamma_f: pr.required_float("gamma_f", Range::NonNegative, RATE),
        gamma_phi: pr.float("gamma_phi", 0.0, Range::NonNegative, RATE),
    };

    let spec = command.map(|c| {
        let t = section(&root, c.name(), &mut errors);
        match c {
            Command::Spectrum => CommandSpec::Spectrum(parse_spectrum(t, &mut errors)),
            Command::Ep => CommandSpec::Ep(parse_ep(t, &mut errors)),
            Command::Sweep => CommandSpec::Sweep(parse_sweep(t, &mut errors)),
            Command::Relax => CommandSpec::Relax(parse_relax(t, &mut errors)),
            Command::Loop => CommandSpec::Loop(parse_loop(t, &mut errors)),
            Command::Trajectories => CommandSpec::Trajectories(parse_trajectories(t, &mut errors)),
        }
    });

    match spec {
        Some(spec) if errors.is_empty() => Ok(RunConfig { params, dephasing_recycle, seed, out, spec }),
        _ => Err(ConfigError::Invalid(errors)),
    }
}

fn float(v: f64) -> Value {
    Value::Float(v)
}

fn int(v: usize) -> Value {
    Value::Integer(v as i64)
}

/// TOML text that parses back to `cfg`, with every field written out.
pub fn render(cfg: &RunConfig) -> String {
    to_table(cfg).to_string()
}

/// The configuration as a TOML table with every field explicit.
pub fn to_table(cfg: &RunConfig) -> Table {
    let mut root = Table::new();
    root.insert("command".into(), Value::String(cfg.command().name().into()));
    if let Some(seed) = cfg.seed {
        root.insert("seed".into(), Value::Integer(seed as i64));
    }
    if let Some(out) = &cfg.out {
        root.insert("out".into(), Value::String(out.clone()));
    }
    root.insert("dephasing_recycle".into(), Value::Boolean(cfg.dephasing_recycle));

    let p = &cfg.params;
    let mut params = Table::new();
    for (k, v) in
        [("j", p.j), ("delta", p.delta), ("gamma_e", p.gamma_e), ("gamma_f", p.gamma_f), ("gamma_phi", p.gamma_phi)]
    {
        params.insert(k.into(), float(v));
    }
    root.insert("params".into(), Value::Table(params));

    let mut s = Table::new();
    match &cfg.spec {
        CommandSpec::Spectrum(c) => {
            s.insert("j_start".into(), float(c.j_start));
            s.insert("j_stop".into(), float(c.j_stop));
            s.insert("j_points".into(), int(c.j_points));
            s.insert("include_l1".into(), Value::Boolean(c.include_l1));
            s.insert("defect_tol".into(), float(c.defect_tol));
        }
        CommandSpec::Ep(c) => {
            if let Some(v) = c.j_min {
                s.insert("j_min".into(), float(v));
            }
            if let Some(v) = c.j_max {
                s.insert("j_max".into(), float(v));
            }
            s.insert("j_tol".into(), float(c.j_tol));
        }
        CommandSpec::Sweep(c) => {
            s.insert("j_start".into(), float(c.j_start));
            s.insert("j_stop".into(), float(c.j_stop));
            s.insert("j_points".into(), int(c.j_points));
            s.insert("samples".into(), int(c.samples));
            s.insert("lifetimes".into(), float(c.lifetimes));
            s.insert("min_periods".into(), float(c.min_periods));
            s.insert("undamped_t_max".into(), float(c.undamped_t_max));
        }
        CommandSpec::Relax(c) => {
            s.insert("t_max".into(), float(c.t_max));
            s.insert("samples".into(), int(c.samples));
            if let Some([e, f]) = c.initial_state {
                s.insert(
                    "initial_state".into(),
                    Value::Array([e.re, e.im, f.re, f.im].map(float).into_iter().collect()),
                );
            }
        }
        CommandSpec::Loop(c) => {
            s.insert("period".into(), float(c.period));
            s.insert("amplitude".into(), float(c.amplitude));
            s.insert("sign".into(), Value::Integer(c.sign as i64));
            s.insert("include_l1".into(), Value::Boolean(c.include_l1));
            s.insert("samples_per_period".into(), int(c.samples_per_period));
        }
        CommandSpec::Trajectories(c) => {
            s.insert("t_max".into(), float(c.t_max));
            s.insert("samples".into(), int(c.samples));
            s.insert("n_trajectories".into(), int(c.n_trajectories));
            s.insert("initial".into(), Value::String(c.initial.name().into()));
        }
    }
    root.insert(cfg.command().name().into(), Value::Table(s));
    root
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn minimal_spectrum_config() {
        let cfg = parse_config("command = \"spectrum\"\n[params]\ngamma_e = 6.25\ngamma_f = 0.25\n").unwrap();
        assert_eq!(cfg.command(), Command::Spectrum);
        assert_eq!(cfg.params.gamma_e, 6.25);
        assert_eq!(cfg.params.gamma_f, 0.25);
        assert_eq!(cfg.params.gamma_phi, 0.0);
        assert_eq!(cfg.spec, CommandSpec::Spectrum(SpectrumSpec::default()));
        assert!(cfg.dephasing_recycle);
    }

    #[test]
    fn negative_rate_rejected() {
        let err = parse_config("command = \"ep\"\n[params]\ngamma_e = -1.0\ngamma_f = 0.25\n").unwrap_err();
        let msgs = err.messages();
        assert_eq!(msgs.len(), 1);
        assert!(msgs[0].contains("params.gamma_e") && msgs[0].contains(">= 0"), "{msgs:?}");
    }

    #[test]
    fn duplicate_key_rejected() {
        let err =
            parse_config("command = \"ep\"\n[params]\ngamma_e = 1.0\ngamma_e = 2.0\ngamma_f = 0.1\n").unwrap_err();
        assert!(matches!(err, ConfigError::Syntax(_)));
    }

    #[test]
    fn all_errors_reported() {
        let text = "command = \"sweep\"\nbogus = 1\n[params]\ngamma_f = -0.3\nextra = 2\n[sweep]\nsamples = 3\nj_start = 4.0\nj_stop = 1.0\n";
        let msgs = parse_config(text).unwrap_err().messages();
        for needle in ["`bogus`", "`params.extra`", "params.gamma_e", "params.gamma_f", "sweep.samples", "sweep.j_stop"]
        {
            assert!(msgs.iter().any(|m| m.contains(needle)), "{needle} missing from {msgs:?}");
        }
    }

    #[test]
    fn foreign_section_rejected() {
        let text = "command = \"ep\"\n[params]\ngamma_e = 1.0\ngamma_f = 0.1\n[loop]\nperiod = 4.0\n";
        let msgs = parse_config(text).unwrap_err().messages();
        assert!(msgs.iter().any(|m| m.contains("unknown key `loop`")));
    }

    #[test]
    fn unknown_command_and_types() {
        let msgs =
            parse_config("command = \"plot\"\n[params]\ngamma_e = \"fast\"\ngamma_f = 0.1\n").unwrap_err().messages();
        assert!(msgs.iter().any(|m| m.contains("unknown command")));
        assert!(msgs.iter().any(|m| m.contains("must be a number")));
    }

    #[test]
    fn integers_accepted_for_floats() {
        let cfg =
            parse_config("command = \"loop\"\n[params]\nj = 30\ngamma_e = 6.25\ngamma_f = 0.25\n[loop]\nsign = -1\n")
                .unwrap();
        assert_eq!(cfg.params.j, 30.0);
        assert!(matches!(cfg.spec, CommandSpec::Loop(LoopSpec { sign: -1, .. })));
    }

    fn rate() -> impl Strategy<Value = f64> {
        prop_oneof![Just(0.0), 0.0..20.0f64]
    }

    fn arb_spec() -> impl Strategy<Value = CommandSpec> {
        prop_oneof![
            (0.0..2.0f64, 0.1..5.0f64, 2usize..200, any::<bool>(), 1e-12..1e-2f64).prop_map(|(a, w, n, l1, tol)| {
                CommandSpec::Spectrum(SpectrumSpec {
                    j_start: a,
                    j_stop: a + w,
                    j_points: n,
                    include_l1: l1,
                    defect_tol: tol,
                })
            }),
            (proptest::option::of(0.0..1.0f64), proptest::option::of(2.0..9.0f64), 1e-14..1e-3f64)
                .prop_map(|(lo, hi, tol)| CommandSpec::Ep(EpSpec { j_min: lo, j_max: hi, j_tol: tol })),
            (0.0..2.0f64, 0.1..5.0f64, 2usize..60, 12usize..1000, 0.5..6.0f64, 0.0..5.0f64, 0.1..50.0f64).prop_map(
                |(a, w, n, s, l, m, u)| CommandSpec::Sweep(SweepSpec {
                    j_start: a,
                    j_stop: a + w,
                    j_points: n,
                    samples: s,
                    lifetimes: l,
                    min_periods: m,
                    undamped_t_max: u
                })
            ),
            (0.01..50.0f64, 2usize..5000, proptest::option::of(prop::array::uniform4(-1.0..1.0f64)))
                .prop_filter("non-zero state", |(_, _, s)| s.is_none_or(|v| v.iter().any(|x| *x != 0.0)))
                .prop_map(|(t, n, s)| CommandSpec::Relax(RelaxSpec {
                    t_max: t,
                    samples: n,
                    initial_state: s.map(|v| [Complex64::new(v[0], v[1]), Complex64::new(v[2], v[3])]),
                })),
            (0.1..20.0f64, -200.0..200.0f64, prop_oneof![Just(1i8), Just(-1i8)], any::<bool>(), 2usize..5000).prop_map(
                |(t, a, sg, l1, n)| CommandSpec::Loop(LoopSpec {
                    period: t,
                    amplitude: a,
                    sign: sg,
                    include_l1: l1,
                    samples_per_period: n
                })
            ),
            (
                0.01..10.0f64,
                2usize..500,
                1usize..100_000,
                prop_oneof![Just(InitialKet::E), Just(InitialKet::F), Just(InitialKet::PlusX)]
            )
                .prop_map(|(t, s, n, k)| CommandSpec::Trajectories(TrajectorySpec {
                    t_max: t,
                    samples: s,
                    n_trajectories: n,
                    initial: k
                })),
        ]
    }

    proptest! {
        #[test]
        fn render_round_trips(
            j in 0.0..50.0f64, delta in -100.0..100.0f64,
            ge in rate(), gf in rate(), gp in rate(),
            recycle in any::<bool>(),
            seed in proptest::option::of(0u64..(i64::MAX as u64)),
            out in proptest::option::of("[a-z/_]{1,12}"),
            spec in arb_spec(),
        ) {
            let cfg = RunConfig {
                params: SystemParams { j, delta, gamma_e: ge, gamma_f: gf, gamma_phi: gp },
                dephasing_recycle: recycle,
                seed,
                out,
                spec,
            };
            let text = render(&cfg);
            prop_assert_eq!(parse_config(&text), Ok(cfg), "{}", text);
        }
    }
}
