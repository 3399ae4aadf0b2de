//! Run configuration: TOML text to a validated [`RunConfig`].
//!
//! Every section is optional; omitted values fall back to the reference
//! scenario (kernel I with `ℓ = 1`, uniform binary breakage, `f^in = e^{-x}`,
//! grid `1e-3 … 10` with 120 cells, `t_end = 1`). All problems found are
//! reported together, each prefixed by its key path.

use std::cell::RefCell;
use std::collections::BTreeSet;
use std::fmt;

use nlbreak_core::sectional::uniform_checkpoints;
use nlbreak_core::{
    DaughterFamily, DaughterSpec, InitialDensity, KernelFamily, KernelSpec, SolverConfig, VolumeNormalization,
    WeightFamily,
};
use serde::Serialize;
use toml::{Table, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Solve,
    Mc,
    Validate,
    Sweep,
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Solve => "solve",
            Mode::Mc => "mc",
            Mode::Validate => "validate",
            Mode::Sweep => "sweep",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "solve" => Some(Mode::Solve),
            "mc" => Some(Mode::Mc),
            "validate" => Some(Mode::Validate),
            "sweep" => Some(Mode::Sweep),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridParams {
    pub x_min: f64,
    pub n: f64,
    pub cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McParams {
    pub particles: usize,
    pub replicas: usize,
    pub t_end: f64,
    pub checkpoints: Vec<f64>,
    pub max_events: u64,
    pub normalization: VolumeNormalization,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsParams {
    pub mass_tol: f64,
    pub m0_law_rel_tol: f64,
    pub m0_law_from: f64,
    pub m_cut: f64,
    pub envelope_horizon: f64,
    pub convexity_tol: f64,
    pub weak_form_identity_tol: f64,
    pub weak_form_constant_tol: f64,
    pub weak_form_indicator_tol: f64,
    pub ui_a_cut: f64,
    pub ui_p: f64,
    pub ui_deltas: Vec<f64>,
}

impl Default for DiagnosticsParams {
    fn default() -> Self {
        DiagnosticsParams {
            mass_tol: 1e-10,
            m0_law_rel_tol: 0.01,
            m0_law_from: 0.1,
            m_cut: 2.0,
            envelope_horizon: 0.8,
            convexity_tol: 1e-12,
            weak_form_identity_tol: 1e-10,
            weak_form_constant_tol: 0.01,
            weak_form_indicator_tol: 0.02,
            ui_a_cut: 1.0,
            ui_p: 1.5,
            ui_deltas: vec![1e-3, 3e-3, 1e-2, 3e-2, 1e-1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    /// Mode named in the file, if any.
    pub mode: Option<Mode>,
    pub seed: u64,
    pub kernel: KernelSpec,
    pub daughter: DaughterSpec,
    pub weight: WeightFamily,
    pub initial: InitialDensity,
    pub grid: GridParams,
    pub solver: SolverConfig,
    pub mc: McParams,
    pub diagnostics: DiagnosticsParams,
    pub ell_values: Vec<f64>,
}

/// All problems found in a config, one path-qualified message each.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub errors: Vec<String>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} configuration error(s):", self.errors.len())?;
        for e in &self.errors {
            write!(f, "\n  - {e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

struct Errors(RefCell<Vec<String>>);

impl Errors {
    fn push(&self, msg: String) {
        self.0.borrow_mut().push(msg);
    }
}

/// Key access for one table that remembers which keys were read.
struct Section<'a> {
    path: String,
    table: Option<&'a Table>,
    used: RefCell<BTreeSet<String>>,
    errors: &'a Errors,
}

impl<'a> Section<'a> {
    fn new(path: &str, table: Option<&'a Table>, errors: &'a Errors) -> Self {
        Section {
            path: path.to_string(),
            table,
            used: RefCell::new(BTreeSet::new()),
            errors,
        }
    }

    fn key_path(&self, key: &str) -> String {
        if self.path.is_empty() {
            key.to_string()
        } else {
            format!("{}.{key}", self.path)
        }
    }

    fn err(&self, key: &str, msg: impl fmt::Display) {
        self.errors.push(format!("{}: {msg}", self.key_path(key)));
    }

    fn raw(&self, key: &str) -> Option<&'a Value> {
        self.used.borrow_mut().insert(key.to_string());
        self.table.and_then(|t| t.get(key))
    }

    fn has(&self, key: &str) -> bool {
        self.table.is_some_and(|t| t.contains_key(key))
    }

    fn float(&self, key: &str) -> Option<f64> {
        match self.raw(key)? {
            Value::Float(v) => Some(*v),
            Value::Integer(v) => Some(*v as f64),
            other => {
                self.err(key, format!("expected a number, found {}", other.type_str()));
                None
            }
        }
    }

    fn float_or(&self, key: &str, default: f64) -> f64 {
        self.float(key).unwrap_or(default)
    }

    fn required_float(&self, key: &str) -> Option<f64> {
        if !self.has(key) {
            self.raw(key);
            self.err(key, "missing required key");
            return None;
        }
        self.float(key)
    }

    fn positive(&self, key: &str, default: f64) -> f64 {
        let v = self.float_or(key, default);
        if !(v.is_finite() && v > 0.0) {
            self.err(key, format!("must be a positive number, got {v}"));
        }
        v
    }

    fn integer(&self, key: &str) -> Option<i64> {
        match self.raw(key)? {
            Value::Integer(v) => Some(*v),
            other => {
                self.err(key, format!("expected an integer, found {}", other.type_str()));
                None
            }
        }
    }

    fn count(&self, key: &str, default: usize, min: usize) -> usize {
        match self.integer(key) {
            Some(v) if v >= min as i64 => v as usize,
            Some(v) => {
                self.err(key, format!("must be at least {min}, got {v}"));
                default
            }
            None => default,
        }
    }

    fn string(&self, key: &str) -> Option<&'a str> {
        match self.raw(key)? {
            Value::String(s) => Some(s.as_str()),
            other => {
                self.err(key, format!("expected a string, found {}", other.type_str()));
                None
            }
        }
    }

    fn float_array(&self, key: &str) -> Option<Vec<f64>> {
        match self.raw(key)? {
            Value::Array(items) => {
                let mut out = Vec::with_capacity(items.len());
                for (i, item) in items.iter().enumerate() {
                    match item {
                        Value::Float(v) => out.push(*v),
                        Value::Integer(v) => out.push(*v as f64),
                        other => {
                            self.err(key, format!("entry {i}: expected a number, found {}", other.type_str()));
                            return None;
                        }
                    }
                }
                Some(out)
            }
            other => {
                self.err(key, format!("expected an array of numbers, found {}", other.type_str()));
                None
            }
        }
    }

    fn table(&self, key: &str) -> Option<&'a Table> {
        match self.raw(key)? {
            Value::Table(t) => Some(t),
            other => {
                self.err(key, format!("expected a table, found {}", other.type_str()));
                None
            }
        }
    }

    /// Reports every key that was never read.
    fn finish(self) {
        if let Some(t) = self.table {
            let used = self.used.borrow();
            for key in t.keys() {
                if !used.contains(key) {
                    self.errors.push(format!("{}: unknown key", self.key_path(key)));
                }
            }
        }
    }
}

fn core_error(section: &Section, key: &str, e: nlbreak_core::Error) {
    section.err(key, e);
}

/// Parses and validates a config. `mode` selects mode-specific rules (a
/// weight with `α ≤ 1` is accepted only for validation, which then reports it).
pub fn parse_config(text: &str, mode: Mode) -> Result<RunConfig, ConfigError> {
    let root: Table = text.parse::<Table>().map_err(|e| ConfigError {
        errors: vec![format!("syntax: {}", e.to_string().trim())],
    })?;
    let errors = Errors(RefCell::new(Vec::new()));
    let top = Section::new("", Some(&root), &errors);

    let file_mode = top.string("mode").and_then(|s| match Mode::parse(s) {
        Some(m) => Some(m),
        None => {
            top.err("mode", format!("unknown mode `{s}` (expected solve, mc, validate or sweep)"));
            None
        }
    });
    if let Some(m) = file_mode {
        if m != mode {
            top.err("mode", format!("config is for `{}` but the command is `{}`", m.name(), mode.name()));
        }
    }
    let seed = match top.integer("seed") {
        Some(v) if v >= 0 => v as u64,
        Some(v) => {
            top.err("seed", format!("must be non-negative, got {v}"));
            0
        }
        None => 0,
    };

    let grid = {
        let s = Section::new("grid", top.table("grid"), &errors);
        let g = GridParams {
            x_min: s.positive("x_min", 1e-3),
            n: s.positive("n", 10.0),
            cells: s.count("cells", 120, 1),
        };
        if g.x_min >= g.n {
            s.err("x_min", format!("must be below grid.n = {}, got {}", g.n, g.x_min));
        }
        s.finish();
        g
    };

    let kernel = parse_kernel(Section::new("kernel", top.table("kernel"), &errors), &grid);
    let daughter = parse_daughter(Section::new("daughter", top.table("daughter"), &errors), &grid);
    let weight = parse_weight(Section::new("weight", top.table("weight"), &errors), mode);
    let initial = parse_initial(Section::new("initial", top.table("initial"), &errors));
    let solver = parse_solver(Section::new("solver", top.table("solver"), &errors));
    let t_end = solver.as_ref().map_or(1.0, |s| s.t_end);
    let mc = parse_mc(Section::new("mc", top.table("mc"), &errors), t_end);
    let diagnostics = parse_diagnostics(Section::new("diagnostics", top.table("diagnostics"), &errors), &grid);
    let ell_values = {
        let s = Section::new("sweep", top.table("sweep"), &errors);
        let v = s.float_array("ell_values").unwrap_or_else(|| vec![0.25, 0.5, 1.0]);
        if v.is_empty() {
            s.err("ell_values", "must not be empty");
        }
        for (i, ell) in v.iter().enumerate() {
            if !(ell.is_finite() && *ell > 0.0) {
                s.err("ell_values", format!("entry {i} must be positive, got {ell}"));
            }
        }
        s.finish();
        v
    };
    top.finish();

    let errors = errors.0.into_inner();
    match (kernel, daughter, weight, initial, solver) {
        (Some(kernel), Some(daughter), Some(weight), Some(initial), Some(solver)) if errors.is_empty() => {
            Ok(RunConfig {
                mode: file_mode,
                seed,
                kernel,
                daughter,
                weight,
                initial,
                grid,
                solver,
                mc,
                diagnostics,
                ell_values,
            })
        }
        _ => Err(ConfigError {
            errors: if errors.is_empty() {
                vec!["configuration could not be completed".into()]
            } else {
                errors
            },
        }),
    }
}

fn parse_kernel(s: Section, grid: &GridParams) -> Option<KernelSpec> {
    let label = s.string("family").unwrap_or("I");
    let a0 = s.positive("a0", 1.0);
    let ell = s.positive("ell", 1.0);
    let n = s.float("n");
    if let Some(n) = n {
        if n != grid.n {
            s.err("n", format!("kernel.n = {n} must equal grid.n = {}", grid.n));
        }
    }
    let family = match label {
        "I" => Some(KernelFamily::PowerLaw),
        "II" => Some(KernelFamily::PowerLawShifted {
            beta: s.float_or("beta", 1.0),
        }),
        "III" => Some(KernelFamily::PowerLawExp {
            gamma: s.float_or("gamma", 1.0),
        }),
        "IV" => Some(KernelFamily::PowerLawLog {
            gamma: s.float_or("gamma", 1.0),
        }),
        "V" => Some(KernelFamily::StretchedExp {
            gamma: s.float_or("gamma", 1.0),
            nu: s.float_or("nu", 0.5),
        }),
        "VI" => Some(KernelFamily::RationalDamped {
            mu: s.float_or("mu", 0.5 * ell),
        }),
        "VII" => Some(KernelFamily::SaturatingExp),
        "VIII" => Some(KernelFamily::PiecewiseSplit {
            p: s.float_or("p", ell + 1.0),
        }),
        other => {
            s.err("family", format!("unknown kernel family `{other}` (expected I to VIII)"));
            None
        }
    };
    let a1 = s.float("a1");
    let spec = family.and_then(|f| match KernelSpec::new(f, a0, ell, Some(grid.n)) {
        Ok(k) => Some(k),
        Err(e) => {
            core_error(&s, "family", e);
            None
        }
    });
    let spec = match (spec, a1) {
        (Some(k), Some(a1)) => {
            if a1 < k.sharp_a1() {
                s.err("a1", format!("must be at least the sharp growth constant {}, got {a1}", k.sharp_a1()));
            }
            k.with_a1(a1).map_err(|e| core_error(&s, "a1", e)).ok()
        }
        (k, _) => k,
    };
    s.finish();
    spec
}

fn parse_daughter(s: Section, grid: &GridParams) -> Option<DaughterSpec> {
    let name = s.string("family").unwrap_or("uniform_binary");
    let family = match name {
        "uniform_binary" => Some(DaughterFamily::UniformBinary),
        "power_law" => Some(DaughterFamily::PowerLaw {
            nu: s.float_or("nu", 0.0),
        }),
        "kll_unit_ends" => Some(DaughterFamily::KllUnitEnds),
        "kll_shrinking_ends" => Some(DaughterFamily::KllShrinkingEnds),
        other => {
            s.err(
                "family",
                format!(
                    "unknown daughter family `{other}` (expected uniform_binary, power_law, kll_unit_ends or kll_shrinking_ends)"
                ),
            );
            None
        }
    };
    let p = s.float("p");
    let bp = s.float("bp");
    let beta0 = s.float("beta0");
    let mut spec = match family.map(DaughterSpec::new) {
        Some(Ok(d)) => d.with_size_bound(grid.n).map_err(|e| core_error(&s, "family", e)).ok(),
        Some(Err(e)) => {
            core_error(&s, "nu", e);
            None
        }
        None => None,
    };
    if let (Some(d), Some(p)) = (spec, p) {
        spec = d.with_p(p).map_err(|e| core_error(&s, "p", e)).ok();
    }
    if let (Some(d), Some(bp)) = (spec, bp) {
        spec = d.with_bp(bp).map_err(|e| core_error(&s, "bp", e)).ok();
    }
    if let (Some(d), Some(b)) = (spec, beta0) {
        spec = d.with_beta0(b).map_err(|e| core_error(&s, "beta0", e)).ok();
    }
    s.finish();
    spec
}

fn parse_weight(s: Section, mode: Mode) -> Option<WeightFamily> {
    let name = s.string("family").unwrap_or("power");
    let alpha = s.float_or("alpha", 2.0);
    let family = match name {
        "power" => Some(WeightFamily::Power { alpha }),
        "power_shifted" => Some(WeightFamily::PowerShifted {
            alpha,
            beta: s.float_or("beta", 1.0),
        }),
        "power_exp" => Some(WeightFamily::PowerExp {
            alpha,
            lambda: s.float_or("lambda", 1.0),
        }),
        "power_log" => Some(WeightFamily::PowerLog {
            alpha,
            gamma: s.float_or("gamma", 1.0),
        }),
        other => {
            s.err(
                "family",
                format!("unknown weight family `{other}` (expected power, power_shifted, power_exp or power_log)"),
            );
            None
        }
    };
    let family = family.and_then(|f| match f.validate() {
        Ok(()) => Some(f),
        // validation reports inadmissible candidates instead of refusing them
        Err(_) if mode == Mode::Validate && alpha.is_finite() => Some(f),
        Err(nlbreak_core::Error::InvalidParameter { name, reason }) => {
            s.err(name, reason);
            None
        }
        Err(e) => {
            core_error(&s, "family", e);
            None
        }
    });
    s.finish();
    family
}

fn parse_initial(s: Section) -> Option<InitialDensity> {
    let name = s.string("family").unwrap_or("exponential");
    let f = match name {
        "exponential" => Some(InitialDensity::Exponential {
            amplitude: s.float_or("amplitude", 1.0),
            rate: s.float_or("rate", 1.0),
        }),
        "indicator" => {
            let lo = s.required_float("lo");
            let hi = s.required_float("hi");
            let height = s.float_or("height", 1.0);
            match (lo, hi) {
                (Some(lo), Some(hi)) => Some(InitialDensity::Indicator { lo, hi, height }),
                _ => None,
            }
        }
        "zero" => Some(InitialDensity::Zero),
        other => {
            s.err("family", format!("unknown initial density `{other}` (expected exponential, indicator or zero)"));
            None
        }
    };
    let f = f.and_then(|f| match f.validate() {
        Ok(()) => Some(f),
        Err(e) => {
            core_error(&s, "family", e);
            None
        }
    });
    s.finish();
    f
}

fn parse_solver(s: Section) -> Option<SolverConfig> {
    let t_end = s.float_or("t_end", 1.0);
    let mut cfg = SolverConfig::new(t_end);
    cfg.dt_init = s.float_or("dt_init", cfg.dt_init);
    cfg.dt_min = s.float_or("dt_min", cfg.dt_min);
    cfg.dt_max = s.float_or("dt_max", cfg.dt_max);
    cfg.rel_tol = s.float_or("rel_tol", cfg.rel_tol);
    cfg.abs_tol = s.float_or("abs_tol", cfg.abs_tol);
    cfg.clip_tol = s.float("clip_tol");
    let explicit = s.float_array("checkpoints");
    let count = s.count("checkpoint_count", 100, 1);
    if explicit.is_some() && s.has("checkpoint_count") {
        s.err("checkpoints", "give either checkpoints or checkpoint_count, not both");
    }
    cfg.checkpoint_times = explicit.unwrap_or_else(|| uniform_checkpoints(t_end, count));
    let ok = match cfg.validate() {
        Ok(()) => true,
        Err(nlbreak_core::Error::InvalidParameter { name, reason }) => {
            s.err(name, reason);
            false
        }
        Err(e) => {
            core_error(&s, "t_end", e);
            false
        }
    };
    s.finish();
    ok.then_some(cfg)
}

fn parse_mc(s: Section, solver_t_end: f64) -> McParams {
    let t_end = s.float_or("t_end", solver_t_end);
    if !(t_end.is_finite() && t_end >= 0.0) {
        s.err("t_end", format!("must be >= 0, got {t_end}"));
    }
    let count = s.count("checkpoint_count", 10, 1);
    let explicit = s.float_array("checkpoints");
    if explicit.is_some() && s.has("checkpoint_count") {
        s.err("checkpoints", "give either checkpoints or checkpoint_count, not both");
    }
    let checkpoints = explicit.unwrap_or_else(|| {
        let mut v = vec![0.0];
        v.extend(uniform_checkpoints(t_end, count));
        v
    });
    let normalization = match s.string("normalization").unwrap_or("mass") {
        "mass" => VolumeNormalization::Mass,
        "number" => VolumeNormalization::Number,
        other => {
            s.err("normalization", format!("expected `mass` or `number`, got `{other}`"));
            VolumeNormalization::Mass
        }
    };
    let max_events = match s.integer("max_events") {
        Some(v) if v > 0 => v as u64,
        Some(v) => {
            s.err("max_events", format!("must be positive, got {v}"));
            1
        }
        None => 100_000_000,
    };
    let p = McParams {
        particles: s.count("particles", 10_000, 2),
        replicas: s.count("replicas", 25, 1),
        t_end,
        checkpoints,
        max_events,
        normalization,
    };
    s.finish();
    p
}

fn parse_diagnostics(s: Section, grid: &GridParams) -> DiagnosticsParams {
    let d = DiagnosticsParams::default();
    let out = DiagnosticsParams {
        mass_tol: s.positive("mass_tol", d.mass_tol),
        m0_law_rel_tol: s.positive("m0_law_rel_tol", d.m0_law_rel_tol),
        m0_law_from: s.float_or("m0_law_from", d.m0_law_from),
        m_cut: s.float_or("m_cut", d.m_cut),
        envelope_horizon: s.positive("envelope_horizon", d.envelope_horizon),
        convexity_tol: s.float_or("convexity_tol", d.convexity_tol),
        weak_form_identity_tol: s.positive("weak_form_identity_tol", d.weak_form_identity_tol),
        weak_form_constant_tol: s.positive("weak_form_constant_tol", d.weak_form_constant_tol),
        weak_form_indicator_tol: s.positive("weak_form_indicator_tol", d.weak_form_indicator_tol),
        ui_a_cut: s.positive("ui_a_cut", d.ui_a_cut),
        ui_p: s.float_or("ui_p", d.ui_p),
        ui_deltas: s.float_array("ui_deltas").unwrap_or(d.ui_deltas),
    };
    if !(out.m_cut > 1.0 && out.m_cut < grid.n) {
        s.err("m_cut", format!("must lie in (1, grid.n = {}), got {}", grid.n, out.m_cut));
    }
    if !(out.ui_p > 1.0 && out.ui_p < 2.0) {
        s.err("ui_p", format!("must lie in (1, 2), got {}", out.ui_p));
    }
    if out.envelope_horizon > 1.0 {
        s.err("envelope_horizon", "must not exceed 1 (fraction of the blow-up time)");
    }
    if out.ui_deltas.iter().any(|d| !(*d > 0.0)) {
        s.err("ui_deltas", "entries must be positive");
    }
    s.finish();
    out
}
