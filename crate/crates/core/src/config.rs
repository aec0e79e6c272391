//! Run configuration: a flat `key = value` format grouped in `[sections]`.
//!
//! ```text
//! [material]
//! law = exponential
//! [source]
//! js0_a_per_m2 = 35e7
//! frequency_hz = 50
//! ```
//!
//! Numbers may carry an SI unit suffix (`100e-6 m`); anything else
//! (`100 um`) is rejected.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::materials::{ExpLawParams, JilesAthertonParams, MagneticLaw, MaterialMap, SIGMA_GRAIN};
use crate::mesh::{GrainShape, SmcGeometry};

const SI_UNITS: &[&str] = &["m", "s", "Hz", "T", "A/m", "A/m2", "A/m^2", "S/m", "1/T2", "1/T^2", "W/m"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    Multiscale,
    Reference,
    Static,
}

impl RunMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RunMode::Multiscale => "multiscale",
            RunMode::Reference => "reference",
            RunMode::Static => "static",
        }
    }
}

impl std::str::FromStr for RunMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "multiscale" => Ok(RunMode::Multiscale),
            "reference" => Ok(RunMode::Reference),
            "static" => Ok(RunMode::Static),
            _ => Err(format!("unknown mode `{s}` (expected multiscale, reference or static)")),
        }
    }
}

/// How the macroscale conduction term is set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MacroSigmaMode {
    /// No macroscale conduction (isolated grains carry no net current).
    Zero,
    /// `σ_M = <σ>_Y`.
    Computed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaterialConfig {
    pub law: MagneticLaw,
    /// Grain conductivity (S/m).
    pub sigma: f64,
}

impl MaterialConfig {
    pub fn map(&self) -> MaterialMap {
        MaterialMap::new(self.law.clone(), self.sigma)
    }
}

/// `j_s(t) = j_s0 sin(2π f t)`, positive in the top inductor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceConfig {
    pub js0: f64,
    pub frequency: f64,
    /// Flips the waveform sign.
    pub negate: bool,
}

impl SourceConfig {
    pub fn shape(&self, t: f64) -> f64 {
        let s = (2.0 * std::f64::consts::PI * self.frequency * t).sin();
        if self.negate {
            -s
        } else {
            s
        }
    }

    pub fn current_density(&self, t: f64) -> f64 {
        self.js0 * self.shape(t)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Discretization {
    /// Macro grid divisions per half SMC side.
    pub macro_divisions: usize,
    pub cell_refine: usize,
    pub reference_refine: usize,
    pub steps_per_period: usize,
    /// Simulated horizon in periods.
    pub periods: f64,
    pub macro_tol: f64,
    pub macro_max_iter: usize,
    pub cell_tol: f64,
    pub cell_max_iter: usize,
    pub macro_sigma_mode: MacroSigmaMode,
    /// Cell problems per macro triangle (1 or 3).
    pub macro_gauss_points: usize,
    pub reference_grain_constants: bool,
    pub reference_tol: f64,
    pub reference_max_iter: usize,
}

impl Default for Discretization {
    fn default() -> Self {
        Self {
            macro_divisions: 4,
            cell_refine: 2,
            reference_refine: 1,
            steps_per_period: 40,
            periods: 1.5,
            macro_tol: 1e-6,
            macro_max_iter: 25,
            cell_tol: 1e-8,
            cell_max_iter: 30,
            macro_sigma_mode: MacroSigmaMode::Zero,
            macro_gauss_points: 3,
            reference_grain_constants: true,
            reference_tol: 1e-8,
            reference_max_iter: 25,
        }
    }
}

impl Discretization {
    pub fn n_steps(&self) -> usize {
        (self.steps_per_period as f64 * self.periods).round().max(1.0) as usize
    }
}

/// Uniform implicit-Euler grid starting at `t = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub dt: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub dump_fields: bool,
    pub probes: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub geometry: SmcGeometry,
    pub material: MaterialConfig,
    pub source: SourceConfig,
    pub discretization: Discretization,
    pub output: OutputConfig,
    pub mode: RunMode,
    /// Worker threads; 0 uses all cores.
    pub threads: usize,
}

impl RunConfig {
    /// Desk-scale benchmark with the exponential law at 50 Hz.
    pub fn desk() -> Self {
        Self {
            geometry: SmcGeometry::desk(),
            material: MaterialConfig {
                law: MagneticLaw::Exponential(ExpLawParams::benchmark()),
                sigma: SIGMA_GRAIN,
            },
            source: SourceConfig {
                js0: 35e7,
                frequency: 50.0,
                negate: false,
            },
            discretization: Discretization::default(),
            output: OutputConfig {
                dir: PathBuf::from("out"),
                dump_fields: false,
                probes: vec![[50e-6, 50e-6], [350e-6, 350e-6]],
            },
            mode: RunMode::Multiscale,
            threads: 0,
        }
    }

    pub fn time_grid(&self) -> TimeGrid {
        TimeGrid {
            dt: 1.0 / (self.source.frequency * self.discretization.steps_per_period as f64),
            n_steps: self.discretization.n_steps(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        match &self.material.law {
            MagneticLaw::Linear { nu } if !(*nu > 0.0) => {
                return Err(Error::config(None, "linear_nu must be positive"));
            }
            MagneticLaw::Exponential(p) => p.validate()?,
            MagneticLaw::JilesAtherton(p) => p.validate()?,
            _ => {}
        }
        let d = &self.discretization;
        let checks = [
            (self.material.sigma >= 0.0, "sigma_grain_s_per_m must be non-negative"),
            (self.source.frequency > 0.0, "frequency_hz must be positive"),
            (self.source.js0.is_finite(), "js0_a_per_m2 must be finite"),
            (d.macro_divisions > 0, "macro_divisions must be positive"),
            (d.cell_refine > 0, "cell_refine must be positive"),
            (d.reference_refine > 0, "reference_refine must be positive"),
            (d.steps_per_period > 0, "steps_per_period must be positive"),
            (d.periods > 0.0, "periods must be positive"),
            (d.macro_tol > 0.0 && d.cell_tol > 0.0 && d.reference_tol > 0.0, "tolerances must be positive"),
            (matches!(d.macro_gauss_points, 1 | 3), "macro_gauss_points must be 1 or 3"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::config(None, msg));
            }
        }
        Ok(())
    }

    /// Full echo in the input format; parsing it back gives the same config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let g = &self.geometry;
        let d = &self.discretization;
        let _ = writeln!(s, "# mqs-hmm run configuration (all defaults expanded)");
        let _ = writeln!(s, "# P1 triangles, 3-point degree-2 quadrature for mass and loss terms");
        let _ = writeln!(s, "# vector Jiles-Atherton: isotropic, b-driven inversion on the effective field");
        let _ = writeln!(s, "# cell tangent: forward differences, delta_b = max(1e-4 T, 1e-4 |b_M|)");
        let _ = writeln!(s, "# losses per metre of depth over the full cross-section");
        let _ = writeln!(s, "\n[geometry]");
        let _ = writeln!(s, "smc_side_m = {:e}", g.smc_side);
        let _ = writeln!(s, "grains_per_side = {}", g.grains_per_side);
        let _ = writeln!(s, "grain_size_m = {:e}", g.grain_size);
        let _ = writeln!(s, "grain_shape = square");
        let _ = writeln!(s, "inductor_thickness_m = {:e}", g.inductor_thickness);
        let _ = writeln!(s, "inductor_gap_m = {:e}", g.inductor_gap);
        let _ = writeln!(s, "air_margin_m = {:e}", g.air_margin);
        let _ = writeln!(s, "quarter_symmetry = {}", g.quarter_symmetry);
        let _ = writeln!(s, "\n[material]");
        match &self.material.law {
            MagneticLaw::Linear { nu } => {
                let _ = writeln!(s, "law = linear");
                let _ = writeln!(s, "linear_nu = {nu:e}");
            }
            MagneticLaw::Exponential(p) => {
                let _ = writeln!(s, "law = exponential");
                let _ = writeln!(s, "exp_alpha = {:e}", p.alpha);
                let _ = writeln!(s, "exp_beta = {:e}", p.beta);
                let _ = writeln!(s, "exp_gamma = {:e}", p.gamma);
            }
            MagneticLaw::JilesAtherton(p) => {
                let _ = writeln!(s, "law = jiles_atherton");
                let _ = writeln!(s, "ja_ms = {:e}", p.ms);
                let _ = writeln!(s, "ja_a = {:e}", p.a);
                let _ = writeln!(s, "ja_k = {:e}", p.k);
                let _ = writeln!(s, "ja_c = {:e}", p.c);
                let _ = writeln!(s, "ja_alpha = {:e}", p.alpha);
            }
        }
        let _ = writeln!(s, "sigma_grain_s_per_m = {:e}", self.material.sigma);
        let _ = writeln!(s, "\n[source]");
        let _ = writeln!(s, "js0_a_per_m2 = {:e}", self.source.js0);
        let _ = writeln!(s, "frequency_hz = {:e}", self.source.frequency);
        let _ = writeln!(s, "negate = {}", self.source.negate);
        let _ = writeln!(s, "\n[discretization]");
        let _ = writeln!(s, "macro_divisions = {}", d.macro_divisions);
        let _ = writeln!(s, "cell_refine = {}", d.cell_refine);
        let _ = writeln!(s, "reference_refine = {}", d.reference_refine);
        let _ = writeln!(s, "steps_per_period = {}", d.steps_per_period);
        let _ = writeln!(s, "periods = {:e}", d.periods);
        let _ = writeln!(s, "macro_tol = {:e}", d.macro_tol);
        let _ = writeln!(s, "macro_max_iter = {}", d.macro_max_iter);
        let _ = writeln!(s, "cell_tol = {:e}", d.cell_tol);
        let _ = writeln!(s, "cell_max_iter = {}", d.cell_max_iter);
        let mode = match d.macro_sigma_mode {
            MacroSigmaMode::Zero => "zero",
            MacroSigmaMode::Computed => "computed",
        };
        let _ = writeln!(s, "macro_sigma_mode = {mode}");
        let _ = writeln!(s, "macro_gauss_points = {}", d.macro_gauss_points);
        let _ = writeln!(s, "reference_grain_constants = {}", d.reference_grain_constants);
        let _ = writeln!(s, "reference_tol = {:e}", d.reference_tol);
        let _ = writeln!(s, "reference_max_iter = {}", d.reference_max_iter);
        let _ = writeln!(s, "\n[output]");
        let _ = writeln!(s, "dir = {}", self.output.dir.display());
        let _ = writeln!(s, "dump_fields = {}", self.output.dump_fields);
        let probes: Vec<String> = self.output.probes.iter().map(|p| format!("{:e} {:e}", p[0], p[1])).collect();
        let _ = writeln!(s, "probes = {}", probes.join("; "));
        let _ = writeln!(s, "\n[run]");
        let _ = writeln!(s, "mode = {}", self.mode.as_str());
        let _ = writeln!(s, "threads = {}", self.threads);
        s
    }
}

struct Entry {
    value: String,
    line: usize,
}

type Sections = BTreeMap<String, BTreeMap<String, Entry>>;

const KEYS: &[(&str, &[&str])] = &[
    (
        "geometry",
        &[
            "smc_side_m",
            "grains_per_side",
            "grain_size_m",
            "grain_shape",
            "inductor_thickness_m",
            "inductor_gap_m",
            "air_margin_m",
            "quarter_symmetry",
        ],
    ),
    (
        "material",
        &[
            "law",
            "linear_nu",
            "exp_alpha",
            "exp_beta",
            "exp_gamma",
            "ja_ms",
            "ja_a",
            "ja_k",
            "ja_c",
            "ja_alpha",
            "sigma_grain_s_per_m",
        ],
    ),
    ("source", &["js0_a_per_m2", "frequency_hz", "negate"]),
    (
        "discretization",
        &[
            "macro_divisions",
            "cell_refine",
            "reference_refine",
            "steps_per_period",
            "periods",
            "macro_tol",
            "macro_max_iter",
            "cell_tol",
            "cell_max_iter",
            "macro_sigma_mode",
            "macro_gauss_points",
            "reference_grain_constants",
            "reference_tol",
            "reference_max_iter",
        ],
    ),
    ("output", &["dir", "dump_fields", "probes"]),
    ("run", &["mode", "threads"]),
];

const REQUIRED: &[(&str, &str)] = &[
    ("material", "law"),
    ("source", "js0_a_per_m2"),
    ("source", "frequency_hz"),
];

fn split_sections(text: &str) -> Result<Sections> {
    let mut out: Sections = BTreeMap::new();
    let mut current: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            let name = name.trim();
            let known = KEYS.iter().any(|(s, _)| *s == name);
            if !known {
                return Err(Error::config(line, format!("unknown section [{name}]")));
            }
            out.entry(name.to_string()).or_default();
            current = Some(name.to_string());
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(Error::config(line, format!("expected `key = value`, got `{content}`")));
        };
        let (key, value) = (key.trim(), value.trim());
        let Some(section) = &current else {
            return Err(Error::config(line, format!("key `{key}` outside a section")));
        };
        let allowed = KEYS.iter().find(|(s, _)| s == section).map(|(_, k)| *k).unwrap_or(&[]);
        if !allowed.contains(&key) {
            return Err(Error::config(line, format!("unknown key `{key}` in [{section}]")));
        }
        let sec = out.entry(section.clone()).or_default();
        if let Some(prev) = sec.get(key) {
            return Err(Error::config(
                line,
                format!("duplicate key `{key}` in [{section}] (first set at line {})", prev.line),
            ));
        }
        sec.insert(
            key.to_string(),
            Entry {
                value: value.to_string(),
                line,
            },
        );
    }
    for (section, key) in REQUIRED {
        if !out.get(*section).is_some_and(|s| s.contains_key(*key)) {
            return Err(Error::config(None, format!("missing required key `{key}` in [{section}]")));
        }
    }
    Ok(out)
}

struct Reader<'a> {
    sections: &'a Sections,
}

impl Reader<'_> {
    fn get(&self, section: &str, key: &str) -> Option<&Entry> {
        self.sections.get(section).and_then(|s| s.get(key))
    }

    fn f64(&self, section: &str, key: &str, default: f64) -> Result<f64> {
        let Some(e) = self.get(section, key) else { return Ok(default) };
        parse_number(&e.value).map_err(|m| Error::config(e.line, format!("`{key}`: {m}")))
    }

    fn usize(&self, section: &str, key: &str, default: usize) -> Result<usize> {
        let Some(e) = self.get(section, key) else { return Ok(default) };
        e.value
            .parse()
            .map_err(|_| Error::config(e.line, format!("`{key}`: expected a non-negative integer, got `{}`", e.value)))
    }

    fn bool(&self, section: &str, key: &str, default: bool) -> Result<bool> {
        let Some(e) = self.get(section, key) else { return Ok(default) };
        match e.value.as_str() {
            "true" => Ok(true),
            "false" => Ok(false),
            v => Err(Error::config(e.line, format!("`{key}`: expected true or false, got `{v}`"))),
        }
    }

    fn str(&self, section: &str, key: &str) -> Option<(&str, usize)> {
        self.get(section, key).map(|e| (e.value.as_str(), e.line))
    }
}

fn parse_number(s: &str) -> std::result::Result<f64, String> {
    let split = s
        .char_indices()
        .find(|&(i, c)| c.is_ascii_alphabetic() && !is_exponent(s, i))
        .map_or(s.len(), |(i, _)| i);
    let (num, unit) = (s[..split].trim(), s[split..].trim());
    if !unit.is_empty() && !SI_UNITS.contains(&unit) {
        return Err(format!("non-SI unit suffix `{unit}`"));
    }
    let v: f64 = num.parse().map_err(|_| format!("cannot parse number `{num}`"))?;
    if !v.is_finite() {
        return Err(format!("non-finite value `{num}`"));
    }
    Ok(v)
}

/// `e`/`E` inside a float literal such as `1e-6`.
fn is_exponent(s: &str, i: usize) -> bool {
    let b = s.as_bytes();
    matches!(b[i], b'e' | b'E')
        && i > 0
        && (b[i - 1].is_ascii_digit() || b[i - 1] == b'.')
        && b.get(i + 1).is_some_and(|c| c.is_ascii_digit() || *c == b'-' || *c == b'+')
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let sections = split_sections(text)?;
    let r = Reader { sections: &sections };
    let base = RunConfig::desk();

    let g0 = &base.geometry;
    if let Some((v, line)) = r.str("geometry", "grain_shape") {
        if v != "square" {
            return Err(Error::config(line, format!("unsupported grain_shape `{v}`")));
        }
    }
    let geometry = SmcGeometry {
        smc_side: r.f64("geometry", "smc_side_m", g0.smc_side)?,
        grains_per_side: r.usize("geometry", "grains_per_side", g0.grains_per_side)?,
        grain_size: r.f64("geometry", "grain_size_m", g0.grain_size)?,
        inductor_thickness: r.f64("geometry", "inductor_thickness_m", g0.inductor_thickness)?,
        inductor_gap: r.f64("geometry", "inductor_gap_m", g0.inductor_gap)?,
        air_margin: r.f64("geometry", "air_margin_m", g0.air_margin)?,
        grain_shape: GrainShape::Square,
        quarter_symmetry: r.bool("geometry", "quarter_symmetry", g0.quarter_symmetry)?,
    };

    let (law_name, law_line) = r.str("material", "law").expect("required");
    let law = match law_name {
        "linear" => MagneticLaw::Linear {
            nu: r.f64("material", "linear_nu", 1000.0)?,
        },
        "exponential" => {
            let p = ExpLawParams::benchmark();
            MagneticLaw::Exponential(ExpLawParams {
                alpha: r.f64("material", "exp_alpha", p.alpha)?,
                beta: r.f64("material", "exp_beta", p.beta)?,
                gamma: r.f64("material", "exp_gamma", p.gamma)?,
            })
        }
        "jiles_atherton" => {
            let p = JilesAthertonParams::benchmark();
            MagneticLaw::JilesAtherton(JilesAthertonParams {
                ms: r.f64("material", "ja_ms", p.ms)?,
                a: r.f64("material", "ja_a", p.a)?,
                k: r.f64("material", "ja_k", p.k)?,
                c: r.f64("material", "ja_c", p.c)?,
                alpha: r.f64("material", "ja_alpha", p.alpha)?,
            })
        }
        other => {
            return Err(Error::config(
                law_line,
                format!("unknown law `{other}` (expected linear, exponential or jiles_atherton)"),
            ))
        }
    };
    let material = MaterialConfig {
        law,
        sigma: r.f64("material", "sigma_grain_s_per_m", SIGMA_GRAIN)?,
    };
    let source = SourceConfig {
        js0: r.f64("source", "js0_a_per_m2", 0.0)?,
        frequency: r.f64("source", "frequency_hz", 0.0)?,
        negate: r.bool("source", "negate", false)?,
    };

    let d0 = Discretization::default();
    let sigma_mode = match r.str("discretization", "macro_sigma_mode") {
        None | Some(("zero", _)) => MacroSigmaMode::Zero,
        Some(("computed", _)) => MacroSigmaMode::Computed,
        Some((v, line)) => {
            return Err(Error::config(line, format!("macro_sigma_mode must be zero or computed, got `{v}`")))
        }
    };
    let discretization = Discretization {
        macro_divisions: r.usize("discretization", "macro_divisions", d0.macro_divisions)?,
        cell_refine: r.usize("discretization", "cell_refine", d0.cell_refine)?,
        reference_refine: r.usize("discretization", "reference_refine", d0.reference_refine)?,
        steps_per_period: r.usize("discretization", "steps_per_period", d0.steps_per_period)?,
        periods: r.f64("discretization", "periods", d0.periods)?,
        macro_tol: r.f64("discretization", "macro_tol", d0.macro_tol)?,
        macro_max_iter: r.usize("discretization", "macro_max_iter", d0.macro_max_iter)?,
        cell_tol: r.f64("discretization", "cell_tol", d0.cell_tol)?,
        cell_max_iter: r.usize("discretization", "cell_max_iter", d0.cell_max_iter)?,
        macro_sigma_mode: sigma_mode,
        macro_gauss_points: r.usize("discretization", "macro_gauss_points", d0.macro_gauss_points)?,
        reference_grain_constants: r.bool(
            "discretization",
            "reference_grain_constants",
            d0.reference_grain_constants,
        )?,
        reference_tol: r.f64("discretization", "reference_tol", d0.reference_tol)?,
        reference_max_iter: r.usize("discretization", "reference_max_iter", d0.reference_max_iter)?,
    };

    let mut probes = base.output.probes.clone();
    if let Some((v, line)) = r.str("output", "probes") {
        probes.clear();
        for item in v.split(';').map(str::trim).filter(|s| !s.is_empty()) {
            let parts: Vec<&str> = item.split_whitespace().collect();
            if parts.len() != 2 {
                return Err(Error::config(line, format!("probe `{item}` must be `x y`")));
            }
            let x = parse_number(parts[0]).map_err(|m| Error::config(line, m))?;
            let y = parse_number(parts[1]).map_err(|m| Error::config(line, m))?;
            probes.push([x, y]);
        }
    }
    let output = OutputConfig {
        dir: r.str("output", "dir").map_or(base.output.dir.clone(), |(v, _)| PathBuf::from(v)),
        dump_fields: r.bool("output", "dump_fields", false)?,
        probes,
    };
    let mode = match r.str("run", "mode") {
        None => RunMode::Multiscale,
        Some((v, line)) => v.parse().map_err(|m: String| Error::config(line, m))?,
    };
    let cfg = RunConfig {
        geometry,
        material,
        source,
        discretization,
        output,
        mode,
        threads: r.usize("run", "threads", 0)?,
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn read_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}
