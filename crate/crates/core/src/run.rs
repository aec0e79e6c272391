//! Time loops of the three run modes and the files they write.

use std::fmt::Write as _;
use std::path::Path;

use crate::cell::CellMode;
use crate::config::{RunConfig, RunMode};
use crate::error::{Error, Result};
use crate::macro_solver::{MacroSolver, StepReport};
use crate::metrics::{write_fields, write_losses, write_probe_series, FieldRow, LossSeries, ProbeSeries};
use crate::reference::ReferenceSolver;

/// Everything a run records, one entry per accepted step.
#[derive(Debug, Clone, Default)]
pub struct RunOutput {
    pub losses: LossSeries,
    pub probes: Vec<ProbeSeries>,
    /// Empty unless field dumps are requested.
    pub fields: Vec<FieldRow>,
    pub steps: Vec<StepReport>,
    pub warnings: Vec<String>,
}

impl RunOutput {
    fn new(probes: &[[f64; 2]]) -> Self {
        Self {
            probes: probes
                .iter()
                .map(|&point| ProbeSeries {
                    point,
                    ..Default::default()
                })
                .collect(),
            ..Default::default()
        }
    }

    pub fn log(&self) -> String {
        let mut s = String::new();
        for w in &self.warnings {
            let _ = writeln!(s, "warning: {w}");
        }
        for r in &self.steps {
            let _ = writeln!(s, "{}", r.log_line());
        }
        s
    }

    /// Writes `losses.csv`, `probes.csv`, `run.log`, `metadata.txt` and, if
    /// recorded, `fields.csv` into `dir`.
    pub fn write(&self, config: &RunConfig, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let meta = dir.join("metadata.txt");
        std::fs::write(&meta, config.to_text()).map_err(|e| Error::io(&meta, e))?;
        write_losses(&self.losses, &dir.join("losses.csv"))?;
        write_probe_series(&self.probes, &dir.join("probes.csv"))?;
        if config.output.dump_fields {
            write_fields(&self.fields, &dir.join("fields.csv"))?;
        }
        let log = dir.join("run.log");
        std::fs::write(&log, self.log()).map_err(|e| Error::io(&log, e))
    }
}

fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Solver {
            message: format!("cannot start worker threads: {e}"),
            null_dof: None,
        })?;
    pool.install(f)
}

fn march_macro(config: &RunConfig, mode: CellMode) -> Result<RunOutput> {
    let mut solver = MacroSolver::new(config, mode)?;
    let grid = config.time_grid();
    let mut out = RunOutput::new(&config.output.probes);
    for k in 1..=grid.n_steps {
        let rep = solver.step(grid.dt)?;
        log::debug!("{}", rep.log_line());
        out.losses.push(solver.time(), rep.loss);
        for s in &mut out.probes {
            let (b, b_macro) = solver.probe(s.point)?;
            s.t.push(solver.time());
            s.b.push(b);
            s.b_macro.push(b_macro);
        }
        if config.output.dump_fields {
            out.fields.extend(solver.fields(k));
        }
        out.steps.push(rep);
    }
    Ok(out)
}

/// Implicit-Euler FE-HMM run over the configured horizon.
pub fn run_dynamic(config: &RunConfig) -> Result<RunOutput> {
    with_pool(config.threads, || march_macro(config, CellMode::Dynamic))
}

/// Sequence of magnetostatic FE-HMM solves at the configured sample times;
/// only the material history links them.
pub fn run_static(config: &RunConfig) -> Result<RunOutput> {
    with_pool(config.threads, || march_macro(config, CellMode::Static))
}

/// Fullscale run with every grain resolved.
pub fn run_reference(config: &RunConfig) -> Result<RunOutput> {
    with_pool(config.threads, || {
        let mut solver = ReferenceSolver::new(config)?;
        let grid = config.time_grid();
        let mut out = RunOutput::new(&config.output.probes);
        out.warnings = solver.resolution_warnings_at(config.source.frequency);
        for k in 1..=grid.n_steps {
            let rep = solver.step(grid.dt)?;
            log::debug!("{}", rep.log_line());
            out.losses.push(solver.time(), rep.loss);
            for s in &mut out.probes {
                let b = solver.probe(s.point)?;
                s.t.push(solver.time());
                s.b.push(b);
                s.b_macro.push(b);
            }
            if config.output.dump_fields {
                out.fields.extend(solver.fields(k));
            }
            out.steps.push(rep);
        }
        Ok(out)
    })
}

/// Dispatches on `config.mode`.
pub fn run(config: &RunConfig) -> Result<RunOutput> {
    match config.mode {
        RunMode::Multiscale => run_dynamic(config),
        RunMode::Reference => run_reference(config),
        RunMode::Static => run_static(config),
    }
}
