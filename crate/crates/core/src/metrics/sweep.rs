use std::fmt::Write as _;
use std::path::Path;

use super::{loss_error, LossSeries};
use crate::config::RunConfig;
use crate::error::{Error, Result};

/// Anything that turns a configuration into a loss history.
pub trait LossSolver {
    fn losses(&self, config: &RunConfig) -> Result<LossSeries>;
}

impl<F: Fn(&RunConfig) -> Result<LossSeries>> LossSolver for F {
    fn losses(&self, config: &RunConfig) -> Result<LossSeries> {
        self(config)
    }
}

#[derive(Debug)]
pub struct SweepRow {
    pub frequency: f64,
    pub err_p: Result<f64>,
}

/// Runs both solvers at every frequency. A failed run marks its row and the
/// sweep carries on.
pub fn frequency_sweep(
    config: &RunConfig,
    freqs: &[f64],
    multiscale: &dyn LossSolver,
    reference: &dyn LossSolver,
) -> Vec<SweepRow> {
    freqs
        .iter()
        .map(|&f| {
            let mut c = config.clone();
            c.source.frequency = f;
            let err_p = c
                .validate()
                .and_then(|_| Ok((multiscale.losses(&c)?, reference.losses(&c)?)))
                .and_then(|(ms, r)| loss_error(&ms, &r));
            if let Err(e) = &err_p {
                log::warn!("sweep row f = {f} Hz failed: {e}");
            }
            SweepRow { frequency: f, err_p }
        })
        .collect()
}

/// True when every successful row is at least the previous successful one.
pub fn is_nondecreasing(rows: &[SweepRow]) -> bool {
    let ok: Vec<f64> = rows.iter().filter_map(|r| r.err_p.as_ref().ok().copied()).collect();
    ok.windows(2).all(|w| w[1] >= w[0])
}

/// `f_hz,err_p,status`; failed rows carry `NaN` and the error message.
pub fn format_sweep(rows: &[SweepRow]) -> String {
    let mut s = String::from("f_hz,err_p,status\n");
    for r in rows {
        match &r.err_p {
            Ok(e) => writeln!(s, "{:e},{e:e},ok", r.frequency),
            Err(err) => writeln!(s, "{:e},NaN,\"failed: {}\"", r.frequency, err.to_string().replace('"', "'")),
        }
        .expect("write to string");
    }
    s
}

pub fn write_sweep(rows: &[SweepRow], path: &Path) -> Result<()> {
    std::fs::write(path, format_sweep(rows)).map_err(|e| Error::io(path, e))
}
