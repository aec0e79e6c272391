use std::path::{Path, PathBuf};
use std::time::Instant;

use mqs_hmm::config::{read_config, RunConfig, RunMode};
use mqs_hmm::metrics::{
    field_error, frequency_sweep, is_nondecreasing, loss_error, read_losses, read_probe_points, read_probe_series,
    write_sweep, LossSeries, ProbeSeries,
};
use mqs_hmm::run::run as run_config;
use mqs_hmm::{Error, Result};

fn load(path: &Path, threads: Option<usize>, out: Option<PathBuf>) -> Result<RunConfig> {
    let mut config = read_config(path)?;
    if let Some(n) = threads {
        config.threads = n;
    }
    if let Some(dir) = out {
        config.output.dir = dir;
    }
    Ok(config)
}

pub fn run(path: &Path, mode: Option<RunMode>, threads: Option<usize>, out: Option<PathBuf>) -> Result<()> {
    let mut config = load(path, threads, out)?;
    if let Some(m) = mode {
        config.mode = m;
    }
    config.validate()?;
    let start = Instant::now();
    let output = run_config(&config)?;
    output.write(&config, &config.output.dir)?;
    for w in &output.warnings {
        eprintln!("warning: {w}");
    }
    let p_max = output.losses.p.iter().copied().fold(0.0, f64::max);
    let iters: usize = output.steps.iter().map(|s| s.iterations).sum();
    println!(
        "{} run: {} steps, {} Newton iterations, max loss {p_max:e} W/m, {:.1} s -> {}",
        config.mode.as_str(),
        output.steps.len(),
        iters,
        start.elapsed().as_secs_f64(),
        config.output.dir.display()
    );
    Ok(())
}

pub fn sweep(path: &Path, freqs: &[f64], threads: Option<usize>, out: Option<PathBuf>) -> Result<()> {
    let config = load(path, threads, out)?;
    let dir = config.output.dir.clone();
    let solve = |mode: RunMode| {
        let dir = dir.clone();
        move |c: &RunConfig| -> Result<LossSeries> {
            let mut c = c.clone();
            c.mode = mode;
            c.output.dir = dir.join(format!("f{}", c.source.frequency)).join(mode.as_str());
            let output = run_config(&c)?;
            output.write(&c, &c.output.dir)?;
            Ok(output.losses)
        }
    };
    let rows = frequency_sweep(&config, freqs, &solve(RunMode::Multiscale), &solve(RunMode::Reference));
    std::fs::create_dir_all(&dir).map_err(|e| Error::Io {
        path: dir.clone(),
        source: e,
    })?;
    write_sweep(&rows, &dir.join("sweep.csv"))?;
    println!("f_hz,err_p");
    for r in &rows {
        match &r.err_p {
            Ok(e) => println!("{},{e:e}", r.frequency),
            Err(e) => println!("{},failed: {e}", r.frequency),
        }
    }
    println!(
        "err_p nondecreasing in frequency: {}",
        if is_nondecreasing(&rows) { "yes" } else { "no" }
    );
    match rows.into_iter().find_map(|r| r.err_p.err()) {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn find_probe<'a>(series: &'a [ProbeSeries], p: [f64; 2], dir: &Path) -> Result<&'a ProbeSeries> {
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1e-9);
    series
        .iter()
        .find(|s| close(s.point[0], p[0]) && close(s.point[1], p[1]))
        .ok_or_else(|| Error::Probe(format!("no series for ({:e}, {:e}) in {}", p[0], p[1], dir.display())))
}

pub fn compare(reference: &Path, ms: &Path, probes: &Path) -> Result<()> {
    let err_p = loss_error(&read_losses(&ms.join("losses.csv"))?, &read_losses(&reference.join("losses.csv"))?)?;
    let ref_series = read_probe_series(&reference.join("probes.csv"))?;
    let ms_series = read_probe_series(&ms.join("probes.csv"))?;
    println!("err_p = {err_p:e}");
    println!("x_m,y_m,err_b_meso,err_b_macro");
    for p in read_probe_points(probes)? {
        let r = find_probe(&ref_series, p, reference)?;
        let m = find_probe(&ms_series, p, ms)?;
        let meso = field_error(&m.t, &m.b, &r.t, &r.b)?;
        let macro_ = field_error(&m.t, &m.b_macro, &r.t, &r.b)?;
        println!("{:e},{:e},{meso:e},{macro_:e}", p[0], p[1]);
    }
    Ok(())
}
