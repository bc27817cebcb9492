//! Artifact emission: run.json, series/*.csv, monitors/*.csv, snapshots/*.csv.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::CliError;
use crate::pipeline::{BalanceSeries, Constants, RunOutcome};

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    let f = File::create(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(BufWriter::new(f))
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

fn mkdir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(io_err(path))
}

fn write_balance<W: Write>(b: &BalanceSeries, mut w: W) -> std::io::Result<()> {
    writeln!(w, "time,energy,energy_rate,dissipation,boundary,flux,residual,corrected")?;
    for i in 0..b.times.len() {
        writeln!(
            w,
            "{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?}",
            b.times[i],
            b.energy[i],
            b.energy_rate[i],
            b.dissipation[i],
            b.boundary[i],
            b.flux[i],
            b.residual[i],
            b.corrected[i]
        )?;
    }
    w.flush()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    writeln!(w).and_then(|_| w.flush()).map_err(io_err(path))
}

pub fn write_constants(dir: &Path, c: &Constants) -> Result<PathBuf, CliError> {
    mkdir(dir)?;
    let path = dir.join("constants.json");
    write_json(&path, c)?;
    Ok(path)
}

/// Write every artifact of a finished run into `dir`.
pub fn write_outcome(dir: &Path, out: &RunOutcome) -> Result<(), CliError> {
    let formats = &out.report.config.output.formats;
    mkdir(dir)?;
    if formats.iter().any(|f| f == "json") {
        write_json(&dir.join("run.json"), &out.report)?;
    }
    if !formats.iter().any(|f| f == "csv") {
        return Ok(());
    }
    let series_dir = dir.join("series");
    mkdir(&series_dir)?;
    for s in &out.series {
        let path = series_dir.join(format!("{}.csv", s.name));
        s.write_csv(create(&path)?).map_err(io_err(&path))?;
    }
    for b in &out.balances {
        let path = series_dir.join(format!("balance_c{}.csv", b.c));
        write_balance(b, create(&path)?).map_err(io_err(&path))?;
    }
    let path = series_dir.join("escape_track.csv");
    let mut w = create(&path)?;
    let tr = &out.track;
    let mut text = String::from("time,r_esc_outer,r_esc_hom,r_hom,sigma_empty,sup_beyond\n");
    for i in 0..tr.times.len() {
        text.push_str(&format!(
            "{:?},{:?},{:?},{},{},{:?}\n",
            tr.times[i],
            tr.r_esc_outer[i],
            tr.r_esc_hom[i],
            opt(tr.r_hom[i]),
            tr.sigma_empty[i] as u8,
            tr.sup_beyond[i]
        ));
    }
    w.write_all(text.as_bytes()).and_then(|_| w.flush()).map_err(io_err(&path))?;
    let path = series_dir.join("derivative_decay.csv");
    let mut w = create(&path)?;
    let dd = &out.decay;
    let mut text = String::from("time,sup_ut,sup_grad,sup_lap\n");
    for i in 0..dd.times.len() {
        text.push_str(&format!("{:?},{:?},{:?},{:?}\n", dd.times[i], dd.sup_ut[i], dd.sup_grad[i], dd.sup_lap[i]));
    }
    w.write_all(text.as_bytes()).and_then(|_| w.flush()).map_err(io_err(&path))?;

    let mon_dir = dir.join("monitors");
    mkdir(&mon_dir)?;
    for m in &out.monitors {
        let path = mon_dir.join(format!("{}.csv", m.name));
        m.write_csv(create(&path)?).map_err(io_err(&path))?;
    }

    let snap_dir = dir.join("snapshots");
    mkdir(&snap_dir)?;
    let snaps = &out.trajectory.snapshots;
    let count = out.report.config.output.snapshots.min(snaps.len());
    let mut picked: Vec<usize> = match count {
        0 => vec![],
        1 => vec![snaps.len() - 1],
        k => (0..k).map(|i| i * (snaps.len() - 1) / (k - 1)).collect(),
    };
    picked.dedup();
    for i in picked {
        let path = snap_dir.join(format!("snapshot_{i:05}.csv"));
        snaps[i].state.write_csv(create(&path)?).map_err(io_err(&path))?;
    }
    Ok(())
}
