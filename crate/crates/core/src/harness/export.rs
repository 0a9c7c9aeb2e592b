//! Campaign and sweep artefacts on disk.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::campaign::{CampaignCell, CampaignResult};
use super::config::ExperimentConfig;
use super::sweep::SweepResult;
use super::HarnessError;
use crate::crlb::write_sweep_csv;
use crate::estimators::Method;

pub const CAMPAIGN_HEADER: &str = "scheme,x,sigma0,trials,failures,nonconverged,valid,mse,bias,crlb,normalized_mse,\
normalized_crlb,samples_per_trial,signal_index,noise_index,hash,note";

pub const MSE_SWEEP_HEADER: &str = "x,mse_idd,mse_isd,mse_ue,mse_me";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.display().to_string(), source }
}

fn write(path: &Path, text: &str) -> Result<(), HarnessError> {
    fs::write(path, text).map_err(io_err(path))
}

fn cell_row(c: &CampaignCell) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{:016x},{}",
        c.scheme.tag(),
        c.x,
        c.sigma0,
        c.trials,
        c.failures,
        c.nonconverged,
        c.valid,
        c.mse,
        c.bias,
        c.crlb,
        c.normalized_mse,
        c.normalized_crlb,
        c.samples_per_trial,
        c.signal_index,
        c.noise_index,
        c.hash,
        c.note.replace([',', '\n'], ";")
    )
}

/// Writes `campaign.csv`, `config.echo` and `seeds.txt` into `dir`.
pub fn write_campaign(result: &CampaignResult, cfg: &ExperimentConfig, dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut csv = String::new();
    let _ = writeln!(csv, "{CAMPAIGN_HEADER}");
    for c in &result.cells {
        let _ = writeln!(csv, "{}", cell_row(c));
    }
    write(&dir.join("campaign.csv"), &csv)?;

    let mut echo = String::from("# resolved experiment configuration\n");
    echo.push_str(&cfg.to_toml());
    if let Ok(sys) = cfg.system.resolve() {
        echo.push_str("\n# resolved atomic system (SI units, angular frequencies)\n");
        for line in toml::to_string(&sys).unwrap_or_default().lines() {
            let _ = writeln!(echo, "# {line}");
        }
    }
    write(&dir.join("config.echo"), &echo)?;

    let mut seeds = String::new();
    let _ = writeln!(seeds, "master_seed = {}", result.master_seed);
    let _ = writeln!(seeds, "# trial seed = derive_seed(master_seed, [signal_index, noise_index, trial, stream])");
    let _ = writeln!(seeds, "# streams: 0 left scan, 1 right scan, 2 IDD samples, 3 ISD waveform");
    let _ = writeln!(seeds, "scheme,x,sigma0,signal_index,noise_index,trials,streams");
    for c in &result.cells {
        let streams = match c.scheme {
            Method::Idd => "2",
            Method::Isd => "3",
            _ => "0 1",
        };
        let _ = writeln!(
            seeds,
            "{},{},{},{},{},{},{streams}",
            c.scheme.tag(),
            c.x,
            c.sigma0,
            c.signal_index,
            c.noise_index,
            c.trials
        );
    }
    write(&dir.join("seeds.txt"), &seeds)
}

/// Reads back what [`write_campaign`] wrote.
pub fn read_campaign(dir: &Path) -> Result<CampaignResult, HarnessError> {
    let csv_path = dir.join("campaign.csv");
    let text = fs::read_to_string(&csv_path).map_err(io_err(&csv_path))?;
    let fmt = |msg: String| HarnessError::Format { path: csv_path.display().to_string(), msg };
    let mut lines = text.lines();
    if lines.next() != Some(CAMPAIGN_HEADER) {
        return Err(fmt("unexpected header".into()));
    }
    let mut cells = Vec::new();
    for (k, line) in lines.enumerate() {
        let p: Vec<&str> = line.split(',').collect();
        if p.len() != 17 {
            return Err(fmt(format!("row {}: expected 17 columns", k + 1)));
        }
        let f = |i: usize| p[i].parse::<f64>().map_err(|e| fmt(format!("row {} col {i}: {e}", k + 1)));
        let u = |i: usize| p[i].parse::<usize>().map_err(|e| fmt(format!("row {} col {i}: {e}", k + 1)));
        cells.push(CampaignCell {
            scheme: Method::parse(p[0]).ok_or_else(|| fmt(format!("row {}: unknown scheme", k + 1)))?,
            x: f(1)?,
            sigma0: f(2)?,
            trials: u(3)?,
            failures: u(4)?,
            nonconverged: u(5)?,
            valid: p[6] == "true",
            mse: f(7)?,
            bias: f(8)?,
            crlb: f(9)?,
            normalized_mse: f(10)?,
            normalized_crlb: f(11)?,
            samples_per_trial: u(12)?,
            signal_index: u(13)?,
            noise_index: u(14)?,
            hash: u64::from_str_radix(p[15], 16).map_err(|e| fmt(format!("row {}: hash: {e}", k + 1)))?,
            note: p[16].to_string(),
        });
    }
    let seeds_path = dir.join("seeds.txt");
    let seeds = fs::read_to_string(&seeds_path).map_err(io_err(&seeds_path))?;
    let master_seed = seeds
        .lines()
        .find_map(|l| l.strip_prefix("master_seed = "))
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| HarnessError::Format { path: seeds_path.display().to_string(), msg: "missing master_seed".into() })?;
    Ok(CampaignResult { master_seed, cells })
}

/// Writes `crlb_sweep.csv` and, when present, `mse_sweep.csv`.
pub fn write_sweep(result: &SweepResult, dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut buf = Vec::new();
    write_sweep_csv(&result.crlb, true, &mut buf).map_err(io_err(dir))?;
    write(&dir.join("crlb_sweep.csv"), &String::from_utf8_lossy(&buf))?;
    if !result.mse.is_empty() {
        let mut s = String::from("# normalized=true\n");
        let _ = writeln!(s, "{MSE_SWEEP_HEADER}");
        for r in &result.mse {
            let _ = writeln!(s, "{},{},{},{},{}", r.x, r.mse_idd, r.mse_isd, r.mse_ue, r.mse_me);
        }
        write(&dir.join("mse_sweep.csv"), &s)?;
    }
    Ok(())
}
