//! Evaluation metrics: projection-based SDR/SIR/SAR and the intelligibility
//! score.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::losses::{self, StoiConfig};
use crate::signal_io::Waveform;

/// Error energies below this fraction of the estimate's energy report `+inf`.
pub const INFINITY_FLOOR: f64 = 1e-30;

const SILENCE: f64 = 1e-20;

#[derive(Clone, Debug, PartialEq)]
pub struct Decomposition {
    pub target: Waveform,
    pub interference: Waveform,
    pub artifacts: Waveform,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub sdr_db: f64,
    pub sir_db: f64,
    pub sar_db: f64,
    pub stoi: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check(x: &Waveform, y: &Waveform, z: &Waveform) -> Result<()> {
    for (w, name) in [(y, "target"), (z, "interference")] {
        if w.len() != x.len() {
            return Err(Error::shape(format!(
                "{name} has {} samples, estimate has {}",
                w.len(),
                x.len()
            )));
        }
        if w.sample_rate() != x.sample_rate() {
            return Err(Error::shape(format!(
                "{name} is at {} Hz, estimate at {} Hz",
                w.sample_rate(),
                x.sample_rate()
            )));
        }
    }
    if dot(y.samples(), y.samples()) <= SILENCE {
        return Err(Error::SilentSignal("target"));
    }
    if dot(z.samples(), z.samples()) <= SILENCE {
        return Err(Error::SilentSignal("interference"));
    }
    Ok(())
}

/// Splits `x` into its projection on `y`, its projection on `z`, and the rest.
pub fn bss_decompose(x: &Waveform, y: &Waveform, z: &Waveform) -> Result<Decomposition> {
    check(x, y, z)?;
    let (xs, ys, zs) = (x.samples(), y.samples(), z.samples());
    let a = dot(xs, ys) / dot(ys, ys);
    let b = dot(xs, zs) / dot(zs, zs);
    let target: Vec<f64> = ys.iter().map(|v| a * v).collect();
    let interf: Vec<f64> = zs.iter().map(|v| b * v).collect();
    let artif: Vec<f64> = xs
        .iter()
        .zip(&target)
        .zip(&interf)
        .map(|((x, t), i)| x - t - i)
        .collect();
    let rate = x.sample_rate();
    Ok(Decomposition {
        target: Waveform::new(target, rate)?,
        interference: Waveform::new(interf, rate)?,
        artifacts: Waveform::new(artif, rate)?,
    })
}

fn ratio_db(num: f64, den: f64, floor: f64) -> f64 {
    if den < floor {
        f64::INFINITY
    } else {
        10.0 * (num / den).log10()
    }
}

/// SDR, SIR and SAR in dB; `stoi` is left at NaN.
pub fn bss_eval_metrics(x: &Waveform, y: &Waveform, z: &Waveform) -> Result<EvalReport> {
    let d = bss_decompose(x, y, z)?;
    let (t, i, a) = (d.target.samples(), d.interference.samples(), d.artifacts.samples());
    let energy = |v: &[f64]| dot(v, v);
    let floor = INFINITY_FLOOR * energy(x.samples());
    let distortion: Vec<f64> = i.iter().zip(a).map(|(p, q)| p + q).collect();
    let signal: Vec<f64> = t.iter().zip(i).map(|(p, q)| p + q).collect();
    let st = energy(t);
    Ok(EvalReport {
        sdr_db: ratio_db(st, energy(&distortion), floor),
        sir_db: ratio_db(st, energy(i), floor),
        sar_db: ratio_db(energy(&signal), energy(a), floor),
        stoi: f64::NAN,
    })
}

/// Intelligibility of `x` against `y`; by construction `1 - stoi_loss`.
pub fn stoi_metric(x: &Waveform, y: &Waveform, cfg: &StoiConfig) -> Result<f64> {
    Ok(1.0 - losses::stoi_loss(x, y, cfg)?)
}

/// All four metrics of an estimate.
pub fn evaluate(x: &Waveform, y: &Waveform, z: &Waveform, cfg: &StoiConfig) -> Result<EvalReport> {
    let mut r = bss_eval_metrics(x, y, z)?;
    r.stoi = stoi_metric(x, y, cfg)?;
    Ok(r)
}

/// `%.6g`-style formatting, with `inf` for the sentinel.
pub fn format_sig6(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let exp = v.abs().log10().floor() as i32;
    // Rounding can bump the exponent (9.999995 -> 10.0000).
    let sci = format!("{:.5e}", v);
    let exp = sci
        .rsplit_once('e')
        .and_then(|(_, e)| e.parse::<i32>().ok())
        .unwrap_or(exp);
    let trim = |s: String| {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    };
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        trim(format!("{:.*}", decimals, v))
    } else {
        let (mant, _) = sci.split_once('e').expect("scientific format");
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{}{:02}", trim(mant.to_string()), sign, exp.abs())
    }
}

pub const CSV_HEADER: &str = "file,sdr_db,sir_db,sar_db,stoi";

impl EvalReport {
    pub fn csv_row(&self, file: &str) -> String {
        format!(
            "{},{},{},{},{}",
            file,
            format_sig6(self.sdr_db),
            format_sig6(self.sir_db),
            format_sig6(self.sar_db),
            format_sig6(self.stoi)
        )
    }
}
