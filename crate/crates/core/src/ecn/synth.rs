//! Synthetic L2 snapshot series used in place of exchange data, plus the
//! snapshot CSV format (`step,mid,bid_vol_1..n,ask_vol_1..n`).

use std::io::{Read, Write};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::model::{BookSnapshot, VolumeProcess};
use crate::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub rows: usize,
    pub volumes: VolumeProcess,
    /// Fraction of the gap to `volumes.initial_mid` closed per step.
    pub mid_reversion: f64,
    /// Per-step mid noise standard deviation, in ticks.
    pub mid_noise_ticks: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            rows: 5000,
            volumes: VolumeProcess::default(),
            mid_reversion: 0.05,
            mid_noise_ticks: 1.0,
        }
    }
}

/// Mean-reverting mid on the half-tick grid with AR(1) level volumes
/// clipped at zero.
pub fn synth_l2_dataset<R: Rng + ?Sized>(cfg: &SynthConfig, rng: &mut R) -> Vec<BookSnapshot> {
    let p = &cfg.volumes;
    let tick = p.tick_size;
    let means: Vec<f64> = (0..2 * p.n).map(|i| p.mean_volume(i % p.n + 1)).collect();
    let mut vols = means.clone();
    let mut mid = p.initial_mid;
    let mut out = Vec::with_capacity(cfg.rows);
    for _ in 0..cfg.rows {
        let snapped = (2.0 * mid / tick).round() * 0.5 * tick;
        out.push(BookSnapshot {
            mid: snapped,
            bid_volumes: vols[..p.n].to_vec(),
            ask_volumes: vols[p.n..].to_vec(),
        });
        let z: f64 = StandardNormal.sample(rng);
        mid += cfg.mid_reversion * (p.initial_mid - mid) + cfg.mid_noise_ticks * tick * z;
        for (v, m) in vols.iter_mut().zip(&means) {
            let z: f64 = StandardNormal.sample(rng);
            *v = (*v + p.volume_reversion * (m - *v) + p.volume_noise * z).max(0.0);
        }
    }
    out
}

pub fn snapshot_header(n: usize) -> Vec<String> {
    let mut h = vec!["step".to_string(), "mid".to_string()];
    h.extend((1..=n).map(|k| format!("bid_vol_{k}")));
    h.extend((1..=n).map(|k| format!("ask_vol_{k}")));
    h
}

pub fn write_snapshots<W: Write>(rows: &[BookSnapshot], out: W) -> Result<(), Error> {
    let n = rows.first().map_or(0, |r| r.levels());
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(snapshot_header(n))?;
    for (step, r) in rows.iter().enumerate() {
        let mut rec = vec![step.to_string(), r.mid.to_string()];
        rec.extend(r.to_vector().iter().map(|v| v.to_string()));
        w.write_record(rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_snapshots<R: Read>(input: R) -> Result<Vec<BookSnapshot>, Error> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    let cols = header.len();
    if cols < 4 || (cols - 2) % 2 != 0 {
        return Err(Error::Schema(format!("bad snapshot header with {cols} columns")));
    }
    let n = (cols - 2) / 2;
    let expected = snapshot_header(n);
    if header.iter().zip(&expected).any(|(a, b)| a != b) {
        return Err(Error::Schema(format!(
            "snapshot header must be {}",
            expected.join(",")
        )));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let vals: Vec<f64> = rec
            .iter()
            .skip(1)
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|e| Error::Schema(format!("bad number {s:?}: {e}")))
            })
            .collect::<Result<_, _>>()?;
        rows.push(BookSnapshot {
            mid: vals[0],
            bid_volumes: vals[1..=n].to_vec(),
            ask_volumes: vals[n + 1..].to_vec(),
        });
    }
    Ok(rows)
}
