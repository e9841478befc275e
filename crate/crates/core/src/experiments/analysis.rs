//! Figure-style aggregates computed from metric rows alone. Output tables
//! keep sweep points in order of first appearance.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::rows::{AgentGroup, CsvRecord, MetricRow};
use crate::agents::LtChoice;
use crate::{Error, Result};

/// Groups rows by sweep key, first appearance first.
fn by_sweep<'a, I: IntoIterator<Item = &'a MetricRow>>(rows: I) -> Vec<(&'a str, Vec<&'a MetricRow>)> {
    let mut out: Vec<(&str, Vec<&MetricRow>)> = Vec::new();
    let mut index: HashMap<&str, usize> = HashMap::new();
    for r in rows {
        let k = *index.entry(&r.sweep_key).or_insert_with(|| {
            out.push((&r.sweep_key, Vec::new()));
            out.len() - 1
        });
        out[k].1.push(r);
    }
    out
}

fn lp_rows(rows: &[MetricRow]) -> impl Iterator<Item = &MetricRow> {
    rows.iter().filter(|r| r.group == AgentGroup::Lp)
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    /// Values outside `[lo, hi]` land in the edge bins.
    pub fn build(lo: f64, hi: f64, bins: usize, xs: impl Iterator<Item = f64>) -> Self {
        let mut counts = vec![0u64; bins];
        let width = (hi - lo) / bins as f64;
        for x in xs {
            let b = ((x - lo) / width).floor();
            let b = if b.is_nan() { 0 } else { (b.max(0.0) as usize).min(bins - 1) };
            counts[b] += 1;
        }
        Histogram { lo, hi, counts }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn bin_edges(&self) -> Vec<f64> {
        let n = self.counts.len();
        (0..=n).map(|k| self.lo + (self.hi - self.lo) * k as f64 / n as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TweakDistribution {
    pub sweep_key: String,
    pub eps: Histogram,
    pub eps_sym: Histogram,
    pub eps_asym: Histogram,
}

/// Histograms of the LP tweak and its two components per sweep point.
pub fn tweak_distribution(rows: &[MetricRow], bins: usize) -> Result<Vec<TweakDistribution>> {
    if bins == 0 {
        return Err(Error::Config("histogram needs at least one bin".into()));
    }
    let groups = by_sweep(lp_rows(rows));
    if groups.is_empty() {
        return Err(Error::Empty("no LP rows for tweak distribution".into()));
    }
    Ok(groups
        .into_iter()
        .map(|(key, rs)| {
            let col = |f: fn(&MetricRow) -> Option<f64>| rs.iter().map(move |r| f(r).unwrap_or(0.0));
            TweakDistribution {
                sweep_key: key.to_string(),
                eps: Histogram::build(-1.5, 1.5, bins, col(|r| r.eps)),
                eps_sym: Histogram::build(-1.0, 1.0, bins, col(|r| r.eps_sym)),
                eps_asym: Histogram::build(-1.0, 1.0, bins, col(|r| r.eps_asym)),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowBucket {
    pub sweep_key: String,
    pub eps_lo: f64,
    pub eps_hi: f64,
    /// LP quotes falling in the bucket.
    pub lp_steps: u64,
    pub flow_volume: f64,
    pub pnl_volume: f64,
    /// Volume per LP quote.
    pub flow_mean: f64,
    pub pnl_mean: f64,
}

impl CsvRecord for FlowBucket {
    const HEADER: &'static [&'static str] = &[
        "sweep_key",
        "eps_lo",
        "eps_hi",
        "lp_steps",
        "flow_volume",
        "pnl_volume",
        "flow_mean",
        "pnl_mean",
    ];
}

type StepKey<'a> = (&'a str, u64, usize, usize);

fn step_key(r: &MetricRow) -> StepKey<'_> {
    (&r.sweep_key, r.seed, r.episode, r.step)
}

/// Volume LTs sent to each LP, split by LT group and bucketed by the LP's
/// tweak at that step. Both sides are combined.
pub fn flow_by_tweak(rows: &[MetricRow], width: f64) -> Result<Vec<FlowBucket>> {
    if !(width > 0.0) {
        return Err(Error::Config("bucket width must be positive".into()));
    }
    let mut received: HashMap<(StepKey<'_>, usize), [f64; 2]> = HashMap::new();
    for r in rows.iter().filter(|r| r.group != AgentGroup::Lp && r.volume > 0.0) {
        let Some(lp) = r.counterparty.as_deref().and_then(|c| c.parse::<usize>().ok()) else {
            continue;
        };
        let slot = received.entry((step_key(r), lp)).or_default();
        slot[(r.group == AgentGroup::Pnl) as usize] += r.volume;
    }
    let groups = by_sweep(lp_rows(rows));
    if groups.is_empty() {
        return Err(Error::Empty("no LP rows for flow by tweak".into()));
    }
    let mut out = Vec::new();
    for (key, rs) in groups {
        let mut buckets: BTreeMap<i64, (u64, f64, f64)> = BTreeMap::new();
        for r in rs {
            let b = (r.eps.unwrap_or(0.0) / width).floor() as i64;
            let v = received.get(&(step_key(r), r.agent_id)).copied().unwrap_or_default();
            let e = buckets.entry(b).or_default();
            e.0 += 1;
            e.1 += v[0];
            e.2 += v[1];
        }
        for (b, (n, flow, pnl)) in buckets {
            out.push(FlowBucket {
                sweep_key: key.to_string(),
                eps_lo: b as f64 * width,
                eps_hi: (b + 1) as f64 * width,
                lp_steps: n,
                flow_volume: flow,
                pnl_volume: pnl,
                flow_mean: flow / n as f64,
                pnl_mean: pnl / n as f64,
            });
        }
    }
    Ok(out)
}

/// Spread and inventory PnL of one agent over one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentEpisodePnl {
    pub sweep_key: String,
    pub seed: u64,
    pub episode: usize,
    pub agent_id: usize,
    pub group: AgentGroup,
    pub spread_pnl: f64,
    pub inventory_pnl: f64,
}

impl CsvRecord for AgentEpisodePnl {
    const HEADER: &'static [&'static str] = &[
        "sweep_key",
        "seed",
        "episode",
        "agent_id",
        "group",
        "spread_pnl",
        "inventory_pnl",
    ];
}

impl AgentEpisodePnl {
    pub fn total(&self) -> f64 {
        self.spread_pnl + self.inventory_pnl
    }
}

/// Per agent and episode PnL components, in order of first appearance.
pub fn pnl_decomposition(rows: &[MetricRow]) -> Vec<AgentEpisodePnl> {
    let mut out: Vec<AgentEpisodePnl> = Vec::new();
    let mut index: HashMap<(&str, u64, usize, usize), usize> = HashMap::new();
    for r in rows {
        let k = *index
            .entry((&r.sweep_key, r.seed, r.episode, r.agent_id))
            .or_insert_with(|| {
                out.push(AgentEpisodePnl {
                    sweep_key: r.sweep_key.clone(),
                    seed: r.seed,
                    episode: r.episode,
                    agent_id: r.agent_id,
                    group: r.group,
                    spread_pnl: 0.0,
                    inventory_pnl: 0.0,
                });
                out.len() - 1
            });
        out[k].spread_pnl += r.d_spread_pnl;
        out[k].inventory_pnl += r.d_inventory_pnl;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupPnl {
    pub group: AgentGroup,
    pub agent_episodes: usize,
    pub mean_spread_pnl: f64,
    pub mean_inventory_pnl: f64,
    pub mean_total_pnl: f64,
}

/// Mean per-episode PnL components per agent group.
pub fn group_pnl(decomp: &[AgentEpisodePnl]) -> Vec<GroupPnl> {
    AgentGroup::ALL
        .iter()
        .filter_map(|&g| {
            let xs: Vec<&AgentEpisodePnl> = decomp.iter().filter(|d| d.group == g).collect();
            (!xs.is_empty()).then(|| GroupPnl {
                group: g,
                agent_episodes: xs.len(),
                mean_spread_pnl: mean(xs.iter().map(|d| d.spread_pnl)),
                mean_inventory_pnl: mean(xs.iter().map(|d| d.inventory_pnl)),
                mean_total_pnl: mean(xs.iter().map(|d| d.total())),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkewIntensity {
    pub sweep_key: String,
    /// Mean |ε_asym| over LP quotes.
    pub intensity: f64,
    /// Same, restricted to quotes made while holding inventory.
    pub intensity_with_inventory: Option<f64>,
    pub lp_steps: usize,
}

/// Mean |ε_asym| per sweep point. The inventory-conditioned series uses the
/// LP's inventory going into the step, i.e. the previous row's.
pub fn skew_intensity(rows: &[MetricRow]) -> Result<Vec<SkewIntensity>> {
    let groups = by_sweep(lp_rows(rows));
    if groups.is_empty() {
        return Err(Error::Empty("no LP rows for skew intensity".into()));
    }
    Ok(groups
        .into_iter()
        .map(|(key, rs)| {
            let after: HashMap<(u64, usize, usize, usize), f64> = rs
                .iter()
                .map(|r| ((r.seed, r.episode, r.agent_id, r.step), r.inventory))
                .collect();
            let skew = |r: &&MetricRow| r.eps_asym.unwrap_or(0.0).abs();
            let held: Vec<f64> = rs
                .iter()
                .filter(|r| {
                    r.step > 0
                        && after
                            .get(&(r.seed, r.episode, r.agent_id, r.step - 1))
                            .is_some_and(|z| z.abs() > 0.0)
                })
                .map(skew)
                .collect();
            SkewIntensity {
                sweep_key: key.to_string(),
                intensity: mean(rs.iter().map(skew)),
                intensity_with_inventory: (!held.is_empty()).then(|| mean(held.iter().copied())),
                lp_steps: rs.len(),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TweakMeans {
    pub sweep_key: String,
    pub eps: f64,
    pub eps_sym: f64,
    pub eps_asym: f64,
}

pub fn mean_tweak(rows: &[MetricRow]) -> Result<Vec<TweakMeans>> {
    let groups = by_sweep(lp_rows(rows));
    if groups.is_empty() {
        return Err(Error::Empty("no LP rows for mean tweak".into()));
    }
    Ok(groups
        .into_iter()
        .map(|(key, rs)| TweakMeans {
            sweep_key: key.to_string(),
            eps: mean(rs.iter().map(|r| r.eps.unwrap_or(0.0))),
            eps_sym: mean(rs.iter().map(|r| r.eps_sym.unwrap_or(0.0))),
            eps_asym: mean(rs.iter().map(|r| r.eps_asym.unwrap_or(0.0))),
        })
        .collect())
}

/// Executed (sell, buy, hold) frequencies of one LT group.
pub fn lt_frequencies(rows: &[MetricRow], group: AgentGroup) -> Option<[f64; 3]> {
    let mut counts = [0u64; 3];
    for r in rows.iter().filter(|r| r.group == group) {
        counts[r.lt_choice.unwrap_or(LtChoice::Hold).index()] += 1;
    }
    let n: u64 = counts.iter().sum();
    (n > 0).then(|| counts.map(|c| c as f64 / n as f64))
}
