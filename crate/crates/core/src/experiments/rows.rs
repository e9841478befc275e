//! Flat per-agent, per-step records and their CSV form.

use std::io::{Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::agents::{normalized_tweak, AgentType, Family, LtChoice};
use crate::env::LtGroup;
use crate::market::Counterparty;
use crate::rl::EpisodeRecord;
use crate::{Error, Result};

/// Which population an agent belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentGroup {
    Lp,
    Flow,
    Pnl,
}

impl AgentGroup {
    pub const ALL: [AgentGroup; 3] = [AgentGroup::Lp, AgentGroup::Flow, AgentGroup::Pnl];

    pub fn family(self) -> Family {
        match self {
            AgentGroup::Lp => Family::Lp,
            _ => Family::Lt,
        }
    }
}

impl From<LtGroup> for AgentGroup {
    fn from(g: LtGroup) -> Self {
        match g {
            LtGroup::Flow => AgentGroup::Flow,
            LtGroup::Pnl => AgentGroup::Pnl,
        }
    }
}

impl std::fmt::Display for AgentGroup {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AgentGroup::Lp => "lp",
            AgentGroup::Flow => "flow",
            AgentGroup::Pnl => "pnl",
        })
    }
}

/// One agent at one evaluation step. LP rows carry the quote action, LT rows
/// the executed choice and counterparty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub experiment: String,
    pub sweep_key: String,
    pub seed: u64,
    pub episode: usize,
    pub step: usize,
    pub agent_id: usize,
    pub family: Family,
    pub group: AgentGroup,
    pub w: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub market_share_target: Option<f64>,
    pub q_sell: Option<f64>,
    pub q_buy: Option<f64>,
    pub q_hold: Option<f64>,
    pub connect_prob_lt: f64,
    pub connect_prob_lp: f64,
    pub connect_prob_ecn: f64,
    pub eps_sym: Option<f64>,
    pub eps_asym: Option<f64>,
    pub eps: Option<f64>,
    pub hedge_fraction: Option<f64>,
    pub lt_choice: Option<LtChoice>,
    /// Client volume for LPs, executed quantity for LTs.
    pub volume: f64,
    pub reward: f64,
    pub d_spread_pnl: f64,
    pub d_inventory_pnl: f64,
    pub inventory: f64,
    /// Agent id of the LP the LT traded with, or `ecn`.
    pub counterparty: Option<String>,
}

/// Serializable table with a fixed column list, so empty tables still get
/// a header line.
pub trait CsvRecord: Serialize + DeserializeOwned {
    const HEADER: &'static [&'static str];
}

impl CsvRecord for MetricRow {
    const HEADER: &'static [&'static str] = &[
        "experiment",
        "sweep_key",
        "seed",
        "episode",
        "step",
        "agent_id",
        "family",
        "group",
        "w",
        "alpha",
        "gamma",
        "market_share_target",
        "q_sell",
        "q_buy",
        "q_hold",
        "connect_prob_lt",
        "connect_prob_lp",
        "connect_prob_ecn",
        "eps_sym",
        "eps_asym",
        "eps",
        "hedge_fraction",
        "lt_choice",
        "volume",
        "reward",
        "d_spread_pnl",
        "d_inventory_pnl",
        "inventory",
        "counterparty",
    ];
}

impl MetricRow {
    fn base(
        experiment: &str,
        sweep_key: &str,
        seed: u64,
        episode: usize,
        step: usize,
        agent_id: usize,
        group: AgentGroup,
        ty: &AgentType,
    ) -> Self {
        let q = ty.flow_targets.map(|q| q.0);
        MetricRow {
            experiment: experiment.to_string(),
            sweep_key: sweep_key.to_string(),
            seed,
            episode,
            step,
            agent_id,
            family: group.family(),
            group,
            w: ty.w,
            alpha: ty.alpha,
            gamma: ty.gamma,
            market_share_target: ty.market_share_target,
            q_sell: q.map(|q| q[0]),
            q_buy: q.map(|q| q[1]),
            q_hold: q.map(|q| q[2]),
            connect_prob_lt: ty.connect_prob_lt,
            connect_prob_lp: ty.connect_prob_lp,
            connect_prob_ecn: ty.connect_prob_ecn,
            eps_sym: None,
            eps_asym: None,
            eps: None,
            hedge_fraction: None,
            lt_choice: None,
            volume: 0.0,
            reward: 0.0,
            d_spread_pnl: 0.0,
            d_inventory_pnl: 0.0,
            inventory: 0.0,
            counterparty: None,
        }
    }
}

/// Flattens an evaluated episode into rows: per step, LPs then LTs, in id
/// order.
pub fn episode_rows(
    experiment: &str,
    sweep_key: &str,
    seed: u64,
    episode: usize,
    rec: &EpisodeRecord,
) -> Vec<MetricRow> {
    let n_lp = rec.lp_types.len();
    let mut out = Vec::with_capacity(rec.steps.len() * (n_lp + rec.lt_types.len()));
    for s in &rec.steps {
        for (i, lp) in s.lps.iter().enumerate() {
            let mut r = MetricRow::base(experiment, sweep_key, seed, episode, s.t, i, AgentGroup::Lp, &rec.lp_types[i]);
            r.eps_sym = Some(lp.action.eps_sym);
            r.eps_asym = Some(lp.action.eps_asym);
            r.eps = Some(normalized_tweak(&lp.action));
            r.hedge_fraction = Some(lp.action.hedge_fraction);
            r.volume = lp.client_volume;
            r.reward = lp.reward;
            r.d_spread_pnl = lp.deltas.spread;
            r.d_inventory_pnl = lp.deltas.inventory;
            r.inventory = lp.inventory;
            out.push(r);
        }
        for (j, lt) in s.lts.iter().enumerate() {
            let group = rec.lt_groups[j].into();
            let mut r = MetricRow::base(experiment, sweep_key, seed, episode, s.t, n_lp + j, group, &rec.lt_types[j]);
            r.lt_choice = Some(lt.executed);
            r.volume = if lt.executed == LtChoice::Hold { 0.0 } else { 1.0 };
            r.reward = lt.reward;
            r.d_spread_pnl = lt.deltas.spread;
            r.d_inventory_pnl = lt.deltas.inventory;
            r.inventory = lt.inventory;
            r.counterparty = lt.counterparty.map(|c| match c {
                Counterparty::Agent(id) => id.to_string(),
                Counterparty::Ecn => "ecn".to_string(),
            });
            out.push(r);
        }
    }
    out
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .has_headers(false)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

/// Writes `rows` as CSV with a header line and `\n` terminators.
pub fn write_csv<T: CsvRecord, W: Write>(rows: &[T], w: W) -> Result<()> {
    let mut wtr = writer(w);
    wtr.write_record(T::HEADER)?;
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn export_csv<T: CsvRecord>(rows: &[T], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    write_csv(rows, std::io::BufWriter::new(file))
}

/// Parses CSV written by [`write_csv`], checking the header.
pub fn read_csv<T: CsvRecord, R: Read>(r: R) -> Result<Vec<T>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let header = rdr.headers()?.clone();
    if header.iter().ne(T::HEADER.iter().copied()) {
        return Err(Error::Schema(format!(
            "unexpected columns {:?}",
            header.iter().collect::<Vec<_>>()
        )));
    }
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

pub fn import_csv<T: CsvRecord>(path: &Path) -> Result<Vec<T>> {
    let file = std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    read_csv(std::io::BufReader::new(file))
}
