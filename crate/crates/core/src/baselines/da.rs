use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{rank_by_utility, Arm, ArmUtilities};

/// A centralized instance: agents rank arms, arms rank agents. Anyone left
/// off a list is unacceptable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DaInstance {
    pub agent_quotas: Vec<usize>,
    /// `agent_prefs[i]` lists arm ids, best first.
    pub agent_prefs: Vec<Vec<usize>>,
    /// `arm_prefs[j]` lists agent ids, best first.
    pub arm_prefs: Vec<Vec<usize>>,
}

fn strict(list: &[usize], bound: usize, who: &str) -> Result<()> {
    let mut seen = BTreeSet::new();
    for &x in list {
        if x >= bound {
            return Err(Error::Preferences(format!("{who} lists unknown id {x}")));
        }
        if !seen.insert(x) {
            return Err(Error::Preferences(format!("{who} lists {x} twice; orders must be strict")));
        }
    }
    Ok(())
}

impl DaInstance {
    pub fn new(agent_quotas: Vec<usize>, agent_prefs: Vec<Vec<usize>>, arm_prefs: Vec<Vec<usize>>) -> Result<Self> {
        let inst = DaInstance { agent_quotas, agent_prefs, arm_prefs };
        inst.validate()?;
        Ok(inst)
    }

    /// Agents rank every arm by latent utility; arms rank acceptable agents
    /// by their preference values.
    pub fn from_market(arms: &[Arm], quotas: &[usize], arm_prefs: &ArmUtilities) -> Result<Self> {
        let ids: Vec<usize> = (0..arms.len()).collect();
        let agent_prefs = (0..quotas.len()).map(|i| rank_by_utility(arms, &ids, i)).collect();
        let arm_prefs = (0..arms.len()).map(|j| arm_prefs.ranking(j)).collect();
        Self::new(quotas.to_vec(), agent_prefs, arm_prefs)
    }

    pub fn validate(&self) -> Result<()> {
        if self.agent_prefs.len() != self.agent_quotas.len() {
            return Err(Error::Preferences("one preference list per agent is required".into()));
        }
        let (m, n) = (self.agent_quotas.len(), self.arm_prefs.len());
        for (i, list) in self.agent_prefs.iter().enumerate() {
            strict(list, n, &format!("agent {i}"))?;
        }
        for (j, list) in self.arm_prefs.iter().enumerate() {
            strict(list, m, &format!("arm {j}"))?;
        }
        Ok(())
    }

    fn agent_rank(&self) -> Vec<Vec<Option<usize>>> {
        rank_table(&self.agent_prefs, self.arm_prefs.len())
    }

    fn arm_rank(&self) -> Vec<Vec<Option<usize>>> {
        rank_table(&self.arm_prefs, self.agent_quotas.len())
    }
}

fn rank_table(prefs: &[Vec<usize>], other: usize) -> Vec<Vec<Option<usize>>> {
    prefs
        .iter()
        .map(|list| {
            let mut r = vec![None; other];
            for (pos, &x) in list.iter().enumerate() {
                r[x] = Some(pos);
            }
            r
        })
        .collect()
}

/// Arm-proposing deferred acceptance. Returns the matching as arm → agent.
pub fn deferred_acceptance(inst: &DaInstance) -> Result<BTreeMap<usize, usize>> {
    let order: Vec<usize> = (0..inst.arm_prefs.len()).collect();
    deferred_acceptance_ordered(inst, &order)
}

/// Deferred acceptance with proposals within each round made in `order`.
/// The outcome does not depend on the order.
pub fn deferred_acceptance_ordered(inst: &DaInstance, order: &[usize]) -> Result<BTreeMap<usize, usize>> {
    inst.validate()?;
    let n = inst.arm_prefs.len();
    let mut sorted = order.to_vec();
    sorted.sort_unstable();
    if sorted != (0..n).collect::<Vec<_>>() {
        return Err(Error::Preferences("proposal order must list every arm once".into()));
    }
    let agent_rank = inst.agent_rank();
    let mut next = vec![0usize; n];
    let mut holder: Vec<Option<usize>> = vec![None; n];
    let mut held: Vec<Vec<usize>> = vec![Vec::new(); inst.agent_quotas.len()];
    loop {
        let proposers: Vec<usize> = order
            .iter()
            .copied()
            .filter(|&j| holder[j].is_none() && next[j] < inst.arm_prefs[j].len())
            .collect();
        if proposers.is_empty() {
            break;
        }
        let mut touched = BTreeSet::new();
        for j in proposers {
            let i = inst.arm_prefs[j][next[j]];
            next[j] += 1;
            if agent_rank[i][j].is_some() {
                held[i].push(j);
                holder[j] = Some(i);
                touched.insert(i);
            }
        }
        for i in touched {
            let list = &mut held[i];
            list.sort_by_key(|&j| agent_rank[i][j]);
            for j in list.drain(inst.agent_quotas[i].min(list.len())..) {
                holder[j] = None;
            }
        }
    }
    Ok(holder
        .iter()
        .enumerate()
        .filter_map(|(j, h)| h.map(|i| (j, i)))
        .collect())
}

/// Pairs `(arm, agent)` that would both rather be matched to each other.
pub fn blocking_pairs(inst: &DaInstance, matching: &BTreeMap<usize, usize>) -> Vec<(usize, usize)> {
    let agent_rank = inst.agent_rank();
    let arm_rank = inst.arm_rank();
    let mut held: Vec<Vec<usize>> = vec![Vec::new(); inst.agent_quotas.len()];
    for (&j, &i) in matching {
        held[i].push(j);
    }
    let mut pairs = Vec::new();
    for j in 0..inst.arm_prefs.len() {
        for (i, quota) in inst.agent_quotas.iter().enumerate() {
            if matching.get(&j) == Some(&i) {
                continue;
            }
            let (Some(arm_likes), Some(agent_likes)) = (arm_rank[j][i], agent_rank[i][j]) else {
                continue;
            };
            let arm_wants = match matching.get(&j) {
                None => true,
                Some(&cur) => arm_rank[j][cur].is_none_or(|r| arm_likes < r),
            };
            let agent_wants = held[i].len() < *quota
                || held[i]
                    .iter()
                    .any(|&k| agent_rank[i][k].is_none_or(|r| agent_likes < r));
            if arm_wants && agent_wants {
                pairs.push((j, i));
            }
        }
    }
    pairs
}

#[derive(Debug, Serialize, Deserialize)]
struct PreferenceRow {
    side: String,
    id: usize,
    quota: Option<usize>,
    ranking: String,
}

/// Reads an instance from CSV with columns `side,id,quota,ranking`, where
/// `side` is `agent` or `arm`, `quota` is empty for arms and `ranking` holds
/// space-separated ids, best first.
pub fn read_da_instance(path: &Path) -> Result<DaInstance> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let parse_err = |line: usize, field: &str, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        field: field.into(),
        message,
    };
    let headers = reader.headers().map_err(|e| parse_err(1, "header", e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["side", "id", "quota", "ranking"] {
        return Err(parse_err(1, "header", "expected side,id,quota,ranking".into()));
    }
    let mut agents: BTreeMap<usize, (usize, Vec<usize>)> = BTreeMap::new();
    let mut arms: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (row, record) in reader.deserialize::<PreferenceRow>().enumerate() {
        let line = row + 2;
        let r = record.map_err(|e| parse_err(line, "row", e.to_string()))?;
        let ranking = r
            .ranking
            .split_whitespace()
            .map(|t| t.parse::<usize>().map_err(|e| parse_err(line, "ranking", format!("{t:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        match r.side.as_str() {
            "agent" => {
                let quota = r.quota.ok_or_else(|| parse_err(line, "quota", "agents need a quota".into()))?;
                agents.insert(r.id, (quota, ranking));
            }
            "arm" => {
                arms.insert(r.id, ranking);
            }
            other => return Err(parse_err(line, "side", format!("unknown side {other:?}"))),
        }
    }
    let contiguous = |keys: Vec<usize>| keys.iter().enumerate().all(|(p, &k)| p == k);
    if !contiguous(agents.keys().copied().collect()) || !contiguous(arms.keys().copied().collect()) {
        return Err(Error::Preferences("ids must run 0..n on each side".into()));
    }
    let (quotas, agent_prefs) = agents.into_values().unzip();
    DaInstance::new(quotas, agent_prefs, arms.into_values().collect())
}

pub fn write_da_instance(path: &Path, inst: &DaInstance) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::Config(e.to_string()))?;
    let join = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
    let mut rows = Vec::new();
    for (i, prefs) in inst.agent_prefs.iter().enumerate() {
        rows.push(PreferenceRow { side: "agent".into(), id: i, quota: Some(inst.agent_quotas[i]), ranking: join(prefs) });
    }
    for (j, prefs) in inst.arm_prefs.iter().enumerate() {
        rows.push(PreferenceRow { side: "arm".into(), id: j, quota: None, ranking: join(prefs) });
    }
    for row in rows {
        writer.serialize(row).map_err(|e| Error::Config(e.to_string()))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}
