//! Dataset assembly: maze pools per tier, per-family quotas, stratified
//! 8:1:1 splits and JSONL output.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::generator::{generate, mix_seed, DifficultyTier, GenConfig, GenError};
use crate::maze::Maze;
use crate::tasks::{
    build_next_step_sampled, build_route_planning, build_rule_qa_with, build_turnpoint_qa_with,
    Family, RuleTemplate, Split, TaskError, TaskInstance, TurnpointTemplate,
};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("quota for {family} tier {tier} cannot be met: {reason}")]
    QuotaInfeasible {
        family: Family,
        tier: u32,
        reason: String,
    },
    #[error("invalid dataset config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Generator(#[from] GenError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("bad record in {path} line {line}: {source}")]
    Record {
        path: PathBuf,
        line: usize,
        source: serde_json::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetConfig {
    /// Turnpoint comprehension instances.
    pub turnpoint: usize,
    /// Rule understanding instances.
    pub rule: usize,
    /// Structured reasoning instances, split evenly between route planning
    /// and next-step prediction.
    pub structured: usize,
    pub seed: u64,
    pub tiers: Vec<DifficultyTier>,
    pub grid_side: Option<usize>,
    pub dead_ends: Option<usize>,
    pub misleading: Option<usize>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            turnpoint: 11_000,
            rule: 5_000,
            structured: 7_000,
            seed: 0,
            tiers: DifficultyTier::defaults().collect(),
            grid_side: None,
            dead_ends: None,
            misleading: None,
        }
    }
}

impl DatasetConfig {
    pub fn family_quotas(&self) -> BTreeMap<Family, usize> {
        let rp = self.structured.div_ceil(2);
        BTreeMap::from([
            (Family::RoutePlanning, rp),
            (Family::NextStep, self.structured - rp),
            (Family::Turnpoint, self.turnpoint),
            (Family::Rule, self.rule),
        ])
    }

    /// Per-tier share of `total`, remainder to the lowest tiers.
    pub fn tier_quota(&self, total: usize, tier_pos: usize) -> usize {
        let n = self.tiers.len();
        total / n + usize::from(tier_pos < total % n)
    }

    pub fn gen_config(&self, tier: DifficultyTier, seed: u64) -> GenConfig {
        let mut cfg = GenConfig::for_tier(tier, seed);
        if let Some(s) = self.grid_side {
            cfg.grid_side = s.max(tier.base_turns() + 4);
        }
        if let Some(d) = self.dead_ends {
            cfg.dead_end_count = d;
        }
        if let Some(m) = self.misleading {
            cfg.misleading_count = m;
        }
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StratumCounts {
    pub family: Family,
    pub tier: u32,
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FamilyCounts {
    pub turnpoint: usize,
    pub rule: usize,
    pub structured: usize,
    pub route_planning: usize,
    pub next_step: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub tiers: Vec<u32>,
    pub counts: FamilyCounts,
    pub split_sizes: BTreeMap<Split, usize>,
    pub strata: Vec<StratumCounts>,
    pub assignment: BTreeMap<String, Split>,
}

/// Stratum sizes: `round(0.8 n)` train, `round(0.1 n)` val, the rest test.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let train = (n * 8 + 5) / 10;
    let val = ((n + 5) / 10).min(n - train);
    (train, val, n - train - val)
}

/// Builds every instance in memory, splits assigned.
pub fn build_instances(
    cfg: &DatasetConfig,
) -> Result<(Vec<TaskInstance>, DatasetManifest), DatasetError> {
    if cfg.tiers.is_empty() {
        return Err(DatasetError::InvalidConfig(
            "at least one tier is required".into(),
        ));
    }
    let quotas = cfg.family_quotas();

    let mut instances: Vec<TaskInstance> = Vec::new();
    let mut strata = Vec::new();
    let mut assignment = BTreeMap::new();

    for (pos, &tier) in cfg.tiers.iter().enumerate() {
        let pool_size = quotas
            .values()
            .map(|q| cfg.tier_quota(*q, pos))
            .max()
            .unwrap_or(0);
        let tier_seed = mix_seed(cfg.seed, u64::from(tier.k()));
        let pool: Vec<Maze> = (0..pool_size)
            .into_par_iter()
            .map(|j| generate_with_fallback(cfg, tier, tier_seed, j as u64))
            .collect::<Result<_, _>>()?;

        for (&family, &quota) in &quotas {
            let n = cfg.tier_quota(quota, pos);
            let mut batch = build_family(cfg, family, tier, tier_seed, &pool, n)?;
            let (train, val, test) = split_sizes(batch.len());
            let mut order: Vec<usize> = (0..batch.len()).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(tier_seed, 0x5_0000 + family as u64));
            order.shuffle(&mut rng);
            for (rank, &i) in order.iter().enumerate() {
                let split = if rank < train {
                    Split::Train
                } else if rank < train + val {
                    Split::Val
                } else {
                    Split::Test
                };
                batch[i].split = Some(split);
                assignment.insert(batch[i].id.clone(), split);
            }
            strata.push(StratumCounts {
                family,
                tier: tier.k(),
                train,
                val,
                test,
            });
            instances.extend(batch);
        }
    }

    let count = |f: Family| instances.iter().filter(|i| i.family == f).count();
    let counts = FamilyCounts {
        turnpoint: count(Family::Turnpoint),
        rule: count(Family::Rule),
        structured: count(Family::RoutePlanning) + count(Family::NextStep),
        route_planning: count(Family::RoutePlanning),
        next_step: count(Family::NextStep),
        total: instances.len(),
    };
    let mut split_sizes = BTreeMap::new();
    for s in assignment.values() {
        *split_sizes.entry(*s).or_insert(0) += 1;
    }
    let manifest = DatasetManifest {
        seed: cfg.seed,
        tiers: cfg.tiers.iter().map(|t| t.k()).collect(),
        counts,
        split_sizes,
        strata,
        assignment,
    };
    Ok((instances, manifest))
}

fn generate_with_fallback(
    cfg: &DatasetConfig,
    tier: DifficultyTier,
    tier_seed: u64,
    j: u64,
) -> Result<Maze, GenError> {
    let mut last = None;
    for retry in 0..4u64 {
        let seed = mix_seed(tier_seed, j + (retry << 40));
        match generate(&cfg.gen_config(tier, seed)) {
            Ok(m) => return Ok(m),
            Err(e) => last = Some(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

fn build_family(
    cfg: &DatasetConfig,
    family: Family,
    tier: DifficultyTier,
    tier_seed: u64,
    pool: &[Maze],
    n: usize,
) -> Result<Vec<TaskInstance>, DatasetError> {
    let infeasible = |reason: String| DatasetError::QuotaInfeasible {
        family,
        tier: tier.k(),
        reason,
    };
    let mut out = Vec::with_capacity(n);
    // Running count of binary questions, alternated for exact polarity balance.
    let mut binary = 0usize;
    let mut spare = 0u64;
    for j in 0..n {
        let mut maze = pool[j % pool.len().max(1)].clone();
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(maze.seed(), 0x7_0000 + family as u64));
        let built = loop {
            let attempt = match family {
                Family::RoutePlanning => build_route_planning(&maze),
                Family::NextStep => build_next_step_sampled(&maze, &mut rng),
                Family::Turnpoint => {
                    let template = if j % 2 == 0 {
                        TurnpointTemplate::IsTurnPoint {
                            positive: binary.is_multiple_of(2),
                        }
                    } else {
                        TurnpointTemplate::CountTurns
                    };
                    build_turnpoint_qa_with(&maze, template, &mut rng)
                }
                Family::Rule => {
                    let template = [
                        RuleTemplate::MoveValidity,
                        RuleTemplate::Constraint,
                        RuleTemplate::Reachability,
                    ][j % 3];
                    build_rule_qa_with(&maze, template, binary.is_multiple_of(2), &mut rng)
                }
            };
            match attempt {
                Ok(inst) => break inst,
                Err(TaskError::Skip(_)) | Err(TaskError::Infeasible) if spare < 64 => {
                    // Replace the maze with a spare from the same tier.
                    spare += 1;
                    maze = generate_with_fallback(
                        cfg,
                        tier,
                        mix_seed(tier_seed, 0xFFFF_0000 + spare),
                        j as u64,
                    )?;
                }
                Err(e) => return Err(infeasible(e.to_string())),
            }
        };
        if built.binary_truth().is_some() {
            binary += 1;
        }
        let mut inst = built;
        inst.id = format!("{}-k{}-{:05}", family.abbrev(), tier.k(), j);
        out.push(inst);
    }
    Ok(out)
}

/// Builds the dataset and writes `train.jsonl`, `val.jsonl`, `test.jsonl`
/// and `manifest.json` into `out_dir`.
pub fn build_dataset(cfg: &DatasetConfig, out_dir: &Path) -> Result<DatasetManifest, DatasetError> {
    let (instances, manifest) = build_instances(cfg)?;
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    for split in Split::ALL {
        let path = out_dir.join(format!("{}.jsonl", split.as_str()));
        let file = fs::File::create(&path).map_err(io_err(&path))?;
        let mut w = BufWriter::new(file);
        for inst in instances.iter().filter(|i| i.split == Some(split)) {
            serde_json::to_writer(&mut w, inst).map_err(|e| DatasetError::Io {
                path: path.clone(),
                source: e.into(),
            })?;
            w.write_all(b"\n").map_err(io_err(&path))?;
        }
        w.flush().map_err(io_err(&path))?;
    }
    let path = out_dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| DatasetError::Io {
        path: path.clone(),
        source: e.into(),
    })?;
    fs::write(&path, json + "\n").map_err(io_err(&path))?;
    Ok(manifest)
}

/// Reads one split file.
pub fn load_split(dir: &Path, split: Split) -> Result<Vec<TaskInstance>, DatasetError> {
    read_jsonl(&dir.join(format!("{}.jsonl", split.as_str())))
}

/// Reads every split, in train/val/test order.
pub fn load_all(dir: &Path) -> Result<Vec<TaskInstance>, DatasetError> {
    let mut out = Vec::new();
    for split in Split::ALL {
        out.extend(load_split(dir, split)?);
    }
    Ok(out)
}

pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, DatasetError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|source| DatasetError::Record {
                path: path.to_path_buf(),
                line: i + 1,
                source,
            })?,
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::rederive_key;

    fn small() -> DatasetConfig {
        DatasetConfig {
            turnpoint: 60,
            rule: 30,
            structured: 40,
            seed: 3,
            ..DatasetConfig::default()
        }
    }

    #[test]
    fn split_sizes_within_one() {
        for n in 0..500 {
            let (tr, va, te) = split_sizes(n);
            assert_eq!(tr + va + te, n);
            let exact = n as f64;
            assert!((tr as f64 - 0.8 * exact).abs() <= 1.0, "n={n}");
            assert!((va as f64 - 0.1 * exact).abs() <= 1.0, "n={n}");
            assert!((te as f64 - 0.1 * exact).abs() <= 1.0, "n={n}");
        }
    }

    #[test]
    fn quotas_split_structured_evenly() {
        let q = DatasetConfig::default().family_quotas();
        assert_eq!(q[&Family::RoutePlanning], 3500);
        assert_eq!(q[&Family::NextStep], 3500);
        assert_eq!(q.values().sum::<usize>(), 23_000);
    }

    #[test]
    fn small_build_meets_quotas_and_keys() {
        let (insts, manifest) = build_instances(&small()).unwrap();
        assert_eq!(manifest.counts.turnpoint, 60);
        assert_eq!(manifest.counts.rule, 30);
        assert_eq!(manifest.counts.structured, 40);
        assert_eq!(manifest.assignment.len(), insts.len());
        let ids: std::collections::BTreeSet<_> = insts.iter().map(|i| &i.id).collect();
        assert_eq!(ids.len(), insts.len());
        for inst in &insts {
            assert_eq!(rederive_key(inst).unwrap(), inst.answer_key, "{}", inst.id);
            assert!(inst.split.is_some());
        }
    }

    #[test]
    fn write_and_reload() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = build_dataset(&small(), dir.path()).unwrap();
        let all = load_all(dir.path()).unwrap();
        assert_eq!(all.len(), manifest.counts.total);
        let test = load_split(dir.path(), Split::Test).unwrap();
        assert!(test.iter().all(|i| i.split == Some(Split::Test)));
    }
}
