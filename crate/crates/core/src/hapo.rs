//! Hardware-aware hyperparameter search: a scalarized quality/cell-budget
//! objective, an exhaustive hardware grid and a population search over
//! software settings.

use std::collections::HashMap;
use std::fmt::Debug;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng;

/// Cell budget of one 512×512 macro with headroom for redundancy.
pub const DEFAULT_N_MAX: usize = 250_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    /// Prefer the largest `ω·PSNR/PSNR_max − (1−ω)·N/N_max`.
    Maximize,
    /// Prefer the smallest value of the same expression.
    Minimize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub omega: f64,
    pub psnr_max: f64,
    pub n_max: usize,
    pub orientation: Orientation,
}

impl Objective {
    pub fn new(omega: f64, psnr_max: f64) -> Self {
        Self { omega, psnr_max, n_max: DEFAULT_N_MAX, orientation: Orientation::Maximize }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.omega) {
            return Err(Error::config("omega must lie in [0, 1]"));
        }
        if !(self.psnr_max > 0.0) || self.n_max == 0 || self.n_max > 512 * 512 {
            return Err(Error::config("psnr_max must be positive and n_max within one 512x512 macro"));
        }
        Ok(())
    }

    /// Value the searches maximize; infeasible points score `−∞`.
    pub fn rank_value(&self, psnr: f64, cells: usize) -> f64 {
        let s = objective_score(psnr, cells, self);
        match self.orientation {
            _ if s == f64::NEG_INFINITY => s,
            Orientation::Maximize => s,
            Orientation::Minimize => -s,
        }
    }
}

/// `ω·psnr/PSNR_max − (1−ω)·n_cells/N_max`, or `−∞` when `n_cells > N_max`
/// or the PSNR is not a non-negative number.
pub fn objective_score(psnr: f64, n_cells: usize, obj: &Objective) -> f64 {
    if n_cells > obj.n_max || !(psnr >= 0.0) {
        return f64::NEG_INFINITY;
    }
    obj.omega * psnr / obj.psnr_max - (1.0 - obj.omega) * n_cells as f64 / obj.n_max as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub psnr: f64,
    pub cells: usize,
}

/// Memoizes an evaluator by the SHA-256 of the configuration's debug form.
pub struct CachedEvaluator<C, F> {
    inner: F,
    cache: HashMap<String, Evaluation>,
    pub calls: usize,
    _marker: std::marker::PhantomData<fn(&C)>,
}

pub fn config_hash<C: Debug>(config: &C) -> String {
    hex::encode(Sha256::digest(format!("{config:?}").as_bytes()))
}

impl<C: Debug, F: FnMut(&C) -> Result<Evaluation>> CachedEvaluator<C, F> {
    pub fn new(inner: F) -> Self {
        Self { inner, cache: HashMap::new(), calls: 0, _marker: std::marker::PhantomData }
    }

    pub fn evaluate(&mut self, config: &C) -> Result<Evaluation> {
        let key = config_hash(config);
        if let Some(e) = self.cache.get(&key) {
            return Ok(*e);
        }
        self.calls += 1;
        let e = (self.inner)(config)?;
        self.cache.insert(key, e);
        Ok(e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardwareConfig {
    pub bits: Vec<usize>,
    pub ratio: f64,
}

/// Candidate bit widths for every layer and candidate significance ratios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardwareAxes {
    pub bits: Vec<Vec<usize>>,
    pub ratios: Vec<f64>,
}

impl HardwareAxes {
    /// Every grid point in lexicographic order of axis indices (layer bits
    /// first, ratio last).
    pub fn points(&self) -> Result<Vec<HardwareConfig>> {
        if self.bits.is_empty() || self.bits.iter().any(Vec::is_empty) || self.ratios.is_empty() {
            return Err(Error::config("hardware grid has an empty axis"));
        }
        let mut combos: Vec<Vec<usize>> = vec![Vec::new()];
        for axis in &self.bits {
            combos = combos
                .into_iter()
                .flat_map(|c| axis.iter().map(move |&b| [c.clone(), vec![b]].concat()))
                .collect();
        }
        Ok(combos
            .into_iter()
            .flat_map(|bits| self.ratios.iter().map(move |&ratio| HardwareConfig { bits: bits.clone(), ratio }))
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridRow {
    pub config: HardwareConfig,
    pub psnr: f64,
    pub cells: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub best: HardwareConfig,
    pub best_score: f64,
    pub table: Vec<GridRow>,
}

/// Evaluates every grid point and returns the best feasible one; ties keep
/// the lexicographically first point.
pub fn grid_search(
    axes: &HardwareAxes,
    obj: &Objective,
    mut evaluate: impl FnMut(&HardwareConfig) -> Result<Evaluation>,
) -> Result<GridResult> {
    obj.validate()?;
    let mut table = Vec::new();
    let mut best: Option<usize> = None;
    for config in axes.points()? {
        let e = evaluate(&config)?;
        let score = obj.rank_value(e.psnr, e.cells);
        if score > f64::NEG_INFINITY && best.is_none_or(|b| score > table_score(&table, b)) {
            best = Some(table.len());
        }
        table.push(GridRow { config, psnr: e.psnr, cells: e.cells, score });
    }
    let b = best.ok_or_else(|| Error::config("no feasible hardware configuration"))?;
    Ok(GridResult { best: table[b].config.clone(), best_score: table[b].score, table })
}

fn table_score(table: &[GridRow], i: usize) -> f64 {
    table[i].score
}

/// Search-results CSV: one column per layer width, then ratio, psnr, cells,
/// score and seed.
pub fn grid_csv(result: &GridResult, seed: u64) -> Result<Vec<u8>> {
    let layers = result.table.first().map_or(0, |r| r.config.bits.len());
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = (0..layers).map(|i| format!("bits_{i}")).collect();
    header.extend(["ratio", "psnr", "cells", "score", "seed"].map(String::from));
    w.write_record(&header).map_err(|e| Error::data(e.to_string()))?;
    for r in &result.table {
        let mut rec: Vec<String> = r.config.bits.iter().map(|b| b.to_string()).collect();
        rec.extend([r.config.ratio.to_string(), r.psnr.to_string(), r.cells.to_string(), r.score.to_string(), seed.to_string()]);
        w.write_record(&rec).map_err(|e| Error::data(e.to_string()))?;
    }
    w.into_inner().map_err(|e| Error::data(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftwareConfig {
    pub prune_rate: f64,
    pub rank: usize,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftwareAxes {
    pub prune_rates: Vec<f64>,
    pub ranks: Vec<usize>,
    pub sigmas: Vec<f64>,
}

impl SoftwareAxes {
    fn sizes(&self) -> [usize; 3] {
        [self.prune_rates.len(), self.ranks.len(), self.sigmas.len()]
    }

    pub fn config(&self, idx: [usize; 3]) -> SoftwareConfig {
        SoftwareConfig { prune_rate: self.prune_rates[idx[0]], rank: self.ranks[idx[1]], sigma: self.sigmas[idx[2]] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LineageEntry {
    pub generation: usize,
    pub index: [usize; 3],
    pub parent: Option<[usize; 3]>,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PopulationResult {
    pub best: SoftwareConfig,
    pub best_index: [usize; 3],
    pub best_score: f64,
    pub lineage: Vec<LineageEntry>,
}

/// Successive-halving population search: each generation keeps the better
/// half and refills it with survivors moved one step along a random axis.
pub fn population_search(
    axes: &SoftwareAxes,
    population: usize,
    generations: usize,
    obj: &Objective,
    seed: u64,
    mut evaluate: impl FnMut(&SoftwareConfig) -> Result<Evaluation>,
) -> Result<PopulationResult> {
    obj.validate()?;
    if population < 2 {
        return Err(Error::config("population must be at least 2"));
    }
    let sizes = axes.sizes();
    if sizes.contains(&0) {
        return Err(Error::config("software search has an empty axis"));
    }
    let mut r = rng::stream(seed, 0x7062);
    let mut members: Vec<([usize; 3], Option<[usize; 3]>)> = (0..population)
        .map(|_| ([r.random_range(0..sizes[0]), r.random_range(0..sizes[1]), r.random_range(0..sizes[2])], None))
        .collect();
    let mut lineage = Vec::new();
    let mut best: Option<([usize; 3], f64)> = None;
    let mut scores: HashMap<[usize; 3], f64> = HashMap::new();
    for generation in 0..generations.max(1) {
        let mut scored = Vec::with_capacity(members.len());
        for &(idx, parent) in &members {
            let score = match scores.get(&idx) {
                Some(s) => *s,
                None => {
                    let e = evaluate(&axes.config(idx))?;
                    let s = obj.rank_value(e.psnr, e.cells);
                    scores.insert(idx, s);
                    s
                }
            };
            lineage.push(LineageEntry { generation, index: idx, parent, score });
            let better = match best {
                None => score > f64::NEG_INFINITY,
                Some((bi, bs)) => score > bs || (score == bs && idx < bi),
            };
            if better {
                best = Some((idx, score));
            }
            scored.push((idx, score));
        }
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let keep = population.div_ceil(2);
        let survivors: Vec<[usize; 3]> = scored.iter().take(keep).map(|s| s.0).collect();
        members = survivors.iter().map(|&s| (s, Some(s))).collect();
        let mut k = 0;
        while members.len() < population {
            let parent = survivors[k % survivors.len()];
            let mut child = parent;
            let movable: Vec<usize> = (0..3).filter(|&a| sizes[a] > 1).collect();
            if !movable.is_empty() {
                let axis = movable[r.random_range(0..movable.len())];
                child[axis] = if r.random::<bool>() {
                    (child[axis] + 1).min(sizes[axis] - 1)
                } else {
                    child[axis].saturating_sub(1)
                };
            }
            members.push((child, Some(parent)));
            k += 1;
        }
    }
    let (bi, bs) = best.ok_or_else(|| Error::config("no feasible software configuration"))?;
    Ok(PopulationResult { best: axes.config(bi), best_index: bi, best_score: bs, lineage })
}
