use std::fmt::Write as _;
use std::io::Write;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stats::rank_sum_test;
use super::trial::{run_trial, ExperimentCondition, ExperimentMode, TrialOutcome, TrialSettings};
use crate::criteria::reference_coupling;
use crate::error::{Error, Result};
use crate::model::CouplingConfig;

pub const SIGNIFICANCE_LEVEL: f64 = 0.05;
pub const DEFAULT_TRIALS: usize = 20;
pub const STANDARD_STIFFNESSES: [f64; 4] = [18.0, 36.0, 71.0, 142.0];
pub const STANDARD_DELAYS: [f64; 4] = [0.0, 0.084, 0.167, 0.334];

/// Child seed number `index` of `parent`, taken from a dedicated ChaCha
/// stream so that children never overlap.
pub fn derive_seed(parent: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(parent);
    rng.set_stream(index);
    rng.next_u64()
}

/// Unconnected baseline followed by one connected condition per
/// `(stiffness, delay)` cell; condition `i` gets child seed `i` of `base_seed`.
pub fn custom_grid(
    cells: impl IntoIterator<Item = (f64, f64)>,
    trials: usize,
    base_seed: u64,
) -> Result<Vec<ExperimentCondition>> {
    let mut grid = vec![ExperimentCondition::unconnected(
        trials,
        derive_seed(base_seed, 0),
    )?];
    for (i, (k, d)) in cells.into_iter().enumerate() {
        grid.push(ExperimentCondition::connected(
            k,
            d,
            trials,
            derive_seed(base_seed, i as u64 + 1),
        )?);
    }
    Ok(grid)
}

/// Unconnected baseline plus 18/36/71/142 N/m by 0/84/167/334 ms.
pub fn standard_grid(trials: usize, base_seed: u64) -> Result<Vec<ExperimentCondition>> {
    let cells = STANDARD_STIFFNESSES
        .iter()
        .flat_map(|&k| STANDARD_DELAYS.iter().map(move |&d| (k, d)));
    custom_grid(cells, trials, base_seed)
}

/// Unconnected baseline plus `{0.5, 1, 2, 4} K` by `{0, 0.5, 1, 2} D`, where
/// `K` is the critical stiffness of the weakest axis and `D` the tolerable
/// delay at `2K`.
pub fn reference_grid(
    config: &CouplingConfig,
    trials: usize,
    base_seed: u64,
) -> Result<Vec<ExperimentCondition>> {
    let r = reference_coupling(config)?;
    let cells = [0.5, 1.0, 2.0, 4.0].into_iter().flat_map(|kf| {
        [0.0, 0.5, 1.0, 2.0]
            .into_iter()
            .map(move |df| (kf * r.stiffness, df * r.delay))
    });
    custom_grid(cells, trials, base_seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutcome {
    pub condition: ExperimentCondition,
    pub label: String,
    pub trials: Vec<TrialOutcome>,
}

impl ExperimentOutcome {
    pub fn te1(&self) -> Vec<f64> {
        self.trials.iter().map(|t| t.te1).collect()
    }

    pub fn te2(&self) -> Vec<f64> {
        self.trials.iter().map(|t| t.te2).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mark {
    #[serde(rename = "↑")]
    Higher,
    #[serde(rename = "↓")]
    Lower,
    #[serde(rename = "—")]
    Same,
}

impl Mark {
    pub fn symbol(self) -> &'static str {
        match self {
            Mark::Higher => "↑",
            Mark::Lower => "↓",
            Mark::Same => "—",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub u: f64,
    pub p_value: f64,
    pub mark: Mark,
}

/// Compares `sample` against `baseline` with the rank-sum test.
pub fn compare(sample: &[f64], baseline: &[f64]) -> Result<Comparison> {
    let r = rank_sum_test(sample, baseline)?;
    let mark = if r.p_value >= SIGNIFICANCE_LEVEL {
        Mark::Same
    } else if r.first_is_larger(sample.len(), baseline.len()) {
        Mark::Higher
    } else {
        Mark::Lower
    };
    Ok(Comparison {
        u: r.u,
        p_value: r.p_value,
        mark,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionRow {
    pub condition: String,
    pub stiffness_nm: f64,
    pub delay_ms: f64,
    pub te1_mean_mm: f64,
    pub te1_sd_mm: f64,
    pub te2_mean_mm: f64,
    pub te2_sd_mm: f64,
    pub te1_vs_baseline: Comparison,
    pub te2_vs_baseline: Comparison,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolReport {
    pub settings: TrialSettings,
    pub rows: Vec<ConditionRow>,
    pub outcomes: Vec<ExperimentOutcome>,
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Runs every trial of every condition (in parallel) and compares each
/// condition's TE1 and TE2 against the unconnected TE2.
pub fn run_protocol(
    config: &CouplingConfig,
    grid: &[ExperimentCondition],
    settings: &TrialSettings,
) -> Result<ProtocolReport> {
    let baseline = grid
        .iter()
        .position(|c| c.mode == ExperimentMode::Unconnected)
        .ok_or(Error::MissingBaseline)?;
    settings.validate()?;
    for c in grid {
        c.validated()?;
    }

    let jobs: Vec<(usize, usize)> = grid
        .iter()
        .enumerate()
        .flat_map(|(ci, c)| (0..c.trials).map(move |ti| (ci, ti)))
        .collect();
    let results: Vec<TrialOutcome> = jobs
        .par_iter()
        .map(|&(ci, ti)| {
            let c = &grid[ci];
            run_trial(config, settings, c, derive_seed(c.seed, ti as u64), false)
        })
        .collect::<Result<_>>()?;

    let mut results = results.into_iter();
    let outcomes: Vec<ExperimentOutcome> = grid
        .iter()
        .map(|c| ExperimentOutcome {
            condition: *c,
            label: c.label(),
            trials: results.by_ref().take(c.trials).collect(),
        })
        .collect();

    let base_te2 = outcomes[baseline].te2();
    let rows = outcomes
        .iter()
        .map(|o| {
            let (te1, te2) = (o.te1(), o.te2());
            let (m1, s1) = mean_sd(&te1);
            let (m2, s2) = mean_sd(&te2);
            Ok(ConditionRow {
                condition: o.label.clone(),
                stiffness_nm: o.condition.spring(),
                delay_ms: o.condition.delay * 1e3,
                te1_mean_mm: m1 * 1e3,
                te1_sd_mm: s1 * 1e3,
                te2_mean_mm: m2 * 1e3,
                te2_sd_mm: s2 * 1e3,
                te1_vs_baseline: compare(&te1, &base_te2)?,
                te2_vs_baseline: compare(&te2, &base_te2)?,
            })
        })
        .collect::<Result<_>>()?;

    Ok(ProtocolReport {
        settings: settings.clone(),
        rows,
        outcomes,
    })
}

impl ProtocolReport {
    /// Plain-text table of mean ± sd in mm with significance marks.
    pub fn format_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<14} {:>18} {:>18}",
            "condition", "TE1 (mm)", "TE2 (mm)"
        );
        for r in &self.rows {
            let cell = |m: f64, sd: f64, mark: Mark| format!("{m:.2} ± {sd:.2} {}", mark.symbol());
            let _ = writeln!(
                s,
                "{:<14} {:>18} {:>18}",
                r.condition,
                cell(r.te1_mean_mm, r.te1_sd_mm, r.te1_vs_baseline.mark),
                cell(r.te2_mean_mm, r.te2_sd_mm, r.te2_vs_baseline.mark)
            );
        }
        s
    }

    /// One line per trial: `condition,stiffness_Nm,delay_ms,trial,te1_mm,te2_mm`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "condition,stiffness_Nm,delay_ms,trial,te1_mm,te2_mm")?;
        for o in &self.outcomes {
            for (i, t) in o.trials.iter().enumerate() {
                writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    o.label,
                    o.condition.spring(),
                    o.condition.delay * 1e3,
                    i,
                    t.te1 * 1e3,
                    t.te2 * 1e3
                )?;
            }
        }
        Ok(())
    }
}
