use rayon::prelude::*;

use crate::metrics::MetricReport;

use super::config::{PipelineConfig, Variant};
use super::report::{ReportFormat, RunReport};
use super::{run_pipeline, PipelineError};

const NUM_METRICS: usize = MetricReport::NAMES.len();

#[derive(Debug, Clone, PartialEq)]
pub struct SeedFailure {
    pub seed: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub variant: Variant,
    /// One entry per seed, `None` where that seed's run failed.
    pub per_seed: Vec<Option<MetricReport>>,
    /// `None` when every seed failed.
    pub median: Option<[f64; NUM_METRICS]>,
    pub iqr: Option<[f64; NUM_METRICS]>,
}

impl AblationRow {
    pub fn label(&self) -> &'static str {
        self.variant.depth.label()
    }

    pub fn failed(&self) -> usize {
        self.per_seed.iter().filter(|m| m.is_none()).count()
    }

    /// Successful per-seed values of one metric, in seed order.
    pub fn values(&self, metric: &str) -> Vec<f64> {
        self.per_seed.iter().flatten().filter_map(|m| m.get(metric)).collect()
    }

    pub fn median_of(&self, metric: &str) -> Option<f64> {
        let i = MetricReport::NAMES.iter().position(|n| *n == metric)?;
        self.median.map(|m| m[i])
    }

    pub fn iqr_of(&self, metric: &str) -> Option<f64> {
        let i = MetricReport::NAMES.iter().position(|n| *n == metric)?;
        self.iqr.map(|m| m[i])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationReport {
    pub seeds: Vec<u64>,
    pub rows: Vec<AblationRow>,
    pub failures: Vec<SeedFailure>,
    /// Saliency AUC per successful seed.
    pub saliency_auc: Vec<Option<f64>>,
}

/// Linear interpolation between closest ranks of sorted data.
pub fn interpolated_quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn aggregate(per_seed: &[Option<MetricReport>]) -> (Option<[f64; NUM_METRICS]>, Option<[f64; NUM_METRICS]>) {
    let ok: Vec<[f64; NUM_METRICS]> = per_seed.iter().flatten().map(|m| m.values()).collect();
    if ok.is_empty() {
        return (None, None);
    }
    let (mut med, mut iqr) = ([0.0; NUM_METRICS], [0.0; NUM_METRICS]);
    for i in 0..NUM_METRICS {
        let mut col: Vec<f64> = ok.iter().map(|v| v[i]).collect();
        col.sort_by(f64::total_cmp);
        med[i] = interpolated_quantile(&col, 0.5);
        iqr[i] = interpolated_quantile(&col, 0.75) - interpolated_quantile(&col, 0.25);
    }
    (Some(med), Some(iqr))
}

/// Runs the pipeline once per seed with every configured variant, in memory,
/// and aggregates median and IQR per metric. Failed seeds are recorded and
/// their cells left empty.
pub fn ablation_sweep(config: &PipelineConfig, seeds: &[u64]) -> Result<AblationReport, PipelineError> {
    if seeds.is_empty() {
        return Err(PipelineError::Config("ablation needs at least one seed".into()));
    }
    config.validate().map_err(PipelineError::Config)?;
    let runs: Vec<Result<RunReport, PipelineError>> = seeds
        .par_iter()
        .map(|&seed| {
            let mut c = config.clone();
            c.seed = seed;
            c.scene.seed = seed;
            c.out_dir = None;
            run_pipeline(&c, ReportFormat::Text)
        })
        .collect();
    let mut failures = Vec::new();
    let mut saliency_auc = Vec::new();
    for (seed, run) in seeds.iter().zip(&runs) {
        match run {
            Ok(r) => saliency_auc.push(r.saliency_auc),
            Err(e) => {
                log::warn!("seed {seed} failed: {e}");
                failures.push(SeedFailure {
                    seed: *seed,
                    message: e.to_string(),
                });
            }
        }
    }
    let rows = config
        .variants
        .iter()
        .map(|v| {
            let per_seed: Vec<Option<MetricReport>> = runs
                .iter()
                .map(|r| r.as_ref().ok().and_then(|r| r.variant(v).copied()))
                .collect();
            let (median, iqr) = aggregate(&per_seed);
            AblationRow {
                variant: *v,
                per_seed,
                median,
                iqr,
            }
        })
        .collect();
    Ok(AblationReport {
        seeds: seeds.to_vec(),
        rows,
        failures,
        saliency_auc,
    })
}

impl AblationReport {
    pub fn row(&self, v: &Variant) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.variant == *v)
    }

    pub fn render(&self, format: ReportFormat) -> String {
        let sep = match format {
            ReportFormat::Text => "\t",
            ReportFormat::Csv => ",",
        };
        let mut header = vec!["row".to_string(), "variant".into(), "ok".into(), "failed".into()];
        for n in MetricReport::NAMES {
            header.push(format!("{n}_median"));
            header.push(format!("{n}_iqr"));
        }
        let mut out = String::new();
        if format == ReportFormat::Text {
            out.push_str(&format!("# ablation over {} seeds\n", self.seeds.len()));
        }
        out.push_str(&header.join(sep));
        out.push('\n');
        for r in &self.rows {
            let mut cells = vec![
                r.label().to_string(),
                r.variant.name(),
                (r.per_seed.len() - r.failed()).to_string(),
                r.failed().to_string(),
            ];
            for i in 0..NUM_METRICS {
                match (r.median, r.iqr) {
                    (Some(m), Some(q)) => {
                        cells.push(m[i].to_string());
                        cells.push(q[i].to_string());
                    }
                    _ => {
                        cells.push("failed".into());
                        cells.push("failed".into());
                    }
                }
            }
            out.push_str(&cells.join(sep));
            out.push('\n');
        }
        if format == ReportFormat::Text {
            for f in &self.failures {
                out.push_str(&format!("# seed {} failed: {}\n", f.seed, f.message));
            }
        }
        out
    }
}
