use crate::io::KvMap;
use crate::metrics::MetricReport;

use super::config::Variant;
use super::AttentionDiagnostic;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Csv,
}

impl ReportFormat {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "text" => Some(ReportFormat::Text),
            "csv" => Some(ReportFormat::Csv),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariantResult {
    pub variant: Variant,
    pub metrics: MetricReport,
    /// Per-frame fusion lines; empty for single-pass variants.
    pub fusion_lines: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub version: String,
    pub seed: u64,
    pub num_frames: usize,
    pub tau: f64,
    pub saliency_auc: Option<f64>,
    /// Absent when passes were loaded from files.
    pub attention: Option<AttentionDiagnostic>,
    pub variants: Vec<VariantResult>,
    /// Wall-clock per stage. Kept out of the rendered report so output trees
    /// stay byte-identical across runs.
    pub timings_ms: Vec<(&'static str, f64)>,
    pub config_echo: KvMap,
}

const SCOPE_NOTE: &str =
    "pass-2 depth error follows the declared noise profile; key suppression changes only the cue diagnostics";

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "na".to_string(), |x| x.to_string())
}

impl RunReport {
    pub fn variant(&self, v: &Variant) -> Option<&MetricReport> {
        self.variants.iter().find(|r| r.variant == *v).map(|r| &r.metrics)
    }

    pub fn render(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Text => self.render_text(),
            ReportFormat::Csv => self.render_csv(),
        }
    }

    fn render_text(&self) -> String {
        let mut out = String::from("# dyn4d run report\n");
        out.push_str(&format!("# {SCOPE_NOTE}\n"));
        out.push_str(&format!("version={}\n", self.version));
        out.push_str(&format!("seed={}\n", self.seed));
        out.push_str(&format!("frames={}\n", self.num_frames));
        out.push_str(&format!("tau={}\n", self.tau));
        out.push_str(&format!("saliency_auc={}\n", opt(self.saliency_auc)));
        let a = self.attention.as_ref();
        out.push_str(&format!("attention_mass_before={}\n", opt(a.map(|a| a.mean_before))));
        out.push_str(&format!("attention_mass_after={}\n", opt(a.map(|a| a.mean_after))));
        if let Some(a) = a {
            out.push_str(&format!(
                "attention_pairs_reduced={}/{}\n",
                a.before.len() - a.non_decreasing_pairs().len(),
                a.before.len()
            ));
        }
        out.push_str("\n[variants]\n");
        out.push_str(&format!("variant\tpose\t{}\n", MetricReport::tsv_header()));
        for r in &self.variants {
            out.push_str(&format!(
                "{}\t{}\t{}\n",
                r.variant.depth.name(),
                r.variant.pose.name(),
                r.metrics.to_tsv()
            ));
        }
        out.push_str("\n[config]\n");
        for (k, v) in &self.config_echo {
            out.push_str(&format!("{k}={v}\n"));
        }
        out
    }

    fn render_csv(&self) -> String {
        let mut out = format!(
            "variant,pose,{},tau,saliency_auc,attention_mass_before,attention_mass_after,seed,version\n",
            MetricReport::NAMES.join(",")
        );
        let a = self.attention.as_ref();
        for r in &self.variants {
            let metrics: Vec<String> = r.metrics.values().iter().map(|v| v.to_string()).collect();
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.variant.depth.name(),
                r.variant.pose.name(),
                metrics.join(","),
                self.tau,
                opt(self.saliency_auc),
                opt(a.map(|a| a.mean_before)),
                opt(a.map(|a| a.mean_after)),
                self.seed,
                self.version
            ));
        }
        out
    }

    /// One line per stage, for stderr.
    pub fn timing_lines(&self) -> Vec<String> {
        self.timings_ms
            .iter()
            .map(|(s, ms)| format!("{s}: {ms:.1} ms"))
            .collect()
    }
}
