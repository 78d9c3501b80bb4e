//! Dataset statistics over the curated set and the category breakdown.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::client::{Classifier, ClientError};
use crate::config::PipelineConfig;
use crate::manifest::{Category, Stage, VideoRecord};

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("cannot classify an empty caption")]
    EmptyCaption,
    #[error("classifier returned label `{0}` outside the category set")]
    UnknownLabel(String),
    #[error("unknown report format `{0}` (expected csv, json or markdown)")]
    UnknownFormat(String),
    #[error(transparent)]
    Client(#[from] ClientError),
}

/// Top-1 zero-shot label over the eight category names.
pub fn classify_category(caption: &str, classifier: &dyn Classifier) -> Result<Category, StatsError> {
    if caption.trim().is_empty() {
        return Err(StatsError::EmptyCaption);
    }
    let labels: Vec<&str> = Category::ALL.iter().map(|c| c.as_str()).collect();
    let ranked = classifier.rank(caption, &labels)?;
    let (top, _) = ranked
        .into_iter()
        .next()
        .ok_or_else(|| ClientError::Protocol("classifier returned no labels".into()))?;
    Category::from_label(&top).ok_or(StatsError::UnknownLabel(top))
}

/// Fixed-width bins from 0 plus one overflow bin for values at or above `max`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub bin_width: f64,
    pub max: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn new(bin_width: f64, max: f64) -> Self {
        let bins = (max / bin_width).ceil() as usize;
        Self {
            bin_width,
            max,
            counts: vec![0; bins + 1],
        }
    }

    pub fn add(&mut self, value: f64) {
        let last = self.counts.len() - 1;
        let i = if value >= self.max {
            last
        } else {
            ((value.max(0.0) / self.bin_width).floor() as usize).min(last - 1)
        };
        self.counts[i] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// `(label, count)` per bin, e.g. `("10-15", 3)` and `(">=60", 1)`.
    pub fn labeled(&self) -> Vec<(String, u64)> {
        let last = self.counts.len() - 1;
        self.counts
            .iter()
            .enumerate()
            .map(|(i, &n)| {
                let label = if i == last {
                    format!(">={}", self.max)
                } else {
                    let hi = ((i + 1) as f64 * self.bin_width).min(self.max);
                    format!("{}-{}", i as f64 * self.bin_width, hi)
                };
                (label, n)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Distribution {
    pub count: usize,
    pub mean: Option<f64>,
    pub median: Option<f64>,
    pub histogram: Histogram,
}

impl Distribution {
    fn from_values(mut values: Vec<f64>, mut histogram: Histogram) -> Self {
        for &v in &values {
            histogram.add(v);
        }
        let count = values.len();
        let mean = (count > 0).then(|| values.iter().sum::<f64>() / count as f64);
        values.sort_by(f64::total_cmp);
        let median = match count {
            0 => None,
            n if n % 2 == 1 => Some(values[n / 2]),
            n => Some((values[n / 2 - 1] + values[n / 2]) / 2.0),
        };
        Self {
            count,
            mean,
            median,
            histogram,
        }
    }
}

/// Human-study aggregates that can be attached to a report.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct ReviewSummary {
    pub long_take_rate: Option<f64>,
    pub dynamic_degree_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetStats {
    /// True when no record passed captioning; every other field is then zero or absent.
    pub empty: bool,
    pub manifest_records: usize,
    pub count: usize,
    pub duration_s: Distribution,
    pub word_count: Distribution,
    /// Motion scores of curated videos longer than the duration gate.
    pub flow_score: Distribution,
    pub category_histogram: BTreeMap<Category, u64>,
    pub uncategorized: u64,
    pub long_take_rate: Option<f64>,
    pub dynamic_degree_mean: Option<f64>,
}

/// Statistics over records whose caption stage passed.
pub fn compute_stats(records: &[VideoRecord], cfg: &PipelineConfig, review: Option<ReviewSummary>) -> DatasetStats {
    let curated: Vec<&VideoRecord> = records.iter().filter(|r| r.is_curated()).collect();
    let durations = curated.iter().map(|r| r.duration_s).collect();
    let words = curated
        .iter()
        .filter_map(|r| r.caption.as_ref())
        .map(|c| c.word_count as f64)
        .collect();
    let flows = curated
        .iter()
        .filter(|r| r.duration_s > cfg.min_duration_s)
        .filter_map(|r| r.verdict(Stage::Motion).and_then(|v| v.score))
        .collect();
    let mut category_histogram: BTreeMap<Category, u64> = Category::ALL.iter().map(|&c| (c, 0)).collect();
    let mut uncategorized = 0;
    for r in &curated {
        match r.category {
            Some(c) => *category_histogram.entry(c).or_default() += 1,
            None => uncategorized += 1,
        }
    }
    let review = review.unwrap_or_default();
    DatasetStats {
        empty: curated.is_empty(),
        manifest_records: records.len(),
        count: curated.len(),
        duration_s: Distribution::from_values(durations, Histogram::new(cfg.duration_bin_s, cfg.duration_bin_max)),
        word_count: Distribution::from_values(words, Histogram::new(cfg.word_bin, cfg.word_bin_max)),
        flow_score: Distribution::from_values(flows, Histogram::new(cfg.flow_bin, cfg.flow_bin_max)),
        category_histogram,
        uncategorized,
        long_take_rate: review.long_take_rate,
        dynamic_degree_mean: review.dynamic_degree_mean,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = StatsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(StatsError::UnknownFormat(other.to_string())),
        }
    }
}

fn one_decimal(v: Option<f64>, suffix: &str) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.1}{suffix}"))
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| format!("{v}"))
}

/// Flat `metric,value` rows in a fixed order.
fn csv_rows(s: &DatasetStats) -> Vec<(String, String)> {
    let mut rows = vec![
        ("empty".to_string(), s.empty.to_string()),
        ("manifest_records".into(), s.manifest_records.to_string()),
        ("count".into(), s.count.to_string()),
        ("duration_mean_s".into(), opt(s.duration_s.mean)),
        ("duration_median_s".into(), opt(s.duration_s.median)),
        ("word_count_mean".into(), opt(s.word_count.mean)),
        ("flow_count".into(), s.flow_score.count.to_string()),
        ("flow_mean".into(), opt(s.flow_score.mean)),
        ("long_take_rate".into(), opt(s.long_take_rate)),
        ("dynamic_degree_mean".into(), opt(s.dynamic_degree_mean)),
    ];
    for (c, n) in &s.category_histogram {
        rows.push((format!("category_{}", c.as_str()), n.to_string()));
    }
    rows.push(("uncategorized".into(), s.uncategorized.to_string()));
    for (prefix, h) in [
        ("duration_hist", &s.duration_s.histogram),
        ("word_hist", &s.word_count.histogram),
        ("flow_hist", &s.flow_score.histogram),
    ] {
        for (label, n) in h.labeled() {
            rows.push((format!("{prefix}_{label}"), n.to_string()));
        }
    }
    rows
}

pub fn render_report(stats: &DatasetStats, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let mut out = serde_json::to_string_pretty(stats).expect("stats serialize");
            out.push('\n');
            out
        }
        ReportFormat::Csv => {
            let mut out = String::from("metric,value\n");
            for (k, v) in csv_rows(stats) {
                let _ = writeln!(out, "{k},{v}");
            }
            out
        }
        ReportFormat::Markdown => render_markdown(stats),
    }
}

fn render_markdown(s: &DatasetStats) -> String {
    let mut out = String::from("# Dataset statistics\n\n");
    if s.empty {
        let _ = writeln!(out, "No curated videos ({} manifest records).", s.manifest_records);
        return out;
    }
    out.push_str("| Videos | Avg duration | Median duration | Avg caption length | Avg optical flow score (>10s) |\n");
    out.push_str("|---:|---:|---:|---:|---:|\n");
    let _ = writeln!(
        out,
        "| {} | {} | {} | {} | {} |",
        s.count,
        one_decimal(s.duration_s.mean, "s"),
        one_decimal(s.duration_s.median, "s"),
        one_decimal(s.word_count.mean, " words"),
        one_decimal(s.flow_score.mean, ""),
    );
    if s.long_take_rate.is_some() || s.dynamic_degree_mean.is_some() {
        out.push_str("\n| Long-take rate | Dynamic degree |\n|---:|---:|\n");
        let _ = writeln!(
            out,
            "| {} | {} |",
            s.long_take_rate.map_or("n/a".into(), |r| format!("{:.1}%", r * 100.0)),
            one_decimal(s.dynamic_degree_mean, "")
        );
    }
    out.push_str("\n## Categories\n\n| Category | Videos |\n|---|---:|\n");
    for (c, n) in &s.category_histogram {
        let _ = writeln!(out, "| {} | {n} |", c.as_str());
    }
    let _ = writeln!(out, "| (uncategorized) | {} |", s.uncategorized);
    for (title, h) in [
        ("Duration (s)", &s.duration_s.histogram),
        ("Caption words", &s.word_count.histogram),
        ("Optical flow score", &s.flow_score.histogram),
    ] {
        let _ = write!(out, "\n## {title}\n\n| Bin | Videos |\n|---|---:|\n");
        for (label, n) in h.labeled() {
            let _ = writeln!(out, "| {label} | {n} |");
        }
    }
    out
}
