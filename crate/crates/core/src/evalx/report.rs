//! Result tables and boxplots.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{
    e_minus, e_plus, mse_mbps2, score, EvalError, LegScore, StepRecord, BOOTSTRAP_RESAMPLES,
    BPS_PER_MBPS,
};

pub const REPORT_FILE: &str = "report.csv";
pub const REPORT_COLUMNS: [&str; 8] = [
    "family",
    "policy",
    "mse_mbps2",
    "e_plus",
    "e_minus",
    "score",
    "ci_low",
    "ci_high",
];

/// Everything measured for one policy on one scenario family.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilyResult {
    pub family: String,
    pub policy: String,
    pub records: Vec<StepRecord>,
    pub legs: Vec<LegScore>,
    /// Per-step `r_audio + r_video`.
    pub rewards: Vec<f64>,
}

/// Percentile with linear interpolation between order statistics of
/// `sorted` (ascending), `p` in percent.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let pos = (p / 100.0).clamp(0.0, 1.0) * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            let frac = pos - lo as f64;
            sorted[lo] + (sorted[hi] - sorted[lo]) * frac
        }
    }
}

/// Whiskers at the 10th and 90th percentiles, box at the quartiles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxStats {
    pub p10: f64,
    pub p25: f64,
    pub median: f64,
    pub p75: f64,
    pub p90: f64,
}

impl BoxStats {
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Some(Self {
            p10: percentile(&v, 10.0),
            p25: percentile(&v, 25.0),
            median: percentile(&v, 50.0),
            p75: percentile(&v, 75.0),
            p90: percentile(&v, 90.0),
        })
    }
}

pub fn write_report_csv<W: Write>(
    mut out: W,
    results: &[FamilyResult],
    seed: u64,
) -> Result<(), EvalError> {
    let io = |source| EvalError::Io {
        path: PathBuf::from(REPORT_FILE),
        source,
    };
    writeln!(out, "{}", REPORT_COLUMNS.join(",")).map_err(io)?;
    for r in results {
        let s = score(&r.legs, BOOTSTRAP_RESAMPLES, seed)?;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.family,
            r.policy,
            mse_mbps2(&r.records)?,
            e_plus(&r.records)?,
            e_minus(&r.records)?,
            s.s,
            s.ci_low,
            s.ci_high
        )
        .map_err(io)?;
    }
    Ok(())
}

type MetricFn = fn(&FamilyResult) -> Vec<f64>;

const PLOTTED: [(&str, &str, MetricFn); 4] = [
    ("receiving_rate", "receiving rate (Mbps)", |r| {
        r.records
            .iter()
            .map(|s| s.receiving_rate_bps / BPS_PER_MBPS)
            .collect()
    }),
    ("queuing_delay", "queuing delay (ms)", |r| {
        r.records.iter().map(|s| s.queuing_delay_ms).collect()
    }),
    ("loss", "loss ratio", |r| {
        r.records.iter().map(|s| s.loss_ratio).collect()
    }),
    ("reward", "r_audio + r_video", |r| r.rewards.clone()),
];

/// One box per labelled series.
pub fn boxplot_svg(title: &str, y_label: &str, series: &[(String, Vec<f64>)]) -> String {
    let boxes: Vec<(&str, Option<BoxStats>)> = series
        .iter()
        .map(|(name, v)| (name.as_str(), BoxStats::from_values(v)))
        .collect();
    let (mut lo, mut hi) = boxes
        .iter()
        .filter_map(|(_, b)| *b)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), b| {
            (lo.min(b.p10), hi.max(b.p90))
        });
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1e-9 {
        hi = lo + 1.0;
    }
    let pad = 0.05 * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);

    let slot = 110.0;
    let (left, top, plot_h) = (70.0, 40.0, 260.0);
    let width = left + slot * boxes.len().max(1) as f64 + 20.0;
    let height = top + plot_h + 60.0;
    let y = |v: f64| top + plot_h * (hi - v) / (hi - lo);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        width / 2.0,
        escape(title)
    );
    let _ = writeln!(
        svg,
        r#"<text x="15" y="{:.1}" transform="rotate(-90 15 {:.1})" text-anchor="middle">{}</text>"#,
        top + plot_h / 2.0,
        top + plot_h / 2.0,
        escape(y_label)
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{left}" y1="{top}" x2="{left}" y2="{:.1}" stroke="black"/>"#,
        top + plot_h
    );
    for k in 0..=4 {
        let v = lo + (hi - lo) * k as f64 / 4.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{:.1}" y1="{:.2}" x2="{left}" y2="{:.2}" stroke="black"/><text x="{:.1}" y="{:.2}" text-anchor="end">{}</text>"#,
            left - 5.0,
            y(v),
            y(v),
            left - 8.0,
            y(v) + 4.0,
            tick(v)
        );
    }
    for (i, (name, b)) in boxes.iter().enumerate() {
        let cx = left + slot * (i as f64 + 0.5);
        let half = 25.0;
        if let Some(b) = b {
            let _ = writeln!(
                svg,
                r#"<line x1="{cx:.1}" y1="{:.2}" x2="{cx:.1}" y2="{:.2}" stroke="black"/>"#,
                y(b.p90),
                y(b.p10)
            );
            for w in [b.p10, b.p90] {
                let _ = writeln!(
                    svg,
                    r#"<line x1="{:.1}" y1="{:.2}" x2="{:.1}" y2="{:.2}" stroke="black"/>"#,
                    cx - half / 2.0,
                    y(w),
                    cx + half / 2.0,
                    y(w)
                );
            }
            let _ = writeln!(
                svg,
                r##"<rect x="{:.1}" y="{:.2}" width="{:.1}" height="{:.2}" fill="#9ecae1" stroke="black"/>"##,
                cx - half,
                y(b.p75),
                2.0 * half,
                (y(b.p25) - y(b.p75)).max(0.5)
            );
            let _ = writeln!(
                svg,
                r#"<line x1="{:.1}" y1="{:.2}" x2="{:.1}" y2="{:.2}" stroke="black" stroke-width="2"/>"#,
                cx - half,
                y(b.median),
                cx + half,
                y(b.median)
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{cx:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            top + plot_h + 20.0,
            escape(name)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn tick(v: f64) -> String {
    if v.abs() >= 100.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Write `report.csv` and one `<family>_<metric>.svg` per family and
/// plotted metric. Returns the written paths.
pub fn report(
    results: &[FamilyResult],
    outdir: impl AsRef<Path>,
    seed: u64,
) -> Result<Vec<PathBuf>, EvalError> {
    if results.is_empty() {
        return Err(EvalError::Empty);
    }
    let dir = outdir.as_ref();
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| EvalError::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let mut written = Vec::new();

    let csv_path = dir.join(REPORT_FILE);
    let mut buf = Vec::new();
    write_report_csv(&mut buf, results, seed)?;
    std::fs::write(&csv_path, buf).map_err(io(&csv_path))?;
    written.push(csv_path);

    let mut families: Vec<&str> = Vec::new();
    for r in results {
        if !families.contains(&r.family.as_str()) {
            families.push(&r.family);
        }
    }
    for family in families {
        let rows: Vec<&FamilyResult> = results.iter().filter(|r| r.family == family).collect();
        for (metric, label, extract) in PLOTTED {
            let series: Vec<(String, Vec<f64>)> = rows
                .iter()
                .map(|r| (r.policy.clone(), extract(r)))
                .collect();
            let svg = boxplot_svg(&format!("{family}: {metric}"), label, &series);
            let path = dir.join(format!("{family}_{metric}.svg"));
            std::fs::write(&path, svg).map_err(io(&path))?;
            written.push(path);
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result(policy: &str) -> FamilyResult {
        FamilyResult {
            family: "low_bw".into(),
            policy: policy.into(),
            records: vec![
                StepRecord::accuracy(2e6, 1e6),
                StepRecord::accuracy(1e6, 1e6),
            ],
            legs: vec![LegScore {
                mean_audio: 4.0,
                mean_video: 3.0,
                steps: 2,
            }],
            rewards: vec![7.0, 7.0],
        }
    }

    #[test]
    fn percentile_interpolates() {
        let v: Vec<f64> = (0..=10).map(f64::from).collect();
        assert_eq!(percentile(&v, 10.0), 1.0);
        assert_eq!(percentile(&v, 90.0), 9.0);
        assert_eq!(percentile(&[0.0, 1.0], 25.0), 0.25);
        let b = BoxStats::from_values(&(1..=100).map(f64::from).collect::<Vec<_>>()).unwrap();
        assert!((b.p10 - 10.9).abs() < 1e-12 && (b.p90 - 90.1).abs() < 1e-12);
    }

    #[test]
    fn one_row_per_result() {
        let mut buf = Vec::new();
        write_report_csv(&mut buf, &[result("oracle")], 0).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], REPORT_COLUMNS.join(","));
        assert_eq!(lines[1], "low_bw,oracle,0.5,0.5,0,7,7,7");
    }

    #[test]
    fn files_are_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let results = [result("a"), result("b")];
        let paths = report(&results, dir.path(), 3).unwrap();
        assert_eq!(paths.len(), 5);
        assert!(dir.path().join("low_bw_receiving_rate.svg").exists());
        let first: Vec<Vec<u8>> = paths.iter().map(|p| std::fs::read(p).unwrap()).collect();
        report(&results, dir.path(), 3).unwrap();
        let second: Vec<Vec<u8>> = paths.iter().map(|p| std::fs::read(p).unwrap()).collect();
        assert_eq!(first, second);
    }

    #[test]
    fn unwritable_dir_errors() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("f");
        std::fs::write(&file, "x").unwrap();
        assert!(matches!(
            report(&[result("a")], file.join("sub"), 0),
            Err(EvalError::Io { .. })
        ));
    }
}
