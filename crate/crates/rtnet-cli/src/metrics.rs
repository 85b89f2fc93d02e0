//! CSV artifacts: the per-step metrics log and the retention report.
//!
//! `metrics.csv` has a fixed header and one row per training step plus
//! one summary row per episode (`batch` = 0), giving `L·(N+1)` data rows.
//! Step rows leave `accuracy` blank; summary rows leave the step-only
//! columns blank. Floats are printed with 6 significant digits, except
//! the `wall_clock` column (elapsed seconds), which is the one
//! non-deterministic column in the file.

use std::time::Instant;

use rtnet_core::train::{EpisodeMetrics, StepMetrics, TrainObserver};

pub const METRICS_HEADER: &str = "episode,batch,epsilon,n_selected,reward,return,\
source_ce,target_entropy,coral,mean_value,accuracy,wall_clock";

/// `%.6g`-style formatting: 6 significant digits, fixed-point for
/// moderate exponents, scientific otherwise, trailing zeros trimmed.
pub fn fmt6(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let exponent = x.abs().log10().floor() as i32;
    if (-4..6).contains(&exponent) {
        let decimals = (5 - exponent).max(0) as usize;
        let s = format!("{x:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        let s = format!("{x:.5e}");
        // Trim trailing zeros in the mantissa: 1.20000e-7 → 1.2e-7.
        match s.split_once('e') {
            Some((mantissa, exp)) => {
                let mantissa = mantissa.trim_end_matches('0').trim_end_matches('.');
                format!("{mantissa}e{exp}")
            }
            None => s,
        }
    }
}

/// Collects metrics rows during training; call [`MetricsWriter::into_csv`]
/// afterwards for the file body.
pub struct MetricsWriter {
    rows: Vec<String>,
    start: Instant,
}

impl MetricsWriter {
    pub fn new() -> Self {
        MetricsWriter {
            rows: vec![METRICS_HEADER.to_string()],
            start: Instant::now(),
        }
    }

    fn elapsed(&self) -> String {
        fmt6(self.start.elapsed().as_secs_f64())
    }

    pub fn into_csv(self) -> String {
        let mut body = self.rows.join("\n");
        body.push('\n');
        body
    }

    /// Data rows written so far (header excluded).
    pub fn row_count(&self) -> usize {
        self.rows.len() - 1
    }
}

impl Default for MetricsWriter {
    fn default() -> Self {
        Self::new()
    }
}

impl TrainObserver for MetricsWriter {
    fn on_step(&mut self, m: &StepMetrics) {
        self.rows.push(format!(
            "{},{},{},{},{},{},{},{},{},{},,{}",
            m.episode,
            m.batch,
            fmt6(m.epsilon),
            m.n_selected,
            fmt6(m.reward),
            fmt6(m.discounted_return),
            fmt6(m.source_ce),
            fmt6(m.target_entropy),
            fmt6(m.coral),
            fmt6(m.mean_value),
            self.elapsed(),
        ));
    }

    fn on_episode(&mut self, m: &EpisodeMetrics) {
        self.rows.push(format!(
            "{},0,{},,{},,,,,,{},{}",
            m.episode,
            fmt6(m.epsilon),
            fmt6(m.mean_reward),
            fmt6(m.accuracy),
            self.elapsed(),
        ));
    }
}

/// Renders the per-class retention report as CSV.
pub fn retention_csv(report: &[(usize, f64)]) -> String {
    let mut out = String::from("class,mean_keep_probability\n");
    for &(class, keep) in report {
        out.push_str(&format!("{class},{}\n", fmt6(keep)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fmt6_significant_digits() {
        assert_eq!(fmt6(0.0), "0");
        assert_eq!(fmt6(1.0), "1");
        assert_eq!(fmt6(0.5), "0.5");
        assert_eq!(fmt6(1.0 / 3.0), "0.333333");
        assert_eq!(fmt6(123456.789), "123457");
        assert_eq!(fmt6(1234567.0), "1.23457e6");
        assert_eq!(fmt6(0.000012345678), "1.23457e-5");
        assert_eq!(fmt6(-2.5e-7), "-2.5e-7");
        assert_eq!(fmt6(0.1353352832), "0.135335");
    }

    #[test]
    fn writer_emits_step_and_summary_rows() {
        let mut writer = MetricsWriter::new();
        writer.on_step(&StepMetrics {
            episode: 1,
            batch: 1,
            epsilon: 1.0,
            n_selected: 32,
            reward: 0.5,
            discounted_return: 0.9,
            source_ce: 1.79,
            target_entropy: 1.0,
            coral: 2.0,
            mean_value: 0.1,
        });
        writer.on_episode(&EpisodeMetrics {
            episode: 1,
            epsilon: 1.0,
            mean_reward: 0.5,
            accuracy: 0.75,
        });
        assert_eq!(writer.row_count(), 2);
        let csv = writer.into_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], METRICS_HEADER);
        assert!(lines[1].starts_with("1,1,1,32,0.5,0.9,1.79,1,2,0.1,,"));
        assert!(lines[2].starts_with("1,0,1,,0.5,,,,,,0.75,"));
        // Every row has the full column count.
        for line in &lines {
            assert_eq!(line.matches(',').count(), 11, "{line}");
        }
    }

    #[test]
    fn retention_csv_shape() {
        let csv = retention_csv(&[(0, 0.9), (1, 0.25)]);
        assert_eq!(csv, "class,mean_keep_probability\n0,0.9\n1,0.25\n");
    }
}
