//! Run output: `trajectory.csv`, `summary.json` and run comparisons.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::scenarios::{Scenario, ScenarioDescription};
use crate::sim::{metrics, BoxRecord, Metrics, SimConfig, TrajectoryLog};
use crate::Result;

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const COMPARE_FILE: &str = "compare.json";

/// Serializes non-finite floats as `null` and reads `null` back as NaN.
pub(crate) mod nullable {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scenario: ScenarioDescription,
    pub config: SimConfig,
    pub metrics: Metrics,
    pub boxes: Vec<BoxRecord>,
    pub failure: Option<String>,
}

impl RunSummary {
    pub fn new(scenario: &Scenario, config: &SimConfig, log: &TrajectoryLog) -> Self {
        let mut description = scenario.describe();
        description.x0 = config.x0.clone();
        Self {
            scenario: description,
            config: config.clone(),
            metrics: metrics(log, scenario.position_dim),
            boxes: log.boxes.clone(),
            failure: log.failure.clone(),
        }
    }
}

fn csv_header(log: &TrajectoryLog) -> Vec<String> {
    let Some(first) = log.steps.first() else {
        return vec!["t".into()];
    };
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=first.x.len()).map(|i| format!("x{i}")));
    cols.extend((1..=first.u.len()).map(|i| format!("u{i}")));
    let nb = first.h.len();
    let name = |base: &str, i: usize| if nb == 1 { base.to_string() } else { format!("{base}_{}", i + 1) };
    cols.extend((0..nb).map(|i| name("h", i)));
    cols.extend((0..nb).filter(|&i| first.psi1[i].is_some()).map(|i| name("psi1", i)));
    cols.extend(["V", "margin_barrier", "margin_clf"].map(String::from));
    cols
}

/// Writes the log as CSV: `t, x1..xn, u1..um, h[, psi1], V, margin_barrier, margin_clf`.
pub fn write_trajectory<W: Write>(w: W, log: &TrajectoryLog) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(csv_header(log))?;
    let second_order: Vec<bool> = log
        .steps
        .first()
        .map(|s| s.psi1.iter().map(Option::is_some).collect())
        .unwrap_or_default();
    for s in &log.steps {
        let mut row: Vec<String> = Vec::with_capacity(8 + s.x.len() + s.u.len());
        row.push(s.t.to_string());
        row.extend(s.x.iter().chain(&s.u).chain(&s.h).map(f64::to_string));
        row.extend(
            s.psi1
                .iter()
                .zip(&second_order)
                .filter(|(_, &keep)| keep)
                .map(|(p, _)| p.unwrap_or(f64::NAN).to_string()),
        );
        row.extend([s.v, s.margin_barrier, s.margin_clf].map(|v| v.to_string()));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Writes `trajectory.csv` and `summary.json` into `dir`, creating it.
pub fn write_run(dir: &Path, scenario: &Scenario, config: &SimConfig, log: &TrajectoryLog) -> Result<RunSummary> {
    fs::create_dir_all(dir)?;
    write_trajectory(fs::File::create(dir.join(TRAJECTORY_FILE))?, log)?;
    let summary = RunSummary::new(scenario, config, log);
    write_json(&dir.join(SUMMARY_FILE), &summary)?;
    Ok(summary)
}

pub fn read_summary(path: &Path) -> Result<RunSummary> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

pub fn write_summary(path: &Path, summary: &RunSummary) -> Result<()> {
    write_json(path, summary)
}

/// Headline numbers of one run inside a comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunBrief {
    pub scenario: String,
    pub smid: bool,
    pub controller: String,
    #[serde(with = "nullable")]
    pub min_h: f64,
    pub peak_input_inf_first_second: f64,
    pub effort: f64,
    pub final_box_widths: Vec<f64>,
    pub failure: Option<String>,
}

impl RunBrief {
    fn from_summary(s: &RunSummary) -> Self {
        Self {
            scenario: s.scenario.name.to_string(),
            smid: s.config.smid.is_some(),
            controller: serde_json::to_value(s.config.controller)
                .ok()
                .and_then(|v| v.as_str().map(String::from))
                .unwrap_or_default(),
            min_h: s.metrics.min_h,
            peak_input_inf_first_second: s.metrics.peak_input_inf_first_second,
            effort: s.metrics.effort,
            final_box_widths: s.metrics.final_box_widths.clone(),
            failure: s.failure.clone(),
        }
    }
}

/// `b - a` differences, plus the peak-effort ratio `a / b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub a: RunBrief,
    pub b: RunBrief,
    #[serde(with = "nullable")]
    pub delta_min_h: f64,
    pub delta_peak_input_inf_first_second: f64,
    #[serde(with = "nullable")]
    pub peak_input_ratio: f64,
    pub delta_effort: f64,
    pub delta_final_box_widths: Vec<f64>,
}

pub fn compare(a: &RunSummary, b: &RunSummary) -> CompareReport {
    let (ra, rb) = (RunBrief::from_summary(a), RunBrief::from_summary(b));
    let peak_input_ratio = if rb.peak_input_inf_first_second > 0.0 {
        ra.peak_input_inf_first_second / rb.peak_input_inf_first_second
    } else if ra.peak_input_inf_first_second == 0.0 {
        1.0
    } else {
        f64::INFINITY
    };
    CompareReport {
        delta_min_h: rb.min_h - ra.min_h,
        delta_peak_input_inf_first_second: rb.peak_input_inf_first_second - ra.peak_input_inf_first_second,
        peak_input_ratio,
        delta_effort: rb.effort - ra.effort,
        delta_final_box_widths: ra
            .final_box_widths
            .iter()
            .zip(&rb.final_box_widths)
            .map(|(x, y)| y - x)
            .collect(),
        a: ra,
        b: rb,
    }
}

pub fn write_compare(path: &Path, report: &CompareReport) -> Result<()> {
    write_json(path, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::ScenarioName;
    use crate::sim::run;

    fn short_run(name: ScenarioName, smid: bool) -> (Scenario, SimConfig, TrajectoryLog) {
        let s = Scenario::by_name(name);
        let mut c = SimConfig::for_scenario(&s, smid);
        c.horizon = 0.5;
        let log = run(&s, &c).unwrap();
        (s, c, log)
    }

    #[test]
    fn csv_columns() {
        let (_, _, log) = short_run(ScenarioName::Nonlinear2d, false);
        let mut buf = Vec::new();
        write_trajectory(&mut buf, &log).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,x1,x2,u1,h,V,margin_barrier,margin_clf");
        assert_eq!(lines.count(), log.steps.len());

        let (_, _, log) = short_run(ScenarioName::PlanarRobot, false);
        let mut buf = Vec::new();
        write_trajectory(&mut buf, &log).unwrap();
        let header = String::from_utf8(buf).unwrap().lines().next().unwrap().to_string();
        assert_eq!(header, "t,x1,x2,x3,x4,u1,u2,h,psi1,V,margin_barrier,margin_clf");
    }

    #[test]
    fn csv_values_round_trip() {
        let (_, _, log) = short_run(ScenarioName::PlanarRobot, true);
        let mut buf = Vec::new();
        write_trajectory(&mut buf, &log).unwrap();
        let mut rdr = csv::Reader::from_reader(buf.as_slice());
        for (rec, step) in rdr.records().zip(&log.steps) {
            let rec = rec.unwrap();
            let vals: Vec<f64> = rec.iter().map(|s| s.parse().unwrap()).collect();
            assert_eq!(vals[0], step.t);
            assert_eq!(&vals[1..5], step.x.as_slice());
            assert_eq!(vals[8], step.psi1[0].unwrap());
        }
    }

    #[test]
    fn summary_is_byte_stable() {
        let dir = tempfile::tempdir().unwrap();
        let (s, c, log) = short_run(ScenarioName::Nonlinear2d, true);
        let summary = write_run(dir.path(), &s, &c, &log).unwrap();
        let path = dir.path().join(SUMMARY_FILE);
        let first = fs::read(&path).unwrap();
        let back = read_summary(&path).unwrap();
        assert_eq!(back, summary);
        write_summary(&path, &back).unwrap();
        assert_eq!(fs::read(&path).unwrap(), first);
        assert!(dir.path().join(TRAJECTORY_FILE).exists());
    }

    #[test]
    fn identical_runs_compare_to_zero() {
        let (s, c, log) = short_run(ScenarioName::PlanarRobot, true);
        let a = RunSummary::new(&s, &c, &log);
        let r = compare(&a, &a);
        assert_eq!(r.delta_min_h, 0.0);
        assert_eq!(r.delta_effort, 0.0);
        assert_eq!(r.peak_input_ratio, 1.0);
        assert!(r.delta_final_box_widths.iter().all(|&w| w == 0.0));
    }

    #[test]
    fn non_finite_metrics_survive_json() {
        let (s, c, mut log) = short_run(ScenarioName::Nonlinear2d, false);
        log.steps.clear();
        let summary = RunSummary::new(&s, &c, &log);
        let text = serde_json::to_string(&summary).unwrap();
        let back: RunSummary = serde_json::from_str(&text).unwrap();
        assert!(back.metrics.final_state_norm.is_nan());
    }
}
