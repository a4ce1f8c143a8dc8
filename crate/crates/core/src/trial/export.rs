//! Flat CSV view of a trial: one row per pass plus one pooled row per subject and side.

use serde::{Deserialize, Serialize};

use super::{Arm, Side, SubjectArm, TrialResult};

pub const TRIAL_CSV_COLUMNS: [&str; 12] = [
    "subject",
    "side",
    "arm",
    "patch",
    "shots",
    "suppressed",
    "duration_s",
    "operable_mm2",
    "union_mm2",
    "exactly_once_mm2",
    "coverage_pct",
    "valid",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialCsvRow {
    pub subject: usize,
    pub side: Side,
    pub arm: Arm,
    /// Patch name, or `pooled`.
    pub patch: String,
    pub shots: usize,
    pub suppressed: usize,
    pub duration_s: f64,
    pub operable_mm2: f64,
    pub union_mm2: f64,
    pub exactly_once_mm2: f64,
    pub coverage_pct: f64,
    pub valid: bool,
}

fn rows_for(subject: usize, a: &SubjectArm, out: &mut Vec<TrialCsvRow>) {
    for p in &a.passes {
        out.push(TrialCsvRow {
            subject,
            side: a.side,
            arm: a.arm,
            patch: p.patch.clone(),
            shots: p.shots,
            suppressed: p.suppressed,
            duration_s: p.duration,
            operable_mm2: p.operable_area,
            union_mm2: p.union_area,
            exactly_once_mm2: p.exactly_once_area,
            coverage_pct: p.coverage_pct,
            valid: p.shots > 0,
        });
    }
    out.push(TrialCsvRow {
        subject,
        side: a.side,
        arm: a.arm,
        patch: "pooled".into(),
        shots: a.shots,
        suppressed: a.passes.iter().map(|p| p.suppressed).sum(),
        duration_s: a.duration,
        operable_mm2: a.passes.iter().map(|p| p.operable_area).sum(),
        union_mm2: a.passes.iter().map(|p| p.union_area).sum(),
        exactly_once_mm2: a.passes.iter().map(|p| p.exactly_once_area).sum(),
        coverage_pct: a.coverage_pct,
        valid: a.valid,
    });
}

impl TrialResult {
    pub fn csv_rows(&self) -> Vec<TrialCsvRow> {
        let mut out = Vec::new();
        for s in &self.subjects {
            rows_for(s.subject, &s.right, &mut out);
            rows_for(s.subject, &s.left, &mut out);
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in self.csv_rows() {
            w.serialize(row).expect("in-memory csv write");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("csv is utf-8")
    }

    pub fn rows_from_csv(text: &str) -> Result<Vec<TrialCsvRow>, csv::Error> {
        csv::Reader::from_reader(text.as_bytes()).deserialize().collect()
    }
}
