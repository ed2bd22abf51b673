//! Experiment reports, bound verdicts and their on-disk forms.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::{plot, HarnessError, Stage};
use crate::bounds::{BoundEnvelope, EnvelopeKind};
use crate::model::ProbeReport;
use crate::simulate::MomentCurve;

/// Column header of every curves CSV.
pub const CURVES_HEADER: &str = "p,t,w_hat_pp,w_hat_se,moment_pp,moment_se,envelope,oracle,verdict";

/// Estimates at one (p, snapshot).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalPoint {
    pub p: f64,
    pub t: f64,
    pub step: usize,
    pub subcloud: usize,
    /// Ŵ_p^p between the two snapshot subclouds.
    pub w_hat_pp: f64,
    /// Bootstrap standard error of `w_hat_pp`.
    pub w_hat_se: f64,
    /// Mean |X − X′|^p over the subcloud pairs.
    pub coupling_pp: f64,
    /// Mean |X − X′|^p over the full ensemble.
    pub moment_pp: f64,
    pub moment_se: f64,
    pub oracle: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    /// Envelope known to miss a mechanism of the run; not counted.
    Vacuous,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Vacuous => "vacuous",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "pass" => Some(Verdict::Pass),
            "fail" => Some(Verdict::Fail),
            "vacuous" => Some(Verdict::Vacuous),
            _ => None,
        }
    }
}

/// One line of a curves CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub p: f64,
    pub t: f64,
    pub w_hat_pp: f64,
    pub w_hat_se: f64,
    pub moment_pp: f64,
    pub moment_se: f64,
    pub envelope: f64,
    pub oracle: Option<f64>,
    pub verdict: Verdict,
}

/// One envelope at one order, evaluated at every snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeTable {
    pub kind: EnvelopeKind,
    pub order: f64,
    pub vacuous: Option<String>,
    /// Absent when the table was re-read from CSV.
    pub envelope: Option<BoundEnvelope>,
    pub rows: Vec<CurveRow>,
}

impl EnvelopeTable {
    /// Rows for every point of matching order; verdicts are filled in later
    /// by [`check_bound`].
    pub fn evaluate(envelope: BoundEnvelope, points: &[EmpiricalPoint]) -> Self {
        let rows = points
            .iter()
            .filter(|pt| pt.p == envelope.order)
            .map(|pt| CurveRow {
                p: pt.p,
                t: pt.t,
                w_hat_pp: pt.w_hat_pp,
                w_hat_se: pt.w_hat_se,
                moment_pp: pt.moment_pp,
                moment_se: pt.moment_se,
                envelope: envelope.eval(pt.t),
                oracle: pt.oracle,
                verdict: if envelope.vacuous.is_some() { Verdict::Vacuous } else { Verdict::Pass },
            })
            .collect();
        Self { kind: envelope.kind(), order: envelope.order, vacuous: envelope.vacuous.clone(), envelope: Some(envelope), rows }
    }
}

/// How estimation error is weighed against the bound: a row passes iff
/// Ŵ_p^p − z·SE ≤ envelope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TolerancePolicy {
    pub z: f64,
}

impl Default for TolerancePolicy {
    fn default() -> Self {
        Self { z: 3.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictEntry {
    pub kind: EnvelopeKind,
    pub p: f64,
    pub t: f64,
    pub w_hat_pp: f64,
    pub w_hat_se: f64,
    /// Ŵ_p^p − z·SE.
    pub lower: f64,
    pub envelope: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VerdictTable {
    pub z: f64,
    pub entries: Vec<VerdictEntry>,
    pub checked: usize,
    pub failures: usize,
    pub vacuous: usize,
    pub all_pass: bool,
}

impl VerdictTable {
    /// Rows that failed, as (p, t) witnesses.
    pub fn witnesses(&self) -> impl Iterator<Item = &VerdictEntry> {
        self.entries.iter().filter(|e| e.verdict == Verdict::Fail)
    }

    /// 0 when every counted row passes, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.all_pass {
            0
        } else {
            1
        }
    }
}

/// Domination check of every envelope table in `report`.
pub fn check_bound(report: &ExperimentReport, policy: &TolerancePolicy) -> VerdictTable {
    check_tables(&report.tables, policy)
}

pub fn check_tables(tables: &[EnvelopeTable], policy: &TolerancePolicy) -> VerdictTable {
    let mut v = VerdictTable { z: policy.z, ..Default::default() };
    for table in tables {
        for row in &table.rows {
            let lower = row.w_hat_pp - policy.z * row.w_hat_se;
            let verdict = if table.vacuous.is_some() || row.verdict == Verdict::Vacuous {
                v.vacuous += 1;
                Verdict::Vacuous
            } else if lower <= row.envelope {
                v.checked += 1;
                Verdict::Pass
            } else {
                v.checked += 1;
                v.failures += 1;
                Verdict::Fail
            };
            v.entries.push(VerdictEntry {
                kind: table.kind,
                p: row.p,
                t: row.t,
                w_hat_pp: row.w_hat_pp,
                w_hat_se: row.w_hat_se,
                lower,
                envelope: row.envelope,
                verdict,
            });
        }
    }
    v.all_pass = v.failures == 0;
    v
}

fn apply(tables: &mut [EnvelopeTable], verdict: &VerdictTable) {
    let mut entries = verdict.entries.iter();
    for row in tables.iter_mut().flat_map(|t| t.rows.iter_mut()) {
        if let Some(e) = entries.next() {
            row.verdict = e.verdict;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub status: String,
    pub config: ExperimentConfig,
    pub seed: u64,
    pub warnings: Vec<String>,
    pub probe: ProbeReport,
    pub delta_a: f64,
    /// (p, W₀^p of the realized initial coupling).
    pub initial_w0p: Vec<(f64, f64)>,
    pub dt: f64,
    /// Full-grid moment curves, index k at time k·dt.
    pub moment_curves: Vec<MomentCurve>,
    pub empirical: Vec<EmpiricalPoint>,
    pub tables: Vec<EnvelopeTable>,
    pub verdict: VerdictTable,
}

impl ExperimentReport {
    /// Copies the verdict table's decisions into the curve rows.
    pub fn apply_verdicts(&mut self) {
        apply(&mut self.tables, &self.verdict);
    }

    pub fn tables_of(&self, kind: EnvelopeKind) -> impl Iterator<Item = &EnvelopeTable> {
        self.tables.iter().filter(move |t| t.kind == kind)
    }

    pub fn table(&self, kind: EnvelopeKind, p: f64) -> Option<&EnvelopeTable> {
        self.tables.iter().find(|t| t.kind == kind && t.order == p)
    }

    pub fn point(&self, p: f64, step: usize) -> Option<&EmpiricalPoint> {
        self.empirical.iter().find(|e| e.p == p && e.step == step)
    }

    /// Envelope kinds in config order.
    pub fn kinds(&self) -> Vec<EnvelopeKind> {
        let mut kinds = Vec::new();
        for t in &self.tables {
            if !kinds.contains(&t.kind) {
                kinds.push(t.kind);
            }
        }
        kinds
    }
}

// ---------------------------------------------------------------------------
// CSV

pub fn curves_csv<'a>(tables: impl IntoIterator<Item = &'a EnvelopeTable>) -> String {
    let mut s = String::from(CURVES_HEADER);
    s.push('\n');
    for row in tables.into_iter().flat_map(|t| &t.rows) {
        let oracle = row.oracle.map(|o| o.to_string()).unwrap_or_default();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            row.p,
            row.t,
            row.w_hat_pp,
            row.w_hat_se,
            row.moment_pp,
            row.moment_se,
            row.envelope,
            oracle,
            row.verdict.as_str()
        );
    }
    s
}

pub fn parse_curves_csv(text: &str, origin: &str) -> Result<Vec<CurveRow>, HarnessError> {
    let bad = |row: usize, msg: String| HarnessError::Stage { stage: Stage::Output, message: format!("{origin}: row {row}: {msg}") };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == CURVES_HEADER => {}
        _ => return Err(bad(1, format!("expected header `{CURVES_HEADER}`"))),
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let row_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != 9 {
            return Err(bad(row_no, format!("expected 9 cells, found {}", cells.len())));
        }
        let num = |j: usize| -> Result<f64, HarnessError> {
            cells[j].parse::<f64>().map_err(|_| bad(row_no, format!("cell {} is not a number: `{}`", j + 1, cells[j])))
        };
        let oracle = if cells[7].is_empty() { None } else { Some(num(7)?) };
        let verdict = Verdict::parse(cells[8]).ok_or_else(|| bad(row_no, format!("unknown verdict `{}`", cells[8])))?;
        rows.push(CurveRow {
            p: num(0)?,
            t: num(1)?,
            w_hat_pp: num(2)?,
            w_hat_se: num(3)?,
            moment_pp: num(4)?,
            moment_se: num(5)?,
            envelope: num(6)?,
            oracle,
            verdict,
        });
    }
    Ok(rows)
}

/// Groups CSV rows of one envelope kind into per-order tables.
pub fn tables_from_rows(kind: EnvelopeKind, rows: Vec<CurveRow>) -> Vec<EnvelopeTable> {
    let mut tables: Vec<EnvelopeTable> = Vec::new();
    for row in rows {
        match tables.iter_mut().find(|t| t.order == row.p) {
            Some(t) => t.rows.push(row),
            None => tables.push(EnvelopeTable {
                kind,
                order: row.p,
                vacuous: (row.verdict == Verdict::Vacuous).then(|| "flagged vacuous in stored CSV".to_string()),
                envelope: None,
                rows: vec![row],
            }),
        }
    }
    tables
}

fn curves_file(kind: EnvelopeKind) -> String {
    format!("curves_{}.csv", kind.name())
}

// ---------------------------------------------------------------------------
// Files

fn write(path: &Path, contents: &str) -> Result<(), HarnessError> {
    std::fs::write(path, contents).map_err(|source| HarnessError::Io { path: path.to_path_buf(), source })
}

fn create_dir(dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(|source| HarnessError::Io { path: dir.to_path_buf(), source })
}

/// Writes `curves.csv` (first configured envelope), one
/// `curves_<envelope>.csv` per envelope, `report.json` and, if asked,
/// `plots/p<order>.svg`.
pub fn write_outputs(report: &ExperimentReport, dir: &Path, plots: bool) -> Result<(), HarnessError> {
    create_dir(dir)?;
    let _ = std::fs::remove_file(dir.join("FAILED"));
    let kinds = report.kinds();
    if let Some(first) = kinds.first() {
        write(&dir.join("curves.csv"), &curves_csv(report.tables_of(*first)))?;
    }
    for kind in &kinds {
        write(&dir.join(curves_file(*kind)), &curves_csv(report.tables_of(*kind)))?;
    }
    let json = serde_json::to_string_pretty(report).map_err(|e| HarnessError::Stage { stage: Stage::Output, message: e.to_string() })?;
    write(&dir.join("report.json"), &json)?;
    if plots {
        write_plots(&report.tables, dir)?;
    }
    Ok(())
}

/// One SVG per order, drawing every envelope table of that order.
pub fn write_plots(tables: &[EnvelopeTable], dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let plot_dir = dir.join("plots");
    create_dir(&plot_dir)?;
    let mut orders: Vec<f64> = Vec::new();
    for t in tables {
        if !orders.contains(&t.order) {
            orders.push(t.order);
        }
    }
    let mut written = Vec::new();
    for p in orders {
        let of_p: Vec<&EnvelopeTable> = tables.iter().filter(|t| t.order == p).collect();
        let path = plot_dir.join(format!("p{p}.svg"));
        write(&path, &plot::order_figure(p, &of_p))?;
        written.push(path);
    }
    Ok(written)
}

/// Best-effort `FAILED` marker plus a status-only `report.json`.
pub fn write_failure(dir: &Path, err: &HarnessError) {
    if std::fs::create_dir_all(dir).is_err() {
        return;
    }
    let stage = err.stage();
    let _ = std::fs::write(dir.join("FAILED"), format!("stage: {stage}\nerror: {err}\n"));
    let body = serde_json::json!({ "status": "failed", "stage": stage, "error": err.to_string() });
    let _ = std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(&body).unwrap_or_default());
}

/// Tables re-read from a run directory: every `curves_<envelope>.csv`, or
/// `curves.csv` alone (read as the first envelope in `report.json`, theorem1
/// if absent).
pub fn load_tables(dir: &Path) -> Result<Vec<EnvelopeTable>, HarnessError> {
    let read = |path: &Path| {
        std::fs::read_to_string(path).map_err(|source| HarnessError::Io { path: path.to_path_buf(), source })
    };
    let mut tables = Vec::new();
    for kind in [EnvelopeKind::Theorem1, EnvelopeKind::ExampleP2, EnvelopeKind::Langevin, EnvelopeKind::LangevinP2Corrected] {
        let path = dir.join(curves_file(kind));
        if path.exists() {
            let rows = parse_curves_csv(&read(&path)?, &path.display().to_string())?;
            tables.extend(tables_from_rows(kind, rows));
        }
    }
    if tables.is_empty() {
        let path = dir.join("curves.csv");
        let rows = parse_curves_csv(&read(&path)?, &path.display().to_string())?;
        let kind = stored_config(dir)
            .and_then(|c| c.check.envelopes.first().copied())
            .unwrap_or(EnvelopeKind::Theorem1);
        tables = tables_from_rows(kind, rows);
    }
    Ok(tables)
}

/// The config recorded in `report.json`, if readable.
pub fn stored_config(dir: &Path) -> Option<ExperimentConfig> {
    let text = std::fs::read_to_string(dir.join("report.json")).ok()?;
    let value: serde_json::Value = serde_json::from_str(&text).ok()?;
    serde_json::from_value(value.get("config")?.clone()).ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(w: f64, se: f64, env: f64) -> CurveRow {
        CurveRow {
            p: 2.0,
            t: 0.5,
            w_hat_pp: w,
            w_hat_se: se,
            moment_pp: w,
            moment_se: se,
            envelope: env,
            oracle: None,
            verdict: Verdict::Pass,
        }
    }

    fn table(rows: Vec<CurveRow>) -> EnvelopeTable {
        EnvelopeTable { kind: EnvelopeKind::Theorem1, order: 2.0, vacuous: None, envelope: None, rows }
    }

    #[test]
    fn all_zero_report_passes() {
        let v = check_tables(&[table(vec![row(0.0, 0.0, 0.0), row(0.0, 0.0, 1.0)])], &TolerancePolicy::default());
        assert!(v.all_pass);
        assert_eq!(v.exit_code(), 0);
    }

    #[test]
    fn zero_envelope_fails_with_witness() {
        let v = check_tables(&[table(vec![row(0.0, 0.0, 0.0), row(0.4, 0.01, 0.0)])], &TolerancePolicy::default());
        assert!(!v.all_pass);
        assert_eq!(v.exit_code(), 1);
        let w: Vec<_> = v.witnesses().collect();
        assert_eq!(w.len(), 1);
        assert_eq!((w[0].p, w[0].t), (2.0, 0.5));
    }

    #[test]
    fn margin_uses_z_times_se() {
        let t = [table(vec![row(1.2, 0.1, 1.0)])];
        assert!(check_tables(&t, &TolerancePolicy { z: 3.0 }).all_pass);
        assert!(!check_tables(&t, &TolerancePolicy { z: 1.0 }).all_pass);
    }

    #[test]
    fn vacuous_rows_are_not_counted() {
        let mut t = table(vec![row(1.0, 0.0, 0.0)]);
        t.vacuous = Some("test".into());
        let v = check_tables(&[t], &TolerancePolicy::default());
        assert!(v.all_pass);
        assert_eq!((v.checked, v.vacuous), (0, 1));
    }

    #[test]
    fn csv_round_trip() {
        let mut r = row(0.25, 0.125, 1.5);
        r.oracle = Some(0.3);
        let rows = vec![r, row(1.0 / 3.0, 0.0, 2.0)];
        let text = curves_csv([&table(rows.clone())]);
        assert!(text.starts_with(CURVES_HEADER));
        assert_eq!(parse_curves_csv(&text, "mem").unwrap(), rows);
        let err = parse_curves_csv(&text.replace("1.5", "x"), "mem").unwrap_err();
        assert!(err.to_string().contains("row 2"), "{err}");
    }
}
