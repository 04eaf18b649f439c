//! CSV and JSON report emission. Both files are rendered in memory before
//! anything touches the disk.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::run::RunRecord;

pub const CSV_COLUMNS: [&str; 23] = [
    "scenario_id",
    "domain",
    "n_radial",
    "n_angular",
    "family",
    "param1",
    "param2",
    "truncation_k",
    "seed",
    "status",
    "beta_squared",
    "u_center",
    "l1_norm",
    "balayage_max",
    "exp_integral_at_fitted_C",
    "carleson_norm",
    "bmo_norm",
    "fitted_C_u0",
    "fitted_c_u0",
    "fitted_C3_u1",
    "riccati_max_gap",
    "dirac_probe",
    "wall_ms",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
        }
    }
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::InvalidArgument(format!("unknown report format `{other}`"))),
        }
    }
}

/// 17 significant digits, enough to recover the exact double.
fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn csv_row(r: &RunRecord) -> Vec<String> {
    let s = &r.scenario;
    let (p1, p2) = s.potential.form.params();
    let cond = r.conditions.as_ref();
    let est = r.estimates.as_ref();
    let u0 = est.and_then(|e| e.u0_envelope.as_ref());
    let u1 = est.and_then(|e| e.boundary_integral.as_ref());
    vec![
        s.id.clone(),
        s.domain.kind.name().into(),
        s.mesh.n_radial.to_string(),
        s.mesh.n_angular.to_string(),
        s.potential.form.family().into(),
        num(p1),
        num(p2),
        s.potential.truncation_k.map(|k| k.to_string()).unwrap_or_default(),
        s.seed.to_string(),
        r.status_label().into(),
        opt(cond.map(|c| c.beta_squared())),
        opt(r.u_center),
        opt(r.gauge.as_ref().filter(|g| g.solution.is_some()).map(|g| g.l1_norm)),
        opt(cond.and_then(|c| c.balayage.as_ref()).map(|b| b.max())),
        opt(r.exp_integral_at_fitted_c),
        opt(cond.and_then(|c| c.carleson_norm)),
        opt(cond.and_then(|c| c.bmo_norm)),
        opt(u0.map(|e| e.fitted_upper_c)),
        opt(u0.map(|e| e.fitted_lower_c)),
        opt(u1.map(|e| e.report.fitted_upper_c)),
        opt(r.riccati.as_ref().map(|x| x.max_gap())),
        opt(r.counterexample.as_ref().and_then(|x| x.max_dirac_error())),
        num(r.wall_ms.total()),
    ]
}

pub fn render_csv(records: &[RunRecord]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_COLUMNS)?;
    for r in records {
        w.write_record(csv_row(r))?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

pub fn render_json(records: &[RunRecord]) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(records)?;
    out.push(b'\n');
    Ok(out)
}

pub fn read_json(path: &Path) -> Result<Vec<RunRecord>> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

/// Writes `report.<ext>` for each format into `out_dir` and returns the paths.
pub fn emit_reports(records: &[RunRecord], out_dir: &Path, formats: &[ReportFormat]) -> Result<Vec<PathBuf>> {
    let rendered = formats
        .iter()
        .map(|&f| {
            let bytes = match f {
                ReportFormat::Csv => render_csv(records)?,
                ReportFormat::Json => render_json(records)?,
            };
            Ok((out_dir.join(format!("report.{}", f.extension())), bytes))
        })
        .collect::<Result<Vec<_>>>()?;
    fs::create_dir_all(out_dir)?;
    let mut paths = Vec::with_capacity(rendered.len());
    for (path, bytes) in rendered {
        fs::write(&path, bytes)?;
        paths.push(path);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Scenario;
    use crate::operators::PotentialForm;
    use crate::run::{run_scenario, RunContext};

    fn record() -> RunRecord {
        let mut s = Scenario::default();
        s.mesh.n_radial = 6;
        s.mesh.n_angular = 8;
        s.mesh.boundary_n = 8;
        s.run.probes = 4;
        s.potential.form = PotentialForm::Constant { lambda: 1.5 };
        run_scenario(&s, &RunContext::default())
    }

    #[test]
    fn empty_sequence_gives_header_only() {
        let csv = String::from_utf8(render_csv(&[]).unwrap()).unwrap();
        assert_eq!(csv, CSV_COLUMNS.join(",") + "\n");
    }

    #[test]
    fn one_record_one_row() {
        let csv = String::from_utf8(render_csv(&[record()]).unwrap()).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 2);
        let mut rdr = csv::Reader::from_reader(csv.as_bytes());
        let row = rdr.records().next().unwrap().unwrap();
        assert_eq!(row.len(), 23);
        assert_eq!(&row[9], "converged");
        let beta: f64 = row[10].parse().unwrap();
        assert!(beta > 0.0);
    }

    #[test]
    fn json_round_trip_is_exact() {
        let recs = vec![record()];
        let dir = tempfile::tempdir().unwrap();
        let paths = emit_reports(&recs, dir.path(), &[ReportFormat::Csv, ReportFormat::Json]).unwrap();
        assert_eq!(paths.len(), 2);
        let back = read_json(&paths[1]).unwrap();
        assert_eq!(render_json(&back).unwrap(), render_json(&recs).unwrap());
        let u = recs[0].gauge.as_ref().unwrap().solution.as_ref().unwrap();
        let v = back[0].gauge.as_ref().unwrap().solution.as_ref().unwrap();
        assert!(u.values.iter().zip(&v.values).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn seventeen_digits() {
        assert_eq!(num(0.1), "1.0000000000000001e-1");
        assert_eq!(num(0.1).parse::<f64>().unwrap(), 0.1);
        assert_eq!(num(f64::INFINITY), "inf");
    }

    #[test]
    fn unwritable_directory_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("plain");
        fs::write(&file, b"x").unwrap();
        let err = emit_reports(&[], &file.join("sub"), &[ReportFormat::Csv]).unwrap_err();
        assert!(matches!(err, Error::Io(_)));
    }
}
