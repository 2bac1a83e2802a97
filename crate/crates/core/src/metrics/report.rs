use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::es_auc;
use crate::{Error, Result, FORMAT_VERSION};

pub const REPORT_JSON_PREFIX: &str = "report_";
pub const REPORT_CSV_PREFIX: &str = "report_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub level: String,
    /// `None` when the group lacks one of the classes.
    pub auc: Option<f64>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub format_version: u32,
    pub config_hash: String,
    pub model: String,
    pub attribute_name: String,
    pub auc: f64,
    pub es_auc: f64,
    pub dpd: f64,
    pub deodds: f64,
    pub groups: Vec<GroupMetrics>,
}

impl EvaluationReport {
    /// Builds a report, deriving ES-AUC from the groups that have an AUC.
    pub fn assemble(
        attribute_name: &str,
        auc: f64,
        groups: Vec<GroupMetrics>,
        dpd: f64,
        deodds: f64,
    ) -> Self {
        let es = es_auc(auc, groups.iter().filter_map(|g| g.auc));
        Self {
            format_version: FORMAT_VERSION,
            config_hash: String::new(),
            model: String::new(),
            attribute_name: attribute_name.to_string(),
            auc,
            es_auc: es,
            dpd,
            deodds,
            groups,
        }
    }

    /// Group AUCs keyed by level index.
    pub fn group_auc(&self) -> BTreeMap<usize, f64> {
        self.groups
            .iter()
            .enumerate()
            .filter_map(|(i, g)| g.auc.map(|a| (i, a)))
            .collect()
    }

    pub fn sample_counts(&self) -> Vec<usize> {
        self.groups.iter().map(|g| g.count).collect()
    }

    /// Replaces index-based level labels with names.
    pub fn with_level_names(mut self, names: &[String]) -> Self {
        for (g, name) in self.groups.iter_mut().zip(names) {
            g.level = name.clone();
        }
        self
    }
}

fn pct(v: f64) -> String {
    format!("{:.4}", 100.0 * v)
}

/// CSV rendering in percent: a `#` header line, the column header, one row.
pub fn report_csv(r: &EvaluationReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# format_version={} config_hash={}",
        r.format_version, r.config_hash
    );
    out.push_str("attribute,model,dpd,deodds,auc,es_auc");
    for g in &r.groups {
        let _ = write!(out, ",auc_{}", g.level);
    }
    out.push('\n');
    let _ = write!(
        out,
        "{},{},{},{},{},{}",
        r.attribute_name,
        r.model,
        pct(r.dpd),
        pct(r.deodds),
        pct(r.auc),
        pct(r.es_auc)
    );
    for g in &r.groups {
        out.push(',');
        if let Some(a) = g.auc {
            out.push_str(&pct(a));
        }
    }
    out.push('\n');
    out
}

fn json_path(dir: &Path, attribute: &str) -> PathBuf {
    dir.join(format!("{REPORT_JSON_PREFIX}{attribute}.json"))
}

/// Writes `report_<attribute>.json` and `report_<attribute>.csv` into `dir`.
pub fn write_report(dir: impl AsRef<Path>, r: &EvaluationReport) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let jp = json_path(dir, &r.attribute_name);
    let json = serde_json::to_string_pretty(r).expect("report serializes") + "\n";
    fs::write(&jp, json).map_err(|e| Error::io(&jp, e))?;
    let cp = dir.join(format!("{REPORT_CSV_PREFIX}{}.csv", r.attribute_name));
    fs::write(&cp, report_csv(r)).map_err(|e| Error::io(&cp, e))
}

pub fn read_report(dir: impl AsRef<Path>, attribute: &str) -> Result<EvaluationReport> {
    let p = json_path(dir.as_ref(), attribute);
    let text = fs::read_to_string(&p).map_err(|_| {
        Error::Mismatch(format!(
            "no report for attribute `{attribute}` in {}",
            dir.as_ref().display()
        ))
    })?;
    let r: EvaluationReport = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: p.clone(),
        line: e.line(),
        message: e.to_string(),
    })?;
    if r.format_version != FORMAT_VERSION {
        return Err(Error::Version {
            found: r.format_version,
            expected: FORMAT_VERSION,
        });
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table2_race() -> EvaluationReport {
        let groups = [("Asian", 0.7974), ("Black", 0.7360), ("White", 0.7782)]
            .iter()
            .map(|(l, a)| GroupMetrics {
                level: (*l).into(),
                auc: Some(*a),
                count: 1,
            })
            .collect();
        EvaluationReport::assemble("race", 0.7727, groups, 0.0530, 0.1400)
    }

    #[test]
    fn injected_group_aucs_give_reference_es_auc() {
        let r = table2_race();
        assert!((r.es_auc - 0.7243).abs() < 5e-4, "{}", r.es_auc);
    }

    #[test]
    fn csv_columns_follow_table_order() {
        let mut r = table2_race();
        r.model = "clip".into();
        r.groups[1].auc = None;
        let csv = report_csv(&r);
        let lines: Vec<&str> = csv.lines().collect();
        assert!(lines[0].starts_with("# format_version=1"));
        assert_eq!(
            lines[1],
            "attribute,model,dpd,deodds,auc,es_auc,auc_Asian,auc_Black,auc_White"
        );
        assert!(lines[2].starts_with("race,clip,5.3000,14.0000,77.2700,"));
        assert!(lines[2].contains(",79.7400,,77.8200"));
    }

    #[test]
    fn json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let r = table2_race();
        write_report(dir.path(), &r).unwrap();
        assert_eq!(read_report(dir.path(), "race").unwrap(), r);
        let e = read_report(dir.path(), "gender").unwrap_err();
        assert!(e.to_string().contains("gender"));
    }
}
