use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::config::{echo_config, ReportJob};
use crate::error::{Error, Result};
use crate::pipeline::EvalReport;

const METRICS: [&str; 10] = [
    "angular_mean",
    "angular_p25",
    "angular_p50",
    "angular_p75",
    "angular_p90",
    "delta_e_mean",
    "delta_e_p25",
    "delta_e_p50",
    "delta_e_p75",
    "delta_e_p90",
];

/// Methods × metrics, lower is better in every metric column.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportTable {
    pub methods: Vec<String>,
    /// `values[method][metric]` in [`METRICS`] order.
    pub values: Vec<[f64; 10]>,
    pub size_kb: Vec<f64>,
    pub image_mmacs: Vec<f64>,
}

/// Rank of every entry among `column` (1 = lowest), ties sharing the better
/// rank.
pub fn rank_marks(column: &[f64]) -> Vec<usize> {
    column
        .iter()
        .map(|v| 1 + column.iter().filter(|o| **o < *v).count())
        .collect()
}

fn report_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join("report.json")
    } else {
        p.to_path_buf()
    }
}

impl ReportTable {
    /// Merges reports over the same illuminants into one table.
    pub fn from_reports(reports: &[EvalReport]) -> Result<Self> {
        let first = reports
            .first()
            .ok_or_else(|| Error::Config("report needs at least one evaluation".into()))?;
        let ids: BTreeSet<&str> = first.ids().into_iter().collect();
        for r in &reports[1..] {
            let other: BTreeSet<&str> = r.ids().into_iter().collect();
            if other != ids {
                return Err(Error::Comparison(format!(
                    "{} and {} were evaluated on different illuminants ({} vs {})",
                    first.provider,
                    r.provider,
                    ids.len(),
                    other.len()
                )));
            }
        }
        let mut methods: Vec<String> = Vec::new();
        for r in reports {
            let mut name = r.provider.clone();
            let mut k = 2;
            while methods.contains(&name) {
                name = format!("{}#{k}", r.provider);
                k += 1;
            }
            methods.push(name);
        }
        Ok(Self {
            methods,
            values: reports
                .iter()
                .map(|r| {
                    let (a, d) = (r.angular.as_row(), r.delta_e.as_row());
                    std::array::from_fn(|i| if i < 5 { a[i] } else { d[i - 5] })
                })
                .collect(),
            size_kb: reports.iter().map(|r| r.size_bytes as f64 / 1024.0).collect(),
            image_mmacs: reports.iter().map(|r| r.image_mmacs).collect(),
        })
    }

    /// Per-metric ranks, `ranks[method][metric]`.
    pub fn ranks(&self) -> Vec<[usize; 10]> {
        let cols: Vec<Vec<usize>> = (0..METRICS.len())
            .map(|m| rank_marks(&self.values.iter().map(|v| v[m]).collect::<Vec<_>>()))
            .collect();
        (0..self.methods.len())
            .map(|i| std::array::from_fn(|m| cols[m][i]))
            .collect()
    }

    /// CSV with a rank column after every metric.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("method");
        for m in METRICS {
            let _ = write!(s, ",{m},{m}_rank");
        }
        s.push_str(",size_kb,image_mmacs\n");
        for (i, ranks) in self.ranks().iter().enumerate() {
            s.push_str(&self.methods[i]);
            for (v, r) in self.values[i].iter().zip(ranks) {
                let _ = write!(s, ",{v},{r}");
            }
            let _ = writeln!(s, ",{},{}", self.size_kb[i], self.image_mmacs[i]);
        }
        s
    }

    /// Aligned text mirroring the usual Mean / 25% / 50% / 75% / 90% layout;
    /// `*1`, `*2`, `*3` mark the best three in each column.
    pub fn to_text(&self) -> String {
        let width = self.methods.iter().map(String::len).max().unwrap_or(6).max(6);
        let mut s = format!(
            "{:<width$} | {:^49} | {:^49} | {:>9} {:>9}\n",
            "", "Angular error (deg)", "Delta E 2000", "KB", "MMACs"
        );
        let heads = ["Mean", "25%", "50%", "75%", "90%"];
        let _ = write!(s, "{:<width$} |", "Method");
        for _ in 0..2 {
            for h in heads {
                let _ = write!(s, " {h:>9}");
            }
            s.push_str(" |");
        }
        s.push_str(&format!(" {:>9} {:>9}\n", "", ""));
        for (i, ranks) in self.ranks().iter().enumerate() {
            let _ = write!(s, "{:<width$} |", self.methods[i]);
            for (m, (v, r)) in self.values[i].iter().zip(ranks).enumerate() {
                let mark = if *r <= 3 && self.methods.len() > 1 {
                    format!("*{r}")
                } else {
                    "  ".into()
                };
                let _ = write!(s, " {:>7.2}{mark}", v);
                if m == 4 || m == 9 {
                    s.push_str(" |");
                }
            }
            let _ = writeln!(s, " {:>9.2} {:>9.1}", self.size_kb[i], self.image_mmacs[i]);
        }
        s
    }
}

/// Loads the listed reports and writes `table.csv` and `table.txt`.
pub fn cmd_report(job: &ReportJob) -> Result<ReportTable> {
    let reports = job
        .reports
        .iter()
        .map(|p| EvalReport::load_json(&report_path(p)))
        .collect::<Result<Vec<_>>>()?;
    let table = ReportTable::from_reports(&reports)?;
    echo_config(&job.out, job)?;
    let write = |name: &str, text: String| {
        let p = job.out.join(name);
        std::fs::write(&p, text).map_err(|e| Error::io(p, e))
    };
    write("table.csv", table.to_csv())?;
    write("table.txt", table.to_text())?;
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{IlluminantResult, DEFAULT_RESOLUTION};

    fn report(name: &str, ids: &[&str], errs: &[f64]) -> EvalReport {
        let rows = ids
            .iter()
            .zip(errs)
            .map(|(id, e)| IlluminantResult {
                illuminant_id: id.to_string(),
                cct: None,
                xy: None,
                off_locus: None,
                angular_mean: *e,
                delta_e: 2.0 * e,
                patch_errors: vec![*e; 24],
            })
            .collect();
        EvalReport::new(name.into(), 36, 0, DEFAULT_RESOLUTION, 1.0, rows, vec![]).unwrap()
    }

    #[test]
    fn single_and_ranked() {
        let t = ReportTable::from_reports(&[report("a", &["x", "y"], &[1.0, 2.0])]).unwrap();
        assert_eq!(t.methods.len(), 1);
        assert_eq!(t.to_csv().lines().count(), 2);

        let rs = [
            report("a", &["x", "y"], &[3.0, 3.0]),
            report("b", &["x", "y"], &[1.0, 2.0]),
            report("c", &["y", "x"], &[2.0, 2.0]),
        ];
        let t = ReportTable::from_reports(&rs).unwrap();
        assert_eq!(t.ranks().iter().map(|r| r[0]).collect::<Vec<_>>(), vec![3, 1, 2]);
        assert!(t.to_text().contains("*1"));
    }

    #[test]
    fn different_ids_refused() {
        let rs = [report("a", &["x"], &[1.0]), report("b", &["z"], &[1.0])];
        assert!(matches!(ReportTable::from_reports(&rs), Err(Error::Comparison(_))));
    }

    #[test]
    fn ties_share_rank() {
        assert_eq!(rank_marks(&[2.0, 1.0, 2.0, 5.0]), vec![2, 1, 2, 4]);
    }
}
