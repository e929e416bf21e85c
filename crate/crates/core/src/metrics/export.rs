use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::RocCurve;
use crate::error::{Error, Result};

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Companion of a ROC CSV file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocSidecar {
    pub auc: f64,
    #[serde(rename = "tpr_at_fpr_0.1")]
    pub tpr_at_fpr_0_1: f64,
    pub balanced_accuracy: f64,
    pub n_members: usize,
    pub n_nonmembers: usize,
}

/// Writes `<path>` as `fpr,tpr` rows and `<path>.json` as the sidecar
/// (with the `.csv` extension replaced).
pub fn write_roc_csv(path: &Path, curve: &RocCurve, sidecar: &RocSidecar) -> Result<()> {
    let mut text = String::from("fpr,tpr\n");
    for (f, t) in curve.points() {
        writeln!(text, "{},{}", fmt_f64(f), fmt_f64(t)).expect("writing to a String");
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))?;
    let side = path.with_extension("json");
    let json = serde_json::to_string_pretty(sidecar)?;
    std::fs::write(&side, json).map_err(|e| Error::io(&side, e))
}

pub fn read_roc_csv(path: &Path) -> Result<Vec<(f64, f64)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "fpr,tpr")) => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                reason: "expected header `fpr,tpr`".into(),
            })
        }
    }
    lines
        .map(|(i, l)| {
            let bad = |reason: String| Error::Parse { line: i + 1, reason };
            let (f, t) = l.split_once(',').ok_or_else(|| bad("expected two columns".into()))?;
            let f = f.parse().map_err(|e| bad(format!("{e}")))?;
            let t = t.parse().map_err(|e| bad(format!("{e}")))?;
            Ok((f, t))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{roc, ScoreSet};

    #[test]
    fn csv_round_trips_exactly() {
        let set = ScoreSet::new(vec![0.1, 0.7, 1.0 / 3.0, 0.2], vec![0, 1, 1, 0]).unwrap();
        let c = roc(&set).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("roc.csv");
        let side = RocSidecar {
            auc: 1.0,
            tpr_at_fpr_0_1: 1.0,
            balanced_accuracy: 1.0,
            n_members: 2,
            n_nonmembers: 2,
        };
        write_roc_csv(&path, &c, &side).unwrap();
        assert_eq!(read_roc_csv(&path).unwrap(), c.points().collect::<Vec<_>>());
        let back: RocSidecar = serde_json::from_str(&std::fs::read_to_string(dir.path().join("roc.json")).unwrap()).unwrap();
        assert_eq!(back, side);
    }

    #[test]
    fn seventeen_significant_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(0.1).parse::<f64>().unwrap(), 0.1);
    }
}
