use std::path::Path;

use serde::Serialize;

use super::config::{MteTruth, TruthKind};
use super::household::TruthParams;
use crate::error::{Error, Result};

/// Hidden simulation truth. Estimators never receive this; it exists for
/// oracle checks and is written next to the dataset.
#[derive(Debug, Clone, Serialize)]
pub struct TruthLedger {
    pub kind: TruthKind,
    pub columns: Vec<String>,
    pub ids: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub household: Option<TruthParams>,
    pub mte: Option<MteTruth>,
}

impl TruthLedger {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    /// Per-household ledger as CSV: id followed by the ledger columns.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["id".to_string()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header)?;
        for (id, row) in self.ids.iter().zip(&self.rows) {
            let mut rec = vec![id.clone()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(Error::Io)
    }

    /// Parameter-level truth as `parameter,value` CSV.
    pub fn write_params_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["parameter", "value"])?;
        let mut put = |k: &str, v: f64| w.write_record([k.to_string(), v.to_string()]);
        if let Some(t) = &self.household {
            for (k, v) in [
                ("alpha", t.alpha),
                ("gamma_p", t.gamma_p),
                ("gamma_y", t.gamma_y),
                ("public_spending", t.public_spending),
                ("Ap_star", t.ap_star),
                ("At", t.at),
                ("Ay", t.ay),
                ("ap_star", t.ap_star_s),
                ("at", t.at_s),
                ("ay", t.ay_s),
                ("delta", t.delta),
                ("bt", t.bt),
                ("bp", t.bp),
                ("by", t.by),
                ("const_w", t.const_w),
                ("const_s", t.const_s),
            ] {
                put(k, v)?;
            }
            if let Some(s) = t.structural {
                for (k, v) in crate::household::StructuralParams::NAMES.iter().zip(s) {
                    put(&format!("structural:{k}"), v)?;
                }
            }
        }
        if let Some(m) = &self.mte {
            put("mte_slope", m.slope())?;
            put("ate_at_zero", m.effect_at(0.0))?;
        }
        drop(put);
        w.flush().map_err(Error::Io)
    }
}
