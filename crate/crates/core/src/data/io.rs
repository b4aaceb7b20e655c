use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::record::{Dataset, Gender, HouseholdRecord, SCHEMA_VERSION};
use crate::error::{Error, Result};

/// Fixed fields in file order. `teen_wage_imputed` and `cf_residual` may be
/// absent from input files; they are always written.
pub const FIELDS: [&str; 15] = [
    "id",
    "year",
    "teen_gender",
    "teen_age",
    "schooling",
    "teen_market_hours",
    "teen_wage",
    "teen_domestic_hours",
    "parent_wage",
    "parent_market_hours",
    "parent_domestic_hours",
    "nonlabor_income",
    "treated",
    "transfer_amount",
    "instrument",
];
const OPTIONAL_FIELDS: [&str; 2] = ["teen_wage_imputed", "cf_residual"];

/// Maps record fields to CSV header names. Covariates are the columns that
/// start with `covariate_prefix`; the prefix is stripped from their names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Schema {
    pub columns: BTreeMap<String, String>,
    pub covariate_prefix: String,
}

impl Default for Schema {
    fn default() -> Self {
        Schema {
            columns: FIELDS
                .iter()
                .chain(OPTIONAL_FIELDS.iter())
                .map(|f| (f.to_string(), f.to_string()))
                .collect(),
            covariate_prefix: "x_".into(),
        }
    }
}

impl Schema {
    pub fn header_for(&self, field: &str) -> String {
        self.columns.get(field).cloned().unwrap_or_else(|| field.to_string())
    }
}

struct Row<'a> {
    path: &'a str,
    line: usize,
    rec: &'a csv::StringRecord,
}

impl Row<'_> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.to_string(),
            line: self.line,
            msg: msg.into(),
        }
    }

    fn raw(&self, col: usize, name: &str) -> Result<&str> {
        let v = self.rec.get(col).map(str::trim).unwrap_or("");
        if v.is_empty() {
            Err(self.err(format!("missing value in required column `{name}`")))
        } else {
            Ok(v)
        }
    }

    fn float(&self, col: usize, name: &str) -> Result<f64> {
        let v = self.raw(col, name)?;
        v.parse::<f64>()
            .map_err(|_| self.err(format!("column `{name}`: `{v}` is not a number")))
    }

    fn opt_float(&self, col: usize, name: &str) -> Result<Option<f64>> {
        match self.rec.get(col).map(str::trim) {
            None | Some("") => Ok(None),
            Some(v) => v
                .parse::<f64>()
                .map(Some)
                .map_err(|_| self.err(format!("column `{name}`: `{v}` is not a number"))),
        }
    }

    fn int<T: std::str::FromStr>(&self, col: usize, name: &str) -> Result<T> {
        let v = self.raw(col, name)?;
        v.parse::<T>()
            .map_err(|_| self.err(format!("column `{name}`: `{v}` is not an integer")))
    }

    /// 0/1 indicator. Other integers are parsed and left for validation.
    fn flag(&self, col: usize, name: &str, id: &str) -> Result<bool> {
        let v: i64 = self.int(col, name)?;
        match v {
            0 => Ok(false),
            1 => Ok(true),
            _ => Err(Error::Validation {
                id: id.to_string(),
                rule: format!("{name} must be 0 or 1 (got {v})"),
            }),
        }
    }
}

/// Read and validate a household CSV.
pub fn load_dataset(path: impl AsRef<Path>, schema: &Schema) -> Result<Dataset> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::Parse {
            path: shown.clone(),
            line: 0,
            msg: e.to_string(),
        })?;
    let headers = rdr.headers()?.clone();
    let find = |field: &str| {
        let h = schema.header_for(field);
        headers.iter().position(|c| c.trim() == h)
    };
    let mut cols = Vec::with_capacity(FIELDS.len());
    for f in FIELDS {
        match find(f) {
            Some(c) => cols.push(c),
            None => {
                return Err(Error::Parse {
                    path: shown,
                    line: 1,
                    msg: format!("header is missing column `{}`", schema.header_for(f)),
                })
            }
        }
    }
    let imputed_col = find("teen_wage_imputed");
    let cf_col = find("cf_residual");
    let covariate_cols: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter_map(|(i, h)| {
            h.trim()
                .strip_prefix(schema.covariate_prefix.as_str())
                .map(|name| (i, name.to_string()))
        })
        .collect();

    let mut records = Vec::new();
    let mut rec = csv::StringRecord::new();
    loop {
        let more = rdr.read_record(&mut rec).map_err(|e| Error::Parse {
            path: shown.clone(),
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            msg: e.to_string(),
        })?;
        if !more {
            break;
        }
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let row = Row {
            path: &shown,
            line,
            rec: &rec,
        };
        let id = row.raw(cols[0], "id")?.to_string();
        let teen_gender = row
            .raw(cols[2], "teen_gender")?
            .parse::<Gender>()
            .map_err(|m| row.err(m))?;
        let mut covariates = BTreeMap::new();
        for (c, name) in &covariate_cols {
            covariates.insert(name.clone(), row.float(*c, name)?);
        }
        let teen_wage_imputed = match imputed_col {
            Some(c) if !rec.get(c).unwrap_or("").trim().is_empty() => {
                row.flag(c, "teen_wage_imputed", &id)?
            }
            _ => false,
        };
        let r = HouseholdRecord {
            year: row.int(cols[1], "year")?,
            teen_gender,
            teen_age: row.int(cols[3], "teen_age")?,
            schooling: row.flag(cols[4], "schooling", &id)?,
            teen_market_hours: row.float(cols[5], "teen_market_hours")?,
            teen_wage: row.opt_float(cols[6], "teen_wage")?,
            teen_wage_imputed,
            teen_domestic_hours: row.float(cols[7], "teen_domestic_hours")?,
            parent_wage: row.float(cols[8], "parent_wage")?,
            parent_market_hours: row.float(cols[9], "parent_market_hours")?,
            parent_domestic_hours: row.float(cols[10], "parent_domestic_hours")?,
            nonlabor_income: row.float(cols[11], "nonlabor_income")?,
            treated: row.flag(cols[12], "treated", &id)?,
            transfer_amount: row.float(cols[13], "transfer_amount")?,
            instrument: row.float(cols[14], "instrument")?,
            covariates,
            cf_residual: match cf_col {
                Some(c) => row.opt_float(c, "cf_residual")?,
                None => None,
            },
            id,
        };
        records.push(r);
    }
    Dataset::with_version(records, SCHEMA_VERSION.to_string())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Write a dataset with the default schema. `f64` values use the shortest
/// representation that parses back to the same bits.
pub fn write_dataset(d: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    write_records(d, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_records<W: std::io::Write>(d: &Dataset, w: &mut csv::Writer<W>) -> Result<()> {
    let covs = d.covariate_names();
    let mut header: Vec<String> = FIELDS
        .iter()
        .chain(OPTIONAL_FIELDS.iter())
        .map(|s| s.to_string())
        .collect();
    header.extend(covs.iter().map(|c| format!("x_{c}")));
    w.write_record(&header)?;
    for r in d.records() {
        let mut row = vec![
            r.id.clone(),
            r.year.to_string(),
            r.teen_gender.to_string(),
            r.teen_age.to_string(),
            u8::from(r.schooling).to_string(),
            r.teen_market_hours.to_string(),
            fmt_opt(r.teen_wage),
            r.teen_domestic_hours.to_string(),
            r.parent_wage.to_string(),
            r.parent_market_hours.to_string(),
            r.parent_domestic_hours.to_string(),
            r.nonlabor_income.to_string(),
            u8::from(r.treated).to_string(),
            r.transfer_amount.to_string(),
            r.instrument.to_string(),
            u8::from(r.teen_wage_imputed).to_string(),
            fmt_opt(r.cf_residual),
        ];
        row.extend(covs.iter().map(|c| r.covariates[c].to_string()));
        w.write_record(&row)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    const HEADER: &str = "id,year,teen_gender,teen_age,schooling,teen_market_hours,teen_wage,teen_domestic_hours,parent_wage,parent_market_hours,parent_domestic_hours,nonlabor_income,treated,transfer_amount,instrument,x_parent_age";

    fn csv_file(body: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "{HEADER}").unwrap();
        f.write_all(body.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_three_rows_with_missing_wage() {
        let f = csv_file(
            "a,2010,son,16,1,0,,5,1.8,48,10,20,0,0,0.2,45\n\
             b,2010,daughter,17,0,20,0.9,8,2.1,40,6,12.5,0,0,0.3,50\n\
             c,2011,son,18,1,0,,3,1.2,44,12,8,1,15,0.6,39\n",
        );
        let d = load_dataset(f.path(), &Schema::default()).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.records()[0].teen_wage, None);
        assert_eq!(d.records()[1].teen_wage, Some(0.9));
        assert_eq!(d.records()[2].covariate("parent_age"), Some(39.0));
    }

    #[test]
    fn malformed_row_reports_line() {
        let f = csv_file(
            "a,2010,son,16,1,0,,5,1.8,48,10,20,0,0,0.2,45\n\
             b,2010,son,17,0,20,oops,8,2.1,40,6,12.5,0,0,0.3,50\n",
        );
        match load_dataset(f.path(), &Schema::default()) {
            Err(Error::Parse { line, msg, .. }) => {
                assert_eq!(line, 3);
                assert!(msg.contains("teen_wage"), "{msg}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn conditionality_and_wage_rules() {
        let f = csv_file("a,2010,son,16,0,0,,5,1.8,48,10,20,1,15,0.2,45\n");
        let e = load_dataset(f.path(), &Schema::default()).unwrap_err();
        assert!(e.to_string().contains("conditionality violated"), "{e}");
        let f = csv_file("a,2010,son,16,1,0,,5,0,48,10,20,0,0,0.2,45\n");
        let e = load_dataset(f.path(), &Schema::default()).unwrap_err();
        assert!(matches!(e, Error::Validation { ref id, ref rule } if id == "a" && rule.contains("parent_wage")));
    }

    #[test]
    fn renamed_columns_via_schema() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "{}", HEADER.replace("parent_wage", "wp")).unwrap();
        writeln!(f, "a,2010,son,16,1,0,,5,1.8,48,10,20,0,0,0.2,45").unwrap();
        let mut schema = Schema::default();
        schema.columns.insert("parent_wage".into(), "wp".into());
        let d = load_dataset(f.path(), &schema).unwrap();
        assert_eq!(d.records()[0].parent_wage, 1.8);
    }

    #[test]
    fn write_then_load_is_identical() {
        let f = csv_file(
            "a,2010,son,16,1,0,,5,1.8,48,10,20,0,0,0.2,45\n\
             b,2010,daughter,17,0,20,0.123456789012345,8,2.1,40,6,12.5,0,0,0.3,50\n",
        );
        let d = load_dataset(f.path(), &Schema::default()).unwrap();
        let out = tempfile::NamedTempFile::new().unwrap();
        write_dataset(&d, out.path()).unwrap();
        let d2 = load_dataset(out.path(), &Schema::default()).unwrap();
        assert_eq!(d, d2);
        let out2 = tempfile::NamedTempFile::new().unwrap();
        write_dataset(&d2, out2.path()).unwrap();
        assert_eq!(std::fs::read(out.path()).unwrap(), std::fs::read(out2.path()).unwrap());
    }
}
