use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{ObservedSeries, YearGrid};

use super::format::fmt_num;

pub const REQUIRED_COLUMNS: [&str; 4] = ["year", "bachelors", "masters", "phd"];
pub const FORCING_COLUMN: &str = "phd_intl";

struct Row {
    line: usize,
    b: f64,
    m: f64,
    p: f64,
    intl: Option<f64>,
}

/// Read a comma-separated file with header `year,bachelors,masters,phd`
/// and an optional `phd_intl` column. Rows may come in any order but must
/// form a contiguous run of years.
pub fn load_series(path: &Path) -> Result<ObservedSeries> {
    let data_err = |message: String| Error::Data {
        path: path.to_path_buf(),
        message,
    };
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| data_err(format!("cannot read header: {e}")))?
        .clone();
    let position = |name: &str| headers.iter().position(|h| h == name);
    for h in headers.iter() {
        if !REQUIRED_COLUMNS.contains(&h) && h != FORCING_COLUMN {
            return Err(data_err(format!("unknown column `{h}`")));
        }
    }
    let cols = REQUIRED_COLUMNS
        .iter()
        .map(|c| position(c).ok_or_else(|| data_err(format!("missing required column `{c}`"))))
        .collect::<Result<Vec<_>>>()?;
    let intl_col = position(FORCING_COLUMN);

    let mut rows: BTreeMap<i32, Row> = BTreeMap::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| data_err(format!("line {line}: {e}")))?;
        let field = |col: usize, name: &str| -> Result<&str> {
            record
                .get(col)
                .filter(|s| !s.is_empty())
                .ok_or_else(|| data_err(format!("line {line}: missing value for `{name}`")))
        };
        let number = |col: usize, name: &str| -> Result<f64> {
            let raw = field(col, name)?;
            let v: f64 = raw
                .parse()
                .map_err(|_| data_err(format!("line {line}: `{name}` value `{raw}` is not a number")))?;
            if !v.is_finite() {
                return Err(data_err(format!("line {line}: `{name}` value `{raw}` is not finite")));
            }
            Ok(v)
        };
        let year_raw = field(cols[0], "year")?;
        let year: i32 = year_raw
            .parse()
            .map_err(|_| data_err(format!("line {line}: year `{year_raw}` is not an integer")))?;
        let row = Row {
            line,
            b: number(cols[1], "bachelors")?,
            m: number(cols[2], "masters")?,
            p: number(cols[3], "phd")?,
            intl: intl_col.map(|c| number(c, FORCING_COLUMN)).transpose()?,
        };
        if row.b < 0.0 {
            return Err(data_err(format!(
                "line {line} (year {year}): bachelors must be nonnegative, got {}",
                row.b
            )));
        }
        if row.m <= 0.0 {
            return Err(data_err(format!(
                "line {line} (year {year}): masters must be strictly positive, got {}",
                row.m
            )));
        }
        if row.p <= 0.0 {
            return Err(data_err(format!(
                "line {line} (year {year}): phd must be strictly positive, got {}",
                row.p
            )));
        }
        if let Some(v) = row.intl.filter(|v| *v < 0.0) {
            return Err(data_err(format!(
                "line {line} (year {year}): phd_intl must be nonnegative, got {v}"
            )));
        }
        if let Some(prev) = rows.insert(year, row) {
            return Err(data_err(format!(
                "duplicate year {year} (lines {} and {line})",
                prev.line
            )));
        }
    }
    let (Some(&t_min), Some(&t_max)) = (rows.keys().next(), rows.keys().next_back()) else {
        return Err(data_err("no data rows".into()));
    };
    if t_min == t_max {
        return Err(data_err(format!("only one year ({t_min}); at least two are required")));
    }
    let gaps: Vec<String> = (t_min..=t_max)
        .filter(|y| !rows.contains_key(y))
        .map(|y| y.to_string())
        .collect();
    if !gaps.is_empty() {
        return Err(data_err(format!(
            "missing years in {t_min}..={t_max}: {}",
            gaps.join(", ")
        )));
    }
    let grid = YearGrid::new(t_min, t_max)?;
    let rows: Vec<Row> = rows.into_values().collect();
    ObservedSeries::new(
        grid,
        rows.iter().map(|r| r.b).collect(),
        rows.iter().map(|r| r.m).collect(),
        rows.iter().map(|r| r.p).collect(),
        intl_col.map(|_| rows.iter().map(|r| r.intl.unwrap_or(0.0)).collect()),
    )
    .map_err(|e| data_err(e.to_string()))
}

/// Write a series in the layout [`load_series`] reads.
pub fn write_series(obs: &ObservedSeries, path: &Path) -> Result<usize> {
    let mut header: Vec<&str> = REQUIRED_COLUMNS.to_vec();
    if obs.has_forcing() {
        header.push(FORCING_COLUMN);
    }
    let rows = obs
        .grid()
        .years()
        .enumerate()
        .map(|(i, year)| {
            let mut r = vec![
                year.to_string(),
                fmt_num(obs.bachelors()[i]),
                fmt_num(obs.masters()[i]),
                fmt_num(obs.phd()[i]),
            ];
            if let Some(x) = obs.phd_intl() {
                r.push(fmt_num(x[i]));
            }
            r
        })
        .collect::<Vec<_>>();
    super::format::write_csv(path, &header, &rows)
}
