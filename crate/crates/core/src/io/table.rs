//! CSV ingestion and export.
//!
//! Required columns are `env`, `y` and `x1..xp`; `weight`, `date`
//! (`YYYY-MM-DD`) and `hour` are optional, and any other column is kept as
//! text. An empty `y` cell marks a missing outcome.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;

use crate::data::{EnvironmentData, MultiEnvDataset};
use crate::error::{Error, Result};

/// Flat covariates, outcomes and weight of one environment being assembled.
type Group = (Vec<f64>, Vec<Option<f64>>, Option<f64>);

/// One parsed data row.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub env: String,
    pub y: Option<f64>,
    pub x: Vec<f64>,
    pub weight: Option<f64>,
    pub date: Option<NaiveDate>,
    pub hour: Option<u32>,
    /// Values of the columns listed in [`Table::extra_columns`].
    pub extra: Vec<String>,
}

/// A parsed CSV file, rows in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub p: usize,
    pub extra_columns: Vec<String>,
    pub records: Vec<Record>,
}

struct Layout {
    env: usize,
    y: usize,
    x: Vec<usize>,
    weight: Option<usize>,
    date: Option<usize>,
    hour: Option<usize>,
    extra: Vec<(String, usize)>,
}

fn covariate_index(name: &str) -> Option<usize> {
    let digits = name.strip_prefix('x')?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) || digits.starts_with('0') {
        return None;
    }
    digits.parse().ok()
}

fn layout(headers: &csv::StringRecord) -> Result<Layout> {
    let mut position: HashMap<&str, usize> = HashMap::new();
    for (i, h) in headers.iter().enumerate() {
        if position.insert(h, i).is_some() {
            return Err(Error::Schema(format!("duplicate column `{h}`")));
        }
    }
    let required = |name: &str| {
        position
            .get(name)
            .copied()
            .ok_or_else(|| Error::Schema(format!("missing column `{name}`")))
    };
    let env = required("env")?;
    let y = required("y")?;
    let p = headers
        .iter()
        .filter_map(covariate_index)
        .max()
        .unwrap_or(0);
    if p == 0 {
        return Err(Error::Schema("no covariate columns `x1..xp`".into()));
    }
    let x = (1..=p)
        .map(|j| required(&format!("x{j}")))
        .collect::<Result<Vec<_>>>()?;
    let known = |h: &str| {
        matches!(h, "env" | "y" | "weight" | "date" | "hour") || covariate_index(h).is_some()
    };
    Ok(Layout {
        env,
        y,
        x,
        weight: position.get("weight").copied(),
        date: position.get("date").copied(),
        hour: position.get("hour").copied(),
        extra: headers
            .iter()
            .enumerate()
            .filter(|(_, h)| !known(h))
            .map(|(i, h)| (h.to_owned(), i))
            .collect(),
    })
}

fn parse_error(line: u64, column: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        location: format!("line {line}, column `{column}`"),
        message: message.into(),
    }
}

fn number(cell: &str, line: u64, column: &str) -> Result<f64> {
    let v: f64 = cell
        .trim()
        .parse()
        .map_err(|_| parse_error(line, column, format!("`{cell}` is not a number")))?;
    if !v.is_finite() {
        return Err(parse_error(line, column, format!("`{cell}` is not finite")));
    }
    Ok(v)
}

/// Parses CSV text from `reader`.
pub fn read_table(reader: impl Read) -> Result<Table> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let headers = csv
        .headers()
        .map_err(|e| Error::Parse {
            location: "header".into(),
            message: e.to_string(),
        })?
        .clone();
    let layout = layout(&headers)?;
    let mut records = Vec::new();
    for row in csv.records() {
        let row = row.map_err(|e| Error::Parse {
            location: e
                .position()
                .map_or_else(|| "unknown".into(), |p| format!("line {}", p.line())),
            message: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let cell = |i: usize| row.get(i).unwrap_or("");
        let y_cell = cell(layout.y);
        let y = if y_cell.trim().is_empty() {
            None
        } else {
            Some(number(y_cell, line, "y")?)
        };
        let x = layout
            .x
            .iter()
            .enumerate()
            .map(|(j, &i)| number(cell(i), line, &format!("x{}", j + 1)))
            .collect::<Result<Vec<_>>>()?;
        let weight = match layout.weight.map(cell) {
            Some(w) if !w.trim().is_empty() => Some(number(w, line, "weight")?),
            _ => None,
        };
        let date = match layout.date.map(cell) {
            Some(d) if !d.trim().is_empty() => Some(
                NaiveDate::parse_from_str(d.trim(), "%Y-%m-%d")
                    .map_err(|e| parse_error(line, "date", format!("`{d}`: {e}")))?,
            ),
            _ => None,
        };
        let hour = match layout.hour.map(cell) {
            Some(h) if !h.trim().is_empty() => {
                let v: u32 = h
                    .trim()
                    .parse()
                    .map_err(|_| parse_error(line, "hour", format!("`{h}` is not an hour")))?;
                if v > 23 {
                    return Err(parse_error(line, "hour", format!("{v} is outside 0..=23")));
                }
                Some(v)
            }
            _ => None,
        };
        records.push(Record {
            env: cell(layout.env).trim().to_owned(),
            y,
            x,
            weight,
            date,
            hour,
            extra: layout
                .extra
                .iter()
                .map(|(_, i)| cell(*i).to_owned())
                .collect(),
        });
    }
    Ok(Table {
        p: layout.x.len(),
        extra_columns: layout.extra.into_iter().map(|(n, _)| n).collect(),
        records,
    })
}

impl Table {
    pub fn read_path(path: &Path) -> Result<Self> {
        read_table(std::fs::File::open(path)?)
    }

    /// Position of a text column within [`Record::extra`].
    pub fn column(&self, name: &str) -> Result<usize> {
        self.extra_columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::Schema(format!("missing column `{name}`")))
    }

    /// Groups rows into environments keyed by `key`, in order of first
    /// appearance.
    pub fn group_by(&self, key: impl Fn(&Record) -> String) -> Result<MultiEnvDataset> {
        let rows: Vec<usize> = (0..self.records.len()).collect();
        self.group_rows(&rows, |_, r| key(r), |_, r| r.y)
    }

    /// Groups the listed rows into environments; `key` and `outcome` receive
    /// the row index and record.
    pub fn group_rows(
        &self,
        rows: &[usize],
        key: impl Fn(usize, &Record) -> String,
        outcome: impl Fn(usize, &Record) -> Option<f64>,
    ) -> Result<MultiEnvDataset> {
        let mut order: Vec<String> = Vec::new();
        let mut groups: HashMap<String, Group> = HashMap::new();
        for &i in rows {
            let rec = &self.records[i];
            let k = key(i, rec);
            let group = groups.entry(k.clone()).or_insert_with(|| {
                order.push(k.clone());
                (Vec::new(), Vec::new(), rec.weight)
            });
            if group.2 != rec.weight {
                return Err(Error::Schema(format!(
                    "environment `{k}` has inconsistent weights"
                )));
            }
            group.0.extend_from_slice(&rec.x);
            group.1.push(outcome(i, rec));
        }
        let envs = order
            .into_iter()
            .map(|k| {
                let (x, y, w) = groups.remove(&k).expect("group recorded in order");
                let env = EnvironmentData::from_flat(k, self.p, x, y)?;
                Ok(match w {
                    Some(w) => env.with_weight(w),
                    None => env,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        MultiEnvDataset::new(envs)
    }
}

/// Reads a CSV file into a validated dataset, one environment per distinct
/// `env` value in order of first appearance.
pub fn load_csv(path: &Path) -> Result<MultiEnvDataset> {
    Table::read_path(path)?.group_by(|r| r.env.clone())
}

/// Writes `data` in the ingestion format. Floats use the shortest
/// representation that reads back to the same value.
pub fn write_dataset_csv(data: &MultiEnvDataset, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let with_weight = data.environments().iter().any(|e| e.raw_weight().is_some());
    let mut header = vec!["env".to_owned(), "y".to_owned()];
    header.extend((1..=data.p()).map(|j| format!("x{j}")));
    if with_weight {
        header.push("weight".into());
    }
    w.write_record(&header).map_err(csv_io)?;
    for env in data.environments() {
        for i in 0..env.n_rows() {
            let mut rec = vec![
                env.env_id().to_owned(),
                env.outcome_opt(i)
                    .map_or_else(String::new, |y| y.to_string()),
            ];
            rec.extend(env.row(i).iter().map(f64::to_string));
            if with_weight {
                rec.push(env.raw_weight().map_or_else(String::new, |v| v.to_string()));
            }
            w.write_record(&rec).map_err(csv_io)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn csv_io(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::simulation::apply_mcar;
    use crate::simulation::dgp::{generate_dataset, SemModel};

    fn parse(text: &str) -> Result<MultiEnvDataset> {
        read_table(text.as_bytes())?.group_by(|r| r.env.clone())
    }

    #[test]
    fn unlabeled_row_counted() {
        let data = parse("env,y,x1\na,1.5,1\nb,3,2\na,,3\n").unwrap();
        assert_eq!(data.n_environments(), 2);
        let a = &data.environments()[0];
        assert_eq!((a.n_rows(), a.n_labeled()), (2, 1));
        assert_eq!(data.environments()[1].n_rows(), 1);
    }

    #[test]
    fn missing_covariate_column_is_schema_error() {
        let err = parse("env,y,x1,x2,x4\na,1,1,2,3\n").unwrap_err();
        assert!(
            matches!(&err, Error::Schema(m) if m.contains("x3")),
            "{err}"
        );
        assert!(matches!(parse("y,x1\n1,2\n"), Err(Error::Schema(_))));
    }

    #[test]
    fn bad_cell_is_parse_error_with_location() {
        let err = parse("env,y,x1\na,1,1\na,abc,2\n").unwrap_err();
        match err {
            Error::Parse { location, .. } => assert_eq!(location, "line 3, column `y`"),
            other => panic!("{other}"),
        }
        assert!(matches!(
            parse("env,y,x1\na,1,inf\n"),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(parse("env,y,x1\na,1\n"), Err(Error::Parse { .. })));
    }

    #[test]
    fn optional_columns() {
        let t = read_table("env,y,x1,date,hour,season\na,1,2,2011-03-04,7,spring\n".as_bytes())
            .unwrap();
        let r = &t.records[0];
        assert_eq!(r.date, NaiveDate::from_ymd_opt(2011, 3, 4));
        assert_eq!(r.hour, Some(7));
        assert_eq!(t.extra_columns, ["season"]);
        assert_eq!(r.extra, ["spring"]);
        assert!(read_table("env,y,x1,hour\na,1,2,24\n".as_bytes()).is_err());
    }

    #[test]
    fn weights_carried_per_environment() {
        let data = parse("env,y,x1,weight\na,1,1,3\na,2,2,3\nb,1,1,1\n").unwrap();
        assert_eq!(data.weights(), &[0.75, 0.25]);
        assert!(matches!(
            parse("env,y,x1,weight\na,1,1,3\na,2,2,2\n"),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn export_then_load_is_identity() {
        let full = generate_dataset(SemModel::Model3, 40, 9).unwrap();
        let envs = full
            .environments()
            .iter()
            .enumerate()
            .map(|(e, env)| apply_mcar(env, 0.5, &mut rng::stream(3, &[e as u64])).unwrap())
            .collect();
        let data = MultiEnvDataset::new(envs).unwrap();
        let mut buf = Vec::new();
        write_dataset_csv(&data, &mut buf).unwrap();
        let back = parse(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back, data);
    }
}
