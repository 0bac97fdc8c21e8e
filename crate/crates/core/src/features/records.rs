//! Typed operation / transaction records and their CSV schemas.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDateTime;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub const TIME_FORMAT: &str = "%Y-%m-%d %H:%M:%S";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordKind {
    Operation,
    Transaction,
}

impl RecordKind {
    /// Prefix used for qualified feature names, e.g. `op.device`.
    pub fn prefix(self) -> &'static str {
        match self {
            RecordKind::Operation => "op",
            RecordKind::Transaction => "tx",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    Categorical,
    Numeric,
    Timestamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FieldSpec {
    pub name: &'static str,
    pub kind: FieldKind,
}

const fn field(name: &'static str, kind: FieldKind) -> FieldSpec {
    FieldSpec { name, kind }
}

pub const OPERATION_FIELDS: [FieldSpec; 8] = [
    field("mode", FieldKind::Categorical),
    field("time", FieldKind::Timestamp),
    field("device", FieldKind::Categorical),
    field("version", FieldKind::Categorical),
    field("ip", FieldKind::Categorical),
    field("mac", FieldKind::Categorical),
    field("os", FieldKind::Categorical),
    field("geo_code", FieldKind::Categorical),
];

pub const TRANSACTION_FIELDS: [FieldSpec; 8] = [
    field("time", FieldKind::Timestamp),
    field("device", FieldKind::Categorical),
    field("tran_amt", FieldKind::Numeric),
    field("ip", FieldKind::Categorical),
    field("channel", FieldKind::Categorical),
    field("acc_id", FieldKind::Categorical),
    field("balance", FieldKind::Numeric),
    field("trans_type", FieldKind::Categorical),
];

/// A borrowed view of one non-key field value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FieldValue<'a> {
    Category(&'a str),
    Number(f64),
    Time(NaiveDateTime),
}

/// Common access to the two record kinds, indexed by schema position.
pub trait Record {
    const KIND: RecordKind;
    const FIELDS: &'static [FieldSpec];

    fn user_id(&self) -> &str;
    fn value(&self, field: usize) -> Option<FieldValue<'_>>;

    fn validate(&self) -> std::result::Result<(), String>;

    fn header() -> Vec<&'static str> {
        std::iter::once("user_id")
            .chain(Self::FIELDS.iter().map(|f| f.name))
            .collect()
    }
}

fn opt_cat(v: &Option<String>) -> Option<FieldValue<'_>> {
    v.as_deref().map(FieldValue::Category)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperationRecord {
    pub user_id: String,
    pub mode: Option<String>,
    #[serde(with = "opt_time")]
    pub time: Option<NaiveDateTime>,
    pub device: Option<String>,
    pub version: Option<String>,
    pub ip: Option<String>,
    pub mac: Option<String>,
    pub os: Option<String>,
    pub geo_code: Option<String>,
}

impl Record for OperationRecord {
    const KIND: RecordKind = RecordKind::Operation;
    const FIELDS: &'static [FieldSpec] = &OPERATION_FIELDS;

    fn user_id(&self) -> &str {
        &self.user_id
    }

    fn value(&self, field: usize) -> Option<FieldValue<'_>> {
        match field {
            0 => opt_cat(&self.mode),
            1 => self.time.map(FieldValue::Time),
            2 => opt_cat(&self.device),
            3 => opt_cat(&self.version),
            4 => opt_cat(&self.ip),
            5 => opt_cat(&self.mac),
            6 => opt_cat(&self.os),
            7 => opt_cat(&self.geo_code),
            _ => None,
        }
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if self.user_id.is_empty() {
            return Err("empty user_id".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransactionRecord {
    pub user_id: String,
    #[serde(with = "opt_time")]
    pub time: Option<NaiveDateTime>,
    pub device: Option<String>,
    pub tran_amt: Option<f64>,
    pub ip: Option<String>,
    pub channel: Option<String>,
    pub acc_id: Option<String>,
    pub balance: Option<f64>,
    pub trans_type: Option<String>,
}

impl Record for TransactionRecord {
    const KIND: RecordKind = RecordKind::Transaction;
    const FIELDS: &'static [FieldSpec] = &TRANSACTION_FIELDS;

    fn user_id(&self) -> &str {
        &self.user_id
    }

    fn value(&self, field: usize) -> Option<FieldValue<'_>> {
        match field {
            0 => self.time.map(FieldValue::Time),
            1 => opt_cat(&self.device),
            2 => self.tran_amt.map(FieldValue::Number),
            3 => opt_cat(&self.ip),
            4 => opt_cat(&self.channel),
            5 => opt_cat(&self.acc_id),
            6 => self.balance.map(FieldValue::Number),
            7 => opt_cat(&self.trans_type),
            _ => None,
        }
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if self.user_id.is_empty() {
            return Err("empty user_id".into());
        }
        if let Some(a) = self.tran_amt {
            if !(a.is_finite() && a >= 0.0) {
                return Err(format!("tran_amt must be a non-negative number, got {a}"));
            }
        }
        if let Some(b) = self.balance {
            if !b.is_finite() {
                return Err(format!("balance must be finite, got {b}"));
            }
        }
        Ok(())
    }
}

mod opt_time {
    use super::*;

    pub fn serialize<S: Serializer>(v: &Option<NaiveDateTime>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(t) => s.serialize_str(&t.format(TIME_FORMAT).to_string()),
            None => s.serialize_str(""),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<NaiveDateTime>, D::Error> {
        let raw: Option<String> = Option::deserialize(d)?;
        match raw.as_deref() {
            None | Some("") => Ok(None),
            Some(text) => NaiveDateTime::parse_from_str(text, TIME_FORMAT)
                .map(Some)
                .map_err(|e| serde::de::Error::custom(format!("bad timestamp `{text}`: {e}"))),
        }
    }
}

/// A rejected row in lenient loading mode.
#[derive(Debug, Clone, PartialEq)]
pub struct RowError {
    pub line: u64,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LoadMode {
    /// The first malformed row aborts loading.
    #[default]
    Strict,
    /// Malformed rows are skipped and reported.
    Lenient,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Loaded<R> {
    pub records: Vec<R>,
    pub rejected: Vec<RowError>,
}

/// Reads a CSV file of records of kind `R`. Empty cells are missing values.
pub fn load_records<R>(path: &Path, mode: LoadMode) -> Result<Loaded<R>>
where
    R: Record + for<'de> Deserialize<'de>,
{
    let file = File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    read_records(file, path, mode)
}

/// [`load_records`] over any reader; `path` is only used in diagnostics.
pub fn read_records<R, Rd>(reader: Rd, path: &Path, mode: LoadMode) -> Result<Loaded<R>>
where
    R: Record + for<'de> Deserialize<'de>,
    Rd: Read,
{
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let expected = R::header();
    let found: Vec<&str> = headers.iter().map(str::trim).collect();
    if found != expected {
        return Err(Error::Schema {
            path: path.to_path_buf(),
            message: format!(
                "{} header must be `{}`, found `{}`",
                R::KIND.prefix(),
                expected.join(","),
                found.join(",")
            ),
        });
    }

    let mut records = Vec::new();
    let mut rejected = Vec::new();
    let mut row = csv::StringRecord::new();
    loop {
        let line = rdr.position().line() + 1;
        let has_row = match rdr.read_record(&mut row) {
            Ok(more) => more,
            Err(e) => {
                let err = RowError {
                    line,
                    message: e.to_string(),
                };
                if mode == LoadMode::Strict {
                    return Err(row_error(path, err));
                }
                rejected.push(err);
                continue;
            }
        };
        if !has_row {
            break;
        }
        let line = row.position().map(|p| p.line()).unwrap_or(line);
        let parsed = if row.len() != expected.len() {
            Err(format!(
                "expected {} fields, found {}",
                expected.len(),
                row.len()
            ))
        } else {
            row.deserialize::<R>(Some(&headers))
                .map_err(|e| e.to_string())
                .and_then(|r| r.validate().map(|()| r))
        };
        match parsed {
            Ok(r) => records.push(r),
            Err(message) => {
                let err = RowError { line, message };
                if mode == LoadMode::Strict {
                    return Err(row_error(path, err));
                }
                rejected.push(err);
            }
        }
    }
    Ok(Loaded { records, rejected })
}

fn row_error(path: &Path, err: RowError) -> Error {
    Error::Row {
        path: path.to_path_buf(),
        line: err.line,
        message: err.message,
    }
}

/// Writes records as CSV with the canonical header.
pub fn write_records<R, W>(records: &[R], writer: W) -> Result<()>
where
    R: Record + Serialize,
    W: Write,
{
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    wtr.write_record(R::header())?;
    for r in records {
        wtr.serialize(r)?;
    }
    wtr.flush().map_err(|e| Error::io("writing records", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const OPS: &str = "user_id,mode,time,device,version,ip,mac,os,geo_code\n\
        u1,login,2024-01-01 08:00:00,d1,v1,1.1.1.1,,ios,g1\n\
        u1,transfer,2024-01-01 23:15:00,d1,v1,1.1.1.1,aa,ios,\n\
        u2,login,2024-01-02 12:00:00,,v2,,,android,g2\n";

    fn load_ops(text: &str, mode: LoadMode) -> Result<Loaded<OperationRecord>> {
        read_records(text.as_bytes(), Path::new("ops.csv"), mode)
    }

    #[test]
    fn well_formed_rows_load() {
        let loaded = load_ops(OPS, LoadMode::Strict).unwrap();
        assert_eq!(loaded.records.len(), 3);
        assert!(loaded.rejected.is_empty());
        assert_eq!(loaded.records[1].geo_code, None);
        assert_eq!(loaded.records[0].mac, None);
        assert_eq!(loaded.records[2].device, None);
        assert_eq!(
            loaded.records[1].time.unwrap().format(TIME_FORMAT).to_string(),
            "2024-01-01 23:15:00"
        );
    }

    #[test]
    fn strict_mode_names_first_bad_line() {
        let text = format!("{OPS}u3,login,not-a-time,d,v,i,m,o,g\nu4,login,also-bad,d,v,i,m,o,g\n");
        match load_ops(&text, LoadMode::Strict) {
            Err(Error::Row { line, .. }) => assert_eq!(line, 5),
            other => panic!("expected row error, got {other:?}"),
        }
    }

    #[test]
    fn lenient_mode_skips_and_reports() {
        let text = format!("{OPS},login,2024-01-01 00:00:00,d,v,i,m,o,g\nu5,x\n");
        let loaded = load_ops(&text, LoadMode::Lenient).unwrap();
        assert_eq!(loaded.records.len(), 3);
        assert_eq!(
            loaded.rejected.iter().map(|r| r.line).collect::<Vec<_>>(),
            vec![5, 6]
        );
    }

    #[test]
    fn unknown_header_is_schema_error() {
        let text = "user_id,mode,when\nu1,login,x\n";
        assert!(matches!(
            load_ops(text, LoadMode::Strict),
            Err(Error::Schema { .. })
        ));
    }

    #[test]
    fn negative_amount_rejected() {
        let text = "user_id,time,device,tran_amt,ip,channel,acc_id,balance,trans_type\n\
                    u1,2024-01-01 00:00:00,d,-5,ip,web,a,10,pay\n";
        let r: Result<Loaded<TransactionRecord>> =
            read_records(text.as_bytes(), Path::new("tx.csv"), LoadMode::Strict);
        assert!(matches!(r, Err(Error::Row { line: 2, .. })));
    }

    #[test]
    fn write_then_read_round_trips() {
        let loaded = load_ops(OPS, LoadMode::Strict).unwrap();
        let mut buf = Vec::new();
        write_records(&loaded.records, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), OPS);
        let again = load_ops(std::str::from_utf8(&buf).unwrap(), LoadMode::Strict).unwrap();
        assert_eq!(again.records, loaded.records);
    }
}
