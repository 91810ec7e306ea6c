use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{EventLog, Kind, LogBuilder, RawValue, Schema, ACTIVITY, DEFAULT_BINS};
use crate::error::{Error, Result};

/// JSON sidecar declaring column kinds:
/// `{"variables":[{"name":"amount","kind":"numerical"}]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaSidecar {
    pub variables: Vec<SidecarVariable>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SidecarVariable {
    pub name: String,
    pub kind: Kind,
}

#[derive(Debug, Clone)]
pub struct ParseOptions {
    pub bins: usize,
    pub schema: Option<SchemaSidecar>,
}

impl Default for ParseOptions {
    fn default() -> Self {
        Self {
            bins: DEFAULT_BINS,
            schema: None,
        }
    }
}

/// Parses `trace_id,event_index,activity,<var>...` CSV into a log.
///
/// Column kinds come from the sidecar when given; otherwise a column is
/// numerical iff every non-empty cell parses as a number. `activity` is
/// always categorical. Empty cells are missing values.
pub fn parse_csv(text: &str, options: &ParseOptions) -> Result<EventLog> {
    read_builder(text, options, None)?.build(options.bins)
}

/// Parses a CSV log and codes it against a reference schema (test logs).
pub fn parse_csv_with_schema(text: &str, reference: &Schema) -> Result<EventLog> {
    read_builder(text, &ParseOptions::default(), Some(reference))?.build_with_schema(reference)
}

pub(crate) fn read_builder(text: &str, options: &ParseOptions, reference: Option<&Schema>) -> Result<LogBuilder> {
    if text.trim().is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if headers.len() < 3 || headers[0] != "trace_id" || headers[1] != "event_index" || headers[2] != ACTIVITY {
        return Err(Error::BadHeader(format!(
            "expected `trace_id,event_index,activity,...`, got `{}`",
            headers.join(",")
        )));
    }
    let names = &headers[2..];

    let mut rows: Vec<(usize, csv::StringRecord)> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        rows.push((i + 2, rec?));
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput);
    }

    let declared: HashMap<&str, Kind> = options
        .schema
        .iter()
        .flat_map(|s| s.variables.iter().map(|v| (v.name.as_str(), v.kind)))
        .collect();
    let kinds: Vec<Kind> = names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            if let Some(k) = reference.and_then(|s| s.get(name)).map(|v| v.kind()) {
                return k;
            }
            if let Some(&k) = declared.get(name.as_str()) {
                return k;
            }
            if name == ACTIVITY {
                return Kind::Categorical;
            }
            let mut any = false;
            let all_numeric = rows.iter().all(|(_, r)| {
                let cell = r.get(j + 2).unwrap_or("");
                if cell.is_empty() {
                    return true;
                }
                any = true;
                cell.parse::<f64>().is_ok_and(f64::is_finite)
            });
            if all_numeric && any {
                Kind::Numerical
            } else {
                Kind::Categorical
            }
        })
        .collect();

    let mut order: Vec<String> = Vec::new();
    let mut grouped: HashMap<String, Vec<(i64, Vec<RawValue>)>> = HashMap::new();
    for (line, rec) in &rows {
        if rec.len() != headers.len() {
            return Err(Error::BadCell {
                line: *line,
                column: "*".into(),
                value: format!("{} fields, expected {}", rec.len(), headers.len()),
            });
        }
        let trace = rec[0].to_string();
        let index: i64 = rec[1].parse().map_err(|_| Error::BadCell {
            line: *line,
            column: "event_index".into(),
            value: rec[1].to_string(),
        })?;
        let mut values = Vec::with_capacity(names.len());
        for (j, kind) in kinds.iter().enumerate() {
            let cell = &rec[j + 2];
            let v = if cell.is_empty() {
                RawValue::Missing
            } else {
                match kind {
                    Kind::Categorical => RawValue::Text(cell.to_string()),
                    Kind::Numerical => match cell.parse::<f64>() {
                        Ok(x) if x.is_finite() => RawValue::Number(x),
                        _ => {
                            return Err(Error::BadCell {
                                line: *line,
                                column: names[j].clone(),
                                value: cell.to_string(),
                            })
                        }
                    },
                }
            };
            values.push(v);
        }
        let events = grouped.entry(trace.clone()).or_insert_with(|| {
            order.push(trace.clone());
            Vec::new()
        });
        events.push((index, values));
    }

    let mut builder = LogBuilder::new(names.iter().cloned().zip(kinds).collect());
    for id in order {
        let mut events = grouped.remove(&id).unwrap_or_default();
        events.sort_by_key(|(i, _)| *i);
        if let Some(w) = events.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::DuplicateEvent { trace: id, index: w[0].0 });
        }
        builder.push_trace(id, events.into_iter().map(|(_, v)| v).collect());
    }
    Ok(builder)
}

/// Writes a log in the format read by [`parse_csv`]. Event indices restart
/// at 0 in every trace.
pub fn serialize_csv(log: &EventLog) -> String {
    let mut writer = csv::WriterBuilder::new().from_writer(Vec::new());
    let mut header = vec!["trace_id".to_string(), "event_index".to_string()];
    header.extend(log.schema().names().map(str::to_string));
    // writing into a Vec cannot fail
    writer.write_record(&header).expect("in-memory write");
    for trace in log.traces() {
        for (i, event) in trace.events.iter().enumerate() {
            let mut row = vec![trace.id.clone(), i.to_string()];
            for (var, &value) in event.values.iter().enumerate() {
                row.push(match log.raw(var, value) {
                    RawValue::Text(t) => t,
                    RawValue::Number(x) => format!("{x}"),
                    RawValue::Missing => String::new(),
                });
            }
            writer.write_record(&row).expect("in-memory write");
        }
    }
    String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("utf-8 input")
}
