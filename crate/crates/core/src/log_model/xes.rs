use std::collections::{BTreeMap, HashMap};

use chrono::{DateTime, NaiveDateTime};
use quick_xml::events::{BytesStart, Event as XmlEvent};
use quick_xml::{Reader, XmlVersion};

use super::{EventLog, Kind, LogBuilder, RawValue, ACTIVITY};
use crate::error::{Error, Result};

const CONCEPT_NAME: &str = "concept:name";

/// A trace being read: its `concept:name`, if seen yet, and its events.
type PendingTrace = (Option<String>, Vec<BTreeMap<String, Attr>>);

/// Imports the attribute subset of an XES document: `string`, `int`,
/// `float`, `date` (as epoch seconds), `boolean` and `id` attributes
/// directly under `<trace>` and `<event>`. Nested lists and log-level
/// globals are ignored. An event's `concept:name` becomes `activity`.
pub fn import_xes(document: &str, bins: usize) -> Result<EventLog> {
    let mut reader = Reader::from_str(document);
    reader.config_mut().trim_text(true);

    let mut stack: Vec<String> = Vec::new();
    let mut traces: Vec<(String, Vec<BTreeMap<String, Attr>>)> = Vec::new();
    let mut current_trace: Option<PendingTrace> = None;
    let mut current_event: Option<BTreeMap<String, Attr>> = None;

    loop {
        let ev = reader.read_event().map_err(|e| Error::Xes(e.to_string()))?;
        match ev {
            XmlEvent::Start(ref e) | XmlEvent::Empty(ref e) => {
                let is_empty = matches!(ev, XmlEvent::Empty(_));
                let name = e.local_name().as_ref().to_string();
                let parent = stack.last().map(String::as_str);
                match name.as_str() {
                    "trace" if parent == Some("log") => current_trace = Some((None, Vec::new())),
                    "event" if parent == Some("trace") => current_event = Some(BTreeMap::new()),
                    _ => {
                        if let Some(attr) = parse_attribute(&name, e)? {
                            match parent {
                                Some("event") => {
                                    if let Some(ev) = current_event.as_mut() {
                                        ev.insert(attr.0, attr.1);
                                    }
                                }
                                Some("trace") if attr.0 == CONCEPT_NAME => {
                                    if let Some(t) = current_trace.as_mut() {
                                        t.0 = Some(attr.1.text());
                                    }
                                }
                                _ => {}
                            }
                        }
                    }
                }
                if !is_empty {
                    stack.push(name);
                } else {
                    close(&name, &mut stack, &mut traces, &mut current_trace, &mut current_event, true);
                }
            }
            XmlEvent::End(e) => {
                let name = e.local_name().as_ref().to_string();
                if stack.last() != Some(&name) {
                    return Err(Error::Xes(format!("unexpected closing tag </{name}>")));
                }
                close(&name, &mut stack, &mut traces, &mut current_trace, &mut current_event, false);
            }
            XmlEvent::Eof => break,
            _ => {}
        }
    }
    if !stack.is_empty() {
        return Err(Error::Xes(format!("unclosed element <{}>", stack.last().unwrap())));
    }
    let traces: Vec<_> = traces.into_iter().filter(|(_, evs)| !evs.is_empty()).collect();
    if traces.is_empty() {
        return Err(Error::NoTraces);
    }

    // union of keys; activity first, then keys in lexicographic order
    let mut kinds: BTreeMap<String, Kind> = BTreeMap::new();
    for (_, events) in &traces {
        for ev in events {
            for (k, a) in ev {
                let key = if k == CONCEPT_NAME { ACTIVITY.to_string() } else { k.clone() };
                let kind = if key == ACTIVITY { Kind::Categorical } else { a.kind() };
                kinds
                    .entry(key)
                    .and_modify(|prev| {
                        if *prev != kind {
                            *prev = Kind::Categorical
                        }
                    })
                    .or_insert(kind);
            }
        }
    }
    let mut columns: Vec<(String, Kind)> = vec![(ACTIVITY.to_string(), Kind::Categorical)];
    columns.extend(kinds.into_iter().filter(|(k, _)| k != ACTIVITY));

    let mut builder = LogBuilder::new(columns.clone());
    let mut ids: HashMap<String, usize> = HashMap::new();
    for (id, events) in traces {
        let seen = ids.entry(id.clone()).or_insert(0);
        let id = if *seen == 0 { id } else { format!("{id}#{seen}") };
        *seen += 1;
        let rows = events
            .into_iter()
            .map(|ev| {
                columns
                    .iter()
                    .map(|(col, kind)| {
                        let key = if col == ACTIVITY { CONCEPT_NAME } else { col.as_str() };
                        match (ev.get(key), kind) {
                            (None, _) => RawValue::Missing,
                            (Some(Attr::Number(x)), Kind::Numerical) => RawValue::Number(*x),
                            (Some(a), _) => RawValue::Text(a.text()),
                        }
                    })
                    .collect()
            })
            .collect();
        builder.push_trace(id, rows);
    }
    builder.build(bins)
}

fn close(
    name: &str,
    stack: &mut Vec<String>,
    traces: &mut Vec<(String, Vec<BTreeMap<String, Attr>>)>,
    current_trace: &mut Option<PendingTrace>,
    current_event: &mut Option<BTreeMap<String, Attr>>,
    was_empty: bool,
) {
    if !was_empty {
        stack.pop();
    }
    let parent = stack.last().map(String::as_str);
    match name {
        "event" if parent == Some("trace") => {
            if let (Some(ev), Some(t)) = (current_event.take(), current_trace.as_mut()) {
                t.1.push(ev);
            }
        }
        "trace" if parent == Some("log") => {
            if let Some((id, events)) = current_trace.take() {
                let id = id.unwrap_or_else(|| format!("trace{}", traces.len()));
                traces.push((id, events));
            }
        }
        _ => {}
    }
}

#[derive(Debug, Clone)]
enum Attr {
    Text(String),
    Number(f64),
}

impl Attr {
    fn kind(&self) -> Kind {
        match self {
            Attr::Text(_) => Kind::Categorical,
            Attr::Number(_) => Kind::Numerical,
        }
    }

    fn text(&self) -> String {
        match self {
            Attr::Text(s) => s.clone(),
            Attr::Number(x) => format!("{x}"),
        }
    }
}

fn parse_attribute(tag: &str, e: &BytesStart<'_>) -> Result<Option<(String, Attr)>> {
    if !matches!(tag, "string" | "int" | "float" | "date" | "boolean" | "id") {
        return Ok(None);
    }
    let mut key = None;
    let mut value = None;
    for a in e.attributes() {
        let a = a.map_err(|e| Error::Xes(e.to_string()))?;
        let v = a
            .normalized_value(XmlVersion::Implicit1_0)
            .map_err(|e| Error::Xes(e.to_string()))?
            .into_owned();
        match a.key.as_ref() {
            "key" => key = Some(v),
            "value" => value = Some(v),
            _ => {}
        }
    }
    let (Some(key), Some(value)) = (key, value) else {
        return Err(Error::Xes(format!("<{tag}> without key/value")));
    };
    let bad = || Error::Xes(format!("bad {tag} value {value:?} for `{key}`"));
    let attr = match tag {
        "int" => Attr::Number(value.trim().parse::<i64>().map_err(|_| bad())? as f64),
        "float" => Attr::Number(value.trim().parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(bad)?),
        "date" => Attr::Number(parse_date(&value).ok_or_else(bad)?),
        _ => Attr::Text(value.clone()),
    };
    Ok(Some((key, attr)))
}

fn parse_date(s: &str) -> Option<f64> {
    let s = s.trim();
    if let Ok(d) = DateTime::parse_from_rfc3339(s) {
        return Some(d.timestamp_millis() as f64 / 1000.0);
    }
    ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S%.f"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        .map(|d| d.and_utc().timestamp_millis() as f64 / 1000.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::log_model::Value;

    const ONE: &str = r#"<?xml version="1.0" encoding="UTF-8"?>
<log xes.version="1.0">
  <global scope="event"><string key="concept:name" value="__INVALID__"/></global>
  <trace>
    <string key="concept:name" value="case-1"/>
    <event>
      <string key="concept:name" value="Place"/>
      <int key="amount" value="10"/>
      <date key="time:timestamp" value="1970-01-01T00:01:00.000+00:00"/>
      <list key="tags"><string key="x" value="ignored"/></list>
    </event>
    <event>
      <string key="concept:name" value="Ship"/>
      <float key="amount" value="12.5"/>
    </event>
  </trace>
</log>"#;

    #[test]
    fn single_trace() {
        let log = import_xes(ONE, 50).unwrap();
        assert_eq!(log.trace_count(), 1);
        assert_eq!(log.traces()[0].id, "case-1");
        let schema = log.schema();
        let names: Vec<_> = schema.names().collect();
        assert_eq!(names, vec!["activity", "amount", "time:timestamp"]);
        let e0 = &log.traces()[0].events[0];
        let act = e0.get(schema, "activity").unwrap().as_cat().unwrap();
        assert_eq!(schema[0].category(act), Some("Place"));
        assert_eq!(schema.get("amount").unwrap().kind(), Kind::Numerical);
        assert_eq!(e0.get(schema, "amount"), Some(Value::Num(10.0)));
        assert_eq!(e0.get(schema, "time:timestamp"), Some(Value::Num(60.0)));
        let e1 = &log.traces()[0].events[1];
        assert_eq!(e1.get(schema, "time:timestamp"), Some(Value::Missing));
    }

    #[test]
    fn no_traces() {
        let err = import_xes(r#"<log><string key="a" value="b"/></log>"#, 50).unwrap_err();
        assert!(matches!(err, Error::NoTraces), "{err}");
        assert_eq!(err.to_string(), "no traces");
    }

    #[test]
    fn malformed() {
        assert!(matches!(import_xes("<log><trace></log>", 50), Err(Error::Xes(_))));
    }
}
