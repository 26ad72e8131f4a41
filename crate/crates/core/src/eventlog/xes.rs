//! Reading and writing the XES subset the toolkit understands: `<log>`,
//! `<trace>` and `<event>` elements with typed key/value attributes. Only
//! the concept (`concept:name`) and time (`time:timestamp`) extensions are
//! interpreted; other extensions are ingested as plain attributes.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use quick_xml::escape::escape;
use quick_xml::events::{BytesStart, Event as XmlEvent};
use quick_xml::Reader;

use super::time::{format_timestamp, parse_timestamp};
use super::{AttributeValue, Event, EventLog, Trace};
use crate::error::{Error, Result};
use crate::ParseOptions;

const CONCEPT_NAME: &str = "concept:name";
const TIME_TIMESTAMP: &str = "time:timestamp";

pub fn parse_xes(path: impl AsRef<Path>) -> Result<EventLog> {
    parse_xes_with(path, &ParseOptions::default())
}

pub fn parse_xes_with(path: impl AsRef<Path>, options: &ParseOptions) -> Result<EventLog> {
    let text = fs::read_to_string(path)?;
    parse_xes_str(&text, options)
}

fn line_of(text: &str, byte_pos: u64) -> usize {
    let end = (byte_pos as usize).min(text.len());
    text.as_bytes()[..end].iter().filter(|&&b| b == b'\n').count() + 1
}

#[derive(Default)]
struct EventBuilder {
    activity: Option<String>,
    timestamp: Option<i64>,
    attributes: BTreeMap<String, AttributeValue>,
}

#[derive(Default)]
struct TraceBuilder {
    case_id: Option<String>,
    events: Vec<Event>,
}

pub fn parse_xes_str(text: &str, options: &ParseOptions) -> Result<EventLog> {
    let mut reader = Reader::from_str(text);
    reader.config_mut().trim_text(true);

    let mut stack: Vec<String> = Vec::new();
    let mut traces = Vec::new();
    let mut trace: Option<TraceBuilder> = None;
    let mut event: Option<EventBuilder> = None;

    loop {
        let pos = reader.buffer_position();
        let xml_event = reader.read_event().map_err(|e| {
            let at = reader.error_position().max(pos);
            Error::parse(line_of(text, at), format!("malformed XML: {e}"))
        })?;
        let line = || line_of(text, pos);
        match xml_event {
            XmlEvent::Start(ref e) | XmlEvent::Empty(ref e) => {
                let empty = matches!(xml_event, XmlEvent::Empty(_));
                let name = String::from_utf8_lossy(e.local_name().as_ref()).into_owned();
                let parent = stack.last().map(String::as_str);
                match name.as_str() {
                    "trace" if parent == Some("log") => trace = Some(TraceBuilder::default()),
                    "event" if parent == Some("trace") => event = Some(EventBuilder::default()),
                    _ => {
                        if let Some((key, value)) = typed_attribute(e, &name, line())? {
                            match (parent, event.as_mut(), trace.as_mut()) {
                                (Some("event"), Some(ev), _) => {
                                    ingest_event_attribute(ev, key, value, options, line())?
                                }
                                (Some("trace"), None, Some(tr)) if key == CONCEPT_NAME => {
                                    if let XesValue::Text(id) = value {
                                        tr.case_id = Some(id);
                                    }
                                }
                                _ => {}
                            }
                        }
                    }
                }
                if empty {
                    close(&name, &mut stack, &mut trace, &mut event, &mut traces)?;
                } else {
                    stack.push(name);
                }
            }
            XmlEvent::End(ref e) => {
                let name = String::from_utf8_lossy(e.local_name().as_ref()).into_owned();
                stack.pop();
                close(&name, &mut stack, &mut trace, &mut event, &mut traces)?;
            }
            XmlEvent::Eof => {
                if !stack.is_empty() {
                    return Err(Error::parse(
                        line(),
                        format!("unexpected end of file inside <{}>", stack.join("><")),
                    ));
                }
                break;
            }
            _ => {}
        }
    }
    EventLog::new(traces)
}

fn close(
    name: &str,
    stack: &mut [String],
    trace: &mut Option<TraceBuilder>,
    event: &mut Option<EventBuilder>,
    traces: &mut Vec<Trace>,
) -> Result<()> {
    let parent = stack.last().map(String::as_str);
    match name {
        "event" if parent == Some("trace") => {
            let built = event.take().unwrap_or_default();
            let tr = trace.get_or_insert_with(TraceBuilder::default);
            let activity = built.activity.ok_or_else(|| {
                Error::Schema(format!(
                    "trace {} has an event without \"concept:name\"",
                    describe_trace(tr, traces.len())
                ))
            })?;
            tr.events.push(Event {
                activity,
                attributes: built.attributes,
                timestamp: built.timestamp,
            });
        }
        "trace" if parent == Some("log") => {
            let built = trace.take().unwrap_or_default();
            let case_id = built
                .case_id
                .unwrap_or_else(|| format!("trace_{}", traces.len()));
            let mut events = built.events;
            if events.iter().all(|e| e.timestamp.is_some()) {
                events.sort_by_key(|e| e.timestamp);
            }
            traces.push(Trace { case_id, events });
        }
        _ => {}
    }
    Ok(())
}

fn describe_trace(trace: &TraceBuilder, index: usize) -> String {
    match &trace.case_id {
        Some(id) => format!("{id:?}"),
        None => format!("#{index}"),
    }
}

enum XesValue {
    Text(String),
    Number(f64),
    Flag(bool),
    Date(i64),
}

fn typed_attribute(
    element: &BytesStart<'_>,
    tag: &str,
    line: usize,
) -> Result<Option<(String, XesValue)>> {
    if !matches!(tag, "string" | "int" | "float" | "boolean" | "date" | "id") {
        return Ok(None);
    }
    let mut key = None;
    let mut value = None;
    for attr in element.attributes() {
        let attr = attr.map_err(|e| Error::parse(line, format!("bad XML attribute: {e}")))?;
        let text = attr
            .unescape_value()
            .map_err(|e| Error::parse(line, format!("bad XML attribute value: {e}")))?
            .into_owned();
        match attr.key.as_ref() {
            b"key" => key = Some(text),
            b"value" => value = Some(text),
            _ => {}
        }
    }
    let (Some(key), Some(raw)) = (key, value) else {
        return Err(Error::parse(line, format!("<{tag}> needs both key and value")));
    };
    let bad = |what: &str| Error::parse(line, format!("{key:?}: {raw:?} is not a valid {what}"));
    let parsed = match tag {
        "string" | "id" => XesValue::Text(raw.clone()),
        "int" | "float" => match raw.trim().parse::<f64>() {
            Ok(v) if v.is_finite() => XesValue::Number(v),
            _ => return Err(bad(tag)),
        },
        "boolean" => match raw.trim().to_ascii_lowercase().as_str() {
            "true" => XesValue::Flag(true),
            "false" => XesValue::Flag(false),
            _ => return Err(bad("boolean")),
        },
        "date" => XesValue::Date(parse_timestamp(&raw).ok_or_else(|| bad("date"))?),
        _ => unreachable!(),
    };
    Ok(Some((key, parsed)))
}

fn ingest_event_attribute(
    event: &mut EventBuilder,
    key: String,
    value: XesValue,
    options: &ParseOptions,
    line: usize,
) -> Result<()> {
    if key == CONCEPT_NAME {
        match value {
            XesValue::Text(name) => event.activity = Some(name),
            _ => return Err(Error::parse(line, "\"concept:name\" must be a string")),
        }
        return Ok(());
    }
    if key == TIME_TIMESTAMP {
        if let XesValue::Date(ts) = value {
            event.timestamp = Some(ts);
            return Ok(());
        }
        return Err(Error::parse(line, "\"time:timestamp\" must be a date"));
    }
    if options.is_dropped(&key) {
        return Ok(());
    }
    let value = match value {
        XesValue::Text(s) => AttributeValue::Categorical(s),
        XesValue::Number(v) => AttributeValue::Numeric(v),
        XesValue::Flag(b) => AttributeValue::Boolean(b),
        // Dates other than the event timestamp carry no encodable value.
        XesValue::Date(_) => return Ok(()),
    };
    event.attributes.insert(key, value);
    Ok(())
}

/// Writes `log` as XES. Numeric attributes are written as `<float>`.
pub fn write_xes<W: Write>(log: &EventLog, mut out: W) -> Result<()> {
    writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#)?;
    writeln!(out, r#"<log xes.version="1.0" xes.features="">"#)?;
    writeln!(
        out,
        r#"  <extension name="Concept" prefix="concept" uri="http://www.xes-standard.org/concept.xesext"/>"#
    )?;
    writeln!(
        out,
        r#"  <extension name="Time" prefix="time" uri="http://www.xes-standard.org/time.xesext"/>"#
    )?;
    for trace in log.traces() {
        writeln!(out, "  <trace>")?;
        writeln!(
            out,
            r#"    <string key="concept:name" value="{}"/>"#,
            escape(trace.case_id.as_str())
        )?;
        for event in &trace.events {
            writeln!(out, "    <event>")?;
            writeln!(
                out,
                r#"      <string key="concept:name" value="{}"/>"#,
                escape(event.activity.as_str())
            )?;
            if let Some(ts) = event.timestamp {
                writeln!(
                    out,
                    r#"      <date key="time:timestamp" value="{}"/>"#,
                    format_timestamp(ts)
                )?;
            }
            for (name, value) in &event.attributes {
                let tag = match value {
                    AttributeValue::Numeric(_) => "float",
                    AttributeValue::Categorical(_) => "string",
                    AttributeValue::Boolean(_) => "boolean",
                };
                writeln!(
                    out,
                    r#"      <{tag} key="{}" value="{}"/>"#,
                    escape(name.as_str()),
                    escape(value.to_string().as_str())
                )?;
            }
            writeln!(out, "    </event>")?;
        }
        writeln!(out, "  </trace>")?;
    }
    writeln!(out, "</log>")?;
    Ok(())
}
