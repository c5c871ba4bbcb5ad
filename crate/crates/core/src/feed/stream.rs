//! Parser for live-stream messages in the RIS Live JSON schema.
//!
//! ```json
//! {"type": "ris_message",
//!  "data": {"timestamp": 1467387000.12, "peer": "192.0.2.1", "peer_asn": "64500",
//!           "type": "UPDATE", "path": [64500, 65002],
//!           "announcements": [{"next_hop": "192.0.2.1", "prefixes": ["10.0.0.0/23"]}],
//!           "withdrawals": []}}
//! ```
//!
//! Unknown fields are ignored. IPv6 prefixes are skipped.

use serde_json::{Map, Value};
use thiserror::Error;

use super::{RouteObservation, SourceId};
use crate::clock::Timestamp;
use crate::prefix::{AsPath, Asn, IpPrefix};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StreamError {
    #[error("schema violation at `{field}`: {detail}")]
    SchemaViolation { field: String, detail: String },
    #[error("update carries neither announcements nor withdrawals")]
    EmptyUpdate,
}

fn violation(field: impl Into<String>, detail: impl Into<String>) -> StreamError {
    StreamError::SchemaViolation {
        field: field.into(),
        detail: detail.into(),
    }
}

fn require<'a>(obj: &'a Map<String, Value>, field: &str, path: &str) -> Result<&'a Value, StreamError> {
    obj.get(field)
        .filter(|v| !v.is_null())
        .ok_or_else(|| violation(path, "missing required field"))
}

/// Parses one complete message into observations, one per announced and one
/// per withdrawn prefix. `received_at` comes from the caller's clock.
pub fn parse_stream_message(
    raw: &str,
    source: &SourceId,
    received_at: Timestamp,
) -> Result<Vec<RouteObservation>, StreamError> {
    let value: Value = serde_json::from_str(raw).map_err(|e| violation("$", e.to_string()))?;
    let root = value
        .as_object()
        .ok_or_else(|| violation("$", "message is not an object"))?;

    match require(root, "type", "type")?.as_str() {
        Some("ris_message") => {}
        _ => return Err(violation("type", "expected \"ris_message\"")),
    }
    let data = require(root, "data", "data")?
        .as_object()
        .ok_or_else(|| violation("data", "expected an object"))?;

    let timestamp = require(data, "timestamp", "data.timestamp")?
        .as_f64()
        .filter(|t| t.is_finite())
        .ok_or_else(|| violation("data.timestamp", "expected a number"))?;
    let peer = require(data, "peer", "data.peer")?
        .as_str()
        .ok_or_else(|| violation("data.peer", "expected a string"))?;
    parse_asn_field(require(data, "peer_asn", "data.peer_asn")?, "data.peer_asn")?;
    match require(data, "type", "data.type")?.as_str() {
        Some("UPDATE") => {}
        _ => return Err(violation("data.type", "expected \"UPDATE\"")),
    }

    let announced = prefix_groups(data)?;
    let withdrawn = match data.get("withdrawals") {
        None | Some(Value::Null) => Vec::new(),
        Some(Value::Array(items)) => items
            .iter()
            .enumerate()
            .map(|(i, v)| parse_prefix_value(v, &format!("data.withdrawals[{i}]")))
            .collect::<Result<Vec<_>, _>>()?,
        Some(_) => return Err(violation("data.withdrawals", "expected an array")),
    };

    let path = if announced.is_empty() {
        None
    } else {
        Some(parse_path(require(data, "path", "data.path")?)?)
    };

    let announced: Vec<IpPrefix> = announced.into_iter().flatten().collect();
    let withdrawn: Vec<IpPrefix> = withdrawn.into_iter().flatten().collect();
    if announced.is_empty() && withdrawn.is_empty() {
        return Err(StreamError::EmptyUpdate);
    }

    let mut out = Vec::with_capacity(announced.len() + withdrawn.len());
    for prefix in announced {
        let path = path.clone().expect("path parsed when announcements exist");
        out.push(RouteObservation::announce(
            source.clone(),
            peer,
            prefix,
            path,
            timestamp,
            received_at,
        ));
    }
    for prefix in withdrawn {
        out.push(RouteObservation::withdraw(
            source.clone(),
            peer,
            prefix,
            timestamp,
            received_at,
        ));
    }
    Ok(out)
}

/// Announced prefixes, `None` entries are skipped IPv6 prefixes.
fn prefix_groups(data: &Map<String, Value>) -> Result<Vec<Option<IpPrefix>>, StreamError> {
    let groups = match data.get("announcements") {
        None | Some(Value::Null) => return Ok(Vec::new()),
        Some(Value::Array(groups)) => groups,
        Some(_) => return Err(violation("data.announcements", "expected an array")),
    };
    let mut out = Vec::new();
    for (i, group) in groups.iter().enumerate() {
        let field = format!("data.announcements[{i}]");
        let group = group
            .as_object()
            .ok_or_else(|| violation(&field, "expected an object"))?;
        let prefixes = require(group, "prefixes", &format!("{field}.prefixes"))?
            .as_array()
            .ok_or_else(|| violation(format!("{field}.prefixes"), "expected an array"))?;
        for (j, v) in prefixes.iter().enumerate() {
            out.push(parse_prefix_value(v, &format!("{field}.prefixes[{j}]"))?);
        }
    }
    Ok(out)
}

fn parse_prefix_value(v: &Value, field: &str) -> Result<Option<IpPrefix>, StreamError> {
    let text = v.as_str().ok_or_else(|| violation(field, "expected a prefix string"))?;
    if text.contains(':') {
        return Ok(None);
    }
    text.parse().map(Some).map_err(|e| violation(field, format!("{e}")))
}

fn parse_asn_field(v: &Value, field: &str) -> Result<Asn, StreamError> {
    match v {
        Value::Number(n) => n
            .as_u64()
            .and_then(|n| u32::try_from(n).ok())
            .map(Asn)
            .ok_or_else(|| violation(field, "AS number out of range")),
        Value::String(s) => s.parse().map_err(|e| violation(field, format!("{e}"))),
        _ => Err(violation(field, "expected an AS number")),
    }
}

fn parse_path(v: &Value) -> Result<AsPath, StreamError> {
    let items = v
        .as_array()
        .ok_or_else(|| violation("data.path", "expected an array"))?;
    let mut hops = Vec::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        let field = format!("data.path[{i}]");
        let asn = match item {
            // AS_SET: only a singleton has an unambiguous member
            Value::Array(set) if set.len() == 1 => parse_asn_field(&set[0], &field)?,
            Value::Array(_) => {
                return Err(violation(field, "AS_SET with multiple members"));
            }
            other => parse_asn_field(other, &field)?,
        };
        hops.push(asn);
    }
    let path = AsPath::new(hops).ok_or_else(|| violation("data.path", "empty path"))?;
    if path.origin().value() == 0 {
        return Err(violation("data.path", "origin AS 0"));
    }
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feed::RouteUpdate;

    fn src() -> SourceId {
        SourceId::new("ris")
    }

    fn msg(data: &str) -> String {
        format!(r#"{{"type":"ris_message","data":{{{data}}}}}"#)
    }

    const HEAD: &str = r#""timestamp":100.5,"peer":"192.0.2.1","peer_asn":"64500","type":"UPDATE""#;

    #[test]
    fn single_announcement() {
        let raw = msg(&format!(
            r#"{HEAD},"path":[64500,65002],"announcements":[{{"next_hop":"192.0.2.1","prefixes":["10.0.0.0/23"]}}]"#
        ));
        let obs = parse_stream_message(&raw, &src(), 7.0).unwrap();
        assert_eq!(obs.len(), 1);
        assert_eq!(obs[0].origin(), Some(Asn(65002)));
        assert_eq!(obs[0].vantage_point, "192.0.2.1");
        assert_eq!(obs[0].timestamp, 100.5);
        assert_eq!(obs[0].received_at, 7.0);
        assert_eq!(obs[0].prefix.to_string(), "10.0.0.0/23");
    }

    #[test]
    fn withdrawal_has_no_path() {
        let raw = msg(&format!(r#"{HEAD},"withdrawals":["10.0.0.0/23"]"#));
        let obs = parse_stream_message(&raw, &src(), 0.0).unwrap();
        assert_eq!(obs.len(), 1);
        assert_eq!(obs[0].update, RouteUpdate::Withdraw);
    }

    #[test]
    fn mixed_message_counts() {
        let raw = msg(&format!(
            r#"{HEAD},"path":[64500,65002],"announcements":[{{"prefixes":["10.0.0.0/24"]}},{{"prefixes":["10.0.1.0/24"]}}],"withdrawals":["192.0.2.0/24"]"#
        ));
        assert_eq!(parse_stream_message(&raw, &src(), 0.0).unwrap().len(), 3);
    }

    #[test]
    fn empty_update() {
        let raw = msg(&format!(r#"{HEAD},"path":[],"announcements":[],"withdrawals":[]"#));
        assert_eq!(parse_stream_message(&raw, &src(), 0.0), Err(StreamError::EmptyUpdate));
        let v6_only = msg(&format!(r#"{HEAD},"withdrawals":["2001:db8::/32"]"#));
        assert_eq!(
            parse_stream_message(&v6_only, &src(), 0.0),
            Err(StreamError::EmptyUpdate)
        );
    }

    #[test]
    fn schema_violations_name_the_field() {
        let field_of = |raw: &str| match parse_stream_message(raw, &src(), 0.0) {
            Err(StreamError::SchemaViolation { field, .. }) => field,
            other => panic!("expected violation, got {other:?}"),
        };
        assert_eq!(field_of("not json"), "$");
        assert_eq!(field_of(r#"{"type":"ris_error","data":{}}"#), "type");
        assert_eq!(field_of(r#"{"type":"ris_message"}"#), "data");
        assert_eq!(
            field_of(&msg(
                r#""peer":"p","peer_asn":1,"type":"UPDATE","withdrawals":["10.0.0.0/8"]"#
            )),
            "data.timestamp"
        );
        assert_eq!(
            field_of(&msg(&format!(
                r#"{HEAD},"announcements":[{{"prefixes":["10.0.0.0/23"]}}]"#
            ))),
            "data.path"
        );
        assert_eq!(
            field_of(&msg(&format!(
                r#"{HEAD},"path":[1,2],"announcements":[{{"prefixes":["10.0.1.0/23"]}}]"#
            ))),
            "data.announcements[0].prefixes[0]"
        );
        assert_eq!(
            field_of(&msg(&format!(
                r#"{HEAD},"path":[1,[2,3]],"announcements":[{{"prefixes":["10.0.0.0/23"]}}]"#
            ))),
            "data.path[1]"
        );
        assert_eq!(
            field_of(&msg(r#""timestamp":1,"peer":"p","peer_asn":1,"type":"KEEPALIVE""#)),
            "data.type"
        );
    }

    #[test]
    fn singleton_as_set_is_flattened() {
        let raw = msg(&format!(
            r#"{HEAD},"path":[64500,[65002]],"announcements":[{{"prefixes":["10.0.0.0/23"]}}]"#
        ));
        let obs = parse_stream_message(&raw, &src(), 0.0).unwrap();
        assert_eq!(obs[0].origin(), Some(Asn(65002)));
    }
}
