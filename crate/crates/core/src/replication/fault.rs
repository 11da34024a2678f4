//! Declarative fault rules for the simulated network.
//!
//! A fault script holds one rule per line: `<kind> <match> <param>`. Blank
//! lines and `#` comments are ignored.
//!
//! ```text
//! # kind      match                      param
//! drop        *->tokyo:propagate         2     # drop the first two matching messages
//! duplicate   *->*:seq=1                 1     # deliver one extra copy, one tick later
//! delay       lahore->berlin             3     # hold each matching message 3 extra ticks
//! partition   tokyo<->*                  40    # cut tokyo off until tick 40
//! corrupt     berlin->lahore:ack         1     # garble one acknowledgement digest
//! ```
//!
//! `match` is `FROM->TO` (one direction) or `A<->B` (both directions), where an
//! endpoint is a site id or `*`. Optional suffixes narrow the match:
//! `:propagate`, `:ack`, `:seq=N`. For `drop`, `duplicate` and `corrupt` the
//! parameter caps how many messages the rule affects (`0` = no cap); for
//! `delay` it is the extra latency in ticks; for `partition` it is the tick
//! at which the partition heals.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{MessageKind, SyncMessage};
use crate::domain::SiteId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FaultKind {
    Drop,
    Duplicate,
    Delay,
    Partition,
    Corrupt,
}

impl FaultKind {
    fn keyword(self) -> &'static str {
        match self {
            FaultKind::Drop => "drop",
            FaultKind::Duplicate => "duplicate",
            FaultKind::Delay => "delay",
            FaultKind::Partition => "partition",
            FaultKind::Corrupt => "corrupt",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Endpoint {
    Any,
    Site(SiteId),
}

impl Endpoint {
    fn matches(&self, site: &SiteId) -> bool {
        match self {
            Endpoint::Any => true,
            Endpoint::Site(s) => s == site,
        }
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Any => f.write_str("*"),
            Endpoint::Site(s) => write!(f, "{s}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageMatch {
    pub from: Endpoint,
    pub to: Endpoint,
    pub bidirectional: bool,
    pub kind: Option<MessageKind>,
    pub seq: Option<u64>,
}

impl MessageMatch {
    pub fn matches(&self, msg: &SyncMessage) -> bool {
        let forward = self.from.matches(&msg.from) && self.to.matches(&msg.to);
        let backward = self.bidirectional && self.from.matches(&msg.to) && self.to.matches(&msg.from);
        (forward || backward)
            && self.kind.is_none_or(|k| k == msg.kind)
            && self.seq.is_none_or(|s| s == msg.seq)
    }
}

impl fmt::Display for MessageMatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let arrow = if self.bidirectional { "<->" } else { "->" };
        write!(f, "{}{arrow}{}", self.from, self.to)?;
        match self.kind {
            Some(MessageKind::Propagate) => f.write_str(":propagate")?,
            Some(MessageKind::Ack) => f.write_str(":ack")?,
            None => {}
        }
        if let Some(seq) = self.seq {
            write!(f, ":seq={seq}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultRule {
    pub kind: FaultKind,
    pub matcher: MessageMatch,
    pub param: u64,
}

impl fmt::Display for FaultRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.kind.keyword(), self.matcher, self.param)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("fault script line {line}: {reason}")]
pub struct FaultParseError {
    pub line: usize,
    pub reason: String,
}

fn parse_endpoint(raw: &str) -> Result<Endpoint, String> {
    if raw == "*" {
        return Ok(Endpoint::Any);
    }
    SiteId::new(raw).map(Endpoint::Site).map_err(|e| e.to_string())
}

fn parse_match(raw: &str) -> Result<MessageMatch, String> {
    let mut parts = raw.split(':');
    let endpoints = parts.next().unwrap_or_default();
    let (pair, bidirectional) = match endpoints.split_once("<->") {
        Some(pair) => (pair, true),
        None => (endpoints.split_once("->").ok_or("expected FROM->TO or A<->B")?, false),
    };
    let mut matcher = MessageMatch {
        from: parse_endpoint(pair.0)?,
        to: parse_endpoint(pair.1)?,
        bidirectional,
        kind: None,
        seq: None,
    };
    for filter in parts {
        match filter {
            "propagate" => matcher.kind = Some(MessageKind::Propagate),
            "ack" => matcher.kind = Some(MessageKind::Ack),
            other => {
                let seq = other
                    .strip_prefix("seq=")
                    .and_then(|n| n.parse().ok())
                    .ok_or_else(|| format!("unknown filter {other:?}"))?;
                matcher.seq = Some(seq);
            }
        }
    }
    Ok(matcher)
}

impl FromStr for FaultRule {
    type Err = String;

    fn from_str(line: &str) -> Result<Self, String> {
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [kind, matcher, param] = fields[..] else {
            return Err(format!("expected `kind match param`, got {} field(s)", fields.len()));
        };
        let kind = match kind {
            "drop" => FaultKind::Drop,
            "duplicate" => FaultKind::Duplicate,
            "delay" => FaultKind::Delay,
            "partition" => FaultKind::Partition,
            "corrupt" => FaultKind::Corrupt,
            other => return Err(format!("unknown fault kind {other:?}")),
        };
        let param = param.parse().map_err(|_| format!("parameter {param:?} is not an integer"))?;
        Ok(FaultRule { kind, matcher: parse_match(matcher)?, param })
    }
}

pub fn parse_fault_script(text: &str) -> Result<Vec<FaultRule>, FaultParseError> {
    text.lines()
        .enumerate()
        .filter_map(|(i, line)| {
            let content = line.split('#').next().unwrap_or_default().trim();
            (!content.is_empty()).then_some((i + 1, content))
        })
        .map(|(line, content)| content.parse().map_err(|reason| FaultParseError { line, reason }))
        .collect()
}

pub fn render_fault_script(rules: &[FaultRule]) -> String {
    rules.iter().map(|r| format!("{r}\n")).collect()
}
