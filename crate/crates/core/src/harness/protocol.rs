//! Control-plane wire format between the controller and baseband units.
//!
//! One JSON object per line, UTF-8:
//!
//! ```text
//! {"kind":"SLOT_RESULT","round_id":1,"unit_id":0,"payload":{"slot":2,"tx":2,"rx":1,"gain":[0.5,-0.25]}}
//! ```
//!
//! Complex numbers travel as `[re, im]` pairs. Any `kind` outside the known
//! set is a protocol error.

use std::io::{BufRead, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::sounding::{ImpairmentSpec, PnSpec, TdmaSchedule};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MessageKind {
    Configure,
    Start,
    SlotResult,
    RoundDone,
    Stop,
    Error,
}

impl MessageKind {
    fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "CONFIGURE" => Self::Configure,
            "START" => Self::Start,
            "SLOT_RESULT" => Self::SlotResult,
            "ROUND_DONE" => Self::RoundDone,
            "STOP" => Self::Stop,
            "ERROR" => Self::Error,
            other => return Err(Error::Protocol(format!("unknown message kind {other:?}"))),
        })
    }
}

/// Everything a unit needs to emulate its receive antennas for one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigurePayload {
    /// Global receive-antenna indices owned by the unit.
    pub rx_indices: Vec<usize>,
    /// `gains[i][tx]`: true gain from `tx` to `rx_indices[i]`.
    pub gains: Vec<Vec<[f64; 2]>>,
    pub schedule: TdmaSchedule,
    pub pn: PnSpec,
    pub impairments: ImpairmentSpec,
    /// Round seed; per-link streams derive from it.
    pub seed: u64,
}

/// One receive antenna's estimate for one slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotResult {
    pub slot: usize,
    pub tx: usize,
    pub rx: usize,
    pub gain: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundDone {
    pub results: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorPayload {
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Configure(Box<ConfigurePayload>),
    Start,
    SlotResult(SlotResult),
    RoundDone(RoundDone),
    Stop,
    Error(ErrorPayload),
}

impl Payload {
    pub fn kind(&self) -> MessageKind {
        match self {
            Payload::Configure(_) => MessageKind::Configure,
            Payload::Start => MessageKind::Start,
            Payload::SlotResult(_) => MessageKind::SlotResult,
            Payload::RoundDone(_) => MessageKind::RoundDone,
            Payload::Stop => MessageKind::Stop,
            Payload::Error(_) => MessageKind::Error,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlMessage {
    pub round_id: u64,
    pub unit_id: usize,
    pub payload: Payload,
}

#[derive(Serialize, Deserialize)]
struct Frame {
    kind: String,
    round_id: u64,
    unit_id: usize,
    #[serde(default)]
    payload: Value,
}

impl ControlMessage {
    pub fn new(round_id: u64, unit_id: usize, payload: Payload) -> Self {
        Self {
            round_id,
            unit_id,
            payload,
        }
    }

    pub fn kind(&self) -> MessageKind {
        self.payload.kind()
    }

    /// Single-line JSON, no trailing newline.
    pub fn encode(&self) -> Result<String> {
        let payload = match &self.payload {
            Payload::Configure(c) => serde_json::to_value(c)?,
            Payload::SlotResult(r) => serde_json::to_value(r)?,
            Payload::RoundDone(d) => serde_json::to_value(d)?,
            Payload::Error(e) => serde_json::to_value(e)?,
            Payload::Start | Payload::Stop => Value::Null,
        };
        let kind = serde_json::to_value(self.kind())?;
        let frame = Frame {
            kind: kind.as_str().unwrap_or_default().to_owned(),
            round_id: self.round_id,
            unit_id: self.unit_id,
            payload,
        };
        Ok(serde_json::to_string(&frame)?)
    }

    pub fn decode(line: &str) -> Result<Self> {
        let frame: Frame = serde_json::from_str(line.trim_end())
            .map_err(|e| Error::Protocol(format!("malformed frame: {e}")))?;
        let kind = MessageKind::parse(&frame.kind)?;
        let bad =
            |e: serde_json::Error| Error::Protocol(format!("bad {} payload: {e}", frame.kind));
        let payload = match kind {
            MessageKind::Configure => Payload::Configure(Box::new(
                serde_json::from_value(frame.payload).map_err(bad)?,
            )),
            MessageKind::SlotResult => {
                Payload::SlotResult(serde_json::from_value(frame.payload).map_err(bad)?)
            }
            MessageKind::RoundDone => {
                Payload::RoundDone(serde_json::from_value(frame.payload).map_err(bad)?)
            }
            MessageKind::Error => {
                Payload::Error(serde_json::from_value(frame.payload).map_err(bad)?)
            }
            MessageKind::Start => Payload::Start,
            MessageKind::Stop => Payload::Stop,
        };
        Ok(Self {
            round_id: frame.round_id,
            unit_id: frame.unit_id,
            payload,
        })
    }
}

/// Writes one frame and flushes.
pub fn write_message(w: &mut impl Write, msg: &ControlMessage) -> Result<()> {
    let mut line = msg.encode()?;
    line.push('\n');
    w.write_all(line.as_bytes())?;
    w.flush()?;
    Ok(())
}

/// Next frame, or `None` on a clean end of stream.
pub fn read_message(r: &mut impl BufRead) -> Result<Option<ControlMessage>> {
    let mut line = String::new();
    loop {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Ok(None);
        }
        if !line.trim().is_empty() {
            return ControlMessage::decode(&line).map(Some);
        }
    }
}

pub fn complex_to_pair(z: Complex64) -> [f64; 2] {
    [z.re, z.im]
}

pub fn pair_to_complex(p: [f64; 2]) -> Complex64 {
    Complex64::new(p[0], p[1])
}
