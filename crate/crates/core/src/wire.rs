//! Live-session wire schema.
//!
//! Each message is one JSON object carried in its own length-delimited
//! text frame (a WebSocket text message). The `type` field selects the
//! variant. On connect the server sends `Hello` carrying
//! [`WIRE_VERSION`]; clients must refuse other versions.
//!
//! ```text
//! {"type":"Hello","version":1,"tick_hz":20.0,"kappa_max":0.2}
//! {"type":"Telemetry","tick":7,"pose":{"x":..,"y":..,"heading":..},
//!  "u_N":..,"u_H":..|null,"variance":..,"sigma":..,"u_PA":..,"cross_track":..}
//! {"type":"HumanCommand","u_H":0.05}
//! {"type":"SessionControl","action":"start"|"stop"|"reset","kappa":2.0}
//! {"type":"Error","message":"..."}
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pa::StepRecord;

pub const WIRE_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WirePose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Telemetry {
    pub tick: u64,
    pub pose: WirePose,
    #[serde(rename = "u_N")]
    pub u_n: f64,
    #[serde(rename = "u_H")]
    pub u_h: Option<f64>,
    pub variance: f64,
    pub sigma: f64,
    #[serde(rename = "u_PA")]
    pub u_pa: f64,
    pub cross_track: f64,
}

impl From<&StepRecord> for Telemetry {
    fn from(r: &StepRecord) -> Self {
        Self {
            tick: r.tick,
            pose: WirePose {
                x: r.pose.x,
                y: r.pose.y,
                heading: r.pose.heading,
            },
            u_n: r.u_n,
            u_h: r.u_h,
            variance: r.variance,
            sigma: r.sigma,
            u_pa: r.u_pa,
            cross_track: r.cross_track,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionAction {
    Start,
    Stop,
    Reset,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", deny_unknown_fields)]
pub enum WireMessage {
    Hello {
        version: u32,
        tick_hz: f64,
        kappa_max: f64,
    },
    Telemetry(Telemetry),
    HumanCommand {
        #[serde(rename = "u_H")]
        u_h: f64,
    },
    SessionControl {
        action: SessionAction,
        /// Optional new fusion gain.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        kappa: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tick_hz: Option<f64>,
    },
    Error {
        message: String,
    },
}

impl WireMessage {
    pub fn encode(&self) -> String {
        serde_json::to_string(self).expect("wire messages always serialize")
    }

    pub fn decode(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidConfig(format!("malformed message: {e}")))
    }

    /// Checks the schema invariants: telemetry obeys the blending
    /// identity with sigma in [0, 1]; human commands are within bounds.
    pub fn validate(&self, kappa_max: f64) -> Result<()> {
        match self {
            WireMessage::Telemetry(t) => {
                let u_h = t.u_h.unwrap_or(0.0);
                let blend = (1.0 - t.sigma) * t.u_n + t.sigma * u_h;
                if !(0.0..=1.0).contains(&t.sigma) || (t.u_pa - blend).abs() > 1e-12 {
                    return Err(Error::OutOfRange("telemetry violates the blending identity".into()));
                }
                Ok(())
            }
            WireMessage::HumanCommand { u_h } => {
                if !u_h.is_finite() || u_h.abs() > kappa_max {
                    return Err(Error::OutOfRange(format!("u_H {u_h} exceeds {kappa_max}")));
                }
                Ok(())
            }
            WireMessage::SessionControl { kappa, tick_hz, .. } => {
                if kappa.is_some_and(|k| !(k >= 0.0 && k.is_finite())) {
                    return Err(Error::InvalidConfig("kappa must be finite and >= 0".into()));
                }
                if tick_hz.is_some_and(|h| !(h > 0.0 && h <= 1000.0)) {
                    return Err(Error::InvalidConfig("tick_hz must be in (0, 1000]".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_names_on_the_wire() {
        let msg = WireMessage::HumanCommand { u_h: 0.05 };
        assert_eq!(msg.encode(), r#"{"type":"HumanCommand","u_H":0.05}"#);
        let t = WireMessage::Telemetry(Telemetry {
            tick: 3,
            pose: WirePose {
                x: 1.0,
                y: 2.0,
                heading: 0.5,
            },
            u_n: 0.1,
            u_h: None,
            variance: 0.2,
            sigma: 0.0,
            u_pa: 0.1,
            cross_track: -0.3,
        });
        let text = t.encode();
        for key in ["\"u_N\"", "\"u_H\":null", "\"u_PA\"", "\"sigma\"", "\"cross_track\"", "\"pose\""] {
            assert!(text.contains(key), "{text}");
        }
        assert_eq!(WireMessage::decode(&text).unwrap(), t);
        t.validate(0.2).unwrap();
    }

    #[test]
    fn malformed_and_invalid() {
        assert!(WireMessage::decode("{\"type\":\"HumanCommand\"}").is_err());
        assert!(WireMessage::decode("not json").is_err());
        let big = WireMessage::HumanCommand { u_h: 0.5 };
        assert!(big.validate(0.2).is_err());
        let ctl = WireMessage::decode(r#"{"type":"SessionControl","action":"reset","kappa":3}"#).unwrap();
        assert_eq!(
            ctl,
            WireMessage::SessionControl {
                action: SessionAction::Reset,
                kappa: Some(3.0),
                tick_hz: None
            }
        );
    }
}
