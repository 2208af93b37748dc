//! Wire messages. Every message is one JSON object with a `type` tag.

use serde::{Deserialize, Serialize};

use crate::filters::Regime;
use crate::guidance::GuidanceSet;
use crate::media::MediaHit;
use crate::pose::ANGLE_COUNT;
use crate::sim::trial::TrialConditions;
use crate::vae::LatentCoord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    Frame {
        seq: u64,
        t_ms: i64,
        landmarks: Vec<[f64; 3]>,
    },
    /// Slider mode; without `t_ms` the timestamp is derived from `seq` at the nominal rate.
    Angles {
        seq: u64,
        angles: [f64; ANGLE_COUNT],
        #[serde(default, skip_serializing_if = "Option::is_none")]
        t_ms: Option<i64>,
    },
    /// Without a target the next point of the session's target set is used.
    StartTrial {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        target: Option<LatentCoord>,
    },
    Mark,
    SetCondition {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        guidance: Option<bool>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        stable: Option<bool>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        smooth: Option<bool>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateMessage {
    pub seq: u64,
    pub t_ms: i64,
    pub raw: LatentCoord,
    pub stable: LatentCoord,
    pub smooth: LatentCoord,
    pub regime: Regime,
    pub degenerate: bool,
    pub guidance: Option<GuidanceSet>,
    pub media: Option<Vec<MediaHit>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    pub target: LatentCoord,
    pub marked: LatentCoord,
    pub completion_time_s: f64,
    pub final_distance: f64,
    pub frames: usize,
    pub conditions: TrialConditions,
    pub next_target: LatentCoord,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    ParseError,
    InvalidFrame,
    DegeneratePose,
    BadTimestamp,
    TrialInProgress,
    NoTrial,
    NoPosition,
    Internal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    State(StateMessage),
    TrialStarted {
        trial: usize,
        target: LatentCoord,
    },
    TrialResult(TrialResult),
    Condition {
        guidance: bool,
        stable: bool,
        smooth: bool,
    },
    Error {
        code: ErrorCode,
        message: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seq: Option<u64>,
    },
}

impl ServerMessage {
    pub fn error(code: ErrorCode, message: impl Into<String>, seq: Option<u64>) -> Self {
        Self::Error {
            code,
            message: message.into(),
            seq,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn client_messages_parse() {
        let m: ClientMessage = serde_json::from_str(r#"{"type":"mark"}"#).unwrap();
        assert_eq!(m, ClientMessage::Mark);
        let m: ClientMessage = serde_json::from_str(r#"{"type":"start_trial","target":[0.25,0.75]}"#).unwrap();
        assert_eq!(
            m,
            ClientMessage::StartTrial {
                target: Some(LatentCoord::new(0.25, 0.75))
            }
        );
        let m: ClientMessage = serde_json::from_str(r#"{"type":"set_condition","guidance":false}"#).unwrap();
        assert_eq!(
            m,
            ClientMessage::SetCondition {
                guidance: Some(false),
                stable: None,
                smooth: None
            }
        );
        let m: ClientMessage = serde_json::from_str(r#"{"type":"angles","seq":4,"angles":[0,0,0,0,0,0,0,0]}"#).unwrap();
        assert!(matches!(m, ClientMessage::Angles { seq: 4, t_ms: None, .. }));
    }

    #[test]
    fn state_serializes_null_guidance() {
        let s = ServerMessage::State(StateMessage {
            seq: 1,
            t_ms: 33,
            raw: LatentCoord::new(0.5, 0.5),
            stable: LatentCoord::new(0.5, 0.5),
            smooth: LatentCoord::new(0.5, 0.5),
            regime: Regime::Slow,
            degenerate: false,
            guidance: None,
            media: None,
        });
        let json = serde_json::to_string(&s).unwrap();
        assert!(json.starts_with(r#"{"type":"state","seq":1"#), "{json}");
        assert!(json.contains(r#""regime":"slow""#));
        assert!(json.contains(r#""guidance":null"#) && json.contains(r#""media":null"#));
    }

    #[test]
    fn error_code_is_snake_case() {
        let e = ServerMessage::error(ErrorCode::NoTrial, "no trial", None);
        assert_eq!(
            serde_json::to_string(&e).unwrap(),
            r#"{"type":"error","code":"no_trial","message":"no trial"}"#
        );
    }
}
