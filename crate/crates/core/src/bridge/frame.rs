//! Wire frames. Each WebSocket text message is one JSON frame tagged by
//! `op`; a `publish` frame with `attachment: n` is followed by one binary
//! message of `n` bytes.

use crate::agents::ChassisCommand;
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum Frame {
    Subscribe {
        topic: String,
    },
    Unsubscribe {
        topic: String,
    },
    Publish {
        topic: String,
        #[serde(default)]
        payload: Value,
        /// Byte length of the binary message that follows.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        attachment: Option<usize>,
    },
    Call {
        id: u64,
        method: String,
        #[serde(default)]
        params: Value,
    },
    Result {
        id: u64,
        result: Value,
    },
    Error {
        #[serde(default)]
        id: Option<u64>,
        code: String,
        message: String,
    },
    Event {
        name: String,
        #[serde(default)]
        payload: Value,
    },
}

impl Frame {
    pub fn decode(text: &str) -> Result<Frame, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn encode(&self) -> String {
        serde_json::to_string(self).expect("frames always serialize")
    }

    pub fn error(id: Option<u64>, code: &str, message: impl Into<String>) -> Frame {
        Frame::Error {
            id,
            code: code.to_string(),
            message: message.into(),
        }
    }
}

pub const CHASSIS_TOPIC: &str = "/chassis";
pub const EVENTS_TOPIC: &str = "/events";

/// `/chassis` addresses the first ego, `/chassis/<id>` a specific agent.
/// `None` for other topics, `Some(None)` for the bare topic.
pub fn chassis_target(topic: &str) -> Option<Option<u32>> {
    if topic == CHASSIS_TOPIC {
        return Some(None);
    }
    topic
        .strip_prefix("/chassis/")
        .and_then(|s| s.parse().ok())
        .map(Some)
}

/// Decodes a chassis payload: missing fields are 0/false, values are
/// clamped into range, non-numeric fields are an error.
pub fn decode_chassis(payload: &Value) -> Result<ChassisCommand, String> {
    let obj = match payload {
        Value::Object(m) => m,
        Value::Null => return Ok(ChassisCommand::default()),
        other => return Err(format!("chassis payload must be an object, got {other}")),
    };
    let num = |k: &str| -> Result<f64, String> {
        match obj.get(k) {
            None | Some(Value::Null) => Ok(0.0),
            Some(v) => v
                .as_f64()
                .filter(|x| x.is_finite())
                .ok_or_else(|| format!("`{k}` must be a number, got {v}")),
        }
    };
    for k in obj.keys() {
        if !matches!(k.as_str(), "steering" | "throttle" | "brake" | "reverse") {
            return Err(format!("unknown chassis field `{k}`"));
        }
    }
    let reverse = match obj.get("reverse") {
        None | Some(Value::Null) => false,
        Some(Value::Bool(b)) => *b,
        Some(v) => return Err(format!("`reverse` must be a boolean, got {v}")),
    };
    Ok(ChassisCommand::clamped(num("steering")?, num("throttle")?, num("brake")?, reverse))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn every_op_round_trips() {
        let frames = vec![
            Frame::Subscribe { topic: "/lidar".into() },
            Frame::Unsubscribe { topic: "/lidar".into() },
            Frame::Publish {
                topic: "/chassis".into(),
                payload: json!({"throttle": 0.5}),
                attachment: None,
            },
            Frame::Publish {
                topic: "/lidar".into(),
                payload: json!({"count": 3}),
                attachment: Some(48),
            },
            Frame::Call {
                id: 7,
                method: "sim/step".into(),
                params: json!({"ticks": 1}),
            },
            Frame::Result { id: 7, result: json!({"tick": 1}) },
            Frame::error(Some(7), "busy", "running"),
            Frame::error(None, "bad_frame", "x"),
            Frame::Event {
                name: "overflow".into(),
                payload: json!({"dropped": 1}),
            },
        ];
        for f in frames {
            assert_eq!(Frame::decode(&f.encode()).unwrap(), f);
        }
    }

    #[test]
    fn rejects_garbage() {
        assert!(Frame::decode("{").is_err());
        assert!(Frame::decode(r#"{"op":"launch"}"#).is_err());
        assert!(Frame::decode(r#"{"op":"call","method":"x"}"#).is_err());
        assert!(Frame::decode(r#"{"op":"subscribe","topic":"/a","extra":1}"#).is_err());
    }

    #[test]
    fn chassis_decoding() {
        let c = decode_chassis(&json!({"steering":0,"throttle":0.5,"brake":0})).unwrap();
        assert_eq!(c.throttle, 0.5);
        assert_eq!(decode_chassis(&json!({"steering":2.0})).unwrap().steering, 1.0);
        assert!(decode_chassis(&json!({"throttle":"fast"})).is_err());
        assert_eq!(chassis_target("/chassis"), Some(None));
        assert_eq!(chassis_target("/chassis/3"), Some(Some(3)));
        assert_eq!(chassis_target("/lidar"), None);
    }
}
