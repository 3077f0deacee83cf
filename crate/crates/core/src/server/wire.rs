//! Newline-delimited JSON framing for target frames and recorded detections.
//!
//! One [`TargetMessage`] per line:
//! `{"seq":12,"t":0.6,"targets":[{"id":1,"p":[x,y,z],"v":[vx,vy,vz],"ego":true}]}`.
//! Reals use the shortest representation that parses back to the same
//! `f64`, so encoding is lossless and byte-stable.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec3;

#[derive(Debug, Error)]
pub enum WireError {
    #[error("malformed frame: {0}")]
    Json(#[from] serde_json::Error),
    #[error("non-finite value in frame {0}")]
    NonFinite(u64),
    #[error("targets not sorted by id in frame {0}")]
    Unsorted(u64),
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetEntry {
    pub id: u32,
    #[serde(rename = "p")]
    pub position: [f64; 3],
    #[serde(rename = "v")]
    pub velocity: [f64; 3],
    #[serde(default, skip_serializing_if = "is_false")]
    pub ego: bool,
}

impl TargetEntry {
    pub fn new(id: u32, position: Vec3, velocity: Vec3, ego: bool) -> Self {
        Self {
            id,
            position: position.into(),
            velocity: velocity.into(),
            ego,
        }
    }

    pub fn position(&self) -> Vec3 {
        Vec3::from(self.position)
    }

    pub fn velocity(&self) -> Vec3 {
        Vec3::from(self.velocity)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetMessage {
    #[serde(rename = "seq")]
    pub frame_seq: u64,
    /// Seconds since session start.
    #[serde(rename = "t")]
    pub timestamp: f64,
    pub targets: Vec<TargetEntry>,
}

impl TargetMessage {
    pub fn validate(&self) -> Result<(), WireError> {
        let finite = self.timestamp.is_finite()
            && self
                .targets
                .iter()
                .all(|t| t.position.iter().chain(&t.velocity).all(|v| v.is_finite()));
        if !finite {
            return Err(WireError::NonFinite(self.frame_seq));
        }
        if self.targets.windows(2).any(|w| w[0].id >= w[1].id) {
            return Err(WireError::Unsorted(self.frame_seq));
        }
        Ok(())
    }

    pub fn ego(&self) -> Option<&TargetEntry> {
        self.targets.iter().find(|t| t.ego)
    }

    pub fn get(&self, id: u32) -> Option<&TargetEntry> {
        self.targets.iter().find(|t| t.id == id)
    }
}

/// Encodes one frame without the trailing newline.
pub fn encode(msg: &TargetMessage) -> Result<String, WireError> {
    msg.validate()?;
    Ok(serde_json::to_string(msg)?)
}

/// Encodes one frame including the trailing newline.
pub fn encode_line(msg: &TargetMessage) -> Result<String, WireError> {
    let mut s = encode(msg)?;
    s.push('\n');
    Ok(s)
}

pub fn decode(line: &str) -> Result<TargetMessage, WireError> {
    let msg: TargetMessage = serde_json::from_str(line.trim_end_matches(['\r', '\n']))?;
    msg.validate()?;
    Ok(msg)
}

/// One recorded LiDAR detection: `{"t":sec,"id":int,"p":[x,y,z]}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Detection {
    pub t: f64,
    pub id: u32,
    pub p: [f64; 3],
}

impl Detection {
    pub fn position(&self) -> Vec3 {
        Vec3::from(self.p)
    }
}

/// Reads a detection file, sorted by time. Blank lines are skipped.
pub fn read_detections(text: &str) -> Result<Vec<Detection>, (usize, WireError)> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let d: Detection = serde_json::from_str(line).map_err(|e| (i + 1, WireError::from(e)))?;
        out.push(d);
    }
    out.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.id.cmp(&b.id)));
    Ok(out)
}

pub fn write_detections(dets: &[Detection]) -> String {
    let mut s = String::new();
    for d in dets {
        s.push_str(&serde_json::to_string(d).expect("detections serialize"));
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> TargetMessage {
        TargetMessage {
            frame_seq: 3,
            timestamp: 0.15,
            targets: vec![
                TargetEntry::new(1, Vec3::new(1.0, 0.5, -2.25), Vec3::new(0.0, 0.0, 1.4), true),
                TargetEntry::new(2, Vec3::new(12.5, 1.0, 0.0), Vec3::new(-3.4722222222222223, 0.0, 0.0), false),
            ],
        }
    }

    #[test]
    fn exact_bytes() {
        let line = encode_line(&sample()).unwrap();
        assert_eq!(
            line,
            "{\"seq\":3,\"t\":0.15,\"targets\":[{\"id\":1,\"p\":[1.0,0.5,-2.25],\"v\":[0.0,0.0,1.4],\"ego\":true},\
             {\"id\":2,\"p\":[12.5,1.0,0.0],\"v\":[-3.4722222222222223,0.0,0.0]}]}\n"
        );
        assert_eq!(decode(&line).unwrap(), sample());
    }

    #[test]
    fn rejects_unsorted_and_nan() {
        let mut m = sample();
        m.targets.swap(0, 1);
        assert!(matches!(encode(&m), Err(WireError::Unsorted(3))));
        let mut m = sample();
        m.targets[0].velocity[1] = f64::NAN;
        assert!(matches!(encode(&m), Err(WireError::NonFinite(3))));
    }

    #[test]
    fn rejects_unknown_keys_and_garbage() {
        assert!(decode("{\"seq\":1,\"t\":0,\"targets\":[],\"x\":1}").is_err());
        assert!(decode("not json").is_err());
        assert!(decode("{\"seq\":1,\"t\":0,\"targets\":[]}\r\n").is_ok());
    }

    #[test]
    fn detection_file_sorted() {
        let text = "{\"t\":0.05,\"id\":1,\"p\":[0,0,1]}\n\n{\"t\":0.0,\"id\":2,\"p\":[1,0,0]}\n";
        let d = read_detections(text).unwrap();
        assert_eq!(d[0].id, 2);
        assert_eq!(d[1].position(), Vec3::new(0.0, 0.0, 1.0));
        assert_eq!(read_detections("{\"t\":1}").unwrap_err().0, 1);
    }
}
