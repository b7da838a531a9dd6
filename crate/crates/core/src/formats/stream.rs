//! Line-delimited JSON detection streams.
//!
//! One frame per line:
//!
//! ```text
//! {"frame":0,"detections":[{"det":0,"bbox":[10,20,40,90],"gt":3,"embedding":[...],"ori":1}]}
//! ```
//!
//! A detection carries either an `embedding` (with `scores` or `ori`), a
//! `crop` reference, or neither. Embeddings are L2-normalized on ingestion.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{BBox, CropRef, DetectionEvent, EmbeddingRecord, GtId, Orientation, Payload, ORIENTATION_COUNT};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameLine {
    frame: u64,
    #[serde(default)]
    detections: Vec<DetectionLine>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DetectionLine {
    det: u32,
    bbox: [f64; 4],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gt: Option<GtId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    embedding: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scores: Option<[f64; ORIENTATION_COUNT]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ori: Option<Orientation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    crop: Option<CropRef>,
}

impl DetectionLine {
    fn into_event(self, frame: u64) -> Result<DetectionEvent, String> {
        let bbox = BBox::new(self.bbox[0], self.bbox[1], self.bbox[2], self.bbox[3])
            .map_err(|e| format!("detection {}: {e}", self.det))?;
        let payload = match (self.embedding, self.crop) {
            (Some(_), Some(_)) => return Err(format!("detection {}: both embedding and crop given", self.det)),
            (Some(raw), None) => {
                let scores = match (self.scores, self.ori) {
                    (Some(s), _) => s,
                    (None, Some(o)) => o.one_hot(),
                    (None, None) => return Err(format!("detection {}: embedding without scores or ori", self.det)),
                };
                Payload::Embedding(
                    EmbeddingRecord::new(&raw, scores).map_err(|e| format!("detection {}: {e}", self.det))?,
                )
            }
            (None, Some(crop)) => Payload::Crop(crop),
            (None, None) => Payload::Missing,
        };
        Ok(DetectionEvent { frame, det_index: self.det, bbox, gt_id: self.gt, payload })
    }

    fn from_event(e: &DetectionEvent) -> Self {
        let b = e.bbox;
        let mut line = DetectionLine {
            det: e.det_index,
            bbox: [b.x, b.y, b.w, b.h],
            gt: e.gt_id,
            embedding: None,
            scores: None,
            ori: None,
            crop: None,
        };
        match &e.payload {
            Payload::Embedding(r) => {
                line.embedding = Some(r.feature().to_vec());
                line.scores = Some(*r.orientation_scores());
            }
            Payload::Crop(c) => line.crop = Some(*c),
            Payload::Missing => {}
        }
        line
    }
}

/// Parses one stream line. `line_no` is 1-based and only used in errors.
pub fn parse_frame_line(text: &str, line_no: usize) -> Result<(u64, Vec<DetectionEvent>)> {
    let parsed: FrameLine = serde_json::from_str(text).map_err(|e| Error::parse(line_no, e.to_string()))?;
    let frame = parsed.frame;
    let events = parsed
        .detections
        .into_iter()
        .map(|d| d.into_event(frame))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|m| Error::parse(line_no, m))?;
    Ok((frame, events))
}

/// Lazily parses a stream; blank lines are skipped.
pub struct StreamReader<R> {
    lines: std::io::Lines<R>,
    line_no: usize,
}

impl<R: BufRead> StreamReader<R> {
    pub fn new(reader: R) -> Self {
        Self { lines: reader.lines(), line_no: 0 }
    }
}

impl<R: BufRead> Iterator for StreamReader<R> {
    type Item = Result<(u64, Vec<DetectionEvent>)>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = self.lines.next()?;
            self.line_no += 1;
            let line = match line {
                Ok(l) => l,
                Err(e) => return Some(Err(Error::parse(self.line_no, e.to_string()))),
            };
            if line.trim().is_empty() {
                continue;
            }
            return Some(parse_frame_line(&line, self.line_no));
        }
    }
}

pub fn format_frame_line(frame: u64, events: &[DetectionEvent]) -> String {
    let line = FrameLine { frame, detections: events.iter().map(DetectionLine::from_event).collect() };
    serde_json::to_string(&line).expect("stream lines contain only finite numbers")
}

pub fn write_stream<W: Write, I>(mut out: W, frames: I) -> std::io::Result<()>
where
    I: IntoIterator<Item = (u64, Vec<DetectionEvent>)>,
{
    for (frame, events) in frames {
        writeln!(out, "{}", format_frame_line(frame, &events))?;
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::CropSource;

    #[test]
    fn parses_all_payload_kinds() {
        let line = r#"{"frame":7,"detections":[
            {"det":0,"bbox":[0,0,10,20],"gt":2,"embedding":[3,4],"ori":2},
            {"det":1,"bbox":[5,5,10,20],"crop":{"source":{"identity":4},"ori":1,"draw":7}},
            {"det":2,"bbox":[9,9,1,1]}]}"#
            .replace('\n', "");
        let (frame, events) = parse_frame_line(&line, 1).unwrap();
        assert_eq!(frame, 7);
        let Payload::Embedding(r) = &events[0].payload else { panic!() };
        assert_eq!(r.feature(), &[0.6, 0.8]);
        assert_eq!(r.orientation(), Orientation::Side);
        assert_eq!(events[0].gt_id, Some(2));
        assert_eq!(
            events[1].payload,
            Payload::Crop(CropRef { source: CropSource::Identity(4), orientation: Orientation::Back, draw: 7 })
        );
        assert_eq!(events[2].payload, Payload::Missing);
        assert!(events.iter().all(|e| e.frame == 7));
    }

    #[test]
    fn malformed_lines_report_their_number() {
        let text = "{\"frame\":0,\"detections\":[]}\n\n{\"frame\":1,\"detections\":[{\"det\":0,\"bbox\":[0,0,1,1],\"embedding\":[1,0]}]}\n";
        let results: Vec<_> = StreamReader::new(text.as_bytes()).collect();
        assert!(results[0].is_ok());
        assert!(matches!(results[1], Err(Error::Parse { line: 3, .. })));

        for bad in [
            "not json",
            r#"{"frame":0,"detections":[{"det":0,"bbox":[0,0,0,1]}]}"#,
            r#"{"frame":0,"detections":[{"det":0,"bbox":[0,0,1,1],"embedding":[0,0],"ori":0}]}"#,
            r#"{"frame":0,"extra":1}"#,
        ] {
            assert!(matches!(parse_frame_line(bad, 4), Err(Error::Parse { line: 4, .. })), "{bad}");
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let raw: Vec<f64> = (0..16).map(|i| ((i * 7919) % 13) as f64 / 3.0 - 2.0).collect();
        let record = EmbeddingRecord::new(&raw, [0.1, 0.7, 0.2]).unwrap();
        let events = vec![DetectionEvent {
            frame: 3,
            det_index: 0,
            bbox: BBox::new(1.25, 2.5, 30.0, 70.125).unwrap(),
            gt_id: Some(9),
            payload: Payload::Embedding(record),
        }];
        let line = format_frame_line(3, &events);
        let (frame, back) = parse_frame_line(&line, 1).unwrap();
        assert_eq!(frame, 3);
        assert_eq!(back, events);
    }
}
