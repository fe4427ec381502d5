//! Detection stream (JSON Lines) and track output (CSV) files.
//!
//! A stream starts with a header line
//! `{"format":"trackdet-stream","version":1,"num_classes":C,"embedding_dim":D,...}`
//! followed by one frame object per line. Track output rows are
//! `frame,track_id,x,y,w,h,confidence,class` with `track_id = -1` for boxes
//! that belong to no tracklet.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::pipeline::{FrameRecord, TrackRow};
use crate::simulator::SyntheticSequence;

pub const STREAM_FORMAT: &str = "trackdet-stream";
pub const STREAM_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamHeader {
    pub format: String,
    pub version: u32,
    pub num_classes: usize,
    pub embedding_dim: usize,
    pub image_width: f64,
    pub image_height: f64,
}

impl StreamHeader {
    pub fn new(
        num_classes: usize,
        embedding_dim: usize,
        image_width: f64,
        image_height: f64,
    ) -> Self {
        Self {
            format: STREAM_FORMAT.to_string(),
            version: STREAM_VERSION,
            num_classes,
            embedding_dim,
            image_width,
            image_height,
        }
    }

    pub fn for_sequence(seq: &SyntheticSequence) -> Self {
        Self::new(
            seq.num_classes,
            seq.embedding_dim,
            seq.image_width,
            seq.image_height,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stream {
    pub header: StreamHeader,
    pub frames: Vec<FrameRecord>,
}

pub fn write_stream<W: Write>(
    mut w: W,
    header: &StreamHeader,
    frames: &[FrameRecord],
) -> Result<()> {
    serde_json::to_writer(&mut w, header)?;
    w.write_all(b"\n")?;
    for f in frames {
        serde_json::to_writer(&mut w, f)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn format_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Format {
        line,
        msg: msg.into(),
    }
}

fn check_frame(h: &StreamHeader, f: &FrameRecord, line: usize) -> Result<()> {
    for (i, c) in f.candidates.iter().enumerate() {
        if c.scores.len() != h.num_classes + 1 {
            return Err(format_err(
                line,
                format!(
                    "candidate {i} has {} scores, header declares {} classes",
                    c.scores.len(),
                    h.num_classes
                ),
            ));
        }
        if c.embedding.dim() != h.embedding_dim {
            return Err(format_err(
                line,
                format!(
                    "candidate {i} embedding has dimension {}, expected {}",
                    c.embedding.dim(),
                    h.embedding_dim
                ),
            ));
        }
    }
    for g in f.ground_truth.iter().flatten() {
        if g.class == 0 || g.class > h.num_classes {
            return Err(format_err(
                line,
                format!("ground-truth class {} out of range", g.class),
            ));
        }
    }
    Ok(())
}

pub fn read_stream<R: BufRead>(r: R) -> Result<Stream> {
    let mut lines = r.lines().enumerate();
    let header: StreamHeader = loop {
        match lines.next() {
            None => return Err(format_err(1, "missing header line")),
            Some((i, line)) => {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                break serde_json::from_str(&line).map_err(|e| format_err(i + 1, e.to_string()))?;
            }
        }
    };
    if header.format != STREAM_FORMAT {
        return Err(format_err(1, format!("unknown format `{}`", header.format)));
    }
    if header.version != STREAM_VERSION {
        return Err(format_err(
            1,
            format!(
                "stream version {} is not supported (expected {STREAM_VERSION})",
                header.version
            ),
        ));
    }

    let mut frames: Vec<FrameRecord> = Vec::new();
    for (i, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let f: FrameRecord =
            serde_json::from_str(&line).map_err(|e| format_err(i + 1, e.to_string()))?;
        check_frame(&header, &f, i + 1)?;
        if frames.last().is_some_and(|p| p.frame > f.frame) {
            return Err(format_err(i + 1, "frames are not in non-decreasing order"));
        }
        frames.push(f);
    }
    Ok(Stream { header, frames })
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    frame: u64,
    track_id: i64,
    x: f64,
    y: f64,
    w: f64,
    h: f64,
    confidence: f64,
    class: usize,
}

pub fn write_rows<W: Write>(w: W, rows: &[TrackRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        let track_id = match r.track_id {
            Some(id) => i64::try_from(id).map_err(|_| {
                Error::InvalidInput(format!("track id {id} does not fit the output format"))
            })?,
            None => -1,
        };
        out.serialize(CsvRow {
            frame: r.frame,
            track_id,
            x: r.bbox.x1(),
            y: r.bbox.y1(),
            w: r.bbox.width(),
            h: r.bbox.height(),
            confidence: r.confidence,
            class: r.class,
        })?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_rows<R: std::io::Read>(r: R) -> Result<Vec<TrackRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut rows = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, rec) in rdr.deserialize::<CsvRow>().enumerate() {
        // Line 1 is the header.
        let line = i + 2;
        let rec = rec.map_err(|e| format_err(line, e.to_string()))?;
        if !(rec.w > 0.0 && rec.h > 0.0) {
            return Err(format_err(line, "box width and height must be positive"));
        }
        let track_id = match rec.track_id {
            -1 => None,
            id if id >= 0 => Some(id as u64),
            id => return Err(format_err(line, format!("invalid track id {id}"))),
        };
        if let Some(id) = track_id {
            if !seen.insert((rec.frame, id)) {
                return Err(format_err(
                    line,
                    format!("track {id} appears twice on frame {}", rec.frame),
                ));
            }
        }
        let bbox = BBox::from_xywh(rec.x, rec.y, rec.w, rec.h)
            .map_err(|e| format_err(line, e.to_string()))?;
        rows.push(TrackRow {
            frame: rec.frame,
            track_id,
            bbox,
            confidence: rec.confidence,
            class: rec.class,
        });
    }
    Ok(rows)
}

/// Ground-truth rows of a stream, as track output rows with confidence 1.
pub fn gt_rows(frames: &[FrameRecord]) -> Vec<TrackRow> {
    frames
        .iter()
        .flat_map(|f| {
            f.ground_truth.iter().flatten().map(move |g| TrackRow {
                frame: f.frame,
                track_id: Some(g.track_id),
                bbox: g.bbox,
                confidence: 1.0,
                class: g.class,
            })
        })
        .collect()
}
