//! MOTChallenge-style CSV files, coordinate normalization and the CSV
//! side outputs (provenance, loss curves, existence dumps).
//!
//! A MOT row is `frame,id,bb_left,bb_top,bb_width,bb_height,conf,x,y,z`
//! with pixel boxes; detections carry `id = -1`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::datagen::SceneSequence;
use crate::error::{Error, Result};
use crate::tracker::ExistenceRecord;
use crate::types::{Detection, MeasurementFrame, Source, TargetState, TrackRow, TrackTable};

/// One line of a MOT detection or ground-truth file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotRow {
    pub frame: u32,
    pub id: i64,
    pub bb_left: f64,
    pub bb_top: f64,
    pub bb_width: f64,
    pub bb_height: f64,
    pub confidence: f64,
}

impl MotRow {
    pub fn detection(frame: u32, bb: [f64; 4], confidence: f64) -> Self {
        Self {
            frame,
            id: -1,
            bb_left: bb[0],
            bb_top: bb[1],
            bb_width: bb[2],
            bb_height: bb[3],
            confidence,
        }
    }

    pub fn bbox(&self) -> [f64; 4] {
        [self.bb_left, self.bb_top, self.bb_width, self.bb_height]
    }
}

fn parse_error(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Parses MOT CSV text. `path` is only used in error messages.
///
/// Blank lines are skipped. Rows need at least the seven leading fields and
/// at most ten.
pub fn parse_mot_str(text: &str, path: &Path) -> Result<Vec<MotRow>> {
    let mut rows = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line_no = k + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if !(7..=10).contains(&fields.len()) {
            return Err(parse_error(
                path,
                line_no,
                format!("expected 7 to 10 fields, found {}", fields.len()),
            ));
        }
        let num = |i: usize| -> Result<f64> {
            let v: f64 = fields[i]
                .parse()
                .map_err(|_| parse_error(path, line_no, format!("field {} is not a number: {:?}", i + 1, fields[i])))?;
            if !v.is_finite() {
                return Err(parse_error(path, line_no, format!("field {} is not finite", i + 1)));
            }
            Ok(v)
        };
        let frame = num(0)?;
        if frame < 1.0 || frame.fract() != 0.0 || frame > u32::MAX as f64 {
            return Err(parse_error(path, line_no, "frame must be a positive integer"));
        }
        let id = num(1)?;
        if id.fract() != 0.0 {
            return Err(parse_error(path, line_no, "id must be an integer"));
        }
        let row = MotRow {
            frame: frame as u32,
            id: id as i64,
            bb_left: num(2)?,
            bb_top: num(3)?,
            bb_width: num(4)?,
            bb_height: num(5)?,
            confidence: num(6)?,
        };
        for i in 7..fields.len() {
            num(i)?;
        }
        if row.bb_width <= 0.0 || row.bb_height <= 0.0 {
            return Err(parse_error(path, line_no, "box width and height must be positive"));
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn parse_mot_csv(path: &Path) -> Result<Vec<MotRow>> {
    let text = fs::read_to_string(path)?;
    parse_mot_str(&text, path)
}

/// Formats rows with the three trailing `-1` fields. Values are written in
/// shortest round-trip form.
pub fn format_mot(rows: &[MotRow]) -> String {
    let mut out = String::new();
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},-1,-1,-1",
            r.frame, r.id, r.bb_left, r.bb_top, r.bb_width, r.bb_height, r.confidence
        )
        .expect("write to string");
    }
    out
}

pub fn write_mot_csv(path: &Path, rows: &[MotRow]) -> Result<()> {
    fs::write(path, format_mot(rows))?;
    Ok(())
}

/// Image size used to map pixel boxes into `[-0.5, 0.5]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageSize {
    pub width: f64,
    pub height: f64,
}

impl ImageSize {
    pub fn new(width: f64, height: f64) -> Result<Self> {
        if !(width.is_finite() && height.is_finite() && width > 0.0 && height > 0.0) {
            return Err(Error::invalid(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        Ok(Self { width, height })
    }

    /// Pixel box to normalized state.
    pub fn normalize(&self, bb: [f64; 4]) -> TargetState {
        TargetState::new(
            bb[0] / self.width - 0.5,
            bb[1] / self.height - 0.5,
            bb[2] / self.width,
            bb[3] / self.height,
        )
    }

    /// Normalized state back to a pixel box.
    pub fn denormalize(&self, s: &TargetState) -> [f64; 4] {
        [
            (s.x + 0.5) * self.width,
            (s.y + 0.5) * self.height,
            s.w * self.width,
            s.h * self.height,
        ]
    }
}

/// Normalizes every row's box.
pub fn normalize_coords(rows: &[MotRow], image: ImageSize) -> Vec<TargetState> {
    rows.iter().map(|r| image.normalize(r.bbox())).collect()
}

/// Groups detection rows into frames `1..=n_frames`, in file order within a
/// frame. `n_frames` defaults to the last frame present.
pub fn rows_to_frames(rows: &[MotRow], image: ImageSize, n_frames: Option<u32>) -> Vec<MeasurementFrame> {
    let last = rows.iter().map(|r| r.frame).max().unwrap_or(0);
    let n = n_frames.unwrap_or(last);
    let mut per: Vec<Vec<Detection>> = vec![Vec::new(); n as usize];
    for r in rows {
        if r.frame <= n {
            per[r.frame as usize - 1].push(Detection {
                state: image.normalize(r.bbox()),
                confidence: r.confidence,
                source: Source::Unknown,
            });
        }
    }
    per.into_iter()
        .enumerate()
        .map(|(k, dets)| MeasurementFrame::new(k as u32 + 1, dets))
        .collect()
}

pub fn frames_to_rows(frames: &[MeasurementFrame], image: ImageSize) -> Vec<MotRow> {
    frames
        .iter()
        .flat_map(|f| {
            f.detections()
                .map(move |d| MotRow::detection(f.frame, image.denormalize(&d.state), d.confidence))
        })
        .collect()
}

/// Ground-truth or result rows as a track table. Ids must be nonnegative.
pub fn rows_to_table(rows: &[MotRow], image: ImageSize) -> Result<TrackTable> {
    let mut table = TrackTable::new();
    for r in rows {
        let id = u64::try_from(r.id)
            .map_err(|_| Error::InvalidInput(format!("track id {} at frame {} is negative", r.id, r.frame)))?;
        table.rows.push(TrackRow {
            frame: r.frame,
            id,
            state: image.normalize(r.bbox()),
            confidence: r.confidence,
        });
    }
    Ok(table)
}

/// Track table rows sorted by frame then id.
pub fn table_to_rows(table: &TrackTable, image: ImageSize) -> Vec<MotRow> {
    let mut rows: Vec<MotRow> = table
        .rows
        .iter()
        .map(|r| {
            let bb = image.denormalize(&r.state);
            MotRow {
                frame: r.frame,
                id: r.id as i64,
                bb_left: bb[0],
                bb_top: bb[1],
                bb_width: bb[2],
                bb_height: bb[3],
                confidence: r.confidence,
            }
        })
        .collect();
    rows.sort_by_key(|r| (r.frame, r.id));
    rows
}

/// File names of a scene written by [`write_scene`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScenePaths {
    pub gt: PathBuf,
    pub det: PathBuf,
    pub provenance: PathBuf,
}

impl ScenePaths {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            gt: dir.join("gt.csv"),
            det: dir.join("det.csv"),
            provenance: dir.join("provenance.csv"),
        }
    }
}

/// Provenance sidecar: `frame,index,source` where `index` counts detections
/// within the frame in file order and `source` is the track id or `-1` for
/// clutter.
pub fn format_provenance(frames: &[MeasurementFrame]) -> String {
    let mut out = String::from("frame,index,source\n");
    for f in frames {
        for (k, d) in f.detections().enumerate() {
            let src = match d.source {
                Source::Track(id) => id as i64,
                Source::Clutter => -1,
                Source::Unknown => -2,
            };
            writeln!(out, "{},{},{}", f.frame, k, src).expect("write to string");
        }
    }
    out
}

/// Parses a provenance sidecar into `(frame, index, source)` triples.
pub fn parse_provenance(text: &str, path: &Path) -> Result<Vec<(u32, usize, Source)>> {
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate().skip(1) {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        let bad = || parse_error(path, k + 1, "expected frame,index,source");
        if f.len() != 3 {
            return Err(bad());
        }
        let frame: u32 = f[0].trim().parse().map_err(|_| bad())?;
        let index: usize = f[1].trim().parse().map_err(|_| bad())?;
        let src: i64 = f[2].trim().parse().map_err(|_| bad())?;
        let source = match src {
            -1 => Source::Clutter,
            s if s >= 0 => Source::Track(s as u64),
            _ => Source::Unknown,
        };
        out.push((frame, index, source));
    }
    Ok(out)
}

/// Writes `gt.csv`, `det.csv` and `provenance.csv` into `dir`.
pub fn write_scene(dir: &Path, scene: &SceneSequence, image: ImageSize) -> Result<ScenePaths> {
    fs::create_dir_all(dir)?;
    let paths = ScenePaths::in_dir(dir);
    write_mot_csv(&paths.gt, &table_to_rows(&scene.gt_table(), image))?;
    write_mot_csv(&paths.det, &frames_to_rows(&scene.frames, image))?;
    fs::write(&paths.provenance, format_provenance(&scene.frames))?;
    Ok(paths)
}

/// Writes a CSV with a header line and one line per row.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&r.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn write_existence_csv(path: &Path, records: &[ExistenceRecord]) -> Result<()> {
    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| {
            vec![
                r.frame.to_string(),
                r.id.to_string(),
                r.existence.to_string(),
                u8::from(r.confirmed).to_string(),
            ]
        })
        .collect();
    write_csv(path, &["frame", "id", "existence", "confirmed"], &rows)
}
