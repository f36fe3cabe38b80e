//! Domain types shared across the tracker, the baselines and the evaluation code.

use std::collections::BTreeMap;

/// Number of state components per target: `(x, y, w, h)`.
pub const STATE_DIM: usize = 4;

/// One bounding box in normalized image coordinates.
///
/// `x`, `y` are the top-left corner mapped to `[-0.5, 0.5]` relative to the
/// image size; `w`, `h` are the box extent as a fraction of the image size.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TargetState {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl TargetState {
    pub const fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    pub fn from_slice(v: &[f64]) -> Self {
        debug_assert_eq!(v.len(), STATE_DIM);
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn to_array(self) -> [f64; STATE_DIM] {
        [self.x, self.y, self.w, self.h]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    pub fn distance(&self, other: &TargetState) -> f64 {
        self.to_array()
            .iter()
            .zip(other.to_array())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// Intersection over union of the two boxes, 0 for degenerate boxes.
    pub fn iou(&self, other: &TargetState) -> f64 {
        let ix = (self.x + self.w).min(other.x + other.w) - self.x.max(other.x);
        let iy = (self.y + self.h).min(other.y + other.h) - self.y.max(other.y);
        if ix <= 0.0 || iy <= 0.0 {
            return 0.0;
        }
        let inter = ix * iy;
        let union = self.w * self.h + other.w * other.h - inter;
        if union <= 0.0 {
            0.0
        } else {
            (inter / union).min(1.0)
        }
    }
}

/// Where a detection came from. Only synthetic data knows this.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Track(u64),
    Clutter,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub state: TargetState,
    pub confidence: f64,
    pub source: Source,
}

impl Detection {
    pub fn new(state: TargetState) -> Self {
        Self {
            state,
            confidence: 1.0,
            source: Source::Unknown,
        }
    }
}

/// The detections of one frame laid out in a fixed number of slots.
///
/// Empty slots are masked; their padding value is the zero state.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementFrame {
    pub frame: u32,
    slots: Vec<Option<Detection>>,
}

impl MeasurementFrame {
    /// A frame with exactly as many slots as detections.
    pub fn new(frame: u32, detections: Vec<Detection>) -> Self {
        Self {
            frame,
            slots: detections.into_iter().map(Some).collect(),
        }
    }

    /// Lays `detections` out into `capacity` slots, dropping any beyond it.
    pub fn with_capacity(frame: u32, detections: Vec<Detection>, capacity: usize) -> Self {
        let mut slots: Vec<Option<Detection>> =
            detections.into_iter().take(capacity).map(Some).collect();
        slots.resize(capacity, None);
        Self { frame, slots }
    }

    pub fn from_slots(frame: u32, slots: Vec<Option<Detection>>) -> Self {
        Self { frame, slots }
    }

    /// Same detections re-laid into `capacity` slots (truncating or padding).
    pub fn padded_to(&self, capacity: usize) -> Self {
        Self::with_capacity(self.frame, self.detections().copied().collect(), capacity)
    }

    /// Slot count `M`.
    pub fn capacity(&self) -> usize {
        self.slots.len()
    }

    pub fn slots(&self) -> &[Option<Detection>] {
        &self.slots
    }

    pub fn is_occupied(&self, slot: usize) -> bool {
        matches!(self.slots.get(slot), Some(Some(_)))
    }

    /// State in `slot`, or the zero padding state for a masked slot.
    pub fn slot_state(&self, slot: usize) -> TargetState {
        self.slots[slot].map(|d| d.state).unwrap_or_default()
    }

    pub fn detections(&self) -> impl Iterator<Item = &Detection> {
        self.slots.iter().flatten()
    }

    /// Occupied `(slot, detection)` pairs.
    pub fn occupied(&self) -> impl Iterator<Item = (usize, &Detection)> {
        self.slots
            .iter()
            .enumerate()
            .filter_map(|(j, d)| d.as_ref().map(|d| (j, d)))
    }

    pub fn len(&self) -> usize {
        self.detections().count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One `(frame, id, box)` entry of a tracking result or ground-truth set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackRow {
    pub frame: u32,
    pub id: u64,
    pub state: TargetState,
    pub confidence: f64,
}

/// A set of trajectories stored as rows in emission order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrackTable {
    pub rows: Vec<TrackRow>,
}

impl TrackTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, frame: u32, id: u64, state: TargetState) {
        self.rows.push(TrackRow {
            frame,
            id,
            state,
            confidence: 1.0,
        });
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Rows grouped by frame, keeping emission order within a frame.
    pub fn by_frame(&self) -> BTreeMap<u32, Vec<TrackRow>> {
        let mut out: BTreeMap<u32, Vec<TrackRow>> = BTreeMap::new();
        for row in &self.rows {
            out.entry(row.frame).or_default().push(*row);
        }
        out
    }

    /// Rows grouped by id, each trajectory sorted by frame.
    pub fn by_id(&self) -> BTreeMap<u64, Vec<(u32, TargetState)>> {
        let mut out: BTreeMap<u64, Vec<(u32, TargetState)>> = BTreeMap::new();
        for row in &self.rows {
            out.entry(row.id).or_default().push((row.frame, row.state));
        }
        for track in out.values_mut() {
            track.sort_by_key(|(f, _)| *f);
        }
        out
    }

    pub fn ids(&self) -> Vec<u64> {
        self.by_id().into_keys().collect()
    }

    pub fn last_frame(&self) -> Option<u32> {
        self.rows.iter().map(|r| r.frame).max()
    }
}
