//! Pose-keypoint ingestion: parsing, gap repair, body-center extraction and
//! size-based depth estimation.
//!
//! Keypoints follow the COCO-17 layout. The body center is the midpoint of the
//! two hip keypoints; depth comes from the projected pose size through an
//! inverse (pinhole) model anchored at a per-subject calibration.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Activity, SubjectId};

pub const NUM_KEYPOINTS: usize = 17;
pub const LEFT_HIP: usize = 11;
pub const RIGHT_HIP: usize = 12;

pub const DEFAULT_CONF_THRESHOLD: f64 = 0.3;
pub const DEFAULT_SUBJECT_HEIGHT: f64 = 1.75;

/// Maximum relative deviation of a frame interval from `1 / frame_rate`.
const FRAME_JITTER: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Keypoint {
    pub u: f64,
    pub v: f64,
    pub confidence: f64,
}

impl Keypoint {
    pub fn new(u: f64, v: f64, confidence: f64) -> Self {
        Keypoint { u, v, confidence }
    }

    fn is_valid(&self, threshold: f64) -> bool {
        self.confidence >= threshold && self.u.is_finite() && self.v.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseFrame {
    pub timestamp: f64,
    pub keypoints: [Keypoint; NUM_KEYPOINTS],
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseSequence {
    pub subject: SubjectId,
    pub activity: Activity,
    pub frame_rate: f64,
    pub frames: Vec<PoseFrame>,
}

/// Tunables shared by the pose operations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseConfig {
    pub conf_threshold: f64,
    pub subject_height: f64,
}

impl Default for PoseConfig {
    fn default() -> Self {
        PoseConfig {
            conf_threshold: DEFAULT_CONF_THRESHOLD,
            subject_height: DEFAULT_SUBJECT_HEIGHT,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubjectCalibration {
    pub scale_min: f64,
    pub scale_max: f64,
    pub subject_height: f64,
    pub z_near: f64,
    pub z_far: f64,
}

impl SubjectCalibration {
    pub fn validate(&self) -> Result<()> {
        if !(self.scale_min > 0.0 && self.scale_min <= self.scale_max) {
            return Err(Error::precondition(format!(
                "calibration needs 0 < scale_min <= scale_max, got {} and {}",
                self.scale_min, self.scale_max
            )));
        }
        if !(self.z_near > 0.0 && self.z_near < self.z_far) {
            return Err(Error::precondition(format!(
                "calibration needs 0 < z_near < z_far, got {} and {}",
                self.z_near, self.z_far
            )));
        }
        if !(self.subject_height > 0.0) {
            return Err(Error::precondition("subject height must be positive"));
        }
        Ok(())
    }

    /// Depth for a projected size: inverse depth is interpolated linearly in
    /// the size, so `scale_max` maps to `z_near` and `scale_min` to `z_far`.
    /// A single-size calibration falls back to the pinhole law anchored at
    /// `(scale_max, z_near)`.
    pub fn depth(&self, scale: f64) -> f64 {
        let span = self.scale_max - self.scale_min;
        if span <= 0.0 {
            return self.z_near * self.scale_max / scale;
        }
        let t = (self.scale_max - scale) / span;
        let inv = (1.0 - t) / self.z_near + t / self.z_far;
        1.0 / inv
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CenterTrack3D {
    pub sample_rate: f64,
    pub start_time: f64,
    /// `(x, y, z)` in meters, one per input frame.
    pub samples: Vec<[f64; 3]>,
    /// Frames whose projected size was rejected and interpolated.
    pub outliers: Vec<bool>,
    pub subject: SubjectId,
    pub activity: Activity,
}

impl CenterTrack3D {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// CSV with header `t,x,y,z`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "x", "y", "z"])?;
        for (i, p) in self.samples.iter().enumerate() {
            let t = self.start_time + i as f64 / self.sample_rate;
            w.write_record(&[t.to_string(), p[0].to_string(), p[1].to_string(), p[2].to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a `t,x,y,z` CSV; the rate is taken from the timestamps.
    pub fn read_csv<R: Read>(reader: R, subject: SubjectId, activity: Activity) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let headers = r.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["t", "x", "y", "z"] {
            return Err(Error::Parse {
                line: 1,
                column: 1,
                message: format!("expected header t,x,y,z, found {:?}", headers),
            });
        }
        let mut times = Vec::new();
        let mut samples = Vec::new();
        for (row, rec) in r.records().enumerate() {
            let rec = rec?;
            let vals = parse_row(&rec, row + 2, 4)?;
            times.push(vals[0]);
            samples.push([vals[1], vals[2], vals[3]]);
        }
        let sample_rate = rate_from_times(&times)?;
        Ok(CenterTrack3D {
            sample_rate,
            start_time: times.first().copied().unwrap_or(0.0),
            outliers: vec![false; samples.len()],
            samples,
            subject,
            activity,
        })
    }
}

pub(crate) fn parse_row(rec: &csv::StringRecord, line: usize, expected: usize) -> Result<Vec<f64>> {
    if rec.len() != expected {
        return Err(Error::Parse {
            line,
            column: 1,
            message: format!("expected {expected} fields, found {}", rec.len()),
        });
    }
    rec.iter()
        .enumerate()
        .map(|(col, field)| {
            field.trim().parse::<f64>().map_err(|e| Error::Parse {
                line,
                column: col + 1,
                message: format!("{field:?}: {e}"),
            })
        })
        .collect()
}

pub(crate) fn rate_from_times(times: &[f64]) -> Result<f64> {
    if times.len() < 2 {
        return Err(Error::TooShort {
            len: times.len(),
            min: 2,
        });
    }
    let span = times[times.len() - 1] - times[0];
    if !(span > 0.0) {
        return Err(Error::Ordering {
            frame: times.len() - 1,
            timestamp: times[times.len() - 1],
        });
    }
    Ok((times.len() - 1) as f64 / span)
}

#[derive(Serialize, Deserialize)]
struct RawSequence {
    subject: String,
    activity: String,
    fps: f64,
    frames: Vec<RawFrame>,
}

#[derive(Serialize, Deserialize)]
struct RawFrame {
    t: f64,
    kp: Vec<Vec<f64>>,
}

/// Parses the keypoint JSON format
/// `{subject, activity, fps, frames: [{t, kp: [[u, v, c] x 17]}]}`.
pub fn parse_pose_sequence<R: Read>(source: R) -> Result<PoseSequence> {
    let raw: RawSequence = serde_json::from_reader(source).map_err(|e| Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let activity: Activity = raw.activity.parse()?;
    if !(raw.fps > 0.0 && raw.fps.is_finite()) {
        return Err(Error::Schema {
            frame: 0,
            message: format!("fps must be positive, got {}", raw.fps),
        });
    }

    let mut frames = Vec::with_capacity(raw.frames.len());
    for (index, f) in raw.frames.into_iter().enumerate() {
        if f.kp.len() != NUM_KEYPOINTS {
            return Err(Error::Schema {
                frame: index,
                message: format!("expected {NUM_KEYPOINTS} keypoints, found {}", f.kp.len()),
            });
        }
        let mut keypoints = [Keypoint::default(); NUM_KEYPOINTS];
        for (k, triple) in f.kp.iter().enumerate() {
            let &[u, v, c] = triple.as_slice() else {
                return Err(Error::Schema {
                    frame: index,
                    message: format!("keypoint {k} must be [u, v, c], found {} values", triple.len()),
                });
            };
            if !(0.0..=1.0).contains(&c) {
                return Err(Error::Schema {
                    frame: index,
                    message: format!("keypoint {k} confidence {c} outside [0, 1]"),
                });
            }
            keypoints[k] = Keypoint::new(u, v, c);
        }
        frames.push(PoseFrame {
            timestamp: f.t,
            keypoints,
        });
    }

    let nominal = 1.0 / raw.fps;
    for i in 1..frames.len() {
        let dt = frames[i].timestamp - frames[i - 1].timestamp;
        if !(dt > 0.0) {
            return Err(Error::Ordering {
                frame: i,
                timestamp: frames[i].timestamp,
            });
        }
        if (dt - nominal).abs() > FRAME_JITTER * nominal {
            return Err(Error::Schema {
                frame: i,
                message: format!("frame interval {dt:.5} s inconsistent with {} fps", raw.fps),
            });
        }
    }

    Ok(PoseSequence {
        subject: SubjectId(raw.subject),
        activity,
        frame_rate: raw.fps,
        frames,
    })
}

pub fn write_pose_sequence<W: Write>(seq: &PoseSequence, writer: W) -> Result<()> {
    let raw = RawSequence {
        subject: seq.subject.0.clone(),
        activity: seq.activity.name().to_owned(),
        fps: seq.frame_rate,
        frames: seq
            .frames
            .iter()
            .map(|f| RawFrame {
                t: f.timestamp,
                kp: f.keypoints.iter().map(|k| vec![k.u, k.v, k.confidence]).collect(),
            })
            .collect(),
    };
    serde_json::to_writer(writer, &raw)?;
    Ok(())
}

/// Replaces every keypoint below `conf_threshold` by linear interpolation in
/// time between the nearest valid neighbours (nearest-valid hold at the
/// sequence ends). Replaced points get confidence `conf_threshold`.
pub fn fill_missing(seq: &PoseSequence, conf_threshold: f64) -> Result<PoseSequence> {
    if !(conf_threshold > 0.0 && conf_threshold < 1.0) {
        return Err(Error::Parameter(format!(
            "confidence threshold must lie in (0, 1), got {conf_threshold}"
        )));
    }
    for hip in [LEFT_HIP, RIGHT_HIP] {
        if !seq.frames.iter().any(|f| f.keypoints[hip].is_valid(conf_threshold)) {
            return Err(Error::UnrecoverableGap { keypoint: hip });
        }
    }
    let both_hips = seq.frames.iter().any(|f| {
        f.keypoints[LEFT_HIP].is_valid(conf_threshold) && f.keypoints[RIGHT_HIP].is_valid(conf_threshold)
    });
    if !both_hips {
        return Err(Error::precondition("no frame has both hip keypoints above threshold"));
    }

    let mut out = seq.clone();
    for k in 0..NUM_KEYPOINTS {
        let valid: Vec<usize> = seq
            .frames
            .iter()
            .enumerate()
            .filter(|(_, f)| f.keypoints[k].is_valid(conf_threshold))
            .map(|(i, _)| i)
            .collect();
        if valid.is_empty() || valid.len() == seq.frames.len() {
            continue;
        }
        // `next` is the index into `valid` of the first valid frame after i.
        let mut next = 0;
        for i in 0..seq.frames.len() {
            while next < valid.len() && valid[next] < i {
                next += 1;
            }
            if next < valid.len() && valid[next] == i {
                continue;
            }
            let filled = match (next.checked_sub(1).map(|p| valid[p]), valid.get(next)) {
                (Some(a), Some(&b)) => {
                    let (ta, tb) = (seq.frames[a].timestamp, seq.frames[b].timestamp);
                    let w = (seq.frames[i].timestamp - ta) / (tb - ta);
                    let (pa, pb) = (seq.frames[a].keypoints[k], seq.frames[b].keypoints[k]);
                    (pa.u + w * (pb.u - pa.u), pa.v + w * (pb.v - pa.v))
                }
                (Some(a), None) => {
                    let p = seq.frames[a].keypoints[k];
                    (p.u, p.v)
                }
                (None, Some(&b)) => {
                    let p = seq.frames[b].keypoints[k];
                    (p.u, p.v)
                }
                (None, None) => unreachable!("valid is nonempty"),
            };
            out.frames[i].keypoints[k] = Keypoint::new(filled.0, filled.1, conf_threshold);
        }
    }
    Ok(out)
}

/// Midpoint of the two hip keypoints, in pixels.
pub fn body_center(frame: &PoseFrame, conf_threshold: f64) -> Result<(f64, f64)> {
    let l = frame.keypoints[LEFT_HIP];
    let r = frame.keypoints[RIGHT_HIP];
    if !l.is_valid(conf_threshold) || !r.is_valid(conf_threshold) {
        return Err(Error::precondition(
            "hip keypoints below confidence threshold; run fill_missing first",
        ));
    }
    Ok((0.5 * (l.u + r.u), 0.5 * (l.v + r.v)))
}

/// Vertical extent of the valid keypoints, the projected-size proxy.
pub fn pose_scale(frame: &PoseFrame, conf_threshold: f64) -> Result<f64> {
    let mut count = 0usize;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for kp in frame.keypoints.iter().filter(|k| k.is_valid(conf_threshold)) {
        count += 1;
        lo = lo.min(kp.v);
        hi = hi.max(kp.v);
    }
    if count < 2 {
        return Err(Error::DegeneratePose(format!("{count} valid keypoints, need at least 2")));
    }
    let extent = hi - lo;
    if !(extent > 0.0) {
        return Err(Error::DegeneratePose("zero vertical extent".into()));
    }
    Ok(extent)
}

/// Records the extreme projected sizes of a subject standing at the near
/// and far calibration distances. Degenerate frames are skipped.
pub fn calibrate_subject(
    standing_frames: &[PoseFrame],
    z_near: f64,
    z_far: f64,
    cfg: &PoseConfig,
) -> Result<SubjectCalibration> {
    if standing_frames.is_empty() {
        return Err(Error::precondition("calibration needs at least one frame"));
    }
    let (lo, hi) = standing_frames
        .iter()
        .filter_map(|f| pose_scale(f, cfg.conf_threshold).ok())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| (lo.min(s), hi.max(s)));
    if !lo.is_finite() {
        return Err(Error::DegeneratePose("no calibration frame has a usable pose".into()));
    }
    let cal = SubjectCalibration {
        scale_min: lo,
        scale_max: hi,
        subject_height: cfg.subject_height,
        z_near,
        z_far,
    };
    cal.validate()?;
    Ok(cal)
}

/// Metric body-center trajectory of a gap-filled sequence.
pub fn estimate_center_track(
    seq: &PoseSequence,
    cal: &SubjectCalibration,
    cfg: &PoseConfig,
) -> Result<CenterTrack3D> {
    cal.validate()?;
    if seq.frames.is_empty() {
        return Err(Error::TooShort { len: 0, min: 1 });
    }
    let lo = 0.5 * cal.scale_min;
    let hi = 2.0 * cal.scale_max;
    let raw: Vec<Option<f64>> = seq
        .frames
        .iter()
        .map(|f| pose_scale(f, cfg.conf_threshold).ok().filter(|s| (lo..=hi).contains(s)))
        .collect();
    let outliers: Vec<bool> = raw.iter().map(Option::is_none).collect();
    let scales = interpolate_gaps(&raw)
        .ok_or_else(|| Error::DegeneratePose("every frame has an out-of-range pose size".into()))?;

    let mut samples = Vec::with_capacity(seq.frames.len());
    for (frame, &s) in seq.frames.iter().zip(&scales) {
        let (u, v) = body_center(frame, cfg.conf_threshold)?;
        let meters_per_px = cal.subject_height / s;
        samples.push([u * meters_per_px, v * meters_per_px, cal.depth(s)]);
    }
    Ok(CenterTrack3D {
        sample_rate: seq.frame_rate,
        start_time: seq.frames[0].timestamp,
        samples,
        outliers,
        subject: seq.subject.clone(),
        activity: seq.activity,
    })
}

/// Linear interpolation over index for missing entries, holding at the ends.
fn interpolate_gaps(values: &[Option<f64>]) -> Option<Vec<f64>> {
    let known: Vec<(usize, f64)> = values
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.map(|v| (i, v)))
        .collect();
    let (&(first_i, first_v), &(last_i, last_v)) = (known.first()?, known.last()?);
    let mut out = vec![0.0; values.len()];
    for w in known.windows(2) {
        let ((a, va), (b, vb)) = (w[0], w[1]);
        for (i, slot) in out.iter_mut().enumerate().take(b + 1).skip(a) {
            *slot = va + (vb - va) * (i - a) as f64 / (b - a) as f64;
        }
    }
    out[..first_i].fill(first_v);
    out[last_i..].fill(last_v);
    Some(out)
}
