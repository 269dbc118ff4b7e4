//! Corpus loading: pose files become video-derived acceleration windows,
//! accelerometer files become conditioned windows, paired by position.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pose::{
    calibrate_subject, estimate_center_track, fill_missing, parse_pose_sequence, CenterTrack3D, PoseConfig,
    PoseSequence, SubjectCalibration,
};
use crate::signal::{condition_imu, standard_windows, video_acceleration, AccelTrack, Window, WindowSet, CUTOFF_HZ, TARGET_RATE};
use crate::synthetic::CorpusManifest;
use crate::types::{Activity, Provenance, SubjectId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub pose: PoseConfig,
    pub z_near: f64,
    pub z_far: f64,
    /// Recording whose size range calibrates each subject.
    pub calibration_activity: Activity,
    pub target_rate: f64,
    pub cutoff: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            pose: PoseConfig::default(),
            z_near: 2.0,
            z_far: 5.0,
            calibration_activity: Activity::Walking,
            target_rate: TARGET_RATE,
            cutoff: CUTOFF_HZ,
        }
    }
}

/// Video-derived and sensor windows, aligned index by index.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedWindows {
    pub video: WindowSet,
    pub imu: WindowSet,
}

impl PairedWindows {
    pub fn len(&self) -> usize {
        self.video.len()
    }

    pub fn is_empty(&self) -> bool {
        self.video.is_empty()
    }

    /// Sorted distinct subjects.
    pub fn subjects(&self) -> Vec<SubjectId> {
        let mut ids: Vec<SubjectId> = self.video.windows.iter().map(|w| w.subject.clone()).collect();
        ids.sort();
        ids.dedup();
        ids
    }

    /// Pairs two window sets, truncating each recording to the shorter
    /// side. Windows must be grouped by recording in the same order.
    pub fn pair(video: WindowSet, imu: WindowSet) -> Result<PairedWindows> {
        if video.window_len != imu.window_len {
            return Err(Error::shape(format!(
                "video windows have {} samples, sensor windows {}",
                video.window_len, imu.window_len
            )));
        }
        let group = |set: &WindowSet| {
            let mut groups: Vec<((SubjectId, Activity), Vec<Window>)> = Vec::new();
            for w in &set.windows {
                let key = (w.subject.clone(), w.activity);
                match groups.last_mut() {
                    Some((k, ws)) if *k == key => ws.push(w.clone()),
                    _ => groups.push((key, vec![w.clone()])),
                }
            }
            groups
        };
        let vg = group(&video);
        let ig: BTreeMap<_, _> = group(&imu).into_iter().collect();
        let mut v_out = Vec::new();
        let mut i_out = Vec::new();
        for (key, vw) in vg {
            let Some(iw) = ig.get(&key) else { continue };
            let n = vw.len().min(iw.len());
            v_out.extend(vw.into_iter().take(n));
            i_out.extend(iw.iter().take(n).cloned());
        }
        Ok(PairedWindows {
            video: WindowSet {
                window_len: video.window_len,
                provenance: video.provenance,
                windows: v_out,
            },
            imu: WindowSet {
                window_len: imu.window_len,
                provenance: imu.provenance,
                windows: i_out,
            },
        })
    }
}

pub fn load_pose(path: &Path) -> Result<PoseSequence> {
    let file = File::open(path).map_err(|e| Error::at_path(path, e))?;
    parse_pose_sequence(BufReader::new(file))
}

/// Calibrates a subject from one of their recordings.
pub fn calibrate(seq: &PoseSequence, cfg: &PipelineConfig) -> Result<SubjectCalibration> {
    let filled = fill_missing(seq, cfg.pose.conf_threshold)?;
    calibrate_subject(&filled.frames, cfg.z_near, cfg.z_far, &cfg.pose)
}

pub fn center_track(seq: &PoseSequence, cal: &SubjectCalibration, cfg: &PipelineConfig) -> Result<CenterTrack3D> {
    let filled = fill_missing(seq, cfg.pose.conf_threshold)?;
    estimate_center_track(&filled, cal, &cfg.pose)
}

pub fn video_track(seq: &PoseSequence, cal: &SubjectCalibration, cfg: &PipelineConfig) -> Result<AccelTrack> {
    video_acceleration(&center_track(seq, cal, cfg)?, cfg.target_rate, cfg.cutoff)
}

/// Recording pairs listed by a corpus directory, grouped by subject.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusIndex {
    pub subjects: BTreeMap<SubjectId, Vec<(Activity, std::path::PathBuf, std::path::PathBuf)>>,
}

/// Lists recordings from `manifest.json` when present, otherwise from
/// `*.pose.json` files with a matching `*.imu.csv`.
pub fn index_corpus(dir: &Path) -> Result<CorpusIndex> {
    if !dir.is_dir() {
        return Err(Error::at_path(dir, std::io::Error::new(std::io::ErrorKind::NotFound, "corpus directory not found")));
    }
    let mut subjects: BTreeMap<SubjectId, Vec<_>> = BTreeMap::new();
    if dir.join(crate::synthetic::MANIFEST_FILE).exists() {
        let manifest = CorpusManifest::load(dir)?;
        for e in manifest.entries {
            subjects
                .entry(e.subject)
                .or_default()
                .push((e.activity, dir.join(e.pose), dir.join(e.imu)));
        }
    } else {
        let mut names: Vec<_> = std::fs::read_dir(dir)
            .map_err(|e| Error::at_path(dir, e))?
            .filter_map(|e| e.ok())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .filter(|n| n.ends_with(".pose.json"))
            .collect();
        names.sort();
        for name in names {
            let stem = name.trim_end_matches(".pose.json");
            let Some((sid, act)) = stem.rsplit_once('_') else { continue };
            let activity: Activity = act.parse()?;
            subjects.entry(SubjectId::new(sid)).or_default().push((
                activity,
                dir.join(&name),
                dir.join(format!("{stem}.imu.csv")),
            ));
        }
    }
    if subjects.is_empty() {
        return Err(Error::at_path(dir, std::io::Error::new(std::io::ErrorKind::NotFound, "no recordings found")));
    }
    for recs in subjects.values_mut() {
        recs.sort_by_key(|r| r.0);
    }
    Ok(CorpusIndex { subjects })
}

/// Runs both pipelines over a corpus directory.
pub fn load_corpus(dir: &Path, cfg: &PipelineConfig) -> Result<PairedWindows> {
    let index = index_corpus(dir)?;
    let per_subject: Vec<(Vec<Window>, Vec<Window>)> = index
        .subjects
        .par_iter()
        .map(|(sid, recs)| {
            let calib_rec = recs
                .iter()
                .find(|r| r.0 == cfg.calibration_activity)
                .ok_or_else(|| Error::precondition(format!("subject {sid} has no {} recording", cfg.calibration_activity)))?;
            let cal = calibrate(&load_pose(&calib_rec.1)?, cfg)?;
            let mut video = Vec::new();
            let mut imu = Vec::new();
            for (activity, pose_path, imu_path) in recs {
                let seq = load_pose(pose_path)?;
                let v = standard_windows(&video_track(&seq, &cal, cfg)?)?;
                let raw = AccelTrack::load(imu_path)?;
                let i = standard_windows(&condition_imu(&raw)?)?;
                let n = v.len().min(i.len());
                info!("{sid} {activity}: {n} window pairs");
                video.extend(v.windows.into_iter().take(n));
                imu.extend(i.windows.into_iter().take(n));
            }
            Ok((video, imu))
        })
        .collect::<Result<_>>()?;
    let window_len = (crate::signal::WINDOW_SECONDS * cfg.target_rate).round() as usize;
    let (video, imu): (Vec<_>, Vec<_>) = per_subject.into_iter().unzip();
    Ok(PairedWindows {
        video: WindowSet {
            window_len,
            provenance: Provenance::VideoDerived,
            windows: video.into_iter().flatten().collect(),
        },
        imu: WindowSet {
            window_len,
            provenance: Provenance::RealImu,
            windows: imu.into_iter().flatten().collect(),
        },
    })
}
