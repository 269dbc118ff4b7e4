//! Acceleration tracks: double differentiation of center tracks, zero-phase
//! Butterworth low-pass, resampling, IMU conditioning and windowing.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pose::{parse_row, rate_from_times, CenterTrack3D};
use crate::types::{Activity, Provenance, SubjectId};

pub const TARGET_RATE: f64 = 25.0;
pub const IMU_RATE: f64 = 100.0;
pub const CUTOFF_HZ: f64 = 12.0;
pub const WINDOW_SECONDS: f64 = 2.0;
pub const HOP_SECONDS: f64 = 1.0;
/// Samples per analysis window at 25 Hz.
pub const WINDOW_LEN: usize = 50;
pub const NUM_CHANNELS: usize = 4;
pub const CHANNEL_NAMES: [&str; NUM_CHANNELS] = ["x", "y", "z", "tot"];

/// Anti-alias cutoff as a fraction of the target rate when downsampling.
const ANTI_ALIAS_FRACTION: f64 = 0.45;

/// Uniformly sampled `(x, y, z, tot)` acceleration.
#[derive(Debug, Clone, PartialEq)]
pub struct AccelTrack {
    pub sample_rate: f64,
    pub start_time: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub tot: Vec<f64>,
    pub subject: SubjectId,
    pub activity: Activity,
    pub provenance: Provenance,
}

impl AccelTrack {
    /// Builds a track from the three axes; `tot` is their L2 norm.
    pub fn from_xyz(
        sample_rate: f64,
        x: Vec<f64>,
        y: Vec<f64>,
        z: Vec<f64>,
        subject: SubjectId,
        activity: Activity,
        provenance: Provenance,
    ) -> Result<Self> {
        if x.len() != y.len() || x.len() != z.len() {
            return Err(Error::shape("acceleration axes differ in length"));
        }
        let tot = l2_norm(&x, &y, &z);
        let track = AccelTrack {
            sample_rate,
            start_time: 0.0,
            x,
            y,
            z,
            tot,
            subject,
            activity,
            provenance,
        };
        track.validate()?;
        Ok(track)
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.len() as f64 / self.sample_rate
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        match c {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            3 => &self.tot,
            _ => panic!("channel index {c} out of range"),
        }
    }

    fn channel_mut(&mut self, c: usize) -> &mut Vec<f64> {
        match c {
            0 => &mut self.x,
            1 => &mut self.y,
            2 => &mut self.z,
            3 => &mut self.tot,
            _ => panic!("channel index {c} out of range"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.x.len();
        if self.y.len() != n || self.z.len() != n || self.tot.len() != n {
            return Err(Error::shape("acceleration channels differ in length"));
        }
        if !(self.sample_rate > 0.0 && self.sample_rate.is_finite()) {
            return Err(Error::Parameter(format!("sample rate {} must be positive", self.sample_rate)));
        }
        for c in 0..NUM_CHANNELS {
            if let Some(i) = self.channel(c).iter().position(|v| !v.is_finite()) {
                return Err(Error::State(format!(
                    "non-finite {} sample at index {i}",
                    CHANNEL_NAMES[c]
                )));
            }
        }
        Ok(())
    }

    fn rederive_tot(&mut self) {
        if self.provenance != Provenance::Generated {
            self.tot = l2_norm(&self.x, &self.y, &self.z);
        }
    }

    fn metadata(&self) -> TrackMeta {
        TrackMeta {
            subject: self.subject.clone(),
            activity: self.activity,
            rate: self.sample_rate,
            provenance: self.provenance,
        }
    }

    /// CSV with header `t,x,y,z,tot`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "x", "y", "z", "tot"])?;
        for i in 0..self.len() {
            let t = self.start_time + i as f64 / self.sample_rate;
            w.write_record(&[
                t.to_string(),
                self.x[i].to_string(),
                self.y[i].to_string(),
                self.z[i].to_string(),
                self.tot[i].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the CSV body; labels and rate come from the sidecar metadata.
    pub fn read_csv<R: Read>(reader: R, meta: &TrackMeta) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let headers = r.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["t", "x", "y", "z", "tot"] {
            return Err(Error::Parse {
                line: 1,
                column: 1,
                message: format!("expected header t,x,y,z,tot, found {headers:?}"),
            });
        }
        let mut times = Vec::new();
        let (mut x, mut y, mut z, mut tot) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for (row, rec) in r.records().enumerate() {
            let vals = parse_row(&rec?, row + 2, 5)?;
            times.push(vals[0]);
            x.push(vals[1]);
            y.push(vals[2]);
            z.push(vals[3]);
            tot.push(vals[4]);
        }
        if times.len() >= 2 {
            let observed = rate_from_times(&times)?;
            if (observed - meta.rate).abs() > 0.01 * meta.rate {
                return Err(Error::Parameter(format!(
                    "sidecar rate {} Hz disagrees with timestamps ({observed:.3} Hz)",
                    meta.rate
                )));
            }
        }
        let track = AccelTrack {
            sample_rate: meta.rate,
            start_time: times.first().copied().unwrap_or(0.0),
            x,
            y,
            z,
            tot,
            subject: meta.subject.clone(),
            activity: meta.activity,
            provenance: meta.provenance,
        };
        track.validate()?;
        Ok(track)
    }

    /// Writes `<path>` (CSV) and the sidecar `<path>.json`-style metadata file.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::at_path(path, e))?;
        self.write_csv(BufWriter::new(file))?;
        let meta_path = sidecar_path(path);
        let meta = File::create(&meta_path).map_err(|e| Error::at_path(&meta_path, e))?;
        serde_json::to_writer_pretty(BufWriter::new(meta), &self.metadata())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let meta_path = sidecar_path(path);
        let meta_file = File::open(&meta_path).map_err(|e| Error::at_path(&meta_path, e))?;
        let meta: TrackMeta = serde_json::from_reader(BufReader::new(meta_file))?;
        let file = File::open(path).map_err(|e| Error::at_path(path, e))?;
        AccelTrack::read_csv(BufReader::new(file), &meta)
    }
}

/// Sidecar metadata for an acceleration CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackMeta {
    pub subject: SubjectId,
    pub activity: Activity,
    pub rate: f64,
    pub provenance: Provenance,
}

/// `foo.imu.csv` -> `foo.imu.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

fn l2_norm(x: &[f64], y: &[f64], z: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(y)
        .zip(z)
        .map(|((a, b), c)| (a * a + b * b + c * c).sqrt())
        .collect()
}

/// Central second difference per axis, scaled by `rate^2`. The two endpoint
/// samples copy their nearest interior neighbour.
pub fn differentiate_twice(track: &CenterTrack3D) -> Result<AccelTrack> {
    let n = track.len();
    if n < 3 {
        return Err(Error::TooShort { len: n, min: 3 });
    }
    let r2 = track.sample_rate * track.sample_rate;
    let mut axes: [Vec<f64>; 3] = Default::default();
    for (axis, out) in axes.iter_mut().enumerate() {
        let p: Vec<f64> = track.samples.iter().map(|s| s[axis]).collect();
        out.resize(n, 0.0);
        for i in 1..n - 1 {
            out[i] = (p[i - 1] - 2.0 * p[i] + p[i + 1]) * r2;
        }
        out[0] = out[1];
        out[n - 1] = out[n - 2];
    }
    let [x, y, z] = axes;
    let mut acc = AccelTrack::from_xyz(
        track.sample_rate,
        x,
        y,
        z,
        track.subject.clone(),
        track.activity,
        Provenance::VideoDerived,
    )?;
    acc.start_time = track.start_time;
    Ok(acc)
}

/// Second-order Butterworth section in transposed direct form II.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    /// Low-pass section with prewarped tangent-domain corner `k = tan(pi f / fs)`.
    fn lowpass_from_tan(k: f64) -> Self {
        let k2 = k * k;
        let norm = 1.0 / (1.0 + std::f64::consts::SQRT_2 * k + k2);
        let b0 = k2 * norm;
        Biquad {
            b: [b0, 2.0 * b0, b0],
            a: [2.0 * (k2 - 1.0) * norm, (1.0 - std::f64::consts::SQRT_2 * k + k2) * norm],
        }
    }

    /// Section used by [`zero_phase_lowpass`]: the corner is shifted so that the
    /// forward-backward cascade is -3 dB at `cutoff`.
    pub fn zero_phase_section(cutoff: f64, sample_rate: f64) -> Self {
        // Two passes of a 2nd-order section: |H|^4 = 1/2 at cutoff.
        let correction = (std::f64::consts::SQRT_2 - 1.0).powf(0.25);
        let k = (std::f64::consts::PI * cutoff / sample_rate).tan() / correction;
        Biquad::lowpass_from_tan(k)
    }

    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }

    /// Runs the section over `data` in place, starting from the steady state
    /// for a constant input equal to `data[0]`.
    fn run(&self, data: &mut [f64]) {
        let Some(&x0) = data.first() else { return };
        let g = self.dc_gain();
        let mut s2 = (self.b[2] - self.a[1] * g) * x0;
        let mut s1 = (self.b[1] - self.a[0] * g) * x0 + s2;
        for v in data.iter_mut() {
            let x = *v;
            let y = self.b[0] * x + s1;
            s1 = self.b[1] * x - self.a[0] * y + s2;
            s2 = self.b[2] * x - self.a[1] * y;
            *v = y;
        }
    }
}

/// Forward-backward (zero-phase) application of a 2nd-order Butterworth
/// section, giving a 4th-order magnitude response. Edges are handled by odd
/// reflection padding.
pub fn zero_phase_lowpass(signal: &[f64], cutoff: f64, sample_rate: f64) -> Result<Vec<f64>> {
    if !(cutoff > 0.0 && cutoff < 0.5 * sample_rate) {
        return Err(Error::Parameter(format!(
            "cutoff {cutoff} Hz must lie in (0, {}) for {sample_rate} Hz sampling",
            0.5 * sample_rate
        )));
    }
    let n = signal.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let section = Biquad::zero_phase_section(cutoff, sample_rate);
    let pad = 9.min(n - 1);
    let mut ext = Vec::with_capacity(n + 2 * pad);
    let (first, last) = (signal[0], signal[n - 1]);
    ext.extend((1..=pad).rev().map(|i| 2.0 * first - signal[i]));
    ext.extend_from_slice(signal);
    ext.extend((1..=pad).map(|i| 2.0 * last - signal[n - 1 - i]));
    section.run(&mut ext);
    ext.reverse();
    section.run(&mut ext);
    ext.reverse();
    Ok(ext[pad..pad + n].to_vec())
}

/// Zero-phase low-pass on every channel; `tot` is re-derived for
/// non-generated tracks.
pub fn lowpass(track: &AccelTrack, cutoff: f64) -> Result<AccelTrack> {
    let mut out = track.clone();
    for c in 0..NUM_CHANNELS {
        if c == 3 && track.provenance != Provenance::Generated {
            continue;
        }
        *out.channel_mut(c) = zero_phase_lowpass(track.channel(c), cutoff, track.sample_rate)?;
    }
    out.rederive_tot();
    Ok(out)
}

/// Linear-interpolation resampling. Downsampling first applies a zero-phase
/// anti-alias low-pass at `0.45 * target_rate`.
pub fn resample(track: &AccelTrack, target_rate: f64) -> Result<AccelTrack> {
    if !(target_rate > 0.0 && target_rate.is_finite()) {
        return Err(Error::Parameter(format!("target rate {target_rate} must be positive")));
    }
    if (target_rate - track.sample_rate).abs() < 1e-12 * track.sample_rate {
        return Ok(track.clone());
    }
    let source = if target_rate < track.sample_rate {
        lowpass(track, ANTI_ALIAS_FRACTION * target_rate)?
    } else {
        track.clone()
    };
    let n = source.len();
    if n == 0 {
        return Err(Error::TooShort { len: 0, min: 1 });
    }
    let ratio = source.sample_rate / target_rate;
    let n_out = (((n - 1) as f64 / ratio) + 1e-9).floor() as usize + 1;
    let interp = |data: &[f64]| -> Vec<f64> {
        (0..n_out)
            .map(|j| {
                let pos = j as f64 * ratio;
                let i = (pos.floor() as usize).min(n - 1);
                let frac = pos - i as f64;
                if i + 1 < n && frac > 1e-12 {
                    data[i] + frac * (data[i + 1] - data[i])
                } else {
                    data[i]
                }
            })
            .collect()
    };
    let mut out = AccelTrack {
        sample_rate: target_rate,
        start_time: source.start_time,
        x: interp(&source.x),
        y: interp(&source.y),
        z: interp(&source.z),
        tot: interp(&source.tot),
        subject: source.subject.clone(),
        activity: source.activity,
        provenance: source.provenance,
    };
    out.rederive_tot();
    Ok(out)
}

/// Raw IMU recording -> 25 Hz, 12 Hz band-limited track (resample, then filter).
pub fn condition_imu(raw: &AccelTrack) -> Result<AccelTrack> {
    condition_imu_with(raw, TARGET_RATE, CUTOFF_HZ)
}

pub fn condition_imu_with(raw: &AccelTrack, target_rate: f64, cutoff: f64) -> Result<AccelTrack> {
    if raw.provenance != Provenance::RealImu {
        return Err(Error::precondition(format!(
            "condition_imu expects a real IMU track, got {:?}",
            raw.provenance
        )));
    }
    let resampled = resample(raw, target_rate)?;
    lowpass(&resampled, cutoff)
}

/// Pose-derived center track -> band-limited acceleration at `target_rate`.
pub fn video_acceleration(track: &CenterTrack3D, target_rate: f64, cutoff: f64) -> Result<AccelTrack> {
    let acc = differentiate_twice(track)?;
    let filtered = lowpass(&acc, cutoff)?;
    resample(&filtered, target_rate)
}

/// A fixed-length multi-channel segment.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub start_time: f64,
    /// `x, y, z, tot`, each of the window length.
    pub channels: [Vec<f64>; NUM_CHANNELS],
    pub subject: SubjectId,
    pub activity: Activity,
}

impl Window {
    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels[0].is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowSet {
    pub window_len: usize,
    pub provenance: Provenance,
    pub windows: Vec<Window>,
}

const WINDOW_MAGIC: &[u8; 4] = b"VIMW";
const WINDOW_VERSION: u32 = 1;

impl WindowSet {
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    /// Binary record stream: header, then per record the subject id
    /// (u16 length + UTF-8), activity index (u8), start time (f32) and
    /// `4 x window_len` little-endian f32 samples, channel-major.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(WINDOW_MAGIC)?;
        w.write_all(&WINDOW_VERSION.to_le_bytes())?;
        w.write_all(&(self.window_len as u32).to_le_bytes())?;
        w.write_all(&[self.provenance.code()])?;
        w.write_all(&(self.windows.len() as u32).to_le_bytes())?;
        for win in &self.windows {
            let id = win.subject.as_str().as_bytes();
            let id_len = u16::try_from(id.len()).map_err(|_| Error::Parameter("subject id too long".into()))?;
            w.write_all(&id_len.to_le_bytes())?;
            w.write_all(id)?;
            w.write_all(&[win.activity.index() as u8])?;
            w.write_all(&(win.start_time as f32).to_le_bytes())?;
            for ch in &win.channels {
                for &v in ch {
                    w.write_all(&(v as f32).to_le_bytes())?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let corrupt = |e: std::io::Error| Error::CorruptCheckpoint(format!("window stream: {e}"));
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(corrupt)?;
        if &magic != WINDOW_MAGIC {
            return Err(Error::CorruptCheckpoint("not a window stream".into()));
        }
        let version = read_u32(&mut r).map_err(corrupt)?;
        if version != WINDOW_VERSION {
            return Err(Error::Version(format!("window stream version {version}, expected {WINDOW_VERSION}")));
        }
        let window_len = read_u32(&mut r).map_err(corrupt)? as usize;
        let mut byte = [0u8; 1];
        r.read_exact(&mut byte).map_err(corrupt)?;
        let provenance = Provenance::from_code(byte[0])
            .ok_or_else(|| Error::CorruptCheckpoint(format!("unknown provenance code {}", byte[0])))?;
        let count = read_u32(&mut r).map_err(corrupt)? as usize;
        let mut windows = Vec::with_capacity(count.min(1 << 20));
        for _ in 0..count {
            let mut len = [0u8; 2];
            r.read_exact(&mut len).map_err(corrupt)?;
            let mut id = vec![0u8; u16::from_le_bytes(len) as usize];
            r.read_exact(&mut id).map_err(corrupt)?;
            let subject = String::from_utf8(id).map_err(|e| Error::CorruptCheckpoint(e.to_string()))?;
            r.read_exact(&mut byte).map_err(corrupt)?;
            let activity = Activity::from_index(byte[0] as usize)
                .ok_or_else(|| Error::CorruptCheckpoint(format!("unknown activity index {}", byte[0])))?;
            let start_time = read_f32(&mut r).map_err(corrupt)? as f64;
            let mut channels: [Vec<f64>; NUM_CHANNELS] = Default::default();
            for ch in channels.iter_mut() {
                *ch = (0..window_len)
                    .map(|_| read_f32(&mut r).map(f64::from))
                    .collect::<std::io::Result<_>>()
                    .map_err(corrupt)?;
            }
            windows.push(Window {
                start_time,
                channels,
                subject: SubjectId(subject),
                activity,
            });
        }
        Ok(WindowSet {
            window_len,
            provenance,
            windows,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::at_path(path, e))?;
        self.write_binary(BufWriter::new(file))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::at_path(path, e))?;
        WindowSet::read_binary(BufReader::new(file))
    }
}

fn read_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f32<R: Read>(r: &mut R) -> std::io::Result<f32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(f32::from_le_bytes(b))
}

/// Cuts `length`-second windows every `hop` seconds from the start of the
/// track; a trailing partial window is dropped.
pub fn make_windows(track: &AccelTrack, length: f64, hop: f64) -> Result<WindowSet> {
    if !(length > 0.0 && hop > 0.0) {
        return Err(Error::Parameter("window length and hop must be positive".into()));
    }
    let win = (length * track.sample_rate).round() as usize;
    let step = (hop * track.sample_rate).round() as usize;
    if win == 0 || step == 0 {
        return Err(Error::Parameter(format!(
            "window of {length} s with hop {hop} s is empty at {} Hz",
            track.sample_rate
        )));
    }
    let n = track.len();
    if n < win {
        return Err(Error::EmptyWindowSet { len: n, window: win });
    }
    let windows = (0..=(n - win) / step)
        .map(|k| {
            let s = k * step;
            Window {
                start_time: track.start_time + s as f64 / track.sample_rate,
                channels: std::array::from_fn(|c| track.channel(c)[s..s + win].to_vec()),
                subject: track.subject.clone(),
                activity: track.activity,
            }
        })
        .collect();
    Ok(WindowSet {
        window_len: win,
        provenance: track.provenance,
        windows,
    })
}

/// The standard 2 s / 1 s windowing.
pub fn standard_windows(track: &AccelTrack) -> Result<WindowSet> {
    make_windows(track, WINDOW_SECONDS, HOP_SECONDS)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn track_from(rate: f64, f: impl Fn(f64) -> [f64; 3], n: usize, provenance: Provenance) -> AccelTrack {
        let mut axes: [Vec<f64>; 3] = Default::default();
        for i in 0..n {
            let v = f(i as f64 / rate);
            for a in 0..3 {
                axes[a].push(v[a]);
            }
        }
        let [x, y, z] = axes;
        AccelTrack::from_xyz(rate, x, y, z, "S1".into(), Activity::Walking, provenance).unwrap()
    }

    fn center(rate: f64, f: impl Fn(f64) -> f64, n: usize) -> CenterTrack3D {
        CenterTrack3D {
            sample_rate: rate,
            start_time: 0.0,
            samples: (0..n).map(|i| {
                let p = f(i as f64 / rate);
                [p, 0.5 * p, -p]
            }).collect(),
            outliers: vec![false; n],
            subject: "S1".into(),
            activity: Activity::Walking,
        }
    }

    /// Least-squares amplitude of a sinusoid of known frequency.
    fn sine_amplitude(data: &[f64], freq: f64, rate: f64) -> f64 {
        let (mut ss, mut sc, mut cc, mut ys, mut yc) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (i, &y) in data.iter().enumerate() {
            let w = 2.0 * PI * freq * i as f64 / rate;
            let (s, c) = w.sin_cos();
            ss += s * s;
            sc += s * c;
            cc += c * c;
            ys += y * s;
            yc += y * c;
        }
        let det = ss * cc - sc * sc;
        let a = (ys * cc - yc * sc) / det;
        let b = (yc * ss - ys * sc) / det;
        a.hypot(b)
    }

    #[test]
    fn second_difference_of_linear_is_zero() {
        let acc = differentiate_twice(&center(25.0, |t| 3.0 * t + 1.0, 50)).unwrap();
        assert!(acc.x[1..49].iter().all(|v| v.abs() < 1e-9));
        assert_eq!(acc.provenance, Provenance::VideoDerived);
    }

    #[test]
    fn second_difference_of_quadratic_is_exact() {
        let acc = differentiate_twice(&center(25.0, |t| 0.5 * 2.0 * t * t, 50)).unwrap();
        for i in 1..49 {
            assert!((acc.x[i] - 2.0).abs() < 1e-9);
            assert!((acc.y[i] - 1.0).abs() < 1e-9);
            assert!((acc.z[i] + 2.0).abs() < 1e-9);
        }
        assert_eq!(acc.x[0], acc.x[1]);
        assert_eq!(acc.x[49], acc.x[48]);
    }

    #[test]
    fn second_difference_sinusoid_amplitude() {
        let (amp, f, rate) = (0.1, 2.0, 25.0);
        let acc = differentiate_twice(&center(rate, |t| amp * (2.0 * PI * f * t).sin(), 250)).unwrap();
        let measured = sine_amplitude(&acc.x[1..249], f, rate);
        let analytic = amp * (2.0 * PI * f).powi(2);
        assert!((analytic - 15.79).abs() < 0.01);
        let discrete = (2.0 - 2.0 * (2.0 * PI * f / rate).cos()) * rate * rate / (2.0 * PI * f).powi(2);
        // The sampled operator response sets the expectation; the window offset
        // shifts the fitted phase, not the amplitude.
        assert!((measured / analytic - discrete).abs() < 0.01 * discrete, "{measured} vs {analytic}");
    }

    #[test]
    fn second_difference_rejects_short_tracks() {
        assert!(matches!(differentiate_twice(&center(25.0, |t| t, 2)), Err(Error::TooShort { .. })));
    }

    #[test]
    fn lowpass_preserves_dc() {
        let t = track_from(100.0, |_| [1.5, -2.0, 9.81], 300, Provenance::RealImu);
        let out = lowpass(&t, 12.0).unwrap();
        for c in 0..4 {
            for (a, b) in out.channel(c).iter().zip(t.channel(c)) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn lowpass_rejects_cutoff_at_nyquist() {
        let t = track_from(25.0, |_| [0.0; 3], 50, Provenance::RealImu);
        assert!(matches!(lowpass(&t, 12.5), Err(Error::Parameter(_))));
        assert!(lowpass(&t, 12.0).is_ok());
    }

    #[test]
    fn lowpass_is_minus_3db_at_cutoff() {
        let data: Vec<f64> = (0..4000).map(|i| (2.0 * PI * 12.0 * i as f64 / 100.0).sin()).collect();
        let out = zero_phase_lowpass(&data, 12.0, 100.0).unwrap();
        let gain = sine_amplitude(&out[500..3500], 12.0, 100.0);
        assert!((gain - std::f64::consts::FRAC_1_SQRT_2).abs() < 2e-3, "{gain}");
    }

    #[test]
    fn generated_tot_is_filtered_not_rederived() {
        let mut t = track_from(25.0, |s| [s, 0.0, 0.0], 100, Provenance::Generated);
        t.tot = vec![7.0; 100];
        let out = lowpass(&t, 5.0).unwrap();
        assert!(out.tot.iter().all(|v| (v - 7.0).abs() < 1e-9));
    }

    #[test]
    fn resample_identity_and_length() {
        let t = track_from(100.0, |s| [s.sin(), 0.0, 1.0], 6000, Provenance::RealImu);
        assert_eq!(resample(&t, 100.0).unwrap(), t);
        let down = resample(&t, 25.0).unwrap();
        assert_eq!(down.len(), 1500);
        assert_eq!(down.sample_rate, 25.0);
    }

    #[test]
    fn resample_keeps_slow_sine() {
        let t = track_from(100.0, |s| [(2.0 * PI * s).sin(), 0.0, 0.0], 6000, Provenance::RealImu);
        let down = resample(&t, 25.0).unwrap();
        let amp = sine_amplitude(&down.x[50..1450], 1.0, 25.0);
        assert!((amp - 1.0).abs() < 0.02, "{amp}");
    }

    #[test]
    fn condition_imu_keeps_gravity() {
        let t = track_from(100.0, |_| [0.0, 0.0, 9.81], 1000, Provenance::RealImu);
        let out = condition_imu(&t).unwrap();
        assert_eq!(out.sample_rate, 25.0);
        assert!(out.z.iter().all(|v| (v - 9.81).abs() < 1e-9));
        assert!(out.tot.iter().all(|v| (v - 9.81).abs() < 1e-9));
    }

    #[test]
    fn condition_imu_requires_real_imu() {
        let t = track_from(100.0, |_| [0.0; 3], 400, Provenance::VideoDerived);
        assert!(matches!(condition_imu(&t), Err(Error::Precondition(_))));
    }

    #[test]
    fn windows_count_and_truncation() {
        let mk = |n: usize| track_from(25.0, |s| [s, 0.0, 0.0], n, Provenance::RealImu);
        assert_eq!(standard_windows(&mk(1500)).unwrap().len(), 59);
        assert_eq!(standard_windows(&mk(50)).unwrap().len(), 1);
        let short = standard_windows(&mk(72)).unwrap();
        assert_eq!(short.len(), 1);
        assert_eq!(short.windows[0].len(), WINDOW_LEN);
        assert!(matches!(standard_windows(&mk(49)), Err(Error::EmptyWindowSet { .. })));
    }

    #[test]
    fn window_binary_round_trip() {
        let t = track_from(25.0, |s| [s, 2.0 * s, 0.25], 120, Provenance::RealImu);
        let set = standard_windows(&t).unwrap();
        let mut buf = Vec::new();
        set.write_binary(&mut buf).unwrap();
        let back = WindowSet::read_binary(buf.as_slice()).unwrap();
        assert_eq!(back.len(), set.len());
        assert_eq!(back.windows[1].subject, set.windows[1].subject);
        for (a, b) in back.windows[2].channels[1].iter().zip(&set.windows[2].channels[1]) {
            assert_eq!(*a, *b as f32 as f64);
        }
        assert!(WindowSet::read_binary(&buf[..buf.len() - 3]).is_err());
    }

    #[test]
    fn accel_csv_round_trip() {
        let t = track_from(25.0, |s| [s, -s, 0.5], 30, Provenance::RealImu);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert!(buf.starts_with(b"t,x,y,z,tot\n"));
        let back = AccelTrack::read_csv(buf.as_slice(), &t.metadata()).unwrap();
        assert_eq!(back, t);
    }

    proptest! {
        #[test]
        fn lowpass_is_linear(a in -3.0..3.0f64, b in -3.0..3.0f64, seed in 0u64..500) {
            let s1: Vec<f64> = (0..200).map(|i| ((i as u64 * 2654435761 + seed) % 1000) as f64 / 500.0 - 1.0).collect();
            let s2: Vec<f64> = (0..200).map(|i| (i as f64 * 0.37 + seed as f64).sin()).collect();
            let mix: Vec<f64> = s1.iter().zip(&s2).map(|(p, q)| a * p + b * q).collect();
            let f1 = zero_phase_lowpass(&s1, 12.0, 100.0).unwrap();
            let f2 = zero_phase_lowpass(&s2, 12.0, 100.0).unwrap();
            let fm = zero_phase_lowpass(&mix, 12.0, 100.0).unwrap();
            for i in 0..200 {
                prop_assert!((fm[i] - (a * f1[i] + b * f2[i])).abs() < 1e-9);
            }
        }

        #[test]
        fn tot_matches_norm(xs in proptest::collection::vec((-20.0..20.0f64, -20.0..20.0f64, -20.0..20.0f64), 60..200)) {
            let n = xs.len();
            let t = track_from(100.0, |s| { let (a, b, c) = xs[(s * 100.0).round() as usize]; [a, b, c] }, n, Provenance::RealImu);
            for out in [lowpass(&t, 12.0).unwrap(), resample(&t, 25.0).unwrap()] {
                for i in 0..out.len() {
                    let norm = (out.x[i].powi(2) + out.y[i].powi(2) + out.z[i].powi(2)).sqrt();
                    prop_assert!((out.tot[i] - norm).abs() <= 1e-12);
                }
            }
        }

        #[test]
        fn non_overlapping_halves_rebuild_track(n in 50usize..400) {
            let t = track_from(25.0, |s| [s.sin(), s.cos(), s], n, Provenance::RealImu);
            let set = standard_windows(&t).unwrap();
            // With 2 s windows and 1 s hop, even-indexed windows tile the covered prefix.
            let mut rebuilt = Vec::new();
            for w in set.windows.iter().step_by(2) {
                rebuilt.extend_from_slice(&w.channels[0]);
            }
            if set.len().is_multiple_of(2) {
                rebuilt.extend_from_slice(&set.windows[set.len() - 1].channels[0][25..]);
            }
            prop_assert_eq!(&rebuilt[..], &t.x[..rebuilt.len()]);
        }
    }
}
