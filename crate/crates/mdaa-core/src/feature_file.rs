//! Precomputed embedding ingest.
//!
//! Binary layout (`AEXF`, little-endian): magic, version u16, n_samples u32,
//! audio_dim u32, video_dim u32, num_classes u32, then per sample the audio
//! f32s, the video f32s, and an i32 label (−1 = unlabeled). A CSV variant
//! with header `audio_0..,video_0..,label` is accepted for small files.

use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::sim::LabeledSet;
use crate::wire;

const MAGIC: &[u8; 4] = b"AEXF";
const VERSION: u16 = 1;

/// Loaded embeddings. Labels use −1 for unlabeled samples; features are
/// stored single precision on disk and widened on load.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFile {
    pub audio: Matrix,
    pub video: Matrix,
    pub labels: Vec<i32>,
    pub num_classes: usize,
}

impl FeatureFile {
    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    /// The labeled subset as a training/evaluation set. Errors if no sample
    /// is labeled.
    pub fn labeled_set(&self) -> Result<LabeledSet> {
        let idx: Vec<usize> = (0..self.labels.len())
            .filter(|&i| self.labels[i] >= 0)
            .collect();
        if idx.is_empty() {
            return Err(Error::InvalidConfig(
                "feature file has no labeled samples".into(),
            ));
        }
        let mut audio = Matrix::zeros(idx.len(), self.audio.cols());
        let mut video = Matrix::zeros(idx.len(), self.video.cols());
        let mut labels = Vec::with_capacity(idx.len());
        for (row, &i) in idx.iter().enumerate() {
            audio.row_mut(row).copy_from_slice(self.audio.row(i));
            video.row_mut(row).copy_from_slice(self.video.row(i));
            labels.push(self.labels[i] as usize);
        }
        Ok(LabeledSet { audio, video, labels })
    }

    pub fn to_binary(&self) -> Vec<u8> {
        let mut w = wire::Writer::new();
        w.magic(MAGIC);
        w.u16(VERSION);
        w.u32(self.n_samples() as u32);
        w.u32(self.audio.cols() as u32);
        w.u32(self.video.cols() as u32);
        w.u32(self.num_classes as u32);
        for i in 0..self.n_samples() {
            for &v in self.audio.row(i) {
                w.f32(v as f32);
            }
            for &v in self.video.row(i) {
                w.f32(v as f32);
            }
            w.i32(self.labels[i]);
        }
        w.into_bytes()
    }

    pub fn from_binary(bytes: &[u8]) -> Result<FeatureFile> {
        let mut r = wire::Reader::new(bytes, "feature file");
        r.magic(MAGIC)?;
        r.expect_version(VERSION)?;
        let n = r.u32()? as usize;
        let audio_dim = r.u32()? as usize;
        let video_dim = r.u32()? as usize;
        let num_classes = r.u32()? as usize;
        let mut audio = Matrix::zeros(n, audio_dim);
        let mut video = Matrix::zeros(n, video_dim);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            for j in 0..audio_dim {
                audio[(i, j)] = r.f32()? as f64;
            }
            for j in 0..video_dim {
                video[(i, j)] = r.f32()? as f64;
            }
            labels.push(r.i32()?);
        }
        r.finish()?;
        Ok(FeatureFile {
            audio,
            video,
            labels,
            num_classes,
        })
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<String> = Vec::new();
        for j in 0..self.audio.cols() {
            header.push(format!("audio_{j}"));
        }
        for j in 0..self.video.cols() {
            header.push(format!("video_{j}"));
        }
        header.push("label".into());
        wtr.write_record(&header).map_err(csv_err)?;
        for i in 0..self.n_samples() {
            let mut rec: Vec<String> = Vec::with_capacity(header.len());
            for &v in self.audio.row(i) {
                rec.push(v.to_string());
            }
            for &v in self.video.row(i) {
                rec.push(v.to_string());
            }
            rec.push(self.labels[i].to_string());
            wtr.write_record(&rec).map_err(csv_err)?;
        }
        wtr.into_inner()
            .map_err(|e| Error::InvalidConfig(format!("csv flush: {e}")))
    }

    pub fn from_csv(bytes: &[u8]) -> Result<FeatureFile> {
        let mut rdr = csv::Reader::from_reader(bytes);
        let headers = rdr.headers().map_err(csv_err)?.clone();
        let audio_dim = headers.iter().filter(|h| h.starts_with("audio_")).count();
        let video_dim = headers.iter().filter(|h| h.starts_with("video_")).count();
        if audio_dim == 0 || video_dim == 0 || headers.iter().last() != Some("label") {
            return Err(Error::InvalidConfig(
                "csv header must be audio_0..,video_0..,label".into(),
            ));
        }
        let mut audio_rows: Vec<f64> = Vec::new();
        let mut video_rows: Vec<f64> = Vec::new();
        let mut labels: Vec<i32> = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(csv_err)?;
            if rec.len() != audio_dim + video_dim + 1 {
                return Err(Error::LengthMismatch {
                    context: "csv row",
                    expected: audio_dim + video_dim + 1,
                    found: rec.len(),
                });
            }
            for v in rec.iter().take(audio_dim) {
                audio_rows.push(parse_f64(v)?);
            }
            for v in rec.iter().skip(audio_dim).take(video_dim) {
                video_rows.push(parse_f64(v)?);
            }
            let label = rec
                .get(audio_dim + video_dim)
                .unwrap()
                .trim()
                .parse::<i32>()
                .map_err(|e| Error::InvalidConfig(format!("bad label: {e}")))?;
            labels.push(label);
        }
        let n = labels.len();
        let num_classes = labels.iter().copied().max().map_or(0, |m| (m + 1).max(0)) as usize;
        Ok(FeatureFile {
            audio: Matrix::from_vec(n, audio_dim, audio_rows),
            video: Matrix::from_vec(n, video_dim, video_rows),
            labels,
            num_classes,
        })
    }

    /// Load from disk, dispatching on the `.csv` extension.
    pub fn load(path: &Path) -> Result<FeatureFile> {
        let bytes = std::fs::read(path)?;
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
            FeatureFile::from_csv(&bytes)
        } else {
            FeatureFile::from_binary(&bytes)
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
            self.to_csv()?
        } else {
            self.to_binary()
        };
        std::fs::write(path, bytes)?;
        Ok(())
    }
}

fn parse_f64(v: &str) -> Result<f64> {
    v.trim()
        .parse::<f64>()
        .map_err(|e| Error::InvalidConfig(format!("bad feature value {v:?}: {e}")))
}

fn csv_err(e: csv::Error) -> Error {
    Error::InvalidConfig(format!("csv: {e}"))
}
