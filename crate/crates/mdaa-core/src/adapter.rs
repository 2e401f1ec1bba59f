//! The adaptation orchestrator.
//!
//! Owns the three branch expansions and classifiers. Per batch it expands
//! every branch, scores every sample with every classifier, elects the
//! per-sample leader, and gates which classifiers may fold the leader's
//! soft pseudo-label into their banks. Predictions always come from the
//! pre-update weights: gating and prediction both run before the batch
//! flush, so a sample never sees a model influenced by its own batch.

use crate::classifier::{
    compute_class_weights, init_source, one_hot, AnalyticClassifier, MemoryBank, UpdateStrategy,
};
use crate::error::{Error, Result};
use crate::expansion::{build_expansion, Expansion, ExpansionSpec, Nonlinearity};
use crate::fusion::{
    build_soft_label, elect_leader, gate_decision, argmax, GateDecision, SoftLabel, ThresholdState,
};
use crate::linalg::Matrix;
use crate::seeds::{self, domain};
use crate::wire;
use crate::{Branch, PerBranch};

const SNAPSHOT_MAGIC: &[u8; 4] = b"MDAM";
const SNAPSHOT_VERSION: u16 = 1;

/// Model-building knobs. `theta` seeds every branch threshold (and is the
/// fixed gate threshold when `dynamic_threshold` is off, the default).
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ModelConfig {
    pub expanded_dim: usize,
    pub gamma: f64,
    pub top_n: usize,
    pub theta: f64,
    pub lambda: f64,
    pub dynamic_threshold: bool,
    pub nonlinearity: Nonlinearity,
    /// Projection scale; `None` resolves to 1/√input_dim per branch.
    pub scale: Option<f64>,
    pub seed: u64,
    pub strategy: UpdateStrategy,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            expanded_dim: 512,
            gamma: 1.0,
            top_n: 2,
            theta: 1e-3,
            lambda: 0.0,
            dynamic_threshold: false,
            nonlinearity: Nonlinearity::Relu,
            scale: None,
            seed: 0,
            strategy: UpdateStrategy::Refactor,
        }
    }
}

/// Everything recorded about one stream sample: confidences, the elected
/// leader, its prediction and soft label, and every gate outcome.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdaptationEvent {
    /// Position within the processed batch.
    pub sample_index: usize,
    pub maps: PerBranch<f64>,
    pub leader: Branch,
    pub prediction: usize,
    pub per_ac_prediction: PerBranch<usize>,
    pub soft_label: SoftLabel,
    pub gates: PerBranch<GateDecision>,
}

pub fn predictions(events: &[AdaptationEvent]) -> Vec<usize> {
    events.iter().map(|e| e.prediction).collect()
}

#[derive(Debug, Clone)]
pub struct MdaaModel {
    expansions: PerBranch<Expansion>,
    classifiers: PerBranch<AnalyticClassifier>,
    thresholds: ThresholdState,
    top_n: usize,
    dynamic: bool,
}

/// Initialize all three branches from a labeled source set, then drop the
/// source data; only the banks persist.
pub fn init_from_source(
    config: &ModelConfig,
    source_audio: &Matrix,
    source_video: &Matrix,
    labels: &[usize],
    num_classes: usize,
) -> Result<MdaaModel> {
    if source_audio.rows() != source_video.rows() || source_audio.rows() != labels.len() {
        return Err(Error::LengthMismatch {
            context: "source rows vs labels",
            expected: source_audio.rows(),
            found: labels.len(),
        });
    }
    if config.top_n == 0 || config.top_n > num_classes {
        return Err(Error::InvalidN {
            n: config.top_n,
            num_classes,
        });
    }
    let weights = compute_class_weights(labels, num_classes)?;
    let labels_m = one_hot(labels, num_classes);

    let spec_for = |input_dim: usize, tag: u64| ExpansionSpec {
        input_dim,
        expanded_dim: config.expanded_dim,
        seed: seeds::derive(config.seed, tag),
        nonlinearity: config.nonlinearity,
        scale: config.scale.unwrap_or(1.0 / (input_dim as f64).sqrt()),
    };
    let expansions = PerBranch::new(
        build_expansion(spec_for(source_audio.cols(), domain::EXPANSION_AUDIO))?,
        build_expansion(spec_for(source_video.cols(), domain::EXPANSION_VIDEO))?,
        build_expansion(spec_for(
            source_audio.cols() + source_video.cols(),
            domain::EXPANSION_FUSED,
        ))?,
    );

    let fused_raw = Matrix::hconcat(source_audio, source_video)?;
    let raw = PerBranch::new(source_audio, source_video, &fused_raw);
    let mut classifiers: Vec<AnalyticClassifier> = Vec::with_capacity(3);
    for branch in Branch::ALL {
        let expanded = expansions.get(branch).expand_batch(raw.get(branch))?;
        let mut ac = init_source(branch, &expanded, &labels_m, &weights, config.gamma)?;
        ac.set_strategy(config.strategy);
        classifiers.push(ac);
    }
    let fused = classifiers.pop().unwrap();
    let video = classifiers.pop().unwrap();
    let audio = classifiers.pop().unwrap();

    MdaaModel::from_parts(
        expansions,
        PerBranch::new(audio, video, fused),
        ThresholdState::new(config.theta, config.lambda),
        config.top_n,
        config.dynamic_threshold,
    )
}

struct BatchEval {
    expanded: PerBranch<Matrix>,
    events: Vec<AdaptationEvent>,
}

impl MdaaModel {
    /// Assemble a model from prebuilt parts, checking cross-branch
    /// consistency (shared class count, expansion/bank dims).
    pub fn from_parts(
        expansions: PerBranch<Expansion>,
        classifiers: PerBranch<AnalyticClassifier>,
        thresholds: ThresholdState,
        top_n: usize,
        dynamic: bool,
    ) -> Result<MdaaModel> {
        let num_classes = classifiers.audio.bank().num_classes();
        for branch in Branch::ALL {
            let ac = classifiers.get(branch);
            if ac.bank().num_classes() != num_classes {
                return Err(Error::InvalidConfig(format!(
                    "classifier {branch} has {} classes, expected {num_classes}",
                    ac.bank().num_classes()
                )));
            }
            if ac.bank().feature_dim() != expansions.get(branch).expanded_dim() {
                return Err(Error::InvalidConfig(format!(
                    "classifier {branch} feature dim {} does not match expansion {}",
                    ac.bank().feature_dim(),
                    expansions.get(branch).expanded_dim()
                )));
            }
        }
        if top_n == 0 || top_n > num_classes {
            return Err(Error::InvalidN {
                n: top_n,
                num_classes,
            });
        }
        Ok(MdaaModel {
            expansions,
            classifiers,
            thresholds,
            top_n,
            dynamic,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.classifiers.audio.bank().num_classes()
    }

    pub fn expansion(&self, branch: Branch) -> &Expansion {
        self.expansions.get(branch)
    }

    pub fn classifier(&self, branch: Branch) -> &AnalyticClassifier {
        self.classifiers.get(branch)
    }

    pub fn thresholds(&self) -> &ThresholdState {
        &self.thresholds
    }

    pub fn top_n(&self) -> usize {
        self.top_n
    }

    pub fn dynamic_threshold(&self) -> bool {
        self.dynamic
    }

    pub fn set_strategy(&mut self, strategy: UpdateStrategy) {
        for branch in Branch::ALL {
            self.classifiers.get_mut(branch).set_strategy(strategy);
        }
    }

    /// Replace the fusion knobs (thresholds, soft-label size, dynamic flag)
    /// on an existing model, e.g. after restoring a snapshot.
    pub fn set_fusion_config(
        &mut self,
        thresholds: ThresholdState,
        top_n: usize,
        dynamic: bool,
    ) -> Result<()> {
        if top_n == 0 || top_n > self.num_classes() {
            return Err(Error::InvalidN {
                n: top_n,
                num_classes: self.num_classes(),
            });
        }
        self.thresholds = thresholds;
        self.top_n = top_n;
        self.dynamic = dynamic;
        Ok(())
    }

    fn expand_all(&self, audio: &Matrix, video: &Matrix) -> Result<PerBranch<Matrix>> {
        let fused_raw = Matrix::hconcat(audio, video)?;
        Ok(PerBranch::new(
            self.expansions.audio.expand_batch(audio)?,
            self.expansions.video.expand_batch(video)?,
            self.expansions.fused.expand_batch(&fused_raw)?,
        ))
    }

    fn predict_all(&mut self, expanded: &PerBranch<Matrix>) -> Result<PerBranch<Matrix>> {
        let PerBranch { audio, video, fused } = &mut self.classifiers;
        #[cfg(feature = "parallel")]
        let (pa, (pv, pf)) = rayon::join(
            || audio.predict_probs(&expanded.audio),
            || {
                rayon::join(
                    || video.predict_probs(&expanded.video),
                    || fused.predict_probs(&expanded.fused),
                )
            },
        );
        #[cfg(not(feature = "parallel"))]
        let (pa, (pv, pf)) = (
            audio.predict_probs(&expanded.audio),
            (
                video.predict_probs(&expanded.video),
                fused.predict_probs(&expanded.fused),
            ),
        );
        Ok(PerBranch::new(pa?, pv?, pf?))
    }

    fn evaluate(&mut self, audio: &Matrix, video: &Matrix) -> Result<BatchEval> {
        if audio.rows() == 0 {
            return Err(Error::EmptyBatch);
        }
        if audio.rows() != video.rows() {
            return Err(Error::dim(
                "batch",
                (audio.rows(), video.cols()),
                video.shape(),
            ));
        }
        let expanded = self.expand_all(audio, video)?;
        let probs = self.predict_all(&expanded)?;

        let mut events = Vec::with_capacity(audio.rows());
        for i in 0..audio.rows() {
            let rows: Vec<(Branch, &[f64])> = Branch::ALL
                .iter()
                .map(|&b| (b, probs.get(b).row(i)))
                .collect();
            let election = elect_leader(&rows)?;
            let leader_row = probs.get(election.leader).row(i);
            let prediction = argmax(leader_row);
            let soft_label = build_soft_label(leader_row, self.top_n)?;
            let maps = PerBranch::new(
                election.maps[0].1,
                election.maps[1].1,
                election.maps[2].1,
            );
            let gates = PerBranch::new(
                gate_decision(
                    Branch::Audio,
                    election.leader_map,
                    maps.audio,
                    self.thresholds.theta(Branch::Audio),
                ),
                gate_decision(
                    Branch::Video,
                    election.leader_map,
                    maps.video,
                    self.thresholds.theta(Branch::Video),
                ),
                gate_decision(
                    Branch::Fused,
                    election.leader_map,
                    maps.fused,
                    self.thresholds.theta(Branch::Fused),
                ),
            );
            events.push(AdaptationEvent {
                sample_index: i,
                per_ac_prediction: probs.map(|m| argmax(m.row(i))),
                maps,
                leader: election.leader,
                prediction,
                soft_label,
                gates,
            });
        }
        Ok(BatchEval { expanded, events })
    }

    /// Score a batch without touching any state; repeated calls agree.
    pub fn infer_only(&mut self, audio: &Matrix, video: &Matrix) -> Result<Vec<AdaptationEvent>> {
        Ok(self.evaluate(audio, video)?.events)
    }

    /// The full loop: score, elect, gate, then flush each classifier's
    /// accepted subset and (when enabled) drift the thresholds with the
    /// batch-mean gaps. Predictions in the returned events were computed
    /// before any update.
    pub fn infer_and_adapt(
        &mut self,
        audio: &Matrix,
        video: &Matrix,
    ) -> Result<Vec<AdaptationEvent>> {
        let BatchEval { expanded, events } = self.evaluate(audio, video)?;

        let mut accepted: PerBranch<(Matrix, Matrix)> = PerBranch::new(
            self.accepted_subset(Branch::Audio, &expanded, &events),
            self.accepted_subset(Branch::Video, &expanded, &events),
            self.accepted_subset(Branch::Fused, &expanded, &events),
        );
        self.flush(&mut accepted)?;

        if self.dynamic {
            for branch in Branch::ALL {
                let gaps: Vec<f64> = events
                    .iter()
                    .map(|e| {
                        let g = e.gates.get(branch);
                        g.leader_map - g.ac_map
                    })
                    .collect();
                self.thresholds.update(branch, &gaps)?;
            }
        }
        Ok(events)
    }

    /// Ablation baseline that bypasses the fusion mechanism entirely: every
    /// classifier self-trains on its own hard argmax for every sample.
    /// Exists to demonstrate what the gate prevents.
    pub fn infer_and_adapt_ungated(
        &mut self,
        audio: &Matrix,
        video: &Matrix,
    ) -> Result<Vec<AdaptationEvent>> {
        let BatchEval { expanded, events } = self.evaluate(audio, video)?;
        let classes = self.num_classes();
        let mut accepted = PerBranch::new(
            (expanded.audio.clone(), Matrix::zeros(events.len(), classes)),
            (expanded.video.clone(), Matrix::zeros(events.len(), classes)),
            (expanded.fused.clone(), Matrix::zeros(events.len(), classes)),
        );
        for branch in Branch::ALL {
            let (_, labels) = accepted.get_mut(branch);
            for (i, e) in events.iter().enumerate() {
                labels[(i, *e.per_ac_prediction.get(branch))] = 1.0;
            }
        }
        self.flush(&mut accepted)?;
        Ok(events)
    }

    fn accepted_subset(
        &self,
        branch: Branch,
        expanded: &PerBranch<Matrix>,
        events: &[AdaptationEvent],
    ) -> (Matrix, Matrix) {
        let phi = self.expansions.get(branch).expanded_dim();
        let classes = self.num_classes();
        let rows: Vec<usize> = events
            .iter()
            .enumerate()
            .filter(|(_, e)| e.gates.get(branch).accepted)
            .map(|(i, _)| i)
            .collect();
        let mut x = Matrix::zeros(rows.len(), phi);
        let mut y = Matrix::zeros(rows.len(), classes);
        for (out_row, &i) in rows.iter().enumerate() {
            x.row_mut(out_row)
                .copy_from_slice(expanded.get(branch).row(i));
            y.row_mut(out_row)
                .copy_from_slice(&events[i].soft_label.densify());
        }
        (x, y)
    }

    /// Per-branch bank updates; independent classifiers, flushed
    /// concurrently when the parallel feature is on.
    fn flush(&mut self, accepted: &mut PerBranch<(Matrix, Matrix)>) -> Result<()> {
        let PerBranch { audio, video, fused } = &mut self.classifiers;
        #[cfg(feature = "parallel")]
        let (ra, (rv, rf)) = rayon::join(
            || audio.adapt(&accepted.audio.0, &accepted.audio.1),
            || {
                rayon::join(
                    || video.adapt(&accepted.video.0, &accepted.video.1),
                    || fused.adapt(&accepted.fused.0, &accepted.fused.1),
                )
            },
        );
        #[cfg(not(feature = "parallel"))]
        let (ra, (rv, rf)) = (
            audio.adapt(&accepted.audio.0, &accepted.audio.1),
            (
                video.adapt(&accepted.video.0, &accepted.video.1),
                fused.adapt(&accepted.fused.0, &accepted.fused.1),
            ),
        );
        ra?;
        rv?;
        rf?;
        Ok(())
    }

    /// Serialize to the `MDAM` blob: per branch its id, expansion spec, and
    /// bank, then the fusion config (per-branch θ, θ_ini, λ, n, dynamic).
    pub fn snapshot(&self) -> Vec<u8> {
        let mut w = wire::Writer::new();
        w.magic(SNAPSHOT_MAGIC);
        w.u16(SNAPSHOT_VERSION);
        w.u8(3);
        for branch in Branch::ALL {
            let spec = self.expansions.get(branch).spec();
            w.u8(branch.code());
            w.u32(spec.input_dim as u32);
            w.u32(spec.expanded_dim as u32);
            w.u64(spec.seed);
            w.u8(spec.nonlinearity.code());
            w.f64(spec.scale);
            self.classifiers.get(branch).bank().write(&mut w);
        }
        for branch in Branch::ALL {
            w.f64(self.thresholds.theta(branch));
        }
        w.f64(self.thresholds.theta_ini());
        w.f64(self.thresholds.lambda());
        w.u32(self.top_n as u32);
        w.u8(self.dynamic as u8);
        w.into_bytes()
    }

    /// Rebuild a model from a snapshot. Projections regenerate bit-identical
    /// from their specs; weights recompute from the banks on first use.
    pub fn restore(bytes: &[u8]) -> Result<MdaaModel> {
        let mut r = wire::Reader::new(bytes, "model snapshot");
        r.magic(SNAPSHOT_MAGIC)?;
        r.expect_version(SNAPSHOT_VERSION)?;
        let count = r.u8()?;
        if count != 3 {
            return Err(Error::CorruptSnapshot(format!(
                "expected 3 branches, found {count}"
            )));
        }
        let mut expansions: Vec<Expansion> = Vec::with_capacity(3);
        let mut classifiers: Vec<AnalyticClassifier> = Vec::with_capacity(3);
        for expected in Branch::ALL {
            let code = r.u8()?;
            let branch = Branch::from_code(code).ok_or_else(|| {
                Error::CorruptSnapshot(format!("unknown branch code {code}"))
            })?;
            if branch != expected {
                return Err(Error::CorruptSnapshot(format!(
                    "branch order: found {branch}, expected {expected}"
                )));
            }
            let input_dim = r.u32()? as usize;
            let expanded_dim = r.u32()? as usize;
            let seed = r.u64()?;
            let nl = r.u8()?;
            let nonlinearity = Nonlinearity::from_code(nl).ok_or_else(|| {
                Error::CorruptSnapshot(format!("unknown nonlinearity code {nl}"))
            })?;
            let scale = r.f64()?;
            let spec = ExpansionSpec {
                input_dim,
                expanded_dim,
                seed,
                nonlinearity,
                scale,
            };
            let bank = MemoryBank::read(&mut r)?;
            expansions.push(build_expansion(spec)?);
            classifiers.push(AnalyticClassifier::from_bank(branch, bank));
        }
        let thetas = [r.f64()?, r.f64()?, r.f64()?];
        let theta_ini = r.f64()?;
        let lambda = r.f64()?;
        let top_n = r.u32()? as usize;
        let dynamic = r.u8()? != 0;
        r.finish()?;

        let fused_e = expansions.pop().unwrap();
        let video_e = expansions.pop().unwrap();
        let audio_e = expansions.pop().unwrap();
        let fused_c = classifiers.pop().unwrap();
        let video_c = classifiers.pop().unwrap();
        let audio_c = classifiers.pop().unwrap();
        MdaaModel::from_parts(
            PerBranch::new(audio_e, video_e, fused_e),
            PerBranch::new(audio_c, video_c, fused_c),
            ThresholdState::with_thetas(theta_ini, lambda, thetas),
            top_n,
            dynamic,
        )
        .map_err(|e| Error::CorruptSnapshot(format!("inconsistent snapshot: {e}")))
    }
}
