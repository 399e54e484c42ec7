//! Two-stream inference, score fusion and inter-rater agreement.

use crate::codec::EncodedVideo;
use crate::error::{Error, Result};
use crate::nn::{forward, softmax, Network};
use crate::pipeline::{
    prepare_spatial_test_inputs, prepare_temporal_center_input, prepare_temporal_test_inputs,
    SpatialInputConfig, TemporalInputConfig,
};
use crate::video::Frame;
use serde::Serialize;
use std::io::Write;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Rater {
    Temporal,
    Spatial,
    Fused,
    GroundTruth,
}

impl Rater {
    pub fn name(&self) -> &'static str {
        match self {
            Rater::Temporal => "temporal",
            Rater::Spatial => "spatial",
            Rater::Fused => "fused",
            Rater::GroundTruth => "ground-truth",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassScores {
    pub video_id: String,
    pub rater: Rater,
    pub scores: Vec<f64>,
    /// How many network inputs produced these scores.
    pub inputs_used: usize,
}

impl ClassScores {
    /// Argmax with lowest-class-index tie-break.
    pub fn predicted(&self) -> usize {
        let mut best = 0;
        for (i, &s) in self.scores.iter().enumerate().skip(1) {
            if s > self.scores[best] {
                best = i;
            }
        }
        best
    }
}

/// Elementwise max over per-input softmax score vectors.
pub fn max_combine(per_input: &[Vec<f64>]) -> Vec<f64> {
    let mut out = per_input[0].clone();
    for scores in &per_input[1..] {
        for (o, &s) in out.iter_mut().zip(scores) {
            *o = o.max(s);
        }
    }
    out
}

/// Temporal-stream prediction over the 12-crop test protocol, or a single
/// center crop when `fast`.
pub fn predict_temporal(
    net: &Network,
    bitstream: &EncodedVideo,
    cfg: &TemporalInputConfig,
    video_id: &str,
    fast: bool,
) -> Result<ClassScores> {
    let inputs = if fast {
        vec![prepare_temporal_center_input(bitstream, cfg)?]
    } else {
        prepare_temporal_test_inputs(bitstream, cfg)?
    };
    let per_input: Vec<Vec<f64>> =
        inputs.iter().map(|x| forward(net, x).map(|l| softmax(&l))).collect::<Result<_>>()?;
    Ok(ClassScores {
        video_id: video_id.to_string(),
        rater: Rater::Temporal,
        scores: max_combine(&per_input),
        inputs_used: inputs.len(),
    })
}

/// Spatial-stream prediction over 5 frames x 2 crops.
pub fn predict_spatial(
    net: &Network,
    frames: &[Frame],
    cfg: &SpatialInputConfig,
    video_id: &str,
) -> Result<ClassScores> {
    let inputs = prepare_spatial_test_inputs(frames, cfg)?;
    let per_input: Vec<Vec<f64>> =
        inputs.iter().map(|x| forward(net, x).map(|l| softmax(&l))).collect::<Result<_>>()?;
    Ok(ClassScores {
        video_id: video_id.to_string(),
        rater: Rater::Spatial,
        scores: max_combine(&per_input),
        inputs_used: inputs.len(),
    })
}

/// Elementwise mean of the two streams' maximum scores.
pub fn fuse(a: &ClassScores, b: &ClassScores) -> Result<ClassScores> {
    if a.scores.len() != b.scores.len() {
        return Err(Error::DimensionMismatch("class counts differ".into()));
    }
    if a.video_id != b.video_id {
        return Err(Error::InvalidInput("fusing scores of different videos".into()));
    }
    Ok(ClassScores {
        video_id: a.video_id.clone(),
        rater: Rater::Fused,
        scores: a.scores.iter().zip(&b.scores).map(|(x, y)| (x + y) / 2.0).collect(),
        inputs_used: a.inputs_used + b.inputs_used,
    })
}

pub fn accuracy(predicted: &[usize], truth: &[usize]) -> Result<f64> {
    if predicted.len() != truth.len() || predicted.is_empty() {
        return Err(Error::DimensionMismatch("label vectors differ or are empty".into()));
    }
    let correct = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(correct as f64 / predicted.len() as f64)
}

fn recalls(predicted: &[usize], truth: &[usize], n_classes: usize) -> Result<Vec<f64>> {
    let mut correct = vec![0usize; n_classes];
    let mut total = vec![0usize; n_classes];
    for (&p, &t) in predicted.iter().zip(truth) {
        if t >= n_classes {
            return Err(Error::OutOfRange { index: t, count: n_classes });
        }
        total[t] += 1;
        if p == t {
            correct[t] += 1;
        }
    }
    total
        .iter()
        .zip(&correct)
        .enumerate()
        .map(|(c, (&n, &k))| {
            if n == 0 {
                Err(Error::InvalidInput(format!("class {c} has no videos")))
            } else {
                Ok(k as f64 / n as f64)
            }
        })
        .collect()
}

/// Per-class recall(a) - recall(b); with a = temporal and b = spatial,
/// positive values mean a temporal bias.
pub fn recall_difference(
    a: &[usize],
    b: &[usize],
    truth: &[usize],
    n_classes: usize,
) -> Result<Vec<f64>> {
    if a.len() != b.len() || a.len() != truth.len() {
        return Err(Error::DimensionMismatch("raters cover different video sets".into()));
    }
    let ra = recalls(a, truth, n_classes)?;
    let rb = recalls(b, truth, n_classes)?;
    Ok(ra.iter().zip(&rb).map(|(x, y)| x - y).collect())
}

/// Kappa from observed and chance agreement. Total marginal concentration
/// (p_e = 1) is defined only in full agreement.
pub fn kappa_from_probs(p_o: f64, p_e: f64) -> Result<f64> {
    if 1.0 - p_e < 1e-12 {
        return if 1.0 - p_o < 1e-12 { Ok(1.0) } else { Err(Error::UndefinedKappa) };
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

pub fn cohens_kappa(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::DimensionMismatch("label vectors differ or are empty".into()));
    }
    let n_classes = a.iter().chain(b).max().unwrap() + 1;
    let n = a.len() as f64;
    let mut ma = vec![0.0f64; n_classes];
    let mut mb = vec![0.0f64; n_classes];
    let mut agree = 0usize;
    for (&x, &y) in a.iter().zip(b) {
        ma[x] += 1.0 / n;
        mb[y] += 1.0 / n;
        if x == y {
            agree += 1;
        }
    }
    let p_o = agree as f64 / n;
    let p_e: f64 = ma.iter().zip(&mb).map(|(x, y)| x * y).sum();
    kappa_from_probs(p_o, p_e)
}

/// All pairwise kappas; diagonal exactly 1.
pub fn kappa_matrix(raters: &[Vec<usize>]) -> Result<Vec<Vec<f64>>> {
    let n = raters.len();
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        out[i][i] = 1.0;
        for j in i + 1..n {
            let k = cohens_kappa(&raters[i], &raters[j])?;
            out[i][j] = k;
            out[j][i] = k;
        }
    }
    Ok(out)
}

/// Predictions CSV: (video_id, rater, predicted, truth, score_0..score_{C-1}).
pub fn write_predictions_csv<W: Write>(
    rows: &[(ClassScores, usize)],
    w: &mut W,
) -> Result<()> {
    let c = rows.first().map_or(0, |(s, _)| s.scores.len());
    let score_cols: Vec<String> = (0..c).map(|i| format!("score_{i}")).collect();
    writeln!(w, "video_id,rater,predicted,truth,{}", score_cols.join(","))?;
    for (s, truth) in rows {
        let scores: Vec<String> = s.scores.iter().map(|v| format!("{v:.6}")).collect();
        writeln!(
            w,
            "{},{},{},{},{}",
            s.video_id,
            s.rater.name(),
            s.predicted(),
            truth,
            scores.join(",")
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{encode, CodecConfig};
    use crate::datagen::{generate, MotionKind, SyntheticSpec, TextureKind};
    use crate::nn::{LayerSpec, NetworkConfig, Padding};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scores(v: &[f64]) -> ClassScores {
        ClassScores {
            video_id: "v".into(),
            rater: Rater::Temporal,
            scores: v.to_vec(),
            inputs_used: 1,
        }
    }

    #[test]
    fn max_combine_is_elementwise() {
        let combined = max_combine(&[
            vec![0.1, 0.7, 0.2],
            vec![0.5, 0.1, 0.4],
            vec![0.2, 0.2, 0.6],
        ]);
        assert_eq!(combined, vec![0.5, 0.7, 0.6]);
    }

    #[test]
    fn fuse_mean_idempotence_and_tiebreak() {
        let x = scores(&[0.8, 0.1]);
        let same = fuse(&x, &x).unwrap();
        assert_eq!(same.scores, x.scores);
        assert_eq!(same.rater, Rater::Fused);

        let f = fuse(&scores(&[1.0, 0.0]), &scores(&[0.0, 1.0])).unwrap();
        assert_eq!(f.scores, vec![0.5, 0.5]);
        assert_eq!(f.predicted(), 0);

        let a = scores(&[0.2, 0.9, 0.4]);
        let b = scores(&[0.6, 0.1, 0.8]);
        let ab = fuse(&a, &b).unwrap();
        let ba = fuse(&b, &a).unwrap();
        assert_eq!(ab.scores, vec![0.4, 0.5, 0.6000000000000001]);
        assert_eq!(ab.scores, ba.scores);
        assert_eq!(ab.predicted(), 2);

        assert!(fuse(&scores(&[1.0]), &scores(&[0.5, 0.5])).is_err());
    }

    #[test]
    fn fused_argmax_is_scale_invariant() {
        let a = scores(&[0.2, 0.9, 0.4]);
        let b = scores(&[0.6, 0.1, 0.8]);
        let base = fuse(&a, &b).unwrap().predicted();
        let a2 = scores(&[0.2 * 3.0, 0.9 * 3.0, 0.4 * 3.0]);
        let b2 = scores(&[0.6 * 3.0, 0.1 * 3.0, 0.8 * 3.0]);
        assert_eq!(fuse(&a2, &b2).unwrap().predicted(), base);
    }

    #[test]
    fn accuracy_and_recall_difference() {
        let truth = vec![0, 0, 1, 1];
        assert_eq!(accuracy(&truth, &truth).unwrap(), 1.0);
        assert_eq!(recall_difference(&truth, &truth, &truth, 2).unwrap(), vec![0.0, 0.0]);
        // Rater a perfect, rater b misses every class-0 video: temporal
        // bias shows as +1 on class 0.
        let b = vec![1, 1, 1, 1];
        assert_eq!(recall_difference(&truth, &b, &truth, 2).unwrap(), vec![1.0, 0.0]);
        assert!(recall_difference(&truth, &b, &truth, 3).is_err());
    }

    #[test]
    fn recall_difference_on_chance_rater_is_half() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let truth: Vec<usize> = (0..200).map(|i| i % 2).collect();
        let chance: Vec<usize> = (0..200).map(|_| rng.gen_range(0..2)).collect();
        let d = recall_difference(&truth, &chance, &truth, 2).unwrap();
        for v in d {
            assert!((v - 0.5).abs() < 0.1, "recall diff {v}");
        }
    }

    #[test]
    fn kappa_unit_suite() {
        // Identical raters over mixed classes.
        let a = vec![0, 1, 2, 0, 1, 2];
        assert_eq!(cohens_kappa(&a, &a).unwrap(), 1.0);

        // Independent raters matching marginals: p_o = p_e = 0.5.
        let x = vec![0, 0, 1, 1];
        let y = vec![0, 1, 0, 1];
        assert_eq!(cohens_kappa(&x, &y).unwrap(), 0.0);

        // Hand table [[20, 5], [10, 15]] over 50 videos.
        let mut ra = Vec::new();
        let mut rb = Vec::new();
        for (aa, bb, n) in [(0, 0, 20), (0, 1, 5), (1, 0, 10), (1, 1, 15)] {
            for _ in 0..n {
                ra.push(aa);
                rb.push(bb);
            }
        }
        let k = cohens_kappa(&ra, &rb).unwrap();
        assert!((k - 0.4).abs() < 1e-12, "kappa {k}");

        // Constant identical raters: p_e = 1 with full agreement.
        assert_eq!(cohens_kappa(&[0, 0, 0], &[0, 0, 0]).unwrap(), 1.0);
        // Concentrated marginals without agreement are undefined.
        assert!(matches!(kappa_from_probs(0.9, 1.0), Err(Error::UndefinedKappa)));
    }

    #[test]
    fn kappa_matrix_symmetry_and_diagonal() {
        let raters = vec![vec![0, 1, 0, 1], vec![0, 1, 1, 1], vec![1, 0, 0, 1]];
        let m = kappa_matrix(&raters).unwrap();
        for i in 0..3 {
            assert_eq!(m[i][i], 1.0);
            for j in 0..3 {
                assert_eq!(m[i][j], m[j][i]);
            }
        }
        let same = kappa_matrix(&vec![vec![0, 1], vec![0, 1], vec![0, 1]]).unwrap();
        assert!(same.iter().flatten().all(|&v| v == 1.0));
    }

    fn tiny_stream() -> EncodedVideo {
        // 128x128 video: 16x16 partition grid; with N_T = 16 every test crop
        // coincides, so all 12 inputs are identical.
        let spec = SyntheticSpec {
            class_id: 0,
            texture: TextureKind::Checker,
            motion: MotionKind::Translate,
            velocity: (2.0, 0.0),
            period: 8,
            object_fraction: 0.5,
            num_frames: 6,
            width: 128,
            height: 128,
            seed: 23,
        };
        let (video, _) = generate(&spec).unwrap();
        encode(&video, &CodecConfig::default()).unwrap()
    }

    fn tiny_temporal_net(n_t: usize, t: usize, classes: usize) -> Network {
        let config = NetworkConfig {
            input_shape: vec![n_t, n_t, 2, t],
            layers: vec![
                LayerSpec::Conv3D {
                    filter: (3, 3, 3),
                    stride: (2, 2, 2),
                    depth: 2,
                    padding: Padding::Same,
                },
                LayerSpec::PReLU,
                LayerSpec::FullyConnected { out: classes },
            ],
            n_classes: classes,
            weight_decay: 0.0,
        };
        Network::build(config, &mut ChaCha8Rng::seed_from_u64(77)).unwrap()
    }

    #[test]
    fn degenerate_crops_make_fast_path_exact() {
        let enc = tiny_stream();
        let cfg = crate::pipeline::TemporalInputConfig { n_t: 16, t: 4, crop_scales: vec![1.0], flow_scale: 1.0 };
        let net = tiny_temporal_net(16, 4, 3);
        let full = predict_temporal(&net, &enc, &cfg, "v0", false).unwrap();
        let fast = predict_temporal(&net, &enc, &cfg, "v0", true).unwrap();
        assert_eq!(full.inputs_used, 12);
        assert_eq!(fast.inputs_used, 1);
        // All crops coincide spatially; the flipped crop may differ, but the
        // center crop participates in the max, so fast <= full elementwise
        // and the unflipped scores agree.
        for (f, s) in full.scores.iter().zip(&fast.scores) {
            assert!(f >= s);
        }
    }

    #[test]
    fn spatial_prediction_uses_ten_inputs() {
        let spec = SyntheticSpec {
            class_id: 0,
            texture: TextureKind::Stripes,
            motion: MotionKind::Static,
            velocity: (0.0, 0.0),
            period: 8,
            object_fraction: 1.0,
            num_frames: 2,
            width: 64,
            height: 48,
            seed: 2,
        };
        let (video, _) = generate(&spec).unwrap();
        let cfg = SpatialInputConfig { resize_short_side: 48, n_s: 32, ..Default::default() };
        let config = NetworkConfig {
            input_shape: vec![32, 32, 3],
            layers: vec![
                LayerSpec::MaxPool2D { window: (16, 16), stride: (16, 16) },
                LayerSpec::FullyConnected { out: 2 },
            ],
            n_classes: 2,
            weight_decay: 0.0,
        };
        let net = Network::build(config, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let p = predict_spatial(&net, &video.frames, &cfg, "v1").unwrap();
        assert_eq!(p.inputs_used, 10);
        assert_eq!(p.scores.len(), 2);
        assert!((p.scores.iter().sum::<f64>()).is_finite());
    }

    #[test]
    fn predictions_csv_layout() {
        let rows = vec![(scores(&[0.7, 0.3]), 0usize), (scores(&[0.2, 0.8]), 1)];
        let mut buf = Vec::new();
        write_predictions_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("video_id,rater,predicted,truth,score_0,score_1\n"));
        assert!(text.contains("v,temporal,0,0,0.700000,0.300000"));
    }
}
