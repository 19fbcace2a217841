//! Alignment and discernibility diagnostics: mean cosine between matched
//! scenes across modalities, and between mismatched scenes within RGB.

use crate::error::{Error, Result};
use crate::numerics::{dot, l2_normalize_rows, RngStream, Tensor2};
use serde::Serialize;

/// Mean cosine similarities over a dataset. The cross-modal entries use
/// matched scenes; `cross_scene_rgb` pairs each RGB feature with a
/// different scene's RGB feature (lower means more discernible).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticReport {
    pub rgb_depth: f64,
    pub rgb_seg: f64,
    pub depth_seg: f64,
    pub cross_scene_rgb: f64,
}

impl DiagnosticReport {
    pub fn to_text(&self) -> String {
        format!(
            "{:<18} {:>7.3}\n{:<18} {:>7.3}\n{:<18} {:>7.3}\n{:<18} {:>7.3}\n",
            "<R,D>", self.rgb_depth, "<R,S>", self.rgb_seg, "<D,S>", self.depth_seg, "<R1,R2>",
            self.cross_scene_rgb
        )
    }

    /// Mean of the three matched-scene cross-modal similarities.
    pub fn mean_cross_modal(&self) -> f64 {
        (self.rgb_depth + self.rgb_seg + self.depth_seg) / 3.0
    }
}

/// Seeded random derangement: a permutation with no fixed point, found by
/// rejection sampling over seeded shuffles.
pub fn seeded_derangement(n: usize, seed: u64) -> Result<Vec<usize>> {
    if n < 2 {
        return Err(Error::TooFewScenes { got: n });
    }
    let mut rng = RngStream::derived(seed, &[0xDE7A_0001]);
    loop {
        let perm = rng.sample_distinct(n, n);
        if perm.iter().enumerate().all(|(i, &p)| i != p) {
            return Ok(perm);
        }
    }
}

fn matched_mean(a: &Tensor2, b: &Tensor2) -> f64 {
    let n = a.rows();
    let mut sum = 0.0;
    for i in 0..n {
        sum += dot(a.row(i), b.row(i));
    }
    sum / n as f64
}

/// Compute the four diagnostic means. Features are one row per scene,
/// `[rgb, depth, seg]` order; rows are normalized internally.
pub fn diagnostics(
    features: &[Tensor2; 3],
    pairing_seed: u64,
) -> Result<DiagnosticReport> {
    let n = features[0].rows();
    if n < 2 {
        return Err(Error::TooFewScenes { got: n });
    }
    if features.iter().any(|f| f.rows() != n) {
        return Err(Error::ShapeMismatch {
            context: "modalities disagree on scene count".into(),
        });
    }
    let rgb = l2_normalize_rows(&features[0])?;
    let depth = l2_normalize_rows(&features[1])?;
    let seg = l2_normalize_rows(&features[2])?;

    let derangement = seeded_derangement(n, pairing_seed)?;
    let mut cross = 0.0;
    for (i, &j) in derangement.iter().enumerate() {
        cross += dot(rgb.row(i), rgb.row(j));
    }

    Ok(DiagnosticReport {
        rgb_depth: matched_mean(&rgb, &depth),
        rgb_seg: matched_mean(&rgb, &seg),
        depth_seg: matched_mean(&depth, &seg),
        cross_scene_rgb: cross / n as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::seeded_rng;

    #[test]
    fn identical_features_give_all_ones() {
        // Degenerate case: the same feature for every scene and modality.
        let mut rng = seeded_rng(1);
        let row: Vec<f64> = (0..3).map(|_| rng.next_range(-1.0, 1.0)).collect();
        let f = Tensor2::from_rows(&[row.clone(), row.clone(), row.clone(), row]).unwrap();
        let report = diagnostics(&[f.clone(), f.clone(), f], 7).unwrap();
        assert!((report.rgb_depth - 1.0).abs() < 1e-9);
        assert!((report.rgb_seg - 1.0).abs() < 1e-9);
        assert!((report.depth_seg - 1.0).abs() < 1e-9);
        assert!((report.cross_scene_rgb - 1.0).abs() < 1e-9);
    }

    #[test]
    fn orthogonal_scenes_with_matched_modalities() {
        let eye = Tensor2::from_vec(
            3,
            3,
            vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
        )
        .unwrap();
        let report = diagnostics(&[eye.clone(), eye.clone(), eye], 11).unwrap();
        assert!((report.rgb_depth - 1.0).abs() < 1e-12);
        assert!(report.cross_scene_rgb.abs() < 1e-12);
    }

    #[test]
    fn derangements_have_no_fixed_points_and_are_seeded() {
        for seed in 0..50 {
            let d = seeded_derangement(8, seed).unwrap();
            assert!(d.iter().enumerate().all(|(i, &p)| i != p), "seed {seed}");
            assert_eq!(d, seeded_derangement(8, seed).unwrap());
        }
        assert!(matches!(
            seeded_derangement(1, 0),
            Err(Error::TooFewScenes { .. })
        ));
    }

    #[test]
    fn values_stay_in_cosine_range() {
        let mut rng = seeded_rng(5);
        let mk = |rng: &mut crate::numerics::RngStream| {
            Tensor2::from_vec(6, 4, (0..24).map(|_| rng.next_range(-1.0, 1.0)).collect()).unwrap()
        };
        let report = diagnostics(&[mk(&mut rng), mk(&mut rng), mk(&mut rng)], 3).unwrap();
        for v in [
            report.rgb_depth,
            report.rgb_seg,
            report.depth_seg,
            report.cross_scene_rgb,
        ] {
            assert!((-1.0..=1.0).contains(&v));
        }
    }
}
