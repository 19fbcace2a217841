use super::*;
use crate::model::{init_stack, ModelConfig};
use crate::numerics::{dot, l2_normalize_rows, seeded_rng, Tensor2};
use crate::objective::backward::SceneFeatures;
use proptest::prelude::*;

fn unit_rows(seed: u64, n: usize, d: usize) -> Tensor2 {
    let mut rng = seeded_rng(seed);
    let raw = Tensor2::from_vec(n, d, (0..n * d).map(|_| rng.next_range(-1.0, 1.0)).collect())
        .unwrap();
    l2_normalize_rows(&raw).unwrap()
}

#[test]
fn info_nce_all_equal_rows_is_ln_n() {
    // Every row identical: the softmax is uniform, loss = ln N.
    let row = vec![0.6, 0.8];
    let h = Tensor2::from_rows(&[row.clone(), row]).unwrap();
    let loss = info_nce(&h, &h, 1.0).unwrap();
    assert!((loss - 2.0f64.ln()).abs() < 1e-9, "loss {loss}");
}

#[test]
fn info_nce_identity_rows_closed_form() {
    let eye = Tensor2::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    let loss = info_nce(&eye, &eye, 1.0).unwrap();
    let expect = (1.0 + (-1.0f64).exp()).ln();
    assert!((loss - expect).abs() < 1e-9, "loss {loss} vs {expect}");
}

#[test]
fn info_nce_vanishes_as_tau_shrinks_for_matched_pairs() {
    let eye = Tensor2::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    let taus = [1.0, 0.5, 0.1, 1e-3];
    let losses: Vec<f64> = taus
        .iter()
        .map(|&t| info_nce(&eye, &eye, t).unwrap())
        .collect();
    for w in losses.windows(2) {
        assert!(w[1] < w[0], "not monotone: {losses:?}");
    }
    assert!(losses[3] < 1e-12, "limit {}", losses[3]);
}

#[test]
fn info_nce_upper_bound_and_equality_case() {
    let h1 = unit_rows(3, 5, 4);
    let h2 = unit_rows(4, 5, 4);
    let tau = 0.5;
    let loss = info_nce(&h1, &h2, tau).unwrap();
    let sims = h1.matmul_nt(&h2).unwrap();
    let smax = sims.data().iter().cloned().fold(f64::MIN, f64::max);
    let smin = sims.data().iter().cloned().fold(f64::MAX, f64::min);
    let bound = (5.0f64).ln() + (smax - smin) / tau;
    assert!(loss <= bound + 1e-12, "{loss} > {bound}");
}

#[test]
fn info_nce_rejects_small_batches_and_bad_tau() {
    let h = unit_rows(1, 1, 4);
    assert!(matches!(
        info_nce(&h, &h, 1.0),
        Err(Error::BatchTooSmall { got: 1 })
    ));
    let h = unit_rows(1, 3, 4);
    assert!(matches!(
        info_nce(&h, &h, 0.0),
        Err(Error::TauOutOfRange { .. })
    ));
    assert!(matches!(
        info_nce(&h, &h, 101.0),
        Err(Error::TauOutOfRange { .. })
    ));
}

#[test]
fn symmetric_info_nce_is_swap_invariant() {
    let h1 = unit_rows(5, 4, 3);
    let h2 = unit_rows(6, 4, 3);
    let ab = symmetric_info_nce(&h1, &h2, 0.3).unwrap();
    let ba = symmetric_info_nce(&h2, &h1, 0.3).unwrap();
    assert_eq!(ab, ba);
    let same = symmetric_info_nce(&h1, &h1, 0.3).unwrap();
    assert!((same - info_nce(&h1, &h1, 0.3).unwrap()).abs() < 1e-15);
}

#[test]
fn symmetric_info_nce_matches_two_direction_average() {
    let h1 = unit_rows(7, 3, 2);
    let h2 = unit_rows(8, 3, 2);
    let expect = (info_nce(&h1, &h2, 0.7).unwrap() + info_nce(&h2, &h1, 0.7).unwrap()) / 2.0;
    assert!((symmetric_info_nce(&h1, &h2, 0.7).unwrap() - expect).abs() < 1e-12);
}

#[test]
fn align_loss_reduces_to_ln_n_for_identical_uniform_batches() {
    let row = vec![0.6, 0.8, 0.0];
    let h = Tensor2::from_rows(&[row.clone(), row.clone(), row]).unwrap();
    let loss = align_loss(&h, &h, &h, 1.0).unwrap();
    assert!((loss - 3.0f64.ln()).abs() < 1e-9);
}

#[test]
fn align_loss_is_invariant_under_modality_permutation() {
    let r = unit_rows(10, 4, 3);
    let s = unit_rows(11, 4, 3);
    let d = unit_rows(12, 4, 3);
    let base = align_loss(&r, &s, &d, 0.4).unwrap();
    for (a, b, c) in [
        (&s, &d, &r),
        (&d, &r, &s),
        (&r, &d, &s),
        (&s, &r, &d),
        (&d, &s, &r),
    ] {
        let permuted = align_loss(a, b, c, 0.4).unwrap();
        assert!((permuted - base).abs() < 1e-12);
    }
}

#[test]
fn align_loss_matches_three_term_average() {
    let r = unit_rows(13, 4, 3);
    let s = unit_rows(14, 4, 3);
    let d = unit_rows(15, 4, 3);
    let tau = 0.9;
    let expect = (symmetric_info_nce(&r, &s, tau).unwrap()
        + symmetric_info_nce(&s, &d, tau).unwrap()
        + symmetric_info_nce(&d, &r, tau).unwrap())
        / 3.0;
    assert!((align_loss(&r, &s, &d, tau).unwrap() - expect).abs() < 1e-12);
}

#[test]
fn align_loss_is_rotation_invariant() {
    let r = unit_rows(16, 5, 6);
    let s = unit_rows(17, 5, 6);
    let d = unit_rows(18, 5, 6);
    let base = align_loss(&r, &s, &d, 0.2).unwrap();

    // Random orthogonal matrix from a product of Givens rotations.
    let dim = 6;
    let mut rot = Tensor2::zeros(dim, dim);
    for i in 0..dim {
        rot.set(i, i, 1.0);
    }
    let mut rng = seeded_rng(99);
    for _ in 0..24 {
        let i = rng.next_below(dim);
        let mut j = rng.next_below(dim);
        if i == j {
            j = (j + 1) % dim;
        }
        let theta = rng.next_range(-3.0, 3.0);
        let (c, sn) = (theta.cos(), theta.sin());
        for k in 0..dim {
            let a = rot.get(k, i);
            let b = rot.get(k, j);
            rot.set(k, i, c * a - sn * b);
            rot.set(k, j, sn * a + c * b);
        }
    }
    let rotated = align_loss(
        &r.matmul(&rot).unwrap(),
        &s.matmul(&rot).unwrap(),
        &d.matmul(&rot).unwrap(),
        0.2,
    )
    .unwrap();
    assert!((rotated - base).abs() < 1e-9, "{rotated} vs {base}");
}

#[test]
fn anchor_loss_exact_values() {
    let e1 = Tensor2::from_vec(1, 2, vec![1.0, 0.0]).unwrap();
    let e2 = Tensor2::from_vec(1, 2, vec![0.0, 1.0]).unwrap();
    let neg = Tensor2::from_vec(1, 2, vec![-1.0, 0.0]).unwrap();
    assert_eq!(anchor_loss(&e1, &e1).unwrap(), 0.0);
    assert_eq!(anchor_loss(&e1, &e2).unwrap(), 1.0);
    assert_eq!(anchor_loss(&e1, &neg).unwrap(), 2.0);
    assert!(anchor_loss(&e1, &Tensor2::zeros(2, 2)).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn anchor_loss_stays_in_range(seed in 0u64..1000) {
        let hs = unit_rows(seed, 4, 5);
        let ht = unit_rows(seed.wrapping_add(7919), 4, 5);
        let v = anchor_loss(&hs, &ht).unwrap();
        prop_assert!((0.0..=2.0 + 1e-9).contains(&v));
    }
}

#[test]
fn dense_index_sampling_contracts() {
    let mut rng = seeded_rng(1);
    let exhaustive = sample_dense_indices(&mut rng, 10, 10).unwrap();
    let mut sorted = exhaustive.clone();
    sorted.sort_unstable();
    assert_eq!(sorted, (0..10).collect::<Vec<_>>());

    let idx = sample_dense_indices(&mut rng, 64, 16).unwrap();
    let mut dedup = idx.clone();
    dedup.sort_unstable();
    dedup.dedup();
    assert_eq!(dedup.len(), 16);

    assert!(matches!(
        sample_dense_indices(&mut rng, 4, 5),
        Err(Error::TooFewTokens { .. })
    ));
}

#[test]
fn dense_index_sampling_is_uniform() {
    let mut rng = seeded_rng(33);
    let trials = 10_000;
    let t = 8;
    let n = 3;
    let mut counts = vec![0usize; t];
    for _ in 0..trials {
        for idx in sample_dense_indices(&mut rng, t, n).unwrap() {
            counts[idx] += 1;
        }
    }
    let p = n as f64 / t as f64;
    let mean = trials as f64 * p;
    let sigma = (trials as f64 * p * (1.0 - p)).sqrt();
    for (i, &c) in counts.iter().enumerate() {
        assert!(
            (c as f64 - mean).abs() <= 3.0 * sigma,
            "index {i}: count {c}, expected {mean} ± {}",
            3.0 * sigma
        );
    }
}

/// Straight-line masked-softmax oracle: literal softmax per anchor with no
/// max shift, selecting rows independently of the library path.
fn oracle_dense_align(dense: &[[&Tensor2; 3]], indices: &[Vec<usize>], tau: f64) -> f64 {
    let b = dense.len();
    let n = indices[0].len();
    let dim = dense[0][0].cols();
    let mut stacked: Vec<Vec<Vec<f64>>> = vec![Vec::new(); 3];
    for m in 0..3 {
        for (scene, idx) in dense.iter().zip(indices) {
            for &i in idx {
                stacked[m].push(scene[m].row(i).to_vec());
            }
        }
    }
    let rows = b * n;
    let _ = dim;
    let pair_loss = |x: usize, y: usize| -> f64 {
        let mut loss = 0.0;
        for i in 0..rows {
            let pos = (dot(&stacked[x][i], &stacked[y][i]) / tau).exp();
            let mut denom = 0.0;
            for j in 0..rows {
                if j == i || j / n != i / n {
                    denom += (dot(&stacked[x][i], &stacked[y][j]) / tau).exp();
                }
            }
            loss += -(pos / denom).ln();
        }
        loss / rows as f64
    };
    let mut total = 0.0;
    for (a, b_) in MODALITY_PAIRS {
        total += (pair_loss(a, b_) + pair_loss(b_, a)) / 2.0;
    }
    total / 3.0
}

#[test]
fn dense_align_single_scene_is_exactly_zero() {
    let rgb = unit_rows(20, 8, 6);
    let depth = unit_rows(21, 8, 6);
    let seg = unit_rows(22, 8, 6);
    let dense = vec![[&rgb, &depth, &seg]];
    let indices = vec![vec![0, 3, 5, 7]];
    assert_eq!(dense_align_loss(&dense, &indices, 0.07).unwrap(), 0.0);
}

#[test]
fn dense_align_matches_brute_force_oracle() {
    let mats: Vec<[Tensor2; 3]> = (0..3)
        .map(|i| {
            [
                unit_rows(100 + i, 8, 8),
                unit_rows(200 + i, 8, 8),
                unit_rows(300 + i, 8, 8),
            ]
        })
        .collect();
    let dense: Vec<[&Tensor2; 3]> = mats.iter().map(|m| [&m[0], &m[1], &m[2]]).collect();
    let mut rng = seeded_rng(9);
    let indices: Vec<Vec<usize>> = (0..3)
        .map(|_| sample_dense_indices(&mut rng, 8, 4).unwrap())
        .collect();
    let got = dense_align_loss(&dense, &indices, 0.5).unwrap();
    let expect = oracle_dense_align(&dense, &indices, 0.5);
    assert!((got - expect).abs() < 1e-10, "{got} vs {expect}");
}

#[test]
fn intra_scene_mask_changes_the_loss() {
    // With >= 2 sampled tokens per scene, masking same-scene negatives
    // must differ from the unmasked softmax.
    let mats: Vec<[Tensor2; 3]> = (0..2)
        .map(|i| {
            [
                unit_rows(400 + i, 6, 5),
                unit_rows(500 + i, 6, 5),
                unit_rows(600 + i, 6, 5),
            ]
        })
        .collect();
    let dense: Vec<[&Tensor2; 3]> = mats.iter().map(|m| [&m[0], &m[1], &m[2]]).collect();
    let indices = vec![vec![0, 1, 2], vec![3, 4, 5]];
    let masked = dense_align_loss(&dense, &indices, 0.3).unwrap();

    let stacked = stack_sampled(&dense, &indices).unwrap();
    let mut unmasked = 0.0;
    for (a, b) in MODALITY_PAIRS {
        unmasked += symmetric_info_nce(&stacked[a], &stacked[b], 0.3).unwrap();
    }
    unmasked /= 3.0;
    assert!((masked - unmasked).abs() > 1e-6, "mask had no effect");
}

// ---- Batch/backward fixtures -------------------------------------------

fn toy_stack(perturb: bool) -> EncoderStackFixture {
    let cfg = ModelConfig {
        patch: 4,
        embed_dim: 8,
        frozen_layers: 2,
        adapter_layers: 2,
        seed: 5,
        adapter_on_top: false,
    };
    let mut stack = init_stack(&cfg).unwrap();
    if perturb {
        let mut rng = seeded_rng(71);
        let mut flat = stack.trainable_parameters();
        for v in &mut flat {
            *v += 0.05 * rng.next_gaussian();
        }
        stack.set_trainable_parameters(&flat).unwrap();
    }
    let mut rng = seeded_rng(81);
    let t = 6;
    let scenes: Vec<SceneFeatures> = (0..2)
        .map(|_| SceneFeatures {
            rgb: random_features(&mut rng, t, 8),
            depth: random_features(&mut rng, t, 8),
            seg: random_features(&mut rng, t, 8),
        })
        .collect();
    let indices: Vec<Vec<usize>> = (0..2)
        .map(|_| sample_dense_indices(&mut rng, t, 3).unwrap())
        .collect();
    EncoderStackFixture {
        stack,
        scenes,
        indices,
    }
}

struct EncoderStackFixture {
    stack: crate::model::EncoderStack,
    scenes: Vec<SceneFeatures>,
    indices: Vec<Vec<usize>>,
}

fn random_features(rng: &mut crate::numerics::RngStream, t: usize, d: usize) -> Tensor2 {
    Tensor2::from_vec(t, d, (0..t * d).map(|_| rng.next_range(-1.0, 1.0)).collect()).unwrap()
}

fn small_cfg() -> LossConfig {
    LossConfig {
        n_dense: 3,
        ..LossConfig::default()
    }
}

#[test]
fn total_loss_decomposition_is_exact() {
    let fx = toy_stack(true);
    let batch = embed_batch(&fx.stack, &fx.scenes, &fx.indices).unwrap();
    let cfg = small_cfg();
    let b = total_loss(&batch, 0.07, &cfg).unwrap();
    assert!((b.total - (b.align + cfg.lambda_anchor * b.anchor)).abs() < 1e-12);
    let wd = cfg.dense_weight;
    assert!((b.align - ((1.0 - wd) * b.pooled_align + wd * b.dense_align)).abs() < 1e-12);

    let zero_lambda = LossConfig {
        lambda_anchor: 0.0,
        ..cfg
    };
    let b0 = total_loss(&batch, 0.07, &zero_lambda).unwrap();
    assert_eq!(b0.total, b0.align);
}

#[test]
fn anchor_terms_are_exactly_zero_at_init() {
    let fx = toy_stack(false);
    let batch = embed_batch(&fx.stack, &fx.scenes, &fx.indices).unwrap();
    let b = total_loss(&batch, 0.07, &small_cfg()).unwrap();
    assert_eq!(b.anchor, 0.0);
    assert_eq!(b.pooled_anchor, 0.0);
    assert_eq!(b.dense_anchor, 0.0);
    assert_eq!(b.total, b.align);
}

#[test]
fn backward_breakdown_matches_forward_path() {
    let fx = toy_stack(true);
    let cfg = small_cfg();
    let (bk, _) = backward(&fx.stack, &fx.scenes, &fx.indices, 0.07, &cfg).unwrap();
    let batch = embed_batch(&fx.stack, &fx.scenes, &fx.indices).unwrap();
    let fw = total_loss(&batch, 0.07, &cfg).unwrap();
    assert!((bk.total - fw.total).abs() < 1e-12);
    assert!((bk.align - fw.align).abs() < 1e-12);
    assert!((bk.anchor - fw.anchor).abs() < 1e-12);
    for p in 0..3 {
        assert!((bk.pooled_pairs[p] - fw.pooled_pairs[p]).abs() < 1e-12);
        assert!((bk.dense_pairs[p] - fw.dense_pairs[p]).abs() < 1e-12);
    }
}

#[test]
fn gradients_match_finite_differences() {
    let fx = toy_stack(true);
    let report = grad_check(
        &fx.stack,
        &fx.scenes,
        &fx.indices,
        0.07,
        &small_cfg(),
        1e-5,
        1e-4,
    )
    .unwrap();
    assert!(
        report.pass,
        "max rel error {} at {:?}",
        report.max_rel_error,
        report.failures()
    );
}

#[test]
fn corrupted_gradient_entry_is_flagged() {
    let fx = toy_stack(true);
    let report = grad_check(
        &fx.stack,
        &fx.scenes,
        &fx.indices,
        0.07,
        &small_cfg(),
        1e-5,
        1e-4,
    )
    .unwrap();
    // Pick an entry with a solidly nonzero gradient and corrupt it by 2x;
    // the relative-error rule must flag it.
    let entry = report
        .entries
        .iter()
        .find(|e| e.analytic.abs() > 1e-3)
        .expect("some gradient is nonzero");
    let corrupted = entry.analytic * 2.0;
    let rel = (corrupted - entry.numeric).abs() / corrupted.abs().max(entry.numeric.abs());
    assert!(rel > 1e-4, "corruption slipped through: rel {rel}");
}

#[test]
fn fd_error_curve_is_convex_in_h() {
    let fx = toy_stack(true);
    let cfg = small_cfg();
    let errs: Vec<f64> = [1e-4, 1e-5, 1e-6]
        .iter()
        .map(|&h| {
            grad_check(&fx.stack, &fx.scenes, &fx.indices, 0.07, &cfg, h, 1e-4)
                .unwrap()
                .max_rel_error
        })
        .collect();
    assert!(
        errs[1] <= errs[0].max(errs[2]) + 1e-12,
        "middle h is the worst: {errs:?}"
    );
}

#[test]
fn anchor_gradient_is_zero_at_init_and_linear_in_lambda() {
    let fx = toy_stack(false);
    let cfg = small_cfg();
    let (_, g0) = backward(&fx.stack, &fx.scenes, &fx.indices, 0.07, &cfg).unwrap();
    let zero_lambda = LossConfig {
        lambda_anchor: 0.0,
        ..cfg.clone()
    };
    let (_, g_align) = backward(&fx.stack, &fx.scenes, &fx.indices, 0.07, &zero_lambda).unwrap();
    // At student == teacher the anchor contributes exactly nothing.
    assert_eq!(g0.data(), g_align.data());

    // Away from init the anchor portion scales linearly with lambda.
    let fx = toy_stack(true);
    let lam1 = LossConfig {
        lambda_anchor: 4.0,
        ..cfg.clone()
    };
    let lam2 = LossConfig {
        lambda_anchor: 8.0,
        ..cfg
    };
    let zero = LossConfig {
        lambda_anchor: 0.0,
        ..lam1.clone()
    };
    let (_, gz) = backward(&fx.stack, &fx.scenes, &fx.indices, 0.07, &zero).unwrap();
    let (_, g1) = backward(&fx.stack, &fx.scenes, &fx.indices, 0.07, &lam1).unwrap();
    let (_, g2) = backward(&fx.stack, &fx.scenes, &fx.indices, 0.07, &lam2).unwrap();
    for i in 0..gz.data().len() {
        let part1 = g1.data()[i] - gz.data()[i];
        let part2 = g2.data()[i] - gz.data()[i];
        assert!(
            (part2 - 2.0 * part1).abs() < 1e-9,
            "slot {i}: {part2} vs {}",
            2.0 * part1
        );
    }
}

#[test]
fn backward_rejects_batch_of_one() {
    let fx = toy_stack(false);
    assert!(matches!(
        backward(
            &fx.stack,
            &fx.scenes[..1],
            &fx.indices[..1],
            0.07,
            &small_cfg()
        ),
        Err(Error::BatchTooSmall { .. })
    ));
}
