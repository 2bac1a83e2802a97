use std::collections::BTreeMap;

use fairsinkhorn::contrastive::{
    clip_loss, diagonal_distribution, fairclip_loss, similarity, EmbeddingBatch, FairClipConfig,
    SimilarityMatrix,
};
use fairsinkhorn::ot::{EpsilonScale, SinkhornConfig};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-scale..scale))
}

fn rel_err(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let diff = (a - b).mapv(|v| v * v).sum().sqrt();
    diff / b.mapv(|v| v * v).sum().sqrt().max(1e-12)
}

fn central_difference(x: &Array2<f64>, h: f64, mut f: impl FnMut(&Array2<f64>) -> f64) -> Array2<f64> {
    let mut g = Array2::zeros(x.dim());
    for idx in ndarray::indices(x.dim()) {
        let mut up = x.clone();
        let mut dn = x.clone();
        up[idx] += h;
        dn[idx] -= h;
        g[idx] = (f(&up) - f(&dn)) / (2.0 * h);
    }
    g
}

#[test]
fn similarity_matches_scalar_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..30 {
        let n = rng.random_range(1..8);
        let d = rng.random_range(1..6);
        let img = random_matrix(&mut rng, n, d, 1.0);
        let txt = random_matrix(&mut rng, n, d, 1.0);
        let tau = rng.random_range(0.05..1.0);
        let m = similarity(&EmbeddingBatch::new(img.clone(), txt.clone()).unwrap(), tau).unwrap();
        for i in 0..n {
            for j in 0..n {
                let (mut dot, mut ni, mut nt) = (0.0, 0.0, 0.0);
                for k in 0..d {
                    dot += img[[i, k]] * txt[[j, k]];
                    ni += img[[i, k]] * img[[i, k]];
                    nt += txt[[j, k]] * txt[[j, k]];
                }
                let expected = dot / (ni.sqrt() * nt.sqrt()) / tau;
                assert!((m.entries[[i, j]] - expected).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn uniform_logits_give_log_n() {
    for n in [2usize, 4, 8] {
        for value in [0.0, 0.7, -3.0] {
            let m = SimilarityMatrix::from_logits(Array2::from_elem((n, n), value), 1.0).unwrap();
            let (loss, _) = clip_loss(&m);
            assert!((loss - (n as f64).ln()).abs() <= 1e-9, "n={n}: {loss}");
        }
    }
}

#[test]
fn saturated_diagonal_gives_near_zero_loss() {
    for n in [2usize, 4, 8] {
        let logits = Array2::from_shape_fn((n, n), |(i, j)| if i == j { 100.0 } else { -100.0 });
        let (loss, _) = clip_loss(&SimilarityMatrix::from_logits(logits, 1.0).unwrap());
        assert!(loss < 1e-8, "n={n}: {loss}");
    }
}

#[test]
fn clip_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..60 {
        let n = rng.random_range(2..7);
        let logits = random_matrix(&mut rng, n, n, 3.0);
        let (_, grad) = clip_loss(&SimilarityMatrix::from_logits(logits.clone(), 1.0).unwrap());
        let numeric = central_difference(&logits, 1e-5, |x| {
            clip_loss(&SimilarityMatrix::from_logits(x.clone(), 1.0).unwrap()).0
        });
        let err = rel_err(&grad, &numeric);
        assert!(err <= 1e-6, "trial {trial}: {err}");
    }
}

#[test]
fn clip_loss_is_permutation_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..20 {
        let n = rng.random_range(2..7);
        let img = random_matrix(&mut rng, n, 4, 1.0);
        let txt = random_matrix(&mut rng, n, 4, 1.0);
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let loss = |i: &Array2<f64>, t: &Array2<f64>| {
            clip_loss(&similarity(&EmbeddingBatch::new(i.clone(), t.clone()).unwrap(), 0.1).unwrap()).0
        };
        let pi = img.select(ndarray::Axis(0), &perm);
        let pt = txt.select(ndarray::Axis(0), &perm);
        assert!((loss(&img, &txt) - loss(&pi, &pt)).abs() <= 1e-12);
    }
}

fn fair_config(lambda: f64, debias: bool) -> FairClipConfig {
    FairClipConfig {
        lambda_fair: lambda,
        attribute_name: "gender".into(),
        group_batch_size: 4,
        sinkhorn: SinkhornConfig {
            epsilon: 0.05,
            epsilon_scale: EpsilonScale::Absolute,
            tolerance: 1e-11,
            max_iters: 100_000,
            debias,
            ..Default::default()
        },
    }
}

#[test]
fn fairclip_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let tau = 0.5;
    for trial in 0..50 {
        let n = rng.random_range(2..6);
        let d = 3;
        let img = random_matrix(&mut rng, n, d, 1.0);
        let txt = random_matrix(&mut rng, n, d, 1.0);
        let gi = random_matrix(&mut rng, 3, d, 1.0);
        let gt = random_matrix(&mut rng, 3, d, 1.0);
        let cfg = fair_config(0.5, trial % 2 == 1);
        let eval = |img: &Array2<f64>, txt: &Array2<f64>, gi: &Array2<f64>, gt: &Array2<f64>| {
            let mut groups = BTreeMap::new();
            groups.insert(0, EmbeddingBatch::new(gi.clone(), gt.clone()).unwrap());
            fairclip_loss(&EmbeddingBatch::new(img.clone(), txt.clone()).unwrap(), &groups, &cfg, tau)
                .unwrap()
        };
        let out = eval(&img, &txt, &gi, &gt);
        let h = 1e-5;
        let checks = [
            (&out.batch_grads.image, central_difference(&img, h, |x| eval(x, &txt, &gi, &gt).loss)),
            (&out.batch_grads.text, central_difference(&txt, h, |x| eval(&img, x, &gi, &gt).loss)),
            (&out.group_grads[&0].image, central_difference(&gi, h, |x| eval(&img, &txt, x, &gt).loss)),
            (&out.group_grads[&0].text, central_difference(&gt, h, |x| eval(&img, &txt, &gi, x).loss)),
        ];
        for (k, (analytic, numeric)) in checks.iter().enumerate() {
            let err = rel_err(analytic, numeric);
            assert!(err <= 1e-3, "trial {trial} block {k}: {err}");
        }
    }
}

#[test]
fn fairclip_decomposes_into_clip_plus_weighted_terms() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..20 {
        let img = random_matrix(&mut rng, 5, 3, 1.0);
        let txt = random_matrix(&mut rng, 5, 3, 1.0);
        let batch = EmbeddingBatch::new(img, txt).unwrap();
        let mut groups = BTreeMap::new();
        for level in 0..2 {
            let gi = random_matrix(&mut rng, 3, 3, 1.0);
            let gt = random_matrix(&mut rng, 3, 3, 1.0);
            groups.insert(level, EmbeddingBatch::new(gi, gt).unwrap());
        }
        let lambda = 0.3;
        let out = fairclip_loss(&batch, &groups, &fair_config(lambda, false), 0.1).unwrap();
        let (clip, _) = clip_loss(&similarity(&batch, 0.1).unwrap());
        assert!((out.clip_loss - clip).abs() <= 1e-10);
        let expected = clip + lambda * out.sinkhorn_terms.values().sum::<f64>();
        assert!((out.loss - expected).abs() <= 1e-10);
        assert_eq!(out.sinkhorn_terms.len(), 2);
    }
}

#[test]
fn zero_lambda_matches_plain_clip_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let img = random_matrix(&mut rng, 6, 4, 1.0);
    let txt = random_matrix(&mut rng, 6, 4, 1.0);
    let batch = EmbeddingBatch::new(img, txt).unwrap();
    let plain = fairclip_loss(&batch, &BTreeMap::new(), &fair_config(0.0, false), 0.07).unwrap();
    let mut groups = BTreeMap::new();
    groups.insert(1, EmbeddingBatch::new(random_matrix(&mut rng, 3, 4, 1.0), random_matrix(&mut rng, 3, 4, 1.0)).unwrap());
    let with_groups = fairclip_loss(&batch, &groups, &fair_config(0.0, false), 0.07).unwrap();
    assert_eq!(plain.loss, with_groups.loss);
    assert_eq!(plain.batch_grads, with_groups.batch_grads);
}

#[test]
fn diagonal_distribution_is_uniform_over_matched_cosines() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let img = random_matrix(&mut rng, 7, 3, 1.0);
    let txt = random_matrix(&mut rng, 7, 3, 1.0);
    let m = similarity(&EmbeddingBatch::new(img, txt).unwrap(), 0.07).unwrap();
    let d = diagonal_distribution(&m).unwrap();
    assert_eq!(d.len(), 7);
    assert!(d.weights().iter().all(|&w| w == 1.0 / 7.0));
    for (i, &s) in d.support().iter().enumerate() {
        assert_eq!(s, m.cosine[[i, i]]);
        assert!((-1.0..=1.0).contains(&s));
    }
}
