mod common;

use common::*;
use llmembed_core::fusion::{
    avg_pool, concat, cooccurrence, fuse, max_pool, pn, power_normalize, FusionStrategy,
    ProjectionParams, SourceShape,
};
use llmembed_core::Matrix;
use proptest::prelude::*;

#[test]
fn avg_pool_matches_naive_mean() {
    let mut rng = rng(1);
    for _ in 0..200 {
        let stack = random_stack(&mut rng, 5, 7);
        let got = avg_pool(&Matrix::from_rows(&stack));
        let want = naive_avg(&stack);
        for (g, w) in got.iter().zip(&want) {
            assert!(rel_close(*g, *w, 1e-12), "{g} vs {w}");
        }
    }
}

#[test]
fn max_pool_matches_naive_max_exactly() {
    let mut rng = rng(2);
    for _ in 0..200 {
        let stack = random_stack(&mut rng, 5, 7);
        assert_eq!(max_pool(&Matrix::from_rows(&stack)), naive_max(&stack));
    }
}

#[test]
fn cooccurrence_matches_naive_gram() {
    let mut rng = rng(3);
    for _ in 0..200 {
        let x = random_stack(&mut rng, 3, 4);
        let got = cooccurrence(&Matrix::from_rows(&x), 0.3);
        let want = naive_cooccurrence(&x, 0.3);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() <= 1e-12, "{g} vs {w}");
        }
    }
}

#[test]
fn every_strategy_has_the_reference_width() {
    let expected = [
        4096, 4096, 4096, 20480, 5120, 5120, 21504, 5120, 5120, 21504, 6144, 6144, 22528, 49, 4145,
    ];
    let mut r = rng(4);
    let input = random_input(&mut r, 2, 5, 4096, 1024);
    let shapes = SourceShape::reference_set();
    for (s, want) in FusionStrategy::all().zip(expected) {
        let params = ProjectionParams::init(&s, &shapes, &mut r).unwrap();
        let out = fuse(&input, &s, &params).unwrap();
        assert_eq!(s.fused_dim(&shapes).unwrap(), want);
        assert_eq!(out.vectors.cols(), want, "strategy {}", s.index());
        assert_eq!(out.vectors.rows(), 2);
    }
}

#[test]
fn fusing_a_batch_equals_fusing_rows_one_at_a_time() {
    let mut r = rng(5);
    let input = random_input(&mut r, 6, 5, 8, 4);
    for s in FusionStrategy::all() {
        let s = s.with_projection_dim(4).unwrap();
        let params = ProjectionParams::init(&s, &input.shapes(), &mut r).unwrap();
        let batch = fuse(&input, &s, &params).unwrap();
        for row in 0..6 {
            let single = fuse(&input.select(row..row + 1), &s, &params).unwrap();
            assert_eq!(single.vectors.row(0), batch.vectors.row(row), "strategy {}", s.index());
        }
        // deterministic
        assert_eq!(fuse(&input, &s, &params).unwrap().vectors, batch.vectors);
    }
}

#[test]
fn strategy_compositions_match_hand_built_vectors() {
    let mut r = rng(6);
    let input = random_input(&mut r, 3, 5, 6, 3);
    let llm = |row: usize| to_rows(&input.source("llama2").unwrap().stacks[row]);
    let enc = |name: &str, row: usize| input.source(name).unwrap().stacks[row].row(0).to_vec();
    let none = ProjectionParams::empty();
    for row in 0..3 {
        let l = llm(row);
        let bert = enc("bert", row);
        let roberta = enc("roberta", row);
        let want: Vec<(u8, Vec<f64>)> = vec![
            (1, l[0].clone()),
            (2, naive_avg(&l)),
            (3, naive_max(&l)),
            (4, naive_concat(&l)),
            (5, naive_concat(&[naive_avg(&l), bert.clone()])),
            (6, naive_concat(&[naive_max(&l), bert.clone()])),
            (7, naive_concat(&[naive_concat(&l), bert.clone()])),
            (8, naive_concat(&[naive_avg(&l), roberta.clone()])),
            (9, naive_concat(&[naive_max(&l), roberta.clone()])),
            (10, naive_concat(&[naive_concat(&l), roberta.clone()])),
            (11, naive_concat(&[naive_avg(&l), bert.clone(), roberta.clone()])),
            (12, naive_concat(&[naive_max(&l), bert.clone(), roberta.clone()])),
            (13, naive_concat(&[naive_concat(&l), bert.clone(), roberta.clone()])),
        ];
        for (index, expected) in want {
            let s = FusionStrategy::new(index).unwrap();
            let got = fuse(&input, &s, &none).unwrap();
            let got = got.vectors.row(row);
            assert_eq!(got.len(), expected.len());
            for (g, w) in got.iter().zip(&expected) {
                assert!(rel_close(*g, *w, 1e-12), "strategy {index}: {g} vs {w}");
            }
        }
    }
}

#[test]
fn cooccurrence_strategies_match_hand_built_vectors() {
    let mut r = rng(7);
    let input = random_input(&mut r, 2, 5, 6, 3);
    for index in [14u8, 15] {
        let s = FusionStrategy::new(index)
            .unwrap()
            .with_projection_dim(3)
            .unwrap()
            .with_sigma(0.4)
            .unwrap();
        let mut params = ProjectionParams::init(&s, &input.shapes(), &mut r).unwrap();
        for sl in params.slices_mut() {
            for v in sl.iter_mut() {
                *v += 0.05;
            }
        }
        let proj = params.get("llama2").unwrap();
        let w = to_rows(&proj.weight);
        let out = fuse(&input, &s, &params).unwrap();
        for row in 0..2 {
            let l = to_rows(&input.source("llama2").unwrap().stacks[row]);
            // p = φ·W + b with W stored in×out: loop explicitly
            let mut x: Vec<Vec<f64>> = l
                .iter()
                .map(|phi| {
                    (0..3)
                        .map(|o| {
                            let mut s = proj.bias[o];
                            for i in 0..6 {
                                s += phi[i] * w[i][o];
                            }
                            s
                        })
                        .collect()
                })
                .collect();
            x.push(input.source("bert").unwrap().stacks[row].row(0).to_vec());
            x.push(input.source("roberta").unwrap().stacks[row].row(0).to_vec());
            let mut want = naive_cooccurrence(&x, 0.4);
            if index == 15 {
                want.extend(naive_avg(&l));
            }
            let got = out.vectors.row(row);
            assert_eq!(got.len(), want.len());
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() <= 1e-12, "strategy {index}: {g} vs {w}");
            }
        }
    }
}

#[test]
fn pn_closed_forms_agree_on_grid() {
    for &sigma in &[0.1, 0.3, 0.5] {
        let mut x = -50.0;
        while x <= 50.0 {
            assert!((pn(x, sigma) - pn_logistic(x, sigma)).abs() <= 1e-12);
            x += 0.01;
        }
    }
}

proptest! {
    #[test]
    fn pn_is_odd_bounded_and_monotone(x in -1e3f64..1e3, dx in 1e-6f64..10.0, sigma in 0.01f64..2.0) {
        let y = pn(x, sigma);
        prop_assert_eq!(y, -pn(-x, sigma));
        prop_assert!(y.abs() <= 1.0);
        if (2.0 * sigma * x).abs() < 18.0 {
            prop_assert!(y.abs() < 1.0);
        }
        // strict growth is only resolvable in f64 away from saturation
        if (2.0 * sigma * x).abs() < 5.0 && (2.0 * sigma * (x + dx)).abs() < 5.0 {
            prop_assert!(pn(x + dx, sigma) > y);
        } else {
            prop_assert!(pn(x + dx, sigma) >= y);
        }
    }

    #[test]
    fn gram_is_symmetric(h in 1usize..8, k in 1usize..6, seed in any::<u64>(), sigma in 0.05f64..1.0) {
        let mut r = rng(seed);
        let x = random_stack(&mut r, h, k);
        let c = cooccurrence(&Matrix::from_rows(&x), sigma);
        prop_assert_eq!(c.len(), h * h);
        for i in 0..h {
            for j in 0..h {
                prop_assert_eq!(c[i * h + j], c[j * h + i]);
            }
        }
    }

    #[test]
    fn power_normalize_keeps_shape(xs in proptest::collection::vec(-100f64..100.0, 0..40)) {
        let y = power_normalize(&xs, 0.3);
        prop_assert_eq!(y.len(), xs.len());
    }

    #[test]
    fn concat_length_is_sum(lens in proptest::collection::vec(0usize..20, 1..6)) {
        let parts: Vec<Vec<f64>> = lens.iter().map(|&n| vec![1.0; n]).collect();
        prop_assert_eq!(concat(&parts).len(), lens.iter().sum::<usize>());
    }
}
