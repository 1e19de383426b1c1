use super::*;
use crate::gradcheck::{check_score_gradients, touched_coords};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn params_for(spec: &ModelSpec, ne: usize, nr: usize, seed: u64) -> ModelParams {
    init_params(spec, ne, nr, seed).unwrap()
}

fn set_rows(p: &mut ModelParams, h: &[f64], r: &[f64], t: &[f64]) {
    p.entity.row_mut(0).copy_from_slice(h);
    p.relation.row_mut(0).copy_from_slice(r);
    p.entity.row_mut(1).copy_from_slice(t);
}

#[test]
fn init_is_deterministic() {
    let spec = ModelSpec::new(ModelKind::TransE, 3);
    let a = params_for(&spec, 5, 2, 7);
    let b = params_for(&spec, 5, 2, 7);
    assert_eq!(a, b);
    let c = params_for(&spec, 5, 2, 8);
    assert_ne!(a, c);
}

#[test]
fn init_ranges() {
    for kind in ModelKind::ALL {
        let spec = ModelSpec::new(kind, 8);
        let p = params_for(&spec, 50, 4, 3);
        assert!(p
            .entity
            .as_slice()
            .iter()
            .chain(p.relation.as_slice())
            .all(|v| (-1.0..=1.0).contains(v)));
        if let Some(mlp) = &p.mlp {
            let (h, i) = (spec.hidden_size() as f64, spec.mlp_input_size() as f64);
            let bound = (6.0 / (h + i)).sqrt() * (1.0 + 1e-12);
            assert!(mlp.hidden.as_slice().iter().all(|v| v.abs() <= bound));
            let out_bound = (6.0 / (h + 1.0)).sqrt() * (1.0 + 1e-12);
            assert!(mlp.out.iter().all(|v| v.abs() <= out_bound));
            assert_eq!(mlp.bias, 0.0);
        }
    }
    // ER-MLP with d = 4: fan-in 3d = 12, fan-out 10d = 40
    let spec = ModelSpec::new(ModelKind::ErMlp, 4);
    let p = params_for(&spec, 3, 1, 1);
    let bound = (6.0f64 / 52.0).sqrt();
    let max = p.mlp.unwrap().hidden.as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(max <= bound * (1.0 + 1e-12));
    assert!(max > 0.5 * bound);
}

#[test]
fn init_rejects_zero_sizes() {
    assert!(init_params(&ModelSpec::new(ModelKind::HolE, 0), 2, 2, 0).is_err());
    assert!(init_params(&ModelSpec::new(ModelKind::HolE, 2), 0, 2, 0).is_err());
    assert!(init_params(&ModelSpec::new(ModelKind::HolE, 2), 2, 0, 0).is_err());
}

#[test]
fn transe_translation_scores_zero() {
    let spec = ModelSpec::new(ModelKind::TransE, 2);
    let mut p = ModelParams::zeros(&spec, 2, 1);
    set_rows(&mut p, &[1.0, 2.0], &[0.5, -1.0], &[1.5, 1.0]);
    assert_eq!(score(&spec, &p, &Triple::new(0, 0, 1)).unwrap(), 0.0);
    // any other tail scores lower
    set_rows(&mut p, &[1.0, 2.0], &[0.5, -1.0], &[1.5, 1.25]);
    assert!(score(&spec, &p, &Triple::new(0, 0, 1)).unwrap() < 0.0);
    let g = score_gradients(&spec, &p, &Triple::new(0, 0, 0), 1.0, None).unwrap();
    assert!(g.entity.get(0).unwrap().iter().all(|v| v.is_finite()));
}

#[test]
fn transe_zero_vector_gradient_is_finite() {
    let spec = ModelSpec::new(ModelKind::TransE, 3);
    let mut p = ModelParams::zeros(&spec, 2, 1);
    set_rows(&mut p, &[1.0, 0.0, 2.0], &[0.0, 1.0, 0.0], &[1.0, 1.0, 2.0]);
    let g = score_gradients(&spec, &p, &Triple::new(0, 0, 1), 1.0, None).unwrap();
    for (_, row) in g.entity.iter().chain(g.relation.iter()) {
        assert!(row.iter().all(|v| v.is_finite() && *v == 0.0));
    }
}

#[test]
fn transe_l1() {
    let mut spec = ModelSpec::new(ModelKind::TransE, 2);
    spec.transe_norm = TransENorm::L1;
    let mut p = ModelParams::zeros(&spec, 2, 1);
    set_rows(&mut p, &[1.0, 2.0], &[0.0, 0.0], &[4.0, -2.0]);
    assert_eq!(score(&spec, &p, &Triple::new(0, 0, 1)).unwrap(), -7.0);
}

#[test]
fn distmult_example() {
    let spec = ModelSpec::new(ModelKind::DistMult, 2);
    let mut p = ModelParams::zeros(&spec, 2, 1);
    set_rows(&mut p, &[1.0, 2.0], &[3.0, 1.0], &[1.0, 1.0]);
    assert_eq!(score(&spec, &p, &Triple::new(0, 0, 1)).unwrap(), 5.0);
    let g = score_gradients(&spec, &p, &Triple::new(0, 0, 1), 1.0, None).unwrap();
    // ∂/∂h_i = r_i t_i
    assert_eq!(g.entity.get(0).unwrap(), &[3.0, 1.0]);
}

#[test]
fn hole_example() {
    let spec = ModelSpec::new(ModelKind::HolE, 2);
    let mut p = ModelParams::zeros(&spec, 2, 1);
    set_rows(&mut p, &[1.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]);
    assert_eq!(score(&spec, &p, &Triple::new(0, 0, 1)).unwrap(), 0.0);
    p.relation.row_mut(0).copy_from_slice(&[0.0, 1.0]);
    assert_eq!(score(&spec, &p, &Triple::new(0, 0, 1)).unwrap(), 1.0);
}

#[test]
fn complex_hand_value() {
    // h = 1+2i, r = 3-1i, t = 2+1i: h·r = 5+5i, times conj(t) = 2-1i → 15+5i
    let spec = ModelSpec::new(ModelKind::ComplEx, 1);
    let mut p = ModelParams::zeros(&spec, 2, 1);
    set_rows(&mut p, &[1.0, 2.0], &[3.0, -1.0], &[2.0, 1.0]);
    assert_eq!(score(&spec, &p, &Triple::new(0, 0, 1)).unwrap(), 15.0);
}

#[test]
fn mlp_zero_output_weights_score_bias() {
    for kind in [ModelKind::ErMlp, ModelKind::ErMlp2d] {
        let spec = ModelSpec::new(kind, 3);
        let mut p = params_for(&spec, 4, 2, 11);
        let mlp = p.mlp.as_mut().unwrap();
        mlp.out.iter_mut().for_each(|v| *v = 0.0);
        mlp.bias = 0.37;
        for h in 0..4 {
            for t in 0..4 {
                assert_eq!(score(&spec, &p, &Triple::new(h, 1, t)).unwrap(), 0.37);
            }
        }
    }
}

#[test]
fn mask_rejected_for_linear_kinds() {
    let spec = ModelSpec::new(ModelKind::DistMult, 2);
    let p = params_for(&spec, 2, 1, 0);
    let err = score_gradients(&spec, &p, &Triple::new(0, 0, 1), 1.0, Some(&[1.0, 1.0]));
    assert!(matches!(err, Err(Error::Argument(_))));
}

#[test]
fn out_of_range_ids() {
    let spec = ModelSpec::new(ModelKind::ErMlp, 2);
    let p = params_for(&spec, 2, 1, 0);
    assert!(matches!(score(&spec, &p, &Triple::new(2, 0, 0)), Err(Error::Index(_))));
    assert!(matches!(score(&spec, &p, &Triple::new(0, 1, 0)), Err(Error::Index(_))));
}

fn random_mask(rng: &mut ChaCha8Rng, n: usize, keep: f64) -> Vec<f64> {
    (0..n)
        .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
        .collect()
}

#[test]
fn score_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for kind in ModelKind::ALL {
        for trial in 0..5 {
            let spec = ModelSpec::new(kind, 6);
            let p = params_for(&spec, 5, 3, 100 + trial);
            let t = Triple::new(rng.gen_range(0..5), rng.gen_range(0..3), rng.gen_range(0..5));
            let chk = check_score_gradients(&spec, &p, &t, None, 1e-5).unwrap();
            assert!(chk.max_rel_error < 1e-4, "{kind} trial {trial}: {chk:?}");
            if kind.is_mlp() {
                let mask = random_mask(&mut rng, spec.hidden_size(), 0.5);
                let chk = check_score_gradients(&spec, &p, &t, Some(&mask), 1e-5).unwrap();
                assert!(chk.max_rel_error < 1e-4, "{kind} masked trial {trial}: {chk:?}");
            }
        }
    }
}

#[test]
fn self_loop_gradients_accumulate() {
    for kind in ModelKind::ALL {
        let spec = ModelSpec::new(kind, 4);
        let p = params_for(&spec, 3, 1, 5);
        let chk = check_score_gradients(&spec, &p, &Triple::new(1, 0, 1), None, 1e-5).unwrap();
        assert!(chk.max_rel_error < 1e-4, "{kind}: {chk:?}");
    }
}

#[test]
fn gradients_touch_only_the_triple() {
    for kind in ModelKind::ALL {
        let spec = ModelSpec::new(kind, 3);
        let p = params_for(&spec, 6, 3, 1);
        let g = score_gradients(&spec, &p, &Triple::new(4, 2, 1), 1.0, None).unwrap();
        assert_eq!(g.entity.indices(), vec![1, 4]);
        assert_eq!(g.relation.indices(), vec![2]);
        assert_eq!(g.mlp.is_some(), kind.is_mlp());
    }
}

#[test]
fn upstream_scales_gradient() {
    let spec = ModelSpec::new(ModelKind::ErMlp2d, 3);
    let p = params_for(&spec, 4, 2, 9);
    let t = Triple::new(0, 1, 3);
    let a = score_gradients(&spec, &p, &t, 1.0, None).unwrap();
    let b = score_gradients(&spec, &p, &t, -2.5, None).unwrap();
    for (row, ga) in a.entity.iter() {
        let gb = b.entity.get(row).unwrap();
        for (x, y) in ga.iter().zip(gb) {
            assert!((x * -2.5 - y).abs() < 1e-12);
        }
    }
}

#[test]
fn param_count_table_values() {
    let c = param_count(&ModelSpec::new(ModelKind::ErMlp, 100), 40943, 18);
    assert_eq!(c.formula, 4_397_100);
    assert_eq!(c.census, 4_397_101);
    let c = param_count(&ModelSpec::new(ModelKind::HolE, 100), 14951, 1345);
    assert_eq!((c.formula, c.census), (1_629_600, 1_629_600));
    let c = param_count(&ModelSpec::new(ModelKind::ErMlp, 1), 1, 1);
    assert_eq!((c.formula, c.census), (42, 43));
    let c = param_count(&ModelSpec::new(ModelKind::HolE, 1), 1, 1);
    assert_eq!(c.formula, 2);
}

#[test]
fn census_matches_allocation() {
    for kind in ModelKind::ALL {
        for hm in [10, 20] {
            let spec = ModelSpec::new(kind, 5).with_hidden_multiplier(hm);
            let p = params_for(&spec, 7, 3, 0);
            let c = param_count(&spec, 7, 3);
            assert_eq!(c.census as usize, p.num_values(), "{kind}");
            let expected_gap = if kind.is_mlp() { 1 } else { 0 };
            assert_eq!(c.census - c.formula, expected_gap);
        }
    }
}

#[test]
fn complex_with_real_relation_is_symmetric() {
    let spec = ModelSpec::new(ModelKind::ComplEx, 5);
    let mut p = params_for(&spec, 4, 1, 21);
    for i in (1..10).step_by(2) {
        p.relation.row_mut(0)[i] = 0.0;
    }
    let ab = score(&spec, &p, &Triple::new(0, 0, 2)).unwrap();
    let ba = score(&spec, &p, &Triple::new(2, 0, 0)).unwrap();
    assert!((ab - ba).abs() < 1e-12);
    // equals DistMult over the real parts plus DistMult over the imaginary parts
    let (h, r, t) = (p.entity.row(0), p.relation.row(0), p.entity.row(2));
    let re: f64 = (0..5).map(|i| h[2 * i] * r[2 * i] * t[2 * i]).sum();
    let im: f64 = (0..5).map(|i| h[2 * i + 1] * r[2 * i] * t[2 * i + 1]).sum();
    assert!((ab - (re + im)).abs() < 1e-12);
}

#[test]
fn candidate_scorer_matches_pointwise_scores() {
    for kind in ModelKind::ALL {
        for dim in [3, 70] {
            let spec = ModelSpec::new(kind, dim);
            let p = params_for(&spec, 9, 2, 4);
            for side in [Side::Head, Side::Tail] {
                let scorer = CandidateScorer::new(&spec, &p, side);
                let q = Triple::new(2, 1, 6);
                let mut out = vec![0.0; 9];
                scorer.score_all(&q, &mut out).unwrap();
                for (e, &s) in out.iter().enumerate() {
                    let direct = score(&spec, &p, &side.replace(&q, e)).unwrap();
                    assert!(
                        (s - direct).abs() <= 1e-9 * (1.0 + direct.abs()),
                        "{kind} d={dim} {side:?} e={e}: {s} vs {direct}"
                    );
                }
            }
        }
    }
}

#[test]
fn touched_coords_cover_mlp() {
    let spec = ModelSpec::new(ModelKind::ErMlp, 2);
    let p = params_for(&spec, 3, 1, 0);
    let coords = touched_coords(&p, &[Triple::new(0, 0, 1)]);
    assert_eq!(coords.len(), 2 * 2 + 2 + 20 * 6 + 20 + 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn scores_are_permutation_covariant(seed in any::<u64>(), kind_idx in 0usize..6) {
        let kind = ModelKind::ALL[kind_idx];
        let spec = ModelSpec::new(kind, 4);
        let ne = 7;
        let p = params_for(&spec, ne, 2, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut perm: Vec<usize> = (0..ne).collect();
        perm.shuffle(&mut rng);
        let mut q = p.clone();
        for (old, &new) in perm.iter().enumerate() {
            q.entity.row_mut(new).copy_from_slice(p.entity.row(old));
        }
        for h in 0..ne {
            for t in 0..ne {
                let a = score(&spec, &p, &Triple::new(h, 1, t)).unwrap();
                let b = score(&spec, &q, &Triple::new(perm[h], 1, perm[t])).unwrap();
                prop_assert_eq!(a, b);
            }
        }
    }
}
