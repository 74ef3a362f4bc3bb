use proptest::prelude::*;
use rand::Rng;
use xautoml::learners::loss::{focal_unfloored, loss_value, sigmoid, HESSIAN_FLOOR};
use xautoml::learners::{
    feature_importance, fit_gbt, partial_dependence, AlphaWeighting, Classifier, FocalLossParams, GbtSpec, LossSpec,
    Node, Tree,
};
use xautoml::matrix::DenseMatrix;
use xautoml::metrics;
use xautoml::seed;

fn random_problem(n: usize, d: usize, seed_: u64) -> (DenseMatrix, Vec<u8>) {
    let mut rng = seed::rng(seed_);
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for _ in 0..n {
        let r: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let z = 1.5 * r[0] - r[1 % d] + 0.5 * r[0] * r[1 % d];
        y.push(u8::from(rng.random_bool(sigmoid(z))));
        rows.push(r);
    }
    (DenseMatrix::from_rows(&rows).unwrap(), y)
}

fn walk(tree: &Tree, node: usize, row: &[f64]) -> f64 {
    match &tree.nodes[node] {
        Node::Leaf { value, .. } => *value,
        Node::Split {
            feature,
            threshold,
            left,
            right,
            ..
        } => {
            if row[*feature] <= *threshold {
                walk(tree, *left, row)
            } else {
                walk(tree, *right, row)
            }
        }
    }
}

#[test]
fn focal_with_unit_alpha_and_zero_gamma_is_cross_entropy() {
    let focal = LossSpec::Focal(FocalLossParams::new(1.0, 0.0).unwrap());
    for y in [0u8, 1] {
        for k in -200..=200 {
            let z = k as f64 * 0.1;
            let a = xautoml::learners::loss_value_grad_hess(&focal, y, z);
            let b = xautoml::learners::loss_value_grad_hess(&LossSpec::CrossEntropy, y, z);
            assert!((a.value - b.value).abs() <= 1e-12, "value y={y} z={z}");
            assert!((a.grad - b.grad).abs() <= 1e-12, "grad y={y} z={z}");
            assert!((a.hess - b.hess).abs() <= 1e-12, "hess y={y} z={z}");
        }
    }
}

fn fd_close(analytic: f64, numeric: f64) -> bool {
    (analytic - numeric).abs() <= 1e-4 * analytic.abs().max(numeric.abs()).max(1e-6)
}

proptest! {
    #[test]
    fn focal_gradient_matches_finite_difference(
        y in 0u8..2, z in -8.0f64..8.0, gamma in 0.0f64..5.0, alpha in 0.01f64..0.99, balanced: bool
    ) {
        let weighting = if balanced { AlphaWeighting::Balanced } else { AlphaWeighting::Positive };
        let p = FocalLossParams::with_weighting(alpha, gamma, weighting).unwrap();
        let spec = LossSpec::Focal(p);
        let h = 1e-5;
        let numeric = (loss_value(&spec, y, z + h) - loss_value(&spec, y, z - h)) / (2.0 * h);
        let t = focal_unfloored(&p, y, z);
        prop_assert!(fd_close(t.grad, numeric), "grad {} vs {}", t.grad, numeric);
        let gp = focal_unfloored(&p, y, z + h).grad;
        let gm = focal_unfloored(&p, y, z - h).grad;
        let numeric_h = (gp - gm) / (2.0 * h);
        prop_assert!(fd_close(t.hess, numeric_h), "hess {} vs {}", t.hess, numeric_h);
    }

    #[test]
    fn floored_hessian_is_positive(y in 0u8..2, z in -40.0f64..40.0, gamma in 0.0f64..5.0, alpha in 0.01f64..1.0) {
        let spec = LossSpec::Focal(FocalLossParams::new(alpha, gamma).unwrap());
        let t = xautoml::learners::loss_value_grad_hess(&spec, y, z);
        prop_assert!(t.hess >= HESSIAN_FLOOR);
        prop_assert!(t.value >= 0.0 && t.value.is_finite());
    }
}

#[test]
fn perfectly_classified_sample_costs_nothing() {
    let spec = LossSpec::Focal(FocalLossParams::new(0.25, 2.0).unwrap());
    let mut last = f64::INFINITY;
    for z in [2.0, 5.0, 10.0, 20.0, 35.0] {
        let v = loss_value(&spec, 1, z);
        assert!(v < last);
        last = v;
    }
    assert!(last < 1e-20);
}

#[test]
fn separable_toy_reaches_perfect_training_f1() {
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for i in 0..40 {
        let a = i as f64 / 40.0;
        let b = ((i * 7) % 40) as f64 / 40.0;
        rows.push(vec![a, b]);
        y.push(u8::from(a + b > 1.0));
    }
    let x = DenseMatrix::from_rows(&rows).unwrap();
    let m = fit_gbt(
        &x,
        &y,
        &GbtSpec {
            n_rounds: 50,
            ..GbtSpec::default()
        },
    )
    .unwrap();
    let pred = metrics::threshold(&m.predict_proba(&x).unwrap(), 0.5);
    assert_eq!(metrics::f1(&y, &pred), 1.0);
}

#[test]
fn same_seed_same_trees() {
    let (x, y) = random_problem(300, 6, 4);
    let spec = GbtSpec {
        n_rounds: 20,
        subsample: 0.7,
        colsample: 0.5,
        seed: 99,
        ..GbtSpec::default()
    };
    let a = fit_gbt(&x, &y, &spec).unwrap();
    let b = fit_gbt(&x, &y, &spec).unwrap();
    assert_eq!(a.trees, b.trees);
    assert!(a.trees.len() <= spec.n_rounds);
    for n in a.trees.iter().flat_map(|t| &t.nodes) {
        if let Node::Split { feature, .. } = n {
            assert!(*feature < x.n_cols());
        }
    }
}

#[test]
fn predictions_match_naive_traversal() {
    let (x, y) = random_problem(400, 5, 11);
    let m = fit_gbt(
        &x,
        &y,
        &GbtSpec {
            n_rounds: 30,
            max_depth: 5,
            ..GbtSpec::default()
        },
    )
    .unwrap();
    let (probe, _) = random_problem(100, 5, 12);
    let got = m.predict_proba(&probe).unwrap();
    for (r, g) in got.iter().enumerate() {
        let row = probe.row(r);
        let z = m.base_score + m.trees.iter().map(|t| walk(t, 0, &row)).sum::<f64>();
        assert!((sigmoid(z) - g).abs() < 1e-12);
        assert!(*g > 0.0 && *g < 1.0);
    }
}

#[test]
fn positive_leaf_tree_raises_every_probability() {
    let (x, y) = random_problem(200, 3, 5);
    let mut m = fit_gbt(
        &x,
        &y,
        &GbtSpec {
            n_rounds: 10,
            ..GbtSpec::default()
        },
    )
    .unwrap();
    let before = m.predict_proba(&x).unwrap();
    m.trees.push(Tree {
        nodes: vec![
            Node::Split {
                feature: 0,
                threshold: 0.0,
                left: 1,
                right: 2,
                gain: 0.0,
                grad: 0.0,
                hess: 0.0,
            },
            Node::Leaf {
                value: 0.3,
                grad: 0.0,
                hess: 0.0,
            },
            Node::Leaf {
                value: 0.1,
                grad: 0.0,
                hess: 0.0,
            },
        ],
    });
    let after = m.predict_proba(&x).unwrap();
    assert!(before.iter().zip(&after).all(|(b, a)| a > b));
}

#[test]
fn importance_of_empty_and_single_split_models() {
    let (x, y) = random_problem(100, 3, 6);
    let empty = fit_gbt(
        &x,
        &y,
        &GbtSpec {
            n_rounds: 0,
            ..GbtSpec::default()
        },
    )
    .unwrap();
    assert!(feature_importance(&empty).is_empty());

    let stump = fit_gbt(
        &x,
        &y,
        &GbtSpec {
            n_rounds: 1,
            max_depth: 1,
            ..GbtSpec::default()
        },
    )
    .unwrap();
    let imp = feature_importance(&stump);
    assert_eq!(imp.len(), 1);
    let total: f64 = imp.values().sum();
    assert!((imp.values().next().unwrap() / total - 1.0).abs() < 1e-15);
}

#[test]
fn importance_matches_gain_recomputed_from_node_stats() {
    let (x, y) = random_problem(500, 6, 7);
    let spec = GbtSpec {
        n_rounds: 25,
        ..GbtSpec::default()
    };
    let m = fit_gbt(&x, &y, &spec).unwrap();
    let imp = feature_importance(&m);
    let mut oracle = vec![0.0; x.n_cols()];
    let s = |g: f64, h: f64| g * g / (h + spec.lambda);
    for t in &m.trees {
        for n in &t.nodes {
            if let Node::Split {
                feature,
                left,
                right,
                grad,
                hess,
                ..
            } = n
            {
                let (gl, hl) = t.nodes[*left].grad_hess();
                let (gr, hr) = t.nodes[*right].grad_hess();
                assert!(((gl + gr) - grad).abs() < 1e-9 && ((hl + hr) - hess).abs() < 1e-9);
                oracle[*feature] += 0.5 * (s(gl, hl) + s(gr, hr) - s(*grad, *hess));
            }
        }
    }
    for (j, want) in oracle.iter().enumerate() {
        let got = imp.get(&j).copied().unwrap_or(0.0);
        assert!((got - want).abs() <= 1e-9 * want.abs().max(1.0), "feature {j}");
        assert!(got >= 0.0);
    }
}

#[test]
fn partial_dependence_cases() {
    // feature 1 is constant so no tree can use it
    let mut rng = seed::rng(8);
    let rows: Vec<Vec<f64>> = (0..200).map(|_| vec![rng.random_range(0.0..1.0), 3.0]).collect();
    let y: Vec<u8> = rows.iter().map(|r| u8::from(rng.random_bool(r[0]))).collect();
    let x = DenseMatrix::from_rows(&rows).unwrap();
    let m = fit_gbt(
        &x,
        &y,
        &GbtSpec {
            n_rounds: 40,
            ..GbtSpec::default()
        },
    )
    .unwrap();

    let flat = partial_dependence(&m, &x, 1, 5).unwrap();
    assert!(flat.mean_prediction.windows(2).all(|w| w[0] == w[1]));

    let one = partial_dependence(&m, &x, 0, 1).unwrap();
    let median = one.grid[0];
    let p = m.predict_proba(&x.with_column(0, vec![median; 200])).unwrap();
    assert!((one.mean_prediction[0] - p.iter().sum::<f64>() / 200.0).abs() < 1e-15);
}

#[test]
fn monotone_data_gives_monotone_curve() {
    let rows: Vec<Vec<f64>> = (0..200).map(|i| vec![i as f64]).collect();
    let y: Vec<u8> = (0..200).map(|i| u8::from(i >= 100)).collect();
    let x = DenseMatrix::from_rows(&rows).unwrap();
    let m = fit_gbt(
        &x,
        &y,
        &GbtSpec {
            n_rounds: 30,
            ..GbtSpec::default()
        },
    )
    .unwrap();
    let pd = partial_dependence(&m, &x, 0, 20).unwrap();
    assert!(pd.mean_prediction.windows(2).all(|w| w[1] >= w[0]));
    assert!(pd.mean_prediction[19] > pd.mean_prediction[0]);
}

#[test]
fn training_loss_never_increases() {
    for (k, loss) in [
        LossSpec::CrossEntropy,
        LossSpec::Focal(FocalLossParams::new(0.25, 2.0).unwrap()),
        LossSpec::Focal(FocalLossParams::new(1.0, 5.0).unwrap()),
    ]
    .into_iter()
    .enumerate()
    {
        for lr in [0.05, 0.1, 0.3] {
            let (x, y) = random_problem(300, 4, 20 + k as u64);
            let m = fit_gbt(
                &x,
                &y,
                &GbtSpec {
                    loss,
                    learning_rate: lr,
                    n_rounds: 40,
                    ..GbtSpec::default()
                },
            )
            .unwrap();
            for w in m.train_loss.windows(2) {
                assert!(
                    w[1] <= w[0] + 1e-9 * w[0].abs(),
                    "{loss:?} lr {lr}: {} -> {}",
                    w[0],
                    w[1]
                );
            }
        }
    }
}

#[test]
fn column_permutation_leaves_predictions_unchanged() {
    let (x, y) = random_problem(300, 5, 30);
    let perm = [3, 0, 4, 1, 2];
    let xp = x.select_cols(&perm);
    let spec = GbtSpec {
        n_rounds: 20,
        ..GbtSpec::default()
    };
    let a = fit_gbt(&x, &y, &spec).unwrap().predict_proba(&x).unwrap();
    let b = fit_gbt(&xp, &y, &spec).unwrap().predict_proba(&xp).unwrap();
    for (p, q) in a.iter().zip(&b) {
        assert!((p - q).abs() < 1e-12);
    }
}

#[test]
fn used_features_lists_split_features() {
    let (x, y) = random_problem(200, 4, 31);
    let m = fit_gbt(
        &x,
        &y,
        &GbtSpec {
            n_rounds: 5,
            ..GbtSpec::default()
        },
    )
    .unwrap();
    let used = m.used_features();
    let imp = feature_importance(&m);
    assert_eq!(used, imp.keys().copied().collect::<Vec<_>>());
}

mod binning {
    use xautoml::learners::binning::*;
    #[allow(unused_imports)]
    use xautoml::{
        learners::{fit_gbt, loss::sigmoid, Classifier, GbtSpec},
        matrix::DenseMatrix,
        Error,
    };

    use proptest::prelude::*;

    #[test]
    fn few_distinct_values_get_own_bins() {
        let c = Cuts::fit(&[3.0, 1.0, 2.0, 1.0], 64);
        assert_eq!(c.0, vec![1.0, 2.0]);
        assert_eq!(c.bin(1.0), 0);
        assert_eq!(c.bin(1.5), 1);
        assert_eq!(c.bin(3.0), 2);
        assert_eq!(Cuts::fit(&[5.0; 4], 8).n_bins(), 1);
    }

    proptest! {
        #[test]
        fn bin_order_matches_threshold(xs in prop::collection::vec(-100.0f64..100.0, 1..300), nb in 2usize..70) {
            let c = Cuts::fit(&xs, nb);
            prop_assert!(c.n_bins() <= nb);
            for &x in &xs {
                let b = c.bin(x);
                for (k, &cut) in c.0.iter().enumerate() {
                    prop_assert_eq!(b <= k, x <= cut);
                }
            }
        }
    }
}

mod explain {
    use xautoml::learners::explain::*;
    #[allow(unused_imports)]
    use xautoml::{
        learners::{fit_gbt, loss::sigmoid, Classifier, GbtSpec},
        matrix::DenseMatrix,
        Error,
    };

    #[test]
    fn grid_endpoints_are_extremes() {
        let g = quantile_grid(&[5.0, 1.0, 3.0], 3);
        assert_eq!(g, vec![1.0, 3.0, 5.0]);
        assert_eq!(quantile_grid(&[5.0, 1.0, 3.0], 1), vec![3.0]);
    }

    #[test]
    fn unused_feature_has_zero_permutation_importance() {
        let rows: Vec<Vec<f64>> = (0..60).map(|i| vec![i as f64, (i % 7) as f64 * 0.0]).collect();
        let y: Vec<u8> = (0..60).map(|i| u8::from(i >= 30)).collect();
        let x = DenseMatrix::from_rows(&rows).unwrap();
        let m = fit_gbt(
            &x,
            &y,
            &GbtSpec {
                n_rounds: 10,
                ..GbtSpec::default()
            },
        )
        .unwrap();
        let imp = permutation_importance(&m, &x, &y, 3, 1).unwrap();
        assert_eq!(imp[1], 0.0);
        assert!(imp[0] > 0.0);
    }
}

mod gam {
    use xautoml::learners::gam::*;
    #[allow(unused_imports)]
    use xautoml::{
        learners::{fit_gbt, loss::sigmoid, Classifier, GbtSpec},
        matrix::DenseMatrix,
        Error,
    };

    use rand::Rng;
    use xautoml::seed;

    fn step_data() -> (DenseMatrix, Vec<u8>) {
        let mut rng = seed::rng(3);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for _ in 0..300 {
            let r: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let p = if r[2] > 0.3 { 0.9 } else { 0.1 };
            y.push(u8::from(rng.random_bool(p)));
            rows.push(r);
        }
        (DenseMatrix::from_rows(&rows).unwrap(), y)
    }

    #[test]
    fn step_feature_dominates() {
        let (x, y) = step_data();
        let m = fit_gam(&x, &y, &GamSpec::default()).unwrap();
        let tv: Vec<f64> = (0..4).map(|j| m.total_variation(j)).collect();
        let top = (0..4).max_by(|&a, &b| tv[a].total_cmp(&tv[b])).unwrap();
        assert_eq!(top, 2, "{tv:?}");
    }

    #[test]
    fn zero_cycles_is_base_rate() {
        let (x, y) = step_data();
        let m = fit_gam(
            &x,
            &y,
            &GamSpec {
                n_cycles: 0,
                ..GamSpec::default()
            },
        )
        .unwrap();
        let rate = y.iter().map(|&v| f64::from(v)).sum::<f64>() / y.len() as f64;
        assert!(m.predict_proba(&x).unwrap().iter().all(|p| (p - rate).abs() < 1e-12));
    }

    #[test]
    fn prediction_is_additive() {
        let (x, y) = step_data();
        let m = fit_gam(
            &x,
            &y,
            &GamSpec {
                n_cycles: 10,
                ..GamSpec::default()
            },
        )
        .unwrap();
        let probs = m.predict_proba(&x).unwrap();
        for r in 0..20 {
            let z: f64 = m.base_score + (0..4).map(|j| m.contribution(j, x.get(r, j))).sum::<f64>();
            assert!((sigmoid(z) - probs[r]).abs() < 1e-12);
        }
    }
}

mod gbt {
    use xautoml::learners::gbt::*;
    #[allow(unused_imports)]
    use xautoml::{
        learners::{fit_gbt, loss::sigmoid, Classifier, GbtSpec},
        matrix::DenseMatrix,
        Error,
    };

    fn separable() -> (DenseMatrix, Vec<u8>) {
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..40 {
            let a = (i as f64 * 0.37).sin();
            let b = (i as f64 * 1.3).cos();
            rows.push(vec![a, b]);
            y.push(u8::from(a + b > 0.2));
        }
        (DenseMatrix::from_rows(&rows).unwrap(), y)
    }

    #[test]
    fn zero_rounds_predicts_base_rate() {
        let (x, y) = separable();
        let spec = GbtSpec {
            n_rounds: 0,
            ..GbtSpec::default()
        };
        let m = fit_gbt(&x, &y, &spec).unwrap();
        let rate = y.iter().filter(|&&v| v == 1).count() as f64 / y.len() as f64;
        for p in m.predict_proba(&x).unwrap() {
            assert!((p - rate).abs() < 1e-12);
        }
    }

    #[test]
    fn single_class_is_rejected() {
        let (x, _) = separable();
        assert!(matches!(
            fit_gbt(&x, &[0; 40], &GbtSpec::default()),
            Err(Error::SingleClass)
        ));
    }

    #[test]
    fn width_mismatch_is_rejected() {
        let (x, y) = separable();
        let m = fit_gbt(
            &x,
            &y,
            &GbtSpec {
                n_rounds: 3,
                ..GbtSpec::default()
            },
        )
        .unwrap();
        let narrow = x.select_cols(&[0]);
        assert!(matches!(m.predict_proba(&narrow), Err(Error::WidthMismatch { .. })));
    }

    #[test]
    fn json_roundtrip() {
        let (x, y) = separable();
        let m = fit_gbt(
            &x,
            &y,
            &GbtSpec {
                n_rounds: 5,
                ..GbtSpec::default()
            },
        )
        .unwrap();
        let back = BoostedModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back.predict_proba(&x).unwrap(), m.predict_proba(&x).unwrap());
    }
}

mod loss {
    use xautoml::learners::loss::*;
    #[allow(unused_imports)]
    use xautoml::{
        learners::{fit_gbt, loss::sigmoid, Classifier, GbtSpec},
        matrix::DenseMatrix,
        Error,
    };

    #[test]
    fn hand_evaluated_focal_value() {
        // y = 1, p_t = 0.9  =>  z = ln(0.9 / 0.1)
        let z = (0.9f64 / 0.1).ln();
        let p = FocalLossParams::new(0.25, 2.0).unwrap();
        let t = loss_value_grad_hess(&LossSpec::Focal(p), 1, z);
        let want = -0.25 * 0.1f64.powi(2) * 0.9f64.ln();
        assert!((t.value - want).abs() < 1e-15);
        assert!((want - 2.634e-4).abs() < 1e-7);
    }

    #[test]
    fn confident_samples_cost_nothing() {
        let p = LossSpec::Focal(FocalLossParams::new(0.5, 2.0).unwrap());
        assert!(loss_value(&p, 1, 40.0f64) < 1e-30);
        assert!(loss_value(&p, 0, -40.0f64) < 1e-30);
        let t = loss_value_grad_hess(&p, 1, 40.0f64);
        assert_eq!(t.hess, HESSIAN_FLOOR);
    }

    #[test]
    fn gamma_lowers_easy_sample_share() {
        // ratio of loss at p_t = 0.99 to loss at p_t = 0.6 shrinks as gamma grows
        let ratio = |gamma: f64| {
            let p = LossSpec::Focal(FocalLossParams {
                alpha: 1.0,
                gamma,
                weighting: AlphaWeighting::Positive,
            });
            let easy = loss_value(&p, 1, (0.99f64 / 0.01).ln());
            let hard = loss_value(&p, 1, (0.6f64 / 0.4).ln());
            easy / hard
        };
        let mut last = ratio(0.0);
        for g in [0.5, 1.0, 2.0, 5.0] {
            let r = ratio(g);
            assert!(r < last, "gamma {g}: {r} !< {last}");
            last = r;
        }
    }

    #[test]
    fn works_in_single_precision() {
        let p = LossSpec::Focal(FocalLossParams::new(1.0, 0.0).unwrap());
        let a = loss_value_grad_hess(&p, 0, 0.3f32);
        let b = loss_value_grad_hess(&LossSpec::CrossEntropy, 0, 0.3f32);
        assert!((a.grad - b.grad).abs() < 1e-6);
    }

    #[test]
    fn params_are_validated() {
        assert!(FocalLossParams::new(0.0, 1.0).is_err());
        assert!(FocalLossParams::new(0.5, -1.0).is_err());
        assert!(FocalLossParams::new(1.0, 0.0).is_ok());
        assert!(FocalLossParams::with_weighting(1.0, 0.0, AlphaWeighting::Balanced).is_err());
    }

    #[test]
    fn balanced_weighting_scales_the_normal_class() {
        let pos = FocalLossParams::new(0.75, 2.0).unwrap();
        let bal = FocalLossParams::with_weighting(0.75, 2.0, AlphaWeighting::Balanced).unwrap();
        for z in [-3.0f64, 0.0, 1.5] {
            assert_eq!(focal_unfloored(&pos, 1, z), focal_unfloored(&bal, 1, z));
            let (a, b) = (focal_unfloored(&pos, 0, z), focal_unfloored(&bal, 0, z));
            assert!((b.value - 0.25 * a.value).abs() < 1e-15 && (b.grad - 0.25 * a.grad).abs() < 1e-15);
        }
    }
}
