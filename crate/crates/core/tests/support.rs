//! Shared building blocks: matrices, metrics, scalars, seeds and generators.

mod matrix {
    use xautoml::matrix::*;

    #[test]
    fn rows_and_columns_agree() {
        let m = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        assert_eq!(m.col(1), &[2.0, 4.0, 6.0]);
        assert_eq!(m.row(2), vec![5.0, 6.0]);
        assert_eq!(m.select_rows(&[2, 0]).col(0), &[5.0, 1.0]);
        assert_eq!(m.select_cols(&[1]).n_cols(), 1);
        assert!(DenseMatrix::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
        assert_eq!(binary_labels(&[-1, 1, -1]), vec![0, 1, 0]);
    }
}

mod metrics {
    use xautoml::metrics::*;

    #[test]
    fn hand_counted_confusion() {
        let t = [1, 1, 0, 0, 1];
        let p = [1, 0, 1, 0, 1];
        let c = Confusion::of(&t, &p);
        assert_eq!((c.tp, c.fp, c.tn, c.r#fn), (2, 1, 1, 1));
        assert!((c.f1() - 4.0 / 6.0).abs() < 1e-15);
        assert!((c.accuracy() - 0.6).abs() < 1e-15);
        assert_eq!(f1(&[0, 0], &[0, 0]), 0.0);
    }

    #[test]
    fn auc_pairs_oracle() {
        let y = [1, 0, 1, 0, 0];
        let s = [0.9, 0.3, 0.3, 0.1, 0.5];
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for i in 0..5 {
            for j in 0..5 {
                if y[i] == 1 && y[j] == 0 {
                    pairs += 1.0;
                    wins += if s[i] > s[j] {
                        1.0
                    } else if s[i] == s[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        assert!((roc_auc(&y, &s) - wins / pairs).abs() < 1e-12);
    }
}

mod scalar {
    use xautoml::scalar::*;

    fn half<T: Scalar>() -> T {
        T::of(1.0) / T::of_usize(2)
    }

    #[test]
    fn conversions_roundtrip() {
        assert_eq!(half::<f64>(), 0.5);
        assert_eq!(half::<f32>(), 0.5f32);
        assert_eq!(Scalar::as_f64(0.25f32), 0.25);
    }
}

mod seed_mod {
    use xautoml::seed::*;

    #[test]
    fn counters_give_distinct_streams() {
        let a = derive(7, 0);
        let b = derive(7, 1);
        assert_ne!(a, b);
        assert_eq!(a, derive(7, 0));
    }
}

mod synth {
    use xautoml::data_model::FAILURE;
    use xautoml::hpo::Config;
    use xautoml::synth::*;

    #[test]
    fn informative_generator_hits_rate_and_shape() {
        let s = informative(&InformativeSpec {
            n_rows: 3000,
            seed: 1,
            ..InformativeSpec::default()
        })
        .unwrap();
        assert_eq!(s.dataset.n_cols(), 55);
        assert_eq!(s.informative.len(), 5);
        let rate = s.dataset.labels().iter().filter(|&&l| l == FAILURE).count() as f64 / 3000.0;
        assert!((rate - 0.3).abs() < 0.03, "{rate}");
    }

    #[test]
    fn quadratic_is_exact_at_full_budget() {
        let q = MultiFidelityQuadratic::new(2, 27.0, 0.5, 3);
        let mut c = Config::new();
        c.insert("x0".into(), xautoml::hpo::ParamValue::Real(q.centre[0]));
        c.insert("x1".into(), xautoml::hpo::ParamValue::Real(q.centre[1]));
        assert_eq!(q.evaluate(&c, 27.0, 9).unwrap(), 0.0);
        assert_ne!(q.evaluate(&c, 1.0, 9).unwrap(), 0.0);
    }
}
