use std::collections::{BTreeSet, HashSet};

use proptest::prelude::*;
use xautoml::data_model::{Dataset, ProcessDefinition};
use xautoml::feature_factory::functions::*;
use xautoml::feature_factory::operations::*;
use xautoml::feature_factory::*;

// extraction

fn dataset(cols: &[Vec<f64>]) -> Dataset<f64> {
    let n = cols[0].len();
    let labels = (0..n).map(|i| if i % 3 == 0 { 1 } else { -1 }).collect();
    let ids = (0..cols.len()).map(|i| format!("s{i}")).collect();
    Dataset::from_columns(cols, labels, ids).unwrap()
}

fn cfg(functions: Vec<FunctionId>, operations: Vec<OperationId>) -> ExtractConfig {
    ExtractConfig {
        functions,
        operations,
        ..ExtractConfig::default()
    }
}

#[test]
fn diff_with_two_operations_and_raw_series() {
    let d = dataset(&[vec![1.0, 3.0, 2.0, 5.0, 4.0]]);
    let c = ExtractConfig {
        raw_summaries: false,
        ..cfg(vec![FunctionId::Diff], vec![OperationId::Mean, OperationId::Std])
    };
    let proc = ProcessDefinition::single_group(d.column_ids());
    let out = extract_all(&d, &c, &proc, "none").unwrap();
    assert_eq!(out.features.n_cols(), 3);
    assert_eq!(expected_feature_count(1, &c, &[1]), 3);
    let names = out.features.names();
    assert_eq!(
        names,
        vec!["none/s0/raw/series", "none/s0/diff/mean", "none/s0/diff/std"]
    );
    // row 2: context [1,3,2] -> diff [2,-1] -> mean 0.5
    assert_eq!(out.features.column(1)[2], 0.5);
    // row 0 has no difference: sentinel
    assert_eq!(out.features.provenance()[1].sentinels, 1);
}

#[test]
fn empty_function_set_gives_raw_summaries_only() {
    let d = dataset(&[vec![1.0, 2.0, 3.0], vec![3.0, 1.0, 2.0], vec![0.0, 0.0, 1.0]]);
    let c = ExtractConfig {
        include_raw: false,
        ..cfg(vec![], vec![OperationId::Mean])
    };
    let proc = ProcessDefinition::single_group(d.column_ids());
    let out = extract_all(&d, &c, &proc, "mean").unwrap();
    assert_eq!(out.features.n_cols(), 3);
    assert_eq!(out.features.column(0), &[1.0, 1.5, 2.0]);
}

#[test]
fn corp_and_pca_follow_groups() {
    let a: Vec<f64> = (0..12).map(|i| (i as f64 * 0.7).sin()).collect();
    let b: Vec<f64> = a.iter().map(|v| 2.0 * v).collect();
    let c: Vec<f64> = (0..12).map(|i| (i * i % 7) as f64).collect();
    let d = dataset(&[a, b, c]);
    let proc = ProcessDefinition {
        unit_processes: vec![vec!["s0".into(), "s1".into()], vec!["s2".into()]],
        cycles: vec![1, 1],
    };
    let conf = cfg(
        vec![FunctionId::Corp, FunctionId::Pca],
        vec![OperationId::Mean, OperationId::Max],
    );
    let out = extract_all(&d, &conf, &proc, "mean").unwrap();
    assert_eq!(out.features.n_cols(), expected_feature_count(3, &conf, &[2, 1]));
    let corp = out
        .features
        .provenance()
        .iter()
        .position(|p| p.function == Some(FunctionId::Corp))
        .unwrap();
    assert_eq!(out.features.provenance()[corp].sources, vec!["s0", "s1"]);
    assert!((out.features.column(corp)[5] - 1.0).abs() < 1e-12);
}

#[test]
fn rejects_incomplete_data_and_roundtrips_csv() {
    let d = dataset(&[vec![1.0, 2.0, 4.0, 3.0]]);
    let proc = ProcessDefinition::single_group(d.column_ids());
    let out = extract_all(&d, &ExtractConfig::default(), &proc, "mean").unwrap();
    let dir = tempfile::tempdir().unwrap();
    out.features.write(dir.path(), "features", Some(d.labels())).unwrap();
    let (back, labels) = FeatureMatrix::<f64>::read(dir.path(), "features").unwrap();
    assert_eq!(labels.as_deref(), Some(d.labels()));
    assert_eq!(back.provenance(), out.features.provenance());
    for j in 0..back.n_cols() {
        for (x, y) in back.column(j).iter().zip(out.features.column(j)) {
            assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0));
        }
    }
}

#[test]
fn duplicate_provenance_is_rejected() {
    let p = Provenance {
        sources: vec!["a".into()],
        imputer: "mean".into(),
        function: None,
        param: None,
        operation: None,
        sentinels: 0,
    };
    let err = FeatureMatrix::new(1, vec![vec![1.0], vec![2.0]], vec![p.clone(), p]);
    assert!(err.is_err());
}

fn count_by_enumeration(d: &Dataset<f64>, c: &ExtractConfig, proc: &ProcessDefinition) -> usize {
    // direct enumeration of every (source, function, param, operation) tuple
    let funcs: BTreeSet<FunctionId> = c.functions.iter().copied().collect();
    let ops: BTreeSet<OperationId> = c.operations.iter().copied().collect();
    let mut tuples = HashSet::new();
    for id in d.column_ids() {
        if c.include_raw {
            tuples.insert((id.clone(), "raw".to_string(), String::new()));
        }
        if c.raw_summaries {
            for op in &ops {
                tuples.insert((id.clone(), "raw".to_string(), op.name().to_string()));
            }
        }
        for f in &funcs {
            match f {
                FunctionId::Qcd => {
                    tuples.insert((id.clone(), "qcd".to_string(), String::new()));
                }
                FunctionId::Llt => {
                    for s in &c.params.llt_s_values {
                        tuples.insert((id.clone(), format!("llt{s}"), String::new()));
                    }
                }
                FunctionId::Corp | FunctionId::Pca => {}
                f => {
                    for op in &ops {
                        tuples.insert((id.clone(), f.name().to_string(), op.name().to_string()));
                    }
                }
            }
        }
    }
    for (gi, g) in proc.unit_processes.iter().enumerate() {
        if funcs.contains(&FunctionId::Corp) {
            for p in g.windows(2) {
                tuples.insert((format!("{}+{}", p[0], p[1]), "corp".into(), String::new()));
            }
        }
        if funcs.contains(&FunctionId::Pca) && !g.is_empty() {
            for op in &ops {
                tuples.insert((format!("g{gi}"), "pca".into(), op.name().to_string()));
            }
        }
    }
    tuples.len()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn width_matches_closed_form(
        fmask in 0u32..(1 << 16),
        omask in 1u32..(1 << 10),
        include_raw: bool,
        raw_summaries: bool,
        n_cols in 1usize..5,
        split in 0usize..5,
    ) {
        let funcs: Vec<FunctionId> = FunctionId::ALL.iter().enumerate()
            .filter(|(i, _)| fmask & (1 << i) != 0).map(|(_, f)| *f).collect();
        let ops: Vec<OperationId> = OperationId::ALL.iter().enumerate()
            .filter(|(i, _)| omask & (1 << i) != 0).map(|(_, o)| *o).collect();
        let cols: Vec<Vec<f64>> = (0..n_cols)
            .map(|c| (0..9).map(|i| ((i * (c + 2)) % 5) as f64 + c as f64).collect())
            .collect();
        let d = dataset(&cols);
        let ids = d.column_ids().to_vec();
        let cut = split.min(n_cols);
        let mut groups = vec![ids[..cut].to_vec(), ids[cut..].to_vec()];
        groups.retain(|g| !g.is_empty());
        let proc = ProcessDefinition { cycles: vec![1; groups.len()], unit_processes: groups };
        let c = ExtractConfig { include_raw, raw_summaries, ..cfg(funcs, ops) };
        let out = extract_all(&d, &c, &proc, "mean").unwrap();
        let sizes: Vec<usize> = proc.unit_processes.iter().map(Vec::len).collect();
        prop_assert_eq!(out.features.n_cols(), expected_feature_count(n_cols, &c, &sizes));
        prop_assert_eq!(out.features.n_cols(), count_by_enumeration(&d, &c, &proc));
    }
}

// series functions

fn p() -> FunctionParams {
    FunctionParams::default()
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

#[test]
fn sequential_functions() {
    let pct = apply_function(&[100.0, 110.0, 99.0], None, FunctionId::Pct, &p()).unwrap();
    // (110-100)/100*100 and (99-110)/110*100
    assert!(close(pct.series(), &[10.0, -10.0], 1e-12));
    let diff = apply_function(&[3.0, 5.0, 9.0], None, FunctionId::Diff, &p()).unwrap();
    assert_eq!(diff.series(), &[2.0, 4.0]);
    let logr = apply_function(&[1.0, std::f64::consts::E], None, FunctionId::Logr, &p()).unwrap();
    assert!((logr.series()[0] - 1.0).abs() < 1e-15);
    assert!(apply_function(&[1.0], None, FunctionId::Diff, &p()).is_err());
}

#[test]
fn undefined_ratios_become_flagged_zeros() {
    let pct = apply_function(&[0.0, 1.0, 2.0], None, FunctionId::Pct, &p()).unwrap();
    assert_eq!(pct.series(), &[0.0, 100.0]);
    assert_eq!(pct.sentinels, 1);
    let logr = apply_function(&[-1.0, 1.0, 2.0], None, FunctionId::Logr, &p()).unwrap();
    assert_eq!(logr.series()[0], 0.0);
    assert_eq!(logr.sentinels, 1);
}

#[test]
fn cdf_uses_strict_inequality() {
    let xs = [1.0, 2.0, 3.0, 4.0];
    assert_eq!(empirical_cdf(&xs, 3.0), 0.5);
    let out = apply_function(&xs, None, FunctionId::Cdf, &p()).unwrap();
    assert_eq!(out.series(), &[0.0, 0.25, 0.5, 0.75]);
}

#[test]
fn qcd_on_one_to_five() {
    let out = apply_function(&[1.0f64, 2.0, 3.0, 4.0, 5.0], None, FunctionId::Qcd, &p()).unwrap();
    assert!((out.series()[0] - 1.0 / 3.0).abs() < 1e-15);
}

#[test]
fn rolling_mean_with_min_periods_one() {
    let out = apply_function(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], None, FunctionId::Win5Mean, &p()).unwrap();
    assert_eq!(out.series()[0], 1.0);
    assert_eq!(out.series()[5], 4.0);
    let mx = apply_function(&[1.0, 7.0, 3.0], None, FunctionId::Win5Max, &p()).unwrap();
    assert_eq!(mx.series(), &[1.0, 7.0, 7.0]);
    let sd = apply_function(&[1.0, 3.0], None, FunctionId::Win5Std, &p()).unwrap();
    assert_eq!(sd.sentinels, 1);
    assert!((sd.series()[1] - 2f64.sqrt()).abs() < 1e-15);
}

#[test]
fn fft_of_constant_has_no_energy() {
    let out = apply_function(&[3.0f64; 8], None, FunctionId::Fft, &p()).unwrap();
    assert_eq!(out.series().len(), 4);
    assert!(out.series().iter().all(|&m| m.abs() < 1e-12));
    let odd = apply_function(&[1.0, 2.0, 0.0, 4.0, 5.0], None, FunctionId::FftFilter, &p()).unwrap();
    assert_eq!(odd.series().len(), 3);
}

#[test]
fn llt_of_decaying_exponential() {
    // 1000 samples of e^-t on [0, 10); closed form 1/(s + 1) at s = 1
    let dt = 0.01;
    let xs: Vec<f64> = (0..1000).map(|i| (-(i as f64) * dt).exp()).collect();
    let params = FunctionParams {
        llt_s_values: vec![1.0],
        llt_dt: dt,
        ..p()
    };
    let out = apply_function(&xs, None, FunctionId::Llt, &params).unwrap();
    let got = out.columns[0][0];
    assert!(((got - 0.5) / 0.5).abs() < 1e-2, "{got}");
    assert_eq!(
        apply_function(&xs, None, FunctionId::Llt, &p()).unwrap().columns.len(),
        3
    );
}

#[test]
fn correlation_edge_cases() {
    let x = [1.0f64, 4.0, 2.0, 8.0];
    let neg: Vec<f64> = x.iter().map(|v| -v).collect();
    let self_corr = apply_function(&x, Some(&x), FunctionId::Corp, &p()).unwrap();
    assert!((self_corr.series()[0] - 1.0).abs() < 1e-15);
    let anti = apply_function(&x, Some(&neg), FunctionId::Corp, &p()).unwrap();
    assert!((anti.series()[0] + 1.0).abs() < 1e-15);
    let flat = apply_function(&x, Some(&[2.0; 4]), FunctionId::Corp, &p()).unwrap();
    assert_eq!(flat.series()[0], 0.0);
    assert!(apply_function(&x, None, FunctionId::Corp, &p()).is_err());
}

#[test]
fn pca_on_rank_one_data() {
    let a = [1.0, 2.0, 3.0, 4.0, 5.0];
    let b: Vec<f64> = a.iter().map(|v| 2.0 * v + 1.0).collect();
    let params = FunctionParams {
        pca_threshold: 0.99,
        ..p()
    };
    let out = apply_function(&a, Some(&b), FunctionId::Pca, &params).unwrap();
    assert_eq!(out.columns.len(), 1);
    // projection preserves the centered norm of rank-1 data
    let norm: f64 = out.columns[0].iter().map(|v| v * v).sum();
    let want: f64 = a
        .iter()
        .zip(&b)
        .map(|(x, y)| (x - 3.0f64).powi(2) + (y - 7.0f64).powi(2))
        .sum();
    assert!((norm - want).abs() < 1e-9);
}

#[test]
fn params_validation() {
    assert!(p().validate().is_ok());
    assert!(FunctionParams { min_periods: 6, ..p() }.validate().is_err());
    assert!(FunctionParams {
        llt_s_values: vec![0.0],
        ..p()
    }
    .validate()
    .is_err());
    assert!(FunctionParams {
        pca_threshold: 0.0,
        ..p()
    }
    .validate()
    .is_err());
}

proptest! {
    #[test]
    fn parseval_identity(xs in prop::collection::vec(-50.0f64..50.0, 1..64)) {
        let mags = full_spectrum(&xs);
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let freq: f64 = mags.iter().map(|v| v * v).sum::<f64>() / n;
        let time: f64 = xs.iter().map(|v| (v - m).powi(2)).sum();
        prop_assert!((freq - time).abs() <= 1e-9 * time.max(1e-12), "{freq} vs {time}");
    }

    #[test]
    fn cdf_is_bounded_and_monotone(xs in prop::collection::vec(-10.0f64..10.0, 1..40)) {
        let out = apply_function(&xs, None, FunctionId::Cdf, &p()).unwrap().columns.remove(0);
        for (i, &a) in xs.iter().enumerate() {
            prop_assert!((0.0..1.0).contains(&out[i]));
            for (j, &b) in xs.iter().enumerate() {
                if a <= b {
                    prop_assert!(out[i] <= out[j]);
                }
            }
        }
    }
}

// operations

#[test]
fn basic_values() {
    assert_eq!(apply_operation(&[1.0, 2.0, 3.0], OperationId::Mean), Some(2.0));
    let mad = apply_operation(&[1.0f64, 2.0, 3.0], OperationId::Mad).unwrap();
    assert!((mad - 2.0 / 3.0).abs() < 1e-15);
    assert_eq!(apply_operation(&[4.0, 1.0, 3.0, 2.0], OperationId::Q2), Some(2.5));
    assert_eq!(apply_operation(&[1.0, 2.0, 3.0, 4.0, 5.0], OperationId::Q1), Some(2.0));
    assert_eq!(apply_operation(&[1.0, 2.0, 3.0, 4.0, 5.0], OperationId::Q3), Some(4.0));
    assert_eq!(apply_operation(&[3.0f32, -1.0], OperationId::Min), Some(-1.0));
}

#[test]
fn short_series_give_none() {
    assert_eq!(apply_operation(&[1.0], OperationId::Std), None);
    assert_eq!(apply_operation(&[1.0, 2.0], OperationId::Skew), None);
    assert_eq!(apply_operation(&[1.0, 2.0, 3.0], OperationId::Kurt), None);
    assert_eq!(apply_operation::<f64>(&[], OperationId::Mean), None);
}

#[test]
fn skew_of_symmetric_series_is_zero() {
    let s = apply_operation(&[-3.0f64, -1.0, 0.0, 1.0, 3.0], OperationId::Skew).unwrap();
    assert!(s.abs() < 1e-12);
}

#[test]
fn skew_and_kurt_hand_values() {
    // [1, 2, 3, 10]: mean 4, m2 = 12.5, m3 = 45, m4 = 710.5 / 4 ... evaluated by hand:
    // deviations -3,-2,-1,6 -> sum d^2 = 50, sum d^3 = -27-8-1+216 = 180, sum d^4 = 81+16+1+1296 = 1394
    let xs = [1.0, 2.0, 3.0, 10.0];
    let (n, m2, m3, m4): (f64, f64, f64, f64) = (4.0, 50.0 / 4.0, 180.0 / 4.0, 1394.0 / 4.0);
    let g1 = m3 / m2.powf(1.5);
    let want_skew = (n * (n - 1.0)).sqrt() / (n - 2.0) * g1;
    let g2 = m4 / (m2 * m2) - 3.0;
    let want_kurt = ((n + 1.0) * g2 + 6.0) * (n - 1.0) / ((n - 2.0) * (n - 3.0));
    assert!((skew(&xs) - want_skew).abs() < 1e-12);
    assert!((kurt(&xs) - want_kurt).abs() < 1e-12);
}

proptest! {
    #[test]
    fn dispersion_is_shift_invariant(
        xs in prop::collection::vec(-100.0f64..100.0, 4..40),
        shift in -1e3f64..1e3,
    ) {
        let shifted: Vec<f64> = xs.iter().map(|x| x + shift).collect();
        for op in [OperationId::Std, OperationId::Mad, OperationId::Skew, OperationId::Kurt] {
            let a = apply_operation(&xs, op).unwrap();
            let b = apply_operation(&shifted, op).unwrap();
            prop_assert!((a - b).abs() <= 1e-6 * (1.0 + a.abs()), "{op}: {a} vs {b}");
        }
        let ma = apply_operation(&xs, OperationId::Mean).unwrap();
        let mb = apply_operation(&shifted, OperationId::Mean).unwrap();
        prop_assert!((mb - ma - shift).abs() < 1e-9 * (1.0 + shift.abs() + ma.abs()));
    }

    #[test]
    fn quartiles_are_ordered(xs in prop::collection::vec(-1e3f64..1e3, 1..50)) {
        let q1 = apply_operation(&xs, OperationId::Q1).unwrap();
        let q2 = apply_operation(&xs, OperationId::Q2).unwrap();
        let q3 = apply_operation(&xs, OperationId::Q3).unwrap();
        let lo = apply_operation(&xs, OperationId::Min).unwrap();
        let hi = apply_operation(&xs, OperationId::Max).unwrap();
        prop_assert!(lo <= q1 && q1 <= q2 && q2 <= q3 && q3 <= hi);
    }
}
