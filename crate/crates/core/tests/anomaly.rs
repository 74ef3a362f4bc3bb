use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use xautoml::anomaly::{
    abnormal_factor, adaptive_thresholds, classify_levels, detectors::run_detector, fit_predict_portfolio, standardize,
    DetectorPortfolio, DetectorSpec, Level, Thresholds, VoteTally,
};
use xautoml::matrix::DenseMatrix;
use xautoml::seed;

fn blob(rng: &mut rand_chacha::ChaCha8Rng, centre: &[f64], n: usize, sd: f64) -> Vec<Vec<f64>> {
    let g = Normal::new(0.0, sd).unwrap();
    (0..n)
        .map(|_| centre.iter().map(|c| c + g.sample(rng)).collect())
        .collect()
}

#[test]
fn kmeans_marks_the_smaller_blob() {
    let mut rng = seed::rng(1);
    let mut rows = blob(&mut rng, &[0.0, 0.0], 60, 0.3);
    rows.extend(blob(&mut rng, &[8.0, 8.0], 15, 0.3));
    let x = DenseMatrix::from_rows(&rows).unwrap();
    let votes = run_detector(&DetectorSpec::Kmeans { k: 2 }, &standardize(&x), 5).unwrap();
    assert!(votes[..60].iter().all(|&v| v == -1));
    assert!(votes[60..].iter().all(|&v| v == 1));
}

#[test]
fn far_point_collects_majority_of_votes() {
    let mut rng = seed::rng(2);
    let mut rows = blob(&mut rng, &[0.0; 5], 150, 1.0);
    rows.push(vec![12.0, -12.0, 12.0, -12.0, 12.0]);
    let x = DenseMatrix::from_rows(&rows).unwrap();
    let tally = fit_predict_portfolio(&x, &DetectorPortfolio::default()).unwrap();
    assert_eq!(tally.l, 12);
    assert!(tally.p[150] * 2 >= tally.l, "P = {}", tally.p[150]);
    for i in 0..tally.len() {
        assert_eq!(tally.p[i] + tally.n[i], tally.l);
    }
}

#[test]
fn identical_rows_never_split_the_vote() {
    let rows = vec![vec![1.0, 2.0, 3.0]; 40];
    let x = DenseMatrix::from_rows(&rows).unwrap();
    let p = DetectorPortfolio::default();
    let tally = fit_predict_portfolio(&x, &p).unwrap();
    assert_eq!(tally.l as usize + tally.abstained.len(), p.detectors.len());
    assert!(tally.p.iter().all(|&v| v == 0));
    let af = abnormal_factor(&tally, &vec![-1; 40]).unwrap();
    let rep = classify_levels(&af, &vec![-1; 40], &tally, &Thresholds::default()).unwrap();
    assert!(rep.levels.iter().all(|&l| l == rep.levels[0]));
}

#[test]
fn detector_order_does_not_matter() {
    let mut rng = seed::rng(3);
    let mut rows = blob(&mut rng, &[0.0; 4], 80, 1.0);
    rows.extend(blob(&mut rng, &[4.0; 4], 8, 0.5));
    let x = DenseMatrix::from_rows(&rows).unwrap();
    let p = DetectorPortfolio {
        seed: 11,
        ..DetectorPortfolio::default()
    };
    let mut rev = p.clone();
    rev.detectors.reverse();
    let a = fit_predict_portfolio(&x, &p).unwrap();
    let b = fit_predict_portfolio(&x, &rev).unwrap();
    assert_eq!(a.p, b.p);
    assert_eq!(a.n, b.n);
    let labels: Vec<i8> = (0..88).map(|i| if i % 9 == 0 { 1 } else { -1 }).collect();
    let t = Thresholds::default();
    let ra = classify_levels(&abnormal_factor(&a, &labels).unwrap(), &labels, &a, &t).unwrap();
    let rb = classify_levels(&abnormal_factor(&b, &labels).unwrap(), &labels, &b, &t).unwrap();
    assert_eq!(ra, rb);
}

#[test]
fn factor_matches_vote_recount_on_random_tallies() {
    let mut rng = seed::rng(4);
    for _ in 0..1000 {
        let l: u32 = rng.random_range(1..=12);
        // raw votes, recounted independently
        let votes: Vec<i8> = (0..l).map(|_| if rng.random_bool(0.4) { 1 } else { -1 }).collect();
        let y: i8 = if rng.random_bool(0.5) { 1 } else { -1 };
        let tally = VoteTally::from_votes(&votes.iter().map(|&v| vec![v]).collect::<Vec<_>>());
        let p = votes.iter().filter(|&&v| v == 1).count() as f64;
        let n = votes.iter().filter(|&&v| v == -1).count() as f64;
        let want = if n == 0.0 {
            f64::from(y) * l as f64
        } else {
            f64::from(y) * p / n
        };
        assert_eq!(abnormal_factor(&tally, &[y]).unwrap()[0], want);
    }
}

#[test]
fn threshold_boundaries() {
    let eps = 1e-9;
    let t = Thresholds::default();
    let tally = VoteTally {
        p: vec![10, 10, 1, 1, 6],
        n: vec![2, 2, 10, 10, 6],
        l: 12,
        abstained: vec![],
    };
    let labels = [-1, -1, 1, 1, 1];
    let af = [-5.0 - eps, -5.0 + eps, 0.1 - eps, 0.1 + eps, 1.0];
    let rep = classify_levels(&af, &labels, &tally, &t).unwrap();
    assert_eq!(
        rep.levels,
        vec![
            Level::Anomalous,
            Level::Normal,
            Level::Anomalous,
            Level::Normal,
            Level::Undetermined
        ]
    );
    assert_eq!(rep.excluded_rows, vec![0, 2]);
    assert!(classify_levels(
        &af,
        &labels,
        &tally,
        &Thresholds {
            t_normal: 1.0,
            t_failure: 0.1
        }
    )
    .is_err());
}

#[test]
fn adaptive_thresholds_cases() {
    let af: Vec<f64> = (0..101).map(|i| -(i as f64) / 10.0).collect();
    let labels = vec![-1i8; 101];
    let t = adaptive_thresholds(&af, &labels, 0.1).unwrap();
    assert!((t.t_normal - (-9.0)).abs() < 1e-12);
    // no failures at all: default kept
    assert_eq!(t.t_failure, Thresholds::default().t_failure);

    let same = vec![-2.0; 30];
    let t = adaptive_thresholds(&same, &vec![-1; 30], 0.2).unwrap();
    assert_eq!(t.t_normal, -2.0);
    let tally = VoteTally {
        p: vec![4; 30],
        n: vec![2; 30],
        l: 6,
        abstained: vec![],
    };
    let rep = classify_levels(&same, &vec![-1; 30], &tally, &t).unwrap();
    assert!(rep.excluded_rows.is_empty());

    let crafted = [0.3, 4.0, 0.05, 2.0, 0.7, -1.0, -0.2];
    let lab = [1, 1, 1, 1, 1, -1, -1];
    let t = adaptive_thresholds(&crafted, &lab, 0.25).unwrap();
    let mut pos = vec![0.3, 4.0, 0.05, 2.0, 0.7];
    pos.sort_by(f64::total_cmp);
    // position 0.25 * 4 = 1 lands exactly on the second order statistic
    assert_eq!(t.t_failure, pos[1]);
    let mut neg = vec![-1.0, -0.2];
    neg.sort_by(f64::total_cmp);
    assert!((t.t_normal - (neg[0] + 0.25 * (neg[1] - neg[0]))).abs() < 1e-15);
    assert!(adaptive_thresholds(&crafted, &lab, 0.5).is_err());
}

proptest! {
    #[test]
    fn factor_properties(l in 1u32..13, p in 0u32..13, y in prop_oneof![Just(1i8), Just(-1i8)]) {
        let p = p.min(l);
        let n = l - p;
        let tally = VoteTally { p: vec![p], n: vec![n], l, abstained: vec![] };
        let af = abnormal_factor(&tally, &[y]).unwrap()[0];
        if p > 0 && n > 0 {
            prop_assert_eq!(af.signum(), f64::from(y));
        }
        if y == 1 && p < l {
            let more = VoteTally { p: vec![p + 1], n: vec![n - 1], l, abstained: vec![] };
            prop_assert!(abnormal_factor(&more, &[1]).unwrap()[0] > af);
        }
        let rep = classify_levels(&[af], &[y], &tally, &Thresholds::default()).unwrap();
        prop_assert_eq!(rep.levels.len(), 1);
        prop_assert_eq!(rep.levels[0] == Level::Undetermined, p == n);
    }
}

#[test]
fn report_files() {
    let tally = VoteTally {
        p: vec![11, 1, 3],
        n: vec![1, 11, 9],
        l: 12,
        abstained: vec![],
    };
    let labels = [-1, 1, 1];
    let af = abnormal_factor(&tally, &labels).unwrap();
    let rep = classify_levels(&af, &labels, &tally, &Thresholds::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    rep.write(dir.path()).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("anomaly.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "row,label,p,n,a_f,level,severity");
    assert_eq!(csv.lines().count(), 4);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("anomaly_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["anomalous"], 2);
    assert_eq!(rep.severity.iter().flatten().count(), 2);
}

mod detectors {
    use rand::Rng;
    use xautoml::anomaly::detectors::*;
    use xautoml::seed;

    #[test]
    fn c_factor_values() {
        assert_eq!(c_factor(2), 1.0);
        let h = 255f64.ln() + 0.577_215_664_901_532_9;
        assert!((c_factor(256) - (2.0 * h - 2.0 * 255.0 / 256.0)).abs() < 1e-12);
    }

    #[test]
    fn pca_paths_agree() {
        let mut rng = seed::rng(1);
        let tall: Vec<Vec<f64>> = (0..8)
            .map(|_| (0..5).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        // the same data seen with more features than rows, padded by zero columns
        let wide: Vec<Vec<f64>> = tall
            .iter()
            .map(|r| r.iter().copied().chain(std::iter::repeat_n(0.0, 10)).collect())
            .collect();
        let a = pca_recon_error(&tall, 0.7);
        let b = pca_recon_error(&wide, 0.7);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-9, "{x} {y}");
        }
    }

    #[test]
    fn lof_near_one_inside_uniform_grid() {
        let rows: Vec<Vec<f64>> = (0..10)
            .flat_map(|i| (0..10).map(move |j| vec![i as f64, j as f64]))
            .collect();
        let s = lof_scores(&rows, 5);
        assert!((s[55] - 1.0).abs() < 0.2, "{}", s[55]);
    }
}

mod factor {
    use xautoml::anomaly::*;

    #[test]
    fn hand_evaluated_factors() {
        assert_eq!(abnormal_factor_one(1, 9, 3, 12), 3.0);
        assert_eq!(abnormal_factor_one(-1, 3, 9, 12), -1.0 / 3.0);
        assert_eq!(abnormal_factor_one(1, 12, 0, 12), 12.0);
        assert_eq!(abnormal_factor_one(-1, 0, 0, 0), 0.0);
    }

    #[test]
    fn level_examples() {
        let t = Thresholds::default();
        assert_eq!(level_of(-1, -6.0, 6, 1, &t), Level::Anomalous);
        assert_eq!(level_of(1, 0.05, 1, 11, &t), Level::Anomalous);
        assert_eq!(level_of(1, 1.0, 6, 6, &t), Level::Undetermined);
        assert_eq!(level_of(1, 3.0, 9, 3, &t), Level::Normal);
    }

    #[test]
    fn default_portfolio_has_twelve_members() {
        let p = DetectorPortfolio::default();
        assert_eq!(p.detectors.len(), 12);
        p.validate().unwrap();
        let js = serde_json::to_string(&p).unwrap();
        assert_eq!(serde_json::from_str::<DetectorPortfolio>(&js).unwrap(), p);
    }
}
