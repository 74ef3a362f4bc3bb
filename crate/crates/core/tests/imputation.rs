use xautoml::data_model::Dataset;
use xautoml::imputation::*;

fn dataset(rows: &[&[Option<f64>]]) -> Dataset<f64> {
    let n_cols = rows[0].len();
    let mut values = Vec::new();
    let mut missing = Vec::new();
    for r in rows {
        for v in r.iter() {
            values.push(v.unwrap_or(f64::NAN));
            missing.push(v.is_none());
        }
    }
    let labels = (0..rows.len()).map(|i| if i % 2 == 0 { -1 } else { 1 }).collect();
    let ids = (0..n_cols).map(|i| format!("c{i}")).collect();
    Dataset::new(n_cols, values, missing, labels, ids, None).unwrap()
}

#[test]
fn mean_fills_midpoint() {
    let d = dataset(&[&[Some(1.0)], &[None], &[Some(3.0)]]);
    let out = fit_impute(&d, &ImputerSpec::new(ImputerMethod::Mean)).unwrap();
    assert_eq!(out.dataset.column(0), vec![1.0, 2.0, 3.0]);
    assert!(out.dataset.is_complete());
}

#[test]
fn median_matches_sort_oracle() {
    let d = dataset(&[&[Some(1.0)], &[None], &[Some(100.0)], &[Some(3.0)]]);
    let out = fit_impute(&d, &ImputerSpec::new(ImputerMethod::Median)).unwrap();
    let mut obs = vec![1.0, 100.0, 3.0];
    obs.sort_by(f64::total_cmp);
    assert_eq!(out.dataset.get(1, 0), Some(obs[1]));
    assert_eq!(obs[1], 3.0);
}

#[test]
fn most_frequent_prefers_smallest_on_ties() {
    let d = dataset(&[&[Some(4.0)], &[Some(2.0)], &[None], &[Some(4.0)], &[Some(2.0)]]);
    let out = fit_impute(&d, &ImputerSpec::new(ImputerMethod::MostFrequent)).unwrap();
    assert_eq!(out.dataset.get(2, 0), Some(2.0));
}

#[test]
fn knn_single_neighbour() {
    let d = dataset(&[&[Some(0.0), None], &[Some(0.0), Some(5.0)], &[Some(9.0), Some(7.0)]]);
    let out = fit_impute(&d, &ImputerSpec::knn(1)).unwrap();
    // exhaustive distances from row 0 over the shared first dimension
    let dists = [(0.0f64 - 0.0).abs(), (0.0f64 - 9.0).abs()];
    assert!(dists[0] < dists[1]);
    assert_eq!(out.dataset.get(0, 1), Some(5.0));
}

#[test]
fn knn_without_shared_dims_falls_back_to_mean() {
    let d = dataset(&[&[None, Some(1.0)], &[Some(2.0), None], &[Some(4.0), None]]);
    let out = fit_impute(&d, &ImputerSpec::knn(2)).unwrap();
    assert_eq!(out.dataset.get(0, 0), Some(3.0));
    assert_eq!(out.knn_fallbacks, 3);
}

#[test]
fn all_missing_column_is_dropped() {
    let d = dataset(&[&[Some(1.0), None], &[Some(2.0), None]]);
    let out = fit_impute(&d, &ImputerSpec::default()).unwrap();
    assert_eq!(out.dataset.n_cols(), 1);
    assert_eq!(out.dropped[0].column_id, "c1");
    assert!(fit_impute(&d, &ImputerSpec::knn(0)).is_err());
}
