use vwskill_core::data::{
    build_down_movement_dataset, daily_percentage_change, split_by_fraction, Dataset,
};
use vwskill_core::ensemble::{SnapshotMatrix, Split};
use vwskill_core::synthetic::{synthetic_prices, MarketConfig};
use vwskill_core::ProbabilitySeries;

fn prices(days: usize, seed: u64) -> vwskill_core::data::PriceSeries {
    let cfg = MarketConfig {
        days,
        ..MarketConfig::default()
    };
    synthetic_prices(&cfg, seed).unwrap()
}

#[test]
fn down_labels_follow_next_day_change() {
    let p = prices(300, 3);
    let changes = daily_percentage_change(&p).unwrap();
    let data = build_down_movement_dataset(&p, 5, -1.0).unwrap();
    assert!(!data.is_empty());
    for (i, &day) in data.target_index.iter().enumerate() {
        // `day` is the predicted day; its change sits at `day - 1` and the
        // row is stamped with the last observed day
        assert_eq!(data.labels.get(i), Some(changes[day - 1] < -1.0), "row {i}");
        assert_eq!(data.timestamps[i], p.dates()[day - 1]);
    }
}

#[test]
fn dataset_csv_round_trip() {
    let data = build_down_movement_dataset(&prices(120, 4), 3, -1.0).unwrap();
    let mut buf = Vec::new();
    data.write_csv(&mut buf).unwrap();
    let back = Dataset::read_csv(buf.as_slice()).unwrap();
    assert_eq!(back.features, data.features);
    assert_eq!(back.labels, data.labels);
    assert_eq!(back.feature_names, data.feature_names);
    assert_eq!(back.target_index, data.target_index);
    assert_eq!(back.timestamps, data.timestamps);
}

#[test]
fn splits_are_contiguous_and_ordered() {
    let data = build_down_movement_dataset(&prices(200, 5), 5, -1.0).unwrap();
    let s = split_by_fraction(data.len(), 0.6, 0.8).unwrap();
    assert_eq!(s.train.start, 0);
    assert_eq!(s.train.end, s.valid.start);
    assert_eq!(s.valid.end, s.test.start);
    assert_eq!(s.test.end, data.len());
    let train = data.slice(s.train).unwrap();
    let test = data.slice(s.test).unwrap();
    assert!(train.timestamps.last() < test.timestamps.first());
}

#[test]
fn snapshot_matrix_round_trip() {
    let rows = (1..=3)
        .map(|e| {
            let probs = (0..7).map(|i| ((i * e) % 10) as f64 / 10.0 + 0.01).collect();
            (e, ProbabilitySeries::new(probs).unwrap())
        })
        .collect();
    let m = SnapshotMatrix::new(Split::Valid, rows).unwrap();
    let mut buf = Vec::new();
    m.write_csv(&mut buf).unwrap();
    let back = SnapshotMatrix::read_csv(buf.as_slice()).unwrap();
    assert_eq!(back, m);
}
