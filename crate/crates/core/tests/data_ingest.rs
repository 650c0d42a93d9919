mod common;

use std::collections::BTreeSet;

use common::*;
use mthfl::clustering::{cut, hac_build, Linkage};
use mthfl::data::idx::{encode_idx_images, encode_idx_labels, IdxImages};
use mthfl::data::{
    load_feature_file, load_idx, parse_feature_file, parse_idx_images, parse_idx_labels, partition_dataset,
    planted_tasks, synth_tasks, write_feature_file, SynthSpec, TaskSpec, UserPartitionPlan, UserShare,
};
use mthfl::similarity::{similarity_from_features, SimilarityParams};
use mthfl::FeatureMatrix;
use nalgebra::DMatrix;
use proptest::prelude::*;

#[test]
fn idx_files_load_from_disk() {
    let dir = tempfile::tempdir().unwrap();
    let images = IdxImages { rows: 2, cols: 2, pixels: vec![0, 255, 0, 255, 255, 0, 255, 0] };
    std::fs::write(dir.path().join("img"), encode_idx_images(&images)).unwrap();
    std::fs::write(dir.path().join("lbl"), encode_idx_labels(&[3, 0])).unwrap();
    let f = load_idx(dir.path().join("img"), dir.path().join("lbl")).unwrap();
    assert_eq!((f.samples(), f.dim()), (2, 4));
    assert_eq!(f.data().row(0).iter().copied().collect::<Vec<_>>(), vec![0.0, 1.0, 0.0, 1.0]);
    assert_eq!(f.labels().unwrap(), &[4, 1]);

    std::fs::write(dir.path().join("empty"), b"").unwrap();
    let err = load_idx(dir.path().join("empty"), dir.path().join("lbl")).unwrap_err();
    assert!(err.to_string().contains("truncated"), "{err}");
    std::fs::write(dir.path().join("lbl3"), encode_idx_labels(&[1, 2, 3])).unwrap();
    assert!(load_idx(dir.path().join("img"), dir.path().join("lbl3")).is_err());
    assert!(matches!(load_idx(dir.path().join("missing"), dir.path().join("lbl")), Err(mthfl::Error::Io { .. })));
}

#[test]
fn feature_file_round_trips_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("u.fedfeat");
    let data = DMatrix::from_row_slice(2, 3, &[0.5, -1.25, 3.0, 1e-3, 7.0, -0.0]);
    let f = FeatureMatrix::new(0, data, Some(vec![1, 10])).unwrap();
    write_feature_file(&path, &f).unwrap();
    let back = load_feature_file(&path).unwrap();
    for (a, b) in back.data().iter().zip(f.data().iter()) {
        assert_eq!(a.to_bits(), ((*b as f32) as f64).to_bits());
    }
    assert_eq!(back.labels(), f.labels());

    // drop the last row: header says 2 rows, body holds 1
    let bytes = std::fs::read(&path).unwrap();
    let mut short = bytes[..17 + 12].to_vec();
    short.extend_from_slice(&bytes[17 + 24..]);
    assert!(parse_feature_file(&short).unwrap_err().to_string().contains("truncated"));
}

fn matrix_strategy() -> impl Strategy<Value = (usize, usize, Vec<f32>, Option<Vec<u16>>)> {
    (1usize..8, 1usize..8, any::<bool>()).prop_flat_map(|(n, d, labelled)| {
        (
            Just(n),
            Just(d),
            prop::collection::vec(-1e30f32..1e30f32, n * d),
            if labelled {
                prop::collection::vec(1u16..=u16::MAX, n).prop_map(Some).boxed()
            } else {
                Just(None).boxed()
            },
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn feature_file_round_trip((n, d, values, labels) in matrix_strategy()) {
        let data = DMatrix::from_row_iterator(n, d, values.iter().map(|&v| v as f64));
        let f = FeatureMatrix::new(0, data, labels).unwrap();
        let bytes = mthfl::data::encode_feature_file(&f).unwrap();
        prop_assert_eq!(bytes.len(), 17 + n * d * 4 + if f.labels().is_some() { 2 * n } else { 0 });
        let back = parse_feature_file(&bytes).unwrap();
        prop_assert_eq!(&back, &f);
        prop_assert_eq!(mthfl::data::encode_feature_file(&back).unwrap(), bytes);
    }

    #[test]
    fn idx_round_trip(count in 1usize..6, rows in 1usize..5, cols in 1usize..5, seed in any::<u64>()) {
        use rand::Rng;
        let mut r = rng(seed);
        let pixels: Vec<u8> = (0..count * rows * cols).map(|_| r.random()).collect();
        let labels: Vec<u8> = (0..count).map(|_| r.random_range(0..10)).collect();
        let images = IdxImages { rows, cols, pixels: pixels.clone() };
        let bytes = encode_idx_images(&images);
        prop_assert_eq!(parse_idx_images(&bytes).unwrap(), images);
        let f = mthfl::data::parse_idx_pair(&bytes, &encode_idx_labels(&labels)).unwrap();
        let recovered: Vec<u8> = (0..count)
            .flat_map(|i| f.data().row(i).iter().map(|v| (v * 255.0).round() as u8).collect::<Vec<_>>())
            .collect();
        prop_assert_eq!(recovered, pixels);
        prop_assert!(f.labels().unwrap().iter().zip(&labels).all(|(&a, &b)| a == b as u16 + 1));
    }

    #[test]
    fn parsers_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..96)) {
        let _ = parse_feature_file(&bytes);
        let _ = parse_idx_images(&bytes);
        let _ = parse_idx_labels(&bytes);
        let mut tagged = b"FEDFEAT1".to_vec();
        tagged.extend_from_slice(&bytes);
        let _ = parse_feature_file(&tagged);
        let mut idx = vec![0, 0, 8, 3];
        idx.extend_from_slice(&bytes);
        let _ = parse_idx_images(&idx);
    }
}

#[test]
fn synthetic_task_means_match() {
    let spec = SynthSpec {
        users_per_task: vec![4, 4],
        samples_per_user: 250,
        dim: 12,
        separation: 5.0,
        ..Default::default()
    };
    let users = synth_tasks(&spec).unwrap();
    let tasks = planted_tasks(&spec.users_per_task);
    // every coordinate's variance is bounded by the sum of the component variances
    let sigma = (spec.spread.powi(2) + spec.class_offset.powi(2) + spec.noise.powi(2)).sqrt();
    for t in 0..2 {
        let rows: Vec<_> = users.iter().zip(&tasks).filter(|(_, &k)| k == t).map(|(u, _)| u).collect();
        let n = (rows.len() * spec.samples_per_user) as f64;
        for k in 0..spec.dim {
            let mean = rows.iter().map(|u| u.data().column(k).sum()).sum::<f64>() / n;
            let want = if k == t { spec.separation / 2f64.sqrt() } else { 0.0 };
            assert!((mean - want).abs() < 3.0 * sigma / n.sqrt(), "task {t} coord {k}: {mean} vs {want}");
        }
    }
}

#[test]
fn unbalanced_three_task_split() {
    let spec = SynthSpec { users_per_task: vec![5, 3, 2], samples_per_user: 20, dim: 8, ..Default::default() };
    let users = synth_tasks(&spec).unwrap();
    assert_eq!(users.len(), 10);
    assert_eq!(planted_tasks(&spec.users_per_task), vec![0, 0, 0, 0, 0, 1, 1, 1, 2, 2]);
    let labels: Vec<BTreeSet<u16>> = users.iter().map(|u| u.labels().unwrap().iter().copied().collect()).collect();
    assert_eq!(labels[0], BTreeSet::from([1, 2]));
    assert_eq!(labels[5], BTreeSet::from([3, 4]));
    assert_eq!(labels[9], BTreeSet::from([5, 6]));
}

#[test]
fn planted_partition_is_recovered() {
    for seed in 0..10 {
        let spec = SynthSpec { users_per_task: vec![5, 5], dim: 20, separation: 5.0, seed, ..Default::default() };
        let users = synth_tasks(&spec).unwrap();
        let (_, m) = similarity_from_features(&users, &SimilarityParams::default()).unwrap();
        let a = cut(&hac_build(&m, Linkage::Average).unwrap(), 2).unwrap();
        assert_eq!(a.as_slice(), &[0, 0, 0, 0, 0, 1, 1, 1, 1, 1], "seed {seed}");
    }
}

/// Welch's t statistic.
fn welch_t(a: &[f64], b: &[f64]) -> f64 {
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let var = |v: &[f64], m: f64| v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
    let (ma, mb) = (mean(a), mean(b));
    (ma - mb) / (var(a, ma) / a.len() as f64 + var(b, mb) / b.len() as f64).sqrt()
}

#[test]
fn no_structure_without_separation() {
    let (mut within, mut across) = (Vec::new(), Vec::new());
    for seed in 0..8 {
        let spec = SynthSpec {
            users_per_task: vec![5, 5],
            dim: 10,
            separation: 0.0,
            shared_covariance: true,
            seed,
            ..Default::default()
        };
        let users = synth_tasks(&spec).unwrap();
        let tasks = planted_tasks(&spec.users_per_task);
        let (_, m) = similarity_from_features(&users, &SimilarityParams::default()).unwrap();
        for i in 0..10 {
            for j in (i + 1)..10 {
                if tasks[i] == tasks[j] { within.push(m.get(i, j)) } else { across.push(m.get(i, j)) }
            }
        }
    }
    // two-sided, alpha = 0.01, large-sample critical value
    let t = welch_t(&within, &across);
    assert!(t.abs() < 2.576, "t = {t}");
}

/// A pool whose first column is the row index, so partitions can be traced.
fn indexed_pool(per_class: usize, classes: u16) -> FeatureMatrix {
    let n = per_class * classes as usize;
    let data = DMatrix::from_fn(n, 2, |i, j| if j == 0 { i as f64 } else { (i % 7) as f64 });
    let labels = (0..n).map(|i| 1 + (i % classes as usize) as u16).collect();
    FeatureMatrix::new(0, data, Some(labels)).unwrap()
}

fn plan(fraction: f64, seed: u64) -> UserPartitionPlan {
    let tasks = [vec![1u16, 2], vec![3], vec![4]];
    let assignments = (0..6)
        .map(|u| UserShare {
            user_id: u,
            task: TaskSpec::new((u % 3) as usize, tasks[(u % 3) as usize].clone(), fraction).unwrap(),
            sample_count: 100,
        })
        .collect();
    UserPartitionPlan { assignments, seed }
}

#[test]
fn partition_fractions_and_disjointness() {
    let pool = indexed_pool(400, 4);
    for fraction in [0.9, 1.0] {
        let users = partition_dataset(&pool, &plan(fraction, 3)).unwrap();
        let mut seen = BTreeSet::new();
        for (u, user) in users.iter().enumerate() {
            assert_eq!(user.user_id(), u as u32);
            let classes = [vec![1u16, 2], vec![3], vec![4]][u % 3].clone();
            let inside = user.labels().unwrap().iter().filter(|l| classes.contains(l)).count();
            assert_eq!(inside, (fraction * 100.0) as usize);
            for i in 0..user.samples() {
                let row = user.data()[(i, 0)] as usize;
                assert!(seen.insert(row), "row {row} handed out twice");
                assert_eq!(pool.labels().unwrap()[row], user.labels().unwrap()[i]);
            }
        }
    }
}

#[test]
fn partition_is_seeded() {
    let pool = indexed_pool(400, 4);
    assert_eq!(partition_dataset(&pool, &plan(0.9, 5)).unwrap(), partition_dataset(&pool, &plan(0.9, 5)).unwrap());
    assert_ne!(partition_dataset(&pool, &plan(0.9, 5)).unwrap(), partition_dataset(&pool, &plan(0.9, 6)).unwrap());
}

#[test]
fn partition_errors() {
    let pool = indexed_pool(50, 4);
    // six users want 90 in-task samples each from only 50 per class
    assert!(matches!(partition_dataset(&pool, &plan(0.9, 1)), Err(mthfl::Error::Data(_))));
    let mut missing = plan(0.9, 1);
    missing.assignments.truncate(1);
    missing.assignments[0].task = TaskSpec::new(0, [9], 0.9).unwrap();
    assert!(partition_dataset(&pool, &missing).is_err());
    let mut dup = plan(0.9, 1);
    dup.assignments[1].user_id = 0;
    assert!(partition_dataset(&pool, &dup).is_err());
    assert!(TaskSpec::new(0, [1], 0.0).is_err());
    assert!(TaskSpec::new(0, Vec::<u16>::new(), 0.5).is_err());
}
