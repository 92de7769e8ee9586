mod oracle;

use prefloop_core::TaskKind;
use prefloop_metrics::{
    aggregate_evaluation_report_with, aggregate_generation_report, aggregate_generation_report_with, categories,
    krcc, srcc, AnnotationRow, PairedSeries, Prediction, Strategy,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_rows(rng: &mut ChaCha8Rng, n: usize) -> Vec<AnnotationRow> {
    let tasks = [TaskKind::T2I, TaskKind::I2I, TaskKind::T2V];
    (0..n)
        .map(|i| {
            let task = tasks[rng.random_range(0..tasks.len())];
            let cats = categories(task);
            AnnotationRow::new(
                &format!("u{}", rng.random_range(0..4)),
                &format!("m{}", rng.random_range(0..3)),
                task,
                cats[rng.random_range(0..3)],
                &format!("s{i}"),
                f64::from(rng.random_range(0u8..=20)) * 5.0,
            )
            .unwrap()
        })
        .collect()
}

fn as_plain(rows: &[AnnotationRow]) -> Vec<oracle::Row> {
    rows.iter()
        .map(|r| {
            (
                r.user_id.clone(),
                r.method_name.clone(),
                r.task.to_string(),
                r.category.clone(),
                r.sample_id.clone(),
                r.user_score.value(),
            )
        })
        .collect()
}

#[test]
fn generation_cells_match_naive_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let n = rng.random_range(1..60);
        let rows = random_rows(&mut rng, n);
        let expected = oracle::generation_cells_naive(&as_plain(&rows));
        let report = aggregate_generation_report(&rows).unwrap();
        let mut seen = 0;
        for table in &report.tables {
            for row in &table.rows {
                for (cat, value) in table.categories.iter().zip(&row.cells) {
                    let key = (table.task.to_string(), row.method.clone(), cat.clone());
                    match (value, expected.get(&key)) {
                        (Some(v), Some(e)) => {
                            assert!((v - e).abs() < 1e-9, "{key:?}: {v} vs {e}");
                            seen += 1;
                        }
                        (None, None) => {}
                        other => panic!("{key:?}: {other:?}"),
                    }
                }
                let present: Vec<f64> = row.cells.iter().flatten().copied().collect();
                let mean = present.iter().sum::<f64>() / present.len() as f64;
                assert!((row.overall.unwrap() - mean).abs() < 1e-12);
            }
            assert_eq!(table.empty_cells.len(), table.rows.len() * 10 - table.rows.iter().map(|r| r.cells.iter().flatten().count()).sum::<usize>());
        }
        assert_eq!(seen, expected.len());
    }
}

#[test]
fn overall_is_mean_of_ten_category_means() {
    let mut rows = Vec::new();
    for (i, cat) in categories(TaskKind::I2V).iter().enumerate() {
        for user in ["a", "b"] {
            let score = if user == "a" { i as f64 * 10.0 } else { 100.0 - i as f64 * 5.0 };
            rows.push(AnnotationRow::new(user, "m", TaskKind::I2V, cat, &format!("{user}{i}"), score).unwrap());
        }
    }
    let report = aggregate_generation_report(&rows).unwrap();
    let row = &report.tables[0].rows[0];
    let cells: Vec<f64> = row.cells.iter().map(|c| c.unwrap()).collect();
    assert!((row.overall.unwrap() - cells.iter().sum::<f64>() / 10.0).abs() < 1e-12);
    assert!(report.tables[0].empty_cells.is_empty());
}

#[test]
fn evaluation_matches_per_user_bruteforce() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..50 {
        let rows = random_rows(&mut rng, 40);
        let preds: Vec<Prediction> = rows
            .iter()
            .map(|r| Prediction {
                method: "e".into(),
                sample_id: r.sample_id.clone(),
                score: f64::from(rng.random_range(0u8..6)),
            })
            .collect();
        let report = aggregate_evaluation_report_with(&preds, &rows, Strategy::Sequential).unwrap();
        let overall = report.scopes.len() - 1;
        let cell = &report.rows[0].cells[overall];
        let mut sums = (0.0, 0.0, 0);
        for user in ["u0", "u1", "u2", "u3"] {
            let (x, y): (Vec<f64>, Vec<f64>) = rows
                .iter()
                .zip(&preds)
                .filter(|(r, _)| r.user_id == user)
                .map(|(r, p)| (p.score, r.user_score.value()))
                .unzip();
            if PairedSeries::new(x.clone(), y.clone()).is_ok() {
                sums.0 += oracle::srcc_bruteforce(&x, &y);
                sums.1 += oracle::krcc_bruteforce(&x, &y);
                sums.2 += 1;
            }
        }
        match cell.coefficients {
            Some(c) => {
                assert_eq!(cell.users, sums.2);
                assert!((c.srcc - sums.0 / sums.2 as f64).abs() < 1e-12);
                assert!((c.krcc - sums.1 / sums.2 as f64).abs() < 1e-12);
            }
            None => assert_eq!(sums.2, 0),
        }
    }
}

#[test]
fn two_users_average_to_point_eight() {
    // user a: srcc 0.9, user b: srcc 0.7 against predictions 1..5
    let a = [1.0, 3.0, 2.0, 4.0, 5.0];
    let b = [1.0, 2.0, 5.0, 3.0, 4.0];
    let p = [1.0, 2.0, 3.0, 4.0, 5.0];
    let sa = PairedSeries::new(p.to_vec(), a.to_vec()).unwrap();
    let sb = PairedSeries::new(p.to_vec(), b.to_vec()).unwrap();
    assert_eq!(srcc(&sa), 0.9);
    assert!((srcc(&sb) - 0.7).abs() < 1e-12);
    let mut rows = Vec::new();
    let mut preds = Vec::new();
    for i in 0..5 {
        rows.push(AnnotationRow::new("a", "g", TaskKind::T2I, "Single", &format!("a{i}"), a[i] * 10.0).unwrap());
        rows.push(AnnotationRow::new("b", "g", TaskKind::T2I, "Single", &format!("b{i}"), b[i] * 10.0).unwrap());
        preds.push(Prediction { method: "e".into(), sample_id: format!("a{i}"), score: p[i] });
        preds.push(Prediction { method: "e".into(), sample_id: format!("b{i}"), score: p[i] });
    }
    let report = aggregate_evaluation_report_with(&preds, &rows, Strategy::default()).unwrap();
    let c = report.rows[0].cells[0].coefficients.unwrap();
    assert!((c.srcc - 0.8).abs() < 1e-12);
    assert!((c.krcc - (krcc(&sa) + krcc(&sb)) / 2.0).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn aggregates_ignore_row_order_and_strategy(seed in any::<u64>(), n in 1usize..80) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = random_rows(&mut rng, n);
        let preds: Vec<Prediction> = rows
            .iter()
            .enumerate()
            .map(|(i, r)| Prediction { method: format!("e{}", i % 2), sample_id: r.sample_id.clone(), score: (i * 7 % 11) as f64 })
            .collect();
        let mut shuffled = rows.clone();
        shuffled.shuffle(&mut rng);
        let mut shuffled_preds = preds.clone();
        shuffled_preds.shuffle(&mut rng);

        let g = aggregate_generation_report_with(&rows, Strategy::Sequential).unwrap();
        prop_assert_eq!(&g, &aggregate_generation_report_with(&shuffled, Strategy::Parallel).unwrap());
        let e = aggregate_evaluation_report_with(&preds, &rows, Strategy::Sequential).unwrap();
        prop_assert_eq!(&e, &aggregate_evaluation_report_with(&shuffled_preds, &shuffled, Strategy::Parallel).unwrap());
    }
}
