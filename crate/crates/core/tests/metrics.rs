use proptest::prelude::*;

use qcnn_core::metrics::{fmt_num, pcc, predictions_csv, read_predictions_csv, rmsd, MeanStd, PredictionRow};

fn vecs(n: std::ops::Range<usize>) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    n.prop_flat_map(|len| (prop::collection::vec(-20.0f64..20.0, len), prop::collection::vec(-20.0f64..20.0, len)))
}

proptest! {
    #[test]
    fn pcc_affine_invariance((x, y) in vecs(3..40), a in 0.1f64..10.0, b in -50.0f64..50.0) {
        let base = pcc(&x, &y).unwrap();
        let pos: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        let neg: Vec<f64> = x.iter().map(|v| -a * v + b).collect();
        prop_assert!((pcc(&pos, &y).unwrap() - base).abs() <= 1e-12);
        prop_assert!((pcc(&neg, &y).unwrap() + base).abs() <= 1e-12);
    }

    #[test]
    fn rmsd_triangle((x, y) in vecs(1..40), shift in prop::collection::vec(-5.0f64..5.0, 40)) {
        let z: Vec<f64> = y.iter().zip(&shift).map(|(a, b)| a + b).collect();
        prop_assert!(rmsd(&x, &z).unwrap() <= rmsd(&x, &y).unwrap() + rmsd(&y, &z).unwrap() + 1e-12);
    }

    #[test]
    fn csv_round_trip_is_lossless(
        rows in prop::collection::vec(("[a-z,\" ]{1,12}", any::<f64>(), any::<f64>()), 0..20)
    ) {
        let rows: Vec<PredictionRow> = rows
            .into_iter()
            .filter(|(_, a, b)| a.is_finite() && b.is_finite())
            .map(|(id, a, b)| PredictionRow { id, dg_true: a, dg_pred: b })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        std::fs::write(&path, predictions_csv(&rows)).unwrap();
        let back = read_predictions_csv(&path).unwrap();
        prop_assert_eq!(back, rows);
    }

    #[test]
    fn number_format_round_trips(v in any::<f64>()) {
        prop_assume!(v.is_finite());
        prop_assert_eq!(fmt_num(v).parse::<f64>().unwrap(), v);
    }
}

#[test]
fn population_std() {
    let m = MeanStd::of(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]).unwrap();
    assert_eq!((m.mean, m.std), (5.0, 2.0));
    assert_eq!(format!("{m:.2}"), "5.00 ± 2.00");
}
