use udplab::analysis::{grid_map, margin_dataset, margin_point, oscillation_map, GridRange, MarginSearch};
use udplab::data::{generate, LabeledSet, SynthKind, SynthSpec};
use udplab::linalg::Matrix;
use udplab::nnet::{Activation, Layer, MlpModel};
use udplab::objectives::{init_ensemble, train, TrainConfig};
use udplab::Ensemble;

fn affine(w: [f64; 2], b: f64) -> Ensemble {
    let mut layer = Layer::zeros(2, 2);
    layer.weights = Matrix::from_rows(&[vec![w[0], w[1]], vec![-w[0], -w[1]]]);
    layer.bias = vec![b, -b];
    Ensemble::single(MlpModel::from_layers(vec![layer], Activation::Identity, 0).unwrap())
}

#[test]
fn linear_margin_matches_the_point_to_line_distance() {
    let ens = affine([0.6, 0.8], -0.1);
    let search = MarginSearch::default();
    for x in [[0.5, 0.5], [-0.3, 0.2], [1.0, -0.4]] {
        let exact = (0.6 * x[0] + 0.8 * x[1] - 0.1f64).abs();
        let m = margin_point(&ens, &x, &search).unwrap();
        assert!(!m.censored);
        assert!(m.margin >= exact - 1e-4 && m.margin <= exact + 5e-3, "{x:?}: {} vs {exact}", m.margin);
    }
}

/// Flood-search oracle at resolution 1e-3 around points of a net trained on NC.
#[test]
fn margin_search_matches_a_dense_grid_oracle() {
    let data = generate(&SynthSpec::new(SynthKind::narrow_corridor(), 6)).unwrap();
    let ens = init_ensemble(&[2, 16, 16, 2], 1, 0, 21).unwrap();
    let (ens, _) = train(ens, &data, None, &TrainConfig::standard(150, 32, 0.01, 2)).unwrap();
    let search = MarginSearch::default();
    let h = 1e-3;
    for i in [0, 1, 40, 90] {
        let x = data.point(i);
        let class = ens.predict(x).unwrap();
        let m = margin_point(&ens, x, &search).unwrap();
        assert!(!m.censored);
        let reach = ((m.margin + 0.01) / h).ceil() as i64;
        let mut oracle = f64::INFINITY;
        for a in -reach..=reach {
            for b in -reach..=reach {
                let (dx, dy) = (a as f64 * h, b as f64 * h);
                let r = dx.hypot(dy);
                if r < oracle && ens.predict(&[x[0] + dx, x[1] + dy]).unwrap() != class {
                    oracle = r;
                }
            }
        }
        assert!((m.margin - oracle).abs() <= 2e-3, "point {i}: {} vs {oracle}", m.margin);
    }
}

#[test]
fn dataset_margins_report_min_and_max() {
    let ens = affine([1.0, 0.0], 0.0);
    let data = LabeledSet::from_points(vec![vec![-0.2, 0.0], vec![0.5, 0.3], vec![0.1, 0.0]], vec![1, 0, 1], 2).unwrap();
    let r = margin_dataset(&ens, &data, &MarginSearch::default()).unwrap();
    assert_eq!((r.min_margin, r.binding_index), (0.0, 2));
    assert!((r.margins[0] - 0.2).abs() < 5e-3);
    assert!((r.max_margin - 0.5).abs() < 5e-3);
    assert_eq!(r.misclassified, vec![false, false, true]);
    assert_eq!(r.misclassified_count(), 1);
}

#[test]
fn vertical_boundary_is_detected() {
    let range = GridRange::new((-1.0, 1.0), (-1.0, 1.0), 40, 40).unwrap();
    let vertical = grid_map(&affine([1.0, 0.0], -0.3), &range).unwrap();
    assert_eq!(vertical.vertical_fraction(0.1), Some(1.0));
    let diagonal = grid_map(&affine([1.0, 1.0], 0.0), &range).unwrap();
    assert!(diagonal.vertical_fraction(0.1).unwrap() < 0.5);
}

#[test]
fn oscillation_counts_flips_between_checkpoints() {
    let range = GridRange::new((-1.0, 1.0), (-1.0, 1.0), 10, 10).unwrap();
    let a = affine([1.0, 0.0], 0.0);
    let b = affine([-1.0, 0.0], 0.0);
    let map = oscillation_map(&[a.clone(), b, a.clone()], &range).unwrap();
    assert_eq!(map.total(), 2 * 100);
    assert_eq!(oscillation_map(&[a.clone(), a.clone()], &range).unwrap().total(), 0);
    assert!(oscillation_map(&[a], &range).is_err());
}
