use udplab::data::synth::{corridor_side, narrow_corridor_layout};
use udplab::data::{generate, opposite_class_histogram, LabeledSet, SynthKind, SynthSpec};

#[test]
fn corridor_gap_grows_along_the_corridor() {
    let spec = SynthSpec::new(SynthKind::narrow_corridor(), 4);
    let layout = narrow_corridor_layout(&spec).unwrap();
    assert_eq!(layout.len(), 2 * SynthKind::narrow_corridor().default_count());
    for p in &layout {
        assert_eq!(corridor_side(&p.point), p.label);
        assert!((0.0..=1.0).contains(&p.position));
    }
    let narrow: Vec<f64> = layout.iter().filter(|p| p.position < 0.25).map(|p| p.gap).collect();
    let wide: Vec<f64> = layout.iter().filter(|p| p.position > 0.75).map(|p| p.gap).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!(mean(&wide) > 2.0 * mean(&narrow));
    let min_gap = layout.iter().map(|p| p.gap).fold(f64::INFINITY, f64::min);
    assert!(min_gap >= 0.1 - 1e-9, "{min_gap}");
}

#[test]
fn generators_are_seeded() {
    for kind in [SynthKind::narrow_corridor(), SynthKind::lms5(), SynthKind::two_distance()] {
        let a = generate(&SynthSpec::new(kind, 1).with_noise(0.01)).unwrap();
        let b = generate(&SynthSpec::new(kind, 1).with_noise(0.01)).unwrap();
        let c = generate(&SynthSpec::new(kind, 2).with_noise(0.01)).unwrap();
        assert_eq!(a, b, "{}", kind.name());
        assert_ne!(a, c, "{}", kind.name());
        assert_eq!(a.classes_present(), 2);
    }
}

#[test]
fn noiseless_gaussians_sit_on_their_means() {
    let data = generate(&SynthSpec::new(SynthKind::gauss1d(), 1)).unwrap();
    for (x, y) in data.iter() {
        assert_eq!(x[0], if y == 0 { -1.0 } else { 1.0 });
    }
}

#[test]
fn lms5_is_linearly_separable_along_x() {
    let data = generate(&SynthSpec::new(SynthKind::lms5(), 3)).unwrap();
    let m_lin = 0.05;
    for (x, y) in data.iter() {
        if y == 0 {
            assert!(x[0] <= -m_lin + 1e-12, "{x:?}")
        } else {
            assert!(x[0] >= m_lin - 1e-12, "{x:?}")
        }
    }
}

#[test]
fn histogram_counts_every_sample() {
    let data = LabeledSet::from_points(vec![vec![0.0], vec![1.0], vec![3.0], vec![3.5]], vec![0, 1, 0, 1], 2).unwrap();
    let h = opposite_class_histogram(&data, 4).unwrap();
    assert_eq!(h.distances, vec![1.0, 1.0, 0.5, 0.5]);
    assert_eq!(h.counts.iter().sum::<usize>(), 4);
    assert_eq!(h.edges.len(), 5);
    assert!(opposite_class_histogram(&data, 0).is_err());
}

#[test]
fn csv_round_trips() {
    let data = generate(&SynthSpec::new(SynthKind::two_distance(), 8)).unwrap();
    assert_eq!(LabeledSet::from_csv(&data.to_csv(), Some(2)).unwrap(), data);
}
