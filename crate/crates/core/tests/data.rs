use steer_core::mc::{binned_statistics, uniform_edges, McEstimate};
use steer_core::synth::*;
use steer_core::Error;

fn small_gen(tracks: usize, samples: usize, seed: u64) -> GeneratorConfig {
    GeneratorConfig {
        seed,
        tracks,
        samples_per_track: samples,
        track: TrackConfig::default(),
        image: ImageConfig {
            height: 8,
            width: 12,
            ..ImageConfig::default()
        },
    }
}

fn bytes(ds: &Dataset) -> Vec<u8> {
    let mut buf = Vec::new();
    write_dataset(&mut buf, ds).unwrap();
    buf
}

#[test]
fn dataset_round_trip_is_bit_exact() {
    let ds = small_gen(3, 7, 2).generate().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.bin");
    save_dataset(&path, &ds).unwrap();
    let back = load_dataset(&path).unwrap();
    assert_eq!(back.manifest, ds.manifest);
    assert_eq!(back.frames.len(), ds.frames.len());
    for (a, b) in back.frames.iter().zip(&ds.frames) {
        assert_eq!(a.label.to_bits(), b.label.to_bits());
        assert_eq!((a.pose_id, a.s.to_bits()), (b.pose_id, b.s.to_bits()));
        assert!(a.image.data().iter().zip(b.image.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

#[test]
fn truncated_dataset_reports_offset() {
    let buf = bytes(&small_gen(1, 4, 0).generate().unwrap());
    for cut in [4, 20, buf.len() / 2, buf.len() - 1] {
        match read_dataset(&mut &buf[..cut]) {
            Err(Error::Corrupt { offset, .. }) => assert!(offset <= cut as u64),
            other => panic!("cut {cut}: expected Corrupt, got {other:?}"),
        }
    }
    let mut extra = buf.clone();
    extra.push(0);
    assert!(matches!(read_dataset(&mut extra.as_slice()), Err(Error::Corrupt { .. })));
}

#[test]
fn dataset_version_mismatch() {
    let mut buf = bytes(&small_gen(1, 2, 0).generate().unwrap());
    buf[8..12].copy_from_slice(&7u32.to_le_bytes());
    assert!(matches!(
        read_dataset(&mut buf.as_slice()),
        Err(Error::VersionMismatch { found: 7, expected: 1 })
    ));
}

#[test]
fn tampered_label_breaks_manifest_consistency() {
    let ds = small_gen(1, 3, 0).generate().unwrap();
    let mut buf = bytes(&ds);
    let pixels = 8 * 12;
    let record = 8 * (3 + pixels);
    let first = buf.len() - 3 * record;
    buf[first..first + 8].copy_from_slice(&0.123f64.to_le_bytes());
    assert!(matches!(read_dataset(&mut buf.as_slice()), Err(Error::Corrupt { .. })));
}

#[test]
fn labels_match_track_curvature_and_bounds() {
    let gen = small_gen(4, 25, 9);
    let tracks = gen.generate_tracks().unwrap();
    let ds = gen.generate().unwrap();
    assert_eq!(ds.len(), 100);
    assert!(ds.manifest.consistent_with(&ds.frames));
    for f in &ds.frames {
        let track = &tracks[f.pose_id as usize / 25];
        assert_eq!(f.label, track.curvature_at(f.s));
        assert!(f.label.abs() <= gen.track.kappa_max);
        assert!(f.image.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn one_track_n_records() {
    let ds = small_gen(1, 13, 1).generate().unwrap();
    assert_eq!(ds.len(), 13);
    assert!(small_gen(1, 0, 1).generate().is_err());
}

/// 10^4 records: near-straight labels dominate sharp turns.
#[test]
fn label_density_is_concentrated_near_zero() {
    let ds = small_gen(500, 20, 3).generate().unwrap();
    assert_eq!(ds.len(), 10_000);
    let near = ds.frames.iter().filter(|f| f.label.abs() < 0.02).count();
    let sharp = ds.frames.iter().filter(|f| f.label.abs() > 0.1).count();
    assert!(sharp > 0);
    assert!(near > 5 * sharp, "near {near}, sharp {sharp}");
}

/// Among curved records, |kappa| = kappa_max * u^4 with u uniform, so
/// P(|kappa| <= x) = (x / kappa_max)^(1/4). Chi-squared with 3 degrees
/// of freedom against the 0.1% critical value.
#[test]
fn curved_label_distribution_chi_squared() {
    let gen = small_gen(2000, 5, 21);
    let ds = gen.generate().unwrap();
    let curved: Vec<f64> = ds.frames.iter().map(|f| f.label.abs()).filter(|k| *k > 0.0).collect();
    let kmax = gen.track.kappa_max;
    let cdf = |x: f64| (x / kmax).powf(0.25);
    let edges = [0.0, 0.02, 0.05, 0.1, kmax + 1e-12];
    let n = curved.len() as f64;
    let mut chi2 = 0.0;
    for w in edges.windows(2) {
        let observed = curved.iter().filter(|&&k| k >= w[0] && k < w[1]).count() as f64;
        let expected = n * (cdf(w[1].min(kmax)) - cdf(w[0]));
        chi2 += (observed - expected).powi(2) / expected;
    }
    assert!(chi2 < 16.27, "chi2 = {chi2} over {n} curved records");
}

#[test]
fn split_is_deterministic_and_disjoint() {
    let (a, b) = split_indices(101, 0.3, 5).unwrap();
    let (c, d) = split_indices(101, 0.3, 5).unwrap();
    assert_eq!((a.clone(), b.clone()), (c, d));
    let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
    all.sort_unstable();
    assert_eq!(all, (0..101).collect::<Vec<_>>());
    assert_eq!(b.len(), 30);
}

/// Uniform labels on [-1, 1] in 4 equal bins: each count within three
/// multinomial standard deviations of N/4.
#[test]
fn binned_counts_match_multinomial() {
    use rand::Rng;
    let mut r = steer_core::seed::rng(77);
    let n = 20_000;
    let recs: Vec<(f64, McEstimate)> = (0..n)
        .map(|i| {
            let y = r.random_range(-1.0..1.0);
            let est = McEstimate::from_samples(i as u64, vec![y, y + 0.1]).unwrap();
            (y, est)
        })
        .collect();
    let rep = binned_statistics(&recs, &uniform_edges(-1.0, 1.0, 4)).unwrap();
    assert_eq!(rep.total(), n);
    let (mean, sd) = (n as f64 / 4.0, (n as f64 * 0.25 * 0.75).sqrt());
    for b in &rep.bins {
        assert!((b.count as f64 - mean).abs() <= 3.0 * sd, "{b:?}");
        assert!((b.mean_variance - 0.0025).abs() < 1e-12);
    }
}
