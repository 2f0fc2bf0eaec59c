use ssrgd_demo::{coupled_pair, landscape, random_stop_histogram, saddle_paths, EXTENT};

#[test]
fn landscape_has_saddle_at_center() {
    let res = 41;
    let f = landscape(0.3, res).unwrap();
    assert_eq!(f.len(), res * res);
    let centre = f[(res / 2) * res + res / 2];
    assert!(centre.abs() < 1e-9, "{centre}");
    // Higher along x1 (columns), lower along x2 (rows).
    let step = 2.0 * EXTENT / (res - 1) as f64;
    let k = (0.55 / step).round() as usize;
    assert!(f[(res / 2) * res + res / 2 + k] > centre);
    assert!(f[(res / 2 - k) * res + res / 2] < centre);
}

#[test]
fn ssrgd_leaves_saddle_and_gd_does_not() {
    let buf = saddle_paths(0.3, 1, 200).unwrap();
    let k = buf[0] as usize;
    let ssrgd = &buf[1..1 + 2 * k];
    let gd = &buf[2 + 2 * k..];
    assert_eq!(gd.len() / 2, buf[1 + 2 * k] as usize);
    let last = &ssrgd[ssrgd.len() - 2..];
    assert!(last[1].abs() > 0.3, "ssrgd ended at {last:?}");
    assert!(gd.iter().all(|v| v.abs() < 0.2), "gd drifted");
}

#[test]
fn stop_histogram_is_flat() {
    let h = random_stop_histogram(8, 40_000, 3);
    assert_eq!(h.len(), 8);
    assert!((h.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!(h.iter().all(|p| (p - 0.125).abs() < 0.01), "{h:?}");
}

#[test]
fn coupled_pair_layout() {
    let buf = coupled_pair(0.3, 0).unwrap();
    let t = buf[0] as usize;
    assert_eq!(buf.len(), 3 + 4 * t);
    assert!(buf[2] > 0.0);
    assert!(buf[1] >= 0.0, "pair did not escape");
}
