use std::fs;
use std::io::Write;

use lhess::datasets::{gaussian_synthetic, load_idx, randomize_labels, relabel_mnist2, split, subset, write_idx};

fn header(magic: u32, dims: &[u32]) -> Vec<u8> {
    let mut out = magic.to_be_bytes().to_vec();
    for d in dims {
        out.extend(d.to_be_bytes());
    }
    out
}

#[test]
fn hand_built_idx_fixture_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let pixels: [u8; 12] = [0, 255, 51, 102, 1, 254, 7, 8, 9, 10, 11, 12];
    let mut img = header(0x0803, &[2, 2, 3]);
    img.extend(pixels);
    let mut lab = header(0x0801, &[2]);
    lab.extend([7u8, 2]);
    let (ip, lp) = (dir.path().join("img"), dir.path().join("lab"));
    fs::write(&ip, &img).unwrap();
    fs::write(&lp, &lab).unwrap();

    let d = load_idx(&ip, &lp).unwrap();
    assert_eq!((d.len(), d.dim()), (2, 6));
    assert_eq!(d.labels, [7, 2]);
    for (got, &px) in d.inputs.as_slice().iter().zip(&pixels) {
        assert_eq!(*got, f64::from(px) / 255.0);
    }

    // Gzipped copies load identically.
    let gz = |path: &std::path::Path, bytes: &[u8]| {
        let mut enc = flate2::write::GzEncoder::new(fs::File::create(path).unwrap(), flate2::Compression::default());
        enc.write_all(bytes).unwrap();
        enc.finish().unwrap();
    };
    let (igz, lgz) = (dir.path().join("img.gz"), dir.path().join("lab.gz"));
    gz(&igz, &img);
    gz(&lgz, &lab);
    let z = load_idx(&igz, &lgz).unwrap();
    assert_eq!(z.inputs, d.inputs);

    write_idx(&d, 2, 3, dir.path().join("w-img"), dir.path().join("w-lab")).unwrap();
    assert_eq!(fs::read(dir.path().join("w-img")).unwrap(), img);
    assert_eq!(fs::read(dir.path().join("w-lab")).unwrap(), lab);
}

#[test]
fn malformed_idx_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut img = header(0x0803, &[2, 2, 3]);
    img.extend([0u8; 11]);
    let mut lab = header(0x0801, &[2]);
    lab.extend([1u8, 2]);
    let (ip, lp) = (dir.path().join("img"), dir.path().join("lab"));
    fs::write(&ip, &img).unwrap();
    fs::write(&lp, &lab).unwrap();
    assert_eq!(load_idx(&ip, &lp).unwrap_err().kind(), "format");
    assert_eq!(load_idx(dir.path().join("nope"), &lp).unwrap_err().kind(), "io");
}

#[test]
fn mnist2_histogram_has_two_bins() {
    let mut d = gaussian_synthetic(500, 4, 10, 1).unwrap();
    d = randomize_labels(&d, 3);
    let two = relabel_mnist2(&d).unwrap();
    let hist = two.class_histogram();
    assert_eq!(hist.len(), 2);
    assert_eq!(hist.iter().sum::<usize>(), 500);
    let low = d.labels.iter().filter(|&&l| l < 5).count();
    assert_eq!(hist[0], low);
}

#[test]
fn random_labels_are_uniform() {
    let d = gaussian_synthetic(100_000, 1, 10, 0).unwrap();
    let r = randomize_labels(&d, 11);
    let n = 100_000.0;
    let sigma = (n * 0.1 * 0.9f64).sqrt();
    for (c, &count) in r.class_histogram().iter().enumerate() {
        assert!((count as f64 - n / 10.0).abs() <= 3.0 * sigma, "class {c}: {count}");
    }
}

#[test]
fn gaussian_moments_follow_the_clt() {
    let n = 10_000;
    let d = gaussian_synthetic(n, 8, 3, 5).unwrap();
    for j in 0..8 {
        let col = d.inputs.col(j);
        let mean = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        assert!(mean.abs() <= 4.0 / (n as f64).sqrt(), "coordinate {j}: mean {mean}");
        assert!((var - 1.0).abs() <= 0.1, "coordinate {j}: variance {var}");
    }
}

#[test]
fn subsets_depend_on_the_seed() {
    let d = gaussian_synthetic(200, 10, 2, 0).unwrap();
    let a = subset(&d, 100, 1).unwrap();
    let b = subset(&d, 100, 2).unwrap();
    assert_ne!(a.inputs, b.inputs);
    assert_eq!(subset(&d, 100, 1).unwrap().inputs, a.inputs);
    let (head, rest) = split(&d, 120, 4).unwrap();
    assert_eq!((head.len(), rest.len()), (120, 80));
    assert!(subset(&d, 201, 0).is_err());
}
