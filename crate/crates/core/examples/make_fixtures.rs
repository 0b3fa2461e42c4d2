//! Writes the synthetic CSV fixtures used by the CLI tests.
//!
//! cargo run -p tai-core --example make_fixtures -- <out-dir>

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use tai_core::io::write_matrix_csv;
use tai_core::rng::rng_from_seed;

fn write_labeled(rows: &[(Vec<f64>, usize)], path: &Path) {
    let mut out = String::new();
    for (x, c) in rows {
        let cells: Vec<String> = x.iter().map(|v| format!("{v}")).collect();
        out.push_str(&format!("{},{c}\n", cells.join(",")));
    }
    fs::write(path, out).unwrap();
}

fn gaussian(dir: &Path) {
    // t ~ N(0, 5 I), x = t + N(0, 5 I), 10 dimensions
    let mut rng = rng_from_seed(2024);
    let t = DMatrix::from_fn(1000, 10, |_, _| 5f64.sqrt() * rng.sample::<f64, _>(StandardNormal));
    let x = DMatrix::from_fn(1000, 10, |i, j| t[(i, j)] + 5f64.sqrt() * rng.sample::<f64, _>(StandardNormal));
    write_matrix_csv(&x, dir.join("gauss_x.csv")).unwrap();
    write_matrix_csv(&t, dir.join("gauss_t.csv")).unwrap();
}

fn blobs(dir: &Path) {
    let mut rng = rng_from_seed(7);
    // same anisotropic class layout in the leading two coordinates of both domains
    let src_centers = [
        [6.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [-3.0, 2.0, 0.0, 0.0, 0.0, 0.0],
        [-3.0, -2.0, 0.0, 0.0, 0.0, 0.0],
    ];
    let tgt_centers = [[6.0, 0.0, 0.0, 0.0], [-3.0, 2.0, 0.0, 0.0], [-3.0, -2.0, 0.0, 0.0]];
    let mut noisy = |center: &[f64]| -> Vec<f64> { center.iter().map(|m| m + 0.5 * rng.sample::<f64, _>(StandardNormal)).collect() };

    let mut source = Vec::new();
    for i in 0..300 {
        // interleaved labels: side information follows file order
        let c = i % 3;
        source.push((noisy(&src_centers[c]), c + 1));
    }
    let mut labeled = Vec::new();
    for c in 0..3 {
        for _ in 0..20 {
            labeled.push((noisy(&tgt_centers[c]), c + 1));
        }
    }
    let mut unlabeled = Vec::new();
    for c in 0..3 {
        for _ in 0..60 {
            unlabeled.push((noisy(&tgt_centers[c]), c + 1));
        }
    }
    write_labeled(&source, &dir.join("blobs_source.csv"));
    write_labeled(&labeled, &dir.join("blobs_target_labeled.csv"));

    let n = source.len();
    let private = DMatrix::from_fn(n, 6, |i, j| source[i].0[j]);
    let interp = DMatrix::from_fn(n, 3, |i, j| if source[i].1 == j + 1 { 1.0 } else { 0.0 });
    write_matrix_csv(&private, dir.join("blobs_private.csv")).unwrap();
    write_matrix_csv(&interp, dir.join("blobs_interp.csv")).unwrap();
    let u = DMatrix::from_fn(unlabeled.len(), 4, |i, j| unlabeled[i].0[j]);
    write_matrix_csv(&u, dir.join("blobs_target_unlabeled.csv")).unwrap();
    let truth = DMatrix::from_fn(unlabeled.len(), 1, |i, _| unlabeled[i].1 as f64);
    write_matrix_csv(&truth, dir.join("blobs_eval_labels.csv")).unwrap();
}

fn main() {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "fixtures".into());
    let dir = Path::new(&dir);
    fs::create_dir_all(dir).unwrap();
    gaussian(dir);
    blobs(dir);
    println!("fixtures written to {}", dir.display());
}
