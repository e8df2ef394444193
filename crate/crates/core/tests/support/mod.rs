//! Brute-force hard-margin solver in two dimensions, shared by test targets.
//!
//! In the plane the maximum-margin separator is pinned by two or three
//! support vectors, so enumerating every pair and triple and keeping the
//! feasible candidate with the smallest |w| finds the exact optimum.
#![allow(dead_code)]

use authsim::rng::RngStream;
use authsim::svm::SvmParams;

pub type P = [f64; 2];

pub fn dot(a: P, b: P) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

pub fn sub(a: P, b: P) -> P {
    [a[0] - b[0], a[1] - b[1]]
}

pub fn feasible(w: P, b: f64, xs: &[P], ys: &[f64]) -> bool {
    xs.iter()
        .zip(ys)
        .all(|(x, y)| y * (dot(w, *x) + b) >= 1.0 - 1e-9)
}

/// Exact hard-margin separator `(w, b)` by support-set enumeration.
pub fn max_margin_oracle(xs: &[P], ys: &[f64]) -> (P, f64) {
    let mut best: Option<(f64, P, f64)> = None;
    let mut consider = |w: P, b: f64| {
        if w.iter().chain([&b]).all(|v| v.is_finite()) && feasible(w, b, xs, ys) {
            let norm = dot(w, w);
            if best.is_none_or(|(n, _, _)| norm < n) {
                best = Some((norm, w, b));
            }
        }
    };
    let n = xs.len();
    for i in 0..n {
        for j in 0..n {
            if ys[i] > 0.0 && ys[j] < 0.0 {
                let d = sub(xs[i], xs[j]);
                let s = 2.0 / dot(d, d);
                let w = [d[0] * s, d[1] * s];
                consider(w, 1.0 - dot(w, xs[i]));
            }
        }
    }
    for a in 0..n {
        for b in (a + 1)..n {
            if ys[a] != ys[b] {
                continue;
            }
            let along = sub(xs[a], xs[b]);
            let normal = [-along[1], along[0]];
            for c in 0..n {
                if ys[c] == ys[a] {
                    continue;
                }
                let denom = dot(normal, sub(xs[a], xs[c]));
                if denom.abs() < 1e-12 {
                    continue;
                }
                let t = 2.0 * ys[a] / denom;
                let w = [normal[0] * t, normal[1] * t];
                consider(w, ys[a] - dot(w, xs[a]));
            }
        }
    }
    let (_, w, b) = best.expect("separable data has a separator");
    (w, b)
}

/// Separable set with a clear gap around a random line.
pub fn separable_set(seed: u64) -> (Vec<P>, Vec<f64>) {
    let mut rng = RngStream::new(seed, "svm-oracle");
    let angle = rng.uniform() * std::f64::consts::TAU;
    let normal = [angle.cos(), angle.sin()];
    let offset = rng.uniform() * 0.4 - 0.2;
    let n = 4 + rng.below(9) as usize;
    loop {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        while xs.len() < n {
            let p = [rng.uniform() * 2.0 - 1.0, rng.uniform() * 2.0 - 1.0];
            let s = dot(normal, p) + offset;
            if s.abs() > 0.15 {
                xs.push(p);
                ys.push(s.signum());
            }
        }
        if ys.iter().any(|&y| y > 0.0) && ys.iter().any(|&y| y < 0.0) {
            return (xs, ys);
        }
    }
}

pub fn hard_margin_params() -> SvmParams {
    SvmParams {
        standardize: false,
        tol: 1e-6,
        max_iter: 1_000_000,
        ..SvmParams::linear(1e4)
    }
}

pub fn to_rows(xs: &[P]) -> Vec<Vec<f64>> {
    xs.iter().map(|p| p.to_vec()).collect()
}

pub fn to_labels(ys: &[f64]) -> Vec<i8> {
    ys.iter().map(|&y| y as i8).collect()
}
