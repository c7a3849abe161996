//! Brute-force reference implementations shared by the integration tests.
//! None of these call into the code under test.

#![allow(dead_code)]

/// Six nested loops over (n, o, i, j, c, m·n taps) with explicit bounds
/// checks; cross-correlation with zero padding `r·(k−1)/2`.
pub fn naive_conv(
    x: &[f64],
    (n, c, h, w): (usize, usize, usize, usize),
    k: &[f64],
    (o, kk): (usize, usize),
    r: usize,
) -> Vec<f64> {
    let pad = (r * (kk - 1) / 2) as i64;
    let mut y = vec![0.0; n * o * h * w];
    for s in 0..n {
        for oc in 0..o {
            for i in 0..h {
                for j in 0..w {
                    let mut acc = 0.0;
                    for ic in 0..c {
                        for a in 0..kk {
                            for b in 0..kk {
                                let ii = i as i64 + (a * r) as i64 - pad;
                                let jj = j as i64 + (b * r) as i64 - pad;
                                if ii < 0 || jj < 0 || ii >= h as i64 || jj >= w as i64 {
                                    continue;
                                }
                                let xv = x[((s * c + ic) * h + ii as usize) * w + jj as usize];
                                acc += xv * k[((oc * c + ic) * kk + a) * kk + b];
                            }
                        }
                    }
                    y[((s * o + oc) * h + i) * w + j] = acc;
                }
            }
        }
    }
    y
}

/// `x (n×f) · w (f×g) + b`.
pub fn naive_dense(x: &[f64], n: usize, f: usize, w: &[f64], g: usize, b: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; n * g];
    for i in 0..n {
        for j in 0..g {
            let mut acc = b[j];
            for t in 0..f {
                acc += x[i * f + t] * w[t * g + j];
            }
            y[i * g + j] = acc;
        }
    }
    y
}

/// Fraction of (positive, negative) pairs ordered correctly, ties counting ½.
pub fn pairwise_auc(scores: &[f64], positive: &[bool]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (i, &si) in scores.iter().enumerate() {
        if !positive[i] {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if positive[j] {
                continue;
            }
            den += 1.0;
            if si > sj {
                num += 1.0;
            } else if si == sj {
                num += 0.5;
            }
        }
    }
    num / den
}

/// Direct 2-D Gaussian blur: full (2R+1)² stencil, reflect padding that does
/// not repeat the edge pixel.
pub fn direct_blur(img: &[f64], s: usize, sigma: f64) -> Vec<f64> {
    let rad = (3.0 * sigma).ceil() as i64;
    let mut weights = Vec::new();
    for a in -rad..=rad {
        for b in -rad..=rad {
            weights.push((a, b, (-((a * a + b * b) as f64) / (2.0 * sigma * sigma)).exp()));
        }
    }
    let total: f64 = weights.iter().map(|w| w.2).sum();
    let reflect = |i: i64| -> usize {
        let n = s as i64;
        let mut i = i;
        while i < 0 || i >= n {
            i = if i < 0 { -i } else { 2 * (n - 1) - i };
        }
        i as usize
    };
    let mut out = vec![0.0; s * s];
    for r in 0..s {
        for c in 0..s {
            out[r * s + c] = weights
                .iter()
                .map(|&(a, b, wt)| wt * img[reflect(r as i64 + a) * s + reflect(c as i64 + b)])
                .sum::<f64>()
                / total;
        }
    }
    out
}

/// The Adam recurrences for one scalar, in f64.
pub struct ScalarAdam {
    pub m: f64,
    pub v: f64,
    pub t: i32,
}

impl ScalarAdam {
    pub fn new() -> Self {
        Self { m: 0.0, v: 0.0, t: 0 }
    }

    pub fn step(&mut self, theta: f64, g: f64, lr: f64) -> f64 {
        let (b1, b2, eps) = (0.9, 0.999, 1e-8);
        self.t += 1;
        self.m = b1 * self.m + (1.0 - b1) * g;
        self.v = b2 * self.v + (1.0 - b2) * g * g;
        let mh = self.m / (1.0 - f64::powi(b1, self.t));
        let vh = self.v / (1.0 - f64::powi(b2, self.t));
        theta - lr * mh / (vh.sqrt() + eps)
    }
}

/// Every pair within `tol`.
pub fn all_close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}
