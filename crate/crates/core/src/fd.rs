//! Finite-difference weights, banded derivative operators and quadrature on
//! uniform grids.

/// Fornberg's recursion: weights for the `m`-th derivative at `z` using the
/// nodes `x`.
pub fn fornberg(z: f64, x: &[f64], m: usize) -> Vec<f64> {
    let n = x.len();
    assert!(m < n, "need more nodes than the derivative order");
    let mut c = vec![vec![0.0; m + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = x[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = x[i] - z;
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] *= c4 / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|row| row[m]).collect()
}

/// One row of a derivative operator: `start..start+w.len()` with weights `w`.
#[derive(Clone, Debug)]
pub struct StencilRow {
    pub start: usize,
    pub w: Vec<f64>,
}

impl StencilRow {
    #[inline]
    pub fn apply(&self, u: &[f64]) -> f64 {
        self.w.iter().zip(&u[self.start..]).map(|(a, b)| a * b).sum()
    }
}

/// Stencil for derivative `d` with accuracy order `p` at node `k` of a uniform
/// grid of `n` nodes and spacing `h`. Central where it fits, one-sided
/// (shifted window, one node wider) near the ends.
pub fn stencil(n: usize, h: f64, k: usize, d: usize, p: usize) -> StencilRow {
    let mut wc = d + p - 1;
    if wc % 2 == 0 {
        wc += 1;
    }
    let half = wc / 2;
    let (start, width) = if k >= half && k + half < n {
        (k - half, wc)
    } else {
        let w = (d + p).min(n);
        let s = if k < half { 0 } else { n - w };
        (s, w)
    };
    one_sided(n, h, k, d, start, width)
}

/// Stencil on an explicit window `start..start+width`.
pub fn one_sided(n: usize, h: f64, k: usize, d: usize, start: usize, width: usize) -> StencilRow {
    assert!(start + width <= n);
    let nodes: Vec<f64> = (start..start + width).map(|j| (j as f64 - k as f64) * h).collect();
    StencilRow { start, w: fornberg(0.0, &nodes, d) }
}

/// A banded derivative operator on one uniform grid.
#[derive(Clone, Debug)]
pub struct DiffOp {
    pub rows: Vec<StencilRow>,
}

impl DiffOp {
    pub fn new(n: usize, h: f64, d: usize, p: usize) -> Self {
        DiffOp { rows: (0..n).map(|k| stencil(n, h, k, d, p)).collect() }
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|r| r.apply(u)).collect()
    }

    pub fn apply_into(&self, u: &[f64], out: &mut [f64]) {
        for (o, r) in out.iter_mut().zip(&self.rows) {
            *o = r.apply(u);
        }
    }
}

/// Composite Simpson weights on `n ≥ 3` uniform nodes; an odd interval count
/// closes with the 3/8 rule on the last three intervals.
pub fn simpson_weights(n: usize, h: f64) -> Vec<f64> {
    assert!(n >= 3, "Simpson needs at least three nodes");
    let mut w = vec![0.0; n];
    let intervals = n - 1;
    let simpson_end = if intervals % 2 == 0 { intervals } else { intervals - 3 };
    let mut k = 0;
    while k < simpson_end {
        w[k] += h / 3.0;
        w[k + 1] += 4.0 * h / 3.0;
        w[k + 2] += h / 3.0;
        k += 2;
    }
    if simpson_end < intervals {
        let s = 3.0 * h / 8.0;
        w[k] += s;
        w[k + 1] += 3.0 * s;
        w[k + 2] += 3.0 * s;
        w[k + 3] += s;
    }
    w
}

pub fn integrate(w: &[f64], u: &[f64]) -> f64 {
    w.iter().zip(u).map(|(a, b)| a * b).sum()
}

/// sin(u)/u, stable at 0.
pub fn sinc(u: f64) -> f64 {
    if u.abs() < 1e-4 {
        let u2 = u * u;
        1.0 - u2 / 6.0 + u2 * u2 / 120.0
    } else {
        u.sin() / u
    }
}

/// (u − sin u)/u², stable at 0.
pub fn sin_defect(u: f64) -> f64 {
    if u.abs() < 1e-3 {
        let u2 = u * u;
        u / 6.0 - u * u2 / 120.0 + u * u2 * u2 / 5040.0
    } else {
        (u - u.sin()) / (u * u)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fornberg_central_second_derivative() {
        let w = fornberg(0.0, &[-1.0, 0.0, 1.0], 2);
        assert_eq!(w, vec![1.0, -2.0, 1.0]);
    }

    #[test]
    fn stencils_reach_their_order() {
        // derivative errors on exp should scale like h^p
        for &(d, p) in &[(1usize, 4usize), (2, 4), (3, 2), (4, 2)] {
            let err = |n: usize| {
                let h = 1.0 / (n - 1) as f64;
                let x: Vec<f64> = (0..n).map(|k| k as f64 * h).collect();
                let u: Vec<f64> = x.iter().map(|t| t.exp()).collect();
                let op = DiffOp::new(n, h, d, p);
                op.apply(&u).iter().zip(&x).map(|(a, t)| (a - t.exp()).abs()).fold(0.0, f64::max)
            };
            let ratio = err(41) / err(81);
            let expected = 2f64.powi(p as i32);
            assert!(ratio > 0.7 * expected && ratio < 1.5 * expected, "d={d} p={p} ratio={ratio}");
        }
    }

    #[test]
    fn simpson_is_exact_on_cubics() {
        for n in [5, 6, 9, 10] {
            let h = 2.0 / (n - 1) as f64;
            let w = simpson_weights(n, h);
            let u: Vec<f64> = (0..n).map(|k| { let t = -1.0 + k as f64 * h; t * t * t + t * t }).collect();
            assert!((integrate(&w, &u) - 2.0 / 3.0).abs() < 1e-13);
        }
    }

    #[test]
    fn sinc_branches_meet() {
        for u in [0.99e-4, 1.01e-4, 0.99e-3, 1.01e-3] {
            assert!((sinc(u) - u.sin() / u).abs() < 1e-15);
            let direct = (u - u.sin()) / (u * u);
            assert!((sin_defect(u) - direct).abs() < 1e-9);
        }
    }
}
