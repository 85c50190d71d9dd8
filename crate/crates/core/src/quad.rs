//! Quadrature rules on triangles.
//!
//! Rules are stored in barycentric coordinates with weights normalized to
//! sum to 1, so integrating `f` over a physical triangle is
//! `area * Σ w_q f(x_q)`. Symmetric low-order rules (degrees 1, 2, 5) are
//! tabulated; arbitrary degrees come from a conical product of
//! Gauss–Legendre rules and serve as the independent high-order reference
//! in tests.

/// One quadrature rule on the reference triangle: barycentric points with
/// weights summing to 1.
#[derive(Debug, Clone)]
pub struct TriangleRule {
    pub points: Vec<([f64; 3], f64)>,
}

impl TriangleRule {
    /// Centroid rule, exact for degree 1.
    pub fn degree1() -> Self {
        TriangleRule {
            points: vec![([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], 1.0)],
        }
    }

    /// Symmetric 3-point rule, exact for degree 2.
    pub fn degree2() -> Self {
        let (a, b) = (2.0 / 3.0, 1.0 / 6.0);
        let w = 1.0 / 3.0;
        TriangleRule {
            points: vec![([a, b, b], w), ([b, a, b], w), ([b, b, a], w)],
        }
    }

    /// Symmetric 7-point rule, exact for degree 5. The default rule for all
    /// assembly loops.
    pub fn degree5() -> Self {
        let w0 = 0.225;
        let (a1, w1) = (0.470_142_064_105_115, 0.132_394_152_788_506);
        let (a2, w2) = (0.101_286_507_323_456, 0.125_939_180_544_827);
        let c1 = 1.0 - 2.0 * a1;
        let c2 = 1.0 - 2.0 * a2;
        TriangleRule {
            points: vec![
                ([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], w0),
                ([c1, a1, a1], w1),
                ([a1, c1, a1], w1),
                ([a1, a1, c1], w1),
                ([c2, a2, a2], w2),
                ([a2, c2, a2], w2),
                ([a2, a2, c2], w2),
            ],
        }
    }

    /// Conical-product rule from an `n`-point Gauss–Legendre rule in each
    /// direction; exact for polynomial degree `2n - 2` (n² points). Used as
    /// the independent high-order reference.
    pub fn conical(n: usize) -> Self {
        let gl = gauss_legendre_01(n);
        let mut points = Vec::with_capacity(n * n);
        for &(u, wu) in &gl {
            for &(v, wv) in &gl {
                let l2 = u;
                let l3 = v * (1.0 - u);
                let l1 = 1.0 - l2 - l3;
                points.push(([l1, l2, l3], 2.0 * wu * wv * (1.0 - u)));
            }
        }
        TriangleRule { points }
    }

    /// Smallest tabulated/conical rule exact for polynomials of `degree`.
    pub fn of_degree(degree: usize) -> Self {
        match degree {
            0 | 1 => Self::degree1(),
            2 => Self::degree2(),
            3..=5 => Self::degree5(),
            d => Self::conical(d / 2 + 1),
        }
    }
}

/// Gauss–Legendre nodes and weights on [0, 1] (weights sum to 1), computed
/// by Newton iteration on the Legendre recurrence.
pub fn gauss_legendre_01(n: usize) -> Vec<(f64, f64)> {
    assert!(n >= 1);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        // Tricomi initial guess on [-1, 1], then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push(((x + 1.0) / 2.0, w / 2.0));
    }
    out.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    out
}

/// (P_n(x), P_n'(x)) via the three-term recurrence.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 1..n {
        let k = k as f64;
        let p2 = ((2.0 * k + 1.0) * x * p1 - k * p0) / (k + 1.0);
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}
