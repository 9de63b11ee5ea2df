//! One-dimensional quadrature rules and node sets on the unit interval.

use std::f64::consts::PI;

/// Evaluates the Legendre polynomial `P_n` and its derivative at `x ∈ [-1, 1]`.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = if (1.0 - x * x).abs() < 1e-300 {
        // endpoint limit of n(n+1)/2 * x^(n+1)
        0.5 * (n * (n + 1)) as f64 * x.powi(n as i32 + 1)
    } else {
        n as f64 * (p0 - x * p1) / (1.0 - x * x)
    };
    (p1, dp)
}

/// Gauss–Legendre rule with `n` points mapped to `[0, 1]`; weights sum to 1.
#[derive(Clone, Debug)]
pub struct GaussRule {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss rule needs at least one point");
        let mut points = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n {
            // Chebyshev-like initial guess, refined by Newton
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            for _ in 0..100 {
                let (p, dp) = legendre(n, x);
                let dx = p / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, dp) = legendre(n, x);
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            // ascending order on [0, 1]
            points[n - 1 - i] = 0.5 * (x + 1.0);
            weights[n - 1 - i] = 0.5 * w;
        }
        Self { points, weights }
    }

    /// Smallest rule integrating polynomials of degree `degree` exactly.
    pub fn with_degree(degree: usize) -> Self {
        Self::new(degree / 2 + 1)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Points and weights mapped to `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let len = b - a;
        self.points
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (a + len * x, w * len))
    }
}

/// Gauss–Lobatto nodes for polynomial degree `degree` on `[0, 1]`, ascending.
pub fn lobatto_nodes(degree: usize) -> Vec<f64> {
    assert!(degree >= 1);
    let mut nodes = vec![0.0; degree + 1];
    nodes[degree] = 1.0;
    // interior nodes are the roots of P'_degree
    for i in 1..degree {
        let mut x = -(PI * i as f64 / degree as f64).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(degree, x);
            // P'' from the Legendre ODE: (1-x²)P'' = 2xP' - n(n+1)P
            let n = degree as f64;
            let ddp = (2.0 * x * dp - n * (n + 1.0) * p) / (1.0 - x * x);
            let dx = dp / ddp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = 0.5 * (x + 1.0);
    }
    nodes
}

/// Lagrange basis on a fixed set of 1D nodes.
#[derive(Clone, Debug)]
pub struct LagrangeBasis1d {
    nodes: Vec<f64>,
    denominators: Vec<f64>,
}

impl LagrangeBasis1d {
    pub fn new(nodes: Vec<f64>) -> Self {
        let denominators = (0..nodes.len())
            .map(|a| {
                nodes
                    .iter()
                    .enumerate()
                    .filter(|&(b, _)| b != a)
                    .map(|(_, &xb)| nodes[a] - xb)
                    .product()
            })
            .collect();
        Self {
            nodes,
            denominators,
        }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Values and first derivatives of every basis polynomial at `x`.
    /// `x` may lie outside the node interval.
    pub fn eval(&self, x: f64, values: &mut [f64], derivs: &mut [f64]) {
        let n = self.nodes.len();
        for a in 0..n {
            let mut v = 1.0;
            let mut d = 0.0;
            for b in 0..n {
                if b == a {
                    continue;
                }
                let f = x - self.nodes[b];
                d = d * f + v;
                v *= f;
            }
            values[a] = v / self.denominators[a];
            derivs[a] = d / self.denominators[a];
        }
    }

    pub fn values(&self, x: f64) -> Vec<f64> {
        let mut v = vec![0.0; self.len()];
        let mut d = vec![0.0; self.len()];
        self.eval(x, &mut v, &mut d);
        v
    }

    pub fn derivatives(&self, x: f64) -> Vec<f64> {
        let mut v = vec![0.0; self.len()];
        let mut d = vec![0.0; self.len()];
        self.eval(x, &mut v, &mut d);
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_integrates_monomials_exactly() {
        for n in 1..10 {
            let rule = GaussRule::new(n);
            assert!((rule.weights.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            for p in 0..2 * n {
                let approx: f64 = rule
                    .points
                    .iter()
                    .zip(&rule.weights)
                    .map(|(x, w)| w * x.powi(p as i32))
                    .sum();
                assert!((approx - 1.0 / (p as f64 + 1.0)).abs() < 1e-14, "n={n} p={p}");
            }
        }
    }

    #[test]
    fn lobatto_nodes_known_values() {
        assert_eq!(lobatto_nodes(1), vec![0.0, 1.0]);
        let n2 = lobatto_nodes(2);
        assert!((n2[1] - 0.5).abs() < 1e-15);
        let n3 = lobatto_nodes(3);
        let x = 0.5 * (1.0 - 1.0 / 5f64.sqrt());
        assert!((n3[1] - x).abs() < 1e-14);
        assert!((n3[2] - (1.0 - x)).abs() < 1e-14);
    }

    #[test]
    fn lagrange_derivative_matches_difference_quotient() {
        let basis = LagrangeBasis1d::new(lobatto_nodes(3));
        let x = 1.3;
        let eps = 1e-6;
        let vp = basis.values(x + eps);
        let vm = basis.values(x - eps);
        let d = basis.derivatives(x);
        for a in 0..4 {
            assert!(((vp[a] - vm[a]) / (2.0 * eps) - d[a]).abs() < 1e-7);
        }
    }
}
