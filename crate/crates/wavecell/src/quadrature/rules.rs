//! One-dimensional quadrature rules on the reference interval [-1, 1]:
//! Gauss-Legendre (interior nodes, exact to degree 2n-1) and
//! Gauss-Lobatto-Legendre (endpoints included, exact to degree 2p-1), the
//! node family that makes nodal mass lumping consistent for uncut elements.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RuleError {
    #[error("Gauss-Lobatto order {0} outside supported range 1..=12")]
    GllOrder(usize),
    #[error("Gauss point count {0} outside supported range 1..=13")]
    GaussCount(usize),
}

/// A 1D quadrature rule on [-1, 1].
///
/// Invariants: nodes strictly increasing, weights positive, weights sum to 2
/// (the interval length) to 1e-12.
#[derive(Clone, Debug, PartialEq)]
pub struct Rule1D {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule1D {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Legendre polynomial `P_n(x)` and its derivative by the three-term
/// recurrence. Stable over the whole interval for the orders used here.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let mut p_prev = 1.0;
    let mut p = x;
    for k in 2..=n {
        let kf = k as f64;
        let p_next = ((2.0 * kf - 1.0) * x * p - (kf - 1.0) * p_prev) / kf;
        p_prev = p;
        p = p_next;
    }
    // P_n'(x) = n (x P_n - P_{n-1}) / (x^2 - 1); endpoints handled by caller.
    let dp = if (x * x - 1.0).abs() < 1e-300 {
        // P_n'(±1) = ±^{n+1} n(n+1)/2
        let s = if x > 0.0 { 1.0 } else { (-1.0_f64).powi(n as i32 + 1) };
        s * (n * (n + 1)) as f64 / 2.0
    } else {
        (n as f64) * (x * p - p_prev) / (x * x - 1.0)
    };
    (p, dp)
}

/// Gauss-Lobatto-Legendre rule of order `p` (`p + 1` nodes, endpoints
/// included). Interior nodes are the roots of `P_p'`, found by Newton from
/// Chebyshev-Lobatto starting guesses; weights are `2 / (p (p+1) P_p(x)^2)`.
pub fn gll_rule(p: usize) -> Result<Rule1D, RuleError> {
    if !(1..=12).contains(&p) {
        return Err(RuleError::GllOrder(p));
    }
    let n = p + 1;
    let mut nodes = vec![0.0; n];
    nodes[0] = -1.0;
    nodes[p] = 1.0;
    for i in 1..p {
        let mut x = -(std::f64::consts::PI * i as f64 / p as f64).cos();
        for _ in 0..100 {
            // f = P_p'(x); f' from the Legendre ODE:
            // (1-x^2) P'' = 2x P' - p(p+1) P
            let (pp, dp) = legendre_with_derivative(p, x);
            let ddp = (2.0 * x * dp - (p * (p + 1)) as f64 * pp) / (1.0 - x * x);
            let dx = dp / ddp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = x;
    }
    // Enforce exact symmetry: the node set is symmetric about 0.
    for i in 0..n / 2 {
        let s = 0.5 * (nodes[n - 1 - i] - nodes[i]);
        nodes[i] = -s;
        nodes[n - 1 - i] = s;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    let weights = nodes
        .iter()
        .map(|&x| {
            let (pp, _) = legendre_with_derivative(p, x);
            2.0 / ((p * (p + 1)) as f64 * pp * pp)
        })
        .collect();
    Ok(Rule1D { nodes, weights })
}

/// Gauss-Legendre rule with `n` nodes (roots of `P_n`), exact to degree
/// `2n - 1`. Used on quadtree leaves and for uncut stiffness integration.
pub fn gauss_rule(n: usize) -> Result<Rule1D, RuleError> {
    if !(1..=13).contains(&n) {
        return Err(RuleError::GaussCount(n));
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = -((std::f64::consts::PI * (i as f64 + 0.75)) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = x;
        let (_, dp) = legendre_with_derivative(n, x);
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    for i in 0..n / 2 {
        let s = 0.5 * (nodes[n - 1 - i] - nodes[i]);
        nodes[i] = -s;
        nodes[n - 1 - i] = s;
        let w = 0.5 * (weights[i] + weights[n - 1 - i]);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Ok(Rule1D { nodes, weights })
}
