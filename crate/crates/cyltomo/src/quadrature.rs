//! Composite quadrature rules on sampled nodes.

/// Nodes and weights of a composite rule on `[nodes[0], nodes[last]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadrature {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Quadrature {
    /// Composite trapezoid rule on arbitrary increasing nodes.
    pub fn trapezoid(nodes: &[f64]) -> Self {
        Quadrature { nodes: nodes.to_vec(), weights: trapezoid_weights(nodes) }
    }

    /// Composite Simpson rule on uniform nodes.
    ///
    /// An odd number of intervals closes with Simpson's 3/8 rule on the last
    /// three intervals. Fewer than three intervals falls back to trapezoid.
    pub fn simpson(nodes: &[f64]) -> Self {
        Quadrature { nodes: nodes.to_vec(), weights: simpson_weights(nodes) }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Weighted sum of samples taken at the nodes.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        self.weights.iter().zip(f).map(|(w, v)| w * v).sum()
    }
}

/// Trapezoid weights for increasing, possibly non-uniform nodes.
pub fn trapezoid_weights(nodes: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    let mut w = vec![0.0; n];
    for i in 0..n.saturating_sub(1) {
        let h = nodes[i + 1] - nodes[i];
        w[i] += 0.5 * h;
        w[i + 1] += 0.5 * h;
    }
    w
}

/// Simpson weights for uniform nodes; see [`Quadrature::simpson`].
pub fn simpson_weights(nodes: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    if n < 4 {
        return trapezoid_weights(nodes);
    }
    let h = (nodes[n - 1] - nodes[0]) / (n - 1) as f64;
    let intervals = n - 1;
    let mut w = vec![0.0; n];
    let simpson_end = if intervals.is_multiple_of(2) { n - 1 } else { n - 4 };
    let mut i = 0;
    while i + 2 <= simpson_end {
        w[i] += h / 3.0;
        w[i + 1] += 4.0 * h / 3.0;
        w[i + 2] += h / 3.0;
        i += 2;
    }
    if intervals % 2 == 1 {
        let s = n - 4;
        let c = 3.0 * h / 8.0;
        w[s] += c;
        w[s + 1] += 3.0 * c;
        w[s + 2] += 3.0 * c;
        w[s + 3] += c;
    }
    w
}

/// Uniform nodes `a, a + h, ..., b` with `count` intervals.
pub fn uniform_nodes(a: f64, b: f64, count: usize) -> Vec<f64> {
    (0..=count).map(|i| a + (b - a) * i as f64 / count as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trapezoid_exact_on_affine() {
        let x = [0.01, 0.05, 0.1, 0.4, 1.0];
        let q = Quadrature::trapezoid(&x);
        let f: Vec<f64> = x.iter().map(|v| 3.0 * v - 1.0).collect();
        let exact = 1.5 * (1.0 - 0.0001) - 0.99;
        assert!((q.integrate(&f) - exact).abs() < 1e-14);
    }

    #[test]
    fn simpson_exact_on_cubics_even_and_odd() {
        for count in [6usize, 7, 20, 21, 3] {
            let x = uniform_nodes(0.0, 1.0, count);
            let q = Quadrature::simpson(&x);
            let f: Vec<f64> = x.iter().map(|v| v * v * v - 2.0 * v * v + 0.5).collect();
            let exact = 0.25 - 2.0 / 3.0 + 0.5;
            assert!((q.integrate(&f) - exact).abs() < 1e-13, "count {count}");
        }
    }

    #[test]
    fn weights_sum_to_length() {
        for count in [1usize, 2, 5, 8] {
            let x = uniform_nodes(0.0, 2.0, count);
            let s: f64 = simpson_weights(&x).iter().sum();
            assert!((s - 2.0).abs() < 1e-14);
        }
    }
}
