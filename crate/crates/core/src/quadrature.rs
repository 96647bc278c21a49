//! Gauss–Legendre rules on the unit interval and unit square.

/// Gauss–Legendre nodes and weights mapped to [0, 1], nodes ascending.
pub fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "quadrature order must be positive");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // x is the i-th largest root on [-1, 1]
        nodes[n - 1 - i] = 0.5 * (1.0 + x);
        nodes[i] = 0.5 * (1.0 - x);
        weights[n - 1 - i] = 0.5 * w;
        weights[i] = 0.5 * w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Tensor Gauss–Legendre rule on [0,1]^d for d ∈ {1, 2}.
///
/// Nodes are returned flattened (`d` coordinates per node), first coordinate
/// varying fastest.
pub fn tensor_gauss_legendre(q_per_dim: usize, d: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre_unit(q_per_dim);
    match d {
        1 => (x, w),
        2 => {
            let mut nodes = Vec::with_capacity(2 * q_per_dim * q_per_dim);
            let mut weights = Vec::with_capacity(q_per_dim * q_per_dim);
            for j in 0..q_per_dim {
                for i in 0..q_per_dim {
                    nodes.push(x[i]);
                    nodes.push(x[j]);
                    weights.push(w[i] * w[j]);
                }
            }
            (nodes, weights)
        }
        _ => panic!("only d = 1, 2 supported"),
    }
}
