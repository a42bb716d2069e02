//! Axisymmetric angular layer: Gauss-Legendre collocation in x = cos(theta)
//! and an orthonormal Legendre-mode transform.
//!
//! Basis: `Phat_l(x) = sqrt((2l+1)/2) P_l(x)` so that the continuous Gram
//! matrix on [-1, 1] is the identity. With `n_nodes >= l_max + 1` the
//! discrete inner product reproduces it exactly (Gauss quadrature is exact
//! through degree `2 n - 1`). Quadratic nonlinearities are formed pointwise
//! at the nodes and projected back, de-aliased by the two-thirds rule
//! `n_nodes >= ceil(3 (l_max + 1) / 2)` chosen by the caller.
//!
//! The spherical mean of a field equals `a_0 / sqrt(2)` in this convention.

use crate::error::ModesError;

/// Gauss-Legendre collocation grid with transform tables for `l <= l_max`.
#[derive(Debug, Clone)]
pub struct AngularGrid {
    l_max: usize,
    /// cos(theta) collocation nodes, ascending.
    nodes: Vec<f64>,
    /// Quadrature weights, positive, summing to 2.
    weights: Vec<f64>,
    /// `table[j][l] = Phat_l(x_j)`.
    table: Vec<Vec<f64>>,
    /// `dtheta_table[j][l] = d/dtheta Phat_l at node j = -sin(theta_j) Phat_l'(x_j)`.
    dtheta_table: Vec<Vec<f64>>,
}

/// Default node count for a given band limit: the two-thirds rule for
/// quadratic products, never below the exactness minimum `l_max + 1`.
pub fn default_node_count(l_max: usize) -> usize {
    let dealiased = (3 * (l_max + 1) + 1) / 2;
    dealiased.max(l_max + 1)
}

/// Legendre polynomial values `P_0..P_{l_max}` at `x` by the three-term recurrence.
fn legendre_values(l_max: usize, x: f64) -> Vec<f64> {
    let mut p = Vec::with_capacity(l_max + 1);
    p.push(1.0);
    if l_max >= 1 {
        p.push(x);
    }
    for l in 1..l_max {
        let next = (((2 * l + 1) as f64) * x * p[l] - (l as f64) * p[l - 1]) / ((l + 1) as f64);
        p.push(next);
    }
    p
}

/// Derivatives `P_l'(x)` from the values, via `(1-x^2) P_l' = l (P_{l-1} - x P_l)`.
fn legendre_derivs(p: &[f64], x: f64) -> Vec<f64> {
    let omx2 = 1.0 - x * x;
    p.iter()
        .enumerate()
        .map(|(l, _)| {
            if l == 0 {
                0.0
            } else {
                (l as f64) * (p[l - 1] - x * p[l]) / omx2
            }
        })
        .collect()
}

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration on `P_n`.
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        // Chebyshev-like initial guess.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let p = legendre_values(n, x);
            let pn = p[n];
            let dpn = (n as f64) * (p[n - 1] - x * p[n]) / (1.0 - x * x);
            let dx = pn / dpn;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let p = legendre_values(n, x);
        let dpn = (n as f64) * (p[n - 1] - x * p[n]) / (1.0 - x * x);
        let w = 2.0 / ((1.0 - x * x) * dpn * dpn);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Build the collocation grid; rejects `n_nodes < l_max + 1` (aliasing).
pub fn build_angular_grid(l_max: usize, n_nodes: usize) -> Result<AngularGrid, ModesError> {
    if n_nodes < l_max + 1 {
        return Err(ModesError::Config(format!(
            "n_nodes = {n_nodes} < l_max + 1 = {} would alias modes",
            l_max + 1
        )));
    }
    let (nodes, weights) = gauss_legendre(n_nodes);
    let mut table = Vec::with_capacity(n_nodes);
    let mut dtheta_table = Vec::with_capacity(n_nodes);
    for &x in &nodes {
        let p = legendre_values(l_max, x);
        let dp = legendre_derivs(&p, x);
        let sin_theta = (1.0 - x * x).sqrt();
        let mut row = Vec::with_capacity(l_max + 1);
        let mut drow = Vec::with_capacity(l_max + 1);
        for l in 0..=l_max {
            let norm = (((2 * l + 1) as f64) / 2.0).sqrt();
            row.push(norm * p[l]);
            // d/dtheta = -sin(theta) d/dx
            drow.push(-sin_theta * norm * dp[l]);
        }
        table.push(row);
        dtheta_table.push(drow);
    }
    Ok(AngularGrid {
        l_max,
        nodes,
        weights,
        table,
        dtheta_table,
    })
}

impl AngularGrid {
    pub fn l_max(&self) -> usize {
        self.l_max
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `Phat_l(x_j)`.
    pub fn basis(&self, j: usize, l: usize) -> f64 {
        self.table[j][l]
    }

    /// Mode coefficients `a_l = sum_j w_j f_j Phat_l(x_j)`, `l = 0..=l_max`.
    pub fn project(&self, values: &[f64]) -> Result<Vec<f64>, ModesError> {
        self.check_values(values)?;
        let mut coeffs = vec![0.0; self.l_max + 1];
        for (j, &f) in values.iter().enumerate() {
            let wf = self.weights[j] * f;
            let row = &self.table[j];
            for (c, p) in coeffs.iter_mut().zip(row) {
                *c += wf * p;
            }
        }
        Ok(coeffs)
    }

    /// Project into a caller-provided buffer (march-time hot path).
    pub fn project_into(&self, values: &[f64], coeffs: &mut [f64]) {
        coeffs.fill(0.0);
        for (j, &f) in values.iter().enumerate() {
            let wf = self.weights[j] * f;
            let row = &self.table[j];
            for (c, p) in coeffs.iter_mut().zip(row) {
                *c += wf * p;
            }
        }
    }

    /// Pointwise evaluation `f_j = sum_l a_l Phat_l(x_j)`.
    pub fn synthesize(&self, coeffs: &[f64]) -> Result<Vec<f64>, ModesError> {
        self.check_coeffs(coeffs)?;
        Ok((0..self.n_nodes())
            .map(|j| {
                let row = &self.table[j];
                coeffs.iter().zip(row).map(|(a, p)| a * p).sum()
            })
            .collect())
    }

    /// `d/dtheta` of the band-limited interpolant, per node, from coefficients.
    pub fn dtheta_from_coeffs(&self, coeffs: &[f64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            let row = &self.dtheta_table[j];
            *o = coeffs.iter().zip(row).map(|(a, d)| a * d).sum();
        }
    }

    /// The spherical mean of nodal values, `a_0 / sqrt(2)`.
    pub fn spherical_mean(&self, values: &[f64]) -> f64 {
        let mut a0 = 0.0;
        for (j, &f) in values.iter().enumerate() {
            a0 += self.weights[j] * f * self.table[j][0];
        }
        a0 / (2.0f64).sqrt()
    }

    fn check_values(&self, values: &[f64]) -> Result<(), ModesError> {
        if values.len() != self.n_nodes() {
            return Err(ModesError::Shape {
                expected: self.n_nodes(),
                got: values.len(),
            });
        }
        Ok(())
    }

    fn check_coeffs(&self, coeffs: &[f64]) -> Result<(), ModesError> {
        if coeffs.len() != self.l_max + 1 {
            return Err(ModesError::Shape {
                expected: self.l_max + 1,
                got: coeffs.len(),
            });
        }
        Ok(())
    }
}

/// Eigenvalue of the rescaled spherical Laplacian on the `l` mode:
/// `slashed-Delta Phat_l = -l(l+1)/r^2 Phat_l`.
pub fn mode_laplacian_factor(l: usize, r: f64) -> f64 {
    -((l * (l + 1)) as f64) / (r * r)
}

/// `(1/r^2) (d/dtheta f)^2` at each node, the angular part of the null-form
/// nonlinearity, computed spectrally through the mode coefficients.
pub fn angular_gradient_sq(
    values: &[f64],
    r: f64,
    grid: &AngularGrid,
) -> Result<Vec<f64>, ModesError> {
    let coeffs = grid.project(values)?;
    let mut dth = vec![0.0; grid.n_nodes()];
    grid.dtheta_from_coeffs(&coeffs, &mut dth);
    Ok(dth.iter().map(|d| (d / r) * (d / r)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_point_rule() {
        let g = build_angular_grid(0, 1).unwrap();
        assert!(g.nodes()[0].abs() < 1e-15);
        assert!((g.weights()[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_aliasing_config() {
        assert!(build_angular_grid(3, 3).is_err());
        assert!(build_angular_grid(3, 4).is_ok());
    }

    #[test]
    fn weights_positive_sum_two() {
        for n in [1, 2, 5, 8, 13] {
            let g = build_angular_grid(0, n).unwrap();
            assert!(g.weights().iter().all(|&w| w > 0.0));
            let s: f64 = g.weights().iter().sum();
            assert!((s - 2.0).abs() < 1e-13, "n={n}: {s}");
        }
    }

    #[test]
    fn discrete_gram_is_identity() {
        let g = build_angular_grid(4, 8).unwrap();
        for l in 0..=4usize {
            for m in 0..=4usize {
                let mut s = 0.0;
                for j in 0..g.n_nodes() {
                    s += g.weights()[j] * g.basis(j, l) * g.basis(j, m);
                }
                let want = if l == m { 1.0 } else { 0.0 };
                assert!((s - want).abs() < 1e-12, "Gram[{l}][{m}] = {s}");
            }
        }
    }

    #[test]
    fn constant_is_pure_l0() {
        let g = build_angular_grid(4, 8).unwrap();
        let c = 0.7;
        let a = g.project(&vec![c; 8]).unwrap();
        assert!((a[0] - c * (2.0f64).sqrt()).abs() < 1e-13);
        for l in 1..=4 {
            assert!(a[l].abs() < 1e-13);
        }
        assert!((g.spherical_mean(&vec![c; 8]) - c).abs() < 1e-13);
    }

    #[test]
    fn pure_mode_projects_cleanly() {
        // f = P_3 on an l_max = 5 grid: only a_3 nonzero.
        let g = build_angular_grid(5, 9).unwrap();
        let f: Vec<f64> = g
            .nodes()
            .iter()
            .map(|&x| 0.5 * (5.0 * x * x * x - 3.0 * x))
            .collect();
        let a = g.project(&f).unwrap();
        for l in 0..=5usize {
            if l == 3 {
                assert!((a[l] - (2.0 / 7.0f64).sqrt()).abs() < 1e-12, "a3={}", a[l]);
            } else {
                assert!(a[l].abs() < 1e-12, "a[{l}]={}", a[l]);
            }
        }
    }

    #[test]
    fn round_trips() {
        let g = build_angular_grid(4, 8).unwrap();
        // synthesize . project on band-limited data
        let coeffs = vec![0.3, -1.2, 0.05, 0.9, -0.4];
        let f = g.synthesize(&coeffs).unwrap();
        let back = g.project(&f).unwrap();
        for (a, b) in coeffs.iter().zip(&back) {
            assert!((a - b).abs() < 1e-13);
        }
        // zero coefficients give the zero field
        assert!(g
            .synthesize(&vec![0.0; 5])
            .unwrap()
            .iter()
            .all(|&v| v == 0.0));
        // e_1 synthesizes to values proportional to x_j
        let e1 = g.synthesize(&[0.0, 1.0, 0.0, 0.0, 0.0]).unwrap();
        for (j, &x) in g.nodes().iter().enumerate() {
            assert!((e1[j] - (1.5f64).sqrt() * x).abs() < 1e-13);
        }
        // shape errors
        assert!(g.project(&[0.0; 3]).is_err());
        assert!(g.synthesize(&[0.0; 3]).is_err());
    }

    #[test]
    fn laplacian_factors() {
        assert_eq!(mode_laplacian_factor(0, 3.7), 0.0);
        assert_eq!(mode_laplacian_factor(1, 1.0), -2.0);
        assert_eq!(mode_laplacian_factor(2, 2.0), -1.5);
    }

    #[test]
    fn spectral_derivative_matches_analytic() {
        let g = build_angular_grid(4, 8).unwrap();
        // For each basis mode, compare the spectral d/dtheta with the
        // analytic -sin(theta) Phat_l'(x) at all nodes.
        for l in 0..=4usize {
            let mut e = vec![0.0; 5];
            e[l] = 1.0;
            let mut dth = vec![0.0; 8];
            g.dtheta_from_coeffs(&e, &mut dth);
            for (j, &x) in g.nodes().iter().enumerate() {
                let p = legendre_values(4, x);
                let dp = legendre_derivs(&p, x);
                let norm = (((2 * l + 1) as f64) / 2.0).sqrt();
                let want = -(1.0 - x * x).sqrt() * norm * dp[l];
                assert!((dth[j] - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn gradient_sq_examples() {
        let g = build_angular_grid(4, 8).unwrap();
        // constant -> 0
        let z = angular_gradient_sq(&vec![3.0; 8], 2.0, &g).unwrap();
        assert!(z.iter().all(|&v| v.abs() < 1e-24));
        // phi = cos(theta), r = 1 -> sin^2(theta) at each node
        let f: Vec<f64> = g.nodes().to_vec();
        let gr = angular_gradient_sq(&f, 1.0, &g).unwrap();
        for (j, &x) in g.nodes().iter().enumerate() {
            assert!((gr[j] - (1.0 - x * x)).abs() < 1e-12);
        }
        // nonnegative, even input gives even output
        let even: Vec<f64> = g.nodes().iter().map(|&x| x * x).collect();
        let ge = angular_gradient_sq(&even, 1.3, &g).unwrap();
        let n = g.n_nodes();
        for j in 0..n {
            assert!(ge[j] >= 0.0);
            assert!((ge[j] - ge[n - 1 - j]).abs() < 1e-12);
        }
    }
}
