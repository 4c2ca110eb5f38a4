//! Least-squares integration of finite differences on a masked grid
//! (Hudgin geometry).
//!
//! Nodes are the active cells; an edge joins horizontally or vertically
//! adjacent active cells and carries the measured difference. The normal
//! equations are a graph Laplacian, solved by conjugate gradients from zero,
//! which yields the minimum-norm solution: zero mean on every connected
//! component.

use ndarray::Array2;

#[derive(Debug, Clone)]
pub struct LsqSolution {
    /// Node values; inactive cells are 0.
    pub phi: Array2<f64>,
    pub components: usize,
    pub iterations: usize,
    /// Relative residual of the normal equations at exit.
    pub residual: f64,
}

struct Graph {
    n0: usize,
    n1: usize,
    idx: Vec<usize>,
    nodes: Vec<(usize, usize)>,
}

const NONE: usize = usize::MAX;

impl Graph {
    fn new(active: &Array2<bool>) -> Self {
        let (n0, n1) = active.dim();
        let mut idx = vec![NONE; n0 * n1];
        let mut nodes = Vec::new();
        for ((i, j), &a) in active.indexed_iter() {
            if a {
                idx[i * n1 + j] = nodes.len();
                nodes.push((i, j));
            }
        }
        Self { n0, n1, idx, nodes }
    }

    fn at(&self, i: usize, j: usize) -> usize {
        self.idx[i * self.n1 + j]
    }

    fn right(&self, i: usize, j: usize) -> usize {
        if j + 1 < self.n1 {
            self.at(i, j + 1)
        } else {
            NONE
        }
    }

    fn down(&self, i: usize, j: usize) -> usize {
        if i + 1 < self.n0 {
            self.at(i + 1, j)
        } else {
            NONE
        }
    }

    /// y = L x
    fn laplacian(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for (a, &(i, j)) in self.nodes.iter().enumerate() {
            for b in [self.right(i, j), self.down(i, j)] {
                if b != NONE {
                    let d = x[a] - x[b];
                    y[a] += d;
                    y[b] -= d;
                }
            }
        }
    }

    fn component_labels(&self) -> (Vec<usize>, usize) {
        let mut lab = vec![NONE; self.nodes.len()];
        let mut count = 0;
        let mut stack = Vec::new();
        for s in 0..self.nodes.len() {
            if lab[s] != NONE {
                continue;
            }
            lab[s] = count;
            stack.push(s);
            while let Some(a) = stack.pop() {
                let (i, j) = self.nodes[a];
                let mut nb = [NONE; 4];
                nb[0] = self.right(i, j);
                nb[1] = self.down(i, j);
                if j > 0 {
                    nb[2] = self.at(i, j - 1);
                }
                if i > 0 {
                    nb[3] = self.at(i - 1, j);
                }
                for b in nb {
                    if b != NONE && lab[b] == NONE {
                        lab[b] = count;
                        stack.push(b);
                    }
                }
            }
            count += 1;
        }
        (lab, count)
    }
}

/// Solve min sum (phi[i,j+1]-phi[i,j]-dx[i,j])^2 + (phi[i+1,j]-phi[i,j]-dy[i,j])^2
/// over edges between active cells.
pub fn integrate_differences(
    active: &Array2<bool>,
    dx: &Array2<f64>,
    dy: &Array2<f64>,
    tol: f64,
    max_iters: usize,
) -> LsqSolution {
    let g = Graph::new(active);
    let m = g.nodes.len();
    let mut b = vec![0.0; m];
    for (a, &(i, j)) in g.nodes.iter().enumerate() {
        let r = g.right(i, j);
        if r != NONE {
            b[r] += dx[[i, j]];
            b[a] -= dx[[i, j]];
        }
        let d = g.down(i, j);
        if d != NONE {
            b[d] += dy[[i, j]];
            b[a] -= dy[[i, j]];
        }
    }
    let (lab, components) = g.component_labels();
    // Project b onto the range of L (sum zero per component); exact data
    // already satisfies this, the projection only removes round-off.
    project_out_means(&mut b, &lab, components);

    let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut x = vec![0.0; m];
    let mut iterations = 0;
    let mut residual = 0.0;
    if bnorm > 0.0 {
        let mut r = b.clone();
        let mut p = r.clone();
        let mut q = vec![0.0; m];
        let mut rr: f64 = r.iter().map(|v| v * v).sum();
        while iterations < max_iters {
            if rr.sqrt() <= tol * bnorm {
                break;
            }
            g.laplacian(&p, &mut q);
            let pq: f64 = p.iter().zip(&q).map(|(a, b)| a * b).sum();
            if pq <= 0.0 {
                break;
            }
            let alpha = rr / pq;
            for k in 0..m {
                x[k] += alpha * p[k];
                r[k] -= alpha * q[k];
            }
            let rr_new: f64 = r.iter().map(|v| v * v).sum();
            let beta = rr_new / rr;
            rr = rr_new;
            for k in 0..m {
                p[k] = r[k] + beta * p[k];
            }
            iterations += 1;
        }
        residual = rr.sqrt() / bnorm;
    }
    project_out_means(&mut x, &lab, components);

    let mut phi = Array2::zeros((g.n0, g.n1));
    for (a, &(i, j)) in g.nodes.iter().enumerate() {
        phi[[i, j]] = x[a];
    }
    LsqSolution { phi, components, iterations, residual }
}

fn project_out_means(v: &mut [f64], lab: &[usize], k: usize) {
    let mut s = vec![0.0; k];
    let mut c = vec![0usize; k];
    for (x, &l) in v.iter().zip(lab) {
        s[l] += x;
        c[l] += 1;
    }
    for (x, &l) in v.iter_mut().zip(lab) {
        *x -= s[l] / c[l] as f64;
    }
}

/// Default stopping rule used by the reconstructors.
pub const CG_TOL: f64 = 1e-10;

pub fn default_max_iters(active: &Array2<bool>) -> usize {
    10 * active.len() + 100
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diffs(phi: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
        let (n0, n1) = phi.dim();
        let dx = Array2::from_shape_fn((n0, n1), |(i, j)| if j + 1 < n1 { phi[[i, j + 1]] - phi[[i, j]] } else { 0.0 });
        let dy = Array2::from_shape_fn((n0, n1), |(i, j)| if i + 1 < n0 { phi[[i + 1, j]] - phi[[i, j]] } else { 0.0 });
        (dx, dy)
    }

    #[test]
    fn recovers_consistent_field_on_disc() {
        let n = 20;
        let active = Array2::from_shape_fn((n, n), |(i, j)| {
            let (y, x) = (i as f64 - 9.5, j as f64 - 9.5);
            x * x + y * y < 90.0
        });
        let phi = Array2::from_shape_fn((n, n), |(i, j)| (i * i) as f64 * 0.03 - (j as f64) * 0.7 + (i * j) as f64 * 0.01);
        let (dx, dy) = diffs(&phi);
        let sol = integrate_differences(&active, &dx, &dy, 1e-12, 10_000);
        assert_eq!(sol.components, 1);
        let mean: f64 = phi.iter().zip(active.iter()).filter(|(_, &a)| a).map(|(v, _)| v).sum::<f64>()
            / active.iter().filter(|&&a| a).count() as f64;
        for ((i, j), &a) in active.indexed_iter() {
            if a {
                assert!((sol.phi[[i, j]] - (phi[[i, j]] - mean)).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn disconnected_components_each_zero_mean() {
        let mut active = Array2::from_elem((6, 6), false);
        for i in 0..6 {
            active[[i, 0]] = true;
            active[[i, 1]] = true;
            active[[i, 4]] = true;
        }
        let phi = Array2::from_shape_fn((6, 6), |(i, j)| (i + 3 * j) as f64);
        let (dx, dy) = diffs(&phi);
        let sol = integrate_differences(&active, &dx, &dy, 1e-12, 1000);
        assert_eq!(sol.components, 2);
        let left: f64 = (0..6).map(|i| sol.phi[[i, 0]] + sol.phi[[i, 1]]).sum();
        let right: f64 = (0..6).map(|i| sol.phi[[i, 4]]).sum();
        assert!(left.abs() < 1e-9 && right.abs() < 1e-9);
        assert!((sol.phi[[3, 4]] - sol.phi[[2, 4]] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn zero_data_zero_solution() {
        let active = Array2::from_elem((5, 5), true);
        let z = Array2::zeros((5, 5));
        let sol = integrate_differences(&active, &z, &z, 1e-12, 100);
        assert!(sol.phi.iter().all(|&v| v == 0.0));
    }
}
