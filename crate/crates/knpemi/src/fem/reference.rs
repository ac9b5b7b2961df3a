//! Reference simplex basis functions and quadrature rules.
//!
//! Quadrature on triangles and tetrahedra is generated from 1D Gauss-Legendre
//! rules through the collapsed-coordinate (Duffy) map, with the Jacobian
//! absorbed into the weights. The rules are exact for the requested total
//! polynomial degree.

/// Number of Lagrange basis functions on a d-simplex of degree p.
pub fn n_cell_dofs(dim: usize, p: usize) -> usize {
    match (dim, p) {
        (2, 1) => 3,
        (2, 2) => 6,
        (3, 1) => 4,
        (3, 2) => 10,
        _ => panic!("unsupported (dim, p) = ({dim}, {p})"),
    }
}

/// Number of Lagrange nodes on a (d-1)-facet of a degree-p element.
pub fn n_facet_dofs(dim: usize, p: usize) -> usize {
    match (dim, p) {
        (2, 1) => 2,
        (2, 2) => 3,
        (3, 1) => 3,
        (3, 2) => 6,
        _ => panic!("unsupported (dim, p) = ({dim}, {p})"),
    }
}

/// Local edge enumeration of the reference simplex, matching the degree-2
/// node ordering (vertices first, then edge midpoints in this order).
pub fn cell_edges(dim: usize) -> &'static [(usize, usize)] {
    match dim {
        2 => &[(0, 1), (1, 2), (2, 0)],
        3 => &[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)],
        _ => panic!("unsupported dimension {dim}"),
    }
}

/// Barycentric coordinates of a reference point.
fn bary(dim: usize, xi: [f64; 3]) -> [f64; 4] {
    match dim {
        2 => [1.0 - xi[0] - xi[1], xi[0], xi[1], 0.0],
        3 => [1.0 - xi[0] - xi[1] - xi[2], xi[0], xi[1], xi[2]],
        _ => unreachable!(),
    }
}

const GRAD_BARY_2D: [[f64; 3]; 3] = [[-1.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
const GRAD_BARY_3D: [[f64; 3]; 4] = [
    [-1.0, -1.0, -1.0],
    [1.0, 0.0, 0.0],
    [0.0, 1.0, 0.0],
    [0.0, 0.0, 1.0],
];

/// Evaluate all basis functions at a reference point.
pub fn eval_basis(dim: usize, p: usize, xi: [f64; 3], out: &mut [f64]) {
    let l = bary(dim, xi);
    let nv = dim + 1;
    match p {
        1 => out[..nv].copy_from_slice(&l[..nv]),
        2 => {
            for v in 0..nv {
                out[v] = l[v] * (2.0 * l[v] - 1.0);
            }
            for (e, &(a, b)) in cell_edges(dim).iter().enumerate() {
                out[nv + e] = 4.0 * l[a] * l[b];
            }
        }
        _ => panic!("unsupported degree {p}"),
    }
}

/// Evaluate all reference-coordinate gradients at a reference point.
pub fn eval_basis_grads(dim: usize, p: usize, xi: [f64; 3], out: &mut [[f64; 3]]) {
    let l = bary(dim, xi);
    let nv = dim + 1;
    let gl: &[[f64; 3]] = match dim {
        2 => &GRAD_BARY_2D,
        3 => &GRAD_BARY_3D,
        _ => unreachable!(),
    };
    match p {
        1 => out[..nv].copy_from_slice(&gl[..nv]),
        2 => {
            for v in 0..nv {
                for k in 0..3 {
                    out[v][k] = (4.0 * l[v] - 1.0) * gl[v][k];
                }
            }
            for (e, &(a, b)) in cell_edges(dim).iter().enumerate() {
                for k in 0..3 {
                    out[nv + e][k] = 4.0 * (l[a] * gl[b][k] + l[b] * gl[a][k]);
                }
            }
        }
        _ => panic!("unsupported degree {p}"),
    }
}

/// Facet restriction basis in facet-local barycentric coordinates.
///
/// Segment (2D facets): nodes `[v0, v1, mid]`; triangle (3D facets): nodes
/// `[v0, v1, v2, e01, e02, e12]` — the same order the DOF map uses.
pub fn eval_facet_basis(dim: usize, p: usize, s: [f64; 2], out: &mut [f64]) {
    match (dim, p) {
        (2, 1) => {
            out[0] = 1.0 - s[0];
            out[1] = s[0];
        }
        (2, 2) => {
            let t = s[0];
            out[0] = (1.0 - t) * (1.0 - 2.0 * t);
            out[1] = t * (2.0 * t - 1.0);
            out[2] = 4.0 * t * (1.0 - t);
        }
        (3, 1) => {
            out[0] = 1.0 - s[0] - s[1];
            out[1] = s[0];
            out[2] = s[1];
        }
        (3, 2) => {
            let l0 = 1.0 - s[0] - s[1];
            let (l1, l2) = (s[0], s[1]);
            out[0] = l0 * (2.0 * l0 - 1.0);
            out[1] = l1 * (2.0 * l1 - 1.0);
            out[2] = l2 * (2.0 * l2 - 1.0);
            out[3] = 4.0 * l0 * l1;
            out[4] = 4.0 * l0 * l2;
            out[5] = 4.0 * l1 * l2;
        }
        _ => panic!("unsupported (dim, p)"),
    }
}

// ---------------------------------------------------------------------------
// Gauss quadrature
// ---------------------------------------------------------------------------

/// Gauss-Legendre nodes/weights on [0, 1]; exact for degree 2n-1.
pub fn gauss_legendre_01(n: usize) -> (Vec<f64>, Vec<f64>) {
    // nodes/weights on [-1, 1]
    let (x, w): (Vec<f64>, Vec<f64>) = match n {
        1 => (vec![0.0], vec![2.0]),
        2 => {
            let a = 1.0 / 3.0f64.sqrt();
            (vec![-a, a], vec![1.0, 1.0])
        }
        3 => {
            let a = (3.0f64 / 5.0).sqrt();
            (vec![-a, 0.0, a], vec![5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0])
        }
        4 => (
            vec![
                -0.8611363115940526,
                -0.3399810435848563,
                0.3399810435848563,
                0.8611363115940526,
            ],
            vec![
                0.3478548451374538,
                0.6521451548625461,
                0.6521451548625461,
                0.3478548451374538,
            ],
        ),
        5 => (
            vec![
                -0.9061798459386640,
                -0.5384693101056831,
                0.0,
                0.5384693101056831,
                0.9061798459386640,
            ],
            vec![
                0.2369268850561891,
                0.4786286704993665,
                0.5688888888888889,
                0.4786286704993665,
                0.2369268850561891,
            ],
        ),
        6 => (
            vec![
                -0.9324695142031521,
                -0.6612093864662645,
                -0.2386191860831969,
                0.2386191860831969,
                0.6612093864662645,
                0.9324695142031521,
            ],
            vec![
                0.1713244923791704,
                0.3607615730481386,
                0.4679139345726910,
                0.4679139345726910,
                0.3607615730481386,
                0.1713244923791704,
            ],
        ),
        _ => panic!("Gauss-Legendre order {n} not tabulated"),
    };
    let xs = x.iter().map(|t| 0.5 * (t + 1.0)).collect();
    let ws = w.iter().map(|t| 0.5 * t).collect();
    (xs, ws)
}

#[derive(Debug, Clone)]
pub struct QuadratureRule {
    /// Reference coordinates (third entry unused in 2D).
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

fn gl_for_degree(deg: usize) -> (Vec<f64>, Vec<f64>) {
    gauss_legendre_01((deg / 2 + 1).clamp(1, 6))
}

/// Quadrature on the reference d-simplex, exact for total degree `degree`.
pub fn simplex_rule(dim: usize, degree: usize) -> QuadratureRule {
    match dim {
        2 => {
            // Duffy: x = u, y = v (1 - u); Jacobian (1 - u) raises the
            // u-degree by one.
            let (xu, wu) = gl_for_degree(degree + 1);
            let (xv, wv) = gl_for_degree(degree);
            let mut points = Vec::with_capacity(xu.len() * xv.len());
            let mut weights = Vec::with_capacity(points.capacity());
            for (u, a) in xu.iter().zip(&wu) {
                for (v, b) in xv.iter().zip(&wv) {
                    points.push([*u, v * (1.0 - u), 0.0]);
                    weights.push(a * b * (1.0 - u));
                }
            }
            QuadratureRule { points, weights }
        }
        3 => {
            let (xu, wu) = gl_for_degree(degree + 2);
            let (xv, wv) = gl_for_degree(degree + 1);
            let (xw, ww) = gl_for_degree(degree);
            let mut points = Vec::new();
            let mut weights = Vec::new();
            for (u, a) in xu.iter().zip(&wu) {
                for (v, b) in xv.iter().zip(&wv) {
                    for (w, c) in xw.iter().zip(&ww) {
                        let y = v * (1.0 - u);
                        let z = w * (1.0 - u) * (1.0 - v);
                        points.push([*u, y, z]);
                        weights.push(a * b * c * (1.0 - u) * (1.0 - u) * (1.0 - v));
                    }
                }
            }
            QuadratureRule { points, weights }
        }
        _ => panic!("unsupported dimension {dim}"),
    }
}

/// Quadrature on the reference facet: [0,1] for 2D meshes, the reference
/// triangle for 3D meshes. Points are facet-local coordinates.
pub fn facet_rule(dim: usize, degree: usize) -> (Vec<[f64; 2]>, Vec<f64>) {
    match dim {
        2 => {
            let (x, w) = gl_for_degree(degree);
            (x.iter().map(|&t| [t, 0.0]).collect(), w)
        }
        3 => {
            let r = simplex_rule(2, degree);
            (r.points.iter().map(|p| [p[0], p[1]]).collect(), r.weights)
        }
        _ => panic!("unsupported dimension {dim}"),
    }
}
