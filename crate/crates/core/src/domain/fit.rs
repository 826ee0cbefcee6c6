//! Weighted least-squares gradient stencils at curved-boundary nodes.

use nalgebra::{DMatrix, DVector};

/// Sparse linear functional `Σ wₖ u[nodeₖ]`.
pub type Stencil = Vec<(usize, f64)>;

/// Gradient stencils at `center` from scattered neighbours.
///
/// Fits `u(p) ≈ u(center) + Σ c_α (p - center)^α` over all monomials of
/// total degree 1..=`degree`, anchored at the centre value, and returns the
/// linear maps from nodal values to `∂x u` and `∂y u` at the centre.
/// Coordinates are scaled by `h` so the normal equations stay well conditioned.
pub fn ls_gradient(
    center_node: usize,
    center: [f64; 2],
    neighbours: &[(usize, [f64; 2])],
    h: f64,
    degree: usize,
) -> (Stencil, Stencil) {
    let mut exps = Vec::new();
    for total in 1..=degree {
        for py in 0..=total {
            exps.push((total - py, py));
        }
    }
    let m = neighbours.len();
    let k = exps.len();
    assert!(m >= k, "not enough neighbours ({m}) for a degree-{degree} fit");

    let mut a = DMatrix::<f64>::zeros(m, k);
    let mut wts = DVector::<f64>::zeros(m);
    for (row, (_, p)) in neighbours.iter().enumerate() {
        let dx = (p[0] - center[0]) / h;
        let dy = (p[1] - center[1]) / h;
        let w = 1.0 / (1.0 + dx * dx + dy * dy);
        wts[row] = w;
        for (col, &(ex, ey)) in exps.iter().enumerate() {
            a[(row, col)] = w * dx.powi(ex as i32) * dy.powi(ey as i32);
        }
    }
    // rows of the pseudo-inverse give the coefficient functionals
    let pinv = a
        .clone()
        .pseudo_inverse(1e-13)
        .expect("pseudo-inverse of a finite matrix");

    let gx_row = exps.iter().position(|&e| e == (1, 0)).unwrap();
    let gy_row = exps.iter().position(|&e| e == (0, 1)).unwrap();
    let build = |r: usize| {
        let mut st = Vec::with_capacity(m + 1);
        let mut center_w = 0.0;
        for (col, (node, _)) in neighbours.iter().enumerate() {
            let c = pinv[(r, col)] * wts[col] / h;
            st.push((*node, c));
            center_w -= c;
        }
        st.push((center_node, center_w));
        st
    };
    (build(gx_row), build(gy_row))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_for_cubic() {
        let h = 0.05;
        let center = [0.3, -0.2];
        let mut nb = Vec::new();
        let mut id = 1;
        for i in -3i32..=0 {
            for j in -3i32..=3 {
                if i == 0 && j == 0 {
                    continue;
                }
                nb.push((id, [center[0] + i as f64 * h * 0.9, center[1] + j as f64 * h * 1.1]));
                id += 1;
            }
        }
        let u = |p: [f64; 2]| 1.0 + 2.0 * p[0] - p[1] + p[0] * p[0] * p[1] - 3.0 * p[1].powi(3);
        let mut vals = vec![0.0; id];
        vals[0] = u(center);
        for (n, p) in &nb {
            vals[*n] = u(*p);
        }
        let (gx, gy) = ls_gradient(0, center, &nb, h, 3);
        let ex: f64 = gx.iter().map(|(n, w)| w * vals[*n]).sum();
        let ey: f64 = gy.iter().map(|(n, w)| w * vals[*n]).sum();
        let (x, y) = (center[0], center[1]);
        assert!((ex - (2.0 + 2.0 * x * y)).abs() < 1e-9);
        assert!((ey - (-1.0 + x * x - 9.0 * y * y)).abs() < 1e-9);
    }
}
