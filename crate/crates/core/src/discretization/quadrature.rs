//! Reference-element quadrature and Lagrange bases.

/// Quadrature on the reference element. For the interval the point is
/// `(xi, 0, 0)` on `[0, 1]`; for the triangle it is barycentric
/// `(l0, l1, l2)`. Weights sum to one.
#[derive(Debug, Clone)]
pub struct RefQuadrature {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

pub fn interval_gauss4() -> RefQuadrature {
    let t = [
        -0.8611363115940526,
        -0.3399810435848563,
        0.3399810435848563,
        0.8611363115940526,
    ];
    let w = [
        0.3478548451374538,
        0.6521451548625461,
        0.6521451548625461,
        0.3478548451374538,
    ];
    RefQuadrature {
        points: t.iter().map(|t| [0.5 * (1.0 + t), 0.0, 0.0]).collect(),
        weights: w.iter().map(|w| 0.5 * w).collect(),
    }
}

/// Six-point rule, exact for degree 4.
pub fn triangle_degree4() -> RefQuadrature {
    let (a1, b1, w1) = (0.108103018168070, 0.445948490915965, 0.223381589678011);
    let (a2, b2, w2) = (0.816847572980459, 0.091576213509771, 0.109951743655322);
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for (a, b, w) in [(a1, b1, w1), (a2, b2, w2)] {
        for p in [[a, b, b], [b, a, b], [b, b, a]] {
            points.push(p);
            weights.push(w);
        }
    }
    RefQuadrature { points, weights }
}

/// Local Lagrange basis of degree 1 or 2 on a simplex.
///
/// Node order: vertices first, then edge midpoints `(0,1)`, `(1,2)`, `(2,0)`
/// for triangles or the single midpoint for intervals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LagrangeBasis {
    pub dim: usize,
    pub degree: usize,
}

pub const TRIANGLE_EDGES: [(usize, usize); 3] = [(0, 1), (1, 2), (2, 0)];

impl LagrangeBasis {
    pub fn len(&self) -> usize {
        match (self.dim, self.degree) {
            (1, 1) => 2,
            (1, 2) => 3,
            (2, 1) => 3,
            (2, 2) => 6,
            _ => unreachable!("unsupported basis"),
        }
    }

    /// Values and gradients at a reference point, given the barycentric
    /// gradients of the element (physical coordinates).
    pub fn eval(&self, bary: &[f64; 3], grad_bary: &[[f64; 2]; 3], vals: &mut Vec<f64>, grads: &mut Vec<[f64; 2]>) {
        vals.clear();
        grads.clear();
        let nv = self.dim + 1;
        let l = |i: usize| {
            if self.dim == 1 {
                if i == 0 {
                    1.0 - bary[0]
                } else {
                    bary[0]
                }
            } else {
                bary[i]
            }
        };
        let scale = |g: [f64; 2], s: f64| [g[0] * s, g[1] * s];
        if self.degree == 1 {
            for i in 0..nv {
                vals.push(l(i));
                grads.push(grad_bary[i]);
            }
            return;
        }
        for i in 0..nv {
            let li = l(i);
            vals.push(li * (2.0 * li - 1.0));
            grads.push(scale(grad_bary[i], 4.0 * li - 1.0));
        }
        let edges: &[(usize, usize)] = if self.dim == 1 { &[(0, 1)] } else { &TRIANGLE_EDGES };
        for &(a, b) in edges {
            let (la, lb) = (l(a), l(b));
            vals.push(4.0 * la * lb);
            let (ga, gb) = (grad_bary[a], grad_bary[b]);
            grads.push([4.0 * (la * gb[0] + lb * ga[0]), 4.0 * (la * gb[1] + lb * ga[1])]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rules_integrate_polynomials() {
        let q = interval_gauss4();
        let s: f64 = q.points.iter().zip(&q.weights).map(|(p, w)| w * p[0].powi(7)).sum();
        assert!((s - 1.0 / 8.0).abs() < 1e-15);

        let q = triangle_degree4();
        let total: f64 = q.weights.iter().sum();
        assert!((total - 1.0).abs() < 1e-14);
        // Reference triangle has area 1/2: \int x^2 y^2 = 1/180, so mean = 1/90.
        let s: f64 = q
            .points
            .iter()
            .zip(&q.weights)
            .map(|(p, w)| w * p[1].powi(2) * p[2].powi(2))
            .sum();
        assert!((s - 1.0 / 90.0).abs() < 1e-12);
    }

    #[test]
    fn p2_partition_of_unity() {
        let basis = LagrangeBasis { dim: 2, degree: 2 };
        let gb = [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]];
        let (mut v, mut g) = (Vec::new(), Vec::new());
        basis.eval(&[0.2, 0.3, 0.5], &gb, &mut v, &mut g);
        assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let gs = g.iter().fold([0.0, 0.0], |a, b| [a[0] + b[0], a[1] + b[1]]);
        assert!(gs[0].abs() < 1e-14 && gs[1].abs() < 1e-14);
    }
}
