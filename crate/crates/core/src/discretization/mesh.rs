use crate::error::{Error, Result};

/// Uniform simplicial mesh of the unit interval or unit square.
///
/// In 2D every lattice square is split along its lower-left to upper-right
/// diagonal. Nodes are numbered lexicographically, `x` fastest.
#[derive(Debug, Clone)]
pub struct Mesh {
    dim: usize,
    n: usize,
    nodes: Vec<[f64; 2]>,
    elements: Vec<usize>,
    boundary: Vec<bool>,
}

pub fn build_mesh(dim: usize, n: usize) -> Result<Mesh> {
    if !(1..=2).contains(&dim) {
        return Err(Error::InvalidDimension(dim));
    }
    if n < 2 {
        return Err(Error::InvalidResolution(n));
    }
    let inv = 1.0 / n as f64;
    let mut nodes = Vec::new();
    let mut boundary = Vec::new();
    let mut elements = Vec::new();
    if dim == 1 {
        for i in 0..=n {
            nodes.push([i as f64 * inv, 0.0]);
            boundary.push(i == 0 || i == n);
        }
        for i in 0..n {
            elements.extend_from_slice(&[i, i + 1]);
        }
    } else {
        let idx = |i: usize, j: usize| j * (n + 1) + i;
        for j in 0..=n {
            for i in 0..=n {
                nodes.push([i as f64 * inv, j as f64 * inv]);
                boundary.push(i == 0 || i == n || j == 0 || j == n);
            }
        }
        for j in 0..n {
            for i in 0..n {
                let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
                elements.extend_from_slice(&[a, b, c]);
                elements.extend_from_slice(&[a, c, d]);
            }
        }
    }
    Ok(Mesh {
        dim,
        n,
        nodes,
        elements,
        boundary,
    })
}

impl Mesh {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Subdivisions per direction.
    pub fn resolution(&self) -> usize {
        self.n
    }

    /// Largest element diameter.
    pub fn h(&self) -> f64 {
        let h = 1.0 / self.n as f64;
        if self.dim == 1 {
            h
        } else {
            h * std::f64::consts::SQRT_2
        }
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes_per_element(&self) -> usize {
        self.dim + 1
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len() / self.nodes_per_element()
    }

    pub fn element(&self, e: usize) -> &[usize] {
        let k = self.nodes_per_element();
        &self.elements[e * k..(e + 1) * k]
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        self.boundary[node]
    }

    pub fn boundary_nodes(&self) -> Vec<usize> {
        (0..self.num_nodes()).filter(|&i| self.boundary[i]).collect()
    }

    /// Measure of an element (length or area).
    pub fn element_measure(&self, e: usize) -> f64 {
        let v = self.element(e);
        let p = |i: usize| self.nodes[v[i]];
        if self.dim == 1 {
            (p(1)[0] - p(0)[0]).abs()
        } else {
            let (a, b, c) = (p(0), p(1), p(2));
            0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])).abs()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_mesh() {
        let m = build_mesh(1, 4).unwrap();
        assert_eq!(m.num_nodes(), 5);
        assert_eq!(m.num_elements(), 4);
        assert_eq!(m.h(), 0.25);
        assert_eq!(m.boundary_nodes(), vec![0, 4]);
    }

    #[test]
    fn square_mesh() {
        let m = build_mesh(2, 2).unwrap();
        assert_eq!(m.num_nodes(), 9);
        assert_eq!(m.num_elements(), 8);
        assert_eq!(m.boundary_nodes().len(), 8);
        let area: f64 = (0..m.num_elements()).map(|e| m.element_measure(e)).sum();
        assert!((area - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_coarse_or_bad_dimension() {
        assert!(matches!(build_mesh(1, 1), Err(Error::InvalidResolution(1))));
        assert!(matches!(build_mesh(3, 4), Err(Error::InvalidDimension(3))));
    }
}
