use nalgebra::DVector;
use nalgebra_sparse::CsrMatrix;
use serde::{Deserialize, Serialize};

use super::mesh::Mesh;
use super::quadrature::{interval_gauss4, triangle_degree4, LagrangeBasis, RefQuadrature, TRIANGLE_EDGES};
use crate::error::{Error, Result};
use crate::linalg::sparse::{csr_from_triplets, spmv, SpdSolver};
use crate::model::PhysParams;

/// Displacement element paired with continuous P1 pressure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DisplacementElement {
    /// Equal-order P1 displacement.
    P1,
    /// Quadratic displacement (Taylor-Hood pair).
    #[default]
    #[serde(alias = "taylor-hood")]
    P2,
}

impl DisplacementElement {
    pub fn degree(self) -> usize {
        match self {
            Self::P1 => 1,
            Self::P2 => 2,
        }
    }
}

/// Evaluated geometry and bases at one quadrature point.
pub(crate) struct QuadPoint<'a> {
    pub x: [f64; 2],
    pub weight: f64,
    pub psi: &'a [f64],
    pub grad_psi: &'a [[f64; 2]],
    pub phi: &'a [f64],
    pub grad_phi: &'a [[f64; 2]],
}

/// Mesh plus displacement node numbering and quadrature.
#[derive(Debug)]
struct Layout {
    mesh: Mesh,
    element: DisplacementElement,
    quad: RefQuadrature,
    u_nodes: Vec<[f64; 2]>,
    u_interior: Vec<Option<usize>>,
    u_elem_nodes: Vec<usize>,
    n_interior: usize,
}

/// All assembled bilinear forms on one mesh, with Dirichlet displacement
/// nodes eliminated and pressure carried on every vertex.
#[derive(Debug)]
pub struct OperatorBundle {
    layout: Layout,
    params: PhysParams,
    pub(crate) ke: CsrMatrix<f64>,
    pub(crate) kdd: CsrMatrix<f64>,
    pub(crate) mu_mass: CsrMatrix<f64>,
    pub(crate) ap: CsrMatrix<f64>,
    pub(crate) mp: CsrMatrix<f64>,
    pub(crate) ddiv: CsrMatrix<f64>,
    pub(crate) ddiv_t: CsrMatrix<f64>,
    pub(crate) g: CsrMatrix<f64>,
    meanvec: DVector<f64>,
    measure: f64,
    ke_solver: SpdSolver,
    mp_solver: SpdSolver,
}

pub fn assemble_forms(mesh: &Mesh, params: &PhysParams) -> Result<OperatorBundle> {
    assemble_forms_with(mesh, params, DisplacementElement::default())
}

pub fn assemble_forms_with(mesh: &Mesh, params: &PhysParams, element: DisplacementElement) -> Result<OperatorBundle> {
    let report = crate::model::validate_params(params);
    if !report.is_valid() {
        return Err(Error::InvalidParams(report.violations));
    }
    let dim = mesh.dim();
    let n = mesh.resolution();
    let deg = element.degree();
    let lattice = n * deg;
    let key = |x: &[f64; 2]| -> usize {
        let ix = (x[0] * lattice as f64).round() as usize;
        let iy = (x[1] * lattice as f64).round() as usize;
        iy * (lattice + 1) + ix
    };
    let n_unodes = (lattice + 1).pow(dim as u32);
    let mut u_nodes = vec![[0.0; 2]; n_unodes];
    let mut on_boundary = vec![false; n_unodes];
    let ubasis = LagrangeBasis { dim, degree: deg };
    let per = ubasis.len();
    let mut u_elem_nodes = Vec::with_capacity(mesh.num_elements() * per);
    for e in 0..mesh.num_elements() {
        let v = mesh.element(e);
        let mut pts: Vec<[f64; 2]> = v.iter().map(|&i| mesh.nodes()[i]).collect();
        if deg == 2 {
            let edges: &[(usize, usize)] = if dim == 1 { &[(0, 1)] } else { &TRIANGLE_EDGES };
            for &(a, b) in edges {
                let (pa, pb) = (mesh.nodes()[v[a]], mesh.nodes()[v[b]]);
                pts.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]);
            }
        }
        for p in pts {
            let k = key(&p);
            u_nodes[k] = p;
            let tol = 1e-12;
            let b = p[0] < tol || p[0] > 1.0 - tol || (dim == 2 && (p[1] < tol || p[1] > 1.0 - tol));
            on_boundary[k] = b;
            u_elem_nodes.push(k);
        }
    }
    let mut u_interior = vec![None; n_unodes];
    let mut n_interior = 0;
    for k in 0..n_unodes {
        if !on_boundary[k] {
            u_interior[k] = Some(n_interior);
            n_interior += 1;
        }
    }
    let quad = if dim == 1 {
        interval_gauss4()
    } else {
        triangle_degree4()
    };
    let layout = Layout {
        mesh: mesh.clone(),
        element,
        quad,
        u_nodes,
        u_interior,
        u_elem_nodes,
        n_interior,
    };
    let f = layout.assemble(params);
    let ke_solver = SpdSolver::new(&f.ke, "elasticity matrix")?;
    let mp_solver = SpdSolver::new(&f.mp, "pressure mass matrix")?;
    let ddiv_t = f.ddiv.transpose();
    let g_trips: Vec<_> = ddiv_t.triplet_iter().map(|(i, j, v)| (i, j, -v)).collect();
    let g = csr_from_triplets(ddiv_t.nrows(), ddiv_t.ncols(), g_trips);
    let measure = f.meanvec.sum();
    Ok(OperatorBundle {
        layout,
        params: *params,
        ke: f.ke,
        kdd: f.kdd,
        mu_mass: f.mu_mass,
        ap: f.ap,
        mp: f.mp,
        ddiv: f.ddiv,
        ddiv_t,
        g,
        meanvec: f.meanvec,
        measure,
        ke_solver,
        mp_solver,
    })
}

struct Forms {
    ke: CsrMatrix<f64>,
    kdd: CsrMatrix<f64>,
    mu_mass: CsrMatrix<f64>,
    ap: CsrMatrix<f64>,
    mp: CsrMatrix<f64>,
    ddiv: CsrMatrix<f64>,
    meanvec: DVector<f64>,
}

impl Layout {
    fn for_each_quad_point(&self, mut f: impl FnMut(usize, &[usize], &QuadPoint)) {
        let dim = self.mesh.dim();
        let pbasis = LagrangeBasis { dim, degree: 1 };
        let ubasis = LagrangeBasis {
            dim,
            degree: self.element.degree(),
        };
        let per = ubasis.len();
        let (mut psi, mut gpsi, mut phi, mut gphi) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for e in 0..self.mesh.num_elements() {
            let v = self.mesh.element(e);
            let xs: Vec<[f64; 2]> = v.iter().map(|&i| self.mesh.nodes()[i]).collect();
            let measure = self.mesh.element_measure(e);
            let grad_bary = if dim == 1 {
                let h = xs[1][0] - xs[0][0];
                [[-1.0 / h, 0.0], [1.0 / h, 0.0], [0.0, 0.0]]
            } else {
                let e1 = [xs[1][0] - xs[0][0], xs[1][1] - xs[0][1]];
                let e2 = [xs[2][0] - xs[0][0], xs[2][1] - xs[0][1]];
                let det = e1[0] * e2[1] - e1[1] * e2[0];
                let g1 = [e2[1] / det, -e2[0] / det];
                let g2 = [-e1[1] / det, e1[0] / det];
                [[-g1[0] - g2[0], -g1[1] - g2[1]], g1, g2]
            };
            let unodes = &self.u_elem_nodes[e * per..(e + 1) * per];
            for (bary, w) in self.quad.points.iter().zip(&self.quad.weights) {
                let x = if dim == 1 {
                    [xs[0][0] + bary[0] * (xs[1][0] - xs[0][0]), 0.0]
                } else {
                    let mut x = [0.0; 2];
                    for i in 0..3 {
                        x[0] += bary[i] * xs[i][0];
                        x[1] += bary[i] * xs[i][1];
                    }
                    x
                };
                pbasis.eval(bary, &grad_bary, &mut psi, &mut gpsi);
                ubasis.eval(bary, &grad_bary, &mut phi, &mut gphi);
                let qp = QuadPoint {
                    x,
                    weight: w * measure,
                    psi: &psi,
                    grad_psi: &gpsi,
                    phi: &phi,
                    grad_phi: &gphi,
                };
                f(e, unodes, &qp);
            }
        }
    }

    fn assemble(&self, params: &PhysParams) -> Forms {
        let dim = self.mesh.dim();
        let (lam, mu, kappa) = (params.lambda_e, params.mu, params.kappa);
        let nu = self.n_interior * dim;
        let np = self.mesh.num_nodes();
        let (mut ke, mut kdd, mut mm, mut ap, mut mp, mut dd) =
            (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
        let mut meanvec = DVector::zeros(np);
        let interior = &self.u_interior;
        self.for_each_quad_point(|e, unodes, q| {
            let pv = self.mesh.element(e);
            let w = q.weight;
            for (c, &pc) in pv.iter().enumerate() {
                meanvec[pc] += w * q.psi[c];
                for (d, &pd) in pv.iter().enumerate() {
                    let gg = q.grad_psi[c][0] * q.grad_psi[d][0] + q.grad_psi[c][1] * q.grad_psi[d][1];
                    ap.push((pc, pd, w * kappa * gg));
                    mp.push((pc, pd, w * q.psi[c] * q.psi[d]));
                }
            }
            for (a, &na) in unodes.iter().enumerate() {
                let Some(ia) = interior[na] else { continue };
                let ga = q.grad_phi[a];
                for i in 0..dim {
                    let row = ia * dim + i;
                    for (c, &pc) in pv.iter().enumerate() {
                        dd.push((pc, row, w * ga[i] * q.psi[c]));
                    }
                    for (b, &nb) in unodes.iter().enumerate() {
                        let Some(ib) = interior[nb] else { continue };
                        let gb = q.grad_phi[b];
                        let dot = ga[0] * gb[0] + ga[1] * gb[1];
                        for j in 0..dim {
                            let col = ib * dim + j;
                            let delta = if i == j { 1.0 } else { 0.0 };
                            let e_ab = mu * (delta * dot + ga[j] * gb[i]) + lam * ga[i] * gb[j];
                            ke.push((row, col, w * e_ab));
                            kdd.push((row, col, w * ga[i] * gb[j]));
                            if i == j {
                                mm.push((row, col, w * q.phi[a] * q.phi[b]));
                            }
                        }
                    }
                }
            }
        });
        Forms {
            ke: csr_from_triplets(nu, nu, ke),
            kdd: csr_from_triplets(nu, nu, kdd),
            mu_mass: csr_from_triplets(nu, nu, mm),
            ap: csr_from_triplets(np, np, ap),
            mp: csr_from_triplets(np, np, mp),
            ddiv: csr_from_triplets(np, nu, dd),
            meanvec,
        }
    }
}

impl OperatorBundle {
    fn for_each_quad_point(&self, f: impl FnMut(usize, &[usize], &QuadPoint)) {
        self.layout.for_each_quad_point(f)
    }

    pub fn mesh(&self) -> &Mesh {
        &self.layout.mesh
    }

    pub fn dim(&self) -> usize {
        self.layout.mesh.dim()
    }

    pub fn element(&self) -> DisplacementElement {
        self.layout.element
    }

    /// Parameters the forms were assembled with. Only `lambda_e`, `mu` and
    /// `kappa` enter the matrices.
    pub fn params(&self) -> &PhysParams {
        &self.params
    }

    /// Checks that `p` shares the assembled elastic moduli and permeability.
    pub fn check_compatible(&self, p: &PhysParams) -> Result<()> {
        let a = &self.params;
        if a.lambda_e != p.lambda_e || a.mu != p.mu || a.kappa != p.kappa {
            return Err(Error::InvalidParams(vec![
                "lambda_e, mu and kappa must match the assembled operator bundle".into(),
            ]));
        }
        Ok(())
    }

    pub fn num_pressure_dofs(&self) -> usize {
        self.layout.mesh.num_nodes()
    }

    pub fn num_displacement_dofs(&self) -> usize {
        self.layout.n_interior * self.layout.mesh.dim()
    }

    /// Elasticity form `e(u, v)`.
    pub fn ke(&self) -> &CsrMatrix<f64> {
        &self.ke
    }

    /// `(div u, div v)`.
    pub fn kdivdiv(&self) -> &CsrMatrix<f64> {
        &self.kdd
    }

    /// Displacement mass matrix.
    pub fn mu(&self) -> &CsrMatrix<f64> {
        &self.mu_mass
    }

    /// Darcy form `kappa (grad p, grad q)`.
    pub fn ap(&self) -> &CsrMatrix<f64> {
        &self.ap
    }

    /// Pressure mass matrix.
    pub fn mp(&self) -> &CsrMatrix<f64> {
        &self.mp
    }

    /// `(div u, q)`: rows are pressure, columns displacement.
    pub fn ddiv(&self) -> &CsrMatrix<f64> {
        &self.ddiv
    }

    pub fn ddiv_t(&self) -> &CsrMatrix<f64> {
        &self.ddiv_t
    }

    /// `(grad p, v)`, stored as the exact negative transpose of `ddiv`.
    pub fn g(&self) -> &CsrMatrix<f64> {
        &self.g
    }

    /// `(1, psi_i)` for every pressure basis function.
    pub fn meanvec(&self) -> &DVector<f64> {
        &self.meanvec
    }

    pub fn domain_measure(&self) -> f64 {
        self.measure
    }

    /// `Ke^{-1} b` with the cached factorization.
    pub fn ke_solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.ke_solver.solve(b)
    }

    pub(crate) fn ke_solver(&self) -> &SpdSolver {
        &self.ke_solver
    }

    /// `Mp^{-1} b`: dual load to nodal values.
    pub fn mp_solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.mp_solver.solve(b)
    }

    /// Removes the mass-weighted mean of a nodal pressure vector.
    pub fn remove_mean(&self, p: &mut DVector<f64>) {
        let m = self.meanvec.dot(p) / self.measure;
        p.add_scalar_mut(-m);
    }

    /// Projects a dual (load) vector onto the annihilator of constants.
    pub fn remove_dual_mean(&self, f: &mut DVector<f64>) {
        let s = f.sum() / self.measure;
        f.axpy(-s, &self.meanvec, 1.0);
    }

    /// `|int p| / (||p|| |Omega|^{1/2})`, which lies in `[0, 1]`.
    pub fn relative_mean(&self, p: &DVector<f64>) -> f64 {
        let l2 = spmv(&self.mp, p).dot(p).max(0.0).sqrt();
        if l2 == 0.0 {
            return 0.0;
        }
        self.meanvec.dot(p).abs() / (l2 * self.measure.sqrt())
    }

    /// Displacement nodes including Dirichlet ones.
    pub fn displacement_nodes(&self) -> &[[f64; 2]] {
        &self.layout.u_nodes
    }

    /// Nodal values at every displacement node, zero on the boundary.
    pub fn expand_displacement(&self, u: &DVector<f64>) -> Vec<[f64; 2]> {
        let dim = self.dim();
        self.layout
            .u_interior
            .iter()
            .map(|slot| match slot {
                Some(i) => {
                    let mut v = [0.0; 2];
                    for c in 0..dim {
                        v[c] = u[i * dim + c];
                    }
                    v
                }
                None => [0.0; 2],
            })
            .collect()
    }

    pub fn interpolate_pressure(&self, f: &dyn Fn(&[f64; 2]) -> f64) -> DVector<f64> {
        DVector::from_iterator(self.num_pressure_dofs(), self.layout.mesh.nodes().iter().map(f))
    }

    pub fn interpolate_displacement(&self, f: &dyn Fn(&[f64; 2]) -> [f64; 2]) -> DVector<f64> {
        let dim = self.dim();
        let mut out = DVector::zeros(self.num_displacement_dofs());
        for (k, slot) in self.layout.u_interior.iter().enumerate() {
            if let Some(i) = slot {
                let v = f(&self.layout.u_nodes[k]);
                for c in 0..dim {
                    out[i * dim + c] = v[c];
                }
            }
        }
        out
    }

    /// `(f, psi_i)` for a scalar field.
    pub fn load_pressure(&self, f: &dyn Fn(&[f64; 2]) -> f64) -> DVector<f64> {
        let mut out = DVector::zeros(self.num_pressure_dofs());
        self.for_each_quad_point(|e, _, q| {
            let fv = f(&q.x) * q.weight;
            for (c, &pc) in self.layout.mesh.element(e).iter().enumerate() {
                out[pc] += fv * q.psi[c];
            }
        });
        out
    }

    /// `(f, phi_i e_c)` for a vector field.
    pub fn load_displacement(&self, f: &dyn Fn(&[f64; 2]) -> [f64; 2]) -> DVector<f64> {
        let dim = self.dim();
        let mut out = DVector::zeros(self.num_displacement_dofs());
        self.for_each_quad_point(|_, unodes, q| {
            let fv = f(&q.x);
            for (a, &na) in unodes.iter().enumerate() {
                if let Some(i) = self.layout.u_interior[na] {
                    for c in 0..dim {
                        out[i * dim + c] += q.weight * fv[c] * q.phi[a];
                    }
                }
            }
        });
        out
    }

    /// Continuous `L2` distance between a discrete pressure and a function.
    pub fn l2_error_pressure(&self, p: &DVector<f64>, exact: &dyn Fn(&[f64; 2]) -> f64) -> f64 {
        let mut s = 0.0;
        self.for_each_quad_point(|e, _, q| {
            let ph: f64 = self
                .layout
                .mesh
                .element(e)
                .iter()
                .enumerate()
                .map(|(c, &pc)| p[pc] * q.psi[c])
                .sum();
            s += q.weight * (ph - exact(&q.x)).powi(2);
        });
        s.sqrt()
    }

    /// Continuous `L2` distance between a discrete displacement and a field.
    pub fn l2_error_displacement(&self, u: &DVector<f64>, exact: &dyn Fn(&[f64; 2]) -> [f64; 2]) -> f64 {
        let dim = self.dim();
        let mut s = 0.0;
        self.for_each_quad_point(|_, unodes, q| {
            let mut uh = [0.0; 2];
            for (a, &na) in unodes.iter().enumerate() {
                if let Some(i) = self.layout.u_interior[na] {
                    for c in 0..dim {
                        uh[c] += u[i * dim + c] * q.phi[a];
                    }
                }
            }
            let ex = exact(&q.x);
            for c in 0..dim {
                s += q.weight * (uh[c] - ex[c]).powi(2);
            }
        });
        s.sqrt()
    }

    /// Independent assembly of `(grad p, v)`, used to cross-check `g`.
    pub fn assemble_gradient_form(&self) -> CsrMatrix<f64> {
        let dim = self.dim();
        let mut t = Vec::new();
        self.for_each_quad_point(|e, unodes, q| {
            for (a, &na) in unodes.iter().enumerate() {
                let Some(ia) = self.layout.u_interior[na] else { continue };
                for i in 0..dim {
                    for (c, &pc) in self.layout.mesh.element(e).iter().enumerate() {
                        t.push((ia * dim + i, pc, q.weight * q.grad_psi[c][i] * q.phi[a]));
                    }
                }
            }
        });
        csr_from_triplets(self.num_displacement_dofs(), self.num_pressure_dofs(), t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::build_mesh;
    use crate::linalg::sparse::{max_abs_entry, to_dense};

    #[test]
    fn p1_stiffness_on_two_elements() {
        let mesh = build_mesh(1, 2).unwrap();
        let b = assemble_forms_with(&mesh, &PhysParams::default(), DisplacementElement::P1).unwrap();
        assert_eq!(b.num_displacement_dofs(), 1);
        // (lambda + 2 mu) * 2/h with h = 1/2
        assert!((to_dense(b.ke())[(0, 0)] - 12.0).abs() < 1e-13);
    }

    #[test]
    fn dof_counts() {
        let m = build_mesh(2, 4).unwrap();
        let b = assemble_forms(&m, &PhysParams::default()).unwrap();
        assert_eq!(b.num_pressure_dofs(), 25);
        assert_eq!(b.num_displacement_dofs(), 2 * 49);
        let b1 = assemble_forms_with(&m, &PhysParams::default(), DisplacementElement::P1).unwrap();
        assert_eq!(b1.num_displacement_dofs(), 2 * 9);
    }

    #[test]
    fn gradient_is_negative_divergence_transpose() {
        for (dim, n) in [(1, 8), (2, 4)] {
            let m = build_mesh(dim, n).unwrap();
            for el in [DisplacementElement::P1, DisplacementElement::P2] {
                let b = assemble_forms_with(&m, &PhysParams::default(), el).unwrap();
                let g2 = b.assemble_gradient_form();
                let diff = crate::linalg::sparse::combine(&[(1.0, b.g()), (-1.0, &g2)]);
                assert!(max_abs_entry(&diff) < 1e-14);
                let sum = crate::linalg::sparse::combine(&[(1.0, b.g()), (1.0, b.ddiv_t())]);
                assert_eq!(max_abs_entry(&sum), 0.0);
            }
        }
    }

    #[test]
    fn mass_and_measure() {
        let m = build_mesh(2, 3).unwrap();
        let b = assemble_forms(&m, &PhysParams::default()).unwrap();
        assert!((b.domain_measure() - 1.0).abs() < 1e-14);
        let ones = DVector::from_element(b.num_pressure_dofs(), 1.0);
        assert!((spmv(b.mp(), &ones).dot(&ones) - 1.0).abs() < 1e-14);
        assert!(spmv(b.ap(), &ones).amax() < 1e-14);
    }

    #[test]
    fn p2_reproduces_quadratic_displacement() {
        let m = build_mesh(1, 4).unwrap();
        let b = assemble_forms(&m, &PhysParams::default()).unwrap();
        let f = |x: &[f64; 2]| [x[0] * (1.0 - x[0]), 0.0];
        let u = b.interpolate_displacement(&f);
        assert!(b.l2_error_displacement(&u, &f) < 1e-14);
        let full = b.expand_displacement(&u);
        assert_eq!(full[0], [0.0, 0.0]);
        assert_eq!(full[full.len() - 1], [0.0, 0.0]);
    }
}
