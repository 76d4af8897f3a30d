//! Spectral element matrices on Gauss-Lobatto-Legendre (GLL) node grids:
//! Lagrange shape functions, plane stress/strain constitutive matrices,
//! stiffness and consistent/lumped mass for uncut and cut elements, and the
//! lumping schemes (nodal quadrature, HRZ diagonal scaling, row summing).
//!
//! Degrees of freedom are node-major with (u_x, u_y) interleaved; nodes run
//! in tensor-lexicographic order with the ξ index fastest.

use crate::geometry::{ElementClass, ImplicitDomain, IndicatorConfig, Rect, Vec2};
use crate::linalg::dense::Mat;
use crate::quadrature::{
    build_quadtree, for_each_quad_point, gauss_rule, gll_rule, CellStatus, QuadtreeCell,
};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ElementError {
    #[error("Young's modulus {0} must be positive")]
    NonpositiveYoung(f64),
    #[error("Poisson ratio {0} outside (-1, 0.5)")]
    PoissonOutOfRange(f64),
    #[error("mass density {0} must be positive")]
    NonpositiveDensity(f64),
    #[error("nodal-quadrature lumping requires an uncut element")]
    NodalQuadratureOnCutElement,
    #[error("HRZ lumping needs positive total mass, got {0}")]
    ZeroTotalMass(f64),
    #[error(transparent)]
    Rule(#[from] crate::quadrature::RuleError),
}

/// Plane reduction of the 3D constitutive law.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum StressState {
    PlaneStress,
    PlaneStrain,
}

/// Isotropic linear-elastic material.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Material {
    /// Young's modulus in Pa.
    pub e: f64,
    /// Poisson ratio.
    pub nu: f64,
    /// Mass density in kg/m³.
    pub rho: f64,
    pub state: StressState,
}

impl Material {
    pub fn new(e: f64, nu: f64, rho: f64, state: StressState) -> Result<Self, ElementError> {
        if !(e > 0.0) {
            return Err(ElementError::NonpositiveYoung(e));
        }
        if !(-1.0 < nu && nu < 0.5) {
            return Err(ElementError::PoissonOutOfRange(nu));
        }
        if !(rho > 0.0) {
            return Err(ElementError::NonpositiveDensity(rho));
        }
        Ok(Material { e, nu, rho, state })
    }

    /// First and second Lamé constants (λ_L, μ) from the engineering
    /// constants.
    pub fn lame(&self) -> (f64, f64) {
        let lambda = self.e * self.nu / ((1.0 + self.nu) * (1.0 - 2.0 * self.nu));
        let mu = self.e / (2.0 * (1.0 + self.nu));
        (lambda, mu)
    }
}

/// 3×3 elasticity matrix in Voigt order (xx, yy, xy).
pub fn constitutive(material: &Material) -> Mat {
    let mut c = Mat::zeros(3, 3);
    match material.state {
        StressState::PlaneStress => {
            let f = material.e / (1.0 - material.nu * material.nu);
            c.set(0, 0, f);
            c.set(1, 1, f);
            c.set(0, 1, f * material.nu);
            c.set(1, 0, f * material.nu);
            c.set(2, 2, f * (1.0 - material.nu) / 2.0);
        }
        StressState::PlaneStrain => {
            let (lambda, mu) = material.lame();
            c.set(0, 0, lambda + 2.0 * mu);
            c.set(1, 1, lambda + 2.0 * mu);
            c.set(0, 1, lambda);
            c.set(1, 0, lambda);
            c.set(2, 2, mu);
        }
    }
    c
}

/// 1D Lagrange basis supported at the GLL nodes of order `p`, cached for
/// repeated evaluation.
#[derive(Clone, Debug)]
pub struct Lagrange1D {
    nodes: Vec<f64>,
}

impl Lagrange1D {
    pub fn new(p: usize) -> Result<Self, ElementError> {
        Ok(Lagrange1D {
            nodes: gll_rule(p)?.nodes,
        })
    }

    pub fn order(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// All basis values N_i(xi). Exact Kronecker delta at the nodes.
    pub fn values(&self, xi: f64) -> Vec<f64> {
        let n = self.nodes.len();
        let mut out = vec![0.0; n];
        for i in 0..n {
            let mut v = 1.0;
            for j in 0..n {
                if j != i {
                    v *= (xi - self.nodes[j]) / (self.nodes[i] - self.nodes[j]);
                }
            }
            out[i] = v;
        }
        out
    }

    /// All basis derivatives dN_i/dxi.
    pub fn gradients(&self, xi: f64) -> Vec<f64> {
        let n = self.nodes.len();
        let mut out = vec![0.0; n];
        for i in 0..n {
            let mut sum = 0.0;
            for m in 0..n {
                if m == i {
                    continue;
                }
                let mut term = 1.0 / (self.nodes[i] - self.nodes[m]);
                for j in 0..n {
                    if j != i && j != m {
                        term *= (xi - self.nodes[j]) / (self.nodes[i] - self.nodes[j]);
                    }
                }
                sum += term;
            }
            out[i] = sum;
        }
        out
    }
}

/// Shape-function values of order `p` at `xi` (convenience wrapper).
pub fn shape_functions(p: usize, xi: f64) -> Vec<f64> {
    Lagrange1D::new(p).expect("supported order").values(xi)
}

/// Shape-function derivatives of order `p` at `xi`.
pub fn shape_gradients(p: usize, xi: f64) -> Vec<f64> {
    Lagrange1D::new(p).expect("supported order").gradients(xi)
}

/// Tensor node index with the ξ index running fastest.
pub fn node_index(p: usize, i: usize, j: usize) -> usize {
    j * (p + 1) + i
}

/// Number of displacement DOFs of a 2D element of order `p`.
pub fn n_dof(p: usize) -> usize {
    2 * (p + 1) * (p + 1)
}

/// Physical coordinates of the element's GLL node grid, node-major order.
pub fn node_coords(p: usize, bbox: &Rect) -> Vec<Vec2> {
    let basis = Lagrange1D::new(p).expect("supported order");
    let c = bbox.center();
    let hx = 0.5 * bbox.width();
    let hy = 0.5 * bbox.height();
    let mut coords = Vec::with_capacity((p + 1) * (p + 1));
    for j in 0..=p {
        for i in 0..=p {
            coords.push(Vec2::new(
                c.x + hx * basis.nodes[i],
                c.y + hy * basis.nodes[j],
            ));
        }
    }
    coords
}

/// Per-element stiffness, mass, and cut metadata.
#[derive(Clone, Debug)]
pub struct ElementMatrices {
    /// Stiffness, N/m (unit thickness).
    pub k_c: Mat,
    /// Consistent mass, kg.
    pub m_c: Mat,
    /// Default lumped mass: nodal quadrature when uncut, HRZ when cut.
    pub m_lumped: Vec<f64>,
    /// Physical volume fraction of the element.
    pub chi: f64,
    /// True if the element is crossed by the domain boundary.
    pub cut: bool,
}

/// Accumulate `w * B^T C B` into the upper triangle of `k`, given per-node
/// physical gradients; mirrored to the lower triangle by the caller.
fn add_stiffness_point(
    k: &mut Mat,
    c: &Mat,
    gx: &[f64],
    gy: &[f64],
    w: f64,
) {
    let n_nodes = gx.len();
    let c00 = c.get(0, 0);
    let c01 = c.get(0, 1);
    let c22 = c.get(2, 2);
    let c11 = c.get(1, 1);
    for a in 0..n_nodes {
        let (gxa, gya) = (gx[a], gy[a]);
        for b in a..n_nodes {
            let (gxb, gyb) = (gx[b], gy[b]);
            // DOF pairs (2a, 2b), (2a, 2b+1), (2a+1, 2b), (2a+1, 2b+1):
            let kxx = c00 * gxa * gxb + c22 * gya * gyb;
            let kxy = c01 * gxa * gyb + c22 * gya * gxb;
            let kyx = c01 * gya * gxb + c22 * gxa * gyb;
            let kyy = c11 * gya * gyb + c22 * gxa * gxb;
            k.add_to(2 * a, 2 * b, w * kxx);
            k.add_to(2 * a, 2 * b + 1, w * kxy);
            k.add_to(2 * a + 1, 2 * b + 1, w * kyy);
            if a != b {
                k.add_to(2 * a + 1, 2 * b, w * kyx);
            }
        }
    }
}

fn add_mass_point(m: &mut Mat, shape: &[f64], w: f64) {
    let n_nodes = shape.len();
    for a in 0..n_nodes {
        for b in a..n_nodes {
            let v = w * shape[a] * shape[b];
            m.add_to(2 * a, 2 * b, v);
            m.add_to(2 * a + 1, 2 * b + 1, v);
        }
    }
}

fn mirror_upper(mat: &mut Mat) {
    let n = mat.rows();
    for a in 0..n {
        for b in (a + 1)..n {
            let v = mat.get(a, b);
            mat.set(b, a, v);
        }
    }
}

/// Tensor shape values at (ξ, η), node-major.
fn shape_2d(basis: &Lagrange1D, xi: f64, eta: f64) -> Vec<f64> {
    let nx = basis.values(xi);
    let ny = basis.values(eta);
    let n1 = basis.order() + 1;
    let mut out = vec![0.0; n1 * n1];
    for j in 0..n1 {
        for i in 0..n1 {
            out[j * n1 + i] = nx[i] * ny[j];
        }
    }
    out
}

/// Physical-space gradients (∂/∂x, ∂/∂y) of all shape functions at (ξ, η).
fn gradients_2d(basis: &Lagrange1D, bbox: &Rect, xi: f64, eta: f64) -> (Vec<f64>, Vec<f64>) {
    let nx = basis.values(xi);
    let ny = basis.values(eta);
    let dx = basis.gradients(xi);
    let dy = basis.gradients(eta);
    let sx = 2.0 / bbox.width();
    let sy = 2.0 / bbox.height();
    let n1 = basis.order() + 1;
    let mut gx = vec![0.0; n1 * n1];
    let mut gy = vec![0.0; n1 * n1];
    for j in 0..n1 {
        for i in 0..n1 {
            gx[j * n1 + i] = dx[i] * ny[j] * sx;
            gy[j * n1 + i] = nx[i] * dy[j] * sy;
        }
    }
    (gx, gy)
}

/// Probe depth used when classifying an element for matrix construction.
pub fn classification_depth(k: usize) -> usize {
    k.clamp(1, 6)
}

/// Element stiffness matrix `∫ α B^T C B dΩ` with unit thickness.
pub fn element_stiffness(
    domain: &ImplicitDomain,
    cfg: IndicatorConfig,
    material: &Material,
    bbox: &Rect,
    p: usize,
    k: usize,
) -> Result<Mat, ElementError> {
    Ok(compute_element_matrices(domain, cfg, material, bbox, p, k)?.k_c)
}

/// Consistent element mass matrix `∫ α ρ N^T N dΩ` with unit thickness.
pub fn element_mass_consistent(
    domain: &ImplicitDomain,
    cfg: IndicatorConfig,
    material: &Material,
    bbox: &Rect,
    p: usize,
    k: usize,
) -> Result<Mat, ElementError> {
    Ok(compute_element_matrices(domain, cfg, material, bbox, p, k)?.m_c)
}

/// Physical volume fraction χ of the element at subdivision depth `k`:
/// the indicator integral with α₀ = 0 over the reference area.
pub fn volume_fraction(domain: &ImplicitDomain, bbox: &Rect, k: usize) -> f64 {
    match domain.classify_element(bbox, classification_depth(k)) {
        ElementClass::Uncut => 1.0,
        ElementClass::FullyFictitious => 0.0,
        ElementClass::Cut => {
            let leaves = build_quadtree(domain, bbox, k);
            chi_from_leaves(domain, bbox, &leaves)
        }
    }
}

/// Physical area fraction from an existing leaf partition; uniform leaves
/// contribute exactly, cut leaves via Gauss sampling of the indicator.
fn chi_from_leaves(domain: &ImplicitDomain, bbox: &Rect, leaves: &[QuadtreeCell]) -> f64 {
    let rule = gauss_rule(3).expect("fixed rule");
    let zero = IndicatorConfig { alpha0: 0.0 };
    let mut phys_area = 0.0;
    for cell in leaves {
        match cell.status {
            CellStatus::Physical => phys_area += cell.bbox.area(),
            CellStatus::Fictitious => {}
            CellStatus::CutLeaf => {
                let det_js = 0.25 * cell.bbox.area();
                let c = cell.bbox.center();
                let hx = 0.5 * cell.bbox.width();
                let hy = 0.5 * cell.bbox.height();
                for (i, &ri) in rule.nodes.iter().enumerate() {
                    for (j, &rj) in rule.nodes.iter().enumerate() {
                        let xi = c.x + hx * ri;
                        let eta = c.y + hy * rj;
                        let ec = bbox.center();
                        let x = Vec2::new(
                            ec.x + 0.5 * bbox.width() * xi,
                            ec.y + 0.5 * bbox.height() * eta,
                        );
                        phys_area +=
                            domain.alpha(zero, x) * rule.weights[i] * rule.weights[j] * det_js;
                    }
                }
            }
        }
    }
    phys_area / 4.0
}

/// Build stiffness, consistent mass, the default lumped mass (nodal
/// quadrature when uncut, HRZ when cut), and cut metadata in one pass.
pub fn compute_element_matrices(
    domain: &ImplicitDomain,
    cfg: IndicatorConfig,
    material: &Material,
    bbox: &Rect,
    p: usize,
    k: usize,
) -> Result<ElementMatrices, ElementError> {
    let basis = Lagrange1D::new(p)?;
    let rule = gauss_rule(p + 1)?;
    let c = constitutive(material);
    let nd = n_dof(p);
    let mut k_c = Mat::zeros(nd, nd);
    let mut m_c = Mat::zeros(nd, nd);
    let det_j = 0.25 * bbox.area();
    let class = domain.classify_element(bbox, classification_depth(k));
    let cut = class == ElementClass::Cut;

    let mut visit = |xi: f64, eta: f64, w_ref: f64, alpha: f64| {
        if alpha == 0.0 {
            return;
        }
        let w = w_ref * det_j * alpha;
        let (gx, gy) = gradients_2d(&basis, bbox, xi, eta);
        add_stiffness_point(&mut k_c, &c, &gx, &gy, w);
        let shape = shape_2d(&basis, xi, eta);
        add_mass_point(&mut m_c, &shape, w * material.rho);
    };

    let chi;
    match class {
        ElementClass::Uncut => {
            chi = 1.0;
            for (i, &xi) in rule.nodes.iter().enumerate() {
                for (j, &eta) in rule.nodes.iter().enumerate() {
                    visit(xi, eta, rule.weights[i] * rule.weights[j], 1.0);
                }
            }
        }
        _ => {
            let leaves = build_quadtree(domain, bbox, k);
            for_each_quad_point(domain, cfg, bbox, &leaves, &rule, |q| {
                visit(q.xi, q.eta, q.weight, q.alpha);
            });
            chi = chi_from_leaves(domain, bbox, &leaves);
        }
    }
    mirror_upper(&mut k_c);
    mirror_upper(&mut m_c);

    let m_lumped = if cut {
        lump_hrz(&m_c)?
    } else {
        lump_nodal_quadrature(p, bbox, material, class)?
    };

    Ok(ElementMatrices {
        k_c,
        m_c,
        m_lumped,
        chi,
        cut,
    })
}

/// Diagonal mass by nodal (GLL) quadrature: `M_ii = ρ w_i w_j det J` per
/// displacement component. Restricted to uncut elements.
pub fn lump_nodal_quadrature(
    p: usize,
    bbox: &Rect,
    material: &Material,
    class: ElementClass,
) -> Result<Vec<f64>, ElementError> {
    if class != ElementClass::Uncut {
        return Err(ElementError::NodalQuadratureOnCutElement);
    }
    let rule = gll_rule(p)?;
    let det_j = 0.25 * bbox.area();
    let mut diag = vec![0.0; n_dof(p)];
    for j in 0..=p {
        for i in 0..=p {
            let m = material.rho * rule.weights[i] * rule.weights[j] * det_j;
            let node = node_index(p, i, j);
            diag[2 * node] = m;
            diag[2 * node + 1] = m;
        }
    }
    Ok(diag)
}

/// HRZ lumping: scale the diagonal of the consistent matrix by
/// `β = (Σ_ij M_ij) / (Σ_i M_ii)` so total mass is conserved.
pub fn lump_hrz(m_consistent: &Mat) -> Result<Vec<f64>, ElementError> {
    let n = m_consistent.rows();
    let mut total = 0.0;
    let mut diag_sum = 0.0;
    for i in 0..n {
        diag_sum += m_consistent.get(i, i);
        for j in 0..n {
            total += m_consistent.get(i, j);
        }
    }
    if !(total > 0.0) || !(diag_sum > 0.0) {
        return Err(ElementError::ZeroTotalMass(total));
    }
    let beta = total / diag_sum;
    Ok((0..n).map(|i| beta * m_consistent.get(i, i)).collect())
}

/// Row-sum lumping: `M_ii = Σ_j M_ij`. Conserves mass; entries can be
/// negative on cut elements (reported by the caller, not rejected here).
pub fn lump_rowsum(m_consistent: &Mat) -> Vec<f64> {
    let n = m_consistent.rows();
    (0..n)
        .map(|i| (0..n).map(|j| m_consistent.get(i, j)).sum())
        .collect()
}

/// HRZ applied per quadtree subcell and summed, an alternative diagonal for
/// cut elements used in comparison studies. Subcells without mass are
/// skipped.
pub fn lump_hrz_per_subcell(
    domain: &ImplicitDomain,
    cfg: IndicatorConfig,
    material: &Material,
    bbox: &Rect,
    p: usize,
    k: usize,
) -> Result<Vec<f64>, ElementError> {
    let basis = Lagrange1D::new(p)?;
    let rule = gauss_rule(p + 1)?;
    let det_j = 0.25 * bbox.area();
    let nd = n_dof(p);
    let leaves = build_quadtree(domain, bbox, k);
    let mut diag = vec![0.0; nd];
    for cell in &leaves {
        let mut m_s = Mat::zeros(nd, nd);
        let one_cell = std::slice::from_ref(cell);
        for_each_quad_point(domain, cfg, bbox, one_cell, &rule, |q| {
            if q.alpha == 0.0 {
                return;
            }
            let shape = shape_2d(&basis, q.xi, q.eta);
            add_mass_point(&mut m_s, &shape, q.weight * det_j * q.alpha * material.rho);
        });
        mirror_upper(&mut m_s);
        let mut total = 0.0;
        let mut dsum = 0.0;
        for i in 0..nd {
            dsum += m_s.get(i, i);
            for j in 0..nd {
                total += m_s.get(i, j);
            }
        }
        if total > 0.0 && dsum > 0.0 {
            let beta = total / dsum;
            for i in 0..nd {
                diag[i] += beta * m_s.get(i, i);
            }
        }
    }
    Ok(diag)
}
