//! Global assembly and explicit central-difference time integration.
//!
//! Elements live on a conforming Cartesian mesh whose nodes are shared
//! Gauss–Lobatto–Legendre points, so neighboring elements join seamlessly.
//! Fully fictitious elements are dropped at assembly time together with any
//! node referenced by no remaining element; Dirichlet constraints are applied
//! by removing the fixed degrees of freedom from the global system (row and
//! column elimination). Every assembled operator therefore acts on the free
//! DOFs only, which keeps the spectra used for time-step and conditioning
//! diagnostics unpolluted by constraint tricks.
//!
//! The time loop never forms a global stiffness matrix: internal forces are
//! computed element by element and combined through a fixed set of
//! accumulation buckets, so results are bitwise reproducible for any worker
//! count.

use std::collections::HashMap;
use std::sync::Arc;

use thiserror::Error;

use crate::element::{
    classification_depth, compute_element_matrices, node_coords, ElementError, Material,
};
use crate::evs::{
    modified_matrices, reference_maxima, stabilize_element, EvsConfig, EvsError, MatrixForm,
    ReferenceMaxima,
};
use crate::geometry::{ElementClass, GeometryError, ImplicitDomain, IndicatorConfig, Rect, Vec2};
use crate::linalg::{
    lanczos_max, spectral_radius_generalized, spectral_radius_generalized_diag, Cholesky,
    LinalgError, Mat,
};
use crate::quadrature::gll_rule;

/// Highest supported polynomial order for mesh construction.
pub const MAX_ORDER: usize = 12;

/// Number of fixed accumulation buckets for the element-by-element internal
/// force. The bucket layout depends only on the element list, never on the
/// worker count, so force vectors are bitwise identical for any parallelism.
pub const FORCE_BUCKETS: usize = 64;

/// Free systems at or below this size use a dense eigensolve for the
/// critical-time-step estimate; larger diagonal-mass systems switch to a
/// matrix-free Lanczos iteration.
const DENSE_EIG_LIMIT: usize = 600;

/// Largest free-DOF count for which a non-diagonal global mass matrix is
/// supported (dense storage and dense generalized eigensolves).
const DENSE_MASS_LIMIT: usize = 900;

/// Displacement magnitude treated as divergence even while still finite;
/// a stable linear run never gets anywhere near this.
const DIVERGENCE_LIMIT: f64 = 1e100;

const NONE32: u32 = u32::MAX;

/// Errors from meshing, assembly, and time integration.
#[derive(Debug, Error)]
pub enum SolverError {
    #[error("mesh breaks invalid: {0}")]
    BadBreaks(String),
    #[error("polynomial order {got} outside the supported range 1..={max}")]
    BadOrder { got: usize, max: usize },
    #[error("expected {expected} per-element orders, got {got}")]
    WrongOrdersLength { expected: usize, got: usize },
    #[error(
        "non-matching polynomial orders: element ({0},{1}) has p={2} but element ({3},{4}) has p={5}",
        a.0, a.1, pa, b.0, b.1, pb
    )]
    NonMatchingOrder {
        a: (usize, usize),
        b: (usize, usize),
        pa: usize,
        pb: usize,
    },
    #[error("element ({0},{1}) requests p={got} but the mesh node grid was built for p={mesh_p}", elem.0, elem.1)]
    OrderMismatchWithMesh {
        elem: (usize, usize),
        got: usize,
        mesh_p: usize,
    },
    #[error("constraint references node ({0},{1}) outside the node grid", node.0, node.1)]
    ConstraintOutOfRange { node: (usize, usize) },
    #[error("no active elements: the physical domain does not intersect the mesh")]
    NoActiveElements,
    #[error("system has no free degrees of freedom")]
    EmptyFreeSystem,
    #[error("matrix/vector size mismatch: {0}")]
    DimensionMismatch(String),
    #[error("load references free DOF {dof}, but the system has {n} free DOFs")]
    BadLoadDof { dof: usize, n: usize },
    #[error("probe '{name}' lies on an inactive mesh node {node:?} (only fictitious elements touch it)")]
    ProbeInactive { name: String, node: (usize, usize) },
    #[error("probe placement needs a mesh-backed system")]
    NotAMeshSystem,
    #[error(
        "singular mass matrix: nonpositive entry {value:.3e} at free DOF {free_dof} ({detail}); \
         every free DOF needs mass for explicit time stepping"
    )]
    SingularMass {
        free_dof: usize,
        detail: String,
        value: f64,
    },
    #[error("mass matrix is not positive definite")]
    MassNotSpd,
    #[error("effective matrix M/dt^2 + C/(2 dt) is not positive definite")]
    EffectiveNotSpd,
    #[error("time step must be positive and finite, got {0}")]
    BadDt(f64),
    #[error("displacement diverged (non-finite or beyond {DIVERGENCE_LIMIT:.0e}) at step {step}")]
    Diverged { step: usize },
    #[error("stiffness spectrum has no positive eigenvalue; critical time step undefined")]
    NonpositiveStiffnessSpectrum,
    #[error("non-diagonal mass is limited to {limit} free DOFs, system has {n}")]
    TooLargeForDenseMass { n: usize, limit: usize },
    #[error(transparent)]
    Element(#[from] ElementError),
    #[error(transparent)]
    Evs(#[from] EvsError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

// ---------------------------------------------------------------------------
// Mesh
// ---------------------------------------------------------------------------

/// Conforming Cartesian mesh with per-axis break positions (variable element
/// sizes allowed) and a single polynomial order shared by all elements.
/// Global nodes are the tensor grid of Gauss–Lobatto–Legendre points; an
/// element edge shared by two elements uses the same node IDs in both.
#[derive(Debug, Clone)]
pub struct Mesh {
    x_breaks: Vec<f64>,
    y_breaks: Vec<f64>,
    p: usize,
    gll: Vec<f64>,
}

impl Mesh {
    /// Mesh from explicit break positions along each axis.
    pub fn from_breaks(
        x_breaks: Vec<f64>,
        y_breaks: Vec<f64>,
        p: usize,
    ) -> Result<Self, SolverError> {
        if !(1..=MAX_ORDER).contains(&p) {
            return Err(SolverError::BadOrder {
                got: p,
                max: MAX_ORDER,
            });
        }
        for (axis, b) in [("x", &x_breaks), ("y", &y_breaks)] {
            if b.len() < 2 {
                return Err(SolverError::BadBreaks(format!(
                    "{axis} axis needs at least two break positions"
                )));
            }
            if b.iter().any(|v| !v.is_finite()) {
                return Err(SolverError::BadBreaks(format!(
                    "{axis} axis contains a non-finite break"
                )));
            }
            if b.windows(2).any(|w| w[1] <= w[0]) {
                return Err(SolverError::BadBreaks(format!(
                    "{axis} axis breaks must be strictly increasing"
                )));
            }
        }
        let gll = gll_rule(p)
            .map_err(|_| SolverError::BadOrder {
                got: p,
                max: MAX_ORDER,
            })?
            .nodes;
        Ok(Mesh {
            x_breaks,
            y_breaks,
            p,
            gll,
        })
    }

    /// Uniform `nx` by `ny` subdivision of a rectangular extent.
    pub fn uniform(extent: &Rect, nx: usize, ny: usize, p: usize) -> Result<Self, SolverError> {
        if nx == 0 || ny == 0 {
            return Err(SolverError::BadBreaks(
                "element counts must be at least 1".into(),
            ));
        }
        Mesh::from_breaks(
            uniform_breaks(extent.min.x, extent.max.x, nx),
            uniform_breaks(extent.min.y, extent.max.y, ny),
            p,
        )
    }

    pub fn nx(&self) -> usize {
        self.x_breaks.len() - 1
    }

    pub fn ny(&self) -> usize {
        self.y_breaks.len() - 1
    }

    pub fn order(&self) -> usize {
        self.p
    }

    pub fn x_breaks(&self) -> &[f64] {
        &self.x_breaks
    }

    pub fn y_breaks(&self) -> &[f64] {
        &self.y_breaks
    }

    pub fn extent(&self) -> Rect {
        Rect::new(
            Vec2::new(self.x_breaks[0], self.y_breaks[0]),
            Vec2::new(
                *self.x_breaks.last().unwrap(),
                *self.y_breaks.last().unwrap(),
            ),
        )
        .expect("breaks are strictly increasing")
    }

    /// Bounding box of element `(ex, ey)`.
    pub fn element_rect(&self, ex: usize, ey: usize) -> Rect {
        Rect::new(
            Vec2::new(self.x_breaks[ex], self.y_breaks[ey]),
            Vec2::new(self.x_breaks[ex + 1], self.y_breaks[ey + 1]),
        )
        .expect("breaks are strictly increasing")
    }

    /// Node count along x: `nx * p + 1`.
    pub fn n_nodes_x(&self) -> usize {
        self.nx() * self.p + 1
    }

    /// Node count along y: `ny * p + 1`.
    pub fn n_nodes_y(&self) -> usize {
        self.ny() * self.p + 1
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes_x() * self.n_nodes_y()
    }

    /// Total grid DOF count (two components per node), before any removal.
    pub fn n_grid_dofs(&self) -> usize {
        2 * self.n_nodes()
    }

    fn axis_node(breaks: &[f64], gll: &[f64], p: usize, idx: usize) -> f64 {
        let n_el = breaks.len() - 1;
        let e = (idx / p).min(n_el - 1);
        let i = idx - e * p;
        if i == 0 {
            breaks[e]
        } else if i == p {
            breaks[e + 1]
        } else {
            let (a, b) = (breaks[e], breaks[e + 1]);
            0.5 * (a + b) + 0.5 * gll[i] * (b - a)
        }
    }

    /// Physical position of grid node `(ix, iy)`.
    pub fn node_position(&self, ix: usize, iy: usize) -> Vec2 {
        Vec2::new(
            Mesh::axis_node(&self.x_breaks, &self.gll, self.p, ix),
            Mesh::axis_node(&self.y_breaks, &self.gll, self.p, iy),
        )
    }

    /// Grid node whose position matches `point` within `tol` per axis.
    pub fn node_at(&self, point: Vec2, tol: f64) -> Option<(usize, usize)> {
        let find = |breaks: &[f64], want: f64| -> Option<usize> {
            let n = (breaks.len() - 1) * self.p + 1;
            let mut best = (f64::INFINITY, 0usize);
            for idx in 0..n {
                let x = Mesh::axis_node(breaks, &self.gll, self.p, idx);
                let d = (x - want).abs();
                if d < best.0 {
                    best = (d, idx);
                }
            }
            (best.0 <= tol).then_some(best.1)
        };
        Some((
            find(&self.x_breaks, point.x)?,
            find(&self.y_breaks, point.y)?,
        ))
    }

    /// Global node IDs of element `(ex, ey)` in element-local order
    /// (row-major over the local tensor grid, matching the element matrices).
    pub fn element_node_ids(&self, ex: usize, ey: usize) -> Vec<usize> {
        let nnx = self.n_nodes_x();
        let p = self.p;
        let mut out = Vec::with_capacity((p + 1) * (p + 1));
        for j in 0..=p {
            for i in 0..=p {
                out.push((ey * p + j) * nnx + (ex * p + i));
            }
        }
        out
    }
}

/// `n + 1` evenly spaced break positions with exact endpoints.
pub fn uniform_breaks(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let span = hi - lo;
    (0..=n)
        .map(|i| {
            if i == 0 {
                lo
            } else if i == n {
                hi
            } else {
                lo + span * (i as f64) / (n as f64)
            }
        })
        .collect()
}

/// Sides of the mesh extent, used to express boundary constraints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Edge {
    Left,
    Right,
    Bottom,
    Top,
}

/// One constrained node: either or both displacement components fixed to zero.
#[derive(Debug, Clone, Copy)]
pub struct NodeFix {
    pub node: (usize, usize),
    pub fix_x: bool,
    pub fix_y: bool,
}

/// Constraints for every node on one edge of the mesh.
pub fn fix_edge(mesh: &Mesh, edge: Edge, fix_x: bool, fix_y: bool) -> Vec<NodeFix> {
    let (nnx, nny) = (mesh.n_nodes_x(), mesh.n_nodes_y());
    let nodes: Vec<(usize, usize)> = match edge {
        Edge::Left => (0..nny).map(|iy| (0, iy)).collect(),
        Edge::Right => (0..nny).map(|iy| (nnx - 1, iy)).collect(),
        Edge::Bottom => (0..nnx).map(|ix| (ix, 0)).collect(),
        Edge::Top => (0..nnx).map(|ix| (ix, nny - 1)).collect(),
    };
    nodes
        .into_iter()
        .map(|node| NodeFix { node, fix_x, fix_y })
        .collect()
}

// ---------------------------------------------------------------------------
// Assembly
// ---------------------------------------------------------------------------

/// Assembly-time options: quadrature subdivision depth for cut elements,
/// stabilization settings, Rayleigh damping coefficients, and the worker
/// count for the internal-force loop.
#[derive(Debug, Clone)]
pub struct AssemblyConfig {
    /// Quadtree subdivision limit for cut-element quadrature.
    pub depth: usize,
    /// Stabilization settings; `evs.alpha0` also sets the fictitious-domain
    /// indicator value used for all element integrals.
    pub evs: EvsConfig,
    /// Mass-proportional Rayleigh damping coefficient.
    pub alpha_r: f64,
    /// Stiffness-proportional Rayleigh damping coefficient. Nonzero values
    /// make the effective matrix non-diagonal and route stepping through a
    /// factorized solve.
    pub beta_r: f64,
    /// Worker threads for internal-force evaluation (results are identical
    /// for any value).
    pub workers: usize,
}

impl Default for AssemblyConfig {
    fn default() -> Self {
        AssemblyConfig {
            depth: 8,
            evs: EvsConfig::default(),
            alpha_r: 0.0,
            beta_r: 0.0,
            workers: 1,
        }
    }
}

/// Element and DOF bookkeeping gathered during assembly.
#[derive(Debug, Clone, Default)]
pub struct AssemblyStats {
    pub n_cut: usize,
    pub n_uncut: usize,
    pub n_fictitious: usize,
    pub n_nodes_total: usize,
    pub n_nodes_active: usize,
    pub n_dof_free: usize,
    pub n_dof_fixed: usize,
    pub n_evs_warnings: usize,
    /// Physical volume fraction of each cut element, keyed by element index.
    pub chi_cut: Vec<((usize, usize), f64)>,
}

/// Global mass matrix: diagonal when every element contribution is diagonal,
/// dense otherwise (consistent mass or un-lumped stabilization).
#[derive(Debug, Clone)]
pub enum MassRepr {
    Diagonal(Vec<f64>),
    Dense(Mat),
}

impl MassRepr {
    pub fn dim(&self) -> usize {
        match self {
            MassRepr::Diagonal(d) => d.len(),
            MassRepr::Dense(m) => m.rows(),
        }
    }

    pub fn is_diagonal(&self) -> bool {
        matches!(self, MassRepr::Diagonal(_))
    }

    fn matvec_into(&self, x: &[f64], out: &mut [f64]) {
        match self {
            MassRepr::Diagonal(d) => {
                for ((o, &m), &v) in out.iter_mut().zip(d).zip(x) {
                    *o = m * v;
                }
            }
            MassRepr::Dense(m) => m.matvec_into(x, out),
        }
    }

    fn to_dense(&self) -> Mat {
        match self {
            MassRepr::Diagonal(d) => Mat::from_diag(d),
            MassRepr::Dense(m) => m.clone(),
        }
    }
}

struct AssembledElement {
    /// Free-DOF index per element-local DOF; `NONE32` marks constrained or
    /// removed DOFs (their rows and columns are dropped on the fly).
    dofs: Vec<u32>,
    /// Position of each local DOF inside its bucket accumulator.
    scatter: Vec<u32>,
    k: Arc<Mat>,
}

/// Assembled free-DOF system: element stiffness blocks for matrix-free
/// products, the global mass matrix, damping coefficients, and the mapping
/// between grid DOFs and free DOFs.
pub struct GlobalSystem {
    n_free: usize,
    elements: Vec<AssembledElement>,
    bucket_ranges: Vec<(usize, usize)>,
    bucket_dofs: Vec<Vec<u32>>,
    mass: MassRepr,
    alpha_r: f64,
    beta_r: f64,
    workers: usize,
    free_of_grid: Vec<u32>,
    grid_of_free: Vec<u32>,
    active_nodes: Vec<bool>,
    n_nodes_x: usize,
    pub stats: AssemblyStats,
}

/// Scratch space for bucketed internal-force evaluation; create once per
/// integration loop with [`GlobalSystem::force_buffers`].
pub struct ForceBuffers {
    compact: Vec<Vec<f64>>,
}

/// Assemble the global system with the mesh's uniform polynomial order.
pub fn assemble(
    domain: &ImplicitDomain,
    mesh: &Mesh,
    material: &Material,
    fixed: &[NodeFix],
    cfg: &AssemblyConfig,
) -> Result<GlobalSystem, SolverError> {
    let orders = vec![mesh.order(); mesh.nx() * mesh.ny()];
    assemble_with_orders(domain, mesh, material, fixed, cfg, &orders)
}

/// Assemble with explicit per-element polynomial orders. Shared-edge node
/// identification requires equal orders on adjacent active elements; a
/// mismatch is rejected with the offending element pair.
pub fn assemble_with_orders(
    domain: &ImplicitDomain,
    mesh: &Mesh,
    material: &Material,
    fixed: &[NodeFix],
    cfg: &AssemblyConfig,
    orders: &[usize],
) -> Result<GlobalSystem, SolverError> {
    let (nx, ny, p) = (mesh.nx(), mesh.ny(), mesh.order());
    let nel = nx * ny;
    if orders.len() != nel {
        return Err(SolverError::WrongOrdersLength {
            expected: nel,
            got: orders.len(),
        });
    }
    let ind = IndicatorConfig::new(cfg.evs.alpha0)?;

    // Classify all elements first so order validation can ignore the ones
    // that will be dropped anyway.
    let mut class = Vec::with_capacity(nel);
    for ey in 0..ny {
        for ex in 0..nx {
            let r = mesh.element_rect(ex, ey);
            class.push(domain.classify_element(&r, classification_depth(cfg.depth)));
        }
    }
    let kept_mask: Vec<bool> = class
        .iter()
        .map(|c| !matches!(c, ElementClass::FullyFictitious))
        .collect();
    validate_matching_orders(nx, ny, p, &kept_mask, orders)?;

    // Element matrices. Uncut elements of identical size share one matrix
    // set; cut elements are integrated (and optionally stabilized)
    // individually.
    let mut uncut_cache: HashMap<(u64, u64), (Arc<Mat>, MatrixForm)> = HashMap::new();
    let mut ref_cache: HashMap<(u64, u64), ReferenceMaxima> = HashMap::new();
    let mut kept: Vec<(usize, usize, Arc<Mat>, MatrixForm)> = Vec::new();
    let mut stats = AssemblyStats::default();

    for ey in 0..ny {
        for ex in 0..nx {
            let e = ey * nx + ex;
            match class[e] {
                ElementClass::FullyFictitious => {
                    stats.n_fictitious += 1;
                }
                ElementClass::Uncut => {
                    stats.n_uncut += 1;
                    let r = mesh.element_rect(ex, ey);
                    let key = (r.width().to_bits(), r.height().to_bits());
                    if !uncut_cache.contains_key(&key) {
                        let em = compute_element_matrices(domain, ind, material, &r, p, cfg.depth)?;
                        let m = if cfg.evs.lump_mass {
                            MatrixForm::Diagonal(em.m_lumped)
                        } else {
                            MatrixForm::Dense(em.m_c)
                        };
                        uncut_cache.insert(key, (Arc::new(em.k_c), m));
                    }
                    let (k, m) = uncut_cache.get(&key).unwrap();
                    kept.push((ex, ey, k.clone(), m.clone()));
                }
                ElementClass::Cut => {
                    let r = mesh.element_rect(ex, ey);
                    let em = match compute_element_matrices(domain, ind, material, &r, p, cfg.depth)
                    {
                        Ok(em) => em,
                        // The quadrature found no physical material at this
                        // subdivision depth (a sliver far below the leaf
                        // size with a zero fictitious weight): the element
                        // carries nothing and acts fully fictitious.
                        Err(ElementError::ZeroTotalMass(_)) => {
                            stats.n_fictitious += 1;
                            continue;
                        }
                        Err(e) => return Err(e.into()),
                    };
                    stats.n_cut += 1;
                    let key = (r.width().to_bits(), r.height().to_bits());
                    if !ref_cache.contains_key(&key) {
                        ref_cache.insert(key, reference_maxima(material, &r, p)?);
                    }
                    let refmax = ref_cache.get(&key).unwrap();
                    let coords = node_coords(p, &r);
                    let stab = stabilize_element(&em, &coords, material, &cfg.evs, refmax)?;
                    if stab.warning.is_some() {
                        stats.n_evs_warnings += 1;
                    }
                    let (k_mod, m_mod) = modified_matrices(&em, &stab, &cfg.evs);
                    stats.chi_cut.push(((ex, ey), em.chi));
                    kept.push((ex, ey, Arc::new(k_mod), m_mod));
                }
            }
        }
    }
    if kept.is_empty() {
        return Err(SolverError::NoActiveElements);
    }

    // Active nodes and free-DOF numbering (grid order, deterministic).
    let n_nodes = mesh.n_nodes();
    let nnx = mesh.n_nodes_x();
    let mut active = vec![false; n_nodes];
    for &(ex, ey, ..) in &kept {
        for id in mesh.element_node_ids(ex, ey) {
            active[id] = true;
        }
    }
    let mut dof_fixed = vec![false; 2 * n_nodes];
    for f in fixed {
        let (ix, iy) = f.node;
        if ix >= nnx || iy >= mesh.n_nodes_y() {
            return Err(SolverError::ConstraintOutOfRange { node: f.node });
        }
        let nid = iy * nnx + ix;
        if f.fix_x {
            dof_fixed[2 * nid] = true;
        }
        if f.fix_y {
            dof_fixed[2 * nid + 1] = true;
        }
    }
    let mut free_of_grid = vec![NONE32; 2 * n_nodes];
    let mut grid_of_free: Vec<u32> = Vec::new();
    let mut n_dof_fixed = 0usize;
    for nid in 0..n_nodes {
        if !active[nid] {
            continue;
        }
        for c in 0..2 {
            let g = 2 * nid + c;
            if dof_fixed[g] {
                n_dof_fixed += 1;
            } else {
                free_of_grid[g] = grid_of_free.len() as u32;
                grid_of_free.push(g as u32);
            }
        }
    }
    let n_free = grid_of_free.len();
    stats.n_nodes_total = n_nodes;
    stats.n_nodes_active = active.iter().filter(|&&a| a).count();
    stats.n_dof_free = n_free;
    stats.n_dof_fixed = n_dof_fixed;

    // Element DOF maps.
    let mut elements: Vec<AssembledElement> = kept
        .iter()
        .map(|&(ex, ey, ref k, _)| {
            let nodes = mesh.element_node_ids(ex, ey);
            let mut dofs = Vec::with_capacity(2 * nodes.len());
            for nid in nodes {
                dofs.push(free_of_grid[2 * nid]);
                dofs.push(free_of_grid[2 * nid + 1]);
            }
            AssembledElement {
                dofs,
                scatter: Vec::new(),
                k: k.clone(),
            }
        })
        .collect();

    // Global mass on free DOFs.
    let any_dense = kept
        .iter()
        .any(|(_, _, _, m)| matches!(m, MatrixForm::Dense(_)));
    let mass = if !any_dense {
        let mut d = vec![0.0; n_free];
        for (el, (_, _, _, m)) in elements.iter().zip(&kept) {
            let MatrixForm::Diagonal(v) = m else {
                unreachable!()
            };
            for (l, &fd) in el.dofs.iter().enumerate() {
                if fd != NONE32 {
                    d[fd as usize] += v[l];
                }
            }
        }
        MassRepr::Diagonal(d)
    } else {
        if n_free > DENSE_MASS_LIMIT {
            return Err(SolverError::TooLargeForDenseMass {
                n: n_free,
                limit: DENSE_MASS_LIMIT,
            });
        }
        let mut md = Mat::zeros(n_free, n_free);
        for (el, (_, _, _, m)) in elements.iter().zip(&kept) {
            match m {
                MatrixForm::Diagonal(v) => {
                    for (l, &fd) in el.dofs.iter().enumerate() {
                        if fd != NONE32 {
                            md.add_to(fd as usize, fd as usize, v[l]);
                        }
                    }
                }
                MatrixForm::Dense(mm) => {
                    for (a, &fa) in el.dofs.iter().enumerate() {
                        if fa == NONE32 {
                            continue;
                        }
                        for (b, &fb) in el.dofs.iter().enumerate() {
                            if fb != NONE32 {
                                md.add_to(fa as usize, fb as usize, mm.get(a, b));
                            }
                        }
                    }
                }
            }
        }
        MassRepr::Dense(md)
    };

    let (bucket_ranges, bucket_dofs) = build_buckets(&mut elements);
    Ok(GlobalSystem {
        n_free,
        elements,
        bucket_ranges,
        bucket_dofs,
        mass,
        alpha_r: cfg.alpha_r,
        beta_r: cfg.beta_r,
        workers: cfg.workers.max(1),
        free_of_grid,
        grid_of_free,
        active_nodes: active,
        n_nodes_x: nnx,
        stats,
    })
}

fn validate_matching_orders(
    nx: usize,
    ny: usize,
    mesh_p: usize,
    kept: &[bool],
    orders: &[usize],
) -> Result<(), SolverError> {
    let at = |ex: usize, ey: usize| ey * nx + ex;
    for ey in 0..ny {
        for ex in 0..nx {
            let e = at(ex, ey);
            if !kept[e] {
                continue;
            }
            for (bx, by) in [(ex + 1, ey), (ex, ey + 1)] {
                if bx >= nx || by >= ny {
                    continue;
                }
                let b = at(bx, by);
                if kept[b] && orders[b] != orders[e] {
                    return Err(SolverError::NonMatchingOrder {
                        a: (ex, ey),
                        b: (bx, by),
                        pa: orders[e],
                        pb: orders[b],
                    });
                }
            }
            if orders[e] != mesh_p {
                return Err(SolverError::OrderMismatchWithMesh {
                    elem: (ex, ey),
                    got: orders[e],
                    mesh_p,
                });
            }
        }
    }
    Ok(())
}

fn build_buckets(elements: &mut [AssembledElement]) -> (Vec<(usize, usize)>, Vec<Vec<u32>>) {
    let nel = elements.len();
    let mut ranges = Vec::with_capacity(FORCE_BUCKETS);
    let mut dofs_all = Vec::with_capacity(FORCE_BUCKETS);
    for b in 0..FORCE_BUCKETS {
        let s = b * nel / FORCE_BUCKETS;
        let e = (b + 1) * nel / FORCE_BUCKETS;
        ranges.push((s, e));
        let mut set: Vec<u32> = elements[s..e]
            .iter()
            .flat_map(|el| el.dofs.iter().copied())
            .filter(|&d| d != NONE32)
            .collect();
        set.sort_unstable();
        set.dedup();
        for el in &mut elements[s..e] {
            el.scatter = el
                .dofs
                .iter()
                .map(|&d| {
                    if d == NONE32 {
                        NONE32
                    } else {
                        set.binary_search(&d).unwrap() as u32
                    }
                })
                .collect();
        }
        dofs_all.push(set);
    }
    (ranges, dofs_all)
}

impl GlobalSystem {
    /// Wrap explicit dense matrices as a system (no mesh attached); useful
    /// for small hand-built models and single-DOF studies.
    pub fn from_dense(
        k: Mat,
        mass: MassRepr,
        alpha_r: f64,
        beta_r: f64,
    ) -> Result<GlobalSystem, SolverError> {
        let n = k.rows();
        if k.cols() != n {
            return Err(SolverError::DimensionMismatch(format!(
                "stiffness must be square, got {}x{}",
                k.rows(),
                k.cols()
            )));
        }
        if mass.dim() != n {
            return Err(SolverError::DimensionMismatch(format!(
                "mass dimension {} does not match stiffness dimension {n}",
                mass.dim()
            )));
        }
        let mut elements = vec![AssembledElement {
            dofs: (0..n as u32).collect(),
            scatter: Vec::new(),
            k: Arc::new(k),
        }];
        let (bucket_ranges, bucket_dofs) = build_buckets(&mut elements);
        Ok(GlobalSystem {
            n_free: n,
            elements,
            bucket_ranges,
            bucket_dofs,
            mass,
            alpha_r,
            beta_r,
            workers: 1,
            free_of_grid: (0..n as u32).collect(),
            grid_of_free: (0..n as u32).collect(),
            active_nodes: Vec::new(),
            n_nodes_x: 0,
            stats: AssemblyStats::default(),
        })
    }

    pub fn n_dof(&self) -> usize {
        self.n_free
    }

    pub fn mass(&self) -> &MassRepr {
        &self.mass
    }

    pub fn mass_diagonal(&self) -> Option<&[f64]> {
        match &self.mass {
            MassRepr::Diagonal(d) => Some(d),
            MassRepr::Dense(_) => None,
        }
    }

    pub fn rayleigh(&self) -> (f64, f64) {
        (self.alpha_r, self.beta_r)
    }

    pub fn set_workers(&mut self, workers: usize) {
        self.workers = workers.max(1);
    }

    /// Free-DOF indices (x component, y component) of a grid node. `None`
    /// components are fixed by a constraint.
    pub fn node_free_dofs(
        &self,
        node: (usize, usize),
    ) -> Result<(Option<usize>, Option<usize>), SolverError> {
        if self.n_nodes_x == 0 {
            return Err(SolverError::NotAMeshSystem);
        }
        let (ix, iy) = node;
        let nid = iy * self.n_nodes_x + ix;
        if nid >= self.active_nodes.len() || ix >= self.n_nodes_x {
            return Err(SolverError::ConstraintOutOfRange { node });
        }
        if !self.active_nodes[nid] {
            return Err(SolverError::ProbeInactive {
                name: String::new(),
                node,
            });
        }
        let pick = |g: u32| (g != NONE32).then_some(g as usize);
        Ok((
            pick(self.free_of_grid[2 * nid]),
            pick(self.free_of_grid[2 * nid + 1]),
        ))
    }

    fn describe_free_dof(&self, d: usize) -> String {
        if self.n_nodes_x == 0 {
            return format!("dof {d}");
        }
        let g = self.grid_of_free[d] as usize;
        let nid = g / 2;
        let comp = if g % 2 == 0 { "u_x" } else { "u_y" };
        format!(
            "node ({}, {}), {} component",
            nid % self.n_nodes_x,
            nid / self.n_nodes_x,
            comp
        )
    }

    fn check_mass_positive(&self, diag: &[f64]) -> Result<(), SolverError> {
        for (d, &v) in diag.iter().enumerate() {
            if !(v > 0.0) {
                return Err(SolverError::SingularMass {
                    free_dof: d,
                    detail: self.describe_free_dof(d),
                    value: v,
                });
            }
        }
        Ok(())
    }

    /// Allocate bucket accumulators sized for this system.
    pub fn force_buffers(&self) -> ForceBuffers {
        ForceBuffers {
            compact: self.bucket_dofs.iter().map(|d| vec![0.0; d.len()]).collect(),
        }
    }

    fn run_bucket(&self, b: usize, u: &[f64], compact: &mut [f64], ue: &mut Vec<f64>, fe: &mut Vec<f64>) {
        let (s, e) = self.bucket_ranges[b];
        for el in &self.elements[s..e] {
            let n = el.dofs.len();
            ue.resize(n, 0.0);
            fe.resize(n, 0.0);
            for (l, &fd) in el.dofs.iter().enumerate() {
                ue[l] = if fd == NONE32 { 0.0 } else { u[fd as usize] };
            }
            el.k.matvec_into(&ue[..], &mut fe[..]);
            for (l, &sc) in el.scatter.iter().enumerate() {
                if sc != NONE32 {
                    compact[sc as usize] += fe[l];
                }
            }
        }
    }

    /// Internal force `K u` through element-by-element products and the fixed
    /// bucket reduction. Bitwise deterministic for any worker count.
    pub fn internal_force(&self, u: &[f64], out: &mut [f64], buf: &mut ForceBuffers) {
        assert_eq!(u.len(), self.n_free);
        assert_eq!(out.len(), self.n_free);
        for c in &mut buf.compact {
            c.iter_mut().for_each(|x| *x = 0.0);
        }
        let nb = self.bucket_ranges.len();
        let w = self.workers.min(nb.max(1));
        if w <= 1 {
            let (mut ue, mut fe) = (Vec::new(), Vec::new());
            for b in 0..nb {
                self.run_bucket(b, u, &mut buf.compact[b], &mut ue, &mut fe);
            }
        } else {
            std::thread::scope(|s| {
                let mut rest: &mut [Vec<f64>] = &mut buf.compact;
                for wi in 0..w {
                    let b_start = wi * nb / w;
                    let b_end = (wi + 1) * nb / w;
                    let (chunk, tail) = rest.split_at_mut(b_end - b_start);
                    rest = tail;
                    let sys = &*self;
                    s.spawn(move || {
                        let (mut ue, mut fe) = (Vec::new(), Vec::new());
                        for (off, c) in chunk.iter_mut().enumerate() {
                            sys.run_bucket(b_start + off, u, c, &mut ue, &mut fe);
                        }
                    });
                }
            });
        }
        out.iter_mut().for_each(|x| *x = 0.0);
        for (bd, c) in self.bucket_dofs.iter().zip(&buf.compact) {
            for (i, &d) in bd.iter().enumerate() {
                out[d as usize] += c[i];
            }
        }
    }

    /// Assemble the free-DOF stiffness matrix densely (diagnostics only).
    pub fn dense_stiffness(&self) -> Mat {
        let mut k = Mat::zeros(self.n_free, self.n_free);
        for el in &self.elements {
            for (a, &fa) in el.dofs.iter().enumerate() {
                if fa == NONE32 {
                    continue;
                }
                for (b, &fb) in el.dofs.iter().enumerate() {
                    if fb != NONE32 {
                        k.add_to(fa as usize, fb as usize, el.k.get(a, b));
                    }
                }
            }
        }
        k
    }

    /// Free-DOF mass matrix as a dense matrix (diagnostics only).
    pub fn dense_mass(&self) -> Mat {
        self.mass.to_dense()
    }

    /// Largest generalized stiffness eigenvalue `omega_max^2` of `(K, M)`.
    pub fn stiffness_spectral_radius(&self) -> Result<f64, SolverError> {
        if self.n_free == 0 {
            return Err(SolverError::EmptyFreeSystem);
        }
        let rho = match &self.mass {
            MassRepr::Diagonal(m) => {
                self.check_mass_positive(m)?;
                if self.n_free <= DENSE_EIG_LIMIT {
                    spectral_radius_generalized_diag(&self.dense_stiffness(), m)?
                } else {
                    let s: Vec<f64> = m.iter().map(|&v| 1.0 / v.sqrt()).collect();
                    let mut buf = self.force_buffers();
                    let n = self.n_free;
                    let mut wv = vec![0.0; n];
                    let mut fv = vec![0.0; n];
                    lanczos_max(
                        n,
                        |v, out| {
                            for i in 0..n {
                                wv[i] = v[i] * s[i];
                            }
                            self.internal_force(&wv, &mut fv, &mut buf);
                            for i in 0..n {
                                out[i] = fv[i] * s[i];
                            }
                        },
                        1e-10,
                        4000,
                    )?
                }
            }
            MassRepr::Dense(mm) => {
                if self.n_free > DENSE_MASS_LIMIT {
                    return Err(SolverError::TooLargeForDenseMass {
                        n: self.n_free,
                        limit: DENSE_MASS_LIMIT,
                    });
                }
                spectral_radius_generalized(&self.dense_stiffness(), mm)?
            }
        };
        Ok(rho)
    }

    /// Critical central-difference time step `2 / omega_max`. Independent of
    /// Rayleigh damping by construction.
    pub fn critical_dt(&self) -> Result<f64, SolverError> {
        let rho = self.stiffness_spectral_radius()?;
        if !(rho > 0.0) {
            return Err(SolverError::NonpositiveStiffnessSpectrum);
        }
        Ok(2.0 / rho.sqrt())
    }
}

// ---------------------------------------------------------------------------
// Central-difference time integration
// ---------------------------------------------------------------------------

/// Point load on one free DOF with a time-dependent signal.
pub struct Load {
    pub dof: usize,
    pub signal: Box<dyn Fn(f64) -> f64>,
}

/// Recorded displacement history at one node; samples are `[t, u_x, u_y]`
/// and the series only ever grows.
pub struct ProbeSeries {
    pub name: String,
    pub node: (usize, usize),
    dof_x: Option<usize>,
    dof_y: Option<usize>,
    samples: Vec<[f64; 3]>,
}

impl ProbeSeries {
    pub fn samples(&self) -> &[[f64; 3]] {
        &self.samples
    }

    /// Sample times.
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s[0]).collect()
    }

    /// One displacement component over time (0 = x, 1 = y).
    pub fn component(&self, c: usize) -> Vec<f64> {
        assert!(c < 2);
        self.samples.iter().map(|s| s[1 + c]).collect()
    }
}

enum Path {
    Diagonal {
        inv_khat: Vec<f64>,
        coef_curr: Vec<f64>,
        coef_prev: Vec<f64>,
    },
    Factorized {
        chol: Cholesky,
        fint_prev: Vec<f64>,
        mu: Vec<f64>,
    },
}

/// Central-difference integrator over a [`GlobalSystem`].
///
/// `U_{i+1}` follows from the standard two-level recurrence; the start-up
/// uses `a_0 = M^{-1}(F_0 - K U_0 - C V_0)` and the backward Taylor step
/// `U_{-1} = U_0 - dt V_0 + dt^2/2 a_0`, which places the discrete solution
/// exactly on the sampled free-vibration trajectory.
pub struct Cdm<'s> {
    sys: &'s GlobalSystem,
    dt: f64,
    step: usize,
    u_prev: Vec<f64>,
    u_curr: Vec<f64>,
    u_next: Vec<f64>,
    fint: Vec<f64>,
    fext: Vec<f64>,
    acc0: Vec<f64>,
    path: Path,
    loads: Vec<Load>,
    probes: Vec<ProbeSeries>,
    record_every: usize,
    buf: ForceBuffers,
}

impl<'s> Cdm<'s> {
    /// Set up the integrator from initial displacement and velocity.
    pub fn new(
        sys: &'s GlobalSystem,
        dt: f64,
        u0: &[f64],
        v0: &[f64],
        loads: Vec<Load>,
    ) -> Result<Self, SolverError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(SolverError::BadDt(dt));
        }
        let n = sys.n_free;
        if n == 0 {
            return Err(SolverError::EmptyFreeSystem);
        }
        if u0.len() != n || v0.len() != n {
            return Err(SolverError::DimensionMismatch(format!(
                "initial state length {} / {} does not match {n} free DOFs",
                u0.len(),
                v0.len()
            )));
        }
        for ld in &loads {
            if ld.dof >= n {
                return Err(SolverError::BadLoadDof { dof: ld.dof, n });
            }
        }
        let (alpha_r, beta_r) = (sys.alpha_r, sys.beta_r);
        let mut buf = sys.force_buffers();

        // Initial acceleration a_0 = M^{-1} (F_0 - K U_0 - C V_0).
        let mut fext0 = vec![0.0; n];
        for ld in &loads {
            fext0[ld.dof] += (ld.signal)(0.0);
        }
        let mut rhs = fext0;
        let mut fint0 = vec![0.0; n];
        sys.internal_force(u0, &mut fint0, &mut buf);
        for i in 0..n {
            rhs[i] -= fint0[i];
        }
        let mut scratch = vec![0.0; n];
        if alpha_r != 0.0 {
            sys.mass.matvec_into(v0, &mut scratch);
            for i in 0..n {
                rhs[i] -= alpha_r * scratch[i];
            }
        }
        if beta_r != 0.0 {
            sys.internal_force(v0, &mut scratch, &mut buf);
            for i in 0..n {
                rhs[i] -= beta_r * scratch[i];
            }
        }
        let acc0 = match &sys.mass {
            MassRepr::Diagonal(m) => {
                sys.check_mass_positive(m)?;
                rhs.iter().zip(m).map(|(&r, &mv)| r / mv).collect::<Vec<f64>>()
            }
            MassRepr::Dense(mm) => {
                for d in 0..n {
                    let v = mm.get(d, d);
                    if !(v > 0.0) {
                        return Err(SolverError::SingularMass {
                            free_dof: d,
                            detail: sys.describe_free_dof(d),
                            value: v,
                        });
                    }
                }
                let chol = Cholesky::new(mm).ok_or(SolverError::MassNotSpd)?;
                let mut a = rhs.clone();
                chol.solve(&mut a);
                a
            }
        };

        // Backward start value U_{-1}.
        let mut u_prev = vec![0.0; n];
        for i in 0..n {
            u_prev[i] = u0[i] - dt * v0[i] + 0.5 * dt * dt * acc0[i];
        }

        let cd2 = 1.0 / (dt * dt);
        let chalf = 1.0 / (2.0 * dt);
        let path = if sys.mass.is_diagonal() && beta_r == 0.0 {
            let MassRepr::Diagonal(m) = &sys.mass else {
                unreachable!()
            };
            sys.check_mass_positive(m)?;
            let mut inv_khat = Vec::with_capacity(n);
            let mut coef_curr = Vec::with_capacity(n);
            let mut coef_prev = Vec::with_capacity(n);
            for &mv in m {
                inv_khat.push(1.0 / (mv * (cd2 + alpha_r * chalf)));
                coef_curr.push(2.0 * cd2 * mv);
                coef_prev.push(mv * (cd2 - alpha_r * chalf));
            }
            Path::Diagonal {
                inv_khat,
                coef_curr,
                coef_prev,
            }
        } else {
            if n > DENSE_MASS_LIMIT {
                return Err(SolverError::TooLargeForDenseMass {
                    n,
                    limit: DENSE_MASS_LIMIT,
                });
            }
            let mut khat = sys.mass.to_dense();
            khat.scale(cd2 + alpha_r * chalf);
            if beta_r != 0.0 {
                khat.add_scaled(&sys.dense_stiffness(), beta_r * chalf);
            }
            let chol = Cholesky::new(&khat).ok_or(SolverError::EffectiveNotSpd)?;
            let mut fint_prev = vec![0.0; n];
            sys.internal_force(&u_prev, &mut fint_prev, &mut buf);
            Path::Factorized {
                chol,
                fint_prev,
                mu: vec![0.0; n],
            }
        };

        Ok(Cdm {
            sys,
            dt,
            step: 0,
            u_prev,
            u_curr: u0.to_vec(),
            u_next: vec![0.0; n],
            fint: vec![0.0; n],
            fext: vec![0.0; n],
            acc0,
            path,
            loads,
            probes: Vec::new(),
            record_every: 1,
            buf,
        })
    }

    /// Integrator starting from rest (zero displacement and velocity).
    pub fn at_rest(sys: &'s GlobalSystem, dt: f64, loads: Vec<Load>) -> Result<Self, SolverError> {
        let n = sys.n_dof();
        Cdm::new(sys, dt, &vec![0.0; n], &vec![0.0; n], loads)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Completed step count; the current state is `U_step`.
    pub fn step_count(&self) -> usize {
        self.step
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.dt
    }

    pub fn displacement(&self) -> &[f64] {
        &self.u_curr
    }

    /// Backward start value `U_{-1}` before any step has run; after stepping
    /// this is the previous displacement.
    pub fn previous_displacement(&self) -> &[f64] {
        &self.u_prev
    }

    /// Initial acceleration computed during start-up.
    pub fn initial_acceleration(&self) -> &[f64] {
        &self.acc0
    }

    /// Record probe samples every `n`-th step (default: every step).
    pub fn set_record_every(&mut self, n: usize) {
        self.record_every = n.max(1);
    }

    /// Register a probe at a grid node; the current state is recorded
    /// immediately and after each recorded step.
    pub fn add_probe(&mut self, name: &str, node: (usize, usize)) -> Result<(), SolverError> {
        let (dof_x, dof_y) = self.sys.node_free_dofs(node).map_err(|e| match e {
            SolverError::ProbeInactive { node, .. } => SolverError::ProbeInactive {
                name: name.to_string(),
                node,
            },
            other => other,
        })?;
        self.push_probe(name, node, dof_x, dof_y);
        Ok(())
    }

    /// Register a probe on explicit free-DOF indices (for systems without a
    /// mesh).
    pub fn add_probe_dofs(
        &mut self,
        name: &str,
        dof_x: Option<usize>,
        dof_y: Option<usize>,
    ) -> Result<(), SolverError> {
        let n = self.sys.n_free;
        for d in [dof_x, dof_y].into_iter().flatten() {
            if d >= n {
                return Err(SolverError::BadLoadDof { dof: d, n });
            }
        }
        self.push_probe(name, (0, 0), dof_x, dof_y);
        Ok(())
    }

    fn push_probe(
        &mut self,
        name: &str,
        node: (usize, usize),
        dof_x: Option<usize>,
        dof_y: Option<usize>,
    ) {
        let mut probe = ProbeSeries {
            name: name.to_string(),
            node,
            dof_x,
            dof_y,
            samples: Vec::new(),
        };
        let t = self.time();
        probe.samples.push([
            t,
            dof_x.map_or(0.0, |d| self.u_curr[d]),
            dof_y.map_or(0.0, |d| self.u_curr[d]),
        ]);
        self.probes.push(probe);
    }

    pub fn probes(&self) -> &[ProbeSeries] {
        &self.probes
    }

    /// Consume the integrator and hand over the recorded probe series.
    pub fn into_probes(self) -> Vec<ProbeSeries> {
        self.probes
    }

    fn record_probes(&mut self) {
        let t = self.time();
        for p in &mut self.probes {
            p.samples.push([
                t,
                p.dof_x.map_or(0.0, |d| self.u_curr[d]),
                p.dof_y.map_or(0.0, |d| self.u_curr[d]),
            ]);
        }
    }

    /// Advance one step. Reports divergence with the step index that
    /// produced it.
    pub fn step(&mut self) -> Result<(), SolverError> {
        let n = self.sys.n_free;
        let t = self.time();
        self.fext.iter_mut().for_each(|x| *x = 0.0);
        for ld in &self.loads {
            self.fext[ld.dof] += (ld.signal)(t);
        }
        self.sys
            .internal_force(&self.u_curr, &mut self.fint, &mut self.buf);

        match &mut self.path {
            Path::Diagonal {
                inv_khat,
                coef_curr,
                coef_prev,
            } => {
                for i in 0..n {
                    let rhs = self.fext[i] - self.fint[i] + coef_curr[i] * self.u_curr[i]
                        - coef_prev[i] * self.u_prev[i];
                    self.u_next[i] = rhs * inv_khat[i];
                }
            }
            Path::Factorized {
                chol,
                fint_prev,
                mu,
            } => {
                let dt = self.dt;
                let cd2 = 1.0 / (dt * dt);
                let chalf = 1.0 / (2.0 * dt);
                let (alpha_r, beta_r) = (self.sys.alpha_r, self.sys.beta_r);
                for i in 0..n {
                    self.u_next[i] = self.fext[i] - self.fint[i];
                }
                self.sys.mass.matvec_into(&self.u_curr, mu);
                for i in 0..n {
                    self.u_next[i] += 2.0 * cd2 * mu[i];
                }
                self.sys.mass.matvec_into(&self.u_prev, mu);
                for i in 0..n {
                    self.u_next[i] -= (cd2 - alpha_r * chalf) * mu[i];
                }
                if beta_r != 0.0 {
                    for i in 0..n {
                        self.u_next[i] += beta_r * chalf * fint_prev[i];
                    }
                }
                chol.solve(&mut self.u_next);
            }
        }

        for &v in &self.u_next {
            if !v.is_finite() || v.abs() > DIVERGENCE_LIMIT {
                return Err(SolverError::Diverged {
                    step: self.step + 1,
                });
            }
        }

        std::mem::swap(&mut self.u_prev, &mut self.u_curr);
        std::mem::swap(&mut self.u_curr, &mut self.u_next);
        if let Path::Factorized { fint_prev, .. } = &mut self.path {
            // K U_i becomes K U_{i-1} after the rotation above.
            std::mem::swap(fint_prev, &mut self.fint);
        }
        self.step += 1;
        if self.step % self.record_every == 0 {
            self.record_probes();
        }
        Ok(())
    }

    /// Advance `n` steps.
    pub fn run(&mut self, n: usize) -> Result<(), SolverError> {
        for _ in 0..n {
            self.step()?;
        }
        Ok(())
    }
}

/// Spectral radius of the single-DOF central-difference amplification matrix
/// for mass `m`, damping `c`, stiffness `k`, and step `dt`. Equals 1 exactly
/// at the undamped stability boundary `dt = 2 sqrt(m/k)`.
pub fn amplification_spectral_radius(m: f64, c: f64, k: f64, dt: f64) -> f64 {
    debug_assert!(m > 0.0 && k >= 0.0 && c >= 0.0 && dt > 0.0);
    let khat = m + 0.5 * dt * c;
    let a11 = 2.0 * m - dt * dt * k;
    let a12 = 0.5 * dt * c - m;
    let disc = a11 * a11 + 4.0 * khat * a12;
    if disc >= 0.0 {
        let s = disc.sqrt();
        let r1 = (a11 + s) / (2.0 * khat);
        let r2 = (a11 - s) / (2.0 * khat);
        r1.abs().max(r2.abs())
    } else {
        (-a12 / khat).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::element::{lump_nodal_quadrature, StressState};
    use crate::geometry::{CircleSense, Primitive};

    fn steel() -> Material {
        Material::new(210e9, 0.3, 7850.0, StressState::PlaneStress).unwrap()
    }

    fn unit_rect() -> Rect {
        Rect::new(Vec2::new(0.0, 0.0), Vec2::new(1.0, 1.0)).unwrap()
    }

    fn plain_cfg() -> AssemblyConfig {
        let mut cfg = AssemblyConfig::default();
        cfg.evs.stabilize_m = false;
        cfg.evs.stabilize_k = false;
        cfg
    }

    fn sdof(m: f64, k: f64) -> GlobalSystem {
        GlobalSystem::from_dense(
            Mat::from_rows(&[vec![k]]),
            MassRepr::Diagonal(vec![m]),
            0.0,
            0.0,
        )
        .unwrap()
    }

    // -- mesh ---------------------------------------------------------------

    #[test]
    fn mesh_counts_and_positions() {
        let mesh = Mesh::uniform(&unit_rect(), 2, 2, 2).unwrap();
        assert_eq!(mesh.n_nodes_x(), 5);
        assert_eq!(mesh.n_nodes(), 25);
        let lo = mesh.node_position(0, 0);
        let hi = mesh.node_position(4, 4);
        assert_eq!((lo.x, lo.y), (0.0, 0.0));
        assert_eq!((hi.x, hi.y), (1.0, 1.0));
        // Break nodes sit exactly on the breaks.
        assert_eq!(mesh.node_position(2, 0).x, 0.5);
        // Interior nodes are the mapped reference nodes (p=2: midpoint).
        assert!((mesh.node_position(1, 0).x - 0.25).abs() < 1e-15);
    }

    #[test]
    fn mesh_shared_edge_nodes_identified() {
        let mesh = Mesh::uniform(&unit_rect(), 2, 1, 3).unwrap();
        let left = mesh.element_node_ids(0, 0);
        let right = mesh.element_node_ids(1, 0);
        let p = 3;
        for j in 0..=p {
            assert_eq!(left[j * (p + 1) + p], right[j * (p + 1)]);
        }
    }

    #[test]
    fn mesh_node_lookup() {
        let mesh = Mesh::from_breaks(vec![0.0, 25.0, 49.05], vec![-1.0, 1.0], 4).unwrap();
        assert_eq!(mesh.node_at(Vec2::new(25.0, 1.0), 1e-9), Some((4, 4)));
        assert_eq!(mesh.node_at(Vec2::new(12.0, 0.0), 1e-9), None);
    }

    #[test]
    fn mesh_rejects_bad_input() {
        assert!(matches!(
            Mesh::from_breaks(vec![0.0, 0.0, 1.0], vec![0.0, 1.0], 2),
            Err(SolverError::BadBreaks(_))
        ));
        assert!(matches!(
            Mesh::from_breaks(vec![0.0, 1.0], vec![0.0, 1.0], 0),
            Err(SolverError::BadOrder { .. })
        ));
        assert!(matches!(
            Mesh::from_breaks(vec![0.0], vec![0.0, 1.0], 2),
            Err(SolverError::BadBreaks(_))
        ));
    }

    // -- assembly -----------------------------------------------------------

    #[test]
    fn single_solid_element_assembles_to_element_matrices() {
        let mesh = Mesh::uniform(&unit_rect(), 1, 1, 2).unwrap();
        let domain = ImplicitDomain::solid(unit_rect());
        let sys = assemble(&domain, &mesh, &steel(), &[], &plain_cfg()).unwrap();
        assert_eq!(sys.stats.n_uncut, 1);
        assert_eq!(sys.n_dof(), 18);

        let em = compute_element_matrices(
            &domain,
            IndicatorConfig::new(0.0).unwrap(),
            &steel(),
            &unit_rect(),
            2,
            8,
        )
        .unwrap();
        let kg = sys.dense_stiffness();
        let mut diff: f64 = 0.0;
        for i in 0..18 {
            for j in 0..18 {
                diff = diff.max((kg.get(i, j) - em.k_c.get(i, j)).abs());
            }
        }
        assert!(diff <= 1e-9 * em.k_c.max_abs());
        let md = sys.mass_diagonal().unwrap();
        for (a, b) in md.iter().zip(&em.m_lumped) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn shared_edge_mass_is_the_sum_of_both_elements() {
        let mesh = Mesh::uniform(&unit_rect(), 2, 1, 1).unwrap();
        let domain = ImplicitDomain::solid(unit_rect());
        let sys = assemble(&domain, &mesh, &steel(), &[], &plain_cfg()).unwrap();
        let md = sys.mass_diagonal().unwrap();
        // One p=1 element is 0.5 x 1; nodal-quadrature lumping puts a quarter
        // of its mass on each node, and interface nodes collect both sides.
        let half = lump_nodal_quadrature(
            1,
            &Rect::new(Vec2::new(0.0, 0.0), Vec2::new(0.5, 1.0)).unwrap(),
            &steel(),
            ElementClass::Uncut,
        )
        .unwrap();
        let quarter = half[0];
        let (nnx, p) = (3, 1);
        for iy in 0..=p {
            for ix in 0..nnx {
                let nid = iy * nnx + ix;
                let (fx, _) = sys.node_free_dofs((ix, iy)).unwrap();
                let expect = if ix == 1 { 2.0 * quarter } else { quarter };
                let got = md[fx.unwrap()];
                assert!(
                    (got - expect).abs() <= 1e-12 * expect,
                    "node {nid}: {got} vs {expect}"
                );
            }
        }
        let total: f64 = md.iter().sum();
        assert!((total - 2.0 * 7850.0).abs() <= 1e-9 * total);
    }

    #[test]
    fn mismatched_neighbor_orders_rejected() {
        let mesh = Mesh::uniform(&unit_rect(), 2, 1, 2).unwrap();
        let domain = ImplicitDomain::solid(unit_rect());
        let Err(err) = assemble_with_orders(&domain, &mesh, &steel(), &[], &plain_cfg(), &[2, 3])
        else {
            panic!("expected an order-mismatch error");
        };
        match err {
            SolverError::NonMatchingOrder { a, b, pa, pb } => {
                assert_eq!((a, b, pa, pb), (((0, 0)), ((1, 0)), 2, 3));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn fictitious_elements_and_their_nodes_are_dropped() {
        // Void covers x > 0.25, so the right element (0.5..1) is entirely
        // fictitious and the left one is cut.
        let extent = unit_rect();
        let domain = ImplicitDomain::new(
            extent,
            vec![Primitive::HalfPlane {
                normal: Vec2::new(1.0, 0.0),
                offset: 0.25,
            }],
        );
        let mesh = Mesh::uniform(&extent, 2, 1, 2).unwrap();
        let sys = assemble(&domain, &mesh, &steel(), &[], &plain_cfg()).unwrap();
        assert_eq!(sys.stats.n_cut, 1);
        assert_eq!(sys.stats.n_fictitious, 1);
        assert_eq!(sys.stats.n_uncut, 0);
        // 5 x 3 grid; the right element's exclusive nodes (2 columns) vanish.
        assert_eq!(sys.stats.n_nodes_total, 15);
        assert_eq!(sys.stats.n_nodes_active, 9);
        assert_eq!(sys.n_dof(), 18);
        assert!(sys.node_free_dofs((4, 0)).is_err());
    }

    #[test]
    fn dirichlet_reduction_matches_submatrix() {
        let mesh = Mesh::uniform(&unit_rect(), 1, 1, 1).unwrap();
        let domain = ImplicitDomain::solid(unit_rect());
        let fixed = [NodeFix {
            node: (0, 0),
            fix_x: true,
            fix_y: true,
        }];
        let sys = assemble(&domain, &mesh, &steel(), &fixed, &plain_cfg()).unwrap();
        assert_eq!(sys.n_dof(), 6);
        assert_eq!(sys.stats.n_dof_fixed, 2);
        let em = compute_element_matrices(
            &domain,
            IndicatorConfig::new(0.0).unwrap(),
            &steel(),
            &unit_rect(),
            1,
            8,
        )
        .unwrap();
        let want = em.k_c.submatrix(&[2, 3, 4, 5, 6, 7]);
        let got = sys.dense_stiffness();
        for i in 0..6 {
            for j in 0..6 {
                assert!((got.get(i, j) - want.get(i, j)).abs() <= 1e-9 * want.max_abs());
            }
        }
    }

    fn corner_cut_system(workers: usize) -> GlobalSystem {
        let extent = unit_rect();
        let domain = ImplicitDomain::new(
            extent,
            vec![Primitive::Circle {
                center: Vec2::new(0.0, 0.0),
                radius: 0.6,
                sense: CircleSense::Void,
            }],
        );
        let mesh = Mesh::uniform(&extent, 2, 2, 2).unwrap();
        let mut cfg = AssemblyConfig {
            depth: 5,
            ..Default::default()
        };
        cfg.workers = workers;
        assemble(&domain, &mesh, &steel(), &[], &cfg).unwrap()
    }

    #[test]
    fn internal_force_matches_dense_product() {
        let sys = corner_cut_system(1);
        let n = sys.n_dof();
        let u: Vec<f64> = (0..n).map(|i| ((i * 37 % 11) as f64 - 5.0) * 1e-4).collect();
        let mut out = vec![0.0; n];
        let mut buf = sys.force_buffers();
        sys.internal_force(&u, &mut out, &mut buf);
        let want = sys.dense_stiffness().matvec(&u);
        let scale = want.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        for (a, b) in out.iter().zip(&want) {
            assert!((a - b).abs() <= 1e-11 * scale);
        }
    }

    #[test]
    fn internal_force_bitwise_identical_across_worker_counts() {
        let base = corner_cut_system(1);
        let n = base.n_dof();
        let u: Vec<f64> = (0..n).map(|i| ((i * 13 % 17) as f64 - 8.0) * 1e-5).collect();
        let mut reference = vec![0.0; n];
        let mut buf = base.force_buffers();
        base.internal_force(&u, &mut reference, &mut buf);
        for workers in [2, 3, 7, 16] {
            let sys = corner_cut_system(workers);
            let mut out = vec![0.0; n];
            let mut buf = sys.force_buffers();
            sys.internal_force(&u, &mut out, &mut buf);
            assert_eq!(out, reference, "workers = {workers}");
        }
    }

    // -- critical time step -------------------------------------------------

    #[test]
    fn critical_dt_single_dof() {
        let sys = sdof(1.0, 4.0);
        assert!((sys.critical_dt().unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn critical_dt_scales_with_sqrt_density() {
        let sys1 = sdof(1.0, 4.0);
        let sys2 = sdof(2.0, 4.0);
        let ratio = sys2.critical_dt().unwrap() / sys1.critical_dt().unwrap();
        assert!((ratio - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn critical_dt_ignores_rayleigh_damping() {
        let k = Mat::from_rows(&[vec![4.0, -1.0], vec![-1.0, 3.0]]);
        let m = MassRepr::Diagonal(vec![1.0, 2.0]);
        let a = GlobalSystem::from_dense(k.clone(), m.clone(), 0.0, 0.0).unwrap();
        let b = GlobalSystem::from_dense(k, m, 0.7, 0.0).unwrap();
        assert!((a.critical_dt().unwrap() - b.critical_dt().unwrap()).abs() < 1e-14);
    }

    #[test]
    fn critical_dt_lanczos_agrees_with_dense() {
        let sys = corner_cut_system(1);
        let dense = sys.critical_dt().unwrap();
        // Same spectrum through the matrix-free path.
        let m = sys.mass_diagonal().unwrap().to_vec();
        let s: Vec<f64> = m.iter().map(|&v| 1.0 / v.sqrt()).collect();
        let n = sys.n_dof();
        let mut buf = sys.force_buffers();
        let mut wv = vec![0.0; n];
        let mut fv = vec![0.0; n];
        let rho = lanczos_max(
            n,
            |v, out| {
                for i in 0..n {
                    wv[i] = v[i] * s[i];
                }
                sys.internal_force(&wv, &mut fv, &mut buf);
                for i in 0..n {
                    out[i] = fv[i] * s[i];
                }
            },
            1e-12,
            2000,
        )
        .unwrap();
        let lanczos = 2.0 / rho.sqrt();
        assert!((lanczos - dense).abs() <= 1e-8 * dense);
    }

    #[test]
    fn singular_mass_is_reported_with_the_dof() {
        let sys = GlobalSystem::from_dense(
            Mat::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]),
            MassRepr::Diagonal(vec![1.0, 0.0]),
            0.0,
            0.0,
        )
        .unwrap();
        match sys.critical_dt().unwrap_err() {
            SolverError::SingularMass { free_dof, .. } => assert_eq!(free_dof, 1),
            other => panic!("unexpected error {other:?}"),
        }
    }

    // -- time integration ---------------------------------------------------

    #[test]
    fn startup_backward_step_kinematics() {
        // Free flight: no stiffness, pure initial velocity.
        let sys = sdof(1.0, 0.0);
        let cdm = Cdm::new(&sys, 0.1, &[1.0], &[1.0], vec![]).unwrap();
        assert!((cdm.previous_displacement()[0] - 0.9).abs() < 1e-15);
        assert_eq!(cdm.initial_acceleration()[0], 0.0);
    }

    #[test]
    fn startup_initial_acceleration() {
        let sys = sdof(2.0, 8.0);
        let cdm = Cdm::new(&sys, 0.01, &[1.0], &[0.0], vec![]).unwrap();
        assert!((cdm.initial_acceleration()[0] + 4.0).abs() < 1e-14);
    }

    #[test]
    fn free_flight_is_linear_in_time() {
        let sys = sdof(1.0, 0.0);
        let mut cdm = Cdm::new(&sys, 0.1, &[0.0], &[1.0], vec![]).unwrap();
        cdm.run(100).unwrap();
        assert!((cdm.displacement()[0] - 10.0).abs() < 1e-10);
    }

    #[test]
    fn sdof_amplitude_stays_bounded_below_the_limit() {
        // m=1, k=4 -> dt_cr = 1; run at 0.9 dt_cr from a unit displacement.
        let sys = sdof(1.0, 4.0);
        let mut cdm = Cdm::new(&sys, 0.9, &[1.0], &[0.0], vec![]).unwrap();
        let mut max_abs = 0.0f64;
        for _ in 0..10_000 {
            cdm.step().unwrap();
            max_abs = max_abs.max(cdm.displacement()[0].abs());
        }
        assert!(max_abs <= 1.01, "max |u| = {max_abs}");
    }

    #[test]
    fn sdof_beyond_stability_limit_diverges_quickly() {
        let sys = sdof(1.0, 4.0);
        let mut cdm = Cdm::new(&sys, 1.01, &[1.0], &[0.0], vec![]).unwrap();
        let mut seen = None;
        for _ in 0..1000 {
            if let Err(SolverError::Diverged { step }) = cdm.step() {
                seen = Some(step);
                break;
            }
        }
        let step = seen.expect("expected divergence within 1000 steps");
        assert!(step <= 1000);
    }

    #[test]
    fn sdof_matches_cosine_solution() {
        // Half the critical step; the discrete solution samples a cosine of
        // slightly shifted frequency with amplitude preserved.
        let sys = sdof(1.0, 4.0);
        let dt = 0.5;
        let mut cdm = Cdm::new(&sys, dt, &[1.0], &[0.0], vec![]).unwrap();
        let mut max_abs = 0.0f64;
        for _ in 0..10_000 {
            cdm.step().unwrap();
            max_abs = max_abs.max(cdm.displacement()[0].abs());
        }
        assert!((max_abs - 1.0).abs() < 0.01, "amplitude {max_abs}");
    }

    #[test]
    fn diagonal_and_factorized_paths_agree() {
        // The same damped system once with diagonal mass (explicit update)
        // and once with an equivalent dense mass (factorized update).
        let k = Mat::from_rows(&[vec![5.0, -2.0], vec![-2.0, 3.0]]);
        let alpha_r = 0.3;
        let diag = GlobalSystem::from_dense(
            k.clone(),
            MassRepr::Diagonal(vec![1.0, 2.0]),
            alpha_r,
            0.0,
        )
        .unwrap();
        let dense = GlobalSystem::from_dense(
            k,
            MassRepr::Dense(Mat::from_diag(&[1.0, 2.0])),
            alpha_r,
            0.0,
        )
        .unwrap();
        let u0 = [0.3, -0.1];
        let v0 = [0.0, 0.2];
        let dt = 0.05;
        let mut a = Cdm::new(&diag, dt, &u0, &v0, vec![]).unwrap();
        let mut b = Cdm::new(&dense, dt, &u0, &v0, vec![]).unwrap();
        for _ in 0..500 {
            a.step().unwrap();
            b.step().unwrap();
            for i in 0..2 {
                assert!((a.displacement()[i] - b.displacement()[i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn stiffness_damping_equals_equivalent_mass_damping_for_sdof() {
        // For one DOF, beta_r k and alpha_r m give the same damping constant;
        // trajectories must coincide even though the code paths differ.
        let (m, k) = (2.0, 8.0);
        let c = 0.4;
        let by_alpha = GlobalSystem::from_dense(
            Mat::from_rows(&[vec![k]]),
            MassRepr::Diagonal(vec![m]),
            c / m,
            0.0,
        )
        .unwrap();
        let by_beta = GlobalSystem::from_dense(
            Mat::from_rows(&[vec![k]]),
            MassRepr::Diagonal(vec![m]),
            0.0,
            c / k,
        )
        .unwrap();
        let mut a = Cdm::new(&by_alpha, 0.1, &[1.0], &[0.0], vec![]).unwrap();
        let mut b = Cdm::new(&by_beta, 0.1, &[1.0], &[0.0], vec![]).unwrap();
        for _ in 0..300 {
            a.step().unwrap();
            b.step().unwrap();
            assert!((a.displacement()[0] - b.displacement()[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_load_settles_on_static_solution_of_damped_system() {
        let sys = GlobalSystem::from_dense(
            Mat::from_rows(&[vec![4.0]]),
            MassRepr::Diagonal(vec![1.0]),
            1.5,
            0.0,
        )
        .unwrap();
        let load = Load {
            dof: 0,
            signal: Box::new(|_| 2.0),
        };
        let mut cdm = Cdm::at_rest(&sys, 0.2, vec![load]).unwrap();
        cdm.run(2000).unwrap();
        assert!((cdm.displacement()[0] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn probes_accumulate_and_match_state() {
        let mesh = Mesh::uniform(&unit_rect(), 1, 1, 1).unwrap();
        let domain = ImplicitDomain::solid(unit_rect());
        let fixed = fix_edge(&mesh, Edge::Left, true, true);
        let sys = assemble(&domain, &mesh, &steel(), &fixed, &plain_cfg()).unwrap();
        let (fx, _fy) = sys.node_free_dofs((1, 1)).unwrap();
        let load = Load {
            dof: fx.unwrap(),
            signal: Box::new(|t: f64| 1e3 * (t * 1e5).sin()),
        };
        let dt = 0.5 * sys.critical_dt().unwrap();
        let mut cdm = Cdm::at_rest(&sys, dt, vec![load]).unwrap();
        cdm.add_probe("tip", (1, 1)).unwrap();
        let mut lens = vec![cdm.probes()[0].samples().len()];
        for _ in 0..5 {
            cdm.step().unwrap();
            lens.push(cdm.probes()[0].samples().len());
        }
        assert!(lens.windows(2).all(|w| w[1] == w[0] + 1));
        let last = *cdm.probes()[0].samples().last().unwrap();
        assert_eq!(last[1], cdm.displacement()[fx.unwrap()]);
        // Probing a constrained node reports zero for the fixed component.
        cdm.add_probe("corner", (0, 0)).unwrap();
        assert_eq!(cdm.probes()[1].samples()[0][1], 0.0);
    }

    #[test]
    fn probe_on_removed_node_is_rejected() {
        let extent = unit_rect();
        let domain = ImplicitDomain::new(
            extent,
            vec![Primitive::HalfPlane {
                normal: Vec2::new(1.0, 0.0),
                offset: 0.25,
            }],
        );
        let mesh = Mesh::uniform(&extent, 2, 1, 2).unwrap();
        let sys = assemble(&domain, &mesh, &steel(), &[], &plain_cfg()).unwrap();
        let mut cdm = Cdm::at_rest(&sys, 1e-8, vec![]).unwrap();
        match cdm.add_probe("ghost", (4, 0)).unwrap_err() {
            SolverError::ProbeInactive { name, node } => {
                assert_eq!(name, "ghost");
                assert_eq!(node, (4, 0));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    // -- amplification ------------------------------------------------------

    #[test]
    fn amplification_radius_at_and_around_the_boundary() {
        let (m, k) = (1.0, 4.0);
        let dt_cr = 2.0 / (k / m as f64).sqrt();
        assert!((amplification_spectral_radius(m, 0.0, k, dt_cr) - 1.0).abs() < 1e-12);
        assert!((amplification_spectral_radius(m, 0.0, k, 0.5 * dt_cr) - 1.0).abs() < 1e-12);
        assert!(amplification_spectral_radius(m, 0.0, k, 1.1 * dt_cr) > 1.0);
        // Damping pulls the radius inside the unit circle.
        assert!(amplification_spectral_radius(m, 0.5, k, 0.5 * dt_cr) < 1.0);
    }

    #[test]
    fn amplification_boundary_is_sharp() {
        let (m, k) = (1.3, 7.7);
        let dt_cr = 2.0 * (m / k as f64).sqrt();
        let (mut lo, mut hi) = (0.5 * dt_cr, 1.5 * dt_cr);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if amplification_spectral_radius(m, 0.0, k, mid) <= 1.0 + 1e-14 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((lo - dt_cr).abs() < 1e-9 * dt_cr);
    }
}
