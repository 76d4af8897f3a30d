//! Eigenvalue-based stabilization of cut-element matrices.
//!
//! Badly cut elements carry (nearly) zero eigenvalues that wreck conditioning
//! and collapse the critical time step of explicit integrators. This module
//! selects those modes, builds additive stabilization matrices for mass and
//! stiffness (the latter with rigid-body-mode extraction so physics is left
//! untouched), scales them so the result is independent of the unit system,
//! and dispatches the named method variants that combine these choices.

use crate::element::{compute_element_matrices, lump_rowsum, ElementError, ElementMatrices, Material};
use crate::geometry::{ImplicitDomain, IndicatorConfig, Rect, Vec2};
use crate::linalg::{dot, norm2, sym_eig, EigResult, LinalgError, Mat};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvsError {
    #[error("matrix spectrum is entirely zero; element is degenerate")]
    DegenerateSpectrum,
    #[error("degenerate element geometry; rigid body modes undefined")]
    DegenerateGeometry,
    #[error("unknown variant code '{0}'")]
    UnknownVariant(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Element(#[from] ElementError),
}

/// Matrix the mass-mode decomposition is computed from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MassEigBasis {
    /// Full consistent mass matrix.
    Consistent,
    /// Diagonally lumped mass matrix.
    Lumped,
}

/// Diagonalization applied to the mass stabilization matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StabLumping {
    /// Keep the full stabilization matrix.
    None,
    /// Diagonal scaling that conserves the matrix total.
    Hrz,
    /// Row sums on the diagonal (can produce negative entries).
    RowSum,
}

/// Per-mode stabilization factor ε_i as a function of the selected mode.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "law")]
pub enum FactorLaw {
    /// The same factor ε_S for every selected mode.
    Constant,
    /// Gap between ε_S·λ_max and the eigenvalue, clipped at zero.
    ThresholdGap,
    /// Inversely proportional to the β-th root of the eigenvalue.
    InverseRoot { beta: f64, divisor: f64 },
    /// Proportional to the first Lamé constant and the fictitious volume
    /// fraction of the element.
    LameVolume { beta: f64 },
}

impl FactorLaw {
    /// Literature defaults for the eigenvalue-root law.
    pub fn inverse_root_default() -> FactorLaw {
        FactorLaw::InverseRoot {
            beta: 5.0,
            divisor: 80.0,
        }
    }

    /// Literature default for the material/volume law.
    pub fn lame_volume_default() -> FactorLaw {
        FactorLaw::LameVolume { beta: 1.0 }
    }
}

/// Rule deciding which projected modes are discarded as rigid body modes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RbmDeletionRule {
    /// Squared residual norm compared against the smallest selected
    /// eigenvalue magnitude (default).
    SmallestEigenvalue,
    /// Residual norm compared against a fixed threshold of 1e-3.
    FixedNorm,
}

/// Full stabilization configuration. The flag tuple
/// (stabilize_k, stabilize_m, mass_basis, lump_stab, lump_mass, alpha0)
/// identifies one method variant; [`variant_config`] expands the short codes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvsConfig {
    /// Stabilize the stiffness matrix of cut elements.
    pub stabilize_k: bool,
    /// Stabilize the mass matrix of cut elements.
    pub stabilize_m: bool,
    /// Matrix whose eigenmodes drive the mass stabilization.
    pub mass_basis: MassEigBasis,
    /// Lumping applied to the mass stabilization matrix.
    pub lump_stab: StabLumping,
    /// Lump the element mass matrix itself.
    pub lump_mass: bool,
    /// Indicator value in the fictitious domain.
    pub alpha0: f64,
    /// Stabilization parameter ε_S.
    pub eps_s: f64,
    /// Mode-selection threshold ε_λ on the eigenvalue ratio λ_i/λ_max.
    pub eps_lambda: f64,
    pub factor_law: FactorLaw,
    pub rbm_deletion: RbmDeletionRule,
    /// Scale stabilization matrices relative to an uncut reference element
    /// so ε_S acts unit-independently.
    pub scaling: bool,
}

impl Default for EvsConfig {
    fn default() -> Self {
        EvsConfig {
            stabilize_k: false,
            stabilize_m: true,
            mass_basis: MassEigBasis::Consistent,
            lump_stab: StabLumping::Hrz,
            lump_mass: true,
            alpha0: 0.0,
            eps_s: 1e-3,
            eps_lambda: 1e-3,
            factor_law: FactorLaw::Constant,
            rbm_deletion: RbmDeletionRule::SmallestEigenvalue,
            scaling: true,
        }
    }
}

/// Expand a two-character variant code into a configuration.
///
/// Group 0 is the plain indicator method (no eigenvalue stabilization) with
/// α₀ ∈ {0, 1e-10, 1e-5} and the element mass lumped (a, c, e) or consistent
/// (b, d, f). Group 1 stabilizes only the stiffness. Groups 2 (mass only) and
/// 3 (mass and stiffness) enumerate the mass options: subcodes a–f use the
/// consistent-mass eigenbasis, g–l the lumped one; within each, the
/// stabilization matrix is kept full / HRZ-lumped / row-summed, first with
/// the element mass lumped (a–c, g–i), then consistent (d–f, j–l).
pub fn variant_config(code: &str) -> Result<EvsConfig, EvsError> {
    let bytes = code.as_bytes();
    if bytes.len() != 2 {
        return Err(EvsError::UnknownVariant(code.to_string()));
    }
    let mut cfg = EvsConfig::default();
    let sub = bytes[1];
    match (bytes[0], sub) {
        (b'0', b'a'..=b'f') => {
            let idx = (sub - b'a') as usize;
            cfg.stabilize_k = false;
            cfg.stabilize_m = false;
            cfg.lump_mass = idx % 2 == 0;
            cfg.alpha0 = [0.0, 0.0, 1e-10, 1e-10, 1e-5, 1e-5][idx];
        }
        (b'1', b'a'..=b'b') => {
            cfg.stabilize_k = true;
            cfg.stabilize_m = false;
            cfg.lump_mass = sub == b'a';
            cfg.alpha0 = 0.0;
        }
        (b'2' | b'3', b'a'..=b'l') => {
            let idx = (sub - b'a') as usize;
            cfg.stabilize_k = bytes[0] == b'3';
            cfg.stabilize_m = true;
            cfg.alpha0 = 0.0;
            cfg.mass_basis = if idx < 6 {
                MassEigBasis::Consistent
            } else {
                MassEigBasis::Lumped
            };
            cfg.lump_stab = [StabLumping::None, StabLumping::Hrz, StabLumping::RowSum][idx % 3];
            cfg.lump_mass = idx % 6 < 3;
        }
        _ => return Err(EvsError::UnknownVariant(code.to_string())),
    }
    Ok(cfg)
}

/// All recognized variant codes, in table order.
pub fn variant_codes() -> Vec<String> {
    let mut out = Vec::new();
    for s in b'a'..=b'f' {
        out.push(format!("0{}", s as char));
    }
    for s in b'a'..=b'b' {
        out.push(format!("1{}", s as char));
    }
    for g in ['2', '3'] {
        for s in b'a'..=b'l' {
            out.push(format!("{g}{}", s as char));
        }
    }
    out
}

/// Indices of the (nearly) zero eigenspace: modes with λ_i/λ_max strictly
/// below `eps_lambda`. Negative eigenvalues (round-off noise) are always
/// selected. Errors if the spectrum has no positive part at all.
pub fn select_modes(eig: &EigResult, eps_lambda: f64) -> Result<Vec<usize>, EvsError> {
    let lambda_max = eig.values.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    if !(lambda_max > 0.0) {
        return Err(EvsError::DegenerateSpectrum);
    }
    Ok((0..eig.values.len())
        .filter(|&i| eig.values[i] < 0.0 || eig.values[i] / lambda_max < eps_lambda)
        .collect())
}

/// Stabilization factor ε_i for one selected mode. The boolean reports
/// whether a non-positive eigenvalue had to be clamped (inverse-root law).
pub fn stabilization_factor(
    law: FactorLaw,
    eps_s: f64,
    lambda_i: f64,
    lambda_max: f64,
    chi: f64,
    lame_lambda: f64,
) -> (f64, bool) {
    match law {
        FactorLaw::Constant => (eps_s, false),
        FactorLaw::ThresholdGap => {
            let gap = eps_s * lambda_max - lambda_i;
            (gap.max(0.0), false)
        }
        FactorLaw::InverseRoot { beta, divisor } => {
            let (l, clamped) = if lambda_i <= 0.0 {
                (1e-300, true)
            } else {
                (lambda_i, false)
            };
            (eps_s / (divisor * l.powf(1.0 / beta)), clamped)
        }
        FactorLaw::LameVolume { beta } => (eps_s * lame_lambda * (1.0 - chi).powf(beta), false),
    }
}

/// Raw (un-lumped, un-scaled) stabilization matrix built from the selected
/// modes of one eigendecomposition.
#[derive(Clone, Debug)]
pub struct ModeStabilization {
    pub raw: Mat,
    pub selected: Vec<usize>,
    /// True if the inverse-root law clamped a non-positive eigenvalue.
    pub clamped: bool,
}

/// Mass stabilization: ε_i-weighted outer products of the selected unit
/// eigenvectors. Rigid body modes are never part of the zero eigenspace of a
/// mass matrix, so no extraction step is needed.
pub fn mass_stabilization(
    m_basis: &Mat,
    cfg: &EvsConfig,
    chi: f64,
    lame_lambda: f64,
) -> Result<ModeStabilization, EvsError> {
    let eig = sym_eig(m_basis)?;
    let selected = select_modes(&eig, cfg.eps_lambda)?;
    let lambda_max = eig.lambda_max();
    let n = m_basis.rows();
    let mut raw = Mat::zeros(n, n);
    let mut clamped = false;
    for &i in &selected {
        let (eps_i, cl) = stabilization_factor(
            cfg.factor_law,
            cfg.eps_s,
            eig.values[i],
            lambda_max,
            chi,
            lame_lambda,
        );
        clamped |= cl;
        let mut v = eig.vector(i);
        let nv = norm2(&v);
        for vk in v.iter_mut() {
            *vk /= nv;
        }
        raw.add_outer(&v, eps_i);
    }
    Ok(ModeStabilization {
        raw,
        selected,
        clamped,
    })
}

/// The three orthonormalized rigid body motions of a 2D element with
/// interleaved (u_x, u_y) DOFs: translation x, translation y, and an
/// in-plane rotation about the centroid of the four corner nodes.
pub fn rbm_vectors(node_coords: &[Vec2]) -> Result<[Vec<f64>; 3], EvsError> {
    let n = node_coords.len();
    let per_dir = (n as f64).sqrt().round() as usize;
    if per_dir * per_dir != n || n < 4 {
        return Err(EvsError::DegenerateGeometry);
    }
    let corners = [0, per_dir - 1, per_dir * (per_dir - 1), n - 1];
    let mut xc = 0.0;
    let mut yc = 0.0;
    for &c in &corners {
        xc += 0.25 * node_coords[c].x;
        yc += 0.25 * node_coords[c].y;
    }
    let mut r1 = vec![0.0; 2 * n];
    let mut r2 = vec![0.0; 2 * n];
    let mut r3 = vec![0.0; 2 * n];
    for (i, pt) in node_coords.iter().enumerate() {
        r1[2 * i] = 1.0;
        r2[2 * i + 1] = 1.0;
        r3[2 * i] = pt.y - yc;
        r3[2 * i + 1] = -(pt.x - xc);
    }
    let mut basis: [Vec<f64>; 3] = [r1, r2, r3];
    for i in 0..3 {
        let (done, rest) = basis.split_at_mut(i);
        let v = &mut rest[0];
        for b in done.iter() {
            let c = dot(v, b);
            for (vk, bk) in v.iter_mut().zip(b) {
                *vk -= c * bk;
            }
        }
        let nv = norm2(v);
        if !(nv > 0.0) {
            return Err(EvsError::DegenerateGeometry);
        }
        for vk in v.iter_mut() {
            *vk /= nv;
        }
    }
    Ok(basis)
}

/// Result of the stiffness stabilization pipeline.
#[derive(Clone, Debug)]
pub struct StiffnessStabilization {
    /// Raw (un-scaled) stabilization matrix.
    pub raw: Mat,
    /// Number of selected (nearly) zero modes.
    pub n_s: usize,
    /// Number of unphysical modes that ended up stabilized.
    pub n_u: usize,
    /// Number of rigid body modes (3 in 2D).
    pub n_0: usize,
    pub warning: Option<String>,
    pub clamped: bool,
}

/// Stiffness stabilization: select the (nearly) zero modes, project the
/// rigid-body content out of each, delete modes that were nothing but rigid
/// body motion, re-orthonormalize the survivors, and sum their ε_i-weighted
/// outer products. The result annihilates all rigid body motions by
/// construction.
pub fn stiffness_stabilization(
    k_c: &Mat,
    node_coords: &[Vec2],
    cfg: &EvsConfig,
    chi: f64,
    lame_lambda: f64,
) -> Result<StiffnessStabilization, EvsError> {
    let n = k_c.rows();
    let eig = sym_eig(k_c)?;
    let selected = select_modes(&eig, cfg.eps_lambda)?;
    let lambda_max = eig.lambda_max();
    let n_s = selected.len();
    let n_0 = 3;
    if n_s < n_0 {
        return Ok(StiffnessStabilization {
            raw: Mat::zeros(n, n),
            n_s,
            n_u: 0,
            n_0,
            warning: Some(format!(
                "only {n_s} modes selected where at least {n_0} rigid body modes were expected; \
                 eps_lambda = {:.1e} is too small, stabilization skipped",
                cfg.eps_lambda
            )),
            clamped: false,
        });
    }
    let rbms = rbm_vectors(node_coords)?;
    let lambda_min = selected
        .iter()
        .map(|&i| eig.values[i].abs())
        .fold(f64::INFINITY, f64::min);

    // Project the rigid-body space out of every selected mode; modes that
    // collapse were pure rigid body combinations and are deleted.
    let mut survivors: Vec<(usize, Vec<f64>)> = Vec::new();
    for &i in &selected {
        let mut v = eig.vector(i);
        for r in &rbms {
            let c = dot(&v, r);
            for (vk, rk) in v.iter_mut().zip(r) {
                *vk -= c * rk;
            }
        }
        let nsq = dot(&v, &v);
        let delete = match cfg.rbm_deletion {
            RbmDeletionRule::SmallestEigenvalue => nsq < lambda_min,
            RbmDeletionRule::FixedNorm => nsq.sqrt() < 1e-3,
        };
        if !delete {
            let nv = nsq.sqrt();
            for vk in v.iter_mut() {
                *vk /= nv;
            }
            survivors.push((i, v));
        }
    }

    // The extraction can leave the survivors linearly dependent; a second
    // sequential orthogonalization restores an orthonormal set, dropping
    // vectors that collapse onto earlier ones.
    let mut basis: Vec<(usize, Vec<f64>)> = Vec::new();
    for (i, mut v) in survivors {
        for (_, b) in &basis {
            let c = dot(&v, b);
            for (vk, bk) in v.iter_mut().zip(b) {
                *vk -= c * bk;
            }
        }
        let nv = norm2(&v);
        if nv > 1e-8 {
            for vk in v.iter_mut() {
                *vk /= nv;
            }
            basis.push((i, v));
        }
    }

    let n_u = basis.len();
    let mut raw = Mat::zeros(n, n);
    let mut clamped = false;
    for (i, v) in &basis {
        let (eps_i, cl) = stabilization_factor(
            cfg.factor_law,
            cfg.eps_s,
            eig.values[*i],
            lambda_max,
            chi,
            lame_lambda,
        );
        clamped |= cl;
        raw.add_outer(v, eps_i);
    }
    Ok(StiffnessStabilization {
        raw,
        n_s,
        n_u,
        n_0,
        warning: None,
        clamped,
    })
}

/// Scaling power n_α = 10^γ with γ = round(log10(ref_max/stab_max · ε_S)),
/// ties rounding away from zero. A zero stabilization matrix needs no
/// scaling and yields 1.
pub fn scale_stabilization(stab_max: f64, ref_max: f64, eps_s: f64) -> f64 {
    if !(stab_max > 0.0) {
        return 1.0;
    }
    let gamma = ((ref_max / stab_max) * eps_s).log10().round();
    10f64.powi(gamma as i32)
}

/// Largest matrix entries of an uncut element of the same size, material,
/// and order — the unit-bearing reference the scaling step works against.
#[derive(Clone, Copy, Debug)]
pub struct ReferenceMaxima {
    pub k_max: f64,
    pub m_consistent_max: f64,
    pub m_lumped_max: f64,
}

pub fn reference_maxima(
    material: &Material,
    bbox: &Rect,
    p: usize,
) -> Result<ReferenceMaxima, EvsError> {
    let solid = ImplicitDomain::solid(*bbox);
    let cfg = IndicatorConfig { alpha0: 0.0 };
    let em = compute_element_matrices(&solid, cfg, material, bbox, p, 0)?;
    let m_lumped_max = em.m_lumped.iter().fold(0.0_f64, |a, &b| a.max(b.abs()));
    Ok(ReferenceMaxima {
        k_max: em.k_c.max_abs(),
        m_consistent_max: em.m_c.max_abs(),
        m_lumped_max,
    })
}

/// Symmetric matrix that is either dense or purely diagonal. Lumped masses
/// and diagonal stabilization matrices stay diagonal end to end, which the
/// explicit solver depends on.
#[derive(Clone, Debug, PartialEq)]
pub enum MatrixForm {
    Dense(Mat),
    Diagonal(Vec<f64>),
}

impl MatrixForm {
    pub fn dim(&self) -> usize {
        match self {
            MatrixForm::Dense(m) => m.rows(),
            MatrixForm::Diagonal(d) => d.len(),
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match self {
            MatrixForm::Dense(m) => m.get(i, j),
            MatrixForm::Diagonal(d) => {
                if i == j {
                    d[i]
                } else {
                    0.0
                }
            }
        }
    }

    pub fn to_dense(&self) -> Mat {
        match self {
            MatrixForm::Dense(m) => m.clone(),
            MatrixForm::Diagonal(d) => Mat::from_diag(d),
        }
    }

    pub fn as_diagonal(&self) -> Option<&[f64]> {
        match self {
            MatrixForm::Dense(_) => None,
            MatrixForm::Diagonal(d) => Some(d),
        }
    }

    pub fn max_abs(&self) -> f64 {
        match self {
            MatrixForm::Dense(m) => m.max_abs(),
            MatrixForm::Diagonal(d) => d.iter().fold(0.0_f64, |a, &b| a.max(b.abs())),
        }
    }

    pub fn scaled(&self, s: f64) -> MatrixForm {
        match self {
            MatrixForm::Dense(m) => {
                let mut out = m.clone();
                out.scale(s);
                MatrixForm::Dense(out)
            }
            MatrixForm::Diagonal(d) => MatrixForm::Diagonal(d.iter().map(|v| v * s).collect()),
        }
    }

    /// Sum; stays diagonal only when both operands are diagonal.
    pub fn add(&self, other: &MatrixForm) -> MatrixForm {
        match (self, other) {
            (MatrixForm::Diagonal(a), MatrixForm::Diagonal(b)) => {
                MatrixForm::Diagonal(a.iter().zip(b).map(|(x, y)| x + y).collect())
            }
            _ => {
                let mut out = self.to_dense();
                out.add_scaled(&other.to_dense(), 1.0);
                MatrixForm::Dense(out)
            }
        }
    }
}

/// Outcome of stabilizing one cut element under a given configuration.
#[derive(Clone, Debug)]
pub struct StabilizationResult {
    /// Scaled, lumped mass stabilization matrix (absent if mass is not
    /// stabilized).
    pub m_stab: Option<MatrixForm>,
    /// Scaled stiffness stabilization matrix.
    pub k_stab: Option<Mat>,
    pub n_stab_modes_m: usize,
    pub n_u: usize,
    pub n_0: usize,
    pub scale_m: f64,
    pub scale_k: f64,
    pub warning: Option<String>,
    pub clamped: bool,
}

impl StabilizationResult {
    fn empty() -> StabilizationResult {
        StabilizationResult {
            m_stab: None,
            k_stab: None,
            n_stab_modes_m: 0,
            n_u: 0,
            n_0: 3,
            scale_m: 1.0,
            scale_k: 1.0,
            warning: None,
            clamped: false,
        }
    }
}

/// HRZ-style diagonal of a positive semidefinite stabilization matrix: the
/// diagonal scaled so the total is conserved. A zero diagonal means a zero
/// matrix and lumps to zero.
fn hrz_diagonal_psd(m: &Mat) -> Vec<f64> {
    let n = m.rows();
    let mut total = 0.0;
    let mut dsum = 0.0;
    for i in 0..n {
        dsum += m.get(i, i);
        for j in 0..n {
            total += m.get(i, j);
        }
    }
    if !(dsum > 0.0) {
        return vec![0.0; n];
    }
    let beta = total / dsum;
    (0..n).map(|i| beta * m.get(i, i)).collect()
}

/// Run the configured stabilization pipelines on one element. Uncut elements
/// and ε_S = 0 are exact no-ops. The reference maxima must come from an
/// uncut element of the same mesh, material, and order.
pub fn stabilize_element(
    em: &ElementMatrices,
    node_coords: &[Vec2],
    material: &Material,
    cfg: &EvsConfig,
    reference: &ReferenceMaxima,
) -> Result<StabilizationResult, EvsError> {
    let mut out = StabilizationResult::empty();
    if !em.cut || cfg.eps_s == 0.0 || (!cfg.stabilize_m && !cfg.stabilize_k) {
        return Ok(out);
    }
    let (lame_lambda, _) = material.lame();

    if cfg.stabilize_m {
        let basis = match cfg.mass_basis {
            MassEigBasis::Consistent => em.m_c.clone(),
            MassEigBasis::Lumped => Mat::from_diag(&em.m_lumped),
        };
        let ms = mass_stabilization(&basis, cfg, em.chi, lame_lambda)?;
        out.n_stab_modes_m = ms.selected.len();
        out.clamped |= ms.clamped;
        let lumped = match cfg.lump_stab {
            StabLumping::None => MatrixForm::Dense(ms.raw),
            StabLumping::Hrz => MatrixForm::Diagonal(hrz_diagonal_psd(&ms.raw)),
            StabLumping::RowSum => MatrixForm::Diagonal(lump_rowsum(&ms.raw)),
        };
        if cfg.scaling {
            let ref_max = match cfg.mass_basis {
                MassEigBasis::Consistent => reference.m_consistent_max,
                MassEigBasis::Lumped => reference.m_lumped_max,
            };
            out.scale_m = scale_stabilization(lumped.max_abs(), ref_max, cfg.eps_s);
        }
        out.m_stab = Some(lumped.scaled(out.scale_m));
    }

    if cfg.stabilize_k {
        let ks = stiffness_stabilization(&em.k_c, node_coords, cfg, em.chi, lame_lambda)?;
        out.n_u = ks.n_u;
        out.n_0 = ks.n_0;
        out.clamped |= ks.clamped;
        out.warning = ks.warning;
        let mut raw = ks.raw;
        if cfg.scaling {
            out.scale_k = scale_stabilization(raw.max_abs(), reference.k_max, cfg.eps_s);
        }
        raw.scale(out.scale_k);
        out.k_stab = Some(raw);
    }
    Ok(out)
}

/// Final per-element matrices after stabilization and mass lumping:
/// K_mod = K_c + K_stab and M_mod = (lumped or consistent M_c) + M_stab.
pub fn modified_matrices(
    em: &ElementMatrices,
    stab: &StabilizationResult,
    cfg: &EvsConfig,
) -> (Mat, MatrixForm) {
    let mut k = em.k_c.clone();
    if let Some(ks) = &stab.k_stab {
        k.add_scaled(ks, 1.0);
    }
    let base = if cfg.lump_mass {
        MatrixForm::Diagonal(em.m_lumped.clone())
    } else {
        MatrixForm::Dense(em.m_c.clone())
    };
    let m = match &stab.m_stab {
        Some(ms) => base.add(ms),
        None => base,
    };
    (k, m)
}

/// Largest discrepancy between the spectrum of A + A_stab and the shifted
/// target spectrum λ_i + ε_i, matched in sorted order. Valid for raw
/// (un-lumped, un-scaled) stabilization matrices.
pub fn spectral_identity_check(
    a: &Mat,
    a_stab: &Mat,
    eig: &EigResult,
    eps_per_mode: &[f64],
) -> Result<f64, EvsError> {
    let mut modified = a.clone();
    modified.add_scaled(a_stab, 1.0);
    let got = sym_eig(&modified)?;
    let mut want: Vec<f64> = eig
        .values
        .iter()
        .zip(eps_per_mode)
        .map(|(l, e)| l + e)
        .collect();
    want.sort_by(|x, y| x.partial_cmp(y).unwrap());
    Ok(got
        .values
        .iter()
        .zip(&want)
        .map(|(g, w)| (g - w).abs())
        .fold(0.0_f64, f64::max))
}
