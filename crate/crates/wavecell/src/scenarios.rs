//! Benchmark models, excitation signals, wave-speed helpers, and error
//! metrics.
//!
//! A [`Scenario`] is a fully parametrized, serializable description of one
//! simulation: geometry and mesh in millimeters, material, boundary
//! conditions, burst loads, probe points, and time-stepping settings. The
//! catalog in [`builtin_scenarios`] covers the studies this engine is built
//! around: a single badly cut element, a quarter plate with a circular hole,
//! a rectangular waveguide with a trimmed (immersed) end, and a perforated
//! waveguide with 37 cutouts.
//!
//! Geometry is specified in millimeters — the natural unit for these models,
//! and one in which all benchmark coordinates are exactly representable —
//! and converted to meters when a scenario is assembled into a global
//! system.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::element::{classification_depth, volume_fraction, Material, StressState};
use crate::evs::{variant_config, EvsConfig};
use crate::geometry::{
    CircleSense, ElementClass, GeometryError, ImplicitDomain, Primitive, Rect, Vec2,
};
use crate::solver::{
    assemble, fix_edge, uniform_breaks, AssemblyConfig, AssemblyStats, Cdm, Edge, GlobalSystem,
    Load, Mesh, NodeFix, ProbeSeries, SolverError,
};

/// Millimeter-to-meter scale applied when building solver inputs.
pub const MM: f64 = 1e-3;

/// Tolerance (meters) for matching probe and load points to mesh nodes.
const NODE_MATCH_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("no mesh node within {NODE_MATCH_TOL} m of point ({0}, {1}) mm for '{purpose}'", point.x, point.y)]
    PointOffNode { point: Vec2, purpose: String },
    #[error("load at ({0}, {1}) mm drives the {component} component, but that DOF is fixed", point.x, point.y)]
    LoadOnFixedDof { point: Vec2, component: char },
    #[error("time grids must hold at least two samples")]
    SeriesTooShort,
    #[error("time values and samples differ in length: {t} vs {u}")]
    SeriesLengthMismatch { t: usize, u: usize },
    #[error("time grid must be strictly increasing")]
    NonMonotonicTime,
    #[error("numerical series (span {num:?}) does not cover the reference window {reference:?}")]
    SeriesCoverage {
        reference: (f64, f64),
        num: (f64, f64),
    },
    #[error("reference signal has zero energy; the relative error is undefined")]
    ZeroEnergyReference,
    #[error("unknown stabilization variant '{0}'")]
    UnknownVariant(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

// ---------------------------------------------------------------------------
// Excitation
// ---------------------------------------------------------------------------

/// Sine burst modulated by a Hann window: amplitude, central frequency, and
/// the number of carrier periods. The signal is supported on `[0, n/f_c]`
/// and identically zero afterwards.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BurstSignal {
    /// Peak force amplitude in newtons.
    pub f_bar: f64,
    /// Central frequency in hertz.
    pub f_c: f64,
    /// Number of carrier periods inside the window.
    pub n: u32,
}

impl BurstSignal {
    /// Duration of the burst, `n / f_c`.
    pub fn duration(&self) -> f64 {
        self.n as f64 / self.f_c
    }
}

/// Hann-windowed sine burst
/// `F̄ · sin(ω t) · sin²(ω t / (2 n))` with `ω = 2π f_c`, zero outside the
/// support `[0, n/f_c]`.
pub fn hann_burst(sig: &BurstSignal, t: f64) -> f64 {
    if t < 0.0 || t > sig.duration() {
        return 0.0;
    }
    let omega = 2.0 * std::f64::consts::PI * sig.f_c;
    let envelope = (omega * t / (2.0 * sig.n as f64)).sin();
    sig.f_bar * (omega * t).sin() * envelope * envelope
}

// ---------------------------------------------------------------------------
// Wave speeds
// ---------------------------------------------------------------------------

/// Bulk wave velocities of a material.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WaveSpeeds {
    /// Pressure (longitudinal) wave speed in m/s.
    pub c_p: f64,
    /// Shear (transverse) wave speed in m/s.
    pub c_s: f64,
}

impl WaveSpeeds {
    /// Shear wavelength at frequency `f` (meters).
    pub fn shear_wavelength(&self, f: f64) -> f64 {
        self.c_s / f
    }
}

/// Bulk wave speeds `c_P = √((λ+2μ)/ρ)` and `c_S = √(μ/ρ)` from the Lamé
/// constants `λ = Eν/((1+ν)(1−2ν))` and `μ = E/(2(1+ν))`.
pub fn wave_speeds(material: &Material) -> WaveSpeeds {
    let (e, nu, rho) = (material.e, material.nu, material.rho);
    let lambda = e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
    let mu = e / (2.0 * (1.0 + nu));
    WaveSpeeds {
        c_p: ((lambda + 2.0 * mu) / rho).sqrt(),
        c_s: (mu / rho).sqrt(),
    }
}

// ---------------------------------------------------------------------------
// Error metric
// ---------------------------------------------------------------------------

fn check_series(t: &[f64], u: &[f64]) -> Result<(), ScenarioError> {
    if t.len() != u.len() {
        return Err(ScenarioError::SeriesLengthMismatch {
            t: t.len(),
            u: u.len(),
        });
    }
    if t.len() < 2 {
        return Err(ScenarioError::SeriesTooShort);
    }
    if t.windows(2).any(|w| w[1] <= w[0]) {
        return Err(ScenarioError::NonMonotonicTime);
    }
    Ok(())
}

/// Linear interpolation of `(t, u)` at `x`; `t` strictly increasing and
/// `x` inside `[t[0], t[last]]` (within round-off).
fn interp(t: &[f64], u: &[f64], x: f64) -> f64 {
    let n = t.len();
    if x <= t[0] {
        return u[0];
    }
    if x >= t[n - 1] {
        return u[n - 1];
    }
    let j = t.partition_point(|&v| v < x).max(1);
    let (t0, t1) = (t[j - 1], t[j]);
    let w = (x - t0) / (t1 - t0);
    u[j - 1] * (1.0 - w) + u[j] * w
}

fn trapezoid(t: &[f64], f: impl Fn(usize) -> f64) -> f64 {
    let mut s = 0.0;
    for i in 1..t.len() {
        s += 0.5 * (t[i] - t[i - 1]) * (f(i) + f(i - 1));
    }
    s
}

/// Relative L2 time-signal error in percent:
/// `100 · √(∫(u_ref − u_num)² dt / ∫u_ref² dt)` over the reference time
/// window, trapezoidal integration. The numerical series is resampled onto
/// the reference grid by linear interpolation; it must cover the reference
/// window. A reference with zero energy is an error.
pub fn l2_error(
    t_ref: &[f64],
    u_ref: &[f64],
    t_num: &[f64],
    u_num: &[f64],
) -> Result<f64, ScenarioError> {
    check_series(t_ref, u_ref)?;
    check_series(t_num, u_num)?;
    let span_ref = (t_ref[0], *t_ref.last().unwrap());
    let span_num = (t_num[0], *t_num.last().unwrap());
    let slack = 1e-9 * (span_ref.1 - span_ref.0);
    if span_num.0 > span_ref.0 + slack || span_num.1 < span_ref.1 - slack {
        return Err(ScenarioError::SeriesCoverage {
            reference: span_ref,
            num: span_num,
        });
    }
    let resampled: Vec<f64> = t_ref.iter().map(|&x| interp(t_num, u_num, x)).collect();
    let energy = trapezoid(t_ref, |i| u_ref[i] * u_ref[i]);
    if energy <= 0.0 {
        return Err(ScenarioError::ZeroEnergyReference);
    }
    let diff = trapezoid(t_ref, |i| {
        let d = u_ref[i] - resampled[i];
        d * d
    });
    Ok(100.0 * (diff / energy).sqrt())
}

// ---------------------------------------------------------------------------
// Scenario description
// ---------------------------------------------------------------------------

/// Zero-displacement constraint on one mesh edge (per component).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeConstraint {
    pub edge: Edge,
    pub fix_x: bool,
    pub fix_y: bool,
}

/// Concentrated burst force at a mesh node, in a fixed direction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointLoad {
    /// Application point in millimeters; must coincide with a mesh node.
    pub at_mm: Vec2,
    /// Direction the force acts in (applied as `direction · F(t)`).
    pub direction: [f64; 2],
    pub signal: BurstSignal,
}

/// Named observation point; must coincide with a mesh node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbePoint {
    pub name: String,
    pub at_mm: Vec2,
}

/// A complete, serializable simulation description in millimeter geometry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    /// Physical geometry: closed extent minus voids, in millimeters.
    pub domain_mm: ImplicitDomain,
    /// Mesh extent in millimeters; may reach beyond the physical domain
    /// (the immersed part is trimmed at assembly).
    pub mesh_extent_mm: Rect,
    pub nx: usize,
    pub ny: usize,
    /// Explicit break positions (mm) overriding the uniform subdivision,
    /// e.g. to guarantee a node at a probe.
    #[serde(default)]
    pub x_breaks_mm: Option<Vec<f64>>,
    #[serde(default)]
    pub y_breaks_mm: Option<Vec<f64>>,
    /// Polynomial order of the shape functions.
    pub p: usize,
    /// Quadtree subdivision limit for cut-element quadrature.
    pub depth: usize,
    pub material: Material,
    #[serde(default)]
    pub constraints: Vec<EdgeConstraint>,
    #[serde(default)]
    pub loads: Vec<PointLoad>,
    #[serde(default)]
    pub probes: Vec<ProbePoint>,
    /// Time step in seconds.
    pub dt: f64,
    /// Simulated duration in seconds.
    pub t_end: f64,
    pub evs: EvsConfig,
}

/// Result of a transient scenario run.
pub struct ScenarioOutcome {
    /// Critical time step of the assembled system (seconds).
    pub critical_dt: f64,
    pub probes: Vec<ProbeSeries>,
    pub stats: AssemblyStats,
    pub steps: usize,
    pub dt: f64,
}

fn scale_primitive(p: &Primitive, s: f64) -> Primitive {
    match *p {
        Primitive::HalfPlane { normal, offset } => Primitive::HalfPlane {
            normal,
            offset: offset * s,
        },
        Primitive::Circle {
            center,
            radius,
            sense,
        } => Primitive::Circle {
            center: Vec2::new(center.x * s, center.y * s),
            radius: radius * s,
            sense,
        },
        Primitive::RectVoid { rect } => Primitive::RectVoid {
            rect: scale_rect(&rect, s),
        },
    }
}

fn scale_rect(r: &Rect, s: f64) -> Rect {
    Rect::new(
        Vec2::new(r.min.x * s, r.min.y * s),
        Vec2::new(r.max.x * s, r.max.y * s),
    )
    .expect("scaling preserves ordering")
}

impl Scenario {
    /// The physical domain in meters.
    pub fn domain_m(&self) -> ImplicitDomain {
        ImplicitDomain::new(
            scale_rect(&self.domain_mm.extent, MM),
            self.domain_mm
                .voids
                .iter()
                .map(|v| scale_primitive(v, MM))
                .collect(),
        )
    }

    /// Break positions (mm) along x: explicit if given, else uniform.
    pub fn x_breaks(&self) -> Vec<f64> {
        self.x_breaks_mm.clone().unwrap_or_else(|| {
            uniform_breaks(self.mesh_extent_mm.min.x, self.mesh_extent_mm.max.x, self.nx)
        })
    }

    /// Break positions (mm) along y: explicit if given, else uniform.
    pub fn y_breaks(&self) -> Vec<f64> {
        self.y_breaks_mm.clone().unwrap_or_else(|| {
            uniform_breaks(self.mesh_extent_mm.min.y, self.mesh_extent_mm.max.y, self.ny)
        })
    }

    /// The analysis mesh in meters.
    pub fn mesh(&self) -> Result<Mesh, ScenarioError> {
        let to_m = |b: Vec<f64>| b.into_iter().map(|x| x * MM).collect::<Vec<_>>();
        Ok(Mesh::from_breaks(
            to_m(self.x_breaks()),
            to_m(self.y_breaks()),
            self.p,
        )?)
    }

    /// Assembly settings derived from this scenario.
    pub fn assembly_config(&self, workers: usize) -> AssemblyConfig {
        AssemblyConfig {
            depth: self.depth,
            evs: self.evs.clone(),
            alpha_r: 0.0,
            beta_r: 0.0,
            workers,
        }
    }

    /// Replace the stabilization settings with a named method variant.
    pub fn with_variant(mut self, code: &str) -> Result<Self, ScenarioError> {
        self.evs =
            variant_config(code).map_err(|_| ScenarioError::UnknownVariant(code.to_string()))?;
        Ok(self)
    }

    /// Resolved Dirichlet constraints for this scenario's mesh.
    pub fn fixed_dofs(&self, mesh: &Mesh) -> Vec<NodeFix> {
        let mut fixed = Vec::new();
        for c in &self.constraints {
            fixed.extend(fix_edge(mesh, c.edge, c.fix_x, c.fix_y));
        }
        fixed
    }

    /// Assemble the global system (and the mesh it lives on).
    pub fn assemble(&self, workers: usize) -> Result<(GlobalSystem, Mesh), ScenarioError> {
        let mesh = self.mesh()?;
        let domain = self.domain_m();
        let fixed = self.fixed_dofs(&mesh);
        let sys = assemble(
            &domain,
            &mesh,
            &self.material,
            &fixed,
            &self.assembly_config(workers),
        )?;
        Ok((sys, mesh))
    }

    fn node_for(
        &self,
        mesh: &Mesh,
        at_mm: Vec2,
        purpose: &str,
    ) -> Result<(usize, usize), ScenarioError> {
        mesh.node_at(Vec2::new(at_mm.x * MM, at_mm.y * MM), NODE_MATCH_TOL)
            .ok_or_else(|| ScenarioError::PointOffNode {
                point: at_mm,
                purpose: purpose.to_string(),
            })
    }

    /// Solver loads for this scenario on an assembled system.
    pub fn resolve_loads(
        &self,
        sys: &GlobalSystem,
        mesh: &Mesh,
    ) -> Result<Vec<Load>, ScenarioError> {
        let mut out = Vec::new();
        for load in &self.loads {
            let node = self.node_for(mesh, load.at_mm, "load")?;
            let (dx, dy) = sys.node_free_dofs(node)?;
            for (c, dof) in [(0usize, dx), (1usize, dy)] {
                let dir = load.direction[c];
                if dir == 0.0 {
                    continue;
                }
                let dof = dof.ok_or(ScenarioError::LoadOnFixedDof {
                    point: load.at_mm,
                    component: if c == 0 { 'x' } else { 'y' },
                })?;
                let sig = load.signal;
                out.push(Load {
                    dof,
                    signal: Box::new(move |t| dir * hann_burst(&sig, t)),
                });
            }
        }
        Ok(out)
    }

    /// Number of time steps, `round(t_end / dt)`.
    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    /// Assemble and integrate the scenario, recording all probes.
    pub fn run(&self, workers: usize) -> Result<ScenarioOutcome, ScenarioError> {
        let (sys, mesh) = self.assemble(workers)?;
        let critical_dt = sys.critical_dt()?;
        let loads = self.resolve_loads(&sys, &mesh)?;
        let mut cdm = Cdm::at_rest(&sys, self.dt, loads)?;
        for probe in &self.probes {
            let node = self.node_for(&mesh, probe.at_mm, "probe")?;
            cdm.add_probe(&probe.name, node)?;
        }
        let steps = self.steps();
        cdm.run(steps)?;
        Ok(ScenarioOutcome {
            critical_dt,
            probes: cdm.into_probes(),
            stats: sys.stats.clone(),
            steps,
            dt: self.dt,
        })
    }

    /// Classify every element in the exact millimeter frame (the benchmark
    /// coordinates are integers or quarter-multiples there, so boundary
    /// tangencies are detected without round-off).
    pub fn classify_elements_mm(&self) -> Result<Vec<ElementClass>, ScenarioError> {
        let mesh = Mesh::from_breaks(self.x_breaks(), self.y_breaks(), self.p)?;
        let depth = classification_depth(self.depth);
        let mut out = Vec::with_capacity(mesh.nx() * mesh.ny());
        for ey in 0..mesh.ny() {
            for ex in 0..mesh.nx() {
                out.push(
                    self.domain_mm
                        .classify_element(&mesh.element_rect(ex, ey), depth),
                );
            }
        }
        Ok(out)
    }

    /// `(cut, uncut, fully fictitious)` element counts in the exact
    /// millimeter frame.
    pub fn classification_counts(&self) -> Result<(usize, usize, usize), ScenarioError> {
        let mut counts = (0usize, 0usize, 0usize);
        for class in self.classify_elements_mm()? {
            match class {
                ElementClass::Cut => counts.0 += 1,
                ElementClass::Uncut => counts.1 += 1,
                ElementClass::FullyFictitious => counts.2 += 1,
            }
        }
        Ok(counts)
    }

    /// Physical volume fraction of every cut element at subdivision depth
    /// `k`, in element scan order (millimeter frame).
    pub fn cut_volume_fractions(&self, k: usize) -> Result<Vec<f64>, ScenarioError> {
        let mesh = Mesh::from_breaks(self.x_breaks(), self.y_breaks(), self.p)?;
        let mut out = Vec::new();
        for (i, class) in self.classify_elements_mm()?.iter().enumerate() {
            if *class == ElementClass::Cut {
                let (ex, ey) = (i % mesh.nx(), i / mesh.nx());
                out.push(volume_fraction(
                    &self.domain_mm,
                    &mesh.element_rect(ex, ey),
                    k,
                ));
            }
        }
        Ok(out)
    }
}

// ---------------------------------------------------------------------------
// Builtin catalog
// ---------------------------------------------------------------------------

/// Steel, plane stress: E = 210 GPa, ν = 0.3, ρ = 7850 kg/m³.
pub fn steel() -> Material {
    Material::new(210e9, 0.3, 7850.0, StressState::PlaneStress).expect("valid constants")
}

/// Aluminum, plane strain: E = 70 GPa, ν = 0.3, ρ = 2700 kg/m³.
pub fn aluminum() -> Material {
    Material::new(70e9, 0.3, 2700.0, StressState::PlaneStrain).expect("valid constants")
}

/// Aluminum variant with ν = 0.33 (perforated waveguide), plane strain.
pub fn aluminum_nu33() -> Material {
    Material::new(70e9, 0.33, 2700.0, StressState::PlaneStrain).expect("valid constants")
}

fn rect_mm(x0: f64, y0: f64, x1: f64, y1: f64) -> Rect {
    Rect::new(Vec2::new(x0, y0), Vec2::new(x1, y1)).expect("valid benchmark extent")
}

fn reference_variant() -> EvsConfig {
    variant_config("0e").expect("catalog variant")
}

/// Single 1 m × 1 m element with a circular void of radius 1.2 m centered
/// on its lower-left corner; only the far-corner sliver (χ ≈ 4.9%) is
/// physical. The workhorse model for critical-time-step studies.
pub fn single_cut_element() -> Scenario {
    let extent = rect_mm(0.0, 0.0, 1000.0, 1000.0);
    Scenario {
        name: "single-cut-element".into(),
        domain_mm: ImplicitDomain::new(
            extent,
            vec![Primitive::Circle {
                center: Vec2::new(0.0, 0.0),
                radius: 1200.0,
                sense: CircleSense::Void,
            }],
        ),
        mesh_extent_mm: extent,
        nx: 1,
        ny: 1,
        x_breaks_mm: None,
        y_breaks_mm: None,
        p: 2,
        depth: 8,
        material: steel(),
        constraints: vec![],
        loads: vec![],
        probes: vec![ProbePoint {
            name: "corner".into(),
            at_mm: Vec2::new(1000.0, 1000.0),
        }],
        dt: 1e-7,
        t_end: 1e-5,
        evs: reference_variant(),
    }
}

/// Quarter model of a 200 mm × 200 mm plate with a central circular hole of
/// radius 70 mm: extent [0,100]² mm, hole centered on the bottom-right
/// corner, symmetry constraints on the right (u_x = 0) and bottom (u_y = 0)
/// edges. 2×2 elements; the bottom-right element keeps only a χ ≈ 0.02%
/// sliver. The conditioning benchmark.
pub fn plate_with_hole() -> Scenario {
    let extent = rect_mm(0.0, 0.0, 100.0, 100.0);
    let mut evs = variant_config("3b").expect("catalog variant");
    evs.eps_s = 1e-2;
    evs.eps_lambda = 1e-3;
    Scenario {
        name: "plate-with-hole".into(),
        domain_mm: ImplicitDomain::new(
            extent,
            vec![Primitive::Circle {
                center: Vec2::new(100.0, 0.0),
                radius: 70.0,
                sense: CircleSense::Void,
            }],
        ),
        mesh_extent_mm: extent,
        nx: 2,
        ny: 2,
        x_breaks_mm: None,
        y_breaks_mm: None,
        p: 2,
        depth: 4,
        material: steel(),
        constraints: vec![
            EdgeConstraint {
                edge: Edge::Right,
                fix_x: true,
                fix_y: false,
            },
            EdgeConstraint {
                edge: Edge::Bottom,
                fix_x: false,
                fix_y: true,
            },
        ],
        loads: vec![],
        probes: vec![ProbePoint {
            name: "far-corner".into(),
            at_mm: Vec2::new(0.0, 100.0),
        }],
        dt: 1e-7,
        t_end: 1e-5,
        evs,
    }
}

/// Rectangular waveguide with a trimmed immersed end, parametrized by the
/// extended length (mm), element count along x, the cut-element volume
/// fraction χ, polynomial order, time stepping, and the probe position.
///
/// The plate is 2 mm thick (two which-way-square elements across), aluminum,
/// plane strain. A Hann-burst point force acts downward on the top-left
/// node; the left edge carries a symmetry constraint (u_x = 0). The physical
/// length is `l_d − (1 − χ)·h_l`, so the last element column is cut with
/// exactly the requested volume fraction.
pub fn rectangular_waveguide_sized(
    length_mm: f64,
    nx: usize,
    chi: f64,
    p: usize,
    dt: f64,
    t_end: f64,
    probe_x_mm: f64,
) -> Scenario {
    let h_l = length_mm / nx as f64;
    let l_phys = length_mm - (1.0 - chi) * h_l;
    Scenario {
        name: "rectangular-waveguide".into(),
        domain_mm: ImplicitDomain::solid(rect_mm(0.0, -1.0, l_phys, 1.0)),
        mesh_extent_mm: rect_mm(0.0, -1.0, length_mm, 1.0),
        nx,
        ny: 2,
        x_breaks_mm: None,
        y_breaks_mm: None,
        p,
        depth: 8,
        material: aluminum(),
        constraints: vec![EdgeConstraint {
            edge: Edge::Left,
            fix_x: true,
            fix_y: false,
        }],
        loads: vec![PointLoad {
            at_mm: Vec2::new(0.0, 1.0),
            direction: [0.0, -1.0],
            signal: BurstSignal {
                f_bar: 1e6,
                f_c: 500e3,
                n: 5,
            },
        }],
        probes: vec![ProbePoint {
            name: "P1".into(),
            at_mm: Vec2::new(probe_x_mm, 1.0),
        }],
        dt,
        t_end,
        evs: reference_variant(),
    }
}

/// The full-size rectangular waveguide: 200 mm × 2 mm on 200×2 elements,
/// χ = 5% (physical length 199.05 mm), 500 kHz five-cycle burst, 120 μs of
/// simulated time at Δt = 3 ns, probe at the top-surface midpoint.
pub fn rectangular_waveguide() -> Scenario {
    rectangular_waveguide_sized(200.0, 200, 0.05, 4, 3e-9, 120e-6, 100.0)
}

/// Geometry-conforming companion of [`rectangular_waveguide_sized`]: the
/// mesh ends exactly at the physical length (no cut elements) and is
/// partitioned at the probe so a node lands there. Used as a self-reference
/// for convergence studies.
pub fn conforming_waveguide_reference(
    length_mm: f64,
    nx: usize,
    chi: f64,
    p: usize,
    dt: f64,
    t_end: f64,
    probe_x_mm: f64,
) -> Scenario {
    let h_l = length_mm / nx as f64;
    let l_phys = length_mm - (1.0 - chi) * h_l;
    let n_left = (probe_x_mm / h_l).round().max(1.0) as usize;
    let n_right = ((l_phys - probe_x_mm) / h_l).round().max(1.0) as usize;
    let mut x_breaks = uniform_breaks(0.0, probe_x_mm, n_left);
    x_breaks.extend(uniform_breaks(probe_x_mm, l_phys, n_right).into_iter().skip(1));
    let mut scn = rectangular_waveguide_sized(length_mm, nx, chi, p, dt, t_end, probe_x_mm);
    scn.name = "rectangular-waveguide-conforming".into();
    scn.domain_mm = ImplicitDomain::solid(rect_mm(0.0, -1.0, l_phys, 1.0));
    scn.mesh_extent_mm = rect_mm(0.0, -1.0, l_phys, 1.0);
    scn.nx = n_left + n_right;
    scn.x_breaks_mm = Some(x_breaks);
    scn
}

fn perforated_waveguide_with_radius(circle_r_mm: f64, dt: f64, name: &str) -> Scenario {
    let extent = rect_mm(0.0, -2.5, 600.0, 2.5);
    let mut voids = Vec::new();
    for j in 0..13 {
        voids.push(Primitive::Circle {
            center: Vec2::new(152.0 + 4.0 * j as f64, 0.0),
            radius: circle_r_mm,
            sense: CircleSense::Void,
        });
    }
    for j in 0..12 {
        for y in [2.5, -2.5] {
            voids.push(Primitive::Circle {
                center: Vec2::new(154.0 + 4.0 * j as f64, y),
                radius: 1.0,
                sense: CircleSense::Void,
            });
        }
    }
    let burst = BurstSignal {
        f_bar: 1e8,
        f_c: 200e3,
        n: 5,
    };
    Scenario {
        name: name.into(),
        domain_mm: ImplicitDomain::new(extent, voids),
        mesh_extent_mm: extent,
        nx: 480,
        ny: 4,
        x_breaks_mm: None,
        y_breaks_mm: None,
        p: 4,
        depth: 4,
        material: aluminum_nu33(),
        constraints: vec![],
        loads: vec![
            PointLoad {
                at_mm: Vec2::new(0.0, 2.5),
                direction: [0.0, 1.0],
                signal: burst,
            },
            PointLoad {
                at_mm: Vec2::new(0.0, -2.5),
                direction: [0.0, -1.0],
                signal: burst,
            },
        ],
        probes: vec![
            ProbePoint {
                name: "P1".into(),
                at_mm: Vec2::new(100.0, 2.5),
            },
            ProbePoint {
                name: "P2".into(),
                at_mm: Vec2::new(300.0, 2.5),
            },
        ],
        dt,
        t_end: 200e-6,
        evs: reference_variant(),
    }
}

/// Perforated waveguide: 600 mm × 5 mm plate on 480×4 elements with 13 full
/// circular cutouts on the midline (first at x = 152 mm, spacing 4 mm) and
/// 24 semicircular surface cutouts (12 top, 12 bottom, first at x = 154 mm),
/// all of radius 1 mm. Two opposed vertical burst forces on the left end
/// excite symmetric modes only.
pub fn perforated_waveguide() -> Scenario {
    perforated_waveguide_with_radius(1.0, 1e-9, "perforated-waveguide")
}

/// Perforated waveguide with the circular cutouts enlarged to radius
/// 1.75 mm (the semicircular ones stay at 1 mm). This produces critically
/// cut elements with volume fractions from 0.02% to 94.4% and 20 fully
/// fictitious elements.
pub fn perforated_waveguide_large_holes() -> Scenario {
    perforated_waveguide_with_radius(1.75, 2e-10, "perforated-waveguide-large-holes")
}

/// The catalog of ready-made benchmark scenarios.
pub fn builtin_scenarios() -> Vec<Scenario> {
    vec![
        single_cut_element(),
        plate_with_hole(),
        rectangular_waveguide(),
        perforated_waveguide(),
        perforated_waveguide_large_holes(),
    ]
}

/// Look up a builtin scenario by name.
pub fn builtin(name: &str) -> Option<Scenario> {
    builtin_scenarios().into_iter().find(|s| s.name == name)
}
