//! Quadtree-composed integration for cut elements: recursive quadrisection of
//! the reference square until subcells are either uniform (fully physical or
//! fully fictitious) or the maximum depth is reached, then tensor Gauss
//! quadrature on every leaf with the indicator function applied pointwise on
//! the remaining cut leaves.

use crate::geometry::{ImplicitDomain, IndicatorConfig, Membership, Rect, Vec2};
use crate::quadrature::rules::Rule1D;

/// Maximum supported subdivision depth.
pub const MAX_DEPTH: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CellStatus {
    /// Uniformly inside the physical domain.
    Physical,
    /// Uniformly inside the fictitious domain.
    Fictitious,
    /// Still crossed by the domain boundary at maximum depth.
    CutLeaf,
}

/// A leaf of the subdivision tree, in element reference coordinates
/// (ξ, η) ∈ [-1, 1]².
#[derive(Clone, Debug)]
pub struct QuadtreeCell {
    pub bbox: Rect,
    pub level: usize,
    pub status: CellStatus,
}

fn map_to_physical(element_bbox: &Rect, p: Vec2) -> Vec2 {
    let c = element_bbox.center();
    Vec2::new(
        c.x + 0.5 * element_bbox.width() * p.x,
        c.y + 0.5 * element_bbox.height() * p.y,
    )
}

fn physical_image(element_bbox: &Rect, ref_bbox: &Rect) -> Rect {
    let lo = map_to_physical(element_bbox, ref_bbox.min);
    let hi = map_to_physical(element_bbox, ref_bbox.max);
    Rect::new(lo, hi).expect("reference cell maps to a proper rectangle")
}

/// Recursively quadrisect the reference square of `element_bbox` to depth `k`.
/// A cell is subdivided iff the domain boundary passes through its interior
/// (a positive-measure cut); uniform cells become `Physical`/`Fictitious`
/// leaves immediately, and cells still cut at depth `k` become `CutLeaf`.
pub fn build_quadtree(domain: &ImplicitDomain, element_bbox: &Rect, k: usize) -> Vec<QuadtreeCell> {
    assert!(k <= MAX_DEPTH, "subdivision depth {k} exceeds {MAX_DEPTH}");
    let mut leaves = Vec::new();
    let root = Rect::new(Vec2::new(-1.0, -1.0), Vec2::new(1.0, 1.0)).unwrap();
    subdivide(domain, element_bbox, &root, 0, k, &mut leaves);
    leaves
}

fn subdivide(
    domain: &ImplicitDomain,
    element_bbox: &Rect,
    ref_bbox: &Rect,
    level: usize,
    k: usize,
    out: &mut Vec<QuadtreeCell>,
) {
    let phys = physical_image(element_bbox, ref_bbox);
    if domain.properly_crossed(&phys) {
        if level < k {
            let mid = ref_bbox.center();
            let quads = [
                Rect::new(ref_bbox.min, mid).unwrap(),
                Rect::new(Vec2::new(mid.x, ref_bbox.min.y), Vec2::new(ref_bbox.max.x, mid.y))
                    .unwrap(),
                Rect::new(Vec2::new(ref_bbox.min.x, mid.y), Vec2::new(mid.x, ref_bbox.max.y))
                    .unwrap(),
                Rect::new(mid, ref_bbox.max).unwrap(),
            ];
            for q in &quads {
                subdivide(domain, element_bbox, q, level + 1, k, out);
            }
        } else {
            out.push(QuadtreeCell {
                bbox: *ref_bbox,
                level,
                status: CellStatus::CutLeaf,
            });
        }
    } else {
        // No boundary through the interior: membership is constant almost
        // everywhere on the cell, so the center decides.
        let status = match domain.membership(phys.center()) {
            Membership::Physical => CellStatus::Physical,
            Membership::Fictitious => CellStatus::Fictitious,
        };
        out.push(QuadtreeCell {
            bbox: *ref_bbox,
            level,
            status,
        });
    }
}

/// One composed quadrature point in reference coordinates. `weight` already
/// includes the subcell Jacobian (Δξ·Δη)/4; the element's own geometric
/// Jacobian is applied by the caller.
#[derive(Clone, Copy, Debug)]
pub struct QuadPoint {
    pub xi: f64,
    pub eta: f64,
    pub weight: f64,
    pub alpha: f64,
}

/// Visit every quadrature point of the composed rule: a tensor product of
/// `rule` on each leaf, with the indicator evaluated pointwise on cut leaves
/// and held constant on uniform leaves.
pub fn for_each_quad_point<F: FnMut(QuadPoint)>(
    domain: &ImplicitDomain,
    cfg: IndicatorConfig,
    element_bbox: &Rect,
    leaves: &[QuadtreeCell],
    rule: &Rule1D,
    mut visit: F,
) {
    for cell in leaves {
        let det_js = 0.25 * cell.bbox.width() * cell.bbox.height();
        let c = cell.bbox.center();
        let hx = 0.5 * cell.bbox.width();
        let hy = 0.5 * cell.bbox.height();
        for (i, &ri) in rule.nodes.iter().enumerate() {
            let xi = c.x + hx * ri;
            for (j, &rj) in rule.nodes.iter().enumerate() {
                let eta = c.y + hy * rj;
                let alpha = match cell.status {
                    CellStatus::Physical => 1.0,
                    CellStatus::Fictitious => cfg.alpha0,
                    CellStatus::CutLeaf => {
                        domain.alpha(cfg, map_to_physical(element_bbox, Vec2::new(xi, eta)))
                    }
                };
                visit(QuadPoint {
                    xi,
                    eta,
                    weight: rule.weights[i] * rule.weights[j] * det_js,
                    alpha,
                });
            }
        }
    }
}

/// Composed integral of `f(ξ, η, α)` over the reference square.
pub fn composed_integral<F: FnMut(f64, f64, f64) -> f64>(
    domain: &ImplicitDomain,
    cfg: IndicatorConfig,
    element_bbox: &Rect,
    leaves: &[QuadtreeCell],
    rule: &Rule1D,
    mut f: F,
) -> f64 {
    let mut sum = 0.0;
    for_each_quad_point(domain, cfg, element_bbox, leaves, rule, |q| {
        sum += f(q.xi, q.eta, q.alpha) * q.weight;
    });
    sum
}

/// Plain tensor-product quadrature of `f(ξ, η)` over the reference square
/// (uncut elements bypass the tree).
pub fn tensor_integral<F: FnMut(f64, f64) -> f64>(rule: &Rule1D, mut f: F) -> f64 {
    let mut sum = 0.0;
    for (i, &xi) in rule.nodes.iter().enumerate() {
        for (j, &eta) in rule.nodes.iter().enumerate() {
            sum += f(xi, eta) * rule.weights[i] * rule.weights[j];
        }
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{CircleSense, Primitive};
    use crate::quadrature::rules::gauss_rule;

    /// Unit element cut by a circular void of radius 1.2 centered at its
    /// lower-left corner; physical fraction 4.9%.
    fn corner_circle_domain() -> (ImplicitDomain, Rect) {
        let extent = Rect::new(Vec2::new(0.0, 0.0), Vec2::new(1.0, 1.0)).unwrap();
        let domain = ImplicitDomain::new(
            extent,
            vec![Primitive::Circle {
                center: Vec2::new(0.0, 0.0),
                radius: 1.2,
                sense: CircleSense::Void,
            }],
        );
        (domain, extent)
    }

    fn half_cut_domain() -> (ImplicitDomain, Rect) {
        let extent = Rect::new(Vec2::new(0.0, 0.0), Vec2::new(1.0, 1.0)).unwrap();
        let domain = ImplicitDomain::new(
            extent,
            vec![Primitive::HalfPlane {
                normal: Vec2::new(1.0, 0.0),
                offset: 0.5,
            }],
        );
        (domain, extent)
    }

    #[test]
    fn depth_zero_cut_element_is_single_cut_leaf() {
        let (domain, bbox) = corner_circle_domain();
        let leaves = build_quadtree(&domain, &bbox, 0);
        assert_eq!(leaves.len(), 1);
        assert_eq!(leaves[0].status, CellStatus::CutLeaf);
        assert_eq!(leaves[0].level, 0);
        assert_eq!(leaves[0].bbox.area(), 4.0);
    }

    #[test]
    fn aligned_cut_resolves_in_one_level() {
        let (domain, bbox) = half_cut_domain();
        let leaves = build_quadtree(&domain, &bbox, 1);
        assert_eq!(leaves.len(), 4);
        let phys = leaves.iter().filter(|c| c.status == CellStatus::Physical).count();
        let fict = leaves.iter().filter(|c| c.status == CellStatus::Fictitious).count();
        let cut = leaves.iter().filter(|c| c.status == CellStatus::CutLeaf).count();
        assert_eq!((phys, fict, cut), (2, 2, 0));
    }

    #[test]
    fn leaf_areas_partition_reference_square_exactly() {
        let (domain, bbox) = corner_circle_domain();
        for k in [0, 1, 3, 5, 7] {
            let leaves = build_quadtree(&domain, &bbox, k);
            let total: f64 = leaves.iter().map(|c| c.bbox.area()).sum();
            assert_eq!(total, 4.0, "depth {k}");
        }
    }

    #[test]
    fn cut_leaf_count_doubles_per_level() {
        let (domain, bbox) = corner_circle_domain();
        let count = |k: usize| {
            build_quadtree(&domain, &bbox, k)
                .iter()
                .filter(|c| c.status == CellStatus::CutLeaf)
                .count() as f64
        };
        let ratio = (count(5) / count(3)).sqrt();
        assert!(
            (1.8..=2.2).contains(&ratio),
            "cut-leaf growth per level {ratio}"
        );
    }

    #[test]
    fn constant_integrand_full_element() {
        let extent = Rect::new(Vec2::new(0.0, 0.0), Vec2::new(1.0, 1.0)).unwrap();
        let domain = ImplicitDomain::solid(extent);
        let cfg = IndicatorConfig::new(0.0).unwrap();
        let leaves = build_quadtree(&domain, &extent, 0);
        let rule = gauss_rule(2).unwrap();
        let val = composed_integral(&domain, cfg, &extent, &leaves, &rule, |_, _, _| 1.0);
        assert!((val - 4.0).abs() < 1e-14);
    }

    #[test]
    fn aligned_half_area_exact() {
        let (domain, bbox) = half_cut_domain();
        let cfg = IndicatorConfig::new(0.0).unwrap();
        let rule = gauss_rule(1).unwrap();
        for k in [1, 2, 4] {
            let leaves = build_quadtree(&domain, &bbox, k);
            let val = composed_integral(&domain, cfg, &bbox, &leaves, &rule, |_, _, a| a);
            assert_eq!(val, 2.0, "depth {k}");
        }
        let rule3 = gauss_rule(3).unwrap();
        let leaves = build_quadtree(&domain, &bbox, 2);
        let val = composed_integral(&domain, cfg, &bbox, &leaves, &rule3, |_, _, a| a);
        assert!((val - 2.0).abs() < 1e-13);
    }

    #[test]
    fn corner_circle_physical_fraction() {
        // Physical fraction of the unit element outside the r = 1.2 corner
        // circle, area computed analytically: 1 - (pi/4 - 2 asin-terms).
        let chi = 0.049_088_869_214_891_846;
        let (domain, bbox) = corner_circle_domain();
        let cfg = IndicatorConfig::new(0.0).unwrap();
        let leaves = build_quadtree(&domain, &bbox, 8);
        let rule = gauss_rule(3).unwrap();
        let val = composed_integral(&domain, cfg, &bbox, &leaves, &rule, |_, _, a| a);
        let want = 4.0 * chi;
        assert!(
            ((val - want) / want).abs() < 1e-3,
            "composed physical area {val} vs {want}"
        );
    }

    #[test]
    fn composed_matches_tensor_when_alpha_ignored() {
        // Polynomial integrand independent of alpha: the composed rule over
        // any leaf partition must agree with the plain tensor rule.
        let (domain, bbox) = corner_circle_domain();
        let cfg = IndicatorConfig::new(0.0).unwrap();
        let rule = gauss_rule(4).unwrap();
        let f = |x: f64, y: f64| 1.0 + x * y + x * x * y - y * y * x * x;
        let tensor = tensor_integral(&rule, f);
        for k in [1, 3] {
            let leaves = build_quadtree(&domain, &bbox, k);
            let composed =
                composed_integral(&domain, cfg, &bbox, &leaves, &rule, |x, y, _| f(x, y));
            assert!(
                (composed - tensor).abs() < 1e-12,
                "depth {k}: {composed} vs {tensor}"
            );
        }
    }

    #[test]
    fn refinement_converges_monotonically_for_smooth_integrand() {
        // For a smooth integrand the composed rule is a composite Gauss
        // quadrature; successive refinements shrink only boundary cells, so
        // the increment between consecutive depths decays geometrically.
        let (domain, bbox) = corner_circle_domain();
        let cfg = IndicatorConfig::new(0.0).unwrap();
        let rule = gauss_rule(2).unwrap();
        let integral = |k: usize| {
            let leaves = build_quadtree(&domain, &bbox, k);
            composed_integral(&domain, cfg, &bbox, &leaves, &rule, |x, y, _| {
                (0.3 * x + 0.4 * y).exp()
            })
        };
        let vals: Vec<f64> = (2..=8).map(integral).collect();
        let diffs: Vec<f64> = vals.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
        for d in diffs.windows(2) {
            assert!(d[1] < d[0], "refinement increments not decreasing: {diffs:?}");
        }
    }

    #[test]
    fn uniform_fictitious_leaves_use_constant_alpha() {
        let (domain, bbox) = half_cut_domain();
        let cfg = IndicatorConfig::new(1e-5).unwrap();
        let leaves = build_quadtree(&domain, &bbox, 1);
        let rule = gauss_rule(1).unwrap();
        let val = composed_integral(&domain, cfg, &bbox, &leaves, &rule, |_, _, a| a);
        // Half at alpha = 1, half at alpha = 1e-5.
        assert!((val - (2.0 + 2e-5)).abs() < 1e-15);
    }
}

