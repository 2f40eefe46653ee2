//! Quickhull in `D ≤ 8` dimensions with simplicial facets.
//!
//! Facets are `(D−1)`-simplices stored as sorted input-point indices; facet
//! adjacency is tracked through a map from ridges (facet minus one vertex)
//! to the two facets sharing them. Orientation is fixed against a point
//! strictly inside the initial simplex.

use std::collections::{HashMap, VecDeque};

use super::{ConvexHull, Facet, HullError, MAX_HULL_DIM};
use crate::linalg::determinant;

const PLANE_TOLERANCE: f64 = 1e-9;

struct WorkFacet {
    vertices: Vec<usize>,
    normal: Vec<f64>,
    offset: f64,
    outside: Vec<usize>,
    alive: bool,
}

impl WorkFacet {
    #[inline]
    fn distance(&self, p: &[f64]) -> f64 {
        self.normal.iter().zip(p).map(|(a, b)| a * b).sum::<f64>() - self.offset
    }
}

/// Unit normal and offset of the hyperplane through `verts`, oriented so that
/// `interior` lies on the negative side. `None` when the points are
/// affinely dependent.
fn oriented_plane(points: &[Vec<f64>], verts: &[usize], interior: &[f64]) -> Option<(Vec<f64>, f64)> {
    let d = interior.len();
    let base = &points[verts[0]];
    let edges: Vec<Vec<f64>> = verts[1..]
        .iter()
        .map(|&v| points[v].iter().zip(base).map(|(a, b)| a - b).collect())
        .collect();
    // Generalised cross product: cofactors of the (D−1)×D edge matrix.
    let mut normal: Vec<f64> = (0..d)
        .map(|k| {
            let minor: Vec<Vec<f64>> = edges
                .iter()
                .map(|e| e.iter().enumerate().filter(|&(c, _)| c != k).map(|(_, &v)| v).collect())
                .collect();
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            sign * if minor.is_empty() { 1.0 } else { determinant(minor) }
        })
        .collect();
    let norm = normal.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm > f64::MIN_POSITIVE) {
        return None;
    }
    normal.iter_mut().for_each(|v| *v /= norm);
    let mut offset: f64 = normal.iter().zip(base).map(|(a, b)| a * b).sum();
    let side: f64 = normal.iter().zip(interior).map(|(a, b)| a * b).sum::<f64>() - offset;
    if side.abs() <= 1e-14 {
        return None;
    }
    if side > 0.0 {
        normal.iter_mut().for_each(|v| *v = -*v);
        offset = -offset;
    }
    Some((normal, offset))
}

fn ridges(vertices: &[usize]) -> impl Iterator<Item = Vec<usize>> + '_ {
    (0..vertices.len()).map(move |skip| {
        vertices
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != skip)
            .map(|(_, &v)| v)
            .collect()
    })
}

/// Picks `D + 1` affinely independent points, greedily maximising the
/// distance to the affine hull of those already chosen.
fn initial_simplex(points: &[Vec<f64>], dim: usize, eps: f64) -> Result<Vec<usize>, HullError> {
    let n = points.len();
    let mut best = (0usize, 0usize, -1.0_f64);
    for axis in 0..dim {
        let (mut lo, mut hi) = (0usize, 0usize);
        for i in 1..n {
            if points[i][axis] < points[lo][axis] {
                lo = i;
            }
            if points[i][axis] > points[hi][axis] {
                hi = i;
            }
        }
        let extent = points[hi][axis] - points[lo][axis];
        if extent > best.2 {
            best = (lo, hi, extent);
        }
    }
    if !(best.2 > eps) {
        return Err(HullError::DegenerateInput { rank: 0, dim });
    }
    let mut chosen = vec![best.0.min(best.1), best.0.max(best.1)];
    let origin = points[chosen[0]].clone();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let push_basis = |basis: &mut Vec<Vec<f64>>, p: &[f64]| {
        let mut r: Vec<f64> = p.iter().zip(&origin).map(|(a, b)| a - b).collect();
        for b in basis.iter() {
            let dot: f64 = r.iter().zip(b).map(|(x, y)| x * y).sum();
            r.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
        }
        let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        r.iter_mut().for_each(|v| *v /= norm);
        basis.push(r);
    };
    push_basis(&mut basis, &points[chosen[1]]);
    while chosen.len() < dim + 1 {
        let mut far = (usize::MAX, -1.0_f64);
        for (i, p) in points.iter().enumerate() {
            let mut r: Vec<f64> = p.iter().zip(&origin).map(|(a, b)| a - b).collect();
            for b in &basis {
                let dot: f64 = r.iter().zip(b).map(|(x, y)| x * y).sum();
                r.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
            }
            let dist = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            if dist > far.1 {
                far = (i, dist);
            }
        }
        if !(far.1 > eps) {
            return Err(HullError::DegenerateInput {
                rank: chosen.len() - 1,
                dim,
            });
        }
        chosen.push(far.0);
        push_basis(&mut basis, &points[far.0]);
    }
    Ok(chosen)
}

fn hull_1d(points: &[Vec<f64>], eps: f64) -> Result<ConvexHull, HullError> {
    let (mut lo, mut hi) = (0usize, 0usize);
    for (i, p) in points.iter().enumerate() {
        if p[0] < points[lo][0] {
            lo = i;
        }
        if p[0] > points[hi][0] {
            hi = i;
        }
    }
    if !(points[hi][0] - points[lo][0] > eps) {
        return Err(HullError::DegenerateInput { rank: 0, dim: 1 });
    }
    let (a, b) = (lo.min(hi), lo.max(hi));
    let facet = |idx: usize, src: usize| {
        let sign = if src == hi { 1.0 } else { -1.0 };
        Facet {
            vertices: vec![idx],
            normal: vec![sign],
            offset: sign * points[src][0],
        }
    };
    Ok(ConvexHull {
        dim: 1,
        vertices: vec![points[a].clone(), points[b].clone()],
        source_indices: vec![a, b],
        facets: vec![facet(0, a), facet(1, b)],
    })
}

/// Convex hull of `points` (each of length `D`).
pub fn convex_hull(points: &[Vec<f64>]) -> Result<ConvexHull, HullError> {
    let dim = points.first().ok_or(HullError::Empty)?.len();
    if dim == 0 {
        return Err(HullError::Empty);
    }
    if dim > MAX_HULL_DIM {
        return Err(HullError::DimensionTooHigh { dim, max: MAX_HULL_DIM });
    }
    if let Some((index, p)) = points.iter().enumerate().find(|(_, p)| p.len() != dim) {
        return Err(HullError::DimensionMismatch {
            index,
            expected: dim,
            actual: p.len(),
        });
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(HullError::NonFinite);
    }
    let extent = points
        .iter()
        .flatten()
        .fold(1.0_f64, |m, v| m.max(v.abs()));
    let eps = PLANE_TOLERANCE * extent;
    if dim == 1 {
        return hull_1d(points, eps);
    }

    let simplex = initial_simplex(points, dim, eps)?;
    let interior: Vec<f64> = (0..dim)
        .map(|k| simplex.iter().map(|&i| points[i][k]).sum::<f64>() / (dim + 1) as f64)
        .collect();

    let mut facets: Vec<WorkFacet> = Vec::new();
    let mut ridge_map: HashMap<Vec<usize>, [usize; 2]> = HashMap::new();
    const NONE: usize = usize::MAX;

    let add_facet = |facets: &mut Vec<WorkFacet>,
                         ridge_map: &mut HashMap<Vec<usize>, [usize; 2]>,
                         mut vertices: Vec<usize>|
     -> Result<usize, HullError> {
        vertices.sort_unstable();
        let (normal, offset) =
            oriented_plane(points, &vertices, &interior).ok_or(HullError::Numerical("degenerate facet"))?;
        let id = facets.len();
        for r in ridges(&vertices) {
            let slot = ridge_map.entry(r).or_insert([NONE, NONE]);
            if slot[0] == NONE {
                slot[0] = id;
            } else if slot[1] == NONE {
                slot[1] = id;
            } else {
                return Err(HullError::Numerical("ridge shared by more than two facets"));
            }
        }
        facets.push(WorkFacet {
            vertices,
            normal,
            offset,
            outside: Vec::new(),
            alive: true,
        });
        Ok(id)
    };

    for skip in 0..=dim {
        let verts: Vec<usize> = simplex
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != skip)
            .map(|(_, &v)| v)
            .collect();
        add_facet(&mut facets, &mut ridge_map, verts)?;
    }

    let mut in_simplex = vec![false; points.len()];
    simplex.iter().for_each(|&i| in_simplex[i] = true);
    for (i, p) in points.iter().enumerate() {
        if in_simplex[i] {
            continue;
        }
        if let Some(f) = facets.iter_mut().find(|f| f.distance(p) > eps) {
            f.outside.push(i);
        }
    }

    let mut queue: VecDeque<usize> = (0..facets.len()).filter(|&f| !facets[f].outside.is_empty()).collect();
    while let Some(fid) = queue.pop_front() {
        if !facets[fid].alive || facets[fid].outside.is_empty() {
            continue;
        }
        // Farthest outside point, ties to the lowest index.
        let apex = {
            let f = &facets[fid];
            let mut best = (usize::MAX, f64::NEG_INFINITY);
            for &i in &f.outside {
                let d = f.distance(&points[i]);
                if d > best.1 || (d == best.1 && i < best.0) {
                    best = (i, d);
                }
            }
            best.0
        };
        let p = &points[apex];

        // Visible region by flood fill across ridges.
        let mut visible = vec![fid];
        let mut is_visible: HashMap<usize, bool> = HashMap::from([(fid, true)]);
        let mut horizon: Vec<Vec<usize>> = Vec::new();
        let mut cursor = 0;
        while cursor < visible.len() {
            let v = visible[cursor];
            cursor += 1;
            let verts = facets[v].vertices.clone();
            for r in ridges(&verts) {
                let pair = ridge_map[&r];
                let other = if pair[0] == v { pair[1] } else { pair[0] };
                if other == NONE {
                    return Err(HullError::Numerical("open ridge"));
                }
                match is_visible.get(&other) {
                    Some(true) => {}
                    Some(false) => horizon.push(r),
                    None => {
                        let vis = facets[other].distance(p) > eps;
                        is_visible.insert(other, vis);
                        if vis {
                            visible.push(other);
                        } else {
                            horizon.push(r);
                        }
                    }
                }
            }
        }

        let mut orphans: Vec<usize> = Vec::new();
        for &v in &visible {
            let f = &mut facets[v];
            f.alive = false;
            orphans.append(&mut f.outside);
            let verts = f.vertices.clone();
            for r in ridges(&verts) {
                if let Some(slot) = ridge_map.get_mut(&r) {
                    if slot[0] == v {
                        slot[0] = slot[1];
                    }
                    slot[1] = NONE;
                    if slot[0] == NONE {
                        ridge_map.remove(&r);
                    }
                }
            }
        }

        let mut created = Vec::with_capacity(horizon.len());
        for r in horizon {
            let mut verts = r;
            verts.push(apex);
            created.push(add_facet(&mut facets, &mut ridge_map, verts)?);
        }

        orphans.sort_unstable();
        for i in orphans {
            if i == apex {
                continue;
            }
            if let Some(&f) = created.iter().find(|&&f| facets[f].distance(&points[i]) > eps) {
                facets[f].outside.push(i);
            }
        }
        queue.extend(created.into_iter().filter(|&f| !facets[f].outside.is_empty()));
    }

    let alive: Vec<&WorkFacet> = facets.iter().filter(|f| f.alive).collect();
    let mut source_indices: Vec<usize> = alive.iter().flat_map(|f| f.vertices.iter().copied()).collect();
    source_indices.sort_unstable();
    source_indices.dedup();
    let position: HashMap<usize, usize> = source_indices.iter().enumerate().map(|(k, &i)| (i, k)).collect();
    Ok(ConvexHull {
        dim,
        vertices: source_indices.iter().map(|&i| points[i].clone()).collect(),
        facets: alive
            .iter()
            .map(|f| Facet {
                vertices: f.vertices.iter().map(|i| position[i]).collect(),
                normal: f.normal.clone(),
                offset: f.offset,
            })
            .collect(),
        source_indices,
    })
}
