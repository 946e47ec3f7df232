//! Connected components of superlevel sets of nodal fields.

use crate::fem::{FemError, FemSpace, NodalField};

#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    /// Lumped-mass area of the member vertices.
    pub area: f64,
    pub vertices: Vec<usize>,
}

/// Components of `{field > threshold}` in the vertex-edge graph, sorted by
/// decreasing area.
pub fn connected_components(
    field: &NodalField,
    threshold: f64,
    space: &FemSpace,
) -> Result<Vec<Component>, FemError> {
    field.check(&space.mesh)?;
    let n = space.num_vertices();
    let inside: Vec<bool> = field.values().iter().map(|&x| x > threshold).collect();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for &[a, b] in space.mesh.edges() {
        if inside[a] && inside[b] {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
    }
    let mut by_root: std::collections::BTreeMap<usize, Component> = Default::default();
    for i in (0..n).filter(|&i| inside[i]) {
        let r = find(&mut parent, i);
        let c = by_root.entry(r).or_insert_with(|| Component {
            area: 0.0,
            vertices: Vec::new(),
        });
        c.area += space.lumped[i];
        c.vertices.push(i);
    }
    let mut out: Vec<Component> = by_root.into_values().collect();
    out.sort_by(|a, b| {
        b.area
            .total_cmp(&a.area)
            .then(a.vertices[0].cmp(&b.vertices[0]))
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_refined_sphere;

    fn space() -> FemSpace {
        FemSpace::new(build_refined_sphere(3).unwrap())
    }

    #[test]
    fn empty_and_full() {
        let s = space();
        let lo = NodalField::constant(&s.mesh, -1.0);
        assert!(connected_components(&lo, 0.0, &s).unwrap().is_empty());
        let hi = NodalField::constant(&s.mesh, 1.0);
        let c = connected_components(&hi, 0.0, &s).unwrap();
        assert_eq!(c.len(), 1);
        assert!((c[0].area - s.area()).abs() < 1e-12);
    }

    #[test]
    fn two_polar_caps() {
        let s = space();
        let f: Vec<f64> = s.mesh.vertices().iter().map(|x| x[2].abs() - 0.7).collect();
        let f = NodalField::new(&s.mesh, f).unwrap();
        let c = connected_components(&f, 0.0, &s).unwrap();
        assert_eq!(c.len(), 2);
        assert!((c[0].area - c[1].area).abs() < 1e-10);
        let band = connected_components(
            &NodalField::new(&s.mesh, f.values().iter().map(|x| -x).collect()).unwrap(),
            0.0,
            &s,
        )
        .unwrap();
        assert_eq!(band.len(), 1);
    }

    #[test]
    fn rejects_foreign_field() {
        let s = space();
        let other = build_refined_sphere(3).unwrap();
        let f = NodalField::constant(&other, 1.0);
        assert!(connected_components(&f, 0.0, &s).is_err());
    }
}
