//! VTK legacy and CSV writers.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use raftfem::{DiagnosticsRecord, SurfaceMesh};
use serde::Serialize;

use crate::error::CliError;

/// Legacy ASCII VTK polydata text with one `SCALARS` block per field.
/// Coordinates and values carry 17 significant digits.
pub fn vtk_string(mesh: &SurfaceMesh, fields: &[(&str, &[f64])]) -> String {
    let mut s = String::new();
    s.push_str("# vtk DataFile Version 3.0\nraftfem surface fields\nASCII\nDATASET POLYDATA\n");
    let _ = writeln!(s, "POINTS {} double", mesh.num_vertices());
    for x in mesh.vertices() {
        let _ = writeln!(s, "{:.16e} {:.16e} {:.16e}", x[0], x[1], x[2]);
    }
    let _ = writeln!(
        s,
        "POLYGONS {} {}",
        mesh.num_triangles(),
        4 * mesh.num_triangles()
    );
    for t in mesh.triangles() {
        let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
    }
    if !fields.is_empty() {
        let _ = writeln!(s, "POINT_DATA {}", mesh.num_vertices());
        for (name, values) in fields {
            let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
            for v in *values {
                let _ = writeln!(s, "{v:.16e}");
            }
        }
    }
    s
}

pub fn write_vtk(
    mesh: &SurfaceMesh,
    fields: &[(&str, &[f64])],
    path: &Path,
) -> Result<(), CliError> {
    if let Some((name, _)) = fields.iter().find(|(_, v)| v.len() != mesh.num_vertices()) {
        return Err(CliError::Numerical(format!(
            "field {name} does not match the mesh"
        )));
    }
    fs::write(path, vtk_string(mesh, fields)).map_err(|e| CliError::io(path, e))
}

/// Header plus one row per serializable record.
pub fn write_csv<T: Serialize>(rows: &[T], header: &[&str], path: &Path) -> Result<(), CliError> {
    let io = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(e) => CliError::io(path, e),
        other => CliError::Numerical(format!("{}: {other:?}", path.display())),
    };
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(io)?;
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.serialize(r).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_diagnostics_csv(records: &[DiagnosticsRecord], path: &Path) -> Result<(), CliError> {
    write_csv(records, &DiagnosticsRecord::COLUMNS, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use raftfem::mesh::build_octahedral_sphere;

    fn octahedron() -> SurfaceMesh {
        build_octahedral_sphere(0).unwrap()
    }

    #[test]
    fn golden_octahedron_with_unit_field() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("oct.vtk");
        write_vtk(&octahedron(), &[("phi", &[1.0; 6])], &path).unwrap();
        let golden = include_bytes!("../tests/data/octahedron_phi_one.vtk");
        assert_eq!(fs::read(&path).unwrap(), golden);
    }

    #[test]
    fn geometry_only_file() {
        let text = vtk_string(&octahedron(), &[]);
        assert!(!text.contains("POINT_DATA"));
        assert!(text.ends_with("\n"));
    }

    #[test]
    fn points_round_trip() {
        let mesh = raftfem::build_refined_sphere(2).unwrap();
        let text = vtk_string(&mesh, &[]);
        let points: Vec<[f64; 3]> = text
            .lines()
            .skip(5)
            .take(mesh.num_vertices())
            .map(|l| {
                let v: Vec<f64> = l.split(' ').map(|x| x.parse().unwrap()).collect();
                [v[0], v[1], v[2]]
            })
            .collect();
        assert_eq!(points, mesh.vertices());
    }

    #[test]
    fn mismatched_field_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let err = write_vtk(
            &octahedron(),
            &[("phi", &[1.0, 2.0])],
            &dir.path().join("x.vtk"),
        );
        assert!(err.is_err());
    }

    #[test]
    fn diagnostics_csv_header_and_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        write_diagnostics_csv(&[], &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.trim_end(), DiagnosticsRecord::COLUMNS.join(","));
        let rec = DiagnosticsRecord {
            step: 1,
            t: 0.1,
            tau: 1e-3,
            int_phi: -6.283185307179586,
            int_v: 3.0,
            u: 2.5,
            energy_surface: 1.0,
            energy_bulk: 2.0,
            energy_total: 3.0,
            max_rate: 0.5,
            solver_iterations: 0,
            solver_residual: 1e-14,
        };
        write_diagnostics_csv(&[rec, rec], &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines
            .iter()
            .all(|l| l.split(',').count() == DiagnosticsRecord::COLUMNS.len()));
        assert!(lines[1].contains("-6.283185307179586"));
    }

    #[test]
    fn unwritable_path_reports_io() {
        let err = write_vtk(&octahedron(), &[], Path::new("/nonexistent/dir/x.vtk")).unwrap_err();
        assert!(matches!(err, CliError::Io { .. }));
    }
}
