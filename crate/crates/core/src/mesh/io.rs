//! `tri-mesh v1` ASCII format.
//!
//! ```text
//! tri-mesh v1
//! nodes N
//! <id> <x> <y>
//! elements M
//! <id> <n0> <n1> <n2> <region_tag>
//! bedges K
//! <id> <n0> <n1> <boundary_tag>
//! periodic P          # optional
//! <slave_id> <master_id>
//! ```
//!
//! Ids are zero-based and must appear in order. Floats are written in the
//! shortest representation that round-trips.

use std::fmt::Write as _;
use std::path::Path;

use super::{BoundaryEdge, PeriodicPair, TriMesh};
use crate::error::{Error, Result};

pub fn format_mesh(mesh: &TriMesh) -> String {
    let mut s = String::new();
    s.push_str("tri-mesh v1\n");
    let _ = writeln!(s, "nodes {}", mesh.nodes.len());
    for (i, p) in mesh.nodes.iter().enumerate() {
        let _ = writeln!(s, "{i} {:e} {:e}", p[0], p[1]);
    }
    let _ = writeln!(s, "elements {}", mesh.triangles.len());
    for (i, (t, r)) in mesh.triangles.iter().zip(&mesh.regions).enumerate() {
        let _ = writeln!(s, "{i} {} {} {} {r}", t[0], t[1], t[2]);
    }
    let _ = writeln!(s, "bedges {}", mesh.boundary_edges.len());
    for (i, e) in mesh.boundary_edges.iter().enumerate() {
        let _ = writeln!(s, "{i} {} {} {}", e.nodes[0], e.nodes[1], e.tag);
    }
    if !mesh.periodic.is_empty() {
        let _ = writeln!(s, "periodic {}", mesh.periodic.len());
        for p in &mesh.periodic {
            let _ = writeln!(s, "{} {}", p.slave, p.master);
        }
    }
    s
}

pub fn write_mesh(mesh: &TriMesh, path: &Path) -> Result<()> {
    std::fs::write(path, format_mesh(mesh)).map_err(|e| Error::io(path, e))
}

pub fn read_mesh(path: &Path) -> Result<TriMesh> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_mesh(&text)
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next_tokens(&mut self) -> Option<Vec<&'a str>> {
        for (i, raw) in self.inner.by_ref() {
            let content = raw.split('#').next().unwrap_or("");
            let tokens: Vec<&str> = content.split_whitespace().collect();
            if !tokens.is_empty() {
                self.line = i + 1;
                return Some(tokens);
            }
        }
        None
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Mesh(format!("line {}: {}", self.line, msg.into()))
    }

    fn section(&mut self, name: &str) -> Result<usize> {
        let tokens = self.next_tokens().ok_or_else(|| self.err(format!("missing `{name}` section")))?;
        self.section_from(&tokens, name)
    }

    fn section_from(&self, tokens: &[&str], name: &str) -> Result<usize> {
        match tokens {
            [head, n] if *head == name => n.parse().map_err(|_| self.err("bad count")),
            _ => Err(self.err(format!("expected `{name} <count>`"))),
        }
    }

    fn record(&mut self, expected_len: usize, id: Option<usize>) -> Result<Vec<&'a str>> {
        let tokens = self.next_tokens().ok_or_else(|| self.err("unexpected end of file"))?;
        if tokens.len() != expected_len {
            return Err(self.err(format!("expected {expected_len} fields, got {}", tokens.len())));
        }
        if let Some(id) = id {
            if tokens[0].parse::<usize>().ok() != Some(id) {
                return Err(self.err(format!("expected id {id}")));
            }
        }
        Ok(tokens)
    }
}

fn num<T: std::str::FromStr>(lines: &Lines<'_>, s: &str) -> Result<T> {
    s.parse().map_err(|_| lines.err(format!("cannot parse `{s}`")))
}

pub fn parse_mesh(text: &str) -> Result<TriMesh> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        line: 0,
    };
    match lines.next_tokens().as_deref() {
        Some(["tri-mesh", "v1"]) => {}
        _ => return Err(lines.err("missing `tri-mesh v1` header")),
    }
    let mut mesh = TriMesh::default();

    let n = lines.section("nodes")?;
    for i in 0..n {
        let t = lines.record(3, Some(i))?;
        mesh.nodes.push([num(&lines, t[1])?, num(&lines, t[2])?]);
    }
    let m = lines.section("elements")?;
    for i in 0..m {
        let t = lines.record(5, Some(i))?;
        let tri = [num(&lines, t[1])?, num(&lines, t[2])?, num(&lines, t[3])?];
        if tri.iter().any(|&v: &usize| v >= n) {
            return Err(lines.err("node index out of range"));
        }
        mesh.triangles.push(tri);
        mesh.regions.push(t[4].parse().map_err(|e: String| lines.err(e))?);
    }
    let k = lines.section("bedges")?;
    for i in 0..k {
        let t = lines.record(4, Some(i))?;
        mesh.boundary_edges.push(BoundaryEdge {
            nodes: [num(&lines, t[1])?, num(&lines, t[2])?],
            tag: t[3].parse().map_err(|e: String| lines.err(e))?,
        });
    }
    if let Some(tokens) = lines.next_tokens() {
        let p = lines.section_from(&tokens, "periodic")?;
        for _ in 0..p {
            let t = lines.record(2, None)?;
            mesh.periodic.push(PeriodicPair {
                slave: num(&lines, t[0])?,
                master: num(&lines, t[1])?,
            });
        }
        if lines.next_tokens().is_some() {
            return Err(lines.err("trailing content"));
        }
    }
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_cell_mesh, build_macro_mesh, SmcGeometry};

    #[test]
    fn text_format_round_trips_exactly() {
        let geom = SmcGeometry::desk();
        for mesh in [build_cell_mesh(&geom, 1).unwrap(), build_macro_mesh(&geom, 2).unwrap()] {
            let text = format_mesh(&mesh);
            let back = parse_mesh(&text).unwrap();
            assert_eq!(back, mesh);
            assert_eq!(format_mesh(&back), text);
        }
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let text = "# unit triangle\ntri-mesh v1\n\nnodes 3\n0 0 0\n1 1 0 # right\n2 0 1\nelements 1\n0 0 1 2 AIR\nbedges 3\n0 0 1 GAMMA_H\n1 1 2 GAMMA_INF\n2 2 0 GAMMA_V\n";
        let mesh = parse_mesh(text).unwrap();
        assert_eq!(mesh.n_triangles(), 1);
        mesh.validate().unwrap();
    }

    #[test]
    fn malformed_input_reports_line() {
        let text = "tri-mesh v1\nnodes 2\n0 0 0\n1 zero 0\n";
        let err = parse_mesh(text).unwrap_err().to_string();
        assert!(err.contains("line 4"), "{err}");
        assert!(parse_mesh("tri-mesh v2\n").is_err());
    }
}
