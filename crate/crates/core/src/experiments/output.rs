use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::fem::StructuredMesh;

/// Write `contents` to a sibling temporary file and rename it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Render a CSV table; numbers are formatted by the caller.
pub fn csv(header: &str, rows: impl IntoIterator<Item = String>) -> String {
    let mut s = String::from(header);
    s.push('\n');
    for r in rows {
        s.push_str(&r);
        s.push('\n');
    }
    s
}

/// Nodal scalar fields on a structured grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFields {
    pub nodes_per_side: usize,
    /// `(x, y)` per node, row-major.
    pub points: Vec<[f64; 2]>,
    pub scalars: Vec<(String, Vec<f64>)>,
}

impl GridFields {
    pub fn new(mesh: &StructuredMesh) -> Self {
        Self {
            nodes_per_side: mesh.nodes_per_side(),
            points: (0..mesh.num_nodes()).map(|k| mesh.node_coords(k)).collect(),
            scalars: Vec::new(),
        }
    }

    pub fn with(mut self, name: &str, values: &[f64]) -> Self {
        assert_eq!(values.len(), self.points.len(), "field {name} has the wrong length");
        self.scalars.push((name.to_string(), values.to_vec()));
        self
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.scalars.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    /// Legacy ASCII VTK structured grid. Values are written with shortest
    /// round-trip formatting.
    pub fn to_vtk(&self, title: &str) -> String {
        let n = self.points.len();
        let mut s = String::new();
        let _ = writeln!(s, "# vtk DataFile Version 3.0");
        let _ = writeln!(s, "{}", title.replace('\n', " "));
        let _ = writeln!(s, "ASCII");
        let _ = writeln!(s, "DATASET STRUCTURED_GRID");
        let _ = writeln!(s, "DIMENSIONS {0} {0} 1", self.nodes_per_side);
        let _ = writeln!(s, "POINTS {n} double");
        for p in &self.points {
            let _ = writeln!(s, "{:e} {:e} 0", p[0], p[1]);
        }
        let _ = writeln!(s, "POINT_DATA {n}");
        for (name, values) in &self.scalars {
            let _ = writeln!(s, "SCALARS {name} double 1");
            let _ = writeln!(s, "LOOKUP_TABLE default");
            for v in values {
                let _ = writeln!(s, "{v:e}");
            }
        }
        s
    }

    pub fn from_vtk(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::Config(format!("malformed VTK file: {m}"));
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let mut expect = |prefix: &str| -> Result<&str> {
            let l = lines.next().ok_or_else(|| bad("unexpected end of file"))?;
            if l.starts_with(prefix) {
                Ok(l)
            } else {
                Err(bad(&format!("expected `{prefix}`, found `{l}`")))
            }
        };
        expect("# vtk DataFile")?;
        // title: any line
        let _ = expect("")?;
        expect("ASCII")?;
        expect("DATASET STRUCTURED_GRID")?;
        let dims: Vec<usize> = expect("DIMENSIONS")?
            .split_whitespace()
            .skip(1)
            .map(|t| t.parse().map_err(|_| bad("DIMENSIONS")))
            .collect::<Result<_>>()?;
        if dims.len() != 3 || dims[0] != dims[1] || dims[2] != 1 {
            return Err(bad("expected square DIMENSIONS n n 1"));
        }
        let count = |l: &str| -> Result<usize> {
            l.split_whitespace()
                .nth(1)
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| bad(l))
        };
        let n = count(expect("POINTS")?)?;
        if n != dims[0] * dims[1] {
            return Err(bad("point count does not match DIMENSIONS"));
        }
        let num = |t: &str| t.parse::<f64>().map_err(|_| bad(&format!("bad number `{t}`")));
        let mut points = Vec::with_capacity(n);
        for _ in 0..n {
            let l = expect("")?;
            let xyz: Vec<f64> = l.split_whitespace().map(num).collect::<Result<_>>()?;
            if xyz.len() != 3 {
                return Err(bad("point needs three coordinates"));
            }
            points.push([xyz[0], xyz[1]]);
        }
        if count(expect("POINT_DATA")?)? != n {
            return Err(bad("POINT_DATA count"));
        }
        let mut scalars = Vec::new();
        while let Ok(header) = expect("SCALARS") {
            let name = header.split_whitespace().nth(1).ok_or_else(|| bad("SCALARS name"))?;
            expect("LOOKUP_TABLE")?;
            let values = (0..n).map(|_| expect("").and_then(num)).collect::<Result<Vec<_>>>()?;
            scalars.push((name.to_string(), values));
        }
        Ok(Self {
            nodes_per_side: dims[0],
            points,
            scalars,
        })
    }
}

pub fn read_vtk(path: &Path) -> Result<GridFields> {
    GridFields::from_vtk(&fs::read_to_string(path)?)
}

/// Files written by an experiment, in order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Artifacts {
    pub files: Vec<PathBuf>,
}

impl Artifacts {
    pub fn write(&mut self, dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
        let path = dir.join(name);
        write_atomic(&path, contents.as_bytes())?;
        self.files.push(path.clone());
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vtk_round_trip_is_exact() {
        let mesh = StructuredMesh::new(2).unwrap();
        let u: Vec<f64> = (0..mesh.num_nodes()).map(|k| (k as f64).sin() * 1e-7 + 1.0 / 3.0).collect();
        let lam: Vec<f64> = (0..mesh.num_nodes()).map(|k| -(k as f64) * 0.1).collect();
        let fields = GridFields::new(&mesh).with("u", &u).with("lambda", &lam);
        let back = GridFields::from_vtk(&fields.to_vtk("test")).unwrap();
        assert_eq!(back, fields);
        assert_eq!(back.get("u").unwrap(), u.as_slice());
    }

    #[test]
    fn malformed_vtk_is_rejected() {
        assert!(GridFields::from_vtk("# vtk DataFile Version 3.0\nt\nBINARY\n").is_err());
        assert!(GridFields::from_vtk("").is_err());
    }

    #[test]
    fn atomic_write_replaces_contents() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub").join("a.csv");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "two");
        let leftovers: Vec<_> = fs::read_dir(p.parent().unwrap()).unwrap().collect();
        assert_eq!(leftovers.len(), 1);
    }
}
