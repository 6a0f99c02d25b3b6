//! File formats: CSV with shortest round-trip numbers, pretty JSON and legacy VTK.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::diagnostics::DiagnosticsRecord;
use crate::dynamics::{DirectorWalls, SystemState};
use crate::grid::{Field, MeridianGrid};
use crate::state::{DirectorState, FlowState, Representation};

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("{path}: line {line}: {message}")]
    Format { path: String, line: usize, message: String },
}

/// Shortest decimal that parses back to the same value.
pub fn num(v: f64) -> String {
    if v == 0.0 {
        // keep the sign of negative zero out of the files
        return "0".into();
    }
    let s = format!("{v:?}");
    s.strip_suffix(".0").map(str::to_owned).unwrap_or(s)
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), OutputError> {
    let io = |source| OutputError::Io {
        path: path.display().to_string(),
        source,
    };
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io)?;
    }
    fs::write(path, contents).map_err(io)
}

pub fn read_file(path: &Path) -> Result<String, OutputError> {
    fs::read_to_string(path).map_err(|source| OutputError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report types serialize") + "\n"
}

pub const DIAGNOSTICS_HEADER: &str = "time,E_kin,E_el,E_pen,D_visc,D_tension,max_d,Lambda_t";

pub fn diagnostics_csv(records: &[DiagnosticsRecord]) -> String {
    let mut s = String::from(DIAGNOSTICS_HEADER);
    s.push('\n');
    for r in records {
        let row = [r.time, r.e_kin, r.e_el, r.e_pen, r.d_visc, r.d_tension, r.max_d, r.lambda_t];
        s.push_str(&row.iter().map(|v| num(*v)).collect::<Vec<_>>().join(","));
        s.push('\n');
    }
    s
}

/// Inverse of [`diagnostics_csv`].
pub fn parse_diagnostics_csv(text: &str, path: &str) -> Result<Vec<DiagnosticsRecord>, OutputError> {
    let err = |line: usize, message: String| OutputError::Format {
        path: path.into(),
        line,
        message,
    };
    let mut lines = text.lines();
    if lines.next() != Some(DIAGNOSTICS_HEADER) {
        return Err(err(1, format!("expected header {DIAGNOSTICS_HEADER}")));
    }
    let mut out = Vec::new();
    for (n, line) in lines.enumerate() {
        let v = line
            .split(',')
            .map(|x| x.parse::<f64>().map_err(|e| err(n + 2, e.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        if v.len() != 8 {
            return Err(err(n + 2, format!("expected 8 columns, got {}", v.len())));
        }
        out.push(DiagnosticsRecord {
            time: v[0],
            e_kin: v[1],
            e_el: v[2],
            e_pen: v[3],
            d_visc: v[4],
            d_tension: v[5],
            max_d: v[6],
            lambda_t: v[7],
        });
    }
    Ok(out)
}

pub const STATE_HEADER: &str = "r,z,psi,omega,u_r,u_z,d_r,d_z,phi";

/// Cell values of a state with columns [`STATE_HEADER`]; `phi` is empty in GL mode.
pub fn state_csv(state: &SystemState, grid: &MeridianGrid) -> String {
    let mut s = format!("# time={} repr={}\n", num(state.time), repr_name(state.director.repr));
    if state.director.repr == Representation::Sphere {
        let b: Vec<String> = state.director.axis_branch.iter().map(|v| num(*v)).collect();
        let _ = writeln!(s, "# axis_branch={}", b.join(" "));
    }
    s.push_str(STATE_HEADER);
    s.push('\n');
    let f = &state.flow;
    let d = &state.director;
    for j in 0..grid.n_z {
        for i in 0..grid.n_r {
            let k = grid.idx(i, j);
            let phi = d.phi.as_ref().map(|p| num(p.data[k])).unwrap_or_default();
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                num(grid.r(i)),
                num(grid.z(j)),
                num(f.psi.data[k]),
                num(f.omega.data[k]),
                num(f.u_r.data[k]),
                num(f.u_z.data[k]),
                num(d.d_r.data[k]),
                num(d.d_z.data[k]),
                phi
            );
        }
    }
    s
}

fn repr_name(r: Representation) -> &'static str {
    match r {
        Representation::Gl => "gl",
        Representation::Sphere => "sphere",
    }
}

/// Inverse of [`state_csv`].
pub fn parse_state_csv(text: &str, grid: &MeridianGrid, path: &str) -> Result<SystemState, OutputError> {
    let err = |line: usize, message: String| OutputError::Format {
        path: path.into(),
        line,
        message,
    };
    let mut time = None;
    let mut repr = None;
    let mut branch = None;
    let mut cols: Vec<Vec<f64>> = vec![Vec::with_capacity(grid.len()); 7];
    let mut phi = Vec::with_capacity(grid.len());
    let mut header = false;
    for (n, line) in text.lines().enumerate() {
        let ln = n + 1;
        if let Some(meta) = line.strip_prefix("# ") {
            for part in meta.split(' ') {
                if let Some(v) = part.strip_prefix("time=") {
                    time = Some(v.parse::<f64>().map_err(|e| err(ln, e.to_string()))?);
                } else if let Some(v) = part.strip_prefix("repr=") {
                    repr = Some(match v {
                        "gl" => Representation::Gl,
                        "sphere" => Representation::Sphere,
                        o => return Err(err(ln, format!("unknown representation {o}"))),
                    });
                }
            }
            if let Some(v) = meta.strip_prefix("axis_branch=") {
                branch = Some(v.split(' ').map(|x| x.parse::<f64>().map_err(|e| err(ln, e.to_string()))).collect::<Result<Vec<_>, _>>()?);
            }
            continue;
        }
        if !header {
            if line != STATE_HEADER {
                return Err(err(ln, format!("expected header {STATE_HEADER}")));
            }
            header = true;
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 9 {
            return Err(err(ln, format!("expected 9 columns, got {}", parts.len())));
        }
        for (c, p) in parts[2..8].iter().enumerate() {
            cols[c].push(p.parse::<f64>().map_err(|e| err(ln, e.to_string()))?);
        }
        if !parts[8].is_empty() {
            phi.push(parts[8].parse::<f64>().map_err(|e| err(ln, e.to_string()))?);
        }
    }
    if cols[0].len() != grid.len() {
        return Err(err(0, format!("expected {} cells, got {}", grid.len(), cols[0].len())));
    }
    let field = |v: Vec<f64>| Field::from_vec(grid, v).expect("length checked");
    let mut it = cols.into_iter();
    let mut next = || field(it.next().expect("seven columns"));
    let flow = FlowState {
        psi: next(),
        omega: next(),
        u_r: next(),
        u_z: next(),
    };
    let (d_r, d_z) = (next(), next());
    let director = match repr.ok_or_else(|| err(0, "missing repr".into()))? {
        Representation::Gl => DirectorState::gl(d_r, d_z),
        Representation::Sphere => {
            if phi.len() != grid.len() {
                return Err(err(0, "sphere state needs phi in every row".into()));
            }
            let b = branch.ok_or_else(|| err(0, "missing axis_branch".into()))?;
            DirectorState::sphere(field(phi), b).map_err(|e| err(0, e.to_string()))?
        }
    };
    Ok(SystemState {
        flow,
        director,
        time: time.ok_or_else(|| err(0, "missing time".into()))?,
    })
}

fn vtk_header(title: &str, grid: &MeridianGrid) -> String {
    format!(
        "# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET STRUCTURED_POINTS\nDIMENSIONS {} {} 1\nORIGIN {} {} 0\nSPACING {} {} 1\nPOINT_DATA {}\n",
        grid.n_r,
        grid.n_z,
        num(grid.r(0)),
        num(grid.z(0)),
        num(grid.h_r),
        num(grid.h_z),
        grid.len()
    )
}

pub fn vtk_scalar(name: &str, field: &Field, grid: &MeridianGrid) -> String {
    let mut s = vtk_header(name, grid);
    let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
    for v in &field.data {
        s.push_str(&num(*v));
        s.push('\n');
    }
    s
}

pub fn vtk_vector(name: &str, a: &Field, b: &Field, grid: &MeridianGrid) -> String {
    let mut s = vtk_header(name, grid);
    let _ = writeln!(s, "VECTORS {name} double");
    for (x, y) in a.data.iter().zip(&b.data) {
        let _ = writeln!(s, "{} {} 0", num(*x), num(*y));
    }
    s
}

/// VTK files of a state: streamfunction, velocity, director, energy density.
pub fn write_state_vtk(dir: &Path, state: &SystemState, grid: &MeridianGrid, epsilon: f64, walls: &DirectorWalls) -> Result<(), OutputError> {
    let f = &state.flow;
    let d = &state.director;
    write_file(&dir.join("psi.vtk"), &vtk_scalar("psi", &f.psi, grid))?;
    write_file(&dir.join("velocity.vtk"), &vtk_vector("velocity", &f.u_r, &f.u_z, grid))?;
    write_file(&dir.join("director.vtk"), &vtk_vector("director", &d.d_r, &d.d_z, grid))?;
    if let Ok(e) = crate::diagnostics::energy_density(d, epsilon, grid, walls) {
        write_file(&dir.join("energy_density.vtk"), &vtk_scalar("energy_density", &e, grid))?;
    }
    Ok(())
}
