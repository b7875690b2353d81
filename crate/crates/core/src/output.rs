//! Plain-text artifacts: PGM density images and CSV tables.

use std::io::{self, BufRead, Write};

use crate::bifidelity::Certificate;
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::optimize::HistoryRecord;

/// Plain PGM with row 0 at the top of the domain; passive elements are 0.
///
/// `values` is indexed by active element.
pub fn write_density_pgm<W: Write>(mut w: W, mesh: &Mesh, values: &[f64]) -> Result<()> {
    if values.len() != mesh.n_active() {
        return Err(Error::invalid("density does not match the mesh"));
    }
    writeln!(w, "P2\n{} {}\n255", mesh.nx, mesh.ny)?;
    for iy in (0..mesh.ny).rev() {
        let row: Vec<String> = (0..mesh.nx)
            .map(|ix| {
                let px = mesh.active_index(iy * mesh.nx + ix).map_or(0, |a| (255.0 * values[a].clamp(0.0, 1.0)).round() as u8);
                px.to_string()
            })
            .collect();
        writeln!(w, "{}", row.join(" "))?;
    }
    Ok(())
}

/// Reads a plain PGM back as `(nx, ny, values)` in element order (bottom row first), scaled to [0, 1].
pub fn read_density_pgm<R: BufRead>(r: R) -> Result<(usize, usize, Vec<f64>)> {
    let mut tokens = Vec::new();
    for line in r.lines() {
        let line = line?;
        let body = line.split('#').next().unwrap_or("");
        tokens.extend(body.split_whitespace().map(str::to_owned));
    }
    let bad = || Error::invalid("malformed PGM");
    if tokens.first().map(String::as_str) != Some("P2") {
        return Err(bad());
    }
    let nums: Vec<usize> = tokens[1..].iter().map(|t| t.parse().map_err(|_| bad())).collect::<Result<_>>()?;
    let (nx, ny, max) = match nums[..] {
        [nx, ny, max, ..] if max > 0 => (nx, ny, max as f64),
        _ => return Err(bad()),
    };
    let px = &nums[3..];
    if px.len() != nx * ny {
        return Err(bad());
    }
    let mut values = vec![0.0; nx * ny];
    for row in 0..ny {
        for ix in 0..nx {
            values[(ny - 1 - row) * nx + ix] = px[row * nx + ix] as f64 / max;
        }
    }
    Ok((nx, ny, values))
}

fn f(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_history_csv<W: Write>(mut w: W, history: &[HistoryRecord]) -> io::Result<()> {
    writeln!(w, "iter,Q,mu,sigma,volume,change,n_hi_solves")?;
    for h in history {
        writeln!(w, "{},{},{},{},{},{},{}", h.iter, f(h.q), f(h.mu), f(h.sigma), f(h.volume), f(h.change), h.n_hi_solves)?;
    }
    Ok(())
}

pub fn write_certificate_csv<W: Write>(mut w: W, certs: &[(usize, Certificate)]) -> io::Result<()> {
    writeln!(w, "iter,epsilon,delta,sigma_max_GH,bound_u,actual_u,bound_C,actual_C,bound_dC,actual_dC")?;
    for (it, c) in certs {
        writeln!(
            w,
            "{it},{},{},{},{},{},{},{},{},{}",
            f(c.epsilon),
            f(c.delta),
            f(c.sigma_max_gh),
            f(c.bound_u),
            f(c.actual_u),
            f(c.bound_c),
            f(c.actual_c),
            f(c.bound_dc),
            f(c.actual_dc)
        )?;
    }
    Ok(())
}

/// One row of the stress-moment comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct StressRow {
    pub method: String,
    pub n_hi: usize,
    pub mean_err: f64,
    pub std_err: f64,
}

pub fn write_stress_csv<W: Write>(mut w: W, rows: &[StressRow]) -> io::Result<()> {
    writeln!(w, "method,n_hi,mean_err,std_err")?;
    for r in rows {
        writeln!(w, "{},{},{},{}", r.method, r.n_hi, f(r.mean_err), f(r.std_err))?;
    }
    Ok(())
}

/// Error-versus-n curve of the bi-fidelity approximation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub n: usize,
    pub displacement: f64,
    pub compliance: f64,
    pub sensitivity: f64,
}

pub fn write_sweep_csv<W: Write>(mut w: W, rows: &[SweepRow]) -> io::Result<()> {
    writeln!(w, "n,displacement_err,compliance_err,sensitivity_err")?;
    for r in rows {
        writeln!(w, "{},{},{},{}", r.n, f(r.displacement), f(r.compliance), f(r.sensitivity))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_mesh, BcPreset, DomainShape};

    #[test]
    fn two_by_one_field() {
        let m = build_mesh(2, 1, DomainShape::Rectangle, BcPreset::Custom).unwrap();
        let mut out = Vec::new();
        write_density_pgm(&mut out, &m, &[0.0, 1.0]).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "P2\n2 1\n255\n0 255\n");
    }

    #[test]
    fn pgm_round_trip_and_passive() {
        let m = build_mesh(5, 5, DomainShape::LBracket, BcPreset::LBracket).unwrap();
        let vals: Vec<f64> = (0..m.n_active()).map(|i| i as f64 / m.n_active() as f64).collect();
        let mut out = Vec::new();
        write_density_pgm(&mut out, &m, &vals).unwrap();
        let (nx, ny, back) = read_density_pgm(out.as_slice()).unwrap();
        assert_eq!((nx, ny), (5, 5));
        for e in 0..25 {
            match m.active_index(e) {
                Some(a) => assert!((back[e] - vals[a]).abs() <= 0.5 / 255.0 + 1e-12),
                None => assert_eq!(back[e], 0.0),
            }
        }
    }

    #[test]
    fn history_has_header_and_rows() {
        let rec = HistoryRecord { iter: 1, q: 1.0, mu: 1.0, sigma: 0.0, volume: 0.35, change: 0.2, n_hi_solves: 3 };
        let mut out = Vec::new();
        write_history_csv(&mut out, &[rec]).unwrap();
        let s = String::from_utf8(out).unwrap();
        assert_eq!(s.lines().count(), 2);
        assert!(s.lines().nth(1).unwrap().starts_with("1,1.0000000000000000e0,"));
    }
}
