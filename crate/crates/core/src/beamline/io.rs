use std::io::{BufRead, BufReader, Read, Write};

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::{DetectorProfile, LPerpPoint, ScanPoint, ScanTable, SymmetrySource};
use crate::config::TOOL_VERSION;
use crate::spin::{DensityMatrix, Frame, PolarisationMode};
use crate::Error;

fn header(out: &mut impl Write, config_hash: &str, extra: &[(&str, String)]) -> Result<(), Error> {
    writeln!(out, "# tool_version: {TOOL_VERSION}")?;
    writeln!(out, "# config_hash: {config_hash}")?;
    for (k, v) in extra {
        writeln!(out, "# {k}: {v}")?;
    }
    Ok(())
}

/// `# key: value` lines at the top of a file, then the remaining text.
fn split_header<R: Read>(input: R) -> Result<(Vec<(String, String)>, String), Error> {
    let mut meta = Vec::new();
    let mut body = String::new();
    for line in BufReader::new(input).lines() {
        let line = line?;
        match line.strip_prefix('#') {
            Some(rest) => {
                if let Some((k, v)) = rest.split_once(':') {
                    meta.push((k.trim().to_owned(), v.trim().to_owned()));
                }
            }
            None => {
                body.push_str(&line);
                body.push('\n');
            }
        }
    }
    Ok((meta, body))
}

fn parse_f64(s: &str, what: &str, line: usize) -> Result<f64, Error> {
    s.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("row {line}: {what} '{s}' is not a number")))
}

fn parse_opt(s: &str, what: &str, line: usize) -> Result<Option<f64>, Error> {
    if s.trim().is_empty() {
        Ok(None)
    } else {
        parse_f64(s, what, line).map(Some)
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn element_name(part: &str, m: i32, mp: i32) -> String {
    format!("{part}({m},{mp})")
}

/// Velocity-averaged state leaving the preparation region.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedRow {
    pub theta: f64,
    pub reference_population: f64,
    pub lost_population: f64,
    /// Unit-trace natural-frame state of the reference manifold.
    pub state: DensityMatrix,
}

pub fn write_prepared<W: Write>(rows: &[PreparedRow], config_hash: &str, mut out: W) -> Result<(), Error> {
    header(&mut out, config_hash, &[])?;
    let f = rows.first().map_or(2, |r| r.state.f()) as i32;
    let mut names = vec!["theta".to_owned(), "reference_population".into(), "lost_population".into()];
    for part in ["re", "im"] {
        for m in (-f..=f).rev() {
            for mp in (-f..=f).rev() {
                names.push(element_name(part, m, mp));
            }
        }
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(&names).map_err(|e| Error::Parse(e.to_string()))?;
    for r in rows {
        if r.state.f() as i32 != f {
            return Err(Error::Config("all prepared rows must share one manifold".into()));
        }
        let mut rec = vec![r.theta.to_string(), r.reference_population.to_string(), r.lost_population.to_string()];
        for part in 0..2 {
            for m in (-f..=f).rev() {
                for mp in (-f..=f).rev() {
                    let z = r.state.get(m, mp);
                    rec.push(if part == 0 { z.re } else { z.im }.to_string());
                }
            }
        }
        w.write_record(&rec).map_err(|e| Error::Parse(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Read a table written by [`write_prepared`]; returns the rows and the
/// config hash from the header.
pub fn read_prepared<R: Read>(input: R) -> Result<(Vec<PreparedRow>, Option<String>), Error> {
    let (meta, body) = split_header(input)?;
    let hash = meta.into_iter().find(|(k, _)| k == "config_hash").map(|(_, v)| v);
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(body.as_bytes());
    let names: Vec<String> = r
        .headers()
        .map_err(|e| Error::Parse(e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    let col = |name: &str| {
        names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Parse(format!("prepared table has no column '{name}'")))
    };
    let n_el = names.iter().filter(|n| n.starts_with("re(")).count();
    let dim = (n_el as f64).sqrt().round() as usize;
    if dim * dim != n_el || dim % 2 == 0 {
        return Err(Error::Parse(format!("{n_el} real-part columns do not form an odd square matrix")));
    }
    let f = (dim as i32 - 1) / 2;
    let (ct, cr, cl) = (col("theta")?, col("reference_population")?, col("lost_population")?);
    let mut idx = Vec::with_capacity(2 * n_el);
    for part in ["re", "im"] {
        for m in -f..=f {
            for mp in -f..=f {
                idx.push(col(&element_name(part, m, mp))?);
            }
        }
    }
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
        let line = line + 1;
        let get = |c: usize, what: &str| parse_f64(rec.get(c).unwrap_or(""), what, line);
        let mut el = DMatrix::<Complex64>::zeros(dim, dim);
        for i in 0..dim {
            for j in 0..dim {
                el[(i, j)] = Complex64::new(
                    get(idx[i * dim + j], &names[idx[i * dim + j]])?,
                    get(idx[n_el + i * dim + j], &names[idx[n_el + i * dim + j]])?,
                );
            }
        }
        let state = DensityMatrix::new(f as u32, el, Frame::Natural, 1.0)
            .map_err(|e| Error::Parse(format!("row {line}: {e}")))?;
        rows.push(PreparedRow {
            theta: get(ct, "theta")?,
            reference_population: get(cr, "reference_population")?,
            lost_population: get(cl, "lost_population")?,
            state,
        });
    }
    Ok((rows, hash))
}

/// Columns: `theta`, `reference_population`, one `p_<mode>` per scanned
/// mode, `p_o` and `status` (`ok` or the joined error messages).
pub fn write_scan<W: Write>(table: &ScanTable, config_hash: &str, mut out: W) -> Result<(), Error> {
    header(&mut out, config_hash, &[("direction", table.direction.clone())])?;
    let mut w = csv::Writer::from_writer(out);
    let mut names = vec!["theta".to_owned(), "reference_population".into()];
    names.extend(table.modes.iter().map(|m| format!("p_{}", m.label())));
    names.extend(["p_o".to_owned(), "status".into()]);
    w.write_record(&names).map_err(|e| Error::Parse(e.to_string()))?;
    for p in &table.points {
        let mut rec = vec![p.theta.to_string(), opt(p.reference_population)];
        rec.extend(p.separations.iter().map(|s| opt(*s)));
        rec.push(opt(p.p_o));
        rec.push(if p.errors.is_empty() { "ok".into() } else { p.errors.join("; ") });
        w.write_record(&rec).map_err(|e| Error::Parse(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Read a table written by [`write_scan`], with the config hash from its header.
pub fn read_scan<R: Read>(input: R) -> Result<(ScanTable, Option<String>), Error> {
    let (meta, body) = split_header(input)?;
    let find = |key: &str| meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.clone());
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(body.as_bytes());
    let names: Vec<String> = r
        .headers()
        .map_err(|e| Error::Parse(e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    if names.len() < 4 || names[0] != "theta" || names[1] != "reference_population" {
        return Err(Error::Parse("scan table must start with theta,reference_population".into()));
    }
    let n = names.len();
    if names[n - 2] != "p_o" || names[n - 1] != "status" {
        return Err(Error::Parse("scan table must end with p_o,status".into()));
    }
    let modes = names[2..n - 2]
        .iter()
        .map(|c| {
            c.strip_prefix("p_")
                .ok_or_else(|| Error::Parse(format!("unexpected column '{c}'")))?
                .parse::<PolarisationMode>()
                .map_err(Error::Parse)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut points = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
        let line = line + 1;
        if rec.len() != n {
            return Err(Error::Parse(format!("row {line}: expected {n} fields, found {}", rec.len())));
        }
        let status = rec[n - 1].to_owned();
        points.push(ScanPoint {
            theta: parse_f64(&rec[0], "theta", line)?,
            reference_population: parse_opt(&rec[1], "reference_population", line)?,
            separations: (2..n - 2)
                .map(|c| parse_opt(&rec[c], &names[c], line))
                .collect::<Result<_, _>>()?,
            p_o: parse_opt(&rec[n - 2], "p_o", line)?,
            errors: if status == "ok" { Vec::new() } else { vec![status] },
        });
    }
    Ok((
        ScanTable {
            direction: find("direction").unwrap_or_default(),
            modes,
            points,
        },
        find("config_hash"),
    ))
}

pub fn write_l_perp<W: Write>(points: &[LPerpPoint], k2: f64, config_hash: &str, mut out: W) -> Result<(), Error> {
    header(&mut out, config_hash, &[("k2", k2.to_string())])?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["theta", "l_perp_2", "source"]).map_err(|e| Error::Parse(e.to_string()))?;
    for p in points {
        let source = match p.source {
            SymmetrySource::Measured => "measured",
            SymmetrySource::Mirrored => "mirrored",
            SymmetrySource::Shifted => "shifted",
        };
        w.write_record([p.theta.to_string(), p.l_perp.to_string(), source.to_owned()])
            .map_err(|e| Error::Parse(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_profile<W: Write>(profile: &DetectorProfile, config_hash: &str, mut out: W) -> Result<(), Error> {
    header(&mut out, config_hash, &[])?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["position_hbar_k", "counts"]).map_err(|e| Error::Parse(e.to_string()))?;
    for (x, n) in profile.positions.iter().zip(&profile.counts) {
        w.write_record([x.to_string(), n.to_string()]).map_err(|e| Error::Parse(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
