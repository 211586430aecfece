//! CSV tables, VTK error maps and field dumps.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::{CaseResult, ExperimentResult, OutputConfig};
use crate::error::Result;
use crate::estimator::error_map;
use crate::mesh::vtk::write_vtk;

/// Paths written by [`write_outputs`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OutputFiles {
    pub report: PathBuf,
    pub sweep: PathBuf,
    pub trace: Option<PathBuf>,
    pub maps: Vec<PathBuf>,
    pub fields: Vec<PathBuf>,
}

/// File-name friendly form of a label.
pub fn slug(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() {
                c.to_ascii_lowercase()
            } else {
                '_'
            }
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn case_stem(c: &CaseResult, k: usize) -> String {
    format!("r{k}_{}_{}", slug(&c.scheme), slug(&c.mode))
}

pub const REPORT_HEADER: &str =
    "name,ratio,scheme,mode,status,iterations,estimate,relative,algebraic,discretization,energy,reference,effectivity,message";

fn write_report(path: &Path, r: &ExperimentResult) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{REPORT_HEADER}")?;
    for c in &r.cases {
        match &c.outcome {
            Ok(d) => {
                let rep = &d.report;
                let status = if d.converged { "ok" } else { "max_iter" };
                writeln!(
                    w,
                    "{},{},{},{},{status},{},{},{},{},{},{},{},{},",
                    r.name,
                    c.ratio,
                    c.scheme,
                    c.mode,
                    d.iterations.map(|i| i.to_string()).unwrap_or_default(),
                    rep.global,
                    rep.relative,
                    opt(rep.algebraic),
                    opt(rep.discretization),
                    rep.energy,
                    opt(rep.reference),
                    opt(rep.effectivity),
                )?;
            }
            Err(f) => {
                writeln!(
                    w,
                    "{},{},{},{},{},,,,,,,,,\"{}: {}\"",
                    r.name,
                    c.ratio,
                    c.scheme,
                    c.mode,
                    f.class.name(),
                    f.stage,
                    f.message.replace('"', "'")
                )?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Wide table: one row per (ratio, scheme), one relative-estimate column per
/// mode. Sequential columns repeat on every scheme row.
fn write_sweep(path: &Path, r: &ExperimentResult) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "ratio,scheme,{}", r.modes.join(","))?;
    let mut keys: Vec<(f64, String)> = Vec::new();
    for c in &r.cases {
        if c.scheme != super::SEQUENTIAL
            && !keys.iter().any(|(ra, s)| *ra == c.ratio && *s == c.scheme)
        {
            keys.push((c.ratio, c.scheme.clone()));
        }
    }
    let mut ratios: Vec<f64> = Vec::new();
    for c in &r.cases {
        if !ratios.contains(&c.ratio) {
            ratios.push(c.ratio);
        }
    }
    for &ratio in &ratios {
        if !keys.iter().any(|(ra, _)| *ra == ratio) {
            keys.push((ratio, super::SEQUENTIAL.to_string()));
        }
    }
    keys.sort_by(|a, b| {
        let pa = ratios.iter().position(|x| *x == a.0);
        let pb = ratios.iter().position(|x| *x == b.0);
        pa.cmp(&pb)
    });
    for (ratio, scheme) in keys {
        let cols: Vec<String> = r
            .modes
            .iter()
            .map(|m| {
                opt(r
                    .relative(ratio, &scheme, m)
                    .or_else(|| r.relative(ratio, super::SEQUENTIAL, m)))
            })
            .collect();
        writeln!(w, "{ratio},{scheme},{}", cols.join(","))?;
    }
    w.flush()?;
    Ok(())
}

fn write_trace(path: &Path, r: &ExperimentResult) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(
        w,
        "ratio,scheme,mode,iteration,sqrt_rz,discretization,separated,guaranteed"
    )?;
    for t in &r.traces {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            t.ratio,
            t.scheme,
            t.mode,
            t.iteration,
            t.sqrt_rz,
            t.discretization,
            t.separated,
            t.guaranteed
        )?;
    }
    w.flush()?;
    Ok(())
}

fn write_fields(dir: &Path, stem: &str, c: &CaseResult, files: &mut Vec<PathBuf>) -> Result<()> {
    let Ok(d) = &c.outcome else { return Ok(()) };
    let path = dir.join(format!("{stem}_edges.csv"));
    let mut w = BufWriter::new(File::create(&path)?);
    writeln!(w, "region,edge,element,f0x,f0y,f1x,f1y")?;
    for (region, t) in d.field.tractions.iter().enumerate() {
        let mut edges: Vec<_> = t.edges.iter().collect();
        edges.sort_by_key(|(e, _)| **e);
        for (edge, (elem, dens)) in edges {
            writeln!(
                w,
                "{region},{edge},{elem},{},{},{},{}",
                dens[0][0], dens[0][1], dens[1][0], dens[1][1]
            )?;
        }
    }
    w.flush()?;
    files.push(path);
    let path = dir.join(format!("{stem}_stress.csv"));
    let mut w = BufWriter::new(File::create(&path)?);
    writeln!(w, "element,center_x,center_y,scale,coefficients")?;
    for (e, s) in d.field.stresses.iter().enumerate() {
        let coeffs: Vec<String> = s.coeffs.iter().map(|v| v.to_string()).collect();
        writeln!(
            w,
            "{e},{},{},{},{}",
            s.center[0],
            s.center[1],
            s.scale,
            coeffs.join(" ")
        )?;
    }
    w.flush()?;
    files.push(path);
    Ok(())
}

/// Writes `report.csv`, `sweep.csv` and the optional trace, maps and field dumps.
/// Existing files are overwritten.
pub fn write_outputs(
    r: &ExperimentResult,
    dir: &Path,
    outputs: &OutputConfig,
) -> Result<OutputFiles> {
    std::fs::create_dir_all(dir)?;
    let mut files = OutputFiles {
        report: dir.join("report.csv"),
        sweep: dir.join("sweep.csv"),
        ..Default::default()
    };
    write_report(&files.report, r)?;
    write_sweep(&files.sweep, r)?;
    if outputs.trace {
        let p = dir.join("trace.csv");
        write_trace(&p, r)?;
        files.trace = Some(p);
    }
    let mut ratios: Vec<f64> = Vec::new();
    for c in &r.cases {
        if !ratios.contains(&c.ratio) {
            ratios.push(c.ratio);
        }
    }
    for c in &r.cases {
        let k = ratios.iter().position(|x| *x == c.ratio).unwrap();
        let stem = case_stem(c, k);
        if outputs.vtk {
            if let Ok(d) = &c.outcome {
                let p = dir.join(format!("{stem}.vtk"));
                let mut w = BufWriter::new(File::create(&p)?);
                let map = error_map(&d.report);
                write_vtk(
                    &mut w,
                    &r.mesh,
                    d.partition.as_ref(),
                    &[("ecr_squared", &map)],
                )?;
                w.flush()?;
                files.maps.push(p);
            }
        }
        if outputs.fields {
            write_fields(dir, &stem, c, &mut files.fields)?;
        }
    }
    Ok(files)
}
