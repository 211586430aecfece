//! Experiment runner: mesh, solve, recover and estimate for every
//! combination of modulus ratio, partition scheme and estimator mode.

mod config;
mod output;

pub use config::{
    CustomMode, EstimatorConfig, ExperimentConfig, GeometryConfig, InclusionLayout, LoadsConfig,
    MaterialsConfig, Mode, ModeSpec, OutputConfig, PartitionConfig, SolverConfig, ToleranceKind,
    SCHEMA_VERSION, STANDARD_MODES,
};
pub use output::{slug, write_outputs, OutputFiles};

use crate::elasticity::{solve_sequential, Loads, MaterialField};
use crate::error::{Error, FailureClass, Result};
use crate::estimator::{
    continuity_gap, displacements_global, ecr_squared, energy_norm, guaranteed_bound,
    separated_bound, u_d_global, ErrorReport, ReferenceSolution,
};
use crate::fetidp::{fetidp_solve, fetidp_states, FetiProblem, FetiSolution, IterationState};
use crate::interface_ops::build_cyclic_kernel;
use crate::mesh::{
    build_interface_topology, generate_benchmark_mesh, partition_structured, Mesh, Partition,
};
use crate::recovery::{recover_dd, recover_sequential, AdmissibleField, DdContext};

/// Named configurations checked into the crate.
pub const PRESETS: [(&str, &str); 4] = [
    ("table1", include_str!("../../presets/table1.toml")),
    ("table2", include_str!("../../presets/table2.toml")),
    ("fig9", include_str!("../../presets/fig9.toml")),
    ("fig10", include_str!("../../presets/fig10.toml")),
];

pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let (_, text) = PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| Error::Config(format!("unknown preset {name:?}")))?;
    ExperimentConfig::from_toml(text)
}

/// Label used for sequential rows in place of a partition scheme.
pub const SEQUENTIAL: &str = "sequential";

/// Outcome of one (ratio, scheme, mode) combination.
#[derive(Debug, Clone)]
pub struct CaseResult {
    pub ratio: f64,
    pub scheme: String,
    pub mode: String,
    pub outcome: std::result::Result<CaseData, CaseFailure>,
}

#[derive(Debug, Clone)]
pub struct CaseFailure {
    /// `"solve"`, `"recover"` or `"estimate"`.
    pub stage: &'static str,
    pub class: FailureClass,
    pub message: String,
}

impl CaseFailure {
    pub fn new(stage: &'static str, e: &Error) -> Self {
        Self {
            stage,
            class: e.class(),
            message: e.to_string(),
        }
    }
}

fn at(stage: &'static str) -> impl Fn(Error) -> CaseFailure {
    move |e| CaseFailure::new(stage, &e)
}

type Staged<T> = std::result::Result<T, CaseFailure>;

#[derive(Debug, Clone)]
pub struct CaseData {
    pub report: ErrorReport,
    pub iterations: Option<usize>,
    pub converged: bool,
    pub partition: Option<Partition>,
    pub field: AdmissibleField,
}

/// Solver and estimator terms at one FETI-DP iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub ratio: f64,
    pub scheme: String,
    pub mode: String,
    pub iteration: usize,
    pub sqrt_rz: f64,
    pub discretization: f64,
    pub separated: f64,
    pub guaranteed: f64,
}

/// Everything an experiment produced, in deterministic order.
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub name: String,
    pub modes: Vec<String>,
    pub mesh: Mesh,
    pub cases: Vec<CaseResult>,
    pub traces: Vec<TraceRow>,
}

impl ExperimentResult {
    /// Worst failure across cases, if any.
    pub fn failure(&self) -> Option<FailureClass> {
        let rank = |c: FailureClass| match c {
            FailureClass::Config => 4,
            FailureClass::Solver => 3,
            FailureClass::Admissibility => 2,
            FailureClass::Other => 1,
        };
        self.cases
            .iter()
            .filter_map(|c| c.outcome.as_ref().err().map(|f| f.class))
            .max_by_key(|&c| rank(c))
    }

    pub fn relative(&self, ratio: f64, scheme: &str, mode: &str) -> Option<f64> {
        self.cases
            .iter()
            .find(|c| c.ratio == ratio && c.scheme == scheme && c.mode == mode)
            .and_then(|c| c.outcome.as_ref().ok())
            .map(|d| d.report.relative)
    }
}

/// Per-ratio data shared by every case.
struct RatioContext<'a> {
    ratio: f64,
    mesh: &'a Mesh,
    materials: MaterialField,
    loads: Loads,
    u_h: Vec<f64>,
    energy: f64,
    reference: Option<ReferenceSolution>,
}

impl RatioContext<'_> {
    fn with_reference(&self, report: ErrorReport, u: &[f64]) -> ErrorReport {
        match &self.reference {
            Some(r) => report.with_reference(r.distance(self.mesh, u)),
            None => report,
        }
    }
}

fn sequential_case(ctx: &RatioContext, mode: &Mode) -> Staged<CaseData> {
    let field = recover_sequential(
        ctx.mesh,
        &ctx.materials,
        &ctx.loads,
        &ctx.u_h,
        mode.recovery.eet,
        mode.recovery.degree,
    )
    .map_err(at("recover"))?;
    let sq = ecr_squared(
        ctx.mesh,
        &ctx.materials,
        &displacements_global(ctx.mesh, &ctx.u_h),
        &field,
    );
    let report = ctx.with_reference(ErrorReport::new(&sq, None, ctx.energy), &ctx.u_h);
    Ok(CaseData {
        report,
        iterations: None,
        converged: true,
        partition: None,
        field,
    })
}

fn dd_case(
    ctx: &RatioContext,
    dd: &DdContext,
    scheme: &str,
    solution: &FetiSolution,
    states: &[IterationState],
    mode: &Mode,
    trace: &mut Vec<TraceRow>,
) -> Staged<CaseData> {
    let state = &solution.state;
    let field = recover_dd(dd, state, &mode.recovery).map_err(at("recover"))?;
    guaranteed_bound(ctx.mesh, &ctx.materials, dd.problem, state, &field)
        .map_err(at("estimate"))?;
    let sq = ecr_squared(
        ctx.mesh,
        &ctx.materials,
        &crate::estimator::displacements_local(ctx.mesh, dd.problem, &state.u_d),
        &field,
    );
    let separated = separated_bound(ctx.mesh, &ctx.materials, dd.problem, state, &field)
        .map_err(at("estimate"))?;
    let u_d = u_d_global(dd.problem, ctx.mesh.n_nodes(), state);
    let report = ctx
        .with_reference(ErrorReport::new(&sq, Some(dd.partition), ctx.energy), &u_d)
        .with_separated(separated);
    for s in states {
        let f = recover_dd(dd, s, &mode.recovery).map_err(at("recover"))?;
        let sep =
            separated_bound(ctx.mesh, &ctx.materials, dd.problem, s, &f).map_err(at("estimate"))?;
        let g = guaranteed_bound(ctx.mesh, &ctx.materials, dd.problem, s, &f)
            .map_err(at("estimate"))?;
        trace.push(TraceRow {
            ratio: ctx.ratio,
            scheme: scheme.to_string(),
            mode: mode.label.clone(),
            iteration: s.iteration,
            sqrt_rz: sep.algebraic,
            discretization: sep.discretization,
            separated: sep.total,
            guaranteed: g,
        });
    }
    Ok(CaseData {
        report,
        iterations: Some(state.iteration),
        converged: solution.converged,
        partition: Some(dd.partition.clone()),
        field,
    })
}

fn failed(ratio: f64, scheme: &str, mode: &Mode, e: &Error) -> CaseResult {
    CaseResult {
        ratio,
        scheme: scheme.to_string(),
        mode: mode.label.clone(),
        outcome: Err(CaseFailure::new("solve", e)),
    }
}

/// Runs every case of the configuration. Stage failures are recorded per case.
pub fn run(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let modes = config.modes()?;
    let loads = config.loads();
    let inclusions = config.geometry.inclusions.resolve(config.geometry.length)?;
    let mesh = generate_benchmark_mesh(config.geometry.n, config.geometry.length, &inclusions)?;
    let settings = config.solver.settings();
    let mut cases = Vec::new();
    let mut traces = Vec::new();
    for &ratio in &config.materials.ratios {
        let materials = config.material_field(ratio)?;
        let (_, _, u_h) = match solve_sequential(&mesh, &materials, &loads) {
            Ok(s) => s,
            Err(e) => {
                for m in &modes {
                    cases.push(failed(ratio, SEQUENTIAL, m, &e));
                }
                continue;
            }
        };
        let energy = energy_norm(&mesh, &materials, &u_h)?;
        let reference = match config.estimator.overkill {
            0 => None,
            k => Some(ReferenceSolution::new(
                &mesh,
                &materials,
                &loads,
                k,
                config.estimator.dof_budget,
            )?),
        };
        let ctx = RatioContext {
            ratio,
            mesh: &mesh,
            materials,
            loads,
            u_h,
            energy,
            reference,
        };
        for mode in modes.iter().filter(|m| !m.substructured) {
            let outcome = sequential_case(&ctx, mode);
            cases.push(CaseResult {
                ratio,
                scheme: SEQUENTIAL.into(),
                mode: mode.label.clone(),
                outcome,
            });
        }
        let dd_modes: Vec<&Mode> = modes.iter().filter(|m| m.substructured).collect();
        if dd_modes.is_empty() {
            continue;
        }
        for &scheme in &config.partition.schemes {
            let name = scheme.name().to_string();
            let partition = partition_structured(&mesh, scheme)?;
            let topo = build_interface_topology(&mesh, &partition);
            let kernel = build_cyclic_kernel(&mesh, &partition, &topo);
            let solved = FetiProblem::new(
                &mesh,
                &ctx.materials,
                &ctx.loads,
                &partition,
                &topo,
                settings.scaling,
            )
            .and_then(|p| {
                let (sol, states) = if config.outputs.trace {
                    fetidp_states(&p, &settings)?
                } else {
                    (fetidp_solve(&p, &settings, |_| Ok(()))?, Vec::new())
                };
                Ok((p, sol, states))
            });
            let (problem, solution, states) = match solved {
                Ok(s) => s,
                Err(e) => {
                    for m in &dd_modes {
                        cases.push(failed(ratio, &name, m, &e));
                    }
                    continue;
                }
            };
            debug_assert!(continuity_gap(&problem, mesh.n_nodes(), &solution.state.u_d) < 1e-8);
            let dd = DdContext {
                mesh: &mesh,
                materials: &ctx.materials,
                loads: &ctx.loads,
                partition: &partition,
                topo: &topo,
                kernel: &kernel,
                problem: &problem,
            };
            for mode in &dd_modes {
                let outcome = dd_case(&ctx, &dd, &name, &solution, &states, mode, &mut traces);
                cases.push(CaseResult {
                    ratio,
                    scheme: name.clone(),
                    mode: mode.label.clone(),
                    outcome,
                });
            }
        }
    }
    Ok(ExperimentResult {
        name: config.name.clone(),
        modes: modes.iter().map(|m| m.label.clone()).collect(),
        mesh,
        cases,
        traces,
    })
}
