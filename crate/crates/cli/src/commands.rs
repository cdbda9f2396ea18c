use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};
use wickchaos::basis::{orthogonalize, ProductBasis};
use wickchaos::chaos::{ChaosExpansion, Truncation};
use wickchaos::distributions::{DistributionConfig, DistributionSpec};
use wickchaos::io::{write_expansion_csv, write_parabolic, write_series_csv};
use wickchaos::malliavin::HValuedExpansion;
use wickchaos::mc_oracle::{gbm_crosscheck, gram_suite, identity_suite};
use wickchaos::nalgebra::DMatrix;
use wickchaos::sde::{closed_form, picard, propagate, residual_norm, second_moment_bound, SdeProblem};
use wickchaos::spde_parabolic::{
    energy_bound, grid_points, mild_solution, propagate_parabolic, semigroup_norm_check, ModalGridField,
    ParabolicProblem,
};
use wickchaos::spde_stationary::{residual, solve, weighted_solution_norm, Nonlinearity, StationaryProblem};
use wickchaos::suites::{self, Suite};
use wickchaos::{Error, WeightSpec};

use crate::config::*;

/// Why a command did not succeed; each maps to one exit code.
#[derive(Debug)]
pub enum Failure {
    Config { message: String, path: Option<String> },
    Numerical(String),
    Verification(Value),
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Failure::Config { message: message.into(), path: None }
    }

    fn at(path: impl Into<String>) -> impl FnOnce(String) -> Self {
        let path = path.into();
        move |message| Failure::Config { message, path: Some(path) }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config { .. } => 2,
            Failure::Numerical(_) => 3,
            Failure::Verification(_) => 4,
        }
    }

    pub fn to_json(&self) -> Value {
        match self {
            Failure::Config { message, path } => json!({"error": "config", "message": message, "path": path}),
            Failure::Numerical(message) => json!({"error": "numerical", "message": message}),
            Failure::Verification(report) => json!({"error": "verification", "pass": report["pass"]}),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::config(e.to_string())
        }
    }
}

fn io_failure(path: &Path) -> impl FnOnce(std::io::Error) -> Failure + '_ {
    move |e| Failure::Config { message: e.to_string(), path: Some(path.display().to_string()) }
}

pub type Outcome = Result<Value, Failure>;

fn typed<T: DeserializeOwned>(v: Value) -> Result<T, Failure> {
    serde_path_to_error::deserialize(v).map_err(|e| {
        let path = e.path().to_string();
        Failure::Config { message: e.into_inner().to_string(), path: Some(path) }
    })
}

pub fn read_json(path: &Path) -> Result<Value, Failure> {
    let text = std::fs::read_to_string(path).map_err(io_failure(path))?;
    if text.trim().is_empty() {
        return Err(Failure::Config { message: "empty config".into(), path: Some(path.display().to_string()) });
    }
    serde_json::from_str(&text).map_err(|e| Failure::Config {
        message: e.to_string(),
        path: Some(format!("{}:{}:{}", path.display(), e.line(), e.column())),
    })
}

pub fn parse_scenario(mut v: Value) -> Result<Scenario, Failure> {
    let obj = v.as_object_mut().ok_or_else(|| Failure::config("config must be a JSON object"))?;
    let kind = match obj.remove("kind") {
        Some(Value::String(k)) => k,
        Some(_) => return Err(Failure::at("kind")("`kind` must be a string".into())),
        None => return Err(Failure::at("kind")("missing field `kind`".into())),
    };
    Ok(match kind.as_str() {
        "basis" => Scenario::Basis(typed(v)?),
        "sde" => Scenario::Sde(typed(v)?),
        "parabolic" => Scenario::Parabolic(typed(v)?),
        "elliptic" => Scenario::Elliptic(typed(v)?),
        "mc" => Scenario::Mc(typed(v)?),
        other => {
            return Err(Failure::at("kind")(format!(
                "unknown kind `{other}`, expected one of basis, sde, parabolic, elliptic, mc"
            )))
        }
    })
}

pub fn load(path: &Path, expected: &str) -> Result<Scenario, Failure> {
    let s = parse_scenario(read_json(path)?)?;
    if s.kind() != expected {
        return Err(Failure::at("kind")(format!("expected kind `{expected}`, got `{}`", s.kind())));
    }
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<(), Failure> {
    let mut f = BufWriter::new(File::create(path).map_err(io_failure(path))?);
    serde_json::to_writer_pretty(&mut f, v).map_err(|e| Failure::config(e.to_string()))?;
    writeln!(f).and_then(|_| f.flush()).map_err(io_failure(path))
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    Ok(BufWriter::new(File::create(path).map_err(io_failure(path))?))
}

fn verified(report: Value, pass: bool) -> Outcome {
    if pass {
        Ok(report)
    } else {
        Err(Failure::Verification(report))
    }
}

fn law(c: &DistributionConfig) -> Result<DistributionSpec, Failure> {
    DistributionSpec::try_from(c.clone()).map_err(|e| Failure::at("distribution")(e.to_string()))
}

pub fn basis(cfg: &BasisConfig, out: Option<&Path>) -> Outcome {
    let b = orthogonalize(&law(&cfg.distribution)?, cfg.degree)?;
    let triangle = serde_json::to_value(b.triangle()).expect("triangle serializes");
    if let Some(out) = out {
        write_json(out, &triangle)?;
    }
    Ok(triangle)
}

pub fn verify(suite: Suite, trials: usize, seed: u64) -> Outcome {
    let r = suites::run(suite, trials, seed)?;
    let pass = r.pass;
    verified(serde_json::to_value(r).expect("report serializes"), pass)
}

fn sde_problem(cfg: &mut SdeConfig) -> Result<SdeProblem, Failure> {
    let space = cfg.noise.space().map_err(|e| Failure::at("noise")(e.to_string()))?;
    let g = cfg.g.project(&space).map_err(Failure::at("g"))?;
    let t = Truncation::new(space.len(), cfg.degree);
    let mut w = ChaosExpansion::new(t);
    for (i, term) in cfg.initial.iter().enumerate() {
        w.insert(term.multiindex.clone(), term.coefficient).map_err(|e| Failure::at(format!("initial[{i}]"))(e.to_string()))?;
    }
    let mut f: HValuedExpansion = ChaosExpansion::new(t);
    for (i, term) in cfg.forcing.iter().enumerate() {
        let path = format!("forcing[{i}]");
        let h = term.kernel.project(&space).map_err(Failure::at(path.clone()))?;
        f.insert(term.multiindex.clone(), h).map_err(|e| Failure::at(path)(e.to_string()))?;
    }
    let mut p = SdeProblem::new(space, g, w, cfg.degree).with_forcing(f);
    match (cfg.steps, cfg.output_every) {
        (Some(s), Some(o)) => p = p.with_steps(s, o),
        (Some(s), None) => p = p.with_steps(s, if s % 256 == 0 { s / 256 } else { 1 }),
        (None, Some(o)) => {
            let s = p.steps;
            p = p.with_steps(s, o)
        }
        (None, None) => {}
    }
    cfg.steps = Some(p.steps);
    cfg.output_every = Some(p.output_every);
    if cfg.method == SdeMethod::Picard {
        cfg.picard_iterations = Some(cfg.picard_iterations.unwrap_or(cfg.degree));
    }
    Ok(p)
}

pub fn sde(cfg: &SdeConfig, out: Option<&Path>) -> Outcome {
    let mut cfg = cfg.clone();
    let p = sde_problem(&mut cfg)?;
    let u = match cfg.method {
        SdeMethod::Propagate => propagate(&p)?,
        SdeMethod::ClosedForm => closed_form(&p)?,
        SdeMethod::Picard => picard(&p, cfg.picard_iterations.unwrap_or(cfg.degree))?,
    };
    if let Some(out) = out {
        let mut f = create(out)?;
        write_series_csv(&mut f, &u)?;
        f.flush().map_err(io_failure(out))?;
    }
    let bound = second_moment_bound(&p)?;
    let residual = if cfg.residual {
        let fine = p.clone().with_steps(p.steps, 1);
        Some(residual_norm(&fine, &propagate(&fine)?)?)
    } else {
        None
    };
    let last = u.last();
    let pass = bound.holds;
    let report = json!({
        "kind": "sde",
        "config": cfg,
        "output_times": u.times().len(),
        "coefficients": u.index().len(),
        "final_mean": last.mean(),
        "final_second_moment": last.second_moment(),
        "bound": bound,
        "residual_norm": residual,
        "pass": pass,
    });
    verified(report, pass)
}

fn parabolic_problem(cfg: &ParabolicConfig) -> Result<ParabolicProblem, Failure> {
    let m = cfg.grid_points;
    let a = cfg.a.sample(m).map_err(|e| Failure::at("a")(e.to_string()))?;
    let b = cfg.b.sample(m).map_err(|e| Failure::at("b")(e.to_string()))?;
    let space = cfg.noise.space().map_err(|e| Failure::at("noise")(e.to_string()))?;
    let g = cfg.g.project(&space).map_err(Failure::at("g"))?;
    let t = Truncation::new(space.len(), cfg.degree);
    let mut w = ChaosExpansion::new(t);
    for (i, term) in cfg.initial.iter().enumerate() {
        let at = || Failure::at(format!("initial[{i}]"));
        let v = term.value.sample(m).map_err(|e| at()(e.to_string()))?;
        w.insert(term.multiindex.clone(), v).map_err(|e| at()(e.to_string()))?;
    }
    let mut f = ChaosExpansion::new(t);
    for (i, term) in cfg.forcing.iter().enumerate() {
        let mut modes = vec![vec![0.0; m]; space.len()];
        for (j, mf) in term.modes.iter().enumerate() {
            let at = || Failure::at(format!("forcing[{i}].modes[{j}]"));
            if mf.mode == 0 || mf.mode > space.len() {
                return Err(at()(format!("mode {} outside 1..={}", mf.mode, space.len())));
            }
            modes[mf.mode - 1] = mf.value.sample(m).map_err(|e| at()(e.to_string()))?;
        }
        f.insert(term.multiindex.clone(), ModalGridField::new(modes))
            .map_err(|e| Failure::at(format!("forcing[{i}]"))(e.to_string()))?;
    }
    Ok(ParabolicProblem::new(a, b, space, g, w, cfg.degree, cfg.steps)
        .with_forcing(f)
        .with_output_every(cfg.output_every))
}

pub fn parabolic(cfg: &ParabolicConfig, out: Option<&Path>) -> Outcome {
    let p = parabolic_problem(cfg)?;
    let u = propagate_parabolic(&p)?;
    if let Some(out) = out {
        let mut f = create(out)?;
        write_parabolic(&mut f, &u, cfg.steps)?;
        f.flush().map_err(io_failure(out))?;
    }
    let energies = u.energies();
    let bound = energy_bound(&p, &u)?;
    let mild = if cfg.compare_mild { Some(u.max_abs_diff(&mild_solution(&p)?)?) } else { None };
    let m = cfg.grid_points;
    let h = match p.initial.get(&wickchaos::Multiindex::zero()) {
        Some(w0) if w0.iter().any(|x| *x != 0.0) => w0.clone(),
        _ => grid_points(m).iter().map(|x| x.sin()).collect(),
    };
    let horizon = p.space.horizon();
    let n = cfg.semigroup_times;
    let checks = (1..=n)
        .map(|j| semigroup_norm_check(&p, &h, horizon * j as f64 / n as f64))
        .collect::<wickchaos::Result<Vec<_>>>()?;
    let pass = bound.holds && checks.iter().all(|c| c.holds);
    let report = json!({
        "kind": "parabolic",
        "config": cfg,
        "output_times": u.times().len(),
        "coefficients": u.index().len(),
        "final_energy": energies.last(),
        "energy_bound": bound,
        "mild_max_abs_diff": mild,
        "semigroup": checks,
        "pass": pass,
    });
    verified(report, pass)
}

fn matrix(rows: &[Vec<f64>], path: &str) -> Result<DMatrix<f64>, Failure> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(Failure::at(path)(format!("expected a non-empty square matrix, got {n} rows")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

pub fn elliptic(cfg: &EllipticConfig, weights: Option<WeightSpec>, out: Option<&Path>) -> Outcome {
    let mut cfg = cfg.clone();
    if weights.is_some() {
        cfg.weights = weights;
    }
    let weights = cfg.weights.get_or_insert_with(WeightSpec::unweighted).clone();
    let a = matrix(&cfg.a, "a")?;
    let d = a.nrows();
    let m = cfg.m.iter().enumerate().map(|(i, r)| matrix(r, &format!("m[{i}]"))).collect::<Result<Vec<_>, _>>()?;
    if let Some(i) = m.iter().position(|x| x.nrows() != d) {
        return Err(Failure::at(format!("m[{i}]"))(format!("dimension differs from a ({d})")));
    }
    let t = Truncation::new(m.len(), cfg.degree);
    let mut f = ChaosExpansion::new(t);
    for (i, term) in cfg.forcing.iter().enumerate() {
        let at = || Failure::at(format!("forcing[{i}]"));
        if term.value.len() != d {
            return Err(at()(format!("{} components, expected {d}", term.value.len())));
        }
        f.insert(term.multiindex.clone(), term.value.clone()).map_err(|e| at()(e.to_string()))?;
    }
    let p = match cfg.nonlinearity {
        Nonlinearity::Linear => StationaryProblem::linear(a, m, f, cfg.degree),
        Nonlinearity::WickCubic => StationaryProblem::wick_cubic(a, m, f, cfg.degree, cfg.branch),
    };
    let sol = solve(&p)?;
    let u = &sol.expansion;
    if let Some(out) = out {
        let mut file = create(out)?;
        if d == 1 {
            let scalar = u.map(|_, v| v[0]);
            write_expansion_csv(&mut file, &scalar, true)?;
        } else {
            let rows: Vec<Value> = u.iter().map(|(a, v)| json!({"multiindex": a, "coefficient": v})).collect();
            serde_json::to_writer_pretty(&mut file, &rows).map_err(|e| Failure::config(e.to_string()))?;
            writeln!(file).map_err(io_failure(out))?;
        }
        file.flush().map_err(io_failure(out))?;
    }
    let r = residual(&p, u)?;
    let norm = weighted_solution_norm(u, &weights)?;
    let scale = cfg.forcing.iter().flat_map(|t| t.value.iter()).fold(1.0f64, |s, x| s.max(x.abs()));
    let pass = r.below_top <= cfg.residual_tolerance * scale;
    let report = json!({
        "kind": "elliptic",
        "config": cfg,
        "coefficients": u.len(),
        "condition": sol.condition,
        "branch": sol.branch,
        "residual": r,
        "weighted_norm": norm,
        "pass": pass,
    });
    verified(report, pass)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum McSuite {
    Gram,
    Identity,
    Gbm,
}

pub fn mc(suite: McSuite, cfg: &McConfig, samples: usize, seed: u64) -> Outcome {
    let mut cfg = cfg.clone();
    let spec = law(&cfg.distribution)?;
    let (body, pass) = match suite {
        McSuite::Gram => {
            let basis = ProductBasis::iid(&spec, cfg.vars, cfg.degree)?;
            let entries = gram_suite(&basis, cfg.degree, samples, seed)?;
            let pass = entries.iter().all(|e| e.estimate.pass);
            (json!({"entries": entries}), pass)
        }
        McSuite::Identity => {
            let basis = ProductBasis::iid(&spec, cfg.vars, cfg.degree)?;
            let r = identity_suite(&basis, samples, seed)?;
            let pass = r.pass;
            (serde_json::to_value(r).expect("report serializes"), pass)
        }
        McSuite::Gbm => {
            let sde = cfg.sde.get_or_insert_with(default_gbm_problem);
            let p = sde_problem(sde)?;
            let r = gbm_crosscheck(&p, &spec, samples, seed)?;
            let pass = r.pass;
            (serde_json::to_value(r).expect("report serializes"), pass)
        }
    };
    let name = serde_json::to_value(format!("{suite:?}").to_lowercase()).expect("string");
    let mut report = json!({"kind": "mc", "suite": name, "samples": samples, "seed": seed, "config": cfg});
    let obj = report.as_object_mut().expect("object");
    if let Value::Object(b) = body {
        obj.extend(b);
    }
    obj.insert("pass".into(), Value::Bool(pass));
    verified(report, pass)
}
