use std::io::{self, Write};
use std::path::{Path, PathBuf};

use mrrad::bounds::{evaluate, BoundQuery, Theorem};
use mrrad::complexity::{
    complexity_curve, elbow_select_with, log_grid, validate_mu_grid, ComplexityCurve, ElbowAxis,
};
use mrrad::data::{gen_circles, load_csv, split_labels, write_csv};
use mrrad::deform::{build_deformed, kernel_slice, BoundingBox};
use mrrad::learner::{
    mse, solve_constrained, train_semi_deformed, train_semi_joint, train_supervised,
    zero_one_error, TrainedModel,
};
use mrrad::{bandwidth_to_sigma, Dataset, Error, GraphLaplacian, KernelSpec, Result};
use serde_json::{json, Value};

use crate::{
    Axis, BoundsArgs, Cli, Command, CurveArgs, EvalArgs, GenArgs, KernelArgs, MethodArg,
    SelectArgs, SliceArgs, TrainArgs,
};

pub fn run(cli: &Cli) -> Result<()> {
    validate_paths(cli)?;
    let config = resolved_config(cli)?;
    if !cli.quiet {
        eprintln!("{}", json!({ "config": config }));
    }
    match &cli.command {
        Command::Gen(a) => gen(cli, a),
        Command::Curve(a) => curve(cli, a),
        Command::Select(a) => select(cli, a, config),
        Command::Train(a) => train(cli, a, config),
        Command::Eval(a) => eval(cli, a, config),
        Command::Slice(a) => slice(cli, a),
        Command::Bounds(a) => bounds(cli, a, config),
    }
}

fn io_context(path: &Path, e: io::Error) -> Error {
    Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

fn validate_paths(cli: &Cli) -> Result<()> {
    let inputs: Vec<&PathBuf> = match &cli.command {
        Command::Gen(_) | Command::Bounds(_) => vec![],
        Command::Curve(a) => vec![&a.data],
        Command::Select(a) => vec![&a.curve],
        Command::Train(a) => vec![&a.data],
        Command::Eval(a) => vec![&a.model, &a.data],
        Command::Slice(a) => vec![&a.data],
    };
    for p in inputs {
        if !p.is_file() {
            return Err(io_context(
                p,
                io::Error::new(io::ErrorKind::NotFound, "input file not found"),
            ));
        }
    }
    if let Some(out) = &cli.output {
        let parent = out
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."));
        if !parent.is_dir() {
            return Err(io_context(
                out,
                io::Error::new(io::ErrorKind::NotFound, "output directory does not exist"),
            ));
        }
    }
    Ok(())
}

struct Kernels {
    base: KernelSpec,
    sigma: f64,
    sigma_w: f64,
}

fn kernels(k: &KernelArgs) -> Result<Kernels> {
    let sigma = k.sigma.unwrap_or_else(|| bandwidth_to_sigma(k.bandwidth));
    let sigma_w = k
        .sigma_w
        .unwrap_or_else(|| bandwidth_to_sigma(k.graph_bandwidth));
    if !(sigma_w > 0.0 && sigma_w.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "graph width must be positive, got {sigma_w}"
        )));
    }
    Ok(Kernels {
        base: KernelSpec::gaussian(sigma)?,
        sigma,
        sigma_w,
    })
}

/// All flags plus derived values (kernel divisors, the μ grid).
fn resolved_config(cli: &Cli) -> Result<Value> {
    let mut v = serde_json::to_value(cli)?;
    let kernel_args = match &cli.command {
        Command::Curve(a) => Some(&a.kernel),
        Command::Train(a) => Some(&a.kernel),
        Command::Slice(a) => Some(&a.kernel),
        _ => None,
    };
    if let Some(k) = kernel_args {
        let r = kernels(k)?;
        v["resolved"] = json!({ "sigma": r.sigma, "sigma_w": r.sigma_w });
    }
    if let Command::Curve(a) = &cli.command {
        v["resolved"]["mu_grid"] = json!(mu_grid(a)?);
    }
    if let Command::Bounds(a) = &cli.command {
        v["resolved"] = json!({ "h": a.h.unwrap_or(a.pdim_phi) });
    }
    Ok(v)
}

fn emit(cli: &Cli, bytes: &[u8]) -> Result<()> {
    match &cli.output {
        Some(p) => std::fs::write(p, bytes).map_err(|e| io_context(p, e)),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(bytes)?;
            out.flush()?;
            Ok(())
        }
    }
}

fn emit_json(cli: &Cli, v: &Value) -> Result<()> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    emit(cli, s.as_bytes())
}

fn load(path: &Path) -> Result<Dataset> {
    load_csv(path).map_err(|e| match e {
        Error::Io(io) => io_context(path, io),
        Error::Parse { row, msg } => Error::Parse {
            row,
            msg: format!("{}: {msg}", path.display()),
        },
        other => other,
    })
}

fn axis(a: Axis) -> ElbowAxis {
    match a {
        Axis::Linear => ElbowAxis::Linear,
        Axis::Log10 => ElbowAxis::Log10,
    }
}

fn gen(cli: &Cli, a: &GenArgs) -> Result<()> {
    let full = gen_circles(a.n_per_circle, (a.r1, a.r2), a.noise, cli.seed)?;
    let ds = split_labels(&full, a.labels, cli.seed)?;
    let mut buf = Vec::new();
    write_csv(&ds, &mut buf)?;
    emit(cli, &buf)
}

fn mu_grid(a: &CurveArgs) -> Result<Vec<f64>> {
    let grid = match &a.mu_grid {
        Some(g) => g.clone(),
        None => log_grid(a.mu_min, a.mu_max, a.mu_count)?,
    };
    validate_mu_grid(&grid)?;
    Ok(grid)
}

fn curve(cli: &Cli, a: &CurveArgs) -> Result<()> {
    let ds = load(&a.data)?;
    if ds.n() == 0 {
        return Err(Error::InvalidArgument(
            "curve needs labeled points to bound over".into(),
        ));
    }
    let k = kernels(&a.kernel)?;
    let gl = GraphLaplacian::build(ds.points(), k.sigma_w)?;
    let grid = mu_grid(a)?;
    let labeled: Vec<usize> = (0..ds.n()).collect();
    let mut c = complexity_curve(a.radius, k.base, ds.points(), gl.matrix(), &labeled, &grid)?;
    if c.valid_indices().len() >= 3 {
        c.elbow_index = Some(elbow_select_with(&c, axis(a.elbow_axis))?);
    }
    let mut buf = Vec::new();
    c.write_csv(&mut buf)?;
    emit(cli, &buf)
}

fn select(cli: &Cli, a: &SelectArgs, config: Value) -> Result<()> {
    let c = ComplexityCurve::load_csv(&a.curve)?;
    let i = elbow_select_with(&c, axis(a.elbow_axis))?;
    emit_json(
        cli,
        &json!({ "index": i, "mu": c.mu_grid[i], "upper": c.upper_values[i], "config": config }),
    )
}

fn train(cli: &Cli, a: &TrainArgs, config: Value) -> Result<()> {
    let ds = load(&a.data)?;
    let k = kernels(&a.kernel)?;
    let size = ds.len() as f64;
    let (model, constrained) = match (a.method, a.tau) {
        (MethodArg::Supervised, None) => (train_supervised(&ds, k.base, a.lambda_a)?, None),
        (MethodArg::Joint, None) => {
            let gl = GraphLaplacian::build(ds.points(), k.sigma_w)?;
            (train_semi_joint(&ds, k.base, &gl, a.lambda_a, a.mu)?, None)
        }
        (MethodArg::Deformed, None) => {
            let gl = GraphLaplacian::build(ds.points(), k.sigma_w)?;
            (
                train_semi_deformed(&ds, k.base, &gl, a.lambda_a, a.mu)?,
                None,
            )
        }
        (MethodArg::Joint, Some(tau)) => {
            let gl = GraphLaplacian::build(ds.points(), k.sigma_w)?;
            let s = solve_constrained(&ds, k.base, &gl, a.lambda_a, tau)?;
            let info =
                json!({ "tau": tau, "mu": s.mu, "penalty": s.penalty, "iterations": s.iterations });
            (s.model, Some(info))
        }
        (_, Some(_)) => {
            return Err(Error::InvalidArgument(
                "--tau requires --method joint".into(),
            ))
        }
    };
    let mut v = model.to_json()?;
    v["lambda"] = json!(model.mu() * size * size);
    if let Some(info) = constrained {
        v["constrained"] = info;
    }
    v["config"] = config;
    emit_json(cli, &v)
}

fn eval(cli: &Cli, a: &EvalArgs, config: Value) -> Result<()> {
    let text = std::fs::read_to_string(&a.model).map_err(|e| io_context(&a.model, e))?;
    let model = TrainedModel::from_json(serde_json::from_str(&text)?)?;
    let ds = load(&a.data)?;
    if ds.n() == 0 {
        return Err(Error::InvalidArgument(format!(
            "{} has no labeled rows to evaluate on",
            a.data.display()
        )));
    }
    let err = zero_one_error(&model, &ds)?;
    emit_json(
        cli,
        &json!({
            "n": ds.n(),
            "zero_one_error": err,
            "accuracy": 1.0 - err,
            "mse": mse(&model, &ds)?,
            "config": config,
        }),
    )
}

fn slice(cli: &Cli, a: &SliceArgs) -> Result<()> {
    if a.grid < 2 {
        return Err(Error::InvalidArgument(format!(
            "grid size must be >= 2, got {}",
            a.grid
        )));
    }
    let ds = load(&a.data)?;
    if a.ref_index >= ds.len() {
        return Err(Error::InvalidArgument(format!(
            "--ref-index {} out of range for {} points",
            a.ref_index,
            ds.len()
        )));
    }
    let k = kernels(&a.kernel)?;
    let gl = GraphLaplacian::build(ds.points(), k.sigma_w)?;
    let dk = build_deformed(k.base, ds.points(), gl.matrix(), a.mu)?;
    let bbox = BoundingBox::around(ds.points(), a.margin)?;
    let x_ref: Vec<f64> = ds.point(a.ref_index).iter().copied().collect();
    let samples = kernel_slice(&dk, &x_ref, bbox, a.grid)?;
    let mut s = String::from("gx,gy,value\n");
    for p in samples {
        s.push_str(&format!("{},{},{}\n", p.gx, p.gy, p.value));
    }
    emit(cli, s.as_bytes())
}

fn bounds(cli: &Cli, a: &BoundsArgs, config: Value) -> Result<()> {
    let q = BoundQuery {
        epsilon: a.epsilon,
        delta: a.delta,
        b1: a.b1,
        b2: a.b2,
        pdim_psi: a.pdim_psi,
        pdim_phi: a.pdim_phi,
        h: a.h.unwrap_or(a.pdim_phi),
        tau: a.tau,
    };
    let r = evaluate(
        &q,
        Theorem::try_from(a.theorem)?,
        a.big_o_constant,
        a.pairs_mode,
    )?;
    let mut v = serde_json::to_value(&r)?;
    v["tau"] = json!(a.tau);
    v["config"] = config;
    emit_json(cli, &v)
}
