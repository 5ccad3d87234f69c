use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use skipfree::library::{make_multiclass_queue, random_ct_skip_free, random_skip_free, InstanceClass, QueueSpec, RandomSpec};
use skipfree::reference::{enumerate_policies, policy_iteration_average, relative_value_iteration, OracleError};
use skipfree::transforms::{continuous_relative_costs, discount_to_average, recover_discounted_values, restrict_policy};
use skipfree::{
    emit_model, parse_model, solve_average, solve_communicating, uniformize, ChainClass, Mdp, Model, ModelFile, Options,
    Report, RootVariant, SolveError,
};

use crate::output::{print_compare, print_solution, print_trace_only, CompareRow, Solution};
use crate::{Command, Format, GenSource, SolverArgs, Status};

pub fn run(command: Command) -> Result<Status> {
    match command {
        Command::Validate { input } => validate(&input),
        Command::Solve { input, solver, discount, communicating, format } => solve(&input, &solver, discount, communicating, format),
        Command::Compare { input, solver, inject_fault } => compare(&input, &solver, inject_fault.unwrap_or(0.0)),
        Command::Transform { input, discount, uniformize, output } => transform(&input, discount, uniformize, output),
        Command::Gen { source, seed, states, actions, chain, communicating, ctmdp, output } => {
            gen(&source, seed, states, actions, chain, communicating, ctmdp, output)
        }
    }
}

fn load(path: &Path) -> Result<ModelFile> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_model(&text).with_context(|| format!("invalid model {}", path.display()))
}

fn write_out(text: &str, output: Option<PathBuf>) -> Result<()> {
    match output {
        Some(path) => fs::write(&path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn options(args: &SolverArgs) -> Options {
    Options::default().with_variant(args.variant).with_tol(args.tol).with_max_iter(args.max_iter)
}

fn validate(input: &Path) -> Result<Status> {
    let file = load(input)?;
    let class = match &file.model {
        Model::Discrete(m) => m.classify(),
        Model::Continuous(ct) => uniformize(ct)?.0.classify(),
    };
    println!("{class}");
    Ok(Status::Ok)
}

fn run_solver(m: &Mdp, opts: &Options, communicating: bool) -> Result<Report, SolveError> {
    if communicating {
        solve_communicating(m, opts)
    } else {
        solve_average(m, opts)
    }
}

fn solve(input: &Path, args: &SolverArgs, discount: Option<f64>, communicating: bool, format: Format) -> Result<Status> {
    let file = load(input)?;
    let opts = options(args);
    let beta = discount.or(file.discount);
    let outcome = match (&file.model, beta) {
        (Model::Discrete(m), Some(beta)) => {
            let aug = discount_to_average(m, beta)?;
            run_solver(&aug.mdp, &opts, communicating).map(|rep| {
                let policy = restrict_policy(&aug, &rep.policy);
                let mut sol = Solution::from_report(&aug.mdp, &rep);
                sol.policy = m.policy_labels(&policy).iter().map(|s| s.to_string()).collect();
                sol.extra.push(("discount".into(), format!("{beta}")));
                match recover_discounted_values(&aug, &rep) {
                    Ok(v) => sol.values = Some(("v".into(), v)),
                    Err(_) => {
                        sol.values = None;
                        sol.extra.push(("values".into(), "not recovered on branching trees".into()));
                    }
                }
                sol
            })
        }
        (Model::Discrete(m), None) => run_solver(m, &opts, communicating).map(|rep| Solution::from_report(m, &rep)),
        (Model::Continuous(ct), beta) => {
            if beta.is_some() {
                bail!("discounting applies to dtmdp models only");
            }
            let (m, lambda) = uniformize(ct)?;
            run_solver(&m, &opts, communicating).map(|rep| {
                let mut sol = Solution::from_report(&m, &rep);
                sol.values = Some(("h*".into(), continuous_relative_costs(&rep.h_star, lambda)));
                sol.extra.push(("lambda".into(), format!("{lambda}")));
                sol
            })
        }
    };
    match outcome {
        Ok(sol) => {
            print_solution(&sol, format);
            Ok(Status::Ok)
        }
        Err(SolveError::MaxIterExceeded { max_iter, trace }) => {
            print_trace_only(&trace, format);
            eprintln!("error: no convergence within {max_iter} iterations");
            Ok(Status::NoConvergence)
        }
        Err(SolveError::NotRecurrent(class)) if class.is_communicating() => {
            bail!("model is {class}; rerun with --communicating")
        }
        Err(e) => Err(e.into()),
    }
}

fn average_model(file: ModelFile) -> Result<Mdp> {
    Ok(match (file.model, file.discount) {
        (Model::Discrete(m), None) => m,
        (Model::Discrete(m), Some(beta)) => discount_to_average(&m, beta)?.mdp,
        (Model::Continuous(ct), _) => uniformize(&ct)?.0,
    })
}

fn compare(input: &Path, args: &SolverArgs, fault: f64) -> Result<Status> {
    let m = average_model(load(input)?)?;
    let class = m.classify();
    if let ChainClass::NotCommunicating { .. } = class {
        bail!("model is {class}");
    }
    let recurrent = class == ChainClass::Recurrent;
    let mut rows = Vec::new();
    for v in RootVariant::ALL {
        let opts = options(args).with_variant(v);
        let start = Instant::now();
        let res = run_solver(&m, &opts, !recurrent);
        let elapsed = start.elapsed();
        rows.push(match res {
            Ok(r) => CompareRow::done(format!("skip-free/{v}"), r.g_star + fault, r.iterations, elapsed),
            Err(SolveError::MaxIterExceeded { .. }) => return Ok(Status::NoConvergence),
            Err(e) => return Err(e.into()),
        });
    }
    let oracle_row = |name: &str, f: &dyn Fn() -> Result<skipfree::reference::OracleReport, OracleError>| {
        let start = Instant::now();
        let res = f();
        let elapsed = start.elapsed();
        match res {
            Ok(r) => CompareRow::done(name.to_string(), r.g_star, r.iterations, elapsed),
            Err(e) => CompareRow::skipped(name.to_string(), e.to_string()),
        }
    };
    rows.push(oracle_row("policy-iteration", &|| policy_iteration_average(&m)));
    rows.push(oracle_row("relative-value-iteration", &|| relative_value_iteration(&m, args.tol, args.max_iter)));
    rows.push(oracle_row("enumeration", &|| enumerate_policies(&m, !recurrent)));

    let agree_tol = args.tol.max(1e-9);
    let reference = rows[0].g.expect("skip-free row present");
    let agree = rows.iter().filter_map(|r| r.g).all(|g| (g - reference).abs() <= agree_tol * (1.0 + reference.abs()));
    print_compare(&rows);
    if agree {
        Ok(Status::Ok)
    } else {
        eprintln!("error: methods disagree beyond {agree_tol:e}");
        Ok(Status::Disagreement)
    }
}

fn transform(input: &Path, discount: Option<f64>, to_discrete: bool, output: Option<PathBuf>) -> Result<Status> {
    let file = load(input)?;
    let result = if to_discrete {
        let Model::Continuous(ct) = &file.model else { bail!("--uniformize needs a ctmdp model") };
        ModelFile { model: Model::Discrete(uniformize(ct)?.0), discount: file.discount }
    } else {
        let Some(beta) = discount.or(file.discount) else { bail!("nothing to do: give --discount or --uniformize") };
        let Model::Discrete(m) = &file.model else { bail!("--discount needs a dtmdp model") };
        ModelFile::from(discount_to_average(m, beta)?.mdp)
    };
    write_out(&emit_model(&result), output)?;
    Ok(Status::Ok)
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(|s| s.trim().parse::<f64>().with_context(|| format!("{key}: bad number {s:?}")))
        .collect()
}

fn queue_spec(pairs: &[String]) -> Result<QueueSpec<f64>> {
    let (mut k, mut m) = (None, None);
    let (mut lambda, mut mu, mut cost) = (None, vec![0.6, 1.4], None);
    for pair in pairs {
        let (key, value) = pair.split_once('=').with_context(|| format!("expected KEY=VALUE, got {pair:?}"))?;
        match key {
            "K" => k = Some(value.parse::<usize>().context("K")?),
            "M" => m = Some(value.parse::<usize>().context("M")?),
            "lambda" => lambda = Some(parse_list(key, value)?),
            "mu" => mu = parse_list(key, value)?,
            "cost" => cost = Some(parse_list(key, value)?),
            other => bail!("unknown queue parameter {other:?}"),
        }
    }
    let (Some(k), Some(m)) = (k, m) else { bail!("--queue needs K=<classes> and M=<capacity>") };
    let lambda = match lambda {
        Some(l) if l.len() == 1 => vec![l[0]; k],
        Some(l) => l,
        None => vec![0.4 / k.max(1) as f64; k],
    };
    let labels: Vec<String> = match mu.len() {
        2 => vec!["slow".into(), "fast".into()],
        n => (0..n).map(|a| format!("s{a}")).collect(),
    };
    let cost = cost.unwrap_or_else(|| (0..mu.len()).map(|a| a as f64 * 1.5).collect());
    if cost.len() != mu.len() {
        bail!("cost needs one value per service rate");
    }
    Ok(QueueSpec::new(k, m, lambda, labels, vec![mu; k]).with_service_costs(cost))
}

#[allow(clippy::too_many_arguments)]
fn gen(
    source: &GenSource,
    seed: u64,
    states: usize,
    actions: usize,
    chain: bool,
    communicating: bool,
    ctmdp: bool,
    output: Option<PathBuf>,
) -> Result<Status> {
    let file = if let Some(pairs) = &source.queue {
        ModelFile::from(make_multiclass_queue(&queue_spec(pairs)?)?.ct)
    } else {
        let class = if communicating { InstanceClass::Communicating } else { InstanceClass::Recurrent };
        let spec = if chain {
            RandomSpec::chain(states).with_actions(actions).with_class(class)
        } else {
            RandomSpec { depth: 3, branching: 3, max_states: states, actions_per_state: actions, class }
        };
        if ctmdp {
            ModelFile::from(random_ct_skip_free(seed, &spec)?)
        } else {
            ModelFile::from(random_skip_free(seed, &spec)?)
        }
    };
    write_out(&emit_model(&file), output)?;
    Ok(Status::Ok)
}
