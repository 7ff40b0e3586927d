//! Command-line front end: estimate ATTs on CSV panels, run the
//! model-selection ladder, and drive Monte Carlo simulations from plain
//! config files. All outputs land under `--out` with fixed names so runs
//! are easy to diff; identical seeds and inputs give byte-identical files.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use didint::dataset::{load_csv, load_schedule_csv, CsvSchema, PanelDataset};
use didint::design::CovariateForm;
use didint::estimators::{Adjustment, EstimatorSpec, Weighting};
use didint::inference::{cluster_jackknife, randomization_inference, InferenceResult};
use didint::selection::{export_trends, select_form_with, SelectionTrace};
use didint::simulation::{degree_spec, run_mc, Degree, DgpSpec, McSummary, ViolationAxis};
use didint::svg::{LineChart, Series};
use didint::Error;

const EXIT_OK: u8 = 0;
const EXIT_INPUT: u8 = 2;
const EXIT_ESTIMATION: u8 = 3;

/// Parses arguments, runs the requested command, and maps errors to exit
/// codes: 2 for input/config problems, 3 for estimation infeasibility.
pub fn run(args: &[String]) -> u8 {
    init_thread_pool();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // clap handles --help/--version printing itself.
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Estimate(a) => cmd_estimate(&a),
        Command::Select(a) => cmd_select(&a),
        Command::Simulate(a) => cmd_simulate(&a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_input_error() {
                EXIT_INPUT
            } else {
                EXIT_ESTIMATION
            }
        }
    }
}

fn init_thread_pool() {
    if let Ok(v) = std::env::var("DIDINT_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

#[derive(Parser)]
#[command(
    name = "didint",
    about = "Difference-in-differences estimation with flexible covariate adjustment"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the ATT on a CSV panel and write report.json + cells.csv.
    Estimate(EstimateArgs),
    /// Walk the covariate functional-form ladder and export trend figures.
    Select(SelectArgs),
    /// Run Monte Carlo simulations from a DGP config file.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct SchemaArgs {
    /// Group (state) column name.
    #[arg(long, default_value = "group")]
    group_col: String,
    /// Integer period column name.
    #[arg(long, default_value = "time")]
    time_col: String,
    /// Outcome column name.
    #[arg(long, default_value = "outcome")]
    outcome_col: String,
    /// Comma-separated covariate column names.
    #[arg(long, default_value = "")]
    covariates: String,
    /// First-treated-period column (`never` for untreated groups); pass
    /// `none` when the schedule comes only from --schedule.
    #[arg(long, default_value = "first_treated")]
    treat_col: String,
    /// Optional unit-id column.
    #[arg(long)]
    unit_col: Option<String>,
    /// Sidecar schedule CSV (`group,first_treated`).
    #[arg(long)]
    schedule: Option<PathBuf>,
}

impl SchemaArgs {
    fn load(&self, data: &Path) -> Result<PanelDataset, Error> {
        let covariate_cols: Vec<String> = self
            .covariates
            .split(',')
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect();
        let schema = CsvSchema {
            group_col: self.group_col.clone(),
            time_col: self.time_col.clone(),
            outcome_col: self.outcome_col.clone(),
            covariate_cols,
            treatment_col: match self.treat_col.as_str() {
                "none" | "" => None,
                name => Some(name.to_string()),
            },
            unit_col: self.unit_col.clone(),
        };
        let sidecar = match &self.schedule {
            Some(path) => Some(load_schedule_csv(path)?),
            None => None,
        };
        load_csv(data, &schema, sidecar.as_ref())
    }
}

#[derive(Args)]
struct EstimateArgs {
    /// Input CSV file.
    data: PathBuf,
    /// Estimator: didint | twfe | twfe-mod | csdid | imputation | flex
    /// (or a fully qualified name like didint-state-varying).
    #[arg(long, default_value = "didint")]
    estimator: String,
    /// Covariate form for didint / twfe-mod.
    #[arg(long, default_value = "two-way")]
    form: String,
    /// Adjustment for csdid: none | outcome-regression | ipw | doubly-robust.
    #[arg(long, default_value = "doubly-robust")]
    adjustment: String,
    /// Cell aggregation weights: cell-size | equal.
    #[arg(long, default_value = "cell-size")]
    weights: String,
    /// Add a leave-one-group-out jackknife standard error.
    #[arg(long)]
    jackknife: bool,
    /// Add a randomization-inference p-value.
    #[arg(long)]
    ri: bool,
    /// Permutation count for --ri.
    #[arg(long, default_value_t = 499)]
    nperm: usize,
    /// Random seed (randomization inference draws).
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[command(flatten)]
    schema: SchemaArgs,
}

fn build_spec(args: &EstimateArgs) -> Result<EstimatorSpec, Error> {
    let weighting: Weighting = args.weights.parse()?;
    match args.estimator.as_str() {
        "didint" => Ok(EstimatorSpec::Didint {
            form: args.form.parse()?,
            weighting,
        }),
        "twfe" => Ok(EstimatorSpec::Twfe {
            interacted: false,
            form: CovariateForm::None,
        }),
        "twfe-mod" => Ok(EstimatorSpec::Twfe {
            interacted: true,
            form: args.form.parse()?,
        }),
        "csdid" => Ok(EstimatorSpec::Csdid {
            adjustment: args.adjustment.parse::<Adjustment>()?,
        }),
        other => other.parse(),
    }
}

fn cmd_estimate(args: &EstimateArgs) -> Result<(), Error> {
    let data = args.schema.load(&args.data)?;
    let spec = build_spec(args)?;
    let mut report = spec.run(&data)?;

    let mut inference = InferenceResult::default();
    if args.jackknife {
        inference = inference.merge(cluster_jackknife(&data, &spec)?);
    }
    if args.ri {
        inference = inference.merge(randomization_inference(&data, &spec, args.nperm, args.seed)?);
    }
    report.se = inference.se_jackknife;
    report.p_randomization = inference.p_randomization;
    report.diagnostics.extend(inference.warnings.iter().cloned());

    ensure_dir(&args.out)?;
    write_text(&args.out.join("report.json"), &report.to_json())?;
    report.write_cells_csv(&args.out.join("cells.csv"))?;
    if args.jackknife || args.ri {
        let json = serde_json::to_string_pretty(&inference).expect("inference serialization");
        write_text(&args.out.join("inference.json"), &json)?;
    }
    println!(
        "{}: overall ATT = {:.6}{}{}",
        report.estimator_name,
        report.overall_att,
        report
            .se
            .map(|s| format!(", jackknife SE = {s:.6}"))
            .unwrap_or_default(),
        report
            .p_randomization
            .map(|p| format!(", randomization p = {p:.4}"))
            .unwrap_or_default(),
    );
    Ok(())
}

#[derive(Args)]
struct SelectArgs {
    /// Input CSV file.
    data: PathBuf,
    /// Plausibility level for the pre-trend test.
    #[arg(long, default_value_t = 0.10)]
    alpha: f64,
    /// Skip the two-one-way rung of the ladder.
    #[arg(long)]
    no_two_one_way: bool,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[command(flatten)]
    schema: SchemaArgs,
}

fn cmd_select(args: &SelectArgs) -> Result<(), Error> {
    let data = args.schema.load(&args.data)?;
    let trace: SelectionTrace = select_form_with(&data, args.alpha, !args.no_two_one_way)?;

    ensure_dir(&args.out)?;
    for step in &trace.steps {
        let name = step.form.to_string();
        export_trends(
            &data,
            step.form,
            &args.out.join(format!("trends_{name}.csv")),
            &args.out.join(format!("trends_{name}.svg")),
        )?;
    }
    write_text(&args.out.join("selection.json"), &trace.to_json())?;
    match trace.chosen {
        Some(form) => println!("{form}"),
        None => println!("no plausible pre-trends"),
    }
    Ok(())
}

#[derive(Args)]
struct SimulateArgs {
    /// DGP config file (plain key = value sections).
    #[arg(long)]
    spec: PathBuf,
    /// Monte Carlo replicates.
    #[arg(long, default_value_t = 200)]
    reps: usize,
    /// Comma-separated estimator names.
    #[arg(long, default_value = "twfe,didint-two-way")]
    estimators: String,
    /// Master seed; replicates use independent streams of it.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Also sweep the violation degree along this axis
    /// (state | time | two-way) and write bias_table.csv.
    #[arg(long)]
    degree_sweep: Option<String>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

fn cmd_simulate(args: &SimulateArgs) -> Result<(), Error> {
    let text = std::fs::read_to_string(&args.spec).map_err(|e| Error::Io {
        path: args.spec.display().to_string(),
        source: e,
    })?;
    let spec = DgpSpec::from_config_str(&text)?;
    let estimators: Vec<EstimatorSpec> = args
        .estimators
        .split(',')
        .map(|s| s.trim().parse())
        .collect::<Result<_, _>>()?;

    let summary = run_mc(&spec, &estimators, args.reps, args.seed)?;
    ensure_dir(&args.out)?;
    write_text(&args.out.join("mc.json"), &summary.to_json())?;
    write_kde_outputs(&args.out, &summary)?;
    for e in &summary.estimators {
        println!(
            "{}: mean ATT = {:.6}, sd = {:.6}, |bias| = {:.6} ({} ok, {} failed)",
            e.estimator, e.mean_att, e.sd, e.absolute_bias, e.n_ok, e.n_failed
        );
    }

    if let Some(axis_raw) = &args.degree_sweep {
        let axis: ViolationAxis = axis_raw.parse()?;
        let mut rows = Vec::new();
        for degree in Degree::ALL {
            let sweep_spec = degree_spec(&spec, axis, degree);
            let sweep = run_mc(&sweep_spec, &estimators, args.reps, args.seed)?;
            rows.push((degree, sweep));
        }
        write_bias_table(&args.out.join("bias_table.csv"), &estimators, &rows)?;
        println!("degree sweep ({axis_raw}): bias_table.csv written");
    }
    Ok(())
}

fn write_kde_outputs(out: &Path, summary: &McSummary) -> Result<(), Error> {
    let mut chart = LineChart {
        title: "ATT estimate densities".into(),
        x_label: "ATT estimate".into(),
        y_label: "density".into(),
        series: Vec::new(),
        vertical_rules: vec![summary.true_att],
    };
    for e in &summary.estimators {
        let path = out.join(format!("kde_{}.csv", e.estimator));
        let mut text = String::from("x,density\n");
        for (x, d) in e.kde_grid.iter().zip(&e.kde_density) {
            text.push_str(&format!("{x},{d}\n"));
        }
        write_text(&path, &text)?;
        if !e.kde_grid.is_empty() {
            chart.series.push(Series {
                label: e.estimator.clone(),
                points: e.kde_grid.iter().copied().zip(e.kde_density.iter().copied()).collect(),
            });
        }
    }
    write_text(&out.join("densities.svg"), &chart.render())
}

fn write_bias_table(
    path: &Path,
    estimators: &[EstimatorSpec],
    rows: &[(Degree, McSummary)],
) -> Result<(), Error> {
    let mut text = String::from("degree,gap");
    for e in estimators {
        text.push(',');
        text.push_str(&e.name());
    }
    text.push('\n');
    for (degree, summary) in rows {
        text.push_str(&format!("{},{}", degree, degree.gap()));
        for e in estimators {
            let bias = summary
                .estimator(&e.name())
                .map(|s| s.absolute_bias)
                .unwrap_or(f64::NAN);
            text.push_str(&format!(",{bias}"));
        }
        text.push('\n');
    }
    write_text(path, &text)
}

fn ensure_dir(dir: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.display().to_string(),
        source: e,
    })
}

fn write_text(path: &Path, text: &str) -> Result<(), Error> {
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}
