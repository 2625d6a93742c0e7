use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use hiboost::benchmark::{
    run_benchmark, write_convergence_csv, write_curve_csv, BenchmarkData, BenchmarkPlan,
};
use hiboost::{
    fit, model_store, synthetic_splits, BoostConfig, CsvOptions, Dataset, LabelColumn, LossKind,
    Table,
};

use crate::args::{BaseArgs, BenchmarkArgs, CsvArgs, DataArgs, EvalArgs, PredictArgs, TrainArgs};

struct Splits {
    train: Dataset,
    valid: Option<Dataset>,
    test: Option<Dataset>,
}

fn csv_options(no_header: bool, row_limit: Option<usize>) -> CsvOptions {
    CsvOptions {
        has_header: !no_header,
        row_limit,
    }
}

fn load_labeled(path: &Path, csv: &CsvArgs, loss: LossKind) -> Result<Dataset> {
    let data = Dataset::load_csv(
        path,
        &LabelColumn::from_arg(&csv.label),
        &csv_options(csv.no_header, csv.row_limit),
    )
    .with_context(|| format!("loading {}", path.display()))?;
    if loss.is_classification() {
        data.check_binary_labels()
            .with_context(|| format!("labels in {}", path.display()))?;
    }
    Ok(data)
}

fn load_splits(args: &DataArgs, seed: u64, loss: LossKind) -> Result<Splits> {
    if let Some((rows, features)) = args.synthetic {
        let (train, valid, test) = synthetic_splits(rows, features, seed)?;
        return Ok(Splits {
            train,
            valid: Some(valid),
            test: Some(test),
        });
    }
    let Some(train) = &args.train else {
        bail!("either --train or --synthetic is required");
    };
    let load = |path: &Option<PathBuf>| {
        path.as_deref()
            .map(|p| load_labeled(p, &args.csv, loss))
            .transpose()
    };
    Ok(Splits {
        train: load_labeled(train, &args.csv, loss)?,
        valid: load(&args.valid)?,
        test: load(&args.test)?,
    })
}

fn base_config(base: &BaseArgs) -> BoostConfig {
    BoostConfig {
        loss: base.loss.into(),
        cubic_mode: base.cubic_mode.into(),
        fourth_order_formula: base.fourth_order_formula.into(),
        max_depth: base.max_depth,
        min_child_rows: base.min_child_rows,
        min_gain: base.min_gain,
        trust_alpha: base.trust_alpha,
        seed: base.seed,
        ..BoostConfig::default()
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

pub fn train(args: &TrainArgs) -> Result<()> {
    let config = BoostConfig {
        order: args.order,
        lambda: args.lambda,
        learning_rate: args.eta,
        n_rounds: args.rounds,
        early_stop_rounds: args.early_stop,
        ..base_config(&args.base)
    };
    config.validate()?;
    let splits = load_splits(&args.data, args.base.seed, config.loss)?;
    let (model, records) = fit(&splits.train, splits.valid.as_ref(), &config)?;
    model_store::save(&model, &args.model)
        .with_context(|| format!("saving {}", args.model.display()))?;
    if let Some(path) = &args.log {
        let mut out = create(path)?;
        write_convergence_csv(&mut out, &records)?;
        out.flush()?;
    }

    let mut stdout = io::stdout().lock();
    let time_ms = records.last().map_or(0.0, |r| r.cumulative_time_ms);
    writeln!(
        stdout,
        "trained {} trees in {time_ms:.1} ms",
        model.trees.len()
    )?;
    for (name, data) in [
        ("train", Some(&splits.train)),
        ("valid", splits.valid.as_ref()),
        ("test", splits.test.as_ref()),
    ] {
        if let Some(data) = data.filter(|d| d.n_rows() > 0) {
            let eval = model.evaluate(data)?;
            writeln!(
                stdout,
                "{name}: loss {:.6} accuracy {:.4}",
                eval.loss, eval.accuracy
            )?;
        }
    }
    Ok(())
}

pub fn predict(args: &PredictArgs) -> Result<()> {
    let model = model_store::load(&args.model)
        .with_context(|| format!("loading {}", args.model.display()))?;
    let mut table = Table::read(&args.data, &csv_options(args.no_header, args.row_limit))
        .with_context(|| format!("loading {}", args.data.display()))?;
    if let Some(label) = &args.label {
        table.take_column(&LabelColumn::from_arg(label))?;
    }
    let scores = if table.columns.is_empty() && model.feature_count == 0 {
        vec![model.base_score; table.n_rows]
    } else {
        model.predict_columns(&table.columns)?
    };

    let with_probability = model.config.loss.is_classification();
    let mut out: Box<dyn Write> = match &args.out {
        Some(path) => Box::new(create(path)?),
        None => Box::new(io::stdout().lock()),
    };
    writeln!(
        out,
        "{}",
        if with_probability {
            "score,probability"
        } else {
            "score"
        }
    )?;
    for score in scores {
        if with_probability {
            writeln!(out, "{score},{}", hiboost::loss::sigmoid(score))?;
        } else {
            writeln!(out, "{score}")?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn eval(args: &EvalArgs) -> Result<()> {
    let model = model_store::load(&args.model)
        .with_context(|| format!("loading {}", args.model.display()))?;
    let data = load_labeled(&args.data, &args.csv, model.config.loss)?;
    let eval = model.evaluate(&data)?;
    println!("loss {}", eval.loss);
    println!("accuracy {}", eval.accuracy);
    Ok(())
}

pub fn benchmark(args: &BenchmarkArgs) -> Result<()> {
    let base = base_config(&args.base);
    let splits = load_splits(&args.data, args.base.seed, base.loss)?;
    let Some(test) = &splits.test else {
        bail!("benchmark needs --test (or --synthetic) to measure accuracy");
    };
    let plan = BenchmarkPlan {
        orders: args.orders.clone(),
        lambdas: args.lambda_grid.clone(),
        etas: args.eta_grid.clone(),
        rounds: args.rounds,
        base,
        full_curves: args.full_curves,
        prune: args.prune,
        ..BenchmarkPlan::default()
    };
    let data = BenchmarkData {
        train: &splits.train,
        valid: splits.valid.as_ref(),
        test,
    };
    let report = run_benchmark(&data, &plan)?;
    print!("{}", report.to_table());

    if let Some(path) = &args.report {
        let mut out = create(path)?;
        report.write_csv(&mut out)?;
        out.flush()?;
    }
    if let Some(dir) = &args.curves_dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for result in &report.results {
            let name = format!(
                "order{}_lambda{}_eta{}.csv",
                result.order, result.lambda, result.eta
            );
            let mut out = create(&dir.join(name))?;
            write_curve_csv(&mut out, &result.curve)?;
            out.flush()?;
        }
    }
    Ok(())
}
