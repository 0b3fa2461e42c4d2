use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nalgebra::DMatrix;
use serde_json::{json, Value};
use tai_core::deep::fit_classifier;
use tai_core::dp::{dp_perturb, DpParams};
use tai_core::io::{
    load_classifier, load_labeled_csv, load_labels_csv, load_matrix_csv, save_classifier, to_json_string,
    write_matrix_csv, Report,
};
use tai_core::leakage::estimate_leakage;
use tai_core::linalg::select_rows;
use tai_core::pipeline::{run_tai, TaiConfig, TaiInputs};
use tai_core::Error;

#[derive(Parser)]
#[command(name = "tai", version)]
#[command(about = "Privacy-leakage, interpretability and transferability experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the information leaked by X about T
    Leakage {
        /// Observed samples, one per row
        #[arg(long)]
        x: PathBuf,
        /// Target samples, row-aligned with X
        #[arg(long)]
        t: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// JSON destination; stdout when omitted
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Release a differentially private copy of a matrix
    Dp {
        #[arg(long = "in")]
        input: PathBuf,
        /// Perturbed CSV destination
        #[arg(long)]
        out: PathBuf,
        /// Privacy budget; `inf` disables the noise
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        delta: f64,
        /// Sensitivity
        #[arg(long)]
        d: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the full private transfer learning pipeline
    Tai {
        /// Labeled source samples (label in the last column)
        #[arg(long)]
        source: PathBuf,
        /// Private variables, row-aligned with the source file
        #[arg(long)]
        private: PathBuf,
        /// Interpretable parameters, row-aligned with the source file
        #[arg(long)]
        interp: PathBuf,
        /// Labeled target samples (label in the last column)
        #[arg(long)]
        target_labeled: PathBuf,
        #[arg(long)]
        target_unlabeled: PathBuf,
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        d: f64,
        /// True labels of the unlabeled targets, used for accuracies only
        #[arg(long)]
        eval_labels: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of layers of the source autoencoders
        #[arg(long, default_value_t = 5)]
        source_layers: usize,
        #[arg(long, default_value_t = 5000)]
        measure_cap: usize,
        /// Include wall-clock stage timings (makes output run-dependent)
        #[arg(long)]
        timings: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a classifier on labeled samples and save it
    Fit {
        /// Labeled samples (label in the last column)
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Subspace dimension; min(20, p) when omitted
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long, default_value_t = 0.5)]
        r_max: f64,
        #[arg(long, default_value_t = 5)]
        layers: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Label every row of a matrix with a saved classifier
    Classify {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn emit(doc: &Value, out: Option<&Path>) -> Result<(), Error> {
    let text = to_json_string(doc);
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn run(cmd: Command) -> Result<(), Error> {
    match cmd {
        Command::Leakage { x, t, seed, out } => {
            let x = load_matrix_csv(&x)?;
            let t = load_matrix_csv(&t)?;
            let est = estimate_leakage(&x, &t, seed)?;
            emit(&Report::Leakage { estimate: &est, seed }.to_json(), out.as_deref())
        }
        Command::Dp {
            input,
            out,
            epsilon,
            delta,
            d,
            seed,
        } => {
            let params = DpParams::new(d, epsilon, delta)?;
            let y = load_matrix_csv(&input)?;
            let y_plus = dp_perturb(&y, &params, seed);
            write_matrix_csv(&y_plus, &out)?;
            let doc = json!({
                "rows": y_plus.nrows(),
                "cols": y_plus.ncols(),
                "epsilon": tai_core::io::json_number(epsilon),
                "delta": tai_core::io::json_number(delta),
                "d": tai_core::io::json_number(d),
                "seed": seed,
            });
            emit(&doc, None)
        }
        Command::Tai {
            source,
            private,
            interp,
            target_labeled,
            target_unlabeled,
            epsilon,
            delta,
            d,
            eval_labels,
            seed,
            source_layers,
            measure_cap,
            timings,
            out,
        } => {
            let src = load_labeled_csv(&source)?;
            // side information follows the source file's row order
            let order = src.class_major_order();
            let private = aligned(&load_matrix_csv(&private)?, &order, "private")?;
            let interp = aligned(&load_matrix_csv(&interp)?, &order, "interp")?;
            let tgt = load_labeled_csv(&target_labeled)?;
            let unlabeled = load_matrix_csv(&target_unlabeled)?;
            let labels = eval_labels.map(load_labels_csv).transpose()?;
            let mut cfg = TaiConfig::new(DpParams::new(d, epsilon, delta)?);
            cfg.source_layers = source_layers;
            cfg.measure_sample_cap = measure_cap;
            let inputs = TaiInputs {
                source: &src.classes,
                private: &private,
                interpretable: &interp,
                target_labeled: &tgt.classes,
                target_unlabeled: &unlabeled,
                eval_labels: labels.as_deref(),
            };
            let report = run_tai(&inputs, &cfg, seed)?;
            let doc = Report::Tai {
                report: &report,
                config: &cfg,
                seed,
                timings,
            }
            .to_json();
            emit(&doc, out.as_deref())
        }
        Command::Fit {
            train,
            model,
            dim,
            r_max,
            layers,
            seed,
        } => {
            let data = load_labeled_csv(&train)?;
            let n = dim.unwrap_or_else(|| data.dim().min(20));
            let classifier = fit_classifier(&data.classes, n, r_max, layers, seed)?;
            save_classifier(&classifier, &model)?;
            let cells: Vec<usize> = classifier.per_class().iter().map(|c| c.members().len()).collect();
            let doc = json!({
                "classes": classifier.num_classes(),
                "dim": classifier.dim(),
                "subspace_dim": n,
                "layers": layers,
                "cells": cells,
                "seed": seed,
            });
            emit(&doc, None)
        }
        Command::Classify { model, input, out } => {
            let classifier = load_classifier(&model)?;
            let y = load_matrix_csv(&input)?;
            let labels = classifier.classify_batch(&y)?;
            emit(&json!({ "labels": labels }), out.as_deref())
        }
    }
}

fn aligned(m: &DMatrix<f64>, order: &[usize], what: &str) -> Result<DMatrix<f64>, Error> {
    if m.nrows() != order.len() {
        return Err(Error::Schema(format!(
            "--{what} has {} rows but the source file has {}",
            m.nrows(),
            order.len()
        )));
    }
    Ok(select_rows(m, order))
}

fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::Version { .. } => 4,
        _ if e.is_input_error() => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
