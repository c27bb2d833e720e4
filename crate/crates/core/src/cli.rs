//! `harmonize` command line.
//!
//! Exit codes: 0 success, 2 usage or invalid configuration, 3 file I/O,
//! 4 numerical failure.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};

use crate::backbone::{Backbone, Precision, WeightBank};
use crate::error::{Error, Result};
use crate::estimator::{predict_weights, StyleCategoryTable, StyleProbs};
use crate::harmonizer::{
    fit_inputs, run_pass, HarmonizeOptions, PassConfig, PassResult, DEFAULT_DILATION,
    DEFAULT_ITERATIONS, MAX_DIMENSION,
};
use crate::io::{load_image, load_mask, save_image};
use crate::losses::{LossBreakdown, LossWeights};
use crate::postprocess::{postprocess, PatchMatchParams};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PassSelect {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
    Both,
}

/// Harmonize a pasted element into a painting.
#[derive(Debug, Clone, Parser)]
#[command(name = "harmonize", version)]
pub struct RunConfig {
    /// Cut-and-paste composite (PNG).
    #[arg(long)]
    pub input: PathBuf,
    /// Mask of the pasted element, same size as the input; nonzero = inside.
    #[arg(long)]
    pub mask: PathBuf,
    /// Painting the element is pasted into (PNG, same size as the input).
    #[arg(long)]
    pub style: PathBuf,
    /// Output PNG.
    #[arg(long)]
    pub out: PathBuf,
    /// Backbone weights (NPHW file).
    #[arg(long)]
    pub weights: PathBuf,
    /// Style-class probabilities of the painting (JSON). Uniform when neither this nor --style-class is given.
    #[arg(long, conflicts_with = "style_class")]
    pub style_probs: Option<PathBuf>,
    /// Style class of the painting, e.g. "Cubism".
    #[arg(long)]
    pub style_class: Option<String>,
    /// Style category table (JSON) replacing the bundled one.
    #[arg(long)]
    pub style_table: Option<PathBuf>,
    /// Longest side after resizing.
    #[arg(long, default_value_t = MAX_DIMENSION, value_parser = positive)]
    pub size: usize,
    #[arg(long, default_value_t = DEFAULT_ITERATIONS)]
    pub iters1: usize,
    #[arg(long, default_value_t = DEFAULT_ITERATIONS)]
    pub iters2: usize,
    /// Which passes to run.
    #[arg(long, value_enum, default_value = "both")]
    pub pass: PassSelect,
    #[arg(long)]
    pub no_postprocess: bool,
    /// Mask dilation radius in pixels.
    #[arg(long, default_value_t = DEFAULT_DILATION)]
    pub dilate: usize,
    /// Seed of the post-process patch search.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Directory for intermediate results.
    #[arg(long)]
    pub debug_dir: Option<PathBuf>,
}

fn positive(s: &str) -> std::result::Result<usize, String> {
    match s.parse::<usize>() {
        Ok(v) if v > 0 => Ok(v),
        _ => Err(format!("expected a positive integer, got `{s}`")),
    }
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::NonFinite(_) => EXIT_NUMERICAL,
        e if e.is_io() => EXIT_IO,
        _ => EXIT_USAGE,
    }
}

/// Parses `argv` (program name first), runs the pipeline and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cfg = match RunConfig::try_parse_from(argv) {
        Ok(cfg) => cfg,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match execute(&cfg) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("harmonize: {e}");
            exit_code(&e)
        }
    }
}

fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "file not found"),
        ))
    }
}

fn check_paths(cfg: &RunConfig) -> Result<()> {
    let inputs = [&cfg.input, &cfg.mask, &cfg.style, &cfg.weights];
    for p in inputs
        .into_iter()
        .chain(&cfg.style_probs)
        .chain(&cfg.style_table)
    {
        require_file(p)?;
    }
    let parent = cfg.out.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = parent {
        if !dir.is_dir() {
            return Err(Error::io(
                dir,
                std::io::Error::new(
                    std::io::ErrorKind::NotFound,
                    "output directory does not exist",
                ),
            ));
        }
    }
    Ok(())
}

/// Runs the full pipeline described by `cfg`.
pub fn execute(cfg: &RunConfig) -> Result<()> {
    check_paths(cfg)?;
    let image = load_image(&cfg.input)?;
    let mask = load_mask(&cfg.mask)?;
    let painting = load_image(&cfg.style)?;
    let (image, mask, painting) = fit_inputs(&image, &mask, &painting, cfg.size)?;

    let backbone = Backbone::new(WeightBank::load(&cfg.weights)?, Precision::Single);
    let table = match &cfg.style_table {
        Some(p) => StyleCategoryTable::load(p)?,
        None => StyleCategoryTable::builtin(),
    };
    let probs = match (&cfg.style_probs, &cfg.style_class) {
        (Some(p), _) => StyleProbs::load(p)?,
        (None, Some(name)) => StyleProbs::one_hot(name),
        (None, None) => StyleProbs::uniform(&table),
    };
    let prediction = predict_weights(&painting, &probs, &table)?;
    let w = prediction.weights;
    eprintln!(
        "harmonize: tau={:.4} w_s={:.4} w_hist={:.4} w_tv={:.4e}",
        prediction.tau, w.style, w.histogram, w.tv
    );

    let layers: Vec<_> = backbone.bank().layer_names().collect();
    let cfg1 = PassConfig::pass1()
        .with_weights(LossWeights {
            style: w.style,
            histogram: 0.0,
            tv: 0.0,
        })
        .with_iterations(cfg.iters1)
        .fit_to_layers(&layers)?;
    let cfg2 = PassConfig::pass2()
        .with_weights(w)
        .with_iterations(cfg.iters2)
        .fit_to_layers(&layers)?;
    let options = HarmonizeOptions {
        dilation: cfg.dilate,
        ..HarmonizeOptions::default()
    };

    let mut passes: Vec<(usize, PassResult)> = Vec::new();
    let mut current = image.clone();
    if cfg.pass != PassSelect::Two {
        let r = run_pass(
            &current, &image, &mask, &painting, &cfg1, &backbone, &options,
        )?;
        report(1, &r);
        current = r.image.clone();
        passes.push((1, r));
    }
    if cfg.pass != PassSelect::One {
        let r = run_pass(
            &current, &image, &mask, &painting, &cfg2, &backbone, &options,
        )?;
        report(2, &r);
        current = r.image.clone();
        passes.push((2, r));
    }

    let output = if cfg.no_postprocess {
        current
    } else {
        let params = PatchMatchParams {
            seed: cfg.seed,
            ..PatchMatchParams::default()
        };
        postprocess(&current, &painting, &mask, &params)?
    };
    save_image(&output, &cfg.out)?;

    if let Some(dir) = &cfg.debug_dir {
        write_debug(dir, &passes)?;
    }
    Ok(())
}

fn report(pass: usize, r: &PassResult) {
    eprintln!(
        "harmonize: pass {pass}: {} iterations, loss {:.6e} -> {:.6e} ({:?})",
        r.report.iterations_run, r.report.initial_loss, r.report.final_loss, r.report.termination
    );
}

fn write_debug(dir: &Path, passes: &[(usize, PassResult)]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut csv = format!("pass,{}\n", LossBreakdown::CSV_HEADER);
    for (pass, r) in passes {
        save_image(&r.image, dir.join(format!("pass{pass}.png")))?;
        if let Some(reference) = r.mapping.reference {
            r.mapping
                .write_json(dir.join(format!("mapping_{reference}.json")))?;
        }
        for (i, b) in r.trace.iter().enumerate() {
            let _ = writeln!(csv, "{pass},{}", b.csv_record(i));
        }
    }
    let path = dir.join("loss_trace.csv");
    std::fs::write(&path, csv).map_err(|e| Error::io(&path, e))
}
