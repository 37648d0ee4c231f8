//! Experiment config: a flat `key = value` text format with `[section]` headers.
//!
//! ```text
//! # comment
//! name = shapes-unsup
//! out = runs/shapes-unsup
//!
//! [dataset]
//! source = shapes            # shapes | idx
//! classes = square,disc,cross
//! n_per_class = 300
//!
//! [train]
//! steps = 1500
//! ```
//!
//! Top-level keys: `name`, `out`. Sections and keys:
//!
//! * `[dataset]` `source`, `classes`, `n_per_class`, `height`, `width`,
//!   `scale_min`, `scale_max`, `jitter_min`, `jitter_max`, `seed`,
//!   `images`, `labels`, `test_fraction`
//! * `[model]` `k`, `d_z`, `d_f`, `g_hidden`, `d_hidden`, `e_hidden`, `normalize_f`
//! * `[train]` `seed`, `steps`, `sigma`, `prior`, `beta1`, `beta2`, `tau`,
//!   `gan_mode`, `batch_g`, `batch_d`, `batch_e`, `d_updates`,
//!   `label_fraction`, `anchor_negatives`, `lr`, `lr_g`, `lr_d`, `lr_e`,
//!   `adam_beta1`, `adam_beta2`, `adam_eps`, `snapshot_every`
//! * `[eval]` `runs`, `restarts`, `max_iter`, `selection`, `grid_columns`
//!
//! Unknown or repeated keys are errors. Relative paths resolve against the
//! config file's directory; without `out`, runs go to `runs/<name>` under the
//! working directory.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::{ShapeConfig, ShapeKind};
use crate::error::{CdganError, Result};
use crate::eval::{EvalConfig, Selection};
use crate::losses::GanMode;
use crate::train::TrainConfig;

#[derive(Clone, Debug, PartialEq)]
pub enum DatasetSource {
    Shapes(ShapeConfig),
    Idx { images: PathBuf, labels: PathBuf },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub out: PathBuf,
    pub dataset: DatasetSource,
    pub test_fraction: f64,
    /// Number of classes; defaults to the dataset's.
    pub k: Option<usize>,
    /// `model.pixels` and `model.k` are filled in once the dataset is known.
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub grid_columns: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: "experiment".into(),
            out: PathBuf::from("runs/experiment"),
            dataset: DatasetSource::Shapes(ShapeConfig::default()),
            test_fraction: 0.2,
            k: None,
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            grid_columns: 8,
        }
    }
}

struct Entry<'a> {
    section: &'a str,
    key: &'a str,
    value: &'a str,
    line: usize,
}

struct Parser<'a> {
    path: &'a str,
    section_lines: Vec<(&'a str, usize)>,
}

impl Parser<'_> {
    fn err(&self, line: usize, msg: impl Into<String>) -> CdganError {
        CdganError::Config {
            path: self.path.to_string(),
            line,
            msg: msg.into(),
        }
    }

    fn section_line(&self, name: &str) -> usize {
        self.section_lines
            .iter()
            .find(|(s, _)| *s == name)
            .map_or(1, |&(_, l)| l)
    }
}

fn tokenize<'a>(text: &'a str, p: &mut Parser<'a>) -> Result<Vec<Entry<'a>>> {
    const SECTIONS: [&str; 4] = ["dataset", "model", "train", "eval"];
    let mut entries = Vec::new();
    let mut section = "";
    let mut seen = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| p.err(line, "unterminated section header"))?
                .trim();
            if !SECTIONS.contains(&name) {
                return Err(p.err(line, format!("unknown section [{name}]")));
            }
            if p.section_lines.iter().any(|(s, _)| *s == name) {
                return Err(p.err(line, format!("section [{name}] repeated")));
            }
            p.section_lines.push((name, line));
            section = name;
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| p.err(line, format!("expected `key = value`, found `{content}`")))?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() {
            return Err(p.err(line, "empty key"));
        }
        if !seen.insert((section, key)) {
            return Err(p.err(line, format!("key `{key}` repeated")));
        }
        entries.push(Entry {
            section,
            key,
            value,
            line,
        });
    }
    Ok(entries)
}

fn num<T: FromStr>(p: &Parser<'_>, e: &Entry<'_>) -> Result<T> {
    e.value
        .parse()
        .map_err(|_| p.err(e.line, format!("`{}`: cannot parse `{}`", e.key, e.value)))
}

fn list<T: FromStr>(p: &Parser<'_>, e: &Entry<'_>) -> Result<Vec<T>> {
    e.value
        .split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| p.err(e.line, format!("`{}`: cannot parse list item `{}`", e.key, s.trim())))
        })
        .collect()
}

fn boolean(p: &Parser<'_>, e: &Entry<'_>) -> Result<bool> {
    match e.value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        v => Err(p.err(e.line, format!("`{}`: expected true or false, found `{v}`", e.key))),
    }
}

fn resolve(base: &Path, value: &str) -> PathBuf {
    let p = PathBuf::from(value);
    if p.is_absolute() {
        p
    } else {
        base.join(p)
    }
}

impl ExperimentConfig {
    /// Reads and parses `path`; errors name the path and, for content errors, the line.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| CdganError::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, &path.display().to_string(), base)
    }

    pub fn parse(text: &str, origin: &str, base: &Path) -> Result<Self> {
        let mut p = Parser {
            path: origin,
            section_lines: Vec::new(),
        };
        let entries = tokenize(text, &mut p)?;
        let mut cfg = ExperimentConfig::default();
        let mut shapes = ShapeConfig::default();
        let mut source = "shapes";
        let (mut images, mut labels) = (None, None);
        let mut out = None;
        let mut lr_shared = None;
        let (mut lr_g, mut lr_d, mut lr_e) = (None, None, None);
        let t = &mut cfg.train;

        for e in &entries {
            match (e.section, e.key) {
                ("", "name") => cfg.name = e.value.to_string(),
                ("", "out") => out = Some(resolve(base, e.value)),

                ("dataset", "source") => {
                    source = match e.value {
                        "shapes" => "shapes",
                        "idx" => "idx",
                        v => return Err(p.err(e.line, format!("unknown dataset source `{v}` (shapes, idx)"))),
                    }
                }
                ("dataset", "classes") => {
                    shapes.classes = e
                        .value
                        .split(',')
                        .map(|s| {
                            ShapeKind::parse(s.trim())
                                .ok_or_else(|| p.err(e.line, format!("unknown shape `{}`", s.trim())))
                        })
                        .collect::<Result<_>>()?
                }
                ("dataset", "n_per_class") => shapes.n_per_class = num(&p, e)?,
                ("dataset", "height") => shapes.height = num(&p, e)?,
                ("dataset", "width") => shapes.width = num(&p, e)?,
                ("dataset", "scale_min") => shapes.scale_range.0 = num(&p, e)?,
                ("dataset", "scale_max") => shapes.scale_range.1 = num(&p, e)?,
                ("dataset", "jitter_min") => shapes.jitter_range.0 = num(&p, e)?,
                ("dataset", "jitter_max") => shapes.jitter_range.1 = num(&p, e)?,
                ("dataset", "seed") => shapes.seed = num(&p, e)?,
                ("dataset", "images") => images = Some(resolve(base, e.value)),
                ("dataset", "labels") => labels = Some(resolve(base, e.value)),
                ("dataset", "test_fraction") => cfg.test_fraction = num(&p, e)?,

                ("model", "k") => cfg.k = Some(num(&p, e)?),
                ("model", "d_z") => t.model.d_z = num(&p, e)?,
                ("model", "d_f") => t.model.d_f = num(&p, e)?,
                ("model", "g_hidden") => t.model.g_hidden = list(&p, e)?,
                ("model", "d_hidden") => t.model.d_hidden = list(&p, e)?,
                ("model", "e_hidden") => t.model.e_hidden = list(&p, e)?,
                ("model", "normalize_f") => t.model.normalize_f = boolean(&p, e)?,

                ("train", "seed") => t.seed = num(&p, e)?,
                ("train", "steps") => t.steps = num(&p, e)?,
                ("train", "sigma") => t.sigma = num(&p, e)?,
                ("train", "prior") => {
                    t.pi = if e.value == "uniform" { None } else { Some(list(&p, e)?) }
                }
                ("train", "beta1") => t.weights.beta1 = num(&p, e)?,
                ("train", "beta2") => t.weights.beta2 = num(&p, e)?,
                ("train", "tau") => t.weights.tau = num(&p, e)?,
                ("train", "gan_mode") => {
                    t.gan_mode = match e.value {
                        "minimax" => GanMode::Minimax,
                        "non_saturating" => GanMode::NonSaturating,
                        v => {
                            return Err(p.err(e.line, format!("unknown gan_mode `{v}` (minimax, non_saturating)")))
                        }
                    }
                }
                ("train", "batch_g") => t.batch_g = num(&p, e)?,
                ("train", "batch_d") => t.batch_d = num(&p, e)?,
                ("train", "batch_e") => t.batch_e = num(&p, e)?,
                ("train", "d_updates") => t.d_updates = num(&p, e)?,
                ("train", "label_fraction") => t.label_fraction = num(&p, e)?,
                ("train", "anchor_negatives") => t.anchor_negatives = boolean(&p, e)?,
                ("train", "lr") => lr_shared = Some(num(&p, e)?),
                ("train", "lr_g") => lr_g = Some(num(&p, e)?),
                ("train", "lr_d") => lr_d = Some(num(&p, e)?),
                ("train", "lr_e") => lr_e = Some(num(&p, e)?),
                ("train", "adam_beta1") => {
                    let v = num(&p, e)?;
                    t.opt_g.beta1 = v;
                    t.opt_d.beta1 = v;
                    t.opt_e.beta1 = v;
                }
                ("train", "adam_beta2") => {
                    let v = num(&p, e)?;
                    t.opt_g.beta2 = v;
                    t.opt_d.beta2 = v;
                    t.opt_e.beta2 = v;
                }
                ("train", "adam_eps") => {
                    let v = num(&p, e)?;
                    t.opt_g.eps = v;
                    t.opt_d.eps = v;
                    t.opt_e.eps = v;
                }
                ("train", "snapshot_every") => t.snapshot_every = num(&p, e)?,

                ("eval", "runs") => cfg.eval.runs = num(&p, e)?,
                ("eval", "restarts") => cfg.eval.restarts = num(&p, e)?,
                ("eval", "max_iter") => cfg.eval.max_iter = num(&p, e)?,
                ("eval", "selection") => {
                    cfg.eval.selection = match e.value {
                        "per_metric" => Selection::PerMetric,
                        "per_run" => Selection::PerRun,
                        v => return Err(p.err(e.line, format!("unknown selection `{v}` (per_metric, per_run)"))),
                    }
                }
                ("eval", "grid_columns") => cfg.grid_columns = num(&p, e)?,

                ("", key) => return Err(p.err(e.line, format!("unknown top-level key `{key}`"))),
                (section, key) => return Err(p.err(e.line, format!("unknown key `{key}` in [{section}]"))),
            }
        }

        let t = &mut cfg.train;
        if let Some(lr) = lr_shared {
            t.opt_g.lr = lr;
            t.opt_d.lr = lr;
            t.opt_e.lr = lr;
        }
        t.opt_g.lr = lr_g.unwrap_or(t.opt_g.lr);
        t.opt_d.lr = lr_d.unwrap_or(t.opt_d.lr);
        t.opt_e.lr = lr_e.unwrap_or(t.opt_e.lr);

        let ds_line = p.section_line("dataset");
        cfg.dataset = match source {
            "shapes" => {
                if images.is_some() || labels.is_some() {
                    return Err(p.err(ds_line, "`images`/`labels` require `source = idx`"));
                }
                shapes.validate().map_err(|e| p.err(ds_line, e.to_string()))?;
                DatasetSource::Shapes(shapes)
            }
            _ => match (images, labels) {
                (Some(images), Some(labels)) => DatasetSource::Idx { images, labels },
                _ => return Err(p.err(ds_line, "`source = idx` needs both `images` and `labels`")),
            },
        };
        if !(cfg.test_fraction > 0.0 && cfg.test_fraction < 1.0) {
            return Err(p.err(ds_line, format!("test_fraction must lie in (0, 1), got {}", cfg.test_fraction)));
        }
        if let (Some(k), DatasetSource::Shapes(s)) = (cfg.k, &cfg.dataset) {
            if k != s.classes.len() {
                return Err(p.err(
                    p.section_line("model"),
                    format!("k = {k} but the dataset has {} classes", s.classes.len()),
                ));
            }
        }
        cfg.eval
            .validate()
            .map_err(|e| p.err(p.section_line("eval"), e.to_string()))?;
        if cfg.grid_columns == 0 {
            return Err(p.err(p.section_line("eval"), "grid_columns must be positive"));
        }
        cfg.out = out.unwrap_or_else(|| PathBuf::from("runs").join(&cfg.name));
        Ok(cfg)
    }

    /// Canonical text form listing every setting; parses back to an equal config.
    pub fn to_text(&self) -> String {
        fn join<T: ToString>(v: &[T]) -> String {
            v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
        }
        let t = &self.train;
        let mut s = String::new();
        let w = &mut s;
        let _ = writeln!(w, "name = {}", self.name);
        // the default output directory is relative to the working directory, not the config
        if self.out != Path::new("runs").join(&self.name) {
            let _ = writeln!(w, "out = {}", self.out.display());
        }
        let _ = writeln!(w, "\n[dataset]");
        match &self.dataset {
            DatasetSource::Shapes(c) => {
                let names: Vec<&str> = c.classes.iter().map(|k| k.name()).collect();
                let _ = writeln!(w, "source = shapes");
                let _ = writeln!(w, "classes = {}", names.join(","));
                let _ = writeln!(w, "n_per_class = {}", c.n_per_class);
                let _ = writeln!(w, "height = {}", c.height);
                let _ = writeln!(w, "width = {}", c.width);
                let _ = writeln!(w, "scale_min = {}", c.scale_range.0);
                let _ = writeln!(w, "scale_max = {}", c.scale_range.1);
                let _ = writeln!(w, "jitter_min = {}", c.jitter_range.0);
                let _ = writeln!(w, "jitter_max = {}", c.jitter_range.1);
                let _ = writeln!(w, "seed = {}", c.seed);
            }
            DatasetSource::Idx { images, labels } => {
                let _ = writeln!(w, "source = idx");
                let _ = writeln!(w, "images = {}", images.display());
                let _ = writeln!(w, "labels = {}", labels.display());
            }
        }
        let _ = writeln!(w, "test_fraction = {}", self.test_fraction);
        let _ = writeln!(w, "\n[model]");
        if let Some(k) = self.k {
            let _ = writeln!(w, "k = {k}");
        }
        let _ = writeln!(w, "d_z = {}", t.model.d_z);
        let _ = writeln!(w, "d_f = {}", t.model.d_f);
        let _ = writeln!(w, "g_hidden = {}", join(&t.model.g_hidden));
        let _ = writeln!(w, "d_hidden = {}", join(&t.model.d_hidden));
        let _ = writeln!(w, "e_hidden = {}", join(&t.model.e_hidden));
        let _ = writeln!(w, "normalize_f = {}", t.model.normalize_f);
        let _ = writeln!(w, "\n[train]");
        let _ = writeln!(w, "seed = {}", t.seed);
        let _ = writeln!(w, "steps = {}", t.steps);
        let _ = writeln!(w, "sigma = {}", t.sigma);
        match &t.pi {
            Some(pi) => {
                let _ = writeln!(w, "prior = {}", join(pi));
            }
            None => {
                let _ = writeln!(w, "prior = uniform");
            }
        }
        let _ = writeln!(w, "beta1 = {}", t.weights.beta1);
        let _ = writeln!(w, "beta2 = {}", t.weights.beta2);
        let _ = writeln!(w, "tau = {}", t.weights.tau);
        let mode = match t.gan_mode {
            GanMode::Minimax => "minimax",
            GanMode::NonSaturating => "non_saturating",
        };
        let _ = writeln!(w, "gan_mode = {mode}");
        let _ = writeln!(w, "batch_g = {}", t.batch_g);
        let _ = writeln!(w, "batch_d = {}", t.batch_d);
        let _ = writeln!(w, "batch_e = {}", t.batch_e);
        let _ = writeln!(w, "d_updates = {}", t.d_updates);
        let _ = writeln!(w, "label_fraction = {}", t.label_fraction);
        let _ = writeln!(w, "anchor_negatives = {}", t.anchor_negatives);
        let _ = writeln!(w, "lr_g = {}", t.opt_g.lr);
        let _ = writeln!(w, "lr_d = {}", t.opt_d.lr);
        let _ = writeln!(w, "lr_e = {}", t.opt_e.lr);
        let _ = writeln!(w, "adam_beta1 = {}", t.opt_g.beta1);
        let _ = writeln!(w, "adam_beta2 = {}", t.opt_g.beta2);
        let _ = writeln!(w, "adam_eps = {}", t.opt_g.eps);
        let _ = writeln!(w, "snapshot_every = {}", t.snapshot_every);
        let _ = writeln!(w, "\n[eval]");
        let _ = writeln!(w, "runs = {}", self.eval.runs);
        let _ = writeln!(w, "restarts = {}", self.eval.restarts);
        let _ = writeln!(w, "max_iter = {}", self.eval.max_iter);
        let sel = match self.eval.selection {
            Selection::PerMetric => "per_metric",
            Selection::PerRun => "per_run",
        };
        let _ = writeln!(w, "selection = {sel}");
        let _ = writeln!(w, "grid_columns = {}", self.grid_columns);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ExperimentConfig> {
        ExperimentConfig::parse(text, "test.cfg", Path::new("/base"))
    }

    #[test]
    fn empty_config_is_defaults() {
        let cfg = parse("").unwrap();
        assert_eq!(cfg.train, TrainConfig::default());
        assert_eq!(cfg.out, PathBuf::from("runs/experiment"));
    }

    #[test]
    fn keys_apply() {
        let cfg = parse(
            "name = x\n[dataset]\nclasses = disc, cross\njitter_max = 1.5\n[model]\ng_hidden = 32,16\n\
             [train]\nlr = 0.01\nlr_e = 0.5\nprior = 0.25,0.75\ngan_mode = minimax\n[eval]\nselection = per_run\n",
        )
        .unwrap();
        let DatasetSource::Shapes(s) = &cfg.dataset else { panic!() };
        assert_eq!(s.classes, vec![ShapeKind::Disc, ShapeKind::Cross]);
        assert_eq!(s.jitter_range.1, 1.5);
        assert_eq!(cfg.train.model.g_hidden, vec![32, 16]);
        assert_eq!((cfg.train.opt_g.lr, cfg.train.opt_d.lr, cfg.train.opt_e.lr), (0.01, 0.01, 0.5));
        assert_eq!(cfg.train.pi, Some(vec![0.25, 0.75]));
        assert_eq!(cfg.train.gan_mode, GanMode::Minimax);
        assert_eq!(cfg.eval.selection, Selection::PerRun);
        assert_eq!(cfg.out, PathBuf::from("runs/x"));
    }

    #[test]
    fn relative_paths_resolve_against_config_dir() {
        let cfg = parse("out = o\n[dataset]\nsource = idx\nimages = a.idx\nlabels = /abs/b.idx\n").unwrap();
        assert_eq!(cfg.out, PathBuf::from("/base/o"));
        assert_eq!(
            cfg.dataset,
            DatasetSource::Idx {
                images: "/base/a.idx".into(),
                labels: "/abs/b.idx".into()
            }
        );
    }

    #[test]
    fn errors_are_line_anchored() {
        let line_of = |text: &str| match parse(text) {
            Err(CdganError::Config { line, path, .. }) => {
                assert_eq!(path, "test.cfg");
                line
            }
            other => panic!("{other:?}"),
        };
        assert_eq!(line_of("name = a\n\n[train]\nsteps = many\n"), 4);
        assert_eq!(line_of("[train]\nbogus = 1\n"), 2);
        assert_eq!(line_of("[nope]\n"), 1);
        assert_eq!(line_of("[train]\nsteps = 1\nsteps = 2\n"), 3);
        assert_eq!(line_of("no equals sign\n"), 1);
        assert_eq!(line_of("\n[dataset]\nsource = idx\n"), 2);
        assert_eq!(line_of("[dataset]\njitter_max = 9\n"), 1);
        assert_eq!(line_of("[eval]\nruns = 0\n"), 1);
    }

    #[test]
    fn echo_round_trips() {
        let cfg = parse(
            "name = r\n[dataset]\nscale_min = 0.55\n[model]\nk = 3\n[train]\nsigma = 0.3\nlr_d = 0.0007\nprior = 0.2,0.3,0.5\n",
        )
        .unwrap();
        let again = parse(&cfg.to_text()).unwrap();
        assert_eq!(again, cfg);
        let idx = parse("[dataset]\nsource = idx\nimages = a\nlabels = b\n").unwrap();
        assert_eq!(parse(&idx.to_text()).unwrap(), idx);
    }
}
