//! Experiment configuration.
//!
//! The file format is flat `key = value` text. `[section]` headers prefix the
//! keys that follow, so `[noise]` then `epsilon = 0.4` and a top-level
//! `noise.epsilon = 0.4` are the same entry. `#` starts a comment. Values may
//! be wrapped in double quotes. Every key can be overridden with
//! `key=value` strings (the CLI's `--override`).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::coordinator::FederationConfig;
use crate::localnode::Method;
use crate::noise::{NoiseKind, NoiseSpec};
use crate::numkit::Activation;
use crate::{Error, Result};

/// Parsed `section.key → value` pairs, in key order.
pub type KeyValues = BTreeMap<String, String>;

pub fn parse_key_values(text: &str) -> Result<KeyValues> {
    let mut out = KeyValues::new();
    let mut section = String::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        let at = |msg: String| Error::config(format!("line {}", lineno + 1), msg);
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| at(format!("unterminated section header `{line}`")))?
                .trim();
            if !is_key(name) {
                return Err(at(format!("bad section name `{name}`")));
            }
            section = name.to_string();
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| at(format!("expected `key = value`, got `{line}`")))?;
        let k = k.trim();
        if !is_key(k) {
            return Err(at(format!("bad key `{k}`")));
        }
        let key = if section.is_empty() {
            k.to_string()
        } else {
            format!("{section}.{k}")
        };
        let value = unquote(v.trim()).map_err(at)?;
        if out.insert(key.clone(), value).is_some() {
            return Err(at(format!("duplicate key `{key}`")));
        }
    }
    Ok(out)
}

fn strip_comment(line: &str) -> &str {
    let mut in_quotes = false;
    for (i, ch) in line.char_indices() {
        match ch {
            '"' => in_quotes = !in_quotes,
            '#' if !in_quotes => return &line[..i],
            _ => {}
        }
    }
    line
}

fn unquote(v: &str) -> std::result::Result<String, String> {
    if let Some(inner) = v.strip_prefix('"') {
        return inner
            .strip_suffix('"')
            .filter(|s| !s.contains('"'))
            .map(str::to_string)
            .ok_or_else(|| format!("unbalanced quotes in `{v}`"));
    }
    if v.contains('"') {
        return Err(format!("stray quote in `{v}`"));
    }
    Ok(v.to_string())
}

fn is_key(k: &str) -> bool {
    !k.is_empty()
        && k.split('.').all(|part| {
            !part.is_empty()
                && part
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
        })
}

/// Apply `key=value` override strings on top of parsed entries.
pub fn apply_overrides(kv: &mut KeyValues, overrides: &[String]) -> Result<()> {
    for o in overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| Error::config(o.clone(), "override must look like key=value"))?;
        let k = k.trim();
        if !is_key(k) {
            return Err(Error::config(k, "bad override key"));
        }
        let v = unquote(v.trim()).map_err(|m| Error::config(k, m))?;
        kv.insert(k.to_string(), v);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSpec {
    Blobs {
        classes: usize,
        per_class: usize,
        test_per_class: usize,
        dim: usize,
        spread: f64,
    },
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
        /// Use a seeded random subset of this many training rows.
        train_subset: Option<usize>,
        test_subset: Option<usize>,
    },
}

/// Full description of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub noise: NoiseSpec,
    pub federation: FederationConfig,
    pub method: Method,
    /// Master seed; the noise stream is derived from it as well.
    pub seed: u64,
    /// Use `noise.epsilon` as the small-loss `tau` (`train.tau = auto`).
    pub tau_follows_epsilon: bool,
    pub output: Option<PathBuf>,
    /// Write measured wall time into the CSV; off by default so that output
    /// bytes depend only on the configuration.
    pub record_timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let mut federation = FederationConfig {
            num_clients: 20,
            clients_per_round: 5,
            rounds: 100,
            hidden: 64,
            activation: Activation::Silu,
            ..FederationConfig::default()
        };
        // Small shards need small batches and several epochs before local
        // models can overfit their noise at all.
        federation.hp.local_epochs = 10;
        federation.hp.batch_size = 10;
        federation.hp.learning_rate = 0.5;
        federation.hp.t_pl = 20;
        federation.hp.lambda_cen_warmup_rounds = 20;
        federation.hp.tau = NoiseSpec::default().epsilon;
        ExperimentConfig {
            dataset: DatasetSpec::Blobs {
                classes: 4,
                per_class: 500,
                test_per_class: 250,
                dim: 10,
                spread: 0.25,
            },
            noise: NoiseSpec::default(),
            federation,
            method: Method::Proposed,
            seed: 0,
            tau_follows_epsilon: true,
            output: None,
            record_timing: false,
        }
    }
}

struct Reader {
    kv: KeyValues,
}

impl Reader {
    fn take(&mut self, key: &str) -> Option<String> {
        self.kv.remove(key)
    }

    fn parse<T: std::str::FromStr>(&mut self, key: &str, into: &mut T) -> Result<()> {
        if let Some(v) = self.take(key) {
            *into = v
                .parse()
                .map_err(|_| Error::config(key, format!("cannot parse `{v}`")))?;
        }
        Ok(())
    }

    fn flag(&mut self, key: &str, into: &mut bool) -> Result<()> {
        if let Some(v) = self.take(key) {
            *into = match v.as_str() {
                "true" | "yes" | "1" | "on" => true,
                "false" | "no" | "0" | "off" => false,
                _ => return Err(Error::config(key, format!("expected a boolean, got `{v}`"))),
            };
        }
        Ok(())
    }

    fn path(&mut self, key: &str) -> Result<PathBuf> {
        self.take(key)
            .map(PathBuf::from)
            .ok_or_else(|| Error::config(key, "required for idx datasets"))
    }
}

impl ExperimentConfig {
    pub fn from_text(text: &str, overrides: &[String]) -> Result<Self> {
        let mut kv = parse_key_values(text)?;
        apply_overrides(&mut kv, overrides)?;
        Self::from_key_values(kv)
    }

    pub fn from_file(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_text(&text, overrides)
    }

    pub fn from_key_values(kv: KeyValues) -> Result<Self> {
        let mut r = Reader { kv };
        let mut cfg = ExperimentConfig::default();

        let kind = r.take("dataset.kind").unwrap_or_else(|| "blobs".into());
        cfg.dataset = match kind.as_str() {
            "blobs" => {
                let (mut classes, mut per_class, mut test_per_class, mut dim, mut spread) =
                    (4usize, 500usize, 250usize, 10usize, 0.25f64);
                r.parse("dataset.classes", &mut classes)?;
                r.parse("dataset.per_class", &mut per_class)?;
                r.parse("dataset.test_per_class", &mut test_per_class)?;
                r.parse("dataset.dim", &mut dim)?;
                r.parse("dataset.spread", &mut spread)?;
                DatasetSpec::Blobs {
                    classes,
                    per_class,
                    test_per_class,
                    dim,
                    spread,
                }
            }
            "idx" => {
                let mut train_subset = None::<usize>;
                let mut test_subset = None::<usize>;
                if let Some(v) = r.take("dataset.train_subset") {
                    train_subset = Some(v.parse().map_err(|_| {
                        Error::config("dataset.train_subset", format!("cannot parse `{v}`"))
                    })?);
                }
                if let Some(v) = r.take("dataset.test_subset") {
                    test_subset = Some(v.parse().map_err(|_| {
                        Error::config("dataset.test_subset", format!("cannot parse `{v}`"))
                    })?);
                }
                DatasetSpec::Idx {
                    train_images: r.path("dataset.train_images")?,
                    train_labels: r.path("dataset.train_labels")?,
                    test_images: r.path("dataset.test_images")?,
                    test_labels: r.path("dataset.test_labels")?,
                    train_subset,
                    test_subset,
                }
            }
            other => {
                return Err(Error::config(
                    "dataset.kind",
                    format!("unknown dataset kind `{other}` (blobs | idx)"),
                ))
            }
        };
        if matches!(cfg.dataset, DatasetSpec::Idx { .. }) {
            for k in ["classes", "per_class", "test_per_class", "dim", "spread"] {
                let key = format!("dataset.{k}");
                if r.kv.contains_key(&key) {
                    return Err(Error::config(key, "only valid for blobs datasets"));
                }
            }
        }

        if let Some(v) = r.take("noise.kind") {
            cfg.noise.kind = NoiseKind::parse(&v)
                .ok_or_else(|| Error::config("noise.kind", format!("unknown kind `{v}`")))?;
        }
        r.parse("noise.epsilon", &mut cfg.noise.epsilon)?;
        r.parse("noise.client_variance", &mut cfg.noise.client_variance)?;
        r.parse("noise.groups", &mut cfg.noise.groups)?;
        r.flag("noise.per_class_mode", &mut cfg.noise.per_class_mode)?;

        let f = &mut cfg.federation;
        r.parse("federation.num_clients", &mut f.num_clients)?;
        r.parse("federation.clients_per_round", &mut f.clients_per_round)?;
        r.parse("federation.rounds", &mut f.rounds)?;
        r.parse(
            "federation.centroid_weight_floor",
            &mut f.centroid_weight_floor,
        )?;
        r.parse("model.hidden", &mut f.hidden)?;
        if let Some(v) = r.take("model.activation") {
            f.activation = Activation::parse(&v).ok_or_else(|| {
                Error::config("model.activation", format!("unknown activation `{v}`"))
            })?;
        }

        let hp = &mut f.hp;
        r.parse("train.lambda_cen", &mut hp.lambda_cen)?;
        r.parse("train.lambda_e", &mut hp.lambda_e)?;
        r.parse("train.t_pl", &mut hp.t_pl)?;
        r.parse("train.r_horizon", &mut hp.r_horizon)?;
        let mut tau_is_auto = true;
        if let Some(v) = r.take("train.tau") {
            if v != "auto" {
                hp.tau = v
                    .parse()
                    .map_err(|_| Error::config("train.tau", format!("cannot parse `{v}`")))?;
                tau_is_auto = false;
            }
        }
        r.parse("train.local_epochs", &mut hp.local_epochs)?;
        r.parse("train.batch_size", &mut hp.batch_size)?;
        r.parse("train.learning_rate", &mut hp.learning_rate)?;
        r.parse("train.momentum", &mut hp.momentum)?;
        r.parse("train.weight_decay", &mut hp.weight_decay)?;
        let mut warmup = None::<usize>;
        if let Some(v) = r.take("train.lambda_cen_warmup_rounds") {
            warmup = Some(v.parse().map_err(|_| {
                Error::config(
                    "train.lambda_cen_warmup_rounds",
                    format!("cannot parse `{v}`"),
                )
            })?);
        }
        hp.lambda_cen_warmup_rounds = warmup.unwrap_or(hp.t_pl);
        r.parse("train.lr_decay_every", &mut hp.lr_decay_every)?;
        r.parse("train.lr_decay_factor", &mut hp.lr_decay_factor)?;

        if let Some(v) = r.take("experiment.method") {
            cfg.method = Method::parse(&v).ok_or_else(|| {
                Error::config(
                    "experiment.method",
                    format!(
                        "unknown method `{v}` (one of {})",
                        Method::ALL.map(Method::name).join(", ")
                    ),
                )
            })?;
        }
        r.parse("experiment.seed", &mut cfg.seed)?;
        cfg.output = r.take("experiment.output").map(PathBuf::from);
        r.flag("experiment.record_timing", &mut cfg.record_timing)?;

        if let Some(k) = r.kv.keys().next() {
            return Err(Error::config(k.clone(), "unknown key"));
        }
        cfg.tau_follows_epsilon = tau_is_auto;
        let cfg = cfg.resolved();
        cfg.validate()?;
        Ok(cfg)
    }

    /// Copy with the derived settings filled in: the noise seed from the
    /// master seed and, when following, `tau` from `epsilon`.
    pub fn resolved(&self) -> Self {
        let mut cfg = self.clone();
        cfg.noise.seed = cfg.seed;
        if cfg.tau_follows_epsilon {
            cfg.federation.hp.tau = cfg.noise.epsilon;
        }
        cfg
    }

    pub fn classes(&self) -> Option<usize> {
        match self.dataset {
            DatasetSpec::Blobs { classes, .. } => Some(classes),
            DatasetSpec::Idx { .. } => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let DatasetSpec::Blobs {
            classes,
            per_class,
            dim,
            spread,
            ..
        } = self.dataset
        {
            if classes < 2 {
                return Err(Error::config("dataset.classes", "need at least 2 classes"));
            }
            if per_class == 0 {
                return Err(Error::config("dataset.per_class", "must be >= 1"));
            }
            if dim == 0 {
                return Err(Error::config("dataset.dim", "must be >= 1"));
            }
            if !spread.is_finite() || spread < 0.0 {
                return Err(Error::config("dataset.spread", "must be finite and >= 0"));
            }
            if self.federation.num_clients > classes * per_class {
                return Err(Error::config(
                    "federation.num_clients",
                    format!(
                        "more clients than the {} training rows",
                        classes * per_class
                    ),
                ));
            }
        }
        self.noise.validate(self.classes().unwrap_or(10))?;
        self.federation.validate()
    }

    /// Canonical text form; parsing it back yields the same configuration.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        match &self.dataset {
            DatasetSpec::Blobs {
                classes,
                per_class,
                test_per_class,
                dim,
                spread,
            } => {
                kv("dataset.kind", "blobs".into());
                kv("dataset.classes", classes.to_string());
                kv("dataset.per_class", per_class.to_string());
                kv("dataset.test_per_class", test_per_class.to_string());
                kv("dataset.dim", dim.to_string());
                kv("dataset.spread", spread.to_string());
            }
            DatasetSpec::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
                train_subset,
                test_subset,
            } => {
                kv("dataset.kind", "idx".into());
                kv(
                    "dataset.train_images",
                    format!("\"{}\"", train_images.display()),
                );
                kv(
                    "dataset.train_labels",
                    format!("\"{}\"", train_labels.display()),
                );
                kv(
                    "dataset.test_images",
                    format!("\"{}\"", test_images.display()),
                );
                kv(
                    "dataset.test_labels",
                    format!("\"{}\"", test_labels.display()),
                );
                if let Some(n) = train_subset {
                    kv("dataset.train_subset", n.to_string());
                }
                if let Some(n) = test_subset {
                    kv("dataset.test_subset", n.to_string());
                }
            }
        }
        let n = &self.noise;
        kv("noise.kind", n.kind.name().into());
        kv("noise.epsilon", n.epsilon.to_string());
        kv("noise.client_variance", n.client_variance.to_string());
        kv("noise.groups", n.groups.to_string());
        kv("noise.per_class_mode", n.per_class_mode.to_string());
        let f = &self.federation;
        kv("federation.num_clients", f.num_clients.to_string());
        kv(
            "federation.clients_per_round",
            f.clients_per_round.to_string(),
        );
        kv("federation.rounds", f.rounds.to_string());
        kv(
            "federation.centroid_weight_floor",
            f.centroid_weight_floor.to_string(),
        );
        kv("model.hidden", f.hidden.to_string());
        kv("model.activation", f.activation.name().into());
        let h = &f.hp;
        kv("train.lambda_cen", h.lambda_cen.to_string());
        kv("train.lambda_e", h.lambda_e.to_string());
        kv("train.t_pl", h.t_pl.to_string());
        kv("train.r_horizon", h.r_horizon.to_string());
        if self.tau_follows_epsilon {
            kv("train.tau", "auto".into());
        } else {
            kv("train.tau", h.tau.to_string());
        }
        kv("train.local_epochs", h.local_epochs.to_string());
        kv("train.batch_size", h.batch_size.to_string());
        kv("train.learning_rate", h.learning_rate.to_string());
        kv("train.momentum", h.momentum.to_string());
        kv("train.weight_decay", h.weight_decay.to_string());
        kv(
            "train.lambda_cen_warmup_rounds",
            h.lambda_cen_warmup_rounds.to_string(),
        );
        kv("train.lr_decay_every", h.lr_decay_every.to_string());
        kv("train.lr_decay_factor", h.lr_decay_factor.to_string());
        kv("experiment.method", self.method.name().into());
        kv("experiment.seed", self.seed.to_string());
        if let Some(o) = &self.output {
            kv("experiment.output", format!("\"{}\"", o.display()));
        }
        kv("experiment.record_timing", self.record_timing.to_string());
        s
    }
}
