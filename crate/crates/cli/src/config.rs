//! Flat `key = value` run configuration shared by config files, flags and
//! manifests. Each subcommand declares its keys; anything else is rejected.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Arg, ArgAction, ArgMatches};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cmd {
    Train,
    Attack,
    Evaluate,
    Analyze,
    SynthData,
    IngestData,
}

pub const ALL: [Cmd; 6] = [
    Cmd::Train,
    Cmd::Attack,
    Cmd::Evaluate,
    Cmd::Analyze,
    Cmd::SynthData,
    Cmd::IngestData,
];

#[derive(Debug, Clone, Copy)]
pub struct KeySpec {
    pub name: &'static str,
    pub default: Option<&'static str>,
    pub help: &'static str,
    /// Accepts several values; stored comma-joined.
    pub list: bool,
}

const fn key(name: &'static str, default: Option<&'static str>, help: &'static str) -> KeySpec {
    KeySpec {
        name,
        default,
        help,
        list: false,
    }
}

const fn list(name: &'static str, help: &'static str) -> KeySpec {
    KeySpec {
        name,
        default: None,
        help,
        list: true,
    }
}

const OUT: KeySpec = key("out", None, "output directory");
const SEED: KeySpec = key("seed", Some("0"), "root seed for every random stream");

const DATA: [KeySpec; 7] = [
    key(
        "data",
        Some("synth"),
        "`synth` or a corpus directory of <class>/*.wav",
    ),
    key("classes", Some("10"), "synthetic corpus: number of classes"),
    key("per-class", Some("60"), "synthetic corpus: clips per class"),
    key("data-seed", Some("1"), "synthetic corpus seed"),
    key(
        "test-fraction",
        Some("auto"),
        "test split fraction (auto: 0.2 synthetic, 0.05 corpus)",
    ),
    key(
        "target-rate",
        Some("8000"),
        "corpus directory: resample rate in Hz",
    ),
    key(
        "clip-secs",
        Some("1.0"),
        "corpus directory: clip length in seconds",
    ),
];

const TRAIN: [KeySpec; 6] = [
    key(
        "model",
        Some("audionet-mini"),
        "architecture: audionet-mini|speccrnn-mini",
    ),
    key("epochs", Some("20"), "training epochs"),
    key("batch-size", Some("32"), "minibatch size"),
    key("lr", Some("1.0"), "AdaDelta step multiplier"),
    key("rho", Some("0.95"), "AdaDelta decay"),
    key("eps", Some("1e-6"), "AdaDelta stability term"),
];

const ATTACK: [KeySpec; 14] = [
    key("model", None, "checkpoint to attack"),
    key("domain", Some("freq"), "search domain: wav|freq"),
    key(
        "period",
        Some("240"),
        "frequency domain base period in samples",
    ),
    key("snr", Some("10"), "SNR target in dB"),
    key(
        "snr-convention",
        Some("power"),
        "power (10^(-snr/10)) or amplitude (10^(-snr/20))",
    ),
    key(
        "target-foolrate",
        Some("0.8"),
        "stop once the fool rate on S reaches this",
    ),
    key("max-iter", Some("30"), "iteration cap"),
    key("lr", Some("1.0"), "step size on the aggregated candidate"),
    key("momentum", Some("0.9"), "momentum decay"),
    key("batch-size", Some("64"), "unfooled clips per iteration"),
    key("deepfool-steps", Some("50"), "per-clip attack step limit"),
    key("overshoot", Some("0.02"), "per-clip overshoot"),
    key(
        "candidates",
        Some("10"),
        "competing classes per per-clip step",
    ),
    key(
        "s-size",
        Some("all"),
        "clips of the train split used as S (all or a count)",
    ),
];

const EVALUATE: [KeySpec; 7] = [
    key("sweep", None, "snr|shift|transfer|channel"),
    list("models", "checkpoints to evaluate against"),
    list(
        "attacks",
        "attack artifacts (.afa) or directories holding them",
    ),
    key(
        "split",
        Some("test"),
        "dataset split to evaluate on: train|test|all",
    ),
    key(
        "grid",
        Some("32"),
        "shift sweep: number of steps between 0 and N",
    ),
    list("snr-grid", "snr sweep: dB values (default -5..30 step 2.5)"),
    key(
        "channel",
        Some("suburb"),
        "channel sweep: clean|suburb|commons",
    ),
];

const ANALYZE: [KeySpec; 9] = [
    list("sphere", "three equal-norm attack artifacts"),
    list("angles", "updates CSVs, one per run"),
    list("composition", "attack artifacts or WAV files"),
    list("convergence", "history CSVs, one per run"),
    key("model", None, "sphere: checkpoint to evaluate"),
    key("split", Some("test"), "sphere: dataset split"),
    key("phi-steps", Some("72"), "sphere: polar grid points"),
    key("theta-steps", Some("72"), "sphere: azimuth grid points"),
    key(
        "max-clips",
        Some("all"),
        "sphere: evaluate on at most this many clips",
    ),
];

const SYNTH: [KeySpec; 4] = [
    key("classes", Some("10"), "number of classes"),
    key("per-class", Some("60"), "clips per class"),
    key("data-seed", Some("1"), "corpus seed"),
    key("test-fraction", Some("0.2"), "test split fraction"),
];

const INGEST: [KeySpec; 4] = [
    key("root", None, "corpus directory of <class>/*.wav"),
    key("target-rate", Some("8000"), "resample rate in Hz"),
    key("clip-secs", Some("1.0"), "clip length in seconds"),
    key("test-fraction", Some("0.05"), "test split fraction"),
];

impl Cmd {
    pub fn name(&self) -> &'static str {
        match self {
            Cmd::Train => "train",
            Cmd::Attack => "attack",
            Cmd::Evaluate => "evaluate",
            Cmd::Analyze => "analyze",
            Cmd::SynthData => "synth-data",
            Cmd::IngestData => "ingest-data",
        }
    }

    pub fn about(&self) -> &'static str {
        match self {
            Cmd::Train => "Train a classifier and write a checkpoint plus per-epoch metrics",
            Cmd::Attack => "Build a universal perturbation against a checkpoint",
            Cmd::Evaluate => "Run SNR, shift, transfer or channel sweeps over attacks",
            Cmd::Analyze => "Sphere scans, update angles, spectral composition and convergence",
            Cmd::SynthData => "Write the synthetic keyword corpus as WAV files",
            Cmd::IngestData => "Normalize a <class>/*.wav corpus to a fixed rate and length",
        }
    }

    pub fn keys(&self) -> Vec<KeySpec> {
        let mut keys = vec![OUT, SEED];
        match self {
            Cmd::Train => {
                keys.extend(TRAIN);
                keys.extend(DATA);
            }
            Cmd::Attack => {
                keys.extend(ATTACK);
                keys.extend(DATA);
            }
            Cmd::Evaluate => {
                keys.extend(EVALUATE);
                keys.extend(DATA);
            }
            Cmd::Analyze => {
                keys.extend(ANALYZE);
                keys.extend(DATA);
            }
            Cmd::SynthData => keys.extend(SYNTH),
            Cmd::IngestData => keys.extend(INGEST),
        }
        keys
    }

    pub fn from_name(name: &str) -> Option<Cmd> {
        ALL.into_iter().find(|c| c.name() == name)
    }

    pub fn clap(&self) -> clap::Command {
        let mut c = clap::Command::new(self.name()).about(self.about()).arg(
            Arg::new("config")
                .long("config")
                .value_name("FILE")
                .help("key = value file (a manifest works too); flags override it"),
        );
        for k in self.keys() {
            let mut help = k.help.to_string();
            if let Some(d) = k.default {
                help.push_str(&format!(" [default: {d}]"));
            }
            let mut arg = Arg::new(k.name).long(k.name).help(help);
            arg = if k.list {
                arg.num_args(1..)
                    .action(ArgAction::Append)
                    .value_name("VALUE")
            } else {
                arg.num_args(1).value_name("VALUE")
            };
            c = c.arg(arg);
        }
        c
    }
}

/// Fully resolved configuration of one command.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub cmd: Cmd,
    values: BTreeMap<String, String>,
}

/// Parses `key = value` lines. Blank lines and `#` comments are skipped.
pub fn parse_config_text(text: &str, origin: &Path) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            anyhow!(
                "{}:{}: expected `key = value`, got `{line}`",
                origin.display(),
                i + 1
            )
        })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

impl RunConfig {
    /// File values first, then flags, then defaults for anything unset.
    pub fn resolve(cmd: Cmd, matches: &ArgMatches) -> Result<Self> {
        let specs = cmd.keys();
        let mut values = BTreeMap::new();
        if let Some(path) = matches.get_one::<String>("config") {
            let path = Path::new(path);
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            for (k, v) in parse_config_text(&text, path)? {
                if k == "command" {
                    if v != cmd.name() {
                        bail!("{} is a `{v}` config, not `{}`", path.display(), cmd.name());
                    }
                    continue;
                }
                if !specs.iter().any(|s| s.name == k) {
                    bail!("{}: unknown key `{k}` for `{}`", path.display(), cmd.name());
                }
                if values.insert(k.clone(), v).is_some() {
                    bail!("{}: key `{k}` given twice", path.display());
                }
            }
        }
        for s in &specs {
            if let Some(vals) = matches.get_many::<String>(s.name) {
                let vals: Vec<&str> = vals.map(String::as_str).collect();
                values.insert(s.name.to_string(), vals.join(","));
            }
        }
        for s in &specs {
            if let (false, Some(d)) = (values.contains_key(s.name), s.default) {
                values.insert(s.name.to_string(), d.to_string());
            }
        }
        Ok(Self { cmd, values })
    }

    pub fn opt(&self, key: &str) -> Option<&str> {
        self.values
            .get(key)
            .map(String::as_str)
            .filter(|v| !v.is_empty())
    }

    pub fn str(&self, key: &str) -> Result<&str> {
        self.opt(key)
            .ok_or_else(|| anyhow!("`{}` needs --{key}", self.cmd.name()))
    }

    pub fn parse<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self.str(key)?;
        raw.parse::<T>().map_err(|e| anyhow!("--{key} {raw}: {e}"))
    }

    /// Comma-separated values; empty when unset.
    pub fn list(&self, key: &str) -> Vec<String> {
        self.opt(key)
            .map(|v| {
                v.split(',')
                    .map(|s| s.trim().to_string())
                    .filter(|s| !s.is_empty())
                    .collect()
            })
            .unwrap_or_default()
    }

    pub fn path(&self, key: &str) -> Result<PathBuf> {
        Ok(PathBuf::from(self.str(key)?))
    }

    /// `None` for the literal `all`.
    pub fn count_or_all(&self, key: &str) -> Result<Option<usize>> {
        match self.str(key)? {
            "all" => Ok(None),
            _ => Ok(Some(self.parse(key)?)),
        }
    }

    /// `key = value` lines in key order, preceded by `command`.
    pub fn to_text(&self) -> String {
        let mut s = format!("command = {}\n", self.cmd.name());
        for (k, v) in &self.values {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s
    }

    /// The configuration without the output directory, for artifact echoes.
    pub fn echo(&self) -> String {
        let mut s = format!("command = {}\n", self.cmd.name());
        for (k, v) in self.values.iter().filter(|(k, _)| k.as_str() != "out") {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s
    }
}
