use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::HarnessError;
use crate::cascade::DEFAULT_MAX_LEVEL;
use crate::dimension::{Aggregation, DEFAULT_QUANTUM_TOL};
use crate::fractal_sets::DigitRestrictionSet;
use crate::rng::derive_seeds;
use crate::weights::WeightModel;

/// Keys accepted in config files and their command line equivalents.
pub const KNOWN_KEYS: &[&str] = &[
    "model", "set", "seed", "seeds", "seeds_file", "replicates", "nmin", "nmax", "s", "zeta0", "r",
    "max_level", "tol", "gap_tol", "aggregation", "out_dir", "threads",
];

const DEFAULT_MODEL: &str = "family=lognormal sigma2=ln2";
const DEFAULT_SET: &str = "set=full";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Threads {
    #[default]
    Auto,
    Fixed(usize),
}

impl Threads {
    pub fn parse(raw: &str) -> Result<Self, HarnessError> {
        match raw.trim() {
            "" | "auto" => Ok(Threads::Auto),
            n => match n.parse::<usize>() {
                Ok(0) | Err(_) => Err(HarnessError::Config(format!("threads must be 'auto' or a positive integer, got '{n}'"))),
                Ok(k) => Ok(Threads::Fixed(k)),
            },
        }
    }

    /// Runs `f` inside a pool of the requested size.
    pub fn install<R: Send>(self, f: impl FnOnce() -> R + Send) -> Result<R, HarnessError> {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Threads::Fixed(n) = self {
            builder = builder.num_threads(n);
        }
        let pool = builder.build().map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?;
        Ok(pool.install(f))
    }
}

/// Raw `key=value` entries, later entries overriding earlier ones.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConfigEntries(BTreeMap<String, String>);

impl ConfigEntries {
    pub fn new() -> Self {
        Self::default()
    }

    /// Reads `key=value` lines; blank lines and `#` comments are skipped.
    /// Values may themselves contain `=` (`model = family=twopoint sigma=0.5`).
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let mut entries = Self::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| HarnessError::Config(format!("line {}: expected key=value", lineno + 1)))?;
            entries.set(key, value)?;
        }
        Ok(entries)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<(), HarnessError> {
        let key = key.trim().to_ascii_lowercase().replace('-', "_");
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(HarnessError::Config(format!("unknown config key '{key}'")));
        }
        self.0.insert(key, value.into().trim().to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    pub fn remove(&mut self, key: &str) {
        self.0.remove(key);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: WeightModel<f64>,
    pub set: DigitRestrictionSet,
    pub seeds: Vec<u64>,
    pub n_min: u32,
    pub n_max: u32,
    pub s_grid: Vec<f64>,
    pub zeta0: Option<f64>,
    /// Exponent for the negative moment diagnostic.
    pub r: f64,
    pub max_level: u32,
    /// Bracket width for the partition exponent search.
    pub tol: f64,
    /// Largest accepted gap between estimate and prediction.
    pub gap_tol: f64,
    pub aggregation: Aggregation,
    pub out_dir: Option<PathBuf>,
    pub threads: Threads,
}

fn number<T: std::str::FromStr>(entries: &ConfigEntries, key: &str, default: T) -> Result<T, HarnessError>
where
    T::Err: std::fmt::Display,
{
    match entries.get(key) {
        None => Ok(default),
        Some(raw) => raw.parse().map_err(|e| HarnessError::Config(format!("{key}: {e}"))),
    }
}

fn real(key: &str, raw: &str) -> Result<f64, HarnessError> {
    crate::weights::parse_real(raw).map_err(|e| HarnessError::Config(format!("{key}: {e}")))
}

/// Decimal or `0x`-prefixed hexadecimal.
pub fn parse_seed(raw: &str) -> Result<u64, HarnessError> {
    let raw = raw.trim();
    let parsed = match raw.strip_prefix("0x").or_else(|| raw.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16),
        None => raw.parse(),
    };
    parsed.map_err(|e| HarnessError::Config(format!("seed '{raw}': {e}")))
}

/// One seed per line or separated by commas/whitespace; `#` starts a comment.
pub fn parse_seed_list(text: &str) -> Result<Vec<u64>, HarnessError> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(|l| l.split(|c: char| c == ',' || c.is_whitespace()))
        .filter(|t| !t.is_empty())
        .map(parse_seed)
        .collect()
}

pub fn parse_aggregation(raw: &str) -> Result<Aggregation, HarnessError> {
    match raw.trim().replace('-', "_").as_str() {
        "mean_of_roots" => Ok(Aggregation::MeanOfRoots),
        "root_of_mean_slope" => Ok(Aggregation::RootOfMeanSlope),
        other => Err(HarnessError::Config(format!("unknown aggregation '{other}'"))),
    }
}

fn aggregation_name(a: Aggregation) -> &'static str {
    match a {
        Aggregation::MeanOfRoots => "mean_of_roots",
        Aggregation::RootOfMeanSlope => "root_of_mean_slope",
    }
}

impl ExperimentConfig {
    pub fn from_entries(entries: &ConfigEntries) -> Result<Self, HarnessError> {
        let model = WeightModel::parse(entries.get("model").unwrap_or(DEFAULT_MODEL))?;
        let set = DigitRestrictionSet::parse(entries.get("set").unwrap_or(DEFAULT_SET))?;

        let seeds = if let Some(list) = entries.get("seeds") {
            parse_seed_list(list)?
        } else if let Some(path) = entries.get("seeds_file") {
            let text = fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{path}: {e}")))?;
            parse_seed_list(&text)?
        } else {
            let master = entries.get("seed").map(parse_seed).transpose()?.unwrap_or(0);
            let count: usize = number(entries, "replicates", 1)?;
            derive_seeds(master, count)
        };
        if let Some(raw) = entries.get("replicates") {
            let count: usize = raw.parse().map_err(|e| HarnessError::Config(format!("replicates: {e}")))?;
            if count != seeds.len() {
                return Err(HarnessError::Config(format!(
                    "replicates = {count} but {} seeds were given",
                    seeds.len()
                )));
            }
        }

        let s_grid = match entries.get("s") {
            None => vec![0.5],
            Some(raw) => raw.split(',').map(|x| real("s", x)).collect::<Result<_, _>>()?,
        };
        let config = Self {
            model,
            set,
            seeds,
            n_min: number(entries, "nmin", 4)?,
            n_max: number(entries, "nmax", 12)?,
            s_grid,
            zeta0: entries.get("zeta0").map(|z| real("zeta0", z)).transpose()?,
            r: entries.get("r").map(|r| real("r", r)).transpose()?.unwrap_or(0.5),
            max_level: number(entries, "max_level", DEFAULT_MAX_LEVEL)?,
            tol: entries.get("tol").map(|t| real("tol", t)).transpose()?.unwrap_or(DEFAULT_QUANTUM_TOL),
            gap_tol: entries.get("gap_tol").map(|t| real("gap_tol", t)).transpose()?.unwrap_or(0.05),
            aggregation: parse_aggregation(entries.get("aggregation").unwrap_or("mean_of_roots"))?,
            out_dir: entries.get("out_dir").map(PathBuf::from),
            threads: Threads::parse(entries.get("threads").unwrap_or("auto"))?,
        };
        config.check()?;
        Ok(config)
    }

    pub fn check(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.seeds.is_empty() {
            return bad("at least one replicate is required".into());
        }
        let distinct: BTreeSet<u64> = self.seeds.iter().copied().collect();
        if distinct.len() != self.seeds.len() {
            return bad("seeds must be distinct".into());
        }
        if self.n_min > self.n_max {
            return bad(format!("nmin = {} exceeds nmax = {}", self.n_min, self.n_max));
        }
        if self.n_max > self.max_level {
            return bad(format!("nmax = {} exceeds max_level = {}", self.n_max, self.max_level));
        }
        if self.s_grid.is_empty() || self.s_grid.iter().any(|s| !s.is_finite()) {
            return bad("s grid must be non-empty and finite".into());
        }
        if !(self.tol > 0.0 && self.gap_tol >= 0.0) {
            return bad("tol must be positive and gap_tol non-negative".into());
        }
        Ok(())
    }

    /// Canonical entries of everything that affects results. Thread count and
    /// output location are left out, so they do not change the hash.
    pub fn canonical(&self) -> BTreeMap<String, String> {
        let join = |xs: &[f64]| xs.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",");
        let mut m = BTreeMap::new();
        m.insert("model".into(), self.model.to_string());
        m.insert("set".into(), self.set.to_string());
        m.insert("seeds".into(), self.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(","));
        m.insert("nmin".into(), self.n_min.to_string());
        m.insert("nmax".into(), self.n_max.to_string());
        m.insert("s".into(), join(&self.s_grid));
        if let Some(z) = self.zeta0 {
            m.insert("zeta0".into(), format!("{z:?}"));
        }
        m.insert("r".into(), format!("{:?}", self.r));
        m.insert("max_level".into(), self.max_level.to_string());
        m.insert("tol".into(), format!("{:?}", self.tol));
        m.insert("gap_tol".into(), format!("{:?}", self.gap_tol));
        m.insert("aggregation".into(), aggregation_name(self.aggregation).into());
        m
    }

    /// SHA-256 of the canonical entries, hex encoded.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        for (k, v) in self.canonical() {
            hasher.update(k.as_bytes());
            hasher.update(b"=");
            hasher.update(v.as_bytes());
            hasher.update(b"\n");
        }
        hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Canonical entries as a config file that reproduces this run.
    pub fn to_config_text(&self) -> String {
        self.canonical().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_file_with_comments() {
        let text = "# demo\nmodel = family=twopoint sigma=0.5\nset=set=digits b=2 allow=00,11\n\nseed=0x10 # master\nreplicates=3\nnmax=8\n";
        let cfg = ExperimentConfig::from_entries(&ConfigEntries::parse(text).unwrap()).unwrap();
        assert_eq!(cfg.seeds, derive_seeds(16, 3));
        assert_eq!(cfg.set.zeta0::<f64>(), 0.5);
        assert_eq!(cfg.n_max, 8);
        assert_eq!(cfg.threads, Threads::Auto);
    }

    #[test]
    fn explicit_seeds_and_validation() {
        let mut e = ConfigEntries::new();
        e.set("seeds", "1, 2 0x3").unwrap();
        assert_eq!(ExperimentConfig::from_entries(&e).unwrap().seeds, vec![1, 2, 3]);
        e.set("seeds", "1,1").unwrap();
        assert!(ExperimentConfig::from_entries(&e).is_err());
        e.set("seeds", "1").unwrap();
        e.set("nmax", "30").unwrap();
        assert!(ExperimentConfig::from_entries(&e).is_err());
        assert!(e.set("bogus", "1").is_err());
        assert!(ConfigEntries::parse("no equals sign").is_err());
        assert!(Threads::parse("0").is_err());
        assert_eq!(Threads::parse("4").unwrap(), Threads::Fixed(4));
    }

    #[test]
    fn hash_ignores_threads_and_roundtrips() {
        let mut e = ConfigEntries::new();
        e.set("replicates", "4").unwrap();
        e.set("threads", "2").unwrap();
        let a = ExperimentConfig::from_entries(&e).unwrap();
        e.set("threads", "auto").unwrap();
        e.set("out_dir", "/tmp/x").unwrap();
        let b = ExperimentConfig::from_entries(&e).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
        let again = ExperimentConfig::from_entries(&ConfigEntries::parse(&a.to_config_text()).unwrap()).unwrap();
        assert_eq!(again.hash(), a.hash());
        e.set("nmax", "10").unwrap();
        assert_ne!(ExperimentConfig::from_entries(&e).unwrap().hash(), a.hash());
    }
}
