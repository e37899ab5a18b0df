//! Option values shared by the subcommands: list/range/grid parsing and the
//! `key=value` config file.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use pfgsim::repeater::{self, Generation};

/// Keys accepted in a config file.
pub const KNOWN_KEYS: [&str; 14] = [
    "d", "k", "p", "eta", "L", "spacing", "gen", "chain", "seed", "format", "out", "tol", "trace", "n_max",
];

/// Values read from a `key=value` file; `#` starts a comment.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut values = BTreeMap::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("config line {}: expected key=value, got {raw:?}", no + 1))?;
            let key = key.trim();
            if !KNOWN_KEYS.contains(&key) {
                return Err(format!("config line {}: unknown key {key:?}", no + 1));
            }
            values.insert(key.to_string(), value.trim().to_string());
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        Self::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// Flag value if given, else the config value parsed with `FromStr`, else `default`.
    pub fn resolve<T>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, String>
    where
        T: FromStr,
        T::Err: fmt::Display,
    {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.get(key) {
            Some(s) => s.parse().map_err(|e| format!("config key {key}: {e}")),
            None => Ok(default),
        }
    }
}

/// Unsigned integers given as `3`, `2,3,5` or an inclusive range `0..2`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndexSet(pub Vec<usize>);

impl FromStr for IndexSet {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        let num = |t: &str| t.trim().parse::<usize>().map_err(|_| format!("not a non-negative integer: {t:?}"));
        if let Some((a, b)) = s.split_once("..") {
            let (a, b) = (num(a)?, num(b.trim_start_matches('='))?);
            if a > b {
                return Err(format!("empty range {s:?}"));
            }
            return Ok(Self((a..=b).collect()));
        }
        let v = s.split(',').map(num).collect::<Result<Vec<_>, _>>()?;
        Ok(Self(v))
    }
}

/// Comma-separated floats.
#[derive(Clone, Debug, PartialEq)]
pub struct FloatList(pub Vec<f64>);

impl FromStr for FloatList {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        s.split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|_| format!("not a number: {t:?}")))
            .collect::<Result<Vec<_>, _>>()
            .map(Self)
    }
}

/// Distance grid `start:stop:points` in km.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

impl FromStr for GridSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let [a, b, n] = parts[..] else {
            return Err(format!("expected start:stop:points, got {s:?}"));
        };
        let f = |t: &str| t.trim().parse::<f64>().map_err(|_| format!("not a number: {t:?}"));
        let points = n.trim().parse::<usize>().map_err(|_| format!("not a point count: {n:?}"))?;
        Ok(Self {
            start: f(a)?,
            stop: f(b)?,
            points,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Spacing {
    Lin,
    Geom,
}

impl FromStr for Spacing {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "lin" | "linear" => Ok(Spacing::Lin),
            "geom" | "geometric" | "log" => Ok(Spacing::Geom),
            other => Err(format!("unknown spacing {other:?} (lin|geom)")),
        }
    }
}

impl GridSpec {
    pub fn points(&self, spacing: Spacing) -> Result<Vec<f64>, String> {
        match spacing {
            Spacing::Lin => repeater::linear_grid(self.start, self.stop, self.points),
            Spacing::Geom => repeater::geometric_grid(self.start, self.stop, self.points),
        }
        .map_err(|e| e.to_string())
    }
}

/// Comma-separated generations, `first` and/or `second`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GenList(pub Vec<Generation>);

impl FromStr for GenList {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        s.split(',')
            .map(|t| match t.trim() {
                "first" | "1" => Ok(Generation::First),
                "second" | "2" => Ok(Generation::Second),
                other => Err(format!("unknown generation {other:?} (first|second)")),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Self)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Text,
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "text" => Ok(Format::Text),
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(format!("unknown format {other:?} (text|csv|json)")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_sets() {
        assert_eq!("0..1".parse::<IndexSet>().unwrap().0, vec![0, 1]);
        assert_eq!("0..=2".parse::<IndexSet>().unwrap().0, vec![0, 1, 2]);
        assert_eq!("2,10,100".parse::<IndexSet>().unwrap().0, vec![2, 10, 100]);
        assert_eq!("5".parse::<IndexSet>().unwrap().0, vec![5]);
        assert!("3..1".parse::<IndexSet>().is_err());
        assert!("a".parse::<IndexSet>().is_err());
    }

    #[test]
    fn grid_spec() {
        let g: GridSpec = "100:5000:50".parse().unwrap();
        assert_eq!((g.start, g.stop, g.points), (100.0, 5000.0, 50));
        assert_eq!(g.points(Spacing::Lin).unwrap().len(), 50);
        assert!("100:5000".parse::<GridSpec>().is_err());
    }

    #[test]
    fn config_precedence() {
        let cfg = ConfigFile::parse("# comment\nd = 5\nformat=json\n").unwrap();
        assert_eq!(cfg.resolve::<IndexSet>(None, "d", IndexSet(vec![3])).unwrap().0, vec![5]);
        assert_eq!(
            cfg.resolve(Some(IndexSet(vec![2])), "d", IndexSet(vec![3])).unwrap().0,
            vec![2]
        );
        assert_eq!(cfg.resolve::<usize>(None, "chain", 3).unwrap(), 3);
        assert_eq!(cfg.resolve::<Format>(None, "format", Format::Text).unwrap(), Format::Json);
        assert!(ConfigFile::parse("bogus=1").is_err());
        assert!(ConfigFile::parse("d 5").is_err());
    }
}
