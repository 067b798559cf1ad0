//! Flat key=value run configuration for training.
//!
//! ```text
//! # which data and how to train
//! mode = cross-plus-dev          # mono | cross-source-only | cross-plus-dev
//! seed = 42
//! target = eu
//! sources = en,pt,es             # cross modes only
//! manifest.en = corpora/en/manifest.tsv
//! manifest.eu = corpora/eu/manifest.tsv
//! dictionary.eu = dicts/eu-en.tsv
//! embeddings = vectors/en-50.vec # optional pretrained word vectors
//! model = out/model.bin
//! output = out                   # optional: train.log + dev_scores.tsv
//!
//! # either a search grid ...
//! learning_rates = 0.01,0.02,0.03
//! decays = 0.00001,0.000001,0.0000001,0
//! max_epochs = 20
//! beams = 1,2,4,8,16,32
//! # ... or a fixed point (skips the search): learning_rate, decay,
//! # epochs, beam
//! ```
//!
//! Relative paths resolve against the config file's directory. Blank lines
//! and `#` comments are skipped; `--set key=value` flags override file keys.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rstkit_core::model::{Grids, Hyperparams};

use crate::commands::CliError;

/// Training regime: which corpora feed training and which feed tuning.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Mode {
    /// Train on the target language's train split, tune on its dev split.
    Mono,
    /// Train on source-language corpora only (never reading target-language
    /// files), tune on the source dev splits.
    CrossSourceOnly,
    /// Train on all source corpora plus the target train split, tune on the
    /// target dev split.
    CrossPlusDev,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Mono => "mono",
            Mode::CrossSourceOnly => "cross-source-only",
            Mode::CrossPlusDev => "cross-plus-dev",
        })
    }
}

/// Hyperparameter choice: search a grid, or train one fixed point straight
/// through without any search.
#[derive(Clone, PartialEq, Debug)]
pub enum Search {
    Grid(Grids),
    Fixed(Hyperparams),
}

/// One fully specified training run.
#[derive(Clone, PartialEq, Debug)]
pub struct RunConfig {
    pub mode: Mode,
    pub seed: u64,
    /// Language code the trained parser is for.
    pub target: String,
    /// Source language codes (empty in mono mode).
    pub sources: Vec<String>,
    /// Harmonized-corpus manifest per language code.
    pub manifests: BTreeMap<String, PathBuf>,
    /// Bilingual dictionary (into English) per language code.
    pub dictionaries: BTreeMap<String, PathBuf>,
    /// Pretrained word vectors; fixes the word table when given.
    pub embeddings: Option<PathBuf>,
    /// Where the trained model is written.
    pub model: PathBuf,
    /// Optional directory for the training log and dev-score table.
    pub output: Option<PathBuf>,
    pub search: Search,
}

impl RunConfig {
    /// Load a config file and apply `key=value` overrides on top.
    pub fn load(path: &Path, overrides: &[String]) -> Result<RunConfig, CliError> {
        let text = fs::read_to_string(path).map_err(|e| {
            CliError::Usage(format!("cannot read config `{}`: {e}", path.display()))
        })?;
        let base = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        RunConfig::from_text(&text, overrides, &base)
    }

    /// Parse configuration text; relative paths resolve against `base`.
    pub fn from_text(
        text: &str,
        overrides: &[String],
        base: &Path,
    ) -> Result<RunConfig, CliError> {
        let mut map: BTreeMap<String, String> = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            // Allow trailing comments after the value.
            let line = line.split('#').next().unwrap().trim();
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Usage(format!(
                    "config line {}: expected key=value, got `{line}`",
                    idx + 1
                ))
            })?;
            let key = key.trim().to_string();
            if map
                .insert(key.clone(), value.trim().to_string())
                .is_some()
            {
                return Err(CliError::Usage(format!(
                    "config line {}: key `{key}` set twice",
                    idx + 1
                )));
            }
        }
        for item in overrides {
            let (key, value) = item.split_once('=').ok_or_else(|| {
                CliError::Usage(format!("override `{item}`: expected key=value"))
            })?;
            map.insert(key.trim().to_string(), value.trim().to_string());
        }
        build(map, base)
    }
}

fn build(mut map: BTreeMap<String, String>, base: &Path) -> Result<RunConfig, CliError> {
    let join = |value: String| -> PathBuf {
        let path = PathBuf::from(value);
        if path.is_absolute() {
            path
        } else {
            base.join(path)
        }
    };

    let mode = match map.remove("mode").as_deref() {
        None | Some("mono") => Mode::Mono,
        Some("cross-source-only") => Mode::CrossSourceOnly,
        Some("cross-plus-dev") => Mode::CrossPlusDev,
        Some(other) => {
            return Err(CliError::Usage(format!(
                "mode `{other}` is not one of mono, cross-source-only, cross-plus-dev"
            )))
        }
    };
    let seed = parse_or(map.remove("seed"), 0u64, "seed")?;
    let target = map
        .remove("target")
        .ok_or_else(|| CliError::Usage("config needs `target = <language>`".into()))?;
    let sources: Vec<String> = map
        .remove("sources")
        .map(|v| {
            v.split(',')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect()
        })
        .unwrap_or_default();
    let model = map
        .remove("model")
        .map(&join)
        .ok_or_else(|| CliError::Usage("config needs `model = <path>`".into()))?;
    let embeddings = map.remove("embeddings").map(&join);
    let output = map.remove("output").map(&join);

    let mut manifests = BTreeMap::new();
    let mut dictionaries = BTreeMap::new();
    for key in map.keys().cloned().collect::<Vec<_>>() {
        if let Some(lang) = key.strip_prefix("manifest.") {
            let value = map.remove(&key).unwrap();
            manifests.insert(lang.to_string(), join(value));
        } else if let Some(lang) = key.strip_prefix("dictionary.") {
            let value = map.remove(&key).unwrap();
            dictionaries.insert(lang.to_string(), join(value));
        }
    }

    let fixed_keys = ["learning_rate", "decay", "epochs", "beam"];
    let grid_keys = ["learning_rates", "decays", "max_epochs", "beams"];
    let has_fixed = fixed_keys.iter().any(|k| map.contains_key(*k));
    let has_grid = grid_keys.iter().any(|k| map.contains_key(*k));
    if has_fixed && has_grid {
        return Err(CliError::Usage(
            "config mixes fixed-point keys (learning_rate, decay, epochs, beam) \
             with grid keys (learning_rates, decays, max_epochs, beams)"
                .into(),
        ));
    }
    let search = if has_fixed {
        let d = Hyperparams::default();
        Search::Fixed(Hyperparams {
            learning_rate: parse_or(map.remove("learning_rate"), d.learning_rate, "learning_rate")?,
            decay: parse_or(map.remove("decay"), d.decay, "decay")?,
            epochs: parse_or(map.remove("epochs"), d.epochs, "epochs")?,
            beam: parse_or(map.remove("beam"), d.beam, "beam")?,
            seed,
        })
    } else {
        let d = Grids::default();
        Search::Grid(Grids {
            learning_rates: parse_list(map.remove("learning_rates"), d.learning_rates, "learning_rates")?,
            decays: parse_list(map.remove("decays"), d.decays, "decays")?,
            max_epochs: parse_or(map.remove("max_epochs"), d.max_epochs, "max_epochs")?,
            beams: parse_list(map.remove("beams"), d.beams, "beams")?,
        })
    };

    if let Some(key) = map.keys().next() {
        return Err(CliError::Usage(format!("unknown config key `{key}`")));
    }

    // Mode-specific wiring checks, so failures surface before any training.
    let need_manifest = |lang: &str| -> Result<(), CliError> {
        if manifests.contains_key(lang) {
            Ok(())
        } else {
            Err(CliError::Usage(format!(
                "{mode} mode needs `manifest.{lang} = <path>`"
            )))
        }
    };
    match mode {
        Mode::Mono => {
            if !sources.is_empty() {
                return Err(CliError::Usage("mono mode takes no `sources`".into()));
            }
            need_manifest(&target)?;
        }
        Mode::CrossSourceOnly | Mode::CrossPlusDev => {
            if sources.is_empty() {
                return Err(CliError::Usage(format!("{mode} mode needs `sources`")));
            }
            if sources.contains(&target) {
                return Err(CliError::Usage(format!(
                    "target `{target}` cannot be one of the sources"
                )));
            }
            for lang in &sources {
                need_manifest(lang)?;
            }
            if mode == Mode::CrossPlusDev {
                need_manifest(&target)?;
            }
        }
    }

    Ok(RunConfig {
        mode,
        seed,
        target,
        sources,
        manifests,
        dictionaries,
        embeddings,
        model,
        output,
        search,
    })
}

fn parse_or<T: FromStr>(value: Option<String>, default: T, key: &str) -> Result<T, CliError> {
    match value {
        None => Ok(default),
        Some(v) => v
            .parse()
            .map_err(|_| CliError::Usage(format!("config key `{key}`: bad value `{v}`"))),
    }
}

fn parse_list<T: FromStr>(
    value: Option<String>,
    default: Vec<T>,
    key: &str,
) -> Result<Vec<T>, CliError> {
    let Some(v) = value else {
        return Ok(default);
    };
    let items: Result<Vec<T>, _> = v
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect();
    match items {
        Ok(items) if !items.is_empty() => Ok(items),
        _ => Err(CliError::Usage(format!(
            "config key `{key}`: bad list `{v}`"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig, CliError> {
        RunConfig::from_text(text, &[], Path::new("/cfg"))
    }

    #[test]
    fn a_minimal_mono_config_parses_with_defaults() {
        let config = parse(
            "target = en\nmanifest.en = corpus/manifest.tsv\nmodel = model.bin\n",
        )
        .unwrap();
        assert_eq!(config.mode, Mode::Mono);
        assert_eq!(config.seed, 0);
        assert_eq!(config.model, PathBuf::from("/cfg/model.bin"));
        assert_eq!(
            config.manifests["en"],
            PathBuf::from("/cfg/corpus/manifest.tsv")
        );
        assert_eq!(config.search, Search::Grid(Grids::default()));
    }

    #[test]
    fn fixed_point_keys_build_a_fixed_search() {
        let config = parse(
            "target = en\nmanifest.en = m.tsv\nmodel = m.bin\n\
             learning_rate = 0.03\nepochs = 5\nseed = 7\n",
        )
        .unwrap();
        match config.search {
            Search::Fixed(hp) => {
                assert_eq!(hp.learning_rate, 0.03);
                assert_eq!(hp.decay, 0.0);
                assert_eq!(hp.epochs, 5);
                assert_eq!(hp.beam, 1);
                assert_eq!(hp.seed, 7);
            }
            other => panic!("expected fixed point, got {other:?}"),
        }
    }

    #[test]
    fn grid_and_fixed_keys_cannot_mix() {
        let err = parse(
            "target = en\nmanifest.en = m.tsv\nmodel = m.bin\n\
             learning_rate = 0.03\nbeams = 1,2\n",
        )
        .unwrap_err();
        assert!(matches!(err, CliError::Usage(_)));
    }

    #[test]
    fn unknown_keys_are_usage_errors() {
        let err = parse(
            "target = en\nmanifest.en = m.tsv\nmodel = m.bin\nlerning_rate = 0.1\n",
        )
        .unwrap_err();
        match err {
            CliError::Usage(msg) => assert!(msg.contains("lerning_rate")),
            other => panic!("expected usage error, got {other:?}"),
        }
    }

    #[test]
    fn overrides_replace_file_values() {
        let config = RunConfig::from_text(
            "target = en\nmanifest.en = m.tsv\nmodel = m.bin\nseed = 1\n",
            &["seed=9".to_string(), "beams=4".to_string()],
            Path::new("."),
        )
        .unwrap();
        assert_eq!(config.seed, 9);
        match config.search {
            Search::Grid(grids) => assert_eq!(grids.beams, vec![4]),
            other => panic!("expected grid, got {other:?}"),
        }
    }

    #[test]
    fn cross_modes_demand_their_manifests() {
        let err = parse(
            "mode = cross-source-only\ntarget = eu\nsources = en,pt\n\
             manifest.en = en.tsv\nmodel = m.bin\n",
        )
        .unwrap_err();
        match err {
            CliError::Usage(msg) => assert!(msg.contains("manifest.pt"), "msg: {msg}"),
            other => panic!("expected usage error, got {other:?}"),
        }

        // Source-only does not need the target manifest at all.
        let config = parse(
            "mode = cross-source-only\ntarget = eu\nsources = en\n\
             manifest.en = en.tsv\nmodel = m.bin\n",
        )
        .unwrap();
        assert!(!config.manifests.contains_key("eu"));

        let err = parse(
            "mode = cross-plus-dev\ntarget = eu\nsources = en\n\
             manifest.en = en.tsv\nmodel = m.bin\n",
        )
        .unwrap_err();
        match err {
            CliError::Usage(msg) => assert!(msg.contains("manifest.eu"), "msg: {msg}"),
            other => panic!("expected usage error, got {other:?}"),
        }
    }

    #[test]
    fn the_target_cannot_be_a_source() {
        let err = parse(
            "mode = cross-plus-dev\ntarget = en\nsources = en,pt\n\
             manifest.en = en.tsv\nmanifest.pt = pt.tsv\nmodel = m.bin\n",
        )
        .unwrap_err();
        assert!(matches!(err, CliError::Usage(_)));
    }

    #[test]
    fn duplicate_keys_and_bad_lines_are_rejected() {
        assert!(matches!(
            parse("target = en\ntarget = pt\n"),
            Err(CliError::Usage(_))
        ));
        assert!(matches!(parse("no equals sign\n"), Err(CliError::Usage(_))));
    }

    #[test]
    fn comments_and_blank_lines_are_skipped() {
        let config = parse(
            "# a comment\n\ntarget = en   # trailing comment\n\
             manifest.en = m.tsv\nmodel = m.bin\n",
        )
        .unwrap();
        assert_eq!(config.target, "en");
    }
}
