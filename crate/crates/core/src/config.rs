//! Engine configuration file (TOML, one table per module).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::control::ControlConfig;
use crate::corpus::Platform;
use crate::error::{Error, Result};
use crate::impact::ImpactConfig;
use crate::lexicon::ExpansionConfig;
use crate::sim::SimConfig;
use crate::ssm::ModelConfig;
use crate::taxonomy::{DEFAULT_BOTH_GAP, MAX_VOTES, MIN_VOTES};

pub const DEFAULT_TOML: &str = include_str!("../config/default.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LexiconConfig {
    pub thresholds: Vec<u64>,
    pub reddit_thresholds: Vec<u64>,
    pub max_ngram: usize,
    pub stopwords: String,
    pub fold_plurals: bool,
}

impl Default for LexiconConfig {
    fn default() -> Self {
        let tw = ExpansionConfig::twitter();
        LexiconConfig {
            thresholds: tw.thresholds,
            reddit_thresholds: ExpansionConfig::reddit().thresholds,
            max_ngram: tw.max_ngram,
            stopwords: tw.stopwords,
            fold_plurals: tw.fold_plurals,
        }
    }
}

impl LexiconConfig {
    pub fn expansion(&self, platform: Platform) -> ExpansionConfig {
        ExpansionConfig {
            thresholds: match platform {
                Platform::TwitterLike => self.thresholds.clone(),
                Platform::RedditLike => self.reddit_thresholds.clone(),
            },
            max_ngram: self.max_ngram,
            stopwords: self.stopwords.clone(),
            fold_plurals: self.fold_plurals,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    /// Count comments only through their parent post.
    pub parent_only: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaxonomyConfig {
    pub min_votes: usize,
    pub max_votes: usize,
    pub both_gap: usize,
}

impl Default for TaxonomyConfig {
    fn default() -> Self {
        TaxonomyConfig {
            min_votes: MIN_VOTES,
            max_votes: MAX_VOTES,
            both_gap: DEFAULT_BOTH_GAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub ssm: ModelConfig,
    pub control: ControlConfig,
    pub impact: ImpactConfig,
    pub lexicon: LexiconConfig,
    pub corpus: CorpusConfig,
    pub taxonomy: TaxonomyConfig,
    pub sim: SimConfig,
}

impl Config {
    pub fn parse(text: &str, source: &str) -> Result<Config> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::format(source, e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Config::parse(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<()> {
        self.ssm.validate()?;
        self.control.validate()?;
        self.impact.validate()?;
        for p in [Platform::TwitterLike, Platform::RedditLike] {
            self.lexicon.expansion(p).validate()?;
        }
        let t = &self.taxonomy;
        if t.min_votes == 0 || t.max_votes < t.min_votes {
            return Err(Error::Validation("taxonomy needs 1 <= min_votes <= max_votes".into()));
        }
        self.sim.validate(&self.control)?;
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_default_matches_code() {
        assert_eq!(Config::parse(DEFAULT_TOML, "default.toml").unwrap(), Config::default());
    }

    #[test]
    fn partial_files_fill_defaults() {
        let c = Config::parse("[impact]\nwidth_cap = 2.0\n", "t").unwrap();
        assert_eq!(c.impact.width_cap, 2.0);
        assert_eq!(c.control, ControlConfig::default());
        assert_eq!(Config::parse("", "t").unwrap(), Config::default());
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        assert!(matches!(Config::parse("[impact]\nwidht_cap = 2.0\n", "t"), Err(Error::Format { .. })));
        assert!(matches!(Config::parse("[control]\npre_days = 10\n", "t"), Err(Error::Validation(_))));
        assert!(matches!(Config::parse("[lexicon]\nthresholds = [1, 2]\n", "t"), Err(Error::Validation(_))));
        assert!(Config::parse("[ssm]\ntol = 0.0\n", "t").is_err());
    }

    #[test]
    fn round_trips_through_toml() {
        let c = Config::default();
        assert_eq!(Config::parse(&c.to_toml(), "t").unwrap(), c);
    }
}
