use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Multi-depth generative backbone.
pub const LLM_SOURCE: &str = "llama2";
pub const BERT_SOURCE: &str = "bert";
pub const ROBERTA_SOURCE: &str = "roberta";

pub const DEFAULT_SIGMA: f64 = 0.3;
pub const DEFAULT_PROJECTION_DIM: usize = 1024;
pub const STRATEGY_COUNT: u8 = 15;

/// How the LLM depth stack enters the fused vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LlmPart {
    /// Depth 1 only (the last block).
    First,
    Avg,
    Max,
    /// All depths concatenated.
    Cat,
    /// Projected depths stacked with the encoder vectors, co-occurrence pooled.
    Co,
    /// `Co` followed by the average of the unprojected depths.
    CoAvg,
}

/// Composition of one fusion strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Recipe {
    pub llm: LlmPart,
    /// Encoder sources concatenated after the LLM part (or stacked into the
    /// co-occurrence input).
    pub encoders: &'static [&'static str],
}

impl Recipe {
    pub fn is_cooccurrence(&self) -> bool {
        matches!(self.llm, LlmPart::Co | LlmPart::CoAvg)
    }
}

const NONE: &[&str] = &[];
const BERT: &[&str] = &[BERT_SOURCE];
const ROBERTA: &[&str] = &[ROBERTA_SOURCE];
const BOTH: &[&str] = &[BERT_SOURCE, ROBERTA_SOURCE];

const ALIASES: &[(&str, u8)] = &[
    ("none", 1),
    ("/", 1),
    ("avg", 2),
    ("max", 3),
    ("cat", 4),
    ("avg+cat:bert", 5),
    ("max+cat:bert", 6),
    ("cat:bert", 7),
    ("avg+cat:roberta", 8),
    ("max+cat:roberta", 9),
    ("cat:roberta", 10),
    ("avg+cat", 11),
    ("avg+cat:all", 11),
    ("max+cat", 12),
    ("max+cat:all", 12),
    ("cat:all", 13),
    ("cat+co", 14),
    ("cat+co+avg+cat", 15),
];

/// One of the fifteen fusion recipes plus its hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionStrategy {
    index: u8,
    pub sigma: f64,
    pub projection_dim: usize,
}

impl FusionStrategy {
    pub fn new(index: u8) -> Result<Self> {
        if !(1..=STRATEGY_COUNT).contains(&index) {
            return Err(Error::UnknownStrategy(index.to_string()));
        }
        Ok(FusionStrategy {
            index,
            sigma: DEFAULT_SIGMA,
            projection_dim: DEFAULT_PROJECTION_DIM,
        })
    }

    pub fn with_sigma(mut self, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::Validation(format!("sigma must be positive, got {sigma}")));
        }
        self.sigma = sigma;
        Ok(self)
    }

    pub fn with_projection_dim(mut self, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Validation("projection_dim must be at least 1".into()));
        }
        self.projection_dim = dim;
        Ok(self)
    }

    /// Accepts `1`..`15` or a named alias such as `avg+cat` or `cat+co+avg+cat`.
    pub fn parse(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| !c.is_whitespace())
            .collect::<String>()
            .to_ascii_lowercase();
        if let Ok(i) = key.parse::<u8>() {
            return Self::new(i).map_err(|_| Error::UnknownStrategy(s.to_owned()));
        }
        ALIASES
            .iter()
            .find(|(name, _)| *name == key)
            .map(|&(_, i)| Self::new(i))
            .unwrap_or_else(|| Err(Error::UnknownStrategy(s.to_owned())))
    }

    pub fn all() -> impl Iterator<Item = FusionStrategy> {
        (1..=STRATEGY_COUNT).map(|i| FusionStrategy::new(i).unwrap())
    }

    pub fn index(&self) -> u8 {
        self.index
    }

    pub fn recipe(&self) -> Recipe {
        let (llm, encoders) = match self.index {
            1 => (LlmPart::First, NONE),
            2 => (LlmPart::Avg, NONE),
            3 => (LlmPart::Max, NONE),
            4 => (LlmPart::Cat, NONE),
            5 => (LlmPart::Avg, BERT),
            6 => (LlmPart::Max, BERT),
            7 => (LlmPart::Cat, BERT),
            8 => (LlmPart::Avg, ROBERTA),
            9 => (LlmPart::Max, ROBERTA),
            10 => (LlmPart::Cat, ROBERTA),
            11 => (LlmPart::Avg, BOTH),
            12 => (LlmPart::Max, BOTH),
            13 => (LlmPart::Cat, BOTH),
            14 => (LlmPart::Co, BOTH),
            15 => (LlmPart::CoAvg, BOTH),
            _ => unreachable!("index validated on construction"),
        };
        Recipe { llm, encoders }
    }

    pub fn required_sources(&self) -> Vec<&'static str> {
        let mut v = vec![LLM_SOURCE];
        v.extend_from_slice(self.recipe().encoders);
        v
    }

    /// Whether the strategy carries learnable alignment projections.
    pub fn is_learnable(&self) -> bool {
        self.recipe().is_cooccurrence()
    }

    pub fn operator_name(&self) -> &'static str {
        match self.recipe().llm {
            LlmPart::First => "/",
            LlmPart::Avg if self.index == 2 => "Avg",
            LlmPart::Max if self.index == 3 => "Max",
            LlmPart::Avg => "Avg + Cat",
            LlmPart::Max => "Max + Cat",
            LlmPart::Cat => "Cat",
            LlmPart::Co => "Cat + Co",
            LlmPart::CoAvg => "Cat + Co + Avg + Cat",
        }
    }

    /// Output width for the given source shapes.
    pub fn fused_dim(&self, shapes: &[SourceShape]) -> Result<usize> {
        let find = |name: &str| {
            shapes
                .iter()
                .find(|s| s.name == name)
                .ok_or_else(|| Error::MissingSource {
                    strategy: self.index,
                    source_name: name.to_owned(),
                })
        };
        let llm = find(LLM_SOURCE)?;
        let recipe = self.recipe();
        let mut encoder_dims = Vec::new();
        for name in recipe.encoders {
            encoder_dims.push(find(name)?.dim);
        }
        let encoders: usize = encoder_dims.iter().sum();
        let dim = match recipe.llm {
            LlmPart::First | LlmPart::Avg | LlmPart::Max => llm.dim + encoders,
            LlmPart::Cat => llm.depths * llm.dim + encoders,
            LlmPart::Co | LlmPart::CoAvg => {
                for (name, &d) in recipe.encoders.iter().zip(&encoder_dims) {
                    if d != self.projection_dim {
                        return Err(Error::Shape(format!(
                            "co-occurrence stacks `{name}` unprojected, so its dim {d} must equal projection_dim {}",
                            self.projection_dim
                        )));
                    }
                }
                let h = llm.depths + recipe.encoders.len();
                let co = h * h;
                if recipe.llm == LlmPart::CoAvg {
                    co + llm.dim
                } else {
                    co
                }
            }
        };
        Ok(dim)
    }
}

impl fmt::Display for FusionStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({})", self.index, self.operator_name())
    }
}

impl FromStr for FusionStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FusionStrategy::parse(s)
    }
}

/// Name and shape of one embedding source.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceShape {
    pub name: String,
    pub depths: usize,
    pub dim: usize,
}

impl SourceShape {
    pub fn new(name: &str, depths: usize, dim: usize) -> Self {
        SourceShape {
            name: name.to_owned(),
            depths,
            dim,
        }
    }

    /// `llama2` 5×4096, `bert` 1×1024, `roberta` 1×1024.
    pub fn reference_set() -> Vec<SourceShape> {
        vec![
            SourceShape::new(LLM_SOURCE, 5, 4096),
            SourceShape::new(BERT_SOURCE, 1, 1024),
            SourceShape::new(ROBERTA_SOURCE, 1, 1024),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_widths() {
        let shapes = SourceShape::reference_set();
        let expected = [
            4096, 4096, 4096, 20480, 5120, 5120, 21504, 5120, 5120, 21504, 6144, 6144, 22528, 49,
            4145,
        ];
        for (s, want) in FusionStrategy::all().zip(expected) {
            assert_eq!(s.fused_dim(&shapes).unwrap(), want, "strategy {}", s.index());
        }
    }

    #[test]
    fn required_sources_follow_the_embeddings_column() {
        let req = |i| FusionStrategy::new(i).unwrap().required_sources();
        for i in 1..=4 {
            assert_eq!(req(i), ["llama2"]);
        }
        for i in 5..=7 {
            assert_eq!(req(i), ["llama2", "bert"]);
        }
        for i in 8..=10 {
            assert_eq!(req(i), ["llama2", "roberta"]);
        }
        for i in 11..=15 {
            assert_eq!(req(i), ["llama2", "bert", "roberta"]);
        }
    }

    #[test]
    fn parse_indices_and_aliases() {
        assert_eq!(FusionStrategy::parse("7").unwrap().index(), 7);
        assert_eq!(FusionStrategy::parse("avg").unwrap().index(), 2);
        assert_eq!(FusionStrategy::parse("Cat + Co + Avg + Cat").unwrap().index(), 15);
        assert_eq!(FusionStrategy::parse("cat+co").unwrap().index(), 14);
        assert_eq!(FusionStrategy::parse("avg+cat").unwrap().index(), 11);
        for bad in ["0", "16", "avg+max", ""] {
            let err = FusionStrategy::parse(bad).unwrap_err();
            assert!(err.to_string().contains("1-15"), "{err}");
        }
    }

    #[test]
    fn missing_source_is_named() {
        let shapes = vec![SourceShape::new(LLM_SOURCE, 5, 8)];
        let err = FusionStrategy::new(5).unwrap().fused_dim(&shapes).unwrap_err();
        assert!(err.to_string().contains("bert"), "{err}");
    }

    #[test]
    fn sigma_must_be_positive() {
        let s = FusionStrategy::new(14).unwrap();
        assert!(s.with_sigma(0.0).is_err());
        assert!(s.with_sigma(-0.1).is_err());
        assert_eq!(s.with_sigma(0.5).unwrap().sigma, 0.5);
    }

    #[test]
    fn cooccurrence_needs_matching_encoder_width() {
        let s = FusionStrategy::new(14).unwrap().with_projection_dim(512).unwrap();
        assert_eq!(s.fused_dim(&SourceShape::reference_set()).unwrap_err().code(), "shape");
    }
}
