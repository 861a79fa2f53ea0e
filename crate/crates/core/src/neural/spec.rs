use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::layers::CellKind;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RecurrentLayout {
    Single,
    Bidirectional,
    Stacked,
}

/// Network family, parsed from and printed as its tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Architecture {
    Mlp,
    Kan,
    MlpKan,
    KanMlp,
    Recurrent(CellKind, RecurrentLayout),
    Seq2Seq(CellKind),
    Cnn,
    CnnRecurrent(CellKind),
    LstmCnn,
    CnnLstmSeq2Seq,
    Transformer,
    PatchTst,
    SparseTransformer,
}

impl Architecture {
    pub const TAGS: [&'static str; 23] = [
        "mlp",
        "kan",
        "mlp-kan",
        "kan-mlp",
        "rnn",
        "lstm",
        "gru",
        "bi-rnn",
        "bi-lstm",
        "bi-gru",
        "stacked-rnn",
        "stacked-lstm",
        "stacked-gru",
        "seq2seq-lstm",
        "seq2seq-gru",
        "cnn",
        "cnn-lstm",
        "lstm-cnn",
        "cnn-gru",
        "cnn-lstm-seq2seq",
        "transformer",
        "patchtst",
        "sparse-transformer",
    ];

    pub fn tag(&self) -> String {
        use Architecture::*;
        match self {
            Mlp => "mlp".into(),
            Kan => "kan".into(),
            MlpKan => "mlp-kan".into(),
            KanMlp => "kan-mlp".into(),
            Recurrent(c, RecurrentLayout::Single) => c.tag().into(),
            Recurrent(c, RecurrentLayout::Bidirectional) => format!("bi-{}", c.tag()),
            Recurrent(c, RecurrentLayout::Stacked) => format!("stacked-{}", c.tag()),
            Seq2Seq(c) => format!("seq2seq-{}", c.tag()),
            Cnn => "cnn".into(),
            CnnRecurrent(c) => format!("cnn-{}", c.tag()),
            LstmCnn => "lstm-cnn".into(),
            CnnLstmSeq2Seq => "cnn-lstm-seq2seq".into(),
            Transformer => "transformer".into(),
            PatchTst => "patchtst".into(),
            SparseTransformer => "sparse-transformer".into(),
        }
    }

    /// Feed-forward families consume flattened tabular windows.
    pub fn is_feed_forward(&self) -> bool {
        matches!(self, Self::Mlp | Self::Kan | Self::MlpKan | Self::KanMlp)
    }

    pub fn is_attention(&self) -> bool {
        matches!(self, Self::Transformer | Self::PatchTst | Self::SparseTransformer)
    }

    pub fn default_horizons(&self) -> Vec<usize> {
        if self.is_feed_forward() {
            vec![1, 2, 4, 8]
        } else {
            (1..=8).collect()
        }
    }

    pub fn default_lookback(&self) -> usize {
        if self.is_attention() {
            48
        } else {
            24
        }
    }

    /// Family label used to group report rows.
    pub fn family(&self) -> &'static str {
        use Architecture::*;
        match self {
            Mlp | Kan | MlpKan | KanMlp => "feed-forward",
            Recurrent(..) | Seq2Seq(_) => "recurrent",
            Cnn | CnnRecurrent(_) | LstmCnn | CnnLstmSeq2Seq => "convolutional",
            Transformer | PatchTst | SparseTransformer => "transformer",
        }
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        use Architecture::*;
        let cell = |c: &str| match c {
            "rnn" => Some(CellKind::Rnn),
            "lstm" => Some(CellKind::Lstm),
            "gru" => Some(CellKind::Gru),
            _ => None,
        };
        let parsed = match s {
            "mlp" => Some(Mlp),
            "kan" => Some(Kan),
            "mlp-kan" => Some(MlpKan),
            "kan-mlp" => Some(KanMlp),
            "cnn" => Some(Cnn),
            "cnn-lstm" => Some(CnnRecurrent(CellKind::Lstm)),
            "cnn-gru" => Some(CnnRecurrent(CellKind::Gru)),
            "lstm-cnn" => Some(LstmCnn),
            "cnn-lstm-seq2seq" => Some(CnnLstmSeq2Seq),
            "transformer" => Some(Transformer),
            "patchtst" => Some(PatchTst),
            "sparse-transformer" => Some(SparseTransformer),
            "seq2seq-lstm" => Some(Seq2Seq(CellKind::Lstm)),
            "seq2seq-gru" => Some(Seq2Seq(CellKind::Gru)),
            other => {
                if let Some(c) = other.strip_prefix("bi-").and_then(cell) {
                    Some(Recurrent(c, RecurrentLayout::Bidirectional))
                } else if let Some(c) = other.strip_prefix("stacked-").and_then(cell) {
                    Some(Recurrent(c, RecurrentLayout::Stacked))
                } else {
                    cell(other).map(|c| Recurrent(c, RecurrentLayout::Single))
                }
            }
        };
        parsed.ok_or_else(|| Error::invalid(format!("unknown architecture `{s}`; valid tags: {}", Self::TAGS.join(", "))))
    }
}

impl TryFrom<String> for Architecture {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Architecture> for String {
    fn from(a: Architecture) -> String {
        a.tag()
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tag())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttentionConfig {
    pub d_model: usize,
    pub heads: usize,
    pub ff_width: usize,
    pub layers: usize,
    pub patch_len: usize,
    pub stride: usize,
    /// Embedding width of patch tokens.
    pub patch_d_model: usize,
    /// Fraction of queries given full attention in sparse mode.
    pub top_u: f64,
}

impl Default for AttentionConfig {
    fn default() -> Self {
        Self {
            d_model: 64,
            heads: 4,
            ff_width: 128,
            layers: 3,
            patch_len: 8,
            stride: 8,
            patch_d_model: 128,
            top_u: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSpec {
    pub architecture: Architecture,
    /// Feed-forward hidden widths; `None` means `[2n, n/2]` with `n` the
    /// flattened input width, an empty list means no hidden layer.
    pub hidden: Option<Vec<usize>>,
    /// Recurrent state width.
    pub units: usize,
    /// Depth of stacked recurrent models.
    pub layers: usize,
    pub filters: usize,
    pub kernel: usize,
    pub dropout: f64,
    /// Window length; `None` uses the family default.
    pub lookback: Option<usize>,
    /// Output horizons; empty uses the family default.
    pub horizons: Vec<usize>,
    pub attention: AttentionConfig,
    pub seed: u64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            architecture: Architecture::Mlp,
            hidden: None,
            units: 64,
            layers: 3,
            filters: 64,
            kernel: 3,
            dropout: 0.1,
            lookback: None,
            horizons: Vec::new(),
            attention: AttentionConfig::default(),
            seed: 0,
        }
    }
}

impl ModelSpec {
    pub fn new(architecture: Architecture) -> Self {
        Self {
            architecture,
            ..Self::default()
        }
    }

    pub fn lookback(&self) -> usize {
        self.lookback.unwrap_or_else(|| self.architecture.default_lookback())
    }

    pub fn horizons(&self) -> Vec<usize> {
        if self.horizons.is_empty() {
            self.architecture.default_horizons()
        } else {
            self.horizons.clone()
        }
    }

    pub fn hidden_widths(&self, inputs: usize) -> Vec<usize> {
        self.hidden
            .clone()
            .unwrap_or_else(|| vec![(2 * inputs).max(1), (inputs / 2).max(1)])
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        let h = self.horizons();
        if h.is_empty() || h.contains(&0) || h.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("horizons must be positive and strictly increasing"));
        }
        if self.lookback() == 0 || self.units == 0 || self.layers == 0 || self.filters == 0 || self.kernel == 0 {
            return Err(Error::invalid("lookback, units, layers, filters and kernel must be positive"));
        }
        if self.hidden.as_ref().is_some_and(|h| h.contains(&0)) {
            return Err(Error::invalid("hidden widths must be positive"));
        }
        let a = &self.attention;
        if self.architecture.is_attention() {
            let width = if self.architecture == Architecture::PatchTst { a.patch_d_model } else { a.d_model };
            if a.heads == 0 || width % a.heads != 0 {
                return Err(Error::invalid(format!("d_model {width} is not divisible by {} heads", a.heads)));
            }
            if a.layers == 0 || a.ff_width == 0 {
                return Err(Error::invalid("attention layers and feed-forward width must be positive"));
            }
            if self.architecture == Architecture::SparseTransformer && !(a.top_u > 0.0 && a.top_u <= 1.0) {
                return Err(Error::invalid(format!("top-u fraction {} outside (0, 1]", a.top_u)));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_tag_roundtrips() {
        for tag in Architecture::TAGS {
            let a: Architecture = tag.parse().unwrap();
            assert_eq!(a.tag(), tag);
        }
    }

    #[test]
    fn unknown_tag_lists_valid_ones() {
        let err = "lstmx".parse::<Architecture>().unwrap_err().to_string();
        assert!(err.contains("stacked-lstm") && err.contains("patchtst"));
    }

    #[test]
    fn default_arities() {
        assert_eq!(ModelSpec::new(Architecture::Mlp).horizons().len(), 4);
        assert_eq!(ModelSpec::new("stacked-gru".parse().unwrap()).horizons().len(), 8);
        assert_eq!(ModelSpec::new(Architecture::PatchTst).lookback(), 48);
    }

    #[test]
    fn spec_serde() {
        let s = ModelSpec::new("bi-lstm".parse().unwrap());
        let text = serde_json::to_string(&s).unwrap();
        assert!(text.contains("\"bi-lstm\""));
        assert_eq!(serde_json::from_str::<ModelSpec>(&text).unwrap(), s);
        let mut bad = s.clone();
        bad.dropout = 1.0;
        assert!(bad.validate().is_err());
    }
}
