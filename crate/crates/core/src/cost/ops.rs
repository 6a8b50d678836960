use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum ModelKind {
    Encoder,
    DecoderPrefill,
    /// One new token attending to `context` cached tokens.
    DecoderGenerate,
}

/// Transformer shape. `kv_dim` is the key/value width (smaller than
/// `hidden` under grouped-query attention); `None` means `hidden`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct WorkloadSpec {
    pub kind: ModelKind,
    pub seq_len: usize,
    /// Cached tokens for generation; ignored otherwise.
    #[cfg_attr(feature = "serde", serde(default))]
    pub context: usize,
    pub hidden: usize,
    pub ffn: usize,
    pub heads: usize,
    pub layers: usize,
    #[cfg_attr(feature = "serde", serde(default))]
    pub kv_dim: Option<usize>,
    #[cfg_attr(feature = "serde", serde(default = "eight"))]
    pub input_bits: u32,
    #[cfg_attr(feature = "serde", serde(default = "eight"))]
    pub weight_bits: u32,
}

#[cfg(feature = "serde")]
fn eight() -> u32 {
    8
}

impl WorkloadSpec {
    pub fn encoder(seq_len: usize, hidden: usize, ffn: usize, heads: usize, layers: usize) -> Self {
        Self {
            kind: ModelKind::Encoder,
            seq_len,
            context: 0,
            hidden,
            ffn,
            heads,
            layers,
            kv_dim: None,
            input_bits: 8,
            weight_bits: 8,
        }
    }

    pub fn bert_base(seq_len: usize) -> Self {
        Self::encoder(seq_len, 768, 3072, 12, 12)
    }

    pub fn bert_large(seq_len: usize) -> Self {
        Self::encoder(seq_len, 1024, 4096, 16, 24)
    }

    /// GPT-2 small, one generated token over a 1024-token context.
    pub fn gpt2_generate() -> Self {
        Self {
            kind: ModelKind::DecoderGenerate,
            seq_len: 1,
            context: 1024,
            hidden: 768,
            ffn: 3072,
            heads: 12,
            layers: 12,
            kv_dim: None,
            input_bits: 8,
            weight_bits: 8,
        }
    }

    /// Llama-3.2-1B shape (grouped-query attention), 100-token context.
    pub fn llama3_1b_generate() -> Self {
        Self {
            kind: ModelKind::DecoderGenerate,
            seq_len: 1,
            context: 100,
            hidden: 2048,
            ffn: 8192,
            heads: 32,
            layers: 16,
            kv_dim: Some(512),
            input_bits: 8,
            weight_bits: 8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seq_len == 0 || self.hidden == 0 || self.ffn == 0 || self.heads == 0 || self.layers == 0 {
            return Err(Error::invalid("workload dimensions must be positive"));
        }
        if self.kind == ModelKind::DecoderGenerate && self.context == 0 {
            return Err(Error::invalid("generation needs a non-empty context"));
        }
        if self.kv_dim == Some(0) {
            return Err(Error::invalid("kv_dim must be positive"));
        }
        if self.input_bits == 0 || self.weight_bits == 0 {
            return Err(Error::invalid("bit widths must be positive"));
        }
        Ok(())
    }

    pub fn kv(&self) -> usize {
        self.kv_dim.unwrap_or(self.hidden)
    }

    /// Query rows processed per layer invocation.
    pub fn rows(&self) -> usize {
        match self.kind {
            ModelKind::DecoderGenerate => 1,
            _ => self.seq_len,
        }
    }

    /// Keys each query attends to.
    pub fn attended(&self) -> usize {
        match self.kind {
            ModelKind::DecoderGenerate => self.context,
            _ => self.seq_len,
        }
    }

    /// `(in, out)` widths of the six weight matrices of a layer.
    pub fn linear_stages(&self) -> [(LinearStage, usize, usize); 6] {
        let (d, f, kv) = (self.hidden, self.ffn, self.kv());
        [
            (LinearStage::Query, d, d),
            (LinearStage::Key, d, kv),
            (LinearStage::Value, d, kv),
            (LinearStage::Projection, d, d),
            (LinearStage::Ffn1, d, f),
            (LinearStage::Ffn2, f, d),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum LinearStage {
    Query,
    Key,
    Value,
    Projection,
    Ffn1,
    Ffn2,
}

impl LinearStage {
    pub fn name(self) -> &'static str {
        match self {
            LinearStage::Query => "q",
            LinearStage::Key => "k",
            LinearStage::Value => "v",
            LinearStage::Projection => "proj",
            LinearStage::Ffn1 => "ffn1",
            LinearStage::Ffn2 => "ffn2",
        }
    }
}

/// MACs per layer, per stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StageOps {
    pub qkv: u64,
    pub proj: u64,
    pub ffn1: u64,
    pub ffn2: u64,
    pub scores: u64,
    pub attn_v: u64,
}

impl StageOps {
    /// Work on static weights (analog side).
    pub fn static_macs(&self) -> u64 {
        self.qkv + self.proj + self.ffn1 + self.ffn2
    }

    /// Work on activations only (digital side).
    pub fn dynamic_macs(&self) -> u64 {
        self.scores + self.attn_v
    }

    pub fn total(&self) -> u64 {
        self.static_macs() + self.dynamic_macs()
    }

    pub fn static_fraction(&self) -> f64 {
        self.static_macs() as f64 / self.total() as f64
    }
}

/// Per-layer multiply-accumulate counts.
pub fn count_ops(w: &WorkloadSpec) -> StageOps {
    let l = w.rows() as u64;
    let d = w.hidden as u64;
    let kv = w.kv() as u64;
    let f = w.ffn as u64;
    let ctx = w.attended() as u64;
    StageOps {
        qkv: l * d * d + 2 * l * d * kv,
        proj: l * d * d,
        ffn1: l * d * f,
        ffn2: l * f * d,
        scores: l * ctx * d,
        attn_v: l * ctx * d,
    }
}

/// Softmax inputs per layer: one score per (query, key, head).
pub fn softmax_elements(w: &WorkloadSpec) -> u64 {
    (w.rows() * w.attended() * w.heads) as u64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bert_base_counts() {
        let ops = count_ops(&WorkloadSpec::bert_base(128));
        assert_eq!(ops.ffn1, 301_989_888);
        assert_eq!(ops.ffn2, ops.ffn1);
        assert_eq!(ops.qkv, 3 * 128 * 768 * 768);
        assert_eq!(ops.scores, 128 * 128 * 768);
        assert!(ops.static_fraction() > 0.70);
        assert!((ops.static_fraction() - 9216.0 / 9472.0).abs() < 1e-12);
    }

    #[test]
    fn generation_step() {
        let mut w = WorkloadSpec::gpt2_generate();
        let ops = count_ops(&w);
        assert_eq!(ops.qkv, 3 * 768 * 768);
        let before = ops.scores;
        w.context *= 2;
        assert_eq!(count_ops(&w).scores, 2 * before);
    }

    #[test]
    fn grouped_query_attention() {
        let ops = count_ops(&WorkloadSpec::llama3_1b_generate());
        assert_eq!(ops.qkv, 2048 * 2048 + 2 * 2048 * 512);
    }
}
