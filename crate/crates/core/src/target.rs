//! The evolving order-k Markov model that stands in for the policy under RL.
//!
//! Rows are stored only for materialised contexts; any other context reads
//! the uniform row. Each row keeps a tempered copy so that lookups during
//! rollout never recompute powers.

use std::borrow::Cow;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::context::ContextCodec;
use crate::rng::RngStream;
use crate::token::{sample_token, Distribution, DistributionError, TokenId};

/// Anything that yields a next-token distribution for a context.
pub trait NextTokenModel {
    fn vocab(&self) -> usize;
    /// How many trailing context tokens the model reads.
    fn order(&self) -> usize;
    fn next_dist(&self, ctx: &[TokenId]) -> Cow<'_, Distribution>;
}

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("vocabulary must have at least one token")]
    EmptyVocab,
    #[error("order {order} over a vocabulary of {vocab} overflows the context key space")]
    OrderTooLarge { vocab: usize, order: usize },
    #[error("temperature must be finite and >= 0, got {0}")]
    BadTemperature(f64),
    #[error("eos token {0} outside vocabulary")]
    BadEos(u32),
    #[error("row {row}: context has {got} tokens, expected {expected}")]
    ContextLength {
        row: usize,
        got: usize,
        expected: usize,
    },
    #[error("row {row}: token {token} outside vocabulary of {vocab}")]
    ContextToken {
        row: usize,
        token: u32,
        vocab: usize,
    },
    #[error("row {row}: has {got} probabilities, expected {expected}")]
    RowWidth {
        row: usize,
        got: usize,
        expected: usize,
    },
    #[error("row {row}: {source}")]
    Row {
        row: usize,
        #[source]
        source: DistributionError,
    },
    #[error("unsupported model document `{format}` version {version}")]
    Format { format: String, version: u32 },
    #[error("model json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq)]
struct Row {
    raw: Distribution,
    tempered: Distribution,
}

impl Row {
    fn new(raw: Distribution, temperature: f64) -> Self {
        let tempered = raw.tempered(temperature);
        Self { raw, tempered }
    }
}

/// Parameters for [`MarkovTargetModel::random`].
///
/// Each row is `(1 - coupling) * base[last token] + coupling * own`, with
/// `base` and `own` symmetric Dirichlet draws. `coupling` sets how much the
/// older context tokens matter, and therefore how far a lower-order drafter
/// can get.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetShape {
    pub vocab: usize,
    pub order: usize,
    pub concentration: f64,
    pub context_coupling: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarkovTargetModel {
    codec: ContextCodec,
    temperature: f64,
    step_id: u64,
    eos: Option<TokenId>,
    rows: BTreeMap<u64, Row>,
    uniform: Distribution,
}

impl MarkovTargetModel {
    /// A model with no materialised rows: every context reads uniform.
    pub fn uniform(vocab: usize, order: usize) -> Result<Self, ModelError> {
        if vocab == 0 {
            return Err(ModelError::EmptyVocab);
        }
        let codec =
            ContextCodec::new(vocab, order).ok_or(ModelError::OrderTooLarge { vocab, order })?;
        Ok(Self {
            codec,
            temperature: 1.0,
            step_id: 0,
            eos: None,
            rows: BTreeMap::new(),
            uniform: Distribution::uniform(vocab),
        })
    }

    /// Builds a model from explicit `(context, row)` pairs. Contexts shorter
    /// than `order` are left-padded.
    pub fn from_rows<I>(vocab: usize, order: usize, rows: I) -> Result<Self, ModelError>
    where
        I: IntoIterator<Item = (Vec<TokenId>, Distribution)>,
    {
        let mut model = Self::uniform(vocab, order)?;
        for (i, (ctx, dist)) in rows.into_iter().enumerate() {
            if ctx.len() > order {
                return Err(ModelError::ContextLength {
                    row: i,
                    got: ctx.len(),
                    expected: order,
                });
            }
            if let Some(t) = ctx.iter().find(|t| !t.is_begin() && t.index() >= vocab) {
                return Err(ModelError::ContextToken {
                    row: i,
                    token: t.0,
                    vocab,
                });
            }
            if dist.vocab() != vocab {
                return Err(ModelError::RowWidth {
                    row: i,
                    got: dist.vocab(),
                    expected: vocab,
                });
            }
            let key = model.codec.key(&ctx);
            model.rows.insert(key, Row::new(dist, model.temperature));
        }
        Ok(model)
    }

    /// Draws a row for every reachable context according to `shape`.
    pub fn random(shape: TargetShape, rng: &mut RngStream) -> Result<Self, ModelError> {
        let mut model = Self::uniform(shape.vocab, shape.order)?;
        let v = shape.vocab;
        let bases: Vec<Distribution> = (0..=v)
            .map(|_| Distribution::dirichlet(v, shape.concentration, rng))
            .collect();
        for key in model.codec.reachable_keys() {
            let window = model.codec.decode(key);
            let last = window.last().copied().unwrap_or(TokenId::BEGIN);
            let base = if last.is_begin() {
                &bases[v]
            } else {
                &bases[last.index()]
            };
            let own = Distribution::dirichlet(v, shape.concentration, rng);
            let raw = base.mix(&own, shape.context_coupling);
            model.rows.insert(key, Row::new(raw, model.temperature));
        }
        Ok(model)
    }

    pub fn with_temperature(mut self, temperature: f64) -> Result<Self, ModelError> {
        if !temperature.is_finite() || temperature < 0.0 {
            return Err(ModelError::BadTemperature(temperature));
        }
        self.temperature = temperature;
        for row in self.rows.values_mut() {
            row.tempered = row.raw.tempered(temperature);
        }
        Ok(self)
    }

    pub fn with_eos(mut self, eos: Option<TokenId>) -> Result<Self, ModelError> {
        if let Some(t) = eos {
            if t.index() >= self.vocab() {
                return Err(ModelError::BadEos(t.0));
            }
        }
        self.eos = eos;
        Ok(self)
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn step_id(&self) -> u64 {
        self.step_id
    }

    pub fn eos(&self) -> Option<TokenId> {
        self.eos
    }

    pub fn codec(&self) -> ContextCodec {
        self.codec
    }

    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    /// Untempered row for the last `order` tokens of `ctx`.
    pub fn raw_row(&self, ctx: &[TokenId]) -> &Distribution {
        self.rows
            .get(&self.codec.key(ctx))
            .map(|r| &r.raw)
            .unwrap_or(&self.uniform)
    }

    /// Tempered next-token distribution. Temperature 0 gives the argmax one-hot.
    pub fn target_next_dist(&self, ctx: &[TokenId]) -> &Distribution {
        self.rows
            .get(&self.codec.key(ctx))
            .map(|r| &r.tempered)
            .unwrap_or(&self.uniform)
    }

    /// Greedy choice for `ctx`, ties to the lowest id.
    pub fn argmax(&self, ctx: &[TokenId]) -> TokenId {
        self.raw_row(ctx).argmax()
    }

    /// Mixes every materialised row toward a fresh Dirichlet(1) draw and
    /// advances the step counter. Rows are visited in key order so the draw
    /// sequence is fixed by the stream.
    pub fn apply_drift(&self, lambda: f64, rng: &mut RngStream) -> Self {
        assert!(
            (0.0..=1.0).contains(&lambda),
            "drift weight {lambda} outside [0, 1]"
        );
        let v = self.vocab();
        let mut next = self.clone();
        for row in next.rows.values_mut() {
            let perturbation = Distribution::dirichlet(v, 1.0, rng);
            if lambda == 0.0 {
                continue;
            }
            let raw = if lambda == 1.0 {
                perturbation
            } else {
                row.raw.mix(&perturbation, lambda)
            };
            *row = Row::new(raw, self.temperature);
        }
        next.step_id += 1;
        next
    }

    pub fn to_json(&self) -> String {
        let doc = ModelDocument {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            vocab_size: self.vocab(),
            order: self.order(),
            temperature: self.temperature,
            step_id: self.step_id,
            eos: self.eos.map(|t| t.0),
            rows: self
                .rows
                .iter()
                .map(|(&key, row)| RowDocument {
                    context: self
                        .codec
                        .decode(key)
                        .into_iter()
                        .map(|t| (!t.is_begin()).then_some(t.0))
                        .collect(),
                    probs: row.raw.probs().to_vec(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("model document serialises")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let doc: ModelDocument = serde_json::from_str(text)?;
        if doc.format != MODEL_FORMAT || doc.version != MODEL_VERSION {
            return Err(ModelError::Format {
                format: doc.format,
                version: doc.version,
            });
        }
        let order = doc.order;
        let vocab = doc.vocab_size;
        let mut rows = Vec::with_capacity(doc.rows.len());
        for (i, row) in doc.rows.into_iter().enumerate() {
            if row.context.len() != order {
                return Err(ModelError::ContextLength {
                    row: i,
                    got: row.context.len(),
                    expected: order,
                });
            }
            if row.probs.len() != vocab {
                return Err(ModelError::RowWidth {
                    row: i,
                    got: row.probs.len(),
                    expected: vocab,
                });
            }
            let ctx = row
                .context
                .iter()
                .map(|t| t.map(TokenId).unwrap_or(TokenId::BEGIN))
                .collect();
            let dist = Distribution::new(row.probs)
                .map_err(|source| ModelError::Row { row: i, source })?;
            rows.push((ctx, dist));
        }
        let mut model = Self::from_rows(vocab, order, rows)?
            .with_temperature(doc.temperature)?
            .with_eos(doc.eos.map(TokenId))?;
        model.step_id = doc.step_id;
        Ok(model)
    }
}

impl NextTokenModel for MarkovTargetModel {
    fn vocab(&self) -> usize {
        self.codec.vocab()
    }

    fn order(&self) -> usize {
        self.codec.order()
    }

    fn next_dist(&self, ctx: &[TokenId]) -> Cow<'_, Distribution> {
        Cow::Borrowed(self.target_next_dist(ctx))
    }
}

const MODEL_FORMAT: &str = "tailspec-markov-target";
const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDocument {
    format: String,
    version: u32,
    vocab_size: usize,
    order: usize,
    temperature: f64,
    step_id: u64,
    eos: Option<u32>,
    rows: Vec<RowDocument>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RowDocument {
    /// Oldest token first; `null` marks BEGIN padding.
    context: Vec<Option<u32>>,
    probs: Vec<f64>,
}

/// Samples from the target one token at a time until EOS or `max_len`
/// tokens. Returns only the generated suffix. Consumes one uniform per token.
pub fn generate_autoregressive(
    model: &MarkovTargetModel,
    prompt: &[TokenId],
    max_len: usize,
    rng: &mut RngStream,
) -> Vec<TokenId> {
    assert!(max_len >= 1, "max_len must be at least 1");
    let mut seq = Vec::with_capacity(prompt.len() + max_len);
    seq.extend_from_slice(prompt);
    for _ in 0..max_len {
        let t = sample_token(model.target_next_dist(&seq), rng);
        seq.push(t);
        if Some(t) == model.eos() {
            break;
        }
    }
    seq.split_off(prompt.len())
}
