//! The routing policy network: binary slot vectors are embedded per aisle,
//! tagged with sinusoidal aisle encodings, passed through masked
//! encoder layers (attention restricted to the current and future aisles),
//! and projected to one clipped logit per action pair. A single forward pass
//! scores every aisle at once; decoding then walks the tour environment,
//! masking invalid pairs before the softmax.

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::tensor::masked_softmax_row;
use crate::tensor::{ParamSet, Tape, Tensor};
use crate::tourgraph::{ActionPair, EnvState, Rollout, ACTION_PAIR_COUNT};
use crate::warehouse::AisleSequence;
use crate::{Error, Result};

/// Magic bytes and version of the weights file format.
const WEIGHTS_MAGIC: &[u8; 4] = b"PKWT";
const WEIGHTS_VERSION: u32 = 1;

/// Network dimensions and decoding switches.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub hidden_dim: usize,
    pub num_heads: usize,
    pub num_layers: usize,
    pub feed_forward_dim: usize,
    pub logit_clip: f64,
    /// Input width: slots per aisle.
    pub slot_dim: usize,
    /// Mask every `Gap` pair during decoding, guaranteeing tours that enter
    /// each aisle at most once.
    pub simplified: bool,
    /// Encode the physical aisle index rather than the position in the
    /// compacted sequence, so spacing created by skipped empty aisles stays
    /// visible to the model.
    pub encode_original_index: bool,
}

impl ModelConfig {
    /// The full-size configuration: hidden width 128, 8 heads, 3 layers.
    pub fn standard(slot_dim: usize) -> Self {
        ModelConfig::sized(slot_dim, 128, 8, 3)
    }

    pub fn sized(slot_dim: usize, hidden_dim: usize, num_heads: usize, num_layers: usize) -> Self {
        let cfg = ModelConfig {
            hidden_dim,
            num_heads,
            num_layers,
            feed_forward_dim: 4 * hidden_dim,
            logit_clip: 10.0,
            slot_dim,
            simplified: false,
            encode_original_index: true,
        };
        cfg.validate().expect("valid model dimensions");
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim == 0 || self.num_heads == 0 || self.num_layers == 0 {
            return Err(Error::Domain("model dimensions must be positive".into()));
        }
        if !self.hidden_dim.is_multiple_of(self.num_heads) {
            return Err(Error::Domain(format!(
                "hidden_dim {} not divisible by num_heads {}",
                self.hidden_dim, self.num_heads
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.hidden_dim / self.num_heads
    }
}

struct LayerHandles {
    query: Vec<usize>,
    key: Vec<usize>,
    value: Vec<usize>,
    proj: usize,
    norm1_gain: usize,
    norm1_bias: usize,
    ff1_w: usize,
    ff1_b: usize,
    ff2_w: usize,
    ff2_b: usize,
    norm2_gain: usize,
    norm2_bias: usize,
}

struct Handles {
    embed_w: usize,
    embed_b: usize,
    layers: Vec<LayerHandles>,
    out_w: usize,
    out_b: usize,
}

/// Model weights: a [`ParamSet`] laid out in a fixed registration order
/// derived from the configuration.
pub struct PolicyParameters {
    pub config: ModelConfig,
    pub set: ParamSet,
    handles: Handles,
}

impl Clone for PolicyParameters {
    fn clone(&self) -> Self {
        PolicyParameters {
            config: self.config.clone(),
            set: self.set.clone(),
            handles: register_shapes(&self.config, &mut ParamSet::new()),
        }
    }
}

/// Registers every parameter of the architecture (zero-filled) and returns
/// the handle table. The set passed in must be empty.
fn register_shapes(cfg: &ModelConfig, set: &mut ParamSet) -> Handles {
    let d = cfg.hidden_dim;
    let dk = cfg.head_dim();
    let mut reg = |name: String, rows: usize, cols: usize| -> usize {
        set.register(&name, Tensor::zeros(rows, cols))
    };
    let embed_w = reg("embed.w".into(), cfg.slot_dim, d);
    let embed_b = reg("embed.b".into(), 1, d);
    let mut layers = Vec::with_capacity(cfg.num_layers);
    for layer in 0..cfg.num_layers {
        let mut query = Vec::with_capacity(cfg.num_heads);
        let mut key = Vec::with_capacity(cfg.num_heads);
        let mut value = Vec::with_capacity(cfg.num_heads);
        for head in 0..cfg.num_heads {
            query.push(reg(format!("layer{layer}.head{head}.wq"), d, dk));
            key.push(reg(format!("layer{layer}.head{head}.wk"), d, dk));
            value.push(reg(format!("layer{layer}.head{head}.wv"), d, dk));
        }
        layers.push(LayerHandles {
            query,
            key,
            value,
            proj: reg(format!("layer{layer}.wo"), d, d),
            norm1_gain: reg(format!("layer{layer}.norm1.gain"), 1, d),
            norm1_bias: reg(format!("layer{layer}.norm1.bias"), 1, d),
            ff1_w: reg(format!("layer{layer}.ff1.w"), d, cfg.feed_forward_dim),
            ff1_b: reg(format!("layer{layer}.ff1.b"), 1, cfg.feed_forward_dim),
            ff2_w: reg(format!("layer{layer}.ff2.w"), cfg.feed_forward_dim, d),
            ff2_b: reg(format!("layer{layer}.ff2.b"), 1, d),
            norm2_gain: reg(format!("layer{layer}.norm2.gain"), 1, d),
            norm2_bias: reg(format!("layer{layer}.norm2.bias"), 1, d),
        });
    }
    let out_w = reg("out.w".into(), d, ACTION_PAIR_COUNT);
    let out_b = reg("out.b".into(), 1, ACTION_PAIR_COUNT);
    Handles {
        embed_w,
        embed_b,
        layers,
        out_w,
        out_b,
    }
}

impl PolicyParameters {
    /// Fresh weights: projections uniform in `±1/sqrt(hidden_dim)`, biases
    /// zero, norm gains one.
    pub fn init(config: ModelConfig, seed: u64) -> Self {
        config.validate().expect("valid model configuration");
        let mut set = ParamSet::new();
        let handles = register_shapes(&config, &mut set);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 1.0 / (config.hidden_dim as f64).sqrt();
        for index in 0..set.len() {
            let name = set.get(index).name.clone();
            let tensor = set.value_mut(index);
            if name.ends_with(".gain") {
                tensor.data_mut().fill(1.0);
            } else if name.ends_with(".b") || name.ends_with(".bias") {
                // already zero
            } else {
                for v in tensor.data_mut() {
                    *v = rng.random_range(-bound..bound);
                }
            }
        }
        PolicyParameters {
            config,
            set,
            handles,
        }
    }

    /// Wraps an existing parameter set laid out for this configuration
    /// (same registration order and shapes as [`PolicyParameters::init`]).
    pub fn with_values(config: ModelConfig, set: ParamSet) -> Self {
        let mut scratch = ParamSet::new();
        let handles = register_shapes(&config, &mut scratch);
        assert_eq!(
            set.len(),
            scratch.len(),
            "parameter set has {} tensors, architecture needs {}",
            set.len(),
            scratch.len()
        );
        PolicyParameters {
            config,
            set,
            handles,
        }
    }

    /// Errors when the stored configuration differs from the expected one,
    /// naming the first mismatching field.
    pub fn ensure_config(&self, expected: &ModelConfig) -> Result<()> {
        let ours = &self.config;
        let checks: [(&str, usize, usize); 5] = [
            ("hidden_dim", ours.hidden_dim, expected.hidden_dim),
            ("num_heads", ours.num_heads, expected.num_heads),
            ("num_layers", ours.num_layers, expected.num_layers),
            (
                "feed_forward_dim",
                ours.feed_forward_dim,
                expected.feed_forward_dim,
            ),
            ("slot_dim", ours.slot_dim, expected.slot_dim),
        ];
        for (field, actual, wanted) in checks {
            if actual != wanted {
                return Err(Error::Format(format!(
                    "weights {field} is {actual}, expected {wanted}"
                )));
            }
        }
        Ok(())
    }

    /// Writes the weights file: magic, version, a JSON header with the
    /// configuration and tensor directory (name, shape, byte offset), then
    /// all values as little-endian `f64`.
    pub fn save(&self, path: &Path) -> Result<()> {
        #[derive(Serialize)]
        struct DirEntry<'a> {
            name: &'a str,
            rows: usize,
            cols: usize,
            offset: usize,
        }
        #[derive(Serialize)]
        struct Header<'a> {
            config: &'a ModelConfig,
            tensors: Vec<DirEntry<'a>>,
        }
        let mut offset = 0;
        let tensors: Vec<DirEntry> = self
            .set
            .iter()
            .map(|p| {
                let entry = DirEntry {
                    name: &p.name,
                    rows: p.value.rows(),
                    cols: p.value.cols(),
                    offset,
                };
                offset += p.value.len() * 8;
                entry
            })
            .collect();
        let header = serde_json::to_vec(&Header {
            config: &self.config,
            tensors,
        })
        .map_err(|e| Error::Format(format!("encoding weights header: {e}")))?;

        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        file.write_all(WEIGHTS_MAGIC)?;
        file.write_all(&WEIGHTS_VERSION.to_le_bytes())?;
        file.write_all(&(header.len() as u32).to_le_bytes())?;
        file.write_all(&header)?;
        for param in self.set.iter() {
            for &v in param.value.data() {
                file.write_all(&v.to_le_bytes())?;
            }
        }
        file.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        #[derive(Deserialize)]
        struct DirEntry {
            name: String,
            rows: usize,
            cols: usize,
            offset: usize,
        }
        #[derive(Deserialize)]
        struct Header {
            config: ModelConfig,
            tensors: Vec<DirEntry>,
        }
        let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 4];
        file.read_exact(&mut magic)?;
        if &magic != WEIGHTS_MAGIC {
            return Err(Error::Format("not a weights file".into()));
        }
        let mut word = [0u8; 4];
        file.read_exact(&mut word)?;
        let version = u32::from_le_bytes(word);
        if version != WEIGHTS_VERSION {
            return Err(Error::Format(format!(
                "unknown weights version {version} (expected {WEIGHTS_VERSION})"
            )));
        }
        file.read_exact(&mut word)?;
        let header_len = u32::from_le_bytes(word) as usize;
        let mut header_bytes = vec![0u8; header_len];
        file.read_exact(&mut header_bytes)?;
        let header: Header = serde_json::from_slice(&header_bytes)
            .map_err(|e| Error::Format(format!("decoding weights header: {e}")))?;
        header.config.validate()?;

        let mut set = ParamSet::new();
        let handles = register_shapes(&header.config, &mut set);
        if header.tensors.len() != set.len() {
            return Err(Error::Format(format!(
                "weights directory has {} tensors, architecture needs {}",
                header.tensors.len(),
                set.len()
            )));
        }
        let mut blob = Vec::new();
        file.read_to_end(&mut blob)?;
        for entry in &header.tensors {
            let index = set.index_of(&entry.name).ok_or_else(|| {
                Error::Format(format!("unexpected tensor {} in weights file", entry.name))
            })?;
            let expected = set.get(index).value.shape();
            if (entry.rows, entry.cols) != expected {
                return Err(Error::Format(format!(
                    "tensor {} has shape ({}, {}), expected {:?}",
                    entry.name, entry.rows, entry.cols, expected
                )));
            }
            let count = entry.rows * entry.cols;
            let end = entry.offset + count * 8;
            if end > blob.len() {
                return Err(Error::Format(format!(
                    "tensor {} data out of bounds",
                    entry.name
                )));
            }
            let values: Vec<f64> = blob[entry.offset..end]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            *set.value_mut(index) = Tensor::from_vec(entry.rows, entry.cols, values);
        }
        Ok(PolicyParameters {
            config: header.config,
            set,
            handles,
        })
    }
}

/// Sinusoidal aisle encoding: even components are sines, odd components
/// cosines of `position / 10000^(2j/dim)`.
pub fn aisle_encoding(position: usize, dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|component| {
            let pair = (component / 2) as f64;
            let angle = position as f64 / 10000f64.powf(2.0 * pair / dim as f64);
            if component % 2 == 0 {
                angle.sin()
            } else {
                angle.cos()
            }
        })
        .collect()
}

/// Clipped logits for every aisle of the sequence, shape `(n, 16)`.
pub fn forward(
    tape: &mut Tape,
    params: &PolicyParameters,
    seq: &AisleSequence,
) -> crate::tensor::NodeId {
    forward_padded(tape, params, seq, 0)
}

/// Forward pass with `pad` all-zero rows prepended. The anti-causal
/// attention mask keeps real aisles from attending to anything before them,
/// so rows `pad..` reproduce the unpadded output; this is what makes batches
/// of mixed sizes start-padded rather than end-padded.
pub fn forward_padded(
    tape: &mut Tape,
    params: &PolicyParameters,
    seq: &AisleSequence,
    pad: usize,
) -> crate::tensor::NodeId {
    forward_reading(tape, &params.config, &params.handles, &params.set, seq, pad)
}

/// Forward pass reading parameter values from `set`, which must share the
/// model's registration layout. Lets the gradient checker evaluate the same
/// graph on perturbed copies of the weights.
fn forward_reading(
    tape: &mut Tape,
    cfg: &ModelConfig,
    handles: &Handles,
    set: &ParamSet,
    seq: &AisleSequence,
    pad: usize,
) -> crate::tensor::NodeId {
    let n = seq.len();
    let total = pad + n;
    assert!(n >= 1, "empty aisle sequence");

    let mut slot_rows = Tensor::zeros(total, cfg.slot_dim);
    let mut encodings = Tensor::zeros(total, cfg.hidden_dim);
    for (row, entry) in seq.entries().iter().enumerate() {
        assert_eq!(
            entry.slots.len(),
            cfg.slot_dim,
            "shape mismatch: aisle has {} slots, model expects {}",
            entry.slots.len(),
            cfg.slot_dim
        );
        for (slot, &occupied) in entry.slots.iter().enumerate() {
            if occupied {
                slot_rows.set(pad + row, slot, 1.0);
            }
        }
        let position = if cfg.encode_original_index {
            entry.aisle - 1
        } else {
            row
        };
        let encoding = aisle_encoding(position, cfg.hidden_dim);
        for (col, &v) in encoding.iter().enumerate() {
            encodings.set(pad + row, col, v);
        }
    }

    let z = tape.constant(slot_rows);
    let embed_w = tape.param(set, handles.embed_w);
    let embed_b = tape.param(set, handles.embed_b);
    let projected = tape.matmul(z, embed_w);
    let biased = tape.add(projected, embed_b);
    let scaled = tape.scale(biased, (cfg.hidden_dim as f64).sqrt());
    let enc = tape.constant(encodings);
    let mut x = tape.add(scaled, enc);

    // row i may attend to columns j >= i only
    let mut attn_mask = vec![false; total * total];
    for i in 0..total {
        for j in 0..total {
            attn_mask[i * total + j] = i > j;
        }
    }

    let head_scale = 1.0 / (cfg.head_dim() as f64).sqrt();
    for layer in &handles.layers {
        let mut heads = Vec::with_capacity(cfg.num_heads);
        for head in 0..cfg.num_heads {
            let wq = tape.param(set, layer.query[head]);
            let wk = tape.param(set, layer.key[head]);
            let wv = tape.param(set, layer.value[head]);
            let q = tape.matmul(x, wq);
            let k = tape.matmul(x, wk);
            let v = tape.matmul(x, wv);
            let kt = tape.transpose(k);
            let scores = tape.matmul(q, kt);
            let scaled_scores = tape.scale(scores, head_scale);
            let weights = tape.masked_softmax(scaled_scores, &attn_mask);
            heads.push(tape.matmul(weights, v));
        }
        let concat = tape.concat_cols(&heads);
        let wo = tape.param(set, layer.proj);
        let mha = tape.matmul(concat, wo);
        let residual = tape.add(x, mha);
        let g1 = tape.param(set, layer.norm1_gain);
        let b1 = tape.param(set, layer.norm1_bias);
        x = tape.layer_norm(residual, g1, b1);

        let w1 = tape.param(set, layer.ff1_w);
        let b1f = tape.param(set, layer.ff1_b);
        let w2 = tape.param(set, layer.ff2_w);
        let b2f = tape.param(set, layer.ff2_b);
        let hidden = tape.matmul(x, w1);
        let hidden_b = tape.add(hidden, b1f);
        let activated = tape.relu(hidden_b);
        let ff = tape.matmul(activated, w2);
        let ff_b = tape.add(ff, b2f);
        let residual2 = tape.add(x, ff_b);
        let g2 = tape.param(set, layer.norm2_gain);
        let b2 = tape.param(set, layer.norm2_bias);
        x = tape.layer_norm(residual2, g2, b2);
    }

    let out_w = tape.param(set, handles.out_w);
    let out_b = tape.param(set, handles.out_b);
    let raw = tape.matmul(x, out_w);
    let raw_b = tape.add(raw, out_b);
    let squashed = tape.tanh(raw_b);
    tape.scale(squashed, cfg.logit_clip)
}

/// Per-aisle clipped action scores; plain values without a graph.
pub struct Logits(pub Tensor);

pub fn forward_logits(params: &PolicyParameters, seq: &AisleSequence) -> Logits {
    let mut tape = Tape::new();
    let out = forward(&mut tape, params, seq);
    Logits(tape.value(out).clone())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DecodeMode {
    Greedy,
    Sample,
}

/// Builds a tour by walking the environment aisle by aisle: mask the 16
/// logits down to the valid pairs, softmax, then pick greedily (ties to the
/// lowest index) or sample. Probabilities of the chosen actions are recorded
/// as log-probabilities on the rollout.
pub fn decode<R: Rng>(
    params: &PolicyParameters,
    seq: &AisleSequence,
    mode: DecodeMode,
    rng: &mut R,
) -> Rollout {
    let logits = forward_logits(params, seq);
    decode_with_logits(&logits, params.config.simplified, seq, mode, rng)
}

pub fn decode_with_logits<R: Rng>(
    logits: &Logits,
    simplified: bool,
    seq: &AisleSequence,
    mode: DecodeMode,
    rng: &mut R,
) -> Rollout {
    let mut env = EnvState::new(seq);
    let mut actions = Vec::with_capacity(seq.len());
    let mut step_costs = Vec::with_capacity(seq.len());
    let mut log_probs = Vec::with_capacity(seq.len());
    for position in 0..seq.len() {
        let valid = env.valid_mask(simplified);
        let mask: Vec<bool> = valid.iter().map(|&v| !v).collect();
        let probs = masked_softmax_row(logits.0.row_slice(position), &mask);
        let choice = match mode {
            DecodeMode::Greedy => {
                let mut best = 0;
                for (i, &p) in probs.iter().enumerate() {
                    if p > probs[best] {
                        best = i;
                    }
                }
                best
            }
            DecodeMode::Sample => {
                let draw: f64 = rng.random();
                let mut cumulative = 0.0;
                let mut chosen = None;
                for (i, &p) in probs.iter().enumerate() {
                    cumulative += p;
                    if draw < cumulative && p > 0.0 {
                        chosen = Some(i);
                        break;
                    }
                }
                // cumulative rounding can leave the draw unclaimed
                chosen.unwrap_or_else(|| {
                    probs
                        .iter()
                        .rposition(|&p| p > 0.0)
                        .expect("at least one valid action")
                })
            }
        };
        let pair = ActionPair::from_index(choice);
        log_probs.push(probs[choice].ln());
        let cost = env
            .step(pair)
            .expect("masked decoding only proposes valid pairs");
        actions.push(pair);
        step_costs.push(cost);
    }
    debug_assert!(env.state().terminal_valid());
    Rollout {
        actions,
        step_costs,
        total_length: env.total_cost(),
        log_probs: Some(log_probs),
    }
}

/// Differentiable sum of log-probabilities of a fixed action sequence under
/// the current parameters. Masks are regenerated by replaying the
/// environment, so they match what decoding saw.
pub fn sequence_log_prob(
    tape: &mut Tape,
    logits: crate::tensor::NodeId,
    seq: &AisleSequence,
    actions: &[ActionPair],
    simplified: bool,
) -> crate::tensor::NodeId {
    assert_eq!(actions.len(), seq.len(), "one action pair per aisle");
    let mut env = EnvState::new(seq);
    let mut total: Option<crate::tensor::NodeId> = None;
    for (position, &pair) in actions.iter().enumerate() {
        let valid = env.valid_mask(simplified);
        let mask: Vec<bool> = valid.iter().map(|&v| !v).collect();
        let row = tape.gather_rows(logits, &[position]);
        let probs = tape.masked_softmax(row, &mask);
        let picked = tape.slice_cols(probs, pair.index(), 1);
        let log_prob = tape.log(picked);
        total = Some(match total {
            Some(acc) => tape.add(acc, log_prob),
            None => log_prob,
        });
        env.step(pair).expect("replayed action is valid");
    }
    total.expect("non-empty sequence")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::finite_diff_check;
    use crate::tourgraph::VerticalAction;
    use crate::warehouse::{
        generate_instance, DistributionMode, GeometrySpec, Instance, Location, ProblemClass,
        WarehouseGeometry,
    };
    use approx::assert_abs_diff_eq;

    fn small_spec() -> GeometrySpec {
        GeometrySpec {
            slots_per_aisle: 10,
            slot_pitch: 1,
            cross_aisle_offset: 1,
            aisle_pitch: 5,
        }
    }

    fn shrunk_config() -> ModelConfig {
        ModelConfig::sized(10, 8, 2, 1)
    }

    fn small_instance(seed: u64) -> Instance {
        let class = ProblemClass::new(4, 5, DistributionMode::Uniform);
        generate_instance(&class, &small_spec(), seed).unwrap()
    }

    #[test]
    fn aisle_encoding_matches_definition() {
        let enc = aisle_encoding(0, 8);
        for (i, &v) in enc.iter().enumerate() {
            if i % 2 == 0 {
                assert_abs_diff_eq!(v, 0.0);
            } else {
                assert_abs_diff_eq!(v, 1.0);
            }
        }
        let enc = aisle_encoding(1, 8);
        assert_abs_diff_eq!(enc[0], 1f64.sin(), epsilon = 1e-12);
        assert!(aisle_encoding(123, 64).iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn forward_shape_and_clip() {
        let params = PolicyParameters::init(shrunk_config(), 1);
        let inst = Instance::new(
            WarehouseGeometry::custom(1, 10, 1, 1, 5).unwrap(),
            vec![Location::new(1, 3)],
            0,
        )
        .unwrap();
        let logits = forward_logits(&params, &inst.aisle_sequence());
        assert_eq!(logits.0.shape(), (1, ACTION_PAIR_COUNT));
        assert!(logits.0.data().iter().all(|v| v.abs() <= 10.0));
    }

    #[test]
    fn logits_are_anti_causal() {
        let params = PolicyParameters::init(shrunk_config(), 2);
        let geom = WarehouseGeometry::custom(4, 10, 1, 1, 5).unwrap();
        let base = Instance::new(
            geom.clone(),
            vec![
                Location::new(1, 2),
                Location::new(2, 4),
                Location::new(3, 6),
                Location::new(4, 8),
            ],
            0,
        )
        .unwrap();
        // change only aisle 2's items: rows for aisles 3 and 4 must not move
        let altered = Instance::new(
            geom,
            vec![
                Location::new(1, 2),
                Location::new(2, 9),
                Location::new(3, 6),
                Location::new(4, 8),
            ],
            0,
        )
        .unwrap();
        let a = forward_logits(&params, &base.aisle_sequence());
        let b = forward_logits(&params, &altered.aisle_sequence());
        for row in 2..4 {
            for col in 0..ACTION_PAIR_COUNT {
                assert_eq!(
                    a.0.get(row, col).to_bits(),
                    b.0.get(row, col).to_bits(),
                    "row {row} changed"
                );
            }
        }
        // while aisle 2's own row does change
        assert!(
            (0..ACTION_PAIR_COUNT).any(|col| a.0.get(1, col) != b.0.get(1, col)),
            "altered aisle should change its own logits"
        );
    }

    #[test]
    fn start_padding_reproduces_unpadded_rows() {
        let params = PolicyParameters::init(shrunk_config(), 3);
        let inst = small_instance(17);
        let seq = inst.aisle_sequence();
        let mut tape = Tape::new();
        let unpadded = forward(&mut tape, &params, &seq);
        let plain = tape.value(unpadded).clone();
        for pad in [1usize, 3] {
            let mut tape = Tape::new();
            let padded = forward_padded(&mut tape, &params, &seq, pad);
            let padded_values = tape.value(padded);
            for row in 0..seq.len() {
                for col in 0..ACTION_PAIR_COUNT {
                    let diff = (plain.get(row, col) - padded_values.get(pad + row, col)).abs();
                    assert!(diff < 1e-9, "pad {pad} row {row} col {col}: {diff}");
                }
            }
        }
    }

    #[test]
    fn greedy_decode_is_deterministic() {
        let params = PolicyParameters::init(shrunk_config(), 4);
        let inst = small_instance(5);
        let seq = inst.aisle_sequence();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = decode(&params, &seq, DecodeMode::Greedy, &mut rng);
        let b = decode(&params, &seq, DecodeMode::Greedy, &mut rng);
        assert_eq!(a, b);
    }

    #[test]
    fn masked_probabilities_sum_to_one_and_zero_on_invalid() {
        let params = PolicyParameters::init(shrunk_config(), 6);
        let inst = small_instance(11);
        let seq = inst.aisle_sequence();
        let logits = forward_logits(&params, &seq);
        let mut env = EnvState::new(&seq);
        for position in 0..seq.len() {
            let valid = env.valid_mask(false);
            let mask: Vec<bool> = valid.iter().map(|&v| !v).collect();
            let probs = masked_softmax_row(logits.0.row_slice(position), &mask);
            let total: f64 = probs.iter().sum();
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
            for (i, &p) in probs.iter().enumerate() {
                if !valid[i] {
                    assert_eq!(p, 0.0);
                }
            }
            let choice = probs.iter().position(|&p| p > 0.0).unwrap();
            env.step(ActionPair::from_index(choice)).unwrap();
        }
    }

    #[test]
    fn single_valid_action_gets_probability_one() {
        // zeroed parameters give uniform logits; a single-item depot aisle
        // in a one-aisle warehouse leaves top and bottom, then force one
        let probs = masked_softmax_row(&[0.0; 16], &(0..16).map(|i| i != 9).collect::<Vec<bool>>());
        assert_eq!(probs[9], 1.0);
        assert_eq!(probs.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn simplified_decoding_never_emits_gap() {
        let mut cfg = shrunk_config();
        cfg.simplified = true;
        let params = PolicyParameters::init(cfg, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for seed in 0..100u64 {
            let inst = small_instance(seed);
            let seq = inst.aisle_sequence();
            let rollout = decode(&params, &seq, DecodeMode::Sample, &mut rng);
            assert!(rollout
                .actions
                .iter()
                .all(|p| p.vertical != VerticalAction::Gap));
        }
    }

    #[test]
    fn sampled_rollouts_replay_validly() {
        let params = PolicyParameters::init(shrunk_config(), 8);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for seed in 0..50u64 {
            let inst = small_instance(seed);
            let seq = inst.aisle_sequence();
            let rollout = decode(&params, &seq, DecodeMode::Sample, &mut rng);
            let replayed = crate::tourgraph::replay(&rollout.actions, &seq).unwrap();
            assert_eq!(replayed.total_length, rollout.total_length);
        }
    }

    #[test]
    fn sequence_log_prob_gradient_passes_finite_differences() {
        let mut params = PolicyParameters::init(shrunk_config(), 9);
        let inst = small_instance(23);
        let seq = inst.aisle_sequence();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rollout = decode(&params, &seq, DecodeMode::Sample, &mut rng);
        let config = params.config.clone();
        let handles = register_shapes(&config, &mut ParamSet::new());
        let mut set = std::mem::take(&mut params.set);
        let err = finite_diff_check(
            |tape, set| {
                let logits = forward_reading(tape, &config, &handles, set, &seq, 0);
                sequence_log_prob(tape, logits, &seq, &rollout.actions, false)
            },
            &mut set,
            1e-5,
        );
        assert!(err < 1e-4, "relative error {err}");
    }

    #[test]
    fn weights_round_trip_bit_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path_a = dir.path().join("a.weights");
        let path_b = dir.path().join("b.weights");
        let params = PolicyParameters::init(shrunk_config(), 10);
        params.save(&path_a).unwrap();
        let loaded = PolicyParameters::load(&path_a).unwrap();
        loaded.save(&path_b).unwrap();
        assert_eq!(
            std::fs::read(&path_a).unwrap(),
            std::fs::read(&path_b).unwrap()
        );
        // forward is unchanged by the round trip
        let inst = small_instance(3);
        let seq = inst.aisle_sequence();
        let before = forward_logits(&params, &seq);
        let after = forward_logits(&loaded, &seq);
        assert_eq!(before.0, after.0);
    }

    #[test]
    fn load_reports_config_mismatch_by_field() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.weights");
        let params = PolicyParameters::init(shrunk_config(), 11);
        params.save(&path).unwrap();
        let loaded = PolicyParameters::load(&path).unwrap();
        let expected = ModelConfig::sized(10, 16, 2, 1);
        let err = loaded.ensure_config(&expected).unwrap_err();
        let message = err.to_string();
        assert!(message.contains("hidden_dim"), "{message}");
        assert!(message.contains("8"), "{message}");
        assert!(message.contains("16"), "{message}");
    }
}
