#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "posg/corpus.hpp"
#include "posg/kernels.hpp"
#include "posg/rng.hpp"

namespace posg::net {

struct ModelConfig {
  int n_layers = 2;
  int n_heads = 2;
  int d_model = 64;
  int d_ff = 256;
  int context_len = 64;
  int vocab_size = 0;
  int pos_count = 0;
  double dropout_rate = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

enum class HeadKind : std::uint8_t { Mle = 0, Posg = 1 };

struct LayerParams {
  std::vector<double> ln1_gain, ln1_bias;
  Matrix wq, wk, wv, wo;  // d_model x d_model
  std::vector<double> bq, bk, bv, bo;
  std::vector<double> ln2_gain, ln2_bias;
  Matrix w_ff1;  // d_model x d_ff
  Matrix w_ff2;  // d_ff x d_model
  std::vector<double> b_ff1, b_ff2;
};

struct ModelParams {
  Matrix token_input_emb;  // vocab_size x d_model
  Matrix position_emb;     // context_len x d_model
  std::vector<LayerParams> layers;
  std::vector<double> final_gain, final_bias;
  Matrix token_output_emb;  // vocab_size x d_model, the w_x vectors
  Matrix pos_output_emb;    // pos_count x d_model, the o_p vectors
};

// Named flat view over every parameter tensor, in a fixed order shared by the
// initializer, the optimizer, the checkpoint format and the gradient checks.
struct TensorRef {
  std::string name;
  double* data;
  std::size_t size;
  std::vector<std::size_t> shape;
};
std::vector<TensorRef> tensor_refs(ModelParams& params);

ModelParams init_params(const ModelConfig& config);
ModelParams zeros_like(const ModelParams& params);
std::size_t param_count(const ModelParams& params);

using HiddenStates = Matrix;  // one d_model row per input position

// Per-row cache of layer normalization statistics.
struct LayerNormCache {
  std::vector<double> mean, rstd;
};

struct LayerTrace {
  Matrix ln1_in, ln1_out;
  LayerNormCache ln1;
  Matrix q, k, v;            // T x d_model
  std::vector<Matrix> attn;  // per head, T x T attention probabilities
  Matrix heads_concat;       // T x d_model
  std::vector<std::uint8_t> drop_attn;
  Matrix ln2_in, ln2_out;
  LayerNormCache ln2;
  Matrix ff_pre, ff_act;  // T x d_ff
  std::vector<std::uint8_t> drop_ff;
};

struct ForwardTrace {
  std::vector<std::uint8_t> drop_emb;
  std::vector<LayerTrace> layers;
  Matrix final_in;
  LayerNormCache final_ln;
  HiddenStates hidden;
};

// Causal forward pass; one hidden state per input position. Dropout is active
// only when train_mode is set, dropout_rate > 0 and an rng is supplied;
// otherwise the pass is deterministic.
HiddenStates forward(const ModelParams& params, const ModelConfig& config,
                     std::span<const std::int32_t> tokens, bool train_mode = false,
                     Rng* dropout_rng = nullptr);

ForwardTrace forward_trace(const ModelParams& params, const ModelConfig& config,
                           std::span<const std::int32_t> tokens, bool train_mode,
                           Rng* dropout_rng);

// Backpropagates d_hidden (gradient at the final hidden states) through the
// backbone, accumulating into grads.
void backward_backbone(const ModelParams& params, const ModelConfig& config,
                       std::span<const std::int32_t> tokens, const ForwardTrace& trace,
                       const Matrix& d_hidden, ModelParams& grads);

// One training window: input ids, next-token targets with their tags, and a
// mask clearing padded targets out of the loss.
struct Window {
  std::vector<std::int32_t> input;
  std::vector<std::int32_t> target;
  std::vector<std::int32_t> target_pos;
  std::vector<std::uint8_t> mask;
};

// Contiguous non-overlapping windows of context_len targets per sequence;
// short remainders are PAD-filled and masked out.
std::vector<Window> make_windows(const std::vector<corpus::EncodedSequence>& sequences,
                                 const ModelConfig& config, std::int32_t pad_id);

struct LossGrads {
  double loss = 0.0;
  std::size_t n_targets = 0;
  ModelParams grads;
};

// Mean per-token objective over the batch and its exact gradient. head_kind
// selects between the plain softmax objective and the tag-factored one.
// Deterministic for a fixed dropout_seed.
LossGrads loss_and_grads(const ModelParams& params, const ModelConfig& config,
                         const corpus::PosPartition& partition, const std::vector<Window>& batch,
                         HeadKind head_kind, std::uint64_t dropout_seed);

// Objective value only (no gradients, no dropout).
double evaluate_loss(const ModelParams& params, const ModelConfig& config,
                     const corpus::PosPartition& partition, const std::vector<Window>& windows,
                     HeadKind head_kind);

struct OptimizerConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double grad_clip = 0.25;
  double weight_decay = 1e-3;
  int batch_size = 1;
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double valid_loss = 0.0;
  double wall_seconds = 0.0;
};

struct TrainResult {
  ModelParams params;
  std::vector<EpochStats> log;  // entry 0 is the untrained model
  bool diverged = false;
};

// Adam with decoupled-from-nothing classic L2 term, global-norm gradient
// clipping, deterministic shuffling. Single-threaded over steps; kernels
// inside a step are cell-parallel and order-stable.
TrainResult train(const ModelConfig& config, const corpus::PosPartition& partition,
                  const std::vector<Window>& train_windows,
                  const std::vector<Window>& valid_windows, HeadKind head_kind, int epochs,
                  const OptimizerConfig& opt);

// Versioned binary checkpoint: magic, format version, head kind, ModelConfig,
// then named little-endian float64 tensors with explicit shapes.
struct Checkpoint {
  ModelParams params;
  ModelConfig config;
  HeadKind head = HeadKind::Mle;
};

void save_checkpoint(std::ostream& out, const ModelParams& params, const ModelConfig& config,
                     HeadKind head);
Checkpoint load_checkpoint(std::istream& in);
void save_checkpoint_file(const std::string& path, const ModelParams& params,
                          const ModelConfig& config, HeadKind head);
Checkpoint load_checkpoint_file(const std::string& path);

}  // namespace posg::net
