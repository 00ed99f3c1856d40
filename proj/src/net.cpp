#include "posg/net.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "posg/errors.hpp"

namespace posg::net {

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kInitStd = 0.02;

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }

double gelu_deriv(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
  return cdf + x * pdf;
}

void layernorm_forward(Matrix& out, LayerNormCache& cache, const Matrix& in,
                       const std::vector<double>& gain, const std::vector<double>& bias) {
  const std::size_t d = in.cols;
  out.rows = in.rows;
  out.cols = d;
  out.data.resize(in.rows * d);
  cache.mean.resize(in.rows);
  cache.rstd.resize(in.rows);
  const auto n = static_cast<std::ptrdiff_t>(in.rows);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t t = 0; t < n; ++t) {
    const double* x = in.row(static_cast<std::size_t>(t));
    double* y = out.row(static_cast<std::size_t>(t));
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += x[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double c = x[j] - mean;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double rstd = 1.0 / std::sqrt(var + kLnEps);
    cache.mean[static_cast<std::size_t>(t)] = mean;
    cache.rstd[static_cast<std::size_t>(t)] = rstd;
    for (std::size_t j = 0; j < d; ++j) y[j] = gain[j] * ((x[j] - mean) * rstd) + bias[j];
  }
}

void layernorm_backward(Matrix& d_in, std::vector<double>& d_gain, std::vector<double>& d_bias,
                        const Matrix& d_out, const Matrix& in, const LayerNormCache& cache,
                        const std::vector<double>& gain) {
  const std::size_t d = in.cols;
  d_in.rows = in.rows;
  d_in.cols = d;
  d_in.data.assign(in.rows * d, 0.0);
  // Gain/bias gradients are a fold over rows; taken serially so the
  // accumulation order is fixed.
  for (std::size_t t = 0; t < in.rows; ++t) {
    const double* dy = d_out.row(t);
    const double* x = in.row(t);
    const double mean = cache.mean[t];
    const double rstd = cache.rstd[t];
    for (std::size_t j = 0; j < d; ++j) {
      const double xhat = (x[j] - mean) * rstd;
      d_gain[j] += dy[j] * xhat;
      d_bias[j] += dy[j];
    }
  }
  const auto n = static_cast<std::ptrdiff_t>(in.rows);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t t = 0; t < n; ++t) {
    const auto row = static_cast<std::size_t>(t);
    const double* dy = d_out.row(row);
    const double* x = in.row(row);
    double* dx = d_in.row(row);
    const double mean = cache.mean[row];
    const double rstd = cache.rstd[row];
    double m1 = 0.0, m2 = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double xhat = (x[j] - mean) * rstd;
      const double dxhat = dy[j] * gain[j];
      m1 += dxhat;
      m2 += dxhat * xhat;
    }
    m1 /= static_cast<double>(d);
    m2 /= static_cast<double>(d);
    for (std::size_t j = 0; j < d; ++j) {
      const double xhat = (x[j] - mean) * rstd;
      const double dxhat = dy[j] * gain[j];
      dx[j] = rstd * (dxhat - m1 - xhat * m2);
    }
  }
}

// Inverted dropout; mask entries are 1 for kept cells.
void apply_dropout(Matrix& m, std::vector<std::uint8_t>& mask, double rate, Rng& rng) {
  mask.resize(m.data.size());
  const double scale = 1.0 / (1.0 - rate);
  for (std::size_t i = 0; i < m.data.size(); ++i) {
    const bool keep = rng.uniform01() >= rate;
    mask[i] = keep ? 1 : 0;
    m.data[i] = keep ? m.data[i] * scale : 0.0;
  }
}

void dropout_backward(Matrix& grad, const std::vector<std::uint8_t>& mask, double rate) {
  if (mask.empty()) return;
  const double scale = 1.0 / (1.0 - rate);
  for (std::size_t i = 0; i < grad.data.size(); ++i)
    grad.data[i] = mask[i] ? grad.data[i] * scale : 0.0;
}

}  // namespace

void ModelConfig::validate() const {
  if (n_layers < 1 || n_heads < 1 || d_model < 1 || d_ff < 1 || context_len < 1)
    throw InvalidArgument("ModelConfig: all dimensions must be >= 1");
  if (d_model % n_heads != 0) throw InvalidArgument("ModelConfig: d_model not divisible by n_heads");
  if (vocab_size < 4) throw InvalidArgument("ModelConfig: vocab_size must be >= 4");
  if (pos_count < 1) throw InvalidArgument("ModelConfig: pos_count must be >= 1");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
    throw InvalidArgument("ModelConfig: dropout_rate must lie in [0, 1)");
}

std::vector<TensorRef> tensor_refs(ModelParams& p) {
  std::vector<TensorRef> refs;
  const auto mat = [&](const std::string& name, Matrix& m) {
    refs.push_back({name, m.data.data(), m.data.size(), {m.rows, m.cols}});
  };
  const auto vec = [&](const std::string& name, std::vector<double>& v) {
    refs.push_back({name, v.data(), v.size(), {v.size()}});
  };
  mat("token_input_emb", p.token_input_emb);
  mat("position_emb", p.position_emb);
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    auto& layer = p.layers[l];
    const std::string prefix = "layer" + std::to_string(l) + ".";
    vec(prefix + "ln1_gain", layer.ln1_gain);
    vec(prefix + "ln1_bias", layer.ln1_bias);
    mat(prefix + "wq", layer.wq);
    vec(prefix + "bq", layer.bq);
    mat(prefix + "wk", layer.wk);
    vec(prefix + "bk", layer.bk);
    mat(prefix + "wv", layer.wv);
    vec(prefix + "bv", layer.bv);
    mat(prefix + "wo", layer.wo);
    vec(prefix + "bo", layer.bo);
    vec(prefix + "ln2_gain", layer.ln2_gain);
    vec(prefix + "ln2_bias", layer.ln2_bias);
    mat(prefix + "w_ff1", layer.w_ff1);
    vec(prefix + "b_ff1", layer.b_ff1);
    mat(prefix + "w_ff2", layer.w_ff2);
    vec(prefix + "b_ff2", layer.b_ff2);
  }
  vec("final_gain", p.final_gain);
  vec("final_bias", p.final_bias);
  mat("token_output_emb", p.token_output_emb);
  mat("pos_output_emb", p.pos_output_emb);
  return refs;
}

ModelParams init_params(const ModelConfig& config) {
  config.validate();
  const auto d = static_cast<std::size_t>(config.d_model);
  const auto dff = static_cast<std::size_t>(config.d_ff);
  ModelParams p;
  p.token_input_emb = Matrix(static_cast<std::size_t>(config.vocab_size), d);
  p.position_emb = Matrix(static_cast<std::size_t>(config.context_len), d);
  p.layers.resize(static_cast<std::size_t>(config.n_layers));
  for (auto& layer : p.layers) {
    layer.ln1_gain.assign(d, 1.0);
    layer.ln1_bias.assign(d, 0.0);
    layer.wq = Matrix(d, d);
    layer.wk = Matrix(d, d);
    layer.wv = Matrix(d, d);
    layer.wo = Matrix(d, d);
    layer.bq.assign(d, 0.0);
    layer.bk.assign(d, 0.0);
    layer.bv.assign(d, 0.0);
    layer.bo.assign(d, 0.0);
    layer.ln2_gain.assign(d, 1.0);
    layer.ln2_bias.assign(d, 0.0);
    layer.w_ff1 = Matrix(d, dff);
    layer.w_ff2 = Matrix(dff, d);
    layer.b_ff1.assign(dff, 0.0);
    layer.b_ff2.assign(d, 0.0);
  }
  p.final_gain.assign(d, 1.0);
  p.final_bias.assign(d, 0.0);
  p.token_output_emb = Matrix(static_cast<std::size_t>(config.vocab_size), d);
  p.pos_output_emb = Matrix(static_cast<std::size_t>(config.pos_count), d);

  Rng rng(config.seed);
  for (Matrix* m : {&p.token_input_emb, &p.position_emb, &p.token_output_emb, &p.pos_output_emb})
    for (auto& value : m->data) value = rng.normal(0.0, kInitStd);
  for (auto& layer : p.layers)
    for (Matrix* m : {&layer.wq, &layer.wk, &layer.wv, &layer.wo, &layer.w_ff1, &layer.w_ff2})
      for (auto& value : m->data) value = rng.normal(0.0, kInitStd);
  return p;
}

ModelParams zeros_like(const ModelParams& params) {
  ModelParams z = params;
  auto refs = tensor_refs(z);
  for (auto& ref : refs) std::memset(ref.data, 0, ref.size * sizeof(double));
  return z;
}

std::size_t param_count(const ModelParams& params) {
  auto& mutable_params = const_cast<ModelParams&>(params);
  std::size_t n = 0;
  for (const auto& ref : tensor_refs(mutable_params)) n += ref.size;
  return n;
}

ForwardTrace forward_trace(const ModelParams& params, const ModelConfig& config,
                           std::span<const std::int32_t> tokens, bool train_mode,
                           Rng* dropout_rng) {
  const std::size_t seq_len = tokens.size();
  if (seq_len == 0) throw InvalidArgument("forward: empty input");
  if (seq_len > static_cast<std::size_t>(config.context_len))
    throw InvalidArgument("forward: input longer than context_len");
  for (const auto id : tokens)
    if (id < 0 || id >= config.vocab_size)
      throw InvalidArgument("forward: token id out of range: " + std::to_string(id));

  const auto d = static_cast<std::size_t>(config.d_model);
  const auto n_heads = static_cast<std::size_t>(config.n_heads);
  const std::size_t d_head = d / n_heads;
  const double attn_scale = 1.0 / std::sqrt(static_cast<double>(d_head));
  const bool dropout = train_mode && config.dropout_rate > 0.0 && dropout_rng != nullptr;

  ForwardTrace trace;
  Matrix x(seq_len, d);
  for (std::size_t t = 0; t < seq_len; ++t) {
    const double* emb = params.token_input_emb.row(static_cast<std::size_t>(tokens[t]));
    const double* pos = params.position_emb.row(t);
    double* out = x.row(t);
    for (std::size_t j = 0; j < d; ++j) out[j] = emb[j] + pos[j];
  }
  if (dropout) apply_dropout(x, trace.drop_emb, config.dropout_rate, *dropout_rng);

  trace.layers.resize(params.layers.size());
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& layer = params.layers[l];
    auto& lt = trace.layers[l];
    lt.ln1_in = x;
    layernorm_forward(lt.ln1_out, lt.ln1, lt.ln1_in, layer.ln1_gain, layer.ln1_bias);

    kernels::matmul(lt.q, lt.ln1_out, layer.wq);
    kernels::add_row_bias(lt.q, layer.bq);
    kernels::matmul(lt.k, lt.ln1_out, layer.wk);
    kernels::add_row_bias(lt.k, layer.bk);
    kernels::matmul(lt.v, lt.ln1_out, layer.wv);
    kernels::add_row_bias(lt.v, layer.bv);

    lt.attn.assign(n_heads, Matrix(seq_len, seq_len));
    lt.heads_concat = Matrix(seq_len, d);
    const auto heads_times_rows = static_cast<std::ptrdiff_t>(n_heads * seq_len);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t work = 0; work < heads_times_rows; ++work) {
      const std::size_t h = static_cast<std::size_t>(work) / seq_len;
      const std::size_t t = static_cast<std::size_t>(work) % seq_len;
      const std::size_t off = h * d_head;
      double* probs = lt.attn[h].row(t);
      const double* qrow = lt.q.row(t) + off;
      double max_score = -1e300;
      for (std::size_t s = 0; s <= t; ++s) {
        const double* krow = lt.k.row(s) + off;
        double score = 0.0;
        for (std::size_t j = 0; j < d_head; ++j) score += qrow[j] * krow[j];
        score *= attn_scale;
        probs[s] = score;
        max_score = std::max(max_score, score);
      }
      double z = 0.0;
      for (std::size_t s = 0; s <= t; ++s) {
        probs[s] = std::exp(probs[s] - max_score);
        z += probs[s];
      }
      double* ctx = lt.heads_concat.row(t) + off;
      for (std::size_t s = 0; s <= t; ++s) {
        probs[s] /= z;
        const double* vrow = lt.v.row(s) + off;
        for (std::size_t j = 0; j < d_head; ++j) ctx[j] += probs[s] * vrow[j];
      }
    }

    Matrix attn_proj;
    kernels::matmul(attn_proj, lt.heads_concat, layer.wo);
    kernels::add_row_bias(attn_proj, layer.bo);
    if (dropout) apply_dropout(attn_proj, lt.drop_attn, config.dropout_rate, *dropout_rng);
    for (std::size_t i = 0; i < x.data.size(); ++i) x.data[i] = lt.ln1_in.data[i] + attn_proj.data[i];

    lt.ln2_in = x;
    layernorm_forward(lt.ln2_out, lt.ln2, lt.ln2_in, layer.ln2_gain, layer.ln2_bias);
    kernels::matmul(lt.ff_pre, lt.ln2_out, layer.w_ff1);
    kernels::add_row_bias(lt.ff_pre, layer.b_ff1);
    lt.ff_act = lt.ff_pre;
    for (auto& value : lt.ff_act.data) value = gelu(value);
    Matrix ff_out;
    kernels::matmul(ff_out, lt.ff_act, layer.w_ff2);
    kernels::add_row_bias(ff_out, layer.b_ff2);
    if (dropout) apply_dropout(ff_out, lt.drop_ff, config.dropout_rate, *dropout_rng);
    for (std::size_t i = 0; i < x.data.size(); ++i) x.data[i] = lt.ln2_in.data[i] + ff_out.data[i];
  }

  trace.final_in = x;
  layernorm_forward(trace.hidden, trace.final_ln, trace.final_in, params.final_gain,
                    params.final_bias);
  return trace;
}

HiddenStates forward(const ModelParams& params, const ModelConfig& config,
                     std::span<const std::int32_t> tokens, bool train_mode, Rng* dropout_rng) {
  return forward_trace(params, config, tokens, train_mode, dropout_rng).hidden;
}

void backward_backbone(const ModelParams& params, const ModelConfig& config,
                       std::span<const std::int32_t> tokens, const ForwardTrace& trace,
                       const Matrix& d_hidden, ModelParams& grads) {
  const std::size_t seq_len = tokens.size();
  const auto d = static_cast<std::size_t>(config.d_model);
  const auto n_heads = static_cast<std::size_t>(config.n_heads);
  const std::size_t d_head = d / n_heads;
  const double attn_scale = 1.0 / std::sqrt(static_cast<double>(d_head));

  Matrix dx;
  layernorm_backward(dx, grads.final_gain, grads.final_bias, d_hidden, trace.final_in,
                     trace.final_ln, params.final_gain);

  for (std::size_t li = params.layers.size(); li-- > 0;) {
    const auto& layer = params.layers[li];
    const auto& lt = trace.layers[li];
    auto& gl = grads.layers[li];

    // Feed-forward branch: dx covers both the residual and the branch output.
    Matrix d_ff_out = dx;
    dropout_backward(d_ff_out, lt.drop_ff, config.dropout_rate);
    // b_ff2 gradient: serial fold over rows.
    for (std::size_t t = 0; t < seq_len; ++t) {
      const double* row = d_ff_out.row(t);
      for (std::size_t j = 0; j < d; ++j) gl.b_ff2[j] += row[j];
    }
    kernels::matmul_at_b_accum(gl.w_ff2, lt.ff_act, d_ff_out);
    Matrix d_act;
    kernels::matmul_a_bt(d_act, d_ff_out, layer.w_ff2);
    for (std::size_t i = 0; i < d_act.data.size(); ++i)
      d_act.data[i] *= gelu_deriv(lt.ff_pre.data[i]);
    for (std::size_t t = 0; t < seq_len; ++t) {
      const double* row = d_act.row(t);
      for (std::size_t j = 0; j < static_cast<std::size_t>(config.d_ff); ++j)
        gl.b_ff1[j] += row[j];
    }
    kernels::matmul_at_b_accum(gl.w_ff1, lt.ln2_out, d_act);
    Matrix d_ln2_out;
    kernels::matmul_a_bt(d_ln2_out, d_act, layer.w_ff1);
    Matrix d_ln2_in;
    layernorm_backward(d_ln2_in, gl.ln2_gain, gl.ln2_bias, d_ln2_out, lt.ln2_in, lt.ln2,
                       layer.ln2_gain);
    for (std::size_t i = 0; i < dx.data.size(); ++i) dx.data[i] += d_ln2_in.data[i];

    // Attention branch.
    Matrix d_attn_proj = dx;
    dropout_backward(d_attn_proj, lt.drop_attn, config.dropout_rate);
    for (std::size_t t = 0; t < seq_len; ++t) {
      const double* row = d_attn_proj.row(t);
      for (std::size_t j = 0; j < d; ++j) gl.bo[j] += row[j];
    }
    kernels::matmul_at_b_accum(gl.wo, lt.heads_concat, d_attn_proj);
    Matrix d_concat;
    kernels::matmul_a_bt(d_concat, d_attn_proj, layer.wo);

    Matrix dq(seq_len, d), dk(seq_len, d), dv(seq_len, d);
    // Heads touch disjoint column slices of dq/dk/dv, so they can run in
    // parallel; within a head the query order is fixed.
    const auto n_heads_pd = static_cast<std::ptrdiff_t>(n_heads);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t hh = 0; hh < n_heads_pd; ++hh) {
      const auto h = static_cast<std::size_t>(hh);
      const std::size_t off = h * d_head;
      const auto& probs = lt.attn[h];
      // d_probs and softmax-jacobian per query row; dq rows are independent,
      // dk/dv accumulate over queries in fixed t order.
      for (std::size_t t = 0; t < seq_len; ++t) {
        const double* d_ctx = d_concat.row(t) + off;
        const double* prow = probs.row(t);
        double dot = 0.0;
        std::vector<double> d_scores(t + 1);
        for (std::size_t s = 0; s <= t; ++s) {
          const double* vrow = lt.v.row(s) + off;
          double dp = 0.0;
          for (std::size_t j = 0; j < d_head; ++j) dp += d_ctx[j] * vrow[j];
          d_scores[s] = dp;
          dot += dp * prow[s];
        }
        for (std::size_t s = 0; s <= t; ++s) {
          const double ds = prow[s] * (d_scores[s] - dot) * attn_scale;
          const double* krow = lt.k.row(s) + off;
          const double* qrow = lt.q.row(t) + off;
          double* dqrow = dq.row(t) + off;
          double* dkrow = dk.row(s) + off;
          double* dvrow = dv.row(s) + off;
          for (std::size_t j = 0; j < d_head; ++j) {
            dqrow[j] += ds * krow[j];
            dkrow[j] += ds * qrow[j];
            dvrow[j] += prow[s] * d_ctx[j];
          }
        }
      }
    }

    Matrix d_ln1_out(seq_len, d);
    for (std::size_t t = 0; t < seq_len; ++t) {
      const double* dqr = dq.row(t);
      const double* dkr = dk.row(t);
      const double* dvr = dv.row(t);
      for (std::size_t j = 0; j < d; ++j) {
        gl.bq[j] += dqr[j];
        gl.bk[j] += dkr[j];
        gl.bv[j] += dvr[j];
      }
    }
    kernels::matmul_at_b_accum(gl.wq, lt.ln1_out, dq);
    kernels::matmul_at_b_accum(gl.wk, lt.ln1_out, dk);
    kernels::matmul_at_b_accum(gl.wv, lt.ln1_out, dv);
    Matrix tmp;
    kernels::matmul_a_bt(tmp, dq, layer.wq);
    for (std::size_t i = 0; i < d_ln1_out.data.size(); ++i) d_ln1_out.data[i] += tmp.data[i];
    kernels::matmul_a_bt(tmp, dk, layer.wk);
    for (std::size_t i = 0; i < d_ln1_out.data.size(); ++i) d_ln1_out.data[i] += tmp.data[i];
    kernels::matmul_a_bt(tmp, dv, layer.wv);
    for (std::size_t i = 0; i < d_ln1_out.data.size(); ++i) d_ln1_out.data[i] += tmp.data[i];

    Matrix d_ln1_in;
    layernorm_backward(d_ln1_in, gl.ln1_gain, gl.ln1_bias, d_ln1_out, lt.ln1_in, lt.ln1,
                       layer.ln1_gain);
    for (std::size_t i = 0; i < dx.data.size(); ++i) dx.data[i] += d_ln1_in.data[i];
  }

  dropout_backward(dx, trace.drop_emb, config.dropout_rate);
  for (std::size_t t = 0; t < seq_len; ++t) {
    const double* row = dx.row(t);
    double* demb = grads.token_input_emb.row(static_cast<std::size_t>(tokens[t]));
    double* dpos = grads.position_emb.row(t);
    for (std::size_t j = 0; j < d; ++j) {
      demb[j] += row[j];
      dpos[j] += row[j];
    }
  }
}

std::vector<Window> make_windows(const std::vector<corpus::EncodedSequence>& sequences,
                                 const ModelConfig& config, std::int32_t pad_id) {
  const auto window_len = static_cast<std::size_t>(config.context_len);
  std::vector<Window> windows;
  for (const auto& seq : sequences) {
    const std::size_t len = seq.tokens.size();
    if (len < 2) continue;
    for (std::size_t start = 0; start + 1 < len; start += window_len) {
      const std::size_t end = std::min(start + window_len, len - 1);
      Window w;
      w.input.assign(window_len, pad_id);
      w.target.assign(window_len, pad_id);
      w.target_pos.assign(window_len, 0);
      w.mask.assign(window_len, 0);
      for (std::size_t i = start; i < end; ++i) {
        w.input[i - start] = seq.tokens[i];
        w.target[i - start] = seq.tokens[i + 1];
        w.target_pos[i - start] = seq.pos[i + 1];
        w.mask[i - start] = 1;
      }
      windows.push_back(std::move(w));
    }
  }
  return windows;
}

namespace {

// Cross-entropy and gradient of the masked positions of one window under the
// chosen head. hidden rows align with window.input positions. When grads is
// null only the summed loss is returned. dlogit_scale multiplies the gradient
// (1 / total batch targets).
double head_loss_window(const ModelParams& params, const ModelConfig& config,
                        const corpus::PosPartition& partition, const Window& window,
                        std::size_t used_len, const Matrix& hidden, HeadKind head_kind,
                        double dlogit_scale, ModelParams* grads, Matrix* d_hidden) {
  const auto d = static_cast<std::size_t>(config.d_model);
  const auto vocab = static_cast<std::size_t>(config.vocab_size);
  double loss_sum = 0.0;

  if (head_kind == HeadKind::Mle) {
    Matrix logits;
    kernels::matmul_a_bt(logits, hidden, params.token_output_emb);
    Matrix dlogits;
    if (grads != nullptr) dlogits = Matrix(used_len, vocab);
    for (std::size_t t = 0; t < used_len; ++t) {
      if (!window.mask[t]) continue;
      double* z = logits.row(t);
      double max_z = z[0];
      for (std::size_t x = 1; x < vocab; ++x) max_z = std::max(max_z, z[x]);
      double sum_exp = 0.0;
      for (std::size_t x = 0; x < vocab; ++x) sum_exp += std::exp(z[x] - max_z);
      const auto target = static_cast<std::size_t>(window.target[t]);
      loss_sum += max_z + std::log(sum_exp) - z[target];
      if (grads != nullptr) {
        double* dz = dlogits.row(t);
        const double inv = 1.0 / sum_exp;
        for (std::size_t x = 0; x < vocab; ++x)
          dz[x] = std::exp(z[x] - max_z) * inv * dlogit_scale;
        dz[target] -= dlogit_scale;
      }
    }
    if (grads != nullptr) {
      kernels::matmul_at_b_accum(grads->token_output_emb, dlogits, hidden);
      Matrix dh;
      kernels::matmul(dh, dlogits, params.token_output_emb);
      for (std::size_t i = 0; i < dh.data.size(); ++i) d_hidden->data[i] += dh.data[i];
    }
    return loss_sum;
  }

  // Factored head: tag softmax over the full inventory plus a token softmax
  // restricted to the gold tag's cell.
  const auto pos_count = static_cast<std::size_t>(config.pos_count);
  Matrix pos_logits;
  kernels::matmul_a_bt(pos_logits, hidden, params.pos_output_emb);
  Matrix d_pos_logits;
  if (grads != nullptr) d_pos_logits = Matrix(used_len, pos_count);
  std::vector<double> cell_logits;
  for (std::size_t t = 0; t < used_len; ++t) {
    if (!window.mask[t]) continue;
    const auto gold_pos = static_cast<std::size_t>(window.target_pos[t]);
    const auto gold_token = window.target[t];
    if (gold_pos >= partition.members.size())
      throw InvalidArgument("posg loss: tag id out of range at position " + std::to_string(t));

    double* z = pos_logits.row(t);
    double max_z = z[0];
    for (std::size_t r = 1; r < pos_count; ++r) max_z = std::max(max_z, z[r]);
    double sum_exp = 0.0;
    for (std::size_t r = 0; r < pos_count; ++r) sum_exp += std::exp(z[r] - max_z);
    loss_sum += max_z + std::log(sum_exp) - z[gold_pos];
    if (grads != nullptr) {
      double* dz = d_pos_logits.row(t);
      const double inv = 1.0 / sum_exp;
      for (std::size_t r = 0; r < pos_count; ++r)
        dz[r] = std::exp(z[r] - max_z) * inv * dlogit_scale;
      dz[gold_pos] -= dlogit_scale;
    }

    const auto& cell = partition.members[gold_pos];
    const auto cell_it = std::lower_bound(cell.begin(), cell.end(), gold_token);
    if (cell_it == cell.end() || *cell_it != gold_token)
      throw DataError("posg loss: gold token " + std::to_string(gold_token) +
                      " not in the cell of its gold tag " + std::to_string(gold_pos) +
                      " (position " + std::to_string(t) + ")");
    const auto target_idx = static_cast<std::size_t>(cell_it - cell.begin());

    const double* hrow = hidden.row(t);
    cell_logits.resize(cell.size());
    double cmax = -1e300;
    for (std::size_t c = 0; c < cell.size(); ++c) {
      const double* wrow = params.token_output_emb.row(static_cast<std::size_t>(cell[c]));
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j) dot += hrow[j] * wrow[j];
      cell_logits[c] = dot;
      cmax = std::max(cmax, dot);
    }
    double csum = 0.0;
    for (const double value : cell_logits) csum += std::exp(value - cmax);
    loss_sum += cmax + std::log(csum) - cell_logits[target_idx];
    if (grads != nullptr) {
      double* dh = d_hidden->row(t);
      const double cinv = 1.0 / csum;
      for (std::size_t c = 0; c < cell.size(); ++c) {
        double g = std::exp(cell_logits[c] - cmax) * cinv;
        if (c == target_idx) g -= 1.0;
        g *= dlogit_scale;
        const auto token_row = static_cast<std::size_t>(cell[c]);
        const double* wrow = params.token_output_emb.row(token_row);
        double* gw = grads->token_output_emb.row(token_row);
        for (std::size_t j = 0; j < d; ++j) {
          gw[j] += g * hrow[j];
          dh[j] += g * wrow[j];
        }
      }
    }
  }
  if (grads != nullptr) {
    kernels::matmul_at_b_accum(grads->pos_output_emb, d_pos_logits, hidden);
    Matrix dh;
    kernels::matmul(dh, d_pos_logits, params.pos_output_emb);
    for (std::size_t i = 0; i < dh.data.size(); ++i) d_hidden->data[i] += dh.data[i];
  }
  return loss_sum;
}

// Trailing PAD positions carry no loss; trimming them keeps the attention
// cost proportional to real content.
std::size_t used_length(const Window& window) {
  std::size_t used = window.mask.size();
  while (used > 0 && !window.mask[used - 1]) --used;
  return std::max<std::size_t>(used, 1);
}

}  // namespace

LossGrads loss_and_grads(const ModelParams& params, const ModelConfig& config,
                         const corpus::PosPartition& partition, const std::vector<Window>& batch,
                         HeadKind head_kind, std::uint64_t dropout_seed) {
  std::size_t n_targets = 0;
  for (const auto& window : batch)
    for (const auto m : window.mask) n_targets += m;
  if (n_targets == 0) throw InvalidArgument("loss_and_grads: batch has no unmasked targets");
  const double scale = 1.0 / static_cast<double>(n_targets);

  LossGrads result;
  result.n_targets = n_targets;
  result.grads = zeros_like(params);
  Rng dropout_rng(dropout_seed);
  const bool train_mode = config.dropout_rate > 0.0;

  double loss_sum = 0.0;
  for (const auto& window : batch) {
    const std::size_t used = used_length(window);
    const std::span<const std::int32_t> input(window.input.data(), used);
    ForwardTrace trace = forward_trace(params, config, input, train_mode, &dropout_rng);
    Matrix d_hidden(used, static_cast<std::size_t>(config.d_model));
    loss_sum += head_loss_window(params, config, partition, window, used, trace.hidden, head_kind,
                                 scale, &result.grads, &d_hidden);
    backward_backbone(params, config, input, trace, d_hidden, result.grads);
  }
  result.loss = loss_sum * scale;
  return result;
}

double evaluate_loss(const ModelParams& params, const ModelConfig& config,
                     const corpus::PosPartition& partition, const std::vector<Window>& windows,
                     HeadKind head_kind) {
  double loss_sum = 0.0;
  std::size_t n_targets = 0;
  for (const auto& window : windows) {
    const std::size_t used = used_length(window);
    for (const auto m : window.mask) n_targets += m;
    const std::span<const std::int32_t> input(window.input.data(), used);
    const HiddenStates hidden = forward(params, config, input);
    loss_sum +=
        head_loss_window(params, config, partition, window, used, hidden, head_kind, 0.0, nullptr,
                         nullptr);
  }
  if (n_targets == 0) throw InvalidArgument("evaluate_loss: no unmasked targets");
  return loss_sum / static_cast<double>(n_targets);
}

}  // namespace posg::net
