#include "posg/reference.hpp"

#include <cmath>
#include <vector>

namespace posg::reference {

Matrix matmul_serial(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < b.cols; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols; ++k) acc += a.at(i, k) * b.at(k, j);
      c.at(i, j) = acc;
    }
  return c;
}

namespace {

std::vector<double> layer_norm_row(const std::vector<double>& x, const std::vector<double>& gain,
                                   const std::vector<double>& bias) {
  const std::size_t d = x.size();
  double mean = 0.0;
  for (double value : x) mean += value;
  mean /= static_cast<double>(d);
  double var = 0.0;
  for (double value : x) var += (value - mean) * (value - mean);
  var /= static_cast<double>(d);
  const double rstd = 1.0 / std::sqrt(var + 1e-5);
  std::vector<double> y(d);
  for (std::size_t j = 0; j < d; ++j) y[j] = gain[j] * (x[j] - mean) * rstd + bias[j];
  return y;
}

std::vector<double> affine_row(const std::vector<double>& x, const Matrix& w,
                               const std::vector<double>& b) {
  std::vector<double> y(w.cols);
  for (std::size_t j = 0; j < w.cols; ++j) {
    double acc = b[j];
    for (std::size_t k = 0; k < w.rows; ++k) acc += x[k] * w.at(k, j);
    y[j] = acc;
  }
  return y;
}

}  // namespace

Matrix forward_serial(const net::ModelParams& params, const net::ModelConfig& config,
                      std::span<const std::int32_t> tokens) {
  const std::size_t seq_len = tokens.size();
  const auto d = static_cast<std::size_t>(config.d_model);
  const auto n_heads = static_cast<std::size_t>(config.n_heads);
  const std::size_t d_head = d / n_heads;

  std::vector<std::vector<double>> stream(seq_len, std::vector<double>(d));
  for (std::size_t t = 0; t < seq_len; ++t)
    for (std::size_t j = 0; j < d; ++j)
      stream[t][j] = params.token_input_emb.at(static_cast<std::size_t>(tokens[t]), j) +
                     params.position_emb.at(t, j);

  for (const auto& layer : params.layers) {
    // attention block
    std::vector<std::vector<double>> normed(seq_len), q(seq_len), k(seq_len), v(seq_len);
    for (std::size_t t = 0; t < seq_len; ++t) {
      normed[t] = layer_norm_row(stream[t], layer.ln1_gain, layer.ln1_bias);
      q[t] = affine_row(normed[t], layer.wq, layer.bq);
      k[t] = affine_row(normed[t], layer.wk, layer.bk);
      v[t] = affine_row(normed[t], layer.wv, layer.bv);
    }
    for (std::size_t t = 0; t < seq_len; ++t) {
      std::vector<double> mixed(d, 0.0);
      for (std::size_t h = 0; h < n_heads; ++h) {
        const std::size_t off = h * d_head;
        std::vector<double> scores(t + 1);
        double max_score = -1e300;
        for (std::size_t s = 0; s <= t; ++s) {
          double dot = 0.0;
          for (std::size_t j = 0; j < d_head; ++j) dot += q[t][off + j] * k[s][off + j];
          scores[s] = dot / std::sqrt(static_cast<double>(d_head));
          if (scores[s] > max_score) max_score = scores[s];
        }
        double z = 0.0;
        for (std::size_t s = 0; s <= t; ++s) {
          scores[s] = std::exp(scores[s] - max_score);
          z += scores[s];
        }
        for (std::size_t s = 0; s <= t; ++s)
          for (std::size_t j = 0; j < d_head; ++j) mixed[off + j] += scores[s] / z * v[s][off + j];
      }
      const std::vector<double> projected = affine_row(mixed, layer.wo, layer.bo);
      for (std::size_t j = 0; j < d; ++j) stream[t][j] += projected[j];
    }
    // feed-forward block
    for (std::size_t t = 0; t < seq_len; ++t) {
      const std::vector<double> normed2 = layer_norm_row(stream[t], layer.ln2_gain, layer.ln2_bias);
      std::vector<double> inner = affine_row(normed2, layer.w_ff1, layer.b_ff1);
      for (auto& value : inner) value = 0.5 * value * (1.0 + std::erf(value / std::sqrt(2.0)));
      const std::vector<double> outer = affine_row(inner, layer.w_ff2, layer.b_ff2);
      for (std::size_t j = 0; j < d; ++j) stream[t][j] += outer[j];
    }
  }

  Matrix hidden(seq_len, d);
  for (std::size_t t = 0; t < seq_len; ++t) {
    const std::vector<double> out = layer_norm_row(stream[t], params.final_gain, params.final_bias);
    for (std::size_t j = 0; j < d; ++j) hidden.at(t, j) = out[j];
  }
  return hidden;
}

}  // namespace posg::reference
