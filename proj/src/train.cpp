#include <chrono>
#include <cmath>
#include <numeric>

#include "posg/errors.hpp"
#include "posg/net.hpp"

namespace posg::net {

namespace {

struct AdamState {
  ModelParams m, v;
  std::int64_t step = 0;
};

double global_grad_norm(ModelParams& grads) {
  double sum_sq = 0.0;
  for (const auto& ref : tensor_refs(grads))
    for (std::size_t i = 0; i < ref.size; ++i) sum_sq += ref.data[i] * ref.data[i];
  return std::sqrt(sum_sq);
}

void adam_step(ModelParams& params, ModelParams& grads, AdamState& state,
               const OptimizerConfig& opt) {
  state.step += 1;
  const double clip_scale = [&] {
    if (opt.grad_clip <= 0.0) return 1.0;
    const double norm = global_grad_norm(grads);
    return norm > opt.grad_clip ? opt.grad_clip / norm : 1.0;
  }();
  const double bias1 = 1.0 - std::pow(opt.beta1, static_cast<double>(state.step));
  const double bias2 = 1.0 - std::pow(opt.beta2, static_cast<double>(state.step));

  auto p_refs = tensor_refs(params);
  auto g_refs = tensor_refs(grads);
  auto m_refs = tensor_refs(state.m);
  auto v_refs = tensor_refs(state.v);
  for (std::size_t r = 0; r < p_refs.size(); ++r) {
    double* p = p_refs[r].data;
    double* g = g_refs[r].data;
    double* m = m_refs[r].data;
    double* v = v_refs[r].data;
    const auto n = static_cast<std::ptrdiff_t>(p_refs[r].size);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      const double grad = g[i] * clip_scale + opt.weight_decay * p[i];
      m[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * grad;
      v[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * grad * grad;
      const double m_hat = m[i] / bias1;
      const double v_hat = v[i] / bias2;
      p[i] -= opt.lr * m_hat / (std::sqrt(v_hat) + opt.eps);
    }
  }
}

}  // namespace

TrainResult train(const ModelConfig& config, const corpus::PosPartition& partition,
                  const std::vector<Window>& train_windows,
                  const std::vector<Window>& valid_windows, HeadKind head_kind, int epochs,
                  const OptimizerConfig& opt) {
  config.validate();
  if (train_windows.empty()) throw InvalidArgument("train: no training windows");
  if (epochs < 0) throw InvalidArgument("train: negative epoch count");
  if (opt.batch_size < 1) throw InvalidArgument("train: batch_size must be >= 1");

  using Clock = std::chrono::steady_clock;
  TrainResult result;
  result.params = init_params(config);
  AdamState state{zeros_like(result.params), zeros_like(result.params), 0};

  const auto eval_valid = [&] {
    return valid_windows.empty()
               ? std::numeric_limits<double>::quiet_NaN()
               : evaluate_loss(result.params, config, partition, valid_windows, head_kind);
  };

  {
    EpochStats initial;
    initial.epoch = 0;
    const auto start = Clock::now();
    initial.train_loss = evaluate_loss(result.params, config, partition, train_windows, head_kind);
    initial.valid_loss = eval_valid();
    initial.wall_seconds = std::chrono::duration<double>(Clock::now() - start).count();
    result.log.push_back(initial);
  }

  ModelParams last_good = result.params;
  std::vector<std::size_t> order(train_windows.size());
  std::iota(order.begin(), order.end(), 0);
  std::uint64_t step_counter = 0;

  for (int epoch = 1; epoch <= epochs; ++epoch) {
    const auto start = Clock::now();
    Rng shuffle_rng = Rng::derive(config.seed, 0xe70c5ULL + static_cast<std::uint64_t>(epoch));
    shuffle_rng.shuffle(order);

    double epoch_loss_sum = 0.0;
    std::size_t epoch_targets = 0;
    for (std::size_t begin = 0; begin < order.size();
         begin += static_cast<std::size_t>(opt.batch_size)) {
      const std::size_t end =
          std::min(begin + static_cast<std::size_t>(opt.batch_size), order.size());
      std::vector<Window> batch;
      batch.reserve(end - begin);
      for (std::size_t i = begin; i < end; ++i) batch.push_back(train_windows[order[i]]);

      const std::uint64_t dropout_seed =
          splitmix64_next(step_counter) ^ (config.seed * 0x9e3779b97f4a7c15ULL);
      auto lg = loss_and_grads(result.params, config, partition, batch, head_kind, dropout_seed);
      if (!std::isfinite(lg.loss)) {
        result.params = last_good;
        result.diverged = true;
        return result;
      }
      epoch_loss_sum += lg.loss * static_cast<double>(lg.n_targets);
      epoch_targets += lg.n_targets;
      adam_step(result.params, lg.grads, state, opt);
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = epoch_loss_sum / static_cast<double>(epoch_targets);
    stats.valid_loss = eval_valid();
    stats.wall_seconds = std::chrono::duration<double>(Clock::now() - start).count();
    result.log.push_back(stats);
    last_good = result.params;
  }
  return result;
}

}  // namespace posg::net
