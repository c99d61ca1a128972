// SPDX-License-Identifier: Apache-2.0

#include "muscle/moco.hpp"

#include <cmath>
#include <cstdint>
#include <exception>
#include <fstream>

#include "muscle/cl.hpp"
#include "muscle/errors.hpp"
#include "muscle/train.hpp"

namespace muscle {

void MoCoConfig::validate() const {
  if (batch == 0) throw ContractError("moco: batch must be >= 1");
  if (!(temperature > 0.0)) throw ContractError("moco: temperature must be > 0");
  if (momentum < 0.0 || momentum > 1.0) throw ContractError("moco: momentum must be in [0,1]");
  if (queue_size == 0) throw ContractError("moco: queue_size must be >= 1");
  if (batch > queue_size) throw ContractError("moco: batch larger than the queue");
  if (lr < lr_min || lr_min < 0.0) throw ContractError("moco: need lr >= lr_min >= 0");
  AugmentPolicy{augment};
}

namespace {
void normalize(std::span<double> v) {
  double n = 0.0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  for (double& x : v) x /= n;
}
}  // namespace

MoCoState init_moco_state(const EncoderConfig& enc, const MoCoConfig& cfg) {
  cfg.validate();
  MoCoState s;
  auto rng = make_rng(cfg.seed, {fnv1a("moco_init")});
  s.query = init_encoder(enc, rng);
  s.key = s.query;
  s.queue_size = cfg.queue_size;
  s.dim = enc.feature_dim;
  s.momentum = cfg.momentum;
  s.temperature = cfg.temperature;
  s.queue.resize(s.queue_size * s.dim);
  auto qrng = make_rng(cfg.seed, {fnv1a("moco_queue")});
  std::normal_distribution<double> nd(0.0, 1.0);
  for (auto& v : s.queue) v = nd(qrng);
  for (std::size_t i = 0; i < s.queue_size; ++i) normalize(std::span<double>(s.queue).subspan(i * s.dim, s.dim));
  return s;
}

void momentum_update(ParamVector& key, const ParamVector& query, double m) {
  if (m < 0.0 || m > 1.0) throw ContractError("momentum_update: m must be in [0,1]");
  if (!key.same_template(query)) throw ContractError("momentum_update: key/query templates differ");
  auto qit = query.begin();
  for (auto& [name, k] : key) {
    const auto& q = qit->second;
    for (std::size_t i = 0; i < k.numel(); ++i) k[i] = m * k[i] + (1.0 - m) * q[i];
    ++qit;
  }
}

Var infonce_loss(Var q, const Tensor& k_pos, std::span<const double> queue, std::size_t queue_rows,
                 double temperature) {
  if (!(temperature > 0.0)) throw ContractError("infonce_loss: temperature must be > 0");
  const auto& qv = q.value();
  const std::size_t d = qv.numel();
  if (k_pos.numel() != d || queue.size() != queue_rows * d)
    throw DimensionError("infonce_loss: embedding width mismatch between query, key and queue");

  // logits[0] is the positive pair.
  std::vector<double> logits(queue_rows + 1);
  auto dot = [&](const double* v) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += qv[j] * v[j];
    return s / temperature;
  };
  logits[0] = dot(k_pos.data().data());
  for (std::size_t i = 0; i < queue_rows; ++i) logits[i + 1] = dot(queue.data() + i * d);
  double mx = logits[0];
  for (double l : logits) mx = std::max(mx, l);
  double z = 0.0;
  for (double l : logits) z += std::exp(l - mx);
  const double loss = -(logits[0] - mx - std::log(z));

  std::vector<double> probs(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) probs[i] = std::exp(logits[i] - mx) / z;
  std::vector<double> negatives(queue.begin(), queue.end());
  std::vector<double> key(k_pos.data().begin(), k_pos.data().end());
  const std::size_t iq = q.id();
  return q.tape()->record(
      Tensor::scalar(loss), {iq},
      [iq, d, temperature, probs = std::move(probs), negatives = std::move(negatives), key = std::move(key)](
          Tape& tp, std::size_t self) {
        // dL/dq = (Σ_i p_i v_i − k⁺) / τ with v_0 = k⁺.
        const double g = tp.grad_of(self)[0];
        auto dst = tp.grad_buffer(iq);
        for (std::size_t j = 0; j < d; ++j) {
          double s = (probs[0] - 1.0) * key[j];
          for (std::size_t i = 1; i < probs.size(); ++i) s += probs[i] * negatives[(i - 1) * d + j];
          dst[j] += g * s / temperature;
        }
      });
}

void enqueue_dequeue(MoCoState& state, const std::vector<Tensor>& keys) {
  if (keys.size() > state.queue_size) throw ContractError("enqueue: batch larger than the queue");
  for (const auto& k : keys) {
    if (k.numel() != state.dim) throw DimensionError("enqueue: key width does not match the queue");
    if (std::abs(std::sqrt(k.squared_norm()) - 1.0) > 1e-6) throw ContractError("enqueue: key is not unit-norm");
  }
  for (const auto& k : keys) {
    std::copy(k.data().begin(), k.data().end(), state.queue.begin() + static_cast<std::ptrdiff_t>(state.queue_ptr * state.dim));
    state.queue_ptr = (state.queue_ptr + 1) % state.queue_size;
  }
}

namespace {

struct ViewResult {
  double loss = 0.0;
  std::vector<double> grad;  // query gradient, flattened
  Tensor key;                // unit-norm key embedding
};

ViewResult moco_sample(const EncoderConfig& enc, const MoCoState& state, const Tensor& view_q, const Tensor& view_k) {
  ViewResult r;
  Tensor k = encoder_forward(enc, state.key, view_k);
  const double kn = std::sqrt(k.squared_norm());
  if (kn == 0.0) throw ContractError("moco: key embedding collapsed to zero");
  for (auto& v : k.data()) v /= kn;

  Tape tape;
  BoundParams qp(tape, state.query, true);
  Var q = l2_normalize(encoder_forward(enc, qp, tape.constant(view_q)).embedding);
  Var loss = infonce_loss(q, k, state.queue, state.queue_size, state.temperature);
  tape.backward(loss);
  r.loss = loss.value().item();
  r.grad = flatten_params(qp.gradients());
  r.key = std::move(k);
  return r;
}

}  // namespace

MoCoResult md_moco_pretrain(const std::vector<Sample>& pool, const EncoderConfig& enc, const MoCoConfig& cfg) {
  return md_moco_pretrain(pool, enc, cfg, init_moco_state(enc, cfg).query);
}

MoCoResult md_moco_pretrain(const std::vector<Sample>& pool, const EncoderConfig& enc, const MoCoConfig& cfg,
                            const ParamVector& init) {
  cfg.validate();
  if (pool.empty()) throw ContractError("md_moco_pretrain: empty pool");
  if (cfg.batch > pool.size()) throw ContractError("md_moco_pretrain: batch larger than the pool");
  MoCoResult out;
  MoCoState state = init_moco_state(enc, cfg);
  {
    auto rng = make_rng(0);
    if (!init.same_template(init_encoder(enc, rng)))
      throw DimensionError("md_moco_pretrain: initial backbone does not match the encoder");
  }
  state.query = init;
  state.key = init;
  const AugmentPolicy policy(cfg.augment);
  const std::size_t steps = steps_per_epoch(pool.size(), cfg.batch);
  const std::size_t total_steps = std::max<std::size_t>(1, cfg.epochs * steps);
  const std::size_t n_params = state.query.total_numel();

  std::size_t t = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = epoch_order(cfg.seed, "moco", epoch, pool.size());
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < pool.size(); start += cfg.batch) {
      const std::size_t bs = std::min(cfg.batch, pool.size() - start);
      std::vector<ViewResult> results(bs);
      std::exception_ptr err;
#pragma omp parallel for schedule(dynamic)
      for (std::int64_t ii = 0; ii < static_cast<std::int64_t>(bs); ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        try {
          const std::size_t idx = order[start + i];
          auto rng = make_rng(cfg.seed, {fnv1a("moco_view"), epoch, idx});
          const Tensor v1 = augment_view(pool[idx].image, policy, rng);
          const Tensor v2 = augment_view(pool[idx].image, policy, rng);
          results[i] = moco_sample(enc, state, v1, v2);
        } catch (...) {
#pragma omp critical
          if (!err) err = std::current_exception();
        }
      }
      if (err) std::rethrow_exception(err);

      std::vector<double> grad(n_params, 0.0);
      double loss = 0.0;
      std::vector<Tensor> keys;
      keys.reserve(bs);
      for (auto& r : results) {
        for (std::size_t j = 0; j < n_params; ++j) grad[j] += r.grad[j];
        loss += r.loss;
        keys.push_back(std::move(r.key));
      }
      const double inv = 1.0 / static_cast<double>(bs);
      for (auto& g : grad) g *= inv;
      const double lr = cosine_lr(t, total_steps, cfg.lr_min, cfg.lr, cfg.half_cycle);
      sgd_step(state.query, unflatten_params(grad, state.query), lr, cfg.weight_decay);
      momentum_update(state.key, state.query, state.momentum);
      enqueue_dequeue(state, keys);
      epoch_loss += loss * inv;
      ++t;
    }
    out.trace.push_back({epoch, epoch_loss / static_cast<double>(steps)});
  }
  out.backbone = state.query;
  out.state = std::move(state);
  return out;
}

void write_loss_trace_csv(const std::vector<EpochLoss>& trace, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out.precision(17);
  out << "epoch,mean_loss\n";
  for (const auto& e : trace) out << e.epoch << ',' << e.mean_loss << '\n';
}

}  // namespace muscle
