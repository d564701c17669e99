#include "lit4/train.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <numbers>
#include <numeric>
#include <sstream>
#include <thread>

#include "lit4/error.hpp"
#include "lit4/tape.hpp"

namespace lit4 {

void TrainConfig::validate(const std::string& where) const {
  if (!(base_lr >= 0.0) || !std::isfinite(base_lr))
    throw ConfigError(where + ".base_lr: must be finite and >= 0");
  if (warmup_steps == 0 || warmup_steps >= total_steps)
    throw ConfigError(where + ".warmup_steps: need 0 < warmup_steps (" +
                      std::to_string(warmup_steps) + ") < total_steps (" +
                      std::to_string(total_steps) + ")");
  if (batch_size == 0) throw ConfigError(where + ".batch_size: must be >= 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError(where + ".beta1: must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError(where + ".beta2: must lie in [0, 1)");
  if (!(adam_eps > 0.0)) throw ConfigError(where + ".adam_eps: must be > 0");
  if (!(weight_decay >= 0.0)) throw ConfigError(where + ".weight_decay: must be >= 0");
  if (!(init_std > 0.0) || !std::isfinite(init_std))
    throw ConfigError(where + ".init_std: must be finite and > 0");
}

double lr_at(std::size_t step, const TrainConfig& c) {
  if (step > c.total_steps)
    throw ParameterError("lr_at: step " + std::to_string(step) + " beyond total_steps " +
                         std::to_string(c.total_steps));
  if (step < c.warmup_steps)
    return c.base_lr * static_cast<double>(step) / static_cast<double>(c.warmup_steps);
  if (step == c.total_steps) return 0.0;
  const double progress = static_cast<double>(step - c.warmup_steps) /
                          static_cast<double>(c.total_steps - c.warmup_steps);
  return c.base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

template <typename T>
AdamW<T>::AdamW(ParamStore<T>& store, const TrainConfig& config) : config_(config) {
  for (const auto& e : store.entries()) {
    if (e.role != TensorRole::parameter) continue;
    const std::size_t n = e.tensor.numel();
    slots_.push_back({e.tensor, std::vector<double>(n), std::vector<double>(n),
                      e.tensor.rank() >= 2});
  }
}

template <typename T>
void AdamW<T>::step(double lr) {
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (auto& s : slots_) {
    if (!s.param.has_grad()) continue;
    auto w = s.param.mutable_data();
    auto g = s.param.grad();
    const double wd = s.decay ? config_.weight_decay : 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i];
      s.m[i] = b1 * s.m[i] + (1.0 - b1) * gi;
      s.v[i] = b2 * s.v[i] + (1.0 - b2) * gi * gi;
      const double update =
          (s.m[i] / c1) / (std::sqrt(s.v[i] / c2) + config_.adam_eps) +
          wd * static_cast<double>(w[i]);
      w[i] = static_cast<T>(static_cast<double>(w[i]) - lr * update);
    }
  }
}

namespace {

std::string exact(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

}  // namespace

std::string trace_csv(const std::vector<TraceRow>& trace) {
  std::ostringstream os;
  os << "step,lr,loss\n";
  for (const auto& r : trace) os << r.step << ',' << exact(r.lr) << ',' << exact(r.loss) << '\n';
  return os.str();
}

template <typename T>
TrainResult train(VqaModel<T>& model, const VqaDataset& data,
                  const std::vector<std::size_t>& indices, const TrainConfig& config,
                  const std::function<void(const TraceRow&)>& on_step) {
  config.validate();
  if (indices.empty()) throw InputError("train: no training samples");
  const auto& mc = model.config();
  if (data.answers.size() != mc.head.answers)
    throw ConfigError("head.answers (" + std::to_string(mc.head.answers) +
                      ") does not match the " + std::to_string(data.answers.size()) +
                      " answers of the dataset");
  const Vocab vocab(data.vocab);
  if (vocab.size() != mc.text.vocab_size)
    throw ConfigError("text_encoder.vocab_size (" + std::to_string(mc.text.vocab_size) +
                      ") does not match the " + std::to_string(vocab.size()) +
                      "-token dataset vocabulary");

  AdamW<T> opt(model.params(), config);
  TrainResult result;
  std::vector<std::size_t> order;
  std::size_t cursor = 0, epoch = 0;
  for (std::size_t step = 1; step <= config.total_steps; ++step) {
    std::vector<std::size_t> batch;
    while (batch.size() < std::min(config.batch_size, indices.size())) {
      if (cursor == order.size()) {
        order = indices;
        CounterRng rng(config.seed, 0x5eed0000ULL + epoch++);
        for (std::size_t i = order.size(); i > 1; --i)
          std::swap(order[i - 1], order[rng.below(i)]);
        cursor = 0;
      }
      batch.push_back(order[cursor++]);
    }
    std::vector<std::int32_t> targets;
    for (std::size_t i : batch) targets.push_back(data.samples[i].answer);

    Tape<T> tape;
    Tensor<T> loss;
    {
      Recording<T> rec(tape);
      auto images = image_batch<T>(data.samples, batch);
      auto tokens = token_batch(data.samples, batch, vocab, mc.text.max_len);
      ForwardMode mode{true, CounterRng::mix(config.seed ^ CounterRng::mix(step))};
      loss = ops::cross_entropy(model.forward(images, tokens, mode), targets);
    }
    const double value = static_cast<double>(loss.item());
    if (!std::isfinite(value))
      throw NumericError("train: non-finite loss " + exact(value) + " at step " +
                         std::to_string(step));
    model.params().zero_grad();
    backward(loss, tape);
    const double lr = lr_at(step, config);
    opt.step(lr);
    result.trace.push_back({step, lr, value});
    if (on_step) on_step(result.trace.back());
  }
  return result;
}

void EvalMetrics::add(QuestionType type, bool correct) {
  auto& c = per_type[static_cast<std::size_t>(type)];
  ++c.total;
  if (correct) ++c.correct;
}

double EvalMetrics::type_accuracy(QuestionType type) const {
  const auto& c = per_type[static_cast<std::size_t>(type)];
  if (c.total == 0)
    throw MetricError("no samples of question type " + to_string(type));
  return static_cast<double>(c.correct) / static_cast<double>(c.total);
}

double EvalMetrics::overall_accuracy() const {
  std::size_t correct = 0, total = 0;
  for (const auto& c : per_type) {
    correct += c.correct;
    total += c.total;
  }
  if (total == 0) throw MetricError("overall accuracy of an empty evaluation");
  return static_cast<double>(correct) / static_cast<double>(total);
}

double EvalMetrics::average_accuracy() const {
  (void)type_accuracy(QuestionType::yes_no);
  (void)type_accuracy(QuestionType::lulc);
  // (a/n + b/m) / 2 as one integer fraction, so the result is rounded once:
  // 8/10 and 2/5 give exactly 0.6 rather than 0.6000000000000001.
  const auto& y = per_type[0];
  const auto& l = per_type[1];
  const double num = static_cast<double>(y.correct * l.total + l.correct * y.total);
  const double den = 2.0 * static_cast<double>(y.total * l.total);
  return num / den;
}

std::size_t worker_count() {
  const char* env = std::getenv("LIT4_THREADS");
  if (env == nullptr) return 1;
  const long n = std::strtol(env, nullptr, 10);
  return n < 1 ? 1 : static_cast<std::size_t>(n);
}

template <typename T>
std::vector<Prediction> predict(const VqaModel<T>& model, const VqaDataset& data,
                                const std::vector<std::size_t>& indices,
                                std::size_t batch_size) {
  std::vector<Prediction> out(indices.size());
  if (indices.empty()) return out;
  const Vocab vocab(data.vocab);
  const std::size_t max_len = model.config().text.max_len;
  const std::size_t chunks = (indices.size() + batch_size - 1) / batch_size;
  auto run_chunk = [&](std::size_t chunk) {
    const std::size_t lo = chunk * batch_size;
    const std::size_t hi = std::min(lo + batch_size, indices.size());
    std::vector<std::size_t> batch(indices.begin() + lo, indices.begin() + hi);
    auto logits = model.forward(image_batch<T>(data.samples, batch),
                                token_batch(data.samples, batch, vocab, max_len));
    auto dists = to_distributions(logits);
    for (std::size_t i = 0; i < dists.size(); ++i) {
      const std::size_t best = dists[i].argmax();
      out[lo + i] = {best, dists[i].probabilities()[best]};
    }
  };
  const std::size_t workers = std::min(worker_count(), chunks);
  if (workers <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) run_chunk(c);
    return out;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      try {
        for (std::size_t c = w; c < chunks; c += workers) run_chunk(c);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

template <typename T>
EvalMetrics evaluate(const VqaModel<T>& model, const VqaDataset& data,
                     const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw MetricError("evaluate: empty dataset");
  const auto preds = predict(model, data, indices);
  EvalMetrics m;
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto& s = data.samples[indices[i]];
    m.add(s.type, preds[i].answer == static_cast<std::size_t>(s.answer));
  }
  return m;
}

#define LIT4_INSTANTIATE_TRAIN(T)                                              \
  template class AdamW<T>;                                                     \
  template TrainResult train(VqaModel<T>&, const VqaDataset&,                  \
                             const std::vector<std::size_t>&,                  \
                             const TrainConfig&,                               \
                             const std::function<void(const TraceRow&)>&);     \
  template std::vector<Prediction> predict(const VqaModel<T>&,                 \
                                           const VqaDataset&,                  \
                                           const std::vector<std::size_t>&,    \
                                           std::size_t);                       \
  template EvalMetrics evaluate(const VqaModel<T>&, const VqaDataset&,         \
                                const std::vector<std::size_t>&);

LIT4_INSTANTIATE_TRAIN(float)
LIT4_INSTANTIATE_TRAIN(double)

#undef LIT4_INSTANTIATE_TRAIN

}  // namespace lit4
