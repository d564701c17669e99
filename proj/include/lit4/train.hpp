#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "lit4/data.hpp"
#include "lit4/model.hpp"

namespace lit4 {

struct TrainConfig {
  double base_lr = 5e-4;
  std::size_t warmup_steps = 100;
  std::size_t total_steps = 1000;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.05;
  // Trunc-normal std for a model trained from scratch; read when the model
  // is built, not by train().
  double init_std = 0.02;

  void validate(const std::string& where = "train") const;
};

/// Linear warmup to base_lr, then cosine decay to zero at total_steps.
double lr_at(std::size_t step, const TrainConfig& config);

/// Adam with decoupled weight decay. Decay applies to matrices and
/// convolution kernels only (rank >= 2), not to biases, norms or scales.
template <typename T>
class AdamW {
 public:
  AdamW(ParamStore<T>& store, const TrainConfig& config);

  /// One update using the gradients currently stored on the parameters.
  void step(double lr);
  std::size_t steps_taken() const { return t_; }

 private:
  struct Slot {
    Tensor<T> param;
    std::vector<double> m, v;
    bool decay;
  };
  std::vector<Slot> slots_;
  TrainConfig config_;
  std::size_t t_ = 0;
};

struct TraceRow {
  std::size_t step;
  double lr;
  double loss;
};

struct TrainResult {
  std::vector<TraceRow> trace;
};

/// Rows "step,lr,loss" with a header line; values printed round-trip exact.
std::string trace_csv(const std::vector<TraceRow>& trace);

/// Steps are numbered 1..total_steps; step k uses lr_at(k), and its trace
/// row holds the loss of the batch before the update. Batches are drawn
/// from `indices` in a fresh seeded permutation each epoch. A non-finite
/// loss aborts with NumericError.
template <typename T>
TrainResult train(VqaModel<T>& model, const VqaDataset& data,
                  const std::vector<std::size_t>& indices, const TrainConfig& config,
                  const std::function<void(const TraceRow&)>& on_step = {});

struct TypeCount {
  std::size_t correct = 0;
  std::size_t total = 0;
};

struct EvalMetrics {
  std::array<TypeCount, 2> per_type{};  // indexed by QuestionType

  void add(QuestionType type, bool correct);
  double type_accuracy(QuestionType type) const;
  /// Micro average over all samples.
  double overall_accuracy() const;
  /// Macro average over question types; MetricError if a type is empty.
  double average_accuracy() const;
};

struct Prediction {
  std::size_t answer = 0;
  double probability = 0.0;
};

/// Eval-mode predictions, sharded over LIT4_THREADS workers (default 1).
template <typename T>
std::vector<Prediction> predict(const VqaModel<T>& model, const VqaDataset& data,
                                const std::vector<std::size_t>& indices,
                                std::size_t batch_size = 32);

template <typename T>
EvalMetrics evaluate(const VqaModel<T>& model, const VqaDataset& data,
                     const std::vector<std::size_t>& indices);

/// Worker count from LIT4_THREADS, at least 1.
std::size_t worker_count();

}  // namespace lit4
