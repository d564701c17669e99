#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lit4/config.hpp"
#include "lit4/params.hpp"

namespace lit4 {

struct CostEntry {
  std::string path;  // name prefix shared with the runtime parameters
  std::uint64_t params = 0;
  std::uint64_t flops = 0;
};

struct CostReport {
  std::vector<CostEntry> entries;
  std::uint64_t total_params = 0;
  std::uint64_t total_flops = 0;
  std::size_t input_size = 0;
  std::size_t text_tokens = 0;
  std::string convention;

  /// Sum of entries whose path equals `prefix` or starts with "prefix.".
  std::uint64_t params_under(const std::string& prefix) const;
  std::uint64_t flops_under(const std::string& prefix) const;

  std::string to_tsv() const;
  std::string to_json() const;
};

struct CostGeometry {
  std::size_t input_size = 0;   // 0: the configured image size
  std::size_t text_tokens = 0;  // 0: text_encoder.max_len
};

extern const char* const kFlopConvention;

/// Exact learnable-scalar counts per module (flops left at zero).
CostReport count_params(const ModelConfig& config);

/// A single linear layer applied to `tokens` vectors.
CostEntry linear_cost(std::size_t in, std::size_t out, std::size_t tokens = 1,
                      bool bias = true);

/// Parameter and per-forward FLOP counts for one (image, question) pair.
CostReport count_flops(const ModelConfig& config, const CostGeometry& geometry = {});

// Token-mixing cost of one layer: everything whose size depends on how
// tokens interact, excluding the per-token projections.

/// Multi-head attention over t tokens: QK^T, softmax, and weights * V.
std::uint64_t attention_mixing_flops(std::size_t tokens, std::size_t dim,
                                     std::size_t heads);
/// Cross-covariance attention over t tokens: the L2 normalization of Q and
/// K, K^T Q, temperature scaling, softmax and V * weights.
std::uint64_t xca_mixing_flops(std::size_t tokens, std::size_t dim,
                               std::size_t heads);

/// log2(f(2t) / f(t)): 2 for a quadratic cost, 1 for a linear one.
double scaling_exponent(std::uint64_t (*cost)(std::size_t, std::size_t, std::size_t),
                        std::size_t tokens, std::size_t dim, std::size_t heads);

struct ParamCheck {
  std::string path;
  std::uint64_t predicted = 0;
  std::uint64_t runtime = 0;
  bool ok() const { return predicted == runtime; }
};

struct RuntimeComparison {
  std::vector<ParamCheck> checks;  // one per report entry, plus "total"
  bool ok() const;
  std::string to_string() const;
};

/// Compares a report with the parameters actually held by a model.
template <typename T>
RuntimeComparison verify_against_runtime(const CostReport& report,
                                         const ParamStore<T>& store);

}  // namespace lit4
