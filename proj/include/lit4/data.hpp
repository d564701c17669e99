#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lit4/tensor.hpp"
#include "lit4/text_encoder.hpp"

namespace lit4 {

enum class QuestionType { yes_no, lulc };
enum class Split { train, test };

std::string to_string(QuestionType type);
QuestionType parse_question_type(const std::string& name);
std::string to_string(Split split);
Split parse_split(const std::string& name);

struct VqaSample {
  std::vector<float> image;  // band-major [bands, height, width]
  std::size_t bands = 10;
  std::size_t height = 0;
  std::size_t width = 0;
  std::string question;
  std::int32_t answer = 0;
  QuestionType type = QuestionType::yes_no;
  Split split = Split::train;
};

struct VqaDataset {
  std::vector<std::string> vocab;    // line i = token id i
  std::vector<std::string> answers;  // line i = class id i
  std::vector<VqaSample> samples;

  std::vector<std::size_t> indices(Split split) const;
};

/// Stacks the images of samples[indices] into [n, bands, h, w].
template <typename T>
Tensor<T> image_batch(const std::vector<VqaSample>& samples,
                      const std::vector<std::size_t>& indices);

TokenBatch token_batch(const std::vector<VqaSample>& samples,
                       const std::vector<std::size_t>& indices,
                       const Vocab& vocab, std::size_t max_len);

struct SyntheticSpec {
  std::size_t image_size = 16;
  std::size_t classes = 3;  // at most 10 (one signature band pattern each)
  double noise = 0.1;
};

/// Answer strings for a synthetic dataset: "yes", "no", then every class set
/// in canonical order ("none", "class 0", "class 1", "class 0 and class 1", ...).
std::vector<std::string> synthetic_answers(std::size_t classes);
std::vector<std::string> synthetic_vocab(std::size_t classes);
std::string class_set_answer(std::uint32_t mask, std::size_t classes);

/// Images carry one horizontal stripe per present class c: inside rows
/// [c*s/k, (c+1)*s/k) every band b with b % k == c is raised by 1. Half the
/// samples ask "is class c present" (yes and no equally likely), the other
/// half ask "which classes are present". All samples are in the train split.
VqaDataset generate_synthetic(std::size_t count, const SyntheticSpec& layout,
                              std::uint64_t seed);

}  // namespace lit4
