#include "lit4/data.hpp"


#include "lit4/error.hpp"
#include "lit4/rng.hpp"

namespace lit4 {

std::string to_string(QuestionType type) {
  return type == QuestionType::yes_no ? "yes_no" : "lulc";
}

QuestionType parse_question_type(const std::string& name) {
  if (name == "yes_no") return QuestionType::yes_no;
  if (name == "lulc") return QuestionType::lulc;
  throw InputError("unknown question type '" + name + "'");
}

std::string to_string(Split split) { return split == Split::train ? "train" : "test"; }

Split parse_split(const std::string& name) {
  if (name == "train") return Split::train;
  if (name == "test") return Split::test;
  throw InputError("unknown split '" + name + "'");
}

std::vector<std::size_t> VqaDataset::indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (samples[i].split == split) out.push_back(i);
  return out;
}

template <typename T>
Tensor<T> image_batch(const std::vector<VqaSample>& samples,
                      const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw InputError("empty image batch");
  const auto& first = samples.at(indices.front());
  const std::size_t per = first.bands * first.height * first.width;
  std::vector<T> data;
  data.reserve(per * indices.size());
  for (std::size_t i : indices) {
    const auto& s = samples.at(i);
    if (s.bands != first.bands || s.height != first.height || s.width != first.width)
      throw DimensionError("images in a batch must share one geometry");
    if (s.image.size() != per) throw DimensionError("image buffer size mismatch");
    data.insert(data.end(), s.image.begin(), s.image.end());
  }
  return Tensor<T>({indices.size(), first.bands, first.height, first.width},
                   std::move(data));
}

template Tensor<float> image_batch(const std::vector<VqaSample>&,
                                   const std::vector<std::size_t>&);
template Tensor<double> image_batch(const std::vector<VqaSample>&,
                                    const std::vector<std::size_t>&);

TokenBatch token_batch(const std::vector<VqaSample>& samples,
                       const std::vector<std::size_t>& indices,
                       const Vocab& vocab, std::size_t max_len) {
  std::vector<TokenSequence> seqs;
  seqs.reserve(indices.size());
  for (std::size_t i : indices)
    seqs.push_back(tokenize(samples.at(i).question, vocab, max_len));
  return TokenBatch::stack(seqs);
}

std::string class_set_answer(std::uint32_t mask, std::size_t classes) {
  if (mask == 0) return "none";
  std::string out;
  for (std::size_t c = 0; c < classes; ++c) {
    if (!(mask & (1u << c))) continue;
    if (!out.empty()) out += " and ";
    out += "class " + std::to_string(c);
  }
  return out;
}

std::vector<std::string> synthetic_answers(std::size_t classes) {
  std::vector<std::string> out{"yes", "no"};
  for (std::uint32_t m = 0; m < (1u << classes); ++m)
    out.push_back(class_set_answer(m, classes));
  return out;
}

std::vector<std::string> synthetic_vocab(std::size_t classes) {
  std::vector<std::string> v{"[PAD]", "[CLS]", "[UNK]", "is",  "class",
                             "present", "which", "classes", "are"};
  for (std::size_t c = 0; c < classes; ++c) v.push_back(std::to_string(c));
  return v;
}

VqaDataset generate_synthetic(std::size_t count, const SyntheticSpec& layout,
                              std::uint64_t seed) {
  const std::size_t k = layout.classes;
  const std::size_t s = layout.image_size;
  if (count == 0) throw InputError("generate_synthetic: count must be >= 1");
  if (k < 1 || k > 10) throw ConfigError("synthetic classes must be in [1, 10]");
  if (s < k) throw ConfigError("synthetic image too small for one stripe per class");

  VqaDataset ds;
  ds.vocab = synthetic_vocab(k);
  ds.answers = synthetic_answers(k);
  const std::uint32_t full = (1u << k) - 1;
  for (std::size_t i = 0; i < count; ++i) {
    CounterRng rng(seed, i);
    VqaSample sample;
    sample.height = sample.width = s;
    sample.type = i % 2 == 0 ? QuestionType::yes_no : QuestionType::lulc;

    std::uint32_t present = static_cast<std::uint32_t>(rng.below(full + 1));
    if (sample.type == QuestionType::yes_no) {
      const bool yes = rng.uniform() < 0.5;
      const auto cls = static_cast<std::uint32_t>(rng.below(k));
      if (yes)
        present |= 1u << cls;
      else
        present &= ~(1u << cls);
      sample.question = "is class " + std::to_string(cls) + " present";
      sample.answer = yes ? 0 : 1;
    } else {
      sample.question = "which classes are present";
      sample.answer = static_cast<std::int32_t>(2 + present);
    }

    sample.image.resize(sample.bands * s * s);
    for (std::size_t b = 0; b < sample.bands; ++b) {
      for (std::size_t y = 0; y < s; ++y) {
        const std::size_t stripe = y * k / s;
        const bool lit = (present >> stripe) & 1u && b % k == stripe;
        for (std::size_t x = 0; x < s; ++x)
          sample.image[(b * s + y) * s + x] =
              static_cast<float>((lit ? 1.0 : 0.0) + layout.noise * rng.normal());
      }
    }
    ds.samples.push_back(std::move(sample));
  }
  return ds;
}

}  // namespace lit4
