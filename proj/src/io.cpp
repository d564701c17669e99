#include "lit4/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "lit4/error.hpp"

namespace lit4 {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

// ---- byte helpers -----------------------------------------------------------

namespace {

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  template <typename U>
  void uint(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i)
      out_.push_back(static_cast<std::uint8_t>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff));
  }
  void f32(float v) { uint(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { uint(std::bit_cast<std::uint64_t>(v)); }
  std::vector<std::uint8_t>& data() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& in, std::string what)
      : in_(in), what_(std::move(what)) {}

  void need(std::size_t n) const {
    if (in_.size() - pos_ < n)
      throw FormatError(what_ + ": truncated at byte " + std::to_string(pos_));
  }
  template <typename U>
  U uint() {
    need(sizeof(U));
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i)
      v |= static_cast<std::uint64_t>(in_[pos_ + i]) << (8 * i);
    pos_ += sizeof(U);
    return static_cast<U>(v);
  }
  float f32() { return std::bit_cast<float>(uint<std::uint32_t>()); }
  double f64() { return std::bit_cast<double>(uint<std::uint64_t>()); }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == in_.size(); }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  const std::vector<std::uint8_t>& in_;
  std::string what_;
  std::size_t pos_ = 0;
};

constexpr std::uint32_t kImageVersion = 1;
constexpr std::uint32_t kArchiveVersion = 1;

}  // namespace

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InputError("failed writing " + path.string());
}

void write_file(const fs::path& path, const std::string& text) {
  write_file(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

// ---- images -----------------------------------------------------------------

void write_image(const fs::path& path, const ImageFile& image) {
  if (image.data.size() != std::size_t{image.bands} * image.height * image.width)
    throw DimensionError("write_image: buffer does not match header");
  Writer w;
  w.bytes("L4IM", 4);
  w.uint<std::uint32_t>(kImageVersion);
  w.uint(image.bands);
  w.uint(image.height);
  w.uint(image.width);
  for (float v : image.data) w.f32(v);
  write_file(path, w.data());
}

ImageFile read_image(const fs::path& path) {
  const auto bytes = read_file(path);
  Reader r(bytes, path.string());
  if (r.str(4) != "L4IM") throw FormatError(path.string() + ": not an L4IM image");
  const auto version = r.uint<std::uint32_t>();
  if (version != kImageVersion)
    throw FormatError(path.string() + ": unsupported image version " + std::to_string(version));
  ImageFile img;
  img.bands = r.uint<std::uint32_t>();
  img.height = r.uint<std::uint32_t>();
  img.width = r.uint<std::uint32_t>();
  const std::uint64_t n = std::uint64_t{img.bands} * img.height * img.width;
  if (n == 0) throw FormatError(path.string() + ": empty image");
  if (r.remaining() != n * 4)
    throw FormatError(path.string() + ": payload is " + std::to_string(r.remaining()) +
                      " bytes, header implies " + std::to_string(n * 4));
  img.data.resize(n);
  for (auto& v : img.data) {
    v = r.f32();
    if (!std::isfinite(v)) throw InputError(path.string() + ": non-finite pixel value");
  }
  return img;
}

// ---- weight archives ----------------------------------------------------------

std::vector<std::uint8_t> encode_archive(const std::vector<ArchiveTensor>& tensors) {
  Writer w;
  w.bytes("LIT4", 4);
  w.uint<std::uint32_t>(kArchiveVersion);
  w.uint(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    if (t.name.size() > 0xffff) throw FormatError("tensor name too long: " + t.name);
    if (t.shape.size() > 0xff) throw FormatError("tensor rank too large: " + t.name);
    if (t.values.size() != numel(t.shape))
      throw DimensionError("archive tensor " + t.name + ": value count does not match shape");
    w.uint(static_cast<std::uint16_t>(t.name.size()));
    w.bytes(t.name.data(), t.name.size());
    w.uint(static_cast<std::uint8_t>(t.dtype));
    w.uint(static_cast<std::uint8_t>(t.shape.size()));
    for (auto d : t.shape) w.uint(static_cast<std::uint32_t>(d));
    for (double v : t.values) {
      if (t.dtype == DType::f32)
        w.f32(static_cast<float>(v));
      else
        w.f64(v);
    }
  }
  return std::move(w.data());
}

std::vector<ArchiveTensor> decode_archive(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes, "weight archive");
  if (bytes.size() < 4 || r.str(4) != "LIT4")
    throw FormatError("weight archive: bad magic (expected LIT4)");
  const auto version = r.uint<std::uint32_t>();
  if (version != kArchiveVersion)
    throw FormatError("weight archive: unsupported version " + std::to_string(version));
  const auto count = r.uint<std::uint32_t>();
  std::vector<ArchiveTensor> out;
  std::unordered_set<std::string> names;
  for (std::uint32_t i = 0; i < count; ++i) {
    ArchiveTensor t;
    t.name = r.str(r.uint<std::uint16_t>());
    if (!names.insert(t.name).second)
      throw FormatError("weight archive: duplicate tensor " + t.name);
    const auto code = r.uint<std::uint8_t>();
    if (code > 1)
      throw FormatError("weight archive: tensor " + t.name + " has unknown dtype " +
                        std::to_string(code));
    t.dtype = static_cast<DType>(code);
    const auto rank = r.uint<std::uint8_t>();
    std::uint64_t n = 1;
    for (std::uint8_t k = 0; k < rank; ++k) {
      const auto d = r.uint<std::uint32_t>();
      if (d == 0) throw FormatError("weight archive: tensor " + t.name + " has a zero dim");
      t.shape.push_back(d);
      n *= d;
    }
    const std::size_t width = t.dtype == DType::f32 ? 4 : 8;
    if (n > r.remaining() / width)
      throw FormatError("weight archive: truncated payload for " + t.name);
    t.values.resize(n);
    for (auto& v : t.values) v = t.dtype == DType::f32 ? r.f32() : r.f64();
    out.push_back(std::move(t));
  }
  if (!r.done())
    throw FormatError("weight archive: " + std::to_string(r.remaining()) +
                      " trailing bytes after the last tensor");
  return out;
}

template <typename T>
std::vector<ArchiveTensor> archive_from_store(const ParamStore<T>& store) {
  std::vector<ArchiveTensor> out;
  for (const auto& e : store.entries()) {
    auto d = e.tensor.data();
    out.push_back({e.name, dtype_of<T>(), e.tensor.shape(),
                   std::vector<double>(d.begin(), d.end())});
  }
  return out;
}

template <typename T>
void load_into_store(const std::vector<ArchiveTensor>& archive, ParamStore<T>& store) {
  auto& entries = store.entries();
  for (std::size_t i = 0; i < std::max(entries.size(), archive.size()); ++i) {
    if (i >= archive.size())
      throw DimensionError("archive is missing tensor " + entries[i].name);
    if (i >= entries.size())
      throw DimensionError("archive has unexpected tensor " + archive[i].name);
    const auto& a = archive[i];
    const auto& e = entries[i];
    if (a.name != e.name)
      throw DimensionError("tensor " + std::to_string(i) + ": archive has " + a.name +
                           ", model expects " + e.name);
    if (a.shape != e.tensor.shape())
      throw DimensionError("tensor " + e.name + ": archive shape " + to_string(a.shape) +
                           ", model shape " + to_string(e.tensor.shape()));
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto dst = entries[i].tensor.mutable_data();
    for (std::size_t k = 0; k < dst.size(); ++k)
      dst[k] = static_cast<T>(archive[i].values[k]);
  }
}

template <typename T>
void save_weights(const fs::path& path, const ParamStore<T>& store) {
  write_file(path, encode_archive(archive_from_store(store)));
}

template <typename T>
void load_weights(const fs::path& path, ParamStore<T>& store) {
  load_into_store(decode_archive(read_file(path)), store);
}

template std::vector<ArchiveTensor> archive_from_store(const ParamStore<float>&);
template std::vector<ArchiveTensor> archive_from_store(const ParamStore<double>&);
template void load_into_store(const std::vector<ArchiveTensor>&, ParamStore<float>&);
template void load_into_store(const std::vector<ArchiveTensor>&, ParamStore<double>&);
template void save_weights(const fs::path&, const ParamStore<float>&);
template void save_weights(const fs::path&, const ParamStore<double>&);
template void load_weights(const fs::path&, ParamStore<float>&);
template void load_weights(const fs::path&, ParamStore<double>&);

// ---- text lists -----------------------------------------------------------------

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

void write_lines(const fs::path& path, const std::vector<std::string>& lines) {
  std::string text;
  for (const auto& l : lines) text += l + "\n";
  write_file(path, text);
}

// ---- configuration ------------------------------------------------------------

namespace {

// Typed access to one JSON object; records which keys were read so the
// rest can be reported as unknown.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected a JSON object");
  }

  bool has(const char* key) const { return j_.contains(key); }

  void get(const char* key, std::size_t& out) {
    if (const json* v = take(key)) {
      if (!v->is_number_unsigned())
        throw ConfigError(field(key) + ": expected a non-negative integer");
      out = v->get<std::size_t>();
    }
  }
  void get(const char* key, double& out) {
    if (const json* v = take(key)) {
      if (!v->is_number()) throw ConfigError(field(key) + ": expected a number");
      out = v->get<double>();
    }
  }
  void get(const char* key, std::string& out) {
    if (const json* v = take(key)) {
      if (!v->is_string()) throw ConfigError(field(key) + ": expected a string");
      out = v->get<std::string>();
    }
  }
  void get(const char* key, ops::Activation& out) {
    std::string name;
    if (!has(key)) return;
    get(key, name);
    try {
      out = parse_activation(name);
    } catch (const ConfigError&) {
      throw ConfigError(field(key) + ": unknown activation '" + name + "'");
    }
  }
  template <std::size_t N>
  void get(const char* key, std::array<std::size_t, N>& out) {
    if (const json* v = take(key)) {
      if (!v->is_array() || v->size() != N)
        throw ConfigError(field(key) + ": expected an array of " + std::to_string(N) +
                          " integers");
      for (std::size_t i = 0; i < N; ++i) {
        if (!(*v)[i].is_number_unsigned())
          throw ConfigError(field(key) + "[" + std::to_string(i) +
                            "]: expected a non-negative integer");
        out[i] = (*v)[i].get<std::size_t>();
      }
    }
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError(field(it.key()) + ": unknown key");
  }

  std::string field(const std::string& key) const { return path_ + "." + key; }

 private:
  const json* take(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void parse_image(Section& s, ImageEncoderConfig& c) {
  std::string kind = to_string(c.kind);
  s.get("kind", kind);
  try {
    c = ImageEncoderConfig::defaults(parse_image_encoder_kind(kind));
  } catch (const ConfigError&) {
    throw ConfigError(s.field("kind") + ": unknown encoder '" + kind +
                      "' (vit_tiny, mobilevit_s, xcit_nano, vit_base)");
  }
  s.get("channels", c.channels);
  if (auto* v = std::get_if<VitConfig>(&c.arch)) {
    s.get("input_size", v->input_size);
    s.get("patch", v->patch);
    s.get("layers", v->layers);
    s.get("heads", v->heads);
    s.get("dim", v->dim);
    s.get("hidden_ratio", v->hidden_ratio);
  } else if (auto* m = std::get_if<MobileVitConfig>(&c.arch)) {
    s.get("input_size", m->input_size);
    s.get("stem", m->stem);
    s.get("channels_per_stage", m->channels);
    s.get("mv2_depths", m->mv2_depths);
    s.get("dims", m->dims);
    s.get("depths", m->depths);
    s.get("heads", m->heads);
    s.get("ffn_ratio", m->ffn_ratio);
    s.get("expansion", m->expansion);
    s.get("final_channels", m->final_channels);
    s.get("patch", m->patch);
  } else {
    auto& x = std::get<XcitConfig>(c.arch);
    s.get("input_size", x.input_size);
    s.get("patch", x.patch);
    s.get("layers", x.layers);
    s.get("heads", x.heads);
    s.get("dim", x.dim);
    s.get("hidden_ratio", x.hidden_ratio);
    s.get("class_layers", x.class_layers);
  }
}

ojson image_to_json(const ImageEncoderConfig& c) {
  ojson j;
  j["kind"] = to_string(c.kind);
  j["channels"] = c.channels;
  if (const auto* v = std::get_if<VitConfig>(&c.arch)) {
    j["input_size"] = v->input_size;
    j["patch"] = v->patch;
    j["layers"] = v->layers;
    j["heads"] = v->heads;
    j["dim"] = v->dim;
    j["hidden_ratio"] = v->hidden_ratio;
  } else if (const auto* m = std::get_if<MobileVitConfig>(&c.arch)) {
    j["input_size"] = m->input_size;
    j["stem"] = m->stem;
    j["channels_per_stage"] = m->channels;
    j["mv2_depths"] = m->mv2_depths;
    j["dims"] = m->dims;
    j["depths"] = m->depths;
    j["heads"] = m->heads;
    j["ffn_ratio"] = m->ffn_ratio;
    j["expansion"] = m->expansion;
    j["final_channels"] = m->final_channels;
    j["patch"] = m->patch;
  } else {
    const auto& x = std::get<XcitConfig>(c.arch);
    j["input_size"] = x.input_size;
    j["patch"] = x.patch;
    j["layers"] = x.layers;
    j["heads"] = x.heads;
    j["dim"] = x.dim;
    j["hidden_ratio"] = x.hidden_ratio;
    j["class_layers"] = x.class_layers;
  }
  return j;
}

}  // namespace

ConfigFile parse_config(const std::string& text, const std::string& source) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    // e.what() carries "at line L, column C".
    throw ConfigError(source + ": " + e.what());
  }
  ConfigFile cfg;
  Section root(doc, source);
  if (root.has("text_encoder")) {
    Section s(doc["text_encoder"], "text_encoder");
    auto& t = cfg.model.text;
    s.get("vocab_size", t.vocab_size);
    s.get("max_len", t.max_len);
    s.get("layers", t.layers);
    s.get("heads", t.heads);
    s.get("dim", t.dim);
    s.get("hidden_ratio", t.hidden_ratio);
    s.finish();
  }
  if (root.has("image_encoder")) {
    Section s(doc["image_encoder"], "image_encoder");
    parse_image(s, cfg.model.image);
    s.finish();
  }
  cfg.model.sync_dims();
  if (root.has("fusion")) {
    Section s(doc["fusion"], "fusion");
    auto& f = cfg.model.fusion;
    s.get("text_dim", f.text_dim);
    s.get("image_dim", f.image_dim);
    s.get("dim", f.dim);
    s.get("activation", f.activation);
    s.finish();
  }
  if (root.has("head")) {
    Section s(doc["head"], "head");
    auto& h = cfg.model.head;
    s.get("hidden", h.hidden);
    s.get("answers", h.answers);
    s.get("dropout", h.dropout);
    s.get("activation", h.activation);
    s.finish();
  }
  if (root.has("train")) {
    Section s(doc["train"], "train");
    auto& t = cfg.train;
    s.get("base_lr", t.base_lr);
    s.get("warmup_steps", t.warmup_steps);
    s.get("total_steps", t.total_steps);
    s.get("batch_size", t.batch_size);
    std::size_t seed = t.seed;
    s.get("seed", seed);
    t.seed = seed;
    s.get("beta1", t.beta1);
    s.get("beta2", t.beta2);
    s.get("adam_eps", t.adam_eps);
    s.get("weight_decay", t.weight_decay);
    s.get("init_std", t.init_std);
    s.finish();
  }
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    const auto& k = it.key();
    if (k != "text_encoder" && k != "image_encoder" && k != "fusion" && k != "head" &&
        k != "train")
      throw ConfigError(source + ": unknown section '" + k + "'");
  }
  cfg.model.validate();
  cfg.train.validate();
  return cfg;
}

ConfigFile load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

std::string config_to_json(const ConfigFile& cfg) {
  ojson j;
  const auto& t = cfg.model.text;
  j["text_encoder"] = {{"vocab_size", t.vocab_size}, {"max_len", t.max_len},
                       {"layers", t.layers},         {"heads", t.heads},
                       {"dim", t.dim},               {"hidden_ratio", t.hidden_ratio}};
  j["image_encoder"] = image_to_json(cfg.model.image);
  const auto& f = cfg.model.fusion;
  j["fusion"] = {{"text_dim", f.text_dim},
                 {"image_dim", f.image_dim},
                 {"dim", f.dim},
                 {"activation", to_string(f.activation)}};
  const auto& h = cfg.model.head;
  j["head"] = {{"hidden", h.hidden},
               {"answers", h.answers},
               {"dropout", h.dropout},
               {"activation", to_string(h.activation)}};
  const auto& tr = cfg.train;
  j["train"] = {{"base_lr", tr.base_lr},           {"warmup_steps", tr.warmup_steps},
                {"total_steps", tr.total_steps},   {"batch_size", tr.batch_size},
                {"seed", tr.seed},                 {"beta1", tr.beta1},
                {"beta2", tr.beta2},               {"adam_eps", tr.adam_eps},
                {"weight_decay", tr.weight_decay}, {"init_std", tr.init_std}};
  return j.dump(2) + "\n";
}

// ---- manifests ------------------------------------------------------------------

VqaDataset load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open manifest " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw InputError(path.string() + ": " + e.what());
  }
  const fs::path base = path.parent_path();
  auto require = [&](const json& obj, const char* key, const std::string& where) -> const json& {
    if (!obj.is_object() || !obj.contains(key) || !obj[key].is_string())
      throw InputError(path.string() + ": " + where + "." + key + " must be a string");
    return obj[key];
  };
  VqaDataset ds;
  ds.vocab = read_lines(base / require(doc, "vocab", "manifest").get<std::string>());
  ds.answers = read_lines(base / require(doc, "answers", "manifest").get<std::string>());
  if (!doc.contains("triplets") || !doc["triplets"].is_array())
    throw InputError(path.string() + ": manifest.triplets must be an array");
  std::unordered_map<std::string, std::int32_t> answer_ids;
  for (std::size_t i = 0; i < ds.answers.size(); ++i)
    answer_ids.emplace(ds.answers[i], static_cast<std::int32_t>(i));
  std::size_t idx = 0;
  for (const auto& t : doc["triplets"]) {
    const std::string where = "triplets[" + std::to_string(idx++) + "]";
    VqaSample s;
    const auto img = read_image(base / require(t, "image", where).get<std::string>());
    s.bands = img.bands;
    s.height = img.height;
    s.width = img.width;
    s.image = img.data;
    s.question = require(t, "question", where).get<std::string>();
    const auto answer = require(t, "answer", where).get<std::string>();
    auto it = answer_ids.find(answer);
    if (it == answer_ids.end())
      throw InputError(path.string() + ": " + where + ".answer '" + answer +
                       "' is not in the answer list");
    s.answer = it->second;
    s.type = parse_question_type(require(t, "type", where).get<std::string>());
    s.split = t.contains("split") ? parse_split(require(t, "split", where).get<std::string>())
                                  : Split::train;
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

void write_dataset(const fs::path& dir, const VqaDataset& data) {
  fs::create_directories(dir / "images");
  write_lines(dir / "vocab.txt", data.vocab);
  write_lines(dir / "answers.txt", data.answers);
  ojson doc;
  doc["vocab"] = "vocab.txt";
  doc["answers"] = "answers.txt";
  auto& list = doc["triplets"] = ojson::array();
  for (std::size_t i = 0; i < data.samples.size(); ++i) {
    const auto& s = data.samples[i];
    std::ostringstream name;
    name << "images/" << std::setw(5) << std::setfill('0') << i << ".l4im";
    write_image(dir / name.str(),
                ImageFile{static_cast<std::uint32_t>(s.bands),
                          static_cast<std::uint32_t>(s.height),
                          static_cast<std::uint32_t>(s.width), s.image});
    list.push_back({{"image", name.str()},
                    {"question", s.question},
                    {"answer", data.answers.at(static_cast<std::size_t>(s.answer))},
                    {"type", to_string(s.type)},
                    {"split", to_string(s.split)}});
  }
  write_file(dir / "manifest.json", doc.dump(2) + "\n");
}

}  // namespace lit4
