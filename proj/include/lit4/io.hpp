#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lit4/config.hpp"
#include "lit4/data.hpp"
#include "lit4/params.hpp"
#include "lit4/train.hpp"

namespace lit4 {

// ---- raster images ("L4IM") ---------------------------------------------

struct ImageFile {
  std::uint32_t bands = 0;
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::vector<float> data;  // band-major
};

void write_image(const std::filesystem::path& path, const ImageFile& image);
ImageFile read_image(const std::filesystem::path& path);

// ---- weight archives ("LIT4") --------------------------------------------

struct ArchiveTensor {
  std::string name;
  DType dtype = DType::f32;
  Shape shape;
  std::vector<double> values;  // exact for both dtypes
};

/// magic "LIT4", u32 version 1, u32 count, then per tensor: u16 name
/// length, name bytes, u8 dtype (0 f32, 1 f64), u8 rank, u32 dims, payload.
/// All integers and payloads little-endian.
std::vector<std::uint8_t> encode_archive(const std::vector<ArchiveTensor>& tensors);
/// FormatError on bad magic or version, truncation, duplicate names or
/// trailing bytes.
std::vector<ArchiveTensor> decode_archive(const std::vector<std::uint8_t>& bytes);

/// Every entry of the store (parameters and buffers), in store order.
template <typename T>
std::vector<ArchiveTensor> archive_from_store(const ParamStore<T>& store);

/// Copies archive values into the store. The archive must hold exactly the
/// store's tensor names with identical shapes; otherwise DimensionError
/// naming the first mismatching tensor.
template <typename T>
void load_into_store(const std::vector<ArchiveTensor>& archive, ParamStore<T>& store);

template <typename T>
void save_weights(const std::filesystem::path& path, const ParamStore<T>& store);
template <typename T>
void load_weights(const std::filesystem::path& path, ParamStore<T>& store);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& text);
void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

// ---- text lists ------------------------------------------------------------

std::vector<std::string> read_lines(const std::filesystem::path& path);
void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines);

// ---- configuration files ---------------------------------------------------

struct ConfigFile {
  ModelConfig model;
  TrainConfig train;
};

/// Sections text_encoder, image_encoder, fusion, head, train; every section
/// and key is optional, unknown keys are rejected. Parse errors report the
/// line, semantic errors name the field. Throws ConfigError.
ConfigFile parse_config(const std::string& text, const std::string& source = "config");
ConfigFile load_config(const std::filesystem::path& path);
/// Full document with every key spelled out.
std::string config_to_json(const ConfigFile& config);

// ---- dataset manifests -----------------------------------------------------

/// {"vocab": file, "answers": file, "triplets": [{"image", "question",
/// "answer", "type", "split"}]} with paths relative to the manifest.
VqaDataset load_manifest(const std::filesystem::path& path);
/// Writes manifest.json, vocab.txt, answers.txt and images/NNNNN.l4im.
void write_dataset(const std::filesystem::path& dir, const VqaDataset& data);

}  // namespace lit4
