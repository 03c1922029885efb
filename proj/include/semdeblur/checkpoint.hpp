#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "semdeblur/deblur_net.hpp"
#include "semdeblur/nn.hpp"
#include "semdeblur/parse_net.hpp"

namespace semdeblur {

inline constexpr const char* kParserMagic = "PCKPT1";
inline constexpr const char* kGeneratorMagic = "GCKPT1";
inline constexpr const char* kDiscriminatorMagic = "DCKPT1";

struct NamedTensor {
  std::string name;
  std::vector<int> shape;
  std::vector<float> data;
};

// Layout: 6-byte magic, u32-length JSON metadata (config echo plus optional
// training state), u32 tensor count, then per tensor: u32-length name,
// u32 rank, i32 dims, float32 little-endian data.
struct CheckpointFile {
  std::string magic;
  nlohmann::json meta;
  std::vector<NamedTensor> tensors;

  const NamedTensor& tensor(const std::string& name) const;
  bool has_tensor(const std::string& name) const;
};

void write_checkpoint(const CheckpointFile& file, const std::filesystem::path& path);
// Throws CheckpointError on a magic mismatch (wrong kind or version) or a
// truncated/corrupt file.
CheckpointFile read_checkpoint(const std::filesystem::path& path,
                               const std::string& expected_magic);

nlohmann::json to_json(const GeneratorConfig& cfg);
nlohmann::json to_json(const DiscriminatorConfig& cfg);
nlohmann::json to_json(const ParsingModelConfig& cfg);
GeneratorConfig generator_config_from_json(const nlohmann::json& j);
DiscriminatorConfig discriminator_config_from_json(const nlohmann::json& j);
ParsingModelConfig parsing_config_from_json(const nlohmann::json& j);

// Parameter tensors (and optionally Adam moments as "adam.m/<name>" and
// "adam.v/<name>") appended to / restored from a checkpoint.
void store_parameters(CheckpointFile& file, const nn::ParamList<float>& params);
void restore_parameters(const CheckpointFile& file, const nn::ParamList<float>& params);
void store_optimizer(CheckpointFile& file, const nn::ParamList<float>& params,
                     nn::Adam<float>& opt);
void restore_optimizer(const CheckpointFile& file, const nn::ParamList<float>& params,
                       nn::Adam<float>& opt);

void save_parser(ParsingModel<float>& model, const std::filesystem::path& path);
ParsingModel<float> load_parser(const std::filesystem::path& path);
void save_generator(Generator<float>& gen, const std::filesystem::path& path);
Generator<float> load_generator(const std::filesystem::path& path);
Discriminator<float> load_discriminator(const std::filesystem::path& path);

}  // namespace semdeblur
