#include "semdeblur/checkpoint.hpp"

#include <fstream>

#include "semdeblur/binary_io.hpp"

namespace semdeblur {

using nlohmann::json;

const NamedTensor& CheckpointFile::tensor(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t;
  }
  throw CheckpointError("checkpoint has no tensor " + name);
}

bool CheckpointFile::has_tensor(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return true;
  }
  return false;
}

void write_checkpoint(const CheckpointFile& file, const std::filesystem::path& path) {
  if (file.magic.size() != 6) throw CheckpointError("checkpoint magic must be 6 bytes");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write checkpoint " + path.string());
  os.write(file.magic.data(), 6);
  binio::write_string(os, file.meta.dump());
  binio::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(file.tensors.size()));
  for (const auto& t : file.tensors) {
    binio::write_string(os, t.name);
    binio::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(t.shape.size()));
    for (int d : t.shape) binio::write_pod<std::int32_t>(os, d);
    os.write(reinterpret_cast<const char*>(t.data.data()),
             static_cast<std::streamsize>(t.data.size() * sizeof(float)));
  }
  if (!os) throw IoError("write failed for " + path.string());
}

CheckpointFile read_checkpoint(const std::filesystem::path& path,
                               const std::string& expected_magic) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read checkpoint " + path.string());
  std::string magic(6, '\0');
  is.read(magic.data(), 6);
  if (!is) throw CheckpointError("truncated checkpoint " + path.string());
  if (magic != expected_magic) {
    throw CheckpointError("checkpoint kind/version mismatch: expected " +
                          expected_magic + ", found " + magic);
  }
  CheckpointFile file;
  file.magic = magic;
  try {
    file.meta = json::parse(binio::read_string(is));
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("corrupt checkpoint metadata: ") + e.what());
  }
  const auto count = binio::read_pod<std::uint32_t>(is);
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = binio::read_string(is, 4096);
    const auto rank = binio::read_pod<std::uint32_t>(is);
    if (rank > 8) throw CheckpointError("corrupt tensor rank");
    std::size_t n = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      const int d = binio::read_pod<std::int32_t>(is);
      if (d < 0) throw CheckpointError("negative tensor dimension");
      t.shape.push_back(d);
      n *= static_cast<std::size_t>(d);
    }
    if (n > (1u << 28)) throw CheckpointError("tensor too large");
    t.data.resize(n);
    is.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(n * sizeof(float)));
    if (!is) throw CheckpointError("truncated tensor " + t.name);
    file.tensors.push_back(std::move(t));
  }
  if (is.peek() != std::char_traits<char>::eof()) {
    throw CheckpointError("trailing bytes in checkpoint");
  }
  return file;
}

json to_json(const GeneratorConfig& c) {
  return {{"num_scales", c.num_scales},
          {"resblocks_per_scale", c.resblocks_per_scale},
          {"first_conv_kernel", c.first_conv_kernel},
          {"conv_kernel", c.conv_kernel},
          {"channels", c.channels},
          {"scale1_in_channels", c.scale1_in_channels},
          {"scale2_in_channels", c.scale2_in_channels},
          {"image_size", c.image_size}};
}

json to_json(const DiscriminatorConfig& c) {
  return {{"input_size", c.input_size},
          {"strided_layers", c.strided_layers},
          {"base_channels", c.base_channels},
          {"max_channels", c.max_channels}};
}

json to_json(const ParsingModelConfig& c) {
  return {{"num_classes", c.num_classes},
          {"encoder_depth", c.encoder_depth},
          {"base_channels", c.base_channels},
          {"skip_connections", c.skip_connections},
          {"image_size", c.image_size}};
}

GeneratorConfig generator_config_from_json(const json& j) {
  GeneratorConfig c;
  c.num_scales = j.value("num_scales", c.num_scales);
  c.resblocks_per_scale = j.value("resblocks_per_scale", c.resblocks_per_scale);
  c.first_conv_kernel = j.value("first_conv_kernel", c.first_conv_kernel);
  c.conv_kernel = j.value("conv_kernel", c.conv_kernel);
  c.channels = j.value("channels", c.channels);
  c.scale1_in_channels = j.value("scale1_in_channels", c.scale1_in_channels);
  c.scale2_in_channels = j.value("scale2_in_channels", c.scale2_in_channels);
  c.image_size = j.value("image_size", c.image_size);
  return c;
}

DiscriminatorConfig discriminator_config_from_json(const json& j) {
  DiscriminatorConfig c;
  c.input_size = j.value("input_size", c.input_size);
  c.strided_layers = j.value("strided_layers", c.strided_layers);
  c.base_channels = j.value("base_channels", c.base_channels);
  c.max_channels = j.value("max_channels", c.max_channels);
  return c;
}

ParsingModelConfig parsing_config_from_json(const json& j) {
  ParsingModelConfig c;
  c.num_classes = j.value("num_classes", c.num_classes);
  c.encoder_depth = j.value("encoder_depth", c.encoder_depth);
  c.base_channels = j.value("base_channels", c.base_channels);
  c.skip_connections = j.value("skip_connections", c.skip_connections);
  c.image_size = j.value("image_size", c.image_size);
  return c;
}

void store_parameters(CheckpointFile& file, const nn::ParamList<float>& params) {
  for (const auto* p : params) file.tensors.push_back({p->name, p->shape, p->value});
}

void restore_parameters(const CheckpointFile& file, const nn::ParamList<float>& params) {
  for (auto* p : params) {
    const NamedTensor& t = file.tensor(p->name);
    if (t.shape != p->shape) throw CheckpointError("shape mismatch for " + p->name);
    p->value = t.data;
  }
}

void store_optimizer(CheckpointFile& file, const nn::ParamList<float>& params,
                     nn::Adam<float>& opt) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    file.tensors.push_back({"adam.m/" + params[i]->name, params[i]->shape,
                            opt.first_moments()[i]});
    file.tensors.push_back({"adam.v/" + params[i]->name, params[i]->shape,
                            opt.second_moments()[i]});
  }
  file.meta["adam_steps"] = opt.steps();
}

void restore_optimizer(const CheckpointFile& file, const nn::ParamList<float>& params,
                       nn::Adam<float>& opt) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    opt.first_moments()[i] = file.tensor("adam.m/" + params[i]->name).data;
    opt.second_moments()[i] = file.tensor("adam.v/" + params[i]->name).data;
  }
  opt.set_steps(file.meta.at("adam_steps").get<std::int64_t>());
}

void save_parser(ParsingModel<float>& model, const std::filesystem::path& path) {
  CheckpointFile f{kParserMagic, {{"config", to_json(model.config())}}, {}};
  store_parameters(f, model.parameters());
  write_checkpoint(f, path);
}

ParsingModel<float> load_parser(const std::filesystem::path& path) {
  const auto f = read_checkpoint(path, kParserMagic);
  ParsingModel<float> model(parsing_config_from_json(f.meta.at("config")));
  restore_parameters(f, model.parameters());
  return model;
}

void save_generator(Generator<float>& gen, const std::filesystem::path& path) {
  CheckpointFile f{kGeneratorMagic, {{"config", to_json(gen.config())}}, {}};
  store_parameters(f, gen.parameters());
  write_checkpoint(f, path);
}

Generator<float> load_generator(const std::filesystem::path& path) {
  const auto f = read_checkpoint(path, kGeneratorMagic);
  Generator<float> gen(generator_config_from_json(f.meta.at("config")));
  restore_parameters(f, gen.parameters());
  return gen;
}

Discriminator<float> load_discriminator(const std::filesystem::path& path) {
  const auto f = read_checkpoint(path, kDiscriminatorMagic);
  Discriminator<float> disc(discriminator_config_from_json(f.meta.at("config")));
  restore_parameters(f, disc.parameters());
  return disc;
}

}  // namespace semdeblur
