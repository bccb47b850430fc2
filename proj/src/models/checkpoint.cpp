#include <cstdio>
#include <fstream>
#include <type_traits>

#include "armt/errors.hpp"
#include "armt/io/binary.hpp"
#include "armt/models/model.hpp"

namespace armt::models {

using nlohmann::json;

namespace {

constexpr char kMagic[5] = "ARCK";
constexpr std::uint32_t kVersion = 1;

template <typename T>
const char* precision_name() {
  return std::is_same_v<T, float> ? "float32" : "float64";
}

struct Header {
  json manifest;
};

Header read_header(std::istream& is, const std::string& path) {
  io::expect_magic(is, kMagic, "checkpoint " + path);
  const auto version = io::read_scalar<std::uint32_t>(is);
  if (version != kVersion) {
    throw io::FormatError("checkpoint " + path + " has version " + std::to_string(version) + ", expected " +
                          std::to_string(kVersion));
  }
  const auto length = io::read_scalar<std::uint64_t>(is);
  if (length > (1u << 30)) throw io::FormatError("checkpoint manifest is implausibly large");
  std::string text(length, '\0');
  is.read(text.data(), static_cast<std::streamsize>(length));
  if (!is) throw io::FormatError("checkpoint " + path + " is truncated");
  Header h;
  try {
    h.manifest = json::parse(text);
  } catch (const json::exception& e) {
    throw io::FormatError("checkpoint manifest is not valid JSON: " + std::string(e.what()));
  }
  return h;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open checkpoint " + path);
  return is;
}

}  // namespace

template <typename T>
void save_checkpoint(const std::string& path, const Model<T>& model, const TrainingSnapshot<T>& snapshot) {
  json params = json::array();
  for (const auto& p : model.parameters()) params.push_back({{"name", p.name}, {"shape", p.value.shape()}});
  json manifest{{"precision", precision_name<T>()},
                {"config", model.config()},
                {"parameters", params},
                {"optimizer", snapshot.optimizer ? json{{"step", snapshot.optimizer->step}} : json(nullptr)},
                {"trainer", snapshot.trainer},
                {"rng", snapshot.rng ? json(snapshot.rng->serialize()) : json(nullptr)}};
  const std::string text = manifest.dump();

  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw ConfigError("cannot write checkpoint " + path);
    io::write_magic(os, kMagic);
    io::write_scalar<std::uint32_t>(os, kVersion);
    io::write_scalar<std::uint64_t>(os, text.size());
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& p : model.parameters()) io::write_le(os, p.value.ptr(), p.value.size());
    if (snapshot.optimizer) {
      const auto& opt = *snapshot.optimizer;
      if (opt.first.size() != model.parameters().size()) {
        throw ConfigError("optimizer state does not match the parameter list");
      }
      for (const auto& t : opt.first) io::write_le(os, t.ptr(), t.size());
      for (const auto& t : opt.second) io::write_le(os, t.ptr(), t.size());
    }
    if (!os) throw ConfigError("failed writing checkpoint " + path);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw ConfigError("cannot move checkpoint into " + path);
}

template <typename T>
LoadedCheckpoint<T> load_checkpoint(const std::string& path, const ModelConfig* expected) {
  std::ifstream is = open_in(path);
  const json manifest = read_header(is, path).manifest;
  if (manifest.value("precision", std::string()) != precision_name<T>()) {
    throw ConfigError("checkpoint " + path + " stores " + manifest.value("precision", std::string("?")) +
                      " values, requested " + precision_name<T>());
  }
  ModelConfig config = manifest.at("config").get<ModelConfig>();
  if (expected && !(*expected == config)) {
    throw ConfigError("checkpoint " + path + " configuration " + manifest.at("config").dump() +
                      " does not match expected " + json(*expected).dump());
  }
  LoadedCheckpoint<T> out{Model<T>(config, 0), {}};
  auto& store = out.model.parameters();
  const json& table = manifest.at("parameters");
  if (table.size() != store.size()) throw io::FormatError("checkpoint parameter table has the wrong length");
  for (std::size_t i = 0; i < store.size(); ++i) {
    auto& p = store[i];
    if (table[i].at("name").get<std::string>() != p.name ||
        table[i].at("shape").get<nn::Shape>() != p.value.shape()) {
      throw io::FormatError("checkpoint parameter " + std::to_string(i) + " does not match " + p.name);
    }
    io::read_le(is, p.value.ptr(), p.value.size());
  }
  if (!manifest.at("optimizer").is_null()) {
    auto opt = nn::AdamState<T>::for_parameters(store);
    opt.step = manifest.at("optimizer").at("step").get<std::uint64_t>();
    for (auto& t : opt.first) io::read_le(is, t.ptr(), t.size());
    for (auto& t : opt.second) io::read_le(is, t.ptr(), t.size());
    out.snapshot.optimizer = std::move(opt);
  }
  out.snapshot.trainer = manifest.value("trainer", json::object());
  if (!manifest.at("rng").is_null()) {
    Rng rng;
    rng.deserialize(manifest.at("rng").get<std::string>());
    out.snapshot.rng = rng;
  }
  if (is.peek() != std::char_traits<char>::eof()) throw io::FormatError("checkpoint has trailing bytes");
  return out;
}

ModelConfig read_checkpoint_config(const std::string& path) {
  std::ifstream is = open_in(path);
  return read_header(is, path).manifest.at("config").get<ModelConfig>();
}

std::string read_checkpoint_precision(const std::string& path) {
  std::ifstream is = open_in(path);
  return read_header(is, path).manifest.value("precision", std::string());
}

template void save_checkpoint<float>(const std::string&, const Model<float>&, const TrainingSnapshot<float>&);
template void save_checkpoint<double>(const std::string&, const Model<double>&, const TrainingSnapshot<double>&);
template LoadedCheckpoint<float> load_checkpoint<float>(const std::string&, const ModelConfig*);
template LoadedCheckpoint<double> load_checkpoint<double>(const std::string&, const ModelConfig*);

}  // namespace armt::models
