#include "jnr/checkpoint.hpp"

#include <nlohmann/json.hpp>

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <type_traits>

#include "jnr/errors.hpp"

namespace jnr {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "checkpoint IO assumes a little-endian host");

void BackboneConfig::validate() const {
  if (input_height < 8 || input_width < 8) {
    throw ConfigError("backbone input must be at least 8x8");
  }
  if (channels.empty() || channels.size() != blocks.size()) {
    throw ConfigError("backbone channels and blocks lists must be non-empty and "
                      "of equal length");
  }
  for (std::size_t i = 0; i < channels.size(); ++i) {
    if (channels[i] < 1 || blocks[i] < 1) {
      throw ConfigError("backbone stage " + std::to_string(i) +
                        " needs positive channels and blocks");
    }
  }
  if (feature_dim < 8) throw ConfigError("feature_dim must be at least 8");
}

namespace {

constexpr const char* kMagic = "JNRCKPT 1";

json config_json(const BackboneConfig& cfg) {
  return json{{"input_height", cfg.input_height},
              {"input_width", cfg.input_width},
              {"channels", cfg.channels},
              {"blocks", cfg.blocks},
              {"residual", cfg.residual},
              {"feature_dim", cfg.feature_dim}};
}

BackboneConfig config_from(const json& j) {
  BackboneConfig cfg;
  cfg.input_height = j.at("input_height").get<int>();
  cfg.input_width = j.at("input_width").get<int>();
  cfg.channels = j.at("channels").get<std::vector<int>>();
  cfg.blocks = j.at("blocks").get<std::vector<int>>();
  cfg.residual = j.at("residual").get<bool>();
  cfg.feature_dim = j.at("feature_dim").get<int>();
  cfg.validate();
  return cfg;
}

template <typename Scalar>
constexpr const char* dtype_name() {
  return std::is_same_v<Scalar, float> ? "float32" : "float64";
}

template <typename Stored, typename Scalar>
void read_values(std::istream& is, Tensor<Scalar>& t, const std::string& name) {
  std::vector<Stored> buf(static_cast<std::size_t>(t.size()));
  is.read(reinterpret_cast<char*>(buf.data()),
          static_cast<std::streamsize>(buf.size() * sizeof(Stored)));
  if (!is) throw InputError("checkpoint truncated in parameter '" + name + "'");
  for (Index i = 0; i < t.size(); ++i) {
    t[i] = static_cast<Scalar>(buf[static_cast<std::size_t>(i)]);
  }
}

}  // namespace

std::string backbone_to_json(const BackboneConfig& cfg) {
  return config_json(cfg).dump();
}

BackboneConfig backbone_from_json(const std::string& text) {
  try {
    return config_from(json::parse(text));
  } catch (const json::exception& e) {
    throw InputError(std::string("bad backbone config: ") + e.what());
  }
}

template <typename Scalar>
void save_checkpoint(const std::filesystem::path& path, const JerseyNet<Scalar>& net,
                     const CheckpointMeta& meta) {
  json header;
  header["format"] = "jnr-checkpoint";
  header["version"] = 1;
  header["dtype"] = dtype_name<Scalar>();
  header["config"] = config_json(net.config());
  std::vector<std::string> classes;
  for (const auto& l : net.classes().labels()) classes.push_back(l.token());
  header["classes"] = classes;
  header["iteration"] = meta.iteration;
  if (meta.loss_weights) {
    header["loss_weights"] = {meta.loss_weights->alpha(), meta.loss_weights->beta(),
                              meta.loss_weights->gamma()};
  }
  json params = json::array();
  for (const auto& p : net.parameters()) {
    params.push_back({{"name", p.name}, {"shape", p.tensor.shape()}});
  }
  header["parameters"] = params;
  const std::string text = header.dump();

  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write checkpoint " + path.string());
  os << kMagic << '\n' << text.size() << '\n' << text;
  for (const auto& p : net.parameters()) {
    os.write(reinterpret_cast<const char*>(p.tensor.data().data()),
             static_cast<std::streamsize>(p.tensor.size() * sizeof(Scalar)));
  }
  if (!os) throw std::runtime_error("failed writing checkpoint " + path.string());
}

template <typename Scalar>
JerseyNet<Scalar> load_checkpoint(const std::filesystem::path& path,
                                  CheckpointMeta* meta) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open checkpoint " + path.string());
  std::string magic;
  std::getline(is, magic);
  if (magic != kMagic) throw InputError(path.string() + " is not a jnr checkpoint");
  std::string len_line;
  std::getline(is, len_line);
  std::size_t len = 0;
  try {
    len = std::stoul(len_line);
  } catch (const std::exception&) {
    throw InputError("bad checkpoint header length");
  }
  std::string text(len, '\0');
  is.read(text.data(), static_cast<std::streamsize>(len));
  if (!is) throw InputError("checkpoint header truncated");

  try {
    const json header = json::parse(text);
    if (header.at("format") != "jnr-checkpoint" || header.at("version") != 1) {
      throw InputError("unsupported checkpoint format");
    }
    std::vector<JerseyLabel> labels;
    for (const auto& tok : header.at("classes")) {
      labels.push_back(JerseyLabel::parse(tok.get<std::string>()));
    }
    JerseyNet<Scalar> net(config_from(header.at("config")), ClassSet(labels), 0);
    const auto& entries = header.at("parameters");
    if (entries.size() != net.parameters().size()) {
      throw InputError("checkpoint parameter count does not match its config");
    }
    const std::string dtype = header.at("dtype");
    for (std::size_t i = 0; i < entries.size(); ++i) {
      auto& p = net.parameters()[i];
      if (entries[i].at("name") != p.name ||
          entries[i].at("shape").get<Shape>() != p.tensor.shape()) {
        throw InputError("checkpoint parameter " + std::to_string(i) +
                         " does not match the network layout");
      }
      if (dtype == "float32") {
        read_values<float>(is, p.tensor, p.name);
      } else if (dtype == "float64") {
        read_values<double>(is, p.tensor, p.name);
      } else {
        throw InputError("unknown checkpoint dtype '" + dtype + "'");
      }
    }
    if (meta) {
      meta->iteration = header.at("iteration").get<std::int64_t>();
      meta->loss_weights.reset();
      if (header.contains("loss_weights")) {
        const auto w = header["loss_weights"].get<std::vector<double>>();
        if (w.size() != 3) throw InputError("loss_weights must have 3 entries");
        meta->loss_weights = validate_weights(w[0], w[1], w[2]);
      }
    }
    return net;
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed checkpoint header: ") + e.what());
  }
}

template void save_checkpoint<float>(const std::filesystem::path&,
                                     const JerseyNet<float>&, const CheckpointMeta&);
template void save_checkpoint<double>(const std::filesystem::path&,
                                      const JerseyNet<double>&, const CheckpointMeta&);
template JerseyNet<float> load_checkpoint<float>(const std::filesystem::path&,
                                                 CheckpointMeta*);
template JerseyNet<double> load_checkpoint<double>(const std::filesystem::path&,
                                                   CheckpointMeta*);

}  // namespace jnr
