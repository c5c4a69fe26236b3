#include "infopart/io.hpp"

#include <bit>
#include <charconv>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "infopart/error.hpp"

namespace infopart {

using nlohmann::json;

namespace {

static_assert(std::endian::native == std::endian::little, "trajectory files assume a little-endian host");

template <class T>
json layers_to_json(const DenseNet<T>& net) {
  json layers = json::array();
  for (const auto& l : net.layers()) {
    json jl;
    jl["in"] = l.in_dim();
    jl["out"] = l.out_dim();
    jl["activation"] = activation_name(l.activation);
    jl["weight"] = std::vector<T>(l.weight.data(), l.weight.data() + l.weight.size());
    jl["bias"] = std::vector<T>(l.bias.data(), l.bias.data() + l.bias.size());
    layers.push_back(std::move(jl));
  }
  return layers;
}

template <class T>
DenseNet<T> layers_from_json(const json& layers) {
  std::vector<DenseLayer<T>> out;
  for (const auto& jl : layers) {
    DenseLayer<T> l;
    const int in = jl.at("in").get<int>(), o = jl.at("out").get<int>();
    const auto w = jl.at("weight").get<std::vector<T>>();
    const auto b = jl.at("bias").get<std::vector<T>>();
    require(w.size() == static_cast<std::size_t>(in) * static_cast<std::size_t>(o) &&
                b.size() == static_cast<std::size_t>(o),
            "network layer has inconsistent shapes");
    l.weight = Eigen::Map<const Tensor2D<T>>(w.data(), in, o);
    l.bias = Eigen::Map<const RowVector<T>>(b.data(), o);
    l.activation = activation_from_name(jl.at("activation").get<std::string>());
    out.push_back(std::move(l));
  }
  return DenseNet<T>::from_layers(std::move(out));
}

template <class T>
constexpr const char* scalar_name() {
  return std::is_same_v<T, float> ? "float32" : "float64";
}

json parse_json(const std::string& text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ContractError(std::string("malformed ") + what + ": " + e.what());
  }
}

}  // namespace

template <class T>
std::string network_to_json(const DenseNet<T>& net) {
  json j;
  j["format"] = "infopart.network";
  j["version"] = kNetworkFormatVersion;
  j["scalar"] = scalar_name<T>();
  j["layers"] = layers_to_json(net);
  return j.dump();
}

template <class T>
DenseNet<T> network_from_json(const std::string& text) {
  const json j = parse_json(text, "network file");
  try {
    require(j.at("format") == "infopart.network", "not a network container");
    require(j.at("version").get<int>() == kNetworkFormatVersion, "unsupported network format version");
    require(j.at("scalar") == scalar_name<T>(), "network scalar type mismatch");
    return layers_from_json<T>(j.at("layers"));
  } catch (const json::exception& e) {
    throw ContractError(std::string("malformed network file: ") + e.what());
  }
}

template std::string network_to_json<float>(const DenseNet<float>&);
template std::string network_to_json<double>(const DenseNet<double>&);
template DenseNet<float> network_from_json<float>(const std::string&);
template DenseNet<double> network_from_json<double>(const std::string&);

std::string partition_to_json(const Partition& p) {
  json j;
  j["format"] = "infopart.partition";
  j["version"] = kPartitionFormatVersion;
  j["variant"] = p.kind();
  j["alphabet_size"] = p.alphabet_size();
  j["creation_seed"] = p.creation_seed();
  std::visit(
      [&](const auto& v) {
        using V = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<V, ThresholdPartition>) {
          j["boundaries"] = v.boundaries;
        } else if constexpr (std::is_same_v<V, PolylinePartition>) {
          j["knots"] = v.knots;
        } else if constexpr (std::is_same_v<V, RandomMlpPartition>) {
          j["spec"] = {{"n_layers", v.spec.n_layers},
                       {"units_per_layer", v.spec.units_per_layer},
                       {"activation", v.spec.activation == RandomMlpActivation::relu ? "relu" : "tanh"},
                       {"output_dim", v.spec.output_dim},
                       {"weight_mean", v.spec.weight_mean},
                       {"weight_std", v.spec.weight_std},
                       {"input_dim", v.spec.input_dim},
                       {"seed", v.spec.seed}};
          j["layers"] = layers_to_json(v.net);
        } else {
          j["state_dim"] = v.state_dim;
          j["frequencies"] = v.frequencies;
          j["encoder"] = layers_to_json(v.encoder);
          j["quantizer"] = layers_to_json(v.quantizer);
          j["noise_rows"] = v.noise.rows();
          j["noise"] = std::vector<float>(v.noise.data(), v.noise.data() + v.noise.size());
        }
      },
      p.variant());
  return j.dump(1);
}

Partition partition_from_json(const std::string& text) {
  const json j = parse_json(text, "partition file");
  try {
    require(j.at("format") == "infopart.partition", "not a partition container");
    require(j.at("version").get<int>() == kPartitionFormatVersion, "unsupported partition format version");
    const std::string variant = j.at("variant").get<std::string>();
    const int m = j.at("alphabet_size").get<int>();
    const auto seed = j.value("creation_seed", std::uint64_t{0});
    if (variant == "threshold") {
      auto p = Partition::threshold(j.at("boundaries").get<std::vector<double>>());
      require(p.alphabet_size() == m, "threshold alphabet size inconsistent with boundaries");
      return Partition(p.variant(), m, seed);
    }
    if (variant == "polyline") {
      return Partition(Partition::polyline(j.at("knots").get<std::vector<std::array<double, 2>>>()).variant(),
                       m, seed);
    }
    if (variant == "random_mlp") {
      const json& s = j.at("spec");
      RandomMlpSpec spec;
      spec.n_layers = s.at("n_layers").get<int>();
      spec.units_per_layer = s.at("units_per_layer").get<int>();
      spec.activation = s.at("activation") == "relu" ? RandomMlpActivation::relu : RandomMlpActivation::tanh;
      spec.output_dim = s.at("output_dim").get<int>();
      spec.weight_mean = s.at("weight_mean").get<double>();
      spec.weight_std = s.at("weight_std").get<double>();
      spec.input_dim = s.at("input_dim").get<int>();
      spec.seed = s.at("seed").get<std::uint64_t>();
      return Partition(RandomMlpPartition{spec, layers_from_json<double>(j.at("layers"))}, m, seed);
    }
    if (variant == "neural") {
      NeuralPartition n;
      n.state_dim = j.at("state_dim").get<int>();
      n.frequencies = j.at("frequencies").get<int>();
      n.encoder = layers_from_json<float>(j.at("encoder"));
      n.quantizer = layers_from_json<float>(j.at("quantizer"));
      const auto rows = j.at("noise_rows").get<Eigen::Index>();
      const auto noise = j.at("noise").get<std::vector<float>>();
      require(rows > 0 && noise.size() % static_cast<std::size_t>(rows) == 0, "noise block has a bad shape");
      n.noise = Eigen::Map<const Tensor2D<float>>(noise.data(), rows,
                                                 static_cast<Eigen::Index>(noise.size()) / rows);
      auto p = Partition::neural(std::move(n));
      return Partition(p.variant(), m, seed);
    }
    throw ContractError("unknown partition variant '" + variant + "'");
  } catch (const json::exception& e) {
    throw ContractError(std::string("malformed partition file: ") + e.what());
  }
}

void save_partition(const Partition& p, const std::filesystem::path& path) {
  write_file_atomic(path, partition_to_json(p) + "\n");
}

Partition load_partition(const std::filesystem::path& path) { return partition_from_json(read_file(path)); }

void map_to_config(const MapSpec& map, KeyValueConfig& config) {
  config.set("map", map.name());
  std::visit(
      [&](const auto& p) {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, LogisticParams>) {
          config.set("r", format_double(p.r));
        } else if constexpr (std::is_same_v<P, HenonParams>) {
          config.set("a", format_double(p.a));
          config.set("b", format_double(p.b));
        } else {
          config.set("a", format_double(p.a));
          config.set("b", format_double(p.b));
          config.set("kappa", format_double(p.kappa));
          config.set("eta", format_double(p.eta));
        }
      },
      map.params());
}

MapSpec map_from_config(const KeyValueConfig& config) {
  const std::string name = config.get_or("map", "logistic");
  if (name == "logistic") return MapSpec::logistic(config.get_double("r", LogisticParams{}.r));
  if (name == "henon") return MapSpec::henon(config.get_double("a", HenonParams{}.a), config.get_double("b", HenonParams{}.b));
  if (name == "ikeda") {
    const IkedaParams d;
    return MapSpec::ikeda(config.get_double("a", d.a), config.get_double("b", d.b), config.get_double("kappa", d.kappa),
                          config.get_double("eta", d.eta));
  }
  throw ContractError("unknown map '" + name + "' (valid: logistic, henon, ikeda)");
}

void export_trajectory(const Trajectory& t, const std::filesystem::path& path) {
  std::string bytes(t.data.size() * sizeof(double), '\0');
  std::memcpy(bytes.data(), t.data.data(), bytes.size());
  write_file_atomic(path, bytes);
  KeyValueConfig hdr;
  hdr.set("format", "infopart.trajectory");
  hdr.set("version", "1");
  map_to_config(t.map, hdr);
  hdr.set("dim", std::to_string(t.dim));
  hdr.set("n", std::to_string(t.size()));
  hdr.set("seed", std::to_string(t.seed));
  hdr.set("burn_in", std::to_string(t.burn_in));
  hdr.set("encoding", "float64-le-row-major");
  write_file_atomic(path.string() + ".hdr", hdr.to_text());
}

Trajectory import_trajectory(const std::filesystem::path& path) {
  const auto hdr = KeyValueConfig::parse(read_file(path.string() + ".hdr"));
  require(hdr.get_or("format", "") == "infopart.trajectory", "not a trajectory header");
  const MapSpec map = map_from_config(hdr);
  Trajectory t{map, map.dim(), {}, hdr.get_u64("seed", 0),
               static_cast<std::size_t>(hdr.get_int("burn_in", 0))};
  const std::string bytes = read_file(path);
  const auto n = static_cast<std::size_t>(hdr.get_int("n", -1));
  require(bytes.size() == n * sizeof(double) * static_cast<std::size_t>(t.dim),
          "trajectory file size does not match its header");
  t.data.resize(bytes.size() / sizeof(double));
  std::memcpy(t.data.data(), bytes.data(), bytes.size());
  return t;
}

void write_symbols(const SymbolSequence& s, const std::filesystem::path& path) {
  write_file_atomic(path, std::string(s.symbols.begin(), s.symbols.end()));
}

SymbolSequence read_symbols(const std::filesystem::path& path, int alphabet_size) {
  const std::string bytes = read_file(path);
  return SymbolSequence(std::vector<std::uint8_t>(bytes.begin(), bytes.end()), alphabet_size);
}

KeyValueConfig KeyValueConfig::parse(const std::string& text) {
  KeyValueConfig c;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++number;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    require(eq != std::string::npos, "config line " + std::to_string(number) + " is not key=value");
    const std::string key = trim(line.substr(0, eq));
    require(!key.empty(), "config line " + std::to_string(number) + " has an empty key");
    c.values_[key] = trim(line.substr(eq + 1));
  }
  return c;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) { return parse(read_file(path)); }

std::optional<std::string> KeyValueConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

std::string KeyValueConfig::get_or(const std::string& key, const std::string& fallback) const {
  return get(key).value_or(fallback);
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  try {
    std::size_t used = 0;
    const double d = std::stod(*v, &used);
    require(used == v->size(), "");
    return d;
  } catch (const std::exception&) {
    throw ContractError("config key '" + key + "' is not a number: " + *v);
  }
}

long long KeyValueConfig::get_int(const std::string& key, long long fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  long long out = 0;
  auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (ec != std::errc() || ptr != v->data() + v->size()) {
    // accept 1e6-style integers
    const double d = get_double(key, 0.0);
    require(d == static_cast<double>(static_cast<long long>(d)),
            "config key '" + key + "' is not an integer: " + *v);
    return static_cast<long long>(d);
  }
  return out;
}

std::uint64_t KeyValueConfig::get_u64(const std::string& key, std::uint64_t fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  require(ec == std::errc() && ptr == v->data() + v->size(),
          "config key '" + key + "' is not an unsigned integer: " + *v);
  return out;
}

void KeyValueConfig::merge(const KeyValueConfig& overrides) {
  for (const auto& [k, v] : overrides.values_) values_[k] = v;
}

std::string KeyValueConfig::to_text() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
  return out;
}

std::string KeyValueConfig::hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : to_text()) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string csv_header_comment(const std::string& config_hash) {
  return std::string("# infopart ") + INFOPART_VERSION + " config=" + config_hash + "\n";
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw std::runtime_error("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ContractError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace infopart
