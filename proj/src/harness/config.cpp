#include "mdam/harness/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "mdam/env/dataset.hpp"

namespace mdam::harness {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

template <class T>
T parse_integer(const std::string& key, const std::string& v) {
  T out{};
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw ConfigError("config: '" + key + "' expects a non-negative integer, got '" + v + "'");
  }
  return out;
}

double parse_real(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config: '" + key + "' expects a number, got '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw ConfigError("config: '" + key + "' expects a boolean, got '" + v + "'");
}

}  // namespace

std::vector<std::pair<std::string, std::string>> config_entries(const train::TrainerConfig& c) {
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  return {
      {"kind", std::string(env::to_string(c.kind))},
      {"n", std::to_string(c.n)},
      {"epochs", std::to_string(c.epochs)},
      {"iterations_per_epoch", std::to_string(c.iterations_per_epoch)},
      {"batch_size", std::to_string(c.batch_size)},
      {"learning_rate", format_double(c.learning_rate)},
      {"k_kl", format_double(c.k_kl)},
      {"eg_period", std::to_string(c.eg_period)},
      {"use_eg", b(c.use_eg)},
      {"decoders", std::to_string(c.decoders)},
      {"embed_dim", std::to_string(c.embed_dim)},
      {"heads", std::to_string(c.heads)},
      {"layers", std::to_string(c.layers)},
      {"ff_hidden", std::to_string(c.ff_hidden)},
      {"seed", std::to_string(c.seed)},
      {"validation_size", std::to_string(c.validation_size)},
      {"grad_clip", format_double(c.grad_clip)},
      {"normalize_advantage", b(c.normalize_advantage)},
      {"all_step_kl", b(c.all_step_kl)},
  };
}

void set_config_value(train::TrainerConfig& c, const std::string& key, const std::string& v) {
  using Z = std::size_t;
  if (key == "kind") {
    auto k = env::parse_kind(v);
    if (!k) throw ConfigError("config: unknown problem kind '" + v + "'");
    c.kind = *k;
  } else if (key == "n") {
    c.n = parse_integer<Z>(key, v);
  } else if (key == "epochs") {
    c.epochs = parse_integer<Z>(key, v);
  } else if (key == "iterations_per_epoch") {
    c.iterations_per_epoch = parse_integer<Z>(key, v);
  } else if (key == "batch_size") {
    c.batch_size = parse_integer<Z>(key, v);
  } else if (key == "learning_rate") {
    c.learning_rate = parse_real(key, v);
  } else if (key == "k_kl") {
    c.k_kl = parse_real(key, v);
  } else if (key == "eg_period") {
    c.eg_period = parse_integer<Z>(key, v);
  } else if (key == "use_eg") {
    c.use_eg = parse_bool(key, v);
  } else if (key == "decoders") {
    c.decoders = parse_integer<Z>(key, v);
  } else if (key == "embed_dim") {
    c.embed_dim = parse_integer<Z>(key, v);
  } else if (key == "heads") {
    c.heads = parse_integer<Z>(key, v);
  } else if (key == "layers") {
    c.layers = parse_integer<Z>(key, v);
  } else if (key == "ff_hidden") {
    c.ff_hidden = parse_integer<Z>(key, v);
  } else if (key == "seed") {
    c.seed = parse_integer<std::uint64_t>(key, v);
  } else if (key == "validation_size") {
    c.validation_size = parse_integer<Z>(key, v);
  } else if (key == "grad_clip") {
    c.grad_clip = parse_real(key, v);
  } else if (key == "normalize_advantage") {
    c.normalize_advantage = parse_bool(key, v);
  } else if (key == "all_step_kl") {
    c.all_step_kl = parse_bool(key, v);
  } else {
    throw ConfigError("config: unknown key '" + key + "'");
  }
}

train::TrainerConfig parse_config(std::istream& in, train::TrainerConfig base) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
    }
    set_config_value(base, trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  return base;
}

train::TrainerConfig load_config(const std::string& path, train::TrainerConfig base) {
  std::ifstream in(path);
  if (!in) throw env::DataError("cannot open config file " + path);
  return parse_config(in, std::move(base));
}

std::string format_config(const train::TrainerConfig& config) {
  std::string out;
  for (const auto& [k, v] : config_entries(config)) out += k + " = " + v + "\n";
  return out;
}

}  // namespace mdam::harness
