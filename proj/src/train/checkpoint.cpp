#include "mdam/train/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "mdam/env/dataset.hpp"
#include "mdam/harness/config.hpp"

namespace mdam::train {

static_assert(std::endian::native == std::endian::little, "checkpoint blob assumes a little-endian host");

namespace {

constexpr const char* kMagic = "MDAM1";

std::string real(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

struct Writer {
  std::vector<std::string> lines;
  std::vector<double> blob;

  void meta(const std::string& key, const std::string& value) { lines.push_back("meta " + key + " " + value); }
  void tensor(const std::string& name, std::size_t rows, std::size_t cols, std::span<const double> v) {
    lines.push_back("tensor " + name + " " + std::to_string(rows) + " " + std::to_string(cols) + " f64 " +
                    std::to_string(blob.size() * sizeof(double)));
    blob.insert(blob.end(), v.begin(), v.end());
  }
  void params(const std::string& prefix, const nn::ModelParams& p) {
    for (const auto& nt : p.named_parameters()) {
      tensor(prefix + nt.name, nt.tensor.rows(), nt.tensor.cols(), nt.tensor.values());
    }
    for (const auto& ns : p.named_stats()) {
      const auto& s = *ns.stats;
      tensor(prefix + ns.name + ".running_mean", 1, s.running_mean.size(), s.running_mean);
      tensor(prefix + ns.name + ".running_var", 1, s.running_var.size(), s.running_var);
    }
  }
};

struct Entry {
  std::size_t rows = 0, cols = 0, offset = 0;
};

struct Reader {
  std::map<std::string, std::string> meta;
  std::map<std::string, Entry> tensors;
  std::vector<double> blob;

  const std::string& get(const std::string& key) const {
    auto it = meta.find(key);
    if (it == meta.end()) throw env::DataError("checkpoint: missing meta '" + key + "'");
    return it->second;
  }
  std::uint64_t integer(const std::string& key) const {
    try {
      return std::stoull(get(key));
    } catch (const std::logic_error&) {
      throw env::DataError("checkpoint: bad integer for '" + key + "'");
    }
  }
  double number(const std::string& key) const {
    try {
      return std::stod(get(key));
    } catch (const std::logic_error&) {
      throw env::DataError("checkpoint: bad number for '" + key + "'");
    }
  }
  std::span<const double> tensor(const std::string& name, std::size_t rows, std::size_t cols) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw env::DataError("checkpoint: missing tensor '" + name + "'");
    const Entry& e = it->second;
    if (e.rows != rows || e.cols != cols) {
      throw env::DataError("checkpoint: shape mismatch for '" + name + "'");
    }
    if (e.offset % sizeof(double) != 0 || e.offset / sizeof(double) + rows * cols > blob.size()) {
      throw env::DataError("checkpoint: tensor '" + name + "' lies outside the blob");
    }
    return std::span<const double>(blob.data() + e.offset / sizeof(double), rows * cols);
  }
  void params(const std::string& prefix, nn::ModelParams& p) const {
    for (auto& nt : p.named_parameters()) {
      auto v = tensor(prefix + nt.name, nt.tensor.rows(), nt.tensor.cols());
      std::copy(v.begin(), v.end(), nt.tensor.values().begin());
    }
    for (auto& ns : p.named_stats()) {
      auto& s = *ns.stats;
      auto m = tensor(prefix + ns.name + ".running_mean", 1, s.running_mean.size());
      auto v = tensor(prefix + ns.name + ".running_var", 1, s.running_var.size());
      s.running_mean.assign(m.begin(), m.end());
      s.running_var.assign(v.begin(), v.end());
    }
  }
};

}  // namespace

void write_checkpoint(std::ostream& out, const TrainerState& st) {
  Writer w;
  for (const auto& [k, v] : harness::config_entries(st.config)) w.meta("config." + k, v);
  w.meta("baseline_score", real(st.baseline_score));
  w.meta("global_step", std::to_string(st.global_step));
  w.meta("epochs_done", std::to_string(st.epochs_done));
  w.meta("epoch_objective", real(st.epoch_objective));
  w.meta("epoch_baseline", real(st.epoch_baseline));
  w.meta("epoch_kl", real(st.epoch_kl));
  w.meta("adam.t", std::to_string(st.adam.t));
  w.meta("adam.lr", real(st.adam.lr));
  w.meta("adam.beta1", real(st.adam.beta1));
  w.meta("adam.beta2", real(st.adam.beta2));
  w.meta("adam.eps", real(st.adam.eps));
  w.meta("adam.moments", st.adam.m.empty() ? "0" : "1");
  w.params("model/", st.model);
  w.params("baseline/", st.baseline);
  if (!st.adam.m.empty()) {
    const auto named = st.model.named_parameters();
    if (st.adam.m.size() != named.size() || st.adam.v.size() != named.size()) {
      throw ContractError("write_checkpoint: optimizer state does not match the parameters");
    }
    for (std::size_t i = 0; i < named.size(); ++i) {
      const auto& t = named[i].tensor;
      w.tensor("adam.m/" + named[i].name, t.rows(), t.cols(), st.adam.m[i]);
      w.tensor("adam.v/" + named[i].name, t.rows(), t.cols(), st.adam.v[i]);
    }
  }
  w.tensor("loss_history", 1, st.loss_history.size(), st.loss_history);

  out << kMagic << "\n";
  for (const auto& l : w.lines) out << l << "\n";
  out << "end\n";
  out.write(reinterpret_cast<const char*>(w.blob.data()),
            static_cast<std::streamsize>(w.blob.size() * sizeof(double)));
  if (!out) throw env::DataError("checkpoint: write failed");
}

TrainerState read_checkpoint(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kMagic) throw env::DataError("checkpoint: bad magic");
  Reader r;
  bool ended = false;
  std::size_t blob_bytes = 0;
  while (std::getline(in, line)) {
    if (line == "end") {
      ended = true;
      break;
    }
    std::istringstream ls(line);
    std::string tag, name;
    ls >> tag >> name;
    if (tag == "meta") {
      std::string value;
      std::getline(ls >> std::ws, value);
      r.meta[name] = value;
    } else if (tag == "tensor") {
      Entry e;
      std::string dtype;
      if (!(ls >> e.rows >> e.cols >> dtype >> e.offset) || dtype != "f64") {
        throw env::DataError("checkpoint: bad tensor line '" + line + "'");
      }
      blob_bytes = std::max(blob_bytes, e.offset + e.rows * e.cols * sizeof(double));
      r.tensors[name] = e;
    } else {
      throw env::DataError("checkpoint: unexpected line '" + line + "'");
    }
  }
  if (!ended) throw env::DataError("checkpoint: manifest not terminated");
  r.blob.resize(blob_bytes / sizeof(double));
  in.read(reinterpret_cast<char*>(r.blob.data()), static_cast<std::streamsize>(blob_bytes));
  if (static_cast<std::size_t>(in.gcount()) != blob_bytes) throw env::DataError("checkpoint: truncated blob");

  TrainerState st;
  for (const auto& [k, v] : r.meta) {
    if (k.rfind("config.", 0) == 0) {
      try {
        harness::set_config_value(st.config, k.substr(7), v);
      } catch (const ConfigError& e) {
        throw env::DataError(std::string("checkpoint: ") + e.what());
      }
    }
  }
  st.config.validate();
  st.model = nn::init_params(st.config.model_config(), 0);
  st.baseline = nn::init_params(st.config.model_config(), 0);
  r.params("model/", st.model);
  r.params("baseline/", st.baseline);
  st.baseline_score = r.number("baseline_score");
  st.global_step = r.integer("global_step");
  st.epochs_done = r.integer("epochs_done");
  st.epoch_objective = r.number("epoch_objective");
  st.epoch_baseline = r.number("epoch_baseline");
  st.epoch_kl = r.number("epoch_kl");
  st.adam.t = static_cast<std::int64_t>(r.integer("adam.t"));
  st.adam.lr = r.number("adam.lr");
  st.adam.beta1 = r.number("adam.beta1");
  st.adam.beta2 = r.number("adam.beta2");
  st.adam.eps = r.number("adam.eps");
  if (r.get("adam.moments") == "1") {
    for (const auto& nt : st.model.named_parameters()) {
      auto m = r.tensor("adam.m/" + nt.name, nt.tensor.rows(), nt.tensor.cols());
      auto v = r.tensor("adam.v/" + nt.name, nt.tensor.rows(), nt.tensor.cols());
      st.adam.m.emplace_back(m.begin(), m.end());
      st.adam.v.emplace_back(v.begin(), v.end());
    }
  }
  auto it = r.tensors.find("loss_history");
  if (it != r.tensors.end()) {
    auto h = r.tensor("loss_history", 1, it->second.cols);
    st.loss_history.assign(h.begin(), h.end());
  }
  return st;
}

void save_checkpoint(const std::string& path, const TrainerState& state) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw env::DataError("cannot open " + path + " for writing");
  write_checkpoint(out, state);
}

TrainerState load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw env::DataError("cannot open checkpoint " + path);
  return read_checkpoint(in);
}

}  // namespace mdam::train
