#include "vrl/config.hpp"

#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace vrl {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

const std::map<std::string, std::string>& RunConfig::defaults() {
  static const std::map<std::string, std::string> kDefaults = {
      // simulator
      {"sim.dt", "0.1"},
      {"sim.max_episode_steps", "2000"},
      // translation training
      {"gan.lr", "0.0002"},
      {"gan.beta1", "0.5"},
      {"gan.beta2", "0.999"},
      {"gan.eps", "1e-8"},
      {"gan.batch_size", "16"},
      {"gan.epochs", "200"},
      {"gan.lambda", "100"},
      {"gan.pairs", "1673"},
      // asynchronous trainer; rms_decay/rms_eps follow the stated optimizer
      // constants (lr 0.01, decay 0.9, eps 0.1)
      {"a3c.workers", "12"},
      {"a3c.lr", "0.01"},
      {"a3c.rms_decay", "0.9"},
      {"a3c.rms_eps", "0.1"},
      {"a3c.discount", "0.99"},
      {"a3c.t_max", "5"},
      {"a3c.entropy_coeff", "0.01"},
      {"a3c.value_coeff", "0.5"},
      {"a3c.grad_clip_norm", "40"},
      {"a3c.budget_steps", "100000"},
      {"a3c.randomized_styles", "10"},
      {"a3c.checkpoint_every", "0"},
      // evaluation
      {"eval.episodes", "50"},
      {"eval.log_frames", "600"},
      {"eval.sv_epochs", "8"},
      {"eval.transfer_budget", "60000"},
      {"eval.transfer_seeds", "3"},
      {"eval.transfer_workers", "4"},
      {"eval.gan_epochs", "12"},
      {"eval.pairs", "512"},
  };
  return kDefaults;
}

RunConfig::RunConfig() : values_(defaults()) {}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (!defaults().count(key)) throw std::invalid_argument("unknown config key: " + key);
  values_[key] = value;
}

void RunConfig::load_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config file: " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      set(key, value);
    } catch (const std::invalid_argument& e) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

std::string RunConfig::get_str(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw std::invalid_argument("unknown config key: " + key);
  return it->second;
}

double RunConfig::get_double(const std::string& key) const {
  const std::string v = get_str(key);
  try {
    size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (...) {
    throw std::runtime_error("config key " + key + " has non-numeric value '" + v + "'");
  }
}

int64_t RunConfig::get_int(const std::string& key) const {
  const std::string v = get_str(key);
  try {
    size_t pos = 0;
    const int64_t i = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (...) {
    throw std::runtime_error("config key " + key + " has non-integer value '" + v + "'");
  }
}

void RunConfig::write_resolved(const std::string& path) const {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write resolved config: " + path);
  for (const auto& [k, v] : values_) f << k << " = " << v << '\n';
}

}  // namespace vrl
