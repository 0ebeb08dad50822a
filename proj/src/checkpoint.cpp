#include "vrl/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "vrl/tensor_io.hpp"

namespace vrl {

void CheckpointWriter::add(const std::string& name, const Tensor& t) {
  Entry e;
  e.name = name;
  e.dtype = 0;
  e.f32 = t;
  entries_.push_back(std::move(e));
}

void CheckpointWriter::add(const std::string& name, const TensorD& t) {
  Entry e;
  e.name = name;
  e.dtype = 1;
  e.f64 = t;
  entries_.push_back(std::move(e));
}

void CheckpointWriter::add_list(const ParamList<float>& list) {
  for (const auto& [name, p] : list) add(name, *p);
}

void CheckpointWriter::save(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint for write: " + path);
  f << "VRLCKPT 1\n" << entries_.size() << "\n";
  for (const auto& e : entries_) {
    f << e.name << ' ' << (e.dtype == 0 ? "f32" : "f64");
    const auto& shape = e.dtype == 0 ? e.f32.shape : e.f64.shape;
    for (int64_t d : shape) f << ' ' << d;
    f << '\n';
  }
  for (const auto& e : entries_) {
    if (e.dtype == 0)
      write_vrt1(f, e.f32);
    else
      write_vrt1(f, e.f64);
  }
  if (!f) throw std::runtime_error("checkpoint write failed: " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
  Checkpoint c;
  c.path_ = path;
  std::string line;
  if (!std::getline(f, line) || line != "VRLCKPT 1")
    throw std::runtime_error("corrupt checkpoint (bad magic): " + path);
  if (!std::getline(f, line)) throw std::runtime_error("corrupt checkpoint (no entry count): " + path);
  size_t n = 0;
  try {
    n = std::stoul(line);
  } catch (...) {
    throw std::runtime_error("corrupt checkpoint (bad entry count): " + path);
  }
  struct Head {
    std::string name;
    uint8_t dtype;
    std::vector<int64_t> shape;
  };
  std::vector<Head> heads;
  heads.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    if (!std::getline(f, line))
      throw std::runtime_error("corrupt checkpoint (truncated manifest): " + path);
    std::istringstream ss(line);
    Head h;
    std::string dt;
    ss >> h.name >> dt;
    if (h.name.empty() || (dt != "f32" && dt != "f64"))
      throw std::runtime_error("corrupt checkpoint (bad manifest line '" + line + "'): " + path);
    h.dtype = dt == "f32" ? 0 : 1;
    int64_t d;
    while (ss >> d) h.shape.push_back(d);
    heads.push_back(std::move(h));
  }
  for (const auto& h : heads) {
    Stored s;
    s.dtype = h.dtype;
    try {
      if (h.dtype == 0)
        s.f32 = read_vrt1<float>(f);
      else
        s.f64 = read_vrt1<double>(f);
    } catch (const std::exception& e) {
      throw std::runtime_error("corrupt checkpoint (" + std::string(e.what()) + " at entry '" +
                               h.name + "'): " + path);
    }
    const auto& shape = h.dtype == 0 ? s.f32.shape : s.f64.shape;
    if (shape != h.shape)
      throw std::runtime_error("corrupt checkpoint (manifest/tensor shape mismatch at '" + h.name +
                               "'): " + path);
    c.entries_.emplace(h.name, std::move(s));
  }
  return c;
}

bool Checkpoint::has(const std::string& name) const { return entries_.count(name) > 0; }

const Tensor& Checkpoint::f32(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end() || it->second.dtype != 0)
    throw std::runtime_error("checkpoint missing f32 entry '" + name + "': " + path_);
  return it->second.f32;
}

const TensorD& Checkpoint::f64(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end() || it->second.dtype != 1)
    throw std::runtime_error("checkpoint missing f64 entry '" + name + "': " + path_);
  return it->second.f64;
}

std::vector<std::string> Checkpoint::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [k, v] : entries_) out.push_back(k);
  return out;
}

void Checkpoint::restore(const ParamList<float>& list) const {
  for (const auto& [name, p] : list) {
    const Tensor& t = f32(name);
    if (t.shape != p->shape)
      throw std::runtime_error("checkpoint shape mismatch at '" + name + "' (" + t.shape_str() +
                               " vs " + p->shape_str() + "): " + path_);
    p->data = t.data;
  }
}

void Checkpoint::verify_no_extras(const std::string& prefix, const ParamList<float>& list) const {
  std::map<std::string, bool> expected;
  for (const auto& [name, p] : list) expected[name] = true;
  for (const auto& [name, s] : entries_) {
    if (name.rfind(prefix, 0) == 0 && !expected.count(name))
      throw std::runtime_error("checkpoint has unexpected entry '" + name + "': " + path_);
  }
}

TensorD rng_state_tensor(const Rng& rng) {
  const auto words = rng.serialize();
  TensorD t({static_cast<int64_t>(words.size())});
  for (size_t i = 0; i < words.size(); ++i) {
    double d;
    std::memcpy(&d, &words[i], sizeof(double));
    t.data[i] = d;
  }
  return t;
}

Rng rng_from_state_tensor(const TensorD& t) {
  if (t.numel() != 5) throw std::runtime_error("rng state tensor must have 5 words");
  std::array<uint64_t, 5> words{};
  for (size_t i = 0; i < 5; ++i) std::memcpy(&words[i], &t.data[i], sizeof(uint64_t));
  Rng rng(0);
  rng.restore(words);
  return rng;
}

namespace {

template <typename Opt>
void save_moments(CheckpointWriter& w, const std::string& prefix, const std::vector<Tensor>& bufs,
                  const char* tag, const ParamList<float>& params) {
  for (size_t i = 0; i < bufs.size(); ++i)
    w.add(prefix + "." + tag + "." + params[i].first, bufs[i]);
}

template <typename Opt>
void load_moments(const Checkpoint& c, const std::string& prefix, std::vector<Tensor>& bufs,
                  const char* tag, const ParamList<float>& params) {
  bufs.clear();
  for (const auto& [name, p] : params) {
    const Tensor& t = c.f32(prefix + "." + tag + "." + name);
    if (t.shape != p->shape)
      throw std::runtime_error("optimizer state shape mismatch at '" + name + "': " + c.path());
    bufs.push_back(t);
  }
}

}  // namespace

void save_optimizer(CheckpointWriter& w, const std::string& prefix, const Adam& opt,
                    const ParamList<float>& params) {
  w.add(prefix + ".step", TensorD::scalar(static_cast<double>(opt.step_count)));
  save_moments<Adam>(w, prefix, opt.m, "m", params);
  save_moments<Adam>(w, prefix, opt.v, "v", params);
}

void load_optimizer(const Checkpoint& c, const std::string& prefix, Adam& opt,
                    const ParamList<float>& params) {
  opt.step_count = static_cast<int64_t>(c.f64(prefix + ".step").data[0]);
  load_moments<Adam>(c, prefix, opt.m, "m", params);
  load_moments<Adam>(c, prefix, opt.v, "v", params);
}

void save_optimizer(CheckpointWriter& w, const std::string& prefix, const RMSProp& opt,
                    const ParamList<float>& params) {
  w.add(prefix + ".step", TensorD::scalar(static_cast<double>(opt.step_count)));
  save_moments<RMSProp>(w, prefix, opt.s, "s", params);
}

void load_optimizer(const Checkpoint& c, const std::string& prefix, RMSProp& opt,
                    const ParamList<float>& params) {
  opt.step_count = static_cast<int64_t>(c.f64(prefix + ".step").data[0]);
  load_moments<RMSProp>(c, prefix, opt.s, "s", params);
}

}  // namespace vrl
