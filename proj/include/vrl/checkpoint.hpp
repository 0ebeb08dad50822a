#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "vrl/nets.hpp"
#include "vrl/optim.hpp"
#include "vrl/rng.hpp"
#include "vrl/tensor.hpp"

namespace vrl {

// Checkpoint archive: a line-oriented text manifest (name, dtype, shape per
// line) followed by the VRT1 tensors concatenated in manifest order.
//
//   VRLCKPT 1
//   <entry count>
//   <name> <f32|f64> <d0> <d1> ...
//   ...
//   <binary blobs>

class CheckpointWriter {
 public:
  void add(const std::string& name, const Tensor& t);
  void add(const std::string& name, const TensorD& t);
  void add_list(const ParamList<float>& list);
  void save(const std::string& path) const;

 private:
  struct Entry {
    std::string name;
    uint8_t dtype;
    Tensor f32;
    TensorD f64;
  };
  std::vector<Entry> entries_;
};

class Checkpoint {
 public:
  // Throws std::runtime_error naming the file on any magic/manifest/shape
  // corruption.
  static Checkpoint load(const std::string& path);

  bool has(const std::string& name) const;
  const Tensor& f32(const std::string& name) const;
  const TensorD& f64(const std::string& name) const;
  std::vector<std::string> names() const;
  const std::string& path() const { return path_; }

  // Strict restore: every listed tensor must be present with an identical
  // shape; any mismatch is rejected.
  void restore(const ParamList<float>& list) const;
  // Additionally reject archive entries under `prefix` that the list does not
  // mention (guards against loading a checkpoint from a different net).
  void verify_no_extras(const std::string& prefix, const ParamList<float>& list) const;

 private:
  struct Stored {
    uint8_t dtype;
    Tensor f32;
    TensorD f64;
  };
  std::string path_;
  std::map<std::string, Stored> entries_;
};

// RNG state embedded as a bit-preserving f64 tensor.
TensorD rng_state_tensor(const Rng& rng);
Rng rng_from_state_tensor(const TensorD& t);

// Optimizer state stored against the param names it belongs to.
void save_optimizer(CheckpointWriter& w, const std::string& prefix, const Adam& opt,
                    const ParamList<float>& params);
void load_optimizer(const Checkpoint& c, const std::string& prefix, Adam& opt,
                    const ParamList<float>& params);
void save_optimizer(CheckpointWriter& w, const std::string& prefix, const RMSProp& opt,
                    const ParamList<float>& params);
void load_optimizer(const Checkpoint& c, const std::string& prefix, RMSProp& opt,
                    const ParamList<float>& params);

}  // namespace vrl
