#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace vrl {

// Line-oriented `key = value` configuration with `#` comments. Every key has
// a documented default matching the module defaults; unknown keys are
// rejected. Precedence: CLI flags > config file > defaults.
class RunConfig {
 public:
  RunConfig();

  static const std::map<std::string, std::string>& defaults();

  void load_file(const std::string& path);
  void set(const std::string& key, const std::string& value);  // rejects unknown keys

  std::string get_str(const std::string& key) const;
  double get_double(const std::string& key) const;
  int64_t get_int(const std::string& key) const;

  // Echo of the effective merged configuration, sorted by key.
  void write_resolved(const std::string& path) const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace vrl
