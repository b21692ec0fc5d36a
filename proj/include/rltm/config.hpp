#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "rltm/error.hpp"

namespace rltm {

// Flat string-keyed run configuration. Precedence: command line > config file
// > environment default (RLTM_SEED) > built-in defaults. Unknown keys are
// rejected and every value is validated up front.
class RunConfig {
 public:
  RunConfig();

  // key=value lines; '#' starts a comment. Later lines win.
  void load_file(const std::string& path);
  void set(const std::string& key, const std::string& value);

  const std::string& str(const std::string& key) const;
  int64_t integer(const std::string& key) const;
  size_t size(const std::string& key) const;
  uint64_t u64(const std::string& key) const;
  double number(const std::string& key) const;
  bool flag(const std::string& key) const;
  std::vector<size_t> size_list(const std::string& key) const;
  std::vector<double> number_list(const std::string& key) const;
  std::vector<int> int_list(const std::string& key) const;

  uint64_t seed() const { return u64("seed"); }

  // Range/value checks for every known key.
  void validate() const;

  // FNV-1a over the sorted effective key=value pairs.
  uint64_t hash() const;

  // Sorted key=value echo with the config hash, written into the out dir.
  void write_echo(const std::string& path) const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace rltm
