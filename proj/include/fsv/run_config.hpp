#pragma once

// Flat key = value run configuration. Every key has a documented default and
// can be overridden on the command line as --key-name.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "fsv/classifier.hpp"
#include "fsv/evaluator.hpp"
#include "fsv/pipeline.hpp"
#include "fsv/synthbench.hpp"
#include "fsv/vfgan.hpp"

namespace fsv::cli {

enum class KeyType { kInt, kUInt, kDouble, kBool, kString };

struct KeySpec {
  std::string name;
  KeyType type;
  std::string default_value;
  std::string help;
};

const std::vector<KeySpec>& key_registry();
const KeySpec* find_key(const std::string& name);

class RunConfig {
 public:
  RunConfig();  // all defaults

  // Parses "key = value" lines; '#' starts a comment. Unknown keys and
  // malformed values raise ConfigError naming the key (and line).
  void merge_text(const std::string& text, const std::string& source);
  void merge_file(const std::filesystem::path& path);
  void set(const std::string& key, const std::string& value);
  bool was_set(const std::string& key) const { return explicit_.count(key) != 0; }

  const std::string& raw(const std::string& key) const;
  long long get_int(const std::string& key) const;
  std::uint64_t get_uint(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  const std::string& get_string(const std::string& key) const { return raw(key); }

  // Sorted "key=value" lines of every key that can change a result (all but
  // out and threads); the config hash is taken over this text.
  std::string canonical_text() const;
  std::string hash() const;
  const std::map<std::string, std::string>& values() const { return values_; }

  synth::SynthConfig synth_config() const;
  clf::TrainConfig base_train_config() const;
  pipeline::BaseStopping base_stopping() const;
  clf::TrainConfig novel_train_config() const;
  gan::GanTrainConfig gan_config() const;
  eval::EpisodeConfig episode_config() const;

 private:
  std::map<std::string, std::string> values_;
  std::map<std::string, bool> explicit_;
};

}  // namespace fsv::cli
