#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "umle/tensor.hpp"

namespace umle {

// Self-describing single-file container: named double arrays with shapes plus
// a JSON metadata block. Array payloads round-trip bit-exactly.
struct NamedArrays {
  std::vector<std::pair<std::string, Tensor>> arrays;
  std::map<std::string, std::string> meta_str;
  std::map<std::string, long> meta_int;

  const Tensor* find(const std::string& name) const;
  long meta_int_or(const std::string& key, long def) const;
};

void save_container(const std::filesystem::path& path, const NamedArrays& box);
// Throws CheckpointCorrupt on bad magic, malformed metadata, or truncation.
NamedArrays load_container(const std::filesystem::path& path);

// Training checkpoint: parameters, optimizer state, and enough metadata to
// rebuild the model (the resolved config text is embedded).
struct Checkpoint {
  long iteration = 0;
  std::string config_digest;
  std::string config_text;
  std::string rng_state_hex;  // seed and next iteration, hex encoded
  std::vector<std::pair<std::string, Tensor>> params;
  std::vector<std::pair<std::string, Tensor>> adam_m, adam_v;
  std::map<std::string, long> adam_t;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);

// expected_digest empty -> no config check. On digest mismatch throws
// ConfigMismatch unless allow_mismatch.
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const std::string& expected_digest = {}, bool allow_mismatch = false);

}  // namespace umle
