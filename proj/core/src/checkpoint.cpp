#include "umle/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <json.hpp>

#include "umle/errors.hpp"

namespace umle {

namespace {
constexpr char kMagic[8] = {'U', 'M', 'L', 'E', 'C', 'K', 'P', '1'};
using json = nlohmann::json;
}  // namespace

const Tensor* NamedArrays::find(const std::string& name) const {
  for (const auto& [n, t] : arrays)
    if (n == name) return &t;
  return nullptr;
}

long NamedArrays::meta_int_or(const std::string& key, long def) const {
  auto it = meta_int.find(key);
  return it == meta_int.end() ? def : it->second;
}

void save_container(const std::filesystem::path& path, const NamedArrays& box) {
  json meta;
  meta["format"] = "umle-container";
  meta["version"] = 1;
  meta["strings"] = box.meta_str;
  meta["ints"] = box.meta_int;
  json arr = json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : box.arrays) {
    arr.push_back({{"name", name},
                   {"dtype", "f64"},
                   {"shape", t.shape()},
                   {"offset", offset},
                   {"count", t.size()}});
    offset += t.size() * sizeof(double);
  }
  meta["arrays"] = std::move(arr);
  const std::string meta_bytes = meta.dump();

  std::ofstream f(path, std::ios::binary);
  if (!f) throw UmleError("cannot open for writing: " + path.string());
  f.write(kMagic, sizeof kMagic);
  const std::uint64_t len = meta_bytes.size();
  f.write(reinterpret_cast<const char*>(&len), sizeof len);
  f.write(meta_bytes.data(), static_cast<std::streamsize>(meta_bytes.size()));
  for (const auto& [name, t] : box.arrays)
    f.write(reinterpret_cast<const char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
  if (!f) throw UmleError("write failed: " + path.string());
}

NamedArrays load_container(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointCorrupt("cannot open: " + path.string());
  char magic[8];
  if (!f.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw CheckpointCorrupt("bad magic in " + path.string());
  std::uint64_t len = 0;
  if (!f.read(reinterpret_cast<char*>(&len), sizeof len) || len > (1ull << 32))
    throw CheckpointCorrupt("bad metadata length in " + path.string());
  std::string meta_bytes(len, '\0');
  if (!f.read(meta_bytes.data(), static_cast<std::streamsize>(len)))
    throw CheckpointCorrupt("truncated metadata in " + path.string());

  json meta;
  try {
    meta = json::parse(meta_bytes);
  } catch (const json::exception&) {
    throw CheckpointCorrupt("unparsable metadata in " + path.string());
  }

  NamedArrays box;
  try {
    if (meta.at("format") != "umle-container") throw CheckpointCorrupt("not a container file");
    box.meta_str = meta.at("strings").get<std::map<std::string, std::string>>();
    box.meta_int = meta.at("ints").get<std::map<std::string, long>>();
    for (const auto& a : meta.at("arrays")) {
      Tensor t(a.at("shape").get<std::vector<int>>());
      if (t.size() != a.at("count").get<std::uint64_t>())
        throw CheckpointCorrupt("array size mismatch in " + path.string());
      if (!f.read(reinterpret_cast<char*>(t.data()),
                  static_cast<std::streamsize>(t.size() * sizeof(double))))
        throw CheckpointCorrupt("truncated payload in " + path.string());
      box.arrays.emplace_back(a.at("name").get<std::string>(), std::move(t));
    }
  } catch (const json::exception&) {
    throw CheckpointCorrupt("malformed metadata in " + path.string());
  }
  return box;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  NamedArrays box;
  box.meta_int["iteration"] = ckpt.iteration;
  box.meta_str["config_digest"] = ckpt.config_digest;
  box.meta_str["config"] = ckpt.config_text;
  box.meta_str["rng_state"] = ckpt.rng_state_hex;
  for (const auto& [n, t] : ckpt.params) box.arrays.emplace_back("param/" + n, t);
  for (const auto& [n, t] : ckpt.adam_m) box.arrays.emplace_back("adam_m/" + n, t);
  for (const auto& [n, t] : ckpt.adam_v) box.arrays.emplace_back("adam_v/" + n, t);
  for (const auto& [n, t] : ckpt.adam_t) box.meta_int["adam_t/" + n] = t;
  save_container(path, box);
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const std::string& expected_digest,
                           bool allow_mismatch) {
  NamedArrays box = load_container(path);
  Checkpoint ckpt;
  ckpt.iteration = box.meta_int_or("iteration", -1);
  if (ckpt.iteration < 0) throw CheckpointCorrupt("checkpoint missing iteration: " + path.string());
  auto str = [&](const char* k) {
    auto it = box.meta_str.find(k);
    return it == box.meta_str.end() ? std::string() : it->second;
  };
  ckpt.config_digest = str("config_digest");
  ckpt.config_text = str("config");
  ckpt.rng_state_hex = str("rng_state");
  if (!expected_digest.empty() && ckpt.config_digest != expected_digest && !allow_mismatch)
    throw ConfigMismatch("checkpoint config digest " + ckpt.config_digest +
                         " does not match current config " + expected_digest);
  for (auto& [name, t] : box.arrays) {
    if (name.rfind("param/", 0) == 0)
      ckpt.params.emplace_back(name.substr(6), std::move(t));
    else if (name.rfind("adam_m/", 0) == 0)
      ckpt.adam_m.emplace_back(name.substr(7), std::move(t));
    else if (name.rfind("adam_v/", 0) == 0)
      ckpt.adam_v.emplace_back(name.substr(7), std::move(t));
  }
  for (const auto& [k, v] : box.meta_int)
    if (k.rfind("adam_t/", 0) == 0) ckpt.adam_t[k.substr(7)] = v;
  return ckpt;
}

}  // namespace umle
