#pragma once

#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "umle/autograd.hpp"
#include "umle/rng.hpp"
#include "umle/tensor.hpp"

namespace umle {

// One learnable array. `logical_rank` drives gradient centralization
// (applied to rank >= 2 arrays); `clamp01` marks normalization mixing
// coefficients that are clamped to [0,1] after every optimizer step.
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
  int logical_rank = 1;
  bool clamp01 = false;
  bool trainable = false;  // toggled per optimization phase
};

// Ordered, name-addressed parameter registry. Registration order is the
// deterministic order used for initialization, optimizer traversal, and
// checkpoint layout.
class ParamStore {
 public:
  Param& add(const std::string& name, Tensor value, int logical_rank, bool clamp01 = false);

  Param* find(const std::string& name);
  const Param* find(const std::string& name) const;
  Param& at(const std::string& name);

  std::vector<Param*> all();
  std::vector<const Param*> all() const;
  // Parameters whose name starts with `prefix`.
  std::vector<Param*> with_prefix(const std::string& prefix);

  std::size_t count() const { return params_.size(); }
  std::size_t total_scalars() const;

 private:
  std::vector<std::unique_ptr<Param>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) initialization.
void init_fan_in_uniform(Tensor& t, int fan_in, RngSequence& rng);

// Bind a parameter onto the current tape. Trainable parameters accumulate
// into their own grad buffer; frozen ones become constants.
Var param_leaf(Tape& tape, Param& p);

}  // namespace umle
