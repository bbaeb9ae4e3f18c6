#pragma once

#include <string>

#include "umle/autograd.hpp"
#include "umle/params.hpp"

namespace umle {

// Channel attention followed by pixel (spatial) attention. Two pixel-stage
// wirings are supported:
//   Textual (default): channel-wise avg and max maps of c_r are concatenated,
//     projected 2->1 by a 1x1 conv and passed through a sigmoid gate.
//   Literal: p_r = cat(sigmoid(c_r), fc(c_r)) with a second per-pixel linear
//     map producing the (unbounded) multiplier.
enum class PixelAttentionForm { Textual, Literal };

struct CpaParams {
  int channels = 0;
  PixelAttentionForm form = PixelAttentionForm::Textual;
  // channel stage: 1-D conv across the pooled channel vector, no
  // dimensionality reduction (C in -> C out).
  Param* ch_w = nullptr;  // (1,1,k)
  Param* ch_b = nullptr;  // (1)
  // pixel stage, textual form
  Param* px_w = nullptr;  // (1,2,1,1)
  Param* px_b = nullptr;  // (1)
  // pixel stage, literal form
  Param* fc1_w = nullptr;  // (C,C,1,1)
  Param* fc1_b = nullptr;  // (C)
  Param* fc2_w = nullptr;  // (C,2C,1,1)
  Param* fc2_b = nullptr;  // (C)
};

// Registers the module's parameters under `prefix/` and initializes them
// (weights fan-in uniform, biases zero).
CpaParams make_cpa(ParamStore& store, const std::string& prefix, int channels, RngSequence& init,
                   PixelAttentionForm form = PixelAttentionForm::Textual, int channel_kernel = 3);

// c_r = sigmoid(conv(avg_pool(x))) (x) x  -- per-channel gates in (0,1)
Var channel_attention(Tape& tape, Var x, const CpaParams& p);
// cp_r = gate(c_r) (x) c_r  -- per-pixel gates (textual form in (0,1))
Var pixel_attention(Tape& tape, Var c_r, const CpaParams& p);
// x + pixel_attention(channel_attention(x))
Var cpam(Tape& tape, Var x, const CpaParams& p);

}  // namespace umle
