#include "umle/attention.hpp"

#include "umle/errors.hpp"

namespace umle {

CpaParams make_cpa(ParamStore& store, const std::string& prefix, int channels, RngSequence& init,
                   PixelAttentionForm form, int channel_kernel) {
  CpaParams p;
  p.channels = channels;
  p.form = form;

  Tensor chw({1, 1, channel_kernel});
  init_fan_in_uniform(chw, channel_kernel, init);
  p.ch_w = &store.add(prefix + "/ch_conv/w", std::move(chw), 3);
  p.ch_b = &store.add(prefix + "/ch_conv/b", Tensor::zeros({1}), 1);

  if (form == PixelAttentionForm::Textual) {
    Tensor pxw({1, 2, 1, 1});
    init_fan_in_uniform(pxw, 2, init);
    p.px_w = &store.add(prefix + "/px_proj/w", std::move(pxw), 4);
    p.px_b = &store.add(prefix + "/px_proj/b", Tensor::zeros({1}), 1);
  } else {
    Tensor f1({channels, channels, 1, 1});
    init_fan_in_uniform(f1, channels, init);
    p.fc1_w = &store.add(prefix + "/px_fc1/w", std::move(f1), 4);
    p.fc1_b = &store.add(prefix + "/px_fc1/b", Tensor::zeros({channels}), 1);
    Tensor f2({channels, 2 * channels, 1, 1});
    init_fan_in_uniform(f2, 2 * channels, init);
    p.fc2_w = &store.add(prefix + "/px_fc2/w", std::move(f2), 4);
    p.fc2_b = &store.add(prefix + "/px_fc2/b", Tensor::zeros({channels}), 1);
  }
  return p;
}

Var channel_attention(Tape& tape, Var x, const CpaParams& p) {
  if (x->value.dim(1) != p.channels)
    throw ShapeError("channel_attention: expected " + std::to_string(p.channels) + " channels");
  Var pooled = global_avg_pool(x);
  Var gates = sigmoid(conv1d_channels(pooled, param_leaf(tape, *p.ch_w), param_leaf(tape, *p.ch_b)));
  return mul_channel(x, gates);
}

Var pixel_attention(Tape& tape, Var c_r, const CpaParams& p) {
  if (p.form == PixelAttentionForm::Textual) {
    Var avg_map = mean_channels(c_r);
    Var max_map = max_channels(c_r);
    Var stacked = concat_channels(avg_map, max_map);
    Var gate = sigmoid(
        conv2d(stacked, param_leaf(tape, *p.px_w), param_leaf(tape, *p.px_b), /*stride=*/1, /*pad=*/0));
    return mul_map(c_r, gate);
  }
  Var s = sigmoid(c_r);
  Var f = conv2d(c_r, param_leaf(tape, *p.fc1_w), param_leaf(tape, *p.fc1_b), 1, 0);
  Var stacked = concat_channels(s, f);
  Var gate = conv2d(stacked, param_leaf(tape, *p.fc2_w), param_leaf(tape, *p.fc2_b), 1, 0);
  return mul(gate, c_r);
}

Var cpam(Tape& tape, Var x, const CpaParams& p) {
  return add(x, pixel_attention(tape, channel_attention(tape, x, p), p));
}

}  // namespace umle
