#include "softshell/surrogate.hpp"

#include "softshell/errors.hpp"

#include <algorithm>

namespace softshell::surrogate {

void UNetConfig::validate() const {
  if (in_channels < 1 || out_channels < 1) throw ParameterError("UNet channel counts must be positive");
  if (base_channels < 1) throw ParameterError("UNet base_channels must be positive");
  if (depth < 2 || depth > 9) throw ParameterError("UNet depth must be in [2, 9], got " + std::to_string(depth));
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ParameterError("dropout_rate must be in [0, 1)");
  if (!(leaky_slope > 0.0 && leaky_slope < 1.0)) throw ParameterError("leaky_slope must be in (0, 1)");
}

void UNetConfig::check_input(int height, int width) const {
  const int m = 1 << depth;
  if (height <= 0 || width <= 0 || height % m != 0 || width % m != 0)
    throw ParameterError("input " + std::to_string(height) + "x" + std::to_string(width) +
                         " is not divisible by 2^depth = " + std::to_string(m));
}

int UNetConfig::channels_at(int level) const { return base_channels << std::min(level - 1, 3); }

int UNetConfig::dropout_blocks() const { return std::min(3, depth - 1); }

template <typename T>
UNet<T>::UNet(const UNetConfig& config) : config_(config) {
  config_.validate();
  std::size_t offset = 0;
  auto add = [&](std::string name, bool transposed, int cin, int cout) {
    LayerInfo l;
    l.name = std::move(name);
    l.transposed = transposed;
    l.cin = cin;
    l.cout = cout;
    l.weight_offset = offset;
    offset += l.weight_count();
    l.bias_offset = offset;
    offset += static_cast<std::size_t>(cout);
    layers_.push_back(l);
  };
  const int d = config_.depth;
  for (int i = 1; i <= d; ++i)
    add("enc" + std::to_string(i), false, i == 1 ? config_.in_channels : config_.channels_at(i - 1),
        config_.channels_at(i));
  for (int j = 0; j < d - 1; ++j) {
    const int level = d - j;
    const int cin = j == 0 ? config_.channels_at(d) : 2 * config_.channels_at(level);
    add("dec" + std::to_string(j + 1), true, cin, config_.channels_at(level - 1));
  }
  add("out", true, 2 * config_.channels_at(1), config_.out_channels);
  params_.assign(offset, T(0));
  grads_.assign(offset, T(0));
}

template <typename T>
void UNet<T>::init(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 0.02);
  for (const auto& l : layers_) {
    for (std::size_t i = 0; i < l.weight_count(); ++i) params_[l.weight_offset + i] = static_cast<T>(normal(rng));
    std::fill_n(params_.begin() + static_cast<std::ptrdiff_t>(l.bias_offset), l.cout, T(0));
  }
}

template <typename T>
void UNet<T>::zero_grad() {
  std::fill(grads_.begin(), grads_.end(), T(0));
}

template <typename T>
Tensor<T> UNet<T>::forward(const Tensor<T>& input, bool train, std::mt19937_64* rng) {
  if (layers_.empty()) throw ParameterError("UNet is not configured");
  if (input.c != config_.in_channels)
    throw ShapeError("UNet expects " + std::to_string(config_.in_channels) + " input channels, got " +
                     std::to_string(input.c));
  config_.check_input(input.h, input.w);
  const bool use_dropout = train && config_.dropout_rate > 0.0;
  if (use_dropout && !rng) throw ParameterError("training-mode forward with dropout needs an rng");
  const int d = config_.depth;
  const T slope = static_cast<T>(config_.leaky_slope);
  auto& c = cache_;
  c.enc_in.assign(1, input);
  c.enc_out.resize(d);
  for (int i = 0; i < d; ++i) {
    const auto& l = layers_[i];
    const Tensor<T>& x = i == 0 ? c.enc_in[0] : c.enc_out[i - 1];
    nn::conv2d_forward(x, params_.data() + l.weight_offset, params_.data() + l.bias_offset, l.cout, c.enc_out[i]);
    nn::leaky_relu_inplace(c.enc_out[i].data, slope);
  }
  c.dec_in.resize(d);
  c.dec_act.resize(d - 1);
  c.masks.resize(d - 1);
  c.dec_in[0] = c.enc_out[d - 1];
  for (int j = 0; j < d - 1; ++j) {
    const auto& l = layers_[d + j];
    nn::tconv2d_forward(c.dec_in[j], params_.data() + l.weight_offset, params_.data() + l.bias_offset, l.cout,
                        c.dec_act[j]);
    nn::leaky_relu_inplace(c.dec_act[j].data, slope);
    if (j < config_.dropout_blocks())
      nn::dropout_inplace(c.dec_act[j].data, config_.dropout_rate, *rng, use_dropout, c.masks[j]);
    else
      c.masks[j].clear();
    c.dec_in[j + 1] = nn::concat_channels(c.dec_act[j], c.enc_out[d - 2 - j]);
  }
  const auto& lo = layers_.back();
  nn::tconv2d_forward(c.dec_in[d - 1], params_.data() + lo.weight_offset, params_.data() + lo.bias_offset, lo.cout,
                      c.output);
  nn::tanh_inplace(c.output.data);
  return c.output;
}

template <typename T>
void UNet<T>::backward(const Tensor<T>& grad_output) {
  auto& c = cache_;
  if (c.enc_in.empty()) throw ParameterError("backward called before forward");
  if (!grad_output.same_shape(c.output)) throw ShapeError("output gradient shape mismatch");
  const int d = config_.depth;
  const T slope = static_cast<T>(config_.leaky_slope);
  T* p = params_.data();
  T* g = grads_.data();

  Tensor<T> gout = grad_output;
  nn::tanh_backward(c.output.data, gout.data);
  Tensor<T> dh, da, de, tmp;
  const auto& lo = layers_.back();
  nn::tconv2d_backward(c.dec_in[d - 1], p + lo.weight_offset, lo.cout, gout, &dh, g + lo.weight_offset,
                       g + lo.bias_offset);

  std::vector<Tensor<T>> enc_grad(d);
  auto add_to = [](Tensor<T>& acc, const Tensor<T>& v) {
    if (acc.size() == 0) {
      acc = v;
      return;
    }
    for (std::size_t i = 0; i < v.size(); ++i) acc.data[i] += v.data[i];
  };
  for (int j = d - 2; j >= 0; --j) {
    const auto& l = layers_[d + j];
    nn::split_channels(dh, l.cout, da, de);
    add_to(enc_grad[d - 2 - j], de);
    if (!c.masks[j].empty())
      for (std::size_t i = 0; i < da.size(); ++i) da.data[i] *= c.masks[j][i];
    nn::leaky_relu_backward(c.dec_act[j].data, slope, da.data);
    nn::tconv2d_backward(c.dec_in[j], p + l.weight_offset, l.cout, da, &tmp, g + l.weight_offset, g + l.bias_offset);
    std::swap(dh, tmp);
  }
  add_to(enc_grad[d - 1], dh);
  for (int i = d - 1; i >= 0; --i) {
    const auto& l = layers_[i];
    Tensor<T>& gi = enc_grad[i];
    nn::leaky_relu_backward(c.enc_out[i].data, slope, gi.data);
    const Tensor<T>& x = i == 0 ? c.enc_in[0] : c.enc_out[i - 1];
    nn::conv2d_backward(x, p + l.weight_offset, l.cout, gi, i > 0 ? &tmp : nullptr, g + l.weight_offset,
                        g + l.bias_offset);
    if (i > 0) add_to(enc_grad[i - 1], tmp);
  }
}

template class UNet<float>;
template class UNet<double>;

}  // namespace softshell::surrogate
