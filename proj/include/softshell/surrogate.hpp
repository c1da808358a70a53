#pragma once

#include "softshell/nn.hpp"
#include "softshell/uvmap.hpp"

#include <array>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

namespace softshell::surrogate {

using nn::Tensor;

struct UNetConfig {
  int in_channels = 2;
  int out_channels = 3;
  int base_channels = 16;
  int depth = 5;
  double dropout_rate = 0.5;
  double leaky_slope = 0.2;

  void validate() const;
  // Throws ParameterError unless height and width are multiples of 2^depth.
  void check_input(int height, int width) const;
  // Encoder output channels at level 1..depth: base * 2^min(level-1, 3).
  int channels_at(int level) const;
  int dropout_blocks() const;

  bool operator==(const UNetConfig&) const = default;
};

struct LayerInfo {
  std::string name;
  bool transposed = false;
  int cin = 0;
  int cout = 0;
  std::size_t weight_offset = 0;
  std::size_t bias_offset = 0;

  std::size_t weight_count() const { return static_cast<std::size_t>(cin) * cout * nn::kKernel * nn::kKernel; }
};

// Encoder: `depth` stride-2 conv + LeakyReLU blocks. Decoder: depth-1
// transposed conv + LeakyReLU blocks (dropout on the first dropout_blocks()),
// each followed by concatenation with the matching encoder output, then a
// final transposed conv + tanh. Parameters live in one flat buffer in layer
// order (weights then bias per layer).
template <typename T>
class UNet {
 public:
  UNet() = default;
  explicit UNet(const UNetConfig& config);

  const UNetConfig& config() const { return config_; }
  const std::vector<LayerInfo>& layers() const { return layers_; }
  std::vector<T>& params() { return params_; }
  const std::vector<T>& params() const { return params_; }
  std::vector<T>& grads() { return grads_; }
  const std::vector<T>& grads() const { return grads_; }

  // Weights ~ N(0, 0.02), biases 0.
  void init(std::uint64_t seed);
  void zero_grad();

  // rng is only used (and required) when train is true and dropout_rate > 0.
  Tensor<T> forward(const Tensor<T>& input, bool train, std::mt19937_64* rng = nullptr);
  // Accumulates parameter gradients for the most recent forward call.
  void backward(const Tensor<T>& grad_output);

  template <typename U>
  UNet<U> cast() const {
    UNet<U> out(config_);
    for (std::size_t i = 0; i < params_.size(); ++i) out.params()[i] = static_cast<U>(params_[i]);
    return out;
  }

 private:
  struct Cache {
    std::vector<Tensor<T>> enc_in;   // input to encoder conv i
    std::vector<Tensor<T>> enc_out;  // activations of encoder level i
    std::vector<Tensor<T>> dec_in;   // input to decoder tconv j (and final)
    std::vector<Tensor<T>> dec_act;  // decoder activations after dropout
    std::vector<std::vector<T>> masks;
    Tensor<T> output;
  };

  UNetConfig config_;
  std::vector<LayerInfo> layers_;
  std::vector<T> params_;
  std::vector<T> grads_;
  Cache cache_;
};

struct AdamState {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  long step = 0;
  std::vector<double> m64, v64;
  std::vector<float> m32, v32;
};

void adam_step(std::vector<float>& params, const std::vector<float>& grads, AdamState& state);
void adam_step(std::vector<double>& params, const std::vector<double>& grads, AdamState& state);

// One training/evaluation example: normalized single-channel force and
// thickness images and a normalized (dx, dy, dz) target.
struct SampleView {
  const uvmap::UVImage* force = nullptr;
  const uvmap::UVImage* thickness = nullptr;
  const uvmap::UVImage* deformation = nullptr;
};

Tensor<float> make_input_batch(const std::vector<SampleView>& samples, std::size_t begin, std::size_t end);
Tensor<float> make_target_batch(const std::vector<SampleView>& samples, std::size_t begin, std::size_t end);
Tensor<float> image_to_tensor(const uvmap::UVImage& force, const uvmap::UVImage& thickness);
uvmap::UVImage tensor_to_deformation_image(const Tensor<float>& t, int item = 0);

struct TrainConfig {
  int epochs = 40;
  int batch_size = 8;
  double lr = 1e-4;
  double tv_weight = 0.0;
  long max_steps = 0;  // 0: no limit
  std::uint64_t seed = 1;
  bool verbose = false;
};

struct LossRecord {
  int epoch = 0;
  double train_l2 = 0.0;
  double val_l2 = 0.0;
};

struct TrainResult {
  UNet<float> model;  // best validation parameters
  std::vector<LossRecord> history;
  int best_epoch = 0;
  long steps = 0;
};

// Epoch 0 records the losses of the initialization; later epochs record the
// mean mini-batch training loss and the validation loss in inference mode.
// An empty validation split selects on the training loss instead.
TrainResult train(const UNetConfig& config, const std::vector<SampleView>& train_set,
                  const std::vector<SampleView>& val_set, const TrainConfig& tc);

// Inference-mode mean L2 over a sample set.
double evaluate_l2(UNet<float>& model, const std::vector<SampleView>& samples, int batch_size = 8);

// Inference-mode prediction of the normalized deformation image.
uvmap::UVImage predict(UNet<float>& model, const uvmap::UVImage& force, const uvmap::UVImage& thickness);

void write_loss_csv(std::ostream& out, const std::vector<LossRecord>& history);

// Checkpoint: magic "SSUNET01", u32 version, config (5 x u32: in, out, base,
// depth, reserved; 2 x f64: dropout, leaky slope), u64 parameter count, then
// f32 parameters in layer order.
void save_checkpoint(std::ostream& out, const UNet<float>& model);
UNet<float> load_checkpoint(std::istream& in);

struct NaiveParams {
  std::array<double, 3> alpha{0.0, 0.0, 0.0};
};

// delta_c = alpha_c * t * F per pixel, on normalized images.
uvmap::UVImage naive_predict(const NaiveParams& params, const uvmap::UVImage& thickness,
                             const uvmap::UVImage& force);

struct NaiveFitConfig {
  double lr = 2e-2;
  int epochs = 300;
  int batch_size = 128;
  std::uint64_t seed = 1;
};

struct NaiveFitResult {
  NaiveParams params;
  NaiveParams closed_form;
  std::vector<double> loss_history;  // mean L2 over the training set per epoch
};

// Least-squares optimum alpha_c = sum(tF * delta_c) / sum((tF)^2).
NaiveParams naive_closed_form(const std::vector<SampleView>& samples);
// Mini-batch Adam on the pixel L2 loss, from alpha = 0.
NaiveFitResult naive_fit(const std::vector<SampleView>& samples, const NaiveFitConfig& config);

// Text: "naive alpha_x alpha_y alpha_z" with %.17g values.
void save_naive(std::ostream& out, const NaiveParams& params);
NaiveParams load_naive(std::istream& in);

}  // namespace softshell::surrogate
