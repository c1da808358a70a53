#include "softshell/binary_io.hpp"
#include "softshell/errors.hpp"
#include "softshell/kernels.hpp"
#include "softshell/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

namespace softshell::surrogate {

namespace {

template <typename T>
void adam_generic(std::vector<T>& params, const std::vector<T>& grads, AdamState& s, std::vector<T>& m,
                  std::vector<T>& v) {
  if (grads.size() != params.size()) throw ShapeError("adam_step: gradient size mismatch");
  if (m.size() != params.size()) {
    m.assign(params.size(), T(0));
    v.assign(params.size(), T(0));
  }
  ++s.step;
  kernels::AdamArgs a;
  a.lr = static_cast<float>(s.lr);
  a.beta1 = static_cast<float>(s.beta1);
  a.beta2 = static_cast<float>(s.beta2);
  a.eps = static_cast<float>(s.epsilon);
  a.step = s.step;
  kernels::adam_update(a, params.size(), params.data(), grads.data(), m.data(), v.data());
}

void check_view(const SampleView& s, bool need_target) {
  if (!s.force || !s.thickness || (need_target && !s.deformation)) throw DataError("sample view has missing images");
  if (s.force->channels != 1 || s.thickness->channels != 1) throw ShapeError("force/thickness images are single channel");
  if (s.force->width != s.thickness->width || s.force->height != s.thickness->height)
    throw ShapeError("force and thickness images differ in size");
  if (need_target && (s.deformation->channels != 3 || s.deformation->width != s.force->width ||
                      s.deformation->height != s.force->height))
    throw ShapeError("deformation image must be 3 channels of the input size");
}

std::vector<SampleView> gather(const std::vector<SampleView>& all, const std::vector<std::size_t>& order,
                               std::size_t begin, std::size_t end) {
  std::vector<SampleView> out;
  out.reserve(end - begin);
  for (std::size_t i = begin; i < end; ++i) out.push_back(all[order[i]]);
  return out;
}

constexpr char kCheckpointMagic[8] = {'S', 'S', 'U', 'N', 'E', 'T', '0', '1'};
constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace

void adam_step(std::vector<float>& params, const std::vector<float>& grads, AdamState& state) {
  adam_generic(params, grads, state, state.m32, state.v32);
}

void adam_step(std::vector<double>& params, const std::vector<double>& grads, AdamState& state) {
  adam_generic(params, grads, state, state.m64, state.v64);
}

Tensor<float> make_input_batch(const std::vector<SampleView>& samples, std::size_t begin, std::size_t end) {
  if (begin >= end || end > samples.size()) throw ShapeError("empty or out-of-range batch");
  check_view(samples[begin], false);
  const int h = samples[begin].force->height, w = samples[begin].force->width;
  Tensor<float> t(static_cast<int>(end - begin), 2, h, w);
  for (std::size_t i = begin; i < end; ++i) {
    check_view(samples[i], false);
    if (samples[i].force->height != h || samples[i].force->width != w) throw ShapeError("batch images differ in size");
    float* dst = t.item(static_cast<int>(i - begin));
    std::copy(samples[i].force->data.begin(), samples[i].force->data.end(), dst);
    std::copy(samples[i].thickness->data.begin(), samples[i].thickness->data.end(), dst + t.plane());
  }
  return t;
}

Tensor<float> make_target_batch(const std::vector<SampleView>& samples, std::size_t begin, std::size_t end) {
  if (begin >= end || end > samples.size()) throw ShapeError("empty or out-of-range batch");
  check_view(samples[begin], true);
  const int h = samples[begin].deformation->height, w = samples[begin].deformation->width;
  Tensor<float> t(static_cast<int>(end - begin), 3, h, w);
  for (std::size_t i = begin; i < end; ++i) {
    check_view(samples[i], true);
    if (samples[i].deformation->height != h || samples[i].deformation->width != w)
      throw ShapeError("batch images differ in size");
    std::copy(samples[i].deformation->data.begin(), samples[i].deformation->data.end(),
              t.item(static_cast<int>(i - begin)));
  }
  return t;
}

Tensor<float> image_to_tensor(const uvmap::UVImage& force, const uvmap::UVImage& thickness) {
  std::vector<SampleView> one{{&force, &thickness, nullptr}};
  return make_input_batch(one, 0, 1);
}

uvmap::UVImage tensor_to_deformation_image(const Tensor<float>& t, int item) {
  if (t.c != 3 || item < 0 || item >= t.n) throw ShapeError("expected a 3-channel tensor item");
  uvmap::UVImage img(t.w, t.h, {uvmap::Semantic::dx, uvmap::Semantic::dy, uvmap::Semantic::dz});
  std::copy(t.item(item), t.item(item) + t.item_size(), img.data.begin());
  return img;
}

double evaluate_l2(UNet<float>& model, const std::vector<SampleView>& samples, int batch_size) {
  if (samples.empty()) throw DataError("evaluate_l2: empty sample set");
  const std::size_t bs = static_cast<std::size_t>(std::max(1, batch_size));
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t b = 0; b < samples.size(); b += bs) {
    const std::size_t e = std::min(samples.size(), b + bs);
    const auto x = make_input_batch(samples, b, e);
    const auto t = make_target_batch(samples, b, e);
    const auto y = model.forward(x, false);
    sum += nn::l2_loss(y, t) * static_cast<double>(t.size());
    count += t.size();
  }
  return sum / static_cast<double>(count);
}

uvmap::UVImage predict(UNet<float>& model, const uvmap::UVImage& force, const uvmap::UVImage& thickness) {
  return tensor_to_deformation_image(model.forward(image_to_tensor(force, thickness), false));
}

TrainResult train(const UNetConfig& config, const std::vector<SampleView>& train_set,
                  const std::vector<SampleView>& val_set, const TrainConfig& tc) {
  if (train_set.empty()) throw DataError("training split is empty");
  if (tc.epochs < 0 || tc.batch_size < 1 || !(tc.lr > 0.0) || tc.tv_weight < 0.0)
    throw ParameterError("invalid training hyperparameters");
  config.validate();
  for (const auto& s : train_set) check_view(s, true);
  for (const auto& s : val_set) check_view(s, true);
  config.check_input(train_set.front().force->height, train_set.front().force->width);
  const auto& selection = val_set.empty() ? train_set : val_set;

  TrainResult result;
  UNet<float> model(config);
  model.init(tc.seed);
  std::mt19937_64 rng(tc.seed ^ 0x9E3779B97F4A7C15ULL);
  AdamState adam;
  adam.lr = tc.lr;

  LossRecord r0;
  r0.epoch = 0;
  r0.train_l2 = evaluate_l2(model, train_set, tc.batch_size);
  r0.val_l2 = evaluate_l2(model, selection, tc.batch_size);
  result.history.push_back(r0);
  std::vector<float> best = model.params();
  double best_val = r0.val_l2;

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t bs = static_cast<std::size_t>(tc.batch_size);
  bool done = false;
  for (int epoch = 1; epoch <= tc.epochs && !done; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t b = 0; b < order.size(); b += bs) {
      const std::size_t e = std::min(order.size(), b + bs);
      const auto batch = gather(train_set, order, b, e);
      const auto x = make_input_batch(batch, 0, batch.size());
      const auto t = make_target_batch(batch, 0, batch.size());
      model.zero_grad();
      const auto y = model.forward(x, true, &rng);
      Tensor<float> g;
      const double l2 = nn::l2_loss(y, t, &g);
      if (tc.tv_weight > 0.0) nn::tv_loss(y, &g, tc.tv_weight);
      model.backward(g);
      adam_step(model.params(), model.grads(), adam);
      sum += l2 * static_cast<double>(batch.size());
      count += batch.size();
      ++result.steps;
      if (tc.max_steps > 0 && result.steps >= tc.max_steps) {
        done = true;
        break;
      }
    }
    LossRecord r;
    r.epoch = epoch;
    r.train_l2 = sum / static_cast<double>(count);
    r.val_l2 = evaluate_l2(model, selection, tc.batch_size);
    if (!std::isfinite(r.train_l2) || !std::isfinite(r.val_l2))
      throw ConvergenceError("training diverged at epoch " + std::to_string(epoch), r.train_l2);
    result.history.push_back(r);
    if (r.val_l2 < best_val) {
      best_val = r.val_l2;
      best = model.params();
      result.best_epoch = epoch;
    }
    if (tc.verbose)
      std::fprintf(stderr, "epoch %d train_l2 %.6e val_l2 %.6e\n", epoch, r.train_l2, r.val_l2);
  }
  model.params() = best;
  model.zero_grad();
  result.model = std::move(model);
  return result;
}

void write_loss_csv(std::ostream& out, const std::vector<LossRecord>& history) {
  out << "epoch,train_l2,val_l2\n";
  char buf[128];
  for (const auto& r : history) {
    std::snprintf(buf, sizeof buf, "%d,%.9e,%.9e\n", r.epoch, r.train_l2, r.val_l2);
    out << buf;
  }
}

void save_checkpoint(std::ostream& out, const UNet<float>& model) {
  const auto& c = model.config();
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  binary::put_u32(out, kCheckpointVersion);
  binary::put_u32(out, static_cast<std::uint32_t>(c.in_channels));
  binary::put_u32(out, static_cast<std::uint32_t>(c.out_channels));
  binary::put_u32(out, static_cast<std::uint32_t>(c.base_channels));
  binary::put_u32(out, static_cast<std::uint32_t>(c.depth));
  binary::put_u32(out, 0);
  binary::put_f64(out, c.dropout_rate);
  binary::put_f64(out, c.leaky_slope);
  binary::put_u64(out, model.params().size());
  for (float p : model.params()) binary::put_f32(out, p);
  if (!out) throw IoError("failed to write checkpoint");
}

UNet<float> load_checkpoint(std::istream& in) {
  char magic[8];
  if (!in.read(magic, sizeof magic)) throw FormatError("checkpoint truncated in header", 0);
  if (std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) throw FormatError("not a UNet checkpoint", 0);
  std::uint64_t off = sizeof magic;
  const std::uint32_t version = binary::get_u32(in, off);
  if (version != kCheckpointVersion)
    throw VersionError("checkpoint version " + std::to_string(version) + ", expected " +
                       std::to_string(kCheckpointVersion));
  UNetConfig c;
  c.in_channels = static_cast<int>(binary::get_u32(in, off));
  c.out_channels = static_cast<int>(binary::get_u32(in, off));
  c.base_channels = static_cast<int>(binary::get_u32(in, off));
  c.depth = static_cast<int>(binary::get_u32(in, off));
  binary::get_u32(in, off);
  c.dropout_rate = binary::get_f64(in, off);
  c.leaky_slope = binary::get_f64(in, off);
  try {
    c.validate();
  } catch (const ParameterError& e) {
    throw FormatError(std::string("checkpoint config invalid: ") + e.what(), 8);
  }
  UNet<float> model(c);
  const std::uint64_t n = binary::get_u64(in, off);
  if (n != model.params().size())
    throw FormatError("checkpoint has " + std::to_string(n) + " parameters, config implies " +
                          std::to_string(model.params().size()),
                      off - 8);
  for (float& p : model.params()) p = binary::get_f32(in, off);
  return model;
}

uvmap::UVImage naive_predict(const NaiveParams& params, const uvmap::UVImage& thickness,
                             const uvmap::UVImage& force) {
  if (thickness.channels != 1 || force.channels != 1 || thickness.width != force.width ||
      thickness.height != force.height)
    throw ShapeError("naive_predict needs matching single-channel thickness and force images");
  uvmap::UVImage out(force.width, force.height, {uvmap::Semantic::dx, uvmap::Semantic::dy, uvmap::Semantic::dz});
  const std::size_t n = force.plane_size();
  for (int c = 0; c < 3; ++c) {
    auto dst = out.channel(c);
    for (std::size_t i = 0; i < n; ++i)
      dst[i] = static_cast<float>(params.alpha[c] * static_cast<double>(thickness.data[i]) *
                                  static_cast<double>(force.data[i]));
  }
  return out;
}

namespace {

struct NaiveStats {
  double ss = 0.0;
  std::array<double, 3> sd{0.0, 0.0, 0.0};
  std::array<double, 3> dd{0.0, 0.0, 0.0};
  double pixels = 0.0;
};

NaiveStats naive_stats(const SampleView& s) {
  check_view(s, true);
  NaiveStats st;
  const std::size_t n = s.force->plane_size();
  st.pixels = static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double tf = static_cast<double>(s.thickness->data[i]) * static_cast<double>(s.force->data[i]);
    st.ss += tf * tf;
    for (int c = 0; c < 3; ++c) {
      const double d = s.deformation->data[c * n + i];
      st.sd[c] += tf * d;
      st.dd[c] += d * d;
    }
  }
  return st;
}

double naive_loss(const std::vector<NaiveStats>& stats, const std::array<double, 3>& a) {
  double sum = 0.0, px = 0.0;
  for (const auto& s : stats) {
    for (int c = 0; c < 3; ++c) sum += a[c] * a[c] * s.ss - 2.0 * a[c] * s.sd[c] + s.dd[c];
    px += 3.0 * s.pixels;
  }
  return sum / px;
}

}  // namespace

NaiveParams naive_closed_form(const std::vector<SampleView>& samples) {
  if (samples.empty()) throw DataError("naive fit needs samples");
  double ss = 0.0;
  std::array<double, 3> sd{0.0, 0.0, 0.0};
  for (const auto& s : samples) {
    const auto st = naive_stats(s);
    ss += st.ss;
    for (int c = 0; c < 3; ++c) sd[c] += st.sd[c];
  }
  NaiveParams p;
  if (ss > 0.0)
    for (int c = 0; c < 3; ++c) p.alpha[c] = sd[c] / ss;
  return p;
}

NaiveFitResult naive_fit(const std::vector<SampleView>& samples, const NaiveFitConfig& config) {
  if (samples.empty()) throw DataError("naive fit needs samples");
  if (config.epochs < 0 || config.batch_size < 1 || !(config.lr > 0.0))
    throw ParameterError("invalid naive fit hyperparameters");
  std::vector<NaiveStats> stats;
  stats.reserve(samples.size());
  for (const auto& s : samples) stats.push_back(naive_stats(s));

  NaiveFitResult result;
  result.closed_form = naive_closed_form(samples);
  std::vector<double> alpha(3, 0.0), grad(3, 0.0);
  AdamState adam;
  adam.lr = config.lr;
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(stats.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t bs = static_cast<std::size_t>(config.batch_size);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t b = 0; b < order.size(); b += bs) {
      const std::size_t e = std::min(order.size(), b + bs);
      std::fill(grad.begin(), grad.end(), 0.0);
      double px = 0.0;
      for (std::size_t i = b; i < e; ++i) {
        const auto& s = stats[order[i]];
        for (int c = 0; c < 3; ++c) grad[c] += 2.0 * (alpha[c] * s.ss - s.sd[c]);
        px += 3.0 * s.pixels;
      }
      for (double& g : grad) g /= px;
      adam_step(alpha, grad, adam);
    }
    result.loss_history.push_back(naive_loss(stats, {alpha[0], alpha[1], alpha[2]}));
  }
  for (int c = 0; c < 3; ++c) result.params.alpha[c] = alpha[c];
  return result;
}

void save_naive(std::ostream& out, const NaiveParams& params) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "naive %.17g %.17g %.17g\n", params.alpha[0], params.alpha[1], params.alpha[2]);
  out << buf;
  if (!out) throw IoError("failed to write naive parameters");
}

NaiveParams load_naive(std::istream& in) {
  std::string tag;
  NaiveParams p;
  if (!(in >> tag >> p.alpha[0] >> p.alpha[1] >> p.alpha[2]) || tag != "naive")
    throw FormatError("malformed naive parameter file", 0);
  for (double a : p.alpha)
    if (!std::isfinite(a)) throw FormatError("non-finite naive parameter", 0);
  return p;
}

}  // namespace softshell::surrogate
