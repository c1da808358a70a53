#include "softshell/errors.hpp"
#include "softshell/surrogate.hpp"

#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

using namespace softshell;
using namespace softshell::surrogate;
using uvmap::Semantic;
using uvmap::UVImage;

namespace {

struct Synthetic {
  std::vector<UVImage> force, thickness, deformation;

  std::vector<SampleView> views() const {
    std::vector<SampleView> v;
    for (std::size_t i = 0; i < force.size(); ++i) v.push_back({&force[i], &thickness[i], &deformation[i]});
    return v;
  }
};

// Deformation = alpha * t * F per pixel plus optional noise.
Synthetic make_synthetic(int count, int size, const std::array<double, 3>& alpha, double noise, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> nd(0.0, noise > 0 ? noise : 1.0);
  Synthetic s;
  for (int i = 0; i < count; ++i) {
    UVImage f(size, size, {Semantic::force}), t(size, size, {Semantic::thickness}),
        d(size, size, {Semantic::dx, Semantic::dy, Semantic::dz});
    const double tv = u(rng);
    const int cx = static_cast<int>(u(rng) * size), cy = static_cast<int>(u(rng) * size);
    const double amp = u(rng);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        const double r2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
        const double fv = r2 < size * size / 16.0 ? amp : 0.0;
        f.at(0, y, x) = static_cast<float>(fv);
        t.at(0, y, x) = static_cast<float>(tv);
        for (int c = 0; c < 3; ++c)
          d.at(c, y, x) = static_cast<float>(alpha[c] * tv * fv + (noise > 0 ? nd(rng) : 0.0));
      }
    s.force.push_back(f);
    s.thickness.push_back(t);
    s.deformation.push_back(d);
  }
  return s;
}

std::size_t expected_params(const UNetConfig& c) {
  auto ch = [&](int level) { return static_cast<std::size_t>(c.base_channels) << std::min(level - 1, 3); };
  auto layer = [](std::size_t cin, std::size_t cout) { return cin * cout * 16 + cout; };
  std::size_t total = 0;
  for (int i = 1; i <= c.depth; ++i) total += layer(i == 1 ? c.in_channels : ch(i - 1), ch(i));
  for (int j = 0; j < c.depth - 1; ++j) {
    const int level = c.depth - j;
    total += layer(j == 0 ? ch(c.depth) : 2 * ch(level), ch(level - 1));
  }
  return total + layer(2 * ch(1), c.out_channels);
}

}  // namespace

TEST_CASE("parameter count of the default network") {
  const UNetConfig c;
  const UNet<float> net(c);
  CHECK(net.params().size() == 1043043u);
  CHECK(net.params().size() == expected_params(c));
  for (int depth = 2; depth <= 7; ++depth)
    for (int base : {1, 4, 16}) {
      UNetConfig d;
      d.depth = depth;
      d.base_channels = base;
      CHECK(UNet<float>(d).params().size() == expected_params(d));
    }
  CHECK(c.dropout_blocks() == 3);
}

TEST_CASE("config validation and input size") {
  UNetConfig c;
  c.depth = 0;
  CHECK_THROWS_AS(c.validate(), ParameterError);
  c = UNetConfig{};
  c.dropout_rate = 1.0;
  CHECK_THROWS_AS(c.validate(), ParameterError);
  c = UNetConfig{};
  CHECK_NOTHROW(c.check_input(128, 64));
  CHECK_THROWS_AS(c.check_input(100, 128), ParameterError);
  UNet<float> net(c);
  net.init(1);
  Tensor<float> x(1, 2, 48, 48);
  CHECK_THROWS_AS(net.forward(x, false), ParameterError);
}

TEST_CASE("zero weights give tanh of the output bias") {
  UNetConfig c;
  c.depth = 3;
  c.base_channels = 4;
  UNet<float> net(c);
  const auto& out = net.layers().back();
  const float bias[3] = {0.3f, -0.7f, 0.0f};
  for (int k = 0; k < 3; ++k) net.params()[out.bias_offset + k] = bias[k];
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<float> u(0, 1);
  Tensor<float> x(2, 2, 32, 32);
  for (auto& v : x.data) v = u(rng);
  const auto y = net.forward(x, false);
  for (int b = 0; b < 2; ++b)
    for (int k = 0; k < 3; ++k)
      for (int i = 0; i < 32; i += 5) CHECK(y.at(b, k, i, 31 - i) == doctest::Approx(std::tanh(bias[k])).epsilon(1e-6));
}

TEST_CASE("outputs lie strictly inside (-1, 1) and inference is deterministic") {
  UNetConfig c;
  c.depth = 4;
  c.base_channels = 8;
  UNet<float> net(c);
  net.init(7);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<float> u(0, 1);
  Tensor<float> x(3, 2, 64, 64);
  for (auto& v : x.data) v = u(rng);
  const auto a = net.forward(x, false);
  const auto b = net.forward(x, false);
  CHECK(a.data == b.data);
  CHECK(a.c == 3);
  CHECK(a.h == 64);
  for (float v : a.data) {
    CHECK(v > -1.0f);
    CHECK(v < 1.0f);
  }
  std::mt19937_64 r1(5), r2(5);
  CHECK(net.forward(x, true, &r1).data == net.forward(x, true, &r2).data);
}

TEST_CASE("network gradient against central differences") {
  UNetConfig c;
  c.depth = 2;
  c.base_channels = 1;
  c.dropout_rate = 0.5;
  UNet<double> net(c);
  REQUIRE(net.params().size() <= 200u);
  net.init(3);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> nd(0.0, 0.5);
  for (auto& p : net.params()) p = nd(rng);
  Tensor<double> x(2, 2, 16, 16), target(2, 3, 16, 16);
  for (auto& v : x.data) v = nd(rng);
  for (auto& v : target.data) v = nd(rng);
  auto loss = [&](bool with_grad) {
    std::mt19937_64 drop(99);
    const auto y = net.forward(x, true, &drop);
    Tensor<double> g;
    const double l = nn::l2_loss(y, target, &g) + 0.1 * nn::tv_loss(y, &g, 0.1);
    if (with_grad) {
      net.zero_grad();
      net.backward(g);
    }
    return l;
  };
  loss(true);
  const auto analytic = net.grads();
  const double h = 1e-6;
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < net.params().size(); ++i) {
    const double p0 = net.params()[i];
    net.params()[i] = p0 + h;
    const double lp = loss(false);
    net.params()[i] = p0 - h;
    const double lm = loss(false);
    net.params()[i] = p0;
    const double fd = (lp - lm) / (2 * h);
    num += (analytic[i] - fd) * (analytic[i] - fd);
    den += fd * fd;
  }
  CHECK(std::sqrt(num / den) < 1e-3);
}

TEST_CASE("adam step examples") {
  std::vector<double> p{1.0, -1.0}, g{2.0, -0.5};
  AdamState s;
  s.lr = 0.1;
  adam_step(p, g, s);
  CHECK(s.step == 1);
  CHECK(p[0] == doctest::Approx(0.9).epsilon(1e-6));
  CHECK(p[1] == doctest::Approx(-0.9).epsilon(1e-6));
  std::vector<double> wrong{1.0};
  CHECK_THROWS_AS(adam_step(p, wrong, s), ShapeError);
}

TEST_CASE("adam minimizes a quadratic bowl") {
  std::vector<float> p{3.0f, -2.0f, 0.5f, 10.0f};
  const std::vector<float> c{1.0f, 1.0f, -1.0f, 0.0f};
  AdamState s;
  s.lr = 0.05;
  for (int it = 0; it < 3000; ++it) {
    std::vector<float> g(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) g[i] = 2.0f * (p[i] - c[i]);
    adam_step(p, g, s);
  }
  for (std::size_t i = 0; i < p.size(); ++i) CHECK(std::abs(p[i] - c[i]) < 1e-3);
}

TEST_CASE("naive model prediction") {
  UVImage t(2, 1, {Semantic::thickness}), f(2, 1, {Semantic::force});
  t.data = {0.5f, 0.25f};
  f.data = {0.4f, 1.0f};
  NaiveParams p;
  p.alpha = {1.0, -2.0, 0.5};
  const auto d = naive_predict(p, t, f);
  CHECK(d.channels == 3);
  CHECK(d.at(0, 0, 0) == doctest::Approx(0.2));
  CHECK(d.at(1, 0, 1) == doctest::Approx(-0.5));
  CHECK(d.at(2, 0, 1) == doctest::Approx(0.125));
  UVImage bad(3, 1, {Semantic::force});
  CHECK_THROWS_AS(naive_predict(p, t, bad), ShapeError);
}

TEST_CASE("naive closed form and Adam fit recover alpha") {
  const std::array<double, 3> alpha{0.3, -0.2, 0.1};
  const auto exact = make_synthetic(20, 16, alpha, 0.0, 1);
  const auto cf = naive_closed_form(exact.views());
  for (int c = 0; c < 3; ++c) CHECK(cf.alpha[c] == doctest::Approx(alpha[c]).epsilon(1e-6));

  const auto noisy = make_synthetic(20, 16, alpha, 0.01, 2);
  NaiveFitConfig nc;
  const auto fit = naive_fit(noisy.views(), nc);
  for (int c = 0; c < 3; ++c) CHECK(std::abs(fit.params.alpha[c] - fit.closed_form.alpha[c]) < 1e-3);
  CHECK(fit.loss_history.size() == static_cast<std::size_t>(nc.epochs));
  CHECK(fit.loss_history.back() < fit.loss_history.front());
  CHECK_THROWS_AS(naive_fit({}, nc), DataError);
}

TEST_CASE("naive parameter text round trip") {
  NaiveParams p;
  p.alpha = {0.1, -1.0 / 3.0, 2.5e-7};
  std::stringstream s;
  save_naive(s, p);
  const auto q = load_naive(s);
  CHECK(q.alpha == p.alpha);
  std::stringstream bad("naive 1 2");
  CHECK_THROWS_AS(load_naive(bad), FormatError);
}

TEST_CASE("checkpoint round trip and corruption") {
  UNetConfig c;
  c.depth = 3;
  c.base_channels = 4;
  UNet<float> net(c);
  net.init(11);
  std::stringstream s;
  save_checkpoint(s, net);
  const std::string bytes = s.str();
  std::stringstream in(bytes);
  const auto back = load_checkpoint(in);
  CHECK(back.config() == c);
  CHECK(back.params() == net.params());

  std::string wrong_magic = bytes;
  wrong_magic[0] = 'X';
  std::stringstream a(wrong_magic);
  CHECK_THROWS_AS(load_checkpoint(a), FormatError);
  std::string wrong_version = bytes;
  wrong_version[8] = static_cast<char>(wrong_version[8] + 1);
  std::stringstream b(wrong_version);
  CHECK_THROWS_AS(load_checkpoint(b), VersionError);
  std::stringstream t(bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(load_checkpoint(t), FormatError);
}

TEST_CASE("batching and image conversion") {
  const auto s = make_synthetic(5, 8, {0.1, 0.2, 0.3}, 0.0, 3);
  const auto views = s.views();
  const auto x = make_input_batch(views, 1, 4);
  CHECK(x.n == 3);
  CHECK(x.c == 2);
  CHECK(x.at(0, 0, 2, 3) == s.force[1].at(0, 2, 3));
  CHECK(x.at(2, 1, 5, 5) == s.thickness[3].at(0, 5, 5));
  const auto y = make_target_batch(views, 0, 5);
  const auto img = tensor_to_deformation_image(y, 4);
  CHECK(img == s.deformation[4]);
  CHECK_THROWS_AS(make_input_batch(views, 3, 3), ShapeError);
  std::vector<SampleView> missing{{&s.force[0], nullptr, nullptr}};
  CHECK_THROWS_AS(make_input_batch(missing, 0, 1), DataError);
}

TEST_CASE("training is deterministic and reduces the loss") {
  const auto tr = make_synthetic(12, 16, {0.5, -0.5, 0.25}, 0.0, 4);
  const auto va = make_synthetic(4, 16, {0.5, -0.5, 0.25}, 0.0, 5);
  UNetConfig c;
  c.depth = 2;
  c.base_channels = 4;
  TrainConfig tc;
  tc.epochs = 15;
  tc.batch_size = 4;
  tc.lr = 2e-3;
  tc.seed = 42;
  const auto a = train(c, tr.views(), va.views(), tc);
  const auto b = train(c, tr.views(), va.views(), tc);
  CHECK(a.model.params() == b.model.params());
  REQUIRE(a.history.size() == 16u);
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].train_l2 == b.history[i].train_l2);
    CHECK(a.history[i].val_l2 == b.history[i].val_l2);
  }
  CHECK(a.history.back().train_l2 < a.history.front().train_l2);
  double best = a.history[0].val_l2;
  for (const auto& h : a.history) best = std::min(best, h.val_l2);
  CHECK(a.history[a.best_epoch].val_l2 == best);
  auto m = a.model;
  CHECK(evaluate_l2(m, va.views()) == doctest::Approx(best).epsilon(1e-6));

  tc.seed = 43;
  const auto other = train(c, tr.views(), va.views(), tc);
  CHECK(other.model.params() != a.model.params());
  CHECK_THROWS_AS(train(c, {}, va.views(), tc), DataError);
}

TEST_CASE("max_steps caps optimizer steps") {
  const auto tr = make_synthetic(8, 16, {0.5, 0.5, 0.5}, 0.0, 6);
  UNetConfig c;
  c.depth = 2;
  c.base_channels = 2;
  TrainConfig tc;
  tc.epochs = 100;
  tc.batch_size = 2;
  tc.max_steps = 10;
  const auto r = train(c, tr.views(), {}, tc);
  CHECK(r.steps == 10);
}

TEST_CASE("loss csv format") {
  std::vector<LossRecord> h{{0, 0.5, 0.25}, {1, 0.125, 0.0625}};
  std::stringstream s;
  write_loss_csv(s, h);
  std::string header;
  std::getline(s, header);
  CHECK(header == "epoch,train_l2,val_l2");
}
