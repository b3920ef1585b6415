#include <doctest.h>

#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <vector>

#include "adaplan/errors.hpp"
#include "adaplan/nn/adam.hpp"
#include "adaplan/nn/checkpoint.hpp"
#include "adaplan/nn/losses.hpp"
#include "adaplan/nn/mlp.hpp"
#include "support.hpp"

using namespace adaplan;
using adaplan::testing::grad_check;

namespace {

nn::MlpParams scalar_linear(double w, double b) {
  nn::MlpParams p;
  p.layer_sizes = {1, 1};
  p.weights = {Eigen::MatrixXd::Constant(1, 1, w)};
  p.biases = {Eigen::VectorXd::Constant(1, b)};
  return p;
}

}  // namespace

TEST_CASE("rng streams are reproducible and distinct") {
  RngStream a(5, 0), b(5, 0), c(5, 1);
  bool differs = false;
  for (int i = 0; i < 16; ++i) {
    const double x = a.normal();
    CHECK(x == b.normal());
    differs |= x != c.normal();
  }
  CHECK(differs);
  CHECK(RngStream(5, 0).split(3).uniform(0, 1) == RngStream(5, 0).split(3).uniform(0, 1));
}

TEST_CASE("mlp_init is deterministic and Kaiming-bounded") {
  const std::vector<int> sizes{3, 16, 2};
  RngStream r1(1, 0), r2(1, 0), r3(1, 1);
  const auto a = nn::mlp_init(sizes, nn::Activation::relu, r1);
  const auto b = nn::mlp_init(sizes, nn::Activation::relu, r2);
  const auto c = nn::mlp_init(sizes, nn::Activation::relu, r3);
  CHECK(a == b);
  CHECK_FALSE(a == c);
  REQUIRE(a.weights[0].rows() == 16);
  REQUIRE(a.weights[0].cols() == 3);
  CHECK(a.weights[0].cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 3.0));
  CHECK(a.weights[1].cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 16.0));
  CHECK(a.biases[0].isZero());
  CHECK(a.biases[1].isZero());
}

TEST_CASE("parameter count of [2,512,512,1]") {
  const std::vector<int> sizes{2, 512, 512, 1};
  CHECK(nn::parameter_count(sizes) == 264705u);
  RngStream rng(0, 0);
  CHECK(nn::mlp_init(sizes, nn::Activation::relu, rng).parameter_count() == 264705u);
}

TEST_CASE("invalid architectures are rejected") {
  RngStream rng(0, 0);
  CHECK_THROWS_AS(nn::mlp_init(std::vector<int>{}, nn::Activation::relu, rng), InvalidArchitecture);
  CHECK_THROWS_AS(nn::mlp_init(std::vector<int>{4}, nn::Activation::relu, rng), InvalidArchitecture);
  CHECK_THROWS_AS(nn::mlp_init(std::vector<int>{4, 0, 1}, nn::Activation::relu, rng), InvalidArchitecture);
}

TEST_CASE("forward hand cases") {
  const std::vector<double> one{1.0};
  CHECK(nn::mlp_forward(scalar_linear(2.0, 0.5), one)[0] == doctest::Approx(2.5));

  nn::MlpParams id;
  id.layer_sizes = {3, 3};
  id.weights = {Eigen::MatrixXd::Identity(3, 3)};
  id.biases = {Eigen::VectorXd::Zero(3)};
  const std::vector<double> x{0.3, -1.2, 4.0};
  const Eigen::VectorXd y = nn::mlp_forward(id, x);
  for (int i = 0; i < 3; ++i) CHECK(y[i] == x[static_cast<std::size_t>(i)]);

  RngStream rng(2, 0);
  auto zero = nn::mlp_init(std::vector<int>{3, 8, 2}, nn::Activation::relu, rng);
  for (auto& w : zero.weights) w.setZero();
  CHECK(nn::mlp_forward(zero, x).isZero());

  const std::vector<double> wrong{1.0, 2.0};
  CHECK_THROWS_AS(nn::mlp_forward(zero, wrong), ShapeError);
}

TEST_CASE("batched forward matches per-sample forward") {
  RngStream rng(3, 0);
  const auto p = nn::mlp_init(std::vector<int>{3, 8, 8, 2}, nn::Activation::mish, rng);
  Eigen::MatrixXd x(3, 5);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-1, 1);
  const Eigen::MatrixXd y = nn::mlp_forward_batch(p, x);
  for (Eigen::Index c = 0; c < 5; ++c) {
    const Eigen::VectorXd col = x.col(c);
    const Eigen::VectorXd single = nn::mlp_forward(p, std::span<const double>(col.data(), 3));
    CHECK((single - y.col(c)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("gradient of (w x - y)^2 at w=1, x=2, y=0 is 8") {
  const Eigen::MatrixXd x = Eigen::MatrixXd::Constant(1, 1, 2.0);
  const Eigen::MatrixXd y = Eigen::MatrixXd::Zero(1, 1);
  const nn::GradResult g = nn::grad(scalar_linear(1.0, 0.0), x, y, nn::squared_error_loss());
  CHECK(g.loss == doctest::Approx(4.0));
  CHECK(g.grads.weights[0](0, 0) == doctest::Approx(8.0));
  CHECK(g.grads.biases[0][0] == doctest::Approx(4.0));
}

TEST_CASE("squared-error gradient vanishes at an exact fit") {
  const Eigen::MatrixXd x = Eigen::MatrixXd::Constant(1, 1, 2.0);
  const Eigen::MatrixXd y = Eigen::MatrixXd::Constant(1, 1, 3.5);
  const nn::GradResult g = nn::grad(scalar_linear(1.5, 0.5), x, y, nn::squared_error_loss());
  CHECK(g.loss == 0.0);
  CHECK(g.grads.weights[0](0, 0) == 0.0);
  CHECK(g.grads.biases[0][0] == 0.0);
}

TEST_CASE("analytic gradients match central differences") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    for (bool nll : {false, true}) {
      for (auto act : {nn::Activation::relu, nn::Activation::mish}) {
        CAPTURE(seed);
        CAPTURE(nll);
        CHECK(grad_check(seed, nll, act) < 1e-4);
      }
    }
  }
}

TEST_CASE("non-finite loss names the sample") {
  Eigen::MatrixXd x = Eigen::MatrixXd::Ones(1, 3);
  x(0, 1) = std::numeric_limits<double>::infinity();
  const Eigen::MatrixXd y = Eigen::MatrixXd::Zero(1, 3);
  try {
    nn::grad(scalar_linear(1.0, 0.0), x, y, nn::squared_error_loss());
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(e.index() == 1u);
  }
}

TEST_CASE("adam first step moves by about the learning rate") {
  nn::MlpParams p = scalar_linear(0.7, 0.0);
  nn::MlpGrads g = nn::MlpGrads::zeros_like(p);
  g.weights[0](0, 0) = 0.3;
  const auto state = nn::AdamState::fresh(p, {});
  const auto [next_state, next] = nn::adam_update(state, p, g);
  CHECK(next_state.step_count == 1u);
  CHECK(next.weights[0](0, 0) - 0.7 == doctest::Approx(-1e-3 * 0.3 / (0.3 + 1e-8)).epsilon(1e-9));
  CHECK(next.biases[0][0] == 0.0);

  const auto [again_state, again] = nn::adam_update(state, p, g);
  CHECK(again == next);
  CHECK(again_state.step_count == next_state.step_count);
}

TEST_CASE("adam with zero gradient leaves parameters unchanged") {
  RngStream rng(4, 0);
  const auto p = nn::mlp_init(std::vector<int>{2, 4, 1}, nn::Activation::relu, rng);
  const auto [s, q] = nn::adam_update(nn::AdamState::fresh(p, {}), p, nn::MlpGrads::zeros_like(p));
  CHECK(q == p);
  CHECK(s.step_count == 1u);
}

TEST_CASE("adam rejects non-finite gradients and leaves inputs intact") {
  nn::MlpParams p = scalar_linear(1.0, 0.0);
  nn::MlpGrads g = nn::MlpGrads::zeros_like(p);
  g.weights[0](0, 0) = std::numeric_limits<double>::quiet_NaN();
  auto state = nn::AdamState::fresh(p, {});
  CHECK_THROWS_AS(nn::adam_step(state, p, g), NumericError);
  CHECK(state.step_count == 0u);
  CHECK(p.weights[0](0, 0) == 1.0);
}

TEST_CASE("nll hand values") {
  const std::vector<double> zero{0.0};
  CHECK(nn::nll_loss(std::vector<double>{0.0}, zero, std::vector<double>{1.0}) == 0.0);
  CHECK(nn::nll_loss(std::vector<double>{1.0}, zero, std::vector<double>{1.0}) == doctest::Approx(0.5).epsilon(1e-12));
  const double v = nn::nll_loss(std::vector<double>{2.0}, zero, std::vector<double>{2.0});
  CHECK(std::abs(v - (0.5 * std::log(2.0) + 1.0)) < 1e-12);
  CHECK(std::abs(v - 1.34657) < 1e-5);
  CHECK_THROWS_AS(nn::nll_loss(std::vector<double>{0.0}, zero, std::vector<double>{0.0}), DomainError);
  CHECK_THROWS_AS(nn::nll_loss(std::vector<double>{0.0}, zero, std::vector<double>{-1.0}), DomainError);
}

TEST_CASE("nll is minimised at var = residual^2") {
  RngStream rng(11, 0);
  for (int i = 0; i < 2000; ++i) {
    const double r = rng.uniform(-4.0, 4.0);
    const std::vector<double> y{r}, mu{0.0}, best{r * r + 1e-6};
    for (double c : {0.1, 1.0, 10.0}) {
      if (std::abs(r * r - c) <= 0.1 * c) continue;
      CHECK(nn::nll_loss(y, mu, best) <= nn::nll_loss(y, mu, std::vector<double>{c}));
    }
  }
}

TEST_CASE("softplus_var values and floor") {
  CHECK(std::abs(nn::softplus_var(0.0) - (std::log(2.0) + 1e-6)) < 1e-15);
  CHECK(std::abs(nn::softplus_var(-40.0) - 1e-6) < 1e-12);
  CHECK(std::abs(nn::softplus_var(20.0) - (20.0 + 1e-6)) < 1e-8);
  CHECK(nn::softplus_var(1000.0) == doctest::Approx(1000.0));
  RngStream rng(12, 0);
  for (int i = 0; i < 10000; ++i) CHECK(nn::softplus_var(rng.uniform(-800.0, 800.0)) >= 1e-6);
  CHECK(nn::softplus_var(-1e300) >= 1e-6);
}

TEST_CASE("training is bit-reproducible") {
  auto train = [] {
    RngStream rng(21, 0);
    auto p = nn::mlp_init(std::vector<int>{2, 16, 1}, nn::Activation::relu, rng);
    auto s = nn::AdamState::fresh(p, {});
    Eigen::MatrixXd x(2, 8), y(1, 8);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-1, 1);
    y = x.colwise().sum();
    for (int k = 0; k < 50; ++k) nn::adam_step(s, p, nn::grad(p, x, y, nn::squared_error_loss()).grads);
    return p;
  };
  CHECK(train() == train());
}

TEST_CASE("checkpoint roundtrip is f32-exact") {
  const auto dir = adaplan::testing::scratch_dir("nn_ckpt");
  RngStream rng(9, 0);
  const auto a = nn::mlp_init(std::vector<int>{3, 5, 2}, nn::Activation::mish, rng);
  const auto b = nn::mlp_init(std::vector<int>{2, 4, 4, 1}, nn::Activation::relu, rng);
  std::vector<nn::MlpParams> nets{a, b};
  nn::write_checkpoint(dir / "m.adpl", {{"model_kind", "test"}, {"seed", 9}}, nets);
  const auto ck = nn::read_checkpoint(dir / "m.adpl");
  CHECK(ck.header.at("model_kind") == "test");
  REQUIRE(ck.networks.size() == 2u);
  CHECK(ck.networks[0] == nn::quantize_f32(a));
  CHECK(ck.networks[1] == nn::quantize_f32(b));
  CHECK(ck.networks[0].activation == nn::Activation::mish);

  std::size_t floats = a.parameter_count() + b.parameter_count();
  const auto size = std::filesystem::file_size(dir / "m.adpl");
  CHECK(size > 4 * floats + 10);
}

TEST_CASE("checkpoint format errors") {
  const auto dir = adaplan::testing::scratch_dir("nn_ckpt_bad");
  CHECK_THROWS_AS(nn::read_checkpoint(dir / "absent.adpl"), FileError);
  RngStream rng(9, 0);
  std::vector<nn::MlpParams> nets{nn::mlp_init(std::vector<int>{3, 5, 2}, nn::Activation::relu, rng)};
  nn::write_checkpoint(dir / "m.adpl", {{"model_kind", "test"}}, nets);

  std::string bytes;
  {
    std::ifstream in(dir / "m.adpl", std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  auto write = [&](const std::string& name, const std::string& content) {
    std::ofstream out(dir / name, std::ios::binary);
    out << content;
    return dir / name;
  };
  std::string magic = bytes;
  magic[0] = 'X';
  CHECK_THROWS_AS(nn::read_checkpoint(write("magic.adpl", magic)), FormatError);
  std::string version = bytes;
  version[4] = 9;
  CHECK_THROWS_AS(nn::read_checkpoint(write("version.adpl", version)), FormatError);
  CHECK_THROWS_AS(nn::read_checkpoint(write("short.adpl", bytes.substr(0, bytes.size() - 3))), FormatError);
}
