#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "adaplan/ensemble/ensemble.hpp"
#include "adaplan/errors.hpp"
#include "adaplan/nn/checkpoint.hpp"
#include "adaplan/nn/losses.hpp"
#include "support.hpp"

using namespace adaplan;
using ensemble::ActionLoss;
using ensemble::MemberOutputs;
using ensemble::Reduction;

namespace {

MemberOutputs random_outputs(RngStream& rng, int dims, int members, bool with_var) {
  MemberOutputs o;
  o.mean.resize(dims, members);
  for (Eigen::Index i = 0; i < o.mean.size(); ++i) o.mean.data()[i] = rng.uniform(-3.0, 3.0);
  if (with_var) {
    o.var.resize(dims, members);
    for (Eigen::Index i = 0; i < o.var.size(); ++i) o.var.data()[i] = rng.uniform(1e-6, 2.0);
  }
  return o;
}

MemberOutputs permuted(const MemberOutputs& o, const std::vector<Eigen::Index>& perm) {
  MemberOutputs p = o;
  for (std::size_t c = 0; c < perm.size(); ++c) {
    p.mean.col(static_cast<Eigen::Index>(c)) = o.mean.col(perm[c]);
    if (o.var.size() > 0) p.var.col(static_cast<Eigen::Index>(c)) = o.var.col(perm[c]);
  }
  return p;
}

// Noiseless inverse dynamics s' = s + 0.5 a on a 2-D box; inputs are (s, s').
data::TransitionPairs linear_pairs(int n, RngStream& rng) {
  data::TransitionPairs p;
  p.inputs.resize(4, n);
  p.targets.resize(2, n);
  for (int i = 0; i < n; ++i) {
    for (int d = 0; d < 2; ++d) {
      const double s = rng.uniform(-0.5, 0.5), a = rng.uniform(-1.0, 1.0);
      p.inputs(d, i) = s;
      p.inputs(2 + d, i) = s + 0.5 * a;
      p.targets(d, i) = a;
    }
  }
  return p;
}

ensemble::MemberTrainConfig small_config(int steps) {
  ensemble::MemberTrainConfig c;
  c.steps = steps;
  c.batch_size = 128;
  c.hidden = {64, 64};
  return c;
}

ensemble::Ensemble wrap(std::vector<ensemble::ActionModel> members, int state_dim, int action_dim) {
  ensemble::Ensemble e;
  e.members = std::move(members);
  e.norm = data::NormStats::identity(state_dim, action_dim);
  return e;
}

}  // namespace

TEST_CASE("hand-evaluated aggregation") {
  MemberOutputs nll;
  nll.mean = Eigen::MatrixXd(1, 2);
  nll.mean << 1.0, 3.0;
  nll.var = Eigen::MatrixXd::Constant(1, 2, 0.5);
  auto p = ensemble::aggregate(nll, Reduction::mean);
  CHECK(p.action[0] == 2.0);
  CHECK(p.u == 1.5);

  MemberOutputs mse;
  mse.mean = nll.mean;
  p = ensemble::aggregate(mse, Reduction::mean);
  CHECK(p.action[0] == 2.0);
  CHECK(p.u == 1.0);
}

TEST_CASE("mean and max reductions") {
  MemberOutputs o;
  o.mean = Eigen::MatrixXd(2, 2);
  o.mean << 0.0, 2.0,  // variance 1
      0.0, 4.0;        // variance 4
  CHECK(ensemble::aggregate(o, Reduction::mean).u == 2.5);
  CHECK(ensemble::aggregate(o, Reduction::max).u == 4.0);
  CHECK(ensemble::aggregate(o, Reduction::mean).per_dim_uncertainty == std::vector<double>{1.0, 4.0});
}

TEST_CASE("uncertainty equals the mixture second central moment") {
  RngStream rng(1, 0);
  for (int i = 0; i < 1000; ++i) {
    const int members = 1 + static_cast<int>(rng.index(8));
    const MemberOutputs o = random_outputs(rng, 3, members, true);
    const Eigen::VectorXd a = ensemble::total_uncertainty(o);
    const Eigen::VectorXd b = ensemble::mixture_second_moment(o);
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("mixture moment boundary cases") {
  RngStream rng(2, 0);
  const MemberOutputs one = random_outputs(rng, 2, 1, true);
  CHECK((ensemble::mixture_second_moment(one) - one.var.col(0)).cwiseAbs().maxCoeff() < 1e-12);

  MemberOutputs same = random_outputs(rng, 2, 4, true);
  for (Eigen::Index c = 1; c < 4; ++c) same.mean.col(c) = same.mean.col(0);
  const Eigen::VectorXd mean_var = same.var.rowwise().mean();
  CHECK((ensemble::mixture_second_moment(same) - mean_var).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((ensemble::total_uncertainty(same) - mean_var).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("aggregation is exactly permutation invariant") {
  RngStream rng(3, 0);
  for (int i = 0; i < 200; ++i) {
    const bool nll = i % 2 == 0;
    const MemberOutputs o = random_outputs(rng, 2, 5, nll);
    std::vector<Eigen::Index> perm{0, 1, 2, 3, 4};
    std::shuffle(perm.begin(), perm.end(), rng.engine());
    const auto a = ensemble::aggregate(o, Reduction::mean);
    const auto b = ensemble::aggregate(permuted(o, perm), Reduction::mean);
    CHECK(a.action == b.action);
    CHECK(a.per_dim_uncertainty == b.per_dim_uncertainty);
    CHECK(a.u == b.u);
  }
}

TEST_CASE("identical members have zero epistemic spread") {
  RngStream rng(4, 0);
  ensemble::ActionModel m;
  m.loss_kind = ActionLoss::mse;
  m.state_dim = 2;
  m.action_dim = 1;
  m.params = nn::mlp_init(std::vector<int>{4, 16, 1}, nn::Activation::relu, rng);
  const auto ens = wrap({m, m, m}, 2, 1);
  for (int i = 0; i < 20; ++i) {
    const std::vector<double> s{rng.uniform(-1, 1), rng.uniform(-1, 1)};
    const std::vector<double> sn{rng.uniform(-1, 1), rng.uniform(-1, 1)};
    CHECK(ensemble::predict(ens, s, sn).u == 0.0);
  }
  CHECK_THROWS_AS(ensemble::predict(ens, std::vector<double>{0.0}, std::vector<double>{0.0, 0.0}), ShapeError);
}

TEST_CASE("nll uncertainty never drops below the variance floor") {
  RngStream rng(5, 0);
  std::vector<ensemble::ActionModel> members;
  for (int k = 0; k < 3; ++k) {
    ensemble::ActionModel m;
    m.loss_kind = ActionLoss::nll;
    m.state_dim = 2;
    m.action_dim = 1;
    m.params = nn::mlp_init(std::vector<int>{4, 8, 2}, nn::Activation::relu, rng);
    m.params.biases.back()[1] = -60.0;  // softplus underflows to the floor
    members.push_back(m);
  }
  members[1] = members[0];
  members[2] = members[0];
  const auto ens = wrap(members, 2, 1);
  for (int i = 0; i < 50; ++i) {
    const std::vector<double> s{rng.uniform(-1, 1), rng.uniform(-1, 1)};
    const auto p = ensemble::predict(ens, s, s);
    CHECK(p.u >= nn::kVarianceFloor);
  }
}

TEST_CASE("prefix selection") {
  RngStream rng(6, 0);
  std::vector<ensemble::ActionModel> members(4);
  for (auto& m : members) {
    m.state_dim = 1;
    m.action_dim = 1;
    m.params = nn::mlp_init(std::vector<int>{2, 4, 1}, nn::Activation::relu, rng);
  }
  const auto ens = wrap(members, 1, 1);
  const auto p = ens.prefix(3);
  REQUIRE(p.size() == 3u);
  for (std::size_t i = 0; i < 3; ++i) CHECK(p.members[i].params == ens.members[i].params);
  CHECK_THROWS_AS(ens.prefix(0), ConfigError);
  CHECK_THROWS_AS(ens.prefix(5), ConfigError);
}

TEST_CASE("loss and reduction names") {
  CHECK(ensemble::action_loss_from_string("mse") == ActionLoss::mse);
  CHECK(ensemble::reduction_from_string("max") == Reduction::max);
  CHECK_THROWS_AS(ensemble::action_loss_from_string("huber"), ConfigError);
  CHECK_THROWS_AS(ensemble::reduction_from_string("norm"), ConfigError);
}

TEST_CASE("members differ by seed and fit linear inverse dynamics") {
  RngStream data_rng(7, 0);
  const auto train = linear_pairs(4000, data_rng);
  const auto test = linear_pairs(500, data_rng);
  RngStream r0(8, 0), r1(8, 1);
  const auto a = ensemble::train_member(train, ActionLoss::mse, 2, small_config(2000), r0);
  const auto b = ensemble::train_member(train, ActionLoss::mse, 2, small_config(10), r1);
  CHECK_FALSE(a.params == b.params);
  const Eigen::MatrixXd pred = nn::mlp_forward_batch(a.params, test.inputs);
  const double rmse = std::sqrt((pred - test.targets).squaredNorm() / static_cast<double>(test.targets.size()));
  CHECK(rmse < 0.05);

  RngStream once(8, 0), twice(8, 0);
  CHECK(ensemble::train_member(train, ActionLoss::mse, 2, small_config(20), once).params ==
        ensemble::train_member(train, ActionLoss::mse, 2, small_config(20), twice).params);
  data::TransitionPairs empty;
  empty.inputs.resize(4, 0);
  empty.targets.resize(2, 0);
  CHECK_THROWS_AS(ensemble::train_member(empty, ActionLoss::mse, 2, small_config(1), r0), Error);
}

TEST_CASE("nll variance head tracks heteroscedastic noise") {
  RngStream rng(9, 0);
  const auto pairs = adaplan::testing::heteroscedastic_pairs(6000, rng);
  RngStream mrng(9, 1);
  const auto m = ensemble::train_member(pairs, ActionLoss::nll, 1, small_config(3000), mrng);
  std::vector<double> predicted, truth;
  for (int i = 0; i <= 100; ++i) {
    const double x = -1.0 + 0.02 * i;
    const std::vector<double> in{x, 0.0};
    const Eigen::VectorXd out = nn::mlp_forward(m.params, in);
    predicted.push_back(nn::softplus_var(out[1]));
    truth.push_back(adaplan::testing::heteroscedastic_true_var(x));
  }
  CHECK(adaplan::testing::spearman(predicted, truth) > 0.8);
}

TEST_CASE("ensemble checkpoint roundtrip") {
  RngStream drng(10, 0);
  const auto ds = data::generate_dataset(env::EnvSpec::double_integrator_2d(), data::DatasetTier::medium, 3, drng);
  RngStream rng(10, 1);
  auto ens = ensemble::train_ensemble(ds, ActionLoss::nll, 3, small_config(5), rng);
  CHECK(ens.size() == 3u);
  CHECK_FALSE(ens.members[0].params == ens.members[1].params);
  const auto dir = adaplan::testing::scratch_dir("ensemble_io");
  ensemble::save_ensemble(dir / "e.adpl", ens, 10);
  const auto back = ensemble::load_ensemble(dir / "e.adpl");
  REQUIRE(back.size() == 3u);
  CHECK(back.loss_kind() == ActionLoss::nll);
  CHECK(back.norm == ens.norm);
  for (std::size_t i = 0; i < 3; ++i) CHECK(back.members[i].params == nn::quantize_f32(ens.members[i].params));
}
