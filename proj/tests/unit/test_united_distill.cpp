#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "brownout/error.hpp"
#include "brownout/united_distill.hpp"
#include "support.hpp"

using namespace brownout;
using brownout::testing::random_expert;
using brownout::testing::ref_expert;

namespace {

// Loss written out directly from its definition.
double naive_loss(const ExpertFFN& u, const std::vector<ExpertFFN>& originals,
                  const std::vector<HiddenVector>& xs) {
  double total = 0.0;
  for (const auto& x : xs) {
    const auto yu = ref_expert(u, x);
    double per = 0.0;
    for (const auto& o : originals) {
      const auto yo = ref_expert(o, x);
      for (std::size_t j = 0; j < yu.size(); ++j) per += (yu[j] - yo[j]) * (yu[j] - yo[j]);
    }
    total += per / static_cast<double>(originals.size());
  }
  return total / static_cast<double>(xs.size());
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8}); }

}  // namespace

TEST_CASE("group_loss examples") {
  std::mt19937_64 rng(1);
  const auto xs = synthetic_tokens(16, 3, 9);
  const ExpertFFN a = random_expert(rng, 3, 4);
  CHECK(group_loss(a, std::vector<ExpertFFN>{a}, xs) == 0.0);
  CHECK(group_loss(a, std::vector<ExpertFFN>{a, a}, xs) == 0.0);

  // Linear experts producing y and -y; a zero united expert scores ||y||^2.
  ExpertFFN pos = random_expert(rng, 3, 3, Activation::kIdentity);
  ExpertFFN neg = pos;
  for (double& v : neg.down.data()) v = -v;
  ExpertFFN zero{Matrix(3, 3), Matrix(3, 3), Activation::kIdentity};
  double expected = 0.0;
  for (const auto& x : xs) {
    const auto y = ref_expert(pos, x);
    for (double v : y) expected += v * v;
  }
  expected /= static_cast<double>(xs.size());
  CHECK(group_loss(zero, std::vector<ExpertFFN>{pos, neg}, xs) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(group_loss_lower_bound(std::vector<ExpertFFN>{pos, neg}, xs) ==
        doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("group_loss matches the direct definition") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t k = 1 + rng() % 4;
    std::vector<ExpertFFN> originals;
    for (std::size_t i = 0; i < k; ++i) originals.push_back(random_expert(rng, 4, 5));
    const auto u = random_expert(rng, 4, 5);
    const auto xs = synthetic_tokens(20, 4, trial);
    CHECK(group_loss(u, originals, xs) == doctest::Approx(naive_loss(u, originals, xs)).epsilon(1e-12));
  }
}

TEST_CASE("analytic gradient matches central differences") {
  std::mt19937_64 rng(3);
  for (auto act : {Activation::kRelu, Activation::kIdentity}) {
    std::vector<ExpertFFN> originals;
    for (int i = 0; i < 3; ++i) originals.push_back(random_expert(rng, 3, 4, act));
    ExpertFFN u = random_expert(rng, 3, 4, act);
    const auto xs = synthetic_tokens(12, 3, 5);
    const auto grad = group_loss_gradient(u, originals, xs);
    const double eps = 1e-6;
    auto check = [&](Matrix ExpertFFN::*which, const Matrix& analytic) {
      for (std::size_t i = 0; i < analytic.data().size(); ++i) {
        ExpertFFN plus = u, minus = u;
        (plus.*which).data()[i] += eps;
        (minus.*which).data()[i] -= eps;
        const double fd = (group_loss(plus, originals, xs) - group_loss(minus, originals, xs)) / (2 * eps);
        CHECK(rel_err(fd, analytic.data()[i]) < 1e-4);
      }
    };
    check(&ExpertFFN::up, grad.up);
    check(&ExpertFFN::down, grad.down);
  }
}

TEST_CASE("loss ignores the order of originals") {
  std::mt19937_64 rng(4);
  std::vector<ExpertFFN> originals;
  for (int i = 0; i < 4; ++i) originals.push_back(random_expert(rng, 3, 3));
  const auto u = random_expert(rng, 3, 3);
  const auto xs = synthetic_tokens(10, 3, 1);
  const double base = group_loss(u, originals, xs);
  std::shuffle(originals.begin(), originals.end(), rng);
  CHECK(group_loss(u, originals, xs) == doctest::Approx(base).epsilon(1e-12));
  std::reverse(originals.begin(), originals.end());
  CHECK(group_loss(u, originals, xs) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("no united expert beats the variance floor") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<ExpertFFN> originals;
    const std::size_t k = 2 + rng() % 3;
    for (std::size_t i = 0; i < k; ++i) originals.push_back(random_expert(rng, 3, 4));
    const auto xs = synthetic_tokens(8, 3, trial);
    const double bound = group_loss_lower_bound(originals, xs);
    CHECK(group_loss(random_expert(rng, 3, 4), originals, xs) >= bound - 1e-12);
    CHECK(group_loss(originals[0], originals, xs) >= bound - 1e-12);
  }
}

TEST_CASE("identical experts distill to a near-zero loss") {
  std::mt19937_64 rng(6);
  const auto e = random_expert(rng, 4, 4);
  const std::vector<ExpertFFN> originals{e, e};
  const auto xs = synthetic_tokens(64, 4, 7);
  DistillConfig cfg;
  cfg.epochs = 2000;
  cfg.seed = 1;
  const auto [united, report] = distill_group(originals, xs, cfg);
  CHECK(report.final_loss < 1e-6);
  CHECK(group_loss(united, originals, xs) < 1e-6);
  CHECK(report.loss_curve.size() == cfg.epochs + 1);
  CHECK(report.loss_curve.front().epoch == 0);
}

TEST_CASE("linear pair distills to within 5% of the variance floor") {
  std::mt19937_64 rng(8);
  const std::vector<ExpertFFN> originals{random_expert(rng, 4, 4, Activation::kIdentity),
                                         random_expert(rng, 4, 4, Activation::kIdentity)};
  const auto xs = synthetic_tokens(64, 4, 9);
  DistillConfig cfg;
  cfg.epochs = 2000;
  cfg.learning_rate = 0.05;
  cfg.batch_size = 64;
  const auto [united, report] = distill_group(originals, xs, cfg);
  CHECK(report.lower_bound == doctest::Approx(group_loss_lower_bound(originals, xs)));
  CHECK(report.final_loss >= report.lower_bound - 1e-12);
  CHECK(report.final_loss <= 1.05 * report.lower_bound);
  CHECK(report.final_loss < report.initial_loss);
}

TEST_CASE("minibatch training is deterministic per seed") {
  std::mt19937_64 rng(10);
  const std::vector<ExpertFFN> originals{random_expert(rng, 3, 4), random_expert(rng, 3, 4)};
  const auto xs = synthetic_tokens(40, 3, 2);
  DistillConfig cfg;
  cfg.epochs = 50;
  cfg.batch_size = 8;
  cfg.seed = 3;
  const auto a = distill_group(originals, xs, cfg);
  const auto b = distill_group(originals, xs, cfg);
  CHECK(a.first == b.first);
  CHECK(a.second.final_loss == b.second.final_loss);
}

TEST_CASE("distillation errors") {
  std::mt19937_64 rng(11);
  const std::vector<ExpertFFN> originals{random_expert(rng, 3, 3)};
  CHECK_THROWS_AS(distill_group(originals, std::vector<HiddenVector>{}, DistillConfig{}), ParameterError);
  CHECK_THROWS_AS(distill_group(std::vector<ExpertFFN>{}, synthetic_tokens(4, 3, 1), DistillConfig{}),
                  ParameterError);
  DistillConfig bad;
  bad.learning_rate = 0.0;
  CHECK_THROWS_AS(bad.validate(), ParameterError);

  // A huge step size blows up the loss.
  DistillConfig wild;
  wild.learning_rate = 1e6;
  wild.epochs = 200;
  const std::vector<ExpertFFN> pair{random_expert(rng, 3, 3), random_expert(rng, 3, 3)};
  CHECK_THROWS_AS(distill_group(pair, synthetic_tokens(16, 3, 2), wild), TrainingError);
}

TEST_CASE("expert groups and layer distillation") {
  CHECK(expert_groups(8, 2).size() == 4);
  const auto g3 = expert_groups(8, 3);
  REQUIRE(g3.size() == 3);
  CHECK(g3[0].size() == 3);
  CHECK(g3[1].size() == 3);
  CHECK(g3[2] == std::vector<std::size_t>{6, 7});
  CHECK(expert_groups(8, 8).size() == 1);

  std::mt19937_64 rng(12);
  for (std::size_t k : {2u, 3u, 8u}) {
    const MoELayer layer = brownout::testing::random_layer(rng, 3, 4, 8, k, 2, 0, false);
    DistillConfig cfg;
    cfg.epochs = 5;
    const auto [out, reports] = distill_layer(layer, synthetic_tokens(16, 3, 4), cfg);
    CHECK(out.united_bank.size() == (8 + k - 1) / k);
    CHECK(reports.size() == out.united_bank.size());
    CHECK_NOTHROW(out.validate(true));
    for (std::size_t g = 0; g < reports.size(); ++g) CHECK(reports[g].group_id == g);
  }
}
