#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <array>
#include <cmath>
#include <utility>

#include "dime/categorical.hpp"
#include "support.hpp"

using namespace dime;
using namespace dime::categorical;

namespace {

const OutcomeSchema kCat({OutcomeSpec::categorical("c", 3)});
const OutcomeSchema kMixed({OutcomeSpec::continuous("y1"), OutcomeSpec::categorical("c", 4),
                            OutcomeSpec::continuous("y3")});

CategoricalConfig small_config() {
  CategoricalConfig c;
  c.embedding = {8, {12}};
  c.hidden = {16};
  return c;
}

nn::ConditionBatch random_batch(std::size_t n, std::size_t target, Rng& rng) {
  nn::ConditionBatch b;
  b.x = nn::Matrix(3, static_cast<Eigen::Index>(n));
  b.y = nn::Matrix(3, static_cast<Eigen::Index>(n));
  b.target = target;
  std::normal_distribution<double> g;
  std::uniform_int_distribution<int> cat(1, 4);
  std::bernoulli_distribution coin(0.5);
  for (std::size_t c = 0; c < n; ++c) {
    const auto col = static_cast<Eigen::Index>(c);
    for (int i = 0; i < 3; ++i) b.x(i, col) = g(rng);
    b.y(0, col) = g(rng);
    b.y(1, col) = cat(rng);
    b.y(2, col) = g(rng);
    b.a.push_back(coin(rng));
    for (std::size_t i = 0; i < 3; ++i) b.mask.push_back(i != target && coin(rng));
  }
  return b;
}

double entropy(const std::array<double, 3>& p) {
  double h = 0.0;
  for (double v : p) h -= v * std::log(v);
  return h;
}

double total_variation(const nn::Vector& p, const nn::Vector& q) { return 0.5 * (p - q).cwiseAbs().sum(); }

}  // namespace

TEST_CASE("softmax and sample_category examples") {
  nn::Vector z(3);
  z << 0.0, 0.0, 0.0;
  const auto p = softmax(z);
  for (int i = 0; i < 3; ++i) CHECK(p(i) == doctest::Approx(1.0 / 3.0));
  z << 1000.0, 0.0, -1000.0;
  const auto q = softmax(z);
  CHECK(q(0) == doctest::Approx(1.0));
  CHECK(std::isfinite(q(2)));

  Rng rng(1);
  nn::Vector one_hot(3);
  one_hot << 1.0, 0.0, 0.0;
  for (int i = 0; i < 1000; ++i) CHECK(sample_category(one_hot, rng) == 1);
  one_hot << 0.0, 0.0, 1.0;
  for (int i = 0; i < 1000; ++i) CHECK(sample_category(one_hot, rng) == 3);

  nn::Vector half(2);
  half << 0.5, 0.5;
  int ones = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) ones += sample_category(half, rng) == 1;
  CHECK(std::abs(ones / static_cast<double>(n) - 0.5) < 0.03);
}

TEST_CASE("model construction") {
  CHECK_THROWS_AS(CategoricalModel(kMixed, 3, 0, small_config()), std::invalid_argument);
  CHECK_THROWS_AS(CategoricalModel(kMixed, 3, 5, small_config()), std::invalid_argument);
  CategoricalModel m(kMixed, 3, 1, small_config());
  CHECK(m.num_categories() == 4);
  CHECK(m.hyperparameters()["kind"] == "categorical");
  CHECK(m.hyperparameters()["num_categories"] == 4);
}

TEST_CASE("random initialization is close to uniform") {
  CategoricalModel m(kMixed, 3, 1, small_config());
  Rng rng(3);
  m.initialize(rng);
  const auto b = random_batch(200, 1, rng);
  const nn::Matrix p = m.probabilities(b);
  CHECK(p.rows() == 4);
  CHECK(p.cols() == 200);
  CHECK((p.array() - 0.25).abs().maxCoeff() < 0.2);
}

TEST_CASE("probabilities sum to one") {
  CategoricalModel m(kMixed, 3, 1, small_config());
  Rng rng(4);
  m.initialize(rng);
  std::normal_distribution<double> g;
  for (double& v : m.params().values()) v += 0.5 * g(rng);
  const auto b = random_batch(1000, 1, rng);
  const nn::Matrix p = m.probabilities(b);
  CHECK((p.colwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
  CHECK(p.minCoeff() >= 0.0);
}

TEST_CASE("saturated output layer") {
  CategoricalModel m(kMixed, 3, 1, small_config());
  Rng rng(5);
  m.initialize(rng);
  m.params().tensor(m.output_weight_slot()).setZero();
  auto bias = m.params().tensor(m.output_bias_slot());
  bias << 10.0, -10.0, -10.0, -10.0;
  const auto b = random_batch(50, 1, rng);
  const nn::Matrix p = m.probabilities(b);
  for (Eigen::Index c = 0; c < p.cols(); ++c) {
    CHECK(p(0, c) == doctest::Approx(1.0).epsilon(1e-4));
    for (Eigen::Index l = 1; l < 4; ++l) CHECK(p(l, c) < 1e-4);
  }
}

TEST_CASE("cross-entropy closed forms") {
  CategoricalModel m(kMixed, 3, 1, small_config());
  Rng rng(6);
  m.initialize(rng);
  m.params().tensor(m.output_weight_slot()).setZero();
  const auto b = random_batch(20, 1, rng);

  m.params().tensor(m.output_bias_slot()).setZero();
  std::vector<double> labels(20);
  std::uniform_int_distribution<int> cat(1, 4);
  for (auto& l : labels) l = cat(rng);
  CHECK(m.ce_loss(labels, b, nullptr) == doctest::Approx(std::log(4.0)).epsilon(1e-12));

  auto bias = m.params().tensor(m.output_bias_slot());
  bias << -1000.0, -1000.0, 1000.0, -1000.0;
  std::vector<double> threes(20, 3.0);
  CHECK(m.ce_loss(threes, b, nullptr) == doctest::Approx(0.0));
  CHECK(m.ce_loss(labels, b, nullptr) >= 0.0);

  bias << 0.0, 1.0, 2.0, 3.0;
  // Zero weights make every column the same softmax.
  const double lse = std::log(1.0 + std::exp(1.0) + std::exp(2.0) + std::exp(3.0));
  double expect = 0.0;
  for (double l : labels) expect += lse - (l - 1.0);
  CHECK(m.ce_loss(labels, b, nullptr) == doctest::Approx(expect / 20.0).epsilon(1e-12));
}

TEST_CASE("cross-entropy errors") {
  CategoricalModel m(kMixed, 3, 1, small_config());
  Rng rng(7);
  m.initialize(rng);
  const auto b = random_batch(3, 1, rng);
  CHECK_THROWS_AS(m.ce_loss({1, 2, 5}, b, nullptr), std::invalid_argument);
  CHECK_THROWS_AS(m.ce_loss({1, 0, 2}, b, nullptr), std::invalid_argument);
  CHECK_THROWS_AS(m.ce_loss({1, 2.5, 2}, b, nullptr), std::invalid_argument);
  CHECK_THROWS_AS(m.ce_loss({1, 2}, b, nullptr), std::invalid_argument);
  CHECK_THROWS_AS(cat_forward(m, b), std::invalid_argument);
}

TEST_CASE("cross-entropy gradients match finite differences") {
  CategoricalModel m(kMixed, 3, 1, small_config());
  Rng rng(8);
  m.initialize(rng);
  std::normal_distribution<double> g;
  for (double& v : m.params().values()) v += 0.1 * g(rng);
  const auto b = random_batch(12, 1, rng);
  std::vector<double> labels(12);
  std::uniform_int_distribution<int> cat(1, 4);
  for (auto& l : labels) l = cat(rng);

  const auto res = ce_loss(m, labels, b);
  CHECK(res.loss == doctest::Approx(m.ce_loss(labels, b, nullptr)));
  auto loss = [&] { return m.ce_loss(labels, b, nullptr); };
  const auto rep = testing::fd_check(m.params().values(), res.gradients.values(), loss, 150, 9);
  CHECK(rep.probes == 150);
  CHECK(rep.max_rel_error < 1e-4);

  // Accumulating twice doubles the gradient.
  nn::ParamStore twice = m.params().zeros_like();
  m.ce_loss(labels, b, &twice);
  m.ce_loss(labels, b, &twice);
  for (std::size_t i = 0; i < twice.size(); ++i)
    CHECK(twice.values()[i] == doctest::Approx(2.0 * res.gradients.values()[i]));
}

TEST_CASE("cat_sample frequencies follow cat_forward") {
  CategoricalModel m(kMixed, 3, 1, small_config());
  Rng rng(10);
  m.initialize(rng);
  std::normal_distribution<double> g;
  for (double& v : m.params().values()) v += 0.4 * g(rng);
  const auto cond = nn::ConditionBatch::single({0.3, -1.0, 0.5}, 1, {0.2, 2.0, -0.4}, {1, 0, 1}, 1);
  const nn::Vector pmf = cat_forward(m, cond);
  const std::size_t n = 20000;
  const auto draws = cat_sample(m, cond, n, rng);
  nn::Vector freq = nn::Vector::Zero(4);
  for (int d : draws) {
    REQUIRE(d >= 1);
    REQUIRE(d <= 4);
    freq(d - 1) += 1.0 / static_cast<double>(n);
  }
  CHECK(total_variation(freq, pmf) < 0.05);
  CHECK(cat_sample(m, cond, 0, rng).empty());

  Rng r1(99), r2(99);
  CHECK(cat_sample(m, cond, 100, r1) == cat_sample(m, cond, 100, r2));
}

TEST_CASE("training recovers a treatment-dependent pmf") {
  const std::array<std::array<double, 3>, 2> truth = {{{0.7, 0.2, 0.1}, {0.1, 0.3, 0.6}}};
  const std::size_t n = 10000;
  SlotTrainingData data;
  data.x = nn::Matrix(1, static_cast<Eigen::Index>(n));
  data.y = nn::Matrix(1, static_cast<Eigen::Index>(n));
  Rng rng(12);
  std::normal_distribution<double> g;
  std::bernoulli_distribution coin(0.5);
  int treated = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const int a = coin(rng);
    treated += a;
    data.a.push_back(a);
    const auto col = static_cast<Eigen::Index>(i);
    data.x(0, col) = g(rng);
    nn::Vector p(3);
    p << truth[a][0], truth[a][1], truth[a][2];
    data.y(0, col) = sample_category(p, rng);
  }
  const double q = treated / static_cast<double>(n);
  const double h_true = (1 - q) * entropy(truth[0]) + q * entropy(truth[1]);

  CategoricalModel m(kCat, 1, 0, small_config());
  SlotTrainingPlan plan;
  plan.target = 0;
  plan.orderings = build_orderings(1, 1, 0);
  plan.stages.assign(15, 0);
  TrainOptions opt;
  opt.seed = 13;
  opt.learning_rate = 3e-3;
  const auto trace = train_slot(m, data, plan, opt);
  REQUIRE(trace.size() == 15);
  CHECK(std::abs(trace.back() - h_true) < 0.05);

  for (int a : {0, 1}) {
    nn::Vector true_pmf(3);
    true_pmf << truth[a][0], truth[a][1], truth[a][2];
    double worst = 0.0;
    for (double x : {-1.5, 0.0, 1.5}) {
      const auto cond = nn::ConditionBatch::single({x}, a, {0.0}, {0}, 0);
      worst = std::max(worst, total_variation(cat_forward(m, cond), true_pmf));
    }
    CHECK(worst < 0.05);
  }
}

TEST_CASE("sample draws one valid category per column") {
  CategoricalModel m(kMixed, 3, 1, small_config());
  Rng rng(14);
  m.initialize(rng);
  const auto b = random_batch(500, 1, rng);
  const auto out = m.sample(b, rng);
  REQUIRE(out.size() == 500);
  for (double v : out) {
    CHECK(v == std::floor(v));
    CHECK(v >= 1);
    CHECK(v <= 4);
  }
}

TEST_CASE("weight averaging changes the installed weights, not the trace") {
  SlotTrainingData data;
  data.x = nn::Matrix::Zero(1, 300);
  data.y = nn::Matrix(1, 300);
  Rng rng(15);
  std::uniform_int_distribution<int> cat(1, 3);
  for (int i = 0; i < 300; ++i) {
    data.a.push_back(i % 2);
    data.y(0, i) = cat(rng);
  }
  SlotTrainingPlan plan;
  plan.orderings = build_orderings(1, 1, 0);
  plan.stages.assign(4, 0);
  TrainOptions raw;
  raw.batch_size = 32;
  TrainOptions avg = raw;
  avg.ema_decay = 0.99;
  CategoricalModel a(kCat, 1, 0, small_config()), b(kCat, 1, 0, small_config());
  CHECK(train_slot(a, data, plan, raw) == train_slot(b, data, plan, avg));
  const auto pa = std::as_const(a).params().values(), pb = std::as_const(b).params().values();
  CHECK_FALSE(std::equal(pa.begin(), pa.end(), pb.begin(), pb.end()));

  avg.ema_decay = 1.0;
  CHECK_THROWS_AS(train_slot(b, data, plan, avg), std::invalid_argument);
  avg.ema_decay = -0.1;
  CHECK_THROWS_AS(train_slot(b, data, plan, avg), std::invalid_argument);
}
