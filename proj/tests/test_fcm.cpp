#include <cmath>
#include <limits>
#include <vector>

#include "doctest.h"

#include "ffcm/fcm.hpp"
#include "support.hpp"

using namespace ffcm;
using ffcm::testing::Gen;

namespace {

using Vec = StateVector<double>;
using Mat = AdjacencyMatrix<double>;

std::vector<Concept> plain_concepts(int n) {
  std::vector<Concept> out;
  for (int i = 0; i < n; ++i) out.push_back({"c" + std::to_string(i), ConceptRole::Input});
  return out;
}

FcmModel<double> plain_model(const Mat &w, Activation act = Activation::UnipolarSigmoid, double lambda = 1.0) {
  return FcmModel<double>(plain_concepts(static_cast<int>(w.rows())), w, act, lambda);
}

// One input and two outputs; weights are input -> first output, input -> second output.
FcmModel<double> tiny_classifier(double w1, double w2, double lambda = 1.0) {
  const std::vector<std::string> inputs = {"x"};
  Mat w = Mat::Zero(3, 3);
  w(0, 1) = w1;
  w(0, 2) = w2;
  return FcmModel<double>(classifier_concepts(inputs, "a", "b"), w, Activation::UnipolarSigmoid, lambda);
}

Vec vec(std::initializer_list<double> v) {
  Vec out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

}  // namespace

TEST_CASE("activate at known points") {
  CHECK(activate(0.0, Activation::UnipolarSigmoid, 1.0) == 0.5);
  CHECK(activate(0.0, Activation::HyperbolicTangent, 5.0) == 0.0);
  // 1 / (1 + e^-1), evaluated to 17 digits
  CHECK(activate(1.0, Activation::UnipolarSigmoid, 1.0) == doctest::Approx(0.7310585786300049).epsilon(1e-15));
  CHECK(activate(0.5, Activation::HyperbolicTangent, 2.0) == doctest::Approx(0.7615941559557649).epsilon(1e-15));
}

TEST_CASE("activate rejects bad arguments") {
  const double inf = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(activate(inf, Activation::UnipolarSigmoid, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(activate(std::nan(""), Activation::UnipolarSigmoid, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(activate(0.0, Activation::UnipolarSigmoid, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(activate(0.0, Activation::HyperbolicTangent, -1.0), std::invalid_argument);
}

TEST_CASE("activation is monotone for every steepness") {
  Gen gen(11);
  for (int trial = 0; trial < 2000; ++trial) {
    double x = gen.real(-20, 20), y = gen.real(-20, 20);
    if (x > y) std::swap(x, y);
    const double lambda = gen.real(1e-3, 50);
    for (auto act : {Activation::UnipolarSigmoid, Activation::HyperbolicTangent})
      CHECK(activate(x, act, lambda) <= activate(y, act, lambda));
  }
}

TEST_CASE("model construction validates its parts") {
  CHECK_THROWS_AS(plain_model(Mat::Zero(2, 3)), std::invalid_argument);
  CHECK_THROWS_AS(FcmModel<double>(plain_concepts(2), Mat::Zero(3, 3)), std::invalid_argument);
  Mat w = Mat::Zero(2, 2);
  w(0, 1) = 1.5;
  CHECK_THROWS_AS(plain_model(w), std::invalid_argument);
  CHECK_THROWS_AS(plain_model(Mat::Zero(2, 2), Activation::UnipolarSigmoid, 0.0), std::invalid_argument);
  CHECK(range_of<double>(Activation::HyperbolicTangent).lower == -1.0);
  CHECK(range_of<double>(Activation::UnipolarSigmoid).lower == 0.0);
}

TEST_CASE("step examples") {
  SUBCASE("zero matrix maps every free concept to one half") {
    const auto m = plain_model(Mat::Zero(3, 3));
    const Vec next = step(m, vec({0.1, 0.9, 0.4}), ClampedSet{});
    CHECK(next == Vec::Constant(3, 0.5));
  }
  SUBCASE("single arc with the source clamped") {
    Mat w = Mat::Zero(2, 2);
    w(0, 1) = 1.0;
    const auto m = plain_model(w);
    const std::vector<Eigen::Index> clamp = {0};
    const Vec next = step(m, vec({1.0, 0.0}), ClampedSet(2, clamp));
    CHECK(next[0] == 1.0);
    CHECK(next[1] == doctest::Approx(0.7310585786300049).epsilon(1e-15));
  }
  SUBCASE("clamping everything is the identity") {
    Gen gen(3);
    const auto m = plain_model(gen.matrix(4, 4));
    const Vec s = gen.vector(4, 0, 1);
    CHECK(step(m, s, ClampedSet::all(4)) == s);
  }
  SUBCASE("bad states are rejected") {
    const auto m = plain_model(Mat::Zero(2, 2));
    CHECK_THROWS_AS(step(m, vec({0.5}), ClampedSet{}), std::invalid_argument);
    CHECK_THROWS_AS(step(m, vec({0.5, 1.5}), ClampedSet{}), std::invalid_argument);
  }
}

TEST_CASE("step agrees with a scalar loop") {
  Gen gen(5);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = gen.integer(1, 7);
    const auto act = gen.coin() ? Activation::UnipolarSigmoid : Activation::HyperbolicTangent;
    const double lambda = gen.real(0.1, 5);
    const auto m = plain_model(gen.matrix(n, n), act, lambda);
    const auto r = range_of<double>(act);
    const Vec s = gen.vector(n, r.lower, r.upper);
    const Vec next = step(m, s, ClampedSet{});
    for (int i = 0; i < n; ++i) {
      double acc = 0;
      for (int j = 0; j < n; ++j) acc += m.adjacency()(j, i) * s[j];
      const double expected = act == Activation::UnipolarSigmoid ? 1 / (1 + std::exp(-lambda * acc)) : std::tanh(lambda * acc);
      CHECK(next[i] == doctest::Approx(expected).epsilon(1e-12));
    }
  }
}

TEST_CASE("step is range closed and preserves clamped concepts") {
  Gen gen(7);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = gen.integer(1, 8);
    const auto act = gen.coin() ? Activation::UnipolarSigmoid : Activation::HyperbolicTangent;
    const auto m = plain_model(gen.matrix(n, n), act, gen.real(0.01, 20));
    const auto r = m.range();
    const Vec s = gen.vector(n, r.lower, r.upper);
    std::vector<Eigen::Index> idx;
    for (int i = 0; i < n; ++i)
      if (gen.coin()) idx.push_back(i);
    const ClampedSet clamped(n, idx);
    const Vec next = step(m, s, clamped);
    CHECK(in_range(m, next));
    for (auto i : idx) CHECK(next[i] == s[i]);
  }
}

TEST_CASE("run_dynamics outcomes") {
  SUBCASE("zero matrix settles at one half within two iterations") {
    const auto m = plain_model(Mat::Zero(4, 4));
    const auto out = run_dynamics(m, vec({0.0, 1.0, 0.3, 0.8}), ClampedSet{}, 1e-5, 100);
    CHECK(out.kind == OutcomeKind::FixedPoint);
    CHECK(out.period == 1);
    CHECK(out.iterations <= 2);
    CHECK(out.final_state == Vec::Constant(4, 0.5));
  }
  SUBCASE("everything clamped is a fixed point after one iteration") {
    Gen gen(1);
    const auto m = plain_model(gen.matrix(3, 3));
    const Vec s = gen.vector(3, 0, 1);
    const auto out = run_dynamics(m, s, ClampedSet::all(3), 1e-5, 100);
    CHECK(out.kind == OutcomeKind::FixedPoint);
    CHECK(out.iterations == 1);
    CHECK(out.final_state == s);
  }
  SUBCASE("swap matrix under steep tanh cycles with period two") {
    Mat w(2, 2);
    w << 0, 1, 1, 0;
    const auto m = plain_model(w, Activation::HyperbolicTangent, 10.0);
    const Vec s0 = vec({1.0, -1.0});

    // Independent iteration: find the first t at which the state is within
    // tol of an earlier state other than its predecessor.
    std::vector<Vec> trail = {s0};
    int observed = 0;
    for (int t = 1; t <= 10 && observed == 0; ++t) {
      const Vec &p = trail.back();
      Vec n(2);
      n << std::tanh(10.0 * p[1]), std::tanh(10.0 * p[0]);
      for (int k = 0; k + 1 < t; ++k)
        if ((n - trail[static_cast<std::size_t>(k)]).cwiseAbs().maxCoeff() < 1e-5) observed = t - k;
      trail.push_back(n);
    }
    REQUIRE(observed == 2);

    const auto out = run_dynamics(m, s0, ClampedSet{}, 1e-5, 100);
    CHECK(out.kind == OutcomeKind::LimitCycle);
    CHECK(out.period == observed);
  }
  SUBCASE("budget exhaustion") {
    const auto m = plain_model(Mat::Zero(1, 1));
    const auto out = run_dynamics(m, vec({0.0}), ClampedSet{}, 1e-5, 1);
    CHECK(out.kind == OutcomeKind::Exhausted);
    CHECK(out.final_state[0] == 0.5);
  }
  SUBCASE("argument checks") {
    const auto m = plain_model(Mat::Zero(1, 1));
    CHECK_THROWS_AS(run_dynamics(m, vec({0.0}), ClampedSet{}, 0.0, 10), std::invalid_argument);
    CHECK_THROWS_AS(run_dynamics(m, vec({0.0}), ClampedSet{}, 1e-5, 0), std::invalid_argument);
  }
}

TEST_CASE("run_dynamics is deterministic") {
  Gen gen(13);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = gen.integer(2, 6);
    const auto m = plain_model(gen.matrix(n, n), Activation::HyperbolicTangent, gen.real(0.5, 8));
    const Vec s = gen.vector(n, -1, 1);
    const auto a = run_dynamics(m, s, ClampedSet{}, 1e-5, 100);
    const auto b = run_dynamics(m, s, ClampedSet{}, 1e-5, 100);
    CHECK(a.kind == b.kind);
    CHECK(a.period == b.period);
    CHECK(a.iterations == b.iterations);
    CHECK(a.final_state == b.final_state);
  }
}

TEST_CASE("readout compares the two output states") {
  CHECK(readout(0.03, 0.1) == ClassLabel::Class2);
  CHECK(readout(0.1, 0.03) == ClassLabel::Class1);
  CHECK(readout(0.4, 0.4) == ClassLabel::Class1);
}

TEST_CASE("classify reaches the worked output states") {
  // Weights chosen so that a unit input drives the outputs to 0.03 and 0.1.
  const double lambda = 5.0;
  const double w1 = std::log(0.03 / 0.97) / lambda;
  const double w2 = std::log(0.1 / 0.9) / lambda;
  const auto m = tiny_classifier(w1, w2, lambda);

  Vec s = vec({1.0, 0.0, 0.0});
  const std::vector<Eigen::Index> clamp = {0};
  const auto out = run_dynamics(m, s, ClampedSet(3, clamp), 1e-5, 100);
  CHECK(out.final_state[1] == doctest::Approx(0.03).epsilon(1e-12));
  CHECK(out.final_state[2] == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(classify(m, vec({1.0})) == ClassLabel::Class2);
}

TEST_CASE("classify examples") {
  SUBCASE("identical incoming weights tie and go to the first class") {
    CHECK(classify(tiny_classifier(0.7, 0.7), vec({0.9})) == ClassLabel::Class1);
    CHECK(classify(tiny_classifier(-0.2, -0.2), vec({0.3})) == ClassLabel::Class1);
  }
  SUBCASE("positive weights into the first output only") {
    Gen gen(17);
    const std::vector<std::string> inputs = {"x0", "x1", "x2", "x3"};
    for (int trial = 0; trial < 100; ++trial) {
      Mat w = Mat::Zero(6, 6);
      for (int j = 0; j < 4; ++j) w(j, 4) = gen.real(0.01, 1);
      const FcmModel<double> m(classifier_concepts(inputs, "a", "b"), w);
      CHECK(classify(m, gen.vector(4, 0.01, 1)) == ClassLabel::Class1);
    }
  }
  SUBCASE("feature length and model shape are checked") {
    const auto m = tiny_classifier(0.1, 0.2);
    CHECK_THROWS_AS(classify(m, vec({0.1, 0.2})), std::invalid_argument);
    CHECK_THROWS_AS(classify(plain_model(Mat::Zero(3, 3)), vec({0.1})), std::invalid_argument);
  }
}

TEST_CASE("classify ignores a shift shared by both outputs") {
  Gen gen(19);
  int checked = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const int n_in = gen.integer(1, 6);
    const int n = n_in + 2;
    Mat w = Mat::Zero(n, n);
    for (int j = 0; j < n_in; ++j) {
      w(j, n_in) = gen.real(-0.5, 0.5);
      w(j, n_in + 1) = gen.real(-0.5, 0.5);
    }
    const auto concepts = classifier_concepts(ffcm::testing::names(n_in), "a", "b");
    const FcmModel<double> base(concepts, w);
    Mat shifted = w;
    for (int j = 0; j < n_in; ++j) {
      const double u = gen.real(-0.5, 0.5);
      shifted(j, n_in) += u;
      shifted(j, n_in + 1) += u;
    }
    const FcmModel<double> moved(concepts, shifted);
    const Vec x = gen.vector(n_in, 0, 1);

    // Skip near-ties, where rounding in the shifted sums can decide the class.
    const Vec pre = w.transpose() * [&] {
      Vec s = Vec::Zero(n);
      s.head(n_in) = x;
      return s;
    }();
    if (std::abs(pre[n_in] - pre[n_in + 1]) < 1e-9) continue;
    ++checked;
    CHECK(classify(base, x) == classify(moved, x));
  }
  CHECK(checked > 400);
}

TEST_CASE("evaluate_accuracy counts correct predictions") {
  // Input 1 drives the second output up, input 0 ties and reads as the first.
  const auto m = tiny_classifier(-1.0, 1.0);
  REQUIRE(classify(m, vec({1.0})) == ClassLabel::Class2);
  REQUIRE(classify(m, vec({0.0})) == ClassLabel::Class1);

  std::vector<LabeledSample<double>> samples;
  for (int i = 0; i < 11; ++i) samples.push_back({vec({1.0}), i < 8 ? ClassLabel::Class2 : ClassLabel::Class1});
  for (int i = 0; i < 11; ++i) samples.push_back({vec({0.0}), i < 9 ? ClassLabel::Class1 : ClassLabel::Class2});
  // 8 + 9 correct out of 22
  CHECK(evaluate_accuracy<double>(m, samples) == doctest::Approx(0.7727272727272727).epsilon(1e-15));

  std::vector<LabeledSample<double>> perfect, inverted;
  for (const auto &s : samples) {
    const auto p = classify(m, s.features);
    perfect.push_back({s.features, p});
    inverted.push_back({s.features, p == ClassLabel::Class1 ? ClassLabel::Class2 : ClassLabel::Class1});
  }
  CHECK(evaluate_accuracy<double>(m, perfect) == 1.0);
  CHECK(evaluate_accuracy<double>(m, inverted) == 0.0);
  CHECK_THROWS_AS(evaluate_accuracy<double>(m, std::span<const LabeledSample<double>>{}), std::invalid_argument);
}

TEST_CASE("single precision instantiation") {
  AdjacencyMatrix<float> w = AdjacencyMatrix<float>::Zero(2, 2);
  w(0, 1) = 1.0f;
  const FcmModel<float> m(plain_concepts(2), w);
  StateVector<float> s(2);
  s << 1.0f, 0.0f;
  const std::vector<Eigen::Index> clamp = {0};
  const auto next = step(m, s, ClampedSet(2, clamp));
  CHECK(next[1] == doctest::Approx(0.7310586f).epsilon(1e-6));
}
