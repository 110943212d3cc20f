#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "pfdm/io.hpp"
#include "pfdm/pf.hpp"

using namespace pfdm;
using std::numbers::pi;

namespace {

Grid line(double lo, double hi, std::size_t bins, Boundary b = Boundary::clip) {
  return Grid("g", {Axis{lo, hi, bins, b}});
}

DiscretePF random_pf(std::size_t n, Rng& rng, double zero_prob = 0.0) {
  std::vector<double> w(n);
  for (auto& v : w) v = uniform(rng, 0.0, 1.0) < zero_prob ? 0.0 : uniform(rng, 0.01, 1.0);
  if (std::all_of(w.begin(), w.end(), [](double v) { return v == 0.0; })) w[0] = 1.0;
  return DiscretePF::from_weights(w);
}

}  // namespace

TEST(Grid, ClipSaturatesAtBothEnds) {
  const auto g = line(-5, 5, 50);
  EXPECT_EQ(g.quantize({-5.0}), 0u);
  EXPECT_EQ(g.quantize({5.0}), 49u);
  EXPECT_EQ(g.quantize({-1e9}), 0u);
  EXPECT_EQ(g.quantize({1e9}), 49u);
}

TEST(Grid, WrapIdentifiesThreeHalvesPiWithMinusHalfPi) {
  const auto g = line(-pi, pi, 4, Boundary::wrap);
  EXPECT_EQ(g.quantize({1.5 * pi}), g.quantize({-0.5 * pi}));
  EXPECT_EQ(g.quantize({pi}), g.quantize({-pi}));
}

TEST(Grid, HandArithmeticCellAndCenter) {
  const auto g = line(-1, 1, 20);
  EXPECT_EQ(g.quantize({0.0}), 10u);
  EXPECT_NEAR(g.center_of(10)[0], 0.05, 1e-15);
}

TEST(Grid, NonFiniteInputIsRejected) {
  const auto g = line(-1, 1, 20);
  EXPECT_THROW(g.quantize({std::nan("")}), InvalidInput);
  EXPECT_THROW(g.quantize({INFINITY}), InvalidInput);
}

TEST(Grid, InvalidBoxesAreRejected) {
  EXPECT_THROW(line(1, 1, 3), InvalidInput);
  EXPECT_THROW(line(2, 1, 3), InvalidInput);
  EXPECT_THROW(line(0, 1, 0), InvalidInput);
}

TEST(Grid, CenterRoundTripOnEveryCell) {
  const std::vector<Grid> grids{
      line(-5, 5, 50),
      Grid("p", {Axis{-pi, pi, 50, Boundary::wrap}, Axis{-5, 5, 50, Boundary::clip}}),
      Grid("m", {Axis{0, 1, 3, Boundary::clip}, Axis{-2, 7, 4, Boundary::wrap}, Axis{10, 11, 5, Boundary::clip}}),
  };
  for (const auto& g : grids)
    for (std::size_t i = 0; i < g.size(); ++i) {
      const auto c = g.center_of(i);
      ASSERT_EQ(g.quantize(c), i);
      ASSERT_EQ(g.flatten(g.unflatten(i)), i);
    }
}

TEST(Grid, FlatteningIsRowMajor) {
  const Grid g("p", {Axis{0, 3, 3, Boundary::clip}, Axis{0, 4, 4, Boundary::clip}});
  const std::size_t idx[] = {2, 1};
  EXPECT_EQ(g.flatten(idx), 2u * 4 + 1);
  const auto prod = Grid::product("xu", line(0, 1, 5), line(0, 1, 7));
  EXPECT_EQ(prod.quantize({0.5, 0.99}), 2u * 7 + 6);
}

TEST(Grid, BinWidthIsUniform) {
  const Axis a{-pi, pi, 50, Boundary::wrap};
  for (std::size_t k = 0; k + 1 < 50; ++k) EXPECT_NEAR(a.center(k + 1) - a.center(k), 2 * pi / 50, 1e-12);
}

TEST(DiscretePF, RejectsUnnormalizedDuplicateAndOutOfRange) {
  EXPECT_THROW(DiscretePF(3, std::vector<std::size_t>{0, 1}, std::vector<double>{0.5, 0.4}), InvalidInput);
  EXPECT_THROW(DiscretePF(3, std::vector<std::size_t>{1, 1}, std::vector<double>{0.5, 0.5}), InvalidInput);
  EXPECT_THROW(DiscretePF(3, std::vector<std::size_t>{0, 3}, std::vector<double>{0.5, 0.5}), InvalidInput);
  EXPECT_THROW(DiscretePF(3, std::vector<std::size_t>{0, 1}, std::vector<double>{1.5, -0.5}), InvalidInput);
  EXPECT_NO_THROW(DiscretePF(3, std::vector<std::size_t>{0, 1}, std::vector<double>{0.5, 0.5 + 5e-10}));
}

TEST(ConditionalPF, AbsentRowIsAllZeroNotAnError) {
  const auto g = line(0, 1, 4);
  const ConditionalPF t(g, g, std::vector<Triple>{{1, 2, 1.0}});
  EXPECT_TRUE(t.row(0).empty());
  EXPECT_TRUE(t.row(3).empty());
  EXPECT_EQ(t.row(1), DiscretePF::delta(4, 2));
  EXPECT_EQ(t.observed_rows(), 1u);
}

TEST(KL, IdenticalPfsGiveExactlyZero) {
  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    const auto p = random_pf(7, rng, 0.3);
    EXPECT_EQ(kl_divergence(p, p), 0.0);
  }
}

TEST(KL, TwoCellHandValue) {
  const double want = 0.5 * std::log(0.5 / 0.25) + 0.5 * std::log(0.5 / 0.75);
  EXPECT_NEAR(kl_divergence(DiscretePF::from_dense({0.5, 0.5}), DiscretePF::from_dense({0.25, 0.75})), want, 1e-15);
  EXPECT_NEAR(want, 0.14384103622589045, 1e-15);
}

TEST(KL, FloorReplacesMissingSupport) {
  const double kl = kl_divergence(DiscretePF::from_dense({1, 0}), DiscretePF::from_dense({0, 1}), 1e-9);
  EXPECT_NEAR(kl, std::log(1e9), 1e-12);
  EXPECT_NEAR(kl, 20.72, 0.005);
  EXPECT_THROW(kl_divergence(DiscretePF::from_dense({1, 0}), DiscretePF::from_dense({0, 1}), 0.0), InvalidInput);
  EXPECT_THROW(kl_divergence(DiscretePF::from_dense({1, 0}), DiscretePF::from_dense({0, 0, 1})), GridMismatch);
}

TEST(KL, GibbsInequalityOnRandomPairs) {
  Rng rng(11);
  for (int i = 0; i < 2000; ++i) {
    const auto g = random_pf(6, rng);
    const auto phi = random_pf(6, rng, 0.4);
    // direct formula
    double direct = 0.0;
    for (std::size_t c = 0; c < 6; ++c)
      if (phi[c] > 0) direct += phi[c] * std::log(phi[c] / g[c]);
    const double kl = kl_divergence(phi, g);
    ASSERT_GE(kl, 0.0);
    ASSERT_NEAR(kl, direct, 1e-12);
  }
}

TEST(Sample, DeltaAlwaysReturnsItsCell) {
  Rng rng(1);
  const auto d = DiscretePF::delta(10, 7);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(sample(d, rng), 7u);
}

TEST(Sample, FairCoinFrequencyWithinThreeSigma) {
  Rng rng(5);
  const auto p = DiscretePF::from_dense({0.5, 0.5});
  int zeros = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) zeros += sample(p, rng) == 0;
  EXPECT_NEAR(double(zeros) / n, 0.5, 0.01);
}

TEST(Sample, EmptyRowIsUnsampleable) {
  Rng rng(1);
  EXPECT_THROW(sample(DiscretePF(), rng), Unsampleable);
}

TEST(Sample, SameSeedSameSequence) {
  const auto p = DiscretePF::uniform(13);
  Rng a(99), b(99);
  for (int i = 0; i < 500; ++i) ASSERT_EQ(sample(p, a), sample(p, b));
}

TEST(Mix, EndpointsAreIdentities) {
  Rng rng(2);
  const auto a = random_pf(8, rng, 0.3), b = random_pf(8, rng, 0.3);
  EXPECT_EQ(mix(a, b, 0.0), a);
  EXPECT_EQ(mix(a, b, 1.0), b);
  EXPECT_THROW(mix(a, b, 1.5), InvalidInput);
  EXPECT_THROW(mix(a, b, -0.1), InvalidInput);
}

TEST(Mix, EpsilonGreedyArithmetic) {
  const auto m = mix(DiscretePF::delta(20, 0), DiscretePF::uniform(20), 0.9);
  EXPECT_NEAR(m[0], 0.145, 1e-12);
  for (std::size_t c = 1; c < 20; ++c) EXPECT_NEAR(m[c], 0.045, 1e-12);
  double s = 0;
  for (auto p : m.probs()) s += p;
  EXPECT_NEAR(s, 1.0, 1e-12);
}

TEST(Mix, AffineAndNormalizedOnRandomPairs) {
  Rng rng(4);
  for (int i = 0; i < 500; ++i) {
    const auto a = random_pf(9, rng, 0.5), b = random_pf(9, rng, 0.5);
    const double w = uniform(rng, 0, 1);
    const auto m = mix(a, b, w);
    double s = 0;
    for (std::size_t c = 0; c < 9; ++c) {
      ASSERT_NEAR(m[c], (1 - w) * a[c] + w * b[c], 1e-15);
      s += m[c];
    }
    ASSERT_NEAR(s, 1.0, 1e-9);
  }
}

TEST(Serialization, ConditionalRoundTripIsBitExact) {
  Rng rng(8);
  const Grid cg("xu", {Axis{-pi, pi, 5, Boundary::wrap}, Axis{-1.5, 2.25, 3, Boundary::clip}});
  const Grid og("x", {Axis{-pi, pi, 7, Boundary::wrap}});
  std::vector<DiscretePF> rows;
  for (std::size_t c = 0; c < cg.size(); ++c)
    rows.push_back(c % 4 == 1 ? DiscretePF(7, std::vector<std::size_t>{}, std::vector<double>{}) : random_pf(7, rng, 0.5));
  const ConditionalPF t(cg, og, rows);
  std::stringstream ss;
  io::write_conditional(ss, t);
  const auto back = io::read_conditional(ss);
  EXPECT_TRUE(back == t);
  EXPECT_EQ(back.cond_grid().name(), "xu");
  for (std::size_t c = 0; c < cg.size(); ++c) ASSERT_EQ(back.row(c), t.row(c));
}

TEST(Serialization, HeaderAndMalformedInput) {
  const auto g = line(0, 1, 2);
  std::stringstream ss;
  io::write_conditional(ss, ConditionalPF(g, g, std::vector<Triple>{{0, 1, 1.0}}));
  EXPECT_NE(ss.str().find("cond_cell,out_cell,prob"), std::string::npos);
  EXPECT_NE(ss.str().find("# grid g dims=1"), std::string::npos);
  std::stringstream bad("# grid g dims=1 lower=0 upper=1 bins=2 bounds=clip\nnot,a,table\n");
  EXPECT_THROW(io::read_conditional(bad), InvalidInput);
}
