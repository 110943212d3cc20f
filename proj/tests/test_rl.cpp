#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "oracles.hpp"
#include "pfdm/rl.hpp"

using namespace pfdm;

namespace {

FiniteMDP random_mdp(std::size_t ns, std::size_t na, Rng& g, std::vector<double>* rewards = nullptr,
                     oracle::Dense3* kernel = nullptr) {
  auto p = oracle::random_kernel(ns, na, g);
  std::vector<double> r(ns * na);
  for (auto& v : r) v = uniform(g, -1, 1);
  if (rewards) *rewards = r;
  if (kernel) *kernel = p;
  return FiniteMDP::from_dense(p, r);
}

}  // namespace

TEST(ValueIteration, ZeroRewardsGiveZeroTables) {
  Rng g(1);
  auto p = oracle::random_kernel(4, 3, g);
  const auto mdp = FiniteMDP::from_dense(p, std::vector<double>(12, 0.0));
  const auto d = geometric_discounts(0.9, 5);
  for (const auto& q : value_iteration(mdp, 5, d))
    for (double v : q.values()) EXPECT_EQ(v, 0.0);
}

TEST(ValueIteration, HorizonOneIsDiscountedReward) {
  Rng g(2);
  std::vector<double> r;
  const auto mdp = random_mdp(4, 3, g, &r);
  const std::vector<double> d{0.7};
  const auto q = value_iteration(mdp, 1, d);
  for (std::size_t x = 0; x < 4; ++x)
    for (std::size_t u = 0; u < 3; ++u) EXPECT_EQ(q[0].at(x, u), 0.7 * r[x * 3 + u]);
}

TEST(ValueIteration, MatchesTreeEnumeration) {
  Rng g(3);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> r;
    oracle::Dense3 p;
    const auto mdp = random_mdp(5, 3, g, &r, &p);
    std::vector<double> d(4);
    for (auto& v : d) v = uniform(g, 0.5, 1.0);
    const auto q = value_iteration(mdp, 4, d);
    for (std::size_t x = 0; x < 5; ++x)
      for (std::size_t u = 0; u < 3; ++u) ASSERT_NEAR(q[0].at(x, u), oracle::tree_q(p, r, 3, d, x, u, 0), 1e-10);
  }
}

TEST(ValueIteration, RewardShiftShiftsQByDiscountSum) {
  Rng g(4);
  std::vector<double> r;
  oracle::Dense3 p;
  const auto mdp = random_mdp(4, 2, g, &r, &p);
  for (auto& v : r) v += 2.5;
  const auto shifted = FiniteMDP::from_dense(p, r);
  const auto d = geometric_discounts(0.8, 6);
  const auto a = value_iteration(mdp, 6, d), b = value_iteration(shifted, 6, d);
  double sum = 0;
  for (double v : d) sum += v;
  for (std::size_t x = 0; x < 4; ++x)
    for (std::size_t u = 0; u < 2; ++u) EXPECT_NEAR(b[0].at(x, u) - a[0].at(x, u), 2.5 * sum, 1e-12);
}

TEST(QUpdate, SubstitutionExample) {
  QTable q(3, 2);
  EXPECT_EQ(q_update(q, 1, 0, -1.0, 2, 0.5, 0.99), -0.5);
}

TEST(QUpdate, ZeroAlphaAndFixedPointLeaveTable) {
  QTable q(3, 2);
  q.at(2, 1) = 4.0;
  q.at(0, 0) = 1.0;
  const auto before = q;
  q_update(q, 0, 0, 7.0, 2, 0.0, 0.9);
  EXPECT_TRUE(q == before);
  q.at(0, 1) = 0.5 + 0.9 * 4.0;
  const auto fixed = q;
  q_update(q, 0, 1, 0.5, 2, 0.3, 0.9);
  EXPECT_TRUE(q == fixed);
}

TEST(Updates, TouchExactlyOneEntry) {
  Rng g(5);
  QTable q(6, 4);
  for (std::size_t x = 0; x < 6; ++x)
    for (std::size_t u = 0; u < 4; ++u) q.at(x, u) = uniform(g, -1, 1);
  for (int i = 0; i < 200; ++i) {
    const std::size_t x = i % 6, u = i % 4, y = (i * 7) % 6, v = (i * 3) % 4;
    auto a = q, b = q;
    q_update(a, x, u, 0.3, y, 0.4, 0.9);
    sarsa_update(b, x, u, 0.3, y, v, 0.4, 0.9);
    for (std::size_t s = 0; s < 6; ++s)
      for (std::size_t c = 0; c < 4; ++c)
        if (s != x || c != u) {
          ASSERT_EQ(a.at(s, c), q.at(s, c));
          ASSERT_EQ(b.at(s, c), q.at(s, c));
        }
  }
}

TEST(Sarsa, SubstitutionExamples) {
  QTable q(2, 2);
  EXPECT_EQ(sarsa_update(q, 0, 0, 1.0, 1, 1, 0.5, 0.99), 0.5);
  QTable b(2, 2);
  b.at(1, 0) = 3.0;
  EXPECT_EQ(sarsa_update(b, 0, 1, 1.25, 1, 0, 1.0, 0.0), 1.25);
}

TEST(Sarsa, CoincidesWithQLearningOnGreedySuccessor) {
  Rng g(6);
  QTable q(3, 3);
  for (std::size_t x = 0; x < 3; ++x)
    for (std::size_t u = 0; u < 3; ++u) q.at(x, u) = uniform(g, -1, 1);
  auto a = q, b = q;
  q_update(a, 0, 2, 0.7, 1, 0.5, 0.99);
  sarsa_update(b, 0, 2, 0.7, 1, q.argmax(1), 0.5, 0.99);
  EXPECT_EQ(a.at(0, 2), b.at(0, 2));
}

TEST(Behavior, EpsilonGreedyMasses) {
  QTable q(1, 20);
  q.at(0, 5) = 1.0;
  const auto pf = behavior_policy(q, 0, Behavior::epsilon_greedy(0.9));
  EXPECT_NEAR(pf[5], 0.145, 1e-12);
  for (std::size_t u = 0; u < 20; ++u)
    if (u != 5) {
      EXPECT_NEAR(pf[u], 0.045, 1e-12);
    }
}

TEST(Behavior, GreedyTiesPickLowestIndex) {
  QTable q(1, 4);
  q.at(0, 1) = q.at(0, 3) = 2.0;
  EXPECT_EQ(behavior_policy(q, 0, Behavior::greedy()), DiscretePF::delta(4, 1));
}

TEST(Behavior, SoftmaxLimitsAndSymmetry) {
  QTable flat(1, 5, 3.0);
  for (double rho : {0.01, 1.0, 100.0}) {
    const auto pf = behavior_policy(flat, 0, Behavior::softmax(rho));
    for (std::size_t u = 0; u < 5; ++u) EXPECT_NEAR(pf[u], 0.2, 1e-15);
  }
  QTable q(1, 2);
  q.at(0, 0) = 1.0;
  EXPECT_NEAR(behavior_policy(q, 0, Behavior::softmax(1e-3))[0], 1.0, 1e-12);
  EXPECT_NEAR(behavior_policy(q, 0, Behavior::softmax(1e6))[0], 0.5, 1e-6);
  EXPECT_NEAR(behavior_policy(q, 0, Behavior::softmax(1.0))[0], std::exp(1.0) / (std::exp(1.0) + 1.0), 1e-15);
  EXPECT_THROW(behavior_policy(q, 0, Behavior::softmax(0.0)), InvalidInput);
}

TEST(Behavior, RowsNormalizedAndGreedyInvariantToShift) {
  Rng g(7);
  for (int i = 0; i < 300; ++i) {
    QTable q(1, 7);
    for (std::size_t u = 0; u < 7; ++u) q.at(0, u) = uniform(g, -50, 50);
    for (const auto& b : {Behavior::epsilon_greedy(uniform(g, 0, 1)), Behavior::softmax(uniform(g, 0.1, 10))}) {
      double s = 0;
      const auto pf = behavior_policy(q, 0, b);
      for (double p : pf.probs()) s += p;
      ASSERT_NEAR(s, 1.0, 1e-9);
    }
    const auto best = q.argmax(0);
    for (std::size_t u = 0; u < 7; ++u) q.at(0, u) += 123.0;
    ASSERT_EQ(q.argmax(0), best);
  }
}

TEST(Behavior, SamplerMatchesPf) {
  QTable q(1, 4);
  q.at(0, 2) = 1.0;
  const auto b = Behavior::epsilon_greedy(0.4);
  Rng rng(8);
  std::vector<int> count(4);
  const int n = 100000;
  for (int i = 0; i < n; ++i) ++count[sample_behavior(q, 0, b, rng)];
  const auto pf = behavior_policy(q, 0, b);
  for (std::size_t u = 0; u < 4; ++u) EXPECT_NEAR(double(count[u]) / n, pf[u], 0.01);
}

TEST(Train, ZeroEpisodesReturnsInitialTable) {
  const auto mdp = oracle::fixed_mdp();
  TrainConfig c;
  c.episodes = 0;
  c.checkpoints = {0};
  c.initial_q = 1.5;
  const auto res = train(MdpTask{&mdp}, c, 1);
  EXPECT_TRUE(res.q == QTable(5, 3, 1.5));
  ASSERT_EQ(res.snapshots.size(), 1u);
  EXPECT_TRUE(res.snapshots[0].q == res.q);
}

TEST(Train, QLearningConvergesOnFixedMdp) {
  const auto mdp = oracle::fixed_mdp();
  const auto star = value_iteration_infinite(mdp, 0.9);
  TrainConfig c;
  c.alpha = 0.1;
  c.gamma = 0.9;
  c.behavior = Behavior::epsilon_greedy(1.0);
  c.episodes = 1000;
  c.steps = 1000;
  c.checkpoints = {};
  const auto res = train(MdpTask{&mdp}, c, 5);
  double err = 0;
  for (std::size_t i = 0; i < star.values().size(); ++i) err = std::max(err, std::abs(res.q.values()[i] - star.values()[i]));
  EXPECT_LT(err, 0.05);
}

TEST(Train, SarsaAlsoLearnsFixedMdp) {
  const auto mdp = oracle::fixed_mdp();
  TrainConfig c;
  c.algorithm = Algorithm::sarsa;
  c.alpha = 0.1;
  c.gamma = 0.9;
  c.behavior = Behavior::epsilon_greedy(0.2);
  c.episodes = 200;
  c.steps = 1000;
  c.checkpoints = {};
  const auto res = train(MdpTask{&mdp}, c, 6);
  const auto star = value_iteration_infinite(mdp, 0.9);
  for (std::size_t x = 0; x < 5; ++x) EXPECT_EQ(res.q.argmax(x), star.argmax(x));
}

TEST(Train, SnapshotsAreDeterministicCopies) {
  const auto mdp = oracle::fixed_mdp();
  TrainConfig c;
  c.episodes = 30;
  c.steps = 20;
  c.checkpoints = {30, 5, 5, 10};
  const auto a = train(MdpTask{&mdp}, c, 9), b = train(MdpTask{&mdp}, c, 9);
  ASSERT_EQ(a.snapshots.size(), 3u);
  EXPECT_EQ(a.snapshots[0].episodes, 5u);
  EXPECT_EQ(a.snapshots[2].episodes, 30u);
  EXPECT_TRUE(a.snapshots[2].q == a.q);
  EXPECT_FALSE(a.snapshots[0].q == a.q);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_TRUE(a.snapshots[i].q == b.snapshots[i].q);
}

TEST(Train, ConfigValidation) {
  TrainConfig c;
  c.alpha = 1.0;
  EXPECT_THROW(c.validate(), InvalidInput);
  c = TrainConfig{};
  c.gamma = 1.5;
  EXPECT_THROW(c.validate(), InvalidInput);
  c = TrainConfig{};
  c.behavior = Behavior::epsilon_greedy(1.2);
  EXPECT_THROW(c.validate(), InvalidInput);
  c = TrainConfig{};
  c.checkpoints = {c.episodes + 1};
  EXPECT_THROW(c.validate(), InvalidInput);
}

namespace {
// zero torque; a perfect stabilizer when started upright without noise
struct HoldStill {
  double operator()(PendulumState, Rng&, RolloutLog&) const { return 0.0; }
};
}  // namespace

TEST(Evaluate, PerfectStabilizerHasZeroReward) {
  const auto p = PendulumParams{}.noise_free();
  EvalOptions o;
  o.start = {0.0, 0.0};
  o.n_episodes = 3;
  const auto r = evaluate(p, HoldStill{}, o);
  EXPECT_EQ(r.final_reward_mean, 0.0);
  EXPECT_EQ(r.final_abs_theta, 0.0);
}

TEST(Evaluate, ZeroTorqueFromDownwardIsStronglyNegative) {
  const PendulumParams p;
  EvalOptions o;
  o.n_episodes = 10;
  const auto r = evaluate(p, HoldStill{}, o);
  EXPECT_LT(r.final_reward_mean, -(std::numbers::pi - 0.5) * (std::numbers::pi - 0.5) * 0.5);
}

TEST(Evaluate, AggregatesEqualConcatenatedTrajectories) {
  const PendulumParams p;
  const QTable q(2500, 20);
  const auto sg = pendulum_state_grid(p), ag = pendulum_action_grid(p);
  EvalOptions o;
  o.n_episodes = 7;
  o.n_steps = 40;
  o.final_window = 10;
  const auto r = evaluate(p, GreedyController{&q, &sg, &ag}, o);
  for (std::size_t k = 0; k < 40; ++k) {
    double m = 0, s = 0;
    for (const auto& t : r.trajectories) m += t.theta[k];
    m /= 7;
    for (const auto& t : r.trajectories) s += (t.theta[k] - m) * (t.theta[k] - m);
    ASSERT_NEAR(r.theta.mean[k], m, 1e-12);
    ASSERT_NEAR(r.theta.stddev[k], std::sqrt(s / 7), 1e-12);
  }
  double total = 0;
  for (const auto& t : r.trajectories) {
    double a = 0;
    for (std::size_t k = 30; k < 40; ++k) a += t.reward[k];
    total += a / 10;
  }
  EXPECT_NEAR(r.final_reward_mean, total / 7, 1e-12);
}

TEST(Evaluate, TableControllerCountsFallbacks) {
  const PendulumParams p;
  const auto sg = pendulum_state_grid(p), ag = pendulum_action_grid(p);
  const PolicyTable empty(ConditionalPF(sg, ag, std::vector<Triple>{}));
  std::vector<Triple> t;
  for (std::size_t x = 0; x < sg.size(); ++x) t.push_back({x, 10, 1.0});
  const PolicyTable full(ConditionalPF(sg, ag, std::move(t)));
  EvalOptions o;
  o.n_episodes = 2;
  o.n_steps = 5;
  const auto a = evaluate(p, TableController{&empty}, o);
  EXPECT_EQ(a.fallbacks, 10u);
  const auto b = evaluate(p, TableController{&empty, &full}, o);
  EXPECT_EQ(b.fallbacks, 10u);
  for (const auto& tr : b.trajectories)
    for (double u : tr.torque) EXPECT_NEAR(u, ag.axis(0).center(10), 1e-15);
}

TEST(Evaluate, WorkerCountDoesNotChangeResults) {
  const PendulumParams p;
  const auto sg = pendulum_state_grid(p), ag = pendulum_action_grid(p);
  std::vector<Triple> t;
  for (std::size_t x = 0; x < sg.size(); ++x) {
    t.push_back({x, x % 20, 0.5});
    t.push_back({x, (x * 7 + 3) % 20 == x % 20 ? (x + 1) % 20 : (x * 7 + 3) % 20, 0.5});
  }
  const PolicyTable pol(ConditionalPF(sg, ag, std::move(t)));
  EvalOptions o;
  o.n_episodes = 9;
  o.n_steps = 30;
  o.seed = 4;
  const auto a = evaluate(p, TableController{&pol}, o);
  o.workers = 4;
  const auto b = evaluate(p, TableController{&pol}, o);
  for (std::size_t e = 0; e < 9; ++e) EXPECT_EQ(a.trajectories[e].torque, b.trajectories[e].torque);
}
