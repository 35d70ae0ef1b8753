#include "gyroid/sensitivity/direct.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <chrono>
#include <numeric>
#include <random>

using namespace gyroid;
using gyroid::testing::relative_error;

namespace {

Eigen::VectorXd jittered(const optimize::Problem& p, double tau, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.05, 0.05);
  Eigen::VectorXd z(long(p.grid->size()));
  for (long i = 0; i < z.size(); ++i) z[i] = tau + u(rng);
  return z;
}

std::vector<std::size_t> all_points(const optimize::Problem& p) {
  std::vector<std::size_t> v(p.grid->size());
  std::iota(v.begin(), v.end(), 0);
  return v;
}

}  // namespace

TEST(Sensitivity, MatchesCentralDifferences) {
  const auto p = gyroid::testing::small_block(6, 600.0);
  const auto z = jittered(p, 0.5, 1);
  const auto ev = sensitivity::evaluate(p.growth, *p.map, z, true);
  ASSERT_GT(ev.m_f, 0.0);
  const auto fd = sensitivity::finite_difference(p.growth, *p.map, z, all_points(p), 1e-4);
  const double scale = ev.dm_f.lpNorm<Eigen::Infinity>();
  for (long i = 0; i < z.size(); ++i) EXPECT_LT(relative_error(ev.dm_f[i], fd[i], 1e-3 * scale), 1e-4) << i;
}

TEST(Sensitivity, MultipleLoadCasesAndBoneGrowth) {
  auto cfg = gyroid::testing::small_block_config(4, 500.0);
  auto second = cfg["loads"][0];
  second["name"] = "stairs";
  second["cycles_per_day"] = 2000;
  second["force_N"] = {150, 0, -400};
  cfg["loads"].push_back(second);
  const auto p = optimize::build_problem(cfg, "/");
  ASSERT_EQ(p.growth.loads.size(), 2u);
  const auto z = jittered(p, 0.6, 2);
  const auto ev = sensitivity::evaluate(p.growth, *p.map, z, true);
  const auto fd = sensitivity::finite_difference(p.growth, *p.map, z, all_points(p), 1e-4);
  const double scale = ev.dm_f.lpNorm<Eigen::Infinity>();
  for (long i = 0; i < z.size(); ++i) EXPECT_LT(relative_error(ev.dm_f[i], fd[i], 1e-3 * scale), 1e-4) << i;
}

TEST(Sensitivity, ZeroLoadHasZeroGradient) {
  const auto p = gyroid::testing::small_block(4, 0.0);
  const auto ev = sensitivity::evaluate(p.growth, *p.map, jittered(p, 0.5, 3), true);
  EXPECT_EQ(ev.m_f, 0.0);
  EXPECT_EQ(ev.dm_f.lpNorm<Eigen::Infinity>(), 0.0);
}

TEST(Sensitivity, SymmetricProblemHasSymmetricGradient) {
  // the block, load and density field are symmetric under x -> 12 - x
  const auto p = gyroid::testing::small_block(6, 600.0);
  const auto& g = *p.grid;
  Eigen::VectorXd z(long(g.size()));
  for (std::size_t k = 0; k < 2; ++k)
    for (std::size_t j = 0; j < 2; ++j)
      for (std::size_t i = 0; i < 2; ++i) z[long(g.index(i, j, k))] = 0.4 + 0.1 * double(j) + 0.2 * double(k);
  const auto ev = sensitivity::evaluate(p.growth, *p.map, z, true);
  for (std::size_t k = 0; k < 2; ++k)
    for (std::size_t j = 0; j < 2; ++j)
      EXPECT_NEAR(ev.dm_f[long(g.index(0, j, k))], ev.dm_f[long(g.index(1, j, k))], 1e-8 * ev.dm_f.norm());
}

TEST(Sensitivity, VolumeGradientComesFromTheDesignMap) {
  const auto p = gyroid::testing::small_block(4);
  const auto z = jittered(p, 0.5, 4);
  const auto ev = sensitivity::evaluate(p.growth, *p.map, z, false);
  const auto vf = design::volume_fraction(z, *p.map, *p.growth.surrogate);
  EXPECT_EQ(ev.v_f, vf.value);
  EXPECT_EQ(ev.dv_f, vf.gradient);
}

TEST(Sensitivity, CostGrowsLinearlyWithVariables) {
  auto time_of = [](std::size_t grid) {
    const auto p = gyroid::testing::small_block(6, 600.0, grid);
    const Eigen::VectorXd z = Eigen::VectorXd::Constant(long(p.grid->size()), 0.5);
    sensitivity::evaluate(p.growth, *p.map, z, false);
    const auto t0 = std::chrono::steady_clock::now();
    const auto plain = sensitivity::evaluate(p.growth, *p.map, z, false);
    const auto t1 = std::chrono::steady_clock::now();
    const auto full = sensitivity::evaluate(p.growth, *p.map, z, true);
    const auto t2 = std::chrono::steady_clock::now();
    return std::make_pair(std::chrono::duration<double>(t1 - t0).count(), std::chrono::duration<double>(t2 - t1).count());
  };
  const auto [f8, g8] = time_of(2);    // 8 variables
  const auto [f27, g27] = time_of(3);  // 27 variables
  const double extra8 = std::max(g8 - f8, 1e-3), extra27 = std::max(g27 - f27, 1e-3);
  // the sensitivity overhead scales at most linearly in the variable count
  EXPECT_LT(extra27 / extra8, 27.0 / 8.0 * 1.5);
}
