#include "gyroid/optimize/baseline.hpp"
#include "gyroid/optimize/config.hpp"
#include "gyroid/optimize/mma.hpp"
#include "gyroid/optimize/report.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

using namespace gyroid;
using namespace gyroid::optimize;
using nlohmann::json;

namespace {

std::string error_of(const json& cfg) {
  try {
    build_problem(cfg, "/");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Config, ToyProblemLoads) {
  const auto p = load_problem(gyroid::testing::toy_config());
  EXPECT_EQ(p.growth.mesh->element_count(), 1000u);
  EXPECT_EQ(p.grid->size(), 27u);
  EXPECT_EQ(p.map->active().size(), 27u);
  EXPECT_EQ(p.growth.loads.size(), 1u);
  EXPECT_EQ(p.growth.constants.steps(), 14);
  EXPECT_DOUBLE_EQ(p.v_star, 0.5);
  EXPECT_EQ(p.config_hash.size(), 16u);
  const auto refined = load_problem(gyroid::testing::toy_config(), 2);
  EXPECT_EQ(refined.growth.mesh->element_count(), 8000u);
  EXPECT_EQ(refined.map->active().size(), 27u);
}

TEST(Config, MissingKeyIsNamed) {
  auto cfg = gyroid::testing::small_block_config();
  cfg.erase("control_grid");
  EXPECT_NE(error_of(cfg).find("control_grid"), std::string::npos) << error_of(cfg);
}

TEST(Config, ThinWallBelowManufacturingLimit) {
  auto cfg = gyroid::testing::small_block_config();
  cfg["tau_bounds_mm"] = {0.2, 0.9};
  EXPECT_NE(error_of(cfg).find("minimum wall"), std::string::npos) << error_of(cfg);
}

TEST(Config, ThickWallClosesThePore) {
  auto cfg = gyroid::testing::small_block_config();
  cfg["tau_bounds_mm"] = {0.3, 1.0};
  const auto msg = error_of(cfg);
  EXPECT_NE(msg.find("largest admissible tau_max"), std::string::npos) << msg;
}

TEST(Config, UnknownDensityKind) {
  auto cfg = gyroid::testing::small_block_config();
  cfg["bone_density"]["kind"] = "ct";
  EXPECT_NE(error_of(cfg).find("bone_density.kind"), std::string::npos);
}

TEST(Config, MissingFileAndBadJson) {
  EXPECT_THROW(load_problem("/nonexistent/config.json"), ConfigError);
  const auto path = gyroid::testing::scratch_dir("optimize") / "broken.json";
  std::ofstream(path) << "{ \"cell_size_mm\": ";
  EXPECT_THROW(load_problem(path), ConfigError);
}

TEST(Baseline, BisectionHitsTarget) {
  const auto p = gyroid::testing::small_block(4);
  for (double v : {0.4, 0.55, 0.8}) {
    const double tau = uniform_thickness_for(p, v);
    EXPECT_NEAR(uniform_volume_fraction(p, tau), v, 1e-4);
  }
}

TEST(Baseline, InfeasibleTargetCitesRange) {
  const auto p = gyroid::testing::small_block(4);
  const auto range = attainable_range(p);
  try {
    uniform_thickness_for(p, 0.1);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("not attainable"), std::string::npos);
  }
  EXPECT_THROW(uniform_thickness_for(p, range.hi + 0.01), ConfigError);
  EXPECT_NEAR(uniform_thickness_for(p, range.lo), p.grid->tau_min(), 1e-12);
}

TEST(MovingAsymptotes, SolvesSeparableConvexProblem) {
  // minimise sum c_i / x_i subject to sum x_i <= 3 on [0.1, 2]; the optimum is
  // x_i proportional to sqrt(c_i)
  const Eigen::Vector3d c(1.0, 4.0, 9.0);
  MovingAsymptotes mma(Eigen::Vector3d::Constant(0.1), Eigen::Vector3d::Constant(2.0));
  Eigen::VectorXd x = Eigen::Vector3d::Constant(0.5);
  auto g = [](const Eigen::VectorXd& v) { return v.sum() - 3.0; };
  for (int it = 0; it < 60; ++it) {
    const Eigen::VectorXd df = -(c.array() / x.array().square()).matrix();
    x = mma.propose(x, df, Eigen::VectorXd::Ones(3), g, 0.5);
    EXPECT_LE(g(x), 1e-9);
  }
  const Eigen::Vector3d expected = 3.0 * c.cwiseSqrt() / c.cwiseSqrt().sum();
  EXPECT_LT((x - expected).norm(), 1e-4) << x.transpose();
}

TEST(Optimize, PinnedWhenTargetEqualsThinnestDesign) {
  auto p = gyroid::testing::small_block(4, 600.0);
  p.v_star = attainable_range(p).lo;
  p.optimizer.max_iterations = 3;
  const auto trace = gyroid::optimize::optimize(p);
  for (const auto& t : trace.entries) {
    EXPECT_LE(t.v_f, p.v_star + p.optimizer.feasibility);
    EXPECT_LT((t.z.array() - p.grid->tau_min()).abs().maxCoeff(), 2e-3);
  }
}

TEST(Optimize, AcceptedIteratesImproveAndStayFeasible) {
  auto p = gyroid::testing::small_block(4, 600.0);
  p.optimizer.max_iterations = 4;
  const auto trace = gyroid::optimize::optimize(p);
  ASSERT_GE(trace.entries.size(), 2u);
  for (std::size_t i = 1; i < trace.entries.size(); ++i) {
    const auto& t = trace.entries[i];
    EXPECT_GE(t.m_f, trace.entries[i - 1].m_f);
    EXPECT_LE(t.v_f, p.v_star + p.optimizer.feasibility);
    EXPECT_GE(t.z.minCoeff(), p.grid->tau_min() - 1e-12);
    EXPECT_LE(t.z.maxCoeff(), p.grid->tau_max() + 1e-12);
  }
  // the run is deterministic
  const auto again = gyroid::optimize::optimize(p);
  ASSERT_EQ(again.entries.size(), trace.entries.size());
  EXPECT_EQ(again.best().z, trace.best().z);
}

TEST(Report, WritesAllArtifacts) {
  auto p = gyroid::testing::small_block(4, 600.0);
  p.optimizer.max_iterations = 1;
  p.output = gyroid::testing::scratch_dir("report");
  const auto trace = gyroid::optimize::optimize(p);
  const auto optimized = sensitivity::evaluate(p.growth, *p.map, trace.best().z, false);
  const auto uniform = run_uniform_baseline(p, optimized.v_f);
  const auto summary = write_optimization_report(p.output, p, trace, optimized, uniform);
  for (const char* f : {"trace.csv", "design_history.csv", "optimized.vtk", "uniform.vtk", "growth_history.csv",
                        "summary.csv", "summary.md", "manifest.json", "convergence_g_m.svg"})
    EXPECT_TRUE(std::filesystem::exists(p.output / f)) << f;
  EXPECT_EQ(read_design_csv(p.output / "design_history.csv"), trace.best().z);
  EXPECT_EQ(mech::read_vtk(p.output / "optimized.vtk").element_count(), p.growth.mesh->element_count());
  const auto manifest = json::parse(std::ifstream(p.output / "manifest.json"));
  EXPECT_EQ(manifest.at("config_hash").get<std::string>(), p.config_hash);
}
