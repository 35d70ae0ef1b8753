#include "gyroid/homogenize/elasticity.hpp"
#include "gyroid/homogenize/sampling.hpp"
#include "gyroid/homogenize/voxel_homogenizer.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

using namespace gyroid;
using namespace gyroid::homogenize;

namespace {

const tpms::UnitCellField& field16() {
  static const auto f = tpms::UnitCellField::build(16, 2.5);
  return f;
}

double min_eigenvalue(const ElasticityTensor& c) { return eigenvalues(0.5 * (c + c.transpose()))[0]; }

}  // namespace

TEST(Elasticity, LameConstantsReproduceModulus) {
  const IsotropicMaterial m{114000.0, 0.3};
  const ElasticityTensor s = m.tensor().inverse();
  EXPECT_NEAR(1.0 / s(0, 0), 114000.0, 1e-6);
  EXPECT_NEAR(-s(0, 1) / s(0, 0), 0.3, 1e-12);
  EXPECT_NEAR(1.0 / s(3, 3), m.mu(), 1e-6);
}

TEST(Elasticity, BoneLawDerivative) {
  const BoneElasticityLaw law;
  for (double rho : {0.1, 0.8, 1.5}) {
    const double h = 1e-6;
    EXPECT_NEAR(law.modulus_derivative(rho), (law.modulus(rho + h) - law.modulus(rho - h)) / (2 * h), 1e-4);
    const ElasticityTensor fd = (law.tensor(rho + h) - law.tensor(rho - h)) / (2 * h);
    EXPECT_LT((law.tensor_derivative(rho) - fd).norm(), 1e-5 * fd.norm());
  }
  EXPECT_DOUBLE_EQ(law.modulus(1.0), 3790.0);
}

TEST(Elasticity, CubicDeviationOfIsotropicIsZero) {
  EXPECT_LT(cubic_deviation(IsotropicMaterial{1000.0, 0.3}.tensor()), 1e-15);
  ElasticityTensor c = IsotropicMaterial{1000.0, 0.3}.tensor();
  c(0, 0) *= 1.05;
  EXPECT_GT(cubic_deviation(c), 0.04);
}

TEST(Homogenizer, UniformSolidCellReproducesTitanium) {
  const auto ti = default_implant_material();
  const std::size_t n = 8;
  const VoxelHomogenizer hom(n, 2.5);
  const std::vector<double> lambda(n * n * n, ti.lambda()), mu(n * n * n, ti.mu());
  for (auto solver : {LinearSolver::conjugate_gradient, LinearSolver::direct}) {
    const auto r = hom.solve(lambda, mu, {solver, 1e-10, 20000});
    EXPECT_LT((r.C - ti.tensor()).cwiseAbs().maxCoeff() / ti.tensor().cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(Homogenizer, UniformBoneCellReproducesBone) {
  const auto bone = BoneElasticityLaw{}.material(0.7);
  const std::size_t n = 8;
  const VoxelHomogenizer hom(n, 2.5);
  const std::vector<double> lambda(n * n * n, bone.lambda()), mu(n * n * n, bone.mu());
  const auto r = hom.solve(lambda, mu);
  EXPECT_LT((r.C - bone.tensor()).cwiseAbs().maxCoeff() / bone.tensor().cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Homogenizer, LayeredCellMatchesLaminateBounds) {
  // Two-phase laminate stacked along z: the in-plane shear modulus is the
  // arithmetic mean and C33 the harmonic mean of the constrained moduli.
  const std::size_t n = 8;
  const IsotropicMaterial a{1000.0, 0.3}, b{100.0, 0.3};
  std::vector<double> lambda(n * n * n), mu(n * n * n);
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t i = 0; i < n; ++i) {
        const auto& m = k < n / 2 ? a : b;
        lambda[i + n * (j + n * k)] = m.lambda();
        mu[i + n * (j + n * k)] = m.mu();
      }
  const auto c = VoxelHomogenizer(n, 1.0).solve(lambda, mu, {LinearSolver::direct}).C;
  EXPECT_NEAR(c(5, 5), 0.5 * (a.mu() + b.mu()), 1e-8 * a.mu());
  EXPECT_NEAR(c(3, 3), 1.0 / (0.5 / a.mu() + 0.5 / b.mu()), 1e-8 * a.mu());
  const double ma = a.lambda() + 2 * a.mu(), mb = b.lambda() + 2 * b.mu();
  EXPECT_NEAR(c(2, 2), 1.0 / (0.5 / ma + 0.5 / mb), 1e-8 * ma);
}

TEST(Homogenizer, CgAndDirectAgree) {
  const auto params = tpms::ProjectionParams::for_field(field16());
  const auto [lambda, mu] = cell_lame_fields(0.5, 1.0, field16(), params, {});
  const VoxelHomogenizer hom(16, 2.5);
  const auto cg = hom.solve(lambda, mu, {LinearSolver::conjugate_gradient, 1e-10, 20000});
  const auto direct = hom.solve(lambda, mu, {LinearSolver::direct});
  EXPECT_LT((cg.C - direct.C).norm() / direct.C.norm(), 1e-7);
  EXPECT_EQ(cg.solver_used, LinearSolver::conjugate_gradient);
  EXPECT_LT(cg.relative_residual, 1e-9);
}

class SampledCell : public ::testing::TestWithParam<std::pair<double, double>> {};

TEST_P(SampledCell, TensorIsSoundAndCubic) {
  const auto [tau, rho] = GetParam();
  const auto params = tpms::ProjectionParams::for_field(field16());
  const auto [lambda, mu] = cell_lame_fields(tau, rho, field16(), params, {});
  const auto result = VoxelHomogenizer(16, 2.5).solve(lambda, mu);
  const auto& c = result.C;
  EXPECT_LT(result.raw_asymmetry, 1e-10);
  EXPECT_GT(min_eigenvalue(c), 0.0);
  const auto bounds = voigt_reuss_bounds(lambda, mu);
  EXPECT_GT(min_eigenvalue(bounds.voigt - c), -1e-8 * c.norm());
  EXPECT_GT(min_eigenvalue(c - bounds.reuss), -1e-8 * c.norm());
  EXPECT_LT(cubic_deviation(c), 0.02);
}

INSTANTIATE_TEST_SUITE_P(Grid, SampledCell,
                         ::testing::Values(std::make_pair(0.05, 0.05), std::make_pair(0.3, 1.92), std::make_pair(0.6, 0.5),
                                           std::make_pair(1.0, 1.2), std::make_pair(0.975, 0.05)));

TEST(Homogenizer, ConvergesWithFixedWindow) {
  // Doubling the voxel count with the projection window held fixed moves the
  // tensor by well under the discretisation differences seen at 16^3.
  const auto f24 = tpms::UnitCellField::build(24, 2.5);
  const auto f48 = tpms::UnitCellField::build(48, 2.5);
  tpms::ProjectionParams params;
  params.r = std::sqrt(3.0) * 2.5 / 24.0;
  const auto c24 = homogenize_cell(0.4235, 1.0, f24, params).C;
  const auto c48 = homogenize_cell(0.4235, 1.0, f48, params).C;
  EXPECT_LT(std::abs(c48(0, 0) - c24(0, 0)) / c48(0, 0), 0.03);
  EXPECT_LT(std::abs(c48(3, 3) - c24(3, 3)) / c48(3, 3), 0.03);
}

TEST(Homogenizer, StiffnessGrowsWithThicknessAndBone) {
  const auto params = tpms::ProjectionParams::for_field(field16());
  const auto c1 = homogenize_cell(0.3, 0.5, field16(), params).C;
  const auto c2 = homogenize_cell(0.6, 0.5, field16(), params).C;
  const auto c3 = homogenize_cell(0.6, 1.5, field16(), params).C;
  EXPECT_GT(c2(0, 0), c1(0, 0));
  EXPECT_GT(c3(0, 0), c2(0, 0));
}

TEST(Homogenizer, RejectsBadInput) {
  EXPECT_THROW(VoxelHomogenizer(2, 1.0), ConfigError);
  const auto params = tpms::ProjectionParams::for_field(field16());
  EXPECT_THROW(homogenize_cell(1.3, 1.0, field16(), params), DomainError);
  EXPECT_THROW(homogenize_cell(0.3, 0.0, field16(), params), DomainError);
}

TEST(Sampling, TableRoundTripsAndHashes) {
  const auto field = tpms::UnitCellField::build(8, 2.5);
  SamplingPlan plan;
  plan.levels = 2;
  plan.tau = {0.2, 0.8};
  plan.rho_b = {0.05, 1.92};
  const auto samples = sample_design_space(plan, field, tpms::ProjectionParams::for_field(field));
  ASSERT_EQ(samples.size(), 4u);
  EXPECT_DOUBLE_EQ(samples[1].tau, 0.2);
  EXPECT_DOUBLE_EQ(samples[1].rho_b, 1.92);
  const auto path = gyroid::testing::scratch_dir("homogenize") / "samples.csv";
  write_samples_csv(path, samples);
  const auto back = read_samples_csv(path);
  ASSERT_EQ(back.size(), samples.size());
  for (std::size_t i = 0; i < back.size(); ++i) EXPECT_LT((back[i].C - samples[i].C).norm(), 1e-9 * samples[i].C.norm());
  EXPECT_EQ(sample_table_hash(samples), sample_table_hash(samples));
  auto changed = samples;
  changed[0].C(0, 0) += 1.0;
  EXPECT_NE(sample_table_hash(changed), sample_table_hash(samples));
}

TEST(Sampling, PlanValidation) {
  SamplingPlan plan;
  plan.levels = 1;
  plan.tau = {0.1, 0.5};
  EXPECT_THROW(plan.validate(2.5), ConfigError);
  plan.levels = 3;
  plan.tau = {0.1, 1.3};
  EXPECT_THROW(plan.validate(2.5), ConfigError);
}
