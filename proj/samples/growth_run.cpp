// Forward growth simulation of the toy problem for two uniform designs.
// Usage: sample_growth_run [config.json]

#include "gyroid/optimize/baseline.hpp"
#include "gyroid/optimize/config.hpp"

#include <cstdio>
#include <exception>

int main(int argc, char** argv) {
  using namespace gyroid;
  try {
    const auto p = optimize::load_problem(argc > 1 ? argv[1] : GYROID_SOURCE_DIR "/problems/toy_block.json");
    for (double tau : {p.grid->tau_min(), optimize::uniform_thickness_for(p, p.v_star)}) {
      const Eigen::VectorXd z = Eigen::VectorXd::Constant(static_cast<long>(p.grid->size()), tau);
      growth::Simulation sim(p.growth, growth::element_thickness(*p.growth.mesh, *p.map, z));
      const auto r = sim.run();
      std::printf("tau %.4f mm: m_f %.5f g, g_m %.2f %% after %d days\n", tau, r.m_f, r.g_m, r.steps);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
