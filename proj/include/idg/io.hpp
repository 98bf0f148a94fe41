#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "idg/estimators.hpp"
#include "idg/evaluation.hpp"
#include "idg/game.hpp"
#include "idg/solvers.hpp"

namespace idg {

/// Writes `k,t,x1..xn,u1_1..u1_m1,...,uN_1..uN_mN` rows with t = (k-1) dt,
/// 17 significant digits (bit-exact round trip). The write is atomic
/// (temporary file + rename).
void write_trajectory_csv(const std::filesystem::path& path,
                          const Trajectory& traj, double dt);

struct TrajectoryFile {
  Trajectory trajectory;
  int state_dim = 0;
  std::vector<int> control_dims;
  double dt = 0.0;  // inferred from the t column (0 for single-row files)
};

/// Parses a trajectory CSV; dimensions are inferred from the header. Parse
/// failures name the offending line and column.
TrajectoryFile read_trajectory_csv(const std::filesystem::path& path);

void write_text_atomic(const std::filesystem::path& path,
                       const std::string& content);

std::string solver_report_json(const SolverReport& report);
std::string identification_result_json(const IdentificationResult& result);
std::string error_report_json(const ErrorReport& report);

}  // namespace idg
