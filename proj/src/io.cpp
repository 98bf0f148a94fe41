#include "idg/io.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace idg {

namespace {

std::string format_double(double v) {
  char buffer[40];
  std::snprintf(buffer, sizeof(buffer), "%.17g", v);
  return buffer;
}

}  // namespace

void write_text_atomic(const std::filesystem::path& path,
                       const std::string& content) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out)
      throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out << content;
  }
  std::filesystem::rename(tmp, path);
}

void write_trajectory_csv(const std::filesystem::path& path,
                          const Trajectory& traj, double dt) {
  std::ostringstream out;
  out << "k,t";
  for (Eigen::Index c = 0; c < traj.states.rows(); ++c)
    out << ",x" << c + 1;
  for (std::size_t i = 0; i < traj.controls.size(); ++i)
    for (Eigen::Index c = 0; c < traj.controls[i].rows(); ++c)
      out << ",u" << i + 1 << "_" << c + 1;
  out << "\n";
  for (int k = 0; k < traj.horizon(); ++k) {
    out << k + 1 << "," << format_double(k * dt);
    for (Eigen::Index c = 0; c < traj.states.rows(); ++c)
      out << "," << format_double(traj.states(c, k));
    for (const auto& controls : traj.controls)
      for (Eigen::Index c = 0; c < controls.rows(); ++c)
        out << "," << format_double(controls(c, k));
    out << "\n";
  }
  write_text_atomic(path, out.str());
}

TrajectoryFile read_trajectory_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());

  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error(path.string() + ": empty file");

  // Header: k,t,x1..xn,u<i>_<c>,...
  std::vector<std::string> headers;
  {
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) headers.push_back(tok);
  }
  if (headers.size() < 3 || headers[0] != "k" || headers[1] != "t")
    throw std::runtime_error(path.string() +
                             ": line 1: header must start with k,t");
  TrajectoryFile file;
  std::size_t col = 2;
  while (col < headers.size() && headers[col][0] == 'x') {
    ++file.state_dim;
    ++col;
  }
  if (file.state_dim == 0)
    throw std::runtime_error(path.string() +
                             ": line 1: no state columns found");
  while (col < headers.size()) {
    const std::string& h = headers[col];
    const auto underscore = h.find('_');
    if (h[0] != 'u' || underscore == std::string::npos)
      throw std::runtime_error(path.string() + ": line 1, column " +
                               std::to_string(col + 1) +
                               ": expected a u<i>_<c> header, got '" + h + "'");
    const int player = std::stoi(h.substr(1, underscore - 1));
    if (player == static_cast<int>(file.control_dims.size() + 1))
      file.control_dims.push_back(0);
    if (player != static_cast<int>(file.control_dims.size()))
      throw std::runtime_error(path.string() + ": line 1, column " +
                               std::to_string(col + 1) +
                               ": control headers out of order");
    ++file.control_dims.back();
    ++col;
  }
  if (file.control_dims.empty())
    throw std::runtime_error(path.string() +
                             ": line 1: no control columns found");

  std::vector<std::vector<double>> rows;
  int line_number = 1;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string tok;
    std::vector<double> row;
    int column = 0;
    while (std::getline(ss, tok, ',')) {
      ++column;
      try {
        std::size_t pos = 0;
        row.push_back(std::stod(tok, &pos));
        if (pos != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw std::runtime_error(path.string() + ": line " +
                                 std::to_string(line_number) + ", column " +
                                 std::to_string(column) +
                                 ": cannot parse '" + tok + "'");
      }
    }
    if (row.size() != headers.size())
      throw std::runtime_error(path.string() + ": line " +
                               std::to_string(line_number) + ", column " +
                               std::to_string(row.size() + 1) + ": expected " +
                               std::to_string(headers.size()) +
                               " values, got " + std::to_string(row.size()));
    rows.push_back(std::move(row));
  }
  if (rows.empty())
    throw std::runtime_error(path.string() + ": no data rows");

  const int k_e = static_cast<int>(rows.size());
  file.trajectory.states.resize(file.state_dim, k_e);
  for (int i = 0; i < static_cast<int>(file.control_dims.size()); ++i)
    file.trajectory.controls.push_back(Matrix(file.control_dims[i], k_e));
  for (int k = 0; k < k_e; ++k) {
    std::size_t c = 2;
    for (int s = 0; s < file.state_dim; ++s)
      file.trajectory.states(s, k) = rows[k][c++];
    for (auto& controls : file.trajectory.controls)
      for (Eigen::Index ch = 0; ch < controls.rows(); ++ch)
        controls(ch, k) = rows[k][c++];
  }
  if (k_e >= 2) file.dt = rows[1][1] - rows[0][1];
  return file;
}

namespace {

nlohmann::json to_json(const SolverReport& report) {
  return {{"converged", report.converged},
          {"iterations", report.iterations},
          {"residual", report.residual},
          {"objective", report.objective},
          {"message", report.message}};
}

}  // namespace

std::string solver_report_json(const SolverReport& report) {
  return to_json(report).dump(2) + "\n";
}

std::string identification_result_json(const IdentificationResult& result) {
  nlohmann::json j;
  j["scope"] = result.scope_tag;
  j["converged"] = result.converged;
  j["iterations"] = result.iterations;
  j["gradient_norm"] = result.grad_norm;
  j["log_likelihood"] = result.log_likelihood;
  j["d_variant"] =
      result.variant == JacobianVariant::kPlain ? "plain" : "trapezoid";
  j["players"] = nlohmann::json::array();
  for (std::size_t e = 0; e < result.theta.size(); ++e) {
    nlohmann::json entry;
    entry["player"] = result.players[e] + 1;
    entry["theta"] = std::vector<double>(
        result.theta[e].data(), result.theta[e].data() + result.theta[e].size());
    j["players"].push_back(entry);
  }
  if (result.theta.size() > 1) {
    std::vector<double> stacked;
    for (const auto& t : result.theta)
      stacked.insert(stacked.end(), t.data(), t.data() + t.size());
    j["theta_stacked"] = stacked;
  }
  j["fixed_weights"] = nlohmann::json::array();
  for (const auto& fw : result.fixed)
    j["fixed_weights"].push_back({{"player", fw.player + 1},
                                  {"index", fw.index + 1},
                                  {"value", fw.value}});
  return j.dump(2) + "\n";
}

std::string error_report_json(const ErrorReport& report) {
  nlohmann::json j;
  j["e_x"] = report.e_x;
  j["e_u"] = report.e_u;
  j["state_errors"] = std::vector<double>(
      report.state_errors.data(),
      report.state_errors.data() + report.state_errors.size());
  j["control_errors"] = nlohmann::json::array();
  for (const auto& errors : report.control_errors)
    j["control_errors"].push_back(
        std::vector<double>(errors.data(), errors.data() + errors.size()));
  return j.dump(2) + "\n";
}

}  // namespace idg
