#include "idg/game.hpp"

#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace idg {

int GameDefinition::joint_control_dim() const {
  return std::accumulate(control_dims.begin(), control_dims.end(), 0);
}

int GameDefinition::control_offset(int player) const {
  return std::accumulate(control_dims.begin(), control_dims.begin() + player, 0);
}

int GameDefinition::stacked_parameter_dim() const {
  int p = 0;
  for (const auto& f : features) p += static_cast<int>(f.size());
  return p;
}

void GameDefinition::validate() const {
  if (!dynamics) throw std::invalid_argument("game has no dynamics");
  if (player_count() < 1) throw std::invalid_argument("need at least 1 player");
  if (state_dim() < 1) throw std::invalid_argument("state dimension must be >= 1");
  for (int i = 0; i < player_count(); ++i)
    if (control_dims[i] < 1)
      throw std::invalid_argument("player " + std::to_string(i + 1) +
                                  " has empty control space");
  if (horizon < 2) throw std::invalid_argument("horizon must be >= 2");
  if (dt <= 0) throw std::invalid_argument("sampling time must be positive");
  if (static_cast<int>(features.size()) != player_count())
    throw std::invalid_argument("one feature set per player required");
  for (int i = 0; i < player_count(); ++i)
    if (features[i].empty())
      throw std::invalid_argument("player " + std::to_string(i + 1) +
                                  " has no features");
  if (joint_control_dim() != dynamics->control_dim())
    throw std::invalid_argument("control widths do not match the dynamics");
}

void CostParameters::validate(const GameDefinition& game) const {
  if (static_cast<int>(theta.size()) != game.player_count())
    throw std::invalid_argument("one parameter vector per player required");
  for (int i = 0; i < game.player_count(); ++i) {
    if (theta[i].size() != game.feature_dim(i))
      throw std::invalid_argument(
          "player " + std::to_string(i + 1) + " expects " +
          std::to_string(game.feature_dim(i)) + " weights, got " +
          std::to_string(theta[i].size()));
    if (!theta[i].allFinite())
      throw std::invalid_argument("non-finite weight for player " +
                                  std::to_string(i + 1));
  }
}

Vector Trajectory::joint_controls(int k) const {
  int m = 0;
  for (const auto& c : controls) m += static_cast<int>(c.rows());
  Vector u(m);
  int off = 0;
  for (const auto& c : controls) {
    u.segment(off, c.rows()) = c.col(k);
    off += static_cast<int>(c.rows());
  }
  return u;
}

void Trajectory::validate_dims(const GameDefinition& game) const {
  if (states.rows() != game.state_dim())
    throw std::invalid_argument("trajectory state dimension " +
                                std::to_string(states.rows()) +
                                " does not match the game's " +
                                std::to_string(game.state_dim()));
  if (static_cast<int>(states.cols()) != game.horizon)
    throw std::invalid_argument("trajectory has " +
                                std::to_string(states.cols()) +
                                " steps, game horizon is " +
                                std::to_string(game.horizon));
  if (static_cast<int>(controls.size()) != game.player_count())
    throw std::invalid_argument("one control sequence per player required");
  for (int i = 0; i < game.player_count(); ++i) {
    if (controls[i].rows() != game.control_dims[i])
      throw std::invalid_argument("player " + std::to_string(i + 1) +
                                  " control dimension mismatch");
    if (controls[i].cols() != states.cols())
      throw std::invalid_argument("player " + std::to_string(i + 1) +
                                  " control horizon mismatch");
  }
}

double max_dynamics_residual(const GameDefinition& game,
                             const Trajectory& traj) {
  traj.validate_dims(game);
  double worst = 0.0;
  for (int k = 0; k + 1 < game.horizon; ++k) {
    const Vector next = game.dynamics->step(k, traj.states.col(k),
                                            traj.joint_controls(k));
    worst = std::max(worst,
                     (traj.states.col(k + 1) - next).cwiseAbs().maxCoeff());
  }
  return worst;
}

bool is_feasible(const GameDefinition& game, const Trajectory& traj) {
  const double scale = traj.states.cwiseAbs().maxCoeff();
  return max_dynamics_residual(game, traj) <= 1e-9 * (1.0 + scale);
}

Trajectory rollout(const GameDefinition& game,
                   const std::vector<Matrix>& controls, const Vector& x1) {
  if (x1.size() != game.state_dim())
    throw std::invalid_argument("initial state dimension mismatch");
  Trajectory traj;
  traj.controls = controls;
  traj.states.resize(game.state_dim(), game.horizon);
  traj.validate_dims(game);
  traj.states.col(0) = x1;
  for (int k = 0; k + 1 < game.horizon; ++k) {
    traj.states.col(k + 1) = game.dynamics->step(k, traj.states.col(k),
                                                 traj.joint_controls(k));
    if (!traj.states.col(k + 1).allFinite())
      throw std::runtime_error("rollout diverged at step k=" +
                               std::to_string(k + 2));
  }
  return traj;
}

Vector feature_count(const GameDefinition& game, const Trajectory& traj,
                     int player) {
  traj.validate_dims(game);
  if (player < 0 || player >= game.player_count())
    throw std::invalid_argument("no such player: " + std::to_string(player + 1));
  const auto& feats = game.features[player];
  Vector mu = Vector::Zero(feats.size());
  for (int k = 0; k < game.horizon; ++k) {
    const Vector u = traj.joint_controls(k);
    for (std::size_t q = 0; q < feats.size(); ++q)
      mu[q] += feats[q]->value(traj.states.col(k), u);
  }
  if (!mu.allFinite())
    throw std::runtime_error("non-finite feature count for player " +
                             std::to_string(player + 1));
  return mu;
}

double trajectory_cost(const GameDefinition& game, const Trajectory& traj,
                       const Vector& theta_i, int player) {
  if (theta_i.size() != game.feature_dim(player))
    throw std::invalid_argument("parameter length mismatch for player " +
                                std::to_string(player + 1));
  return -sequential_dot(theta_i, feature_count(game, traj, player));
}

StackedParameters stack_global(const std::vector<Vector>& theta) {
  StackedParameters out;
  int total = 0;
  for (const auto& t : theta) total += static_cast<int>(t.size());
  out.theta.resize(total);
  int off = 0;
  for (const auto& t : theta) {
    out.theta.segment(off, t.size()) = t;
    out.sizes.push_back(static_cast<int>(t.size()));
    off += static_cast<int>(t.size());
  }
  return out;
}

Vector stacked_feature_count(const GameDefinition& game,
                             const Trajectory& traj) {
  Vector mu(game.stacked_parameter_dim());
  int off = 0;
  for (int i = 0; i < game.player_count(); ++i) {
    const Vector mu_i = feature_count(game, traj, i);
    mu.segment(off, mu_i.size()) = mu_i;
    off += static_cast<int>(mu_i.size());
  }
  return mu;
}

double global_cost(const GameDefinition& game, const Trajectory& traj,
                   const StackedParameters& stacked) {
  if (static_cast<int>(stacked.sizes.size()) != game.player_count())
    throw std::invalid_argument("stacked parameters do not match the game");
  double total = 0.0;
  int off = 0;
  for (int i = 0; i < game.player_count(); ++i) {
    total += trajectory_cost(game, traj,
                             stacked.theta.segment(off, stacked.sizes[i]), i);
    off += stacked.sizes[i];
  }
  return total;
}

DemonstrationSet make_demonstration_set(const GameDefinition& game,
                                        std::vector<Trajectory> trajectories) {
  if (trajectories.empty())
    throw std::invalid_argument("demonstration set must not be empty");
  DemonstrationSet set;
  set.trajectories = std::move(trajectories);
  set.mean_feature_counts.resize(game.player_count());
  for (int i = 0; i < game.player_count(); ++i) {
    Vector mu = Vector::Zero(game.feature_dim(i));
    for (const auto& traj : set.trajectories)
      mu += feature_count(game, traj, i);
    set.mean_feature_counts[i] = mu / static_cast<double>(set.count());
  }
  return set;
}

Vector ExtendedFeatureMap::scatter(int player, const Vector& theta_i) const {
  Vector out = Vector::Zero(dim());
  const auto& emb = embedding[player];
  if (theta_i.size() != static_cast<Eigen::Index>(emb.size()))
    throw std::invalid_argument("parameter length mismatch in scatter");
  for (std::size_t q = 0; q < emb.size(); ++q) out[emb[q]] += theta_i[q];
  return out;
}

namespace {

// Disjoint-set over (player, feature index) nodes.
struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int size) : parent(size) {
    for (int i = 0; i < size; ++i) parent[i] = i;
  }
  int find(int a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  }
  void unite(int a, int b) { parent[find(a)] = find(b); }
};

}  // namespace

ExtendedFeatureMap build_extended_features(
    const GameDefinition& game,
    const std::vector<FeatureEquality>& equalities) {
  game.validate();
  std::vector<int> first_node(game.player_count());
  int total = 0;
  for (int i = 0; i < game.player_count(); ++i) {
    first_node[i] = total;
    total += game.feature_dim(i);
  }
  UnionFind uf(total);

  std::mt19937_64 rng(0x1d6u);
  std::normal_distribution<double> dist(0.0, 1.0);
  const int n = game.state_dim();
  const int m = game.joint_control_dim();
  for (const auto& eq : equalities) {
    auto check = [&](int player, int index) {
      if (player < 0 || player >= game.player_count() || index < 0 ||
          index >= game.feature_dim(player))
        throw std::invalid_argument("feature equality table references "
                                    "player " + std::to_string(player + 1) +
                                    ", feature " + std::to_string(index + 1) +
                                    " which does not exist");
    };
    check(eq.player_a, eq.index_a);
    check(eq.player_b, eq.index_b);
    const auto& fa = game.features[eq.player_a][eq.index_a];
    const auto& fb = game.features[eq.player_b][eq.index_b];
    for (int probe = 0; probe < 5; ++probe) {
      Vector x(n), u(m);
      for (int c = 0; c < n; ++c) x[c] = dist(rng);
      for (int c = 0; c < m; ++c) u[c] = dist(rng);
      const double va = fa->value(x, u);
      const double vb = fb->value(x, u);
      if (std::abs(va - vb) > 1e-12 * (1.0 + std::abs(va)))
        throw std::invalid_argument(
            "inconsistent feature equality: player " +
            std::to_string(eq.player_a + 1) + " feature " +
            std::to_string(eq.index_a + 1) + " differs from player " +
            std::to_string(eq.player_b + 1) + " feature " +
            std::to_string(eq.index_b + 1) + " at a probe point");
    }
    uf.unite(first_node[eq.player_a] + eq.index_a,
             first_node[eq.player_b] + eq.index_b);
  }

  ExtendedFeatureMap map;
  std::vector<int> slot(total, -1);
  map.embedding.resize(game.player_count());
  for (int i = 0; i < game.player_count(); ++i) {
    map.embedding[i].resize(game.feature_dim(i));
    for (int q = 0; q < game.feature_dim(i); ++q) {
      const int root = uf.find(first_node[i] + q);
      if (slot[root] < 0) {
        slot[root] = map.dim();
        map.extended.push_back(game.features[i][q]);
      }
      map.embedding[i][q] = slot[root];
    }
  }
  return map;
}

Vector extended_feature_count(const GameDefinition& game,
                              const ExtendedFeatureMap& map,
                              const Trajectory& traj) {
  traj.validate_dims(game);
  Vector mu = Vector::Zero(map.dim());
  for (int k = 0; k < game.horizon; ++k) {
    const Vector u = traj.joint_controls(k);
    for (int r = 0; r < map.dim(); ++r)
      mu[r] += map.extended[r]->value(traj.states.col(k), u);
  }
  return mu;
}

GameDefinition make_closed_loop_game(const GameDefinition& game,
                                     const std::vector<FeedbackLawPtr>& laws,
                                     int player) {
  game.validate();
  if (static_cast<int>(laws.size()) != game.player_count())
    throw std::invalid_argument("one law slot per player required");
  // The retained player's own law, if supplied, is ignored.
  std::vector<FeedbackLawPtr> others = laws;
  others[player] = nullptr;
  GameDefinition reduced;
  reduced.dynamics = std::make_shared<ClosedLoopDynamics>(
      game.dynamics, others, game.control_dims, player);
  reduced.control_dims = {game.control_dims[player]};
  reduced.horizon = game.horizon;
  reduced.dt = game.dt;
  reduced.features.resize(1);
  for (const auto& feature : game.features[player])
    reduced.features[0].push_back(std::make_shared<ClosedLoopFeature>(
        feature, others, game.control_dims, player, game.state_dim()));
  reduced.validate();
  return reduced;
}

Trajectory restrict_to_player(const Trajectory& traj, int player) {
  Trajectory out;
  out.states = traj.states;
  out.controls = {traj.controls.at(player)};
  return out;
}

// Benchmark games ------------------------------------------------------------

namespace {

std::vector<std::vector<FeaturePtr>> quadratic_feature_sets(
    int state_dim, const std::vector<int>& control_dims) {
  std::vector<std::vector<FeaturePtr>> sets(control_dims.size());
  int offset = 0;
  for (std::size_t i = 0; i < control_dims.size(); ++i) {
    for (int c = 0; c < state_dim; ++c)
      sets[i].push_back(std::make_shared<NegatedSquaredState>(c));
    for (int c = 0; c < control_dims[i]; ++c)
      sets[i].push_back(std::make_shared<NegatedSquaredControl>(offset, c));
    offset += control_dims[i];
  }
  return sets;
}

}  // namespace

GameDefinition make_ball_on_beam_game(int horizon, double dt,
                                      const BallOnBeamParams& params) {
  GameDefinition game;
  game.dynamics = std::make_shared<Rk4Dynamics>(
      std::make_shared<BallOnBeam>(params), dt);
  game.control_dims = {1, 1};
  game.horizon = horizon;
  game.dt = dt;
  game.features = quadratic_feature_sets(4, game.control_dims);
  game.validate();
  return game;
}

GameDefinition make_ball_on_beam_lq_game(int horizon, double dt,
                                         const BallOnBeamParams& params) {
  const LinearGameMatrices lin =
      discretize_exact(linearize_ball_on_beam(params), dt);
  return make_linear_quadratic_game(lin, horizon);
}

GameDefinition make_linear_quadratic_game(const LinearGameMatrices& lin,
                                          int horizon) {
  if (lin.dt <= 0 || lin.b_d.empty())
    throw std::invalid_argument("linear game matrices are not discretized");
  GameDefinition game;
  game.dynamics =
      std::make_shared<LinearDiscreteDynamics>(lin.a_d, lin.joint_b_d());
  for (const auto& bi : lin.b_d)
    game.control_dims.push_back(static_cast<int>(bi.cols()));
  game.horizon = horizon;
  game.dt = lin.dt;
  game.features = quadratic_feature_sets(lin.state_dim(), game.control_dims);
  game.validate();
  return game;
}

CostParameters ball_on_beam_true_parameters() {
  CostParameters params;
  Vector t1(5), t2(5);
  t1 << 20.0, 1.0, 1.0, 1.0, 2.0;
  t2 << 1.0, 1.0, 10.0, 1.0, 1.0;
  params.theta = {t1, t2};
  params.normalization = {{0, 4, 2.0}, {1, 4, 1.0}};
  return params;
}

Vector ball_on_beam_initial_state() {
  Vector x1(4);
  x1 << 0.5, 0.0, 0.0, 0.0;
  return x1;
}

std::vector<FeatureEquality> ball_on_beam_feature_equalities() {
  std::vector<FeatureEquality> eq;
  for (int c = 0; c < 4; ++c) eq.push_back({0, c, 1, c});
  return eq;
}

}  // namespace idg
