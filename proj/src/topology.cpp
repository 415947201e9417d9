#include "diffnet/topology.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <sstream>

#include "diffnet/error.hpp"
#include "diffnet/rng.hpp"

namespace diffnet {

TopologyKind parse_topology_kind(const std::string& name) {
  if (name == "complete") return TopologyKind::complete;
  if (name == "ring") return TopologyKind::ring;
  if (name == "grid") return TopologyKind::grid;
  if (name == "random") return TopologyKind::random;
  if (name == "star") return TopologyKind::star;
  throw InvalidArgument("unknown topology kind '" + name + "'");
}

std::string to_string(TopologyKind kind) {
  switch (kind) {
    case TopologyKind::complete: return "complete";
    case TopologyKind::ring: return "ring";
    case TopologyKind::grid: return "grid";
    case TopologyKind::random: return "random";
    case TopologyKind::star: return "star";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Graph

Graph::Graph(std::vector<std::vector<std::size_t>> neighbors) : neighbors_(std::move(neighbors)) {}

bool is_connected(const std::vector<std::vector<std::size_t>>& neighbors) {
  if (neighbors.empty()) return false;
  std::vector<bool> seen(neighbors.size(), false);
  std::queue<std::size_t> frontier;
  frontier.push(0);
  seen[0] = true;
  std::size_t visited = 1;
  while (!frontier.empty()) {
    const auto k = frontier.front();
    frontier.pop();
    for (const auto l : neighbors[k]) {
      if (!seen[l]) {
        seen[l] = true;
        ++visited;
        frontier.push(l);
      }
    }
  }
  return visited == neighbors.size();
}

namespace {

std::vector<std::vector<std::size_t>> adjacency_from_edges(
    std::size_t agents, const std::vector<std::pair<std::size_t, std::size_t>>& edges) {
  std::vector<std::vector<std::size_t>> nb(agents);
  for (std::size_t k = 0; k < agents; ++k) nb[k].push_back(k);
  for (const auto& [a, b] : edges) {
    if (a >= agents || b >= agents) {
      throw InvalidArgument("edge endpoint out of range");
    }
    nb[a].push_back(b);
    nb[b].push_back(a);
  }
  for (auto& list : nb) {
    std::sort(list.begin(), list.end());
    list.erase(std::unique(list.begin(), list.end()), list.end());
  }
  return nb;
}

}  // namespace

Graph Graph::from_edges(std::size_t agents,
                        const std::vector<std::pair<std::size_t, std::size_t>>& edges) {
  if (agents == 0) throw InvalidArgument("graph needs at least one agent");
  auto nb = adjacency_from_edges(agents, edges);
  if (!is_connected(nb)) throw InvalidArgument("graph is disconnected");
  return Graph(std::move(nb));
}

Graph Graph::from_pattern(const Eigen::MatrixXd& matrix) {
  if (matrix.rows() != matrix.cols() || matrix.rows() == 0) {
    throw InvalidArgument("pattern matrix must be square and non-empty");
  }
  const auto n = static_cast<std::size_t>(matrix.rows());
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (std::size_t l = 0; l < n; ++l) {
    for (std::size_t k = 0; k < n; ++k) {
      if (l != k && matrix(l, k) != 0.0) edges.emplace_back(l, k);
    }
  }
  return from_edges(n, edges);
}

bool Graph::adjacent(std::size_t l, std::size_t k) const {
  const auto& list = neighbors_.at(k);
  return std::binary_search(list.begin(), list.end(), l);
}

bool Graph::is_regular() const {
  return std::all_of(neighbors_.begin(), neighbors_.end(),
                     [&](const auto& list) { return list.size() == neighbors_.front().size(); });
}

Graph build_graph(TopologyKind kind, std::size_t agents, const TopologyParams& params) {
  if (agents == 0) throw InvalidArgument("agent count must be positive");
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  switch (kind) {
    case TopologyKind::complete:
      for (std::size_t a = 0; a < agents; ++a)
        for (std::size_t b = a + 1; b < agents; ++b) edges.emplace_back(a, b);
      break;
    case TopologyKind::ring:
      for (std::size_t a = 0; a < agents; ++a) edges.emplace_back(a, (a + 1) % agents);
      break;
    case TopologyKind::star:
      for (std::size_t a = 1; a < agents; ++a) edges.emplace_back(0, a);
      break;
    case TopologyKind::grid: {
      const auto& dims = params.grid_dims;
      if (dims.empty() || std::any_of(dims.begin(), dims.end(), [](auto d) { return d == 0; })) {
        throw InvalidArgument("grid dimensions must be non-empty and positive");
      }
      const auto product = std::accumulate(dims.begin(), dims.end(), std::size_t{1},
                                           std::multiplies<>());
      if (product != agents) {
        throw InvalidArgument("grid dimensions multiply to " + std::to_string(product) +
                              ", expected " + std::to_string(agents));
      }
      // Row-major coordinates; connect neighbors along each axis (no wrap).
      std::size_t stride = 1;
      for (std::size_t axis = dims.size(); axis-- > 0;) {
        for (std::size_t a = 0; a < agents; ++a) {
          const auto coord = (a / stride) % dims[axis];
          if (coord + 1 < dims[axis]) edges.emplace_back(a, a + stride);
        }
        stride *= dims[axis];
      }
      break;
    }
    case TopologyKind::random: {
      if (!(params.edge_probability > 0.0 && params.edge_probability <= 1.0)) {
        throw InvalidArgument("edge probability must lie in (0, 1]");
      }
      for (int attempt = 0; attempt < params.max_retries; ++attempt) {
        KeyedStream stream(params.seed, stream_tag::kGraph, static_cast<std::uint64_t>(attempt));
        edges.clear();
        for (std::size_t a = 0; a < agents; ++a)
          for (std::size_t b = a + 1; b < agents; ++b)
            if (stream.uniform() < params.edge_probability) edges.emplace_back(a, b);
        auto nb = adjacency_from_edges(agents, edges);
        if (is_connected(nb)) return Graph::from_edges(agents, edges);
      }
      throw InvalidArgument("random graph still disconnected after " +
                            std::to_string(params.max_retries) + " draws");
    }
  }
  return Graph::from_edges(agents, edges);
}

// ---------------------------------------------------------------------------
// Noise profile

NoiseProfile NoiseProfile::uniform(std::size_t agents, double sigma_sq, double sigma_lower_sq) {
  NoiseProfile profile{std::vector<double>(agents, sigma_sq),
                       std::vector<double>(agents, sigma_lower_sq)};
  profile.validate();
  return profile;
}

void NoiseProfile::validate() const {
  if (sigma_sq.size() != sigma_lower_sq.size()) {
    throw InvalidArgument("noise profile: upper and lower bound lists differ in length");
  }
  for (std::size_t k = 0; k < sigma_sq.size(); ++k) {
    if (!(sigma_sq[k] > 0.0) || !std::isfinite(sigma_sq[k])) {
      throw InvalidArgument("noise profile: sigma_sq must be positive (agent " +
                            std::to_string(k) + ")");
    }
    if (!(sigma_lower_sq[k] > 0.0) || sigma_lower_sq[k] > sigma_sq[k]) {
      throw InvalidArgument("noise profile: need 0 < sigma_lower_sq <= sigma_sq (agent " +
                            std::to_string(k) + ")");
    }
  }
}

// ---------------------------------------------------------------------------
// Validation

std::string to_string(PolicyViolation::Kind kind) {
  switch (kind) {
    case PolicyViolation::Kind::dimension: return "dimension";
    case PolicyViolation::Kind::negative_entry: return "non-negativity";
    case PolicyViolation::Kind::column_sum: return "column-sum";
    case PolicyViolation::Kind::sparsity: return "sparsity";
  }
  return "unknown";
}

bool PolicyReport::has(PolicyViolation::Kind kind) const {
  return std::any_of(violations.begin(), violations.end(),
                     [kind](const auto& v) { return v.kind == kind; });
}

std::string PolicyReport::describe() const {
  if (ok()) return "policy valid";
  std::ostringstream os;
  os << "policy invalid:";
  for (const auto& v : violations) {
    os << "\n  " << to_string(v.kind);
    switch (v.kind) {
      case PolicyViolation::Kind::column_sum:
        os << " column " << v.col << " sums to " << v.value;
        break;
      case PolicyViolation::Kind::dimension:
        os << " matrix is " << v.row << "x" << v.col;
        break;
      default:
        os << " at (" << v.row << "," << v.col << ") = " << v.value;
    }
  }
  return os.str();
}

PolicyReport validate_policy(const Eigen::MatrixXd& matrix, const Graph& graph, double tolerance) {
  PolicyReport report;
  const auto n = static_cast<Eigen::Index>(graph.size());
  if (matrix.rows() != n || matrix.cols() != n) {
    report.violations.push_back({PolicyViolation::Kind::dimension,
                                 static_cast<std::size_t>(matrix.rows()),
                                 static_cast<std::size_t>(matrix.cols()), 0.0});
    return report;
  }
  for (Eigen::Index k = 0; k < n; ++k) {
    for (Eigen::Index l = 0; l < n; ++l) {
      const double a = matrix(l, k);
      const auto row = static_cast<std::size_t>(l);
      const auto col = static_cast<std::size_t>(k);
      if (!(a >= 0.0)) {
        report.violations.push_back({PolicyViolation::Kind::negative_entry, row, col, a});
      }
      if (a != 0.0 && !graph.adjacent(row, col)) {
        report.violations.push_back({PolicyViolation::Kind::sparsity, row, col, a});
      }
    }
    const double sum = matrix.col(k).sum();
    if (!(std::abs(sum - 1.0) <= tolerance)) {
      report.violations.push_back(
          {PolicyViolation::Kind::column_sum, 0, static_cast<std::size_t>(k), sum});
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Spectral analysis

namespace {

// Strong connectivity of the support digraph (edge l -> k when a_lk != 0).
bool support_strongly_connected(const Eigen::MatrixXd& matrix) {
  const auto n = matrix.rows();
  auto reach_all = [&](bool forward) {
    std::vector<bool> seen(static_cast<std::size_t>(n), false);
    std::vector<Eigen::Index> stack{0};
    seen[0] = true;
    Eigen::Index count = 1;
    while (!stack.empty()) {
      const auto u = stack.back();
      stack.pop_back();
      for (Eigen::Index v = 0; v < n; ++v) {
        const double w = forward ? matrix(u, v) : matrix(v, u);
        if (w != 0.0 && !seen[static_cast<std::size_t>(v)]) {
          seen[static_cast<std::size_t>(v)] = true;
          ++count;
          stack.push_back(v);
        }
      }
    }
    return count == n;
  };
  return reach_all(true) && reach_all(false);
}

bool is_symmetric(const Eigen::MatrixXd& matrix, double tolerance) {
  return matrix.rows() == matrix.cols() &&
         (matrix - matrix.transpose()).cwiseAbs().maxCoeff() <= tolerance;
}

}  // namespace

Eigen::VectorXd perron_vector(const Eigen::MatrixXd& matrix, const PowerIterationOptions& options) {
  if (matrix.rows() != matrix.cols() || matrix.rows() == 0) {
    throw InvalidArgument("perron_vector: matrix must be square and non-empty");
  }
  if (!support_strongly_connected(matrix)) {
    throw ConvergenceError("perron_vector: matrix is reducible, no unique Perron vector");
  }
  const auto n = matrix.rows();
  Eigen::VectorXd p = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
  for (int it = 0; it < options.max_iterations; ++it) {
    Eigen::VectorXd next = matrix * p;
    const double total = next.sum();
    if (!(total > 0.0) || !std::isfinite(total)) break;
    next /= total;
    const double residual = (matrix * next - next).cwiseAbs().maxCoeff();
    p = std::move(next);
    if (residual <= options.tolerance) {
      if (p.minCoeff() <= 0.0) {
        throw ConvergenceError("perron_vector: non-positive entry in limit vector");
      }
      return p;
    }
  }
  throw ConvergenceError("perron_vector: no convergence within " +
                         std::to_string(options.max_iterations) + " iterations");
}

double mixing_rate_deflated(const Eigen::MatrixXd& matrix, const Eigen::VectorXd& perron,
                            const PowerIterationOptions& options) {
  const auto n = matrix.rows();
  if (n <= 1) return 0.0;
  // B = A - p 1^T annihilates the Perron direction and keeps the rest of the spectrum.
  const Eigen::MatrixXd deflated = matrix - perron * Eigen::RowVectorXd::Ones(n);

  // Two-vector subspace iteration: the dominant eigenvalues of B may form a
  // complex-conjugate or +/- pair, which a single vector cannot resolve. The
  // projected 2x2 matrix X^T B X carries both.
  const Eigen::Index width = std::min<Eigen::Index>(2, n);
  KeyedStream stream(0x5EED, stream_tag::kBattery);
  Eigen::MatrixXd x(n, width);
  for (Eigen::Index j = 0; j < width; ++j)
    for (Eigen::Index i = 0; i < n; ++i) x(i, j) = stream.normal();
  x.rowwise() -= x.colwise().mean();

  double prev_estimate = -1.0;
  for (int it = 0; it < options.max_iterations; ++it) {
    const Eigen::MatrixXd y = deflated * x;
    if (y.norm() == 0.0) return 0.0;
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(y);
    x = qr.householderQ() * Eigen::MatrixXd::Identity(n, width);
    const Eigen::MatrixXd projected = x.transpose() * deflated * x;
    const double estimate =
        Eigen::EigenSolver<Eigen::MatrixXd>(projected, false).eigenvalues().cwiseAbs().maxCoeff();
    if (prev_estimate >= 0.0 &&
        std::abs(estimate - prev_estimate) <= options.tolerance * std::max(1.0, estimate)) {
      return estimate;
    }
    prev_estimate = estimate;
  }
  throw ConvergenceError("mixing_rate: deflated power iteration did not converge");
}

double mixing_rate(const Eigen::MatrixXd& matrix, const PowerIterationOptions& options) {
  const auto n = matrix.rows();
  if (n != matrix.cols() || n == 0) {
    throw InvalidArgument("mixing_rate: matrix must be square and non-empty");
  }
  if (n == 1) return 0.0;
  if (is_symmetric(matrix, 1e-12)) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(matrix, Eigen::EigenvaluesOnly);
    Eigen::VectorXd values = solver.eigenvalues();
    // Drop the eigenvalue at one, keep the largest remaining magnitude.
    Eigen::Index unit = 0;
    (values.array() - 1.0).abs().minCoeff(&unit);
    double best = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      if (i != unit) best = std::max(best, std::abs(values(i)));
    return best;
  }
  return mixing_rate_deflated(matrix, perron_vector(matrix, options), options);
}

// ---------------------------------------------------------------------------
// Policies

CombinationPolicy::CombinationPolicy(Eigen::MatrixXd matrix, Graph graph)
    : matrix_(std::move(matrix)), graph_(std::move(graph)) {
  const auto report = validate_policy(matrix_, graph_);
  if (!report.ok()) throw InvalidArgument(report.describe());
  perron_ = perron_vector(matrix_);
  lambda2_ = mixing_rate(matrix_);
  if (!(lambda2_ < 1.0)) {
    throw InvalidArgument("combination policy has mixing rate >= 1");
  }
}

CombinationPolicy uniform_policy(const Graph& graph) {
  const auto n = static_cast<Eigen::Index>(graph.size());
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto& nb = graph.neighbors(static_cast<std::size_t>(k));
    for (const auto l : nb) a(static_cast<Eigen::Index>(l), k) = 1.0 / static_cast<double>(nb.size());
  }
  return CombinationPolicy(std::move(a), graph);
}

CombinationPolicy asymmetric_mh_policy(const Graph& graph, const NoiseProfile& noise) {
  noise.validate();
  if (noise.size() != graph.size()) {
    throw InvalidArgument("asymmetric_mh_policy: noise profile size does not match graph");
  }
  const auto n = static_cast<Eigen::Index>(graph.size());
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t k = 0; k < graph.size(); ++k) {
    const double own = static_cast<double>(graph.degree(k)) * noise.sigma_sq[k];
    double off_diagonal = 0.0;
    for (const auto l : graph.neighbors(k)) {
      if (l == k) continue;
      const double other = static_cast<double>(graph.degree(l)) * noise.sigma_sq[l];
      const double weight = noise.sigma_sq[k] / std::max(own, other);
      a(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(k)) = weight;
      off_diagonal += weight;
    }
    a(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k)) = 1.0 - off_diagonal;
  }
  return CombinationPolicy(std::move(a), graph);
}

double policy_objective(const Eigen::VectorXd& perron, const NoiseProfile& noise) {
  if (static_cast<std::size_t>(perron.size()) != noise.size()) {
    throw InvalidArgument("policy_objective: length mismatch");
  }
  double total = 0.0;
  for (Eigen::Index k = 0; k < perron.size(); ++k) {
    total += perron(k) * perron(k) * noise.sigma_sq[static_cast<std::size_t>(k)];
  }
  return total;
}

Eigen::MatrixXd random_policy_matrix(const Graph& graph, std::uint64_t seed) {
  const auto n = static_cast<Eigen::Index>(graph.size());
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  KeyedStream stream(seed, stream_tag::kBattery, 1);
  for (Eigen::Index k = 0; k < n; ++k) {
    for (const auto l : graph.neighbors(static_cast<std::size_t>(k))) {
      a(static_cast<Eigen::Index>(l), k) = 0.05 + stream.uniform();
    }
    a.col(k) /= a.col(k).sum();
  }
  return a;
}

}  // namespace diffnet
