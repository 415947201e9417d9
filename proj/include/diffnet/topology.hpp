#pragma once

// Graphs, combination policies and their spectral analysis.
//
// Matrix orientation: entry (l, k) of a combination matrix is a_{lk}, the
// weight agent k assigns to the intermediate estimate received from agent l.
// Every column sums to one (left-stochastic). All file I/O keeps this layout.

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace diffnet {

enum class TopologyKind { complete, ring, grid, random, star };

TopologyKind parse_topology_kind(const std::string& name);
std::string to_string(TopologyKind kind);

struct TopologyParams {
  std::vector<std::size_t> grid_dims;  // side lengths for grid graphs
  double edge_probability = 0.5;       // Erdos-Renyi edge probability
  std::uint64_t seed = 1;
  int max_retries = 100;
};

/// Undirected graph with self-loops. Neighbor lists are sorted and always
/// contain the agent itself.
class Graph {
 public:
  Graph() = default;

  /// Builds from an undirected edge list; self-loops are added, duplicates
  /// ignored. Throws if the result is disconnected.
  static Graph from_edges(std::size_t agents,
                          const std::vector<std::pair<std::size_t, std::size_t>>& edges);

  /// Builds from the nonzero pattern of a square matrix (symmetrized).
  static Graph from_pattern(const Eigen::MatrixXd& matrix);

  std::size_t size() const noexcept { return neighbors_.size(); }
  const std::vector<std::size_t>& neighbors(std::size_t k) const { return neighbors_.at(k); }
  // n_k, including k itself.
  std::size_t degree(std::size_t k) const { return neighbors_.at(k).size(); }
  bool adjacent(std::size_t l, std::size_t k) const;
  bool is_regular() const;

 private:
  explicit Graph(std::vector<std::vector<std::size_t>> neighbors);
  std::vector<std::vector<std::size_t>> neighbors_;
};

/// Breadth-first connectivity test.
bool is_connected(const std::vector<std::vector<std::size_t>>& neighbors);

Graph build_graph(TopologyKind kind, std::size_t agents, const TopologyParams& params = {});

/// Per-agent gradient-noise bounds: sigma_sq is the upper bound sigma_k^2,
/// sigma_lower_sq the covariance floor. Requires 0 < lower <= upper.
struct NoiseProfile {
  std::vector<double> sigma_sq;
  std::vector<double> sigma_lower_sq;

  static NoiseProfile uniform(std::size_t agents, double sigma_sq, double sigma_lower_sq);

  std::size_t size() const noexcept { return sigma_sq.size(); }
  void validate() const;
};

struct PolicyViolation {
  enum class Kind { dimension, negative_entry, column_sum, sparsity };
  Kind kind;
  std::size_t row = 0;
  std::size_t col = 0;
  double value = 0.0;
};

std::string to_string(PolicyViolation::Kind kind);

struct PolicyReport {
  std::vector<PolicyViolation> violations;

  bool ok() const noexcept { return violations.empty(); }
  bool has(PolicyViolation::Kind kind) const;
  std::string describe() const;
};

/// Checks non-negativity, unit column sums and the sparsity pattern of the
/// graph. Always returns a report.
PolicyReport validate_policy(const Eigen::MatrixXd& matrix, const Graph& graph,
                             double tolerance = 1e-10);

struct PowerIterationOptions {
  double tolerance = 1e-12;
  int max_iterations = 100000;
};

/// Perron eigenvector of a left-stochastic matrix: A p = p, sum(p) = 1, p > 0.
/// Throws ConvergenceError when the iteration fails to settle (reducible or
/// periodic structure).
Eigen::VectorXd perron_vector(const Eigen::MatrixXd& matrix,
                              const PowerIterationOptions& options = {});

/// Magnitude of the second-largest eigenvalue of a valid policy.
double mixing_rate(const Eigen::MatrixXd& matrix, const PowerIterationOptions& options = {});

/// Deflated power iteration on A - p 1^T. Works for any valid policy; exposed
/// separately so that the symmetric fast path can be cross-checked.
double mixing_rate_deflated(const Eigen::MatrixXd& matrix, const Eigen::VectorXd& perron,
                            const PowerIterationOptions& options = {});

/// A validated combination matrix together with its graph, Perron vector and
/// mixing rate. Immutable after construction.
class CombinationPolicy {
 public:
  /// Validates the matrix against the graph; throws InvalidArgument with the
  /// report text on failure.
  CombinationPolicy(Eigen::MatrixXd matrix, Graph graph);

  const Eigen::MatrixXd& matrix() const noexcept { return matrix_; }
  const Graph& graph() const noexcept { return graph_; }
  const Eigen::VectorXd& perron() const noexcept { return perron_; }
  double lambda2() const noexcept { return lambda2_; }
  std::size_t size() const noexcept { return graph_.size(); }

 private:
  Eigen::MatrixXd matrix_;
  Graph graph_;
  Eigen::VectorXd perron_;
  double lambda2_ = 0.0;
};

/// a_{lk} = 1 / n_k on the neighborhood of k.
CombinationPolicy uniform_policy(const Graph& graph);

/// Noise-aware asymmetric Metropolis-Hastings weights:
///   a_{lk} = sigma_k^2 / max(n_k sigma_k^2, n_l sigma_l^2)   for l in N_k, l != k
///   a_{kk} = 1 - sum of the off-diagonal column entries.
/// Its Perron vector is proportional to 1 / sigma_k^2.
CombinationPolicy asymmetric_mh_policy(const Graph& graph, const NoiseProfile& noise);

/// sum_k p_k^2 sigma_k^2 -- the policy-dependent factor of the escape time.
double policy_objective(const Eigen::VectorXd& perron, const NoiseProfile& noise);

/// Random valid policy on the graph: positive weights on every neighborhood
/// slot, normalized per column. Used by property tests and the check suite.
Eigen::MatrixXd random_policy_matrix(const Graph& graph, std::uint64_t seed);

// --- file formats ---

/// CSV, row-major, first line `# left-stochastic, entry(l,k)=a_lk`.
void write_policy_csv(std::ostream& out, const Eigen::MatrixXd& matrix);
Eigen::MatrixXd read_policy_csv(std::istream& in);
Eigen::MatrixXd load_policy_csv(const std::string& path);

/// JSON array of {agent, sigma_sq, sigma_lower_sq}.
std::string noise_profile_to_json(const NoiseProfile& noise);
NoiseProfile noise_profile_from_json(const std::string& text);

}  // namespace diffnet
