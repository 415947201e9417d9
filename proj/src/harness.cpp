#include "diffnet/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "diffnet/error.hpp"
#include "diffnet/rng.hpp"
#include "diffnet/svg.hpp"

namespace diffnet {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string fmt(double x) {
  char buffer[40];
  std::snprintf(buffer, sizeof buffer, "%.17g", x);
  return buffer;
}

std::string short_fmt(double x) {
  char buffer[40];
  std::snprintf(buffer, sizeof buffer, "%.4g", x);
  return buffer;
}

bool is_builtin(const std::string& policy) { return policy == "uniform" || policy == "mh"; }

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot write '" + path.string() + "'");
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  auto out = open_output(path);
  out << text;
}

std::string hash_line(const std::string& hash) { return "# config_hash=" + hash + "\n"; }

double epsilon_for(const ExperimentConfig& config, const LossModel& loss, const Eigen::VectorXd& w0) {
  return config.classifier.epsilon_drop.value_or(default_epsilon_drop(loss, w0));
}

std::size_t largest_agent_count(const ExperimentConfig& config) {
  return *std::max_element(config.agents.begin(), config.agents.end());
}

}  // namespace

LossPtr make_loss(const LossSpec& spec) {
  if (spec.kind == "nn_saddle") return std::make_shared<NNSaddleLoss>(spec.features, spec.reg, spec.shift);
  if (spec.kind == "quadratic") return QuadraticLoss::diagonal(spec.diag);
  throw InvalidArgument("unknown loss kind '" + spec.kind + "'");
}

Eigen::VectorXd initial_point(const std::string& init, const LossModel& model) {
  if (init == "saddle") return model.saddle_point();
  if (init == "zero") return Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.dim()));
  std::vector<double> coords;
  std::stringstream in(init);
  for (std::string item; std::getline(in, item, ',');) {
    try {
      std::size_t used = 0;
      coords.push_back(std::stod(item, &used));
      if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw InvalidArgument("init: cannot parse '" + item + "'");
    }
  }
  if (coords.size() != model.dim()) {
    throw InvalidArgument("init: expected " + std::to_string(model.dim()) + " coordinates, got " +
                          std::to_string(coords.size()));
  }
  return Eigen::Map<Eigen::VectorXd>(coords.data(), static_cast<Eigen::Index>(coords.size()));
}

std::vector<double> agent_sigma_iso(const NoiseSpec& spec, std::size_t agents, std::size_t dim) {
  std::vector<double> out(agents);
  for (std::size_t k = 0; k < agents; ++k) {
    out[k] = spec.sigma_sq.empty() ? cyclic(spec.sigma_iso, k)
                                   : std::sqrt(cyclic(spec.sigma_sq, k) / static_cast<double>(dim));
  }
  return out;
}

std::optional<NoiseProfile> agent_noise_profile(const NoiseSpec& spec,
                                                const std::vector<double>& sigma_iso,
                                                std::size_t dim) {
  if (!spec.profile.empty()) {
    std::ifstream in(spec.profile);
    if (!in) throw InvalidArgument("cannot open noise profile '" + spec.profile + "'");
    std::stringstream text;
    text << in.rdbuf();
    auto profile = noise_profile_from_json(text.str());
    if (profile.size() != sigma_iso.size()) {
      throw InvalidArgument("noise profile lists " + std::to_string(profile.size()) +
                            " agents, expected " + std::to_string(sigma_iso.size()));
    }
    return profile;
  }
  if (std::any_of(sigma_iso.begin(), sigma_iso.end(), [](double s) { return !(s > 0.0); })) {
    return std::nullopt;
  }
  NoiseProfile profile;
  for (const double s : sigma_iso) {
    profile.sigma_sq.push_back(static_cast<double>(dim) * s * s);
    profile.sigma_lower_sq.push_back(s * s);
  }
  return profile;
}

Graph make_graph(const TopologySpec& spec, std::size_t agents) {
  TopologyParams params;
  params.grid_dims = spec.grid;
  params.edge_probability = spec.edge_probability;
  params.seed = spec.seed;
  if (spec.kind == TopologyKind::grid && params.grid_dims.empty()) {
    std::size_t rows = 1;
    for (std::size_t d = 1; d * d <= agents; ++d)
      if (agents % d == 0) rows = d;
    params.grid_dims = {rows, agents / rows};
  }
  return build_graph(spec.kind, agents, params);
}

std::string policy_label(const std::string& policy) {
  return is_builtin(policy) ? policy : fs::path(policy).stem().string();
}

std::size_t policy_agents(const std::string& policy, std::size_t requested) {
  if (is_builtin(policy)) return requested;
  return static_cast<std::size_t>(load_policy_csv(policy).rows());
}

RawPolicy resolve_policy(const ExperimentConfig& config, const std::string& policy,
                         std::size_t agents, const std::optional<NoiseProfile>& noise) {
  if (policy == "uniform") {
    Graph graph = make_graph(config.topology, agents);
    Eigen::MatrixXd matrix = uniform_policy(graph).matrix();
    return {"uniform", std::move(matrix), std::move(graph)};
  }
  if (policy == "mh") {
    if (!noise) throw InvalidArgument("policy mh needs positive noise for every agent");
    Graph graph = make_graph(config.topology, agents);
    Eigen::MatrixXd matrix = asymmetric_mh_policy(graph, *noise).matrix();
    return {"mh", std::move(matrix), std::move(graph)};
  }
  Eigen::MatrixXd matrix = load_policy_csv(policy);
  if (static_cast<std::size_t>(matrix.rows()) != agents) {
    throw InvalidArgument("policy file '" + policy + "' has " + std::to_string(matrix.rows()) +
                          " agents, expected " + std::to_string(agents));
  }
  Graph graph = Graph::from_pattern(matrix);
  return {policy_label(policy), std::move(matrix), std::move(graph)};
}

DiffusionSystem Scenario::system(std::uint64_t seed, std::size_t workers) const {
  return DiffusionSystem(oracle->with_seed(seed), *policy, step, workers);
}

Scenario build_scenario(const ExperimentConfig& config, std::size_t agents, const std::string& policy) {
  Scenario s;
  s.loss = make_loss(config.loss);
  const auto dim = s.loss->dim();
  const auto sigma = agent_sigma_iso(config.noise, agents, dim);
  s.noise = agent_noise_profile(config.noise, sigma, dim);

  RawPolicy raw = resolve_policy(config, policy, agents, s.noise);
  s.label = raw.label;
  const auto report = validate_policy(raw.matrix, raw.graph);
  if (!report.ok()) {
    throw InvalidArgument("policy '" + raw.label + "' is invalid:\n" + report.describe());
  }
  s.policy.emplace(std::move(raw.matrix), std::move(raw.graph));
  s.oracle.emplace(s.loss, sigma, config.seeds.front());

  if (config.normalize) {
    if (!s.noise) throw InvalidArgument("step normalization needs positive noise for every agent");
    s.step = StepConfig::make(config.mu, true, s.policy->perron(), *s.noise);
  } else {
    s.step = StepConfig::plain(config.mu);
  }

  if (s.noise) {
    ClassifierParams params{s.step.mu_effective,
                            config.classifier.delta.value_or(s.loss->smoothness().gradient_lipschitz),
                            config.classifier.pi,
                            config.classifier.tau,
                            s.policy->perron(),
                            *s.noise};
    try {
      params.validate();
      s.classifier = std::move(params);
    } catch (const InvalidArgument& e) {
      s.classifier_error = e.what();
    }
  } else {
    s.classifier_error = "no noise profile";
  }
  return s;
}

// ---------------------------------------------------------------------------
// run

RunRecord run_diffusion(const ExperimentConfig& config, std::ostream& metrics, std::ostream* baseline) {
  const auto start = std::chrono::steady_clock::now();
  const std::string& policy = config.policies.front();
  const auto agents = policy_agents(policy, config.agents.front());
  const Scenario sc = build_scenario(config, agents, policy);
  const auto seed = config.seeds.front();
  const DiffusionSystem system = sc.system(seed, config.workers);
  const LossModel& loss = *sc.loss;
  const Eigen::VectorXd& p = sc.policy->perron();

  const Eigen::VectorXd w0 = initial_point(config.init, loss);
  const double target = loss.value(w0) - epsilon_for(config, loss, w0);

  RunRecord record;
  record.config_hash = config.hash();
  metrics << hash_line(record.config_hash) << kMetricsHeader << '\n';
  if (baseline) *baseline << hash_line(record.config_hash) << "iter,J_full,J_sampled\n";

  NetworkState state = system.initial(w0);
  Eigen::VectorXd w_full = w0, w_sampled = w0;
  for (std::int64_t i = 1; i <= config.iters; ++i) {
    state = system.step(state);
    const Eigen::VectorXd wc = system.centroid(state);
    const double value = loss.value(wc);
    if (!record.escape_iter && value <= target) record.escape_iter = i;
    if (baseline) {
      w_full = centralized_full_step(w_full, system.oracle(), p, sc.step, i - 1);
      KeyedStream pick(seed, 0, static_cast<std::uint64_t>(i - 1), stream_tag::kAgentSelect);
      w_sampled = centralized_sampled_step(w_sampled, system.oracle(), p, sc.step, i - 1, pick);
    }
    if (i % config.cadence != 0 && i != config.iters) continue;

    MetricRow row;
    row.iter = i;
    row.value = value;
    if (sc.classifier) {
      const auto label = classify(wc, loss, *sc.classifier);
      row.region = label.region;
      row.grad_norm_sq = label.grad_norm_sq;
    } else {
      row.grad_norm_sq = eval_loss(loss, wc).gradient.squaredNorm();
    }
    row.disagreement4 = disagreement4(state, p);
    row.escaped = record.escape_iter.has_value();
    metrics << row.iter << ',' << fmt(row.value) << ',' << fmt(row.grad_norm_sq) << ','
            << fmt(row.disagreement4) << ',' << (row.region ? to_string(*row.region) : "NA") << ','
            << (row.escaped ? 1 : 0) << '\n';
    metrics.flush();
    if (baseline) {
      *baseline << i << ',' << fmt(loss.value(w_full)) << ',' << fmt(loss.value(w_sampled)) << '\n';
      baseline->flush();
    }
    record.rows.push_back(std::move(row));
  }
  record.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return record;
}

RunRecord cmd_run(const ExperimentConfig& config) {
  config.validate();
  fs::create_directories(config.out);
  auto metrics = open_output(fs::path(config.out) / "metrics.csv");
  if (!config.baselines) return run_diffusion(config, metrics);
  auto baseline = open_output(fs::path(config.out) / "baseline.csv");
  return run_diffusion(config, metrics, &baseline);
}

std::string read_config_hash(const fs::path& csv) {
  std::ifstream in(csv);
  std::string line;
  const std::string prefix = "# config_hash=";
  if (!in || !std::getline(in, line) || line.rfind(prefix, 0) != 0) return {};
  return line.substr(prefix.size());
}

bool replay_matches(const fs::path& csv, const ExperimentConfig& config) {
  return read_config_hash(csv) == config.hash();
}

// ---------------------------------------------------------------------------
// policy

PolicyReportSummary cmd_policy(const ExperimentConfig& config) {
  config.validate();
  const std::string& policy = config.policies.front();
  const auto agents = policy_agents(policy, config.agents.front());
  const Scenario sc = build_scenario(config, agents, policy);

  PolicyReportSummary out;
  out.label = sc.label;
  out.matrix = sc.policy->matrix();
  out.perron = sc.policy->perron();
  out.lambda2 = sc.policy->lambda2();
  if (sc.noise) {
    out.objective = policy_objective(out.perron, *sc.noise);
    if (policy == "mh") {
      out.uniform_objective = policy_objective(uniform_policy(sc.policy->graph()).perron(), *sc.noise);
    }
  }

  const auto hash = config.hash();
  fs::create_directories(config.out);
  {
    auto csv = open_output(fs::path(config.out) / "policy.csv");
    csv << hash_line(hash);
    write_policy_csv(csv, out.matrix);
  }
  json doc;
  doc["config_hash"] = hash;
  doc["policy"] = out.label;
  doc["agents"] = agents;
  doc["valid"] = true;
  doc["perron"] = std::vector<double>(out.perron.data(), out.perron.data() + out.perron.size());
  doc["lambda2"] = out.lambda2;
  doc["objective"] = out.objective ? json(*out.objective) : json();
  if (out.uniform_objective) doc["uniform_objective"] = *out.uniform_objective;
  write_text(fs::path(config.out) / "policy.json", doc.dump(2) + "\n");
  return out;
}

// ---------------------------------------------------------------------------
// sweep

EscapeStats stats_from_times(const std::vector<std::int64_t>& times) {
  if (times.empty()) throw InvalidArgument("stats_from_times: no times");
  EscapeStats stats;
  std::vector<double> values;
  for (std::size_t s = 0; s < times.size(); ++s) {
    stats.samples.push_back({s + 1, times[s], false});
    values.push_back(static_cast<double>(times[s]));
  }
  stats.median = quantile(values, 0.5);
  stats.q1 = quantile(values, 0.25);
  stats.q3 = quantile(values, 0.75);
  return stats;
}

std::vector<SweepFit> fit_sweep(const std::vector<SweepCell>& cells) {
  std::vector<std::string> order;
  for (const auto& c : cells)
    if (std::find(order.begin(), order.end(), c.policy) == order.end()) order.push_back(c.policy);

  std::vector<SweepFit> fits;
  for (const auto& policy : order) {
    SweepFit fit{policy, std::nullopt, ""};
    std::vector<double> ks;
    std::vector<EscapeStats> stats;
    std::string censored;
    for (const auto& c : cells) {
      if (c.policy != policy) continue;
      if (c.stats.median_censored()) censored += (censored.empty() ? "" : ",") + std::to_string(c.agents);
      ks.push_back(static_cast<double>(c.agents));
      stats.push_back(c.stats);
    }
    if (!censored.empty()) {
      fit.note = "slope fit skipped: censored median at K=" + censored;
    } else if (std::set<double>(ks.begin(), ks.end()).size() < 3) {
      fit.note = "slope fit skipped: fewer than 3 distinct agent counts";
    } else {
      fit.fit = escape_scaling_fit(ks, stats);
    }
    fits.push_back(std::move(fit));
  }
  return fits;
}

void write_sweep_outputs(const fs::path& dir, const std::string& config_hash,
                         const SweepResult& result) {
  fs::create_directories(dir);
  {
    auto csv = open_output(dir / "escape.csv");
    csv << hash_line(config_hash) << "K,policy,seed,escape_iter,censored\n";
    for (const auto& c : result.cells) {
      for (const auto& s : c.stats.samples) {
        csv << c.agents << ',' << c.policy << ',' << s.seed << ',' << s.escape_iter << ','
            << (s.censored ? 1 : 0) << '\n';
      }
    }
  }

  json doc;
  doc["config_hash"] = config_hash;
  doc["cells"] = json::array();
  for (const auto& c : result.cells) {
    doc["cells"].push_back({{"K", c.agents},
                            {"policy", c.policy},
                            {"seeds", c.stats.samples.size()},
                            {"median", c.stats.median},
                            {"q1", c.stats.q1},
                            {"q3", c.stats.q3},
                            {"iqr", c.stats.iqr()},
                            {"censored", c.stats.censored_count},
                            {"objective", c.objective ? json(*c.objective) : json()},
                            {"mu_effective", c.mu_effective}});
  }
  doc["fits"] = json::array();
  for (const auto& f : result.fits) {
    json entry{{"policy", f.policy}};
    if (f.fit) {
      entry["slope"] = f.fit->slope;
      entry["intercept"] = f.fit->intercept;
    } else {
      entry["slope"] = nullptr;
      entry["note"] = f.note;
    }
    doc["fits"].push_back(std::move(entry));
  }
  write_text(dir / "summary.json", doc.dump(2) + "\n");

  const std::string comment = "config_hash=" + config_hash;
  std::vector<PlotSeries> medians;
  for (const auto& c : result.cells) {
    if (c.stats.all_censored()) continue;
    auto it = std::find_if(medians.begin(), medians.end(),
                           [&](const PlotSeries& s) { return s.label == c.policy; });
    if (it == medians.end()) it = medians.insert(medians.end(), PlotSeries{c.policy, {}});
    it->points.emplace_back(static_cast<double>(c.agents), c.stats.median);
  }
  write_text(dir / "escape_vs_K.svg",
             render_line_plot(medians, {"Median escape time vs agents", "agents K",
                                        "median escape iteration", true, true, comment}));

  std::map<std::string, std::vector<PlotSeries>> per_policy;
  std::vector<std::string> order;
  for (const auto& t : result.trajectories) {
    if (!per_policy.count(t.policy)) order.push_back(t.policy);
    per_policy[t.policy].push_back({"K=" + std::to_string(t.agents), t.points});
  }
  for (const auto& policy : order) {
    write_text(dir / ("trajectories_" + policy + ".svg"),
               render_line_plot(per_policy[policy],
                                {"Centroid objective (" + policy + ")", "iteration", "J(w_c)",
                                 false, false, comment}));
  }
}

SweepResult cmd_sweep(const ExperimentConfig& config) {
  config.validate();
  std::vector<std::size_t> ks(config.agents);
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());

  SweepResult result;
  for (const auto k : ks) {
    for (const auto& policy : config.policies) {
      const Scenario sc = build_scenario(config, k, policy);
      if (!sc.classifier) throw InvalidArgument("sweep: classifier unavailable (" + sc.classifier_error + ")");
      const Eigen::VectorXd w0 = initial_point(config.init, *sc.loss);
      EscapeOptions options;
      options.epsilon_drop = epsilon_for(config, *sc.loss, w0);
      options.max_iters = config.max_iters;
      options.workers = config.workers;
      const DiffusionSystem system = sc.system(config.seeds.front(), 1);

      SweepCell cell;
      cell.agents = k;
      cell.policy = sc.label;
      cell.stats = measure_escape(system, *sc.classifier, w0, config.seeds, options);
      cell.objective = policy_objective(sc.policy->perron(), *sc.noise);
      cell.mu_effective = sc.step.mu_effective;
      result.cells.push_back(std::move(cell));

      // Trajectory of the first seed, thinned to at most ~500 points.
      SweepTrajectory traj{k, sc.label, {}};
      const auto horizon = std::min(config.iters, config.max_iters);
      const auto stride = std::max<std::int64_t>(1, horizon / 500);
      NetworkState state = system.initial(w0);
      traj.points.emplace_back(0.0, sc.loss->value(w0));
      for (std::int64_t i = 1; i <= horizon; ++i) {
        state = system.step(state);
        if (i % stride == 0 || i == horizon) {
          traj.points.emplace_back(static_cast<double>(i), sc.loss->value(system.centroid(state)));
        }
      }
      result.trajectories.push_back(std::move(traj));
    }
  }
  result.fits = fit_sweep(result.cells);
  write_sweep_outputs(config.out, config.hash(), result);
  return result;
}

// ---------------------------------------------------------------------------
// check

bool CheckReport::passed() const {
  return std::all_of(items.begin(), items.end(), [](const CheckItem& i) { return i.passed; });
}

namespace {

// Perron weights of the matrix read with its columns rescaled to sum to one,
// so that a matrix stored in the wrong orientation still yields weights.
std::optional<Eigen::VectorXd> declared_perron(const Eigen::MatrixXd& matrix) {
  const Eigen::RowVectorXd sums = matrix.colwise().sum();
  if ((sums.array() <= 0.0).any()) return std::nullopt;
  try {
    return perron_vector(matrix * sums.cwiseInverse().asDiagonal());
  } catch (const Error&) {
    return std::nullopt;
  }
}

double disagreement_slope_fixture() {
  auto loss = QuadraticLoss::diagonal({1.0, 0.5});
  const std::size_t agents = 8;
  const Graph ring = build_graph(TopologyKind::ring, agents);
  const StochasticOracle oracle(loss, std::vector<double>(agents, 1.0), 3);
  const Eigen::VectorXd w0 = Eigen::VectorXd::Zero(2);
  std::vector<double> mus, means;
  for (const double mu : {0.02, 0.01, 0.005, 0.0025}) {
    const DiffusionSystem system(oracle, uniform_policy(ring), StepConfig::plain(mu));
    mus.push_back(mu);
    means.push_back(mean_disagreement4(system, w0, 20000).mean);
  }
  return escape_scaling_fit(mus, means).slope;
}

}  // namespace

CheckReport cmd_check(const ExperimentConfig& config) {
  config.validate();
  CheckReport report;
  auto add = [&](std::string name, bool ok, std::string detail) {
    report.items.push_back({std::move(name), ok, std::move(detail)});
  };

  const std::string& policy = config.policies.front();
  const auto agents = policy_agents(policy, largest_agent_count(config));
  const LossPtr loss = make_loss(config.loss);
  const auto dim = loss->dim();
  const auto sigma = agent_sigma_iso(config.noise, agents, dim);
  const auto noise = agent_noise_profile(config.noise, sigma, dim);
  const RawPolicy raw = resolve_policy(config, policy, agents, noise);
  const Eigen::MatrixXd& a = raw.matrix;
  const Eigen::VectorXd w0 = initial_point(config.init, *loss);
  const std::string where = raw.label + ", K=" + std::to_string(agents);

  const auto validity = validate_policy(a, raw.graph);
  add("policy.valid", validity.ok(), validity.ok() ? where : where + ": " + validity.describe());

  const auto perron = declared_perron(a);
  Eigen::VectorXd p = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(agents), 1.0 / agents);
  if (perron) {
    p = *perron;
    const double residual = (a * p - p).cwiseAbs().maxCoeff();
    add("policy.perron", residual <= 1e-10, "|Ap - p|_inf = " + short_fmt(residual));
  } else {
    add("policy.perron", false, "no Perron vector");
  }

  if (noise) {
    const double mh = policy_objective(asymmetric_mh_policy(raw.graph, *noise).perron(), *noise);
    double best_random = std::numeric_limits<double>::infinity();
    for (std::uint64_t j = 0; j < 100; ++j) {
      const CombinationPolicy random(random_policy_matrix(raw.graph, 1000 + j), raw.graph);
      best_random = std::min(best_random, policy_objective(random.perron(), *noise));
    }
    const double uniform = policy_objective(uniform_policy(raw.graph).perron(), *noise);
    add("policy.mh_optimal", mh <= best_random + 1e-9 && mh <= uniform + 1e-9,
        "mh " + short_fmt(mh) + ", uniform " + short_fmt(uniform) + ", best of 100 random " +
            short_fmt(best_random));
  } else {
    add("policy.mh_optimal", true, "skipped: no noise profile");
  }

  double mu_eff = config.mu;
  if (noise) {
    if (config.normalize) mu_eff = normalize_step(config.mu, p, *noise);
    ClassifierParams params{mu_eff,
                            config.classifier.delta.value_or(loss->smoothness().gradient_lipschitz),
                            config.classifier.pi,
                            config.classifier.tau,
                            p,
                            *noise};
    const std::string detail = "mu'*delta = " + short_fmt(mu_eff * params.delta);
    try {
      params.validate();
      add("classifier.params", true, detail + " < 0.5");
    } catch (const InvalidArgument& e) {
      add("classifier.params", false, e.what());
    }
  } else {
    const bool ok = !config.normalize;
    add("classifier.params", ok,
        ok ? "skipped: no noise profile" : "step normalization needs positive noise for every agent");
  }

  {
    KeyedStream rng(config.seeds.front(), 0, 0, stream_tag::kBattery);
    double grad_err = 0.0, hess_err = 0.0;
    for (int j = 0; j < 25; ++j) {
      Eigen::VectorXd w(static_cast<Eigen::Index>(dim));
      for (auto& x : w) x = 0.5 * rng.normal();
      grad_err = std::max(grad_err, check_gradient(*loss, w));
      hess_err = std::max(hess_err, check_hessian(*loss, w));
    }
    add("loss.gradient", grad_err <= 1e-5, "max relative error " + short_fmt(grad_err));
    add("loss.hessian", hess_err <= 1e-5, "max relative error " + short_fmt(hess_err));
  }

  const StochasticOracle oracle(loss, sigma, config.seeds.front());
  if (noise) {
    const auto stats = aggregated_noise_statistics(oracle, p, w0, 20000);
    const double upper = policy_objective(p, *noise);
    NoiseProfile floor = *noise;
    floor.sigma_sq = floor.sigma_lower_sq;
    const double lower = policy_objective(p, floor);
    add("noise.variance_bound", stats.second_moment <= upper + 4.0 * stats.second_moment_se,
        "E|s|^2 = " + short_fmt(stats.second_moment) + " <= " + short_fmt(upper));
    const bool sandwich = stats.cov_min_eigenvalue >= lower - 4.0 * stats.cov_min_eigenvalue_se &&
                          stats.cov_max_eigenvalue <= upper + 4.0 * stats.cov_max_eigenvalue_se;
    add("noise.covariance_sandwich", sandwich,
        "eig in [" + short_fmt(stats.cov_min_eigenvalue) + ", " + short_fmt(stats.cov_max_eigenvalue) +
            "], bounds [" + short_fmt(lower) + ", " + short_fmt(upper) + "]");
  } else {
    add("noise.variance_bound", true, "skipped: no noise profile");
    add("noise.covariance_sandwich", true, "skipped: no noise profile");
  }

  try {
    const StepConfig step{config.mu, config.normalize && noise.has_value(), mu_eff};
    std::vector<NetworkState> trajectory{NetworkState::replicated(w0, agents)};
    std::vector<Eigen::MatrixXd> gradients;
    for (int i = 0; i < 1000; ++i) {
      Eigen::MatrixXd g;
      trajectory.push_back(diffusion_step(trajectory.back(), oracle, a, step, &g));
      gradients.push_back(std::move(g));
    }
    const double dev = centroid_recursion_check(trajectory, gradients, p, mu_eff);
    add("centroid.identity", dev <= 1e-10, "max deviation " + short_fmt(dev) + " over 1000 steps");
  } catch (const Error& e) {
    add("centroid.identity", false, e.what());
  }

  const double slope = disagreement_slope_fixture();
  add("disagreement.mu4_slope", slope >= 3.5 && slope <= 4.5,
      "log-log slope " + short_fmt(slope) + " (ring K=8, quadratic)");
  return report;
}

void print_check_report(std::ostream& out, const CheckReport& report) {
  std::size_t passed = 0;
  for (const auto& item : report.items) {
    out << (item.passed ? "PASS " : "FAIL ") << item.name << "  " << item.detail << '\n';
    passed += item.passed ? 1 : 0;
  }
  out << passed << '/' << report.items.size() << " checks passed\n";
}

}  // namespace diffnet
