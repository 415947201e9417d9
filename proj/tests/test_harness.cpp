#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "diffnet/config.hpp"
#include "diffnet/error.hpp"
#include "diffnet/harness.hpp"

using namespace diffnet;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("diffnet_test_harness_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

ExperimentConfig config_from(const std::string& text) {
  auto c = ExperimentConfig::from_json(nlohmann::json::parse(text));
  c.validate();
  return c;
}

// Data rows of a metrics CSV, split on commas.
std::vector<std::vector<std::string>> csv_rows(const fs::path& path) {
  std::ifstream in(path);
  std::string line;
  std::vector<std::vector<std::string>> rows;
  std::getline(in, line);  // hash
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    rows.push_back(fields);
  }
  return rows;
}

}  // namespace

TEST_CASE("config JSON round-trip, overrides and hash") {
  const auto c = config_from(R"({"agents":[2,8],"policy":["uniform","asymmetric-mh"],"mu":0.002,
                                 "topology":{"kind":"ring"},"noise":{"sigma_sq":[1,4]},
                                 "seeds":{"base":5,"count":3},"init":[0.1,0.2,0,0,0,0]})");
  CHECK(c.policies == std::vector<std::string>{"uniform", "mh"});
  CHECK(c.seeds == std::vector<std::uint64_t>{5, 6, 7});
  CHECK(c.topology.kind == TopologyKind::ring);
  CHECK(c.noise.sigma_iso.empty());

  const auto back = ExperimentConfig::from_json(c.to_json());
  CHECK(back.hash() == c.hash());
  CHECK(back.to_json() == c.to_json());

  auto moved = c;
  moved.out = "elsewhere";
  moved.workers = 7;
  CHECK(moved.hash() == c.hash());
  moved.mu = 0.003;
  CHECK(moved.hash() != c.hash());

  ExperimentConfig o = c;
  ConfigOverrides flags;
  flags.seed = 100;
  flags.agents = 4;
  flags.policy = "asymmetric-mh";
  apply_overrides(o, flags);
  CHECK(o.seeds == std::vector<std::uint64_t>{100, 101, 102});
  CHECK(o.agents == std::vector<std::size_t>{4});
  CHECK(o.policies == std::vector<std::string>{"mh"});

  const ExperimentConfig defaults;
  CHECK(defaults.seeds.size() == 20);
  CHECK(defaults.agents == std::vector<std::size_t>{1, 2, 4, 8, 16});
}

TEST_CASE("config validation errors") {
  CHECK_THROWS_AS(config_from(R"({"agents":[]})"), InvalidArgument);
  CHECK_THROWS_AS(config_from(R"({"agents":[0]})"), InvalidArgument);
  CHECK_THROWS_AS(config_from(R"({"seeds":[1,1]})"), InvalidArgument);
  CHECK_THROWS_AS(config_from(R"({"mu":-1})"), InvalidArgument);
  CHECK_THROWS_AS(config_from(R"({"policy":"no/such/file.csv"})"), InvalidArgument);
  CHECK_THROWS_AS(config_from(R"({"loss":{"kind":"cubic"}})"), InvalidArgument);
  CHECK_THROWS_AS(config_from(R"({"noise":{"sigma_sq":[0]}})"), InvalidArgument);
  CHECK_THROWS_AS(config_from(R"({"cadence":0})"), InvalidArgument);
  CHECK_THROWS_AS(config_from(R"({"topology":"torus"})"), InvalidArgument);
  CHECK_THROWS_AS(config_from(R"([1,2])"), InvalidArgument);
}

TEST_CASE("policy report examples") {
  const auto dir = scratch("policy");
  auto c = config_from(R"({"agents":[4],"noise":{"sigma_sq":[1]}})");
  c.out = dir.string();
  const auto uni = cmd_policy(c);
  CHECK(uni.objective.value() == doctest::Approx(0.25));
  CHECK(uni.lambda2 == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(fs::exists(dir / "policy.csv"));
  const auto doc = nlohmann::json::parse(slurp(dir / "policy.json"));
  CHECK(doc.at("valid").get<bool>());
  CHECK(doc.at("config_hash").get<std::string>() == c.hash());
  CHECK(read_config_hash(dir / "policy.csv") == c.hash());

  auto mh = config_from(R"({"agents":[2],"policy":"mh","noise":{"sigma_sq":[1,2]}})");
  mh.out = dir.string();
  const auto r = cmd_policy(mh);
  CHECK(r.objective.value() == doctest::Approx(2.0 / 3.0));
  CHECK(r.uniform_objective.value() == doctest::Approx(0.75));
  CHECK(r.perron(0) == doctest::Approx(2.0 / 3.0));

  // A file whose columns do not sum to one is reported and rejected.
  {
    std::ofstream bad(dir / "bad.csv");
    bad << "0.5,0.5\n0.6,0.5\n";
  }
  auto broken = c;
  broken.agents = {2};
  broken.policies = {(dir / "bad.csv").string()};
  CHECK_THROWS_AS(cmd_policy(broken), InvalidArgument);
}

TEST_CASE("run on a noiseless quadratic descends to the minimum") {
  const auto dir = scratch("run_quadratic");
  auto c = config_from(R"({"loss":{"kind":"quadratic","diag":[1,2]},"agents":[1],"mu":0.1,
                            "normalize":false,"noise":{"sigma_iso":[0]},"init":"1,1","iters":1000})");
  c.out = dir.string();
  const auto record = cmd_run(c);
  REQUIRE(record.rows.size() == 1000);
  for (std::size_t i = 1; i < record.rows.size(); ++i) {
    CHECK(record.rows[i].value <= record.rows[i - 1].value);
    CHECK_FALSE(record.rows[i].region.has_value());
  }
  CHECK(record.rows.back().grad_norm_sq <= 1e-12);
  CHECK(record.config_hash == c.hash());
  const auto rows = csv_rows(dir / "metrics.csv");
  CHECK(rows.size() == 1000);
  CHECK(rows.front().at(4) == "NA");
}

TEST_CASE("normalization without a noise profile is a configuration error") {
  auto c = config_from(R"({"loss":{"kind":"quadratic","diag":[1,2]},"agents":[1],
                            "noise":{"sigma_iso":[0]},"init":"1,1"})");
  c.out = scratch("run_norm").string();
  CHECK_THROWS_AS(cmd_run(c), InvalidArgument);
}

TEST_CASE("run: cadence, escape flag and reproducibility") {
  const auto dir = scratch("run_nn");
  auto c = config_from(R"({"agents":[4],"iters":995,"cadence":10,"mu":0.01,"normalize":false,"baselines":true})");
  c.out = (dir / "a").string();
  const auto record = cmd_run(c);
  CHECK(record.rows.size() == 100);
  CHECK(record.rows.back().iter == 995);
  CHECK(csv_rows(dir / "a" / "baseline.csv").size() == 100);

  // The flag matches an independent escape-time computation.
  const auto sc = build_scenario(c, 4, "uniform");
  const auto loss = make_loss(c.loss);
  const Eigen::VectorXd w0 = initial_point(c.init, *loss);
  const auto t = escape_time(sc.system(c.seeds.front(), 1), w0, default_epsilon_drop(*loss, w0), c.iters);
  CHECK(record.escape_iter == t);
  for (const auto& row : record.rows) {
    CHECK(row.escaped == (t.has_value() && row.iter >= *t));
    REQUIRE(row.region.has_value());
  }
  CHECK(record.rows.front().region == Region::H);

  auto parallel = c;
  parallel.workers = 3;
  parallel.out = (dir / "b").string();
  cmd_run(parallel);
  CHECK(slurp(dir / "a" / "metrics.csv") == slurp(dir / "b" / "metrics.csv"));
  CHECK(replay_matches(dir / "a" / "metrics.csv", parallel));

  auto other = c;
  other.seeds = {2};
  CHECK_FALSE(replay_matches(dir / "a" / "metrics.csv", other));
  CHECK(read_config_hash(dir / "nothing.csv").empty());
}

TEST_CASE("divergence leaves the rows written so far") {
  const auto dir = scratch("diverge");
  auto c = config_from(R"({"loss":{"kind":"quadratic","diag":[1]},"agents":[2],"mu":3,
                            "normalize":false,"noise":{"sigma_iso":[0]},"init":"1","iters":200})");
  c.out = dir.string();
  CHECK_THROWS_AS(cmd_run(c), DivergenceError);
  const auto rows = csv_rows(dir / "metrics.csv");
  CHECK(rows.size() > 30);
  CHECK(rows.size() < 60);
}

TEST_CASE("sweep outputs from synthetic escape times") {
  const auto dir = scratch("sweep_synthetic");
  SweepResult result;
  const std::vector<std::size_t> ks = {1, 2, 4};
  const std::vector<std::int64_t> medians = {100, 50, 25};
  for (std::size_t j = 0; j < ks.size(); ++j) {
    SweepCell cell;
    cell.agents = ks[j];
    cell.policy = "uniform";
    cell.stats = stats_from_times({medians[j] - 1, medians[j], medians[j] + 1});
    result.cells.push_back(cell);
    result.trajectories.push_back({ks[j], "uniform", {{0, 1.0}, {10, 0.5}}});
  }
  result.fits = fit_sweep(result.cells);
  REQUIRE(result.fits.size() == 1);
  REQUIRE(result.fits[0].fit.has_value());
  CHECK(result.fits[0].fit->slope == doctest::Approx(-1.0));
  write_sweep_outputs(dir, "abc", result);

  const std::string svg = slurp(dir / "escape_vs_K.svg");
  const auto at = svg.find("<polyline");
  REQUIRE(at != std::string::npos);
  const auto open = svg.find("points=\"", at) + 8;
  const std::string points = svg.substr(open, svg.find('"', open) - open);
  CHECK(std::count(points.begin(), points.end(), ',') == 3);
  CHECK(svg.find("<polyline", at + 1) == std::string::npos);
  CHECK(fs::exists(dir / "trajectories_uniform.svg"));

  const auto summary = nlohmann::json::parse(slurp(dir / "summary.json"));
  CHECK(summary.at("config_hash") == "abc");
  CHECK(read_config_hash(dir / "escape.csv") == "abc");
  CHECK(csv_rows(dir / "escape.csv").size() == 9);

  // A censored median skips the fit with a note.
  result.cells[2].stats.censored_count = 3;
  const auto skipped = fit_sweep(result.cells);
  CHECK_FALSE(skipped[0].fit.has_value());
  CHECK_FALSE(skipped[0].note.empty());
}

TEST_CASE("small sweep end to end") {
  const auto dir = scratch("sweep_small");
  auto c = config_from(R"({"agents":[1,4],"policy":["uniform","mh"],"mu":0.001,
                            "noise":{"sigma_sq":[0.02,0.08]},"seeds":{"count":5}})");
  c.out = dir.string();
  const auto r = cmd_sweep(c);
  REQUIRE(r.cells.size() == 4);
  CHECK(r.cells[0].agents == 1);
  CHECK(r.cells[3].agents == 4);
  for (const auto& cell : r.cells) CHECK(cell.stats.samples.size() == 5);
  CHECK(r.fits.size() == 2);
  for (const auto& f : r.fits) CHECK_FALSE(f.fit.has_value());  // only two K
  CHECK(fs::exists(dir / "trajectories_mh.svg"));
}

TEST_CASE("check suite") {
  auto c = config_from(R"({"agents":[4]})");
  const auto ok = cmd_check(c);
  CHECK(ok.passed());
  std::ostringstream text;
  print_check_report(text, ok);
  CHECK(text.str().find("FAIL") == std::string::npos);

  auto unstable = c;
  unstable.normalize = false;
  unstable.mu = 0.5;
  const auto bad = cmd_check(unstable);
  CHECK_FALSE(bad.passed());
  const auto item = std::find_if(bad.items.begin(), bad.items.end(),
                                 [](const CheckItem& i) { return i.name == "classifier.params"; });
  REQUIRE(item != bad.items.end());
  CHECK_FALSE(item->passed);

  // The transpose of an asymmetric policy is row-stochastic: its nonzero
  // pattern is still a graph, but the centroid identity breaks.
  const auto dir = scratch("check_transpose");
  const auto noise = NoiseProfile{{1, 4, 1, 4, 1, 4}, {0.5, 2, 0.5, 2, 0.5, 2}};
  const auto mh = asymmetric_mh_policy(build_graph(TopologyKind::ring, 6), noise);
  {
    std::ofstream f(dir / "transposed.csv");
    write_policy_csv(f, mh.matrix().transpose());
  }
  auto transposed = c;
  transposed.agents = {6};
  transposed.policies = {(dir / "transposed.csv").string()};
  const auto report = cmd_check(transposed);
  CHECK_FALSE(report.passed());
  for (const auto& i : report.items) {
    if (i.name == "centroid.identity" || i.name == "policy.valid") CHECK_FALSE(i.passed);
  }
}
