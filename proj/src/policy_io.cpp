#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "diffnet/error.hpp"
#include "diffnet/topology.hpp"

namespace diffnet {

namespace {
constexpr const char* kPolicyHeader = "# left-stochastic, entry(l,k)=a_lk";

std::string format_double(double value) {
  char buffer[32];
  std::snprintf(buffer, sizeof buffer, "%.17g", value);
  return buffer;
}
}  // namespace

void write_policy_csv(std::ostream& out, const Eigen::MatrixXd& matrix) {
  out << kPolicyHeader << '\n';
  for (Eigen::Index l = 0; l < matrix.rows(); ++l) {
    for (Eigen::Index k = 0; k < matrix.cols(); ++k) {
      if (k) out << ',';
      out << format_double(matrix(l, k));
    }
    out << '\n';
  }
}

Eigen::MatrixXd read_policy_csv(std::istream& in) {
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    std::vector<double> row;
    std::stringstream fields(line);
    std::string cell;
    while (std::getline(fields, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
      } catch (const std::exception&) {
        throw InvalidArgument("policy csv: cannot parse '" + cell + "'");
      }
    }
    rows.push_back(std::move(row));
  }
  const auto n = rows.size();
  if (n == 0) throw InvalidArgument("policy csv: no rows");
  Eigen::MatrixXd matrix(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t l = 0; l < n; ++l) {
    if (rows[l].size() != n) {
      throw InvalidArgument("policy csv: row " + std::to_string(l) + " has " +
                            std::to_string(rows[l].size()) + " entries, expected " +
                            std::to_string(n));
    }
    for (std::size_t k = 0; k < n; ++k) {
      matrix(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(k)) = rows[l][k];
    }
  }
  return matrix;
}

Eigen::MatrixXd load_policy_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open policy file '" + path + "'");
  return read_policy_csv(in);
}

std::string noise_profile_to_json(const NoiseProfile& noise) {
  nlohmann::json doc = nlohmann::json::array();
  for (std::size_t k = 0; k < noise.size(); ++k) {
    doc.push_back({{"agent", k}, {"sigma_sq", noise.sigma_sq[k]},
                   {"sigma_lower_sq", noise.sigma_lower_sq[k]}});
  }
  return doc.dump(2);
}

NoiseProfile noise_profile_from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("noise profile json: ") + e.what());
  }
  if (!doc.is_array()) throw InvalidArgument("noise profile json: expected an array");
  NoiseProfile profile;
  profile.sigma_sq.assign(doc.size(), 0.0);
  profile.sigma_lower_sq.assign(doc.size(), 0.0);
  std::vector<bool> seen(doc.size(), false);
  for (const auto& entry : doc) {
    const auto agent = entry.at("agent").get<std::size_t>();
    if (agent >= doc.size() || seen[agent]) {
      throw InvalidArgument("noise profile json: bad or duplicate agent index " +
                            std::to_string(agent));
    }
    seen[agent] = true;
    profile.sigma_sq[agent] = entry.at("sigma_sq").get<double>();
    profile.sigma_lower_sq[agent] = entry.at("sigma_lower_sq").get<double>();
  }
  profile.validate();
  return profile;
}

}  // namespace diffnet
