#include "poismix/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace poismix {

namespace {

[[noreturn]] void fail(const std::string& name, int line, const std::string& msg) {
  throw std::runtime_error(name + ":" + std::to_string(line) + ": " + msg);
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_row(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

double parse_number(const std::string& tok, const std::string& name, int line,
                    const std::string& col) {
  double v = 0.0;
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || tok.empty()) {
    fail(name, line, "column " + col + ": cannot parse '" + tok + "' as a number");
  }
  return v;
}

}  // namespace

LoadedData read_clustered_csv(std::istream& in, const std::string& name) {
  std::string line;
  if (!std::getline(in, line)) fail(name, 1, "missing header row");
  const std::vector<std::string> header = split_row(line);
  if (header.size() < 2 || header[0] != "cluster_id" || header[1] != "y") {
    fail(name, 1, "header must start with 'cluster_id,y'");
  }
  int p = 0, q = 0;
  size_t col = 2;
  while (col < header.size() && header[col] == "x" + std::to_string(p + 1)) {
    ++p;
    ++col;
  }
  while (col < header.size() && header[col] == "z" + std::to_string(q + 1)) {
    ++q;
    ++col;
  }
  if (col != header.size()) {
    fail(name, 1, "unexpected column '" + header[col] +
                      "'; expected x1..xp then z1..zq");
  }
  const size_t ncols = 2 + static_cast<size_t>(p) + static_cast<size_t>(q);

  struct RawCluster {
    std::string id;
    std::vector<double> y;
    std::vector<double> x;  // row-major n_i x p
    std::vector<double> z;  // row-major n_i x q
  };
  std::vector<RawCluster> raw;
  std::unordered_set<std::string> seen;

  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const std::vector<std::string> row = split_row(line);
    if (row.size() != ncols) {
      fail(name, lineno,
           "expected " + std::to_string(ncols) + " fields, got " +
               std::to_string(row.size()));
    }
    const std::string& id = row[0];
    if (raw.empty() || raw.back().id != id) {
      if (seen.count(id)) {
        fail(name, lineno, "cluster '" + id +
                               "' reappears after other clusters; rows of a "
                               "cluster must be contiguous");
      }
      seen.insert(id);
      raw.push_back(RawCluster{id, {}, {}, {}});
    }
    RawCluster& rc = raw.back();
    const double yv = parse_number(row[1], name, lineno, "y");
    if (!(yv >= 0.0) || std::floor(yv) != yv) {
      fail(name, lineno, "y must be a non-negative integer (got '" + row[1] + "')");
    }
    rc.y.push_back(yv);
    for (int k = 0; k < p; ++k) {
      rc.x.push_back(parse_number(row[2 + static_cast<size_t>(k)], name, lineno,
                                  "x" + std::to_string(k + 1)));
    }
    for (int k = 0; k < q; ++k) {
      rc.z.push_back(parse_number(row[2 + static_cast<size_t>(p + k)], name,
                                  lineno, "z" + std::to_string(k + 1)));
    }
  }
  if (raw.empty()) fail(name, lineno + 1, "no data rows");

  std::vector<Cluster> clusters;
  std::vector<std::string> ids;
  clusters.reserve(raw.size());
  for (const RawCluster& rc : raw) {
    const int n_i = static_cast<int>(rc.y.size());
    Cluster cl;
    cl.y = Eigen::Map<const Vec>(rc.y.data(), n_i);
    cl.X = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                          Eigen::RowMajor>>(rc.x.data(), n_i, p);
    cl.Z = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                          Eigen::RowMajor>>(rc.z.data(), n_i, q);
    clusters.push_back(std::move(cl));
    ids.push_back(rc.id);
  }
  return LoadedData{ClusteredCounts(std::move(clusters)), std::move(ids)};
}

LoadedData read_clustered_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path + ": cannot open file");
  return read_clustered_csv(in, path);
}

}  // namespace poismix
