#include "poismix/report_io.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace poismix {

namespace {
constexpr int kSchemaVersion = 1;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void JsonWriter::separator() {
  if (after_key_) {
    after_key_ = false;
    return;
  }
  if (!needs_comma_.empty()) {
    if (needs_comma_.back()) out_ += ",";
    needs_comma_.back() = true;
  }
}

JsonWriter& JsonWriter::begin_object() {
  separator();
  out_ += "{";
  needs_comma_.push_back(false);
  return *this;
}

JsonWriter& JsonWriter::end_object() {
  needs_comma_.pop_back();
  out_ += "}";
  return *this;
}

JsonWriter& JsonWriter::begin_array() {
  separator();
  out_ += "[";
  needs_comma_.push_back(false);
  return *this;
}

JsonWriter& JsonWriter::end_array() {
  needs_comma_.pop_back();
  out_ += "]";
  return *this;
}

JsonWriter& JsonWriter::key(const std::string& k) {
  separator();
  out_ += "\"" + k + "\":";
  after_key_ = true;
  return *this;
}

JsonWriter& JsonWriter::value(double v) {
  separator();
  out_ += std::isfinite(v) ? format_double(v) : "null";
  return *this;
}

JsonWriter& JsonWriter::value(int v) {
  separator();
  out_ += std::to_string(v);
  return *this;
}

JsonWriter& JsonWriter::value(std::uint64_t v) {
  separator();
  out_ += std::to_string(v);
  return *this;
}

JsonWriter& JsonWriter::value(bool v) {
  separator();
  out_ += v ? "true" : "false";
  return *this;
}

JsonWriter& JsonWriter::value(const char* v) { return value(std::string(v)); }

JsonWriter& JsonWriter::value(const std::string& v) {
  separator();
  out_ += "\"";
  for (char ch : v) {
    switch (ch) {
      case '"': out_ += "\\\""; break;
      case '\\': out_ += "\\\\"; break;
      case '\n': out_ += "\\n"; break;
      case '\t': out_ += "\\t"; break;
      case '\r': out_ += "\\r"; break;
      default: out_ += ch;
    }
  }
  out_ += "\"";
  return *this;
}

JsonWriter& JsonWriter::null_value() {
  separator();
  out_ += "null";
  return *this;
}

JsonWriter& JsonWriter::value(const Vec& v) {
  begin_array();
  for (Eigen::Index i = 0; i < v.size(); ++i) value(v(i));
  return end_array();
}

JsonWriter& JsonWriter::value(const std::vector<int>& v) {
  begin_array();
  for (int x : v) value(x);
  return end_array();
}

namespace {

void write_optional(JsonWriter& w, const char* name,
                    const std::optional<double>& v) {
  w.key(name);
  if (v.has_value()) {
    w.value(*v);
  } else {
    w.null_value();
  }
}

void write_optional(JsonWriter& w, const char* name, const std::optional<int>& v) {
  w.key(name);
  if (v.has_value()) {
    w.value(*v);
  } else {
    w.null_value();
  }
}

std::string csv_cell(const std::optional<double>& v) {
  return v.has_value() ? format_double(*v) : "";
}

std::string csv_cell(const std::optional<int>& v) {
  return v.has_value() ? std::to_string(*v) : "";
}

}  // namespace

std::string experiment_json(const ExperimentReport& report) {
  JsonWriter w;
  w.begin_object();
  w.key("schema_version").value(kSchemaVersion);
  w.key("experiment").value(report.experiment);
  w.key("seed").value(report.seed);
  w.key("replicates").value(report.replicates);
  w.key("inner_replicates").value(report.inner_replicates);
  w.key("fitter").value(report.fitter);
  w.key("rows").begin_array();
  for (const ConfigRow& row : report.rows) {
    w.begin_object();
    w.key("n_per_cluster").value(row.n_per_cluster);
    w.key("sigma_b").value(row.sigma_b);
    w.key("replicates").value(row.replicates);
    write_optional(w, "bc_mc", row.bc_mc);
    write_optional(w, "bc_mc_se", row.bc_mc_se);
    write_optional(w, "bc_analytic", row.bc_an);
    write_optional(w, "bc_analytic_se", row.bc_an_se);
    write_optional(w, "mean_k", row.mean_K);
    write_optional(w, "k_se", row.K_se);
    write_optional(w, "maic_fixed", row.maic_fixed);
    write_optional(w, "caic_fixed", row.caic_fixed);
    write_optional(w, "mean_aic", row.mean_aic);
    write_optional(w, "mean_maic", row.mean_maic);
    write_optional(w, "mean_caic", row.mean_caic);
    w.key("fit_failures").value(row.fit_failures);
    w.key("refit_failures").value(row.refit_failures);
    w.key("unreliable").value(row.unreliable);
    w.end_object();
  }
  w.end_array();
  w.end_object();
  std::string s = w.str();
  s += "\n";
  return s;
}

std::string experiment_csv(const ExperimentReport& report) {
  std::ostringstream out;
  if (report.experiment == "table1") {
    out << "n_per_cluster,sigma_b,replicates,bc_mc,bc_mc_se,bc_analytic,"
           "bc_analytic_se,mean_k,k_se,fit_failures,refit_failures,unreliable\n";
    for (const ConfigRow& r : report.rows) {
      out << r.n_per_cluster << ',' << format_double(r.sigma_b) << ','
          << r.replicates << ',' << csv_cell(r.bc_mc) << ','
          << csv_cell(r.bc_mc_se) << ',' << csv_cell(r.bc_an) << ','
          << csv_cell(r.bc_an_se) << ',' << csv_cell(r.mean_K) << ','
          << csv_cell(r.K_se) << ',' << r.fit_failures << ','
          << r.refit_failures << ',' << (r.unreliable ? 1 : 0) << '\n';
    }
  } else {
    out << "sigma_b,replicates,maic_fixed,caic_fixed,mean_aic,mean_maic,"
           "mean_caic,fit_failures,refit_failures,unreliable\n";
    for (const ConfigRow& r : report.rows) {
      out << format_double(r.sigma_b) << ',' << r.replicates << ','
          << csv_cell(r.maic_fixed) << ',' << csv_cell(r.caic_fixed) << ','
          << csv_cell(r.mean_aic) << ',' << csv_cell(r.mean_maic) << ','
          << csv_cell(r.mean_caic) << ',' << r.fit_failures << ','
          << r.refit_failures << ',' << (r.unreliable ? 1 : 0) << '\n';
    }
  }
  return out.str();
}

std::string criteria_means_csv(const ExperimentReport& report) {
  std::ostringstream out;
  out << "sigma_b,mean_aic,mean_maic,mean_caic\n";
  for (const ConfigRow& r : report.rows) {
    out << format_double(r.sigma_b) << ',' << csv_cell(r.mean_aic) << ','
        << csv_cell(r.mean_maic) << ',' << csv_cell(r.mean_caic) << '\n';
  }
  return out.str();
}

}  // namespace poismix
