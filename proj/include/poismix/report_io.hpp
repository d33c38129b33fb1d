#ifndef POISMIX_REPORT_IO_HPP
#define POISMIX_REPORT_IO_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "poismix/criteria.hpp"
#include "poismix/simlab.hpp"

namespace poismix {

/// %.17g rendering; every double round-trips and identical inputs always
/// produce identical bytes.
std::string format_double(double v);

/// Minimal streaming JSON writer with caller-controlled key order and
/// format_double for numbers, so reports are byte-reproducible.
class JsonWriter {
 public:
  JsonWriter& begin_object();
  JsonWriter& end_object();
  JsonWriter& begin_array();
  JsonWriter& end_array();
  JsonWriter& key(const std::string& k);
  JsonWriter& value(double v);
  JsonWriter& value(int v);
  JsonWriter& value(std::uint64_t v);
  JsonWriter& value(bool v);
  JsonWriter& value(const char* v);
  JsonWriter& value(const std::string& v);
  JsonWriter& null_value();
  JsonWriter& value(const Vec& v);
  JsonWriter& value(const std::vector<int>& v);

  std::string str() const { return out_; }

 private:
  void separator();
  std::string out_;
  std::vector<bool> needs_comma_;
  bool after_key_ = false;
};

/// Experiment report serializers. Wall clock is deliberately omitted so the
/// files depend only on seed and configuration.
std::string experiment_json(const ExperimentReport& report);
std::string experiment_csv(const ExperimentReport& report);
/// Plot-ready mean criteria per sigma_b (selection experiments).
std::string criteria_means_csv(const ExperimentReport& report);

}  // namespace poismix

#endif  // POISMIX_REPORT_IO_HPP
