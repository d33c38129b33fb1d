#ifndef POISMIX_CSV_HPP
#define POISMIX_CSV_HPP

#include <iosfwd>
#include <string>
#include <vector>

#include "poismix/types.hpp"

namespace poismix {

/// A parsed dataset plus the cluster labels in file order.
struct LoadedData {
  ClusteredCounts data;
  std::vector<std::string> cluster_ids;
};

/// Reads the clustered-counts CSV format:
///   cluster_id,y,x1,...,xp,z1,...,zq
/// Header row is required; x and z columns must be numbered consecutively
/// from 1. Rows of a cluster must be contiguous. Errors are
/// std::runtime_error with "<name>:<line>: message" diagnostics.
LoadedData read_clustered_csv(std::istream& in, const std::string& name);
LoadedData read_clustered_csv_file(const std::string& path);

}  // namespace poismix

#endif  // POISMIX_CSV_HPP
