#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "poismix/csv.hpp"

using namespace poismix;

namespace {

LoadedData parse(const std::string& text) {
  std::istringstream in(text);
  return read_clustered_csv(in, "test.csv");
}

std::string error_of(const std::string& text) {
  try {
    (void)parse(text);
  } catch (const std::runtime_error& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("well-formed file round trips") {
  const LoadedData loaded = parse(
      "cluster_id,y,x1,x2,z1\n"
      "a,3,1,0,1\n"
      "a,5,1,1,1\n"
      "b,2,1,0,1\n"
      "b,0,1,1,1\n");
  const ClusteredCounts& data = loaded.data;
  CHECK(data.num_clusters() == 2);
  CHECK(data.p() == 2);
  CHECK(data.q() == 1);
  CHECK(data.total_obs() == 4);
  CHECK(data.cluster(0).y(1) == 5.0);
  CHECK(data.cluster(1).X(1, 1) == 1.0);
  CHECK(data.cluster(1).Z(0, 0) == 1.0);
  CHECK(loaded.cluster_ids == std::vector<std::string>{"a", "b"});
}

TEST_CASE("whitespace and blank lines tolerated") {
  const LoadedData loaded = parse(
      "cluster_id,y,x1\n"
      " 1 , 2 , 0.5 \n"
      "\n"
      "2,1,0.25\n");
  CHECK(loaded.data.num_clusters() == 2);
  CHECK(loaded.data.q() == 0);
  CHECK(loaded.data.cluster(0).X(0, 0) == 0.5);
}

TEST_CASE("header errors") {
  CHECK(error_of("id,y,x1\n1,1,1\n").find("cluster_id") != std::string::npos);
  CHECK(error_of("cluster_id,y,x1,x3\n").find("x3") != std::string::npos);
  // z columns must come after all x columns
  CHECK(error_of("cluster_id,y,z1,x1\n1,1,1,1\n").find("x1") != std::string::npos);
  CHECK(error_of("").find("test.csv:1") != std::string::npos);
}

TEST_CASE("count validation carries line numbers") {
  const std::string err = error_of(
      "cluster_id,y,x1\n"
      "1,2,0\n"
      "1,-3,1\n");
  CHECK(err.find("test.csv:3") != std::string::npos);
  CHECK(err.find("non-negative integer") != std::string::npos);

  const std::string err2 = error_of(
      "cluster_id,y,x1\n"
      "1,2.5,0\n");
  CHECK(err2.find("test.csv:2") != std::string::npos);
}

TEST_CASE("non-contiguous clusters rejected with line number") {
  const std::string err = error_of(
      "cluster_id,y,x1\n"
      "1,2,0\n"
      "2,1,1\n"
      "1,4,2\n");
  CHECK(err.find("test.csv:4") != std::string::npos);
  CHECK(err.find("contiguous") != std::string::npos);
}

TEST_CASE("field count and number parsing errors") {
  CHECK(error_of("cluster_id,y,x1\n1,2\n").find("expected 3 fields") !=
        std::string::npos);
  const std::string err = error_of("cluster_id,y,x1\n1,2,abc\n");
  CHECK(err.find("x1") != std::string::npos);
  CHECK(err.find("abc") != std::string::npos);
}

TEST_CASE("missing file reports the path") {
  try {
    (void)read_clustered_csv_file("/nonexistent/file.csv");
    FAIL("expected error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("/nonexistent/file.csv") !=
          std::string::npos);
  }
}
