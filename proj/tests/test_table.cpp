#include "trajrec/table.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

using namespace trajrec;

TEST_CASE("table text round trip is exact") {
  Rng rng(1);
  Eigen::MatrixXd v(3, 4);
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = rng.uniform(-1e3, 1e3) / 7.0;
  v(0, 0) = 5e-324;
  v(1, 1) = -0.0;
  v(2, 2) = 1.0 / 3.0;
  EmbeddingTable t("kg", {10, 4, 7, 2}, v);
  t.fingerprint = "abc123";
  std::stringstream io;
  write_table(io, t);
  const EmbeddingTable back = read_table(io);
  CHECK(back.kind == "kg");
  CHECK(back.fingerprint == "abc123");
  CHECK(back.ids == t.ids);
  CHECK(back.vectors.cwiseEqual(t.vectors).all());
}

TEST_CASE("lookup and subset") {
  Eigen::MatrixXd v(2, 3);
  v << 1, 2, 3, 4, 5, 6;
  EmbeddingTable t("x", {5, 9, 1}, v);
  CHECK(t.find(9) == 1);
  CHECK(t.find(8) == -1);
  CHECK(t.vector(1) == Eigen::Vector2d(3, 6));
  const EmbeddingTable s = t.subset({1, 5});
  CHECK(s.ids == std::vector<NodeId>{1, 5});
  CHECK(s.vectors.col(1) == Eigen::Vector2d(1, 4));
  CHECK_THROWS_AS(t.subset({2}), DataError);
  CHECK_THROWS_AS(t.vector(2), DataError);
  CHECK_THROWS_AS(EmbeddingTable("x", {1, 2}, v), DimensionError);
}

TEST_CASE("malformed table files") {
  std::stringstream a("not json\n");
  CHECK_THROWS_AS(read_table(a), DataError);
  std::stringstream b("{\"kind\":\"kg\",\"dim\":2,\"count\":1,\"fingerprint\":\"\"}\n3\t1.0\n");
  CHECK_THROWS_AS(read_table(b), DataError);
  std::stringstream c("{\"kind\":\"kg\",\"dim\":1,\"count\":2,\"fingerprint\":\"\"}\n3\t1.0\n");
  CHECK_THROWS_AS(read_table(c), DataError);
  CHECK_THROWS_AS(load_table("/nonexistent/table.tsv"), DataError);
}

TEST_CASE("number formatting") {
  for (double d : {0.1, 1.0 / 3.0, 1e-300, 123456789.125, -2.5})
    CHECK(parse_double(format_double(d)) == d);
  CHECK_THROWS_AS(parse_double("1.5x"), DataError);
  CHECK_THROWS_AS(parse_double(""), DataError);
}

TEST_CASE("cosine similarity") {
  CHECK(cosine_similarity(Eigen::Vector2d(1, 0), Eigen::Vector2d(0, 3)) == doctest::Approx(0.0));
  CHECK(cosine_similarity(Eigen::Vector2d(1, 1), Eigen::Vector2d(2, 2)) == doctest::Approx(1.0));
  CHECK(cosine_similarity(Eigen::Vector2d(0, 0), Eigen::Vector2d(2, 2)) == 0.0);
}
