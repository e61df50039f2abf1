#pragma once

#include "trajrec/common.hpp"

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace trajrec {

// Fixed-dimension vectors keyed by node id, stored column-wise.
//
// On disk: one JSON header line {"kind", "dim", "count", "fingerprint"}
// followed by `count` TSV rows `id\tv1\t...\tvdim` written at 17 significant
// digits, which round-trips doubles exactly.
struct EmbeddingTable {
  std::string kind;
  std::string fingerprint;
  std::vector<NodeId> ids;   // column i holds the vector of ids[i]
  Eigen::MatrixXd vectors;   // dim x count

  EmbeddingTable() = default;
  EmbeddingTable(std::string kind, std::vector<NodeId> ids, Eigen::MatrixXd vectors);

  int dim() const { return static_cast<int>(vectors.rows()); }
  int count() const { return static_cast<int>(vectors.cols()); }

  // Column index of `id`, or -1.
  int find(NodeId id) const;
  bool contains(NodeId id) const { return find(id) >= 0; }
  Eigen::VectorXd vector(NodeId id) const;

  // Table restricted to `ids` (in that order); throws DataError on a missing id.
  EmbeddingTable subset(const std::vector<NodeId>& ids) const;

  bool all_finite() const { return vectors.allFinite(); }
};

using RelationTable = EmbeddingTable;

void write_table(std::ostream& out, const EmbeddingTable& table);
EmbeddingTable read_table(std::istream& in);
void save_table(const std::string& path, const EmbeddingTable& table);
EmbeddingTable load_table(const std::string& path);

std::string format_double(double value);
double parse_double(std::string_view text);

double cosine_similarity(const Eigen::Ref<const Eigen::VectorXd>& a,
                         const Eigen::Ref<const Eigen::VectorXd>& b);

}  // namespace trajrec
