#include "trajrec/table.hpp"

#include <nlohmann/json.hpp>

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace trajrec {

EmbeddingTable::EmbeddingTable(std::string kind_, std::vector<NodeId> ids_, Eigen::MatrixXd vectors_)
    : kind(std::move(kind_)), ids(std::move(ids_)), vectors(std::move(vectors_)) {
  if (static_cast<Eigen::Index>(ids.size()) != vectors.cols())
    throw DimensionError("EmbeddingTable: id count does not match column count");
}

int EmbeddingTable::find(NodeId id) const {
  // Tables are small and usually dense from 0; try the direct slot first.
  if (id >= 0 && id < count() && ids[id] == id) return id;
  for (int i = 0; i < count(); ++i)
    if (ids[i] == id) return i;
  return -1;
}

Eigen::VectorXd EmbeddingTable::vector(NodeId id) const {
  int col = find(id);
  if (col < 0) throw DataError("EmbeddingTable: no vector for id " + std::to_string(id));
  return vectors.col(col);
}

EmbeddingTable EmbeddingTable::subset(const std::vector<NodeId>& wanted) const {
  Eigen::MatrixXd out(dim(), static_cast<Eigen::Index>(wanted.size()));
  for (std::size_t i = 0; i < wanted.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = vector(wanted[i]);
  EmbeddingTable table(kind, wanted, std::move(out));
  table.fingerprint = fingerprint;
  return table;
}

std::string format_double(double value) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value, std::chars_format::general, 17);
  if (ec != std::errc()) throw NumericError("format_double: conversion failed");
  return std::string(buf, end);
}

double parse_double(std::string_view text) {
  double value = 0.0;
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || end != text.data() + text.size())
    throw DataError("cannot parse number '" + std::string(text) + "'");
  return value;
}

double cosine_similarity(const Eigen::Ref<const Eigen::VectorXd>& a,
                         const Eigen::Ref<const Eigen::VectorXd>& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.dot(b) / (na * nb);
}

void write_table(std::ostream& out, const EmbeddingTable& table) {
  nlohmann::ordered_json header;
  header["kind"] = table.kind;
  header["dim"] = table.dim();
  header["count"] = table.count();
  header["fingerprint"] = table.fingerprint;
  out << header.dump() << '\n';
  for (int c = 0; c < table.count(); ++c) {
    out << table.ids[c];
    for (int r = 0; r < table.dim(); ++r) out << '\t' << format_double(table.vectors(r, c));
    out << '\n';
  }
}

EmbeddingTable read_table(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("table: missing header");
  nlohmann::json header;
  int dim = 0;
  int count = 0;
  EmbeddingTable table;
  try {
    header = nlohmann::json::parse(line);
    table.kind = header.at("kind").get<std::string>();
    dim = header.at("dim").get<int>();
    count = header.at("count").get<int>();
    table.fingerprint = header.value("fingerprint", std::string());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("table: bad header: ") + e.what());
  }
  if (dim < 0 || count < 0) throw DataError("table: negative shape in header");

  table.vectors.resize(dim, count);
  table.ids.resize(count);
  for (int c = 0; c < count; ++c) {
    if (!std::getline(in, line))
      throw DataError("table: expected " + std::to_string(count) + " rows, got " + std::to_string(c));
    std::vector<std::string_view> fields;
    std::string_view rest(line);
    while (true) {
      auto tab = rest.find('\t');
      fields.push_back(rest.substr(0, tab));
      if (tab == std::string_view::npos) break;
      rest.remove_prefix(tab + 1);
    }
    if (static_cast<int>(fields.size()) != dim + 1)
      throw DataError("table: row " + std::to_string(c + 1) + " has wrong field count");
    table.ids[c] = static_cast<NodeId>(parse_double(fields[0]));
    for (int r = 0; r < dim; ++r) table.vectors(r, c) = parse_double(fields[r + 1]);
  }
  return table;
}

void save_table(const std::string& path, const EmbeddingTable& table) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  write_table(out, table);
}

EmbeddingTable load_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path);
  return read_table(in);
}

}  // namespace trajrec
