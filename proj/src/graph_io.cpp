#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cgf/error.hpp"
#include "cgf/graphdata.hpp"

namespace cgf {

std::string graph_to_json_line(const Graph& g) {
  nlohmann::ordered_json j;
  j["n"] = g.n();
  nlohmann::ordered_json edges = nlohmann::ordered_json::array();
  for (auto [u, v] : g.edges()) edges.push_back({u, v});
  j["edges"] = std::move(edges);
  return j.dump();
}

Graph graph_from_json_line(const std::string& line) {
  const auto j = nlohmann::json::parse(line);
  if (!j.is_object() || !j.contains("n") || !j.contains("edges")) {
    throw FormatError("expected an object with \"n\" and \"edges\"");
  }
  if (!j["n"].is_number_unsigned() && !(j["n"].is_number_integer() && j["n"].get<long long>() >= 0)) {
    throw FormatError("\"n\" must be a non-negative integer");
  }
  const auto n = j["n"].get<std::size_t>();
  std::vector<Edge> edges;
  for (const auto& e : j["edges"]) {
    if (!e.is_array() || e.size() != 2 || !e[0].is_number_integer() || !e[1].is_number_integer() ||
        e[0].get<long long>() < 0 || e[1].get<long long>() < 0) {
      throw FormatError("edge must be a pair of non-negative integers");
    }
    edges.emplace_back(e[0].get<std::uint32_t>(), e[1].get<std::uint32_t>());
  }
  return Graph(n, std::move(edges));
}

std::vector<Graph> parse_graphs(const std::string& text) {
  std::vector<Graph> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(graph_from_json_line(line));
    } catch (const std::exception& e) {
      throw FormatError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::vector<Graph> read_graphs(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_graphs(ss.str());
}

void write_graphs(const std::filesystem::path& path, std::span<const Graph> graphs) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot write " + path.string());
  for (const auto& g : graphs) f << graph_to_json_line(g) << '\n';
  if (!f) throw Error("write failed for " + path.string());
}

}  // namespace cgf
