#include "sphynx/cellgraph.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"
#include "sphynx/error.hpp"

namespace sphynx::cellgraph {

namespace {
const char* kOpNames[kOpKindCount] = {
    "conv3x3",    "conv5x5",    "dilconv3x3",    "dilconv5x5",
    "avgpool3x3", "identity",   "zero",          "maxpool3x3",
    "sepconv3x3", "sepconv5x5", "sepdilconv3x3", "sepdilconv5x5",
};
}

const char* op_name(OpKind k) { return kOpNames[static_cast<int>(k)]; }

std::optional<OpKind> op_from_name(const std::string& name) {
  for (int i = 0; i < kOpKindCount; ++i)
    if (name == kOpNames[i]) return static_cast<OpKind>(i);
  return std::nullopt;
}

bool is_conv(OpKind k) {
  switch (k) {
    case OpKind::conv3x3:
    case OpKind::conv5x5:
    case OpKind::dilconv3x3:
    case OpKind::dilconv5x5:
    case OpKind::sepconv3x3:
    case OpKind::sepconv5x5:
    case OpKind::sepdilconv3x3:
    case OpKind::sepdilconv5x5:
      return true;
    default:
      return false;
  }
}

int op_kernel(OpKind k) {
  switch (k) {
    case OpKind::conv3x3:
    case OpKind::dilconv3x3:
    case OpKind::sepconv3x3:
    case OpKind::sepdilconv3x3:
    case OpKind::avgpool3x3:
    case OpKind::maxpool3x3:
      return 3;
    case OpKind::conv5x5:
    case OpKind::dilconv5x5:
    case OpKind::sepconv5x5:
    case OpKind::sepdilconv5x5:
      return 5;
    default:
      return 1;
  }
}

const std::vector<OpKind>& sphynx_ops() {
  static const std::vector<OpKind> ops = {OpKind::conv3x3,    OpKind::conv5x5,
                                          OpKind::dilconv3x3, OpKind::dilconv5x5,
                                          OpKind::avgpool3x3, OpKind::identity};
  return ops;
}

const std::vector<OpKind>& sphynx_search_ops() {
  static const std::vector<OpKind> ops = {OpKind::conv3x3,    OpKind::conv5x5,
                                          OpKind::dilconv3x3, OpKind::dilconv5x5,
                                          OpKind::avgpool3x3, OpKind::identity,
                                          OpKind::zero};
  return ops;
}

const char* space_name(Space s) { return s == Space::sphynx ? "sphynx" : "legacy"; }

std::optional<Space> space_from_name(const std::string& name) {
  if (name == "sphynx") return Space::sphynx;
  if (name == "legacy") return Space::legacy;
  return std::nullopt;
}

namespace {

bool op_legal(OpKind k, Space s) {
  if (k == OpKind::zero) return false;  // search-phase only
  if (s == Space::legacy) return true;
  const auto& ops = sphynx_ops();
  return std::find(ops.begin(), ops.end(), k) != ops.end();
}

void validate_cell(const CellSpec& cell, Space space, const char* name,
                   ValidationReport& rep) {
  auto bad = [&](int edge_index, const std::string& rule, const std::string& msg) {
    rep.ok = false;
    rep.violations.push_back({name, edge_index, rule, msg});
  };

  if (cell.n < 4) {
    bad(-1, "node-count", "cell needs two inputs, one intermediate and an output");
    return;
  }
  std::vector<int> indegree(cell.n, 0);
  for (size_t i = 0; i < cell.edges.size(); ++i) {
    const Edge& e = cell.edges[i];
    std::ostringstream what;
    if (e.dst < 2 || e.dst > cell.n - 2) {
      what << "edge dst " << e.dst << " is not an intermediate node";
      bad(static_cast<int>(i), "edge-dst", what.str());
      continue;
    }
    if (e.src < 0 || e.src >= e.dst) {
      what << "edge src " << e.src << " must satisfy 0 <= src < dst";
      bad(static_cast<int>(i), "edge-src", what.str());
      continue;
    }
    indegree[e.dst]++;
    if (!op_legal(e.op, space)) {
      what << "op " << op_name(e.op) << " is not legal in the "
           << space_name(space) << " space";
      bad(static_cast<int>(i), "op-space", what.str());
    }
  }
  for (int v = 2; v <= cell.n - 2; ++v) {
    if (indegree[v] != 2) {
      std::ostringstream what;
      what << "intermediate node " << v << " has " << indegree[v]
           << " incoming edges, expected 2";
      bad(-1, "indegree", what.str());
    }
  }
}

}  // namespace

ValidationReport validate(const Genotype& g) {
  ValidationReport rep;
  if (g.normal.n != g.reduce.n) {
    rep.ok = false;
    rep.violations.push_back(
        {"", -1, "node-count", "normal and reduce cells must share the node count"});
  }
  validate_cell(g.normal, g.space, "normal", rep);
  validate_cell(g.reduce, g.space, "reduce", rep);
  return rep;
}

OpKind convert_op(OpKind k) {
  switch (k) {
    case OpKind::sepconv3x3: return OpKind::conv3x3;
    case OpKind::sepconv5x5: return OpKind::conv5x5;
    case OpKind::sepdilconv3x3: return OpKind::dilconv3x3;
    case OpKind::sepdilconv5x5: return OpKind::dilconv5x5;
    case OpKind::maxpool3x3: return OpKind::avgpool3x3;
    default: return k;
  }
}

Genotype convert_legacy(const Genotype& g) {
  ValidationReport rep = validate(g);
  if (!rep.ok)
    throw Error("invalid-genotype", "convert_legacy requires a valid genotype",
                rep.violations.front().message);
  Genotype out = g;
  for (Edge& e : out.normal.edges) e.op = convert_op(e.op);
  for (Edge& e : out.reduce.edges) e.op = convert_op(e.op);
  out.space = Space::sphynx;
  return out;
}

SharingAnnotation relu_sharing_pass(const CellSpec& cell, const CellDims& dims) {
  SharingAnnotation ann;
  ann.fanout.assign(std::max(cell.n - 1, 0), 0);
  for (const Edge& e : cell.edges)
    if (is_conv(e.op) && e.src >= 0 && e.src < static_cast<int>(ann.fanout.size()))
      ann.fanout[e.src]++;
  const int64_t plane = static_cast<int64_t>(dims.h) * dims.w * dims.c;
  for (size_t v = 0; v < ann.fanout.size(); ++v) {
    if (ann.fanout[v] >= 2) {
      ann.shared_nodes.push_back(static_cast<int>(v));
      ann.saved_relus += static_cast<int64_t>(ann.fanout[v] - 1) * plane;
    }
  }
  return ann;
}

namespace {

void cell_dot(std::ostringstream& out, const CellSpec& cell, const char* name) {
  out << "  subgraph cluster_" << name << " {\n";
  out << "    label=\"" << name << "\";\n";
  for (int v = 0; v < cell.n; ++v) {
    const char* shape = (v < 2) ? "box" : (v == cell.n - 1 ? "doubleoctagon" : "ellipse");
    const char* role = (v < 2) ? "in" : (v == cell.n - 1 ? "out" : "node");
    out << "    " << name << v << " [label=\"" << role << " " << v
        << "\", shape=" << shape << "];\n";
  }
  std::vector<Edge> edges = cell.edges;
  std::sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) {
    if (a.dst != b.dst) return a.dst < b.dst;
    if (a.src != b.src) return a.src < b.src;
    return static_cast<int>(a.op) < static_cast<int>(b.op);
  });
  for (const Edge& e : edges)
    out << "    " << name << e.src << " -> " << name << e.dst << " [label=\""
        << op_name(e.op) << "\"];\n";
  // implicit concat of intermediates into the output node
  for (int v = 2; v <= cell.n - 2; ++v)
    out << "    " << name << v << " -> " << name << cell.n - 1
        << " [style=dashed];\n";
  out << "  }\n";
}

}  // namespace

std::string to_dot(const Genotype& g) {
  std::ostringstream out;
  out << "digraph genotype {\n";
  out << "  rankdir=LR;\n";
  cell_dot(out, g.normal, "normal");
  cell_dot(out, g.reduce, "reduce");
  out << "}\n";
  return out.str();
}

namespace {

nlohmann::json edges_json(const CellSpec& cell) {
  nlohmann::json arr = nlohmann::json::array();
  for (const Edge& e : cell.edges)
    arr.push_back(nlohmann::json::array({op_name(e.op), e.src, e.dst}));
  return arr;
}

CellSpec edges_from_json(const nlohmann::json& arr, int n, const char* which) {
  if (!arr.is_array())
    throw Error("parse", std::string(which) + " cell must be an array of edges");
  CellSpec cell;
  cell.n = n;
  for (const auto& item : arr) {
    if (!item.is_array() || item.size() != 3 || !item[0].is_string() ||
        !item[1].is_number_integer() || !item[2].is_number_integer())
      throw Error("parse", std::string(which) + " edge must be [op, src, dst]");
    auto op = op_from_name(item[0].get<std::string>());
    if (!op)
      throw Error("parse", "unknown op name", item[0].get<std::string>());
    cell.edges.push_back({*op, item[1].get<int>(), item[2].get<int>()});
  }
  return cell;
}

}  // namespace

std::string serialize(const Genotype& g) {
  nlohmann::json j;
  j["n"] = g.normal.n;
  j["normal"] = edges_json(g.normal);
  j["reduce"] = edges_json(g.reduce);
  j["space"] = space_name(g.space);
  return j.dump(2) + "\n";
}

Genotype parse(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error("parse", "genotype is not valid JSON", e.what());
  }
  if (!j.is_object() || !j.contains("n") || !j.contains("normal") ||
      !j.contains("reduce") || !j.contains("space"))
    throw Error("parse", "genotype needs keys n, normal, reduce, space");
  if (!j["n"].is_number_integer())
    throw Error("parse", "genotype n must be an integer");
  int n = j["n"].get<int>();
  auto space = j["space"].is_string()
                   ? space_from_name(j["space"].get<std::string>())
                   : std::nullopt;
  if (!space)
    throw Error("parse", "genotype space must be \"sphynx\" or \"legacy\"");
  Genotype g;
  g.normal = edges_from_json(j["normal"], n, "normal");
  g.reduce = edges_from_json(j["reduce"], n, "reduce");
  g.space = *space;
  return g;
}

Genotype load_genotype(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("io", "cannot open genotype file", path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

void save_genotype(const Genotype& g, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("io", "cannot write genotype file", path);
  out << serialize(g);
}

}  // namespace sphynx::cellgraph
