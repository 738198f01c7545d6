#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace sphynx::cellgraph {

// Candidate operations on cell edges. The sphynx space uses the first six;
// zero appears only in search-phase relaxations; the remaining kinds occur in
// legacy genotypes and are mapped away by convert_legacy.
enum class OpKind : int {
  conv3x3 = 0,
  conv5x5 = 1,
  dilconv3x3 = 2,
  dilconv5x5 = 3,
  avgpool3x3 = 4,
  identity = 5,
  zero = 6,
  maxpool3x3 = 7,
  sepconv3x3 = 8,
  sepconv5x5 = 9,
  sepdilconv3x3 = 10,
  sepdilconv5x5 = 11,
};

constexpr int kOpKindCount = 12;

const char* op_name(OpKind k);
std::optional<OpKind> op_from_name(const std::string& name);

// True for ReLU-Conv-BN style modules (every convolution kind, vanilla or
// separable, dilated or not). Pools, identity and zero carry no ReLU.
bool is_conv(OpKind k);

// Kernel size of the op's spatial window (1 for identity/zero).
int op_kernel(OpKind k);

// The six kinds legal in a final sphynx-space genotype.
const std::vector<OpKind>& sphynx_ops();
// Search-phase relaxation set: sphynx_ops plus zero.
const std::vector<OpKind>& sphynx_search_ops();

enum class Space { sphynx, legacy };
const char* space_name(Space s);
std::optional<Space> space_from_name(const std::string& name);

struct Edge {
  OpKind op;
  int src;
  int dst;
  bool operator==(const Edge&) const = default;
};

// One cell DAG: nodes 0 and 1 are inputs, 2..n-2 intermediates, n-1 the
// implicit concat output (never a stored edge endpoint).
struct CellSpec {
  int n = 0;
  std::vector<Edge> edges;
  bool operator==(const CellSpec&) const = default;

  int intermediates() const { return n - 3; }
};

struct Genotype {
  CellSpec normal;
  CellSpec reduce;
  Space space = Space::sphynx;
  bool operator==(const Genotype&) const = default;
};

struct Violation {
  std::string cell;   // "normal", "reduce" or "" for genotype-level rules
  int edge_index;     // -1 when not tied to a single edge
  std::string rule;   // short machine id
  std::string message;
};

struct ValidationReport {
  bool ok = true;
  std::vector<Violation> violations;
};

// Structural and op-set checks for a final genotype: src < dst, dst an
// intermediate, exactly two inputs per intermediate, ops legal in the tagged
// space, no zero edges.
ValidationReport validate(const Genotype& g);

// Map legacy kinds onto the sphynx set (separables to their vanilla
// counterparts, maxpool to avgpool) and retag. Identity on sphynx inputs, so
// convert_legacy(convert_legacy(g)) == convert_legacy(g).
Genotype convert_legacy(const Genotype& g);
OpKind convert_op(OpKind k);

struct CellDims {
  int h = 0;
  int w = 0;
  int c = 0;
};

struct SharingAnnotation {
  // fanout[v] = number of outgoing conv edges of node v (size n-1; the output
  // node has no outgoing edges).
  std::vector<int> fanout;
  // Nodes whose conv fanout is >= 2: one ReLU is computed once and reused.
  std::vector<int> shared_nodes;
  int64_t saved_relus = 0;
};

// Fanout analysis for legacy cells: a node feeding k >= 2 conv modules needs
// one ReLU instead of k, saving (k-1)*h*w*c activations.
SharingAnnotation relu_sharing_pass(const CellSpec& cell, const CellDims& dims);

// Deterministic Graphviz rendering (both cells as clusters, edges sorted).
std::string to_dot(const Genotype& g);

// JSON round trip, schema:
// {"n": 7, "normal": [["conv3x3", 0, 2], ...], "reduce": [...], "space": "sphynx"}
std::string serialize(const Genotype& g);
Genotype parse(const std::string& json_text);
Genotype load_genotype(const std::string& path);
void save_genotype(const Genotype& g, const std::string& path);

}  // namespace sphynx::cellgraph
