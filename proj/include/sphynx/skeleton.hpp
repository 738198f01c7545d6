#pragma once

#include <string>
#include <utility>
#include <vector>

#include "sphynx/accounting.hpp"

namespace sphynx::skeleton {

enum class StageKind { stem, normal_cell, reduce_cell, post };
const char* stage_name(StageKind k);

struct Stage {
  StageKind kind = StageKind::stem;
  int index = 0;  // stem index or cell index; 0 for post
  int h_in = 0, w_in = 0, c_in = 0;
  int h_out = 0, w_out = 0, c_out = 0;
  int64_t relus = 0;
  // Stage ids (positions in Skeleton::stages) feeding a cell's two inputs;
  // -1 for stems and the post stage.
  int input_a = -1;
  int input_b = -1;
};

struct Skeleton {
  accounting::NetworkPlan plan;
  std::vector<Stage> stages;
  int m1 = 0;  // normal cells before the first reduce
  int m2 = 0;  // between the reduces
  int m3 = 0;  // after the second reduce
  int64_t total_relus = 0;
};

// The three-conv ImageNet stem: 224 -> 112 -> 56 -> 28, widths 3 -> C/2 -> C
// -> C. Only the second and third convs are ReLU-fronted.
std::vector<Stage> imagenet_stem(int c);

// Assemble the full stage list for a plan: stem stages, D cell stages with
// their input wiring (cell 0 reads the stem twice for the direct stem, the
// last two stem stages for imagenet3), and the pooling/classifier tail.
Skeleton build_skeleton(const accounting::NetworkPlan& plan);

// All C(D,2) reduce placements in lexicographic order. exclude_last drops
// pairs that put a reduce in the final cell slot.
std::vector<std::pair<int, int>> enumerate_placements(int d, bool exclude_last = false);

std::string skeleton_json(const Skeleton& s);

}  // namespace sphynx::skeleton
