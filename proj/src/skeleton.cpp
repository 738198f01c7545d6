#include "sphynx/skeleton.hpp"

#include <sstream>

#include "json.hpp"
#include "sphynx/error.hpp"

namespace sphynx::skeleton {

const char* stage_name(StageKind k) {
  switch (k) {
    case StageKind::stem: return "stem";
    case StageKind::normal_cell: return "normal_cell";
    case StageKind::reduce_cell: return "reduce_cell";
    case StageKind::post: return "post";
  }
  return "?";
}

std::vector<Stage> imagenet_stem(int c) {
  if (c < 2 || c % 2 != 0) throw Error("stem-channel-split", "stem channel split");
  std::vector<Stage> stems(3);
  stems[0] = {StageKind::stem, 0, 224, 224, 3, 112, 112, c / 2, 0, -1, -1};
  stems[1] = {StageKind::stem, 1, 112, 112, c / 2, 56, 56, c,
              112LL * 112LL * (c / 2), -1, -1};
  stems[2] = {StageKind::stem, 2, 56, 56, c, 28, 28, c, 56LL * 56LL * c, -1, -1};
  return stems;
}

Skeleton build_skeleton(const accounting::NetworkPlan& plan) {
  accounting::validate_plan(plan);
  Skeleton s;
  s.plan = plan;
  const auto [r1, r2] = plan.placement;
  s.m1 = r1;
  s.m2 = r2 - r1 - 1;
  s.m3 = plan.d - r2 - 1;

  if (plan.stem == accounting::StemKind::imagenet3) {
    s.stages = imagenet_stem(plan.c);
  } else {
    s.stages.push_back(
        {StageKind::stem, 0, plan.h0, plan.w0, 3, plan.h0, plan.w0, plan.c, 0, -1, -1});
  }

  const int stem_count = static_cast<int>(s.stages.size());
  const auto dims = accounting::cell_dims(plan);
  for (int i = 0; i < plan.d; ++i) {
    const auto& cc = dims[i];
    const Stage& prev = s.stages.back();
    Stage st;
    st.kind = cc.reduce ? StageKind::reduce_cell : StageKind::normal_cell;
    st.index = i;
    st.h_in = prev.h_out;
    st.w_in = prev.w_out;
    st.c_in = prev.c_out;
    st.h_out = cc.h;
    st.w_out = cc.w;
    st.c_out = cc.c;
    st.relus = static_cast<int64_t>(cc.h) * cc.w * cc.c;
    if (i == 0) {
      st.input_a = stem_count - 1;
      st.input_b = stem_count >= 2 ? stem_count - 2 : stem_count - 1;
    } else {
      st.input_a = static_cast<int>(s.stages.size()) - 1;
      st.input_b = st.input_a - 1;
    }
    s.stages.push_back(st);
  }

  const Stage& last = s.stages.back();
  s.stages.push_back({StageKind::post, 0, last.h_out, last.w_out, last.c_out, 1, 1,
                      last.c_out, 0, -1, -1});

  for (const Stage& st : s.stages) s.total_relus += st.relus;
  return s;
}

std::vector<std::pair<int, int>> enumerate_placements(int d, bool exclude_last) {
  if (d < 2) throw Error("plan", "need at least two cells for two reduces");
  std::vector<std::pair<int, int>> out;
  const int hi = exclude_last ? d - 1 : d;
  for (int i = 0; i < hi; ++i)
    for (int j = i + 1; j < hi; ++j) out.emplace_back(i, j);
  return out;
}

std::string skeleton_json(const Skeleton& s) {
  nlohmann::json j;
  j["plan"] = {{"h0", s.plan.h0},
               {"w0", s.plan.w0},
               {"c", s.plan.c},
               {"d", s.plan.d},
               {"placement", {s.plan.placement.first, s.plan.placement.second}},
               {"stem", accounting::stem_name(s.plan.stem)},
               {"balancing", accounting::balancing_name(s.plan.balancing)}};
  j["m1"] = s.m1;
  j["m2"] = s.m2;
  j["m3"] = s.m3;
  j["total_relus"] = s.total_relus;
  j["stages"] = nlohmann::json::array();
  for (const Stage& st : s.stages)
    j["stages"].push_back({{"kind", stage_name(st.kind)},
                           {"index", st.index},
                           {"h_in", st.h_in},
                           {"w_in", st.w_in},
                           {"c_in", st.c_in},
                           {"h_out", st.h_out},
                           {"w_out", st.w_out},
                           {"c_out", st.c_out},
                           {"relus", st.relus},
                           {"input_a", st.input_a},
                           {"input_b", st.input_b}});
  return j.dump(2) + "\n";
}

}  // namespace sphynx::skeleton
