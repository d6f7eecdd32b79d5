// Copyright 2026 The vrd25 Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Majority voting over rater votes and the five depth difficulty scales.
//
// With five votes over {A_CLOSER, B_CLOSER, SAME_DEPTH, UNSURE}:
//   INFEASIBLE  three or more UNSURE votes; label UNSURE
//   EASY        all five votes agree on a non-UNSURE value
//   MODERATE    exactly four agree on a non-UNSURE value
//   DIFFICULT   exactly three agree on a non-UNSURE value
//   AMBIGUOUS   no value reaches three votes; no label
// Occlusion follows the same three-vote threshold and is left unlabelled
// when no value reaches it. No tie-break is ever needed.

#ifndef VRD25_AGGREGATION_HPP_
#define VRD25_AGGREGATION_HPP_

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "vrd25/core.hpp"

namespace vrd25 {

struct VoteRecord {
  std::string pair_id;
  std::string rater_id;
  DepthPredicate depth_vote = DepthPredicate::kUnsure;
  std::optional<OcclusionPredicate> occlusion_vote;
  std::int64_t timestamp_unix_ms = 0;

  friend bool operator==(const VoteRecord&, const VoteRecord&) = default;
};

struct AggregatedLabel {
  std::string pair_id;
  std::optional<DepthPredicate> depth;  // empty when AMBIGUOUS
  std::optional<OcclusionPredicate> occlusion;
  Difficulty difficulty = Difficulty::kAmbiguous;
  std::array<int, 4> depth_histogram{};
  std::array<int, 4> occlusion_histogram{};

  friend bool operator==(const AggregatedLabel&, const AggregatedLabel&) =
      default;
};

inline constexpr int kEvalVotesPerPair = 5;
inline constexpr int kMajority = 3;

// Classifies a depth histogram over the five-vote space.
inline Difficulty classify_depth_histogram(const std::array<int, 4>& hist,
                                           std::optional<DepthPredicate>* label) {
  const int unsure = hist[code(DepthPredicate::kUnsure)];
  if (unsure >= kMajority) {
    if (label) *label = DepthPredicate::kUnsure;
    return Difficulty::kInfeasible;
  }
  int best = 0;
  std::optional<DepthPredicate> best_label;
  for (DepthPredicate p : {DepthPredicate::kACloser, DepthPredicate::kBCloser,
                           DepthPredicate::kSameDepth}) {
    if (hist[code(p)] > best) {
      best = hist[code(p)];
      best_label = p;
    }
  }
  if (best < kMajority) {
    if (label) label->reset();
    return Difficulty::kAmbiguous;
  }
  if (label) *label = best_label;
  if (best == 5) return Difficulty::kEasy;
  if (best == 4) return Difficulty::kModerate;
  return Difficulty::kDifficult;
}

inline AggregatedLabel aggregate_pair(const std::vector<VoteRecord>& votes) {
  if (votes.size() != static_cast<std::size_t>(kEvalVotesPerPair)) {
    throw ValidationError("expected " + std::to_string(kEvalVotesPerPair) +
                          " votes, got " + std::to_string(votes.size()));
  }
  AggregatedLabel out;
  out.pair_id = votes.front().pair_id;
  std::set<std::string> raters;
  int occlusion_votes = 0;
  for (const auto& v : votes) {
    if (v.pair_id != out.pair_id) {
      throw ValidationError("votes mix pairs " + out.pair_id + " and " +
                            v.pair_id);
    }
    if (!raters.insert(v.rater_id).second) {
      throw ValidationError("duplicate rater " + v.rater_id + " on pair " +
                            v.pair_id);
    }
    ++out.depth_histogram[code(v.depth_vote)];
    if (v.occlusion_vote) {
      ++out.occlusion_histogram[code(*v.occlusion_vote)];
      ++occlusion_votes;
    }
  }
  out.difficulty = classify_depth_histogram(out.depth_histogram, &out.depth);
  if (occlusion_votes > 0) {
    for (OcclusionPredicate p : kAllOcclusion) {
      if (out.occlusion_histogram[code(p)] >= kMajority) out.occlusion = p;
    }
  }
  return out;
}

struct DifficultyReportRow {
  Setting setting;
  Difficulty scale;
  int count = 0;
  double fraction = 0.0;
};

struct AggregationException {
  std::string pair_id;
  std::string reason;
};

struct AggregationResult {
  // Relations carry the aggregated label; training pairs pass through with
  // their single vote and no difficulty.
  std::vector<OrderedPairLabel> relations;
  std::vector<AggregatedLabel> labels;
  std::vector<DifficultyReportRow> report;
  std::vector<AggregationException> exceptions;
};

// Aggregates every pair in `pairs` from `votes`. `required_votes(pair)` gives
// 1 for training pairs and 5 for evaluation pairs.
template <typename RequiredVotes>
AggregationResult aggregate_bundle(const std::vector<OrderedPairLabel>& pairs,
                                   const std::vector<VoteRecord>& votes,
                                   RequiredVotes&& required_votes) {
  std::map<std::string, std::vector<VoteRecord>> by_pair;
  for (const auto& v : votes) by_pair[v.pair_id].push_back(v);

  AggregationResult result;
  std::map<std::pair<Setting, Difficulty>, int> counts;
  std::map<Setting, int> totals;
  for (const auto& pair : pairs) {
    const auto it = by_pair.find(pair.pair_id);
    const std::size_t have = it == by_pair.end() ? 0 : it->second.size();
    const int need = required_votes(pair);
    if (have != static_cast<std::size_t>(need)) {
      result.exceptions.push_back(
          {pair.pair_id, "expected " + std::to_string(need) + " votes, found " +
                             std::to_string(have)});
      continue;
    }
    OrderedPairLabel rel = pair;
    if (need == 1) {
      const VoteRecord& v = it->second.front();
      if (check_vote(pair.setting, v.depth_vote, v.occlusion_vote) !=
          VoteCheck::kOk) {
        result.exceptions.push_back(
            {pair.pair_id,
             describe(check_vote(pair.setting, v.depth_vote, v.occlusion_vote))});
        continue;
      }
      rel.label = {v.depth_vote, v.occlusion_vote};
      rel.difficulty.reset();
      result.relations.push_back(std::move(rel));
      continue;
    }
    AggregatedLabel agg;
    try {
      agg = aggregate_pair(it->second);
    } catch (const ValidationError& e) {
      result.exceptions.push_back({pair.pair_id, e.what()});
      continue;
    }
    rel.label = {agg.depth, pair.setting == Setting::kWithin
                                ? agg.occlusion
                                : std::optional<OcclusionPredicate>()};
    rel.difficulty = agg.difficulty;
    ++counts[{pair.setting, agg.difficulty}];
    ++totals[pair.setting];
    result.relations.push_back(std::move(rel));
    result.labels.push_back(std::move(agg));
  }
  for (Setting s : {Setting::kWithin, Setting::kAcross}) {
    if (!totals.count(s)) continue;
    for (Difficulty d : kAllDifficulty) {
      const int c = counts.count({s, d}) ? counts[{s, d}] : 0;
      result.report.push_back(
          {s, d, c, static_cast<double>(c) / static_cast<double>(totals[s])});
    }
  }
  return result;
}

}  // namespace vrd25

#endif  // VRD25_AGGREGATION_HPP_
