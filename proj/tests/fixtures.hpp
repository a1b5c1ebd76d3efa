// SPDX-License-Identifier: Apache-2.0
#pragma once

// Synthetic data pushed through pruning, fitting and tensor assembly.

#include <map>
#include <set>
#include <sstream>
#include <vector>

#include "reentry/reentry.hpp"

namespace reentry::testing {

struct Pipeline {
  SyntheticDataset ds;
  std::vector<ObjectTrack> pruned;
  std::vector<DecayTrajectory> trajectories;
  SpaceWeatherSeries sw;
  std::map<long long, double> area_to_mass;

  std::vector<long long> ids() const {
    std::vector<long long> out;
    for (const auto& t : trajectories) out.push_back(t.norad_id);
    return out;
  }

  /// Tensor over `members` (all objects when empty), with `train` defining
  /// the normalization, or the given fixed statistics.
  FeatureTensor tensor(const std::set<long long>& train, const std::set<long long>& members = {},
                       std::optional<std::vector<MinMax>> stats = std::nullopt) const {
    std::vector<DecayTrajectory> sel;
    for (const auto& t : trajectories)
      if (members.empty() || members.count(t.norad_id)) sel.push_back(t);
    TensorOptions opt;
    opt.fixed_stats = std::move(stats);
    return assemble_tensor(sel, pruned, sw, area_to_mass, train, opt);
  }
};

inline Pipeline run_pipeline(const SyntheticSpec& spec) {
  Pipeline p;
  p.ds = generate_tracks(spec);
  const PruneConfig pc;
  for (const auto& t : p.ds.tracks) {
    auto pruned = prune_track(t, pc);
    p.trajectories.push_back(sample_grid(fit_track(pruned).coefficients, t.norad_id));
    p.pruned.push_back(std::move(pruned));
  }
  // Side files go through their CSV form, as in the command-line pipeline.
  std::stringstream sw, am;
  write_space_weather_csv(sw, p.ds);
  write_area_to_mass_csv(am, p.ds);
  p.sw = read_space_weather_csv(sw);
  p.area_to_mass = read_area_to_mass_csv(am);
  return p;
}

inline SyntheticSpec small_spec(int n, std::uint64_t seed) {
  SyntheticSpec s;
  s.n_objects = n;
  s.seed = seed;
  return s;
}

}  // namespace reentry::testing
