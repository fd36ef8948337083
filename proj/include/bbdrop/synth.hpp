// synth.hpp -- synthetic raw click log generation with controllable
// behavioral structure, standing in for real course data.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bbdrop/actions.hpp"
#include "bbdrop/clickstream.hpp"

namespace bbdrop {

struct PlantedPattern {
  Action action;
  double rate_per_100 = 0.0;  // expected insertions per 100 clicks
};

struct Archetype {
  std::string name;
  double fraction = 0.0;
  double weekly_dropout_hazard = 0.0;  // applied after each non-final week
  std::vector<PlantedPattern> patterns;  // planted in every active week
  // Planted only in the week before a dropped user's final active week, i.e.
  // the week the dropout label lands on. This is what makes generated data
  // separable for the pre-dropout prediction task.
  std::vector<PlantedPattern> predrop_patterns;
};

struct GeneratorConfig {
  int n_users = 0;
  int course_length_weeks = 12;
  std::vector<Archetype> archetypes;
  // 7x7 row-stochastic first-order transition model; empty = uniform clicks
  std::vector<std::vector<double>> transition;
  double clicks_per_week_mean = 60.0;
  double clicks_per_week_dispersion = 0.3;  // lognormal sigma
  double noise_rate = 0.02;   // per-click replacement probability
  double stalled_rate = 0.02;     // extra Stalled events per canonical click
  double zero_delta_rate = 0.01;  // extra zero-delta Seek/RateChg events
  std::int64_t course_start = 0;
  std::uint64_t seed = 0;
};

struct UserTruth {
  std::string user_id;
  std::string archetype;
  int drop_week = 0;  // last active week of a dropped user; 0 = completed
};

struct SynthResult {
  std::vector<ClickEvent> events;  // user-major, time ascending within user
  std::vector<UserTruth> truth;
};

// Empty when the config is valid, otherwise one message per violation.
std::vector<std::string> validate_config(const GeneratorConfig& config);

// Per-user streams are derived from the master seed, so output is
// deterministic and independent of thread count.
SynthResult generate(const GeneratorConfig& config, int threads);

}  // namespace bbdrop
