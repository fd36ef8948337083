#include "bbdrop/synth.hpp"

#include <algorithm>
#include <cmath>

#include "bbdrop/error.hpp"
#include "bbdrop/mining.hpp"
#include "bbdrop/rng.hpp"

namespace bbdrop {

namespace {

std::string format_user_id(int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "u%05d", index);
  return buf;
}

void check_patterns(const std::vector<PlantedPattern>& patterns, const std::string& where,
                    std::vector<std::string>& problems) {
  for (const auto& p : patterns) {
    if (p.action.clicks.empty() || p.action.clicks.size() > 50)
      problems.push_back(where + ": pattern length must be in [1,50]");
    for (Symbol s : p.action.clicks)
      if (s >= kNumClickTypes) problems.push_back(where + ": pattern symbol out of range");
    if (p.rate_per_100 < 0) problems.push_back(where + ": insertion rate must be >= 0");
  }
}

int sample_binomial(Rng& rng, int n, double p) {
  if (p <= 0.0 || n <= 0) return 0;
  if (p >= 1.0) return n;
  int k = 0;
  for (int i = 0; i < n; ++i)
    if (rng.next_unit() < p) ++k;
  return k;
}

struct UserOutput {
  std::vector<ClickEvent> events;
  UserTruth truth;
};

class UserGenerator {
 public:
  UserGenerator(const GeneratorConfig& config, int user_index)
      : config_(config), rng_(mix_seed(config.seed, 0x5e6d0000ULL + static_cast<std::uint64_t>(user_index))) {
    user_id_ = format_user_id(user_index);
  }

  UserOutput run() {
    UserOutput out;
    const Archetype& arch = pick_archetype();
    out.truth.user_id = user_id_;
    out.truth.archetype = arch.name;

    // realize the dropout week first so the pre-dropout signature can be
    // planted into the right week
    int last_active = config_.course_length_weeks;
    bool dropped = false;
    for (int w = 1; w < config_.course_length_weeks; ++w) {
      if (rng_.next_unit() < arch.weekly_dropout_hazard) {
        last_active = w;
        dropped = true;
        break;
      }
    }
    out.truth.drop_week = dropped ? last_active : 0;

    for (int w = 1; w <= last_active; ++w) {
      auto clicks = week_clicks(arch, dropped && w == last_active - 1);
      emit_week(w, clicks, out.events);
    }
    return out;
  }

 private:
  const Archetype& pick_archetype() {
    const double u = rng_.next_unit();
    double acc = 0.0;
    for (const auto& a : config_.archetypes) {
      acc += a.fraction;
      if (u < acc) return a;
    }
    return config_.archetypes.back();
  }

  ClickType markov_step(int prev) {
    if (config_.transition.empty() || prev < 0) {
      return static_cast<ClickType>(rng_.bounded(kNumClickTypes));
    }
    const auto& row = config_.transition[static_cast<std::size_t>(prev)];
    const double u = rng_.next_unit();
    double acc = 0.0;
    for (int c = 0; c < kNumClickTypes; ++c) {
      acc += row[static_cast<std::size_t>(c)];
      if (u < acc) return static_cast<ClickType>(c);
    }
    return static_cast<ClickType>(kNumClickTypes - 1);
  }

  std::vector<ClickType> week_clicks(const Archetype& arch, bool predrop_week) {
    const double sigma = config_.clicks_per_week_dispersion;
    const double factor = std::exp(sigma * rng_.normal() - sigma * sigma / 2.0);
    const int count =
        std::max<int>(1, static_cast<int>(std::llround(config_.clicks_per_week_mean * factor)));

    std::vector<ClickType> clicks;
    clicks.reserve(static_cast<std::size_t>(count));
    int prev = -1;
    for (int i = 0; i < count; ++i) {
      const ClickType c = markov_step(prev);
      clicks.push_back(c);
      prev = static_cast<int>(c);
    }

    plant(arch.patterns, clicks);
    if (predrop_week) plant(arch.predrop_patterns, clicks);

    // noise: replace clicks with a uniform random type
    for (auto& c : clicks)
      if (rng_.next_unit() < config_.noise_rate)
        c = static_cast<ClickType>(rng_.bounded(kNumClickTypes));
    return clicks;
  }

  // Overwrites a random window with the pattern, keeping the click count.
  void plant(const std::vector<PlantedPattern>& patterns, std::vector<ClickType>& clicks) {
    for (const auto& p : patterns) {
      const int len = static_cast<int>(p.action.clicks.size());
      if (static_cast<int>(clicks.size()) < len) continue;
      const int inserts = sample_binomial(rng_, static_cast<int>(clicks.size()), p.rate_per_100 / 100.0);
      for (int i = 0; i < inserts; ++i) {
        const auto start = static_cast<std::size_t>(
            rng_.bounded(static_cast<std::uint64_t>(clicks.size() - static_cast<std::size_t>(len) + 1)));
        for (int j = 0; j < len; ++j)
          clicks[start + static_cast<std::size_t>(j)] =
              static_cast<ClickType>(p.action.clicks[static_cast<std::size_t>(j)]);
      }
    }
  }

  void emit_week(int week, const std::vector<ClickType>& clicks, std::vector<ClickEvent>& out) {
    // raw events: one per canonical click, plus occasional Stalled and
    // zero-delta events that preprocessing must drop
    std::vector<ClickEvent> raw;
    raw.reserve(clicks.size() + clicks.size() / 8);
    for (ClickType c : clicks) {
      raw.push_back(raw_event(c));
      if (rng_.next_unit() < config_.stalled_rate) {
        ClickEvent e;
        e.user_id = user_id_;
        e.category = RawCategory::Stalled;
        raw.push_back(e);
      }
      if (rng_.next_unit() < config_.zero_delta_rate) {
        ClickEvent e;
        e.user_id = user_id_;
        if (rng_.next_unit() < 0.5) {
          e.category = RawCategory::Seek;
          const double pos = rng_.uniform(0.0, 3600.0);
          e.position_before = pos;
          e.position_after = pos;
        } else {
          e.category = RawCategory::RateChg;
          e.rate_before = 1.0;
          e.rate_after = 1.0;
        }
        raw.push_back(e);
      }
    }

    // monotone timestamps inside the week
    const std::int64_t week_start =
        config_.course_start + static_cast<std::int64_t>(week - 1) * kSecondsPerWeek;
    std::vector<std::int64_t> offsets(raw.size());
    for (auto& o : offsets) o = static_cast<std::int64_t>(rng_.bounded(kSecondsPerWeek));
    std::sort(offsets.begin(), offsets.end());
    for (std::size_t i = 0; i < raw.size(); ++i) raw[i].timestamp = week_start + offsets[i];
    out.insert(out.end(), raw.begin(), raw.end());
  }

  ClickEvent raw_event(ClickType c) {
    ClickEvent e;
    e.user_id = user_id_;
    switch (c) {
      case ClickType::Pageview: e.category = RawCategory::Pageview; break;
      case ClickType::Quiz: e.category = RawCategory::Quiz; break;
      case ClickType::Forum: e.category = RawCategory::Forum; break;
      case ClickType::Play: e.category = RawCategory::Play; break;
      case ClickType::Pause: e.category = RawCategory::Pause; break;
      case ClickType::SeekFw:
      case ClickType::SeekBw: {
        const bool forward = c == ClickType::SeekFw;
        if (rng_.next_unit() < 0.5) {
          e.category = RawCategory::Seek;
          const double pos = rng_.uniform(60.0, 3000.0);
          const double delta = rng_.uniform(5.0, 240.0);
          e.position_before = pos;
          e.position_after = forward ? pos + delta : std::max(0.0, pos - delta);
        } else {
          // a rate change in the same direction maps to the same click type
          e.category = RawCategory::RateChg;
          const double rate = rng_.uniform(0.75, 1.75);
          const double delta = rng_.uniform(0.05, 0.5);
          e.rate_before = rate;
          e.rate_after = forward ? rate + delta : std::max(0.1, rate - delta);
        }
        break;
      }
    }
    return e;
  }

  const GeneratorConfig& config_;
  Rng rng_;
  std::string user_id_;
};

}  // namespace

std::vector<std::string> validate_config(const GeneratorConfig& config) {
  std::vector<std::string> problems;
  if (config.n_users < 0) problems.push_back("n_users must be >= 0");
  if (config.course_length_weeks < 1) problems.push_back("course_length_weeks must be >= 1");
  if (config.archetypes.empty()) problems.push_back("at least one archetype is required");

  double fraction_sum = 0.0;
  for (const auto& a : config.archetypes) {
    if (a.name.empty()) problems.push_back("archetype name must be nonempty");
    if (a.fraction < 0.0 || a.fraction > 1.0)
      problems.push_back("archetype " + a.name + ": fraction must be in [0,1]");
    fraction_sum += a.fraction;
    if (a.weekly_dropout_hazard < 0.0 || a.weekly_dropout_hazard > 1.0)
      problems.push_back("archetype " + a.name + ": hazard must be in [0,1]");
    check_patterns(a.patterns, "archetype " + a.name, problems);
    check_patterns(a.predrop_patterns, "archetype " + a.name + " predrop", problems);
  }
  if (!config.archetypes.empty() && std::abs(fraction_sum - 1.0) > 1e-9)
    problems.push_back("archetype fractions must sum to 1");

  if (!config.transition.empty()) {
    if (config.transition.size() != kNumClickTypes)
      problems.push_back("transition model must have 7 rows");
    for (std::size_t r = 0; r < config.transition.size(); ++r) {
      const auto& row = config.transition[r];
      if (row.size() != kNumClickTypes) {
        problems.push_back("transition row " + std::to_string(r) + " must have 7 entries");
        continue;
      }
      double sum = 0.0;
      for (double v : row) {
        if (v < 0.0 || v > 1.0)
          problems.push_back("transition row " + std::to_string(r) + " has entries outside [0,1]");
        sum += v;
      }
      if (std::abs(sum - 1.0) > 1e-9)
        problems.push_back("transition row " + std::to_string(r) + " must sum to 1");
    }
  }
  if (config.clicks_per_week_mean < 1.0) problems.push_back("clicks_per_week_mean must be >= 1");
  if (config.clicks_per_week_dispersion < 0.0)
    problems.push_back("clicks_per_week_dispersion must be >= 0");
  for (const auto& [value, name] :
       std::initializer_list<std::pair<double, const char*>>{
           {config.noise_rate, "noise_rate"},
           {config.stalled_rate, "stalled_rate"},
           {config.zero_delta_rate, "zero_delta_rate"}}) {
    if (value < 0.0 || value > 1.0) problems.push_back(std::string(name) + " must be in [0,1]");
  }
  return problems;
}

SynthResult generate(const GeneratorConfig& config, int threads) {
  const auto problems = validate_config(config);
  if (!problems.empty()) {
    std::string msg = "invalid generator config:";
    for (const auto& p : problems) msg += "\n  - " + p;
    throw InputError(msg);
  }

  std::vector<UserOutput> outputs(static_cast<std::size_t>(config.n_users));
  const int t = resolve_threads(threads);
#pragma omp parallel for schedule(dynamic, 16) num_threads(t)
  for (int i = 0; i < config.n_users; ++i) {
    UserGenerator gen(config, i);
    outputs[static_cast<std::size_t>(i)] = gen.run();
  }

  SynthResult result;
  for (auto& out : outputs) {
    result.events.insert(result.events.end(), out.events.begin(), out.events.end());
    result.truth.push_back(std::move(out.truth));
  }
  return result;
}

}  // namespace bbdrop
