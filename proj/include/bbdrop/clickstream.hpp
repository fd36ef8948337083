// clickstream.hpp -- raw click event ingestion, click-type mapping, week
// bucketing, dropout labeling and dataset filtering.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace bbdrop {

// The seven canonical click types. Enumeration order defines the total order
// used for lexicographic tie-breaking everywhere downstream.
enum class ClickType : std::uint8_t {
  Pageview = 0,
  Quiz,
  Forum,
  Play,
  Pause,
  SeekFw,
  SeekBw,
};
inline constexpr int kNumClickTypes = 7;

const char* to_string(ClickType t);
// Accepts the canonical spelling plus the all-caps variants SeekFW/SeekBW.
std::optional<ClickType> click_type_from_string(std::string_view s);

// The eight raw log categories.
enum class RawCategory : std::uint8_t {
  Pageview = 0,
  Quiz,
  Forum,
  Play,
  Pause,
  Seek,
  RateChg,
  Stalled,
};

const char* to_string(RawCategory c);
std::optional<RawCategory> raw_category_from_string(std::string_view s);

// One raw log record. Seek events carry both positions, RateChg events carry
// both rates; the parser rejects records violating that.
struct ClickEvent {
  std::string user_id;
  std::int64_t timestamp = 0;  // seconds since epoch
  RawCategory category = RawCategory::Pageview;
  std::optional<double> position_before;
  std::optional<double> position_after;
  std::optional<double> rate_before;
  std::optional<double> rate_after;
};

struct WeekSequence {
  std::string user_id;
  int week_index = 0;  // 1-based course week
  std::vector<ClickType> clicks;
  bool dropout_label = false;
};

enum class DatasetVariant { Raw, TypeA, TypeB };

const char* to_string(DatasetVariant v);
std::optional<DatasetVariant> variant_from_string(std::string_view s);

struct UserWeeks {
  std::string user_id;
  std::vector<WeekSequence> weeks;  // week_index strictly increasing
};

struct Dataset {
  std::vector<UserWeeks> users;  // sorted by user_id
  int course_length_weeks = 12;
  DatasetVariant variant = DatasetVariant::Raw;

  std::size_t total_weeks() const;
};

struct DatasetStats {
  std::size_t users = 0;
  std::size_t weeks = 0;
  double mean_weeks_per_user = 0.0;
  std::size_t positive_weeks = 0;
};

enum class EventFormat { Jsonl, Csv };

// Parses a JSONL or CSV event stream. Records come back in input order.
// Malformed records raise InputError with the 1-based line number; unknown
// categories raise InputError naming the offending value.
std::vector<ClickEvent> parse_events(std::istream& in, EventFormat format);

// Maps a raw event to its canonical click type. Stalled and zero-delta
// Seek/RateChg events map to nothing and are dropped from the stream.
std::optional<ClickType> map_category(const ClickEvent& event);

// Earliest timestamp in the stream truncated to midnight UTC; the fallback
// course start when the config does not give one.
std::int64_t default_course_start(const std::vector<ClickEvent>& events);

inline constexpr std::int64_t kSecondsPerWeek = 604800;

// Buckets one user's events into week sequences and assigns dropout labels.
// Week t is positive iff the user's last active week is t+1 and the user was
// not active in the final course week. Events are stably sorted by timestamp,
// so equal-timestamp clicks keep their input order. Weeks without clicks are
// simply absent.
std::vector<WeekSequence> bucket_and_label(std::vector<ClickEvent> events,
                                           std::int64_t course_start,
                                           int course_length_weeks);

// Groups events by user and runs bucket_and_label per user. Users come back
// sorted by user_id. When course_start is absent the default is used.
Dataset build_dataset(const std::vector<ClickEvent>& events,
                      std::optional<std::int64_t> course_start,
                      int course_length_weeks);

// TypeA removes weeks shorter than the action size. TypeB additionally
// removes weeks with 1000+ clicks and all weeks of users whose last active
// week (in the raw input) is before week 4. Users left empty are dropped.
Dataset filter_dataset(const Dataset& dataset, DatasetVariant variant, int action_size);

DatasetStats dataset_stats(const Dataset& dataset);

}  // namespace bbdrop
