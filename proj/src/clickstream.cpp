#include "bbdrop/clickstream.hpp"

#include <algorithm>
#include <charconv>
#include <istream>
#include <map>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "bbdrop/error.hpp"

namespace bbdrop {

namespace {

using nlohmann::json;

[[noreturn]] void fail_line(std::size_t line_no, const std::string& msg) {
  throw InputError("line " + std::to_string(line_no) + ": " + msg);
}

}  // namespace

const char* to_string(ClickType t) {
  switch (t) {
    case ClickType::Pageview: return "Pageview";
    case ClickType::Quiz: return "Quiz";
    case ClickType::Forum: return "Forum";
    case ClickType::Play: return "Play";
    case ClickType::Pause: return "Pause";
    case ClickType::SeekFw: return "SeekFw";
    case ClickType::SeekBw: return "SeekBw";
  }
  return "?";
}

std::optional<ClickType> click_type_from_string(std::string_view s) {
  if (s == "Pageview") return ClickType::Pageview;
  if (s == "Quiz") return ClickType::Quiz;
  if (s == "Forum") return ClickType::Forum;
  if (s == "Play") return ClickType::Play;
  if (s == "Pause") return ClickType::Pause;
  if (s == "SeekFw" || s == "SeekFW") return ClickType::SeekFw;
  if (s == "SeekBw" || s == "SeekBW") return ClickType::SeekBw;
  return std::nullopt;
}

const char* to_string(RawCategory c) {
  switch (c) {
    case RawCategory::Pageview: return "Pageview";
    case RawCategory::Quiz: return "Quiz";
    case RawCategory::Forum: return "Forum";
    case RawCategory::Play: return "Play";
    case RawCategory::Pause: return "Pause";
    case RawCategory::Seek: return "Seek";
    case RawCategory::RateChg: return "RateChg";
    case RawCategory::Stalled: return "Stalled";
  }
  return "?";
}

std::optional<RawCategory> raw_category_from_string(std::string_view s) {
  if (s == "Pageview") return RawCategory::Pageview;
  if (s == "Quiz") return RawCategory::Quiz;
  if (s == "Forum") return RawCategory::Forum;
  if (s == "Play") return RawCategory::Play;
  if (s == "Pause") return RawCategory::Pause;
  if (s == "Seek") return RawCategory::Seek;
  if (s == "RateChg") return RawCategory::RateChg;
  if (s == "Stalled") return RawCategory::Stalled;
  return std::nullopt;
}

const char* to_string(DatasetVariant v) {
  switch (v) {
    case DatasetVariant::Raw: return "raw";
    case DatasetVariant::TypeA: return "typeA";
    case DatasetVariant::TypeB: return "typeB";
  }
  return "?";
}

std::optional<DatasetVariant> variant_from_string(std::string_view s) {
  if (s == "raw") return DatasetVariant::Raw;
  if (s == "typeA") return DatasetVariant::TypeA;
  if (s == "typeB") return DatasetVariant::TypeB;
  return std::nullopt;
}

std::size_t Dataset::total_weeks() const {
  std::size_t n = 0;
  for (const auto& u : users) n += u.weeks.size();
  return n;
}

namespace {

// Shared validation applied after a record has been decoded from either
// format. Enforces the per-category field invariants.
void validate_event(const ClickEvent& e, std::size_t line_no) {
  if (e.user_id.empty()) fail_line(line_no, "empty user_id");
  if (e.timestamp < 0) fail_line(line_no, "negative timestamp");
  if (e.category == RawCategory::Seek &&
      (!e.position_before || !e.position_after))
    fail_line(line_no, "Seek missing positions");
  if (e.category == RawCategory::RateChg && (!e.rate_before || !e.rate_after))
    fail_line(line_no, "RateChg missing rates");
}

ClickEvent parse_json_event(const std::string& line, std::size_t line_no) {
  json rec;
  try {
    rec = json::parse(line);
  } catch (const json::parse_error& e) {
    fail_line(line_no, std::string("malformed JSON: ") + e.what());
  }
  if (!rec.is_object()) fail_line(line_no, "record is not a JSON object");

  ClickEvent ev;
  try {
    ev.user_id = rec.at("user_id").get<std::string>();
    ev.timestamp = rec.at("timestamp").get<std::int64_t>();
    const auto cat_name = rec.at("category").get<std::string>();
    const auto cat = raw_category_from_string(cat_name);
    if (!cat) fail_line(line_no, "unknown category \"" + cat_name + "\"");
    ev.category = *cat;
    if (rec.contains("position_before")) ev.position_before = rec["position_before"].get<double>();
    if (rec.contains("position_after")) ev.position_after = rec["position_after"].get<double>();
    if (rec.contains("rate_before")) ev.rate_before = rec["rate_before"].get<double>();
    if (rec.contains("rate_after")) ev.rate_after = rec["rate_after"].get<double>();
  } catch (const json::exception& e) {
    fail_line(line_no, std::string("bad record: ") + e.what());
  }
  validate_event(ev, line_no);
  return ev;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

const std::vector<std::string> kEventCsvColumns = {
    "user_id",         "timestamp",      "category",   "position_before",
    "position_after",  "rate_before",    "rate_after"};

std::optional<double> parse_optional_double(const std::string& s, std::size_t line_no) {
  if (s.empty()) return std::nullopt;
  double v = 0;
  const auto* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || p != end) fail_line(line_no, "bad number \"" + s + "\"");
  return v;
}

}  // namespace

std::vector<ClickEvent> parse_events(std::istream& in, EventFormat format) {
  std::vector<ClickEvent> events;
  std::string line;
  std::size_t line_no = 0;

  if (format == EventFormat::Jsonl) {
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      events.push_back(parse_json_event(line, line_no));
    }
    return events;
  }

  // CSV: header row with the exact column names, empty string = absent.
  if (!std::getline(in, line)) throw InputError("empty CSV event file");
  ++line_no;
  if (split_csv_line(line) != kEventCsvColumns)
    throw InputError("bad CSV header: expected user_id,timestamp,category,"
                     "position_before,position_after,rate_before,rate_after");
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != kEventCsvColumns.size())
      fail_line(line_no, "expected " + std::to_string(kEventCsvColumns.size()) +
                             " fields, got " + std::to_string(fields.size()));
    ClickEvent ev;
    ev.user_id = fields[0];
    {
      std::int64_t ts = 0;
      const auto* end = fields[1].data() + fields[1].size();
      auto [p, ec] = std::from_chars(fields[1].data(), end, ts);
      if (ec != std::errc() || p != end) fail_line(line_no, "bad timestamp \"" + fields[1] + "\"");
      ev.timestamp = ts;
    }
    const auto cat = raw_category_from_string(fields[2]);
    if (!cat) fail_line(line_no, "unknown category \"" + fields[2] + "\"");
    ev.category = *cat;
    ev.position_before = parse_optional_double(fields[3], line_no);
    ev.position_after = parse_optional_double(fields[4], line_no);
    ev.rate_before = parse_optional_double(fields[5], line_no);
    ev.rate_after = parse_optional_double(fields[6], line_no);
    validate_event(ev, line_no);
    events.push_back(std::move(ev));
  }
  return events;
}

std::optional<ClickType> map_category(const ClickEvent& event) {
  switch (event.category) {
    case RawCategory::Pageview: return ClickType::Pageview;
    case RawCategory::Quiz: return ClickType::Quiz;
    case RawCategory::Forum: return ClickType::Forum;
    case RawCategory::Play: return ClickType::Play;
    case RawCategory::Pause: return ClickType::Pause;
    case RawCategory::Seek: {
      // Direction from video positions. Zero delta has no direction.
      const double delta = *event.position_after - *event.position_before;
      if (delta > 0) return ClickType::SeekFw;
      if (delta < 0) return ClickType::SeekBw;
      return std::nullopt;
    }
    case RawCategory::RateChg: {
      // RateChgFast/RateChgSlow are folded into SeekFw/SeekBw.
      const double delta = *event.rate_after - *event.rate_before;
      if (delta > 0) return ClickType::SeekFw;
      if (delta < 0) return ClickType::SeekBw;
      return std::nullopt;
    }
    case RawCategory::Stalled: return std::nullopt;
  }
  return std::nullopt;
}

std::int64_t default_course_start(const std::vector<ClickEvent>& events) {
  if (events.empty()) return 0;
  std::int64_t earliest = events.front().timestamp;
  for (const auto& e : events) earliest = std::min(earliest, e.timestamp);
  return (earliest / 86400) * 86400;  // midnight UTC
}

std::vector<WeekSequence> bucket_and_label(std::vector<ClickEvent> events,
                                           std::int64_t course_start,
                                           int course_length_weeks) {
  std::vector<WeekSequence> weeks;
  if (events.empty()) return weeks;

  std::stable_sort(events.begin(), events.end(),
                   [](const ClickEvent& a, const ClickEvent& b) {
                     return a.timestamp < b.timestamp;
                   });

  const std::string& user = events.front().user_id;
  std::map<int, std::vector<ClickType>> by_week;
  for (const auto& e : events) {
    if (e.timestamp < course_start)
      throw InputError("user " + user + ": event at " + std::to_string(e.timestamp) +
                       " precedes course start " + std::to_string(course_start));
    const int week = static_cast<int>((e.timestamp - course_start) / kSecondsPerWeek) + 1;
    if (week > course_length_weeks)
      throw InputError("user " + user + ": event at " + std::to_string(e.timestamp) +
                       " falls after course week " + std::to_string(course_length_weeks));
    const auto mapped = map_category(e);
    if (mapped) by_week[week].push_back(*mapped);
  }
  if (by_week.empty()) return weeks;

  const int last_active = by_week.rbegin()->first;
  // The week before the user's last active week is the dropout week, unless
  // the user made it to the final course week (a completer).
  const int positive_week = last_active < course_length_weeks ? last_active - 1 : -1;

  weeks.reserve(by_week.size());
  for (auto& [index, clicks] : by_week) {
    WeekSequence ws;
    ws.user_id = user;
    ws.week_index = index;
    ws.clicks = std::move(clicks);
    ws.dropout_label = (index == positive_week);
    weeks.push_back(std::move(ws));
  }
  return weeks;
}

Dataset build_dataset(const std::vector<ClickEvent>& events,
                      std::optional<std::int64_t> course_start,
                      int course_length_weeks) {
  const std::int64_t start = course_start ? *course_start : default_course_start(events);

  std::map<std::string, std::vector<ClickEvent>> by_user;
  for (const auto& e : events) by_user[e.user_id].push_back(e);

  Dataset ds;
  ds.course_length_weeks = course_length_weeks;
  ds.variant = DatasetVariant::Raw;
  ds.users.reserve(by_user.size());
  for (auto& [user, evs] : by_user) {
    UserWeeks uw;
    uw.user_id = user;
    uw.weeks = bucket_and_label(std::move(evs), start, course_length_weeks);
    if (!uw.weeks.empty()) ds.users.push_back(std::move(uw));
  }
  return ds;
}

Dataset filter_dataset(const Dataset& dataset, DatasetVariant variant, int action_size) {
  if (dataset.variant != DatasetVariant::Raw)
    throw InputError("filter_dataset expects a raw dataset, got " +
                     std::string(to_string(dataset.variant)));
  if (variant == DatasetVariant::Raw)
    throw InputError("filter variant must be typeA or typeB");

  Dataset out;
  out.course_length_weeks = dataset.course_length_weeks;
  out.variant = variant;

  for (const auto& user : dataset.users) {
    if (user.weeks.empty()) continue;
    if (variant == DatasetVariant::TypeB) {
      const int last_active = user.weeks.back().week_index;
      if (last_active < 4) continue;  // dropped before the fourth week
    }
    UserWeeks kept;
    kept.user_id = user.user_id;
    for (const auto& week : user.weeks) {
      if (static_cast<int>(week.clicks.size()) < action_size) continue;
      if (variant == DatasetVariant::TypeB && week.clicks.size() >= 1000) continue;
      kept.weeks.push_back(week);
    }
    if (!kept.weeks.empty()) out.users.push_back(std::move(kept));
  }
  return out;
}

DatasetStats dataset_stats(const Dataset& dataset) {
  DatasetStats s;
  s.users = dataset.users.size();
  for (const auto& user : dataset.users) {
    s.weeks += user.weeks.size();
    for (const auto& week : user.weeks)
      if (week.dropout_label) ++s.positive_weeks;
  }
  s.mean_weeks_per_user = s.users == 0 ? 0.0 : static_cast<double>(s.weeks) / static_cast<double>(s.users);
  return s;
}

}  // namespace bbdrop
