#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "bbdrop/clickstream.hpp"
#include "bbdrop/error.hpp"
#include "bbdrop/rng.hpp"

using namespace bbdrop;

namespace {

ClickEvent make_event(const std::string& user, std::int64_t ts, RawCategory cat) {
  ClickEvent e;
  e.user_id = user;
  e.timestamp = ts;
  e.category = cat;
  return e;
}

ClickEvent seek_event(const std::string& user, std::int64_t ts, double before, double after) {
  auto e = make_event(user, ts, RawCategory::Seek);
  e.position_before = before;
  e.position_after = after;
  return e;
}

ClickEvent rate_event(const std::string& user, std::int64_t ts, double before, double after) {
  auto e = make_event(user, ts, RawCategory::RateChg);
  e.rate_before = before;
  e.rate_after = after;
  return e;
}

}  // namespace

TEST_CASE("parse_events maps jsonl records in order") {
  std::istringstream in(
      R"({"user_id":"u1","timestamp":100,"category":"Play"}
{"user_id":"u1","timestamp":50,"category":"Pause"}
{"user_id":"u2","timestamp":70,"category":"Quiz"})");
  const auto events = parse_events(in, EventFormat::Jsonl);
  REQUIRE(events.size() == 3);
  CHECK(events[0].user_id == "u1");
  CHECK(events[0].timestamp == 100);
  CHECK(events[0].category == RawCategory::Play);
  CHECK(events[1].timestamp == 50);  // input order preserved
  CHECK(events[2].user_id == "u2");
}

TEST_CASE("parse_events rejects bad records with line numbers") {
  SUBCASE("seek without positions") {
    std::istringstream in(R"({"user_id":"u1","timestamp":100,"category":"Seek"})");
    CHECK_THROWS_WITH_AS(parse_events(in, EventFormat::Jsonl),
                         doctest::Contains("Seek missing positions"), InputError);
  }
  SUBCASE("unknown category names the value") {
    std::istringstream in(R"({"user_id":"u1","timestamp":1,"category":"Scroll"})");
    CHECK_THROWS_WITH_AS(parse_events(in, EventFormat::Jsonl), doctest::Contains("Scroll"),
                         InputError);
  }
  SUBCASE("malformed json carries the line number") {
    std::istringstream in("{\"user_id\":\"u1\",\"timestamp\":1,\"category\":\"Play\"}\n{oops");
    CHECK_THROWS_WITH_AS(parse_events(in, EventFormat::Jsonl), doctest::Contains("line 2"),
                         InputError);
  }
  SUBCASE("negative timestamp") {
    std::istringstream in(R"({"user_id":"u1","timestamp":-5,"category":"Play"})");
    CHECK_THROWS_AS(parse_events(in, EventFormat::Jsonl), InputError);
  }
}

TEST_CASE("parse_events reads the csv variant with empty-as-absent fields") {
  std::istringstream in(
      "user_id,timestamp,category,position_before,position_after,rate_before,rate_after\n"
      "u1,100,Play,,,,\n"
      "u1,130,Seek,10,250,,\n"
      "u1,150,RateChg,,,1.0,1.5\n");
  const auto events = parse_events(in, EventFormat::Csv);
  REQUIRE(events.size() == 3);
  CHECK(!events[0].position_before.has_value());
  CHECK(events[1].position_after == 250.0);
  CHECK(events[2].rate_after == 1.5);

  std::istringstream bad("user_id,timestamp\nu1,5\n");
  CHECK_THROWS_AS(parse_events(bad, EventFormat::Csv), InputError);
}

TEST_CASE("map_category implements the 8-to-7 mapping") {
  CHECK(map_category(make_event("u", 0, RawCategory::Pageview)) == ClickType::Pageview);
  CHECK(map_category(make_event("u", 0, RawCategory::Quiz)) == ClickType::Quiz);
  CHECK(map_category(make_event("u", 0, RawCategory::Forum)) == ClickType::Forum);
  CHECK(map_category(make_event("u", 0, RawCategory::Play)) == ClickType::Play);
  CHECK(map_category(make_event("u", 0, RawCategory::Pause)) == ClickType::Pause);

  // seek direction from positions
  CHECK(map_category(seek_event("u", 0, 120, 300)) == ClickType::SeekFw);
  CHECK(map_category(seek_event("u", 0, 300, 120)) == ClickType::SeekBw);
  // rate direction from rates
  CHECK(map_category(rate_event("u", 0, 1.0, 1.5)) == ClickType::SeekFw);
  CHECK(map_category(rate_event("u", 0, 1.5, 1.0)) == ClickType::SeekBw);
  // dropped events
  CHECK(!map_category(make_event("u", 0, RawCategory::Stalled)).has_value());
  CHECK(!map_category(seek_event("u", 0, 100, 100)).has_value());
  CHECK(!map_category(rate_event("u", 0, 1.0, 1.0)).has_value());
}

TEST_CASE("bucket_and_label assigns weeks and the dropout label") {
  const int weeks = 12;
  std::vector<ClickEvent> events;
  // active weeks 1..5 of a 12-week course: week 4 is the dropout week
  for (int w = 1; w <= 5; ++w)
    for (int k = 0; k < 3; ++k)
      events.push_back(make_event("u1", (w - 1) * kSecondsPerWeek + k * 100, RawCategory::Play));

  const auto out = bucket_and_label(events, 0, weeks);
  REQUIRE(out.size() == 5);
  for (const auto& ws : out) {
    CHECK(ws.clicks.size() == 3);
    CHECK(ws.dropout_label == (ws.week_index == 4));
  }
}

TEST_CASE("bucket_and_label treats final-week users as completers") {
  std::vector<ClickEvent> events;
  for (int w = 1; w <= 12; ++w)
    events.push_back(make_event("u1", (w - 1) * kSecondsPerWeek, RawCategory::Play));
  const auto out = bucket_and_label(events, 0, 12);
  REQUIRE(out.size() == 12);
  for (const auto& ws : out) CHECK(!ws.dropout_label);
}

TEST_CASE("bucket_and_label with a single active week labels nothing") {
  std::vector<ClickEvent> events{make_event("u1", 100, RawCategory::Play),
                                 make_event("u1", 200, RawCategory::Quiz)};
  const auto out = bucket_and_label(events, 0, 12);
  REQUIRE(out.size() == 1);
  CHECK(out[0].week_index == 1);
  CHECK(!out[0].dropout_label);
}

TEST_CASE("bucket_and_label respects week-index gaps when labeling") {
  // active weeks 2 and 5; dropout week would be 4, which is absent
  std::vector<ClickEvent> events{make_event("u1", 1 * kSecondsPerWeek, RawCategory::Play),
                                 make_event("u1", 4 * kSecondsPerWeek, RawCategory::Play)};
  const auto out = bucket_and_label(events, 0, 12);
  REQUIRE(out.size() == 2);
  CHECK(out[0].week_index == 2);
  CHECK(out[1].week_index == 5);
  CHECK(!out[0].dropout_label);
  CHECK(!out[1].dropout_label);
}

TEST_CASE("bucket_and_label rejects out-of-range events") {
  CHECK_THROWS_AS(bucket_and_label({make_event("u1", 50, RawCategory::Play)}, 100, 12),
                  InputError);
  CHECK_THROWS_AS(
      bucket_and_label({make_event("u1", 13 * kSecondsPerWeek, RawCategory::Play)}, 0, 12),
      InputError);
}

TEST_CASE("bucket_and_label sorts stably so equal timestamps keep input order") {
  std::vector<ClickEvent> events{make_event("u1", 100, RawCategory::Play),
                                 make_event("u1", 100, RawCategory::Quiz),
                                 make_event("u1", 100, RawCategory::Forum),
                                 make_event("u1", 50, RawCategory::Pause)};
  const auto out = bucket_and_label(events, 0, 12);
  REQUIRE(out.size() == 1);
  const std::vector<ClickType> expect{ClickType::Pause, ClickType::Play, ClickType::Quiz,
                                      ClickType::Forum};
  CHECK(out[0].clicks == expect);
}

TEST_CASE("default_course_start truncates the earliest timestamp to midnight") {
  std::vector<ClickEvent> events{make_event("u1", 3 * 86400 + 7000, RawCategory::Play),
                                 make_event("u2", 2 * 86400 + 100, RawCategory::Play)};
  CHECK(default_course_start(events) == 2 * 86400);
}

TEST_CASE("filter_dataset typeA drops short weeks, typeB adds the long-week and early-dropout rules") {
  Dataset raw;
  raw.course_length_weeks = 12;
  const auto add_user = [&](const std::string& id, std::vector<std::pair<int, int>> weeks) {
    UserWeeks uw;
    uw.user_id = id;
    for (auto [index, clicks] : weeks) {
      WeekSequence ws;
      ws.user_id = id;
      ws.week_index = index;
      ws.clicks.assign(static_cast<std::size_t>(clicks), ClickType::Play);
      uw.weeks.push_back(std::move(ws));
    }
    raw.users.push_back(std::move(uw));
  };
  add_user("a", {{1, 3}, {2, 10}, {3, 1000}, {5, 8}});  // 3-click week dies in typeA
  add_user("b", {{1, 6}, {2, 7}, {3, 9}});              // last active week 3: gone in typeB
  add_user("c", {{1, 2}, {2, 3}});                      // everything under n=4: user vanishes

  const auto type_a = filter_dataset(raw, DatasetVariant::TypeA, 4);
  REQUIRE(type_a.users.size() == 2);
  CHECK(type_a.users[0].user_id == "a");
  CHECK(type_a.users[0].weeks.size() == 3);  // weeks 2, 3(1000 clicks), 5
  CHECK(type_a.users[1].user_id == "b");

  const auto type_b = filter_dataset(raw, DatasetVariant::TypeB, 4);
  REQUIRE(type_b.users.size() == 1);
  CHECK(type_b.users[0].user_id == "a");
  CHECK(type_b.users[0].weeks.size() == 2);  // the 1000-click week is gone too

  CHECK_THROWS_AS(filter_dataset(type_a, DatasetVariant::TypeB, 4), InputError);
}

TEST_CASE("filter_dataset typeB output is a subset of typeA on random data") {
  Rng rng(99);
  Dataset raw;
  raw.course_length_weeks = 12;
  for (int u = 0; u < 40; ++u) {
    UserWeeks uw;
    uw.user_id = "u" + std::to_string(1000 + u);
    int week = 0;
    const int n_weeks = 1 + static_cast<int>(rng.bounded(8));
    for (int i = 0; i < n_weeks; ++i) {
      week += 1 + static_cast<int>(rng.bounded(2));
      if (week > 12) break;
      WeekSequence ws;
      ws.user_id = uw.user_id;
      ws.week_index = week;
      std::size_t len = 1 + rng.bounded(30);
      if (rng.bounded(10) == 0) len = 1000 + rng.bounded(50);
      ws.clicks.assign(len, ClickType::Quiz);
      uw.weeks.push_back(std::move(ws));
    }
    if (!uw.weeks.empty()) raw.users.push_back(std::move(uw));
  }

  const auto type_a = filter_dataset(raw, DatasetVariant::TypeA, 4);
  const auto type_b = filter_dataset(raw, DatasetVariant::TypeB, 4);
  for (const auto& user_b : type_b.users) {
    const auto it = std::find_if(type_a.users.begin(), type_a.users.end(),
                                 [&](const UserWeeks& u) { return u.user_id == user_b.user_id; });
    REQUIRE(it != type_a.users.end());
    for (const auto& week_b : user_b.weeks) {
      const auto wit = std::find_if(it->weeks.begin(), it->weeks.end(), [&](const WeekSequence& w) {
        return w.week_index == week_b.week_index;
      });
      CHECK(wit != it->weeks.end());
    }
  }
}

TEST_CASE("dataset_stats counts users, weeks and positives") {
  Dataset ds;
  UserWeeks a;
  a.user_id = "a";
  a.weeks.resize(3);
  UserWeeks b;
  b.user_id = "b";
  b.weeks.resize(5);
  b.weeks[2].dropout_label = true;
  ds.users = {a, b};

  const auto stats = dataset_stats(ds);
  CHECK(stats.users == 2);
  CHECK(stats.weeks == 8);
  CHECK(stats.mean_weeks_per_user == doctest::Approx(4.0));
  CHECK(stats.positive_weeks == 1);

  const auto empty = dataset_stats(Dataset{});
  CHECK(empty.users == 0);
  CHECK(empty.weeks == 0);
  CHECK(empty.mean_weeks_per_user == 0.0);
  CHECK(empty.positive_weeks == 0);
}

TEST_CASE("build_dataset groups users canonically and labels at most one week each") {
  Rng rng(4242);
  std::vector<ClickEvent> events;
  for (int u = 0; u < 25; ++u) {
    const std::string id = "user" + std::to_string(100 + u);
    const int last = 1 + static_cast<int>(rng.bounded(12));
    for (int w = 1; w <= last; ++w) {
      const int clicks = 1 + static_cast<int>(rng.bounded(5));
      for (int k = 0; k < clicks; ++k)
        events.push_back(make_event(
            id, (w - 1) * kSecondsPerWeek + static_cast<std::int64_t>(rng.bounded(kSecondsPerWeek)),
            RawCategory::Play));
    }
  }
  const auto ds = build_dataset(events, 0, 12);
  CHECK(std::is_sorted(ds.users.begin(), ds.users.end(),
                       [](const UserWeeks& a, const UserWeeks& b) { return a.user_id < b.user_id; }));
  for (const auto& user : ds.users) {
    int positives = 0;
    int last_active = user.weeks.back().week_index;
    CHECK(std::is_sorted(user.weeks.begin(), user.weeks.end(),
                         [](const WeekSequence& a, const WeekSequence& b) {
                           return a.week_index < b.week_index;
                         }));
    for (const auto& week : user.weeks) {
      if (week.dropout_label) {
        ++positives;
        CHECK(week.week_index == last_active - 1);
        CHECK(last_active < 12);
      }
    }
    CHECK(positives <= 1);
  }
}
