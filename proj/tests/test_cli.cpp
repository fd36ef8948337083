#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "bbdrop/artifacts.hpp"
#include "bbdrop/error.hpp"
#include "bbdrop/pipeline.hpp"
#include "test_util.hpp"

using namespace bbdrop;
using namespace bbdrop::testutil;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json small_config(const fs::path& out_dir) {
  return json{
      {"seed", 4242},
      {"threads", 0},
      {"out_dir", out_dir.string()},
      {"synth",
       {{"n_users", 70},
        {"course_length_weeks", 8},
        {"clicks_per_week_mean", 18},
        {"clicks_per_week_dispersion", 0.2},
        {"noise_rate", 0.02},
        {"course_start", 0},
        {"archetypes",
         json::array(
             {{{"name", "engaged"},
               {"fraction", 0.5},
               {"hazard", 0.05},
               {"patterns", json::array({{{"action", "Quiz-Play-Quiz-Play"}, {"rate_per_100", 6}}})},
               {"predrop_patterns",
                json::array({{{"action", "Pause-SeekBw-Pause-SeekBw"}, {"rate_per_100", 9}}})}},
              {{"name", "struggler"},
               {"fraction", 0.5},
               {"hazard", 0.3},
               {"patterns",
                json::array({{{"action", "SeekFw-SeekFw-SeekFw-SeekFw"}, {"rate_per_100", 5}}})},
               {"predrop_patterns",
                json::array({{{"action", "SeekBw-SeekBw-SeekFw-SeekFw"}, {"rate_per_100", 9}}})}}})}}},
      {"preprocess",
       {{"course_start", 0}, {"course_length_weeks", 8}, {"variant", "typeA"}, {"action_size", 4}}},
      {"mine", {{"action_size", 4}, {"top_m", 25}, {"bound", "admissible"}, {"report_node_counts", true}}},
      {"lfr",
       {{"hidden", 5}, {"window", 1}, {"rep_pct", 20}, {"max_epochs", 3}, {"batch", 16}}},
      {"predict",
       {{"input", "lfr"},
        {"max_epochs", 8},
        {"threshold", "tune"},
        {"test_frac", 0.3}}},
      {"characterize", {{"top_k", 5}, {"input", "bb"}}}};
}

int run(const std::vector<std::string>& args, std::string* stdout_text = nullptr) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  if (stdout_text != nullptr) *stdout_text = out.str();
  return code;
}

std::map<std::string, std::string> dir_bytes(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    files[fs::relative(entry.path(), dir).string()] = read_file(entry.path());
  }
  return files;
}

}  // namespace

TEST_CASE("config parsing rejects unknown keys") {
  CHECK_THROWS_WITH_AS(parse_pipeline_config(json{{"sedd", 1}}), doctest::Contains("sedd"),
                       InputError);
  CHECK_THROWS_WITH_AS(parse_pipeline_config(json{{"mine", {{"topm", 5}}}}),
                       doctest::Contains("topm"), InputError);
  CHECK_THROWS_AS(parse_pipeline_config(json{{"predict", {{"input", "cnn"}}}}), InputError);
  CHECK_THROWS_AS(parse_pipeline_config(json{{"predict", {{"threshold", "maybe"}}}}), InputError);

  const auto c = parse_pipeline_config(json{{"seed", 7}, {"mine", {{"top_m", 5}}}});
  CHECK(c.seed == 7);
  CHECK(c.mine.top_m == 5);
  CHECK(c.mine.action_size == 4);
}

TEST_CASE("course_start parsing") {
  CHECK(parse_course_start("0") == 0);
  CHECK(parse_course_start("1600041600") == 1600041600);
  CHECK(parse_course_start("1970-01-01") == 0);
  CHECK(parse_course_start("1970-01-02") == 86400);
  CHECK(parse_course_start("2020-09-14") == 1600041600);
  CHECK(parse_course_start("2020-09-14T06:30:00") == 1600041600 + 6 * 3600 + 30 * 60);
  CHECK_THROWS_AS(parse_course_start("sometime"), InputError);
}

TEST_CASE("missing inputs exit with status 2 and name the path") {
  const auto dir = scratch_dir("cli_missing");
  std::string out;
  const int code = run({"preprocess", "--out-dir", dir.string()}, &out);
  CHECK(code == 2);
  const auto summary = json::parse(out);
  REQUIRE(summary.contains("error"));
  CHECK(summary["error"].get<std::string>().find("events.jsonl") != std::string::npos);
}

TEST_CASE("usage errors exit with status 2") {
  std::string out;
  CHECK(run({}, &out) == 2);
  CHECK(run({"transmogrify"}, &out) == 2);
  CHECK(run({"--help"}, &out) == 0);
}

TEST_CASE("the full pipeline runs stage by stage and is byte-deterministic") {
  const auto dir = scratch_dir("cli_pipeline");
  const auto config_path = dir / "config.json";
  atomic_write_file(config_path, small_config(dir / "artifacts").dump(2));

  std::string out;
  REQUIRE(run({"--config", config_path.string(), "pipeline"}, &out) == 0);
  const auto summary = json::parse(out);
  CHECK(summary["stage"] == "pipeline");
  CHECK(summary.contains("auc"));
  CHECK(summary.contains("f1"));

  // every declared artifact exists
  for (const char* name :
       {"events.jsonl", "truth.csv", "dataset.jsonl", "actions.csv", "representations.csv",
        "encoded.csv", "lfr_params.json", "lfr_log.csv", "predictor_params.json",
        "predictions.csv", "metrics.json", "characterize_dropout.csv",
        "characterize_nondropout.csv"})
    CHECK(fs::exists(dir / "artifacts" / name));

  const auto first = dir_bytes(dir / "artifacts");
  REQUIRE(run({"--config", config_path.string(), "pipeline"}, &out) == 0);
  const auto second = dir_bytes(dir / "artifacts");
  REQUIRE(first.size() == second.size());
  for (const auto& [name, bytes] : first) {
    INFO("artifact ", name);
    CHECK(second.at(name) == bytes);
  }

  // metrics artifact carries the effective config and the agreed keys
  const auto metrics = json::parse(read_file(dir / "artifacts" / "metrics.json"));
  for (const char* key : {"f1", "auc", "n_pos", "n_neg", "threshold", "config"})
    CHECK(metrics.contains(key));

  // no stray temp files from the atomic writes
  for (const auto& [name, bytes] : first) CHECK(name.find(".tmp") == std::string::npos);
}

TEST_CASE("stages can be run individually against the same artifact directory") {
  const auto dir = scratch_dir("cli_stages");
  const auto config_path = dir / "config.json";
  auto cfg = small_config(dir / "artifacts");
  cfg["predict"]["input"] = "bb";  // skip the lfr stages
  atomic_write_file(config_path, cfg.dump(2));

  std::string out;
  for (const auto& stage :
       std::vector<std::string>{"synth", "preprocess", "mine", "represent", "train-predict",
                                "evaluate", "characterize"}) {
    INFO("stage ", stage);
    REQUIRE(run({"--config", config_path.string(), stage}, &out) == 0);
    CHECK(json::parse(out)["stage"] == stage);
  }

  // flag overrides beat the config: a different top-m shows up in the output
  REQUIRE(run({"--config", config_path.string(), "mine", "--top-m", "10"}, &out) == 0);
  const auto actions = read_actions_csv((dir / "artifacts" / "actions.csv").string());
  CHECK(actions.size() == 10);

  // node counts are reported when asked for
  REQUIRE(run({"--config", config_path.string(), "mine", "--report-node-counts"}, &out) == 0);
  CHECK(json::parse(out).contains("node_counts"));
}

TEST_CASE("artifact round trips preserve values") {
  const auto dir = scratch_dir("cli_roundtrip");

  SUBCASE("representations") {
    std::vector<ActionRepresentation> reps;
    for (int i = 0; i < 5; ++i) {
      ActionRepresentation r;
      r.week.user_id = "u" + std::to_string(i);
      r.week.week_index = i + 1;
      r.week.label = i % 2 == 0;
      r.scores = {0.125, 1.0 / 3.0, 0.999999999999};
      reps.push_back(std::move(r));
    }
    const auto path = dir / "reps.csv";
    write_representations_csv(path, reps, json{{"config", json::object()}});
    const auto back = read_representations_csv(path);
    REQUIRE(back.size() == reps.size());
    for (std::size_t i = 0; i < reps.size(); ++i) {
      CHECK(back[i].week.user_id == reps[i].week.user_id);
      CHECK(back[i].week.label == reps[i].week.label);
      CHECK(back[i].scores == reps[i].scores);  // exact: shortest round-trip format
    }
  }

  SUBCASE("lfr params") {
    const auto params = init_lfr_params(6, 3, 77);
    const auto j = lfr_params_to_json(params);
    const auto back = lfr_params_from_json(j);
    CHECK(back.w_a == params.w_a);
    CHECK(back.b_a == params.b_a);
    CHECK(back.w_o == params.w_o);
    CHECK(back.b_o == params.b_o);
  }

  SUBCASE("predictor params") {
    const auto params = init_predictor_params(6, 78);
    const auto back = predictor_params_from_json(predictor_params_to_json(params));
    REQUIRE(back.layers.size() == params.layers.size());
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
      CHECK(back.layers[l].w == params.layers[l].w);
      CHECK(back.layers[l].b == params.layers[l].b);
    }
  }

  SUBCASE("dataset jsonl") {
    Dataset ds;
    ds.course_length_weeks = 9;
    ds.variant = DatasetVariant::TypeA;
    UserWeeks uw;
    uw.user_id = "alice";
    WeekSequence ws;
    ws.user_id = "alice";
    ws.week_index = 2;
    ws.clicks = {ClickType::Play, ClickType::SeekBw, ClickType::Quiz};
    ws.dropout_label = true;
    uw.weeks.push_back(ws);
    ds.users.push_back(uw);

    const auto path = dir / "dataset.jsonl";
    write_dataset_jsonl(path, ds, json::object());
    const auto back = read_dataset_jsonl(path);
    CHECK(back.course_length_weeks == 9);
    CHECK(back.variant == DatasetVariant::TypeA);
    REQUIRE(back.users.size() == 1);
    CHECK(back.users[0].weeks[0].clicks == ws.clicks);
    CHECK(back.users[0].weeks[0].dropout_label);
  }
}

TEST_CASE("in_test_split is stable and tracks the requested fraction") {
  std::size_t test_count = 0;
  const int n = 5000;
  for (int i = 0; i < n; ++i) {
    const std::string id = "user" + std::to_string(i);
    const bool t1 = in_test_split(id, 9, 0.25);
    const bool t2 = in_test_split(id, 9, 0.25);
    CHECK(t1 == t2);
    test_count += t1 ? 1 : 0;
  }
  const double frac = static_cast<double>(test_count) / n;
  CHECK(frac > 0.22);
  CHECK(frac < 0.28);
}
