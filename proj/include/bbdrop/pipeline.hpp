// pipeline.hpp -- the batch driver: one JSON config, composable stages,
// deterministic artifacts.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bbdrop/actions.hpp"
#include "bbdrop/clickstream.hpp"
#include "bbdrop/lfr.hpp"
#include "bbdrop/predictor.hpp"
#include "bbdrop/synth.hpp"

namespace bbdrop {

struct PipelineConfig {
  std::uint64_t seed = 42;
  int threads = 0;  // 0 = all cores
  std::string out_dir = "out";

  struct Paths {
    std::string events, truth, dataset, actions, representations, encoded, lfr_params, lfr_log,
        predictor_params, predictions, metrics, characterize_dropout, characterize_nondropout;
  } paths;

  struct Synth {
    bool present = false;
    GeneratorConfig generator;
  } synth;

  struct Preprocess {
    std::optional<std::string> course_start;  // ISO date or epoch; absent = earliest click
    int course_length_weeks = 12;
    DatasetVariant variant = DatasetVariant::TypeA;
    int action_size = 4;
    EventFormat format = EventFormat::Jsonl;
  } preprocess;

  struct Mine {
    int action_size = 4;
    int top_m = 100;
    BoundStrategy bound = BoundStrategy::Admissible;
    bool report_node_counts = false;
  } mine;

  LfrHyper lfr;

  struct Predict {
    std::string input = "bb";  // "bb" = miner scores, "lfr" = encoded output
    PredictorHyper hyper;
    bool tune_threshold = true;
    double fixed_threshold = 0.5;
    double test_frac = 0.25;
    std::string eval_split = "test";  // test | train | all
    bool shuffle_labels = false;      // permutation control experiment
  } predict;

  struct Characterize {
    int top_k = 10;
    std::string input = "bb";
    bool print_table = false;
  } characterize;

  // resolved artifact paths (out_dir/<name> unless overridden)
  std::string events_path() const;
  std::string truth_path() const;
  std::string dataset_path() const;
  std::string actions_path() const;
  std::string representations_path() const;
  std::string encoded_path() const;
  std::string lfr_params_path() const;
  std::string lfr_log_path() const;
  std::string predictor_params_path() const;
  std::string predictions_path() const;
  std::string metrics_path() const;
  std::string characterize_dropout_path() const;
  std::string characterize_nondropout_path() const;
};

// Strict parse: unknown keys anywhere raise InputError.
PipelineConfig parse_pipeline_config(const nlohmann::json& j);
PipelineConfig load_pipeline_config(const std::string& path);

// Canonical serialization of the effective settings, echoed into artifacts.
nlohmann::json effective_config_json(const PipelineConfig& config);

// Stage runners; each writes its artifacts atomically and returns a one-line
// summary object.
nlohmann::json run_synth(const PipelineConfig& config);
nlohmann::json run_preprocess(const PipelineConfig& config);
nlohmann::json run_mine(const PipelineConfig& config);
nlohmann::json run_represent(const PipelineConfig& config);
nlohmann::json run_train_lfr(const PipelineConfig& config);
nlohmann::json run_encode(const PipelineConfig& config);
nlohmann::json run_train_predict(const PipelineConfig& config);
nlohmann::json run_evaluate(const PipelineConfig& config);
nlohmann::json run_characterize(const PipelineConfig& config, std::ostream* table_out);
nlohmann::json run_pipeline(const PipelineConfig& config, std::ostream* table_out);

// Command line entry point. Returns the process exit code: 0 success,
// 1 internal error, 2 usage/input error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace bbdrop
