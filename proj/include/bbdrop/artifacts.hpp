// artifacts.hpp -- on-disk formats for every pipeline artifact, all written
// atomically (temp file + rename) with the effective config echoed into each
// file's metadata.
//
// CSV artifacts carry the metadata as a leading "# {...}" comment line; JSON
// artifacts embed it under a "config" key; JSONL artifacts (whose schema is
// fixed record-per-line) get a <path>.meta.json sidecar.
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bbdrop/actions.hpp"
#include "bbdrop/clickstream.hpp"
#include "bbdrop/lfr.hpp"
#include "bbdrop/metrics.hpp"
#include "bbdrop/predictor.hpp"
#include "bbdrop/representation.hpp"
#include "bbdrop/synth.hpp"

namespace bbdrop {

// Shortest round-trip decimal representation.
std::string format_double(double v);

void atomic_write_file(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);
void require_file(const std::filesystem::path& path);

// raw events (pure JSONL schema; metadata goes to the sidecar)
void write_events_jsonl(const std::filesystem::path& path, const std::vector<ClickEvent>& events,
                        const nlohmann::json& meta);
std::vector<ClickEvent> read_events_file(const std::filesystem::path& path, EventFormat format);

// generator ground truth: user_id,archetype,drop_week
void write_truth_csv(const std::filesystem::path& path, const std::vector<UserTruth>& truth,
                     const nlohmann::json& meta);
std::vector<UserTruth> read_truth_csv(const std::filesystem::path& path);

// processed dataset: {"user_id":...,"week_index":...,"clicks":[...],"label":0|1}
void write_dataset_jsonl(const std::filesystem::path& path, const Dataset& dataset,
                         const nlohmann::json& meta);
Dataset read_dataset_jsonl(const std::filesystem::path& path);

// mined actions: action,spread
void write_actions_csv(const std::filesystem::path& path, const std::vector<ScoredAction>& actions,
                       const nlohmann::json& meta);
std::vector<ScoredAction> read_actions_csv(const std::filesystem::path& path);

// representations: user_id,week_index,label,a1..aM
void write_representations_csv(const std::filesystem::path& path,
                               const std::vector<ActionRepresentation>& reps,
                               const nlohmann::json& meta);
std::vector<ActionRepresentation> read_representations_csv(const std::filesystem::path& path);

// model parameters: row-major flattened blocks with explicit shapes
nlohmann::json lfr_params_to_json(const LfrParams& params);
LfrParams lfr_params_from_json(const nlohmann::json& j);
nlohmann::json predictor_params_to_json(const PredictorParams& params);
PredictorParams predictor_params_from_json(const nlohmann::json& j);

void write_json_artifact(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json_artifact(const std::filesystem::path& path);

// predictions: user_id,week_index,label,score,prediction
struct PredictionRow {
  WeekRef week;
  double score = 0.0;
  int prediction = 0;
};
void write_predictions_csv(const std::filesystem::path& path,
                           const std::vector<PredictionRow>& rows, const nlohmann::json& meta);
std::vector<PredictionRow> read_predictions_csv(const std::filesystem::path& path,
                                                nlohmann::json* meta_out);

// characterization tables: action,t_score,p_value
void write_characterization_csv(const std::filesystem::path& path,
                                const std::vector<CharacterizationRow>& rows,
                                const nlohmann::json& meta);

// LFR training log: epoch,train_loss,val_loss
void write_lfr_log_csv(const std::filesystem::path& path, const std::vector<LfrEpochLog>& log,
                       const nlohmann::json& meta);

// Stable user-id hash split, independent of enumeration order.
bool in_test_split(const std::string& user_id, std::uint64_t split_seed, double test_frac);

// "YYYY-MM-DD", "YYYY-MM-DDTHH:MM:SS[Z]" or a plain integer epoch.
std::int64_t parse_course_start(const std::string& text);

}  // namespace bbdrop
