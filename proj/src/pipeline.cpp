#include "bbdrop/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <set>

#include <CLI11.hpp>
#include <omp.h>

#include "bbdrop/artifacts.hpp"
#include "bbdrop/error.hpp"
#include "bbdrop/metrics.hpp"
#include "bbdrop/mining.hpp"
#include "bbdrop/rng.hpp"

namespace bbdrop {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// fixed stream ids for the per-stage seeds
constexpr std::uint64_t kSynthStream = 1;
constexpr std::uint64_t kLfrStream = 2;
constexpr std::uint64_t kPredictStream = 3;
constexpr std::uint64_t kSplitStream = 4;
constexpr std::uint64_t kShuffleStream = 5;

void check_keys(const json& obj, const std::string& where,
                std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw InputError(where + ": expected a JSON object");
  for (const auto& [key, value] : obj.items()) {
    bool known = false;
    for (const char* k : allowed)
      if (key == k) {
        known = true;
        break;
      }
    if (!known) throw InputError(where + ": unknown key \"" + key + "\"");
  }
}

template <typename T>
void read_key(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw InputError(where + "." + key + ": " + e.what());
  }
}

Action parse_action_field(const json& obj, const std::string& where) {
  if (!obj.contains("action")) throw InputError(where + ": pattern missing action");
  return action_from_string(obj.at("action").get<std::string>());
}

std::vector<PlantedPattern> parse_patterns(const json& arr, const std::string& where) {
  std::vector<PlantedPattern> out;
  if (!arr.is_array()) throw InputError(where + ": expected an array of patterns");
  for (const auto& p : arr) {
    check_keys(p, where, {"action", "rate_per_100"});
    PlantedPattern pat;
    pat.action = parse_action_field(p, where);
    read_key(p, "rate_per_100", pat.rate_per_100, where);
    out.push_back(std::move(pat));
  }
  return out;
}

GeneratorConfig parse_synth_section(const json& j) {
  check_keys(j, "synth",
             {"n_users", "course_length_weeks", "archetypes", "transition",
              "clicks_per_week_mean", "clicks_per_week_dispersion", "noise_rate", "stalled_rate",
              "zero_delta_rate", "course_start"});
  GeneratorConfig g;
  read_key(j, "n_users", g.n_users, "synth");
  read_key(j, "course_length_weeks", g.course_length_weeks, "synth");
  read_key(j, "clicks_per_week_mean", g.clicks_per_week_mean, "synth");
  read_key(j, "clicks_per_week_dispersion", g.clicks_per_week_dispersion, "synth");
  read_key(j, "noise_rate", g.noise_rate, "synth");
  read_key(j, "stalled_rate", g.stalled_rate, "synth");
  read_key(j, "zero_delta_rate", g.zero_delta_rate, "synth");
  if (j.contains("course_start")) {
    if (j["course_start"].is_number_integer())
      g.course_start = j["course_start"].get<std::int64_t>();
    else
      g.course_start = parse_course_start(j["course_start"].get<std::string>());
  }
  read_key(j, "transition", g.transition, "synth");
  if (j.contains("archetypes")) {
    for (const auto& a : j["archetypes"]) {
      check_keys(a, "synth.archetypes",
                 {"name", "fraction", "hazard", "patterns", "predrop_patterns"});
      Archetype arch;
      read_key(a, "name", arch.name, "synth.archetypes");
      read_key(a, "fraction", arch.fraction, "synth.archetypes");
      read_key(a, "hazard", arch.weekly_dropout_hazard, "synth.archetypes");
      if (a.contains("patterns")) arch.patterns = parse_patterns(a["patterns"], "synth.archetypes.patterns");
      if (a.contains("predrop_patterns"))
        arch.predrop_patterns = parse_patterns(a["predrop_patterns"], "synth.archetypes.predrop_patterns");
      g.archetypes.push_back(std::move(arch));
    }
  }
  return g;
}

json synth_section_to_json(const GeneratorConfig& g) {
  json j;
  j["n_users"] = g.n_users;
  j["course_length_weeks"] = g.course_length_weeks;
  j["clicks_per_week_mean"] = g.clicks_per_week_mean;
  j["clicks_per_week_dispersion"] = g.clicks_per_week_dispersion;
  j["noise_rate"] = g.noise_rate;
  j["stalled_rate"] = g.stalled_rate;
  j["zero_delta_rate"] = g.zero_delta_rate;
  j["course_start"] = g.course_start;
  if (!g.transition.empty()) j["transition"] = g.transition;
  json archetypes = json::array();
  for (const auto& a : g.archetypes) {
    json aj;
    aj["name"] = a.name;
    aj["fraction"] = a.fraction;
    aj["hazard"] = a.weekly_dropout_hazard;
    json pats = json::array();
    for (const auto& p : a.patterns)
      pats.push_back({{"action", action_to_string(p.action)}, {"rate_per_100", p.rate_per_100}});
    aj["patterns"] = std::move(pats);
    json pre = json::array();
    for (const auto& p : a.predrop_patterns)
      pre.push_back({{"action", action_to_string(p.action)}, {"rate_per_100", p.rate_per_100}});
    aj["predrop_patterns"] = std::move(pre);
    archetypes.push_back(std::move(aj));
  }
  j["archetypes"] = std::move(archetypes);
  return j;
}

std::string resolve_path(const std::string& override_path, const std::string& out_dir,
                         const char* name) {
  if (!override_path.empty()) return override_path;
  return (fs::path(out_dir) / name).string();
}

std::string threshold_to_string(const PipelineConfig::Predict& p) {
  if (p.tune_threshold) return "tune";
  return "fixed:" + format_double(p.fixed_threshold);
}

void parse_threshold(const std::string& text, PipelineConfig::Predict& p) {
  if (text == "tune") {
    p.tune_threshold = true;
    return;
  }
  if (text.rfind("fixed:", 0) == 0) {
    p.tune_threshold = false;
    try {
      p.fixed_threshold = std::stod(text.substr(6));
    } catch (const std::exception&) {
      throw InputError("bad threshold \"" + text + "\"");
    }
    return;
  }
  throw InputError("threshold must be \"tune\" or \"fixed:<tau>\", got \"" + text + "\"");
}

}  // namespace

#define BBDROP_PATH(getter, field, name)                           \
  std::string PipelineConfig::getter() const {                     \
    return resolve_path(paths.field, out_dir, name);               \
  }

BBDROP_PATH(events_path, events, "events.jsonl")
BBDROP_PATH(truth_path, truth, "truth.csv")
BBDROP_PATH(dataset_path, dataset, "dataset.jsonl")
BBDROP_PATH(actions_path, actions, "actions.csv")
BBDROP_PATH(representations_path, representations, "representations.csv")
BBDROP_PATH(encoded_path, encoded, "encoded.csv")
BBDROP_PATH(lfr_params_path, lfr_params, "lfr_params.json")
BBDROP_PATH(lfr_log_path, lfr_log, "lfr_log.csv")
BBDROP_PATH(predictor_params_path, predictor_params, "predictor_params.json")
BBDROP_PATH(predictions_path, predictions, "predictions.csv")
BBDROP_PATH(metrics_path, metrics, "metrics.json")
BBDROP_PATH(characterize_dropout_path, characterize_dropout, "characterize_dropout.csv")
BBDROP_PATH(characterize_nondropout_path, characterize_nondropout, "characterize_nondropout.csv")

#undef BBDROP_PATH

PipelineConfig parse_pipeline_config(const json& j) {
  check_keys(j, "config",
             {"seed", "threads", "out_dir", "paths", "synth", "preprocess", "mine", "lfr",
              "predict", "characterize"});
  PipelineConfig c;
  read_key(j, "seed", c.seed, "config");
  read_key(j, "threads", c.threads, "config");
  read_key(j, "out_dir", c.out_dir, "config");

  if (j.contains("paths")) {
    const auto& p = j["paths"];
    check_keys(p, "paths",
               {"events", "truth", "dataset", "actions", "representations", "encoded",
                "lfr_params", "lfr_log", "predictor_params", "predictions", "metrics",
                "characterize_dropout", "characterize_nondropout"});
    read_key(p, "events", c.paths.events, "paths");
    read_key(p, "truth", c.paths.truth, "paths");
    read_key(p, "dataset", c.paths.dataset, "paths");
    read_key(p, "actions", c.paths.actions, "paths");
    read_key(p, "representations", c.paths.representations, "paths");
    read_key(p, "encoded", c.paths.encoded, "paths");
    read_key(p, "lfr_params", c.paths.lfr_params, "paths");
    read_key(p, "lfr_log", c.paths.lfr_log, "paths");
    read_key(p, "predictor_params", c.paths.predictor_params, "paths");
    read_key(p, "predictions", c.paths.predictions, "paths");
    read_key(p, "metrics", c.paths.metrics, "paths");
    read_key(p, "characterize_dropout", c.paths.characterize_dropout, "paths");
    read_key(p, "characterize_nondropout", c.paths.characterize_nondropout, "paths");
  }

  if (j.contains("synth")) {
    c.synth.present = true;
    c.synth.generator = parse_synth_section(j["synth"]);
  }

  if (j.contains("preprocess")) {
    const auto& p = j["preprocess"];
    check_keys(p, "preprocess",
               {"course_start", "course_length_weeks", "variant", "action_size", "format"});
    if (p.contains("course_start")) {
      if (p["course_start"].is_number_integer())
        c.preprocess.course_start = std::to_string(p["course_start"].get<std::int64_t>());
      else
        c.preprocess.course_start = p["course_start"].get<std::string>();
    }
    read_key(p, "course_length_weeks", c.preprocess.course_length_weeks, "preprocess");
    read_key(p, "action_size", c.preprocess.action_size, "preprocess");
    if (p.contains("variant")) {
      const auto v = variant_from_string(p["variant"].get<std::string>());
      if (!v || *v == DatasetVariant::Raw)
        throw InputError("preprocess.variant must be typeA or typeB");
      c.preprocess.variant = *v;
    }
    if (p.contains("format")) {
      const auto f = p["format"].get<std::string>();
      if (f == "jsonl") c.preprocess.format = EventFormat::Jsonl;
      else if (f == "csv") c.preprocess.format = EventFormat::Csv;
      else throw InputError("preprocess.format must be jsonl or csv");
    }
  }

  if (j.contains("mine")) {
    const auto& m = j["mine"];
    check_keys(m, "mine", {"action_size", "top_m", "bound", "report_node_counts"});
    read_key(m, "action_size", c.mine.action_size, "mine");
    read_key(m, "top_m", c.mine.top_m, "mine");
    read_key(m, "report_node_counts", c.mine.report_node_counts, "mine");
    if (m.contains("bound")) {
      const auto b = m["bound"].get<std::string>();
      if (b == "admissible") c.mine.bound = BoundStrategy::Admissible;
      else if (b == "paper") c.mine.bound = BoundStrategy::PaperOptimistic;
      else throw InputError("mine.bound must be admissible or paper");
    }
  }

  if (j.contains("lfr")) {
    const auto& l = j["lfr"];
    check_keys(l, "lfr",
               {"hidden", "window", "rep_pct", "lr", "momentum", "weight_decay", "batch",
                "max_epochs", "early_stop", "val_frac"});
    read_key(l, "hidden", c.lfr.hidden, "lfr");
    read_key(l, "window", c.lfr.window, "lfr");
    read_key(l, "rep_pct", c.lfr.rep_pct, "lfr");
    read_key(l, "lr", c.lfr.learning_rate, "lfr");
    read_key(l, "momentum", c.lfr.momentum, "lfr");
    read_key(l, "weight_decay", c.lfr.weight_decay, "lfr");
    read_key(l, "batch", c.lfr.batch_users, "lfr");
    read_key(l, "max_epochs", c.lfr.max_epochs, "lfr");
    read_key(l, "early_stop", c.lfr.early_stop, "lfr");
    read_key(l, "val_frac", c.lfr.val_frac, "lfr");
  }

  if (j.contains("predict")) {
    const auto& p = j["predict"];
    check_keys(p, "predict",
               {"input", "margin", "lr", "batch", "max_epochs", "patience", "tol", "threshold",
                "test_frac", "eval_split", "shuffle_labels"});
    read_key(p, "input", c.predict.input, "predict");
    if (c.predict.input != "bb" && c.predict.input != "lfr")
      throw InputError("predict.input must be bb or lfr");
    read_key(p, "margin", c.predict.hyper.margin, "predict");
    read_key(p, "lr", c.predict.hyper.learning_rate, "predict");
    read_key(p, "batch", c.predict.hyper.batch_pairs, "predict");
    read_key(p, "max_epochs", c.predict.hyper.max_epochs, "predict");
    read_key(p, "patience", c.predict.hyper.patience, "predict");
    read_key(p, "tol", c.predict.hyper.tol, "predict");
    read_key(p, "test_frac", c.predict.test_frac, "predict");
    read_key(p, "eval_split", c.predict.eval_split, "predict");
    read_key(p, "shuffle_labels", c.predict.shuffle_labels, "predict");
    if (p.contains("threshold")) parse_threshold(p["threshold"].get<std::string>(), c.predict);
    if (c.predict.eval_split != "test" && c.predict.eval_split != "train" &&
        c.predict.eval_split != "all")
      throw InputError("predict.eval_split must be test, train or all");
  }

  if (j.contains("characterize")) {
    const auto& ch = j["characterize"];
    check_keys(ch, "characterize", {"top_k", "input", "print_table"});
    read_key(ch, "top_k", c.characterize.top_k, "characterize");
    read_key(ch, "input", c.characterize.input, "characterize");
    read_key(ch, "print_table", c.characterize.print_table, "characterize");
    if (c.characterize.input != "bb" && c.characterize.input != "lfr")
      throw InputError("characterize.input must be bb or lfr");
  }
  return c;
}

PipelineConfig load_pipeline_config(const std::string& path) {
  const std::string text = read_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw InputError(path + ": " + e.what());
  }
  return parse_pipeline_config(j);
}

json effective_config_json(const PipelineConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  j["out_dir"] = c.out_dir;
  if (c.synth.present) j["synth"] = synth_section_to_json(c.synth.generator);
  json pre;
  if (c.preprocess.course_start) pre["course_start"] = *c.preprocess.course_start;
  pre["course_length_weeks"] = c.preprocess.course_length_weeks;
  pre["variant"] = to_string(c.preprocess.variant);
  pre["action_size"] = c.preprocess.action_size;
  pre["format"] = c.preprocess.format == EventFormat::Jsonl ? "jsonl" : "csv";
  j["preprocess"] = std::move(pre);
  j["mine"] = {{"action_size", c.mine.action_size},
               {"top_m", c.mine.top_m},
               {"bound", to_string(c.mine.bound)},
               {"report_node_counts", c.mine.report_node_counts}};
  j["lfr"] = {{"hidden", c.lfr.hidden},
              {"window", c.lfr.window},
              {"rep_pct", c.lfr.rep_pct},
              {"lr", c.lfr.learning_rate},
              {"momentum", c.lfr.momentum},
              {"weight_decay", c.lfr.weight_decay},
              {"batch", c.lfr.batch_users},
              {"max_epochs", c.lfr.max_epochs},
              {"early_stop", c.lfr.early_stop},
              {"val_frac", c.lfr.val_frac}};
  j["predict"] = {{"input", c.predict.input},
                  {"margin", c.predict.hyper.margin},
                  {"lr", c.predict.hyper.learning_rate},
                  {"batch", c.predict.hyper.batch_pairs},
                  {"max_epochs", c.predict.hyper.max_epochs},
                  {"patience", c.predict.hyper.patience},
                  {"tol", c.predict.hyper.tol},
                  {"threshold", threshold_to_string(c.predict)},
                  {"test_frac", c.predict.test_frac},
                  {"eval_split", c.predict.eval_split},
                  {"shuffle_labels", c.predict.shuffle_labels}};
  j["characterize"] = {{"top_k", c.characterize.top_k}, {"input", c.characterize.input}};
  return j;
}

namespace {

std::vector<ActionRepresentation> load_reps_for(const PipelineConfig& c,
                                                const std::string& which) {
  const std::string path =
      which == "lfr" ? c.encoded_path() : c.representations_path();
  return read_representations_csv(path);
}

// The control experiment: permute labels across all weeks.
void shuffle_labels(std::vector<ActionRepresentation>& reps, std::uint64_t seed) {
  std::vector<bool> labels;
  labels.reserve(reps.size());
  for (const auto& r : reps) labels.push_back(r.week.label);
  std::vector<std::size_t> order(reps.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(order);
  for (std::size_t i = 0; i < reps.size(); ++i) reps[i].week.label = labels[order[i]];
}

}  // namespace

json run_synth(const PipelineConfig& config) {
  if (!config.synth.present) throw InputError("config has no synth section");
  GeneratorConfig gen = config.synth.generator;
  gen.seed = mix_seed(config.seed, kSynthStream);
  const auto result = generate(gen, config.threads);

  const json meta = {{"config", effective_config_json(config)}};
  write_events_jsonl(config.events_path(), result.events, meta);
  write_truth_csv(config.truth_path(), result.truth, meta);

  std::size_t dropped = 0;
  for (const auto& t : result.truth) dropped += t.drop_week > 0 ? 1 : 0;
  return json{{"stage", "synth"},
              {"users", result.truth.size()},
              {"events", result.events.size()},
              {"dropped_users", dropped},
              {"events_out", config.events_path()},
              {"truth_out", config.truth_path()}};
}

json run_preprocess(const PipelineConfig& config) {
  const auto events = read_events_file(config.events_path(), config.preprocess.format);
  std::optional<std::int64_t> start;
  if (config.preprocess.course_start) start = parse_course_start(*config.preprocess.course_start);

  const Dataset raw = build_dataset(events, start, config.preprocess.course_length_weeks);
  const Dataset filtered =
      filter_dataset(raw, config.preprocess.variant, config.preprocess.action_size);
  const auto stats = dataset_stats(filtered);

  write_dataset_jsonl(config.dataset_path(), filtered,
                      json{{"config", effective_config_json(config)}});
  return json{{"stage", "preprocess"},
              {"variant", to_string(filtered.variant)},
              {"users", stats.users},
              {"weeks", stats.weeks},
              {"mean_weeks_per_user", stats.mean_weeks_per_user},
              {"positive_weeks", stats.positive_weeks},
              {"out", config.dataset_path()}};
}

json run_mine(const PipelineConfig& config) {
  const Dataset dataset = read_dataset_jsonl(config.dataset_path());
  std::vector<Sequence> sequences;
  for (const auto& user : dataset.users)
    for (const auto& week : user.weeks) sequences.push_back(to_sequence(week.clicks));

  MineOptions opt;
  opt.action_size = config.mine.action_size;
  opt.top_m = config.mine.top_m;
  opt.bound = config.mine.bound;
  opt.threads = config.threads;
  const auto result = mine_top_actions(sequences, opt);

  write_actions_csv(config.actions_path(), result.actions,
                    json{{"config", effective_config_json(config)}});
  json summary{{"stage", "mine"},
               {"sequences", sequences.size()},
               {"actions", result.actions.size()},
               {"bound", to_string(opt.bound)},
               {"out", config.actions_path()}};
  if (config.mine.report_node_counts) {
    summary["node_counts"] = {{"internal", result.counts.internal},
                              {"leaves", result.counts.leaves},
                              {"pruned", result.counts.pruned}};
  }
  return summary;
}

json run_represent(const PipelineConfig& config) {
  const Dataset dataset = read_dataset_jsonl(config.dataset_path());
  const auto scored = read_actions_csv(config.actions_path());
  std::vector<Action> actions;
  actions.reserve(scored.size());
  for (const auto& s : scored) actions.push_back(s.action);

  const auto reps = build_representations(dataset, actions, config.threads);
  write_representations_csv(config.representations_path(), reps,
                            json{{"config", effective_config_json(config)}});
  return json{{"stage", "represent"},
              {"weeks", reps.size()},
              {"dimension", actions.size()},
              {"out", config.representations_path()}};
}

json run_train_lfr(const PipelineConfig& config) {
  auto reps = read_representations_csv(config.representations_path());
  const auto users = group_by_user(std::move(reps));

  LfrHyper hyper = config.lfr;
  hyper.seed = mix_seed(config.seed, kLfrStream);
  const auto result = train_lfr(users, hyper, config.threads);

  json params = lfr_params_to_json(result.params);
  params["config"] = effective_config_json(config);
  write_json_artifact(config.lfr_params_path(), params);
  write_lfr_log_csv(config.lfr_log_path(), result.log,
                    json{{"config", effective_config_json(config)}});

  const auto& last = result.log.back();
  return json{{"stage", "train-lfr"},
              {"epochs", result.log.size()},
              {"train_loss", last.train_loss},
              {"val_loss", last.val_loss},
              {"params_out", config.lfr_params_path()},
              {"log_out", config.lfr_log_path()}};
}

json run_encode(const PipelineConfig& config) {
  const auto reps = read_representations_csv(config.representations_path());
  const auto params = lfr_params_from_json(read_json_artifact(config.lfr_params_path()));

  std::vector<ActionRepresentation> encoded(reps.size());
  const int t = resolve_threads(config.threads);
#pragma omp parallel for schedule(static) num_threads(t)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(reps.size()); ++i) {
    const auto idx = static_cast<std::size_t>(i);
    encoded[idx].week = reps[idx].week;
    encoded[idx].scores = encode(params, reps[idx].scores);
  }
  write_representations_csv(config.encoded_path(), encoded,
                            json{{"config", effective_config_json(config)}});
  return json{{"stage", "encode"}, {"weeks", encoded.size()}, {"out", config.encoded_path()}};
}

json run_train_predict(const PipelineConfig& config) {
  auto reps = load_reps_for(config, config.predict.input);
  if (config.predict.shuffle_labels)
    shuffle_labels(reps, mix_seed(config.seed, kShuffleStream));
  const int input_dim = static_cast<int>(reps.front().scores.size());

  const std::uint64_t split_seed = mix_seed(config.seed, kSplitStream);
  auto users = group_by_user(std::move(reps));
  std::vector<UserHistory> train_users;
  for (const auto& u : users)
    if (!in_test_split(u.user_id, split_seed, config.predict.test_frac)) train_users.push_back(u);
  if (train_users.empty()) throw InputError("train split is empty; lower test_frac");

  PredictorHyper hyper = config.predict.hyper;
  hyper.seed = mix_seed(config.seed, kPredictStream);
  const auto trained = train_predictor(train_users, input_dim, hyper);

  // score every week; tune the threshold on the training split only
  std::vector<const ActionRepresentation*> all_weeks;
  for (const auto& u : users)
    for (const auto& w : u.weeks) all_weeks.push_back(&w);

  std::vector<double> scores(all_weeks.size());
  const int t = resolve_threads(config.threads);
#pragma omp parallel for schedule(static) num_threads(t)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(all_weeks.size()); ++i) {
    const auto idx = static_cast<std::size_t>(i);
    scores[idx] = predict(trained.params, all_weeks[idx]->scores);
  }

  std::vector<double> train_scores;
  std::vector<int> train_labels;
  for (std::size_t i = 0; i < all_weeks.size(); ++i) {
    if (!in_test_split(all_weeks[i]->week.user_id, split_seed, config.predict.test_frac)) {
      train_scores.push_back(scores[i]);
      train_labels.push_back(all_weeks[i]->week.label ? 1 : 0);
    }
  }
  const auto cls = classify(train_scores, train_labels,
                            config.predict.tune_threshold ? ThresholdPolicy::TuneOnValidation
                                                          : ThresholdPolicy::Fixed,
                            config.predict.fixed_threshold);

  std::vector<PredictionRow> rows(all_weeks.size());
  for (std::size_t i = 0; i < all_weeks.size(); ++i) {
    rows[i].week = all_weeks[i]->week;
    rows[i].score = scores[i];
    rows[i].prediction = scores[i] >= cls.threshold ? 1 : 0;
  }

  json params = predictor_params_to_json(trained.params);
  params["config"] = effective_config_json(config);
  write_json_artifact(config.predictor_params_path(), params);
  write_predictions_csv(config.predictions_path(), rows,
                        json{{"config", effective_config_json(config)},
                             {"threshold", cls.threshold},
                             {"test_frac", config.predict.test_frac},
                             {"input", config.predict.input}});
  return json{{"stage", "train-predict"},
              {"input", config.predict.input},
              {"train_users", train_users.size()},
              {"epochs", trained.epoch_loss.size()},
              {"final_epoch_loss", trained.epoch_loss.back()},
              {"threshold", cls.threshold},
              {"params_out", config.predictor_params_path()},
              {"predictions_out", config.predictions_path()}};
}

json run_evaluate(const PipelineConfig& config) {
  json meta;
  const auto rows = read_predictions_csv(config.predictions_path(), &meta);
  if (rows.empty()) throw InputError("predictions file is empty");
  const double threshold = meta.contains("threshold") ? meta["threshold"].get<double>() : 0.5;
  const double test_frac =
      meta.contains("test_frac") ? meta["test_frac"].get<double>() : config.predict.test_frac;

  const std::uint64_t split_seed = mix_seed(config.seed, kSplitStream);
  const std::string& split = config.predict.eval_split;
  std::vector<int> labels, predictions;
  std::vector<double> scores;
  for (const auto& r : rows) {
    const bool test = in_test_split(r.week.user_id, split_seed, test_frac);
    if (split == "test" && !test) continue;
    if (split == "train" && test) continue;
    labels.push_back(r.week.label ? 1 : 0);
    predictions.push_back(r.prediction);
    scores.push_back(r.score);
  }
  if (labels.empty()) throw InputError("evaluation split \"" + split + "\" is empty");

  const std::size_t n_pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  json metrics;
  metrics["f1"] = f1_score(labels, predictions);
  metrics["auc"] = auc(labels, scores);
  metrics["n_pos"] = n_pos;
  metrics["n_neg"] = labels.size() - n_pos;
  metrics["threshold"] = threshold;
  metrics["split"] = split;
  metrics["config"] = effective_config_json(config);
  write_json_artifact(config.metrics_path(), metrics);

  json summary = metrics;
  summary.erase("config");
  summary["stage"] = "evaluate";
  summary["out"] = config.metrics_path();
  return summary;
}

json run_characterize(const PipelineConfig& config, std::ostream* table_out) {
  const auto reps = load_reps_for(config, config.characterize.input);
  const auto scored = read_actions_csv(config.actions_path());
  std::vector<Action> actions;
  actions.reserve(scored.size());
  for (const auto& s : scored) actions.push_back(s.action);

  const auto tables =
      characterize_actions(reps, actions, config.characterize.top_k, config.threads);
  const json meta = {{"config", effective_config_json(config)}};
  write_characterization_csv(config.characterize_dropout_path(), tables.dropout, meta);
  write_characterization_csv(config.characterize_nondropout_path(), tables.nondropout, meta);

  if (config.characterize.print_table && table_out != nullptr) {
    const auto print_table = [&](const char* title, const std::vector<CharacterizationRow>& rows) {
      *table_out << title << "\n";
      for (const auto& r : rows)
        *table_out << "  " << action_to_string(r.action) << "  t=" << format_double(r.t_score)
                   << "  p=" << format_p_value(r.p_value) << "\n";
    };
    print_table("non-dropout group", tables.nondropout);
    print_table("dropout group", tables.dropout);
  }
  return json{{"stage", "characterize"},
              {"actions", actions.size()},
              {"top_k", config.characterize.top_k},
              {"dropout_out", config.characterize_dropout_path()},
              {"nondropout_out", config.characterize_nondropout_path()}};
}

json run_pipeline(const PipelineConfig& config, std::ostream* table_out) {
  json stages = json::array();
  if (config.synth.present) stages.push_back(run_synth(config));
  stages.push_back(run_preprocess(config));
  stages.push_back(run_mine(config));
  stages.push_back(run_represent(config));
  if (config.predict.input == "lfr") {
    stages.push_back(run_train_lfr(config));
    stages.push_back(run_encode(config));
  }
  stages.push_back(run_train_predict(config));
  const json eval = run_evaluate(config);
  stages.push_back(eval);
  stages.push_back(run_characterize(config, table_out));

  json summary{{"stage", "pipeline"},
               {"f1", eval["f1"]},
               {"auc", eval["auc"]},
               {"metrics_out", config.metrics_path()}};
  json names = json::array();
  for (const auto& s : stages) names.push_back(s["stage"]);
  summary["stages"] = std::move(names);
  return summary;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"MOOC dropout prediction from raw clickstreams: discriminative "
               "n-gram mining, representation learning and margin-ranking prediction"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand name

  std::string config_path;
  std::string out_dir;
  std::int64_t seed = -1;
  int threads = -1;
  app.add_option("--config", config_path, "pipeline config JSON");
  app.add_option("--out-dir,-o", out_dir, "artifact directory (default: out)");
  app.add_option("--seed", seed, "master seed override");
  app.add_option("--threads", threads, "worker threads (0 = all cores)");

  // per-stage overrides
  std::optional<int> users_opt;
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic raw event log");
  synth_cmd->add_option("--users", users_opt, "number of users");

  std::optional<std::string> course_start_opt, variant_opt, format_opt;
  std::optional<int> course_weeks_opt, pre_action_size_opt;
  auto* pre_cmd = app.add_subcommand("preprocess", "map, bucket, label and filter raw events");
  pre_cmd->add_option("--course-start", course_start_opt, "ISO date or epoch seconds");
  pre_cmd->add_option("--course-length-weeks", course_weeks_opt, "course length (default 12)");
  pre_cmd->add_option("--variant", variant_opt, "typeA or typeB");
  pre_cmd->add_option("--action-size", pre_action_size_opt, "minimum clicks per week");
  pre_cmd->add_option("--format", format_opt, "events format: jsonl or csv");

  std::optional<int> mine_action_size_opt, top_m_opt;
  std::optional<std::string> bound_opt;
  bool report_nodes = false;
  auto* mine_cmd = app.add_subcommand("mine", "branch-and-bound top-M action search");
  mine_cmd->add_option("--action-size", mine_action_size_opt, "n-gram size (default 4)");
  mine_cmd->add_option("--top-m", top_m_opt, "actions to keep (default 100)");
  mine_cmd->add_option("--bound", bound_opt, "admissible or paper");
  mine_cmd->add_flag("--report-node-counts", report_nodes, "include node counts in the summary");

  auto* repr_cmd = app.add_subcommand("represent", "score mined actions per week");

  std::optional<int> hidden_opt, window_opt, lfr_batch_opt, lfr_epochs_opt;
  std::optional<double> rep_pct_opt, lfr_lr_opt, momentum_opt, weight_decay_opt, early_stop_opt,
      val_frac_opt;
  auto* lfr_cmd = app.add_subcommand("train-lfr", "train the representation learner");
  lfr_cmd->add_option("--hidden", hidden_opt, "hidden size (default 20)");
  lfr_cmd->add_option("--window", window_opt, "context window (default 1)");
  lfr_cmd->add_option("--rep-pct", rep_pct_opt, "representative percentile (default 20)");
  lfr_cmd->add_option("--lr", lfr_lr_opt, "learning rate (default 0.01)");
  lfr_cmd->add_option("--momentum", momentum_opt, "momentum (default 0.9)");
  lfr_cmd->add_option("--weight-decay", weight_decay_opt, "weight decay (default 0.0001)");
  lfr_cmd->add_option("--batch", lfr_batch_opt, "users per batch (default 200)");
  lfr_cmd->add_option("--max-epochs", lfr_epochs_opt, "epoch cap (default 1000)");
  lfr_cmd->add_option("--early-stop", early_stop_opt, "validation plateau threshold (default 1e-6)");
  lfr_cmd->add_option("--val-frac", val_frac_opt, "validation user fraction (default 0.15)");

  auto* encode_cmd = app.add_subcommand("encode", "apply the trained learner to every week");

  std::optional<std::string> input_opt, threshold_opt;
  std::optional<double> margin_opt, pred_lr_opt, test_frac_opt;
  std::optional<int> pred_batch_opt, pred_epochs_opt;
  bool shuffle_labels_flag = false;
  auto* pred_cmd = app.add_subcommand("train-predict", "train the dropout predictor and score all weeks");
  pred_cmd->add_option("--input", input_opt, "bb or lfr (default bb)");
  pred_cmd->add_option("--margin", margin_opt, "ranking margin (default 0.5)");
  pred_cmd->add_option("--lr", pred_lr_opt, "learning rate (default 0.001)");
  pred_cmd->add_option("--batch", pred_batch_opt, "pairs per batch (default 10)");
  pred_cmd->add_option("--max-epochs", pred_epochs_opt, "epoch cap (default 500)");
  pred_cmd->add_option("--threshold", threshold_opt, "tune or fixed:<tau>");
  pred_cmd->add_option("--test-frac", test_frac_opt, "held-out user fraction (default 0.25)");
  pred_cmd->add_flag("--shuffle-labels", shuffle_labels_flag, "label permutation control");

  std::optional<std::string> split_opt;
  auto* eval_cmd = app.add_subcommand("evaluate", "F1/AUC over the chosen split");
  eval_cmd->add_option("--split", split_opt, "test, train or all (default test)");

  std::optional<int> top_k_opt;
  std::optional<std::string> char_input_opt;
  bool print_table = false;
  auto* char_cmd = app.add_subcommand("characterize", "per-action t-test tables");
  char_cmd->add_option("--top-k", top_k_opt, "rows per table (default 10)");
  char_cmd->add_option("--input", char_input_opt, "bb or lfr (default bb)");
  char_cmd->add_flag("--print-table", print_table, "print human-readable tables to stderr");

  auto* pipe_cmd = app.add_subcommand("pipeline", "run every stage in order");

  std::vector<const char*> argv;
  argv.push_back("bbdrop");
  for (const auto& a : args) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {  // --help
      out << app.help() << std::flush;
      return 0;
    }
    err << e.what() << "\n";
    out << json{{"error", e.what()}}.dump() << "\n";
    return 2;
  }

  try {
    PipelineConfig config =
        config_path.empty() ? PipelineConfig{} : load_pipeline_config(config_path);
    if (!out_dir.empty()) config.out_dir = out_dir;
    if (seed >= 0) config.seed = static_cast<std::uint64_t>(seed);
    if (threads >= 0) config.threads = threads;

    if (users_opt) config.synth.generator.n_users = *users_opt;
    if (course_start_opt) config.preprocess.course_start = *course_start_opt;
    if (course_weeks_opt) config.preprocess.course_length_weeks = *course_weeks_opt;
    if (pre_action_size_opt) config.preprocess.action_size = *pre_action_size_opt;
    if (variant_opt) {
      const auto v = variant_from_string(*variant_opt);
      if (!v || *v == DatasetVariant::Raw) throw InputError("--variant must be typeA or typeB");
      config.preprocess.variant = *v;
    }
    if (format_opt) {
      if (*format_opt == "jsonl") config.preprocess.format = EventFormat::Jsonl;
      else if (*format_opt == "csv") config.preprocess.format = EventFormat::Csv;
      else throw InputError("--format must be jsonl or csv");
    }
    if (mine_action_size_opt) config.mine.action_size = *mine_action_size_opt;
    if (top_m_opt) config.mine.top_m = *top_m_opt;
    if (bound_opt) {
      if (*bound_opt == "admissible") config.mine.bound = BoundStrategy::Admissible;
      else if (*bound_opt == "paper") config.mine.bound = BoundStrategy::PaperOptimistic;
      else throw InputError("--bound must be admissible or paper");
    }
    if (report_nodes) config.mine.report_node_counts = true;
    if (hidden_opt) config.lfr.hidden = *hidden_opt;
    if (window_opt) config.lfr.window = *window_opt;
    if (rep_pct_opt) config.lfr.rep_pct = *rep_pct_opt;
    if (lfr_lr_opt) config.lfr.learning_rate = *lfr_lr_opt;
    if (momentum_opt) config.lfr.momentum = *momentum_opt;
    if (weight_decay_opt) config.lfr.weight_decay = *weight_decay_opt;
    if (lfr_batch_opt) config.lfr.batch_users = *lfr_batch_opt;
    if (lfr_epochs_opt) config.lfr.max_epochs = *lfr_epochs_opt;
    if (early_stop_opt) config.lfr.early_stop = *early_stop_opt;
    if (val_frac_opt) config.lfr.val_frac = *val_frac_opt;
    if (input_opt) {
      if (*input_opt != "bb" && *input_opt != "lfr") throw InputError("--input must be bb or lfr");
      config.predict.input = *input_opt;
    }
    if (margin_opt) config.predict.hyper.margin = *margin_opt;
    if (pred_lr_opt) config.predict.hyper.learning_rate = *pred_lr_opt;
    if (pred_batch_opt) config.predict.hyper.batch_pairs = *pred_batch_opt;
    if (pred_epochs_opt) config.predict.hyper.max_epochs = *pred_epochs_opt;
    if (threshold_opt) parse_threshold(*threshold_opt, config.predict);
    if (test_frac_opt) config.predict.test_frac = *test_frac_opt;
    if (shuffle_labels_flag) config.predict.shuffle_labels = true;
    if (split_opt) {
      if (*split_opt != "test" && *split_opt != "train" && *split_opt != "all")
        throw InputError("--split must be test, train or all");
      config.predict.eval_split = *split_opt;
    }
    if (top_k_opt) config.characterize.top_k = *top_k_opt;
    if (char_input_opt) {
      if (*char_input_opt != "bb" && *char_input_opt != "lfr")
        throw InputError("--input must be bb or lfr");
      config.characterize.input = *char_input_opt;
    }
    if (print_table) config.characterize.print_table = true;

    json summary;
    if (synth_cmd->parsed()) summary = run_synth(config);
    else if (pre_cmd->parsed()) summary = run_preprocess(config);
    else if (mine_cmd->parsed()) summary = run_mine(config);
    else if (repr_cmd->parsed()) summary = run_represent(config);
    else if (lfr_cmd->parsed()) summary = run_train_lfr(config);
    else if (encode_cmd->parsed()) summary = run_encode(config);
    else if (pred_cmd->parsed()) summary = run_train_predict(config);
    else if (eval_cmd->parsed()) summary = run_evaluate(config);
    else if (char_cmd->parsed()) summary = run_characterize(config, &err);
    else if (pipe_cmd->parsed()) summary = run_pipeline(config, &err);
    else throw InputError("no subcommand given");

    out << summary.dump() << "\n";
    return 0;
  } catch (const InputError& e) {
    out << json{{"error", e.what()}}.dump() << "\n";
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    out << json{{"error", e.what()}}.dump() << "\n";
    err << "internal error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace bbdrop
