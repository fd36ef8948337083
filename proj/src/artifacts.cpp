#include "bbdrop/artifacts.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "bbdrop/error.hpp"
#include "bbdrop/rng.hpp"

namespace bbdrop {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

double parse_double(std::string_view s, const std::string& where) {
  double v = 0.0;
  const char* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || p != end)
    throw InputError(where + ": bad number \"" + std::string(s) + "\"");
  return v;
}

long long parse_int(std::string_view s, const std::string& where) {
  long long v = 0;
  const char* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || p != end)
    throw InputError(where + ": bad integer \"" + std::string(s) + "\"");
  return v;
}

std::vector<std::string> split_csv(const std::string& line) {
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

// Reads a CSV artifact: skips "#" metadata lines, checks the header, hands
// each data row to the callback.
void for_each_csv_row(const fs::path& path, const std::string& expected_header,
                      const std::function<void(const std::vector<std::string>&, std::size_t)>& fn) {
  require_file(path);
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line[0] == '#') continue;
    if (!header_seen) {
      if (line != expected_header)
        throw InputError(path.string() + ": expected header \"" + expected_header + "\", got \"" +
                         line + "\"");
      header_seen = true;
      continue;
    }
    fn(split_csv(line), line_no);
  }
  if (!header_seen) throw InputError(path.string() + ": missing header");
}

std::string meta_comment(const json& meta) {
  return "# " + meta.dump() + "\n";
}

json read_meta_comment(const fs::path& path) {
  std::ifstream in(path);
  std::string line;
  if (std::getline(in, line) && line.size() > 2 && line[0] == '#') {
    try {
      return json::parse(line.substr(1));
    } catch (const json::parse_error&) {
    }
  }
  return json::object();
}

json block_to_json(const std::vector<double>& data, std::initializer_list<int> shape) {
  json j;
  j["shape"] = std::vector<int>(shape);
  j["data"] = data;
  return j;
}

std::vector<double> block_from_json(const json& j, std::size_t expected,
                                    const std::string& name) {
  if (!j.contains("data") || !j["data"].is_array())
    throw InputError("params block " + name + " missing data array");
  std::vector<double> out = j["data"].get<std::vector<double>>();
  if (out.size() != expected)
    throw InputError("params block " + name + " has " + std::to_string(out.size()) +
                     " values, expected " + std::to_string(expected));
  return out;
}

}  // namespace

void atomic_write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << content;
    if (!out) throw Error("short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  require_file(path);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void require_file(const fs::path& path) {
  if (!fs::exists(path)) throw InputError("missing input file: " + path.string());
}

void write_events_jsonl(const fs::path& path, const std::vector<ClickEvent>& events,
                        const json& meta) {
  std::string out;
  out.reserve(events.size() * 64);
  for (const auto& e : events) {
    json rec;
    rec["user_id"] = e.user_id;
    rec["timestamp"] = e.timestamp;
    rec["category"] = to_string(e.category);
    if (e.position_before) rec["position_before"] = *e.position_before;
    if (e.position_after) rec["position_after"] = *e.position_after;
    if (e.rate_before) rec["rate_before"] = *e.rate_before;
    if (e.rate_after) rec["rate_after"] = *e.rate_after;
    out += rec.dump();
    out.push_back('\n');
  }
  atomic_write_file(path, out);
  atomic_write_file(path.string() + ".meta.json", meta.dump(2) + "\n");
}

std::vector<ClickEvent> read_events_file(const fs::path& path, EventFormat format) {
  require_file(path);
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  return parse_events(in, format);
}

void write_truth_csv(const fs::path& path, const std::vector<UserTruth>& truth,
                     const json& meta) {
  std::string out = meta_comment(meta);
  out += "user_id,archetype,drop_week\n";
  for (const auto& t : truth)
    out += t.user_id + "," + t.archetype + "," + std::to_string(t.drop_week) + "\n";
  atomic_write_file(path, out);
}

std::vector<UserTruth> read_truth_csv(const fs::path& path) {
  std::vector<UserTruth> truth;
  for_each_csv_row(path, "user_id,archetype,drop_week",
                   [&](const std::vector<std::string>& f, std::size_t line_no) {
                     if (f.size() != 3)
                       throw InputError(path.string() + " line " + std::to_string(line_no) +
                                        ": expected 3 fields");
                     UserTruth t;
                     t.user_id = f[0];
                     t.archetype = f[1];
                     t.drop_week = static_cast<int>(parse_int(f[2], path.string()));
                     truth.push_back(std::move(t));
                   });
  return truth;
}

void write_dataset_jsonl(const fs::path& path, const Dataset& dataset, const json& meta) {
  std::string out;
  for (const auto& user : dataset.users) {
    for (const auto& week : user.weeks) {
      json rec;
      rec["user_id"] = week.user_id;
      rec["week_index"] = week.week_index;
      json clicks = json::array();
      for (ClickType c : week.clicks) clicks.push_back(to_string(c));
      rec["clicks"] = std::move(clicks);
      rec["label"] = week.dropout_label ? 1 : 0;
      out += rec.dump();
      out.push_back('\n');
    }
  }
  atomic_write_file(path, out);
  json sidecar = meta;
  sidecar["course_length_weeks"] = dataset.course_length_weeks;
  sidecar["variant"] = to_string(dataset.variant);
  atomic_write_file(path.string() + ".meta.json", sidecar.dump(2) + "\n");
}

Dataset read_dataset_jsonl(const fs::path& path) {
  require_file(path);
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());

  std::vector<WeekSequence> weeks;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw InputError(path.string() + " line " + std::to_string(line_no) + ": " + e.what());
    }
    WeekSequence ws;
    try {
      ws.user_id = rec.at("user_id").get<std::string>();
      ws.week_index = rec.at("week_index").get<int>();
      ws.dropout_label = rec.at("label").get<int>() != 0;
      for (const auto& c : rec.at("clicks")) {
        const auto type = click_type_from_string(c.get<std::string>());
        if (!type)
          throw InputError(path.string() + " line " + std::to_string(line_no) +
                           ": unknown click type \"" + c.get<std::string>() + "\"");
        ws.clicks.push_back(*type);
      }
    } catch (const json::exception& e) {
      throw InputError(path.string() + " line " + std::to_string(line_no) + ": " + e.what());
    }
    weeks.push_back(std::move(ws));
  }

  std::stable_sort(weeks.begin(), weeks.end(), [](const WeekSequence& a, const WeekSequence& b) {
    if (a.user_id != b.user_id) return a.user_id < b.user_id;
    return a.week_index < b.week_index;
  });

  Dataset ds;
  const fs::path sidecar = path.string() + ".meta.json";
  if (fs::exists(sidecar)) {
    const json meta = json::parse(read_file(sidecar));
    if (meta.contains("course_length_weeks")) ds.course_length_weeks = meta["course_length_weeks"].get<int>();
    if (meta.contains("variant")) {
      const auto v = variant_from_string(meta["variant"].get<std::string>());
      if (v) ds.variant = *v;
    }
  }
  for (auto& week : weeks) {
    if (ds.users.empty() || ds.users.back().user_id != week.user_id)
      ds.users.push_back(UserWeeks{week.user_id, {}});
    ds.users.back().weeks.push_back(std::move(week));
  }
  return ds;
}

void write_actions_csv(const fs::path& path, const std::vector<ScoredAction>& actions,
                       const json& meta) {
  std::string out = meta_comment(meta);
  out += "action,spread\n";
  for (const auto& a : actions)
    out += action_to_string(a.action) + "," + format_double(a.spread) + "\n";
  atomic_write_file(path, out);
}

std::vector<ScoredAction> read_actions_csv(const fs::path& path) {
  std::vector<ScoredAction> actions;
  for_each_csv_row(path, "action,spread",
                   [&](const std::vector<std::string>& f, std::size_t line_no) {
                     if (f.size() != 2)
                       throw InputError(path.string() + " line " + std::to_string(line_no) +
                                        ": expected 2 fields");
                     ScoredAction a;
                     a.action = action_from_string(f[0]);
                     a.spread = parse_double(f[1], path.string());
                     actions.push_back(std::move(a));
                   });
  return actions;
}

namespace {

std::string representation_header(std::size_t m) {
  std::string h = "user_id,week_index,label";
  for (std::size_t i = 1; i <= m; ++i) h += ",a" + std::to_string(i);
  return h;
}

}  // namespace

void write_representations_csv(const fs::path& path,
                               const std::vector<ActionRepresentation>& reps, const json& meta) {
  if (reps.empty()) throw InputError("refusing to write empty representations file");
  std::string out = meta_comment(meta);
  out += representation_header(reps.front().scores.size()) + "\n";
  for (const auto& r : reps) {
    out += r.week.user_id + "," + std::to_string(r.week.week_index) + "," +
           (r.week.label ? "1" : "0");
    for (double s : r.scores) {
      out.push_back(',');
      out += format_double(s);
    }
    out.push_back('\n');
  }
  atomic_write_file(path, out);
}

std::vector<ActionRepresentation> read_representations_csv(const fs::path& path) {
  require_file(path);
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());

  std::vector<ActionRepresentation> reps;
  std::string line;
  std::size_t line_no = 0;
  std::size_t m = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto fields = split_csv(line);
    if (!header_seen) {
      if (fields.size() < 4 || fields[0] != "user_id" || fields[1] != "week_index" ||
          fields[2] != "label")
        throw InputError(path.string() + ": bad representations header");
      m = fields.size() - 3;
      header_seen = true;
      continue;
    }
    if (fields.size() != m + 3)
      throw InputError(path.string() + " line " + std::to_string(line_no) + ": expected " +
                       std::to_string(m + 3) + " fields");
    ActionRepresentation r;
    r.week.user_id = fields[0];
    r.week.week_index = static_cast<int>(parse_int(fields[1], path.string()));
    r.week.label = parse_int(fields[2], path.string()) != 0;
    r.scores.reserve(m);
    for (std::size_t i = 0; i < m; ++i) r.scores.push_back(parse_double(fields[i + 3], path.string()));
    reps.push_back(std::move(r));
  }
  if (!header_seen) throw InputError(path.string() + ": missing header");
  return reps;
}

json lfr_params_to_json(const LfrParams& p) {
  json j;
  j["M"] = p.input_dim;
  j["m"] = p.hidden_dim;
  j["W_a"] = block_to_json(p.w_a, {p.hidden_dim, p.input_dim});
  j["b_a"] = block_to_json(p.b_a, {p.hidden_dim});
  j["W_o"] = block_to_json(p.w_o, {p.input_dim, p.hidden_dim});
  j["b_o"] = block_to_json(p.b_o, {p.input_dim});
  return j;
}

LfrParams lfr_params_from_json(const json& j) {
  LfrParams p;
  try {
    p.input_dim = j.at("M").get<int>();
    p.hidden_dim = j.at("m").get<int>();
  } catch (const json::exception& e) {
    throw InputError(std::string("bad lfr params: ") + e.what());
  }
  const auto M = static_cast<std::size_t>(p.input_dim);
  const auto m = static_cast<std::size_t>(p.hidden_dim);
  p.w_a = block_from_json(j.at("W_a"), m * M, "W_a");
  p.b_a = block_from_json(j.at("b_a"), m, "b_a");
  p.w_o = block_from_json(j.at("W_o"), M * m, "W_o");
  p.b_o = block_from_json(j.at("b_o"), M, "b_o");
  return p;
}

json predictor_params_to_json(const PredictorParams& p) {
  json layers = json::array();
  for (const auto& l : p.layers) {
    json lj;
    lj["W"] = block_to_json(l.w, {l.out, l.in});
    lj["b"] = block_to_json(l.b, {l.out});
    layers.push_back(std::move(lj));
  }
  json j;
  j["M"] = p.input_dim();
  j["layers"] = std::move(layers);
  return j;
}

PredictorParams predictor_params_from_json(const json& j) {
  PredictorParams p;
  if (!j.contains("layers") || !j["layers"].is_array())
    throw InputError("bad predictor params: missing layers");
  for (const auto& lj : j["layers"]) {
    PredictorLayer l;
    const auto shape = lj.at("W").at("shape").get<std::vector<int>>();
    if (shape.size() != 2) throw InputError("bad predictor params: W shape");
    l.out = shape[0];
    l.in = shape[1];
    l.w = block_from_json(lj.at("W"), static_cast<std::size_t>(l.out) * l.in, "W");
    l.b = block_from_json(lj.at("b"), static_cast<std::size_t>(l.out), "b");
    p.layers.push_back(std::move(l));
  }
  if (p.layers.empty()) throw InputError("bad predictor params: no layers");
  return p;
}

void write_json_artifact(const fs::path& path, const json& j) {
  atomic_write_file(path, j.dump(2) + "\n");
}

json read_json_artifact(const fs::path& path) {
  const std::string text = read_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

void write_predictions_csv(const fs::path& path, const std::vector<PredictionRow>& rows,
                           const json& meta) {
  std::string out = meta_comment(meta);
  out += "user_id,week_index,label,score,prediction\n";
  for (const auto& r : rows) {
    out += r.week.user_id + "," + std::to_string(r.week.week_index) + "," +
           (r.week.label ? "1" : "0") + "," + format_double(r.score) + "," +
           std::to_string(r.prediction) + "\n";
  }
  atomic_write_file(path, out);
}

std::vector<PredictionRow> read_predictions_csv(const fs::path& path, json* meta_out) {
  if (meta_out != nullptr) {
    require_file(path);
    *meta_out = read_meta_comment(path);
  }
  std::vector<PredictionRow> rows;
  for_each_csv_row(path, "user_id,week_index,label,score,prediction",
                   [&](const std::vector<std::string>& f, std::size_t line_no) {
                     if (f.size() != 5)
                       throw InputError(path.string() + " line " + std::to_string(line_no) +
                                        ": expected 5 fields");
                     PredictionRow r;
                     r.week.user_id = f[0];
                     r.week.week_index = static_cast<int>(parse_int(f[1], path.string()));
                     r.week.label = parse_int(f[2], path.string()) != 0;
                     r.score = parse_double(f[3], path.string());
                     r.prediction = static_cast<int>(parse_int(f[4], path.string()));
                     rows.push_back(std::move(r));
                   });
  return rows;
}

void write_characterization_csv(const fs::path& path,
                                const std::vector<CharacterizationRow>& rows, const json& meta) {
  std::string out = meta_comment(meta);
  out += "action,t_score,p_value\n";
  for (const auto& r : rows)
    out += action_to_string(r.action) + "," + format_double(r.t_score) + "," +
           format_double(r.p_value) + "\n";
  atomic_write_file(path, out);
}

void write_lfr_log_csv(const fs::path& path, const std::vector<LfrEpochLog>& log,
                       const json& meta) {
  std::string out = meta_comment(meta);
  out += "epoch,train_loss,val_loss\n";
  for (const auto& e : log)
    out += std::to_string(e.epoch) + "," + format_double(e.train_loss) + "," +
           format_double(e.val_loss) + "\n";
  atomic_write_file(path, out);
}

bool in_test_split(const std::string& user_id, std::uint64_t split_seed, double test_frac) {
  // FNV-1a over the id bytes, mixed with the split seed
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : user_id) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  h = mix_seed(h, split_seed);
  const double u = static_cast<double>(h >> 11) * 0x1.0p-53;
  return u < test_frac;
}

std::int64_t parse_course_start(const std::string& text) {
  if (text.empty()) throw InputError("empty course_start");
  // plain integer epoch
  if (text.find_first_not_of("0123456789-") == std::string::npos &&
      text.find('-', 1) == std::string::npos) {
    return parse_int(text, "course_start");
  }
  int y = 0, mo = 0, d = 0, hh = 0, mi = 0, ss = 0;
  const int matched = std::sscanf(text.c_str(), "%d-%d-%dT%d:%d:%d", &y, &mo, &d, &hh, &mi, &ss);
  if (matched < 3) throw InputError("bad course_start \"" + text + "\" (expected ISO-8601 date)");
  if (mo < 1 || mo > 12 || d < 1 || d > 31 || hh < 0 || hh > 23 || mi < 0 || mi > 59 || ss < 0 ||
      ss > 60)
    throw InputError("bad course_start \"" + text + "\"");
  // days-from-civil (proleptic Gregorian)
  const int adj_y = y - (mo <= 2 ? 1 : 0);
  const int era = (adj_y >= 0 ? adj_y : adj_y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(adj_y - era * 400);
  const unsigned doy = static_cast<unsigned>((153 * (mo + (mo > 2 ? -3 : 9)) + 2) / 5 + d - 1);
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  const std::int64_t days = static_cast<std::int64_t>(era) * 146097 + static_cast<std::int64_t>(doe) - 719468;
  return days * 86400 + hh * 3600 + mi * 60 + ss;
}

}  // namespace bbdrop
