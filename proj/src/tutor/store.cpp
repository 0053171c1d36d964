#include "abn/tutor/store.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <random>
#include <sstream>

namespace abn::tutor {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

void check_version(const json& j, const char* what) {
  if (!j.is_object() || !j.contains("schema_version")) {
    throw CorruptError(std::string(what) + " record: missing schema_version");
  }
  const auto& v = j.at("schema_version");
  if (!v.is_number_integer() || v.get<int>() != kRecordSchemaVersion) {
    throw VersionError(std::string(what) + " record: schema_version " + v.dump() +
                       " is not supported (expected " +
                       std::to_string(kRecordSchemaVersion) + ")");
  }
}

// Wraps json access errors in CorruptError.
template <typename F>
auto parse_record(const char* what, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw CorruptError(std::string(what) + " record is malformed: " + e.what());
  } catch (const ShapeError& e) {
    throw CorruptError(std::string(what) + " record is malformed: " + e.what());
  } catch (const ValueError& e) {
    throw CorruptError(std::string(what) + " record is malformed: " + e.what());
  }
}

json result_to_json(const guided::GuidedResult& r) {
  return {{"probabilities", r.probabilities},
          {"predicted_class", r.predicted_class},
          {"map_used", mask_to_json(r.map_used)}};
}

guided::GuidedResult result_from_json(const json& j) {
  guided::GuidedResult r;
  r.probabilities = j.at("probabilities").get<std::vector<double>>();
  r.predicted_class = j.at("predicted_class").get<std::size_t>();
  r.map_used = mask_from_json(j.at("map_used"));
  return r;
}

json edits_to_json(const std::vector<EditRecord>& edits) {
  json a = json::array();
  for (const auto& e : edits) {
    a.push_back({{"mask", mask_to_json(e.mask)},
                 {"result", result_to_json(e.result)},
                 {"timestamp_ms", e.timestamp_ms}});
  }
  return a;
}

std::vector<EditRecord> edits_from_json(const json& a) {
  std::vector<EditRecord> out;
  for (const auto& e : a) {
    out.push_back({mask_from_json(e.at("mask")), result_from_json(e.at("result")),
                   e.at("timestamp_ms").get<std::int64_t>()});
  }
  return out;
}

std::string rng_state(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

std::mt19937_64 rng_from_state(const std::string& text) {
  std::mt19937_64 rng;
  std::istringstream is(text);
  is >> rng;
  if (!is) throw CorruptError("session record: unreadable rng state");
  return rng;
}

void check_id(const std::string& id) {
  const bool ok = !id.empty() && id.size() <= 128 &&
                  std::all_of(id.begin(), id.end(), [](char c) {
                    return std::isalnum(static_cast<unsigned char>(c)) || c == '-' ||
                           c == '_';
                  });
  if (!ok) throw ValueError("record id '" + id + "' must match [A-Za-z0-9_-]{1,128}");
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("no record at " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

json parse_text(const std::string& text, const fs::path& path) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw CorruptError(path.string() + ": not valid JSON: " + e.what());
  }
}

std::vector<std::string> list_ids(const fs::path& dir) {
  std::vector<std::string> ids;
  if (!fs::exists(dir)) return ids;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() == ".json") ids.push_back(entry.path().stem().string());
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

}  // namespace

json mask_to_json(const BinaryMask& m) {
  json rows = json::array();
  for (std::size_t r = 0; r < m.height; ++r) {
    json row = json::array();
    for (std::size_t c = 0; c < m.width; ++c) row.push_back(static_cast<int>(m.at(r, c)));
    rows.push_back(std::move(row));
  }
  return rows;
}

BinaryMask mask_from_json(const json& j) {
  if (!j.is_array() || j.empty()) throw ValueError("mask must be a non-empty 2-D array");
  const std::size_t h = j.size();
  const std::size_t w = j.front().is_array() ? j.front().size() : 0;
  if (w == 0) throw ValueError("mask must be a non-empty 2-D array");
  std::vector<std::uint8_t> bits;
  bits.reserve(h * w);
  for (std::size_t r = 0; r < h; ++r) {
    const auto& row = j[r];
    if (!row.is_array() || row.size() != w) {
      throw ShapeError("mask row " + std::to_string(r) + " has " +
                       std::to_string(row.is_array() ? row.size() : 0) +
                       " entries, expected " + std::to_string(w));
    }
    for (const auto& v : row) {
      if (!v.is_number_integer() || (v.get<int>() != 0 && v.get<int>() != 1)) {
        throw ValueError("mask values must be 0 or 1, got " + v.dump());
      }
      bits.push_back(static_cast<std::uint8_t>(v.get<int>()));
    }
  }
  return BinaryMask(h, w, std::move(bits));
}

json to_json(const TutorSession& s) {
  json outcomes = json::array();
  for (const auto& o : s.outcomes) {
    outcomes.push_back({{"sample_id", o.sample_id},
                        {"judged_label", o.judged_label},
                        {"correct", o.correct},
                        {"edits", edits_to_json(o.edits)},
                        {"served_ms", o.served_ms},
                        {"finished_ms", o.finished_ms}});
  }
  json transitions = json::array();
  for (const auto& t : s.transitions) {
    transitions.push_back({{"from", t.from ? json(state_name(*t.from)) : json(nullptr)},
                           {"to", state_name(t.to)},
                           {"action", t.action}});
  }
  return {{"schema_version", kRecordSchemaVersion},
          {"kind", "session"},
          {"session_id", s.session_id},
          {"learner_id", s.learner_id},
          {"seed", s.seed},
          {"rng", rng_state(s.rng)},
          {"state", state_name(s.state)},
          {"current_sample_id", s.current_sample_id},
          {"judged_label", s.judged_label ? json(*s.judged_label) : json(nullptr)},
          {"judgment_correct", s.judgment_correct},
          {"served_ms", s.served_ms},
          {"edits", edits_to_json(s.edits)},
          {"outcomes", std::move(outcomes)},
          {"served", s.served},
          {"transitions", std::move(transitions)}};
}

TutorSession session_from_json(const json& j) {
  check_version(j, "session");
  auto s = parse_record("session", [&] {
    TutorSession s;
    s.session_id = j.at("session_id").get<std::string>();
    s.learner_id = j.at("learner_id").get<std::string>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.rng = rng_from_state(j.at("rng").get<std::string>());
    s.state = parse_state(j.at("state").get<std::string>());
    s.current_sample_id = j.at("current_sample_id").get<std::string>();
    if (!j.at("judged_label").is_null()) s.judged_label = j.at("judged_label").get<int>();
    s.judgment_correct = j.at("judgment_correct").get<bool>();
    s.served_ms = j.at("served_ms").get<std::int64_t>();
    s.edits = edits_from_json(j.at("edits"));
    for (const auto& o : j.at("outcomes")) {
      s.outcomes.push_back({o.at("sample_id").get<std::string>(),
                            o.at("judged_label").get<int>(), o.at("correct").get<bool>(),
                            edits_from_json(o.at("edits")),
                            o.at("served_ms").get<std::int64_t>(),
                            o.at("finished_ms").get<std::int64_t>()});
    }
    s.served = j.at("served").get<std::vector<std::string>>();
    for (const auto& t : j.at("transitions")) {
      Transition tr;
      if (!t.at("from").is_null()) tr.from = parse_state(t.at("from").get<std::string>());
      tr.to = parse_state(t.at("to").get<std::string>());
      tr.action = t.at("action").get<std::string>();
      s.transitions.push_back(std::move(tr));
    }
    return s;
  });
  // Structural checks: a record that passes them can be resumed safely.
  if (s.transitions.empty() || s.transitions.back().to != s.state) {
    throw CorruptError("session record " + s.session_id +
                       ": state does not match its transition log");
  }
  for (std::size_t i = 0; i < s.transitions.size(); ++i) {
    const auto& t = s.transitions[i];
    const std::optional<State> prev =
        i == 0 ? std::nullopt : std::optional<State>(s.transitions[i - 1].to);
    if (t.from != prev || !is_legal_transition(t.from, t.to)) {
      throw CorruptError("session record " + s.session_id + ": illegal transition at " +
                         std::to_string(i));
    }
  }
  auto sorted = s.served;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw CorruptError("session record " + s.session_id + ": a sample was served twice");
  }
  return s;
}

json to_json(const QuizRecord& q) {
  return {{"schema_version", kRecordSchemaVersion},
          {"kind", "quiz"},
          {"quiz_id", q.quiz_id},
          {"learner_id", q.learner_id},
          {"phase", phase_name(q.phase)},
          {"seed", q.seed},
          {"sample_ids", q.sample_ids},
          {"answers", q.answers},
          {"answered_ms", q.answered_ms},
          {"correct", q.correct},
          {"started_ms", q.started_ms}};
}

QuizRecord quiz_from_json(const json& j) {
  check_version(j, "quiz");
  auto q = parse_record("quiz", [&] {
    QuizRecord q;
    q.quiz_id = j.at("quiz_id").get<std::string>();
    q.learner_id = j.at("learner_id").get<std::string>();
    q.phase = parse_phase(j.at("phase").get<std::string>());
    q.seed = j.at("seed").get<std::uint64_t>();
    q.sample_ids = j.at("sample_ids").get<std::vector<std::string>>();
    q.answers = j.at("answers").get<std::vector<int>>();
    q.answered_ms = j.at("answered_ms").get<std::vector<std::int64_t>>();
    q.correct = j.at("correct").get<std::size_t>();
    q.started_ms = j.at("started_ms").get<std::int64_t>();
    return q;
  });
  if (q.answers.size() > q.sample_ids.size() || q.answered_ms.size() != q.answers.size() ||
      q.correct > q.answers.size()) {
    throw CorruptError("quiz record " + q.quiz_id + ": inconsistent answer counts");
  }
  return q;
}

void write_atomic(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << text;
    out.flush();
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp.string() + " to " + path.string() + ": " +
                        ec.message());
}

RecordStore::RecordStore(fs::path root) : root_(std::move(root)) {
  fs::create_directories(root_ / "sessions");
  fs::create_directories(root_ / "quizzes");
}

fs::path RecordStore::session_path(const std::string& id) const {
  check_id(id);
  return root_ / "sessions" / (id + ".json");
}

fs::path RecordStore::quiz_path(const std::string& id) const {
  check_id(id);
  return root_ / "quizzes" / (id + ".json");
}

void RecordStore::save(const TutorSession& s) const {
  write_atomic(session_path(s.session_id), to_json(s).dump());
}

void RecordStore::save(const QuizRecord& q) const {
  write_atomic(quiz_path(q.quiz_id), to_json(q).dump());
}

TutorSession RecordStore::load_session(const std::string& id) const {
  const auto path = session_path(id);
  return session_from_json(parse_text(read_text(path), path));
}

QuizRecord RecordStore::load_quiz(const std::string& id) const {
  const auto path = quiz_path(id);
  return quiz_from_json(parse_text(read_text(path), path));
}

std::vector<std::string> RecordStore::session_ids() const {
  return list_ids(root_ / "sessions");
}

std::vector<std::string> RecordStore::quiz_ids() const { return list_ids(root_ / "quizzes"); }

}  // namespace abn::tutor
