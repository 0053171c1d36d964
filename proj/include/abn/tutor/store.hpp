#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "abn/tutor/quiz.hpp"
#include "abn/tutor/session.hpp"

namespace abn::tutor {

inline constexpr int kRecordSchemaVersion = 1;

nlohmann::json mask_to_json(const BinaryMask& m);  // 2-D array of 0/1
BinaryMask mask_from_json(const nlohmann::json& j);

// Full records, rng state included. from_json throws VersionError on a
// schema mismatch and CorruptError on anything malformed.
nlohmann::json to_json(const TutorSession& s);
TutorSession session_from_json(const nlohmann::json& j);
nlohmann::json to_json(const QuizRecord& q);
QuizRecord quiz_from_json(const nlohmann::json& j);

// Writes to a temporary sibling and renames it into place.
void write_atomic(const std::filesystem::path& path, const std::string& text);

// One JSON file per record under <root>/sessions and <root>/quizzes.
class RecordStore {
 public:
  explicit RecordStore(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }

  void save(const TutorSession& s) const;
  void save(const QuizRecord& q) const;
  TutorSession load_session(const std::string& session_id) const;
  QuizRecord load_quiz(const std::string& quiz_id) const;
  std::vector<std::string> session_ids() const;
  std::vector<std::string> quiz_ids() const;

 private:
  std::filesystem::path session_path(const std::string& id) const;
  std::filesystem::path quiz_path(const std::string& id) const;
  std::filesystem::path root_;
};

}  // namespace abn::tutor
